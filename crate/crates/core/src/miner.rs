//! Exact mining of closed frequent patterns.
//!
//! Each script's property set is a transaction. A pattern (itemset) is closed
//! when every strict superset is supported by fewer scripts. Closed patterns
//! are enumerated with prefix-preserving closure extension over transaction
//! bitsets: every closed set is produced exactly once, from its unique parent,
//! so no duplicate check or candidate store is needed.

use std::collections::HashMap;

use fixedbitset::FixedBitSet;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::props::{PropertySet, TemporalProperty};
use crate::ratio::{to_fixed, Rational};

/// Thresholds for pattern mining and violation reporting.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MiningConfig {
    pub min_support: usize,
    /// Smallest pattern that may be reported as violated.
    pub min_pattern_size: usize,
    /// Largest deviation (number of missing properties) still reported.
    pub max_deviation_level: usize,
    pub min_confidence: Rational,
}

impl Default for MiningConfig {
    fn default() -> Self {
        MiningConfig {
            min_support: 20,
            min_pattern_size: 2,
            max_deviation_level: 10_000,
            min_confidence: Rational::new(9, 10),
        }
    }
}

impl MiningConfig {
    /// Lower thresholds for small classes (a few dozen solutions).
    pub fn small_class() -> Self {
        MiningConfig { min_support: 10, min_confidence: Rational::new(7, 10), ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.min_support < 1 {
            return Err(Error::InvalidConfig("min_support must be at least 1".into()));
        }
        if self.min_pattern_size < 1 {
            return Err(Error::InvalidConfig("min_pattern_size must be at least 1".into()));
        }
        if *self.min_confidence.numer() == 0 || self.min_confidence > Rational::from_integer(1) {
            return Err(Error::InvalidConfig(format!(
                "min_confidence must lie in (0, 1], got {}",
                to_fixed(self.min_confidence, 4)
            )));
        }
        Ok(())
    }
}

/// Dense integer ids for properties, ordered like the properties themselves.
#[derive(Debug, Clone, Default)]
pub struct PropertyIndex {
    properties: Vec<TemporalProperty>,
    ids: HashMap<TemporalProperty, u32>,
}

impl PropertyIndex {
    pub fn build(sets: &[PropertySet]) -> Self {
        let mut properties: Vec<TemporalProperty> =
            sets.iter().flat_map(|s| s.properties.iter().cloned()).collect();
        properties.sort();
        properties.dedup();
        let ids = properties.iter().enumerate().map(|(i, p)| (p.clone(), i as u32)).collect();
        PropertyIndex { properties, ids }
    }

    pub fn id(&self, p: &TemporalProperty) -> Option<u32> {
        self.ids.get(p).copied()
    }

    pub fn property(&self, id: u32) -> &TemporalProperty {
        &self.properties[id as usize]
    }

    pub fn len(&self) -> usize {
        self.properties.len()
    }

    pub fn is_empty(&self) -> bool {
        self.properties.is_empty()
    }

    /// Bitset over property ids. Properties unknown to the index are ignored.
    pub fn encode(&self, set: &PropertySet) -> FixedBitSet {
        let mut bits = FixedBitSet::with_capacity(self.len());
        for p in &set.properties {
            if let Some(id) = self.id(p) {
                bits.insert(id as usize);
            }
        }
        bits
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Pattern {
    /// Sorted, duplicate-free.
    pub properties: Vec<TemporalProperty>,
    pub support: usize,
    /// Positions of the supporting scripts in the mined property-set list.
    pub supporters: Vec<usize>,
}

impl Pattern {
    pub fn len(&self) -> usize {
        self.properties.len()
    }

    pub fn is_empty(&self) -> bool {
        self.properties.is_empty()
    }

    /// One record line: support, size, supporters, then the properties.
    pub fn to_text(&self) -> String {
        let props: Vec<String> = self.properties.iter().map(ToString::to_string).collect();
        format!(
            "support={} size={} supporters={} | {}",
            self.support,
            self.len(),
            self.supporters.len(),
            props.join("; ")
        )
    }

    pub fn to_dot(&self, name: &str) -> String {
        crate::dot::property_graph(name, self.properties.iter().map(|p| (p, false)))
    }
}

/// Number of property sets containing every property of `pattern`.
pub fn support(pattern: &[TemporalProperty], sets: &[PropertySet]) -> usize {
    sets.iter().filter(|s| pattern.iter().all(|p| s.contains(p))).count()
}

struct Miner {
    /// Per property id, the transactions containing it.
    tidsets: Vec<FixedBitSet>,
    /// Frequent property ids, ascending.
    items: Vec<u32>,
    min_support: usize,
}

type Closed = (Vec<u32>, FixedBitSet);

impl Miner {
    fn closure_members(&self, tids: &FixedBitSet) -> Vec<u32> {
        self.items.iter().copied().filter(|&i| tids.is_subset(&self.tidsets[i as usize])).collect()
    }

    /// Tries the extension of closed set `closed` (with transactions `tids`)
    /// by item `e`, recursing into every closed set it produces.
    fn extend(&self, closed: &[u32], tids: &FixedBitSet, e: u32, out: &mut Vec<Closed>) {
        let mut ext = tids.clone();
        ext.intersect_with(&self.tidsets[e as usize]);
        if ext.count_ones(..) < self.min_support {
            return;
        }
        // The closure must not add any item smaller than `e` that the parent
        // lacks; otherwise this closed set belongs to another branch.
        for &i in self.items.iter().take_while(|&&i| i < e) {
            if closed.binary_search(&i).is_err() && ext.is_subset(&self.tidsets[i as usize]) {
                return;
            }
        }
        let child = self.closure_members(&ext);
        for &next in self.items.iter().filter(|&&i| i > e) {
            if child.binary_search(&next).is_err() {
                self.extend(&child, &ext, next, out);
            }
        }
        out.push((child, ext));
    }
}

/// All closed patterns with support at least `min_support` (clamped to 1),
/// ordered by support descending, size descending, then properties.
pub fn mine_closed_patterns(sets: &[PropertySet], min_support: usize) -> Vec<Pattern> {
    let min_support = min_support.max(1);
    let n = sets.len();
    if n < min_support {
        return Vec::new();
    }
    let index = PropertyIndex::build(sets);
    let mut tidsets = vec![FixedBitSet::with_capacity(n); index.len()];
    for (t, set) in sets.iter().enumerate() {
        for p in &set.properties {
            tidsets[index.id(p).expect("indexed") as usize].insert(t);
        }
    }
    let items = (0..index.len() as u32).filter(|&i| tidsets[i as usize].count_ones(..) >= min_support).collect();
    let miner = Miner { tidsets, items, min_support };

    let mut all = FixedBitSet::with_capacity(n);
    all.insert_range(..);
    let root = miner.closure_members(&all);

    let mut found: Vec<Closed> = miner
        .items
        .par_iter()
        .filter(|&&e| root.binary_search(&e).is_err())
        .map(|&e| {
            let mut out = Vec::new();
            miner.extend(&root, &all, e, &mut out);
            out
        })
        .flatten()
        .collect();
    if !root.is_empty() {
        found.push((root, all));
    }

    let mut patterns: Vec<(Vec<u32>, Pattern)> = found
        .into_iter()
        .map(|(ids, tids)| {
            let pattern = Pattern {
                properties: ids.iter().map(|&i| index.property(i).clone()).collect(),
                support: tids.count_ones(..),
                supporters: tids.ones().collect(),
            };
            (ids, pattern)
        })
        .collect();
    patterns.sort_by(|(a_ids, a), (b_ids, b)| {
        b.support.cmp(&a.support).then(b.len().cmp(&a.len())).then_with(|| a_ids.cmp(b_ids))
    });
    patterns.into_iter().map(|(_, p)| p).collect()
}
