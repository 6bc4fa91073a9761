//! Temporal properties of script models.
//!
//! `b1 ≺ b2` holds for a model when some `b2` transition can be taken after a
//! `b1` transition, with any number of blocks (including none) in between.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use fixedbitset::FixedBitSet;
use rayon::prelude::*;
use serde::Serialize;

use crate::ingest::ScriptSource;
use crate::model::{BlockLabel, Loc, ScriptModel};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct TemporalProperty {
    pub first: BlockLabel,
    pub second: BlockLabel,
}

impl TemporalProperty {
    pub fn new(first: BlockLabel, second: BlockLabel) -> Self {
        TemporalProperty { first, second }
    }

    pub fn mentions(&self, label: &BlockLabel) -> bool {
        &self.first == label || &self.second == label
    }

    /// Machine-readable form, `opcode ≺ opcode`.
    pub fn key(&self) -> String {
        format!("{} ≺ {}", self.first.key(), self.second.key())
    }
}

impl fmt::Display for TemporalProperty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ≺ {}", self.first, self.second)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PropertySet {
    pub source: ScriptSource,
    pub properties: BTreeSet<TemporalProperty>,
}

impl PropertySet {
    pub fn new(source: ScriptSource, properties: impl IntoIterator<Item = TemporalProperty>) -> Self {
        PropertySet { source, properties: properties.into_iter().collect() }
    }

    pub fn len(&self) -> usize {
        self.properties.len()
    }

    pub fn is_empty(&self) -> bool {
        self.properties.is_empty()
    }

    pub fn contains(&self, p: &TemporalProperty) -> bool {
        self.properties.contains(p)
    }

    /// One `b1 ≺ b2` line per property.
    pub fn to_text(&self) -> String {
        self.properties.iter().map(|p| format!("{p}\n")).collect()
    }
}

/// Reflexive-transitive reachability between the locations of a model.
#[derive(Debug, Clone)]
pub struct ReachabilityRelation {
    index: BTreeMap<Loc, usize>,
    locs: Vec<Loc>,
    rows: Vec<FixedBitSet>,
}

impl ReachabilityRelation {
    pub fn reaches(&self, from: Loc, to: Loc) -> bool {
        match (self.index.get(&from), self.index.get(&to)) {
            (Some(&a), Some(&b)) => self.rows[a].contains(b),
            _ => false,
        }
    }

    pub fn reachable_from(&self, from: Loc) -> impl Iterator<Item = Loc> + '_ {
        let row = self.index.get(&from).map(|&i| &self.rows[i]);
        row.into_iter().flat_map(|r| r.ones()).map(|i| self.locs[i])
    }

    /// All pairs `(l, l')` with `l'` reachable from `l`.
    pub fn pairs(&self) -> BTreeSet<(Loc, Loc)> {
        self.locs.iter().flat_map(|&a| self.reachable_from(a).map(move |b| (a, b))).collect()
    }
}

/// Computes which locations reach which, ignoring labels.
pub fn reachability(model: &ScriptModel) -> ReachabilityRelation {
    let locs: Vec<Loc> = model.locations().iter().copied().collect();
    let index: BTreeMap<Loc, usize> = locs.iter().enumerate().map(|(i, &l)| (l, i)).collect();
    let n = locs.len();
    let mut succ = vec![Vec::new(); n];
    for t in model.transitions() {
        if let (Some(&a), Some(&b)) = (index.get(&t.from), index.get(&t.to)) {
            succ[a].push(b);
        }
    }
    let rows = (0..n)
        .map(|start| {
            let mut seen = FixedBitSet::with_capacity(n);
            seen.insert(start);
            let mut stack = vec![start];
            while let Some(x) = stack.pop() {
                for &y in &succ[x] {
                    if !seen.put(y) {
                        stack.push(y);
                    }
                }
            }
            seen
        })
        .collect();
    ReachabilityRelation { index, locs, rows }
}

/// The temporal properties of an ε-free model.
pub fn props(model: &ScriptModel) -> PropertySet {
    let reach = reachability(model);
    let mut out_labels: HashMap<Loc, BTreeSet<&BlockLabel>> = HashMap::new();
    for (from, label, _) in model.labeled() {
        out_labels.entry(from).or_default().insert(label);
    }
    let mut properties = BTreeSet::new();
    for (_, first, target) in model.labeled() {
        for loc in reach.reachable_from(target) {
            for &second in out_labels.get(&loc).into_iter().flatten() {
                properties.insert(TemporalProperty::new(first.clone(), second.clone()));
            }
        }
    }
    PropertySet { source: model.source().clone(), properties }
}

/// Property sets of many models, in input order.
pub fn props_all(models: &[ScriptModel]) -> Vec<PropertySet> {
    models.par_iter().map(props).collect()
}

/// DOT rendering of the property relation: blocks as nodes, `≺` as edges.
pub fn property_digraph_dot(set: &PropertySet) -> String {
    crate::dot::property_graph(&set.source.to_string(), set.properties.iter().map(|p| (p, false)))
}
