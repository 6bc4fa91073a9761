//! Violations of mined patterns and their ranking as anomalies.

use std::cmp::Reverse;
use std::collections::HashMap;

use rayon::prelude::*;

use crate::miner::{mine_closed_patterns, MiningConfig, Pattern, PropertyIndex};
use crate::props::{PropertySet, TemporalProperty};
use crate::ratio::Rational;

/// A script that lacks part of a pattern.
///
/// `script` and `pattern` index into the property-set and pattern lists the
/// violation was computed from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub script: usize,
    pub pattern: usize,
    /// Support of the violated pattern.
    pub support: usize,
    /// Pattern properties missing from the script.
    pub deviation: Vec<TemporalProperty>,
    /// Pattern properties the script has.
    pub satisfied: Vec<TemporalProperty>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Anomaly {
    pub violation: Violation,
    pub confidence: Rational,
    /// Scripts deviating from the same pattern in exactly the same way,
    /// the violating script included.
    pub same_deviation_count: usize,
    /// 1-based position in the ranking.
    pub rank: usize,
}

#[derive(Debug, Clone)]
pub struct Detection {
    pub patterns: Vec<Pattern>,
    pub violations: Vec<Violation>,
    pub anomalies: Vec<Anomaly>,
}

/// Finds every (pattern, script) pair where the script misses between 1 and
/// `max_deviation_level` properties of a pattern of at least
/// `min_pattern_size` properties, and still has at least one of them.
pub fn find_violations(patterns: &[Pattern], sets: &[PropertySet], config: &MiningConfig) -> Vec<Violation> {
    let index = PropertyIndex::build(sets);
    let encoded: Vec<_> = sets.par_iter().map(|s| index.encode(s)).collect();
    patterns
        .par_iter()
        .enumerate()
        .filter(|(_, p)| p.len() >= config.min_pattern_size)
        .map(|(pi, pattern)| {
            let ids: Vec<Option<u32>> = pattern.properties.iter().map(|p| index.id(p)).collect();
            let mut out = Vec::new();
            for (si, bits) in encoded.iter().enumerate() {
                let present: Vec<bool> = ids.iter().map(|id| id.is_some_and(|i| bits.contains(i as usize))).collect();
                let missing = present.iter().filter(|&&b| !b).count();
                if missing == 0 || missing > config.max_deviation_level || missing == pattern.len() {
                    continue;
                }
                let (mut deviation, mut satisfied) = (Vec::with_capacity(missing), Vec::new());
                for (prop, has) in pattern.properties.iter().zip(present) {
                    if has { satisfied.push(prop.clone()) } else { deviation.push(prop.clone()) }
                }
                out.push(Violation { script: si, pattern: pi, support: pattern.support, deviation, satisfied });
            }
            out
        })
        .flatten()
        .collect()
}

/// Confidence `s / (s + v)` of a violation, where `v` counts the violations of
/// the same pattern with an identical deviation. Returns the ratio and `v`.
pub fn confidence(violation: &Violation, all: &[Violation]) -> (Rational, usize) {
    let v = all
        .iter()
        .filter(|w| w.pattern == violation.pattern && w.deviation == violation.deviation)
        .count();
    let s = violation.support as u64;
    (Rational::new(s, s + v as u64), v)
}

fn deviation_classes(violations: &[Violation]) -> HashMap<(usize, &[TemporalProperty]), usize> {
    let mut classes = HashMap::new();
    for v in violations {
        *classes.entry((v.pattern, v.deviation.as_slice())).or_insert(0) += 1;
    }
    classes
}

fn score(violations: &[Violation]) -> Vec<(Rational, usize)> {
    let classes = deviation_classes(violations);
    violations
        .iter()
        .map(|v| {
            let same = classes[&(v.pattern, v.deviation.as_slice())];
            let s = v.support as u64;
            (Rational::new(s, s + same as u64), same)
        })
        .collect()
}

/// Sorts anomalies by confidence, pattern support, deviation size, script
/// provenance and pattern position, then assigns ranks from 1.
fn rank(mut anomalies: Vec<Anomaly>, sets: &[PropertySet]) -> Vec<Anomaly> {
    anomalies.sort_by(|a, b| {
        let key = |x: &Anomaly| {
            (
                Reverse(x.confidence),
                Reverse(x.violation.support),
                x.violation.deviation.len(),
                &sets[x.violation.script].source,
                x.violation.pattern,
            )
        };
        key(a).cmp(&key(b))
    });
    for (i, a) in anomalies.iter_mut().enumerate() {
        a.rank = i + 1;
    }
    anomalies
}

/// Mines, finds violations, scores them and keeps the ranked anomalies.
pub fn detect_anomalies(sets: &[PropertySet], config: &MiningConfig) -> Detection {
    let patterns = mine_closed_patterns(sets, config.min_support);
    let violations = find_violations(&patterns, sets, config);
    let scores = score(&violations);
    let anomalies = violations
        .iter()
        .zip(scores)
        .filter(|(_, (c, _))| *c >= config.min_confidence)
        .map(|(v, (confidence, same))| Anomaly {
            violation: v.clone(),
            confidence,
            same_deviation_count: same,
            rank: 0,
        })
        .collect();
    let anomalies = rank(anomalies, sets);
    Detection { patterns, violations, anomalies }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SweepCell {
    pub min_support: usize,
    pub min_confidence: Rational,
    pub anomalies: usize,
}

/// Anomaly counts for every (support, confidence) combination, support-major.
///
/// Pattern supports and deviation classes do not depend on the thresholds,
/// so patterns are mined once at the smallest support and filtered per cell.
pub fn parameter_sweep(
    sets: &[PropertySet],
    supports: &[usize],
    confidences: &[Rational],
    fixed: &MiningConfig,
) -> Vec<SweepCell> {
    let Some(&lowest) = supports.iter().min() else {
        return Vec::new();
    };
    let patterns = mine_closed_patterns(sets, lowest);
    let violations = find_violations(&patterns, sets, fixed);
    let scores = score(&violations);
    let mut cells = Vec::with_capacity(supports.len() * confidences.len());
    for &k in supports {
        for &c in confidences {
            let anomalies = violations
                .iter()
                .zip(&scores)
                .filter(|(v, (conf, _))| v.support >= k.max(1) && *conf >= c)
                .count();
            cells.push(SweepCell { min_support: k, min_confidence: c, anomalies });
        }
    }
    cells
}
