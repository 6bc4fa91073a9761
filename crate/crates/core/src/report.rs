//! Pipeline runner and report rendering.
//!
//! Every serialized output is deterministic: records are emitted in ranked or
//! canonical order and JSON objects have a fixed key order.

use std::fmt::Write;

use serde::{Serialize, Serializer};

use crate::anomaly::{detect_anomalies, parameter_sweep, Anomaly, Detection, SweepCell};
use crate::ingest::{enumerate_scripts, Dataset, RawProject, ScriptSource, SkippedArchive};
use crate::miner::{MiningConfig, Pattern};
use crate::model::{extract_models, BlockLabel, ScriptModel};
use crate::props::{props_all, PropertySet, TemporalProperty};
use crate::ratio::{to_fixed, Rational};

pub const SCHEMA_VERSION: u32 = 1;

fn fixed4<S: Serializer>(r: &Rational, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&to_fixed(*r, 4))
}

/// Models, property sets and detection results for one dataset.
#[derive(Debug, Clone)]
pub struct Analysis {
    pub models: Vec<ScriptModel>,
    pub property_sets: Vec<PropertySet>,
    pub detection: Detection,
}

impl Analysis {
    pub fn run(projects: &[RawProject], config: &MiningConfig) -> Self {
        let models = extract_models(projects);
        let property_sets = props_all(&models);
        let detection = detect_anomalies(&property_sets, config);
        Analysis { models, property_sets, detection }
    }

    pub fn source_of(&self, anomaly: &Anomaly) -> &ScriptSource {
        &self.property_sets[anomaly.violation.script].source
    }

    pub fn pattern_of(&self, anomaly: &Anomaly) -> &Pattern {
        &self.detection.patterns[anomaly.violation.pattern]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DatasetStats {
    pub solutions: usize,
    pub models: usize,
    pub patterns: usize,
    pub violations: usize,
    pub anomalies: usize,
    #[serde(serialize_with = "fixed4")]
    pub mean_blocks: Rational,
    #[serde(serialize_with = "fixed4")]
    pub mean_scripts: Rational,
    #[serde(serialize_with = "fixed4")]
    pub mean_sprites: Rational,
}

impl DatasetStats {
    /// Means are taken over all projects, empty ones included.
    pub fn compute(projects: &[RawProject], analysis: &Analysis) -> Self {
        let n = projects.len().max(1) as u64;
        let blocks: usize = projects.iter().map(RawProject::visible_block_count).sum();
        let scripts: usize = projects.iter().map(|p| enumerate_scripts(p).len()).sum();
        let sprites: usize = projects.iter().map(RawProject::sprite_count).sum();
        DatasetStats {
            solutions: projects.len(),
            models: analysis.models.len(),
            patterns: analysis.detection.patterns.len(),
            violations: analysis.detection.violations.len(),
            anomalies: analysis.detection.anomalies.len(),
            mean_blocks: Rational::new(blocks as u64, n),
            mean_scripts: Rational::new(scripts as u64, n),
            mean_sprites: Rational::new(sprites as u64, n),
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("stats serialize");
        s.push('\n');
        s
    }

    pub fn to_text(&self) -> String {
        format!(
            "solutions: {}\nmodels: {}\npatterns: {}\nviolations: {}\nanomalies: {}\n\
             mean blocks: {}\nmean scripts: {}\nmean sprites: {}\n",
            self.solutions,
            self.models,
            self.patterns,
            self.violations,
            self.anomalies,
            to_fixed(self.mean_blocks, 2),
            to_fixed(self.mean_scripts, 2),
            to_fixed(self.mean_sprites, 2),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ConfigRecord {
    pub min_support: usize,
    pub min_pattern_size: usize,
    pub max_deviation_level: usize,
    #[serde(serialize_with = "fixed4")]
    pub min_confidence: Rational,
}

impl From<&MiningConfig> for ConfigRecord {
    fn from(c: &MiningConfig) -> Self {
        ConfigRecord {
            min_support: c.min_support,
            min_pattern_size: c.min_pattern_size,
            max_deviation_level: c.max_deviation_level,
            min_confidence: c.min_confidence,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ScriptRecord {
    pub project: String,
    pub actor: String,
    pub script_index: usize,
}

impl From<&ScriptSource> for ScriptRecord {
    fn from(s: &ScriptSource) -> Self {
        ScriptRecord { project: s.project_id.clone(), actor: s.actor_name.clone(), script_index: s.script_index }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct PropertyRecord {
    pub first: String,
    pub second: String,
}

impl From<&TemporalProperty> for PropertyRecord {
    fn from(p: &TemporalProperty) -> Self {
        PropertyRecord { first: p.first.key(), second: p.second.key() }
    }
}

fn property_records(props: &[TemporalProperty]) -> Vec<PropertyRecord> {
    props.iter().map(PropertyRecord::from).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PatternRecord {
    pub id: usize,
    pub support: usize,
    pub size: usize,
    pub supporters: usize,
    pub properties: Vec<PropertyRecord>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AnomalyRecord {
    pub rank: usize,
    #[serde(serialize_with = "fixed4")]
    pub confidence: Rational,
    pub confidence_exact: String,
    pub same_deviation_count: usize,
    pub script: ScriptRecord,
    pub pattern_id: usize,
    pub pattern_support: usize,
    pub pattern_size: usize,
    pub satisfied: Vec<PropertyRecord>,
    pub deviation: Vec<PropertyRecord>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SkippedRecord {
    pub file: String,
    pub reason: String,
}

impl From<&SkippedArchive> for SkippedRecord {
    fn from(s: &SkippedArchive) -> Self {
        let file = s.path.file_name().map_or_else(|| s.path.display().to_string(), |f| f.to_string_lossy().into_owned());
        SkippedRecord { file, reason: s.reason.clone() }
    }
}

/// Self-describing result of one mining run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AnomalyReport {
    pub schema_version: u32,
    pub config: ConfigRecord,
    pub stats: DatasetStats,
    pub skipped: Vec<SkippedRecord>,
    pub patterns: Vec<PatternRecord>,
    pub anomalies: Vec<AnomalyRecord>,
}

impl AnomalyReport {
    /// Builds the report, listing at most `top_n` anomalies.
    pub fn build(dataset: &Dataset, analysis: &Analysis, config: &MiningConfig, top_n: usize) -> Self {
        let patterns = analysis
            .detection
            .patterns
            .iter()
            .enumerate()
            .map(|(id, p)| PatternRecord {
                id,
                support: p.support,
                size: p.len(),
                supporters: p.supporters.len(),
                properties: property_records(&p.properties),
            })
            .collect();
        let anomalies = analysis
            .detection
            .anomalies
            .iter()
            .take(top_n)
            .map(|a| {
                let pattern = analysis.pattern_of(a);
                AnomalyRecord {
                    rank: a.rank,
                    confidence: a.confidence,
                    confidence_exact: format!("{}/{}", a.confidence.numer(), a.confidence.denom()),
                    same_deviation_count: a.same_deviation_count,
                    script: analysis.source_of(a).into(),
                    pattern_id: a.violation.pattern,
                    pattern_support: pattern.support,
                    pattern_size: pattern.len(),
                    satisfied: property_records(&a.violation.satisfied),
                    deviation: property_records(&a.violation.deviation),
                }
            })
            .collect();
        AnomalyReport {
            schema_version: SCHEMA_VERSION,
            config: config.into(),
            stats: DatasetStats::compute(&dataset.projects, analysis),
            skipped: dataset.skipped.iter().map(SkippedRecord::from).collect(),
            patterns,
            anomalies,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let c = &self.config;
        writeln!(
            s,
            "config: min-support={} min-confidence={} min-size={} max-deviation={}",
            c.min_support,
            to_fixed(c.min_confidence, 4),
            c.min_pattern_size,
            c.max_deviation_level
        )
        .unwrap();
        s.push_str(&self.stats.to_text());
        for skip in &self.skipped {
            writeln!(s, "skipped: {} ({})", skip.file, skip.reason).unwrap();
        }
        writeln!(s, "\npatterns (top {} of {}):", self.patterns.len().min(10), self.patterns.len()).unwrap();
        for p in self.patterns.iter().take(10) {
            writeln!(s, "  #{} support={} size={} supporters={}", p.id, p.support, p.size, p.supporters).unwrap();
        }
        if !self.anomalies.is_empty() {
            writeln!(s, "\nanomalies (top {} of {}):", self.anomalies.len(), self.stats.anomalies).unwrap();
        }
        for a in &self.anomalies {
            writeln!(
                s,
                "\n#{} confidence {} ({}, same deviation: {})",
                a.rank, to_fixed(a.confidence, 4), a.confidence_exact, a.same_deviation_count
            )
            .unwrap();
            writeln!(s, "  script: {}/{}#{}", a.script.project, a.script.actor, a.script.script_index).unwrap();
            writeln!(s, "  pattern: #{} support {} size {}", a.pattern_id, a.pattern_support, a.pattern_size).unwrap();
            writeln!(s, "  missing:").unwrap();
            for p in &a.deviation {
                writeln!(s, "    {}", render_property(p)).unwrap();
            }
        }
        s
    }

    /// One digraph per listed anomaly: the violated pattern with missing
    /// properties drawn red and dotted.
    pub fn to_dot(&self) -> String {
        let mut s = String::new();
        for a in &self.anomalies {
            let pattern = &self.patterns[a.pattern_id];
            let props: Vec<(TemporalProperty, bool)> = pattern
                .properties
                .iter()
                .map(|p| (property_from_record(p), a.deviation.contains(p)))
                .collect();
            let name = format!("anomaly {} {}/{}#{}", a.rank, a.script.project, a.script.actor, a.script.script_index);
            s.push_str(&crate::dot::property_graph(&name, props.iter().map(|(p, m)| (p, *m))));
        }
        s
    }
}

fn property_from_record(p: &PropertyRecord) -> TemporalProperty {
    TemporalProperty::new(BlockLabel::from_key(&p.first), BlockLabel::from_key(&p.second))
}

fn render_property(p: &PropertyRecord) -> String {
    property_from_record(p).to_string()
}

#[derive(Debug, Clone, Serialize)]
pub struct TransitionRecord {
    pub from: u32,
    pub label: Option<String>,
    pub to: u32,
}

/// Structured dump of one script model.
#[derive(Debug, Clone, Serialize)]
pub struct ModelRecord {
    pub schema_version: u32,
    pub source: ScriptRecord,
    pub root_block: String,
    pub entry: u32,
    pub exits: Vec<u32>,
    pub locations: Vec<u32>,
    pub transitions: Vec<TransitionRecord>,
}

impl From<&ScriptModel> for ModelRecord {
    fn from(m: &ScriptModel) -> Self {
        ModelRecord {
            schema_version: SCHEMA_VERSION,
            source: m.source().into(),
            root_block: m.source().root_block.clone(),
            entry: m.entry().0,
            exits: m.exits().iter().map(|l| l.0).collect(),
            locations: m.locations().iter().map(|l| l.0).collect(),
            transitions: m
                .transitions()
                .iter()
                .map(|t| TransitionRecord { from: t.from.0, label: t.label.as_ref().map(BlockLabel::key), to: t.to.0 })
                .collect(),
        }
    }
}

pub fn model_to_json(model: &ScriptModel) -> String {
    let mut s = serde_json::to_string_pretty(&ModelRecord::from(model)).expect("model serializes");
    s.push('\n');
    s
}

/// File stem for a model artifact: the provenance triple, made path-safe.
pub fn model_file_stem(source: &ScriptSource) -> String {
    let clean = |s: &str| -> String {
        s.chars().map(|c| if c.is_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect()
    };
    format!("{}__{}__{}", clean(&source.project_id), clean(&source.actor_name), source.script_index)
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRecord {
    pub min_support: usize,
    #[serde(serialize_with = "fixed4")]
    pub min_confidence: Rational,
    pub anomalies: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepReport {
    pub schema_version: u32,
    pub fixed: ConfigRecord,
    pub cells: Vec<SweepRecord>,
}

impl SweepReport {
    pub fn run(sets: &[PropertySet], supports: &[usize], confidences: &[Rational], fixed: &MiningConfig) -> Self {
        let cells = parameter_sweep(sets, supports, confidences, fixed)
            .into_iter()
            .map(|SweepCell { min_support, min_confidence, anomalies }| SweepRecord { min_support, min_confidence, anomalies })
            .collect();
        SweepReport { schema_version: SCHEMA_VERSION, fixed: fixed.into(), cells }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("sweep serializes");
        s.push('\n');
        s
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("min_support,min_confidence,anomalies\n");
        for c in &self.cells {
            writeln!(s, "{},{},{}", c.min_support, to_fixed(c.min_confidence, 4), c.anomalies).unwrap();
        }
        s
    }
}
