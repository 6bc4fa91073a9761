//! Loading Scratch 3 projects.
//!
//! A project is read either from an `.sb3` archive (a zip container holding
//! `project.json`) or from a bare `project.json`. Only block structure is kept:
//! opcodes, next/parent links, substacks, and which blocks sit in input slots.
//! Field values, literals, costumes, sounds and variables are discarded.
//!
//! Schema problems inside an otherwise readable project never abort loading.
//! They are recorded as [`LoadWarning`]s and the offending reference is cut.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::fs;
use std::io::{Cursor, Read, Write};
use std::path::{Path, PathBuf};

use log::warn;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::error::{Error, Result};
use crate::opcodes::{classify_opcode, BlockKind};

pub type BlockId = String;

const ZIP_MAGIC: &[u8] = b"PK\x03\x04";
const PROJECT_ENTRY: &str = "project.json";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RawBlock {
    pub id: BlockId,
    pub opcode: String,
    pub next: Option<BlockId>,
    pub parent: Option<BlockId>,
    /// Body slots: one for if-then and loops, two for if-else (then, else).
    pub substacks: Vec<Option<BlockId>>,
    /// Blocks plugged into input slots (reporters and menu shadows).
    pub reporter_children: Vec<BlockId>,
    pub is_top_level: bool,
    pub shadow: bool,
    /// Procedure prototype name, for custom-block definitions and calls.
    pub proc_name: Option<String>,
    /// Canvas position of a top-level block.
    pub position: Option<(f64, f64)>,
}

impl RawBlock {
    pub fn kind(&self) -> BlockKind {
        classify_opcode(&self.opcode)
    }

    fn blank(id: &str, opcode: &str) -> Self {
        RawBlock {
            id: id.to_string(),
            opcode: opcode.to_string(),
            next: None,
            parent: None,
            substacks: Vec::new(),
            reporter_children: Vec::new(),
            is_top_level: false,
            shadow: false,
            proc_name: None,
            position: None,
        }
    }

    /// Creates a fresh block that is not yet linked anywhere.
    pub fn new(id: impl Into<BlockId>, opcode: impl Into<String>) -> Self {
        let id = id.into();
        let opcode = opcode.into();
        let mut block = RawBlock::blank(&id, &opcode);
        block.substacks = vec![None; block.kind().substack_slots()];
        block
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Actor {
    pub name: String,
    pub is_stage: bool,
    pub blocks: BTreeMap<BlockId, RawBlock>,
    /// Top-level blocks in canonical order: top to bottom, then left to right.
    pub script_roots: Vec<BlockId>,
}

impl Actor {
    pub fn block(&self, id: &str) -> Option<&RawBlock> {
        self.blocks.get(id)
    }

    /// Number of blocks a user would see on the canvas (shadows excluded).
    pub fn visible_block_count(&self) -> usize {
        self.blocks.values().filter(|b| !b.shadow).count()
    }

    /// Recomputes `script_roots` from the top-level flags.
    pub fn canonicalize_roots(&mut self) {
        let mut roots: Vec<&RawBlock> = self.blocks.values().filter(|b| b.is_top_level).collect();
        roots.sort_by(|a, b| position_order(a.position, b.position).then_with(|| a.id.cmp(&b.id)));
        self.script_roots = roots.into_iter().map(|b| b.id.clone()).collect();
    }
}

fn position_order(a: Option<(f64, f64)>, b: Option<(f64, f64)>) -> std::cmp::Ordering {
    use std::cmp::Ordering;
    match (a, b) {
        (Some((ax, ay)), Some((bx, by))) => ay.total_cmp(&by).then(ax.total_cmp(&bx)),
        (Some(_), None) => Ordering::Less,
        (None, Some(_)) => Ordering::Greater,
        (None, None) => Ordering::Equal,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LoadWarning {
    pub actor: Option<String>,
    pub block: Option<BlockId>,
    pub message: String,
}

impl fmt::Display for LoadWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (&self.actor, &self.block) {
            (Some(a), Some(b)) => write!(f, "{a}/{b}: {}", self.message),
            (Some(a), None) => write!(f, "{a}: {}", self.message),
            _ => f.write_str(&self.message),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RawProject {
    pub project_id: String,
    pub actors: Vec<Actor>,
    pub warnings: Vec<LoadWarning>,
}

impl RawProject {
    pub fn actor(&self, name: &str) -> Option<&Actor> {
        self.actors.iter().find(|a| a.name == name)
    }

    pub fn sprite_count(&self) -> usize {
        self.actors.iter().filter(|a| !a.is_stage).count()
    }

    pub fn visible_block_count(&self) -> usize {
        self.actors.iter().map(Actor::visible_block_count).sum()
    }
}

/// Provenance of one script: which project, actor and position it came from.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct ScriptSource {
    pub project_id: String,
    pub actor_name: String,
    pub script_index: usize,
    pub root_block: BlockId,
}

impl ScriptSource {
    pub fn new(
        project_id: impl Into<String>,
        actor_name: impl Into<String>,
        script_index: usize,
        root_block: impl Into<BlockId>,
    ) -> Self {
        ScriptSource {
            project_id: project_id.into(),
            actor_name: actor_name.into(),
            script_index,
            root_block: root_block.into(),
        }
    }
}

impl fmt::Display for ScriptSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}#{}", self.project_id, self.actor_name, self.script_index)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SkippedArchive {
    pub path: PathBuf,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub root: PathBuf,
    pub projects: Vec<RawProject>,
    pub skipped: Vec<SkippedArchive>,
}

pub fn load_project(path: &Path) -> Result<RawProject> {
    let bytes = fs::read(path).map_err(|e| Error::ArchiveUnreadable {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    let project_id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .filter(|s| !s.is_empty())
        .unwrap_or_else(|| "project".to_string());
    load_project_bytes(&bytes, path, project_id)
}

/// Parses project bytes. `path` is only used in error messages.
pub fn load_project_bytes(bytes: &[u8], path: &Path, project_id: String) -> Result<RawProject> {
    let json: Value = if bytes.starts_with(ZIP_MAGIC) {
        let text = read_zip_entry(bytes, path)?;
        serde_json::from_slice(&text).map_err(|e| Error::MalformedProject {
            path: path.to_path_buf(),
            reason: format!("project.json is not valid JSON: {e}"),
        })?
    } else {
        serde_json::from_slice(bytes).map_err(|e| Error::ArchiveUnreadable {
            path: path.to_path_buf(),
            reason: format!("neither a zip archive nor JSON: {e}"),
        })?
    };
    parse_project(&json, path, project_id)
}

fn read_zip_entry(bytes: &[u8], path: &Path) -> Result<Vec<u8>> {
    let mut archive = zip::ZipArchive::new(Cursor::new(bytes)).map_err(|e| Error::ArchiveUnreadable {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    let mut entry = archive.by_name(PROJECT_ENTRY).map_err(|_| Error::MalformedProject {
        path: path.to_path_buf(),
        reason: "archive has no project.json".to_string(),
    })?;
    let mut out = Vec::new();
    entry.read_to_end(&mut out).map_err(|e| Error::ArchiveUnreadable {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    Ok(out)
}

struct Warnings(Vec<LoadWarning>);

impl Warnings {
    fn push(&mut self, actor: &str, block: Option<&str>, message: impl Into<String>) {
        self.0.push(LoadWarning {
            actor: Some(actor.to_string()),
            block: block.map(str::to_string),
            message: message.into(),
        });
    }
}

fn parse_project(json: &Value, path: &Path, project_id: String) -> Result<RawProject> {
    let targets = json
        .get("targets")
        .and_then(Value::as_array)
        .ok_or_else(|| Error::MalformedProject {
            path: path.to_path_buf(),
            reason: "missing `targets` array".to_string(),
        })?;

    let mut warnings = Warnings(Vec::new());
    let mut actors = Vec::with_capacity(targets.len());
    let mut names = HashSet::new();
    for (i, target) in targets.iter().enumerate() {
        let Some(obj) = target.as_object() else {
            warnings.0.push(LoadWarning {
                actor: None,
                block: None,
                message: format!("target {i} is not an object; skipped"),
            });
            continue;
        };
        let mut name = obj
            .get("name")
            .and_then(Value::as_str)
            .map(str::to_string)
            .unwrap_or_else(|| format!("target{i}"));
        if !names.insert(name.clone()) {
            let mut n = 2;
            while !names.insert(format!("{name} ({n})")) {
                n += 1;
            }
            let renamed = format!("{name} ({n})");
            warnings.push(&renamed, None, format!("duplicate actor name `{name}`; renamed"));
            name = renamed;
        }
        let is_stage = match obj.get("isStage").and_then(Value::as_bool) {
            Some(s) => s,
            None => {
                warnings.push(&name, None, "missing `isStage`; assuming sprite");
                false
            }
        };
        let blocks = match obj.get("blocks") {
            Some(Value::Object(map)) => parse_blocks(map, &name, &mut warnings),
            None => BTreeMap::new(),
            Some(_) => {
                warnings.push(&name, None, "`blocks` is not an object; ignored");
                BTreeMap::new()
            }
        };
        let mut actor = Actor { name, is_stage, blocks, script_roots: Vec::new() };
        resolve_references(&mut actor, &mut warnings);
        actor.canonicalize_roots();
        cut_cycles(&mut actor, &mut warnings);
        actors.push(actor);
    }

    let stages = actors.iter().filter(|a| a.is_stage).count();
    if stages != 1 {
        warnings.0.push(LoadWarning {
            actor: None,
            block: None,
            message: format!("expected exactly one stage, found {stages}"),
        });
    }
    for w in &warnings.0 {
        warn!("{project_id}: {w}");
    }
    Ok(RawProject { project_id, actors, warnings: warnings.0 })
}

fn parse_blocks(map: &Map<String, Value>, actor: &str, warnings: &mut Warnings) -> BTreeMap<BlockId, RawBlock> {
    let mut blocks = BTreeMap::new();
    for (id, value) in map {
        match value {
            Value::Object(obj) => match parse_block(id, obj) {
                Some(block) => {
                    blocks.insert(id.clone(), block);
                }
                None => warnings.push(actor, Some(id), "block without opcode dropped"),
            },
            // Top-level variable and list reporters are stored as bare arrays.
            Value::Array(_) => {}
            _ => warnings.push(actor, Some(id), "block entry is not an object; dropped"),
        }
    }
    blocks
}

fn parse_block(id: &str, obj: &Map<String, Value>) -> Option<RawBlock> {
    let opcode = obj.get("opcode")?.as_str()?;
    let mut block = RawBlock::blank(id, opcode);
    block.next = obj.get("next").and_then(Value::as_str).map(str::to_string);
    block.parent = obj.get("parent").and_then(Value::as_str).map(str::to_string);
    block.is_top_level = obj.get("topLevel").and_then(Value::as_bool).unwrap_or(false);
    block.shadow = obj.get("shadow").and_then(Value::as_bool).unwrap_or(false);
    if block.is_top_level {
        let x = obj.get("x").and_then(Value::as_f64);
        let y = obj.get("y").and_then(Value::as_f64);
        if let (Some(x), Some(y)) = (x, y) {
            block.position = Some((x, y));
        }
    }
    block.proc_name = obj
        .get("mutation")
        .and_then(|m| m.get("proccode"))
        .and_then(Value::as_str)
        .map(str::to_string);

    let mut substack = None;
    let mut substack2 = None;
    if let Some(inputs) = obj.get("inputs").and_then(Value::as_object) {
        for (name, input) in inputs {
            // [shadow-type, active, obscured-shadow?]; `active` is a block id,
            // an inline primitive array, or null.
            let Some(child) = input.as_array().and_then(|a| a.get(1)).and_then(Value::as_str) else {
                continue;
            };
            match name.as_str() {
                "SUBSTACK" => substack = Some(child.to_string()),
                "SUBSTACK2" => substack2 = Some(child.to_string()),
                _ => block.reporter_children.push(child.to_string()),
            }
        }
    }
    block.substacks = match block.kind().substack_slots() {
        2 => vec![substack, substack2],
        1 => vec![substack],
        _ => Vec::new(),
    };
    Some(block)
}

fn resolve_references(actor: &mut Actor, warnings: &mut Warnings) {
    let ids: BTreeSet<BlockId> = actor.blocks.keys().cloned().collect();
    let name = actor.name.clone();
    for block in actor.blocks.values_mut() {
        let id = block.id.clone();
        let mut check = |slot: &mut Option<BlockId>, what: &str| {
            if let Some(target) = slot {
                if !ids.contains(target) {
                    warnings.push(&name, Some(&id), format!("{what} `{target}` does not resolve; cut"));
                    *slot = None;
                }
            }
        };
        check(&mut block.next, "next");
        check(&mut block.parent, "parent");
        for s in block.substacks.iter_mut() {
            check(s, "substack");
        }
        block.reporter_children.retain(|child| {
            let ok = ids.contains(child);
            if !ok {
                warnings.push(&name, Some(&id), format!("input `{child}` does not resolve; cut"));
            }
            ok
        });
    }
    // Procedure definitions take their name from the prototype in their input.
    let defs: Vec<(BlockId, Option<String>)> = actor
        .blocks
        .values()
        .filter(|b| b.opcode == "procedures_definition" && b.proc_name.is_none())
        .map(|b| {
            let name = b
                .reporter_children
                .iter()
                .filter_map(|c| actor.blocks.get(c))
                .find(|c| c.opcode == "procedures_prototype")
                .and_then(|c| c.proc_name.clone());
            (b.id.clone(), name)
        })
        .collect();
    for (id, proc_name) in defs {
        if let Some(block) = actor.blocks.get_mut(&id) {
            block.proc_name = proc_name;
        }
    }
}

/// Makes every script tree acyclic and disjoint: an edge that leads back to an
/// already visited block (or into another script's root) is cut.
fn cut_cycles(actor: &mut Actor, warnings: &mut Warnings) {
    let mut visited: HashSet<BlockId> = actor.script_roots.iter().cloned().collect();
    let roots = actor.script_roots.clone();
    for root in roots {
        let mut stack = vec![root];
        while let Some(id) = stack.pop() {
            let Some(block) = actor.blocks.get(&id) else { continue };
            let mut children: Vec<(Edge, BlockId)> = Vec::new();
            if let Some(n) = &block.next {
                children.push((Edge::Next, n.clone()));
            }
            for (i, s) in block.substacks.iter().enumerate() {
                if let Some(s) = s {
                    children.push((Edge::Substack(i), s.clone()));
                }
            }
            for (i, c) in block.reporter_children.iter().enumerate() {
                children.push((Edge::Input(i), c.clone()));
            }
            let mut cut = Vec::new();
            for (edge, child) in children {
                if visited.insert(child.clone()) {
                    stack.push(child);
                } else {
                    cut.push((edge, child));
                }
            }
            if cut.is_empty() {
                continue;
            }
            let block = actor.blocks.get_mut(&id).expect("present");
            let mut dropped_inputs = Vec::new();
            for (edge, child) in cut {
                warnings.push(&actor.name, Some(&id), format!("link to `{child}` closes a cycle or shares a block; cut"));
                match edge {
                    Edge::Next => block.next = None,
                    Edge::Substack(i) => block.substacks[i] = None,
                    Edge::Input(i) => dropped_inputs.push(i),
                }
            }
            for i in dropped_inputs.into_iter().rev() {
                block.reporter_children.remove(i);
            }
        }
    }
}

#[derive(Clone, Copy)]
enum Edge {
    Next,
    Substack(usize),
    Input(usize),
}

fn is_project_file(path: &Path) -> bool {
    path.is_file()
        && path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| e.eq_ignore_ascii_case("sb3") || e.eq_ignore_ascii_case("json"))
}

/// Loads every `.sb3` / `.json` file directly inside `dir`, in file-name order.
pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let entries = fs::read_dir(dir).map_err(|e| Error::DatasetUnreadable { path: dir.to_path_buf(), source: e })?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| is_project_file(p))
        .collect();
    paths.sort_by(|a, b| a.file_name().cmp(&b.file_name()));

    let results: Vec<Result<RawProject>> = paths.par_iter().map(|p| load_project(p)).collect();

    let mut projects = Vec::new();
    let mut skipped = Vec::new();
    let mut ids = HashSet::new();
    for (path, result) in paths.into_iter().zip(results) {
        match result {
            Ok(mut project) => {
                if !ids.insert(project.project_id.clone()) {
                    let full = path.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default();
                    let mut candidate = full.clone();
                    let mut n = 2;
                    while !ids.insert(candidate.clone()) {
                        candidate = format!("{full}~{n}");
                        n += 1;
                    }
                    project.project_id = candidate;
                }
                projects.push(project);
            }
            Err(e) => {
                warn!("skipping {}: {e}", path.display());
                skipped.push(SkippedArchive { path, reason: e.to_string() });
            }
        }
    }
    if projects.is_empty() {
        return Err(Error::DatasetEmpty(dir.to_path_buf()));
    }
    Ok(Dataset { root: dir.to_path_buf(), projects, skipped })
}

/// Lists the scripts of a project: every top-level stack whose head is not a
/// reporter, in actor order and then canvas order.
pub fn enumerate_scripts(project: &RawProject) -> Vec<ScriptSource> {
    let mut out = Vec::new();
    for actor in &project.actors {
        let mut index = 0;
        for root in &actor.script_roots {
            let Some(block) = actor.block(root) else { continue };
            if block.kind().in_stack() == BlockKind::Reporter {
                continue;
            }
            out.push(ScriptSource::new(&project.project_id, &actor.name, index, root.clone()));
            index += 1;
        }
    }
    out
}

/// Serializes the block structure back into Scratch 3 `project.json` form.
///
/// Only what [`load_project`] reads is written, so loading the result yields
/// the same [`RawProject`] (up to `project_id` and warnings).
pub fn project_to_json(project: &RawProject) -> Value {
    let targets: Vec<Value> = project
        .actors
        .iter()
        .enumerate()
        .map(|(layer, actor)| {
            let blocks: Map<String, Value> =
                actor.blocks.values().map(|b| (b.id.clone(), block_to_json(b))).collect();
            json!({
                "isStage": actor.is_stage,
                "name": actor.name,
                "variables": {},
                "lists": {},
                "broadcasts": {},
                "blocks": blocks,
                "comments": {},
                "currentCostume": 0,
                "costumes": [],
                "sounds": [],
                "volume": 100,
                "layerOrder": layer,
            })
        })
        .collect();
    json!({
        "targets": targets,
        "monitors": [],
        "extensions": [],
        "meta": { "semver": "3.0.0", "vm": "0.2.0", "agent": "scratch-anomaly" },
    })
}

fn block_to_json(block: &RawBlock) -> Value {
    let mut inputs = Map::new();
    for (i, s) in block.substacks.iter().enumerate() {
        if let Some(s) = s {
            let key = if i == 0 { "SUBSTACK" } else { "SUBSTACK2" };
            inputs.insert(key.to_string(), json!([2, s]));
        }
    }
    for (i, child) in block.reporter_children.iter().enumerate() {
        let key = if block.opcode == "procedures_definition" && i == 0 {
            "custom_block".to_string()
        } else {
            format!("ARG{i:03}")
        };
        inputs.insert(key, json!([2, child]));
    }
    let mut obj = Map::new();
    obj.insert("opcode".into(), json!(block.opcode));
    obj.insert("next".into(), json!(block.next));
    obj.insert("parent".into(), json!(block.parent));
    obj.insert("inputs".into(), Value::Object(inputs));
    obj.insert("fields".into(), json!({}));
    obj.insert("shadow".into(), json!(block.shadow));
    obj.insert("topLevel".into(), json!(block.is_top_level));
    if let Some((x, y)) = block.position {
        obj.insert("x".into(), json!(x));
        obj.insert("y".into(), json!(y));
    }
    // Definitions get their name from the prototype, not from a mutation.
    if let (Some(name), false) = (&block.proc_name, block.opcode == "procedures_definition") {
        obj.insert(
            "mutation".into(),
            json!({ "tagName": "mutation", "children": [], "proccode": name, "argumentids": "[]", "warp": "false" }),
        );
    }
    Value::Object(obj)
}

/// Encodes a project as `.sb3` bytes. Output is byte-for-byte deterministic.
pub fn to_sb3_bytes(project: &RawProject) -> Vec<u8> {
    use zip::write::SimpleFileOptions;
    let body = serde_json::to_vec(&project_to_json(project)).expect("JSON values always serialize");
    let mut writer = zip::ZipWriter::new(Cursor::new(Vec::new()));
    let options = SimpleFileOptions::default()
        .compression_method(zip::CompressionMethod::Deflated)
        .last_modified_time(zip::DateTime::default())
        .unix_permissions(0o644);
    writer.start_file(PROJECT_ENTRY, options).expect("in-memory zip");
    writer.write_all(&body).expect("in-memory zip");
    writer.finish().expect("in-memory zip").into_inner()
}

pub fn write_sb3(project: &RawProject, path: &Path) -> Result<()> {
    fs::write(path, to_sb3_bytes(project)).map_err(|e| Error::OutputUnwritable { path: path.to_path_buf(), source: e })
}
