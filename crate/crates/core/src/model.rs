//! Script models: labeled control-flow graphs of single scripts.
//!
//! A model has control locations and transitions labeled with the command
//! block executed when moving between them. Unlabeled (ε) transitions appear
//! while abstracting models and are removed by [`eliminate_epsilon`].

use std::collections::{BTreeSet, HashMap, HashSet, VecDeque};
use std::fmt;

use rayon::prelude::*;
use serde::{Serialize, Serializer};

use crate::ingest::{enumerate_scripts, Actor, RawBlock, RawProject, ScriptSource};
use crate::opcodes::{self, BlockKind};

/// Identity of a command block with its inputs abstracted away.
///
/// Usually just the opcode; custom-block definitions and calls also carry the
/// procedure name so that calls to different procedures stay distinct.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BlockLabel {
    opcode: String,
    proc_name: Option<String>,
}

impl BlockLabel {
    pub fn new(opcode: impl Into<String>) -> Self {
        BlockLabel { opcode: opcode.into(), proc_name: None }
    }

    pub fn procedure(opcode: impl Into<String>, name: impl Into<String>) -> Self {
        BlockLabel { opcode: opcode.into(), proc_name: Some(name.into()) }
    }

    pub fn of_block(block: &RawBlock) -> Self {
        match (&block.proc_name, block.opcode.as_str()) {
            (Some(name), "procedures_call" | "procedures_definition") => BlockLabel::procedure(&block.opcode, name),
            _ => BlockLabel::new(&block.opcode),
        }
    }

    pub fn opcode(&self) -> &str {
        &self.opcode
    }

    /// Stable machine-readable key: `opcode` or `opcode:procedure name`.
    pub fn key(&self) -> String {
        match &self.proc_name {
            Some(name) => format!("{}:{}", self.opcode, name),
            None => self.opcode.clone(),
        }
    }

    /// Inverse of [`BlockLabel::key`].
    pub fn from_key(key: &str) -> Self {
        match key.split_once(':') {
            Some((opcode, name)) => BlockLabel::procedure(opcode, name),
            None => BlockLabel::new(key),
        }
    }

    /// Human-readable name, e.g. "move steps".
    pub fn alias(&self) -> String {
        let base = opcodes::alias(&self.opcode);
        match &self.proc_name {
            Some(name) => format!("{base} {name}"),
            None => base.to_string(),
        }
    }
}

impl fmt::Display for BlockLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.alias())
    }
}

impl Serialize for BlockLabel {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.key())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct Loc(pub u32);

impl fmt::Display for Loc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "l{}", self.0)
    }
}

/// A control transition; `label == None` is an ε-move.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct Transition {
    pub from: Loc,
    pub label: Option<BlockLabel>,
    pub to: Loc,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScriptModel {
    source: ScriptSource,
    locations: BTreeSet<Loc>,
    transitions: BTreeSet<Transition>,
    entry: Loc,
    exits: BTreeSet<Loc>,
    next_loc: u32,
}

impl ScriptModel {
    /// An empty model consisting of the entry location `l0`.
    pub fn new(source: ScriptSource) -> Self {
        ScriptModel {
            source,
            locations: BTreeSet::from([Loc(0)]),
            transitions: BTreeSet::new(),
            entry: Loc(0),
            exits: BTreeSet::new(),
            next_loc: 1,
        }
    }

    pub fn fresh_location(&mut self) -> Loc {
        let loc = Loc(self.next_loc);
        self.next_loc += 1;
        self.locations.insert(loc);
        loc
    }

    fn touch(&mut self, loc: Loc) {
        self.locations.insert(loc);
        self.next_loc = self.next_loc.max(loc.0 + 1);
    }

    pub fn add_transition(&mut self, from: Loc, label: BlockLabel, to: Loc) {
        self.touch(from);
        self.touch(to);
        self.transitions.insert(Transition { from, label: Some(label), to });
    }

    pub fn add_epsilon(&mut self, from: Loc, to: Loc) {
        self.touch(from);
        self.touch(to);
        self.transitions.insert(Transition { from, label: None, to });
    }

    pub fn mark_exit(&mut self, loc: Loc) {
        self.touch(loc);
        self.exits.insert(loc);
    }

    pub fn source(&self) -> &ScriptSource {
        &self.source
    }

    pub fn entry(&self) -> Loc {
        self.entry
    }

    pub fn exits(&self) -> &BTreeSet<Loc> {
        &self.exits
    }

    pub fn locations(&self) -> &BTreeSet<Loc> {
        &self.locations
    }

    pub fn transitions(&self) -> &BTreeSet<Transition> {
        &self.transitions
    }

    /// Transitions carrying a block, as `(from, label, to)`.
    pub fn labeled(&self) -> impl Iterator<Item = (Loc, &BlockLabel, Loc)> {
        self.transitions.iter().filter_map(|t| t.label.as_ref().map(|l| (t.from, l, t.to)))
    }

    /// The block alphabet of the model.
    pub fn labels(&self) -> BTreeSet<&BlockLabel> {
        self.labeled().map(|(_, l, _)| l).collect()
    }

    pub fn is_epsilon_free(&self) -> bool {
        self.transitions.iter().all(|t| t.label.is_some())
    }
}

struct Builder<'a> {
    actor: &'a Actor,
    model: ScriptModel,
}

impl<'a> Builder<'a> {
    /// Blocks of the next-chain starting at `first`, reporters skipped.
    fn chain(&self, first: Option<&str>) -> Vec<&'a RawBlock> {
        let actor: &'a Actor = self.actor;
        let mut out = Vec::new();
        let mut next = first;
        while let Some(block) = next.and_then(|id| actor.block(id)) {
            if block.kind().in_stack() != BlockKind::Reporter {
                out.push(block);
            }
            next = block.next.as_deref();
        }
        out
    }

    /// Emits the stack starting at `first` from location `start`.
    ///
    /// When `target` is given, the stack's fall-through continuation is that
    /// location: the last block transitions straight into it instead of into a
    /// fresh location. Returns the fall-through location, or `None` if the
    /// stack never completes (cap block or forever loop).
    fn build_seq(&mut self, first: Option<&str>, start: Loc, target: Option<Loc>) -> Option<Loc> {
        let chain = self.chain(first);
        if chain.is_empty() {
            return match target {
                Some(t) if t != start => {
                    self.model.add_epsilon(start, t);
                    Some(t)
                }
                _ => Some(start),
            };
        }
        let last = chain.len() - 1;
        let mut cur = start;
        for (i, block) in chain.into_iter().enumerate() {
            let cont = if i == last { target } else { None };
            let label = BlockLabel::of_block(block);
            let body = |slot: usize| block.substacks.get(slot).and_then(|s| s.as_deref());
            match block.kind().in_stack() {
                BlockKind::ControlForever => {
                    let head = self.model.fresh_location();
                    self.model.add_transition(cur, label, head);
                    self.build_seq(body(0), head, Some(head));
                    return None;
                }
                BlockKind::Cap if i == last => {
                    let to = self.model.fresh_location();
                    self.model.add_transition(cur, label, to);
                    self.model.mark_exit(to);
                    return None;
                }
                BlockKind::ControlIfThen => {
                    let then_entry = body(0).map(|_| self.model.fresh_location());
                    let after = cont.unwrap_or_else(|| self.model.fresh_location());
                    let then_entry = then_entry.unwrap_or(after);
                    self.model.add_transition(cur, label.clone(), then_entry);
                    self.model.add_transition(cur, label, after);
                    self.build_seq(body(0), then_entry, Some(after));
                    cur = after;
                }
                BlockKind::ControlIfElse => {
                    let then_entry = body(0).map(|_| self.model.fresh_location());
                    let else_entry = body(1).map(|_| self.model.fresh_location());
                    let join = cont.unwrap_or_else(|| self.model.fresh_location());
                    let then_entry = then_entry.unwrap_or(join);
                    let else_entry = else_entry.unwrap_or(join);
                    self.model.add_transition(cur, label.clone(), then_entry);
                    self.model.add_transition(cur, label, else_entry);
                    let then_end = self.build_seq(body(0), then_entry, Some(join));
                    let else_end = self.build_seq(body(1), else_entry, Some(join));
                    if then_end.is_none() && else_end.is_none() {
                        return None;
                    }
                    cur = join;
                }
                BlockKind::ControlLoopBounded | BlockKind::ControlLoopUntil => {
                    let body_entry = match body(0) {
                        Some(_) => self.model.fresh_location(),
                        None => cur,
                    };
                    let after = cont.unwrap_or_else(|| self.model.fresh_location());
                    self.model.add_transition(cur, label.clone(), body_entry);
                    self.model.add_transition(cur, label, after);
                    self.build_seq(body(0), body_entry, Some(cur));
                    cur = after;
                }
                // Hats, commands, and cap blocks followed by more blocks
                // ("stop other scripts in sprite").
                _ => {
                    let to = cont.unwrap_or_else(|| self.model.fresh_location());
                    self.model.add_transition(cur, label, to);
                    cur = to;
                }
            }
        }
        Some(cur)
    }
}

/// Builds the raw model of one script. The result may contain ε-moves and
/// unreachable locations; [`extract_model`] normalizes it.
pub fn build_script_model(script: &ScriptSource, project: &RawProject) -> ScriptModel {
    let model = ScriptModel::new(script.clone());
    let Some(actor) = project.actor(&script.actor_name) else {
        return model;
    };
    let mut builder = Builder { actor, model };
    let entry = builder.model.entry();
    if let Some(end) = builder.build_seq(Some(&script.root_block), entry, None) {
        builder.model.mark_exit(end);
    }
    builder.model
}

/// Builds the ε-free model of one script.
pub fn extract_model(script: &ScriptSource, project: &RawProject) -> ScriptModel {
    eliminate_epsilon(&build_script_model(script, project))
}

/// Extracts the models of all scripts of all projects, in project order and
/// script order within each project.
pub fn extract_models(projects: &[RawProject]) -> Vec<ScriptModel> {
    projects
        .par_iter()
        .map(|p| enumerate_scripts(p).iter().map(|s| extract_model(s, p)).collect::<Vec<_>>())
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect()
}

fn epsilon_closures(model: &ScriptModel) -> HashMap<Loc, Vec<Loc>> {
    let mut eps: HashMap<Loc, Vec<Loc>> = HashMap::new();
    for t in &model.transitions {
        if t.label.is_none() {
            eps.entry(t.from).or_default().push(t.to);
        }
    }
    model
        .locations
        .iter()
        .map(|&l| {
            let mut seen = BTreeSet::from([l]);
            let mut queue = VecDeque::from([l]);
            while let Some(x) = queue.pop_front() {
                for &y in eps.get(&x).into_iter().flatten() {
                    if seen.insert(y) {
                        queue.push_back(y);
                    }
                }
            }
            (l, seen.into_iter().collect())
        })
        .collect()
}

/// Removes ε-moves while keeping the block-labeled behavior.
///
/// Every labeled transition leaving a location in the ε-closure of `l` is
/// re-sourced at `l`; `l` becomes an exit if its closure meets an exit.
/// Locations no longer reachable from the entry are dropped.
pub fn eliminate_epsilon(model: &ScriptModel) -> ScriptModel {
    let closures = epsilon_closures(model);
    let mut outgoing: HashMap<Loc, Vec<(&BlockLabel, Loc)>> = HashMap::new();
    for (from, label, to) in model.labeled() {
        outgoing.entry(from).or_default().push((label, to));
    }

    let mut transitions = BTreeSet::new();
    let mut exits = BTreeSet::new();
    for (&l, closure) in &closures {
        for c in closure {
            if model.exits.contains(c) {
                exits.insert(l);
            }
            for &(label, to) in outgoing.get(c).into_iter().flatten() {
                transitions.insert(Transition { from: l, label: Some(label.clone()), to });
            }
        }
    }

    let mut succ: HashMap<Loc, Vec<Loc>> = HashMap::new();
    for t in &transitions {
        succ.entry(t.from).or_default().push(t.to);
    }
    let mut reachable = HashSet::from([model.entry]);
    let mut queue = VecDeque::from([model.entry]);
    while let Some(x) = queue.pop_front() {
        for &y in succ.get(&x).into_iter().flatten() {
            if reachable.insert(y) {
                queue.push_back(y);
            }
        }
    }

    ScriptModel {
        source: model.source.clone(),
        locations: model.locations.iter().copied().filter(|l| reachable.contains(l)).collect(),
        transitions: transitions.into_iter().filter(|t| reachable.contains(&t.from)).collect(),
        entry: model.entry,
        exits: exits.into_iter().filter(|l| reachable.contains(l)).collect(),
        next_loc: model.next_loc,
    }
}

/// Replaces every transition whose label satisfies `drop` with an ε-move and
/// eliminates the ε-moves.
pub fn abstract_labels(model: &ScriptModel, drop: impl Fn(&BlockLabel) -> bool) -> ScriptModel {
    let mut relabeled = model.clone();
    relabeled.transitions = model
        .transitions
        .iter()
        .map(|t| match &t.label {
            Some(l) if drop(l) => Transition { from: t.from, label: None, to: t.to },
            _ => t.clone(),
        })
        .collect();
    eliminate_epsilon(&relabeled)
}
