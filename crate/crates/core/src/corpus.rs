//! Synthetic classroom corpora.
//!
//! A reference solution is cloned a number of times and single defects are
//! injected into further copies: a block swapped for another, a block removed,
//! two consecutive blocks exchanged, or an extra block inserted.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::ingest::{write_sb3, Actor, BlockId, RawBlock, RawProject};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MutationKind {
    WrongBlock,
    MissingBlock,
    WrongOrder,
    ExtraBlock,
}

impl MutationKind {
    pub fn name(self) -> &'static str {
        match self {
            MutationKind::WrongBlock => "wrong-block",
            MutationKind::MissingBlock => "missing-block",
            MutationKind::WrongOrder => "wrong-order",
            MutationKind::ExtraBlock => "extra-block",
        }
    }
}

/// Picks a block by opcode. Without `occurrence`, the mutation seed chooses
/// among all matches (in script order).
#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
pub struct BlockSelector {
    pub opcode: String,
    #[serde(default)]
    pub occurrence: Option<usize>,
}

impl BlockSelector {
    pub fn opcode(opcode: impl Into<String>) -> Self {
        BlockSelector { opcode: opcode.into(), occurrence: None }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
pub struct MutationSpec {
    pub kind: MutationKind,
    pub target: BlockSelector,
    /// New opcode for wrong-block, inserted opcode for extra-block.
    #[serde(default)]
    pub replacement: Option<String>,
    #[serde(default)]
    pub seed: u64,
}

impl MutationSpec {
    pub fn new(kind: MutationKind, target: &str) -> Self {
        MutationSpec { kind, target: BlockSelector::opcode(target), replacement: None, seed: 0 }
    }

    pub fn with_replacement(mut self, opcode: &str) -> Self {
        self.replacement = Some(opcode.to_string());
        self
    }
}

/// Declarative corpus description, read from TOML:
///
/// ```toml
/// reference = "reference.sb3"
/// n_correct = 30
///
/// [[mutation]]
/// kind = "wrong-block"
/// target = { opcode = "motion_movesteps" }
/// replacement = "motion_goto"
/// ```
#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
pub struct CorpusSpec {
    pub reference: PathBuf,
    pub n_correct: usize,
    #[serde(default, rename = "mutation")]
    pub mutations: Vec<MutationSpec>,
}

impl CorpusSpec {
    /// Parses a spec; a relative `reference` is resolved against `base_dir`.
    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self> {
        let mut spec: CorpusSpec = toml::from_str(text).map_err(|e| Error::CorpusSpec(e.to_string()))?;
        if spec.reference.is_relative() {
            spec.reference = base_dir.join(&spec.reference);
        }
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Slot {
    Root,
    Next(BlockId),
    Substack(BlockId, usize),
}

fn slot_of(actor: &Actor, id: &str) -> Option<Slot> {
    let block = actor.block(id)?;
    if block.is_top_level {
        return Some(Slot::Root);
    }
    let slot_in = |parent: &RawBlock| {
        if parent.next.as_deref() == Some(id) {
            return Some(Slot::Next(parent.id.clone()));
        }
        parent
            .substacks
            .iter()
            .position(|s| s.as_deref() == Some(id))
            .map(|i| Slot::Substack(parent.id.clone(), i))
    };
    // The recorded parent may be missing in hand-written projects.
    block
        .parent
        .as_deref()
        .and_then(|p| actor.block(p))
        .and_then(slot_in)
        .or_else(|| actor.blocks.values().find_map(slot_in))
}

/// Puts `new` into the slot `old` occupied. A root slot hands over its
/// top-level flag and canvas position.
fn fill_slot(actor: &mut Actor, slot: &Slot, old: &str, new: Option<&str>) {
    let position = actor.block(old).and_then(|b| b.position);
    if let Some(old_block) = actor.blocks.get_mut(old) {
        if *slot == Slot::Root {
            old_block.is_top_level = false;
            old_block.position = None;
        }
    }
    let parent = match slot {
        Slot::Root => None,
        Slot::Next(p) => {
            actor.blocks.get_mut(p).expect("parent").next = new.map(str::to_string);
            Some(p.clone())
        }
        Slot::Substack(p, i) => {
            actor.blocks.get_mut(p).expect("parent").substacks[*i] = new.map(str::to_string);
            Some(p.clone())
        }
    };
    if let Some(n) = new.and_then(|n| actor.blocks.get_mut(n)) {
        n.parent = parent;
        if *slot == Slot::Root {
            n.is_top_level = true;
            n.position = position;
        }
    }
}

/// Deletes a block with its substacks and inputs (not its next-chain).
fn delete_subtree(actor: &mut Actor, id: &str) {
    let mut stack = vec![id.to_string()];
    while let Some(id) = stack.pop() {
        if let Some(block) = actor.blocks.remove(&id) {
            stack.extend(block.substacks.into_iter().flatten());
            stack.extend(block.reporter_children);
        }
    }
}

fn script_order(actor: &Actor) -> Vec<BlockId> {
    let mut out = Vec::new();
    for root in &actor.script_roots {
        let mut stack = vec![root.clone()];
        while let Some(id) = stack.pop() {
            let Some(block) = actor.block(&id) else { continue };
            out.push(id);
            // Pushed in reverse so the next-chain comes after the bodies.
            stack.extend(block.next.iter().cloned());
            stack.extend(block.substacks.iter().rev().flatten().cloned());
        }
    }
    out
}

fn select(project: &RawProject, spec: &MutationSpec) -> Result<(usize, BlockId)> {
    let candidates: Vec<(usize, BlockId)> = project
        .actors
        .iter()
        .enumerate()
        .flat_map(|(ai, actor)| {
            script_order(actor)
                .into_iter()
                .filter(|id| actor.block(id).is_some_and(|b| b.opcode == spec.target.opcode))
                .map(move |id| (ai, id))
        })
        .collect();
    if candidates.is_empty() {
        return Err(Error::Mutation(format!("no `{}` block in the reference", spec.target.opcode)));
    }
    let pick = match spec.target.occurrence {
        Some(i) if i < candidates.len() => i,
        Some(i) => {
            return Err(Error::Mutation(format!(
                "occurrence {i} of `{}` requested, only {} present",
                spec.target.opcode,
                candidates.len()
            )))
        }
        None => ChaCha8Rng::seed_from_u64(spec.seed).gen_range(0..candidates.len()),
    };
    Ok(candidates[pick].clone())
}

fn replacement(spec: &MutationSpec) -> Result<&str> {
    spec.replacement
        .as_deref()
        .ok_or_else(|| Error::Mutation(format!("{} needs a replacement opcode", spec.kind.name())))
}

/// Swaps `first` with the block following it in its next-chain.
fn swap_with_next(actor: &mut Actor, first: &str) -> Result<()> {
    let second = actor
        .block(first)
        .and_then(|b| b.next.clone())
        .ok_or_else(|| Error::Mutation(format!("block `{first}` has no successor")))?;
    let slot = slot_of(actor, first).ok_or_else(|| Error::Mutation(format!("block `{first}` is not in a stack")))?;
    let rest = actor.block(&second).and_then(|b| b.next.clone());
    fill_slot(actor, &slot, first, Some(&second));
    let b2 = actor.blocks.get_mut(&second).expect("present");
    b2.next = Some(first.to_string());
    let b1 = actor.blocks.get_mut(first).expect("present");
    b1.next = rest.clone();
    b1.parent = Some(second.clone());
    if let Some(r) = rest {
        actor.blocks.get_mut(&r).expect("present").parent = Some(first.to_string());
    }
    Ok(())
}

/// Applies one defect to a copy of `project`.
pub fn apply_mutation(project: &RawProject, spec: &MutationSpec) -> Result<RawProject> {
    let (ai, id) = select(project, spec)?;
    let mut out = project.clone();
    let actor = &mut out.actors[ai];
    match spec.kind {
        MutationKind::WrongBlock => {
            let opcode = replacement(spec)?;
            let block = actor.blocks.get_mut(&id).expect("selected");
            block.opcode = opcode.to_string();
            if !opcode.starts_with("procedures_") {
                block.proc_name = None;
            }
            let slots = block.kind().substack_slots();
            let dropped: Vec<BlockId> = block.substacks.drain(slots.min(block.substacks.len())..).flatten().collect();
            block.substacks.resize(slots, None);
            for d in dropped {
                delete_subtree(actor, &d);
            }
        }
        MutationKind::MissingBlock => {
            let slot = slot_of(actor, &id).ok_or_else(|| Error::Mutation(format!("block `{id}` is not in a stack")))?;
            let next = actor.block(&id).and_then(|b| b.next.clone());
            fill_slot(actor, &slot, &id, next.as_deref());
            delete_subtree(actor, &id);
        }
        MutationKind::WrongOrder => {
            let has_next = actor.block(&id).is_some_and(|b| b.next.is_some());
            if has_next {
                swap_with_next(actor, &id)?;
            } else {
                match slot_of(actor, &id) {
                    Some(Slot::Next(prev)) => swap_with_next(actor, &prev)?,
                    _ => return Err(Error::Mutation(format!("block `{id}` has no neighbour to swap with"))),
                }
            }
        }
        MutationKind::ExtraBlock => {
            let opcode = replacement(spec)?;
            let mut new_id = format!("extra-{}", spec.seed);
            let mut n = 1;
            while actor.blocks.contains_key(&new_id) {
                new_id = format!("extra-{}-{n}", spec.seed);
                n += 1;
            }
            let next = actor.block(&id).and_then(|b| b.next.clone());
            let mut block = RawBlock::new(new_id.clone(), opcode);
            block.parent = Some(id.clone());
            block.next = next.clone();
            actor.blocks.insert(new_id.clone(), block);
            actor.blocks.get_mut(&id).expect("selected").next = Some(new_id.clone());
            if let Some(n) = next {
                actor.blocks.get_mut(&n).expect("present").parent = Some(new_id);
            }
        }
    }
    actor.canonicalize_roots();
    Ok(out)
}

/// Writes `n_correct` clones of `reference` and one mutant per spec to
/// `out_dir`. Returns the written paths in file-name order.
pub fn generate_corpus(
    reference: &RawProject,
    n_correct: usize,
    mutations: &[MutationSpec],
    out_dir: &Path,
) -> Result<Vec<PathBuf>> {
    let mutants = mutations.iter().map(|m| apply_mutation(reference, m)).collect::<Result<Vec<_>>>()?;
    fs::create_dir_all(out_dir).map_err(|e| Error::OutputUnwritable { path: out_dir.to_path_buf(), source: e })?;
    let mut written = Vec::with_capacity(n_correct + mutants.len());
    for i in 0..n_correct {
        let path = out_dir.join(format!("correct_{i:04}.sb3"));
        write_sb3(reference, &path)?;
        written.push(path);
    }
    for (j, (mutant, spec)) in mutants.iter().zip(mutations).enumerate() {
        let path = out_dir.join(format!("mutant_{j:04}_{}.sb3", spec.kind.name()));
        write_sb3(mutant, &path)?;
        written.push(path);
    }
    Ok(written)
}
