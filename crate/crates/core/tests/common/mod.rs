//! Fixtures and independent oracles shared by the integration tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use scratch_anomaly::corpus::{generate_corpus, MutationKind, MutationSpec};
use scratch_anomaly::ingest::{load_dataset, load_project, Dataset, RawProject, ScriptSource};
use scratch_anomaly::model::{BlockLabel, Loc, ScriptModel};
use scratch_anomaly::props::{PropertySet, TemporalProperty};

pub const WGF: &str = "event_whenflagclicked";
pub const FOREVER: &str = "control_forever";
pub const IF: &str = "control_if";
pub const MOVE: &str = "motion_movesteps";
pub const GOTO: &str = "motion_goto";

/// Also used from the command-line crate, hence the sibling-relative path.
pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures").join(name)
}

pub fn load_fixture(name: &str) -> RawProject {
    load_project(&fixture(name)).expect("fixture loads")
}

pub fn tp(a: &str, b: &str) -> TemporalProperty {
    TemporalProperty::new(BlockLabel::new(a), BlockLabel::new(b))
}

pub fn source(project: &str, index: usize) -> ScriptSource {
    ScriptSource::new(project, "Sprite", index, "root")
}

/// The flag / forever / if-then / `action` model drawn by hand:
/// l0 -flag-> l1 -forever-> l2, l2 -if-> l3, l2 -if-> l2, l3 -action-> l2.
pub fn forever_if_model(action: &str) -> ScriptModel {
    let mut m = ScriptModel::new(source("hand", 0));
    let l0 = m.entry();
    let l1 = m.fresh_location();
    let l2 = m.fresh_location();
    let l3 = m.fresh_location();
    m.add_transition(l0, BlockLabel::new(WGF), l1);
    m.add_transition(l1, BlockLabel::new(FOREVER), l2);
    m.add_transition(l2, BlockLabel::new(IF), l3);
    m.add_transition(l2, BlockLabel::new(IF), l2);
    m.add_transition(l3, BlockLabel::new(action), l2);
    m
}

/// The nine properties of the moving-sprite script.
pub fn nine_properties() -> BTreeSet<TemporalProperty> {
    [
        (WGF, FOREVER),
        (WGF, IF),
        (WGF, MOVE),
        (FOREVER, IF),
        (FOREVER, MOVE),
        (IF, MOVE),
        (IF, IF),
        (MOVE, IF),
        (MOVE, MOVE),
    ]
    .into_iter()
    .map(|(a, b)| tp(a, b))
    .collect()
}

/// The properties of [`nine_properties`] that mention move-steps.
pub fn move_properties() -> BTreeSet<TemporalProperty> {
    nine_properties().into_iter().filter(|p| p.mentions(&BlockLabel::new(MOVE))).collect()
}

/// Labeled transitions as plain tuples.
pub fn edges(model: &ScriptModel) -> BTreeSet<(u32, String, u32)> {
    model.labeled().map(|(a, l, b)| (a.0, l.opcode().to_string(), b.0)).collect()
}

/// Writes `n_correct` copies of the first worked example plus the given
/// mutants into `dir` and loads the result.
pub fn classroom(dir: &Path, n_correct: usize, mutants: &[MutationSpec]) -> Dataset {
    let reference = load_fixture("moving_sprite.json");
    generate_corpus(&reference, n_correct, mutants, dir).expect("corpus written");
    load_dataset(dir).expect("corpus loads")
}

pub fn goto_mutant() -> MutationSpec {
    MutationSpec::new(MutationKind::WrongBlock, MOVE).with_replacement(GOTO)
}

// ---------------------------------------------------------------------------
// Closed itemsets by brute force

/// Every closed itemset is the intersection of some nonempty set of
/// transactions, so intersecting all transaction subsets finds them all.
/// Returns nonempty itemsets with support at least `min_support`.
pub fn brute_force_closed(transactions: &[BTreeSet<u32>], min_support: usize) -> BTreeMap<BTreeSet<u32>, usize> {
    let n = transactions.len();
    let mut out = BTreeMap::new();
    for mask in 1u32..(1 << n) {
        let mut members = (0..n).filter(|i| mask & (1 << i) != 0);
        let first = members.next().expect("nonempty mask");
        let mut inter = transactions[first].clone();
        for i in members {
            inter = inter.intersection(&transactions[i]).copied().collect();
        }
        if inter.is_empty() {
            continue;
        }
        let support = transactions.iter().filter(|t| inter.is_subset(t)).count();
        if support >= min_support.max(1) {
            out.insert(inter, support);
        }
    }
    out
}

/// Item `i` as a property; distinct items give distinct properties.
pub fn item(i: u32) -> TemporalProperty {
    tp(&format!("op{i}"), &format!("op{}", (i * 7 + 3) % 11))
}

pub fn transactions_to_sets(transactions: &[BTreeSet<u32>]) -> Vec<PropertySet> {
    transactions
        .iter()
        .enumerate()
        .map(|(i, t)| PropertySet::new(source("tx", i), t.iter().map(|&x| item(x))))
        .collect()
}

pub fn random_transactions(rng: &mut ChaCha8Rng) -> (Vec<BTreeSet<u32>>, usize) {
    let n = rng.gen_range(1..=12);
    let universe = rng.gen_range(1..=8u32);
    let density = rng.gen_range(0.2..0.9);
    let transactions = (0..n)
        .map(|_| (0..universe).filter(|_| rng.gen_bool(density)).collect())
        .collect();
    let k = rng.gen_range(1..=n);
    (transactions, k)
}

// ---------------------------------------------------------------------------
// Random models with ε-moves and bounded path languages

pub const ALPHABET: [&str; 4] = ["looks_say", "motion_turnright", "control_if", "sound_play"];

/// A random model over at most `max_locs` locations. Transitions may form
/// cycles, including ε-cycles, and some locations may be unreachable.
pub fn random_epsilon_model(rng: &mut ChaCha8Rng, max_locs: usize) -> ScriptModel {
    let n = rng.gen_range(1..=max_locs);
    let mut m = ScriptModel::new(source("rand", 0));
    let mut locs = vec![m.entry()];
    for _ in 1..n {
        locs.push(m.fresh_location());
    }
    for _ in 0..rng.gen_range(0..=2 * n) {
        let a = locs[rng.gen_range(0..n)];
        let b = locs[rng.gen_range(0..n)];
        if rng.gen_bool(0.35) {
            m.add_epsilon(a, b);
        } else {
            m.add_transition(a, BlockLabel::new(ALPHABET[rng.gen_range(0..ALPHABET.len())]), b);
        }
    }
    for &l in &locs {
        if rng.gen_bool(0.25) {
            m.mark_exit(l);
        }
    }
    m
}

fn epsilon_closure(model: &ScriptModel, from: &BTreeSet<Loc>) -> BTreeSet<Loc> {
    let mut seen = from.clone();
    let mut queue: VecDeque<Loc> = from.iter().copied().collect();
    while let Some(x) = queue.pop_front() {
        for t in model.transitions() {
            if t.from == x && t.label.is_none() && seen.insert(t.to) {
                queue.push_back(t.to);
            }
        }
    }
    seen
}

/// Label words of length at most `depth` along paths from the entry, and the
/// subset of them that can end in an exit. ε-moves are taken silently.
pub fn languages(model: &ScriptModel, depth: usize) -> (BTreeSet<Vec<String>>, BTreeSet<Vec<String>>) {
    let mut prefixes = BTreeSet::new();
    let mut accepted = BTreeSet::new();
    let mut frontier: BTreeMap<Vec<String>, BTreeSet<Loc>> = BTreeMap::new();
    frontier.insert(Vec::new(), epsilon_closure(model, &BTreeSet::from([model.entry()])));
    for step in 0..=depth {
        let mut next: BTreeMap<Vec<String>, BTreeSet<Loc>> = BTreeMap::new();
        for (word, states) in &frontier {
            prefixes.insert(word.clone());
            if states.iter().any(|s| model.exits().contains(s)) {
                accepted.insert(word.clone());
            }
            if step == depth {
                continue;
            }
            for t in model.transitions() {
                if let Some(label) = &t.label {
                    if states.contains(&t.from) {
                        let mut w = word.clone();
                        w.push(label.key());
                        next.entry(w).or_default().insert(t.to);
                    }
                }
            }
        }
        frontier = next.into_iter().map(|(w, s)| (w, epsilon_closure(model, &s))).collect();
    }
    (prefixes, accepted)
}

/// Properties computed directly on a model that may contain ε-moves: a
/// labeled transition whose source the entry reaches, followed (through any
/// moves) by the source of another labeled transition.
pub fn epsilon_aware_props(model: &ScriptModel) -> BTreeSet<TemporalProperty> {
    let mut succ: HashMap<Loc, Vec<Loc>> = HashMap::new();
    for t in model.transitions() {
        succ.entry(t.from).or_default().push(t.to);
    }
    let reach = |start: Loc| {
        let mut seen = BTreeSet::from([start]);
        let mut stack = vec![start];
        while let Some(x) = stack.pop() {
            for &y in succ.get(&x).into_iter().flatten() {
                if seen.insert(y) {
                    stack.push(y);
                }
            }
        }
        seen
    };
    let live = reach(model.entry());
    let mut out = BTreeSet::new();
    for (from, first, to) in model.labeled() {
        if !live.contains(&from) {
            continue;
        }
        let after = reach(to);
        for (from2, second, _) in model.labeled() {
            if after.contains(&from2) {
                out.insert(TemporalProperty::new(first.clone(), second.clone()));
            }
        }
    }
    out
}

/// Pairs of labels that occur in order within some word of the language.
/// On acyclic or bounded structures this is exactly the property set.
pub fn ordered_pairs(words: &BTreeSet<Vec<String>>) -> BTreeSet<(String, String)> {
    let mut out = BTreeSet::new();
    for w in words {
        for i in 0..w.len() {
            for j in i + 1..w.len() {
                out.insert((w[i].clone(), w[j].clone()));
            }
        }
    }
    out
}

/// Label-preserving isomorphism of two small models, entry to entry and
/// exits to exits, by trying every bijection.
pub fn isomorphic(a: &ScriptModel, b: &ScriptModel) -> bool {
    let la: Vec<Loc> = a.locations().iter().copied().collect();
    let lb: Vec<Loc> = b.locations().iter().copied().collect();
    if la.len() != lb.len() || a.transitions().len() != b.transitions().len() || a.exits().len() != b.exits().len() {
        return false;
    }
    let target: BTreeSet<(Loc, Option<String>, Loc)> =
        b.transitions().iter().map(|t| (t.from, t.label.as_ref().map(|l| l.key()), t.to)).collect();
    let mut perm: Vec<usize> = (0..lb.len()).collect();
    permutations(&mut perm, 0, &mut |p| {
        let map: HashMap<Loc, Loc> = la.iter().copied().zip(p.iter().map(|&i| lb[i])).collect();
        map[&a.entry()] == b.entry()
            && a.exits().iter().all(|e| b.exits().contains(&map[e]))
            && a.transitions()
                .iter()
                .all(|t| target.contains(&(map[&t.from], t.label.as_ref().map(|l| l.key()), map[&t.to])))
    })
}

fn permutations(p: &mut Vec<usize>, k: usize, check: &mut impl FnMut(&[usize]) -> bool) -> bool {
    if k == p.len() {
        return check(p);
    }
    for i in k..p.len() {
        p.swap(k, i);
        if permutations(p, k + 1, check) {
            return true;
        }
        p.swap(k, i);
    }
    false
}
