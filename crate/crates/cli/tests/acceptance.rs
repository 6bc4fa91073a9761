//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any fails.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use scratch_anomaly::anomaly::{detect_anomalies, find_violations, parameter_sweep};
use scratch_anomaly::corpus::{generate_corpus, MutationKind, MutationSpec};
use scratch_anomaly::ingest::{enumerate_scripts, load_dataset, load_project_bytes, RawProject};
use scratch_anomaly::miner::{mine_closed_patterns, support, MiningConfig, Pattern};
use scratch_anomaly::model::{eliminate_epsilon, extract_models};
use scratch_anomaly::props::{props, props_all, PropertySet, TemporalProperty};
use scratch_anomaly::ratio::Rational;
use scratch_anomaly::report::Analysis;
use scratch_anomaly_cli::{cmd_mine, MineFormat};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn ms(d: Duration) -> String {
    format!("{:.3} ms", d.as_secs_f64() * 1e3)
}

fn ac1_nine_properties() -> Outcome {
    let model = forever_if_model(MOVE);
    let start = Instant::now();
    let set = props(&model);
    let elapsed = start.elapsed();
    check(set.properties == nine_properties(), || format!("got {:?}", set.properties))?;
    check(elapsed < Duration::from_millis(1), || format!("took {}", ms(elapsed)))?;
    Ok(format!("9 properties, exact, in {}", ms(elapsed)))
}

fn ac2_goto_deviation() -> Outcome {
    let sets = vec![props(&forever_if_model(MOVE)), props(&forever_if_model(GOTO))];
    let pattern = Pattern { properties: nine_properties().into_iter().collect(), support: 1, supporters: vec![0] };
    let config = MiningConfig { min_support: 1, ..MiningConfig::default() };
    let violations = find_violations(&[pattern], &sets, &config);
    check(violations.len() == 1 && violations[0].script == 1, || format!("{violations:?}"))?;
    let deviation: BTreeSet<_> = violations[0].deviation.iter().cloned().collect();
    check(deviation == move_properties() && deviation.len() == 5, || format!("deviation {deviation:?}"))?;
    Ok("deviation is exactly the 5 move-steps properties".into())
}

fn ac3_support_one() -> Outcome {
    let sets = vec![props(&forever_if_model(MOVE)), props(&forever_if_model(GOTO))];
    let pattern: Vec<_> = nine_properties().into_iter().collect();
    let s = support(&pattern, &sets);
    check(s == 1, || format!("support {s}"))?;
    Ok("support 1 over the two scripts".into())
}

fn ac4_miner_vs_brute_force() -> Outcome {
    let start = Instant::now();
    let back: HashMap<TemporalProperty, u32> = (0..8).map(|i| (item(i), i)).collect();
    let mut families = 0;
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (tx, k) = random_transactions(&mut rng);
        let mined = mine_closed_patterns(&transactions_to_sets(&tx), k);
        let got: BTreeMap<BTreeSet<u32>, usize> =
            mined.iter().map(|p| (p.properties.iter().map(|q| back[q]).collect(), p.support)).collect();
        check(got.len() == mined.len(), || format!("seed {seed}: duplicate patterns"))?;
        let expected = brute_force_closed(&tx, k);
        check(got == expected, || format!("seed {seed}: mined {got:?} expected {expected:?}"))?;
        families += expected.len();
    }
    let elapsed = start.elapsed();
    check(elapsed < Duration::from_secs(10), || format!("took {elapsed:?}"))?;
    Ok(format!("100 instances, {families} closed sets, equal families in {}", ms(elapsed)))
}

fn ac5_epsilon_soundness() -> Outcome {
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = random_epsilon_model(&mut rng, 12);
        let e = eliminate_epsilon(&m);
        check(e.is_epsilon_free(), || format!("seed {seed}: ε-moves remain"))?;
        check(languages(&m, 6) == languages(&e, 6), || format!("seed {seed}: languages differ"))?;
        check(epsilon_aware_props(&m) == props(&e).properties, || format!("seed {seed}: props differ"))?;
    }
    Ok("100 models: depth-6 languages and props agree".into())
}

fn sets_of(dir: &Path) -> Vec<PropertySet> {
    let ds = load_dataset(dir).expect("corpus loads");
    props_all(&extract_models(&ds.projects))
}

fn ac6_end_to_end() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    generate_corpus(&load_fixture("moving_sprite.json"), 30, &[goto_mutant()], dir.path()).map_err(|e| e.to_string())?;
    let start = Instant::now();
    let ds = load_dataset(dir.path()).map_err(|e| e.to_string())?;
    let analysis = Analysis::run(&ds.projects, &MiningConfig::default());
    let elapsed = start.elapsed();
    let anomalies = &analysis.detection.anomalies;
    check(anomalies.len() == 1, || format!("{} anomalies", anomalies.len()))?;
    let a = &anomalies[0];
    check(analysis.source_of(a).project_id == "mutant_0000_wrong-block", || format!("flagged {}", analysis.source_of(a)))?;
    check(a.confidence == Rational::new(30, 31), || format!("confidence {}", a.confidence))?;
    let deviation: BTreeSet<_> = a.violation.deviation.iter().cloned().collect();
    check(deviation == move_properties(), || format!("deviation {deviation:?}"))?;
    check(elapsed < Duration::from_secs(1), || format!("took {elapsed:?}"))?;
    Ok(format!("one anomaly, confidence 30/31, 5-property deviation, in {}", ms(elapsed)))
}

fn richer_mutants() -> Vec<MutationSpec> {
    vec![
        goto_mutant(),
        MutationSpec::new(MutationKind::MissingBlock, IF),
        MutationSpec::new(MutationKind::WrongOrder, FOREVER),
        MutationSpec::new(MutationKind::ExtraBlock, MOVE).with_replacement("motion_turnright"),
        MutationSpec::new(MutationKind::ExtraBlock, WGF).with_replacement("looks_hide"),
        MutationSpec::new(MutationKind::WrongBlock, FOREVER).with_replacement("control_repeat"),
        MutationSpec::new(MutationKind::MissingBlock, MOVE),
        goto_mutant(),
    ]
}

fn ac7_empty_projects() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    generate_corpus(&load_fixture("moving_sprite.json"), 30, &richer_mutants(), dir.path()).map_err(|e| e.to_string())?;
    let mut checked = 0;
    for config in [
        MiningConfig::default(),
        MiningConfig { min_support: 1, min_pattern_size: 1, min_confidence: Rational::new(1, 10), ..MiningConfig::default() },
    ] {
        let before = sets_of(dir.path());
        let n = before.len();
        let base = detect_anomalies(&before, &config);
        let padded_dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        for entry in fs::read_dir(dir.path()).map_err(|e| e.to_string())? {
            let path = entry.map_err(|e| e.to_string())?.path();
            fs::copy(&path, padded_dir.path().join(path.file_name().unwrap())).map_err(|e| e.to_string())?;
        }
        for i in 0..40 {
            fs::copy(fixture("lone_hat.json"), padded_dir.path().join(format!("empty_{i:02}.json"))).map_err(|e| e.to_string())?;
        }
        let after_sets = sets_of(padded_dir.path());
        let after = detect_anomalies(&after_sets, &config);
        let empty: BTreeSet<usize> =
            (0..after_sets.len()).filter(|&i| after_sets[i].source.project_id.starts_with("empty_")).collect();
        check(empty.len() == 40, || format!("{} empty scripts", empty.len()))?;
        check(after.anomalies.iter().all(|a| !empty.contains(&a.violation.script)), || "an empty project was flagged".into())?;
        let summary = |sets: &[PropertySet], d: &scratch_anomaly::anomaly::Detection| -> Vec<(String, usize, Vec<TemporalProperty>, Rational)> {
            d.anomalies
                .iter()
                .map(|a| (sets[a.violation.script].source.to_string(), a.violation.support, a.violation.deviation.clone(), a.confidence))
                .collect()
        };
        check(summary(&before, &base) == summary(&after_sets, &after), || "anomalies changed after padding".into())?;
        check(n + 40 == after_sets.len(), || "unexpected script count".into())?;
        checked += base.anomalies.len();
    }
    Ok(format!("40 lone-hat projects: none flagged, {checked} anomalies unchanged"))
}

fn ac8_monotone_sweep() -> Outcome {
    let supports = [1, 5, 10, 15, 20];
    let confidences: Vec<Rational> = (1..=9).map(|i| Rational::new(i, 10)).collect();
    let mut grids = Vec::new();
    for mutants in [vec![goto_mutant()], richer_mutants()] {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        generate_corpus(&load_fixture("moving_sprite.json"), 30, &mutants, dir.path()).map_err(|e| e.to_string())?;
        let cells = parameter_sweep(&sets_of(dir.path()), &supports, &confidences, &MiningConfig::default());
        check(cells.len() == 45, || format!("{} cells", cells.len()))?;
        let at = |i: usize, j: usize| cells[i * confidences.len() + j].anomalies;
        for i in 0..supports.len() {
            for j in 0..confidences.len() {
                check(i == 0 || at(i, j) <= at(i - 1, j), || format!("support not monotone at ({i},{j})"))?;
                check(j == 0 || at(i, j) <= at(i, j - 1), || format!("confidence not monotone at ({i},{j})"))?;
            }
        }
        grids.push(format!("{}..{}", at(supports.len() - 1, confidences.len() - 1), at(0, 0)));
    }
    Ok(format!("5x9 grids non-increasing (count ranges {})", grids.join(", ")))
}

fn ac9_determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    generate_corpus(&load_fixture("moving_sprite.json"), 30, &richer_mutants(), dir.path()).map_err(|e| e.to_string())?;
    fs::copy(fixture("mixed.json"), dir.path().join("mixed.json")).map_err(|e| e.to_string())?;
    let config = MiningConfig { min_support: 5, min_confidence: Rational::new(1, 2), ..MiningConfig::default() };
    let mut outputs = Vec::new();
    for threads in [1, 4, 4] {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().map_err(|e| e.to_string())?;
        outputs.push(pool.install(|| cmd_mine(dir.path(), &config, 10, MineFormat::Json)).map_err(|e| e.to_string())?);
    }
    check(outputs.windows(2).all(|w| w[0] == w[1]), || "structured reports differ".into())?;
    let anomalies = serde_json::from_str::<serde_json::Value>(&outputs[0]).map_err(|e| e.to_string())?["anomalies"]
        .as_array()
        .map_or(0, Vec::len);
    check(anomalies > 1, || format!("only {anomalies} anomalies; corpus too simple to test ordering"))?;
    Ok(format!("3 runs (1, 4, 4 threads), {} bytes, {anomalies} anomalies, byte-identical", outputs[0].len()))
}

/// A project with one sprite holding `scripts` scripts of varied shape.
fn busy_project(scripts: usize) -> RawProject {
    let actions = ["motion_movesteps", "motion_turnright", "looks_say", "sound_play", "pen_penDown", "looks_hide"];
    let mut blocks = serde_json::Map::new();
    for s in 0..scripts {
        let id = |n: &str| format!("s{s}_{n}");
        let a = |k: usize| actions[(s + k) % actions.len()];
        let rows = [
            ("hat", "event_whenflagclicked", Some("rep"), json!({})),
            ("rep", "control_repeat", Some("loop"), json!({"TIMES": [1, [6, "10"]], "SUBSTACK": [2, id("a1")]})),
            ("a1", a(0), Some("ite"), json!({})),
            ("ite", "control_if_else", None, json!({"SUBSTACK": [2, id("a2")], "SUBSTACK2": [2, id("a3")]})),
            ("a2", a(1), None, json!({})),
            ("a3", a(2), Some("a4"), json!({})),
            ("a4", a(3), None, json!({})),
            ("loop", "control_forever", None, json!({"SUBSTACK": [2, id("cond")]})),
            ("cond", "control_if", Some("a5"), json!({"SUBSTACK": [2, id("a6")]})),
            ("a5", a(4), None, json!({})),
            ("a6", a(5), None, json!({})),
        ];
        for (i, (name, opcode, next, inputs)) in rows.iter().enumerate() {
            blocks.insert(
                id(name),
                json!({"opcode": opcode, "next": next.map(id), "inputs": inputs, "fields": {}, "shadow": false,
                       "topLevel": i == 0, "x": 0, "y": 100 * s}),
            );
        }
    }
    let project = json!({"targets": [{"isStage": true, "name": "Stage", "blocks": {}},
                                     {"isStage": false, "name": "Busy", "blocks": blocks}]});
    load_project_bytes(project.to_string().as_bytes(), "busy.json".as_ref(), "busy".into()).expect("valid project")
}

fn ac10_throughput() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let reference = busy_project(10);
    let mutants: Vec<MutationSpec> = (0..20)
        .map(|seed| MutationSpec { seed, ..MutationSpec::new(MutationKind::MissingBlock, "looks_say") })
        .collect();
    generate_corpus(&reference, 280, &mutants, dir.path()).map_err(|e| e.to_string())?;
    let ds = load_dataset(dir.path()).map_err(|e| e.to_string())?;
    let scripts: usize = ds.projects.iter().map(|p| enumerate_scripts(p).len()).sum();
    let start = Instant::now();
    let models = extract_models(&ds.projects);
    let elapsed = start.elapsed();
    check(ds.projects.len() == 300 && models.len() == scripts, || format!("{} projects, {} models", ds.projects.len(), models.len()))?;
    let limit = Duration::from_secs(2);
    check(elapsed < 2 * limit, || format!("took {elapsed:?}, above the x2 tolerance"))?;
    let note = if elapsed < limit { "" } else { " (within x2 tolerance)" };
    Ok(format!("300 projects, {} models extracted in {}{note}", models.len(), ms(elapsed)))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("AC1 nine-property oracle", ac1_nine_properties),
        ("AC2 deviation oracle", ac2_goto_deviation),
        ("AC3 support example", ac3_support_one),
        ("AC4 miner vs brute force", ac4_miner_vs_brute_force),
        ("AC5 epsilon elimination", ac5_epsilon_soundness),
        ("AC6 end-to-end classroom", ac6_end_to_end),
        ("AC7 empty projects", ac7_empty_projects),
        ("AC8 monotone sweep", ac8_monotone_sweep),
        ("AC9 determinism", ac9_determinism),
        ("AC10 extraction throughput", ac10_throughput),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        match run() {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL {name}: {why}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
