//! Acceptance suite. Prints one `criterion N: PASS|FAIL|SKIP ...` line per
//! criterion and exits non-zero if any fails.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::process::Command;
use std::time::{Duration, Instant};

use actuate::config::{RunConfig, SwapSpec};
use actuate::contexts::{LocationMode, Specificity};
use actuate::run::{execute, RunOutput};
use common::*;
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestCaseError, TestRng, TestRunner};

const SEED: u64 = 1;
const SWAP_AT: usize = 200;

enum Verdict {
    Pass(String),
    Fail(String),
    Skip(String),
}

fn verdict(ok: bool, detail: String) -> Verdict {
    if ok {
        Verdict::Pass(detail)
    } else {
        Verdict::Fail(detail)
    }
}

/// Runs `check` on `cases` generated inputs from a fixed RNG seed.
fn cases<S: Strategy>(
    cases: u32,
    strategy: S,
    check: impl Fn(S::Value) -> Result<(), TestCaseError>,
) -> Result<(), String> {
    let config = Config { cases, failure_persistence: None, ..Config::default() };
    let mut runner = TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha));
    runner.run(&strategy, check).map_err(|e| e.to_string())
}

fn synthetic() -> RunConfig {
    RunConfig { synthetic: true, seed: SEED, ..RunConfig::default() }
}

fn run(cfg: &RunConfig) -> (RunOutput, Duration) {
    let started = Instant::now();
    let out = execute(cfg).expect("run");
    (out, started.elapsed())
}

fn proposal_oracle() -> Verdict {
    let started = Instant::now();
    let result = cases(1000, arb_proposal_case(), |(m, fr, pick, action, use_state)| {
        check_proposal(m, fr, pick, action, use_state)
    });
    let took = started.elapsed();
    match result {
        Ok(()) => verdict(took < Duration::from_secs(5), format!("1000 models, exact match, {took:.2?} (< 5 s)")),
        Err(e) => Verdict::Fail(e),
    }
}

fn entropy_oracle() -> Verdict {
    match cases(500, arb_cache_case(), |(bounds, raw)| check_entropy_and_gains(bounds, raw)) {
        Ok(()) => Verdict::Pass("500 caches, entropy and every gain within 1e-9".into()),
        Err(e) => Verdict::Fail(e),
    }
}

fn formulas() -> Verdict {
    let reward = cases(1000, (1e-6..(1.0 - 1e-6), 0.0..5.0f64), |(u, d)| check_reward(u, d));
    let knn = cases(1000, arb_knn_case(), |(m, k, c)| check_knn(m, k, c));
    match (reward, knn) {
        (Ok(()), Ok(())) => {
            Verdict::Pass("reward round trip within 1e-12; kNN within 1e-9 and contracting, 1000 cases each".into())
        }
        (r, k) => Verdict::Fail(format!("reward: {r:?}; knn: {k:?}")),
    }
}

fn convergence(base: &RunOutput, took: Duration) -> Verdict {
    let m = &base.metrics;
    verdict(
        m.requests >= 5500 && m.requests <= 6500 && m.fda >= 0.95 && took < Duration::from_secs(60),
        format!("{} requests, FDA {:.4} (>= 0.95), {took:.2?} (< 60 s)", m.requests, m.fda),
    )
}

fn swap_recovery() -> Verdict {
    let cfg = RunConfig {
        swap: Some(SwapSpec { a: "dining_light".into(), b: "doorway_light".into(), at: SWAP_AT }),
        ..synthetic()
    };
    let (out, _) = run(&cfg);
    let s = &out.metrics.sliding_fda;
    let before = s[SWAP_AT - 1];
    let Some(drop) = (SWAP_AT..SWAP_AT + 30).find(|&i| s[i] < 0.7) else {
        let low = s[SWAP_AT..SWAP_AT + 30].iter().cloned().fold(1.0, f64::min);
        return Verdict::Fail(format!("sliding FDA {before:.3} before the swap, lowest {low:.3} in 30 requests"));
    };
    let back = (drop..=SWAP_AT + 150).find(|&i| s[i] >= 0.9);
    verdict(
        back.is_some(),
        format!(
            "sliding FDA {before:.3} before, {:.3} at request {drop} (< 0.7), back to >= 0.9 at {}",
            s[drop],
            back.map_or("never".into(), |i| format!("request {i} (<= {})", SWAP_AT + 150))
        ),
    )
}

fn within_two(base: &RunOutput) -> Verdict {
    let w = base.metrics.within_two;
    verdict(w >= 0.98, format!("{:.4} satisfied within two proposals (>= 0.98)", w))
}

fn request_specificity() -> Verdict {
    let fda = |s| run(&RunConfig { specificity: Some(s), ..synthetic() }).0.metrics.fda;
    let (action, bare) = (fda(Specificity::Action), fda(Specificity::None));
    verdict(action > bare, format!("FDA with action {action:.4} vs bare {bare:.4}"))
}

fn negatives_200(out: &RunOutput) -> usize {
    out.episodes[..200].iter().map(|e| e.negatives).sum()
}

fn context_specificity(base: &RunOutput) -> Verdict {
    let categorical = run(&RunConfig { location_mode: Some(LocationMode::Categorical), ..synthetic() }).0;
    let (coord, cat) = (negatives_200(base), negatives_200(&categorical));
    verdict(coord < cat, format!("negatives in first 200: coordinate {coord} vs categorical {cat}"))
}

fn external_data() -> Verdict {
    let (Ok(log), Ok(map)) = (std::env::var("HH118_PATH"), std::env::var("HH118_SENSOR_MAP")) else {
        return Verdict::Skip("set HH118_PATH and HH118_SENSOR_MAP to run".into());
    };
    let dir = tempfile::tempdir().unwrap();
    let bin = env!("CARGO_BIN_EXE_actuate");
    let ingest = Command::new(bin)
        .args(["ingest", "--input", &log, "--sensor-map", &map, "--specificity", "none", "--out"])
        .arg(dir.path())
        .status()
        .unwrap();
    if !ingest.success() {
        return Verdict::Fail("ingest failed".into());
    }
    let out = dir.path().join("run");
    let replay = Command::new(bin)
        .args(["replay", "--trace"])
        .arg(dir.path().join("trace.jsonl"))
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    if !replay.success() {
        return Verdict::Fail("replay failed".into());
    }
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    let fda = summary["metrics"]["fda"].as_f64().unwrap();
    verdict((fda - 0.8235).abs() <= 0.10, format!("FDA {fda:.4} (0.8235 +/- 0.10)"))
}

fn latency() -> Verdict {
    let (out, _) = run(&RunConfig { pad_to: Some(33), ..synthetic() });
    let mean_ms = out.latency.mean_response_us / 1000.0;
    verdict(mean_ms < 10.0, format!("33 attributes, mean response {mean_ms:.3} ms (< 10 ms)"))
}

fn determinism(base: &RunOutput) -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("trace.jsonl");
    let generated =
        actuate::scenario::generate(&actuate::scenario::ScenarioConfig { days: 30, ..Default::default() }, SEED)
            .unwrap();
    std::fs::write(&trace, generated.to_bytes()).unwrap();
    let from_file = RunConfig { trace: Some(trace.clone()), seed: 7, ..RunConfig::default() };
    let same_file = run(&from_file).0.summary_json == run(&from_file).0.summary_json;
    let same_synthetic = run(&synthetic()).0.summary_json == base.summary_json;
    verdict(same_file && same_synthetic, format!("summary JSON identical: trace file {same_file}, synthetic {same_synthetic}"))
}

fn main() {
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let (base, took) = run(&synthetic());
    let criteria: Vec<(&str, Box<dyn FnOnce() -> Verdict + '_>)> = vec![
        ("proposal selection matches brute force", Box::new(proposal_oracle)),
        ("entropy and gain match recomputation", Box::new(entropy_oracle)),
        ("reward and kNN formulas", Box::new(formulas)),
        ("synthetic convergence", Box::new(|| convergence(&base, took))),
        ("recovery after a device swap", Box::new(swap_recovery)),
        ("satisfied within two proposals", Box::new(|| within_two(&base))),
        ("request specificity direction", Box::new(request_specificity)),
        ("context specificity direction", Box::new(|| context_specificity(&base))),
        ("external household log", Box::new(external_data)),
        ("latency with 33 attributes", Box::new(latency)),
        ("determinism", Box::new(|| determinism(&base))),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.into_iter().enumerate() {
        let (tag, detail) = match check() {
            Verdict::Pass(d) => ("PASS", d),
            Verdict::Fail(d) => {
                failed += 1;
                ("FAIL", d)
            }
            Verdict::Skip(d) => ("SKIP", d),
        };
        println!("criterion {:>2} {name}: {tag} ({detail})", i + 1);
    }
    if failed > 0 {
        eprintln!("{failed} criteria failed");
        std::process::exit(1);
    }
}
