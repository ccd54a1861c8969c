mod common;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use usemoc::bench::{
    self, benchmark, compare_dirs, evaluate_benchmark, read_checkpoint, read_history, total_capacitance,
    Algorithm, BenchmarkOptions, ExperimentConfig, HarnessError, BENCHMARKS,
};
use usemoc::engine::{EngineError, EvaluationError};
use usemoc::pareto::Gain;
use usemoc::Provenance;

fn small(problem: &str, algorithm: Algorithm, budget: usize, seed: u64) -> ExperimentConfig {
    let mut c = ExperimentConfig::new(problem, algorithm, budget, seed);
    c.n_init = Some(6);
    c.nsga_population = 20;
    c.nsga_generations = 15;
    c.gp_restarts = 2;
    c
}

fn external(script: &Path, budget: usize, timeout: f64) -> ExperimentConfig {
    let mut c = small("external", Algorithm::UsemocLcb, budget, 5);
    c.evaluator_command = Some(vec![common::python(), script.display().to_string()]);
    c.evaluator_timeout_secs = timeout;
    c.external_lower = Some(vec![0.0, 0.0]);
    c.external_upper = Some(vec![1.0, 1.0]);
    c.external_objectives = Some(vec!["f1".into(), "f2".into()]);
    c.external_constraints = 1;
    c.n_init = Some(5);
    c
}

fn line_count(path: &Path) -> usize {
    fs::read_to_string(path).map(|s| s.lines().count()).unwrap_or(0)
}

#[test]
fn echo_evaluator_round_trips_every_value() {
    let dir = tempfile::tempdir().unwrap();
    let script = common::python_script(dir.path(), "echo.py", common::ECHO_EVALUATOR);
    let out = dir.path().join("run");
    let summary = bench::run_experiment(&external(&script, 12, 30.0), &out).unwrap();
    assert_eq!(summary.evaluations, 12);
    let log = read_history(&out.join("history.jsonl")).unwrap();
    assert_eq!(log.lines.len(), 12);
    for (i, line) in log.lines.iter().enumerate() {
        let x = &line.record.x;
        assert_eq!(line.index, i);
        assert_eq!(line.record.y, vec![0.0 + x[0] + x[1], 0.0 + x[0] * x[0] + x[1] * x[1]]);
        assert_eq!(line.record.c, vec![x[0] - 0.5]);
        assert_eq!(line.record.feasible, x[0] <= 0.5);
    }
}

#[test]
fn malformed_reply_stops_the_run_with_a_protocol_error() {
    let dir = tempfile::tempdir().unwrap();
    let script = common::python_script(dir.path(), "bad.py", &common::malformed_after(4));
    let out = dir.path().join("run");
    let err = bench::run_experiment(&external(&script, 10, 30.0), &out).unwrap_err();
    assert!(
        matches!(
            &err,
            HarnessError::Engine(EngineError::Evaluation { source: EvaluationError::Protocol { .. }, .. })
        ),
        "{err}"
    );
    let log = read_history(&out.join("history.jsonl")).unwrap();
    assert_eq!(log.lines.len(), 4);
    assert!(!log.dropped_partial);
    assert_eq!(read_checkpoint(&out).unwrap().evaluations, 4);
}

#[test]
fn silent_evaluator_times_out() {
    let dir = tempfile::tempdir().unwrap();
    let script = common::python_script(dir.path(), "slow.py", &common::silent_after(3));
    let out = dir.path().join("run");
    let started = Instant::now();
    let err = bench::run_experiment(&external(&script, 10, 1.0), &out).unwrap_err();
    assert!(started.elapsed() < Duration::from_secs(20));
    assert!(
        matches!(
            &err,
            HarnessError::Engine(EngineError::Evaluation { source: EvaluationError::Timeout { .. }, .. })
        ),
        "{err}"
    );
    let log = read_history(&out.join("history.jsonl")).unwrap();
    assert_eq!(log.lines.len(), 3);
    assert!(!log.dropped_partial);
}

#[test]
fn run_writes_history_curve_checkpoint_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("bnh");
    let summary = bench::run_experiment(&small("bnh", Algorithm::RandomSearch, 30, 2), &out).unwrap();
    assert_eq!(line_count(&out.join("history.jsonl")), 31);
    let curve = fs::read_to_string(out.join("phv_curve.csv")).unwrap();
    let rows: Vec<&str> = curve.lines().collect();
    assert_eq!(rows[0], "evaluation_index,phv");
    assert_eq!(rows.len(), 31);
    assert!(rows[1].starts_with("1,"));
    let values: Vec<f64> = rows[1..].iter().map(|r| r.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert!(values.windows(2).all(|w| w[1] >= w[0]));
    assert_eq!(summary.final_phv, values.last().copied());
    assert!(out.join("summary.json").exists() && out.join("config.toml").exists());
    assert_eq!(bench::summarize(&out).unwrap().pareto_set, summary.pareto_set);
    let log = read_history(&out.join("history.jsonl")).unwrap();
    assert_eq!(log.header.schema, "usemoc-history");
    assert!(log.lines.iter().all(|l| l.record.provenance == Provenance::Random));
    let b = benchmark("bnh", &BenchmarkOptions::default()).unwrap();
    assert!(log.lines.iter().all(|l| b.bounds.contains(&l.record.x)));
}

#[test]
fn identical_configs_write_identical_histories() {
    let dir = tempfile::tempdir().unwrap();
    for algorithm in [Algorithm::UsemocEi, Algorithm::Nsga2Direct] {
        let config = small("tnk", algorithm, 16, 4);
        let (a, b) = (dir.path().join(format!("{algorithm}-a")), dir.path().join(format!("{algorithm}-b")));
        bench::run_experiment(&config, &a).unwrap();
        bench::run_experiment(&config, &b).unwrap();
        assert_eq!(
            fs::read(a.join("history.jsonl")).unwrap(),
            fs::read(b.join("history.jsonl")).unwrap()
        );
    }
}

fn kill_after(config_path: &Path, out: &Path, lines: usize) {
    let mut child = Command::new(env!("CARGO_BIN_EXE_usemoc"))
        .args(["run", "--config"])
        .arg(config_path)
        .arg("--out")
        .arg(out)
        .spawn()
        .unwrap();
    let history = out.join("history.jsonl");
    let deadline = Instant::now() + Duration::from_secs(120);
    while line_count(&history) < lines + 1 && Instant::now() < deadline {
        if child.try_wait().unwrap().is_some() {
            break;
        }
        std::thread::sleep(Duration::from_millis(2));
    }
    let _ = child.kill();
    child.wait().unwrap();
}

#[test]
fn killed_run_resumes_to_the_uninterrupted_result() {
    let dir = tempfile::tempdir().unwrap();
    let config = small("bnh", Algorithm::UsemocLcb, 24, 6);
    let config_path = dir.path().join("bnh.toml");
    fs::write(&config_path, config.to_toml()).unwrap();
    let reference = dir.path().join("reference");
    bench::run_experiment(&config, &reference).unwrap();

    let out = dir.path().join("killed");
    kill_after(&config_path, &out, 10);
    let partial = read_history(&out.join("history.jsonl")).unwrap().lines.len();
    assert!(partial < 24, "the run finished before it could be interrupted");
    let mut file = fs::OpenOptions::new().append(true).open(out.join("history.jsonl")).unwrap();
    std::io::Write::write_all(&mut file, b"{\"index\": 99, \"iter").unwrap();
    drop(file);

    let status = Command::new(env!("CARGO_BIN_EXE_usemoc"))
        .args(["resume", "--out"])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    assert_eq!(
        fs::read(out.join("history.jsonl")).unwrap(),
        fs::read(reference.join("history.jsonl")).unwrap()
    );
    assert_eq!(
        fs::read_to_string(out.join("phv_curve.csv")).unwrap(),
        fs::read_to_string(reference.join("phv_curve.csv")).unwrap()
    );
}

#[test]
fn changed_config_is_refused_with_a_diff() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let config = small("srn", Algorithm::RandomSearch, 10, 1);
    bench::run_experiment(&config, &out).unwrap();
    let mut changed = config.clone();
    changed.budget = 12;
    match bench::run_experiment(&changed, &out).unwrap_err() {
        HarnessError::ConfigMismatch { diff } => assert_eq!(diff, vec!["budget: 10 -> 12".to_string()]),
        other => panic!("unexpected error {other}"),
    }
    let summary = bench::run_experiment(&config, &out).unwrap();
    assert_eq!(summary.evaluations, 10);
}

#[test]
fn history_without_checkpoint_is_not_overwritten() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let config = small("srn", Algorithm::RandomSearch, 10, 1);
    bench::run_experiment(&config, &out).unwrap();
    fs::remove_file(out.join("checkpoint.json")).unwrap();
    let before = fs::read(out.join("history.jsonl")).unwrap();
    assert!(matches!(bench::run_experiment(&config, &out), Err(HarnessError::Config(_))));
    assert_eq!(fs::read(out.join("history.jsonl")).unwrap(), before);
}

#[test]
fn direct_nsga_respects_the_budget() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let mut config = small("bnh", Algorithm::Nsga2Direct, 30, 3);
    config.direct_population = 8;
    let summary = bench::run_experiment(&config, &out).unwrap();
    assert_eq!(summary.evaluations, 30);
    let log = read_history(&out.join("history.jsonl")).unwrap();
    assert!(log.lines.iter().all(|l| l.record.provenance == Provenance::Nsga2));
    assert_eq!(log.lines.last().unwrap().record.iteration, 29 / 8);
}

#[test]
fn comparing_a_run_with_its_copy_gives_zero_gain() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    bench::run_experiment(&small("bnh", Algorithm::RandomSearch, 20, 8), &a).unwrap();
    let b = dir.path().join("b");
    fs::create_dir(&b).unwrap();
    for entry in fs::read_dir(&a).unwrap() {
        let path: PathBuf = entry.unwrap().path();
        fs::copy(&path, b.join(path.file_name().unwrap())).unwrap();
    }
    let report = compare_dirs(&[a.clone(), b.clone()]).unwrap();
    assert!(report.gains.iter().all(|g| g.gain == Gain::Percent(0.0)));
    let save = dir.path().join("cmp");
    report.save(&save).unwrap();
    let gains = fs::read_to_string(save.join("gains.csv")).unwrap();
    assert!(gains.starts_with("target,baseline,gain_percent\n"));

    let other = dir.path().join("tnk");
    bench::run_experiment(&small("tnk", Algorithm::RandomSearch, 10, 8), &other).unwrap();
    assert!(matches!(compare_dirs(&[a, other]), Err(HarnessError::Incompatible(_))));
}

#[test]
fn benchmarks_return_finite_values_inside_the_box() {
    for name in BENCHMARKS {
        let b = benchmark(name, &BenchmarkOptions::default()).unwrap();
        let mid: Vec<f64> = (0..b.bounds.dim()).map(|i| 0.5 * (b.bounds.lower()[i] + b.bounds.upper()[i])).collect();
        let (y, c) = evaluate_benchmark(name, &mid).unwrap();
        assert_eq!(y.len(), b.objectives.len());
        assert!(y.iter().chain(&c).all(|v| v.is_finite()));
        assert!(b.evaluate(&vec![f64::MAX; b.bounds.dim()]).is_err());
    }
    assert!(matches!(
        benchmark("zdt1", &BenchmarkOptions::default()),
        Err(HarnessError::UnknownProblem(_))
    ));
}

#[test]
fn bnh_reference_values() {
    let (y, c) = evaluate_benchmark("bnh", &[1.0, 1.0]).unwrap();
    assert_eq!(y, vec![8.0, 32.0]);
    assert_eq!(c, vec![(1.0f64 - 5.0).powi(2) + 1.0 - 25.0, 7.7 - ((1.0f64 - 8.0).powi(2) + (1.0f64 + 3.0).powi(2))]);
}

#[test]
fn mock_vr_band_is_a_whitebox_constraint_on_total_capacitance() {
    let b = benchmark("mock-vr", &BenchmarkOptions { vr_band_epsilon: 2.0 }).unwrap();
    assert_eq!(b.bounds.dim(), 32);
    assert!(b.reference_point.is_none());
    let spec = b.problem_spec(40, Some(20)).unwrap();
    let mut rng = usemoc::seeding::stream(1, "vr-band", &[]);
    for _ in 0..50 {
        let x = usemoc::engine::uniform(&b.bounds, &mut rng);
        let obs = b.evaluate(&x).unwrap();
        let g = spec.constraint_values(&x, &obs);
        assert_eq!(g[0], (total_capacitance(&x) - 20.0).abs() - 2.0);
    }
}
