use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use batchbo::evaluators::protocol::{read_proposals, write_results, ResultRow};
use batchbo::evaluators::{BuiltinEvaluator, Evaluator};
use batchbo::space::ParameterSpace;

const QUADRATIC_CONFIG: &str = r#"
seed = 5
doe = 6

[[space]]
name = "x1"
lower = 0.0
upper = 1.0

[[space]]
name = "x2"
lower = 0.0
upper = 1.0

[acquisition]
threshold = 1.0
q = 2
mc_samples = 256

[budget]
raw_samples = 64
restarts = 3
"#;

const FAST: [&str; 6] = ["--raw-samples", "64", "--restarts", "3", "--max-iters", "60"];

/// Runs the binary with `cwd` as working directory so stray writes show up.
fn batchbo(dir: &Path, cwd: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_batchbo"))
        .arg("--dir")
        .arg(dir)
        .args(args)
        .current_dir(cwd)
        .env_remove("BATCHBO_DIR")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn data_rows(path: &Path) -> usize {
    fs::read_to_string(path).unwrap().lines().count() - 1
}

fn answer(dir: &Path, proposals: &str, name: &str) -> std::path::PathBuf {
    let ev = BuiltinEvaluator::Quadratic;
    let space = ParameterSpace::unit_cube(2).unwrap();
    let rows: Vec<ResultRow> = read_proposals(&dir.join(proposals), &space)
        .unwrap()
        .into_iter()
        .map(|(id, x)| {
            let (k, v) = ev.evaluate(&x).unwrap();
            ResultRow { id, k, v }
        })
        .collect();
    let path = dir.join(name);
    write_results(&path, &rows).unwrap();
    path
}

#[test]
fn help_and_usage_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let out = batchbo(tmp.path(), tmp.path(), &["--help"]);
    assert_eq!(code(&out), 0);
    for sub in ["init", "propose", "ingest", "run", "report", "slices"] {
        assert!(stdout(&out).contains(sub), "{sub} missing from help");
    }
    assert_eq!(code(&batchbo(tmp.path(), tmp.path(), &["report", "--bogus"])), 2);
    assert_eq!(code(&batchbo(tmp.path(), tmp.path(), &["run", "--evaluator", "nope"])), 2);
    assert_eq!(code(&batchbo(tmp.path(), tmp.path(), &["run", "--evaluator", "proxy", "--doe", "1"])), 2);
}

#[test]
fn reference_schedule_run_emits_table_and_slices() {
    let dir = tempfile::tempdir().unwrap();
    let cwd = tempfile::tempdir().unwrap();
    let args = ["run", "--evaluator", "proxy", "--doe", "10", "--iters", "3", "--q", "5", "--seed", "7"];
    let out = batchbo(dir.path(), cwd.path(), &args);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).contains("It3"));
    assert_eq!(data_rows(&dir.path().join("table_cumulative.csv")), 4);
    assert_eq!(data_rows(&dir.path().join("table_batch.csv")), 4);
    for name in ["d_bottle", "d_bore", "h_neck"] {
        for part in ["mean", "std"] {
            let grid = dir.path().join(format!("slice_{name}_{part}.csv"));
            assert_eq!(data_rows(&grid), 101);
        }
    }
    assert_eq!(data_rows(&dir.path().join("slice_markers.csv")), 25);
    assert_eq!(fs::read_dir(cwd.path()).unwrap().count(), 0);

    let again = batchbo(dir.path(), cwd.path(), &args);
    assert_eq!(code(&again), 3);
    let mut forced = args.to_vec();
    forced.push("--force");
    let state_before = fs::read(dir.path().join("state.json")).unwrap();
    assert_eq!(code(&batchbo(dir.path(), cwd.path(), &forced)), 0);
    assert_eq!(fs::read(dir.path().join("state.json")).unwrap(), state_before);
}

#[test]
fn external_workflow() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("campaign.toml");
    fs::write(&cfg, QUADRATIC_CONFIG).unwrap();
    let cfg = cfg.to_str().unwrap();
    let run = |args: &[&str]| batchbo(dir.path(), dir.path(), args);

    assert_eq!(code(&run(&["init", "--config", cfg])), 0);
    assert_eq!(data_rows(&dir.path().join("proposals_iter0.csv")), 6);
    assert_eq!(code(&run(&["report"])), 3);
    assert_eq!(code(&run(&["propose"])), 3);

    let bad = answer(dir.path(), "proposals_iter0.csv", "bad.csv");
    let text = fs::read_to_string(&bad).unwrap().replacen("iter0_3", "iter0_9", 1);
    fs::write(&bad, text).unwrap();
    let before = fs::read(dir.path().join("state.json")).unwrap();
    assert_eq!(code(&run(&["ingest", bad.to_str().unwrap()])), 4);
    assert_eq!(fs::read(dir.path().join("state.json")).unwrap(), before);

    let doe = answer(dir.path(), "proposals_iter0.csv", "results0.csv");
    assert_eq!(code(&run(&["ingest", doe.to_str().unwrap()])), 0);
    assert_eq!(code(&run(&["ingest", doe.to_str().unwrap()])), 3);

    let report = run(&["report"]);
    assert_eq!(code(&report), 0);
    assert_eq!(data_rows(&dir.path().join("table_cumulative.csv")), 1);

    let mut propose = vec!["propose"];
    propose.extend(FAST);
    assert_eq!(code(&run(&propose)), 0);
    assert_eq!(data_rows(&dir.path().join("proposals_iter1.csv")), 2);
    let it1 = answer(dir.path(), "proposals_iter1.csv", "results1.csv");
    assert_eq!(code(&run(&["ingest", it1.to_str().unwrap()])), 0);
    assert_eq!(code(&run(&["report"])), 0);
    assert_eq!(data_rows(&dir.path().join("table_cumulative.csv")), 2);

    let slices = run(&["slices", "--resolution", "2"]);
    assert_eq!(code(&slices), 0);
    assert_eq!(data_rows(&dir.path().join("slice_x1_mean.csv")), 2);
}

#[test]
fn embedded_initial_design_reports_doe_row() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("campaign.toml");
    fs::write(&cfg, QUADRATIC_CONFIG).unwrap();
    let init = batchbo(
        dir.path(),
        dir.path(),
        &["init", "--config", cfg.to_str().unwrap(), "--evaluator", "quadratic"],
    );
    assert_eq!(code(&init), 0);
    let out = batchbo(dir.path(), dir.path(), &["report"]);
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).contains("DoE"));
    assert_eq!(data_rows(&dir.path().join("table_cumulative.csv")), 1);
}

#[test]
fn missing_and_corrupt_state() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&batchbo(dir.path(), dir.path(), &["report"])), 6);
    fs::write(dir.path().join("state.json"), "{\"version\": 1, \"space\": [").unwrap();
    assert_eq!(code(&batchbo(dir.path(), dir.path(), &["report"])), 7);
    fs::write(dir.path().join("state.json"), "{\"version\": 2}").unwrap();
    assert_eq!(code(&batchbo(dir.path(), dir.path(), &["report"])), 7);
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "doe = \"ten\"").unwrap();
    let out = batchbo(dir.path(), dir.path(), &["init", "--config", cfg.to_str().unwrap(), "--force"]);
    assert_eq!(code(&out), 7);
}

#[test]
fn directory_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let cwd = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_batchbo"))
        .args(["run", "--evaluator", "quadratic", "--doe", "4", "--iters", "1", "--q", "2"])
        .args(FAST)
        .current_dir(cwd.path())
        .env("BATCHBO_DIR", dir.path())
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("state.json").exists());
    assert_eq!(fs::read_dir(cwd.path()).unwrap().count(), 0);
}
