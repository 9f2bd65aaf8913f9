use std::path::Path;
use std::process::{Command, Output};

fn teamq(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_teamq")).args(args).output().expect("spawn teamq")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn names(dir: &Path) -> Vec<String> {
    let mut v: Vec<String> =
        std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().file_name().to_string_lossy().into_owned()).collect();
    v.sort();
    v
}

const SMALL: &str = r#"
id = "small"
seeds = [1, 2]
epochs = 40
eval_every = 10
eval_games = 5
[env]
name = "matrix"
[[algorithms]]
algorithm = "ltql"
step_size = 0.1
gamma = 0.5
[[algorithms]]
algorithm = "iql"
step_size = 0.1
gamma = 0.5
"#;

#[test]
fn train_exp1_writes_every_run_and_aggregate() {
    let dir = tempfile::tempdir().unwrap();
    let o = teamq(&["train", "--config", "exp1", "--out", dir.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let files = names(dir.path());
    let count = |f: &dyn Fn(&str) -> bool| files.iter().filter(|n| f(n)).count();
    assert_eq!(count(&|n| n.ends_with("_aggregate.csv")), 3);
    assert_eq!(count(&|n| n.ends_with("_tables.json")), 60);
    assert_eq!(count(&|n| n.contains("_seed") && n.ends_with(".csv")), 60);
    for alg in ["ltql", "iql", "distq"] {
        for seed in 0..20 {
            assert!(files.contains(&format!("{alg}_seed{seed}.csv")), "{alg} {seed}");
        }
    }
    let csv = std::fs::read_to_string(dir.path().join("ltql_seed0.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("epoch,avg_test_return,win_rate"));
    assert_eq!(csv.lines().count(), 1 + 5000 / 50);
    let agg = std::fs::read_to_string(dir.path().join("iql_aggregate.csv")).unwrap();
    assert!(agg.starts_with("epoch,avg_test_return_mean,"));
}

#[test]
fn train_then_eval_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("small.toml");
    std::fs::write(&cfg, SMALL).unwrap();
    let out = dir.path().join("out");
    let o = teamq(&["train", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(names(&out).len(), 2 * 2 * 2 + 2);

    let tables = out.join("ltql_seed1_tables.json");
    let o = teamq(&[
        "eval",
        "--config",
        cfg.to_str().unwrap(),
        "--tables",
        tables.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("avg_test_return"));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("eval.json")).unwrap()).unwrap();
    assert!(report["win_rate"].as_f64().unwrap() <= 1.0);
}

#[test]
fn config_errors_name_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, SMALL.replace("name = \"matrix\"", "")).unwrap();
    let o = teamq(&["train", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("env") && err.contains("name"), "{err}");
}

#[test]
fn cowboy_bull_has_no_tabular_form() {
    let o = teamq(&["dp-solve", "cowboy-bull"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).to_lowercase().contains("unsupported"), "{}", stderr(&o));
}

#[test]
fn dp_solve_writes_its_reports() {
    let dir = tempfile::tempdir().unwrap();
    let o = teamq(&["dp-solve", "fig1a", "--out", dir.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(names(dir.path()), ["joint_q.json", "qstar_0.json", "qstar_1.json", "report.json"]);
}

#[test]
fn dp_verify_passes_on_fig1a_and_is_reproducible() {
    let args = ["dp-verify", "fig1a", "--n", "100", "--trials", "20", "--seed", "3"];
    let a = teamq(&args);
    assert_eq!(a.status.code(), Some(0), "{}{}", stdout(&a), stderr(&a));
    assert!(stdout(&a).trim_end().ends_with("PASS"));
    assert_eq!(a.stdout, teamq(&args).stdout);
}

#[test]
fn beta_check_exit_codes() {
    let o = teamq(&["dp-verify", "--beta-check", "12"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let o = teamq(&["dp-verify", "--beta-check", "12", "--tol=-1"]);
    assert_eq!(o.status.code(), Some(1), "{}", stdout(&o));
    let o = teamq(&["dp-verify", "--beta-check", "40"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn bounds_table_broadcasts_and_rejects_bad_input() {
    let o = teamq(&[
        "bounds",
        "--delta1",
        "0.1,0.01",
        "--delta2",
        "0.05",
        "--p",
        "0.6",
        "--gamma",
        "0.9",
        "--q-upper",
        "10",
        "--min-max",
        "1",
        "--max-gap",
        "0.5",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert_eq!(text.lines().count(), 3, "{text}");
    let o = teamq(&[
        "bounds",
        "--delta1",
        "0.1",
        "--delta2",
        "0.05",
        "--p",
        "1.5",
        "--gamma",
        "0.9",
        "--q-upper",
        "10",
        "--min-max",
        "1",
        "--max-gap",
        "0.5",
    ]);
    assert_eq!(o.status.code(), Some(2));
}
