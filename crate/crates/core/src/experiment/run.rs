use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use crate::envs::{ButtonGridEnv, MatrixEnv, TabularEnv};
use crate::error::{Error, Result};
use crate::learners::{evaluate_greedy, train, Algorithm, EvalRow, EvalSummary, QTables, RunRecord, TrainConfig};

use super::config::{EnvSpec, ExperimentConfig};

pub const CSV_HEADER: &str = "epoch,avg_test_return,win_rate";
pub const AGGREGATE_HEADER: &str =
    "epoch,avg_test_return_mean,avg_test_return_min,avg_test_return_max,win_rate_mean,win_rate_min,win_rate_max";

#[allow(clippy::large_enum_variant)]
#[derive(Clone)]
enum TabularInstance {
    Matrix(MatrixEnv),
    Button(ButtonGridEnv),
}

fn instantiate(spec: &EnvSpec) -> Result<TabularInstance> {
    match spec {
        EnvSpec::Matrix(m) => Ok(TabularInstance::Matrix(MatrixEnv::new(m.game()?))),
        EnvSpec::ButtonGrid(b) => Ok(TabularInstance::Button(ButtonGridEnv::new(*b, 0))),
        EnvSpec::CowboyBull(_) => Err(Error::Unsupported(
            "tabular learners need a finite observation space; cowboy-bull is continuous".into(),
        )),
    }
}

fn with_env<T>(spec: &EnvSpec, f: impl Fn(&dyn Dispatch) -> Result<T>) -> Result<T> {
    match instantiate(spec)? {
        TabularInstance::Matrix(e) => f(&e),
        TabularInstance::Button(e) => f(&e),
    }
}

/// Object-safe access to the generic training and evaluation entry points.
trait Dispatch: Sync {
    fn train(&self, cfg: &TrainConfig, seed: u64) -> Result<RunRecord>;
    fn evaluate(&self, tables: &QTables, games: usize, gamma: f64, seed: u64) -> Result<EvalSummary>;
}

impl<E: TabularEnv + Clone + Sync> Dispatch for E {
    fn train(&self, cfg: &TrainConfig, seed: u64) -> Result<RunRecord> {
        train(self, cfg, seed)
    }

    fn evaluate(&self, tables: &QTables, games: usize, gamma: f64, seed: u64) -> Result<EvalSummary> {
        evaluate_greedy(self, tables, games, gamma, seed)
    }
}

/// Every (algorithm, seed) pair, in config order. Runs execute in parallel.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<RunRecord>> {
    cfg.validate()?;
    let jobs: Vec<(TrainConfig, u64)> = cfg
        .algorithms
        .iter()
        .flat_map(|learner| {
            let tc = TrainConfig {
                learner: learner.clone(),
                epochs: cfg.epochs,
                eval_every: cfg.eval_every,
                eval_games: cfg.eval_games,
                track_greedy: cfg.track_greedy,
            };
            cfg.seeds.iter().map(move |&s| (tc.clone(), s))
        })
        .collect();
    with_env(&cfg.env, |env| jobs.par_iter().map(|(tc, seed)| env.train(tc, *seed)).collect())
}

/// Greedy test return of stored tables on the configured environment.
pub fn evaluate_tables(cfg: &ExperimentConfig, tables: &QTables, gamma: f64, seed: u64) -> Result<EvalSummary> {
    with_env(&cfg.env, |env| env.evaluate(tables, cfg.eval_games, gamma, seed))
}

pub fn rows_csv(rows: &[EvalRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        writeln!(out, "{},{},{}", r.epoch, r.avg_test_return, r.win_rate).unwrap();
    }
    out
}

/// Per-epoch mean/min/max across runs that share an evaluation schedule.
pub fn aggregate_csv(runs: &[&RunRecord]) -> Result<String> {
    let first = runs.first().ok_or_else(|| Error::InvalidInput("nothing to aggregate".into()))?;
    let mut out = String::from(AGGREGATE_HEADER);
    out.push('\n');
    for (i, row) in first.rows.iter().enumerate() {
        let mut returns = Vec::with_capacity(runs.len());
        let mut wins = Vec::with_capacity(runs.len());
        for r in runs {
            let other = r
                .rows
                .get(i)
                .filter(|o| o.epoch == row.epoch)
                .ok_or_else(|| Error::InvalidInput("runs have different evaluation schedules".into()))?;
            returns.push(other.avg_test_return);
            wins.push(other.win_rate);
        }
        let (rm, rlo, rhi) = stats(&returns);
        let (wm, wlo, whi) = stats(&wins);
        writeln!(out, "{},{rm},{rlo},{rhi},{wm},{wlo},{whi}", row.epoch).unwrap();
    }
    Ok(out)
}

fn stats(xs: &[f64]) -> (f64, f64, f64) {
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (mean, lo, hi)
}

#[derive(Serialize)]
struct TablesFile<'a> {
    algorithm: Algorithm,
    seed: u64,
    updates: u64,
    q: &'a QTables,
    #[serde(skip_serializing_if = "Option::is_none")]
    q_u: Option<&'a QTables>,
}

pub fn run_stem(algorithm: Algorithm, seed: u64) -> String {
    format!("{algorithm}_seed{seed}")
}

/// Writes `<alg>_seed<s>.csv`, `<alg>_seed<s>_tables.json` per run and
/// `<alg>_aggregate.csv` per algorithm. Returns the written paths.
pub fn write_outputs(dir: &Path, cfg: &ExperimentConfig, runs: &[RunRecord]) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let mut put = |name: String, body: String| -> Result<()> {
        let path = dir.join(name);
        fs::write(&path, body)?;
        written.push(path);
        Ok(())
    };
    for r in runs {
        let stem = run_stem(r.algorithm, r.seed);
        put(format!("{stem}.csv"), rows_csv(&r.rows))?;
        let tables = TablesFile {
            algorithm: r.algorithm,
            seed: r.seed,
            updates: r.updates,
            q: &r.final_q,
            q_u: r.final_q_u.as_ref(),
        };
        put(format!("{stem}_tables.json"), serde_json::to_string_pretty(&tables)? + "\n")?;
    }
    for learner in &cfg.algorithms {
        let group: Vec<&RunRecord> = runs.iter().filter(|r| r.algorithm == learner.algorithm).collect();
        if !group.is_empty() {
            put(format!("{}_aggregate.csv", learner.algorithm), aggregate_csv(&group)?)?;
        }
    }
    Ok(written)
}

/// Reads the greedy (biased) tables written by [`write_outputs`].
pub fn read_tables(path: &Path) -> Result<QTables> {
    #[derive(serde::Deserialize)]
    struct Partial {
        q: QTables,
    }
    let text = fs::read_to_string(path)?;
    let parsed: Partial = serde_json::from_str(&text)?;
    Ok(parsed.q)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ExperimentConfig {
        let mut cfg = ExperimentConfig::exp1();
        cfg.seeds = vec![0, 1];
        cfg.epochs = 200;
        cfg.eval_every = 50;
        cfg.eval_games = 2;
        cfg
    }

    #[test]
    fn one_csv_per_run_and_one_aggregate_per_algorithm() {
        let cfg = tiny();
        let runs = run_experiment(&cfg).unwrap();
        assert_eq!(runs.len(), 6);
        let dir = tempfile::tempdir().unwrap();
        let files = write_outputs(dir.path(), &cfg, &runs).unwrap();
        let csvs = files.iter().filter(|p| p.extension().unwrap() == "csv").count();
        assert_eq!(csvs, 6 + 3);
        let body = fs::read_to_string(dir.path().join("ltql_seed1.csv")).unwrap();
        assert_eq!(body.lines().next().unwrap(), CSV_HEADER);
        assert_eq!(body.lines().count(), 1 + 4);
        let agg = fs::read_to_string(dir.path().join("iql_aggregate.csv")).unwrap();
        assert_eq!(agg.lines().next().unwrap(), AGGREGATE_HEADER);
        let q = read_tables(&dir.path().join("distq_seed0_tables.json")).unwrap();
        assert_eq!(q, runs[2].final_q);
    }

    #[test]
    fn aggregate_is_mean_min_max() {
        let mk = |v: f64| RunRecord {
            algorithm: Algorithm::Iql,
            seed: 0,
            rows: vec![EvalRow { epoch: 10, avg_test_return: v, win_rate: v / 10.0 }],
            final_q: QTables::new(&[1], &[1], 0.0).unwrap(),
            final_q_u: None,
            updates: 0,
            greedy_changes: vec![],
            wall_clock: Default::default(),
        };
        let (a, b, c) = (mk(1.0), mk(2.0), mk(6.0));
        let csv = aggregate_csv(&[&a, &b, &c]).unwrap();
        assert_eq!(csv.lines().nth(1).unwrap(), "10,3,1,6,0.3,0.1,0.6");
    }
}
