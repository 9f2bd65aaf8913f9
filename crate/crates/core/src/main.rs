use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use teamq::dp::LemmaMode;
use teamq::experiment::{
    beta_check, bounds_table, dp_solve, dp_verify, evaluate_tables, load_mdp, read_tables, render_bounds,
    run_experiment, write_outputs, BoundsQuery, ExperimentConfig,
};
use teamq::TeamMdp;

#[derive(Parser)]
#[command(name = "teamq", version, about = "Factored team Q-learning experiments and DP certification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train every (algorithm, seed) pair of an experiment and write CSVs.
    Train {
        /// Preset name (exp1, exp2) or TOML file.
        #[arg(long)]
        config: String,
        /// Run only this seed instead of the configured list.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve for q† and extract every q⋆ set.
    DpSolve {
        #[command(flatten)]
        target: Target,
        #[arg(long, default_value_t = 1e-12)]
        tol: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Monte Carlo check of the operator guarantees, or the β cross-check.
    DpVerify(VerifyArgs),
    /// Tabulate the closed-form bound quantities.
    Bounds(BoundsArgs),
    /// Greedy evaluation of saved tables.
    Eval {
        #[arg(long)]
        config: String,
        /// `<alg>_seed<s>_tables.json` written by `train`.
        #[arg(long)]
        tables: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Discount for the reported return; defaults to the first learner's.
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Target {
    /// Builtin (fig1a, nash, button-grid), JSON MDP file, or TOML config.
    target: Option<String>,
    /// Use the environment of this experiment config.
    #[arg(long, conflicts_with = "target")]
    config: Option<String>,
}

impl Target {
    fn load(&self) -> Result<TeamMdp> {
        let name = self.config.as_deref().or(self.target.as_deref()).unwrap_or("fig1a");
        load_mdp(name).with_context(|| format!("loading {name}"))
    }
}

#[derive(Args)]
struct VerifyArgs {
    #[command(flatten)]
    target: Target,
    #[arg(long, default_value_t = 200)]
    n: usize,
    #[arg(long, default_value_t = 0.6)]
    p: f64,
    #[arg(long, default_value_t = 1e-3)]
    delta: f64,
    #[arg(long, default_value_t = 100)]
    trials: usize,
    /// c-delta1-upper, c-delta2 or theorem1.
    #[arg(long, default_value = "theorem1")]
    mode: LemmaMode,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Constant initial value of every factored table.
    #[arg(long, default_value_t = 0.0)]
    init_value: f64,
    /// Compare the closed-form run probability with enumeration for all N up to this.
    #[arg(long)]
    beta_check: Option<u32>,
    #[arg(long, default_value_t = 1e-12)]
    tol: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BoundsArgs {
    #[arg(long, value_delimiter = ',', required = true)]
    delta1: Vec<f64>,
    #[arg(long, value_delimiter = ',', required = true)]
    delta2: Vec<f64>,
    #[arg(long)]
    p: f64,
    #[arg(long)]
    gamma: f64,
    #[arg(long)]
    q_upper: f64,
    #[arg(long)]
    min_max: f64,
    #[arg(long)]
    max_gap: f64,
    /// Defaults to the characteristic root.
    #[arg(long)]
    xi1: Option<f64>,
    #[arg(long, default_value_t = 200)]
    n: u64,
}

fn write_report<T: serde::Serialize>(out: Option<&Path>, name: &str, value: &T) -> Result<()> {
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
        let path = dir.join(name);
        std::fs::write(&path, serde_json::to_string_pretty(value)? + "\n")?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Train { config, seed, out } => {
            let mut cfg = ExperimentConfig::resolve(&config)?;
            if let Some(s) = seed {
                cfg.seeds = vec![s];
            }
            let dir = out.unwrap_or_else(|| cfg.output_dir.clone());
            let runs = run_experiment(&cfg)?;
            let files = write_outputs(&dir, &cfg, &runs)?;
            for r in &runs {
                if let Some(last) = r.rows.last() {
                    println!(
                        "{} seed {}: final test return {} win rate {} ({} updates)",
                        r.algorithm, r.seed, last.avg_test_return, last.win_rate, r.updates
                    );
                }
            }
            println!("wrote {} files to {}", files.len(), dir.display());
            Ok(true)
        }
        Command::DpSolve { target, tol, out } => {
            let sol = dp_solve(&target.load()?, tol)?;
            print!("{}", sol.render());
            if let Some(dir) = out {
                let files = sol.write(&dir)?;
                println!("wrote {} files to {}", files.len(), dir.display());
            }
            Ok(true)
        }
        Command::DpVerify(a) => {
            if let Some(max_n) = a.beta_check {
                let report = beta_check(max_n, &[0.3, 0.5, 0.7], a.tol)?;
                print!("{}", report.render());
                write_report(a.out.as_deref(), "beta_check.json", &report)?;
                return Ok(report.pass());
            }
            let mdp = a.target.load()?;
            let report = dp_verify(&mdp, a.n, a.p, a.delta, a.trials, a.mode, a.seed, a.init_value)?;
            print!("{}", report.render());
            write_report(a.out.as_deref(), "verify_report.json", &report)?;
            Ok(report.pass())
        }
        Command::Bounds(b) => {
            let q = BoundsQuery {
                p: b.p,
                gamma: b.gamma,
                q_u: b.q_upper,
                min_max_qdag: b.min_max,
                max_gap: b.max_gap,
                xi1: b.xi1,
                n: b.n,
            };
            print!("{}", render_bounds(&bounds_table(&b.delta1, &b.delta2, &q)?));
            Ok(true)
        }
        Command::Eval { config, tables, seed, gamma, out } => {
            let cfg = ExperimentConfig::resolve(&config)?;
            let q = read_tables(&tables).with_context(|| format!("reading {}", tables.display()))?;
            let gamma = gamma.unwrap_or(cfg.algorithms[0].gamma);
            let s = evaluate_tables(&cfg, &q, gamma, seed)?;
            println!("avg_test_return {} win_rate {} over {} games", s.avg_return, s.win_rate, cfg.eval_games);
            write_report(out.as_deref(), "eval.json", &s)?;
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
