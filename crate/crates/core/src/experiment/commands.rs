//! Implementations behind the `dp-solve`, `dp-verify`, `bounds` and `eval`
//! subcommands. Each returns a serializable report plus its text rendering.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::dp::{
    bound_l, bound_n_o, check_factorization, enumerate_optimal_policies, extract_factored_qstar, lemma1_tail,
    montecarlo_lemma_check, run_probability, run_probability_enumerated, run_probability_lower_bound,
    run_probability_lower_bound_at_root, solve_joint_optimal, uspensky_root, BoundInputs, FactorizationReport,
    LemmaMode, MonteCarloReport, ENUMERATION_LIMIT,
};
use crate::envs::{ButtonGridConfig, CowboyBullConfig, MatrixGame};
use crate::error::{Error, Result};
use crate::mdp::{FactoredQ, JointQ, TeamMdp};

use super::config::{EnvSpec, ExperimentConfig};

/// Upper limit on optimal policies enumerated by `dp-solve`.
pub const POLICY_LIMIT: usize = 4096;

/// Builtin names (`fig1a`, `nash`, `button-grid`, `exp1`, `exp2`), a JSON
/// MDP file, or a TOML experiment config.
pub fn load_mdp(target: &str) -> Result<TeamMdp> {
    match target {
        "fig1a" | "matrix" => Ok(MatrixGame::fig1a().to_tabular()),
        "nash" => Ok(MatrixGame::nash_counterexample().to_tabular()),
        "button-grid" => ButtonGridConfig::default().to_tabular(),
        "cowboy-bull" => EnvSpec::CowboyBull(CowboyBullConfig::default()).to_tabular(),
        "exp1" | "exp2" => ExperimentConfig::resolve(target)?.env.to_tabular(),
        path if path.ends_with(".toml") => ExperimentConfig::load(Path::new(path))?.env.to_tabular(),
        path => TeamMdp::from_json(&fs::read_to_string(path)?),
    }
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T, written: &mut Vec<PathBuf>) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, serde_json::to_string_pretty(value)? + "\n")?;
    written.push(path);
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct QStarEntry {
    /// Flat optimal joint action per state of the first policy producing this set.
    pub policy: Vec<usize>,
    pub q_star: FactoredQ,
    pub report: FactorizationReport,
}

#[derive(Debug, Clone, Serialize)]
pub struct DpSolution {
    pub joint_q: JointQ,
    /// Σ_s ρ(s) max_ā q†(s, ā)
    pub start_value: f64,
    pub optimal_policies: f64,
    pub truncated: bool,
    pub q_stars: Vec<QStarEntry>,
}

pub fn dp_solve(mdp: &TeamMdp, tol: f64) -> Result<DpSolution> {
    let joint_q = solve_joint_optimal(mdp, tol)?;
    let start_value = mdp.nonterminal_states().map(|s| mdp.initial_dist()[s] * joint_q.max_value(s)).sum();
    let found = enumerate_optimal_policies(mdp, &joint_q, POLICY_LIMIT);
    let mut q_stars: Vec<QStarEntry> = Vec::new();
    for policy in found.policies {
        let q_star = extract_factored_qstar(mdp, &joint_q, &policy)?;
        if q_stars.iter().any(|e| e.q_star == q_star) {
            continue;
        }
        let report = check_factorization(mdp, &joint_q, &q_star, tol.max(1e-9))?;
        q_stars.push(QStarEntry { policy, q_star, report });
    }
    Ok(DpSolution { joint_q, start_value, optimal_policies: found.total, truncated: found.truncated, q_stars })
}

impl DpSolution {
    /// `joint_q.json`, `qstar_<i>.json` and `report.json`.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir)?;
        let mut written = Vec::new();
        write_json(dir, "joint_q.json", &self.joint_q, &mut written)?;
        for (i, e) in self.q_stars.iter().enumerate() {
            write_json(dir, &format!("qstar_{i}.json"), &e.q_star, &mut written)?;
        }
        write_json(dir, "report.json", self, &mut written)?;
        Ok(written)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        writeln!(out, "optimal start value: {}", self.start_value).unwrap();
        let suffix = if self.truncated { " (enumeration truncated)" } else { "" };
        writeln!(out, "optimal deterministic policies: {}{suffix}", self.optimal_policies).unwrap();
        writeln!(out, "distinct q* sets: {}", self.q_stars.len()).unwrap();
        for (i, e) in self.q_stars.iter().enumerate().take(8) {
            let first = e.policy.iter().position(|&a| a > 0).unwrap_or(0);
            let s = first.min(e.q_star.tables[0].len() - 1);
            let rows: Vec<String> = e.q_star.tables.iter().map(|t| format!("{:?}", t[s])).collect();
            writeln!(
                out,
                "  q*[{i}] state {s}: {}  team_optimal={} nash_fixed_point={}",
                rows.join(" / "),
                e.report.is_team_optimal,
                e.report.is_nash_fixed_point
            )
            .unwrap();
        }
        out
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub n: usize,
    pub p: f64,
    pub delta: f64,
    pub seed: u64,
    pub init_value: f64,
    pub result: MonteCarloReport,
}

impl VerifyReport {
    pub fn pass(&self) -> bool {
        self.result.pass
    }

    pub fn render(&self) -> String {
        let r = &self.result;
        let mut out = String::new();
        writeln!(
            out,
            "mode={} N={} p={} delta={} trials={} seed={}",
            r.mode, self.n, self.p, self.delta, r.trials, self.seed
        )
        .unwrap();
        writeln!(out, "empirical frequency: {} ({}/{})", r.frequency, r.successes, r.trials).unwrap();
        let b = &r.bounds;
        writeln!(out, "n_o={:?} L={:?} gap_delta={}", b.n_o, b.l, b.gap_delta).unwrap();
        let applicable = b.applicable();
        if applicable.is_empty() {
            writeln!(out, "no closed-form bound applies at these parameters").unwrap();
        }
        for (name, v) in applicable {
            let verdict = if r.frequency >= v { "PASS" } else { "FAIL" };
            writeln!(out, "{verdict} {name}: frequency {} >= bound {v}", r.frequency).unwrap();
        }
        writeln!(out, "{}", if r.pass { "PASS" } else { "FAIL" }).unwrap();
        out
    }
}

#[allow(clippy::too_many_arguments)]
pub fn dp_verify(
    mdp: &TeamMdp,
    n: usize,
    p: f64,
    delta: f64,
    trials: usize,
    mode: LemmaMode,
    seed: u64,
    init_value: f64,
) -> Result<VerifyReport> {
    let fq0 = FactoredQ::filled(mdp.num_states(), mdp.action_counts(), init_value);
    let result = montecarlo_lemma_check(mdp, &fq0, n, p, delta, trials, mode, seed)?;
    Ok(VerifyReport { n, p, delta, seed, init_value, result })
}

#[derive(Debug, Clone, Serialize)]
pub struct BetaCheck {
    pub max_n: u32,
    pub ps: Vec<f64>,
    pub cases: usize,
    pub max_abs_diff: f64,
    /// (N, L, p) where the largest difference occurred.
    pub worst: (u32, u32, f64),
    pub tol: f64,
}

impl BetaCheck {
    pub fn pass(&self) -> bool {
        self.max_abs_diff < self.tol
    }

    pub fn render(&self) -> String {
        let (n, l, p) = self.worst;
        format!(
            "beta cross-check: N<={} L<=N p in {:?}: {} cases, max |closed form - enumeration| = {:e} at N={n} L={l} p={p}\n{}\n",
            self.max_n,
            self.ps,
            self.cases,
            self.max_abs_diff,
            if self.pass() { "PASS" } else { "FAIL" }
        )
    }
}

/// Compares the closed-form run probability with brute-force enumeration.
pub fn beta_check(max_n: u32, ps: &[f64], tol: f64) -> Result<BetaCheck> {
    if max_n > ENUMERATION_LIMIT {
        return Err(Error::Domain(format!(
            "beta check enumerates 2^N sequences; N must be at most {ENUMERATION_LIMIT}"
        )));
    }
    let mut worst = (0, 0, 0.0);
    let mut max_abs_diff: f64 = 0.0;
    let mut cases = 0;
    for n in 1..=max_n {
        for l in 1..=n {
            for &p in ps {
                let diff = (run_probability(n as u64, l as u64, p)? - run_probability_enumerated(n, l, p)?).abs();
                cases += 1;
                if diff > max_abs_diff || cases == 1 {
                    max_abs_diff = diff;
                    worst = (n, l, p);
                }
            }
        }
    }
    Ok(BetaCheck { max_n, ps: ps.to_vec(), cases, max_abs_diff, worst, tol })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundRow {
    pub delta1: f64,
    pub delta2: f64,
    pub n_o: u64,
    pub l: u64,
    pub lemma1_exact: Option<f64>,
    pub lemma1_hoeffding: Option<f64>,
    pub run_probability: Option<f64>,
    pub run_lower_bound: Option<f64>,
    pub xi1: Option<f64>,
}

#[derive(Debug, Clone, Copy)]
pub struct BoundsQuery {
    pub p: f64,
    pub gamma: f64,
    pub q_u: f64,
    pub min_max_qdag: f64,
    pub max_gap: f64,
    /// None selects the characteristic root.
    pub xi1: Option<f64>,
    pub n: u64,
}

/// One row per (δ₁, δ₂) pair; a single value in either list is broadcast.
pub fn bounds_table(delta1: &[f64], delta2: &[f64], q: &BoundsQuery) -> Result<Vec<BoundRow>> {
    let rows = delta1.len().max(delta2.len());
    let broadcast_ok = |v: &[f64]| v.len() == 1 || v.len() == rows;
    if delta1.is_empty() || delta2.is_empty() || !broadcast_ok(delta1) || !broadcast_ok(delta2) {
        return Err(Error::InvalidInput("delta1 and delta2 need equal lengths or a single value".into()));
    }
    let pick = |v: &[f64], i: usize| if v.len() == 1 { v[0] } else { v[i] };
    let mut out = Vec::with_capacity(rows);
    for i in 0..rows {
        let (d1, d2) = (pick(delta1, i), pick(delta2, i));
        BoundInputs {
            delta1: d1,
            delta2: d2,
            p: q.p,
            gamma: q.gamma,
            q_u: q.q_u,
            min_max_qdag: q.min_max_qdag,
            max_gap: q.max_gap,
            xi1: q.xi1.unwrap_or(1.0),
        }
        .validate()?;
        let n_o = bound_n_o(d1, q.gamma, q.q_u, q.min_max_qdag)?;
        let l = bound_l(d2, q.gamma, q.max_gap)?;
        let tail = (n_o <= q.n).then(|| lemma1_tail(q.n, q.p, n_o)).transpose()?;
        let l_eff = l.max(1);
        let run = (l_eff <= q.n).then(|| run_probability(q.n, l_eff, q.p)).transpose()?;
        let (xi1, lower) = if q.p > 0.5 && q.p < 1.0 {
            match q.xi1 {
                Some(x) => (Some(x), Some(run_probability_lower_bound(q.n, l_eff, q.p, x)?)),
                None => (Some(uspensky_root(l_eff, q.p)?), Some(run_probability_lower_bound_at_root(q.n, l_eff, q.p)?)),
            }
        } else {
            (None, None)
        };
        out.push(BoundRow {
            delta1: d1,
            delta2: d2,
            n_o,
            l,
            lemma1_exact: tail.map(|t| t.exact),
            lemma1_hoeffding: tail.and_then(|t| t.hoeffding),
            run_probability: run,
            run_lower_bound: lower,
            xi1,
        });
    }
    Ok(out)
}

pub fn render_bounds(rows: &[BoundRow]) -> String {
    let cell = |v: Option<f64>| match v {
        None => "NA".to_string(),
        Some(v) if v != 0.0 && v.abs() < 1e-4 => format!("{v:e}"),
        Some(v) => v.to_string(),
    };
    let mut out =
        String::from("delta1,delta2,n_o,L,lemma1_exact,lemma1_hoeffding,run_probability,run_lower_bound,xi1\n");
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.delta1,
            r.delta2,
            r.n_o,
            r.l,
            cell(r.lemma1_exact),
            cell(r.lemma1_hoeffding),
            cell(r.run_probability),
            cell(r.run_lower_bound),
            cell(r.xi1)
        )
        .unwrap();
    }
    out
}
