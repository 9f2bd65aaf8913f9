//! Empirical check of the operator lemmas: run many seeded `B_p` sequences
//! and compare the success frequency with the closed-form guarantees.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::bounds::{
    bound_l, bound_n_o, lemma1_tail, q_upper, run_probability, run_probability_lower_bound_at_root,
    theorem_product_bound,
};
use super::factorization::{delta_gap, extract_all_qstars, max_gap};
use super::operators::{apply_be, apply_bp};
use super::value_iteration::solve_joint_optimal;
use crate::error::{Error, Result};
use crate::mdp::{FactoredQ, JointQ, TeamMdp};
use crate::rng::{derive_seed, stream_rng, Stream};

/// Upper limit on the optimal policies enumerated when collecting q⋆ sets.
pub const QSTAR_LIMIT: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LemmaMode {
    /// `B_p^N q` entrywise below max_{a^{−k}} q† + δ.
    CDelta1Upper,
    /// `B_p^N q` sandwiched between q⋆ − δ and max_{a^{−k}} q† + δ.
    CDelta2,
    /// `B_E B_p^N q` within δ of some q⋆ in sup norm.
    Theorem1,
}

impl LemmaMode {
    pub fn name(self) -> &'static str {
        match self {
            LemmaMode::CDelta1Upper => "c-delta1-upper",
            LemmaMode::CDelta2 => "c-delta2",
            LemmaMode::Theorem1 => "theorem1",
        }
    }
}

impl fmt::Display for LemmaMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LemmaMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "c-delta1-upper" => Ok(LemmaMode::CDelta1Upper),
            "c-delta2" => Ok(LemmaMode::CDelta2),
            "theorem1" => Ok(LemmaMode::Theorem1),
            other => Err(Error::InvalidInput(format!(
                "unknown mode {other:?} (expected c-delta1-upper, c-delta2 or theorem1)"
            ))),
        }
    }
}

/// Closed-form quantities for one configuration. A bound is `None` when its
/// hypotheses do not hold.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundSummary {
    pub n_o: Option<u64>,
    pub l: Option<u64>,
    /// Half the smallest optimality gap of q†; 0 when some optimum is tied.
    pub gap_delta: f64,
    pub lemma1_exact: Option<f64>,
    pub lemma1_hoeffding: Option<f64>,
    pub run_probability: Option<f64>,
    pub run_lower_bound: Option<f64>,
    pub theorem_product: Option<f64>,
}

impl BoundSummary {
    /// Bounds that the empirical frequency must meet, with their names.
    pub fn applicable(&self) -> Vec<(&'static str, f64)> {
        [
            ("lemma1_exact", self.lemma1_exact),
            ("lemma1_hoeffding", self.lemma1_hoeffding),
            ("run_probability", self.run_probability),
            ("run_lower_bound", self.run_lower_bound),
            ("theorem_product", self.theorem_product),
        ]
        .into_iter()
        .filter_map(|(name, v)| v.map(|v| (name, v)))
        .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonteCarloReport {
    pub mode: LemmaMode,
    pub trials: usize,
    pub successes: usize,
    pub frequency: f64,
    pub bounds: BoundSummary,
    /// Frequency meets every applicable bound.
    pub pass: bool,
}

fn upper_envelope(mdp: &TeamMdp, qdag: &JointQ) -> FactoredQ {
    let space = mdp.joint_space();
    let mut out = FactoredQ::zeros(mdp.num_states(), mdp.action_counts());
    for s in mdp.nonterminal_states() {
        for k in 0..mdp.num_agents() {
            for a in 0..mdp.action_counts()[k] {
                out.tables[k][s][a] = qdag.max_over_teammates(space, k, s, a);
            }
        }
    }
    out
}

fn below(mdp: &TeamMdp, q: &FactoredQ, ceiling: &FactoredQ, slack: f64) -> bool {
    (0..mdp.num_agents()).all(|k| {
        mdp.nonterminal_states().all(|s| q.tables[k][s].iter().zip(&ceiling.tables[k][s]).all(|(v, c)| *v <= c + slack))
    })
}

fn above(mdp: &TeamMdp, q: &FactoredQ, floor: &FactoredQ, slack: f64) -> bool {
    below(mdp, floor, q, slack)
}

fn bound_summary(
    mdp: &TeamMdp,
    qdag: &JointQ,
    fq0: &FactoredQ,
    n: usize,
    p: f64,
    delta: f64,
    mode: LemmaMode,
    in_c0u: bool,
) -> Result<BoundSummary> {
    let gamma = mdp.discount();
    let gap = if mdp.num_joint_actions() >= 2 { delta_gap(mdp, qdag)? } else { Default::default() };
    let gap_ok = gap.usable() && delta < gap.delta;
    let min_max = mdp.nonterminal_states().map(|s| qdag.max_value(s)).fold(f64::INFINITY, f64::min);
    let q_u = q_upper(mdp, fq0);
    let n_o = bound_n_o(delta, gamma, q_u, min_max).ok();
    let spread = max_gap(mdp, fq0, qdag);
    let l = if spread > 0.0 { bound_l(delta, gamma, spread).ok().map(|l| l.max(1)) } else { Some(1) };
    let n64 = n as u64;

    let mut out = BoundSummary {
        n_o,
        l,
        gap_delta: gap.delta,
        lemma1_exact: None,
        lemma1_hoeffding: None,
        run_probability: None,
        run_lower_bound: None,
        theorem_product: None,
    };
    match mode {
        LemmaMode::CDelta1Upper => {
            if let Some(n_o) = n_o.filter(|&n_o| n_o <= n64) {
                let tail = lemma1_tail(n64, p, n_o)?;
                out.lemma1_exact = Some(tail.exact);
                out.lemma1_hoeffding = tail.hoeffding;
            }
        }
        LemmaMode::CDelta2 => {
            if let Some(l) = l.filter(|&l| in_c0u && gap_ok && l <= n64) {
                out.run_probability = Some(run_probability(n64, l, p)?);
                if p > 0.5 {
                    out.run_lower_bound = run_probability_lower_bound_at_root(n64, l, p).ok();
                }
            }
        }
        LemmaMode::Theorem1 => {
            if let (Some(n_o), Some(l), true) = (n_o, l, gap_ok) {
                out.theorem_product = theorem_product_bound(n64, p, n_o, l);
            }
        }
    }
    Ok(out)
}

/// Runs `trials` independent operator sequences of length `n` from `fq0` and
/// reports how often the final iterate lands in the set selected by `mode`.
///
/// Trial `i` draws its coins from a stream seeded by `derive_seed(seed, i)`,
/// so the result does not depend on thread scheduling.
#[allow(clippy::too_many_arguments)]
pub fn montecarlo_lemma_check(
    mdp: &TeamMdp,
    fq0: &FactoredQ,
    n: usize,
    p: f64,
    delta: f64,
    trials: usize,
    mode: LemmaMode,
    seed: u64,
) -> Result<MonteCarloReport> {
    if trials == 0 {
        return Err(Error::InvalidInput("trials must be at least 1".into()));
    }
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::Domain(format!("p must lie in (0, 1], got {p}")));
    }
    if !(delta > 0.0) {
        return Err(Error::Domain(format!("delta must be > 0, got {delta}")));
    }
    fq0.check_shape(mdp)?;
    let qdag = solve_joint_optimal(mdp, 1e-12)?;
    let qstars = extract_all_qstars(mdp, &qdag, QSTAR_LIMIT)?;
    let ceiling = upper_envelope(mdp, &qdag);
    let in_c0u = below(mdp, fq0, &ceiling, 1e-12);
    let bounds = bound_summary(mdp, &qdag, fq0, n, p, delta, mode, in_c0u)?;

    let hits: Vec<bool> = (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(derive_seed(seed, i as u64), Stream::OperatorCoin);
            let mut q = fq0.clone();
            for _ in 0..n {
                q = apply_bp(mdp, &q, p, &mut rng).0;
            }
            match mode {
                LemmaMode::CDelta1Upper => below(mdp, &q, &ceiling, delta),
                LemmaMode::CDelta2 => {
                    below(mdp, &q, &ceiling, delta) && qstars.iter().any(|star| above(mdp, &q, star, delta))
                }
                LemmaMode::Theorem1 => {
                    let last = apply_be(mdp, &q);
                    qstars.iter().any(|star| last.sup_distance(star, mdp) < delta)
                }
            }
        })
        .collect();
    let successes = hits.iter().filter(|&&h| h).count();
    let frequency = successes as f64 / trials as f64;
    let pass = bounds.applicable().iter().all(|(_, b)| frequency >= *b);
    Ok(MonteCarloReport { mode, trials, successes, frequency, bounds, pass })
}
