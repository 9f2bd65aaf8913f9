use serde::Serialize;

use super::operators::{apply_be, maximizer_set, TIE_TOL};
use crate::error::{Error, Result};
use crate::mdp::{FactoredQ, JointQ, TeamMdp};

/// Joint actions achieving max_ā q†(s, ā) within the tie tolerance.
pub fn joint_maximizers(qdag: &JointQ, s: usize) -> Vec<usize> {
    maximizer_set(&qdag.table[s])
}

#[derive(Debug, Clone, Serialize)]
pub struct OptimalPolicies {
    /// Each policy maps state → flat optimal joint action (0 on terminal states).
    pub policies: Vec<Vec<usize>>,
    /// Number of deterministic optimal policies in total (may exceed `policies.len()`).
    pub total: f64,
    pub truncated: bool,
}

/// Enumerates deterministic optimal team policies, stopping after `limit`.
pub fn enumerate_optimal_policies(mdp: &TeamMdp, qdag: &JointQ, limit: usize) -> OptimalPolicies {
    let n = mdp.num_states();
    let choices: Vec<Vec<usize>> =
        (0..n).map(|s| if mdp.is_terminal(s) { vec![0] } else { joint_maximizers(qdag, s) }).collect();
    let total: f64 = choices.iter().map(|c| c.len() as f64).product();
    let mut policies = Vec::new();
    let mut cursor = vec![0usize; n];
    'outer: while policies.len() < limit {
        policies.push(cursor.iter().zip(&choices).map(|(&i, c)| c[i]).collect());
        let mut s = n;
        loop {
            if s == 0 {
                break 'outer;
            }
            s -= 1;
            cursor[s] += 1;
            if cursor[s] < choices[s].len() {
                break;
            }
            cursor[s] = 0;
        }
    }
    let truncated = (policies.len() as f64) < total;
    OptimalPolicies { policies, total, truncated }
}

/// `q^{k,⋆}(s, a^k) = q†(s, a^k, a^{−k})` with the teammates' actions taken
/// from the given optimal joint policy.
pub fn extract_factored_qstar(mdp: &TeamMdp, qdag: &JointQ, policy: &[usize]) -> Result<FactoredQ> {
    if policy.len() != mdp.num_states() {
        return Err(Error::InvalidInput(format!(
            "policy has {} entries for {} states",
            policy.len(),
            mdp.num_states()
        )));
    }
    let space = mdp.joint_space();
    let mut out = FactoredQ::zeros(mdp.num_states(), mdp.action_counts());
    for s in mdp.nonterminal_states() {
        let chosen = policy[s];
        if chosen >= space.size() {
            return Err(Error::InvalidInput(format!("policy action {chosen} out of range at state {s}")));
        }
        let best = qdag.max_value(s);
        if qdag.table[s][chosen] < best - TIE_TOL {
            return Err(Error::ContractViolation(format!(
                "policy is not optimal at state {s}: q†={} < max {}",
                qdag.table[s][chosen], best
            )));
        }
        let reference = space.components_of(chosen);
        for k in 0..mdp.num_agents() {
            let mut tuple = reference.clone();
            for a in 0..mdp.action_counts()[k] {
                tuple[k] = a;
                out.tables[k][s][a] = qdag.table[s][space.flat_of(&tuple)];
            }
        }
    }
    Ok(out)
}

/// Distinct q⋆ sets over (at most `limit`) deterministic optimal policies.
pub fn extract_all_qstars(mdp: &TeamMdp, qdag: &JointQ, limit: usize) -> Result<Vec<FactoredQ>> {
    let mut out: Vec<FactoredQ> = Vec::new();
    for policy in enumerate_optimal_policies(mdp, qdag, limit).policies {
        let q = extract_factored_qstar(mdp, qdag, &policy)?;
        if !out.contains(&q) {
            out.push(q);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FactorizationReport {
    /// max_{k,s} |max_{a^k} q^k(s,·) − max_ā q†(s,·)|
    pub eq3a_max_violation: f64,
    /// Per state: max_ā q† minus the worst q† over tuples of per-agent greedy actions.
    pub eq3b_violation: Vec<f64>,
    /// sup |B_E q − q|
    pub eq3c_max_violation: f64,
    pub is_team_optimal: bool,
    pub is_nash_fixed_point: bool,
}

impl FactorizationReport {
    pub fn eq3b_max_violation(&self) -> f64 {
        self.eq3b_violation.iter().copied().fold(0.0, f64::max)
    }
}

pub fn check_factorization(mdp: &TeamMdp, qdag: &JointQ, fq: &FactoredQ, tol: f64) -> Result<FactorizationReport> {
    fq.check_shape(mdp)?;
    let space = mdp.joint_space();
    let mut eq3a: f64 = 0.0;
    let mut eq3b = vec![0.0; mdp.num_states()];
    for s in mdp.nonterminal_states() {
        let best = qdag.max_value(s);
        for k in 0..mdp.num_agents() {
            eq3a = eq3a.max((fq.max_value(k, s) - best).abs());
        }
        // Ties in the per-agent argmax may resolve either way, so every tuple
        // in the product of maximizer sets must be optimal.
        let sets: Vec<Vec<usize>> = (0..mdp.num_agents()).map(|k| maximizer_set(fq.row(k, s))).collect();
        let mut worst = f64::INFINITY;
        for j in 0..space.size() {
            let c = space.components_of(j);
            if c.iter().zip(&sets).all(|(a, set)| set.contains(a)) {
                worst = worst.min(qdag.table[s][j]);
            }
        }
        eq3b[s] = (best - worst).max(0.0);
    }
    let eq3c = apply_be(mdp, fq).sup_distance(fq, mdp);
    let eq3b_max = eq3b.iter().copied().fold(0.0, f64::max);
    let is_nash = eq3c < tol;
    Ok(FactorizationReport {
        eq3a_max_violation: eq3a,
        eq3b_violation: eq3b,
        eq3c_max_violation: eq3c,
        is_team_optimal: is_nash && eq3a < tol && eq3b_max < tol,
        is_nash_fixed_point: is_nash,
    })
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct GapResult {
    /// ½ min_s (best − second best), or 0 when some state has a tied optimum.
    pub delta: f64,
    /// States whose optimum is attained by more than one joint action.
    pub tied_states: Vec<usize>,
}

impl GapResult {
    pub fn usable(&self) -> bool {
        self.tied_states.is_empty() && self.delta > 0.0
    }
}

/// Half the smallest optimality gap of q† over nonterminal states.
pub fn delta_gap(mdp: &TeamMdp, qdag: &JointQ) -> Result<GapResult> {
    if mdp.num_joint_actions() < 2 {
        return Err(Error::InvalidInput("gap needs at least two joint actions per state".into()));
    }
    let mut tied = Vec::new();
    let mut min_gap = f64::INFINITY;
    for s in mdp.nonterminal_states() {
        let row = &qdag.table[s];
        let maximizers = maximizer_set(row);
        if maximizers.len() > 1 {
            tied.push(s);
            continue;
        }
        let best = row[maximizers[0]];
        let second = row
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != maximizers[0])
            .map(|(_, &v)| v)
            .fold(f64::NEG_INFINITY, f64::max);
        min_gap = min_gap.min(best - second);
    }
    if !tied.is_empty() {
        return Ok(GapResult { delta: 0.0, tied_states: tied });
    }
    Ok(GapResult { delta: 0.5 * min_gap, tied_states: tied })
}

/// max_{k,s} |max_{a^k} q^k(s, a^k) − max_ā q†(s, ā)|, the distance term in L.
pub fn max_gap(mdp: &TeamMdp, fq: &FactoredQ, qdag: &JointQ) -> f64 {
    let mut worst: f64 = 0.0;
    for s in mdp.nonterminal_states() {
        for k in 0..mdp.num_agents() {
            worst = worst.max((fq.max_value(k, s) - qdag.max_value(s)).abs());
        }
    }
    worst
}
