use rand::Rng;

use crate::mdp::{FactoredQ, TeamMdp};

/// Absolute tolerance for deciding that two values tie for the maximum.
pub const TIE_TOL: f64 = 1e-9;

/// Indices within `TIE_TOL` of the row maximum, ascending.
pub fn maximizer_set(row: &[f64]) -> Vec<usize> {
    let best = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (0..row.len()).filter(|&i| row[i] >= best - TIE_TOL).collect()
}

fn lowest_argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Default tie rule: lowest-index exact maximizer. Returns `policy[k][s]`.
pub fn greedy_factored_policy(fq: &FactoredQ) -> Vec<Vec<usize>> {
    fq.tables.iter().map(|t| t.iter().map(|row| lowest_argmax(row)).collect()).collect()
}

/// max_{a'} q^k(s', a') per state, with terminal states contributing zero.
fn state_values(mdp: &TeamMdp, fq: &FactoredQ, k: usize) -> Vec<f64> {
    (0..mdp.num_states()).map(|s| if mdp.is_terminal(s) { 0.0 } else { fq.max_value(k, s) }).collect()
}

/// `out[j] = r(s, ā_j) + γ Σ_{s'} P(s'|s, ā_j) max_{a'} q^k(s', a')` for every joint action.
pub fn bellman_targets(mdp: &TeamMdp, values: &[f64], s: usize) -> Vec<f64> {
    let gamma = mdp.discount();
    (0..mdp.num_joint_actions())
        .map(|j| {
            let future: f64 = mdp.transition_row(s, j).iter().zip(values).map(|(p, v)| p * v).sum();
            mdp.expected_reward(s, j) + gamma * future
        })
        .collect()
}

/// Picks the teammates' reference tuple at `s`. Every agent's greedy
/// maximizer set is formed; among the joint tuples in their product, the one
/// with the largest summed backup target is chosen, lowest flat index last.
fn reference_joint(mdp: &TeamMdp, fq: &FactoredQ, targets: &[Vec<f64>], s: usize) -> Vec<usize> {
    let space = mdp.joint_space();
    let sets: Vec<Vec<usize>> = (0..mdp.num_agents()).map(|k| maximizer_set(fq.row(k, s))).collect();
    if sets.iter().all(|set| set.len() == 1) {
        return sets.iter().map(|set| set[0]).collect();
    }
    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut cursor = vec![0usize; sets.len()];
    loop {
        let tuple: Vec<usize> = cursor.iter().zip(&sets).map(|(&i, set)| set[i]).collect();
        let j = space.flat_of(&tuple);
        let score: f64 = targets.iter().map(|t| t[j]).sum();
        // Product enumeration runs in ascending flat order, so strict
        // improvement keeps the lowest index among ties.
        match &best {
            Some((b, _)) if score <= *b + TIE_TOL => {}
            _ => best = Some((score, tuple)),
        }
        let mut k = sets.len();
        loop {
            if k == 0 {
                return best.expect("non-empty product").1;
            }
            k -= 1;
            cursor[k] += 1;
            if cursor[k] < sets[k].len() {
                break;
            }
            cursor[k] = 0;
        }
    }
}

/// Teammate-greedy backup: for each agent, the teammates are fixed to the
/// reference joint tuple and only the agent's own action varies.
pub fn apply_be(mdp: &TeamMdp, fq: &FactoredQ) -> FactoredQ {
    let num_agents = mdp.num_agents();
    let values: Vec<Vec<f64>> = (0..num_agents).map(|k| state_values(mdp, fq, k)).collect();
    let mut out = FactoredQ::zeros(mdp.num_states(), mdp.action_counts());
    let space = mdp.joint_space();
    for s in mdp.nonterminal_states() {
        let targets: Vec<Vec<f64>> = values.iter().map(|v| bellman_targets(mdp, v, s)).collect();
        let reference = reference_joint(mdp, fq, &targets, s);
        for k in 0..num_agents {
            let mut tuple = reference.clone();
            for a in 0..mdp.action_counts()[k] {
                tuple[k] = a;
                out.tables[k][s][a] = targets[k][space.flat_of(&tuple)];
            }
        }
    }
    out
}

/// Monotone improvement backup: entrywise max of the current value and the
/// best backup over all teammate actions.
pub fn apply_bi(mdp: &TeamMdp, fq: &FactoredQ) -> FactoredQ {
    let space = mdp.joint_space();
    let mut out = FactoredQ::zeros(mdp.num_states(), mdp.action_counts());
    for k in 0..mdp.num_agents() {
        let values = state_values(mdp, fq, k);
        for s in mdp.nonterminal_states() {
            let targets = bellman_targets(mdp, &values, s);
            let row = &mut out.tables[k][s];
            row.copy_from_slice(&fq.tables[k][s]);
            for (j, &t) in targets.iter().enumerate() {
                let own = space.components_of(j)[k];
                if t > row[own] {
                    row[own] = t;
                }
            }
        }
    }
    out
}

/// One whole-operator coin: `B_E` with probability `p`, otherwise `B_I`.
/// Returns the image and `true` when `B_E` was applied.
pub fn apply_bp<R: Rng + ?Sized>(mdp: &TeamMdp, fq: &FactoredQ, p: f64, rng: &mut R) -> (FactoredQ, bool) {
    let coin = p >= 1.0 || rng.random::<f64>() < p;
    let image = if coin { apply_be(mdp, fq) } else { apply_bi(mdp, fq) };
    (image, coin)
}

#[derive(Debug, Clone, PartialEq)]
pub struct OperatorTrace {
    /// One entry per `B_p` application; `true` means `B_E` was drawn.
    pub coin_outcomes: Vec<bool>,
    pub iterates: Option<Vec<FactoredQ>>,
    pub final_q: FactoredQ,
}

/// `B_E (B_p)^N fq0`, recording the coin sequence.
pub fn theorem1_procedure<R: Rng + ?Sized>(
    mdp: &TeamMdp,
    fq0: &FactoredQ,
    n: usize,
    p: f64,
    rng: &mut R,
    keep_iterates: bool,
) -> (FactoredQ, OperatorTrace) {
    let mut q = fq0.clone();
    let mut coins = Vec::with_capacity(n);
    let mut iterates = keep_iterates.then(Vec::new);
    for _ in 0..n {
        let (next, coin) = apply_bp(mdp, &q, p, rng);
        coins.push(coin);
        if let Some(it) = iterates.as_mut() {
            it.push(next.clone());
        }
        q = next;
    }
    let last = apply_be(mdp, &q);
    let trace = OperatorTrace { coin_outcomes: coins, iterates, final_q: last.clone() };
    (last, trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::matrix::MatrixGame;
    use crate::rng::{stream_rng, Stream};

    fn nash_game() -> TeamMdp {
        MatrixGame::nash_counterexample().to_tabular()
    }

    fn fig1a() -> TeamMdp {
        MatrixGame::fig1a().to_tabular()
    }

    #[test]
    fn be_keeps_suboptimal_nash_point() {
        let mdp = nash_game();
        let q = FactoredQ::single_state(&[&[0.0, -1.0], &[0.0, -1.0]]);
        let out = apply_be(&mdp, &pad(&q));
        assert_eq!(out.tables[0][0], vec![0.0, -1.0]);
        assert_eq!(out.tables[1][0], vec![0.0, -1.0]);
    }

    /// Matrix-game MDPs carry an extra terminal state.
    fn pad(q: &FactoredQ) -> FactoredQ {
        let mut q = q.clone();
        for t in &mut q.tables {
            let width = t[0].len();
            t.push(vec![0.0; width]);
        }
        q
    }

    #[test]
    fn bi_fixes_constant_upper_value() {
        let mdp = nash_game();
        // q_U = max{r_max/(1−γ), ...} with γ = 0.5 and r_max = 1.
        let qu = 1.0 / (1.0 - mdp.discount());
        let mut q = FactoredQ::filled(mdp.num_states(), mdp.action_counts(), qu);
        for t in &mut q.tables {
            t[1] = vec![0.0; 2];
        }
        assert_eq!(apply_bi(&mdp, &q), q);
    }

    #[test]
    fn bi_is_monotone() {
        let mdp = fig1a();
        let q = pad(&FactoredQ::single_state(&[&[5.0, -3.0], &[0.5, 9.0, -1.0]]));
        let out = apply_bi(&mdp, &q);
        for k in 0..2 {
            for (a, b) in out.tables[k][0].iter().zip(&q.tables[k][0]) {
                assert!(a >= b);
            }
        }
        assert_eq!(out.tables[0][0], vec![5.0, 2.0]);
        assert_eq!(out.tables[1][0], vec![0.5, 9.0, 2.0]);
    }

    #[test]
    fn bp_with_p_one_is_be() {
        let mdp = fig1a();
        let q = pad(&FactoredQ::single_state(&[&[0.3, 0.1], &[0.0, 0.2, 0.9]]));
        let mut rng = stream_rng(0, Stream::OperatorCoin);
        for _ in 0..10 {
            let (out, coin) = apply_bp(&mdp, &q, 1.0, &mut rng);
            assert!(coin);
            assert_eq!(out, apply_be(&mdp, &q));
        }
    }

    #[test]
    fn coin_sequence_is_replayable_and_calibrated() {
        let mdp = fig1a();
        let q = FactoredQ::zeros(mdp.num_states(), mdp.action_counts());
        let run = |seed| {
            let mut rng = stream_rng(seed, Stream::OperatorCoin);
            (0..64).map(|_| apply_bp(&mdp, &q, 0.5, &mut rng).1).collect::<Vec<_>>()
        };
        assert_eq!(run(3), run(3));

        let mut rng = stream_rng(9, Stream::OperatorCoin);
        let n = 100_000;
        let p: f64 = 0.3;
        let hits = (0..n).filter(|_| rng.random::<f64>() < p).count() as f64;
        let sigma = (n as f64 * p * (1.0 - p)).sqrt();
        assert!((hits - p * n as f64).abs() < 3.0 * sigma);
    }

    #[test]
    fn greedy_policy_examples() {
        let q = FactoredQ::single_state(&[&[2.0, 1.0], &[0.0, 1.0, 2.0]]);
        assert_eq!(greedy_factored_policy(&q), vec![vec![0], vec![2]]);
        let flat = FactoredQ::single_state(&[&[4.0, 4.0, 4.0]]);
        assert_eq!(greedy_factored_policy(&flat), vec![vec![0]]);
    }

    #[test]
    fn theorem1_from_zero_on_fig1a_reaches_a_qstar() {
        let mdp = fig1a();
        let q0 = FactoredQ::zeros(mdp.num_states(), mdp.action_counts());
        let mut rng = stream_rng(1, Stream::OperatorCoin);
        let (out, trace) = theorem1_procedure(&mdp, &q0, 50, 0.6, &mut rng, true);
        assert_eq!(trace.coin_outcomes.len(), 50);
        assert_eq!(trace.iterates.as_ref().unwrap().len(), 50);
        let a = pad(&FactoredQ::single_state(&[&[2.0, 1.0], &[0.0, 2.0, 0.0]]));
        let b = pad(&FactoredQ::single_state(&[&[0.0, 2.0], &[0.0, 1.0, 2.0]]));
        assert!(out.sup_distance(&a, &mdp) < 1e-12 || out.sup_distance(&b, &mdp) < 1e-12);
    }
}
