#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use teamq::mdp::TeamMdpParts;
use teamq::{FactoredQ, TeamMdp};

/// Random finite team MDP with at most `max_states` states (the last one
/// terminal half of the time), the given number of agents with between 1 and
/// `max_actions` actions each (at least two joint actions), and noise-free
/// rewards in [−1, 1].
pub fn random_mdp(rng: &mut ChaCha8Rng, max_states: usize, agents: usize, max_actions: usize) -> TeamMdp {
    let n = rng.random_range(1..=max_states);
    let with_terminal = n >= 2 && rng.random_bool(0.5);
    let mut counts: Vec<usize> = (0..agents).map(|_| rng.random_range(1..=max_actions)).collect();
    if counts.iter().product::<usize>() < 2 {
        counts[agents - 1] = 2;
    }
    let joint: usize = counts.iter().product();
    let mut terminal = vec![false; n];
    if with_terminal {
        terminal[n - 1] = true;
    }
    let mut transition = vec![vec![vec![0.0; n]; joint]; n];
    let mut reward_mean = vec![vec![vec![0.0; n]; joint]; n];
    for s in 0..n {
        for j in 0..joint {
            if terminal[s] {
                transition[s][j][s] = 1.0;
                continue;
            }
            let mut weights: Vec<f64> =
                (0..n).map(|_| if rng.random_bool(0.3) { 0.0 } else { rng.random::<f64>() }).collect();
            if weights.iter().sum::<f64>() == 0.0 {
                weights[rng.random_range(0..n)] = 1.0;
            }
            let total: f64 = weights.iter().sum();
            for t in 0..n {
                transition[s][j][t] = weights[t] / total;
                reward_mean[s][j][t] = rng.random_range(-1.0..1.0);
            }
        }
    }
    let live = terminal.iter().filter(|t| !**t).count() as f64;
    let initial_dist = terminal.iter().map(|&t| if t { 0.0 } else { 1.0 / live }).collect();
    TeamMdp::new(TeamMdpParts {
        num_agents: agents,
        action_counts: counts,
        num_states: n,
        transition,
        reward_mean,
        reward_noise: None,
        discount: rng.random_range(0.5..0.9),
        initial_dist,
        terminal,
        horizon: None,
    })
    .expect("generated MDP is valid")
}

/// Uniform values in [lo, hi) on nonterminal states, zero elsewhere.
pub fn random_q(mdp: &TeamMdp, rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> FactoredQ {
    let mut q = FactoredQ::zeros(mdp.num_states(), mdp.action_counts());
    for t in &mut q.tables {
        for s in mdp.nonterminal_states() {
            for v in &mut t[s] {
                *v = rng.random_range(lo..hi);
            }
        }
    }
    q
}
