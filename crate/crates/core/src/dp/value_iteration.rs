use crate::error::{Error, Result};
use crate::mdp::{JointQ, TeamMdp};

pub const MAX_VALUE_ITERATIONS: usize = 1_000_000;

/// Joint-action value iteration for q†. Stops once the sup-norm update falls
/// below `tol·(1−γ)`; terminal rows stay at zero.
pub fn solve_joint_optimal(mdp: &TeamMdp, tol: f64) -> Result<JointQ> {
    if !(tol > 0.0) {
        return Err(Error::InvalidInput(format!("tolerance must be positive, got {tol}")));
    }
    let n = mdp.num_states();
    let joint = mdp.num_joint_actions();
    let gamma = mdp.discount();
    let threshold = tol * (1.0 - gamma);
    let mut q = vec![vec![0.0; joint]; n];
    let mut values = vec![0.0; n];
    let mut residual = f64::INFINITY;
    for _ in 0..MAX_VALUE_ITERATIONS {
        residual = 0.0;
        for s in mdp.nonterminal_states() {
            for a in 0..joint {
                let future: f64 = mdp.transition_row(s, a).iter().zip(&values).map(|(p, v)| p * v).sum();
                let updated = mdp.expected_reward(s, a) + gamma * future;
                residual = residual.max((updated - q[s][a]).abs());
                q[s][a] = updated;
            }
        }
        for s in mdp.nonterminal_states() {
            values[s] = q[s].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        }
        if residual < threshold {
            return Ok(JointQ { table: q });
        }
    }
    Err(Error::NonConvergence { iterations: MAX_VALUE_ITERATIONS, residual })
}
