//! One-shot cooperative matrix games.

use crate::error::{Error, Result};
use crate::mdp::{TeamMdp, TeamMdpParts};

use super::{Environment, StepOutcome, TabularEnv};

/// Discount used by the tabular conversion; q† equals the payoff for any γ.
pub const MATRIX_DISCOUNT: f64 = 0.5;

/// Two-agent game with `payoff[a¹][a²]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixGame {
    payoff: Vec<Vec<f64>>,
    counts: [usize; 2],
}

impl MatrixGame {
    pub fn new(payoff: Vec<Vec<f64>>) -> Result<Self> {
        let rows = payoff.len();
        let cols = payoff.first().map_or(0, Vec::len);
        if rows == 0 || cols == 0 || payoff.iter().any(|r| r.len() != cols) {
            return Err(Error::InvalidInput("payoff must be a non-empty rectangular table".into()));
        }
        if payoff.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("payoff entries must be finite".into()));
        }
        Ok(MatrixGame { payoff, counts: [rows, cols] })
    }

    /// Rows b1, b2 for agent 1; columns a1, a2, a3 for agent 2.
    pub fn fig1a() -> Self {
        Self::new(vec![vec![0.0, 2.0, 0.0], vec![0.0, 1.0, 2.0]]).expect("valid payoff")
    }

    /// Actions (α, β) for both agents; (α, α) is a suboptimal equilibrium.
    pub fn nash_counterexample() -> Self {
        Self::new(vec![vec![0.0, -1.0], vec![-1.0, 1.0]]).expect("valid payoff")
    }

    pub fn payoff(&self, a1: usize, a2: usize) -> f64 {
        self.payoff[a1][a2]
    }

    pub fn action_counts(&self) -> [usize; 2] {
        self.counts
    }

    pub fn max_payoff(&self) -> f64 {
        self.payoff.iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Start state 0 and absorbing terminal state 1.
    pub fn to_tabular(&self) -> TeamMdp {
        let joint = self.counts[0] * self.counts[1];
        let to_terminal = vec![vec![0.0, 1.0]; joint];
        let rewards = (0..joint).map(|j| vec![0.0, self.payoff[j / self.counts[1]][j % self.counts[1]]]).collect();
        TeamMdp::new(TeamMdpParts {
            num_agents: 2,
            action_counts: self.counts.to_vec(),
            num_states: 2,
            transition: vec![to_terminal, vec![vec![0.0, 1.0]; joint]],
            reward_mean: vec![rewards, vec![vec![0.0; 2]; joint]],
            reward_noise: None,
            discount: MATRIX_DISCOUNT,
            initial_dist: vec![1.0, 0.0],
            terminal: vec![false, true],
            horizon: None,
        })
        .expect("matrix game conversion is valid")
    }
}

/// Episodic wrapper: every episode is a single step.
#[derive(Debug, Clone)]
pub struct MatrixEnv {
    game: MatrixGame,
    counts: Vec<usize>,
    done: bool,
    won: bool,
}

impl MatrixEnv {
    pub fn new(game: MatrixGame) -> Self {
        let counts = game.action_counts().to_vec();
        MatrixEnv { game, counts, done: false, won: false }
    }

    pub fn game(&self) -> &MatrixGame {
        &self.game
    }
}

impl Environment for MatrixEnv {
    type Obs = usize;

    fn num_agents(&self) -> usize {
        2
    }

    fn action_counts(&self) -> &[usize] {
        &self.counts
    }

    fn reset(&mut self) {
        self.done = false;
        self.won = false;
    }

    fn step(&mut self, actions: &[usize]) -> Result<StepOutcome> {
        if self.done {
            return Err(Error::ContractViolation("step called after the episode ended".into()));
        }
        if actions.len() != 2 || actions[0] >= self.counts[0] || actions[1] >= self.counts[1] {
            return Err(Error::InvalidInput(format!("invalid joint action {actions:?}")));
        }
        let r = self.game.payoff(actions[0], actions[1]);
        self.done = true;
        self.won = r == self.game.max_payoff();
        Ok(StepOutcome { reward: r, mean_reward: r, done: true })
    }

    fn observe(&self, _agent: usize) -> usize {
        0
    }

    fn is_done(&self) -> bool {
        self.done
    }

    fn is_win(&self) -> bool {
        self.won
    }

    fn reseed(&mut self, _seed: u64) {}
}

impl TabularEnv for MatrixEnv {
    fn observation_counts(&self) -> Vec<usize> {
        vec![1, 1]
    }

    fn state_index(&self) -> usize {
        usize::from(self.done)
    }
}
