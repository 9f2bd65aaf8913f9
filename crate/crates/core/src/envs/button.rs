//! Four-slot button grid: agent 2 walks left along the grid, agent 1 holds
//! the button and must press it exactly when agent 2 waits at slot 0.

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{RewardNoise, TeamMdp, TeamMdpParts};
use crate::rng::{stream_rng, Stream, StreamRng};

use super::{Environment, StepOutcome, TabularEnv};

pub const POSITIONS: usize = 4;
pub const HORIZON: usize = 5;
pub const START_POSITION: usize = 3;

pub const PUSH: usize = 0;
pub const NO_PUSH: usize = 1;
pub const STAY: usize = 0;
pub const LEFT: usize = 1;
pub const RIGHT: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ButtonGridConfig {
    pub success_reward: f64,
    pub penalty: f64,
    /// Noise on the success and penalty rewards.
    pub event_std: f64,
    /// Noise of the zero-mean reward for walking into an edge.
    pub bump_std: f64,
    /// Noise on event-free steps; 0 means they pay exactly 0.
    pub idle_std: f64,
    pub gamma: f64,
}

impl Default for ButtonGridConfig {
    fn default() -> Self {
        ButtonGridConfig {
            success_reward: 10.0,
            penalty: -30.0,
            event_std: 1.0,
            bump_std: 3.0,
            idle_std: 0.0,
            gamma: 0.9,
        }
    }
}

/// Result of one step from a given slot, before noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ButtonDynamics {
    pub next_position: usize,
    pub mean_reward: f64,
    pub noise_std: f64,
    /// The success event fired; the episode ends.
    pub success: bool,
}

impl ButtonGridConfig {
    pub fn dynamics(&self, position: usize, push: usize, walk: usize) -> ButtonDynamics {
        let pushed = push == PUSH;
        let blocked = (walk == LEFT && position == 0) || (walk == RIGHT && position == POSITIONS - 1);
        let event = |next_position, mean_reward, noise_std, success| ButtonDynamics {
            next_position,
            mean_reward,
            noise_std,
            success,
        };
        if blocked {
            return event(position, 0.0, self.bump_std, false);
        }
        match walk {
            STAY if position == 0 && pushed => event(0, self.success_reward, self.event_std, true),
            STAY if position == 0 => event(0, self.penalty, self.event_std, false),
            STAY => event(position, 0.0, self.idle_std, false),
            LEFT if pushed => event(position - 1, self.penalty, self.event_std, false),
            LEFT => event(position - 1, 0.0, self.idle_std, false),
            _ => event(position + 1, 0.0, self.idle_std, false),
        }
    }

    /// Tabular state `position · HORIZON + t`, with state 20 terminal.
    pub fn to_tabular(&self) -> Result<TeamMdp> {
        let n = POSITIONS * HORIZON + 1;
        let terminal = n - 1;
        let joint = 2 * 3;
        let mut transition = vec![vec![vec![0.0; n]; joint]; n];
        let mut reward_mean = vec![vec![vec![0.0; n]; joint]; n];
        let mut reward_noise = vec![vec![vec![RewardNoise::None; n]; joint]; n];
        for pos in 0..POSITIONS {
            for t in 0..HORIZON {
                let s = pos * HORIZON + t;
                for j in 0..joint {
                    let d = self.dynamics(pos, j / 3, j % 3);
                    let next = if d.success || t + 1 == HORIZON { terminal } else { d.next_position * HORIZON + t + 1 };
                    transition[s][j][next] = 1.0;
                    reward_mean[s][j][next] = d.mean_reward;
                    if d.noise_std > 0.0 {
                        reward_noise[s][j][next] = RewardNoise::Gaussian { std: d.noise_std };
                    }
                }
            }
        }
        for j in 0..joint {
            transition[terminal][j][terminal] = 1.0;
        }
        let mut initial_dist = vec![0.0; n];
        initial_dist[START_POSITION * HORIZON] = 1.0;
        let mut flags = vec![false; n];
        flags[terminal] = true;
        TeamMdp::new(TeamMdpParts {
            num_agents: 2,
            action_counts: vec![2, 3],
            num_states: n,
            transition,
            reward_mean,
            reward_noise: Some(reward_noise),
            discount: self.gamma,
            initial_dist,
            terminal: flags,
            horizon: None,
        })
    }
}

/// enough_time: the remaining steps exceed agent 2's distance to slot 0.
pub fn enough_time(position: usize, t: usize) -> bool {
    HORIZON.saturating_sub(t) > position
}

/// Agent 1 sees (at_leftmost, enough_time); agent 2 sees (position, enough_time).
pub fn observation_key(agent: usize, position: usize, t: usize) -> usize {
    let enough = usize::from(enough_time(position, t));
    match agent {
        0 => usize::from(position == 0) * 2 + enough,
        _ => position * 2 + enough,
    }
}

#[derive(Debug, Clone)]
pub struct ButtonGridEnv {
    config: ButtonGridConfig,
    position: usize,
    t: usize,
    done: bool,
    won: bool,
    rng: StreamRng,
}

impl ButtonGridEnv {
    pub fn new(config: ButtonGridConfig, seed: u64) -> Self {
        ButtonGridEnv {
            config,
            position: START_POSITION,
            t: 0,
            done: false,
            won: false,
            rng: stream_rng(seed, Stream::Env),
        }
    }

    pub fn config(&self) -> &ButtonGridConfig {
        &self.config
    }

    pub fn position(&self) -> usize {
        self.position
    }

    pub fn time(&self) -> usize {
        self.t
    }

    /// Places agent 2 at `position` at time `t` with the episode active.
    pub fn set_state(&mut self, position: usize, t: usize) -> Result<()> {
        if position >= POSITIONS || t >= HORIZON {
            return Err(Error::InvalidInput(format!("state ({position}, {t}) out of range")));
        }
        self.position = position;
        self.t = t;
        self.done = false;
        self.won = false;
        Ok(())
    }
}

impl Environment for ButtonGridEnv {
    type Obs = usize;

    fn num_agents(&self) -> usize {
        2
    }

    fn action_counts(&self) -> &[usize] {
        &[2, 3]
    }

    fn reset(&mut self) {
        self.position = START_POSITION;
        self.t = 0;
        self.done = false;
        self.won = false;
    }

    fn step(&mut self, actions: &[usize]) -> Result<StepOutcome> {
        if self.done {
            return Err(Error::ContractViolation("step called after the episode ended".into()));
        }
        if actions.len() != 2 || actions[0] >= 2 || actions[1] >= 3 {
            return Err(Error::InvalidInput(format!("invalid joint action {actions:?}")));
        }
        let d = self.config.dynamics(self.position, actions[0], actions[1]);
        let noise = if d.noise_std > 0.0 {
            Normal::new(0.0, d.noise_std).expect("positive std").sample(&mut self.rng)
        } else {
            0.0
        };
        self.position = d.next_position;
        self.t += 1;
        self.won = d.success;
        self.done = d.success || self.t == HORIZON;
        Ok(StepOutcome { reward: d.mean_reward + noise, mean_reward: d.mean_reward, done: self.done })
    }

    fn observe(&self, agent: usize) -> usize {
        observation_key(agent, self.position, self.t)
    }

    fn is_done(&self) -> bool {
        self.done
    }

    fn is_win(&self) -> bool {
        self.won
    }

    fn reseed(&mut self, seed: u64) {
        self.rng = stream_rng(seed, Stream::Env);
    }
}

impl TabularEnv for ButtonGridEnv {
    fn observation_counts(&self) -> Vec<usize> {
        vec![4, POSITIONS * 2]
    }

    fn state_index(&self) -> usize {
        if self.done {
            POSITIONS * HORIZON
        } else {
            self.position * HORIZON + self.t
        }
    }
}
