use std::time::{Duration, Instant};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::envs::{Environment, TabularEnv};
use crate::error::{Error, Result};
use crate::mdp::{JointActionIndex, JointSpace, Transition};
use crate::rng::{stream_rng, Stream};

use super::buffer::ReplayBuffer;
use super::exploration::select_actions;
use super::tables::QTables;
use super::update::{Algorithm, LearnerConfig, LearnerState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub learner: LearnerConfig,
    pub epochs: usize,
    pub eval_every: usize,
    pub eval_games: usize,
    /// Record every update after which some agent's greedy action changed.
    #[serde(default)]
    pub track_greedy: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub epoch: usize,
    pub avg_test_return: f64,
    pub win_rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EvalSummary {
    pub avg_return: f64,
    pub win_rate: f64,
    /// Population variance of the per-game returns.
    pub return_variance: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunRecord {
    pub algorithm: Algorithm,
    /// Master seed; the env, exploration, buffer and eval streams derive from it.
    pub seed: u64,
    pub rows: Vec<EvalRow>,
    pub final_q: QTables,
    pub final_q_u: Option<QTables>,
    pub updates: u64,
    pub greedy_changes: Vec<u64>,
    #[serde(skip)]
    pub wall_clock: Duration,
}

impl RunRecord {
    /// Equality of everything except timing.
    pub fn same_outcome(&self, other: &RunRecord) -> bool {
        self.algorithm == other.algorithm
            && self.seed == other.seed
            && self.rows == other.rows
            && self.final_q == other.final_q
            && self.final_q_u == other.final_q_u
            && self.updates == other.updates
            && self.greedy_changes == other.greedy_changes
    }
}

/// Plays `games` episodes with `policy`, scoring Σ γ^t r̄_t on noise-free rewards.
pub fn evaluate_policy<E, F>(env: &E, mut policy: F, games: usize, gamma: f64, seed: u64) -> Result<EvalSummary>
where
    E: Environment + Clone,
    F: FnMut(&E) -> Vec<usize>,
{
    if games == 0 {
        return Err(Error::InvalidInput("at least one evaluation game is required".into()));
    }
    let mut env = env.clone();
    env.reseed(seed);
    let mut returns = Vec::with_capacity(games);
    let mut wins = 0usize;
    for _ in 0..games {
        env.reset();
        let (mut total, mut discount) = (0.0, 1.0);
        while !env.is_done() {
            let actions = policy(&env);
            let out = env.step(&actions)?;
            total += discount * out.mean_reward;
            discount *= gamma;
        }
        wins += usize::from(env.is_win());
        returns.push(total);
    }
    let n = games as f64;
    let avg_return = returns.iter().sum::<f64>() / n;
    let return_variance = returns.iter().map(|r| (r - avg_return).powi(2)).sum::<f64>() / n;
    Ok(EvalSummary { avg_return, win_rate: wins as f64 / n, return_variance })
}

/// Greedy play from per-agent tables keyed by observation.
pub fn evaluate_greedy<E: TabularEnv + Clone>(
    env: &E,
    tables: &QTables,
    games: usize,
    gamma: f64,
    seed: u64,
) -> Result<EvalSummary> {
    let agents = env.num_agents();
    evaluate_policy(env, |e| (0..agents).map(|k| tables.argmax(k, e.observe(k))).collect(), games, gamma, seed)
}

struct Tracker {
    enabled: bool,
    last: Vec<Vec<usize>>,
    changes: Vec<u64>,
}

impl Tracker {
    fn observe(&mut self, q: &QTables, update: u64) {
        if !self.enabled {
            return;
        }
        let now = q.greedy_policy();
        if now != self.last {
            self.changes.push(update);
            self.last = now;
        }
    }
}

/// Runs the configured learner on `env`; fully determined by (`cfg`, `seed`).
pub fn train<E: TabularEnv + Clone>(env: &E, cfg: &TrainConfig, seed: u64) -> Result<RunRecord> {
    let lc = &cfg.learner;
    lc.validate()?;
    if cfg.eval_every == 0 || cfg.eval_games == 0 {
        return Err(Error::InvalidInput("eval_every and eval_games must be ≥ 1".into()));
    }
    let started = Instant::now();
    let mut env = env.clone();
    env.reseed(seed);
    let counts = env.action_counts().to_vec();
    let space = JointSpace::new(&counts)?;
    let mut state = LearnerState::new(lc, &env.observation_counts(), &counts)?;
    let mut buffer = ReplayBuffer::new(lc.buffer_capacity);
    let mut explore_rng = stream_rng(seed, Stream::Exploration);
    let mut buffer_rng = stream_rng(seed, Stream::Buffer);
    let mut eval_rng = stream_rng(seed, Stream::Eval);
    let mut tracker = Tracker { enabled: cfg.track_greedy, last: state.q.greedy_policy(), changes: Vec::new() };
    let mut updates = 0u64;
    let mut rows = Vec::new();

    for epoch in 0..cfg.epochs {
        for _ in 0..lc.games_per_epoch {
            env.reset();
            while !env.is_done() {
                let obs: Vec<usize> = (0..counts.len()).map(|k| env.observe(k)).collect();
                let state_index = env.state_index();
                let actions = select_actions(&state.q, &obs, &lc.exploration, epoch, &mut explore_rng);
                let out = env.step(&actions)?;
                let t = Transition {
                    state: state_index,
                    obs,
                    joint_action: JointActionIndex { flat: space.flat_of(&actions), components: actions },
                    reward: out.reward,
                    next_state: env.state_index(),
                    next_obs: (0..counts.len()).map(|k| env.observe(k)).collect(),
                    done: out.done,
                };
                if lc.is_online() {
                    state.apply_batch(&[&t], lc);
                    updates += 1;
                    tracker.observe(&state.q, updates);
                } else {
                    buffer.push(t);
                }
            }
        }
        if !lc.is_online() {
            for _ in 0..lc.updates_per_epoch {
                let batch = buffer.sample(lc.batch_size, &mut buffer_rng);
                state.apply_batch(&batch, lc);
                updates += 1;
                tracker.observe(&state.q, updates);
            }
        }
        if lc.target_period > 0 && (epoch + 1) % lc.target_period == 0 {
            state.refresh_targets();
        }
        if (epoch + 1) % cfg.eval_every == 0 || epoch + 1 == cfg.epochs {
            let s = evaluate_greedy(&env, &state.q, cfg.eval_games, lc.gamma, eval_rng.random())?;
            rows.push(EvalRow { epoch: epoch + 1, avg_test_return: s.avg_return, win_rate: s.win_rate });
        }
    }
    Ok(RunRecord {
        algorithm: lc.algorithm,
        seed,
        rows,
        final_q: state.q,
        final_q_u: state.q_u,
        updates,
        greedy_changes: tracker.changes,
        wall_clock: started.elapsed(),
    })
}

/// Splits the last half of `total` updates into consecutive windows of
/// `window` updates (the final window may be shorter, and a last half shorter
/// than `window` forms a single window) and reports whether a greedy change
/// occurred in every one of them.
pub fn oscillates_in_last_half(changes: &[u64], total: u64, window: u64) -> bool {
    let start = total / 2;
    if total == start || window == 0 {
        return false;
    }
    let mut lo = start;
    while lo < total {
        let hi = (lo + window).min(total);
        if !changes.iter().any(|&c| c > lo && c <= hi) {
            return false;
        }
        lo = hi;
    }
    true
}
