//! Tabular update rules. Every rule computes its increments against the
//! tables as they were before the batch and applies the summed increments
//! afterwards.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::Transition;

use super::exploration::Exploration;
use super::tables::QTables;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    /// Biased and unbiased tables; c1 and c2 checked independently.
    Ltql,
    /// Single table; c2 only consulted when c1 fails.
    LtqlDet,
    Iql,
    Distq,
    Hystq,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Ltql => "ltql",
            Algorithm::LtqlDet => "ltql_det",
            Algorithm::Iql => "iql",
            Algorithm::Distq => "distq",
            Algorithm::Hystq => "hystq",
        }
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

fn default_alpha() -> f64 {
    1.0
}

fn default_small_step_ratio() -> f64 {
    0.4
}

fn default_one() -> usize {
    1
}

fn default_gamma() -> f64 {
    0.9
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LearnerConfig {
    pub algorithm: Algorithm,
    pub step_size: f64,
    /// Weight of the c2 update in LTQL.
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// HystQ uses step_size · small_step_ratio for non-positive TD errors.
    #[serde(default = "default_small_step_ratio")]
    pub small_step_ratio: f64,
    /// 0 means online: every transition is applied as soon as it is observed.
    #[serde(default)]
    pub buffer_capacity: usize,
    #[serde(default = "default_one")]
    pub batch_size: usize,
    #[serde(default = "default_one")]
    pub updates_per_epoch: usize,
    #[serde(default = "default_one")]
    pub games_per_epoch: usize,
    /// Epochs between target refreshes; 0 disables target tables.
    #[serde(default)]
    pub target_period: usize,
    #[serde(default = "default_exploration")]
    pub exploration: Exploration,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default)]
    pub init_value: f64,
}

fn default_exploration() -> Exploration {
    Exploration::Uniform
}

impl LearnerConfig {
    pub fn new(algorithm: Algorithm, step_size: f64) -> Self {
        LearnerConfig {
            algorithm,
            step_size,
            alpha: default_alpha(),
            small_step_ratio: default_small_step_ratio(),
            buffer_capacity: 0,
            batch_size: 1,
            updates_per_epoch: 1,
            games_per_epoch: 1,
            target_period: 0,
            exploration: Exploration::Uniform,
            gamma: default_gamma(),
            init_value: 0.0,
        }
    }

    pub fn small_step(&self) -> f64 {
        self.step_size * self.small_step_ratio
    }

    pub fn is_online(&self) -> bool {
        self.buffer_capacity == 0
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            problems.push(format!("step_size must be > 0, got {}", self.step_size));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            problems.push(format!("alpha must be ≥ 0, got {}", self.alpha));
        }
        if !(0.0..=1.0).contains(&self.small_step_ratio) {
            problems.push(format!("small_step_ratio must lie in [0, 1], got {}", self.small_step_ratio));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            problems.push(format!("gamma must lie in [0, 1], got {}", self.gamma));
        }
        if self.games_per_epoch == 0 {
            problems.push("games_per_epoch must be ≥ 1".into());
        }
        if !self.is_online() && (self.batch_size == 0 || self.updates_per_epoch == 0) {
            problems.push("batch_size and updates_per_epoch must be ≥ 1 with a buffer".into());
        }
        if !self.init_value.is_finite() {
            problems.push("init_value must be finite".into());
        }
        if let Err(e) = self.exploration.validate() {
            problems.push(e.to_string());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidInput(problems.join("; ")))
        }
    }
}

/// Mutable tables of one learner. `q` is θ (q_B) for LTQL and the only table
/// for the other algorithms; `q_u` is ω (q_U), present for LTQL only.
#[derive(Debug, Clone, PartialEq)]
pub struct LearnerState {
    pub algorithm: Algorithm,
    pub q: QTables,
    pub q_u: Option<QTables>,
    pub q_target: Option<QTables>,
    pub q_u_target: Option<QTables>,
}

impl LearnerState {
    pub fn new(cfg: &LearnerConfig, observation_counts: &[usize], action_counts: &[usize]) -> Result<Self> {
        let q = QTables::new(observation_counts, action_counts, cfg.init_value)?;
        let q_u = (cfg.algorithm == Algorithm::Ltql).then(|| q.clone());
        let targets = cfg.target_period > 0;
        Ok(LearnerState {
            algorithm: cfg.algorithm,
            q_target: targets.then(|| q.clone()),
            q_u_target: if targets { q_u.clone() } else { None },
            q,
            q_u,
        })
    }

    pub fn refresh_targets(&mut self) {
        if let Some(t) = self.q_target.as_mut() {
            t.clone_from(&self.q);
        }
        if let (Some(t), Some(u)) = (self.q_u_target.as_mut(), self.q_u.as_ref()) {
            t.clone_from(u);
        }
    }

    /// Table whose argmax defines teammates' greedy actions in c1.
    fn c1_reference(&self) -> &QTables {
        self.q_target.as_ref().unwrap_or(&self.q)
    }

    /// Table that supplies max_a q(o', a) in the TD target.
    fn bootstrap(&self) -> &QTables {
        match self.algorithm {
            Algorithm::Ltql => self.q_u_target.as_ref().or(self.q_u.as_ref()).expect("LTQL carries an unbiased table"),
            _ => self.q_target.as_ref().unwrap_or(&self.q),
        }
    }

    fn target(&self, t: &Transition, k: usize, gamma: f64) -> f64 {
        let future = if t.done { 0.0 } else { self.bootstrap().max(k, t.next_obs[k]) };
        t.reward + gamma * future
    }

    fn teammates_greedy(&self, t: &Transition, k: usize) -> bool {
        let reference = self.c1_reference();
        let actions = &t.joint_action.components;
        (0..actions.len()).filter(|&n| n != k).all(|n| actions[n] == reference.argmax(n, t.obs[n]))
    }

    /// Applies one batch (a single transition when online).
    pub fn apply_batch(&mut self, batch: &[&Transition], cfg: &LearnerConfig) {
        let mut dq = Increments::default();
        let mut du = Increments::default();
        let mu = cfg.step_size;
        for t in batch {
            for k in 0..t.obs.len() {
                let (o, a) = (t.obs[k], t.joint_action.components[k]);
                let target = self.target(t, k, cfg.gamma);
                let current = self.q.get(k, o, a);
                let td = target - current;
                match self.algorithm {
                    Algorithm::Ltql => {
                        if self.teammates_greedy(t, k) {
                            dq.add(k, o, a, mu * td);
                            let u = self.q_u.as_ref().expect("LTQL carries an unbiased table");
                            du.add(k, o, a, mu * (target - u.get(k, o, a)));
                        }
                        if target > current {
                            dq.add(k, o, a, mu * cfg.alpha * td);
                        }
                    }
                    Algorithm::LtqlDet => {
                        if self.teammates_greedy(t, k) {
                            dq.add(k, o, a, mu * td);
                        } else if target > current {
                            dq.add(k, o, a, mu * cfg.alpha * td);
                        }
                    }
                    Algorithm::Iql => dq.add(k, o, a, mu * td),
                    Algorithm::Distq => {
                        if td > 0.0 {
                            dq.add(k, o, a, mu * td);
                        }
                    }
                    Algorithm::Hystq => {
                        let step = if td > 0.0 { mu } else { cfg.small_step() };
                        if step != 0.0 {
                            dq.add(k, o, a, step * td);
                        }
                    }
                }
            }
        }
        dq.apply(&mut self.q);
        if let Some(u) = self.q_u.as_mut() {
            du.apply(u);
        }
    }
}

#[derive(Default)]
struct Increments {
    entries: Vec<((usize, usize, usize), f64)>,
}

impl Increments {
    fn add(&mut self, k: usize, o: usize, a: usize, v: f64) {
        match self.entries.iter_mut().find(|(key, _)| *key == (k, o, a)) {
            Some((_, acc)) => *acc += v,
            None => self.entries.push(((k, o, a), v)),
        }
    }

    fn apply(self, q: &mut QTables) {
        for ((k, o, a), v) in self.entries {
            q.tables[k][o][a] += v;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::JointActionIndex;

    fn transition(actions: [usize; 2], reward: f64) -> Transition {
        Transition {
            state: 0,
            obs: vec![0, 0],
            joint_action: JointActionIndex { components: actions.to_vec(), flat: actions[0] * 3 + actions[1] },
            reward,
            next_state: 1,
            next_obs: vec![0, 0],
            done: true,
        }
    }

    fn state(alg: Algorithm) -> (LearnerState, LearnerConfig) {
        let mut cfg = LearnerConfig::new(alg, 0.1);
        cfg.small_step_ratio = 0.5;
        (LearnerState::new(&cfg, &[1, 1], &[2, 3]).unwrap(), cfg)
    }

    #[test]
    fn ltql_no_branch_no_change() {
        let (mut s, cfg) = state(Algorithm::Ltql);
        s.q.tables[0][0] = vec![1.0, 1.0];
        s.q.tables[1][0] = vec![0.5, 1.0, 0.0];
        let before = s.clone();
        // Agent 1's teammate played a1 ≠ argmax a2; reward below q_B: nothing fires for agent 1.
        // Agent 2's teammate played b1 = argmax; that is c1, so only check agent 1.
        s.apply_batch(&[&transition([0, 0], 0.0)], &cfg);
        assert_eq!(s.q.tables[0], before.q.tables[0]);
        assert_eq!(s.q_u.as_ref().unwrap().tables[0], before.q_u.as_ref().unwrap().tables[0]);
    }

    #[test]
    fn ltql_both_branches_can_fire() {
        let (mut s, cfg) = state(Algorithm::Ltql);
        // Zero tables: teammates' argmax is action 0, so (0, 0) satisfies c1 for both.
        s.apply_batch(&[&transition([0, 0], 1.0)], &cfg);
        // c1 adds 0.1, c2 adds another 0.1 from the same pre-update error.
        assert!((s.q.get(0, 0, 0) - 0.2).abs() < 1e-15);
        assert!((s.q_u.as_ref().unwrap().get(0, 0, 0) - 0.1).abs() < 1e-15);
    }

    #[test]
    fn ltql_det_uses_else_branch() {
        let (mut s, cfg) = state(Algorithm::LtqlDet);
        s.apply_batch(&[&transition([0, 0], 1.0)], &cfg);
        assert!((s.q.get(0, 0, 0) - 0.1).abs() < 1e-15);
        s.apply_batch(&[&transition([1, 2], 2.0)], &cfg);
        // Teammate played a3 while argmax is a1: c2 path with α = 1.
        assert!((s.q.get(0, 0, 1) - 0.2).abs() < 1e-15);
    }

    #[test]
    fn distq_never_decreases() {
        let (mut s, cfg) = state(Algorithm::Distq);
        s.q.tables[0][0] = vec![1.0, 1.0];
        s.apply_batch(&[&transition([0, 0], -5.0)], &cfg);
        assert_eq!(s.q.get(0, 0, 0), 1.0);
        s.apply_batch(&[&transition([0, 0], 3.0)], &cfg);
        assert!((s.q.get(0, 0, 0) - 1.2).abs() < 1e-15);
    }

    #[test]
    fn hystq_small_step_on_negative_error() {
        let (mut s, cfg) = state(Algorithm::Hystq);
        s.apply_batch(&[&transition([0, 0], -1.0)], &cfg);
        assert!((s.q.get(0, 0, 0) + 0.05).abs() < 1e-15);
        s.apply_batch(&[&transition([1, 1], 1.0)], &cfg);
        assert!((s.q.get(0, 0, 1) - 0.1).abs() < 1e-15);
    }

    #[test]
    fn batch_increments_use_pre_batch_values() {
        let (mut s, cfg) = state(Algorithm::Iql);
        let t = transition([0, 0], 1.0);
        s.apply_batch(&[&t, &t], &cfg);
        assert!((s.q.get(0, 0, 0) - 0.2).abs() < 1e-15);
    }

    #[test]
    fn zero_step_size_is_rejected_but_alpha_zero_is_fine() {
        let mut cfg = LearnerConfig::new(Algorithm::Iql, 0.0);
        assert!(cfg.validate().is_err());
        cfg.step_size = 0.1;
        cfg.alpha = 0.0;
        assert!(cfg.validate().is_ok());
    }
}
