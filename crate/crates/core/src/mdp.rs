//! Exact tabular representation of a cooperative team decision process.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const STOCHASTIC_TOL: f64 = 1e-12;

/// Additive zero-mean noise on a sampled reward.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum RewardNoise {
    #[default]
    None,
    Gaussian {
        std: f64,
    },
}

impl RewardNoise {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            RewardNoise::None => 0.0,
            RewardNoise::Gaussian { std: 0.0 } => 0.0,
            RewardNoise::Gaussian { std } => Normal::new(0.0, std).expect("std validated at construction").sample(rng),
        }
    }
}

/// Mixed-radix codec between per-agent action tuples and flat joint indices.
/// Agent 0 is the most significant digit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JointSpace {
    counts: Vec<usize>,
    size: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct JointActionIndex {
    pub components: Vec<usize>,
    pub flat: usize,
}

impl JointSpace {
    pub fn new(counts: &[usize]) -> Result<Self> {
        if counts.is_empty() {
            return Err(Error::InvalidInput("at least one agent is required".into()));
        }
        if let Some(k) = counts.iter().position(|&c| c == 0) {
            return Err(Error::InvalidInput(format!("agent {k} has no actions")));
        }
        let size = counts.iter().try_fold(1usize, |acc, &c| acc.checked_mul(c));
        let size = size.ok_or_else(|| Error::InvalidInput("joint action space overflows".into()))?;
        Ok(Self { counts: counts.to_vec(), size })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn num_agents(&self) -> usize {
        self.counts.len()
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn encode(&self, components: &[usize]) -> Result<JointActionIndex> {
        if components.len() != self.counts.len() {
            return Err(Error::InvalidInput(format!(
                "expected {} action components, got {}",
                self.counts.len(),
                components.len()
            )));
        }
        let mut flat = 0;
        for (k, (&a, &c)) in components.iter().zip(&self.counts).enumerate() {
            if a >= c {
                return Err(Error::InvalidInput(format!("action {a} out of range for agent {k} ({c} actions)")));
            }
            flat = flat * c + a;
        }
        Ok(JointActionIndex { components: components.to_vec(), flat })
    }

    pub fn decode(&self, flat: usize) -> Result<JointActionIndex> {
        if flat >= self.size {
            return Err(Error::InvalidInput(format!("joint index {flat} out of range ({} joint actions)", self.size)));
        }
        let mut components = vec![0; self.counts.len()];
        let mut rest = flat;
        for (slot, &c) in components.iter_mut().zip(&self.counts).rev() {
            *slot = rest % c;
            rest /= c;
        }
        Ok(JointActionIndex { components, flat })
    }

    /// Flat index of a tuple whose components are already known to be valid.
    pub(crate) fn flat_of(&self, components: &[usize]) -> usize {
        components.iter().zip(&self.counts).fold(0, |acc, (&a, &c)| acc * c + a)
    }

    pub(crate) fn components_of(&self, flat: usize) -> Vec<usize> {
        let mut components = vec![0; self.counts.len()];
        let mut rest = flat;
        for (slot, &c) in components.iter_mut().zip(&self.counts).rev() {
            *slot = rest % c;
            rest /= c;
        }
        components
    }
}

pub fn encode_joint(components: &[usize], action_counts: &[usize]) -> Result<JointActionIndex> {
    JointSpace::new(action_counts)?.encode(components)
}

/// Serialized form of [`TeamMdp`]; validated on conversion.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TeamMdpParts {
    pub num_agents: usize,
    pub action_counts: Vec<usize>,
    pub num_states: usize,
    /// `transition[s][joint][s']`
    pub transition: Vec<Vec<Vec<f64>>>,
    /// `reward_mean[s][joint][s']`
    pub reward_mean: Vec<Vec<Vec<f64>>>,
    /// Same shape as `reward_mean`; omitted means noise-free.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reward_noise: Option<Vec<Vec<Vec<RewardNoise>>>>,
    pub discount: f64,
    pub initial_dist: Vec<f64>,
    pub terminal: Vec<bool>,
    #[serde(default)]
    pub horizon: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TeamMdpParts", into = "TeamMdpParts")]
pub struct TeamMdp {
    space: JointSpace,
    num_states: usize,
    transition: Vec<Vec<Vec<f64>>>,
    reward_mean: Vec<Vec<Vec<f64>>>,
    reward_noise: Vec<Vec<Vec<RewardNoise>>>,
    discount: f64,
    initial_dist: Vec<f64>,
    terminal: Vec<bool>,
    horizon: Option<usize>,
    /// r(s, ā) cached at construction.
    expected_reward: Vec<Vec<f64>>,
}

/// Outcome of one sampled team step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepSample {
    pub next_state: usize,
    pub reward: f64,
    pub mean_reward: f64,
    pub done: bool,
}

fn check_shape<T>(name: &str, t: &[Vec<Vec<T>>], states: usize, joint: usize) -> Result<()> {
    if t.len() != states {
        return Err(Error::InvalidInput(format!("{name}: expected {states} states, got {}", t.len())));
    }
    for (s, row) in t.iter().enumerate() {
        if row.len() != joint {
            return Err(Error::InvalidInput(format!("{name}[{s}]: expected {joint} joint actions, got {}", row.len())));
        }
        for (a, next) in row.iter().enumerate() {
            if next.len() != states {
                return Err(Error::InvalidInput(format!(
                    "{name}[{s}][{a}]: expected {states} next states, got {}",
                    next.len()
                )));
            }
        }
    }
    Ok(())
}

impl TryFrom<TeamMdpParts> for TeamMdp {
    type Error = Error;

    fn try_from(p: TeamMdpParts) -> Result<Self> {
        TeamMdp::new(p)
    }
}

impl From<TeamMdp> for TeamMdpParts {
    fn from(m: TeamMdp) -> Self {
        let noisy = m.reward_noise.iter().flatten().flatten().any(|n| *n != RewardNoise::None);
        TeamMdpParts {
            num_agents: m.space.num_agents(),
            action_counts: m.space.counts().to_vec(),
            num_states: m.num_states,
            transition: m.transition,
            reward_mean: m.reward_mean,
            reward_noise: noisy.then_some(m.reward_noise),
            discount: m.discount,
            initial_dist: m.initial_dist,
            terminal: m.terminal,
            horizon: m.horizon,
        }
    }
}

impl TeamMdp {
    pub fn new(p: TeamMdpParts) -> Result<Self> {
        if p.num_agents == 0 || p.action_counts.len() != p.num_agents {
            return Err(Error::InvalidInput(format!(
                "num_agents = {} but {} action counts given",
                p.num_agents,
                p.action_counts.len()
            )));
        }
        let space = JointSpace::new(&p.action_counts)?;
        let n = p.num_states;
        if n == 0 {
            return Err(Error::InvalidInput("at least one state is required".into()));
        }
        if !(0.0..1.0).contains(&p.discount) {
            return Err(Error::InvalidInput(format!("discount {} not in [0, 1)", p.discount)));
        }
        let joint = space.size();
        check_shape("transition", &p.transition, n, joint)?;
        check_shape("reward_mean", &p.reward_mean, n, joint)?;
        let reward_noise = match p.reward_noise {
            Some(noise) => {
                check_shape("reward_noise", &noise, n, joint)?;
                noise
            }
            None => vec![vec![vec![RewardNoise::None; n]; joint]; n],
        };
        if p.initial_dist.len() != n || p.terminal.len() != n {
            return Err(Error::InvalidInput("initial_dist and terminal must have one entry per state".into()));
        }
        if p.horizon == Some(0) {
            return Err(Error::InvalidInput("horizon must be at least 1".into()));
        }
        for s in 0..n {
            for a in 0..joint {
                let row = &p.transition[s][a];
                if row.iter().any(|&x| !x.is_finite() || x < 0.0) {
                    return Err(Error::InvalidInput(format!("transition[{s}][{a}] has invalid entries")));
                }
                let total: f64 = row.iter().sum();
                if (total - 1.0).abs() > STOCHASTIC_TOL {
                    return Err(Error::InvalidInput(format!("transition[{s}][{a}] sums to {total}, not 1")));
                }
                if p.reward_mean[s][a].iter().any(|r| !r.is_finite()) {
                    return Err(Error::InvalidInput(format!("reward_mean[{s}][{a}] not finite")));
                }
                for noise in &reward_noise[s][a] {
                    if let RewardNoise::Gaussian { std } = noise {
                        if !std.is_finite() || *std < 0.0 {
                            return Err(Error::InvalidInput(format!("reward_noise[{s}][{a}] has invalid std {std}")));
                        }
                    }
                }
                if p.terminal[s] {
                    let absorbing = (row[s] - 1.0).abs() <= STOCHASTIC_TOL;
                    let silent = p.reward_mean[s][a].iter().all(|&r| r == 0.0)
                        && reward_noise[s][a].iter().all(|n| match n {
                            RewardNoise::None => true,
                            RewardNoise::Gaussian { std } => *std == 0.0,
                        });
                    if !absorbing || !silent {
                        return Err(Error::InvalidInput(format!(
                            "terminal state {s} must be absorbing with zero reward"
                        )));
                    }
                }
            }
        }
        if p.initial_dist.iter().any(|&x| !x.is_finite() || x < 0.0) {
            return Err(Error::InvalidInput("initial_dist has invalid entries".into()));
        }
        let total: f64 = p.initial_dist.iter().sum();
        if (total - 1.0).abs() > STOCHASTIC_TOL {
            return Err(Error::InvalidInput(format!("initial_dist sums to {total}, not 1")));
        }
        let expected_reward = (0..n)
            .map(|s| {
                (0..joint)
                    .map(|a| p.transition[s][a].iter().zip(&p.reward_mean[s][a]).map(|(pr, r)| pr * r).sum())
                    .collect()
            })
            .collect();
        Ok(Self {
            space,
            num_states: n,
            transition: p.transition,
            reward_mean: p.reward_mean,
            reward_noise,
            discount: p.discount,
            initial_dist: p.initial_dist,
            terminal: p.terminal,
            horizon: p.horizon,
            expected_reward,
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn num_agents(&self) -> usize {
        self.space.num_agents()
    }

    pub fn action_counts(&self) -> &[usize] {
        self.space.counts()
    }

    pub fn joint_space(&self) -> &JointSpace {
        &self.space
    }

    pub fn num_joint_actions(&self) -> usize {
        self.space.size()
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    pub fn initial_dist(&self) -> &[f64] {
        &self.initial_dist
    }

    pub fn is_terminal(&self, s: usize) -> bool {
        self.terminal[s]
    }

    pub fn horizon(&self) -> Option<usize> {
        self.horizon
    }

    pub fn transition_row(&self, s: usize, joint: usize) -> &[f64] {
        &self.transition[s][joint]
    }

    pub fn reward_mean_row(&self, s: usize, joint: usize) -> &[f64] {
        &self.reward_mean[s][joint]
    }

    pub fn noise(&self, s: usize, joint: usize, next: usize) -> RewardNoise {
        self.reward_noise[s][joint][next]
    }

    /// r(s, ā) = Σ_{s'} P(s'|s, ā) r̄(s, ā, s'); noise has zero mean and never contributes.
    pub fn expected_reward(&self, s: usize, joint: usize) -> f64 {
        self.expected_reward[s][joint]
    }

    /// Largest expected reward over nonterminal states.
    pub fn max_expected_reward(&self) -> f64 {
        (0..self.num_states)
            .filter(|&s| !self.terminal[s])
            .flat_map(|s| self.expected_reward[s].iter().copied())
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn nonterminal_states(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.num_states).filter(move |&s| !self.terminal[s])
    }

    pub fn sample_initial<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        sample_index(&self.initial_dist, rng)
    }

    /// One team step from `s`; `steps_taken` counts steps already completed in
    /// the episode so the horizon rule can be applied.
    pub fn sample_step<R: Rng + ?Sized>(
        &self,
        s: usize,
        joint: usize,
        steps_taken: usize,
        rng: &mut R,
    ) -> Result<StepSample> {
        if s >= self.num_states || joint >= self.space.size() {
            return Err(Error::InvalidInput(format!("state {s} / joint action {joint} out of range")));
        }
        if self.terminal[s] {
            return Err(Error::ContractViolation(format!("sample_step from terminal state {s}")));
        }
        let next = sample_index(&self.transition[s][joint], rng);
        let mean_reward = self.reward_mean[s][joint][next];
        let reward = mean_reward + self.reward_noise[s][joint][next].sample(rng);
        let done = self.terminal[next] || self.horizon == Some(steps_taken + 1);
        Ok(StepSample { next_state: next, reward, mean_reward, done })
    }
}

fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            last_positive = i;
            acc += p;
            if u < acc {
                return i;
            }
        }
    }
    last_positive
}

/// Σ_t γ^t r_t
pub fn empirical_return(rewards: &[f64], gamma: f64) -> f64 {
    rewards.iter().rev().fold(0.0, |acc, &r| r + gamma * acc)
}

/// The K per-agent tables `q^k(s, a^k)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FactoredQ {
    /// `tables[k][s][a^k]`
    pub tables: Vec<Vec<Vec<f64>>>,
}

impl FactoredQ {
    pub fn zeros(num_states: usize, action_counts: &[usize]) -> Self {
        Self::filled(num_states, action_counts, 0.0)
    }

    pub fn filled(num_states: usize, action_counts: &[usize], value: f64) -> Self {
        Self { tables: action_counts.iter().map(|&c| vec![vec![value; c]; num_states]).collect() }
    }

    pub fn from_tables(tables: Vec<Vec<Vec<f64>>>) -> Self {
        Self { tables }
    }

    /// Single-state helper for matrix games: `rows[k]` is agent k's table.
    pub fn single_state(rows: &[&[f64]]) -> Self {
        Self { tables: rows.iter().map(|r| vec![r.to_vec()]).collect() }
    }

    pub fn num_agents(&self) -> usize {
        self.tables.len()
    }

    pub fn row(&self, k: usize, s: usize) -> &[f64] {
        &self.tables[k][s]
    }

    pub fn max_value(&self, k: usize, s: usize) -> f64 {
        self.tables[k][s].iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn global_max(&self) -> f64 {
        self.tables.iter().flatten().flatten().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn check_shape(&self, mdp: &TeamMdp) -> Result<()> {
        if self.tables.len() != mdp.num_agents() {
            return Err(Error::InvalidInput(format!(
                "factored q has {} agents, mdp has {}",
                self.tables.len(),
                mdp.num_agents()
            )));
        }
        for (k, t) in self.tables.iter().enumerate() {
            if t.len() != mdp.num_states() || t.iter().any(|row| row.len() != mdp.action_counts()[k]) {
                return Err(Error::InvalidInput(format!("table {k} has wrong shape")));
            }
            if t.iter().flatten().any(|v| !v.is_finite()) {
                return Err(Error::InvalidInput(format!("table {k} has non-finite entries")));
            }
        }
        Ok(())
    }

    /// sup-norm distance over nonterminal states.
    pub fn sup_distance(&self, other: &FactoredQ, mdp: &TeamMdp) -> f64 {
        let mut worst: f64 = 0.0;
        for (a, b) in self.tables.iter().zip(&other.tables) {
            for s in mdp.nonterminal_states() {
                for (x, y) in a[s].iter().zip(&b[s]) {
                    worst = worst.max((x - y).abs());
                }
            }
        }
        worst
    }
}

/// Joint table `q(s, ā)` indexed by flat joint action.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct JointQ {
    pub table: Vec<Vec<f64>>,
}

impl JointQ {
    pub fn max_value(&self, s: usize) -> f64 {
        self.table[s].iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// max_{a^{-k}} q(s, a^k, a^{-k})
    pub fn max_over_teammates(&self, space: &JointSpace, k: usize, s: usize, own: usize) -> f64 {
        self.table[s]
            .iter()
            .enumerate()
            .filter(|(j, _)| space.components_of(*j)[k] == own)
            .map(|(_, &v)| v)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// A replayable team transition; observations are per-agent keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: usize,
    pub obs: Vec<usize>,
    pub joint_action: JointActionIndex,
    pub reward: f64,
    pub next_state: usize,
    pub next_obs: Vec<usize>,
    pub done: bool,
}
