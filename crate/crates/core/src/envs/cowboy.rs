//! Four cowboys herding a bull in the open plane.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream_rng, Stream, StreamRng};

use super::{Environment, StepOutcome};

pub const NUM_COWBOYS: usize = 4;

pub const UP: usize = 0;
pub const DOWN: usize = 1;
pub const LEFT: usize = 2;
pub const RIGHT: usize = 3;
pub const STAY: usize = 4;

/// Distances below this count as coincident with the bull.
const COINCIDENT: f64 = 1e-12;

pub type Point = [f64; 2];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CowboyBullConfig {
    pub cowboy_speed: f64,
    /// Bull speed as a multiple of the cowboy speed.
    pub bull_speed_ratio: f64,
    pub horizon: usize,
    pub detection_radius: f64,
    pub escape_angle_deg: f64,
    pub distance_difference: f64,
    pub foraging_stay_prob: f64,
    pub scared_stay_prob: f64,
    /// Foraging step length as a fraction of the bull speed.
    pub small_move_fraction: f64,
    pub capture_radius: f64,
    pub move_penalty: f64,
    pub capture_reward: f64,
    pub spawn_square_side: f64,
    pub spawn_distance: f64,
}

impl Default for CowboyBullConfig {
    fn default() -> Self {
        CowboyBullConfig {
            cowboy_speed: 1.0,
            bull_speed_ratio: 1.2,
            horizon: 75,
            detection_radius: 10.0,
            escape_angle_deg: 108.0,
            distance_difference: 5.0,
            foraging_stay_prob: 0.9,
            scared_stay_prob: 0.7,
            small_move_fraction: 0.5,
            capture_radius: 2.0,
            move_penalty: 1.0 / 300.0,
            capture_reward: 1.0,
            spawn_square_side: 30.0,
            spawn_distance: 20.0,
        }
    }
}

impl CowboyBullConfig {
    pub fn bull_speed(&self) -> f64 {
        self.bull_speed_ratio * self.cowboy_speed
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("cowboy_speed", self.cowboy_speed),
            ("bull_speed_ratio", self.bull_speed_ratio),
            ("detection_radius", self.detection_radius),
            ("capture_radius", self.capture_radius),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidInput(format!("{name} must be positive and finite, got {v}")));
            }
        }
        for (name, v) in [("foraging_stay_prob", self.foraging_stay_prob), ("scared_stay_prob", self.scared_stay_prob)]
        {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidInput(format!("{name} must lie in [0, 1], got {v}")));
            }
        }
        if self.horizon == 0 {
            return Err(Error::InvalidInput("horizon must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BullBranch {
    Foraging,
    Escape,
    AwayFromClosest,
    Scared,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BullMove {
    pub displacement: Point,
    pub branch: BullBranch,
}

fn distance(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

fn heading(angle: f64, length: f64) -> Point {
    [length * angle.cos(), length * angle.sin()]
}

fn random_heading<R: Rng + ?Sized>(rng: &mut R, length: f64) -> Point {
    heading(rng.random_range(0.0..2.0 * PI), length)
}

/// Widest angular gap between consecutive cowboy bearings seen from the
/// bull, as (gap width, bisector angle). `None` if every cowboy sits on the bull.
pub fn widest_gap(bull: Point, cowboys: &[Point]) -> Option<(f64, f64)> {
    let mut bearings: Vec<f64> = cowboys
        .iter()
        .filter(|c| distance(bull, **c) > COINCIDENT)
        .map(|c| (c[1] - bull[1]).atan2(c[0] - bull[0]).rem_euclid(2.0 * PI))
        .collect();
    if bearings.is_empty() {
        return None;
    }
    bearings.sort_by(f64::total_cmp);
    let mut best = (f64::NEG_INFINITY, 0.0);
    for i in 0..bearings.len() {
        let start = bearings[i];
        let end = if i + 1 < bearings.len() { bearings[i + 1] } else { bearings[0] + 2.0 * PI };
        let width = end - start;
        if width > best.0 {
            best = (width, (start + 0.5 * width).rem_euclid(2.0 * PI));
        }
    }
    Some(best)
}

/// One move of the scripted bull.
pub fn bull_policy<R: Rng + ?Sized>(
    bull: Point,
    cowboys: &[Point],
    config: &CowboyBullConfig,
    rng: &mut R,
) -> BullMove {
    let speed = config.bull_speed();
    let dists: Vec<f64> = cowboys.iter().map(|c| distance(bull, *c)).collect();
    let closest = dists.iter().copied().fold(f64::INFINITY, f64::min);
    let farthest = dists.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let still = [0.0, 0.0];

    if closest > config.detection_radius {
        let displacement = if rng.random::<f64>() < config.foraging_stay_prob {
            still
        } else {
            random_heading(rng, config.small_move_fraction * speed)
        };
        return BullMove { displacement, branch: BullBranch::Foraging };
    }
    let gap = widest_gap(bull, cowboys);
    match gap {
        None => {
            return BullMove { displacement: random_heading(rng, speed), branch: BullBranch::Escape };
        }
        Some((width, bisector)) if width > config.escape_angle_deg.to_radians() => {
            return BullMove { displacement: heading(bisector, speed), branch: BullBranch::Escape };
        }
        _ => {}
    }
    if farthest - closest > config.distance_difference {
        let i = (0..dists.len()).fold(0, |b, i| if dists[i] < dists[b] { i } else { b });
        let away = [bull[0] - cowboys[i][0], bull[1] - cowboys[i][1]];
        let displacement = if closest > COINCIDENT {
            [away[0] / closest * speed, away[1] / closest * speed]
        } else {
            random_heading(rng, speed)
        };
        return BullMove { displacement, branch: BullBranch::AwayFromClosest };
    }
    let displacement = if rng.random::<f64>() < config.scared_stay_prob { still } else { random_heading(rng, speed) };
    BullMove { displacement, branch: BullBranch::Scared }
}

/// Global positions; the environment exposes these as every agent's observation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CowboyBullState {
    pub bull: Point,
    pub cowboys: [Point; NUM_COWBOYS],
    pub t: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryStep {
    pub t: usize,
    pub bull: Point,
    pub cowboys: [Point; NUM_COWBOYS],
    pub reward: f64,
    pub branch: Option<BullBranch>,
}

#[derive(Debug, Clone)]
pub struct CowboyBullEnv {
    config: CowboyBullConfig,
    state: CowboyBullState,
    done: bool,
    captured: bool,
    rng: StreamRng,
    trajectory: Vec<TrajectoryStep>,
    last_branch: Option<BullBranch>,
}

impl CowboyBullEnv {
    pub fn new(config: CowboyBullConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut env = CowboyBullEnv {
            config,
            state: CowboyBullState { bull: [0.0; 2], cowboys: [[0.0; 2]; NUM_COWBOYS], t: 0 },
            done: false,
            captured: false,
            rng: stream_rng(seed, Stream::Env),
            trajectory: Vec::new(),
            last_branch: None,
        };
        env.reset();
        Ok(env)
    }

    pub fn config(&self) -> &CowboyBullConfig {
        &self.config
    }

    pub fn state(&self) -> &CowboyBullState {
        &self.state
    }

    /// Overrides positions and restarts the clock, for constructed scenarios.
    pub fn set_state(&mut self, bull: Point, cowboys: [Point; NUM_COWBOYS]) {
        self.state = CowboyBullState { bull, cowboys, t: 0 };
        self.done = false;
        self.captured = false;
        self.trajectory.clear();
        self.record(0.0);
    }

    pub fn last_branch(&self) -> Option<BullBranch> {
        self.last_branch
    }

    pub fn is_captured(&self) -> bool {
        self.state.cowboys.iter().all(|c| distance(*c, self.state.bull) <= self.config.capture_radius)
    }

    pub fn trajectory(&self) -> &[TrajectoryStep] {
        &self.trajectory
    }

    pub fn trajectory_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.trajectory)?)
    }

    fn record(&mut self, reward: f64) {
        self.trajectory.push(TrajectoryStep {
            t: self.state.t,
            bull: self.state.bull,
            cowboys: self.state.cowboys,
            reward,
            branch: self.last_branch,
        });
    }
}

impl Environment for CowboyBullEnv {
    type Obs = CowboyBullState;

    fn num_agents(&self) -> usize {
        NUM_COWBOYS
    }

    fn action_counts(&self) -> &[usize] {
        &[5; NUM_COWBOYS]
    }

    /// Bull at the origin; cowboys on the corners of a square whose centre
    /// lies `spawn_distance` away in a uniformly random direction.
    fn reset(&mut self) {
        let c = random_heading(&mut self.rng, self.config.spawn_distance);
        let h = 0.5 * self.config.spawn_square_side;
        let corners = [[-h, -h], [h, -h], [h, h], [-h, h]];
        let cowboys = corners.map(|d| [c[0] + d[0], c[1] + d[1]]);
        self.last_branch = None;
        self.set_state([0.0, 0.0], cowboys);
    }

    fn step(&mut self, actions: &[usize]) -> Result<StepOutcome> {
        if self.done {
            return Err(Error::ContractViolation("step called after the episode ended".into()));
        }
        if actions.len() != NUM_COWBOYS || actions.iter().any(|&a| a > STAY) {
            return Err(Error::InvalidInput(format!("invalid joint action {actions:?}")));
        }
        let bull_move = bull_policy(self.state.bull, &self.state.cowboys, &self.config, &mut self.rng);
        let v = self.config.cowboy_speed;
        let mut movers = 0usize;
        for (c, &a) in self.state.cowboys.iter_mut().zip(actions) {
            let d = match a {
                UP => [0.0, v],
                DOWN => [0.0, -v],
                LEFT => [-v, 0.0],
                RIGHT => [v, 0.0],
                _ => [0.0, 0.0],
            };
            if a != STAY {
                movers += 1;
            }
            c[0] += d[0];
            c[1] += d[1];
        }
        self.state.bull[0] += bull_move.displacement[0];
        self.state.bull[1] += bull_move.displacement[1];
        self.state.t += 1;
        self.last_branch = Some(bull_move.branch);
        self.captured = self.is_captured();
        let mut reward = -(movers as f64) * self.config.move_penalty;
        if self.captured {
            reward += self.config.capture_reward;
        }
        self.done = self.captured || self.state.t >= self.config.horizon;
        self.record(reward);
        Ok(StepOutcome { reward, mean_reward: reward, done: self.done })
    }

    fn observe(&self, _agent: usize) -> CowboyBullState {
        self.state
    }

    fn is_done(&self) -> bool {
        self.done
    }

    fn is_win(&self) -> bool {
        self.captured
    }

    fn reseed(&mut self, seed: u64) {
        self.rng = stream_rng(seed, Stream::Env);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rng() -> StreamRng {
        stream_rng(3, Stream::Env)
    }

    #[test]
    fn all_stay_is_free() {
        let mut env = CowboyBullEnv::new(CowboyBullConfig::default(), 1).unwrap();
        let out = env.step(&[STAY; 4]).unwrap();
        assert_eq!(out.reward, 0.0);
        let out = env.step(&[UP, DOWN, LEFT, RIGHT]).unwrap();
        assert!((out.reward + 4.0 / 300.0).abs() < 1e-15);
    }

    #[test]
    fn capture_with_two_movers() {
        let base = CowboyBullEnv::new(CowboyBullConfig::default(), 1).unwrap();
        for seed in 0..100 {
            let mut env = base.clone();
            env.rng = stream_rng(seed, Stream::Env);
            env.set_state([0.0, 0.0], [[-2.5, 0.0], [2.5, 0.0], [0.0, 1.5], [0.0, -1.5]]);
            let out = env.step(&[RIGHT, LEFT, STAY, STAY]).unwrap();
            assert_eq!(env.last_branch(), Some(BullBranch::Scared));
            if env.state().bull == [0.0, 0.0] {
                assert!(out.done && env.is_win());
                assert!((out.reward - (1.0 - 2.0 / 300.0)).abs() < 1e-15);
                return;
            }
        }
        panic!("bull never stood still");
    }

    #[test]
    fn foraging_far_from_cowboys() {
        let c = CowboyBullConfig::default();
        let cowboys = [[20.0, 0.0], [-20.0, 0.0], [0.0, 20.0], [0.0, -20.0]];
        let mut r = rng();
        let n = 20_000;
        let mut still = 0;
        for _ in 0..n {
            let m = bull_policy([0.0, 0.0], &cowboys, &c, &mut r);
            assert_eq!(m.branch, BullBranch::Foraging);
            let len = m.displacement[0].hypot(m.displacement[1]);
            if len == 0.0 {
                still += 1;
            } else {
                assert!((len - 0.6).abs() < 1e-12);
            }
        }
        let f = still as f64 / n as f64;
        assert!((f - 0.9).abs() < 3.0 * (0.09f64 / n as f64).sqrt());
    }

    #[test]
    fn escape_through_open_quarter() {
        let c = CowboyBullConfig::default();
        // Cowboys spread over one quarter of the compass: gap of 270°.
        let cowboys = [[5.0, 0.0], [5.0, 2.0], [3.0, 4.0], [0.0, 5.0]];
        let m = bull_policy([0.0, 0.0], &cowboys, &c, &mut rng());
        assert_eq!(m.branch, BullBranch::Escape);
        let len = m.displacement[0].hypot(m.displacement[1]);
        assert!((len - 1.2).abs() < 1e-12);
        let angle = m.displacement[1].atan2(m.displacement[0]).rem_euclid(2.0 * PI);
        assert!((angle - 225f64.to_radians()).abs() < 1e-9);
    }

    #[test]
    fn surrounded_bull_is_scared() {
        let c = CowboyBullConfig::default();
        let cowboys = [[8.0, 0.0], [0.0, 8.0], [-8.0, 0.0], [0.0, -8.0]];
        let mut r = rng();
        let n = 20_000;
        let mut still = 0;
        for _ in 0..n {
            let m = bull_policy([0.0, 0.0], &cowboys, &c, &mut r);
            assert_eq!(m.branch, BullBranch::Scared);
            if m.displacement == [0.0, 0.0] {
                still += 1;
            }
        }
        let f = still as f64 / n as f64;
        assert!((f - 0.7).abs() < 3.0 * (0.21f64 / n as f64).sqrt());
    }

    #[test]
    fn runs_from_a_close_cowboy() {
        let c = CowboyBullConfig::default();
        let cowboys = [[1.0, 0.0], [0.0, 9.0], [-9.0, 0.0], [0.0, -9.0]];
        let m = bull_policy([0.0, 0.0], &cowboys, &c, &mut rng());
        assert_eq!(m.branch, BullBranch::AwayFromClosest);
        assert!((m.displacement[0] + 1.2).abs() < 1e-12 && m.displacement[1].abs() < 1e-12);
    }

    #[test]
    fn coincident_cowboys_are_ignored_for_bearings() {
        let cowboys = [[0.0, 0.0], [0.0, 0.0], [3.0, 0.0], [0.0, 3.0]];
        let (width, _) = widest_gap([0.0, 0.0], &cowboys).unwrap();
        assert!((width - 1.5 * PI).abs() < 1e-12);
        assert!(widest_gap([1.0, 1.0], &[[1.0, 1.0]; 4]).is_none());
    }

    #[test]
    fn trajectory_export() {
        let mut env = CowboyBullEnv::new(CowboyBullConfig::default(), 4).unwrap();
        env.step(&[UP; 4]).unwrap();
        env.step(&[STAY; 4]).unwrap();
        assert_eq!(env.trajectory().len(), 3);
        let parsed: serde_json::Value = serde_json::from_str(&env.trajectory_json().unwrap()).unwrap();
        assert_eq!(parsed.as_array().unwrap().len(), 3);
    }
}
