use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::envs::matrix::MATRIX_DISCOUNT;
use crate::envs::{ButtonGridConfig, CowboyBullConfig, MatrixGame};
use crate::error::{Error, Result};
use crate::learners::{Algorithm, Exploration, LearnerConfig};
use crate::mdp::TeamMdp;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatrixPreset {
    #[default]
    Fig1a,
    /// 2×2 game with a suboptimal `B_E` fixed point.
    Nash,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixSpec {
    #[serde(default)]
    pub preset: MatrixPreset,
    /// Overrides the preset when set; rows are agent 1's actions.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payoff: Option<Vec<Vec<f64>>>,
}

impl MatrixSpec {
    pub fn game(&self) -> Result<MatrixGame> {
        match &self.payoff {
            Some(p) => MatrixGame::new(p.clone()),
            None => Ok(match self.preset {
                MatrixPreset::Fig1a => MatrixGame::fig1a(),
                MatrixPreset::Nash => MatrixGame::nash_counterexample(),
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum EnvSpec {
    Matrix(MatrixSpec),
    ButtonGrid(ButtonGridConfig),
    CowboyBull(CowboyBullConfig),
}

impl EnvSpec {
    pub fn label(&self) -> &'static str {
        match self {
            EnvSpec::Matrix(_) => "matrix",
            EnvSpec::ButtonGrid(_) => "button-grid",
            EnvSpec::CowboyBull(_) => "cowboy-bull",
        }
    }

    pub fn to_tabular(&self) -> Result<TeamMdp> {
        match self {
            EnvSpec::Matrix(m) => Ok(m.game()?.to_tabular()),
            EnvSpec::ButtonGrid(b) => b.to_tabular(),
            EnvSpec::CowboyBull(_) => {
                Err(Error::Unsupported("cowboy-bull has a continuous state space and no tabular form".into()))
            }
        }
    }
}

fn default_eval_games() -> usize {
    50
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("results")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub id: String,
    pub env: EnvSpec,
    pub algorithms: Vec<LearnerConfig>,
    pub seeds: Vec<u64>,
    pub epochs: usize,
    pub eval_every: usize,
    #[serde(default = "default_eval_games")]
    pub eval_games: usize,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub track_greedy: bool,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |path: &str, message: &str| Err(Error::Config { path: path.into(), message: message.into() });
        if self.id.is_empty() || self.id.contains(['/', '\\']) {
            return fail("id", "must be a non-empty name without path separators");
        }
        if self.seeds.is_empty() {
            return fail("seeds", "at least one seed is required");
        }
        if self.algorithms.is_empty() {
            return fail("algorithms", "at least one algorithm is required");
        }
        if self.epochs == 0 {
            return fail("epochs", "must be ≥ 1");
        }
        if self.eval_every == 0 {
            return fail("eval_every", "must be ≥ 1");
        }
        if self.eval_games == 0 {
            return fail("eval_games", "must be ≥ 1");
        }
        let mut seen = Vec::new();
        for (i, a) in self.algorithms.iter().enumerate() {
            if seen.contains(&a.algorithm) {
                return fail(&format!("algorithms[{i}].algorithm"), "each algorithm may appear once");
            }
            seen.push(a.algorithm);
            a.validate().map_err(|e| Error::Config { path: format!("algorithms[{i}]"), message: e.to_string() })?;
        }
        if let EnvSpec::Matrix(m) = &self.env {
            m.game().map_err(|e| Error::Config { path: "env.payoff".into(), message: e.to_string() })?;
        }
        if let EnvSpec::CowboyBull(c) = &self.env {
            c.validate().map_err(|e| Error::Config { path: "env".into(), message: e.to_string() })?;
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let de = toml::Deserializer::new(text);
        let cfg: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            Error::Config { path, message: inner.message().to_string() }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::InvalidInput(e.to_string()))
    }

    /// Builtin preset, or a TOML file when `name` is not a preset.
    pub fn resolve(name: &str) -> Result<Self> {
        match name {
            "exp1" => Ok(Self::exp1()),
            "exp2" => Ok(Self::exp2()),
            path => Self::load(Path::new(path)),
        }
    }

    /// Matrix game: μ = 0.1, α = 1, uniform exploration, online, 5000 games.
    pub fn exp1() -> Self {
        let learner = |alg| LearnerConfig { gamma: MATRIX_DISCOUNT, ..LearnerConfig::new(alg, 0.1) };
        ExperimentConfig {
            id: "exp1".into(),
            env: EnvSpec::Matrix(MatrixSpec::default()),
            algorithms: vec![learner(Algorithm::Ltql), learner(Algorithm::Distq), learner(Algorithm::Iql)],
            seeds: (0..20).collect(),
            epochs: 5000,
            eval_every: 50,
            eval_games: default_eval_games(),
            output_dir: PathBuf::from("results/exp1"),
            track_greedy: true,
        }
    }

    /// Button grid: μ = 0.025, HystQ small step 0.01, decaying ε, online, 2·10⁵ epochs.
    pub fn exp2() -> Self {
        let learner = |alg| LearnerConfig {
            exploration: Exploration::decaying_epsilon(),
            small_step_ratio: 0.01 / 0.025,
            ..LearnerConfig::new(alg, 0.025)
        };
        ExperimentConfig {
            id: "exp2".into(),
            env: EnvSpec::ButtonGrid(ButtonGridConfig::default()),
            algorithms: [Algorithm::Ltql, Algorithm::Iql, Algorithm::Distq, Algorithm::Hystq].map(learner).to_vec(),
            seeds: (0..20).collect(),
            epochs: 200_000,
            eval_every: 2000,
            eval_games: default_eval_games(),
            output_dir: PathBuf::from("results/exp2"),
            track_greedy: false,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_round_trip_through_toml() {
        for cfg in [ExperimentConfig::exp1(), ExperimentConfig::exp2()] {
            let text = cfg.to_toml().unwrap();
            assert_eq!(ExperimentConfig::from_toml(&text).unwrap(), cfg);
        }
    }

    #[test]
    fn missing_env_name_is_reported_with_its_path() {
        let text = r#"
id = "x"
seeds = [1]
epochs = 10
eval_every = 5
[env]
preset = "fig1a"
[[algorithms]]
algorithm = "iql"
step_size = 0.1
"#;
        match ExperimentConfig::from_toml(text) {
            Err(Error::Config { path, message }) => {
                assert_eq!(path, "env");
                assert!(message.contains("name"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn nested_field_errors_carry_the_full_path() {
        let text = r#"
id = "x"
seeds = [1]
epochs = 10
eval_every = 5
[env]
name = "button-grid"
[[algorithms]]
algorithm = "iql"
step_size = "fast"
"#;
        match ExperimentConfig::from_toml(text) {
            Err(Error::Config { path, .. }) => assert_eq!(path, "algorithms[0].step_size"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn semantic_checks() {
        let mut cfg = ExperimentConfig::exp1();
        cfg.seeds.clear();
        assert!(matches!(cfg.validate(), Err(Error::Config { path, .. }) if path == "seeds"));
        let mut cfg = ExperimentConfig::exp1();
        cfg.eval_games = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = ExperimentConfig::exp1();
        cfg.algorithms[1].step_size = -1.0;
        assert!(matches!(cfg.validate(), Err(Error::Config { path, .. }) if path == "algorithms[1]"));
    }

    #[test]
    fn cowboy_has_no_tabular_form() {
        let spec = EnvSpec::CowboyBull(CowboyBullConfig::default());
        assert!(matches!(spec.to_tabular(), Err(Error::Unsupported(_))));
    }
}
