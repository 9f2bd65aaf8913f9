use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::tables::QTables;

/// max(floor, start · (1 − epoch / decay_epochs))
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearSchedule {
    pub start: f64,
    pub floor: f64,
    pub decay_epochs: f64,
}

impl LinearSchedule {
    pub fn constant(value: f64) -> Self {
        LinearSchedule { start: value, floor: value, decay_epochs: 1.0 }
    }

    pub fn value(&self, epoch: usize) -> f64 {
        (self.start * (1.0 - epoch as f64 / self.decay_epochs)).max(self.floor)
    }

    fn validate(&self, name: &str) -> Result<()> {
        if !(self.start.is_finite() && self.floor.is_finite() && self.decay_epochs > 0.0) {
            return Err(Error::InvalidInput(format!("{name}: schedule needs finite start/floor and decay_epochs > 0")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Exploration {
    Uniform,
    EpsilonGreedy { epsilon: LinearSchedule },
    Boltzmann { temperature: LinearSchedule },
}

impl Exploration {
    /// ε = max[0.05, 1 − epoch / 2·10⁵]
    pub fn decaying_epsilon() -> Self {
        Exploration::EpsilonGreedy { epsilon: LinearSchedule { start: 1.0, floor: 0.05, decay_epochs: 2e5 } }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Exploration::Uniform => Ok(()),
            Exploration::EpsilonGreedy { epsilon } => {
                epsilon.validate("epsilon")?;
                if !(0.0..=1.0).contains(&epsilon.start) || !(0.0..=1.0).contains(&epsilon.floor) {
                    return Err(Error::InvalidInput("epsilon must stay within [0, 1]".into()));
                }
                Ok(())
            }
            Exploration::Boltzmann { temperature } => {
                temperature.validate("temperature")?;
                if !(temperature.floor > 0.0) {
                    return Err(Error::InvalidInput("temperature floor must be > 0".into()));
                }
                Ok(())
            }
        }
    }
}

fn boltzmann<R: Rng + ?Sized>(row: &[f64], temperature: f64, rng: &mut R) -> usize {
    let best = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = row.iter().map(|v| ((v - best) / temperature).exp()).collect();
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return i;
        }
        u -= w;
    }
    row.len() - 1
}

/// Independent per-agent action choice from each agent's own table.
pub fn select_actions<R: Rng + ?Sized>(
    tables: &QTables,
    observations: &[usize],
    exploration: &Exploration,
    epoch: usize,
    rng: &mut R,
) -> Vec<usize> {
    (0..tables.num_agents())
        .map(|k| {
            let o = observations[k];
            let n = tables.row(k, o).len();
            match exploration {
                Exploration::Uniform => rng.random_range(0..n),
                Exploration::EpsilonGreedy { epsilon } => {
                    if rng.random::<f64>() < epsilon.value(epoch) {
                        rng.random_range(0..n)
                    } else {
                        tables.argmax(k, o)
                    }
                }
                Exploration::Boltzmann { temperature } => boltzmann(tables.row(k, o), temperature.value(epoch), rng),
            }
        })
        .collect()
}
