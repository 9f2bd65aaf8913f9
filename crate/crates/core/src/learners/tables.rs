use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::FactoredQ;

/// Per-agent tables `q^k(o^k, a^k)` keyed by observation index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct QTables {
    pub tables: Vec<Vec<Vec<f64>>>,
}

impl QTables {
    pub fn new(observation_counts: &[usize], action_counts: &[usize], init: f64) -> Result<Self> {
        if observation_counts.len() != action_counts.len() {
            return Err(Error::InvalidInput(format!(
                "{} observation spaces for {} agents",
                observation_counts.len(),
                action_counts.len()
            )));
        }
        if !init.is_finite() {
            return Err(Error::InvalidInput(format!("initial value must be finite, got {init}")));
        }
        let tables = observation_counts.iter().zip(action_counts).map(|(&o, &a)| vec![vec![init; a]; o]).collect();
        Ok(QTables { tables })
    }

    pub fn num_agents(&self) -> usize {
        self.tables.len()
    }

    pub fn row(&self, k: usize, obs: usize) -> &[f64] {
        &self.tables[k][obs]
    }

    pub fn get(&self, k: usize, obs: usize, a: usize) -> f64 {
        self.tables[k][obs][a]
    }

    pub fn max(&self, k: usize, obs: usize) -> f64 {
        self.tables[k][obs].iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Lowest-index maximizer.
    pub fn argmax(&self, k: usize, obs: usize) -> usize {
        let row = &self.tables[k][obs];
        let mut best = 0;
        for (i, &v) in row.iter().enumerate().skip(1) {
            if v > row[best] {
                best = i;
            }
        }
        best
    }

    /// Greedy action of every agent at every observation.
    pub fn greedy_policy(&self) -> Vec<Vec<usize>> {
        (0..self.tables.len()).map(|k| (0..self.tables[k].len()).map(|o| self.argmax(k, o)).collect()).collect()
    }

    /// Reinterprets the tables as a factored q over states; valid when each
    /// agent observes the global state.
    pub fn to_factored(&self) -> FactoredQ {
        FactoredQ::from_tables(self.tables.clone())
    }

    pub fn sup_distance(&self, other: &QTables) -> f64 {
        self.tables
            .iter()
            .flatten()
            .flatten()
            .zip(other.tables.iter().flatten().flatten())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}
