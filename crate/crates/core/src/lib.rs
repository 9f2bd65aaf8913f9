#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord, clippy::too_many_arguments)]

pub mod dp;
pub mod envs;
pub mod error;
pub mod experiment;
pub mod learners;
pub mod mdp;
pub mod rng;

pub use error::{Error, Result};
pub use mdp::{FactoredQ, JointActionIndex, JointQ, JointSpace, RewardNoise, TeamMdp, Transition};
