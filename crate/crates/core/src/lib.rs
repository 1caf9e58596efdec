//! Diversity-regularized cooperative multi-agent Q-learning.
//!
//! Agents share a recurrent encoder and a shared Q head, and each agent adds
//! its own L1-regularized individual head. A mutual-information intrinsic
//! reward between agent identity and trajectory pushes agents apart only
//! where that pays off. The crate ships the Pac-Men foraging gridworld used
//! to study the behavior.

pub mod analysis;
pub mod checkpoint;
pub mod diversity;
pub mod envsim;
pub mod error;
pub mod gradcheck;
pub mod learner;
pub mod mixer;
pub mod nn;
pub mod params;
pub mod policy;
pub mod rng;
pub mod run;
pub mod tape;

pub use error::{Error, Result};
