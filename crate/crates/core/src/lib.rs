//! Simulation, synthesis and optimization of fast motional-cooling pulse
//! sequences for a trapped two-level ion, plus Coulomb-chain mode analysis.

pub mod chain;
pub mod control;
pub mod cycles;
pub mod engine;
pub mod error;
pub mod linalg;
pub mod noise;
pub mod pulse;
pub mod quantum;
pub mod sector;
pub mod verify;

pub use error::{Error, Result};
pub use quantum::{JointState, SystemParams};
