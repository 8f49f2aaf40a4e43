//! Band-resolved Lindblad models of Heisenberg-limited lasers.
//!
//! The crate builds three families of laser models (flat gain, split
//! gain/loss, regularly pumped), decomposes their Liouvillians by matrix band,
//! and evaluates beam coherence, Mandel-Q and Glauber correlation functions.

pub mod analytics;
pub mod banded;
pub mod error;
pub mod expm;
pub mod models;
pub mod observables;
pub mod optimize;
pub mod quad;
pub mod superop;
pub mod verify;

pub use error::{LaserError, Result};
pub use models::{build_operators, CavityOperators, Family, ModelParams};
pub use superop::{build_liouvillian, BandLiouvillian};
