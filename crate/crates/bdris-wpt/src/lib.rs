//! Joint waveform and reconfigurable-surface beamforming optimization for
//! multi-carrier RF wireless power transfer.
//!
//! The crate models a multi-sine transmitter, a frequency-selective channel
//! reconfigured by a fully-connected reactive surface, and a nonlinear
//! energy-harvesting receiver. On top of the model it provides waveform
//! optimization, several beamforming algorithms (semidefinite relaxation and
//! rank-constrained refinement, successive convex approximation, a low-cost
//! iterative heuristic, and diagonal-surface baselines) and an alternating
//! driver that couples the two, plus the experiment runners behind the CLI.

pub mod beamforming;
pub mod channel;
pub mod cli;
pub mod config;
pub mod error;
pub mod experiments;
pub mod rectenna;
pub mod ris;
pub mod sdp;
pub mod waveform;

pub use config::{
    BeamformerConfig, BeamformerKind, CarrierPlan, Geometry, RectifierParams, SystemConfig,
    WaveformOptConfig,
};
pub use error::{Error, Result};
