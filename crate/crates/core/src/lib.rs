//! Link-level simulator for user-centric cell-free wireless networks.
//!
//! The pipeline for one coherence block is:
//!
//! 1. [`netgeom`]: place RRHs and UEs on a torus, compute large-scale fading,
//!    calibrate the system SNR and derive the angular supports.
//! 2. [`association`]: form user-centric clusters and assign UL pilots.
//! 3. [`channel`]: draw single-ring channels and estimate them from
//!    contaminated UL pilots by subspace projection.
//! 4. [`beamforming`]: UL combiners (GZF, local LMMSE with global weights)
//!    reused as DL precoders, and the local LPZF/LZF baselines.
//! 5. [`power`]: nominal interference coefficients, nominal UL SINRs and the
//!    UL-DL duality power allocation; per-RRH EPA/PPA.
//! 6. [`eval`]: actual optimistic SINRs against the true channels, Monte Carlo
//!    ergodic rates, spectral efficiency and CDFs.
//!
//! [`experiment`] ties everything together into sweeps that write CSV/JSON
//! result tables.

pub mod association;
pub mod beamforming;
pub mod channel;
pub mod config;
pub mod dump;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod linalg;
pub mod netgeom;
pub mod power;
pub mod rng;

pub use association::AssociationGraph;
pub use beamforming::{ClusterVector, CombinerSet, PrecoderSet};
pub use channel::{ChannelSet, EstimateSet};
pub use config::{Scheme, SimConfig};
pub use error::{Error, Result};
pub use eval::RateReport;
pub use netgeom::{AngularSupports, Layout, Lsfc, Point};
pub use power::{PowerVector, ThetaMatrix};
