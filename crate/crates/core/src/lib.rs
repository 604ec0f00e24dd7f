//! Design-space exploration for sparse spectral-CNN accelerators.
//!
//! The crate is organised bottom-up:
//!
//! - [`netmodel`]: layer/model configuration, tiling arithmetic and synthetic
//!   sparse spectral kernels.
//! - [`complexity`]: closed-form BRAM and off-chip transfer models for the
//!   three fixed reuse flows and the flexible (Ps, Ns) flow, plus the
//!   compute-proportional latency budget.
//! - [`flowopt`]: the architecture/streaming-parameter scan that minimises
//!   worst-layer bandwidth under a BRAM budget.
//! - [`scheduler`]: conflict-free grouping of sparse-kernel reads into
//!   cycles under `r` input replicas, with baselines, an exhaustive oracle
//!   and INDEX/VALUE table emission.
//! - [`spectralsim`]: FFT tiles, sparse Hadamard accumulation, overlap-add,
//!   a direct spatial reference and an event-level streaming-controller
//!   simulator that recounts transfers independently of the closed forms.
//!
//! Data-parallel sweeps go through [`exec::Exec`]; with the default
//! `parallel` feature they run on rayon, otherwise sequentially.

pub mod complexity;
pub mod error;
pub mod exec;
pub mod flowopt;
pub mod netmodel;
pub mod scheduler;
pub mod spectralsim;

pub use error::{Error, Result};
pub use exec::Exec;
