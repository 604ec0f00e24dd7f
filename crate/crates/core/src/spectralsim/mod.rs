//! Functional spectral convolution and the event-level streaming simulator.
//!
//! [`conv`] computes a layer as tiled FFT, sparse Hadamard accumulation
//! over input channels, IFFT and overlap-add; [`oracle`] holds the direct
//! DFT and direct spatial convolution it is checked against. [`dataflow`]
//! walks the streaming controller over a whole layer and counts every
//! off-chip element movement.

pub mod conv;
pub mod dataflow;
pub mod fft;
pub mod oracle;
pub mod tensor;

pub use conv::{
    dense_kernel_set, overlap_add, spectral_conv, spectral_conv_scheduled, spectral_tiles, spectralize_kernel,
    OutputTiles, ScheduledKernels, SpectralTile,
};
pub use dataflow::{dataflow_simulate, ConstantSchedule, KernelSchedules, ScheduleProvider, SimPlan, SimTrace, State};
pub use fft::fft2;
pub use oracle::{dft2_naive, spatial_conv_reference};
pub use tensor::SpatialTensor;
