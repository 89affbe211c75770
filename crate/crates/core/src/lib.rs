//! Spectral wavelet dropout and its DCT-based baseline, with the transforms,
//! exact gradients and a small training harness around them.

pub mod counter;
pub mod data;
pub mod dct;
pub mod dropout;
pub mod error;
pub mod gradcheck;
pub mod nn;
pub mod rng;
pub mod tensor;
pub mod train;
pub mod verify;
pub mod wavelet;

pub use error::{Result, SwdError};
pub use rng::{bernoulli_bits, SeededRng};
pub use tensor::{flatten_spatial, reshape_spatial, Matrix, Tensor3, Tensor4};
pub use wavelet::{Bands2D, Pyramid1D, WaveletFilter, WaveletKind};
pub use dropout::{Band, MaskRecord, Mode, SpectralDropoutConfig, Variant};
pub use data::{DatasetSpec, SyntheticDataset};
pub use train::{OptimizerSpec, Placement, RunMetrics, ToyNetSpec};
