//! Nonlinear 1-bit precoding for the massive MU-MIMO downlink.
//!
//! The crate is organised around six modules:
//!
//! * [`model`]: system parameters, channels, constellations and the 1-bit quantizer.
//! * [`admm`]: the ADMM precoder over the constant-modulus set.
//! * [`baselines`]: quantized MRT/ZF and the infinite-resolution ZF benchmark.
//! * [`oracle`]: exhaustive minimisation of the MMSE objective for tiny systems.
//! * [`sim`]: Monte Carlo BER engine with reproducible per-trial random streams.
//! * [`cli`]: experiment configuration, execution and CSV/JSON output.

pub mod admm;
pub mod baselines;
pub mod cli;
pub mod error;
pub mod model;
pub mod oracle;
pub mod sim;

pub use admm::{solve, AdmmConfig, AdmmPrecoder, PrecodeOutput, SpectralCache};
pub use baselines::{LinearKind, LinearPrecoder};
pub use error::{Error, Result};
pub use model::{ComplexChannel, Constellation, Modulation, SystemConfig};
pub use oracle::{exhaustive_min, OracleResult};
pub use sim::{run_sweep, BerReport, PrecoderKind, TrialSpec};

pub use nalgebra::Complex;

/// Complex sample type used throughout the crate.
pub type C64 = Complex<f64>;
