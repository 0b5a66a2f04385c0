//! Secrecy-rate optimization toolkit for IRS-aided multi-user MISO downlinks.
//!
//! The crate is organized around the pipeline of the underlying algorithms:
//!
//! - [`channel`] — network geometry, path loss, Rician fading with spatial
//!   correlation, cascaded IRS channels, phase quantization, bounded CSI
//!   error, SINR and secrecy rates.
//! - [`surrogate`] — the fundamental minorization inequalities and the
//!   iterate-dependent linear/quadratic secrecy-rate bounds in both the
//!   beamformer domain and the phase domain (SCA surrogates).
//! - [`perfect_csi`] — alternating optimization for max-min secrecy rate and
//!   sum secrecy rate when CSI is exact: conic beamforming subproblem,
//!   closed-form bisection beamformer, closed-form quantized phase updates.
//! - [`robust`] — bounded-CSI-error machinery: S-procedure / Schur /
//!   Nemirovski LMI builders, Taylor convexification, penalty convex-concave
//!   phase optimization, and the robust max-min / sum-rate / power-min
//!   drivers with artificial noise.
//! - [`conic`] — backend-agnostic cone-program representation (zero,
//!   nonnegative, second-order, PSD cones) with a single solver coupling
//!   point and feasibility checking.
//!
//! Rates are handled internally in nats; multiply by [`NATS_TO_BITS`] when
//! reporting bps/Hz.

pub mod channel;
pub mod conic;
pub mod perfect_csi;
pub mod robust;
pub mod surrogate;

/// Complex scalar used throughout.
pub type C64 = num_complex::Complex<f64>;

/// Conversion factor from nats to bits: log2(e).
pub const NATS_TO_BITS: f64 = std::f64::consts::LOG2_E;
