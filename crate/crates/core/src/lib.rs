//! Causal numerical differentiation of sampled signals.
//!
//! The crate provides three families of streaming differentiators:
//!
//! * non-adaptive baselines ([`baselines`]): backward differences,
//!   Savitzky–Golay polynomial fits and a bilinear-discretized high-gain
//!   observer;
//! * adaptive input estimation ([`estimator`]), which models the sampled
//!   signal as the output of a discrete-time integrator driven by an unknown
//!   input, estimates that input with a retrospective-cost subsystem
//!   ([`rcie`]) and tracks the integrator state with a Kalman filter whose
//!   noise covariances may be adapted online ([`askf`]);
//! * the metrics used to compare them ([`metrics`]), which account for the
//!   step at which each estimate becomes available.
//!
//! Test signals, noise injection and CSV input/output live in [`signals`].

pub mod askf;
pub mod baselines;
pub mod error;
pub mod estimator;
pub mod metrics;
pub mod rcie;
pub mod signals;
mod stream;

pub use error::{Error, Result};
pub use stream::{estimate_series, sparse_estimate_series, DerivativeOrder, Differentiator, Estimate};
