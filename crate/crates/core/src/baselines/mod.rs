//! Non-adaptive differentiators: backward difference, Savitzky–Golay and
//! the discretized high-gain observer.

mod bd;
mod hgo;
mod sg;

pub use bd::{bd_first, bd_second, BackwardDifference};
pub use hgo::{HgoConfig, HgoState, HighGainObserver};
pub use sg::{sg_estimate, sg_estimate_about, SavitzkyGolay, SgConfig};
