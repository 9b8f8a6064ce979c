//! Shared fixtures for the benchmarks.

use ddpmlab::{MixtureTarget, NoiseSchedule};

/// The default 1D two-component target.
pub fn mixture_1d() -> MixtureTarget {
    MixtureTarget::new(vec![0.3, 0.7], vec![-2.0, 1.0], vec![1.5]).expect("valid mixture")
}

pub fn schedule(n: usize) -> NoiseSchedule {
    NoiseSchedule::ho_scaled(n).expect("valid schedule")
}
