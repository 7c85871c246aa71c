//! Shared inputs for the benchmarks.

use freeconv::analytic::MeasureHandle;
use freeconv::measures::{AtomicMeasure, MomentSeq};
use freeconv::scalar::rat;
use num_rational::BigRational;

/// Bernoulli(1/2) on {0, 1}.
pub fn bernoulli() -> AtomicMeasure {
    AtomicMeasure::bernoulli(0.5, 0.0, 1.0).expect("valid Bernoulli")
}

pub fn bernoulli_handle() -> MeasureHandle {
    MeasureHandle::atomic(bernoulli())
}

/// Moments of the uniform law on [0, 1], `1/(k+1)`, as floats.
pub fn uniform_moments(order: usize) -> MomentSeq {
    MomentSeq::new((1..=order).map(|k| 1.0 / (k + 1) as f64).collect())
}

/// The same moments, exactly.
pub fn uniform_moments_exact(order: usize) -> MomentSeq<BigRational> {
    MomentSeq::new((1..=order).map(|k| rat(1, k as i64 + 1)).collect())
}
