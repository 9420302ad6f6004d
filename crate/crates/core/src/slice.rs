//! Univariate slice sampler with stepping out and shrinkage (Neal 2003).
//!
//! One transition leaves any 1-D target invariant; no smoothness of the log
//! density is required, which is what lets the Gibbs scans sample the
//! double-exponential prior's kink and the bounded heterogeneity parameter
//! with the same kernel.

use rand::{Rng, RngExt};

use crate::float::Real;

/// Tuning for one slice-sampled block.
#[derive(Debug, Clone, Copy)]
pub struct SliceTuning<T> {
    /// Initial bracket width.
    pub width: T,
    /// Maximum step-outs per side before the update reports failure.
    pub max_step_outs: u32,
}

impl<T: Real> Default for SliceTuning<T> {
    fn default() -> Self {
        SliceTuning {
            width: T::one(),
            max_step_outs: 128,
        }
    }
}

/// Why a slice transition could not complete.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SliceError {
    /// Both bracket edges stayed above the slice level after the allowed
    /// number of step-outs; the target is wider than `width * 2^max`.
    StepOutExceeded,
    /// Shrinkage failed to accept a point (pathological target or NaN).
    ShrinkageStalled,
}

/// One slice-sampling transition from `x0` for the log density `log_f`,
/// restricted to the open support `(lo, hi)` (use infinities when unbounded).
pub fn slice_sample<T, R, F>(
    x0: T,
    mut log_f: F,
    support: (T, T),
    tuning: SliceTuning<T>,
    rng: &mut R,
) -> Result<T, SliceError>
where
    T: Real,
    R: Rng + ?Sized,
    F: FnMut(T) -> T,
{
    let (lo, hi) = support;
    let w = tuning.width;
    let uniform = |rng: &mut R| T::of(rng.random::<f64>());

    let fx0 = log_f(x0);
    // Level: log y = log f(x0) + log u
    let level = fx0 + uniform(rng).ln();

    // Place the initial bracket around x0, truncated to the support.
    let mut l = x0 - uniform(rng) * w;
    let mut r = l + w;
    if l < lo {
        l = lo;
    }
    if r > hi {
        r = hi;
    }

    // Step out until both edges are below the slice or hit the support.
    let mut steps_l = 0;
    while l > lo && level < log_f(l) {
        l = l - w;
        steps_l += 1;
        if steps_l > tuning.max_step_outs {
            return Err(SliceError::StepOutExceeded);
        }
    }
    if l < lo {
        l = lo;
    }
    let mut steps_r = 0;
    while r < hi && level < log_f(r) {
        r = r + w;
        steps_r += 1;
        if steps_r > tuning.max_step_outs {
            return Err(SliceError::StepOutExceeded);
        }
    }
    if r > hi {
        r = hi;
    }

    // Shrinkage: sample uniformly in (l, r), shrink toward x0 on rejection.
    for _ in 0..10_000 {
        let x1 = l + uniform(rng) * (r - l);
        if level < log_f(x1) {
            return Ok(x1);
        }
        if x1 < x0 {
            l = x1;
        } else {
            r = x1;
        }
    }
    Err(SliceError::ShrinkageStalled)
}
