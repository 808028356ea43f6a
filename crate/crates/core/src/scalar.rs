use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point scalar used by the numeric kernels (filters, distances,
/// fits). Implemented for `f32` and `f64`.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Converts from `f64`, rounding to the nearest representable value.
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 converts to every float scalar")
    }

    fn of_usize(n: usize) -> Self {
        Self::from_usize(n).expect("usize converts to every float scalar")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("float scalar converts to f64")
    }

    /// `1.0` if `flag` is set and `0.0` otherwise, without branching.
    fn indicator(flag: bool) -> Self;
}

impl Scalar for f32 {
    #[inline(always)]
    fn indicator(flag: bool) -> Self {
        flag as u8 as f32
    }
}

impl Scalar for f64 {
    #[inline(always)]
    fn indicator(flag: bool) -> Self {
        flag as u8 as f64
    }
}

/// Pairwise (cascade) summation of `n` terms produced by `term`.
///
/// Error grows as O(log n) instead of O(n) for sequential accumulation.
pub fn pairwise_sum<S: Scalar>(n: usize, term: &impl Fn(usize) -> S) -> S {
    fn go<S: Scalar>(lo: usize, hi: usize, term: &impl Fn(usize) -> S) -> S {
        const BLOCK: usize = 64;
        if hi - lo <= BLOCK {
            let mut acc = S::zero();
            for i in lo..hi {
                acc = acc + term(i);
            }
            acc
        } else {
            let mid = lo + (hi - lo) / 2;
            go(lo, mid, term) + go(mid, hi, term)
        }
    }
    go(0, n, term)
}
