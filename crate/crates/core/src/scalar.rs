//! Scalar abstraction shared by the numeric kernels.
//!
//! Metrics, percentile/median helpers, 1-D K-Means and the labeling
//! arithmetic are written once over [`Scalar`] and instantiated for `f64`
//! (the pipeline default) and `f32`.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Debug + Display + Default + Sum + Send + Sync + 'static
{
    /// Lossy conversion from an `f64` literal.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal representable in scalar type")
    }

    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).expect("count representable in scalar type")
    }
}

impl<T> Scalar for T where
    T: Float + FromPrimitive + ToPrimitive + Debug + Display + Default + Sum + Send + Sync + 'static
{
}

/// Percentile by linear interpolation between order statistics.
///
/// `q` is a fraction in `[0, 1]`. For sorted values `x[0..n]` the position is
/// `h = (n - 1) q` and the result is `x[⌊h⌋] + (h - ⌊h⌋)(x[⌈h⌉] - x[⌊h⌋])`.
/// Returns `None` for empty input.
pub fn percentile_linear<T: Scalar>(values: &[T], q: T) -> Option<T> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("percentile input must not contain NaN"));
    Some(percentile_sorted(&sorted, q))
}

/// Same as [`percentile_linear`] on already sorted, non-empty input.
pub fn percentile_sorted<T: Scalar>(sorted: &[T], q: T) -> T {
    let n = sorted.len();
    debug_assert!(n > 0);
    let q = q.max(T::zero()).min(T::one());
    let h = T::from_usize_lossy(n - 1) * q;
    let lo = h.floor();
    let lo_idx = lo.to_usize().unwrap_or(0).min(n - 1);
    let hi_idx = (lo_idx + 1).min(n - 1);
    let frac = h - lo;
    sorted[lo_idx] + frac * (sorted[hi_idx] - sorted[lo_idx])
}

/// Median; even counts average the two middle order statistics.
pub fn median<T: Scalar>(values: &[T]) -> Option<T> {
    percentile_linear(values, T::lit(0.5))
}

/// Population mean and standard deviation (divisor `n`).
pub fn mean_std<T: Scalar>(values: &[T]) -> Option<(T, T)> {
    if values.is_empty() {
        return None;
    }
    let n = T::from_usize_lossy(values.len());
    let mean = values.iter().copied().sum::<T>() / n;
    let var = values.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n;
    Some((mean, var.sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn percentile_of_one_to_hundred() {
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        let p = percentile_linear(&v, 0.99).unwrap();
        assert!((p - 99.01).abs() < 1e-9, "{p}");
        let p32 = percentile_linear(&v.iter().map(|&x| x as f32).collect::<Vec<_>>(), 0.99f32);
        assert!((p32.unwrap() - 99.01).abs() < 1e-3);
    }

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median(&[1.0, 2.0, 100.0]), Some(2.0));
        assert_eq!(median(&[1.0, 2.0, 3.0, 100.0]), Some(2.5));
        assert_eq!(median::<f64>(&[]), None);
    }

    #[test]
    fn degenerate_percentiles() {
        assert_eq!(percentile_linear(&[7.0; 5], 0.99), Some(7.0));
        assert_eq!(percentile_linear(&[3.5], 0.99), Some(3.5));
    }

    #[test]
    fn population_std() {
        let (m, s) = mean_std(&[2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0]).unwrap();
        assert_eq!(m, 5.0);
        assert_eq!(s, 2.0);
    }
}
