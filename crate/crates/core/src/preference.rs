//! Preference-based geometry for monotonic clustering.
//!
//! All features are treated as maximization criteria: a higher value is
//! better. Minimization features must be negated before they reach here.

use crate::error::{Error, Result};

fn check(x: &[f64], y: &[f64], w: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    if w.len() != x.len() {
        return Err(Error::DimensionMismatch {
            left: w.len(),
            right: x.len(),
        });
    }
    Ok(())
}

/// Weighted advantage of `x` over `y`: the sum of `w_d (x_d - y_d)` over the
/// dimensions where `x_d > y_d`.
pub fn preference(x: &[f64], y: &[f64], w: &[f64]) -> Result<f64> {
    check(x, y, w)?;
    Ok(x.iter()
        .zip(y)
        .zip(w)
        .filter(|((a, b), _)| a > b)
        .map(|((a, b), wd)| wd * (a - b))
        .sum())
}

pub fn weighted_l1(x: &[f64], y: &[f64], w: &[f64]) -> Result<f64> {
    check(x, y, w)?;
    Ok(x.iter().zip(y).zip(w).map(|((a, b), wd)| wd * (a - b).abs()).sum())
}

/// `|r(x, y) - r(y, x)|`, which collapses to `|sum_d w_d (x_d - y_d)|`.
pub fn mono_distance(x: &[f64], y: &[f64], w: &[f64]) -> Result<f64> {
    Ok((preference(x, y, w)? - preference(y, x, w)?).abs())
}

/// Componentwise `x >= y`.
pub fn dominates(x: &[f64], y: &[f64]) -> Result<bool> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    Ok(dominates_unchecked(x, y))
}

#[inline]
pub(crate) fn dominates_unchecked(x: &[f64], y: &[f64]) -> bool {
    x.iter().zip(y).all(|(a, b)| a >= b)
}

/// Weighted coordinate sum `s(x) = sum_d w_d x_d`.
///
/// Rounding is monotone, so `dominates(x, y)` implies
/// `projection(x, w) >= projection(y, w)` for nonnegative weights even in
/// floating point.
pub fn projection(x: &[f64], w: &[f64]) -> f64 {
    debug_assert_eq!(x.len(), w.len());
    x.iter().zip(w).map(|(a, wd)| wd * a).sum()
}
