//! External partition quality measures.

use std::collections::HashMap;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::par::{self, Execution};
use crate::preference::dominates_unchecked;

pub use crate::constraints::unsat;

fn comb2(x: u64) -> u128 {
    let x = x as u128;
    x * x.saturating_sub(1) / 2
}

/// Hubert-Arabie adjusted Rand index from the contingency table.
///
/// Returns 1.0 when the chance-corrected denominator vanishes (both
/// labelings trivially identical, e.g. all-singletons or all-one-cluster).
pub fn ari(a: &[usize], b: &[usize]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    if a.len() < 2 {
        return Err(Error::invalid("ARI needs at least two instances"));
    }
    let mut rows: HashMap<usize, u64> = HashMap::new();
    let mut cols: HashMap<usize, u64> = HashMap::new();
    let mut cells: HashMap<(usize, usize), u64> = HashMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *rows.entry(x).or_default() += 1;
        *cols.entry(y).or_default() += 1;
        *cells.entry((x, y)).or_default() += 1;
    }
    let index: u128 = cells.values().map(|&c| comb2(c)).sum();
    let sum_rows: u128 = rows.values().map(|&c| comb2(c)).sum();
    let sum_cols: u128 = cols.values().map(|&c| comb2(c)).sum();
    let total = comb2(a.len() as u64) as f64;
    let expected = sum_rows as f64 * sum_cols as f64 / total;
    let max_index = 0.5 * (sum_rows + sum_cols) as f64;
    let denom = max_index - expected;
    if denom == 0.0 {
        return Ok(1.0);
    }
    Ok((index as f64 - expected) / denom)
}

fn check_len(labels: &[usize], d: &Dataset) -> Result<()> {
    if labels.len() != d.n_rows() {
        return Err(Error::DimensionMismatch {
            left: labels.len(),
            right: d.n_rows(),
        });
    }
    Ok(())
}

/// True when `i` and `j` form a monotonicity clash: one dominates the other
/// but carries a strictly lower label.
#[inline]
fn clash(d: &Dataset, labels: &[usize], i: usize, j: usize) -> bool {
    let (xi, xj) = (d.row(i), d.row(j));
    (labels[i] < labels[j] && dominates_unchecked(xi, xj))
        || (labels[j] < labels[i] && dominates_unchecked(xj, xi))
}

/// Non-monotonicity index: share of instances involved in at least one
/// clash. Labels are read as ordinal ranks.
pub fn nmi_index(labels: &[usize], d: &Dataset) -> Result<f64> {
    nmi_index_with(labels, d, Execution::default())
}

pub fn nmi_index_with(labels: &[usize], d: &Dataset, exec: Execution) -> Result<f64> {
    check_len(labels, d)?;
    let n = d.n_rows();
    let bad = par::count_range(exec, n, |i| (0..n).any(|j| j != i && clash(d, labels, i, j)));
    Ok(bad as f64 / n as f64)
}

/// Pair-level variant: clashing pairs over comparable pairs (0 when no pair
/// is comparable).
pub fn nmi_pairs(labels: &[usize], d: &Dataset) -> Result<f64> {
    nmi_pairs_with(labels, d, Execution::default())
}

pub fn nmi_pairs_with(labels: &[usize], d: &Dataset, exec: Execution) -> Result<f64> {
    check_len(labels, d)?;
    let n = d.n_rows();
    let per_row = par::map_range(exec, n, |i| {
        let (mut comparable, mut clashes) = (0u64, 0u64);
        for j in i + 1..n {
            let (xi, xj) = (d.row(i), d.row(j));
            if dominates_unchecked(xi, xj) || dominates_unchecked(xj, xi) {
                comparable += 1;
                clashes += u64::from(clash(d, labels, i, j));
            }
        }
        (comparable, clashes)
    });
    let (comparable, clashes) = per_row
        .into_iter()
        .fold((0u64, 0u64), |acc, x| (acc.0 + x.0, acc.1 + x.1));
    Ok(if comparable == 0 {
        0.0
    } else {
        clashes as f64 / comparable as f64
    })
}
