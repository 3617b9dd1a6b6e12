//! Bayesian sign test with a region of practical equivalence (rope).
//!
//! Paired differences `a_i - b_i` are binned left of, inside, or right of the
//! rope. The posterior over the three bin probabilities is
//! `Dirichlet(n_left, n_rope + prior, n_right)`: the prior pseudo-observation
//! sits entirely on the rope. Sampling normalises independent unit-scale
//! gamma draws.

use std::fs;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_SAMPLES: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RopeInterval {
    pub r_min: f64,
    pub r_max: f64,
}

impl RopeInterval {
    pub fn new(r_min: f64, r_max: f64) -> Result<Self> {
        if !(r_min <= 0.0 && 0.0 <= r_max) {
            return Err(Error::invalid(format!(
                "rope [{r_min}, {r_max}] must contain zero"
            )));
        }
        Ok(Self { r_min, r_max })
    }

    /// Default rope for ARI comparisons.
    pub fn ari() -> Self {
        Self { r_min: -0.02, r_max: 0.02 }
    }

    /// Default rope for NMI and Unsat comparisons.
    pub fn nmi() -> Self {
        Self { r_min: -0.01, r_max: 0.01 }
    }

    pub fn unsat() -> Self {
        Self::nmi()
    }

    pub fn mirrored(self) -> Self {
        Self { r_min: -self.r_max, r_max: -self.r_min }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignTestSummary {
    pub p_left: f64,
    pub p_rope: f64,
    pub p_right: f64,
    pub n_left: usize,
    pub n_rope: usize,
    pub n_right: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SignTestResult {
    /// Posterior probability that `a - b` falls left of the rope.
    pub p_left: f64,
    pub p_rope: f64,
    pub p_right: f64,
    pub n_left: usize,
    pub n_rope: usize,
    pub n_right: usize,
    /// Barycentric samples `(left, rope, right)`.
    pub samples: Vec<[f64; 3]>,
}

impl SignTestResult {
    pub fn summary(&self) -> SignTestSummary {
        SignTestSummary {
            p_left: self.p_left,
            p_rope: self.p_rope,
            p_right: self.p_right,
            n_left: self.n_left,
            n_rope: self.n_rope,
            n_right: self.n_right,
        }
    }

    pub fn write_summary(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let json = serde_json::to_string_pretty(&self.summary())?;
        fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    /// One `left,rope,right` row per sample.
    pub fn write_samples(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["left", "rope", "right"])?;
        for s in &self.samples {
            w.write_record(s.iter().map(|v| v.to_string()))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

fn gamma_draw<R: Rng + ?Sized>(shape: f64, rng: &mut R) -> f64 {
    if shape <= 0.0 {
        return 0.0;
    }
    // shape > 0 and scale 1 are always valid parameters
    Gamma::new(shape, 1.0).map_or(0.0, |g| g.sample(rng))
}

/// Runs the Bayesian sign test on paired results `a` and `b`.
///
/// Gamma draws for the two outer bins happen in order of their counts, not
/// their position, so swapping `a` and `b` (with a mirrored rope) mirrors
/// every sample exactly. When the outer counts tie the posterior is
/// symmetric and the two outer means are reported as their average.
pub fn bayesian_sign_test<R: Rng + ?Sized>(
    a: &[f64],
    b: &[f64],
    rope: RopeInterval,
    n_samples: usize,
    prior_weight: f64,
    rng: &mut R,
) -> Result<SignTestResult> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    if a.is_empty() {
        return Err(Error::invalid("sign test needs at least one paired result"));
    }
    if n_samples == 0 {
        return Err(Error::invalid("n_samples must be positive"));
    }
    if !(prior_weight >= 0.0) {
        return Err(Error::invalid("prior_weight must be nonnegative"));
    }
    let (mut n_left, mut n_rope, mut n_right) = (0, 0, 0);
    for (x, y) in a.iter().zip(b) {
        let diff = x - y;
        if diff < rope.r_min {
            n_left += 1;
        } else if diff > rope.r_max {
            n_right += 1;
        } else {
            n_rope += 1;
        }
    }
    let rope_shape = n_rope as f64 + prior_weight;
    let left_first = n_left <= n_right;
    let (small, large) = if left_first {
        (n_left, n_right)
    } else {
        (n_right, n_left)
    };

    let mut samples = Vec::with_capacity(n_samples);
    let mut sums = [0.0f64; 3];
    for _ in 0..n_samples {
        let g_rope = gamma_draw(rope_shape, rng);
        let g_small = gamma_draw(small as f64, rng);
        let g_large = gamma_draw(large as f64, rng);
        let total = g_rope + g_small + g_large;
        let (g_left, g_right) = if left_first {
            (g_small, g_large)
        } else {
            (g_large, g_small)
        };
        let s = [g_left / total, g_rope / total, g_right / total];
        for (acc, v) in sums.iter_mut().zip(s) {
            *acc += v;
        }
        samples.push(s);
    }
    let count = n_samples as f64;
    let (p_left, p_right) = if n_left == n_right {
        let shared = (sums[0] + sums[2]) / (2.0 * count);
        (shared, shared)
    } else {
        (sums[0] / count, sums[2] / count)
    };
    Ok(SignTestResult {
        p_left,
        p_rope: sums[1] / count,
        p_right,
        n_left,
        n_rope,
        n_right,
        samples,
    })
}
