//! EM clustering: PCKM-Mono and its baselines.
//!
//! All five algorithms share one engine parameterised by a geometry
//! (monotonic projection distance or squared Euclidean) and a constraint
//! policy (ignored, soft penalty, hard feasibility). Runs are single-threaded
//! and fully determined by the dataset, constraints and [`EmConfig`].

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::constraints::{violation_count, ConstraintGraph, ConstraintSet};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::preference::{mono_distance, projection};
use crate::rng_from_seed;

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitStrategy {
    /// `k` distinct rows drawn uniformly without replacement.
    #[default]
    Random,
    /// Explicit row indices.
    Rows(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmConfig {
    pub k: usize,
    pub max_iter: usize,
    /// Convergence threshold on the mean Euclidean centroid displacement.
    pub tol: f64,
    /// Cost charged per violated constraint by the soft-penalty algorithms.
    pub penalty_weight: f64,
    pub seed: u64,
    pub init: InitStrategy,
}

impl EmConfig {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            max_iter: 100,
            tol: 1e-4,
            penalty_weight: 1.0,
            seed: 0,
            init: InitStrategy::Random,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_penalty_weight(mut self, w: f64) -> Self {
        self.penalty_weight = w;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::invalid("k must be at least 1"));
        }
        if self.max_iter == 0 {
            return Err(Error::invalid("max_iter must be at least 1"));
        }
        if !(self.tol > 0.0) {
            return Err(Error::invalid("tol must be positive"));
        }
        if !(self.penalty_weight >= 0.0) {
            return Err(Error::invalid("penalty_weight must be nonnegative"));
        }
        if let InitStrategy::Rows(rows) = &self.init {
            if rows.len() != self.k {
                return Err(Error::invalid("explicit init needs exactly k rows"));
            }
        }
        Ok(())
    }
}

/// A hard partition of `n` instances into `k` clusters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    /// Cluster index in `0..k` for every instance.
    pub labels: Vec<usize>,
    /// `k` centroids, indexed like `labels`.
    pub centroids: Vec<Vec<f64>>,
    /// `rank[r]` is the engine's original index of the cluster now at
    /// position `r`. Identity until [`order_clusters`] is applied.
    pub rank: Vec<usize>,
}

impl Partition {
    pub fn new(labels: Vec<usize>, centroids: Vec<Vec<f64>>) -> Result<Self> {
        let k = centroids.len();
        if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
            return Err(Error::invalid(format!("label {bad} out of range for k = {k}")));
        }
        Ok(Self {
            labels,
            centroids,
            rank: (0..k).collect(),
        })
    }

    pub fn k(&self) -> usize {
        self.centroids.len()
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k()];
        for &l in &self.labels {
            sizes[l] += 1;
        }
        sizes
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Success,
    /// COP-KMeans found an instance with no feasible cluster.
    DeadEnd,
}

/// Assignment-step objective (distance term plus weighted violations,
/// without the `1/K` factor) around one E-step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationTrace {
    /// Objective of the previous labels against this step's centroids; absent
    /// while some instance is still unassigned.
    pub before: Option<f64>,
    pub after: f64,
    pub shift: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusteringOutcome {
    /// Ordinally ranked partition; absent on a dead-end.
    pub partition: Option<Partition>,
    /// The algorithm's own objective: the hybrid monotonic objective for the
    /// monotonic methods, SSE plus weighted violations for the Euclidean ones.
    pub objective: Option<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub status: RunStatus,
    #[serde(skip)]
    pub trace: Vec<IterationTrace>,
}

impl ClusteringOutcome {
    pub fn labels(&self) -> Option<&[usize]> {
        self.partition.as_ref().map(|p| p.labels.as_slice())
    }
}

/// Draws `k` distinct rows as initial centroids.
pub fn init_centroids<R: rand::Rng + ?Sized>(
    d: &Dataset,
    k: usize,
    rng: &mut R,
) -> Result<Vec<Vec<f64>>> {
    if k == 0 || k > d.n_rows() {
        return Err(Error::invalid(format!(
            "cannot draw {k} centroids from {} rows",
            d.n_rows()
        )));
    }
    Ok(index::sample(rng, d.n_rows(), k)
        .into_iter()
        .map(|i| d.row(i).to_vec())
        .collect())
}

/// Relabels clusters in ascending order of centroid projection
/// `sum_d w_d mu_d`; ties keep the original index order.
pub fn order_clusters(p: &Partition, d: &Dataset) -> Partition {
    let scores: Vec<f64> = p
        .centroids
        .iter()
        .map(|c| projection(c, d.weights()))
        .collect();
    let mut order: Vec<usize> = (0..p.k()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b)));
    let mut position = vec![0; p.k()];
    for (r, &h) in order.iter().enumerate() {
        position[h] = r;
    }
    Partition {
        labels: p.labels.iter().map(|&l| position[l]).collect(),
        centroids: order.iter().map(|&h| p.centroids[h].clone()).collect(),
        rank: order.iter().map(|&h| p.rank[h]).collect(),
    }
}

/// Hybrid monotonic objective: `(1/K) sum_k sum_{x in c_k} |r(x, mu_k) -
/// r(mu_k, x)|` plus `penalty_weight` times the number of violated ML and CL
/// constraints.
pub fn objective(
    d: &Dataset,
    p: &Partition,
    cs: &ConstraintSet,
    penalty_weight: f64,
) -> Result<f64> {
    if p.labels.len() != d.n_rows() {
        return Err(Error::DimensionMismatch {
            left: p.labels.len(),
            right: d.n_rows(),
        });
    }
    if cs.min_instances() > d.n_rows() {
        return Err(Error::invalid("constraint index out of range"));
    }
    let mut spread = 0.0;
    for (row, &l) in d.rows().zip(&p.labels) {
        spread += mono_distance(row, &p.centroids[l], d.weights())?;
    }
    Ok(spread / p.k() as f64 + penalty_weight * cs.violations(&p.labels) as f64)
}

fn euclidean_objective(d: &Dataset, p: &Partition, cs: &ConstraintSet, penalty_weight: f64) -> f64 {
    let sse: f64 = d
        .rows()
        .zip(&p.labels)
        .map(|(row, &l)| squared_euclidean(row, &p.centroids[l]))
        .sum();
    sse + penalty_weight * cs.violations(&p.labels) as f64
}

#[inline]
fn squared_euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Geometry {
    /// `|s(x) - s(mu)|` on the weighted projection.
    Monotonic,
    SquaredEuclidean,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Policy {
    Ignore,
    Soft(f64),
    Hard,
}

struct Engine<'a> {
    data: &'a Dataset,
    geometry: Geometry,
    policy: Policy,
    graph: ConstraintGraph,
    proj: Vec<f64>,
}

impl<'a> Engine<'a> {
    fn new(data: &'a Dataset, cs: &ConstraintSet, geometry: Geometry, policy: Policy) -> Result<Self> {
        if data.has_missing() {
            return Err(Error::MissingValues);
        }
        let graph = ConstraintGraph::new(cs, data.n_rows())?;
        let proj = data.rows().map(|r| projection(r, data.weights())).collect();
        Ok(Self {
            data,
            geometry,
            policy,
            graph,
            proj,
        })
    }

    #[inline]
    fn dist(&self, i: usize, centroid: &[f64], centroid_proj: f64) -> f64 {
        match self.geometry {
            Geometry::Monotonic => (self.proj[i] - centroid_proj).abs(),
            Geometry::SquaredEuclidean => squared_euclidean(self.data.row(i), centroid),
        }
    }

    fn penalty(&self) -> f64 {
        match self.policy {
            Policy::Soft(w) => w,
            _ => 0.0,
        }
    }

    fn assignment_objective(&self, labels: &[Option<usize>], centroids: &[Vec<f64>], cproj: &[f64]) -> Option<f64> {
        let mut total = 0.0;
        let mut flat = Vec::with_capacity(labels.len());
        for (i, l) in labels.iter().enumerate() {
            let h = (*l)?;
            total += self.dist(i, &centroids[h], cproj[h]);
            flat.push(h);
        }
        let mut violations = 0usize;
        for i in 0..flat.len() {
            violations += violation_count(i, flat[i], labels, &self.graph);
        }
        // each pair was seen from both ends
        Some(total + self.penalty() * (violations / 2) as f64)
    }

    fn run(&self, cfg: &EmConfig) -> Result<(Option<Partition>, usize, bool, Vec<IterationTrace>)> {
        cfg.validate()?;
        let n = self.data.n_rows();
        let k = cfg.k;
        if k > n {
            return Err(Error::invalid(format!("k = {k} exceeds {n} instances")));
        }
        let mut rng = rng_from_seed(cfg.seed);
        let mut centroids = match &cfg.init {
            InitStrategy::Random => init_centroids(self.data, k, &mut rng)?,
            InitStrategy::Rows(rows) => {
                if rows.iter().any(|&r| r >= n) {
                    return Err(Error::invalid("init row out of range"));
                }
                rows.iter().map(|&r| self.data.row(r).to_vec()).collect()
            }
        };
        let mut labels: Vec<Option<usize>> = vec![None; n];
        let mut trace = Vec::new();
        let mut converged = false;
        let mut iterations = 0;
        let mut costs = vec![0.0; k];

        while iterations < cfg.max_iter {
            iterations += 1;
            let cproj: Vec<f64> = centroids
                .iter()
                .map(|c| projection(c, self.data.weights()))
                .collect();
            if self.policy == Policy::Hard {
                labels.iter_mut().for_each(|l| *l = None);
            }
            let before = match self.policy {
                Policy::Hard => None,
                _ => self.assignment_objective(&labels, &centroids, &cproj),
            };

            // E-step, in index order with in-place label updates
            for i in 0..n {
                for h in 0..k {
                    costs[h] = self.dist(i, &centroids[h], cproj[h]);
                }
                let choice = match self.policy {
                    Policy::Ignore => argmin(&costs),
                    Policy::Soft(w) => {
                        for (h, c) in costs.iter_mut().enumerate() {
                            *c += w * violation_count(i, h, &labels, &self.graph) as f64;
                        }
                        argmin(&costs)
                    }
                    Policy::Hard => {
                        let mut order: Vec<usize> = (0..k).collect();
                        order.sort_by(|&a, &b| costs[a].total_cmp(&costs[b]).then(a.cmp(&b)));
                        match order
                            .into_iter()
                            .find(|&h| violation_count(i, h, &labels, &self.graph) == 0)
                        {
                            Some(h) => h,
                            None => return Ok((None, iterations, false, trace)),
                        }
                    }
                };
                labels[i] = Some(choice);
            }
            let after = self
                .assignment_objective(&labels, &centroids, &cproj)
                .unwrap_or(f64::NAN);

            // M-step
            let assigned: Vec<usize> = labels.iter().map(|l| l.unwrap_or(0)).collect();
            let updated = self.update_centroids(&assigned, &centroids);
            let shift = centroids
                .iter()
                .zip(&updated)
                .map(|(a, b)| squared_euclidean(a, b).sqrt())
                .sum::<f64>()
                / k as f64;
            centroids = updated;
            trace.push(IterationTrace { before, after, shift });
            if shift < cfg.tol {
                converged = true;
                break;
            }
        }

        let labels: Vec<usize> = labels.into_iter().map(|l| l.unwrap_or(0)).collect();
        let partition = Partition::new(labels, centroids)?;
        Ok((Some(order_clusters(&partition, self.data)), iterations, converged, trace))
    }

    /// Cluster means; an empty cluster is reseeded at the instance farthest
    /// from its own (updated) centroid.
    fn update_centroids(&self, labels: &[usize], previous: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let u = self.data.n_features();
        let k = previous.len();
        let mut sums = vec![vec![0.0; u]; k];
        let mut counts = vec![0usize; k];
        for (row, &l) in self.data.rows().zip(labels) {
            counts[l] += 1;
            for (s, v) in sums[l].iter_mut().zip(row) {
                *s += v;
            }
        }
        let mut centroids: Vec<Vec<f64>> = sums
            .into_iter()
            .zip(&counts)
            .map(|(s, &c)| {
                if c == 0 {
                    s
                } else {
                    s.into_iter().map(|v| v / c as f64).collect()
                }
            })
            .collect();
        let empty: Vec<usize> = (0..k).filter(|&h| counts[h] == 0).collect();
        if !empty.is_empty() {
            let cproj: Vec<f64> = centroids
                .iter()
                .map(|c| projection(c, self.data.weights()))
                .collect();
            let mut far: Vec<(f64, usize)> = labels
                .iter()
                .enumerate()
                .map(|(i, &l)| (self.dist(i, &centroids[l], cproj[l]), i))
                .collect();
            far.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
            for (h, (_, i)) in empty.into_iter().zip(far) {
                centroids[h] = self.data.row(i).to_vec();
            }
        }
        centroids
    }
}

fn argmin(costs: &[f64]) -> usize {
    let mut best = 0;
    for (h, &c) in costs.iter().enumerate().skip(1) {
        if c < costs[best] {
            best = h;
        }
    }
    best
}

fn finish(
    engine: &Engine<'_>,
    cfg: &EmConfig,
    cs: &ConstraintSet,
    penalty_weight: f64,
) -> Result<ClusteringOutcome> {
    let (partition, iterations, converged, trace) = engine.run(cfg)?;
    let Some(partition) = partition else {
        return Ok(ClusteringOutcome {
            partition: None,
            objective: None,
            iterations,
            converged: false,
            status: RunStatus::DeadEnd,
            trace,
        });
    };
    let objective = match engine.geometry {
        Geometry::Monotonic => objective(engine.data, &partition, cs, penalty_weight)?,
        Geometry::SquaredEuclidean => euclidean_objective(engine.data, &partition, cs, penalty_weight),
    };
    Ok(ClusteringOutcome {
        partition: Some(partition),
        objective: Some(objective),
        iterations,
        converged,
        status: RunStatus::Success,
        trace,
    })
}

/// Pairwise Constrained K-Means - Monotonic.
///
/// E-step: each instance, in index order, goes to the cluster minimising
/// `|s(x_i) - s(mu_h)| + penalty_weight * violations(i, h)`, where violations
/// are counted against the partners' most recent labels. M-step: cluster
/// means. Stops when the mean centroid shift drops below `tol` or after
/// `max_iter` iterations.
pub fn pckm_mono(d: &Dataset, cs: &ConstraintSet, cfg: &EmConfig) -> Result<ClusteringOutcome> {
    let engine = Engine::new(d, cs, Geometry::Monotonic, Policy::Soft(cfg.penalty_weight))?;
    finish(&engine, cfg, cs, cfg.penalty_weight)
}

/// Pure monotonic EM: K-Means on the one-dimensional projection. Every
/// cluster is an interval of `s(x)`, so the ranked partition never inverts
/// dominance.
pub fn mono_kmeans(d: &Dataset, cfg: &EmConfig) -> Result<ClusteringOutcome> {
    let none = ConstraintSet::empty();
    let engine = Engine::new(d, &none, Geometry::Monotonic, Policy::Ignore)?;
    finish(&engine, cfg, &none, 0.0)
}

/// Lloyd's K-Means with squared Euclidean assignment.
pub fn kmeans(d: &Dataset, cfg: &EmConfig) -> Result<ClusteringOutcome> {
    let none = ConstraintSet::empty();
    let engine = Engine::new(d, &none, Geometry::SquaredEuclidean, Policy::Ignore)?;
    finish(&engine, cfg, &none, 0.0)
}

/// COP-KMeans: nearest centroid that violates no constraint against the
/// instances already assigned in the current sweep. Returns
/// [`RunStatus::DeadEnd`] when some instance has no feasible cluster.
pub fn cop_kmeans(d: &Dataset, cs: &ConstraintSet, cfg: &EmConfig) -> Result<ClusteringOutcome> {
    let engine = Engine::new(d, cs, Geometry::SquaredEuclidean, Policy::Hard)?;
    finish(&engine, cfg, cs, 0.0)
}

/// Soft-penalty K-Means: squared Euclidean distance plus `penalty_weight`
/// per violated constraint.
pub fn pck_means(d: &Dataset, cs: &ConstraintSet, cfg: &EmConfig) -> Result<ClusteringOutcome> {
    let engine = Engine::new(d, cs, Geometry::SquaredEuclidean, Policy::Soft(cfg.penalty_weight))?;
    finish(&engine, cfg, cs, cfg.penalty_weight)
}
