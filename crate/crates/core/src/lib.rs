//! Pairwise constrained monotonic clustering.
//!
//! The crate bundles the PCKM-Mono EM algorithm together with the baselines it
//! is compared against (pure monotonic EM, K-Means, COP-KMeans and a
//! soft-penalty Euclidean K-Means), the external quality measures used to
//! score partitions (ARI, non-monotonicity index, Unsat), constraint
//! generation from labels, a Bayesian sign test, and an experiment runner.
//!
//! With the default `parallel` feature the experiment matrix and the
//! non-monotonicity scan run on rayon; without it every path is sequential and
//! produces identical output.

pub mod clustering;
pub mod constraints;
pub mod data;
mod error;
pub mod experiment;
pub mod metrics;
pub mod par;
pub mod preference;
pub mod stats;

pub use clustering::{
    cop_kmeans, init_centroids, kmeans, mono_kmeans, objective, order_clusters, pck_means,
    pckm_mono, ClusteringOutcome, EmConfig, InitStrategy, Partition, RunStatus,
};
pub use constraints::{generate_constraints, unsat, violation_count, ConstraintGraph, ConstraintSet};
pub use data::{knn_impute, load_csv, standardize, CsvOptions, Dataset, LabelColumn};
pub use error::{Error, Result};
pub use metrics::{ari, nmi_index, nmi_pairs};
pub use par::Execution;
pub use preference::{dominates, mono_distance, preference, projection, weighted_l1};
pub use stats::{bayesian_sign_test, RopeInterval, SignTestResult};

/// Seeded generator used throughout the crate.
pub type Rng = rand_chacha::ChaCha8Rng;

/// Builds the crate's generator from a 64-bit seed.
pub fn rng_from_seed(seed: u64) -> Rng {
    use rand::SeedableRng;
    Rng::seed_from_u64(seed)
}
