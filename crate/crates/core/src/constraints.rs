//! Must-link / cannot-link constraint sets.
//!
//! Instance indices are zero-based. Pairs are stored as `(min, max)`.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ConstraintKind {
    #[serde(rename = "ML")]
    MustLink,
    #[serde(rename = "CL")]
    CannotLink,
}

/// Deduplicated ML and CL pair lists with no self-pairs and no pair in both.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ConstraintSet {
    ml: Vec<(usize, usize)>,
    cl: Vec<(usize, usize)>,
}

fn normalize(pairs: Vec<(usize, usize)>) -> Result<Vec<(usize, usize)>> {
    let mut seen = HashSet::with_capacity(pairs.len());
    let mut out = Vec::with_capacity(pairs.len());
    for (a, b) in pairs {
        if a == b {
            return Err(Error::invalid(format!("self-pair ({a}, {a})")));
        }
        let p = (a.min(b), a.max(b));
        if seen.insert(p) {
            out.push(p);
        }
    }
    Ok(out)
}

impl ConstraintSet {
    pub fn new(ml: Vec<(usize, usize)>, cl: Vec<(usize, usize)>) -> Result<Self> {
        let ml = normalize(ml)?;
        let cl = normalize(cl)?;
        let ml_set: HashSet<_> = ml.iter().collect();
        if let Some(p) = cl.iter().find(|p| ml_set.contains(p)) {
            return Err(Error::invalid(format!("pair {p:?} is both ML and CL")));
        }
        Ok(Self { ml, cl })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn must_link(&self) -> &[(usize, usize)] {
        &self.ml
    }

    pub fn cannot_link(&self) -> &[(usize, usize)] {
        &self.cl
    }

    pub fn len(&self) -> usize {
        self.ml.len() + self.cl.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Largest referenced index plus one (0 when empty).
    pub fn min_instances(&self) -> usize {
        self.ml
            .iter()
            .chain(&self.cl)
            .map(|&(_, b)| b + 1)
            .max()
            .unwrap_or(0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, ConstraintKind)> + '_ {
        self.ml
            .iter()
            .map(|&(a, b)| (a, b, ConstraintKind::MustLink))
            .chain(self.cl.iter().map(|&(a, b)| (a, b, ConstraintKind::CannotLink)))
    }

    /// Number of constraints violated by a full labeling.
    pub fn violations(&self, labels: &[usize]) -> usize {
        let ml = self.ml.iter().filter(|&&(a, b)| labels[a] != labels[b]).count();
        let cl = self.cl.iter().filter(|&&(a, b)| labels[a] == labels[b]).count();
        ml + cl
    }
}

/// Per-instance adjacency view of a constraint set.
#[derive(Debug, Clone)]
pub struct ConstraintGraph {
    partners: Vec<Vec<(usize, ConstraintKind)>>,
}

impl ConstraintGraph {
    pub fn new(cs: &ConstraintSet, n: usize) -> Result<Self> {
        if cs.min_instances() > n {
            return Err(Error::invalid(format!(
                "constraint references instance {} but dataset has {n} rows",
                cs.min_instances() - 1
            )));
        }
        let mut partners = vec![Vec::new(); n];
        for (a, b, kind) in cs.iter() {
            partners[a].push((b, kind));
            partners[b].push((a, kind));
        }
        Ok(Self { partners })
    }

    pub fn partners(&self, i: usize) -> &[(usize, ConstraintKind)] {
        &self.partners[i]
    }

    pub fn is_empty(&self) -> bool {
        self.partners.iter().all(Vec::is_empty)
    }
}

/// Constraints involving `i` that placing it in `candidate` would violate,
/// given the partners' current labels. Unassigned partners (`None`) never
/// count.
pub fn violation_count(
    i: usize,
    candidate: usize,
    labels: &[Option<usize>],
    graph: &ConstraintGraph,
) -> usize {
    graph
        .partners(i)
        .iter()
        .filter(|&&(j, kind)| match (labels[j], kind) {
            (Some(l), ConstraintKind::MustLink) => l != candidate,
            (Some(l), ConstraintKind::CannotLink) => l == candidate,
            (None, _) => false,
        })
        .count()
}

/// Share of constraints violated by `labels`; 0 for an empty set.
pub fn unsat(labels: &[usize], cs: &ConstraintSet) -> f64 {
    if cs.is_empty() {
        return 0.0;
    }
    cs.violations(labels) as f64 / cs.len() as f64
}

/// `floor(fraction * n)`, tolerant of products like `0.1 * 30 = 2.9999..`.
pub fn sampled_size(n: usize, fraction: f64) -> usize {
    (fraction * n as f64 + 1e-9).floor() as usize
}

/// Number of pairs `n_f (n_f - 1) / 2` generated for a given fraction.
pub fn constraint_count(n: usize, fraction: f64) -> usize {
    let nf = sampled_size(n, fraction);
    nf * nf.saturating_sub(1) / 2
}

fn decode_pair(t: usize, n: usize) -> (usize, usize) {
    // pairs (i, j), i < j, enumerated row by row; offset(i) = pairs before row i
    let offset = |i: usize| i * (2 * n - i - 1) / 2;
    let (mut lo, mut hi) = (0usize, n - 1);
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if offset(mid) <= t {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (lo, lo + 1 + (t - offset(lo)))
}

/// Draws `n_f (n_f - 1) / 2` distinct instance pairs uniformly at random and
/// labels each ML when the ground-truth classes agree and CL otherwise.
pub fn generate_constraints<R: rand::Rng + ?Sized>(
    labels: &[usize],
    fraction: f64,
    rng: &mut R,
) -> Result<ConstraintSet> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::invalid(format!("fraction {fraction} not in (0, 1]")));
    }
    let n = labels.len();
    let nf = sampled_size(n, fraction);
    if nf < 2 {
        return Err(Error::invalid(format!(
            "fraction {fraction} of {n} instances yields fewer than 2"
        )));
    }
    let count = nf * (nf - 1) / 2;
    let total = n * (n - 1) / 2;
    if count > total {
        return Err(Error::invalid(format!(
            "{count} pairs requested but only {total} exist"
        )));
    }
    let mut ml = Vec::new();
    let mut cl = Vec::new();
    for t in index::sample(rng, total, count) {
        let (a, b) = decode_pair(t, n);
        if labels[a] == labels[b] {
            ml.push((a, b));
        } else {
            cl.push((a, b));
        }
    }
    Ok(ConstraintSet { ml, cl })
}

/// Generation metadata stored next to a constraint CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintMeta {
    pub seed: u64,
    pub fraction: f64,
    pub n_instances: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct ConstraintRow {
    i: usize,
    j: usize,
    kind: ConstraintKind,
}

pub fn meta_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

/// Writes `i,j,kind` rows and, when given, a `<path>.meta.json` sidecar.
pub fn write_constraints(
    cs: &ConstraintSet,
    path: impl AsRef<Path>,
    meta: Option<&ConstraintMeta>,
) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    for (i, j, kind) in cs.iter() {
        w.serialize(ConstraintRow { i, j, kind })?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    if let Some(meta) = meta {
        let mp = meta_path(path);
        fs::write(&mp, serde_json::to_string_pretty(meta)?).map_err(|e| Error::io(mp, e))?;
    }
    Ok(())
}

/// Reads a constraint CSV and its sidecar metadata if present.
pub fn read_constraints(path: impl AsRef<Path>) -> Result<(ConstraintSet, Option<ConstraintMeta>)> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path)?;
    let mut ml = Vec::new();
    let mut cl = Vec::new();
    for row in r.deserialize::<ConstraintRow>() {
        let row = row?;
        match row.kind {
            ConstraintKind::MustLink => ml.push((row.i, row.j)),
            ConstraintKind::CannotLink => cl.push((row.i, row.j)),
        }
    }
    let mp = meta_path(path);
    let meta = if mp.exists() {
        let text = fs::read_to_string(&mp).map_err(|e| Error::io(&mp, e))?;
        Some(serde_json::from_str(&text)?)
    } else {
        None
    };
    Ok((ConstraintSet::new(ml, cl)?, meta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng_from_seed;
    use proptest::prelude::*;

    #[test]
    fn set_invariants() {
        let cs = ConstraintSet::new(vec![(2, 1), (1, 2)], vec![(0, 3)]).unwrap();
        assert_eq!(cs.must_link(), &[(1, 2)]);
        assert!(ConstraintSet::new(vec![(1, 1)], vec![]).is_err());
        assert!(ConstraintSet::new(vec![(0, 1)], vec![(1, 0)]).is_err());
    }

    #[test]
    fn decode_covers_all_pairs() {
        let n = 7;
        let decoded: Vec<_> = (0..n * (n - 1) / 2).map(|t| decode_pair(t, n)).collect();
        let mut expected = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                expected.push((i, j));
            }
        }
        assert_eq!(decoded, expected);
    }

    #[test]
    fn generation_counts_match_dataset_table() {
        let mut rng = rng_from_seed(1);
        let labels: Vec<usize> = (0..899).map(|i| i % 10).collect();
        assert_eq!(generate_constraints(&labels, 0.10, &mut rng).unwrap().len(), 3916);
        let labels: Vec<usize> = (0..625).map(|i| i % 3).collect();
        assert_eq!(generate_constraints(&labels, 0.10, &mut rng).unwrap().len(), 1891);
        assert_eq!(constraint_count(899, 0.15), 1240 + 7671);
        assert_eq!(constraint_count(1728, 0.20), 32076 + 27264);
    }

    #[test]
    fn identical_labels_give_only_ml() {
        let cs = generate_constraints(&[0; 50], 0.2, &mut rng_from_seed(3)).unwrap();
        assert!(cs.cannot_link().is_empty());
        assert_eq!(cs.must_link().len(), 45);
    }

    #[test]
    fn generation_errors() {
        let mut rng = rng_from_seed(0);
        assert!(generate_constraints(&[0, 1, 0], 0.5, &mut rng).is_err());
        assert!(generate_constraints(&[0, 1, 0], 0.0, &mut rng).is_err());
        assert!(generate_constraints(&[0, 1, 0], 1.5, &mut rng).is_err());
    }

    #[test]
    fn violation_count_examples() {
        let cs = ConstraintSet::new(vec![(0, 1)], vec![(0, 2)]).unwrap();
        let g = ConstraintGraph::new(&cs, 3).unwrap();
        assert_eq!(violation_count(0, 2, &[None, Some(2), None], &g), 0);
        assert_eq!(violation_count(0, 1, &[None, Some(2), Some(1)], &g), 2);
        for h in 0..3 {
            assert_eq!(violation_count(0, h, &[None, None, None], &g), 0);
        }
    }

    #[test]
    fn unsat_examples() {
        // 1-based (1,1,2) with ml={(1,3)}, cl={(1,2)}
        let cs = ConstraintSet::new(vec![(0, 2)], vec![(0, 1)]).unwrap();
        assert_eq!(unsat(&[0, 0, 1], &cs), 1.0);
        let cs = ConstraintSet::new(vec![(0, 1)], vec![(0, 2)]).unwrap();
        assert_eq!(unsat(&[0, 0, 1], &cs), 0.0);
        assert_eq!(unsat(&[0, 0, 1], &ConstraintSet::empty()), 0.0);
    }

    #[test]
    fn graph_rejects_out_of_range() {
        let cs = ConstraintSet::new(vec![(0, 5)], vec![]).unwrap();
        assert!(ConstraintGraph::new(&cs, 3).is_err());
    }

    #[test]
    fn csv_round_trip_with_meta() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cs.csv");
        let cs = ConstraintSet::new(vec![(0, 1), (3, 4)], vec![(1, 2)]).unwrap();
        let meta = ConstraintMeta { seed: 9, fraction: 0.1, n_instances: 5 };
        write_constraints(&cs, &path, Some(&meta)).unwrap();
        let (back, m) = read_constraints(&path).unwrap();
        assert_eq!(back, cs);
        assert_eq!(m, Some(meta));
    }

    proptest! {
        #[test]
        fn generated_sets_are_consistent(
            labels in proptest::collection::vec(0usize..4, 10..120),
            fraction in 0.2f64..=1.0,
            seed in any::<u64>(),
        ) {
            let n = labels.len();
            let a = generate_constraints(&labels, fraction, &mut rng_from_seed(seed));
            prop_assume!(a.is_ok());
            let a = a.unwrap();
            let b = generate_constraints(&labels, fraction, &mut rng_from_seed(seed)).unwrap();
            prop_assert_eq!(&a, &b);
            prop_assert_eq!(a.len(), constraint_count(n, fraction));
            prop_assert_eq!(unsat(&labels, &a), 0.0);
            // stored without duplicates or overlap
            prop_assert_eq!(ConstraintSet::new(a.ml.clone(), a.cl.clone()).unwrap(), a);
        }
    }
}
