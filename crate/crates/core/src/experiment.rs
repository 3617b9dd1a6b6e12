//! Experiment orchestration: the dataset x fraction x method x run matrix,
//! aggregation, and report files.
//!
//! Run `r` uses seed `base_seed + r` for centroid initialisation. Constraint
//! sets are drawn from a separate stream of the same seed (or of `base_seed`
//! for every run with `fixed_constraints`). Dead-end COP-KMeans runs are
//! scored with the worst values: ARI = -1, NMI = 1, Unsat = 1.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::clustering::{self, ClusteringOutcome, EmConfig, RunStatus};
use crate::constraints::{generate_constraints, unsat, ConstraintSet};
use crate::data::{knn_impute, load_csv, standardize, CsvOptions, Dataset, LabelColumn};
use crate::error::{Error, Result};
use crate::metrics::{ari, nmi_index_with};
use crate::par::{self, Execution};
use crate::stats::{bayesian_sign_test, RopeInterval};
use crate::{rng_from_seed, Rng as CrateRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    PckmMono,
    MonoKmeans,
    CopKmeans,
    Kmeans,
    PckMeans,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::PckmMono,
        Method::MonoKmeans,
        Method::CopKmeans,
        Method::Kmeans,
        Method::PckMeans,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::PckmMono => "pckm_mono",
            Method::MonoKmeans => "mono_kmeans",
            Method::CopKmeans => "cop_kmeans",
            Method::Kmeans => "kmeans",
            Method::PckMeans => "pck_means",
        }
    }

    pub fn run(self, d: &Dataset, cs: &ConstraintSet, cfg: &EmConfig) -> Result<ClusteringOutcome> {
        match self {
            Method::PckmMono => clustering::pckm_mono(d, cs, cfg),
            Method::MonoKmeans => clustering::mono_kmeans(d, cfg),
            Method::CopKmeans => clustering::cop_kmeans(d, cs, cfg),
            Method::Kmeans => clustering::kmeans(d, cfg),
            Method::PckMeans => clustering::pck_means(d, cs, cfg),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s.trim())
            .ok_or_else(|| Error::UnknownMethod(s.to_string()))
    }
}

/// Splits instances, sorted by their ordinal label, into consecutive chunks
/// that become the new classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelChunks {
    pub sizes: Vec<usize>,
    /// When false the smallest label value is the best one (e.g. a ranking
    /// position) and ends up in the highest class.
    #[serde(default)]
    pub higher_is_better: bool,
}

fn default_true() -> bool {
    true
}

/// One dataset entry of an experiment config, with its preprocessing recipe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub path: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    /// Label column index in the file; the last column when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label_column: Option<usize>,
    #[serde(default = "default_true")]
    pub has_header: bool,
    /// Feature columns (after removing the label) to drop.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub drop_columns: Vec<usize>,
    /// Feature columns (after dropping) where lower is better.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub negate_columns: Vec<usize>,
    /// Neighbours used when the file has missing cells.
    #[serde(default = "default_impute_k")]
    pub impute_k: usize,
    #[serde(default = "default_true")]
    pub standardize: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label_chunks: Option<LabelChunks>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
}

fn default_impute_k() -> usize {
    5
}

impl DatasetSpec {
    pub fn from_path(path: impl Into<PathBuf>) -> Self {
        Self {
            path: path.into(),
            name: None,
            label_column: None,
            has_header: true,
            drop_columns: Vec::new(),
            negate_columns: Vec::new(),
            impute_k: default_impute_k(),
            standardize: true,
            label_chunks: None,
            weights: None,
        }
    }

    pub fn display_name(&self) -> String {
        self.name.clone().unwrap_or_else(|| {
            self.path
                .file_stem()
                .map_or_else(|| self.path.display().to_string(), |s| s.to_string_lossy().into_owned())
        })
    }

    /// Loads the file and applies the recipe: label chunks, column drops,
    /// negation, k-NN imputation (only when cells are missing), weights,
    /// standardization.
    pub fn load(&self) -> Result<NamedDataset> {
        let opts = CsvOptions {
            label_column: self.label_column.map_or(LabelColumn::Last, LabelColumn::Index),
            has_header: self.has_header,
        };
        let mut d = load_csv(&self.path, opts)?;
        if let Some(chunks) = &self.label_chunks {
            d = apply_label_chunks(&d, chunks)?;
        }
        if !self.drop_columns.is_empty() {
            let keep: Vec<usize> = (0..d.n_features())
                .filter(|c| !self.drop_columns.contains(c))
                .collect();
            d = d.select_features(&keep)?;
        }
        for &c in &self.negate_columns {
            d = d.negate_feature(c)?;
        }
        if d.has_missing() {
            d = knn_impute(&d, self.impute_k)?;
        }
        if let Some(w) = &self.weights {
            d = d.with_weights(w.clone())?;
        }
        if self.standardize {
            d = standardize(&d)?;
        }
        Ok(NamedDataset {
            name: self.display_name(),
            data: d,
        })
    }
}

pub fn apply_label_chunks(d: &Dataset, chunks: &LabelChunks) -> Result<Dataset> {
    let labels = d.labels().ok_or(Error::MissingLabels)?;
    if chunks.sizes.is_empty() || chunks.sizes.contains(&0) {
        return Err(Error::invalid("label chunk sizes must be positive"));
    }
    let mut order: Vec<usize> = (0..labels.len()).collect();
    order.sort_by_key(|&i| (labels[i], i));
    let n_chunks = chunks.sizes.len();
    let mut out = vec![0; labels.len()];
    let mut chunk = 0;
    let mut filled = 0;
    for i in order {
        if filled == chunks.sizes[chunk] && chunk + 1 < n_chunks {
            chunk += 1;
            filled = 0;
        }
        out[i] = if chunks.higher_is_better {
            chunk
        } else {
            n_chunks - 1 - chunk
        };
        filled += 1;
    }
    let mut fresh = Dataset::from_flat(d.n_rows(), d.n_features(), d.values().to_vec())?
        .with_feature_names(d.feature_names().to_vec())?
        .with_weights(d.weights().to_vec())?;
    fresh = fresh.with_labels(out)?;
    Ok(fresh)
}

#[derive(Debug, Clone, PartialEq)]
pub struct NamedDataset {
    pub name: String,
    pub data: Dataset,
}

fn default_fractions() -> Vec<f64> {
    vec![0.10, 0.15, 0.20]
}

fn default_methods() -> Vec<Method> {
    Method::ALL.to_vec()
}

fn default_repeats() -> usize {
    50
}

fn default_max_iter() -> usize {
    100
}

fn default_tol() -> f64 {
    1e-4
}

fn default_penalty() -> f64 {
    1.0
}

fn default_signtest_samples() -> usize {
    crate::stats::DEFAULT_SAMPLES
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub datasets: Vec<DatasetSpec>,
    #[serde(default = "default_fractions")]
    pub fractions: Vec<f64>,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    #[serde(default = "default_repeats")]
    pub repeats: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_penalty")]
    pub penalty_weight: f64,
    /// Reuse one constraint set (seeded by `base_seed`) for every run.
    #[serde(default)]
    pub fixed_constraints: bool,
    #[serde(default = "default_signtest_samples")]
    pub signtest_samples: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            datasets: Vec::new(),
            fractions: default_fractions(),
            methods: default_methods(),
            repeats: default_repeats(),
            base_seed: 0,
            max_iter: default_max_iter(),
            tol: default_tol(),
            penalty_weight: default_penalty(),
            fixed_constraints: false,
            signtest_samples: default_signtest_samples(),
            output_dir: None,
        }
    }
}

impl ExperimentConfig {
    /// Reads a config file. A report manifest is accepted too: its embedded
    /// config is used.
    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let value: serde_json::Value = serde_json::from_str(&text)?;
        let inner = match value.get("config") {
            Some(cfg) if value.get("manifest_version").is_some() => cfg.clone(),
            _ => value,
        };
        Ok(serde_json::from_value(inner)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.repeats == 0 {
            return Err(Error::invalid("repeats must be at least 1"));
        }
        if self.methods.is_empty() {
            return Err(Error::invalid("at least one method is required"));
        }
        if self.fractions.is_empty() {
            return Err(Error::invalid("at least one constraint fraction is required"));
        }
        if let Some(f) = self.fractions.iter().find(|f| !(**f > 0.0 && **f <= 1.0)) {
            return Err(Error::invalid(format!("fraction {f} not in (0, 1]")));
        }
        if self.signtest_samples == 0 {
            return Err(Error::invalid("signtest_samples must be positive"));
        }
        Ok(())
    }

    pub fn run_seed(&self, run: usize) -> u64 {
        self.base_seed.wrapping_add(run as u64)
    }

    pub fn constraint_seed(&self, run: usize) -> u64 {
        if self.fixed_constraints {
            self.base_seed
        } else {
            self.run_seed(run)
        }
    }

    fn em_config(&self, k: usize, seed: u64) -> EmConfig {
        EmConfig {
            max_iter: self.max_iter,
            tol: self.tol,
            penalty_weight: self.penalty_weight,
            ..EmConfig::new(k).with_seed(seed)
        }
    }
}

/// Generator for constraint sets, independent from the clustering stream.
pub fn constraint_rng(seed: u64) -> CrateRng {
    let mut rng = rng_from_seed(seed);
    rng.set_stream(1);
    rng
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub dataset: String,
    pub fraction: f64,
    pub method: Method,
    pub run: usize,
    pub seed: u64,
    pub ari: f64,
    pub nmi: f64,
    pub unsat: f64,
    pub iterations: usize,
    pub converged: bool,
    pub status: RunStatus,
    pub n_constraints: usize,
    #[serde(skip)]
    pub wall_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ResultsTable {
    pub records: Vec<RunRecord>,
}

impl ResultsTable {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn for_method(&self, m: Method) -> impl Iterator<Item = &RunRecord> {
        self.records.iter().filter(move |r| r.method == m)
    }

    /// Raw per-run rows, without timings so that reruns are byte-identical.
    pub fn to_csv_string(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.records {
            w.serialize(r)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::invalid(e.to_string()))?;
        Ok(String::from_utf8_lossy(&bytes).into_owned())
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let records = r.deserialize().collect::<Result<Vec<RunRecord>, _>>()?;
        Ok(Self { records })
    }
}

/// Runs the full matrix over datasets loaded from the config.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ResultsTable> {
    run_experiment_with(cfg, Execution::default())
}

pub fn run_experiment_with(cfg: &ExperimentConfig, exec: Execution) -> Result<ResultsTable> {
    cfg.validate()?;
    if cfg.datasets.is_empty() {
        return Err(Error::invalid("no datasets configured"));
    }
    let datasets = cfg
        .datasets
        .iter()
        .map(DatasetSpec::load)
        .collect::<Result<Vec<_>>>()?;
    run_on(&datasets, cfg, exec)
}

/// Runs the matrix over already prepared datasets (config dataset paths are
/// ignored).
pub fn run_on(datasets: &[NamedDataset], cfg: &ExperimentConfig, exec: Execution) -> Result<ResultsTable> {
    cfg.validate()?;
    for nd in datasets {
        if nd.data.labels().is_none() {
            return Err(Error::MissingLabels);
        }
    }
    let mut tasks = Vec::new();
    for di in 0..datasets.len() {
        for fi in 0..cfg.fractions.len() {
            for run in 0..cfg.repeats {
                tasks.push((di, fi, run));
            }
        }
    }
    let results = par::map_collect(exec, &tasks, |&(di, fi, run)| {
        run_cell(&datasets[di], cfg.fractions[fi], run, cfg)
            .map(|recs| recs.into_iter().map(move |r| ((di, fi), r)).collect::<Vec<_>>())
    });
    let mut keyed = Vec::with_capacity(tasks.len() * cfg.methods.len());
    for r in results {
        keyed.extend(r?);
    }
    let method_pos = |m: Method| cfg.methods.iter().position(|&x| x == m).unwrap_or(0);
    keyed.sort_by_key(|((di, fi), r)| (*di, *fi, method_pos(r.method), r.run));
    Ok(ResultsTable {
        records: keyed.into_iter().map(|(_, r)| r).collect(),
    })
}

fn run_cell(nd: &NamedDataset, fraction: f64, run: usize, cfg: &ExperimentConfig) -> Result<Vec<RunRecord>> {
    let truth = nd.data.labels().ok_or(Error::MissingLabels)?;
    let cs = generate_constraints(truth, fraction, &mut constraint_rng(cfg.constraint_seed(run)))?;
    let seed = cfg.run_seed(run);
    let em = cfg.em_config(nd.data.n_classes().max(1), seed);
    cfg.methods
        .iter()
        .map(|&method| {
            let start = Instant::now();
            let outcome = method.run(&nd.data, &cs, &em)?;
            let wall_ms = start.elapsed().as_secs_f64() * 1e3;
            let (ari_v, nmi_v, unsat_v) = match outcome.labels() {
                Some(labels) => (
                    ari(truth, labels)?,
                    nmi_index_with(labels, &nd.data, Execution::Sequential)?,
                    unsat(labels, &cs),
                ),
                None => (-1.0, 1.0, 1.0),
            };
            Ok(RunRecord {
                dataset: nd.name.clone(),
                fraction,
                method,
                run,
                seed,
                ari: ari_v,
                nmi: nmi_v,
                unsat: unsat_v,
                iterations: outcome.iterations,
                converged: outcome.converged,
                status: outcome.status,
                n_constraints: cs.len(),
                wall_ms,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    /// Mean and sample standard deviation (0 for a single value).
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
        };
        Self { mean, std }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryCell {
    pub dataset: String,
    pub fraction: f64,
    pub method: Method,
    pub runs: usize,
    pub dead_ends: usize,
    /// Every run dead-ended; shown as "-" and left out of grand means.
    pub no_result: bool,
    pub ari: MeanStd,
    pub nmi: MeanStd,
    pub unsat: MeanStd,
    pub iterations: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrandMean {
    pub fraction: f64,
    pub method: Method,
    /// Datasets that contributed (cells with a result).
    pub datasets: usize,
    pub ari: Option<f64>,
    pub nmi: Option<f64>,
    pub unsat: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub cells: Vec<SummaryCell>,
    pub grand: Vec<GrandMean>,
}

impl Summary {
    pub fn cell(&self, dataset: &str, fraction: f64, method: Method) -> Option<&SummaryCell> {
        self.cells
            .iter()
            .find(|c| c.dataset == dataset && c.fraction == fraction && c.method == method)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Measure {
    Ari,
    Nmi,
    Unsat,
}

impl Measure {
    pub const ALL: [Measure; 3] = [Measure::Ari, Measure::Nmi, Measure::Unsat];

    pub fn name(self) -> &'static str {
        match self {
            Measure::Ari => "ari",
            Measure::Nmi => "nmi",
            Measure::Unsat => "unsat",
        }
    }

    pub fn of_record(self, r: &RunRecord) -> f64 {
        match self {
            Measure::Ari => r.ari,
            Measure::Nmi => r.nmi,
            Measure::Unsat => r.unsat,
        }
    }

    pub fn of_cell(self, c: &SummaryCell) -> MeanStd {
        match self {
            Measure::Ari => c.ari,
            Measure::Nmi => c.nmi,
            Measure::Unsat => c.unsat,
        }
    }

    pub fn default_rope(self) -> RopeInterval {
        match self {
            Measure::Ari => RopeInterval::ari(),
            Measure::Nmi => RopeInterval::nmi(),
            Measure::Unsat => RopeInterval::unsat(),
        }
    }
}

/// Per-cell mean/std and per-(fraction, method) grand means.
pub fn aggregate(t: &ResultsTable) -> Result<Summary> {
    if t.is_empty() {
        return Err(Error::invalid("cannot aggregate an empty results table"));
    }
    // first-appearance order of datasets, fractions and methods
    let mut datasets: Vec<&str> = Vec::new();
    let mut fractions: Vec<f64> = Vec::new();
    let mut methods: Vec<Method> = Vec::new();
    let mut groups: BTreeMap<(usize, usize, usize), Vec<&RunRecord>> = BTreeMap::new();
    for r in &t.records {
        let di = index_of(&mut datasets, r.dataset.as_str());
        let fi = index_of(&mut fractions, r.fraction);
        let mi = index_of(&mut methods, r.method);
        groups.entry((di, fi, mi)).or_default().push(r);
    }
    let cells: Vec<SummaryCell> = groups
        .iter()
        .map(|(&(di, fi, mi), recs)| {
            let col = |m: Measure| MeanStd::of(&recs.iter().map(|r| m.of_record(r)).collect::<Vec<_>>());
            let dead_ends = recs.iter().filter(|r| r.status == RunStatus::DeadEnd).count();
            SummaryCell {
                dataset: datasets[di].to_string(),
                fraction: fractions[fi],
                method: methods[mi],
                runs: recs.len(),
                dead_ends,
                no_result: dead_ends == recs.len(),
                ari: col(Measure::Ari),
                nmi: col(Measure::Nmi),
                unsat: col(Measure::Unsat),
                iterations: recs.iter().map(|r| r.iterations as f64).sum::<f64>() / recs.len() as f64,
            }
        })
        .collect();
    let mut grand = Vec::new();
    for &fraction in &fractions {
        for &method in &methods {
            let with_result: Vec<&SummaryCell> = cells
                .iter()
                .filter(|c| c.fraction == fraction && c.method == method && !c.no_result)
                .collect();
            let mean = |m: Measure| {
                (!with_result.is_empty()).then(|| {
                    with_result.iter().map(|c| m.of_cell(c).mean).sum::<f64>() / with_result.len() as f64
                })
            };
            grand.push(GrandMean {
                fraction,
                method,
                datasets: with_result.len(),
                ari: mean(Measure::Ari),
                nmi: mean(Measure::Nmi),
                unsat: mean(Measure::Unsat),
            });
        }
    }
    Ok(Summary { cells, grand })
}

fn index_of<T: PartialEq + Copy>(seen: &mut Vec<T>, x: T) -> usize {
    match seen.iter().position(|&y| y == x) {
        Some(i) => i,
        None => {
            seen.push(x);
            seen.len() - 1
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    manifest_version: u32,
    tool: String,
    version: String,
    parallel: bool,
    config: ExperimentConfig,
    run_seeds: Vec<u64>,
    constraint_seeds: Vec<u64>,
    rows: usize,
    files: Vec<String>,
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn summary_long_csv(s: &Summary) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "dataset", "fraction", "method", "runs", "dead_ends", "no_result", "ari_mean", "ari_std",
        "nmi_mean", "nmi_std", "unsat_mean", "unsat_std", "iterations_mean",
    ])?;
    for c in &s.cells {
        w.write_record([
            c.dataset.clone(),
            c.fraction.to_string(),
            c.method.to_string(),
            c.runs.to_string(),
            c.dead_ends.to_string(),
            c.no_result.to_string(),
            c.ari.mean.to_string(),
            c.ari.std.to_string(),
            c.nmi.mean.to_string(),
            c.nmi.std.to_string(),
            c.unsat.mean.to_string(),
            c.unsat.std.to_string(),
            c.iterations.to_string(),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::invalid(e.to_string()))?;
    Ok(String::from_utf8_lossy(&bytes).into_owned())
}

/// Dataset rows by method columns, one block per fraction, closed by a Mean
/// row. Cells where every run dead-ended print as "-".
fn measure_table_csv(s: &Summary, m: Measure, methods: &[Method]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["fraction".to_string(), "dataset".to_string()];
    header.extend(methods.iter().map(|m| m.to_string()));
    w.write_record(&header)?;
    let mut fractions: Vec<f64> = Vec::new();
    let mut datasets: Vec<&str> = Vec::new();
    for c in &s.cells {
        index_of(&mut fractions, c.fraction);
        index_of(&mut datasets, c.dataset.as_str());
    }
    for &f in &fractions {
        for &d in &datasets {
            let mut row = vec![f.to_string(), d.to_string()];
            for &method in methods {
                row.push(match s.cell(d, f, method) {
                    Some(c) if !c.no_result => format!("{:.3}", m.of_cell(c).mean),
                    _ => "-".to_string(),
                });
            }
            w.write_record(&row)?;
        }
        let mut row = vec![f.to_string(), "Mean".to_string()];
        for &method in methods {
            let g = s.grand.iter().find(|g| g.fraction == f && g.method == method);
            let v = g.and_then(|g| match m {
                Measure::Ari => g.ari,
                Measure::Nmi => g.nmi,
                Measure::Unsat => g.unsat,
            });
            row.push(v.map_or_else(|| "-".to_string(), |v| format!("{v:.3}")));
        }
        w.write_record(&row)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::invalid(e.to_string()))?;
    Ok(String::from_utf8_lossy(&bytes).into_owned())
}

fn timings_csv(t: &ResultsTable) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["dataset", "fraction", "method", "run", "wall_ms"])?;
    for r in &t.records {
        w.write_record([
            r.dataset.clone(),
            r.fraction.to_string(),
            r.method.to_string(),
            r.run.to_string(),
            format!("{:.3}", r.wall_ms),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::invalid(e.to_string()))?;
    Ok(String::from_utf8_lossy(&bytes).into_owned())
}

/// Writes every report file into `output_dir` and returns their paths.
///
/// Sign tests pair PCKM-Mono against each other configured method, per
/// measure, using per-(dataset, fraction) cell means as observations.
pub fn emit_report(
    table: &ResultsTable,
    summary: &Summary,
    cfg: &ExperimentConfig,
    output_dir: impl AsRef<Path>,
) -> Result<Vec<PathBuf>> {
    let dir = output_dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    let mut put = |name: String, contents: String| -> Result<()> {
        let path = dir.join(&name);
        write_file(&path, contents)?;
        written.push(path);
        Ok(())
    };

    put("runs.csv".into(), table.to_csv_string()?)?;
    put("timings.csv".into(), timings_csv(table)?)?;
    put("summary.csv".into(), summary_long_csv(summary)?)?;
    let methods: Vec<Method> = cfg.methods.clone();
    for m in Measure::ALL {
        put(format!("table_{}.csv", m.name()), measure_table_csv(summary, m, &methods)?)?;
    }

    if methods.contains(&Method::PckmMono) {
        let sign_dir = dir.join("signtest");
        let others: Vec<Method> = methods.iter().copied().filter(|&m| m != Method::PckmMono).collect();
        if !others.is_empty() {
            fs::create_dir_all(&sign_dir).map_err(|e| Error::io(&sign_dir, e))?;
        }
        for (mi, m) in Measure::ALL.into_iter().enumerate() {
            let reference: Vec<&SummaryCell> = summary
                .cells
                .iter()
                .filter(|c| c.method == Method::PckmMono)
                .collect();
            for (oi, &other) in others.iter().enumerate() {
                let mut a = Vec::new();
                let mut b = Vec::new();
                for c in &reference {
                    if let Some(o) = summary.cell(&c.dataset, c.fraction, other) {
                        a.push(m.of_cell(c).mean);
                        b.push(m.of_cell(o).mean);
                    }
                }
                if a.is_empty() {
                    continue;
                }
                let seed = cfg.base_seed.wrapping_add((mi * 16 + oi) as u64);
                let result = bayesian_sign_test(
                    &a,
                    &b,
                    m.default_rope(),
                    cfg.signtest_samples,
                    1.0,
                    &mut rng_from_seed(seed),
                )?;
                let stem = format!("{}_pckm_mono_vs_{}", m.name(), other);
                let json = sign_dir.join(format!("{stem}.json"));
                let cloud = sign_dir.join(format!("{stem}_samples.csv"));
                result.write_summary(&json)?;
                result.write_samples(&cloud)?;
                written.push(json);
                written.push(cloud);
            }
        }
    }

    let manifest = Manifest {
        manifest_version: 1,
        tool: env!("CARGO_PKG_NAME").to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        parallel: cfg!(feature = "parallel"),
        config: cfg.clone(),
        run_seeds: (0..cfg.repeats).map(|r| cfg.run_seed(r)).collect(),
        constraint_seeds: (0..cfg.repeats).map(|r| cfg.constraint_seed(r)).collect(),
        rows: table.len(),
        files: written
            .iter()
            .filter_map(|p| p.strip_prefix(dir).ok())
            .map(|p| p.display().to_string())
            .collect(),
    };
    let path = dir.join("manifest.json");
    write_file(&path, serde_json::to_string_pretty(&manifest)?)?;
    written.push(path);
    Ok(written)
}

/// Points uniform in `[0, 1]^u`, classed by quantile bucket of `sum_d x_d`.
/// With probability `noise` a class moves one bucket up or down (clamped).
pub fn make_synthetic<R: Rng + ?Sized>(
    n: usize,
    u: usize,
    k: usize,
    noise: f64,
    rng: &mut R,
) -> Result<Dataset> {
    if k == 0 || n < k || u == 0 {
        return Err(Error::invalid(format!("need n >= k >= 1 and u >= 1 (n={n}, u={u}, k={k})")));
    }
    if !(0.0..=1.0).contains(&noise) {
        return Err(Error::invalid("noise must lie in [0, 1]"));
    }
    let values: Vec<f64> = (0..n * u).map(|_| rng.random::<f64>()).collect();
    let sums: Vec<f64> = values.chunks_exact(u).map(|r| r.iter().sum()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| sums[a].total_cmp(&sums[b]).then(a.cmp(&b)));
    let mut labels = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        labels[i] = pos * k / n;
    }
    // equal sums share the lowest bucket of their run
    for w in 1..n {
        let (prev, cur) = (order[w - 1], order[w]);
        if sums[prev] == sums[cur] {
            labels[cur] = labels[prev];
        }
    }
    if noise > 0.0 {
        for l in labels.iter_mut() {
            if rng.random::<f64>() < noise {
                *l = if rng.random::<bool>() {
                    (*l + 1).min(k - 1)
                } else {
                    l.saturating_sub(1)
                };
            }
        }
    }
    Dataset::from_flat(n, u, values)?.with_labels(labels)
}

/// Parameters of the bundled synthetic datasets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticSpec {
    pub name: &'static str,
    pub n: usize,
    pub u: usize,
    pub k: usize,
    pub noise: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn build(&self) -> Result<Dataset> {
        make_synthetic(self.n, self.u, self.k, self.noise, &mut rng_from_seed(self.seed))
    }
}

/// Self-test fixtures spanning small to desk-scale sizes.
pub const SYNTHETIC_SUITE: [SyntheticSpec; 6] = [
    SyntheticSpec { name: "synth_tiny", n: 40, u: 2, k: 2, noise: 0.0, seed: 1 },
    SyntheticSpec { name: "synth_small", n: 200, u: 3, k: 3, noise: 0.05, seed: 2 },
    SyntheticSpec { name: "synth_mid", n: 500, u: 4, k: 4, noise: 0.1, seed: 3 },
    SyntheticSpec { name: "synth_wide", n: 800, u: 10, k: 4, noise: 0.1, seed: 4 },
    SyntheticSpec { name: "synth_many", n: 1000, u: 4, k: 9, noise: 0.2, seed: 5 },
    SyntheticSpec { name: "synth_large", n: 2000, u: 6, k: 5, noise: 0.1, seed: 6 },
];

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::nmi_index;

    fn synthetic_named(name: &str, n: usize, seed: u64) -> NamedDataset {
        let d = make_synthetic(n, 3, 3, 0.1, &mut rng_from_seed(seed)).unwrap();
        NamedDataset {
            name: name.to_string(),
            data: standardize(&d).unwrap(),
        }
    }

    fn small_cfg(repeats: usize) -> ExperimentConfig {
        ExperimentConfig {
            fractions: vec![0.1],
            repeats,
            signtest_samples: 200,
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert!(matches!("nope".parse::<Method>(), Err(Error::UnknownMethod(_))));
    }

    #[test]
    fn matrix_cardinality_and_determinism() {
        let ds = [synthetic_named("a", 120, 1)];
        let cfg = small_cfg(50);
        let t = run_on(&ds, &cfg, Execution::default()).unwrap();
        assert_eq!(t.len(), 250);
        let again = run_on(&ds, &cfg, Execution::Sequential).unwrap();
        assert_eq!(t.to_csv_string().unwrap(), again.to_csv_string().unwrap());
        for r in &t.records {
            assert!((-1.0..=1.0).contains(&r.ari));
            assert!((0.0..=1.0).contains(&r.nmi));
            assert!((0.0..=1.0).contains(&r.unsat));
        }
    }

    #[test]
    fn kmeans_rows_score_unsat_against_generated_sets() {
        let ds = [synthetic_named("a", 150, 2)];
        let cfg = ExperimentConfig {
            methods: vec![Method::Kmeans],
            ..small_cfg(5)
        };
        let t = run_on(&ds, &cfg, Execution::default()).unwrap();
        assert!(t.records.iter().all(|r| r.n_constraints == 105));
        assert!(t.records.iter().any(|r| r.unsat > 0.0));
    }

    #[test]
    fn fixed_constraints_share_seed() {
        let cfg = ExperimentConfig {
            fixed_constraints: true,
            base_seed: 7,
            ..small_cfg(3)
        };
        assert_eq!(cfg.constraint_seed(0), cfg.constraint_seed(2));
        assert_eq!(cfg.run_seed(2), 9);
    }

    fn record(method: Method, run: usize, ari: f64, status: RunStatus) -> RunRecord {
        RunRecord {
            dataset: "d".into(),
            fraction: 0.1,
            method,
            run,
            seed: run as u64,
            ari,
            nmi: 0.5,
            unsat: 0.0,
            iterations: 3,
            converged: true,
            status,
            n_constraints: 10,
            wall_ms: 0.0,
        }
    }

    #[test]
    fn aggregate_rules() {
        let single = ResultsTable {
            records: vec![record(Method::Kmeans, 0, 0.7, RunStatus::Success)],
        };
        let s = aggregate(&single).unwrap();
        assert_eq!(s.cells[0].ari, MeanStd { mean: 0.7, std: 0.0 });

        let all_dead = ResultsTable {
            records: vec![
                record(Method::CopKmeans, 0, -1.0, RunStatus::DeadEnd),
                record(Method::CopKmeans, 1, -1.0, RunStatus::DeadEnd),
            ],
        };
        let s = aggregate(&all_dead).unwrap();
        assert!(s.cells[0].no_result);
        assert_eq!(s.grand[0].ari, None);
        assert_eq!(s.grand[0].datasets, 0);

        let mixed = ResultsTable {
            records: vec![
                record(Method::CopKmeans, 0, -1.0, RunStatus::DeadEnd),
                record(Method::CopKmeans, 1, 1.0, RunStatus::Success),
            ],
        };
        let s = aggregate(&mixed).unwrap();
        assert!(!s.cells[0].no_result);
        assert_eq!(s.cells[0].ari.mean, 0.0);
        assert!(aggregate(&ResultsTable::default()).is_err());
    }

    #[test]
    fn report_files() {
        let ds = [synthetic_named("a", 100, 3)];
        let cfg = small_cfg(2);
        let t = run_on(&ds, &cfg, Execution::default()).unwrap();
        let s = aggregate(&t).unwrap();
        let dir = tempfile::tempdir().unwrap();
        emit_report(&t, &s, &cfg, dir.path()).unwrap();
        let clouds = |measure: &str| {
            fs::read_dir(dir.path().join("signtest"))
                .unwrap()
                .filter_map(|e| e.ok())
                .map(|e| e.file_name().to_string_lossy().into_owned())
                .filter(|n| n.starts_with(measure) && n.ends_with("_samples.csv"))
                .count()
        };
        for m in ["ari", "nmi", "unsat"] {
            assert_eq!(clouds(m), 4);
        }
        let back = ResultsTable::read_csv(dir.path().join("runs.csv")).unwrap();
        assert_eq!(back.len(), t.len());
        let reloaded = ExperimentConfig::from_json_file(dir.path().join("manifest.json")).unwrap();
        assert_eq!(reloaded, cfg);

        let solo = ExperimentConfig {
            methods: vec![Method::PckmMono],
            ..small_cfg(1)
        };
        let t = run_on(&ds, &solo, Execution::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        emit_report(&t, &aggregate(&t).unwrap(), &solo, dir.path()).unwrap();
        assert!(!dir.path().join("signtest").exists());
    }

    #[test]
    fn synthetic_contract() {
        let d = make_synthetic(300, 3, 4, 0.0, &mut rng_from_seed(1)).unwrap();
        assert_eq!(nmi_index(d.labels().unwrap(), &d).unwrap(), 0.0);
        let d = make_synthetic(50, 2, 1, 0.0, &mut rng_from_seed(1)).unwrap();
        assert!(d.labels().unwrap().iter().all(|&l| l == 0));
        let d = make_synthetic(500, 4, 4, 0.1, &mut rng_from_seed(1)).unwrap();
        assert!(nmi_index(d.labels().unwrap(), &d).unwrap() > 0.0);
        assert!(make_synthetic(2, 2, 3, 0.0, &mut rng_from_seed(1)).is_err());
    }

    #[test]
    fn label_chunks_rank_recipe() {
        let d = Dataset::from_rows((0..10).map(|i| vec![i as f64]).collect())
            .unwrap()
            .with_labels((0..10).collect())
            .unwrap();
        let chunks = LabelChunks { sizes: vec![2, 3, 5], higher_is_better: false };
        let out = apply_label_chunks(&d, &chunks).unwrap();
        assert_eq!(out.labels().unwrap(), &[2, 2, 1, 1, 1, 0, 0, 0, 0, 0]);
    }

    #[test]
    fn dataset_spec_recipe() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("toy.csv");
        fs::write(&path, "a,b,c,y\n1,10,5,0\n2,?,4,1\n3,30,3,1\n4,40,2,2\n").unwrap();
        let spec = DatasetSpec {
            drop_columns: vec![0],
            negate_columns: vec![1],
            standardize: false,
            ..DatasetSpec::from_path(&path)
        };
        let nd = spec.load().unwrap();
        assert_eq!(nd.name, "toy");
        assert_eq!(nd.data.n_features(), 2);
        assert!(!nd.data.has_missing());
        assert_eq!(nd.data.row(0), &[10.0, -5.0]);
    }
}
