use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use pckm::constraints::{read_constraints, write_constraints, ConstraintMeta};
use pckm::data::write_csv;
use pckm::experiment::{
    aggregate, constraint_rng, emit_report, make_synthetic, run_experiment_with, DatasetSpec,
    ExperimentConfig, Method,
};
use pckm::{
    ari, bayesian_sign_test, generate_constraints, knn_impute, load_csv, nmi_index, nmi_pairs,
    rng_from_seed, standardize, unsat, ClusteringOutcome, ConstraintSet, CsvOptions, Dataset,
    EmConfig, Error, Execution, LabelColumn, Result, RopeInterval,
};

#[derive(Parser)]
#[command(name = "pckm", version, about = "Pairwise constrained monotonic clustering toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the dataset x fraction x method x repeat matrix and write reports.
    Run(RunArgs),
    /// Score a stored partition with ARI, NMI and Unsat.
    Metrics(MetricsArgs),
    /// Bayesian sign test between two result columns.
    Signtest(SigntestArgs),
    /// Generate a synthetic monotone dataset.
    Synth(SynthArgs),
    /// Generate a constraint set from a labeled dataset.
    Constraints(ConstraintArgs),
    /// Cluster one dataset with one method.
    Cluster(ClusterArgs),
}

#[derive(Args)]
struct DataArgs {
    /// CSV file; the last column holds the class unless --label-column is given.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    label_column: Option<usize>,
    #[arg(long)]
    no_header: bool,
}

impl DataArgs {
    fn load(&self) -> Result<Dataset> {
        load_csv(
            &self.data,
            CsvOptions {
                label_column: self.label_column.map_or(LabelColumn::Last, LabelColumn::Index),
                has_header: !self.no_header,
            },
        )
    }
}

#[derive(Args)]
struct RunArgs {
    /// JSON experiment config (a report manifest also works).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated dataset CSV paths.
    #[arg(long, value_delimiter = ',')]
    datasets: Vec<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    fractions: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<String>>,
    #[arg(long)]
    repeats: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    penalty_weight: Option<f64>,
    #[arg(long)]
    fixed_constraints: bool,
    #[arg(long)]
    signtest_samples: Option<usize>,
    /// Disable rayon even when compiled in.
    #[arg(long)]
    sequential: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct MetricsArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Outcome JSON written by `cluster`, or a CSV with one label per line.
    #[arg(long)]
    partition: PathBuf,
    #[arg(long)]
    constraints: Option<PathBuf>,
}

#[derive(Args)]
struct SigntestArgs {
    a: PathBuf,
    b: PathBuf,
    /// Rope as `min,max`.
    #[arg(long, allow_hyphen_values = true, default_value = "-0.01,0.01")]
    rope: String,
    /// Column name to read; the first column otherwise.
    #[arg(long)]
    column: Option<String>,
    #[arg(long, default_value_t = pckm::stats::DEFAULT_SAMPLES)]
    samples: usize,
    #[arg(long, default_value_t = 1.0)]
    prior: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Directory for `summary.json` and `samples.csv`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    u: usize,
    #[arg(long)]
    k: usize,
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ConstraintArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    fraction: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ClusterArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value = "pckm_mono")]
    method: String,
    /// Cluster count; defaults to the number of classes.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    constraints: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1.0)]
    penalty_weight: f64,
    #[arg(long, default_value_t = 100)]
    max_iter: usize,
    #[arg(long, default_value_t = 1e-4)]
    tol: f64,
    #[arg(long)]
    no_standardize: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn prepare(d: Dataset, standardized: bool) -> Result<Dataset> {
    let d = if d.has_missing() { knn_impute(&d, 5)? } else { d };
    if standardized {
        standardize(&d)
    } else {
        Ok(d)
    }
}

fn cmd_run(args: RunArgs) -> Result<()> {
    let mut cfg = match &args.config {
        Some(path) => ExperimentConfig::from_json_file(path)?,
        None => ExperimentConfig::default(),
    };
    if !args.datasets.is_empty() {
        cfg.datasets = args.datasets.iter().map(DatasetSpec::from_path).collect();
    }
    if let Some(f) = args.fractions {
        cfg.fractions = f;
    }
    if let Some(ms) = args.methods {
        cfg.methods = ms.iter().map(|m| m.parse()).collect::<Result<_>>()?;
    }
    if let Some(r) = args.repeats {
        cfg.repeats = r;
    }
    if let Some(s) = args.seed {
        cfg.base_seed = s;
    }
    if let Some(w) = args.penalty_weight {
        cfg.penalty_weight = w;
    }
    if let Some(s) = args.signtest_samples {
        cfg.signtest_samples = s;
    }
    cfg.fixed_constraints |= args.fixed_constraints;
    if let Some(out) = args.out {
        cfg.output_dir = Some(out);
    }
    let out = cfg
        .output_dir
        .clone()
        .ok_or_else(|| Error::InvalidArgument("--out is required".into()))?;
    let exec = if args.sequential {
        Execution::Sequential
    } else {
        Execution::default()
    };
    let table = run_experiment_with(&cfg, exec)?;
    let summary = aggregate(&table)?;
    let files = emit_report(&table, &summary, &cfg, &out)?;
    eprintln!("{} runs, {} files written to {}", table.len(), files.len(), out.display());
    Ok(())
}

fn read_labels(path: &Path) -> Result<Vec<usize>> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io { path: path.into(), source: e })?;
    if text.trim_start().starts_with('{') {
        let outcome: ClusteringOutcome = serde_json::from_str(&text)?;
        return outcome
            .partition
            .map(|p| p.labels)
            .ok_or_else(|| Error::InvalidArgument("outcome has no partition (dead-end)".into()));
    }
    let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty()).peekable();
    // optional header
    if lines.peek().is_some_and(|l| l.parse::<usize>().is_err()) {
        lines.next();
    }
    lines
        .map(|l| {
            l.parse::<usize>()
                .map_err(|_| Error::InvalidArgument(format!("bad label {l:?}")))
        })
        .collect()
}

#[derive(Serialize)]
struct MetricsReport {
    ari: Option<f64>,
    nmi: f64,
    nmi_pairs: f64,
    unsat: Option<f64>,
}

fn cmd_metrics(args: MetricsArgs) -> Result<()> {
    let d = args.data.load()?;
    let labels = read_labels(&args.partition)?;
    let report = MetricsReport {
        ari: d.labels().map(|t| ari(t, &labels)).transpose()?,
        nmi: nmi_index(&labels, &d)?,
        nmi_pairs: nmi_pairs(&labels, &d)?,
        unsat: args
            .constraints
            .map(|p| read_constraints(p).map(|(cs, _)| unsat(&labels, &cs)))
            .transpose()?,
    };
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn read_column(path: &Path, column: Option<&str>) -> Result<Vec<f64>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_path(path)?;
    let mut rows = reader.records();
    let mut values = Vec::new();
    let first = match rows.next() {
        Some(r) => r?,
        None => return Ok(values),
    };
    let header_present = first.get(0).is_some_and(|c| c.trim().parse::<f64>().is_err());
    let idx = match column {
        Some(name) if header_present => first
            .iter()
            .position(|c| c.trim() == name)
            .ok_or_else(|| Error::InvalidArgument(format!("no column {name:?} in {}", path.display())))?,
        Some(name) => return Err(Error::InvalidArgument(format!("{} has no header for {name:?}", path.display()))),
        None => 0,
    };
    let parse = |rec: &csv::StringRecord| -> Result<f64> {
        let cell = rec.get(idx).unwrap_or("").trim();
        cell.parse()
            .map_err(|_| Error::InvalidArgument(format!("cannot parse {cell:?} in {}", path.display())))
    };
    if !header_present {
        values.push(parse(&first)?);
    }
    for rec in rows {
        values.push(parse(&rec?)?);
    }
    Ok(values)
}

fn parse_rope(s: &str) -> Result<RopeInterval> {
    let parts: Vec<&str> = s.split(',').collect();
    let [lo, hi] = parts.as_slice() else {
        return Err(Error::InvalidArgument(format!("rope {s:?} must be min,max")));
    };
    let parse = |v: &str| {
        v.trim()
            .parse::<f64>()
            .map_err(|_| Error::InvalidArgument(format!("bad rope bound {v:?}")))
    };
    RopeInterval::new(parse(lo)?, parse(hi)?)
}

fn cmd_signtest(args: SigntestArgs) -> Result<()> {
    let a = read_column(&args.a, args.column.as_deref())?;
    let b = read_column(&args.b, args.column.as_deref())?;
    let rope = parse_rope(&args.rope)?;
    let result = bayesian_sign_test(&a, &b, rope, args.samples, args.prior, &mut rng_from_seed(args.seed))?;
    if let Some(dir) = &args.out {
        fs::create_dir_all(dir).map_err(|e| Error::Io { path: dir.clone(), source: e })?;
        result.write_summary(dir.join("summary.json"))?;
        result.write_samples(dir.join("samples.csv"))?;
    }
    println!("{}", serde_json::to_string_pretty(&result.summary())?);
    Ok(())
}

fn cmd_synth(args: SynthArgs) -> Result<()> {
    let d = make_synthetic(args.n, args.u, args.k, args.noise, &mut rng_from_seed(args.seed))?;
    write_csv(&d, &args.out)
}

fn cmd_constraints(args: ConstraintArgs) -> Result<()> {
    let d = args.data.load()?;
    let labels = d.labels().ok_or(Error::MissingLabels)?;
    let cs = generate_constraints(labels, args.fraction, &mut constraint_rng(args.seed))?;
    let meta = ConstraintMeta {
        seed: args.seed,
        fraction: args.fraction,
        n_instances: d.n_rows(),
    };
    write_constraints(&cs, &args.out, Some(&meta))?;
    eprintln!("{} ML, {} CL", cs.must_link().len(), cs.cannot_link().len());
    Ok(())
}

fn cmd_cluster(args: ClusterArgs) -> Result<()> {
    let method: Method = args.method.parse()?;
    let d = prepare(args.data.load()?, !args.no_standardize)?;
    let k = args.k.unwrap_or(d.n_classes());
    let cs = match &args.constraints {
        Some(p) => read_constraints(p)?.0,
        None => ConstraintSet::empty(),
    };
    let cfg = EmConfig {
        max_iter: args.max_iter,
        tol: args.tol,
        penalty_weight: args.penalty_weight,
        ..EmConfig::new(k).with_seed(args.seed)
    };
    let outcome = method.run(&d, &cs, &cfg)?;
    let json = serde_json::to_string_pretty(&outcome)?;
    match &args.out {
        Some(p) => fs::write(p, json).map_err(|e| Error::Io { path: p.clone(), source: e })?,
        None => println!("{json}"),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Metrics(a) => cmd_metrics(a),
        Command::Signtest(a) => cmd_signtest(a),
        Command::Synth(a) => cmd_synth(a),
        Command::Constraints(a) => cmd_constraints(a),
        Command::Cluster(a) => cmd_cluster(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
