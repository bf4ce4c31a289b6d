//! Command-line front end: cluster a dataset, correct a regression for
//! misclassified cluster labels, bootstrap the whole pipeline, or run the
//! simulation benchmarks.
//!
//! Exit codes: 0 on success, 2 for usage, schema and file errors, 3 when a
//! numerical procedure fails.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use misclust::io::{write_labels_csv, Dataset, Model};
use misclust::mcsimex::{bootstrap_simex, BootstrapOptions, ExtrapolantKind};
use misclust::misclass::estimate_misclass_mc;
use misclust::mixture::{classify_all, fit_gmm, fit_kmeans, ClassifierRule, EmConfig, KmeansConfig};
use misclust::rng::stream;
use misclust::simbench::{bundled_config, render_text_table, run_bench, write_metrics_csv, BenchConfig};
use misclust::{check_power_validity, run_mcsimex, Error, Family, MisclassMatrix, SimexConfig};

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "misclust", version, about = "Misclassification SIMEX for regression on cluster labels")]
pub struct Cli {
    /// Worker threads; defaults to the number of cores.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a clustering model and write hard labels.
    Cluster(ClusterArgs),
    /// Correct a regression on cluster labels by MCSIMEX.
    Correct(CorrectArgs),
    /// Bootstrap clustering, misclassification estimate and correction together.
    Bootstrap(BootstrapArgs),
    /// Run a simulation benchmark from a bundled or custom configuration.
    Bench(BenchArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Gmm,
    Kmeans,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FamilyArg {
    Logistic,
    Cox,
}

impl From<FamilyArg> for Family {
    fn from(f: FamilyArg) -> Self {
        match f {
            FamilyArg::Logistic => Family::Logistic,
            FamilyArg::Cox => Family::Cox,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RuleArg {
    Density,
    Weighted,
}

impl From<RuleArg> for ClassifierRule {
    fn from(r: RuleArg) -> Self {
        match r {
            RuleArg::Density => ClassifierRule::Density,
            RuleArg::Weighted => ClassifierRule::Weighted,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ExtrapolantArg {
    Linear,
    Quadratic,
    Loglinear,
}

impl From<ExtrapolantArg> for ExtrapolantKind {
    fn from(e: ExtrapolantArg) -> Self {
        match e {
            ExtrapolantArg::Linear => ExtrapolantKind::Linear,
            ExtrapolantArg::Quadratic => ExtrapolantKind::Quadratic,
            ExtrapolantArg::Loglinear => ExtrapolantKind::Loglinear,
        }
    }
}

#[derive(Debug, Args)]
pub struct SimexArgs {
    #[arg(long, value_delimiter = ',', default_values_t = [0.5, 1.0, 1.5, 2.0])]
    pub lambda_grid: Vec<f64>,
    /// Simulated label sets per grid point.
    #[arg(long = "B", default_value_t = 100)]
    pub b: usize,
    #[arg(long, value_enum, default_value = "quadratic")]
    pub extrapolant: ExtrapolantArg,
}

impl SimexArgs {
    fn config(&self, seed: u64) -> SimexConfig {
        SimexConfig {
            lambda_grid: self.lambda_grid.clone(),
            b: self.b,
            extrapolant: self.extrapolant.into(),
            seed,
        }
    }
}

#[derive(Debug, Args)]
pub struct ClusterArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub m: usize,
    #[arg(long, value_enum, default_value = "gmm")]
    pub method: MethodArg,
    /// Hard assignment rule stored with a GMM.
    #[arg(long, value_enum, default_value = "density")]
    pub rule: RuleArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub output_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct CorrectArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Model file from `cluster`; labels and the misclassification matrix are derived from it.
    #[arg(long, conflicts_with = "pi", required_unless_present = "pi")]
    pub model: Option<PathBuf>,
    /// Misclassification matrix CSV; labels are read from the `label` column.
    #[arg(long)]
    pub pi: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub family: FamilyArg,
    #[command(flatten)]
    pub simex: SimexArgs,
    /// Monte Carlo draws for the misclassification matrix.
    #[arg(long, default_value_t = 100_000)]
    pub n_mc: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub output_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct BootstrapArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub m: usize,
    #[arg(long, value_enum)]
    pub family: FamilyArg,
    #[command(flatten)]
    pub simex: SimexArgs,
    #[arg(long, default_value_t = 1000)]
    pub n_boot: usize,
    #[arg(long, value_enum, default_value = "density")]
    pub rule: RuleArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub output_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Bundled configuration name (table1_balanced, table2_imbalanced,
    /// table3_cox) or a path to a configuration file.
    #[arg(long)]
    pub scenario: String,
    #[arg(long)]
    pub replications: Option<usize>,
    #[arg(long = "B")]
    pub b: Option<usize>,
    /// Comma-separated sample sizes overriding the configuration.
    #[arg(long, value_delimiter = ',')]
    pub n: Option<Vec<usize>>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub output_dir: PathBuf,
}

/// Failure of a command, carrying its exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError {
            code: if e.is_numerical() { EXIT_NUMERICAL } else { EXIT_USAGE },
            message: e.to_string(),
        }
    }
}

fn usage(message: impl Into<String>) -> CliError {
    CliError {
        code: EXIT_USAGE,
        message: message.into(),
    }
}

fn file_error(path: &Path, e: impl std::fmt::Display) -> CliError {
    usage(format!("{}: {e}", path.display()))
}

fn open(path: &Path) -> Result<File, CliError> {
    File::open(path).map_err(|e| file_error(path, e))
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>, CliError> {
    let path = dir.join(name);
    File::create(&path).map(BufWriter::new).map_err(|e| file_error(&path, e))
}

fn prepare_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| file_error(dir, e))
}

fn write_json(dir: &Path, name: &str, value: &Value) -> Result<(), CliError> {
    let w = create(dir, name)?;
    serde_json::to_writer_pretty(w, value).map_err(|e| usage(e.to_string()))
}

fn read_dataset(path: &Path) -> Result<Dataset, CliError> {
    Dataset::read_csv(open(path)?).map_err(|e| {
        let c = CliError::from(e);
        usage(format!("{}: {}", path.display(), c.message))
    })
}

fn to_json<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).unwrap_or(Value::Null)
}

/// Parses arguments and runs the command; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.code
        }
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let threads = cli.threads.unwrap_or(0);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| usage(e.to_string()))?;
    pool.install(|| match cli.command {
        Command::Cluster(a) => cmd_cluster(&a),
        Command::Correct(a) => cmd_correct(&a),
        Command::Bootstrap(a) => cmd_bootstrap(&a),
        Command::Bench(a) => cmd_bench(&a),
    })
}

pub fn cmd_cluster(a: &ClusterArgs) -> Result<(), CliError> {
    if a.m == 0 {
        return Err(usage("--m must be at least 1"));
    }
    let data = read_dataset(&a.input)?;
    let x = data.require_covariates()?;
    let mut rng = stream(a.seed, &[0]);
    let (model, summary) = match a.method {
        MethodArg::Gmm => {
            let em = EmConfig::default();
            let fit = fit_gmm(x, a.m, &em, &mut rng)?;
            let summary = json!({
                "loglik": fit.loglik,
                "n_iter": fit.n_iter,
                "converged": fit.converged,
                "em": to_json(&em),
            });
            (
                Model::Gmm {
                    params: fit.params,
                    rule: a.rule.into(),
                },
                summary,
            )
        }
        MethodArg::Kmeans => {
            let cfg = KmeansConfig::default();
            let fit = fit_kmeans(x, a.m, &cfg, &mut rng)?;
            let summary = json!({ "within_ss": fit.within_ss, "n_iter": fit.n_iter, "kmeans": to_json(&cfg) });
            (Model::Kmeans(fit), summary)
        }
    };
    let labels = classify_all(model.classifier().as_ref(), x)?;
    prepare_dir(&a.output_dir)?;
    model.write(create(&a.output_dir, "model.txt")?)?;
    write_labels_csv(create(&a.output_dir, "labels.csv")?, &labels)?;
    let mut sizes = vec![0usize; a.m];
    labels.iter().for_each(|&l| sizes[l] += 1);
    write_json(
        &a.output_dir,
        "report.json",
        &json!({
            "command": "cluster",
            "config": {
                "input": a.input,
                "m": a.m,
                "method": format!("{:?}", a.method).to_lowercase(),
                "rule": format!("{:?}", a.rule).to_lowercase(),
                "seed": a.seed,
                "covariates": data.covariate_names,
            },
            "fit": summary,
            "cluster_sizes": sizes,
        }),
    )
}

pub fn cmd_correct(a: &CorrectArgs) -> Result<(), CliError> {
    let data = read_dataset(&a.input)?;
    let family: Family = a.family.into();
    let outcome = data.outcome(family)?;
    let (labels, pi, m) = match (&a.model, &a.pi) {
        (Some(path), _) => {
            let model = Model::read(open(path)?)?;
            let x = data.require_covariates()?;
            if x.ncols() != model.dim() {
                return Err(usage(format!(
                    "model has {} covariates but the dataset has {}",
                    model.dim(),
                    x.ncols()
                )));
            }
            let cls = model.classifier();
            let labels = classify_all(cls.as_ref(), x)?;
            let comps = model.components(x, EmConfig::default().reg_eps)?;
            let pi = estimate_misclass_mc(&comps, cls.as_ref(), a.n_mc, &mut stream(a.seed, &[1]))?;
            (labels, pi, model.m())
        }
        (None, Some(path)) => {
            let pi = MisclassMatrix::read_csv(open(path)?)?;
            let m = pi.m();
            (data.labels(m)?, pi, m)
        }
        (None, None) => return Err(usage("one of --model or --pi is required")),
    };
    let config = a.simex.config(a.seed);
    let validity = check_power_validity(&pi);
    let fit = run_mcsimex(&outcome, &labels, m, &pi, family, &config)?;
    prepare_dir(&a.output_dir)?;
    fit.write_curve_csv(create(&a.output_dir, "curve.csv")?)?;
    pi.write_csv(create(&a.output_dir, "pi.csv")?)?;
    write_json(
        &a.output_dir,
        "report.json",
        &json!({
            "command": "correct",
            "config": {
                "input": a.input,
                "model": a.model,
                "pi": a.pi,
                "family": family.to_string(),
                "m": m,
                "n_mc": a.n_mc,
                "simex": to_json(&config),
                "seed": a.seed,
            },
            "misclassification": pi.to_rows(),
            "eigenvalues": validity.eigenvalues.iter().map(|z| [z.re, z.im]).collect::<Vec<_>>(),
            "naive": {
                "coefficients": fit.naive.coefficients,
                "std_errors": fit.naive.std_errors(),
            },
            "corrected": fit.corrected,
            "std_errors": fit.std_errors(),
            "extrapolants": to_json(&fit.extrapolants),
            "dropped_refits": fit.dropped,
        }),
    )
}

pub fn cmd_bootstrap(a: &BootstrapArgs) -> Result<(), CliError> {
    if a.m == 0 {
        return Err(usage("--m must be at least 1"));
    }
    let data = read_dataset(&a.input)?;
    let family: Family = a.family.into();
    let outcome = data.outcome(family)?;
    let x = data.require_covariates()?;
    let config = a.simex.config(a.seed);
    let options = BootstrapOptions {
        n_boot: a.n_boot,
        em: EmConfig::default(),
        rule: a.rule.into(),
    };
    let res = bootstrap_simex(&outcome, x, a.m, family, &config, &options)?;
    prepare_dir(&a.output_dir)?;
    res.write_replicates_csv(create(&a.output_dir, "bootstrap_replicates.csv")?)?;
    res.mean_misclass.write_csv(create(&a.output_dir, "pi.csv")?)?;
    let naive_se = res.naive.std_errors();
    let naive_ci: Vec<[f64; 2]> = res
        .naive
        .coefficients
        .iter()
        .zip(&naive_se)
        .map(|(b, s)| [b - 1.959_963_984_540_054 * s, b + 1.959_963_984_540_054 * s])
        .collect();
    write_json(
        &a.output_dir,
        "report.json",
        &json!({
            "command": "bootstrap",
            "config": {
                "input": a.input,
                "m": a.m,
                "family": family.to_string(),
                "n_boot": a.n_boot,
                "rule": format!("{:?}", a.rule).to_lowercase(),
                "em": to_json(&options.em),
                "simex": to_json(&config),
                "seed": a.seed,
            },
            "naive": {
                "coefficients": res.naive.coefficients,
                "std_errors": naive_se,
                "ci": naive_ci,
            },
            "point": res.point,
            "median": res.median,
            "ci_lower": res.ci_lower,
            "ci_upper": res.ci_upper,
            "n_failed": res.n_failed,
            "mean_misclassification": res.mean_misclass.to_rows(),
        }),
    )
}

pub fn cmd_bench(a: &BenchArgs) -> Result<(), CliError> {
    let text = match bundled_config(&a.scenario) {
        Some(t) => t.to_string(),
        None => {
            let path = Path::new(&a.scenario);
            if !path.exists() {
                return Err(usage(format!(
                    "'{}' is neither a bundled scenario nor a readable file",
                    a.scenario
                )));
            }
            fs::read_to_string(path).map_err(|e| file_error(path, e))?
        }
    };
    let mut config = BenchConfig::parse(&text)?;
    if let Some(r) = a.replications {
        if r == 0 {
            return Err(usage("--replications must be at least 1"));
        }
        config.replications = r;
    }
    if let Some(b) = a.b {
        config.settings.simex.b = b;
        config.settings.simex.validate()?;
    }
    if let Some(ns) = &a.n {
        config.ns = ns.clone();
    }
    if let Some(seed) = a.seed {
        config.seed = seed;
    }
    for inst in config.instances() {
        inst.scenario.validate()?;
    }
    let results = run_bench(&config)?;
    let tables: Vec<_> = results.iter().map(|(_, t)| t.clone()).collect();
    prepare_dir(&a.output_dir)?;
    write_metrics_csv(create(&a.output_dir, "metrics.csv")?, &tables)?;
    let text_table = render_text_table(&config.name, &results);
    fs::write(a.output_dir.join("metrics.txt"), &text_table).map_err(|e| file_error(&a.output_dir, e))?;
    print!("{text_table}");
    write_json(
        &a.output_dir,
        "report.json",
        &json!({
            "command": "bench",
            "config": to_json(&config),
            "scenarios": results.iter().map(|(i, t)| json!({
                "id": i.id,
                "n": i.n,
                "variant": i.variant,
                "seed": i.seed,
                "n_failed": t.n_failed,
                "n_requested": t.n_requested,
            })).collect::<Vec<_>>(),
        }),
    )
}
