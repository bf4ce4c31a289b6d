//! Simulation scenarios for logistic and Cox outcomes on mixture-derived
//! labels, a replication driver, and bias/MSE/coverage summaries.

mod config;
mod table;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Exp};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mcsimex::{run_mcsimex, SimexConfig};
use crate::misclass::{estimate_misclass_mc, MisclassMatrix};
use crate::mixture::{
    align_labels, classify_all, cluster_gaussians, fit_gmm, fit_kmeans, sample_gmm, ClassifierRule, EmConfig,
    GmmClassifier, GmmParams, KmeansConfig,
};
use crate::regress::{fit_cox, fit_logistic, Outcome};
use crate::rng::{derive_seed, stream};

pub use config::{bundled_config, BenchConfig, FamilySpec, ScenarioInstance, BUNDLED_CONFIGS};
pub use table::{render_text_table, write_metrics_csv};

/// 97.5% standard normal quantile for Wald intervals.
pub const Z_975: f64 = 1.959_963_984_540_054;

/// Fraction of failed replications tolerated.
pub const REPLICATION_FAILURE_CAP: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Clusterer {
    Gmm,
    Kmeans,
}

impl std::str::FromStr for Clusterer {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "gmm" => Ok(Clusterer::Gmm),
            "kmeans" => Ok(Clusterer::Kmeans),
            other => Err(Error::InvalidInput(format!("unknown clustering method '{other}'"))),
        }
    }
}

impl std::fmt::Display for Clusterer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Clusterer::Gmm => "gmm",
            Clusterer::Kmeans => "kmeans",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    TrueLabels,
    Naive,
    Simex,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::TrueLabels => "true",
            Method::Naive => "naive",
            Method::Simex => "simex",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "true" | "true-labels" => Ok(Method::TrueLabels),
            "naive" => Ok(Method::Naive),
            "simex" => Ok(Method::Simex),
            other => Err(Error::InvalidInput(format!("unknown method '{other}'"))),
        }
    }
}

/// Two-class Gaussian covariates with a logistic outcome on the true class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticScenario {
    pub n: usize,
    /// Probability of class 0.
    pub pi1: f64,
    pub means: Vec<Vec<f64>>,
    pub covariance: DMatrix<f64>,
    /// Intercept (class-0 log-odds) and class-1 log-odds ratio.
    pub beta: Vec<f64>,
    pub clusterer: Clusterer,
    pub rule: ClassifierRule,
}

impl LogisticScenario {
    /// Balanced setting: means (-1, 0) and (1, 0), identity covariance, beta (-1, 2).
    pub fn balanced(n: usize, clusterer: Clusterer) -> Self {
        LogisticScenario {
            n,
            pi1: 0.5,
            means: vec![vec![-1.0, 0.0], vec![1.0, 0.0]],
            covariance: DMatrix::identity(2, 2),
            beta: vec![-1.0, 2.0],
            clusterer,
            rule: ClassifierRule::Density,
        }
    }

    pub fn imbalanced(n: usize, clusterer: Clusterer) -> Self {
        LogisticScenario {
            pi1: 0.2,
            ..Self::balanced(n, clusterer)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.pi1 > 0.0 && self.pi1 < 1.0) {
            return Err(Error::InvalidInput(format!("pi1 = {} must lie in (0, 1)", self.pi1)));
        }
        if self.n < 10 {
            return Err(Error::InvalidInput(format!("n = {} is below 10", self.n)));
        }
        if self.means.len() != 2 || self.beta.len() != 2 {
            return Err(Error::InvalidInput("logistic scenarios have exactly two classes".into()));
        }
        self.params().map(|_| ())
    }

    pub fn params(&self) -> Result<GmmParams> {
        GmmParams::new(
            vec![self.pi1, 1.0 - self.pi1],
            self.means.clone(),
            vec![self.covariance.clone(), self.covariance.clone()],
        )
    }
}

/// Two classes with exponential survival (rate = class + 1), exponential
/// censoring, and labels observed through a symmetric flip.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoxScenario {
    pub n: usize,
    /// Probability of class 1.
    pub class_prob: f64,
    pub misclass_rate: f64,
    pub censor_rate: f64,
}

impl CoxScenario {
    pub fn new(n: usize, misclass_rate: f64) -> Self {
        CoxScenario {
            n,
            class_prob: 0.5,
            misclass_rate,
            censor_rate: 0.5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.misclass_rate > 0.0 && self.misclass_rate < 0.5) {
            return Err(Error::InvalidInput(format!(
                "misclassification rate {} must lie in (0, 0.5)",
                self.misclass_rate
            )));
        }
        if !(self.class_prob > 0.0 && self.class_prob < 1.0) || !(self.censor_rate > 0.0) || self.n < 10 {
            return Err(Error::InvalidInput("invalid Cox scenario".into()));
        }
        Ok(())
    }

    pub fn hazard(class: usize) -> f64 {
        class as f64 + 1.0
    }

    /// True log hazard ratio of class 1 against class 0.
    pub fn true_beta() -> f64 {
        (Self::hazard(1) / Self::hazard(0)).ln()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Scenario {
    Logistic(LogisticScenario),
    Cox(CoxScenario),
}

impl Scenario {
    pub fn truth(&self) -> Vec<f64> {
        match self {
            Scenario::Logistic(s) => s.beta.clone(),
            Scenario::Cox(_) => vec![CoxScenario::true_beta()],
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Scenario::Logistic(s) => s.validate(),
            Scenario::Cox(s) => s.validate(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogisticDataset {
    pub labels: Vec<usize>,
    pub covariates: DMatrix<f64>,
    pub y: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoxDataset {
    pub true_labels: Vec<usize>,
    pub observed_labels: Vec<usize>,
    pub outcome: Outcome,
}

fn inv_logit(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn gen_logistic_dataset<R: Rng + ?Sized>(s: &LogisticScenario, rng: &mut R) -> Result<LogisticDataset> {
    let sample = sample_gmm(&s.params()?, s.n, rng)?;
    let y = sample
        .labels
        .iter()
        .map(|&h| {
            let eta = s.beta[0] + if h == 1 { s.beta[1] } else { 0.0 };
            u8::from(rng.random::<f64>() < inv_logit(eta))
        })
        .collect();
    Ok(LogisticDataset {
        labels: sample.labels,
        covariates: sample.data,
        y,
    })
}

pub fn gen_cox_dataset<R: Rng + ?Sized>(s: &CoxScenario, rng: &mut R) -> Result<CoxDataset> {
    let censor = Exp::new(s.censor_rate).map_err(|e| Error::InvalidInput(e.to_string()))?;
    let mut true_labels = Vec::with_capacity(s.n);
    let mut observed_labels = Vec::with_capacity(s.n);
    let mut time = Vec::with_capacity(s.n);
    let mut event = Vec::with_capacity(s.n);
    for _ in 0..s.n {
        let h = usize::from(rng.random::<f64>() < s.class_prob);
        let flipped = rng.random::<f64>() < s.misclass_rate;
        let t = Exp::new(CoxScenario::hazard(h)).expect("positive rate").sample(rng);
        let c = censor.sample(rng);
        true_labels.push(h);
        observed_labels.push(if flipped { 1 - h } else { h });
        time.push(t.min(c));
        event.push(t <= c);
    }
    Ok(CoxDataset {
        true_labels,
        observed_labels,
        outcome: Outcome::survival(time, event)?,
    })
}

/// Scale on which bias and MSE are reported. Coverage does not depend on it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportScale {
    /// The regression coefficient itself.
    #[default]
    Coefficient,
    /// `exp` of the coefficient: an odds ratio or a hazard ratio.
    Exp,
}

impl std::str::FromStr for ReportScale {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "coefficient" => Ok(ReportScale::Coefficient),
            "exp" => Ok(ReportScale::Exp),
            other => Err(Error::InvalidInput(format!("unknown report scale '{other}'"))),
        }
    }
}

/// Knobs shared by every replication of a benchmark.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchSettings {
    /// Grid, B and extrapolant; the seed is derived per replication.
    pub simex: SimexConfig,
    pub n_mc: usize,
    pub em: EmConfig,
    pub kmeans: KmeansConfig,
    pub report_scale: ReportScale,
}

impl Default for BenchSettings {
    fn default() -> Self {
        BenchSettings {
            simex: SimexConfig::default(),
            n_mc: 100_000,
            em: EmConfig::default(),
            kmeans: KmeansConfig::default(),
            report_scale: ReportScale::Coefficient,
        }
    }
}

/// Coefficient estimate and standard error for one method on one dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub coefficients: Vec<f64>,
    pub std_errors: Vec<f64>,
}

/// Estimates of every requested method on one simulated dataset.
pub type ReplicationOutcome = Vec<(Method, Estimate)>;

fn estimate_of(fit: &crate::regress::RegressionFit) -> Estimate {
    Estimate {
        coefficients: fit.coefficients.clone(),
        std_errors: fit.std_errors(),
    }
}

fn simex_estimate(fit: &crate::mcsimex::SimexFit) -> Estimate {
    Estimate {
        coefficients: fit.corrected.clone(),
        std_errors: fit
            .std_errors()
            .unwrap_or_else(|| vec![f64::NAN; fit.corrected.len()]),
    }
}

/// Simulates one dataset from stream `(master_seed, rep)` and applies `methods`.
pub fn run_replication(
    scenario: &Scenario,
    methods: &[Method],
    settings: &BenchSettings,
    master_seed: u64,
    rep: u64,
) -> Result<ReplicationOutcome> {
    let mut data_rng = stream(master_seed, &[rep, 0]);
    let mut fit_rng = stream(master_seed, &[rep, 1]);
    let simex_cfg = SimexConfig {
        seed: derive_seed(master_seed, &[rep, 2]),
        ..settings.simex.clone()
    };
    let mut out = Vec::with_capacity(methods.len());
    match scenario {
        Scenario::Logistic(s) => {
            let data = gen_logistic_dataset(s, &mut data_rng)?;
            let outcome = Outcome::Binary(data.y.clone());
            let needs_clusters = methods.iter().any(|m| *m != Method::TrueLabels);
            let clustered = if needs_clusters {
                Some(cluster_and_estimate(s, &data.covariates, settings, &mut fit_rng)?)
            } else {
                None
            };
            for &method in methods {
                let est = match method {
                    Method::TrueLabels => estimate_of(&fit_logistic(&data.y, &data.labels, 2)?),
                    Method::Naive => {
                        let (labels, _) = clustered.as_ref().expect("clustered");
                        estimate_of(&fit_logistic(&data.y, labels, 2)?)
                    }
                    Method::Simex => {
                        let (labels, pi) = clustered.as_ref().expect("clustered");
                        simex_estimate(&run_mcsimex(&outcome, labels, 2, pi, crate::regress::Family::Logistic, &simex_cfg)?)
                    }
                };
                out.push((method, est));
            }
        }
        Scenario::Cox(s) => {
            let data = gen_cox_dataset(s, &mut data_rng)?;
            let Outcome::Survival { time, event } = &data.outcome else {
                unreachable!()
            };
            for &method in methods {
                let est = match method {
                    Method::TrueLabels => estimate_of(&fit_cox(time, event, &data.true_labels, 2)?),
                    Method::Naive => estimate_of(&fit_cox(time, event, &data.observed_labels, 2)?),
                    Method::Simex => {
                        let pi = MisclassMatrix::symmetric_flip(s.misclass_rate)?;
                        simex_estimate(&run_mcsimex(
                            &data.outcome,
                            &data.observed_labels,
                            2,
                            &pi,
                            crate::regress::Family::Cox,
                            &simex_cfg,
                        )?)
                    }
                };
                out.push((method, est));
            }
        }
    }
    Ok(out)
}

/// Fits the scenario's clusterer, aligns its components to the true means,
/// labels the data and estimates the misclassification matrix by Monte Carlo.
fn cluster_and_estimate<R: Rng + ?Sized>(
    s: &LogisticScenario,
    covariates: &DMatrix<f64>,
    settings: &BenchSettings,
    rng: &mut R,
) -> Result<(Vec<usize>, MisclassMatrix)> {
    match s.clusterer {
        Clusterer::Gmm => {
            let fit = fit_gmm(covariates, 2, &settings.em, rng)?;
            let perm = align_labels(&s.means, fit.params.means())?;
            let params = fit.params.permuted(&perm)?;
            let cls = GmmClassifier::new(&params, s.rule);
            let labels = classify_all(&cls, covariates)?;
            let pi = estimate_misclass_mc(&params.components(), &cls, settings.n_mc, rng)?;
            Ok((labels, pi))
        }
        Clusterer::Kmeans => {
            let fit = fit_kmeans(covariates, 2, &settings.kmeans, rng)?;
            let perm = align_labels(&s.means, &fit.centroids)?;
            let fit = fit.permuted(&perm)?;
            let labels = classify_all(&fit, covariates)?;
            let comps = cluster_gaussians(&fit, covariates, settings.em.reg_eps)?;
            let pi = estimate_misclass_mc(&comps, &fit, settings.n_mc, rng)?;
            Ok((labels, pi))
        }
    }
}

/// Bias, MSE and Wald coverage of one method for one coefficient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub scenario_id: String,
    pub method: Method,
    /// Zero-based coefficient index.
    pub coefficient: usize,
    pub bias: f64,
    pub mse: f64,
    pub coverage: f64,
    /// Monte Carlo standard error of the bias.
    pub mc_se: f64,
    /// Monte Carlo standard error of the coverage.
    pub coverage_mc_se: f64,
    pub n_reps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsTable {
    pub scenario_id: String,
    pub rows: Vec<MetricRow>,
    pub n_requested: usize,
    pub n_failed: usize,
}

impl MetricsTable {
    pub fn get(&self, method: Method, coefficient: usize) -> Option<&MetricRow> {
        self.rows
            .iter()
            .find(|r| r.method == method && r.coefficient == coefficient)
    }
}

/// Aggregates per-replication estimates against the truth. Bias, MSE and
/// `mc_se` are computed on `scale`; coverage uses the Wald interval of the
/// coefficient.
pub fn summarize(
    scenario_id: &str,
    truth: &[f64],
    methods: &[Method],
    outcomes: &[ReplicationOutcome],
    scale: ReportScale,
) -> Vec<MetricRow> {
    let on_scale = |x: f64| match scale {
        ReportScale::Coefficient => x,
        ReportScale::Exp => x.exp(),
    };
    let r = outcomes.len() as f64;
    let mut rows = Vec::new();
    for &method in methods {
        for (j, &t) in truth.iter().enumerate() {
            let ests: Vec<(f64, f64)> = outcomes
                .iter()
                .map(|o| {
                    let e = &o.iter().find(|(m, _)| *m == method).expect("method estimate").1;
                    (e.coefficients[j], e.std_errors[j])
                })
                .collect();
            let target = on_scale(t);
            let values: Vec<f64> = ests.iter().map(|e| on_scale(e.0)).collect();
            let mean = values.iter().sum::<f64>() / r;
            let mse = values.iter().map(|v| (v - target).powi(2)).sum::<f64>() / r;
            let covered = ests
                .iter()
                .filter(|(b, se)| (b - t).abs() <= Z_975 * se)
                .count() as f64;
            let coverage = covered / r;
            let sd = if values.len() > 1 {
                (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (r - 1.0)).sqrt()
            } else {
                f64::NAN
            };
            rows.push(MetricRow {
                scenario_id: scenario_id.to_string(),
                method,
                coefficient: j,
                bias: mean - target,
                mse,
                coverage,
                mc_se: sd / r.sqrt(),
                coverage_mc_se: (coverage * (1.0 - coverage) / r).sqrt(),
                n_reps: ests.len(),
            });
        }
    }
    rows
}

/// Runs `r` replications in parallel; replication `i` uses stream
/// `(master_seed, i)` so the table does not depend on the thread count.
pub fn run_replications(
    scenario_id: &str,
    scenario: &Scenario,
    methods: &[Method],
    r: usize,
    master_seed: u64,
    settings: &BenchSettings,
) -> Result<MetricsTable> {
    if r == 0 {
        return Err(Error::InvalidInput("need at least one replication".into()));
    }
    if methods.is_empty() {
        return Err(Error::InvalidInput("no methods requested".into()));
    }
    scenario.validate()?;
    let results: Vec<Result<ReplicationOutcome>> = (0..r as u64)
        .into_par_iter()
        .map(|rep| run_replication(scenario, methods, settings, master_seed, rep))
        .collect();
    let n_failed = results.iter().filter(|x| x.is_err()).count();
    if n_failed == r || n_failed as f64 > REPLICATION_FAILURE_CAP * r as f64 {
        let first = results.iter().find_map(|x| x.as_ref().err()).cloned();
        return Err(Error::TooManyFailures {
            stage: format!(
                "replications of {scenario_id}{}",
                first.map(|e| format!(" (first error: {e})")).unwrap_or_default()
            ),
            failed: n_failed,
            total: r,
            cap: REPLICATION_FAILURE_CAP * 100.0,
        });
    }
    let outcomes: Vec<ReplicationOutcome> = results.into_iter().filter_map(|x| x.ok()).collect();
    Ok(MetricsTable {
        scenario_id: scenario_id.to_string(),
        rows: summarize(scenario_id, &scenario.truth(), methods, &outcomes, settings.report_scale),
        n_requested: r,
        n_failed,
    })
}

/// Runs every scenario of a configuration in table order.
pub fn run_bench(config: &BenchConfig) -> Result<Vec<(ScenarioInstance, MetricsTable)>> {
    config
        .instances()
        .into_iter()
        .map(|inst| {
            let table = run_replications(
                &inst.id,
                &inst.scenario,
                &config.methods,
                config.replications,
                inst.seed,
                &config.settings,
            )?;
            Ok((inst, table))
        })
        .collect()
}
