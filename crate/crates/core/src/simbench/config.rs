//! Plain-text `key = value` benchmark configuration.
//!
//! Lines starting with `#` are comments. Lists are comma separated.
//!
//! | key              | families | meaning                                          |
//! |------------------|----------|--------------------------------------------------|
//! | `name`           | all      | table name used in reports                       |
//! | `family`         | all      | `logistic` or `cox`                              |
//! | `n`              | all      | list of sample sizes                             |
//! | `replications`   | all      | replications per scenario                        |
//! | `seed`           | all      | master seed                                      |
//! | `methods`        | all      | subset of `true, naive, simex`                   |
//! | `lambda_grid`    | all      | simulation grid                                  |
//! | `B`              | all      | simulated label sets per grid point              |
//! | `extrapolant`    | all      | `linear`, `quadratic` or `loglinear`             |
//! | `report_scale`   | all      | `coefficient` or `exp` for bias and MSE          |
//! | `pi1`            | logistic | probability of the first class                   |
//! | `mean1`, `mean2` | logistic | class means                                      |
//! | `covariance`     | logistic | shared covariance, row-major                     |
//! | `beta`           | logistic | intercept and class effect                       |
//! | `clusterers`     | logistic | subset of `gmm, kmeans`                          |
//! | `classifier_rule`| logistic | `density` or `weighted`                          |
//! | `covariance_structure` | logistic | `full` or `tied` GMM covariances       |
//! | `n_mc`           | logistic | Monte Carlo draws for the misclassification matrix |
//! | `class_prob`     | cox      | probability of the second class                  |
//! | `misclass_rate`  | cox      | list of flip probabilities                       |
//! | `censor_rate`    | cox      | exponential censoring rate                       |

use std::collections::BTreeMap;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{BenchSettings, Clusterer, CoxScenario, LogisticScenario, Method, Scenario};
use crate::error::{Error, Result};
use crate::mcsimex::ExtrapolantKind;
use crate::mixture::ClassifierRule;
use crate::regress::Family;
use crate::rng::derive_seed;

pub const BUNDLED_CONFIGS: [(&str, &str); 3] = [
    ("table1_balanced", include_str!("configs/table1_balanced.conf")),
    ("table2_imbalanced", include_str!("configs/table2_imbalanced.conf")),
    ("table3_cox", include_str!("configs/table3_cox.conf")),
];

pub fn bundled_config(name: &str) -> Option<&'static str> {
    BUNDLED_CONFIGS.iter().find(|(k, _)| *k == name).map(|(_, v)| *v)
}

const COMMON_KEYS: [&str; 10] = [
    "name",
    "family",
    "n",
    "replications",
    "seed",
    "methods",
    "lambda_grid",
    "B",
    "extrapolant",
    "report_scale",
];
const LOGISTIC_KEYS: [&str; 9] = [
    "pi1",
    "mean1",
    "mean2",
    "covariance",
    "beta",
    "clusterers",
    "classifier_rule",
    "covariance_structure",
    "n_mc",
];
const COX_KEYS: [&str; 3] = ["class_prob", "misclass_rate", "censor_rate"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FamilySpec {
    Logistic {
        pi1: f64,
        means: Vec<Vec<f64>>,
        covariance: DMatrix<f64>,
        beta: Vec<f64>,
        clusterers: Vec<Clusterer>,
        rule: ClassifierRule,
    },
    Cox {
        class_prob: f64,
        misclass_rates: Vec<f64>,
        censor_rate: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub name: String,
    pub ns: Vec<usize>,
    pub replications: usize,
    pub seed: u64,
    pub methods: Vec<Method>,
    pub settings: BenchSettings,
    pub family: FamilySpec,
}

/// One cell group of a table: a sample size crossed with a clusterer or a
/// misclassification rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioInstance {
    pub id: String,
    pub n: usize,
    /// Column group label, e.g. `gmm` or `mp=0.2`.
    pub variant: String,
    pub scenario: Scenario,
    /// Shared by all variants at the same `n`, so clusterers see identical data.
    pub seed: u64,
}

struct Entry {
    line: usize,
    value: String,
}

fn parse_err(line: usize, key: &str, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        column: key.to_string(),
        message: message.into(),
    }
}

fn list<T: FromStr>(line: usize, key: &str, value: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    let items: Vec<T> = value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<T>().map_err(|e| parse_err(line, key, format!("bad value '{s}': {e}"))))
        .collect::<Result<_>>()?;
    if items.is_empty() {
        return Err(parse_err(line, key, "empty list"));
    }
    Ok(items)
}

struct Fields(BTreeMap<String, Entry>);

impl Fields {
    fn raw(&self, key: &str) -> Option<&Entry> {
        self.0.get(key)
    }

    fn scalar<T: FromStr>(&self, key: &str, default: Option<T>) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        match self.raw(key) {
            Some(e) => e
                .value
                .parse::<T>()
                .map_err(|err| parse_err(e.line, key, format!("bad value '{}': {err}", e.value))),
            None => default.ok_or_else(|| parse_err(0, key, format!("missing required key '{key}'"))),
        }
    }

    fn list<T: FromStr>(&self, key: &str, default: Option<Vec<T>>) -> Result<Vec<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.raw(key) {
            Some(e) => list(e.line, key, &e.value),
            None => default.ok_or_else(|| parse_err(0, key, format!("missing required key '{key}'"))),
        }
    }
}

impl BenchConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (k, v) = content
                .split_once('=')
                .ok_or_else(|| parse_err(line, "", format!("expected 'key = value', got '{content}'")))?;
            let key = k.trim().to_string();
            if map.contains_key(&key) {
                return Err(parse_err(line, &key, format!("duplicate key '{key}'")));
            }
            map.insert(
                key,
                Entry {
                    line,
                    value: v.trim().to_string(),
                },
            );
        }
        let fields = Fields(map);
        let family: Family = fields.scalar("family", None)?;
        let allowed: Vec<&str> = COMMON_KEYS
            .iter()
            .chain(match family {
                Family::Logistic => LOGISTIC_KEYS.iter(),
                Family::Cox => COX_KEYS.iter(),
            })
            .copied()
            .collect();
        for (key, entry) in &fields.0 {
            if !allowed.contains(&key.as_str()) {
                return Err(parse_err(
                    entry.line,
                    key,
                    format!("unknown key '{key}' for family {family}"),
                ));
            }
        }

        let defaults = BenchSettings::default();
        let mut settings = defaults.clone();
        settings.simex.lambda_grid = fields.list("lambda_grid", Some(defaults.simex.lambda_grid.clone()))?;
        settings.simex.b = fields.scalar("B", Some(defaults.simex.b))?;
        settings.simex.extrapolant = fields.scalar::<ExtrapolantKind>("extrapolant", Some(defaults.simex.extrapolant))?;
        settings.simex.validate()?;
        settings.report_scale = fields.scalar("report_scale", Some(defaults.report_scale))?;

        let family_spec = match family {
            Family::Logistic => {
                settings.n_mc = fields.scalar("n_mc", Some(defaults.n_mc))?;
                settings.em.covariance = fields.scalar("covariance_structure", Some(defaults.em.covariance))?;
                let mean1: Vec<f64> = fields.list("mean1", Some(vec![-1.0, 0.0]))?;
                let mean2: Vec<f64> = fields.list("mean2", Some(vec![1.0, 0.0]))?;
                let p = mean1.len();
                if mean2.len() != p {
                    return Err(parse_err(0, "mean2", format!("expected {p} values")));
                }
                let cov: Vec<f64> = fields.list("covariance", Some(DMatrix::<f64>::identity(p, p).as_slice().to_vec()))?;
                if cov.len() != p * p {
                    return Err(parse_err(0, "covariance", format!("expected {} values", p * p)));
                }
                let beta: Vec<f64> = fields.list("beta", Some(vec![-1.0, 2.0]))?;
                if beta.len() != 2 {
                    return Err(parse_err(0, "beta", "expected 2 values"));
                }
                FamilySpec::Logistic {
                    pi1: fields.scalar("pi1", Some(0.5))?,
                    means: vec![mean1, mean2],
                    covariance: DMatrix::from_row_slice(p, p, &cov),
                    beta,
                    clusterers: fields.list("clusterers", Some(vec![Clusterer::Gmm]))?,
                    rule: fields.scalar("classifier_rule", Some(ClassifierRule::Density))?,
                }
            }
            Family::Cox => FamilySpec::Cox {
                class_prob: fields.scalar("class_prob", Some(0.5))?,
                misclass_rates: fields.list("misclass_rate", None)?,
                censor_rate: fields.scalar("censor_rate", Some(0.5))?,
            },
        };

        let config = BenchConfig {
            name: fields.scalar("name", Some("bench".to_string()))?,
            ns: fields.list("n", None)?,
            replications: fields.scalar("replications", Some(1000))?,
            seed: fields.scalar("seed", Some(0))?,
            methods: fields.list("methods", Some(vec![Method::TrueLabels, Method::Naive, Method::Simex]))?,
            settings,
            family: family_spec,
        };
        for inst in config.instances() {
            inst.scenario.validate()?;
        }
        Ok(config)
    }

    pub fn family(&self) -> Family {
        match self.family {
            FamilySpec::Logistic { .. } => Family::Logistic,
            FamilySpec::Cox { .. } => Family::Cox,
        }
    }

    /// Expands sample sizes and variants in table order.
    pub fn instances(&self) -> Vec<ScenarioInstance> {
        let mut out = Vec::new();
        for &n in &self.ns {
            let seed = derive_seed(self.seed, &[n as u64]);
            match &self.family {
                FamilySpec::Logistic {
                    pi1,
                    means,
                    covariance,
                    beta,
                    clusterers,
                    rule,
                } => {
                    for &c in clusterers {
                        out.push(ScenarioInstance {
                            id: format!("n{n}_{c}"),
                            n,
                            variant: c.to_string(),
                            scenario: Scenario::Logistic(LogisticScenario {
                                n,
                                pi1: *pi1,
                                means: means.clone(),
                                covariance: covariance.clone(),
                                beta: beta.clone(),
                                clusterer: c,
                                rule: *rule,
                            }),
                            seed,
                        });
                    }
                }
                FamilySpec::Cox {
                    class_prob,
                    misclass_rates,
                    censor_rate,
                } => {
                    for &rate in misclass_rates {
                        out.push(ScenarioInstance {
                            id: format!("n{n}_mp{rate}"),
                            n,
                            variant: format!("mp={rate}"),
                            scenario: Scenario::Cox(CoxScenario {
                                n,
                                class_prob: *class_prob,
                                misclass_rate: rate,
                                censor_rate: *censor_rate,
                            }),
                            seed,
                        });
                    }
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_configs_parse() {
        for (name, text) in BUNDLED_CONFIGS {
            let cfg = BenchConfig::parse(text).unwrap();
            assert_eq!(cfg.name, name);
            assert!(!cfg.instances().is_empty());
        }
    }

    #[test]
    fn unknown_key_is_named() {
        let err = BenchConfig::parse("family = cox\nn = 100\nmisclass_rate = 0.1\nbogus = 3\n").unwrap_err();
        assert!(err.to_string().contains("bogus"), "{err}");
        let err = BenchConfig::parse("family = cox\nn = 100\nmisclass_rate = 0.1\npi1 = 0.3\n").unwrap_err();
        assert!(err.to_string().contains("pi1"), "{err}");
    }

    #[test]
    fn missing_and_bad_values() {
        assert!(BenchConfig::parse("n = 100\n").is_err());
        assert!(BenchConfig::parse("family = cox\nn = 100\n").is_err());
        let err = BenchConfig::parse("family = logistic\nn = 100, x\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err:?}");
        assert!(BenchConfig::parse("family = logistic\nn = 100\npi1 = 1.5\n").is_err());
    }

    #[test]
    fn variants_share_data_seed() {
        let cfg = BenchConfig::parse("family = logistic\nn = 200, 500\nclusterers = gmm, kmeans\n").unwrap();
        let inst = cfg.instances();
        assert_eq!(inst.len(), 4);
        assert_eq!(inst[0].seed, inst[1].seed);
        assert_ne!(inst[0].seed, inst[2].seed);
        assert_eq!(inst[3].id, "n500_kmeans");
    }
}
