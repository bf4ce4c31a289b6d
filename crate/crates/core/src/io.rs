//! Dataset CSV loading and the text format for fitted clustering models.
//!
//! Dataset CSVs need a header row. Columns named `y`, `time`, `event` and
//! `label` are reserved; every other column is a numeric covariate.
//!
//! Model files hold one `key = value` pair per line:
//!
//! ```text
//! kind = gmm
//! m = 2
//! p = 2
//! rule = density
//! weight.1 = 0.5
//! mean.1 = -1, 0
//! cov.1 = 1, 0, 0, 1
//! ...
//! ```
//!
//! k-means models use `kind = kmeans`, `centroid.k` and `within_ss`.
//! Component indices in the file are 1-based.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::mixture::{
    cluster_gaussians, Classifier, ClassifierRule, Gaussian, GmmClassifier, GmmParams, KmeansFit,
};
use crate::regress::{Family, Outcome};

pub const RESERVED_COLUMNS: [&str; 4] = ["y", "time", "event", "label"];

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub covariate_names: Vec<String>,
    pub covariates: DMatrix<f64>,
    pub y: Option<Vec<f64>>,
    pub time: Option<Vec<f64>>,
    pub event: Option<Vec<f64>>,
    /// 1-based labels as stored in the file.
    pub label: Option<Vec<f64>>,
}

fn parse_field(field: &str, line: usize, column: &str) -> Result<f64> {
    let v: f64 = field.trim().parse().map_err(|_| Error::Parse {
        line,
        column: column.to_string(),
        message: format!("'{field}' is not a number"),
    })?;
    if !v.is_finite() {
        return Err(Error::Parse {
            line,
            column: column.to_string(),
            message: format!("non-finite value '{field}'"),
        });
    }
    Ok(v)
}

fn schema(message: String) -> Error {
    Error::Parse {
        line: 1,
        column: String::new(),
        message,
    }
}

impl Dataset {
    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
        let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        if header.is_empty() || header.iter().all(|h| h.is_empty()) {
            return Err(schema("missing header row".into()));
        }
        for (i, h) in header.iter().enumerate() {
            if header[..i].contains(h) {
                return Err(schema(format!("duplicate column '{h}'")));
            }
        }
        let mut columns: Vec<Vec<f64>> = vec![Vec::new(); header.len()];
        for (i, rec) in rdr.records().enumerate() {
            let line = i + 2;
            let rec = rec?;
            if rec.len() != header.len() {
                return Err(Error::Parse {
                    line,
                    column: String::new(),
                    message: format!("expected {} fields, found {}", header.len(), rec.len()),
                });
            }
            for (j, field) in rec.iter().enumerate() {
                columns[j].push(parse_field(field, line, &header[j])?);
            }
        }
        let n = columns[0].len();
        if n == 0 {
            return Err(schema("no data rows".into()));
        }
        let mut take = |name: &str| header.iter().position(|h| h == name).map(|j| std::mem::take(&mut columns[j]));
        let (y, time, event, label) = (take("y"), take("time"), take("event"), take("label"));
        let covariate_names: Vec<String> = header
            .iter()
            .filter(|h| !RESERVED_COLUMNS.contains(&h.as_str()))
            .cloned()
            .collect();
        let cov_cols: Vec<&Vec<f64>> = header
            .iter()
            .zip(&columns)
            .filter(|(h, _)| !RESERVED_COLUMNS.contains(&h.as_str()))
            .map(|(_, c)| c)
            .collect();
        let covariates = DMatrix::from_fn(n, cov_cols.len(), |i, j| cov_cols[j][i]);
        Ok(Dataset {
            covariate_names,
            covariates,
            y,
            time,
            event,
            label,
        })
    }

    pub fn n(&self) -> usize {
        self.covariates.nrows()
    }

    /// Covariates, erroring when the file had none.
    pub fn require_covariates(&self) -> Result<&DMatrix<f64>> {
        if self.covariates.ncols() == 0 {
            return Err(schema("no covariate columns".into()));
        }
        Ok(&self.covariates)
    }

    fn binary_column(values: &[f64], name: &str) -> Result<Vec<u8>> {
        values
            .iter()
            .enumerate()
            .map(|(i, &v)| match v {
                0.0 => Ok(0),
                1.0 => Ok(1),
                _ => Err(Error::Parse {
                    line: i + 2,
                    column: name.to_string(),
                    message: format!("expected 0 or 1, got {v}"),
                }),
            })
            .collect()
    }

    pub fn outcome(&self, family: Family) -> Result<Outcome> {
        let missing = |c: &str| schema(format!("missing column '{c}' required for family {family}"));
        match family {
            Family::Logistic => {
                let y = self.y.as_ref().ok_or_else(|| missing("y"))?;
                Outcome::binary(Self::binary_column(y, "y")?)
            }
            Family::Cox => {
                let time = self.time.as_ref().ok_or_else(|| missing("time"))?;
                let event = self.event.as_ref().ok_or_else(|| missing("event"))?;
                let event = Self::binary_column(event, "event")?.into_iter().map(|e| e == 1).collect();
                Outcome::survival(time.clone(), event)
            }
        }
    }

    /// Zero-based labels from the 1-based `label` column.
    pub fn labels(&self, m: usize) -> Result<Vec<usize>> {
        let col = self.label.as_ref().ok_or_else(|| schema("missing column 'label'".into()))?;
        col.iter()
            .enumerate()
            .map(|(i, &v)| {
                if v.fract() == 0.0 && v >= 1.0 && v <= m as f64 {
                    Ok(v as usize - 1)
                } else {
                    Err(Error::Parse {
                        line: i + 2,
                        column: "label".into(),
                        message: format!("label {v} is not in 1..={m}"),
                    })
                }
            })
            .collect()
    }
}

/// Writes `row,label` with 1-based rows and labels.
pub fn write_labels_csv<W: Write>(w: W, labels: &[usize]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["row", "label"])?;
    for (i, &l) in labels.iter().enumerate() {
        wtr.write_record([(i + 1).to_string(), (l + 1).to_string()])?;
    }
    wtr.flush()?;
    Ok(())
}

/// A fitted clustering model as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Gmm { params: GmmParams, rule: ClassifierRule },
    Kmeans(KmeansFit),
}

impl Model {
    pub fn m(&self) -> usize {
        match self {
            Model::Gmm { params, .. } => params.m(),
            Model::Kmeans(fit) => fit.m(),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Model::Gmm { params, .. } => params.dim(),
            Model::Kmeans(fit) => fit.dim(),
        }
    }

    pub fn classifier(&self) -> Box<dyn Classifier + '_> {
        match self {
            Model::Gmm { params, rule } => Box::new(GmmClassifier::new(params, *rule)),
            Model::Kmeans(fit) => Box::new(fit.clone()),
        }
    }

    /// Class-conditional Gaussians for Monte Carlo misclassification
    /// estimates. k-means needs the data to fit per-cluster covariances.
    pub fn components(&self, data: &DMatrix<f64>, reg_eps: f64) -> Result<Vec<Gaussian>> {
        match self {
            Model::Gmm { params, .. } => Ok(params.components()),
            Model::Kmeans(fit) => cluster_gaussians(fit, data, reg_eps),
        }
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        let join = |v: &[f64]| v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(", ");
        match self {
            Model::Gmm { params, rule } => {
                let rule = match rule {
                    ClassifierRule::Density => "density",
                    ClassifierRule::Weighted => "weighted",
                };
                writeln!(w, "kind = gmm\nm = {}\np = {}\nrule = {rule}", params.m(), params.dim())?;
                for k in 0..params.m() {
                    let cov = params.covariances()[k].transpose();
                    writeln!(w, "weight.{} = {:?}", k + 1, params.weights()[k])?;
                    writeln!(w, "mean.{} = {}", k + 1, join(&params.means()[k]))?;
                    writeln!(w, "cov.{} = {}", k + 1, join(cov.as_slice()))?;
                }
            }
            Model::Kmeans(fit) => {
                writeln!(w, "kind = kmeans\nm = {}\np = {}", fit.m(), fit.dim())?;
                for (k, c) in fit.centroids.iter().enumerate() {
                    writeln!(w, "centroid.{} = {}", k + 1, join(c))?;
                }
                writeln!(w, "within_ss = {:?}", fit.within_ss)?;
            }
        }
        Ok(())
    }

    pub fn read<R: Read>(mut r: R) -> Result<Self> {
        let mut text = String::new();
        r.read_to_string(&mut text)?;
        let mut map: BTreeMap<String, (usize, String)> = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (k, v) = content.split_once('=').ok_or_else(|| Error::Parse {
                line: i + 1,
                column: String::new(),
                message: format!("expected 'key = value', got '{content}'"),
            })?;
            map.insert(k.trim().to_string(), (i + 1, v.trim().to_string()));
        }
        let get = |key: &str| {
            map.get(key).ok_or_else(|| Error::Parse {
                line: 0,
                column: key.to_string(),
                message: format!("missing key '{key}'"),
            })
        };
        let numbers = |key: &str, len: usize| -> Result<Vec<f64>> {
            let (line, v) = get(key)?;
            let xs = v
                .split(',')
                .map(|s| parse_field(s, *line, key))
                .collect::<Result<Vec<f64>>>()?;
            if xs.len() != len {
                return Err(Error::Parse {
                    line: *line,
                    column: key.to_string(),
                    message: format!("expected {len} values, found {}", xs.len()),
                });
            }
            Ok(xs)
        };
        let count = |key: &str| -> Result<usize> {
            let (line, v) = get(key)?;
            v.parse().map_err(|_| Error::Parse {
                line: *line,
                column: key.to_string(),
                message: format!("'{v}' is not a positive integer"),
            })
        };
        let m = count("m")?;
        let p = count("p")?;
        if m == 0 || p == 0 {
            return Err(Error::InvalidInput("model needs m >= 1 and p >= 1".into()));
        }
        match get("kind")?.1.as_str() {
            "gmm" => {
                let rule = map.get("rule").map(|(_, v)| v.parse()).transpose()?.unwrap_or_default();
                let mut weights = Vec::with_capacity(m);
                let mut means = Vec::with_capacity(m);
                let mut covs = Vec::with_capacity(m);
                for k in 1..=m {
                    weights.push(numbers(&format!("weight.{k}"), 1)?[0]);
                    means.push(numbers(&format!("mean.{k}"), p)?);
                    covs.push(DMatrix::from_row_slice(p, p, &numbers(&format!("cov.{k}"), p * p)?));
                }
                let params = GmmParams::new(weights, means, covs)?;
                Ok(Model::Gmm { params, rule })
            }
            "kmeans" => {
                let centroids = (1..=m)
                    .map(|k| numbers(&format!("centroid.{k}"), p))
                    .collect::<Result<Vec<_>>>()?;
                let within_ss = if map.contains_key("within_ss") {
                    numbers("within_ss", 1)?[0]
                } else {
                    f64::NAN
                };
                Ok(Model::Kmeans(KmeansFit {
                    centroids,
                    within_ss,
                    n_iter: 0,
                    ss_trace: Vec::new(),
                }))
            }
            other => Err(Error::Parse {
                line: get("kind")?.0,
                column: "kind".into(),
                message: format!("unknown model kind '{other}'"),
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_reserved_and_covariate_columns() {
        let csv = "x1,y,x2,label\n1.5,1,2,1\n-0.5,0,3,2\n";
        let d = Dataset::read_csv(csv.as_bytes()).unwrap();
        assert_eq!(d.covariate_names, ["x1", "x2"]);
        assert_eq!(d.covariates[(1, 1)], 3.0);
        assert_eq!(d.labels(2).unwrap(), [0, 1]);
        assert_eq!(d.outcome(Family::Logistic).unwrap(), Outcome::Binary(vec![1, 0]));
    }

    #[test]
    fn reports_row_and_column() {
        let err = Dataset::read_csv("a,b\n1,2\n3,oops\n".as_bytes()).unwrap_err();
        match err {
            Error::Parse { line, column, .. } => {
                assert_eq!(line, 3);
                assert_eq!(column, "b");
            }
            e => panic!("{e:?}"),
        }
    }

    #[test]
    fn missing_event_column_is_named() {
        let d = Dataset::read_csv("x,time\n1,2\n".as_bytes()).unwrap();
        let err = d.outcome(Family::Cox).unwrap_err();
        assert!(err.to_string().contains("'event'"), "{err}");
    }

    #[test]
    fn model_round_trip() {
        let params = GmmParams::new(
            vec![0.3, 0.7],
            vec![vec![-1.0, 0.25], vec![1.0 / 3.0, 2.0]],
            vec![
                DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 0.5]),
                DMatrix::identity(2, 2),
            ],
        )
        .unwrap();
        let model = Model::Gmm {
            params,
            rule: ClassifierRule::Weighted,
        };
        let mut buf = Vec::new();
        model.write(&mut buf).unwrap();
        assert_eq!(Model::read(buf.as_slice()).unwrap(), model);

        let km = Model::Kmeans(KmeansFit {
            centroids: vec![vec![0.1], vec![5.0]],
            within_ss: 3.5,
            n_iter: 0,
            ss_trace: Vec::new(),
        });
        let mut buf = Vec::new();
        km.write(&mut buf).unwrap();
        assert_eq!(Model::read(buf.as_slice()).unwrap(), km);
    }
}
