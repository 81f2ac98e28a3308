//! Evaluation report: one JSON document plus a `fpr,tpr,threshold` CSV per
//! method. Maps are ordered, so identical inputs give identical bytes.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Confusion, RocResult};
use crate::error::{FrodoError, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub auc: f64,
    pub n_in: usize,
    pub n_ood: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    pub threshold: f64,
    pub sensitivity_target: f64,
    #[serde(flatten)]
    pub confusion: Confusion,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Report {
    pub methods: BTreeMap<String, MethodSummary>,
    pub operating_points: BTreeMap<String, OperatingPoint>,
    pub config: BTreeMap<String, serde_json::Value>,
}

fn check_method_name(name: &str) -> Result<()> {
    let ok = !name.is_empty()
        && name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-' || c == '.')
        && name != "."
        && name != "..";
    if ok {
        Ok(())
    } else {
        Err(FrodoError::InvalidArgument(format!("method name {name:?} is not a valid file stem")))
    }
}

pub fn write_report(report: &Report, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut json = serde_json::to_string_pretty(report).map_err(|source| FrodoError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    json.push('\n');
    fs::write(path, json).map_err(|e| FrodoError::io(path, e))
}

pub fn read_report(path: impl AsRef<Path>) -> Result<Report> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| FrodoError::io(path, e))?;
    serde_json::from_str(&text).map_err(|source| FrodoError::Json {
        path: path.to_path_buf(),
        source,
    })
}

fn write_roc_csv<T: Scalar>(roc: &RocResult<T>, path: &Path) -> Result<()> {
    let csv_err = |source| FrodoError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(["fpr", "tpr", "threshold"]).map_err(csv_err)?;
    for p in &roc.points {
        w.write_record([p.fpr.to_string(), p.tpr.to_string(), p.threshold.to_string()])
            .map_err(csv_err)?;
    }
    w.flush().map_err(|e| FrodoError::io(path, e))
}

/// Writes `report_path` and `<roc_dir>/<method>.csv` for every method.
pub fn emit_report<T: Scalar>(
    per_method: &BTreeMap<String, RocResult<T>>,
    operating_points: &BTreeMap<String, OperatingPoint>,
    config: BTreeMap<String, serde_json::Value>,
    report_path: impl AsRef<Path>,
    roc_dir: impl AsRef<Path>,
) -> Result<Report> {
    if per_method.is_empty() {
        return Err(FrodoError::InvalidArgument("report needs at least one method".into()));
    }
    let roc_dir = roc_dir.as_ref();
    fs::create_dir_all(roc_dir).map_err(|e| FrodoError::io(roc_dir, e))?;

    let mut methods = BTreeMap::new();
    for (name, roc) in per_method {
        check_method_name(name)?;
        write_roc_csv(roc, &roc_dir.join(format!("{name}.csv")))?;
        methods.insert(
            name.clone(),
            MethodSummary {
                auc: roc.auc.to_f64_lossy(),
                n_in: roc.n_in,
                n_ood: roc.n_ood,
            },
        );
    }
    let report = Report {
        methods,
        operating_points: operating_points.clone(),
        config,
    };
    write_report(&report, report_path)?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluation::{roc_auc, Label, LabeledScore};

    fn roc(scores: &[(f64, Label)]) -> RocResult<f64> {
        let s: Vec<_> = scores.iter().map(|&(v, l)| LabeledScore::new("x", v, l)).collect();
        roc_auc(&s).unwrap()
    }

    #[test]
    fn one_method_three_points() {
        let dir = tempfile::tempdir().unwrap();
        // two distinct scores → origin plus two points
        let r = roc(&[(1.0, Label::In), (2.0, Label::Ood)]);
        assert_eq!(r.points.len(), 3);
        let methods = [("L3".to_string(), r)].into();
        emit_report(&methods, &BTreeMap::new(), BTreeMap::new(), dir.path().join("r.json"), dir.path()).unwrap();
        let text = fs::read_to_string(dir.path().join("L3.csv")).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[0], "fpr,tpr,threshold");
        assert_eq!(lines[1], "0,0,inf");
        assert_eq!(lines[3], "1,1,1");
    }

    #[test]
    fn two_methods_and_deterministic_bytes() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let methods: BTreeMap<String, RocResult<f64>> = [
            ("fused".to_string(), roc(&[(1.0, Label::In), (2.0, Label::Ood), (0.5, Label::Ood)])),
            ("baseline".to_string(), roc(&[(0.2, Label::In), (0.1, Label::Ood)])),
        ]
        .into();
        let ops = [(
            "fused".to_string(),
            OperatingPoint {
                threshold: 0.5,
                sensitivity_target: 0.99,
                confusion: Confusion { tp: 2, fp: 1, tn: 0, fn_: 0 },
            },
        )]
        .into();
        let config: BTreeMap<String, serde_json::Value> = [("sensitivity".to_string(), 0.99.into())].into();
        for d in [&a, &b] {
            emit_report(&methods, &ops, config.clone(), d.path().join("report.json"), d.path().join("roc")).unwrap();
        }
        for f in ["report.json", "roc/fused.csv", "roc/baseline.csv"] {
            assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
        }
        let report = read_report(a.path().join("report.json")).unwrap();
        assert_eq!(report.methods.len(), 2);
        assert_eq!(report.methods["baseline"].auc, 0.0);
        let raw: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(a.path().join("report.json")).unwrap()).unwrap();
        let op = &raw["operating_points"]["fused"];
        for key in ["threshold", "sensitivity_target", "tp", "fp", "tn", "fn"] {
            assert!(op.get(key).is_some(), "{key}");
        }
    }

    #[test]
    fn rejects_path_like_method_names() {
        let dir = tempfile::tempdir().unwrap();
        let methods = [("../x".to_string(), roc(&[(1.0, Label::In), (2.0, Label::Ood)]))].into();
        assert!(emit_report(&methods, &BTreeMap::new(), BTreeMap::new(), dir.path().join("r.json"), dir.path()).is_err());
        let empty: BTreeMap<String, RocResult<f64>> = BTreeMap::new();
        assert!(emit_report(&empty, &BTreeMap::new(), BTreeMap::new(), dir.path().join("r.json"), dir.path()).is_err());
    }
}
