//! Scores CSV (`sample_id,label,L1,…,L5,fused,baseline`) and its JSON
//! sidecar describing how the fused column was produced.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{CalibrationStats, FusionRule};
use crate::error::{FrodoError, Result};
use crate::layer::LayerId;
use crate::tensor_io::SampleLabel;

pub const SCORES_HEADER: [&str; 9] = ["sample_id", "label", "L1", "L2", "L3", "L4", "L5", "fused", "baseline"];

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRow {
    pub sample_id: String,
    pub label: SampleLabel,
    pub per_layer: BTreeMap<LayerId, f64>,
    pub fused: Option<f64>,
    pub baseline: Option<f64>,
}

impl ScoreRow {
    /// Value of a method column: a layer name, `fused` or `baseline`.
    pub fn method(&self, name: &str) -> Option<f64> {
        match name {
            "fused" => self.fused,
            "baseline" => self.baseline,
            other => other.parse::<LayerId>().ok().and_then(|l| self.per_layer.get(&l).copied()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoresSidecar {
    pub fusion_rule: FusionRule,
    pub layers: Vec<LayerId>,
    /// Shrinkage weight of each layer's statistics.
    pub lambda: BTreeMap<LayerId, f64>,
    /// Calibration used by `sum_z`, recorded by value.
    pub calibration: Option<CalibrationStats<f64>>,
}

/// `scores.csv` → `scores.meta.json`
pub fn sidecar_path(csv_path: impl AsRef<Path>) -> PathBuf {
    csv_path.as_ref().with_extension("meta.json")
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_scores_csv(path: impl AsRef<Path>, rows: &[ScoreRow]) -> Result<()> {
    let path = path.as_ref();
    let csv_err = |source| FrodoError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(SCORES_HEADER).map_err(csv_err)?;
    for r in rows {
        let mut rec = vec![r.sample_id.clone(), r.label.to_string()];
        rec.extend(LayerId::ALL.iter().map(|l| cell(r.per_layer.get(l).copied())));
        rec.push(cell(r.fused));
        rec.push(cell(r.baseline));
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush().map_err(|e| FrodoError::io(path, e))
}

pub fn read_scores_csv(path: impl AsRef<Path>) -> Result<Vec<ScoreRow>> {
    let path = path.as_ref();
    let csv_err = |source| FrodoError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut reader = csv::Reader::from_path(path).map_err(csv_err)?;
    let headers = reader.headers().map_err(csv_err)?.clone();
    let cols: Vec<usize> = SCORES_HEADER
        .iter()
        .map(|name| {
            headers
                .iter()
                .position(|h| h == *name)
                .ok_or_else(|| FrodoError::MissingColumn(name.to_string()))
        })
        .collect::<Result<_>>()?;

    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let record_no = i as u64 + 1;
        let number = |col: usize| -> Result<Option<f64>> {
            let s = &rec[cols[col]];
            if s.is_empty() {
                return Ok(None);
            }
            let v: f64 = s.parse().map_err(|_| {
                FrodoError::InvalidArgument(format!(
                    "{} record {record_no}: {:?} in column {} is not a number",
                    path.display(),
                    s,
                    SCORES_HEADER[col]
                ))
            })?;
            Ok(Some(v))
        };
        let label = rec[cols[1]].parse::<SampleLabel>().map_err(|_| FrodoError::BadLabel {
            record: record_no,
            token: rec[cols[1]].to_string(),
        })?;
        let mut per_layer = BTreeMap::new();
        for (k, &layer) in LayerId::ALL.iter().enumerate() {
            if let Some(v) = number(2 + k)? {
                per_layer.insert(layer, v);
            }
        }
        rows.push(ScoreRow {
            sample_id: rec[cols[0]].to_string(),
            label,
            per_layer,
            fused: number(7)?,
            baseline: number(8)?,
        });
    }
    Ok(rows)
}

pub fn write_sidecar(path: impl AsRef<Path>, sidecar: &ScoresSidecar) -> Result<()> {
    let path = path.as_ref();
    let mut json = serde_json::to_string_pretty(sidecar).map_err(|source| FrodoError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    json.push('\n');
    fs::write(path, json).map_err(|e| FrodoError::io(path, e))
}

pub fn read_sidecar(path: impl AsRef<Path>) -> Result<ScoresSidecar> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| FrodoError::io(path, e))?;
    serde_json::from_str(&text).map_err(|source| FrodoError::Json {
        path: path.to_path_buf(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("scores.csv");
        let rows = vec![
            ScoreRow {
                sample_id: "a".into(),
                label: SampleLabel::In,
                per_layer: [(LayerId::L3, 0.1 + 0.2), (LayerId::L5, 1e-300)].into(),
                fused: Some(0.1 + 0.2),
                baseline: None,
            },
            ScoreRow {
                sample_id: "b,quoted".into(),
                label: SampleLabel::Unlabeled,
                per_layer: BTreeMap::new(),
                fused: None,
                baseline: Some(2.0 / 3.0),
            },
        ];
        write_scores_csv(&p, &rows).unwrap();
        let text = fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("sample_id,label,L1,L2,L3,L4,L5,fused,baseline\n"));
        assert_eq!(read_scores_csv(&p).unwrap(), rows);
        assert_eq!(rows[0].method("L3"), Some(0.1 + 0.2));
        assert_eq!(rows[1].method("baseline"), Some(2.0 / 3.0));
        assert_eq!(rows[1].method("L3"), None);
    }

    #[test]
    fn sidecar_next_to_csv() {
        let dir = tempfile::tempdir().unwrap();
        let csv = dir.path().join("scores.csv");
        assert_eq!(sidecar_path(&csv), dir.path().join("scores.meta.json"));
        let sc = ScoresSidecar {
            fusion_rule: FusionRule::SumZ,
            layers: vec![LayerId::L2, LayerId::L3],
            lambda: [(LayerId::L2, 0.01), (LayerId::L3, 0.01)].into(),
            calibration: None,
        };
        write_sidecar(sidecar_path(&csv), &sc).unwrap();
        assert_eq!(read_sidecar(sidecar_path(&csv)).unwrap(), sc);
    }
}
