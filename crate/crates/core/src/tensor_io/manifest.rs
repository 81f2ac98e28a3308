//! Dataset manifests: one CSV row per sample with its label and the
//! per-layer activation files.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{FrodoError, Result};
use crate::layer::LayerId;
use crate::tensor_io::ften::read_tensor;

pub const MANIFEST_HEADER: [&str; 8] = ["sample_id", "label", "L1", "L2", "L3", "L4", "L5", "softmax"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SampleLabel {
    In,
    Ood,
    Unlabeled,
}

impl SampleLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            SampleLabel::In => "in",
            SampleLabel::Ood => "ood",
            SampleLabel::Unlabeled => "unlabeled",
        }
    }
}

impl fmt::Display for SampleLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SampleLabel {
    type Err = FrodoError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "in" => Ok(SampleLabel::In),
            "ood" => Ok(SampleLabel::Ood),
            "unlabeled" => Ok(SampleLabel::Unlabeled),
            other => Err(FrodoError::BadLabel {
                record: 0,
                token: other.to_string(),
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestRecord {
    pub sample_id: String,
    pub label: SampleLabel,
    /// Paths as written in the manifest, usually relative to its directory.
    pub tensor_paths: BTreeMap<LayerId, PathBuf>,
    pub softmax_path: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    base_dir: PathBuf,
    records: Vec<ManifestRecord>,
}

impl Manifest {
    /// Builds a manifest whose relative paths resolve against `base_dir`.
    pub fn new(base_dir: impl Into<PathBuf>, records: Vec<ManifestRecord>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(records.len());
        for r in &records {
            if r.sample_id.is_empty() {
                return Err(FrodoError::InvalidArgument("empty sample_id".into()));
            }
            if !seen.insert(r.sample_id.as_str()) {
                return Err(FrodoError::DuplicateSample(r.sample_id.clone()));
            }
        }
        Ok(Manifest {
            base_dir: base_dir.into(),
            records,
        })
    }

    pub fn base_dir(&self) -> &Path {
        &self.base_dir
    }

    pub fn records(&self) -> &[ManifestRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    pub fn tensor_path(&self, record: &ManifestRecord, layer: LayerId) -> Option<PathBuf> {
        record.tensor_paths.get(&layer).map(|p| self.resolve(p))
    }

    pub fn softmax_path(&self, record: &ManifestRecord) -> Option<PathBuf> {
        record.softmax_path.as_deref().map(|p| self.resolve(p))
    }

    /// Loads every referenced layer file and checks its channel count
    /// against the layer registry.
    pub fn validate_channels(&self) -> Result<()> {
        for record in &self.records {
            for (&layer, rel) in &record.tensor_paths {
                let path = self.resolve(rel);
                let tensor = read_tensor(&path)
                    .map_err(|e| e.context(format!("sample {}", record.sample_id)))?;
                if tensor.channels() != layer.expected_channels() {
                    return Err(FrodoError::Shape(format!(
                        "sample {} layer {layer}: {} has {} channels, expected {}",
                        record.sample_id,
                        path.display(),
                        tensor.channels(),
                        layer.expected_channels()
                    )));
                }
            }
        }
        Ok(())
    }
}

fn optional_path(cell: &str) -> Option<PathBuf> {
    (!cell.is_empty()).then(|| PathBuf::from(cell))
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<Manifest> {
    let path = path.as_ref();
    let csv_err = |source| FrodoError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(csv_err)?;

    let headers = reader.headers().map_err(csv_err)?.clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| FrodoError::MissingColumn(name.to_string()))
    };
    let id_col = column("sample_id")?;
    let label_col = column("label")?;
    let layer_cols = LayerId::ALL
        .iter()
        .map(|&l| column(l.name()).map(|c| (l, c)))
        .collect::<Result<Vec<_>>>()?;
    let softmax_col = column("softmax")?;

    let mut records = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row = row.map_err(csv_err)?;
        let record_no = i as u64 + 1;
        let label = row[label_col].parse::<SampleLabel>().map_err(|_| FrodoError::BadLabel {
            record: record_no,
            token: row[label_col].to_string(),
        })?;
        let tensor_paths = layer_cols
            .iter()
            .filter_map(|&(layer, c)| optional_path(&row[c]).map(|p| (layer, p)))
            .collect();
        records.push(ManifestRecord {
            sample_id: row[id_col].to_string(),
            label,
            tensor_paths,
            softmax_path: optional_path(&row[softmax_col]),
        });
    }

    let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Manifest::new(base_dir, records)
}

/// Writes the manifest with paths exactly as stored in the records.
pub fn write_manifest(manifest: &Manifest, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let csv_err = |source| FrodoError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut writer = csv::Writer::from_path(path).map_err(csv_err)?;
    writer.write_record(MANIFEST_HEADER).map_err(csv_err)?;
    for r in manifest.records() {
        let cell = |p: Option<&PathBuf>| p.map(|p| p.to_string_lossy().into_owned()).unwrap_or_default();
        let mut row = vec![r.sample_id.clone(), r.label.to_string()];
        row.extend(LayerId::ALL.iter().map(|l| cell(r.tensor_paths.get(l))));
        row.push(cell(r.softmax_path.as_ref()));
        writer.write_record(&row).map_err(csv_err)?;
    }
    writer.flush().map_err(|e| FrodoError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor_io::ften::{write_tensor, FeatureTensor};
    use std::fs;

    fn write(dir: &Path, body: &str) -> PathBuf {
        let p = dir.join("manifest.csv");
        fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn reads_two_records_in_order() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "sample_id,label,L1,L2,L3,L4,L5,softmax\na,in,,,a3.ften,,,a_sm.ften\nb,ood,,,b3.ften,,,\n",
        );
        let m = read_manifest(&p).unwrap();
        assert_eq!(m.len(), 2);
        assert_eq!(m.records()[0].sample_id, "a");
        assert_eq!(m.records()[0].label, SampleLabel::In);
        assert_eq!(m.records()[1].label, SampleLabel::Ood);
        assert_eq!(
            m.tensor_path(&m.records()[1], LayerId::L3).unwrap(),
            dir.path().join("b3.ften")
        );
        assert!(m.records()[1].softmax_path.is_none());
        assert!(!m.records()[1].tensor_paths.contains_key(&LayerId::L1));
    }

    #[test]
    fn duplicate_ids_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "sample_id,label,L1,L2,L3,L4,L5,softmax\na,in,,,,,,\na,ood,,,,,,\n",
        );
        assert!(matches!(read_manifest(&p), Err(FrodoError::DuplicateSample(id)) if id == "a"));
    }

    #[test]
    fn unknown_label_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "sample_id,label,L1,L2,L3,L4,L5,softmax\na,in,,,,,,\nb,IN,,,,,,\n",
        );
        match read_manifest(&p) {
            Err(FrodoError::BadLabel { record, token }) => {
                assert_eq!(record, 2);
                assert_eq!(token, "IN");
            }
            other => panic!("expected BadLabel, got {other:?}"),
        }
    }

    #[test]
    fn missing_layer_column_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "sample_id,label,L1,L2,L4,L5,softmax\na,in,,,,,\n");
        assert!(matches!(read_manifest(&p), Err(FrodoError::MissingColumn(c)) if c == "L3"));
    }

    #[test]
    fn channel_cross_check_rejects_wrong_width() {
        let dir = tempfile::tempdir().unwrap();
        let t = FeatureTensor::new((2, 2, 64), vec![0.5; 256]).unwrap();
        write_tensor(&t, dir.path().join("x.ften")).unwrap();
        let ok = write(dir.path(), "sample_id,label,L1,L2,L3,L4,L5,softmax\nx,in,x.ften,,,,,\n");
        read_manifest(&ok).unwrap().validate_channels().unwrap();

        let bad = write(dir.path(), "sample_id,label,L1,L2,L3,L4,L5,softmax\nx,in,,,x.ften,,,\n");
        let m = read_manifest(&bad).unwrap();
        assert!(matches!(m.validate_channels(), Err(FrodoError::Shape(_))));
    }

    #[test]
    fn write_then_read_preserves_records() {
        let dir = tempfile::tempdir().unwrap();
        let records = vec![
            ManifestRecord {
                sample_id: "s1".into(),
                label: SampleLabel::Unlabeled,
                tensor_paths: [(LayerId::L2, PathBuf::from("s1/L2.ften"))].into(),
                softmax_path: Some("s1/softmax.ften".into()),
            },
            ManifestRecord {
                sample_id: "s0".into(),
                label: SampleLabel::In,
                tensor_paths: BTreeMap::new(),
                softmax_path: None,
            },
        ];
        let m = Manifest::new(dir.path(), records).unwrap();
        let p = dir.path().join("m.csv");
        write_manifest(&m, &p).unwrap();
        assert_eq!(read_manifest(&p).unwrap(), m);
    }
}
