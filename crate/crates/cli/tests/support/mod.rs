#![allow(dead_code)]

//! Synthetic FTEN datasets written through `frodo_core::tensor_io`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use frodo_core::tensor_io::{write_ften, write_manifest, Ften, ManifestRecord, SampleLabel};
use frodo_core::{write_tensor, FeatureTensor, LayerId, Manifest};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

#[derive(Debug, Clone)]
pub struct DatasetSpec {
    pub n_in: usize,
    pub n_ood: usize,
    pub n_unlabeled: usize,
    pub layers: Vec<LayerId>,
    pub spatial: (usize, usize),
    /// Offset added to OOD samples along a fixed direction per layer.
    pub ood_shift: f64,
    pub softmax: bool,
    pub seed: u64,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        DatasetSpec {
            n_in: 20,
            n_ood: 10,
            n_unlabeled: 0,
            layers: vec![LayerId::L1],
            spatial: (2, 2),
            ood_shift: 8.0,
            softmax: true,
            seed: 1,
        }
    }
}

struct LayerModel {
    base: Vec<f64>,
    loadings: Vec<Vec<f64>>,
    direction: Vec<f64>,
}

impl LayerModel {
    fn new(rng: &mut ChaCha8Rng, channels: usize) -> Self {
        let rank = 4;
        let base = (0..channels).map(|_| rng.random_range(-1.0..1.0)).collect();
        let loadings = (0..rank)
            .map(|_| (0..channels).map(|_| rng.sample::<f64, _>(StandardNormal) * 0.5).collect())
            .collect();
        let raw: Vec<f64> = (0..channels).map(|_| rng.sample(StandardNormal)).collect();
        let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
        LayerModel {
            base,
            loadings,
            direction: raw.iter().map(|v| v / norm).collect(),
        }
    }

    fn draw(&self, rng: &mut ChaCha8Rng, shift: f64) -> Vec<f64> {
        let mut v: Vec<f64> = self
            .base
            .iter()
            .zip(&self.direction)
            .map(|(b, d)| b + shift * d + 0.3 * rng.sample::<f64, _>(StandardNormal))
            .collect();
        for row in &self.loadings {
            let g: f64 = rng.sample(StandardNormal);
            for (x, l) in v.iter_mut().zip(row) {
                *x += g * l;
            }
        }
        v
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Writes tensors under `dir` and returns the manifest path.
pub fn write_dataset(dir: &Path, spec: &DatasetSpec) -> PathBuf {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let models: BTreeMap<LayerId, LayerModel> = spec
        .layers
        .iter()
        .map(|&l| (l, LayerModel::new(&mut rng, l.expected_channels())))
        .collect();
    fs::create_dir_all(dir.join("tensors")).unwrap();

    let labels = std::iter::repeat_n(SampleLabel::In, spec.n_in)
        .chain(std::iter::repeat_n(SampleLabel::Ood, spec.n_ood))
        .chain(std::iter::repeat_n(SampleLabel::Unlabeled, spec.n_unlabeled));
    let mut records = Vec::new();
    for (i, label) in labels.enumerate() {
        let id = format!("s{i:04}");
        let is_ood = label == SampleLabel::Ood || (label == SampleLabel::Unlabeled && i % 2 == 0);
        let shift = if is_ood { spec.ood_shift } else { 0.0 };
        let mut tensor_paths = BTreeMap::new();
        for (&layer, model) in &models {
            let v = model.draw(&mut rng, shift);
            let (h, w) = spec.spatial;
            let c = layer.expected_channels();
            let mut data = Vec::with_capacity(h * w * c);
            for _ in 0..h * w {
                data.extend(v.iter().map(|&x| (x + 0.05 * rng.sample::<f64, _>(StandardNormal)) as f32));
            }
            let rel = PathBuf::from(format!("tensors/{id}_{layer}.ften"));
            write_tensor(&FeatureTensor::new((h, w, c), data).unwrap(), dir.join(&rel)).unwrap();
            tensor_paths.insert(layer, rel);
        }
        let softmax_path = spec.softmax.then(|| {
            let margin = if is_ood { 0.8 } else { 2.0 } + rng.sample::<f64, _>(StandardNormal);
            let p = sigmoid(margin) as f32;
            let rel = PathBuf::from(format!("tensors/{id}_softmax.ften"));
            write_ften(&Ften::vector(vec![p, 1.0 - p]).unwrap(), dir.join(&rel)).unwrap();
            rel
        });
        records.push(ManifestRecord {
            sample_id: id,
            label,
            tensor_paths,
            softmax_path,
        });
    }
    let manifest = Manifest::new(dir, records).unwrap();
    let path = dir.join("manifest.csv");
    write_manifest(&manifest, &path).unwrap();
    path
}

/// Scores CSV with the given ood and in values in the `fused` column.
pub fn write_fused_scores(path: &Path, ood: &[f64], inl: &[f64]) {
    use frodo_core::scoring::{write_scores_csv, ScoreRow};
    let row = |i: usize, label, v: f64| ScoreRow {
        sample_id: format!("r{i}"),
        label,
        per_layer: BTreeMap::new(),
        fused: Some(v),
        baseline: None,
    };
    let rows: Vec<ScoreRow> = ood
        .iter()
        .map(|&v| (SampleLabel::Ood, v))
        .chain(inl.iter().map(|&v| (SampleLabel::In, v)))
        .enumerate()
        .map(|(i, (l, v))| row(i, l, v))
        .collect();
    write_scores_csv(path, &rows).unwrap();
}

pub fn files_equal(a: &Path, b: &Path) -> bool {
    fs::read(a).unwrap() == fs::read(b).unwrap()
}
