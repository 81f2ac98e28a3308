use std::collections::BTreeMap;
use std::path::Path;

use frodo_core::evaluation::{emit_report, read_report, write_report, OperatingPoint, Report};
use frodo_core::gaussian_stats::BundleMeta;
use frodo_core::scoring::{
    read_scores_csv, read_sidecar, sidecar_path, write_scores_csv, write_sidecar, ScoreRow, ScoresSidecar,
};
use frodo_core::tensor_io::{read_ften, ManifestRecord, SampleLabel};
use frodo_core::{
    baseline_msp, confusion_at, load_bundle, pool_spatial, read_manifest, read_tensor, roc_auc,
    save_bundle, score_sample, threshold_at_sensitivity, CalibrationStats, FrodoError, FusionRule, Label,
    LabeledScore, LayerId, Manifest, MomentAccumulator, PooledFeature, Result, RocResult,
    StatsBundle,
};
use rayon::prelude::*;

use crate::{CalibStatsArgs, CalibrateArgs, EvalArgs, FitArgs, ScoreArgs, THREADS_ENV};

/// Rows loaded concurrently before being folded into the accumulators in
/// manifest order.
const FIT_CHUNK: usize = 64;

fn thread_pool() -> Result<rayon::ThreadPool> {
    let threads = match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .map_err(|_| FrodoError::InvalidArgument(format!("{THREADS_ENV}={v:?} is not a count")))?,
        Err(_) => 0,
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| FrodoError::InvalidArgument(format!("cannot start worker pool: {e}")))
}

fn load_features(
    manifest: &Manifest,
    record: &ManifestRecord,
    layers: &[LayerId],
) -> Result<BTreeMap<LayerId, PooledFeature<f64>>> {
    layers
        .iter()
        .map(|&layer| {
            let path = manifest.tensor_path(record, layer).ok_or_else(|| {
                FrodoError::InvalidArgument(format!("sample {} has no {layer} tensor", record.sample_id))
            })?;
            let tensor = read_tensor(&path)?;
            let pooled = pool_spatial(&tensor, layer).map_err(|e| e.context(path.display().to_string()))?;
            Ok((layer, pooled))
        })
        .collect::<Result<_>>()
        .map_err(|e| e.context(format!("sample {}", record.sample_id)))
}

fn load_probabilities(path: &Path) -> Result<Vec<f64>> {
    let t = read_ften(path)?;
    if t.dims().len() != 1 {
        return Err(FrodoError::Shape(format!(
            "{}: softmax file must be rank 1, got dims {:?}",
            path.display(),
            t.dims()
        )));
    }
    Ok(t.data().iter().map(|&v| v as f64).collect())
}

fn check_lambda(lambda: f64) -> Result<()> {
    if (0.0..=1.0).contains(&lambda) {
        Ok(())
    } else {
        Err(FrodoError::InvalidArgument(format!("--lambda {lambda} outside [0, 1]")))
    }
}

fn check_sensitivity(target: f64) -> Result<()> {
    if target > 0.0 && target <= 1.0 {
        Ok(())
    } else {
        Err(FrodoError::InvalidArgument(format!("--sensitivity {target} outside (0, 1]")))
    }
}

fn bundle_layers(bundle: &StatsBundle<f64>, requested: Option<&str>) -> Result<Vec<LayerId>> {
    match requested {
        None => Ok(bundle.keys().copied().collect()),
        Some(list) => {
            let layers = LayerId::parse_list(list)?;
            if let Some(&missing) = layers.iter().find(|l| !bundle.contains_key(l)) {
                return Err(FrodoError::MissingStats(missing));
            }
            Ok(layers)
        }
    }
}

pub fn cmd_fit(args: &FitArgs) -> Result<BundleMeta> {
    check_lambda(args.lambda)?;
    let layers = LayerId::parse_list(&args.layers)?;
    let manifest = read_manifest(&args.manifest)?;
    let fit_rows: Vec<&ManifestRecord> =
        manifest.records().iter().filter(|r| r.label == SampleLabel::In).collect();

    let mut accumulators: BTreeMap<LayerId, MomentAccumulator<f64>> = layers
        .iter()
        .map(|&l| (l, MomentAccumulator::new(l, l.expected_channels())))
        .collect();

    let pool = thread_pool()?;
    for chunk in fit_rows.chunks(FIT_CHUNK) {
        let loaded: Vec<Result<_>> =
            pool.install(|| chunk.par_iter().map(|r| load_features(&manifest, r, &layers)).collect());
        for (record, features) in chunk.iter().zip(loaded) {
            for (layer, feature) in features? {
                accumulators
                    .get_mut(&layer)
                    .expect("accumulator per requested layer")
                    .push(&feature)
                    .map_err(|e| e.context(format!("sample {}", record.sample_id)))?;
            }
        }
    }

    let bundle = accumulators
        .into_iter()
        .map(|(layer, acc)| {
            let stats = acc
                .finish(args.lambda)
                .map_err(|e| e.context(format!("fitting {layer}")))?;
            Ok((layer, stats))
        })
        .collect::<Result<StatsBundle<f64>>>()?;
    let meta = save_bundle(&bundle, &args.out)?;

    for lm in &meta.layers {
        println!(
            "{}: n={} d={} lambda={} jitter_used={:e}",
            lm.layer, lm.n, lm.d, lm.lambda, lm.jitter_used
        );
    }
    Ok(meta)
}

fn score_record(
    manifest: &Manifest,
    record: &ManifestRecord,
    bundle: &StatsBundle<f64>,
    layers: &[LayerId],
    rule: FusionRule,
    calib: Option<&CalibrationStats<f64>>,
) -> Result<ScoreRow> {
    let features = load_features(manifest, record, layers)?;
    let score = score_sample(&record.sample_id, bundle, &features, rule, calib)?;
    let baseline = manifest
        .softmax_path(record)
        .map(|p| load_probabilities(&p).and_then(|probs| baseline_msp(&probs)))
        .transpose()
        .map_err(|e| e.context(format!("sample {} baseline", record.sample_id)))?;
    Ok(ScoreRow {
        sample_id: record.sample_id.clone(),
        label: record.label,
        per_layer: score.per_layer,
        fused: score.fused,
        baseline,
    })
}

pub fn cmd_score(args: &ScoreArgs) -> Result<Vec<ScoreRow>> {
    let rule: FusionRule = args.fusion.parse()?;
    let manifest = read_manifest(&args.manifest)?;
    let bundle = load_bundle::<f64>(&args.stats)?;
    let layers = bundle_layers(&bundle, args.layers.as_deref())?;
    if let FusionRule::Single(layer) = rule {
        if !layers.contains(&layer) {
            return Err(FrodoError::MissingStats(layer));
        }
    }
    let calib = args.calib.as_ref().map(CalibrationStats::<f64>::load_json).transpose()?;
    if rule == FusionRule::SumZ {
        let covered = |l: &LayerId| calib.as_ref().is_some_and(|c| c.get(*l).is_some());
        if let Some(&missing) = layers.iter().find(|l| !covered(l)) {
            return Err(FrodoError::MissingCalibration(missing));
        }
    }

    let pool = thread_pool()?;
    let results: Vec<Result<ScoreRow>> = pool.install(|| {
        manifest
            .records()
            .par_iter()
            .map(|r| score_record(&manifest, r, &bundle, &layers, rule, calib.as_ref()))
            .collect()
    });

    let mut rows = Vec::with_capacity(results.len());
    let mut failures = Vec::new();
    for (record, result) in manifest.records().iter().zip(results) {
        match result {
            Ok(row) => rows.push(row),
            Err(e) => failures.push((record.sample_id.clone(), e)),
        }
    }
    if !failures.is_empty() {
        for (id, e) in &failures {
            eprintln!("{id}: {e}");
        }
        let ids: Vec<String> = failures.iter().map(|(id, _)| id.clone()).collect();
        let (_, first) = failures.swap_remove(0);
        return Err(first.context(format!("{} sample(s) failed: {}", ids.len(), ids.join(", "))));
    }

    write_scores_csv(&args.out, &rows)?;
    let sidecar = ScoresSidecar {
        fusion_rule: rule,
        layers: layers.clone(),
        lambda: layers.iter().map(|l| (*l, bundle[l].lambda())).collect(),
        calibration: if rule == FusionRule::SumZ { calib } else { None },
    };
    write_sidecar(sidecar_path(&args.out), &sidecar)?;
    println!("scored {} samples ({} fusion) -> {}", rows.len(), rule, args.out.display());
    Ok(rows)
}

pub fn cmd_calib_stats(args: &CalibStatsArgs) -> Result<CalibrationStats<f64>> {
    let manifest = read_manifest(&args.manifest)?;
    let bundle = load_bundle::<f64>(&args.stats)?;
    let layers = bundle_layers(&bundle, args.layers.as_deref())?;
    let rows: Vec<&ManifestRecord> =
        manifest.records().iter().filter(|r| r.label == SampleLabel::In).collect();

    let pool = thread_pool()?;
    let per_row: Vec<Result<BTreeMap<LayerId, f64>>> = pool.install(|| {
        rows.par_iter()
            .map(|r| {
                let features = load_features(&manifest, r, &layers)?;
                features
                    .iter()
                    .map(|(l, f)| Ok((*l, bundle[l].mahalanobis_sq(f)?)))
                    .collect()
            })
            .collect()
    });
    let mut distances: BTreeMap<LayerId, Vec<f64>> = layers.iter().map(|&l| (l, Vec::new())).collect();
    for row in per_row {
        for (l, d) in row? {
            distances.get_mut(&l).expect("requested layer").push(d);
        }
    }
    let calib = CalibrationStats::from_distances(&distances)?;
    calib.save_json(&args.out)?;
    for (l, s) in &calib.per_layer {
        println!("{l}: median={} mad={}", s.location, s.scale);
    }
    Ok(calib)
}

/// Methods present in a scores file: layer columns, then `fused` and
/// `baseline`, each only if some labelled row carries a value.
fn methods(rows: &[ScoreRow]) -> Vec<String> {
    let mut names: Vec<String> = LayerId::ALL.iter().map(|l| l.name().to_string()).collect();
    names.push("fused".into());
    names.push("baseline".into());
    names
        .into_iter()
        .filter(|m| rows.iter().any(|r| r.label != SampleLabel::Unlabeled && r.method(m).is_some()))
        .collect()
}

fn labeled_scores(rows: &[ScoreRow], method: &str) -> Vec<LabeledScore<f64>> {
    rows.iter()
        .filter_map(|r| {
            let label = match r.label {
                SampleLabel::In => Label::In,
                SampleLabel::Ood => Label::Ood,
                SampleLabel::Unlabeled => return None,
            };
            r.method(method).map(|s| LabeledScore::new(r.sample_id.clone(), s, label))
        })
        .collect()
}

fn operating_point(scores: &[LabeledScore<f64>], target: f64) -> Result<OperatingPoint> {
    let ood: Vec<f64> = scores.iter().filter(|s| s.label == Label::Ood).map(|s| s.score).collect();
    let threshold = threshold_at_sensitivity(&ood, target)?;
    Ok(OperatingPoint {
        threshold,
        sensitivity_target: target,
        confusion: confusion_at(scores, threshold)?,
    })
}

pub fn cmd_eval(args: &EvalArgs) -> Result<Report> {
    check_sensitivity(args.sensitivity)?;
    let rows = read_scores_csv(&args.scores)?;
    let names = methods(&rows);
    if names.is_empty() {
        return Err(FrodoError::DegenerateLabels(format!(
            "{} has no labelled scores",
            args.scores.display()
        )));
    }

    let mut rocs: BTreeMap<String, RocResult<f64>> = BTreeMap::new();
    let mut points = BTreeMap::new();
    for name in names {
        let scores = labeled_scores(&rows, &name);
        let roc = roc_auc(&scores).map_err(|e| e.context(format!("method {name}")))?;
        points.insert(name.clone(), operating_point(&scores, args.sensitivity)?);
        rocs.insert(name, roc);
    }

    let mut config = BTreeMap::new();
    config.insert("sensitivity_target".to_string(), serde_json::json!(args.sensitivity));
    let sidecar = sidecar_path(&args.scores);
    if sidecar.exists() {
        let sc = read_sidecar(&sidecar)?;
        let value = serde_json::to_value(&sc).map_err(|source| FrodoError::Json { path: sidecar, source })?;
        config.insert("scores".to_string(), value);
    }

    let report = emit_report(&rocs, &points, config, &args.out, &args.roc_dir)?;
    for (name, m) in &report.methods {
        println!("{name}: auc={:.6} n_in={} n_ood={}", m.auc, m.n_in, m.n_ood);
    }
    Ok(report)
}

pub fn cmd_calibrate(args: &CalibrateArgs) -> Result<BTreeMap<String, OperatingPoint>> {
    check_sensitivity(args.sensitivity)?;
    let rows = read_scores_csv(&args.scores)?;
    let mut points = BTreeMap::new();
    for name in methods(&rows) {
        let scores = labeled_scores(&rows, &name);
        let op = operating_point(&scores, args.sensitivity).map_err(|e| e.context(format!("method {name}")))?;
        println!(
            "{name}: threshold={} sensitivity_target={} tp={} fp={} tn={} fn={}",
            op.threshold, op.sensitivity_target, op.confusion.tp, op.confusion.fp, op.confusion.tn, op.confusion.fn_
        );
        points.insert(name, op);
    }
    if points.is_empty() {
        return Err(FrodoError::DegenerateLabels("no ood rows to calibrate on".into()));
    }
    if let Some(path) = &args.report {
        let mut report = if path.exists() { read_report(path)? } else { Report::default() };
        report.operating_points.extend(points.clone());
        write_report(&report, path)?;
    }
    Ok(points)
}
