use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{ModeCount, Runner, Stage};
use crate::dataset::{load_cmapss, load_dataset, prepare, save_dataset, PreparedDataset, Split, WindowSet};
use crate::eval::{fold_stats, silhouette, FoldStats, IntervalMae, MetricReport};
use crate::jointmodel::{
    cross_validate, predict_set, score, select_hidden, write_predictions_csv, Checkpoint, FoldOutcome, HiddenSearch,
    PredictedWindow, TrainConfig, CHECKPOINT_VERSION,
};
use crate::trajectory::{
    build_trajectories, choose_mode_count, dtw_kmeans, dtw_matrix, read_labels_csv, write_centroids_csv,
    write_labels_csv, ModeCountChoice, RestartRecord,
};
use crate::umap::{embed, Embedding, LayoutModel};
use crate::{Error, Result};

fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<()> {
    std::fs::write(path, serde_json::to_vec_pretty(v)?).map_err(|e| Error::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

pub(super) fn execute(r: &Runner, stage: Stage, out: &Path) -> Result<(Vec<PathBuf>, Option<String>)> {
    match stage {
        Stage::Preprocess => preprocess(r, out).map(|f| (f, None)),
        Stage::Embed => embed_stage(r, out).map(|f| (f, None)),
        Stage::Cluster => cluster(r, out).map(|f| (f, None)),
        Stage::Train => train_stage(r, out).map(|f| (f, None)),
        Stage::Evaluate => evaluate(r, out),
        Stage::Reproduce => reproduce(r, out),
    }
}

fn preprocess(r: &Runner, out: &Path) -> Result<Vec<PathBuf>> {
    let c = r.config();
    let files = c.dataset.files()?;
    let train = load_cmapss(&files.train, Split::Train, None)?;
    let test = load_cmapss(&files.test, Split::Test, Some(&files.truth))?;
    let p = &c.preprocess;
    let data = prepare(&c.dataset.id, &train, &test, p.ntw, p.stride, p.pad_short)?;
    log::info!(
        "{}: {} sensors kept, {} train / {} test windows",
        c.dataset.id,
        data.manifest.filter_report.retained.len(),
        data.train.len(),
        data.test.len()
    );
    save_dataset(out, &data)
}

fn dataset(r: &Runner) -> Result<PreparedDataset> {
    load_dataset(&r.stage_dir(Stage::Preprocess))
}

const EMBEDDING_CSV: &str = "embedding.csv";
const LAYOUT_JSON: &str = "layout.json";

fn embed_stage(r: &Runner, out: &Path) -> Result<Vec<PathBuf>> {
    let data = dataset(r)?;
    let e = embed(data.train_units(), &r.config().umap)?;
    let csv = out.join(EMBEDDING_CSV);
    let layout = out.join(LAYOUT_JSON);
    e.write_csv(&csv)?;
    write_json(&layout, &e.model)?;
    Ok(vec![csv, layout])
}

fn embedding(r: &Runner) -> Result<Embedding> {
    let dir = r.stage_dir(Stage::Embed);
    let model: LayoutModel = read_json(&dir.join(LAYOUT_JSON))?;
    Embedding::read_csv(&dir.join(EMBEDDING_CSV), model)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ClusterDiagnostics {
    n_modes: usize,
    choice: Option<ModeCountChoice>,
    inertia: f64,
    silhouette: Option<f64>,
    cluster_sizes: Vec<usize>,
    best_restart: usize,
    restarts: Vec<RestartRecord>,
}

const LABELS_CSV: &str = "labels.csv";

fn cluster(r: &Runner, out: &Path) -> Result<Vec<PathBuf>> {
    let c = &r.config().cluster;
    let trajs = build_trajectories(&embedding(r)?)?;
    let (n_modes, choice) = match c.n_modes {
        ModeCount::Fixed(v) => (v, None),
        ModeCount::Auto => {
            let ch = choose_mode_count(&trajs, c.max_modes, &c.kmeans(1))?;
            log::info!("automatic mode count: {}", ch.chosen);
            (ch.chosen, Some(ch))
        }
    };
    let res = dtw_kmeans(&trajs, &c.kmeans(n_modes))?;
    let sil = silhouette(&dtw_matrix(&trajs), &res.labels);
    let mut sizes = vec![0; n_modes];
    res.labels.iter().for_each(|&l| sizes[l] += 1);
    log::info!("{n_modes} modes, sizes {sizes:?}, silhouette {sil:?}");
    let labels = out.join(LABELS_CSV);
    let centroids = out.join("centroids.csv");
    let diag = out.join("diagnostics.json");
    write_labels_csv(&labels, &res)?;
    write_centroids_csv(&centroids, &res, &trajs)?;
    write_json(
        &diag,
        &ClusterDiagnostics {
            n_modes,
            choice,
            inertia: res.inertia,
            silhouette: sil,
            cluster_sizes: sizes,
            best_restart: res.best_restart,
            restarts: res.restarts.clone(),
        },
    )?;
    Ok(vec![labels, centroids, diag])
}

/// Training windows with mode labels attached, and the mode count.
fn labelled_train(r: &Runner, data: &PreparedDataset) -> Result<(WindowSet, BTreeMap<u32, usize>, usize)> {
    let labels = read_labels_csv(&r.stage_dir(Stage::Cluster).join(LABELS_CSV))?;
    let n_modes = labels.values().max().map_or(1, |m| m + 1);
    let set = data.train.clone().with_modes(&labels)?;
    Ok((set, labels, n_modes))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct FoldSummary {
    fold: usize,
    validation_units: Vec<u32>,
    validation: MetricReport,
    epochs_run: usize,
    final_loss: Option<f64>,
    diverged_at: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CvLog {
    config: TrainConfig,
    n_modes: usize,
    n_params: usize,
    hidden_search: Option<HiddenSearch>,
    folds: Vec<FoldSummary>,
    validation_stats: FoldStats,
}

fn train_stage(r: &Runner, out: &Path) -> Result<Vec<PathBuf>> {
    let data = dataset(r)?;
    let (set, labels, n_modes) = labelled_train(r, &data)?;
    let section = r.config().train;
    let mut params = section.params;
    let search = if section.hidden_search {
        let s = select_hidden(&set, n_modes, &params)?;
        params.hidden = s.chosen;
        Some(s)
    } else {
        None
    };
    let folds = cross_validate(&set, n_modes, &params)?;
    let dataset_hash = r.key(Stage::Preprocess)?;
    let mut files = Vec::new();
    for f in &folds {
        let p = out.join(format!("fold_{}.json", f.fold));
        Checkpoint {
            version: CHECKPOINT_VERSION,
            model: f.trained.model.clone(),
            config: params,
            scaler: data.manifest.scaler.clone(),
            mode_map: labels.clone(),
            dataset_hash: dataset_hash.clone(),
            fold: Some(f.fold),
            log: f.trained.log.clone(),
        }
        .save(&p)?;
        files.push(p);
    }
    let curves = out.join("loss_curves.csv");
    write_loss_curves(&curves, &folds)?;
    files.push(curves);
    let reports: Vec<MetricReport> = folds.iter().map(|f| f.validation.clone()).collect();
    let cv = CvLog {
        config: params,
        n_modes,
        n_params: folds[0].trained.log.n_params,
        hidden_search: search,
        folds: folds.iter().map(fold_summary).collect(),
        validation_stats: fold_stats(&reports)?,
    };
    let cv_path = out.join("cv.json");
    write_json(&cv_path, &cv)?;
    files.push(cv_path);
    if let Some(f) = folds.iter().find(|f| f.trained.log.diverged_at.is_some()) {
        return Err(Error::Numerical(format!(
            "training diverged in fold {} at epoch {}; last good parameters saved in {}",
            f.fold,
            f.trained.log.diverged_at.unwrap_or(0),
            out.display()
        )));
    }
    Ok(files)
}

fn fold_summary(f: &FoldOutcome) -> FoldSummary {
    FoldSummary {
        fold: f.fold,
        validation_units: f.validation_units.clone(),
        validation: f.validation.clone(),
        epochs_run: f.trained.log.epochs.len(),
        final_loss: f.trained.log.epochs.last().map(|e| e.total),
        diverged_at: f.trained.log.diverged_at,
    }
}

fn write_loss_curves(path: &Path, folds: &[FoldOutcome]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["fold", "epoch", "ce", "hs", "mono", "total"])?;
    for f in folds {
        for (e, l) in f.trained.log.epochs.iter().enumerate() {
            w.write_record([
                f.fold.to_string(),
                e.to_string(),
                format!("{:?}", l.ce),
                format!("{:?}", l.hs),
                format!("{:?}", l.mono),
                format!("{:?}", l.total),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Test-set metrics of every fold model plus their mean and std.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationSummary {
    pub folds: Vec<MetricReport>,
    pub stats: FoldStats,
    pub n_test_windows: usize,
}

fn evaluate_models(models: &[Checkpoint], test: &WindowSet) -> Result<(EvaluationSummary, Vec<Vec<PredictedWindow>>)> {
    let mut reports = Vec::new();
    let mut preds = Vec::new();
    for m in models {
        let p = predict_set(&m.model, test)?;
        reports.push(score(&p)?);
        preds.push(p);
    }
    Ok((
        EvaluationSummary {
            stats: fold_stats(&reports)?,
            folds: reports,
            n_test_windows: test.len(),
        },
        preds,
    ))
}

fn evaluate(r: &Runner, out: &Path) -> Result<(Vec<PathBuf>, Option<String>)> {
    let data = dataset(r)?;
    let expected = r.key(Stage::Preprocess)?;
    let mut models = Vec::new();
    for a in &r.manifest().stages[Stage::Train.name()].artifacts {
        let name = a.path.rsplit('/').next().unwrap_or_default();
        if name.starts_with("fold_") && name.ends_with(".json") {
            let ck = Checkpoint::load(&r.dir().join(&a.path))?;
            if ck.dataset_hash != expected {
                return Err(Error::Integrity(format!(
                    "{} was trained on a different dataset",
                    a.path
                )));
            }
            models.push(ck);
        }
    }
    models.sort_by_key(|m| m.fold);
    let (summary, preds) = evaluate_models(&models, &data.test)?;
    let mut files = Vec::new();
    for (m, p) in models.iter().zip(&preds) {
        let path = out.join(format!("predictions_fold_{}.csv", m.fold.unwrap_or(0)));
        write_predictions_csv(&path, p)?;
        files.push(path);
    }
    let intervals = out.join("intervals.csv");
    write_fold_intervals(&intervals, &summary.folds)?;
    files.push(intervals);
    let metrics = out.join("metrics.json");
    write_json(&metrics, &summary)?;
    files.push(metrics);
    let s = &summary.stats;
    let text = format!(
        "RMSE {:.3} ({:.3})  MAE {:.3} ({:.3})  MAPE {:.4} ({:.4})  MR {:.3} ({:.3})  over {} folds",
        s.rmse.mean, s.rmse.std, s.mae.mean, s.mae.std, s.mape.mean, s.mape.std, s.mr.mean, s.mr.std, s.folds
    );
    Ok((files, Some(text)))
}

fn write_fold_intervals(path: &Path, reports: &[MetricReport]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["fold", "rul_lower", "rul_upper", "count", "mae"])?;
    for (f, rep) in reports.iter().enumerate() {
        for IntervalMae {
            lower,
            upper,
            count,
            mae,
        } in &rep.intervals
        {
            w.write_record([
                f.to_string(),
                lower.to_string(),
                upper.to_string(),
                count.to_string(),
                format!("{mae:?}"),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// One row of the study table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub study: String,
    pub eta: f64,
    /// `None` stands for λ = ∞ (RUL-only model).
    pub lambda: Option<f64>,
    pub test: EvaluationSummary,
    pub validation: FoldStats,
}

fn lambda_label(l: Option<f64>) -> String {
    l.map_or("inf".into(), |v| v.to_string())
}

fn reproduce(r: &Runner, out: &Path) -> Result<(Vec<PathBuf>, Option<String>)> {
    let data = dataset(r)?;
    let (set, _, n_modes) = labelled_train(r, &data)?;
    let c = r.config();
    let base = c.train.params;
    let mut variants: Vec<(String, f64, f64)> = c
        .reproduce
        .etas
        .iter()
        .map(|&e| ("eta".to_string(), e, base.lambda))
        .collect();
    variants.extend(c.reproduce.lambdas.iter().map(|&l| ("lambda".to_string(), 0.0, l)));
    let mut done: Vec<((u64, u64), EvaluationSummary, FoldStats)> = Vec::new();
    let mut rows = Vec::new();
    for (study, eta, lambda) in variants {
        let key = (eta.to_bits(), lambda.to_bits());
        let (test, validation) = match done.iter().find(|d| d.0 == key) {
            Some((_, t, v)) => (t.clone(), *v),
            None => {
                log::info!("study {study}: eta {eta}, lambda {lambda}");
                let cfg = TrainConfig { eta, lambda, ..base };
                let folds = cross_validate(&set, n_modes, &cfg)?;
                let models: Vec<Checkpoint> = folds
                    .iter()
                    .map(|f| Checkpoint {
                        version: CHECKPOINT_VERSION,
                        model: f.trained.model.clone(),
                        config: cfg,
                        scaler: data.manifest.scaler.clone(),
                        mode_map: BTreeMap::new(),
                        dataset_hash: String::new(),
                        fold: Some(f.fold),
                        log: f.trained.log.clone(),
                    })
                    .collect();
                let (test, _) = evaluate_models(&models, &data.test)?;
                let reports: Vec<MetricReport> = folds.iter().map(|f| f.validation.clone()).collect();
                let validation = fold_stats(&reports)?;
                done.push((key, test.clone(), validation));
                (test, validation)
            }
        };
        rows.push(SummaryRow {
            study,
            eta,
            lambda: lambda.is_finite().then_some(lambda),
            test,
            validation,
        });
    }
    let csv_path = out.join("summary.csv");
    let mut w = csv::Writer::from_path(&csv_path)?;
    w.write_record([
        "study",
        "eta",
        "lambda",
        "rmse_mean",
        "rmse_std",
        "mae_mean",
        "mae_std",
        "mape_mean",
        "mape_std",
        "mr_mean",
        "mr_std",
    ])?;
    let mut table = format!(
        "{:<8} {:>5} {:>6} {:>18} {:>18} {:>18} {:>16}\n",
        "study", "eta", "lambda", "RMSE", "MAE", "MAPE", "MR"
    );
    for row in &rows {
        let s = &row.test.stats;
        w.write_record([
            row.study.clone(),
            row.eta.to_string(),
            lambda_label(row.lambda),
            s.rmse.mean.to_string(),
            s.rmse.std.to_string(),
            s.mae.mean.to_string(),
            s.mae.std.to_string(),
            s.mape.mean.to_string(),
            s.mape.std.to_string(),
            s.mr.mean.to_string(),
            s.mr.std.to_string(),
        ])?;
        let _ = writeln!(
            table,
            "{:<8} {:>5} {:>6} {:>9.3} ({:>6.3}) {:>9.3} ({:>6.3}) {:>9.4} ({:>6.4}) {:>7.3} ({:>5.3})",
            row.study,
            row.eta,
            lambda_label(row.lambda),
            s.rmse.mean,
            s.rmse.std,
            s.mae.mean,
            s.mae.std,
            s.mape.mean,
            s.mape.std,
            s.mr.mean,
            s.mr.std
        );
    }
    w.flush().map_err(|e| Error::io(&csv_path, e))?;
    let json_path = out.join("summary.json");
    write_json(&json_path, &rows)?;
    Ok((vec![csv_path, json_path], Some(table)))
}
