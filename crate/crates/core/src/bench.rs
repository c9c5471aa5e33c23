//! Temporal cross-validation over the nine-configuration grid.

use std::fs;
use std::io;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::DatasetManifest;
use crate::evaluation::{
    cd_csv, cd_diagram, evaluate_grid, report_csv, split_fold, temporal_folds, EvalError, Fold, GridReport,
    PredictionRecord,
};
use crate::pipeline::{
    baseline_grid, derive_seed, method_slug, predict_trajectory, PipelineError, RunConfig, TrainedModel,
};
use crate::ranking::{rank_dataset, RankError};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Rank(#[from] RankError),
    #[error("fold {fold}: {source}")]
    Pipeline {
        fold: usize,
        #[source]
        source: PipelineError,
    },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("{path}: {reason}")]
    Format { path: String, reason: String },
}

impl BenchError {
    pub fn is_numerical(&self) -> bool {
        matches!(self, BenchError::Pipeline { source, .. } if source.is_numerical())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchResult {
    pub folds: Vec<Fold>,
    pub methods: Vec<String>,
    /// `predictions[method][fold]`.
    pub predictions: Vec<Vec<Vec<PredictionRecord>>>,
    pub report: GridReport,
}

/// Per-step records for every test trajectory.
pub fn predict_dataset(model: &TrainedModel, d: &DatasetManifest) -> Result<Vec<PredictionRecord>, PipelineError> {
    let per_traj: Vec<Vec<PredictionRecord>> = d
        .trajectories
        .par_iter()
        .map(|traj| {
            let dists = predict_trajectory(model, traj)?;
            Ok(traj
                .steps
                .iter()
                .zip(dists)
                .enumerate()
                .map(|(i, (s, dist))| PredictionRecord {
                    id: traj.id.clone(),
                    step: i,
                    action: s.a,
                    dist,
                })
                .collect())
        })
        .collect::<Result<_, PipelineError>>()?;
    Ok(per_traj.into_iter().flatten().collect())
}

/// Trains every configuration on each fold's training cohorts and predicts
/// its test cohort. Fold `j` uses the seed derived from `fold/j`.
pub fn run_bench(d: &DatasetManifest, base: &RunConfig) -> Result<BenchResult, BenchError> {
    let folds = temporal_folds(d)?;
    let mut methods: Vec<String> = Vec::new();
    let mut per_fold: Vec<Vec<Vec<PredictionRecord>>> = Vec::new();
    for fold in &folds {
        let (train, test) = split_fold(d, fold);
        let weights = rank_dataset(&train, base.alpha, base.groups)?;
        let cfg = RunConfig {
            seed: derive_seed(base.seed, &format!("fold/{}", fold.index)),
            ..base.clone()
        };
        log::info!(
            "fold {}: train {} trajectories ({}), test {} ({})",
            fold.index,
            train.len(),
            fold.train_cohorts.join(","),
            test.len(),
            fold.test_cohort
        );
        let wrap = |source| BenchError::Pipeline {
            fold: fold.index,
            source,
        };
        let models = baseline_grid(&train, Some(&weights), &cfg).map_err(wrap)?;
        methods = models.iter().map(|(name, _)| name.clone()).collect();
        let preds = models
            .par_iter()
            .map(|(_, model)| predict_dataset(model, &test))
            .collect::<Result<Vec<_>, _>>()
            .map_err(wrap)?;
        per_fold.push(preds);
    }
    // Transpose to method-major order.
    let mut predictions: Vec<Vec<Vec<PredictionRecord>>> = vec![Vec::new(); methods.len()];
    for fold_preds in per_fold {
        for (m, p) in fold_preds.into_iter().enumerate() {
            predictions[m].push(p);
        }
    }
    let indices: Vec<usize> = folds.iter().map(|f| f.index).collect();
    let report = evaluate_grid(&methods, &indices, &predictions)?;
    Ok(BenchResult {
        folds,
        methods,
        predictions,
        report,
    })
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> BenchError + '_ {
    move |source| BenchError::Io {
        path: path.display().to_string(),
        source,
    }
}

pub fn records_to_jsonl(records: &[PredictionRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("records serialize"));
        out.push('\n');
    }
    out
}

pub fn parse_records(text: &str, path: &Path) -> Result<Vec<PredictionRecord>, BenchError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| BenchError::Format {
                path: path.display().to_string(),
                reason: format!("line {}: {e}", i + 1),
            })
        })
        .collect()
}

/// Layout: `preds/methods.json` (method order and fold indices),
/// `preds/<slug>/fold<j>.jsonl`.
pub fn write_predictions(dir: &Path, methods: &[String], folds: &[usize], preds: &[Vec<Vec<PredictionRecord>>]) -> Result<(), BenchError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let index = PredictionIndex {
        methods: methods.to_vec(),
        folds: folds.to_vec(),
    };
    let index_path = dir.join("methods.json");
    fs::write(&index_path, serde_json::to_string_pretty(&index).expect("index serializes") + "\n")
        .map_err(io_err(&index_path))?;
    for (m, per_fold) in methods.iter().zip(preds) {
        let mdir = dir.join(method_slug(m));
        fs::create_dir_all(&mdir).map_err(io_err(&mdir))?;
        for (j, records) in folds.iter().zip(per_fold) {
            let path = mdir.join(format!("fold{j}.jsonl"));
            fs::write(&path, records_to_jsonl(records)).map_err(io_err(&path))?;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PredictionIndex {
    pub methods: Vec<String>,
    pub folds: Vec<usize>,
}

/// Reads a directory written by [`write_predictions`].
pub fn read_predictions(dir: &Path) -> Result<(PredictionIndex, Vec<Vec<Vec<PredictionRecord>>>), BenchError> {
    let index_path = dir.join("methods.json");
    let text = fs::read_to_string(&index_path).map_err(io_err(&index_path))?;
    let index: PredictionIndex = serde_json::from_str(&text).map_err(|e| BenchError::Format {
        path: index_path.display().to_string(),
        reason: e.to_string(),
    })?;
    let mut preds = Vec::with_capacity(index.methods.len());
    for m in &index.methods {
        let mut per_fold = Vec::with_capacity(index.folds.len());
        for j in &index.folds {
            let path = dir.join(method_slug(m)).join(format!("fold{j}.jsonl"));
            let text = fs::read_to_string(&path).map_err(io_err(&path))?;
            per_fold.push(parse_records(&text, &path)?);
        }
        preds.push(per_fold);
    }
    Ok((index, preds))
}

/// Writes the report table and the F1 and Jaccard CD files.
pub fn write_report(report: &GridReport, out: &Path, cd_f1: &Path, cd_jaccard: Option<&Path>) -> Result<(), BenchError> {
    fs::write(out, report_csv(report)).map_err(io_err(out))?;
    fs::write(cd_f1, cd_csv(&cd_diagram(&report.f1_test))).map_err(io_err(cd_f1))?;
    if let Some(p) = cd_jaccard {
        fs::write(p, cd_csv(&cd_diagram(&report.jaccard_test))).map_err(io_err(p))?;
    }
    Ok(())
}

/// `outdir/preds/...`, `outdir/report.csv`, `outdir/cd_f1.csv`,
/// `outdir/cd_jaccard.csv`, `outdir/folds.json`.
pub fn write_bench(result: &BenchResult, outdir: &Path) -> Result<(), BenchError> {
    fs::create_dir_all(outdir).map_err(io_err(outdir))?;
    let indices: Vec<usize> = result.folds.iter().map(|f| f.index).collect();
    write_predictions(&outdir.join("preds"), &result.methods, &indices, &result.predictions)?;
    write_report(
        &result.report,
        &outdir.join("report.csv"),
        &outdir.join("cd_f1.csv"),
        Some(&outdir.join("cd_jaccard.csv")),
    )?;
    let folds_path = outdir.join("folds.json");
    fs::write(&folds_path, serde_json::to_string_pretty(&result.folds).expect("folds serialize") + "\n")
        .map_err(io_err(&folds_path))?;
    Ok(())
}
