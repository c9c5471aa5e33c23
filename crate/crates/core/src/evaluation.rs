//! Temporal folds, support-weighted classification metrics and
//! Friedman/Conover rank statistics.

use std::cmp::Ordering;
use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, StudentsT};
use thiserror::Error;

use crate::dataset::DatasetManifest;
use crate::stats::{mean, midranks, population_std};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("need at least two cohorts for temporal folds, found {0}")]
    TooFewCohorts(usize),
    #[error("no prediction records")]
    Empty,
    #[error("invalid record for {id} step {step}: {reason}")]
    Record { id: String, step: usize, reason: String },
    #[error("statistics need at least 2 methods and 2 folds, got {methods}x{folds}")]
    TableShape { methods: usize, folds: usize },
    #[error("missing predictions for method {method}, fold {fold}")]
    Missing { method: String, fold: usize },
}

/// Sort key for cohort labels such as `S21` or `F2024`: (year, season) with
/// winter < spring < summer < fall.
pub fn cohort_key(label: &str) -> Option<(u32, u8)> {
    let split = label.find(|c: char| c.is_ascii_digit())?;
    let (season, year) = label.split_at(split);
    if season.is_empty() || !year.chars().all(|c| c.is_ascii_digit()) {
        return None;
    }
    let season = match season.to_ascii_uppercase().as_str() {
        "W" | "WI" | "WIN" => 0,
        "S" | "SP" | "SPR" => 1,
        "U" | "SU" | "SUM" => 2,
        "F" | "FA" | "FAL" => 3,
        _ => return None,
    };
    let year: u32 = match year.len() {
        2 => 2000 + year.parse::<u32>().ok()?,
        4 => year.parse().ok()?,
        _ => return None,
    };
    Some((year, season))
}

/// Distinct cohorts in temporal order. Falls back to lexicographic order
/// (with a warning) when any label does not parse.
pub fn ordered_cohorts(d: &DatasetManifest) -> Vec<String> {
    let set: BTreeSet<&str> = d.trajectories.iter().map(|t| t.cohort.as_str()).collect();
    let mut cohorts: Vec<String> = set.into_iter().map(str::to_string).collect();
    if cohorts.iter().all(|c| cohort_key(c).is_some()) {
        cohorts.sort_by_key(|c| cohort_key(c).expect("checked above"));
    } else {
        log::warn!("cohort labels are not all season+year; ordering lexicographically");
    }
    cohorts
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    /// 1-based fold number.
    pub index: usize,
    pub train_cohorts: Vec<String>,
    pub test_cohort: String,
}

/// Expanding-window folds: train on `c_1..c_j`, test on `c_{j+1}`.
pub fn temporal_folds(d: &DatasetManifest) -> Result<Vec<Fold>, EvalError> {
    let cohorts = ordered_cohorts(d);
    if cohorts.len() < 2 {
        return Err(EvalError::TooFewCohorts(cohorts.len()));
    }
    Ok((1..cohorts.len())
        .map(|j| Fold {
            index: j,
            train_cohorts: cohorts[..j].to_vec(),
            test_cohort: cohorts[j].clone(),
        })
        .collect())
}

/// Splits a dataset into (train, test) for one fold.
pub fn split_fold(d: &DatasetManifest, fold: &Fold) -> (DatasetManifest, DatasetManifest) {
    let train = d.filter(|t| fold.train_cohorts.contains(&t.cohort));
    let test = d.filter(|t| t.cohort == fold.test_cohort);
    (train, test)
}

/// One line of a prediction file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub id: String,
    pub step: usize,
    pub action: usize,
    pub dist: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub acc: f64,
    pub rec: f64,
    pub prec: f64,
    pub f1: f64,
    /// `None` when fewer than two classes occur in the truth.
    pub auc: Option<f64>,
    pub apr: Option<f64>,
    pub jaccard: f64,
}

/// Index of the largest entry; ties go to the lower index.
pub fn argmax(v: &[f64]) -> usize {
    let mut arg = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[arg] {
            arg = i;
        }
    }
    arg
}

/// Area under the ROC curve from the rank-sum statistic, ties at midrank.
pub fn roc_auc(scores: &[f64], positive: &[bool]) -> Option<f64> {
    let n_pos = positive.iter().filter(|p| **p).count() as f64;
    let n_neg = positive.len() as f64 - n_pos;
    if n_pos == 0.0 || n_neg == 0.0 {
        return None;
    }
    let ranks = midranks(scores);
    let rank_sum: f64 = ranks.iter().zip(positive).filter(|(_, p)| **p).map(|(r, _)| r).sum();
    Some((rank_sum - n_pos * (n_pos + 1.0) / 2.0) / (n_pos * n_neg))
}

/// Step-wise average precision over distinct score thresholds.
pub fn average_precision(scores: &[f64], positive: &[bool]) -> Option<f64> {
    let n_pos = positive.iter().filter(|p| **p).count();
    if n_pos == 0 || n_pos == positive.len() {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap_or(Ordering::Equal));
    let mut ap = 0.0;
    let mut tp = 0usize;
    let mut seen = 0usize;
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        let mut new_tp = 0;
        while i < order.len() && scores[order[i]] == s {
            seen += 1;
            if positive[order[i]] {
                new_tp += 1;
            }
            i += 1;
        }
        tp += new_tp;
        if new_tp > 0 {
            ap += (new_tp as f64 / n_pos as f64) * (tp as f64 / seen as f64);
        }
    }
    Some(ap)
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn compute_metrics(records: &[PredictionRecord]) -> Result<MetricReport, EvalError> {
    let first = records.first().ok_or(EvalError::Empty)?;
    let a_count = first.dist.len();
    for r in records {
        let reason = if r.dist.len() != a_count {
            Some("distribution length differs".to_string())
        } else if r.action >= a_count {
            Some(format!("action {} outside 0..{a_count}", r.action))
        } else if r.dist.iter().any(|p| !p.is_finite() || *p < 0.0) || (r.dist.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            Some("distribution is not a probability vector".into())
        } else {
            None
        };
        if let Some(reason) = reason {
            return Err(EvalError::Record {
                id: r.id.clone(),
                step: r.step,
                reason,
            });
        }
    }
    let n = records.len();
    let hard: Vec<usize> = records.iter().map(|r| argmax(&r.dist)).collect();
    let mut tp = vec![0usize; a_count];
    let mut pred_count = vec![0usize; a_count];
    let mut support = vec![0usize; a_count];
    for (r, &h) in records.iter().zip(&hard) {
        support[r.action] += 1;
        pred_count[h] += 1;
        if h == r.action {
            tp[h] += 1;
        }
    }
    let classes_present = support.iter().filter(|s| **s > 0).count();
    let mut rec = 0.0;
    let mut prec = 0.0;
    let mut f1 = 0.0;
    let mut jac = 0.0;
    let mut auc = 0.0;
    let mut apr = 0.0;
    for c in 0..a_count {
        if support[c] == 0 {
            continue;
        }
        let w = support[c] as f64 / n as f64;
        let r_c = ratio(tp[c], support[c]);
        let p_c = ratio(tp[c], pred_count[c]);
        let f_c = if p_c + r_c > 0.0 { 2.0 * p_c * r_c / (p_c + r_c) } else { 0.0 };
        let j_c = ratio(tp[c], support[c] + pred_count[c] - tp[c]);
        rec += w * r_c;
        prec += w * p_c;
        f1 += w * f_c;
        jac += w * j_c;
        if classes_present >= 2 {
            let scores: Vec<f64> = records.iter().map(|r| r.dist[c]).collect();
            let pos: Vec<bool> = records.iter().map(|r| r.action == c).collect();
            auc += w * roc_auc(&scores, &pos).expect("both labels present");
            apr += w * average_precision(&scores, &pos).expect("both labels present");
        }
    }
    let acc = ratio(tp.iter().sum(), n);
    let (auc, apr) = if classes_present >= 2 { (Some(auc), Some(apr)) } else { (None, None) };
    Ok(MetricReport {
        acc,
        rec,
        prec,
        f1,
        auc,
        apr,
        jaccard: jac,
    })
}

/// Result of the Friedman omnibus test and Conover pairwise follow-up.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankTestReport {
    pub methods: Vec<String>,
    /// Average within-fold rank per method; 1 is best.
    pub mean_ranks: Vec<f64>,
    pub chi_square: f64,
    pub p_value: f64,
    /// Holm-adjusted Conover p-values, `pairwise_p[i][j]`; 1 on the diagonal.
    pub pairwise_p: Vec<Vec<f64>>,
    /// Pairwise rejections at 0.05; all false unless the omnibus test rejects.
    pub significant: Vec<Vec<bool>>,
    pub degenerate: bool,
}

pub const ALPHA: f64 = 0.05;

/// Ranks per fold (column), highest value ranked 1, ties averaged.
pub fn within_fold_ranks(table: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let k = table.len();
    let n = table[0].len();
    let mut ranks = vec![vec![0.0; n]; k];
    for j in 0..n {
        let neg: Vec<f64> = table.iter().map(|row| -row[j]).collect();
        for (i, r) in midranks(&neg).into_iter().enumerate() {
            ranks[i][j] = r;
        }
    }
    ranks
}

/// Holm step-down adjustment; returns adjusted p-values in input order.
pub fn holm_adjust(p: &[f64]) -> Vec<f64> {
    let m = p.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| p[a].partial_cmp(&p[b]).unwrap_or(Ordering::Equal).then(a.cmp(&b)));
    let mut adjusted = vec![0.0; m];
    let mut running: f64 = 0.0;
    for (step, &idx) in order.iter().enumerate() {
        let v = ((m - step) as f64 * p[idx]).min(1.0);
        running = running.max(v);
        adjusted[idx] = running;
    }
    adjusted
}

/// `table[method][fold]`, larger is better.
pub fn friedman_conover(methods: &[String], table: &[Vec<f64>]) -> Result<RankTestReport, EvalError> {
    let k = table.len();
    let n = table.first().map_or(0, Vec::len);
    if k < 2 || n < 2 || table.iter().any(|r| r.len() != n) || methods.len() != k {
        return Err(EvalError::TableShape { methods: k, folds: n });
    }
    let ranks = within_fold_ranks(table);
    let (kf, nf) = (k as f64, n as f64);
    let rank_sums: Vec<f64> = ranks.iter().map(|r| r.iter().sum()).collect();
    let mean_ranks: Vec<f64> = rank_sums.iter().map(|r| r / nf).collect();
    let a1: f64 = ranks.iter().flatten().map(|r| r * r).sum();
    let c1 = nf * kf * (kf + 1.0).powi(2) / 4.0;
    let spread: f64 = rank_sums.iter().map(|r| (r - nf * (kf + 1.0) / 2.0).powi(2)).sum();
    let no_diff = RankTestReport {
        methods: methods.to_vec(),
        mean_ranks: mean_ranks.clone(),
        chi_square: 0.0,
        p_value: 1.0,
        pairwise_p: vec![vec![1.0; k]; k],
        significant: vec![vec![false; k]; k],
        degenerate: true,
    };
    if a1 - c1 <= 1e-12 * c1 || spread == 0.0 {
        return Ok(no_diff);
    }
    let t1 = (kf - 1.0) * spread / (a1 - c1);
    let chi = ChiSquared::new(kf - 1.0).expect("df >= 1");
    let p_value = chi.sf(t1);

    let df = (nf - 1.0) * (kf - 1.0);
    let var = 2.0 * nf * (a1 - c1) / df * (1.0 - t1 / (nf * (kf - 1.0)));
    let student = StudentsT::new(0.0, 1.0, df).expect("df >= 1");
    let mut raw = Vec::new();
    let mut pairs = Vec::new();
    for i in 0..k {
        for j in i + 1..k {
            let diff = (rank_sums[i] - rank_sums[j]).abs();
            let p = if diff == 0.0 {
                1.0
            } else if var <= 0.0 {
                0.0
            } else {
                2.0 * student.sf(diff / var.sqrt())
            };
            raw.push(p);
            pairs.push((i, j));
        }
    }
    let adjusted = holm_adjust(&raw);
    let mut pairwise_p = vec![vec![1.0; k]; k];
    let mut significant = vec![vec![false; k]; k];
    for (&(i, j), &p) in pairs.iter().zip(&adjusted) {
        pairwise_p[i][j] = p;
        pairwise_p[j][i] = p;
        let rej = p_value < ALPHA && p < ALPHA;
        significant[i][j] = rej;
        significant[j][i] = rej;
    }
    Ok(RankTestReport {
        methods: methods.to_vec(),
        mean_ranks,
        chi_square: t1,
        p_value,
        pairwise_p,
        significant,
        degenerate: false,
    })
}

/// One row of a critical-difference diagram.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CdRow {
    pub method: String,
    pub mean_rank: f64,
    /// Letters of the groups of mutually indistinguishable methods that
    /// contain this one.
    pub group: String,
}

/// Methods sorted by mean rank, grouped into maximal runs with no pairwise
/// rejection inside.
pub fn cd_diagram(report: &RankTestReport) -> Vec<CdRow> {
    let k = report.methods.len();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| {
        report.mean_ranks[a]
            .partial_cmp(&report.mean_ranks[b])
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut runs: Vec<(usize, usize)> = Vec::new();
    for start in 0..k {
        let mut end = start;
        while end + 1 < k && (start..=end + 1).all(|x| !report.significant[order[x]][order[end + 1]]) {
            end += 1;
        }
        if runs.last().is_none_or(|&(_, e)| end > e) {
            runs.push((start, end));
        }
    }
    let mut groups = vec![String::new(); k];
    for (g, &(s, e)) in runs.iter().enumerate() {
        let letter = group_label(g);
        for pos in s..=e {
            groups[pos].push_str(&letter);
        }
    }
    order
        .iter()
        .zip(groups)
        .map(|(&i, group)| CdRow {
            method: report.methods[i].clone(),
            mean_rank: report.mean_ranks[i],
            group,
        })
        .collect()
}

fn group_label(g: usize) -> String {
    let letters = b"abcdefghijklmnopqrstuvwxyz";
    if g < letters.len() {
        (letters[g] as char).to_string()
    } else {
        format!("g{g}")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: String,
    pub folds: Vec<MetricReport>,
    pub mean: MetricReport,
    pub std: MetricReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridReport {
    pub fold_indices: Vec<usize>,
    pub methods: Vec<MethodSummary>,
    pub f1_test: RankTestReport,
    pub jaccard_test: RankTestReport,
}

fn aggregate(reports: &[MetricReport], f: impl Fn(&[f64]) -> f64) -> MetricReport {
    let pick = |g: &dyn Fn(&MetricReport) -> f64| f(&reports.iter().map(g).collect::<Vec<_>>());
    let opt = |g: &dyn Fn(&MetricReport) -> Option<f64>| {
        let vals: Option<Vec<f64>> = reports.iter().map(g).collect();
        vals.map(|v| f(&v))
    };
    MetricReport {
        acc: pick(&|m| m.acc),
        rec: pick(&|m| m.rec),
        prec: pick(&|m| m.prec),
        f1: pick(&|m| m.f1),
        auc: opt(&|m| m.auc),
        apr: opt(&|m| m.apr),
        jaccard: pick(&|m| m.jaccard),
    }
}

/// Mean and population standard deviation over folds.
pub fn summarize(method: &str, folds: Vec<MetricReport>) -> MethodSummary {
    MethodSummary {
        method: method.to_string(),
        mean: aggregate(&folds, mean),
        std: aggregate(&folds, population_std),
        folds,
    }
}

/// `preds[method][fold]` holds the records of one (method, fold) pair; the
/// method order is kept in the report.
pub fn evaluate_grid(
    methods: &[String],
    fold_indices: &[usize],
    preds: &[Vec<Vec<PredictionRecord>>],
) -> Result<GridReport, EvalError> {
    for (m, per_fold) in methods.iter().zip(preds) {
        if per_fold.len() != fold_indices.len() {
            return Err(EvalError::Missing {
                method: m.clone(),
                fold: fold_indices.get(per_fold.len()).copied().unwrap_or(0),
            });
        }
    }
    let per_method: Vec<Vec<MetricReport>> = preds
        .par_iter()
        .map(|per_fold| per_fold.iter().map(|r| compute_metrics(r)).collect::<Result<Vec<_>, _>>())
        .collect::<Result<_, _>>()?;
    let summaries: Vec<MethodSummary> = methods
        .iter()
        .zip(per_method)
        .map(|(m, folds)| summarize(m, folds))
        .collect();
    let table = |g: fn(&MetricReport) -> f64| -> Vec<Vec<f64>> {
        summaries.iter().map(|s| s.folds.iter().map(g).collect()).collect()
    };
    let rank_test = |t: Vec<Vec<f64>>| {
        if methods.len() >= 2 && fold_indices.len() >= 2 {
            friedman_conover(methods, &t)
        } else {
            // Too small for the omnibus test: report ranks only.
            let k = methods.len();
            let ranks = if k > 0 && !t[0].is_empty() { within_fold_ranks(&t) } else { vec![vec![]; k] };
            Ok(RankTestReport {
                methods: methods.to_vec(),
                mean_ranks: ranks.iter().map(|r| if r.is_empty() { 0.0 } else { mean(r) }).collect(),
                chi_square: 0.0,
                p_value: 1.0,
                pairwise_p: vec![vec![1.0; k]; k],
                significant: vec![vec![false; k]; k],
                degenerate: true,
            })
        }
    };
    Ok(GridReport {
        fold_indices: fold_indices.to_vec(),
        f1_test: rank_test(table(|m| m.f1))?,
        jaccard_test: rank_test(table(|m| m.jaccard))?,
        methods: summaries,
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "nan".to_string(), |x| x.to_string())
}

fn metric_row(method: &str, fold: &str, m: &MetricReport) -> String {
    format!(
        "{method},{fold},{},{},{},{},{},{},{}\n",
        m.acc,
        m.rec,
        m.prec,
        m.f1,
        fmt_opt(m.auc),
        fmt_opt(m.apr),
        m.jaccard
    )
}

/// Per-fold rows followed by `mean` and `std` rows for each method.
pub fn report_csv(report: &GridReport) -> String {
    let mut out = String::from("method,fold,acc,rec,prec,f1,auc,apr,jaccard\n");
    for s in &report.methods {
        for (idx, m) in report.fold_indices.iter().zip(&s.folds) {
            out.push_str(&metric_row(&s.method, &idx.to_string(), m));
        }
        out.push_str(&metric_row(&s.method, "mean", &s.mean));
        out.push_str(&metric_row(&s.method, "std", &s.std));
    }
    out
}

pub fn cd_csv(rows: &[CdRow]) -> String {
    let mut out = String::from("method,mean_rank,group\n");
    for r in rows {
        out.push_str(&format!("{},{},{}\n", r.method, r.mean_rank, r.group));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn rec(action: usize, dist: Vec<f64>) -> PredictionRecord {
        PredictionRecord {
            id: "x".into(),
            step: 0,
            action,
            dist,
        }
    }

    #[test]
    fn cohort_ordering() {
        assert!(cohort_key("S24") < cohort_key("F24"));
        assert!(cohort_key("F24") < cohort_key("S25"));
        assert_eq!(cohort_key("S2021"), cohort_key("S21"));
        assert_eq!(cohort_key("cohortA"), None);
    }

    #[test]
    fn auc_example() {
        let auc = roc_auc(&[0.1, 0.4, 0.35, 0.8], &[false, false, true, true]).unwrap();
        assert_eq!(auc, 0.75);
        assert_eq!(roc_auc(&[0.5, 0.5], &[true, false]), Some(0.5));
        assert_eq!(roc_auc(&[0.5], &[true]), None);
    }

    #[test]
    fn weighted_f1_example() {
        // Confusion [[2,0,0],[1,1,0],[0,0,2]] (rows = truth).
        let one_hot = |c: usize| {
            let mut v = vec![0.0; 3];
            v[c] = 1.0;
            v
        };
        let pairs = [(0, 0), (0, 0), (1, 0), (1, 1), (2, 2), (2, 2)];
        let recs: Vec<_> = pairs.iter().map(|&(t, p)| rec(t, one_hot(p))).collect();
        let m = compute_metrics(&recs).unwrap();
        assert_abs_diff_eq!(m.f1, (2.0 * 0.8 + 2.0 * (2.0 / 3.0) + 2.0) / 6.0, epsilon = 1e-12);
        assert_abs_diff_eq!(m.acc, m.rec, epsilon = 1e-15);
        assert_abs_diff_eq!(m.acc, 5.0 / 6.0, epsilon = 1e-15);
    }

    #[test]
    fn perfect_predictions() {
        let recs = vec![rec(0, vec![0.9, 0.1]), rec(1, vec![0.2, 0.8]), rec(1, vec![0.4, 0.6])];
        let m = compute_metrics(&recs).unwrap();
        for v in [m.acc, m.rec, m.prec, m.f1, m.auc.unwrap(), m.apr.unwrap(), m.jaccard] {
            assert_eq!(v, 1.0);
        }
    }

    #[test]
    fn single_class_leaves_auc_undefined() {
        let m = compute_metrics(&[rec(0, vec![0.6, 0.4])]).unwrap();
        assert_eq!(m.auc, None);
        assert_eq!(m.acc, 1.0);
    }

    #[test]
    fn bad_records_are_rejected() {
        assert!(compute_metrics(&[]).is_err());
        assert!(compute_metrics(&[rec(0, vec![0.6, 0.6])]).is_err());
        assert!(compute_metrics(&[rec(2, vec![0.5, 0.5])]).is_err());
    }

    #[test]
    fn folds() {
        let mk = |c: &str| crate::dataset::Trajectory {
            id: c.to_lowercase(),
            cohort: c.into(),
            pretest: None,
            posttest: None,
            steps: vec![crate::dataset::Step {
                t: 0.0,
                x: vec![0.0],
                a: 0,
                w: 1.0,
            }],
        };
        let d = DatasetManifest {
            state_dim: 1,
            num_actions: 2,
            trajectories: ["S25", "S21", "F24", "S22", "S24"].iter().map(|c| mk(c)).collect(),
        };
        let f = temporal_folds(&d).unwrap();
        let tests: Vec<&str> = f.iter().map(|f| f.test_cohort.as_str()).collect();
        assert_eq!(tests, ["S22", "S24", "F24", "S25"]);
        assert_eq!(f[2].train_cohorts, ["S21", "S22", "S24"]);
        let single = d.filter(|t| t.cohort == "S21");
        assert!(temporal_folds(&single).is_err());
    }

    #[test]
    fn rank_tests_trivial_cases() {
        let names: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        let flat = vec![vec![0.5; 4]; 3];
        let r = friedman_conover(&names, &flat).unwrap();
        assert!(r.degenerate);
        assert_eq!(r.p_value, 1.0);
        assert_eq!(r.mean_ranks, vec![2.0; 3]);
        assert!(r.significant.iter().flatten().all(|s| !s));

        let best = vec![vec![0.9, 0.8, 0.95, 0.9], vec![0.5, 0.6, 0.4, 0.5], vec![0.6, 0.5, 0.5, 0.4]];
        let r = friedman_conover(&names, &best).unwrap();
        assert_eq!(r.mean_ranks[0], 1.0);
        let cd = cd_diagram(&r);
        assert_eq!(cd[0].method, "a");
    }

    #[test]
    fn holm() {
        let adj = holm_adjust(&[0.01, 0.04, 0.03]);
        assert_abs_diff_eq!(adj[0], 0.03, epsilon = 1e-15);
        assert_abs_diff_eq!(adj[2], 0.06, epsilon = 1e-15);
        assert_abs_diff_eq!(adj[1], 0.06, epsilon = 1e-15);
    }

    #[test]
    fn summary_std_is_population() {
        let mk = |f1: f64| MetricReport {
            acc: 0.0,
            rec: 0.0,
            prec: 0.0,
            f1,
            auc: None,
            apr: Some(0.5),
            jaccard: 0.0,
        };
        let s = summarize("m", vec![mk(0.6), mk(0.8)]);
        assert_abs_diff_eq!(s.mean.f1, 0.7, epsilon = 1e-15);
        assert_abs_diff_eq!(s.std.f1, 0.1, epsilon = 1e-15);
        assert_eq!(s.mean.auc, None);
        let one = summarize("m", vec![mk(0.6)]);
        assert_eq!(one.std.f1, 0.0);
    }
}
