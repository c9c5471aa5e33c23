//! Learning-gain quality signals, expert partitioning and decision weights.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::DatasetManifest;

#[derive(Debug, Error, PartialEq)]
pub enum RankError {
    #[error("pretest score {0} leaves no headroom; normalized gain is undefined")]
    NoHeadroom(f64),
    #[error("score {0} outside [0,1]")]
    ScoreRange(f64),
    #[error("trajectory '{0}' has no pretest/posttest scores")]
    MissingScores(String),
    #[error("sensitivity alpha must be > 0, got {0}")]
    BadAlpha(f64),
    #[error("bad group cutpoints: {0}")]
    BadCutpoints(String),
    #[error("trajectory '{0}' has no quality label")]
    MissingLabel(String),
}

/// Normalized learning gain `(post - pre) / sqrt(1 - pre)`.
pub fn nlg(pretest: f64, posttest: f64) -> Result<f64, RankError> {
    for s in [pretest, posttest] {
        if !(0.0..=1.0).contains(&s) {
            return Err(RankError::ScoreRange(s));
        }
    }
    if pretest >= 1.0 {
        return Err(RankError::NoHeadroom(pretest));
    }
    Ok((posttest - pretest) / (1.0 - pretest).sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Standardized {
    pub values: Vec<f64>,
    /// Set when the input had zero variance and every z-score was forced to 0.
    pub degenerate: bool,
}

/// Z-scores with the population (divisor n) standard deviation.
pub fn standardize(values: &[f64]) -> Standardized {
    let n = values.len() as f64;
    if values.is_empty() {
        return Standardized {
            values: Vec::new(),
            degenerate: true,
        };
    }
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let sd = var.sqrt();
    if !(sd > 0.0) || sd <= 1e-15 * mean.abs().max(1.0) {
        log::warn!("zero-variance quality signal; all standardized values set to 0");
        return Standardized {
            values: vec![0.0; values.len()],
            degenerate: true,
        };
    }
    Standardized {
        values: values.iter().map(|v| (v - mean) / sd).collect(),
        degenerate: false,
    }
}

/// Sigmoid map from a standardized quality value to a decision weight.
///
/// The result is clamped away from zero so it stays a valid weight even when
/// `alpha * z` is large and negative.
pub fn weight_map(z_std: f64, alpha: f64) -> f64 {
    let s = alpha * z_std;
    let w = if s >= 0.0 {
        1.0 / (1.0 + (-s).exp())
    } else {
        let e = s.exp();
        e / (1.0 + e)
    };
    w.max(f64::MIN_POSITIVE)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PerformanceGroup {
    Low,
    Medium,
    High,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Qlg {
    High,
    Low,
}

impl fmt::Display for Qlg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Qlg::High => "High",
            Qlg::Low => "Low",
        })
    }
}

/// Group boundaries: `score < low_upper` is low, `score < medium_upper` is
/// medium, anything else high.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupCutpoints {
    pub low_upper: f64,
    pub medium_upper: f64,
}

impl GroupCutpoints {
    pub fn new(low_upper: f64, medium_upper: f64) -> Result<Self, RankError> {
        if !(low_upper.is_finite() && medium_upper.is_finite()) || low_upper > medium_upper {
            return Err(RankError::BadCutpoints(format!(
                "need c1 <= c2, got {low_upper}, {medium_upper}"
            )));
        }
        Ok(Self {
            low_upper,
            medium_upper,
        })
    }

    /// Terciles (linear interpolation between order statistics) of a pooled
    /// score sample.
    pub fn terciles(scores: &[f64]) -> Result<Self, RankError> {
        if scores.is_empty() {
            return Err(RankError::BadCutpoints("no scores to take terciles of".into()));
        }
        let mut sorted = scores.to_vec();
        sorted.sort_by(f64::total_cmp);
        Self::new(quantile(&sorted, 1.0 / 3.0), quantile(&sorted, 2.0 / 3.0))
    }

    pub fn group(&self, score: f64) -> PerformanceGroup {
        if score < self.low_upper {
            PerformanceGroup::Low
        } else if score < self.medium_upper {
            PerformanceGroup::Medium
        } else {
            PerformanceGroup::High
        }
    }
}

fn quantile(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// How cutpoints are chosen: terciles of the pooled pretest scores or two
/// fixed values.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum GroupSpec {
    #[default]
    Terciles,
    Fixed(f64, f64),
}

impl fmt::Display for GroupSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GroupSpec::Terciles => f.write_str("terciles"),
            GroupSpec::Fixed(a, b) => write!(f, "fixed:{a},{b}"),
        }
    }
}

impl TryFrom<String> for GroupSpec {
    type Error = RankError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<GroupSpec> for String {
    fn from(g: GroupSpec) -> String {
        g.to_string()
    }
}

impl FromStr for GroupSpec {
    type Err = RankError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "terciles" {
            return Ok(GroupSpec::Terciles);
        }
        let bad = || RankError::BadCutpoints(format!("expected 'terciles' or 'fixed:c1,c2', got '{s}'"));
        let rest = s.strip_prefix("fixed:").ok_or_else(bad)?;
        let (a, b) = rest.split_once(',').ok_or_else(bad)?;
        let c1: f64 = a.trim().parse().map_err(|_| bad())?;
        let c2: f64 = b.trim().parse().map_err(|_| bad())?;
        GroupCutpoints::new(c1, c2)?;
        Ok(GroupSpec::Fixed(c1, c2))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QlgLabel {
    pub trajectory_id: String,
    pub label: Qlg,
    pub pre_group: PerformanceGroup,
    pub post_group: PerformanceGroup,
}

/// High when the student moved up a group or stayed in the high group.
pub fn qlg_label(id: &str, pretest: f64, posttest: f64, cuts: &GroupCutpoints) -> QlgLabel {
    let pre_group = cuts.group(pretest);
    let post_group = cuts.group(posttest);
    let label = if post_group > pre_group
        || (pre_group == PerformanceGroup::High && post_group == PerformanceGroup::High)
    {
        Qlg::High
    } else {
        Qlg::Low
    };
    QlgLabel {
        trajectory_id: id.to_string(),
        label,
        pre_group,
        post_group,
    }
}

/// Splits trajectory ids into (expert, imperfect) by QLG label.
pub fn partition_expert(
    d: &DatasetManifest,
    labels: &[QlgLabel],
) -> Result<(Vec<String>, Vec<String>), RankError> {
    let by_id: HashMap<&str, Qlg> = labels
        .iter()
        .map(|l| (l.trajectory_id.as_str(), l.label))
        .collect();
    let mut expert = Vec::new();
    let mut imperfect = Vec::new();
    for traj in &d.trajectories {
        match by_id.get(traj.id.as_str()) {
            Some(Qlg::High) => expert.push(traj.id.clone()),
            Some(Qlg::Low) => imperfect.push(traj.id.clone()),
            None => return Err(RankError::MissingLabel(traj.id.clone())),
        }
    }
    Ok((expert, imperfect))
}

/// Trajectory-level quality signal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualitySignal {
    pub trajectory_id: String,
    pub z_raw: f64,
    pub z_std: f64,
}

/// Standardizes raw per-trajectory quality values (NLG or any other source).
pub fn quality_signals(raw: &[(String, f64)]) -> (Vec<QualitySignal>, bool) {
    let values: Vec<f64> = raw.iter().map(|(_, v)| *v).collect();
    let std = standardize(&values);
    let signals = raw
        .iter()
        .zip(&std.values)
        .map(|((id, z_raw), z_std)| QualitySignal {
            trajectory_id: id.clone(),
            z_raw: *z_raw,
            z_std: *z_std,
        })
        .collect();
    (signals, std.degenerate)
}

/// One line of `weights.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingRecord {
    pub id: String,
    pub nlg: f64,
    pub z: f64,
    pub weight: f64,
    pub qlg: Qlg,
}

/// NLG, standardized NLG, sigmoid weight and QLG label for every trajectory.
pub fn rank_dataset(
    d: &DatasetManifest,
    alpha: f64,
    groups: GroupSpec,
) -> Result<Vec<RankingRecord>, RankError> {
    if !(alpha > 0.0) {
        return Err(RankError::BadAlpha(alpha));
    }
    let mut scores = Vec::with_capacity(d.len());
    for traj in &d.trajectories {
        match (traj.pretest, traj.posttest) {
            (Some(pre), Some(post)) => scores.push((traj.id.clone(), pre, post)),
            _ => return Err(RankError::MissingScores(traj.id.clone())),
        }
    }
    let cuts = match groups {
        GroupSpec::Terciles => {
            let pre: Vec<f64> = scores.iter().map(|s| s.1).collect();
            GroupCutpoints::terciles(&pre)?
        }
        GroupSpec::Fixed(c1, c2) => GroupCutpoints::new(c1, c2)?,
    };
    let raw = scores
        .iter()
        .map(|(id, pre, post)| Ok((id.clone(), nlg(*pre, *post)?)))
        .collect::<Result<Vec<_>, RankError>>()?;
    let (signals, _) = quality_signals(&raw);
    Ok(scores
        .iter()
        .zip(signals)
        .map(|((id, pre, post), sig)| RankingRecord {
            id: id.clone(),
            nlg: sig.z_raw,
            z: sig.z_std,
            weight: weight_map(sig.z_std, alpha),
            qlg: qlg_label(id, *pre, *post, &cuts).label,
        })
        .collect())
}
