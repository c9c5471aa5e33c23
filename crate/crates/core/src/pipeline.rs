//! Outer training loop, the method grid, and causal test-time prediction.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::dataset::{apply_centering, center_states, windowize, DataError, DatasetManifest, Trajectory};
use crate::policy::{em_edm_fit_with_actions, mixture_predict, update_belief, EmConfig, MixtureState, PolicyError};
use crate::ranking::{GroupSpec, Qlg, RankingRecord};
use crate::regulator::{
    build_high_level, distribute_reward, maxent_irl_fit, HighLevelModel, IrlConfig, RegulatorError,
};
use crate::segmentation::{
    causal_assign, cut_subtrajectories, rmt_ticc_fit, Assignment, SegmentationConfig, SegmentationError, SegmentationFit,
    SubTrajectory,
    SwitchPenalty, ToeplitzClusterModel,
};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Segmentation(#[from] SegmentationError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Regulator(#[from] RegulatorError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("ranking weights: {0}")]
    Weights(String),
    #[error("trajectory {id}: expected state dimension {expected}, got {got}")]
    Dimension { id: String, expected: usize, got: usize },
}

impl PipelineError {
    /// True for failures of an optimizer or decomposition rather than of the
    /// input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            PipelineError::Segmentation(SegmentationError::Numerical(_)) | PipelineError::Policy(PolicyError::NonFinite { .. })
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataAxis {
    ExpertOnly,
    ExpertPlusImperfect,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightAxis {
    Uniform,
    Ranked,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HierarchyAxis {
    Flat,
    Hierarchical,
}

fn default_data_axis() -> DataAxis {
    DataAxis::ExpertPlusImperfect
}
fn default_weight_axis() -> WeightAxis {
    WeightAxis::Ranked
}
fn default_hierarchy_axis() -> HierarchyAxis {
    HierarchyAxis::Hierarchical
}
fn default_k() -> usize {
    3
}
fn default_alpha() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_data_axis")]
    pub data_axis: DataAxis,
    #[serde(default = "default_weight_axis")]
    pub weight_axis: WeightAxis,
    #[serde(default = "default_hierarchy_axis")]
    pub hierarchy_axis: HierarchyAxis,
    #[serde(rename = "K", default = "default_k")]
    pub outer_iterations: usize,
    #[serde(default)]
    pub seg: SegmentationConfig,
    #[serde(default)]
    pub em: EmConfig,
    #[serde(default)]
    pub irl: IrlConfig,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub groups: GroupSpec,
    #[serde(default)]
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults deserialize")
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.outer_iterations == 0 {
            return Err(PipelineError::Config("K must be at least 1".into()));
        }
        if !(self.alpha > 0.0) {
            return Err(PipelineError::Config(format!("alpha must be positive, got {}", self.alpha)));
        }
        self.em.validate()?;
        if self.hierarchy_axis == HierarchyAxis::Hierarchical {
            self.seg.validate()?;
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).expect("config serializes");
        hex(&Sha256::digest(text.as_bytes()))
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Named sub-stream of a master seed.
pub fn derive_seed(master: u64, label: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update(label.as_bytes());
    let out = h.finalize();
    u64::from_le_bytes(out[..8].try_into().expect("8 bytes"))
}

/// Segmentation artifacts needed at prediction time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentationArtifact {
    pub models: Vec<ToeplitzClusterModel>,
    pub penalty: SwitchPenalty,
    pub omega: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OuterIterationLog {
    pub segmentation_objective: Vec<f64>,
    pub em_objective: Vec<f64>,
    pub num_subtrajectories: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub config: RunConfig,
    pub config_hash: String,
    pub seed: u64,
    pub state_dim: usize,
    pub num_actions: usize,
    pub state_mean: Vec<f64>,
    pub segmentation: Option<SegmentationArtifact>,
    pub mixture: MixtureState,
    pub regulator: Option<HighLevelModel>,
    pub history: Vec<OuterIterationLog>,
}

impl TrainedModel {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, PipelineError> {
        let model: TrainedModel =
            serde_json::from_str(text).map_err(|e| PipelineError::Config(format!("model file: {e}")))?;
        model.check()?;
        Ok(model)
    }

    fn check(&self) -> Result<(), PipelineError> {
        let bad = |msg: &str| Err(PipelineError::Config(format!("inconsistent model: {msg}")));
        if self.state_mean.len() != self.state_dim {
            return bad("state mean length");
        }
        if self.mixture.policies.is_empty() || self.mixture.policies.len() != self.mixture.priors.len() {
            return bad("policy and prior counts");
        }
        for p in &self.mixture.policies {
            if p.state_dim != self.state_dim || p.num_actions != self.num_actions || !p.is_consistent() {
                return bad("policy dimensions");
            }
        }
        if let Some(seg) = &self.segmentation {
            if seg.models.iter().any(|m| m.state_dim != self.state_dim || m.omega != seg.omega) {
                return bad("segmentation model dimensions");
            }
        }
        Ok(())
    }
}

/// Labels produced by one outer iteration on the training set.
pub struct IterationOutcome<'a> {
    pub assignments: &'a [Assignment],
    pub segments: &'a [SubTrajectory],
    pub hard_labels: &'a [usize],
}

/// Hooks called as the outer loop enters each stage.
pub trait FitObserver {
    fn segmentation(&mut self, _iteration: usize) {}
    fn em(&mut self, _iteration: usize) {}
    fn regulator(&mut self, _iteration: usize) {}
    fn iteration_end(&mut self, _iteration: usize, _outcome: &IterationOutcome<'_>) {}
}

pub struct NoopObserver;

impl FitObserver for NoopObserver {}

/// Training set after the data and weight axes have been applied.
fn prepare(
    d: &DatasetManifest,
    weights: Option<&[RankingRecord]>,
    cfg: &RunConfig,
) -> Result<DatasetManifest, PipelineError> {
    let by_id: Option<HashMap<&str, &RankingRecord>> =
        weights.map(|w| w.iter().map(|r| (r.id.as_str(), r)).collect());
    let lookup = |id: &str| -> Result<&RankingRecord, PipelineError> {
        let map = by_id
            .as_ref()
            .ok_or_else(|| PipelineError::Weights("this configuration needs ranking records".into()))?;
        map.get(id)
            .copied()
            .ok_or_else(|| PipelineError::Weights(format!("no record for trajectory {id}")))
    };
    let mut out = d.clone();
    if cfg.data_axis == DataAxis::ExpertOnly {
        let mut keep = Vec::new();
        for traj in out.trajectories {
            if lookup(&traj.id)?.qlg == Qlg::High {
                keep.push(traj);
            }
        }
        out.trajectories = keep;
    }
    for traj in &mut out.trajectories {
        let factor = match cfg.weight_axis {
            WeightAxis::Uniform => None,
            WeightAxis::Ranked => Some(lookup(&traj.id)?.weight),
        };
        for s in &mut traj.steps {
            s.w = match factor {
                None => 1.0,
                Some(f) => s.w * f,
            };
        }
    }
    if out.trajectories.is_empty() {
        return Err(PipelineError::Config("no training trajectories after filtering".into()));
    }
    Ok(out)
}

pub fn halide_fit(
    d: &DatasetManifest,
    weights: Option<&[RankingRecord]>,
    cfg: &RunConfig,
) -> Result<TrainedModel, PipelineError> {
    halide_fit_observed(d, weights, cfg, &mut NoopObserver)
}

pub fn halide_fit_observed(
    d: &DatasetManifest,
    weights: Option<&[RankingRecord]>,
    cfg: &RunConfig,
    observer: &mut dyn FitObserver,
) -> Result<TrainedModel, PipelineError> {
    cfg.validate()?;
    d.validate()?;
    let train = prepare(d, weights, cfg)?;
    let (centered, mean) = center_states(&train);
    let m = centered.state_dim;
    let a_count = centered.num_actions;

    let mut history = Vec::new();
    let (segmentation, mixture, regulator) = match cfg.hierarchy_axis {
        HierarchyAxis::Flat => {
            let segments: Vec<SubTrajectory> = centered
                .trajectories
                .iter()
                .map(|t| SubTrajectory::whole(t, 0))
                .collect();
            let em_cfg = EmConfig {
                num_policies: 1,
                seed: derive_seed(cfg.seed, "em/0"),
                ..cfg.em.clone()
            };
            observer.em(0);
            let fit = em_edm_fit_with_actions(&segments, &em_cfg, m, a_count)?;
            history.push(OuterIterationLog {
                segmentation_objective: Vec::new(),
                em_objective: fit.objective_trace.clone(),
                num_subtrajectories: segments.len(),
            });
            (None, fit.mixture, None)
        }
        HierarchyAxis::Hierarchical => {
            let q_count = cfg.seg.num_clusters;
            let o_count = cfg.em.num_policies;
            let seg_cfg = SegmentationConfig {
                seed: derive_seed(cfg.seed, "segmentation"),
                ..cfg.seg.clone()
            };
            let mut r_bar: Vec<Vec<f64>> = centered.trajectories.iter().map(|t| vec![1.0; t.len()]).collect();
            let mut last = None;
            for k in 0..cfg.outer_iterations {
                observer.segmentation(k);
                let seg = rmt_ticc_fit(&centered, &r_bar, &seg_cfg)?;
                let segments: Vec<SubTrajectory> = centered
                    .trajectories
                    .iter()
                    .zip(&seg.assignments)
                    .flat_map(|(t, a)| cut_subtrajectories(t, &a.labels))
                    .collect();
                let em_cfg = EmConfig {
                    seed: derive_seed(cfg.seed, &format!("em/{k}")),
                    ..cfg.em.clone()
                };
                observer.em(k);
                let fit = em_edm_fit_with_actions(&segments, &em_cfg, m, a_count)?;
                observer.regulator(k);
                let hl = build_high_level(&segments, &fit.hard_labels, q_count, o_count)?;
                let reg = maxent_irl_fit(&hl, &cfg.irl)?;
                r_bar = distribute_reward(&reg, &seg.assignments, &segments, &fit.hard_labels)?;
                observer.iteration_end(
                    k,
                    &IterationOutcome {
                        assignments: &seg.assignments,
                        segments: &segments,
                        hard_labels: &fit.hard_labels,
                    },
                );
                log::debug!(
                    "outer iteration {k}: {} sub-trajectories, segmentation {} rounds, em {} iterations",
                    segments.len(),
                    seg.iterations,
                    fit.iterations
                );
                history.push(OuterIterationLog {
                    segmentation_objective: seg.objective_trace.clone(),
                    em_objective: fit.objective_trace.clone(),
                    num_subtrajectories: segments.len(),
                });
                last = Some((seg, fit, reg));
            }
            let (seg, fit, reg) = last.expect("K >= 1");
            let artifact = SegmentationArtifact {
                penalty: seg.penalty(cfg.seg.reward_coupling),
                models: seg.models,
                omega: cfg.seg.omega,
            };
            (Some(artifact), fit.mixture, Some(reg))
        }
    };
    let mut mixture = mixture;
    mixture.responsibilities = Vec::new();
    Ok(TrainedModel {
        config: cfg.clone(),
        config_hash: cfg.hash(),
        seed: cfg.seed,
        state_dim: m,
        num_actions: a_count,
        state_mean: mean,
        segmentation,
        mixture,
        regulator,
        history,
    })
}


/// Segmentation run on its own, as done by the first outer iteration with
/// `r̄ ≡ 1`. Returns the fit and the state mean it was centered with.
pub fn segment_dataset(d: &DatasetManifest, cfg: &RunConfig) -> Result<(SegmentationFit, Vec<f64>), PipelineError> {
    cfg.validate()?;
    d.validate()?;
    let (centered, mean) = center_states(d);
    let seg_cfg = SegmentationConfig {
        seed: derive_seed(cfg.seed, "segmentation"),
        ..cfg.seg.clone()
    };
    let ones: Vec<Vec<f64>> = centered.trajectories.iter().map(|t| vec![1.0; t.len()]).collect();
    Ok((rmt_ticc_fit(&centered, &ones, &seg_cfg)?, mean))
}

/// One EM and regulator pass over a fixed segmentation.
pub fn train_on_segmentation(
    d: &DatasetManifest,
    weights: Option<&[RankingRecord]>,
    cfg: &RunConfig,
    segmentation: SegmentationArtifact,
    state_mean: &[f64],
    assignments: &[Assignment],
) -> Result<TrainedModel, PipelineError> {
    cfg.validate()?;
    d.validate()?;
    if state_mean.len() != d.state_dim {
        return Err(PipelineError::Config(format!(
            "segmentation state mean has {} entries, dataset has state_dim {}",
            state_mean.len(),
            d.state_dim
        )));
    }
    let by_id: HashMap<&str, &Assignment> = assignments.iter().map(|a| (a.trajectory_id.as_str(), a)).collect();
    let mut train = prepare(d, weights, cfg)?;
    let q_count = segmentation.models.len();
    let mut segments = Vec::new();
    for traj in &mut train.trajectories {
        apply_centering(traj, state_mean);
        let a = by_id
            .get(traj.id.as_str())
            .ok_or_else(|| PipelineError::Config(format!("no segmentation for trajectory {}", traj.id)))?;
        if a.labels.len() != traj.len() || a.labels.iter().any(|&q| q >= q_count) {
            return Err(PipelineError::Config(format!(
                "segmentation of trajectory {} does not match its {} steps and {q_count} clusters",
                traj.id,
                traj.len()
            )));
        }
        segments.extend(cut_subtrajectories(traj, &a.labels));
    }
    let em_cfg = EmConfig {
        seed: derive_seed(cfg.seed, "em/0"),
        ..cfg.em.clone()
    };
    let fit = em_edm_fit_with_actions(&segments, &em_cfg, train.state_dim, train.num_actions)?;
    let hl = build_high_level(&segments, &fit.hard_labels, q_count, cfg.em.num_policies)?;
    let regulator = maxent_irl_fit(&hl, &cfg.irl)?;
    let mut mixture = fit.mixture;
    mixture.responsibilities = Vec::new();
    Ok(TrainedModel {
        config: cfg.clone(),
        config_hash: cfg.hash(),
        seed: cfg.seed,
        state_dim: train.state_dim,
        num_actions: train.num_actions,
        state_mean: state_mean.to_vec(),
        segmentation: Some(segmentation),
        mixture,
        regulator: Some(regulator),
        history: vec![OuterIterationLog {
            segmentation_objective: Vec::new(),
            em_objective: fit.objective_trace,
            num_subtrajectories: segments.len(),
        }],
    })
}
/// The nine compared configurations, in table order.
pub fn grid_configs(base: &RunConfig) -> Vec<(&'static str, RunConfig)> {
    use DataAxis::*;
    use HierarchyAxis::*;
    use WeightAxis::*;
    let make = |data, weight, hier| RunConfig {
        data_axis: data,
        weight_axis: weight,
        hierarchy_axis: hier,
        ..base.clone()
    };
    let mut bc = make(ExpertOnly, Uniform, Flat);
    bc.em.lambda_edm = 0.0;
    vec![
        ("BC", bc),
        ("EDM(E)", make(ExpertOnly, Uniform, Flat)),
        ("THEMES", make(ExpertOnly, Uniform, Hierarchical)),
        ("EDM_W(E)", make(ExpertOnly, Ranked, Flat)),
        ("HALIDE_0", make(ExpertOnly, Ranked, Hierarchical)),
        ("EDM(E+I)", make(ExpertPlusImperfect, Uniform, Flat)),
        ("HALIDE_1", make(ExpertPlusImperfect, Uniform, Hierarchical)),
        ("EDM_W(E+I)", make(ExpertPlusImperfect, Ranked, Flat)),
        ("HALIDE", make(ExpertPlusImperfect, Ranked, Hierarchical)),
    ]
}

/// File-system friendly form of a method name.
pub fn method_slug(name: &str) -> String {
    name.replace("(E+I)", "_EI").replace("(E)", "_E")
}

/// Trains every grid configuration; results keep table order.
pub fn baseline_grid(
    d: &DatasetManifest,
    weights: Option<&[RankingRecord]>,
    base: &RunConfig,
) -> Result<Vec<(String, TrainedModel)>, PipelineError> {
    grid_configs(base)
        .into_par_iter()
        .map(|(name, cfg)| Ok((name.to_string(), halide_fit(d, weights, &cfg)?)))
        .collect()
}

/// Per-step action distributions. Step `t` uses only steps `0..=t`; the
/// action at `t` enters the cluster belief after its prediction is made.
pub fn predict_trajectory(model: &TrainedModel, traj: &Trajectory) -> Result<Vec<Vec<f64>>, PipelineError> {
    for s in &traj.steps {
        if s.x.len() != model.state_dim {
            return Err(PipelineError::Dimension {
                id: traj.id.clone(),
                expected: model.state_dim,
                got: s.x.len(),
            });
        }
        if s.a >= model.num_actions {
            return Err(PipelineError::Config(format!(
                "trajectory {}: action {} outside 0..{}",
                traj.id, s.a, model.num_actions
            )));
        }
    }
    let mut centered = traj.clone();
    apply_centering(&mut centered, &model.state_mean);
    let labels = match &model.segmentation {
        Some(seg) => {
            let windows = windowize(&centered, seg.omega);
            let ones = vec![1.0; windows.len()];
            causal_assign(&windows, &seg.models, &ones, &seg.penalty)
        }
        None => vec![0; centered.len()],
    };
    let mixture = &model.mixture;
    let mut belief = mixture.priors.clone();
    let mut out = Vec::with_capacity(centered.len());
    for (t, s) in centered.steps.iter().enumerate() {
        if t > 0 && labels[t] != labels[t - 1] {
            belief.clone_from(&mixture.priors);
        }
        out.push(mixture_predict(mixture, &s.x, &belief));
        belief = update_belief(mixture, &belief, &s.x, s.a);
    }
    Ok(out)
}
