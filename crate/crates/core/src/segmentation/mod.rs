//! Reward-regulated, time-aware Toeplitz inverse-covariance clustering.
//!
//! Windows of stacked states are modeled as zero-mean Gaussians, one sparse
//! block-Toeplitz precision per cluster. Cluster labels are chosen by exact
//! dynamic programming with a switch cost that decays with the time gap and
//! scales with the regulated reward of the step.

pub mod dp;
pub mod glasso;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{median_dt, windowize, DatasetManifest, Step, Trajectory, Window};
use crate::kmeans::kmeans_pp;
use crate::linalg::{logdet_spd, max_asymmetry, min_eigenvalue, quad_form};

pub use glasso::{glasso_objective, toeplitz_glasso, AdmmParams, GlassoFit, ToeplitzGroups};

/// Ridge added to every empirical window covariance.
pub const COV_RIDGE: f64 = 1e-6;

const LN_2PI: f64 = 1.837_877_066_409_345_3;

#[derive(Debug, Error)]
pub enum SegmentationError {
    #[error("invalid input: {0}")]
    Input(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToeplitzClusterModel {
    #[serde(with = "crate::linalg::matrix_rows")]
    pub theta: DMatrix<f64>,
    pub logdet: f64,
    pub state_dim: usize,
    pub omega: usize,
}

impl ToeplitzClusterModel {
    pub fn new(theta: DMatrix<f64>, state_dim: usize, omega: usize) -> Result<Self, SegmentationError> {
        let n = state_dim * omega;
        if theta.nrows() != n || theta.ncols() != n {
            return Err(SegmentationError::Input(format!(
                "precision must be {n}x{n}, got {}x{}",
                theta.nrows(),
                theta.ncols()
            )));
        }
        let logdet = logdet_spd(&theta)
            .ok_or_else(|| SegmentationError::Numerical("precision is not positive-definite".into()))?;
        Ok(Self {
            theta,
            logdet,
            state_dim,
            omega,
        })
    }

    pub fn dim(&self) -> usize {
        self.state_dim * self.omega
    }

    /// (asymmetry, smallest eigenvalue, Toeplitz tie violation).
    pub fn diagnostics(&self) -> (f64, f64, f64) {
        let groups = ToeplitzGroups::new(self.state_dim, self.omega);
        (
            max_asymmetry(&self.theta),
            min_eigenvalue(&self.theta),
            groups.violation(&self.theta),
        )
    }

    pub fn l1_off_diagonal(&self) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.theta.nrows() {
            for j in 0..self.theta.ncols() {
                if i != j {
                    acc += self.theta[(i, j)].abs();
                }
            }
        }
        acc
    }
}

/// `S = (1/n) sum X X^T + eps I`.
pub fn empirical_cov<'a, I>(windows: I, dim: usize) -> DMatrix<f64>
where
    I: IntoIterator<Item = &'a [f64]>,
{
    let mut s = DMatrix::<f64>::zeros(dim, dim);
    let mut n = 0usize;
    for x in windows {
        assert_eq!(x.len(), dim);
        for j in 0..dim {
            for i in 0..=j {
                s[(i, j)] += x[i] * x[j];
            }
        }
        n += 1;
    }
    if n > 0 {
        s /= n as f64;
    }
    for j in 0..dim {
        for i in 0..j {
            s[(j, i)] = s[(i, j)];
        }
        s[(j, j)] += COV_RIDGE;
    }
    s
}

/// Zero-mean Gaussian negative log-likelihood of one window.
pub fn window_nll(x: &[f64], model: &ToeplitzClusterModel) -> f64 {
    0.5 * quad_form(&model.theta, x) - 0.5 * model.logdet + 0.5 * x.len() as f64 * LN_2PI
}

/// Direction in which regulated reward modulates the switch cost.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardCoupling {
    /// Factor `1 + r`: high reward makes switching more expensive.
    #[default]
    Strengthen,
    /// Factor `2 - r`: high reward makes switching cheaper.
    Weaken,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SwitchPenalty {
    pub beta: f64,
    pub tau: f64,
    pub coupling: RewardCoupling,
}

impl SwitchPenalty {
    pub fn new(beta: f64, tau: f64) -> Self {
        Self {
            beta,
            tau,
            coupling: RewardCoupling::Strengthen,
        }
    }

    /// Cost charged when the label changes at a step with gap `dt` and
    /// regulated reward `r_bar`.
    pub fn switch_cost(&self, dt: f64, r_bar: f64) -> f64 {
        let factor = match self.coupling {
            RewardCoupling::Strengthen => 1.0 + r_bar,
            RewardCoupling::Weaken => 2.0 - r_bar,
        };
        let decay = (-dt / self.tau).exp();
        // exp underflows to 0 for huge gaps; avoid 0 * inf with beta = inf.
        if decay == 0.0 {
            0.0
        } else {
            self.beta * decay * factor
        }
    }
}

/// Consistency cost between consecutive labels; zero at a trajectory's first
/// window (`prev_q = None`) and whenever the label is kept.
pub fn consistency_penalty(
    prev_q: Option<usize>,
    q: usize,
    dt: f64,
    r_bar: f64,
    penalty: &SwitchPenalty,
) -> f64 {
    match prev_q {
        Some(p) if p != q => penalty.switch_cost(dt, r_bar),
        _ => 0.0,
    }
}

fn switch_costs(windows: &[Window], r_bar: &[f64], penalty: &SwitchPenalty) -> Vec<f64> {
    windows
        .iter()
        .zip(r_bar)
        .enumerate()
        .map(|(t, (w, r))| if t == 0 { 0.0 } else { penalty.switch_cost(w.dt, *r) })
        .collect()
}

fn cost_table(windows: &[Window], models: &[ToeplitzClusterModel], offsets: &[f64]) -> Vec<Vec<f64>> {
    windows
        .iter()
        .map(|w| {
            models
                .iter()
                .zip(offsets)
                .map(|(m, off)| window_nll(&w.values, m) + off)
                .collect()
        })
        .collect()
}

/// Cluster labels for one trajectory's windows.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assignment {
    pub trajectory_id: String,
    pub labels: Vec<usize>,
}

/// Optimal labels minimizing summed window NLL plus switch costs.
pub fn dp_assign(
    windows: &[Window],
    models: &[ToeplitzClusterModel],
    r_bar: &[f64],
    penalty: &SwitchPenalty,
) -> Vec<usize> {
    let offsets = vec![0.0; models.len()];
    let costs = cost_table(windows, models, &offsets);
    dp::assign_path(&costs, &switch_costs(windows, r_bar, penalty)).0
}

/// Labels computed from past and present windows only.
pub fn causal_assign(
    windows: &[Window],
    models: &[ToeplitzClusterModel],
    r_bar: &[f64],
    penalty: &SwitchPenalty,
) -> Vec<usize> {
    let offsets = vec![0.0; models.len()];
    let costs = cost_table(windows, models, &offsets);
    dp::causal_path(&costs, &switch_costs(windows, r_bar, penalty))
}

/// How `beta` is turned into the switch-cost scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BetaScale {
    /// Use `beta` as given.
    Absolute,
    /// Multiply `beta` by the mean absolute window NLL under the first
    /// fitted models.
    #[default]
    MeanNll,
}

fn default_omega() -> usize {
    3
}
fn default_lambda_seg() -> f64 {
    0.11
}
fn default_beta() -> f64 {
    0.5
}
fn default_admm_rho() -> f64 {
    1.0
}
fn default_admm_tol() -> f64 {
    1e-5
}
fn default_admm_max_iter() -> usize {
    1000
}
fn default_max_ticc_iter() -> usize {
    50
}
fn default_q() -> usize {
    3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentationConfig {
    #[serde(rename = "Q", default = "default_q")]
    pub num_clusters: usize,
    #[serde(default = "default_omega")]
    pub omega: usize,
    #[serde(default = "default_lambda_seg")]
    pub lambda_seg: f64,
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default)]
    pub beta_scale: BetaScale,
    /// Time-decay constant in seconds; the dataset's median step gap when
    /// absent.
    #[serde(default)]
    pub tau: Option<f64>,
    #[serde(default)]
    pub reward_coupling: RewardCoupling,
    #[serde(default = "default_admm_rho")]
    pub admm_rho: f64,
    #[serde(default = "default_admm_tol")]
    pub admm_tol: f64,
    #[serde(default = "default_admm_max_iter")]
    pub admm_max_iter: usize,
    #[serde(default = "default_max_ticc_iter")]
    pub max_ticc_iter: usize,
    #[serde(default)]
    pub seed: u64,
}

impl Default for SegmentationConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults deserialize")
    }
}

impl SegmentationConfig {
    pub fn admm(&self) -> AdmmParams {
        AdmmParams {
            rho: self.admm_rho,
            tol: self.admm_tol,
            max_iter: self.admm_max_iter,
        }
    }

    pub fn validate(&self) -> Result<(), SegmentationError> {
        let positive = [
            ("lambda_seg", self.lambda_seg >= 0.0),
            ("beta", self.beta >= 0.0),
            ("tau", self.tau.is_none_or(|t| t > 0.0)),
            ("admm_rho", self.admm_rho > 0.0),
            ("admm_tol", self.admm_tol > 0.0),
            ("admm_max_iter", self.admm_max_iter > 0),
            ("max_ticc_iter", self.max_ticc_iter > 0),
            ("Q", self.num_clusters >= 1),
            ("omega", self.omega >= 1),
        ];
        for (name, ok) in positive {
            if !ok {
                return Err(SegmentationError::Input(format!("bad value for {name}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SegmentationFit {
    pub models: Vec<ToeplitzClusterModel>,
    pub assignments: Vec<Assignment>,
    /// Objective after each model-fitting round.
    pub objective_trace: Vec<f64>,
    /// Rounds whose assignment had to be repaired for empty clusters.
    pub rescued_rounds: Vec<usize>,
    pub beta_effective: f64,
    pub tau: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl SegmentationFit {
    pub fn penalty(&self, coupling: RewardCoupling) -> SwitchPenalty {
        SwitchPenalty {
            beta: self.beta_effective,
            tau: self.tau,
            coupling,
        }
    }
}

struct WindowSet {
    per_traj: Vec<Vec<Window>>,
    dim: usize,
}

impl WindowSet {
    fn total(&self) -> usize {
        self.per_traj.iter().map(Vec::len).sum()
    }

    fn iter_labeled<'a>(
        &'a self,
        labels: &'a [Vec<usize>],
    ) -> impl Iterator<Item = (&'a Window, usize)> + 'a {
        self.per_traj
            .iter()
            .zip(labels)
            .flat_map(|(ws, ls)| ws.iter().zip(ls.iter().copied()))
    }
}

/// Per-cluster glasso on the windows currently holding each label. The
/// penalty is divided by half the cluster size so that the summed objective
/// carries a size-independent sparsity term.
fn fit_models(
    set: &WindowSet,
    labels: &[Vec<usize>],
    cfg: &SegmentationConfig,
) -> Result<Vec<ToeplitzClusterModel>, SegmentationError> {
    let q_count = cfg.num_clusters;
    let mut members: Vec<Vec<&[f64]>> = vec![Vec::new(); q_count];
    for (w, q) in set.iter_labeled(labels) {
        members[q].push(&w.values);
    }
    let admm = cfg.admm();
    let m = set.dim / cfg.omega;
    members
        .par_iter()
        .map(|xs| {
            let s = empirical_cov(xs.iter().copied(), set.dim);
            let lambda = if xs.is_empty() {
                cfg.lambda_seg
            } else {
                2.0 * cfg.lambda_seg / xs.len() as f64
            };
            toeplitz_glasso(&s, lambda, m, cfg.omega, &admm).map(|f| f.model)
        })
        .collect()
}

/// Per-window cost offset contributed by the covariance ridge.
fn ridge_offsets(models: &[ToeplitzClusterModel]) -> Vec<f64> {
    models
        .iter()
        .map(|m| 0.5 * COV_RIDGE * m.theta.trace())
        .collect()
}

fn objective(
    set: &WindowSet,
    labels: &[Vec<usize>],
    models: &[ToeplitzClusterModel],
    r_bar: &[Vec<f64>],
    penalty: &SwitchPenalty,
    lambda_seg: f64,
) -> f64 {
    let offsets = ridge_offsets(models);
    let mut total = 0.0;
    for ((ws, ls), rs) in set.per_traj.iter().zip(labels).zip(r_bar) {
        let costs = cost_table(ws, models, &offsets);
        total += dp::path_cost(&costs, &switch_costs(ws, rs, penalty), ls);
    }
    total + models.iter().map(|m| lambda_seg * m.l1_off_diagonal()).sum::<f64>()
}

/// Moves the above-median-NLL half of the largest cluster into each empty
/// cluster. Returns whether anything changed.
fn rescue_empty(
    set: &WindowSet,
    labels: &mut [Vec<usize>],
    models: Option<&[ToeplitzClusterModel]>,
    q_count: usize,
) -> bool {
    let mut changed = false;
    loop {
        let mut counts = vec![0usize; q_count];
        for ls in labels.iter() {
            for &q in ls {
                counts[q] += 1;
            }
        }
        let Some(empty) = counts.iter().position(|&c| c == 0) else {
            return changed;
        };
        let largest = (0..q_count).fold(0, |b, q| if counts[q] > counts[b] { q } else { b });
        if counts[largest] < 2 {
            return changed;
        }
        let mut scored: Vec<(f64, usize, usize)> = Vec::with_capacity(counts[largest]);
        for (ti, (ws, ls)) in set.per_traj.iter().zip(labels.iter()).enumerate() {
            for (k, (w, &q)) in ws.iter().zip(ls).enumerate() {
                if q == largest {
                    let score = match models {
                        Some(ms) => window_nll(&w.values, &ms[largest]),
                        None => w.values.iter().map(|v| v * v).sum(),
                    };
                    scored.push((score, ti, k));
                }
            }
        }
        scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        let half = scored.len() / 2;
        for &(_, ti, k) in &scored[half..] {
            labels[ti][k] = empty;
        }
        changed = true;
    }
}

/// Alternates exact label assignment and per-cluster Toeplitz glasso until
/// the labels stop changing.
///
/// `r_bar` holds one regulated reward per step per trajectory, in dataset
/// order; pass all ones for the first outer round. States must already be
/// centered.
pub fn rmt_ticc_fit(
    d: &DatasetManifest,
    r_bar: &[Vec<f64>],
    cfg: &SegmentationConfig,
) -> Result<SegmentationFit, SegmentationError> {
    cfg.validate()?;
    if r_bar.len() != d.len()
        || d
            .trajectories
            .iter()
            .zip(r_bar)
            .any(|(t, r)| t.len() != r.len())
    {
        return Err(SegmentationError::Input(
            "r_bar must hold one value per step of every trajectory".into(),
        ));
    }
    let set = WindowSet {
        per_traj: d
            .trajectories
            .par_iter()
            .map(|t| windowize(t, cfg.omega))
            .collect(),
        dim: d.state_dim * cfg.omega,
    };
    let total = set.total();
    let q_count = cfg.num_clusters;
    if q_count > total {
        return Err(SegmentationError::Input(format!(
            "Q = {q_count} exceeds the number of windows ({total})"
        )));
    }
    let tau = cfg.tau.unwrap_or_else(|| median_dt(d));

    let flat: Vec<&[f64]> = set
        .per_traj
        .iter()
        .flat_map(|ws| ws.iter().map(|w| w.values.as_slice()))
        .collect();
    let init = if q_count == 1 {
        vec![0; total]
    } else {
        kmeans_pp(&flat, q_count, cfg.seed, 100)
    };
    let mut labels: Vec<Vec<usize>> = Vec::with_capacity(d.len());
    let mut offset = 0;
    for ws in &set.per_traj {
        labels.push(init[offset..offset + ws.len()].to_vec());
        offset += ws.len();
    }

    let mut rescued_rounds = Vec::new();
    if rescue_empty(&set, &mut labels, None, q_count) {
        rescued_rounds.push(0);
    }
    let mut models = fit_models(&set, &labels, cfg)?;

    let beta_effective = match cfg.beta_scale {
        BetaScale::Absolute => cfg.beta,
        BetaScale::MeanNll => {
            let mean_abs = set
                .iter_labeled(&labels)
                .map(|(w, q)| window_nll(&w.values, &models[q]).abs())
                .sum::<f64>()
                / total as f64;
            cfg.beta * mean_abs.max(1.0)
        }
    };
    let penalty = SwitchPenalty {
        beta: beta_effective,
        tau,
        coupling: cfg.reward_coupling,
    };

    let mut trace = vec![objective(&set, &labels, &models, r_bar, &penalty, cfg.lambda_seg)];
    let mut converged = false;
    let mut iterations = 0;
    for round in 1..=cfg.max_ticc_iter {
        iterations = round;
        let offsets = ridge_offsets(&models);
        let mut next: Vec<Vec<usize>> = set
            .per_traj
            .par_iter()
            .zip(r_bar.par_iter())
            .map(|(ws, rs)| {
                let costs = cost_table(ws, &models, &offsets);
                dp::assign_path(&costs, &switch_costs(ws, rs, &penalty)).0
            })
            .collect();
        if rescue_empty(&set, &mut next, Some(&models), q_count) {
            rescued_rounds.push(round);
        }
        if next == labels {
            converged = true;
            break;
        }
        labels = next;
        models = fit_models(&set, &labels, cfg)?;
        trace.push(objective(&set, &labels, &models, r_bar, &penalty, cfg.lambda_seg));
    }
    log::debug!(
        "segmentation: {iterations} rounds, converged = {converged}, objective {:.4}",
        trace.last().copied().unwrap_or(f64::NAN)
    );

    let assignments = d
        .trajectories
        .iter()
        .zip(labels)
        .map(|(t, l)| Assignment {
            trajectory_id: t.id.clone(),
            labels: l,
        })
        .collect();
    Ok(SegmentationFit {
        models,
        assignments,
        objective_trace: trace,
        rescued_rounds,
        beta_effective,
        tau,
        iterations,
        converged,
    })
}

/// A maximal run of steps sharing one cluster label; `end` is exclusive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubTrajectory {
    pub owner: String,
    pub start: usize,
    pub end: usize,
    pub high_state: usize,
    pub steps: Vec<Step>,
}

impl SubTrajectory {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }

    /// Whole trajectory as a single segment.
    pub fn whole(traj: &Trajectory, high_state: usize) -> Self {
        Self {
            owner: traj.id.clone(),
            start: 0,
            end: traj.len(),
            high_state,
            steps: traj.steps.clone(),
        }
    }
}

/// Run-length split of a trajectory at label changes.
pub fn cut_subtrajectories(traj: &Trajectory, labels: &[usize]) -> Vec<SubTrajectory> {
    assert_eq!(traj.len(), labels.len(), "assignment length must equal T");
    let mut out = Vec::new();
    let mut start = 0;
    for t in 1..=labels.len() {
        if t == labels.len() || labels[t] != labels[start] {
            out.push(SubTrajectory {
                owner: traj.id.clone(),
                start,
                end: t,
                high_state: labels[start],
                steps: traj.steps[start..t].to_vec(),
            });
            start = t;
        }
    }
    out
}

/// Labels reconstructed from an ordered segmentation.
pub fn labels_from_segments(segments: &[SubTrajectory]) -> Vec<usize> {
    segments
        .iter()
        .flat_map(|s| std::iter::repeat_n(s.high_state, s.len()))
        .collect()
}
