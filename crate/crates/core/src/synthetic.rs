//! Mixed-quality demonstration datasets with known regimes, policies and
//! demonstrator quality.

use nalgebra::{DMatrix, DVector};
use pathfinding::prelude::{kuhn_munkres, Matrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{DatasetManifest, Step, Trajectory};
use crate::pipeline::derive_seed;
use crate::policy::energy::softmax;
use crate::policy::{Architecture, EnergyPolicy};
use crate::segmentation::{Assignment, SubTrajectory};
use crate::stats::spearman;

#[derive(Debug, Error)]
pub enum SyntheticError {
    #[error("invalid generator spec: {0}")]
    Spec(String),
    #[error("quality signal rank correlation {0:.3} is below 0.8")]
    WeakSignal(f64),
    #[error("recovery inputs are misaligned: {0}")]
    Misaligned(String),
}

fn d_q() -> usize {
    3
}
fn d_o() -> usize {
    3
}
fn d_m() -> usize {
    6
}
fn d_a() -> usize {
    3
}
fn d_n() -> usize {
    60
}
fn d_t() -> (usize, usize) {
    (100, 140)
}
fn d_self_loop() -> f64 {
    0.95
}
fn d_ar() -> (f64, f64) {
    (0.3, 0.8)
}
fn d_band() -> (f64, f64) {
    (0.2, 0.45)
}
fn d_scale() -> (f64, f64) {
    (0.5, 2.0)
}
fn d_mean() -> f64 {
    1.5
}
fn d_sep() -> f64 {
    3.0
}
fn d_kappa() -> Vec<f64> {
    vec![0.95, 0.4]
}
fn d_noise() -> f64 {
    0.25
}
fn d_cohorts() -> Vec<String> {
    ["S21", "F21", "S22", "F22"].iter().map(|s| s.to_string()).collect()
}
fn d_true() -> bool {
    true
}

/// Generative model settings. Ranges are inclusive `[lo, hi]` pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSpec {
    #[serde(rename = "Q_true", default = "d_q")]
    pub num_regimes: usize,
    #[serde(rename = "O_true", default = "d_o")]
    pub num_policies: usize,
    #[serde(rename = "m", default = "d_m")]
    pub state_dim: usize,
    #[serde(rename = "A", default = "d_a")]
    pub num_actions: usize,
    #[serde(rename = "N", default = "d_n")]
    pub num_trajectories: usize,
    #[serde(rename = "T", default = "d_t")]
    pub length: (usize, usize),
    /// Full regime transition matrix; when absent, `self_loop` on the
    /// diagonal and the remainder spread evenly.
    #[serde(default)]
    pub transitions: Option<Vec<Vec<f64>>>,
    #[serde(default = "d_self_loop")]
    pub self_loop: f64,
    /// Range of per-regime autoregression coefficients.
    #[serde(default = "d_ar")]
    pub ar_coef: (f64, f64),
    /// Range of absolute off-diagonal entries in the banded unit precision.
    #[serde(default = "d_band")]
    pub band: (f64, f64),
    /// Range of per-regime variance multipliers.
    #[serde(default = "d_scale")]
    pub variance_scale: (f64, f64),
    /// Per-regime state means have norm `mean_scale * sqrt(m)`.
    #[serde(default = "d_mean")]
    pub mean_scale: f64,
    #[serde(rename = "separation", default = "d_sep")]
    pub separation: f64,
    /// Ground-truth policy follows the regime (`o = q mod O_true`); otherwise
    /// each regime run draws its policy uniformly.
    #[serde(default = "d_true")]
    pub policy_follows_regime: bool,
    /// Demonstrator qualities, cycled over trajectories.
    #[serde(default = "d_kappa")]
    pub kappa: Vec<f64>,
    #[serde(default = "d_noise")]
    pub signal_noise: f64,
    /// Trajectories are split into contiguous blocks, one per cohort.
    #[serde(default = "d_cohorts")]
    pub cohorts: Vec<String>,
    #[serde(default)]
    pub seed: u64,
}

impl Default for GeneratorSpec {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults deserialize")
    }
}

impl GeneratorSpec {
    pub fn transition_matrix(&self) -> Vec<Vec<f64>> {
        if let Some(t) = &self.transitions {
            return t.clone();
        }
        let q = self.num_regimes;
        (0..q)
            .map(|i| {
                (0..q)
                    .map(|j| {
                        if q == 1 {
                            1.0
                        } else if i == j {
                            self.self_loop
                        } else {
                            (1.0 - self.self_loop) / (q - 1) as f64
                        }
                    })
                    .collect()
            })
            .collect()
    }

    pub fn validate(&self) -> Result<(), SyntheticError> {
        let err = |m: &str| Err(SyntheticError::Spec(m.to_string()));
        if self.num_regimes == 0 || self.num_policies == 0 || self.state_dim == 0 || self.num_trajectories == 0 {
            return err("counts must be positive");
        }
        if self.num_actions < 2 {
            return err("need at least two actions");
        }
        if self.length.0 == 0 || self.length.0 > self.length.1 {
            return err("T range must satisfy 1 <= lo <= hi");
        }
        if !(0.0..=1.0).contains(&self.self_loop) {
            return err("self_loop outside [0, 1]");
        }
        let t = self.transition_matrix();
        if t.len() != self.num_regimes
            || t.iter().any(|r| {
                r.len() != self.num_regimes
                    || r.iter().any(|p| !(*p >= 0.0))
                    || (r.iter().sum::<f64>() - 1.0).abs() > 1e-9
            })
        {
            return err("transition rows must be non-negative and sum to 1");
        }
        let (lo, hi) = self.ar_coef;
        if !(lo > -1.0 && hi < 1.0 && lo <= hi) {
            return err("ar_coef range must lie in (-1, 1)");
        }
        let (lo, hi) = self.band;
        if !(0.0 <= lo && lo <= hi && hi < 0.5) {
            return err("band range must lie in [0, 0.5)");
        }
        let (lo, hi) = self.variance_scale;
        if !(lo > 0.0 && lo <= hi) {
            return err("variance_scale range must be positive");
        }
        if !(self.mean_scale >= 0.0) {
            return err("mean_scale must be non-negative");
        }
        if !(self.separation >= 0.0) {
            return err("separation must be non-negative");
        }
        if self.kappa.is_empty() || self.kappa.iter().any(|k| !(*k > 0.0 && *k <= 1.0)) {
            return err("kappa values must lie in (0, 1]");
        }
        if !(self.signal_noise >= 0.0) {
            return err("signal_noise must be non-negative");
        }
        if self.cohorts.is_empty() || self.cohorts.len() > self.num_trajectories {
            return err("need between 1 and N cohorts");
        }
        Ok(())
    }
}

/// Per-regime state model: `x_t = mu_{q_t} + d_t` with
/// `d_t = rho_{q_t} d_{t-1} + e_t`, `e_t ~ N(0, (1-rho^2) P^-1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeModel {
    pub mean: Vec<f64>,
    pub ar_coef: f64,
    #[serde(with = "crate::linalg::matrix_rows")]
    pub precision: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrueSegment {
    pub start: usize,
    pub end: usize,
    pub regime: usize,
    pub policy: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryTruth {
    pub id: String,
    pub kappa: f64,
    pub z: f64,
    pub regimes: Vec<usize>,
    pub policies: Vec<usize>,
    pub segments: Vec<TrueSegment>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub spec: GeneratorSpec,
    pub regimes: Vec<RegimeModel>,
    pub policies: Vec<EnergyPolicy>,
    pub trajectories: Vec<TrajectoryTruth>,
}

impl GroundTruth {
    pub fn get(&self, id: &str) -> Option<&TrajectoryTruth> {
        self.trajectories.iter().find(|t| t.id == id)
    }
}

fn uniform_in(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..=hi)
    }
}

fn draw_regimes(spec: &GeneratorSpec, rng: &mut ChaCha8Rng) -> Vec<RegimeModel> {
    let m = spec.state_dim;
    let means = draw_means(spec, rng);
    means
        .into_iter()
        .map(|mean| {
            let ar_coef = uniform_in(rng, spec.ar_coef);
            let scale = uniform_in(rng, spec.variance_scale);
            let mut p = DMatrix::<f64>::identity(m, m);
            for i in 0..m.saturating_sub(1) {
                let mag = uniform_in(rng, spec.band);
                let v = if rng.random_bool(0.5) { mag } else { -mag };
                p[(i, i + 1)] = v;
                p[(i + 1, i)] = v;
            }
            RegimeModel {
                mean,
                ar_coef,
                precision: p / scale,
            }
        })
        .collect()
}

/// Regime means of norm `mean_scale * sqrt(m)`, along mutually orthogonal
/// random directions when `Q <= m` and independent ones otherwise.
fn draw_means(spec: &GeneratorSpec, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let m = spec.state_dim;
    let radius = spec.mean_scale * (m as f64).sqrt();
    let mut dirs: Vec<DVector<f64>> = Vec::new();
    for _ in 0..spec.num_regimes {
        let mut v = DVector::<f64>::from_fn(m, |_, _| StandardNormal.sample(rng));
        if dirs.len() < m {
            for d in &dirs {
                v -= d * d.dot(&v);
            }
        }
        let norm = v.norm();
        dirs.push(if norm > 0.0 { v / norm } else { v });
    }
    dirs.iter().map(|d| d.iter().map(|v| v * radius).collect()).collect()
}

fn draw_policies(spec: &GeneratorSpec, rng: &mut ChaCha8Rng) -> Vec<EnergyPolicy> {
    let (m, a) = (spec.state_dim, spec.num_actions);
    let normal = Normal::new(0.0, spec.separation / (m as f64).sqrt()).expect("valid normal");
    (0..spec.num_policies)
        .map(|_| {
            let mut pol = EnergyPolicy::new(Architecture::Linear, m, a, 0);
            for p in &mut pol.params[..a * m] {
                *p = normal.sample(rng);
            }
            pol
        })
        .collect()
}

fn sample_index(rng: &mut ChaCha8Rng, probs: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

fn logit(k: f64) -> f64 {
    // kappa = 1 would be infinite; cap the signal.
    let k = k.min(1.0 - 1e-6);
    (k / (1.0 - k)).ln()
}

/// Noise factors `L_q` with `L_q L_q^T = (1 - rho_q^2) P_q^-1`.
fn noise_factors(regimes: &[RegimeModel]) -> Vec<DMatrix<f64>> {
    regimes
        .iter()
        .map(|r| {
            let cov = r
                .precision
                .clone()
                .try_inverse()
                .expect("diagonally dominant precision is invertible");
            let cov = cov * (1.0 - r.ar_coef * r.ar_coef);
            let cov = (&cov + cov.transpose()) * 0.5;
            cov.cholesky().expect("covariance is PD").l()
        })
        .collect()
}

struct Context<'a> {
    spec: &'a GeneratorSpec,
    trans: Vec<Vec<f64>>,
    regimes: &'a [RegimeModel],
    factors: Vec<DMatrix<f64>>,
    policies: &'a [EnergyPolicy],
}

fn generate_one(ctx: &Context<'_>, n: usize, base_seed: u64) -> (Trajectory, TrajectoryTruth, f64) {
    let spec = ctx.spec;
    let mut rng = ChaCha8Rng::seed_from_u64(base_seed);
    rng.set_stream(n as u64);
    let (lo, hi) = spec.length;
    let t_len = rng.random_range(lo..=hi);
    let q_count = spec.num_regimes;
    let uniform_q = vec![1.0 / q_count as f64; q_count];
    let mut regimes = Vec::with_capacity(t_len);
    let mut q = sample_index(&mut rng, &uniform_q);
    for t in 0..t_len {
        if t > 0 {
            q = sample_index(&mut rng, &ctx.trans[q]);
        }
        regimes.push(q);
    }
    let mut segments: Vec<TrueSegment> = Vec::new();
    for (t, &q) in regimes.iter().enumerate() {
        match segments.last_mut() {
            Some(s) if s.regime == q => s.end = t + 1,
            _ => {
                let policy = if spec.policy_follows_regime {
                    q % spec.num_policies
                } else {
                    rng.random_range(0..spec.num_policies)
                };
                segments.push(TrueSegment {
                    start: t,
                    end: t + 1,
                    regime: q,
                    policy,
                });
            }
        }
    }
    let mut policies = vec![0; t_len];
    for s in &segments {
        policies[s.start..s.end].fill(s.policy);
    }

    let kappa = spec.kappa[n % spec.kappa.len()];
    let m = spec.state_dim;
    let a_count = spec.num_actions;
    let mut dev = DVector::<f64>::zeros(m);
    let mut steps = Vec::with_capacity(t_len);
    for t in 0..t_len {
        let reg = &ctx.regimes[regimes[t]];
        let e = DVector::<f64>::from_fn(m, |_, _| StandardNormal.sample(&mut rng));
        let noise = &ctx.factors[regimes[t]] * e;
        dev = if t == 0 {
            // Start from the stationary law of the first regime.
            noise / (1.0 - reg.ar_coef * reg.ar_coef).sqrt()
        } else {
            dev * reg.ar_coef + noise
        };
        let xs: Vec<f64> = dev.iter().zip(&reg.mean).map(|(d, mu)| d + mu).collect();
        let a = if rng.random_bool(kappa) {
            sample_index(&mut rng, &softmax(&ctx.policies[policies[t]].scores(&xs)))
        } else {
            rng.random_range(0..a_count)
        };
        steps.push(Step {
            t: t as f64,
            x: xs,
            a,
            w: 1.0,
        });
    }

    let z = logit(kappa) + spec.signal_noise * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng);
    let nlg = 0.6 * (z / 2.0).tanh();
    let pre: f64 = rng.random_range(0.2..0.6);
    let post = (pre + nlg * (1.0 - pre).sqrt()).clamp(0.0, 1.0);
    let cohort_idx = n * spec.cohorts.len() / spec.num_trajectories;
    let id = format!("s{n:04}");
    let traj = Trajectory {
        id: id.clone(),
        cohort: spec.cohorts[cohort_idx].clone(),
        pretest: Some(pre),
        posttest: Some(post),
        steps,
    };
    let truth = TrajectoryTruth {
        id,
        kappa,
        z,
        regimes,
        policies,
        segments,
    };
    (traj, truth, nlg)
}

pub fn generate(spec: &GeneratorSpec) -> Result<(DatasetManifest, GroundTruth), SyntheticError> {
    spec.validate()?;
    let mut model_rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, "synthetic/model"));
    let regimes = draw_regimes(spec, &mut model_rng);
    let policies = draw_policies(spec, &mut model_rng);
    let ctx = Context {
        spec,
        trans: spec.transition_matrix(),
        factors: noise_factors(&regimes),
        regimes: &regimes,
        policies: &policies,
    };
    let base = derive_seed(spec.seed, "synthetic/trajectories");
    let generated: Vec<(Trajectory, TrajectoryTruth, f64)> = (0..spec.num_trajectories)
        .into_par_iter()
        .map(|n| generate_one(&ctx, n, base))
        .collect();

    let kappas: Vec<f64> = generated.iter().map(|g| g.1.kappa).collect();
    let zs: Vec<f64> = generated.iter().map(|g| g.1.z).collect();
    let nlgs: Vec<f64> = generated.iter().map(|g| g.2).collect();
    for signal in [&zs, &nlgs] {
        if let Some(rho) = spearman(signal, &kappas) {
            if rho < 0.8 {
                return Err(SyntheticError::WeakSignal(rho));
            }
        }
    }

    let (trajectories, truths): (Vec<_>, Vec<_>) = generated.into_iter().map(|(t, g, _)| (t, g)).unzip();
    let manifest = DatasetManifest {
        state_dim: spec.state_dim,
        num_actions: spec.num_actions,
        trajectories,
    };
    manifest
        .validate()
        .map_err(|e| SyntheticError::Spec(format!("generated data failed validation: {e}")))?;
    Ok((
        manifest,
        GroundTruth {
            spec: spec.clone(),
            regimes,
            policies,
            trajectories: truths,
        },
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryReport {
    /// Step-level segmentation accuracy after optimal label matching.
    pub segmentation_accuracy: f64,
    /// ARI over induced sub-trajectories; each one's true label is the
    /// majority ground-truth policy among its steps.
    pub policy_ari: f64,
    /// ARI over steps, each step carrying its sub-trajectory's label.
    pub policy_ari_steps: f64,
    /// Predicted-to-true state-cluster mapping.
    pub matching: Vec<usize>,
}

/// Fraction of items on the diagonal after the best one-to-one relabeling
/// of `pred` onto `truth`.
pub fn matched_accuracy(pred: &[usize], truth: &[usize]) -> (f64, Vec<usize>) {
    let kp = pred.iter().max().map_or(0, |v| v + 1);
    let kt = truth.iter().max().map_or(0, |v| v + 1);
    let k = kp.max(kt).max(1);
    let mut counts = Matrix::new(k, k, 0i64);
    for (&p, &t) in pred.iter().zip(truth) {
        counts[(p, t)] += 1;
    }
    let (total, assignment) = kuhn_munkres(&counts);
    let acc = if pred.is_empty() { 1.0 } else { total as f64 / pred.len() as f64 };
    (acc, assignment[..kp].to_vec())
}

fn choose2(n: f64) -> f64 {
    n * (n - 1.0) / 2.0
}

/// Adjusted Rand index; 1 when both partitions are trivial and identical.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> f64 {
    let ka = a.iter().max().map_or(0, |v| v + 1);
    let kb = b.iter().max().map_or(0, |v| v + 1);
    let mut table = vec![vec![0.0; kb]; ka];
    for (&x, &y) in a.iter().zip(b) {
        table[x][y] += 1.0;
    }
    let n = a.len() as f64;
    let sum_cells: f64 = table.iter().flatten().map(|&c| choose2(c)).sum();
    let sum_rows: f64 = table.iter().map(|r| choose2(r.iter().sum())).sum();
    let sum_cols: f64 = (0..kb).map(|j| choose2(table.iter().map(|r| r[j]).sum())).sum();
    let expected = sum_rows * sum_cols / choose2(n);
    let max_index = 0.5 * (sum_rows + sum_cols);
    if max_index == expected {
        return 1.0;
    }
    (sum_cells - expected) / (max_index - expected)
}

fn majority(labels: &[usize]) -> usize {
    let k = labels.iter().max().map_or(0, |v| v + 1);
    let mut counts = vec![0usize; k];
    for &l in labels {
        counts[l] += 1;
    }
    let mut arg = 0;
    for (i, &c) in counts.iter().enumerate() {
        if c > counts[arg] {
            arg = i;
        }
    }
    arg
}

/// Compares induced state-cluster labels and policy-cluster labels against
/// the ground truth. `segments` and `hard_labels` are aligned; assignments
/// and segments refer to trajectories by id.
pub fn score_recovery(
    truth: &GroundTruth,
    assignments: &[Assignment],
    segments: &[SubTrajectory],
    hard_labels: &[usize],
) -> Result<RecoveryReport, SyntheticError> {
    if segments.len() != hard_labels.len() {
        return Err(SyntheticError::Misaligned("segments vs. labels".into()));
    }
    let lookup = |id: &str| truth.get(id).ok_or_else(|| SyntheticError::Misaligned(format!("unknown trajectory {id}")));
    let mut pred_states = Vec::new();
    let mut true_states = Vec::new();
    for asg in assignments {
        let t = lookup(&asg.trajectory_id)?;
        if t.regimes.len() != asg.labels.len() {
            return Err(SyntheticError::Misaligned(format!("length of {}", asg.trajectory_id)));
        }
        pred_states.extend_from_slice(&asg.labels);
        true_states.extend_from_slice(&t.regimes);
    }
    let (segmentation_accuracy, matching) = matched_accuracy(&pred_states, &true_states);

    let mut seg_pred = Vec::new();
    let mut seg_true = Vec::new();
    let mut step_pred = Vec::new();
    let mut step_true = Vec::new();
    for (seg, &o) in segments.iter().zip(hard_labels) {
        let t = lookup(&seg.owner)?;
        if seg.end > t.policies.len() || seg.start >= seg.end {
            return Err(SyntheticError::Misaligned(format!("segment bounds in {}", seg.owner)));
        }
        let span = &t.policies[seg.start..seg.end];
        seg_pred.push(o);
        seg_true.push(majority(span));
        step_pred.extend(std::iter::repeat_n(o, span.len()));
        step_true.extend_from_slice(span);
    }
    Ok(RecoveryReport {
        segmentation_accuracy,
        policy_ari: adjusted_rand_index(&seg_pred, &seg_true),
        policy_ari_steps: adjusted_rand_index(&step_pred, &step_true),
        matching,
    })
}
