//! Quality-weighted EM over a mixture of energy-based policies.
//!
//! Responsibilities come from the unweighted sub-trajectory likelihood
//! `prod_t pi(a|x) / U(x)`; decision weights enter only the M-step loss.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::energy::{
    log_sum_exp, softmax, step_score_grad, weighted_loss, Architecture, EnergyPolicy,
};
use super::PolicyError;
use crate::kmeans::kmeans_pp;
use crate::segmentation::SubTrajectory;

/// Floor applied to mixture priors before renormalizing.
pub const PRIOR_FLOOR: f64 = 1e-8;

fn default_o() -> usize {
    3
}
fn default_lambda_edm() -> f64 {
    0.5
}
fn default_lr() -> f64 {
    0.05
}
fn default_momentum() -> f64 {
    0.9
}
fn default_m_steps() -> usize {
    100
}
fn default_max_em_iter() -> usize {
    30
}
fn default_em_tol() -> f64 {
    1e-4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmConfig {
    #[serde(rename = "O", default = "default_o")]
    pub num_policies: usize,
    #[serde(default = "default_lambda_edm")]
    pub lambda_edm: f64,
    #[serde(default = "default_lr")]
    pub lr: f64,
    #[serde(default = "default_momentum")]
    pub momentum: f64,
    #[serde(default = "default_m_steps")]
    pub m_steps: usize,
    #[serde(default = "default_max_em_iter")]
    pub max_em_iter: usize,
    #[serde(default = "default_em_tol")]
    pub em_tol: f64,
    #[serde(default)]
    pub architecture: Architecture,
    #[serde(default)]
    pub seed: u64,
}

impl Default for EmConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults deserialize")
    }
}

impl EmConfig {
    pub fn validate(&self) -> Result<(), PolicyError> {
        let checks = [
            ("O", self.num_policies >= 1),
            ("lambda_edm", self.lambda_edm >= 0.0),
            ("lr", self.lr > 0.0),
            ("momentum", (0.0..1.0).contains(&self.momentum)),
            ("m_steps", self.m_steps >= 1),
            ("max_em_iter", self.max_em_iter >= 1),
            ("em_tol", self.em_tol > 0.0),
        ];
        for (name, ok) in checks {
            if !ok {
                return Err(PolicyError::Input(format!("bad value for {name}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureState {
    pub policies: Vec<EnergyPolicy>,
    pub priors: Vec<f64>,
    /// Row-stochastic sub-trajectory x cluster matrix from the last E-step.
    pub responsibilities: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Responsibilities {
    pub u: Vec<Vec<f64>>,
    /// `log Pr(xi_i | theta_o)` up to an i-constant.
    pub log_lik: Vec<Vec<f64>>,
}

/// `sum_t [log pi(a|x) - log U(x)]`, independent of the decision weights.
pub fn subtrajectory_log_lik(pol: &EnergyPolicy, seg: &SubTrajectory) -> f64 {
    seg.steps
        .iter()
        .map(|s| {
            let scores = pol.scores(&s.x);
            let lse = log_sum_exp(&scores);
            scores[s.a] - 2.0 * lse
        })
        .sum()
}

/// Posterior cluster probabilities from per-cluster log-likelihoods.
pub fn responsibilities_from_log_lik(log_lik: &[Vec<f64>], priors: &[f64]) -> Vec<Vec<f64>> {
    let log_priors: Vec<f64> = priors.iter().map(|p| p.ln()).collect();
    log_lik
        .iter()
        .map(|row| {
            let joint: Vec<f64> = row.iter().zip(&log_priors).map(|(l, p)| l + p).collect();
            softmax(&joint)
        })
        .collect()
}

pub fn e_step(subtrajs: &[SubTrajectory], mixture: &MixtureState) -> Responsibilities {
    let log_lik: Vec<Vec<f64>> = subtrajs
        .par_iter()
        .map(|seg| {
            mixture
                .policies
                .iter()
                .map(|p| subtrajectory_log_lik(p, seg))
                .collect()
        })
        .collect();
    let u = responsibilities_from_log_lik(&log_lik, &mixture.priors);
    Responsibilities { u, log_lik }
}

/// `sum_i sum_o u_io * weighted_loss(theta_o, xi_i)`.
pub fn expected_objective(
    subtrajs: &[SubTrajectory],
    policies: &[EnergyPolicy],
    u: &[Vec<f64>],
    lambda_edm: f64,
) -> f64 {
    let per_seg: Vec<f64> = subtrajs
        .par_iter()
        .zip(u.par_iter())
        .map(|(seg, row)| {
            policies
                .iter()
                .zip(row)
                .filter(|(_, &r)| r > 0.0)
                .map(|(p, &r)| weighted_loss(p, &seg.steps, r, lambda_edm))
                .sum::<f64>()
        })
        .collect();
    per_seg.iter().sum()
}

/// Total decision weight, used to express objectives per unit of weight.
pub fn weight_mass(subtrajs: &[SubTrajectory]) -> f64 {
    subtrajs
        .iter()
        .flat_map(|s| &s.steps)
        .map(|s| s.w)
        .sum()
}

/// Raw gradient of `sum_i u_io * weighted_loss(theta_o, xi_i)` for one
/// cluster, accumulated in sub-trajectory order.
pub fn cluster_gradient(
    pol: &EnergyPolicy,
    subtrajs: &[SubTrajectory],
    u_col: &[f64],
    lambda_edm: f64,
) -> (Vec<f64>, f64) {
    let mut grad = vec![0.0; pol.params.len()];
    let mut dscore = vec![0.0; pol.num_actions];
    let mut loss = 0.0;
    for (seg, &u) in subtrajs.iter().zip(u_col) {
        if u == 0.0 {
            continue;
        }
        for s in &seg.steps {
            let scale = u * s.w;
            if scale == 0.0 {
                continue;
            }
            let scores = pol.scores(&s.x);
            loss += scale * step_score_grad(&scores, s.a, scale, lambda_edm, &mut dscore);
            pol.backprop(&s.x, &dscore, &mut grad);
        }
    }
    (grad, loss)
}

/// Momentum gradient descent on one cluster's responsibility- and
/// decision-weighted loss. The gradient is divided by the cluster's weight
/// mass `sum_i u_io sum_t w_it`, which leaves every stationary point in place
/// and makes the step size independent of data volume and weight scale.
fn fit_cluster(
    pol: &EnergyPolicy,
    subtrajs: &[SubTrajectory],
    u_col: &[f64],
    cfg: &EmConfig,
    cluster: usize,
) -> Result<EnergyPolicy, PolicyError> {
    let mass: f64 = subtrajs
        .iter()
        .zip(u_col)
        .map(|(seg, &u)| u * seg.steps.iter().map(|s| s.w).sum::<f64>())
        .sum();
    if !(mass > 0.0) {
        return Ok(pol.clone());
    }
    let mut current = pol.clone();
    let mut velocity = vec![0.0; current.params.len()];
    for step in 0..cfg.m_steps {
        let (grad, loss) = cluster_gradient(&current, subtrajs, u_col, cfg.lambda_edm);
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(PolicyError::NonFinite {
                cluster,
                step,
                lr: cfg.lr,
            });
        }
        for ((p, v), g) in current.params.iter_mut().zip(&mut velocity).zip(&grad) {
            *v = cfg.momentum * *v - cfg.lr * g / mass;
            *p += *v;
        }
    }
    if !current.is_consistent() {
        return Err(PolicyError::NonFinite {
            cluster,
            step: cfg.m_steps,
            lr: cfg.lr,
        });
    }
    Ok(current)
}

/// Updated priors `sum_i u_io / N`, floored and renormalized.
pub fn update_priors(u: &[Vec<f64>], num_policies: usize) -> Vec<f64> {
    let n = u.len().max(1) as f64;
    let mut priors = vec![0.0; num_policies];
    for row in u {
        for (p, r) in priors.iter_mut().zip(row) {
            *p += r;
        }
    }
    for p in &mut priors {
        *p = (*p / n).max(PRIOR_FLOOR);
    }
    let total: f64 = priors.iter().sum();
    priors.iter().map(|p| p / total).collect()
}

pub fn m_step(
    subtrajs: &[SubTrajectory],
    u: &[Vec<f64>],
    policies: &[EnergyPolicy],
    cfg: &EmConfig,
) -> Result<(Vec<EnergyPolicy>, Vec<f64>), PolicyError> {
    if u.len() != subtrajs.len() {
        return Err(PolicyError::Input(
            "responsibility rows must match sub-trajectories".into(),
        ));
    }
    let columns: Vec<Vec<f64>> = (0..policies.len())
        .map(|o| u.iter().map(|row| row[o]).collect())
        .collect();
    let updated = policies
        .par_iter()
        .zip(columns.par_iter())
        .enumerate()
        .map(|(o, (pol, col))| fit_cluster(pol, subtrajs, col, cfg, o))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((updated, update_priors(u, policies.len())))
}

pub fn hard_labels(u: &[Vec<f64>]) -> Vec<usize> {
    u.iter()
        .map(|row| {
            let mut arg = 0;
            for (o, v) in row.iter().enumerate() {
                if *v > row[arg] {
                    arg = o;
                }
            }
            arg
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmFit {
    pub mixture: MixtureState,
    pub hard_labels: Vec<usize>,
    /// Expected objective per unit of decision weight, after the initial
    /// M-step and after every EM iteration.
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

fn mean_state(seg: &SubTrajectory) -> Vec<f64> {
    let m = seg.steps[0].x.len();
    let mut mean = vec![0.0; m];
    for s in &seg.steps {
        for (acc, v) in mean.iter_mut().zip(&s.x) {
            *acc += v;
        }
    }
    mean.iter().map(|v| v / seg.steps.len() as f64).collect()
}

/// Hard responsibilities from seeded k-means++ on sub-trajectory mean states.
pub fn initial_responsibilities(subtrajs: &[SubTrajectory], num_policies: usize, seed: u64) -> Vec<Vec<f64>> {
    let labels = if num_policies == 1 {
        vec![0; subtrajs.len()]
    } else {
        let means: Vec<Vec<f64>> = subtrajs.iter().map(mean_state).collect();
        let refs: Vec<&[f64]> = means.iter().map(Vec::as_slice).collect();
        kmeans_pp(&refs, num_policies, seed, 100)
    };
    labels
        .iter()
        .map(|&l| (0..num_policies).map(|o| if o == l { 1.0 } else { 0.0 }).collect())
        .collect()
}

pub fn em_edm_fit(subtrajs: &[SubTrajectory], cfg: &EmConfig) -> Result<EmFit, PolicyError> {
    let first = subtrajs
        .iter()
        .find_map(|s| s.steps.first())
        .ok_or_else(|| PolicyError::Input("no steps to fit".into()))?;
    let m = first.x.len();
    let a_count = subtrajs
        .iter()
        .flat_map(|s| &s.steps)
        .map(|s| s.a + 1)
        .max()
        .unwrap_or(2);
    em_edm_fit_with_actions(subtrajs, cfg, m, a_count.max(2))
}

/// As [`em_edm_fit`], with the state and action dimensions given
/// explicitly (actions unseen in the data still get a score).
pub fn em_edm_fit_with_actions(
    subtrajs: &[SubTrajectory],
    cfg: &EmConfig,
    state_dim: usize,
    num_actions: usize,
) -> Result<EmFit, PolicyError> {
    cfg.validate()?;
    let o_count = cfg.num_policies;
    if subtrajs.len() < o_count {
        return Err(PolicyError::Input(format!(
            "O = {o_count} exceeds the number of sub-trajectories ({})",
            subtrajs.len()
        )));
    }
    let mass = weight_mass(subtrajs).max(f64::MIN_POSITIVE);
    let init: Vec<EnergyPolicy> = (0..o_count)
        .map(|o| EnergyPolicy::new(cfg.architecture, state_dim, num_actions, cfg.seed.wrapping_add(o as u64)))
        .collect();
    let mut u = initial_responsibilities(subtrajs, o_count, cfg.seed);
    let (mut policies, mut priors) = m_step(subtrajs, &u, &init, cfg)?;
    let mut trace = vec![expected_objective(subtrajs, &policies, &u, cfg.lambda_edm) / mass];

    let mut converged = false;
    let mut iterations = 0;
    for it in 1..=cfg.max_em_iter {
        iterations = it;
        let mixture = MixtureState {
            policies,
            priors,
            responsibilities: Vec::new(),
        };
        u = e_step(subtrajs, &mixture).u;
        let (p, r) = m_step(subtrajs, &u, &mixture.policies, cfg)?;
        policies = p;
        priors = r;
        let obj = expected_objective(subtrajs, &policies, &u, cfg.lambda_edm) / mass;
        let prev = *trace.last().expect("trace is non-empty");
        trace.push(obj);
        if (prev - obj).abs() < cfg.em_tol {
            converged = true;
            break;
        }
    }
    let labels = hard_labels(&u);
    log::debug!("em-edm: {iterations} iterations, converged = {converged}, priors {priors:?}");
    Ok(EmFit {
        mixture: MixtureState {
            policies,
            priors,
            responsibilities: u,
        },
        hard_labels: labels,
        objective_trace: trace,
        iterations,
        converged,
    })
}

/// `sum_o belief_o * pi_o(.|x)`.
pub fn mixture_predict(mixture: &MixtureState, x: &[f64], belief: &[f64]) -> Vec<f64> {
    let a_count = mixture.policies[0].num_actions;
    let mut out = vec![0.0; a_count];
    for (pol, &b) in mixture.policies.iter().zip(belief) {
        if b == 0.0 {
            continue;
        }
        for (acc, p) in out.iter_mut().zip(softmax(&pol.scores(x))) {
            *acc += b * p;
        }
    }
    out
}

/// Bayesian update of a cluster belief after observing `(x, a)`, using the
/// per-step likelihood factor `pi_o(a|x) / U_o(x)`.
pub fn update_belief(mixture: &MixtureState, belief: &[f64], x: &[f64], a: usize) -> Vec<f64> {
    let joint: Vec<f64> = mixture
        .policies
        .iter()
        .zip(belief)
        .map(|(pol, &b)| {
            let scores = pol.scores(x);
            b.ln() + scores[a] - 2.0 * log_sum_exp(&scores)
        })
        .collect();
    softmax(&joint)
}
