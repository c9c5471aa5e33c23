//! High-level reward regulator over (state cluster, policy cluster) pairs.
//!
//! A tabular maximum-entropy IRL fit on the sequences of `(q, o)` pairs that
//! the current segmentation and policy mixture induce. The min-max normalized
//! table is spread back onto individual steps to modulate the switch cost of
//! the next segmentation round.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::policy::energy::{log_sum_exp, softmax};
use crate::segmentation::{Assignment, SubTrajectory};

#[derive(Debug, Error)]
pub enum RegulatorError {
    #[error("invalid input: {0}")]
    Input(String),
    #[error("no label for step {step} of trajectory {id}")]
    MissingLabel { id: String, step: usize },
}

/// Sequences of `(q, o)` pairs, one per trajectory, and transition counts
/// `(q_i, o_i) -> q_{i+1}` indexed as `counts[q * O + o][q']`.
#[derive(Debug, Clone, PartialEq)]
pub struct HighLevelData {
    pub num_states: usize,
    pub num_policies: usize,
    pub sequences: Vec<Vec<(usize, usize)>>,
    pub counts: Vec<Vec<f64>>,
}

impl HighLevelData {
    pub fn num_pairs(&self) -> usize {
        self.sequences.iter().map(Vec::len).sum()
    }
}

/// Groups consecutive sub-trajectories by owner, in input order.
pub fn build_high_level(
    segments: &[SubTrajectory],
    labels: &[usize],
    num_states: usize,
    num_policies: usize,
) -> Result<HighLevelData, RegulatorError> {
    if segments.len() != labels.len() {
        return Err(RegulatorError::Input(format!(
            "{} sub-trajectories but {} labels",
            segments.len(),
            labels.len()
        )));
    }
    let mut sequences: Vec<Vec<(usize, usize)>> = Vec::new();
    let mut prev_owner: Option<&str> = None;
    for (seg, &o) in segments.iter().zip(labels) {
        if seg.high_state >= num_states || o >= num_policies {
            return Err(RegulatorError::Input(format!(
                "pair ({}, {o}) outside {num_states}x{num_policies}",
                seg.high_state
            )));
        }
        if prev_owner != Some(seg.owner.as_str()) {
            sequences.push(Vec::new());
            prev_owner = Some(seg.owner.as_str());
        }
        sequences
            .last_mut()
            .expect("pushed above")
            .push((seg.high_state, o));
    }
    let mut counts = vec![vec![0.0; num_states]; num_states * num_policies];
    for seq in &sequences {
        for pair in seq.windows(2) {
            let (q, o) = pair[0];
            counts[q * num_policies + o][pair[1].0] += 1.0;
        }
    }
    Ok(HighLevelData {
        num_states,
        num_policies,
        sequences,
        counts,
    })
}

/// Row-normalized transition table; rows with no observation self-loop.
pub fn transition_matrix(data: &HighLevelData) -> Vec<Vec<f64>> {
    let o_len = data.num_policies;
    data.counts
        .iter()
        .enumerate()
        .map(|(row, c)| {
            let total: f64 = c.iter().sum();
            if total > 0.0 {
                c.iter().map(|v| v / total).collect()
            } else {
                let mut r = vec![0.0; data.num_states];
                r[row / o_len] = 1.0;
                r
            }
        })
        .collect()
}

fn default_gamma() -> f64 {
    0.95
}
fn default_steps() -> usize {
    200
}
fn default_lr() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IrlConfig {
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "default_steps")]
    pub steps: usize,
    #[serde(default = "default_lr")]
    pub lr: f64,
}

impl Default for IrlConfig {
    fn default() -> Self {
        Self {
            gamma: default_gamma(),
            steps: default_steps(),
            lr: default_lr(),
        }
    }
}

const SOFT_VI_TOL: f64 = 1e-8;
const GRAD_TOL: f64 = 1e-6;
const SOFT_VI_MAX_ITER: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HighLevelModel {
    pub num_states: usize,
    pub num_policies: usize,
    /// Raw reward, `reward[q][o]`.
    pub reward: Vec<Vec<f64>>,
    /// `transitions[q * O + o][q']`.
    pub transitions: Vec<Vec<f64>>,
    pub gamma: f64,
    pub normalized_reward: Vec<Vec<f64>>,
    pub iterations: usize,
    pub final_grad_norm: f64,
}

impl HighLevelModel {
    /// Constant table used before any regulator has been fit.
    pub fn constant(num_states: usize, num_policies: usize, value: f64) -> Self {
        let mut transitions = vec![vec![0.0; num_states]; num_states * num_policies];
        for (row, t) in transitions.iter_mut().enumerate() {
            t[row / num_policies] = 1.0;
        }
        Self {
            num_states,
            num_policies,
            reward: vec![vec![value; num_policies]; num_states],
            transitions,
            gamma: default_gamma(),
            normalized_reward: vec![vec![value.clamp(0.0, 1.0); num_policies]; num_states],
            iterations: 0,
            final_grad_norm: 0.0,
        }
    }
}

/// Soft Bellman fixed point. Returns `(Q(q,o), V(q))`.
pub fn soft_value_iteration(
    reward: &[Vec<f64>],
    transitions: &[Vec<f64>],
    gamma: f64,
) -> (Vec<Vec<f64>>, Vec<f64>) {
    let q_len = reward.len();
    let o_len = reward[0].len();
    let mut v = vec![0.0; q_len];
    let mut qv = reward.to_vec();
    for _ in 0..SOFT_VI_MAX_ITER {
        for q in 0..q_len {
            for o in 0..o_len {
                let next: f64 = transitions[q * o_len + o]
                    .iter()
                    .zip(&v)
                    .map(|(p, vn)| p * vn)
                    .sum();
                qv[q][o] = reward[q][o] + gamma * next;
            }
        }
        let new_v: Vec<f64> = qv.iter().map(|row| log_sum_exp(row)).collect();
        let delta = new_v
            .iter()
            .zip(&v)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        v = new_v;
        if delta < SOFT_VI_TOL {
            break;
        }
    }
    (qv, v)
}

/// Soft-optimal `pi(o | q)`.
pub fn soft_policy(reward: &[Vec<f64>], transitions: &[Vec<f64>], gamma: f64) -> Vec<Vec<f64>> {
    let (qv, _) = soft_value_iteration(reward, transitions, gamma);
    qv.iter().map(|row| softmax(row)).collect()
}

/// Per-trajectory discounted visitation `sum_t gamma^t 1[(q_t,o_t)]`,
/// averaged over trajectories.
pub fn empirical_visitation(data: &HighLevelData, gamma: f64) -> Vec<Vec<f64>> {
    let mut mu = vec![vec![0.0; data.num_policies]; data.num_states];
    let n = data.sequences.len().max(1) as f64;
    for seq in &data.sequences {
        let mut disc = 1.0;
        for &(q, o) in seq {
            mu[q][o] += disc / n;
            disc *= gamma;
        }
    }
    mu
}

/// Expected discounted visitation under `policy`, started from the
/// empirical first-pair state distribution and truncated at the observed
/// sequence lengths so total mass matches [`empirical_visitation`].
pub fn expected_visitation(
    data: &HighLevelData,
    policy: &[Vec<f64>],
    transitions: &[Vec<f64>],
    gamma: f64,
) -> Vec<Vec<f64>> {
    let q_len = data.num_states;
    let o_len = data.num_policies;
    let n = data.sequences.len().max(1) as f64;
    let max_len = data.sequences.iter().map(Vec::len).max().unwrap_or(0);
    let mut alive = vec![0.0; max_len];
    let mut state = vec![0.0; q_len];
    for seq in &data.sequences {
        for a in alive.iter_mut().take(seq.len()) {
            *a += 1.0 / n;
        }
        if let Some(&(q, _)) = seq.first() {
            state[q] += 1.0;
        }
    }
    let starts: f64 = state.iter().sum();
    if starts > 0.0 {
        for s in &mut state {
            *s /= starts;
        }
    }
    let mut mu = vec![vec![0.0; o_len]; q_len];
    let mut disc = 1.0;
    for &frac in &alive {
        let mut next = vec![0.0; q_len];
        for q in 0..q_len {
            if state[q] == 0.0 {
                continue;
            }
            for o in 0..o_len {
                let d = state[q] * policy[q][o];
                mu[q][o] += disc * frac * d;
                for (nq, p) in next.iter_mut().zip(&transitions[q * o_len + o]) {
                    *nq += d * p;
                }
            }
        }
        state = next;
        disc *= gamma;
    }
    mu
}

/// Gradient of the MaxEnt log-likelihood with respect to the reward table.
pub fn maxent_gradient(
    data: &HighLevelData,
    reward: &[Vec<f64>],
    transitions: &[Vec<f64>],
    gamma: f64,
) -> Vec<Vec<f64>> {
    let policy = soft_policy(reward, transitions, gamma);
    let emp = empirical_visitation(data, gamma);
    let exp = expected_visitation(data, &policy, transitions, gamma);
    emp.iter()
        .zip(&exp)
        .map(|(e, x)| e.iter().zip(x).map(|(a, b)| a - b).collect())
        .collect()
}

fn max_abs(table: &[Vec<f64>]) -> f64 {
    table.iter().flatten().fold(0.0, |m, v| f64::max(m, v.abs()))
}

/// Min-max scaling to `[0, 1]`; a constant table maps to all 0.5.
pub fn normalize(table: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let lo = table.iter().flatten().copied().fold(f64::INFINITY, f64::min);
    let hi = table.iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = hi - lo;
    if !(range > 1e-12 * hi.abs().max(lo.abs()).max(1.0)) {
        return table.iter().map(|r| vec![0.5; r.len()]).collect();
    }
    table
        .iter()
        .map(|r| r.iter().map(|v| ((v - lo) / range).clamp(0.0, 1.0)).collect())
        .collect()
}

pub fn maxent_irl_fit(data: &HighLevelData, cfg: &IrlConfig) -> Result<HighLevelModel, RegulatorError> {
    if data.num_states == 0 || data.num_policies == 0 {
        return Err(RegulatorError::Input("empty Q x O table".into()));
    }
    if data.num_pairs() == 0 {
        return Err(RegulatorError::Input("no observed high-level pairs".into()));
    }
    if !(0.0..1.0).contains(&cfg.gamma) {
        return Err(RegulatorError::Input(format!("gamma {} outside [0, 1)", cfg.gamma)));
    }
    let transitions = transition_matrix(data);
    let mut reward = vec![vec![0.0; data.num_policies]; data.num_states];
    let mut iterations = 0;
    let mut grad_norm = f64::INFINITY;
    for it in 0..cfg.steps {
        let grad = maxent_gradient(data, &reward, &transitions, cfg.gamma);
        grad_norm = max_abs(&grad);
        if grad_norm < GRAD_TOL {
            break;
        }
        for (r, g) in reward.iter_mut().zip(&grad) {
            for (rv, gv) in r.iter_mut().zip(g) {
                *rv += cfg.lr * gv;
            }
        }
        iterations = it + 1;
    }
    let normalized_reward = normalize(&reward);
    Ok(HighLevelModel {
        num_states: data.num_states,
        num_policies: data.num_policies,
        reward,
        transitions,
        gamma: cfg.gamma,
        normalized_reward,
        iterations,
        final_grad_norm: grad_norm,
    })
}

/// Per-step `r_bar[t] = normalized_reward[q_t][o]` where `q_t` is the window
/// label and `o` the policy label of the sub-trajectory covering `t`.
/// Output follows the order of `assignments`.
pub fn distribute_reward(
    model: &HighLevelModel,
    assignments: &[Assignment],
    segments: &[SubTrajectory],
    labels: &[usize],
) -> Result<Vec<Vec<f64>>, RegulatorError> {
    if segments.len() != labels.len() {
        return Err(RegulatorError::Input(format!(
            "{} sub-trajectories but {} labels",
            segments.len(),
            labels.len()
        )));
    }
    let mut by_owner: std::collections::HashMap<&str, Vec<(usize, usize, usize)>> =
        std::collections::HashMap::new();
    for (seg, &o) in segments.iter().zip(labels) {
        by_owner
            .entry(seg.owner.as_str())
            .or_default()
            .push((seg.start, seg.end, o));
    }
    assignments
        .iter()
        .map(|asg| {
            let spans = by_owner.get(asg.trajectory_id.as_str());
            let mut o_of = vec![None; asg.labels.len()];
            for &(start, end, o) in spans.into_iter().flatten() {
                for slot in o_of.iter_mut().take(end).skip(start) {
                    *slot = Some(o);
                }
            }
            asg.labels
                .iter()
                .zip(&o_of)
                .enumerate()
                .map(|(t, (&q, o))| match o {
                    Some(o) if q < model.num_states && *o < model.num_policies => {
                        Ok(model.normalized_reward[q][*o])
                    }
                    _ => Err(RegulatorError::MissingLabel {
                        id: asg.trajectory_id.clone(),
                        step: t,
                    }),
                })
                .collect()
        })
        .collect()
}
