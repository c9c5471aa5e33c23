//! Energy-based softmax policies `pi(a|x) = exp f(x,a) / U(x)`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::Step;

/// Score-function family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    /// `f(x,a) = w_a . x + b_a`.
    #[default]
    Linear,
    /// `f(x,a) = v_a . tanh(W x + c) + b_a`.
    Mlp { hidden: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyPolicy {
    pub architecture: Architecture,
    pub state_dim: usize,
    pub num_actions: usize,
    pub params: Vec<f64>,
}

pub(crate) fn log_sum_exp(v: &[f64]) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + v.iter().map(|s| (s - max).exp()).sum::<f64>().ln()
}

pub(crate) fn softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let total: f64 = e.iter().sum();
    e.iter().map(|v| v / total).collect()
}

impl EnergyPolicy {
    /// Linear policies start at zero (uniform); hidden-layer weights get a
    /// small seeded Gaussian so the layer is not stuck at a symmetric point.
    pub fn new(architecture: Architecture, state_dim: usize, num_actions: usize, seed: u64) -> Self {
        let len = Self::param_len(architecture, state_dim, num_actions);
        let mut params = vec![0.0; len];
        if let Architecture::Mlp { hidden } = architecture {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let normal = Normal::new(0.0, 1.0 / (state_dim as f64).sqrt()).expect("valid normal");
            for p in &mut params[..hidden * state_dim] {
                *p = normal.sample(&mut rng);
            }
            let out = Normal::new(0.0, 0.1 / (hidden as f64).sqrt()).expect("valid normal");
            let start = hidden * state_dim + hidden;
            for p in &mut params[start..start + num_actions * hidden] {
                *p = out.sample(&mut rng);
            }
        }
        Self {
            architecture,
            state_dim,
            num_actions,
            params,
        }
    }

    pub fn param_len(architecture: Architecture, m: usize, a: usize) -> usize {
        match architecture {
            Architecture::Linear => a * m + a,
            Architecture::Mlp { hidden } => hidden * m + hidden + a * hidden + a,
        }
    }

    pub fn is_consistent(&self) -> bool {
        self.params.len() == Self::param_len(self.architecture, self.state_dim, self.num_actions)
            && self.params.iter().all(|p| p.is_finite())
    }

    fn hidden(&self, x: &[f64]) -> Vec<f64> {
        let Architecture::Mlp { hidden } = self.architecture else {
            return Vec::new();
        };
        let m = self.state_dim;
        let (w1, rest) = self.params.split_at(hidden * m);
        let b1 = &rest[..hidden];
        (0..hidden)
            .map(|h| {
                let row = &w1[h * m..(h + 1) * m];
                (row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + b1[h]).tanh()
            })
            .collect()
    }

    /// Scores `f(x, a)` for every action.
    pub fn scores(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.state_dim);
        let a_count = self.num_actions;
        match self.architecture {
            Architecture::Linear => {
                let m = self.state_dim;
                let (w, b) = self.params.split_at(a_count * m);
                (0..a_count)
                    .map(|a| w[a * m..(a + 1) * m].iter().zip(x).map(|(p, v)| p * v).sum::<f64>() + b[a])
                    .collect()
            }
            Architecture::Mlp { hidden } => {
                let h = self.hidden(x);
                let off = hidden * self.state_dim + hidden;
                let (w2, b2) = self.params[off..].split_at(a_count * hidden);
                (0..a_count)
                    .map(|a| {
                        w2[a * hidden..(a + 1) * hidden]
                            .iter()
                            .zip(&h)
                            .map(|(p, v)| p * v)
                            .sum::<f64>()
                            + b2[a]
                    })
                    .collect()
            }
        }
    }

    /// Adds `sum_a dscore[a] * d f(x,a) / d params` into `grad`.
    pub fn backprop(&self, x: &[f64], dscore: &[f64], grad: &mut [f64]) {
        let a_count = self.num_actions;
        let m = self.state_dim;
        match self.architecture {
            Architecture::Linear => {
                let (gw, gb) = grad.split_at_mut(a_count * m);
                for a in 0..a_count {
                    let d = dscore[a];
                    if d == 0.0 {
                        continue;
                    }
                    for (g, v) in gw[a * m..(a + 1) * m].iter_mut().zip(x) {
                        *g += d * v;
                    }
                    gb[a] += d;
                }
            }
            Architecture::Mlp { hidden } => {
                let h = self.hidden(x);
                let off = hidden * m + hidden;
                let w2 = &self.params[off..off + a_count * hidden];
                let mut dh = vec![0.0; hidden];
                {
                    let (g_head, g_tail) = grad.split_at_mut(off);
                    let (gw2, gb2) = g_tail.split_at_mut(a_count * hidden);
                    for a in 0..a_count {
                        let d = dscore[a];
                        for k in 0..hidden {
                            gw2[a * hidden + k] += d * h[k];
                            dh[k] += d * w2[a * hidden + k];
                        }
                        gb2[a] += d;
                    }
                    let (gw1, gb1) = g_head.split_at_mut(hidden * m);
                    for k in 0..hidden {
                        let dz = dh[k] * (1.0 - h[k] * h[k]);
                        if dz == 0.0 {
                            continue;
                        }
                        for (g, v) in gw1[k * m..(k + 1) * m].iter_mut().zip(x) {
                            *g += dz * v;
                        }
                        gb1[k] += dz;
                    }
                }
            }
        }
    }
}

/// `f(x,a) - logsumexp_a' f(x,a')`.
pub fn policy_log_prob(pol: &EnergyPolicy, x: &[f64], a: usize) -> f64 {
    let s = pol.scores(x);
    s[a] - log_sum_exp(&s)
}

/// `log U(x) = logsumexp_a f(x,a)`.
pub fn log_normalizer(pol: &EnergyPolicy, x: &[f64]) -> f64 {
    log_sum_exp(&pol.scores(x))
}

pub fn action_distribution(pol: &EnergyPolicy, x: &[f64]) -> Vec<f64> {
    softmax(&pol.scores(x))
}

/// `u * sum_t w_t * (-log pi(a_t|x_t) + lambda * log U(x_t))`.
pub fn weighted_loss(pol: &EnergyPolicy, steps: &[Step], u: f64, lambda_edm: f64) -> f64 {
    let mut acc = 0.0;
    for s in steps {
        let scores = pol.scores(&s.x);
        let lse = log_sum_exp(&scores);
        acc += s.w * (-(scores[s.a] - lse) + lambda_edm * lse);
    }
    u * acc
}

/// Per-step score derivative `u w [(pi - onehot(a)) + lambda pi]`, written
/// into `dscore`. Returns the step's loss contribution (before `u w`).
pub(crate) fn step_score_grad(
    scores: &[f64],
    a: usize,
    scale: f64,
    lambda_edm: f64,
    dscore: &mut [f64],
) -> f64 {
    let lse = log_sum_exp(scores);
    for (k, (d, s)) in dscore.iter_mut().zip(scores).enumerate() {
        let p = (s - lse).exp();
        let onehot = if k == a { 1.0 } else { 0.0 };
        *d = scale * ((p - onehot) + lambda_edm * p);
    }
    -(scores[a] - lse) + lambda_edm * lse
}

/// Exact gradient of [`weighted_loss`] with respect to the parameters.
pub fn loss_gradient(pol: &EnergyPolicy, steps: &[Step], u: f64, lambda_edm: f64) -> Vec<f64> {
    let mut grad = vec![0.0; pol.params.len()];
    let mut dscore = vec![0.0; pol.num_actions];
    for s in steps {
        let scale = u * s.w;
        if scale == 0.0 {
            continue;
        }
        let scores = pol.scores(&s.x);
        step_score_grad(&scores, s.a, scale, lambda_edm, &mut dscore);
        pol.backprop(&s.x, &dscore, &mut grad);
    }
    grad
}
