//! Energy-based policies and the quality-weighted EM over policy clusters.

pub mod em;
pub mod energy;

use thiserror::Error;

pub use em::{
    e_step, em_edm_fit, em_edm_fit_with_actions, expected_objective, hard_labels, m_step,
    mixture_predict, responsibilities_from_log_lik, update_belief, EmConfig, EmFit, MixtureState,
    Responsibilities,
};
pub use energy::{
    action_distribution, log_normalizer, loss_gradient, policy_log_prob, weighted_loss,
    Architecture, EnergyPolicy,
};

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("invalid input: {0}")]
    Input(String),
    #[error("non-finite loss in cluster {cluster} at gradient step {step}; step size {lr:e} is too large")]
    NonFinite { cluster: usize, step: usize, lr: f64 },
}
