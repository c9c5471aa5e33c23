//! Block-Toeplitz graphical lasso solved by ADMM.
//!
//! Minimizes `-logdet(T) + tr(S T) + lambda * sum_{i != j} |T_ij|` over
//! symmetric positive-definite `T` whose `m x m` blocks are constant along
//! each block diagonal.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{SegmentationError, ToeplitzClusterModel};
use crate::linalg::{logdet_spd, max_asymmetry, min_eigenvalue};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdmmParams {
    pub rho: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for AdmmParams {
    fn default() -> Self {
        Self {
            rho: 1.0,
            tol: 1e-5,
            max_iter: 1000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GlassoFit {
    pub model: ToeplitzClusterModel,
    pub converged: bool,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
}

/// Sets of matrix entries that the symmetric block-Toeplitz constraint ties
/// together, with a flag marking the main-diagonal groups (not penalized).
#[derive(Debug, Clone)]
pub struct ToeplitzGroups {
    groups: Vec<(bool, Vec<(usize, usize)>)>,
}

impl ToeplitzGroups {
    pub fn new(m: usize, omega: usize) -> Self {
        use std::collections::BTreeMap;
        let n = m * omega;
        let mut by_key: BTreeMap<(usize, usize, usize), Vec<(usize, usize)>> = BTreeMap::new();
        for i in 0..n {
            for j in 0..n {
                let (bi, r) = (i / m, i % m);
                let (bj, c) = (j / m, j % m);
                let key = if bj >= bi {
                    (bj - bi, r, c)
                } else {
                    (bi - bj, c, r)
                };
                // Symmetry ties the diagonal block to its own transpose.
                let key = if key.0 == 0 && key.1 > key.2 {
                    (0, key.2, key.1)
                } else {
                    key
                };
                by_key.entry(key).or_default().push((i, j));
            }
        }
        let groups = by_key
            .into_iter()
            .map(|((d, r, c), cells)| (d == 0 && r == c, cells))
            .collect();
        Self { groups }
    }

    /// Largest spread between entries that must be equal.
    pub fn violation(&self, a: &DMatrix<f64>) -> f64 {
        let mut worst: f64 = 0.0;
        for (_, cells) in &self.groups {
            let vals = cells.iter().map(|&(i, j)| a[(i, j)]);
            let (lo, hi) = vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                (lo.min(v), hi.max(v))
            });
            worst = worst.max(hi - lo);
        }
        worst
    }

    /// Proximal step: average each tied group, then soft-threshold the
    /// off-diagonal groups by `threshold`.
    fn project_shrink(&self, v: &DMatrix<f64>, threshold: f64) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(v.nrows(), v.ncols());
        for (diagonal, cells) in &self.groups {
            let mean = cells.iter().map(|&(i, j)| v[(i, j)]).sum::<f64>() / cells.len() as f64;
            let value = if *diagonal {
                mean
            } else {
                soft_threshold(mean, threshold)
            };
            for &(i, j) in cells {
                out[(i, j)] = value;
            }
        }
        out
    }
}

fn soft_threshold(v: f64, k: f64) -> f64 {
    if v > k {
        v - k
    } else if v < -k {
        v + k
    } else {
        0.0
    }
}

/// `-logdet(T) + tr(S T) + lambda * sum_{i != j} |T_ij|`; infinite when `T`
/// is not positive-definite.
pub fn glasso_objective(theta: &DMatrix<f64>, s: &DMatrix<f64>, lambda: f64) -> f64 {
    let Some(logdet) = logdet_spd(theta) else {
        return f64::INFINITY;
    };
    let trace = s.component_mul(theta).sum();
    let mut l1 = 0.0;
    for i in 0..theta.nrows() {
        for j in 0..theta.ncols() {
            if i != j {
                l1 += theta[(i, j)].abs();
            }
        }
    }
    -logdet + trace + lambda * l1
}

pub fn check_covariance(s: &DMatrix<f64>, dim: usize) -> Result<(), SegmentationError> {
    if s.nrows() != dim || s.ncols() != dim {
        return Err(SegmentationError::Input(format!(
            "covariance is {}x{}, expected {dim}x{dim}",
            s.nrows(),
            s.ncols()
        )));
    }
    if s.iter().any(|v| !v.is_finite()) {
        return Err(SegmentationError::Input("covariance has non-finite entries".into()));
    }
    let scale = s.amax().max(1.0);
    if max_asymmetry(s) > 1e-10 * scale {
        return Err(SegmentationError::Input("covariance is not symmetric".into()));
    }
    if min_eigenvalue(s) < -1e-8 * scale {
        return Err(SegmentationError::Input(
            "covariance is not positive semi-definite".into(),
        ));
    }
    Ok(())
}

/// ADMM for the block-Toeplitz graphical lasso.
///
/// Returns the constrained iterate `Z`, which satisfies the Toeplitz tie and
/// sparsity pattern exactly. The penalty parameter is rebalanced whenever
/// the primal and dual residuals drift more than a factor of ten apart.
pub fn toeplitz_glasso(
    s: &DMatrix<f64>,
    lambda: f64,
    m: usize,
    omega: usize,
    params: &AdmmParams,
) -> Result<GlassoFit, SegmentationError> {
    let dim = m * omega;
    check_covariance(s, dim)?;
    if !(lambda >= 0.0) || !(params.rho > 0.0) || !(params.tol > 0.0) {
        return Err(SegmentationError::Input(
            "lambda must be >= 0, rho and tol > 0".into(),
        ));
    }
    let groups = ToeplitzGroups::new(m, omega);

    let mut rho = params.rho;
    let mut z = DMatrix::from_fn(dim, dim, |i, j| {
        if i == j {
            1.0 / s[(i, i)].max(1e-8)
        } else {
            0.0
        }
    });
    z = groups.project_shrink(&z, 0.0);
    let mut u = DMatrix::<f64>::zeros(dim, dim);
    let mut theta = z.clone();
    let mut primal = f64::INFINITY;
    let mut dual = f64::INFINITY;
    let mut converged = false;
    let mut iterations = 0;

    for it in 0..params.max_iter {
        iterations = it + 1;
        // Proximal step of -logdet + tr(S T) via eigendecomposition.
        let mut target = (&z - &u) * rho - s;
        target = (&target + target.transpose()) * 0.5;
        let eig = target.symmetric_eigen();
        let scaled = eig
            .eigenvalues
            .map(|l| (l + (l * l + 4.0 * rho).sqrt()) / (2.0 * rho));
        theta = &eig.eigenvectors * DMatrix::from_diagonal(&scaled) * eig.eigenvectors.transpose();
        theta = (&theta + theta.transpose()) * 0.5;

        let z_prev = z.clone();
        z = groups.project_shrink(&(&theta + &u), lambda / rho);
        u += &theta - &z;

        primal = (&theta - &z).norm();
        dual = rho * (&z - &z_prev).norm();
        if primal < params.tol && dual < params.tol {
            converged = true;
            break;
        }
        if primal > 10.0 * dual {
            rho *= 2.0;
            u /= 2.0;
        } else if dual > 10.0 * primal {
            rho /= 2.0;
            u *= 2.0;
        }
    }

    let model = finalize(z, &theta, &groups, m, omega)?;
    if !converged {
        log::debug!(
            "toeplitz glasso stopped after {iterations} iterations (primal {primal:.2e}, dual {dual:.2e})"
        );
    }
    Ok(GlassoFit {
        model,
        converged,
        iterations,
        primal_residual: primal,
        dual_residual: dual,
    })
}

fn finalize(
    z: DMatrix<f64>,
    theta: &DMatrix<f64>,
    groups: &ToeplitzGroups,
    m: usize,
    omega: usize,
) -> Result<ToeplitzClusterModel, SegmentationError> {
    if let Ok(model) = ToeplitzClusterModel::new(z, m, omega) {
        return Ok(model);
    }
    // Unconverged Z can lose definiteness; fall back to the projected
    // smooth iterate and, failing that, a ridge.
    let projected = groups.project_shrink(theta, 0.0);
    if let Ok(model) = ToeplitzClusterModel::new(projected.clone(), m, omega) {
        return Ok(model);
    }
    let shift = (-min_eigenvalue(&projected)).max(0.0) + 1e-6;
    let ridged = projected + DMatrix::identity(m * omega, m * omega) * shift;
    ToeplitzClusterModel::new(ridged, m, omega)
        .map_err(|_| SegmentationError::Numerical("precision estimate is not positive-definite".into()))
}
