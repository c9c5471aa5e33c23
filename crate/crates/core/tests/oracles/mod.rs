//! Independent reference implementations used by the integration tests.
#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

// ---------------------------------------------------------------- glasso

/// `-logdet(T) + tr(S T) + lambda * sum_{i != j} |T_ij|` via Cholesky.
pub fn glasso_objective_ref(theta: &DMatrix<f64>, s: &DMatrix<f64>, lambda: f64) -> f64 {
    let chol = theta.clone().cholesky().expect("theta must be PD");
    let logdet = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    let n = theta.nrows();
    let mut tr = 0.0;
    let mut l1 = 0.0;
    for i in 0..n {
        for j in 0..n {
            tr += s[(i, j)] * theta[(j, i)];
            if i != j {
                l1 += theta[(i, j)].abs();
            }
        }
    }
    -logdet + tr + lambda * l1
}

fn soft(x: f64, t: f64) -> f64 {
    x.signum() * (x.abs() - t).max(0.0)
}

/// Block coordinate descent on the covariance (Friedman, Hastie and
/// Tibshirani), with the diagonal left unpenalized so `W_ii = S_ii`.
pub fn glasso_cd(s: &DMatrix<f64>, lambda: f64) -> DMatrix<f64> {
    let p = s.nrows();
    let mut w = s.clone();
    let mut betas = vec![vec![0.0; p - 1]; p];
    for _sweep in 0..10_000 {
        let w_old = w.clone();
        for j in 0..p {
            let idx: Vec<usize> = (0..p).filter(|&k| k != j).collect();
            let w11 = DMatrix::from_fn(p - 1, p - 1, |a, b| w[(idx[a], idx[b])]);
            let s12: Vec<f64> = idx.iter().map(|&k| s[(k, j)]).collect();
            let beta = &mut betas[j];
            for _ in 0..10_000 {
                let mut delta: f64 = 0.0;
                for a in 0..p - 1 {
                    let mut r = s12[a];
                    for b in 0..p - 1 {
                        if b != a {
                            r -= w11[(a, b)] * beta[b];
                        }
                    }
                    let new = soft(r, lambda) / w11[(a, a)];
                    delta = delta.max((new - beta[a]).abs());
                    beta[a] = new;
                }
                if delta < 1e-13 {
                    break;
                }
            }
            for (a, &k) in idx.iter().enumerate() {
                let v: f64 = (0..p - 1).map(|b| w11[(a, b)] * beta[b]).sum();
                w[(k, j)] = v;
                w[(j, k)] = v;
            }
        }
        if (&w - &w_old).amax() < 1e-12 {
            break;
        }
    }
    let mut theta = DMatrix::zeros(p, p);
    for j in 0..p {
        let idx: Vec<usize> = (0..p).filter(|&k| k != j).collect();
        let w12: f64 = idx.iter().enumerate().map(|(a, &k)| w[(k, j)] * betas[j][a]).sum();
        let t22 = 1.0 / (w[(j, j)] - w12);
        theta[(j, j)] = t22;
        for (a, &k) in idx.iter().enumerate() {
            theta[(k, j)] = -betas[j][a] * t22;
        }
    }
    (&theta + theta.transpose()) * 0.5
}

/// Sample covariance of `n` Gaussian draws with a random correlation, plus a
/// small ridge.
pub fn random_covariance(rng: &mut ChaCha8Rng, dim: usize, n: usize) -> DMatrix<f64> {
    let mix = DMatrix::from_fn(dim, dim, |i, j| if i == j { 1.0 } else { rng.random_range(-0.6..0.6) });
    let mut s = DMatrix::zeros(dim, dim);
    for _ in 0..n {
        let z = DMatrix::from_fn(dim, 1, |_, _| gaussian(rng));
        let x = &mix * z;
        s += &x * x.transpose();
    }
    s /= n as f64;
    for i in 0..dim {
        s[(i, i)] += 1e-6;
    }
    s
}

pub fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.random_range(f64::EPSILON..1.0);
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

// ---------------------------------------------------------------- DP

/// Minimum over all `Q^T` label paths, with costs accumulated as
/// `acc = cost + (acc + switch)`.
pub fn enumerate_paths(costs: &[Vec<f64>], switch_costs: &[f64]) -> f64 {
    let t_len = costs.len();
    let q = costs[0].len();
    let total = q.pow(t_len as u32);
    let mut best = f64::INFINITY;
    let mut path = vec![0usize; t_len];
    for code in 0..total {
        let mut c = code;
        for slot in path.iter_mut().rev() {
            *slot = c % q;
            c /= q;
        }
        let mut acc = costs[0][path[0]];
        for t in 1..t_len {
            let pen = if path[t] == path[t - 1] { 0.0 } else { switch_costs[t] };
            acc = costs[t][path[t]] + (acc + pen);
        }
        if acc < best {
            best = acc;
        }
    }
    best
}

// ---------------------------------------------------------------- gradients

/// Central differences with step `h`.
pub fn central_difference(params: &[f64], h: f64, f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    let mut p = params.to_vec();
    (0..params.len())
        .map(|i| {
            let orig = p[i];
            p[i] = orig + h;
            let up = f(&p);
            p[i] = orig - h;
            let down = f(&p);
            p[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / na.max(nb).max(1e-300)
}

// ---------------------------------------------------------------- metrics

pub struct BruteMetrics {
    pub acc: f64,
    pub rec: f64,
    pub prec: f64,
    pub f1: f64,
    pub jaccard: f64,
    pub auc: Option<f64>,
    pub apr: Option<f64>,
}

fn first_max(v: &[f64]) -> usize {
    let mut best = 0;
    for i in 1..v.len() {
        if v[i] > v[best] {
            best = i;
        }
    }
    best
}

/// AUC as the fraction of (positive, negative) pairs ordered correctly,
/// ties counting one half.
pub fn pair_auc(scores: &[f64], positive: &[bool]) -> Option<f64> {
    let mut good = 0.0;
    let mut pairs = 0.0;
    for i in 0..scores.len() {
        for j in 0..scores.len() {
            if positive[i] && !positive[j] {
                pairs += 1.0;
                if scores[i] > scores[j] {
                    good += 1.0;
                } else if scores[i] == scores[j] {
                    good += 0.5;
                }
            }
        }
    }
    (pairs > 0.0).then(|| good / pairs)
}

/// Mean over positives of the precision among all records scoring at least
/// as high.
pub fn threshold_ap(scores: &[f64], positive: &[bool]) -> Option<f64> {
    let n_pos = positive.iter().filter(|p| **p).count();
    if n_pos == 0 || n_pos == positive.len() {
        return None;
    }
    let mut total = 0.0;
    for i in 0..scores.len() {
        if !positive[i] {
            continue;
        }
        let above: Vec<usize> = (0..scores.len()).filter(|&j| scores[j] >= scores[i]).collect();
        let hits = above.iter().filter(|&&j| positive[j]).count();
        total += hits as f64 / above.len() as f64;
    }
    Some(total / n_pos as f64)
}

/// Confusion-matrix arithmetic with support weights.
pub fn brute_metrics(truth: &[usize], dists: &[Vec<f64>]) -> BruteMetrics {
    let a = dists[0].len();
    let n = truth.len() as f64;
    let pred: Vec<usize> = dists.iter().map(|d| first_max(d)).collect();
    let mut confusion = vec![vec![0.0; a]; a];
    for (&t, &p) in truth.iter().zip(&pred) {
        confusion[t][p] += 1.0;
    }
    let present: Vec<usize> = (0..a).filter(|&c| truth.contains(&c)).collect();
    let (mut rec, mut prec, mut f1, mut jac, mut auc, mut apr) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    for &c in &present {
        let tp = confusion[c][c];
        let support: f64 = confusion[c].iter().sum();
        let predicted: f64 = (0..a).map(|r| confusion[r][c]).sum();
        let fn_ = support - tp;
        let fp = predicted - tp;
        let w = support / n;
        let r = tp / support;
        let p = if predicted > 0.0 { tp / predicted } else { 0.0 };
        rec += w * r;
        prec += w * p;
        f1 += w * if tp > 0.0 { 2.0 * tp / (2.0 * tp + fp + fn_) } else { 0.0 };
        jac += w * if tp > 0.0 { tp / (tp + fp + fn_) } else { 0.0 };
        let scores: Vec<f64> = dists.iter().map(|d| d[c]).collect();
        let pos: Vec<bool> = truth.iter().map(|&t| t == c).collect();
        if present.len() > 1 {
            auc += w * pair_auc(&scores, &pos).unwrap();
            apr += w * threshold_ap(&scores, &pos).unwrap();
        }
    }
    let correct = truth.iter().zip(&pred).filter(|(t, p)| t == p).count() as f64;
    BruteMetrics {
        acc: correct / n,
        rec,
        prec,
        f1,
        jaccard: jac,
        auc: (present.len() > 1).then_some(auc),
        apr: (present.len() > 1).then_some(apr),
    }
}

// ---------------------------------------------------------------- rank tests

pub struct FriedmanRef {
    pub mean_ranks: Vec<f64>,
    pub chi_square: f64,
    pub p_value: f64,
    /// Holm-adjusted pairwise p-values in (i, j), i < j order.
    pub pairwise: Vec<((usize, usize), f64)>,
}

/// Friedman statistic and Conover post-hoc with Holm correction, written
/// from the textbook formulas for tables without within-block ties.
pub fn friedman_reference(table: &[Vec<f64>]) -> FriedmanRef {
    use statrs::distribution::{ChiSquared, ContinuousCDF, StudentsT};
    let k = table.len();
    let n = table[0].len();
    let mut ranks = vec![vec![0.0; n]; k];
    for b in 0..n {
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&x, &y| table[y][b].partial_cmp(&table[x][b]).unwrap());
        for (pos, &i) in order.iter().enumerate() {
            ranks[i][b] = (pos + 1) as f64;
        }
    }
    let (kf, nf) = (k as f64, n as f64);
    let r: Vec<f64> = ranks.iter().map(|row| row.iter().sum()).collect();
    let chi = 12.0 / (nf * kf * (kf + 1.0)) * r.iter().map(|x| x * x).sum::<f64>() - 3.0 * nf * (kf + 1.0);
    let p_value = 1.0 - ChiSquared::new(kf - 1.0).unwrap().cdf(chi);
    // Without ties, A = n k (k+1)(2k+1)/6.
    let a = nf * kf * (kf + 1.0) * (2.0 * kf + 1.0) / 6.0;
    let c = nf * kf * (kf + 1.0).powi(2) / 4.0;
    let df = (nf - 1.0) * (kf - 1.0);
    let se = (2.0 * nf * (a - c) / df * (1.0 - chi / (nf * (kf - 1.0)))).sqrt();
    let t = StudentsT::new(0.0, 1.0, df).unwrap();
    let mut raw = Vec::new();
    for i in 0..k {
        for j in i + 1..k {
            let stat = (r[i] - r[j]).abs() / se;
            raw.push(((i, j), 2.0 * (1.0 - t.cdf(stat))));
        }
    }
    let mut order: Vec<usize> = (0..raw.len()).collect();
    order.sort_by(|&x, &y| raw[x].1.partial_cmp(&raw[y].1).unwrap());
    let m = raw.len();
    let mut adjusted = vec![0.0; m];
    let mut running: f64 = 0.0;
    for (step, &idx) in order.iter().enumerate() {
        running = running.max(((m - step) as f64 * raw[idx].1).min(1.0));
        adjusted[idx] = running;
    }
    FriedmanRef {
        mean_ranks: r.iter().map(|x| x / nf).collect(),
        chi_square: chi,
        p_value,
        pairwise: raw.iter().zip(adjusted).map(|((ij, _), p)| (*ij, p)).collect(),
    }
}

/// Four methods over six folds, no ties within a fold.
pub fn canonical_table() -> Vec<Vec<f64>> {
    vec![
        vec![0.80, 0.82, 0.79, 0.85, 0.81, 0.83],
        vec![0.75, 0.78, 0.77, 0.80, 0.76, 0.79],
        vec![0.70, 0.74, 0.72, 0.73, 0.71, 0.69],
        vec![0.72, 0.70, 0.74, 0.71, 0.73, 0.75],
    ]
}
