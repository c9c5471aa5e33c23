//! Exact dynamic programming over cluster labels with a per-step switch cost.

/// Cost of a label path, accumulated left to right:
/// `acc_t = cost[t][q_t] + (acc_{t-1} + switch)`.
///
/// [`assign_path`] minimizes exactly this expression, so its optimum can be
/// compared bit-for-bit against enumeration.
pub fn path_cost(costs: &[Vec<f64>], switch_costs: &[f64], path: &[usize]) -> f64 {
    let mut acc = costs[0][path[0]];
    for t in 1..path.len() {
        let pen = if path[t] != path[t - 1] {
            switch_costs[t]
        } else {
            0.0
        };
        acc = costs[t][path[t]] + (acc + pen);
    }
    acc
}

/// Forward table `best[t][q]`: the cheapest path over steps `0..=t` that
/// ends in `q`, with the predecessor choice kept for backtracking. Ties go to
/// the lower predecessor id.
fn forward(costs: &[Vec<f64>], switch_costs: &[f64]) -> (Vec<Vec<f64>>, Vec<Vec<usize>>) {
    let t_len = costs.len();
    let q_len = costs[0].len();
    let mut best = vec![vec![0.0; q_len]; t_len];
    let mut back = vec![vec![0usize; q_len]; t_len];
    best[0].clone_from(&costs[0]);
    for t in 1..t_len {
        for q in 0..q_len {
            let mut arg = 0;
            let mut val = f64::INFINITY;
            for p in 0..q_len {
                let pen = if p != q { switch_costs[t] } else { 0.0 };
                let cand = best[t - 1][p] + pen;
                if cand < val {
                    val = cand;
                    arg = p;
                }
            }
            best[t][q] = costs[t][q] + val;
            back[t][q] = arg;
        }
    }
    (best, back)
}

fn argmin_low(row: &[f64]) -> usize {
    let mut arg = 0;
    for (q, v) in row.iter().enumerate() {
        if *v < row[arg] {
            arg = q;
        }
    }
    arg
}

/// Globally optimal label path and its cost. `switch_costs[0]` is ignored.
pub fn assign_path(costs: &[Vec<f64>], switch_costs: &[f64]) -> (Vec<usize>, f64) {
    if costs.is_empty() {
        return (Vec::new(), 0.0);
    }
    assert_eq!(costs.len(), switch_costs.len());
    let (best, back) = forward(costs, switch_costs);
    let t_len = costs.len();
    let mut path = vec![0; t_len];
    path[t_len - 1] = argmin_low(&best[t_len - 1]);
    for t in (1..t_len).rev() {
        path[t - 1] = back[t][path[t]];
    }
    let cost = best[t_len - 1][path[t_len - 1]];
    (path, cost)
}

/// Filtered labels: at each step the end state of the cheapest path over
/// steps `0..=t`. Uses no information after `t`.
pub fn causal_path(costs: &[Vec<f64>], switch_costs: &[f64]) -> Vec<usize> {
    if costs.is_empty() {
        return Vec::new();
    }
    let (best, _) = forward(costs, switch_costs);
    best.iter().map(|row| argmin_low(row)).collect()
}
