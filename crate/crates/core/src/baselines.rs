//! Comparison baselines: log-domain Sinkhorn and an exact transportation
//! simplex for small instances.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SonError};
use crate::problem::{feasibility_gap, CostMatrix, Coupling, Marginals};

/// Largest `m * n` accepted by [`exact_ot`].
pub const EXACT_OT_MAX_CELLS: usize = 400;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SinkhornConfig {
    /// Entropic regularization in cost units.
    pub epsilon: f64,
    pub max_iters: usize,
    /// Target L1 marginal violation.
    pub tol: f64,
}

impl SinkhornConfig {
    pub fn new(epsilon: f64, max_iters: usize, tol: f64) -> Result<Self> {
        let cfg = Self { epsilon, max_iters, tol };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) || !self.epsilon.is_finite() {
            return Err(SonError::invalid(format!("sinkhorn epsilon must be > 0, got {}", self.epsilon)));
        }
        if !(self.tol >= 0.0) {
            return Err(SonError::invalid(format!("sinkhorn tol must be >= 0, got {}", self.tol)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SinkhornResult {
    pub coupling: Coupling,
    pub iterations: usize,
    /// L1 marginal violation of the returned plan.
    pub violation: f64,
    /// Set when `max_iters` ran out before reaching `tol`.
    pub not_converged: bool,
}

fn log_sum_exp(vals: impl Iterator<Item = f64> + Clone) -> f64 {
    let mx = vals.clone().fold(f64::NEG_INFINITY, f64::max);
    if mx == f64::NEG_INFINITY {
        return mx;
    }
    mx + vals.map(|v| (v - mx).exp()).sum::<f64>().ln()
}

/// Entropic OT by alternating scaling of the dual potentials `f`, `g`, with
/// `X_ij = exp((f_i + g_j - D_ij) / eps)`.
pub fn sinkhorn(cost: &CostMatrix, marginals: &Marginals, cfg: &SinkhornConfig) -> Result<SinkhornResult> {
    cfg.validate()?;
    let (m, n) = (cost.rows(), cost.cols());
    if marginals.mu().len() != m || marginals.nu().len() != n {
        return Err(SonError::dim(format!(
            "cost is {m}x{n} but marginals have lengths {}/{}",
            marginals.mu().len(),
            marginals.nu().len()
        )));
    }
    let eps = cfg.epsilon;
    let d = cost.view();
    let log_mu: Array1<f64> = marginals.mu().mapv(f64::ln);
    let log_nu: Array1<f64> = marginals.nu().mapv(f64::ln);
    let mut f = Array1::<f64>::zeros(m);
    let mut g = Array1::<f64>::zeros(n);

    let mut iterations = 0;
    while iterations < cfg.max_iters {
        for i in 0..m {
            f[i] = eps * (log_mu[i] - log_sum_exp((0..n).map(|j| (g[j] - d[[i, j]]) / eps)));
        }
        for j in 0..n {
            g[j] = eps * (log_nu[j] - log_sum_exp((0..m).map(|i| (f[i] - d[[i, j]]) / eps)));
        }
        iterations += 1;
        // columns are exact after the g update; only rows can be off
        let mut row_err = 0.0;
        for i in 0..m {
            let s: f64 = (0..n).map(|j| ((f[i] + g[j] - d[[i, j]]) / eps).exp()).sum();
            row_err += (s - marginals.mu()[i]).abs();
        }
        if row_err <= cfg.tol {
            break;
        }
    }
    let plan = Array2::from_shape_fn((m, n), |(i, j)| ((f[i] + g[j] - d[[i, j]]) / eps).exp());
    let violation = feasibility_gap(plan.view(), marginals);
    let coupling = Coupling::new(plan, marginals)?;
    Ok(SinkhornResult {
        coupling,
        iterations,
        violation,
        not_converged: violation > cfg.tol,
    })
}

/// Optimal plan with the dual certificate recovered from the final basis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExactSolution {
    pub coupling: Coupling,
    pub objective: f64,
    /// `p_i`, with `p_0 = 0`.
    pub row_duals: Vec<f64>,
    pub col_duals: Vec<f64>,
    /// Basic cells of the final spanning-tree basis, `m + n - 1` of them.
    pub basis: Vec<(usize, usize)>,
    pub pivots: usize,
}

impl ExactSolution {
    /// `max(0, max_ij p_i + q_j - D_ij)`.
    pub fn dual_violation(&self, cost: &CostMatrix) -> f64 {
        let mut worst = 0.0f64;
        for (i, p) in self.row_duals.iter().enumerate() {
            for (j, q) in self.col_duals.iter().enumerate() {
                worst = worst.max(p + q - cost.get(i, j));
            }
        }
        worst
    }

    /// `max |p_i + q_j - D_ij|` over cells with `X_ij > threshold`.
    pub fn slackness_residual(&self, cost: &CostMatrix, threshold: f64) -> f64 {
        let mut worst = 0.0f64;
        for ((i, j), &x) in self.coupling.plan().indexed_iter() {
            if x > threshold {
                worst = worst.max((self.row_duals[i] + self.col_duals[j] - cost.get(i, j)).abs());
            }
        }
        worst
    }
}

pub fn exact_ot(cost: &CostMatrix, marginals: &Marginals) -> Result<Coupling> {
    Ok(exact_ot_with_duals(cost, marginals)?.coupling)
}

/// Primal transportation simplex: northwest-corner start, potentials from
/// the basis tree, Bland's rule for entering and leaving cells.
pub fn exact_ot_with_duals(cost: &CostMatrix, marginals: &Marginals) -> Result<ExactSolution> {
    let (m, n) = (cost.rows(), cost.cols());
    if marginals.mu().len() != m || marginals.nu().len() != n {
        return Err(SonError::dim(format!(
            "cost is {m}x{n} but marginals have lengths {}/{}",
            marginals.mu().len(),
            marginals.nu().len()
        )));
    }
    if m * n > EXACT_OT_MAX_CELLS {
        return Err(SonError::UnsupportedSize(format!(
            "exact OT is limited to m*n <= {EXACT_OT_MAX_CELLS}, got {m}x{n}"
        )));
    }
    let mut x = Array2::<f64>::zeros((m, n));
    let mut basic = Array2::<bool>::from_elem((m, n), false);
    let mut basis = Vec::with_capacity(m + n - 1);

    let mut supply = marginals.mu().to_vec();
    let mut demand = marginals.nu().to_vec();
    let (mut i, mut j) = (0, 0);
    loop {
        let amount = supply[i].min(demand[j]).max(0.0);
        x[[i, j]] = amount;
        basic[[i, j]] = true;
        basis.push((i, j));
        supply[i] -= amount;
        demand[j] -= amount;
        if i == m - 1 && j == n - 1 {
            break;
        }
        if j == n - 1 || (i < m - 1 && supply[i] <= demand[j]) {
            i += 1;
        } else {
            j += 1;
        }
    }
    // float residue from the local subtractions lands on the last cell
    let rows = x.sum_axis(ndarray::Axis(1));
    x[[m - 1, n - 1]] += marginals.mu()[m - 1] - rows[m - 1];
    x[[m - 1, n - 1]] = x[[m - 1, n - 1]].max(0.0);

    let scale = cost.view().iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1.0);
    let tol = 1e-12 * scale;
    let max_pivots = 50 * (m * n + m + n) + 1000;
    let mut pivots = 0;
    let (mut u, mut v) = potentials(cost, &basis, m, n);
    loop {
        let entering = (0..m * n).map(|k| (k / n, k % n)).find(|&(a, b)| !basic[[a, b]] && cost.get(a, b) - u[a] - v[b] < -tol);
        let Some((ei, ej)) = entering else { break };
        if pivots >= max_pivots {
            return Err(SonError::invalid("transportation simplex exceeded its pivot limit"));
        }
        let path = tree_path(&basis, m, n, ei, ej);
        // odd positions along the row->column path lose mass
        let leaving = path
            .iter()
            .step_by(2)
            .copied()
            .min_by(|&(a, b), &(c, d)| x[[a, b]].total_cmp(&x[[c, d]]).then((a * n + b).cmp(&(c * n + d))))
            .expect("cycle has a minus cell");
        let theta = x[[leaving.0, leaving.1]];
        for (k, &(a, b)) in path.iter().enumerate() {
            if k % 2 == 0 {
                x[[a, b]] = (x[[a, b]] - theta).max(0.0);
            } else {
                x[[a, b]] += theta;
            }
        }
        x[[ei, ej]] = theta;
        x[[leaving.0, leaving.1]] = 0.0;
        basic[[leaving.0, leaving.1]] = false;
        basic[[ei, ej]] = true;
        let pos = basis.iter().position(|&c| c == leaving).expect("leaving cell is basic");
        basis[pos] = (ei, ej);
        pivots += 1;
        (u, v) = potentials(cost, &basis, m, n);
    }
    let objective = cost.view().iter().zip(x.iter()).map(|(d, p)| d * p).sum();
    let coupling = Coupling::new(x, marginals)?;
    Ok(ExactSolution {
        coupling,
        objective,
        row_duals: u,
        col_duals: v,
        basis,
        pivots,
    })
}

/// Solves `u_i + v_j = D_ij` on the basis tree with `u_0 = 0`.
fn potentials(cost: &CostMatrix, basis: &[(usize, usize)], m: usize, n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut u = vec![f64::NAN; m];
    let mut v = vec![f64::NAN; n];
    let adj = adjacency(basis, m, n);
    u[0] = 0.0;
    let mut stack = vec![0usize];
    while let Some(node) = stack.pop() {
        for &(a, b) in &adj[node] {
            if node < m {
                if v[b].is_nan() {
                    v[b] = cost.get(a, b) - u[a];
                    stack.push(m + b);
                }
            } else if u[a].is_nan() {
                u[a] = cost.get(a, b) - v[b];
                stack.push(a);
            }
        }
    }
    (u, v)
}

fn adjacency(basis: &[(usize, usize)], m: usize, n: usize) -> Vec<Vec<(usize, usize)>> {
    let mut adj = vec![Vec::new(); m + n];
    for &(a, b) in basis {
        adj[a].push((a, b));
        adj[m + b].push((a, b));
    }
    adj
}

/// Basis cells on the tree path from row node `r` to column node `c`, in order.
fn tree_path(basis: &[(usize, usize)], m: usize, n: usize, r: usize, c: usize) -> Vec<(usize, usize)> {
    let adj = adjacency(basis, m, n);
    let mut parent: Vec<Option<(usize, (usize, usize))>> = vec![None; m + n];
    let mut seen = vec![false; m + n];
    let mut queue = std::collections::VecDeque::from([r]);
    seen[r] = true;
    let target = m + c;
    while let Some(node) = queue.pop_front() {
        if node == target {
            break;
        }
        for &(a, b) in &adj[node] {
            let other = if node < m { m + b } else { a };
            if !seen[other] {
                seen[other] = true;
                parent[other] = Some((node, (a, b)));
                queue.push_back(other);
            }
        }
    }
    let mut path = Vec::new();
    let mut node = target;
    while node != r {
        let (prev, cell) = parent[node].expect("basis is a spanning tree");
        path.push(cell);
        node = prev;
    }
    path.reverse();
    path
}
