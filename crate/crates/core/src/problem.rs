//! Domain types and the two objectives.
//!
//! Indices are 0-based throughout. A coupling `X` is an `m x n` grid whose
//! row `l` is the plan leaving source point `l` and whose column `k` is the
//! plan arriving at target point `k`.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SonError};

/// Relative tolerance on `|sum(mu) - sum(nu)|`.
pub const MASS_BALANCE_TOL: f64 = 1e-12;

/// Nonnegative `m x n` pairwise transport costs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostMatrix {
    entries: Array2<f64>,
}

impl CostMatrix {
    pub fn new(entries: Array2<f64>) -> Result<Self> {
        let (m, n) = entries.dim();
        if m == 0 || n == 0 {
            return Err(SonError::dim("cost matrix must have at least one row and column"));
        }
        if let Some(((i, j), v)) = entries
            .indexed_iter()
            .find(|(_, v)| !v.is_finite() || **v < 0.0)
        {
            return Err(SonError::invalid(format!(
                "cost entry ({i},{j}) = {v} is not a finite nonnegative number"
            )));
        }
        Ok(Self { entries })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::new(grid_from_rows(rows)?)
    }

    pub fn rows(&self) -> usize {
        self.entries.nrows()
    }

    pub fn cols(&self) -> usize {
        self.entries.ncols()
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.entries.row(i)
    }

    pub fn col(&self, j: usize) -> ArrayView1<'_, f64> {
        self.entries.column(j)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[[i, j]]
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.entries.view()
    }

    pub fn max(&self) -> f64 {
        self.entries.iter().cloned().fold(0.0, f64::max)
    }

    pub fn mean(&self) -> f64 {
        self.entries.mean().unwrap_or(0.0)
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.entries
    }
}

/// Positive source (`mu`) and target (`nu`) masses of equal total.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Marginals {
    mu: Array1<f64>,
    nu: Array1<f64>,
}

impl Marginals {
    pub fn new(mu: Array1<f64>, nu: Array1<f64>) -> Result<Self> {
        if mu.is_empty() || nu.is_empty() {
            return Err(SonError::dim("marginals must be nonempty"));
        }
        for (name, v) in [("mu", &mu), ("nu", &nu)] {
            if let Some((i, x)) = v.iter().enumerate().find(|(_, x)| !x.is_finite() || **x <= 0.0) {
                return Err(SonError::invalid(format!("{name}[{i}] = {x} is not a positive mass")));
            }
        }
        let (sm, sn) = (mu.sum(), nu.sum());
        if (sm - sn).abs() > MASS_BALANCE_TOL * sm {
            return Err(SonError::invalid(format!(
                "unbalanced marginals: sum(mu) = {sm}, sum(nu) = {sn}"
            )));
        }
        Ok(Self { mu, nu })
    }

    /// Uniform probability masses `1/m` and `1/n`.
    pub fn uniform(m: usize, n: usize) -> Result<Self> {
        if m == 0 || n == 0 {
            return Err(SonError::dim("marginals must be nonempty"));
        }
        Self::new(
            Array1::from_elem(m, 1.0 / m as f64),
            Array1::from_elem(n, 1.0 / n as f64),
        )
    }

    pub fn mu(&self) -> &Array1<f64> {
        &self.mu
    }

    pub fn nu(&self) -> &Array1<f64> {
        &self.nu
    }

    pub fn total(&self) -> f64 {
        self.mu.sum()
    }

    /// The independent coupling `mu nu^T / sum(mu)`, feasible by construction.
    pub fn independent_coupling(&self) -> Array2<f64> {
        let total = self.total();
        Array2::from_shape_fn((self.mu.len(), self.nu.len()), |(i, j)| {
            self.mu[i] * self.nu[j] / total
        })
    }
}

/// `||X 1 - mu||_1 + ||X^T 1 - nu||_1`.
pub fn feasibility_gap(plan: ArrayView2<'_, f64>, marginals: &Marginals) -> f64 {
    let rows = plan.sum_axis(Axis(1));
    let cols = plan.sum_axis(Axis(0));
    let r: f64 = rows.iter().zip(marginals.mu()).map(|(a, b)| (a - b).abs()).sum();
    let c: f64 = cols.iter().zip(marginals.nu()).map(|(a, b)| (a - b).abs()).sum();
    r + c
}

/// A nonnegative transport plan together with its marginal-feasibility gap.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Coupling {
    plan: Array2<f64>,
    feasibility_gap: f64,
}

impl Coupling {
    /// Rejects negative or non-finite entries.
    pub fn new(plan: Array2<f64>, marginals: &Marginals) -> Result<Self> {
        check_plan_shape(plan.view(), marginals)?;
        if let Some(((i, j), v)) = plan.indexed_iter().find(|(_, v)| !v.is_finite() || **v < 0.0) {
            return Err(SonError::invalid(format!(
                "plan entry ({i},{j}) = {v} is not a finite nonnegative number"
            )));
        }
        let feasibility_gap = feasibility_gap(plan.view(), marginals);
        Ok(Self { plan, feasibility_gap })
    }

    /// Clamps negative entries to zero before wrapping.
    pub fn clamped(mut plan: Array2<f64>, marginals: &Marginals) -> Result<Self> {
        plan.mapv_inplace(|v| if v < 0.0 { 0.0 } else { v });
        Self::new(plan, marginals)
    }

    pub fn independent(marginals: &Marginals) -> Self {
        let plan = marginals.independent_coupling();
        let feasibility_gap = feasibility_gap(plan.view(), marginals);
        Self { plan, feasibility_gap }
    }

    pub fn plan(&self) -> &Array2<f64> {
        &self.plan
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.plan.view()
    }

    pub fn feasibility_gap(&self) -> f64 {
        self.feasibility_gap
    }

    pub fn recompute_gap(&self, marginals: &Marginals) -> f64 {
        feasibility_gap(self.plan.view(), marginals)
    }

    pub fn total_mass(&self) -> f64 {
        self.plan.sum()
    }

    pub fn into_plan(self) -> Array2<f64> {
        self.plan
    }
}

fn check_plan_shape(plan: ArrayView2<'_, f64>, marginals: &Marginals) -> Result<()> {
    let (m, n) = plan.dim();
    if m != marginals.mu().len() || n != marginals.nu().len() {
        return Err(SonError::dim(format!(
            "plan is {m}x{n} but marginals are {}x{}",
            marginals.mu().len(),
            marginals.nu().len()
        )));
    }
    Ok(())
}

/// SON kernel coefficients: `rows` (m x m) couples source points, `cols`
/// (n x n) couples target points. Per-side weights are folded in.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelWeights {
    rows: Array2<f64>,
    cols: Array2<f64>,
}

impl KernelWeights {
    pub fn new(rows: Array2<f64>, cols: Array2<f64>) -> Result<Self> {
        for (name, k) in [("row", &rows), ("column", &cols)] {
            let (a, b) = k.dim();
            if a != b {
                return Err(SonError::dim(format!("{name} kernel is {a}x{b}, expected square")));
            }
            for ((i, j), v) in k.indexed_iter() {
                if !v.is_finite() || *v < 0.0 {
                    return Err(SonError::invalid(format!(
                        "{name} kernel entry ({i},{j}) = {v} is not finite nonnegative"
                    )));
                }
                if i == j && *v != 0.0 {
                    return Err(SonError::invalid(format!("{name} kernel diagonal ({i},{i}) must be zero")));
                }
                if *v != k[[j, i]] {
                    return Err(SonError::invalid(format!(
                        "{name} kernel is not symmetric at ({i},{j})"
                    )));
                }
            }
        }
        Ok(Self { rows, cols })
    }

    /// All off-diagonal entries equal to `row_value` / `col_value`.
    pub fn constant(m: usize, n: usize, row_value: f64, col_value: f64) -> Result<Self> {
        let fill = |d: usize, v: f64| Array2::from_shape_fn((d, d), |(i, j)| if i == j { 0.0 } else { v });
        Self::new(fill(m, row_value), fill(n, col_value))
    }

    pub fn zeros(m: usize, n: usize) -> Self {
        Self {
            rows: Array2::zeros((m, m)),
            cols: Array2::zeros((n, n)),
        }
    }

    pub fn rows(&self) -> &Array2<f64> {
        &self.rows
    }

    pub fn cols(&self) -> &Array2<f64> {
        &self.cols
    }

    pub fn max_entry(&self) -> f64 {
        self.rows.iter().chain(self.cols.iter()).cloned().fold(0.0, f64::max)
    }
}

/// A complete SON-regularized transport instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub cost: CostMatrix,
    pub marginals: Marginals,
    pub kernels: KernelWeights,
    /// Global regularization strength.
    pub lambda: f64,
    /// Marginal-penalty weight of the relaxed objective.
    pub theta: Option<f64>,
}

impl ProblemSpec {
    pub fn new(
        cost: CostMatrix,
        marginals: Marginals,
        kernels: KernelWeights,
        lambda: f64,
        theta: Option<f64>,
    ) -> Result<Self> {
        let (m, n) = (cost.rows(), cost.cols());
        if marginals.mu().len() != m || marginals.nu().len() != n {
            return Err(SonError::dim(format!(
                "cost is {m}x{n} but marginals have lengths {} and {}",
                marginals.mu().len(),
                marginals.nu().len()
            )));
        }
        if kernels.rows().nrows() != m || kernels.cols().nrows() != n {
            return Err(SonError::dim(format!(
                "cost is {m}x{n} but kernels are {}x{0} and {}x{1}",
                kernels.rows().nrows(),
                kernels.cols().nrows()
            )));
        }
        if !lambda.is_finite() || lambda < 0.0 {
            return Err(SonError::invalid(format!("lambda = {lambda} must be finite and >= 0")));
        }
        if let Some(t) = theta {
            if !t.is_finite() || t < 0.0 {
                return Err(SonError::invalid(format!("theta = {t} must be finite and >= 0")));
            }
        }
        Ok(Self { cost, marginals, kernels, lambda, theta })
    }

    pub fn m(&self) -> usize {
        self.cost.rows()
    }

    pub fn n(&self) -> usize {
        self.cost.cols()
    }

    fn check_plan(&self, plan: ArrayView2<'_, f64>) -> Result<()> {
        if plan.dim() != (self.m(), self.n()) {
            return Err(SonError::dim(format!(
                "plan is {:?} but problem is {}x{}",
                plan.dim(),
                self.m(),
                self.n()
            )));
        }
        Ok(())
    }

    /// `<D, X>`.
    pub fn transport_cost(&self, plan: ArrayView2<'_, f64>) -> Result<f64> {
        self.check_plan(plan)?;
        Ok(linear_cost(self.cost.view(), plan))
    }

    /// Sum over ordered pairs of `R[l][k] ||x_l - x_k|| + S[l][k] ||x^l - x^k||`.
    pub fn son_penalty(&self, plan: ArrayView2<'_, f64>) -> Result<f64> {
        self.check_plan(plan)?;
        Ok(son_sum(self.kernels.rows(), plan) + son_sum(self.kernels.cols(), plan.t()))
    }

    /// `<D, X> + lambda * SON(X)`; feasibility is not checked.
    pub fn full_objective(&self, plan: ArrayView2<'_, f64>) -> Result<f64> {
        Ok(self.transport_cost(plan)? + self.lambda * self.son_penalty(plan)?)
    }

    /// Full objective plus `(theta/2)(||X 1 - mu||^2 + ||X^T 1 - nu||^2)`.
    pub fn relaxed_objective(&self, plan: ArrayView2<'_, f64>) -> Result<f64> {
        let theta = self.theta.ok_or(SonError::MissingTheta)?;
        let base = self.full_objective(plan)?;
        let rows = plan.sum_axis(Axis(1));
        let cols = plan.sum_axis(Axis(0));
        let r: f64 = rows.iter().zip(self.marginals.mu()).map(|(a, b)| (a - b).powi(2)).sum();
        let c: f64 = cols.iter().zip(self.marginals.nu()).map(|(a, b)| (a - b).powi(2)).sum();
        Ok(base + 0.5 * theta * (r + c))
    }
}

fn linear_cost(cost: ArrayView2<'_, f64>, plan: ArrayView2<'_, f64>) -> f64 {
    cost.iter().zip(plan.iter()).map(|(d, x)| d * x).sum()
}

/// `sum_{l != k} w[l][k] || slice_l - slice_k ||` where slices are rows of `x`.
fn son_sum(weights: &Array2<f64>, x: ArrayView2<'_, f64>) -> f64 {
    let d = x.nrows();
    let mut total = 0.0;
    for l in 0..d {
        for k in 0..d {
            let w = weights[[l, k]];
            if l == k || w == 0.0 {
                continue;
            }
            let dist: f64 = x
                .row(l)
                .iter()
                .zip(x.row(k))
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            total += w * dist;
        }
    }
    total
}

pub(crate) fn grid_from_rows(rows: &[Vec<f64>]) -> Result<Array2<f64>> {
    let m = rows.len();
    let n = rows.first().map_or(0, Vec::len);
    if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != n) {
        return Err(SonError::dim(format!("row {i} has {} entries, expected {n}", r.len())));
    }
    Array2::from_shape_vec((m, n), rows.concat()).map_err(|e| SonError::dim(e.to_string()))
}
