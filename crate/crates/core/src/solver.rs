//! Accelerated stochastic incremental proximal-projection solver.
//!
//! Each iteration picks one pair term or one cylinder constraint. A pair
//! term takes a prox step at `X + step * g_t` on its two rows (or columns);
//! a constraint projects `X + step * h_t` on its row (or column). The chosen
//! term's memory then absorbs
//!
//! ```text
//! a_t = rho_acc * (X_old - X_new) / step - alpha * (sum of all memories)|_support
//! ```
//!
//! where the restriction rescales by `K / K_i` (Just-in-Time update). All
//! memory vectors start at zero and live only on their term's support, so
//! the running sum is updated incrementally in `O(m + n)` per iteration.
//!
//! Memory for pair terms is `O(P (m + n))` floats; at `m = n = 300` that is
//! roughly 860 MB, which is the practical ceiling of this layout.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SonError};
use crate::problem::{feasibility_gap, Coupling, Marginals, ProblemSpec};
use crate::prox::pair_prox_in_place;
use crate::simplex::project_simplex_in_place;
use crate::terms::{linear_divisors, pair_count};

/// How the next term is drawn.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampling {
    /// Uniform over all `P + Q` terms.
    Uniform,
    /// Objective pool with probability `p_obj`, then uniform inside the pool.
    SplitPools { p_obj: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Fixed step size.
    pub step: f64,
    /// Damping of the new-subgradient part of the memory update, in (0, 1).
    pub rho_acc: f64,
    /// Weight of the memory-sum (acceleration) part of the update.
    pub alpha: f64,
    /// One epoch is `P + Q` iterations.
    pub epochs: usize,
    pub seed: u64,
    pub jit: bool,
    pub sampling: Sampling,
    pub round_output: bool,
    pub support_threshold: f64,
    /// Progress line on stderr every this many epochs; 0 disables.
    pub log_every: usize,
}

impl SolverConfig {
    /// Instance-dependent defaults.
    pub fn defaults_for(spec: &ProblemSpec) -> Self {
        let (m, n) = (spec.m(), spec.n());
        let scale = spec.lambda * spec.kernels.max_entry() * ((m + n) as f64).sqrt() + spec.cost.max();
        let step = if scale > 0.0 { 0.5 / scale } else { 1.0 };
        Self {
            step,
            rho_acc: 0.9,
            alpha: 1.0 / (pair_count(m, n) + m + n) as f64,
            epochs: 100,
            seed: 0,
            jit: true,
            sampling: Sampling::Uniform,
            round_output: true,
            support_threshold: 1e-3 * spec.marginals.total() / (m * n) as f64,
            log_every: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step > 0.0) || !self.step.is_finite() {
            return Err(SonError::invalid(format!("step must be > 0, got {}", self.step)));
        }
        if !(self.rho_acc > 0.0 && self.rho_acc < 1.0) {
            return Err(SonError::invalid(format!("rho_acc must lie in (0, 1), got {}", self.rho_acc)));
        }
        if !(self.alpha > 0.0) || !self.alpha.is_finite() {
            return Err(SonError::invalid(format!("alpha must be > 0, got {}", self.alpha)));
        }
        if !(self.support_threshold >= 0.0) {
            return Err(SonError::invalid("support_threshold must be >= 0"));
        }
        if let Sampling::SplitPools { p_obj } = self.sampling {
            if !(0.0..=1.0).contains(&p_obj) {
                return Err(SonError::invalid(format!("p_obj must lie in [0, 1], got {p_obj}")));
            }
        }
        Ok(())
    }
}

/// Per-term memory vectors and their running sum.
#[derive(Clone, Debug)]
pub struct MemoryStore {
    m: usize,
    n: usize,
    /// `m(m-1)` row-pair terms, each two length-`n` slices.
    row_pair: Vec<f64>,
    /// `n(n-1)` column-pair terms, each two length-`m` slices.
    col_pair: Vec<f64>,
    /// Row constraint `l` occupies `row_simplex[l*n..(l+1)*n]`.
    row_simplex: Vec<f64>,
    /// Column constraint `k` occupies `col_simplex[k*m..(k+1)*m]`.
    col_simplex: Vec<f64>,
    total: Array2<f64>,
}

impl MemoryStore {
    pub fn zeros(m: usize, n: usize) -> Self {
        Self {
            m,
            n,
            row_pair: vec![0.0; m * m.saturating_sub(1) * 2 * n],
            col_pair: vec![0.0; n * n.saturating_sub(1) * 2 * m],
            row_simplex: vec![0.0; m * n],
            col_simplex: vec![0.0; n * m],
            total: Array2::zeros((m, n)),
        }
    }

    pub fn total(&self) -> &Array2<f64> {
        &self.total
    }

    /// Sum of every memory vector, recomputed from scratch.
    pub fn recompute_total(&self) -> Array2<f64> {
        let (m, n) = (self.m, self.n);
        let mut out = Array2::zeros((m, n));
        for t in 0..m * m.saturating_sub(1) {
            let (l, k) = row_pair_rows(m, t);
            let base = t * 2 * n;
            for j in 0..n {
                out[[l, j]] += self.row_pair[base + j];
                out[[k, j]] += self.row_pair[base + n + j];
            }
        }
        for t in 0..n * n.saturating_sub(1) {
            let (l, k) = row_pair_rows(n, t);
            let base = t * 2 * m;
            for i in 0..m {
                out[[i, l]] += self.col_pair[base + i];
                out[[i, k]] += self.col_pair[base + m + i];
            }
        }
        for l in 0..m {
            for j in 0..n {
                out[[l, j]] += self.row_simplex[l * n + j];
            }
        }
        for k in 0..n {
            for i in 0..m {
                out[[i, k]] += self.col_simplex[k * m + i];
            }
        }
        out
    }

    /// `max |total - recomputed| / (1 + max |total|)`.
    pub fn consistency_error(&self) -> f64 {
        let fresh = self.recompute_total();
        let scale = 1.0 + self.total.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        self.total
            .iter()
            .zip(fresh.iter())
            .fold(0.0f64, |a, (x, y)| a.max((x - y).abs()))
            / scale
    }
}

/// Decodes a flat row-pair index into `(l, k)`, matching `terms::term_at`.
fn row_pair_rows(d: usize, t: usize) -> (usize, usize) {
    let (l, r) = (t / (d - 1), t % (d - 1));
    (l, if r >= l { r + 1 } else { r })
}

/// `K / K_i` with `K = P + Q` and `K_i = 2(m-1) + 2(n-1) + 2`, the number
/// of terms touching any single entry of `X`.
pub fn jit_scale(m: usize, n: usize) -> f64 {
    let k = (pair_count(m, n) + m + n) as f64;
    let ki = (2 * (m - 1) + 2 * (n - 1) + 2) as f64;
    k / ki
}

/// JiT restriction of `total` to `support`, returned aligned with `support`.
pub fn jit_restrict(total: &Array2<f64>, support: &[(usize, usize)]) -> Vec<f64> {
    let (m, n) = total.dim();
    let s = jit_scale(m, n);
    support.iter().map(|&(i, j)| s * total[[i, j]]).collect()
}

/// Result of a draw: an index into the objective pool or the constraint pool.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SampledTerm {
    Objective(usize),
    Constraint(usize),
}

pub fn sample_term<R: Rng + ?Sized>(rng: &mut R, scheme: Sampling, p: usize, q: usize) -> SampledTerm {
    debug_assert!(p + q >= 1);
    match scheme {
        Sampling::Uniform => {
            let idx = rng.random_range(0..p + q);
            if idx < p {
                SampledTerm::Objective(idx)
            } else {
                SampledTerm::Constraint(idx - p)
            }
        }
        Sampling::SplitPools { p_obj } => {
            let objective = if q == 0 {
                true
            } else if p == 0 {
                false
            } else {
                rng.random::<f64>() < p_obj
            };
            if objective {
                SampledTerm::Objective(rng.random_range(0..p))
            } else {
                SampledTerm::Constraint(rng.random_range(0..q))
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub epoch: usize,
    pub objective: f64,
    pub feasibility_gap: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SolveReport {
    pub coupling: Coupling,
    pub objective_trace: Vec<TracePoint>,
    pub support_pattern: Array2<bool>,
    pub iterations: u64,
    pub wall_time: f64,
}

impl SolveReport {
    /// Running minimum of the traced objective.
    pub fn best_so_far(&self) -> Vec<f64> {
        let mut best = f64::INFINITY;
        self.objective_trace
            .iter()
            .map(|t| {
                best = best.min(t.objective);
                best
            })
            .collect()
    }
}

/// `X > threshold` entrywise.
pub fn support_pattern(plan: &Array2<f64>, threshold: f64) -> Array2<bool> {
    plan.mapv(|v| v > threshold)
}

/// Repairs a nonnegative plan into an exactly feasible coupling: rows are
/// scaled down to at most `mu`, columns to at most `nu`, and the remaining
/// deficit is added back as the outer product of row and column deficits.
pub fn round_to_feasible(plan: &Array2<f64>, marginals: &Marginals) -> Result<Coupling> {
    let (m, n) = plan.dim();
    if m != marginals.mu().len() || n != marginals.nu().len() {
        return Err(SonError::dim(format!(
            "plan is {m}x{n} but marginals are {}x{}",
            marginals.mu().len(),
            marginals.nu().len()
        )));
    }
    if plan.iter().any(|v| *v < 0.0 || !v.is_finite()) {
        return Err(SonError::invalid("rounding requires a finite nonnegative plan"));
    }
    if plan.sum() == 0.0 {
        return Ok(Coupling::independent(marginals));
    }
    let mut x = plan.clone();
    for (i, mut row) in x.rows_mut().into_iter().enumerate() {
        let s = row.sum();
        let target = marginals.mu()[i];
        if s > target {
            row.mapv_inplace(|v| v * (target / s));
        }
    }
    for (j, mut col) in x.columns_mut().into_iter().enumerate() {
        let s = col.sum();
        let target = marginals.nu()[j];
        if s > target {
            col.mapv_inplace(|v| v * (target / s));
        }
    }
    let row_def: Vec<f64> = x
        .rows()
        .into_iter()
        .zip(marginals.mu())
        .map(|(r, mu)| (mu - r.sum()).max(0.0))
        .collect();
    let col_def: Vec<f64> = x
        .columns()
        .into_iter()
        .zip(marginals.nu())
        .map(|(c, nu)| (nu - c.sum()).max(0.0))
        .collect();
    let total_def: f64 = row_def.iter().sum();
    if total_def > 0.0 {
        for i in 0..m {
            if row_def[i] == 0.0 {
                continue;
            }
            for j in 0..n {
                x[[i, j]] += row_def[i] * col_def[j] / total_def;
            }
        }
    }
    Coupling::new(x, marginals)
}

#[cfg(not(target_arch = "wasm32"))]
fn now() -> Option<std::time::Instant> {
    Some(std::time::Instant::now())
}

#[cfg(not(target_arch = "wasm32"))]
fn elapsed(t: Option<std::time::Instant>) -> f64 {
    t.map_or(0.0, |t| t.elapsed().as_secs_f64())
}

#[cfg(target_arch = "wasm32")]
fn now() -> Option<()> {
    None
}

#[cfg(target_arch = "wasm32")]
fn elapsed(_: Option<()>) -> f64 {
    0.0
}

/// Mutable solver state; `solve` drives it, tests may step it directly.
pub struct SolverState<'a> {
    spec: &'a ProblemSpec,
    cfg: SolverConfig,
    x: Array2<f64>,
    memory: MemoryStore,
    rng: ChaCha8Rng,
    row_div: f64,
    col_div: f64,
    scale: f64,
    iteration: u64,
    buf_a: Vec<f64>,
    buf_b: Vec<f64>,
    buf_old_a: Vec<f64>,
    buf_old_b: Vec<f64>,
    scratch: Vec<f64>,
    sort_scratch: Vec<(f64, usize)>,
}

impl<'a> SolverState<'a> {
    pub fn new(spec: &'a ProblemSpec, cfg: SolverConfig, x0: Option<&Coupling>) -> Result<Self> {
        cfg.validate()?;
        let (m, n) = (spec.m(), spec.n());
        let x = match x0 {
            Some(c) => {
                if c.plan().dim() != (m, n) {
                    return Err(SonError::dim(format!(
                        "initial coupling is {:?}, problem is {m}x{n}",
                        c.plan().dim()
                    )));
                }
                c.plan().clone()
            }
            None => spec.marginals.independent_coupling(),
        };
        let (row_div, col_div) = linear_divisors(m, n);
        let scale = if cfg.jit { jit_scale(m, n) } else { 1.0 };
        let d = m.max(n);
        Ok(Self {
            spec,
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            cfg,
            x,
            memory: MemoryStore::zeros(m, n),
            row_div,
            col_div,
            scale,
            iteration: 0,
            buf_a: vec![0.0; d],
            buf_b: vec![0.0; d],
            buf_old_a: vec![0.0; d],
            buf_old_b: vec![0.0; d],
            scratch: vec![0.0; d],
            sort_scratch: Vec::with_capacity(d),
        })
    }

    pub fn iterate(&self) -> &Array2<f64> {
        &self.x
    }

    pub fn memory(&self) -> &MemoryStore {
        &self.memory
    }

    pub fn iterations(&self) -> u64 {
        self.iteration
    }

    /// One randomly drawn iteration.
    pub fn step(&mut self) -> Result<()> {
        let (m, n) = (self.spec.m(), self.spec.n());
        let p = pair_count(m, n);
        let q = m + n;
        match sample_term(&mut self.rng, self.cfg.sampling, p, q) {
            SampledTerm::Objective(t) => {
                let rp = m * m.saturating_sub(1);
                if t < rp {
                    self.row_pair_step(t)
                } else {
                    self.col_pair_step(t - rp)
                }
            }
            SampledTerm::Constraint(c) => {
                if c < m {
                    self.row_simplex_step(c)
                } else {
                    self.col_simplex_step(c - m)
                }
            }
        }?;
        self.iteration += 1;
        Ok(())
    }

    fn diverged(&self) -> SonError {
        SonError::Diverged {
            iteration: self.iteration,
            step: self.cfg.step,
        }
    }

    fn row_pair_step(&mut self, t: usize) -> Result<()> {
        let (m, n) = (self.spec.m(), self.spec.n());
        let (l, k) = row_pair_rows(m, t);
        let step = self.cfg.step;
        let rho = self.spec.lambda * self.spec.kernels.rows()[[l, k]];
        let base = t * 2 * n;
        let cost = self.spec.cost.view();
        for j in 0..n {
            let (xl, xk) = (self.x[[l, j]], self.x[[k, j]]);
            self.buf_old_a[j] = xl;
            self.buf_old_b[j] = xk;
            self.buf_a[j] = xl + step * self.memory.row_pair[base + j] - step * cost[[l, j]] / self.row_div;
            self.buf_b[j] = xk + step * self.memory.row_pair[base + n + j] - step * cost[[k, j]] / self.row_div;
        }
        pair_prox_in_place(step * rho, &mut self.buf_a[..n], &mut self.buf_b[..n], &mut self.scratch[..n]);
        if self.buf_a[..n].iter().chain(&self.buf_b[..n]).any(|v| !v.is_finite()) {
            return Err(self.diverged());
        }
        let (rho_acc, alpha, s) = (self.cfg.rho_acc, self.cfg.alpha, self.scale);
        for j in 0..n {
            for (row, new, old, off) in [
                (l, self.buf_a[j], self.buf_old_a[j], base + j),
                (k, self.buf_b[j], self.buf_old_b[j], base + n + j),
            ] {
                let tot = &mut self.memory.total[[row, j]];
                let a = rho_acc * (old - new) / step - alpha * s * *tot;
                self.memory.row_pair[off] += a;
                *tot += a;
                self.x[[row, j]] = new;
            }
        }
        Ok(())
    }

    fn col_pair_step(&mut self, t: usize) -> Result<()> {
        let (m, n) = (self.spec.m(), self.spec.n());
        let (l, k) = row_pair_rows(n, t);
        let step = self.cfg.step;
        let rho = self.spec.lambda * self.spec.kernels.cols()[[l, k]];
        let base = t * 2 * m;
        let cost = self.spec.cost.view();
        for i in 0..m {
            let (xl, xk) = (self.x[[i, l]], self.x[[i, k]]);
            self.buf_old_a[i] = xl;
            self.buf_old_b[i] = xk;
            self.buf_a[i] = xl + step * self.memory.col_pair[base + i] - step * cost[[i, l]] / self.col_div;
            self.buf_b[i] = xk + step * self.memory.col_pair[base + m + i] - step * cost[[i, k]] / self.col_div;
        }
        pair_prox_in_place(step * rho, &mut self.buf_a[..m], &mut self.buf_b[..m], &mut self.scratch[..m]);
        if self.buf_a[..m].iter().chain(&self.buf_b[..m]).any(|v| !v.is_finite()) {
            return Err(self.diverged());
        }
        let (rho_acc, alpha, s) = (self.cfg.rho_acc, self.cfg.alpha, self.scale);
        for i in 0..m {
            for (col, new, old, off) in [
                (l, self.buf_a[i], self.buf_old_a[i], base + i),
                (k, self.buf_b[i], self.buf_old_b[i], base + m + i),
            ] {
                let tot = &mut self.memory.total[[i, col]];
                let a = rho_acc * (old - new) / step - alpha * s * *tot;
                self.memory.col_pair[off] += a;
                *tot += a;
                self.x[[i, col]] = new;
            }
        }
        Ok(())
    }

    fn row_simplex_step(&mut self, l: usize) -> Result<()> {
        let n = self.spec.n();
        let step = self.cfg.step;
        for j in 0..n {
            self.buf_old_a[j] = self.x[[l, j]];
            self.buf_a[j] = self.buf_old_a[j] + step * self.memory.row_simplex[l * n + j];
        }
        let mass = self.spec.marginals.mu()[l];
        project_simplex_in_place(&mut self.buf_a[..n], mass, &mut self.sort_scratch).map_err(|_| self.diverged())?;
        let (rho_acc, alpha, s) = (self.cfg.rho_acc, self.cfg.alpha, self.scale);
        for j in 0..n {
            let new = self.buf_a[j];
            let tot = &mut self.memory.total[[l, j]];
            let a = rho_acc * (self.buf_old_a[j] - new) / step - alpha * s * *tot;
            self.memory.row_simplex[l * n + j] += a;
            *tot += a;
            self.x[[l, j]] = new;
        }
        Ok(())
    }

    fn col_simplex_step(&mut self, k: usize) -> Result<()> {
        let m = self.spec.m();
        let step = self.cfg.step;
        for i in 0..m {
            self.buf_old_a[i] = self.x[[i, k]];
            self.buf_a[i] = self.buf_old_a[i] + step * self.memory.col_simplex[k * m + i];
        }
        let mass = self.spec.marginals.nu()[k];
        project_simplex_in_place(&mut self.buf_a[..m], mass, &mut self.sort_scratch).map_err(|_| self.diverged())?;
        let (rho_acc, alpha, s) = (self.cfg.rho_acc, self.cfg.alpha, self.scale);
        for i in 0..m {
            let new = self.buf_a[i];
            let tot = &mut self.memory.total[[i, k]];
            let a = rho_acc * (self.buf_old_a[i] - new) / step - alpha * s * *tot;
            self.memory.col_simplex[k * m + i] += a;
            *tot += a;
            self.x[[i, k]] = new;
        }
        Ok(())
    }

    /// Final reported coupling: negatives clamped, optionally rounded.
    pub fn coupling(&self) -> Result<Coupling> {
        let marginals = &self.spec.marginals;
        let clamped = Coupling::clamped(self.x.clone(), marginals)?;
        if self.cfg.round_output {
            round_to_feasible(clamped.plan(), marginals)
        } else {
            Ok(clamped)
        }
    }
}

/// Runs `epochs * (P + Q)` iterations from `x0` (or the independent coupling).
pub fn solve(spec: &ProblemSpec, cfg: &SolverConfig, x0: Option<&Coupling>) -> Result<SolveReport> {
    let start = now();
    let mut state = SolverState::new(spec, cfg.clone(), x0)?;
    let per_epoch = (pair_count(spec.m(), spec.n()) + spec.m() + spec.n()) as u64;
    let mut trace = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        for _ in 0..per_epoch {
            state.step()?;
        }
        let objective = spec.full_objective(state.x.view())?;
        let gap = feasibility_gap(state.x.view(), &spec.marginals);
        if !objective.is_finite() {
            return Err(state.diverged());
        }
        if cfg.log_every > 0 && epoch % cfg.log_every == 0 {
            eprintln!("epoch={epoch} obj={objective:?} gap={gap:?}");
        }
        trace.push(TracePoint { epoch, objective, feasibility_gap: gap });
    }
    let coupling = if cfg.epochs == 0 {
        match x0 {
            Some(c) => c.clone(),
            None => Coupling::independent(&spec.marginals),
        }
    } else {
        state.coupling()?
    };
    let support_pattern = support_pattern(coupling.plan(), cfg.support_threshold);
    Ok(SolveReport {
        coupling,
        objective_trace: trace,
        support_pattern,
        iterations: state.iteration,
        wall_time: elapsed(start),
    })
}
