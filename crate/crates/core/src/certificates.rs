//! Recovery certificates for class-structured transport plans.
//!
//! Everything here is a deterministic function of the cost matrix, the
//! cluster partitions and the masses: cluster-mean costs, the largest
//! strong-cyclical-monotonicity margin `delta*`, the effective cluster
//! diameter `Delta`, the capacity `Lambda`, the admissible lambda window for
//! exact block recovery, and the error bounds for the general (possibly
//! infeasible, unequal-size) relaxed problem.
//!
//! Cluster indices are 0-based; `association[alpha]` is the target cluster
//! paired with source cluster `alpha`.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SonError};
use crate::problem::{CostMatrix, KernelWeights, Marginals};

/// Largest cluster count accepted by the exhaustive cycle enumeration.
pub const MAX_CYCLE_CLUSTERS: usize = 10;

/// Tolerance for the per-association mass balance flag.
pub const MASS_MATCH_TOL: f64 = 1e-12;

/// Source/target partitions, their association and masses.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterStructure {
    source_labels: Vec<usize>,
    target_labels: Vec<usize>,
    association: Vec<usize>,
    source_sizes: Vec<usize>,
    target_sizes: Vec<usize>,
    /// `omega_alpha`: source mass of cluster `alpha`.
    source_masses: Vec<f64>,
    /// Target mass of cluster `beta`.
    target_masses: Vec<f64>,
    feasible: bool,
}

impl ClusterStructure {
    pub fn new(
        source_labels: Vec<usize>,
        target_labels: Vec<usize>,
        association: Vec<usize>,
        marginals: &Marginals,
    ) -> Result<Self> {
        let k = association.len();
        if k == 0 {
            return Err(SonError::invalid("cluster structure needs at least one cluster"));
        }
        if source_labels.len() != marginals.mu().len() || target_labels.len() != marginals.nu().len() {
            return Err(SonError::dim(format!(
                "labels have lengths {}/{} but marginals {}/{}",
                source_labels.len(),
                target_labels.len(),
                marginals.mu().len(),
                marginals.nu().len()
            )));
        }
        let mut seen = vec![false; k];
        for &b in &association {
            if b >= k || seen[b] {
                return Err(SonError::invalid(format!("association {association:?} is not a permutation of 0..{k}")));
            }
            seen[b] = true;
        }
        let mut source_sizes = vec![0; k];
        let mut source_masses = vec![0.0; k];
        for (i, &a) in source_labels.iter().enumerate() {
            if a >= k {
                return Err(SonError::invalid(format!("source label {a} at point {i} is outside 0..{k}")));
            }
            source_sizes[a] += 1;
            source_masses[a] += marginals.mu()[i];
        }
        let mut target_sizes = vec![0; k];
        let mut target_masses = vec![0.0; k];
        for (j, &b) in target_labels.iter().enumerate() {
            if b >= k {
                return Err(SonError::invalid(format!("target label {b} at point {j} is outside 0..{k}")));
            }
            target_sizes[b] += 1;
            target_masses[b] += marginals.nu()[j];
        }
        if let Some(a) = source_sizes.iter().position(|&s| s == 0) {
            return Err(SonError::invalid(format!("source cluster {a} is empty")));
        }
        if let Some(b) = target_sizes.iter().position(|&s| s == 0) {
            return Err(SonError::invalid(format!("target cluster {b} is empty")));
        }
        let feasible = (0..k).all(|a| {
            (source_masses[a] - target_masses[association[a]]).abs() <= MASS_MATCH_TOL * marginals.total()
        });
        Ok(Self {
            source_labels,
            target_labels,
            association,
            source_sizes,
            target_sizes,
            source_masses,
            target_masses,
            feasible,
        })
    }

    /// Identity association.
    pub fn aligned(source_labels: Vec<usize>, target_labels: Vec<usize>, k: usize, marginals: &Marginals) -> Result<Self> {
        Self::new(source_labels, target_labels, (0..k).collect(), marginals)
    }

    pub fn k(&self) -> usize {
        self.association.len()
    }

    pub fn source_labels(&self) -> &[usize] {
        &self.source_labels
    }

    pub fn target_labels(&self) -> &[usize] {
        &self.target_labels
    }

    pub fn association(&self) -> &[usize] {
        &self.association
    }

    pub fn source_sizes(&self) -> &[usize] {
        &self.source_sizes
    }

    pub fn target_sizes(&self) -> &[usize] {
        &self.target_sizes
    }

    pub fn masses(&self) -> &[f64] {
        &self.source_masses
    }

    pub fn target_masses(&self) -> &[f64] {
        &self.target_masses
    }

    /// Every associated pair carries equal source and target mass.
    pub fn is_feasible(&self) -> bool {
        self.feasible
    }

    /// `pi^{-1}`.
    pub fn inverse_association(&self) -> Vec<usize> {
        let mut inv = vec![0; self.k()];
        for (a, &b) in self.association.iter().enumerate() {
            inv[b] = a;
        }
        inv
    }

    /// All clusters of both domains share one size.
    pub fn common_size(&self) -> Option<usize> {
        let s = self.source_sizes[0];
        (self.source_sizes.iter().chain(&self.target_sizes).all(|&x| x == s)).then_some(s)
    }

    fn check_against(&self, cost: &CostMatrix) -> Result<()> {
        if cost.rows() != self.source_labels.len() || cost.cols() != self.target_labels.len() {
            return Err(SonError::dim(format!(
                "cost is {}x{} but labels cover {}x{}",
                cost.rows(),
                cost.cols(),
                self.source_labels.len(),
                self.target_labels.len()
            )));
        }
        Ok(())
    }
}

/// `D_{alpha,beta}`: mean cost between source cluster `alpha` and target cluster `beta`.
pub fn cluster_mean_costs(cost: &CostMatrix, cs: &ClusterStructure) -> Result<Array2<f64>> {
    cs.check_against(cost)?;
    let k = cs.k();
    let mut sum = Array2::<f64>::zeros((k, k));
    for (i, &a) in cs.source_labels.iter().enumerate() {
        for (j, &b) in cs.target_labels.iter().enumerate() {
            sum[[a, b]] += cost.get(i, j);
        }
    }
    Ok(Array2::from_shape_fn((k, k), |(a, b)| {
        sum[[a, b]] / (cs.source_sizes[a] * cs.target_sizes[b]) as f64
    }))
}

/// `D~_{alpha,alpha'} = D_{alpha, pi(alpha')}`, so the association sits on the diagonal.
pub fn associated_mean_costs(cost: &CostMatrix, cs: &ClusterStructure) -> Result<Array2<f64>> {
    let dbar = cluster_mean_costs(cost, cs)?;
    let k = cs.k();
    Ok(Array2::from_shape_fn((k, k), |(a, b)| dbar[[a, cs.association[b]]]))
}

/// Minimizing loop of the monotonicity margin.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityMargin {
    /// `min` over simple loops of `(off-diagonal trip - visited diagonal) / length`.
    pub delta: f64,
    /// The minimizing loop `alpha_1 -> ... -> alpha_k -> alpha_1`.
    pub cycle: Vec<usize>,
}

/// Largest `delta` for which every simple loop of length >= 2 satisfies the
/// strong cyclical monotonicity inequality; the condition holds strictly for
/// every `delta < delta*`. For `K = 1` there are no loops and `delta* = +inf`.
pub fn monotonicity_delta(dbar: &Array2<f64>) -> Result<MonotonicityMargin> {
    let k = dbar.nrows();
    if dbar.ncols() != k {
        return Err(SonError::dim(format!("grid is {:?}, expected square", dbar.dim())));
    }
    if k > MAX_CYCLE_CLUSTERS {
        return Err(SonError::UnsupportedSize(format!(
            "cycle enumeration supports at most {MAX_CYCLE_CLUSTERS} clusters, got {k}"
        )));
    }
    let mut best = MonotonicityMargin {
        delta: f64::INFINITY,
        cycle: Vec::new(),
    };
    let mut path = Vec::with_capacity(k);
    let mut used = vec![false; k];
    // Each simple cycle is enumerated once, rooted at its smallest node.
    for start in 0..k {
        path.clear();
        path.push(start);
        used[start] = true;
        extend_cycles(dbar, start, &mut path, &mut used, 0.0, dbar[[start, start]], &mut best);
        used[start] = false;
    }
    Ok(best)
}

fn extend_cycles(
    dbar: &Array2<f64>,
    start: usize,
    path: &mut Vec<usize>,
    used: &mut [bool],
    trip: f64,
    diag: f64,
    best: &mut MonotonicityMargin,
) {
    let last = *path.last().expect("path starts nonempty");
    let k = dbar.nrows();
    if path.len() >= 2 {
        let closed = trip + dbar[[last, start]];
        let margin = (closed - diag) / path.len() as f64;
        if margin < best.delta {
            best.delta = margin;
            best.cycle = path.clone();
        }
    }
    for next in start + 1..k {
        if used[next] {
            continue;
        }
        used[next] = true;
        path.push(next);
        extend_cycles(dbar, start, path, used, trip + dbar[[last, next]], diag + dbar[[next, next]], best);
        path.pop();
        used[next] = false;
    }
}

/// `Delta`: largest normalized distance between cost rows (or columns) of
/// two points in the same cluster. Rows are normalized by the square root of
/// their own length (the target count), columns by the source count; in the
/// equal-size setting both equal `sqrt(n)`.
pub fn effective_diameter(cost: &CostMatrix, cs: &ClusterStructure) -> Result<f64> {
    cs.check_against(cost)?;
    let (m, n) = (cost.rows(), cost.cols());
    let mut best = 0.0f64;
    for i in 0..m {
        for i2 in i + 1..m {
            if cs.source_labels[i] != cs.source_labels[i2] {
                continue;
            }
            let d: f64 = (0..n).map(|j| (cost.get(i, j) - cost.get(i2, j)).powi(2)).sum();
            best = best.max(d.sqrt() / (n as f64).sqrt());
        }
    }
    for j in 0..n {
        for j2 in j + 1..n {
            if cs.target_labels[j] != cs.target_labels[j2] {
                continue;
            }
            let d: f64 = (0..m).map(|i| (cost.get(i, j) - cost.get(i, j2)).powi(2)).sum();
            best = best.max(d.sqrt() / (m as f64).sqrt());
        }
    }
    Ok(best)
}

/// Source kernel regime: `Uniform` means `R = 1` everywhere (indicator 0),
/// `SameCluster` means `R = 1` only inside clusters (indicator 1).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelMode {
    Uniform,
    SameCluster,
}

impl KernelMode {
    pub fn indicator(self) -> f64 {
        match self {
            KernelMode::Uniform => 0.0,
            KernelMode::SameCluster => 1.0,
        }
    }
}

/// `Lambda` from cluster masses: the maximum over `alpha != beta` of
/// `((1+R)/2 T_{ab} + (w_a + R w_b) / (w_b sqrt 2))^{-1}` with
/// `T_{ab} = sum_g (w_a/sqrt(w_a^2+w_g^2) + w_b/sqrt(w_b^2+w_g^2)) - sqrt 2`.
pub fn lambda_capacity_from_masses(masses: &[f64], mode: KernelMode) -> Result<f64> {
    let k = masses.len();
    if k < 2 {
        return Err(SonError::invalid("lambda capacity needs at least two clusters"));
    }
    if masses.iter().any(|w| !(*w > 0.0)) {
        return Err(SonError::invalid("cluster masses must be positive"));
    }
    let r = mode.indicator();
    let sqrt2 = std::f64::consts::SQRT_2;
    let mut best = f64::NEG_INFINITY;
    for a in 0..k {
        for b in 0..k {
            if a == b {
                continue;
            }
            let (wa, wb) = (masses[a], masses[b]);
            let t: f64 = masses
                .iter()
                .map(|wg| wa / (wa * wa + wg * wg).sqrt() + wb / (wb * wb + wg * wg).sqrt())
                .sum::<f64>()
                - sqrt2;
            // literal denominator sqrt(w_b^2 + w_b^2)
            let inv = (1.0 + r) / 2.0 * t + (wa + r * wb) / (wb * wb + wb * wb).sqrt();
            best = best.max(1.0 / inv);
        }
    }
    Ok(best)
}

pub fn lambda_capacity(cs: &ClusterStructure, mode: KernelMode) -> Result<f64> {
    lambda_capacity_from_masses(cs.masses(), mode)
}

/// Certificate summary for one instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertificateReport {
    pub delta: f64,
    /// Minimizing loop for `delta`.
    pub delta_cycle: Vec<usize>,
    #[serde(rename = "Delta")]
    pub diameter: f64,
    #[serde(rename = "Lambda")]
    pub capacity: f64,
    pub lambda: f64,
    pub cluster_size: usize,
    pub k: usize,
    pub kernel_mode: KernelMode,
    /// `(Delta sqrt K / sqrt m, Lambda delta / sqrt m)`.
    pub lambda_window: (f64, f64),
    pub part1_holds: bool,
    pub part2_bound: f64,
    /// Set when the source and target domains have different total sizes.
    pub unequal_domains: bool,
    pub thm1_ratio: Option<f64>,
    pub thm3_bound: Option<f64>,
}

/// Block recovery conditions for the equal-cluster-size setting.
pub fn theorem2_check(
    cost: &CostMatrix,
    cs: &ClusterStructure,
    lambda: f64,
    mode: KernelMode,
) -> Result<CertificateReport> {
    let m = cs.common_size().ok_or_else(|| {
        SonError::invalid("block recovery check needs equal cluster sizes in both domains; use the general bound")
    })?;
    let k = cs.k();
    let tilde = associated_mean_costs(cost, cs)?;
    let margin = monotonicity_delta(&tilde)?;
    let diameter = effective_diameter(cost, cs)?;
    let capacity = lambda_capacity(cs, mode)?;
    let sqrt_m = (m as f64).sqrt();
    let sqrt_k = (k as f64).sqrt();
    let delta = margin.delta;
    let lower = diameter * sqrt_k / sqrt_m;
    let upper = capacity * delta / sqrt_m;
    let part1_holds = delta > 0.0 && diameter * sqrt_k <= lambda * sqrt_m && lambda * sqrt_m <= capacity * delta;
    let part2_bound = if delta <= 0.0 {
        f64::INFINITY
    } else {
        let w = cs.masses();
        let mut pair_sum = 0.0;
        for a in 0..k {
            for b in 0..k {
                if a != b {
                    pair_sum += (w[a] * w[a] + w[b] * w[b]).sqrt();
                }
            }
        }
        lambda * (1.0 + mode.indicator()) * sqrt_m * pair_sum / delta
    };
    Ok(CertificateReport {
        delta,
        delta_cycle: margin.cycle,
        diameter,
        capacity,
        lambda,
        cluster_size: m,
        k,
        kernel_mode: mode,
        lambda_window: (lower, upper),
        part1_holds,
        part2_bound,
        unequal_domains: cost.rows() != cost.cols(),
        thm1_ratio: None,
        thm3_bound: None,
    })
}

/// Ratio of the two sides of the Gaussian-mixture separation condition
/// `(D^2 - d^2) / (K sqrt K) >= C sqrt(E^2 + omega^2) log(n K)`, with
/// `D` the minimum unassociated center distance, `d` the maximum associated
/// one and `E` the maximum over all pairs. `n` is the total sample count per
/// domain. A ratio of at least 1 means the condition holds at constant `C`.
pub fn theorem1_ratio(
    centers_s: &[Vec<f64>],
    centers_t: &[Vec<f64>],
    omega: f64,
    n: usize,
    c_const: f64,
) -> Result<f64> {
    let k = centers_s.len();
    if k < 2 || centers_t.len() != k {
        return Err(SonError::invalid("need K >= 2 matching source and target centers"));
    }
    if !(c_const > 0.0) {
        return Err(SonError::invalid("constant C must be > 0"));
    }
    let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let (mut big_d, mut small_d, mut e) = (f64::INFINITY, 0.0f64, 0.0f64);
    for a in 0..k {
        for b in 0..k {
            if centers_s[a].len() != centers_t[b].len() {
                return Err(SonError::dim("center dimensions differ"));
            }
            let d = dist(&centers_s[a], &centers_t[b]);
            e = e.max(d);
            if a == b {
                small_d = small_d.max(d);
            } else {
                big_d = big_d.min(d);
            }
        }
    }
    let kf = k as f64;
    let lhs = (big_d * big_d - small_d * small_d) / (kf * kf.sqrt());
    let rhs = c_const * (e * e + omega * omega).sqrt() * ((n * k) as f64).ln();
    if rhs == 0.0 || lhs == 0.0 {
        return Ok(0.0);
    }
    Ok(lhs / rhs)
}

/// Cluster-level quantities of the general relaxed problem.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneralQuantities {
    /// `sigma_alpha = (n_a mu_a + m_pi(a) nu^pi(a)) / 2`.
    pub sigma: Vec<f64>,
    /// `delta_alpha = (n_a mu_a - m_pi(a) nu^pi(a)) / 2`.
    pub imbalance: Vec<f64>,
    pub delta0: f64,
    pub delta1: f64,
    pub margin: f64,
}

pub fn general_quantities(cost: &CostMatrix, cs: &ClusterStructure) -> Result<GeneralQuantities> {
    let tilde = associated_mean_costs(cost, cs)?;
    let k = cs.k();
    let margin = monotonicity_delta(&tilde)?.delta;
    let sw = cs.masses();
    let tw = cs.target_masses();
    let pi = cs.association();
    let sigma: Vec<f64> = (0..k).map(|a| (sw[a] + tw[pi[a]]) / 2.0).collect();
    let imbalance: Vec<f64> = (0..k).map(|a| (sw[a] - tw[pi[a]]) / 2.0).collect();
    let mut delta0 = 0.0f64;
    for a in 0..k {
        for b in 0..k {
            delta0 = delta0.max((2.0 * tilde[[a, b]] - tilde[[a, a]] - tilde[[b, b]]).abs());
        }
    }
    let max_diag = (0..k).fold(0.0f64, |acc, a| acc.max(tilde[[a, a]].abs()));
    Ok(GeneralQuantities {
        sigma,
        imbalance,
        delta0,
        delta1: (delta0 + max_diag) / 2.0,
        margin,
    })
}

/// `R_{alpha,alpha'}` (or `S`): kernel mass between two clusters.
fn aggregate_kernel(kernel: &Array2<f64>, labels: &[usize], k: usize) -> Array2<f64> {
    let mut out = Array2::zeros((k, k));
    for (i, &a) in labels.iter().enumerate() {
        for (j, &b) in labels.iter().enumerate() {
            out[[a, b]] += kernel[[i, j]];
        }
    }
    out
}

/// Upper bound on the unassociated mass `sum_{beta != pi(alpha)} X_{alpha,beta}`
/// of the cluster-level relaxed problem with marginal penalty `theta`.
/// Returns `+inf` when the monotonicity margin is not positive.
pub fn theorem3_bound(
    cost: &CostMatrix,
    cs: &ClusterStructure,
    lambda: f64,
    theta: f64,
    kernels: &KernelWeights,
) -> Result<f64> {
    if !(theta > 0.0) {
        return Err(SonError::invalid(format!("theta must be > 0, got {theta}")));
    }
    check_kernels(cost, kernels)?;
    let q = general_quantities(cost, cs)?;
    if q.margin <= 0.0 {
        return Ok(f64::INFINITY);
    }
    let k = cs.k();
    let pi = cs.association();
    let ns: Vec<f64> = cs.source_sizes().iter().map(|&s| s as f64).collect();
    let mt: Vec<f64> = cs.target_sizes().iter().map(|&s| s as f64).collect();
    let r_agg = aggregate_kernel(kernels.rows(), cs.source_labels(), k);
    let s_agg = aggregate_kernel(kernels.cols(), cs.target_labels(), k);
    let sig = &q.sigma;
    let mut reg = 0.0;
    for a in 0..k {
        for a2 in 0..k {
            if a == a2 {
                continue;
            }
            let (pa, pa2) = (pi[a], pi[a2]);
            let row_term = r_agg[[a, a2]] / (ns[a] * ns[a2])
                * (ns[a2].powi(2) * sig[a].powi(2) / mt[pa] + ns[a].powi(2) * sig[a2].powi(2) / mt[pa2]).sqrt();
            let col_term = s_agg[[pa, pa2]] / (mt[pa] * mt[pa2])
                * (mt[pa2].powi(2) * sig[a].powi(2) / ns[a] + mt[pa].powi(2) * sig[a2].powi(2) / ns[a2]).sqrt();
            reg += row_term + col_term;
        }
    }
    let imb = &q.imbalance;
    let penalty: f64 = (0..k).map(|a| imb[a].powi(2) / ns[a] + imb[a].powi(2) / mt[pi[a]]).sum::<f64>() * theta / 2.0;
    // (sum_a p_a^2 n_a + sum_b q_b^2 m_b) / (2 theta) with |p|,|q| <= Delta1
    let points = (cost.rows() + cost.cols()) as f64;
    let dual = q.delta1.powi(2) * points / (2.0 * theta);
    let l1: f64 = imb.iter().map(|d| d.abs()).sum();
    let linf = imb.iter().fold(0.0f64, |acc, d| acc.max(d.abs()));
    let total = lambda * reg + penalty + dual + q.delta0 * (l1 - linf);
    Ok(total / q.margin)
}

fn check_kernels(cost: &CostMatrix, kernels: &KernelWeights) -> Result<()> {
    if kernels.rows().nrows() != cost.rows() || kernels.cols().nrows() != cost.cols() {
        return Err(SonError::dim("kernel sizes do not match the cost matrix"));
    }
    Ok(())
}

/// One failed inequality of the exact-recovery conditions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Part2Violation {
    pub family: usize,
    pub side: String,
    pub pair: (usize, usize),
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Part2Report {
    pub holds: bool,
    /// Minimum `rhs - lhs` per family: cost rows/columns, marginals,
    /// source kernel aggregates, target kernel aggregates.
    pub family_slack: [f64; 4],
    pub violations: Vec<Part2Violation>,
}

/// Constant-block optimality conditions of the relaxed problem, checked for
/// every same-cluster pair of source points and of target points.
#[allow(clippy::too_many_arguments)]
pub fn theorem3_part2_check(
    cost: &CostMatrix,
    marginals: &Marginals,
    cs: &ClusterStructure,
    kernels: &KernelWeights,
    lambda: f64,
    theta: f64,
    a_const: f64,
    c_const: f64,
    d_const: f64,
) -> Result<Part2Report> {
    if !(a_const > 0.0 && c_const > 0.0 && d_const > 0.0) || 2.0 * a_const + c_const + d_const > 1.0 {
        return Err(SonError::invalid("constants must satisfy a, c, d > 0 and 2a + c + d <= 1"));
    }
    if !(theta > 0.0) {
        return Err(SonError::invalid(format!("theta must be > 0, got {theta}")));
    }
    check_kernels(cost, kernels)?;
    cs.check_against(cost)?;
    let (m, n) = (cost.rows(), cost.cols());
    let k = cs.k();
    let pi = cs.association();
    let inv = cs.inverse_association();
    let r = kernels.rows();
    let s = kernels.cols();
    let sl = cs.source_labels();
    let tl = cs.target_labels();
    let ns = cs.source_sizes();
    let mt = cs.target_sizes();

    // R_{i,alpha}, S_{j,beta}
    let mut r_to = Array2::<f64>::zeros((m, k));
    for i in 0..m {
        for i2 in 0..m {
            r_to[[i, sl[i2]]] += r[[i, i2]];
        }
    }
    let mut s_to = Array2::<f64>::zeros((n, k));
    for j in 0..n {
        for j2 in 0..n {
            s_to[[j, tl[j2]]] += s[[j, j2]];
        }
    }

    let mut report = Part2Report {
        holds: true,
        family_slack: [f64::INFINITY; 4],
        violations: Vec::new(),
    };
    let mut record = |family: usize, side: &str, pair: (usize, usize), lhs: f64, rhs: f64| {
        let slack = rhs - lhs;
        report.family_slack[family] = report.family_slack[family].min(slack);
        if lhs > rhs {
            report.holds = false;
            report.violations.push(Part2Violation {
                family,
                side: side.to_string(),
                pair,
                lhs,
                rhs,
            });
        }
    };

    for i in 0..m {
        for i2 in i + 1..m {
            let a = sl[i];
            if sl[i2] != a {
                continue;
            }
            let na = ns[a] as f64;
            let kern = r[[i, i2]];
            let lhs: f64 = (0..n).map(|j| (cost.get(i, j) - cost.get(i2, j)).powi(2)).sum::<f64>().sqrt();
            record(0, "source", (i, i2), lhs, 2.0 * a_const * na * lambda * kern);
            let lhs = (marginals.mu()[i] - marginals.mu()[i2]).abs();
            record(1, "source", (i, i2), lhs, c_const * lambda * na * kern / (theta * (n as f64).sqrt()));
            let mut lin = 0.0;
            let mut sq = 0.0;
            for a2 in 0..k {
                if a2 == a {
                    continue;
                }
                let denom = ((mt[pi[a]] + mt[pi[a2]]) as f64).sqrt();
                let v = (r_to[[i, a2]] - r_to[[i2, a2]]) / denom;
                lin += v;
                sq += v * v;
            }
            record(2, "source", (i, i2), (lin * lin + sq).sqrt(), d_const * na * kern);
        }
    }
    for j in 0..n {
        for j2 in j + 1..n {
            let b = tl[j];
            if tl[j2] != b {
                continue;
            }
            let mb = mt[b] as f64;
            let kern = s[[j, j2]];
            let lhs: f64 = (0..m).map(|i| (cost.get(i, j) - cost.get(i, j2)).powi(2)).sum::<f64>().sqrt();
            record(0, "target", (j, j2), lhs, 2.0 * a_const * mb * lambda * kern);
            let lhs = (marginals.nu()[j] - marginals.nu()[j2]).abs();
            record(1, "target", (j, j2), lhs, c_const * lambda * mb * kern / (theta * (m as f64).sqrt()));
            let mut lin = 0.0;
            let mut sq = 0.0;
            for b2 in 0..k {
                if b2 == b {
                    continue;
                }
                let denom = ((ns[inv[b]] + ns[inv[b2]]) as f64).sqrt();
                let v = (s_to[[j, b2]] - s_to[[j2, b2]]) / denom;
                lin += v;
                sq += v * v;
            }
            record(3, "target", (j, j2), (lin * lin + sq).sqrt(), d_const * mb * kern);
        }
    }
    Ok(report)
}
