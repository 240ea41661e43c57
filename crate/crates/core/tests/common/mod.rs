//! Independent reference implementations used across integration tests.
#![allow(dead_code)]

use itertools::Itertools;
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sonot::{CostMatrix, KernelWeights, Marginals, ProblemSpec};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn rand_vec(r: &mut impl Rng, d: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..d).map(|_| r.random_range(lo..hi)).collect()
}

pub fn inf_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0f64, |acc, (x, y)| acc.max((x - y).abs()))
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Minimizes a 1-D unimodal function on `[lo, hi]`.
pub fn golden_section(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, iters: usize) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = hi - g * (hi - lo);
    let mut d = lo + g * (hi - lo);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..iters {
        if fc < fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - g * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + g * (hi - lo);
            fd = f(d);
        }
    }
    (lo + hi) / 2.0
}

/// Dense `A x = b` by Gaussian elimination with partial pivoting; `None` if singular.
pub fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            if f != 0.0 {
                for c in col..n {
                    a[r][c] -= f * a[col][c];
                }
                b[r] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| a[r][c] * x[c]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    Some(x)
}

/// Numeric minimizer of
/// `(|x-p|^2 + |y-q|^2) / (2 step) + <x,zeta> + <y,eta> + rho |x-y|`.
///
/// In `u = (x+y)/2`, `v = (x-y)/2` the objective is
/// `|u-a|^2/step + <u, zeta+eta>` plus `|v-b|^2/step + <v, zeta-eta> + 2 rho |v|`
/// with `a = (p+q)/2`, `b = (p-q)/2`. The `u` part is separable and solved per
/// coordinate by golden section. The `v` part is zero exactly when the
/// smooth gradient at zero has norm at most `2 rho`; otherwise the minimizer
/// is away from the kink and damped Newton on the smooth objective finds it.
pub fn prox_oracle(step: f64, rho: f64, zeta: &[f64], eta: &[f64], p: &[f64], q: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let d = p.len();
    let a: Vec<f64> = (0..d).map(|i| 0.5 * (p[i] + q[i])).collect();
    let b: Vec<f64> = (0..d).map(|i| 0.5 * (p[i] - q[i])).collect();
    let lin_u: Vec<f64> = (0..d).map(|i| zeta[i] + eta[i]).collect();
    let lin_v: Vec<f64> = (0..d).map(|i| zeta[i] - eta[i]).collect();
    let u: Vec<f64> = (0..d)
        .map(|i| {
            let f = |t: f64| (t - a[i]).powi(2) / step + t * lin_u[i];
            let w = 10.0 + a[i].abs() + step * lin_u[i].abs();
            golden_section(f, a[i] - w, a[i] + w, 200)
        })
        .collect();

    let obj_v = |v: &[f64]| -> f64 {
        (0..d).map(|i| (v[i] - b[i]).powi(2) / step + v[i] * lin_v[i]).sum::<f64>() + 2.0 * rho * norm(v)
    };
    let g0: Vec<f64> = (0..d).map(|i| -2.0 * b[i] / step + lin_v[i]).collect();
    let v = if norm(&g0) <= 2.0 * rho {
        vec![0.0; d]
    } else {
        let g0n = norm(&g0);
        let mut v: Vec<f64> = g0.iter().map(|g| -g / g0n * 1e-3 * (1.0 + norm(&b))).collect();
        for _ in 0..200 {
            let r = norm(&v);
            let grad: Vec<f64> = (0..d).map(|i| 2.0 * (v[i] - b[i]) / step + lin_v[i] + 2.0 * rho * v[i] / r).collect();
            if norm(&grad) < 1e-14 {
                break;
            }
            let hess: Vec<Vec<f64>> = (0..d)
                .map(|i| {
                    (0..d)
                        .map(|j| {
                            let id = if i == j { 1.0 } else { 0.0 };
                            2.0 * id / step + 2.0 * rho * (id - v[i] * v[j] / (r * r)) / r
                        })
                        .collect()
                })
                .collect();
            let Some(dir) = solve_dense(hess, grad.iter().map(|g| -g).collect()) else {
                break;
            };
            let f0 = obj_v(&v);
            let mut t = 1.0;
            loop {
                let cand: Vec<f64> = (0..d).map(|i| v[i] + t * dir[i]).collect();
                if norm(&cand) > 0.0 && obj_v(&cand) <= f0 {
                    v = cand;
                    break;
                }
                t *= 0.5;
                if t < 1e-20 {
                    break;
                }
            }
            if t < 1e-20 {
                break;
            }
        }
        v
    };
    let x = (0..d).map(|i| u[i] + v[i]).collect();
    let y = (0..d).map(|i| u[i] - v[i]).collect();
    (x, y)
}

/// Simplex projection by trying every support set.
pub fn simplex_oracle(v: &[f64], mass: f64) -> Vec<f64> {
    let d = v.len();
    let mut best: Option<(f64, Vec<f64>)> = None;
    for mask in 1u32..(1 << d) {
        let idx: Vec<usize> = (0..d).filter(|i| mask & (1 << i) != 0).collect();
        let tau = (idx.iter().map(|&i| v[i]).sum::<f64>() - mass) / idx.len() as f64;
        let mut x = vec![0.0; d];
        let mut ok = true;
        for &i in &idx {
            x[i] = v[i] - tau;
            if x[i] < -1e-14 {
                ok = false;
            }
        }
        if !ok {
            continue;
        }
        x.iter_mut().for_each(|e| *e = e.max(0.0));
        let dist: f64 = x.iter().zip(v).map(|(a, b)| (a - b).powi(2)).sum();
        if best.as_ref().is_none_or(|(bd, _)| dist < *bd) {
            best = Some((dist, x));
        }
    }
    best.expect("some support is feasible").1
}

/// Monotonicity margin by enumerating every ordered arrangement of every
/// subset of size >= 2 (each cycle appears several times, which is harmless).
pub fn brute_force_delta(g: &Array2<f64>) -> f64 {
    let k = g.nrows();
    let mut best = f64::INFINITY;
    for size in 2..=k {
        for perm in (0..k).permutations(size) {
            let mut trip = 0.0;
            let mut diag = 0.0;
            for l in 0..size {
                trip += g[[perm[l], perm[(l + 1) % size]]];
                diag += g[[perm[l], perm[l]]];
            }
            best = best.min((trip - diag) / size as f64);
        }
    }
    best
}

/// Minimum transport cost over all vertices of the transportation polytope,
/// found by solving every choice of `m + n - 1` basic cells.
pub fn vertex_enumeration_ot(cost: &Array2<f64>, mu: &[f64], nu: &[f64]) -> (f64, Array2<f64>) {
    let (m, n) = cost.dim();
    let cells: Vec<(usize, usize)> = (0..m).flat_map(|i| (0..n).map(move |j| (i, j))).collect();
    let basis_size = m + n - 1;
    let mut best: Option<(f64, Array2<f64>)> = None;
    for choice in cells.iter().copied().combinations(basis_size) {
        // all row equations and the first n-1 column equations
        let mut a = vec![vec![0.0; basis_size]; basis_size];
        let mut rhs = vec![0.0; basis_size];
        for (c, &(i, j)) in choice.iter().enumerate() {
            a[i][c] = 1.0;
            if j < n - 1 {
                a[m + j][c] = 1.0;
            }
        }
        rhs[..m].copy_from_slice(mu);
        rhs[m..(n - 1 + m)].copy_from_slice(&nu[..(n - 1)]);
        let Some(x) = solve_dense(a, rhs) else { continue };
        if x.iter().any(|&v| v < -1e-12) {
            continue;
        }
        let mut plan = Array2::zeros((m, n));
        for (c, &(i, j)) in choice.iter().enumerate() {
            plan[[i, j]] = x[c].max(0.0);
        }
        let obj: f64 = (&plan * cost).sum();
        if best.as_ref().is_none_or(|(b, _)| obj < *b) {
            best = Some((obj, plan));
        }
    }
    best.expect("polytope has a vertex")
}

/// Random feasible coupling as a convex mixture of northwest-corner plans
/// over random row/column orderings.
pub fn random_feasible(r: &mut impl Rng, mu: &[f64], nu: &[f64], parts: usize) -> Array2<f64> {
    let (m, n) = (mu.len(), nu.len());
    let mut weights: Vec<f64> = (0..parts).map(|_| r.random::<f64>() + 1e-3).collect();
    let s: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= s);
    let mut out = Array2::zeros((m, n));
    for w in weights {
        let mut rows: Vec<usize> = (0..m).collect();
        let mut cols: Vec<usize> = (0..n).collect();
        shuffle(r, &mut rows);
        shuffle(r, &mut cols);
        let mut sup: Vec<f64> = mu.to_vec();
        let mut dem: Vec<f64> = nu.to_vec();
        let (mut a, mut b) = (0, 0);
        while a < m && b < n {
            let (i, j) = (rows[a], cols[b]);
            let t = sup[i].min(dem[j]);
            out[[i, j]] += w * t;
            sup[i] -= t;
            dem[j] -= t;
            if sup[i] <= dem[j] {
                a += 1;
            } else {
                b += 1;
            }
        }
    }
    out
}

fn shuffle<T>(r: &mut impl Rng, v: &mut [T]) {
    for i in (1..v.len()).rev() {
        let j = r.random_range(0..=i);
        v.swap(i, j);
    }
}

/// Random problem with costs in `[0, 1)` and constant kernels.
pub fn random_spec(r: &mut impl Rng, m: usize, n: usize, lambda: f64, row_k: f64, col_k: f64) -> ProblemSpec {
    let cost = CostMatrix::new(Array2::from_shape_fn((m, n), |_| r.random::<f64>())).unwrap();
    let mu = Array1::from_shape_fn(m, |_| r.random::<f64>() + 0.1);
    let total = mu.sum();
    let nu_raw = Array1::from_shape_fn(n, |_| r.random::<f64>() + 0.1);
    let nu = &nu_raw * (total / nu_raw.sum());
    let marg = Marginals::new(mu, nu).unwrap();
    ProblemSpec::new(cost, marg, KernelWeights::constant(m, n, row_k, col_k).unwrap(), lambda, None).unwrap()
}

/// Transport cost of a dense plan.
pub fn transport_cost(cost: &Array2<f64>, plan: &Array2<f64>) -> f64 {
    (cost * plan).sum()
}

#[allow(unused_imports)]
pub use planted::*;

mod planted {
    use ndarray::Array2;
    use sonot::certificates::{theorem2_check, CertificateReport, ClusterStructure, KernelMode};
    use sonot::datagen::{cost_matrix, gen_gaussian_pairs, Dataset, Metric};
    use sonot::{CostMatrix, KernelWeights, Marginals, ProblemSpec};

    pub const PLANTED_OMEGA: f64 = 0.05;

    pub struct Planted {
        pub spec: ProblemSpec,
        pub cs: ClusterStructure,
        pub cert: CertificateReport,
        pub source: Dataset,
        pub target: Dataset,
        /// `(Delta sqrt K / sqrt m, Lambda 0.999 delta* / sqrt m)`.
        pub window: (f64, f64),
    }

    /// `R = 1` inside source clusters, `S = 1` everywhere.
    pub fn block_kernels(src_labels: &[usize], n: usize) -> KernelWeights {
        let m = src_labels.len();
        let r = Array2::from_shape_fn((m, m), |(i, k)| if i != k && src_labels[i] == src_labels[k] { 1.0 } else { 0.0 });
        let s = Array2::from_shape_fn((n, n), |(j, k)| if j != k { 1.0 } else { 0.0 });
        KernelWeights::new(r, s).unwrap()
    }

    pub fn planted_centers() -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        (vec![vec![0.0, 0.0], vec![4.0, 0.0]], vec![vec![0.0, 1.0], vec![4.0, 1.0]])
    }

    /// Two clusters of four points per domain with lambda at the geometric
    /// mean of the certified window (shrunk to `0.999 delta*`).
    pub fn planted(seed: u64) -> Planted {
        let (src, tgt) = gen_gaussian_pairs(2, 4, 2, Some(planted_centers()), PLANTED_OMEGA, seed).unwrap();
        let cost = cost_matrix(&src, &tgt, Metric::SqEuclidean).unwrap();
        planted_from_cost(cost, src, tgt)
    }

    pub fn planted_from_cost(cost: CostMatrix, src: Dataset, tgt: Dataset) -> Planted {
        let ls = src.labels.clone().unwrap();
        let lt = tgt.labels.clone().unwrap();
        let marg = Marginals::uniform(ls.len(), lt.len()).unwrap();
        let cs = ClusterStructure::aligned(ls.clone(), lt.clone(), 2, &marg).unwrap();
        let probe = theorem2_check(&cost, &cs, 0.0, KernelMode::SameCluster).unwrap();
        let sqrt_m = (probe.cluster_size as f64).sqrt();
        let lower = probe.lambda_window.0;
        let upper = probe.capacity * 0.999 * probe.delta / sqrt_m;
        assert!(lower < upper, "empty window ({lower}, {upper})");
        let lambda = (lower * upper).sqrt();
        let cert = theorem2_check(&cost, &cs, lambda, KernelMode::SameCluster).unwrap();
        assert!(cert.part1_holds);
        let kernels = block_kernels(&ls, lt.len());
        let spec = ProblemSpec::new(cost, marg, kernels, lambda, None).unwrap();
        Planted {
            spec,
            cs,
            cert,
            source: src,
            target: tgt,
            window: (lower, upper),
        }
    }
}
