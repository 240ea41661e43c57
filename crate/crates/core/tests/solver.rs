mod common;

use common::*;
use ndarray::Array2;
use sonot::solver::{sample_term, SampledTerm, Sampling, SolverState};
use sonot::{solve, Coupling, ProblemSpec, SolverConfig, SonError};

fn sort_project(v: &[f64], mass: f64) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut tau = 0.0;
    for (k, &x) in u.iter().enumerate() {
        cum += x;
        let t = (cum - mass) / (k + 1) as f64;
        if x - t > 0.0 {
            tau = t;
        }
    }
    v.iter().map(|x| (x - tau).max(0.0)).collect()
}

/// Dykstra alternation between the row-simplex and column-simplex products.
fn project_polytope(y: &Array2<f64>, mu: &[f64], nu: &[f64]) -> Array2<f64> {
    let (m, n) = y.dim();
    let mut x = y.clone();
    let mut p = Array2::<f64>::zeros((m, n));
    let mut q = Array2::<f64>::zeros((m, n));
    for _ in 0..400 {
        let a = &x + &p;
        let mut rows = a.clone();
        for i in 0..m {
            let r = sort_project(&a.row(i).to_vec(), mu[i]);
            rows.row_mut(i).assign(&ndarray::Array1::from(r));
        }
        p = &a - &rows;
        let b = &rows + &q;
        let mut cols = b.clone();
        for j in 0..n {
            let c = sort_project(&b.column(j).to_vec(), nu[j]);
            cols.column_mut(j).assign(&ndarray::Array1::from(c));
        }
        q = &b - &cols;
        x = cols;
    }
    x
}

/// FISTA on the objective with every norm replaced by `sqrt(|z|^2 + eps^2)`.
fn smoothed_reference(spec: &ProblemSpec, eps: f64, iters: usize) -> f64 {
    let (m, n) = (spec.m(), spec.n());
    let mu = spec.marginals.mu().to_vec();
    let nu = spec.marginals.nu().to_vec();
    let d = spec.cost.view().to_owned();
    let r = spec.kernels.rows().clone();
    let s = spec.kernels.cols().clone();
    let lam = spec.lambda;
    let grad = |x: &Array2<f64>| -> Array2<f64> {
        let mut g = d.clone();
        for l in 0..m {
            for k in 0..m {
                if l == k || r[[l, k]] == 0.0 {
                    continue;
                }
                let diff = &x.row(l) - &x.row(k);
                let nrm = (diff.dot(&diff) + eps * eps).sqrt();
                let w = lam * r[[l, k]] / nrm;
                for j in 0..n {
                    g[[l, j]] += w * diff[j];
                    g[[k, j]] -= w * diff[j];
                }
            }
        }
        for l in 0..n {
            for k in 0..n {
                if l == k || s[[l, k]] == 0.0 {
                    continue;
                }
                let diff = &x.column(l) - &x.column(k);
                let nrm = (diff.dot(&diff) + eps * eps).sqrt();
                let w = lam * s[[l, k]] / nrm;
                for i in 0..m {
                    g[[i, l]] += w * diff[i];
                    g[[i, k]] -= w * diff[i];
                }
            }
        }
        g
    };
    let kmax = r.iter().chain(s.iter()).fold(0.0f64, |a, v| a.max(*v));
    let lip = 4.0 * lam * kmax * (m.max(n) as f64) / eps;
    let step = 1.0 / lip;
    let mut x = spec.marginals.independent_coupling();
    let mut y = x.clone();
    let mut t = 1.0f64;
    for _ in 0..iters {
        let g = grad(&y);
        let xn = project_polytope(&(&y - &(g * step)), &mu, &nu);
        let tn = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
        y = &xn + &((&xn - &x) * ((t - 1.0) / tn));
        x = xn;
        t = tn;
    }
    spec.full_objective(x.view()).unwrap()
}

#[test]
fn matches_smoothed_reference() {
    let mut r = rng(41);
    for lam in [0.02, 0.1] {
        let spec = random_spec(&mut r, 3, 3, lam, 1.0, 1.0);
        let reference = smoothed_reference(&spec, 1e-4, 3000);
        let mut cfg = SolverConfig::defaults_for(&spec);
        cfg.epochs = 3000;
        let rep = solve(&spec, &cfg, None).unwrap();
        let got = spec.full_objective(rep.coupling.view()).unwrap();
        // the smoothed optimum sits within lam * sum(kernels) * eps of the true one
        assert!((got - reference).abs() <= 1e-3 * reference, "lambda {lam}: solver {got}, reference {reference}");
    }
}

#[test]
fn memory_total_stays_consistent() {
    let mut r = rng(42);
    for jit in [true, false] {
        let spec = random_spec(&mut r, 4, 5, 0.3, 1.0, 0.5);
        let mut cfg = SolverConfig::defaults_for(&spec);
        cfg.jit = jit;
        let mut st = SolverState::new(&spec, cfg, None).unwrap();
        for _ in 0..5000 {
            st.step().unwrap();
        }
        assert_eq!(st.iterations(), 5000);
        assert!(st.memory().consistency_error() <= 1e-10, "jit {jit}: {}", st.memory().consistency_error());
    }
}

#[test]
fn same_seed_same_output() {
    let mut r = rng(43);
    let spec = random_spec(&mut r, 5, 4, 0.2, 1.0, 1.0);
    let mut cfg = SolverConfig::defaults_for(&spec);
    cfg.epochs = 30;
    cfg.seed = 9;
    let a = solve(&spec, &cfg, None).unwrap();
    let b = solve(&spec, &cfg, None).unwrap();
    assert_eq!(a.coupling.plan(), b.coupling.plan());
    assert_eq!(a.support_pattern, b.support_pattern);
    assert_eq!(a.iterations, b.iterations);
    assert_eq!(a.iterations, 30 * (20 + 12 + 9) as u64);
}

#[test]
fn rounded_output_is_feasible_and_improves() {
    let mut r = rng(44);
    for (m, n) in [(3, 3), (2, 6), (1, 4), (5, 1)] {
        let spec = random_spec(&mut r, m, n, 0.1, 1.0, 1.0);
        let mut cfg = SolverConfig::defaults_for(&spec);
        cfg.epochs = 200;
        let rep = solve(&spec, &cfg, None).unwrap();
        assert!(rep.coupling.recompute_gap(&spec.marginals) <= 1e-12);
        assert!(rep.coupling.plan().iter().all(|&v| v >= 0.0));
        let start = spec.full_objective(spec.marginals.independent_coupling().view()).unwrap();
        let end = spec.full_objective(rep.coupling.view()).unwrap();
        assert!(end <= start + 1e-12, "{m}x{n}: {end} > {start}");
    }
}

#[test]
fn best_so_far_is_running_minimum() {
    let mut r = rng(45);
    let spec = random_spec(&mut r, 4, 4, 0.5, 1.0, 1.0);
    let mut cfg = SolverConfig::defaults_for(&spec);
    cfg.epochs = 40;
    let rep = solve(&spec, &cfg, None).unwrap();
    let best = rep.best_so_far();
    assert_eq!(best.len(), rep.objective_trace.len());
    for (k, b) in best.iter().enumerate() {
        let min = rep.objective_trace[..=k].iter().map(|t| t.objective).fold(f64::INFINITY, f64::min);
        assert_eq!(*b, min);
        if k > 0 {
            assert!(*b <= best[k - 1]);
        }
    }
}

#[test]
fn warm_start_is_accepted() {
    let mut r = rng(46);
    let spec = random_spec(&mut r, 3, 4, 0.1, 1.0, 1.0);
    let mut cfg = SolverConfig::defaults_for(&spec);
    cfg.epochs = 50;
    let first = solve(&spec, &cfg, None).unwrap();
    let again = solve(&spec, &cfg, Some(&first.coupling)).unwrap();
    assert!(again.coupling.recompute_gap(&spec.marginals) <= 1e-12);
    let wrong = Coupling::independent(&sonot::Marginals::uniform(2, 2).unwrap());
    assert!(matches!(solve(&spec, &cfg, Some(&wrong)), Err(SonError::Dimension(_))));
}

#[test]
fn huge_step_never_returns_nonfinite() {
    let mut r = rng(47);
    let spec = random_spec(&mut r, 3, 3, 1.0, 1.0, 1.0);
    let mut cfg = SolverConfig::defaults_for(&spec);
    cfg.step = 1e308;
    cfg.epochs = 5;
    match solve(&spec, &cfg, None) {
        Err(SonError::Diverged { .. }) => {}
        Ok(rep) => assert!(rep.coupling.plan().iter().all(|v| v.is_finite())),
        Err(e) => panic!("unexpected error {e}"),
    }
}

fn chi_square(counts: &[u64], probs: &[f64]) -> f64 {
    let n: u64 = counts.iter().sum();
    counts
        .iter()
        .zip(probs)
        .map(|(&c, &p)| {
            let e = n as f64 * p;
            (c as f64 - e).powi(2) / e
        })
        .sum()
}

#[test]
fn sampling_frequencies() {
    let (p, q) = (8usize, 5usize);
    // 0.9999 quantile of chi-square with 12 degrees of freedom
    let crit = 37.0;
    for scheme in [Sampling::Uniform, Sampling::SplitPools { p_obj: 0.3 }] {
        let mut r = rng(48);
        let mut counts = vec![0u64; p + q];
        for _ in 0..1_000_000 {
            match sample_term(&mut r, scheme, p, q) {
                SampledTerm::Objective(i) => counts[i] += 1,
                SampledTerm::Constraint(i) => counts[p + i] += 1,
            }
        }
        let probs: Vec<f64> = match scheme {
            Sampling::Uniform => vec![1.0 / 13.0; 13],
            Sampling::SplitPools { p_obj } => (0..p + q)
                .map(|i| if i < p { p_obj / p as f64 } else { (1.0 - p_obj) / q as f64 })
                .collect(),
        };
        let stat = chi_square(&counts, &probs);
        assert!(stat < crit, "{scheme:?}: chi-square {stat}");
    }
}

#[test]
fn config_validation() {
    let mut r = rng(49);
    let spec = random_spec(&mut r, 2, 2, 0.1, 1.0, 1.0);
    let base = SolverConfig::defaults_for(&spec);
    assert!(base.validate().is_ok());
    for bad in [
        SolverConfig { step: 0.0, ..base.clone() },
        SolverConfig { rho_acc: 1.5, ..base.clone() },
        SolverConfig { step: f64::NAN, ..base.clone() },
        SolverConfig { sampling: Sampling::SplitPools { p_obj: 1.5 }, ..base.clone() },
    ] {
        assert!(matches!(bad.validate(), Err(SonError::InvalidInput(_))), "{bad:?}");
    }
}
