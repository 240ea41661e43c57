//! WebAssembly bindings for the static demo page.
//!
//! Every export takes plain numbers and returns a JSON string, so the page
//! needs no generated type definitions. The same functions are callable
//! natively (see the tests).

use serde::Serialize;
use sonot::baselines::{sinkhorn, SinkhornConfig};
use sonot::certificates::{theorem2_check, ClusterStructure, KernelMode};
use sonot::datagen::{build_class_kernels, cost_matrix, gen_gaussian_pairs, Dataset, Metric};
use sonot::evaluation::block_mass_report;
use sonot::{solve, Marginals, ProblemSpec, SolverConfig};
use wasm_bindgen::prelude::*;

/// Two source clusters `separation` apart, targets shifted up by one.
#[derive(Clone, Copy, Debug)]
pub struct Scene {
    pub seed: u64,
    pub per_cluster: usize,
    pub omega: f64,
    pub separation: f64,
}

#[derive(Debug, Serialize)]
pub struct Window {
    pub delta: f64,
    pub lower: f64,
    pub upper: f64,
    pub nonempty: bool,
}

#[derive(Debug, Serialize)]
pub struct Plot {
    pub source: Vec<[f64; 2]>,
    pub target: Vec<[f64; 2]>,
    pub source_labels: Vec<usize>,
    pub target_labels: Vec<usize>,
    pub window: Window,
}

#[derive(Debug, Serialize)]
pub struct PlanSummary {
    pub plan: Vec<Vec<f64>>,
    pub off_block: f64,
    pub min_entry: f64,
    pub transport_cost: f64,
}

#[derive(Debug, Serialize)]
pub struct SolveView {
    pub plot: Plot,
    pub lambda: f64,
    pub son: PlanSummary,
    pub sinkhorn: Option<PlanSummary>,
}

struct Built {
    src: Dataset,
    tgt: Dataset,
    cs: ClusterStructure,
    spec: ProblemSpec,
    window: Window,
}

fn points(ds: &Dataset) -> Vec<[f64; 2]> {
    (0..ds.len()).map(|i| [ds.point(i)[0], ds.point(i)[1]]).collect()
}

fn build(scene: Scene, lambda: f64) -> sonot::Result<Built> {
    let s = scene.separation;
    let centers = (vec![vec![0.0, 0.0], vec![s, 0.0]], vec![vec![0.0, 1.0], vec![s, 1.0]]);
    let (src, tgt) = gen_gaussian_pairs(2, scene.per_cluster, 2, Some(centers), scene.omega, scene.seed)?;
    let cost = cost_matrix(&src, &tgt, Metric::SqEuclidean)?;
    let marg = Marginals::uniform(src.len(), tgt.len())?;
    let cs = ClusterStructure::aligned(
        src.labels.clone().expect("generator labels"),
        tgt.labels.clone().expect("generator labels"),
        2,
        &marg,
    )?;
    let cert = theorem2_check(&cost, &cs, lambda, KernelMode::SameCluster)?;
    let (lower, upper) = cert.lambda_window;
    let window = Window {
        delta: cert.delta,
        lower,
        upper,
        nonempty: cert.delta > 0.0 && lower < upper,
    };
    // huge bandwidth: R = 1 inside source clusters, S = 1 everywhere
    let kernels = build_class_kernels(&src, &tgt, Some(1e6), Some(1e6), 1.0, 1.0, true)?;
    let spec = ProblemSpec::new(cost, marg, kernels, lambda, None)?;
    Ok(Built {
        src,
        tgt,
        cs,
        spec,
        window,
    })
}

fn plot(b: &Built) -> Plot {
    Plot {
        source: points(&b.src),
        target: points(&b.tgt),
        source_labels: b.cs.source_labels().to_vec(),
        target_labels: b.cs.target_labels().to_vec(),
        window: Window { ..b.window },
    }
}

fn summarize(b: &Built, plan: &sonot::Coupling) -> sonot::Result<PlanSummary> {
    let p = plan.plan();
    Ok(PlanSummary {
        plan: p.rows().into_iter().map(|r| r.to_vec()).collect(),
        off_block: block_mass_report(p, &b.cs)?.off_association_fraction,
        min_entry: p.iter().copied().fold(f64::INFINITY, f64::min),
        transport_cost: b.spec.transport_cost(plan.view())?,
    })
}

/// Maps the slider position `t` to a lambda: `t = 0` is the lower end of the
/// certified window, `t = 1` the upper end, geometric in between; outside
/// `[0, 1]` it extrapolates. Empty windows fall back to `lower * 2^t`.
pub fn lambda_at(w: &Window, t: f64) -> f64 {
    let lo = w.lower.max(1e-9);
    let hi = if w.nonempty { w.upper } else { 2.0 * lo };
    lo * (hi / lo).powf(t)
}

fn to_json<T: Serialize>(v: &T) -> Result<String, String> {
    serde_json::to_string(v).map_err(|e| e.to_string())
}

/// Points and certified window without running a solver.
pub fn certify_scene(scene: Scene) -> Result<String, String> {
    let b = build(scene, 0.0).map_err(|e| e.to_string())?;
    to_json(&plot(&b))
}

pub fn solve_scene(scene: Scene, t: f64, epochs: usize, with_sinkhorn: Option<f64>) -> Result<SolveView, String> {
    let probe = build(scene, 0.0).map_err(|e| e.to_string())?;
    let lambda = lambda_at(&probe.window, t);
    let b = build(scene, lambda).map_err(|e| e.to_string())?;
    let mut cfg = SolverConfig::defaults_for(&b.spec);
    cfg.epochs = epochs.max(1);
    cfg.seed = scene.seed;
    let rep = solve(&b.spec, &cfg, None).map_err(|e| e.to_string())?;
    let son = summarize(&b, &rep.coupling).map_err(|e| e.to_string())?;
    let sinkhorn = match with_sinkhorn {
        Some(scale) => {
            let cfg = SinkhornConfig::new(scale * b.spec.cost.mean(), 10_000, 1e-9).map_err(|e| e.to_string())?;
            let r = sinkhorn(&b.spec.cost, &b.spec.marginals, &cfg).map_err(|e| e.to_string())?;
            Some(summarize(&b, &r.coupling).map_err(|e| e.to_string())?)
        }
        None => None,
    };
    Ok(SolveView {
        plot: plot(&b),
        lambda,
        son,
        sinkhorn,
    })
}

fn scene(seed: u32, per_cluster: u32, omega: f64, separation: f64) -> Scene {
    Scene {
        seed: seed as u64,
        per_cluster: per_cluster.clamp(1, 12) as usize,
        omega,
        separation,
    }
}

#[wasm_bindgen]
pub fn certify(seed: u32, per_cluster: u32, omega: f64, separation: f64) -> Result<String, JsValue> {
    certify_scene(scene(seed, per_cluster, omega, separation)).map_err(|e| JsValue::from_str(&e))
}

/// SON plan at slider position `t` within the certified window.
#[wasm_bindgen]
pub fn solve_son(seed: u32, per_cluster: u32, omega: f64, separation: f64, t: f64, epochs: u32) -> Result<String, JsValue> {
    solve_scene(scene(seed, per_cluster, omega, separation), t, epochs as usize, None)
        .and_then(|v| to_json(&v))
        .map_err(|e| JsValue::from_str(&e))
}

/// SON plan plus the entropic plan at `epsilon = eps_scale * mean cost`.
#[wasm_bindgen]
pub fn compare_sinkhorn(
    seed: u32,
    per_cluster: u32,
    omega: f64,
    separation: f64,
    t: f64,
    epochs: u32,
    eps_scale: f64,
) -> Result<String, JsValue> {
    solve_scene(scene(seed, per_cluster, omega, separation), t, epochs as usize, Some(eps_scale))
        .and_then(|v| to_json(&v))
        .map_err(|e| JsValue::from_str(&e))
}

#[cfg(test)]
mod tests {
    use super::*;

    const S: Scene = Scene {
        seed: 1,
        per_cluster: 4,
        omega: 0.05,
        separation: 4.0,
    };

    #[test]
    fn window_is_reported() {
        let v: serde_json::Value = serde_json::from_str(&certify_scene(S).unwrap()).unwrap();
        assert_eq!(v["source"].as_array().unwrap().len(), 8);
        assert_eq!(v["window"]["nonempty"], serde_json::json!(true));
    }

    #[test]
    fn inside_window_recovers_blocks() {
        let v = solve_scene(S, 0.5, 300, Some(0.1)).unwrap();
        assert!(v.lambda > v.plot.window.lower && v.lambda < v.plot.window.upper);
        assert!(v.son.off_block <= 1e-3);
        let sk = v.sinkhorn.unwrap();
        assert!(sk.min_entry > 0.0);
        assert!(sk.off_block > v.son.off_block);
    }

    #[test]
    fn slider_mapping() {
        let w = Window {
            delta: 1.0,
            lower: 0.5,
            upper: 2.0,
            nonempty: true,
        };
        assert!((lambda_at(&w, 0.0) - 0.5).abs() < 1e-15);
        assert!((lambda_at(&w, 1.0) - 2.0).abs() < 1e-15);
        assert!((lambda_at(&w, 0.5) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn bad_input_is_an_error() {
        assert!(certify_scene(Scene { omega: -1.0, ..S }).is_err());
    }
}
