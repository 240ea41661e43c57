//! Experiment runner behind the `sonot` binary.
//!
//! Each subcommand reads one JSON experiment config, applies `--dotted.key=value`
//! overrides, validates, runs and writes its artifacts into `output_dir`.
//! Exit codes: 0 success, 2 config error, 3 numerical failure, 4 unsupported size.

use std::path::{Path, PathBuf};
use std::time::Instant;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::baselines::{exact_ot, sinkhorn, SinkhornConfig};
use crate::certificates::{
    general_quantities, monotonicity_delta, theorem1_ratio, theorem2_check, theorem3_bound, theorem3_part2_check,
    ClusterStructure, KernelMode, Part2Report,
};
use crate::datagen::{
    build_class_kernels, cost_matrix, gen_gaussian_pairs, gen_path_based, write_labeled_csv, Dataset, Metric,
};
use crate::error::{Result, SonError};
use crate::evaluation::{barycentric_map, knn1_accuracy, label_block_mass, label_mismatch_fraction};
use crate::io::{write_bool_csv, write_json, write_matrix_csv, Versioned};
use crate::problem::{CostMatrix, KernelWeights, Marginals, ProblemSpec};
use crate::solver::{solve, Sampling, SolverConfig, TracePoint};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_UNSUPPORTED: i32 = 4;

pub fn exit_code(err: &SonError) -> i32 {
    match err {
        SonError::Diverged { .. } => EXIT_NUMERICAL,
        SonError::UnsupportedSize(_) => EXIT_UNSUPPORTED,
        _ => EXIT_CONFIG,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: DataConfig,
    #[serde(default)]
    pub cost: CostConfig,
    #[serde(default)]
    pub kernel: KernelConfig,
    #[serde(default)]
    pub solver: SolverOverrides,
    /// Marginal penalty for the relaxed-problem bound; `None` skips it.
    #[serde(default)]
    pub theta: Option<f64>,
    #[serde(default)]
    pub certify: CertifyConfig,
    #[serde(default)]
    pub compare: CompareConfig,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataConfig {
    Gaussian {
        k: usize,
        m_per: usize,
        #[serde(default = "two")]
        dim: usize,
        omega: f64,
        #[serde(default)]
        seed: u64,
        #[serde(default)]
        centers_s: Option<Vec<Vec<f64>>>,
        #[serde(default)]
        centers_t: Option<Vec<Vec<f64>>>,
        /// Source clusters that also appear in the target; all when absent.
        #[serde(default)]
        target_clusters: Option<Vec<usize>>,
    },
    PathBased {
        n_per_class: usize,
        #[serde(default)]
        seed: u64,
        #[serde(default)]
        drop_source_class: Option<usize>,
        #[serde(default)]
        drop_target_class: Option<usize>,
        #[serde(default = "default_shift")]
        target_shift: Vec<f64>,
    },
    Csv {
        source: PathBuf,
        target: PathBuf,
        #[serde(default = "yes")]
        labeled: bool,
    },
}

fn two() -> usize {
    2
}

fn yes() -> bool {
    true
}

fn default_shift() -> Vec<f64> {
    vec![0.5, 0.5]
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostConfig {
    pub metric: Metric,
}

impl Default for CostConfig {
    fn default() -> Self {
        Self {
            metric: Metric::SqEuclidean,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KernelConfig {
    pub lambda: f64,
    pub lambda_rows: f64,
    pub lambda_cols: f64,
    pub sigma_s: Option<f64>,
    pub sigma_t: Option<f64>,
    pub supervised: bool,
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            lambda_rows: 1.0,
            lambda_cols: 1.0,
            sigma_s: None,
            sigma_t: None,
            supervised: true,
        }
    }
}

/// Unset fields fall back to [`SolverConfig::defaults_for`].
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverOverrides {
    pub step: Option<f64>,
    pub rho_acc: Option<f64>,
    pub alpha: Option<f64>,
    pub epochs: Option<usize>,
    pub seed: Option<u64>,
    pub jit: Option<bool>,
    pub sampling: Option<Sampling>,
    pub round_output: Option<bool>,
    pub support_threshold: Option<f64>,
    pub log_every: Option<usize>,
}

impl SolverOverrides {
    pub fn resolve(&self, spec: &ProblemSpec) -> SolverConfig {
        let mut c = SolverConfig::defaults_for(spec);
        c.log_every = 10;
        macro_rules! take {
            ($($f:ident),*) => { $(if let Some(v) = self.$f { c.$f = v; })* };
        }
        take!(step, rho_acc, alpha, epochs, seed, jit, sampling, round_output, support_threshold, log_every);
        c
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CertifyConfig {
    /// Constant in the Gaussian separation condition.
    pub c_const: f64,
    /// Defaults to `same_cluster` for supervised kernels, `uniform` otherwise.
    pub kernel_mode: Option<KernelMode>,
    /// Target cluster per source cluster; identity when absent.
    pub association: Option<Vec<usize>>,
    /// `(a, c, d)` for the exact constant-block check; skipped when absent.
    pub part2_constants: Option<[f64; 3]>,
}

impl Default for CertifyConfig {
    fn default() -> Self {
        Self {
            c_const: 1.0,
            kernel_mode: None,
            association: None,
            part2_constants: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Son,
    Sinkhorn,
    Exact,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CompareConfig {
    pub methods: Vec<Method>,
    /// Absolute epsilon; overrides `sinkhorn_epsilon_scale`.
    pub sinkhorn_epsilon: Option<f64>,
    /// Epsilon as a multiple of the mean cost.
    pub sinkhorn_epsilon_scale: f64,
    pub sinkhorn_max_iters: usize,
    pub sinkhorn_tol: f64,
}

impl Default for CompareConfig {
    fn default() -> Self {
        Self {
            methods: vec![Method::Son, Method::Sinkhorn],
            sinkhorn_epsilon: None,
            sinkhorn_epsilon_scale: 0.1,
            sinkhorn_max_iters: 10_000,
            sinkhorn_tol: 1e-9,
        }
    }
}

/// Sets `root.a.b = value`, creating objects along the way.
pub fn set_dotted(root: &mut Value, key: &str, value: Value) -> Result<()> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(SonError::invalid(format!("malformed override key {key:?}")));
    }
    let mut cur = root;
    for (i, part) in parts.iter().enumerate() {
        let obj = cur
            .as_object_mut()
            .ok_or_else(|| SonError::invalid(format!("override {key:?}: {:?} is not an object", parts[..i].join("."))))?;
        if i + 1 == parts.len() {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        cur = obj.entry(part.to_string()).or_insert_with(|| Value::Object(Default::default()));
    }
    Ok(())
}

/// `--a.b=v` pairs. Values parse as JSON when possible, else as strings.
pub fn parse_overrides(args: &[String]) -> Result<Vec<(String, Value)>> {
    args.iter()
        .map(|a| {
            let body = a
                .strip_prefix("--")
                .ok_or_else(|| SonError::invalid(format!("unexpected argument {a:?}; overrides look like --key=value")))?;
            let (k, v) = body
                .split_once('=')
                .ok_or_else(|| SonError::invalid(format!("override {a:?} has no '='")))?;
            let value = serde_json::from_str(v).unwrap_or_else(|_| Value::String(v.to_string()));
            Ok((k.to_string(), value))
        })
        .collect()
}

pub fn load_config(path: &Path, overrides: &[String]) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| SonError::io(path, e))?;
    let mut value: Value = serde_json::from_str(&text)?;
    for (k, v) in parse_overrides(overrides)? {
        set_dotted(&mut value, &k, v)?;
    }
    let mut cfg: ExperimentConfig = serde_json::from_value(value)?;
    // relative paths in the config are relative to the config file
    let base = path.parent().unwrap_or(Path::new("."));
    if cfg.output_dir.is_relative() {
        cfg.output_dir = base.join(&cfg.output_dir);
    }
    if let DataConfig::Csv { source, target, .. } = &mut cfg.data {
        if source.is_relative() {
            *source = base.join(&*source);
        }
        if target.is_relative() {
            *target = base.join(&*target);
        }
    }
    Ok(cfg)
}

/// Data, problem and generator metadata shared by all subcommands.
pub struct Instance {
    pub source: Dataset,
    pub target: Dataset,
    pub spec: ProblemSpec,
    /// Generator centers and noise, when known.
    pub centers: Option<(Vec<Vec<f64>>, Vec<Vec<f64>>, f64)>,
}

pub fn generate_data(data: &DataConfig) -> Result<(Dataset, Dataset, Option<(Vec<Vec<f64>>, Vec<Vec<f64>>, f64)>)> {
    match data {
        DataConfig::Gaussian {
            k,
            m_per,
            dim,
            omega,
            seed,
            centers_s,
            centers_t,
            target_clusters,
        } => {
            let centers = match (centers_s, centers_t) {
                (Some(s), Some(t)) => (s.clone(), t.clone()),
                (None, None) => crate::datagen::default_centers(*k, *dim),
                _ => return Err(SonError::invalid("give both centers_s and centers_t, or neither")),
            };
            let (src, mut tgt) = gen_gaussian_pairs(*k, *m_per, *dim, Some(centers.clone()), *omega, *seed)?;
            let (cs, mut ct) = centers;
            if let Some(keep) = target_clusters {
                if keep.is_empty() || keep.iter().any(|&c| c >= *k) {
                    return Err(SonError::invalid(format!("target_clusters must be a nonempty subset of 0..{k}")));
                }
                let labels = tgt.labels.clone().expect("generator labels");
                let idx: Vec<usize> = (0..tgt.len()).filter(|&j| keep.contains(&labels[j])).collect();
                let pts = tgt.points.select(ndarray::Axis(0), &idx);
                tgt = Dataset::new(pts, Some(idx.iter().map(|&j| labels[j]).collect()))?;
                ct = (0..*k).filter(|c| keep.contains(c)).map(|c| ct[c].clone()).collect();
            }
            Ok((src, tgt, Some((cs, ct, *omega))))
        }
        DataConfig::PathBased {
            n_per_class,
            seed,
            drop_source_class,
            drop_target_class,
            target_shift,
        } => {
            if target_shift.len() != 2 {
                return Err(SonError::invalid("target_shift must have two entries"));
            }
            let src = gen_path_based(*n_per_class, *seed, *drop_source_class)?;
            let mut tgt = gen_path_based(*n_per_class, seed.wrapping_add(1), *drop_target_class)?;
            for mut row in tgt.points.rows_mut() {
                row[0] += target_shift[0];
                row[1] += target_shift[1];
            }
            Ok((src, tgt, None))
        }
        DataConfig::Csv { source, target, labeled } => {
            let s = crate::datagen::load_labeled_csv(source, *labeled)?;
            let t = crate::datagen::load_labeled_csv(target, *labeled)?;
            Ok((s, t, None))
        }
    }
}

pub fn build_instance(cfg: &ExperimentConfig) -> Result<Instance> {
    let (source, target, centers) = generate_data(&cfg.data)?;
    let cost = cost_matrix(&source, &target, cfg.cost.metric)?;
    let marginals = Marginals::uniform(source.len(), target.len())?;
    let k = &cfg.kernel;
    let kernels = build_class_kernels(&source, &target, k.sigma_s, k.sigma_t, k.lambda_rows, k.lambda_cols, k.supervised)?;
    let spec = ProblemSpec::new(cost, marginals, kernels, k.lambda, cfg.theta)?;
    Ok(Instance {
        source,
        target,
        spec,
        centers,
    })
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| SonError::io(dir, e))
}

#[derive(Clone, Debug, Serialize)]
pub struct SolveSummary {
    pub m: usize,
    pub n: usize,
    pub lambda: f64,
    pub config: SolverConfig,
    pub iterations: u64,
    pub wall_time: f64,
    pub final_objective: f64,
    pub transport_cost: f64,
    pub feasibility_gap: f64,
    pub support_size: usize,
    pub label_mismatch_fraction: Option<f64>,
    pub objective_trace: Vec<TracePoint>,
}

pub fn run_solve(cfg: &ExperimentConfig) -> Result<SolveSummary> {
    let inst = build_instance(cfg)?;
    let scfg = cfg.solver.resolve(&inst.spec);
    let report = solve(&inst.spec, &scfg, None)?;
    let plan = report.coupling.plan();
    let out = &cfg.output_dir;
    ensure_dir(out)?;
    write_matrix_csv(out.join("coupling.csv"), plan)?;
    write_bool_csv(out.join("support.csv"), &report.support_pattern)?;
    let (blocks, mismatch) = match (&inst.source.labels, &inst.target.labels) {
        (Some(ls), Some(lt)) => (label_block_mass(plan, ls, lt)?, Some(label_mismatch_fraction(plan, ls, lt)?)),
        _ => (Array2::from_elem((1, 1), plan.sum()), None),
    };
    write_matrix_csv(out.join("blocks.csv"), &blocks)?;
    let summary = SolveSummary {
        m: inst.spec.m(),
        n: inst.spec.n(),
        lambda: inst.spec.lambda,
        config: scfg,
        iterations: report.iterations,
        wall_time: report.wall_time,
        final_objective: inst.spec.full_objective(plan.view())?,
        transport_cost: inst.spec.transport_cost(plan.view())?,
        feasibility_gap: report.coupling.feasibility_gap(),
        support_size: report.support_pattern.iter().filter(|b| **b).count(),
        label_mismatch_fraction: mismatch,
        objective_trace: report.objective_trace,
    };
    write_json(out.join("report.json"), &Versioned::new(&summary))?;
    Ok(summary)
}

#[derive(Clone, Debug, Serialize)]
pub struct CertifySummary {
    pub k: usize,
    pub source_sizes: Vec<usize>,
    pub target_sizes: Vec<usize>,
    pub masses: Vec<f64>,
    pub feasible: bool,
    pub kernel_mode: KernelMode,
    pub lambda: f64,
    pub delta: f64,
    pub delta_cycle: Vec<usize>,
    #[serde(rename = "Delta")]
    pub diameter: Option<f64>,
    #[serde(rename = "Lambda")]
    pub capacity: Option<f64>,
    pub lambda_window: Option<(f64, f64)>,
    pub part1_holds: Option<bool>,
    pub part2_bound: Option<f64>,
    pub thm1_ratio: Option<f64>,
    pub thm3_bound: Option<f64>,
    pub part2_check: Option<Part2Report>,
    pub delta0: f64,
    pub delta1: f64,
    /// Original class ids kept when the domains have different class sets.
    pub matched_classes: Option<Vec<usize>>,
}

/// Restriction of an instance to the classes present in both domains, relabeled
/// `0..k` in increasing class order, with uniform marginals on the kept points.
struct Matched {
    spec: ProblemSpec,
    source_labels: Vec<usize>,
    target_labels: Vec<usize>,
    classes: Vec<usize>,
}

fn matched_subinstance(inst: &Instance, ls: &[usize], lt: &[usize]) -> Result<Matched> {
    let classes: Vec<usize> = {
        let mut c: Vec<usize> = ls.iter().copied().filter(|a| lt.contains(a)).collect();
        c.sort_unstable();
        c.dedup();
        c
    };
    if classes.is_empty() {
        return Err(SonError::invalid("source and target share no class"));
    }
    let rows: Vec<usize> = (0..ls.len()).filter(|&i| classes.contains(&ls[i])).collect();
    let cols: Vec<usize> = (0..lt.len()).filter(|&j| classes.contains(&lt[j])).collect();
    let relabel = |c: usize| classes.iter().position(|&x| x == c).expect("shared class");
    let ax0 = ndarray::Axis(0);
    let ax1 = ndarray::Axis(1);
    let cost = CostMatrix::new(inst.spec.cost.view().select(ax0, &rows).select(ax1, &cols))?;
    let kr = inst.spec.kernels.rows().select(ax0, &rows).select(ax1, &rows);
    let kc = inst.spec.kernels.cols().select(ax0, &cols).select(ax1, &cols);
    let spec = ProblemSpec::new(
        cost,
        Marginals::uniform(rows.len(), cols.len())?,
        KernelWeights::new(kr, kc)?,
        inst.spec.lambda,
        inst.spec.theta,
    )?;
    Ok(Matched {
        spec,
        source_labels: rows.iter().map(|&i| relabel(ls[i])).collect(),
        target_labels: cols.iter().map(|&j| relabel(lt[j])).collect(),
        classes,
    })
}

/// Certificates for the labeled instance. When no association is configured
/// and the two domains have different class sets, the certificate is computed
/// on the classes they share (`matched_classes`).
pub fn run_certify(cfg: &ExperimentConfig) -> Result<CertifySummary> {
    let mut inst = build_instance(cfg)?;
    let (Some(ls), Some(lt)) = (inst.source.labels.clone(), inst.target.labels.clone()) else {
        return Err(SonError::invalid("certify needs labels on both domains"));
    };
    let (ls, lt, matched_classes) = {
        let mut a: Vec<usize> = ls.clone();
        let mut b: Vec<usize> = lt.clone();
        a.sort_unstable();
        a.dedup();
        b.sort_unstable();
        b.dedup();
        if a != b && cfg.certify.association.is_none() {
            let m = matched_subinstance(&inst, &ls, &lt)?;
            if let Some((s, t, omega)) = inst.centers.take() {
                let s: Vec<Vec<f64>> = m.classes.iter().filter_map(|&c| s.get(c).cloned()).collect();
                if s.len() == t.len() {
                    inst.centers = Some((s, t, omega));
                }
            }
            inst.spec = m.spec;
            (m.source_labels, m.target_labels, Some(m.classes))
        } else {
            (ls, lt, None)
        }
    };
    let n_source = ls.len();
    let k = ls.iter().chain(&lt).max().map_or(0, |v| v + 1);
    let association = cfg.certify.association.clone().unwrap_or_else(|| (0..k).collect());
    if association.len() != k {
        return Err(SonError::invalid(format!("association has {} entries but there are {k} clusters", association.len())));
    }
    let cs = ClusterStructure::new(ls.clone(), lt.clone(), association, &inst.spec.marginals)?;
    let mode = cfg.certify.kernel_mode.unwrap_or(if cfg.kernel.supervised {
        KernelMode::SameCluster
    } else {
        KernelMode::Uniform
    });
    let cost = &inst.spec.cost;
    let lambda = inst.spec.lambda;
    let thm1_ratio = match &inst.centers {
        Some((s, t, omega)) if s.len() >= 2 && s.len() == t.len() => {
            Some(theorem1_ratio(s, t, *omega, n_source, cfg.certify.c_const)?)
        }
        _ => None,
    };
    let thm3_bound = match cfg.theta {
        Some(theta) => Some(theorem3_bound(cost, &cs, lambda, theta, &inst.spec.kernels)?),
        None => None,
    };
    let part2_check = match (cfg.certify.part2_constants, cfg.theta) {
        (Some([a, c, d]), Some(theta)) => Some(theorem3_part2_check(
            cost,
            &inst.spec.marginals,
            &cs,
            &inst.spec.kernels,
            lambda,
            theta,
            a,
            c,
            d,
        )?),
        (Some(_), None) => return Err(SonError::MissingTheta),
        _ => None,
    };
    let gq = general_quantities(cost, &cs)?;
    let mut summary = CertifySummary {
        k,
        source_sizes: cs.source_sizes().to_vec(),
        target_sizes: cs.target_sizes().to_vec(),
        masses: cs.masses().to_vec(),
        feasible: cs.is_feasible(),
        kernel_mode: mode,
        lambda,
        delta: gq.margin,
        delta_cycle: Vec::new(),
        diameter: None,
        capacity: None,
        lambda_window: None,
        part1_holds: None,
        part2_bound: None,
        thm1_ratio,
        thm3_bound,
        part2_check,
        delta0: gq.delta0,
        delta1: gq.delta1,
        matched_classes,
    };
    if cs.common_size().is_some() && k >= 2 {
        let r = theorem2_check(cost, &cs, lambda, mode)?;
        summary.delta_cycle = r.delta_cycle;
        summary.diameter = Some(r.diameter);
        summary.capacity = Some(r.capacity);
        summary.lambda_window = Some(r.lambda_window);
        summary.part1_holds = Some(r.part1_holds);
        summary.part2_bound = Some(r.part2_bound);
    } else {
        let tilde = crate::certificates::associated_mean_costs(cost, &cs)?;
        summary.delta_cycle = monotonicity_delta(&tilde)?.cycle;
    }
    ensure_dir(&cfg.output_dir)?;
    write_json(cfg.output_dir.join("certificate.json"), &Versioned::new(&summary))?;
    Ok(summary)
}

#[derive(Clone, Debug, Serialize)]
pub struct MethodRow {
    pub method: Method,
    pub transport_cost: f64,
    pub son_objective: f64,
    pub feasibility_gap: f64,
    pub off_association_fraction: Option<f64>,
    pub knn1_accuracy: Option<f64>,
    pub min_entry: f64,
    pub wall_time: f64,
    pub note: Option<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct CompareSummary {
    pub m: usize,
    pub n: usize,
    pub lambda: f64,
    pub rows: Vec<MethodRow>,
}

/// Parallel method runs, capped by `SONOT_THREADS` (default: available cores).
pub fn thread_cap() -> usize {
    std::env::var("SONOT_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&v| v > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

fn run_method(inst: &Instance, cfg: &ExperimentConfig, method: Method) -> Result<MethodRow> {
    let start = Instant::now();
    let spec = &inst.spec;
    let (coupling, note) = match method {
        Method::Son => {
            let scfg = SolverConfig {
                log_every: 0,
                ..cfg.solver.resolve(spec)
            };
            (solve(spec, &scfg, None)?.coupling, None)
        }
        Method::Sinkhorn => {
            let c = &cfg.compare;
            let eps = c.sinkhorn_epsilon.unwrap_or(c.sinkhorn_epsilon_scale * spec.cost.mean());
            let r = sinkhorn(&spec.cost, &spec.marginals, &SinkhornConfig::new(eps, c.sinkhorn_max_iters, c.sinkhorn_tol)?)?;
            let note = r.not_converged.then(|| format!("not converged, violation {:e}", r.violation));
            (r.coupling, note)
        }
        Method::Exact => (exact_ot(&spec.cost, &spec.marginals)?, None),
    };
    let plan = coupling.plan();
    let (off, acc) = match (&inst.source.labels, &inst.target.labels) {
        (Some(ls), Some(lt)) => {
            let moved = barycentric_map(plan, &inst.target, Some(ls.clone()))?;
            let acc = knn1_accuracy(&moved.dataset.points, ls, &inst.target.points, lt)?;
            (Some(label_mismatch_fraction(plan, ls, lt)?), Some(acc))
        }
        _ => (None, None),
    };
    Ok(MethodRow {
        method,
        transport_cost: spec.transport_cost(plan.view())?,
        son_objective: spec.full_objective(plan.view())?,
        feasibility_gap: coupling.feasibility_gap(),
        off_association_fraction: off,
        knn1_accuracy: acc,
        min_entry: plan.iter().cloned().fold(f64::INFINITY, f64::min),
        wall_time: start.elapsed().as_secs_f64(),
        note,
    })
}

pub fn run_compare(cfg: &ExperimentConfig) -> Result<CompareSummary> {
    let methods = &cfg.compare.methods;
    if methods.is_empty() {
        return Err(SonError::invalid("compare.methods is empty"));
    }
    let inst = build_instance(cfg)?;
    if methods.contains(&Method::Exact) && inst.spec.m() * inst.spec.n() > crate::baselines::EXACT_OT_MAX_CELLS {
        return Err(SonError::UnsupportedSize(format!(
            "exact method is limited to m*n <= {}",
            crate::baselines::EXACT_OT_MAX_CELLS
        )));
    }
    let cap = thread_cap().max(1);
    let mut rows: Vec<Option<Result<MethodRow>>> = (0..methods.len()).map(|_| None).collect();
    for (chunk_idx, chunk) in methods.chunks(cap).enumerate() {
        let results: Vec<Result<MethodRow>> = std::thread::scope(|s| {
            let inst = &inst;
            let handles: Vec<_> = chunk.iter().map(|&m| s.spawn(move || run_method(inst, cfg, m))).collect();
            handles
                .into_iter()
                .map(|h| h.join().unwrap_or_else(|_| Err(SonError::invalid("method thread panicked"))))
                .collect()
        });
        for (i, r) in results.into_iter().enumerate() {
            rows[chunk_idx * cap + i] = Some(r);
        }
    }
    let rows = rows.into_iter().map(|r| r.expect("every method ran")).collect::<Result<Vec<_>>>()?;
    let summary = CompareSummary {
        m: inst.spec.m(),
        n: inst.spec.n(),
        lambda: inst.spec.lambda,
        rows,
    };
    ensure_dir(&cfg.output_dir)?;
    write_json(cfg.output_dir.join("compare.json"), &Versioned::new(&summary))?;
    Ok(summary)
}

pub fn run_gen(cfg: &ExperimentConfig) -> Result<(Dataset, Dataset)> {
    let (s, t, _) = generate_data(&cfg.data)?;
    ensure_dir(&cfg.output_dir)?;
    write_labeled_csv(cfg.output_dir.join("source.csv"), &s)?;
    write_labeled_csv(cfg.output_dir.join("target.csv"), &t)?;
    Ok((s, t))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Subcommand {
    Solve,
    Certify,
    Compare,
    Gen,
}

/// Loads the config, runs the subcommand and maps the outcome to an exit code.
/// Errors are printed to stderr.
pub fn run(cmd: Subcommand, config_path: &Path, overrides: &[String]) -> i32 {
    let result = load_config(config_path, overrides).and_then(|cfg| match cmd {
        Subcommand::Solve => run_solve(&cfg).map(|s| {
            println!(
                "objective={} gap={:e} iterations={} -> {}",
                s.final_objective,
                s.feasibility_gap,
                s.iterations,
                cfg.output_dir.display()
            )
        }),
        Subcommand::Certify => run_certify(&cfg).map(|s| {
            println!(
                "delta={} window={:?} part1_holds={:?} -> {}",
                s.delta,
                s.lambda_window,
                s.part1_holds,
                cfg.output_dir.display()
            )
        }),
        Subcommand::Compare => run_compare(&cfg).map(|s| {
            for r in &s.rows {
                println!(
                    "{:?}: cost={} off={:?} acc={:?}",
                    r.method, r.transport_cost, r.off_association_fraction, r.knn1_accuracy
                );
            }
        }),
        Subcommand::Gen => run_gen(&cfg).map(|(s, t)| println!("source={} target={} -> {}", s.len(), t.len(), cfg.output_dir.display())),
    });
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
