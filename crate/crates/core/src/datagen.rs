//! Synthetic point clouds, class kernels, cost matrices and labeled CSV input.

use std::path::Path;

use ndarray::{Array2, ArrayView1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SonError};
use crate::problem::{CostMatrix, KernelWeights};

/// Points (one per row) with optional class labels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub points: Array2<f64>,
    pub labels: Option<Vec<usize>>,
}

impl Dataset {
    pub fn new(points: Array2<f64>, labels: Option<Vec<usize>>) -> Result<Self> {
        if let Some(l) = &labels {
            if l.len() != points.nrows() {
                return Err(SonError::dim(format!("{} labels for {} points", l.len(), points.nrows())));
            }
        }
        if let Some(((i, j), v)) = points.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(SonError::invalid(format!("point {i} feature {j} = {v} is not finite")));
        }
        Ok(Self { points, labels })
    }

    pub fn len(&self) -> usize {
        self.points.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.points.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.points.ncols()
    }

    pub fn point(&self, i: usize) -> ArrayView1<'_, f64> {
        self.points.row(i)
    }

    /// Number of classes `max label + 1`, or 0 without labels.
    pub fn class_count(&self) -> usize {
        self.labels.as_ref().and_then(|l| l.iter().max()).map_or(0, |m| m + 1)
    }

    /// Whether the labels present are exactly `0..class_count()`.
    pub fn labels_contiguous(&self) -> bool {
        match &self.labels {
            None => true,
            Some(l) => {
                let mut seen = vec![false; self.class_count()];
                l.iter().for_each(|&c| seen[c] = true);
                seen.into_iter().all(|s| s)
            }
        }
    }
}

/// Default center layout: `K` source centers evenly on a circle of radius
/// `2K` in the first two coordinates, targets shifted by one unit along the
/// second coordinate. In one dimension centers sit on a line with spacing 4.
pub fn default_centers(k: usize, dim: usize) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let mut src = Vec::with_capacity(k);
    for a in 0..k {
        let mut c = vec![0.0; dim];
        if dim == 1 {
            c[0] = 4.0 * a as f64;
        } else {
            let t = std::f64::consts::TAU * a as f64 / k as f64;
            let r = 2.0 * k as f64;
            c[0] = r * t.cos();
            c[1] = r * t.sin();
        }
        src.push(c);
    }
    let tgt = src
        .iter()
        .map(|c| {
            let mut t = c.clone();
            if dim >= 2 {
                t[1] += 1.0;
            } else {
                t[0] += 1.0;
            }
            t
        })
        .collect();
    (src, tgt)
}

/// `m_per` isotropic Gaussian samples (std `omega`) around each source and
/// target center. Points are grouped by cluster, labels are cluster ids.
pub fn gen_gaussian_pairs(
    k: usize,
    m_per: usize,
    dim: usize,
    centers: Option<(Vec<Vec<f64>>, Vec<Vec<f64>>)>,
    omega: f64,
    seed: u64,
) -> Result<(Dataset, Dataset)> {
    if k < 1 {
        return Err(SonError::invalid("need at least one cluster"));
    }
    if dim < 1 || m_per < 1 {
        return Err(SonError::invalid("dimension and samples per cluster must be >= 1"));
    }
    if !(omega >= 0.0) || !omega.is_finite() {
        return Err(SonError::invalid(format!("noise std must be finite and >= 0, got {omega}")));
    }
    let (cs, ct) = centers.unwrap_or_else(|| default_centers(k, dim));
    if cs.len() != k || ct.len() != k {
        return Err(SonError::dim(format!("expected {k} centers per domain, got {}/{}", cs.len(), ct.len())));
    }
    if cs.iter().chain(&ct).any(|c| c.len() != dim) {
        return Err(SonError::dim(format!("every center must have dimension {dim}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sample = |centers: &[Vec<f64>]| -> Result<Dataset> {
        let mut pts = Array2::zeros((k * m_per, dim));
        let mut labels = Vec::with_capacity(k * m_per);
        for (a, c) in centers.iter().enumerate() {
            for s in 0..m_per {
                let row = a * m_per + s;
                for (d, &cd) in c.iter().enumerate() {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    pts[[row, d]] = cd + omega * z;
                }
                labels.push(a);
            }
        }
        Dataset::new(pts, Some(labels))
    };
    let src = sample(&cs)?;
    let tgt = sample(&ct)?;
    Ok((src, tgt))
}

/// Shape parameters of the path-based generator.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathShape {
    pub arc_radius: f64,
    pub arc_jitter: f64,
    /// Arc span in radians; the gap is centered on the positive y axis.
    pub arc_span: f64,
    pub blob_offset: f64,
    pub blob_std: f64,
}

impl Default for PathShape {
    fn default() -> Self {
        Self {
            arc_radius: 6.0,
            arc_jitter: 0.3,
            arc_span: 1.5 * std::f64::consts::PI,
            blob_offset: 2.0,
            blob_std: 0.7,
        }
    }
}

/// Two Gaussian blobs (labels 0, 1) at `(-offset, 0)` and `(offset, 0)`
/// enclosed by an open circular arc (label 2). `drop_class` removes one label.
pub fn gen_path_based(n_per_class: usize, seed: u64, drop_class: Option<usize>) -> Result<Dataset> {
    gen_path_based_with(n_per_class, seed, drop_class, &PathShape::default())
}

pub fn gen_path_based_with(n_per_class: usize, seed: u64, drop_class: Option<usize>, shape: &PathShape) -> Result<Dataset> {
    if n_per_class < 1 {
        return Err(SonError::invalid("need at least one point per class"));
    }
    if let Some(c) = drop_class {
        if c > 2 {
            return Err(SonError::invalid(format!("drop class {c} is not one of 0, 1, 2")));
        }
    }
    let blob = Normal::new(0.0, shape.blob_std).map_err(|e| SonError::invalid(e.to_string()))?;
    let jitter = Normal::new(0.0, shape.arc_jitter).map_err(|e| SonError::invalid(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows: Vec<[f64; 2]> = Vec::with_capacity(3 * n_per_class);
    let mut labels = Vec::with_capacity(3 * n_per_class);
    for class in 0..3usize {
        for _ in 0..n_per_class {
            let p = match class {
                0 | 1 => {
                    let cx = if class == 0 { -shape.blob_offset } else { shape.blob_offset };
                    [cx + blob.sample(&mut rng), blob.sample(&mut rng)]
                }
                _ => {
                    // truncated at three standard deviations
                    let dr = loop {
                        let v: f64 = jitter.sample(&mut rng);
                        if v.abs() <= 3.0 * shape.arc_jitter {
                            break v;
                        }
                    };
                    let start = std::f64::consts::FRAC_PI_2 + (std::f64::consts::TAU - shape.arc_span) / 2.0;
                    let t = start + rng.random::<f64>() * shape.arc_span;
                    let r = shape.arc_radius + dr;
                    [r * t.cos(), r * t.sin()]
                }
            };
            if drop_class != Some(class) {
                rows.push(p);
                labels.push(class);
            }
        }
    }
    let pts = Array2::from_shape_fn((rows.len(), 2), |(i, d)| rows[i][d]);
    Dataset::new(pts, Some(labels))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    SqEuclidean,
    Euclidean,
}

fn sq_dist(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn cost_matrix(src: &Dataset, tgt: &Dataset, metric: Metric) -> Result<CostMatrix> {
    if src.dim() != tgt.dim() {
        return Err(SonError::dim(format!("source dimension {} vs target {}", src.dim(), tgt.dim())));
    }
    let grid = Array2::from_shape_fn((src.len(), tgt.len()), |(i, j)| {
        let d = sq_dist(src.point(i), tgt.point(j));
        match metric {
            Metric::SqEuclidean => d,
            Metric::Euclidean => d.sqrt(),
        }
    });
    CostMatrix::new(grid)
}

/// Median pairwise Euclidean distance among distinct points; 1 when there is
/// no pair or every pair coincides.
pub fn median_heuristic(ds: &Dataset) -> f64 {
    let mut d = Vec::with_capacity(ds.len() * ds.len().saturating_sub(1) / 2);
    for i in 0..ds.len() {
        for j in i + 1..ds.len() {
            d.push(sq_dist(ds.point(i), ds.point(j)).sqrt());
        }
    }
    if d.is_empty() {
        return 1.0;
    }
    d.sort_by(f64::total_cmp);
    let mid = d.len() / 2;
    let med = if d.len() % 2 == 0 { (d[mid - 1] + d[mid]) / 2.0 } else { d[mid] };
    if med > 0.0 {
        med
    } else {
        1.0
    }
}

fn gaussian_gram(ds: &Dataset, sigma: f64, scale: f64, mask: Option<&[usize]>) -> Array2<f64> {
    let n = ds.len();
    let mut k = Array2::zeros((n, n));
    for i in 0..n {
        for j in i + 1..n {
            if let Some(l) = mask {
                if l[i] != l[j] {
                    continue;
                }
            }
            let v = scale * (-sq_dist(ds.point(i), ds.point(j)) / (2.0 * sigma * sigma)).exp();
            k[[i, j]] = v;
            k[[j, i]] = v;
        }
    }
    k
}

/// Gaussian kernels `exp(-|x-y|^2 / (2 sigma^2))` scaled by `lambda_rows`
/// (source) and `lambda_cols` (target). In supervised mode source pairs from
/// different classes get zero weight. `None` bandwidths use the median heuristic.
pub fn build_class_kernels(
    src: &Dataset,
    tgt: &Dataset,
    sigma_s: Option<f64>,
    sigma_t: Option<f64>,
    lambda_rows: f64,
    lambda_cols: f64,
    supervised: bool,
) -> Result<KernelWeights> {
    let mask = if supervised {
        Some(
            src.labels
                .as_deref()
                .ok_or_else(|| SonError::invalid("supervised kernels need source labels"))?,
        )
    } else {
        None
    };
    let ss = sigma_s.unwrap_or_else(|| median_heuristic(src));
    let st = sigma_t.unwrap_or_else(|| median_heuristic(tgt));
    for (name, s) in [("sigma_s", ss), ("sigma_t", st)] {
        if !(s > 0.0) {
            return Err(SonError::invalid(format!("{name} must be > 0, got {s}")));
        }
    }
    let rows = gaussian_gram(src, ss, lambda_rows, mask);
    let cols = gaussian_gram(tgt, st, lambda_cols, None);
    KernelWeights::new(rows, cols)
}

/// Reads `label,f1,f2,...` rows (or `f1,f2,...` when `labeled` is false).
/// Lines starting with `#` are skipped; the first line may be a header.
pub fn load_labeled_csv(path: impl AsRef<Path>, labeled: bool) -> Result<Dataset> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| SonError::io(path, e))?;
    parse_labeled_csv(&text, labeled)
}

pub fn parse_labeled_csv(text: &str, labeled: bool) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut feats: Vec<Vec<f64>> = Vec::new();
    let mut labels = Vec::new();
    let mut width = None;
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| SonError::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = rec.position().map_or(k + 1, |p| p.line() as usize);
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        let fields: Vec<&str> = rec.iter().collect();
        let parsed: std::result::Result<Vec<f64>, _> = fields.iter().map(|f| f.parse::<f64>()).collect();
        let values = match parsed {
            Ok(v) => v,
            Err(_) if feats.is_empty() && labels.is_empty() && width.is_none() && k == 0 => continue,
            Err(_) => {
                let bad = fields.iter().find(|f| f.parse::<f64>().is_err()).unwrap_or(&"");
                return Err(SonError::Parse {
                    line,
                    message: format!("non-numeric field {bad:?}"),
                });
            }
        };
        let (label, row) = if labeled {
            let (l, rest) = values.split_first().ok_or_else(|| SonError::Parse {
                line,
                message: "empty row".into(),
            })?;
            if *l < 0.0 || l.fract() != 0.0 {
                return Err(SonError::Parse {
                    line,
                    message: format!("label {l} is not a nonnegative integer"),
                });
            }
            (Some(*l as usize), rest.to_vec())
        } else {
            (None, values)
        };
        if row.is_empty() {
            return Err(SonError::Parse {
                line,
                message: "row has no features".into(),
            });
        }
        match width {
            None => width = Some(row.len()),
            Some(w) if w != row.len() => {
                return Err(SonError::Parse {
                    line,
                    message: format!("row has {} features, expected {w}", row.len()),
                })
            }
            _ => {}
        }
        if let Some(l) = label {
            labels.push(l);
        }
        feats.push(row);
    }
    let Some(w) = width else {
        return Err(SonError::Parse {
            line: 0,
            message: "no data rows".into(),
        });
    };
    let pts = Array2::from_shape_fn((feats.len(), w), |(i, j)| feats[i][j]);
    Dataset::new(pts, labeled.then_some(labels))
}

/// Writes the format read by [`load_labeled_csv`].
pub fn write_labeled_csv(path: impl AsRef<Path>, ds: &Dataset) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_io(path, e))?;
    for i in 0..ds.len() {
        let mut rec: Vec<String> = Vec::with_capacity(ds.dim() + 1);
        if let Some(l) = &ds.labels {
            rec.push(l[i].to_string());
        }
        rec.extend(ds.point(i).iter().map(|v| format!("{v:e}")));
        w.write_record(&rec).map_err(|e| csv_io(path, e))?;
    }
    w.flush().map_err(|e| SonError::io(path, e))
}

pub(crate) fn csv_io(path: &Path, e: csv::Error) -> SonError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => SonError::io(path, io),
        other => SonError::invalid(format!("{}: {other:?}", path.display())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn gaussian_zero_noise_hits_centers() {
        let (s, t) = gen_gaussian_pairs(3, 4, 2, None, 0.0, 1).unwrap();
        let (cs, ct) = default_centers(3, 2);
        for i in 0..12 {
            let a = s.labels.as_ref().unwrap()[i];
            assert_eq!(s.point(i).to_vec(), cs[a]);
            assert_eq!(t.point(i).to_vec(), ct[a]);
        }
        assert!(gen_gaussian_pairs(0, 4, 2, None, 0.1, 1).is_err());
    }

    #[test]
    fn gaussian_seeded() {
        let a = gen_gaussian_pairs(2, 10, 3, None, 0.5, 42).unwrap();
        let b = gen_gaussian_pairs(2, 10, 3, None, 0.5, 42).unwrap();
        assert_eq!(a, b);
        let c = gen_gaussian_pairs(2, 10, 3, None, 0.5, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn path_based_counts_and_drop() {
        let d = gen_path_based(30, 7, None).unwrap();
        let l = d.labels.as_ref().unwrap();
        for c in 0..3 {
            assert_eq!(l.iter().filter(|&&x| x == c).count(), 30);
        }
        let d = gen_path_based(30, 7, Some(1)).unwrap();
        let l = d.labels.as_ref().unwrap();
        assert_eq!(d.len(), 60);
        assert!(!l.contains(&1));
        assert!(!d.labels_contiguous());
        assert!(gen_path_based(0, 7, None).is_err());
    }

    #[test]
    fn kernel_examples() {
        let src = Dataset::new(array![[0.0, 0.0], [0.0, 0.0], [5.0, 0.0]], Some(vec![0, 0, 1])).unwrap();
        let tgt = Dataset::new(array![[1.0], [2.0]], None).unwrap();
        let k = build_class_kernels(&src, &tgt, Some(1.0), Some(1e12), 0.7, 0.3, true).unwrap();
        assert_eq!(k.rows()[[0, 1]], 0.7);
        assert_eq!(k.rows()[[0, 2]], 0.0);
        assert!((k.cols()[[0, 1]] - 0.3).abs() < 1e-15);
        let unsup = build_class_kernels(&src, &tgt, Some(1.0), None, 1.0, 1.0, false).unwrap();
        assert!(unsup.rows()[[0, 2]] > 0.0);
        let nolab = Dataset::new(array![[0.0], [1.0]], None).unwrap();
        assert!(build_class_kernels(&nolab, &tgt, None, None, 1.0, 1.0, true).is_err());
    }

    #[test]
    fn cost_examples() {
        let a = Dataset::new(array![[0.0]], None).unwrap();
        let b = Dataset::new(array![[3.0]], None).unwrap();
        assert_eq!(cost_matrix(&a, &b, Metric::SqEuclidean).unwrap().get(0, 0), 9.0);
        assert_eq!(cost_matrix(&a, &b, Metric::Euclidean).unwrap().get(0, 0), 3.0);
        let c = Dataset::new(array![[0.0, 1.0]], None).unwrap();
        assert!(cost_matrix(&a, &c, Metric::Euclidean).is_err());
    }

    #[test]
    fn csv_parsing() {
        assert!(matches!(
            parse_labeled_csv("", true),
            Err(SonError::Parse { message, .. }) if message == "no data rows"
        ));
        let d = parse_labeled_csv("label,x,y\n0,1.0,2.0\n1,3,4\n0,5,6\n", true).unwrap();
        assert_eq!(d.len(), 3);
        assert_eq!(d.labels, Some(vec![0, 1, 0]));
        assert_eq!(d.point(1).to_vec(), vec![3.0, 4.0]);
        match parse_labeled_csv("0,1,2\n1,abc,3\n", true) {
            Err(SonError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        match parse_labeled_csv("0,1,2\n1,3\n", true) {
            Err(SonError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        let u = parse_labeled_csv("1,2\n3,4\n", false).unwrap();
        assert_eq!(u.labels, None);
        assert_eq!(u.dim(), 2);
    }
}
