//! Transported points, 1-NN transfer accuracy and block-structure metrics.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::certificates::ClusterStructure;
use crate::datagen::Dataset;
use crate::error::{Result, SonError};

/// Blocks holding at most this fraction of the total are skipped by the CV.
pub const BLOCK_CV_MIN_FRACTION: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransportedPoints {
    pub dataset: Dataset,
    /// Source rows with no mass, mapped to the target centroid.
    pub zero_mass_rows: Vec<usize>,
}

/// Source point `i` goes to `sum_j X_ij y_j / sum_j X_ij`. Labels are copied
/// from `source_labels` when given.
pub fn barycentric_map(plan: &Array2<f64>, tgt: &Dataset, source_labels: Option<Vec<usize>>) -> Result<TransportedPoints> {
    let (m, n) = plan.dim();
    if n != tgt.len() {
        return Err(SonError::dim(format!("plan has {n} columns but {} target points", tgt.len())));
    }
    if tgt.is_empty() {
        return Err(SonError::dim("no target points"));
    }
    let centroid: Array1<f64> = tgt.points.mean_axis(ndarray::Axis(0)).expect("nonempty targets");
    let mut out = Array2::zeros((m, tgt.dim()));
    let mut zero_mass_rows = Vec::new();
    for i in 0..m {
        let w = plan.row(i);
        let s: f64 = w.sum();
        if s <= 0.0 {
            zero_mass_rows.push(i);
            out.row_mut(i).assign(&centroid);
            continue;
        }
        let mut row = out.row_mut(i);
        for (j, &x) in w.iter().enumerate() {
            if x != 0.0 {
                row.scaled_add(x / s, &tgt.point(j));
            }
        }
    }
    Ok(TransportedPoints {
        dataset: Dataset::new(out, source_labels)?,
        zero_mass_rows,
    })
}

/// Fraction of test points whose nearest training point (Euclidean, ties to
/// the lowest index) carries the same label.
pub fn knn1_accuracy(
    train_pts: &Array2<f64>,
    train_labels: &[usize],
    test_pts: &Array2<f64>,
    test_labels: &[usize],
) -> Result<f64> {
    if train_pts.nrows() == 0 {
        return Err(SonError::invalid("empty training set"));
    }
    if test_pts.nrows() == 0 {
        return Err(SonError::invalid("empty test set"));
    }
    if train_pts.nrows() != train_labels.len() || test_pts.nrows() != test_labels.len() {
        return Err(SonError::dim("points and labels differ in length"));
    }
    if train_pts.ncols() != test_pts.ncols() {
        return Err(SonError::dim(format!(
            "train dimension {} vs test {}",
            train_pts.ncols(),
            test_pts.ncols()
        )));
    }
    let mut hits = 0usize;
    for (t, x) in test_pts.rows().into_iter().enumerate() {
        let mut best = (f64::INFINITY, 0usize);
        for (i, y) in train_pts.rows().into_iter().enumerate() {
            let d: f64 = x.iter().zip(y.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
            if d < best.0 {
                best = (d, i);
            }
        }
        if train_labels[best.1] == test_labels[t] {
            hits += 1;
        }
    }
    Ok(hits as f64 / test_pts.nrows() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockMassReport {
    /// Plan mass in source cluster `alpha` times target cluster `beta`.
    pub block_mass: Array2<f64>,
    pub off_association_fraction: f64,
    /// Largest coefficient of variation of entries within a nonnegligible block.
    pub within_block_cv: f64,
}

pub fn block_mass_report(plan: &Array2<f64>, cs: &ClusterStructure) -> Result<BlockMassReport> {
    let (m, n) = plan.dim();
    if m != cs.source_labels().len() || n != cs.target_labels().len() {
        return Err(SonError::dim(format!(
            "plan is {m}x{n} but labels cover {}x{}",
            cs.source_labels().len(),
            cs.target_labels().len()
        )));
    }
    let k = cs.k();
    let mut block_mass = Array2::<f64>::zeros((k, k));
    let mut block_sq = Array2::<f64>::zeros((k, k));
    for ((i, j), &x) in plan.indexed_iter() {
        let (a, b) = (cs.source_labels()[i], cs.target_labels()[j]);
        block_mass[[a, b]] += x;
        block_sq[[a, b]] += x * x;
    }
    let total: f64 = plan.sum();
    let pi = cs.association();
    let off: f64 = (0..k)
        .flat_map(|a| (0..k).map(move |b| (a, b)))
        .filter(|&(a, b)| b != pi[a])
        .map(|(a, b)| block_mass[[a, b]])
        .sum();
    let off_association_fraction = if total > 0.0 { off / total } else { 0.0 };
    let mut cv = 0.0f64;
    for a in 0..k {
        for b in 0..k {
            if block_mass[[a, b]] <= BLOCK_CV_MIN_FRACTION * total {
                continue;
            }
            let cells = (cs.source_sizes()[a] * cs.target_sizes()[b]) as f64;
            let mean = block_mass[[a, b]] / cells;
            let var = (block_sq[[a, b]] / cells - mean * mean).max(0.0);
            cv = cv.max(var.sqrt() / mean);
        }
    }
    Ok(BlockMassReport {
        block_mass,
        off_association_fraction,
        within_block_cv: cv,
    })
}

/// Plan mass per (source label, target label), sized by the largest label on
/// each side. Works when the two domains do not share a class set.
pub fn label_block_mass(plan: &Array2<f64>, source_labels: &[usize], target_labels: &[usize]) -> Result<Array2<f64>> {
    let (m, n) = plan.dim();
    if m != source_labels.len() || n != target_labels.len() {
        return Err(SonError::dim(format!(
            "plan is {m}x{n} but labels cover {}x{}",
            source_labels.len(),
            target_labels.len()
        )));
    }
    let ks = source_labels.iter().max().map_or(0, |v| v + 1);
    let kt = target_labels.iter().max().map_or(0, |v| v + 1);
    let mut out = Array2::zeros((ks, kt));
    for ((i, j), &x) in plan.indexed_iter() {
        out[[source_labels[i], target_labels[j]]] += x;
    }
    Ok(out)
}

/// Fraction of plan mass moved between points with different labels.
pub fn label_mismatch_fraction(plan: &Array2<f64>, source_labels: &[usize], target_labels: &[usize]) -> Result<f64> {
    let blocks = label_block_mass(plan, source_labels, target_labels)?;
    let total = blocks.sum();
    if total <= 0.0 {
        return Ok(0.0);
    }
    let matched: f64 = (0..blocks.nrows().min(blocks.ncols())).map(|a| blocks[[a, a]]).sum();
    Ok((total - matched).max(0.0) / total)
}
