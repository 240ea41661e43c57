//! Euclidean projection onto scaled simplices and cylinder-simplices.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SonError};

/// Which slice of the grid a cylinder constraint fixes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Axis {
    Row(usize),
    Col(usize),
}

/// `{x >= 0, sum x = mass}` in `dim` coordinates, optionally tied to a grid slice.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightedSimplex {
    pub dim: usize,
    pub mass: f64,
    pub axis: Axis,
}

impl WeightedSimplex {
    pub fn new(dim: usize, mass: f64, axis: Axis) -> Result<Self> {
        if dim == 0 {
            return Err(SonError::dim("simplex dimension must be >= 1"));
        }
        check_mass(mass)?;
        Ok(Self { dim, mass, axis })
    }
}

fn check_mass(mass: f64) -> Result<()> {
    if !(mass > 0.0) || !mass.is_finite() {
        return Err(SonError::invalid(format!("simplex mass must be finite and > 0, got {mass}")));
    }
    Ok(())
}

/// `argmin_{x >= 0, sum x = mass} ||x - v||` by sort-and-threshold.
pub fn project_simplex(v: &[f64], mass: f64) -> Result<Vec<f64>> {
    let mut out = v.to_vec();
    let mut scratch = Vec::with_capacity(v.len());
    project_simplex_in_place(&mut out, mass, &mut scratch)?;
    Ok(out)
}

/// In-place projection; `scratch` is reused across calls to avoid allocation.
pub(crate) fn project_simplex_in_place(v: &mut [f64], mass: f64, scratch: &mut Vec<(f64, usize)>) -> Result<()> {
    check_mass(mass)?;
    if v.is_empty() {
        return Err(SonError::dim("cannot project an empty vector"));
    }
    if let Some((i, x)) = v.iter().enumerate().find(|(_, x)| !x.is_finite()) {
        return Err(SonError::invalid(format!("non-finite entry v[{i}] = {x}")));
    }
    let tau = threshold(v, mass, scratch);
    v.iter_mut().for_each(|x| *x = (*x - tau).max(0.0));
    // cancellation in `x - tau` can leave an absolute error relative to max|v|
    let total: f64 = v.iter().sum();
    if total > 0.0 && total != mass {
        let scale = mass / total;
        v.iter_mut().for_each(|x| *x *= scale);
    }
    Ok(())
}

fn threshold(v: &[f64], mass: f64, sorted: &mut Vec<(f64, usize)>) -> f64 {
    sorted.clear();
    sorted.extend(v.iter().cloned().zip(0..));
    // descending by value, ties by index
    sorted.sort_unstable_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut cumsum = 0.0;
    let mut tau = 0.0;
    for (k, &(u, _)) in sorted.iter().enumerate() {
        cumsum += u;
        let t = (cumsum - mass) / (k + 1) as f64;
        if u - t > 0.0 {
            tau = t;
        } else {
            break;
        }
    }
    tau
}

/// Projects one row or column of `grid` onto the constraint's simplex.
/// Returns the coordinates whose value changed.
pub fn project_cylinder(grid: &mut Array2<f64>, c: &WeightedSimplex) -> Result<Vec<(usize, usize)>> {
    let (m, n) = grid.dim();
    let mut scratch = Vec::new();
    let mut changed = Vec::new();
    match c.axis {
        Axis::Row(l) => {
            if l >= m {
                return Err(SonError::invalid(format!("row {l} out of range for {m} rows")));
            }
            if c.dim != n {
                return Err(SonError::dim(format!("constraint dim {} but row length {n}", c.dim)));
            }
            let mut row = grid.row(l).to_vec();
            project_simplex_in_place(&mut row, c.mass, &mut scratch)?;
            for (j, v) in row.into_iter().enumerate() {
                if grid[[l, j]] != v {
                    grid[[l, j]] = v;
                    changed.push((l, j));
                }
            }
        }
        Axis::Col(k) => {
            if k >= n {
                return Err(SonError::invalid(format!("column {k} out of range for {n} columns")));
            }
            if c.dim != m {
                return Err(SonError::dim(format!("constraint dim {} but column length {m}", c.dim)));
            }
            let mut col = grid.column(k).to_vec();
            project_simplex_in_place(&mut col, c.mass, &mut scratch)?;
            for (i, v) in col.into_iter().enumerate() {
                if grid[[i, k]] != v {
                    grid[[i, k]] = v;
                    changed.push((i, k));
                }
            }
        }
    }
    Ok(changed)
}
