//! Finite-sum decomposition of the SON objective.
//!
//! The objective splits into `P = m(m-1) + n(n-1)` template terms, one per
//! ordered pair of distinct rows or columns, and `Q = m + n` cylinder-simplex
//! constraints. Each pair term carries a share of the linear cost: a row `l`
//! appears in `2(m-1)` ordered row pairs, so with divisor `4(m-1)` the row
//! terms together contribute exactly `<D,X>/2`, and the column terms the other
//! half. When one side has a single point (no pairs), the other side carries
//! the whole linear cost with divisor `2(d-1)`.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SonError};
use crate::problem::ProblemSpec;
use crate::prox::{template_value, PairPoint};

/// One summand or constraint of the decomposed problem.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TermIndex {
    RowPair(usize, usize),
    ColPair(usize, usize),
    RowSimplex(usize),
    ColSimplex(usize),
}

impl TermIndex {
    pub fn is_pair(&self) -> bool {
        matches!(self, TermIndex::RowPair(..) | TermIndex::ColPair(..))
    }
}

/// Number of pair terms `m(m-1) + n(n-1)`.
pub fn pair_count(m: usize, n: usize) -> usize {
    m * m.saturating_sub(1) + n * n.saturating_sub(1)
}

/// Number of constraint terms `m + n`.
pub fn constraint_count(m: usize, n: usize) -> usize {
    m + n
}

/// Maps a flat index in `0..P+Q` to its term, in `enumerate_terms` order.
pub fn term_at(m: usize, n: usize, idx: usize) -> TermIndex {
    let rp = m * m.saturating_sub(1);
    let cp = n * n.saturating_sub(1);
    if idx < rp {
        let (l, r) = (idx / (m - 1), idx % (m - 1));
        TermIndex::RowPair(l, if r >= l { r + 1 } else { r })
    } else if idx < rp + cp {
        let idx = idx - rp;
        let (l, r) = (idx / (n - 1), idx % (n - 1));
        TermIndex::ColPair(l, if r >= l { r + 1 } else { r })
    } else if idx < rp + cp + m {
        TermIndex::RowSimplex(idx - rp - cp)
    } else {
        TermIndex::ColSimplex(idx - rp - cp - m)
    }
}

/// All row pairs, then column pairs, then row and column simplices.
pub fn enumerate_terms(m: usize, n: usize) -> Vec<TermIndex> {
    (0..pair_count(m, n) + constraint_count(m, n))
        .map(|i| term_at(m, n, i))
        .collect()
}

/// Which slices of `X` a pair term reads.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PairSupport {
    Rows(usize, usize),
    Cols(usize, usize),
}

/// Template coefficients of one pair term.
#[derive(Clone, Debug, PartialEq)]
pub struct TermParams {
    pub rho: f64,
    pub zeta: Vec<f64>,
    pub eta: Vec<f64>,
    pub support: PairSupport,
}

/// Divisors `(row, col)` applied to cost rows/columns in pair terms.
/// Zero means that side has no pair terms.
pub fn linear_divisors(m: usize, n: usize) -> (f64, f64) {
    let row = if m < 2 {
        0.0
    } else if n < 2 {
        2.0 * (m - 1) as f64
    } else {
        4.0 * (m - 1) as f64
    };
    let col = if n < 2 {
        0.0
    } else if m < 2 {
        2.0 * (n - 1) as f64
    } else {
        4.0 * (n - 1) as f64
    };
    (row, col)
}

pub fn term_parameters(spec: &ProblemSpec, t: TermIndex) -> Result<TermParams> {
    let (m, n) = (spec.m(), spec.n());
    let (row_div, col_div) = linear_divisors(m, n);
    match t {
        TermIndex::RowPair(l, k) => {
            if l >= m || k >= m || l == k {
                return Err(SonError::invalid(format!("invalid row pair ({l},{k}) for m = {m}")));
            }
            Ok(TermParams {
                rho: spec.lambda * spec.kernels.rows()[[l, k]],
                zeta: spec.cost.row(l).iter().map(|d| d / row_div).collect(),
                eta: spec.cost.row(k).iter().map(|d| d / row_div).collect(),
                support: PairSupport::Rows(l, k),
            })
        }
        TermIndex::ColPair(l, k) => {
            if l >= n || k >= n || l == k {
                return Err(SonError::invalid(format!("invalid column pair ({l},{k}) for n = {n}")));
            }
            Ok(TermParams {
                rho: spec.lambda * spec.kernels.cols()[[l, k]],
                zeta: spec.cost.col(l).iter().map(|d| d / col_div).collect(),
                eta: spec.cost.col(k).iter().map(|d| d / col_div).collect(),
                support: PairSupport::Cols(l, k),
            })
        }
        other => Err(SonError::invalid(format!(
            "{other:?} is a constraint term and has no template parameters"
        ))),
    }
}

/// Sum of template values over every pair term, evaluated at `plan`.
pub fn decomposed_objective(spec: &ProblemSpec, plan: &Array2<f64>) -> Result<f64> {
    let (m, n) = (spec.m(), spec.n());
    if plan.dim() != (m, n) {
        return Err(SonError::dim(format!("plan is {:?}, problem is {m}x{n}", plan.dim())));
    }
    let mut total = 0.0;
    for t in enumerate_terms(m, n).into_iter().filter(TermIndex::is_pair) {
        let params = term_parameters(spec, t)?;
        let pt = match params.support {
            PairSupport::Rows(l, k) => PairPoint::new(plan.row(l).to_vec(), plan.row(k).to_vec())?,
            PairSupport::Cols(l, k) => {
                PairPoint::new(plan.column(l).to_vec(), plan.column(k).to_vec())?
            }
        };
        total += template_value(params.rho, &params.zeta, &params.eta, &pt)?;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{CostMatrix, KernelWeights, Marginals};

    #[test]
    fn counts() {
        assert_eq!(enumerate_terms(2, 2).len(), 8);
        let t = enumerate_terms(1, 3);
        assert_eq!((pair_count(1, 3), constraint_count(1, 3), t.len()), (6, 4, 10));
        assert_eq!((pair_count(3, 2), constraint_count(3, 2)), (8, 5));
    }

    #[test]
    fn order_and_uniqueness() {
        let terms = enumerate_terms(3, 2);
        assert_eq!(terms[0], TermIndex::RowPair(0, 1));
        assert_eq!(terms[1], TermIndex::RowPair(0, 2));
        assert_eq!(terms[2], TermIndex::RowPair(1, 0));
        assert_eq!(terms[6], TermIndex::ColPair(0, 1));
        assert_eq!(terms[7], TermIndex::ColPair(1, 0));
        assert_eq!(terms[8], TermIndex::RowSimplex(0));
        assert_eq!(terms[12], TermIndex::ColSimplex(1));
        let set: std::collections::HashSet<_> = terms.iter().collect();
        assert_eq!(set.len(), terms.len());
    }

    fn spec(m: usize, n: usize, lambda: f64) -> ProblemSpec {
        let cost = CostMatrix::new(Array2::from_shape_fn((m, n), |(i, j)| (i * n + j) as f64 + 1.0)).unwrap();
        ProblemSpec::new(
            cost,
            Marginals::uniform(m, n).unwrap(),
            KernelWeights::constant(m, n, 1.0, 0.0).unwrap(),
            lambda,
            None,
        )
        .unwrap()
    }

    #[test]
    fn row_divisor_for_two_rows() {
        let s = spec(2, 2, 1.0);
        let p = term_parameters(&s, TermIndex::RowPair(0, 1)).unwrap();
        assert_eq!(p.zeta, vec![1.0 / 4.0, 2.0 / 4.0]);
        assert_eq!(p.rho, 1.0);
        let c = term_parameters(&s, TermIndex::ColPair(0, 1)).unwrap();
        assert_eq!(c.rho, 0.0);
        assert!(term_parameters(&s, TermIndex::RowSimplex(0)).is_err());
    }

    #[test]
    fn linear_parts_sum_to_cost_all_ones() {
        let cost = CostMatrix::new(Array2::ones((3, 3))).unwrap();
        let s = ProblemSpec::new(cost, Marginals::uniform(3, 3).unwrap(), KernelWeights::zeros(3, 3), 0.0, None)
            .unwrap();
        let x = Array2::from_shape_fn((3, 3), |(i, j)| ((i * 7 + j * 3) % 5) as f64 * 0.1);
        let v = decomposed_objective(&s, &x).unwrap();
        assert!((v - x.sum()).abs() < 1e-12);
    }

    #[test]
    fn degenerate_sides_keep_identity() {
        for (m, n) in [(1, 4), (4, 1), (2, 1)] {
            let s = spec(m, n, 0.3);
            let x = Array2::from_shape_fn((m, n), |(i, j)| 0.05 * (i + 2 * j) as f64);
            let a = decomposed_objective(&s, &x).unwrap();
            let b = s.full_objective(x.view()).unwrap();
            assert!((a - b).abs() < 1e-12, "{m}x{n}: {a} vs {b}");
        }
    }
}
