//! Template function `phi(p, q) = <p, zeta> + <q, eta> + rho ||p - q||` and
//! its closed-form proximal operator.
//!
//! With `u = (x + y)/2` and `v = (x - y)/2` the prox problem separates: `u`
//! is the midpoint of the shifted inputs and `v` is a block soft-threshold of
//! their half-difference.

use crate::error::{Result, SonError};

/// Argument pair `(p, q)` of the template function.
#[derive(Clone, Debug, PartialEq)]
pub struct PairPoint {
    pub p: Vec<f64>,
    pub q: Vec<f64>,
}

impl PairPoint {
    pub fn new(p: Vec<f64>, q: Vec<f64>) -> Result<Self> {
        if p.len() != q.len() {
            return Err(SonError::dim(format!("pair point halves have lengths {} and {}", p.len(), q.len())));
        }
        Ok(Self { p, q })
    }

    pub fn dim(&self) -> usize {
        self.p.len()
    }

    /// `p` followed by `q`.
    pub fn concat(&self) -> Vec<f64> {
        let mut v = self.p.clone();
        v.extend_from_slice(&self.q);
        v
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn check_len(expected: usize, got: usize, what: &str) -> Result<()> {
    if expected != got {
        return Err(SonError::dim(format!("{what} has length {got}, expected {expected}")));
    }
    Ok(())
}

pub fn template_value(rho: f64, zeta: &[f64], eta: &[f64], pt: &PairPoint) -> Result<f64> {
    check_len(pt.dim(), zeta.len(), "zeta")?;
    check_len(pt.dim(), eta.len(), "eta")?;
    check_len(pt.p.len(), pt.q.len(), "q")?;
    let diff: f64 = pt
        .p
        .iter()
        .zip(&pt.q)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    Ok(dot(&pt.p, zeta) + dot(&pt.q, eta) + rho * diff)
}

/// Block soft-thresholding: the prox of `lambda ||.||_2`.
pub fn shrink(lambda: f64, c: &[f64]) -> Vec<f64> {
    let mut out = c.to_vec();
    shrink_in_place(lambda, &mut out);
    out
}

pub(crate) fn shrink_in_place(lambda: f64, c: &mut [f64]) {
    let nrm = norm(c);
    if nrm == 0.0 || nrm <= lambda {
        c.iter_mut().for_each(|x| *x = 0.0);
        return;
    }
    let factor = (nrm - lambda) / nrm;
    c.iter_mut().for_each(|x| *x *= factor);
}

/// Prox of `lambda ||x - y||` at `(a, b)`.
pub fn pair_prox(lambda: f64, a: &[f64], b: &[f64]) -> Result<PairPoint> {
    check_len(a.len(), b.len(), "b")?;
    let mut x = a.to_vec();
    let mut y = b.to_vec();
    let mut scratch = vec![0.0; a.len()];
    pair_prox_in_place(lambda, &mut x, &mut y, &mut scratch);
    Ok(PairPoint { p: x, q: y })
}

/// In-place `pair_prox`; `scratch` must have the same length as `a`.
pub(crate) fn pair_prox_in_place(lambda: f64, a: &mut [f64], b: &mut [f64], scratch: &mut [f64]) {
    for ((s, x), y) in scratch.iter_mut().zip(a.iter()).zip(b.iter()) {
        *s = 0.5 * (x - y);
    }
    shrink_in_place(lambda, scratch);
    for ((s, x), y) in scratch.iter().zip(a.iter_mut()).zip(b.iter_mut()) {
        let mid = 0.5 * (*x + *y);
        *x = mid + s;
        *y = mid - s;
    }
}

/// `argmin_{x,y} (||x-p||^2 + ||y-q||^2)/(2 step) + phi(x, y)`.
pub fn template_prox(step: f64, rho: f64, zeta: &[f64], eta: &[f64], pt: &PairPoint) -> Result<PairPoint> {
    if !(step > 0.0) {
        return Err(SonError::invalid(format!("prox step must be > 0, got {step}")));
    }
    check_len(pt.dim(), zeta.len(), "zeta")?;
    check_len(pt.dim(), eta.len(), "eta")?;
    check_len(pt.p.len(), pt.q.len(), "q")?;
    let a: Vec<f64> = pt.p.iter().zip(zeta).map(|(p, z)| p - step * z).collect();
    let b: Vec<f64> = pt.q.iter().zip(eta).map(|(q, e)| q - step * e).collect();
    pair_prox(step * rho, &a, &b)
}
