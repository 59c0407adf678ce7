//! Solves of `(I - Λ A_N) x = r` and its transpose.

use nalgebra::{DMatrix, DVector};

use super::bits::BitMatrix;
use crate::error::{Error, Result};

/// Systems up to this size are factorised directly.
const DENSE_MAX: usize = 256;
/// Neumann iteration falls back to a dense factorisation up to this size.
const DENSE_FALLBACK_MAX: usize = 4000;
const NEUMANN_TOL: f64 = 1e-12;
const NEUMANN_MAX_ITER: usize = 20_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveMethod {
    DenseLu,
    Neumann,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub x: Vec<f64>,
    /// `‖(I - Λ A) x - r‖_∞`.
    pub residual: f64,
    pub method: SolveMethod,
}

fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn residual(m: &BitMatrix, lambda: f64, x: &[f64], rhs: &[f64]) -> f64 {
    let n = m.n();
    let mut ax = vec![0.0; n];
    m.matvec(x, lambda / n as f64, &mut ax);
    x.iter()
        .zip(&ax)
        .zip(rhs)
        .fold(0.0, |r, ((x, a), b)| r.max((x - a - b).abs()))
}

fn dense(m: &BitMatrix, lambda: f64, rhs: &[f64]) -> Result<Vec<f64>> {
    let n = m.n();
    let s = lambda / n as f64;
    let mat = DMatrix::from_fn(n, n, |i, j| {
        let a = if m.get(i, j) { s } else { 0.0 };
        if i == j {
            1.0 - a
        } else {
            -a
        }
    });
    let b = DVector::from_column_slice(rhs);
    mat.lu()
        .solve(&b)
        .map(|x| x.as_slice().to_vec())
        .ok_or_else(|| Error::DegenerateGraph("I - ΛA_N is singular".into()))
}

fn neumann(m: &BitMatrix, lambda: f64, rhs: &[f64]) -> Option<Vec<f64>> {
    let n = m.n();
    let s = lambda / n as f64;
    let mut x = rhs.to_vec();
    let mut next = vec![0.0; n];
    for _ in 0..NEUMANN_MAX_ITER {
        m.matvec(&x, s, &mut next);
        let mut diff: f64 = 0.0;
        for ((nx, r), old) in next.iter_mut().zip(rhs).zip(&x) {
            *nx += r;
            diff = diff.max((*nx - old).abs());
        }
        std::mem::swap(&mut x, &mut next);
        if diff <= NEUMANN_TOL * sup_norm(&x).max(1.0) {
            return Some(x);
        }
        if !diff.is_finite() {
            return None;
        }
    }
    None
}

/// Solves `(I - Λ A) x = rhs`, or the transposed system when `transposed`.
pub(crate) fn solve_resolvent(m: &BitMatrix, lambda: f64, rhs: &[f64], transposed: bool) -> Result<Solution> {
    let owned;
    let m = if transposed {
        owned = m.transpose();
        &owned
    } else {
        m
    };
    let n = m.n();
    let (x, method) = if n <= DENSE_MAX {
        (dense(m, lambda, rhs)?, SolveMethod::DenseLu)
    } else if let Some(x) = neumann(m, lambda, rhs) {
        (x, SolveMethod::Neumann)
    } else if n <= DENSE_FALLBACK_MAX {
        (dense(m, lambda, rhs)?, SolveMethod::DenseLu)
    } else {
        return Err(Error::DegenerateGraph("Neumann iteration did not converge".into()));
    };
    let residual = residual(m, lambda, &x, rhs);
    Ok(Solution { x, residual, method })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_bits(n: usize, density: u64, seed: u64) -> BitMatrix {
        let mut m = BitMatrix::zeros(n);
        let mut state = seed;
        for i in 0..n {
            for j in 0..n {
                state = crate::seeds::splitmix64(state);
                if state % 100 < density {
                    m.set(i, j, true);
                }
            }
        }
        m
    }

    #[test]
    fn dense_and_neumann_agree() {
        let m = random_bits(300, 50, 5);
        let rhs: Vec<f64> = (0..300).map(|i| 1.0 + (i % 3) as f64).collect();
        let a = dense(&m, 1.0, &rhs).unwrap();
        let b = neumann(&m, 1.0, &rhs).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-10);
        }
        let s = solve_resolvent(&m, 1.0, &rhs, false).unwrap();
        assert_eq!(s.method, SolveMethod::Neumann);
        assert!(s.residual <= 1e-10);
    }

    #[test]
    fn transposed_solve() {
        let m = random_bits(40, 40, 11);
        let rhs: Vec<f64> = (0..40).map(|i| if i < 20 { 1.0 } else { 0.0 }).collect();
        let s = solve_resolvent(&m, 1.2, &rhs, true).unwrap();
        // check (I - ΛA)^T c = rhs entry by entry
        for j in 0..40 {
            let mut v = s.x[j];
            for i in 0..40 {
                if m.get(i, j) {
                    v -= 1.2 / 40.0 * s.x[i];
                }
            }
            assert!((v - rhs[j]).abs() < 1e-12);
        }
    }
}
