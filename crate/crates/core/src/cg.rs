//! Preconditioned conjugate gradient under a caller-supplied inner product.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgOptions {
    /// Stop when `‖b − A x‖ ≤ tol ‖b‖`.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for CgOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 500,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CgOutcome {
    pub solution: Vec<f64>,
    pub iterations: usize,
    /// Relative residual after each iteration, starting with the initial guess.
    pub history: Vec<f64>,
}

fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// Solves `A x = b` for `A` self-adjoint and positive definite under `inner`.
///
/// The recursive residual is confirmed against a freshly computed one before
/// returning; on disagreement the iteration restarts from the current iterate.
pub fn conjugate_gradient<A, I, P>(
    mut apply: A,
    rhs: &[f64],
    inner: I,
    precondition: Option<P>,
    options: CgOptions,
) -> Result<CgOutcome>
where
    A: FnMut(&[f64]) -> Result<Vec<f64>>,
    I: Fn(&[f64], &[f64]) -> f64,
    P: Fn(&[f64]) -> Vec<f64>,
{
    let n = rhs.len();
    let b_norm = inner(rhs, rhs).sqrt();
    if b_norm == 0.0 {
        return Ok(CgOutcome {
            solution: vec![0.0; n],
            iterations: 0,
            history: vec![0.0],
        });
    }
    let precond = |r: &[f64]| -> Vec<f64> {
        match &precondition {
            Some(p) => p(r),
            None => r.to_vec(),
        }
    };
    let mut x = vec![0.0; n];
    let mut r = rhs.to_vec();
    let mut history = vec![1.0];
    let mut best = (1.0, x.clone());
    let mut iterations = 0;
    while iterations < options.max_iter {
        let cycle_start = iterations;
        let mut z = precond(&r);
        let mut p = z.clone();
        let mut rz = inner(&r, &z);
        let mut restart = false;
        while iterations < options.max_iter {
            let ap = apply(&p)?;
            let pap = inner(&p, &ap);
            if !(pap > 0.0) {
                restart = true;
                break;
            }
            let alpha = rz / pap;
            axpy(&mut x, alpha, &p);
            axpy(&mut r, -alpha, &ap);
            iterations += 1;
            let rel = inner(&r, &r).sqrt() / b_norm;
            history.push(rel);
            if rel < best.0 {
                best = (rel, x.clone());
            }
            if rel <= options.tol {
                restart = true;
                break;
            }
            z = precond(&r);
            let rz_new = inner(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for (pi, zi) in p.iter_mut().zip(&z) {
                *pi = zi + beta * *pi;
            }
        }
        if !restart || iterations == cycle_start {
            break;
        }
        let ax = apply(&x)?;
        r = rhs.iter().zip(&ax).map(|(b, a)| b - a).collect();
        let true_rel = inner(&r, &r).sqrt() / b_norm;
        if true_rel <= options.tol {
            if let Some(last) = history.last_mut() {
                *last = true_rel;
            }
            return Ok(CgOutcome {
                solution: x,
                iterations,
                history,
            });
        }
        if true_rel < best.0 {
            best = (true_rel, x.clone());
        }
    }
    Err(Error::CgStagnation {
        iterations,
        relative_residual: best.0,
        best_iterate: best.1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dot(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }

    fn spd(n: usize) -> Vec<Vec<f64>> {
        (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| 1.0 / (1.0 + i as f64 + j as f64) + if i == j { 1.0 } else { 0.0 })
                    .collect()
            })
            .collect()
    }

    #[test]
    fn solves_small_spd_system() {
        let a = spd(6);
        let x_true: Vec<f64> = (0..6).map(|i| i as f64 - 2.5).collect();
        let b: Vec<f64> = a.iter().map(|row| dot(row, &x_true)).collect();
        let out = conjugate_gradient(
            |v: &[f64]| Ok(a.iter().map(|row| dot(row, v)).collect()),
            &b,
            dot,
            None::<fn(&[f64]) -> Vec<f64>>,
            CgOptions {
                tol: 1e-12,
                max_iter: 100,
            },
        )
        .unwrap();
        for (x, t) in out.solution.iter().zip(&x_true) {
            assert!((x - t).abs() < 1e-10);
        }
        assert!(*out.history.last().unwrap() <= 1e-12);
    }

    #[test]
    fn zero_rhs_gives_zero() {
        let out = conjugate_gradient(
            |v: &[f64]| Ok(v.to_vec()),
            &[0.0; 3],
            dot,
            None::<fn(&[f64]) -> Vec<f64>>,
            CgOptions::default(),
        )
        .unwrap();
        assert_eq!(out.solution, vec![0.0; 3]);
        assert_eq!(out.iterations, 0);
    }

    #[test]
    fn stagnation_reports_best_iterate() {
        let a = spd(8);
        let b = vec![1.0; 8];
        let err = conjugate_gradient(
            |v: &[f64]| Ok(a.iter().map(|row| dot(row, v)).collect()),
            &b,
            dot,
            None::<fn(&[f64]) -> Vec<f64>>,
            CgOptions {
                tol: 1e-14,
                max_iter: 1,
            },
        )
        .unwrap_err();
        match err {
            Error::CgStagnation {
                iterations,
                best_iterate,
                relative_residual,
            } => {
                assert_eq!(iterations, 1);
                assert_eq!(best_iterate.len(), 8);
                assert!(relative_residual < 1.0);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn diagonal_preconditioner() {
        let n = 5;
        let diag: Vec<f64> = (0..n).map(|i| 10f64.powi(i as i32)).collect();
        let b = vec![1.0; n];
        let out = conjugate_gradient(
            |v: &[f64]| Ok(v.iter().zip(&diag).map(|(x, d)| x * d).collect()),
            &b,
            dot,
            Some(|r: &[f64]| {
                r.iter()
                    .zip(&diag)
                    .map(|(x, d)| x / d)
                    .collect::<Vec<f64>>()
            }),
            CgOptions::default(),
        )
        .unwrap();
        assert!(out.iterations <= 2);
    }
}
