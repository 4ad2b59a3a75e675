//! Matrix-free preconditioned conjugate gradients.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct CgOptions {
    /// Relative residual target ‖b − Ax‖/‖b‖.
    pub tol: f64,
    pub max_iter: usize,
    /// Remove the mean of the iterates: for singular systems whose kernel
    /// is the constants (graph Laplacians of connected graphs).
    pub project_mean: bool,
}

impl Default for CgOptions {
    fn default() -> Self {
        CgOptions {
            tol: 1e-10,
            max_iter: 100_000,
            project_mean: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CgSolution {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
    /// Relative residual after every iteration.
    pub history: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn remove_mean(v: &mut [f64]) {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    v.iter_mut().for_each(|x| *x -= mean);
}

/// Solves `A x = b` for a symmetric positive (semi-)definite `A` given as
/// `apply(x, out)`, with the Jacobi preconditioner `diag`.
pub fn conjugate_gradient<F>(apply: F, b: &[f64], diag: &[f64], opts: CgOptions) -> Result<CgSolution>
where
    F: FnMut(&[f64], &mut [f64]),
{
    conjugate_gradient_from(apply, b, diag, None, opts)
}

/// As [`conjugate_gradient`], starting from `x0` instead of zero.
pub fn conjugate_gradient_from<F>(
    mut apply: F,
    b: &[f64],
    diag: &[f64],
    x0: Option<&[f64]>,
    opts: CgOptions,
) -> Result<CgSolution>
where
    F: FnMut(&[f64], &mut [f64]),
{
    let n = b.len();
    let mut rhs = b.to_vec();
    if opts.project_mean {
        remove_mean(&mut rhs);
    }
    let bnorm = dot(&rhs, &rhs).sqrt();
    if bnorm == 0.0 {
        return Ok(CgSolution {
            x: vec![0.0; n],
            iterations: 0,
            residual: 0.0,
            history: Vec::new(),
        });
    }
    let inv: Vec<f64> = diag.iter().map(|&v| if v > 0.0 { 1.0 / v } else { 1.0 }).collect();
    let mut x = x0.map_or_else(|| vec![0.0; n], |v| v.to_vec());
    let mut r = rhs;
    if x0.is_some() {
        let mut ax = vec![0.0; n];
        apply(&x, &mut ax);
        r.iter_mut().zip(&ax).for_each(|(ri, a)| *ri -= a);
        if opts.project_mean {
            remove_mean(&mut r);
        }
        if dot(&r, &r).sqrt() <= opts.tol * bnorm {
            return Ok(CgSolution {
                residual: dot(&r, &r).sqrt() / bnorm,
                x,
                iterations: 0,
                history: Vec::new(),
            });
        }
    }
    let mut z: Vec<f64> = r.iter().zip(&inv).map(|(a, b)| a * b).collect();
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz = dot(&r, &z);
    let mut history = Vec::new();
    for it in 1..=opts.max_iter {
        apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(Error::Solver {
                iterations: it,
                residual: history.last().copied().unwrap_or(1.0),
                history,
            });
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        if opts.project_mean {
            remove_mean(&mut r);
        }
        let rel = dot(&r, &r).sqrt() / bnorm;
        history.push(rel);
        if rel <= opts.tol {
            // Confirm against the true residual; recurrences drift.
            apply(&x, &mut ap);
            let mut true_r: Vec<f64> = b.iter().zip(&ap).map(|(b, a)| b - a).collect();
            if opts.project_mean {
                remove_mean(&mut true_r);
                remove_mean(&mut x);
            }
            let true_rel = dot(&true_r, &true_r).sqrt() / bnorm;
            if true_rel <= opts.tol {
                return Ok(CgSolution {
                    x,
                    iterations: it,
                    residual: true_rel,
                    history,
                });
            }
            // Restart from the true residual.
            r = true_r;
            for i in 0..n {
                p[i] = r[i] * inv[i];
            }
            rz = dot(&r, &p);
            continue;
        }
        for i in 0..n {
            z[i] = r[i] * inv[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::Solver {
        iterations: opts.max_iter,
        residual: history.last().copied().unwrap_or(1.0),
        history,
    })
}
