//! Jacobi-preconditioned Krylov solvers.

use thiserror::Error;

use super::sparse::CsrMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// CG for matrices flagged symmetric, BiCGStab otherwise.
    Auto,
    Cg,
    BiCgStab,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Relative residual target `‖Ax − b‖ / ‖b‖`.
    pub tol: f64,
    pub max_iter: usize,
    pub method: Method,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { tol: 1e-12, max_iter: 20_000, method: Method::Auto }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveStats {
    pub method: Method,
    pub iterations: usize,
    pub relative_residual: f64,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("{method:?} did not reach the tolerance in {iterations} iterations (last residual {last:e})")]
    Diverged { method: Method, iterations: usize, last: f64, history: Vec<f64> },
    #[error("{method:?} broke down after {iterations} iterations")]
    Breakdown { method: Method, iterations: usize, history: Vec<f64> },
    #[error("dimension mismatch: matrix {rows}x{cols}, vector {len}")]
    DimensionMismatch { rows: usize, cols: usize, len: usize },
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Solves `A x = b` starting from `x0` (zero if absent).
pub fn solve_linear(
    a: &CsrMatrix,
    b: &[f64],
    x0: Option<&[f64]>,
    opts: &SolverOptions,
) -> Result<(Vec<f64>, SolveStats), SolverError> {
    let n = a.n_rows;
    if a.n_cols != n || b.len() != n || x0.is_some_and(|x| x.len() != n) {
        return Err(SolverError::DimensionMismatch { rows: a.n_rows, cols: a.n_cols, len: b.len() });
    }
    let method = match opts.method {
        Method::Auto if a.symmetric => Method::Cg,
        Method::Auto => Method::BiCgStab,
        m => m,
    };
    let mut x = x0.map_or_else(|| vec![0.0; n], |x| x.to_vec());
    let nb = norm(b);
    if nb == 0.0 {
        return Ok((vec![0.0; n], SolveStats { method, iterations: 0, relative_residual: 0.0 }));
    }
    let inv_diag: Vec<f64> = a.diagonal().iter().map(|&d| if d != 0.0 { 1.0 / d } else { 1.0 }).collect();
    let mut r = a.mul_vec(&x);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    let mut history = vec![norm(&r) / nb];
    let done = |h: &[f64]| *h.last().unwrap() <= opts.tol;
    if done(&history) {
        return Ok((x, SolveStats { method, iterations: 0, relative_residual: history[0] }));
    }
    let mut ap = vec![0.0; n];
    match method {
        Method::Cg | Method::Auto => {
            let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(r, d)| r * d).collect();
            let mut p = z.clone();
            let mut rz = dot(&r, &z);
            for it in 1..=opts.max_iter {
                a.mul_vec_into(&p, &mut ap);
                let pap = dot(&p, &ap);
                if pap == 0.0 || !pap.is_finite() {
                    return Err(SolverError::Breakdown { method, iterations: it, history });
                }
                let alpha = rz / pap;
                for i in 0..n {
                    x[i] += alpha * p[i];
                    r[i] -= alpha * ap[i];
                }
                history.push(norm(&r) / nb);
                if done(&history) {
                    let rel = *history.last().unwrap();
                    return Ok((x, SolveStats { method, iterations: it, relative_residual: rel }));
                }
                for i in 0..n {
                    z[i] = r[i] * inv_diag[i];
                }
                let rz_new = dot(&r, &z);
                let beta = rz_new / rz;
                rz = rz_new;
                for i in 0..n {
                    p[i] = z[i] + beta * p[i];
                }
            }
        }
        Method::BiCgStab => {
            let r_hat = r.clone();
            let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
            let mut v = vec![0.0; n];
            let mut p = vec![0.0; n];
            let mut ph = vec![0.0; n];
            let mut s = vec![0.0; n];
            let mut sh = vec![0.0; n];
            let mut t = vec![0.0; n];
            for it in 1..=opts.max_iter {
                let rho_new = dot(&r_hat, &r);
                if rho_new == 0.0 || !rho_new.is_finite() || omega == 0.0 {
                    return Err(SolverError::Breakdown { method, iterations: it, history });
                }
                let beta = (rho_new / rho) * (alpha / omega);
                rho = rho_new;
                for i in 0..n {
                    p[i] = r[i] + beta * (p[i] - omega * v[i]);
                    ph[i] = p[i] * inv_diag[i];
                }
                a.mul_vec_into(&ph, &mut v);
                let rv = dot(&r_hat, &v);
                if rv == 0.0 {
                    return Err(SolverError::Breakdown { method, iterations: it, history });
                }
                alpha = rho / rv;
                for i in 0..n {
                    s[i] = r[i] - alpha * v[i];
                }
                if norm(&s) / nb <= opts.tol {
                    for i in 0..n {
                        x[i] += alpha * ph[i];
                    }
                    history.push(norm(&s) / nb);
                    let rel = *history.last().unwrap();
                    return Ok((x, SolveStats { method, iterations: it, relative_residual: rel }));
                }
                for i in 0..n {
                    sh[i] = s[i] * inv_diag[i];
                }
                a.mul_vec_into(&sh, &mut t);
                let tt = dot(&t, &t);
                omega = if tt > 0.0 { dot(&t, &s) / tt } else { 0.0 };
                for i in 0..n {
                    x[i] += alpha * ph[i] + omega * sh[i];
                    r[i] = s[i] - omega * t[i];
                }
                history.push(norm(&r) / nb);
                if done(&history) {
                    // guard against drift of the recursive residual
                    let mut rt = a.mul_vec(&x);
                    for i in 0..n {
                        rt[i] = b[i] - rt[i];
                    }
                    let rel = norm(&rt) / nb;
                    if rel <= opts.tol {
                        return Ok((x, SolveStats { method, iterations: it, relative_residual: rel }));
                    }
                    r = rt;
                }
            }
        }
    }
    let last = *history.last().unwrap();
    Err(SolverError::Diverged { method, iterations: opts.max_iter, last, history })
}
