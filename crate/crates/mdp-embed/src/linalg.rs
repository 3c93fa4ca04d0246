//! Shared linear-solve kernel for first-passage systems.
//!
//! Both the finite-chain analysis and the excursion truncations reduce to
//! `(I − Q) X = B` with `Q` a substochastic nonnegative matrix. Systems up to
//! [`DENSE_LIMIT`] unknowns go through dense LU; larger ones fall back to
//! Gauss–Seidel sweeps down to a 1e-12 residual.

use nalgebra::DMatrix;
use thiserror::Error;

pub(crate) const DENSE_LIMIT: usize = 2000;
const GS_TOL: f64 = 1e-12;
const GS_MAX_SWEEPS: usize = 500_000;

#[derive(Debug, Error)]
pub enum LinalgError {
    #[error("linear system is singular or badly conditioned")]
    Singular,
    #[error("iterative solve stalled at residual {residual:.3e} (target {target:.3e})")]
    NoConvergence { target: f64, residual: f64 },
}

/// Solve `(I − Q) X = B` where `Q` is given as sparse rows over `0..n` and
/// `B` as a list of dense columns. Returns the solution columns.
pub(crate) fn transient_solve(
    rows: &[Vec<(usize, f64)>],
    rhs: &[Vec<f64>],
) -> Result<Vec<Vec<f64>>, LinalgError> {
    let n = rows.len();
    if n == 0 {
        return Ok(rhs.iter().map(|_| Vec::new()).collect());
    }
    for col in rhs {
        assert_eq!(col.len(), n, "rhs column length mismatch");
    }
    if n <= DENSE_LIMIT {
        dense_transient(rows, rhs)
    } else {
        gauss_seidel(rows, rhs)
    }
}

fn dense_transient(
    rows: &[Vec<(usize, f64)>],
    rhs: &[Vec<f64>],
) -> Result<Vec<Vec<f64>>, LinalgError> {
    let n = rows.len();
    let mut a = DMatrix::<f64>::identity(n, n);
    for (i, row) in rows.iter().enumerate() {
        for &(j, p) in row {
            a[(i, j)] -= p;
        }
    }
    let mut b = DMatrix::<f64>::zeros(n, rhs.len());
    for (k, col) in rhs.iter().enumerate() {
        for (i, v) in col.iter().enumerate() {
            b[(i, k)] = *v;
        }
    }
    let lu = a.lu();
    let x = lu.solve(&b).ok_or(LinalgError::Singular)?;
    Ok((0..rhs.len())
        .map(|k| (0..n).map(|i| x[(i, k)]).collect())
        .collect())
}

fn gauss_seidel(
    rows: &[Vec<(usize, f64)>],
    rhs: &[Vec<f64>],
) -> Result<Vec<Vec<f64>>, LinalgError> {
    let n = rows.len();
    let mut out = Vec::with_capacity(rhs.len());
    for col in rhs {
        let scale = 1.0 + col.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut x = vec![0.0; n];
        let mut last_residual = f64::INFINITY;
        let mut converged = false;
        for _ in 0..GS_MAX_SWEEPS {
            let mut delta = 0.0f64;
            for i in 0..n {
                let mut acc = col[i];
                let mut diag = 1.0;
                for &(j, p) in &rows[i] {
                    if j == i {
                        diag -= p;
                    } else {
                        acc += p * x[j];
                    }
                }
                if diag.abs() < 1e-300 {
                    return Err(LinalgError::Singular);
                }
                let next = acc / diag;
                delta = delta.max((next - x[i]).abs());
                x[i] = next;
            }
            last_residual = delta;
            if delta <= GS_TOL * scale {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(LinalgError::NoConvergence {
                target: GS_TOL * scale,
                residual: last_residual,
            });
        }
        out.push(x);
    }
    Ok(out)
}

/// Dense LU solve of a general square system `A X = B`.
pub(crate) fn dense_solve(a: DMatrix<f64>, b: DMatrix<f64>) -> Result<DMatrix<f64>, LinalgError> {
    a.lu().solve(&b).ok_or(LinalgError::Singular)
}

/// Order-independent pairwise summation; parallel producers can be reduced
/// in any schedule and still aggregate to identical bits.
pub(crate) fn pairwise_sum(xs: &[f64]) -> f64 {
    match xs.len() {
        0 => 0.0,
        1 => xs[0],
        2 => xs[0] + xs[1],
        n => {
            let mid = n / 2;
            pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
        }
    }
}
