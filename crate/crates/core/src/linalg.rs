//! Dense linear algebra for the small symmetric matrices that appear here
//! (kernel and Gram matrices are `n × n` with `n` in the tens).
//!
//! The eigen solver is cyclic Jacobi. After convergence the off-diagonal
//! Frobenius norm bounds the distance of every diagonal entry from a true
//! eigenvalue, which gives the certified tolerance promised by
//! [`min_eigenvalue`].

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::{Error, Result};

const MAX_SWEEPS: usize = 100;

/// Eigen decomposition of a symmetric matrix.
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    /// Eigenvalues in ascending order.
    pub values: Array1<f64>,
    /// Orthonormal eigenvectors as columns, ordered like `values`.
    pub vectors: Array2<f64>,
    /// Off-diagonal Frobenius norm at termination.
    pub residual: f64,
    pub sweeps: usize,
}

/// Largest entry of `|A − Aᵀ|`.
pub fn asymmetry(a: ArrayView2<f64>) -> f64 {
    let n = a.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((a[[i, j]] - a[[j, i]]).abs());
        }
    }
    worst
}

fn check_symmetric(a: ArrayView2<f64>) -> Result<()> {
    if a.nrows() != a.ncols() {
        return Err(Error::dims(format!("matrix is {}x{}, expected square", a.nrows(), a.ncols())));
    }
    let scale = a.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let asym = asymmetry(a);
    if asym > 1e-9 * scale {
        return Err(Error::invalid(format!("matrix is not symmetric (max |A - A^T| = {asym:e})")));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("matrix has non-finite entries"));
    }
    Ok(())
}

fn off_diagonal_norm(a: &Array2<f64>) -> f64 {
    let n = a.nrows();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += a[[i, j]] * a[[i, j]];
            }
        }
    }
    s.sqrt()
}

/// Cyclic Jacobi eigen decomposition. The input is symmetrized first; the
/// iteration stops once the off-diagonal norm is at most `tol`.
pub fn symmetric_eigen(a: ArrayView2<f64>, tol: f64) -> Result<SymmetricEigen> {
    check_symmetric(a)?;
    if !(tol > 0.0) {
        return Err(Error::invalid("tolerance must be positive"));
    }
    let n = a.nrows();
    let mut m = (&a + &a.t()) * 0.5;
    let mut v = Array2::<f64>::eye(n);
    let mut residual = off_diagonal_norm(&m);
    let mut sweeps = 0;

    while residual > tol {
        if sweeps == MAX_SWEEPS {
            return Err(Error::NoConvergence { sweeps, residual });
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[[p, q]];
                if apq == 0.0 {
                    continue;
                }
                let theta = (m[[q, q]] - m[[p, p]]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[[k, p]];
                    let mkq = m[[k, q]];
                    m[[k, p]] = c * mkp - s * mkq;
                    m[[k, q]] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[[p, k]];
                    let mqk = m[[q, k]];
                    m[[p, k]] = c * mpk - s * mqk;
                    m[[q, k]] = s * mpk + c * mqk;
                }
                m[[p, q]] = 0.0;
                m[[q, p]] = 0.0;
                for k in 0..n {
                    let vkp = v[[k, p]];
                    let vkq = v[[k, q]];
                    v[[k, p]] = c * vkp - s * vkq;
                    v[[k, q]] = s * vkp + c * vkq;
                }
            }
        }
        sweeps += 1;
        residual = off_diagonal_norm(&m);
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[[i, i]].total_cmp(&m[[j, j]]));
    let values = Array1::from_iter(order.iter().map(|&i| m[[i, i]]));
    let vectors = v.select(Axis(1), &order);
    Ok(SymmetricEigen { values, vectors, residual, sweeps })
}

/// Smallest eigenvalue of a symmetric matrix, accurate to `tol`.
pub fn min_eigenvalue(a: ArrayView2<f64>, tol: f64) -> Result<f64> {
    if a.nrows() == 0 {
        return Err(Error::invalid("empty matrix"));
    }
    Ok(symmetric_eigen(a, tol)?.values[0])
}

/// Largest eigenvalue of a symmetric matrix, accurate to `tol`.
pub fn max_eigenvalue(a: ArrayView2<f64>, tol: f64) -> Result<f64> {
    if a.nrows() == 0 {
        return Err(Error::invalid("empty matrix"));
    }
    let e = symmetric_eigen(a, tol)?;
    Ok(e.values[e.values.len() - 1])
}

/// Tolerance used for spectra of kernel and Gram matrices: relative to the
/// matrix scale with an absolute floor.
pub fn default_tol(a: ArrayView2<f64>) -> f64 {
    let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    (1e-12 * scale).max(1e-300)
}

pub fn frobenius(a: ArrayView2<f64>) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn frobenius_distance(a: ArrayView2<f64>, b: ArrayView2<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Solves `min ‖A x − b‖` for a tall matrix by Householder QR.
pub fn least_squares(a: ArrayView2<f64>, b: ArrayView1<f64>) -> Result<Array1<f64>> {
    let (rows, cols) = a.dim();
    if rows < cols {
        return Err(Error::dims(format!("least squares needs rows >= cols, got {rows}x{cols}")));
    }
    if b.len() != rows {
        return Err(Error::dims(format!("rhs has length {}, expected {rows}", b.len())));
    }
    let mut r = a.to_owned();
    let mut y = b.to_owned();
    for k in 0..cols {
        let norm = r.slice(ndarray::s![k.., k]).iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::invalid("least squares matrix is rank deficient"));
        }
        let alpha = if r[[k, k]] > 0.0 { -norm } else { norm };
        let mut v: Array1<f64> = r.slice(ndarray::s![k.., k]).to_owned();
        v[0] -= alpha;
        let vnorm2 = v.dot(&v);
        if vnorm2 == 0.0 {
            continue;
        }
        for j in k..cols {
            let proj = v.dot(&r.slice(ndarray::s![k.., j])) * 2.0 / vnorm2;
            for (i, vi) in v.iter().enumerate() {
                r[[k + i, j]] -= proj * vi;
            }
        }
        let proj = v.dot(&y.slice(ndarray::s![k..])) * 2.0 / vnorm2;
        for (i, vi) in v.iter().enumerate() {
            y[k + i] -= proj * vi;
        }
    }
    let mut x = Array1::<f64>::zeros(cols);
    for k in (0..cols).rev() {
        let mut s = y[k];
        for j in (k + 1)..cols {
            s -= r[[k, j]] * x[j];
        }
        if r[[k, k]].abs() < 1e-300 {
            return Err(Error::invalid("least squares matrix is rank deficient"));
        }
        x[k] = s / r[[k, k]];
    }
    Ok(x)
}
