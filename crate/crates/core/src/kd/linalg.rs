//! Small dense `f64` routines used by the spectrum and eigenbasis code.

use crate::numerics::{matmul, Tensor};
use crate::{Error, Result};

/// Off-diagonal Frobenius norm at which Jacobi sweeps stop.
pub const JACOBI_TOL: f64 = 1e-10;
const MAX_SWEEPS: usize = 100;

fn off_diagonal_norm(a: &[f64], n: usize) -> f64 {
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += a[i * n + j] * a[i * n + j];
            }
        }
    }
    s.sqrt()
}

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Returns eigenvalues in descending order and the matching unit
/// eigenvectors as the rows of an `n x n` matrix.
pub fn symmetric_eigen(m: &Tensor<f64>) -> Result<(Vec<f64>, Tensor<f64>)> {
    let (n, n2) = m.dims2()?;
    if n != n2 {
        return Err(Error::shape(format!("eigen-decomposition of a {n}x{n2} matrix")));
    }
    let mut a = m.data().to_vec();
    let scale = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !scale.is_finite() {
        return Err(Error::NonFinite("matrix passed to eigen-decomposition".into()));
    }
    for i in 0..n {
        for j in 0..i {
            if (a[i * n + j] - a[j * n + i]).abs() > 1e-9 * scale.max(1e-300) {
                return Err(Error::Format(format!(
                    "covariance is not symmetric at ({i},{j})"
                )));
            }
        }
    }
    // v holds eigenvectors in its columns.
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    let tol = JACOBI_TOL * scale;
    let mut sweeps = 0;
    while off_diagonal_norm(&a, n) > tol {
        sweeps += 1;
        if sweeps > MAX_SWEEPS {
            return Err(Error::NonFinite("Jacobi iteration did not converge".into()));
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[j * n + j].total_cmp(&a[i * n + i]));
    let values = order.iter().map(|&i| a[i * n + i]).collect();
    let mut rows = Vec::with_capacity(n * n);
    for &i in &order {
        rows.extend((0..n).map(|k| v[k * n + i]));
    }
    Ok((values, Tensor::new(vec![n, n], rows)?))
}

/// Modified Gram-Schmidt on the rows of `w`, in place.
pub fn orthonormalize_rows(w: &mut Tensor<f64>) -> Result<()> {
    let (r, c) = w.dims2()?;
    let d = w.data_mut();
    for i in 0..r {
        for j in 0..i {
            let dot: f64 = (0..c).map(|k| d[i * c + k] * d[j * c + k]).sum();
            for k in 0..c {
                d[i * c + k] -= dot * d[j * c + k];
            }
        }
        let norm = (0..c).map(|k| d[i * c + k] * d[i * c + k]).sum::<f64>().sqrt();
        if !(norm > 1e-12) {
            return Err(Error::NonFinite(format!("row {i} collapsed during orthonormalisation")));
        }
        for k in 0..c {
            d[i * c + k] /= norm;
        }
    }
    Ok(())
}

/// `‖W Wᵀ − I‖_F`.
pub fn orthonormality_error(w: &Tensor<f64>) -> f64 {
    let (r, _) = w.dims2().expect("matrix");
    let g = matmul(w, &transpose(w)).expect("conformable");
    let mut s = 0.0;
    for i in 0..r {
        for j in 0..r {
            let target = if i == j { 1.0 } else { 0.0 };
            s += (g.data()[i * r + j] - target).powi(2);
        }
    }
    s.sqrt()
}

pub fn transpose(m: &Tensor<f64>) -> Tensor<f64> {
    let (r, c) = m.dims2().expect("matrix");
    let mut out = vec![0.0; r * c];
    for i in 0..r {
        for j in 0..c {
            out[j * r + i] = m.data()[i * c + j];
        }
    }
    Tensor::new(vec![c, r], out).expect("nonempty")
}
