//! Dense kernels: a counted Cholesky factorization for the interior-point
//! inner loop, and a minimum-norm least-squares solve for EDMD fitting.

use nalgebra::{DMatrix, SVD};

use crate::error::{Error, Result};
use crate::flops::FlopCounter;

/// Returned when a pivot is not strictly positive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NotPositiveDefinite {
    pub column: usize,
    pub pivot: f64,
}

/// Operations performed by [`cholesky_in_place`] on an `n x n` matrix:
/// `n^3/3 + n^2/2 + n/6`, evaluated exactly.
pub fn cholesky_flops(n: usize) -> u64 {
    let n = n as u64;
    n * (n + 1) * (2 * n + 1) / 6
}

/// Operations in one forward plus one backward triangular substitution.
pub fn triangular_solve_flops(n: usize) -> u64 {
    2 * (n as u64) * (n as u64)
}

/// Factor the symmetric matrix stored row-major in `a` as `L L^T`, writing `L`
/// into the lower triangle. The strict upper triangle is left untouched and
/// never read.
pub fn cholesky_in_place(
    a: &mut [f64],
    n: usize,
    flops: &mut FlopCounter,
) -> Result<(), NotPositiveDefinite> {
    debug_assert_eq!(a.len(), n * n);
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= a[j * n + k] * a[j * n + k];
        }
        if !(d > 0.0) || !d.is_finite() {
            return Err(NotPositiveDefinite { column: j, pivot: d });
        }
        let d = d.sqrt();
        a[j * n + j] = d;
        for i in (j + 1)..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = s / d;
        }
    }
    flops.add(cholesky_flops(n));
    Ok(())
}

/// Solve `L L^T x = b` in place given the factor from [`cholesky_in_place`].
pub fn cholesky_solve_in_place(l: &[f64], n: usize, b: &mut [f64], flops: &mut FlopCounter) {
    debug_assert_eq!(b.len(), n);
    // forward: L y = b
    for i in 0..n {
        let row = &l[i * n..i * n + n];
        let mut s = b[i];
        for k in 0..i {
            s -= row[k] * b[k];
        }
        b[i] = s / row[i];
    }
    // backward: L^T x = y
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in (i + 1)..n {
            s -= l[k * n + i] * b[k];
        }
        b[i] = s / l[i * n + i];
    }
    flops.add(triangular_solve_flops(n));
}

/// Relative singular-value cutoff used by [`lstsq_min_norm`].
pub const PINV_RCOND: f64 = 1e-10;

/// Minimum-norm least-squares solution `X` of `design * X ~= targets`.
///
/// Singular values below `PINV_RCOND * sigma_max` are discarded. Tall systems
/// are first reduced with a Householder QR so the SVD only sees the square
/// triangular factor; the pseudoinverse solution is the same either way.
pub fn lstsq_min_norm(design: DMatrix<f64>, targets: DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (m, p) = design.shape();
    if targets.nrows() != m {
        return Err(Error::dim(format!(
            "least squares: design has {m} rows, targets have {}",
            targets.nrows()
        )));
    }
    if m == 0 {
        return Err(Error::EmptyDataset);
    }
    let (core, rhs) = if m > p {
        let qr = design.qr();
        let mut rhs = targets;
        qr.q_tr_mul(&mut rhs);
        let rhs = rhs.rows(0, p).into_owned();
        (qr.r(), rhs)
    } else {
        (design, targets)
    };
    let svd = SVD::new(core, true, true);
    let sigma_max = svd.singular_values.max();
    let cutoff = PINV_RCOND * sigma_max;
    let u = svd.u.as_ref().expect("u requested");
    let v_t = svd.v_t.as_ref().expect("v_t requested");
    // X = V diag(1/sigma) U^T rhs, restricted to retained singular values.
    let mut ut_rhs = u.transpose() * rhs;
    for (i, &s) in svd.singular_values.iter().enumerate() {
        let scale = if s > cutoff && s > 0.0 { 1.0 / s } else { 0.0 };
        ut_rhs.row_mut(i).scale_mut(scale);
    }
    Ok(v_t.transpose() * ut_rhs)
}
