//! Dense complex linear algebra for the small systems that appear in the
//! reconstruction (block orders up to a few tens).
//!
//! Factorizations are nalgebra's LU with partial pivoting. Every solve is
//! guarded by a 1-norm condition estimate so that a numerically singular
//! system surfaces as an error instead of a silently wrong field value.

use nalgebra::{DMatrix, DVector, RowDVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
/// Dense row-major-agnostic complex matrix. Square wherever the domain
/// calls for a `SquareComplexMatrix` (B(k), V, μ blocks, D_j, Π_j).
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;
pub type CRow = RowDVector<C64>;

/// Largest condition estimate accepted by the checked solvers.
pub const MAX_CONDITION: f64 = 1e12;

pub const I: C64 = C64::new(0.0, 1.0);

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn identity(n: usize) -> CMatrix {
    CMatrix::identity(n, n)
}

pub fn norm_1(a: &CMatrix) -> f64 {
    (0..a.ncols())
        .map(|j| a.column(j).iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn max_abs(a: &CMatrix) -> f64 {
    a.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn max_abs_diff(a: &CMatrix, b: &CMatrix) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

pub fn is_finite(a: &CMatrix) -> bool {
    a.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

/// Inverse with partial-pivoting LU, rejecting systems whose 1-norm
/// condition number exceeds `max_condition`.
pub fn inverse_checked(a: &CMatrix, max_condition: f64, what: &'static str) -> Result<CMatrix> {
    assert!(a.is_square(), "inverse of a non-square matrix");
    let inv = a.clone().lu().try_inverse().ok_or(Error::IllConditioned {
        what,
        condition: f64::INFINITY,
    })?;
    let condition = norm_1(a) * norm_1(&inv);
    if !condition.is_finite() || condition > max_condition || !is_finite(&inv) {
        return Err(Error::IllConditioned { what, condition });
    }
    Ok(inv)
}

/// Solves `a · x = b` for a column right-hand side.
pub fn solve_checked(
    a: &CMatrix,
    b: &CVector,
    max_condition: f64,
    what: &'static str,
) -> Result<CVector> {
    let inv = inverse_checked(a, max_condition, what)?;
    Ok(inv * b)
}

/// Computes `row · a⁻¹` by solving the transposed system `aᵀ · yᵀ = rowᵀ`.
pub fn row_times_inverse(row: &CRow, a: &CMatrix, what: &'static str) -> Result<CRow> {
    let at = a.transpose();
    let y = solve_checked(&at, &row.transpose(), MAX_CONDITION, what)?;
    Ok(y.transpose())
}

/// Outer product `col · row` as an n×n matrix.
pub fn outer(col: &CVector, row: &CRow) -> CMatrix {
    col * row
}
