//! Oracles written independently of the library internals: the closed-form
//! scalar soliton and a Newton solver for multi-soliton mirror constants.

#![allow(dead_code)]

use manakov_halfline::linalg::{c, CMatrix, CRow, C64};
use manakov_halfline::spectral::SpectralData;
use nalgebra::DMatrix;

pub const REFERENCE_K1: C64 = C64::new(1.0, 0.5);

pub fn reference_c1() -> CRow {
    CRow::from_row_slice(&[c(2.0, 0.0), c(1.0, 0.0)])
}

pub fn reference_base() -> SpectralData {
    SpectralData::focusing(&[REFERENCE_K1], &[vec![c(2.0, 0.0), c(1.0, 0.0)]])
}

/// Closed-form scalar one-soliton of `iq_t + q_xx + 2|q|²q = 0` for pole
/// `k = ξ + iη` and norming constant `C`:
/// `q = −2iη sech(2η(x − x₀ + 4ξt)) e^{−i(arg C + 2ξx + 4(ξ² − η²)t)}`,
/// `x₀ = ln(|C|/2η)/2η`.
pub fn sech_soliton(k: C64, norming: C64, x: f64, t: f64) -> C64 {
    let (xi, eta) = (k.re, k.im);
    let x0 = (norming.norm() / (2.0 * eta)).ln() / (2.0 * eta);
    let arg = norming.arg() + 2.0 * xi * x + 4.0 * (xi * xi - eta * eta) * t;
    let envelope = 1.0 / (2.0 * eta * (x - x0 + 4.0 * xi * t)).cosh();
    c(0.0, -2.0 * eta) * envelope * C64::from_polar(1.0, -arg)
}

fn projector(r: &CRow) -> CMatrix {
    r.adjoint() * r / C64::from(r.norm_squared())
}

fn factor(k: C64, pole: C64, p: &CMatrix) -> CMatrix {
    let n = p.nrows();
    CMatrix::identity(n, n) + p * ((k - pole) / (k - pole.conj()) - C64::from(1.0))
}

fn inv(m: &CMatrix) -> CMatrix {
    m.clone()
        .try_inverse()
        .expect("dressing factor is invertible off its pole")
}

/// `A(κ_p)/α′(κ_p)` for every pole of the ordered list.
fn cofactors(poles: &[C64], rows: &[CRow]) -> Vec<CMatrix> {
    let n = rows[0].len();
    let mut projectors: Vec<CMatrix> = Vec::new();
    for (p, row) in rows.iter().enumerate() {
        let mut r = row.clone();
        for i in 0..p {
            r *= factor(poles[p], poles[i], &projectors[i]);
        }
        projectors.push(projector(&r));
    }
    (0..poles.len())
        .map(|p| {
            let mut m = CMatrix::identity(n, n);
            for i in (p + 1..poles.len()).rev() {
                m *= inv(&factor(poles[p], poles[i], &projectors[i]));
            }
            m *= &projectors[p];
            for i in (0..p).rev() {
                m *= inv(&factor(poles[p], poles[i], &projectors[i]));
            }
            m * (poles[p] - poles[p].conj())
        })
        .collect()
}

fn alpha_prime(poles: &[C64], p: usize) -> C64 {
    poles
        .iter()
        .enumerate()
        .fold(C64::from(1.0), |acc, (i, &k)| {
            if i == p {
                acc / (poles[p] - k.conj())
            } else {
                acc * (poles[p] - k) / (poles[p] - k.conj())
            }
        })
}

/// Constraint residual matrices for base poles `kb`, constants `cb` and
/// candidate mirror constants `cm` with a constant boundary matrix `b`.
pub fn constraint_matrices(kb: &[C64], cb: &[CRow], cm: &[CRow], b: &CMatrix) -> Vec<CMatrix> {
    let lambda = C64::from(-1.0);
    let mut poles = Vec::new();
    let mut rows = Vec::new();
    for j in 0..kb.len() {
        poles.extend([kb[j], -kb[j].conj()]);
        rows.extend([cb[j].clone(), cm[j].clone()]);
    }
    let a = cofactors(&poles, &rows);
    let mut out = Vec::new();
    for j in 0..kb.len() {
        let a1 = alpha_prime(&poles, 2 * j);
        let a2 = alpha_prime(&poles, 2 * j + 1);
        out.push(cm[j].adjoint() * &cb[j] * lambda - b * &a[2 * j] / a1);
        out.push(cb[j].adjoint() * &cm[j] * lambda - b * &a[2 * j + 1] / a2);
    }
    out
}

fn pack(cm: &[CRow]) -> Vec<f64> {
    cm.iter()
        .flat_map(|r| r.iter().flat_map(|z| [z.re, z.im]).collect::<Vec<_>>())
        .collect()
}

fn unpack(z: &[f64], count: usize, n: usize) -> Vec<CRow> {
    (0..count)
        .map(|j| {
            CRow::from_iterator(
                n,
                (0..n).map(|i| c(z[2 * (j * n + i)], z[2 * (j * n + i) + 1])),
            )
        })
        .collect()
}

fn flatten(ms: &[CMatrix]) -> Vec<f64> {
    ms.iter()
        .flat_map(|m| m.iter().flat_map(|z| [z.re, z.im]).collect::<Vec<_>>())
        .collect()
}

/// Gauss-Newton on the constraint equations, starting from `start`, with a
/// forward-difference Jacobian. Returns the constants and the final max residual.
pub fn newton_mirror(kb: &[C64], cb: &[CRow], b: &CMatrix, start: &[CRow]) -> (Vec<CRow>, f64) {
    let n = cb[0].len();
    let count = kb.len();
    let f = |z: &[f64]| flatten(&constraint_matrices(kb, cb, &unpack(z, count, n), b));
    let mut z = pack(start);
    let mut best = f64::INFINITY;
    for _ in 0..60 {
        let r = f(&z);
        best = r.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        if best < 1e-14 {
            break;
        }
        let step = 1e-7;
        let mut jac = DMatrix::<f64>::zeros(r.len(), z.len());
        for i in 0..z.len() {
            let mut zp = z.clone();
            zp[i] += step;
            let rp = f(&zp);
            for (row, (a, b0)) in rp.iter().zip(&r).enumerate() {
                jac[(row, i)] = (a - b0) / step;
            }
        }
        let rhs = DMatrix::from_column_slice(r.len(), 1, &r.iter().map(|v| -v).collect::<Vec<_>>());
        let delta = jac
            .svd(true, true)
            .solve(&rhs, 1e-12)
            .expect("least-squares step");
        for (zi, d) in z.iter_mut().zip(delta.iter()) {
            *zi += d;
        }
    }
    (unpack(&z, count, n), best)
}
