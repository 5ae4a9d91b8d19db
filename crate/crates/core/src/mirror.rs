//! Mirror norming constants and assembly of the 2N-pole half-line problem.
//!
//! Every physical pole `k_j` acquires a mirror partner `−k_j*` whose norming
//! constant `C_j′` is tied to `C_j` through the boundary matrix. For a single
//! soliton the partner constant follows in closed form from a two-factor
//! dressing of `a(k)`; for several solitons user-supplied constants are
//! checked against the full set of bilinear constraints.

use crate::error::{Error, Result};
use crate::linalg::{identity, inverse_checked, max_abs, CMatrix, CRow, C64, MAX_CONDITION};
use crate::spectral::{boundary_matrix, validate_spectral, BoundarySpec, Coupling, SpectralData};

/// Acceptance tolerance for user-supplied mirror constants.
pub const USER_MIRROR_TOLERANCE: f64 = 1e-8;

/// `D(k) = I + ((k − κ)/(k − κ*) − 1) Π`.
#[derive(Debug, Clone, PartialEq)]
pub struct DressingFactor {
    pub pole: C64,
    pub projector: CMatrix,
}

impl DressingFactor {
    pub fn from_row(pole: C64, row: &CRow) -> Result<Self> {
        Ok(DressingFactor {
            pole,
            projector: rank_one_projector(row)?,
        })
    }

    pub fn eval(&self, k: C64) -> Result<CMatrix> {
        dressing_factor_eval(self, k)
    }

    fn inverse_at(&self, k: C64) -> Result<CMatrix> {
        inverse_checked(&self.eval(k)?, MAX_CONDITION, "dressing factor")
    }
}

/// Orthogonal projector onto the span of `c†`, so that `c Π = c`.
pub fn rank_one_projector(c: &CRow) -> Result<CMatrix> {
    let norm_sq = c.norm_squared();
    if !(norm_sq > 0.0) || !norm_sq.is_finite() {
        return Err(Error::ZeroVector("projector row"));
    }
    Ok(c.adjoint() * c / C64::from(norm_sq))
}

pub fn dressing_factor_eval(df: &DressingFactor, k: C64) -> Result<CMatrix> {
    let den = k - df.pole.conj();
    if den.norm() <= 1e-14 * (1.0 + df.pole.norm()) {
        return Err(Error::SingularEvaluation {
            what: "dressing factor",
            re: k.re,
            im: k.im,
        });
    }
    let n = df.projector.nrows();
    let factor = (k - df.pole) / den - 1.0;
    Ok(identity(n) + &df.projector * factor)
}

/// `α′(−k₁*) = (k₁ + k₁*)/(2 k₁* (k₁ − k₁*))`, the derivative of the scalar
/// `det a` at the mirror pole of a single quartet.
pub fn alpha_prime(k1: C64) -> Result<C64> {
    if k1.im == 0.0 {
        return Err(Error::SingularEvaluation {
            what: "α′ (real pole)",
            re: k1.re,
            im: k1.im,
        });
    }
    let kc = k1.conj();
    Ok((k1 + kc) / (2.0 * kc * (k1 - kc)))
}

fn require_focusing(coupling: Coupling) -> Result<()> {
    match coupling {
        Coupling::Focusing => Ok(()),
        Coupling::Defocusing => Err(Error::Unsupported(
            "mirror norming constants are only defined for λ = −1".into(),
        )),
    }
}

fn require_nondegenerate(k: C64) -> Result<()> {
    if !(k.re > 0.0) || !(k.im > 0.0) {
        return Err(Error::DegeneratePole { re: k.re, im: k.im });
    }
    Ok(())
}

/// Closed-form `C₁′ = (V₁/(V₁V₁†)) D₁(−k₁*)⁻¹` with
/// `V₁† = −(α′(−k₁*)/(k₁ − k₁*)) B(−k₁*) C₁†`.
pub fn mirror_norming_constant(
    k1: C64,
    c1: &CRow,
    bc: &BoundarySpec,
    coupling: Coupling,
) -> Result<CRow> {
    require_focusing(coupling)?;
    require_nondegenerate(k1)?;
    let n = c1.len();
    let single = SpectralData::new(coupling, n, vec![k1], vec![c1.clone()]);
    validate_spectral(&single).into_result()?;
    bc.validate(n)?;

    let kappa = -k1.conj();
    let b = boundary_matrix(bc, n, kappa)?;
    let ap = alpha_prime(k1)?;
    let v_dag = &b * c1.adjoint() * (-(ap / (k1 - k1.conj())));
    let v = v_dag.adjoint();
    let gram = v.norm_squared();
    if !(gram > 0.0) || !gram.is_finite() {
        return Err(Error::ZeroVector("V₁ (boundary matrix annihilates C₁†)"));
    }
    let d1 = DressingFactor::from_row(k1, c1)?;
    let d1_inv = d1.inverse_at(kappa)?;
    Ok(v / C64::from(gram) * d1_inv)
}

/// `α′(κ_p) = (κ_p − κ_p*)⁻¹ ∏_{i≠p} (κ_p − κ_i)/(κ_p − κ_i*)` for a fully
/// dressed `det a(k) = ∏ (k − κ_i)/(k − κ_i*)`.
pub fn alpha_prime_product(poles: &[C64], p: usize) -> C64 {
    let kp = poles[p];
    poles
        .iter()
        .enumerate()
        .fold(C64::from(1.0), |acc, (i, &ki)| {
            if i == p {
                acc / (kp - ki.conj())
            } else {
                acc * (kp - ki) / (kp - ki.conj())
            }
        })
}

/// `A(κ_p)ᵗ / α′(κ_p)` for every pole of a recursively dressed `a(k)`:
/// `(κ_p − κ_p*) D_J⁻¹ ⋯ D_{p+1}⁻¹ Π_p D_{p−1}⁻¹ ⋯ D_1⁻¹`, all at `κ_p`,
/// where `Π_p` projects onto `(c_p D_1(κ_p) ⋯ D_{p−1}(κ_p))†`.
pub fn cofactors_over_alpha_prime(poles: &[C64], constants: &[CRow]) -> Result<Vec<CMatrix>> {
    assert_eq!(poles.len(), constants.len());
    let j_total = poles.len();
    let mut factors: Vec<DressingFactor> = Vec::with_capacity(j_total);
    for p in 0..j_total {
        let mut rho = constants[p].clone();
        for df in &factors {
            rho *= df.eval(poles[p])?;
        }
        factors.push(DressingFactor::from_row(poles[p], &rho)?);
    }

    let mut out = Vec::with_capacity(j_total);
    for p in 0..j_total {
        let kp = poles[p];
        let mut m = identity(constants[p].len());
        for df in factors[p + 1..].iter().rev() {
            m *= df.inverse_at(kp)?;
        }
        m *= &factors[p].projector;
        for df in factors[..p].iter().rev() {
            m *= df.inverse_at(kp)?;
        }
        out.push(m * (kp - kp.conj()));
    }
    Ok(out)
}

/// Interleaves `(k_j, C_j)` with `(−k_j*, C_j′)`.
fn interleave(base: &SpectralData, mirror: &[CRow]) -> (Vec<C64>, Vec<CRow>) {
    let mut poles = Vec::with_capacity(2 * base.len());
    let mut constants = Vec::with_capacity(2 * base.len());
    for ((&k, c), cp) in base.poles.iter().zip(&base.norming).zip(mirror) {
        poles.push(k);
        poles.push(-k.conj());
        constants.push(c.clone());
        constants.push(cp.clone());
    }
    (poles, constants)
}

/// Max-norm residuals of `λ C_j′† C_j = B(−k_j) A(k_j)ᵗ/α′(k_j)²` and
/// `λ C_j† C_j′ = B(k_j*) A(−k_j*)ᵗ/α′(−k_j*)²`, one pair per soliton.
pub fn constraint_residuals(
    base: &SpectralData,
    mirror: &[CRow],
    bc: &BoundarySpec,
) -> Result<Vec<(f64, f64)>> {
    require_focusing(base.coupling)?;
    if mirror.len() != base.len() {
        return Err(Error::InvalidSpectralData(vec![
            crate::spectral::Violation {
                subject: "mirror_norming".into(),
                rule: format!("{} vectors given for {} poles", mirror.len(), base.len()),
            },
        ]));
    }
    if let Some(bad) = mirror.iter().position(|c| c.len() != base.n) {
        return Err(Error::InvalidSpectralData(vec![
            crate::spectral::Violation {
                subject: format!("C′_{}", bad + 1),
                rule: format!("expected {} entries", base.n),
            },
        ]));
    }
    let lambda = C64::from(base.lambda());
    let (poles, constants) = interleave(base, mirror);
    let cof = cofactors_over_alpha_prime(&poles, &constants)?;

    let mut out = Vec::with_capacity(base.len());
    for (j, (&k, c)) in base.poles.iter().zip(&base.norming).enumerate() {
        let cp = &mirror[j];
        let (a, am) = (2 * j, 2 * j + 1);
        let lhs = cp.adjoint() * c * lambda;
        let rhs = boundary_matrix(bc, base.n, -k)? * &cof[a] / alpha_prime_product(&poles, a);
        let lhs_m = c.adjoint() * cp * lambda;
        let rhs_m =
            boundary_matrix(bc, base.n, k.conj())? * &cof[am] / alpha_prime_product(&poles, am);
        out.push((max_abs(&(lhs - rhs)), max_abs(&(lhs_m - rhs_m))));
    }
    Ok(out)
}

/// Residual pair `(r, r′)` for a single soliton and its mirror constant.
pub fn verify_constraints(
    k1: C64,
    c1: &CRow,
    c1_mirror: &CRow,
    bc: &BoundarySpec,
    coupling: Coupling,
) -> Result<(f64, f64)> {
    let base = SpectralData::new(coupling, c1.len(), vec![k1], vec![c1.clone()]);
    Ok(constraint_residuals(&base, std::slice::from_ref(c1_mirror), bc)?[0])
}

/// Everything the reconstruction needs for a half-line run.
#[derive(Debug, Clone, PartialEq)]
pub struct HalfLineProblem {
    pub base: SpectralData,
    pub bc: BoundarySpec,
    pub mirror_norming: Vec<CRow>,
    /// Poles `(k_1, −k_1*, k_2, −k_2*, …)` with constants `(C_1, C_1′, …)`.
    pub assembled: SpectralData,
}

impl HalfLineProblem {
    pub fn n(&self) -> usize {
        self.base.n
    }

    /// Constant boundary matrix for MixedND/Rotated, `None` for Robin.
    pub fn constant_boundary(&self) -> Option<CMatrix> {
        if self.bc.is_constant() {
            boundary_matrix(&self.bc, self.base.n, C64::from(0.0)).ok()
        } else {
            None
        }
    }
}

/// Builds the half-line problem, computing `C_1′` when `N = 1` and no
/// constants are supplied, and verifying every supplied constant otherwise.
pub fn assemble_halfline(
    base: &SpectralData,
    bc: &BoundarySpec,
    user_mirror: Option<&[CRow]>,
) -> Result<HalfLineProblem> {
    validate_spectral(base).into_result()?;
    require_focusing(base.coupling)?;
    bc.validate(base.n)?;
    for &k in &base.poles {
        require_nondegenerate(k)?;
    }

    let mirror_norming = match user_mirror {
        Some(supplied) => {
            let residuals = constraint_residuals(base, supplied, bc)?;
            for (j, &(r, rm)) in residuals.iter().enumerate() {
                if !(r < USER_MIRROR_TOLERANCE && rm < USER_MIRROR_TOLERANCE) {
                    return Err(Error::ConstraintViolation {
                        index: j + 1,
                        residual: r,
                        residual_conj: rm,
                        tolerance: USER_MIRROR_TOLERANCE,
                    });
                }
            }
            supplied.to_vec()
        }
        None if base.len() > 1 => {
            return Err(Error::Unsupported(format!(
                "no general solver exists for the coupled mirror-constant constraints \
                 when N > 1 (N = {}); supply mirror_norming explicitly",
                base.len()
            )))
        }
        None => base
            .poles
            .iter()
            .zip(&base.norming)
            .map(|(&k, c)| mirror_norming_constant(k, c, bc, base.coupling))
            .collect::<Result<Vec<_>>>()?,
    };

    let (poles, constants) = interleave(base, &mirror_norming);
    let assembled = SpectralData::new(base.coupling, base.n, poles, constants);
    Ok(HalfLineProblem {
        base: base.clone(),
        bc: bc.clone(),
        mirror_norming,
        assembled,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{c, max_abs_diff};
    use crate::spectral::unitary_from_angles;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn row(v: &[C64]) -> CRow {
        CRow::from_vec(v.to_vec())
    }

    fn mixed() -> BoundarySpec {
        BoundarySpec::MixedNd { signs: vec![1, -1] }
    }

    fn rotated(theta: f64, zeta: f64, xi: f64) -> BoundarySpec {
        BoundarySpec::Rotated {
            signs: vec![1, -1],
            theta,
            zeta,
            xi,
        }
    }

    #[test]
    fn projector_examples() {
        let p = rank_one_projector(&row(&[c(1.0, 0.0), c(0.0, 0.0)])).unwrap();
        assert!(
            max_abs_diff(
                &p,
                &CMatrix::from_row_slice(
                    2,
                    2,
                    &[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]
                )
            ) < 1e-15
        );
        let p = rank_one_projector(&row(&[c(1.0, 0.0), c(1.0, 0.0)])).unwrap();
        assert!(p.iter().all(|z| (z - c(0.5, 0.0)).norm() < 1e-15));
        let p = rank_one_projector(&row(&[c(2.0, 0.0), c(1.0, 0.0)])).unwrap();
        let expect =
            CMatrix::from_row_slice(2, 2, &[c(4.0, 0.0), c(2.0, 0.0), c(2.0, 0.0), c(1.0, 0.0)])
                / c(5.0, 0.0);
        assert!(max_abs_diff(&p, &expect) < 1e-15);
        assert!(max_abs_diff(&(&p * &p), &p) < 1e-15);
        assert!(matches!(
            rank_one_projector(&row(&[c(0.0, 0.0), c(0.0, 0.0)])),
            Err(Error::ZeroVector(_))
        ));
    }

    #[test]
    fn dressing_factor_examples() {
        let df = DressingFactor {
            pole: c(0.0, 1.0),
            projector: CMatrix::from_element(1, 1, c(1.0, 0.0)),
        };
        assert!((df.eval(c(0.0, 0.0)).unwrap()[(0, 0)] - c(-1.0, 0.0)).norm() < 1e-15);

        let df = DressingFactor {
            pole: c(0.0, 1.0),
            projector: CMatrix::from_row_slice(
                2,
                2,
                &[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)],
            ),
        };
        let d = df.eval(c(0.0, 2.0)).unwrap();
        assert!((d[(0, 0)] - c(1.0 / 3.0, 0.0)).norm() < 1e-15);
        assert!((d[(1, 1)] - c(1.0, 0.0)).norm() < 1e-15);
        assert!(d[(0, 1)].norm() < 1e-15 && d[(1, 0)].norm() < 1e-15);

        assert!(matches!(
            df.eval(c(0.0, -1.0)),
            Err(Error::SingularEvaluation { .. })
        ));

        let mut prev = f64::INFINITY;
        for m in [1e2, 1e4, 1e6] {
            let corr = max_abs(&(df.eval(c(m, -1.0)).unwrap() - identity(2)));
            assert!(corr < prev && corr * m < 3.0);
            prev = corr;
        }
    }

    #[test]
    fn alpha_prime_examples() {
        assert!((alpha_prime(c(1.0, 0.5)).unwrap() - c(0.4, -0.8)).norm() < 1e-15);
        assert!(alpha_prime(c(0.0, 1.0)).unwrap().norm() < 1e-15);
        assert!((alpha_prime(c(1.0, 1.0)).unwrap() - c(0.25, -0.25)).norm() < 1e-15);
        assert!(alpha_prime(c(2.0, 0.0)).is_err());
    }

    #[test]
    fn closed_form_alpha_prime_matches_product_form() {
        let k1 = c(1.3, 0.7);
        let poles = [k1, -k1.conj()];
        let from_product = alpha_prime_product(&poles, 1);
        assert!((from_product - alpha_prime(k1).unwrap()).norm() < 1e-14);
    }

    #[test]
    fn reference_mixed_and_rotated_constraints() {
        let k1 = c(1.0, 0.5);
        let c1 = row(&[c(2.0, 0.0), c(1.0, 0.0)]);
        for bc in [mixed(), rotated(PI / 6.0, 0.0, 0.0)] {
            let cp = mirror_norming_constant(k1, &c1, &bc, Coupling::Focusing).unwrap();
            let (r, rm) = verify_constraints(k1, &c1, &cp, &bc, Coupling::Focusing).unwrap();
            assert!(r < 1e-12 && rm < 1e-12, "{r} {rm}");
            let doubled = &cp * c(2.0, 0.0);
            let (r2, _) = verify_constraints(k1, &c1, &doubled, &bc, Coupling::Focusing).unwrap();
            assert!(
                r2 > 1e-2,
                "scaled constant must break the constraint, got {r2}"
            );
        }
    }

    #[test]
    fn scalar_neumann_constraints() {
        let k1 = c(1.0, 0.5);
        let c1 = row(&[c(1.0, 0.0)]);
        let bc = BoundarySpec::MixedNd { signs: vec![1] };
        let cp = mirror_norming_constant(k1, &c1, &bc, Coupling::Focusing).unwrap();

        // Scalar oracle: every factor is a plain number.
        let kc = k1.conj();
        let kappa = -kc;
        let ap = (k1 + kc) / (2.0 * kc * (k1 - kc));
        let v = (-(ap / (k1 - kc))).conj();
        let d1 = (kappa - k1) / (kappa - kc);
        let expect = v / v.norm_sqr() / d1;
        assert!((cp[0] - expect).norm() < 1e-14);

        let (r, rm) = verify_constraints(k1, &c1, &cp, &bc, Coupling::Focusing).unwrap();
        assert!(r < 1e-12 && rm < 1e-12);
    }

    #[test]
    fn assemble_reference_configuration() {
        let base = SpectralData::focusing(&[c(1.0, 0.5)], &[vec![c(2.0, 0.0), c(1.0, 0.0)]]);
        let p = assemble_halfline(&base, &mixed(), None).unwrap();
        assert_eq!(p.assembled.poles, vec![c(1.0, 0.5), c(-1.0, 0.5)]);
        assert_eq!(p.assembled.norming[0], base.norming[0]);
        assert_eq!(p.assembled.norming[1], p.mirror_norming[0]);
    }

    #[test]
    fn assemble_rejections() {
        let two = SpectralData::focusing(
            &[c(1.0, 0.5), c(0.6, 0.8)],
            &[
                vec![c(2.0, 0.0), c(1.0, 0.0)],
                vec![c(0.3, 0.0), c(1.2, 0.4)],
            ],
        );
        assert!(matches!(
            assemble_halfline(&two, &mixed(), None),
            Err(Error::Unsupported(_))
        ));

        let degenerate = SpectralData::focusing(&[c(0.0, 0.5)], &[vec![c(1.0, 0.0)]]);
        let bc = BoundarySpec::MixedNd { signs: vec![1] };
        assert!(matches!(
            assemble_halfline(&degenerate, &bc, None),
            Err(Error::DegeneratePole { .. })
        ));

        let base = SpectralData::focusing(&[c(1.0, 0.5)], &[vec![c(2.0, 0.0), c(1.0, 0.0)]]);
        let good = mirror_norming_constant(
            base.poles[0],
            &base.norming[0],
            &mixed(),
            Coupling::Focusing,
        )
        .unwrap();
        let bad = vec![&good * c(2.0, 0.0)];
        assert!(matches!(
            assemble_halfline(&base, &mixed(), Some(&bad)),
            Err(Error::ConstraintViolation { index: 1, .. })
        ));
        assert!(assemble_halfline(&base, &mixed(), Some(&[good])).is_ok());
    }

    #[test]
    fn defocusing_mirror_rejected() {
        let r = mirror_norming_constant(
            c(1.0, 0.5),
            &row(&[c(1.0, 0.0)]),
            &BoundarySpec::MixedNd { signs: vec![1] },
            Coupling::Defocusing,
        );
        assert!(matches!(r, Err(Error::Unsupported(_))));
    }

    #[test]
    fn robin_mirror_constraints() {
        let k1 = c(1.0, 0.5);
        let c1 = row(&[c(2.0, 0.0), c(1.0, 0.0)]);
        for alpha in [-1.0, 0.0, 0.5, 2.0] {
            let bc = BoundarySpec::Robin { alpha };
            let cp = mirror_norming_constant(k1, &c1, &bc, Coupling::Focusing).unwrap();
            let (r, rm) = verify_constraints(k1, &c1, &cp, &bc, Coupling::Focusing).unwrap();
            assert!(r < 1e-12 && rm < 1e-12);
        }
    }

    fn complex_in(lo: f64, hi: f64) -> impl Strategy<Value = C64> {
        (lo..hi, lo..hi).prop_map(|(a, b)| c(a, b))
    }

    fn first_quadrant() -> impl Strategy<Value = C64> {
        (0.2..3.0f64, 0.2..3.0f64).prop_map(|(a, b)| c(a, b))
    }

    fn norming2() -> impl Strategy<Value = CRow> {
        (complex_in(-2.0, 2.0), complex_in(-2.0, 2.0))
            .prop_filter("nonzero", |(a, b)| a.norm() + b.norm() > 0.1)
            .prop_map(|(a, b)| row(&[a, b]))
    }

    proptest! {
        #[test]
        fn projector_properties(cr in norming2()) {
            let p = rank_one_projector(&cr).unwrap();
            prop_assert!(max_abs_diff(&(&p * &p), &p) < 1e-13);
            prop_assert!((p.trace() - c(1.0, 0.0)).norm() < 1e-13);
            prop_assert!(max_abs_diff(&p.adjoint(), &p) < 1e-13);
            let cp = &cr * &p;
            prop_assert!(cp.iter().zip(cr.iter()).all(|(a, b)| (a - b).norm() < 1e-13 * (1.0 + b.norm())));
        }

        #[test]
        fn dressing_determinant(kappa in first_quadrant(), cr in norming2(), k in complex_in(-3.0, 3.0)) {
            prop_assume!((k - kappa.conj()).norm() > 1e-2);
            let df = DressingFactor::from_row(kappa, &cr).unwrap();
            let d = df.eval(k).unwrap();
            let expect = (k - kappa) / (k - kappa.conj());
            let det = d.determinant();
            prop_assert!((det - expect).norm() <= 1e-12 * expect.norm().max(1.0));
        }

        #[test]
        fn rotation_covariance(k1 in first_quadrant(), cr in norming2(),
                               theta in -PI..PI, zeta in -PI..PI, xi in -PI..PI) {
            let v = unitary_from_angles(theta, zeta, xi);
            let in_rotated = mirror_norming_constant(k1, &cr, &rotated(theta, zeta, xi), Coupling::Focusing).unwrap();
            let rotated_input = &cr * &v;
            let in_diagonal = mirror_norming_constant(k1, &rotated_input, &mixed(), Coupling::Focusing).unwrap();
            let back = &in_rotated * &v;
            let scale = in_diagonal.norm().max(1.0);
            for (a, b) in back.iter().zip(in_diagonal.iter()) {
                prop_assert!((a - b).norm() < 1e-10 * scale);
            }
        }

        #[test]
        fn gram_is_real_positive(k1 in first_quadrant(), cr in norming2()) {
            let b = boundary_matrix(&mixed(), 2, -k1.conj()).unwrap();
            let ap = alpha_prime(k1).unwrap();
            let v_dag = &b * cr.adjoint() * (-(ap / (k1 - k1.conj())));
            let g = (v_dag.adjoint() * &v_dag)[(0, 0)];
            prop_assert!(g.re > 0.0 && g.im.abs() <= 1e-14 * g.re);
        }
    }
}
