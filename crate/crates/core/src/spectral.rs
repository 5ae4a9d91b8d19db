//! Discrete scattering data and integrable boundary conditions.
//!
//! A soliton sector is described by its poles `k_j` (zeros of `det a(k)` in the
//! upper half-plane) and row-vector norming constants `C_j`. The boundary is
//! encoded in spectral space by the n×n matrix `B(k)`.

use std::fmt;

use crate::error::{Error, Result};
use crate::linalg::{c, identity, CMatrix, CRow, CVector, C64, I};

/// Sign of the cubic term, `λ` in `i R_t + R_xx − 2λ R R† R = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Coupling {
    /// λ = −1, admits bright solitons.
    Focusing,
    /// λ = +1.
    Defocusing,
}

impl Coupling {
    pub fn lambda(self) -> f64 {
        match self {
            Coupling::Focusing => -1.0,
            Coupling::Defocusing => 1.0,
        }
    }

    pub fn from_sign(sign: i64) -> Option<Self> {
        match sign {
            -1 => Some(Coupling::Focusing),
            1 => Some(Coupling::Defocusing),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralData {
    pub coupling: Coupling,
    /// Number of field components.
    pub n: usize,
    pub poles: Vec<C64>,
    pub norming: Vec<CRow>,
}

impl SpectralData {
    pub fn new(coupling: Coupling, n: usize, poles: Vec<C64>, norming: Vec<CRow>) -> Self {
        SpectralData {
            coupling,
            n,
            poles,
            norming,
        }
    }

    /// Focusing data from plain slices; `norming[j]` must have length `n`.
    pub fn focusing(poles: &[C64], norming: &[Vec<C64>]) -> Self {
        let n = norming.first().map_or(1, Vec::len);
        SpectralData {
            coupling: Coupling::Focusing,
            n,
            poles: poles.to_vec(),
            norming: norming.iter().map(|v| CRow::from_vec(v.clone())).collect(),
        }
    }

    pub fn vacuum(n: usize) -> Self {
        SpectralData::new(Coupling::Focusing, n, Vec::new(), Vec::new())
    }

    pub fn lambda(&self) -> f64 {
        self.coupling.lambda()
    }

    pub fn len(&self) -> usize {
        self.poles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poles.is_empty()
    }
}

/// One broken invariant, naming the offending item and the rule.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub subject: String,
    pub rule: String,
}

impl Violation {
    fn new(subject: impl Into<String>, rule: impl Into<String>) -> Self {
        Violation {
            subject: subject.into(),
            rule: rule.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.subject, self.rule)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
    pub warnings: Vec<String>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn into_result(self) -> Result<()> {
        if self.violations.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidSpectralData(self.violations))
        }
    }

    pub fn has_rule(&self, needle: &str) -> bool {
        self.violations.iter().any(|v| v.rule.contains(needle))
    }
}

fn is_finite(z: C64) -> bool {
    z.re.is_finite() && z.im.is_finite()
}

fn nearly_equal(a: C64, b: C64) -> bool {
    (a - b).norm() <= 1e-12 * a.norm().max(b.norm()).max(1.0)
}

/// Checks the first-quadrant soliton hypotheses: `Im k_j > 0`, `Re k_j ≥ 0`,
/// distinct poles with no `k_i = −k_j*`, nonzero norming vectors of length n,
/// and focusing coupling.
pub fn validate_spectral(data: &SpectralData) -> ValidationReport {
    let mut report = ValidationReport::default();

    if data.n == 0 {
        report
            .violations
            .push(Violation::new("n", "number of components must be positive"));
    }
    if data.coupling != Coupling::Focusing && !data.poles.is_empty() {
        report
            .violations
            .push(Violation::new("lambda", "soliton data requires λ=−1"));
    }
    if data.poles.len() != data.norming.len() {
        report.violations.push(Violation::new(
            "norming",
            format!(
                "{} poles but {} norming vectors",
                data.poles.len(),
                data.norming.len()
            ),
        ));
    }

    for (j, &k) in data.poles.iter().enumerate() {
        let name = format!("k_{}", j + 1);
        if !is_finite(k) {
            report
                .violations
                .push(Violation::new(&name, "non-finite pole"));
            continue;
        }
        if k.im <= 0.0 {
            report
                .violations
                .push(Violation::new(&name, format!("Im k_{} ≤ 0", j + 1)));
        }
        if k.re < 0.0 {
            report
                .violations
                .push(Violation::new(&name, format!("Re k_{} < 0", j + 1)));
        } else if k.re == 0.0 {
            report.warnings.push(format!(
                "{name} lies on the imaginary axis: its quartet degenerates to a pair"
            ));
        }
        for (i, &other) in data.poles.iter().enumerate().take(j) {
            if nearly_equal(k, other) {
                report
                    .violations
                    .push(Violation::new(&name, format!("coincides with k_{}", i + 1)));
            }
            if nearly_equal(k, -other.conj()) {
                report.violations.push(Violation::new(
                    &name,
                    format!("equals −k_{}* (quartet collision)", i + 1),
                ));
            }
        }
    }

    for (j, cj) in data.norming.iter().enumerate() {
        let name = format!("C_{}", j + 1);
        if cj.len() != data.n {
            report.violations.push(Violation::new(
                &name,
                format!("has {} entries, expected n = {}", cj.len(), data.n),
            ));
        }
        if cj.iter().any(|&z| !is_finite(z)) {
            report
                .violations
                .push(Violation::new(&name, "non-finite entry"));
        } else if cj.norm() <= 0.0 {
            report
                .violations
                .push(Violation::new(&name, "norming vector has zero norm"));
        }
    }

    report
}

/// Boundary sign: `+1` Neumann, `−1` Dirichlet.
pub type Sign = i8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryKind {
    Robin,
    MixedNd,
    Rotated,
}

#[derive(Debug, Clone, PartialEq)]
pub enum BoundarySpec {
    /// `R_x(0,t) − 2α R(0,t) = 0` on every component.
    Robin { alpha: f64 },
    /// `R_j(0,t) = 0` where `σ_j = −1`, `R_{j,x}(0,t) = 0` where `σ_j = +1`.
    MixedNd { signs: Vec<Sign> },
    /// Mixed conditions imposed in the polarization basis rotated by
    /// `V(θ, ζ, ξ)`; two components only.
    Rotated {
        signs: Vec<Sign>,
        theta: f64,
        zeta: f64,
        xi: f64,
    },
}

impl BoundarySpec {
    /// Mixed pattern with Dirichlet on the (0-based) component indices in `dirichlet`.
    pub fn mixed_from_dirichlet_set(n: usize, dirichlet: &[usize]) -> Self {
        let signs = (0..n)
            .map(|j| if dirichlet.contains(&j) { -1 } else { 1 })
            .collect();
        BoundarySpec::MixedNd { signs }
    }

    pub fn kind(&self) -> BoundaryKind {
        match self {
            BoundarySpec::Robin { .. } => BoundaryKind::Robin,
            BoundarySpec::MixedNd { .. } => BoundaryKind::MixedNd,
            BoundarySpec::Rotated { .. } => BoundaryKind::Rotated,
        }
    }

    /// True when `B` does not depend on `k`.
    pub fn is_constant(&self) -> bool {
        !matches!(self, BoundarySpec::Robin { .. })
    }

    pub fn signs(&self) -> Option<&[Sign]> {
        match self {
            BoundarySpec::Robin { .. } => None,
            BoundarySpec::MixedNd { signs } | BoundarySpec::Rotated { signs, .. } => Some(signs),
        }
    }

    /// The unitary `V` of the rotated family; identity-free kinds return `None`.
    pub fn rotation(&self) -> Option<CMatrix> {
        match *self {
            BoundarySpec::Rotated {
                theta, zeta, xi, ..
            } => Some(unitary_from_angles(theta, zeta, xi)),
            _ => None,
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        match self {
            BoundarySpec::Robin { alpha } => {
                if !alpha.is_finite() {
                    return Err(Error::InvalidBoundary(
                        "Robin α must be finite (pure Dirichlet is MixedNd with all σ = −1)".into(),
                    ));
                }
            }
            BoundarySpec::MixedNd { signs } => check_signs(signs, n)?,
            BoundarySpec::Rotated {
                signs,
                theta,
                zeta,
                xi,
            } => {
                if n != 2 {
                    return Err(Error::InvalidBoundary(format!(
                        "rotated boundary requires n = 2, got n = {n}"
                    )));
                }
                check_signs(signs, n)?;
                if ![theta, zeta, xi].iter().all(|a| a.is_finite()) {
                    return Err(Error::InvalidBoundary("non-finite rotation angle".into()));
                }
            }
        }
        Ok(())
    }
}

fn check_signs(signs: &[Sign], n: usize) -> Result<()> {
    if signs.len() != n {
        return Err(Error::InvalidBoundary(format!(
            "sign pattern has {} entries, expected n = {n}",
            signs.len()
        )));
    }
    if let Some(bad) = signs.iter().find(|&&s| s != 1 && s != -1) {
        return Err(Error::InvalidBoundary(format!(
            "sign entries must be +1 or -1, got {bad}"
        )));
    }
    Ok(())
}

/// `V = [[cosθ e^{iζ}, sinθ e^{iξ}], [−sinθ e^{−iξ}, cosθ e^{−iζ}]]`.
pub fn unitary_from_angles(theta: f64, zeta: f64, xi: f64) -> CMatrix {
    let (s, co) = theta.sin_cos();
    let e = |phi: f64| C64::from_polar(1.0, phi);
    CMatrix::from_row_slice(2, 2, &[co * e(zeta), s * e(xi), -s * e(-xi), co * e(-zeta)])
}

fn sign_diagonal(signs: &[Sign]) -> CMatrix {
    CMatrix::from_diagonal(&CVector::from_iterator(
        signs.len(),
        signs.iter().map(|&s| c(f64::from(s), 0.0)),
    ))
}

/// The boundary matrix `B(k)` for an n-component field.
///
/// Robin: `((k + iα)/(k − iα)) I_n`, the orientation for which the mirror
/// construction yields `R_x(0,t) = 2α R(0,t)`. MixedND: `diag(σ)`. Rotated:
/// `V diag(σ) V†`. In every case `B(−k) B(k) = I` and `B†(k*) B(k) = I`.
pub fn boundary_matrix(bc: &BoundarySpec, n: usize, k: C64) -> Result<CMatrix> {
    bc.validate(n)?;
    match bc {
        BoundarySpec::Robin { alpha } => {
            let pole = I * *alpha;
            let den = k - pole;
            if den.norm() <= 1e-14 * (1.0 + alpha.abs()) {
                return Err(Error::SingularEvaluation {
                    what: "Robin boundary factor",
                    re: k.re,
                    im: k.im,
                });
            }
            Ok(identity(n) * ((k + pole) / den))
        }
        BoundarySpec::MixedNd { signs } => Ok(sign_diagonal(signs)),
        BoundarySpec::Rotated { signs, .. } => {
            let v = bc.rotation().expect("rotated boundary has a rotation");
            Ok(&v * sign_diagonal(signs) * v.adjoint())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::max_abs_diff;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn reference_data() -> SpectralData {
        SpectralData::focusing(&[c(1.0, 0.5)], &[vec![c(2.0, 0.0), c(1.0, 0.0)]])
    }

    #[test]
    fn reference_configuration_validates() {
        let r = validate_spectral(&reference_data());
        assert!(r.is_ok(), "{:?}", r.violations);
        assert!(r.warnings.is_empty());
    }

    #[test]
    fn lower_half_plane_pole_rejected() {
        let d = SpectralData::focusing(&[c(1.0, -0.5)], &[vec![c(1.0, 0.0)]]);
        let r = validate_spectral(&d);
        assert!(r.has_rule("Im k_1 ≤ 0"));
    }

    #[test]
    fn defocusing_rejected() {
        let mut d = SpectralData::focusing(&[c(0.0, 1.0)], &[vec![c(1.0, 0.0)]]);
        d.coupling = Coupling::Defocusing;
        let r = validate_spectral(&d);
        assert!(r.has_rule("soliton data requires λ=−1"));
    }

    #[test]
    fn quartet_collision_and_duplicates_rejected() {
        let d = SpectralData::focusing(
            &[c(1.0, 0.5), c(-1.0, 0.5), c(1.0, 0.5)],
            &[vec![c(1.0, 0.0)], vec![c(1.0, 0.0)], vec![c(1.0, 0.0)]],
        );
        let r = validate_spectral(&d);
        assert!(r.has_rule("quartet collision"));
        assert!(r.has_rule("coincides with k_1"));
        assert!(r.has_rule("Re k_2 < 0"));
    }

    #[test]
    fn zero_norming_and_wrong_length_rejected() {
        let d = SpectralData {
            coupling: Coupling::Focusing,
            n: 2,
            poles: vec![c(1.0, 1.0), c(2.0, 1.0)],
            norming: vec![
                CRow::from_vec(vec![c(0.0, 0.0), c(0.0, 0.0)]),
                CRow::from_vec(vec![c(1.0, 0.0)]),
            ],
        };
        let r = validate_spectral(&d);
        assert!(r.has_rule("zero norm"));
        assert!(r.has_rule("expected n = 2"));
    }

    #[test]
    fn imaginary_axis_pole_warns_only() {
        let d = SpectralData::focusing(&[c(0.0, 0.5)], &[vec![c(1.0, 0.0)]]);
        let r = validate_spectral(&d);
        assert!(r.is_ok());
        assert_eq!(r.warnings.len(), 1);
    }

    #[test]
    fn unitary_special_angles() {
        let id = unitary_from_angles(0.0, 0.0, 0.0);
        assert!(max_abs_diff(&id, &identity(2)) < 1e-15);
        let swap = unitary_from_angles(PI / 2.0, 0.0, 0.0);
        let expect =
            CMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(1.0, 0.0), c(-1.0, 0.0), c(0.0, 0.0)]);
        assert!(max_abs_diff(&swap, &expect) < 1e-15);
    }

    #[test]
    fn unitary_modulus_and_phase() {
        let v = unitary_from_angles(PI / 6.0, 1.11, 0.0);
        assert!((v[(0, 0)].norm() - (PI / 6.0).cos()).abs() < 1e-15);
        assert!((v[(0, 0)].arg() - 1.11).abs() < 1e-15);
        assert!(max_abs_diff(&(&v * v.adjoint()), &identity(2)) < 1e-15);
    }

    #[test]
    fn robin_zero_and_pole() {
        let bc = BoundarySpec::Robin { alpha: 1.0 };
        let zero = boundary_matrix(&bc, 2, c(0.0, -1.0)).unwrap();
        assert!(crate::linalg::max_abs(&zero) < 1e-15);
        assert!(matches!(
            boundary_matrix(&bc, 2, c(0.0, 1.0)),
            Err(Error::SingularEvaluation { .. })
        ));
        let neumann = boundary_matrix(&BoundarySpec::Robin { alpha: 0.0 }, 3, c(0.3, 0.7)).unwrap();
        assert!(max_abs_diff(&neumann, &identity(3)) < 1e-15);
    }

    #[test]
    fn mixed_is_sign_diagonal() {
        let bc = BoundarySpec::MixedNd { signs: vec![1, -1] };
        let b = boundary_matrix(&bc, 2, c(5.0, 3.0)).unwrap();
        let expect =
            CMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(-1.0, 0.0)]);
        assert!(max_abs_diff(&b, &expect) < 1e-15);
        assert_eq!(
            BoundarySpec::mixed_from_dirichlet_set(3, &[1]),
            BoundarySpec::MixedNd {
                signs: vec![1, -1, 1]
            }
        );
    }

    #[test]
    fn rotated_pi_over_six() {
        let bc = BoundarySpec::Rotated {
            signs: vec![1, -1],
            theta: PI / 6.0,
            zeta: 0.0,
            xi: 0.0,
        };
        let b = boundary_matrix(&bc, 2, c(0.0, 0.0)).unwrap();
        let (s3, c3) = (PI / 3.0).sin_cos();
        let expect =
            CMatrix::from_row_slice(2, 2, &[c(c3, 0.0), c(-s3, 0.0), c(-s3, 0.0), c(-c3, 0.0)]);
        assert!(max_abs_diff(&b, &expect) < 1e-15);
        assert!(max_abs_diff(&(&b * &b), &identity(2)) < 1e-15);
    }

    #[test]
    fn invalid_boundaries() {
        let rot = BoundarySpec::Rotated {
            signs: vec![1, -1, 1],
            theta: 0.1,
            zeta: 0.0,
            xi: 0.0,
        };
        assert!(boundary_matrix(&rot, 3, c(1.0, 0.0)).is_err());
        let bad = BoundarySpec::MixedNd { signs: vec![1, 0] };
        assert!(boundary_matrix(&bad, 2, c(1.0, 0.0)).is_err());
        let short = BoundarySpec::MixedNd { signs: vec![1] };
        assert!(boundary_matrix(&short, 2, c(1.0, 0.0)).is_err());
    }

    fn sign_strategy(n: usize) -> impl Strategy<Value = Vec<Sign>> {
        prop::collection::vec(prop_oneof![Just(1i8), Just(-1i8)], n)
    }

    fn boundary_strategy() -> impl Strategy<Value = (BoundarySpec, usize)> {
        prop_oneof![
            (-5.0..5.0f64, 1usize..4).prop_map(|(alpha, n)| (BoundarySpec::Robin { alpha }, n)),
            (1usize..5)
                .prop_flat_map(|n| sign_strategy(n)
                    .prop_map(move |signs| (BoundarySpec::MixedNd { signs }, n))),
            (sign_strategy(2), -PI..PI, -PI..PI, -PI..PI).prop_map(|(signs, theta, zeta, xi)| (
                BoundarySpec::Rotated {
                    signs,
                    theta,
                    zeta,
                    xi
                },
                2
            )),
        ]
    }

    proptest! {
        #[test]
        fn boundary_matrix_identities((bc, n) in boundary_strategy(), kr in -4.0..4.0f64, ki in -4.0..4.0f64) {
            let k = c(kr, ki);
            if let BoundarySpec::Robin { alpha } = bc {
                prop_assume!((k - I * alpha).norm() > 1e-3 && (k + I * alpha).norm() > 1e-3);
            }
            let b = boundary_matrix(&bc, n, k).unwrap();
            let b_neg = boundary_matrix(&bc, n, -k).unwrap();
            let b_conj = boundary_matrix(&bc, n, k.conj()).unwrap();
            prop_assert!(max_abs_diff(&(&b_neg * &b), &identity(n)) < 1e-12);
            prop_assert!(max_abs_diff(&(b_conj.adjoint() * &b), &identity(n)) < 1e-12);
            if bc.is_constant() {
                prop_assert!(max_abs_diff(&(&b * &b), &identity(n)) < 1e-13);
            }
        }

        #[test]
        fn unitary_for_random_angles(theta in -10.0..10.0f64, zeta in -10.0..10.0f64, xi in -10.0..10.0f64) {
            let v = unitary_from_angles(theta, zeta, xi);
            prop_assert!(max_abs_diff(&(&v * v.adjoint()), &identity(2)) < 1e-14);
        }
    }

    #[test]
    fn unitary_thousand_triples() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand::rngs::StdRng::seed_from_u64(7);
        for _ in 0..1000 {
            let v = unitary_from_angles(
                rng.gen_range(-PI..PI),
                rng.gen_range(-PI..PI),
                rng.gen_range(-PI..PI),
            );
            assert!(max_abs_diff(&(&v * v.adjoint()), &identity(2)) < 1e-14);
        }
    }
}
