//! Numerical certification of reconstructed fields.
//!
//! Everything here treats the field as a black box sampled through
//! [`SolitonField::eval`]: the PDE and boundary checks use finite differences,
//! the mirror check compares `R(−x,t)` with `B R(x,t)` directly, and the
//! reflection summary measures soliton-frame amplitudes long before and long
//! after the collision with the boundary.

use rayon::prelude::*;

use crate::engine::{
    peak_scan_field, soliton_center_offset, soliton_speed, soliton_width, Axis, FieldGrid,
    SolitonField,
};
use crate::error::{Error, Result};
use crate::linalg::{CMatrix, CRow, CVector, C64, I};
use crate::mirror::{assemble_halfline, HalfLineProblem};
use crate::spectral::{unitary_from_angles, BoundarySpec, Sign, SpectralData};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResidualKind {
    Pde,
    BoundaryRobin,
    BoundaryMixed,
    MirrorSymmetry,
    AmplitudeBalance,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualReport {
    pub kind: ResidualKind,
    pub max_abs: f64,
    /// `(x, t)` of the worst point.
    pub location: (f64, f64),
    pub h_used: f64,
    pub convergence_exponent: Option<f64>,
}

#[derive(Debug, Clone, Copy)]
struct Worst {
    value: f64,
    x: f64,
    t: f64,
}

impl Worst {
    fn none() -> Self {
        Worst {
            value: 0.0,
            x: f64::NAN,
            t: f64::NAN,
        }
    }

    /// Larger value wins; ties keep the earlier candidate.
    fn merge(self, other: Worst) -> Worst {
        if other.value > self.value {
            other
        } else {
            self
        }
    }
}

fn points(x_axis: &Axis, t_axis: &Axis) -> Vec<(f64, f64)> {
    let xs = x_axis.values();
    t_axis
        .values()
        .into_iter()
        .flat_map(|t| xs.iter().map(move |&x| (x, t)))
        .collect()
}

/// Worst case over `pts` of `f`, reduced in storage order so the result does
/// not depend on thread scheduling.
fn worst_over(pts: &[(f64, f64)], f: impl Fn(f64, f64) -> Result<f64> + Sync) -> Result<Worst> {
    let vals: Vec<Result<Worst>> = pts
        .par_iter()
        .map(|&(x, t)| {
            f(x, t)
                .map(|value| Worst { value, x, t })
                .map_err(|e| Error::AtPoint {
                    x,
                    t,
                    source: Box::new(e),
                })
        })
        .collect();
    let mut worst = Worst::none();
    for v in vals {
        worst = worst.merge(v?);
    }
    Ok(worst)
}

/// `max_j |(i R_t + R_xx − 2λ (R†R) R)_j|` at one point with centred stencils of step `h`.
pub fn pde_residual_at(field: &SolitonField, lambda: f64, x: f64, t: f64, h: f64) -> Result<f64> {
    let r = field.eval(x, t)?;
    let r_t = (field.eval(x, t + h)? - field.eval(x, t - h)?) / C64::from(2.0 * h);
    let r_xx =
        (field.eval(x + h, t)? - &r * C64::from(2.0) + field.eval(x - h, t)?) / C64::from(h * h);
    let nonlinear = &r * C64::from(2.0 * lambda * r.norm_squared());
    let res = r_t * I + r_xx - nonlinear;
    Ok(res.iter().map(|z| z.norm()).fold(0.0, f64::max))
}

/// Largest PDE residual over the lattice for step `h`.
pub fn pde_residual_max(
    data: &SpectralData,
    x_axis: &Axis,
    t_axis: &Axis,
    h: f64,
) -> Result<ResidualReport> {
    if !(h > 0.0) {
        return Err(Error::InvalidGrid(
            "finite-difference step must be positive".into(),
        ));
    }
    let field = SolitonField::new(data)?;
    let lambda = data.lambda();
    let w = worst_over(&points(x_axis, t_axis), |x, t| {
        pde_residual_at(&field, lambda, x, t, h)
    })?;
    Ok(ResidualReport {
        kind: ResidualKind::Pde,
        max_abs: w.value,
        location: (w.x, w.t),
        h_used: h,
        convergence_exponent: None,
    })
}

/// PDE residual at step `h`, with the convergence exponent
/// `log₂(res(h)/res(h/2))` attached.
pub fn pde_residual(
    data: &SpectralData,
    x_axis: &Axis,
    t_axis: &Axis,
    h: f64,
) -> Result<ResidualReport> {
    let coarse = pde_residual_max(data, x_axis, t_axis, h)?;
    let fine = pde_residual_max(data, x_axis, t_axis, h / 2.0)?;
    let exponent = if coarse.max_abs > 0.0 && fine.max_abs > 0.0 {
        Some((coarse.max_abs / fine.max_abs).log2())
    } else {
        None
    };
    Ok(ResidualReport {
        convergence_exponent: exponent,
        ..coarse
    })
}

/// Residuals for a sequence of steps together with the exponents between
/// consecutive steps.
pub fn pde_refinement(
    data: &SpectralData,
    x_axis: &Axis,
    t_axis: &Axis,
    steps: &[f64],
) -> Result<(Vec<ResidualReport>, Vec<f64>)> {
    let reports = steps
        .iter()
        .map(|&h| pde_residual_max(data, x_axis, t_axis, h))
        .collect::<Result<Vec<_>>>()?;
    let exponents = reports
        .windows(2)
        .map(|w| (w[0].max_abs / w[1].max_abs).ln() / (w[0].h_used / w[1].h_used).ln())
        .collect();
    Ok((reports, exponents))
}

/// PDE residual of stored grid values using the lattice spacings as steps.
pub fn pde_residual_on_grid(grid: &FieldGrid, lambda: f64) -> Result<ResidualReport> {
    let (nx, nt) = (grid.x_axis.count, grid.t_axis.count);
    if nx < 3 || nt < 3 {
        return Err(Error::InvalidGrid(
            "grid too coarse for centred stencils (need at least 3×3 points)".into(),
        ));
    }
    let (hx, ht) = (grid.x_axis.step(), grid.t_axis.step());
    let mut worst = Worst::none();
    for it in 1..nt - 1 {
        for ix in 1..nx - 1 {
            let r = grid.get(ix, it);
            let r_t = (grid.get(ix, it + 1) - grid.get(ix, it - 1)) / C64::from(2.0 * ht);
            let r_xx = (grid.get(ix + 1, it) - r * C64::from(2.0) + grid.get(ix - 1, it))
                / C64::from(hx * hx);
            let res = r_t * I + r_xx - r * C64::from(2.0 * lambda * r.norm_squared());
            let value = res.iter().map(|z| z.norm()).fold(0.0, f64::max);
            worst = worst.merge(Worst {
                value,
                x: grid.x_axis.value(ix),
                t: grid.t_axis.value(it),
            });
        }
    }
    Ok(ResidualReport {
        kind: ResidualKind::Pde,
        max_abs: worst.value,
        location: (worst.x, worst.t),
        h_used: hx,
        convergence_exponent: None,
    })
}

/// Default step for the one-sided boundary derivative.
pub const BOUNDARY_STEP: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryReport {
    pub report: ResidualReport,
    /// `max_t` over Dirichlet components of `|R_j(0,t)|` (rotated frame for Rotated).
    pub dirichlet_max: f64,
    /// `max_t` over Neumann components of `|∂_x R_j(0,t)|` (rotated frame for Rotated).
    pub neumann_max: f64,
    /// Worst applicable residual at each requested time.
    pub per_time: Vec<f64>,
    /// Set for Robin conditions, whose satisfaction is observed rather than guaranteed.
    pub empirical_only: bool,
}

fn one_sided_derivative(field: &SolitonField, t: f64, h: f64) -> Result<(CVector, CVector)> {
    let r0 = field.eval(0.0, t)?;
    let r1 = field.eval(h, t)?;
    let r2 = field.eval(2.0 * h, t)?;
    let dx = (&r0 * C64::from(-3.0) + r1 * C64::from(4.0) - r2) / C64::from(2.0 * h);
    Ok((r0, dx))
}

fn mixed_residuals(signs: &[Sign], r0: &CVector, dx: &CVector) -> (f64, f64) {
    let mut dirichlet: f64 = 0.0;
    let mut neumann: f64 = 0.0;
    for (j, &s) in signs.iter().enumerate() {
        if s < 0 {
            dirichlet = dirichlet.max(r0[j].norm());
        } else {
            neumann = neumann.max(dx[j].norm());
        }
    }
    (dirichlet, neumann)
}

/// Checks the boundary condition at `x = 0` for each time.
pub fn boundary_residual(
    problem: &HalfLineProblem,
    times: &[f64],
    h: f64,
) -> Result<BoundaryReport> {
    if !(h > 0.0) {
        return Err(Error::InvalidGrid(
            "finite-difference step must be positive".into(),
        ));
    }
    let field = SolitonField::new(&problem.assembled)?;
    let rotation_dag = problem.bc.rotation().map(|v| v.adjoint());
    let rows: Vec<Result<(f64, f64, f64)>> = times
        .par_iter()
        .map(|&t| {
            let (r0, dx) = one_sided_derivative(&field, t, h)?;
            Ok(match &problem.bc {
                BoundarySpec::Robin { alpha } => {
                    let res = dx - &r0 * C64::from(2.0 * alpha);
                    let worst = res.iter().map(|z| z.norm()).fold(0.0, f64::max);
                    (worst, 0.0, 0.0)
                }
                BoundarySpec::MixedNd { signs } => {
                    let (d, n) = mixed_residuals(signs, &r0, &dx);
                    (d.max(n), d, n)
                }
                BoundarySpec::Rotated { signs, .. } => {
                    let vd = rotation_dag
                        .as_ref()
                        .expect("rotated boundary has a rotation");
                    let (d, n) = mixed_residuals(signs, &(vd * &r0), &(vd * &dx));
                    (d.max(n), d, n)
                }
            })
        })
        .collect();

    let mut per_time = Vec::with_capacity(times.len());
    let (mut dirichlet, mut neumann) = (0.0f64, 0.0f64);
    let mut worst = Worst::none();
    for (row, &t) in rows.into_iter().zip(times) {
        let (w, d, n) = row.map_err(|e| Error::AtPoint {
            x: 0.0,
            t,
            source: Box::new(e),
        })?;
        per_time.push(w);
        dirichlet = dirichlet.max(d);
        neumann = neumann.max(n);
        worst = worst.merge(Worst {
            value: w,
            x: 0.0,
            t,
        });
    }
    let robin = matches!(problem.bc, BoundarySpec::Robin { .. });
    Ok(BoundaryReport {
        report: ResidualReport {
            kind: if robin {
                ResidualKind::BoundaryRobin
            } else {
                ResidualKind::BoundaryMixed
            },
            max_abs: worst.value,
            location: (worst.x, worst.t),
            h_used: h,
            convergence_exponent: None,
        },
        dirichlet_max: dirichlet,
        neumann_max: neumann,
        per_time,
        empirical_only: robin,
    })
}

/// Boundary residual maxima for a sequence of derivative steps.
pub fn boundary_refinement(
    problem: &HalfLineProblem,
    times: &[f64],
    steps: &[f64],
) -> Result<Vec<(f64, f64)>> {
    steps
        .iter()
        .map(|&h| Ok((h, boundary_residual(problem, times, h)?.report.max_abs)))
        .collect()
}

/// `max ‖R(−x,t) − B R(x,t)‖` over the lattice (only `x ≥ 0` nodes are needed
/// but any axis is accepted).
pub fn mirror_symmetry_residual(
    problem: &HalfLineProblem,
    x_axis: &Axis,
    t_axis: &Axis,
) -> Result<ResidualReport> {
    let b = problem.constant_boundary().ok_or_else(|| {
        Error::NotApplicable(
            "mirror symmetry R(−x,t) = B R(x,t) holds for constant boundary matrices only".into(),
        )
    })?;
    mirror_symmetry_residual_with(problem, &b, x_axis, t_axis)
}

/// Same as [`mirror_symmetry_residual`] with an arbitrary comparison matrix.
pub fn mirror_symmetry_residual_with(
    problem: &HalfLineProblem,
    b: &CMatrix,
    x_axis: &Axis,
    t_axis: &Axis,
) -> Result<ResidualReport> {
    let field = SolitonField::new(&problem.assembled)?;
    let w = worst_over(&points(x_axis, t_axis), |x, t| {
        let left = field.eval(-x, t)?;
        let right = field.eval(x, t)?;
        Ok((left - b * right).norm())
    })?;
    Ok(ResidualReport {
        kind: ResidualKind::MirrorSymmetry,
        max_abs: w.value,
        location: (w.x, w.t),
        h_used: 0.0,
        convergence_exponent: None,
    })
}

/// Below this `Re k₁` the soliton takes too long to reach and leave the boundary.
pub const MIN_SPEED_RE_K: f64 = 0.05;

#[derive(Debug, Clone, PartialEq)]
pub struct ReflectionSummary {
    pub incoming_amplitudes: Vec<f64>,
    pub outgoing_amplitudes: Vec<f64>,
    pub incoming_total: f64,
    pub outgoing_total: f64,
    /// `(−T, T)`.
    pub measurement_times: (f64, f64),
    pub theta_params: Option<(f64, f64, f64)>,
    pub incoming_peak: f64,
    pub outgoing_peak: f64,
}

impl ReflectionSummary {
    pub fn balance(&self) -> ResidualReport {
        ResidualReport {
            kind: ResidualKind::AmplitudeBalance,
            max_abs: (self.incoming_total - self.outgoing_total).abs(),
            location: (self.outgoing_peak, self.measurement_times.1),
            h_used: 0.0,
            convergence_exponent: None,
        }
    }
}

/// Smallest horizon keeping both the incoming soliton and its outgoing
/// partner at least five widths away from the boundary: `max(8, (5w + |x₀|)/v)`.
pub fn default_horizon(problem: &HalfLineProblem) -> Result<f64> {
    let (k1, c1, c1m) = single_soliton(problem)?;
    if k1.re < MIN_SPEED_RE_K {
        return Err(Error::HorizonTooSlow {
            re_k: k1.re,
            threshold: MIN_SPEED_RE_K,
        });
    }
    let w = soliton_width(k1);
    let v = soliton_speed(k1);
    let offset = soliton_center_offset(k1, c1)
        .abs()
        .max(soliton_center_offset(-k1.conj(), c1m).abs());
    Ok(((5.0 * w + offset) / v).max(8.0))
}

fn single_soliton(problem: &HalfLineProblem) -> Result<(C64, &CRow, &CRow)> {
    if problem.base.len() != 1 {
        return Err(Error::Unsupported(format!(
            "reflection summaries are defined for a single soliton, got N = {}",
            problem.base.len()
        )));
    }
    Ok((
        problem.base.poles[0],
        &problem.base.norming[0],
        &problem.mirror_norming[0],
    ))
}

fn scan_window(problem: &HalfLineProblem, t: f64) -> Result<(f64, f64)> {
    let (k1, c1, c1m) = single_soliton(problem)?;
    let w = soliton_width(k1);
    let offset = soliton_center_offset(k1, c1)
        .abs()
        .max(soliton_center_offset(-k1.conj(), c1m).abs());
    Ok((0.0, soliton_speed(k1) * t.abs() + offset + 15.0 * w))
}

/// Soliton-frame amplitudes at `t = −T` (incoming) and `t = +T` (outgoing).
/// A requested horizon shorter than [`default_horizon`] is enlarged.
pub fn reflection_summary(
    problem: &HalfLineProblem,
    horizon: Option<f64>,
) -> Result<ReflectionSummary> {
    let min_t = default_horizon(problem)?;
    let t = horizon.map_or(min_t, |h| h.max(min_t));
    let field = SolitonField::new(&problem.assembled)?;
    let incoming = peak_scan_field(&field, -t, scan_window(problem, -t)?, None)?;
    let outgoing = peak_scan_field(&field, t, scan_window(problem, t)?, None)?;
    let theta_params = match problem.bc {
        BoundarySpec::Rotated {
            theta, zeta, xi, ..
        } => Some((theta, zeta, xi)),
        _ => None,
    };
    Ok(ReflectionSummary {
        incoming_amplitudes: incoming.amplitudes,
        outgoing_amplitudes: outgoing.amplitudes,
        incoming_total: incoming.total,
        outgoing_total: outgoing.total,
        measurement_times: (-t, t),
        theta_params,
        incoming_peak: incoming.x_peak.unwrap_or(f64::NAN),
        outgoing_peak: outgoing.x_peak.unwrap_or(f64::NAN),
    })
}

/// Peak positions of the physical soliton at the given times and the
/// least-squares slope `dx_peak/dt`.
pub fn peak_trajectory(problem: &HalfLineProblem, times: &[f64]) -> Result<(Vec<f64>, f64)> {
    if times.len() < 2 {
        return Err(Error::InvalidGrid(
            "a trajectory needs at least two times".into(),
        ));
    }
    let field = SolitonField::new(&problem.assembled)?;
    let xs = times
        .iter()
        .map(|&t| {
            let p = peak_scan_field(&field, t, scan_window(problem, t)?, None)?;
            p.x_peak
                .ok_or_else(|| Error::NotApplicable("no soliton peak found".into()))
        })
        .collect::<Result<Vec<_>>>()?;
    let n = times.len() as f64;
    let tm = times.iter().sum::<f64>() / n;
    let xm = xs.iter().sum::<f64>() / n;
    let sxy: f64 = times
        .iter()
        .zip(&xs)
        .map(|(t, x)| (t - tm) * (x - xm))
        .sum();
    let sxx: f64 = times.iter().map(|t| (t - tm) * (t - tm)).sum();
    Ok((xs, sxy / sxx))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThetaScan {
    pub thetas: Vec<f64>,
    pub summaries: Vec<ReflectionSummary>,
    /// Angle minimizing the outgoing second-component amplitude.
    pub theta_star: f64,
    pub index_star: usize,
}

/// Reflection summaries for the rotated boundary family `V(θ, ζ, ξ)` with
/// signs `(+1, −1)`; ties in the minimum go to the smaller angle.
pub fn theta_scan(
    k1: C64,
    c1: &CRow,
    zeta: f64,
    xi: f64,
    thetas: &[f64],
    horizon: Option<f64>,
) -> Result<ThetaScan> {
    theta_scan_with_signs(k1, c1, &[1, -1], zeta, xi, thetas, horizon)
}

/// [`theta_scan`] for an arbitrary sign pattern in the rotated frame.
pub fn theta_scan_with_signs(
    k1: C64,
    c1: &CRow,
    signs: &[Sign],
    zeta: f64,
    xi: f64,
    thetas: &[f64],
    horizon: Option<f64>,
) -> Result<ThetaScan> {
    if c1.len() != 2 {
        return Err(Error::InvalidBoundary("θ-scans require n = 2".into()));
    }
    if thetas.is_empty() {
        return Err(Error::InvalidGrid("θ grid is empty".into()));
    }
    let base = SpectralData::new(
        crate::spectral::Coupling::Focusing,
        2,
        vec![k1],
        vec![c1.clone()],
    );
    let summaries: Vec<Result<ReflectionSummary>> = thetas
        .par_iter()
        .map(|&theta| {
            let bc = BoundarySpec::Rotated {
                signs: signs.to_vec(),
                theta,
                zeta,
                xi,
            };
            let problem = assemble_halfline(&base, &bc, None)?;
            reflection_summary(&problem, horizon)
        })
        .collect();
    let summaries = summaries.into_iter().collect::<Result<Vec<_>>>()?;
    let mut index_star = 0;
    for (i, s) in summaries.iter().enumerate() {
        if s.outgoing_amplitudes[1] < summaries[index_star].outgoing_amplitudes[1] {
            index_star = i;
        }
    }
    Ok(ThetaScan {
        thetas: thetas.to_vec(),
        summaries,
        theta_star: thetas[index_star],
        index_star,
    })
}

/// `count` equally spaced angles on `[start, stop]`.
pub fn theta_grid(start: f64, stop: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![start],
        _ => (0..count)
            .map(|i| {
                if i + 1 == count {
                    stop
                } else {
                    start + (stop - start) * i as f64 / (count - 1) as f64
                }
            })
            .collect(),
    }
}

/// Outgoing polarization predicted by the mirror constant alone: the unit
/// vector along `C₁′`, which the outgoing soliton carries once it has separated
/// from its image.
pub fn predicted_outgoing_polarization(problem: &HalfLineProblem) -> Result<Vec<f64>> {
    let (_, _, c1m) = single_soliton(problem)?;
    let norm = c1m.norm();
    Ok(c1m.iter().map(|z| z.norm() / norm).collect())
}

/// The unitary `V(θ, ζ, ξ)`, re-exported for report generation.
pub fn rotation(theta: f64, zeta: f64, xi: f64) -> CMatrix {
    unitary_from_angles(theta, zeta, xi)
}
