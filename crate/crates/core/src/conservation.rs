//! Conserved charges from the Riccati-series recursion.
//!
//! The charges are `I_p = ∫_0^{x_max} Γ_p R dx`, the coefficient of
//! `1/(2ik)^p` in the generating function, with `Γ_1 = −λR†` and
//! `Γ_{m+1} = ∂_xΓ_m + Σ_{k=1}^{m−1} (Γ_k R) Γ_{m−k}`. Spatial derivatives are
//! finite differences on the sampled field, deliberately independent of the
//! reconstruction internals.

use rayon::prelude::*;

use crate::engine::{soliton_center_offset, soliton_speed, soliton_width, SolitonField};
use crate::error::{Error, Result};
use crate::linalg::{CRow, CVector, C64};
use crate::mirror::HalfLineProblem;

/// Highest supported order; each order costs one more numerical derivative.
pub const MAX_ORDER: usize = 6;
/// `‖R(x_max)‖` at or above this flags the quadrature as tail-truncated.
pub const TAIL_TOLERANCE: f64 = 1e-10;

/// Field samples on the uniform grid `x_i = x_start + i·spacing`. Points
/// before `origin_index` lie at `x < 0` and only feed derivative stencils.
#[derive(Debug, Clone, PartialEq)]
pub struct LineSamples {
    pub x_start: f64,
    pub spacing: f64,
    pub values: Vec<CVector>,
    pub origin_index: usize,
}

impl LineSamples {
    /// Builds samples from explicit abscissae, rejecting non-uniform spacing.
    /// The integration origin is the first point with `x ≥ 0`.
    pub fn from_points(xs: &[f64], values: Vec<CVector>) -> Result<Self> {
        if xs.len() != values.len() {
            return Err(Error::InvalidGrid(
                "abscissae and samples differ in length".into(),
            ));
        }
        if xs.len() < 3 {
            return Err(Error::InvalidGrid(
                "at least three samples are required".into(),
            ));
        }
        let h = xs[1] - xs[0];
        if !(h > 0.0) {
            return Err(Error::InvalidGrid("abscissae must be increasing".into()));
        }
        for (i, w) in xs.windows(2).enumerate() {
            if ((w[1] - w[0]) - h).abs() > 1e-9 * h.max(w[1].abs()) {
                return Err(Error::InvalidGrid(format!(
                    "non-uniform grid: spacing {} at index {i} differs from {h}",
                    w[1] - w[0]
                )));
            }
        }
        let origin_index = xs.iter().position(|&x| x >= -1e-12 * h).unwrap_or(xs.len());
        Ok(LineSamples {
            x_start: xs[0],
            spacing: h,
            values,
            origin_index,
        })
    }

    pub fn x(&self, i: usize) -> f64 {
        self.x_start + i as f64 * self.spacing
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// `Γ_p(x_i)` as `coefficients[p − 1][i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GammaCoefficients {
    pub order: usize,
    pub coefficients: Vec<Vec<CRow>>,
}

fn derivative(f: &[CRow], h: f64) -> Vec<CRow> {
    let m = f.len();
    let r = |v: f64| C64::from(v);
    let inv = r(1.0 / (2.0 * h));
    (0..m)
        .map(|i| {
            if i == 0 {
                (&f[0] * r(-3.0) + &f[1] * r(4.0) - &f[2]) * inv
            } else if i == m - 1 {
                (&f[m - 1] * r(3.0) - &f[m - 2] * r(4.0) + &f[m - 3]) * inv
            } else {
                (&f[i + 1] - &f[i - 1]) * inv
            }
        })
        .collect()
}

pub fn gamma_recursion(
    samples: &LineSamples,
    lambda: f64,
    order: usize,
) -> Result<GammaCoefficients> {
    if order == 0 || order > MAX_ORDER {
        return Err(Error::InvalidGrid(format!(
            "charge order must lie in 1..={MAX_ORDER}, got {order}"
        )));
    }
    if samples.len() < 3 {
        return Err(Error::InvalidGrid(
            "at least three samples are required".into(),
        ));
    }
    let r = &samples.values;
    let mut gammas: Vec<Vec<CRow>> = vec![r
        .iter()
        .map(|ri| ri.adjoint() * C64::from(-lambda))
        .collect()];
    for m in 1..order {
        let mut next = derivative(&gammas[m - 1], samples.spacing);
        // Γ_{m+1} = Γ_{m,x} + Σ_{k=1}^{m−1} (Γ_k R) Γ_{m−k}, with 1-based k.
        for k in 1..m {
            for (i, out) in next.iter_mut().enumerate() {
                let scalar = (&gammas[k - 1][i] * &r[i])[(0, 0)];
                *out += &gammas[m - k - 1][i] * scalar;
            }
        }
        gammas.push(next);
    }
    Ok(GammaCoefficients {
        order,
        coefficients: gammas,
    })
}

/// Composite Simpson on uniformly spaced values, closing with the 3/8 rule
/// when the interval count is odd.
pub fn simpson(values: &[C64], h: f64) -> C64 {
    let m = values.len().saturating_sub(1);
    match m {
        0 => C64::from(0.0),
        1 => (values[0] + values[1]) * (0.5 * h),
        2 => (values[0] + values[1] * 4.0 + values[2]) * (h / 3.0),
        3 => (values[0] + values[1] * 3.0 + values[2] * 3.0 + values[3]) * (3.0 * h / 8.0),
        _ => {
            let even = if m.is_multiple_of(2) { m } else { m - 3 };
            let mut acc = values[0] + values[even];
            for (i, v) in values.iter().enumerate().take(even).skip(1) {
                acc += v * if i % 2 == 1 { 4.0 } else { 2.0 };
            }
            let mut total = acc * (h / 3.0);
            if even < m {
                let t = &values[even..];
                total += (t[0] + t[1] * 3.0 + t[2] * 3.0 + t[3]) * (3.0 * h / 8.0);
            }
            total
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChargeValue {
    pub order: usize,
    pub value: C64,
    pub tail_flag: bool,
}

fn tail_flag(samples: &LineSamples) -> bool {
    samples
        .values
        .last()
        .is_some_and(|r| r.norm() >= TAIL_TOLERANCE)
}

/// `I_p` for each requested order from one recursion pass.
pub fn charges(orders: &[usize], samples: &LineSamples, lambda: f64) -> Result<Vec<ChargeValue>> {
    let top = orders.iter().copied().max().unwrap_or(0);
    if top == 0 {
        return Ok(Vec::new());
    }
    if samples.origin_index + 1 >= samples.len() {
        return Err(Error::InvalidGrid(
            "no samples at x ≥ 0 to integrate".into(),
        ));
    }
    let gammas = gamma_recursion(samples, lambda, top)?;
    let flag = tail_flag(samples);
    orders
        .iter()
        .map(|&p| {
            if p == 0 || p > MAX_ORDER {
                return Err(Error::InvalidGrid(format!(
                    "charge order must lie in 1..={MAX_ORDER}, got {p}"
                )));
            }
            let integrand: Vec<C64> = gammas.coefficients[p - 1]
                .iter()
                .zip(&samples.values)
                .skip(samples.origin_index)
                .map(|(g, r)| (g * r)[(0, 0)])
                .collect();
            Ok(ChargeValue {
                order: p,
                value: simpson(&integrand, samples.spacing),
                tail_flag: flag,
            })
        })
        .collect()
}

pub fn charge(p: usize, samples: &LineSamples, lambda: f64) -> Result<ChargeValue> {
    Ok(charges(&[p], samples, lambda)?[0])
}

/// Real conserved quantity induced by the symmetrized generating function:
/// `4 Re I_p` for odd p; even orders cancel.
pub fn symmetrized_charge(order: usize, value: C64) -> f64 {
    if order % 2 == 1 {
        4.0 * value.re
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChargeOptions {
    pub n_x: usize,
    /// Extra points at `x < 0` so that derivative stencils at the origin are centred.
    pub ghost_points: usize,
    /// Right end of the integration range; chosen from the soliton trajectories when `None`.
    pub x_max: Option<f64>,
}

impl Default for ChargeOptions {
    fn default() -> Self {
        ChargeOptions {
            n_x: 2000,
            ghost_points: 8,
            x_max: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Drift {
    pub order: usize,
    /// `max_t |I_p(t) − I_p(t_0)|`.
    pub absolute: f64,
    /// `absolute / |I_p(t_0)|`; zero when both vanish.
    pub relative: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChargeSeries {
    pub orders: Vec<usize>,
    pub times: Vec<f64>,
    /// `values[time][order]`.
    pub values: Vec<Vec<C64>>,
    pub tail_flags: Vec<bool>,
    pub drift: Vec<Drift>,
    pub x_max: f64,
    pub spacing: f64,
}

impl ChargeSeries {
    pub fn drift_for(&self, order: usize) -> Option<&Drift> {
        self.drift.iter().find(|d| d.order == order)
    }
}

/// Right end that keeps every soliton and its mirror image at least 15
/// widths inside the range for all `times`.
pub fn default_x_max(problem: &HalfLineProblem, times: &[f64]) -> f64 {
    let base = &problem.base;
    let mut x_max: f64 = 0.0;
    for (&k, c) in base.poles.iter().zip(&base.norming) {
        let x0 = soliton_center_offset(k, c);
        let v = soliton_speed(k);
        let far = times
            .iter()
            .map(|&t| (x0 - v * t).abs())
            .fold(0.0, f64::max);
        x_max = x_max.max(far + 15.0 * soliton_width(k));
    }
    if x_max > 0.0 {
        x_max
    } else {
        1.0
    }
}

/// 17 instants spanning a full reflection: `[−T, T]` with `T` the time each
/// soliton needs to come within reach of the boundary from 12 widths away.
pub fn default_reflection_times(problem: &HalfLineProblem) -> Vec<f64> {
    let base = &problem.base;
    let horizon = base
        .poles
        .iter()
        .zip(&base.norming)
        .map(|(&k, c)| {
            let v = soliton_speed(k).max(1e-3);
            (12.0 * soliton_width(k) + soliton_center_offset(k, c).abs()) / v
        })
        .fold(0.0, f64::max);
    let horizon = if horizon > 0.0 { horizon } else { 1.0 };
    (0..17)
        .map(|i| -horizon + 2.0 * horizon * i as f64 / 16.0)
        .collect()
}

pub fn sample_line(
    field: &SolitonField,
    t: f64,
    x_max: f64,
    opts: &ChargeOptions,
) -> Result<LineSamples> {
    if opts.n_x < 3 {
        return Err(Error::InvalidGrid("n_x must be at least 3".into()));
    }
    let h = x_max / (opts.n_x - 1) as f64;
    let g = opts.ghost_points;
    let values = (0..opts.n_x + g)
        .map(|i| {
            let x = (i as f64 - g as f64) * h;
            field.eval(x, t).map_err(|e| Error::AtPoint {
                x,
                t,
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LineSamples {
        x_start: -(g as f64) * h,
        spacing: h,
        values,
        origin_index: g,
    })
}

pub fn charges_over_time(
    problem: &HalfLineProblem,
    times: &[f64],
    orders: &[usize],
    opts: &ChargeOptions,
) -> Result<ChargeSeries> {
    if times.is_empty() {
        return Err(Error::InvalidGrid("at least one time is required".into()));
    }
    let field = SolitonField::new(&problem.assembled)?;
    let lambda = problem.assembled.lambda();
    let x_max = opts.x_max.unwrap_or_else(|| default_x_max(problem, times));
    if !(x_max > 0.0) {
        return Err(Error::InvalidGrid("x_max must be positive".into()));
    }

    let per_time: Vec<Result<Vec<ChargeValue>>> = times
        .par_iter()
        .map(|&t| {
            let samples = sample_line(&field, t, x_max, opts)?;
            charges(orders, &samples, lambda)
        })
        .collect();
    let per_time = per_time.into_iter().collect::<Result<Vec<_>>>()?;

    let values: Vec<Vec<C64>> = per_time
        .iter()
        .map(|row| row.iter().map(|c| c.value).collect())
        .collect();
    let tail_flags = per_time
        .iter()
        .map(|row| row.iter().any(|c| c.tail_flag))
        .collect();
    let drift = orders
        .iter()
        .enumerate()
        .map(|(o, &order)| {
            let first = values[0][o];
            let absolute = values
                .iter()
                .map(|row| (row[o] - first).norm())
                .fold(0.0, f64::max);
            let relative = if absolute == 0.0 {
                0.0
            } else {
                absolute / first.norm()
            };
            Drift {
                order,
                absolute,
                relative,
            }
        })
        .collect();

    Ok(ChargeSeries {
        orders: orders.to_vec(),
        times: times.to_vec(),
        values,
        tail_flags,
        drift,
        x_max,
        spacing: x_max / (opts.n_x - 1) as f64,
    })
}
