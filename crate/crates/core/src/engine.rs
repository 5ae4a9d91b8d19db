//! Pure-soliton reconstruction of `R(x,t)` from discrete scattering data.
//!
//! Two equivalent routes are provided. [`mu_matrix`] and
//! [`reconstruct_field_direct`] build the `Jn × Jn` block system literally;
//! they are exact but the block matrix becomes catastrophically ill-conditioned
//! once any `e^{2i(k_j − k_m*)x + …}` is large. [`SolitonField`] eliminates the
//! rank-one structure of every block and solves an equivalent `J × J`
//! Cauchy–Gram system whose rows and columns are rescaled in log space, which
//! stays well-conditioned on the whole `(x,t)` plane.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{c, identity, inverse_checked, CMatrix, CRow, CVector, C64, I, MAX_CONDITION};
use crate::spectral::SpectralData;

/// `φ(x,t,k) = kx + 2k²t`.
pub fn phase(x: f64, t: f64, k: C64) -> C64 {
    k * x + 2.0 * k * k * t
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalOptions {
    /// Largest accepted real part of any pairwise exponent
    /// `2i(k_j − k_m*)x + 4i(k_j² − k_m*²)t`.
    pub max_exponent: f64,
    pub max_condition: f64,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            max_exponent: 300.0,
            max_condition: MAX_CONDITION,
        }
    }
}

/// `1/(2 Im k)`.
pub fn soliton_width(k: C64) -> f64 {
    0.5 / k.im
}

/// Speed `4 Re k` of a line soliton; it travels towards decreasing x when `Re k > 0`.
pub fn soliton_speed(k: C64) -> f64 {
    4.0 * k.re
}

/// Centre at `t = 0` of the isolated line soliton `(k, C)`: `ln(|C|/(2 Im k))/(2 Im k)`.
pub fn soliton_center_offset(k: C64, c: &CRow) -> f64 {
    let eta = k.im;
    (c.norm() / (2.0 * eta)).ln() / (2.0 * eta)
}

/// Centre of the isolated line soliton at time `t`: `x₀ − 4 Re k · t`.
pub fn soliton_center(k: C64, c: &CRow, t: f64) -> f64 {
    soliton_center_offset(k, c) - soliton_speed(k) * t
}

/// Default half-width of symmetric windows: 30 widths of the narrowest soliton.
pub fn x_safe(data: &SpectralData) -> f64 {
    data.poles
        .iter()
        .map(|k| 30.0 * soliton_width(*k))
        .fold(0.0, f64::max)
}

/// Checks what the reconstruction itself needs: matching dimensions, finite
/// values, `Im k_j > 0` and pairwise distinct poles. Unlike
/// [`crate::spectral::validate_spectral`] it accepts `Re k_j < 0`, so it
/// applies to assembled half-line data.
pub fn check_line_data(data: &SpectralData) -> Result<()> {
    let mut violations = Vec::new();
    let push = |v: &mut Vec<crate::spectral::Violation>, s: String, r: &str| {
        v.push(crate::spectral::Violation {
            subject: s,
            rule: r.to_string(),
        })
    };
    if data.poles.len() != data.norming.len() {
        push(
            &mut violations,
            "norming".into(),
            "length differs from pole count",
        );
    }
    for (j, &k) in data.poles.iter().enumerate() {
        if !(k.re.is_finite() && k.im.is_finite()) || !(k.im > 0.0) {
            push(
                &mut violations,
                format!("k_{}", j + 1),
                "pole must be finite with Im k > 0",
            );
        }
        if data.poles[..j]
            .iter()
            .any(|&o| (o - k).norm() <= 1e-12 * k.norm().max(1.0))
        {
            push(&mut violations, format!("k_{}", j + 1), "duplicate pole");
        }
    }
    for (j, cj) in data.norming.iter().enumerate() {
        if cj.len() != data.n || cj.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
            push(
                &mut violations,
                format!("C_{}", j + 1),
                "wrong length or non-finite entry",
            );
        }
    }
    if violations.is_empty() {
        Ok(())
    } else {
        Err(Error::InvalidSpectralData(violations))
    }
}

fn exponent(x: f64, t: f64, k: C64) -> C64 {
    2.0 * I * phase(x, t, k)
}

fn check_window(x: f64, t: f64, data: &SpectralData, limit: f64) -> Result<()> {
    let worst = data
        .poles
        .iter()
        .map(|&k| exponent(x, t, k).re)
        .fold(f64::NEG_INFINITY, f64::max);
    // The pairwise exponent for (j, m) is E_j + conj(E_m); its largest real part is 2 max Re E_j.
    let pair = 2.0 * worst;
    if pair > limit {
        return Err(Error::DomainWindow {
            x,
            t,
            exponent: pair,
            limit,
        });
    }
    Ok(())
}

/// Block matrix `μ_{mℓ} = δ_{mℓ} I − λ Σ_j e^{2i(k_j − k_m*)x + 4i(k_j² − k_m*²)t}
/// C_m†C_j / ((k_ℓ* − k_j)(k_j − k_m*))` of order `J·n`.
pub fn mu_matrix(x: f64, t: f64, data: &SpectralData) -> Result<CMatrix> {
    mu_matrix_with(x, t, data, &EvalOptions::default())
}

pub fn mu_matrix_with(x: f64, t: f64, data: &SpectralData, opts: &EvalOptions) -> Result<CMatrix> {
    check_line_data(data)?;
    check_window(x, t, data, opts.max_exponent)?;
    let (jn, n) = (data.len(), data.n);
    let lambda = data.lambda();
    let mut mu = identity(jn * n);
    for m in 0..jn {
        let km = data.poles[m].conj();
        let cm_dag = data.norming[m].adjoint();
        for j in 0..jn {
            let kj = data.poles[j];
            let e = (2.0 * I * (kj - km) * x + 4.0 * I * (kj * kj - km * km) * t).exp();
            let gram = &cm_dag * &data.norming[j];
            for l in 0..jn {
                let coef = -lambda * e / ((data.poles[l].conj() - kj) * (kj - km));
                let mut block = mu.view_mut((m * n, l * n), (n, n));
                block += &gram * coef;
            }
        }
    }
    Ok(mu)
}

/// `R = 2iλ [I … I] μ⁻¹ col(C_j† e^{−2ik_j* x − 4ik_j*² t})` solved literally.
pub fn reconstruct_field_direct(x: f64, t: f64, data: &SpectralData) -> Result<CVector> {
    if data.is_empty() {
        return Ok(CVector::zeros(data.n));
    }
    let opts = EvalOptions::default();
    let mu = mu_matrix_with(x, t, data, &opts)?;
    let n = data.n;
    let mut rhs = CVector::zeros(data.len() * n);
    for (j, (&k, cj)) in data.poles.iter().zip(&data.norming).enumerate() {
        let e = (-2.0 * I * k.conj() * x - 4.0 * I * k.conj() * k.conj() * t).exp();
        rhs.rows_mut(j * n, n).copy_from(&(cj.adjoint() * e));
    }
    let inv = inverse_checked(&mu, opts.max_condition, "μ matrix")?;
    let y = inv * rhs;
    let mut r = CVector::zeros(n);
    for j in 0..data.len() {
        r += y.rows(j * n, n);
    }
    Ok(r * (2.0 * I * data.lambda()))
}

/// Reusable evaluator for `R(x,t)`; all `(x,t)`-independent work is done once.
#[derive(Debug, Clone)]
pub struct SolitonField {
    n: usize,
    lambda: f64,
    poles: Vec<C64>,
    norming: Vec<CRow>,
    log_norm: Vec<f64>,
    cauchy: CMatrix,
    cauchy_t_inv: CMatrix,
    rhs_base: CVector,
    opts: EvalOptions,
}

impl SolitonField {
    pub fn new(data: &SpectralData) -> Result<Self> {
        Self::with_options(data, EvalOptions::default())
    }

    pub fn with_options(data: &SpectralData, opts: EvalOptions) -> Result<Self> {
        check_line_data(data)?;
        let jn = data.len();
        let cauchy = CMatrix::from_fn(jn, jn, |j, l| {
            C64::from(1.0) / (data.poles[j] - data.poles[l].conj())
        });
        let cauchy_t_inv = if jn == 0 {
            CMatrix::zeros(0, 0)
        } else {
            inverse_checked(&cauchy.transpose(), opts.max_condition, "Cauchy matrix")?
        };
        let rhs_base = &cauchy_t_inv * CVector::from_element(jn, c(1.0, 0.0));
        Ok(SolitonField {
            n: data.n,
            lambda: data.lambda(),
            poles: data.poles.clone(),
            norming: data.norming.clone(),
            log_norm: data.norming.iter().map(|r| r.norm().ln()).collect(),
            cauchy,
            cauchy_t_inv,
            rhs_base,
            opts,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn poles(&self) -> &[C64] {
        &self.poles
    }

    pub fn options(&self) -> &EvalOptions {
        &self.opts
    }

    /// Evaluates `R(x,t)` via the balanced `J × J` system
    /// `M̃ = D⁻¹((Kᵀ)⁻¹ + λH)D⁻¹`, `H_{jℓ} = c̃_j c̃_ℓ† K_{jℓ}`,
    /// `K_{jℓ} = 1/(k_j − k_ℓ*)`, `c̃_j = C_j e^{2iφ_j}`, `D = diag(max(1, |c̃_j|))`.
    pub fn eval(&self, x: f64, t: f64) -> Result<CVector> {
        let jn = self.poles.len();
        if jn == 0 {
            return Ok(CVector::zeros(self.n));
        }
        let exps: Vec<C64> = self.poles.iter().map(|&k| exponent(x, t, k)).collect();
        let worst = exps.iter().map(|e| e.re).fold(f64::NEG_INFINITY, f64::max);
        if 2.0 * worst > self.opts.max_exponent {
            return Err(Error::DomainWindow {
                x,
                t,
                exponent: 2.0 * worst,
                limit: self.opts.max_exponent,
            });
        }

        // Log-space balancing: u_j = c̃_j / d_j with d_j = e^{s_j} never overflows.
        let shifts: Vec<f64> = exps
            .iter()
            .zip(&self.log_norm)
            .map(|(e, ln_c)| (ln_c + e.re).max(0.0))
            .collect();
        let u: Vec<CRow> = self
            .norming
            .iter()
            .zip(exps.iter().zip(&shifts))
            .map(|(cj, (e, s))| cj * (e - s).exp())
            .collect();

        let m = CMatrix::from_fn(jn, jn, |j, l| {
            let gram = (&u[j] * u[l].adjoint())[(0, 0)];
            self.cauchy_t_inv[(j, l)] * (-(shifts[j] + shifts[l])).exp()
                + self.lambda * gram * self.cauchy[(j, l)]
        });
        let rhs = CVector::from_fn(jn, |j, _| self.rhs_base[j] * (-shifts[j]).exp());
        let w = inverse_checked(&m, self.opts.max_condition, "reduced soliton system")? * rhs;

        let mut r = CVector::zeros(self.n);
        for (uj, wj) in u.iter().zip(w.iter()) {
            r += uj.adjoint() * *wj;
        }
        Ok(r * (2.0 * I * self.lambda))
    }
}

/// `R(x,t)` for the given data.
pub fn reconstruct_field(x: f64, t: f64, data: &SpectralData) -> Result<CVector> {
    SolitonField::new(data)?.eval(x, t)
}

/// Uniform axis `min + i (max − min)/(count − 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Axis {
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl Axis {
    pub fn new(min: f64, max: f64, count: usize) -> Result<Self> {
        let axis = Axis { min, max, count };
        axis.validate()?;
        Ok(axis)
    }

    pub fn point(v: f64) -> Self {
        Axis {
            min: v,
            max: v,
            count: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.min.is_finite() && self.max.is_finite()) {
            return Err(Error::InvalidGrid("axis bounds must be finite".into()));
        }
        match self.count {
            0 => Err(Error::InvalidGrid("axis needs at least one point".into())),
            1 if self.min != self.max => Err(Error::InvalidGrid(
                "single-point axis must have min = max".into(),
            )),
            c if c > 1 && !(self.max > self.min) => Err(Error::InvalidGrid(format!(
                "axis must be strictly increasing, got [{}, {}]",
                self.min, self.max
            ))),
            _ => Ok(()),
        }
    }

    pub fn step(&self) -> f64 {
        if self.count > 1 {
            (self.max - self.min) / (self.count - 1) as f64
        } else {
            0.0
        }
    }

    pub fn value(&self, i: usize) -> f64 {
        if i + 1 == self.count {
            self.max
        } else {
            self.min + i as f64 * self.step()
        }
    }

    pub fn values(&self) -> Vec<f64> {
        (0..self.count).map(|i| self.value(i)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldSample {
    pub x: f64,
    pub t: f64,
    pub r: CVector,
}

/// Field values on a rectangular lattice, stored t-major (x varies fastest).
#[derive(Debug, Clone, PartialEq)]
pub struct FieldGrid {
    pub x_axis: Axis,
    pub t_axis: Axis,
    pub n: usize,
    pub values: Vec<CVector>,
}

impl FieldGrid {
    pub fn get(&self, ix: usize, it: usize) -> &CVector {
        &self.values[it * self.x_axis.count + ix]
    }

    pub fn samples(&self) -> impl Iterator<Item = FieldSample> + '_ {
        self.values
            .iter()
            .enumerate()
            .map(move |(idx, r)| FieldSample {
                x: self.x_axis.value(idx % self.x_axis.count),
                t: self.t_axis.value(idx / self.x_axis.count),
                r: r.clone(),
            })
    }

    /// Largest `√(Σ_j |R_j|²)` over the grid.
    pub fn max_total(&self) -> f64 {
        self.values.iter().map(|r| r.norm()).fold(0.0, f64::max)
    }
}

/// Evaluates the field on every lattice point in parallel. The result is
/// independent of scheduling; on failure the error of the first point in
/// storage order is reported.
pub fn field_grid(data: &SpectralData, x_axis: Axis, t_axis: Axis) -> Result<FieldGrid> {
    x_axis.validate()?;
    t_axis.validate()?;
    let field = SolitonField::new(data)?;
    field_grid_with(&field, x_axis, t_axis)
}

pub fn field_grid_with(field: &SolitonField, x_axis: Axis, t_axis: Axis) -> Result<FieldGrid> {
    let total = x_axis.count * t_axis.count;
    let results: Vec<Result<CVector>> = (0..total)
        .into_par_iter()
        .map(|idx| {
            let x = x_axis.value(idx % x_axis.count);
            let t = t_axis.value(idx / x_axis.count);
            field.eval(x, t).map_err(|e| Error::AtPoint {
                x,
                t,
                source: Box::new(e),
            })
        })
        .collect();
    let values = results.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(FieldGrid {
        x_axis,
        t_axis,
        n: field.n(),
        values,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Peak {
    /// `None` when the field vanishes on the whole window.
    pub x_peak: Option<f64>,
    pub amplitudes: Vec<f64>,
    pub total: f64,
}

fn total_sq(field: &SolitonField, x: f64, t: f64) -> Result<f64> {
    Ok(field.eval(x, t)?.norm_squared())
}

/// Locates the maximum of `Σ_j |R_j(x,t)|²` on `window`: grid argmax at the
/// given spacing (default `width/20`), then repeated three-point parabolic
/// refinement on shrinking stencils.
pub fn peak_scan_field(
    field: &SolitonField,
    t: f64,
    window: (f64, f64),
    spacing: Option<f64>,
) -> Result<Peak> {
    let (lo, hi) = window;
    if !(hi > lo) {
        return Err(Error::InvalidGrid(format!(
            "empty scan window [{lo}, {hi}]"
        )));
    }
    let min_width = field
        .poles()
        .iter()
        .map(|&k| soliton_width(k))
        .fold(f64::INFINITY, f64::min);
    let h = spacing.unwrap_or(if min_width.is_finite() {
        min_width / 20.0
    } else {
        (hi - lo) / 100.0
    });
    let count = (((hi - lo) / h).ceil() as usize).max(2) + 1;
    let axis = Axis::new(lo, hi, count)?;
    let h = axis.step();

    let values: Vec<Result<f64>> = (0..count)
        .into_par_iter()
        .map(|i| total_sq(field, axis.value(i), t))
        .collect();
    let values = values.into_iter().collect::<Result<Vec<_>>>()?;

    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    if values[best] == 0.0 {
        return Ok(Peak {
            x_peak: None,
            amplitudes: vec![0.0; field.n()],
            total: 0.0,
        });
    }
    if best == 0 || best == count - 1 {
        return Err(Error::PeakOnWindowEdge {
            x: axis.value(best),
            lo,
            hi,
        });
    }

    let mut x = axis.value(best);
    let mut step = h;
    let (mut fm, mut f0, mut fp) = (values[best - 1], values[best], values[best + 1]);
    for _ in 0..8 {
        let curvature = fm - 2.0 * f0 + fp;
        let shift = if curvature < 0.0 {
            (0.5 * step * (fm - fp) / curvature).clamp(-step, step)
        } else {
            0.0
        };
        x += shift;
        if step < 1e-6 * min_width.min(1.0) {
            break;
        }
        step /= 10.0;
        fm = total_sq(field, x - step, t)?;
        f0 = total_sq(field, x, t)?;
        fp = total_sq(field, x + step, t)?;
    }

    let r = field.eval(x, t)?;
    Ok(Peak {
        x_peak: Some(x),
        amplitudes: r.iter().map(|z| z.norm()).collect(),
        total: r.norm(),
    })
}

pub fn peak_scan(data: &SpectralData, t: f64, window: (f64, f64)) -> Result<Peak> {
    peak_scan_field(&SolitonField::new(data)?, t, window, None)
}
