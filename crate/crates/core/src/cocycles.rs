//! Transfer cocycles of finite-range operators: construction, iteration,
//! Lyapunov spectra, acceleration and the monotonicity form.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;
use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::lagrangian::SymplecticForm;
use crate::linalg::{self, cr, CMat, CVec, I};
use crate::operators::{dual_strip_matrices, Frequency, TrigPoly};

pub type MatrixFn = Arc<dyn Fn(f64, f64) -> CMat + Send + Sync>;

#[derive(Clone)]
pub enum CocycleKind {
    /// `[[E - v(x), -1], [1, 0]]`.
    Schrodinger { v: TrigPoly, e: f64 },
    /// Companion matrix of `Σ v̂_k u_{n+k} + w(x+nα) u_n = E u_n`.
    LongRange { v: TrigPoly, w: TrigPoly, e: f64 },
    /// Block transfer matrix of the strip operator; iterates at frequency `dα`.
    Dual { v: TrigPoly, w: TrigPoly, e: f64, alpha: f64 },
    Constant(CMat),
    Custom(MatrixFn),
}

impl fmt::Debug for CocycleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CocycleKind::Schrodinger { e, .. } => write!(f, "Schrodinger(E={e})"),
            CocycleKind::LongRange { v, e, .. } => write!(f, "LongRange(E={e}, d={})", v.degree()),
            CocycleKind::Dual { v, e, .. } => write!(f, "Dual(E={e}, d={})", v.degree()),
            CocycleKind::Constant(_) => write!(f, "Constant"),
            CocycleKind::Custom(_) => write!(f, "Custom"),
        }
    }
}

/// An analytic quasiperiodic cocycle `(α, A)`.
#[derive(Clone, Debug)]
pub struct Cocycle {
    pub dim: usize,
    pub freq: Frequency,
    pub form: Option<SymplecticForm>,
    pub kind: CocycleKind,
    /// Half-width of the strip on which `eval` is declared analytic and invertible.
    pub radius: f64,
}

fn strip_form(v: &TrigPoly) -> Result<SymplecticForm> {
    let d = v.degree();
    let (cm, _) = dual_strip_matrices(v, &TrigPoly::zero(), 0.0, cr(0.0), 0.0)?;
    let mut s = CMat::zeros(2 * d, 2 * d);
    s.view_mut((0, d), (d, d)).copy_from(&(-cm.adjoint()));
    s.view_mut((d, 0), (d, d)).copy_from(&cm);
    let p = linalg::direct_sum(&cm, &linalg::eye(d));
    SymplecticForm::with_witness(s, p)
}

pub fn schrodinger_cocycle(v: &TrigPoly, e: f64, freq: Frequency) -> Cocycle {
    Cocycle {
        dim: 2,
        freq,
        form: Some(SymplecticForm::standard(1)),
        kind: CocycleKind::Schrodinger { v: v.clone(), e },
        radius: 0.25,
    }
}

/// Long-range cocycle `L^{E,d}` of the operator with hopping `v` and potential `w`.
pub fn longrange_cocycle(v: &TrigPoly, w: &TrigPoly, e: f64, freq: Frequency) -> Result<Cocycle> {
    let form = strip_form(v)?;
    Ok(Cocycle {
        dim: 2 * v.degree(),
        freq,
        form: Some(form),
        kind: CocycleKind::LongRange { v: v.clone(), w: w.clone(), e },
        radius: 0.25,
    })
}

/// Dual cocycle `A^{E,d}`; `freq` is the base frequency α, iteration uses `dα`.
pub fn dual_cocycle(v: &TrigPoly, w: &TrigPoly, e: f64, freq: Frequency) -> Result<Cocycle> {
    let form = strip_form(v)?;
    let d = v.degree();
    Ok(Cocycle {
        dim: 2 * d,
        freq: freq.multiple(d as i64),
        form: Some(form),
        kind: CocycleKind::Dual { v: v.clone(), w: w.clone(), e, alpha: freq.value() },
        radius: 0.25,
    })
}

pub fn constant_cocycle(m: CMat, freq: Frequency, form: Option<SymplecticForm>) -> Cocycle {
    Cocycle { dim: m.nrows(), freq, form, kind: CocycleKind::Constant(m), radius: f64::INFINITY }
}

pub fn custom_cocycle(
    dim: usize,
    freq: Frequency,
    form: Option<SymplecticForm>,
    f: impl Fn(f64, f64) -> CMat + Send + Sync + 'static,
) -> Cocycle {
    Cocycle { dim, freq, form, kind: CocycleKind::Custom(Arc::new(f)), radius: 0.25 }
}

fn longrange_matrix(v: &TrigPoly, w: &TrigPoly, e: f64, z: Complex64) -> CMat {
    let d = v.degree();
    let n = 2 * d;
    let lead = v.coeff(d as i64);
    let mut m = CMat::zeros(n, n);
    for i in 0..n {
        let k = d as i64 - 1 - i as i64;
        m[(0, i)] = if k == 0 {
            (cr(e) - w.eval(z) - v.coeff(0)) / lead
        } else {
            -v.coeff(k) / lead
        };
    }
    for i in 1..n {
        m[(i, i - 1)] = cr(1.0);
    }
    m
}

fn dual_matrix(v: &TrigPoly, w: &TrigPoly, e: f64, alpha: f64, z: Complex64) -> CMat {
    let d = v.degree();
    let (cm, vm) = dual_strip_matrices(v, w, alpha, z, e).expect("degree checked at construction");
    let ci = linalg::inverse(&cm).expect("upper triangular with nonzero diagonal");
    let top_left = &ci * (CMat::identity(d, d) * cr(e) - vm);
    let top_right = -(&ci * cm.adjoint());
    let mut m = CMat::zeros(2 * d, 2 * d);
    m.view_mut((0, 0), (d, d)).copy_from(&top_left);
    m.view_mut((0, d), (d, d)).copy_from(&top_right);
    m.view_mut((d, 0), (d, d)).copy_from(&CMat::identity(d, d));
    m
}

impl Cocycle {
    /// `A(x + iε)`.
    pub fn eval(&self, x: f64, eps: f64) -> CMat {
        let z = Complex64::new(x, eps);
        match &self.kind {
            CocycleKind::Schrodinger { v, e } => CMat::from_row_slice(
                2,
                2,
                &[cr(*e) - v.eval(z), cr(-1.0), cr(1.0), cr(0.0)],
            ),
            CocycleKind::LongRange { v, w, e } => longrange_matrix(v, w, *e, z),
            CocycleKind::Dual { v, w, e, alpha } => dual_matrix(v, w, *e, *alpha, z),
            CocycleKind::Constant(m) => m.clone(),
            CocycleKind::Custom(f) => f(x, eps),
        }
    }

    pub fn energy(&self) -> Option<f64> {
        match &self.kind {
            CocycleKind::Schrodinger { e, .. }
            | CocycleKind::LongRange { e, .. }
            | CocycleKind::Dual { e, .. } => Some(*e),
            _ => None,
        }
    }

    /// The same family at another energy.
    pub fn with_energy(&self, e: f64) -> Result<Cocycle> {
        let mut c = self.clone();
        match &mut c.kind {
            CocycleKind::Schrodinger { e: ee, .. }
            | CocycleKind::LongRange { e: ee, .. }
            | CocycleKind::Dual { e: ee, .. } => *ee = e,
            _ => return Err(Error::InvalidInput("cocycle is not an energy family".into())),
        }
        Ok(c)
    }

    /// `∂_E A(x)`; these families are affine in E.
    pub fn energy_derivative(&self, _x: f64) -> Option<CMat> {
        match &self.kind {
            CocycleKind::Schrodinger { .. } => {
                Some(CMat::from_row_slice(2, 2, &[cr(1.0), cr(0.0), cr(0.0), cr(0.0)]))
            }
            CocycleKind::LongRange { v, .. } => {
                let mut m = CMat::zeros(self.dim, self.dim);
                let d = v.degree();
                m[(0, d - 1)] = cr(1.0) / v.coeff(d as i64);
                Some(m)
            }
            CocycleKind::Dual { v, .. } => {
                let d = v.degree();
                let (cm, _) = dual_strip_matrices(v, &TrigPoly::zero(), 0.0, cr(0.0), 0.0).ok()?;
                let ci = linalg::inverse(&cm).ok()?;
                let mut m = CMat::zeros(2 * d, 2 * d);
                m.view_mut((0, 0), (d, d)).copy_from(&ci);
                Some(m)
            }
            _ => None,
        }
    }

    /// Rank of `∂_E A`, when the family is an energy family.
    pub fn energy_rank(&self) -> Option<usize> {
        match &self.kind {
            CocycleKind::Schrodinger { .. } | CocycleKind::LongRange { .. } => Some(1),
            CocycleKind::Dual { v, .. } => Some(v.degree()),
            _ => None,
        }
    }

    pub fn is_energy_family(&self) -> bool {
        self.energy().is_some()
    }

    pub fn label(&self) -> String {
        format!("{:?}", self.kind)
    }

    pub fn half_dim(&self) -> usize {
        self.dim / 2
    }
}

/// `A_n(x)`; negative `n` gives `A_{-n}(x + nα)^{-1}`.
pub fn iterate(c: &Cocycle, x: f64, eps: f64, n: i64) -> CMat {
    let mut m = linalg::eye(c.dim);
    if n >= 0 {
        for j in 0..n {
            m = c.eval(c.freq.shift(x, j), eps) * m;
        }
    } else {
        for j in 1..=(-n) {
            let a = c.eval(c.freq.shift(x, -j), eps);
            m = linalg::inverse(&a).expect("cocycle values are invertible") * m;
        }
    }
    m
}

#[derive(Clone, Debug, Serialize)]
pub struct LyapunovReport {
    pub exponents: Vec<f64>,
    pub n: usize,
    pub x_samples: usize,
    pub stderr: Vec<f64>,
}

/// Per-phase Lyapunov exponents from QR re-orthonormalization along one orbit.
pub fn orbit_exponents(c: &Cocycle, x: f64, eps: f64, n: usize) -> Vec<f64> {
    let dim = c.dim;
    let mut q = linalg::eye(dim);
    let mut acc = vec![0.0; dim];
    for j in 0..n {
        let m = c.eval(c.freq.shift(x, j as i64), eps) * &q;
        let qr = m.qr();
        let r = qr.r();
        for (i, a) in acc.iter_mut().enumerate() {
            *a += r[(i, i)].norm().ln();
        }
        q = qr.q();
    }
    let mut out: Vec<f64> = acc.iter().map(|a| a / n as f64).collect();
    out.sort_by(|a, b| b.total_cmp(a));
    out
}

pub fn lyapunov_exponents(c: &Cocycle, n: usize, x_samples: usize, eps: f64) -> Result<LyapunovReport> {
    if n == 0 || x_samples == 0 {
        return Err(Error::InvalidInput("lyapunov needs n ≥ 1 and at least one phase".into()));
    }
    let per: Vec<Vec<f64>> = (0..x_samples)
        .into_par_iter()
        .map(|i| orbit_exponents(c, (i as f64 + 0.5) / x_samples as f64, eps, n))
        .collect();
    Ok(summarize_exponents(&per, n))
}

pub fn summarize_exponents(per: &[Vec<f64>], n: usize) -> LyapunovReport {
    let k = per.len();
    let dim = per[0].len();
    let mut mean = vec![0.0; dim];
    let mut se = vec![0.0; dim];
    for j in 0..dim {
        let m = per.iter().map(|p| p[j]).sum::<f64>() / k as f64;
        mean[j] = m;
        if k > 1 {
            let var = per.iter().map(|p| (p[j] - m).powi(2)).sum::<f64>() / (k - 1) as f64;
            se[j] = (var / k as f64).sqrt();
        }
    }
    LyapunovReport { exponents: mean, n, x_samples: k, stderr: se }
}

#[derive(Clone, Debug, Serialize)]
pub struct LeOptions {
    pub n: usize,
    pub x_samples: usize,
}

impl Default for LeOptions {
    fn default() -> Self {
        LeOptions { n: 20000, x_samples: 16 }
    }
}

/// Sum of the top `m` exponents of the complexified cocycle at strip height `eps`.
pub fn complexified_exponent(c: &Cocycle, eps: f64, opts: &LeOptions) -> Result<f64> {
    let rep = lyapunov_exponents(c, opts.n, opts.x_samples, eps)?;
    Ok(rep.exponents[..c.half_dim().max(1)].iter().sum())
}

#[derive(Clone, Debug, Serialize)]
pub struct AccelerationReport {
    pub e: Option<f64>,
    pub eps_grid: Vec<f64>,
    pub l_eps: Vec<f64>,
    pub slope: f64,
    pub omega: i64,
    pub residual: f64,
    pub turning_points: Vec<f64>,
    /// Slope after the first turning point, or 1 when none lies in the strip.
    pub omega_bar: i64,
    pub strip_may_be_small: bool,
    pub convex: bool,
}

/// Default ε-grid: 12 points in `(0, 0.4·radius]`.
pub fn default_eps_grid(radius: f64) -> Vec<f64> {
    let r = if radius.is_finite() { radius } else { 0.25 };
    (1..=12).map(|i| 0.4 * r * i as f64 / 12.0).collect()
}

fn line_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let icpt = my - slope * mx;
    let sse = xs.iter().zip(ys).map(|(x, y)| (y - icpt - slope * x).powi(2)).sum();
    (slope, icpt, sse)
}

/// Splits a sampled convex piecewise-linear profile into segments.
///
/// Returns the slope of each segment and the turning points between them.
pub fn segment_profile(xs: &[f64], ys: &[f64], jump: f64) -> (Vec<f64>, Vec<f64>) {
    let n = xs.len();
    let (s_all, _, _) = line_fit(xs, ys);
    if n < 4 {
        return (vec![s_all], vec![]);
    }
    let mut best: Option<(usize, f64, f64, f64, f64, f64)> = None;
    for split in 2..=n - 2 {
        let (s1, b1, e1) = line_fit(&xs[..split], &ys[..split]);
        let (s2, b2, e2) = line_fit(&xs[split..], &ys[split..]);
        let sse = e1 + e2;
        if best.is_none_or(|b| sse < b.1) {
            best = Some((split, sse, s1, b1, s2, b2));
        }
    }
    let (split, _, s1, b1, s2, b2) = best.expect("n ≥ 4");
    if (s2 - s1).abs() < jump {
        return (vec![s_all], vec![]);
    }
    let tp = if (s1 - s2).abs() > 0.0 { (b2 - b1) / (s1 - s2) } else { xs[split] };
    let (mut left_s, mut left_t) = segment_profile(&xs[..split], &ys[..split], jump);
    let (right_s, right_t) = segment_profile(&xs[split..], &ys[split..], jump);
    left_t.push(tp);
    left_t.extend(right_t);
    left_s.extend(right_s);
    (left_s, left_t)
}

/// Complexified Lyapunov exponent on an ε-grid, with acceleration and turning points.
pub fn complexified_le(c: &Cocycle, eps_grid: &[f64], opts: &LeOptions) -> Result<AccelerationReport> {
    if eps_grid.is_empty() {
        return Err(Error::InvalidInput("empty ε grid".into()));
    }
    let mut xs = vec![0.0];
    xs.extend(eps_grid.iter().copied().filter(|&e| e > 0.0));
    let ys: Vec<f64> = xs
        .iter()
        .map(|&e| complexified_exponent(c, e, opts))
        .collect::<Result<_>>()?;
    let (slopes, tps) = segment_profile(&xs, &ys, PI);
    let k = tps.len();
    // slope of the first segment, fitted on the points left of the first turning point
    let first_end = tps.first().map_or(xs.len(), |&t| xs.iter().filter(|&&x| x <= t).count().max(2));
    let (slope, _, _) = line_fit(&xs[..first_end], &ys[..first_end]);
    let omega = (slope / (2.0 * PI)).round() as i64;
    let residual = (slope / (2.0 * PI) - omega as f64).abs();
    let omega_bar = if k > 0 { (slopes[1] / (2.0 * PI)).round() as i64 } else { 1 };
    let scale = ys.iter().fold(1.0_f64, |a, y| a.max(y.abs()));
    let convex = ys.windows(3).zip(xs.windows(3)).all(|(y, x)| {
        let d1 = (y[1] - y[0]) / (x[1] - x[0]);
        let d2 = (y[2] - y[1]) / (x[2] - x[1]);
        d2 - d1 >= -1e-2 * scale
    });
    Ok(AccelerationReport {
        e: c.energy(),
        eps_grid: xs,
        l_eps: ys,
        slope,
        omega,
        residual,
        turning_points: tps,
        omega_bar,
        strip_may_be_small: k == 0,
        convex,
    })
}

/// Largest entry of `A*SA - S` over 64 phases.
pub fn check_symplectic(c: &Cocycle) -> Result<f64> {
    let form = c
        .form
        .as_ref()
        .ok_or_else(|| Error::InvalidInput("cocycle carries no symplectic form".into()))?;
    let s = form.matrix();
    let mut worst = 0.0_f64;
    for i in 0..64 {
        let a = c.eval(i as f64 / 64.0 + 0.0123, 0.0);
        worst = worst.max(linalg::max_abs(&(a.adjoint() * s * &a - s)));
    }
    Ok(worst)
}

/// `Ψ = v* A* S ∂_E A v` with a central difference in E.
pub fn monotonicity_form(
    family: &dyn Fn(f64) -> CMat,
    s: &CMat,
    e: f64,
    v: &CVec,
    h: f64,
) -> Result<f64> {
    let iso = (v.adjoint() * s * v)[(0, 0)].norm();
    if iso > 1e-8 * v.norm_squared().max(1.0) {
        return Err(Error::InvalidInput(format!("vector is not isotropic (|v*Sv| = {iso:.3e})")));
    }
    let a = family(e);
    let da = (family(e + h) - family(e - h)) / cr(2.0 * h);
    let val = (v.adjoint() * a.adjoint() * s * da * v)[(0, 0)];
    Ok(val.re)
}

/// Monotonicity form of the `k`-step iterate of an energy family at phase `x`.
pub fn monotonicity_form_iterate(c: &Cocycle, x: f64, k: i64, v: &CVec, h: f64) -> Result<f64> {
    let form = c
        .form
        .as_ref()
        .ok_or_else(|| Error::InvalidInput("cocycle carries no symplectic form".into()))?;
    let e0 = c.energy().ok_or_else(|| Error::InvalidInput("not an energy family".into()))?;
    let fam = |e: f64| iterate(&c.with_energy(e).expect("energy family"), x, 0.0, k);
    monotonicity_form(&fam, form.matrix(), e0, v, h)
}

#[derive(Clone, Debug, Serialize)]
pub struct CohomologicalSolution {
    pub psi: TrigPoly,
    pub residual: f64,
    pub skipped: Vec<i64>,
}

/// Truncated solution of `ψ(x+α) - ψ(x) = ρ(x) - ρ̂_0`.
pub fn solve_cohomological(rho: &TrigPoly, alpha: f64, k_max: usize, threshold: f64) -> Result<CohomologicalSolution> {
    if k_max == 0 {
        return Err(Error::InvalidInput("truncation K must be at least 1".into()));
    }
    let kk = k_max.min(rho.degree());
    let mut coeffs = vec![cr(0.0); 2 * kk + 1];
    let mut skipped = Vec::new();
    for k in 1..=kk as i64 {
        let r = rho.coeff(k);
        if r.norm() == 0.0 {
            continue;
        }
        let den = (I * (2.0 * PI * k as f64 * alpha)).exp() - 1.0;
        if den.norm() < threshold {
            skipped.push(k);
            skipped.push(-k);
            continue;
        }
        let val = r / den;
        coeffs[kk + k as usize] = val;
        coeffs[kk - k as usize] = val.conj();
    }
    skipped.sort();
    let psi = TrigPoly::new(coeffs)?;
    let n = 1024;
    let r0 = rho.coeff(0).re;
    let residual = (0..n)
        .map(|i| {
            let x = i as f64 / n as f64;
            (psi.eval_real(x + alpha) - psi.eval_real(x) - (rho.eval_real(x) - r0)).abs()
        })
        .fold(0.0, f64::max);
    Ok(CohomologicalSolution { psi, residual, skipped })
}

#[derive(Clone, Debug, Serialize)]
pub struct DominationReport {
    pub dominated: bool,
    pub gap: f64,
}

/// Uniform gap test at split index `j` (1-based) over a phase grid.
///
/// Finite-time growth rates come from QR accumulation, so long products never overflow.
pub fn detect_dominated(c: &Cocycle, n: usize, j: usize, x_grid: usize, threshold: f64) -> Result<DominationReport> {
    if j == 0 || j >= c.dim || n == 0 || x_grid == 0 {
        return Err(Error::InvalidInput("split index must satisfy 1 ≤ j < dim".into()));
    }
    let gaps: Vec<f64> = (0..x_grid)
        .into_par_iter()
        .map(|i| {
            let f = orbit_exponents(c, i as f64 / x_grid as f64, 0.0, n);
            f[j - 1] - f[j]
        })
        .collect();
    let gap = gaps.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(DominationReport { dominated: gap >= threshold, gap })
}
