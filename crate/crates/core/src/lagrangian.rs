//! Hermitian symplectic forms, Lagrangian frames, the Cayley chart, phase lifts
//! of the projective action and fibred rotation numbers.
//!
//! Forms are stored together with a congruence witness `P` such that
//! `S = P* J P` for the canonical `J = [[0, -I], [I, 0]]`; every chart
//! computation happens in the pulled-back coordinates `PΛ`.

use num_complex::Complex64;
use serde::Serialize;
use std::f64::consts::PI;

use crate::cocycles::{iterate, Cocycle, CocycleKind};
use crate::error::{Error, Result};
use crate::linalg::{self, cr, CMat, I};
use crate::operators::TrigPoly;

#[derive(Clone, Debug)]
pub struct SymplecticForm {
    s: CMat,
    p: CMat,
    p_inv: CMat,
}

impl SymplecticForm {
    pub fn standard(m: usize) -> Self {
        SymplecticForm { s: linalg::j_canonical(m), p: linalg::eye(2 * m), p_inv: linalg::eye(2 * m) }
    }

    /// Form with a known witness; checks `P* J P = S`.
    pub fn with_witness(s: CMat, p: CMat) -> Result<Self> {
        let m = s.nrows() / 2;
        let j = linalg::j_canonical(m);
        let res = linalg::max_abs(&(p.adjoint() * &j * &p - &s));
        if res > 1e-10 * linalg::max_abs(&s).max(1.0) {
            return Err(Error::InvalidInput(format!("witness does not pull J back to S ({res:.2e})")));
        }
        let p_inv = linalg::inverse(&p)?;
        Ok(SymplecticForm { s, p, p_inv })
    }

    /// Validates `S` and builds a witness from the eigen-decompositions of `iS` and `iJ`.
    pub fn from_matrix(s: CMat) -> Result<Self> {
        let n = s.nrows();
        if !n.is_multiple_of(2) || n != s.ncols() {
            return Err(Error::InvalidInput("form must be square of even size".into()));
        }
        let scale = linalg::max_abs(&s).max(f64::MIN_POSITIVE);
        if linalg::max_abs(&(&s + s.adjoint())) > 1e-12 * scale {
            return Err(Error::InvalidInput("form is not skew-Hermitian".into()));
        }
        let m = n / 2;
        let j = linalg::j_canonical(m);
        if linalg::max_abs(&(&s - &j)) < 1e-14 {
            return Ok(SymplecticForm::standard(m));
        }
        let (ds, us) = linalg::herm_eig(&(&s * I));
        let neg = ds.iter().filter(|&&x| x < 0.0).count();
        if ds.iter().any(|x| x.abs() < 1e-12 * scale) {
            return Err(Error::InvalidInput("form is degenerate".into()));
        }
        if neg != m {
            return Err(Error::InvalidInput(format!("form has signature ({}, {}), not ({m}, {m})", n - neg, neg)));
        }
        let (_, vj) = linalg::herm_eig(&(&j * I));
        let root = CMat::from_diagonal(&linalg::CVec::from_iterator(n, ds.iter().map(|d| cr(d.abs().sqrt()))));
        let p = vj * root * us.adjoint();
        SymplecticForm::with_witness(s, p)
    }

    pub fn matrix(&self) -> &CMat {
        &self.s
    }

    pub fn witness(&self) -> &CMat {
        &self.p
    }

    pub fn half_dim(&self) -> usize {
        self.s.nrows() / 2
    }

    /// `P A P^{-1}`, which preserves the canonical form when `A` preserves `S`.
    pub fn pull_matrix(&self, a: &CMat) -> CMat {
        &self.p * a * &self.p_inv
    }

    pub fn pull_frame(&self, l: &CMat) -> CMat {
        &self.p * l
    }

    pub fn push_frame(&self, l: &CMat) -> CMat {
        &self.p_inv * l
    }
}

/// A Lagrangian subspace given by a `2m × m` frame `[X; Y]`.
#[derive(Clone, Debug)]
pub struct LagrangianFrame {
    m: CMat,
    form: SymplecticForm,
}

pub fn make_frame(x: &CMat, y: &CMat, form: &SymplecticForm) -> Result<LagrangianFrame> {
    LagrangianFrame::from_stacked(linalg::vstack(x, y), form)
}

impl LagrangianFrame {
    pub fn from_stacked(m: CMat, form: &SymplecticForm) -> Result<Self> {
        let h = form.half_dim();
        if m.nrows() != 2 * h || m.ncols() != h {
            return Err(Error::InvalidInput(format!("frame must be {}×{h}", 2 * h)));
        }
        let sv = linalg::singular_values(&m);
        if sv[h - 1] <= 1e-10 * sv[0] {
            return Err(Error::InvalidInput("frame is rank deficient".into()));
        }
        let iso = linalg::max_abs(&(m.adjoint() * form.matrix() * &m));
        if iso > 1e-6 * sv[0] * sv[0] * linalg::max_abs(form.matrix()).max(1.0) {
            return Err(Error::InvalidInput(format!("frame is not isotropic ({iso:.2e})")));
        }
        Ok(LagrangianFrame { m, form: form.clone() })
    }

    /// The frame `P^{-1}[I; 0]`.
    pub fn horizontal(form: &SymplecticForm) -> Self {
        let h = form.half_dim();
        let hat = linalg::vstack(&linalg::eye(h), &CMat::zeros(h, h));
        LagrangianFrame { m: form.push_frame(&hat), form: form.clone() }
    }

    /// The frame `P^{-1}[0; I]`.
    pub fn vertical(form: &SymplecticForm) -> Self {
        let h = form.half_dim();
        let hat = linalg::vstack(&CMat::zeros(h, h), &linalg::eye(h));
        LagrangianFrame { m: form.push_frame(&hat), form: form.clone() }
    }

    /// `Λ_y = [cos πy; sin πy]` for the canonical 2-dimensional form.
    pub fn lambda_y(y: f64) -> Self {
        let m = CMat::from_column_slice(2, 1, &[cr((PI * y).cos()), cr((PI * y).sin())]);
        LagrangianFrame { m, form: SymplecticForm::standard(1) }
    }

    pub fn stacked(&self) -> &CMat {
        &self.m
    }

    pub fn form(&self) -> &SymplecticForm {
        &self.form
    }

    pub fn x(&self) -> CMat {
        let h = self.form.half_dim();
        self.m.rows(0, h).into_owned()
    }

    pub fn y(&self) -> CMat {
        let h = self.form.half_dim();
        self.m.rows(h, h).into_owned()
    }

    pub fn apply(&self, a: &CMat) -> LagrangianFrame {
        LagrangianFrame { m: linalg::orthonormalize(&(a * &self.m)), form: self.form.clone() }
    }
}

/// Block direct sum `M1 ⋄ M2` respecting the `[X; Y]` splitting of both factors.
pub fn diamond(a: &CMat, b: &CMat) -> CMat {
    let (p, r) = (a.nrows() / 2, b.nrows() / 2);
    let (ca, cb) = (a.ncols(), b.ncols());
    let mut out = CMat::zeros(2 * (p + r), ca + cb);
    // columns of a occupy the first ca, b the rest; rows interleave X and Y halves
    out.view_mut((0, 0), (p, ca)).copy_from(&a.rows(0, p));
    out.view_mut((p + r, 0), (p, ca)).copy_from(&a.rows(p, p));
    out.view_mut((p, ca), (r, cb)).copy_from(&b.rows(0, r));
    out.view_mut((2 * p + r, ca), (r, cb)).copy_from(&b.rows(r, r));
    out
}

/// Square-matrix version of [`diamond`]: `[[A1,0,B1,0],[0,A2,0,B2],[C1,0,D1,0],[0,C2,0,D2]]`.
pub fn diamond_matrix(a: &CMat, b: &CMat) -> CMat {
    let (p, r) = (a.nrows() / 2, b.nrows() / 2);
    let n = 2 * (p + r);
    let mut out = CMat::zeros(n, n);
    let ia = |i: usize| if i < p { i } else { i - p + p + r };
    let ib = |i: usize| if i < r { p + i } else { 2 * p + r + i - r };
    for i in 0..2 * p {
        for j in 0..2 * p {
            out[(ia(i), ia(j))] = a[(i, j)];
        }
    }
    for i in 0..2 * r {
        for j in 0..2 * r {
            out[(ib(i), ib(j))] = b[(i, j)];
        }
    }
    out
}

fn split_hat(hat: &CMat) -> (CMat, CMat) {
    let h = hat.nrows() / 2;
    let x = hat.rows(0, h).into_owned();
    let y = hat.rows(h, h).into_owned();
    (&x + &y * I, &x - &y * I)
}

/// `W = (X + iY)(X - iY)^{-1}` of a frame already in canonical coordinates.
pub fn cayley_hat(hat: &CMat) -> Result<CMat> {
    let (zp, zm) = split_hat(hat);
    let zmi = linalg::inverse(&zm).map_err(|_| Error::Numerical("X - iY is singular".into()))?;
    Ok(zp * zmi)
}

pub fn cayley_w(frame: &LagrangianFrame) -> Result<CMat> {
    cayley_hat(&frame.form.pull_frame(&frame.m))
}

/// `Σ arg λ_j(W) / 2π` with each argument in `[-π, π)`.
pub fn rho0_of_w(w: &CMat) -> f64 {
    linalg::eigvals(w).into_iter().map(linalg::arg_half_open).sum::<f64>() / (2.0 * PI)
}

pub fn rho0(frame: &LagrangianFrame) -> Result<f64> {
    Ok(rho0_of_w(&cayley_w(frame)?))
}

fn rho0_hat(hat: &CMat) -> Result<f64> {
    Ok(rho0_of_w(&cayley_hat(hat)?))
}

/// Unit complex number `det W` of a canonical-coordinate frame.
fn det_w_unit(hat: &CMat) -> Result<Complex64> {
    let (zp, zm) = split_hat(hat);
    let g = linalg::det(&zp) / linalg::det(&zm);
    if !g.is_finite() || g.norm() == 0.0 {
        return Err(Error::Numerical("degenerate Cayley determinant".into()));
    }
    Ok(g / g.norm())
}

/// Continuous lift of `arg det W(frame(s))` over `s ∈ [0, 1]`, in turns.
///
/// Segments are bisected until every raw increment stays below a quarter turn
/// and the two halves agree with the whole.
pub fn continue_arg(frame: &dyn Fn(f64) -> CMat, min_step: f64) -> Result<f64> {
    fn rec(
        f: &dyn Fn(f64) -> CMat,
        s0: f64,
        s1: f64,
        u0: Complex64,
        u1: Complex64,
        min_step: f64,
        depth: usize,
    ) -> Result<f64> {
        let sm = 0.5 * (s0 + s1);
        let um = det_w_unit(&f(sm))?;
        let a = (um / u0).arg();
        let b = (u1 / um).arg();
        let whole = (u1 / u0).arg();
        let quarter = PI / 4.0;
        if a.abs() < quarter && b.abs() < quarter && (a + b - whole).abs() < 1e-9 {
            return Ok(a + b);
        }
        if s1 - s0 < min_step || depth > 60 {
            return Err(Error::StepUnderflow(s0));
        }
        Ok(rec(f, s0, sm, u0, um, min_step, depth + 1)? + rec(f, sm, s1, um, u1, min_step, depth + 1)?)
    }
    let n = 8;
    let mut total = 0.0;
    let mut prev = det_w_unit(&frame(0.0))?;
    for i in 0..n {
        let (s0, s1) = (i as f64 / n as f64, (i + 1) as f64 / n as f64);
        let next = det_w_unit(&frame(s1))?;
        total += rec(frame, s0, s1, prev, next, min_step, 0)?;
        prev = next;
    }
    Ok(total / (2.0 * PI))
}

/// Polar path `s ↦ Q^s H^s` from the identity to `A = QH`, in canonical coordinates.
pub struct PolarPath {
    z: CMat,
    vals: Vec<Complex64>,
    h2: CMat,
}

impl PolarPath {
    pub fn new(a_hat: &CMat) -> Result<Self> {
        let h2 = a_hat.adjoint() * a_hat;
        let h = linalg::herm_pow(&h2, 0.5);
        let q = a_hat * linalg::inverse(&h)?;
        let (z, vals) = linalg::normal_eig(&q);
        Ok(PolarPath { z, vals, h2 })
    }

    pub fn at(&self, s: f64) -> CMat {
        linalg::unitary_pow(&self.z, &self.vals, s) * linalg::herm_pow(&self.h2, 0.5 * s)
    }
}

/// `φ[A](Λ)` along the polar path of `A`.
pub fn phase_increment(a: &CMat, frame: &LagrangianFrame) -> Result<f64> {
    let form = &frame.form;
    let a_hat = form.pull_matrix(a);
    let l_hat = linalg::orthonormalize(&form.pull_frame(&frame.m));
    phase_increment_hat(&a_hat, &l_hat)
}

fn phase_increment_hat(a_hat: &CMat, l_hat: &CMat) -> Result<f64> {
    let path = PolarPath::new(a_hat)?;
    continue_arg(&|s| path.at(s) * l_hat, 1e-12)
}

/// `φ` along an arbitrary path of matrices starting at the identity.
pub fn phase_along_path(path: &dyn Fn(f64) -> CMat, frame: &LagrangianFrame) -> Result<f64> {
    let form = &frame.form;
    let l_hat = linalg::orthonormalize(&form.pull_frame(&frame.m));
    continue_arg(&|s| form.pull_matrix(&path(s)) * &l_hat, 1e-12)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Branch {
    /// Lift along the polar path of each step.
    Polar,
    /// Lift in energy, normalized by `φ(Λ_H) → 0` as `E → +∞`.
    Energy,
}

/// Energy-normalized phase of one step whose energy derivative has full rank `m`.
///
/// `φ^E(Λ) = -ρ_0(Λ) + (1/2π)[Σ Arg μ⁻ - Σ Arg μ⁺]`, where `μ^±` are the
/// eigenvalues of `Z_±^{-1} Z_±'` for `Z_± = X̂ ± iŶ` of `A^E Λ`; this is the exact
/// lift of `arg det W` from `E = +∞`, where `A^E Λ` tends to `Λ_H`.
fn energy_step_full_rank(a_hat: &CMat, a1_hat: &CMat, l_hat: &CMat) -> Result<f64> {
    let img = a_hat * l_hat;
    let dimg = a1_hat * l_hat;
    let (zp, zm) = split_hat(&img);
    let (zp1, zm1) = split_hat(&dimg);
    let mup = linalg::eigvals(&linalg::solve(&zp, &zp1)?);
    let mum = linalg::eigvals(&linalg::solve(&zm, &zm1)?);
    let scale = mup.iter().chain(mum.iter()).fold(0.0_f64, |a, z| a.max(z.norm()));
    let tol = 1e-12 * scale.max(f64::MIN_POSITIVE);
    let sp: f64 = mup.iter().filter(|z| z.norm() > tol).map(|z| z.arg()).sum();
    let sm: f64 = mum.iter().filter(|z| z.norm() > tol).map(|z| z.arg()).sum();
    Ok(-rho0_hat(l_hat)? + (sm - sp) / (2.0 * PI))
}

/// Energy-normalized phase of a single long-range step (rank-one energy dependence).
///
/// The value at `Λ_H` comes from the closed form; other frames are reached by
/// continuation along the path `W_t = W^t` from `Λ_H`.
fn energy_step_rank_one(a_hat: &CMat, a1_hat: &CMat, l_hat: &CMat) -> Result<f64> {
    let h = l_hat.ncols();
    let lh = linalg::vstack(&linalg::eye(h), &CMat::zeros(h, h));
    let base = energy_step_full_rank(a_hat, a1_hat, &lh)?;
    let w = cayley_hat(l_hat)?;
    let (z, vals) = linalg::normal_eig(&w);
    let args: Vec<f64> = vals.iter().map(|&v| linalg::arg_half_open(v)).collect();
    let frame_at = |t: f64| -> CMat {
        let d = CMat::from_diagonal(&linalg::CVec::from_iterator(
            h,
            args.iter().map(|&a| Complex64::from_polar(1.0, t * a)),
        ));
        let wt = &z * d * z.adjoint();
        let x = (&wt + linalg::eye(h)) * cr(0.5);
        let y = (&wt - linalg::eye(h)) * Complex64::new(0.0, -0.5);
        a_hat * linalg::vstack(&x, &y)
    };
    let moved = continue_arg(&frame_at, 1e-12)?;
    let rho = args.iter().sum::<f64>() / (2.0 * PI);
    Ok(base + moved - rho)
}

struct StepData {
    a_hat: CMat,
    a1_hat: Option<CMat>,
    full_rank: bool,
}

/// Cocycle steps as they are consumed by the phase machinery; long-range cocycles
/// of degree `d ≥ 2` are grouped into `d`-step blocks when possible.
fn steps(c: &Cocycle, x: f64, k: usize, branch: Branch) -> Result<Vec<(f64, StepData, usize)>> {
    let form = c
        .form
        .as_ref()
        .ok_or_else(|| Error::InvalidInput("cocycle carries no symplectic form".into()))?;
    let mut out = Vec::new();
    let group = match (&c.kind, branch) {
        (CocycleKind::LongRange { v, .. }, Branch::Energy) => v.degree(),
        _ => 1,
    };
    let dual = match (&c.kind, group > 1) {
        (CocycleKind::LongRange { v, w, e }, true) => Some(crate::cocycles::dual_cocycle(v, w, *e, c.freq.clone())?),
        _ => None,
    };
    let mut j = 0usize;
    while j < k {
        let xj = c.freq.shift(x, j as i64);
        if group > 1 && j + group <= k {
            if let Some(dual) = &dual {
                let a = dual.eval(xj, 0.0);
                let a1 = dual.energy_derivative(xj).expect("dual is an energy family");
                out.push((
                    xj,
                    StepData { a_hat: form.pull_matrix(&a), a1_hat: Some(form.pull_matrix(&a1)), full_rank: true },
                    group,
                ));
                j += group;
                continue;
            }
        }
        let a = c.eval(xj, 0.0);
        let a1 = if branch == Branch::Energy { c.energy_derivative(xj) } else { None };
        if branch == Branch::Energy && a1.is_none() {
            return Err(Error::InvalidInput("energy branch needs an energy family".into()));
        }
        let full_rank = c.energy_rank() == Some(c.half_dim());
        out.push((
            xj,
            StepData { a_hat: form.pull_matrix(&a), a1_hat: a1.map(|m| form.pull_matrix(&m)), full_rank },
            1,
        ));
        j += 1;
    }
    Ok(out)
}

fn step_phase(s: &StepData, l_hat: &CMat, branch: Branch) -> Result<f64> {
    match branch {
        Branch::Polar => phase_increment_hat(&s.a_hat, l_hat),
        Branch::Energy => {
            let a1 = s.a1_hat.as_ref().expect("energy data present");
            if s.full_rank {
                energy_step_full_rank(&s.a_hat, a1, l_hat)
            } else {
                energy_step_rank_one(&s.a_hat, a1, l_hat)
            }
        }
    }
}

/// `φ_{x,k}(Λ)`, summed step by step with re-orthonormalized frames.
pub fn phase_iterate(c: &Cocycle, x: f64, k: usize, frame: &LagrangianFrame, branch: Branch) -> Result<f64> {
    Ok(phase_iterate_full(c, x, k, frame, branch)?.0)
}

/// `φ_{x,k}(Λ)` together with an orthonormal canonical-coordinate frame of `A_k(x)Λ`.
pub fn phase_iterate_full(
    c: &Cocycle,
    x: f64,
    k: usize,
    frame: &LagrangianFrame,
    branch: Branch,
) -> Result<(f64, CMat)> {
    let form = c
        .form
        .as_ref()
        .ok_or_else(|| Error::InvalidInput("cocycle carries no symplectic form".into()))?;
    let mut l_hat = linalg::orthonormalize(&form.pull_frame(frame.stacked()));
    let mut total = 0.0;
    for (_, s, _) in steps(c, x, k, branch)? {
        total += step_phase(&s, &l_hat, branch)?;
        l_hat = linalg::orthonormalize(&(&s.a_hat * &l_hat));
    }
    Ok((total, l_hat))
}

/// Arguments in `[-π, π)` of the eigenvalues of `W` for a canonical-coordinate frame.
pub fn cayley_args(hat: &CMat) -> Result<Vec<f64>> {
    Ok(linalg::eigvals(&cayley_hat(hat)?).into_iter().map(linalg::arg_half_open).collect())
}

/// Default branch: energy normalization for energy families, polar otherwise.
pub fn default_branch(c: &Cocycle) -> Branch {
    if c.is_energy_family() {
        Branch::Energy
    } else {
        Branch::Polar
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct RotationEstimate {
    pub rho: f64,
    pub err: f64,
    pub steps: usize,
}

/// `ρ = φ_{x,k}(Λ)/k` with error bar `m/k`.
///
/// For a rational frequency `k` is rounded up to whole periods, and when the
/// period monodromy has an expanding invariant Lagrangian the value is read off
/// one period on it, which is exact.
pub fn rotation_number(c: &Cocycle, x: f64, k_max: usize, frame: &LagrangianFrame) -> Result<RotationEstimate> {
    if k_max == 0 {
        return Err(Error::InvalidInput("k_max must be positive".into()));
    }
    let branch = default_branch(c);
    let m = c.half_dim() as f64;
    if let Some(r) = c.freq.as_rational() {
        let q = r.q as usize;
        if let Some(lu) = unstable_lagrangian(c, x, q, frame)? {
            let phi = phase_iterate(c, x, q, &lu, branch)?;
            return Ok(RotationEstimate { rho: phi / q as f64, err: 0.0, steps: q });
        }
        let k = k_max.div_ceil(q) * q;
        let phi = phase_iterate(c, x, k, frame, branch)?;
        return Ok(RotationEstimate { rho: phi / k as f64, err: m / k as f64, steps: k });
    }
    let phi = phase_iterate(c, x, k_max, frame, branch)?;
    Ok(RotationEstimate { rho: phi / k_max as f64, err: m / k_max as f64, steps: k_max })
}

/// Expanding invariant Lagrangian of the `q`-step monodromy, if it is hyperbolic.
pub fn unstable_lagrangian(c: &Cocycle, x: f64, q: usize, start: &LagrangianFrame) -> Result<Option<LagrangianFrame>> {
    let Some(form) = c.form.as_ref() else { return Ok(None) };
    let mono = iterate(c, x, 0.0, q as i64);
    let mut u = linalg::orthonormalize(start.stacked());
    for _ in 0..4000 {
        let next = linalg::orthonormalize(&(&mono * &u));
        let change = linalg::subspace_distance(&next, &u);
        u = next;
        if change < 1e-13 {
            break;
        }
    }
    if linalg::subspace_distance(&linalg::orthonormalize(&(&mono * &u)), &u) > 1e-10 {
        return Ok(None);
    }
    let restricted = u.adjoint() * &mono * &u;
    if linalg::eigvals(&restricted).iter().any(|z| z.norm() < 1.0 + 1e-8) {
        return Ok(None);
    }
    Ok(LagrangianFrame::from_stacked(u, form).ok())
}

/// Sampled energy dependence of `φ_{x,k}(Λ)`.
#[derive(Clone, Debug, Serialize)]
pub struct PhasePath {
    pub params: Vec<f64>,
    pub phases: Vec<f64>,
    pub anchor: String,
}

pub fn phase_path_energy(c: &Cocycle, x: f64, k: usize, frame: &LagrangianFrame, energies: &[f64]) -> Result<PhasePath> {
    let phases = energies
        .iter()
        .map(|&e| phase_iterate(&c.with_energy(e)?, x, k, frame, Branch::Energy))
        .collect::<Result<Vec<_>>>()?;
    Ok(PhasePath {
        params: energies.to_vec(),
        phases,
        anchor: "phi(Lambda_H) -> 0 as E -> +infinity".into(),
    })
}

/// Analytic `∂_t φ_{x,k}(Λ) = -(1/π) tr(R* M R)` given per-step derivatives.
///
/// `M = Σ_j Λ_j* A_j* S ∂A_j Λ_j` and `R = (X̂_k - iŶ_k)^{-1}`; frames are
/// renormalized along the way with the matching congruence on `M`.
pub fn phase_derivative_with(
    mats: &[(CMat, CMat)],
    form: &SymplecticForm,
    frame: &LagrangianFrame,
) -> Result<f64> {
    let s = form.matrix();
    let mut l = linalg::orthonormalize(frame.stacked());
    let h = l.ncols();
    let mut m = CMat::zeros(h, h);
    for (a, da) in mats {
        m += l.adjoint() * a.adjoint() * s * da * &l;
        let next = a * &l;
        let qr = next.qr();
        let t = qr.r();
        let ti = linalg::inverse(&t)?;
        m = ti.adjoint() * m * &ti;
        l = qr.q();
    }
    let hat = form.pull_frame(&l);
    let (_, zm) = split_hat(&hat);
    let r = linalg::inverse(&zm)?;
    let tr = (r.adjoint() * m * r).trace();
    Ok(-tr.re / PI)
}

/// `∂_E φ_{x,k}(Λ)` for an energy family.
pub fn phase_derivative_energy(c: &Cocycle, x: f64, k: usize, frame: &LagrangianFrame) -> Result<f64> {
    let form = c
        .form
        .as_ref()
        .ok_or_else(|| Error::InvalidInput("cocycle carries no symplectic form".into()))?;
    let mats: Vec<(CMat, CMat)> = (0..k)
        .map(|j| {
            let xj = c.freq.shift(x, j as i64);
            let da = c
                .energy_derivative(xj)
                .ok_or_else(|| Error::InvalidInput("not an energy family".into()));
            da.map(|d| (c.eval(xj, 0.0), d))
        })
        .collect::<Result<_>>()?;
    phase_derivative_with(&mats, form, frame)
}

/// `∂_t φ_{x,k}(Λ)` for a general family, matrices differentiated by central differences.
pub fn phase_derivative(
    family: &dyn Fn(f64) -> Cocycle,
    t: f64,
    x: f64,
    k: usize,
    frame: &LagrangianFrame,
    h: f64,
) -> Result<f64> {
    let c0 = family(t);
    let (cp, cm) = (family(t + h), family(t - h));
    let form = c0
        .form
        .clone()
        .ok_or_else(|| Error::InvalidInput("cocycle carries no symplectic form".into()))?;
    let mats: Vec<(CMat, CMat)> = (0..k)
        .map(|j| {
            let xj = c0.freq.shift(x, j as i64);
            let da = (cp.eval(xj, 0.0) - cm.eval(xj, 0.0)) / cr(2.0 * h);
            (c0.eval(xj, 0.0), da)
        })
        .collect();
    phase_derivative_with(&mats, &form, frame)
}

/// Krein matrix `(1/i) V* S V` of the columns of `v`.
pub fn krein_matrix(v: &CMat, s: &CMat) -> CMat {
    let g = v.adjoint() * s * v * Complex64::new(0.0, -1.0);
    (&g + g.adjoint()) * cr(0.5)
}

/// Inertia `(positive, negative)` of a Hermitian matrix.
pub fn inertia(g: &CMat, tol: f64) -> (usize, usize) {
    let vals = linalg::herm_eigvals(g);
    (vals.iter().filter(|&&x| x > tol).count(), vals.iter().filter(|&&x| x < -tol).count())
}

/// Rotation by angle `2πs` as a 2×2 matrix.
pub fn rotation_matrix(s: f64) -> CMat {
    let t = 2.0 * PI * s;
    linalg::real_matrix(2, 2, &[t.cos(), -t.sin(), t.sin(), t.cos()])
}

/// Energy above which the normalization regime applies for the long-range family.
pub fn anchor_energy(v: &TrigPoly, w: &TrigPoly) -> f64 {
    2.0 + v.l1_norm() + w.sup_norm() + 10.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cocycles::{constant_cocycle, longrange_cocycle, schrodinger_cocycle};
    use crate::operators::Frequency;

    #[test]
    fn frames_and_cayley() {
        let j = SymplecticForm::standard(1);
        let lh = make_frame(&linalg::eye(1), &CMat::zeros(1, 1), &j).unwrap();
        assert!((cayley_w(&lh).unwrap()[(0, 0)] - cr(1.0)).norm() < 1e-15);
        let lv = LagrangianFrame::vertical(&j);
        assert!((cayley_w(&lv).unwrap()[(0, 0)] + cr(1.0)).norm() < 1e-15);
        let q = LagrangianFrame::lambda_y(0.25);
        assert!((cayley_w(&q).unwrap()[(0, 0)] - I).norm() < 1e-15);
        assert!(make_frame(&linalg::eye(1), &linalg::eye(1), &j).is_ok());
        assert!(make_frame(&linalg::eye(1), &(linalg::eye(1) * I), &j).is_err());
    }

    #[test]
    fn rotation_increment() {
        for &s in &[0.05, 0.1, -0.2, 0.24] {
            for &y in &[0.0, 0.3, 0.77] {
                let phi = phase_increment(&rotation_matrix(s), &LagrangianFrame::lambda_y(y)).unwrap();
                assert!((phi - 2.0 * s).abs() < 1e-12, "s={s} y={y} phi={phi}");
            }
        }
        let phi = phase_increment(&linalg::eye(2), &LagrangianFrame::lambda_y(0.4)).unwrap();
        assert!(phi.abs() < 1e-14);
    }

    #[test]
    fn rotation_number_of_constant_rotation() {
        let c = constant_cocycle(rotation_matrix(1.0 / 6.0), Frequency::golden(), Some(SymplecticForm::standard(1)));
        let r = rotation_number(&c, 0.0, 300, &LagrangianFrame::lambda_y(0.1)).unwrap();
        assert!((r.rho - 1.0 / 3.0).abs() <= r.err);
        let id = constant_cocycle(linalg::eye(2), Frequency::golden(), Some(SymplecticForm::standard(1)));
        assert!(rotation_number(&id, 0.0, 50, &LagrangianFrame::lambda_y(0.1)).unwrap().rho.abs() < 1e-14);
    }

    #[test]
    fn generic_witness() {
        let s = CMat::from_row_slice(2, 2, &[cr(0.0), Complex64::new(-0.3, 0.4), Complex64::new(0.3, 0.4), cr(0.0)]);
        let f = SymplecticForm::from_matrix(s.clone()).unwrap();
        let j = linalg::j_canonical(1);
        assert!(linalg::max_abs(&(f.witness().adjoint() * j * f.witness() - s)) < 1e-12);
        assert!(SymplecticForm::from_matrix(CMat::from_diagonal(&linalg::CVec::from_vec(vec![I, I]))).is_err());
    }

    #[test]
    fn energy_step_matches_high_energy_normalization() {
        let v = TrigPoly::cosine(1.0);
        let w = TrigPoly::cosine(2.0);
        let e = anchor_energy(&v, &w);
        let c = longrange_cocycle(&v, &w, e, Frequency::golden()).unwrap();
        let lh = LagrangianFrame::horizontal(c.form.as_ref().unwrap());
        let phi = phase_iterate(&c, 0.3, 1, &lh, Branch::Energy).unwrap();
        assert!(phi.abs() < 0.05);
        let sc = schrodinger_cocycle(&w, 1e6, Frequency::golden());
        let phi = phase_iterate(&sc, 0.3, 5, &lh, Branch::Energy).unwrap();
        assert!(phi.abs() < 1e-5);
    }

    #[test]
    fn diamond_layout() {
        let a = linalg::real_matrix(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let b = linalg::real_matrix(2, 2, &[5.0, 6.0, 7.0, 8.0]);
        let d = diamond_matrix(&a, &b);
        let expect = linalg::real_matrix(
            4,
            4,
            &[1.0, 0.0, 2.0, 0.0, 0.0, 5.0, 0.0, 6.0, 3.0, 0.0, 4.0, 0.0, 0.0, 7.0, 0.0, 8.0],
        );
        assert!(linalg::max_abs(&(d - expect)) == 0.0);
    }
}
