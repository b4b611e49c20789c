//! Invariant splittings of partially hyperbolic symplectic cocycles, symplectic
//! frames adapted to them, reduction to a 2×2 center cocycle and transport of
//! center frames in a parameter.
//!
//! Frames are assembled as `B = [u_1 … u_{m-1}, c_1 | s_1 … s_{m-1}, c_2]` with
//! `B* S B = J`, so the center occupies columns `m-1` and `2m-1`.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;
use std::f64::consts::PI;

use crate::cocycles::{orbit_exponents, Cocycle};
use crate::error::{Error, Result};
use crate::lagrangian::{self, diamond, inertia, krein_matrix, Branch, LagrangianFrame, SymplecticForm};
use crate::linalg::{self, cr, CMat, I};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Dims {
    pub u: usize,
    pub c: usize,
    pub s: usize,
}

impl Dims {
    /// `(m-1, 2, m-1)` for a cocycle on `C^{2m}`.
    pub fn center_two(dim: usize) -> Self {
        let h = dim / 2 - 1;
        Dims { u: h, c: 2, s: h }
    }

    pub fn total(&self) -> usize {
        self.u + self.c + self.s
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct BundleOptions {
    pub n_start: usize,
    pub n_max: usize,
    pub tol: f64,
}

impl Default for BundleOptions {
    fn default() -> Self {
        BundleOptions { n_start: 20, n_max: 20 * 1024, tol: 1e-9 }
    }
}

/// Unstable, center and stable frames on a set of phases.
#[derive(Clone, Debug)]
pub struct Splitting {
    pub dims: Dims,
    pub x_grid: Vec<f64>,
    pub eu: Vec<CMat>,
    pub ec: Vec<CMat>,
    pub es: Vec<CMat>,
    pub ecu: Vec<CMat>,
    pub ecs: Vec<CMat>,
    /// Lyapunov exponents along the orbit of the first phase.
    pub exponents: Vec<f64>,
    /// Largest Grassmannian distance between `A(x)E(x)` and `E(x+α)`.
    pub invariance_residual: f64,
    /// Largest condition number of `[E^u E^c E^s]`.
    pub condition: f64,
    pub iterations: usize,
}

#[derive(Clone, Debug)]
struct Bundles {
    eu: CMat,
    ecu: CMat,
    es: CMat,
    ecs: CMat,
    n: usize,
}

/// Dominant `k`-dimensional right singular subspace by orthogonal iteration.
///
/// Forming `M*M` would square the spread of singular values and lose the
/// directions below `σ_max·ε`, so `M` and `M*` are applied alternately instead.
fn top_right_singular(m: &CMat, k: usize) -> CMat {
    let n = m.ncols();
    let g = CMat::from_fn(n, k, |i, j| cr((1.0 + (i * k + j) as f64 * 0.754_877_666).sin()));
    let mut f = linalg::orthonormalize(&g);
    for _ in 0..3 {
        let l = linalg::orthonormalize(&(m * &f));
        f = linalg::orthonormalize(&(m.adjoint() * l));
    }
    f
}

fn start_steps(c: &Cocycle, y: f64, forward: bool) -> CMat {
    let mut m = linalg::eye(c.dim);
    for j in 0..20 {
        if forward {
            m = c.eval(c.freq.shift(y, j), 0.0) * m;
        } else {
            let a = c.eval(c.freq.shift(y, -j - 1), 0.0);
            m = linalg::inverse(&a).expect("cocycle values are invertible") * m;
        }
    }
    m
}

/// `k`-dimensional dominant subspace at `x` reached after `n` forward (or backward) steps.
fn push_to(c: &Cocycle, x: f64, n: usize, k: usize, forward: bool) -> CMat {
    if k == 0 {
        return CMat::zeros(c.dim, 0);
    }
    let sign = if forward { -1 } else { 1 };
    let y = c.freq.shift(x, sign * n as i64);
    let mut f = top_right_singular(&start_steps(c, y, forward), k);
    for j in 0..n as i64 {
        if forward {
            f = linalg::orthonormalize(&(c.eval(c.freq.shift(y, j), 0.0) * f));
        } else {
            let a = c.eval(c.freq.shift(y, -j - 1), 0.0);
            f = linalg::orthonormalize(&(linalg::inverse(&a).expect("invertible") * f));
        }
    }
    f
}

fn bundles_at(c: &Cocycle, x: f64, dims: Dims, opts: &BundleOptions) -> Result<Bundles> {
    let mut n = opts.n_start.max(1);
    let compute = |n: usize| Bundles {
        eu: push_to(c, x, n, dims.u, true),
        ecu: push_to(c, x, n, dims.u + dims.c, true),
        es: push_to(c, x, n, dims.s, false),
        ecs: push_to(c, x, n, dims.s + dims.c, false),
        n,
    };
    let mut prev = compute(n);
    let mut trace = Vec::new();
    while n < opts.n_max {
        n *= 2;
        let next = compute(n);
        let change = [
            linalg::subspace_distance(&prev.eu, &next.eu),
            linalg::subspace_distance(&prev.ecu, &next.ecu),
            linalg::subspace_distance(&prev.es, &next.es),
            linalg::subspace_distance(&prev.ecs, &next.ecs),
        ]
        .into_iter()
        .fold(0.0, f64::max);
        trace.push(change);
        prev = next;
        if change < opts.tol {
            return Ok(prev);
        }
    }
    Err(Error::NoConvergence { message: format!("invariant bundles at x = {x}"), trace })
}

/// `E^{cu} ∩ E^{cs}` from the principal vectors of the two orthonormal frames.
fn intersect(ecu: &CMat, ecs: &CMat, k: usize) -> Result<CMat> {
    if k == 0 {
        return Ok(CMat::zeros(ecu.nrows(), 0));
    }
    let m = ecu.adjoint() * ecs;
    // eigenvalues of M M* are the squared principal cosines
    let (vals, vecs) = linalg::herm_eig(&(&m * m.adjoint()));
    let n = vals.len();
    let smallest = vals[n - k].max(0.0).sqrt();
    if smallest < 1.0 - 1e-6 {
        return Err(Error::Numerical(format!("center-stable and center-unstable bundles meet at cosine {smallest:.3e}")));
    }
    Ok(linalg::orthonormalize(&(ecu * vecs.columns(n - k, k))))
}

fn check_dims(c: &Cocycle, dims: Dims) -> Result<()> {
    if dims.total() != c.dim || dims.u == 0 && dims.s == 0 && dims.c == 0 {
        return Err(Error::InvalidInput(format!("dims {dims:?} do not add up to {}", c.dim)));
    }
    Ok(())
}

/// Unstable, center and stable bundles on `x_grid` by forward/backward power iteration.
pub fn invariant_bundles(c: &Cocycle, x_grid: &[f64], dims: Dims, opts: &BundleOptions) -> Result<Splitting> {
    check_dims(c, dims)?;
    if x_grid.is_empty() {
        return Err(Error::InvalidInput("empty phase grid".into()));
    }
    let pairs: Vec<(Bundles, Bundles)> = x_grid
        .par_iter()
        .map(|&x| Ok((bundles_at(c, x, dims, opts)?, bundles_at(c, c.freq.shift(x, 1), dims, opts)?)))
        .collect::<Result<_>>()?;
    let mut sp = Splitting {
        dims,
        x_grid: x_grid.to_vec(),
        eu: vec![],
        ec: vec![],
        es: vec![],
        ecu: vec![],
        ecs: vec![],
        exponents: orbit_exponents(c, x_grid[0], 0.0, 2000),
        invariance_residual: 0.0,
        condition: 0.0,
        iterations: 0,
    };
    for (&x, (b, b1)) in x_grid.iter().zip(&pairs) {
        let ec = intersect(&b.ecu, &b.ecs, dims.c)?;
        let ec1 = intersect(&b1.ecu, &b1.ecs, dims.c)?;
        let a = c.eval(x, 0.0);
        for (e0, e1) in [(&b.eu, &b1.eu), (&ec, &ec1), (&b.es, &b1.es)] {
            if e0.ncols() > 0 {
                sp.invariance_residual = sp.invariance_residual.max(linalg::subspace_distance(&(&a * e0), e1));
            }
        }
        let stacked = linalg::hstack(&linalg::hstack(&b.eu, &ec), &b.es);
        sp.condition = sp.condition.max(linalg::condition_number(&stacked));
        sp.iterations = sp.iterations.max(b.n).max(b1.n);
        sp.eu.push(b.eu.clone());
        sp.ec.push(ec);
        sp.es.push(b.es.clone());
        sp.ecu.push(b.ecu.clone());
        sp.ecs.push(b.ecs.clone());
    }
    Ok(sp)
}

/// Bundles along the orbit `x_0 + jα`, `j = 0..=len`: unstable directions pushed
/// forward from `x_0`, stable ones pulled back from `x_len`.
pub fn orbit_bundles(c: &Cocycle, x0: f64, len: usize, dims: Dims, opts: &BundleOptions) -> Result<Splitting> {
    check_dims(c, dims)?;
    let start = bundles_at(c, x0, dims, opts)?;
    let end = bundles_at(c, c.freq.shift(x0, len as i64), dims, opts)?;
    let xs: Vec<f64> = (0..=len).map(|j| c.freq.shift(x0, j as i64)).collect();
    let mut eu = vec![start.eu.clone()];
    let mut ecu = vec![start.ecu.clone()];
    for j in 0..len {
        let a = c.eval(xs[j], 0.0);
        eu.push(linalg::orthonormalize(&(&a * &eu[j])));
        ecu.push(linalg::orthonormalize(&(&a * &ecu[j])));
    }
    let mut es = vec![end.es.clone()];
    let mut ecs = vec![end.ecs.clone()];
    for j in (0..len).rev() {
        let ai = linalg::inverse(&c.eval(xs[j], 0.0))?;
        let (s_prev, cs_prev) = (es.last().expect("nonempty"), ecs.last().expect("nonempty"));
        let s_new = linalg::orthonormalize(&(&ai * s_prev));
        let cs_new = linalg::orthonormalize(&(&ai * cs_prev));
        es.push(s_new);
        ecs.push(cs_new);
    }
    es.reverse();
    ecs.reverse();
    let ec = ecu
        .iter()
        .zip(&ecs)
        .map(|(a, b)| intersect(a, b, dims.c))
        .collect::<Result<Vec<_>>>()?;
    let condition = (0..=len)
        .map(|j| linalg::condition_number(&linalg::hstack(&linalg::hstack(&eu[j], &ec[j]), &es[j])))
        .fold(0.0, f64::max);
    let mut residual = 0.0_f64;
    for j in 0..len {
        let a = c.eval(xs[j], 0.0);
        for (e0, e1) in [(&eu[j], &eu[j + 1]), (&ec[j], &ec[j + 1]), (&es[j], &es[j + 1])] {
            if e0.ncols() > 0 {
                residual = residual.max(linalg::subspace_distance(&(&a * e0), e1));
            }
        }
    }
    Ok(Splitting {
        dims,
        x_grid: xs,
        eu,
        ec,
        es,
        ecu,
        ecs,
        exponents: orbit_exponents(c, x0, 0.0, len.max(200)),
        invariance_residual: residual,
        condition,
        iterations: start.n.max(end.n),
    })
}

/// Rescales the stable frame so that `ω(u_i, s_j) = U* S S' = -I`.
pub fn symplectic_frame_hyperbolic(eu: &CMat, es: &CMat, s: &CMat) -> Result<(CMat, CMat)> {
    if eu.ncols() == 0 {
        return Ok((eu.clone(), es.clone()));
    }
    let k = eu.adjoint() * s * es;
    let sv = linalg::singular_values(&k);
    if *sv.last().expect("nonempty") < 1e-10 {
        return Err(Error::Numerical("Krein pairing of unstable and stable bundles is singular".into()));
    }
    let es_new = -(es * linalg::inverse(&k)?);
    Ok((eu.clone(), es_new))
}

/// A basis `F` of a 2-dimensional center bundle with `F* S F = J`.
pub fn symplectic_frame_center(ec: &CMat, s: &CMat) -> Result<CMat> {
    let h = krein_matrix(ec, s);
    let (vals, vecs) = linalg::herm_eig(&h);
    let scale = vals.iter().fold(0.0_f64, |a, b| a.max(b.abs()));
    let (pos, neg) = inertia(&h, 1e-10 * scale.max(f64::MIN_POSITIVE));
    if ec.ncols() != 2 || pos != 1 || neg != 1 {
        return Err(Error::Numerical(format!("center Krein inertia is ({pos}, {neg}), expected (1, 1)")));
    }
    // vals ascending: column 0 negative, column 1 positive
    let mut t0 = CMat::zeros(2, 2);
    t0.set_column(0, &(vecs.column(1) / cr(vals[1].sqrt())));
    t0.set_column(1, &(vecs.column(0) / cr((-vals[0]).sqrt())));
    let r2 = std::f64::consts::FRAC_1_SQRT_2;
    let q = CMat::from_row_slice(2, 2, &[I * r2, -I * r2, cr(r2), cr(r2)]);
    Ok(ec * t0 * linalg::inverse(&q)?)
}

/// `F G` with `G* J G = J` closest to `target` (least squares, then symplectic polar correction).
pub fn nearest_symplectic_gauge(f: &CMat, target: &CMat) -> Result<CMat> {
    let k = f.ncols() / 2;
    let j = linalg::j_canonical(k);
    let g0 = linalg::lstsq(f, target)?;
    if linalg::condition_number(&g0) > 1e8 {
        return Ok(f.clone());
    }
    let jp = g0.adjoint() * &j * &g0;
    let x = linalg::inverse(&j)? * jp;
    let g = &g0 * linalg::inv_sqrt(&x, 1e-14, 80)?;
    Ok(f * g)
}

/// `U W` with `W` unitary, closest to `target`.
fn unitary_gauge(u: &CMat, target: &CMat) -> CMat {
    if u.ncols() == 0 {
        return u.clone();
    }
    let m = u.adjoint() * target;
    let svd = m.svd(true, true);
    let w = svd.u.expect("requested") * svd.v_t.expect("requested");
    u * w
}

fn assemble(u: &CMat, f: &CMat, sv: &CMat) -> CMat {
    let n = u.nrows();
    let h = u.ncols();
    let m = h + 1;
    let mut b = CMat::zeros(n, 2 * m);
    b.view_mut((0, 0), (n, h)).copy_from(u);
    b.set_column(h, &f.column(0));
    b.view_mut((0, m), (n, h)).copy_from(sv);
    b.set_column(2 * m - 1, &f.column(1));
    b
}

fn center_cols(b: &CMat) -> CMat {
    let m = b.ncols() / 2;
    linalg::hstack(&b.columns(m - 1, 1).into_owned(), &b.columns(2 * m - 1, 1).into_owned())
}

fn hyperbolic_cols(b: &CMat) -> CMat {
    let m = b.ncols() / 2;
    linalg::hstack(&b.columns(0, m - 1).into_owned(), &b.columns(m, m - 1).into_owned())
}

fn unstable_cols(b: &CMat) -> CMat {
    let m = b.ncols() / 2;
    b.columns(0, m - 1).into_owned()
}

/// Symplectic frame `B` from bundles, gauged toward `reference` when given.
fn frame_from_bundles(eu: &CMat, ec: &CMat, es: &CMat, s: &CMat, reference: Option<&CMat>) -> Result<CMat> {
    let eu = match reference {
        Some(r) => unitary_gauge(eu, &unstable_cols(r)),
        None => eu.clone(),
    };
    let (u, sv) = symplectic_frame_hyperbolic(&eu, es, s)?;
    let mut f = symplectic_frame_center(ec, s)?;
    if let Some(r) = reference {
        f = nearest_symplectic_gauge(&f, &center_cols(r))?;
    }
    Ok(assemble(&u, &f, &sv))
}

/// The symplectic frame `B(x)` from freshly computed bundles.
pub fn frame_at(c: &Cocycle, x: f64, dims: Dims, opts: &BundleOptions, reference: Option<&CMat>) -> Result<CMat> {
    check_dims(c, dims)?;
    let s = form_matrix(c)?;
    let b = bundles_at(c, x, dims, opts)?;
    let ec = intersect(&b.ecu, &b.ecs, dims.c)?;
    frame_from_bundles(&b.eu, &ec, &b.es, &s, reference)
}

fn form_matrix(c: &Cocycle) -> Result<CMat> {
    Ok(c.form
        .as_ref()
        .ok_or_else(|| Error::InvalidInput("cocycle carries no symplectic form".into()))?
        .matrix()
        .clone())
}

/// Conjugated cocycle `B(x+α)^{-1} A(x) B(x) = Ĥ(x) ⋄ Ĉ(x)` on a set of phases.
#[derive(Clone, Debug)]
pub struct BlockDiag {
    pub xs: Vec<f64>,
    pub b: Vec<CMat>,
    pub b_next: Vec<CMat>,
    pub hyp: Vec<CMat>,
    pub center: Vec<CMat>,
    /// Largest hyperbolic↔center entry of the conjugated matrices.
    pub coupling: f64,
    pub coupling_per_x: Vec<f64>,
    /// Largest entry of `B* S B - J`.
    pub form_residual: f64,
}

fn split_blocks(m: &CMat) -> (CMat, CMat, f64) {
    let n = m.nrows() / 2;
    let cidx = [n - 1, 2 * n - 1];
    let hidx: Vec<usize> = (0..2 * n).filter(|i| !cidx.contains(i)).collect();
    let mut hyp = CMat::zeros(hidx.len(), hidx.len());
    for (a, &i) in hidx.iter().enumerate() {
        for (b, &j) in hidx.iter().enumerate() {
            hyp[(a, b)] = m[(i, j)];
        }
    }
    let center = CMat::from_fn(2, 2, |a, b| m[(cidx[a], cidx[b])]);
    let mut coupling = 0.0_f64;
    for &i in &hidx {
        for &j in &cidx {
            coupling = coupling.max(m[(i, j)].norm()).max(m[(j, i)].norm());
        }
    }
    (hyp, center, coupling)
}

fn finish_blocks(c: &Cocycle, xs: Vec<f64>, b: Vec<CMat>, b_next: Vec<CMat>, tol: f64) -> Result<BlockDiag> {
    let s = form_matrix(c)?;
    let j = linalg::j_canonical(c.dim / 2);
    let mut hyp = Vec::new();
    let mut center = Vec::new();
    let mut per = Vec::new();
    let mut form_residual = 0.0_f64;
    for k in 0..xs.len() {
        let m = linalg::solve(&b_next[k], &(c.eval(xs[k], 0.0) * &b[k]))?;
        let (h, cm, cp) = split_blocks(&m);
        hyp.push(h);
        center.push(cm);
        per.push(cp);
        form_residual = form_residual.max(linalg::max_abs(&(b[k].adjoint() * &s * &b[k] - &j)));
    }
    let coupling = per.iter().copied().fold(0.0, f64::max);
    if coupling > tol {
        return Err(Error::NoConvergence { message: format!("block coupling {coupling:.3e} above {tol:.1e}"), trace: per });
    }
    Ok(BlockDiag { xs, b, b_next, hyp, center, coupling, coupling_per_x: per, form_residual })
}

/// Block diagonalization on the phases `xs`, every frame gauged toward the frame at `xs[0]`.
pub fn block_diagonalize(c: &Cocycle, xs: &[f64], dims: Dims, opts: &BundleOptions, tol: f64) -> Result<BlockDiag> {
    if xs.is_empty() {
        return Err(Error::InvalidInput("empty phase grid".into()));
    }
    let anchor = frame_at(c, xs[0], dims, opts, None)?;
    block_diagonalize_anchored(c, xs, dims, opts, tol, &anchor)
}

pub fn block_diagonalize_anchored(
    c: &Cocycle,
    xs: &[f64],
    dims: Dims,
    opts: &BundleOptions,
    tol: f64,
    anchor: &CMat,
) -> Result<BlockDiag> {
    let frames: Vec<(CMat, CMat)> = xs
        .par_iter()
        .map(|&x| {
            Ok((
                frame_at(c, x, dims, opts, Some(anchor))?,
                frame_at(c, c.freq.shift(x, 1), dims, opts, Some(anchor))?,
            ))
        })
        .collect::<Result<_>>()?;
    let (b, b_next): (Vec<CMat>, Vec<CMat>) = frames.into_iter().unzip();
    finish_blocks(c, xs.to_vec(), b, b_next, tol)
}

/// Block diagonalization along the orbit of `x0` with propagated bundles.
pub fn block_diagonalize_orbit(
    c: &Cocycle,
    x0: f64,
    len: usize,
    dims: Dims,
    opts: &BundleOptions,
    tol: f64,
) -> Result<BlockDiag> {
    let sp = orbit_bundles(c, x0, len, dims, opts)?;
    let s = form_matrix(c)?;
    let anchor = frame_from_bundles(&sp.eu[0], &sp.ec[0], &sp.es[0], &s, None)?;
    let frames = (0..=len)
        .map(|j| frame_from_bundles(&sp.eu[j], &sp.ec[j], &sp.es[j], &s, Some(&anchor)))
        .collect::<Result<Vec<_>>>()?;
    let xs = sp.x_grid[..len].to_vec();
    finish_blocks(c, xs, frames[..len].to_vec(), frames[1..].to_vec(), tol)
}

/// Lyapunov exponents of the product of center blocks.
pub fn center_exponents(bd: &BlockDiag) -> Vec<f64> {
    let mut q = linalg::eye(2);
    let mut acc = [0.0; 2];
    for m in &bd.center {
        let qr = (m * &q).qr();
        let r = qr.r();
        acc[0] += r[(0, 0)].norm().ln();
        acc[1] += r[(1, 1)].norm().ln();
        q = qr.q();
    }
    let n = bd.center.len().max(1) as f64;
    let mut out = vec![acc[0] / n, acc[1] / n];
    out.sort_by(|a, b| b.total_cmp(a));
    out
}

#[derive(Clone, Debug, Serialize)]
pub struct CenterRotation {
    /// Per-step rotation number of the center on the branch consistent with the
    /// energy normalization of the full cocycle.
    pub rho: f64,
    /// Same quantity on the polar branch of the 2×2 center steps.
    pub rho_polar: f64,
    /// `q·(rho - rho_polar)`, an integer when both are exact.
    pub branch_offset: f64,
    /// `ℓ/q` when `rho` sits on a multiple of `1/q`.
    pub snapped: Option<(i64, i64)>,
    pub steps: usize,
}

/// Rotation number of the center cocycle over `periods` traversals of the block data.
///
/// The consistent branch telescopes through the frames, so it equals the
/// energy-normalized rotation number of the full cocycle per step.
pub fn center_rotation_number(c: &Cocycle, bd: &BlockDiag, q: usize, periods: usize) -> Result<CenterRotation> {
    let n = bd.center.len();
    if n == 0 || q == 0 {
        return Err(Error::InvalidInput("empty block data".into()));
    }
    let steps = periods.max(1) * n;
    let x0 = bd.xs[0];
    let rho = if c.is_energy_family() {
        let form = c.form.as_ref().ok_or_else(|| Error::InvalidInput("no form".into()))?;
        let lh = LagrangianFrame::horizontal(form);
        lagrangian::phase_iterate(c, x0, steps, &lh, Branch::Energy)? / steps as f64
    } else {
        f64::NAN
    };
    let j2 = SymplecticForm::standard(1);
    let mut frame = LagrangianFrame::lambda_y(0.0);
    let mut polar = 0.0;
    for k in 0..steps {
        let m = &bd.center[k % n];
        polar += lagrangian::phase_increment(m, &frame)?;
        frame = LagrangianFrame::from_stacked(linalg::orthonormalize(&(m * frame.stacked())), &j2)?;
    }
    let rho_polar = polar / steps as f64;
    let reference = if rho.is_nan() { rho_polar } else { rho };
    let scaled = reference * q as f64;
    let snapped = ((scaled - scaled.round()).abs() < 1e-6).then(|| (scaled.round() as i64, q as i64));
    Ok(CenterRotation { rho, rho_polar, branch_offset: (reference - rho_polar) * q as f64, snapped, steps })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum TransportScheme {
    /// Graph over the hyperbolic sum at the left endpoint of each step.
    Left,
    /// Graph over the hyperbolic sum at the midpoint of each step.
    Midpoint,
}

#[derive(Clone, Debug, Serialize)]
pub struct TransportOptions {
    pub initial_steps: usize,
    pub floor: f64,
    pub scheme: TransportScheme,
    pub bundles: BundleOptions,
}

impl Default for TransportOptions {
    fn default() -> Self {
        TransportOptions {
            initial_steps: 64,
            floor: 1e-10,
            scheme: TransportScheme::Midpoint,
            bundles: BundleOptions::default(),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Holonomy {
    pub x: f64,
    pub energies: Vec<f64>,
    /// Local holonomies `R_{t_{k+1}, t_k}`.
    #[serde(skip)]
    pub r: Vec<CMat>,
    /// Cumulative `R̃_{t_k}`, starting from the identity.
    #[serde(skip)]
    pub r_total: Vec<CMat>,
    /// Reference frames `B_{t_k}(x)`.
    #[serde(skip)]
    pub frames: Vec<CMat>,
    pub symplectic_residual: f64,
    /// `max_k log‖R_k‖ / Δt_k`.
    pub delta: f64,
    pub log_norm_total: f64,
    pub halvings: usize,
}

impl Holonomy {
    pub fn endpoint(&self) -> &CMat {
        self.r_total.last().expect("nonempty")
    }
}

fn transversal(hyp: &CMat, center: &CMat) -> Option<CMat> {
    let m = linalg::hstack(hyp, center);
    let det = linalg::det(&m).norm();
    (det > 0.5).then(|| linalg::inverse(&m).ok()).flatten()
}

/// One transport step `U_s ↦ U_t R` of the center frame.
fn local_holonomy(bs: &CMat, bt: &CMat, bmid: Option<&CMat>) -> Result<Option<CMat>> {
    let us = center_cols(bs);
    let ut = center_cols(bt);
    let hyp = hyperbolic_cols(bmid.unwrap_or(bs));
    let h = hyp.ncols();
    if bmid.is_some() && transversal(&hyp, &us).is_none() {
        return Ok(None);
    }
    let Some(inv) = transversal(&hyp, &ut) else { return Ok(None) };
    let coords = inv * &us;
    let k = coords.rows(h, 2).into_owned();
    let kk = linalg::inverse(&k).ok();
    let Some(_) = kk else { return Ok(None) };
    let j = linalg::j_canonical(1);
    let js = k.adjoint() * &j * &k;
    let x = linalg::inverse(&j)? * js;
    let n = linalg::inv_sqrt(&x, 1e-14, 80)?;
    Ok(Some(k * n))
}

/// Path-ordered symplectic transport of the center frame at phase `x` over `[t0, t1]`.
pub fn parallel_transport(
    family: &(dyn Fn(f64) -> Result<Cocycle> + Sync),
    t0: f64,
    t1: f64,
    x: f64,
    dims: Dims,
    opts: &TransportOptions,
) -> Result<Holonomy> {
    let c0 = family(t0)?;
    let anchor = frame_at(&c0, x, dims, &opts.bundles, None)?;
    let frame = |t: f64| -> Result<CMat> { frame_at(&family(t)?, x, dims, &opts.bundles, Some(&anchor)) };
    let mut energies = vec![t0];
    let mut frames = vec![anchor.clone()];
    let mut r = Vec::new();
    let mut r_total = vec![linalg::eye(2)];
    let mut halvings = 0;
    let len = t1 - t0;
    if len.abs() > 0.0 {
        let base = len / opts.initial_steps.max(1) as f64;
        let mut t = t0;
        while (t1 - t) * len.signum() > 1e-15 * len.abs() {
            let mut step = base.abs().min((t1 - t).abs()) * len.signum();
            loop {
                if step.abs() < opts.floor {
                    return Err(Error::StepUnderflow(t));
                }
                let tn = if ((t + step) - t1).abs() < 1e-14 * len.abs() { t1 } else { t + step };
                let bt = frame(tn)?;
                let mid = match opts.scheme {
                    TransportScheme::Midpoint => Some(frame(0.5 * (t + tn))?),
                    TransportScheme::Left => None,
                };
                let bs = frames.last().expect("nonempty");
                if let Some(rk) = local_holonomy(bs, &bt, mid.as_ref())? {
                    let tot = &rk * r_total.last().expect("nonempty");
                    r.push(rk);
                    r_total.push(tot);
                    frames.push(bt);
                    energies.push(tn);
                    t = tn;
                    break;
                }
                step *= 0.5;
                halvings += 1;
            }
        }
    }
    let j = linalg::j_canonical(1);
    let symplectic_residual = r.iter().map(|m| linalg::max_abs(&(m.adjoint() * &j * m - &j))).fold(0.0, f64::max);
    let delta = r
        .iter()
        .zip(energies.windows(2))
        .map(|(m, w)| linalg::norm2(m).ln() / (w[1] - w[0]).abs())
        .fold(0.0, f64::max);
    let log_norm_total = linalg::norm2(r_total.last().expect("nonempty")).ln();
    Ok(Holonomy { x, energies, r, r_total, frames, symplectic_residual, delta, log_norm_total, halvings })
}

#[derive(Clone, Debug, Serialize)]
pub struct MonotonicityReport {
    pub min_transported: f64,
    pub max_transported: f64,
    pub min_raw: f64,
    pub max_raw: f64,
    pub samples: usize,
}

/// `Ψ(v) = v* P* J ∂_t P v` for `P` the product of 2×2 center steps, by central differences.
fn psi_center(p_minus: &CMat, p: &CMat, p_plus: &CMat, h: f64, y: f64) -> f64 {
    let j = linalg::j_canonical(1);
    let v = linalg::CVec::from_vec(vec![cr((PI * y).cos()), cr((PI * y).sin())]);
    let dp = (p_plus - p_minus) / cr(2.0 * h);
    (v.adjoint() * p.adjoint() * j * dp * &v)[(0, 0)].re
}

/// `R̃_τ(x)` for an energy `τ` inside the transport range, stepping from the
/// nearest partition point below `τ`.
fn transported_at(
    hol: &Holonomy,
    bt: &CMat,
    family: &(dyn Fn(f64) -> Result<Cocycle> + Sync),
    tau: f64,
    dims: Dims,
    opts: &TransportOptions,
) -> Result<CMat> {
    let dir = (hol.energies.last().expect("nonempty") - hol.energies[0]).signum();
    let p = hol.energies.iter().rposition(|&e| (tau - e) * dir >= 0.0).unwrap_or(0);
    let s = hol.energies[p];
    if s == tau {
        return Ok(hol.r_total[p].clone());
    }
    let mid = match opts.scheme {
        TransportScheme::Midpoint => Some(frame_at(&family(0.5 * (s + tau))?, hol.x, dims, &opts.bundles, Some(&hol.frames[0]))?),
        TransportScheme::Left => None,
    };
    let local = local_holonomy(&hol.frames[p], bt, mid.as_ref())?
        .ok_or_else(|| Error::Numerical(format!("transversality lost at t = {tau}")))?;
    Ok(local * &hol.r_total[p])
}

/// Monotonicity of the `k`-step center iterate, with reference frames and with
/// frames transported from `t0`, at the midpoints of the transport partition.
#[allow(clippy::too_many_arguments)]
pub fn center_monotonicity_check(
    family: &(dyn Fn(f64) -> Result<Cocycle> + Sync),
    t0: f64,
    t1: f64,
    x_grid: &[f64],
    dims: Dims,
    k: usize,
    y_samples: usize,
    h: f64,
    opts: &TransportOptions,
) -> Result<MonotonicityReport> {
    let freq = family(t0)?.freq.clone();
    let per_x: Vec<Vec<(f64, f64)>> = x_grid
        .par_iter()
        .map(|&x0| {
            let orbit: Vec<f64> = (0..=k).map(|j| freq.shift(x0, j as i64)).collect();
            let hol = orbit
                .iter()
                .map(|&x| parallel_transport(family, t0, t1, x, dims, opts))
                .collect::<Result<Vec<_>>>()?;
            let mut out = Vec::new();
            for w in hol[0].energies.windows(2) {
                let t = 0.5 * (w[0] + w[1]);
                let mut prods = Vec::new();
                for tau in [t - h, t, t + h] {
                    let ct = family(tau)?;
                    let frames = orbit
                        .iter()
                        .zip(&hol)
                        .map(|(&x, hh)| frame_at(&ct, x, dims, &opts.bundles, Some(&hh.frames[0])))
                        .collect::<Result<Vec<_>>>()?;
                    let rt = hol
                        .iter()
                        .zip(&frames)
                        .map(|(hh, b)| transported_at(hh, b, family, tau, dims, opts))
                        .collect::<Result<Vec<_>>>()?;
                    let mut raw = linalg::eye(2);
                    let mut tr = linalg::eye(2);
                    for j in 0..k {
                        let m = linalg::solve(&frames[j + 1], &(ct.eval(orbit[j], 0.0) * &frames[j]))?;
                        let (_, cm, _) = split_blocks(&m);
                        let ctil = linalg::inverse(&rt[j + 1])? * &cm * &rt[j];
                        raw = &cm * raw;
                        tr = ctil * tr;
                    }
                    prods.push((raw, tr));
                }
                for i in 0..y_samples {
                    let y = i as f64 / y_samples as f64;
                    let pr = psi_center(&prods[0].0, &prods[1].0, &prods[2].0, h, y);
                    let pt = psi_center(&prods[0].1, &prods[1].1, &prods[2].1, h, y);
                    out.push((pr, pt));
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let all: Vec<(f64, f64)> = per_x.into_iter().flatten().collect();
    let fold = |f: &dyn Fn(&(f64, f64)) -> f64| {
        all.iter().map(f).fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)))
    };
    let (min_raw, max_raw) = fold(&|p| p.0);
    let (min_transported, max_transported) = fold(&|p| p.1);
    Ok(MonotonicityReport { min_transported, max_transported, min_raw, max_raw, samples: all.len() })
}

fn direction(m: &CMat, theta: f64) -> f64 {
    let v = m * linalg::CVec::from_vec(vec![cr(theta.cos()), cr(theta.sin())]);
    let a = v[1].re.atan2(v[0].re);
    a.rem_euclid(PI)
}

/// Whether every map sends the cone `{Λ_y : y ∈ [0, ε0]}` into itself without filling it.
pub fn uh_certificate_cone(maps: &[CMat], eps0: f64) -> Result<bool> {
    if !(eps0 > 0.0 && eps0 < 1.0) {
        return Err(Error::InvalidInput("cone half-width must lie in (0, 1)".into()));
    }
    let width = PI * eps0;
    let tol = 1e-12;
    for m in maps {
        if m.nrows() != 2 || m.iter().any(|z| z.im.abs() > 1e-12 * linalg::max_abs(m)) {
            return Err(Error::InvalidInput("cone certificate needs real 2×2 matrices".into()));
        }
        let a0 = direction(m, 0.0);
        let a1 = direction(m, width);
        let am = direction(m, 0.5 * width);
        let ccw = (a1 - a0).rem_euclid(PI);
        let on_ccw = (am - a0).rem_euclid(PI) <= ccw;
        let (start, len) = if on_ccw { (a0, ccw) } else { (a1, PI - ccw) };
        let start = if start > PI - tol { start - PI } else { start };
        if start < -tol || start + len > width + tol {
            return Ok(false);
        }
        if start.abs() <= tol && (len - width).abs() <= tol {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Cone certificate for the maps `A(x_i)` of a 2×2 real cocycle.
pub fn uh_certificate_cocycle(c: &Cocycle, eps0: f64, x_grid: &[f64]) -> Result<bool> {
    let maps: Vec<CMat> = x_grid.iter().map(|&x| c.eval(x, 0.0)).collect();
    uh_certificate_cone(&maps, eps0)
}

/// `Λ_H^{m-1} ⋄ Λ_y` in the frame coordinates of `B`.
pub fn adapted_lagrangian(m: usize, y: f64) -> CMat {
    let h = m - 1;
    let lh = linalg::vstack(&linalg::eye(h), &CMat::zeros(h, h));
    diamond(&lh, LagrangianFrame::lambda_y(y).stacked())
}

/// Phase of the conjugated step `B(x+α)^{-1} A B(x)` on `Λ_H ⋄ Λ_y`, assembled from
/// the polar phases of the frames and the energy-normalized phase of `A`.
pub fn consistent_step_phase(c: &Cocycle, x: f64, b: &CMat, b_next: &CMat, y: f64) -> Result<f64> {
    let form = c.form.as_ref().ok_or_else(|| Error::InvalidInput("no form".into()))?;
    let m = c.dim / 2;
    let lt = adapted_lagrangian(m, y);
    let jm = SymplecticForm::standard(m);
    // P B maps (C^{2m}, J) to the canonical coordinates of the cocycle's form
    let pb = form.witness() * b;
    let pbn_inv = linalg::inverse(&(form.witness() * b_next))?;
    let f0 = LagrangianFrame::from_stacked(lt.clone(), &jm)?;
    let phi_b = lagrangian::phase_increment(&pb, &f0)?;
    let bl = LagrangianFrame::from_stacked(linalg::orthonormalize(&(b * &lt)), form)?;
    let phi_a = lagrangian::phase_iterate(c, x, 1, &bl, lagrangian::default_branch(c))?;
    let img = linalg::orthonormalize(&(form.witness() * c.eval(x, 0.0) * b * &lt));
    let f2 = LagrangianFrame::from_stacked(img, &jm)?;
    let phi_bn = lagrangian::phase_increment(&pbn_inv, &f2)?;
    Ok(phi_b + phi_a + phi_bn)
}

/// Complex conjugation check used by callers that require real center steps.
pub fn max_imaginary(m: &CMat) -> f64 {
    m.iter().map(|z: &Complex64| z.im.abs()).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cocycles::constant_cocycle;
    use crate::lagrangian::{diamond_matrix, rotation_matrix};
    use crate::operators::Frequency;

    fn diag4() -> Cocycle {
        let m = linalg::real_matrix(4, 4, &[4.0, 0.0, 0.0, 0.0, 0.0, 2.0, 0.0, 0.0, 0.0, 0.0, 0.5, 0.0, 0.0, 0.0, 0.0, 0.25]);
        constant_cocycle(m, Frequency::golden(), None)
    }

    #[test]
    fn coordinate_planes_of_diagonal() {
        let c = diag4();
        let sp = invariant_bundles(&c, &[0.1, 0.6], Dims { u: 1, c: 2, s: 1 }, &BundleOptions::default()).unwrap();
        let e = |i: usize| {
            let mut v = CMat::zeros(4, 1);
            v[(i, 0)] = cr(1.0);
            v
        };
        assert!(linalg::subspace_distance(&sp.eu[0], &e(0)) < 1e-9);
        assert!(linalg::subspace_distance(&sp.es[0], &e(3)) < 1e-9);
        assert!(linalg::subspace_distance(&sp.ec[0], &linalg::hstack(&e(1), &e(2))) < 1e-9);
        assert!(sp.invariance_residual < 1e-9);
    }

    #[test]
    fn block_diagonal_constant_is_reproduced() {
        let hyp = linalg::real_matrix(2, 2, &[3.0, 0.0, 0.0, 1.0 / 3.0]);
        let a = diamond_matrix(&hyp, &rotation_matrix(0.1));
        let c = constant_cocycle(a, Frequency::golden(), Some(SymplecticForm::standard(2)));
        let bd = block_diagonalize(&c, &[0.0, 0.3], Dims::center_two(4), &BundleOptions::default(), 1e-6).unwrap();
        assert!(bd.coupling < 1e-9);
        assert!(bd.form_residual < 1e-10);
        assert!((linalg::det(&bd.center[0]).norm() - 1.0).abs() < 1e-10);
        let cr_ = center_rotation_number(&c, &bd, 1, 50).unwrap();
        assert!((cr_.rho_polar - 0.2).abs() < 1e-10);
    }

    #[test]
    fn center_frame_is_canonical() {
        let s = linalg::j_canonical(1);
        let g = linalg::real_matrix(2, 2, &[2.0, 1.0, 0.5, 0.75]);
        let f = symplectic_frame_center(&g, &s).unwrap();
        let j = linalg::j_canonical(1);
        assert!(linalg::max_abs(&(f.adjoint() * &s * &f - j)) < 1e-12);
    }

    #[test]
    fn cone_examples() {
        let hyp = linalg::real_matrix(2, 2, &[2.0, 0.0, 0.0, 0.5]);
        assert!(uh_certificate_cone(&[hyp], 0.1).unwrap());
        assert!(!uh_certificate_cone(&[rotation_matrix(1.0 / 6.0)], 0.1).unwrap());
        assert!(!uh_certificate_cone(&[linalg::eye(2)], 0.1).unwrap());
        let shear = linalg::real_matrix(2, 2, &[1.0, 0.0, 0.3, 1.0]);
        assert!(!uh_certificate_cone(&[shear], 0.1).unwrap());
    }

    #[test]
    fn transport_of_fixed_center_is_trivial() {
        let fam = |t: f64| -> Result<Cocycle> {
            let hyp = linalg::real_matrix(2, 2, &[3.0 + t, 0.0, 0.0, 1.0 / (3.0 + t)]);
            let a = diamond_matrix(&hyp, &rotation_matrix(0.1 + 0.05 * t));
            Ok(constant_cocycle(a, Frequency::golden(), Some(SymplecticForm::standard(2))))
        };
        let hol = parallel_transport(&fam, 0.0, 1.0, 0.2, Dims::center_two(4), &TransportOptions::default()).unwrap();
        for r in &hol.r {
            assert!(linalg::max_abs(&(r - linalg::eye(2))) < 1e-8);
        }
        let single = parallel_transport(&fam, 0.5, 0.5, 0.2, Dims::center_two(4), &TransportOptions::default()).unwrap();
        assert_eq!(single.r_total.len(), 1);
    }
}
