//! Bands, labeled gaps and counting identities for periodic approximants.

use rayon::prelude::*;
use serde::Serialize;
use std::f64::consts::PI;

use crate::cocycles::{dual_cocycle, iterate, Cocycle};
use crate::error::{Error, Result};
use crate::lagrangian::{cayley_args, phase_iterate_full, Branch, LagrangianFrame};
use crate::linalg::{self, CMat};
use crate::operators::{
    build_finite, floquet_at_phase, floquet_spectrum, Boundary, FloquetSpectrum, Frequency, Rational, TrigPoly,
};

#[derive(Clone, Debug, Serialize)]
pub struct Gap {
    pub lo: f64,
    pub hi: f64,
    /// Number of (index) bands below the gap.
    pub ell: i64,
    /// Gap label: `ℓ ≡ -kp (mod q)`, `|k| ≤ q/2`.
    pub k: Option<i64>,
}

impl Gap {
    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct BandStructure {
    pub p: i64,
    pub q: i64,
    pub bands: Vec<(f64, f64)>,
    pub gaps: Vec<Gap>,
    pub resolution: f64,
}

impl BandStructure {
    pub fn freq(&self) -> Rational {
        Rational { p: self.p, q: self.q }
    }

    pub fn gap_with_label(&self, k: i64) -> Option<&Gap> {
        self.gaps.iter().find(|g| g.k == Some(k))
    }

    pub fn contains(&self, e: f64) -> bool {
        self.bands.iter().any(|&(a, b)| a <= e && e <= b)
    }
}

/// Maximal sample-free intervals wider than `eta` become gaps; `ℓ` counts the
/// sample clusters below each gap.
pub fn detect_gaps(samples: &[f64], eta: f64, pq: Rational) -> BandStructure {
    let mut s: Vec<f64> = samples.iter().copied().filter(|x| x.is_finite()).collect();
    s.sort_by(|a, b| a.total_cmp(b));
    let mut bands = Vec::new();
    let mut gaps = Vec::new();
    if let Some(&first) = s.first() {
        let mut lo = first;
        let mut prev = first;
        for &x in &s[1..] {
            if x - prev > eta {
                bands.push((lo, prev));
                gaps.push(Gap { lo: prev, hi: x, ell: bands.len() as i64, k: None });
                lo = x;
            }
            prev = x;
        }
        bands.push((lo, prev));
    }
    BandStructure { p: pq.p, q: pq.q, bands, gaps, resolution: eta }
}

/// Default gap resolution: three times the largest spacing of samples inside index bands.
pub fn default_eta(fs: &FloquetSpectrum) -> f64 {
    let mut spacing = 0.0_f64;
    for w in fs.samples.windows(2) {
        let mid = 0.5 * (w[0] + w[1]);
        if fs.index_bands.iter().any(|&(a, b)| a <= mid && mid <= b) {
            spacing = spacing.max(w[1] - w[0]);
        }
    }
    3.0 * spacing.max(f64::EPSILON)
}

/// Merge threshold for indexed Bloch bands: bands closer than rounding are touching.
pub fn touching_tolerance(fs: &FloquetSpectrum) -> f64 {
    let scale = fs.index_bands.iter().fold(1.0_f64, |a, &(l, h)| a.max(l.abs()).max(h.abs()));
    1e-9 * scale
}

/// Bands and gaps from indexed Bloch bands; `ℓ` is the number of index bands below.
pub fn band_structure(fs: &FloquetSpectrum, eta: f64) -> BandStructure {
    let mut bands: Vec<(f64, f64)> = Vec::new();
    let mut gaps = Vec::new();
    for (j, &(a, b)) in fs.index_bands.iter().enumerate() {
        match bands.last_mut() {
            Some(last) if a - last.1 <= eta => last.1 = last.1.max(b),
            Some(last) => {
                gaps.push(Gap { lo: last.1, hi: a, ell: j as i64, k: None });
                bands.push((a, b));
            }
            None => bands.push((a, b)),
        }
    }
    let mut bs = BandStructure { p: fs.pq.p, q: fs.pq.q, bands, gaps, resolution: eta };
    label_gaps(&mut bs);
    bs
}

fn mod_inverse(a: i64, m: i64) -> Option<i64> {
    let (mut r0, mut r1) = (a.rem_euclid(m), m);
    let (mut s0, mut s1) = (1_i64, 0_i64);
    while r1 != 0 {
        let t = r0 / r1;
        (r0, r1) = (r1, r0 - t * r1);
        (s0, s1) = (s1, s0 - t * s1);
    }
    (r0 == 1).then(|| s0.rem_euclid(m))
}

/// The representative `k` with `ℓ ≡ -kp (mod q)`, `|k| ≤ q/2`, ties toward positive `k`.
pub fn gap_label(ell: i64, pq: Rational) -> Result<i64> {
    let q = pq.q;
    if q <= 1 {
        return Err(Error::InvalidInput("q ≤ 1 has no bounded gaps".into()));
    }
    let inv = mod_inverse(pq.p, q).ok_or_else(|| Error::InvalidInput("p and q must be coprime".into()))?;
    let mut k = (-ell * inv).rem_euclid(q);
    if 2 * k > q {
        k -= q;
    }
    Ok(k)
}

pub fn label_gaps(bs: &mut BandStructure) {
    let pq = bs.freq();
    for g in &mut bs.gaps {
        g.k = gap_label(g.ell, pq).ok();
    }
}

/// Labeled gaps of the Bloch bands at a single phase `x`.
pub fn gaps_at_phase(v: &TrigPoly, w: &TrigPoly, pq: Rational, x: f64, bloch_grid: usize) -> Result<BandStructure> {
    let fs = floquet_at_phase(v, w, pq, x, bloch_grid)?;
    let eta = touching_tolerance(&fs);
    Ok(band_structure(&fs, eta))
}

/// Labeled gaps of the union spectrum over the phase grid.
pub fn spectrum_gaps(
    v: &TrigPoly,
    w: &TrigPoly,
    pq: Rational,
    x_grid: usize,
    bloch_grid: usize,
) -> Result<BandStructure> {
    let fs = floquet_spectrum(v, w, pq, x_grid, bloch_grid)?;
    let eta = touching_tolerance(&fs);
    Ok(band_structure(&fs, eta))
}

/// `G_k(p/q) = ⋂_x G_k(p/q, x)` over `x_i = i/(q·x_grid)`; `None` when empty.
pub fn joint_gap(
    v: &TrigPoly,
    w: &TrigPoly,
    pq: Rational,
    x_grid: usize,
    k: i64,
    bloch_grid: usize,
) -> Result<Option<(f64, f64)>> {
    if x_grid == 0 {
        return Err(Error::InvalidInput("x_grid must be positive".into()));
    }
    let per_x: Vec<Option<(f64, f64)>> = (0..x_grid)
        .into_par_iter()
        .map(|i| {
            let x = i as f64 / (pq.q as usize * x_grid) as f64;
            gaps_at_phase(v, w, pq, x, bloch_grid).map(|bs| bs.gap_with_label(k).map(|g| (g.lo, g.hi)))
        })
        .collect::<Result<_>>()?;
    let mut lo = f64::NEG_INFINITY;
    let mut hi = f64::INFINITY;
    for g in per_x {
        match g {
            Some((a, b)) => {
                lo = lo.max(a);
                hi = hi.min(b);
            }
            None => return Ok(None),
        }
    }
    Ok((lo < hi).then_some((lo, hi)))
}

/// `sup_{x ∈ A} dist(x, B)` for finite unions of closed intervals.
pub fn hausdorff_one_sided(a: &[(f64, f64)], b: &[(f64, f64)]) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    if b.is_empty() {
        return f64::INFINITY;
    }
    let mut bs = b.to_vec();
    bs.sort_by(|x, y| x.0.total_cmp(&y.0));
    let dist = |x: f64| bs.iter().map(|&(l, h)| if x < l { l - x } else if x > h { x - h } else { 0.0 }).fold(f64::INFINITY, f64::min);
    // the distance to B is piecewise linear with maxima at A's endpoints or at midpoints of B's gaps
    let mut candidates: Vec<f64> = a.iter().flat_map(|&(l, h)| [l, h]).collect();
    for w in bs.windows(2) {
        let m = 0.5 * (w[0].1 + w[1].0);
        if a.iter().any(|&(l, h)| l <= m && m <= h) {
            candidates.push(m);
        }
    }
    candidates.into_iter().map(dist).fold(0.0, f64::max)
}

pub fn hausdorff(a: &[(f64, f64)], b: &[(f64, f64)]) -> f64 {
    hausdorff_one_sided(a, b).max(hausdorff_one_sided(b, a))
}

#[derive(Clone, Debug, Serialize)]
pub struct CountPhase {
    /// `#{E_j < E}` for the Dirichlet restriction to `dN` sites.
    pub count: usize,
    /// `φ_{x,N}(Λ_H)` of the dual cocycle.
    pub phase: f64,
    /// `ρ_0` of the image frame (arguments in `[-π, π)`).
    pub rho0: f64,
    pub at_eigenvalue: bool,
    /// `dN - φ - 1/2`, the eigenvalue form of the identity for `d = 1`.
    pub half_integer_form: f64,
    pub consistent: bool,
}

/// Compares eigenvalue counting with the phase of `Λ_H` under `A^{E,d}_N(x)`.
///
/// The identity `#{E_j < E} = dN - φ + ρ_0(A_N Λ_H)` holds at every energy; at an
/// eigenvalue the Cayley eigenvalues at `-1` are assigned argument `-π`.
pub fn count_vs_phase(v: &TrigPoly, w: &TrigPoly, pq: Rational, x: f64, n: usize, e: f64) -> Result<CountPhase> {
    let d = v.degree();
    let freq = Frequency::Rational(pq);
    let op = build_finite(v, w, &freq, x, d * n, Boundary::Dirichlet)?;
    let eig = op.eigenvalues()?;
    let scale = eig.iter().fold(1.0_f64, |a, b| a.max(b.abs()));
    let tol = 1e-9 * scale;
    let at_eigenvalue = eig.iter().any(|&z| (z - e).abs() <= tol);
    let count = eig.iter().filter(|&&z| z < e - tol).count();
    let c = dual_cocycle(v, w, e, freq)?;
    let lh = LagrangianFrame::horizontal(c.form.as_ref().expect("dual cocycles carry a form"));
    let (phase, fin) = phase_iterate_full(&c, x, n, &lh, Branch::Energy)?;
    let args: Vec<f64> = cayley_args(&fin)?
        .into_iter()
        .map(|a| if at_eigenvalue && PI - a.abs() < 1e-5 { -PI } else { a })
        .collect();
    let rho0 = args.iter().sum::<f64>() / (2.0 * PI);
    let predicted = (d * n) as f64 - phase + rho0;
    Ok(CountPhase {
        count,
        phase,
        rho0,
        at_eigenvalue,
        half_integer_form: (d * n) as f64 - phase - 0.5,
        consistent: (count as f64 - predicted).abs() <= 1e-6,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct IdsRotationRow {
    pub e: f64,
    /// `d(1 - N_x(E))` from counting.
    pub lhs: f64,
    /// `ρ_x(E)` of the dual cocycle.
    pub rho: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct IdsRotationReport {
    pub rows: Vec<IdsRotationRow>,
    pub max_deviation: f64,
    pub blocks: usize,
}

/// `max_E |d(1 - N_x(E)) - ρ_x(E)|`, counting on `dN` sites with `N` a whole number of periods.
pub fn ids_rotation_check(
    v: &TrigPoly,
    w: &TrigPoly,
    pq: Rational,
    energies: &[f64],
    x: f64,
    n_vol: usize,
) -> Result<IdsRotationReport> {
    let d = v.degree();
    let q = pq.q as usize;
    let blocks = n_vol.div_ceil(q).max(1) * q;
    let freq = Frequency::Rational(pq);
    let op = build_finite(v, w, &freq, x, d * blocks, Boundary::Dirichlet)?;
    let rows: Vec<IdsRotationRow> = energies
        .par_iter()
        .map(|&e| {
            let ids = op.count_at_most(e) as f64 / (d * blocks) as f64;
            let c = dual_cocycle(v, w, e, freq.clone())?;
            let lh = LagrangianFrame::horizontal(c.form.as_ref().expect("dual cocycles carry a form"));
            let (phi, _) = phase_iterate_full(&c, x, blocks, &lh, Branch::Energy)?;
            Ok(IdsRotationRow { e, lhs: d as f64 * (1.0 - ids), rho: phi / blocks as f64 })
        })
        .collect::<Result<_>>()?;
    let max_deviation = rows.iter().map(|r| (r.lhs - r.rho).abs()).fold(0.0, f64::max);
    Ok(IdsRotationReport { rows, max_deviation, blocks })
}

/// Normalized trace `tr M / √det M` of a 2×2 monodromy.
pub fn normalized_trace(m: &CMat) -> f64 {
    let det = linalg::det(m);
    let a = m.trace() / det.sqrt();
    a.re
}

/// `a(E)` of the period-q monodromy of a `d = 1` operator.
pub fn trace_profile_scalar(v: &TrigPoly, w: &TrigPoly, pq: Rational, x: f64, energies: &[f64]) -> Result<Vec<(f64, f64)>> {
    if v.degree() != 1 {
        return Err(Error::InvalidInput("scalar trace profile needs a nearest-neighbor operator".into()));
    }
    energies
        .iter()
        .map(|&e| {
            let c = dual_cocycle(v, w, e, Frequency::Rational(pq))?;
            Ok((e, normalized_trace(&iterate(&c, x, 0.0, pq.q))))
        })
        .collect()
}

/// `a(E)` from per-energy center monodromies.
pub fn trace_profile(monodromies: &[(f64, CMat)]) -> Vec<(f64, f64)> {
    monodromies.iter().map(|(e, m)| (*e, normalized_trace(m))).collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct TraceCheck {
    pub bands_monotone: bool,
    pub bands_sweep: bool,
    pub gaps_outside: bool,
    pub segments: usize,
}

/// Checks `|a| ≥ 2` off the bands and strict monotonicity of `a` on each band segment.
pub fn check_trace_profile(profile: &[(f64, f64)], bands: &[(f64, f64)], sweep_tol: f64) -> TraceCheck {
    let mut gaps_outside = true;
    let mut bands_monotone = true;
    let mut bands_sweep = true;
    let mut segments = 0;
    for &(e, a) in profile {
        if !bands.iter().any(|&(l, h)| l <= e && e <= h) && a.abs() < 2.0 - 1e-9 {
            gaps_outside = false;
        }
    }
    for &(l, h) in bands {
        let seg: Vec<f64> = profile.iter().filter(|(e, _)| l <= *e && *e <= h).map(|p| p.1).collect();
        if seg.len() < 2 {
            continue;
        }
        segments += 1;
        let inc = seg.windows(2).all(|w| w[1] > w[0]);
        let dec = seg.windows(2).all(|w| w[1] < w[0]);
        bands_monotone &= inc || dec;
        let (mn, mx) = seg.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
        bands_sweep &= mn <= -2.0 + sweep_tol && mx >= 2.0 - sweep_tol;
    }
    TraceCheck { bands_monotone, bands_sweep, gaps_outside, segments }
}

#[derive(Clone, Debug, Serialize)]
pub struct HolderRow {
    pub alpha1: f64,
    pub alpha2: f64,
    pub hausdorff: f64,
    pub ratio: f64,
}

/// One-sided Hausdorff distance from `σ(p1/q1)` into `σ(p2/q2)` divided by `|Δα|^{1/2}`.
pub fn holder_experiment(
    v: &TrigPoly,
    w: &TrigPoly,
    pairs: &[(Rational, Rational)],
    x_grid: usize,
    bloch_grid: usize,
) -> Result<Vec<HolderRow>> {
    pairs
        .iter()
        .map(|&(a1, a2)| {
            let s1 = spectrum_gaps(v, w, a1, x_grid, bloch_grid)?;
            let s2 = spectrum_gaps(v, w, a2, x_grid, bloch_grid)?;
            let h = hausdorff_one_sided(&s1.bands, &s2.bands);
            let da = (a1.value() - a2.value()).abs();
            let ratio = if da == 0.0 { 0.0 } else { h / da.sqrt() };
            Ok(HolderRow { alpha1: a1.value(), alpha2: a2.value(), hausdorff: h, ratio })
        })
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct GapBound {
    pub width: f64,
    /// `min{‖Ĉ_q - sign(tr) I‖, 1}`.
    pub deviation: f64,
    /// `g = max_k ‖Ĉ_k(x + (q-k)p/q)‖²`.
    pub g: f64,
    pub bound: f64,
}

/// Width of a gap against `min{‖Ĉ_q ∓ I‖, 1}/g` computed from the period's center steps.
pub fn gap_bound_diagnostic(steps: &[CMat], width: f64) -> GapBound {
    let q = steps.len();
    let mut g = 0.0_f64;
    for k in 1..=q {
        let mut prod = linalg::eye(2);
        for step in &steps[q - k..] {
            prod = step * prod;
        }
        g = g.max(linalg::norm2(&prod).powi(2));
    }
    let mono = steps.iter().fold(linalg::eye(2), |acc, s| s * acc);
    let sign = normalized_trace(&mono).signum();
    let det = linalg::det(&mono).sqrt();
    let dev = linalg::norm2(&(&mono / det - linalg::eye(2) * linalg::cr(sign))).min(1.0);
    GapBound { width, deviation: dev, g, bound: dev / g.max(f64::MIN_POSITIVE) }
}

/// Period-q steps of a cocycle starting at `x`.
pub fn period_steps(c: &Cocycle, x: f64, q: usize) -> Vec<CMat> {
    (0..q).map(|j| c.eval(c.freq.shift(x, j as i64), 0.0)).collect()
}
