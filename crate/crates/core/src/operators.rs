//! Quasiperiodic and periodic finite-range operators, their finite-volume and
//! Floquet restrictions, integrated density of states and Aubry duality.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::linalg::{self, cr, CMat};

/// Real trigonometric polynomial `Σ_{|k|≤d} v̂_k e^{2πikθ}`.
#[derive(Clone, Debug, PartialEq)]
pub struct TrigPoly {
    coeffs: Vec<Complex64>,
}

#[derive(Serialize, Deserialize)]
struct TrigPolyJson {
    degree: usize,
    coeffs: Vec<[f64; 2]>,
}

impl TrigPoly {
    /// Builds from coefficients indexed `k = -d..=d`; trailing zero pairs are trimmed.
    pub fn new(coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.len().is_multiple_of(2) {
            return Err(Error::InvalidInput("coefficient list must have odd length 2d+1".into()));
        }
        let d = coeffs.len() / 2;
        let scale = coeffs.iter().fold(0.0_f64, |a, z| a.max(z.norm())).max(1.0);
        for k in 0..=d {
            let diff = (coeffs[d + k] - coeffs[d - k].conj()).norm();
            if diff > 1e-12 * scale {
                return Err(Error::InvalidInput(format!(
                    "coefficients are not conjugate-symmetric at k={k}"
                )));
            }
        }
        let mut p = TrigPoly { coeffs };
        p.trim();
        Ok(p)
    }

    fn trim(&mut self) {
        while self.coeffs.len() > 1 {
            let n = self.coeffs.len();
            if self.coeffs[0].norm() == 0.0 && self.coeffs[n - 1].norm() == 0.0 {
                self.coeffs.remove(n - 1);
                self.coeffs.remove(0);
            } else {
                break;
            }
        }
    }

    pub fn zero() -> Self {
        TrigPoly { coeffs: vec![cr(0.0)] }
    }

    pub fn constant(c: f64) -> Self {
        TrigPoly { coeffs: vec![cr(c)] }
    }

    /// `2a cos(2πθ)`, i.e. `v̂_{±1} = a`.
    pub fn cosine(a: f64) -> Self {
        TrigPoly::new(vec![cr(a), cr(0.0), cr(a)]).expect("symmetric")
    }

    /// Real cosine series `Σ_k 2 a_k cos(2πkθ)` with `a_0` the constant term.
    pub fn cosine_series(a0: f64, a: &[f64]) -> Self {
        let d = a.len();
        let mut coeffs = vec![cr(0.0); 2 * d + 1];
        coeffs[d] = cr(a0);
        for (k, &ak) in a.iter().enumerate() {
            coeffs[d + k + 1] = cr(ak);
            coeffs[d - k - 1] = cr(ak);
        }
        TrigPoly::new(coeffs).expect("symmetric")
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() / 2
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    /// `v̂_k`, zero outside the support.
    pub fn coeff(&self, k: i64) -> Complex64 {
        let d = self.degree() as i64;
        if k.abs() > d {
            cr(0.0)
        } else {
            self.coeffs[(k + d) as usize]
        }
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|z| z.norm() == 0.0)
    }

    /// Evaluates at a complex phase; exact analytic continuation.
    pub fn eval(&self, z: Complex64) -> Complex64 {
        let d = self.degree() as i64;
        let mut s = cr(0.0);
        for k in -d..=d {
            let a = self.coeff(k);
            if a.norm() != 0.0 {
                s += a * (Complex64::new(0.0, 2.0 * PI * k as f64) * z).exp();
            }
        }
        s
    }

    pub fn eval_real(&self, x: f64) -> f64 {
        let d = self.degree() as i64;
        let mut s = self.coeff(0).re;
        for k in 1..=d {
            let a = self.coeff(k);
            let t = 2.0 * PI * k as f64 * x;
            s += 2.0 * (a.re * t.cos() - a.im * t.sin());
        }
        s
    }

    pub fn l1_norm(&self) -> f64 {
        self.coeffs.iter().map(|z| z.norm()).sum()
    }

    /// Sampled sup norm on a 4096-point grid, never above the l1 bound.
    pub fn sup_norm(&self) -> f64 {
        let n = 4096;
        (0..n)
            .map(|i| self.eval_real(i as f64 / n as f64).abs())
            .fold(0.0, f64::max)
            .min(self.l1_norm())
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut p = TrigPoly { coeffs: self.coeffs.iter().map(|z| z * s).collect() };
        p.trim();
        p
    }

    pub fn to_json(&self) -> String {
        let j = TrigPolyJson {
            degree: self.degree(),
            coeffs: self.coeffs.iter().map(|z| [z.re, z.im]).collect(),
        };
        serde_json::to_string(&j).expect("serializable")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let j: TrigPolyJson =
            serde_json::from_str(s).map_err(|e| Error::InvalidInput(format!("potential json: {e}")))?;
        if j.coeffs.len() != 2 * j.degree + 1 {
            return Err(Error::InvalidInput(format!(
                "degree {} needs {} coefficients, got {}",
                j.degree,
                2 * j.degree + 1,
                j.coeffs.len()
            )));
        }
        TrigPoly::new(j.coeffs.iter().map(|c| Complex64::new(c[0], c[1])).collect())
    }
}

impl Serialize for TrigPoly {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        TrigPolyJson {
            degree: self.degree(),
            coeffs: self.coeffs.iter().map(|z| [z.re, z.im]).collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for TrigPoly {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let j = TrigPolyJson::deserialize(d)?;
        if j.coeffs.len() != 2 * j.degree + 1 {
            return Err(serde::de::Error::custom("coefficient count does not match degree"));
        }
        TrigPoly::new(j.coeffs.iter().map(|c| Complex64::new(c[0], c[1])).collect())
            .map_err(serde::de::Error::custom)
    }
}

/// Evaluates a potential at a complex phase.
pub fn eval_potential(v: &TrigPoly, z: Complex64) -> Complex64 {
    v.eval(z)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Rational {
    pub p: i64,
    pub q: i64,
}

pub fn gcd(a: i64, b: i64) -> i64 {
    let (mut a, mut b) = (a.abs(), b.abs());
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

impl Rational {
    pub fn new(p: i64, q: i64) -> Result<Self> {
        if q == 0 {
            return Err(Error::InvalidInput("zero denominator".into()));
        }
        let s = if q < 0 { -1 } else { 1 };
        let g = gcd(p, q).max(1);
        Ok(Rational { p: s * p / g, q: s * q / g })
    }

    pub fn value(&self) -> f64 {
        self.p as f64 / self.q as f64
    }

    pub fn parse(s: &str) -> Result<Self> {
        let (a, b) = s
            .split_once('/')
            .ok_or_else(|| Error::InvalidInput(format!("expected P/Q, got {s:?}")))?;
        let p = a.trim().parse().map_err(|_| Error::InvalidInput(format!("bad numerator {a:?}")))?;
        let q = b.trim().parse().map_err(|_| Error::InvalidInput(format!("bad denominator {b:?}")))?;
        if q <= 0 {
            return Err(Error::InvalidInput("denominator must be positive".into()));
        }
        Rational::new(p, q)
    }

    /// `x + n p/q` reduced mod 1 with the rotation done in integers.
    pub fn shift(&self, x: f64, n: i64) -> f64 {
        let r = (n as i128 * self.p as i128).rem_euclid(self.q as i128) as f64;
        linalg::frac(x + r / self.q as f64)
    }
}

impl std::fmt::Display for Rational {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}/{}", self.p, self.q)
    }
}

/// Continued-fraction convergents of `alpha` with denominators up to `max_q`.
pub fn convergents(alpha: f64, max_q: i64) -> Vec<Rational> {
    let mut out = Vec::new();
    let (mut h0, mut h1) = (0_i64, 1_i64);
    let (mut k0, mut k1) = (1_i64, 0_i64);
    let mut x = alpha;
    for _ in 0..64 {
        let a = x.floor();
        let ai = a as i64;
        let h = ai.saturating_mul(h1).saturating_add(h0);
        let k = ai.saturating_mul(k1).saturating_add(k0);
        if k > max_q || k <= 0 {
            break;
        }
        out.push(Rational { p: h, q: k });
        h0 = h1;
        h1 = h;
        k0 = k1;
        k1 = k;
        let r = x - a;
        if r.abs() < 1e-15 {
            break;
        }
        x = 1.0 / r;
    }
    out.retain(|r| r.q >= 1);
    out.dedup_by_key(|r| r.q);
    out
}

pub fn golden_mean() -> f64 {
    (5.0_f64.sqrt() - 1.0) / 2.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Frequency {
    Rational(Rational),
    Irrational { alpha: f64, convergents: Vec<Rational> },
}

impl Frequency {
    pub fn rational(p: i64, q: i64) -> Result<Self> {
        Ok(Frequency::Rational(Rational::new(p, q)?))
    }

    pub fn irrational(alpha: f64) -> Self {
        Frequency::Irrational { alpha: linalg::frac(alpha), convergents: convergents(linalg::frac(alpha), 1_000_000_000) }
    }

    pub fn golden() -> Self {
        Frequency::irrational(golden_mean())
    }

    pub fn value(&self) -> f64 {
        match self {
            Frequency::Rational(r) => r.value(),
            Frequency::Irrational { alpha, .. } => *alpha,
        }
    }

    pub fn as_rational(&self) -> Option<Rational> {
        match self {
            Frequency::Rational(r) => Some(*r),
            _ => None,
        }
    }

    /// `x + nα` reduced mod 1.
    pub fn shift(&self, x: f64, n: i64) -> f64 {
        match self {
            Frequency::Rational(r) => r.shift(x, n),
            Frequency::Irrational { alpha, .. } => {
                linalg::frac(x + linalg::frac(n as f64 * alpha))
            }
        }
    }

    /// The frequency `kα`.
    pub fn multiple(&self, k: i64) -> Frequency {
        match self {
            Frequency::Rational(r) => {
                Frequency::Rational(Rational::new((k * r.p).rem_euclid(r.q), r.q).expect("q>0"))
            }
            Frequency::Irrational { alpha, .. } => Frequency::irrational(k as f64 * alpha),
        }
    }

    /// `max log q_{n+1} / q_n` over the upper half of the stored convergents.
    pub fn beta(&self) -> f64 {
        match self {
            Frequency::Rational(_) => 0.0,
            Frequency::Irrational { convergents, .. } => {
                let n = convergents.len();
                if n < 2 {
                    return 0.0;
                }
                (n / 2..n - 1)
                    .map(|i| (convergents[i + 1].q as f64).ln() / convergents[i].q as f64)
                    .fold(0.0, f64::max)
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Boundary {
    Dirichlet,
    Bloch(f64),
}

/// Hermitian banded operator on `N` sites.
#[derive(Clone, Debug)]
pub struct FiniteOperator {
    pub size: usize,
    pub bandwidth: usize,
    pub boundary: Boundary,
    pub x: f64,
    /// `diag[n] = w(x + nα) + v̂_0`.
    pub diag: Vec<f64>,
    /// `bands[k-1][n] = H[n][n+k]` for `n + k < N`.
    pub bands: Vec<Vec<Complex64>>,
    /// Extra entries from Bloch wrap-around, accumulated onto the dense matrix.
    pub wrap: Vec<(usize, usize, Complex64)>,
}

pub fn build_finite(
    v: &TrigPoly,
    w: &TrigPoly,
    alpha: &Frequency,
    x: f64,
    n: usize,
    bc: Boundary,
) -> Result<FiniteOperator> {
    if n == 0 {
        return Err(Error::InvalidInput("operator size must be positive".into()));
    }
    let d = v.degree();
    let diag: Vec<f64> =
        (0..n).map(|j| w.eval_real(alpha.shift(x, j as i64)) + v.coeff(0).re).collect();
    let mut bands = Vec::with_capacity(d);
    for k in 1..=d {
        bands.push(vec![v.coeff(k as i64); n.saturating_sub(k)]);
    }
    let mut wrap = Vec::new();
    if let Boundary::Bloch(theta) = bc {
        let r = alpha
            .as_rational()
            .ok_or_else(|| Error::InvalidInput("Bloch boundary needs a rational frequency".into()))?;
        if r.q as usize != n {
            return Err(Error::InvalidInput(format!("Bloch boundary needs N = q = {}", r.q)));
        }
        let q = n as i64;
        for row in 0..q {
            for k in -(d as i64)..=(d as i64) {
                let t = row + k;
                let m = t.div_euclid(q);
                if m == 0 {
                    continue;
                }
                let col = t.rem_euclid(q);
                let phase = Complex64::from_polar(1.0, 2.0 * PI * m as f64 * theta);
                wrap.push((row as usize, col as usize, v.coeff(k) * phase));
            }
        }
    }
    Ok(FiniteOperator { size: n, bandwidth: d, boundary: bc, x, diag, bands, wrap })
}

impl FiniteOperator {
    pub fn dense(&self) -> CMat {
        let n = self.size;
        let mut h = CMat::zeros(n, n);
        for i in 0..n {
            h[(i, i)] = cr(self.diag[i]);
        }
        for (k, band) in self.bands.iter().enumerate() {
            for (i, &z) in band.iter().enumerate() {
                h[(i, i + k + 1)] += z;
                h[(i + k + 1, i)] += z.conj();
            }
        }
        for &(i, j, z) in &self.wrap {
            h[(i, j)] += z;
        }
        h
    }

    pub fn hermitian_residual(&self) -> f64 {
        linalg::hermitian_residual(&self.dense())
    }

    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        linalg::hermitian_eigenvalues(&self.dense())
    }

    /// Number of eigenvalues `≤ e`, by banded LDL* inertia when possible.
    pub fn count_at_most(&self, e: f64) -> usize {
        if !self.wrap.is_empty() {
            let vals = linalg::herm_eigvals(&self.dense());
            return vals.iter().filter(|&&l| l <= e).count();
        }
        banded_inertia(&self.diag, &self.bands, e)
    }
}

/// Negative-plus-zero pivot count of the banded `H - e` via LDL* without pivoting.
///
/// Zero pivots are replaced by a tiny negative number, so an exact tie is
/// counted as an eigenvalue `≤ e`.
fn banded_inertia(diag: &[f64], bands: &[Vec<Complex64>], e: f64) -> usize {
    let n = diag.len();
    let d = bands.len();
    let scale = diag.iter().fold(1.0_f64, |a, x| a.max(x.abs()))
        + bands.iter().flatten().map(|z| z.norm()).fold(0.0, f64::max);
    let pivmin = 1e-300_f64.max(f64::EPSILON * f64::EPSILON * scale);
    if d == 0 {
        return diag.iter().filter(|&&a| a - e <= 0.0).count();
    }
    if d == 1 {
        let mut count = 0;
        let mut piv = 0.0;
        for i in 0..n {
            let b2 = if i > 0 { bands[0][i - 1].norm_sqr() } else { 0.0 };
            let mut p = diag[i] - e - if i > 0 { b2 / piv } else { 0.0 };
            if p.abs() < pivmin {
                p = -pivmin;
            }
            if p < 0.0 {
                count += 1;
            }
            piv = p;
        }
        return count;
    }
    // l[i][j] = L[i][i - 1 - j] for the d subdiagonals of the unit lower factor.
    let mut piv = vec![0.0_f64; n];
    let mut l = vec![vec![Complex64::new(0.0, 0.0); d]; n];
    let mut count = 0;
    let h = |i: usize, j: usize| -> Complex64 {
        // H[i][j] for j < i within the band
        bands[i - j - 1][j].conj()
    };
    for j in 0..n {
        let lo = j.saturating_sub(d);
        let mut p = diag[j] - e;
        for k in lo..j {
            p -= l[j][j - 1 - k].norm_sqr() * piv[k];
        }
        if p.abs() < pivmin {
            p = -pivmin;
        }
        piv[j] = p;
        if p < 0.0 {
            count += 1;
        }
        for i in (j + 1)..n.min(j + d + 1) {
            let mut s = h(i, j);
            let lo_i = i.saturating_sub(d);
            for k in lo_i.max(lo)..j {
                s -= l[i][i - 1 - k] * l[j][j - 1 - k].conj() * piv[k];
            }
            l[i][i - 1 - j] = s / p;
        }
    }
    count
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IdsEstimate {
    pub energy: f64,
    pub value: f64,
    pub n: usize,
    pub x_samples: usize,
}

/// Phase-averaged counting function `#{E_j ≤ E}/N` of Dirichlet restrictions.
pub fn ids(
    v: &TrigPoly,
    w: &TrigPoly,
    alpha: &Frequency,
    e: f64,
    n: usize,
    m: usize,
) -> Result<IdsEstimate> {
    if n == 0 || m == 0 {
        return Err(Error::InvalidInput("ids needs N ≥ 1 and M ≥ 1".into()));
    }
    let counts: Vec<usize> = (0..m)
        .into_par_iter()
        .map(|i| {
            let x = i as f64 / m as f64;
            build_finite(v, w, alpha, x, n, Boundary::Dirichlet).map(|op| op.count_at_most(e))
        })
        .collect::<Result<_>>()?;
    let total: usize = counts.iter().sum();
    Ok(IdsEstimate { energy: e, value: total as f64 / (n * m) as f64, n, x_samples: m })
}

/// Phase samples and Bloch-band intervals of a periodic operator.
#[derive(Clone, Debug)]
pub struct FloquetSpectrum {
    pub pq: Rational,
    pub x_grid: usize,
    pub bloch_grid: usize,
    /// Sorted eigenvalues over all grid points.
    pub samples: Vec<f64>,
    /// `[min, max]` of the j-th Bloch eigenvalue over the grid, j = 0..q.
    pub index_bands: Vec<(f64, f64)>,
    /// Largest jump of any indexed eigenvalue between neighboring grid points.
    pub resolution: f64,
}

/// Sorted Bloch eigenvalues at phase `x` and Bloch phase `theta`.
pub fn bloch_eigenvalues(v: &TrigPoly, w: &TrigPoly, pq: Rational, x: f64, theta: f64) -> Vec<f64> {
    let op = build_finite(v, w, &Frequency::Rational(pq), x, pq.q as usize, Boundary::Bloch(theta))
        .expect("valid Bloch setup");
    linalg::herm_eigvals(&op.dense())
}

/// Bloch eigenvalues on the grid `x_i = x_lo + i·x_step`, `θ_j = j/bloch_grid`.
fn bloch_table(
    v: &TrigPoly,
    w: &TrigPoly,
    pq: Rational,
    xs: &[f64],
    bloch_grid: usize,
) -> Vec<Vec<Vec<f64>>> {
    xs.par_iter()
        .map(|&x| {
            (0..bloch_grid)
                .map(|j| bloch_eigenvalues(v, w, pq, x, j as f64 / bloch_grid as f64))
                .collect()
        })
        .collect()
}

fn summarize(table: &[Vec<Vec<f64>>], q: usize, periodic_x: bool) -> (Vec<f64>, Vec<(f64, f64)>, f64) {
    let mut samples = Vec::new();
    let mut bands = vec![(f64::INFINITY, f64::NEG_INFINITY); q];
    let mut res = 0.0_f64;
    let nx = table.len();
    for (ix, row) in table.iter().enumerate() {
        let nt = row.len();
        for (it, vals) in row.iter().enumerate() {
            for (j, &e) in vals.iter().enumerate() {
                samples.push(e);
                bands[j].0 = bands[j].0.min(e);
                bands[j].1 = bands[j].1.max(e);
                let nb = &row[(it + 1) % nt];
                res = res.max((nb[j] - e).abs());
                if ix + 1 < nx || periodic_x {
                    let nx_row = &table[(ix + 1) % nx];
                    res = res.max((nx_row[it][j] - e).abs());
                }
            }
        }
    }
    samples.sort_by(|a, b| a.total_cmp(b));
    (samples, bands, res)
}

/// Union of Bloch spectra over `x ∈ [0, 1/q)` and `θ ∈ [0, 1)`.
pub fn floquet_spectrum(
    v: &TrigPoly,
    w: &TrigPoly,
    pq: Rational,
    x_grid: usize,
    bloch_grid: usize,
) -> Result<FloquetSpectrum> {
    if x_grid < 1 || bloch_grid < 1 || pq.q < 1 {
        return Err(Error::InvalidInput("grid sizes and q must be positive".into()));
    }
    let q = pq.q as usize;
    let xs: Vec<f64> = (0..x_grid).map(|i| i as f64 / (q * x_grid) as f64).collect();
    let table = bloch_table(v, w, pq, &xs, bloch_grid);
    let (samples, index_bands, resolution) = summarize(&table, q, false);
    Ok(FloquetSpectrum { pq, x_grid, bloch_grid, samples, index_bands, resolution })
}

/// Bloch-band intervals at a fixed phase `x`.
pub fn floquet_at_phase(
    v: &TrigPoly,
    w: &TrigPoly,
    pq: Rational,
    x: f64,
    bloch_grid: usize,
) -> Result<FloquetSpectrum> {
    if bloch_grid < 1 || pq.q < 1 {
        return Err(Error::InvalidInput("grid sizes and q must be positive".into()));
    }
    let q = pq.q as usize;
    let row: Vec<Vec<f64>> = (0..bloch_grid)
        .map(|j| bloch_eigenvalues(v, w, pq, x, j as f64 / bloch_grid as f64))
        .collect();
    let (samples, index_bands, resolution) = summarize(&[row], q, true);
    Ok(FloquetSpectrum { pq, x_grid: 1, bloch_grid, samples, index_bands, resolution })
}

/// Aubry duality exchanges the roles of hopping and potential.
pub fn aubry_dual(v: &TrigPoly, w: &TrigPoly) -> (TrigPoly, TrigPoly) {
    (w.clone(), v.clone())
}

/// Blocks `(C_d, V_d(x))` of the width-d strip form of the operator with hopping `v`
/// and potential `w`; block `n` carries sites `dn+d-1, …, dn` in that order.
///
/// `C[i][j] = v̂_{d-(j-i)}` for `j ≥ i`, `V[i][j] = v̂_{i-j}` off the diagonal and
/// `V[i][i] = v̂_0 + w(x + (d-1-i)α)`.
pub fn dual_strip_matrices(
    v: &TrigPoly,
    w: &TrigPoly,
    alpha: f64,
    x: Complex64,
    e: f64,
) -> Result<(CMat, CMat)> {
    let _ = e;
    let d = v.degree();
    if d == 0 || v.coeff(d as i64).norm() == 0.0 {
        return Err(Error::DegenerateDegree);
    }
    let mut cm = CMat::zeros(d, d);
    let mut vm = CMat::zeros(d, d);
    for i in 0..d {
        for j in 0..d {
            if j >= i {
                cm[(i, j)] = v.coeff((d - (j - i)) as i64);
            }
            if i != j {
                vm[(i, j)] = v.coeff(i as i64 - j as i64);
            }
        }
        let xi = x + cr((d - 1 - i) as f64 * alpha);
        vm[(i, i)] = v.coeff(0) + w.eval(xi);
    }
    Ok((cm, vm))
}

/// Dirichlet restriction of the strip operator to `N` blocks (a `dN × dN` matrix).
pub fn strip_operator(v: &TrigPoly, w: &TrigPoly, alpha: &Frequency, x: f64, n: usize) -> Result<CMat> {
    let d = v.degree();
    let a = alpha.value();
    let mut h = CMat::zeros(d * n, d * n);
    for b in 0..n {
        let xb = alpha.shift(x, (d * b) as i64);
        let (cm, vm) = dual_strip_matrices(v, w, a, cr(xb), 0.0)?;
        h.view_mut((d * b, d * b), (d, d)).copy_from(&vm);
        if b + 1 < n {
            h.view_mut((d * b, d * (b + 1)), (d, d)).copy_from(&cm);
            h.view_mut((d * (b + 1), d * b), (d, d)).copy_from(&cm.adjoint());
        }
    }
    Ok(h)
}

/// Permutation taking strip coordinates to scalar site order.
pub fn strip_to_sites(d: usize, n: usize) -> DMatrix<f64> {
    let mut p = DMatrix::zeros(d * n, d * n);
    for b in 0..n {
        for i in 0..d {
            p[(d * b + d - 1 - i, d * b + i)] = 1.0;
        }
    }
    p
}

#[cfg(test)]
mod tests {
    use super::*;

    fn amo(lambda: f64) -> (TrigPoly, TrigPoly) {
        (TrigPoly::cosine(1.0), TrigPoly::cosine(lambda))
    }

    #[test]
    fn eval_examples() {
        let v = TrigPoly::cosine(1.0);
        assert!((v.eval(cr(0.0)) - cr(2.0)).norm() < 1e-14);
        assert!(v.eval(cr(0.25)).norm() < 1e-14);
        assert!((v.eval(cr(1.0 / 3.0)) - cr(-1.0)).norm() < 1e-14);
        assert!(v.eval(cr(0.3)).im.abs() < 1e-14);
    }

    #[test]
    fn json_round_trip() {
        let v = TrigPoly::new(vec![c(0.3, 0.1), cr(2.0), cr(1.0), cr(2.0), c(0.3, -0.1)]).unwrap();
        let back = TrigPoly::from_json(&v.to_json()).unwrap();
        assert_eq!(v, back);
        assert!(TrigPoly::from_json(r#"{"degree":1,"coeffs":[[1,0],[0,0]]}"#).is_err());
    }

    use crate::linalg::c;

    #[test]
    fn rejects_non_real_coefficients() {
        assert!(TrigPoly::new(vec![cr(1.0), cr(0.0), cr(2.0)]).is_err());
    }

    #[test]
    fn tridiagonal_free_chain() {
        let op = build_finite(
            &TrigPoly::cosine(1.0),
            &TrigPoly::zero(),
            &Frequency::golden(),
            0.0,
            3,
            Boundary::Dirichlet,
        )
        .unwrap();
        let expect = linalg::real_matrix(3, 3, &[0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0]);
        assert!(linalg::max_abs(&(op.dense() - expect)) == 0.0);
    }

    #[test]
    fn bloch_requires_rational() {
        let (v, w) = amo(1.0);
        assert!(build_finite(&v, &w, &Frequency::golden(), 0.0, 5, Boundary::Bloch(0.0)).is_err());
        let f = Frequency::rational(2, 5).unwrap();
        assert!(build_finite(&v, &w, &f, 0.0, 4, Boundary::Bloch(0.0)).is_err());
        let op = build_finite(&v, &w, &f, 0.1, 5, Boundary::Bloch(0.3)).unwrap();
        assert!(op.hermitian_residual() < 1e-14);
    }

    #[test]
    fn convergents_of_golden_mean() {
        let cs = convergents(golden_mean(), 100);
        let qs: Vec<i64> = cs.iter().map(|r| r.q).collect();
        assert_eq!(qs, vec![1, 2, 3, 5, 8, 13, 21, 34, 55, 89]);
        assert!(cs.iter().all(|r| gcd(r.p, r.q) == 1));
        let b = Frequency::golden().beta();
        assert!(b < 0.1);
    }

    #[test]
    fn rational_shift_is_exact() {
        let r = Rational::new(3, 7).unwrap();
        assert_eq!(r.shift(0.0, 7), 0.0);
        assert!((r.shift(0.1, 1_000_000_001) - linalg::frac(0.1 + 3.0 * 1_000_000_001.0 / 7.0)).abs() < 1e-6);
    }

    #[test]
    fn dual_strip_small_cases() {
        let v = TrigPoly::new(vec![cr(1.0), c(0.0, -1.0), cr(0.0), c(0.0, 1.0), cr(1.0)]).unwrap();
        let (cm, vm) = dual_strip_matrices(&v, &TrigPoly::cosine(1.0), 0.3, cr(0.1), 0.0).unwrap();
        let expect = CMat::from_row_slice(2, 2, &[cr(1.0), c(0.0, 1.0), cr(0.0), cr(1.0)]);
        assert!(linalg::max_abs(&(cm - expect)) < 1e-15);
        assert!(linalg::hermitian_residual(&vm) == 0.0);
        let v1 = TrigPoly::cosine(0.7);
        let (c1, v1m) = dual_strip_matrices(&v1, &TrigPoly::cosine(1.0), 0.3, cr(0.2), 0.0).unwrap();
        assert!((c1[(0, 0)] - cr(0.7)).norm() < 1e-15);
        assert!((v1m[(0, 0)].re - 2.0 * (2.0 * PI * 0.2).cos()).abs() < 1e-14);
        assert!(matches!(
            dual_strip_matrices(&TrigPoly::zero(), &v1, 0.3, cr(0.0), 0.0),
            Err(Error::DegenerateDegree)
        ));
    }

    #[test]
    fn banded_inertia_matches_dense() {
        let v = TrigPoly::new(vec![c(0.2, 0.1), c(0.5, -0.3), cr(0.4), c(0.5, 0.3), c(0.2, -0.1)]).unwrap();
        let w = TrigPoly::cosine_series(0.0, &[1.3, 0.4]);
        let op = build_finite(&v, &w, &Frequency::golden(), 0.37, 60, Boundary::Dirichlet).unwrap();
        let vals = op.eigenvalues().unwrap();
        for e in linalg::linspace(-4.0, 4.0, 41) {
            let dense = vals.iter().filter(|&&l| l <= e).count();
            assert_eq!(op.count_at_most(e), dense, "E = {e}");
        }
    }

    #[test]
    fn floquet_edges_of_period_two() {
        let (v, w) = amo(2.0);
        let fs = floquet_spectrum(&v, &w, Rational::new(1, 2).unwrap(), 64, 16).unwrap();
        let r = 20.0_f64.sqrt();
        assert!((fs.samples[0] + r).abs() < 1e-10);
        assert!((fs.samples.last().unwrap() - r).abs() < 1e-10);
    }
}
