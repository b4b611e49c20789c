//! Dense complex linear algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use std::f64::consts::PI;

use crate::error::{Error, Result};

pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;

pub const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

#[inline]
pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

#[inline]
pub fn cr(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

pub fn eye(n: usize) -> CMat {
    CMat::identity(n, n)
}

/// Canonical skew-Hermitian form `[[0, -I], [I, 0]]` on C^{2m}.
pub fn j_canonical(m: usize) -> CMat {
    let mut j = CMat::zeros(2 * m, 2 * m);
    for i in 0..m {
        j[(i, m + i)] = cr(-1.0);
        j[(m + i, i)] = cr(1.0);
    }
    j
}

pub fn max_abs(m: &CMat) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

/// Spectral norm.
pub fn norm2(m: &CMat) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    m.clone().svd(false, false).singular_values.max()
}

pub fn singular_values(m: &CMat) -> Vec<f64> {
    let mut s: Vec<f64> = m.clone().svd(false, false).singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

pub fn hermitian_residual(m: &CMat) -> f64 {
    max_abs(&(m - m.adjoint()))
}

/// Eigen-decomposition of a Hermitian matrix, eigenvalues ascending.
pub fn herm_eig(m: &CMat) -> (Vec<f64>, CMat) {
    let h = (m + m.adjoint()).scale(0.5);
    let eig = SymmetricEigen::new(h);
    let n = m.nrows();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let vals = idx.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vecs = CMat::zeros(n, n);
    for (k, &i) in idx.iter().enumerate() {
        vecs.set_column(k, &eig.eigenvectors.column(i));
    }
    (vals, vecs)
}

pub fn herm_eigvals(m: &CMat) -> Vec<f64> {
    let h = (m + m.adjoint()).scale(0.5);
    let mut v: Vec<f64> = h.symmetric_eigenvalues().iter().copied().collect();
    v.sort_by(|a, b| a.total_cmp(b));
    v
}

/// Eigenvalues of a Hermitian matrix, rejecting inputs that are not Hermitian.
pub fn hermitian_eigenvalues(m: &CMat) -> Result<Vec<f64>> {
    if m.nrows() != m.ncols() {
        return Err(Error::InvalidInput("matrix is not square".into()));
    }
    let scale = max_abs(m).max(1.0);
    let res = hermitian_residual(m);
    if res > 1e-10 * scale {
        return Err(Error::InvalidInput(format!("matrix is not Hermitian (residual {res:.3e})")));
    }
    Ok(herm_eigvals(m))
}

/// Complex Schur form `m = q t q*` with `t` upper triangular.
pub fn schur(m: &CMat) -> (CMat, CMat) {
    let (q, mut t) = m.clone().schur().unpack();
    for i in 0..t.nrows() {
        for j in 0..i {
            t[(i, j)] = cr(0.0);
        }
    }
    (q, t)
}

pub fn eigvals(m: &CMat) -> Vec<Complex64> {
    let n = m.nrows();
    if n == 1 {
        return vec![m[(0, 0)]];
    }
    if n == 2 {
        let tr = m[(0, 0)] + m[(1, 1)];
        let det = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
        let disc = (tr * tr - det * 4.0).sqrt();
        return vec![(tr + disc) * 0.5, (tr - disc) * 0.5];
    }
    let (_, t) = schur(m);
    (0..n).map(|i| t[(i, i)]).collect()
}

pub fn det(m: &CMat) -> Complex64 {
    m.clone().lu().determinant()
}

pub fn inverse(m: &CMat) -> Result<CMat> {
    m.clone()
        .try_inverse()
        .ok_or_else(|| Error::Numerical("singular matrix".into()))
}

/// Solves `a x = b`.
pub fn solve(a: &CMat, b: &CMat) -> Result<CMat> {
    a.clone()
        .lu()
        .solve(b)
        .ok_or_else(|| Error::Numerical("singular linear system".into()))
}

/// Orthonormal basis of the column span (thin QR).
pub fn orthonormalize(m: &CMat) -> CMat {
    m.clone().qr().q()
}

/// Least-squares coefficients `g` minimizing `|a g - b|`.
pub fn lstsq(a: &CMat, b: &CMat) -> Result<CMat> {
    let ah = a.adjoint();
    solve(&(&ah * a), &(&ah * b))
}

/// Orthogonal projector onto the column span of `m`.
pub fn projector(m: &CMat) -> CMat {
    let q = orthonormalize(m);
    &q * q.adjoint()
}

/// Grassmannian distance `|P_a - P_b|_2` between column spans.
pub fn subspace_distance(a: &CMat, b: &CMat) -> f64 {
    if a.ncols() == 0 && b.ncols() == 0 {
        return 0.0;
    }
    norm2(&(projector(a) - projector(b)))
}

pub fn condition_number(m: &CMat) -> f64 {
    let s = singular_values(m);
    let lo = *s.last().unwrap_or(&0.0);
    if lo == 0.0 {
        f64::INFINITY
    } else {
        s[0] / lo
    }
}

/// `exp(s log h)` for Hermitian positive definite `h`.
pub fn herm_pow(h: &CMat, s: f64) -> CMat {
    let (vals, vecs) = herm_eig(h);
    let d = CMat::from_diagonal(&CVec::from_iterator(
        vals.len(),
        vals.iter().map(|&l| cr(l.max(f64::MIN_POSITIVE).powf(s))),
    ));
    &vecs * d * vecs.adjoint()
}

/// Spectral data `(z, eigenvalues)` of a normal matrix, `m = z diag z*`.
pub fn normal_eig(m: &CMat) -> (CMat, Vec<Complex64>) {
    let (q, t) = schur(m);
    let vals = (0..t.nrows()).map(|i| t[(i, i)]).collect();
    (q, vals)
}

/// Principal fractional power `u^s` of a unitary matrix, arguments in (-π, π].
pub fn unitary_pow(z: &CMat, vals: &[Complex64], s: f64) -> CMat {
    let d = CMat::from_diagonal(&CVec::from_iterator(
        vals.len(),
        vals.iter().map(|l| {
            let mut a = l.arg();
            if a <= -PI {
                a += 2.0 * PI;
            }
            Complex64::from_polar(1.0, s * a)
        }),
    ));
    z * d * z.adjoint()
}

/// `x^{-1/2}` by the coupled Newton-Schulz iteration, falling back to Denman-Beavers.
///
/// Both iterations only form polynomials and inverses of `x`, so the result
/// commutes with `x` and inherits any real-coefficient functional identity.
pub fn inv_sqrt(x: &CMat, tol: f64, max_iter: usize) -> Result<CMat> {
    let n = x.nrows();
    let id = eye(n);
    if max_abs(&(x - &id)) < 0.5 {
        let mut y = id.clone();
        for _ in 0..max_iter {
            let r = &id * cr(3.0) - &y * &y * x;
            let next = &y * r * cr(0.5);
            let delta = max_abs(&(&next - &y));
            y = next;
            if delta < tol {
                return Ok(y);
            }
        }
    }
    let mut y = x.clone();
    let mut z = id.clone();
    for _ in 0..max_iter {
        let yi = inverse(&y)?;
        let zi = inverse(&z)?;
        let ny = (&y + &zi) * cr(0.5);
        let nz = (&z + &yi) * cr(0.5);
        let delta = max_abs(&(&ny - &y));
        y = ny;
        z = nz;
        if delta < tol * max_abs(&y).max(1.0) {
            return Ok(z);
        }
    }
    Err(Error::Numerical("inverse square root did not converge".into()))
}

/// Principal argument in [-π, π).
#[inline]
pub fn arg_half_open(z: Complex64) -> f64 {
    let a = z.arg();
    if a >= PI {
        a - 2.0 * PI
    } else {
        a
    }
}

/// Block-diagonal direct sum.
pub fn direct_sum(a: &CMat, b: &CMat) -> CMat {
    let (n, m) = (a.nrows(), b.nrows());
    let mut out = CMat::zeros(n + m, a.ncols() + b.ncols());
    out.view_mut((0, 0), (n, a.ncols())).copy_from(a);
    out.view_mut((n, a.ncols()), (m, b.ncols())).copy_from(b);
    out
}

pub fn hstack(a: &CMat, b: &CMat) -> CMat {
    let mut out = CMat::zeros(a.nrows(), a.ncols() + b.ncols());
    out.view_mut((0, 0), (a.nrows(), a.ncols())).copy_from(a);
    out.view_mut((0, a.ncols()), (b.nrows(), b.ncols())).copy_from(b);
    out
}

pub fn vstack(a: &CMat, b: &CMat) -> CMat {
    let mut out = CMat::zeros(a.nrows() + b.nrows(), a.ncols());
    out.view_mut((0, 0), (a.nrows(), a.ncols())).copy_from(a);
    out.view_mut((a.nrows(), 0), (b.nrows(), b.ncols())).copy_from(b);
    out
}

pub fn real_matrix(rows: usize, cols: usize, data: &[f64]) -> CMat {
    CMat::from_row_iterator(rows, cols, data.iter().map(|&x| cr(x)))
}

pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

/// Reduces a phase to [0, 1).
#[inline]
pub fn frac(x: f64) -> f64 {
    let f = x - x.floor();
    if f >= 1.0 {
        0.0
    } else {
        f
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schur_recovers_eigenvalues() {
        let m = real_matrix(3, 3, &[2.0, 1.0, 0.0, 0.0, 3.0, 1.0, 1.0, 0.0, -1.0]);
        let (q, t) = schur(&m);
        assert!(max_abs(&(&q * &t * q.adjoint() - &m)) < 1e-12);
        let mut tr = cr(0.0);
        for z in eigvals(&m) {
            tr += z;
        }
        assert!((tr - cr(4.0)).norm() < 1e-12);
    }

    #[test]
    fn inv_sqrt_matches_definition() {
        let x = real_matrix(2, 2, &[1.1, 0.2, 0.2, 0.9]);
        let y = inv_sqrt(&x, 1e-14, 60).unwrap();
        assert!(max_abs(&(&y * &y * &x - eye(2))) < 1e-12);
        let far = real_matrix(2, 2, &[9.0, 1.0, 1.0, 4.0]);
        let y = inv_sqrt(&far, 1e-14, 60).unwrap();
        assert!(max_abs(&(&y * &y * &far - eye(2))) < 1e-10);
    }

    #[test]
    fn unitary_pow_interpolates() {
        let th = 0.7_f64;
        let u = real_matrix(2, 2, &[th.cos(), -th.sin(), th.sin(), th.cos()]);
        let (z, vals) = normal_eig(&u);
        let half = unitary_pow(&z, &vals, 0.5);
        assert!(max_abs(&(&half * &half - &u)) < 1e-12);
    }
}
