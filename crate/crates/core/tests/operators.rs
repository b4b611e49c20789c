mod common;

use std::f64::consts::PI;

use common::{amo, trig};
use nalgebra::DMatrix;
use num_complex::Complex64;
use proptest::prelude::*;
use qpspectra::gaps::{band_structure, spectrum_gaps};
use qpspectra::linalg::herm_eigvals;
use qpspectra::operators::{
    build_finite, floquet_spectrum, ids, strip_operator, Boundary, Frequency, Rational, TrigPoly,
};

/// Sorted eigenvalues of a q×q Bloch matrix of the nearest-neighbor operator with potential `pot`.
fn bloch_oracle(pot: &dyn Fn(f64) -> f64, p: i64, q: usize, x: f64, theta: f64) -> Vec<f64> {
    let mut h = DMatrix::<Complex64>::zeros(q, q);
    for n in 0..q {
        h[(n, n)] += Complex64::new(pot(x + (n as i64 * p) as f64 / q as f64), 0.0);
        let m = (n + 1) % q;
        let ph = if n + 1 == q { Complex64::from_polar(1.0, 2.0 * PI * theta) } else { Complex64::new(1.0, 0.0) };
        h[(n, m)] += ph;
        h[(m, n)] += ph.conj();
    }
    herm_eigvals(&h)
}

#[test]
fn free_chain_closed_form() {
    let (v, w) = (TrigPoly::cosine(1.0), TrigPoly::zero());
    for n in [3usize, 17, 100] {
        let op = build_finite(&v, &w, &Frequency::golden(), 0.0, n, Boundary::Dirichlet).unwrap();
        let got = op.eigenvalues().unwrap();
        let mut want: Vec<f64> = (1..=n).map(|j| 2.0 * (PI * j as f64 / (n + 1) as f64).cos()).collect();
        want.sort_by(f64::total_cmp);
        let err = got.iter().zip(&want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-10, "n = {n}: {err:e}");
    }
}

#[test]
fn amo_half_spectrum_matches_trace_oracle() {
    let (v, w) = amo(2.0);
    let pq = Rational::new(1, 2).unwrap();
    let x_grid = 64;
    let bs = spectrum_gaps(&v, &w, pq, x_grid, 64).unwrap();
    // tr = E² − a² − 2 with a = 2λcos 2πx; |tr| ≤ 2 ⇔ |a| ≤ |E| ≤ √(a² + 4).
    let mut pieces: Vec<(f64, f64)> = Vec::new();
    for i in 0..x_grid {
        let a = (4.0 * (2.0 * PI * i as f64 / (2 * x_grid) as f64).cos()).abs();
        let b = (a * a + 4.0).sqrt();
        pieces.push((-b, -a));
        pieces.push((a, b));
    }
    pieces.sort_by(|p, q| p.0.total_cmp(&q.0));
    let mut merged: Vec<(f64, f64)> = Vec::new();
    for (a, b) in pieces {
        match merged.last_mut() {
            Some(last) if a <= last.1 + 1e-12 => last.1 = last.1.max(b),
            _ => merged.push((a, b)),
        }
    }
    assert_eq!(merged.len(), 1);
    assert!(bs.gaps.is_empty(), "{:?}", bs.gaps);
    assert_eq!(bs.bands.len(), 1);
    assert!((bs.bands[0].0 + 20f64.sqrt()).abs() < 1e-9);
    assert!((bs.bands[0].1 - 20f64.sqrt()).abs() < 1e-9);
    assert!((merged[0].1 - 20f64.sqrt()).abs() < 1e-12);
}

#[test]
fn ids_matches_floquet_count() {
    let (v, w) = amo(2.0);
    let (p, q) = (13i64, 21usize);
    let m = 32;
    let n = 50 * q;
    let got = ids(&v, &w, &Frequency::rational(p, q as i64).unwrap(), 0.0, n, m).unwrap().value;
    let pot = |x: f64| 4.0 * (2.0 * PI * x).cos();
    let thetas = 256;
    let mut total = 0usize;
    for i in 0..m {
        let x = i as f64 / m as f64;
        for t in 0..thetas {
            let th = (t as f64 + 0.5) / thetas as f64;
            total += bloch_oracle(&pot, p, q, x, th).iter().filter(|&&e| e <= 0.0).count();
        }
    }
    let want = total as f64 / (m * thetas * q) as f64;
    let tol = 2.0 / n as f64 + 1.0 / (thetas * q) as f64;
    assert!((got - want).abs() <= tol, "{got} vs {want}");
}

#[test]
fn bloch_eigenvalues_match_oracle() {
    let (v, w) = amo(1.3);
    let pq = Rational::new(3, 7).unwrap();
    let pot = |x: f64| 2.6 * (2.0 * PI * x).cos();
    for (x, th) in [(0.0, 0.0), (0.031, 0.25), (0.11, 0.6)] {
        let got = qpspectra::operators::bloch_eigenvalues(&v, &w, pq, x, th);
        let want = bloch_oracle(&pot, 3, 7, x, th);
        for (a, b) in got.iter().zip(&want) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn amo_is_self_dual_up_to_scaling() {
    let pq = Rational::new(3, 5).unwrap();
    let lam = 2.0;
    let (v, w) = amo(lam);
    let direct = floquet_spectrum(&v, &w, pq, 24, 24).unwrap();
    let dual = floquet_spectrum(&w, &v, pq, 24, 24).unwrap();
    let (vs, ws) = amo(1.0 / lam);
    let small = floquet_spectrum(&vs, &ws, pq, 24, 24).unwrap();
    let a = band_structure(&direct, 0.0).bands;
    let b = band_structure(&dual, 0.0).bands;
    let c = band_structure(&small, 0.0).bands;
    assert_eq!(a.len(), b.len());
    assert_eq!(a.len(), c.len());
    for ((x, y), z) in a.iter().zip(&b).zip(&c) {
        assert!((x.0 - y.0).abs() < 1e-8 && (x.1 - y.1).abs() < 1e-8, "{x:?} vs {y:?}");
        assert!((x.0 - lam * z.0).abs() < 1e-8 && (x.1 - lam * z.1).abs() < 1e-8);
    }
}

#[test]
fn spectrum_is_invariant_under_phase_shift() {
    let (v, w) = amo(1.5);
    let pq = Rational::new(2, 5).unwrap();
    for x in [0.013, 0.2] {
        let a = qpspectra::operators::floquet_at_phase(&v, &w, pq, x, 32).unwrap().samples;
        let b = qpspectra::operators::floquet_at_phase(&v, &w, pq, x + 2.0 / 5.0, 32).unwrap().samples;
        let err = a.iter().zip(&b).map(|(s, t)| (s - t).abs()).fold(0.0, f64::max);
        assert!(err < 1e-12);
    }
}

#[test]
fn bloch_boundary_rejects_irrational_frequency() {
    let (v, w) = amo(1.0);
    assert!(build_finite(&v, &w, &Frequency::golden(), 0.0, 5, Boundary::Bloch(0.0)).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn finite_operators_are_hermitian(
        v in (1usize..=3).prop_flat_map(|d| trig(d, true)),
        w in (0usize..=2).prop_flat_map(|d| trig(d, true)),
        x in 0.0f64..1.0,
        n in 1usize..40,
        theta in 0.0f64..1.0,
    ) {
        let op = build_finite(&v, &w, &Frequency::golden(), x, n, Boundary::Dirichlet).unwrap();
        prop_assert!(op.hermitian_residual() <= 1e-12);
        let pq = Frequency::rational(2, 7).unwrap();
        let op = build_finite(&v, &w, &pq, x, 7, Boundary::Bloch(theta)).unwrap();
        prop_assert!(op.hermitian_residual() <= 1e-12);
    }

    #[test]
    fn ids_is_nondecreasing(
        v in (1usize..=2).prop_flat_map(|d| trig(d, false)),
        w in trig(1, false),
        mut es in prop::collection::vec(-8.0f64..8.0, 2..8),
    ) {
        es.sort_by(f64::total_cmp);
        let vals: Vec<f64> = es
            .iter()
            .map(|&e| ids(&v, &w, &Frequency::golden(), e, 60, 4).unwrap().value)
            .collect();
        prop_assert!(vals.windows(2).all(|p| p[0] <= p[1]));
    }

    #[test]
    fn banded_count_matches_dense(
        v in (1usize..=3).prop_flat_map(|d| trig(d, true)),
        w in trig(2, false),
        x in 0.0f64..1.0,
        e in -6.0f64..6.0,
    ) {
        let op = build_finite(&v, &w, &Frequency::golden(), x, 30, Boundary::Dirichlet).unwrap();
        let dense = op.eigenvalues().unwrap().iter().filter(|&&z| z <= e).count();
        prop_assert_eq!(op.count_at_most(e), dense);
    }

    #[test]
    fn strip_restriction_equals_scalar_restriction(
        v in (1usize..=3).prop_flat_map(|d| trig(d, true)),
        w in trig(1, false),
        x in 0.0f64..1.0,
        n in 2usize..12,
    ) {
        let d = v.degree();
        let alpha = Frequency::golden();
        let strip = herm_eigvals(&strip_operator(&v, &w, &alpha, x, n).unwrap());
        let scalar = build_finite(&v, &w, &alpha, x, d * n, Boundary::Dirichlet).unwrap().eigenvalues().unwrap();
        let err = strip.iter().zip(&scalar).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        prop_assert!(err <= 1e-10, "{err:e}");
    }
}
