mod common;

use std::f64::consts::PI;

use common::amo;
use nalgebra::DMatrix;
use num_complex::Complex64;
use proptest::prelude::*;
use qpspectra::gaps::{
    count_vs_phase, gap_label, gaps_at_phase, holder_experiment, ids_rotation_check, joint_gap, normalized_trace,
};
use qpspectra::lagrangian::rotation_matrix;
use qpspectra::linalg::{herm_eigvals, linspace, real_matrix};
use qpspectra::operators::{gcd, Rational, TrigPoly};

/// Bloch eigenvalues of the nearest-neighbor operator with potential `2λ cos 2πx`.
fn bloch(lambda: f64, p: i64, q: usize, x: f64, theta: f64) -> Vec<f64> {
    let mut h = DMatrix::<Complex64>::zeros(q, q);
    for n in 0..q {
        let xn = x + (n as i64 * p) as f64 / q as f64;
        h[(n, n)] += Complex64::new(2.0 * lambda * (2.0 * PI * xn).cos(), 0.0);
        let m = (n + 1) % q;
        let ph = if n + 1 == q { Complex64::from_polar(1.0, 2.0 * PI * theta) } else { Complex64::new(1.0, 0.0) };
        h[(n, m)] += ph;
        h[(m, n)] += ph.conj();
    }
    herm_eigvals(&h)
}

/// Open gap above the `ell`-th band at phase `x`; for a tridiagonal Bloch matrix the
/// band edges sit at θ = 0 and θ = 1/2.
fn oracle_gap(lambda: f64, p: i64, q: usize, x: f64, ell: usize) -> Option<(f64, f64)> {
    let (a, b) = (bloch(lambda, p, q, x, 0.0), bloch(lambda, p, q, x, 0.5));
    let top = a[ell - 1].max(b[ell - 1]);
    let bottom = a[ell].min(b[ell]);
    (bottom > top).then_some((top, bottom))
}

fn oracle_label(ell: i64, p: i64, q: i64) -> i64 {
    (-q / 2..=q / 2)
        .rev()
        .filter(|k| (ell + k * p).rem_euclid(q) == 0)
        .min_by_key(|k| k.abs())
        .unwrap()
}

#[test]
fn two_fifths_labels() {
    let pq = Rational::new(2, 5).unwrap();
    let got: Vec<i64> = (1..=4).map(|l| gap_label(l, pq).unwrap()).collect();
    assert_eq!(got, vec![2, -1, 1, -2]);
    assert!(gap_label(0, Rational::new(0, 1).unwrap()).is_err());
}

#[test]
fn joint_gaps_match_bloch_edge_oracle() {
    let (p, q) = (3i64, 5usize);
    let x_grid = 16;
    let (v, w) = amo(2.0);
    let pq = Rational::new(p, q as i64).unwrap();
    for ell in 1..q {
        let k = oracle_label(ell as i64, p, q as i64);
        let mut lo = f64::NEG_INFINITY;
        let mut hi = f64::INFINITY;
        let mut open = true;
        for i in 0..x_grid {
            match oracle_gap(2.0, p, q, i as f64 / (q * x_grid) as f64, ell) {
                Some((a, b)) => {
                    lo = lo.max(a);
                    hi = hi.min(b);
                }
                None => open = false,
            }
        }
        let want = (open && lo < hi).then_some((lo, hi));
        let got = joint_gap(&v, &w, pq, x_grid, k, 64).unwrap();
        assert!(want.is_some() && k.abs() <= 2);
        let (g, o) = (got.unwrap(), want.unwrap());
        assert!((g.0 - o.0).abs() < 1e-9 && (g.1 - o.1).abs() < 1e-9, "k = {k}: {g:?} vs {o:?}");
    }
}

/// Bands move with `x`, so the invariant concerns energies inside the joint gap `⋂_x G_k(x)`.
#[test]
fn gap_labels_do_not_depend_on_phase() {
    let (v, w) = amo(2.0);
    let pq = Rational::new(5, 8).unwrap();
    let x_grid = 8;
    let xs: Vec<f64> = (0..x_grid).map(|i| i as f64 / (8 * x_grid) as f64).collect();
    let mut checked = 0;
    for k in -4..=4 {
        let Some((lo, hi)) = joint_gap(&v, &w, pq, x_grid, k, 64).unwrap() else { continue };
        let e = 0.5 * (lo + hi);
        for &x in &xs {
            let bs = gaps_at_phase(&v, &w, pq, x, 64).unwrap();
            let g = bs.gaps.iter().find(|g| g.lo < e && e < g.hi).expect("joint gap is open at every phase");
            assert_eq!(g.k, Some(k), "E = {e}, x = {x}");
        }
        checked += 1;
    }
    assert!(checked >= 6);
}

#[test]
fn counting_at_the_ends_of_the_spectrum() {
    let (v, w) = amo(2.0);
    let pq = Rational::new(3, 8).unwrap();
    let n = 24;
    let top = count_vs_phase(&v, &w, pq, 0.1, n, 20.0).unwrap();
    assert_eq!(top.count, n);
    assert!(top.phase.abs() < 0.5 && top.consistent);
    let bottom = count_vs_phase(&v, &w, pq, 0.1, n, -20.0).unwrap();
    assert_eq!(bottom.count, 0);
    assert!(bottom.consistent);
}

#[test]
fn rotation_is_nonincreasing_in_energy() {
    let (v, w) = amo(1.5);
    let pq = Rational::new(8, 13).unwrap();
    let es = linspace(-6.0, 6.0, 41);
    let rep = ids_rotation_check(&v, &w, pq, &es, 0.07, 260).unwrap();
    let tol = 1.0 / rep.blocks as f64;
    assert!((rep.rows[0].rho - 1.0).abs() < tol && rep.rows[0].lhs == 1.0);
    assert!(rep.rows[40].rho.abs() < tol && rep.rows[40].lhs == 0.0);
    for pair in rep.rows.windows(2) {
        assert!(pair[1].rho <= pair[0].rho + 1e-9, "{:?}", pair);
    }
}

#[test]
fn holder_trivial_cases() {
    let hop = TrigPoly::cosine(1.0);
    let pairs = [(Rational::new(1, 3).unwrap(), Rational::new(2, 5).unwrap())];
    let rows = holder_experiment(&hop, &TrigPoly::zero(), &pairs, 4, 16).unwrap();
    assert!(rows[0].ratio < 1e-12);
    let (v, w) = amo(2.0);
    let same = [(Rational::new(3, 5).unwrap(), Rational::new(3, 5).unwrap())];
    assert_eq!(holder_experiment(&v, &w, &same, 4, 16).unwrap()[0].ratio, 0.0);
}

#[test]
fn traces_of_constant_centers() {
    assert!((normalized_trace(&rotation_matrix(0.1)) - 2.0 * (0.2 * PI).cos()).abs() < 1e-14);
    assert!((normalized_trace(&real_matrix(2, 2, &[2.0, 0.0, 0.0, 0.5])) - 2.5).abs() < 1e-14);
}

proptest! {
    #[test]
    fn labels_solve_the_congruence(q in 2i64..60, p_raw in 1i64..60, ell_raw in 1i64..60) {
        let p = p_raw % q;
        prop_assume!(p > 0 && gcd(p, q) == 1);
        let ell = 1 + ell_raw % (q - 1);
        let k = gap_label(ell, Rational::new(p, q).unwrap()).unwrap();
        prop_assert_eq!((ell + k * p).rem_euclid(q), 0);
        prop_assert!(2 * k.abs() <= q);
        prop_assert_eq!(k, oracle_label(ell, p, q));
    }
}
