mod common;

use std::f64::consts::PI;

use common::{amo, trig};
use nalgebra::{DMatrix, Matrix2};
use num_complex::Complex64;
use proptest::prelude::*;
use qpspectra::cocycles::{
    check_symplectic, complexified_exponent, constant_cocycle, detect_dominated, dual_cocycle, iterate,
    longrange_cocycle, lyapunov_exponents, monotonicity_form, solve_cohomological, LeOptions,
};
use qpspectra::linalg::{c, cr, max_abs, real_matrix, CMat, CVec};
use qpspectra::operators::{golden_mean, Frequency, TrigPoly};
use qpspectra::verify::ph_test_operator;

/// `L^{E,d}(x)` written out entry by entry.
fn longrange_oracle(v: &TrigPoly, w: &TrigPoly, e: f64, x: f64) -> DMatrix<Complex64> {
    let d = v.degree() as i64;
    let n = 2 * d as usize;
    let lead = v.coeff(d);
    let mut m = DMatrix::zeros(n, n);
    for (col, k) in ((-d)..d).rev().enumerate() {
        m[(0, col)] = if k == 0 {
            (cr(e - w.eval_real(x)) - v.coeff(0)) / lead
        } else {
            -v.coeff(k) / lead
        };
    }
    for i in 1..n {
        m[(i, i - 1)] = cr(1.0);
    }
    m
}

#[test]
fn dual_equals_product_of_longrange_steps() {
    let v = TrigPoly::new(vec![c(0.4, -0.2), c(0.7, 0.5), cr(0.3), c(0.7, -0.5), c(0.4, 0.2)]).unwrap();
    let w = TrigPoly::cosine(1.2);
    let alpha = golden_mean();
    for (e, x) in [(0.0, 0.1), (1.3, 0.77), (-2.2, 0.45)] {
        let want = longrange_oracle(&v, &w, e, x + alpha) * longrange_oracle(&v, &w, e, x);
        let lr = longrange_cocycle(&v, &w, e, Frequency::golden()).unwrap();
        assert!(max_abs(&(iterate(&lr, x, 0.0, 2) - &want)) < 1e-10);
        let dual = dual_cocycle(&v, &w, e, Frequency::golden()).unwrap().eval(x, 0.0);
        assert!(max_abs(&(dual - &want)) < 1e-10);
    }
}

#[test]
fn amo_lyapunov_matches_long_product() {
    let (v, w) = amo(2.0);
    let alpha = golden_mean();
    let oracle = {
        let n = 100_000;
        let mut total = 0.0;
        let xs = [0.0, 0.25, 0.5, 0.75];
        for &x0 in &xs {
            let mut u = nalgebra::Vector2::new(1.0, 0.3).normalize();
            let mut acc = 0.0;
            for j in 0..n {
                let xj = x0 + j as f64 * alpha;
                let m = Matrix2::new(-(4.0 * (2.0 * PI * xj).cos()), -1.0, 1.0, 0.0);
                u = m * u;
                let r = u.norm();
                acc += r.ln();
                u /= r;
            }
            total += acc / n as f64;
        }
        total / xs.len() as f64
    };
    assert!((oracle / 2f64.ln() - 1.0).abs() < 0.02);
    let c = longrange_cocycle(&v, &w, 0.0, Frequency::golden()).unwrap();
    let rep = lyapunov_exponents(&c, 20_000, 8, 0.0).unwrap();
    assert!((rep.exponents[0] - oracle).abs() < 0.02 * oracle, "{:?} vs {oracle}", rep.exponents);
    assert!((rep.exponents[0] + rep.exponents[1]).abs() < 1e-8);
}

#[test]
fn complexified_exponent_is_even() {
    let (v, w) = amo(2.0);
    let c = longrange_cocycle(&v, &w, 0.5, Frequency::golden()).unwrap();
    let opts = LeOptions { n: 4000, x_samples: 8 };
    for eps in [0.02, 0.08] {
        let a = complexified_exponent(&c, eps, &opts).unwrap();
        let b = complexified_exponent(&c, -eps, &opts).unwrap();
        assert!((a - b).abs() < 1e-3, "{a} vs {b}");
    }
}

#[test]
fn cohomological_equation_on_golden_rotation() {
    let rho = TrigPoly::cosine(0.5);
    let alpha = golden_mean();
    let sol = solve_cohomological(&rho, alpha, 50, 1e-8).unwrap();
    assert!(sol.skipped.is_empty());
    let worst = (0..997)
        .map(|i| {
            let x = i as f64 / 997.0;
            (sol.psi.eval_real(x + alpha) - sol.psi.eval_real(x) - (2.0 * PI * x).cos()).abs()
        })
        .fold(0.0, f64::max);
    assert!(worst <= 1e-10 && sol.residual <= 1e-10);
}

#[test]
fn non_symplectic_constant_is_detected() {
    let form = qpspectra::lagrangian::SymplecticForm::standard(1);
    let a = real_matrix(2, 2, &[2.0, 0.0, 0.0, 1.0]);
    let direct = max_abs(&(a.adjoint() * form.matrix() * &a - form.matrix()));
    let res = check_symplectic(&constant_cocycle(a, Frequency::golden(), Some(form))).unwrap();
    assert!(direct > 0.5 && (res - direct).abs() < 1e-12);
}

#[test]
fn dual_of_degree_two_operator_is_dominated() {
    let (v, w, e) = ph_test_operator();
    let c = dual_cocycle(&v, &w, e, Frequency::golden()).unwrap();
    let dom = detect_dominated(&c, 400, 1, 16, 0.5).unwrap();
    assert!(dom.dominated, "{dom:?}");
    let rep = lyapunov_exponents(&c, 8000, 8, 0.0).unwrap();
    assert!(rep.exponents[1].abs() < 0.05 && rep.exponents[2].abs() < 0.05, "{:?}", rep.exponents);
    assert!(rep.exponents[0] > 1.0);
}

#[test]
fn premonotonicity_on_unit_vectors() {
    let (v, w, _) = ph_test_operator();
    let d = v.degree();
    let fam = |e: f64| dual_cocycle(&v, &w, e, Frequency::golden()).unwrap().eval(0.3, 0.0);
    let s = dual_cocycle(&v, &w, 0.0, Frequency::golden()).unwrap().form.unwrap().matrix().clone();
    let mut e1 = CVec::zeros(2 * d);
    e1[0] = cr(1.0);
    let mut last = CVec::zeros(2 * d);
    last[2 * d - 1] = cr(1.0);
    assert!((monotonicity_form(&fam, &s, 0.4, &e1, 1e-5).unwrap() - 1.0).abs() < 1e-8);
    assert!(monotonicity_form(&fam, &s, 0.4, &last, 1e-5).unwrap().abs() < 1e-8);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn cocycle_rule(
        v in (1usize..=3).prop_flat_map(|d| trig(d, true)),
        w in trig(1, false),
        e in -3.0f64..3.0,
        x in 0.0f64..1.0,
        k in 0i64..=20,
        l in 0i64..=20,
    ) {
        let c = longrange_cocycle(&v, &w, e, Frequency::golden()).unwrap();
        let whole = iterate(&c, x, 0.0, k + l);
        let split = iterate(&c, c.freq.shift(x, k), 0.0, l) * iterate(&c, x, 0.0, k);
        let scale = max_abs(&whole).max(1.0);
        prop_assert!(max_abs(&(whole - split)) <= 1e-9 * scale);
    }

    #[test]
    fn forms_are_preserved(
        v in (1usize..=4).prop_flat_map(|d| trig(d, true)),
        w in trig(2, true),
        e in -5.0f64..5.0,
        x in 0.0f64..1.0,
    ) {
        for c in [
            longrange_cocycle(&v, &w, e, Frequency::golden()).unwrap(),
            dual_cocycle(&v, &w, e, Frequency::golden()).unwrap(),
        ] {
            let s = c.form.as_ref().unwrap().matrix().clone();
            let a = c.eval(x, 0.0);
            let scale = max_abs(&a).powi(2).max(1.0);
            prop_assert!(max_abs(&(a.adjoint() * &s * &a - &s)) <= 1e-10 * scale);
            let a5 = iterate(&c, x, 0.0, 5);
            let scale5 = max_abs(&a5).powi(2).max(1.0);
            prop_assert!(max_abs(&(a5.adjoint() * &s * &a5 - &s)) <= 1e-9 * scale5);
        }
    }

    #[test]
    fn dual_monotonicity_is_upper_norm(
        v in (1usize..=3).prop_flat_map(|d| trig(d, true)),
        w in trig(1, false),
        e in -3.0f64..3.0,
        x in 0.0f64..1.0,
        raw in prop::collection::vec(-1.0f64..1.0, 12),
    ) {
        let d = v.degree();
        let c = dual_cocycle(&v, &w, e, Frequency::golden()).unwrap();
        let form = c.form.clone().unwrap();
        // Canonical coordinates: [a; h·a] with h real is isotropic for J.
        let a = CVec::from_iterator(d, (0..d).map(|i| c_of(&raw, i)));
        let hat = CMat::from_iterator(2 * d, 1, a.iter().copied().chain(a.iter().map(|z| z * raw[11])));
        let v0 = form.push_frame(&hat).column(0).into_owned();
        let fam = |en: f64| c.with_energy(en).unwrap().eval(x, 0.0);
        let psi = monotonicity_form(&fam, form.matrix(), e, &v0, 1e-5).unwrap();
        let upper: f64 = (0..d).map(|i| v0[i].norm_sqr()).sum();
        prop_assert!(psi >= -1e-8);
        prop_assert!((psi - upper).abs() <= 1e-6 * v0.norm_squared().max(1.0));
    }
}

fn c_of(raw: &[f64], i: usize) -> Complex64 {
    Complex64::new(raw[2 * i], raw[2 * i + 1])
}
