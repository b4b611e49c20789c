#![allow(dead_code)]

use num_complex::Complex64;
use proptest::prelude::*;
use qpspectra::operators::TrigPoly;

/// Real-valued trigonometric polynomial of degree `d` with leading coefficient bounded away from 0.
pub fn trig(d: usize, complex: bool) -> impl Strategy<Value = TrigPoly> {
    let lead = (0.5f64..1.5, 0.0f64..std::f64::consts::TAU);
    let rest = prop::collection::vec((0.0f64..1.0, 0.0f64..std::f64::consts::TAU), d.saturating_sub(1));
    (-1.0f64..1.0, lead, rest).prop_map(move |(c0, (lm, la), rest)| {
        let mut coeffs = vec![Complex64::new(0.0, 0.0); 2 * d + 1];
        coeffs[d] = Complex64::new(c0, 0.0);
        let mut put = |k: usize, mag: f64, arg: f64| {
            let z = Complex64::from_polar(mag, if complex { arg } else { 0.0 });
            coeffs[d + k] = z;
            coeffs[d - k] = z.conj();
        };
        for (k, (m, a)) in rest.into_iter().enumerate() {
            put(k + 1, m, a);
        }
        if d > 0 {
            put(d, lm, la);
        }
        TrigPoly::new(coeffs).unwrap()
    })
}

pub fn amo(lambda: f64) -> (TrigPoly, TrigPoly) {
    (TrigPoly::cosine(1.0), TrigPoly::cosine(lambda))
}
