use num_complex::Complex64 as C64;
use polyprop_core::oscillatory::{
    dyadic, eval_osc, mu, verify_lemma_bounds, OscMethod, Region, SymbolAmplitude, RAPID_ORDER,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn panels_agree_with_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..50 {
        let t: f64 = rng.random_range(-40.0..40.0);
        let x: f64 = rng.random_range(-60.0..60.0);
        let b = rng.random_range(0..3) as f64;
        let m = rng.random_range(1..4);
        let amp = SymbolAmplitude::low_power(b, 1.0, 2.0);
        let p = eval_osc(t, x, &amp, m, OscMethod::PanelFilon).unwrap().value;
        let q = eval_osc(t, x, &amp, m, OscMethod::BruteForce).unwrap().value;
        assert!((p - q).norm() < 1e-8, "t={t} x={x} b={b} m={m}: {p} vs {q}");
    }
}

#[test]
fn linearity() {
    let f = SymbolAmplitude::low_power(0.0, 1.0, 2.0);
    let g = SymbolAmplitude::low_power(1.5, 0.5, 1.5);
    let (a, b) = (C64::new(0.3, -1.2), C64::new(2.0, 0.5));
    let combo = f.scaled(a).add(&g.scaled(b));
    let lhs = eval_osc(5.0, 3.0, &combo, 2, OscMethod::PanelFilon).unwrap().value;
    let rhs = a * eval_osc(5.0, 3.0, &f, 2, OscMethod::PanelFilon).unwrap().value
        + b * eval_osc(5.0, 3.0, &g, 2, OscMethod::PanelFilon).unwrap().value;
    assert!((lhs - rhs).norm() < 1e-10);
}

#[test]
fn tail_methods_agree() {
    let amp = SymbolAmplitude::high_power(0.0, 0.5, 1.0);
    let gauss = SymbolAmplitude::entire(std::sync::Arc::new(|z: C64| (-z * z / 4.0).exp()), 0.0);
    for (t, x) in [(1.0, 0.0), (2.0, -30.0), (-1.5, 8.0)] {
        let p = eval_osc(t, x, &gauss, 2, OscMethod::PanelFilon).unwrap().value;
        let q = eval_osc(t, x, &gauss, 2, OscMethod::RotatedTail).unwrap().value;
        assert!((p - q).norm() < 1e-9, "{p} vs {q}");
        eval_osc(t, x, &amp, 2, OscMethod::RotatedTail).unwrap();
    }
}

#[test]
fn lemma_fits() {
    for (m, b) in [(1i64, 0.0), (2, 0.0), (2, 1.0)] {
        let t_hi = if m == 1 { 16 } else { 14 };
        let low = verify_lemma_bounds(m, b, &dyadic(4, t_hi), &dyadic(0, 20), true).unwrap();
        let high = verify_lemma_bounds(m, b, &dyadic(-3, 6), &dyadic(0, 14), false).unwrap();
        for f in low.fits.iter().chain(&high.fits) {
            assert!(f.samples.len() >= 8, "{:?}", f.region);
            if f.region == Region::Rapid {
                assert!(f.exponent_t.unwrap() <= -(RAPID_ORDER as f64));
                continue;
            }
            for (got, want) in [(f.exponent_t, f.predicted_t), (f.exponent_x, f.predicted_x)] {
                if let Some(w) = want {
                    let g = got.unwrap();
                    assert!((g - w).abs() < 0.15, "m={m} b={b} {:?}: {g} vs {w}", f.region);
                }
            }
        }
    }
    assert_eq!(mu(0.0, 1), 0.0);
}
