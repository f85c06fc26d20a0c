use polyprop_core::free_propagator::{band_kernel, envelope_sweep, free_kernel, Band};
use polyprop_core::make_params;
use std::time::Instant;

#[test]
fn self_similarity() {
    for (m, n) in [(2, 1), (2, 3), (3, 1)] {
        let p = make_params(m, n).unwrap();
        for t in [0.05f64, 0.5, 7.0, 40.0] {
            for s in [0.0, 0.4, 3.0, 20.0] {
                let r = t.powf(1.0 / (2 * m) as f64) * s;
                let a = free_kernel(&p, t, r).unwrap();
                let b = free_kernel(&p, 1.0, s).unwrap() * t.powf(-(n as f64) / (2 * m) as f64);
                assert!((a - b).norm() < 1e-8 * (1.0 + b.norm()), "{m} {n} {t} {s}: {a} {b}");
            }
        }
    }
}

#[test]
fn symmetry_in_time() {
    let p = make_params(2, 3).unwrap();
    for r in [0.0, 0.3, 5.0] {
        let a = free_kernel(&p, 2.0, r).unwrap();
        let b = free_kernel(&p, -2.0, r).unwrap();
        assert!((a - b.conj()).norm() < 1e-10);
    }
}

#[test]
fn envelope_is_stable() {
    for (m, n) in [(2, 1), (2, 3), (3, 1)] {
        let p = make_params(m, n).unwrap();
        let clock = Instant::now();
        let t1: Vec<f64> = (-6..=6).map(|k| 2f64.powi(k)).collect();
        let s1: Vec<f64> = (0..=100).map(|k| 0.5 * k as f64).collect();
        let t2: Vec<f64> = (-12..=12).map(|k| 2f64.powf(k as f64 / 2.0)).collect();
        let s2: Vec<f64> = (0..=200).map(|k| 0.25 * k as f64).collect();
        let a = envelope_sweep(&p, &t1, &s1, Band::Full, 1.0).unwrap();
        let b = envelope_sweep(&p, &t2, &s2, Band::Full, 1.0).unwrap();
        eprintln!("({m},{n}) sup {} / {} at {:?}, {:?}", a.sup, b.sup, b.argmax, clock.elapsed());
        assert!((a.sup - b.sup).abs() < 0.05 * b.sup);
    }
}

#[test]
fn low_band_bounded_in_time() {
    let p = make_params(2, 1).unwrap();
    let vals: Vec<f64> = (-10..=6)
        .map(|k| band_kernel(&p, 2f64.powi(k), 1.0, Band::Low, 1.0).unwrap().norm())
        .collect();
    let max = vals.iter().cloned().fold(0.0, f64::max);
    let bound = (1.0f64).powf(0.25) / std::f64::consts::PI;
    assert!(max <= bound * 1.0001, "{max} vs {bound}");
}
