//! The kernel of `e^{-it(-Δ)^m}` and its low/high energy bands.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cutoff::Cutoff;
use crate::error::{Error, Result};
use crate::model::{rational_to_f64, ModelParams};
use crate::oscillatory::{eval_osc, ComplexFn, OscMethod, SymbolAmplitude};

type C64 = Complex64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Band {
    Full,
    Low,
    High,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PropagatorSample {
    pub t: f64,
    pub r: f64,
    pub value: C64,
    pub envelope_ratio: f64,
}

/// The low-energy cutoff in `ρ = |ξ|`: 1 for `ρ <= (λ0/2)^{1/2m}`, 0 for `ρ >= λ0^{1/2m}`.
pub fn low_cutoff(params: &ModelParams, lambda0: f64) -> Cutoff {
    let p = 1.0 / (2 * params.m) as f64;
    Cutoff::new((lambda0 / 2.0).powf(p), lambda0.powf(p))
}

fn sinc(z: C64) -> C64 {
    if z.norm() < 1e-4 {
        let z2 = z * z;
        return 1.0 - z2 / 6.0 + z2 * z2 / 120.0;
    }
    z.sin() / z
}

/// Radial amplitude `g(ρ)` restricted to a band; `analytic` is `g` itself.
fn banded(g: ComplexFn, order: f64, band: Band, chi: Option<Cutoff>) -> SymbolAmplitude {
    match (band, chi) {
        (Band::Full, _) | (_, None) => SymbolAmplitude::entire(g, order),
        (Band::Low, Some(c)) => {
            let mut a = SymbolAmplitude::new(
                Arc::new(move |l: f64| g(C64::new(l, 0.0)) * c.eval(l)),
                order,
                (0.0, c.outer),
            );
            a.derivative_order = usize::MAX;
            a.breaks = vec![c.inner];
            a
        }
        (Band::High, Some(c)) => {
            let h = g.clone();
            SymbolAmplitude {
                eval: Arc::new(move |l: f64| h(C64::new(l, 0.0)) * c.complement(l)),
                analytic: Some(g),
                analytic_from: c.outer,
                derivative_order: usize::MAX,
                order,
                support: (c.inner, f64::INFINITY),
                breaks: vec![c.outer],
            }
        }
    }
}

fn method_for(band: Band) -> OscMethod {
    match band {
        Band::Low => OscMethod::PanelFilon,
        _ => OscMethod::RotatedTail,
    }
}

fn check(params: &ModelParams, t: f64, r: f64) -> Result<()> {
    if t == 0.0 {
        return Err(Error::ZeroTime);
    }
    if !(r >= 0.0) {
        return Err(Error::InvalidInput(format!("radius {r} must be nonnegative")));
    }
    if params.n != 1 && params.n != 3 {
        return Err(Error::BackendUnsupported(format!(
            "free kernel radial reduction implemented for n = 1, 3, not {}",
            params.n
        )));
    }
    Ok(())
}

/// `(2π)^{-n} ∫ e^{-it|ξ|^{2m} + iξ·x} dξ` at `|x| = r`.
pub fn free_kernel(params: &ModelParams, t: f64, r: f64) -> Result<C64> {
    band_kernel(params, t, r, Band::Full, 1.0)
}

/// Kernel of `e^{-it(-Δ)^m} χ((-Δ)^m)` (Low), of the complementary band (High)
/// or the full propagator.
pub fn band_kernel(params: &ModelParams, t: f64, r: f64, band: Band, lambda0: f64) -> Result<C64> {
    check(params, t, r)?;
    if band != Band::Full && !(lambda0 > 0.0) {
        return Err(Error::InvalidInput(format!("lambda0 = {lambda0} must be positive")));
    }
    let m = params.m;
    let chi = (band != Band::Full).then(|| low_cutoff(params, lambda0));
    let method = method_for(band);
    if params.n == 1 {
        let one: ComplexFn = Arc::new(|_| C64::new(1.0, 0.0));
        let amp = banded(one, 0.0, band, chi);
        let a = eval_osc(t, r, &amp, m, method)?.value;
        let b = eval_osc(t, -r, &amp, m, method)?.value;
        return Ok((a + b) / (2.0 * PI));
    }
    let s = t.abs().powf(-1.0 / (2 * m) as f64) * r;
    if s < 1.0 {
        let g: ComplexFn = Arc::new(move |l: C64| l * l * sinc(l * r));
        let amp = banded(g, 2.0, band, chi);
        return Ok(eval_osc(t, 0.0, &amp, m, method)?.value / (2.0 * PI * PI));
    }
    let g: ComplexFn = Arc::new(|l: C64| l);
    let amp = banded(g, 1.0, band, chi);
    let a = eval_osc(t, r, &amp, m, method)?.value;
    let b = eval_osc(t, -r, &amp, m, method)?.value;
    Ok((a - b) / (C64::new(0.0, 2.0) * 2.0 * PI * PI * r))
}

/// `|K| |t|^{n/2m} (1 + |t|^{-1/2m} r)^{n(m-1)/(2m-1)}`.
pub fn envelope_ratio(params: &ModelParams, t: f64, r: f64, value: C64) -> f64 {
    let two_m = (2 * params.m) as f64;
    let s = t.abs().powf(-1.0 / two_m) * r;
    value.norm()
        * t.abs().powf(params.n as f64 / two_m)
        * (1.0 + s).powf(rational_to_f64(params.spatial_exponent()))
}

pub fn propagator_sample(params: &ModelParams, t: f64, r: f64, band: Band, lambda0: f64) -> Result<PropagatorSample> {
    let value = band_kernel(params, t, r, band, lambda0)?;
    Ok(PropagatorSample {
        t,
        r,
        value,
        envelope_ratio: envelope_ratio(params, t, r, value),
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnvelopeSweep {
    pub sup: f64,
    pub argmax: (f64, f64),
    pub samples: Vec<PropagatorSample>,
}

/// Sup of the envelope ratio over `t in t_grid` and `r = t^{1/2m} s`, `s in s_grid`.
pub fn envelope_sweep(params: &ModelParams, t_grid: &[f64], s_grid: &[f64], band: Band, lambda0: f64) -> Result<EnvelopeSweep> {
    let two_m = (2 * params.m) as f64;
    let points: Vec<(f64, f64)> = t_grid
        .iter()
        .flat_map(|&t| s_grid.iter().map(move |&s| (t, t.abs().powf(1.0 / two_m) * s)))
        .collect();
    let samples: Vec<PropagatorSample> = points
        .par_iter()
        .map(|&(t, r)| propagator_sample(params, t, r, band, lambda0))
        .collect::<Result<_>>()?;
    let best = samples
        .iter()
        .max_by(|a, b| a.envelope_ratio.total_cmp(&b.envelope_ratio))
        .ok_or_else(|| Error::InvalidInput("empty sweep grid".into()))?;
    Ok(EnvelopeSweep {
        sup: best.envelope_ratio,
        argmax: (best.t, best.r),
        samples: samples.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::make_params;
    use statrs::function::gamma::gamma;

    #[test]
    fn schrodinger_kernel() {
        let p = make_params(1, 1).unwrap();
        for (t, r) in [(1.0, 0.0), (0.3, 2.0), (-2.0, 5.0)] {
            let v = free_kernel(&p, t, r).unwrap();
            let exact = (C64::new(0.0, 4.0 * PI * t)).powf(-0.5) * C64::new(0.0, r * r / (4.0 * t)).exp();
            assert!((v - exact).norm() < 1e-10, "{t} {r}: {v} vs {exact}");
        }
    }

    #[test]
    fn quartic_at_origin() {
        let p = make_params(2, 1).unwrap();
        let v = free_kernel(&p, 1.0, 0.0).unwrap();
        let exact = C64::from_polar(gamma(1.25) / PI, -PI / 8.0);
        assert!((v - exact).norm() < 1e-10);
    }

    #[test]
    fn three_dim_schrodinger() {
        let p = make_params(1, 3).unwrap();
        for (t, r) in [(1.0, 0.5), (0.7, 3.0)] {
            let v = free_kernel(&p, t, r).unwrap();
            let exact = (C64::new(0.0, 4.0 * PI * t)).powf(-1.5) * C64::new(0.0, r * r / (4.0 * t)).exp();
            assert!((v - exact).norm() < 1e-10, "{v} vs {exact}");
        }
    }

    #[test]
    fn bands_partition() {
        let p = make_params(2, 1).unwrap();
        for (t, r) in [(1.0, 0.0), (3.0, 4.0)] {
            let full = free_kernel(&p, t, r).unwrap();
            let lo = band_kernel(&p, t, r, Band::Low, 1.0).unwrap();
            let hi = band_kernel(&p, t, r, Band::High, 1.0).unwrap();
            assert!((lo + hi - full).norm() < 1e-8);
        }
    }

    #[test]
    fn rejects_bad_input() {
        let p = make_params(2, 1).unwrap();
        assert_eq!(free_kernel(&p, 0.0, 1.0), Err(Error::ZeroTime));
        let q = make_params(2, 5).unwrap();
        assert!(matches!(free_kernel(&q, 1.0, 1.0), Err(Error::BackendUnsupported(_))));
    }
}
