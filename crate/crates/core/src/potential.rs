//! Potentials `V`, with the factorization `V = v U v`, `v = |V|^{1/2}`, `U = sgn V`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::space::GridSpace;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case", deny_unknown_fields)]
pub enum PotentialSpec {
    /// `amplitude * exp(-(x/width)^2)`.
    GaussWell { amplitude: f64, width: f64 },
    /// `V = -(-Δ)^m φ / φ` with `φ = 1 + exp(-|x|^2)`.
    #[serde(alias = "paper_resonant")]
    BumpResonant,
    /// `V = -(-Δ)^m φ / φ` with `φ = 2 + x tanh x` (line only).
    KindOneResonant,
    /// Piecewise linear through the samples, zero outside.
    Samples { x: Vec<f64>, v: Vec<f64> },
    Zero,
}

/// Physicists' Hermite polynomials `H_0..=H_k` at `x`.
fn hermite(k: usize, x: f64) -> Vec<f64> {
    let mut h = vec![1.0, 2.0 * x];
    for j in 1..k {
        let next = 2.0 * x * h[j] - 2.0 * j as f64 * h[j - 1];
        h.push(next);
    }
    h.truncate(k + 1);
    h
}

/// Polynomials `P_k` with `tanh^{(k)} = P_k(tanh)`, as coefficient lists.
fn tanh_derivative_polys(k: usize) -> Vec<Vec<f64>> {
    let mut out = vec![vec![0.0, 1.0]];
    for _ in 0..k {
        let p = out.last().unwrap();
        // P' (1 - t^2)
        let dp: Vec<f64> = (1..p.len()).map(|i| i as f64 * p[i]).collect();
        let mut next = vec![0.0; dp.len() + 2];
        for (i, c) in dp.iter().enumerate() {
            next[i] += c;
            next[i + 2] -= c;
        }
        out.push(next);
    }
    out
}

fn poly_eval(p: &[f64], t: f64) -> f64 {
    p.iter().rev().fold(0.0, |acc, c| acc * t + c)
}

impl PotentialSpec {
    pub fn label(&self) -> &'static str {
        match self {
            PotentialSpec::GaussWell { .. } => "gauss_well",
            PotentialSpec::BumpResonant => "bump_resonant",
            PotentialSpec::KindOneResonant => "kind_one_resonant",
            PotentialSpec::Samples { .. } => "samples",
            PotentialSpec::Zero => "zero",
        }
    }

    pub fn validate(&self, params: &ModelParams) -> Result<()> {
        match self {
            PotentialSpec::GaussWell { amplitude, width } => {
                if !amplitude.is_finite() || !(*width > 0.0) {
                    return Err(Error::InvalidInput(format!(
                        "gauss_well needs finite amplitude and positive width, got {amplitude}, {width}"
                    )));
                }
            }
            PotentialSpec::BumpResonant => {
                if params.n != 1 && !(params.m == 1 && params.n == 3) {
                    return Err(Error::BackendUnsupported(format!(
                        "bump_resonant formula available for n = 1 and (1, 3), not ({}, {})",
                        params.m, params.n
                    )));
                }
            }
            PotentialSpec::KindOneResonant => {
                if params.n != 1 {
                    return Err(Error::BackendUnsupported("kind_one_resonant is a line potential".into()));
                }
            }
            PotentialSpec::Samples { x, v } => {
                if x.len() != v.len() || x.len() < 2 {
                    return Err(Error::InvalidInput("samples need matching x and v of length >= 2".into()));
                }
                if x.windows(2).any(|w| !(w[1] > w[0])) {
                    return Err(Error::InvalidInput("sample abscissae must increase".into()));
                }
                if v.iter().any(|y| !y.is_finite()) {
                    return Err(Error::InvalidInput("sample values must be finite".into()));
                }
            }
            PotentialSpec::Zero => {}
        }
        Ok(())
    }

    /// `V` at the point `x` (the radius on the radial grid).
    pub fn value(&self, params: &ModelParams, x: f64) -> f64 {
        match self {
            PotentialSpec::GaussWell { amplitude, width } => amplitude * (-(x / width).powi(2)).exp(),
            PotentialSpec::BumpResonant => {
                if params.n == 3 {
                    let e = (-x * x).exp();
                    return (4.0 * x * x - 6.0) * e / (1.0 + e);
                }
                let m = params.m as usize;
                let e = (-x * x).exp();
                // d^{2m} e^{-x^2} = H_{2m}(x) e^{-x^2}
                let d2m = hermite(2 * m, x)[2 * m] * e;
                let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
                -sign * d2m / (1.0 + e)
            }
            PotentialSpec::KindOneResonant => {
                let k = 2 * params.m as usize;
                let t = x.tanh();
                let polys = tanh_derivative_polys(k);
                let dk = x * poly_eval(&polys[k], t) + k as f64 * poly_eval(&polys[k - 1], t);
                let sign = if params.m % 2 == 0 { 1.0 } else { -1.0 };
                -sign * dk / (2.0 + x * t)
            }
            PotentialSpec::Samples { x: xs, v } => {
                if x < xs[0] || x > *xs.last().unwrap() {
                    return 0.0;
                }
                let i = xs.partition_point(|&a| a <= x).clamp(1, xs.len() - 1);
                let s = (x - xs[i - 1]) / (xs[i] - xs[i - 1]);
                v[i - 1] * (1.0 - s) + v[i] * s
            }
            PotentialSpec::Zero => 0.0,
        }
    }

    /// The zero-energy solution `φ` built into the resonant examples.
    pub fn resonance_profile(&self, x: f64) -> Option<f64> {
        match self {
            PotentialSpec::BumpResonant => Some(1.0 + (-x * x).exp()),
            PotentialSpec::KindOneResonant => Some(2.0 + x * x.tanh()),
            _ => None,
        }
    }
}

/// Samples of `V`, `v = |V|^{1/2}` and `U = sgn V` on a grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SampledPotential {
    pub spec: PotentialSpec,
    pub values: Vec<f64>,
    pub v: Vec<f64>,
    pub u: Vec<f64>,
}

impl SampledPotential {
    pub fn new(space: &GridSpace, params: &ModelParams, spec: &PotentialSpec) -> Result<Self> {
        spec.validate(params)?;
        space.supports(params)?;
        let values: Vec<f64> = space.nodes.iter().map(|&x| spec.value(params, x)).collect();
        let v = values.iter().map(|x| x.abs().sqrt()).collect();
        let u = values.iter().map(|&x| if x < 0.0 { -1.0 } else { 1.0 }).collect();
        Ok(SampledPotential {
            spec: spec.clone(),
            values,
            v,
            u,
        })
    }

    /// `max |V(x)| <x>^β` over the grid.
    pub fn weighted_sup(&self, space: &GridSpace, beta: f64) -> f64 {
        space
            .nodes
            .iter()
            .zip(&self.values)
            .map(|(x, v)| v.abs() * (1.0 + x * x).powf(beta / 2.0))
            .fold(0.0, f64::max)
    }

    pub fn is_zero(&self) -> bool {
        self.v.iter().all(|&x| x == 0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::make_params;

    fn check_equation(spec: &PotentialSpec, m: i64, phi: impl Fn(f64) -> f64) {
        let p = make_params(m, 1).unwrap();
        let k = 2 * m as usize;
        // central difference for the 2m-th derivative, one Richardson step
        let diff = |x: f64, h: f64| -> f64 {
            let mut d = 0.0;
            for i in 0..=k {
                let c = binom(k, i) * if i % 2 == 0 { 1.0 } else { -1.0 };
                d += c * phi(x + (k as f64 / 2.0 - i as f64) * h);
            }
            d / h.powi(k as i32)
        };
        let h = 0.05;
        for x in [-2.3, -0.7, 0.0, 0.4, 1.9] {
            let d = (4.0 * diff(x, h / 2.0) - diff(x, h)) / 3.0;
            let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
            let resid = sign * d + spec.value(&p, x) * phi(x);
            assert!(resid.abs() < 1e-3 * (1.0 + d.abs()), "m={m} x={x} resid={resid}");
        }
    }

    fn binom(n: usize, k: usize) -> f64 {
        (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
    }

    #[test]
    fn resonant_potentials_solve_the_equation() {
        for m in 1..=3 {
            check_equation(&PotentialSpec::BumpResonant, m, |x| 1.0 + (-x * x).exp());
            check_equation(&PotentialSpec::KindOneResonant, m, |x| 2.0 + x * x.tanh());
        }
    }

    #[test]
    fn radial_bump_potential() {
        let p = make_params(1, 3).unwrap();
        let phi = |r: f64| 1.0 + (-r * r).exp();
        let h = 1e-3;
        for r in [0.5, 1.0, 2.0] {
            let lap = (phi(r + h) - 2.0 * phi(r) + phi(r - h)) / (h * h) + (phi(r + h) - phi(r - h)) / (h * r);
            let resid = -lap + PotentialSpec::BumpResonant.value(&p, r) * phi(r);
            assert!(resid.abs() < 1e-5);
        }
    }

    #[test]
    fn spec_round_trips() {
        let s = PotentialSpec::GaussWell { amplitude: -0.01, width: 1.0 };
        let json = serde_json::to_string(&s).unwrap();
        assert_eq!(json, r#"{"form":"gauss_well","amplitude":-0.01,"width":1.0}"#);
        assert_eq!(serde_json::from_str::<PotentialSpec>(&json).unwrap(), s);
        assert!(serde_json::from_str::<PotentialSpec>(r#"{"form":"gauss_well","amplitude":1.0,"width":1.0,"extra":1}"#).is_err());
    }

    #[test]
    fn samples_interpolate() {
        let p = make_params(2, 1).unwrap();
        let s = PotentialSpec::Samples { x: vec![0.0, 1.0], v: vec![2.0, 4.0] };
        assert_eq!(s.value(&p, 0.5), 3.0);
        assert_eq!(s.value(&p, 2.0), 0.0);
    }
}
