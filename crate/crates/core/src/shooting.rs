//! Independent zero-energy check on the line: polynomially bounded solutions of
//! `(-1)^m φ^{(2m)} + V φ = 0` by shooting from both ends.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::potential::PotentialSpec;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ShootingOptions {
    /// Shooting starts at `±half_width`, where `V` must be negligible.
    pub half_width: f64,
    pub step: f64,
    /// Relative singular value threshold of the matching matrix.
    pub threshold: f64,
    /// Spacing of the recorded solution profiles.
    pub sample_every: usize,
}

impl Default for ShootingOptions {
    fn default() -> Self {
        ShootingOptions {
            half_width: 20.0,
            step: 1e-3,
            threshold: 1e-7,
            sample_every: 50,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GrowthClass {
    /// Solutions growing at most like `|x|^degree`.
    pub degree: usize,
    pub count: usize,
    pub singular_values: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ShootingResult {
    pub classes: Vec<GrowthClass>,
    /// Smallest growth degree carrying a nontrivial solution.
    pub min_degree: usize,
    /// `m - min_degree`, clamped at 0.
    pub kind: i64,
    pub x: Vec<f64>,
    /// Basis of the solutions in the minimal growth class, sampled at `x`.
    pub profiles: Vec<Vec<f64>>,
}

fn rk4_sweep(
    params: &ModelParams,
    spec: &PotentialSpec,
    start: f64,
    step: f64,
    steps: usize,
    init: DVector<f64>,
    every: usize,
) -> (DVector<f64>, Vec<(f64, f64)>) {
    let dim = init.len();
    let sign = if params.m % 2 == 0 { -1.0 } else { 1.0 };
    let rhs = |x: f64, y: &DVector<f64>| -> DVector<f64> {
        let mut d = DVector::zeros(dim);
        for i in 0..dim - 1 {
            d[i] = y[i + 1];
        }
        d[dim - 1] = sign * spec.value(params, x) * y[0];
        d
    };
    let mut y = init;
    let mut x = start;
    let mut trace = vec![(x, y[0])];
    for s in 0..steps {
        let k1 = rhs(x, &y);
        let k2 = rhs(x + step / 2.0, &(&y + &k1 * (step / 2.0)));
        let k3 = rhs(x + step / 2.0, &(&y + &k2 * (step / 2.0)));
        let k4 = rhs(x + step, &(&y + &k3 * step));
        y += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (step / 6.0);
        x = start + (s + 1) as f64 * step;
        if (s + 1) % every == 0 {
            trace.push((x, y[0]));
        }
    }
    (y, trace)
}

fn monomial_data(degree: usize, x: f64, scale: f64, dim: usize) -> DVector<f64> {
    DVector::from_fn(dim, |k, _| {
        if k > degree {
            return 0.0;
        }
        let fall: f64 = ((degree - k + 1)..=degree).map(|v| v as f64).product();
        fall * x.powi((degree - k) as i32) / scale.powi(degree as i32)
    })
}

/// Counts the solutions in each growth class `|x|^d`, `d = 0..2m-1`.
pub fn shooting_oracle(params: &ModelParams, spec: &PotentialSpec, opts: ShootingOptions) -> Result<ShootingResult> {
    if params.n != 1 {
        return Err(Error::BackendUnsupported("shooting runs in dimension one".into()));
    }
    spec.validate(params)?;
    let dim = 2 * params.m as usize;
    let l = opts.half_width;
    let steps = (l / opts.step).round() as usize;
    let h = l / steps as f64;

    let mut right = Vec::new();
    let mut left = Vec::new();
    for a in 0..dim {
        right.push(rk4_sweep(params, spec, l, -h, steps, monomial_data(a, l, l, dim), opts.sample_every));
        left.push(rk4_sweep(params, spec, -l, h, steps, monomial_data(a, -l, l, dim), opts.sample_every));
    }

    let mut classes = Vec::new();
    let mut min_class: Option<(usize, DMatrix<f64>)> = None;
    for d in 0..dim {
        let cols = 2 * (d + 1);
        let mut a = DMatrix::zeros(dim.max(cols), cols);
        let mut norms = vec![0.0; cols];
        for b in 0..=d {
            let yl = &left[b].0;
            let yr = &right[b].0;
            norms[b] = yl.norm();
            norms[d + 1 + b] = yr.norm();
            for r in 0..dim {
                a[(r, b)] = yl[r] / norms[b];
                a[(r, d + 1 + b)] = -yr[r] / norms[d + 1 + b];
            }
        }
        let svd = a.svd(false, true);
        let sv: Vec<f64> = svd.singular_values.iter().copied().collect();
        let smax = sv.iter().cloned().fold(0.0, f64::max);
        let thr = opts.threshold * smax;
        if let Some(&s) = sv.iter().find(|&&s| s > thr / 10.0 && s < thr * 10.0) {
            return Err(Error::MatchingIllConditioned(format!(
                "singular value {s:e} near threshold {thr:e} at growth degree {d}"
            )));
        }
        let vt = svd.v_t.expect("requested V^T");
        let null: Vec<DVector<f64>> = sv
            .iter()
            .enumerate()
            .filter(|(_, &s)| s <= thr)
            .map(|(i, _)| {
                let row = vt.row(i).transpose();
                DVector::from_fn(cols, |c, _| row[c] / norms[c])
            })
            .collect();
        let mut sorted = sv.clone();
        sorted.sort_by(|a, b| a.total_cmp(b));
        classes.push(GrowthClass {
            degree: d,
            count: null.len(),
            singular_values: sorted,
        });
        if min_class.is_none() && !null.is_empty() {
            min_class = Some((d, DMatrix::from_columns(&null)));
        }
    }
    let (min_degree, coeffs) =
        min_class.ok_or_else(|| Error::MatchingIllConditioned("no polynomially bounded solution found".into()))?;

    // stitch the recorded traces: left half from the left sweeps, right half from the right sweeps
    let lt = &left[0].1;
    let rt = &right[0].1;
    let mut x: Vec<f64> = lt.iter().map(|p| p.0).collect();
    x.extend(rt.iter().rev().skip(1).map(|p| p.0));
    let profiles = coeffs
        .column_iter()
        .map(|c| {
            let mut out: Vec<f64> = (0..lt.len())
                .map(|i| (0..=min_degree).map(|b| c[b] * left[b].1[i].1).sum())
                .collect();
            out.extend((0..rt.len()).rev().skip(1).map(|i| {
                (0..=min_degree)
                    .map(|b| c[min_degree + 1 + b] * right[b].1[i].1)
                    .sum::<f64>()
            }));
            out
        })
        .collect();

    Ok(ShootingResult {
        kind: (params.m - min_degree as i64).max(0),
        classes,
        min_degree,
        x,
        profiles,
    })
}

/// `(u(R), u'(R))` for the s-wave zero-energy equation `u'' = V u`,
/// `u(0) = 0`, `u'(0) = 1`, where `u = r φ`.
pub fn s_wave_endpoint(params: &ModelParams, spec: &PotentialSpec, radius: f64, step: f64) -> (f64, f64) {
    let steps = (radius / step).round() as usize;
    let h = radius / steps as f64;
    let f = |r: f64, y: [f64; 2]| [y[1], spec.value(params, r) * y[0]];
    let mut y = [0.0, 1.0];
    for s in 0..steps {
        let r = s as f64 * h;
        let k1 = f(r, y);
        let k2 = f(r + h / 2.0, [y[0] + h / 2.0 * k1[0], y[1] + h / 2.0 * k1[1]]);
        let k3 = f(r + h / 2.0, [y[0] + h / 2.0 * k2[0], y[1] + h / 2.0 * k2[1]]);
        let k4 = f(r + h, [y[0] + h * k3[0], y[1] + h * k3[1]]);
        for i in 0..2 {
            y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    (y[0], y[1])
}

/// Depth `c` at which `-c e^{-(r/width)^2}` acquires an s-wave zero-energy
/// resonance in three dimensions (first zero of `u'(∞)`), by bisection.
pub fn critical_well_depth(width: f64, radius: f64) -> Result<f64> {
    let params = crate::model::make_params(1, 3)?;
    let slope = |c: f64| s_wave_endpoint(&params, &PotentialSpec::GaussWell { amplitude: -c, width }, radius, 1e-3).1;
    let (mut lo, mut hi) = (0.1 / (width * width), 0.1 / (width * width));
    while slope(hi) > 0.0 {
        lo = hi;
        hi *= 1.5;
        if hi > 1e4 {
            return Err(Error::MatchingIllConditioned("no resonant depth below 1e4".into()));
        }
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if slope(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::make_params;

    #[test]
    fn free_solutions_are_polynomials() {
        let p = make_params(2, 1).unwrap();
        let r = shooting_oracle(&p, &PotentialSpec::Zero, ShootingOptions::default()).unwrap();
        for c in &r.classes {
            assert_eq!(c.count, c.degree + 1);
        }
        assert_eq!(r.min_degree, 0);
    }

    #[test]
    fn recovers_the_bump_profile() {
        let p = make_params(2, 1).unwrap();
        let r = shooting_oracle(&p, &PotentialSpec::BumpResonant, ShootingOptions::default()).unwrap();
        assert_eq!(r.min_degree, 0);
        assert_eq!(r.profiles.len(), 1);
        let prof = &r.profiles[0];
        let target: Vec<f64> = r.x.iter().map(|x| 1.0 + (-x * x).exp()).collect();
        let s: f64 = prof.iter().zip(&target).map(|(a, b)| a * b).sum::<f64>() / target.iter().map(|b| b * b).sum::<f64>();
        let err = prof
            .iter()
            .zip(&target)
            .map(|(a, b)| (a - s * b).abs())
            .fold(0.0, f64::max)
            / s.abs();
        assert!(err < 1e-5, "{err}");
    }
}
