//! Kernels of the free resolvents `R_0^±(λ^{2m})` and `R_0(-λ^{2m})` in odd
//! dimensions, their small-`r` Laurent coefficients and remainder profiles.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::quad;

type C64 = Complex64;

const I: C64 = C64 { re: 0.0, im: 1.0 };

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SignBranch {
    Plus,
    Minus,
}

impl SignBranch {
    /// The rotation indices `I^+ = {0..m-1}` or `I^- = {1..m}`.
    pub fn indices(self, m: i64) -> std::ops::Range<i64> {
        match self {
            SignBranch::Plus => 0..m,
            SignBranch::Minus => 1..m + 1,
        }
    }

    pub fn sign(self) -> f64 {
        match self {
            SignBranch::Plus => 1.0,
            SignBranch::Minus => -1.0,
        }
    }

    pub fn flip(self) -> Self {
        match self {
            SignBranch::Plus => SignBranch::Minus,
            SignBranch::Minus => SignBranch::Plus,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            SignBranch::Plus => "+",
            SignBranch::Minus => "-",
        }
    }
}

fn factorial(k: i64) -> f64 {
    (1..=k).map(|v| v as f64).product()
}

/// Coefficients `c_j` of the second-order kernel in odd dimension `n`.
pub fn c_coeff(n: i64, j: i64) -> f64 {
    if n == 1 {
        return if j == -1 { -0.5 } else { 0.0 };
    }
    let top = (n - 3) / 2;
    if j < 0 || j > top {
        return 0.0;
    }
    (-2f64).powi(j as i32) * factorial(n - 3 - j) / (factorial(j) * factorial(top - j))
}

fn c_range(n: i64) -> (i64, i64) {
    if n == 1 {
        (-1, -1)
    } else {
        (0, (n - 3) / 2)
    }
}

/// `d_l = sum_j c_j / (l-j)!`.
pub fn d_coeff(n: i64, l: i64) -> f64 {
    let (lo, hi) = c_range(n);
    (lo..=hi.min(l))
        .map(|j| c_coeff(n, j) / factorial(l - j))
        .sum()
}

fn prefactor(n: i64) -> f64 {
    (4.0 * PI).powf(-((n - 1) as f64) / 2.0)
}

/// `ℜ_0(w^2)(r)` for complex `w` with `Im w >= 0` and complex radius `r`.
pub fn second_order_complex(n: i64, w: C64, r: C64) -> C64 {
    let (lo, hi) = c_range(n);
    let z = I * w * r;
    let mut sum = C64::new(0.0, 0.0);
    for j in lo..=hi {
        sum += c_coeff(n, j) * z.powi(j as i32);
    }
    prefactor(n) * (I * w * r).exp() * r.powi((2 - n) as i32) * sum
}

/// The second-order kernel `ℜ_0^±(λ^2)(r)`.
pub fn second_order_kernel(n: i64, lambda: f64, sign: SignBranch, r: f64) -> Result<C64> {
    check_odd(n)?;
    if r == 0.0 {
        if n >= 3 {
            return Err(Error::CoincidenceSingularity(n));
        }
        return Ok(I / (2.0 * sign.sign() * lambda));
    }
    Ok(second_order_complex(n, C64::new(sign.sign() * lambda, 0.0), C64::new(r, 0.0)))
}

fn check_odd(n: i64) -> Result<()> {
    if n < 1 {
        return Err(Error::DimensionOutOfRange { m: 0, n });
    }
    if n % 2 == 0 {
        return Err(Error::EvenDimension(n));
    }
    Ok(())
}

/// Weights `(coefficient, w)` of the rotation sum `sum coefficient * ℜ_0(w^2)`.
#[derive(Debug, Clone)]
pub struct Rotation {
    pub n: i64,
    pub terms: Vec<(C64, C64)>,
}

impl Rotation {
    /// `R_0^±(Λ^{2m}) = (1/(m Λ^{2m})) sum_{k in I^±} Λ_k^2 ℜ_0(Λ_k^2)`, for complex `Λ`.
    pub fn boundary(params: &ModelParams, sign: SignBranch, lambda: C64) -> Self {
        let m = params.m;
        let scale = 1.0 / (m as f64 * lambda.powi(2 * m as i32));
        let terms = sign
            .indices(m)
            .map(|k| {
                let lk = lambda * C64::from_polar(1.0, PI * k as f64 / m as f64);
                (scale * lk * lk, lk)
            })
            .collect();
        Rotation { n: params.n, terms }
    }

    /// `R_0(-λ^{2m})`, the boundary formula on the ray `λ e^{iπ/2m}`.
    pub fn negative(params: &ModelParams, lambda: f64) -> Self {
        let rot = C64::from_polar(lambda, PI / (2 * params.m) as f64);
        Self::boundary(params, SignBranch::Plus, rot)
    }

    pub fn eval(&self, r: C64) -> C64 {
        if self.n == 1 && r == C64::new(0.0, 0.0) {
            return self.terms.iter().map(|&(c, w)| c * I / (2.0 * w)).sum();
        }
        self.terms
            .iter()
            .map(|&(c, w)| c * second_order_complex(self.n, w, r))
            .sum()
    }

    /// Laurent coefficient of `r^p`.
    pub fn laurent(&self, p: i64) -> C64 {
        let n = self.n;
        let l = p + n - 2;
        let (lo, _) = c_range(n);
        if l < lo {
            return C64::new(0.0, 0.0);
        }
        let d = d_coeff(n, l);
        let power_sum: C64 = self.terms.iter().map(|&(c, w)| c * w.powi(l as i32)).sum();
        prefactor(n) * d * I.powi(l as i32) * power_sum
    }

    /// Lowest power of `r` in the Laurent expansion.
    pub fn lowest_power(&self) -> i64 {
        if self.n == 1 {
            0
        } else {
            2 - self.n
        }
    }

    /// Sum of the Laurent tail `sum_{p >= p0} κ_p r^p`, for moderate `|w r|`.
    pub fn laurent_tail(&self, p0: i64, r: C64) -> C64 {
        let start = p0.max(self.lowest_power());
        let mut sum = C64::new(0.0, 0.0);
        let mut quiet = 0;
        for p in start..start + 200 {
            let term = self.laurent(p) * r.powi(p as i32);
            sum += term;
            if term.norm() <= 1e-18 * sum.norm().max(1e-300) {
                quiet += 1;
                if quiet > 4 {
                    break;
                }
            } else {
                quiet = 0;
            }
        }
        sum
    }

    /// Odd Laurent coefficients `(p, κ_p)` with `p >= p0`, which carry the kink at `r = 0`.
    pub fn odd_coefficients(&self, p0: i64, p_max: i64) -> Vec<(usize, C64)> {
        (p0.max(1)..=p_max)
            .filter(|p| p % 2 == 1)
            .map(|p| (p as usize, self.laurent(p)))
            .filter(|(_, c)| c.norm() > 0.0)
            .collect()
    }

    pub fn max_abs_w(&self) -> f64 {
        self.terms.iter().map(|(_, w)| w.norm()).fold(0.0, f64::max)
    }
}

pub fn higher_kernel(params: &ModelParams, sign: SignBranch, lambda: f64, r: f64) -> Result<C64> {
    check_radius(params, r)?;
    Ok(Rotation::boundary(params, sign, C64::new(lambda, 0.0)).eval(C64::new(r, 0.0)))
}

pub fn negative_energy_kernel(params: &ModelParams, lambda: f64, r: f64) -> Result<C64> {
    check_radius(params, r)?;
    Ok(Rotation::negative(params, lambda).eval(C64::new(r, 0.0)))
}

fn check_radius(params: &ModelParams, r: f64) -> Result<()> {
    if r == 0.0 && params.n >= 3 {
        return Err(Error::CoincidenceSingularity(params.n));
    }
    Ok(())
}

/// Multi-index helper: `|α|` and `α!`.
fn multi_abs(a: &[usize]) -> usize {
    a.iter().sum()
}

fn multi_fact(a: &[usize]) -> f64 {
    a.iter().map(|&v| factorial(v as i64)).product()
}

/// Surface integral of `ω^γ` over the unit sphere `S^{n-1}`.
pub fn sphere_moment(gamma_idx: &[usize]) -> f64 {
    if gamma_idx.iter().any(|g| g % 2 == 1) {
        return 0.0;
    }
    let n = gamma_idx.len() as f64;
    let total: usize = gamma_idx.iter().sum();
    let num: f64 = gamma_idx
        .iter()
        .map(|&g| gamma((g as f64 + 1.0) / 2.0))
        .product();
    2.0 * num / gamma((total as f64 + n) / 2.0)
}

/// `A_{α,β}`: Taylor coefficients of `R_0(-1)` in the moment form.
pub fn a_coefficient(params: &ModelParams, alpha: &[usize], beta: &[usize]) -> Result<C64> {
    let n = params.n as usize;
    if alpha.len() != n || beta.len() != n {
        return Err(Error::InvalidInput(format!(
            "multi-indices must have length n = {n}"
        )));
    }
    let (la, lb) = (multi_abs(alpha), multi_abs(beta));
    let kc = params.k_c as usize;
    let top = params.max_integer_index() as usize;
    let lower = la < kc && lb < kc;
    let upper = la >= kc && lb >= kc && la <= top && lb <= top;
    if !lower && !upper {
        return Err(Error::MixedRegime {
            alpha: la,
            beta: lb,
            kc: params.k_c,
        });
    }
    let g: Vec<usize> = alpha.iter().zip(beta).map(|(a, b)| a + b).collect();
    let ang = sphere_moment(&g);
    if ang == 0.0 {
        return Ok(C64::new(0.0, 0.0));
    }
    let two_m = 2 * params.m as i32;
    let power = (la + lb + n - 1) as i32;
    let radial = if lower {
        quad::adaptive_half_line(
            &|rho: f64| rho.powi(power) / (1.0 + rho.powi(two_m)),
            1e-14,
        )
    } else {
        -quad::adaptive_half_line(
            &|rho: f64| rho.powi(power - two_m) / (1.0 + rho.powi(two_m)),
            1e-14,
        )
    };
    let pre = I.powi((la + lb) as i32)
        / ((2.0 * PI).powi(n as i32) * multi_fact(alpha) * multi_fact(beta));
    Ok(pre * ang * radial)
}

/// Closed form of the radial integral in `A_{α,β}` (used as a test oracle).
pub fn radial_closed_form(s: f64, m: i64) -> f64 {
    let two_m = 2.0 * m as f64;
    PI / (two_m * (PI * s / two_m).sin())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AEntry {
    pub alpha: Vec<usize>,
    pub beta: Vec<usize>,
    pub value: C64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExpansionCoefficients {
    pub theta: i64,
    pub a_plus: Vec<C64>,
    pub a_minus: Vec<C64>,
    /// Coefficients of the negative-energy kernel, sign independent.
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub a_matrix: Vec<AEntry>,
    /// Max residual of the phase relation over all `j`.
    pub phase_residual: f64,
    /// Max deviation between the contour-matched and the series coefficients.
    pub matching_residual: f64,
    /// Ratios of extracted `a_j^+` to the textbook constant `d_{2j+n-2}(4π)^{-(n-1)/2} m^{-1} Σ e^{...}`.
    pub a_plus_unit_factors: Vec<C64>,
    pub b_unit_factors: Vec<f64>,
}

/// Laurent coefficients of `F(ρ) = R(ρ)` matched on the circle `|ρ| = radius`.
///
/// The samples are fitted in the least-squares sense by a trigonometric
/// polynomial, whose coefficients are the Laurent coefficients up to
/// aliasing of order `radius^{count}`.
pub fn match_laurent(rot: &Rotation, radius: f64, count: usize, powers: std::ops::RangeInclusive<i64>) -> Vec<C64> {
    let samples: Vec<(C64, C64)> = (0..count)
        .map(|k| {
            let th = 2.0 * PI * (k as f64 + 0.5) / count as f64;
            let z = C64::from_polar(radius, th);
            (z, rot.eval(z))
        })
        .collect();
    powers
        .map(|p| {
            let s: C64 = samples
                .iter()
                .map(|(z, f)| f * (z / radius).powi(-p as i32))
                .sum();
            s / (count as f64 * radius.powi(p as i32))
        })
        .collect()
}

pub fn expansion_coefficients(params: &ModelParams, theta: i64) -> Result<ExpansionCoefficients> {
    let (m, n) = (params.m, params.n);
    let max = 4 * m - n + 1;
    if theta > max {
        return Err(Error::OrderTooLarge { theta, max });
    }
    let plus = Rotation::boundary(params, SignBranch::Plus, C64::new(1.0, 0.0));
    let minus = Rotation::boundary(params, SignBranch::Minus, C64::new(1.0, 0.0));
    let neg = Rotation::negative(params, 1.0);

    let j_count = if theta >= 1 { (theta - 1) / 2 + 1 } else { 0 };
    let a_plus: Vec<C64> = (0..j_count).map(|j| plus.laurent(2 * j)).collect();
    let a_minus: Vec<C64> = (0..j_count).map(|j| minus.laurent(2 * j)).collect();
    let a_neg: Vec<C64> = (0..j_count).map(|j| neg.laurent(2 * j)).collect();

    let mut b = Vec::new();
    let mut b_units = Vec::new();
    let mut l = 0;
    while (2 * m - n + 2 * m * l) < theta {
        let p = 2 * m - n + 2 * m * l;
        let v = plus.laurent(p);
        if v.im.abs() > 1e-12 * v.norm().max(1.0) {
            return Err(Error::FitIllConditioned(format!("b_{l} not real: {v}")));
        }
        b.push(v.re);
        let textbook = prefactor(n) * d_coeff(n, 2 * m * l + 2 * m - 2);
        b_units.push(if textbook != 0.0 { v.re / textbook } else { f64::NAN });
        l += 1;
    }

    // phase relation a_j = e^{±iπ(2j+n-2m)/2m} a_j^±
    let mut phase_residual: f64 = 0.0;
    for j in 0..j_count as usize {
        let ph = PI * (2.0 * j as f64 + (n - 2 * m) as f64) / (2 * m) as f64;
        let rp = C64::from_polar(1.0, ph) * a_plus[j] - a_neg[j];
        let rm = C64::from_polar(1.0, -ph) * a_minus[j] - a_neg[j];
        let scale = a_neg[j].norm().max(1e-300);
        phase_residual = phase_residual.max(rp.norm() / scale).max(rm.norm() / scale);
        phase_residual = phase_residual.max(a_neg[j].im.abs() / scale);
    }

    // contour matching of every Laurent coefficient below theta
    let lowest = plus.lowest_power();
    let mut matching_residual: f64 = 0.0;
    if theta > lowest {
        for rot in [&plus, &minus, &neg] {
            let fitted = match_laurent(rot, 0.5, 64, lowest..=theta - 1);
            for (idx, p) in (lowest..theta).enumerate() {
                let exact = rot.laurent(p);
                let dev = (fitted[idx] - exact).norm() / exact.norm().max(1.0);
                matching_residual = matching_residual.max(dev);
            }
        }
    }

    let a_plus_unit_factors = (0..j_count)
        .map(|j| {
            let s: C64 = SignBranch::Plus
                .indices(m)
                .map(|k| C64::from_polar(1.0, PI * k as f64 / m as f64 * (2 * j + n - 2 * m) as f64))
                .sum();
            let textbook = prefactor(n) * d_coeff(n, 2 * j + n - 2) / m as f64 * s;
            if textbook.norm() > 1e-14 {
                a_plus[j as usize] / textbook
            } else {
                C64::new(f64::NAN, f64::NAN)
            }
        })
        .collect();

    let a_matrix = a_matrix_entries(params)?;
    Ok(ExpansionCoefficients {
        theta,
        a_plus,
        a_minus,
        a: a_neg.iter().map(|v| v.re).collect(),
        b,
        a_matrix,
        phase_residual,
        matching_residual,
        a_plus_unit_factors,
        b_unit_factors: b_units,
    })
}

/// All multi-indices of length `n` with `|α| = total`.
pub fn multi_indices(n: usize, total: usize) -> Vec<Vec<usize>> {
    if n == 1 {
        return vec![vec![total]];
    }
    let mut out = Vec::new();
    for first in (0..=total).rev() {
        for mut rest in multi_indices(n - 1, total - first) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

fn a_matrix_entries(params: &ModelParams) -> Result<Vec<AEntry>> {
    let n = params.n as usize;
    let kc = params.k_c as usize;
    let top = params.max_integer_index() as usize;
    let mut out = Vec::new();
    let mut push_block = |lo: usize, hi: usize| -> Result<()> {
        for la in lo..=hi {
            for lb in lo..=hi {
                for alpha in multi_indices(n, la) {
                    for beta in multi_indices(n, lb) {
                        let value = a_coefficient(params, &alpha, &beta)?;
                        out.push(AEntry {
                            alpha: alpha.clone(),
                            beta,
                            value,
                        });
                    }
                }
            }
        }
        Ok(())
    };
    if kc >= 1 {
        push_block(0, kc - 1)?;
    }
    if n == 1 && kc <= top {
        push_block(kc, top)?;
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RemainderSample {
    pub lambda: f64,
    /// `sup_r |∂_λ^l r_θ(λ)(r)| / r^θ` for `l = 0..=L`.
    pub sup_ratio: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RemainderProfile {
    pub theta: i64,
    pub samples: Vec<RemainderSample>,
    pub fitted_slopes: Vec<f64>,
    pub predicted_slopes: Vec<f64>,
}

/// `r_θ^±(λ)(r)`: the kernel minus its `θ`-truncated expansion.
pub fn remainder(params: &ModelParams, sign: SignBranch, theta: i64, lambda: f64, r: f64) -> C64 {
    let rot = Rotation::boundary(params, sign, C64::new(lambda, 0.0));
    let rc = C64::new(r, 0.0);
    if lambda * r <= 2.0 {
        return rot.laurent_tail(theta, rc);
    }
    let mut v = rot.eval(rc);
    for p in rot.lowest_power()..theta {
        v -= rot.laurent(p) * rc.powi(p as i32);
    }
    v
}

pub fn remainder_profile(
    params: &ModelParams,
    sign: SignBranch,
    theta: i64,
    lambda_grid: &[f64],
    r_grid: &[f64],
    derivative_order: usize,
) -> Result<RemainderProfile> {
    let max = 4 * params.m - params.n + 1;
    if theta > max {
        return Err(Error::OrderTooLarge { theta, max });
    }
    let l_max = theta + (params.n - 1) / 2;
    if derivative_order as i64 > l_max || derivative_order > 2 {
        return Err(Error::InvalidInput(format!(
            "derivative order {derivative_order} exceeds {}",
            l_max.min(2)
        )));
    }
    let samples: Vec<RemainderSample> = lambda_grid
        .iter()
        .map(|&lam| {
            let step = lam * 1e-3;
            let mut sup = vec![0.0f64; derivative_order + 1];
            for &r in r_grid {
                let f0 = remainder(params, sign, theta, lam, r);
                let denom = r.powi(theta as i32);
                sup[0] = sup[0].max(f0.norm() / denom);
                if derivative_order >= 1 {
                    let fp = remainder(params, sign, theta, lam + step, r);
                    let fm = remainder(params, sign, theta, lam - step, r);
                    sup[1] = sup[1].max(((fp - fm) / (2.0 * step)).norm() / denom);
                    if derivative_order >= 2 {
                        let d2 = (fp - 2.0 * f0 + fm) / (step * step);
                        sup[2] = sup[2].max(d2.norm() / denom);
                    }
                }
            }
            RemainderSample {
                lambda: lam,
                sup_ratio: sup,
            }
        })
        .collect();
    let mut fitted_slopes = Vec::new();
    let mut predicted_slopes = Vec::new();
    for l in 0..=derivative_order {
        let ys: Vec<f64> = samples.iter().map(|s| s.sup_ratio[l]).collect();
        let (slope, _, _) = quad::loglog_fit(lambda_grid, &ys)?;
        fitted_slopes.push(slope);
        predicted_slopes.push((params.n - 2 * params.m + theta - l as i64) as f64);
    }
    Ok(RemainderProfile {
        theta,
        samples,
        fitted_slopes,
        predicted_slopes,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LapProfile {
    pub lambdas: Vec<f64>,
    pub norms: Vec<f64>,
    pub fitted_slope: f64,
}

/// Operator norm of `<x>^{-s} R_0^±(λ^{2m}) <x>^{-s}` on a 1D grid, against `λ`.
pub fn lap_norm_profile(
    params: &ModelParams,
    sign: SignBranch,
    lambdas: &[f64],
    half_width: f64,
    points: usize,
    s: f64,
) -> Result<LapProfile> {
    if params.n != 1 {
        return Err(Error::BackendUnsupported(
            "weighted resolvent norms are computed on the line only".into(),
        ));
    }
    let h = 2.0 * half_width / (points - 1) as f64;
    let lam_max = lambdas.iter().cloned().fold(0.0, f64::max);
    if lam_max * h >= 0.5 || lambdas.iter().any(|&l| l < 1.0) {
        return Err(Error::GridTooCoarse(format!(
            "lambda_max * h = {} must stay below 0.5 with lambda >= 1",
            lam_max * h
        )));
    }
    let xs: Vec<f64> = (0..points).map(|i| -half_width + i as f64 * h).collect();
    let wts: Vec<f64> = xs.iter().map(|x| (1.0 + x * x).powf(-s / 2.0)).collect();
    let norms: Vec<f64> = lambdas
        .iter()
        .map(|&lam| {
            let rot = Rotation::boundary(params, sign, C64::new(lam, 0.0));
            // kernel depends on |i - j| only
            let profile: Vec<C64> = (0..points)
                .map(|d| rot.eval(C64::new(d as f64 * h, 0.0)) * h)
                .collect();
            let apply = |v: &[C64], adj: bool| -> Vec<C64> {
                (0..points)
                    .map(|i| {
                        let mut acc = C64::new(0.0, 0.0);
                        for j in 0..points {
                            let k = profile[i.abs_diff(j)];
                            acc += if adj { k.conj() } else { k } * wts[j] * v[j];
                        }
                        acc * wts[i]
                    })
                    .collect()
            };
            power_norm(points, |v| apply(&apply(v, false), true))
        })
        .collect();
    let (fitted_slope, _, _) = quad::loglog_fit(lambdas, &norms)?;
    Ok(LapProfile {
        lambdas: lambdas.to_vec(),
        norms,
        fitted_slope,
    })
}

/// Square root of the top eigenvalue of a positive operator, by power iteration.
fn power_norm<F: Fn(&[C64]) -> Vec<C64>>(dim: usize, gram: F) -> f64 {
    let mut v: Vec<C64> = (0..dim)
        .map(|i| C64::new(1.0 + (i as f64 * 0.37).sin(), (i as f64 * 0.11).cos()))
        .collect();
    let mut est = 0.0;
    for _ in 0..400 {
        let nv: f64 = v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        v.iter_mut().for_each(|c| *c /= nv);
        let w = gram(&v);
        let new_est: f64 = w.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        let done = (new_est - est).abs() <= 1e-10 * new_est;
        est = new_est;
        v = w;
        if done {
            break;
        }
    }
    est.sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::make_params;

    #[test]
    fn second_order_examples() {
        let v = second_order_kernel(1, 2.0, SignBranch::Plus, 0.0).unwrap();
        assert!((v - C64::new(0.0, 0.25)).norm() < 1e-15);
        let v = second_order_kernel(3, 1.0, SignBranch::Plus, 1.0).unwrap();
        assert!((v - C64::new(0.04300, 0.06696)).norm() < 1e-5);
        let w = second_order_kernel(3, 1.0, SignBranch::Minus, 1.0).unwrap();
        assert!((w - v.conj()).norm() < 1e-15);
        assert!(second_order_kernel(3, 1.0, SignBranch::Plus, 0.0).is_err());
    }

    #[test]
    fn five_dim_kernel_closed_form() {
        let (k, r) = (1.3, 0.7);
        let v = second_order_kernel(5, k, SignBranch::Plus, r).unwrap();
        let e = (I * k * r).exp() * (1.0 - I * k * r) / (8.0 * PI * PI * r.powi(3));
        assert!((v - e).norm() < 1e-13);
    }

    #[test]
    fn higher_kernel_examples() {
        let p = make_params(2, 1).unwrap();
        let v = higher_kernel(&p, SignBranch::Plus, 1.0, 0.0).unwrap();
        assert!((v - C64::new(-0.25, 0.25)).norm() < 1e-15);
        let v = higher_kernel(&p, SignBranch::Plus, 1.0, 10.0).unwrap();
        assert!((v - I * (10.0 * I).exp() / 4.0).norm() < 1e-4);
        let p1 = make_params(1, 3).unwrap();
        let a = higher_kernel(&p1, SignBranch::Plus, 0.8, 1.7).unwrap();
        let b = second_order_kernel(3, 0.8, SignBranch::Plus, 1.7).unwrap();
        assert!((a - b).norm() < 1e-15);
    }

    #[test]
    fn negative_energy_examples() {
        let p = make_params(1, 3).unwrap();
        let v = negative_energy_kernel(&p, 1.0, 1.0).unwrap();
        assert!((v - C64::new((-1f64).exp() / (4.0 * PI), 0.0)).norm() < 1e-14);
        let p = make_params(2, 1).unwrap();
        for r in [0.0, 0.5, 3.0] {
            let v = negative_energy_kernel(&p, 1.3, r).unwrap();
            assert!(v.im.abs() < 1e-12);
        }
    }

    #[test]
    fn laurent_matches_kernel() {
        let p = make_params(2, 3).unwrap();
        let rot = Rotation::boundary(&p, SignBranch::Plus, C64::new(0.7, 0.0));
        let r = C64::new(0.3, 0.0);
        let direct = rot.eval(r);
        let series = rot.laurent_tail(rot.lowest_power(), r);
        assert!((direct - series).norm() < 1e-12 * direct.norm());
    }

    #[test]
    fn coefficient_examples() {
        let c = expansion_coefficients(&make_params(1, 1).unwrap(), 1).unwrap();
        assert!((c.a_plus[0] - C64::new(0.0, 0.5)).norm() < 1e-14);
        assert!((c.a_minus[0] - C64::new(0.0, -0.5)).norm() < 1e-14);
        let c = expansion_coefficients(&make_params(1, 3).unwrap(), 1).unwrap();
        assert!((c.b[0] - 1.0 / (4.0 * PI)).abs() < 1e-14);
        let c = expansion_coefficients(&make_params(2, 1).unwrap(), 4).unwrap();
        assert!((c.b[0] - 1.0 / 12.0).abs() < 1e-14);
        assert!(c.phase_residual < 1e-12);
        assert!(c.matching_residual < 1e-10, "{}", c.matching_residual);
    }

    #[test]
    fn a_coefficient_examples() {
        let p = make_params(2, 1).unwrap();
        let v = a_coefficient(&p, &[0], &[0]).unwrap();
        assert!((v.re - 1.0 / (2.0 * 2f64.sqrt())).abs() < 1e-12);
        assert_eq!(a_coefficient(&p, &[0], &[1]).unwrap(), C64::new(0.0, 0.0));
        let v = a_coefficient(&p, &[2], &[2]).unwrap();
        assert!((v.re + 1.0 / (8.0 * 2f64.sqrt())).abs() < 1e-12, "{v}");
        assert!(matches!(
            a_coefficient(&p, &[1], &[2]),
            Err(Error::MixedRegime { .. })
        ));
    }

    #[test]
    fn multi_index_enumeration() {
        assert_eq!(multi_indices(3, 2).len(), 6);
        assert_eq!(multi_indices(1, 4), vec![vec![4]]);
    }
}
