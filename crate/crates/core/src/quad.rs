//! Quadrature building blocks: Gauss-Legendre panels, adaptive integration,
//! barycentric interpolation and Euler-Maclaurin kink stencils.

use std::collections::HashMap;
use std::num::NonZeroUsize;
use std::sync::{Arc, Mutex, OnceLock};

use gauss_quad::legendre::GaussLegendre;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

type C64 = Complex64;

/// Gauss-Legendre nodes and weights on `[-1, 1]`, cached per order.
pub fn gauss_legendre(order: usize) -> Arc<Vec<(f64, f64)>> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<Vec<(f64, f64)>>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().expect("quadrature cache poisoned");
    guard
        .entry(order)
        .or_insert_with(|| {
            let rule = GaussLegendre::new(NonZeroUsize::new(order).expect("order >= 1"));
            let mut pairs: Vec<(f64, f64)> = rule.as_node_weight_pairs().to_vec();
            pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
            Arc::new(pairs)
        })
        .clone()
}

/// Gauss-Legendre rule mapped to `[a, b]`.
pub fn gl_panel(order: usize, a: f64, b: f64) -> Vec<(f64, f64)> {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (b + a);
    gauss_legendre(order)
        .iter()
        .map(|&(x, w)| (mid + half * x, half * w))
        .collect()
}

pub fn integrate_gl<F: FnMut(f64) -> f64>(order: usize, a: f64, b: f64, mut f: F) -> f64 {
    gl_panel(order, a, b).into_iter().map(|(x, w)| w * f(x)).sum()
}

/// Adaptive bisection with a 20/30-point Gauss-Legendre pair.
pub fn adaptive<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    fn rec<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64, depth: usize) -> f64 {
        let coarse = integrate_gl(20, a, b, f);
        let fine = integrate_gl(30, a, b, f);
        if (fine - coarse).abs() <= tol.max(1e-15 * fine.abs()) || depth > 40 {
            return fine;
        }
        let mid = 0.5 * (a + b);
        rec(f, a, mid, 0.5 * tol, depth + 1) + rec(f, mid, b, 0.5 * tol, depth + 1)
    }
    rec(f, a, b, tol, 0)
}

/// Integral over `[0, inf)` through the map `x = u/(1-u)`.
pub fn adaptive_half_line<F: Fn(f64) -> f64>(f: &F, tol: f64) -> f64 {
    let g = |u: f64| {
        if u >= 1.0 {
            return 0.0;
        }
        let one_minus = 1.0 - u;
        let x = u / one_minus;
        f(x) / (one_minus * one_minus)
    };
    // split so that the near-singular parts are isolated
    let cuts = [0.0, 1e-6, 1e-3, 0.1, 0.5, 0.9, 0.99, 0.999, 0.9999, 1.0];
    cuts.windows(2)
        .map(|w| adaptive(&g, w[0], w[1], tol / cuts.len() as f64))
        .sum()
}

/// Bernoulli numbers `B_{2k}` for `k = 0..=10`.
pub fn bernoulli_even(k: usize) -> f64 {
    const B: [f64; 11] = [
        1.0,
        1.0 / 6.0,
        -1.0 / 30.0,
        1.0 / 42.0,
        -1.0 / 30.0,
        5.0 / 66.0,
        -691.0 / 2730.0,
        7.0 / 6.0,
        -3617.0 / 510.0,
        43867.0 / 798.0,
        -174611.0 / 330.0,
    ];
    B[k]
}

/// Symmetric stencil `w_{-S..=S}` correcting the trapezoid rule across a kink.
///
/// For an integrand whose left and right analytic branches differ by
/// `sum_p d_p s^p phi(x+s)` (odd `p` only) at a node `x`, the exact integral is
/// `T - sum_k B_{2k} h^{2k}/(2k)! J_{2k-1}` where `J_q` is the jump of the
/// `q`-th derivative. The returned weights act on samples `phi(x + s h)`.
pub fn kink_stencil(h: f64, jumps: &[(usize, C64)], half_width: usize) -> Vec<C64> {
    let s_max = half_width;
    let mut beta = vec![C64::new(0.0, 0.0); s_max + 1];
    for &(p, d) in jumps {
        debug_assert!(p % 2 == 1);
        let hp = h.powi(p as i32 + 1);
        for (qi, b) in beta.iter_mut().enumerate() {
            let q = 2 * qi;
            let kk = (q + p + 1) / 2;
            if kk > 10 {
                continue;
            }
            let coeff = -bernoulli_even(kk) / (q + p + 1) as f64;
            *b += d * hp * coeff * h.powi(q as i32);
        }
    }
    // beta_q multiplies h^q phi^{(q)}/q!, so the moment conditions are
    // sum_s w_s s^q = beta_q / h^q
    let n = s_max + 1;
    let mut a = DMatrix::<f64>::zeros(n, n);
    for qi in 0..n {
        let q = 2 * qi as i32;
        for s in 0..n {
            let mult = if s == 0 { 1.0 } else { 2.0 };
            a[(qi, s)] = if q == 0 {
                mult
            } else {
                mult * (s as f64).powi(q)
            };
        }
    }
    let lu = a.lu();
    let mut re = DVector::<f64>::zeros(n);
    let mut im = DVector::<f64>::zeros(n);
    for qi in 0..n {
        let scale = h.powi(2 * qi as i32);
        re[qi] = beta[qi].re / scale;
        im[qi] = beta[qi].im / scale;
    }
    let wr = lu.solve(&re).expect("Vandermonde system is regular");
    let wi = lu.solve(&im).expect("Vandermonde system is regular");
    let mut out = vec![C64::new(0.0, 0.0); 2 * s_max + 1];
    for s in 0..n {
        let w = C64::new(wr[s], wi[s]);
        out[s_max + s] = w;
        out[s_max - s] = w;
    }
    out
}

/// Barycentric interpolant on Chebyshev points of the second kind.
#[derive(Debug, Clone)]
pub struct ChebInterp {
    pub a: f64,
    pub b: f64,
    pub nodes: Vec<f64>,
    pub values: Vec<C64>,
}

impl ChebInterp {
    pub fn nodes(a: f64, b: f64, count: usize) -> Vec<f64> {
        let n = count - 1;
        (0..=n)
            .map(|j| {
                let x = -(std::f64::consts::PI * j as f64 / n as f64).cos();
                0.5 * (a + b) + 0.5 * (b - a) * x
            })
            .collect()
    }

    pub fn new(a: f64, b: f64, values: Vec<C64>) -> Self {
        let nodes = Self::nodes(a, b, values.len());
        ChebInterp {
            a,
            b,
            nodes,
            values,
        }
    }

    pub fn eval(&self, x: f64) -> C64 {
        let n = self.nodes.len() - 1;
        let mut num = C64::new(0.0, 0.0);
        let mut den = 0.0;
        for (j, (&xj, &fj)) in self.nodes.iter().zip(&self.values).enumerate() {
            let d = x - xj;
            if d == 0.0 {
                return fj;
            }
            let mut w = if j % 2 == 0 { 1.0 } else { -1.0 };
            if j == 0 || j == n {
                w *= 0.5;
            }
            let c = w / d;
            num += fj * c;
            den += c;
        }
        num / den
    }
}

/// Least-squares slope and intercept of `y` against `x`, with the max residual.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let resid = x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - intercept - slope * a).abs())
        .fold(0.0, f64::max);
    (slope, intercept, resid)
}

/// Log-log fit, rejecting nonpositive or non-finite samples.
pub fn loglog_fit(x: &[f64], y: &[f64]) -> crate::Result<(f64, f64, f64)> {
    let pts: Vec<(f64, f64)> = x
        .iter()
        .zip(y)
        .filter(|(a, b)| **a > 0.0 && **b > 0.0 && a.is_finite() && b.is_finite())
        .map(|(a, b)| (a.ln(), b.ln()))
        .collect();
    if pts.len() < 3 || pts.len() < x.len() {
        return Err(crate::Error::FitIllConditioned(format!(
            "{} usable samples out of {}",
            pts.len(),
            x.len()
        )));
    }
    let (lx, ly): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
    let (s, c, r) = linear_fit(&lx, &ly);
    Ok((s, c.exp(), r))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gl_integrates_polynomials() {
        let v = integrate_gl(10, -1.0, 2.0, |x| x.powi(7) - 3.0 * x * x);
        let exact = (2f64.powi(8) - 1.0) / 8.0 - (8.0 + 1.0);
        assert!((v - exact).abs() < 1e-12);
    }

    #[test]
    fn half_line_integral() {
        let v = adaptive_half_line(&|x: f64| 1.0 / (1.0 + x.powi(4)), 1e-13);
        let exact = std::f64::consts::PI / (2.0 * 2f64.sqrt());
        assert!((v - exact).abs() < 1e-11);
    }

    #[test]
    fn kink_stencil_cubic_kernel() {
        // int |x - y|^3 exp(-y^2) dy at x = 0 equals 1 exactly
        let h = 0.1;
        let nodes: Vec<f64> = (-120..=120).map(|i| i as f64 * h).collect();
        let f = |y: f64| (-y * y).exp();
        let trap: f64 = nodes.iter().map(|&y| h * y.abs().powi(3) * f(y)).sum();
        // left minus right branch: (-s)^3 - s^3 = -2 s^3
        let w = kink_stencil(h, &[(3, C64::new(-2.0, 0.0))], 3);
        let corr: f64 = (0..7).map(|i| w[i].re * f((i as f64 - 3.0) * h)).sum();
        assert!((trap - 1.0).abs() > 1e-6);
        assert!((trap + corr - 1.0).abs() < 1e-11, "{}", trap + corr - 1.0);
    }

    #[test]
    fn kink_stencil_abs_kernel() {
        let h = 0.05;
        let x0 = 0.3;
        let f = |y: f64| (-(y - 0.2) * (y - 0.2)).exp();
        let nodes: Vec<f64> = (-300..=300).map(|i| x0 + i as f64 * h).collect();
        let trap: f64 = nodes.iter().map(|&y| h * (x0 - y).abs() * f(y)).sum();
        let exact = adaptive(&|y: f64| (x0 - y).abs() * f(y), -15.0, x0, 1e-14)
            + adaptive(&|y: f64| (x0 - y).abs() * f(y), x0, 15.0, 1e-14);
        let w = kink_stencil(h, &[(1, C64::new(-2.0, 0.0))], 4);
        let corr: f64 = (0..9).map(|i| w[i].re * f(x0 + (i as f64 - 4.0) * h)).sum();
        assert!((trap + corr - exact).abs() < 1e-10, "{}", trap + corr - exact);
    }

    #[test]
    fn chebyshev_interpolation() {
        let nodes = ChebInterp::nodes(0.0, 2.0, 30);
        let vals = nodes.iter().map(|&x| C64::new((3.0 * x).sin(), x * x)).collect();
        let it = ChebInterp::new(0.0, 2.0, vals);
        let x = 1.2345;
        let e = it.eval(x) - C64::new((3.0 * x).sin(), x * x);
        assert!(e.norm() < 1e-12);
    }
}
