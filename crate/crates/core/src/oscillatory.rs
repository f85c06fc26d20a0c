//! Oscillatory integrals `I(t, x) = ∫_0^∞ e^{-itλ^{2m} + iλx} f(λ) dλ`.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::cutoff::Cutoff;
use crate::error::{Error, Result};
use crate::quad;

type C64 = Complex64;

pub type RealFn = Arc<dyn Fn(f64) -> C64 + Send + Sync>;
pub type ComplexFn = Arc<dyn Fn(C64) -> C64 + Send + Sync>;

/// Amplitude `f` in a symbol class: `|∂^j f(λ)| <= C_j λ^{b-j}` for `j <= K`.
#[derive(Clone)]
pub struct SymbolAmplitude {
    pub eval: RealFn,
    /// Analytic continuation, valid for `Re λ >= analytic_from`.
    pub analytic: Option<ComplexFn>,
    pub analytic_from: f64,
    pub derivative_order: usize,
    pub order: f64,
    pub support: (f64, f64),
    /// Points where the amplitude changes scale (cutoff edges, table panels).
    pub breaks: Vec<f64>,
}

impl std::fmt::Debug for SymbolAmplitude {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SymbolAmplitude")
            .field("order", &self.order)
            .field("derivative_order", &self.derivative_order)
            .field("support", &self.support)
            .field("analytic", &self.analytic.is_some())
            .finish()
    }
}

impl SymbolAmplitude {
    pub fn new(eval: RealFn, order: f64, support: (f64, f64)) -> Self {
        SymbolAmplitude {
            eval,
            analytic: None,
            analytic_from: f64::INFINITY,
            derivative_order: 2,
            order,
            support,
            breaks: Vec::new(),
        }
    }

    pub fn zero() -> Self {
        Self::new(Arc::new(|_| C64::new(0.0, 0.0)), 0.0, (0.0, 1.0))
    }

    /// An entire amplitude given on the whole half line.
    pub fn entire(f: ComplexFn, order: f64) -> Self {
        let g = f.clone();
        SymbolAmplitude {
            eval: Arc::new(move |l| g(C64::new(l, 0.0))),
            analytic: Some(f),
            analytic_from: 0.0,
            derivative_order: usize::MAX,
            order,
            support: (0.0, f64::INFINITY),
            breaks: Vec::new(),
        }
    }

    /// `λ^b χ(λ)` with `χ = 1` below `inner` and `0` above `outer`.
    pub fn low_power(b: f64, inner: f64, outer: f64) -> Self {
        let chi = Cutoff::new(inner, outer);
        let mut a = Self::new(
            Arc::new(move |l: f64| C64::new(l.powf(b) * chi.eval(l), 0.0)),
            b,
            (0.0, outer),
        );
        a.derivative_order = usize::MAX;
        a.breaks = vec![inner];
        a
    }

    /// `λ^b (1 - χ(λ))`, analytic beyond `outer`.
    pub fn high_power(b: f64, inner: f64, outer: f64) -> Self {
        let chi = Cutoff::new(inner, outer);
        SymbolAmplitude {
            eval: Arc::new(move |l: f64| C64::new(l.powf(b) * chi.complement(l), 0.0)),
            analytic: Some(Arc::new(move |l: C64| l.powf(b))),
            analytic_from: outer,
            derivative_order: usize::MAX,
            order: b,
            support: (inner, f64::INFINITY),
            breaks: vec![outer],
        }
    }

    pub fn conj(&self) -> Self {
        let f = self.eval.clone();
        let mut out = self.clone();
        out.eval = Arc::new(move |l| f(l).conj());
        out.analytic = self.analytic.clone().map(|g| -> ComplexFn {
            Arc::new(move |z: C64| g(z.conj()).conj())
        });
        out
    }

    pub fn scaled(&self, c: C64) -> Self {
        let f = self.eval.clone();
        let mut out = self.clone();
        out.eval = Arc::new(move |l| c * f(l));
        out.analytic = self
            .analytic
            .clone()
            .map(|g| -> ComplexFn { Arc::new(move |z| c * g(z)) });
        out
    }

    /// `self + other`; supports and breakpoints are merged.
    pub fn add(&self, other: &Self) -> Self {
        let (f, g) = (self.eval.clone(), other.eval.clone());
        let analytic = match (&self.analytic, &other.analytic) {
            (Some(a), Some(b)) => {
                let (a, b) = (a.clone(), b.clone());
                Some(Arc::new(move |z| a(z) + b(z)) as ComplexFn)
            }
            _ => None,
        };
        let mut breaks = self.breaks.clone();
        breaks.extend(&other.breaks);
        SymbolAmplitude {
            eval: Arc::new(move |l| f(l) + g(l)),
            analytic,
            analytic_from: self.analytic_from.max(other.analytic_from),
            derivative_order: self.derivative_order.min(other.derivative_order),
            order: self.order.max(other.order),
            support: (
                self.support.0.min(other.support.0),
                self.support.1.max(other.support.1),
            ),
            breaks,
        }
    }

    /// Sampled symbol constants `C_j = sup |∂^j f(λ)| λ^{j-b}` on a log grid, `j <= 2`.
    pub fn symbol_constants(&self, grid: &[f64]) -> Vec<f64> {
        let mut c = vec![0.0f64; 3];
        for &l in grid {
            if l <= self.support.0 || l >= self.support.1 {
                continue;
            }
            let h = 1e-4 * l;
            let (fm, f0, fp) = ((self.eval)(l - h), (self.eval)(l), (self.eval)(l + h));
            let d = [f0.norm(), ((fp - fm) / (2.0 * h)).norm(), ((fp - 2.0 * f0 + fm) / (h * h)).norm()];
            for j in 0..3 {
                c[j] = c[j].max(d[j] * l.powf(j as f64 - self.order));
            }
        }
        c
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OscMethod {
    PanelFilon,
    RotatedTail,
    BruteForce,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OscValue {
    pub value: C64,
    pub error: f64,
    pub panels: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OscOptions {
    /// Absolute tolerance for the integral.
    pub tol: f64,
    pub panel_budget: usize,
}

impl Default for OscOptions {
    fn default() -> Self {
        OscOptions {
            tol: 1e-12,
            panel_budget: 400_000,
        }
    }
}

/// `μ_b = (m - 1 - b)/(2m - 1)`.
pub fn mu(b: f64, m: i64) -> f64 {
    (m as f64 - 1.0 - b) / (2.0 * m as f64 - 1.0)
}

#[derive(Clone, Copy)]
struct Phase {
    t: f64,
    x: f64,
    two_m: i32,
}

impl Phase {
    fn value(&self, l: C64) -> C64 {
        C64::new(0.0, -self.t) * l.powi(self.two_m) + C64::new(0.0, self.x) * l
    }

    /// `|Φ'(λ)|` for real `λ >= 0`, monotone away from the stationary point.
    fn deriv(&self, l: f64) -> f64 {
        (-(self.two_m as f64) * self.t * l.powi(self.two_m - 1) + self.x).abs()
    }

    fn deriv_c(&self, l: C64) -> f64 {
        (-(self.two_m as f64) * self.t * l.powi(self.two_m - 1) + self.x).norm()
    }

    fn stationary(&self) -> Option<f64> {
        if self.x / self.t > 0.0 {
            Some((self.x / (self.two_m as f64 * self.t)).powf(1.0 / (self.two_m as f64 - 1.0)))
        } else {
            None
        }
    }
}

#[derive(Default)]
struct PanelSum {
    value: C64,
    error: f64,
    panels: usize,
}

impl From<PanelSum> for OscValue {
    fn from(s: PanelSum) -> Self {
        OscValue {
            value: s.value,
            error: s.error,
            panels: s.panels,
        }
    }
}

/// Integration of the analytically continued integrand along complex segments.
struct ComplexPath {
    phase: Phase,
    amp: ComplexFn,
    tol: f64,
    budget: usize,
}

impl ComplexPath {
    fn integrand(&self, z: C64) -> C64 {
        let e = self.phase.value(z);
        if e.re < -700.0 {
            return C64::new(0.0, 0.0);
        }
        (self.amp)(z) * e.exp()
    }

    /// Segment `z0 -> z1`, dropped when the integrand is below `e^{-50}` throughout.
    fn segment(&self, z0: C64, z1: C64, acc: &mut PanelSum) -> Result<()> {
        let total = (z1 - z0).norm();
        if total == 0.0 {
            return Ok(());
        }
        let dir = (z1 - z0) / total;
        let negligible = (0..=64).all(|k| {
            let z = z0 + dir * (total * k as f64 / 64.0);
            self.phase.value(z).re + (self.amp)(z).norm().max(1e-300).ln() + total.max(1.0).ln() < -50.0
        });
        if negligible {
            return Ok(());
        }
        let g = |s: f64| self.integrand(z0 + dir * s) * dir;
        let mut s = 0.0;
        while s < total {
            let mut len = total - s;
            for _ in 0..4 {
                let d = self
                    .phase
                    .deriv_c(z0 + dir * s)
                    .max(self.phase.deriv_c(z0 + dir * (s + len)));
                len = len.min(1.6 * 2.0 * PI / d.max(1e-300));
            }
            let end = if total - (s + len) < 1e-3 * len { total } else { s + len };
            let noise = phase_noise(&self.phase, z0 + dir * end);
            adapt_panel(&g, s, end, self.tol * (end - s) / total, noise, acc, self.budget, 0)?;
            s = end;
        }
        Ok(())
    }

    /// Ray `z0 + s dir`, `s >= 0`, until the integrand has decayed.
    fn ray(&self, z0: C64, dir: C64, acc: &mut PanelSum) -> Result<()> {
        let g = |s: f64| self.integrand(z0 + dir * s) * dir;
        let scale = z0.norm().max(1e-3);
        let mut sv = 0.0;
        let mut quiet = 0;
        while quiet < 3 {
            let l = z0 + dir * sv;
            let d = self.phase.deriv_c(l).max(self.phase.deriv_c(l + dir * 0.1 * (scale + sv)));
            let len = (1.6 * 2.0 * PI / d.max(1e-300)).min(0.5 * (scale + sv)).max(1e-12);
            let before = acc.value;
            let noise = phase_noise(&self.phase, z0 + dir * (sv + len));
            adapt_panel(&g, sv, sv + len, self.tol * 1e-2, noise, acc, self.budget, 0)?;
            sv += len;
            let end = z0 + dir * sv;
            let expo = self.phase.value(end).re + (self.amp)(end).norm().max(1e-300).ln();
            if expo < -45.0 && (acc.value - before).norm() < 1e-18 {
                quiet += 1;
            } else {
                quiet = 0;
            }
        }
        Ok(())
    }
}

/// Adaptive GL16/GL24 panel quadrature of `g` over `[a, b]` with panels of
/// at most 1.6 local periods of the phase.
fn integrate_real(
    g: &dyn Fn(f64) -> C64,
    phase: &Phase,
    breaks: &[f64],
    graded_zero: bool,
    tol: f64,
    budget: usize,
) -> Result<PanelSum> {
    let a = breaks[0];
    let b = *breaks.last().expect("nonempty breaks");
    let total = (b - a).max(f64::MIN_POSITIVE);
    let mut acc = PanelSum {
        value: C64::new(0.0, 0.0),
        error: 0.0,
        panels: 0,
    };
    let mut intervals: Vec<(f64, f64)> = Vec::new();
    for w in breaks.windows(2) {
        if w[1] > w[0] {
            intervals.push((w[0], w[1]));
        }
    }
    if graded_zero && a == 0.0 {
        // geometric panels toward the λ^b singularity
        let (_, first_end) = intervals[0];
        let top = first_end.min(1.6 * 2.0 * PI / phase.deriv(first_end).max(1e-300));
        let mut pts = vec![0.0];
        let mut s = top * 2f64.powi(-50);
        while s < top {
            pts.push(s);
            s *= 2.0;
        }
        pts.push(top);
        let mut graded: Vec<(f64, f64)> = pts.windows(2).map(|w| (w[0], w[1])).collect();
        if top < first_end {
            graded.push((top, first_end));
        }
        intervals.splice(0..1, graded);
    }
    for (lo, hi) in intervals {
        let mut x = lo;
        while x < hi {
            let mut len = hi - x;
            for _ in 0..4 {
                let d = phase.deriv(x).max(phase.deriv(x + len));
                len = len.min(1.6 * 2.0 * PI / d.max(1e-300));
            }
            let end = if hi - (x + len) < 1e-3 * len { hi } else { x + len };
            let noise = phase_noise(phase, C64::new(end, 0.0));
            adapt_panel(g, x, end, tol * (end - x) / total, noise, &mut acc, budget, 0)?;
            x = end;
        }
    }
    Ok(acc)
}

/// Relative rounding noise of `e^{Φ(λ)}` when the terms of `Φ` are large.
fn phase_noise(phase: &Phase, l: C64) -> f64 {
    let n = l.norm();
    1e-15 * (1.0 + phase.t.abs() * n.powi(phase.two_m) + phase.x.abs() * n)
}

#[allow(clippy::too_many_arguments)]
fn adapt_panel(
    g: &dyn Fn(f64) -> C64,
    a: f64,
    b: f64,
    tol: f64,
    noise: f64,
    acc: &mut PanelSum,
    budget: usize,
    depth: usize,
) -> Result<()> {
    acc.panels += 1;
    if acc.panels > budget {
        return Err(Error::PhaseUnderResolved(format!(
            "panel budget {budget} exhausted near lambda = {a}"
        )));
    }
    let lo: C64 = quad::gl_panel(16, a, b).into_iter().map(|(x, w)| w * g(x)).sum();
    let mut mass = 0.0;
    let mut hi = C64::new(0.0, 0.0);
    for (x, w) in quad::gl_panel(24, a, b) {
        let v = w * g(x);
        mass += v.norm();
        hi += v;
    }
    let err = (hi - lo).norm();
    if err <= tol.max(noise * mass) || depth > 40 {
        acc.value += hi;
        acc.error += err;
        return Ok(());
    }
    let mid = 0.5 * (a + b);
    adapt_panel(g, a, mid, 0.5 * tol, noise, acc, budget, depth + 1)?;
    adapt_panel(g, mid, b, 0.5 * tol, noise, acc, budget, depth + 1)
}

/// Point beyond which a decaying amplitude is negligible.
fn decay_cut(f: &SymbolAmplitude) -> Result<f64> {
    let start = f.support.0.max(1.0);
    let mut peak: f64 = 0.0;
    let mut l = f.support.0.max(1e-3);
    while l < start {
        peak = peak.max((f.eval)(l).norm());
        l *= 1.5;
    }
    let mut l = start;
    for _ in 0..200 {
        let v = (f.eval)(l).norm();
        peak = peak.max(v);
        if (f.eval)(l).norm() <= 1e-18 * peak.max(1e-300)
            && (f.eval)(1.3 * l).norm() <= 1e-18 * peak.max(1e-300)
        {
            return Ok(l);
        }
        l *= 1.25;
    }
    Err(Error::PhaseUnderResolved(
        "amplitude has an infinite non-decaying tail; supply an analytic continuation".into(),
    ))
}

fn breakpoints(f: &SymbolAmplitude, lo: f64, hi: f64, phase: &Phase) -> Vec<f64> {
    let mut pts = vec![lo, hi];
    pts.extend(f.breaks.iter().copied().filter(|&p| p > lo && p < hi));
    if let Some(s) = phase.stationary() {
        if s > lo && s < hi {
            pts.push(s);
        }
    }
    pts.sort_by(|a, b| a.total_cmp(b));
    pts.dedup();
    pts
}

fn is_nonneg_integer(b: f64) -> bool {
    b >= 0.0 && b.fract() == 0.0
}

/// Evaluate `∫_0^∞ e^{-itλ^{2m} + iλx} f(λ) dλ`.
pub fn eval_osc(t: f64, x: f64, f: &SymbolAmplitude, m: i64, method: OscMethod) -> Result<OscValue> {
    eval_osc_with(t, x, f, m, method, &OscOptions::default())
}

pub fn eval_osc_with(
    t: f64,
    x: f64,
    f: &SymbolAmplitude,
    m: i64,
    method: OscMethod,
    opts: &OscOptions,
) -> Result<OscValue> {
    if t == 0.0 {
        return Err(Error::ZeroTime);
    }
    let phase = Phase {
        t,
        x,
        two_m: 2 * m as i32,
    };
    let amp = f.eval.clone();
    let g = move |l: f64| amp(l) * phase.value(C64::new(l, 0.0)).exp();
    let graded = f.support.0 == 0.0 && !is_nonneg_integer(f.order);
    match method {
        OscMethod::PanelFilon => {
            let hi = if f.support.1.is_finite() {
                f.support.1
            } else {
                decay_cut(f)?
            };
            let pts = breakpoints(f, f.support.0, hi, &phase);
            let s = integrate_real(&g, &phase, &pts, graded, opts.tol, opts.panel_budget)?;
            Ok(OscValue {
                value: s.value,
                error: s.error,
                panels: s.panels,
            })
        }
        OscMethod::RotatedTail => {
            let analytic = f.analytic.clone().ok_or_else(|| {
                Error::InvalidInput("rotated tail needs an analytic amplitude".into())
            })?;
            let a0 = f.analytic_from.max(f.support.0);
            let tail_free = f.support.1.is_finite();
            let sigma = t.signum();
            let path = ComplexPath {
                phase,
                amp: analytic.clone(),
                tol: opts.tol,
                budget: opts.panel_budget,
            };
            if let (Some(star), false) = (phase.stationary(), tail_free) {
                let d1 = phase.deriv(a0);
                let curv = (2.0 * m as f64)
                    * (2.0 * m as f64 - 1.0)
                    * t.abs()
                    * star.powi(2 * m as i32 - 2);
                let width = (2.0 * 90.0 / curv).sqrt();
                let rise = 90.0 / d1.max(1e-300);
                if star > 1.5 * a0 && width < 0.5 * (star - a0) && rise < 0.5 * (star - a0) {
                    // steepest descent through the stationary point
                    let pts = breakpoints(f, f.support.0, a0, &phase);
                    let mut s = if a0 > f.support.0 {
                        integrate_real(&g, &phase, &pts, graded, opts.tol, opts.panel_budget)?
                    } else {
                        PanelSum::default()
                    };
                    let diag = C64::from_polar(1.0, -sigma * PI / 4.0);
                    let p0 = C64::new(a0, 0.0);
                    let p1 = p0 + C64::new(0.0, sigma * rise);
                    let q1 = star - diag * width;
                    let q2 = star + diag * width;
                    path.segment(p0, p1, &mut s)?;
                    path.segment(p1, q1, &mut s)?;
                    path.segment(q1, C64::new(star, 0.0), &mut s)?;
                    path.segment(C64::new(star, 0.0), q2, &mut s)?;
                    let dir = C64::from_polar(1.0, -sigma * PI / (4.0 * m as f64));
                    path.ray(q2, dir, &mut s)?;
                    return Ok(s.into());
                }
            }
            let star = phase.stationary().unwrap_or(0.0);
            let l1 = (1.5 * star)
                .max(t.abs().powf(-1.0 / (2.0 * m as f64)))
                .max(a0);
            let l1 = if tail_free { l1.min(f.support.1) } else { l1 };
            let pts = breakpoints(f, f.support.0, l1, &phase);
            let mut s = integrate_real(&g, &phase, &pts, graded, opts.tol, opts.panel_budget)?;
            if tail_free && l1 >= f.support.1 {
                return Ok(s.into());
            }
            let dir = C64::from_polar(1.0, -sigma * PI / (4.0 * m as f64));
            path.ray(C64::new(l1, 0.0), dir, &mut s)?;
            Ok(s.into())
        }
        OscMethod::BruteForce => {
            if !is_nonneg_integer(f.order) || f.support.0 != 0.0 && graded {
                return Err(Error::InvalidInput(
                    "brute force needs an amplitude smooth at the origin".into(),
                ));
            }
            let hi = if f.support.1.is_finite() {
                f.support.1
            } else {
                decay_cut(f)?
            };
            let lo = f.support.0;
            let dmax = phase.deriv(lo).max(phase.deriv(hi)).max(1.0);
            let h0 = (2.0 * PI / (100.0 * dmax)).min((hi - lo) / 64.0);
            let coarse = ((hi - lo) / h0).ceil() as usize;
            let n4 = 4 * coarse;
            if n4 > 50_000_000 {
                return Err(Error::PhaseUnderResolved(format!("{n4} trapezoid nodes")));
            }
            let hf = (hi - lo) / n4 as f64;
            let vals: Vec<C64> = (0..=n4).map(|i| g(lo + i as f64 * hf)).collect();
            let trap = |stride: usize| -> C64 {
                let mut s = 0.5 * (vals[0] + vals[n4]);
                let mut i = stride;
                while i < n4 {
                    s += vals[i];
                    i += stride;
                }
                s * hf * stride as f64
            };
            let (t1, t2, t4) = (trap(4), trap(2), trap(1));
            let r1 = (4.0 * t2 - t1) / 3.0;
            let r1b = (4.0 * t4 - t2) / 3.0;
            let r2 = (16.0 * r1b - r1) / 15.0;
            Ok(OscValue {
                value: r2,
                error: (r2 - r1b).norm(),
                panels: n4,
            })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Region {
    Inside,
    Outside,
    /// High-energy branch `|x| ≳ t` with a stationary point in the support.
    Stationary,
    /// High-energy branch `|x| ≪ t`, rapid decay.
    Rapid,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecayFit {
    pub region: Region,
    pub exponent_t: Option<f64>,
    pub exponent_x: Option<f64>,
    pub predicted_t: Option<f64>,
    pub predicted_x: Option<f64>,
    pub constant: f64,
    /// Max deviation of `log |I|` from the fitted plane.
    pub residual: f64,
    pub samples: Vec<(f64, f64, f64)>,
}

/// Least-squares fit of `log|I| = c + α log t + β log|x|` over the varying coordinates.
pub fn fit_power_law(region: Region, samples: &[(f64, f64, f64)]) -> Result<DecayFit> {
    let usable: Vec<_> = samples.iter().filter(|s| s.2 > 0.0 && s.2.is_finite()).collect();
    if usable.len() < 3 || usable.len() < samples.len() {
        return Err(Error::FitIllConditioned(format!(
            "{} usable samples out of {}",
            usable.len(),
            samples.len()
        )));
    }
    let varies = |k: usize| {
        let first = if k == 0 { usable[0].0 } else { usable[0].1.abs() };
        usable
            .iter()
            .any(|s| (if k == 0 { s.0 } else { s.1.abs() }) != first)
    };
    let (vt, vx) = (varies(0), varies(1));
    let cols = 1 + vt as usize + vx as usize;
    let a = DMatrix::from_fn(usable.len(), cols, |i, j| {
        let s = usable[i];
        match (j, vt) {
            (0, _) => 1.0,
            (1, true) => s.0.ln(),
            _ => s.1.abs().ln(),
        }
    });
    let y = DVector::from_iterator(usable.len(), usable.iter().map(|s| s.2.ln()));
    let svd = a.clone().svd(true, true);
    let coef = svd
        .solve(&y, 1e-12)
        .map_err(|e| Error::FitIllConditioned(e.to_string()))?;
    let resid = (&a * &coef - &y).amax();
    let mut k = 1;
    let exponent_t = if vt {
        k += 1;
        Some(coef[k - 1])
    } else {
        None
    };
    let exponent_x = if vx { Some(coef[k]) } else { None };
    Ok(DecayFit {
        region,
        exponent_t,
        exponent_x,
        predicted_t: None,
        predicted_x: None,
        constant: coef[0].exp(),
        residual: resid,
        samples: samples.to_vec(),
    })
}

/// Decay order required of the rapid high-energy branch.
pub const RAPID_ORDER: usize = 2;

/// Dyadic grid `2^lo, ..., 2^hi`.
pub fn dyadic(lo: i32, hi: i32) -> Vec<f64> {
    (lo..=hi).map(|k| 2f64.powi(k)).collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LemmaCheck {
    pub m: i64,
    pub b: f64,
    pub low_energy: bool,
    pub fits: Vec<DecayFit>,
}

/// Fit decay exponents of the low-energy (`λ^b χ`) or high-energy
/// (`λ^b (1-χ)`, phase `e^{-i(tλ^{2m} + xλ)}`) oscillatory integrals.
///
/// Low energy: `t_grid` is swept at `x = 0`; `x_grid` at `t = max(t_grid)`,
/// keeping the samples with `t^{1/2m} < x <= 2mt (3/4)^{2m-1}` (stationary
/// point in the region where `χ = 1`).
/// High energy: the stationary branch uses `x_grid` at `t = min(t_grid)` and
/// `t_grid` at `x = -max(x_grid)` restricted to `λ* >= 2`; the rapid branch
/// sweeps `t = 2^{k/2} >= 4` at `x = 0` down to the rounding floor and is
/// expected to fall faster than `t^{-K}` with `K = RAPID_ORDER`.
pub fn verify_lemma_bounds(
    m: i64,
    b: f64,
    t_grid: &[f64],
    x_grid: &[f64],
    low_energy: bool,
) -> Result<LemmaCheck> {
    let two_m = 2.0 * m as f64;
    let mut fits = Vec::new();
    if low_energy {
        let amp = SymbolAmplitude::low_power(b, 1.0, 2.0);
        let method = OscMethod::PanelFilon;
        let inside: Vec<(f64, f64, f64)> = t_grid
            .iter()
            .map(|&t| Ok((t, 0.0, eval_osc(t, 0.0, &amp, m, method)?.value.norm())))
            .collect::<Result<_>>()?;
        let mut fit = fit_power_law(Region::Inside, &inside)?;
        fit.predicted_t = Some(-(1.0 + b) / two_m);
        fits.push(fit);
        let t = t_grid.iter().cloned().fold(0.0, f64::max);
        let outside: Vec<(f64, f64, f64)> = x_grid
            .iter()
            .filter(|&&x| x > t.powf(1.0 / two_m) && x <= two_m * t * 0.75f64.powf(two_m - 1.0))
            .map(|&x| Ok((t, x, eval_osc(t, x, &amp, m, method)?.value.norm())))
            .collect::<Result<_>>()?;
        let mut fit = fit_power_law(Region::Outside, &outside)?;
        fit.predicted_x = Some(-mu(b, m));
        fits.push(fit);
    } else {
        let amp = SymbolAmplitude::high_power(b, 0.5, 1.0);
        let method = OscMethod::RotatedTail;
        // phase e^{-i(tλ^{2m} + xλ)}: pass -x
        let value = |t: f64, x: f64| -> Result<f64> { Ok(eval_osc(t, -x, &amp, m, method)?.value.norm()) };
        let star = |t: f64, x: f64| (x.abs() / (two_m * t)).powf(1.0 / (two_m - 1.0));
        let t0 = t_grid.iter().cloned().fold(f64::INFINITY, f64::min);
        let x0 = -x_grid.iter().cloned().fold(0.0, f64::max);
        let mut stat = Vec::new();
        for &x in x_grid {
            if star(t0, x) >= 2.0 {
                stat.push((t0, -x, value(t0, -x)?));
            }
        }
        for &t in t_grid {
            if star(t, x0) >= 2.0 && t != t0 {
                stat.push((t, x0, value(t, x0)?));
            }
        }
        let mut fit = fit_power_law(Region::Stationary, &stat)?;
        fit.predicted_t = Some(-0.5 + mu(b, m));
        fit.predicted_x = Some(-mu(b, m));
        fits.push(fit);
        let mut rapid = Vec::new();
        for k in 4..=40 {
            let t = 2f64.powf(k as f64 / 2.0);
            let v = value(t, 0.0)?;
            if v < 1e-11 {
                break;
            }
            rapid.push((t, 0.0, v));
        }
        let mut fit = fit_power_law(Region::Rapid, &rapid)?;
        fit.predicted_t = Some(-(RAPID_ORDER as f64));
        fits.push(fit);
    }
    Ok(LemmaCheck {
        m,
        b,
        low_energy,
        fits,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gaussian() -> SymbolAmplitude {
        SymbolAmplitude::entire(Arc::new(|z: C64| (-z * z).exp()), 0.0)
    }

    #[test]
    fn zero_amplitude() {
        let v = eval_osc(1.0, 0.3, &SymbolAmplitude::zero(), 2, OscMethod::PanelFilon).unwrap();
        assert_eq!(v.value, C64::new(0.0, 0.0));
    }

    #[test]
    fn gaussian_fresnel() {
        for t in [0.5, 3.0, -7.0] {
            let exact = 0.5 * (PI / C64::new(1.0, t)).sqrt();
            for method in [OscMethod::PanelFilon, OscMethod::RotatedTail, OscMethod::BruteForce] {
                let v = eval_osc(t, 0.0, &gaussian(), 1, method).unwrap();
                assert!((v.value - exact).norm() < 1e-8, "{method:?} {t}: {} vs {exact}", v.value);
            }
        }
    }

    #[test]
    fn quartic_integral() {
        let one = SymbolAmplitude::entire(Arc::new(|_| C64::new(1.0, 0.0)), 0.0);
        let v = eval_osc(1.0, 0.0, &one, 2, OscMethod::RotatedTail).unwrap();
        let exact = C64::from_polar(statrs::function::gamma::gamma(1.25), -PI / 8.0);
        assert!((v.value - exact).norm() < 1e-10);
    }

    #[test]
    fn mu_values() {
        assert_eq!(mu(1.0, 2), 0.0);
        assert!((mu(-0.5, 2) - 0.5).abs() < 1e-15);
        for (m, n) in [(2i64, 1i64), (2, 3), (3, 5)] {
            let b = (n as f64 - 1.0) / 2.0;
            assert!((b + mu(b, m) - (n * (m - 1)) as f64 / (2 * m - 1) as f64).abs() < 1e-14);
        }
    }

    #[test]
    fn zero_time_rejected() {
        assert_eq!(
            eval_osc(0.0, 1.0, &gaussian(), 1, OscMethod::PanelFilon).unwrap_err(),
            Error::ZeroTime
        );
    }

    #[test]
    fn conjugation_symmetry() {
        let a = SymbolAmplitude::low_power(0.5, 1.0, 2.0).scaled(C64::new(1.0, 0.3));
        let v = eval_osc(3.0, 2.0, &a, 2, OscMethod::PanelFilon).unwrap().value;
        let w = eval_osc(-3.0, -2.0, &a.conj(), 2, OscMethod::PanelFilon).unwrap().value;
        assert!((v - w.conj()).norm() < 1e-10);
    }
}
