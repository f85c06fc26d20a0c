//! Grid discretizations of `L^2`: a uniform line grid for `n = 1` and an
//! s-wave radial grid for `(m, n) = (1, 3)`.
//!
//! Operators are stored in sqrt-weight (unitary) coordinates, so that the
//! grid inner product is the Euclidean one and self-adjoint operators are
//! symmetric matrices.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::quad::kink_stencil;

type C64 = Complex64;

/// Half width of the trapezoid correction stencil at the diagonal.
pub const STENCIL_HALF_WIDTH: usize = 6;

/// Highest odd power carried by the kink corrections.
pub const KINK_MAX_POWER: i64 = 19;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum GridKind {
    Line1D { half_width: f64, points: usize },
    RadialS { radius: f64, points: usize },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridSpace {
    pub kind: GridKind,
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GridSpace {
    /// `N` equispaced nodes on `[-L, L]`.
    pub fn line(half_width: f64, points: usize) -> Result<Self> {
        if !(half_width > 0.0) || points < 3 {
            return Err(Error::InvalidInput(format!(
                "line grid needs L > 0 and N >= 3, got L = {half_width}, N = {points}"
            )));
        }
        let h = 2.0 * half_width / (points - 1) as f64;
        let nodes = (0..points).map(|i| -half_width + i as f64 * h).collect();
        Ok(GridSpace {
            kind: GridKind::Line1D { half_width, points },
            nodes,
            weights: vec![h; points],
        })
    }

    /// Nodes `r_j = j h`, `j = 1..=N`, `h = R/N`, with weights `4π r^2 h`.
    pub fn radial(radius: f64, points: usize) -> Result<Self> {
        if !(radius > 0.0) || points < 3 {
            return Err(Error::InvalidInput(format!(
                "radial grid needs R > 0 and N >= 3, got R = {radius}, N = {points}"
            )));
        }
        let h = radius / points as f64;
        let nodes: Vec<f64> = (1..=points).map(|j| j as f64 * h).collect();
        let weights = nodes.iter().map(|r| 4.0 * PI * r * r * h).collect();
        Ok(GridSpace {
            kind: GridKind::RadialS { radius, points },
            nodes,
            weights,
        })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn step(&self) -> f64 {
        match self.kind {
            GridKind::Line1D { half_width, points } => 2.0 * half_width / (points - 1) as f64,
            GridKind::RadialS { radius, points } => radius / points as f64,
        }
    }

    pub fn extent(&self) -> f64 {
        match self.kind {
            GridKind::Line1D { half_width, .. } => half_width,
            GridKind::RadialS { radius, .. } => radius,
        }
    }

    pub fn is_line(&self) -> bool {
        matches!(self.kind, GridKind::Line1D { .. })
    }

    /// Checks that this backend discretizes `(m, n)`.
    pub fn supports(&self, params: &ModelParams) -> Result<()> {
        match self.kind {
            GridKind::Line1D { .. } if params.n == 1 => Ok(()),
            GridKind::RadialS { .. } if params.m == 1 && params.n == 3 => Ok(()),
            _ => Err(Error::BackendUnsupported(format!(
                "{} grid cannot represent (m, n) = ({}, {})",
                if self.is_line() { "line" } else { "radial" },
                params.m,
                params.n
            ))),
        }
    }

    pub fn sqrt_weights(&self) -> Vec<f64> {
        self.weights.iter().map(|w| w.sqrt()).collect()
    }

    /// Grid samples to unitary coordinates.
    pub fn to_unitary(&self, f: &[f64]) -> DVector<f64> {
        DVector::from_iterator(self.len(), f.iter().zip(&self.weights).map(|(v, w)| v * w.sqrt()))
    }

    pub fn from_unitary(&self, u: &DVector<f64>) -> Vec<f64> {
        u.iter().zip(&self.weights).map(|(v, w)| v / w.sqrt()).collect()
    }

    pub fn inner(&self, f: &[f64], g: &[f64]) -> f64 {
        f.iter().zip(g).zip(&self.weights).map(|((a, b), w)| a * b * w).sum()
    }

    /// Unitary coordinates of the moment vectors `x^α v` for `|α| <= j`.
    ///
    /// On the radial grid only the s-wave moments `r^{2l} v` survive; odd
    /// moments of radial functions vanish identically.
    pub fn moment_vectors(&self, v: &[f64], j: i64) -> Vec<DVector<f64>> {
        if j < 0 {
            return Vec::new();
        }
        let powers: Vec<i32> = match self.kind {
            GridKind::Line1D { .. } => (0..=j as i32).collect(),
            GridKind::RadialS { .. } => (0..=j as i32).filter(|a| a % 2 == 0).collect(),
        };
        powers
            .into_iter()
            .map(|a| {
                let f: Vec<f64> = self.nodes.iter().zip(v).map(|(x, vi)| x.powi(a) * vi).collect();
                self.to_unitary(&f)
            })
            .collect()
    }

    /// Line grid: unitary matrix of `f ↦ ∫ k(|x-y|) f(y) dy`.
    ///
    /// `k` is evaluated at the offsets `|i-j| h`; `odd_coefficients` are the
    /// odd Taylor coefficients `(p, κ_p)` of `k` at 0, whose kinks are
    /// corrected at the diagonal.
    pub fn line_kernel<F: Fn(f64) -> C64>(&self, k: F, odd_coefficients: &[(usize, C64)]) -> Result<DMatrix<C64>> {
        if !self.is_line() {
            return Err(Error::BackendUnsupported("translation kernel on the radial grid".into()));
        }
        let n = self.len();
        let h = self.step();
        let mut row: Vec<C64> = (0..n).map(|d| h * k(d as f64 * h)).collect();
        let jumps: Vec<(usize, C64)> = odd_coefficients.iter().map(|&(p, c)| (p, -2.0 * c)).collect();
        if !jumps.is_empty() {
            let st = kink_stencil(h, &jumps, STENCIL_HALF_WIDTH);
            for s in 0..=STENCIL_HALF_WIDTH.min(n - 1) {
                row[s] += st[STENCIL_HALF_WIDTH + s];
            }
        }
        Ok(DMatrix::from_fn(n, n, |i, j| row[i.abs_diff(j)]))
    }

    /// Unitary matrix of `G_j f(x) = ∫ |x-y|^j f(y) dy`.
    pub fn g_matrix(&self, j: i64) -> Result<DMatrix<f64>> {
        let dim = match self.kind {
            GridKind::Line1D { .. } => 1,
            GridKind::RadialS { .. } => 3,
        };
        if j <= -dim {
            return Err(Error::UnsupportedIndex(j));
        }
        match self.kind {
            GridKind::Line1D { .. } => {
                let odd = if j % 2 != 0 { vec![(j as usize, C64::new(1.0, 0.0))] } else { vec![] };
                let k = self.line_kernel(|r| C64::new(r.powi(j as i32), 0.0), &odd)?;
                Ok(k.map(|c| c.re))
            }
            GridKind::RadialS { .. } => self.radial_g(j),
        }
    }

    fn radial_g(&self, j: i64) -> Result<DMatrix<f64>> {
        let q = j + 2;
        if q == 0 {
            return Err(Error::BackendUnsupported("logarithmic s-wave kernel for j = -2".into()));
        }
        let n = self.len();
        let h = self.step();
        let r = &self.nodes;
        let sw = self.sqrt_weights();
        let qf = q as f64;
        // spherical average of |x-y|^j over |y| = r'
        let avg = |a: f64, b: f64| -> f64 {
            if j == -1 {
                1.0 / a.max(b)
            } else {
                ((a + b).powi(q as i32) - (a - b).abs().powi(q as i32)) / (2.0 * a * b * qf)
            }
        };
        let mut g = DMatrix::from_fn(n, n, |i, k| sw[i] * avg(r[i], r[k]) * sw[k]);
        if q % 2 != 0 {
            // the branch difference is (4π/(r q)) s^q φ(r+s) with φ(r') = r' f(r'),
            // and φ extends oddly through the origin
            let st = kink_stencil(h, &[(q as usize, C64::new(1.0, 0.0))], STENCIL_HALF_WIDTH);
            let c0 = 4.0 * PI / qf;
            let s_max = STENCIL_HALF_WIDTH as i64;
            for i in 0..n as i64 {
                // node index is i + 1
                for s in -s_max..=s_max {
                    let w = c0 * st[(s + s_max) as usize].re;
                    let tgt = i + 1 + s;
                    if tgt == 0 {
                        continue;
                    }
                    let (col, sign) = if tgt < 0 { (-tgt - 1, -1.0) } else { (tgt - 1, 1.0) };
                    if col >= n as i64 {
                        continue;
                    }
                    g[(i as usize, col as usize)] += sign * w;
                }
            }
        }
        Ok(g)
    }
}

/// `diag(v) K diag(v)`.
pub fn sandwich<T>(v: &[f64], k: &DMatrix<T>) -> DMatrix<T>
where
    T: nalgebra::Scalar + Copy + std::ops::Mul<f64, Output = T>,
{
    DMatrix::from_fn(k.nrows(), k.ncols(), |i, j| k[(i, j)] * (v[i] * v[j]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_g3_quadrature_is_high_order() {
        let sp = GridSpace::line(12.0, 241).unwrap();
        let g = sp.g_matrix(3).unwrap();
        // ∫ |x-y|^3 e^{-y^2} dy at x = 0 is 1
        let f: Vec<f64> = sp.nodes.iter().map(|y| (-y * y).exp()).collect();
        let u = sp.to_unitary(&f);
        let out = sp.from_unitary(&(&g * &u));
        let i0 = sp.len() / 2;
        assert!((out[i0] - 1.0).abs() < 1e-11, "{}", out[i0]);
        // at x = 1: ∫ |1-y|^3 e^{-y^2} dy, by adaptive quadrature on each side
        let exact = crate::quad::adaptive(&|y: f64| (1.0 - y).abs().powi(3) * (-y * y).exp(), -12.0, 1.0, 1e-14)
            + crate::quad::adaptive(&|y: f64| (1.0 - y).abs().powi(3) * (-y * y).exp(), 1.0, 12.0, 1e-14);
        let i1 = i0 + 10;
        assert!((sp.nodes[i1] - 1.0).abs() < 1e-12);
        assert!((out[i1] - exact).abs() < 1e-11, "{} vs {exact}", out[i1]);
    }

    #[test]
    fn radial_newton_kernel() {
        let sp = GridSpace::radial(10.0, 200).unwrap();
        let g = sp.g_matrix(-1).unwrap();
        assert!((&g - g.transpose()).norm() < 1e-12);
        let (i, k) = (20, 90);
        let expect = sp.weights[i].sqrt() * sp.weights[k].sqrt() / sp.nodes[i].max(sp.nodes[k]);
        assert!((g[(i, k)] - expect).abs() < 1e-14);
        // ∫ e^{-|y|^2}/|x-y| dy = π^{3/2} erf(r)/r
        let f: Vec<f64> = sp.nodes.iter().map(|r| (-r * r).exp()).collect();
        let out = sp.from_unitary(&(&g * sp.to_unitary(&f)));
        for i in [0usize, 3, 40, 100] {
            let r = sp.nodes[i];
            let exact = PI.powf(1.5) * statrs::function::erf::erf(r) / r;
            assert!((out[i] - exact).abs() < 1e-10, "r = {r}: {} vs {exact}", out[i]);
        }
    }

    #[test]
    fn g0_is_rank_one() {
        let sp = GridSpace::line(5.0, 51).unwrap();
        let g = sp.g_matrix(0).unwrap();
        let sv = g.singular_values();
        assert!(sv.iter().filter(|&&s| s > 1e-10 * sv.max()).count() == 1);
        assert_eq!(sp.g_matrix(-1), Err(Error::UnsupportedIndex(-1)));
    }
}
