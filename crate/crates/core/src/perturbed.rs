//! The kernel of `e^{-itH} P_ac(H)`, `H = (-Δ)^m + V`, on the line, via Stone's formula.

use nalgebra::DMatrix;
use num_complex::Complex64;

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cutoff::Cutoff;
use crate::error::{Error, Result};
use crate::free_propagator::{band_kernel, envelope_ratio, free_kernel, low_cutoff, Band};
use crate::quad::{gl_panel, loglog_fit};
use crate::free_resolvent::{Rotation, SignBranch};
use crate::linalg::{cmul, complex_real, max_abs};
use crate::m_inverse::{build_b, ThresholdExpansion};
use crate::model::{decay_exponent, envelope, make_params, ModelParams, Rational};
use crate::projections::{build_projection_family, classify_resonance, ProjectionFamily};
use crate::potential::{PotentialSpec, SampledPotential};
use crate::space::{GridSpace, KINK_MAX_POWER};

type C64 = Complex64;

/// Grid covering the support of `v` together with the spatial sample points.
#[derive(Debug, Clone)]
pub struct ScatteringGrid {
    pub params: ModelParams,
    pub space: GridSpace,
    pub pot: SampledPotential,
    pub points: Vec<f64>,
    pub point_index: Vec<usize>,
}

impl ScatteringGrid {
    /// The sample points must be grid nodes.
    pub fn new(params: &ModelParams, spec: &PotentialSpec, half_width: f64, points: usize, samples: &[f64]) -> Result<Self> {
        if params.n != 1 {
            return Err(Error::BackendUnsupported("the perturbed propagator runs on the line".into()));
        }
        let space = GridSpace::line(half_width, points)?;
        let pot = SampledPotential::new(&space, params, spec)?;
        let h = space.step();
        let mut point_index = Vec::new();
        for &x in samples {
            let i = ((x + half_width) / h).round();
            if i < 0.0 || i as usize >= points || (space.nodes[i as usize] - x).abs() > 1e-9 * h.max(1.0) {
                return Err(Error::InvalidInput(format!("sample point {x} is not a node of the grid (h = {h})")));
            }
            point_index.push(i as usize);
        }
        Ok(ScatteringGrid {
            params: *params,
            space,
            pot,
            points: samples.to_vec(),
            point_index,
        })
    }

    pub fn step(&self) -> f64 {
        self.space.step()
    }

    /// Largest `λ` the grid resolves, `λ h <= 1`.
    pub fn lambda_max(&self) -> f64 {
        1.0 / self.step()
    }

    fn check(&self, lambda: f64) -> Result<()> {
        if !(lambda > 0.0) {
            return Err(Error::InvalidInput(format!("lambda = {lambda} must be positive")));
        }
        if lambda * self.step() > 1.0 + 1e-12 {
            return Err(Error::GridTooCoarse(format!("lambda h = {} exceeds 1", lambda * self.step())));
        }
        Ok(())
    }

    /// Unitary matrix of `R_0^+(λ^{2m})`.
    pub fn free_resolvent(&self, lambda: f64) -> Result<DMatrix<C64>> {
        self.check(lambda)?;
        let rot = Rotation::boundary(&self.params, SignBranch::Plus, C64::new(lambda, 0.0));
        let odd = rot.odd_coefficients(1, KINK_MAX_POWER);
        self.space.line_kernel(|r| rot.eval(C64::new(r, 0.0)), &odd)
    }

    fn columns(&self, a: &DMatrix<C64>) -> DMatrix<C64> {
        DMatrix::from_fn(a.nrows(), self.point_index.len(), |r, c| a[(r, self.point_index[c])])
    }

    fn rows(&self, a: &DMatrix<C64>) -> DMatrix<C64> {
        DMatrix::from_fn(self.point_index.len(), a.ncols(), |r, c| a[(self.point_index[r], c)])
    }

    fn scale_rows(&self, a: &DMatrix<C64>, w: &[f64]) -> DMatrix<C64> {
        DMatrix::from_fn(a.nrows(), a.ncols(), |r, c| a[(r, c)] * w[r])
    }

    /// `(R_0^+ v (M^+)^{-1} v R_0^+)(x_a, x_b)` over the sample points, by a dense solve.
    pub fn correction_symmetric(&self, lambda: f64) -> Result<DMatrix<C64>> {
        let k = self.free_resolvent(lambda)?;
        let v = &self.pot.v;
        let mut m = crate::space::sandwich(v, &k);
        for i in 0..m.nrows() {
            m[(i, i)] += self.pot.u[i];
        }
        let rhs = self.scale_rows(&self.columns(&k), v);
        let x = m.lu().solve(&rhs).ok_or(Error::ResolventSolveFailed(lambda))?;
        Ok(cmul(&self.rows(&k), &self.scale_rows(&x, v)) / C64::new(self.step(), 0.0))
    }

    /// Born terms `R_0 V R_0`, `R_0 V R_0 V R_0` and the remainder `R_0 V R_0 V R V R_0`
    /// over the sample points, with `R = (I + R_0 V)^{-1} R_0` by a dense solve.
    pub fn correction_born(&self, lambda: f64) -> Result<[DMatrix<C64>; 3]> {
        let k = self.free_resolvent(lambda)?;
        let vals = &self.pot.values;
        let h = C64::new(self.step(), 0.0);
        let kv = self.scale_rows(&k.transpose(), vals).transpose();
        let cols = self.columns(&k);
        let vk = self.scale_rows(&cols, vals);
        let b1 = cmul(&self.rows(&k), &vk) / h;
        let kvk = cmul(&kv, &cols);
        let b2 = cmul(&self.rows(&kv), &kvk) / h;
        let n = k.nrows();
        let a = DMatrix::<C64>::identity(n, n) + &kv;
        let r = a.lu().solve(&k).ok_or(Error::ResolventSolveFailed(lambda))?;
        let left = cmul(&self.rows(&kv), &kv);
        let rem = cmul(&cmul(&left, &r), &vk) / h;
        Ok([b1, b2, rem])
    }
}

/// Projection family and scaled Birman-Schwinger matrix for the grid, used where
/// `M^+(λ)` itself is too ill-conditioned to solve directly.
pub struct ThresholdSolver {
    pub k: i64,
    family: ProjectionFamily,
    expansion: ThresholdExpansion,
}

impl ThresholdSolver {
    pub fn new(grid: &ScatteringGrid, k: i64) -> Result<Self> {
        let family = build_projection_family(&grid.space, &grid.params, &grid.pot, k)?;
        let expansion = ThresholdExpansion::new(&grid.space, &grid.params, &grid.pot, &family, SignBranch::Plus)?;
        Ok(ThresholdSolver { k, family, expansion })
    }
}

impl ScatteringGrid {
    /// The scaled solve below `switch` when a solver is given, the direct one otherwise.
    pub fn correction(&self, solver: Option<&ThresholdSolver>, switch: f64, lambda: f64) -> Result<DMatrix<C64>> {
        match solver {
            Some(s) if lambda <= switch => self.correction_scaled(s, lambda),
            _ => self.correction_symmetric(lambda),
        }
    }

    /// As [`ScatteringGrid::correction_symmetric`], with
    /// `M^{-1} = λ^{2m-n} B_λ A(λ)^{-1} B_λ^*` and `A(λ)` the scaled matrix.
    pub fn correction_scaled(&self, solver: &ThresholdSolver, lambda: f64) -> Result<DMatrix<C64>> {
        let k = self.free_resolvent(lambda)?;
        let a = solver.expansion.scaled_matrix(lambda)?.data;
        let (b, _) = build_b(&solver.family, lambda)?;
        let vb = DMatrix::from_fn(b.nrows(), b.ncols(), |r, c| b[(r, c)] * self.pot.v[r]);
        let left = complex_real(&self.rows(&k), &vb);
        let x = a.lu().solve(&left.transpose()).ok_or(Error::ResolventSolveFailed(lambda))?;
        let pre = lambda.powi(self.params.zero_energy_power() as i32) / self.step();
        Ok(cmul(&left, &x) * C64::new(pre, 0.0))
    }
}

/// `Im` applied entrywise.
pub fn imag_part(a: &DMatrix<C64>) -> DMatrix<f64> {
    a.map(|z| z.im)
}

/// Bloch-Floquet eigendecomposition of `(-Δ)^m + V_per`, where `V_per` repeats `V`
/// with period `2L`, on `modes` plane waves per fiber and `fibers` quasimomenta.
///
/// Averaging the fiber kernels is the kernel on a periodic box of length `2L fibers`.
#[derive(Debug, Clone)]
pub struct BlochOracle {
    pub half_width: f64,
    pub modes: usize,
    pub fibers: usize,
    two_m: i32,
    /// `(energies, eigenvectors in the plane-wave basis)` per fiber.
    spectra: Vec<(Vec<f64>, DMatrix<C64>, Vec<bool>)>,
    pub dropped_negative: usize,
    pub dropped_localized: usize,
}

impl BlochOracle {
    pub fn new(params: &ModelParams, spec: &PotentialSpec, half_width: f64, modes: usize, fibers: usize) -> Result<Self> {
        Self::with_localization(params, spec, half_width, modes, fibers, 0.0)
    }

    /// As [`BlochOracle::new`], also dropping modes with energy in `[0, localization_energy]`
    /// that keep more than half their mass in `|x| < L/8`.
    pub fn with_localization(
        params: &ModelParams,
        spec: &PotentialSpec,
        half_width: f64,
        modes: usize,
        fibers: usize,
        localization_energy: f64,
    ) -> Result<Self> {
        if params.n != 1 {
            return Err(Error::BackendUnsupported("the Bloch oracle runs on the line".into()));
        }
        if modes % 2 != 0 || modes < 8 || fibers == 0 {
            return Err(Error::InvalidInput("the Bloch oracle needs an even number of modes >= 8 and at least one fiber".into()));
        }
        spec.validate(params)?;
        let n = modes;
        let two_m = 2 * params.m as i32;
        // Fourier coefficients of V on the cell by the periodic trapezoid rule
        let fine = 8 * n;
        let hx = 2.0 * half_width / fine as f64;
        let vals: Vec<f64> = (0..fine).map(|j| spec.value(params, -half_width + j as f64 * hx)).collect();
        let vhat = |d: i64| -> C64 {
            let mut s = C64::new(0.0, 0.0);
            for (j, v) in vals.iter().enumerate() {
                let x = -half_width + j as f64 * hx;
                s += C64::from_polar(*v, -std::f64::consts::PI * d as f64 * x / half_width);
            }
            s / fine as f64
        };
        let coeffs: Vec<C64> = (0..2 * n as i64).map(|d| vhat(d - n as i64)).collect();
        let wave = |j: usize| std::f64::consts::PI * (j as f64 - (n / 2) as f64) / half_width;
        let mut spectra = Vec::with_capacity(fibers);
        let (mut neg, mut loc) = (0, 0);
        for q in 0..fibers {
            let shift = std::f64::consts::PI * (2.0 * q as f64 + 1.0) / (fibers as f64 * 2.0 * half_width) - std::f64::consts::PI / (2.0 * half_width);
            let mut h = DMatrix::from_fn(n, n, |j, l| coeffs[j + n - l]);
            for j in 0..n {
                h[(j, j)] += C64::new((wave(j) + shift).powi(two_m), 0.0);
            }
            let real = coeffs.iter().all(|c| c.im.abs() <= 1e-15 * c.norm().max(1e-300));
            let (energies, vectors) = if real {
                let eig = nalgebra::SymmetricEigen::new(h.map(|z| z.re));
                (eig.eigenvalues.iter().copied().collect::<Vec<f64>>(), eig.eigenvectors.map(|x| C64::new(x, 0.0)))
            } else {
                let eig = nalgebra::SymmetricEigen::new(h);
                (eig.eigenvalues.iter().copied().collect::<Vec<f64>>(), eig.eigenvectors)
            };
            let emax = energies.iter().fold(0.0f64, |a, e| a.max(e.abs()));
            let floor = -64.0 * f64::EPSILON * emax;
            let mut keep = vec![true; n];
            for (k, &e) in energies.iter().enumerate() {
                if e < floor {
                    keep[k] = false;
                    neg += 1;
                }
            }
            for (k, &e) in energies.iter().enumerate() {
                if keep[k] && e <= localization_energy && inner_mass(&vectors, k, half_width, half_width / 8.0) > 0.5 {
                    keep[k] = false;
                    loc += 1;
                }
            }
            spectra.push((energies, vectors, keep));
        }
        Ok(BlochOracle {
            half_width,
            modes,
            fibers,
            two_m,
            spectra,
            dropped_negative: neg,
            dropped_localized: loc,
        })
    }

    pub fn energies(&self, fiber: usize) -> &[f64] {
        &self.spectra[fiber].0
    }

    fn shift(&self, q: usize) -> f64 {
        std::f64::consts::PI * (2.0 * q as f64 + 1.0) / (self.fibers as f64 * 2.0 * self.half_width) - std::f64::consts::PI / (2.0 * self.half_width)
    }

    fn waves_at(&self, q: usize, x: f64) -> Vec<C64> {
        let n = self.modes;
        let norm = 1.0 / (2.0 * self.half_width).sqrt();
        (0..n)
            .map(|j| {
                let k = std::f64::consts::PI * (j as f64 - (n / 2) as f64) / self.half_width + self.shift(q);
                C64::from_polar(norm, k * x)
            })
            .collect()
    }

    /// Mean over fibers of `Σ_n e^{-itE_n} ψ_n(x) conj ψ_n(y)` for each time.
    pub fn kernel(&self, times: &[f64], x: f64, y: f64) -> Vec<C64> {
        let mut out = vec![C64::new(0.0, 0.0); times.len()];
        for (q, (energies, vecs, keep)) in self.spectra.iter().enumerate() {
            let (wx, wy) = (self.waves_at(q, x), self.waves_at(q, y));
            for k in 0..self.modes {
                if !keep[k] {
                    continue;
                }
                let col = vecs.column(k);
                let px: C64 = col.iter().zip(&wx).map(|(c, w)| c * w).sum();
                let py: C64 = col.iter().zip(&wy).map(|(c, w)| c * w).sum();
                let amp = px * py.conj();
                for (o, &t) in out.iter_mut().zip(times) {
                    *o += amp * C64::from_polar(1.0, -t * energies[k]);
                }
            }
        }
        let f = self.fibers as f64;
        out.into_iter().map(|z| z / f).collect()
    }

    /// The same average for `V = 0`, in closed form.
    pub fn free_kernel(&self, times: &[f64], x: f64, y: f64) -> Vec<C64> {
        let n = self.modes;
        let mut out = vec![C64::new(0.0, 0.0); times.len()];
        for q in 0..self.fibers {
            for j in 0..n {
                let k = std::f64::consts::PI * (j as f64 - (n / 2) as f64) / self.half_width + self.shift(q);
                let e = k.powi(self.two_m);
                for (o, &t) in out.iter_mut().zip(times) {
                    *o += C64::from_polar(1.0, k * (x - y) - t * e);
                }
            }
        }
        let f = 2.0 * self.half_width * self.fibers as f64;
        out.into_iter().map(|z| z / f).collect()
    }
}

/// `∫_{|x|<a} |ψ_k|^2` for a plane-wave expansion normalized on the cell.
fn inner_mass(vectors: &DMatrix<C64>, k: usize, half_width: f64, a: f64) -> f64 {
    let n = vectors.nrows();
    let col = vectors.column(k);
    let kernel: Vec<f64> = (0..n)
        .map(|d| {
            if d == 0 {
                2.0 * a
            } else {
                let w = PI * d as f64 / half_width;
                2.0 * (w * a).sin() / w
            }
        })
        .collect();
    let mut s = C64::new(0.0, 0.0);
    for j in 0..n {
        for l in 0..n {
            s += col[j] * col[l].conj() * kernel[j.abs_diff(l)];
        }
    }
    s.re / (2.0 * half_width)
}

/// Quadrature and splitting parameters for the spectral integral.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StoneConfig {
    /// Energy scale of the low/high split, as in `free_propagator::low_cutoff`.
    pub lambda0: f64,
    /// Upper end of the λ-integral; `None` takes `1/h`.
    pub lambda_max: Option<f64>,
    pub panel_width: f64,
    pub panel_nodes: usize,
    /// Quadrature nodes allowed per time before `PhaseUnderResolved`.
    pub max_nodes: usize,
    /// Below this `λ` the solve runs in the scaled threshold basis.
    pub threshold_switch: f64,
}

impl Default for StoneConfig {
    fn default() -> Self {
        StoneConfig {
            lambda0: 16.0,
            lambda_max: None,
            panel_width: 0.25,
            panel_nodes: 16,
            max_nodes: 20_000_000,
            threshold_switch: 0.25,
        }
    }
}

const GL_ORDER: usize = 16;
/// Components stored per λ node: symmetric form, then the three Born pieces.
const PARTS: usize = 4;

#[derive(Debug, Clone)]
struct Panel {
    a: f64,
    b: f64,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    /// `λ^{2m-1} Im` of each part at each node, flattened row-major over the samples.
    values: Vec<Vec<f64>>,
}

impl Panel {
    fn new(a: f64, b: f64, count: usize) -> Self {
        // Chebyshev points of the first kind keep λ = 0 off the node set
        let nodes = (0..count)
            .map(|j| {
                let th = PI * (2 * j + 1) as f64 / (2 * count) as f64;
                0.5 * (a + b) - 0.5 * (b - a) * th.cos()
            })
            .collect();
        let weights = (0..count)
            .map(|j| {
                let th = PI * (2 * j + 1) as f64 / (2 * count) as f64;
                let s = th.sin();
                if j % 2 == 0 {
                    s
                } else {
                    -s
                }
            })
            .collect();
        Panel {
            a,
            b,
            nodes,
            weights,
            values: Vec::new(),
        }
    }

    fn eval_into(&self, x: f64, out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        if let Some(j) = self.nodes.iter().position(|&n| n == x) {
            out.copy_from_slice(&self.values[j]);
            return;
        }
        let mut den = 0.0;
        for (j, (&n, &w)) in self.nodes.iter().zip(&self.weights).enumerate() {
            let c = w / (x - n);
            den += c;
            for (o, v) in out.iter_mut().zip(&self.values[j]) {
                *o += c * v;
            }
        }
        out.iter_mut().for_each(|o| *o /= den);
    }
}

/// Spectral amplitudes `λ^{2m-1} Im G(λ)(x_a, x_b)` on Chebyshev panels over `[0, Λ]`.
#[derive(Debug, Clone)]
pub struct AmplitudeTable {
    pub lambda_max: f64,
    pub cutoff: Cutoff,
    pub samples: usize,
    panels: Vec<Panel>,
    pub born_from: f64,
    /// Worst interpolant error at off-node points, relative to the largest amplitude.
    pub interpolation_error: f64,
    /// `2m - 1`.
    power: i32,
}

/// Raw λ-integrals `∫ e^{-itλ^{2m}} w(λ) a(λ) dλ` over the sample points.
#[derive(Debug, Clone)]
pub struct StoneIntegrals {
    pub t: f64,
    pub low: DMatrix<C64>,
    pub total: DMatrix<C64>,
    pub high: DMatrix<C64>,
    pub born: [DMatrix<C64>; 3],
    pub nodes: usize,
}

impl AmplitudeTable {
    pub fn new(grid: &ScatteringGrid, config: &StoneConfig, solver: Option<&ThresholdSolver>) -> Result<Self> {
        let cap = grid.lambda_max();
        let lmax = config.lambda_max.unwrap_or(cap);
        if lmax > cap * (1.0 + 1e-12) {
            return Err(Error::GridTooCoarse(format!("lambda_max = {lmax} exceeds 1/h = {cap}")));
        }
        if !(config.panel_width > 0.0) || config.panel_nodes < 4 || !(config.lambda0 > 0.0) {
            return Err(Error::InvalidInput("panel width, panel nodes and lambda0 must be positive".into()));
        }
        let cutoff = low_cutoff(&grid.params, config.lambda0);
        let mut breaks = vec![0.0];
        let count = (lmax / config.panel_width).ceil().max(1.0) as usize;
        for i in 1..=count {
            breaks.push((i as f64 * lmax / count as f64).min(lmax));
        }
        let mut panels: Vec<Panel> = breaks.windows(2).map(|w| Panel::new(w[0], w[1], config.panel_nodes)).collect();
        let born_from = cutoff.inner;
        let jobs: Vec<(usize, usize, f64, bool)> = panels
            .iter()
            .enumerate()
            .flat_map(|(i, p)| {
                let born = p.b > born_from;
                p.nodes.iter().enumerate().map(move |(j, &l)| (i, j, l, born)).collect::<Vec<_>>()
            })
            .collect();
        let p = grid.points.len();
        let power = (2 * grid.params.m - 1) as i32;
        let values: Vec<Result<Vec<f64>>> = jobs
            .par_iter()
            .map(|&(_, _, l, born)| {
                let scale = l.powi(power);
                let mut out = vec![0.0; PARTS * p * p];
                if grid.pot.is_zero() {
                    return Ok(out);
                }
                let sym = grid.correction(solver, config.threshold_switch, l)?;
                for (o, z) in out.iter_mut().zip(sym.transpose().iter()) {
                    *o = scale * z.im;
                }
                if born {
                    let parts = grid.correction_born(l)?;
                    for (k, part) in parts.iter().enumerate() {
                        for (o, z) in out[(k + 1) * p * p..].iter_mut().zip(part.transpose().iter()) {
                            *o = scale * z.im;
                        }
                    }
                }
                Ok(out)
            })
            .collect();
        for panel in panels.iter_mut() {
            panel.values = vec![Vec::new(); panel.nodes.len()];
        }
        for (&(i, j, _, _), v) in jobs.iter().zip(values) {
            panels[i].values[j] = v?;
        }
        Ok(AmplitudeTable {
            lambda_max: lmax,
            cutoff,
            samples: p,
            panels,
            born_from,
            interpolation_error: 0.0,
            power,
        })
    }

    /// Interpolated amplitudes at `λ`: the symmetric form followed by the Born pieces.
    pub fn amplitude(&self, lambda: f64) -> Vec<DMatrix<f64>> {
        let p = self.samples;
        let mut buf = vec![0.0; PARTS * p * p];
        let i = self.panel_of(lambda);
        self.panels[i].eval_into(lambda, &mut buf);
        (0..PARTS).map(|k| DMatrix::from_row_slice(p, p, &buf[k * p * p..(k + 1) * p * p])).collect()
    }

    fn panel_of(&self, lambda: f64) -> usize {
        let i = self.panels.partition_point(|p| p.b < lambda);
        i.min(self.panels.len() - 1)
    }

    /// Largest discrepancy between the interpolant and a direct evaluation at
    /// panel midpoints, relative to the largest tabulated amplitude.
    pub fn measure_interpolation(&mut self, grid: &ScatteringGrid, solver: Option<&ThresholdSolver>, switch: f64, stride: usize) -> Result<f64> {
        let power = (2 * grid.params.m - 1) as i32;
        let mut worst = 0.0f64;
        let mut scale = 0.0f64;
        for panel in &self.panels {
            for v in &panel.values {
                scale = scale.max(v[..self.samples * self.samples].iter().fold(0.0, |a, x| a.max(x.abs())));
            }
        }
        for panel in self.panels.iter().step_by(stride.max(1)) {
            let mid = 0.5 * (panel.a + panel.b) + 0.137 * (panel.b - panel.a) / 2.0;
            let direct = grid.correction(solver, switch, mid)?.map(|z| z.im * mid.powi(power));
            let interp = &self.amplitude(mid)[0];
            worst = worst.max((interp - direct).amax());
        }
        self.interpolation_error = worst / scale.max(f64::MIN_POSITIVE);
        Ok(self.interpolation_error)
    }

    /// `∫_0^Λ e^{-itλ^{2m}} a(λ) dλ` with the weights `χ`, `1` and `1 - χ`.
    pub fn integrals(&self, t: f64, max_nodes: usize) -> Result<StoneIntegrals> {
        if t == 0.0 {
            return Err(Error::ZeroTime);
        }
        let p = self.samples;
        let pp = p * p;
        let mut acc = vec![C64::new(0.0, 0.0); (PARTS + 2) * pp];
        let mut buf = vec![0.0; PARTS * pp];
        let c = self.cutoff;
        let transition = c.outer - c.inner;
        let mut nodes = 0usize;
        let tabs = t.abs();
        for panel in &self.panels {
            let mut a = panel.a;
            while a < panel.b {
                let mut w = panel.b - a;
                if a < c.outer && a + w > c.inner {
                    w = w.min(transition / 16.0);
                }
                loop {
                    let d = self.phase_rate(tabs, a + w);
                    if d * w <= 4.0 * PI {
                        break;
                    }
                    w = 4.0 * PI / d;
                }
                let b = (a + w).min(panel.b);
                for (l, gw) in gl_panel(GL_ORDER, a, b) {
                    panel.eval_into(l, &mut buf);
                    let e = C64::from_polar(gw, -tabs * l.powi(self.power + 1));
                    let chi = c.eval(l);
                    for i in 0..pp {
                        let sym = buf[i];
                        acc[i] += e * (chi * sym);
                        acc[pp + i] += e * sym;
                        acc[2 * pp + i] += e * ((1.0 - chi) * sym);
                        if l > self.born_from {
                            for k in 0..3 {
                                acc[(3 + k) * pp + i] += e * ((1.0 - chi) * buf[(1 + k) * pp + i]);
                            }
                        }
                    }
                }
                nodes += GL_ORDER;
                if nodes > max_nodes {
                    return Err(Error::PhaseUnderResolved(format!("more than {max_nodes} quadrature nodes at t = {t}")));
                }
                a = b;
            }
        }
        let m = |k: usize| {
            let d = DMatrix::from_row_slice(p, p, &acc[k * pp..(k + 1) * pp]);
            if t < 0.0 {
                d.map(|z| z.conj())
            } else {
                d
            }
        };
        Ok(StoneIntegrals {
            t,
            low: m(0),
            total: m(1),
            high: m(2),
            born: [m(3), m(4), m(5)],
            nodes,
        })
    }

    /// `d/dλ (t λ^{2m})`.
    fn phase_rate(&self, t: f64, lambda: f64) -> f64 {
        (self.power + 1) as f64 * t * lambda.powi(self.power)
    }
}

/// The kernel over the sample points at one time, split into bands.
#[derive(Debug, Clone)]
pub struct KernelBands {
    pub t: f64,
    pub low: DMatrix<C64>,
    /// `Ω0`, `Ω1`, `Ω2` and `Ωr` of the high band.
    pub omega: [DMatrix<C64>; 4],
    /// Free kernel plus the unsplit spectral integral.
    pub direct: DMatrix<C64>,
    pub nodes: usize,
}

impl KernelBands {
    pub fn high(&self) -> DMatrix<C64> {
        &self.omega[0] + &self.omega[1] + &self.omega[2] + &self.omega[3]
    }

    pub fn total(&self) -> DMatrix<C64> {
        &self.low + self.high()
    }
}

/// Stone's formula on a scattering grid with a tabulated spectral amplitude.
#[derive(Debug, Clone)]
pub struct PerturbedKernel {
    pub grid: ScatteringGrid,
    /// Kind of the zero-energy point of `V`.
    pub k: i64,
    pub config: StoneConfig,
    pub table: AmplitudeTable,
}

impl PerturbedKernel {
    pub fn new(grid: ScatteringGrid, config: StoneConfig) -> Result<Self> {
        if grid.pot.is_zero() {
            let table = AmplitudeTable::new(&grid, &config, None)?;
            return Ok(PerturbedKernel { grid, k: 0, config, table });
        }
        let k = classify_resonance(&grid.space, &grid.params, &grid.pot)?.kind;
        let solver = ThresholdSolver::new(&grid, k)?;
        let mut table = AmplitudeTable::new(&grid, &config, Some(&solver))?;
        table.measure_interpolation(&grid, Some(&solver), config.threshold_switch, 3)?;
        Ok(PerturbedKernel { grid, k, config, table })
    }

    fn free_matrix(&self, t: f64, band: Band) -> Result<DMatrix<C64>> {
        let pts = &self.grid.points;
        let p = pts.len();
        let mut cache: Vec<(f64, C64)> = Vec::new();
        let mut out = DMatrix::zeros(p, p);
        for a in 0..p {
            for b in 0..p {
                let r = (pts[a] - pts[b]).abs();
                let v = match cache.iter().find(|(q, _)| (q - r).abs() < 1e-12) {
                    Some((_, v)) => *v,
                    None => {
                        let v = band_kernel(&self.grid.params, t, r, band, self.config.lambda0)?;
                        cache.push((r, v));
                        v
                    }
                };
                out[(a, b)] = v;
            }
        }
        Ok(out)
    }

    pub fn evaluate(&self, t: f64) -> Result<KernelBands> {
        if t == 0.0 {
            return Err(Error::ZeroTime);
        }
        if t < 0.0 {
            let k = self.evaluate(-t)?;
            let c = |a: &DMatrix<C64>| a.map(|z| z.conj());
            return Ok(KernelBands {
                t,
                low: c(&k.low),
                omega: [c(&k.omega[0]), c(&k.omega[1]), c(&k.omega[2]), c(&k.omega[3])],
                direct: c(&k.direct),
                nodes: k.nodes,
            });
        }
        let f = C64::new(2.0 * self.grid.params.m as f64 / PI, 0.0);
        let ints = self.table.integrals(t, self.config.max_nodes)?;
        let low = self.free_matrix(t, Band::Low)? - &ints.low * f;
        let omega = [
            self.free_matrix(t, Band::High)?,
            -&ints.born[0] * f,
            &ints.born[1] * f,
            -&ints.born[2] * f,
        ];
        let direct = self.free_matrix(t, Band::Full)? - &ints.total * f;
        Ok(KernelBands {
            t,
            low,
            omega,
            direct,
            nodes: ints.nodes,
        })
    }

    fn pair(&self, x: f64, y: f64) -> Result<(usize, usize)> {
        let find = |z: f64| {
            self.grid
                .points
                .iter()
                .position(|&p| (p - z).abs() < 1e-12)
                .ok_or_else(|| Error::InvalidInput(format!("{z} is not a sample point")))
        };
        Ok((find(x)?, find(y)?))
    }

    pub fn low_kernel(&self, t: f64, x: f64, y: f64) -> Result<C64> {
        let (a, b) = self.pair(x, y)?;
        Ok(self.evaluate(t)?.low[(a, b)])
    }

    pub fn high_kernel(&self, t: f64, x: f64, y: f64) -> Result<C64> {
        let (a, b) = self.pair(x, y)?;
        Ok(self.evaluate(t)?.high()[(a, b)])
    }

    /// Bound on the part of the spectral integral beyond `Λ`, from one integration by parts.
    pub fn tail_bound(&self, t: f64) -> f64 {
        let l = self.table.lambda_max;
        let a = self.table.amplitude(l)[0].amax();
        let m = self.grid.params.m as f64;
        (2.0 * m / PI) * a / (2.0 * m * t.abs() * l.powi(self.table.power))
    }
}

/// Size of the Bloch-Floquet oracle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleConfig {
    pub half_width: f64,
    pub modes: usize,
    pub fibers: usize,
    /// Modes up to this energy are tested for localization.
    pub localization_energy: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            half_width: 80.0,
            modes: 256,
            fibers: 32,
            localization_energy: 1.0,
        }
    }
}

type OracleKey = (i64, i64, String, u64, usize, usize, u64);

fn oracle_cache() -> &'static Mutex<HashMap<OracleKey, Arc<BlochOracle>>> {
    static CACHE: OnceLock<Mutex<HashMap<OracleKey, Arc<BlochOracle>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// The oracle for `(V, config)`, built once and shared.
pub fn cached_oracle(params: &ModelParams, spec: &PotentialSpec, config: &OracleConfig) -> Result<Arc<BlochOracle>> {
    let key = (
        params.m,
        params.n,
        format!("{spec:?}"),
        config.half_width.to_bits(),
        config.modes,
        config.fibers,
        config.localization_energy.to_bits(),
    );
    if let Some(o) = oracle_cache().lock().expect("oracle cache").get(&key) {
        return Ok(o.clone());
    }
    let o = Arc::new(BlochOracle::with_localization(
        params,
        spec,
        config.half_width,
        config.modes,
        config.fibers,
        config.localization_energy,
    )?);
    oracle_cache().lock().expect("oracle cache").insert(key, o.clone());
    Ok(o)
}

/// Oracle kernel: the exact free kernel plus the fiber-averaged difference
/// `K_V - K_0`, in which the box images of the free wave cancel.
pub fn eigendecomposition_oracle(params: &ModelParams, oracle: &BlochOracle, times: &[f64], x: f64, y: f64) -> Result<Vec<C64>> {
    let with = oracle.kernel(times, x, y);
    let without = oracle.free_kernel(times, x, y);
    times
        .iter()
        .zip(with.iter().zip(&without))
        .map(|(&t, (a, b))| Ok(free_kernel(params, t, (x - y).abs())? + a - b))
        .collect()
}

/// Inputs of a propagator run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSpec {
    pub m: i64,
    pub n: i64,
    pub potential: PotentialSpec,
    pub grid_half_width: f64,
    pub grid_points: usize,
    pub points: Vec<f64>,
    pub t_grid: Vec<f64>,
    pub stone: StoneConfig,
    pub oracle: Option<OracleConfig>,
}

impl RunSpec {
    pub fn new(m: i64, n: i64, potential: PotentialSpec, t_grid: Vec<f64>) -> Self {
        RunSpec {
            m,
            n,
            potential,
            grid_half_width: 8.0,
            grid_points: 161,
            points: vec![-2.0, 0.0, 2.0],
            t_grid,
            stone: StoneConfig::default(),
            oracle: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSample {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub value: C64,
    pub low: C64,
    pub high: C64,
    pub envelope_ratio: f64,
    pub oracle: Option<C64>,
    pub abs_err: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PropagatorRun {
    pub spec: RunSpec,
    pub k: i64,
    pub samples: Vec<KernelSample>,
    /// `max |low + high - unsplit|`.
    pub additivity_residual: f64,
    /// `max |K(t,x,y) - K(t,y,x)|`.
    pub symmetry_residual: f64,
    pub interpolation_error: f64,
    pub tail_bound: f64,
    pub lambda_max: f64,
    pub oracle_dropped_negative: usize,
    pub oracle_dropped_localized: usize,
}

impl PropagatorRun {
    pub fn max_oracle_error(&self) -> Option<f64> {
        self.samples.iter().map(|s| s.abs_err).try_fold(0.0f64, |a, e| e.map(|e| a.max(e)))
    }
}

pub fn propagate(spec: &RunSpec) -> Result<PropagatorRun> {
    let params = make_params(spec.m, spec.n)?;
    let grid = ScatteringGrid::new(&params, &spec.potential, spec.grid_half_width, spec.grid_points, &spec.points)?;
    let kernel = PerturbedKernel::new(grid, spec.stone)?;
    let k = kernel.k;
    let interpolation_error = kernel.table.interpolation_error;
    let bands: Vec<KernelBands> = spec.t_grid.par_iter().map(|&t| kernel.evaluate(t)).collect::<Result<_>>()?;
    let oracle = match &spec.oracle {
        Some(c) => Some(cached_oracle(&params, &spec.potential, c)?),
        None => None,
    };
    let pts = &spec.points;
    let mut oracle_values = vec![vec![None; pts.len() * pts.len()]; spec.t_grid.len()];
    if let Some(o) = &oracle {
        for a in 0..pts.len() {
            for b in 0..pts.len() {
                let vals = eigendecomposition_oracle(&params, o, &spec.t_grid, pts[a], pts[b])?;
                for (i, v) in vals.into_iter().enumerate() {
                    oracle_values[i][a * pts.len() + b] = Some(v);
                }
            }
        }
    }
    let mut samples = Vec::new();
    let (mut additivity, mut symmetry, mut tail) = (0.0f64, 0.0f64, 0.0f64);
    for (i, kb) in bands.iter().enumerate() {
        let total = kb.total();
        let high = kb.high();
        additivity = additivity.max(max_abs(&(&total - &kb.direct)));
        symmetry = symmetry.max(max_abs(&(&total - total.transpose())));
        tail = tail.max(kernel.tail_bound(kb.t));
        for a in 0..pts.len() {
            for b in 0..pts.len() {
                let value = total[(a, b)];
                let oracle = oracle_values[i][a * pts.len() + b];
                samples.push(KernelSample {
                    t: kb.t,
                    x: pts[a],
                    y: pts[b],
                    value,
                    low: kb.low[(a, b)],
                    high: high[(a, b)],
                    envelope_ratio: envelope_ratio(&params, kb.t, (pts[a] - pts[b]).abs(), value),
                    oracle,
                    abs_err: oracle.map(|o| (o - value).norm()),
                });
            }
        }
    }
    Ok(PropagatorRun {
        spec: spec.clone(),
        k,
        samples,
        additivity_residual: additivity,
        symmetry_residual: symmetry,
        interpolation_error,
        tail_bound: tail,
        lambda_max: kernel.table.lambda_max,
        oracle_dropped_negative: oracle.as_ref().map_or(0, |o| o.dropped_negative),
        oracle_dropped_localized: oracle.as_ref().map_or(0, |o| o.dropped_localized),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RefinementLevel {
    pub grid_points: usize,
    pub step: f64,
    pub oracle: OracleConfig,
    pub max_abs_err: f64,
}

/// Oracle error under simultaneous refinement of the scattering grid and the oracle.
pub fn refinement_study(base: &RunSpec, levels: &[(usize, OracleConfig)]) -> Result<Vec<RefinementLevel>> {
    levels
        .iter()
        .map(|&(points, oracle)| {
            let mut spec = base.clone();
            spec.grid_points = points;
            spec.oracle = Some(oracle);
            let run = propagate(&spec)?;
            Ok(RefinementLevel {
                grid_points: points,
                step: 2.0 * spec.grid_half_width / (points - 1) as f64,
                oracle,
                max_abs_err: run.max_oracle_error().unwrap_or(f64::NAN),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayRow {
    pub t: f64,
    pub sup_abs: f64,
    pub x: f64,
    pub y: f64,
    /// `sup |K| / envelope` at this time.
    pub envelope_sup: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecayFitReport {
    pub fitted_h: f64,
    pub predicted_h: Rational,
    pub k: i64,
    pub residual: f64,
    pub envelope_sup: f64,
    pub rows: Vec<DecayRow>,
}

/// Fit of `log sup_{x,y} |K(t,x,y)|` against `log t`.
pub fn decay_fit(run: &PropagatorRun) -> Result<DecayFitReport> {
    let params = make_params(run.spec.m, run.spec.n)?;
    let mut times: Vec<f64> = run.samples.iter().map(|s| s.t).filter(|t| *t > 0.0).collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    if times.len() < 8 {
        return Err(Error::FitIllConditioned(format!("{} positive times, at least 8 needed", times.len())));
    }
    let mut rows = Vec::new();
    for &t in &times {
        let mut best: Option<&KernelSample> = None;
        let mut env = 0.0f64;
        for s in run.samples.iter().filter(|s| s.t == t) {
            if best.map_or(true, |b| s.value.norm() > b.value.norm()) {
                best = Some(s);
            }
            env = env.max(s.value.norm() / envelope(&params, run.k, t, (s.x - s.y).abs())?);
        }
        let b = best.expect("samples at every time");
        rows.push(DecayRow {
            t,
            sup_abs: b.value.norm(),
            x: b.x,
            y: b.y,
            envelope_sup: env,
        });
    }
    let (slope, _, residual) = loglog_fit(&times, &rows.iter().map(|r| r.sup_abs).collect::<Vec<_>>())?;
    Ok(DecayFitReport {
        fitted_h: -slope,
        predicted_h: decay_exponent(&params, run.k)?,
        k: run.k,
        residual,
        envelope_sup: rows.iter().map(|r| r.envelope_sup).fold(0.0, f64::max),
        rows,
    })
}

/// `2^{i/2}` for `i = 0..=2 log2(t_max)`, the default decay-fit times.
pub fn dyadic_times(t_max: f64) -> Vec<f64> {
    let steps = (2.0 * t_max.log2()).floor().max(0.0) as i32;
    (0..=steps).map(|i| 2f64.powf(i as f64 / 2.0)).collect()
}
