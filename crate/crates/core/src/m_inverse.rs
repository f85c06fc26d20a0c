//! Inversion of `M^±(λ) = U + v R_0^±(λ^{2m}) v` near zero energy through the
//! rescaled block form `λ^{2m-n} B_λ^* M B_λ`, its limit `D^±`, the Gram
//! matrices of the leading blocks and the Feshbach formula.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::free_resolvent::{a_coefficient, expansion_coefficients, remainder, Rotation, SignBranch};
use crate::linalg::{self, cmul, complex_real, real_t_complex};
use crate::model::{index_set, lower_indices, upper_indices, HalfIndex, ModelParams};
use crate::potential::SampledPotential;
use crate::projections::{build_operator_g, build_t0, ProjectionFamily};
use crate::quad::loglog_fit;
use crate::space::{sandwich, GridSpace, KINK_MAX_POWER};

type C64 = Complex64;

const NEUMANN_TOL: f64 = 1e-12;
const NEUMANN_MAX_TERMS: usize = 200;

fn check_lambda(space: &GridSpace, lambda: f64) -> Result<()> {
    if !(lambda > 0.0) {
        return Err(Error::InvalidInput(format!("lambda = {lambda} must be positive")));
    }
    if lambda * space.step() > 1.0 {
        return Err(Error::GridTooCoarse(format!(
            "lambda h = {} exceeds 1",
            lambda * space.step()
        )));
    }
    Ok(())
}

/// Unitary matrix of `v K v` for the translation kernel of `R_0^±(λ^{2m})`.
pub fn resolvent_sandwich(space: &GridSpace, params: &ModelParams, pot: &SampledPotential, sign: SignBranch, lambda: f64) -> Result<DMatrix<C64>> {
    space.supports(params)?;
    if !space.is_line() {
        return Err(Error::BackendUnsupported("M(λ) is assembled on the line grid".into()));
    }
    check_lambda(space, lambda)?;
    let rot = Rotation::boundary(params, sign, C64::new(lambda, 0.0));
    let odd = rot.odd_coefficients(1, KINK_MAX_POWER);
    let k = space.line_kernel(|r| rot.eval(C64::new(r, 0.0)), &odd)?;
    Ok(sandwich(&pot.v, &k))
}

/// `M^±(λ) = U + v R_0^±(λ^{2m}) v`.
pub fn build_m(space: &GridSpace, params: &ModelParams, pot: &SampledPotential, sign: SignBranch, lambda: f64) -> Result<DMatrix<C64>> {
    let mut m = resolvent_sandwich(space, params, pot, sign, lambda)?;
    for i in 0..space.len() {
        m[(i, i)] += pot.u[i];
    }
    Ok(m)
}

/// `v r_θ^±(λ) v` with `θ = 4m - n + 1`.
pub fn remainder_sandwich(space: &GridSpace, params: &ModelParams, pot: &SampledPotential, sign: SignBranch, lambda: f64) -> Result<DMatrix<C64>> {
    check_lambda(space, lambda)?;
    let theta = 4 * params.m - params.n + 1;
    let rot = Rotation::boundary(params, sign, C64::new(lambda, 0.0));
    let odd = rot.odd_coefficients(theta, KINK_MAX_POWER);
    let k = space.line_kernel(|r| remainder(params, sign, theta, lambda, r), &odd)?;
    Ok(sandwich(&pot.v, &k))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BlockLayout {
    pub labels: Vec<HalfIndex>,
    pub offsets: Vec<usize>,
    pub sizes: Vec<usize>,
}

impl BlockLayout {
    pub fn total(&self) -> usize {
        self.sizes.iter().sum()
    }

    pub fn position(&self, j: HalfIndex) -> Option<usize> {
        self.labels.iter().position(|&l| l == j)
    }
}

#[derive(Debug, Clone)]
pub struct BlockMatrix {
    pub layout: BlockLayout,
    pub data: DMatrix<C64>,
}

impl BlockMatrix {
    pub fn block(&self, i: usize, j: usize) -> DMatrix<C64> {
        let l = &self.layout;
        self.data
            .view((l.offsets[i], l.offsets[j]), (l.sizes[i], l.sizes[j]))
            .into_owned()
    }

    pub fn block_norm(&self, i: usize, j: usize) -> f64 {
        linalg::operator_norm(&self.block(i, j))
    }
}

/// `(B_λ, B_λ^*)` as matrices: columns `λ^{-j} W_j` for orthonormal bases `W_j` of `Q_j L^2`.
pub fn build_b(family: &ProjectionFamily, lambda: f64) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    family.require_complete()?;
    let cols: Vec<DMatrix<f64>> = family
        .q_bases
        .iter()
        .map(|(j, w)| w * lambda.powf(-j.value()))
        .collect();
    let total: usize = cols.iter().map(|c| c.ncols()).sum();
    let mut b = DMatrix::zeros(family.dim, total);
    let mut off = 0;
    for c in cols {
        b.view_mut((0, off), c.shape()).copy_from(&c);
        off += c.ncols();
    }
    let bt = b.transpose();
    Ok((b, bt))
}

/// Precomputed projections of the pieces of `M^±(λ)` onto the `Q_j` bases.
pub struct ThresholdExpansion {
    pub params: ModelParams,
    pub sign: SignBranch,
    pub layout: BlockLayout,
    space: GridSpace,
    pot: SampledPotential,
    wall: DMatrix<f64>,
    p_t0: DMatrix<f64>,
    /// `(l, a_l^±, W^T vG_{2l}v W)`.
    p_even: Vec<(i64, C64, DMatrix<f64>)>,
    b1: f64,
    p_top: DMatrix<f64>,
}

impl ThresholdExpansion {
    pub fn new(space: &GridSpace, params: &ModelParams, pot: &SampledPotential, family: &ProjectionFamily, sign: SignBranch) -> Result<Self> {
        family.require_complete()?;
        if !space.is_line() {
            return Err(Error::BackendUnsupported("threshold expansion runs on the line grid".into()));
        }
        let (wall, _) = build_b(family, 1.0)?;
        let layout = BlockLayout {
            labels: family.q_bases.keys().copied().collect(),
            offsets: family
                .q_bases
                .values()
                .scan(0, |acc, w| {
                    let o = *acc;
                    *acc += w.ncols();
                    Some(o)
                })
                .collect(),
            sizes: family.q_bases.values().map(|w| w.ncols()).collect(),
        };
        let theta = 4 * params.m - params.n + 1;
        let coeffs = expansion_coefficients(params, theta)?;
        let t0 = build_t0(space, params, pot)?;
        let p_t0 = wall.transpose() * &t0 * &wall;
        let a = match sign {
            SignBranch::Plus => &coeffs.a_plus,
            SignBranch::Minus => &coeffs.a_minus,
        };
        let mut p_even = Vec::new();
        for (l, al) in a.iter().enumerate() {
            let g = build_operator_g(space, pot, 2 * l as i64)?;
            p_even.push((l as i64, *al, wall.transpose() * g * &wall));
        }
        let g_top = build_operator_g(space, pot, 4 * params.m - params.n)?;
        Ok(ThresholdExpansion {
            params: *params,
            sign,
            layout,
            space: space.clone(),
            pot: pot.clone(),
            p_top: wall.transpose() * g_top * &wall,
            wall,
            p_t0,
            p_even,
            b1: coeffs.b.get(1).copied().unwrap_or(0.0),
        })
    }

    fn assemble<F: Fn(usize, usize) -> bool>(&self, lambda: f64, keep_remainder: Option<&DMatrix<C64>>, include: F) -> DMatrix<C64> {
        let l = &self.layout;
        let total = l.total();
        let mut out = DMatrix::<C64>::zeros(total, total);
        let zp = self.params.zero_energy_power();
        let top2 = 4 * self.params.m - self.params.n;
        for (bi, i) in l.labels.iter().enumerate() {
            for (bj, j) in l.labels.iter().enumerate() {
                if !include(bi, bj) || l.sizes[bi] == 0 || l.sizes[bj] == 0 {
                    continue;
                }
                let sum2 = i.twice + j.twice;
                let pw = |twice_exp: i64| lambda.powf(twice_exp as f64 / 2.0);
                let (ro, co) = (l.offsets[bi], l.offsets[bj]);
                let (rs, cs) = (l.sizes[bi], l.sizes[bj]);
                let mut blk = DMatrix::<C64>::zeros(rs, cs);
                for (lidx, al, p) in &self.p_even {
                    if 4 * lidx >= sum2 {
                        let c = al * pw(4 * lidx - sum2);
                        blk += p.view((ro, co), (rs, cs)).map(|x| c * x);
                    }
                }
                if sum2 <= 2 * zp {
                    let c = pw(2 * zp - sum2);
                    blk += self.p_t0.view((ro, co), (rs, cs)).map(|x| C64::new(c * x, 0.0));
                }
                let c = self.b1 * pw(2 * top2 - sum2);
                blk += self.p_top.view((ro, co), (rs, cs)).map(|x| C64::new(c * x, 0.0));
                if let Some(r) = keep_remainder {
                    let c = pw(2 * zp - sum2);
                    blk += r.view((ro, co), (rs, cs)).map(|x| x * c);
                }
                out.view_mut((ro, co), (rs, cs)).copy_from(&blk);
            }
        }
        out
    }

    /// `λ^{2m-n} B_λ^* M^±(λ) B_λ`, with the blocks that vanish by the
    /// moment and kernel conditions set to zero.
    pub fn scaled_matrix(&self, lambda: f64) -> Result<BlockMatrix> {
        let r = remainder_sandwich(&self.space, &self.params, &self.pot, self.sign, lambda)?;
        let pr = real_t_complex(&self.wall, &complex_real(&r, &self.wall));
        Ok(BlockMatrix {
            layout: self.layout.clone(),
            data: self.assemble(lambda, Some(&pr), |_, _| true),
        })
    }

    /// The limit `D^±` of the scaled matrix as `λ → 0`.
    pub fn leading(&self) -> BlockMatrix {
        let data = self.limit_blocks(|al| al);
        BlockMatrix {
            layout: self.layout.clone(),
            data,
        }
    }

    fn limit_blocks<F: Fn(C64) -> C64>(&self, coeff: F) -> DMatrix<C64> {
        let l = &self.layout;
        let total = l.total();
        let mut out = DMatrix::<C64>::zeros(total, total);
        let zp = self.params.zero_energy_power();
        let top2 = 4 * self.params.m - self.params.n;
        for (bi, i) in l.labels.iter().enumerate() {
            for (bj, j) in l.labels.iter().enumerate() {
                let sum2 = i.twice + j.twice;
                let (ro, co) = (l.offsets[bi], l.offsets[bj]);
                let (rs, cs) = (l.sizes[bi], l.sizes[bj]);
                if rs == 0 || cs == 0 {
                    continue;
                }
                let mut blk = DMatrix::<C64>::zeros(rs, cs);
                for (lidx, al, p) in &self.p_even {
                    if 4 * lidx == sum2 {
                        let c = coeff(*al);
                        blk += p.view((ro, co), (rs, cs)).map(|x| c * x);
                    }
                }
                if sum2 == 2 * zp {
                    blk += self.p_t0.view((ro, co), (rs, cs)).map(|x| C64::new(x, 0.0));
                }
                if sum2 == 2 * top2 {
                    blk += self.p_top.view((ro, co), (rs, cs)).map(|x| C64::new(self.b1 * x, 0.0));
                }
                out.view_mut((ro, co), (rs, cs)).copy_from(&blk);
            }
        }
        out
    }

    /// Diagonal gauge weights `e^{±(iπ/2m)(j+n/2-m)} (-i)^j` and `(-1)^j`.
    fn gauges(&self) -> (Vec<C64>, Vec<C64>) {
        let m = self.params.m as f64;
        let n = self.params.n as f64;
        let s = self.sign.sign();
        let mut u0 = Vec::new();
        let mut u1 = Vec::new();
        for (b, j) in self.layout.labels.iter().enumerate() {
            let jv = j.value();
            let g0 = C64::from_polar(1.0, s * PI / (2.0 * m) * (jv + n / 2.0 - m)) * C64::from_polar(1.0, -PI * jv / 2.0);
            let g1 = C64::from_polar(1.0, PI * jv);
            for _ in 0..self.layout.sizes[b] {
                u0.push(g0);
                u1.push(g1);
            }
        }
        (u0, u1)
    }

    /// `D`, built from the real coefficients `a_l` of `R_0(-λ^{2m})`, and the
    /// residual `||U_0 D^± U_0 U_1 - D||`.
    pub fn gauge_reduced(&self) -> Result<(BlockMatrix, f64)> {
        let theta = 4 * self.params.m - self.params.n + 1;
        let coeffs = expansion_coefficients(&self.params, theta)?;
        let dpm = self.leading().data;
        let (u0, u1) = self.gauges();
        let gauged = DMatrix::from_fn(dpm.nrows(), dpm.ncols(), |r, c| u0[r] * dpm[(r, c)] * u0[c] * u1[c]);
        // the same blocks with a_l^± replaced by the real a_l and b_1 by -b_1
        let l = &self.layout;
        let total = l.total();
        let mut d = DMatrix::<C64>::zeros(total, total);
        let zp = self.params.zero_energy_power();
        let top2 = 4 * self.params.m - self.params.n;
        for (bi, i) in l.labels.iter().enumerate() {
            for (bj, j) in l.labels.iter().enumerate() {
                let sum2 = i.twice + j.twice;
                let (ro, co) = (l.offsets[bi], l.offsets[bj]);
                let (rs, cs) = (l.sizes[bi], l.sizes[bj]);
                if rs == 0 || cs == 0 || sum2 % 2 != 0 {
                    continue;
                }
                let phase = C64::from_polar(1.0, -PI * (sum2 / 2) as f64 / 2.0) * C64::from_polar(1.0, PI * j.value());
                let mut blk = DMatrix::<C64>::zeros(rs, cs);
                for (lidx, _, p) in &self.p_even {
                    if 4 * lidx == sum2 {
                        let c = phase * coeffs.a[*lidx as usize];
                        blk += p.view((ro, co), (rs, cs)).map(|x| c * x);
                    }
                }
                if sum2 == 2 * zp {
                    blk += self.p_t0.view((ro, co), (rs, cs)).map(|x| phase * x);
                }
                if sum2 == 2 * top2 {
                    blk += self.p_top.view((ro, co), (rs, cs)).map(|x| -phase * self.b1 * x);
                }
                d.view_mut((ro, co), (rs, cs)).copy_from(&blk);
            }
        }
        let resid = (&gauged - &d).norm() / d.norm().max(1e-300);
        Ok((BlockMatrix { layout: self.layout.clone(), data: d }, resid))
    }

    /// Number of leading columns belonging to indices below `m - n/2`.
    pub fn lower_split(&self) -> usize {
        let mid = self.params.j_mid();
        self.layout
            .labels
            .iter()
            .zip(&self.layout.sizes)
            .filter(|(j, _)| **j < mid)
            .map(|(_, s)| s)
            .sum()
    }

    /// `W` such that `B_1 = W`; `M^{-1} = λ^{2m-n} B_λ A^{-1} B_λ^*`.
    pub fn basis(&self) -> &DMatrix<f64> {
        &self.wall
    }

    /// Reassembles `(M^±(λ))^{-1}` from the inverse of the scaled block matrix.
    pub fn reassemble(&self, lambda: f64, a_inv: &DMatrix<C64>) -> DMatrix<C64> {
        let mut scale = Vec::new();
        for (b, j) in self.layout.labels.iter().enumerate() {
            for _ in 0..self.layout.sizes[b] {
                scale.push(lambda.powf(-j.value()));
            }
        }
        let pre = lambda.powi(self.params.zero_energy_power() as i32);
        let scaled = DMatrix::from_fn(a_inv.nrows(), a_inv.ncols(), |r, c| a_inv[(r, c)] * (pre * scale[r] * scale[c]));
        let left = complex_real(&scaled, &self.wall.transpose());
        let wc = linalg::to_complex(&self.wall);
        cmul(&wc, &left)
    }
}

#[derive(Debug, Clone)]
pub struct FeshbachResult {
    pub inverse: DMatrix<C64>,
    /// Schur complement `a22 - a21 a11^{-1} a12`.
    pub d: DMatrix<C64>,
    pub pivot_min_singular: f64,
    pub complement_min_singular: f64,
}

/// Inverse of `[[a11, a12], [a21, a22]]` (split after `split` rows) by the Schur complement.
pub fn feshbach_invert(a: &DMatrix<C64>, split: usize) -> Result<FeshbachResult> {
    let n = a.nrows();
    if a.ncols() != n || split > n {
        return Err(Error::InvalidInput("feshbach_invert needs a square matrix and split <= size".into()));
    }
    let scale = linalg::operator_norm(a).max(1e-300);
    let q = n - split;
    let a11 = a.view((0, 0), (split, split)).into_owned();
    let a12 = a.view((0, split), (split, q)).into_owned();
    let a21 = a.view((split, 0), (q, split)).into_owned();
    let a22 = a.view((split, split), (q, q)).into_owned();
    let s11 = linalg::min_singular(&a11);
    if split > 0 && s11 < 1e-13 * scale {
        return Err(Error::PivotSingular(s11));
    }
    let a11_inv = if split > 0 {
        linalg::inverse(&a11).ok_or(Error::PivotSingular(s11))?
    } else {
        DMatrix::zeros(0, 0)
    };
    let t = cmul(&a11_inv, &a12);
    let d = &a22 - cmul(&a21, &t);
    let sd = linalg::min_singular(&d);
    if q > 0 && sd < 1e-13 * scale {
        return Err(Error::ComplementSingular(sd));
    }
    let d_inv = if q > 0 {
        linalg::inverse(&d).ok_or(Error::ComplementSingular(sd))?
    } else {
        DMatrix::zeros(0, 0)
    };
    let s = cmul(&a21, &a11_inv);
    let mut inv = DMatrix::zeros(n, n);
    let top_right = -cmul(&t, &d_inv);
    let top_left = &a11_inv - cmul(&top_right, &s);
    let bottom_left = -cmul(&d_inv, &s);
    inv.view_mut((0, 0), (split, split)).copy_from(&top_left);
    inv.view_mut((0, split), (split, q)).copy_from(&top_right);
    inv.view_mut((split, 0), (q, split)).copy_from(&bottom_left);
    inv.view_mut((split, split), (q, q)).copy_from(&d_inv);
    Ok(FeshbachResult {
        inverse: inv,
        d,
        pivot_min_singular: s11,
        complement_min_singular: sd,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GramReport {
    pub k: i64,
    pub e0: Option<Vec<Vec<f64>>>,
    pub e1: Option<Vec<Vec<f64>>>,
    pub e0_min_eig: Option<f64>,
    pub e1_max_eig: Option<f64>,
    /// Same extremal eigenvalues after a random orthogonal change of basis.
    pub e0_min_eig_rebased: Option<f64>,
    pub e1_max_eig_rebased: Option<f64>,
}

fn gram(params: &ModelParams, idx: &[i64]) -> Result<DMatrix<f64>> {
    let n = params.n as usize;
    if n != 1 {
        return Err(Error::BackendUnsupported("Gram matrices are tabulated for n = 1".into()));
    }
    let d = idx.len();
    let mut e = DMatrix::zeros(d, d);
    for (r, &a) in idx.iter().enumerate() {
        for (c, &b) in idx.iter().enumerate() {
            let v = a_coefficient(params, &[a as usize], &[b as usize])?;
            let ph = C64::new(0.0, -1.0).powi((a + b) as i32);
            e[(r, c)] = (ph * v).re;
        }
    }
    Ok(e)
}

fn rebased_extreme(e: &DMatrix<f64>, rng: &mut ChaCha8Rng, min: bool) -> f64 {
    let d = e.nrows();
    let g = DMatrix::from_fn(d, d, |_, _| rng.random::<f64>() - 0.5);
    let q = g.qr().q();
    let f = q.transpose() * e * &q;
    let eig = SymmetricEigen::new((&f + f.transpose()) * 0.5).eigenvalues;
    if min {
        eig.min()
    } else {
        eig.max()
    }
}

/// `E_0` over `J'_k` and `E_1` over `J''_k`, with their extremal eigenvalues.
pub fn gram_matrices(params: &ModelParams, k: i64, seed: u64) -> Result<GramReport> {
    let set = index_set(params, k)?;
    let lo = lower_indices(params, &set);
    let hi = upper_indices(params, &set);
    if lo.is_empty() && hi.is_empty() {
        return Err(Error::EmptyIndexRange(format!("J'_{k} and J''_{k} are both empty")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let to_rows = |e: &DMatrix<f64>| (0..e.nrows()).map(|r| e.row(r).iter().copied().collect()).collect();
    let (mut e0, mut e0_min, mut e0_rb) = (None, None, None);
    if !lo.is_empty() {
        let e = gram(params, &lo)?;
        e0_min = Some(SymmetricEigen::new(e.clone()).eigenvalues.min());
        e0_rb = Some(rebased_extreme(&e, &mut rng, true));
        e0 = Some(to_rows(&e));
    }
    let (mut e1, mut e1_max, mut e1_rb) = (None, None, None);
    if !hi.is_empty() {
        let e = gram(params, &hi)?;
        e1_max = Some(SymmetricEigen::new(e.clone()).eigenvalues.max());
        e1_rb = Some(rebased_extreme(&e, &mut rng, false));
        e1 = Some(to_rows(&e));
    }
    Ok(GramReport {
        k,
        e0,
        e1,
        e0_min_eig: e0_min,
        e1_max_eig: e1_max,
        e0_min_eig_rebased: e0_rb,
        e1_max_eig_rebased: e1_rb,
    })
}

/// Neumann sum of `(D + R)^{-1}` given `D^{-1}`; fails if `ρ(D^{-1}R) >= 1`.
pub fn neumann_inverse(d_inv: &DMatrix<C64>, r: &DMatrix<C64>, lambda: f64) -> Result<(DMatrix<C64>, f64, usize)> {
    let x = cmul(d_inv, r);
    let radius = linalg::spectral_radius(&x);
    if radius >= 1.0 {
        return Err(Error::NeumannDiverges { lambda, radius });
    }
    let mut term = d_inv.clone();
    let mut sum = d_inv.clone();
    let mut count = 1;
    while count < NEUMANN_MAX_TERMS {
        term = -cmul(&x, &term);
        sum += &term;
        count += 1;
        if term.norm() < NEUMANN_TOL * sum.norm() {
            break;
        }
    }
    Ok((sum, radius, count))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GammaSeries {
    pub i: HalfIndex,
    pub j: HalfIndex,
    pub samples: Vec<(f64, f64)>,
    pub slope: Option<f64>,
    /// Entries with the improved class of the diagonal statements.
    pub special: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BlockLimit {
    pub i: HalfIndex,
    pub j: HalfIndex,
    pub norm: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LambdaSample {
    pub lambda: f64,
    /// `||λ^{2m-n} B^* M B - D^±||`.
    pub leading_error: f64,
    pub neumann_radius: f64,
    pub neumann_terms: usize,
    /// `||A^{-1}_{Neumann} - A^{-1}_{dense}|| / ||A^{-1}_{dense}||`.
    pub neumann_vs_dense: f64,
    /// `||M(λ) B_λ A^{-1}_{Neumann} B_λ^* λ^{2m-n} - I||`.
    pub reconstruction_residual: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExpansionReport {
    pub sign: SignBranch,
    pub k: i64,
    pub blocks: Vec<BlockLimit>,
    pub gamma: Vec<GammaSeries>,
    pub samples: Vec<LambdaSample>,
    pub leading_slope: f64,
    /// `(λ, ||M(λ) M(λ)^{-1}_{blocks} - I||, ||M^{-1}_{blocks} - M^{-1}_{dense}|| / ||M^{-1}_{dense}||)`.
    pub reconstruction: Vec<(f64, f64, f64)>,
    /// `||M_{mid,mid} - (Q T_0 Q)^{-1}|| / ||(Q T_0 Q)^{-1}||`.
    pub mid_block_error: f64,
    /// Largest `||M_{i,j}||`, `i != j`, with `i` or `j` in `{m-n/2, 2m-n/2}`.
    pub vanishing_blocks_max: f64,
    pub gauge_residual: f64,
    pub feshbach_vs_dense: f64,
    pub lambda0: Option<f64>,
}

/// `E (E A E)^{-1} E` with `E = diag(|a_ii|^{-1/2})`.
fn equilibrated_inverse(a: &DMatrix<C64>) -> Option<DMatrix<C64>> {
    let e: Vec<f64> = (0..a.nrows())
        .map(|i| {
            let d = a[(i, i)].norm();
            if d > 0.0 {
                1.0 / d.sqrt()
            } else {
                1.0
            }
        })
        .collect();
    let scaled = DMatrix::from_fn(a.nrows(), a.ncols(), |r, c| a[(r, c)] * (e[r] * e[c]));
    let inv = linalg::inverse(&scaled)?;
    Some(DMatrix::from_fn(a.nrows(), a.ncols(), |r, c| inv[(r, c)] * (e[r] * e[c])))
}

/// Inverse of `M^±(λ)` through `B_λ (B_λ^* M B_λ)^{-1} B_λ^*`, with `M` assembled directly.
pub fn reconstruction_check(space: &GridSpace, params: &ModelParams, pot: &SampledPotential, family: &ProjectionFamily, sign: SignBranch, lambda: f64) -> Result<(f64, f64)> {
    let m = build_m(space, params, pot, sign, lambda)?;
    let (b, bt) = build_b(family, lambda)?;
    let inner = real_t_complex(&bt.transpose(), &complex_real(&m, &b));
    let inner_inv = equilibrated_inverse(&inner).ok_or(Error::ResolventSolveFailed(lambda))?;
    let rec = cmul(&linalg::to_complex(&b), &complex_real(&inner_inv, &b.transpose()));
    let dense = linalg::inverse(&m).ok_or(Error::ResolventSolveFailed(lambda))?;
    let n = m.nrows();
    let ident = DMatrix::<C64>::identity(n, n);
    let resid = linalg::operator_norm(&(cmul(&m, &rec) - ident));
    let diff = linalg::operator_norm(&(&rec - &dense)) / linalg::operator_norm(&dense);
    Ok((resid, diff))
}

/// Largest dyadic `λ <= 1/2` at which `ρ(D^{-1}(A(λ) - D)) < 1/2`.
pub fn discover_lambda0(te: &ThresholdExpansion, d_inv: &DMatrix<C64>) -> Result<Option<f64>> {
    let d = te.leading().data;
    for e in 1..=24 {
        let lambda = 2f64.powi(-e);
        let a = te.scaled_matrix(lambda)?.data;
        let x = cmul(d_inv, &(&a - &d));
        if linalg::spectral_radius(&x) < 0.5 {
            return Ok(Some(lambda));
        }
    }
    Ok(None)
}

fn is_special(params: &ModelParams, k: i64, i: HalfIndex, j: HalfIndex) -> bool {
    i == j && ((k == 0 && i == params.j_mid()) || (k == params.max_kind() && i == params.j_top()))
}

/// Computes the blocks `M_{i,j}`, the remainders `Γ_{i,j}(λ)` and the checks of the expansion.
pub fn expansion(
    space: &GridSpace,
    params: &ModelParams,
    pot: &SampledPotential,
    family: &ProjectionFamily,
    sign: SignBranch,
    lambda_grid: &[f64],
) -> Result<ExpansionReport> {
    let te = ThresholdExpansion::new(space, params, pot, family, sign)?;
    let d = te.leading().data;
    let split = te.lower_split();
    let fesh = feshbach_invert(&d, split)?;
    let d_inv = fesh.inverse.clone();
    let dense_d_inv = linalg::inverse(&d).ok_or(Error::ComplementSingular(0.0))?;
    let feshbach_vs_dense = (&d_inv - &dense_d_inv).norm() / dense_d_inv.norm();
    let (_, gauge_residual) = te.gauge_reduced()?;
    let layout = te.layout.clone();
    let nb = layout.labels.len();

    let d_block = BlockMatrix { layout: layout.clone(), data: d_inv.clone() };
    let mut blocks = Vec::new();
    let mut vanishing: f64 = 0.0;
    let special = [params.j_mid(), params.j_top()];
    for bi in 0..nb {
        for bj in 0..nb {
            if layout.sizes[bi] == 0 || layout.sizes[bj] == 0 {
                continue;
            }
            let (i, j) = (layout.labels[bi], layout.labels[bj]);
            let norm = d_block.block_norm(bi, bj);
            if i != j && (special.contains(&i) || special.contains(&j)) {
                vanishing = vanishing.max(norm);
            }
            blocks.push(BlockLimit { i, j, norm });
        }
    }

    // M_{mid,mid} against (Q T_0 Q)^{-1}
    let mid_block_error = match layout.position(params.j_mid()) {
        Some(b) if layout.sizes[b] > 0 => {
            let w = family.q_basis(params.j_mid())?;
            let t0 = build_t0(space, params, pot)?;
            let q = linalg::to_complex(&(w.transpose() * t0 * w));
            let qi = linalg::inverse(&q).ok_or(Error::ComplementSingular(0.0))?;
            linalg::operator_norm(&(d_block.block(b, b) - &qi)) / linalg::operator_norm(&qi)
        }
        _ => 0.0,
    };

    let per_lambda: Vec<Result<(LambdaSample, BlockMatrix)>> = lambda_grid
        .par_iter()
        .map(|&lambda| {
            let a = te.scaled_matrix(lambda)?.data;
            let r = &a - &d;
            let leading_error = linalg::operator_norm(&r);
            let (neu, radius, terms) = neumann_inverse(&d_inv, &r, lambda)?;
            let dense = linalg::inverse(&a).ok_or(Error::ResolventSolveFailed(lambda))?;
            let neumann_vs_dense = (&neu - &dense).norm() / dense.norm();
            let m = build_m(space, params, pot, sign, lambda)?;
            let n = m.nrows();
            let reconstruction_residual = linalg::operator_norm(&(cmul(&m, &te.reassemble(lambda, &neu)) - DMatrix::<C64>::identity(n, n)));
            let gamma = BlockMatrix { layout: layout.clone(), data: &neu - &d_inv };
            Ok((
                LambdaSample {
                    lambda,
                    leading_error,
                    neumann_radius: radius,
                    neumann_terms: terms,
                    neumann_vs_dense,
                    reconstruction_residual,
                },
                gamma,
            ))
        })
        .collect();
    let mut samples = Vec::new();
    let mut gammas = Vec::new();
    for r in per_lambda {
        let (s, g) = r?;
        samples.push(s);
        gammas.push(g);
    }

    let mut gamma = Vec::new();
    for bi in 0..nb {
        for bj in 0..nb {
            if layout.sizes[bi] == 0 || layout.sizes[bj] == 0 {
                continue;
            }
            let (i, j) = (layout.labels[bi], layout.labels[bj]);
            let pts: Vec<(f64, f64)> = samples
                .iter()
                .zip(&gammas)
                .map(|(s, g)| (s.lambda, g.block_norm(bi, bj)))
                .collect();
            let slope = fit_slope(&pts);
            gamma.push(GammaSeries {
                i,
                j,
                samples: pts,
                slope,
                special: is_special(params, family.k, i, j),
            });
        }
    }
    let leading_slope = fit_slope(&samples.iter().map(|s| (s.lambda, s.leading_error)).collect::<Vec<_>>())
        .ok_or_else(|| Error::FitIllConditioned("leading-block error vanished".into()))?;

    let mut reconstruction = Vec::new();
    for lambda in [0.5, 0.25] {
        let (res, diff) = reconstruction_check(space, params, pot, family, sign, lambda)?;
        reconstruction.push((lambda, res, diff));
    }
    let lambda0 = discover_lambda0(&te, &d_inv)?;

    Ok(ExpansionReport {
        sign,
        k: family.k,
        blocks,
        gamma,
        samples,
        leading_slope,
        reconstruction,
        mid_block_error,
        vanishing_blocks_max: vanishing,
        gauge_residual,
        feshbach_vs_dense,
        lambda0,
    })
}

/// Log-log slope, or `None` when the series is at roundoff level.
fn fit_slope(pts: &[(f64, f64)]) -> Option<f64> {
    if pts.len() < 2 || pts.iter().any(|p| !(p.1 > 1e-300)) {
        return None;
    }
    let x: Vec<f64> = pts.iter().map(|p| p.0).collect();
    let y: Vec<f64> = pts.iter().map(|p| p.1).collect();
    loglog_fit(&x, &y).ok().map(|f| f.0)
}

/// Residual blocks grouped by index pair, for tabulation.
pub fn gamma_table(report: &ExpansionReport) -> BTreeMap<(HalfIndex, HalfIndex), Vec<(f64, f64)>> {
    report
        .gamma
        .iter()
        .map(|g| ((g.i, g.j), g.samples.clone()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn feshbach_matches_dense_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = DMatrix::from_fn(6, 6, |i, j| {
            C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5) + if i == j { C64::new(2.0, 0.0) } else { C64::new(0.0, 0.0) }
        });
        let f = feshbach_invert(&a, 2).unwrap();
        let dense = a.clone().try_inverse().unwrap();
        assert!((&f.inverse - &dense).norm() < 1e-12);
        // top-left block formula
        let a11 = a.view((0, 0), (2, 2)).into_owned().try_inverse().unwrap();
        let a12 = a.view((0, 2), (2, 4)).into_owned();
        let a21 = a.view((2, 0), (4, 2)).into_owned();
        let tl = &a11 + &a11 * &a12 * f.d.clone().try_inverse().unwrap() * &a21 * &a11;
        assert!((tl - f.inverse.view((0, 0), (2, 2))).norm() < 1e-12);
    }

    #[test]
    fn feshbach_block_diagonal() {
        let mut a = DMatrix::<C64>::zeros(3, 3);
        a[(0, 0)] = C64::new(2.0, 0.0);
        a[(1, 1)] = C64::new(0.0, 4.0);
        a[(2, 2)] = C64::new(-1.0, 0.0);
        let f = feshbach_invert(&a, 1).unwrap();
        assert!((f.inverse[(0, 0)] - 0.5).norm() < 1e-15);
        assert!((f.inverse[(1, 1)] - C64::new(0.0, -0.25)).norm() < 1e-15);
        let mut s = a.clone();
        s[(0, 0)] = C64::new(0.0, 0.0);
        assert!(matches!(feshbach_invert(&s, 1), Err(Error::PivotSingular(_))));
    }

    #[test]
    fn quartic_gram_entry() {
        let p = crate::model::make_params(2, 1).unwrap();
        let g = gram_matrices(&p, 1, 1).unwrap();
        let e0 = g.e0.unwrap();
        assert!((e0[0][0] - 1.0 / (2.0 * 2f64.sqrt())).abs() < 1e-10);
        assert!(g.e0_min_eig.unwrap() > 0.0);
        assert!(g.e1_max_eig.unwrap() < 0.0);
    }
}
