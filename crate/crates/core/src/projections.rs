//! The zero-energy operator `T_0 = U + b_0 v G_{2m-n} v`, the chains of
//! projections `S_j`, `Q_j` and the classification of zero energy.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::free_resolvent::expansion_coefficients;
use crate::linalg::{self, complement_within, gram_schmidt, null_space_scaled, symmetric_null_space, KERNEL_THRESHOLD};
use crate::model::{index_set, HalfIndex, ModelParams};
use crate::potential::{PotentialSpec, SampledPotential};
use crate::quad::loglog_fit;
use crate::shooting::{shooting_oracle, ShootingOptions};
use crate::space::{sandwich, GridSpace};

/// `b_0`, the coefficient of `|x|^{2m-n}` in the zero-energy kernel.
pub fn b0(params: &ModelParams) -> Result<f64> {
    let coeffs = expansion_coefficients(params, params.zero_energy_power() + 1)?;
    coeffs
        .b
        .first()
        .copied()
        .ok_or_else(|| Error::FitIllConditioned("missing b_0".into()))
}

/// `v G_j v` in unitary coordinates.
pub fn build_operator_g(space: &GridSpace, pot: &SampledPotential, j: i64) -> Result<DMatrix<f64>> {
    Ok(sandwich(&pot.v, &space.g_matrix(j)?))
}

pub fn build_t0(space: &GridSpace, params: &ModelParams, pot: &SampledPotential) -> Result<DMatrix<f64>> {
    space.supports(params)?;
    let mut t0 = build_operator_g(space, pot, params.zero_energy_power())? * b0(params)?;
    for i in 0..space.len() {
        t0[(i, i)] += pot.u[i];
    }
    // exact symmetry
    let sym = (&t0 + t0.transpose()) * 0.5;
    Ok(sym)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MomentCertificate {
    pub j: HalfIndex,
    pub alpha: usize,
    /// `||Q_j (x^α v)|| / ||x^α v||`.
    pub residual: f64,
}

/// Singular values of one restricted map, smallest first (at most 8 listed).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MapDiagnostics {
    pub j: HalfIndex,
    pub smallest: Vec<f64>,
    pub sigma_max: f64,
    pub threshold: f64,
    pub kernel_dim: usize,
}

#[derive(Debug, Clone)]
pub struct ProjectionFamily {
    pub k: i64,
    pub members: Vec<HalfIndex>,
    /// Orthonormal bases of `S_j L^2` for every `j` in `J_{m_n+1}`.
    pub s_bases: BTreeMap<HalfIndex, DMatrix<f64>>,
    /// Orthonormal bases of `Q_j L^2` for `j` in `J_k`.
    pub q_bases: BTreeMap<HalfIndex, DMatrix<f64>>,
    pub moment_certificates: Vec<MomentCertificate>,
    pub diagnostics: Vec<MapDiagnostics>,
    /// Rank of `I - sum_{j in J_k} Q_j`.
    pub defect: usize,
    pub dim: usize,
}

impl ProjectionFamily {
    pub fn s_projector(&self, j: HalfIndex) -> Option<DMatrix<f64>> {
        self.s_bases.get(&j).map(linalg::projector)
    }

    pub fn q_projector(&self, j: HalfIndex) -> Option<DMatrix<f64>> {
        self.q_bases.get(&j).map(linalg::projector)
    }

    pub fn q_basis(&self, j: HalfIndex) -> Result<&DMatrix<f64>> {
        self.q_bases
            .get(&j)
            .ok_or_else(|| Error::FamilyIncomplete(format!("no Q_{j} in the family for k = {}", self.k)))
    }

    /// `||I - sum_{j in J_k} Q_j||`.
    pub fn completeness_residual(&self) -> f64 {
        let n = self.dim;
        let mut sum = DMatrix::<f64>::identity(n, n);
        for b in self.q_bases.values() {
            sum -= b * b.transpose();
        }
        sum.norm()
    }

    pub fn is_complete(&self) -> bool {
        self.defect == 0
    }

    /// Fails unless `sum_{j in J_k} Q_j = I`.
    pub fn require_complete(&self) -> Result<()> {
        if self.is_complete() {
            Ok(())
        } else {
            Err(Error::FamilyIncomplete(format!(
                "sum of Q_j over J_{} misses a subspace of dimension {}",
                self.k, self.defect
            )))
        }
    }

    pub fn ranks(&self) -> Vec<(HalfIndex, usize)> {
        self.q_bases.iter().map(|(j, b)| (*j, b.ncols())).collect()
    }
}

fn diagnostics(j: HalfIndex, sv: &[f64], threshold: f64, kernel_dim: usize) -> MapDiagnostics {
    let mut s: Vec<f64> = sv.to_vec();
    s.sort_by(|a, b| a.total_cmp(b));
    let sigma_max = s.last().copied().unwrap_or(0.0);
    s.truncate(8);
    MapDiagnostics {
        j,
        smallest: s,
        sigma_max,
        threshold,
        kernel_dim,
    }
}

fn moments_basis(space: &GridSpace, pot: &SampledPotential, j: i64) -> DMatrix<f64> {
    let vecs = space.moment_vectors(&pot.v, j);
    let q = gram_schmidt(&vecs, 1e-10);
    linalg::columns_to_matrix(space.len(), &q)
}

/// Builds every `S_j`, top-down through the inclusion chain, then the `Q_j` for `J_k`.
pub fn build_projection_family(
    space: &GridSpace,
    params: &ModelParams,
    pot: &SampledPotential,
    k: i64,
) -> Result<ProjectionFamily> {
    build_projection_family_with(space, params, pot, k, KERNEL_THRESHOLD)
}

pub fn build_projection_family_with(
    space: &GridSpace,
    params: &ModelParams,
    pot: &SampledPotential,
    k: i64,
    threshold: f64,
) -> Result<ProjectionFamily> {
    let set = index_set(params, k)?;
    let full = index_set(params, params.max_kind())?;
    let t0 = build_t0(space, params, pot)?;
    let n = space.len();
    let ident = DMatrix::<f64>::identity(n, n);
    let mid = params.j_mid();
    let top = params.j_top();
    let mut s_bases: BTreeMap<HalfIndex, DMatrix<f64>> = BTreeMap::new();
    let mut diags = Vec::new();

    let complement_of_moments = |j: i64| -> DMatrix<f64> {
        if j < 0 {
            ident.clone()
        } else {
            linalg::complement(n, &moments_basis(space, pot, j))
        }
    };

    // S_{m-n/2}
    let (s_mid, t0_scale) = if params.is_low_dim() {
        let j_low = params.m - (params.n + 1) / 2;
        for j in 0..=j_low {
            s_bases.insert(HalfIndex::int(j), complement_of_moments(j));
        }
        let b_low = &s_bases[&HalfIndex::int(j_low)];
        let restricted = b_low.transpose() * &t0 * b_low;
        let ns = symmetric_null_space(&restricted, threshold, &format!("T0 restricted to S_{j_low}"))?;
        diags.push(diagnostics(mid, &ns.singular_values, ns.threshold, ns.basis.ncols()));
        (b_low * ns.basis, ns.threshold / threshold)
    } else {
        let ns = symmetric_null_space(&t0, threshold, "kernel of T0")?;
        diags.push(diagnostics(mid, &ns.singular_values, ns.threshold, ns.basis.ncols()));
        (ns.basis, ns.threshold / threshold)
    };
    s_bases.insert(mid, s_mid.clone());

    // integer members above m - n/2
    let first = if params.is_low_dim() { params.k_c } else { 0 };
    for j in first..=params.max_integer_index() {
        let a = params.zero_energy_power() - j - 1;
        let pa_t0 = if a < 0 {
            &t0 * &s_mid
        } else {
            let e = moments_basis(space, pot, a);
            let x = &t0 * &s_mid;
            &x - &e * (e.transpose() * &x)
        };
        let ej = moments_basis(space, pot, j);
        let mom = ej.transpose() * &s_mid;
        let stacked = if s_mid.ncols() == 0 {
            DMatrix::zeros(0, 0)
        } else {
            let mut st = DMatrix::zeros(pa_t0.nrows() + mom.nrows(), s_mid.ncols());
            st.view_mut((0, 0), pa_t0.shape()).copy_from(&pa_t0);
            st.view_mut((pa_t0.nrows(), 0), mom.shape()).copy_from(&mom);
            st
        };
        let basis = if s_mid.ncols() == 0 {
            DMatrix::zeros(n, 0)
        } else {
            let ns = null_space_scaled(&stacked, threshold, t0_scale, &format!("constraints defining S_{j}"))?;
            diags.push(diagnostics(HalfIndex::int(j), &ns.singular_values, ns.threshold, ns.basis.ncols()));
            &s_mid * ns.basis
        };
        s_bases.insert(HalfIndex::int(j), basis);
    }
    s_bases.insert(top, DMatrix::zeros(n, 0));

    // Q_j = S_{j'} - S_j along J_{m_n+1}
    let mut q_bases = BTreeMap::new();
    for &j in &set.members {
        let s_j = &s_bases[&j];
        let q = match full.predecessor(j) {
            None => complement_within(&ident, s_j),
            Some(prev) => complement_within(&s_bases[&prev], s_j),
        };
        q_bases.insert(j, q);
    }
    let defect = s_bases[&set.max()].ncols();

    // moment certificates ||Q_j x^α v|| for |α| <= δ(j) - 1
    let mut certs = Vec::new();
    for (&j, q) in &q_bases {
        let vecs = space.moment_vectors(&pot.v, j.delta() - 1);
        for (alpha, mv) in vecs.iter().enumerate() {
            let nrm = mv.norm();
            if nrm == 0.0 {
                continue;
            }
            let proj = q * (q.transpose() * mv);
            certs.push(MomentCertificate {
                j,
                alpha,
                residual: proj.norm() / nrm,
            });
        }
    }

    Ok(ProjectionFamily {
        k,
        members: set.members,
        s_bases,
        q_bases,
        moment_certificates: certs,
        diagnostics: diags,
        defect,
        dim: n,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResonanceReport {
    pub kind: i64,
    /// `dim S_j L^2` along `J_{m_n+1}`.
    pub dims: Vec<(HalfIndex, usize)>,
    pub singular_values: Vec<MapDiagnostics>,
    /// `(k, rank of I - sum_{J_k} Q_j)` for every kind.
    pub defects: Vec<(i64, usize)>,
    pub threshold: f64,
    /// Kind found by the shooting oracle, when it applies (line grid).
    pub oracle_kind: Option<i64>,
    pub oracle_agreement: bool,
    /// Resonance function recovered from `S_{max J}` compared with the
    /// built-in profile of the potential, when both exist.
    pub profile_error: Option<f64>,
    pub notes: Vec<String>,
}

/// Classifies zero energy: the smallest `k` with `sum_{j in J_k} Q_j = I`.
pub fn classify_resonance(space: &GridSpace, params: &ModelParams, pot: &SampledPotential) -> Result<ResonanceReport> {
    classify_resonance_with(space, params, pot, KERNEL_THRESHOLD)
}

pub fn classify_resonance_with(
    space: &GridSpace,
    params: &ModelParams,
    pot: &SampledPotential,
    threshold: f64,
) -> Result<ResonanceReport> {
    if pot.is_zero() {
        return Err(Error::InvalidInput("classification needs a nonzero potential".into()));
    }
    let fam = build_projection_family_with(space, params, pot, params.max_kind(), threshold)?;
    let mut defects = Vec::new();
    let mut kind = None;
    for k in 0..=params.max_kind() {
        let set = index_set(params, k)?;
        let d = fam.s_bases[&set.max()].ncols();
        defects.push((k, d));
        if d == 0 && kind.is_none() {
            kind = Some(k);
        }
    }
    let kind = kind.expect("S at the top index is zero");
    let mut notes = Vec::new();
    if !space.is_line() {
        notes.push("radial grid: only s-wave resonances are detected".to_string());
    }

    let (oracle_kind, oracle_agreement) = if space.is_line() {
        let shot = shooting_oracle(params, &pot.spec, ShootingOptions::default())?;
        (Some(shot.kind), shot.kind == kind)
    } else {
        (None, false)
    };
    if oracle_kind.is_none() {
        notes.push("no shooting oracle on this backend".to_string());
    }

    let profile_error = if kind >= 1 {
        match (space.is_line(), pot.spec.resonance_profile(0.0)) {
            (true, Some(_)) => {
                let prev = index_set(params, kind - 1)?.max();
                let basis = &fam.s_bases[&prev];
                if basis.ncols() == 1 {
                    let psi = basis.column(0).into_owned();
                    Some(resonance_function_error(space, params, pot, &psi)?)
                } else {
                    None
                }
            }
            _ => None,
        }
    } else {
        None
    };

    Ok(ResonanceReport {
        kind,
        dims: fam.s_bases.iter().map(|(j, b)| (*j, b.ncols())).collect(),
        singular_values: fam.diagnostics,
        defects,
        threshold,
        oracle_kind,
        oracle_agreement,
        profile_error,
        notes,
    })
}

/// `φ = -b_0 G_{2m-n}(v ψ)` on the grid, before the polynomial gauge is fixed.
pub fn resonance_function(space: &GridSpace, params: &ModelParams, pot: &SampledPotential, psi: &DVector<f64>) -> Result<Vec<f64>> {
    let g = space.g_matrix(params.zero_energy_power())?;
    let sw = space.sqrt_weights();
    // v ψ in unitary coordinates, then G, then back to samples
    let vpsi = DVector::from_iterator(space.len(), psi.iter().zip(&pot.v).map(|(p, v)| p * v));
    let out = &g * vpsi;
    let b = b0(params)?;
    Ok(out.iter().zip(&sw).map(|(o, s)| -b * o / s).collect())
}

/// Relative mismatch between the recovered resonance function, up to an
/// affine gauge and scale, and the profile built into the potential, on `|x| <= L/4`.
pub fn resonance_function_error(space: &GridSpace, params: &ModelParams, pot: &SampledPotential, psi: &DVector<f64>) -> Result<f64> {
    let phi = resonance_function(space, params, pot, psi)?;
    let quarter = space.extent() / 4.0;
    let rows: Vec<usize> = (0..space.len()).filter(|&i| space.nodes[i].abs() <= quarter).collect();
    let target: Vec<f64> = rows
        .iter()
        .map(|&i| pot.spec.resonance_profile(space.nodes[i]).unwrap_or(0.0))
        .collect();
    // target * s = φ + c0 + c1 x
    let a = DMatrix::from_fn(rows.len(), 3, |r, c| match c {
        0 => target[r],
        1 => -1.0,
        _ => -space.nodes[rows[r]],
    });
    let rhs = DVector::from_iterator(rows.len(), rows.iter().map(|&i| phi[i]));
    let sol = a
        .clone()
        .svd(true, true)
        .solve(&rhs, 1e-14)
        .map_err(|e| Error::FitIllConditioned(e.to_string()))?;
    let resid = &a * &sol - &rhs;
    let scale = target.iter().map(|t| (t * sol[0]).powi(2)).sum::<f64>().sqrt();
    Ok(resid.norm() / scale)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OrthogonalityReport {
    pub entries: Vec<OrthogonalityEntry>,
    pub max_residual: f64,
    /// Smallest `<b_1 Q vG_{4m-n}v Q ψ, ψ>` over the random trials.
    pub b1_min: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OrthogonalityEntry {
    pub i: HalfIndex,
    pub j: HalfIndex,
    /// `Some(l)` for `Q_i vG_{2l}v Q_j`, `None` for `Q_i T_0 Q_j`.
    pub l: Option<i64>,
    pub residual: f64,
}

/// Norms of the blocks that vanish by moment cancellation or by the kernel conditions.
pub fn orthogonality_checks(
    family: &ProjectionFamily,
    space: &GridSpace,
    params: &ModelParams,
    pot: &SampledPotential,
    seed: u64,
) -> Result<OrthogonalityReport> {
    let t0 = build_t0(space, params, pot)?;
    let max_l = params.max_integer_index();
    let mut gs = Vec::new();
    for l in 0..=max_l {
        gs.push(build_operator_g(space, pot, 2 * l)?);
    }
    let scale_t0 = t0.norm().max(1.0);
    let mut entries = Vec::new();
    for (&i, qi) in &family.q_bases {
        for (&j, qj) in &family.q_bases {
            if qi.ncols() == 0 || qj.ncols() == 0 {
                continue;
            }
            let floor_sum = i.delta() + j.delta() - 1;
            for (l, g) in gs.iter().enumerate() {
                if floor_sum >= 2 * l as i64 {
                    let r = (qi.transpose() * g * qj).norm() / g.norm().max(1e-300);
                    entries.push(OrthogonalityEntry { i, j, l: Some(l as i64), residual: r });
                }
            }
            if i.twice + j.twice > 2 * params.zero_energy_power() {
                let r = (qi.transpose() * &t0 * qj).norm() / scale_t0;
                entries.push(OrthogonalityEntry { i, j, l: None, residual: r });
            }
        }
    }
    let max_residual = entries.iter().map(|e| e.residual).fold(0.0, f64::max);

    let top = params.j_top();
    let b1_min = match family.q_bases.get(&top) {
        Some(q) if q.ncols() > 0 => {
            let coeffs = expansion_coefficients(params, 4 * params.m - params.n + 1)?;
            let b1 = coeffs.b.get(1).copied().unwrap_or(0.0);
            let g = build_operator_g(space, pot, 4 * params.m - params.n)?;
            let block = q.transpose() * g * q * b1;
            let mut state = seed.max(1);
            let mut min = f64::INFINITY;
            for _ in 0..20 {
                let psi = DVector::from_fn(q.ncols(), |_, _| {
                    // xorshift, enough for random directions
                    state ^= state << 13;
                    state ^= state >> 7;
                    state ^= state << 17;
                    (state as f64 / u64::MAX as f64) - 0.5
                });
                min = min.min(psi.dot(&(&block * &psi)) / psi.norm_squared());
            }
            Some(min)
        }
        _ => None,
    };
    Ok(OrthogonalityReport {
        entries,
        max_residual,
        b1_min,
    })
}

/// Decay slope of `∫ f(y) |x-y|^p dy` over `x` in `[4, L/2]` after removing
/// the moments of `f` up to order `j`.
pub fn moment_decay_check(space: &GridSpace, f: &[f64], j: i64, p: i64) -> Result<f64> {
    if !space.is_line() {
        return Err(Error::BackendUnsupported("moment decay check runs on the line grid".into()));
    }
    let xs = &space.nodes;
    let h = space.step();
    let mut g = f.to_vec();
    if j >= 0 {
        // subtract Σ c_β x^β e^{-x^2} with matching moments
        let dim = (j + 1) as usize;
        let bump: Vec<f64> = xs.iter().map(|x| (-x * x).exp()).collect();
        let mom = |vals: &dyn Fn(usize) -> f64, a: usize| -> f64 {
            (0..xs.len()).map(|i| xs[i].powi(a as i32) * vals(i)).sum::<f64>() * h
        };
        let a = DMatrix::from_fn(dim, dim, |r, c| mom(&|i| xs[i].powi(c as i32) * bump[i], r));
        let rhs = DVector::from_fn(dim, |r, _| mom(&|i| f[i], r));
        let c = a
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::FitIllConditioned("moment system singular".into()))?;
        for i in 0..xs.len() {
            let corr: f64 = (0..dim).map(|b| c[b] * xs[i].powi(b as i32)).sum();
            g[i] -= corr * bump[i];
        }
    }
    let lo = 4.0;
    let hi = space.extent() / 2.0;
    let samples: Vec<f64> = xs.iter().copied().filter(|&x| x >= lo && x <= hi).collect();
    if samples.len() < 4 {
        return Err(Error::FitIllConditioned("grid too short for the decay window".into()));
    }
    let vals: Vec<f64> = samples
        .iter()
        .map(|&x| (0..xs.len()).map(|i| g[i] * (x - xs[i]).abs().powi(p as i32)).sum::<f64>() * h)
        .map(f64::abs)
        .collect();
    let jx: Vec<f64> = samples.iter().map(|x| (1.0 + x * x).sqrt()).collect();
    let (slope, _, _) = loglog_fit(&jx, &vals)?;
    Ok(slope)
}

/// Convenience: sample `spec` and classify it.
pub fn classify_spec(space: &GridSpace, params: &ModelParams, spec: &PotentialSpec) -> Result<ResonanceReport> {
    let pot = SampledPotential::new(space, params, spec)?;
    classify_resonance(space, params, &pot)
}
