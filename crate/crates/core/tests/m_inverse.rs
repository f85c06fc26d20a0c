use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use polyprop_core::free_resolvent::SignBranch;
use polyprop_core::linalg::{complex_real, operator_norm, real_t_complex};
use polyprop_core::m_inverse::*;
use polyprop_core::projections::{build_projection_family, classify_resonance, ProjectionFamily};
use polyprop_core::{make_params, GridSpace, ModelParams, PotentialSpec, SampledPotential};

fn setup(m: i64, spec: PotentialSpec) -> (GridSpace, ModelParams, SampledPotential, ProjectionFamily) {
    let p = make_params(m, 1).unwrap();
    let sp = GridSpace::line(20.0, 401).unwrap();
    let pot = SampledPotential::new(&sp, &p, &spec).unwrap();
    let k = classify_resonance(&sp, &p, &pot).unwrap().kind;
    let fam = build_projection_family(&sp, &p, &pot, k).unwrap();
    (sp, p, pot, fam)
}

fn bump() -> PotentialSpec {
    PotentialSpec::GaussWell { amplitude: 1.0, width: 1.0 }
}

fn dyadic() -> Vec<f64> {
    (3..=8).map(|e| 2f64.powi(-e)).collect()
}

#[test]
fn adjoint_pairing() {
    let p = make_params(2, 1).unwrap();
    let sp = GridSpace::line(10.0, 101).unwrap();
    let pot = SampledPotential::new(&sp, &p, &bump()).unwrap();
    for lambda in [0.3, 1.7] {
        let plus = build_m(&sp, &p, &pot, SignBranch::Plus, lambda).unwrap();
        let minus = build_m(&sp, &p, &pot, SignBranch::Minus, lambda).unwrap();
        assert!((plus.adjoint() - minus).norm() < 1e-10 * plus.norm());
    }
}

#[test]
fn coarse_grid_is_rejected() {
    let p = make_params(2, 1).unwrap();
    let sp = GridSpace::line(10.0, 101).unwrap();
    let pot = SampledPotential::new(&sp, &p, &bump()).unwrap();
    assert!(build_m(&sp, &p, &pot, SignBranch::Plus, 20.0).is_err());
}

#[test]
fn split_matches_direct_assembly() {
    for spec in [bump(), PotentialSpec::BumpResonant] {
        let (sp, p, pot, fam) = setup(2, spec);
        let te = ThresholdExpansion::new(&sp, &p, &pot, &fam, SignBranch::Plus).unwrap();
        for lambda in [0.5, 0.25] {
            let a = te.scaled_matrix(lambda).unwrap().data;
            let m = build_m(&sp, &p, &pot, SignBranch::Plus, lambda).unwrap();
            let (b, _) = build_b(&fam, lambda).unwrap();
            let direct = real_t_complex(&b, &complex_real(&m, &b)) * C64::new(lambda.powi(3), 0.0);
            assert!((&a - &direct).norm() < 1e-10 * direct.norm());
        }
    }
}

#[test]
fn b_at_one_is_the_basis_and_weights_are_diagonal() {
    let (_, _, _, fam) = setup(2, bump());
    let (b1, _) = build_b(&fam, 1.0).unwrap();
    let n = b1.nrows();
    assert!((&b1 * b1.transpose() - DMatrix::<f64>::identity(n, n)).norm() < 1e-10);
    let lambda = 0.5;
    let (b, bt) = build_b(&fam, lambda).unwrap();
    let g = bt * b;
    let mut off = 0;
    for (j, w) in &fam.q_bases {
        for c in 0..w.ncols() {
            assert!((g[(off + c, off + c)] - lambda.powf(-2.0 * j.value())).abs() < 1e-10);
        }
        off += w.ncols();
    }
    assert!((g.clone() - DMatrix::from_diagonal(&g.diagonal())).norm() < 1e-10);
}

#[test]
fn leading_blocks_vanish_for_odd_sums_and_gauge_is_exact() {
    for spec in [bump(), PotentialSpec::BumpResonant, PotentialSpec::KindOneResonant] {
        let (sp, p, pot, fam) = setup(2, spec);
        for sign in [SignBranch::Plus, SignBranch::Minus] {
            let te = ThresholdExpansion::new(&sp, &p, &pot, &fam, sign).unwrap();
            let d = te.leading();
            let l = &d.layout;
            for bi in 0..l.labels.len() {
                for bj in 0..l.labels.len() {
                    let s = l.labels[bi].twice + l.labels[bj].twice;
                    let integer = l.labels[bi].is_integer() && l.labels[bj].is_integer();
                    // the T0 term sits at i + j = 2m - n
                    if l.sizes[bi] > 0 && l.sizes[bj] > 0 && integer && s % 4 == 2 && s != 2 * p.zero_energy_power() {
                        assert_eq!(d.block_norm(bi, bj), 0.0);
                    }
                }
            }
            let (_, resid) = te.gauge_reduced().unwrap();
            assert!(resid < 1e-10, "{resid}");
        }
    }
}

#[test]
fn expansion_regular_bump() {
    let (sp, p, pot, fam) = setup(2, bump());
    assert_eq!(fam.k, 0);
    let r = expansion(&sp, &p, &pot, &fam, SignBranch::Plus, &dyadic()).unwrap();
    for (lambda, res, diff) in &r.reconstruction {
        assert!(*res < 1e-8 && *diff < 1e-8, "{lambda}: {res} {diff}");
    }
    assert!(r.leading_slope >= 0.35, "{}", r.leading_slope);
    assert!(r.mid_block_error < 1e-6);
    assert!(r.vanishing_blocks_max < 1e-6);
    for s in &r.samples {
        assert!(s.neumann_vs_dense < 1e-8);
    }
    for g in &r.gamma {
        if let Some(slope) = g.slope {
            let need = if g.special { 0.85 } else { 0.35 };
            assert!(slope >= need, "Γ {} {}: {slope}", g.i, g.j);
        }
    }
    assert!(r.gamma.iter().any(|g| g.special && g.slope.is_some()));
    assert!(r.lambda0.unwrap() >= 0.0625);
}

#[test]
fn expansion_resonant_kinds() {
    for spec in [PotentialSpec::KindOneResonant, PotentialSpec::BumpResonant] {
        let (sp, p, pot, fam) = setup(2, spec);
        assert!(fam.k > 0);
        for sign in [SignBranch::Plus, SignBranch::Minus] {
            let r = expansion(&sp, &p, &pot, &fam, sign, &dyadic()).unwrap();
            for (_, res, _) in &r.reconstruction {
                assert!(*res < 1e-8);
            }
            assert!(r.leading_slope >= 0.35);
            assert!(r.mid_block_error < 1e-6);
            for g in r.gamma.iter().filter_map(|g| g.slope) {
                assert!(g >= 0.35);
            }
        }
    }
}

#[test]
fn mid_block_is_inverse_of_restricted_t0() {
    let (sp, p, pot, fam) = setup(2, PotentialSpec::GaussWell { amplitude: -3.0, width: 1.0 });
    let te = ThresholdExpansion::new(&sp, &p, &pot, &fam, SignBranch::Minus).unwrap();
    let d = te.leading().data;
    let inv = feshbach_invert(&d, te.lower_split()).unwrap().inverse;
    let w = fam.q_basis(p.j_mid()).unwrap();
    let t0 = polyprop_core::projections::build_t0(&sp, &p, &pot).unwrap();
    let q = (w.transpose() * t0 * w).map(|x| C64::new(x, 0.0));
    let qi = q.try_inverse().unwrap();
    let b = te.layout.position(p.j_mid()).unwrap();
    let (o, s) = (te.layout.offsets[b], te.layout.sizes[b]);
    let blk = inv.view((o, o), (s, s)).into_owned();
    assert!(operator_norm(&(blk - &qi)) < 1e-6 * operator_norm(&qi));
}

#[test]
fn gram_definiteness_all_kinds() {
    for m in [2, 3] {
        let p = make_params(m, 1).unwrap();
        for k in 0..=p.max_kind() {
            let g = gram_matrices(&p, k, 11 + k as u64).unwrap();
            if let Some(e) = g.e0_min_eig {
                assert!(e > 0.0 && g.e0_min_eig_rebased.unwrap() > 0.0, "E0 ({m},{k}) {e}");
                assert!((e - g.e0_min_eig_rebased.unwrap()).abs() < 1e-10 * e.abs().max(1.0));
            }
            if let Some(e) = g.e1_max_eig {
                assert!(e < 0.0 && g.e1_max_eig_rebased.unwrap() < 0.0, "E1 ({m},{k}) {e}");
                assert!((e - g.e1_max_eig_rebased.unwrap()).abs() < 1e-10 * e.abs().max(1.0));
            }
        }
    }
}

#[test]
fn neumann_reports_divergence() {
    let (sp, p, pot, fam) = setup(2, PotentialSpec::GaussWell { amplitude: -0.01, width: 1.0 });
    let err = expansion(&sp, &p, &pot, &fam, SignBranch::Plus, &[0.125]).unwrap_err();
    match err {
        polyprop_core::Error::NeumannDiverges { radius, .. } => assert!(radius >= 1.0),
        e => panic!("unexpected {e}"),
    }
}
