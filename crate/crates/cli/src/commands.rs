use std::f64::consts::PI;

use num_complex::Complex64 as C64;
use polyprop_core::free_propagator::{free_kernel as free_value, propagator_sample, Band};
use polyprop_core::free_resolvent::{expansion_coefficients, higher_kernel};
use polyprop_core::m_inverse::expansion;
use polyprop_core::model::{decay_exponent, rational_to_f64};
use polyprop_core::oscillatory::{dyadic, verify_lemma_bounds, Region, RAPID_ORDER};
use polyprop_core::perturbed::{
    decay_fit, dyadic_times, propagate as run_propagator, OracleConfig, PerturbedKernel, PropagatorRun, RunSpec, ScatteringGrid,
    StoneConfig,
};
use polyprop_core::projections::{build_operator_g, build_projection_family, classify_resonance_with};
use polyprop_core::shooting::{shooting_oracle, ShootingOptions};
use polyprop_core::{make_params, GridSpace, ModelParams, PotentialSpec, SampledPotential, SignBranch};
use serde_json::json;

use crate::config::RunConfig;
use crate::error::{CliError, Context};
use crate::output::{num, opt, Check, CheckKind, Outputs, Plot};

/// Tolerance names accepted by `--tol`.
pub const TOLERANCES: [&str; 12] = [
    "closed_form",
    "self_similarity",
    "phase",
    "svd_threshold",
    "profile",
    "reconstruction",
    "leading_slope",
    "mid_block",
    "additivity",
    "symmetry",
    "oracle",
    "slope",
];

fn params(c: &RunConfig) -> Result<ModelParams, CliError> {
    make_params(c.m, c.n).ctx("model parameters")
}

fn log_grid(lo: f64, hi: f64, count: usize) -> Result<Vec<f64>, CliError> {
    if !(lo > 0.0 && hi >= lo) || count == 0 {
        return Err(CliError::Validation(format!("need 0 < lambda-min <= lambda-max, got {lo}, {hi}")));
    }
    if count == 1 {
        return Ok(vec![lo]);
    }
    Ok((0..count)
        .map(|i| lo * (hi / lo).powf(i as f64 / (count - 1) as f64))
        .collect())
}

fn lin_grid(hi: f64, count: usize) -> Result<Vec<f64>, CliError> {
    if !(hi > 0.0) || count < 2 {
        return Err(CliError::Validation(format!("need r-max > 0 and at least 2 points, got {hi}, {count}")));
    }
    Ok((0..count).map(|i| hi * i as f64 / (count - 1) as f64).collect())
}

fn closed_form(p: &ModelParams, lambda: f64, r: f64) -> Option<C64> {
    let i = C64::new(0.0, 1.0);
    let e = (i * lambda * r).exp();
    match (p.m, p.n) {
        (1, 1) => Some(i * e / (2.0 * lambda)),
        (1, 3) => Some(e / (4.0 * PI * r)),
        (2, 1) => Some((i * e - (-lambda * r).exp()) / (4.0 * lambda.powi(3))),
        _ => None,
    }
}

pub fn kernel(c: &RunConfig, out: &mut Outputs, r_max: f64, r_points: usize, lambda_points: usize) -> Result<Vec<Check>, CliError> {
    let p = params(c)?;
    let lambdas = log_grid(c.lambda_min.unwrap_or(0.25), c.lambda_max.unwrap_or(4.0), lambda_points)?;
    let rs: Vec<f64> = lin_grid(r_max, r_points)?.into_iter().filter(|&r| r > 0.0 || p.n == 1).collect();
    let mut rows = Vec::new();
    let mut worst: Option<f64> = None;
    for sign in [SignBranch::Plus, SignBranch::Minus] {
        for &lambda in &lambdas {
            for &r in &rs {
                let v = higher_kernel(&p, sign, lambda, r).ctx("resolvent kernel")?;
                if let Some(plus) = closed_form(&p, lambda, r) {
                    let want = if sign == SignBranch::Plus { plus } else { plus.conj() };
                    let e = (v - want).norm() / want.norm().max(1.0);
                    worst = Some(worst.unwrap_or(0.0).max(e));
                }
                rows.push(vec![
                    p.m.to_string(),
                    p.n.to_string(),
                    sign.label().to_string(),
                    num(lambda),
                    num(r),
                    num(v.re),
                    num(v.im),
                ]);
            }
        }
    }
    out.csv("kernel.csv", &["m", "n", "sign", "lambda", "r", "re", "im"], rows)?;
    Ok(worst
        .map(|w| vec![Check::below("closed_form", CheckKind::Identity, w, c.tol("closed_form", 1e-10))])
        .unwrap_or_default())
}

pub fn free_kernel(c: &RunConfig, out: &mut Outputs, s_max: f64, s_points: usize) -> Result<Vec<Check>, CliError> {
    let p = params(c)?;
    let t_max = c.t_max.unwrap_or(64.0);
    if !(t_max >= 2f64.powi(-6)) {
        return Err(CliError::Validation(format!("t-max = {t_max} is below 2^-6")));
    }
    let times: Vec<f64> = (-6..=t_max.log2().floor() as i32).map(|e| 2f64.powi(e)).collect();
    let ss = lin_grid(s_max, s_points)?;
    let two_m = (2 * p.m) as f64;
    let mut rows = Vec::new();
    let mut similarity: f64 = 0.0;
    let mut sup: f64 = 0.0;
    let mut origin = Vec::new();
    for &s in &ss {
        let unit = free_value(&p, 1.0, s).ctx("free propagator")?;
        for &t in &times {
            let r = t.powf(1.0 / two_m) * s;
            let ps = propagator_sample(&p, t, r, Band::Full, 1.0).ctx("free propagator")?;
            let scaled = unit * t.powf(-(p.n as f64) / two_m);
            similarity = similarity.max((ps.value - scaled).norm() / (1.0 + scaled.norm()));
            sup = sup.max(ps.envelope_ratio);
            if s == 0.0 {
                origin.push((t, ps.value.norm()));
            }
            rows.push(vec![
                p.m.to_string(),
                p.n.to_string(),
                num(t),
                num(r),
                num(ps.value.re),
                num(ps.value.im),
                num(ps.envelope_ratio),
            ]);
        }
    }
    out.csv("free_kernel.csv", &["m", "n", "t", "r", "re", "im", "envelope_ratio"], rows)?;
    if c.svg {
        out.svg(
            "free_kernel.svg",
            &Plot {
                title: format!("free kernel at r = 0, (m, n) = ({}, {})", p.m, p.n),
                x_label: "t".into(),
                y_label: "|K(t, 0)|".into(),
                series: vec![("|K|".into(), origin)],
            },
        )?;
    }
    Ok(vec![
        Check::below("self_similarity", CheckKind::Identity, similarity, c.tol("self_similarity", 1e-8)),
        Check::flag("envelope_sup_finite", sup.is_finite()),
    ])
}

pub fn coeffs(c: &RunConfig, out: &mut Outputs) -> Result<Vec<Check>, CliError> {
    let p = params(c)?;
    let ec = expansion_coefficients(&p, 4 * p.m - p.n + 1).ctx("expansion coefficients")?;
    let mut rows = Vec::new();
    for (j, (ap, a)) in ec.a_plus.iter().zip(&ec.a).enumerate() {
        let ph = PI * (2.0 * j as f64 + (p.n - 2 * p.m) as f64) / (2 * p.m) as f64;
        let res = (C64::from_polar(1.0, ph) * ap - a).norm() / a.abs().max(1e-300);
        rows.push(vec![j.to_string(), num(ap.re), num(ap.im), num(*a), num(0.0), num(res)]);
    }
    out.csv("coeffs.csv", &["j", "re_a_plus", "im_a_plus", "re_a", "im_a", "residual"], rows)?;
    let b_rows = ec.b.iter().enumerate().map(|(l, b)| {
        let power = 2 * p.m - p.n + 2 * p.m * l as i64;
        vec![l.to_string(), power.to_string(), num(*b)]
    });
    out.csv("coeffs_b.csv", &["l", "power_of_r", "b"], b_rows)?;
    out.json("coeffs.json", &ec)?;
    Ok(vec![
        Check::below("phase", CheckKind::Identity, ec.phase_residual, c.tol("phase", 1e-10)),
        Check::below("contour_matching", CheckKind::Identity, ec.matching_residual, 1e-8),
    ])
}

fn space(c: &RunConfig, p: &ModelParams) -> Result<GridSpace, CliError> {
    let l = c.grid_half_width.unwrap_or(20.0);
    let n = c.grid_points.unwrap_or(401);
    let sp = if p.n == 1 {
        GridSpace::line(l, n)
    } else {
        GridSpace::radial(l, n)
    }
    .ctx("grid")?;
    sp.supports(p).ctx("grid")?;
    Ok(sp)
}

pub fn classify(c: &RunConfig, out: &mut Outputs) -> Result<Vec<Check>, CliError> {
    let p = params(c)?;
    let sp = space(c, &p)?;
    let pot = SampledPotential::new(&sp, &p, &c.potential).ctx("potential")?;
    let report = classify_resonance_with(&sp, &p, &pot, c.tol("svd_threshold", 1e-8)).ctx("classify")?;
    let fam = build_projection_family(&sp, &p, &pot, report.kind).ctx("projection family")?;
    let mut rows = Vec::new();
    for d in &report.singular_values {
        for (i, s) in d.smallest.iter().enumerate() {
            rows.push(vec![d.j.to_string(), i.to_string(), num(*s), num(d.threshold), num(d.sigma_max), d.kernel_dim.to_string()]);
        }
    }
    out.csv("singular_values.csv", &["j", "index", "sigma", "threshold", "sigma_max", "kernel_dim"], rows)?;
    out.json("classify.json", &report)?;
    println!("kind {}", report.kind);
    let mut checks = vec![Check::below("completeness", CheckKind::Identity, fam.completeness_residual(), 1e-9)];
    if report.oracle_kind.is_some() {
        checks.push(Check::flag("shooting_agreement", report.oracle_agreement));
    }
    if let Some(e) = report.profile_error {
        checks.push(Check::below("profile", CheckKind::Identity, e, c.tol("profile", 1e-5)));
    }
    if let Some(k) = c.k {
        checks.push(Check::flag("expected_kind", k == report.kind));
    }
    Ok(checks)
}

pub fn minv_expand(c: &RunConfig, out: &mut Outputs) -> Result<Vec<Check>, CliError> {
    let p = params(c)?;
    let sp = space(c, &p)?;
    let pot = SampledPotential::new(&sp, &p, &c.potential).ctx("potential")?;
    let k = match c.k {
        Some(k) => k,
        None => classify_resonance_with(&sp, &p, &pot, c.tol("svd_threshold", 1e-8)).ctx("classify")?.kind,
    };
    let fam = build_projection_family(&sp, &p, &pot, k).ctx("projection family")?;
    fam.require_complete().ctx("projection family")?;
    let lo = c.lambda_min.unwrap_or(2f64.powi(-8)).log2().ceil() as i32;
    let hi = c.lambda_max.unwrap_or(2f64.powi(-3)).log2().floor() as i32;
    if hi - lo < 2 {
        return Err(CliError::Validation("the dyadic lambda range needs at least three points".into()));
    }
    let lambdas = dyadic(lo, hi);
    let mut rows = Vec::new();
    let mut summary = Vec::new();
    let mut checks = Vec::new();
    for sign in [SignBranch::Plus, SignBranch::Minus] {
        let r = expansion(&sp, &p, &pot, &fam, sign, &lambdas).ctx("inverse expansion")?;
        for g in &r.gamma {
            let limit = r.blocks.iter().find(|b| b.i == g.i && b.j == g.j).map(|b| b.norm);
            for &(lambda, norm) in &g.samples {
                let rec = r.samples.iter().find(|s| s.lambda == lambda).map(|s| s.reconstruction_residual);
                rows.push(vec![
                    num(lambda),
                    sign.label().to_string(),
                    g.i.to_string(),
                    g.j.to_string(),
                    opt(limit),
                    num(norm),
                    opt(rec),
                ]);
            }
        }
        let rec = r.reconstruction.iter().map(|x| x.1).fold(0.0, f64::max);
        let lead = c.tol("leading_slope", 0.35);
        checks.push(Check::below(&format!("reconstruction_{}", sign.label()), CheckKind::Identity, rec, c.tol("reconstruction", 1e-8)));
        checks.push(Check::above(&format!("leading_slope_{}", sign.label()), CheckKind::Fit, r.leading_slope, lead));
        checks.push(Check::below(&format!("mid_block_{}", sign.label()), CheckKind::Identity, r.mid_block_error, c.tol("mid_block", 1e-6)));
        for g in &r.gamma {
            if let Some(s) = g.slope {
                let need = if g.special { 0.85 } else { 0.35 };
                checks.push(Check::above(&format!("gamma_slope_{}_{}_{}", sign.label(), g.i, g.j), CheckKind::Fit, s, need));
            }
        }
        summary.push(json!({
            "sign": sign.label(),
            "k": r.k,
            "leading_slope": r.leading_slope,
            "mid_block_error": r.mid_block_error,
            "vanishing_blocks_max": r.vanishing_blocks_max,
            "reconstruction": r.reconstruction,
            "gamma_slopes": r.gamma.iter().map(|g| json!({"i": g.i.to_string(), "j": g.j.to_string(), "slope": g.slope, "special": g.special})).collect::<Vec<_>>(),
            "lambda0": r.lambda0,
        }));
    }
    out.csv(
        "minv_expand.csv",
        &["lambda", "sign", "i", "j", "block_norm", "gamma_norm", "reconstruction_residual"],
        rows,
    )?;
    out.json("minv_expand.json", &summary)?;
    Ok(checks)
}

fn run_spec(c: &RunConfig, times: Vec<f64>, oracle: bool) -> RunSpec {
    let mut spec = RunSpec::new(c.m, c.n, c.potential.clone(), times);
    if let Some(l) = c.grid_half_width {
        spec.grid_half_width = l;
    }
    if let Some(n) = c.grid_points {
        spec.grid_points = n;
    }
    spec.stone.lambda_max = c.lambda_max;
    if oracle {
        spec.oracle = Some(OracleConfig::default());
    }
    spec
}

fn write_run(out: &mut Outputs, run: &PropagatorRun) -> Result<(), CliError> {
    let rows = run.samples.iter().map(|s| {
        vec![
            num(s.t),
            num(s.x),
            num(s.y),
            num(s.value.re),
            num(s.value.im),
            num(s.envelope_ratio),
            opt(s.oracle.map(|o| o.re)),
            opt(s.oracle.map(|o| o.im)),
            opt(s.abs_err),
        ]
    });
    out.csv(
        "propagate.csv",
        &["t", "x", "y", "re", "im", "envelope_ratio", "oracle_re", "oracle_im", "abs_err"],
        rows,
    )?;
    out.json(
        "propagate.json",
        &json!({
            "k": run.k,
            "additivity_residual": run.additivity_residual,
            "symmetry_residual": run.symmetry_residual,
            "interpolation_error": run.interpolation_error,
            "tail_bound": run.tail_bound,
            "lambda_max": run.lambda_max,
            "max_oracle_error": run.max_oracle_error(),
            "oracle_dropped_negative": run.oracle_dropped_negative,
            "oracle_dropped_localized": run.oracle_dropped_localized,
            "spec": run.spec,
        }),
    )
}

fn run_checks(c: &RunConfig, run: &PropagatorRun) -> Vec<Check> {
    let mut checks = vec![
        Check::below("additivity", CheckKind::Identity, run.additivity_residual, c.tol("additivity", 1e-10)),
        Check::below("symmetry", CheckKind::Identity, run.symmetry_residual, c.tol("symmetry", 1e-8)),
    ];
    if let Some(e) = run.max_oracle_error() {
        checks.push(Check::below("oracle", CheckKind::Identity, e, c.tol("oracle", 1e-4)));
    }
    checks
}

pub fn propagate(c: &RunConfig, out: &mut Outputs, oracle: bool) -> Result<Vec<Check>, CliError> {
    let times = match c.t_max {
        Some(t) => dyadic_times(t),
        None => vec![1.0, 2.0, 4.0],
    };
    let run = run_propagator(&run_spec(c, times, oracle)).ctx("propagate")?;
    write_run(out, &run)?;
    if c.svg {
        let mut series = Vec::new();
        for &x in &run.spec.points {
            for &y in &run.spec.points {
                let pts: Vec<(f64, f64)> = run
                    .samples
                    .iter()
                    .filter(|s| s.x == x && s.y == y)
                    .map(|s| (s.t, s.value.norm()))
                    .collect();
                if x <= y {
                    series.push((format!("x={x}, y={y}"), pts));
                }
            }
        }
        out.svg(
            "propagate.svg",
            &Plot {
                title: format!("|K(t, x, y)|, {}", c.potential.label()),
                x_label: "t".into(),
                y_label: "|K|".into(),
                series,
            },
        )?;
    }
    Ok(run_checks(c, &run))
}

pub fn decay(c: &RunConfig, out: &mut Outputs, oracle: bool) -> Result<Vec<Check>, CliError> {
    let times = dyadic_times(c.t_max.unwrap_or(16.0));
    let run = run_propagator(&run_spec(c, times, oracle)).ctx("propagate")?;
    write_run(out, &run)?;
    let fit = decay_fit(&run).ctx("decay fit")?;
    let rows = fit
        .rows
        .iter()
        .map(|r| vec![num(r.t), num(r.sup_abs), num(r.x), num(r.y), num(r.envelope_sup)]);
    out.csv("decay.csv", &["t", "sup_abs_kernel", "x", "y", "envelope_sup"], rows)?;
    out.json("decay_fit.json", &fit)?;
    let predicted = rational_to_f64(fit.predicted_h);
    println!("fitted h {:.4}, predicted {predicted} (k = {})", fit.fitted_h, fit.k);
    if c.svg {
        let first = fit.rows.first().map(|r| r.sup_abs * r.t.powf(predicted)).unwrap_or(1.0);
        out.svg(
            "decay.svg",
            &Plot {
                title: format!("sup |K(t)|, fitted h = {:.3}", fit.fitted_h),
                x_label: "t".into(),
                y_label: "sup |K|".into(),
                series: vec![
                    ("sup |K|".into(), fit.rows.iter().map(|r| (r.t, r.sup_abs)).collect()),
                    (format!("t^-{predicted}"), fit.rows.iter().map(|r| (r.t, first * r.t.powf(-predicted))).collect()),
                ],
            },
        )?;
    }
    let mut checks = run_checks(c, &run);
    checks.push(Check::below("decay_exponent", CheckKind::Fit, (fit.fitted_h - predicted).abs(), c.tol("slope", 0.15)));
    Ok(checks)
}

fn region_label(r: Region) -> &'static str {
    match r {
        Region::Inside => "inside",
        Region::Outside => "outside",
        Region::Stationary => "stationary",
        Region::Rapid => "rapid",
    }
}

pub fn lemma(c: &RunConfig, out: &mut Outputs, bs: &[f64]) -> Result<Vec<Check>, CliError> {
    if c.m < 1 {
        return Err(CliError::Validation(format!("m = {} must be positive", c.m)));
    }
    let tol = c.tol("slope", 0.15);
    let t_hi = if c.m == 1 { 16 } else { 14 };
    let mut rows = Vec::new();
    let mut checks = Vec::new();
    for &b in bs {
        let low = verify_lemma_bounds(c.m, b, &dyadic(4, t_hi), &dyadic(0, 20), true).ctx("low-energy oscillatory integral")?;
        let high = verify_lemma_bounds(c.m, b, &dyadic(-3, 6), &dyadic(0, 14), false).ctx("high-energy oscillatory integral")?;
        for (energy, fits) in [("low", &low.fits), ("high", &high.fits)] {
            for f in fits.iter() {
                let region = region_label(f.region);
                rows.push(vec![
                    c.m.to_string(),
                    num(b),
                    energy.to_string(),
                    region.to_string(),
                    opt(f.exponent_t),
                    opt(f.exponent_x),
                    opt(f.predicted_t),
                    opt(f.predicted_x),
                    num(f.residual),
                ]);
                if f.region == Region::Rapid {
                    let e = f.exponent_t.unwrap_or(0.0);
                    checks.push(Check::below(&format!("rapid_b{b}"), CheckKind::Fit, e, -(RAPID_ORDER as f64) + 1e-12));
                    continue;
                }
                for (axis, got, want) in [("t", f.exponent_t, f.predicted_t), ("x", f.exponent_x, f.predicted_x)] {
                    if let (Some(g), Some(w)) = (got, want) {
                        checks.push(Check::below(&format!("{region}_{axis}_b{b}"), CheckKind::Fit, (g - w).abs(), tol));
                    }
                }
            }
        }
    }
    out.csv(
        "lemma.csv",
        &["m", "b", "energy", "region", "fitted_t_slope", "fitted_x_slope", "predicted_t", "predicted_x", "residual"],
        rows,
    )?;
    Ok(checks)
}

pub fn selftest(c: &RunConfig) -> Result<Vec<Check>, CliError> {
    let mut checks = Vec::new();
    let mut worst: f64 = 0.0;
    for (m, n) in [(1, 1), (1, 3), (2, 1)] {
        let p = make_params(m, n).ctx("selftest")?;
        for (lambda, r) in [(0.5, 0.3), (1.0, 2.0), (3.0, 7.5)] {
            let v = higher_kernel(&p, SignBranch::Plus, lambda, r).ctx("selftest kernel")?;
            let w = closed_form(&p, lambda, r).expect("closed form");
            worst = worst.max((v - w).norm() / w.norm().max(1.0));
        }
    }
    checks.push(Check::below("closed_form_kernels", CheckKind::Identity, worst, c.tol("closed_form", 1e-10)));

    let b13 = expansion_coefficients(&make_params(1, 3).ctx("selftest")?, 1).ctx("selftest")?.b[0];
    let b21 = expansion_coefficients(&make_params(2, 1).ctx("selftest")?, 4).ctx("selftest")?.b[0];
    checks.push(Check::below("b0_1_3", CheckKind::Identity, (b13 - 1.0 / (4.0 * PI)).abs(), 1e-8));
    checks.push(Check::below("b0_2_1", CheckKind::Identity, (b21 - 1.0 / 12.0).abs(), 1e-8));

    let p = make_params(2, 1).ctx("selftest")?;
    let free_h = rational_to_f64(decay_exponent(&p, 0).ctx("selftest")?);
    checks.push(Check::below("free_decay_exponent", CheckKind::Identity, (free_h - 0.25).abs(), 1e-15));

    let shot = shooting_oracle(&p, &PotentialSpec::Zero, ShootingOptions::default()).ctx("selftest shooting")?;
    checks.push(Check::flag("free_polynomial_solutions", shot.classes.iter().all(|g| g.count == g.degree + 1)));

    let grid = ScatteringGrid::new(&p, &PotentialSpec::Zero, 8.0, 41, &[0.0, 2.0]).ctx("selftest")?;
    let kb = PerturbedKernel::new(grid, StoneConfig::default()).ctx("selftest")?.evaluate(1.0).ctx("selftest")?;
    let exact = free_value(&p, 1.0, 2.0).ctx("selftest")?;
    checks.push(Check::flag("zero_potential_is_free", kb.direct[(0, 1)] == exact));

    let sp = GridSpace::line(10.0, 101).ctx("selftest")?;
    let pot = SampledPotential::new(&sp, &p, &PotentialSpec::GaussWell { amplitude: 1.0, width: 1.0 }).ctx("selftest")?;
    let g1 = build_operator_g(&sp, &pot, 1).ctx("selftest")?;
    checks.push(Check::flag("g_symmetric", g1 == g1.transpose()));
    let g0 = build_operator_g(&sp, &pot, 0).ctx("selftest")?;
    let sv = g0.svd(false, false).singular_values;
    let mut s: Vec<f64> = sv.iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    checks.push(Check::below("constant_kernel_rank_one", CheckKind::Identity, s[1] / s[0], 1e-12));

    let fam = build_projection_family(&sp, &p, &pot, 0).ctx("selftest")?;
    let mut cross: f64 = 0.0;
    for (i, qi) in &fam.q_bases {
        for (j, qj) in &fam.q_bases {
            if i != j {
                cross = cross.max((qi.transpose() * qj).norm());
            }
        }
    }
    checks.push(Check::below("q_orthogonal", CheckKind::Identity, cross, 1e-9));
    Ok(checks)
}
