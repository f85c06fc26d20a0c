use std::collections::BTreeMap;
use std::path::PathBuf;

use polyprop_core::PotentialSpec;
use serde::{Deserialize, Serialize};

/// Everything a run depends on. Unset optional fields take the subcommand default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub m: i64,
    pub n: i64,
    pub k: Option<i64>,
    pub potential: PotentialSpec,
    pub grid_half_width: Option<f64>,
    pub grid_points: Option<usize>,
    pub lambda_min: Option<f64>,
    pub lambda_max: Option<f64>,
    pub t_max: Option<f64>,
    pub out: PathBuf,
    pub svg: bool,
    pub seed: u64,
    pub tolerances: BTreeMap<String, f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            m: 2,
            n: 1,
            k: None,
            potential: PotentialSpec::GaussWell { amplitude: 0.1, width: 1.0 },
            grid_half_width: None,
            grid_points: None,
            lambda_min: None,
            lambda_max: None,
            t_max: None,
            out: PathBuf::from("polyprop-out"),
            svg: false,
            seed: 11,
            tolerances: BTreeMap::new(),
        }
    }
}

impl RunConfig {
    /// Tolerance `name`, overridden by `--tol name=value` when given.
    pub fn tol(&self, name: &str, default: f64) -> f64 {
        self.tolerances.get(name).copied().unwrap_or(default)
    }
}

/// Parses a potential given by name, as inline JSON or as `@file.json`.
pub fn parse_potential(text: &str) -> Result<PotentialSpec, String> {
    let json = if let Some(path) = text.strip_prefix('@') {
        std::fs::read_to_string(path).map_err(|e| format!("cannot read potential file {path}: {e}"))?
    } else if text.trim_start().starts_with('{') {
        text.to_string()
    } else {
        return match text {
            "zero" => Ok(PotentialSpec::Zero),
            "bump_resonant" | "paper_resonant" => Ok(PotentialSpec::BumpResonant),
            "kind_one_resonant" => Ok(PotentialSpec::KindOneResonant),
            "gauss_well" => Ok(PotentialSpec::GaussWell { amplitude: 1.0, width: 1.0 }),
            "small_bump" => Ok(PotentialSpec::GaussWell { amplitude: 0.1, width: 1.0 }),
            other => Err(format!(
                "unknown potential '{other}'; use zero, gauss_well, small_bump, bump_resonant, kind_one_resonant or a JSON spec"
            )),
        };
    };
    serde_json::from_str(&json).map_err(|e| format!("invalid potential spec: {e}"))
}

/// Parses `NAME=VALUE`.
pub fn parse_tol(text: &str) -> Result<(String, f64), String> {
    let (name, value) = text
        .split_once('=')
        .ok_or_else(|| format!("tolerance '{text}' is not NAME=VALUE"))?;
    let v: f64 = value
        .parse()
        .map_err(|_| format!("tolerance value '{value}' is not a number"))?;
    if !(v > 0.0 && v.is_finite()) {
        return Err(format!("tolerance {name} must be positive"));
    }
    Ok((name.to_string(), v))
}
