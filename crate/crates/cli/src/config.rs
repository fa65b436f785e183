//! Experiment configuration files: TOML, or JSON when the file name ends in
//! `.json`. Every struct rejects unknown keys.

use std::path::{Path, PathBuf};

use ipsplice_core::arms::DefectBudget;
use ipsplice_core::splice::DerivationMode;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

/// A parsed config together with the exact bytes it came from.
#[derive(Debug, Clone)]
pub struct Loaded<T> {
    pub config: T,
    pub text: String,
    pub sha256: String,
    pub format: Format,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Toml,
    Json,
}

impl Format {
    pub fn of(path: &Path) -> Format {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("json") => Format::Json,
            _ => Format::Toml,
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            Format::Toml => "toml",
            Format::Json => "json",
        }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Parse and validate `text`. Messages carry the line of the offending key
/// when the parser reports one.
pub fn parse<T: DeserializeOwned + Validate>(text: &str, format: Format) -> Result<Loaded<T>, CliError> {
    let config: T = match format {
        Format::Toml => toml::from_str(text).map_err(|e| {
            let line = e
                .span()
                .map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1);
            CliError::Config {
                line,
                message: e.message().to_string(),
            }
        })?,
        Format::Json => serde_json::from_str(text).map_err(|e| CliError::Config {
            line: Some(e.line()).filter(|&l| l > 0),
            message: e.to_string(),
        })?,
    };
    config.validate()?;
    Ok(Loaded {
        config,
        text: text.to_string(),
        sha256: sha256_hex(text.as_bytes()),
        format,
    })
}

pub fn load<T: DeserializeOwned + Validate>(path: &Path) -> Result<Loaded<T>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    parse(&text, Format::of(path))
}

pub trait Validate {
    fn validate(&self) -> Result<(), CliError>;
    fn output_dir(&self) -> Option<&Path>;
}

fn invalid(field: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Invalid(format!("{field}: {msg}"))
}

fn check_positive(field: &str, v: u64) -> Result<(), CliError> {
    if v == 0 {
        return Err(invalid(field, "must be at least 1"));
    }
    Ok(())
}

fn check_unit(field: &str, v: f64) -> Result<(), CliError> {
    if !(0.0..=1.0).contains(&v) {
        return Err(invalid(field, format!("{v} is not in [0, 1]")));
    }
    Ok(())
}

fn check_nonempty<T>(field: &str, v: &[T]) -> Result<(), CliError> {
    if v.is_empty() {
        return Err(invalid(field, "must not be empty"));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeName {
    Threshold,
    Invasion,
}

impl ModeName {
    pub fn with_lambda(self, lambda: f64) -> DerivationMode {
        match self {
            ModeName::Threshold => DerivationMode::Threshold,
            ModeName::Invasion => DerivationMode::Invasion { lambda },
        }
    }
}

/// `budget = "none"`, `budget = { per_arm = K }` or `budget = { total = M }`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BudgetConfig {
    None,
    PerArm(u32),
    Total(u32),
}

impl From<BudgetConfig> for DefectBudget {
    fn from(b: BudgetConfig) -> Self {
        match b {
            BudgetConfig::None => DefectBudget::None,
            BudgetConfig::PerArm(k) => DefectBudget::PerArm(k),
            BudgetConfig::Total(m) => DefectBudget::Total(m),
        }
    }
}

fn default_tail_fraction() -> f64 {
    0.1
}

fn default_lambda() -> f64 {
    4.0
}

fn default_half() -> f64 {
    0.5
}

fn default_m_cap() -> u32 {
    30
}

fn default_modes() -> Vec<ModeName> {
    vec![ModeName::Threshold]
}

fn default_l() -> i32 {
    4
}

fn default_delta() -> f64 {
    0.1
}

fn default_rotations() -> u32 {
    8
}

fn default_budget() -> BudgetConfig {
    BudgetConfig::None
}

fn default_tol() -> f64 {
    1e-3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InvadeConfig {
    pub seed: u64,
    pub runs: u64,
    pub steps: Option<u64>,
    pub exit_radius: Option<i32>,
    #[serde(default = "default_tail_fraction")]
    pub tail_fraction: f64,
    pub output_dir: Option<PathBuf>,
}

impl Validate for InvadeConfig {
    fn validate(&self) -> Result<(), CliError> {
        check_positive("runs", self.runs)?;
        if self.steps.is_none() && self.exit_radius.is_none() {
            return Err(invalid("steps", "give steps, exit_radius or both"));
        }
        if let Some(s) = self.steps {
            check_positive("steps", s)?;
        }
        if self.exit_radius.is_some_and(|r| r < 1) {
            return Err(invalid("exit_radius", "must be at least 1"));
        }
        if !(self.tail_fraction > 0.0 && self.tail_fraction <= 1.0) {
            return Err(invalid("tail_fraction", "must lie in (0, 1]"));
        }
        Ok(())
    }

    fn output_dir(&self) -> Option<&Path> {
        self.output_dir.as_deref()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrossingsConfig {
    pub seed: u64,
    pub n: Vec<i32>,
    pub samples: u64,
    #[serde(default = "default_modes")]
    pub modes: Vec<ModeName>,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default = "default_m_cap")]
    pub m_cap: u32,
    pub output_dir: Option<PathBuf>,
}

fn check_scales(field: &str, n: &[i32], min: i32) -> Result<(), CliError> {
    check_nonempty(field, n)?;
    if let Some(bad) = n.iter().find(|&&v| v < min) {
        return Err(invalid(field, format!("{bad} is below {min}")));
    }
    Ok(())
}

fn check_lambda(lambda: f64) -> Result<(), CliError> {
    if !(lambda.is_finite() && lambda >= 1.0) {
        return Err(invalid("lambda", format!("{lambda} is below 1")));
    }
    Ok(())
}

impl Validate for CrossingsConfig {
    fn validate(&self) -> Result<(), CliError> {
        check_scales("n", &self.n, 8)?;
        check_positive("samples", self.samples)?;
        check_nonempty("modes", &self.modes)?;
        check_lambda(self.lambda)?;
        check_positive("m_cap", self.m_cap as u64)
    }

    fn output_dir(&self) -> Option<&Path> {
        self.output_dir.as_deref()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArmsConfig {
    pub seed: u64,
    /// Outer scale.
    pub n: i32,
    /// Inner scales.
    pub s: Vec<i32>,
    pub samples: u64,
    #[serde(default = "default_half")]
    pub p: f64,
    #[serde(default = "default_half")]
    pub q: f64,
    #[serde(default = "default_budget")]
    pub budget: BudgetConfig,
    #[serde(default)]
    pub center: [i32; 2],
    #[serde(default = "default_rotations")]
    pub rotations: u32,
    pub output_dir: Option<PathBuf>,
}

impl Validate for ArmsConfig {
    fn validate(&self) -> Result<(), CliError> {
        check_positive("samples", self.samples)?;
        check_unit("p", self.p)?;
        check_unit("q", self.q)?;
        check_positive("rotations", self.rotations as u64)?;
        check_nonempty("s", &self.s)?;
        if let Some(bad) = self.s.iter().find(|&&s| s < 1 || s >= self.n) {
            return Err(invalid("s", format!("{bad} is not in [1, n)")));
        }
        Ok(())
    }

    fn output_dir(&self) -> Option<&Path> {
        self.output_dir.as_deref()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PnConfig {
    pub n: Vec<i32>,
    #[serde(default = "default_tol")]
    pub tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorrlenConfig {
    pub seed: u64,
    pub p: Vec<f64>,
    pub n: Vec<i32>,
    pub samples: u64,
    #[serde(default = "default_delta")]
    pub delta: f64,
    pub p_n: Option<PnConfig>,
    pub output_dir: Option<PathBuf>,
}

fn check_delta(delta: f64) -> Result<(), CliError> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(invalid("delta", format!("{delta} is not in (0, 1)")));
    }
    Ok(())
}

impl Validate for CorrlenConfig {
    fn validate(&self) -> Result<(), CliError> {
        check_nonempty("p", &self.p)?;
        if let Some(bad) = self.p.iter().find(|&&p| !(p > 0.5 && p <= 1.0)) {
            return Err(invalid("p", format!("{bad} is not in (1/2, 1]")));
        }
        check_scales("n", &self.n, 1)?;
        check_positive("samples", self.samples)?;
        check_delta(self.delta)?;
        if let Some(pn) = &self.p_n {
            check_scales("p_n.n", &pn.n, 2)?;
            if !(pn.tol > 0.0) {
                return Err(invalid("p_n.tol", "must be positive"));
            }
        }
        Ok(())
    }

    fn output_dir(&self) -> Option<&Path> {
        self.output_dir.as_deref()
    }
}

/// `m = 5`, or `m = "mode"` for the most frequent `N` of a pilot run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MPolicy {
    Fixed(u32),
    Keyword(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VarianceConfig {
    pub m: MPolicy,
    #[serde(default)]
    pub pilot_samples: u64,
    pub outer_samples: u64,
    pub inner_samples: u64,
    pub deltas: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StabilityConfig {
    pub samples: u64,
    #[serde(default = "default_l")]
    pub l: i32,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    pub p: Option<f64>,
    #[serde(default = "default_delta")]
    pub pn_delta: f64,
    #[serde(default)]
    pub pn_samples: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpliceConfig {
    pub seed: u64,
    pub n: Vec<i32>,
    pub epsilon: Vec<f64>,
    pub samples: u64,
    #[serde(default = "default_modes")]
    pub modes: Vec<ModeName>,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default = "default_m_cap")]
    pub m_cap: u32,
    #[serde(default)]
    pub swap_check: bool,
    pub variance: Option<VarianceConfig>,
    pub stability: Option<StabilityConfig>,
    pub output_dir: Option<PathBuf>,
}

impl Validate for SpliceConfig {
    fn validate(&self) -> Result<(), CliError> {
        check_scales("n", &self.n, 8)?;
        check_nonempty("epsilon", &self.epsilon)?;
        if let Some(bad) = self.epsilon.iter().find(|&&e| !(e > 0.0 && e <= 1.0)) {
            return Err(invalid("epsilon", format!("{bad} is not in (0, 1]")));
        }
        check_positive("samples", self.samples)?;
        check_nonempty("modes", &self.modes)?;
        check_lambda(self.lambda)?;
        check_positive("m_cap", self.m_cap as u64)?;
        if let Some(v) = &self.variance {
            if let MPolicy::Keyword(k) = &v.m {
                if k != "mode" {
                    return Err(invalid("variance.m", format!("expected an integer or \"mode\", got \"{k}\"")));
                }
                check_positive("variance.pilot_samples", v.pilot_samples)?;
            }
            check_positive("variance.outer_samples", v.outer_samples)?;
            if v.inner_samples < 2 {
                return Err(invalid("variance.inner_samples", "must be at least 2"));
            }
            check_nonempty("variance.deltas", &v.deltas)?;
            if let Some(bad) = v.deltas.iter().find(|&&d| !(d > 0.0 && d <= 0.5)) {
                return Err(invalid("variance.deltas", format!("{bad} is not in (0, 1/2]")));
            }
        }
        if let Some(s) = &self.stability {
            check_positive("stability.samples", s.samples)?;
            if s.l < 1 || self.n.iter().any(|&n| n / s.l < 2) {
                return Err(invalid("stability.l", "n/l must be at least 2 for every n"));
            }
            check_lambda(s.lambda)?;
            match s.p {
                Some(p) if !(p > 0.0 && p <= 1.0) => {
                    return Err(invalid("stability.p", format!("{p} is not in (0, 1]")));
                }
                Some(_) => {}
                None => {
                    check_positive("stability.pn_samples", s.pn_samples)?;
                    check_delta(s.pn_delta)?;
                }
            }
        }
        Ok(())
    }

    fn output_dir(&self) -> Option<&Path> {
        self.output_dir.as_deref()
    }
}

fn default_duality_configs() -> u64 {
    200
}

fn default_flip_configs() -> u64 {
    2000
}

fn default_rect_samples() -> u64 {
    4000
}

/// Sizes of the quick oracle suite run by `verify`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_duality_configs")]
    pub duality_configs: u64,
    #[serde(default = "default_flip_configs")]
    pub flip_configs: u64,
    #[serde(default = "default_rect_samples")]
    pub rectangle_samples: u64,
    pub output_dir: Option<PathBuf>,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            seed: 0,
            duality_configs: default_duality_configs(),
            flip_configs: default_flip_configs(),
            rectangle_samples: default_rect_samples(),
            output_dir: None,
        }
    }
}

impl Validate for VerifyConfig {
    fn validate(&self) -> Result<(), CliError> {
        check_positive("duality_configs", self.duality_configs)?;
        check_positive("rectangle_samples", self.rectangle_samples)
    }

    fn output_dir(&self) -> Option<&Path> {
        self.output_dir.as_deref()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn missing_field_is_named() {
        let err = parse::<SpliceConfig>("seed = 1\nepsilon = [0.25]\nsamples = 10\n", Format::Toml).unwrap_err();
        assert!(err.to_string().contains("`n`"), "{err}");
    }

    #[test]
    fn bad_value_is_line_anchored() {
        let text = "seed = 1\nn = [64]\nepsilon = [0.25]\nsamples = \"many\"\n";
        let err = parse::<SpliceConfig>(text, Format::Toml).unwrap_err();
        assert!(err.to_string().starts_with("line 4:"), "{err}");
        let err = parse::<SpliceConfig>(
            "seed = 1\nn = [64]\nepsilon = [2.0]\nsamples = 10\n",
            Format::Toml,
        )
        .unwrap_err();
        assert!(err.to_string().contains("epsilon"));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(parse::<ArmsConfig>("seed = 1\nn = 8\ns = [2]\nsamples = 3\nsamlpes = 3\n", Format::Toml).is_err());
    }

    #[test]
    fn json_and_toml_agree() {
        let t = parse::<SpliceConfig>(
            "seed = 3\nn = [32]\nepsilon = [0.25, 0.125]\nsamples = 10\nmodes = [\"invasion\"]\n[variance]\nm = \"mode\"\npilot_samples = 5\nouter_samples = 2\ninner_samples = 2\ndeltas = [0.1]\n",
            Format::Toml,
        )
        .unwrap();
        let j = parse::<SpliceConfig>(
            r#"{"seed": 3, "n": [32], "epsilon": [0.25, 0.125], "samples": 10, "modes": ["invasion"],
                "variance": {"m": "mode", "pilot_samples": 5, "outer_samples": 2, "inner_samples": 2, "deltas": [0.1]}}"#,
            Format::Json,
        )
        .unwrap();
        assert_eq!(t.config, j.config);
        assert_ne!(t.sha256, j.sha256);
        assert_eq!(t.sha256.len(), 64);
    }

    #[test]
    fn budgets_parse() {
        let a = parse::<ArmsConfig>("seed = 1\nn = 8\ns = [2]\nsamples = 3\nbudget = { per_arm = 2 }\n", Format::Toml).unwrap();
        assert_eq!(DefectBudget::from(a.config.budget), DefectBudget::PerArm(2));
        let b = parse::<ArmsConfig>("seed = 1\nn = 8\ns = [2]\nsamples = 3\nbudget = \"none\"\n", Format::Toml).unwrap();
        assert_eq!(b.config.budget, BudgetConfig::None);
    }

    #[test]
    fn m_policy_keyword_is_checked() {
        let text = "seed = 1\nn = [16]\nepsilon = [0.25]\nsamples = 3\n[variance]\nm = \"median\"\nouter_samples = 2\ninner_samples = 2\ndeltas = [0.1]\n";
        assert!(parse::<SpliceConfig>(text, Format::Toml).is_err());
    }
}
