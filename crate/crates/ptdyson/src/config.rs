//! JSON scenario files.

use std::path::Path;

use serde::{Deserialize, Serialize};

use ptdyson_core::dynamic_map::{
    alpha_closed_form, recover, select_branches, Branches, IntegrationConstants, MapCoefficients, Sign, TimeWindow,
};
use ptdyson_core::model::{classify, ModelParams};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("malformed config: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

fn invalid<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError::Invalid(msg.into()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub m: f64,
    pub omega_x: f64,
    pub omega_y: f64,
    pub lambda: f64,
}

/// Either closed-form integration constants (c₁..c₄ of the regime basis)
/// or the four map coefficients (α_-, θ_+, α_+, θ_-) at the window start.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum ConstantsConfig {
    Integration([f64; 4]),
    Coefficients([f64; 4]),
}

impl Default for ConstantsConfig {
    fn default() -> Self {
        ConstantsConfig::Integration([0.1, 0.0, 0.0, 0.0])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    pub start: f64,
    pub end: f64,
    pub samples: usize,
}

impl Default for TimeConfig {
    fn default() -> Self {
        TimeConfig { start: 0.0, end: 10.0, samples: 100 }
    }
}

/// `points`/`extent` set the square 2D grid [-extent, extent]² for the
/// quasi-norm; `fine_points`/`fine_extent` the grid used for 1D norms and
/// the TDSE residual (which is repeated at 2·fine_points − 1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub points: usize,
    pub extent: f64,
    pub fine_points: usize,
    pub fine_extent: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig { points: 48, extent: 8.0, fine_points: 161, fine_extent: 8.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Relative anti-Hermitian residual of h(t) and the quasi-Hermiticity defect.
    pub hermiticity: f64,
    pub ode: f64,
    pub ermakov: f64,
    /// Relative drift allowed for grid quantities (quasi-norm).
    pub grid: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { hermiticity: 1e-8, ode: 1e-10, ermakov: 1e-8, grid: 1e-4 }
    }
}

/// `n` is the truncation for metric spectra and the algebra oracle;
/// `work`/`keep` control the number-basis quasi-Hermiticity oracle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FockConfig {
    pub n: usize,
    pub spectrum: usize,
    pub work: usize,
    pub keep: usize,
}

impl Default for FockConfig {
    fn default() -> Self {
        FockConfig { n: 12, spectrum: 40, work: 20, keep: 4 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SignConfig {
    #[serde(rename = "+")]
    Plus,
    #[serde(rename = "-")]
    Minus,
}

impl From<SignConfig> for Sign {
    fn from(s: SignConfig) -> Self {
        match s {
            SignConfig::Plus => Sign::Plus,
            SignConfig::Minus => Sign::Minus,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AutoTag {
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BranchesConfig {
    Auto(AutoTag),
    Fixed([SignConfig; 2]),
}

impl Default for BranchesConfig {
    fn default() -> Self {
        BranchesConfig::Auto(AutoTag::Auto)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub model: ModelConfig,
    #[serde(default)]
    pub constants: ConstantsConfig,
    #[serde(default)]
    pub time: TimeConfig,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub fock: FockConfig,
    #[serde(default)]
    pub branches: BranchesConfig,
}

// θ_+ = −arcsin(mα̇_-/2) is sampled this much finer than the output grid
const DOMAIN_REFINE: usize = 20;

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let cfg: ScenarioConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        Self::from_json(&text)
    }

    pub fn params(&self) -> Result<ModelParams, ConfigError> {
        let m = &self.model;
        ModelParams::new(m.m, m.omega_x, m.omega_y, m.lambda).map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    pub fn window(&self) -> TimeWindow {
        TimeWindow { start: self.time.start, end: self.time.end, samples: self.time.samples }
    }

    pub fn integration_constants(&self, p: &ModelParams) -> Option<IntegrationConstants> {
        match self.constants {
            ConstantsConfig::Integration(c) => Some(IntegrationConstants { kind: classify(p, p.default_tolerance()).kind, c }),
            ConstantsConfig::Coefficients(_) => None,
        }
    }

    pub fn fixed_branches(&self) -> Option<Branches> {
        match self.branches {
            BranchesConfig::Auto(_) => None,
            BranchesConfig::Fixed([a, b]) => Some(Branches::new(a.into(), b.into())),
        }
    }

    /// Map coefficients at the window start. Recovery from integration
    /// constants can fail for module reasons (e.g. at the exceptional point).
    pub fn initial_coefficients(&self, p: &ModelParams) -> ptdyson_core::Result<MapCoefficients> {
        let t0 = self.time.start;
        match self.constants {
            ConstantsConfig::Coefficients(c) => Ok(MapCoefficients::from_array(t0, c)),
            ConstantsConfig::Integration(_) => {
                let k = self.integration_constants(p).unwrap();
                let jet = alpha_closed_form(&k, p, t0)?;
                let branches = match self.fixed_branches() {
                    Some(b) => b,
                    None => select_branches(&jet, p, None)?,
                };
                recover(&jet, p, branches)
            }
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let p = self.params()?;
        let t = &self.tolerances;
        for (name, v) in [("hermiticity", t.hermiticity), ("ode", t.ode), ("ermakov", t.ermakov), ("grid", t.grid)] {
            if !(v.is_finite() && v > 0.0) {
                return invalid(format!("tolerance {name} must be positive"));
            }
        }
        if self.time.samples < 2 {
            return invalid("time.samples must be at least 2");
        }
        if !(self.time.start.is_finite() && self.time.end.is_finite() && self.time.end > self.time.start) {
            return invalid("time window must satisfy start < end");
        }
        let g = &self.grid;
        if g.points < 16 || g.fine_points < 16 || !(g.extent > 0.0) || !(g.fine_extent > 0.0) {
            return invalid("grids need at least 16 points and a positive extent");
        }
        if self.fock.n < 4 || self.fock.spectrum < 4 || self.fock.keep == 0 || self.fock.keep >= self.fock.work {
            return invalid("fock truncations too small or keep >= work");
        }
        match self.constants {
            ConstantsConfig::Coefficients(c) => {
                if c.iter().any(|v| !v.is_finite()) {
                    return invalid("coefficients must be finite");
                }
                if !(c[1].abs() < std::f64::consts::FRAC_PI_2) {
                    return invalid("theta_plus must lie in (-pi/2, pi/2)");
                }
            }
            ConstantsConfig::Integration(_) => {
                let k = self.integration_constants(&p).unwrap();
                let n = DOMAIN_REFINE * self.time.samples;
                let w = TimeWindow { samples: n, ..self.window() };
                for s in w.sample_times() {
                    let jet = alpha_closed_form(&k, &p, s).map_err(|e| ConfigError::Invalid(e.to_string()))?;
                    if !((p.m() * jet.a1).abs() < 2.0) {
                        return invalid(format!(
                            "constants leave the theta_plus domain: |m alpha_-'| = {} at t = {s}",
                            (p.m() * jet.a1).abs()
                        ));
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"{"model": {"m": 1, "omega_x": 1, "omega_y": 2, "lambda": 1}}"#;

    #[test]
    fn defaults_fill_in() {
        let cfg = ScenarioConfig::from_json(BASE).unwrap();
        assert_eq!(cfg.constants, ConstantsConfig::Integration([0.1, 0.0, 0.0, 0.0]));
        assert_eq!(cfg.fock.n, 12);
        assert_eq!(cfg.branches, BranchesConfig::Auto(AutoTag::Auto));
    }

    #[test]
    fn branches_parse() {
        let j = r#"{"model": {"m": 1, "omega_x": 1, "omega_y": 2, "lambda": 1}, "branches": ["+", "-"]}"#;
        let cfg = ScenarioConfig::from_json(j).unwrap();
        assert_eq!(cfg.fixed_branches(), Some(Branches::new(Sign::Plus, Sign::Minus)));
        let bad = j.replace("\"-\"]", "\"x\"]");
        assert!(matches!(ScenarioConfig::from_json(&bad), Err(ConfigError::Parse(_))));
    }

    #[test]
    fn unknown_keys_rejected() {
        let j = r#"{"model": {"m": 1, "omega_x": 1, "omega_y": 2, "lamda": 1}}"#;
        assert!(matches!(ScenarioConfig::from_json(j), Err(ConfigError::Parse(_))));
        let j = r#"{"model": {"m": 1, "omega_x": 1, "omega_y": 2, "lambda": 1}, "extra": 0}"#;
        assert!(matches!(ScenarioConfig::from_json(j), Err(ConfigError::Parse(_))));
    }

    #[test]
    fn validation() {
        let with = |extra: &str| format!(r#"{{"model": {{"m": 1, "omega_x": 1, "omega_y": 2, "lambda": 1}}, {extra}}}"#);
        let bad = [
            r#""tolerances": {"ode": 0}"#,
            r#""time": {"start": 0, "end": 1, "samples": 1}"#,
            // amplitude·Δ_+ = 1·3.08 > 2
            r#""constants": {"integration": [1, 0, 0, 0]}"#,
            r#""constants": {"coefficients": [0, 2, 0, 0]}"#,
        ];
        for b in bad {
            assert!(matches!(ScenarioConfig::from_json(&with(b)), Err(ConfigError::Invalid(_))), "{b}");
        }
        assert!(ScenarioConfig::from_json(&with(r#""constants": {"coefficients": [1, 0, 1.5, 0.25]}"#)).is_ok());
    }
}
