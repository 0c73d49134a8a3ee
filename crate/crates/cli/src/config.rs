//! Run configuration file.
//!
//! A single JSON document with four blocks. Spin indices are 1-based, as
//! in `I1x I2z`; state labels give one axis letter per spin, for example
//! `"x z"` or `"o y"`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tomo2d::dynamics::GradientModel;
use tomo2d::{
    coefficients_to_density, AcquisitionParams, CoefficientVector, DeviationDensityMatrix,
    SpinSystem,
};

use crate::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub system: SystemConfig,
    pub state: Vec<StateTerm>,
    #[serde(default)]
    pub acquisition: AcquisitionConfig,
    #[serde(default)]
    pub options: OptionsConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub n: usize,
    pub larmor_hz: Vec<f64>,
    #[serde(default)]
    pub couplings_hz: Vec<CouplingConfig>,
    pub t2_s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingConfig {
    pub spins: [usize; 2],
    pub hz: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateTerm {
    pub label: String,
    pub value: f64,
}

/// Unset fields fall back to the library defaults for the system.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AcquisitionConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_t1: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_t2: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dwell_t1_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dwell_t2_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha_deg: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta_deg: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptionsConfig {
    /// RMS magnitude of additive complex Gaussian noise on every signal.
    #[serde(default)]
    pub noise_rms: f64,
    /// Let zero-quantum coherences leak through the gradient.
    #[serde(default)]
    pub realistic_gradient: bool,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// 1-based spins whose cross-sections are fitted; all when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub select_spins: Option<Vec<usize>>,
    #[serde(default)]
    pub normalize: bool,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("tomo2d-out")
}

impl Default for OptionsConfig {
    fn default() -> Self {
        OptionsConfig {
            noise_rms: 0.0,
            realistic_gradient: false,
            seed: 0,
            output_dir: default_output_dir(),
            select_spins: None,
            normalize: false,
        }
    }
}

/// Random gradient delays used by `realistic_gradient`.
const GRADIENT_DRAWS: usize = 64;
const GRADIENT_MAX_DELAY_S: f64 = 0.1;

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig =
            serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Pretty JSON. Parsing it back yields an equal config.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    fn check(&self) -> Result<(), CliError> {
        let s = &self.system;
        if s.n == 0 {
            return Err(CliError::Config("system.n must be at least 1".into()));
        }
        if s.larmor_hz.len() != s.n {
            return Err(CliError::Config(format!(
                "system.larmor_hz has {} entries but system.n is {}",
                s.larmor_hz.len(),
                s.n
            )));
        }
        for (k, c) in s.couplings_hz.iter().enumerate() {
            if c.spins.iter().any(|&j| j == 0 || j > s.n) || c.spins[0] == c.spins[1] {
                return Err(CliError::Config(format!(
                    "system.couplings_hz[{k}].spins = {:?} must name two different spins in 1..={}",
                    c.spins, s.n
                )));
            }
        }
        if let Some(sel) = &self.options.select_spins {
            if let Some(bad) = sel.iter().find(|&&j| j == 0 || j > s.n) {
                return Err(CliError::Config(format!(
                    "options.select_spins contains {bad}, outside 1..={}",
                    s.n
                )));
            }
        }
        if !(self.options.noise_rms.is_finite() && self.options.noise_rms >= 0.0) {
            return Err(CliError::Config(
                "options.noise_rms must be a non-negative number".into(),
            ));
        }
        Ok(())
    }

    pub fn spin_system(&self) -> Result<SpinSystem, CliError> {
        let couplings: Vec<(usize, usize, f64)> = self
            .system
            .couplings_hz
            .iter()
            .map(|c| (c.spins[0] - 1, c.spins[1] - 1, c.hz))
            .collect();
        SpinSystem::new(self.system.larmor_hz.clone(), &couplings, self.system.t2_s)
            .map_err(|e| CliError::Config(format!("system: {e}")))
    }

    pub fn coefficients(&self) -> Result<CoefficientVector, CliError> {
        let mut q = CoefficientVector::new(self.system.n);
        for (k, t) in self.state.iter().enumerate() {
            let label = t
                .label
                .parse()
                .map_err(|e| CliError::Config(format!("state[{k}].label: {e}")))?;
            q.insert(label, t.value)
                .map_err(|e| CliError::Config(format!("state[{k}]: {e}")))?;
        }
        Ok(q)
    }

    pub fn density(&self) -> Result<DeviationDensityMatrix, CliError> {
        Ok(coefficients_to_density(&self.coefficients()?))
    }

    pub fn acquisition(&self, sys: &SpinSystem) -> Result<AcquisitionParams, CliError> {
        let a = &self.acquisition;
        let mut p = AcquisitionParams::defaults_for(sys);
        if let Some(v) = a.n_t1 {
            p.n_t1 = v;
        }
        if let Some(v) = a.n_t2 {
            p.n_t2 = v;
        }
        if let Some(v) = a.dwell_t1_s {
            p.dwell_t1_s = v;
        }
        if let Some(v) = a.dwell_t2_s {
            p.dwell_t2_s = v;
        }
        if let Some(v) = a.alpha_deg {
            p.alpha_rad = v.to_radians();
        }
        if let Some(v) = a.beta_deg {
            p.beta_rad = v.to_radians();
        }
        if self.options.realistic_gradient {
            p.gradient = GradientModel::ZeroQuantumSparing {
                draws: GRADIENT_DRAWS,
                max_delay_s: GRADIENT_MAX_DELAY_S,
                seed: self.options.seed,
            };
        }
        p.validate(sys)
            .map_err(|e| CliError::Config(format!("acquisition: {e}")))?;
        Ok(p)
    }

    /// 0-based spin selection for the library.
    pub fn select_spins(&self) -> Option<Vec<usize>> {
        self.options
            .select_spins
            .as_ref()
            .map(|v| v.iter().map(|j| j - 1).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "system": {"n": 1, "larmor_hz": [500.0], "t2_s": 0.05},
        "state": [{"label": "x", "value": 1.0}]
    }"#;

    #[test]
    fn defaults_fill_in() {
        let c = RunConfig::from_json(MINIMAL).unwrap();
        assert_eq!(c.options.output_dir, PathBuf::from("tomo2d-out"));
        assert_eq!(c.acquisition, AcquisitionConfig::default());
        let sys = c.spin_system().unwrap();
        let p = c.acquisition(&sys).unwrap();
        assert_eq!(p.n_t2, 512);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let bad = MINIMAL.replace("\"t2_s\"", "\"t2\": 1, \"t2_s\"");
        match RunConfig::from_json(&bad) {
            Err(CliError::Config(m)) => assert!(m.contains("t2"), "{m}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn field_errors_name_the_field() {
        let bad = MINIMAL.replace("[500.0]", "[500.0, 600.0]");
        match RunConfig::from_json(&bad) {
            Err(CliError::Config(m)) => assert!(m.contains("larmor_hz"), "{m}"),
            other => panic!("{other:?}"),
        }
        let bad = MINIMAL.replace("\"x\"", "\"q\"");
        let c = RunConfig::from_json(&bad).unwrap();
        match c.coefficients() {
            Err(CliError::Config(m)) => assert!(m.contains("state[0].label"), "{m}"),
            other => panic!("{other:?}"),
        }
    }
}
