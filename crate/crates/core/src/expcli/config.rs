//! Experiment configuration, read from flat TOML.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::biotsavart::{AzimuthalRule, Desingularization, KernelConfig};
use crate::error::{LabError, Result};
use crate::initdata::BubbleParams;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    LinfInflation,
    SobolevInflation,
    KeyLemma,
    NormsBaseline,
    Convergence,
}

impl Scenario {
    pub const ALL: [Scenario; 5] = [
        Scenario::LinfInflation,
        Scenario::SobolevInflation,
        Scenario::KeyLemma,
        Scenario::NormsBaseline,
        Scenario::Convergence,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::LinfInflation => "linf-inflation",
            Scenario::SobolevInflation => "sobolev-inflation",
            Scenario::KeyLemma => "key-lemma",
            Scenario::NormsBaseline => "norms-baseline",
            Scenario::Convergence => "convergence",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = LabError;

    fn from_str(s: &str) -> Result<Self> {
        Scenario::ALL
            .into_iter()
            .find(|sc| sc.name() == s)
            .ok_or_else(|| LabError::Config(format!("unknown scenario '{s}'")))
    }
}

fn default_n_theta() -> usize {
    256
}
fn default_blob_factor() -> f64 {
    0.5
}
fn default_cadence() -> usize {
    10
}
fn default_grid() -> usize {
    128
}
fn default_grad_grid() -> usize {
    512
}
fn default_targets() -> usize {
    50
}
fn default_n0_max() -> u32 {
    6
}
fn default_q_list() -> Vec<f64> {
    vec![1.0, 2.0, 3.0, 6.0]
}

/// All keys of the configuration file. Keys with a `default` may be omitted;
/// unknown keys are rejected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Must agree with the scenario named on the command line when present.
    pub scenario: Option<Scenario>,
    pub n0: u32,
    pub m: u32,
    pub alpha: f64,
    /// Particles per side of each half-bubble.
    pub resolution: usize,
    #[serde(default = "default_n_theta")]
    pub n_theta: usize,
    #[serde(default = "default_quadrature")]
    pub quadrature: AzimuthalRule,
    /// Blob radius in units of the local particle spacing.
    #[serde(default = "default_blob_factor")]
    pub blob_factor: f64,
    /// Time step; chosen from the initial velocity when absent.
    pub dt: Option<f64>,
    /// Horizon; `T(m) = c1 (1-α) m^{(α-1)/2}` when absent and `c1` is set.
    pub t_end: Option<f64>,
    pub c1: Option<f64>,
    #[serde(default = "default_cadence")]
    pub cadence: usize,
    /// Radial samples per bubble for gridded norms.
    #[serde(default = "default_grid")]
    pub grid_nr: usize,
    /// Samples per axis for the gradient norm in the remainder bounds.
    #[serde(default = "default_grad_grid")]
    pub grad_grid: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_targets")]
    pub targets: usize,
    #[serde(default = "default_n0_max")]
    pub n0_max: u32,
    #[serde(default = "default_q_list")]
    pub q_list: Vec<f64>,
    /// Extra values of `m` for the growth-exponent fit.
    #[serde(default)]
    pub m_sweep: Vec<u32>,
    /// Run with `ω → -ω`.
    #[serde(default)]
    pub negate: bool,
    pub output_dir: Option<PathBuf>,
}

fn default_quadrature() -> AzimuthalRule {
    AzimuthalRule::Elliptic
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| LabError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| LabError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    pub fn params(&self) -> Result<BubbleParams<f64>> {
        BubbleParams::new(self.n0, self.m, self.alpha)
    }

    pub fn kernel(&self) -> KernelConfig<f64> {
        KernelConfig {
            n_theta: self.n_theta,
            delta: Desingularization::LocalSpacing(self.blob_factor),
            rule: self.quadrature,
        }
    }

    /// `t_end`, or `T(m)` from `c1`.
    pub fn horizon(&self) -> Result<f64> {
        match (self.t_end, self.c1) {
            (Some(t), _) => Ok(t),
            (None, Some(c1)) => {
                let a = self.alpha;
                Ok(c1 * (1.0 - a) * (self.m as f64).powf(0.5 * (a - 1.0)))
            }
            (None, None) => Err(LabError::Config("either t_end or c1 is required".into())),
        }
    }

    /// Checks ranges and that the file agrees with the requested scenario.
    pub fn validate_for(&self, scenario: Scenario) -> Result<()> {
        if let Some(s) = self.scenario {
            if s != scenario {
                return Err(LabError::Config(format!(
                    "config is for scenario '{s}' but '{scenario}' was requested"
                )));
            }
        }
        self.params()?;
        self.kernel().validate()?;
        let positive = [
            ("resolution", self.resolution as f64),
            ("blob_factor", self.blob_factor),
            ("cadence", self.cadence as f64),
            ("grid_nr", self.grid_nr as f64),
            ("grad_grid", self.grad_grid as f64),
            ("targets", self.targets as f64),
            ("n0_max", self.n0_max as f64),
        ];
        for (name, v) in positive {
            if !(v > 0.0) {
                return Err(LabError::Config(format!("{name} must be positive")));
            }
        }
        for (name, v) in [("dt", self.dt), ("t_end", self.t_end), ("c1", self.c1)] {
            if let Some(v) = v {
                if !(v > 0.0 && v.is_finite()) && !(name == "t_end" && v == 0.0) {
                    return Err(LabError::Config(format!("{name} must be positive, got {v}")));
                }
            }
        }
        if self.q_list.iter().any(|q| !(*q >= 1.0)) {
            return Err(LabError::Config("q_list entries must be >= 1".into()));
        }
        if self.resolution < 8 {
            return Err(LabError::Config("resolution must be >= 8".into()));
        }
        match scenario {
            Scenario::LinfInflation | Scenario::SobolevInflation => {
                self.horizon()?;
            }
            _ => {}
        }
        if scenario == Scenario::SobolevInflation && !(self.alpha > 0.5 && self.alpha < 0.75) {
            return Err(LabError::Config(format!(
                "sobolev-inflation needs 1/2 < alpha < 3/4, got {}",
                self.alpha
            )));
        }
        if scenario == Scenario::NormsBaseline && self.m < self.n0_max {
            return Err(LabError::Config(format!(
                "norms-baseline needs m >= n0_max ({} < {})",
                self.m, self.n0_max
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "n0 = 1\nm = 3\nalpha = 0.2\nresolution = 12\nt_end = 10.0\n";

    #[test]
    fn defaults_fill_in() {
        let c = ExperimentConfig::from_toml_str(MINIMAL).unwrap();
        assert_eq!(c.n_theta, 256);
        assert_eq!(c.cadence, 10);
        assert_eq!(c.quadrature, AzimuthalRule::Elliptic);
        assert!(c.validate_for(Scenario::LinfInflation).is_ok());
    }

    #[test]
    fn round_trips_through_toml() {
        let c = ExperimentConfig::from_toml_str(MINIMAL).unwrap();
        let again = ExperimentConfig::from_toml_str(&c.to_toml_string()).unwrap();
        assert_eq!(c, again);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(ExperimentConfig::from_toml_str(&format!("{MINIMAL}bogus = 1\n")).is_err());
        let c = ExperimentConfig::from_toml_str(&MINIMAL.replace("12", "4")).unwrap();
        assert!(c.validate_for(Scenario::LinfInflation).is_err());
        let c = ExperimentConfig::from_toml_str(MINIMAL).unwrap();
        assert!(c.validate_for(Scenario::SobolevInflation).is_err());
        let c = ExperimentConfig::from_toml_str(&format!("{MINIMAL}scenario = \"key-lemma\"\n")).unwrap();
        assert!(c.validate_for(Scenario::Convergence).is_err());
    }

    #[test]
    fn horizon_from_c1() {
        let text = "n0 = 1\nm = 4\nalpha = 0.5\nresolution = 8\nc1 = 2.0\n";
        let c = ExperimentConfig::from_toml_str(text).unwrap();
        assert!((c.horizon().unwrap() - 2.0 * 0.5 * 4f64.powf(-0.25)).abs() < 1e-15);
    }

    #[test]
    fn scenario_names() {
        for s in Scenario::ALL {
            assert_eq!(s.name().parse::<Scenario>().unwrap(), s);
        }
        assert!("nope".parse::<Scenario>().is_err());
    }
}
