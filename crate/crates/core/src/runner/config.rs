use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::photon::{HeraldTruncations, PhaseMode, RateConvention};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExperimentKind {
    Herald,
    Readout,
    Css,
    Nkf,
    Reduce,
}

/// Top-level config. `seed` and `dt` are always required; all times are in
/// units of `1/gamma` and rates in units of `gamma`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub seed: u64,
    pub dt: f64,
    pub horizon: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    pub params: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeraldConfig {
    pub lambda: f64,
    pub g: f64,
    pub kappa_sc: f64,
    pub attempts: usize,
    #[serde(default)]
    pub truncations: Option<HeraldTruncations>,
    /// Optional overdamping scan over these shutter rates at the same `Lambda`, `g`.
    #[serde(default)]
    pub scan: Option<ScanConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanConfig {
    pub kappas: Vec<f64>,
    #[serde(default)]
    pub truncations: Option<HeraldTruncations>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TargetConfig {
    Gaussian { center: f64, sigma: f64 },
    RisingExponential { tau: f64, cutoff: f64 },
    DecayingExponential { rate: f64 },
    /// Amplitude file with columns `t,value_re[,value_im]`, relative to the config's directory.
    Csv { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReadoutConfig {
    pub g: f64,
    pub kappa_sc: f64,
    pub target: TargetConfig,
    #[serde(default)]
    pub rate_convention: RateConvention,
    #[serde(default)]
    pub phase_mode: PhaseMode,
    /// Defaults to `100 kappa_sc`.
    #[serde(default)]
    pub max_detuning: Option<f64>,
    /// Also run the two-mode model under the same detuning schedule.
    #[serde(default)]
    pub compare_full: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "target", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SearchConfig {
    FourCat { alpha_abs: f64, alpha_arg: f64, length: usize },
    FockSpan { levels: Vec<usize>, length: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CssConfig {
    pub lambda: f64,
    pub kappa_h: f64,
    pub n_target: u32,
    pub trajectories: usize,
    /// Defaults to `2 n_target + 10`.
    #[serde(default)]
    pub dim: Option<usize>,
    /// Also report the survivors whose inter-detection gaps stay below this.
    #[serde(default)]
    pub max_gap: Option<f64>,
    #[serde(default)]
    pub search: Option<SearchConfig>,
    /// Points per axis of the Wigner grids on `[-5, 5]`.
    #[serde(default = "default_wigner_points")]
    pub wigner_points: usize,
}

fn default_wigner_points() -> usize {
    101
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NkfRunConfig {
    pub lambda: f64,
    pub kappa_h: f64,
    pub dim: usize,
    pub trajectories: usize,
    pub sample_every: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointConfig {
    pub lambda: f64,
    pub g: f64,
    pub kappa_sc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LadderChoice {
    Omega,
    Zeta,
    Points(Vec<PointConfig>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReduceConfig {
    pub ladder: LadderChoice,
    #[serde(default)]
    pub truncations: Option<HeraldTruncations>,
}

/// A config with its kind-specific block parsed.
#[derive(Debug, Clone, PartialEq)]
pub enum Experiment {
    Herald(HeraldConfig),
    Readout(ReadoutConfig),
    Css(CssConfig),
    Nkf(NkfRunConfig),
    Reduce(ReduceConfig),
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let c: Self = serde_json::from_str(text).map_err(|e| SimError::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| SimError::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| e.context(path.display().to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(SimError::Config(format!("field `dt` must be positive, got {}", self.dt)));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(SimError::Config(format!("field `horizon` must be positive, got {}", self.horizon)));
        }
        self.experiment().map(|_| ())
    }

    pub fn experiment(&self) -> Result<Experiment> {
        fn parse<T: serde::de::DeserializeOwned>(v: &serde_json::Value) -> Result<T> {
            serde_json::from_value(v.clone()).map_err(|e| SimError::Config(format!("params: {e}")))
        }
        Ok(match self.kind {
            ExperimentKind::Herald => Experiment::Herald(parse(&self.params)?),
            ExperimentKind::Readout => Experiment::Readout(parse(&self.params)?),
            ExperimentKind::Css => Experiment::Css(parse(&self.params)?),
            ExperimentKind::Nkf => Experiment::Nkf(parse(&self.params)?),
            ExperimentKind::Reduce => Experiment::Reduce(parse(&self.params)?),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const CSS: &str = r#"{"kind":"css","seed":1,"dt":0.001,"horizon":5,
        "params":{"lambda":1,"kappa_h":4,"n_target":3,"trajectories":10}}"#;

    #[test]
    fn parses_kind_block() {
        let c = ExperimentConfig::from_json(CSS).unwrap();
        let Experiment::Css(css) = c.experiment().unwrap() else { panic!() };
        assert_eq!(css.n_target, 3);
        assert_eq!(css.wigner_points, 101);
    }

    #[test]
    fn missing_seed_is_named() {
        let e = ExperimentConfig::from_json(&CSS.replace(r#""seed":1,"#, "")).unwrap_err();
        assert!(e.to_string().contains("seed"), "{e}");
    }

    #[test]
    fn unknown_fields_rejected() {
        let e = ExperimentConfig::from_json(&CSS.replace(r#""trajectories":10"#, r#""trajectories":10,"gamma":2"#)).unwrap_err();
        assert!(e.to_string().contains("gamma"), "{e}");
        assert!(ExperimentConfig::from_json(&CSS.replace(r#""horizon":5"#, r#""horizon":5,"extra":0"#)).is_err());
    }

    #[test]
    fn bad_dt_rejected() {
        let e = ExperimentConfig::from_json(&CSS.replace(r#""dt":0.001"#, r#""dt":-1"#)).unwrap_err();
        assert!(e.to_string().contains("dt"));
    }

    #[test]
    fn targets_and_ladders_parse() {
        let t: TargetConfig = serde_json::from_str(r#"{"shape":"rising-exponential","tau":1,"cutoff":5}"#).unwrap();
        assert_eq!(t, TargetConfig::RisingExponential { tau: 1.0, cutoff: 5.0 });
        let l: LadderChoice = serde_json::from_str(r#""zeta""#).unwrap();
        assert_eq!(l, LadderChoice::Zeta);
        let l: LadderChoice = serde_json::from_str(r#"{"points":[{"lambda":1,"g":10,"kappa_sc":100}]}"#).unwrap();
        assert!(matches!(l, LadderChoice::Points(ref p) if p.len() == 1));
    }
}
