//! Experiment configuration, read from TOML.

use std::path::{Path, PathBuf};

use noarb_core::characteristics::{DivergenceConfig, NuBinning};
use noarb_core::classifier::ClassifierConfig;
use noarb_core::deflators::{DeflatorConfig, DeflatorScheme, IncrementTestConfig, MIN_TEST_PATHS};
use noarb_core::grid::{GridSpec, Singularity};
use noarb_core::models::{Coefficient, ModelSpec};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Characteristics,
    Deflators,
    Strategies,
    Classify,
}

impl Task {
    pub fn as_str(&self) -> &'static str {
        match self {
            Task::Characteristics => "characteristics",
            Task::Deflators => "deflators",
            Task::Strategies => "strategies",
            Task::Classify => "classify",
        }
    }

    pub fn parse(s: &str) -> Option<Task> {
        match s.trim() {
            "characteristics" => Some(Task::Characteristics),
            "deflators" => Some(Task::Deflators),
            "strategies" => Some(Task::Strategies),
            "classify" => Some(Task::Classify),
            _ => None,
        }
    }

    /// Tasks that report Monte Carlo statistics.
    pub fn is_statistical(&self) -> bool {
        !matches!(self, Task::Characteristics)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelConfig {
    BlackScholes {
        mu: f64,
        sigma: f64,
        #[serde(default = "one")]
        s0: f64,
    },
    /// `dS = a·S^p dt + b·S^q dW`.
    Diffusion {
        drift_scale: f64,
        drift_exponent: f64,
        vol_scale: f64,
        vol_exponent: f64,
        s0: f64,
    },
    AbsLocalMartingale {
        #[serde(default = "one")]
        vol: f64,
        #[serde(default)]
        n0: f64,
    },
    MvtJump {
        beta: f64,
        gamma: f64,
        #[serde(default)]
        tau: f64,
    },
    IntegratedRatio,
    BridgeExp {
        k: f64,
    },
    PowerVol {
        mu_exp: f64,
        #[serde(default = "one")]
        s0: f64,
    },
}

fn one() -> f64 {
    1.0
}

impl ModelConfig {
    pub fn spec(&self) -> ModelSpec {
        match *self {
            ModelConfig::BlackScholes { mu, sigma, s0 } => ModelSpec::BlackScholes { mu, sigma, s0 },
            ModelConfig::Diffusion { drift_scale, drift_exponent, vol_scale, vol_exponent, s0 } => ModelSpec::Diffusion {
                drift: Coefficient::Power { scale: drift_scale, exponent: drift_exponent },
                vol: Coefficient::Power { scale: vol_scale, exponent: vol_exponent },
                s0,
            },
            ModelConfig::AbsLocalMartingale { vol, n0 } => ModelSpec::AbsLocalMartingale { vol, n0 },
            ModelConfig::MvtJump { beta, gamma, tau } => ModelSpec::MvtJump { beta, gamma, tau },
            ModelConfig::IntegratedRatio => ModelSpec::IntegratedRatio,
            ModelConfig::BridgeExp { k } => ModelSpec::BridgeExp { k },
            ModelConfig::PowerVol { mu_exp, s0 } => ModelSpec::PowerVol { mu_exp, s0 },
        }
    }

    /// `σ(x) = 1/x` has exact Bessel-3 paths.
    pub fn is_bessel(&self) -> bool {
        matches!(*self, ModelConfig::PowerVol { mu_exp, .. } if mu_exp == -1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SingularConfig {
    /// Zone start as a fraction of the horizon.
    pub anchor: f64,
    /// Octaves on the finest level.
    pub depth_octaves: u32,
    pub points_per_octave: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default = "one")]
    pub horizon: f64,
    /// Uniform steps on the finest level.
    pub n_steps: usize,
    #[serde(default = "three")]
    pub refinement_levels: u32,
    #[serde(default)]
    pub singular: Option<SingularConfig>,
}

fn three() -> u32 {
    3
}

impl GridConfig {
    /// Specs from coarsest to finest.
    pub fn level_specs(&self, side: Option<noarb_core::grid::SingularSide>) -> Result<Vec<GridSpec>, CliError> {
        let l = self.refinement_levels.max(1);
        let shift = l - 1;
        let coarse_n = self.n_steps >> shift;
        if coarse_n << shift != self.n_steps {
            return Err(CliError::config(format!(
                "grid.n_steps = {} is not divisible by 2^{shift}",
                self.n_steps
            )));
        }
        let mut base = GridSpec::uniform(self.horizon, coarse_n);
        if let Some(s) = self.singular {
            let Some(side) = side else {
                return Err(CliError::config("grid.singular given for a model without a singular time"));
            };
            let depth = s.depth_octaves >> shift;
            if depth << shift != s.depth_octaves || depth == 0 {
                return Err(CliError::config(format!(
                    "grid.singular.depth_octaves = {} is not a positive multiple of 2^{shift}",
                    s.depth_octaves
                )));
            }
            base = base.with_singularity(Singularity {
                side,
                anchor: s.anchor,
                depth_octaves: depth,
                points_per_octave: s.points_per_octave,
            });
        }
        Ok((0..l).map(|i| base.refined(i)).collect())
    }

    /// Spec of a single grid at the configured resolution.
    pub fn finest_spec(&self, side: Option<noarb_core::grid::SingularSide>) -> Result<GridSpec, CliError> {
        let mut g = GridSpec::uniform(self.horizon, self.n_steps);
        if let (Some(s), Some(side)) = (self.singular, side) {
            g = g.with_singularity(Singularity {
                side,
                anchor: s.anchor,
                depth_octaves: s.depth_octaves,
                points_per_octave: s.points_per_octave,
            });
        }
        Ok(g)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McConfig {
    pub n_paths: usize,
    pub master_seed: u64,
    #[serde(default = "default_chunk")]
    pub chunk_size: usize,
    /// Paths used by the empirical ν-test.
    #[serde(default = "default_nu_paths")]
    pub nu_paths: usize,
}

fn default_chunk() -> usize {
    250
}

fn default_nu_paths() -> usize {
    2000
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeConfig {
    Euler,
    Milstein,
    Potential,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Thresholds {
    pub rho_div: f64,
    pub consecutive: usize,
    /// `ε_zero = eps_zero_c·√Δt`.
    pub eps_zero_c: f64,
    pub nip_gray_low: f64,
    pub nip_gray_high: f64,
    pub nu_tol: f64,
    pub k_cap: f64,
    pub zero_threshold: f64,
    pub nflvr_sigmas: f64,
    pub increment_windows: usize,
    pub alpha: f64,
    pub scheme: SchemeConfig,
    pub time_bins: usize,
    pub state_bins: usize,
    pub min_bin_samples: usize,
}

impl Default for Thresholds {
    fn default() -> Self {
        let div = DivergenceConfig::default();
        let cls = ClassifierConfig::default();
        let defl = DeflatorConfig::default();
        let inc = IncrementTestConfig::default();
        let bins = NuBinning::default();
        Thresholds {
            rho_div: div.rho,
            consecutive: div.consecutive,
            eps_zero_c: 1.0,
            nip_gray_low: cls.nip_gray_low,
            nip_gray_high: cls.nip_gray_high,
            nu_tol: cls.nu_tol,
            k_cap: defl.khat_cap,
            zero_threshold: defl.zero_threshold,
            nflvr_sigmas: cls.nflvr_sigmas,
            increment_windows: inc.windows,
            alpha: inc.alpha,
            scheme: SchemeConfig::Potential,
            time_bins: bins.time_bins,
            state_bins: bins.state_bins,
            min_bin_samples: bins.min_samples,
        }
    }
}

impl Thresholds {
    pub fn divergence(&self) -> DivergenceConfig {
        DivergenceConfig { rho: self.rho_div, consecutive: self.consecutive, ..DivergenceConfig::default() }
    }

    pub fn classifier(&self) -> ClassifierConfig {
        ClassifierConfig {
            nip_gray_low: self.nip_gray_low,
            nip_gray_high: self.nip_gray_high,
            nu_tol: self.nu_tol,
            nflvr_sigmas: self.nflvr_sigmas,
        }
    }

    pub fn deflator(&self) -> DeflatorConfig {
        DeflatorConfig {
            scheme: match self.scheme {
                SchemeConfig::Euler => DeflatorScheme::Euler,
                SchemeConfig::Milstein => DeflatorScheme::Milstein,
                SchemeConfig::Potential => DeflatorScheme::Potential,
            },
            khat_cap: self.k_cap,
            zero_threshold: self.zero_threshold,
        }
    }

    pub fn increments(&self) -> IncrementTestConfig {
        IncrementTestConfig { windows: self.increment_windows, alpha: self.alpha }
    }

    pub fn binning(&self) -> NuBinning {
        NuBinning { time_bins: self.time_bins, state_bins: self.state_bins, min_samples: self.min_bin_samples }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StrategyConfig {
    /// Separate grid for the strategy task; defaults to the finest level.
    pub grid: Option<GridConfig>,
    pub unbounded_levels: Vec<f64>,
    pub approx_k: f64,
    pub approx_levels: Vec<f64>,
    pub combination_terms: usize,
}

impl Default for StrategyConfig {
    fn default() -> Self {
        StrategyConfig {
            grid: None,
            unbounded_levels: vec![1.0, 2.0, 4.0, 8.0],
            approx_k: 3.0,
            approx_levels: vec![4.0, 16.0, 64.0],
            combination_terms: 16,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NumeraireConfig {
    /// `V = 1/Ẑ`, the portfolio `V(1, λ/Ẑ)`.
    InverseDeflator,
    /// `V = 1 + θ(S − S₀)`.
    ConstantHolding { theta: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    pub tasks: Vec<Task>,
    pub model: ModelConfig,
    pub grid: GridConfig,
    pub mc: McConfig,
    #[serde(default)]
    pub thresholds: Thresholds,
    #[serde(default)]
    pub strategies: StrategyConfig,
    #[serde(default)]
    pub numeraire: Option<NumeraireConfig>,
}

impl ExperimentConfig {
    /// Parses a config file, or the `[config]` table of a run manifest.
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let table: toml::Table = toml::from_str(text).map_err(|e| CliError::config(e.to_string()))?;
        let value = match (table.get("config"), table.contains_key("run")) {
            (Some(inner), true) => inner.clone(),
            _ => toml::Value::Table(table),
        };
        value.try_into().map_err(|e: toml::de::Error| CliError::config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn has(&self, t: Task) -> bool {
        self.tasks.contains(&t)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.tasks.is_empty() {
            return Err(CliError::config("tasks must not be empty"));
        }
        let spec = self.model.spec();
        spec.validate().map_err(|e| CliError::config(e.to_string()))?;
        if self.has(Task::Classify) && self.grid.refinement_levels < 3 {
            return Err(CliError::config(format!(
                "classify needs refinement_levels >= 3, got {}",
                self.grid.refinement_levels
            )));
        }
        if self.tasks.iter().any(Task::is_statistical) && self.mc.n_paths < MIN_TEST_PATHS {
            return Err(CliError::config(format!(
                "statistical tasks need n_paths >= {MIN_TEST_PATHS}, got {}",
                self.mc.n_paths
            )));
        }
        if self.mc.master_seed > i64::MAX as u64 {
            return Err(CliError::config("mc.master_seed must fit in a signed 64-bit integer"));
        }
        if self.mc.n_paths == 0 || self.mc.chunk_size == 0 {
            return Err(CliError::config("n_paths and chunk_size must be positive"));
        }
        let side = spec.singular_side();
        for g in self.grid.level_specs(side)? {
            g.build().map_err(|e| CliError::config(e.to_string()))?;
        }
        if let Some(g) = &self.strategies.grid {
            if g.horizon != self.grid.horizon {
                return Err(CliError::config("strategies.grid.horizon differs from grid.horizon"));
            }
            g.finest_spec(side)?.build().map_err(|e| CliError::config(e.to_string()))?;
        }
        if self.strategies.approx_k <= 1.0 {
            return Err(CliError::config("strategies.approx_k must exceed 1"));
        }
        if self.strategies.combination_terms == 0 {
            return Err(CliError::config("strategies.combination_terms must be at least 1"));
        }
        if !(self.thresholds.eps_zero_c > 0.0) {
            return Err(CliError::config("thresholds.eps_zero_c must be positive"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BS: &str = r#"
tasks = ["classify"]
[model]
kind = "black_scholes"
mu = 0.05
sigma = 0.2
[grid]
n_steps = 1024
[mc]
n_paths = 2000
master_seed = 7
"#;

    #[test]
    fn parses_with_defaults() {
        let cfg = ExperimentConfig::from_toml(BS).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.grid.refinement_levels, 3);
        assert_eq!(cfg.thresholds.rho_div, 1.8);
        assert_eq!(cfg.thresholds.k_cap, 50.0);
        let specs = cfg.grid.level_specs(None).unwrap();
        assert_eq!(specs.iter().map(|s| s.n_steps).collect::<Vec<_>>(), vec![256, 512, 1024]);
    }

    #[test]
    fn round_trips() {
        let cfg = ExperimentConfig::from_toml(BS).unwrap();
        let back = ExperimentConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn empty_tasks_rejected() {
        let cfg = ExperimentConfig::from_toml(&BS.replace(r#"["classify"]"#, "[]")).unwrap();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn few_levels_rejected_for_classify() {
        let mut cfg = ExperimentConfig::from_toml(BS).unwrap();
        cfg.grid.refinement_levels = 2;
        assert!(cfg.validate().is_err());
        cfg.tasks = vec![Task::Characteristics];
        cfg.validate().unwrap();
    }

    #[test]
    fn few_paths_rejected() {
        let mut cfg = ExperimentConfig::from_toml(BS).unwrap();
        cfg.mc.n_paths = 999;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn unknown_key_rejected() {
        assert!(ExperimentConfig::from_toml(&format!("{BS}\n[extra]\nx = 1\n")).is_err());
    }

    #[test]
    fn depth_must_divide() {
        let mut cfg = ExperimentConfig::from_toml(BS).unwrap();
        cfg.model = ModelConfig::BridgeExp { k: 1.0 };
        cfg.grid.singular = Some(SingularConfig { anchor: 0.0625, depth_octaves: 10, points_per_octave: 4 });
        assert!(cfg.validate().is_err());
        cfg.grid.singular = Some(SingularConfig { anchor: 0.0625, depth_octaves: 12, points_per_octave: 4 });
        cfg.validate().unwrap();
    }
}
