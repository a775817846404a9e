//! The six reference experiments and the verdicts they must produce.

use noarb_core::classifier::{SpectrumReport, Verdict};

use crate::config::ExperimentConfig;
use crate::error::CliError;

pub struct Preset {
    pub name: &'static str,
    pub toml: &'static str,
    /// NIP, NSA, NA1, NFLVR.
    pub expected: [Verdict; 4],
}

use Verdict::{Fails as F, Holds as H};

pub const PRESETS: [Preset; 6] = [
    Preset { name: "black_scholes", toml: include_str!("../configs/black_scholes.toml"), expected: [H, H, H, H] },
    Preset {
        name: "abs_local_martingale",
        toml: include_str!("../configs/abs_local_martingale.toml"),
        expected: [F, F, F, F],
    },
    Preset { name: "mvt_jump", toml: include_str!("../configs/mvt_jump.toml"), expected: [H, F, F, F] },
    Preset { name: "integrated_ratio", toml: include_str!("../configs/integrated_ratio.toml"), expected: [H, F, F, F] },
    Preset { name: "bridge_exp", toml: include_str!("../configs/bridge_exp.toml"), expected: [H, H, F, F] },
    Preset { name: "power_vol", toml: include_str!("../configs/power_vol.toml"), expected: [H, H, H, F] },
];

pub fn find(name: &str) -> Option<&'static Preset> {
    PRESETS.iter().find(|p| p.name == name)
}

impl Preset {
    pub fn config(&self) -> ExperimentConfig {
        ExperimentConfig::from_toml(self.toml).expect("bundled preset parses")
    }

    /// Differences between `rep` and the expected row.
    pub fn deviations(&self, rep: &SpectrumReport) -> Vec<String> {
        let names = ["NIP", "NSA", "NA1", "NFLVR"];
        rep.verdicts()
            .iter()
            .zip(self.expected)
            .zip(names)
            .filter(|((got, want), _)| *got != want)
            .map(|((got, want), c)| format!("{}: {c} expected {}, got {}", self.name, want.as_str(), got.as_str()))
            .collect()
    }
}

/// Loads a preset and applies the path-count override.
pub fn prepared(p: &Preset, n_paths: Option<usize>) -> Result<ExperimentConfig, CliError> {
    let mut cfg = p.config();
    if let Some(n) = n_paths {
        cfg.mc.n_paths = n;
    }
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        for p in &PRESETS {
            p.config().validate().unwrap_or_else(|e| panic!("{}: {e}", p.name));
            assert_eq!(p.config().model.spec().name(), p.name);
        }
    }

    #[test]
    fn expected_rows_respect_the_chain() {
        for p in &PRESETS {
            noarb_core::classifier::check_chain(p.expected).unwrap();
        }
    }

    #[test]
    fn small_override_rejected() {
        assert!(prepared(&PRESETS[0], Some(10)).is_err());
    }
}
