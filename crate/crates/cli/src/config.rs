//! TOML settings file mirroring the benchmark defaults.

use std::path::Path;

use rotbench_core::bench::{FrameScenario, QuadScenario, WahbaScenario};
use serde::Deserialize;

/// Benchmark settings: any subset of sections and fields may appear, omitted
/// values keep their defaults. Unknown keys are rejected so typos surface
/// instead of silently running the default.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub wahba: WahbaScenario,
    pub frame: FrameScenario,
    pub quad: QuadScenario,
}

impl BenchConfig {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("reading {}: {e}", path.display()))?;
        toml::from_str(&text).map_err(|e| format!("parsing {}: {e}", path.display()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_all_defaults() {
        let cfg: BenchConfig = toml::from_str("").unwrap();
        assert_eq!(cfg, BenchConfig::default());
        assert_eq!(cfg.wahba.replicates, 200);
        assert_eq!(cfg.frame.dt, 0.02);
        assert_eq!(cfg.quad.seed, 7);
    }

    #[test]
    fn partial_sections_override_only_named_fields() {
        let cfg: BenchConfig = toml::from_str(
            "[quad]\nreplicates = 5\nu_init_sigma = 0.1\n\n[wahba]\nnoise_sigma = 0.01\n",
        )
        .unwrap();
        assert_eq!(cfg.quad.replicates, 5);
        assert_eq!(cfg.quad.u_init_sigma, 0.1);
        assert_eq!(cfg.quad.roll_torque_bias, QuadScenario::default().roll_torque_bias);
        assert_eq!(cfg.wahba.noise_sigma, 0.01);
        assert_eq!(cfg.frame, FrameScenario::default());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<BenchConfig>("[quad]\nreplicas = 5\n").is_err());
        assert!(toml::from_str::<BenchConfig>("[quadrotor]\nreplicates = 5\n").is_err());
    }
}
