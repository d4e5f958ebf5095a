//! Named scenario presets and the fully resolved run configuration.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::array_sim::{
    build_imperfections, ArrayGeometry, DoaSpec, Fov, ImperfectionFlags, ImperfectionSpec, SignalScenario, DEFAULT_GAMMA,
};
use crate::autodiff::AdamConfig;
use crate::model::{ModelConfig, OutputMode, TrainConfig};
use crate::transfer::TransferConfig;
use crate::{DoaError, Result};

pub const PRESET_NAMES: [&str; 5] = ["scen1", "scen2", "scen3", "scen4", "scen1-desk"];

/// A named scenario with its model size and dataset/training budget.
#[derive(Debug, Clone, PartialEq)]
pub struct Preset {
    pub name: &'static str,
    pub scenario: SignalScenario,
    pub model: ModelConfig,
    pub train_count: usize,
    pub val_count: usize,
    pub train: TrainConfig,
    pub transfer: TransferConfig,
}

/// Radius placing adjacent UCA elements half a wavelength apart.
fn half_wave_radius(m: usize) -> f64 {
    0.25 / (std::f64::consts::PI / m as f64).sin()
}

fn ula_scenario(m: usize, k: usize, snr_db: f64, snapshots: usize) -> SignalScenario {
    SignalScenario {
        geometry: ArrayGeometry::Ula { elements: m, spacing: 0.5 },
        sources: k,
        snr_db,
        snapshots,
        doa: DoaSpec::default(),
        fov: Fov::ula(),
    }
}

pub fn preset(name: &str) -> Result<Preset> {
    let full_train = TrainConfig::default();
    let full = |name, scenario: SignalScenario, output| {
        let model = ModelConfig::full(scenario.geometry.elements(), scenario.sources, output);
        Preset {
            name,
            scenario,
            model,
            train_count: 50_000,
            val_count: 20_000,
            train: full_train,
            transfer: TransferConfig::default(),
        }
    };
    Ok(match name {
        "scen1" => full("scen1", ula_scenario(8, 3, -5.0, 10), OutputMode::OneD),
        "scen2" => full("scen2", ula_scenario(8, 7, -5.0, 10), OutputMode::OneD),
        "scen3" => full("scen3", ula_scenario(16, 3, -5.0, 10), OutputMode::OneD),
        "scen4" => {
            let scenario = SignalScenario {
                geometry: ArrayGeometry::Uca { elements: 12, radius: half_wave_radius(12) },
                sources: 5,
                snr_db: -5.0,
                snapshots: 50,
                doa: DoaSpec::default(),
                fov: Fov::uca(),
            };
            full("scen4", scenario, OutputMode::TwoD)
        }
        "scen1-desk" => Preset {
            name: "scen1-desk",
            scenario: ula_scenario(8, 3, 0.0, 10),
            model: ModelConfig::desk(8, 3, OutputMode::OneD),
            train_count: 8_000,
            val_count: 1_000,
            train: TrainConfig {
                epochs: 50,
                batch_size: DESK_BATCH,
                patience: 30,
                adam: AdamConfig { lr: DESK_LR, ..AdamConfig::default() },
                seed: 0,
            },
            transfer: TransferConfig {
                adam: AdamConfig { lr: DESK_LR, ..AdamConfig::default() },
                epochs: 50,
                batches: 8,
                ..TransferConfig::default()
            },
        },
        other => {
            return Err(DoaError::InvalidArgument(format!(
                "unknown scenario '{other}' (expected one of {})",
                PRESET_NAMES.join(", ")
            )))
        }
    })
}

/// Desk preset optimizer settings, tuned so 50 epochs converge on one core.
pub const DESK_LR: f64 = 1e-3;
pub const DESK_BATCH: usize = 64;

/// Imperfection settings as they appear in configs and on the command line.
/// `gamma` is `[re, im]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImperfectionKnobs {
    pub rho: f64,
    pub flags: ImperfectionFlags,
    pub gamma: [f64; 2],
    pub mc_zero_diag: bool,
}

impl Default for ImperfectionKnobs {
    fn default() -> Self {
        ImperfectionKnobs { rho: 0.0, flags: ImperfectionFlags::ALL, gamma: [DEFAULT_GAMMA.re, DEFAULT_GAMMA.im], mc_zero_diag: false }
    }
}

impl ImperfectionKnobs {
    pub fn with_rho(rho: f64) -> Self {
        ImperfectionKnobs { rho, ..Self::default() }
    }

    pub fn build(&self, geometry: &ArrayGeometry) -> Result<ImperfectionSpec> {
        build_imperfections(self.rho, self.flags, geometry, Complex64::new(self.gamma[0], self.gamma[1]), self.mc_zero_diag)
    }
}

/// Everything needed to reproduce a run. Serialized into every artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub scenario_name: String,
    pub scenario: SignalScenario,
    pub imperfections: ImperfectionKnobs,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub transfer: TransferConfig,
    pub seed: u64,
}

impl RunConfig {
    pub fn from_preset(p: &Preset, seed: u64) -> Self {
        RunConfig {
            scenario_name: p.name.to_string(),
            scenario: p.scenario.clone(),
            imperfections: ImperfectionKnobs::default(),
            model: p.model,
            train: TrainConfig { seed, ..p.train },
            transfer: TransferConfig { seed, ..p.transfer },
            seed,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Hex SHA-256 of the compact JSON encoding.
    pub fn config_hash(&self) -> String {
        hash_json(&serde_json::to_value(self).expect("config serializes"))
    }
}

/// Hex SHA-256 of a JSON value's compact encoding.
pub fn hash_json(value: &serde_json::Value) -> String {
    hash_bytes(&serde_json::to_vec(value).expect("json serializes"))
}

/// Hex SHA-256 digest.
pub fn hash_bytes(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_match_table() {
        let s1 = preset("scen1").unwrap();
        assert_eq!(s1.scenario.geometry, ArrayGeometry::Ula { elements: 8, spacing: 0.5 });
        assert_eq!(s1.scenario.sources, 3);
        assert_eq!(s1.scenario.fov, Fov { theta: (-60.0, 60.0), phi: None });
        assert_eq!(preset("scen2").unwrap().scenario.sources, 7);
        assert_eq!(preset("scen3").unwrap().scenario.geometry.elements(), 16);
        let s4 = preset("scen4").unwrap();
        assert_eq!(s4.scenario.geometry.elements(), 12);
        assert_eq!(s4.scenario.sources, 5);
        assert_eq!(s4.scenario.fov, Fov { theta: (-180.0, 180.0), phi: Some((0.0, 60.0)) });
        assert_eq!(s4.model.output, OutputMode::TwoD);
        let chord = s4.scenario.geometry.min_spacing();
        assert!((chord - 0.5).abs() < 1e-12);
        let d = preset("scen1-desk").unwrap();
        assert_eq!((d.model.embed_dim, d.model.depth, d.model.heads), (64, 2, 4));
        assert_eq!((d.train_count, d.val_count, d.train.epochs), (8000, 1000, 50));
        assert_eq!(d.scenario.snr_db, 0.0);
        for name in PRESET_NAMES {
            let p = preset(name).unwrap();
            p.scenario.validate().unwrap();
            p.model.validate().unwrap();
        }
        assert!(preset("scen9").is_err());
    }

    #[test]
    fn config_hash_is_stable_and_sensitive() {
        let p = preset("scen1-desk").unwrap();
        let a = RunConfig::from_preset(&p, 1);
        assert_eq!(a.config_hash(), RunConfig::from_preset(&p, 1).config_hash());
        assert_eq!(a.config_hash().len(), 64);
        assert_ne!(a.config_hash(), RunConfig::from_preset(&p, 2).config_hash());
        let back: RunConfig = serde_json::from_str(&a.to_json()).unwrap();
        assert_eq!(back, a);
        assert_eq!(back.config_hash(), a.config_hash());
    }

    #[test]
    fn knobs_build_matching_spec() {
        let g = ArrayGeometry::ula(8, 0.5).unwrap();
        let built = ImperfectionKnobs::with_rho(1.0).build(&g).unwrap();
        let direct = build_imperfections(1.0, ImperfectionFlags::ALL, &g, DEFAULT_GAMMA, false).unwrap();
        assert_eq!(built, direct);
    }
}
