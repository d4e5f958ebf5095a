//! Sidecar files and run-configuration resolution.

use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

use crate::args::{OptimArgs, ScenarioArgs};
use crate::{CliError, CliResult};
use doa_core::array_sim::{DoaSpec, ImperfectionFlags};
use doa_core::scenario::{preset, RunConfig};

pub const DEFAULT_SCENARIO: &str = "scen1-desk";

/// Written next to every dataset as `<dataset>.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetSidecar {
    pub config: RunConfig,
    pub count: usize,
    pub seed: u64,
    pub config_hash: String,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

pub fn report_config_path(report: &Path) -> PathBuf {
    let mut s = report.as_os_str().to_owned();
    s.push(".config.json");
    PathBuf::from(s)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

pub fn read_bytes(path: &Path) -> CliResult<Vec<u8>> {
    std::fs::read(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

/// The dataset's sidecar config, if one exists.
pub fn dataset_config(path: &Path) -> CliResult<Option<RunConfig>> {
    let side = sidecar_path(path);
    if !side.exists() {
        return Ok(None);
    }
    Ok(Some(read_json::<DatasetSidecar>(&side)?.config))
}

fn parse_flags(text: &str) -> CliResult<ImperfectionFlags> {
    let mut f = ImperfectionFlags::NONE;
    for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        match part {
            "pos" | "position" => f.position = true,
            "gain" => f.gain = true,
            "phase" => f.phase = true,
            "mc" | "coupling" => f.coupling = true,
            "none" => {}
            "all" => f = ImperfectionFlags::ALL,
            other => return Err(CliError::Usage(format!("unknown imperfection flag '{other}'"))),
        }
    }
    Ok(f)
}

/// Base config from `--config`, else `--scenario`, else `fallback`, else
/// the desk preset; then command-line overrides and the seed.
pub fn resolve(args: &ScenarioArgs, fallback: Option<RunConfig>, seed: u64) -> CliResult<RunConfig> {
    let mut cfg = if let Some(path) = &args.config {
        read_json::<RunConfig>(path)?
    } else if let Some(name) = &args.scenario {
        RunConfig::from_preset(&preset(name)?, seed)
    } else if let Some(cfg) = fallback {
        cfg
    } else {
        RunConfig::from_preset(&preset(DEFAULT_SCENARIO)?, seed)
    };
    if let Some(rho) = args.rho {
        cfg.imperfections.rho = rho;
    }
    if let Some(snr) = args.snr {
        cfg.scenario.snr_db = snr;
    }
    if let Some(t) = args.snapshots {
        cfg.scenario.snapshots = t;
    }
    if let Some(flags) = &args.flags {
        cfg.imperfections.flags = parse_flags(flags)?;
    }
    if let Some(g) = &args.gamma {
        let parts: Vec<f64> = g
            .split(',')
            .map(|p| p.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| CliError::Usage(format!("--gamma expects 're,im', got '{g}'")))?;
        if parts.len() != 2 {
            return Err(CliError::Usage(format!("--gamma expects 're,im', got '{g}'")));
        }
        cfg.imperfections.gamma = [parts[0], parts[1]];
    }
    if args.mc_zero_diag {
        cfg.imperfections.mc_zero_diag = true;
    }
    if let Some(doa) = &args.doa {
        cfg.scenario.doa = match doa.as_str() {
            "uniform" => DoaSpec::default(),
            "equidistant" => DoaSpec::Equidistant,
            other => return Err(CliError::Usage(format!("unknown DOA mode '{other}'"))),
        };
    }
    cfg.seed = seed;
    cfg.train.seed = seed;
    cfg.transfer.seed = seed;
    cfg.scenario.validate()?;
    Ok(cfg)
}

pub fn apply_optim(cfg: &mut RunConfig, o: &OptimArgs) {
    if let Some(e) = o.epochs {
        cfg.train.epochs = e;
    }
    if let Some(b) = o.batch {
        cfg.train.batch_size = b;
    }
    if let Some(lr) = o.lr {
        cfg.train.adam.lr = lr;
    }
    if let Some(p) = o.patience {
        cfg.train.patience = p;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_parse_and_reject_unknown() {
        let f = parse_flags("gain, mc").unwrap();
        assert!(f.gain && f.coupling && !f.position && !f.phase);
        assert_eq!(parse_flags("all").unwrap(), ImperfectionFlags::ALL);
        assert_eq!(parse_flags("none").unwrap(), ImperfectionFlags::NONE);
        assert!(matches!(parse_flags("gain,wobble"), Err(CliError::Usage(_))));
    }

    #[test]
    fn scenario_beats_fallback_and_overrides_apply() {
        let fallback = RunConfig::from_preset(&preset("scen3").unwrap(), 0);
        let args = ScenarioArgs { scenario: Some("scen1".into()), rho: Some(0.25), gamma: Some("-0.1,0.2".into()), ..Default::default() };
        let cfg = resolve(&args, Some(fallback.clone()), 7).unwrap();
        assert_eq!(cfg.scenario_name, "scen1");
        assert_eq!(cfg.imperfections.rho, 0.25);
        assert_eq!(cfg.imperfections.gamma, [-0.1, 0.2]);
        assert_eq!((cfg.seed, cfg.train.seed, cfg.transfer.seed), (7, 7, 7));

        let cfg = resolve(&ScenarioArgs::default(), Some(fallback), 1).unwrap();
        assert_eq!(cfg.scenario_name, "scen3");
        let cfg = resolve(&ScenarioArgs::default(), None, 1).unwrap();
        assert_eq!(cfg.scenario_name, DEFAULT_SCENARIO);
    }

    #[test]
    fn bad_gamma_is_a_usage_error() {
        let args = ScenarioArgs { gamma: Some("0.3".into()), ..Default::default() };
        assert!(matches!(resolve(&args, None, 0), Err(CliError::Usage(_))));
    }

    #[test]
    fn sidecar_paths_append_suffixes() {
        assert_eq!(sidecar_path(Path::new("a/b.doa")), PathBuf::from("a/b.doa.json"));
        assert_eq!(report_config_path(Path::new("r.json")), PathBuf::from("r.json.config.json"));
    }
}
