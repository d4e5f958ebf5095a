use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::args::{EvalArgs, Method};
use crate::files::{dataset_config, read_bytes, read_json, report_config_path, resolve, write_json};
use crate::{CliError, CliResult};
use doa_core::array_sim::{decode_dataset, generate_dataset, CMatrix, Dataset, DoaLabel};
use doa_core::metrics::{compute_report, match_errors, EvalReport, ERROR_CAP_DEG, SUCCESS_TOLERANCE_DEG};
use doa_core::model::{decode_checkpoint, predict};
use doa_core::music::{music_estimate, MusicConfig};
use doa_core::scenario::{hash_bytes, hash_json, RunConfig};

#[derive(Debug, Clone, Serialize, Deserialize)]
struct FileRef {
    path: PathBuf,
    sha256: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "lowercase")]
enum DataSource {
    File(FileRef),
    /// Simulated from `config` with this record count and seed.
    Generated { count: usize, seed: u64 },
}

/// Everything an evaluation depends on; stored as `<report>.config.json`
/// and hashed into the report's `config_hash`.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct EvalSpec {
    method: String,
    ckpt: Option<FileRef>,
    data: DataSource,
    music: Option<MusicConfig>,
    config: RunConfig,
}

struct Trial {
    truth: DoaLabel,
    estimate: DoaLabel,
}

fn file_ref(path: &Path) -> CliResult<FileRef> {
    Ok(FileRef { path: path.to_path_buf(), sha256: hash_bytes(&read_bytes(path)?) })
}

fn load_verified(r: &FileRef) -> CliResult<Vec<u8>> {
    let bytes = read_bytes(&r.path)?;
    if hash_bytes(&bytes) != r.sha256 {
        return Err(CliError::Mismatch(format!("{} changed since the report was written", r.path.display())));
    }
    Ok(bytes)
}

fn evaluate(spec: &EvalSpec) -> CliResult<(EvalReport, Vec<Trial>)> {
    let data: Dataset = match &spec.data {
        DataSource::File(r) => decode_dataset(&load_verified(r)?)?,
        DataSource::Generated { count, seed } => {
            let imp = spec.config.imperfections.build(&spec.config.scenario.geometry)?;
            generate_dataset(&spec.config.scenario, &imp, *count, *seed)?
        }
    };
    if data.is_empty() {
        return Err(CliError::Mismatch("dataset has no records".into()));
    }
    let scms: Vec<&CMatrix> = data.samples.iter().map(|s| &s.scm).collect();
    let h = data.header;
    let (estimates, misses): (Vec<DoaLabel>, Vec<bool>) = match spec.method.as_str() {
        "transdoa" => {
            let r = spec.ckpt.as_ref().ok_or_else(|| CliError::Usage("--ckpt is required for transdoa".into()))?;
            let ckpt = decode_checkpoint(&load_verified(r)?)?;
            let m = ckpt.model;
            if m.elements != h.elements || m.sources != h.sources || m.label_dims() != h.label_dims {
                return Err(CliError::Mismatch(format!(
                    "checkpoint expects M={}, K={}, {}D; data has M={}, K={}, {}D",
                    m.elements,
                    m.sources,
                    m.label_dims(),
                    h.elements,
                    h.sources,
                    h.label_dims
                )));
            }
            let est = predict(&m, &ckpt.params, &scms)?;
            let n = est.len();
            (est, vec![false; n])
        }
        "music" => {
            let geometry = &spec.config.scenario.geometry;
            if geometry.kind() != h.kind || geometry.elements() != h.elements {
                return Err(CliError::Mismatch("dataset array does not match the configured geometry".into()));
            }
            let mc = spec.music.ok_or_else(|| CliError::Usage("missing MUSIC settings".into()))?;
            let results = scms.iter().map(|s| music_estimate(s, geometry, &mc)).collect::<Result<Vec<_>, _>>()?;
            results.into_iter().map(|r| (r.label, r.miss)).unzip()
        }
        other => return Err(CliError::Usage(format!("unknown method '{other}'"))),
    };
    let truths: Vec<DoaLabel> = data.samples.iter().map(|s| s.label.clone()).collect();
    let metrics = compute_report(&truths, &estimates, &misses, ERROR_CAP_DEG, SUCCESS_TOLERANCE_DEG)?;
    let report = EvalReport {
        method: spec.method.clone(),
        scenario: spec.config.scenario_name.clone(),
        seed: spec.config.seed,
        config_hash: hash_json(&serde_json::to_value(spec)?),
        metrics,
    };
    let trials = truths.into_iter().zip(estimates).map(|(truth, estimate)| Trial { truth, estimate }).collect();
    Ok((report, trials))
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(";")
}

fn write_csv(path: &Path, trials: &[Trial]) -> CliResult<()> {
    let mut out = String::from("trial,truth_theta,truth_phi,est_theta,est_phi,matched_errors\n");
    for (i, t) in trials.iter().enumerate() {
        let errs = match_errors(&t.truth, &t.estimate, ERROR_CAP_DEG)?;
        let phis = |l: &DoaLabel| l.phis.as_deref().map(join).unwrap_or_default();
        let _ = writeln!(
            out,
            "{i},{},{},{},{},{}",
            join(&t.truth.thetas),
            phis(&t.truth),
            join(&t.estimate.thetas),
            phis(&t.estimate),
            join(&errs)
        );
    }
    std::fs::write(path, out).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn emit(spec: &EvalSpec, report_path: &Path, csv: Option<&Path>) -> CliResult<EvalReport> {
    let (report, trials) = evaluate(spec)?;
    write_json(report_path, &report)?;
    write_json(&report_config_path(report_path), spec)?;
    if let Some(csv) = csv {
        write_csv(csv, &trials)?;
    }
    Ok(report)
}

fn parse_sweep(text: &str) -> CliResult<Vec<f64>> {
    let bad = || CliError::Usage(format!("--snr-sweep expects lo:hi:step, got '{text}'"));
    let parts: Vec<f64> = text.split(':').map(|p| p.trim().parse::<f64>()).collect::<Result<_, _>>().map_err(|_| bad())?;
    let [lo, hi, step] = parts[..] else { return Err(bad()) };
    if !(step > 0.0) || hi < lo {
        return Err(bad());
    }
    let n = ((hi - lo) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|i| lo + i as f64 * step).collect())
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let name = match path.extension() {
        Some(ext) => format!("{stem}_{suffix}.{}", ext.to_string_lossy()),
        None => format!("{stem}_{suffix}"),
    };
    path.with_file_name(name)
}

pub fn run(a: EvalArgs) -> CliResult<()> {
    if let Some(old) = &a.replay {
        let spec: EvalSpec = read_json(&report_config_path(old))?;
        emit(&spec, &a.report, a.csv.as_deref())?;
        return Ok(());
    }
    let method = a.method.ok_or_else(|| CliError::Usage("--method is required".into()))?;
    let fallback = match &a.data {
        Some(d) => dataset_config(d)?,
        None => None,
    };
    let mut config = resolve(&a.scenario, fallback, a.seed)?;
    let ckpt = match (method, &a.ckpt) {
        (Method::Transdoa, Some(p)) => {
            let r = file_ref(p)?;
            config.model = decode_checkpoint(&read_bytes(p)?)?.model;
            Some(r)
        }
        (Method::Transdoa, None) => return Err(CliError::Usage("--ckpt is required for transdoa".into())),
        (Method::Music, _) => None,
    };
    let method_name = match method {
        Method::Transdoa => "transdoa",
        Method::Music => "music",
    };

    match &a.snr_sweep {
        None => {
            let data = a.data.as_ref().ok_or_else(|| CliError::Usage("--data is required without --snr-sweep".into()))?;
            let spec = EvalSpec {
                method: method_name.into(),
                ckpt,
                data: DataSource::File(file_ref(data)?),
                music: (method == Method::Music).then(|| MusicConfig::for_scenario(&config.scenario)),
                config,
            };
            emit(&spec, &a.report, a.csv.as_deref())?;
        }
        Some(text) => {
            println!("snr_db,report,rmse_matched,mae_matched,acc_matched,miss_prob");
            for snr in parse_sweep(text)? {
                let mut cfg = config.clone();
                cfg.scenario.snr_db = snr;
                let spec = EvalSpec {
                    method: method_name.into(),
                    ckpt: ckpt.clone(),
                    data: DataSource::Generated { count: a.count, seed: a.seed },
                    music: (method == Method::Music).then(|| MusicConfig::for_scenario(&cfg.scenario)),
                    config: cfg,
                };
                let tag = format!("snr{snr}");
                let path = with_suffix(&a.report, &tag);
                let csv = a.csv.as_ref().map(|c| with_suffix(c, &tag));
                let r = emit(&spec, &path, csv.as_deref())?;
                let m = &r.metrics;
                println!("{snr},{},{},{},{},{}", path.display(), m.rmse_matched, m.mae_matched, m.acc_matched, m.miss_prob);
            }
        }
    }
    Ok(())
}
