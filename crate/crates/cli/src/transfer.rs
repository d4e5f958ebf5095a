use serde_json::json;

use crate::args::{HeadArg, TransferArgs, TransferMode};
use crate::files::{apply_optim, dataset_config, read_bytes, read_json, resolve, sidecar_path, DatasetSidecar};
use crate::{CliError, CliResult};
use doa_core::array_sim::read_dataset;
use doa_core::model::{decode_checkpoint, write_checkpoint, Checkpoint};
use doa_core::scenario::hash_bytes;
use doa_core::transfer::{direct_train_baseline, finetune_baseline, make_pairs, transfer_train, HeadPolicy};

pub fn run(a: TransferArgs) -> CliResult<()> {
    let mut cfg = resolve(&a.scenario, dataset_config(&a.target_data)?, a.seed)?;
    apply_optim(&mut cfg, &a.optim);
    if let Some(v) = a.alpha {
        cfg.transfer.alpha = v;
    }
    if let Some(v) = a.beta {
        cfg.transfer.beta = v;
    }
    if let Some(v) = a.batches {
        cfg.transfer.batches = v;
    }
    if let Some(e) = a.optim.epochs {
        cfg.transfer.epochs = e;
    }
    if let Some(lr) = a.optim.lr {
        cfg.transfer.adam.lr = lr;
    }
    if let Some(h) = a.head {
        cfg.transfer.head = match h {
            HeadArg::Reuse => HeadPolicy::ReuseSourceHead,
            HeadArg::Finetune => HeadPolicy::FineTuneHead,
        };
    }

    let target = read_dataset(&a.target_data)?;
    if a.samples > target.len() {
        return Err(CliError::Mismatch(format!(
            "--samples {} exceeds the {} records in {}",
            a.samples,
            target.len(),
            a.target_data.display()
        )));
    }
    let target = target.take(a.samples);

    let source = match (a.mode, &a.source) {
        (TransferMode::Direct, _) => None,
        (_, Some(path)) => {
            let bytes = read_bytes(path)?;
            Some((decode_checkpoint(&bytes)?, hash_bytes(&bytes)))
        }
        (_, None) => return Err(CliError::Usage("--source is required unless --mode direct".into())),
    };
    if let Some((ckpt, _)) = &source {
        cfg.model = ckpt.model;
    }

    let (params, detail) = match (a.mode, &source) {
        (TransferMode::Transfer, Some((ckpt, _))) => {
            let pair_seed = match a.pair_seed {
                Some(s) => s,
                None if sidecar_path(&a.target_data).exists() => {
                    read_json::<DatasetSidecar>(&sidecar_path(&a.target_data))?.seed
                }
                None => a.seed,
            };
            let pairs = make_pairs(&target, &cfg.scenario, pair_seed)?;
            let out = transfer_train(&cfg.model, &ckpt.params, &pairs, &cfg.transfer)?;
            println!("epoch,alignment_loss");
            for h in &out.history {
                println!("{},{}", h.epoch, h.loss);
            }
            if let Some(msg) = &out.aborted {
                eprintln!("warning: alignment stopped early ({msg})");
            }
            (out.params, json!({ "best_epoch": out.best_epoch, "aborted": out.aborted, "pair_seed": pair_seed }))
        }
        (TransferMode::Finetune, Some((ckpt, _))) => {
            let out = finetune_baseline(&cfg.model, &ckpt.params, &target, &target, &cfg.train)?;
            print_history(&out.history);
            (out.params, json!({ "best_epoch": out.best_epoch, "aborted": out.aborted }))
        }
        (TransferMode::Direct, _) => {
            let out = direct_train_baseline(&cfg.model, &target, &target, &cfg.train)?;
            print_history(&out.history);
            (out.params, json!({ "best_epoch": out.best_epoch, "aborted": out.aborted }))
        }
        _ => unreachable!("source presence checked above"),
    };
    let mode = match a.mode {
        TransferMode::Transfer => "transfer",
        TransferMode::Finetune => "finetune",
        TransferMode::Direct => "direct",
    };
    let run = json!({
        "command": "transfer",
        "mode": mode,
        "samples": a.samples,
        "source_sha256": source.as_ref().map(|s| s.1.clone()),
        "config": cfg,
        "config_hash": cfg.config_hash(),
        "result": detail,
    });
    write_checkpoint(&a.out, &Checkpoint { model: cfg.model, seed: a.seed, run, params })?;
    Ok(())
}

fn print_history(history: &[doa_core::model::EpochRecord]) {
    println!("epoch,train_loss,val_loss");
    for r in history {
        println!("{},{},{}", r.epoch, r.train_loss, r.val_loss);
    }
}
