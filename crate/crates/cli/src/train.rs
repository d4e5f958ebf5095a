use serde_json::json;

use crate::args::TrainArgs;
use crate::files::{apply_optim, dataset_config, resolve};
use crate::{CliError, CliResult};
use doa_core::array_sim::read_dataset;
use doa_core::model::{train_subset, write_checkpoint, Checkpoint, TransDoaParams};

pub fn run(a: TrainArgs) -> CliResult<()> {
    let mut cfg = resolve(&a.scenario, dataset_config(&a.train)?, a.seed)?;
    apply_optim(&mut cfg, &a.optim);
    let train_set = read_dataset(&a.train)?;
    let val_set = read_dataset(&a.val)?;
    let init = TransDoaParams::init(&cfg.model, a.seed);
    println!("epoch,train_loss,val_loss");
    let outcome = train_subset(&cfg.model, &init, &train_set, &val_set, &cfg.train, None, &mut |r| {
        println!("{},{},{}", r.epoch, r.train_loss, r.val_loss)
    })?;
    let run = json!({
        "command": "train",
        "config": cfg,
        "config_hash": cfg.config_hash(),
        "best_epoch": outcome.best_epoch,
        "best_val_loss": outcome.best_val_loss(),
        "stopped_early": outcome.stopped_early,
    });
    write_checkpoint(&a.out, &Checkpoint { model: cfg.model, seed: a.seed, run, params: outcome.params })?;
    if let Some(msg) = outcome.aborted {
        return Err(CliError::Numeric(format!("training aborted ({msg}); best checkpoint written to {}", a.out.display())));
    }
    Ok(())
}
