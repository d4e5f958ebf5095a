use crate::args::{ConfigArgs, GenArgs};
use crate::files::{resolve, sidecar_path, write_json, DatasetSidecar};
use crate::CliResult;
use doa_core::array_sim::{generate_dataset, write_dataset};

pub fn run(a: GenArgs) -> CliResult<()> {
    let cfg = resolve(&a.scenario, None, a.seed)?;
    let imp = cfg.imperfections.build(&cfg.scenario.geometry)?;
    let ds = generate_dataset(&cfg.scenario, &imp, a.count, a.seed)?;
    write_dataset(&a.out, &ds)?;
    let side = DatasetSidecar { config_hash: cfg.config_hash(), config: cfg, count: a.count, seed: a.seed };
    write_json(&sidecar_path(&a.out), &side)?;
    eprintln!("wrote {} records to {}", a.count, a.out.display());
    Ok(())
}

pub fn print_config(a: ConfigArgs) -> CliResult<()> {
    println!("{}", resolve(&a.scenario, None, a.seed)?.to_json());
    Ok(())
}
