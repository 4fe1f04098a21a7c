use std::path::Path;

use anyhow::anyhow;
use serde::Serialize;
use tera_core::adapters::{Checkpoint, Family};

use crate::exit::{CliError, CliResult, Status};

#[derive(Serialize)]
struct Summary {
    format_version: u32,
    adapter_type: Family,
    shape: [usize; 2],
    scheme: Option<String>,
    rank: Option<usize>,
    trainable_params: usize,
    master_seed: Option<u64>,
    zero_init_mode: Option<usize>,
    has_base_weight: bool,
}

pub fn read(path: &Path) -> CliResult<Checkpoint> {
    if !path.exists() {
        return Err(CliError::new(
            Status::MissingArtifact,
            anyhow!("checkpoint {} does not exist", path.display()),
        ));
    }
    Ok(Checkpoint::read(path)?)
}

pub fn inspect(path: &Path) -> CliResult<()> {
    let ck = read(path)?;
    let summary = Summary {
        format_version: ck.format_version,
        adapter_type: ck.adapter_type,
        shape: ck.shape,
        scheme: ck.scheme.as_ref().map(ToString::to_string),
        rank: ck.rank,
        trainable_params: ck.trainable_len(),
        master_seed: ck.master_seed,
        zero_init_mode: ck.zero_init_mode,
        has_base_weight: ck.base_weight.is_some(),
    };
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}
