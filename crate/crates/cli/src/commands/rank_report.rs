use std::path::PathBuf;

use anyhow::anyhow;
use clap::Args;
use serde::{Deserialize, Serialize};
use tera_core::adapters::{AnyAdapter, FrozenFactorStore};
use tera_core::analysis::{rank_report, RANK_REL_TOL};

use super::checkpoint::read;
use crate::exit::{CliError, CliResult, Status};
use crate::output::{ensure_dir, load_config, write_json, write_resolved_config, CONFIG_FORMAT_VERSION};

#[derive(Args, Debug)]
pub struct RankReportArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Checkpoint file. Repeatable.
    #[arg(long = "checkpoint")]
    checkpoints: Vec<PathBuf>,
    /// Directory whose `checkpoint*.json` files are all included.
    #[arg(long)]
    dir: Option<PathBuf>,
    /// Relative singular-value tolerance.
    #[arg(long)]
    tol: Option<f64>,
    /// Write `rank_report.csv`, `rank_report.json` and `config.json` here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RankReportConfig {
    pub format_version: u32,
    pub checkpoints: Vec<PathBuf>,
    pub tolerance: f64,
}

impl Default for RankReportConfig {
    fn default() -> Self {
        Self {
            format_version: CONFIG_FORMAT_VERSION,
            checkpoints: Vec::new(),
            tolerance: RANK_REL_TOL,
        }
    }
}

pub fn run(args: RankReportArgs) -> CliResult<()> {
    let mut cfg: RankReportConfig = load_config(args.config.as_ref())?;
    cfg.format_version = CONFIG_FORMAT_VERSION;
    if !args.checkpoints.is_empty() {
        cfg.checkpoints = args.checkpoints.clone();
    }
    if let Some(dir) = &args.dir {
        let entries = std::fs::read_dir(dir).map_err(|e| {
            CliError::new(Status::MissingArtifact, anyhow!("reading {}: {e}", dir.display()))
        })?;
        let mut found: Vec<PathBuf> = entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                p.file_name()
                    .and_then(|n| n.to_str())
                    .is_some_and(|n| n.starts_with("checkpoint") && n.ends_with(".json"))
            })
            .collect();
        found.sort();
        cfg.checkpoints.extend(found);
    }
    if let Some(t) = args.tol {
        cfg.tolerance = t;
    }
    if cfg.checkpoints.is_empty() {
        return Err(CliError::new(Status::MissingArtifact, anyhow!("no checkpoints given or found")));
    }

    let mut adapters: Vec<(String, AnyAdapter)> = Vec::new();
    for path in &cfg.checkpoints {
        let ck = read(path)?;
        let store = FrozenFactorStore::new(ck.required_seed().unwrap_or(0));
        let label = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("checkpoint")
            .to_string();
        adapters.push((label, ck.restore(&store)?));
    }
    let refs: Vec<(String, &AnyAdapter)> = adapters.iter().map(|(l, a)| (l.clone(), a)).collect();
    let report = rank_report(&refs, cfg.tolerance)?;
    let csv = report.to_csv();
    print!("{csv}");
    if let Some(dir) = &args.out {
        ensure_dir(dir)?;
        std::fs::write(dir.join("rank_report.csv"), &csv)?;
        write_json(&dir.join("rank_report.json"), &report)?;
        write_resolved_config(dir, &cfg)?;
    }
    Ok(())
}
