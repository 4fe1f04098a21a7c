use std::path::PathBuf;

use anyhow::anyhow;
use clap::Args;
use serde::{Deserialize, Serialize};
use tera_core::adapters::{AdapterSpec, FactorInit};

use crate::exit::{CliError, CliResult};
use crate::output::{ensure_dir, load_config, write_csv, write_resolved_config, CONFIG_FORMAT_VERSION};
use crate::scheme::{parse_scheme, parse_shape};

#[derive(Args, Debug)]
pub struct ParamCountArgs {
    /// JSON run config; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Matrix shape ROWSxCOLS; defaults to the first scheme's shape.
    #[arg(long)]
    shape: Option<String>,
    /// TeRA scheme, e.g. `64,64|64,64` or `2^24 --split 12`. Repeatable.
    #[arg(long = "scheme")]
    schemes: Vec<String>,
    #[arg(long)]
    split: Option<usize>,
    /// Ranks for a single scheme, in scheme syntax.
    #[arg(long)]
    ranks: Option<String>,
    /// Baseline rank for LoRA, VeRA and HiRA rows. Repeatable.
    #[arg(long = "rank")]
    baseline_ranks: Vec<usize>,
    /// Also write `param_count.csv` and `config.json` here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct ParamCountConfig {
    pub format_version: u32,
    pub shape: Option<[usize; 2]>,
    pub schemes: Vec<String>,
    pub split: Option<usize>,
    pub ranks: Option<String>,
    pub baseline_ranks: Vec<usize>,
}

#[derive(Debug, Serialize)]
struct Row {
    family: String,
    config: String,
    rows: usize,
    cols: usize,
    trainable_params: usize,
}

pub fn run(args: ParamCountArgs) -> CliResult<()> {
    let mut cfg: ParamCountConfig = load_config(args.config.as_ref())?;
    cfg.format_version = CONFIG_FORMAT_VERSION;
    if let Some(s) = &args.shape {
        let (r, c) = parse_shape(s).map_err(CliError::config)?;
        cfg.shape = Some([r, c]);
    }
    if !args.schemes.is_empty() {
        cfg.schemes = args.schemes.clone();
    }
    if args.split.is_some() {
        cfg.split = args.split;
    }
    if args.ranks.is_some() {
        cfg.ranks = args.ranks.clone();
    }
    if !args.baseline_ranks.is_empty() {
        cfg.baseline_ranks = args.baseline_ranks.clone();
    }
    if cfg.ranks.is_some() && cfg.schemes.len() != 1 {
        return Err(CliError::config(anyhow!("--ranks needs exactly one --scheme")));
    }

    let schemes = cfg
        .schemes
        .iter()
        .map(|s| parse_scheme(s, cfg.split, cfg.ranks.as_deref()))
        .collect::<anyhow::Result<Vec<_>>>()
        .map_err(CliError::config)?;
    let [rows, cols] = match (cfg.shape, schemes.first()) {
        (Some(s), _) => s,
        (None, Some(s)) => {
            let (r, c) = s.matrix_dims();
            [r, c]
        }
        (None, None) => {
            return Err(CliError::config(anyhow!("give --shape or at least one --scheme")));
        }
    };
    cfg.shape = Some([rows, cols]);

    let mut out = Vec::new();
    for s in schemes {
        s.check_matrix(rows, cols).map_err(CliError::config)?;
        let spec = AdapterSpec::Tera {
            scheme: s.clone(),
            init: FactorInit::Random,
        };
        out.push(Row {
            family: "tera".into(),
            config: s.to_string(),
            rows,
            cols,
            trainable_params: spec.trainable_param_count(),
        });
    }
    for &rank in &cfg.baseline_ranks {
        for spec in [
            AdapterSpec::Lora { rows, cols, rank },
            AdapterSpec::Vera { rows, cols, rank },
            AdapterSpec::Hira { rows, cols, rank },
        ] {
            spec.validate().map_err(CliError::config)?;
            out.push(Row {
                family: spec.family().to_string(),
                config: format!("r={rank}"),
                rows,
                cols,
                trainable_params: spec.trainable_param_count(),
            });
        }
    }

    for r in &out {
        println!("{:<6} {:<24} {}x{}  {}", r.family, r.config, r.rows, r.cols, r.trainable_params);
    }
    if let Some(dir) = &args.out {
        ensure_dir(dir)?;
        write_csv(&dir.join("param_count.csv"), &out)?;
        write_resolved_config(dir, &cfg)?;
    }
    Ok(())
}
