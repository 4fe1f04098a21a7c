use std::collections::BTreeMap;
use std::path::PathBuf;

use anyhow::{anyhow, bail};
use clap::Args;
use serde::{Deserialize, Serialize};
use tera_core::adapters::{Adapter, FactorInit, FrozenFactorStore};
use tera_core::rng::derive_seed;
use tera_core::training::{
    fit_mlp_adapt, fit_recovery, FamilyConfig, MlpAdaptTask, MlpTaskConfig, OptimizerConfig,
    TargetGenerator,
};
use tera_core::TensorizationScheme;

use super::fit::recovery_setup;
use crate::exit::{CliError, CliResult, Status};
use crate::output::{ensure_dir, load_config, write_csv, write_resolved_config, CONFIG_FORMAT_VERSION};
use crate::scheme::{parse_scheme, parse_shape};

#[derive(Args, Debug)]
pub struct AblateArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for `runs.csv`, `frontier.csv` and `config.json`.
    #[arg(long)]
    out: PathBuf,
    /// recovery or mlp.
    #[arg(long)]
    task: Option<String>,
    /// Recovery target shape ROWSxCOLS.
    #[arg(long)]
    shape: Option<String>,
    /// Scheme to sweep. Repeatable; replaces the default list.
    #[arg(long = "scheme")]
    schemes: Vec<String>,
    /// Recovery targets (or MLP task seeds) per configuration.
    #[arg(long)]
    targets: Option<usize>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    master_seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AblateTask {
    Recovery { rows: usize, cols: usize },
    Mlp(MlpTaskConfig),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct AblateConfig {
    pub format_version: u32,
    pub task: AblateTask,
    pub schemes: Vec<String>,
    pub variants: Vec<FactorInit>,
    pub targets: usize,
    pub seed: u64,
    pub master_seed: u64,
    pub optimizer: OptimizerConfig,
}

impl Default for AblateConfig {
    fn default() -> Self {
        Self {
            format_version: CONFIG_FORMAT_VERSION,
            task: AblateTask::Recovery { rows: 64, cols: 64 },
            schemes: [
                "64|64", "64|8,8", "64|4,4,4", "64|2^6", "8,8|8,8", "4,4,4|4,4,4", "2^6|2^6",
            ]
            .map(String::from)
            .to_vec(),
            variants: vec![FactorInit::Random, FactorInit::Identity],
            targets: 3,
            seed: 0,
            master_seed: 0,
            optimizer: OptimizerConfig::default(),
        }
    }
}

#[derive(Debug, Serialize)]
struct RunRow {
    variant: String,
    scheme: String,
    sided: &'static str,
    target: usize,
    trainable_params: usize,
    metric: &'static str,
    value: f64,
}

#[derive(Debug, Serialize)]
struct FrontierRow {
    variant: String,
    scheme: String,
    sided: &'static str,
    trainable_params: usize,
    metric: &'static str,
    mean_value: f64,
}

fn sidedness(s: &TensorizationScheme) -> &'static str {
    if s.split() == 1 || s.split() == s.order() - 1 {
        "one_sided"
    } else {
        "two_sided"
    }
}

fn resolve_config(args: &AblateArgs, mut cfg: AblateConfig) -> anyhow::Result<AblateConfig> {
    cfg.format_version = CONFIG_FORMAT_VERSION;
    match args.task.as_deref() {
        None => {}
        Some("recovery") => {
            if !matches!(cfg.task, AblateTask::Recovery { .. }) {
                cfg.task = AblateTask::Recovery { rows: 64, cols: 64 };
            }
        }
        Some("mlp") => {
            if !matches!(cfg.task, AblateTask::Mlp(_)) {
                cfg.task = AblateTask::Mlp(MlpTaskConfig::default());
            }
        }
        Some(other) => bail!("task must be recovery or mlp, got '{other}'"),
    }
    if let Some(s) = &args.shape {
        match &mut cfg.task {
            AblateTask::Recovery { rows, cols } => (*rows, *cols) = parse_shape(s)?,
            AblateTask::Mlp(_) => bail!("--shape applies to recovery tasks"),
        }
    }
    if !args.schemes.is_empty() {
        cfg.schemes = args.schemes.clone();
    }
    if let Some(t) = args.targets {
        cfg.targets = t;
    }
    if cfg.targets == 0 {
        bail!("targets must be >= 1");
    }
    if let Some(s) = args.steps {
        cfg.optimizer.max_steps = s;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(s) = args.master_seed {
        cfg.master_seed = s;
    }
    cfg.optimizer.validate()?;
    Ok(cfg)
}

pub fn run(args: AblateArgs) -> CliResult<()> {
    let cfg = resolve_config(&args, load_config(args.config.as_ref())?).map_err(CliError::config)?;
    ensure_dir(&args.out)?;
    write_resolved_config(&args.out, &cfg)?;
    let store = FrozenFactorStore::new(cfg.master_seed);
    let mlp_tasks = match &cfg.task {
        AblateTask::Mlp(m) => (0..cfg.targets)
            .map(|t| {
                MlpAdaptTask::new(MlpTaskConfig {
                    seed: derive_seed(cfg.seed, &[t as u64]),
                    ..m.clone()
                })
            })
            .collect::<tera_core::Result<Vec<_>>>()?,
        AblateTask::Recovery { .. } => Vec::new(),
    };

    let mut runs = Vec::new();
    let mut skipped = 0;
    for s in &cfg.schemes {
        let scheme = parse_scheme(s, None, None).map_err(CliError::config)?;
        let feasible = match &cfg.task {
            AblateTask::Recovery { rows, cols } => scheme.check_matrix(*rows, *cols),
            AblateTask::Mlp(_) => mlp_tasks[0]
                .adapted_layers
                .iter()
                .map(|&l| {
                    let w = &mlp_tasks[0].base.weights[l];
                    scheme.check_matrix(w.rows(), w.cols())
                })
                .collect(),
        };
        if let Err(e) = feasible {
            eprintln!("skipping scheme {s}: {e}");
            skipped += 1;
            continue;
        }
        for &init in &cfg.variants {
            let family = FamilyConfig::TeraScheme {
                scheme: scheme.clone(),
                init,
            };
            for t in 0..cfg.targets {
                let seed = derive_seed(cfg.seed, &[t as u64]);
                let (params, metric, value, diverged) = match &cfg.task {
                    AblateTask::Recovery { rows, cols } => {
                        let (mut a, task) =
                            recovery_setup(&family, *rows, *cols, &TargetGenerator::Gaussian, seed, &store)?;
                        let r = fit_recovery(&mut a, &task, &cfg.optimizer)?;
                        let v = r.final_relative_residual.unwrap_or(f64::NAN);
                        (a.trainable_param_count(), "relative_residual", v, r.diverged.is_some())
                    }
                    AblateTask::Mlp(_) => {
                        let (r, _) = fit_mlp_adapt(&mlp_tasks[t], &family, &store, &cfg.optimizer)?;
                        let v = r.target_accuracy.unwrap_or(f64::NAN);
                        (r.trainable_params, "target_accuracy", v, r.diverged.is_some())
                    }
                };
                if diverged {
                    return Err(CliError::new(
                        Status::Divergence,
                        anyhow!("scheme {s} ({}) diverged on target {t}", family.family()),
                    ));
                }
                runs.push(RunRow {
                    variant: family.family().to_string(),
                    scheme: scheme.to_string(),
                    sided: sidedness(&scheme),
                    target: t,
                    trainable_params: params,
                    metric,
                    value,
                });
            }
        }
    }
    if runs.is_empty() {
        return Err(CliError::config(anyhow!("all {skipped} schemes were infeasible")));
    }

    let mut groups: BTreeMap<(usize, String, String), Vec<&RunRow>> = BTreeMap::new();
    for r in &runs {
        groups
            .entry((r.trainable_params, r.scheme.clone(), r.variant.clone()))
            .or_default()
            .push(r);
    }
    let frontier: Vec<FrontierRow> = groups
        .into_iter()
        .map(|((params, scheme, variant), rs)| FrontierRow {
            variant,
            scheme,
            sided: rs[0].sided,
            trainable_params: params,
            metric: rs[0].metric,
            mean_value: rs.iter().map(|r| r.value).sum::<f64>() / rs.len() as f64,
        })
        .collect();
    for f in &frontier {
        println!(
            "{:<10} {:<16} {:<9} params {:>5} {} {}",
            f.variant, f.scheme, f.sided, f.trainable_params, f.metric, f.mean_value
        );
    }
    write_csv(&args.out.join("runs.csv"), &runs)?;
    write_csv(&args.out.join("frontier.csv"), &frontier)?;
    Ok(())
}
