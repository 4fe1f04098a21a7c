use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail};
use clap::Args;
use serde::{Deserialize, Serialize};
use tera_core::adapters::{save_checkpoint, Adapter, AnyAdapter, FactorInit, FrozenFactorStore};
use tera_core::rng::{derive_seed, gaussian_matrix, gaussian_vec, seeded};
use tera_core::training::{
    fit_mlp_adapt, fit_recovery, Algorithm, FamilyConfig, MlpAdaptTask, MlpTaskConfig,
    OptimizerConfig, RecoveryTask, TargetGenerator, TrainReport,
};
use tera_core::Matrix;

use super::family::{resolve, FamilyArgs};
use crate::exit::{CliError, CliResult, Status};
use crate::output::{ensure_dir, load_config, write_json, write_resolved_config, CONFIG_FORMAT_VERSION};
use crate::scheme::parse_shape;

#[derive(Args, Debug)]
pub struct FitArgs {
    /// JSON run config; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for the report, loss curve, checkpoints and config.
    #[arg(long)]
    out: PathBuf,
    /// recovery or mlp.
    #[arg(long)]
    task: Option<String>,
    /// Recovery target shape ROWSxCOLS.
    #[arg(long)]
    shape: Option<String>,
    /// Recovery target: gaussian, planted, rank:R.
    #[arg(long)]
    target: Option<String>,
    #[command(flatten)]
    family: FamilyArgs,
    /// Seed for targets, data and trainable initialization.
    #[arg(long)]
    seed: Option<u64>,
    /// Seed of the frozen-factor store.
    #[arg(long)]
    master_seed: Option<u64>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    warmup: Option<usize>,
    /// adamw or sgd.
    #[arg(long)]
    optimizer: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TaskConfig {
    Recovery {
        rows: usize,
        cols: usize,
        /// `planted` draws the target from the fitted family itself.
        target: TargetGenerator,
    },
    Mlp(MlpTaskConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub format_version: u32,
    pub task: TaskConfig,
    pub family: FamilyConfig,
    pub seed: u64,
    pub master_seed: u64,
    pub optimizer: OptimizerConfig,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            format_version: CONFIG_FORMAT_VERSION,
            task: TaskConfig::Recovery {
                rows: 64,
                cols: 64,
                target: TargetGenerator::Gaussian,
            },
            family: FamilyConfig::Tera {
                parts: 2,
                init: FactorInit::Random,
            },
            seed: 0,
            master_seed: 0,
            optimizer: OptimizerConfig::default(),
        }
    }
}

fn parse_target(s: &str) -> anyhow::Result<TargetGenerator> {
    Ok(match s {
        "gaussian" => TargetGenerator::Gaussian,
        "planted" => TargetGenerator::Planted,
        _ => match s.strip_prefix("rank:") {
            Some(r) => TargetGenerator::PrescribedRank {
                rank: r.parse().map_err(|_| anyhow!("bad target rank in '{s}'"))?,
            },
            None => bail!("target must be gaussian, planted or rank:R, got '{s}'"),
        },
    })
}

fn resolve_config(args: &FitArgs) -> CliResult<FitConfig> {
    let mut cfg: FitConfig = load_config(args.config.as_ref())?;
    cfg.format_version = CONFIG_FORMAT_VERSION;
    let apply = |cfg: &mut FitConfig| -> anyhow::Result<()> {
        match args.task.as_deref() {
            None => {}
            Some("recovery") if matches!(cfg.task, TaskConfig::Recovery { .. }) => {}
            Some("recovery") => {
                cfg.task = FitConfig::default().task;
            }
            Some("mlp") if matches!(cfg.task, TaskConfig::Mlp(_)) => {}
            Some("mlp") => cfg.task = TaskConfig::Mlp(MlpTaskConfig::default()),
            Some(other) => bail!("task must be recovery or mlp, got '{other}'"),
        }
        match &mut cfg.task {
            TaskConfig::Recovery { rows, cols, target } => {
                if let Some(s) = &args.shape {
                    (*rows, *cols) = parse_shape(s)?;
                }
                if let Some(t) = &args.target {
                    *target = parse_target(t)?;
                }
            }
            TaskConfig::Mlp(m) => {
                if args.shape.is_some() || args.target.is_some() {
                    bail!("--shape and --target apply to recovery tasks; set MLP widths in the config");
                }
                if let Some(seed) = args.seed {
                    m.seed = seed;
                }
            }
        }
        let (rows, cols) = match &cfg.task {
            TaskConfig::Recovery { rows, cols, .. } => (*rows, *cols),
            TaskConfig::Mlp(m) => {
                let first = m.adapted_layers.first().copied().unwrap_or(0);
                let w = m.widths.get(first..first + 2).ok_or_else(|| anyhow!("bad MLP widths"))?;
                (w[1], w[0])
            }
        };
        cfg.family = resolve(&args.family, &cfg.family, rows, cols)?;
        if let Some(s) = args.seed {
            cfg.seed = s;
        }
        if let Some(s) = args.master_seed {
            cfg.master_seed = s;
        }
        let o = &mut cfg.optimizer;
        if let Some(v) = args.steps {
            o.max_steps = v;
        }
        if let Some(v) = args.lr {
            o.learning_rate = v;
        }
        if let Some(v) = args.warmup {
            o.warmup_steps = v;
        }
        match args.optimizer.as_deref() {
            None => {}
            Some("adamw") => o.algorithm = Algorithm::AdamW,
            Some("sgd") => o.algorithm = Algorithm::SgdMomentum,
            Some(other) => bail!("optimizer must be adamw or sgd, got '{other}'"),
        }
        o.seed = cfg.seed;
        o.validate()?;
        Ok(())
    };
    apply(&mut cfg).map_err(CliError::config)?;
    Ok(cfg)
}

/// Synthetic frozen base for HiRA on recovery tasks.
fn recovery_base(rows: usize, cols: usize, seed: u64) -> Matrix {
    gaussian_matrix(&mut seeded(derive_seed(seed, &[7])), rows, cols).scale(1.0 / (cols as f64).sqrt())
}

/// Builds the adapter and task for a recovery run.
pub fn recovery_setup(
    family: &FamilyConfig,
    rows: usize,
    cols: usize,
    target: &TargetGenerator,
    seed: u64,
    store: &FrozenFactorStore,
) -> tera_core::Result<(AnyAdapter, RecoveryTask)> {
    let spec = family.spec_for(rows, cols)?;
    let base = recovery_base(rows, cols, seed);
    let adapter = spec.build(store, derive_seed(seed, &[8]), Some(&base))?;
    let task = match target {
        TargetGenerator::Planted => {
            let mut truth = adapter.clone();
            let n = truth.trainable_param_count();
            truth.set_params(&gaussian_vec(&mut seeded(derive_seed(seed, &[9])), n))?;
            RecoveryTask::planted(truth.materialize_delta(), seed)
        }
        g => RecoveryTask::generate(rows, cols, g.clone(), seed)?,
    };
    Ok((adapter, task))
}

fn write_outputs(dir: &Path, report: &TrainReport, adapters: &[(String, AnyAdapter)]) -> CliResult<()> {
    write_json(&dir.join("report.json"), report)?;
    std::fs::write(dir.join("loss.csv"), report.loss_csv())?;
    for (name, a) in adapters {
        save_checkpoint(a, &dir.join(name))?;
    }
    Ok(())
}

pub fn run(args: FitArgs) -> CliResult<()> {
    let cfg = resolve_config(&args)?;
    ensure_dir(&args.out)?;
    write_resolved_config(&args.out, &cfg)?;
    let store = FrozenFactorStore::new(cfg.master_seed);
    let (report, adapters) = match &cfg.task {
        TaskConfig::Recovery { rows, cols, target } => {
            let (mut adapter, task) = recovery_setup(&cfg.family, *rows, *cols, target, cfg.seed, &store)?;
            let report = fit_recovery(&mut adapter, &task, &cfg.optimizer)?;
            (report, vec![("checkpoint.json".to_string(), adapter)])
        }
        TaskConfig::Mlp(m) => {
            let task = MlpAdaptTask::new(m.clone())?;
            let (report, adapters) = fit_mlp_adapt(&task, &cfg.family, &store, &cfg.optimizer)?;
            let named = task
                .adapted_layers
                .iter()
                .zip(adapters)
                .map(|(l, a)| (format!("checkpoint_layer{l}.json"), a))
                .collect();
            (report, named)
        }
    };
    write_outputs(&args.out, &report, &adapters)?;
    if let Some(d) = report.diverged {
        return Err(CliError::new(
            Status::Divergence,
            anyhow!(
                "diverged at step {} (loss {}, initial {}); report written to {}",
                d.step,
                d.loss,
                d.initial_loss,
                args.out.display()
            ),
        ));
    }
    print!("family {} params {} final_loss {}", report.family, report.trainable_params, report.final_loss);
    if let Some(r) = report.final_relative_residual {
        print!(" relative_residual {r}");
    }
    if let (Some(t), Some(b)) = (report.target_accuracy, report.base_accuracy) {
        print!(" target_accuracy {t} base_accuracy {b}");
    }
    println!(" ranks {:?}", report.final_ranks);
    Ok(())
}
