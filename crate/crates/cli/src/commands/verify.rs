use std::path::PathBuf;

use anyhow::{anyhow, bail};
use clap::Args;
use serde::{Deserialize, Serialize};
use tera_core::analysis::{
    random_theorem3_instance, summarize, verify_theorem1, verify_theorem2, verify_theorem3,
    TheoremReport, Verdict, CORE_REJECT_TOL, FACTORIZATION_LIMIT,
};
use tera_core::rng::derive_seed;
use tera_core::spectral::SpectralNormConfig;
use tera_core::training::AlsConfig;

use crate::exit::{CliError, CliResult, Status};
use crate::output::{
    ensure_dir, load_config, write_csv, write_json, write_resolved_config, CONFIG_FORMAT_VERSION,
};
use crate::scheme::{parse_scheme, parse_shape};

#[derive(Args, Debug)]
pub struct VerifyArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// 1, 2 or 3. Repeatable; defaults to all.
    #[arg(long = "theorem")]
    theorems: Vec<u8>,
    /// Scheme for the rank (1) and approximation (3) checks. Repeatable for 1.
    #[arg(long = "scheme")]
    schemes: Vec<String>,
    /// Trials per scheme for the rank check.
    #[arg(long)]
    trials: Option<usize>,
    /// Shape for the parameter-count check. Repeatable.
    #[arg(long = "shape")]
    shapes: Vec<String>,
    /// Factorizations enumerated per dimension.
    #[arg(long)]
    limit: Option<usize>,
    /// Random-target instances for the approximation check.
    #[arg(long)]
    instances: Option<usize>,
    /// Planted-target instances for the approximation check.
    #[arg(long)]
    planted: Option<usize>,
    /// ALS sweeps per instance.
    #[arg(long)]
    sweeps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Write per-theorem JSON reports, `summary.csv` and `config.json` here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RankCheck {
    pub schemes: Vec<String>,
    pub trials: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct CountCheck {
    pub shapes: Vec<[usize; 2]>,
    pub limit: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ApproxCheck {
    pub scheme: String,
    pub instances: usize,
    pub planted_instances: usize,
    pub als: AlsConfig,
    pub spectral: SpectralNormConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct VerifyConfig {
    pub format_version: u32,
    pub theorems: Vec<u8>,
    pub seed: u64,
    pub theorem1: RankCheck,
    pub theorem2: CountCheck,
    pub theorem3: ApproxCheck,
}

impl Default for RankCheck {
    fn default() -> Self {
        Self {
            schemes: [
                "4|2,2",
                "2,2,2|2,2,2",
                "4,4|4,4",
                "2,8|4,4",
                "32|4,8",
                "4,8|8,4",
                "4,4|4,4 r=2,3|4,1",
                "2,4,4|4,8 r=2,2,3|4,4",
            ]
            .map(String::from)
            .to_vec(),
            trials: 200,
        }
    }
}

impl Default for CountCheck {
    fn default() -> Self {
        Self {
            shapes: vec![[64, 64], [256, 256], [4096, 4096]],
            limit: FACTORIZATION_LIMIT,
        }
    }
}

impl Default for ApproxCheck {
    fn default() -> Self {
        Self {
            scheme: "2,4|2,4".into(),
            instances: 100,
            planted_instances: 100,
            als: AlsConfig::default(),
            spectral: SpectralNormConfig::default(),
        }
    }
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            format_version: CONFIG_FORMAT_VERSION,
            theorems: vec![1, 2, 3],
            seed: 0,
            theorem1: RankCheck::default(),
            theorem2: CountCheck::default(),
            theorem3: ApproxCheck::default(),
        }
    }
}

#[derive(Serialize)]
struct SummaryRow {
    theorem: u8,
    scheme: String,
    shape: String,
    trials: usize,
    target: String,
    verdict: Verdict,
    slack: f64,
}

fn resolve_config(args: &VerifyArgs, mut cfg: VerifyConfig) -> anyhow::Result<VerifyConfig> {
    cfg.format_version = CONFIG_FORMAT_VERSION;
    if !args.theorems.is_empty() {
        cfg.theorems = args.theorems.clone();
    }
    if let Some(bad) = cfg.theorems.iter().find(|t| !(1..=3).contains(*t)) {
        bail!("theorem must be 1, 2 or 3, got {bad}");
    }
    if !args.schemes.is_empty() {
        cfg.theorem1.schemes = args.schemes.clone();
        cfg.theorem3.scheme = args.schemes[0].clone();
    }
    if let Some(t) = args.trials {
        cfg.theorem1.trials = t;
    }
    if !args.shapes.is_empty() {
        cfg.theorem2.shapes = args
            .shapes
            .iter()
            .map(|s| parse_shape(s).map(|(r, c)| [r, c]))
            .collect::<anyhow::Result<_>>()?;
    }
    if let Some(l) = args.limit {
        cfg.theorem2.limit = l;
    }
    if let Some(n) = args.instances {
        cfg.theorem3.instances = n;
    }
    if let Some(n) = args.planted {
        cfg.theorem3.planted_instances = n;
    }
    if let Some(s) = args.sweeps {
        cfg.theorem3.als.sweeps = s;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

pub fn run(args: VerifyArgs) -> CliResult<()> {
    let cfg = resolve_config(&args, load_config(args.config.as_ref())?).map_err(CliError::config)?;
    let mut rows = Vec::new();
    let mut all: Vec<(u8, Vec<TheoremReport>)> = Vec::new();

    if cfg.theorems.contains(&1) {
        let mut reports = Vec::new();
        for (i, s) in cfg.theorem1.schemes.iter().enumerate() {
            let scheme = parse_scheme(s, None, None).map_err(CliError::config)?;
            let r = verify_theorem1(&scheme, cfg.theorem1.trials, derive_seed(cfg.seed, &[1, i as u64]))?;
            println!(
                "theorem1 {:<24} trials {} max_rank {} bound {} at_bound {:.3} {}",
                s,
                r.instance.trials,
                r.measured["max_rank"],
                r.measured["bound"],
                r.measured["fraction_at_bound"],
                r.verdict
            );
            rows.push(SummaryRow {
                theorem: 1,
                scheme: scheme.to_string(),
                shape: format!("{}x{}", r.instance.shape[0], r.instance.shape[1]),
                trials: r.instance.trials,
                target: String::new(),
                verdict: r.verdict,
                slack: r.slack,
            });
            reports.push(r);
        }
        all.push((1, reports));
    }

    if cfg.theorems.contains(&2) {
        let mut reports = Vec::new();
        for &[j1, j2] in &cfg.theorem2.shapes {
            let r = verify_theorem2(j1, j2, cfg.theorem2.limit)?;
            println!(
                "theorem2 {j1}x{j2} schemes {} min_sum {} max_sum {} budget {} {}",
                r.measured["schemes_checked"],
                r.measured["min_sum"],
                r.measured["max_sum"],
                r.measured["budget"],
                r.verdict
            );
            rows.push(SummaryRow {
                theorem: 2,
                scheme: r.instance.scheme.clone().unwrap_or_default(),
                shape: format!("{j1}x{j2}"),
                trials: r.instance.trials,
                target: String::new(),
                verdict: r.verdict,
                slack: r.slack,
            });
            reports.push(r);
        }
        all.push((2, reports));
    }

    if cfg.theorems.contains(&3) {
        let t3 = &cfg.theorem3;
        let scheme = parse_scheme(&t3.scheme, None, None).map_err(CliError::config)?;
        let mut reports = Vec::new();
        let mut rejected = 0;
        for (planted, count) in [(false, t3.instances), (true, t3.planted_instances)] {
            for i in 0..count {
                let seed = derive_seed(cfg.seed, &[3, u64::from(planted), i as u64]);
                let (a, w) = random_theorem3_instance(&scheme, seed, planted)?;
                if a.core().data().iter().any(|v| v.abs() < CORE_REJECT_TOL) {
                    rejected += 1;
                    continue;
                }
                let r = verify_theorem3(&w, &a, &t3.als, &t3.spectral)?;
                rows.push(SummaryRow {
                    theorem: 3,
                    scheme: scheme.to_string(),
                    shape: format!("{}x{}", r.instance.shape[0], r.instance.shape[1]),
                    trials: 1,
                    target: if planted { "planted" } else { "gaussian" }.into(),
                    verdict: r.verdict,
                    slack: r.slack,
                });
                reports.push(r);
            }
        }
        let s = summarize(&reports);
        println!(
            "theorem3 {} instances {} holds {} ({:.3}) inconclusive {} ({:.3}) violated {} rejected {}",
            scheme,
            s.instances,
            s.holds,
            s.holds_fraction(),
            s.inconclusive,
            s.inconclusive_fraction(),
            s.violated,
            rejected
        );
        all.push((3, reports));
    }

    if let Some(dir) = &args.out {
        ensure_dir(dir)?;
        for (t, reports) in &all {
            write_json(&dir.join(format!("theorem{t}.json")), reports)?;
        }
        write_csv(&dir.join("summary.csv"), &rows)?;
        write_resolved_config(dir, &cfg)?;
    }
    let violated = rows.iter().filter(|r| r.verdict == Verdict::Violated).count();
    if violated > 0 {
        return Err(CliError::new(Status::Violated, anyhow!("{violated} violated verdicts")));
    }
    Ok(())
}
