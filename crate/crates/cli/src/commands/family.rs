//! Adapter-family selection shared by `fit` and `ablate`.

use anyhow::{anyhow, bail, Result};
use clap::Args;
use tera_core::adapters::{FactorInit, Family};
use tera_core::training::{lora_rank_for_budget, vera_rank_for_budget, FamilyConfig};

use crate::scheme::parse_scheme;

#[derive(Args, Debug, Default, Clone)]
pub struct FamilyArgs {
    /// tera, tera_iden, lora, vera or hira.
    #[arg(long)]
    pub family: Option<String>,
    /// TeRA scheme such as `64|8,8` (takes precedence over --parts).
    #[arg(long)]
    pub scheme: Option<String>,
    /// Split position for schemes written without `|`.
    #[arg(long)]
    pub split: Option<usize>,
    /// TeRA ranks in scheme syntax; defaults to the mode sizes.
    #[arg(long)]
    pub ranks: Option<String>,
    /// One-sided TeRA: split the column dimension into this many equal modes.
    #[arg(long)]
    pub parts: Option<usize>,
    /// LoRA / VeRA / HiRA rank.
    #[arg(long)]
    pub rank: Option<usize>,
    /// Pick the baseline rank to match a budget: an integer or `tera:SCHEME`.
    #[arg(long)]
    pub match_budget_of: Option<String>,
}

impl FamilyArgs {
    fn touched(&self) -> bool {
        self.family.is_some()
            || self.scheme.is_some()
            || self.parts.is_some()
            || self.rank.is_some()
            || self.match_budget_of.is_some()
    }
}

fn budget(spec: &str) -> Result<usize> {
    if let Some(s) = spec.strip_prefix("tera:") {
        return Ok(parse_scheme(s, None, None)?.rank_sum());
    }
    spec.parse()
        .map_err(|_| anyhow!("--match-budget-of expects an integer or tera:SCHEME, got '{spec}'"))
}

/// Applies family flags on top of `current`. `(rows, cols)` is the layer
/// shape used for budget matching.
pub fn resolve(args: &FamilyArgs, current: &FamilyConfig, rows: usize, cols: usize) -> Result<FamilyConfig> {
    if !args.touched() {
        return Ok(current.clone());
    }
    let family: Family = match &args.family {
        Some(f) => f.parse()?,
        None => current.family(),
    };
    let target_budget = args.match_budget_of.as_deref().map(budget).transpose()?;
    let rank = |default: usize| -> Result<usize> {
        Ok(match (args.rank, target_budget) {
            (Some(_), Some(_)) => bail!("give either --rank or --match-budget-of, not both"),
            (Some(r), None) => r,
            (None, Some(b)) if family == Family::Vera => vera_rank_for_budget(rows, b)?,
            (None, Some(b)) => lora_rank_for_budget(rows, cols, b),
            (None, None) => default,
        })
    };
    let current_rank = match current {
        FamilyConfig::Lora { rank } | FamilyConfig::Vera { rank } | FamilyConfig::Hira { rank } => *rank,
        _ => 8,
    };
    Ok(match family {
        Family::Tera | Family::TeraIden => {
            if target_budget.is_some() {
                bail!("--match-budget-of applies to baseline families");
            }
            let init = if family == Family::TeraIden {
                FactorInit::Identity
            } else {
                FactorInit::Random
            };
            match (&args.scheme, args.parts, current) {
                (Some(s), _, _) => FamilyConfig::TeraScheme {
                    scheme: parse_scheme(s, args.split, args.ranks.as_deref())?,
                    init,
                },
                (None, Some(parts), _) => FamilyConfig::Tera { parts, init },
                (None, None, FamilyConfig::TeraScheme { scheme, .. }) => FamilyConfig::TeraScheme {
                    scheme: scheme.clone(),
                    init,
                },
                (None, None, FamilyConfig::Tera { parts, .. }) => FamilyConfig::Tera { parts: *parts, init },
                (None, None, _) => FamilyConfig::Tera { parts: 2, init },
            }
        }
        Family::Lora => FamilyConfig::Lora {
            rank: rank(current_rank)?,
        },
        Family::Vera => FamilyConfig::Vera {
            rank: rank(current_rank)?,
        },
        Family::Hira => FamilyConfig::Hira {
            rank: rank(current_rank)?,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vera_budget_matches_tera_scheme() {
        let args = FamilyArgs {
            family: Some("vera".into()),
            match_budget_of: Some("tera:64|8,8".into()),
            ..Default::default()
        };
        let cur = FamilyConfig::Tera {
            parts: 2,
            init: FactorInit::Random,
        };
        assert_eq!(resolve(&args, &cur, 64, 64).unwrap(), FamilyConfig::Vera { rank: 16 });
    }

    #[test]
    fn untouched_keeps_config() {
        let cur = FamilyConfig::Lora { rank: 3 };
        assert_eq!(resolve(&FamilyArgs::default(), &cur, 8, 8).unwrap(), cur);
    }

    #[test]
    fn identity_variant_from_scheme() {
        let args = FamilyArgs {
            family: Some("tera_iden".into()),
            scheme: Some("4|2,2".into()),
            ..Default::default()
        };
        let cur = FamilyConfig::Lora { rank: 3 };
        match resolve(&args, &cur, 4, 4).unwrap() {
            FamilyConfig::TeraScheme { init, scheme } => {
                assert_eq!(init, FactorInit::Identity);
                assert_eq!(scheme.rank_sum(), 8);
            }
            other => panic!("{other:?}"),
        }
    }
}
