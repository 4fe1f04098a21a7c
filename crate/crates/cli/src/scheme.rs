//! Parsing of shapes (`64x64`) and tensorization schemes (`4,4|8,2`, `2^6|2^6`,
//! `2^24` with an explicit split, optional rank lists in the same syntax).

use anyhow::{anyhow, bail, Context, Result};
use tera_core::TensorizationScheme;

pub fn parse_shape(s: &str) -> Result<(usize, usize)> {
    let (a, b) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| anyhow!("shape '{s}' must look like ROWSxCOLS"))?;
    let rows = a.trim().parse().with_context(|| format!("bad row count in '{s}'"))?;
    let cols = b.trim().parse().with_context(|| format!("bad column count in '{s}'"))?;
    if rows == 0 || cols == 0 {
        bail!("shape '{s}' has a zero dimension");
    }
    Ok((rows, cols))
}

/// Comma-separated sizes where `n^m` stands for `m` copies of `n`.
fn parse_list(s: &str) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    for tok in s.split(',').map(str::trim) {
        if tok.is_empty() {
            bail!("empty mode size in '{s}'");
        }
        match tok.split_once('^') {
            Some((base, exp)) => {
                let base: usize = base.parse().with_context(|| format!("bad mode size '{tok}'"))?;
                let exp: usize = exp.parse().with_context(|| format!("bad exponent '{tok}'"))?;
                out.extend(std::iter::repeat_n(base, exp));
            }
            None => out.push(tok.parse().with_context(|| format!("bad mode size '{tok}'"))?),
        }
    }
    Ok(out)
}

/// Splits `left|right` into lists. `split` is only consulted when there is no `|`.
fn parse_sides(s: &str, split: Option<usize>) -> Result<(Vec<usize>, usize)> {
    match s.split_once('|') {
        Some((l, r)) => {
            let left = parse_list(l)?;
            let k = left.len();
            let mut all = left;
            all.extend(parse_list(r)?);
            Ok((all, k))
        }
        None => {
            let k = split.ok_or_else(|| {
                anyhow!("scheme '{s}' has no '|'; give the split position with --split")
            })?;
            Ok((parse_list(s)?, k))
        }
    }
}

/// Also accepts the display form `SIZES r=RANKS`.
pub fn parse_scheme(s: &str, split: Option<usize>, ranks: Option<&str>) -> Result<TensorizationScheme> {
    if let Some((sizes, inline)) = s.split_once(" r=") {
        if ranks.is_some() {
            bail!("'{s}' already lists ranks; drop --ranks");
        }
        return parse_scheme(sizes.trim(), split, Some(inline.trim()));
    }
    let (sizes, k) = parse_sides(s, split)?;
    let ranks = match ranks {
        Some(r) => {
            let (ranks, rk) = parse_sides(r, if r.contains('|') { None } else { Some(k) })?;
            if rk != k {
                bail!("rank list '{r}' splits after {rk} modes but the scheme splits after {k}");
            }
            ranks
        }
        None => sizes.clone(),
    };
    TensorizationScheme::new(sizes, k, ranks).map_err(|e| anyhow!("invalid scheme '{s}': {e}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_all_forms() {
        let s = parse_scheme("64,64|64,64", None, None).unwrap();
        assert_eq!(s.matrix_dims(), (4096, 4096));
        assert_eq!(s.rank_sum(), 256);
        let s = parse_scheme("2^24", Some(12), None).unwrap();
        assert_eq!(s.rank_sum(), 48);
        let s = parse_scheme("2^6|2^3,8", None, None).unwrap();
        assert_eq!(s.matrix_dims(), (64, 64));
        let s = parse_scheme("2,4|2,4", None, Some("1,2|2,2")).unwrap();
        assert_eq!(s.ranks(), &[1, 2, 2, 2]);
        assert_eq!(parse_scheme(&s.to_string(), None, None).unwrap(), s);
        let s = parse_scheme("64|8,8", None, None).unwrap();
        assert_eq!(s.to_string(), "64|8,8");
    }

    #[test]
    fn rejects_malformed_input() {
        assert!(parse_scheme("2^24", None, None).is_err());
        assert!(parse_scheme("4|4", Some(3), None).is_ok());
        assert!(parse_scheme("4,|4", None, None).is_err());
        assert!(parse_scheme("4|x", None, None).is_err());
        assert!(parse_scheme("1,4|4", None, None).is_err());
        assert!(parse_scheme("4|4", None, Some("5|4")).is_err());
        assert!(parse_shape("64").is_err());
        assert_eq!(parse_shape("8x16").unwrap(), (8, 16));
        assert!(parse_shape("0x3").is_err());
    }
}
