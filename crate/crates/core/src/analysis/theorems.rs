use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{InstanceDescriptor, TheoremReport, Verdict, THEOREM_REPORT_FORMAT_VERSION};
use crate::adapters::{check_dims, Adapter, FrozenFactorStore, TeraAdapter};
use crate::error::{Result, TeraError};
use crate::linalg::{numerical_rank, pseudoinverse, PINV_REL_CUTOFF, RANK_REL_TOL};
use crate::rng::{derive_seed, gaussian_matrix, seeded};
use crate::spectral::{tensor_spectral_norm, SpectralNormConfig};
use crate::tensor::{fold_to_shape, unfold, Matrix, TensorizationScheme};
use crate::training::{als_theorem3_lhs, AlsConfig};

/// Core entries smaller than this in magnitude make the elementwise division unstable.
pub const CORE_REJECT_TOL: f64 = 1e-10;
/// Rounding allowance for the bound comparison, relative to `‖W*‖_F²`.
pub const THEOREM3_REL_TOL: f64 = 1e-12;
/// Largest dimension whose factorizations are enumerated.
pub const FACTORIZATION_DIM_CAP: usize = 1 << 16;
/// Default cap on enumerated factorizations per dimension.
pub const FACTORIZATION_LIMIT: usize = 10_000;

fn report(
    theorem: u8,
    instance: InstanceDescriptor,
    measured: BTreeMap<String, f64>,
    verdict: Verdict,
    slack: f64,
    notes: Vec<String>,
) -> TheoremReport {
    TheoremReport {
        format_version: THEOREM_REPORT_FORMAT_VERSION,
        theorem,
        instance,
        measured,
        verdict,
        slack,
        notes,
    }
}

/// Random frozen parts (fresh per trial) and random scaling vectors with
/// magnitudes in `[0.5, 1.5]` and random signs. Checks the rank bound
/// `min(Π_{i≤k} R_i, Π_{i>k} R_i)` on every trial.
pub fn verify_theorem1(scheme: &TensorizationScheme, trials: usize, seed: u64) -> Result<TheoremReport> {
    if trials == 0 {
        return Err(TeraError::InvalidArgument("trials must be >= 1".into()));
    }
    let (j1, j2) = scheme.matrix_dims();
    let bound = scheme.rank_bound();
    let (mut min_rank, mut max_rank, mut at_bound, mut failures) = (usize::MAX, 0, 0, 0);
    for t in 0..trials as u64 {
        let store = FrozenFactorStore::new(derive_seed(seed, &[t, 0]));
        let mut a = TeraAdapter::new(j1, j2, scheme.clone(), &store)?;
        let mut rng = seeded(derive_seed(seed, &[t, 1]));
        let d: Vec<Vec<f64>> = scheme
            .ranks()
            .iter()
            .map(|&r| {
                (0..r)
                    .map(|_| {
                        let m: f64 = rng.random_range(0.5..=1.5);
                        if rng.random_bool(0.5) {
                            m
                        } else {
                            -m
                        }
                    })
                    .collect()
            })
            .collect();
        a.set_d_vectors(d)?;
        let rank = numerical_rank(&a.materialize_delta(), RANK_REL_TOL)?;
        min_rank = min_rank.min(rank);
        max_rank = max_rank.max(rank);
        at_bound += usize::from(rank == bound);
        failures += usize::from(rank > bound);
    }
    let measured = BTreeMap::from([
        ("bound".to_string(), bound as f64),
        ("min_rank".to_string(), min_rank as f64),
        ("max_rank".to_string(), max_rank as f64),
        ("fraction_at_bound".to_string(), at_bound as f64 / trials as f64),
        ("failures".to_string(), failures as f64),
    ]);
    Ok(report(
        1,
        InstanceDescriptor {
            shape: [j1, j2],
            scheme: Some(scheme.to_string()),
            seed: Some(seed),
            trials,
        },
        measured,
        if failures == 0 {
            Verdict::Holds
        } else {
            Verdict::Violated
        },
        bound as f64 - max_rank as f64,
        vec![format!("rank tolerance {RANK_REL_TOL:e} relative to the largest singular value")],
    ))
}

/// Ordered factorizations of `n` into factors `>= 2`, including `[n]`,
/// stopping after `limit` results. The flag reports truncation.
pub fn enumerate_factorizations(n: usize, limit: usize) -> (Vec<Vec<usize>>, bool) {
    fn go(n: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>, limit: usize) -> bool {
        for d in 2..=n {
            if n % d != 0 {
                continue;
            }
            if out.len() >= limit {
                return true;
            }
            prefix.push(d);
            if d == n {
                out.push(prefix.clone());
            } else if go(n / d, prefix, out, limit) {
                prefix.pop();
                return true;
            }
            prefix.pop();
        }
        false
    }
    let mut out = Vec::new();
    let truncated = n >= 2 && go(n, &mut Vec::new(), &mut out, limit);
    (out, truncated)
}

/// Checks `Σ I_i <= J1 + J2` for every pair of enumerated row and column
/// factorizations (with `R_i = I_i`) and records the minimizing scheme.
pub fn verify_theorem2(j1: usize, j2: usize, limit: usize) -> Result<TheoremReport> {
    for d in [j1, j2] {
        if !(2..=FACTORIZATION_DIM_CAP).contains(&d) {
            return Err(TeraError::InvalidArgument(format!(
                "dimension {d} outside 2..={FACTORIZATION_DIM_CAP}"
            )));
        }
    }
    if limit == 0 {
        return Err(TeraError::InvalidArgument("enumeration limit must be >= 1".into()));
    }
    let (rows, trunc_rows) = enumerate_factorizations(j1, limit);
    let (cols, trunc_cols) = enumerate_factorizations(j2, limit);
    let row_sums: Vec<usize> = rows.iter().map(|f| f.iter().sum()).collect();
    let col_sums: Vec<usize> = cols.iter().map(|f| f.iter().sum()).collect();
    let budget = j1 + j2;
    let (mut failures, mut max_sum) = (0usize, 0usize);
    let mut best = (usize::MAX, 0, 0);
    for (ri, &rs) in row_sums.iter().enumerate() {
        for (ci, &cs) in col_sums.iter().enumerate() {
            let s = rs + cs;
            failures += usize::from(s > budget);
            max_sum = max_sum.max(s);
            if s < best.0 {
                best = (s, ri, ci);
            }
        }
    }
    let join = |f: &[usize]| f.iter().map(ToString::to_string).collect::<Vec<_>>().join(",");
    let minimizer = TensorizationScheme::from_sides(&rows[best.1], &cols[best.2])?;
    let mut notes = vec![format!("minimizer {}|{}", join(&rows[best.1]), join(&cols[best.2]))];
    if trunc_rows || trunc_cols {
        notes.push(format!("enumeration truncated at {limit} factorizations per dimension"));
    }
    let measured = BTreeMap::from([
        ("budget".to_string(), budget as f64),
        ("schemes_checked".to_string(), (rows.len() * cols.len()) as f64),
        ("min_sum".to_string(), best.0 as f64),
        ("max_sum".to_string(), max_sum as f64),
        ("failures".to_string(), failures as f64),
    ]);
    Ok(report(
        2,
        InstanceDescriptor {
            shape: [j1, j2],
            scheme: Some(minimizer.to_string()),
            seed: None,
            trials: rows.len() * cols.len(),
        },
        measured,
        if failures == 0 {
            Verdict::Holds
        } else {
            Verdict::Violated
        },
        budget as f64 - max_sum as f64,
        notes,
    ))
}

/// Random instance on `scheme` with its own frozen store. The target is
/// either Gaussian with `N(0, 1/J2)` entries or planted in the adapter family.
pub fn random_theorem3_instance(
    scheme: &TensorizationScheme,
    seed: u64,
    planted: bool,
) -> Result<(TeraAdapter, Matrix)> {
    let (j1, j2) = scheme.matrix_dims();
    let store = FrozenFactorStore::new(derive_seed(seed, &[0]));
    let a = TeraAdapter::new(j1, j2, scheme.clone(), &store)?;
    let target = if planted {
        let mut truth = a.clone();
        let mut rng = seeded(derive_seed(seed, &[1]));
        let d = scheme
            .ranks()
            .iter()
            .map(|&r| (0..r).map(|_| rng.random_range(-1.5..=1.5)).collect())
            .collect();
        truth.set_d_vectors(d)?;
        truth.materialize_delta()
    } else {
        gaussian_matrix(&mut seeded(derive_seed(seed, &[2])), j1, j2).scale(1.0 / (j2 as f64).sqrt())
    };
    Ok((a, target))
}

/// Evaluates the approximation bound on one instance.
///
/// The right-hand side uses `L = (⊗_{i≤k} A^(i))ᵀ` and the column factor in
/// its natural `Π_{i>k} R_i × J2` shape, `Z = L† W* Rk† ⊘ G_[N;k]`, and the
/// largest absolute core entry as `g_max`. The left-hand side comes from
/// alternating least squares and overestimates the true minimum, so a
/// failed comparison is reported as inconclusive rather than violated.
pub fn verify_theorem3(
    target: &Matrix,
    adapter: &TeraAdapter,
    als: &AlsConfig,
    spectral: &SpectralNormConfig,
) -> Result<TheoremReport> {
    check_dims(adapter.dims(), target.dims(), "bound target")?;
    let scheme = adapter.scheme();
    let core = adapter.core();
    if let Some(v) = core.data().iter().find(|v| v.abs() < CORE_REJECT_TOL) {
        return Err(TeraError::InvalidArgument(format!(
            "core entry {v:e} is below {CORE_REJECT_TOL:e} in magnitude"
        )));
    }

    // Confirm the Kronecker form reproduces the network before using its factors.
    let mut probe = adapter.clone();
    probe.set_d_vectors(scheme.ranks().iter().map(|&r| vec![1.0; r]).collect())?;
    let direct = probe.materialize_delta();
    let kron = probe.materialize_kronecker();
    let mismatch = direct.sub(&kron)?.frobenius_norm() / direct.frobenius_norm().max(f64::MIN_POSITIVE);
    if mismatch > 1e-10 {
        return Err(TeraError::InvalidArgument(format!(
            "Kronecker form disagrees with the network by {mismatch:e}"
        )));
    }

    let l = adapter.left_kron();
    let rk = adapter.right_kron().transpose();
    let l_pinv = pseudoinverse(&l, PINV_REL_CUTOFF)?;
    let rk_pinv = pseudoinverse(&rk, PINV_REL_CUTOFF)?;
    let projected = l.matmul(&l_pinv)?.matmul(target)?.matmul(&rk_pinv)?.matmul(&rk)?;
    let projection_term = target.sub(&projected)?.frobenius_norm().powi(2);

    let g = unfold(core, scheme.split())?;
    let coeffs = l_pinv.matmul(target)?.matmul(&rk_pinv)?;
    let z = Matrix::from_fn(coeffs.rows(), coeffs.cols(), |i, j| coeffs.get(i, j) / g.get(i, j));
    let z_fro2 = z.frobenius_norm().powi(2);
    let z_tensor = fold_to_shape(&z, scheme.ranks(), scheme.split())?;
    let spec = tensor_spectral_norm(&z_tensor, spectral)?;
    let g_max = core.data().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    // ‖Z‖_F ≥ ‖Z‖_2 exactly; a negative gap is rounding in a rank-1 Z.
    let gap = (z_fro2 - spec.value * spec.value).max(0.0);
    let scale = l.frobenius_norm().powi(2) * rk.frobenius_norm().powi(2);
    let rhs = projection_term + g_max * gap * scale;
    let rhs_sq = projection_term + g_max * g_max * gap * scale;

    let als_report = als_theorem3_lhs(adapter, target, als)?;
    let lhs = als_report.objective;
    let tolerance = THEOREM3_REL_TOL * target.frobenius_norm().powi(2);
    let verdict = if lhs <= rhs + tolerance {
        Verdict::Holds
    } else {
        Verdict::Inconclusive
    };

    let mut notes = vec!["g_max is the largest absolute core entry".to_string()];
    if als_report.ridge_used {
        notes.push("a rank-deficient least-squares step was ridge-regularized".into());
    }
    if !spec.converged {
        notes.push("spectral-norm iteration hit its iteration cap".into());
    }
    let measured = BTreeMap::from([
        ("lhs_est".to_string(), lhs),
        ("rhs".to_string(), rhs),
        ("rhs_with_g_max_squared".to_string(), rhs_sq),
        ("projection_term".to_string(), projection_term),
        ("g_max".to_string(), g_max),
        ("z_frobenius_sq".to_string(), z_fro2),
        ("z_spectral_est".to_string(), spec.value),
        ("l_frobenius".to_string(), l.frobenius_norm()),
        ("rk_frobenius".to_string(), rk.frobenius_norm()),
        ("target_frobenius_sq".to_string(), target.frobenius_norm().powi(2)),
        ("kronecker_mismatch".to_string(), mismatch),
        ("tolerance".to_string(), tolerance),
    ]);
    Ok(report(
        3,
        InstanceDescriptor {
            shape: [adapter.dims().0, adapter.dims().1],
            scheme: Some(scheme.to_string()),
            seed: Some(adapter.master_seed()),
            trials: 1,
        },
        measured,
        verdict,
        rhs - lhs,
        notes,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Theorem3Summary {
    pub instances: usize,
    pub holds: usize,
    pub inconclusive: usize,
    pub violated: usize,
}

impl Theorem3Summary {
    pub fn holds_fraction(&self) -> f64 {
        self.holds as f64 / self.instances.max(1) as f64
    }

    pub fn inconclusive_fraction(&self) -> f64 {
        self.inconclusive as f64 / self.instances.max(1) as f64
    }
}

pub fn summarize(reports: &[TheoremReport]) -> Theorem3Summary {
    let mut s = Theorem3Summary {
        instances: reports.len(),
        ..Default::default()
    };
    for r in reports {
        match r.verdict {
            Verdict::Holds => s.holds += 1,
            Verdict::Inconclusive => s.inconclusive += 1,
            Verdict::Violated => s.violated += 1,
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rank_bound_from_reduced_ranks() {
        let scheme = TensorizationScheme::new(vec![4, 4, 4, 4], 2, vec![4, 4, 4, 4]).unwrap();
        let r = verify_theorem1(&scheme, 3, 0).unwrap();
        assert_eq!(r.verdict, Verdict::Holds);
        assert_eq!(r.measured["bound"], 16.0);
        let ones = TensorizationScheme::new(vec![2, 3, 2, 2], 2, vec![1, 1, 1, 1]).unwrap();
        let r = verify_theorem1(&ones, 10, 1).unwrap();
        assert_eq!(r.measured["max_rank"], 1.0);
        assert_eq!(r.verdict, Verdict::Holds);
    }

    #[test]
    fn full_ranks_give_full_rank_updates() {
        let scheme = TensorizationScheme::from_sides(&[32], &[4, 8]).unwrap();
        let r = verify_theorem1(&scheme, 5, 2).unwrap();
        assert_eq!(r.measured["bound"], 32.0);
        assert_eq!(r.measured["fraction_at_bound"], 1.0);
    }

    #[test]
    fn factorizations_of_small_numbers() {
        let (f, t) = enumerate_factorizations(12, 100);
        assert!(!t);
        // 12, 2·6, 6·2, 3·4, 4·3, 2·2·3, 2·3·2, 3·2·2
        assert_eq!(f.len(), 8);
        assert!(f.iter().all(|x| x.iter().product::<usize>() == 12));
        assert_eq!(enumerate_factorizations(7, 10).0, vec![vec![7]]);
        let (f, t) = enumerate_factorizations(64, 3);
        assert!(t);
        assert_eq!(f.len(), 3);
    }

    #[test]
    fn parameter_sums_at_4096() {
        let r = verify_theorem2(4096, 4096, FACTORIZATION_LIMIT).unwrap();
        assert_eq!(r.verdict, Verdict::Holds);
        assert_eq!(r.measured["min_sum"], 48.0);
        assert_eq!(r.measured["max_sum"], 8192.0);
        assert_eq!(r.measured["schemes_checked"], 2048.0 * 2048.0);
        assert!(verify_theorem2(1, 4, 10).is_err());
    }

    #[test]
    fn planted_instance_holds() {
        let scheme = TensorizationScheme::from_sides(&[2, 4], &[2, 4]).unwrap();
        let (a, w) = random_theorem3_instance(&scheme, 3, true).unwrap();
        let r = verify_theorem3(&w, &a, &AlsConfig::default(), &SpectralNormConfig::default()).unwrap();
        assert!(r.measured["lhs_est"] <= 1e-8, "{:?}", r.measured);
        assert_eq!(r.verdict, Verdict::Holds);
    }

    #[test]
    fn target_outside_column_space_has_full_projection_residual() {
        let scheme = TensorizationScheme::new(vec![2, 4, 2, 4], 2, vec![1, 2, 2, 4]).unwrap();
        let (a, x) = random_theorem3_instance(&scheme, 4, false).unwrap();
        let l = a.left_kron();
        let proj = l.matmul(&pseudoinverse(&l, PINV_REL_CUTOFF).unwrap()).unwrap();
        let w = x.sub(&proj.matmul(&x).unwrap()).unwrap();
        let r = verify_theorem3(&w, &a, &AlsConfig::default(), &SpectralNormConfig::default()).unwrap();
        let expected = w.frobenius_norm().powi(2);
        assert!((r.measured["projection_term"] - expected).abs() <= 1e-10 * expected);
    }

    #[test]
    fn tiny_core_entry_is_rejected() {
        let scheme = TensorizationScheme::from_sides(&[2], &[2]).unwrap();
        let (a, w) = random_theorem3_instance(&scheme, 5, false).unwrap();
        let mut core = a.core().clone();
        core.data_mut()[0] = 0.0;
        let a = a
            .with_frozen(crate::adapters::TeraFactors {
                core,
                factors: a.factors().to_vec(),
            })
            .unwrap();
        assert!(verify_theorem3(&w, &a, &AlsConfig::default(), &SpectralNormConfig::default()).is_err());
    }
}
