//! Acceptance suite: one PASS/FAIL line per criterion. Exits non-zero if any
//! criterion fails.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use tera_core::adapters::{
    AdapterSpec, AnyAdapter, FactorInit, FrozenFactorStore, HiraAdapter, LoraAdapter,
    TeraAdapter, TeraOptions, VeraAdapter,
};
use tera_core::adapters::Adapter;
use tera_core::analysis::{
    random_theorem3_instance, summarize, verify_theorem1, verify_theorem2, verify_theorem3,
    Verdict, FACTORIZATION_LIMIT,
};
use tera_core::linalg::{numerical_rank, RANK_REL_TOL};
use tera_core::rng::{derive_seed, gaussian_matrix, gaussian_vec, seeded};
use tera_core::spectral::SpectralNormConfig;
use tera_core::tensor::strides;
use tera_core::training::{
    finite_difference_check, fit_recovery, AlsConfig, FrobeniusLoss, MlpAdaptTask, MlpTaskConfig,
    OptimizerConfig, RecoveryTask, TargetGenerator, FD_STEP,
};
use tera_core::{Matrix, TensorizationScheme};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn scheme(s: &[usize], r: &[usize]) -> TensorizationScheme {
    TensorizationScheme::from_sides(s, r).unwrap()
}

fn criterion_1() -> Outcome {
    let count = |scheme| AdapterSpec::Tera {
        scheme,
        init: FactorInit::Random,
    }
    .trainable_param_count();
    let four = count(scheme(&[64, 64], &[64, 64]));
    let binary = count(TensorizationScheme::full_rank(vec![2; 24], 12).unwrap());
    let vera = AdapterSpec::Vera {
        rows: 4096,
        cols: 4096,
        rank: 4096,
    }
    .trainable_param_count();
    outcome(
        four == 256 && binary == 48 && vera >= 8192,
        format!("64^4 -> {four}, 2^24 -> {binary}, VeRA full rank -> {vera}"),
    )
}

fn criterion_2() -> Outcome {
    let full = [
        scheme(&[4], &[2, 2]),
        scheme(&[2, 2, 2], &[2, 2, 2]),
        scheme(&[4, 4], &[4, 4]),
        scheme(&[32], &[4, 8]),
        scheme(&[4, 8], &[8, 4]),
    ];
    let reduced = [
        TensorizationScheme::new(vec![4, 4, 4, 4], 2, vec![2, 3, 4, 1]).unwrap(),
        TensorizationScheme::new(vec![2, 4, 4, 4, 8], 3, vec![2, 2, 3, 4, 4]).unwrap(),
    ];
    let (mut total, mut within, mut full_total, mut full_hits) = (0usize, 0usize, 0usize, 0f64);
    for (i, s) in full.iter().chain(&reduced).enumerate() {
        let trials = if i < full.len() { 160 } else { 100 };
        let r = verify_theorem1(s, trials, derive_seed(1, &[i as u64])).unwrap();
        total += trials;
        within += trials - r.measured["failures"] as usize;
        if i < full.len() {
            let (j1, j2) = s.matrix_dims();
            assert_eq!(r.measured["bound"] as usize, j1.min(j2));
            full_total += trials;
            full_hits += r.measured["fraction_at_bound"] * trials as f64;
        }
    }
    let frac = full_hits / full_total as f64;
    outcome(
        within == total && total == 1000 && frac >= 0.99,
        format!(
            "rank within bound {within}/{total} over {} schemes; full rank with R_i=I_i in {:.1}%",
            full.len() + reduced.len(),
            100.0 * frac
        ),
    )
}

fn criterion_3() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for d in [64, 256, 4096] {
        let r = verify_theorem2(d, d, FACTORIZATION_LIMIT).unwrap();
        let truncated = r.notes.iter().any(|n| n.contains("truncated"));
        ok &= r.verdict == Verdict::Holds && r.measured["failures"] == 0.0 && !truncated;
        if d == 4096 {
            ok &= r.measured["min_sum"] == 48.0;
        }
        parts.push(format!(
            "{d}x{d}: {} schemes, min {}",
            r.measured["schemes_checked"], r.measured["min_sum"]
        ));
    }
    outcome(ok, parts.join("; "))
}

fn criterion_4() -> Outcome {
    let s = scheme(&[2, 4], &[2, 4]);
    let (als, spec) = (AlsConfig::default(), SpectralNormConfig::default());
    let mut random = Vec::new();
    for i in 0..100 {
        let (a, w) = random_theorem3_instance(&s, derive_seed(4, &[0, i]), false).unwrap();
        random.push(verify_theorem3(&w, &a, &als, &spec).unwrap());
    }
    let mut planted_ok = 0;
    for i in 0..100 {
        let (a, w) = random_theorem3_instance(&s, derive_seed(4, &[1, i]), true).unwrap();
        let r = verify_theorem3(&w, &a, &als, &spec).unwrap();
        if r.verdict == Verdict::Holds && r.measured["lhs_est"] <= 1e-8 {
            planted_ok += 1;
        }
    }
    let sum = summarize(&random);
    outcome(
        sum.violated == 0 && planted_ok == 100,
        format!(
            "random: holds {:.2}, inconclusive {:.2}, violated {}; planted holds with lhs <= 1e-8: {planted_ok}/100",
            sum.holds_fraction(),
            sum.inconclusive_fraction(),
            sum.violated
        ),
    )
}

fn criterion_5() -> Outcome {
    let store = FrozenFactorStore::new(5);
    let shapes = [
        (&[2, 3][..], &[2, 2][..]),
        (&[4][..], &[2, 3][..]),
        (&[3][..], &[3, 3][..]),
        (&[2, 2][..], &[2, 2, 2][..]),
        (&[8][..], &[2, 4][..]),
    ];
    let mut worst: f64 = 0.0;
    for i in 0..50u64 {
        let (l, r) = shapes[i as usize % shapes.len()];
        let s = scheme(l, r);
        let (j1, j2) = s.matrix_dims();
        let mut a: AnyAdapter = match i % 4 {
            0 => TeraAdapter::new(j1, j2, s, &store).unwrap().into(),
            1 => LoraAdapter::new(j1, j2, 2, i).into(),
            2 => VeraAdapter::new(j1, j2, 3, &store).unwrap().into(),
            _ => HiraAdapter::new(2, gaussian_matrix(&mut seeded(i), j1, j2), i)
                .unwrap()
                .into(),
        };
        let n = a.trainable_param_count();
        a.set_params(&gaussian_vec(&mut seeded(derive_seed(5, &[i])), n)).unwrap();
        let loss = FrobeniusLoss {
            target: gaussian_matrix(&mut seeded(derive_seed(6, &[i])), j1, j2),
        };
        worst = worst.max(finite_difference_check(&a, &loss, FD_STEP).unwrap().max_rel_error);
    }
    outcome(worst < 1e-5, format!("worst relative error {worst:.2e} over 50 instances"))
}

/// Direct sum over every core index for every output entry.
fn nested_loop_delta(a: &TeraAdapter) -> Matrix {
    let s = a.scheme();
    let (sizes, ranks, k) = (s.mode_sizes(), s.ranks(), s.split());
    let (j1, j2) = s.matrix_dims();
    let (si, sr) = (strides(sizes), strides(ranks));
    let n_r: usize = ranks.iter().product();
    Matrix::from_fn(j1, j2, |row, col| {
        let flat = row * j2 + col;
        let idx: Vec<usize> = (0..sizes.len()).map(|m| flat / si[m] % sizes[m]).collect();
        debug_assert!(k <= sizes.len());
        (0..n_r)
            .map(|fr| {
                let r: Vec<usize> = (0..ranks.len()).map(|m| fr / sr[m] % ranks[m]).collect();
                (0..sizes.len()).fold(a.core().get(&r), |acc, m| {
                    acc * a.d_vectors()[m][r[m]] * a.factors()[m].get(r[m], idx[m])
                })
            })
            .sum()
    })
}

fn criterion_6() -> Outcome {
    let schemes = [
        TensorizationScheme::new(vec![4, 4], 1, vec![3, 4]).unwrap(),
        scheme(&[2, 8], &[2, 8]),
        TensorizationScheme::new(vec![2, 2, 4, 4], 2, vec![2, 1, 3, 4]).unwrap(),
        scheme(&[16], &[4, 4]),
        TensorizationScheme::new(vec![2, 3, 2, 4], 2, vec![2, 2, 1, 3]).unwrap(),
    ];
    let mut worst: f64 = 0.0;
    for i in 0..100u64 {
        let s = schemes[i as usize % schemes.len()].clone();
        let (j1, j2) = s.matrix_dims();
        let store = FrozenFactorStore::new(derive_seed(6, &[i]));
        let mut a = TeraAdapter::new(j1, j2, s.clone(), &store).unwrap();
        a.set_params(&gaussian_vec(&mut seeded(derive_seed(7, &[i])), s.rank_sum()))
            .unwrap();
        let oracle = nested_loop_delta(&a);
        let norm = oracle.frobenius_norm();
        for m in [a.materialize_delta(), a.materialize_kronecker()] {
            worst = worst.max(m.sub(&oracle).unwrap().frobenius_norm() / norm);
        }
    }
    outcome(worst <= 1e-10, format!("worst relative difference {worst:.2e} over 100 instances"))
}

/// One-sided binomial tail `P(X >= wins)` for `X ~ Bin(n, 1/2)`.
fn sign_test_p(wins: usize, n: usize) -> f64 {
    let mut c = 1.0f64;
    let mut tail = 0.0;
    for k in 0..=n {
        if k >= wins {
            tail += c;
        }
        c = c * (n - k) as f64 / (k + 1) as f64;
    }
    tail / 2f64.powi(n as i32)
}

fn recovery_residual(a: &mut AnyAdapter, task: &RecoveryTask) -> f64 {
    let r = fit_recovery(a, task, &OptimizerConfig::default()).unwrap();
    assert!(r.diverged.is_none());
    r.final_relative_residual.unwrap()
}

fn gaussian_targets() -> Vec<RecoveryTask> {
    (0..20)
        .map(|t| {
            RecoveryTask::generate(64, 64, TargetGenerator::Gaussian, derive_seed(2024, &[t])).unwrap()
        })
        .collect()
}

fn criterion_7() -> Outcome {
    let store = FrozenFactorStore::new(0);
    let tera_scheme = scheme(&[64], &[8, 8]);
    let budget = tera_scheme.rank_sum();
    let vera_rank = budget - 64;
    let (mut st, mut sv, mut wins, mut ties) = (0.0, 0.0, 0, 0);
    for task in gaussian_targets() {
        let mut t: AnyAdapter = TeraAdapter::new(64, 64, tera_scheme.clone(), &store).unwrap().into();
        let mut v: AnyAdapter = VeraAdapter::new(64, 64, vera_rank, &store).unwrap().into();
        assert_eq!(t.trainable_param_count(), v.trainable_param_count());
        let (rt, rv) = (recovery_residual(&mut t, &task), recovery_residual(&mut v, &task));
        st += rt;
        sv += rv;
        wins += usize::from(rt < rv);
        ties += usize::from(rt == rv);
    }
    let n = 20 - ties;
    let p = sign_test_p(wins, n);
    let (mt, mv) = (st / 20.0, sv / 20.0);
    outcome(
        mt < mv && p < 0.05,
        format!(
            "budget {budget}: TeRA mean residual {mt:.5}, VeRA r={vera_rank} {mv:.5}; TeRA wins {wins}/{n}, sign-test p = {p:.3}"
        ),
    )
}

fn criterion_8() -> Outcome {
    let task = MlpAdaptTask::new(MlpTaskConfig::default()).unwrap();
    let ft = OptimizerConfig {
        max_steps: 300,
        warmup_steps: 0,
        ..Default::default()
    };
    let deltas = task.full_finetune_deltas(&ft).unwrap();
    let store = FrozenFactorStore::new(0);
    let (mut tera_ranks, mut lora_ranks, mut vera_ranks) = (vec![], vec![], vec![]);
    for (l, target) in deltas.iter().enumerate() {
        let (j1, j2) = target.dims();
        let rtask = RecoveryTask::planted(target.clone(), l as u64);
        let cfg = OptimizerConfig::default();
        let rank_after = |mut a: AnyAdapter| {
            let r = fit_recovery(&mut a, &rtask, &cfg).unwrap();
            assert!(r.diverged.is_none());
            numerical_rank(&a.materialize_delta(), RANK_REL_TOL).unwrap()
        };
        let s = TensorizationScheme::one_sided(j1, j2, 2).unwrap();
        tera_ranks.push(rank_after(TeraAdapter::new(j1, j2, s, &store).unwrap().into()));
        lora_ranks.push(rank_after(LoraAdapter::new(j1, j2, 8, l as u64).into()));
        vera_ranks.push(rank_after(VeraAdapter::new(j1, j2, 8, &store).unwrap().into()));
    }
    let need = (0.95 * 64.0f64).ceil() as usize;
    let pass = deltas.len() == 3
        && tera_ranks.iter().all(|&r| r >= need)
        && lora_ranks.iter().chain(&vera_ranks).all(|&r| r <= 8);
    outcome(
        pass,
        format!("ranks per layer: TeRA {tera_ranks:?} (need >= {need}), LoRA r=8 {lora_ranks:?}, VeRA r=8 {vera_ranks:?}"),
    )
}

fn criterion_9() -> Outcome {
    let store = FrozenFactorStore::new(0);
    let s = scheme(&[64], &[8, 8]);
    let (mut st, mut si) = (0.0, 0.0);
    for task in gaussian_targets() {
        let mut t: AnyAdapter = TeraAdapter::new(64, 64, s.clone(), &store).unwrap().into();
        let opts = TeraOptions {
            factor_init: FactorInit::Identity,
            ..Default::default()
        };
        let mut i: AnyAdapter = TeraAdapter::with_options(64, 64, s.clone(), &store, opts)
            .unwrap()
            .into();
        st += recovery_residual(&mut t, &task);
        si += recovery_residual(&mut i, &task);
    }
    let (mt, mi) = (st / 20.0, si / 20.0);
    outcome(
        mt <= mi,
        format!("mean residual TeRA {mt:.5}, TeRA_iden {mi:.5}, difference {:+.5}", mt - mi),
    )
}

fn run_tera(args: &[&str]) -> bool {
    Command::new(env!("CARGO_BIN_EXE_tera"))
        .args(args)
        .output()
        .map(|o| o.status.success())
        .unwrap_or(false)
}

fn csv_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .collect();
    files.sort();
    files
        .into_iter()
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect()
}

fn criterion_10() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let commands: Vec<(&str, Vec<&str>)> = vec![
        ("fit", vec!["fit", "--shape", "16x16", "--parts", "2", "--steps", "500"]),
        ("fit_mlp", vec!["fit", "--task", "mlp", "--family", "vera", "--rank", "8", "--steps", "50"]),
        ("verify", vec!["verify", "--theorem", "1", "--theorem", "3", "--trials", "20", "--instances", "5", "--planted", "5"]),
        ("ablate", vec!["ablate", "--shape", "16x16", "--scheme", "16|4,4", "--scheme", "4,4|4,4", "--targets", "2", "--steps", "200"]),
        ("param_count", vec!["param-count", "--scheme", "64,64|64,64", "--rank", "8"]),
    ];
    let mut compared = 0;
    for (name, args) in &commands {
        let mut outputs = Vec::new();
        for rep in 0..2 {
            let dir = tmp.path().join(format!("{name}_{rep}"));
            let dir_s = dir.to_string_lossy().into_owned();
            let mut full: Vec<&str> = args.clone();
            full.extend(["--out", &dir_s]);
            if !run_tera(&full) {
                return outcome(false, format!("`tera {}` failed", args.join(" ")));
            }
            outputs.push(csv_bytes(&dir));
        }
        if outputs[0].is_empty() || outputs[0] != outputs[1] {
            return outcome(false, format!("{name}: CSV outputs differ between identical runs"));
        }
        compared += outputs[0].len();
    }
    let (a, b) = (tmp.path().join("rank_0"), tmp.path().join("rank_1"));
    for d in [&a, &b] {
        let ck = tmp.path().join("fit_0").join("checkpoint.json");
        if !run_tera(&["rank-report", "--checkpoint", &ck.to_string_lossy(), "--out", &d.to_string_lossy()]) {
            return outcome(false, "rank-report failed");
        }
    }
    let same = csv_bytes(&a) == csv_bytes(&b);
    compared += csv_bytes(&a).len();
    outcome(same, format!("{compared} CSV files byte-identical across reruns of 6 commands"))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome, Duration); 10] = [
        ("parameter-count parity", criterion_1, Duration::from_secs(1)),
        ("rank bound suite", criterion_2, Duration::from_secs(60)),
        ("parameter-sum suite", criterion_3, Duration::from_secs(60)),
        ("approximation bound suite", criterion_4, Duration::from_secs(300)),
        ("gradient correctness", criterion_5, Duration::from_secs(60)),
        ("oracle equivalence", criterion_6, Duration::from_secs(60)),
        ("expressivity at matched budget", criterion_7, Duration::from_secs(600)),
        ("rank analysis on toy MLP", criterion_8, Duration::from_secs(600)),
        ("initialization ablation", criterion_9, Duration::from_secs(600)),
        ("determinism", criterion_10, Duration::from_secs(600)),
    ];
    let mut failed = 0;
    for (i, (name, f, limit)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let o = f();
        let took = start.elapsed();
        let pass = o.pass && took <= *limit;
        failed += usize::from(!pass);
        println!(
            "criterion {:>2} {} {name}: {} ({:.2}s, limit {}s)",
            i + 1,
            if pass { "PASS" } else { "FAIL" },
            o.detail,
            took.as_secs_f64(),
            limit.as_secs()
        );
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
