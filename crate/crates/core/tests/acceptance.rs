//! Acceptance suite: one PASS/FAIL line per criterion.

use std::panic;
use std::process::ExitCode;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use onebit_precoder::admm::{factorization_count, project_omega, v_update, Continuation};
use onebit_precoder::cli::{execute, ExperimentConfig, Overrides};
use onebit_precoder::model::{mmse_objective, optimal_rho, stack_vec};
use onebit_precoder::sim::{
    draw_channel, run_point, run_sweep, runtime_scaling, trial_rng, ChannelScale, CsiConvention, CsiError,
    ErrorModel,
};
use onebit_precoder::{
    exhaustive_min, AdmmConfig, AdmmPrecoder, BerReport, ComplexChannel, Constellation, LinearKind,
    LinearPrecoder, Modulation, PrecoderKind, SpectralCache, SystemConfig, TrialSpec, C64,
};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn symbols(rng: &mut ChaCha8Rng, modulation: Modulation, users: usize) -> DVector<C64> {
    let c = Constellation::new(modulation);
    DVector::from_fn(users, |_, _| c.point(rng.random_range(0..c.len())))
}

fn instance(seed: u64, index: u64, sys: &SystemConfig) -> (ComplexChannel, DVector<C64>) {
    let mut rng = trial_rng(seed, index);
    let h = draw_channel(sys.num_users, sys.num_antennas, ChannelScale::UnitComponent, &mut rng);
    let s = symbols(&mut rng, sys.modulation, sys.num_users);
    (h, s)
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn separated(better: &BerReport, worse: &BerReport) -> bool {
    better.ber < worse.ber && better.ci_hi < worse.ci_lo
}

fn fmt_ber(r: &BerReport) -> String {
    format!("{:.3e} [{:.2e}, {:.2e}]", r.ber, r.ci_lo, r.ci_hi)
}

fn convergence_speed() -> Outcome {
    let start = Instant::now();
    let (mut ok, mut total) = (0, 0);
    let mut worst = 0usize;
    for snr in [-10.0, 0.0, 10.0] {
        let sys = SystemConfig::from_snr_db(4, 16, snr, Modulation::Qpsk).unwrap();
        for i in 0..100 {
            let (h, s) = instance(101, i, &sys);
            let out = AdmmPrecoder::new(h, sys, AdmmConfig::default()).unwrap().precode(&s).unwrap();
            total += 1;
            if let (true, Some(fixed)) = (out.converged, out.lambda_fixed_at()) {
                let after = out.iters_used - fixed;
                worst = worst.max(after);
                if after <= 60 {
                    ok += 1;
                }
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let share = ok as f64 / total as f64;
    check(
        share >= 0.95 && secs < 10.0,
        format!("{ok}/{total} converged within 60 iterations at the target penalty (max {worst}), {secs:.2} s"),
    )
}

fn lagrangian_monotone() -> Outcome {
    let cfg = AdmmConfig {
        continuation: Continuation::fixed(),
        ..AdmmConfig::default()
    };
    let mut violations = 0;
    let mut steps = 0;
    for (users, antennas) in [(4, 16), (8, 64)] {
        for i in 0..1000u64 {
            let snr = -10.0 + 30.0 * (i % 7) as f64 / 6.0;
            let sys = SystemConfig::from_snr_db(users, antennas, snr, Modulation::Qpsk).unwrap();
            let (h, s) = instance(202, i, &sys);
            let out = AdmmPrecoder::new(h, sys, cfg).unwrap().precode(&s).unwrap();
            for pair in out.lagrangian_trace.windows(2) {
                steps += 1;
                if pair[1] > pair[0] + 1e-10 * pair[0].abs() {
                    violations += 1;
                }
            }
        }
    }
    check(violations == 0, format!("{violations} increases over {steps} steps on 2000 instances"))
}

fn projection_correct() -> Outcome {
    let start = Instant::now();
    let mut rng = trial_rng(303, 0);
    let mut worst = f64::NEG_INFINITY;
    for k in 0..10_000 {
        let n = 2 * (1 + k % 5);
        let scale = 10f64.powf(rng.random_range(-3.0..3.0));
        let omega = DVector::from_fn(n, |_, _| scale * rng.sample::<f64, _>(StandardNormal));
        let got = (&omega - project_omega(&omega)).norm();
        let best = (0..1u32 << n)
            .map(|bits| {
                let theta = DVector::from_fn(n, |i, _| if bits >> i & 1 == 1 { -1.0 } else { 1.0 });
                let a = (theta.dot(&omega) / n as f64).max(0.0);
                (&omega - theta * a).norm()
            })
            .fold(f64::INFINITY, f64::min);
        worst = worst.max(got - best);
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        worst <= 1e-12 && secs < 30.0,
        format!("max excess distance {worst:.2e} over 10^4 projections, {secs:.2} s"),
    )
}

fn oracle_bound() -> Outcome {
    let sys = SystemConfig::from_snr_db(2, 4, 0.0, Modulation::Qpsk).unwrap();
    let eps2 = sys.noise_variance;
    let (mut below_oracle, mut beats_zf) = (0, 0);
    let mut min_gap = f64::INFINITY;
    for i in 0..1000 {
        let (h, s) = instance(404, i, &sys);
        let objective = |z: &DVector<C64>| mmse_objective(&h, &s, z, optimal_rho(&h, &s, z, eps2), eps2);
        let oracle = exhaustive_min(&h, &s, &sys).unwrap().objective;
        let admm = objective(&AdmmPrecoder::new(h.clone(), sys, AdmmConfig::default()).unwrap().precode(&s).unwrap().z);
        let zf = LinearPrecoder::build(&h, LinearKind::Zf, &sys).unwrap();
        let zf = objective(&zf.precode_quantized(&h, &s, &sys).unwrap().z);
        min_gap = min_gap.min(admm - oracle);
        if admm < oracle - 1e-9 {
            below_oracle += 1;
        }
        if admm <= zf {
            beats_zf += 1;
        }
    }
    check(
        below_oracle == 0 && beats_zf > 500,
        format!("{below_oracle} below oracle (min gap {min_gap:.2e}), ADMM <= ZF_Q in {beats_zf}/1000"),
    )
}

fn ber_large_system() -> Outcome {
    let start = Instant::now();
    let sys = SystemConfig::from_snr_db(20, 128, 0.0, Modulation::Qpsk).unwrap();
    let grid = [-5.0, 0.0, 5.0, 10.0, 15.0, 20.0];
    let specs: Vec<TrialSpec> = [PrecoderKind::Admm, PrecoderKind::ZfQ]
        .iter()
        .flat_map(|&p| grid.iter().map(move |&snr| TrialSpec::new(sys, p, snr, 505, 300)))
        .collect();
    let reports = run_sweep(&specs, 0).unwrap();
    let (admm, zf) = reports.split_at(grid.len());
    let top = grid.len() - 1;
    let floor = zf[top - 1].ber < 2.0 * zf[top].ber && zf[top].ber < 2.0 * zf[top - 1].ber;
    let secs = start.elapsed().as_secs_f64();
    check(
        separated(&admm[top], &zf[top]) && floor && secs < 900.0,
        format!(
            "20 dB: ADMM {} vs ZF_Q {}; ZF_Q 15 dB {:.3e}, 20 dB {:.3e}; {secs:.1} s",
            fmt_ber(&admm[top]),
            fmt_ber(&zf[top]),
            zf[top - 1].ber,
            zf[top].ber
        ),
    )
}

fn modulation_ordering() -> Outcome {
    let specs: Vec<TrialSpec> = [Modulation::Qpsk, Modulation::Qam16, Modulation::Qam64]
        .iter()
        .map(|&m| {
            let sys = SystemConfig::from_snr_db(10, 128, 0.0, m).unwrap();
            TrialSpec::new(sys, PrecoderKind::Admm, 0.0, 606, 200)
        })
        .collect();
    let r = run_sweep(&specs, 0).unwrap();
    check(
        separated(&r[0], &r[1]) && separated(&r[1], &r[2]),
        format!("0 dB: QPSK {}, 16QAM {}, 64QAM {}", fmt_ber(&r[0]), fmt_ber(&r[1]), fmt_ber(&r[2])),
    )
}

fn csi_robustness() -> Outcome {
    let sys = SystemConfig::from_snr_db(16, 128, 0.0, Modulation::Qpsk).unwrap();
    let mut ok = true;
    let mut worst = String::new();
    let mut worst_ratio = 0.0;
    for model in [ErrorModel::Gaussian, ErrorModel::Uniform] {
        for delta in [0.1, 0.25, 0.4] {
            let specs: Vec<TrialSpec> = [PrecoderKind::Admm, PrecoderKind::ZfQ]
                .iter()
                .map(|&p| TrialSpec {
                    csi: CsiError {
                        delta,
                        model,
                        convention: CsiConvention::Corrected,
                    },
                    ..TrialSpec::new(sys, p, 0.0, 707, 200)
                })
                .collect();
            let r = run_sweep(&specs, 0).unwrap();
            ok &= separated(&r[0], &r[1]);
            let ratio = r[0].ci_hi / r[1].ci_lo;
            if ratio > worst_ratio {
                worst_ratio = ratio;
                worst = format!("{} delta {delta}: ADMM {} vs ZF_Q {}", model.name(), fmt_ber(&r[0]), fmt_ber(&r[1]));
            }
        }
    }
    check(ok, format!("closest case {worst}"))
}

fn iteration_complexity() -> Outcome {
    let sys = SystemConfig::from_snr_db(16, 64, 10.0, Modulation::Qam16).unwrap();
    let (h, s) = instance(808, 0, &sys);
    let pre = AdmmPrecoder::new(h, sys, AdmmConfig::default()).unwrap();
    let mut run = pre.start(&s).unwrap();
    run.step();
    let after_first = factorization_count();
    for _ in 0..200 {
        run.step();
    }
    let extra = factorization_count() - after_first;

    let cfg = AdmmConfig {
        continuation: Continuation::fixed(),
        rel_tol: 1e-300,
        max_iters: 200,
        ..AdmmConfig::default()
    };
    let antennas = [64, 128, 256, 512];
    let rows = runtime_scaling(&sys, &antennas, 10.0, 5, 808, &cfg, ChannelScale::UnitComponent).unwrap();
    let xs: Vec<f64> = rows.iter().map(|r| (r.antennas as f64).ln()).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.mean_iter_s.ln()).collect();
    let (mx, my) = (xs.iter().sum::<f64>() / 4.0, ys.iter().sum::<f64>() / 4.0);
    let slope = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>()
        / xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>();
    let times: Vec<String> = rows.iter().map(|r| format!("R={} {:.2e} s", r.antennas, r.mean_iter_s)).collect();
    check(
        extra == 0 && slope <= 2.5,
        format!("{extra} factorizations after iteration 1; slope {slope:.2} ({})", times.join(", ")),
    )
}

fn fast_path_equivalence() -> Outcome {
    let mut worst: f64 = 0.0;
    for i in 0..100 {
        let snr = -10.0 + 5.0 * (i % 7) as f64;
        let sys = SystemConfig::from_snr_db(8, 32, snr, Modulation::Qpsk).unwrap();
        let (h, s) = instance(909, i, &sys);
        let mut rng = trial_rng(910, i);
        let cache = SpectralCache::from_channel(&h);
        let hs = h.stacked();
        let n = hs.ncols();
        let c = onebit_precoder::admm::reg_coefficient(8, sys.noise_variance, sys.total_power);
        let target = onebit_precoder::admm::lambda_target(cache.phi(), c, 1e-3);
        let lambda = target / 2f64.powi(rng.random_range(0..9));
        let u = DVector::from_fn(n, |_, _| if rng.random::<bool>() { 0.3 } else { -0.3 });
        let w = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let s_t = stack_vec(&s);
        let fast = v_update(&cache, &s_t, &u, &w, c, lambda);
        let a = hs.transpose() * hs * 2.0 + DMatrix::identity(n, n) * (2.0 * c + lambda);
        let rhs = hs.tr_mul(&s_t) * 2.0 + &u * lambda + &w;
        let dense = a.cholesky().expect("shifted Gram matrix is positive definite").solve(&rhs);
        worst = worst.max((fast - dense).amax());
    }
    check(worst <= 1e-8, format!("max abs difference {worst:.2e} over 100 instances"))
}

const DETERMINISM_CONFIGS: [&str; 5] = [
    r#"
experiment = "ber_sweep"
[system]
users = 8
antennas = 32
modulation = "qam16"
[sweep]
snr_grid_db = [0.0, 10.0]
precoders = ["admm", "zf_q", "mrt_q", "zfi"]
trials = 40
base_seed = 1001
"#,
    r#"
experiment = "csi_sweep"
[system]
users = 8
antennas = 32
modulation = "qpsk"
[sweep]
snr_grid_db = [0.0]
delta_grid = [0.1, 0.4]
error_models = ["gaussian", "uniform"]
precoders = ["admm", "zf_q"]
trials = 30
base_seed = 1002
"#,
    r#"
experiment = "convergence"
[system]
users = 4
antennas = 16
modulation = "qpsk"
[sweep]
snr_grid_db = [-10.0, 0.0, 10.0]
base_seed = 1003
"#,
    r#"
experiment = "oracle_gap"
[system]
users = 2
antennas = 4
modulation = "qpsk"
[sweep]
snr_grid_db = [0.0]
trials = 50
base_seed = 1004
"#,
    r#"
experiment = "runtime_scaling"
[system]
users = 4
modulation = "qam16"
[sweep]
snr_grid_db = [10.0]
antennas = [16, 32]
trials = 3
base_seed = 1005
"#,
];

fn strip_timing(csv: &str, drop: &[&str]) -> String {
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap_or_default().split(',').collect();
    let keep: Vec<usize> = (0..header.len()).filter(|&i| !drop.contains(&header[i])).collect();
    std::iter::once(header.join(","))
        .chain(lines.map(String::from))
        .map(|line| {
            let cells: Vec<&str> = line.split(',').collect();
            keep.iter().map(|&i| cells[i]).collect::<Vec<_>>().join(",") + "\n"
        })
        .collect()
}

fn determinism() -> Outcome {
    let dir = std::env::temp_dir().join(format!("onebit-acceptance-{}", std::process::id()));
    let mut mismatched = Vec::new();
    for text in DETERMINISM_CONFIGS {
        let cfg = ExperimentConfig::parse(text).unwrap();
        let drop = cfg.experiment.timing_columns();
        let outputs: Vec<String> = [1, 8]
            .iter()
            .map(|&workers| {
                let overrides = Overrides {
                    out: Some(dir.join(format!("{}-{workers}", cfg.experiment.name()))),
                    seed: None,
                    workers: Some(workers),
                };
                let summary = execute(cfg.clone(), &overrides).unwrap();
                strip_timing(&std::fs::read_to_string(summary.csv_path).unwrap(), drop)
            })
            .collect();
        if outputs[0] != outputs[1] {
            mismatched.push(cfg.experiment.name());
        }
    }
    let _ = std::fs::remove_dir_all(&dir);

    let sys = SystemConfig::from_snr_db(16, 64, 0.0, Modulation::Qpsk).unwrap();
    let spec = TrialSpec::new(sys, PrecoderKind::Admm, 0.0, 1006, 64);
    let counts = |workers| {
        let pool = onebit_precoder::sim::worker_pool(workers).unwrap();
        let r = pool.install(|| run_point(&spec)).unwrap();
        (r.bit_errors, r.bits_sent, r.failed_trials, r.mean_iters.to_bits())
    };
    let same_counts = counts(1) == counts(8);
    check(
        mismatched.is_empty() && same_counts,
        format!("5 experiment CSVs and BER counts compared at 1 and 8 workers; mismatches: {mismatched:?}"),
    )
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("convergence speed", convergence_speed),
        ("augmented Lagrangian monotone at the target penalty", lagrangian_monotone),
        ("projection onto the constant-modulus set", projection_correct),
        ("exhaustive oracle bound", oracle_bound),
        ("BER ordering 128x20 QPSK", ber_large_system),
        ("modulation ordering 128x10", modulation_ordering),
        ("CSI-error robustness 128x16", csi_robustness),
        ("per-iteration complexity", iteration_complexity),
        ("spectral fast path equals dense solve", fast_path_equivalence),
        ("determinism across worker counts", determinism),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failures = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let id = (i + 1).to_string();
        if !filter.is_empty() && !filter.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let outcome = panic::catch_unwind(f).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {id:>2} {name}: {detail} ({secs:.1} s)"),
            Err(detail) => {
                failures += 1;
                println!("FAIL {id:>2} {name}: {detail} ({secs:.1} s)");
            }
        }
    }
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
