//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so the report is always printed. Exits
//! nonzero when any criterion fails.

#[path = "../../core/tests/common/mod.rs"]
mod oracle;

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use walshnet_core::gradcheck::{
    check_layer, check_smooth_threshold, check_weighted_threshold, toy_layer_suite, GradCheckReport,
};
use walshnet_core::transform::fwht_2d_counted;
use walshnet_core::{
    bwht_expand, bwht_project, fwht2d_layer, fwht_1d, fwht_expand, fwht_project, hadamard_matrix, param_count,
    walsh_matrix, Dims4, Factor, LayerConfig, Normalization, OpCount, Ordering, Tensor4, ThresholdParams, WalshSpec,
};
use walshnet_train::bench::{run_bench, BenchKind, BenchOptions};
use walshnet_train::gradcheck::{check_model, toy_model_spec};
use walshnet_train::{presets, run_experiment, ExperimentConfig, Model};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(start: Instant, limit: Duration, what: &str) -> Result<(), String> {
    let spent = start.elapsed();
    ensure(spent <= limit, || format!("{what} took {spent:.1?}, limit {limit:?}"))
}

fn cli_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn transform_correctness() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for order in 0..=6u32 {
        let dense_h = oracle::sylvester(order);
        let dense_w = oracle::sequency(order);
        let m = 1usize << order;
        for (ordering, matrix) in [(Ordering::Hadamard, &dense_h), (Ordering::WalshSequency, &dense_w)] {
            let spec = WalshSpec::for_len(m, ordering, Normalization::None).map_err(|e| e.to_string())?;
            for _ in 0..1000 {
                let x = random_vec(&mut rng, m);
                let fast = fwht_1d(&x, spec).map_err(|e| e.to_string())?;
                worst = worst.max(oracle::max_abs_diff(&fast, &oracle::matvec(matrix, &x)));
            }
        }
        let h = hadamard_matrix(order).map_err(|e| e.to_string())?;
        let w = walsh_matrix(order).map_err(|e| e.to_string())?;
        for i in 0..m {
            for j in 0..m {
                ensure(f64::from(h.get(i, j)) == dense_h[i][j] && f64::from(w.get(i, j)) == dense_w[i][j], || {
                    format!("matrix entry ({i},{j}) differs at order {order}")
                })?;
            }
        }
    }
    ensure(worst <= 1e-9, || format!("fast vs dense max abs err {worst:e}"))?;
    let mut worst_rel: f64 = 0.0;
    for order in 0..=10u32 {
        let m = 1usize << order;
        for ordering in [Ordering::Hadamard, Ordering::WalshSequency] {
            let spec = WalshSpec::for_len(m, ordering, Normalization::Orthonormal).map_err(|e| e.to_string())?;
            for _ in 0..20 {
                let x = random_vec(&mut rng, m);
                let back = fwht_1d(&fwht_1d(&x, spec).map_err(|e| e.to_string())?, spec).map_err(|e| e.to_string())?;
                let scale = x.iter().fold(0.0f64, |a, v| a.max(v.abs()));
                worst_rel = worst_rel.max(oracle::max_abs_diff(&back, &x) / scale);
            }
        }
    }
    ensure(worst_rel <= 1e-10, || format!("involution rel err {worst_rel:e}"))?;
    within(start, Duration::from_secs(10), "transform checks")?;
    Ok(format!("dense max abs err {worst:.1e}, involution rel err {worst_rel:.1e}"))
}

fn sequency_property() -> Outcome {
    for order in 0..=8u32 {
        let w = walsh_matrix(order).map_err(|e| e.to_string())?;
        let h = hadamard_matrix(order).map_err(|e| e.to_string())?;
        let mut natural_rows: Vec<Vec<i8>> = h.rows().map(<[i8]>::to_vec).collect();
        let mut walsh_rows = Vec::new();
        for j in 0..w.order() {
            let row = w.row(j);
            let changes = row.windows(2).filter(|p| p[0] != p[1]).count();
            ensure(changes == j, || format!("order {order}: row {j} has {changes} sign changes"))?;
            walsh_rows.push(row.to_vec());
        }
        natural_rows.sort();
        walsh_rows.sort();
        ensure(natural_rows == walsh_rows, || format!("order {order}: rows are not a permutation of the natural order"))?;
    }
    Ok("row j has j sign changes for every order up to 8".into())
}

fn gradient_fidelity() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut reports: Vec<GradCheckReport> = vec![
        check_smooth_threshold(&mut rng, 10_000),
        check_weighted_threshold(&mut rng, 10_000, (1e-3, 2.0), "weighted").map_err(|e| e.to_string())?,
        check_weighted_threshold(&mut rng, 10_000, (1e-5, 1e-2), "weighted-edge").map_err(|e| e.to_string())?,
    ];
    for (cfg, dims) in toy_layer_suite() {
        reports.push(check_layer(&mut rng, &cfg, dims).map_err(|e| e.to_string())?);
    }
    let threshold_worst = reports.iter().map(|r| r.max_rel_err).fold(0.0, f64::max);
    for r in &reports {
        ensure(r.tolerance <= 1e-5 && r.passed(), || {
            format!("{}: max rel err {:e} over tolerance {:e}", r.name, r.max_rel_err, r.tolerance)
        })?;
    }
    let model = check_model(&mut rng, toy_model_spec(3), 2).map_err(|e| e.to_string())?;
    ensure(model.checked > 0 && model.max_rel_err <= 1e-4, || {
        format!("full model max rel err {:e}", model.max_rel_err)
    })?;
    within(start, Duration::from_secs(30), "gradient checks")?;
    Ok(format!(
        "{} suites max rel err {threshold_worst:.1e}; full model {:.1e} over {} entries",
        reports.len(),
        model.max_rel_err,
        model.checked
    ))
}

fn random_params(rng: &mut ChaCha8Rng, len: usize, weighted: bool) -> ThresholdParams<f64> {
    let mut p = ThresholdParams::initialized(len, &[0], weighted, rng);
    for t in p.thresholds.iter_mut().skip(1) {
        *t = rng.random_range(0.0..0.6);
    }
    if let Some(w) = &mut p.weights {
        for v in w.iter_mut() {
            *v = rng.random_range(0.0..2.0);
        }
    }
    p
}

fn random_tensor(rng: &mut ChaCha8Rng, d: Dims4) -> Tensor4<f64> {
    Tensor4::from_vec(d, (0..d.len()).map(|_| rng.random_range(-2.0..2.0)).collect()).expect("sized")
}

fn fiber_err(x: &Tensor4<f64>, y: &Tensor4<f64>, f: impl Fn(&[f64]) -> Vec<f64>) -> f64 {
    x.fibers().zip(y.fibers()).map(|(a, b)| oracle::max_abs_diff(b, &f(a))).fold(0.0, f64::max)
}

fn composite_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let f = Factor::from_integer;
    let mut worst: f64 = 0.0;
    let err = |e: walshnet_core::WhtError| e.to_string();
    for (c, t) in [(3usize, 2usize), (5, 3), (8, 2), (6, 5)] {
        let params = random_params(&mut rng, (c * t).next_power_of_two(), false);
        let x = random_tensor(&mut rng, Dims4::new(2, 2, 3, c));
        let (y, _) = fwht_expand(&x, f(t), &params).map_err(err)?;
        worst = worst.max(fiber_err(&x, &y, |v| oracle::expand_fiber(v, c * t, &params.thresholds)));
    }
    for (tc, t) in [(8usize, 4usize), (12, 3), (10, 5), (16, 1)] {
        let params = random_params(&mut rng, tc.next_power_of_two(), false);
        let x = random_tensor(&mut rng, Dims4::new(2, 3, 1, tc));
        let (y, _) = fwht_project(&x, f(t), &params).map_err(err)?;
        worst = worst.max(fiber_err(&x, &y, |v| oracle::project_fiber(v, tc / t, &params.thresholds)));
    }
    for (c, s, t) in [(24usize, 8usize, 2usize), (10, 4, 2), (7, 2, 4), (16, 16, 3)] {
        let params = random_params(&mut rng, s, false);
        let x = random_tensor(&mut rng, Dims4::new(2, 2, 2, c));
        let (y, _) = bwht_expand(&x, s, f(t), &params).map_err(err)?;
        worst = worst.max(fiber_err(&x, &y, |v| oracle::block_expand_fiber(v, s, c * t, &params.thresholds)));
    }
    for (tc, s, t) in [(8usize, 4usize, 2usize), (12, 4, 3), (32, 8, 2), (8, 8, 8)] {
        let params = random_params(&mut rng, s, false);
        let x = random_tensor(&mut rng, Dims4::new(2, 1, 3, tc));
        let (y, _) = bwht_project(&x, s, f(t), &params).map_err(err)?;
        worst = worst.max(fiber_err(&x, &y, |v| oracle::block_project_fiber(v, s, t, &params.thresholds)));
    }
    for d in [Dims4::new(2, 4, 4, 3), Dims4::new(1, 3, 3, 2), Dims4::new(1, 5, 3, 2)] {
        for residual in [false, true] {
            for weighted in [false, true] {
                let (pw, ph) = (d.w.next_power_of_two(), d.h.next_power_of_two());
                let params = random_params(&mut rng, pw * ph, weighted);
                let x = random_tensor(&mut rng, d);
                let cfg = LayerConfig::fwht_2d(d.w, d.h, d.c, residual, weighted);
                let (y, _) = fwht2d_layer(&x, &cfg, &params).map_err(err)?;
                for b in 0..d.n {
                    for ch in 0..d.c {
                        let slice: Vec<Vec<f64>> =
                            (0..d.w).map(|i| (0..d.h).map(|j| x.get(b, i, j, ch)).collect()).collect();
                        let want = oracle::layer2d_slice(&slice, &params.thresholds, params.weights.as_deref(), residual);
                        for i in 0..d.w {
                            for j in 0..d.h {
                                worst = worst.max((y.get(b, i, j, ch) - want[i][j]).abs());
                            }
                        }
                    }
                }
            }
        }
    }
    ensure(worst <= 1e-9, || format!("dense composite max abs err {worst:e}"))?;

    // Saturating thresholds leave only the DC coefficient: every output
    // entry becomes the mean of its fiber or slice.
    let mut dc_err: f64 = 0.0;
    let x = random_tensor(&mut rng, Dims4::new(2, 1, 2, 8));
    let huge = ThresholdParams::zeros(8, &[0], false).with_uniform_threshold(1e9);
    let (y, _) = fwht_expand(&x, f(1), &huge).map_err(err)?;
    for (a, b) in x.fibers().zip(y.fibers()) {
        let mean = a.iter().sum::<f64>() / 8.0;
        dc_err = b.iter().map(|v| (v - mean).abs()).fold(dc_err, f64::max);
    }
    let x = random_tensor(&mut rng, Dims4::new(2, 4, 4, 3));
    let huge = ThresholdParams::zeros(16, &[0], true).with_uniform_threshold(1e9);
    let (y, _) = fwht2d_layer(&x, &LayerConfig::fwht_2d(4, 4, 3, false, true), &huge).map_err(err)?;
    for b in 0..2 {
        for ch in 0..3 {
            let mean = (0..16).map(|k| x.get(b, k / 4, k % 4, ch)).sum::<f64>() / 16.0;
            for k in 0..16 {
                dc_err = dc_err.max((y.get(b, k / 4, k % 4, ch) - mean).abs());
            }
        }
    }
    ensure(dc_err <= 1e-9, || format!("DC pass-through err {dc_err:e}"))?;
    Ok(format!("all five layer kinds within {worst:.1e}; DC pass-through within {dc_err:.1e}"))
}

fn run_cli(args: &[&str]) -> Result<std::process::Output, String> {
    Command::new(env!("CARGO_BIN_EXE_walshnet"))
        .args(args)
        .current_dir(cli_dir())
        .output()
        .map_err(|e| format!("cannot run walshnet: {e}"))
}

fn parameter_goldens() -> Outcome {
    let f = Factor::from_integer;
    let count = |cfg: LayerConfig| param_count(&cfg).map_err(|e| e.to_string());
    let expand = count(LayerConfig::fwht_expand(160, f(6)))?;
    let block = count(LayerConfig::bwht_expand(160, 32, f(6)))?;
    let plain_2d = count(LayerConfig::fwht_2d(3, 3, 1280, true, false))?;
    let weighted_2d = count(LayerConfig::fwht_2d(3, 3, 1280, true, true))?;
    let resnet = Model::<f64>::new(presets::by_name("resnet20").map_err(|e| e.to_string())?)
        .map_err(|e| e.to_string())?
        .param_totals();
    let got = [
        expand.trainable,
        block.trainable,
        plain_2d.trainable,
        weighted_2d.trainable,
        weighted_2d.comparison_conv,
        resnet.trainable,
    ];
    let want = [1023, 31, 16, 32, 11520, 273_066];
    ensure(got == want, || format!("counts {got:?}, expected {want:?}"))?;
    for (config, golden) in [
        ("configs/layers/fwht-expand-160x6.toml", "tests/golden/fwht-expand-160x6.csv"),
        ("configs/layers/bwht-expand-160x6-s32.toml", "tests/golden/bwht-expand-160x6-s32.csv"),
        ("configs/layers/fwht-2d-3x3.toml", "tests/golden/fwht-2d-3x3.csv"),
        ("configs/layers/fwht-2d-3x3-weighted.toml", "tests/golden/fwht-2d-3x3-weighted.csv"),
        ("configs/mnist-bwht.toml", "tests/golden/mnist-bwht.csv"),
    ] {
        let out = run_cli(&["paramcount", "--format", "csv", "--config", config, "--golden", golden])?;
        ensure(out.status.success(), || String::from_utf8_lossy(&out.stderr).trim().to_string())?;
    }
    let out = run_cli(&["paramcount", "--format", "csv", "--preset", "resnet20", "--golden", "tests/golden/resnet20.csv"])?;
    ensure(out.status.success(), || String::from_utf8_lossy(&out.stderr).trim().to_string())?;
    Ok("1023, 31, 16, 32 vs 11520, 273066 exact; CLI goldens match".into())
}

fn train_config(name: &str, seed: u64) -> Result<walshnet_train::ExperimentResult, String> {
    let cfg = ExperimentConfig::load(&cli_dir().join("configs").join(format!("{name}.toml")))
        .map_err(|e| e.to_string())?
        .with_seed(seed);
    run_experiment(&cfg, None, 1, |_| {}).map_err(|e| e.to_string())
}

fn replacement_experiment() -> Outcome {
    let seeds = [1u64, 2, 3];
    let mut base_acc = Vec::new();
    let mut gap_acc = Vec::new();
    let mut base_params = 0;
    let mut gap_params = 0;
    for &seed in &seeds {
        let base = train_config("mnist-baseline", seed)?;
        ensure(base.summary.epochs <= 5, || format!("baseline used {} epochs", base.summary.epochs))?;
        ensure(base.summary.wall_clock_seconds <= 900.0, || {
            format!("baseline took {:.0} s", base.summary.wall_clock_seconds)
        })?;
        ensure(base.summary.final_test_accuracy >= 0.90, || {
            format!("baseline seed {seed} test accuracy {:.4}", base.summary.final_test_accuracy)
        })?;
        base_params = base.summary.trainable_params + base.summary.non_trainable_params;
        base_acc.push(base.summary.final_test_accuracy);
        let gap = train_config("mnist-fwht2d-gap", seed)?;
        gap_params = gap.summary.trainable_params + gap.summary.non_trainable_params;
        gap_acc.push(gap.summary.final_test_accuracy);
    }
    let bwht = train_config("mnist-bwht", seeds[0])?;
    let drop = base_acc[0] - bwht.summary.final_test_accuracy;
    ensure(drop <= 0.03, || format!("BWHT variant is {:.2} points below the baseline", 100.0 * drop))?;
    let reduction = bwht.summary.replaced_layer_reduction.unwrap_or(0.0);
    ensure(reduction >= 0.90, || format!("replaced-layer reduction {reduction:.4}"))?;
    let change = (gap_params as f64 - base_params as f64).abs() / base_params as f64;
    ensure(change < 0.005, || format!("2D layer changes parameters by {:.3}%", 100.0 * change))?;
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (mb, mg) = (mean(&base_acc), mean(&gap_acc));
    ensure(mg >= mb - 0.01, || format!("2D layer mean accuracy {mg:.4} vs baseline {mb:.4}"))?;
    Ok(format!(
        "baseline {:.3} (mean {mb:.4}); bwht {:.3}, layer cut {:.1}%; 2D-before-GAP mean {mg:.4}, params +{:.2}%",
        base_acc[0],
        bwht.summary.final_test_accuracy,
        100.0 * reduction,
        100.0 * change
    ))
}

fn benchmark_structure() -> Outcome {
    let start = Instant::now();
    let (n, w, h, c) = (10usize, 8usize, 8usize, 1024usize);
    let dims = Dims4::new(n, w, h, c);
    let mut t = Tensor4::<f32>::filled(dims, 0.5);
    let mut count = OpCount::default();
    let spec = WalshSpec::layer(3);
    fwht_2d_counted(&mut t, spec, spec, &mut count).map_err(|e| e.to_string())?;
    // One pass along each spatial axis, each over n * (other axis * c) fibers of length 8.
    let per_pass = (n * (h * c) * w * 3) as u64;
    ensure(count.additions == 2 * per_pass && count.multiplications == 0, || {
        format!("2D transform counted {count:?}, expected {} additions", 2 * per_pass)
    })?;
    let opts = BenchOptions {
        repetitions: 20,
        warmups: 3,
        seed: 7,
    };
    let fast = run_bench(BenchKind::Fwht2d, dims, &opts).map_err(|e| e.to_string())?;
    ensure(fast.multiplications == Some(0) && fast.additions == Some(4 * per_pass), || {
        format!("layer bench counted {:?} additions, {:?} multiplications", fast.additions, fast.multiplications)
    })?;
    let conv = run_bench(BenchKind::Conv3x3, dims, &opts).map_err(|e| e.to_string())?;
    let macs = (n * 9 * w * h * c * c) as u64;
    ensure(conv.multiplications == Some(macs), || format!("conv counted {:?}", conv.multiplications))?;
    ensure(fast.median_seconds <= conv.median_seconds, || {
        format!("2D WHT {:.4} s slower than conv {:.4} s", fast.median_seconds, conv.median_seconds)
    })?;
    within(start, Duration::from_secs(120), "benchmarks")?;
    Ok(format!(
        "2D WHT {:.2} ms vs conv3x3 {:.1} ms median at 10x8x8x1024",
        1e3 * fast.median_seconds,
        1e3 * conv.median_seconds
    ))
}

fn train_twice(config: &Path, dir: &Path) -> Result<[Vec<u8>; 2], String> {
    let mut ckpts = Vec::new();
    for run in ["a", "b"] {
        let out = dir.join(run);
        let result = run_cli(&[
            "train",
            "--threads",
            "1",
            "--format",
            "json-lines",
            "--config",
            config.to_str().ok_or("non-UTF-8 path")?,
            "--out",
            out.to_str().ok_or("non-UTF-8 path")?,
        ])?;
        ensure(result.status.success(), || String::from_utf8_lossy(&result.stderr).trim().to_string())?;
        ckpts.push(std::fs::read(out.join("model.ckpt")).map_err(|e| e.to_string())?);
    }
    let b = ckpts.pop().expect("two runs");
    let a = ckpts.pop().expect("two runs");
    Ok([a, b])
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut sizes = Vec::new();
    for name in ["synthetic", "mnist-bwht"] {
        let config = cli_dir().join("configs").join(format!("{name}.toml"));
        let [a, b] = train_twice(&config, &dir.path().join(name))?;
        ensure(!a.is_empty() && a == b, || format!("{name}: checkpoints differ"))?;
        sizes.push(format!("{name} {} bytes", a.len()));
    }
    Ok(format!("identical checkpoints: {}", sizes.join(", ")))
}

fn main() {
    rayon::ThreadPoolBuilder::new().num_threads(1).build_global().ok();
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("transform correctness", transform_correctness),
        ("sequency property", sequency_property),
        ("gradient fidelity", gradient_fidelity),
        ("composite equivalence", composite_equivalence),
        ("parameter goldens", parameter_goldens),
        ("desk-scale replacement", replacement_experiment),
        ("benchmark structure", benchmark_structure),
        ("determinism", determinism),
    ];
    let mut failures = 0;
    for (i, (name, check)) in criteria.into_iter().enumerate() {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into());
            Err(msg)
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {} {name}: {detail} [{secs:.1}s]", i + 1),
            Err(detail) => {
                failures += 1;
                println!("FAIL {} {name}: {detail} [{secs:.1}s]", i + 1);
            }
        }
    }
    if failures > 0 {
        std::process::exit(1);
    }
}
