//! Acceptance suite: one PASS/FAIL line per criterion.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use restune::config::ExperimentConfig;
use restune_core::parallel::Parallelism;
use restune_core::param_net::{init_params, param_count, MlpSpec, ParamVector};
use restune_core::pipeline::metrics::leading_trailing;
use restune_core::pipeline::{
    chain_eval, h2_norm, reference_stack, run_experiment, BaseSource, ChainStage, Costs, ExperimentSpec,
    HistoryBuffer, HistoryRecord, ResidualChain, Rollout, StageResult,
};
use restune_core::plants::{fk_velocity, ArmParams, JOINTS};
use restune_core::ukf_tuner::{
    sigma_points, sigma_weights, ukf_update, weighted_covariance, weighted_mean, MeasurementStack, TunerConfig,
    TunerState,
};

type Outcome = Result<String, String>;
type Criterion<'a> = (&'static str, Box<dyn Fn() -> Outcome + 'a>);

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn config(name: &str) -> PathBuf {
    root().join("configs").join(name)
}

fn spec_of(name: &str) -> ExperimentSpec {
    let (cfg, _) = ExperimentConfig::load(&config(name)).unwrap();
    cfg.to_spec().unwrap()
}

fn run(name: &str) -> (Vec<StageResult>, Duration) {
    let spec = spec_of(name);
    let t0 = Instant::now();
    let res = run_experiment(&spec, |_| Ok(())).map_err(|e| e.failure.error).unwrap();
    (res, t0.elapsed())
}

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn random_spd(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    &a * a.transpose() + DMatrix::identity(n, n) * 0.1
}

fn c1_param_count() -> Outcome {
    let a = param_count(&MlpSpec::new(5, 10, 3));
    let b = param_count(&MlpSpec::new(6, 10, 3));
    check(a == 198 && b == 209, format!("(5,10,3) -> {a}, (6,10,3) -> {b}"))
}

fn c2_kalman_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let t0 = Instant::now();
    let mut worst = 0.0f64;
    let trials = 200;
    for _ in 0..trials {
        let l = rng.random_range(1..=5);
        let m = rng.random_range(1..=5);
        let a = DMatrix::from_fn(m, l, |_, _| rng.random_range(-2.0..2.0));
        let c = DVector::from_fn(m, |_, _| rng.random_range(-1.0..1.0));
        let p = random_spd(&mut rng, l);
        let q = random_spd(&mut rng, l) * 0.01;
        let r = random_spd(&mut rng, m);
        let x = DVector::from_fn(l, |_, _| rng.random_range(-1.0..1.0));
        let alpha = [1e-1, 0.5, 1.0][rng.random_range(0..3)];
        let state = TunerState {
            estimate: ParamVector::from_vec(x.as_slice().to_vec()).unwrap(),
            covariance: p.clone(),
            process_noise: q.clone(),
            measurement_noise: r.clone(),
            weights: sigma_weights(l, alpha, 2.0, 0.0).unwrap(),
            parallelism: Parallelism::Sequential,
        };
        let x_ref = MeasurementStack(DVector::from_fn(m, |_, _| rng.random_range(-1.0..1.0)).as_slice().to_vec());
        let step = ukf_update(
            &state,
            |y| Ok((&a * DVector::from_column_slice(y) + &c).as_slice().to_vec()),
            &x_ref,
        )
        .unwrap();
        let prior = &p + &q;
        let s = &a * &prior * a.transpose() + &r;
        let k = &prior * a.transpose() * s.try_inverse().unwrap();
        worst = worst.max((&step.gain - &k).abs().max());
    }
    let elapsed = t0.elapsed();
    check(
        worst <= 1e-8 && elapsed < Duration::from_secs(1),
        format!("{trials} trials, max |K_ukf - K| = {worst:.2e}, {:.3} s", elapsed.as_secs_f64()),
    )
}

fn c3_sigma_identities() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut mean_err, mut cov_err) = (0.0f64, 0.0f64);
    for _ in 0..100 {
        let l = rng.random_range(1..=10);
        let alpha = [1e-3, 1e-2, 1e-1, 0.5, 1.0][rng.random_range(0..5)];
        let w = sigma_weights(l, alpha, 2.0, 0.0).unwrap();
        let center = DVector::from_fn(l, |_, _| rng.random_range(-3.0..3.0));
        let p = random_spd(&mut rng, l);
        let pts = sigma_points(&ParamVector::from_vec(center.as_slice().to_vec()).unwrap(), &p, &w).unwrap();
        let mu = weighted_mean(&pts.points, &w.mean);
        let cov = weighted_covariance(&pts.points, &mu, &w.cov);
        mean_err = mean_err.max((&mu - &center).amax());
        cov_err = cov_err.max((&cov - &p).norm() / p.norm());
    }
    check(
        mean_err <= 1e-12 && cov_err <= 1e-9,
        format!("100 trials, mean err {mean_err:.2e}, covariance rel err {cov_err:.2e}"),
    )
}

/// Standard DH link transform, written out independently of the library.
fn dh(a: f64, alpha: f64, d: f64, theta: f64) -> nalgebra::Matrix4<f64> {
    let (st, ct) = theta.sin_cos();
    let (sa, ca) = alpha.sin_cos();
    nalgebra::Matrix4::new(
        ct, -st * ca, st * sa, a * ct, //
        st, ct * ca, -ct * sa, a * st, //
        0.0, sa, ca, d, //
        0.0, 0.0, 0.0, 1.0,
    )
}

/// `J_v q̇` from the geometric Jacobian, column i = `z_{i-1} × (p_e − p_{i-1})`.
fn analytic_velocity(p: &ArmParams, q: &[f64; JOINTS], qdot: &[f64; JOINTS]) -> [f64; 3] {
    let mut frames = vec![nalgebra::Matrix4::identity()];
    for (row, th) in p.dh.iter().zip(q) {
        let next = frames.last().unwrap() * dh(row.a, row.alpha, row.d, th + row.theta_offset);
        frames.push(next);
    }
    let pe = frames[JOINTS].fixed_view::<3, 1>(0, 3).into_owned();
    let mut v = nalgebra::Vector3::zeros();
    for i in 0..JOINTS {
        let z = frames[i].fixed_view::<3, 1>(0, 2).into_owned();
        let o = frames[i].fixed_view::<3, 1>(0, 3).into_owned();
        v += z.cross(&(pe - o)) * qdot[i];
    }
    [v[0], v[1], v[2]]
}

fn c4_fk_consistency() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let steps = [1e-2, 1e-3, 1e-4, 1e-5, 1e-6];
    let mut worst = f64::INFINITY;
    for _ in 0..20 {
        let q: [f64; JOINTS] = std::array::from_fn(|_| rng.random_range(-3.0..3.0));
        let qdot: [f64; JOINTS] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
        let mut p = ArmParams::default();
        let exact = analytic_velocity(&p, &q, &qdot);
        let (mut xs, mut ys) = (Vec::new(), Vec::new());
        for dt in steps {
            p.fd_step = dt;
            let fd = fk_velocity(&q, &qdot, &p, [0.0; 3]);
            let err = ((fd[0] - exact[0]).powi(2) + (fd[1] - exact[1]).powi(2) + (fd[2] - exact[2]).powi(2)).sqrt();
            xs.push(dt.log10());
            ys.push(err.max(f64::MIN_POSITIVE).log10());
        }
        let n = xs.len() as f64;
        let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
        let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
        worst = worst.min(sxy / sxx);
    }
    check(worst >= 0.9, format!("20 configurations, smallest log-log slope {worst:.3}"))
}

fn c5_null() -> Outcome {
    let (res, _) = run("null.toml");
    let out = &res[0].output;
    let max_h2 = out.log.iter().map(|r| r.h2).fold(0.0, f64::max);
    let max_delta = out.updates.iter().map(|u| u.delta_norm).fold(0.0, f64::max);
    check(
        out.log.len() == 1000 && max_h2 <= 1e-10 && max_delta <= 1e-6,
        format!(
            "{} steps, {} updates, max H2 {max_h2:.2e}, max |dy| {max_delta:.2e}",
            out.log.len(),
            out.updates.len()
        ),
    )
}

fn c6_spin_bias() -> Outcome {
    let (res, elapsed) = run("spin_bias.toml");
    let out = &res[0].output;
    let (lead, trail) = leading_trailing(&out.log);
    let ratio = trail / lead;
    check(
        ratio <= 0.1 && out.updates.len() <= 500 && elapsed <= Duration::from_secs(60),
        format!(
            "leading {lead:.4}, trailing {trail:.4}, ratio {ratio:.3}, {} updates, {:.2} s",
            out.updates.len(),
            elapsed.as_secs_f64()
        ),
    )
}

fn c7_nonlinear() -> Outcome {
    let (res, elapsed) = run("nonlinear.toml");
    let out = &res[0].output;
    let n = out.log.len();
    let q = n / 4;
    let learned = out.log[n - q..].iter().map(|r| r.h2).sum::<f64>() / q as f64;
    let baseline = out.samples[n - q..]
        .iter()
        .map(|s| h2_norm(s.reference, s.kinematic))
        .sum::<f64>()
        / q as f64;
    let reduction = 1.0 - learned / baseline;
    check(
        reduction >= 0.7 && elapsed <= Duration::from_secs(120),
        format!(
            "final-quarter H2 {learned:.4} vs baseline {baseline:.4}, reduction {:.1}%, {:.2} s",
            reduction * 100.0,
            elapsed.as_secs_f64()
        ),
    )
}

fn c8_latency() -> Outcome {
    const N: usize = 20;
    let spec = MlpSpec::ARM;
    let params = init_params(&spec, 7, 0.1).unwrap();
    let chain = ResidualChain::new(BaseSource::Kinematic).with_stage(ChainStage {
        label: "latency".into(),
        spec,
        params: params.clone(),
        frozen: false,
        seed: 7,
    });
    let mut h = HistoryBuffer::new(N).unwrap();
    for k in 0..N {
        let x = k as f64 * 0.05;
        h.push(HistoryRecord {
            t: x,
            z: (0..6).map(|j| (x + j as f64).sin()).collect(),
            base: [0.1 * x.cos(), 0.1 * x.sin(), 0.02],
            reference: [0.11 * x.cos(), 0.09 * x.sin(), 0.03],
        })
        .unwrap();
    }
    let snap = h.snapshot();
    let rollout = Rollout::new(&snap, &chain, Costs::default()).unwrap();
    let x_ref = reference_stack(&snap, Costs::default()).unwrap();
    let mut report = Vec::new();
    let mut ok = params.len() == 209;
    for mode in [Parallelism::Sequential, Parallelism::Parallel] {
        let cfg = TunerConfig {
            parallelism: mode,
            ..TunerConfig::default()
        };
        let state = TunerState::new(params.clone(), &cfg, 3 * N).unwrap();
        let t0 = Instant::now();
        ukf_update(&state, |p| rollout.measure(p), &x_ref).unwrap();
        let e = t0.elapsed();
        ok &= e <= Duration::from_secs(2);
        report.push(format!("{mode:?} {:.3} s", e.as_secs_f64()));
    }
    check(ok, format!("L = {}, N = {N}: {}", params.len(), report.join(", ")))
}

fn restune(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_restune"))
        .args(args)
        .output()
        .expect("restune binary runs")
}

fn metric_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| {
            let name = p.file_name().unwrap().to_string_lossy();
            name.starts_with("metrics_") && name.ends_with(".csv")
        })
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    out.sort();
    out
}

fn c9_determinism(tmp: &Path) -> Outcome {
    let mut notes = Vec::new();
    let mut ok = true;
    for name in ["spin_bias.toml", "nonlinear.toml", "warm_start.toml"] {
        let mut runs = Vec::new();
        for i in 0..2 {
            let dir = tmp.join(format!("det-{name}-{i}"));
            let out = restune(&["run", config(name).to_str().unwrap(), "--single-thread", "--out", dir.to_str().unwrap()]);
            if !out.status.success() {
                return Err(format!("{name}: run failed: {}", String::from_utf8_lossy(&out.stderr)));
            }
            runs.push(metric_files(&dir));
        }
        let same = !runs[0].is_empty() && runs[0] == runs[1];
        ok &= same;
        notes.push(format!("{name}: {} metric files {}", runs[0].len(), if same { "identical" } else { "differ" }));
    }
    check(ok, notes.join("; "))
}

fn c10_warm_vs_cold(tmp: &Path) -> Outcome {
    let (warm, cold, report) = (tmp.join("warm"), tmp.join("cold"), tmp.join("compare.csv"));
    for (name, dir) in [("warm_start.toml", &warm), ("cold_start.toml", &cold)] {
        let out = restune(&["run", config(name).to_str().unwrap(), "--out", dir.to_str().unwrap()]);
        if !out.status.success() {
            return Err(format!("{name}: run failed: {}", String::from_utf8_lossy(&out.stderr)));
        }
    }
    let out = restune(&[
        "compare",
        warm.to_str().unwrap(),
        cold.to_str().unwrap(),
        "--csv",
        report.to_str().unwrap(),
    ]);
    if !out.status.success() {
        return Err(format!("compare failed: {}", String::from_utf8_lossy(&out.stderr)));
    }
    let mut rdr = csv::Reader::from_path(&report).map_err(|e| e.to_string())?;
    let headers = rdr.headers().map_err(|e| e.to_string())?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let (Some(si), Some(ai), Some(bi)) = (col("stage"), col("trailing_h2_a"), col("trailing_h2_b")) else {
        return Err(format!("report lacks trailing columns: {headers:?}"));
    };
    for row in rdr.records() {
        let row = row.map_err(|e| e.to_string())?;
        if &row[si] == "real-to-kin" {
            let a: f64 = row[ai].parse().map_err(|_| "unparsable trailing_h2_a".to_string())?;
            let b: f64 = row[bi].parse().map_err(|_| "unparsable trailing_h2_b".to_string())?;
            return check(
                a.is_finite() && b.is_finite(),
                format!("real-to-kin trailing H2: warm {a:.5}, cold {b:.5} (reported, not thresholded)"),
            );
        }
    }
    Err("no real-to-kin row in the report".into())
}

fn c11_additivity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let spec = MlpSpec::DIFF_DRIVE;
    let trials = 1000;
    let mut worst = 0.0f64;
    for t in 0..trials {
        let n = rng.random_range(0..=3);
        let mut chain = ResidualChain::new(BaseSource::Kinematic);
        for i in 0..n {
            let scale = rng.random_range(0.0..1.0);
            chain = chain.with_stage(ChainStage {
                label: format!("s{i}"),
                spec,
                params: init_params(&spec, rng.random(), scale).unwrap(),
                frozen: i + 1 < n,
                seed: t,
            });
        }
        let z: Vec<f64> = (0..spec.n_in).map(|_| rng.random_range(-2.0..2.0)).collect();
        let base: [f64; 3] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
        let mut sum = [0.0; 3];
        for s in &chain.stages {
            let o = s.output(&z).unwrap();
            for c in 0..3 {
                sum[c] += o[c];
            }
        }
        let at_zero = chain_eval(&chain, &z, [0.0; 3]).unwrap();
        let at_base = chain_eval(&chain, &z, base).unwrap();
        for c in 0..3 {
            if at_zero[c].to_bits() != sum[c].to_bits() {
                return Err(format!("trial {t}: eval(z, 0) != sum of stages on channel {c}"));
            }
            if at_base[c].to_bits() != (base[c] + sum[c]).to_bits() {
                return Err(format!("trial {t}: eval(z, b) != b + sum of stages on channel {c}"));
            }
            let ulp = f64::EPSILON * at_base[c].abs().max(base[c].abs());
            worst = worst.max(((at_base[c] - base[c]) - sum[c]).abs() / ulp.max(f64::MIN_POSITIVE));
        }
    }
    check(
        true,
        format!("{trials} chains of 0-3 stages: exact at zero base and as b + sum; (eval - b) within {worst:.1} ulp of the sum"),
    )
}

fn main() {
    let tmp = tempfile::tempdir().unwrap();
    let criteria: Vec<Criterion> = vec![
        ("1 parameter count", Box::new(c1_param_count)),
        ("2 UKF gain vs Kalman gain", Box::new(c2_kalman_oracle)),
        ("3 sigma-point identities", Box::new(c3_sigma_identities)),
        ("4 FK velocity vs analytic Jacobian", Box::new(c4_fk_consistency)),
        ("5 zero-residual null run", Box::new(c5_null)),
        ("6 Sim-to-Kin spin bias convergence", Box::new(c6_spin_bias)),
        ("7 nonlinear residual recovery", Box::new(c7_nonlinear)),
        ("8 update latency", Box::new(c8_latency)),
        ("9 single-thread determinism", Box::new(|| c9_determinism(tmp.path()))),
        ("10 warm vs cold start compare", Box::new(|| c10_warm_vs_cold(tmp.path()))),
        ("11 chain additivity", Box::new(c11_additivity)),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        match std::panic::catch_unwind(std::panic::AssertUnwindSafe(f)) {
            Ok(Ok(detail)) => println!("PASS criterion {name}: {detail}"),
            Ok(Err(detail)) => {
                failed += 1;
                println!("FAIL criterion {name}: {detail}");
            }
            Err(_) => {
                failed += 1;
                println!("FAIL criterion {name}: panicked");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all acceptance criteria passed");
}
