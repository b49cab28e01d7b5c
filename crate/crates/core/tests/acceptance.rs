//! Acceptance suite. Each test prints one `PASS`/`FAIL` line for its
//! criterion before asserting, so `cargo test --test acceptance -- --nocapture`
//! gives a compact verdict table.

use std::path::Path;
use std::process::Command;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use curvecast::curve_models::{kernel_log_rbf, mean_vector, KernelParams, MeanFamily, MeanParams};
use curvecast::data_io::{log_spaced_sizes, SpacingMode};
use curvecast::evaluation::{quantized_likelihood, EvalConfig};
use curvecast::fitting::{fit_deterministic, fit_map, FitConfig, FrozenParams};
use curvecast::gp_core::{
    log_marginal_likelihood, log_marginal_likelihood_with_gradient, posterior_predictive, CurveDataset, ModelParams,
};
use curvecast::math_stats::TruncNormal;
use curvecast::priors::{
    build_prior_config, solve_lambda_for_fraction, PercentileTargets, PriorConfig, PriorSettings,
};
use curvecast::synthetic::{run_study, StudyConfig};

const PILOT: [f64; 5] = [60.0, 94.0, 147.0, 230.0, 360.0];

fn verdict(id: u32, name: &str, pass: bool, detail: String) {
    println!("criterion {id} [{}] {name}: {detail}", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "criterion {id} ({name}) failed: {detail}");
}

fn random_instance(rng: &mut ChaCha8Rng, n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut xs: Vec<f64> = Vec::with_capacity(n);
    while xs.len() < n {
        let x = (rng.gen_range(10f64.ln()..1e5f64.ln())).exp().round();
        if xs.iter().all(|&v| (v / x).ln().abs() > 1e-3) {
            xs.push(x);
        }
    }
    xs.sort_by(f64::total_cmp);
    let ys = xs.iter().map(|_| rng.gen_range(0.3..0.99)).collect();
    (xs, ys)
}

fn random_params(rng: &mut ChaCha8Rng) -> ModelParams {
    let family = if rng.gen_bool(0.5) { MeanFamily::PowerLaw } else { MeanFamily::Arctan };
    let mean = match family {
        MeanFamily::PowerLaw => MeanParams::new(rng.gen_range(0.05..2.0), rng.gen_range(-0.95..-0.05), rng.gen_range(0.0..0.2)),
        MeanFamily::Arctan => MeanParams::new(rng.gen_range(1e-4..0.05), rng.gen_range(0.05..2.5), rng.gen_range(0.0..0.2)),
    };
    ModelParams {
        family,
        mean,
        kernel: KernelParams::new(rng.gen_range(0.01..0.3), rng.gen_range(0.1..3.0)),
        tau: rng.gen_range(0.01..0.1),
    }
}

fn joint_covariance(xs: &[f64], qs: &[f64], p: &ModelParams) -> DMatrix<f64> {
    let all: Vec<f64> = xs.iter().chain(qs).copied().collect();
    let n = all.len();
    DMatrix::from_fn(n, n, |i, j| {
        let k = p.kernel.sigma.powi(2) * (-(all[i].ln() - all[j].ln()).powi(2) / (2.0 * p.kernel.lambda.powi(2))).exp();
        if i == j {
            k + p.tau * p.tau
        } else {
            k
        }
    })
}

#[test]
fn criterion_1_lambda_prior_endpoints() {
    let lo = solve_lambda_for_fraction(1.5, 0.01).unwrap();
    let hi = solve_lambda_for_fraction(1.5, 0.99).unwrap();
    let mut worst = 0.0f64;
    for (lambda, f) in [(lo, 0.01), (hi, 0.99)] {
        let k = kernel_log_rbf(100.0, 150.0, &KernelParams::new(1.0, lambda)).unwrap();
        worst = worst.max((k - f).abs());
    }
    let pass = (lo - 0.13).abs() <= 0.005 && (hi - 2.86).abs() <= 0.01 && worst <= 1e-10;
    verdict(1, "lambda endpoints", pass, format!("lambda_lo={lo:.6} lambda_hi={hi:.6} round-trip err={worst:.2e}"));
}

#[test]
fn criterion_2_sigma_prior_calibration() {
    let start = std::time::Instant::now();
    let settings = PriorSettings {
        max_accuracy: Some(0.95),
        percentile_targets: PercentileTargets::Figure,
        ..PriorSettings::default()
    };
    let (_, cal) = build_prior_config(0.7, &settings).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let rel20 = (cal.achieved_p20 / 0.0625 - 1.0).abs();
    let rel80 = (cal.achieved_p80 / 0.125 - 1.0).abs();
    let pass = rel20 <= 0.1 && rel80 <= 0.1 && secs < 30.0 && cal.mc_samples == 1_000_000;
    verdict(
        2,
        "sigma prior calibration",
        pass,
        format!(
            "p20={:.5} (rel {rel20:.3}) p80={:.5} (rel {rel80:.3}) in {secs:.1}s",
            cal.achieved_p20, cal.achieved_p80
        ),
    );
}

#[test]
fn criterion_3_log_spaced_protocol() {
    use SpacingMode::*;
    let pilot = log_spaced_sizes(60, 360, 5, InclusiveEndpoints).unwrap();
    let short = log_spaced_sizes(360, 720, 5, ExclusiveStart).unwrap();
    let long = log_spaced_sizes(360, 20000, 5, ExclusiveStart).unwrap();
    let long_ok = long.len() == 5
        && long
            .iter()
            .zip([804.0, 1796.0, 4010.0, 8955.0, 20000.0])
            .all(|(&g, w)| (g as f64 - w).abs() <= 0.01 * w);
    let pass = pilot == [60, 94, 147, 230, 360] && short == [414, 475, 546, 627, 720] && long_ok;
    verdict(3, "log-spaced sizes", pass, format!("{pilot:?} {short:?} {long:?}"));
}

#[test]
fn criterion_4_posterior_matches_joint_conditioning() {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let (mut dmu, mut dcov) = (0.0f64, 0.0f64);
    for _ in 0..200 {
        let r = rng.gen_range(1..=8);
        let q = rng.gen_range(1..=8);
        let (all, ys_all) = random_instance(&mut rng, r + q);
        // interleave training and query sizes
        let mut idx: Vec<usize> = (0..r + q).collect();
        for i in (1..idx.len()).rev() {
            idx.swap(i, rng.gen_range(0..=i));
        }
        let xs: Vec<f64> = idx[..r].iter().map(|&i| all[i]).collect();
        let ys: Vec<f64> = idx[..r].iter().map(|&i| ys_all[i]).collect();
        let qs: Vec<f64> = idx[r..].iter().map(|&i| all[i]).collect();
        let p = random_params(&mut rng);
        let pred = posterior_predictive(&xs, &ys, &p, &qs).unwrap();

        // precision-matrix route: Σ* = (Λ**)⁻¹, μ* = m* − Σ* Λ*y (y − m)
        let prec = joint_covariance(&xs, &qs, &p).try_inverse().unwrap();
        let lam_qq = prec.view((r, r), (q, q)).into_owned();
        let lam_qy = prec.view((r, 0), (q, r)).into_owned();
        let cov = lam_qq.try_inverse().unwrap();
        let m = DVector::from_vec(mean_vector(&xs, p.family, &p.mean).unwrap());
        let m_star = DVector::from_vec(mean_vector(&qs, p.family, &p.mean).unwrap());
        let mu = &m_star - &cov * &lam_qy * (DVector::from_vec(ys.clone()) - m);
        for i in 0..q {
            dmu = dmu.max((mu[i] - pred.mean[i]).abs());
            for j in 0..q {
                dcov = dcov.max((cov[(i, j)] - pred.cov[(i, j)]).abs());
            }
        }
    }
    let pass = dmu <= 1e-8 && dcov <= 1e-8;
    verdict(4, "posterior predictive oracle", pass, format!("max |dmu|={dmu:.2e} max |dSigma|={dcov:.2e}"));
}

#[test]
fn criterion_5_likelihood_and_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let (mut dll, mut dgrad) = (0.0f64, 0.0f64);
    for _ in 0..200 {
        let r = rng.gen_range(1..=8);
        let (xs, ys) = random_instance(&mut rng, r);
        let p = random_params(&mut rng);

        // dense oracle through LU determinant and inverse
        let c = joint_covariance(&xs, &[], &p);
        let resid = DVector::from_vec(ys.clone()) - DVector::from_vec(mean_vector(&xs, p.family, &p.mean).unwrap());
        let det = c.clone().lu().determinant();
        let quad = (resid.transpose() * c.try_inverse().unwrap() * &resid)[(0, 0)];
        let oracle = -0.5 * (r as f64 * (2.0 * std::f64::consts::PI).ln() + det.ln() + quad);
        dll = dll.max((log_marginal_likelihood(&xs, &ys, &p).unwrap() - oracle).abs());

        let (_, grad) = log_marginal_likelihood_with_gradient(&xs, &ys, &p).unwrap();
        let base = [p.mean.theta1, p.mean.theta2, p.mean.epsilon, p.kernel.sigma, p.kernel.lambda, p.tau];
        for k in 0..6 {
            let h = 1e-4 * base[k].abs().max(1e-3);
            let at = |v: f64| {
                let mut b = base;
                b[k] = v;
                let q = ModelParams {
                    family: p.family,
                    mean: MeanParams::new(b[0], b[1], b[2]),
                    kernel: KernelParams::new(b[3], b[4]),
                    tau: b[5],
                };
                log_marginal_likelihood(&xs, &ys, &q).unwrap()
            };
            let fd = (8.0 * (at(base[k] + h) - at(base[k] - h)) - (at(base[k] + 2.0 * h) - at(base[k] - 2.0 * h))) / (12.0 * h);
            let scale = fd.abs().max(grad[k].abs());
            if scale > 1e-6 {
                dgrad = dgrad.max((fd - grad[k]).abs() / scale);
            }
        }
    }
    let pass = dll <= 1e-8 && dgrad <= 1e-4;
    verdict(5, "likelihood oracle and gradient", pass, format!("max |dL|={dll:.2e} max rel grad err={dgrad:.2e}"));
}

#[test]
fn criterion_6_quantized_partition_of_unity() {
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let p = TruncNormal::unit_interval(rng.gen_range(-0.5..1.5), rng.gen_range(1e-3..1.0)).unwrap();
        let total: f64 = (0..50)
            .map(|i| quantized_likelihood(&p, 0.01 + 0.02 * i as f64, 0.01).unwrap())
            .sum();
        worst = worst.max((total - 1.0).abs());
    }
    verdict(6, "quantized likelihood partition", worst <= 1e-9, format!("max |sum - 1|={worst:.2e}"));
}

#[test]
fn criterion_7_long_range_coverage() {
    let start = std::time::Instant::now();
    let truth = MeanParams::new(0.9, -0.3, 0.05);
    let nominal_best = MeanFamily::PowerLaw.eval(360.0, &truth);
    let (prior, _) = build_prior_config(nominal_best, &PriorSettings::default()).unwrap();
    let cfg = StudyConfig {
        family: MeanFamily::PowerLaw,
        mean: truth,
        noise_tau: 0.01,
        wiggle: None,
        pilot_sizes: vec![60, 94, 147, 230, 360],
        heldout_sizes: vec![5000, 10000, 20000],
        seeds_per_size: 3,
        worlds: 100,
        master_seed: 7,
        fit_family: MeanFamily::PowerLaw,
        fit: FitConfig::default(),
        prior,
        eval: EvalConfig {
            levels: vec![0.95],
            ..EvalConfig::default()
        },
    };
    let report = run_study(&cfg).unwrap();
    let cov = report.overall_coverage(0.95).unwrap();
    let per_size: Vec<String> = report.coverage.iter().map(|c| format!("{}:{:.2}", c.size, c.rate)).collect();
    let secs = start.elapsed().as_secs_f64();
    let pass = cov >= 0.90 && report.clip_rate == 0.0 && report.failed_worlds.is_empty() && secs < 600.0;
    verdict(
        7,
        "95% HDI coverage on synthetic worlds",
        pass,
        format!(
            "coverage={cov:.3} per size [{}] rmse={:.4} clip={} in {secs:.0}s",
            per_size.join(" "),
            report.mean_rmse,
            report.clip_rate
        ),
    );
}

fn flat_prior(y_best: f64) -> PriorConfig {
    let flat = TruncNormal::nonnegative(0.0, 1e6).unwrap();
    PriorConfig {
        tau_prior: flat,
        sigma_prior: flat,
        lambda_prior: flat,
        epsilon_min: 0.0,
        y_best_observed: y_best,
    }
}

#[test]
fn criterion_8_mean_recovery() {
    let grid: Vec<f64> = (0..=50).map(|i| (60f64.ln() + (6f64).ln() * i as f64 / 50.0).exp()).collect();
    let cases = [
        (MeanFamily::PowerLaw, MeanParams::new(0.9, -0.3, 0.05)),
        (MeanFamily::Arctan, MeanParams::new(0.004, 0.6, 0.03)),
    ];
    let mut worst_recovery = 0.0f64;
    for (family, truth) in cases {
        let ys: Vec<f64> = PILOT.iter().map(|&x| family.eval(x, &truth)).collect();
        let data = CurveDataset::new(PILOT.to_vec(), ys).unwrap();
        let settings = PriorSettings {
            mc_samples: 100_000,
            ..PriorSettings::default()
        };
        let (prior, _) = build_prior_config(data.best_accuracy(), &settings).unwrap();
        let map = fit_map(&data, family, &prior, &FitConfig::default()).unwrap();
        let det = fit_deterministic(&data, family, truth.epsilon, &FitConfig::default()).unwrap();
        for &x in &grid {
            let t = family.eval(x, &truth);
            worst_recovery = worst_recovery.max((family.eval(x, &map.params.mean) - t).abs());
            worst_recovery = worst_recovery.max((family.eval(x, &det.mean) - t).abs());
        }
    }

    // with a diagonal kernel the marginal likelihood is a scaled negative SSE
    let noisy = [0.641, 0.688, 0.703, 0.752, 0.771];
    let data = CurveDataset::new(PILOT.to_vec(), noisy.to_vec()).unwrap();
    let mut worst_match = 0.0f64;
    for family in [MeanFamily::PowerLaw, MeanFamily::Arctan] {
        let det = fit_deterministic(&data, family, 0.0, &FitConfig::default()).unwrap();
        let cfg = FitConfig {
            frozen: FrozenParams {
                epsilon: Some(0.0),
                sigma: Some(1e-3),
                lambda: Some(1e-3),
                tau: Some(1e-3),
            },
            ..FitConfig::default()
        };
        let map = fit_map(&data, family, &flat_prior(data.best_accuracy()), &cfg).unwrap();
        for &x in &PILOT {
            worst_match = worst_match.max((family.eval(x, &map.params.mean) - family.eval(x, &det.mean)).abs());
        }
    }
    let pass = worst_recovery <= 0.005 && worst_match <= 1e-6;
    verdict(
        8,
        "mean recovery",
        pass,
        format!("max recovery err={worst_recovery:.2e} GP-vs-least-squares={worst_match:.2e}"),
    );
}

fn cli(args: &[&str]) -> Vec<u8> {
    let out = Command::new(env!("CARGO_BIN_EXE_curvecast"))
        .args(args)
        .output()
        .expect("binary runs");
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out.stdout
}

fn run_pipeline(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let p = |name: &str| dir.join(name).to_str().unwrap().to_string();
    let input = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/example_curve.csv");
    let input = input.to_str().unwrap();
    let mc = ["--mc-samples", "100000"];
    cli(&[&["calibrate", "--input", input, "--output", &p("prior.toml"), "--seed", "3"], &mc[..]].concat());
    cli(&["fit", "--input", input, "--prior", &p("prior.toml"), "--output", &p("model.json"), "--seed", "3"]);
    cli(&[&["fit", "--input", input, "--mean", "arc", "--output", &p("model_arc.json"), "--seed", "3"], &mc[..]].concat());
    cli(&[
        "extrapolate",
        "--input",
        &p("model.json"),
        "--output",
        &p("pred.csv"),
        "--sizes",
        "414,475,546,627,720,804,1796,4010,8955,20000",
        "--dense",
        &p("dense.csv"),
    ]);
    cli(&["eval", "--input", input, "--predictions", &p("pred.csv"), "--output", &p("report.json"), "--seed", "3"]);
    cli(&["simulate", "--data-only", "--output", &p("sim.csv"), "--seed", "3"]);
    cli(&[&["simulate", "--output", &p("study.json"), "--worlds", "4", "--seed", "3"], &mc[..]].concat());
    ["prior.toml", "model.json", "model_arc.json", "pred.csv", "dense.csv", "report.json", "sim.csv", "study.json"]
        .iter()
        .map(|f| (f.to_string(), std::fs::read(dir.join(f)).unwrap()))
        .collect()
}

#[test]
fn criterion_9_cli_reproducibility() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let first = run_pipeline(a.path());
    let second = run_pipeline(b.path());
    let differing: Vec<&str> = first
        .iter()
        .zip(&second)
        .filter(|(x, y)| x.1 != y.1 || x.1.is_empty())
        .map(|(x, _)| x.0.as_str())
        .collect();
    verdict(
        9,
        "bit-identical CLI reruns",
        differing.is_empty(),
        format!("{} outputs compared, differing: {differing:?}", first.len()),
    );
}
