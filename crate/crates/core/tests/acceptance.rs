//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion fails. Runs without the libtest harness so
//! the lines are always shown.

use std::path::{Path, PathBuf};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use roughnf::channel::{los_matrix, los_matrix_by_columns, los_matrix_by_rows, ArrayGeometry};
use roughnf::config::{ScenarioConfig, Sweep};
use roughnf::experiments::{
    run_sum_rate, run_verify_correlation, run_verify_distribution, run_verify_mean, ExperimentReport, RunOptions,
};
use roughnf::geometry::{mirror_image, PlanePose, Vec3};
use roughnf::matrix::ComplexMatrix;
use roughnf::Error;
use roughnf::stat_model::{
    build_covariance, min_eigenvalue, surface_channel_stats, CovarianceMethod, StatsOptions, StochasticSampler,
};

const LAMBDA: f64 = 299_792_458.0 / 28e9;
const IDENTITY_TOL: f64 = 1e-12;
const INSTANCES: usize = 10_000;
const PSD_TOL: f64 = 1e-6;
const SAMPLER_DRAWS: usize = 10_000;
const SAMPLER_REL_TOL: f64 = 0.05;

fn desk_config() -> ScenarioConfig {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/desk.toml");
    ScenarioConfig::load(&path).expect("desk config")
}

struct Outcome {
    criterion: u32,
    title: &'static str,
    passed: bool,
    detail: String,
}

fn from_checks(criterion: u32, title: &'static str, report: &ExperimentReport, prefix: &[&str]) -> Outcome {
    let relevant: Vec<_> = report
        .checks
        .iter()
        .filter(|c| prefix.iter().any(|p| c.name.starts_with(p) || c.name.contains(p)))
        .collect();
    let failed: Vec<String> = relevant
        .iter()
        .filter(|c| !c.passed)
        .map(|c| format!("{}={:.4} (tol {})", c.name, c.value, c.tolerance))
        .collect();
    Outcome {
        criterion,
        title,
        passed: !relevant.is_empty() && failed.is_empty(),
        detail: if relevant.is_empty() {
            "no checks ran".into()
        } else if failed.is_empty() {
            format!("{} checks", relevant.len())
        } else {
            failed.join("; ")
        },
    }
}

fn opts(dir: &Path) -> RunOptions {
    RunOptions {
        out_dir: dir.to_path_buf(),
        ..RunOptions::default()
    }
}

fn unit_vec(rng: &mut ChaCha8Rng) -> Vec3 {
    loop {
        let v = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        if let Some(u) = v.normalized().filter(|_| v.norm() > 0.1) {
            return u;
        }
    }
}

fn point(rng: &mut ChaCha8Rng, r: f64) -> Vec3 {
    Vec3::new(rng.gen_range(-r..r), rng.gen_range(-r..r), rng.gen_range(-r..r))
}

fn random_plane(rng: &mut ChaCha8Rng) -> PlanePose {
    let n = unit_vec(rng);
    let u = n.cross(unit_vec(rng)).normalized().unwrap_or_else(|| n.cross(Vec3::X).normalized().unwrap());
    PlanePose::from_axes(point(rng, 1.0), u, n.cross(u)).expect("orthonormal axes")
}

fn geometric_identities() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst_inv: f64 = 0.0;
    let mut worst_two_form: f64 = 0.0;
    for _ in 0..INSTANCES {
        let plane = random_plane(&mut rng);
        let p = point(&mut rng, 2.0);
        worst_inv = worst_inv.max(mirror_image(mirror_image(p, &plane), &plane).distance(p));

        let q = point(&mut rng, 2.0);
        let d_vrx = mirror_image(p, &plane).distance(q);
        let d_vtx = p.distance(mirror_image(q, &plane));
        worst_two_form = worst_two_form.max((d_vrx - d_vtx).abs());
    }

    let tx = ArrayGeometry::upa(Vec3::new(0.3, -0.2, 2.0), Vec3::X, Vec3::Y, 4, 4, LAMBDA / 2.0).unwrap();
    let rx = ArrayGeometry::upa(Vec3::new(-0.5, 0.4, 5.0), Vec3::Y, Vec3::Z, 3, 5, LAMBDA / 2.0).unwrap();
    let h = los_matrix(&tx, &rx, LAMBDA).unwrap();
    let worst_los = h
        .max_abs_diff(&los_matrix_by_columns(&tx, &rx, LAMBDA).unwrap())
        .max(h.max_abs_diff(&los_matrix_by_rows(&tx, &rx, LAMBDA).unwrap()));

    let passed = worst_inv <= IDENTITY_TOL && worst_two_form <= IDENTITY_TOL && worst_los <= IDENTITY_TOL;
    Outcome {
        criterion: 5,
        title: "geometric identities",
        passed,
        detail: format!(
            "involution {worst_inv:.2e}, two forms {worst_two_form:.2e}, LOS forms {worst_los:.2e} (tol {IDENTITY_TOL:e}, {INSTANCES} instances)"
        ),
    }
}

fn is_sound(r: &ComplexMatrix) -> (bool, f64) {
    let herm = r.max_abs_diff(&r.adjoint());
    let diag = (0..r.rows()).map(|i| (r[(i, i)] - Complex64::new(1.0, 0.0)).norm()).fold(0.0, f64::max);
    let min = min_eigenvalue(r);
    (herm <= 1e-12 && diag <= 1e-12 && min >= -PSD_TOL, min)
}

fn covariance_soundness(cfg: &ScenarioConfig) -> Outcome {
    let mut desk = cfg.surface("desk").unwrap();
    desk.sigma_z = 3.0 / cfg.kappa();
    let tx2 = ArrayGeometry::upa(Vec3::new(-0.05, 0.0, 8.0), Vec3::X, Vec3::Y, 2, 2, LAMBDA / 2.0).unwrap();
    let rx2 = ArrayGeometry::upa(Vec3::new(0.05, 0.0, 8.0), Vec3::X, Vec3::Y, 1, 2, LAMBDA / 2.0).unwrap();
    let rx4 = ArrayGeometry::upa(Vec3::new(0.05, 0.0, 8.0), Vec3::X, Vec3::Y, 2, 2, LAMBDA).unwrap();
    let line4 = ArrayGeometry::upa(Vec3::new(0.05, 0.0, 8.0), Vec3::X, Vec3::Y, 1, 4, LAMBDA / 2.0).unwrap();
    let single = [Vec3::new(-0.05, 0.0, 8.0)];
    let builds = [
        build_covariance(&desk, tx2.elements(), rx2.elements(), LAMBDA, CovarianceMethod::Numeric),
        build_covariance(&desk, &single, rx4.elements(), LAMBDA, CovarianceMethod::Numeric),
        build_covariance(&desk, &single, line4.elements(), LAMBDA, CovarianceMethod::Numeric),
        build_covariance(&desk, &single, line4.elements(), LAMBDA, CovarianceMethod::Sinc),
        build_covariance(&desk, &single, rx4.elements(), LAMBDA, CovarianceMethod::Sinc),
    ];
    let mut worst_min = f64::INFINITY;
    let mut problems = Vec::new();
    let (mut accepted, mut rejected) = (0, 0);
    for (i, r) in builds.iter().enumerate() {
        match r {
            Ok(r) => {
                accepted += 1;
                let (ok, min) = is_sound(r);
                if !ok {
                    problems.push(format!("build {i} unsound"));
                }
                worst_min = worst_min.min(min);
            }
            // refusing an inconsistent model is the specified outcome
            Err(Error::CorrelationInconsistent { .. }) => rejected += 1,
            Err(e) => problems.push(format!("build {i}: {e}")),
        }
    }
    let sound = problems.is_empty() && accepted >= 3;

    let mut stats =
        surface_channel_stats(&desk, tx2.elements(), rx2.elements(), LAMBDA, &StatsOptions::default()).unwrap();
    stats.stoch_power = 1.0;
    let sampler = StochasticSampler::new(&stats).unwrap();
    let n = stats.covariance.rows();
    let mut acc = ComplexMatrix::zeros(n, n);
    for i in 0..SAMPLER_DRAWS {
        let x = sampler.sample(i as u64).into_vec();
        acc.add_scaled(&ComplexMatrix::outer(&x, &x.iter().map(|v| v.conj()).collect::<Vec<_>>()), Complex64::new(1.0, 0.0))
            .unwrap();
    }
    acc.scale_in_place(Complex64::new(1.0 / SAMPLER_DRAWS as f64, 0.0));
    let diff = ComplexMatrix::from_fn(n, n, |i, j| acc[(i, j)] - stats.covariance[(i, j)]);
    let rel = diff.frobenius_norm() / stats.covariance.frobenius_norm();

    Outcome {
        criterion: 6,
        title: "covariance soundness",
        passed: sound && rel <= SAMPLER_REL_TOL,
        detail: format!(
            "{accepted} outputs, {rejected} rejected as inconsistent, min eigenvalue {worst_min:.3e} (tol -{PSD_TOL:e}), sampler rel Frobenius error {rel:.4} over {SAMPLER_DRAWS} draws (tol {SAMPLER_REL_TOL}){}",
            if sound { String::new() } else { format!("; {}", problems.join("; ")) }
        ),
    }
}

fn csv_bytes(report: &ExperimentReport) -> Vec<(String, Vec<u8>)> {
    report
        .outputs
        .iter()
        .filter(|o| o.ends_with(".csv"))
        .map(|o| {
            let p = PathBuf::from(o);
            (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap())
        })
        .collect()
}

fn determinism(cfg: &ScenarioConfig, root: &Path) -> Outcome {
    let mut small = cfg.clone();
    if let Some(v) = small.verify_mean.as_mut() {
        v.kappa_sigma = Sweep::List(vec![0.5, 2.0]);
    }
    if let Some(v) = small.verify_correlation.as_mut() {
        v.cases.truncate(1);
        v.cases[0].separation_wl = Sweep::List(vec![0.0, 0.5, 1.5]);
    }
    type Runner = fn(&ScenarioConfig, &RunOptions) -> roughnf::Result<ExperimentReport>;
    let runners: [(&str, Runner, usize); 4] = [
        ("verify_mean", run_verify_mean, 4),
        ("verify_distribution", run_verify_distribution, 20),
        ("verify_correlation", run_verify_correlation, 4),
        ("sum_rate", run_sum_rate, 3),
    ];
    let mut mismatches = Vec::new();
    for (name, run, n) in runners {
        let mut outputs = Vec::new();
        for (k, threads) in [1usize, 3, 1].into_iter().enumerate() {
            let dir = root.join(format!("{name}_{k}"));
            std::fs::create_dir_all(&dir).unwrap();
            let o = RunOptions {
                out_dir: dir,
                seed: Some(77),
                realizations: Some(n),
            };
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
            let report = pool.install(|| run(&small, &o)).expect("experiment runs");
            outputs.push(csv_bytes(&report));
        }
        if outputs.iter().any(|o| o != &outputs[0]) || outputs[0].is_empty() {
            mismatches.push(name);
        }
    }
    Outcome {
        criterion: 8,
        title: "determinism across re-runs and thread counts",
        passed: mismatches.is_empty(),
        detail: if mismatches.is_empty() {
            "byte-identical CSVs with 1 and 3 threads".into()
        } else {
            format!("differs: {}", mismatches.join(", "))
        },
    }
}

fn main() {
    let cfg = desk_config();
    let root = tempfile::tempdir().unwrap();
    let dir = |name: &str| {
        let d = root.path().join(name);
        std::fs::create_dir_all(&d).unwrap();
        d
    };

    let mean = run_verify_mean(&cfg, &opts(&dir("mean"))).expect("verify_mean");
    let dist = run_verify_distribution(&cfg, &opts(&dir("dist"))).expect("verify_distribution");
    let corr = run_verify_correlation(&cfg, &opts(&dir("corr"))).expect("verify_correlation");
    let rate = run_sum_rate(&cfg, &opts(&dir("rate"))).expect("sum_rate");

    let outcomes = vec![
        from_checks(1, "mean decay law", &mean, &["mean_modulus@"]),
        from_checks(2, "power heuristic", &mean, &["abs_average@"]),
        from_checks(3, "Gaussianity of the diffuse part", &dist, &["normality_"]),
        from_checks(4, "correlation laws", &corr, &["_numeric", "_empirical", "_aligned_ge_perpendicular"]),
        geometric_identities(),
        covariance_soundness(&cfg),
        from_checks(7, "multi-user mode ordering and saturation", &rate, &["los_los_saturates", "_minus_", "_vs_"]),
        determinism(&cfg, &dir("determinism")),
    ];
    for o in &outcomes {
        println!(
            "criterion {} {}: {} ({})",
            o.criterion,
            if o.passed { "PASS" } else { "FAIL" },
            o.title,
            o.detail
        );
    }
    let failed: Vec<u32> = outcomes.iter().filter(|o| !o.passed).map(|o| o.criterion).collect();
    if !failed.is_empty() {
        eprintln!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
