use std::path::Path;

use roughnf::config::{ScenarioConfig, Sweep};
use roughnf::experiments::{run_sum_rate, run_verify_distribution, run_verify_mean, RunOptions};
use roughnf::Error;

fn desk() -> ScenarioConfig {
    ScenarioConfig::load(&Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/desk.toml")).unwrap()
}

fn options(dir: &Path, realizations: Option<usize>) -> RunOptions {
    RunOptions {
        out_dir: dir.to_path_buf(),
        seed: None,
        realizations,
    }
}

#[test]
fn desk_config_round_trips() {
    let cfg = desk();
    let again = ScenarioConfig::from_toml_str(&cfg.to_toml_string().unwrap()).unwrap();
    assert_eq!(cfg.digest().unwrap(), again.digest().unwrap());
    assert_eq!(cfg.ris_config().unwrap().unwrap().len(), 32 * 32);
}

#[test]
fn realization_override_enters_digest() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = desk();
    cfg.verify_mean.as_mut().unwrap().kappa_sigma = Sweep::List(vec![1.0]);
    let a = run_verify_mean(&cfg, &options(dir.path(), Some(2))).unwrap();
    let b = run_verify_mean(&cfg, &options(dir.path(), Some(3))).unwrap();
    assert_ne!(a.config_digest, b.config_digest);
    assert_eq!(a.checks.len(), 2);
    assert!(dir.path().join("verify_mean_report.toml").exists());
}

#[test]
fn zero_realizations_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let r = run_sum_rate(&desk(), &options(dir.path(), Some(0)));
    assert!(matches!(r, Err(Error::Config(_))));
}

#[test]
fn flat_surface_is_reported_degenerate() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = desk();
    cfg.verify_distribution.as_mut().unwrap().kappa_sigma = Sweep::List(vec![0.0]);
    let r = run_verify_distribution(&cfg, &options(dir.path(), Some(5))).unwrap();
    assert!(r.checks.is_empty());
    let text = std::fs::read_to_string(dir.path().join("verify_distribution_tests.csv")).unwrap();
    assert!(text.contains("degenerate"));
}

#[test]
fn missing_section_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ScenarioConfig::from_toml_str("carrier_frequency_hz = 28e9\n").unwrap();
    assert!(run_verify_mean(&cfg, &options(dir.path(), None)).is_err());
}
