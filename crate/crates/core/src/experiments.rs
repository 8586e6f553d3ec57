//! The verification studies and the sum-rate study, each writing CSV files
//! and a report with tolerance verdicts.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::{Path as FsPath, PathBuf};

use num_complex::Complex64;
use serde::Serialize;

use crate::config::{CorrelationCase, ScenarioConfig};
use crate::error::{Error, Result};
use crate::geometry::{incidence_cosines, LocalFrame, PlanePose, Vec3};
use crate::hf_oracle::{hf_integral, monte_carlo_channel};
use crate::numerics::derive_seed;
use crate::ris::{evaluate_on_draws, plan_beams, saturation_threshold, Mode};
use crate::stat_model::{
    correlation_numeric_with, correlation_sinc, elevation_range, isotropic_antenna_area, isotropic_power,
    roughness_factor, total_power_ratio, CorrelationOptions, CorrelationSpec, CorrelationWeighting,
};
use crate::stats::{anderson_darling, complex_correlation, complex_mean, mean, std_dev};
use crate::surface::{PlanarSurfaceSpec, RoughRealization};
use crate::units::{dbm_to_watts, linear_to_db};

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub out_dir: PathBuf,
    pub seed: Option<u64>,
    /// Replaces the realization (or channel draw) count of the experiment.
    pub realizations: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl Check {
    fn at_most(name: impl Into<String>, value: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            value,
            tolerance,
            passed: value <= tolerance,
        }
    }

    fn at_least(name: impl Into<String>, value: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            value,
            tolerance,
            passed: value >= tolerance,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentReport {
    pub experiment: String,
    pub config_digest: String,
    pub seed: u64,
    pub outputs: Vec<String>,
    pub summary: BTreeMap<String, f64>,
    pub checks: Vec<Check>,
}

impl ExperimentReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failed_checks(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    fn finish(mut self, out_dir: &FsPath) -> Result<Self> {
        let path = out_dir.join(format!("{}_report.toml", self.experiment));
        self.outputs.push(path.display().to_string());
        std::fs::write(&path, self.to_toml_string()?)?;
        Ok(self)
    }
}

struct Csv {
    text: String,
}

impl Csv {
    fn new(header: &str, experiment: &str, digest: &str, seed: u64) -> Self {
        let mut text = String::new();
        writeln!(text, "{header}").unwrap();
        writeln!(text, "# experiment={experiment}").unwrap();
        writeln!(text, "# config_digest={digest}").unwrap();
        writeln!(text, "# seed={seed}").unwrap();
        Self { text }
    }

    fn row(&mut self, fields: &[String]) {
        self.text.push_str(&fields.join(","));
        self.text.push('\n');
    }

    fn save(self, dir: &FsPath, name: &str) -> Result<String> {
        std::fs::create_dir_all(dir)?;
        let path = dir.join(name);
        std::fs::write(&path, self.text)?;
        Ok(path.display().to_string())
    }
}

fn f(x: f64) -> String {
    format!("{x}")
}

struct Prepared {
    cfg: ScenarioConfig,
    digest: String,
    seed: u64,
}

fn prepare(cfg: &ScenarioConfig, opts: &RunOptions, apply: impl FnOnce(&mut ScenarioConfig, usize)) -> Result<Prepared> {
    let mut cfg = cfg.clone();
    if let Some(s) = opts.seed {
        cfg.seed = s;
    }
    if let Some(n) = opts.realizations {
        if n == 0 {
            return Err(Error::Config("realization count must be positive".into()));
        }
        apply(&mut cfg, n);
    }
    cfg.validate()?;
    let digest = cfg.digest()?;
    let seed = cfg.seed;
    Ok(Prepared { cfg, digest, seed })
}

fn single(cfg: &ScenarioConfig, name: &str) -> Result<Vec3> {
    let a = cfg.array(name)?;
    if a.len() != 1 {
        return Err(Error::Config(format!("array `{name}` must have a single element")));
    }
    Ok(a.center())
}

fn with_roughness(spec: &PlanarSurfaceSpec, kappa_sigma: f64, kappa: f64) -> PlanarSurfaceSpec {
    PlanarSurfaceSpec {
        sigma_z: kappa_sigma / kappa,
        ..spec.clone()
    }
}

/// Monte-Carlo mean and mean modulus of oracle samples against the
/// specular decay `e^{-g/2}` and the power heuristic.
pub fn run_verify_mean(cfg: &ScenarioConfig, opts: &RunOptions) -> Result<ExperimentReport> {
    const ID: &str = "verify_mean";
    let p = prepare(cfg, opts, |c, n| {
        if let Some(v) = c.verify_mean.as_mut() {
            v.realizations = n;
        }
    })?;
    let v = p
        .cfg
        .verify_mean
        .as_ref()
        .ok_or_else(|| Error::Config("no [verify_mean] section".into()))?;
    let lambda = p.cfg.wavelength();
    let kappa = p.cfg.kappa();
    let base = p.cfg.surface(&v.surface)?;
    let (tx, rx) = (single(&p.cfg, &v.tx)?, single(&p.cfg, &v.rx)?);
    let flat = hf_integral(&RoughRealization::flat(&base), tx, rx, lambda)?;
    let (cos_tx, cos_rx) = incidence_cosines(&base.pose, tx, rx)?;
    let iso = isotropic_power(&base, tx, rx, isotropic_antenna_area(lambda), 1.0, lambda);
    let ratio_inf = iso.sqrt() / flat.norm();

    let mut csv = Csv::new(
        "kappa_sigma_z,g,one_re,one_im,one_abs,avg_re,avg_im,avg_abs,mean_modulus,theory_mean,theory_abs,mean_ok,power_ok",
        ID,
        &p.digest,
        p.seed,
    );
    let mut checks = Vec::new();
    let mut worst_mean: f64 = 0.0;
    let mut worst_power: f64 = 0.0;
    for (i, ks) in v.kappa_sigma.values()?.into_iter().enumerate() {
        let spec = with_roughness(&base, ks, kappa);
        let g = roughness_factor(kappa, spec.sigma_z, cos_tx, cos_rx).g;
        let mats = monte_carlo_channel(&spec, &[tx], &[rx], lambda, v.realizations, derive_seed(p.seed, &[1, i as u64]))?;
        let xs: Vec<Complex64> = mats.iter().map(|m| m[(0, 0)] / flat).collect();
        let avg = complex_mean(&xs);
        let avg_abs = xs.iter().map(|x| x.norm()).sum::<f64>() / xs.len() as f64;
        let theory_mean = (-g / 2.0).exp();
        let theory_abs = total_power_ratio(g, ratio_inf);
        let mean_err = (avg.norm() - theory_mean).abs();
        let mean_ok = if theory_mean < v.mean_abs_floor {
            mean_err <= v.mean_abs_tol
        } else {
            mean_err <= v.mean_rel_tol * theory_mean
        };
        let power_err = (avg_abs - theory_abs).abs() / theory_abs;
        let power_ok = power_err <= v.power_rel_tol;
        if theory_mean >= v.mean_abs_floor {
            worst_mean = worst_mean.max(mean_err / theory_mean);
        }
        worst_power = worst_power.max(power_err);
        checks.push(Check {
            name: format!("mean_modulus@{ks}"),
            value: mean_err,
            tolerance: if theory_mean < v.mean_abs_floor {
                v.mean_abs_tol
            } else {
                v.mean_rel_tol * theory_mean
            },
            passed: mean_ok,
        });
        checks.push(Check::at_most(format!("abs_average@{ks}"), power_err, v.power_rel_tol));
        let one = xs[0];
        csv.row(&[
            f(ks),
            f(g),
            f(one.re),
            f(one.im),
            f(one.norm()),
            f(avg.re),
            f(avg.im),
            f(avg_abs),
            f(avg.norm()),
            f(theory_mean),
            f(theory_abs),
            mean_ok.to_string(),
            power_ok.to_string(),
        ]);
    }
    let outputs = vec![csv.save(&opts.out_dir, "verify_mean.csv")?];
    let summary = BTreeMap::from([
        ("flat_re".to_string(), flat.re),
        ("flat_im".to_string(), flat.im),
        ("ratio_inf".to_string(), ratio_inf),
        ("worst_mean_rel_error".to_string(), worst_mean),
        ("worst_abs_average_rel_error".to_string(), worst_power),
    ]);
    ExperimentReport {
        experiment: ID.into(),
        config_digest: p.digest,
        seed: p.seed,
        outputs,
        summary,
        checks,
    }
    .finish(&opts.out_dir)
}

fn histogram(xs: &[f64], bins: usize) -> Vec<(f64, f64, usize)> {
    let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return vec![(lo, hi, xs.len())];
    }
    let w = (hi - lo) / bins as f64;
    let mut counts = vec![0; bins];
    for &x in xs {
        counts[(((x - lo) / w) as usize).min(bins - 1)] += 1;
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(i, c)| (lo + i as f64 * w, lo + (i + 1) as f64 * w, c))
        .collect()
}

/// Histograms and a normality test of the real and imaginary parts.
pub fn run_verify_distribution(cfg: &ScenarioConfig, opts: &RunOptions) -> Result<ExperimentReport> {
    const ID: &str = "verify_distribution";
    let p = prepare(cfg, opts, |c, n| {
        if let Some(v) = c.verify_distribution.as_mut() {
            v.realizations = n;
        }
    })?;
    let v = p
        .cfg
        .verify_distribution
        .as_ref()
        .ok_or_else(|| Error::Config("no [verify_distribution] section".into()))?;
    let lambda = p.cfg.wavelength();
    let kappa = p.cfg.kappa();
    let base = p.cfg.surface(&v.surface)?;
    let (tx, rx) = (single(&p.cfg, &v.tx)?, single(&p.cfg, &v.rx)?);
    let flat = hf_integral(&RoughRealization::flat(&base), tx, rx, lambda)?.norm();

    let mut hist = Csv::new("kappa_sigma_z,part,bin_lo,bin_hi,count", ID, &p.digest, p.seed);
    let mut tests = Csv::new(
        "kappa_sigma_z,part,n,mean,std,statistic,p_value,verdict",
        ID,
        &p.digest,
        p.seed,
    );
    let mut checks = Vec::new();
    let mut summary = BTreeMap::new();
    for (i, ks) in v.kappa_sigma.values()?.into_iter().enumerate() {
        let spec = with_roughness(&base, ks, kappa);
        let mats = monte_carlo_channel(&spec, &[tx], &[rx], lambda, v.realizations, derive_seed(p.seed, &[2, i as u64]))?;
        let xs: Vec<Complex64> = mats.iter().map(|m| m[(0, 0)] / flat).collect();
        let m = complex_mean(&xs);
        for (part, vals) in [
            ("re", xs.iter().map(|x| x.re - m.re).collect::<Vec<_>>()),
            ("im", xs.iter().map(|x| x.im - m.im).collect::<Vec<_>>()),
        ] {
            for (lo, hi, c) in histogram(&vals, v.bins) {
                hist.row(&[f(ks), part.into(), f(lo), f(hi), c.to_string()]);
            }
            let sd = if vals.len() > 1 { std_dev(&vals) } else { 0.0 };
            match anderson_darling(&vals) {
                Some(t) => {
                    let verdict = if t.rejects_at(v.significance) { "rejected" } else { "not_rejected" };
                    tests.row(&[
                        f(ks),
                        part.into(),
                        t.n.to_string(),
                        f(mean(&vals)),
                        f(sd),
                        f(t.statistic),
                        f(t.p_value),
                        verdict.into(),
                    ]);
                    summary.insert(format!("p_value_{part}@{ks}"), t.p_value);
                    checks.push(Check::at_least(format!("normality_{part}@{ks}"), t.p_value, v.significance));
                }
                None => {
                    tests.row(&[
                        f(ks),
                        part.into(),
                        vals.len().to_string(),
                        f(mean(&vals)),
                        f(sd),
                        String::new(),
                        String::new(),
                        "degenerate".into(),
                    ]);
                }
            }
        }
    }
    let outputs = vec![
        hist.save(&opts.out_dir, "verify_distribution_histograms.csv")?,
        tests.save(&opts.out_dir, "verify_distribution_tests.csv")?,
    ];
    ExperimentReport {
        experiment: ID.into(),
        config_digest: p.digest,
        seed: p.seed,
        outputs,
        summary,
        checks,
    }
    .finish(&opts.out_dir)
}

/// A thin strip under a pair axis at unit distance, spanning elevations
/// `[θ1, θ2]`; with solid-angle weighting it scatters isotropically.
pub fn isotropic_strip(spec: &CorrelationSpec, zeta: f64, wavelength: f64) -> Result<(PlanarSurfaceSpec, LocalFrame)> {
    let lim = PI / 2.0 - 1e-3;
    let (t1, t2) = (spec.theta_1().max(-lim), spec.theta_2().min(lim));
    let (x1, x2) = (t1.tan(), t2.tan());
    let pose = PlanePose::from_axes(Vec3::new((x1 + x2) / 2.0, 0.0, -1.0), Vec3::X, Vec3::Y)?;
    let surface = PlanarSurfaceSpec {
        pose,
        extent: (x2 - x1, 1e-3),
        sigma_z: 0.0,
        zeta,
        grid_step: wavelength / 10.0,
        height_cell: 0.0,
        correlation_length: 0.0,
    };
    Ok((surface, LocalFrame::new(Vec3::ZERO, Vec3::X)?))
}

/// Sector sinc against the surface integral and the oracle.
pub fn run_verify_correlation(cfg: &ScenarioConfig, opts: &RunOptions) -> Result<ExperimentReport> {
    const ID: &str = "verify_correlation";
    let p = prepare(cfg, opts, |c, n| {
        if let Some(v) = c.verify_correlation.as_mut() {
            v.cases.iter_mut().for_each(|k| k.realizations = n);
        }
    })?;
    let v = p
        .cfg
        .verify_correlation
        .as_ref()
        .ok_or_else(|| Error::Config("no [verify_correlation] section".into()))?;
    let lambda = p.cfg.wavelength();
    let kappa = p.cfg.kappa();
    let mut csv = Csv::new(
        "case,placement,d_over_lambda,theta_1,theta_2,closed_form,numeric_isotropic,numeric_surface,empirical",
        ID,
        &p.digest,
        p.seed,
    );
    let mut checks = Vec::new();
    let mut summary = BTreeMap::new();
    for (ci, case) in v.cases.iter().enumerate() {
        let rows = correlation_case(&p.cfg, case, v.kappa_sigma, lambda, kappa, derive_seed(p.seed, &[3, ci as u64]))?;
        let mut dev_numeric: f64 = 0.0;
        let mut dev_empirical: f64 = 0.0;
        let mut ordering_gap: f64 = f64::INFINITY;
        for r in &rows {
            dev_numeric = dev_numeric.max((r.closed - r.numeric_iso).abs());
            dev_empirical = dev_empirical.max((r.closed - r.empirical).abs());
            let tc = r.theta_2 - r.theta_1;
            if r.d > 0.0 && tc > 0.0 {
                let pe = CorrelationSpec::perpendicular(tc)?;
                // main lobe of the perpendicular curve
                if 2.0 * r.d / lambda * (tc / 2.0).sin() < 1.0 {
                    let al = correlation_sinc(r.d, &CorrelationSpec::aligned(tc)?, lambda);
                    ordering_gap = ordering_gap.min(al - correlation_sinc(r.d, &pe, lambda));
                }
            }
            csv.row(&[
                case.name.clone(),
                case.placement.clone(),
                f(r.d / lambda),
                f(r.theta_1),
                f(r.theta_2),
                f(r.closed),
                f(r.numeric_iso),
                f(r.numeric_surface),
                f(r.empirical),
            ]);
        }
        summary.insert(format!("{}_max_dev_numeric", case.name), dev_numeric);
        summary.insert(format!("{}_max_dev_empirical", case.name), dev_empirical);
        checks.push(Check::at_most(format!("{}_numeric", case.name), dev_numeric, v.numeric_tol));
        checks.push(Check::at_most(format!("{}_empirical", case.name), dev_empirical, v.empirical_tol));
        if ordering_gap.is_finite() {
            checks.push(Check::at_least(format!("{}_aligned_ge_perpendicular", case.name), ordering_gap, -1e-12));
        }
    }
    let outputs = vec![csv.save(&opts.out_dir, "verify_correlation.csv")?];
    ExperimentReport {
        experiment: ID.into(),
        config_digest: p.digest,
        seed: p.seed,
        outputs,
        summary,
        checks,
    }
    .finish(&opts.out_dir)
}

struct CorrelationRow {
    d: f64,
    theta_1: f64,
    theta_2: f64,
    closed: f64,
    numeric_iso: f64,
    numeric_surface: f64,
    empirical: f64,
}

fn correlation_case(
    cfg: &ScenarioConfig,
    case: &CorrelationCase,
    kappa_sigma: f64,
    lambda: f64,
    kappa: f64,
    seed: u64,
) -> Result<Vec<CorrelationRow>> {
    let base = cfg.surface(&case.surface)?;
    let tx = single(cfg, &case.tx)?;
    let axis = Vec3::new(case.axis[0], case.axis[1], case.axis[2])
        .normalized()
        .ok_or_else(|| Error::Config(format!("case `{}`: zero axis", case.name)))?;
    let center = Vec3::new(case.rx_center_m[0], case.rx_center_m[1], case.rx_center_m[2]);
    let ds: Vec<f64> = case.separation_wl.values()?.into_iter().map(|s| s * lambda).collect();
    let rx: Vec<Vec3> = ds.iter().map(|&d| center + axis * d).collect();

    let spec = with_roughness(&base, kappa_sigma, kappa);
    let mats = monte_carlo_channel(&spec, &[tx], &rx, lambda, case.realizations, seed)?;
    let column = |i: usize| -> Vec<Complex64> { mats.iter().map(|m| m[(i, 0)]).collect() };
    let reference = column(0);

    let solid = CorrelationOptions {
        weighting: CorrelationWeighting::SolidAngle,
        ..CorrelationOptions::default()
    };
    let mut rows = Vec::with_capacity(ds.len());
    for (i, &d) in ds.iter().enumerate() {
        let empirical = complex_correlation(&reference, &column(i)).norm();
        let Some(frame) = LocalFrame::for_pair(rx[0], rx[i]) else {
            rows.push(CorrelationRow {
                d,
                theta_1: f64::NAN,
                theta_2: f64::NAN,
                closed: 1.0,
                numeric_iso: 1.0,
                numeric_surface: 1.0,
                empirical,
            });
            continue;
        };
        let range = elevation_range(&base, &frame)?;
        let closed = correlation_sinc(d, &range, lambda).abs();
        let (strip, _) = isotropic_strip(&range, base.zeta, lambda)?;
        let far = Vec3::new(0.0, 0.0, 1e3);
        let pair = (Vec3::X * (-d / 2.0), Vec3::X * (d / 2.0));
        let numeric_iso = correlation_numeric_with(&strip, (far, far), pair, lambda, &solid)?.norm();
        let numeric_surface =
            correlation_numeric_with(&base, (tx, tx), (rx[0], rx[i]), lambda, &CorrelationOptions::default())?.norm();
        rows.push(CorrelationRow {
            d,
            theta_1: range.theta_1(),
            theta_2: range.theta_2(),
            closed,
            numeric_iso,
            numeric_surface,
            empirical,
        });
    }
    Ok(rows)
}

/// Sum rate of every beamforming mode over the transmit-power sweep.
pub fn run_sum_rate(cfg: &ScenarioConfig, opts: &RunOptions) -> Result<ExperimentReport> {
    const ID: &str = "sum_rate";
    let p = prepare(cfg, opts, |c, n| {
        if let Some(s) = c.sum_rate.as_mut() {
            s.draws = n;
        }
    })?;
    let s = p
        .cfg
        .sum_rate
        .as_ref()
        .ok_or_else(|| Error::Config("no [sum_rate] section".into()))?;
    let scn = p.cfg.ris_scenario()?;
    let prepared = scn.prepare()?;
    let draws = prepared.draws(s.draws, derive_seed(p.seed, &[4]));
    let powers = s.transmit_power_dbm.values()?;
    let k = scn.users.len();

    let mut header = "P_t_dBm,mode,mean_sum_rate,std_sum_rate".to_string();
    for u in 1..=k {
        write!(header, ",sinr_user{u}_dB").unwrap();
    }
    let mut csv = Csv::new(&header, ID, &p.digest, p.seed);
    let mut curves: BTreeMap<&'static str, Vec<f64>> = BTreeMap::new();
    let modes: Vec<Mode> = Mode::ALL
        .into_iter()
        .filter(|m| (!m.bs_nlos() || scn.bs_wall.is_some()) && (!m.user_nlos() || scn.user_wall.is_some()))
        .collect();
    for &mode in &modes {
        for &pdbm in &powers {
            let pw = dbm_to_watts(pdbm);
            let plan = plan_beams(&scn, &prepared, mode, pw)?;
            let r = evaluate_on_draws(&scn, &draws, &plan, pw)?;
            let mut row = vec![f(pdbm), mode.label().into(), f(r.sum_rate), f(r.sum_rate_std)];
            row.extend(r.per_user_sinr.iter().map(|&x| f(linear_to_db(x))));
            csv.row(&row);
            curves.entry(mode.label()).or_default().push(r.sum_rate);
        }
    }
    let outputs = vec![csv.save(&opts.out_dir, "sum_rate.csv")?];

    let mut summary = BTreeMap::new();
    let mut checks = Vec::new();
    let top = |m: Mode| curves.get(m.label()).and_then(|c| c.last().copied());
    for m in &modes {
        if let Some(v) = top(*m) {
            summary.insert(format!("rate_at_max_power[{}]", m.label()), v);
        }
    }
    if let Some(low) = curves.values().filter_map(|c| c.first()).copied().reduce(f64::max) {
        summary.insert("max_rate_at_min_power".into(), low);
    }
    let los = curves.get(Mode::LosLos.label());
    if let Some(c) = los {
        let sat = saturation_threshold(&powers, c, s.saturation_gain_bits);
        summary.insert("los_los_saturation_dbm".into(), sat.unwrap_or(f64::NAN));
        checks.push(Check {
            name: "los_los_saturates".into(),
            value: sat.unwrap_or(f64::NAN),
            tolerance: s.saturation_gain_bits,
            passed: sat.is_some(),
        });
    }
    if let (Some(nn), Some(bs), Some(user), Some(ll)) =
        (top(Mode::NlosNlos), top(Mode::NlosLos), top(Mode::LosNlos), top(Mode::LosLos))
    {
        checks.push(Check::at_least("both_nlos_minus_bs_ris_nlos", nn - bs, 0.0));
        checks.push(Check::at_least("bs_ris_nlos_minus_los_los", bs - ll, 0.0));
        checks.push(Check::at_most(
            "ris_user_nlos_vs_los_los_rel",
            (user - ll).abs() / ll.abs().max(f64::MIN_POSITIVE),
            s.ordering_tolerance,
        ));
    }
    ExperimentReport {
        experiment: ID.into(),
        config_digest: p.digest,
        seed: p.seed,
        outputs,
        summary,
        checks,
    }
    .finish(&opts.out_dir)
}
