use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use roughnf::config::ScenarioConfig;
use roughnf::experiments::{self, ExperimentReport, RunOptions};
use roughnf::hf_oracle::{monte_carlo_channel, samples, write_samples_csv};

#[derive(Parser)]
#[command(name = "roughnf", version, about = "Rough-surface near-field channel experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Scenario TOML file.
    #[arg(long, short)]
    config: PathBuf,
    /// Overrides the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the realization or channel-draw count.
    #[arg(long)]
    realizations: Option<usize>,
    /// Output directory for CSV files and the report.
    #[arg(long, env = "ROUGHNF_OUT_DIR", default_value = "out")]
    out: PathBuf,
    /// Worker threads (0 = all cores).
    #[arg(long, default_value_t = 0)]
    threads: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Mean and mean-modulus of the oracle against the specular decay.
    VerifyMean(Common),
    /// Normality of the oracle's real and imaginary parts.
    VerifyDistribution(Common),
    /// Spatial correlation against the closed form and the oracle.
    VerifyCorrelation(Common),
    /// Sum rate of the four beamforming modes over a power sweep.
    SumRate(Common),
    /// Raw oracle samples for one surface and a pair of arrays.
    Oracle {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        surface: String,
        #[arg(long)]
        tx: String,
        #[arg(long)]
        rx: String,
        /// Roughness as κσ_z; the configured σ_z is used if absent.
        #[arg(long)]
        kappa_sigma: Option<f64>,
    },
}

fn setup(c: &Common) -> anyhow::Result<(ScenarioConfig, RunOptions)> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(c.threads)
        .build_global()
        .context("thread pool")?;
    let cfg = ScenarioConfig::load(&c.config).with_context(|| format!("loading {}", c.config.display()))?;
    std::fs::create_dir_all(&c.out).with_context(|| format!("creating {}", c.out.display()))?;
    Ok((
        cfg,
        RunOptions {
            out_dir: c.out.clone(),
            seed: c.seed,
            realizations: c.realizations,
        },
    ))
}

fn print_report(r: &ExperimentReport) {
    for c in &r.checks {
        let tag = if c.passed { "PASS" } else { "FAIL" };
        println!("{tag} {} value={} tolerance={}", c.name, c.value, c.tolerance);
    }
    for o in &r.outputs {
        println!("wrote {o}");
    }
    println!("{}: {}", r.experiment, if r.passed() { "PASS" } else { "FAIL" });
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    type Runner = fn(&ScenarioConfig, &RunOptions) -> roughnf::Result<ExperimentReport>;
    let (common, runner): (&Common, Runner) = match &cli.command {
        Command::VerifyMean(c) => (c, experiments::run_verify_mean),
        Command::VerifyDistribution(c) => (c, experiments::run_verify_distribution),
        Command::VerifyCorrelation(c) => (c, experiments::run_verify_correlation),
        Command::SumRate(c) => (c, experiments::run_sum_rate),
        Command::Oracle {
            common,
            surface,
            tx,
            rx,
            kappa_sigma,
        } => {
            let (cfg, opts) = setup(common)?;
            let mut spec = cfg.surface(surface)?;
            if let Some(ks) = kappa_sigma {
                if !(*ks >= 0.0) {
                    bail!("kappa_sigma must be non-negative");
                }
                spec.sigma_z = ks / cfg.kappa();
            }
            let tx = cfg.array(tx)?.elements().to_vec();
            let rx = cfg.array(rx)?.elements().to_vec();
            let n = opts.realizations.unwrap_or(1);
            let seed = opts.seed.unwrap_or(cfg.seed);
            let mats = monte_carlo_channel(&spec, &tx, &rx, cfg.wavelength(), n, seed)?;
            let path = opts.out_dir.join("oracle_samples.csv");
            let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
            write_samples_csv(BufWriter::new(file), &samples(&mats, seed))?;
            println!("wrote {}", path.display());
            return Ok(true);
        }
    };
    let (cfg, opts) = setup(common)?;
    let report = runner(&cfg, &opts)?;
    print_report(&report);
    Ok(report.passed())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
