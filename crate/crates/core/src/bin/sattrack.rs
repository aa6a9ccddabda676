use std::fs::{self, File};
use std::io::BufWriter;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use sattrack::cli::{self, Estimator, Overrides};
use sattrack::filters::solve_are;
use sattrack::harness::{monte_carlo, run_once};
use sattrack::{ExperimentConfig, MeasurementType};

#[derive(Parser)]
#[command(name = "sattrack", version, about = "Satellite tracking filters and Monte Carlo error tables")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// One seeded run; writes trajectory.csv and errors.csv
    Simulate(Common),
    /// Monte Carlo MSEE tables for both measurement types
    Tables(Common),
    /// Steady-state Riccati solution for the configured measurement type
    Are {
        #[command(flatten)]
        common: Common,
        /// convergence tolerance (overrides are_tol)
        #[arg(long)]
        tol: Option<f64>,
    },
}

#[derive(Args)]
struct Common {
    /// JSON config file
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// type1 or type2
    #[arg(long)]
    mtype: Option<MeasurementType>,
    /// steps per run
    #[arg(long, allow_hyphen_values = true)]
    n: Option<i64>,
    /// Monte Carlo runs
    #[arg(long, allow_hyphen_values = true)]
    phi: Option<i64>,
    /// output directory
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig> {
        let o = Overrides { seed: self.seed, mtype: self.mtype, n_steps: self.n, runs: self.phi };
        Ok(cli::load_config(self.config.as_deref(), &o)?)
    }
}

fn simulate(c: &Common) -> Result<()> {
    let cfg = c.load()?;
    let run = run_once(&cfg, 0)?;
    let out = c.out.clone().unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;

    let traj = out.join("trajectory.csv");
    let f = File::create(&traj).with_context(|| format!("creating {}", traj.display()))?;
    cli::write_trajectory_csv(&run, cfg.orbit.h(), BufWriter::new(f))
        .with_context(|| format!("writing {}", traj.display()))?;
    let errs = out.join("errors.csv");
    let f = File::create(&errs).with_context(|| format!("creating {}", errs.display()))?;
    cli::write_error_csv(&run, BufWriter::new(f)).with_context(|| format!("writing {}", errs.display()))?;

    println!("{} run, N = {}, seed = {}", cfg.mtype, cfg.n_steps, cfg.seed);
    println!("| State | kappa | Gamma |\n|---|---:|---:|");
    for i in 0..4 {
        println!("| x{} | {:.6} | {:.6} |", i + 1, run.msee.kappa[i], run.msee.gamma[i]);
    }
    let (gx, gp) = run.filter_gap();
    println!("max filter gap: state {gx:.3e}, covariance {gp:.3e}");
    if run.jitter_events > 0 {
        println!("diagonal loading applied on {} steps", run.jitter_events);
    }
    println!("wrote {} and {}", traj.display(), errs.display());
    Ok(())
}

fn tables(c: &Common) -> Result<()> {
    let cfg = c.load()?;
    let mut doc = String::new();
    let mut averages = Vec::new();
    for (n, mtype) in MeasurementType::ALL.into_iter().enumerate() {
        let mc = monte_carlo(&cfg.with_mtype(mtype))?;
        doc.push_str(&format!("Table {}: MSEE Gamma (information form), {mtype}\n\n", n + 1));
        doc.push_str(&cli::msee_table(&mc, Estimator::Information));
        doc.push_str(&format!("\nMSEE kappa (covariance form), {mtype}\n\n"));
        doc.push_str(&cli::msee_table(&mc, Estimator::Covariance));
        doc.push('\n');
        averages.push(mc.amsee);
    }
    doc.push_str("Table 3: AMSEE comparison\n\n");
    doc.push_str(&cli::amsee_table(&averages[0], &averages[1]));
    print!("{doc}");
    if let Some(out) = &c.out {
        fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
        let p = out.join("tables.md");
        fs::write(&p, &doc).with_context(|| format!("writing {}", p.display()))?;
    }
    Ok(())
}

fn are(c: &Common, tol: Option<f64>) -> Result<()> {
    let mut cfg = c.load()?;
    if let Some(t) = tol {
        anyhow::ensure!(t > 0.0, "--tol must be positive");
        cfg.are_tol = t;
    }
    let model = cfg.filter_model()?;
    match solve_are(&model, &cfg.tau_p0, cfg.are_tol, cfg.are_max_iter) {
        Ok(ss) => {
            let report = cli::are_report(cfg.mtype, &ss);
            print!("{report}");
            if let Some(out) = &c.out {
                fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
                let p = out.join("are.txt");
                fs::write(&p, &report).with_context(|| format!("writing {}", p.display()))?;
            }
            Ok(())
        }
        Err(e) => anyhow::bail!(cli::are_failure(cfg.mtype, &e)),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate(c) => simulate(c),
        Command::Tables(c) => tables(c),
        Command::Are { common, tol } => are(common, *tol),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
