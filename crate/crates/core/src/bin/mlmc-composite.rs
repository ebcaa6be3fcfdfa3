use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use mlmc_composite::cosserat::StrengthModel;
use mlmc_composite::harness::{
    rate_study, read_report, render_report, run_experiment, sample_field, write_outputs,
    write_rate_study, ExperimentConfig, HarnessError, ModelId, RunReport,
};
use mlmc_composite::plate::pristine_study;

#[derive(Parser)]
#[command(
    version,
    about = "Multilevel Monte Carlo studies of composite strength and buckling"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Experiment configuration (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: one per core).
    #[arg(long)]
    workers: Option<usize>,
    /// Tolerances, comma separated; replaces the configured list.
    #[arg(long, value_delimiter = ',')]
    tolerance: Option<Vec<f64>>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Buckling load of the unperturbed panel on every level.
    Pristine {
        #[command(flatten)]
        common: Common,
    },
    /// Draws misalignment fields for the strength model.
    FieldSample {
        #[command(flatten)]
        common: Common,
        /// Level whose KL truncation is used (default: finest).
        #[arg(long)]
        level: Option<usize>,
        #[arg(long, default_value_t = 65)]
        grid: usize,
        #[arg(long, default_value_t = 1)]
        samples: u64,
    },
    /// Level-difference statistics and fitted α, β, γ.
    Rates {
        #[command(flatten)]
        common: Common,
    },
    /// The configured estimator for every tolerance.
    Run {
        #[command(flatten)]
        common: Common,
    },
    /// Re-renders the CSV tables of a finished run.
    Report {
        #[command(flatten)]
        common: Common,
        /// Report to read (default: <out>/report.json).
        #[arg(long)]
        input: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn load(common: &Common) -> Result<ExperimentConfig, HarnessError> {
    let mut cfg = match &common.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(w) = common.workers {
        cfg.workers = w;
    }
    if let Some(t) = &common.tolerance {
        cfg.tolerances = t.clone();
    }
    if let Some(o) = &common.out {
        cfg.out = o.clone();
    }
    cfg.validate()?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build_global()
        .map_err(|e| HarnessError::Config(format!("worker pool: {e}")))?;
    Ok(cfg)
}

fn execute(command: Command) -> Result<u8, HarnessError> {
    match command {
        Command::Pristine { common } => {
            let mut cfg = load(&common)?;
            if let Some(l) = cfg.max_level {
                cfg.plate.max_level = cfg.plate.max_level.min(l);
            }
            let levels = pristine_study(&cfg.plate).map_err(|e| {
                HarnessError::Solver(mlmc_composite::engine::EngineError::Invalid(e))
            })?;
            let finest = levels.last().map_or(f64::NAN, |l| l.lambda_kn);
            println!(
                "{:>5} {:>9} {:>12} {:>12} {:>9}",
                "level", "M", "lambda_kN", "diff_kN", "time_s"
            );
            for (i, l) in levels.iter().enumerate() {
                let diff = if i == 0 {
                    f64::NAN
                } else {
                    l.lambda_kn - levels[i - 1].lambda_kn
                };
                println!(
                    "{:>5} {:>9} {:>12.4} {:>12.4} {:>9.3}",
                    l.level, l.dof_count, l.lambda_kn, diff, l.seconds
                );
            }
            println!("finest-level buckling load {finest:.3} kN");
            let path = ensure_dir(&cfg.out)?.join("pristine.csv");
            let mut w = csv::Writer::from_path(&path).map_err(|e| io(&path, e))?;
            for l in &levels {
                w.serialize(l).map_err(|e| io(&path, e))?;
            }
            w.flush().map_err(|e| io(&path, e))?;
            Ok(0)
        }
        Command::FieldSample {
            common,
            level,
            grid,
            samples,
        } => {
            let cfg = load(&common)?;
            let model = StrengthModel::new(cfg.strength.clone()).map_err(HarnessError::Config)?;
            let level = level.unwrap_or(cfg.strength.domain.max_level);
            let n_terms = cfg.strength.modes(level).min(model.basis().len());
            let dir = ensure_dir(&cfg.out)?;
            println!(
                "{} KL terms capture {:.2}% of the field variance",
                n_terms,
                100.0 * model.basis().captured_fraction(n_terms)
            );
            for i in 0..samples {
                let seed = cfg.seed.wrapping_add(i);
                let f = sample_field(model.basis(), seed, n_terms, grid)?;
                let path = dir.join(format!("field_{i}.csv"));
                let mut w = csv::Writer::from_path(&path).map_err(|e| io(&path, e))?;
                w.write_record(["x_m", "y_m", "phi_rad", "target_variance"])
                    .map_err(|e| io(&path, e))?;
                for ((p, v), t) in f.coords.iter().zip(&f.values).zip(&f.target_variance) {
                    w.write_record([p[0], p[1], *v, *t].map(|x| x.to_string()))
                        .map_err(|e| io(&path, e))?;
                }
                w.flush().map_err(|e| io(&path, e))?;
                let rms =
                    (f.values.iter().map(|v| v * v).sum::<f64>() / f.values.len() as f64).sqrt();
                let max = f.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                println!(
                    "sample {i} (seed {seed}): rms {rms:.4} rad, max |phi| {max:.4} rad -> {}",
                    path.display()
                );
            }
            Ok(0)
        }
        Command::Rates { common } => {
            let cfg = load(&common)?;
            let study = rate_study(&cfg)?;
            println!(
                "{:>5} {:>9} {:>7} {:>12} {:>12} {:>11}",
                "level", "M", "N", "mean_Y", "var_Y", "cost_s"
            );
            for l in &study.levels {
                println!(
                    "{:>5} {:>9} {:>7} {:>12.4e} {:>12.4e} {:>11.4e}",
                    l.level, l.dof_count, l.n, l.mean_y, l.var_y, l.cost_per_sample_s
                );
            }
            match (&study.rates, &study.regime) {
                (Some(r), Some(g)) => println!(
                    "alpha {:.3}  beta {:.3}  gamma {:.3}  regime {:?} (cost ~ e^-{:.2})",
                    r.alpha, r.beta, r.gamma, g.regime, g.cost_exponent
                ),
                _ => println!("too few levels with usable differences for a rate fit"),
            }
            write_rate_study(&study, ensure_dir(&cfg.out)?)?;
            Ok(0)
        }
        Command::Run { common } => {
            let cfg = load(&common)?;
            let report = run_experiment(&cfg)?;
            write_outputs(&report, &cfg.out)?;
            print_summary(&report);
            Ok(if report.entries.iter().all(|e| e.converged) {
                0
            } else {
                3
            })
        }
        Command::Report { common, input } => {
            let out = common.out.clone().unwrap_or_else(|| PathBuf::from("out"));
            let input = input.unwrap_or_else(|| out.join("report.json"));
            let report = read_report(&input)?;
            render_report(&report, &out)?;
            print_summary(&report);
            Ok(0)
        }
    }
}

fn print_summary(report: &RunReport) {
    let unit = match report.model {
        ModelId::PlateBuckling => "kN",
        ModelId::CosseratStrength => "MPa",
        ModelId::Synthetic => "",
    };
    println!(
        "{:?} / {:?}, seed {}",
        report.model, report.estimator, report.seed
    );
    println!(
        "{:>11} {:>13} {:>11} {:>11} {:>5} {:>6} {:>11} {:>11} {:>9}",
        "tolerance", "estimate", "samp_err", "bias", "L", "conv", "cost_s", "mc_cost_s", "saving"
    );
    for e in &report.entries {
        println!(
            "{:>11.4e} {:>13.6} {:>11.3e} {:>11.3e} {:>5} {:>6} {:>11.3} {:>10.3}{} {:>9.2}",
            e.tolerance,
            e.estimate,
            e.sampling_error,
            e.bias_estimate.unwrap_or(f64::NAN),
            e.finest_level,
            e.converged,
            e.total_cost_s,
            e.mc.wall.mc_cost_s,
            if e.mc.extrapolated { "*" } else { " " },
            e.mc.wall.saving,
        );
    }
    if !unit.is_empty() {
        println!("estimates in {unit}; * marks an extrapolated MC cost");
    }
}

fn ensure_dir(dir: &Path) -> Result<&Path, HarnessError> {
    std::fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
    Ok(dir)
}

fn io(path: &Path, e: impl std::fmt::Display) -> HarnessError {
    HarnessError::Io(format!("{}: {e}", path.display()))
}
