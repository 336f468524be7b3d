//! `stqg`: run ensembles, consistency experiments and snapshot diagnostics.
//!
//! Exit codes: 0 on completion (blow-ups included), 2 on configuration
//! errors, 3 on I/O errors and malformed files.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use stqg_core::config::RunConfig;
use stqg_core::consistency::{fit_order, local_error_samples, stratonovich_compat, OrderFit};
use stqg_core::diagnostics::{record_for, DiagnosticsRecord};
use stqg_core::ensemble::{run_ensemble, threads_from_env};
use stqg_core::snapshot::Snapshot;
use stqg_core::stepper::{RunStatus, Truncation};
use stqg_core::StqgError;

#[derive(Parser)]
#[command(name = "stqg", version, about = "Stochastic thermal quasi-geostrophic simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    /// Mean-square local-error order of one step.
    LocalOrder,
    /// Residual of the Stratonovich compatibility condition.
    StratCompat,
}

#[derive(Subcommand)]
enum Command {
    /// Run every realization of a configuration.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Override the number of realizations.
        #[arg(long)]
        realizations: Option<usize>,
        /// Override the output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a consistency experiment and print its table and fitted slope.
    Consistency {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum)]
        mode: Mode,
        /// Also write the table to this CSV file.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Print diagnostics of snapshot files.
    Diagnose {
        #[arg(long = "snapshot", num_args = 1.., required = true)]
        snapshots: Vec<PathBuf>,
    },
}

fn load_config(path: &Path) -> Result<RunConfig, StqgError> {
    RunConfig::parse(&fs::read_to_string(path)?)
}

fn cmd_run(config: &Path, realizations: Option<usize>, out: Option<PathBuf>) -> Result<(), StqgError> {
    let mut cfg = load_config(config)?;
    if let Some(k) = realizations {
        cfg.n_realizations = k;
    }
    cfg.validate()?;
    let out = out.unwrap_or_else(|| PathBuf::from(&cfg.output.dir));
    let manifest = run_ensemble(&cfg, &out, threads_from_env())?;
    for r in &manifest.realizations {
        match &r.status {
            RunStatus::Completed => println!("{}: completed {} steps", r.dir, r.steps_taken),
            RunStatus::BlowUp { step, reason } => println!("{}: BLOWUP at step {step} ({reason:?})", r.dir),
        }
    }
    println!("manifest: {}", out.join("manifest.json").display());
    Ok(())
}

fn print_fit(label: &str, fit: &OrderFit, scale: f64) {
    println!(
        "{label} slope = {:.4} (95% CI [{:.4}, {:.4}])",
        fit.slope * scale,
        fit.ci_low * scale,
        fit.ci_high * scale
    );
}

fn cmd_consistency(config: &Path, mode: Mode, csv: Option<PathBuf>) -> Result<(), StqgError> {
    let cfg = load_config(config)?;
    let setup = cfg.setup()?;
    let seed = cfg.seed.unwrap_or(0);
    let table = match mode {
        Mode::LocalOrder => {
            let t = local_error_samples(&setup.initial, &setup.data, &setup.stepper, &cfg.local_error_config())?;
            let fit = fit_order(&t.points(), 2000, seed)?;
            print_fit("mean-square", &fit, 1.0);
            print_fit("root-mean-square", &fit, 0.5);
            println!("excluded fraction = {:.4}", t.excluded_fraction());
            println!("reference ratio = {:.3e}", t.reference_ratio);
            t.to_csv()
        }
        Mode::StratCompat => {
            let r = stratonovich_compat(
                &setup.initial,
                &setup.data,
                &setup.stepper,
                &cfg.consistency.dt_list,
                cfg.consistency.compat_paths,
                seed,
            )?;
            for row in &r.rows {
                println!("dt = {:e}: residual = {:e} stderr = {:e} {:?}", row.dt, row.residual, row.stderr, row.status);
            }
            if r.rows.iter().any(|row| row.status != stqg_core::consistency::CompatStatus::Ok) {
                println!("status INCONCLUSIVE: increase consistency.compat_paths");
            }
            match &r.fit {
                Some(fit) => print_fit("residual", fit, 1.0),
                None => println!("residual slope = n/a"),
            }
            r.to_csv()
        }
    };
    print!("{table}");
    if let Some(p) = csv {
        fs::write(p, &table)?;
    }
    Ok(())
}

fn cmd_diagnose(snapshots: &[PathBuf]) -> Result<(), StqgError> {
    println!("file,{}", DiagnosticsRecord::csv_header());
    for p in snapshots {
        let (state, data) = Snapshot::load(p)?.restore()?;
        let rec = record_for(0, &state, &data, &Truncation::none(), 0.0)?;
        println!("{},{}", p.display(), rec.csv_row());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            config,
            realizations,
            out,
        } => cmd_run(&config, realizations, out),
        Command::Consistency { config, mode, csv } => cmd_consistency(&config, mode, csv),
        Command::Diagnose { snapshots } => cmd_diagnose(&snapshots),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_io() { 3 } else { 2 })
        }
    }
}
