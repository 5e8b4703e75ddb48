use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use magdirac_lab::config::{ExperimentConfig, Overrides};
use magdirac_lab::export::export_bundle;
use magdirac_lab::run::{check_field, run_experiment};
use magdirac_lab::verify::{verify_suite, Hooks, Level};
use magdirac_lab::{LabError, Result};

/// Magnetic Dirac lattice laboratory.
#[derive(Parser)]
#[command(name = "magdirac", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute the field constants and the admissibility verdict.
    CheckField {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run an experiment and persist its reports.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; defaults to `output.dir`, then `runs/<name>`.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        overrides: OverrideArgs,
    },
    /// Run the built-in verification suite.
    Verify {
        #[arg(long, default_value = "fast")]
        level: String,
        #[arg(long, hide = true)]
        flip_spin: bool,
    },
    /// Pack a run directory into a deterministic tar archive.
    Export {
        /// Run directory.
        #[arg(long)]
        run: PathBuf,
        /// Archive path; defaults to `<run>.tar`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct OverrideArgs {
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    l: Option<f64>,
    /// Time horizon T.
    #[arg(long = "t")]
    t_end: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
}

fn main() -> ExitCode {
    match dispatch(Cli::parse().command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn dispatch(cmd: Command) -> Result<ExitCode> {
    match cmd {
        Command::CheckField { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            let fc = check_field(&cfg.field_spec()?, cfg.mass)?;
            print!("{}", fc.csv());
            for r in &fc.admissibility.reasons {
                println!("# {r}");
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Run { config, out, overrides } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            cfg.apply(&Overrides {
                n: overrides.n,
                l: overrides.l,
                t_end: overrides.t_end,
                tau: overrides.tau,
            });
            let out = out
                .or_else(|| cfg.output.dir.clone())
                .unwrap_or_else(|| PathBuf::from("runs").join(&cfg.name));
            let m = run_experiment(&cfg, &out)?;
            println!("run `{}` written to {}", m.name, out.display());
            for (k, v) in m.constants.iter().chain(&m.summary) {
                println!("  {k} = {v}");
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Verify { level, flip_spin } => {
            let level: Level = level.parse()?;
            let s = verify_suite(level, Hooks { flip_spin })?;
            for c in &s.checks {
                println!("{c}");
            }
            for w in &s.warnings {
                eprintln!("warning: {w}");
            }
            let failed = s.failures().count();
            println!(
                "{} of {} checks passed in {:.1} s",
                s.checks.len() - failed,
                s.checks.len(),
                s.elapsed.as_secs_f64()
            );
            if failed == 0 {
                Ok(ExitCode::SUCCESS)
            } else {
                Err(LabError::Numerical(format!("{failed} verification check(s) failed")))
            }
        }
        Command::Export { run, out } => {
            let b = export_bundle(&run, out.as_deref())?;
            println!("{}  {}", b.sha256, b.path.display());
            Ok(ExitCode::SUCCESS)
        }
    }
}
