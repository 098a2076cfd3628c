use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use euler_imex::driver;
use euler_imex::io::RunConfig;
use euler_imex::Error;

#[derive(Parser)]
#[command(name = "euler-imex", version, about = "Partitioned IMEX solver for the Euler equations with gravity")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation
    Run { config: PathBuf },
    /// Run a time-step sweep
    Sweep { config: PathBuf },
    /// Eigenvalues of the discrete operator at the initial state
    Spectrum { config: PathBuf },
    /// Stability region of the configured integrator
    Stability { config: PathBuf },
    /// Compare two CSV files; exits with 1 when they differ by more than the tolerance
    Compare {
        a: PathBuf,
        b: PathBuf,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
    },
}

fn execute(cli: Cli) -> Result<ExitCode, Error> {
    match cli.command {
        Command::Run { config } => {
            let cfg = RunConfig::load(&config)?;
            let o = driver::run(&cfg)?;
            println!(
                "steps {} dt {:e} sigma_a {:.4} n_fc {} relative_rms {:e}",
                o.stats.steps, o.stats.dt, o.metrics.sigma_a, o.stats.n_fc, o.metrics.relative_rms
            );
            println!("wall time {:.3} s", o.stats.wall_time.as_secs_f64());
        }
        Command::Sweep { config } => {
            let cfg = RunConfig::load(&config)?;
            let r = driver::sweep(&cfg)?;
            for e in &r.entries {
                let err = e.metrics.as_ref().map(|m| format!("{:e}", m.relative_rms)).unwrap_or_default();
                println!("dt {:e} {} {}", e.dt, e.status.name(), err);
            }
            if let Some(s) = r.slope {
                println!("slope {s:.3}");
            }
            if let Some(dt) = r.largest_stable_dt {
                println!("largest stable dt {dt:e}");
            }
        }
        Command::Spectrum { config } => {
            let cfg = RunConfig::load(&config)?;
            let ev = driver::spectrum(&cfg)?;
            let max = ev.last().map(|z| z.norm()).unwrap_or(0.0);
            println!("{} eigenvalues, largest magnitude {max:e}", ev.len());
        }
        Command::Stability { config } => {
            let cfg = RunConfig::load(&config)?;
            let scan = driver::stability(&cfg)?;
            let stable = scan.iter().filter(|p| p.stable()).count();
            println!("{stable} of {} points stable", scan.len());
        }
        Command::Compare { a, b, tol } => {
            if !(tol >= 0.0) {
                return Err(Error::config("tolerance must be non-negative"));
            }
            let c = driver::compare(&a, &b, tol)?;
            println!("max relative difference {:e}", c.worst);
            if !c.within {
                return Ok(ExitCode::from(1));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
