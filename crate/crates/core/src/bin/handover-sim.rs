use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use handover_sim::commands::{
    cmd_batch, cmd_export_curves, cmd_oracle, cmd_run, thread_cap, CommandError, OracleConfig,
    RunConfig,
};
use handover_sim::params::SafetyParams;

#[derive(Parser)]
#[command(
    name = "handover-sim",
    version,
    about = "Simulated human-to-robot container handover"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Clone)]
struct Common {
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Seed for contact and orientation noise.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// JSON file of parameter overrides.
    #[arg(long)]
    params: Option<PathBuf>,
    /// Keep the first chosen safe interval while it remains available.
    #[arg(long)]
    lock_region: Option<bool>,
    /// Standard deviation (N) of the noise added to the applied grip force.
    #[arg(long)]
    contact_noise: Option<f64>,
}

impl Common {
    fn config(&self) -> RunConfig {
        RunConfig {
            out: self.out.clone(),
            seed: self.seed,
            params_file: self.params.clone(),
            lock_region: self.lock_region,
            contact_noise: self.contact_noise,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one scenario directory.
    Run {
        scenario: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Simulate every scenario directory matching a glob pattern.
    Batch {
        pattern: String,
        #[command(flatten)]
        common: Common,
    },
    /// Check the safe grasp region against a brute-force grid.
    Oracle {
        scenario: Option<PathBuf>,
        /// Also check this many random scenes.
        #[arg(long)]
        fuzz: Option<usize>,
        /// Offset the analytic margin by this many mm (negative control).
        #[arg(long, default_value_t = 0.0, hide = true)]
        inject_margin_error: f64,
        #[command(flatten)]
        common: Common,
    },
    /// Write score curves as CSV.
    ExportCurves {
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let result: Result<String, CommandError> = match Cli::parse().command {
        Command::Run { scenario, common } => cmd_run(&scenario, &common.config()).map(|r| {
            format!(
                "{}: psi_h {:.4} delta {:.4} events {}",
                r.scenario,
                r.psi_h,
                r.delta,
                r.events.join(",")
            )
        }),
        Command::Batch { pattern, common } => thread_cap()
            .and_then(|threads| cmd_batch(&pattern, &common.config(), threads))
            .map(|r| format!("{} runs written to {}", r.len(), common.out.display())),
        Command::Oracle {
            scenario,
            fuzz,
            inject_margin_error,
            common,
        } => {
            let config = OracleConfig {
                seed: common.seed,
                fuzz,
                margin_error: inject_margin_error,
                out: Some(common.out.clone()),
            };
            cmd_oracle(scenario.as_deref(), &config, &common.config())
                .map(|o| format!("oracle pass: {} scenes", o.checked()))
        }
        Command::ExportCurves { out } => cmd_export_curves(&out, &SafetyParams::default())
            .map(|_| format!("curves written to {}", out.display())),
    };
    match result {
        Ok(msg) => {
            println!("{msg}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
