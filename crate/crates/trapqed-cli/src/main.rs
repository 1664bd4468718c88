use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;
use trapqed_cli::{preset, run_sweep, ExperimentConfig, SweepPlan};

#[derive(Parser)]
#[command(name = "trapqed", about = "Weak light on trapped-atom arrays: sweeps and presets")]
struct Cli {
    /// Worker threads (falls back to TRAPQED_THREADS, then all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the detuning sweep described by a config file.
    Sweep {
        /// Flat `key = value` config file.
        config: PathBuf,
    },
    /// Run a built-in parameter set (fig1, fig2, fig3, fig4, d095).
    Preset {
        name: String,
        /// Output CSV path (defaults to <name>.csv).
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Echo the derived dimensionless parameters of a config file.
    Derive {
        config: PathBuf,
    },
    /// Run the built-in analytic oracles.
    Selftest,
}

fn init_threads(flag: Option<usize>) {
    let n = flag.or_else(|| {
        std::env::var("TRAPQED_THREADS")
            .ok()
            .and_then(|v| v.parse().ok())
    });
    if let Some(n) = n {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

fn load_config(path: &PathBuf) -> Result<ExperimentConfig, String> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    ExperimentConfig::parse(&text).map_err(|e| format!("{}: {e}", path.display()))
}

fn run_plan(plan: &SweepPlan, output: &PathBuf) -> ExitCode {
    let derived = plan.config.derive();
    print!("{}", derived.report());
    match run_sweep(plan) {
        Ok(result) => {
            if let Err(e) = result.write(output) {
                eprintln!("cannot write {}: {e}", output.display());
                return ExitCode::from(1);
            }
            println!("wrote {} rows to {}", result.rows.len(), output.display());
            if result.any_flagged {
                eprintln!("warning: some points are flagged as not fully converged");
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e) => {
            eprintln!("sweep failed: {e}");
            ExitCode::from(1)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_threads(cli.threads);
    match cli.command {
        Command::Sweep { config } => {
            let cfg = match load_config(&config) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("{e}");
                    return ExitCode::from(1);
                }
            };
            let output = PathBuf::from(cfg.output.clone());
            let plan = SweepPlan::from_config(cfg);
            run_plan(&plan, &output)
        }
        Command::Preset { name, output } => {
            let Some(plan) = preset(&name) else {
                eprintln!("unknown preset `{name}` (try fig1, fig2, fig3, fig4, d095)");
                return ExitCode::from(1);
            };
            let output = output.unwrap_or_else(|| PathBuf::from(format!("{name}.csv")));
            run_plan(&plan, &output)
        }
        Command::Derive { config } => match load_config(&config) {
            Ok(cfg) => {
                print!("{}", cfg.derive().report());
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("{e}");
                ExitCode::from(1)
            }
        },
        Command::Selftest => {
            let results = trapqed_cli::selftest();
            let mut ok = true;
            for (name, pass) in &results {
                println!("{} {}", if *pass { "PASS" } else { "FAIL" }, name);
                ok &= pass;
            }
            if ok {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
    }
}
