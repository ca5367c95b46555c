use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use diffusion_lab::cli::{explain, run, Overrides, Scenario, Stage, DEFAULT_SCENARIO};

/// Runs the diffusion pipeline on a scenario and writes CSV artifacts plus report.txt.
#[derive(Parser, Debug)]
#[command(name = "diffusion-lab", version)]
struct Args {
    /// Stage to run.
    #[arg(value_enum, required_unless_present = "explain")]
    stage: Option<Stage>,
    /// Scenario TOML; the bundled weak-coupling scenario when omitted.
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Weak KAM grid size per axis.
    #[arg(long)]
    grid: Option<usize>,
    /// Integrator step.
    #[arg(long)]
    dt: Option<f64>,
    /// Print every tunable constant with its default and admissibility rule, then exit.
    #[arg(long)]
    explain: bool,
}

fn main() -> ExitCode {
    let args = Args::parse();
    if args.explain {
        print!("{}", explain());
        if args.stage.is_none() {
            return ExitCode::SUCCESS;
        }
    }
    let scenario = match &args.scenario {
        Some(p) => Scenario::load(p),
        None => Scenario::from_toml(DEFAULT_SCENARIO),
    };
    let ov = Overrides { seed: args.seed, grid: args.grid, dt: args.dt };
    let result = scenario.and_then(|s| run(args.stage.expect("stage required"), s, &args.out, ov));
    match result {
        Ok(outcome) => {
            if !outcome.admissible {
                println!("status: inadmissible: diagnostics only");
            }
            for f in &outcome.files {
                println!("wrote {}", args.out.join(f).display());
            }
            if outcome.failed.is_empty() {
                println!("all checks passed");
            } else {
                println!("failed checks: {}", outcome.failed.join(", "));
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
