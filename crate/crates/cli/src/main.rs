use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use hfmm_core::config::ExperimentConfig;
use hfmm_core::experiments::{run, Command, Overrides};
use hfmm_core::table::Format;
use hfmm_core::Error;

#[derive(Parser, Debug)]
#[command(name = "hfmm", version, about = "Discrete-time market-making experiments")]
struct Cli {
    /// Output directory (overrides the config).
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Table format (overrides the config).
    #[arg(long, global = true, value_enum)]
    format: Option<FormatArg>,
    /// Also render SVG plots.
    #[arg(long, global = true)]
    plot: bool,
    /// Master seed (overrides the config).
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

#[derive(Args, Debug)]
struct ConfigArg {
    #[arg(long, value_name = "F")]
    config: PathBuf,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Solve the single-dealer model at one step size.
    Solve {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long, value_name = "X")]
        dt: f64,
    },
    /// Step-size sweep: exact solutions plus Q-learning sample complexity.
    Sweep {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long, value_name = "N")]
        jobs: Option<usize>,
        /// Seed labels (overrides the config).
        #[arg(long, num_args = 1.., value_name = "S")]
        seeds: Option<Vec<u64>>,
    },
    /// Two-dealer game experiments.
    Game {
        #[command(subcommand)]
        command: GameCmd,
    },
}

#[derive(Subcommand, Debug)]
enum GameCmd {
    /// Equilibrium at one step size (default: the smallest grid step).
    Solve {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long, value_name = "X")]
        dt: Option<f64>,
    },
    /// Equilibria over the whole grid.
    Sweep {
        #[command(flatten)]
        config: ConfigArg,
    },
    /// Nash Q-learning against the exact equilibrium.
    Nashq {
        #[command(flatten)]
        config: ConfigArg,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let mut ov = Overrides {
        out: cli.out,
        format: cli.format.map(|f| match f {
            FormatArg::Csv => Format::Csv,
            FormatArg::Json => Format::Json,
        }),
        plot: cli.plot,
        master_seed: cli.seed,
        ..Default::default()
    };
    let (path, cmd) = match cli.command {
        Cmd::Solve { config, dt } => (config.config, Command::Solve { dt }),
        Cmd::Sweep { config, jobs, seeds } => {
            ov.jobs = jobs;
            ov.seeds = seeds;
            (config.config, Command::Sweep)
        }
        Cmd::Game { command } => match command {
            GameCmd::Solve { config, dt } => (config.config, Command::GameSolve { dt }),
            GameCmd::Sweep { config } => (config.config, Command::GameSweep),
            GameCmd::Nashq { config } => (config.config, Command::GameNashQ),
        },
    };

    let result = ExperimentConfig::load(&path).and_then(|cfg| run(cfg, &cmd, &ov));
    match result {
        Ok(report) => {
            for w in &report.manifest.warnings {
                eprintln!("warning: {w}");
            }
            for a in &report.manifest.artifacts {
                println!("{}", report.dir.join(&a.file).display());
            }
            println!("{}", report.dir.join("manifest.json").display());
            let failed = report.output.failed_cells();
            if failed > 0 {
                eprintln!("error: {failed} cell(s) failed; see manifest.json");
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e @ Error::Config(_)) => {
            eprintln!("{e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
