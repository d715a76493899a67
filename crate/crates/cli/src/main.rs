use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;

use commands::Failure;

#[derive(Parser, Debug)]
#[command(
    name = "iconn",
    version,
    about = "Plans intermittent connectivity for multi-agent teams"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct SolverArgs {
    /// `highs` (built in) or `lp-file` (external solver from $ICONN_SOLVER).
    #[arg(long, default_value = "highs")]
    pub backend: String,
    /// Wall-clock limit per solve, in seconds.
    #[arg(long)]
    pub time_limit: Option<f64>,
    /// Relative MIP gap; 0 for `solve` and `bench`, 1% for `explore`.
    #[arg(long)]
    pub gap: Option<f64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve the instance's planning problem and write the verified plan.
    Solve {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Check a plan against its instance.
    Verify {
        #[arg(long)]
        instance: PathBuf,
        /// Solution file written by `solve`, or a bare plan document.
        #[arg(long)]
        solution: PathBuf,
    },
    /// Build the cluster hierarchy for the instance's agents.
    Cluster {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: u64,
        /// Requested agent cluster count.
        #[arg(long)]
        k: usize,
        /// Also write a Graphviz drawing here.
        #[arg(long)]
        dot: Option<PathBuf>,
    },
    /// Run the exploration loop and write a trace directory.
    Explore {
        /// Exploration scenario; omit to generate a cave.
        #[arg(long)]
        instance: Option<PathBuf>,
        /// Trace directory.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: u64,
        /// States of the generated cave.
        #[arg(long, default_value_t = 100)]
        generate: usize,
        /// Agents of the generated cave, base included.
        #[arg(long, default_value_t = 10)]
        agents: usize,
        #[arg(long, default_value_t = 2.0)]
        comm_radius: f64,
        /// Write per-step DOT frames.
        #[arg(long)]
        frames: bool,
        #[arg(long, default_value_t = iconn_core::explore::T_MAX)]
        t_max: usize,
        #[arg(long, default_value_t = 100)]
        max_cycles: usize,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Time the three formulations on line graphs.
    Bench {
        /// Comma-separated subset of flow, powerset, adaptive.
        #[arg(long, default_value = "flow,powerset,adaptive", value_delimiter = ',')]
        methods: Vec<String>,
        /// Line lengths, `lo-hi` inclusive or a single value.
        #[arg(long, default_value = "4-8")]
        n_range: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        workers: usize,
        #[command(flatten)]
        solver: SolverArgs,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(Failure::USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::Solve {
            instance,
            out,
            solver,
        } => commands::solve(&instance, &out, &solver),
        Command::Verify { instance, solution } => commands::verify(&instance, &solution),
        Command::Cluster {
            instance,
            out,
            seed,
            k,
            dot,
        } => commands::cluster(&instance, &out, seed, k, dot.as_deref()),
        Command::Explore {
            instance,
            out,
            seed,
            generate,
            agents,
            comm_radius,
            frames,
            t_max,
            max_cycles,
            solver,
        } => commands::explore(&commands::ExploreArgs {
            instance,
            out,
            seed,
            generate,
            agents,
            comm_radius,
            frames,
            t_max,
            max_cycles,
            solver,
        }),
        Command::Bench {
            methods,
            n_range,
            out,
            seed,
            workers,
            solver,
        } => commands::bench(&methods, &n_range, &out, seed, workers, &solver),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code())
        }
    }
}
