use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use flowctl::experiment::{explain_plan, run_experiment, write_outputs, write_result, Algo, ExperimentConfig, ExperimentResult, Variant};
use flowctl::generate::{generate_graph, GraphKind};
use flowctl::graph::{read_edges, write_edges};
use flowctl::oracle::{oracle_cc, DensePageRank};
use flowctl::{HarnessError, Result};
use iterflow::algorithms::pagerank::PlanHint;
use iterflow::incremental::{AsyncSettings, ChannelDelay, ExecutionMode};

#[derive(Parser)]
#[command(name = "flowctl", about = "Run iterative dataflow experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an algorithm and write per-superstep metrics and the result.
    Run(RunArgs),
    /// Write a synthetic edge list.
    Gen {
        /// chain(n), star(n), clique(n), random(n,m,seed) or components(k,size,seed)
        #[arg(long)]
        kind: GraphKind,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the optimizer's plan for given source cardinalities.
    Explain {
        #[command(flatten)]
        algo: AlgoArgs,
        /// Comma-separated `source=records` pairs, e.g. matrix=1e6,ranks=1e3
        #[arg(long, value_delimiter = ',', value_parser = parse_card)]
        cards: Vec<(String, f64)>,
        #[arg(long, default_value_t = 4)]
        parallelism: usize,
        #[arg(long, default_value_t = 20.0)]
        expected_iters: f64,
        #[arg(long, value_enum, default_value_t = PlanArg::Auto)]
        plan: PlanArg,
    },
    /// Compute the reference result sequentially.
    Oracle {
        #[arg(long, value_enum)]
        algo: AlgoArg,
        #[arg(long)]
        input: PathBuf,
        /// PageRank iterations.
        #[arg(long, default_value_t = 20)]
        max_iters: u64,
        #[arg(long)]
        damping: Option<f64>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

#[derive(Args)]
struct AlgoArgs {
    #[arg(long, value_enum)]
    algo: AlgoArg,
    #[arg(long, value_enum, default_value_t = VariantArg::Bulk)]
    variant: VariantArg,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    algo: AlgoArgs,
    #[arg(long, value_enum, default_value_t = ModeArg::Superstep)]
    mode: ModeArg,
    /// Synchronous microsteps with a barrier per superstep (default).
    #[arg(long, conflicts_with = "asynchronous")]
    sync: bool,
    /// Asynchronous microsteps terminated by quiescence detection.
    #[arg(long = "async")]
    asynchronous: bool,
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = 4)]
    parallelism: usize,
    /// Superstep cap; PageRank without --epsilon runs exactly this many.
    #[arg(long)]
    max_iters: Option<u64>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long, default_value_t = 20.0)]
    expected_iters: f64,
    #[arg(long, value_enum, default_value_t = PlanArg::Auto)]
    plan: PlanArg,
    #[arg(long)]
    damping: Option<f64>,
    /// Records per acknowledgement batch in asynchronous mode.
    #[arg(long, default_value_t = 64)]
    ack_batch: usize,
    /// Random per-record channel delay bound in asynchronous mode.
    #[arg(long)]
    delay_micros: Option<u64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    metrics: Option<PathBuf>,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum AlgoArg {
    Pagerank,
    Cc,
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    Bulk,
    Cogroup,
    Match,
    Simulated,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Superstep,
    Microstep,
}

#[derive(Clone, Copy, ValueEnum)]
enum PlanArg {
    Auto,
    Broadcast,
    Partition,
}

fn parse_card(s: &str) -> std::result::Result<(String, f64), String> {
    let (name, n) = s.split_once('=').ok_or_else(|| format!("expected source=records, got `{s}`"))?;
    let n: f64 = n.parse().map_err(|_| format!("`{n}` is not a number"))?;
    Ok((name.to_string(), n))
}

impl AlgoArgs {
    fn config(&self) -> ExperimentConfig {
        let algo = match self.algo {
            AlgoArg::Pagerank => Algo::PageRank,
            AlgoArg::Cc => Algo::Cc,
        };
        let variant = match self.variant {
            VariantArg::Bulk => Variant::Bulk,
            VariantArg::Cogroup => Variant::CoGroup,
            VariantArg::Match => Variant::Match,
            VariantArg::Simulated => Variant::Simulated,
        };
        ExperimentConfig::new(algo, variant)
    }
}

impl From<PlanArg> for PlanHint {
    fn from(p: PlanArg) -> Self {
        match p {
            PlanArg::Auto => PlanHint::Auto,
            PlanArg::Broadcast => PlanHint::Broadcast,
            PlanArg::Partition => PlanHint::Partition,
        }
    }
}

fn run(args: RunArgs) -> Result<()> {
    let mut cfg = args.algo.config();
    cfg.mode = match (args.mode, args.asynchronous) {
        (ModeArg::Superstep, false) => ExecutionMode::Superstep,
        (ModeArg::Superstep, true) => return Err(HarnessError::InvalidParams("--async needs --mode microstep".into())),
        (ModeArg::Microstep, false) => ExecutionMode::MicrostepSync,
        (ModeArg::Microstep, true) => ExecutionMode::MicrostepAsync(AsyncSettings {
            ack_batch: args.ack_batch,
            delay: args.delay_micros.map(|max_micros| ChannelDelay { seed: args.seed, max_micros }),
        }),
    };
    cfg.parallelism = args.parallelism;
    cfg.max_iters = args.max_iters.unwrap_or(match cfg.algo {
        Algo::PageRank => 20,
        Algo::Cc => 100_000,
    });
    cfg.epsilon = args.epsilon;
    cfg.expected_iters = args.expected_iters;
    cfg.plan = args.plan.into();
    cfg.damping = args.damping;
    let edges = read_edges(&args.input)?;
    let out = run_experiment(&cfg, &edges)?;
    write_outputs(&out, args.metrics.as_deref(), args.output.as_deref())?;
    eprintln!("{} supersteps", out.metrics.len());
    Ok(())
}

fn main() -> ExitCode {
    let result = match Cli::parse().command {
        Command::Run(args) => run(args),
        Command::Gen { kind, out } => generate_graph(kind).and_then(|e| write_edges(&out, &e)),
        Command::Explain {
            algo,
            cards,
            parallelism,
            expected_iters,
            plan,
        } => {
            let mut cfg = algo.config();
            cfg.parallelism = parallelism;
            cfg.expected_iters = expected_iters;
            cfg.plan = plan.into();
            explain_plan(&cfg, &cards).map(|text| print!("{text}"))
        }
        Command::Oracle {
            algo,
            input,
            max_iters,
            damping,
            output,
        } => read_edges(&input).and_then(|edges| {
            let result = match algo {
                AlgoArg::Cc => ExperimentResult::Components(oracle_cc(&edges).into_iter().collect()),
                AlgoArg::Pagerank => ExperimentResult::Ranks(DensePageRank::new(&edges, damping).ranks(max_iters)),
            };
            match output {
                Some(p) => write_result(std::io::BufWriter::new(std::fs::File::create(p)?), &result),
                None => {
                    let stdout = std::io::stdout();
                    let mut lock = stdout.lock();
                    write_result(&mut lock, &result)?;
                    Ok(lock.flush()?)
                }
            }
        }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("flowctl: {e}");
            ExitCode::FAILURE
        }
    }
}
