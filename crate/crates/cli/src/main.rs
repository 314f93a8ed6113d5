//! `gnnpar`: experiment driver for the dual-formulation GNN engine.
//!
//! Exit codes: 0 pass, 1 usage or configuration error, 2 verification
//! failure, 3 capability error.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{Map, Value};

use config::{flag_value, kv_object, ExperimentConfig};
use error::CliResult;

#[derive(Parser)]
#[command(
    name = "gnnpar",
    version,
    about = "GNN formulation checks, cost metering and staleness simulation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compare local and global formulations on one instance.
    Verify(Common),
    /// Run the synchronous and the configured asynchronous schedule.
    Simulate(Common),
    /// Analytic GCN gradients against central differences.
    Gradcheck {
        #[command(flatten)]
        common: Common,
        #[arg(long, hide = true)]
        inject_sign_flip: bool,
    },
    /// Emit work/depth/comm counters, fitting them when 3+ sizes are given.
    Bench(Common),
    /// Train a GCN, full batch or under the simulator.
    Train(Common),
    /// Write a generated graph (and block-model labels).
    Gen(Common),
}

/// Every flag overrides the config field of the same name. Nested blocks
/// take `key=value` lists.
#[derive(Args)]
struct Common {
    /// JSON experiment config.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    graph: Option<String>,
    /// er:n:d | sbm:n:c:pin:pout | star:n | path:n | complete:n
    #[arg(long)]
    gen: Option<String>,
    #[arg(long)]
    labels: Option<String>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    activation: Option<String>,
    #[arg(long)]
    hyper: Option<String>,
    #[arg(long)]
    layers: Option<String>,
    #[arg(long)]
    k: Option<String>,
    #[arg(long)]
    hidden: Option<String>,
    #[arg(long)]
    classes: Option<String>,
    #[arg(long)]
    partitions: Option<String>,
    #[arg(long)]
    strategy: Option<String>,
    #[arg(long)]
    staleness: Option<String>,
    #[arg(long, alias = "gradient_staleness")]
    gradient_staleness: Option<String>,
    #[arg(long)]
    costs: Option<String>,
    #[arg(long)]
    iterations: Option<String>,
    #[arg(long)]
    training: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long, alias = "out_dir")]
    out_dir: Option<String>,
    /// Comma-separated vertex counts.
    #[arg(long)]
    sizes: Option<String>,
    #[arg(long)]
    instances: Option<String>,
    #[arg(long)]
    shift: Option<String>,
}

impl Common {
    fn load(&self) -> CliResult<ExperimentConfig> {
        let mut o = Map::new();
        let mut put = |key: &str, v: Value| {
            o.insert(key.to_string(), v);
        };
        for (key, raw) in [
            ("graph", &self.graph),
            ("gen", &self.gen),
            ("labels", &self.labels),
            ("out_dir", &self.out_dir),
        ] {
            if let Some(r) = raw {
                put(key, Value::String(r.clone()));
            }
        }
        for (key, raw) in [
            ("model", &self.model),
            ("activation", &self.activation),
            ("layers", &self.layers),
            ("k", &self.k),
            ("hidden", &self.hidden),
            ("classes", &self.classes),
            ("partitions", &self.partitions),
            ("strategy", &self.strategy),
            ("iterations", &self.iterations),
            ("seed", &self.seed),
            ("instances", &self.instances),
            ("shift", &self.shift),
        ] {
            if let Some(r) = raw {
                put(key, flag_value(r));
            }
        }
        for (key, raw) in [
            ("hyper", &self.hyper),
            ("staleness", &self.staleness),
            ("gradient_staleness", &self.gradient_staleness),
            ("costs", &self.costs),
            ("training", &self.training),
        ] {
            if let Some(r) = raw {
                put(key, kv_object(r)?);
            }
        }
        if let Some(s) = &self.sizes {
            put("sizes", flag_value(&format!("[{s}]")));
        }
        ExperimentConfig::load(self.config.as_deref(), o)
    }
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Verify(c) => commands::verify(&c.load()?),
        Command::Simulate(c) => commands::simulate(&c.load()?),
        Command::Gradcheck {
            common,
            inject_sign_flip,
        } => commands::gradcheck(&common.load()?, inject_sign_flip),
        Command::Bench(c) => commands::bench(&c.load()?),
        Command::Train(c) => commands::train(&c.load()?),
        Command::Gen(c) => commands::gen(&c.load()?),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
