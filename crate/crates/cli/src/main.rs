mod config;
mod repl;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use ownership_norms::agent::Task;
use ownership_norms::report::{norm_table, prediction_table, task_table, Table};
use ownership_norms::sim::{
    run_norm_learning, run_prediction_inference, run_task_experiment, Condition, Noise, SimConfig,
};
use ownership_session::{SessionConfig, WorldSpec};
use std::collections::BTreeMap;
use std::io::IsTerminal;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;
use std::time::Duration;

/// Learn ownership norms from instruction: reproduce the experiments,
/// teach a robot interactively, or serve live teaching sessions.
#[derive(Parser, Debug)]
#[command(name = "ownership", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Run a simulated experiment and print per-trial and mean rows.
    Experiment {
        #[arg(value_enum)]
        kind: Experiment,
        #[command(flatten)]
        opts: ExperimentOpts,
    },
    /// Teach interactively, one command per line (`help` lists them).
    Repl {
        /// Seed of the simulated world.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// JSON world description (`{"kind": "custom", ...}`) instead of
        /// the simulated world.
        #[arg(long)]
        world: Option<PathBuf>,
    },
    /// Serve live teaching sessions over HTTP and websockets.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        /// Wall-clock period driving the simulated clock, milliseconds;
        /// 0 leaves time to `advance` commands.
        #[arg(long, default_value_t = 100)]
        tick_ms: u64,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Experiment {
    /// Rule induction from permissions (accuracy and F1 of the rules).
    Norm,
    /// Ownership prediction with and without rule inference.
    Predict,
    /// Tasks with corrective feedback (mistakes, rule and ownership scores).
    Task,
}

#[derive(Clone, Copy, Debug, PartialEq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Args, Debug)]
struct ExperimentOpts {
    /// Trials per condition [default: 100].
    #[arg(long)]
    trials: Option<usize>,
    /// Base seed; trial t uses seed + t [default: 0].
    #[arg(long)]
    seed: Option<u64>,
    /// norm: fraction of objects taught [default: 1.0, 0.5 and 0.25].
    #[arg(long)]
    fraction: Option<f64>,
    /// norm: ownership prior noise, off or on [default: both].
    #[arg(long)]
    noise: Option<String>,
    /// predict: noneOff, learnOn or givenOn [default: all].
    #[arg(long)]
    condition: Option<String>,
    /// task: collectAll or trashAll [default: both].
    #[arg(long)]
    task: Option<String>,
    /// task: learning on or off [default: both].
    #[arg(long)]
    learning: Option<String>,
    /// Output format, csv or json [default: csv].
    #[arg(long)]
    out: Option<String>,
    /// key=value option file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
}

/// Flags merged over the option file.
struct Resolved {
    values: BTreeMap<String, String>,
}

impl Resolved {
    fn new(opts: &ExperimentOpts) -> Result<Self, String> {
        let mut values = match &opts.config {
            Some(p) => config::load(p)?,
            None => BTreeMap::new(),
        };
        let flags = [
            ("trials", opts.trials.map(|v| v.to_string())),
            ("seed", opts.seed.map(|v| v.to_string())),
            ("fraction", opts.fraction.map(|v| v.to_string())),
            ("noise", opts.noise.clone()),
            ("condition", opts.condition.clone()),
            ("task", opts.task.clone()),
            ("learning", opts.learning.clone()),
            ("out", opts.out.clone()),
        ];
        for (k, v) in flags {
            if let Some(v) = v {
                values.insert(k.to_owned(), v);
            }
        }
        Ok(Self { values })
    }

    fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>, String> {
        self.values
            .get(key)
            .map(|v| v.parse::<T>().map_err(|_| format!("invalid value `{v}` for {key}")))
            .transpose()
    }

    fn list<T: FromStr + Copy>(&self, key: &str, all: &[T]) -> Result<Vec<T>, String>
    where
        T::Err: std::fmt::Display,
    {
        match self.values.get(key) {
            None => Ok(all.to_vec()),
            Some(v) => v.parse::<T>().map(|x| vec![x]).map_err(|e| e.to_string()),
        }
    }

    fn learning(&self) -> Result<Vec<bool>, String> {
        match self.values.get("learning").map(String::as_str) {
            None => Ok(vec![true, false]),
            Some("on") => Ok(vec![true]),
            Some("off") => Ok(vec![false]),
            Some(v) => Err(format!("invalid value `{v}` for learning (expected on or off)")),
        }
    }

    fn format(&self) -> Result<Format, String> {
        match self.values.get("out").map(String::as_str) {
            None | Some("csv") => Ok(Format::Csv),
            Some("json") => Ok(Format::Json),
            Some(v) => Err(format!("invalid value `{v}` for out (expected csv or json)")),
        }
    }
}

enum Failure {
    Usage(String),
    Run(anyhow::Error),
}

fn experiment(kind: Experiment, opts: &ExperimentOpts) -> Result<String, Failure> {
    let usage = Failure::Usage;
    let r = Resolved::new(opts).map_err(usage)?;
    let mut config = SimConfig::default();
    if let Some(t) = r.get("trials").map_err(usage)? {
        config.n_trials = t;
    }
    if let Some(s) = r.get("seed").map_err(usage)? {
        config.seed = s;
    }
    config.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    let format = r.format().map_err(usage)?;
    let run = |e: ownership_norms::sim::SimError| Failure::Run(anyhow!(e));
    let table: Table = match kind {
        Experiment::Norm => {
            let fractions = match r.get::<f64>("fraction").map_err(usage)? {
                Some(f) if (0.0..=1.0).contains(&f) => vec![f],
                Some(f) => return Err(Failure::Usage(format!("fraction {f} is outside [0, 1]"))),
                None => vec![1.0, 0.5, 0.25],
            };
            let noises = r.list("noise", &[Noise::Noiseless, Noise::Noisy]).map_err(usage)?;
            let mut groups = Vec::new();
            for noise in noises {
                for &f in &fractions {
                    groups.push((noise, f, run_norm_learning(&config, f, noise).map_err(run)?));
                }
            }
            norm_table(&groups)
        }
        Experiment::Predict => {
            let conditions = r.list("condition", &Condition::ALL).map_err(usage)?;
            let mut groups = Vec::new();
            for c in conditions {
                groups.push((c, run_prediction_inference(&config, c).map_err(run)?));
            }
            prediction_table(&groups)
        }
        Experiment::Task => {
            let tasks = r.list("task", &[Task::CollectAll, Task::TrashAll]).map_err(usage)?;
            let learning = r.learning().map_err(usage)?;
            let mut groups = Vec::new();
            for t in tasks {
                for &l in &learning {
                    groups.push((t, l, run_task_experiment(&config, t, l).map_err(run)?));
                }
            }
            task_table(&groups)
        }
    };
    match format {
        Format::Csv => table.to_csv().context("writing CSV").map_err(Failure::Run),
        Format::Json => Ok(serde_json::to_string_pretty(&table.to_json()).expect("serializable") + "\n"),
    }
}

fn repl(seed: u64, world: Option<PathBuf>) -> Result<(), Failure> {
    let world = match world {
        Some(p) => {
            let text = std::fs::read_to_string(&p).map_err(|e| Failure::Usage(format!("{}: {e}", p.display())))?;
            serde_json::from_str::<WorldSpec>(&text).map_err(|e| Failure::Usage(format!("{}: {e}", p.display())))?
        }
        None => WorldSpec::Simulated {
            seed,
            agents: 3,
            objects_per_category: 5,
        },
    };
    let config = SessionConfig {
        world,
        ..SessionConfig::default()
    };
    let mut repl = repl::Repl::new(config).map_err(Failure::Usage)?;
    let stdin = std::io::stdin();
    let prompt = stdin.is_terminal();
    match repl.run(stdin.lock(), std::io::stdout().lock(), prompt) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(Failure::Run(e.into())),
        _ => Ok(()),
    }
}

fn serve(host: &str, port: u16, tick_ms: u64) -> Result<(), Failure> {
    let addr: SocketAddr = format!("{host}:{port}")
        .parse()
        .map_err(|e| Failure::Usage(format!("bad address {host}:{port}: {e}")))?;
    let clock = (tick_ms > 0).then(|| Duration::from_millis(tick_ms));
    let rt = tokio::runtime::Runtime::new().map_err(|e| Failure::Run(e.into()))?;
    eprintln!("serving sessions on http://{addr}");
    rt.block_on(ownership_session::server::serve(addr, clock))
        .map_err(|e| Failure::Run(e.into()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Cmd::Experiment { kind, opts } => experiment(*kind, opts).map(|out| print!("{out}")),
        Cmd::Repl { seed, world } => repl(*seed, world.clone()),
        Cmd::Serve { port, host, tick_ms } => serve(host, *port, *tick_ms),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}\n\nRun `ownership --help` for usage.");
            ExitCode::from(2)
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
