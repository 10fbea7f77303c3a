use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use evoprune_cli::config::{RunConfig, Settings};
use evoprune_cli::{commands, report, CliError, CliResult};

#[derive(Parser)]
#[command(
    name = "evoprune",
    version,
    about = "Prune LeNet on MNIST with a multi-objective genetic algorithm"
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Flat key = value configuration file
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory holding the four MNIST IDX files
    #[arg(long, global = true)]
    data: Option<PathBuf>,
    /// Output directory
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Error weight
    #[arg(long, global = true)]
    lambda1: Option<f64>,
    /// Computation weight
    #[arg(long, global = true)]
    lambda2: Option<f64>,
    /// Density weight
    #[arg(long, global = true)]
    lambda3: Option<f64>,
    /// Named weighting: balanced, speed, storage or accuracy
    #[arg(long, global = true)]
    preset: Option<String>,
    /// Generation cap
    #[arg(long, global = true)]
    generations: Option<usize>,
    /// Baseline checkpoint (default OUT/baseline.ckpt)
    #[arg(long, global = true)]
    baseline: Option<PathBuf>,
    /// Any other setting, as KEY=VALUE (repeatable)
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Train the dense baseline and save its checkpoint
    Pretrain,
    /// Run the GA from the baseline; writes curves, the final elite and a summary row
    Prune,
    /// Print test error, computation and sparsity of a checkpoint
    Eval { checkpoint: PathBuf },
    /// Plot the elite curves of one or more runs
    Report {
        #[arg(required = true)]
        csv: Vec<PathBuf>,
    },
}

fn settings(c: &Common) -> CliResult<Settings> {
    let mut s = match &c.config {
        Some(path) => Settings::load(path)?,
        None => Settings::default(),
    };
    for kv in &c.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("--set expects KEY=VALUE, got {kv:?}")))?;
        s.set(k.trim(), v.trim())?;
    }
    let paths = [
        ("data", &c.data),
        ("out", &c.out),
        ("baseline", &c.baseline),
    ];
    for (key, v) in paths {
        if let Some(p) = v {
            s.set(key, p.display())?;
        }
    }
    let reals = [
        ("lambda1", c.lambda1),
        ("lambda2", c.lambda2),
        ("lambda3", c.lambda3),
    ];
    for (key, v) in reals {
        if let Some(x) = v {
            s.set(key, x)?;
        }
    }
    if let Some(p) = &c.preset {
        s.set("preset", p)?;
    }
    if let Some(seed) = c.seed {
        s.set("seed", seed)?;
    }
    if let Some(g) = c.generations {
        s.set("generations", g)?;
    }
    Ok(s)
}

fn run(cli: Cli) -> CliResult<()> {
    let settings = settings(&cli.common)?;
    let cfg = RunConfig::from_settings(&settings)?;
    match cli.command {
        Command::Pretrain => commands::pretrain(&cfg).map(drop),
        Command::Prune => commands::prune(&cfg).map(drop),
        Command::Eval { checkpoint } => commands::eval(&cfg, &checkpoint).map(drop),
        Command::Report { csv } => {
            for path in report::report(&csv, cli.common.out.as_deref())? {
                println!("{}", path.display());
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
