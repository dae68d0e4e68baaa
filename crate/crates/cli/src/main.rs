use clap::{Args, Parser, Subcommand};
use frac_cli::{config, emit, resolve_threads, run, CliError, Command};
use std::path::PathBuf;
use toml::{Table, Value};

#[derive(Parser)]
#[command(name = "frac", version, about = "Fractional operators, extensions and Harnack experiments")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Apply the fractional power to input data
    Apply(Common),
    /// Solve the fractional Poisson problem
    Solve(Common),
    /// Extension problem and its Neumann trace
    Extend(Common),
    /// Estimate geometric constants of the sections
    Geometry {
        #[command(flatten)]
        common: Common,
        /// K, theta or constants
        #[arg(long)]
        estimate: Option<String>,
    },
    /// Sliding-paraboloid measure estimate
    Paraboloid(Common),
    /// Build and verify a barrier
    Barrier {
        #[command(flatten)]
        common: Common,
        /// Barrier case 1-4
        #[arg(long)]
        case: Option<i64>,
    },
    /// Harnack constant ensemble
    Harnack {
        #[command(flatten)]
        common: Common,
        /// extension or ls
        #[arg(long)]
        mode: Option<String>,
    },
    /// Hölder exponent fits
    Holder {
        #[command(flatten)]
        common: Common,
        /// extension or ls
        #[arg(long)]
        mode: Option<String>,
    },
    /// Covering lemma and measure decay
    Cover(Common),
}

#[derive(Args)]
struct Common {
    /// TOML configuration file
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    s: Option<f64>,
    #[arg(long)]
    seed: Option<i64>,
    #[arg(long)]
    trials: Option<i64>,
    #[arg(long)]
    nodes: Option<i64>,
    #[arg(long)]
    threads: Option<i64>,
    /// Output JSON path; the CSV goes beside it
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override any config key, e.g. --set lambda=0.25
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

fn main() {
    env_logger::init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => {}
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(e.exit_code());
        }
    }
}

fn execute(cli: Cli) -> Result<(), CliError> {
    let (command, common, extra) = match cli.command {
        Sub::Apply(c) => (Command::Apply, c, None),
        Sub::Solve(c) => (Command::Solve, c, None),
        Sub::Extend(c) => (Command::Extend, c, None),
        Sub::Geometry { common, estimate } => (Command::Geometry, common, estimate.map(|v| ("estimate", Value::String(v)))),
        Sub::Paraboloid(c) => (Command::Paraboloid, c, None),
        Sub::Barrier { common, case } => (Command::Barrier, common, case.map(|v| ("case", Value::Integer(v)))),
        Sub::Harnack { common, mode } => (Command::Harnack, common, mode.map(|v| ("mode", Value::String(v)))),
        Sub::Holder { common, mode } => (Command::Holder, common, mode.map(|v| ("mode", Value::String(v)))),
        Sub::Cover(c) => (Command::Cover, c, None),
    };
    let mut table = match &common.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
            config::parse_table(&text)?
        }
        None => Table::new(),
    };
    let mut errors = Vec::new();
    match table.get("command").and_then(Value::as_str) {
        Some(name) if name != command.name() => {
            errors.push(format!("`command`: file says `{name}` but the subcommand is `{command}`"));
        }
        _ => {
            table.insert("command".into(), Value::String(command.name().into()));
        }
    }
    let flags = [
        ("s", common.s.map(Value::Float)),
        ("seed", common.seed.map(Value::Integer)),
        ("trials", common.trials.map(Value::Integer)),
        ("nodes", common.nodes.map(Value::Integer)),
        ("threads", common.threads.map(Value::Integer)),
        ("out", common.out.map(|p| Value::String(p.display().to_string()))),
    ];
    for (k, v) in flags.into_iter().chain(extra.map(|(k, v)| (k, Some(v)))) {
        if let Some(v) = v {
            table.insert(k.into(), v);
        }
    }
    for item in &common.set {
        match item.split_once('=') {
            Some((k, v)) => {
                table.insert(k.trim().into(), parse_value(v.trim()));
            }
            None => errors.push(format!("--set `{item}`: expected KEY=VALUE")),
        }
    }
    if !errors.is_empty() {
        return Err(CliError::Config(errors));
    }
    let cfg = config::validate(table)?;
    let threads = resolve_threads(cfg.threads, std::env::var("FRAC_THREADS").ok().as_deref())?;
    log::info!("running {} with {threads} thread(s)", cfg.command);
    let report = run(&cfg, threads)?;
    let out = emit(&report)?;
    println!("{}", out.json.display());
    if let Some(csv) = out.csv {
        println!("{}", csv.display());
    }
    Ok(())
}

/// A `--set` value read as a TOML literal, falling back to a bare string.
fn parse_value(v: &str) -> Value {
    format!("v = {v}").parse::<Table>().ok().and_then(|mut t| t.remove("v")).unwrap_or_else(|| Value::String(v.into()))
}
