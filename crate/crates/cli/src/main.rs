mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nssfp_core::{Error, PipelineConfig};

#[derive(Parser, Debug)]
#[command(
    name = "nssfp",
    version,
    about = "Nucleus-size-series fingerprinting experiments"
)]
struct Cli {
    #[command(flatten)]
    common: CommonArgs,

    #[command(subcommand)]
    command: Command,
}

/// Settings shared by every subcommand. Precedence: config file, then
/// `NSSFP_<KEY>` environment variables, then these flags.
#[derive(Args, Debug)]
struct CommonArgs {
    /// `key = value` configuration file
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Override any configuration key (repeatable)
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,

    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Top-p threshold used to compute nucleus sizes
    #[arg(long, global = true)]
    q: Option<f64>,

    /// Sequence length N used for fitting and matching
    #[arg(long, global = true, value_name = "N")]
    length: Option<usize>,

    #[arg(long, global = true)]
    epsilon: Option<f64>,

    #[arg(long, global = true)]
    drop_fraction: Option<f64>,

    #[arg(long, global = true)]
    variability_threshold: Option<f64>,

    #[arg(long, global = true)]
    similarity_window: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train an n-gram model on a post corpus or on synthetic text
    Train(commands::TrainArgs),
    /// Aggregate a corpus per author and compute nucleus size series
    Nss(commands::NssArgs),
    /// Variability per sequence and smoothed pairwise-distance histograms
    Analyze(commands::AnalyzeArgs),
    /// Fit U(N), d(N) and tau for one or more lengths
    Fit(commands::FitArgs),
    /// Simulate side-channel traces of nucleus size series
    Simulate(commands::SimulateArgs),
    /// Match series against traces with a fitted threshold
    Match(commands::MatchArgs),
    /// Run simulate, fit and match end to end and report recall
    Evaluate(commands::EvaluateArgs),
    /// Time the vulnerable and mitigated top-p removal loops
    Bench(commands::BenchArgs),
    /// Summarize fit and evaluation reports
    Report(commands::ReportArgs),
}

fn resolve_config(common: &CommonArgs) -> nssfp_core::Result<PipelineConfig> {
    let mut cfg = PipelineConfig::default();
    if let Some(path) = &common.config {
        cfg.apply_file(path)?;
        log::info!("config file: {}", path.display());
    }
    let from_env = cfg.apply_env(std::env::vars())?;
    if !from_env.is_empty() {
        log::info!("config from environment: {}", from_env.join(", "));
    }
    for kv in &common.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Usage(format!("--set expects KEY=VALUE, got {kv:?}")))?;
        cfg.set(k.trim(), v)?;
    }
    let flags: [(&str, Option<String>); 7] = [
        ("seed", common.seed.map(|v| v.to_string())),
        ("q", common.q.map(|v| v.to_string())),
        ("sequence_length", common.length.map(|v| v.to_string())),
        ("epsilon", common.epsilon.map(|v| v.to_string())),
        ("drop_fraction", common.drop_fraction.map(|v| v.to_string())),
        (
            "variability_threshold",
            common.variability_threshold.map(|v| v.to_string()),
        ),
        (
            "similarity_window",
            common.similarity_window.map(|v| v.to_string()),
        ),
    ];
    for (k, v) in flags {
        if let Some(v) = v {
            cfg.set(k, &v)?;
        }
    }
    // the cap must admit the requested length
    if cfg.word_cap < cfg.sequence_length {
        cfg.word_cap = cfg.sequence_length;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Usage(_) | Error::Config(_) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    let result = resolve_config(&cli.common).and_then(|cfg| {
        log::info!(
            "resolved config (seed {}):\n{}",
            cfg.seed,
            cfg.to_string().trim_end()
        );
        match &cli.command {
            Command::Train(a) => commands::train(a, &cfg),
            Command::Nss(a) => commands::nss(a, &cfg),
            Command::Analyze(a) => commands::analyze(a, &cfg),
            Command::Fit(a) => commands::fit(a, &cfg),
            Command::Simulate(a) => commands::simulate(a, &cfg),
            Command::Match(a) => commands::match_cmd(a, &cfg),
            Command::Evaluate(a) => commands::evaluate(a, &cfg),
            Command::Bench(a) => commands::bench(a, &cfg),
            Command::Report(a) => commands::report(a, &cfg),
        }
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: kind={} message={:?}", e.kind(), e.to_string());
            ExitCode::from(exit_code(&e))
        }
    }
}
