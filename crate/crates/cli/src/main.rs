use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use dacip::corpus::synth::{synth_corpus, SynthOptions};
use dacip::corpus::write_jsonl;
use dacip::pipeline::{Pipeline, PipelineConfig, PipelineError, RunManifest, RunOptions, Stage};

/// Builds a reading-comprehension pretraining dataset from conversation transcripts.
#[derive(Debug, Parser)]
#[command(name = "dacip-rc", version)]
struct Cli {
    /// Pipeline config (TOML).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Override the configured shard count.
    #[arg(long, global = true, value_name = "N")]
    shards: Option<usize>,
    /// Continue an existing run in the output directory.
    #[arg(long, global = true)]
    resume: bool,
    /// Print the units that would run, then exit.
    #[arg(long, global = true)]
    dry_run: bool,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Read inputs, apply quality gates, shard.
    Ingest,
    /// Score entropy and keep the selected transcripts.
    Select,
    /// Mask or noise detected PII.
    Anonymize,
    /// Render meta prompts and call the provider.
    Generate,
    /// Extract task pairs; retain a raw JSON slice.
    Parse,
    /// Assemble pretraining records.
    Mix,
    /// Concatenate the dataset and compute statistics.
    Stats,
    /// Score the configured eval input.
    Eval,
    /// Every stage in order.
    RunAll {
        /// Stop after this stage.
        #[arg(long, value_name = "NAME")]
        stage: Option<Stage>,
    },
    /// Write a synthetic transcript corpus as JSONL.
    Synth {
        #[arg(long, default_value_t = 40)]
        count: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Share of transcripts built to fail one quality gate.
        #[arg(long, default_value_t = 0.1)]
        reject_share: f64,
        #[arg(long, value_name = "PATH")]
        out: PathBuf,
    },
}

impl Command {
    fn stage(&self) -> Option<Stage> {
        Some(match self {
            Command::Ingest => Stage::Ingest,
            Command::Select => Stage::Select,
            Command::Anonymize => Stage::Anonymize,
            Command::Generate => Stage::Generate,
            Command::Parse => Stage::Parse,
            Command::Mix => Stage::Mix,
            Command::Stats => Stage::Stats,
            Command::Eval => Stage::Eval,
            Command::RunAll { .. } | Command::Synth { .. } => return None,
        })
    }
}

fn load_config(cli: &Cli) -> Result<PipelineConfig, PipelineError> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| PipelineError::Config("--config is required".into()))?;
    let mut config = PipelineConfig::load(path)?;
    if let Some(n) = cli.shards {
        config.shard_count = n;
        config.validate()?;
    }
    Ok(config)
}

fn print_summary(manifest: &RunManifest, stages: &[Stage]) {
    for stage in stages {
        let Some(rec) = manifest.stages.get(stage) else {
            continue;
        };
        let mut totals = std::collections::BTreeMap::<&str, u64>::new();
        for unit in rec.units.values() {
            for (k, v) in &unit.counts {
                *totals.entry(k.as_str()).or_insert(0) += v;
            }
        }
        let body: Vec<String> = totals.iter().map(|(k, v)| format!("{k}={v}")).collect();
        println!("{stage:<10} units={} {}", rec.units.len(), body.join(" "));
    }
}

fn run_pipeline(cli: &Cli) -> Result<(), PipelineError> {
    let config = load_config(cli)?;
    let pipeline = Pipeline::new(config)?;
    let (stages, stop_after) = match (&cli.command, cli.command.stage()) {
        (_, Some(stage)) => (vec![stage], None),
        (Command::RunAll { stage }, None) => {
            let last = stage.unwrap_or(Stage::Eval);
            (
                Stage::ALL.into_iter().take_while(|s| *s <= last).collect(),
                *stage,
            )
        }
        _ => unreachable!("synth handled separately"),
    };
    if cli.dry_run {
        for u in pipeline.plan(&stages)? {
            println!(
                "{:<10} {:<10} {}",
                u.stage,
                u.unit,
                if u.done { "done" } else { "pending" }
            );
        }
        return Ok(());
    }
    let manifest = match cli.command.stage() {
        Some(stage) => pipeline.run_stage(stage)?,
        None => pipeline.run_all(&RunOptions {
            resume: cli.resume,
            stop_after,
            unit_budget: None,
        })?,
    };
    print_summary(&manifest, &stages);
    println!("output: {}", pipeline.output_dir().display());
    Ok(())
}

fn synth(count: usize, seed: u64, reject_share: f64, out: &PathBuf) -> anyhow::Result<()> {
    anyhow::ensure!(
        (0.0..=1.0).contains(&reject_share),
        "--reject-share must lie in [0, 1]"
    );
    let corpus = synth_corpus(&SynthOptions {
        count,
        seed,
        reject_share,
    });
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).with_context(|| parent.display().to_string())?;
    }
    std::fs::write(out, write_jsonl(&corpus)).with_context(|| out.display().to_string())?;
    println!("wrote {} transcripts to {}", corpus.len(), out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    if let Command::Synth {
        count,
        seed,
        reject_share,
        out,
    } = &cli.command
    {
        return match synth(*count, *seed, *reject_share, out) {
            Ok(()) => ExitCode::SUCCESS,
            Err(e) => {
                eprintln!("error: {e:#}");
                ExitCode::from(3)
            }
        };
    }
    match run_pipeline(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
