//! Command-line front end for the bias measurement pipeline.

use std::path::PathBuf;
use std::process::exit;

use clap::{Parser, Subcommand, ValueEnum};

use biascope::corpus;
use biascope::gateway::Mode;
use biascope::pipeline::{self, Level, RunConfig, RunOutcome, STAGE_ORDER};
use biascope::{Error, Result};

#[derive(Parser)]
#[command(
    name = "biascope",
    version,
    about = "Measures political bias in text-generation models: stance, framing, and style"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Run configuration file (TOML).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Override the configured mode.
    #[arg(long, global = true, value_enum)]
    mode: Option<ModeArg>,

    /// Replay source directory, or destination for export-bundle.
    #[arg(long, global = true, value_name = "PATH")]
    bundle: Option<PathBuf>,

    /// Override the root seed.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,

    /// Restrict the run to these model ids (comma separated).
    #[arg(long, global = true, value_delimiter = ',', value_name = "IDS")]
    models: Option<Vec<String>>,

    /// Restrict the run to these topic ids (comma separated).
    #[arg(long, global = true, value_delimiter = ',', value_name = "IDS")]
    topics: Option<Vec<String>>,

    /// Override the output directory.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Check configuration, environment, and bundle completeness.
    Validate,
    /// Generate the corpora and parse them into headlines.
    Generate,
    /// Run one analysis stage over completed corpora.
    Analyze {
        #[arg(long, value_enum)]
        stage: AnalyzeStage,
    },
    /// Assemble report artifacts from completed analyses.
    Report,
    /// Run every stage end to end.
    Run,
    /// Package the recorded call envelopes into a replay bundle.
    ExportBundle,
    /// Re-run the pipeline from a recorded bundle, no network.
    Replay,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Live,
    Replay,
}

impl From<ModeArg> for Mode {
    fn from(arg: ModeArg) -> Mode {
        match arg {
            ModeArg::Live => Mode::Live,
            ModeArg::Replay => Mode::Replay,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum AnalyzeStage {
    Stance,
    Frames,
    Style,
}

fn main() {
    env_logger::init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                exit(0);
            }
            eprint!("{e}");
            exit(1);
        }
    };
    match dispatch(cli) {
        Ok(code) => exit(code),
        Err(e) => {
            eprintln!("error: {e}");
            exit(e.exit_code());
        }
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| Error::Config("pass --config PATH".to_string()))?;
    let mut config = RunConfig::load(path)?;

    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(mode) = cli.mode {
        config.mode = mode.into();
    }
    if let Some(bundle) = &cli.bundle {
        config.bundle = Some(bundle.clone());
    }
    if let Some(out) = &cli.out {
        config.output_dir = out.clone();
    }
    if let Some(wanted) = &cli.models {
        for id in wanted {
            if !config.models.iter().any(|m| &m.id == id) {
                return Err(Error::Config(format!(
                    "--models names unknown model id '{id}'"
                )));
            }
        }
        config.models.retain(|m| wanted.contains(&m.id));
    }
    if let Some(wanted) = &cli.topics {
        let all = corpus::load_topics(config.topics.clone())?;
        for id in wanted {
            if !all.iter().any(|t| &t.id == id) {
                return Err(Error::Config(format!(
                    "--topics names unknown topic id '{id}'"
                )));
            }
        }
        config.topics = Some(
            all.into_iter()
                .filter(|t| wanted.contains(&t.id))
                .collect(),
        );
    }
    Ok(config)
}

fn print_outcome(outcome: &RunOutcome) {
    for stage in &outcome.skipped {
        println!("stage {stage}: up to date");
    }
    for stage in &outcome.executed {
        println!("stage {stage}: done");
    }
    for warning in &outcome.warnings {
        eprintln!("warning: {warning}");
    }
    println!("network requests: {}", outcome.network_ops);
}

fn dispatch(cli: Cli) -> Result<i32> {
    match &cli.command {
        Command::Validate => {
            let config = load_config(&cli)?;
            let diags = pipeline::validate(&config);
            let mut errors = 0;
            for diag in &diags {
                match diag.level {
                    Level::Error => {
                        errors += 1;
                        eprintln!("error: {}", diag.message);
                    }
                    Level::Warning => eprintln!("warning: {}", diag.message),
                }
            }
            if errors > 0 {
                eprintln!("validation failed with {errors} error(s)");
                Ok(1)
            } else {
                println!("configuration is valid");
                Ok(0)
            }
        }
        Command::Generate => {
            let config = load_config(&cli)?;
            let outcome = pipeline::run_stages(&config, &["generate", "headlines"])?;
            print_outcome(&outcome);
            Ok(0)
        }
        Command::Analyze { stage } => {
            let config = load_config(&cli)?;
            let targets: &[&str] = match stage {
                AnalyzeStage::Stance => &["embed", "stance"],
                AnalyzeStage::Frames => &["frames"],
                AnalyzeStage::Style => &["style"],
            };
            let outcome = pipeline::run_stages(&config, targets)?;
            print_outcome(&outcome);
            Ok(0)
        }
        Command::Report => {
            let config = load_config(&cli)?;
            let outcome = pipeline::run_stages(&config, &["report"])?;
            print_outcome(&outcome);
            println!("report written under {}", config.output_dir.join("report").display());
            Ok(0)
        }
        Command::Run => {
            let config = load_config(&cli)?;
            let outcome = pipeline::run_stages(&config, STAGE_ORDER)?;
            print_outcome(&outcome);
            Ok(0)
        }
        Command::ExportBundle => {
            let config = load_config(&cli)?;
            let dest = config.bundle.clone().ok_or_else(|| {
                Error::Config("export-bundle needs --bundle DIR (the destination)".to_string())
            })?;
            let bundle = pipeline::export_bundle(&config, &dest)?;
            println!(
                "exported {} envelopes to {}",
                bundle.files.len(),
                dest.display()
            );
            Ok(0)
        }
        Command::Replay => {
            let mut config = load_config(&cli)?;
            config.mode = Mode::Replay;
            if config.bundle.is_none() {
                return Err(Error::Config(
                    "replay needs --bundle DIR (the recorded bundle)".to_string(),
                ));
            }
            let outcome = pipeline::run_stages(&config, STAGE_ORDER)?;
            print_outcome(&outcome);
            Ok(0)
        }
    }
}
