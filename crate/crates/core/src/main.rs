use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use relaudit::clireport::{self, Pipeline, PipelineError, RunConfig, EXIT_OK, EXIT_PARTIAL};
use relaudit::Language;

#[derive(Parser)]
#[command(name = "relaudit", version, about = "Audit MT systems on same-gender relationship sentences")]
struct Cli {
    /// TOML run configuration. Without it the synthetic demo setup is used.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for every synthetic backend.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Comma-separated language codes (fr,it,es).
    #[arg(long, global = true, value_delimiter = ',')]
    languages: Option<Vec<Language>>,
    /// Comma-separated subset of the configured backend ids.
    #[arg(long, global = true, value_delimiter = ',')]
    backends: Option<Vec<String>>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the source corpus for each language.
    Generate,
    /// Translate the corpus with every configured backend.
    Translate,
    /// Score translations for possessive-pronoun agreement.
    Evaluate,
    /// Accuracy tables, McNemar tests, regression, charts and summary.
    Analyze {
        /// Print the sentence-level rows behind one stratum,
        /// e.g. `backend=amazon,occupation=judge`.
        #[arg(long)]
        explain: Option<String>,
        /// Fit the regression on an external outcomes CSV instead.
        #[arg(long)]
        regression_input: Option<PathBuf>,
    },
    /// Re-render charts and summary from existing analysis tables.
    Report,
    /// Generate, translate, evaluate and analyze in one go.
    Run,
}

fn execute(cli: Cli) -> Result<i32, PipelineError> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::demo(),
    };
    config.apply_overrides(
        cli.seed,
        cli.languages.as_deref(),
        cli.backends.as_deref(),
        cli.out.as_deref(),
    )?;
    let pipeline = Pipeline::new(config)?;
    match cli.command {
        Command::Generate => print!("{}", pipeline.generate()?),
        Command::Translate => {
            let summary = pipeline.translate()?;
            print!("{summary}");
            if summary.failures() > 0 {
                eprintln!(
                    "{} records failed; see {}",
                    summary.failures(),
                    pipeline.failures_path().display()
                );
                return Ok(EXIT_PARTIAL);
            }
        }
        Command::Evaluate => print!("{}", pipeline.evaluate()?),
        Command::Analyze {
            explain: Some(filter),
            ..
        } => print!("{}", pipeline.explain(&filter)?),
        Command::Analyze {
            regression_input: Some(path),
            ..
        } => print!("{}", pipeline.analyze_regression_file(&path)?.to_text()),
        Command::Analyze { .. } => print!("{}", pipeline.analyze()?),
        Command::Report => print!("{}", pipeline.report()?),
        Command::Run => {
            let (text, partial) = clireport::run_all(&pipeline)?;
            print!("{text}");
            if partial {
                return Ok(EXIT_PARTIAL);
            }
        }
    }
    Ok(EXIT_OK)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match execute(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
