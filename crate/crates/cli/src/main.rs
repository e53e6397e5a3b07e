use std::path::PathBuf;

use anyhow::Context;
use clap::{Parser, Subcommand};

use augforge::eval::Strategy;
use augforge::pipeline::Runner;

/// Diagnose class imbalance in rubric-labeled response corpora and repair it
/// with SMOTE, LLM, EASE, or ALP augmentation, then compare classifier
/// metrics across strategies.
#[derive(Parser)]
#[command(name = "augforge", version, about)]
struct Cli {
    /// Run configuration (TOML).
    #[arg(long, global = true, default_value = "augforge.toml")]
    config: PathBuf,
    /// Override the config's global seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override the config's output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// LLM dry run: emit prompts, never call the endpoint.
    #[arg(long, global = true)]
    dry_run: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the per-category imbalance profile, flagging severe categories.
    Analyze,
    /// Run one augmentation strategy over the train split.
    Augment {
        #[arg(long)]
        strategy: Strategy,
    },
    /// Train per-category labelers per strategy and emit the comparison.
    Evaluate {
        /// Comma-separated strategies (default: the config's list).
        #[arg(long, value_delimiter = ',')]
        strategies: Vec<Strategy>,
    },
    /// Full run: analyze, augment every configured strategy, evaluate.
    Pipeline,
    /// Generate the synthetic benchmark corpus.
    GenBenchmark {
        /// Where to write the corpus (default: the config's dataset path).
        #[arg(long)]
        dataset_out: Option<PathBuf>,
    },
}

fn runner(cli: &Cli) -> anyhow::Result<Runner> {
    let mut runner = Runner::from_file(&cli.config)
        .with_context(|| format!("loading config {}", cli.config.display()))?;
    if let Some(seed) = cli.seed {
        runner.set_seed(seed);
    }
    if let Some(out) = &cli.out {
        runner.set_out_dir(out.clone());
    }
    if cli.dry_run {
        runner.set_dry_run(true);
    }
    Ok(runner)
}

fn main() -> anyhow::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match &cli.command {
        Command::GenBenchmark { dataset_out } => {
            // The dataset file may not exist yet, so skip full validation
            // and write the corpus directly.
            let (mut config, _hash) = augforge::pipeline::load_config(&cli.config)
                .with_context(|| format!("loading config {}", cli.config.display()))?;
            if let Some(seed) = cli.seed {
                config.seed = seed;
            }
            let out_path = dataset_out.clone().unwrap_or_else(|| config.dataset.path.clone());
            let spec = config
                .benchmark
                .clone()
                .unwrap_or_else(augforge::corpus::BenchmarkSpec::cart_default);
            let corpus = augforge::corpus::generate_benchmark_corpus(&spec, config.seed)?;
            if let Some(parent) = out_path.parent() {
                std::fs::create_dir_all(parent)?;
            }
            augforge::corpus::write_dataset(&corpus, &out_path, augforge::corpus::DatasetFormat::Jsonl)?;
            println!("wrote {} responses to {}", corpus.len(), out_path.display());
        }
        Command::Analyze => {
            let report = runner(&cli)?.cmd_analyze()?;
            print!("{}", report.text);
        }
        Command::Augment { strategy } => {
            runner(&cli)?.cmd_augment(*strategy)?;
            println!("augment/{strategy}: done");
        }
        Command::Evaluate { strategies } => {
            let runner = runner(&cli)?;
            let strategies = if strategies.is_empty() {
                runner
                    .config()
                    .strategy_list()
                    .map_err(augforge::pipeline::PipelineError::from)?
            } else {
                strategies.clone()
            };
            let comparison = runner.cmd_evaluate(&strategies)?;
            print!("{}", comparison.text);
        }
        Command::Pipeline => {
            let summary = runner(&cli)?.cmd_pipeline()?;
            print!("{}", summary.analyze.text);
            println!();
            print!("{}", summary.comparison.text);
            if !summary.warnings.is_empty() {
                println!("\nwarnings:");
                for (stage, warning) in &summary.warnings {
                    println!("  [{stage}] {warning}");
                }
            }
        }
    }
    Ok(())
}
