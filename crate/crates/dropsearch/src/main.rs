use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use dropsearch::harness::{config::RunConfig, pipeline, synth};

#[derive(Parser)]
#[command(
    name = "dropsearch",
    about = "Hardware-aware dropout configuration search over weight-sharing supernets",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Run configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config's output directory.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

impl ConfigArgs {
    fn load(&self) -> dropsearch::Result<RunConfig> {
        let mut cfg = RunConfig::load(&self.config)?;
        if let Some(dir) = &self.out_dir {
            cfg.paths.out_dir = dir.clone();
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train the supernet and write a checkpoint.
    Train {
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Build the latency dataset and fit the GP surrogate.
    LatencyFit {
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Run the evolutionary search against a checkpoint and GP model.
    Search {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        gp: PathBuf,
    },
    /// Evaluate every genome and emit the reference Pareto front.
    Enumerate {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        gp: PathBuf,
    },
    /// Evaluate a single genome given in letter code (e.g. B-B-M).
    Eval {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Optional GP model; the analytic oracle is used when absent.
        #[arg(long)]
        gp: Option<PathBuf>,
        #[arg(long)]
        genome: String,
        /// Run forward passes with Q7.8 weights and activations.
        #[arg(long)]
        quantized: bool,
    },
    /// Generate a synthetic digit dataset in IDX format.
    SynthData {
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 12000)]
        train: usize,
        #[arg(long, default_value_t = 2000)]
        test: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn run(cli: Cli) -> dropsearch::Result<()> {
    match cli.command {
        Command::Train { config } => {
            let cfg = config.load()?;
            let artifacts = pipeline::cmd_train(&cfg)?;
            println!("checkpoint: {}", artifacts.checkpoint_path.display());
            for (epoch, loss) in artifacts.report.epoch_mean_loss.iter().enumerate() {
                println!("epoch {epoch}: mean loss {loss:.6}");
            }
            println!("iterations: {}", artifacts.report.iterations);
        }
        Command::LatencyFit { config } => {
            let cfg = config.load()?;
            let artifacts = pipeline::cmd_latency_fit(&cfg)?;
            println!("gp model: {}", artifacts.model_path.display());
            println!(
                "rows {} lengthscale {:.4} lml {:.4} loo-rmse {:.6}",
                artifacts.report.rows,
                artifacts.report.lengthscale,
                artifacts.report.log_marginal_likelihood,
                artifacts.report.loo_rmse
            );
        }
        Command::Search { config, checkpoint, gp } => {
            let cfg = config.load()?;
            let artifacts = pipeline::cmd_search(&cfg, &checkpoint, &gp)?;
            let best = &artifacts.outcome.best;
            println!(
                "best {} ({}) aim {:.4}: acc {:.3}% ece {:.3}% ape {:.4} lat {:.4}ms",
                artifacts.best_letters,
                best.genome,
                best.aim,
                best.metrics.accuracy_pct,
                best.metrics.ece_pct,
                best.metrics.ape_nats,
                best.metrics.latency_ms
            );
            println!("history: {}", artifacts.history_path.display());
            println!("pareto:  {}", artifacts.pareto_path.display());
        }
        Command::Enumerate { config, checkpoint, gp } => {
            let cfg = config.load()?;
            let artifacts = pipeline::cmd_enumerate(&cfg, &checkpoint, &gp)?;
            println!(
                "evaluated {} genomes, {} on the reference Pareto front",
                artifacts.records.len(),
                artifacts.pareto.len()
            );
            println!("table:  {}", artifacts.csv_path.display());
            println!("pareto: {}", artifacts.pareto_path.display());
        }
        Command::Eval { config, checkpoint, gp, genome, quantized } => {
            let cfg = config.load()?;
            let output = pipeline::cmd_eval(&cfg, &checkpoint, gp.as_deref(), &genome, quantized)?;
            println!("{}", serde_json::to_string_pretty(&output).expect("serializable output"));
        }
        Command::SynthData { out_dir, train, test, seed } => {
            synth::write_dataset(&out_dir, train, test, seed)?;
            println!(
                "wrote {train} train / {test} test images to {}",
                out_dir.display()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
