use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use vrange_cli::{cmd_analyze, cmd_fixture, cmd_report, cmd_validate, RunConfig};
use vrange_core::vigor::AnalysisConfig;

#[derive(Parser)]
#[command(
    name = "vrange",
    version,
    about = "Vulnerability value ranges for feed-forward classifiers"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute per-neuron ranges and vulnerability factors.
    Analyze(RunArgs),
    /// Check ranges with statistical fault-injection campaigns.
    Validate {
        #[command(flatten)]
        run: RunArgs,
        /// Range dump to check (default: <out>/ranges.csv).
        #[arg(long)]
        ranges: Option<PathBuf>,
    },
    /// Train the fixture zoo and write split manifests.
    Fixture {
        #[arg(long, default_value = "fixtures")]
        out: PathBuf,
        /// Directory with the MNIST-subset IDX pair.
        #[arg(long, default_value = "data/mnist5k")]
        data: PathBuf,
        /// Fixtures to train (default: all).
        names: Vec<String>,
    },
    /// Summarize an output directory.
    Report {
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    model: PathBuf,
    /// IDX directory or `synthetic:classes=..,dim=..,per_class=..,sep=..,seed=..`.
    #[arg(long)]
    data: String,
    #[arg(long)]
    out: PathBuf,
    /// Analysis-set manifest.
    #[arg(long)]
    set1: Option<PathBuf>,
    /// Held-out manifest (validate only).
    #[arg(long)]
    set2: Option<PathBuf>,
    /// Use only the first N entries of each manifest.
    #[arg(long)]
    subset: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    epsilon: Option<f32>,
    #[arg(long)]
    search_bound: Option<f32>,
    #[arg(long)]
    tolerance: Option<f32>,
    #[arg(long)]
    zero_grad_threshold: Option<f64>,
    /// Comma-separated surface indices (default: all).
    #[arg(long, value_delimiter = ',')]
    layers: Vec<usize>,
    /// Worker threads (0: one per core).
    #[arg(long, default_value_t = 0)]
    workers: usize,
}

impl RunArgs {
    fn config(self) -> RunConfig {
        let d = AnalysisConfig::default();
        let mut cfg = RunConfig::new(self.model, self.data, self.out);
        cfg.set1 = self.set1;
        cfg.set2 = self.set2;
        cfg.subset = self.subset;
        cfg.seed = self.seed;
        cfg.layers = self.layers;
        cfg.workers = self.workers;
        cfg.analysis = AnalysisConfig {
            probe_epsilon: self.epsilon.unwrap_or(d.probe_epsilon),
            search_bound: self.search_bound.unwrap_or(d.search_bound),
            tolerance: self.tolerance.unwrap_or(d.tolerance),
            zero_grad_threshold: self.zero_grad_threshold.unwrap_or(d.zero_grad_threshold),
            ..d
        };
        cfg
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Analyze(args) => {
            let out = cmd_analyze(&args.config())?;
            let s = &out.manifest.summary;
            println!(
                "analyzed {} neurons over {} inputs; skip fraction {:.3}; forwards per neuron {:.2}",
                s.neurons, out.manifest.inputs, s.skip_fraction, s.forwards_per_neuron
            );
            for l in &out.manifest.layers {
                println!("{:<6} lvf {:.3}%", l.name, l.lvf_pct);
            }
        }
        Command::Validate { run, ranges } => {
            let cfg = run.config();
            cmd_validate(&cfg, ranges.as_deref())?;
            print!("{}", cmd_report(&cfg.out)?);
        }
        Command::Fixture { out, data, names } => {
            for r in cmd_fixture(&out, &data, &names)? {
                println!(
                    "{:<12} train {:.4}  test {:.4}  {}",
                    r.name,
                    r.train_accuracy,
                    r.test_accuracy,
                    r.model.display()
                );
            }
        }
        Command::Report { out } => print!("{}", cmd_report(&out)?),
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
