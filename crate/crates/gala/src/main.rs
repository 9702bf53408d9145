use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use gala::config::{resolve_out, ExperimentConfig, PRESET_SEPARATION};
use gala::experiment::{self, RebalanceOptions, SynthOptions};

#[derive(Parser)]
#[command(name = "gala", version, about = "Gradient-aware logit adjustment experiments for long-tailed classification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one model, evaluate with and without re-balancing, write reports.
    Train {
        #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
        config: Option<PathBuf>,
        /// Built-in configuration (`paper-analysis`).
        #[arg(long)]
        preset: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-balance a probability matrix CSV at temperature tau.
    Rebalance {
        #[arg(long)]
        probs: PathBuf,
        #[arg(long)]
        tau: f64,
        /// Ground-truth labels (`label` column) for before/after reports.
        #[arg(long)]
        truth: Option<PathBuf>,
        /// Training class counts (`class,count`) used for head/medium/tail groups.
        #[arg(long)]
        counts: Option<PathBuf>,
        #[arg(long, default_value_t = 100)]
        head_threshold: usize,
        #[arg(long, default_value_t = 20)]
        tail_threshold: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train cross-entropy and GALA side by side with a shared batch order.
    Compare {
        #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
        config: Option<PathBuf>,
        #[arg(long)]
        preset: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Emit a synthetic long-tailed dataset as CSV.
    Synth {
        #[arg(long)]
        k: usize,
        #[arg(long = "if")]
        imbalance_factor: f64,
        #[arg(long)]
        nmax: usize,
        #[arg(long)]
        dim: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = PRESET_SEPARATION)]
        separation: f64,
        #[arg(long, default_value_t = gala_core::data::DEFAULT_TEST_PER_CLASS)]
        test_per_class: usize,
    },
}

fn load_config(config: Option<PathBuf>, preset: Option<String>) -> anyhow::Result<ExperimentConfig> {
    match (config, preset) {
        (Some(path), None) => Ok(ExperimentConfig::load(&path)?),
        (None, Some(name)) => Ok(ExperimentConfig::preset(&name)?),
        _ => bail!("exactly one of --config and --preset is required"),
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Train { config, preset, out } => {
            let cfg = load_config(config, preset)?;
            let dir = cfg.resolve_out(out.as_deref());
            let r = experiment::run_train(&cfg, &dir).context("train failed")?;
            println!(
                "{}: top1 {:.4} (re-balanced {:.4}), outputs in {}",
                r.loss.as_str(),
                r.raw.top1,
                r.rebalanced.top1,
                dir.display()
            );
        }
        Command::Compare { config, preset, out } => {
            let cfg = load_config(config, preset)?;
            let dir = cfg.resolve_out(out.as_deref());
            let r = experiment::run_compare(&cfg, &dir).context("compare failed")?;
            let fmt = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{x:.4}"));
            println!(
                "top1 ce {:.4} gala {:.4} | tail ce {} gala {} | ratio spread ce {:.3} gala {:.3} | outputs in {}",
                r.report.cross_entropy.top1,
                r.report.gala.top1,
                fmt(r.report.cross_entropy.group_accuracy.tail),
                fmt(r.report.gala.group_accuracy.tail),
                r.report.cross_entropy.gradient_ratio_spread,
                r.report.gala.gradient_ratio_spread,
                dir.display()
            );
        }
        Command::Rebalance { probs, tau, truth, counts, head_threshold, tail_threshold, out } => {
            let opts = RebalanceOptions {
                probs,
                tau,
                truth,
                counts,
                head_threshold,
                tail_threshold,
                out: resolve_out(out.as_deref(), None),
            };
            let r = experiment::run_rebalance(&opts).context("rebalance failed")?;
            match &r.reports {
                Some((before, after)) => println!(
                    "top1 tau=0 {:.4} -> tau={} {:.4}, outputs in {}",
                    before.top1,
                    tau,
                    after.top1,
                    opts.out.display()
                ),
                None => println!("{} predictions written to {}", r.predictions.len(), opts.out.display()),
            }
        }
        Command::Synth { k, imbalance_factor, nmax, dim, seed, out, separation, test_per_class } => {
            let opts = SynthOptions {
                num_classes: k,
                imbalance_factor,
                max_count: nmax,
                dim,
                separation,
                test_per_class,
                seed,
                out,
            };
            let (train, test) = experiment::run_synth(&opts).context("synth failed")?;
            println!("{} train / {} test samples written to {}", train.len(), test.len(), opts.out.display());
        }
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
