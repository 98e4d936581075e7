//! Command-line driver for the simulation experiments.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use selective::harness::emit::emit_diagnosis;
use selective::harness::{emit, run_diagnosis, run_experiment, ExperimentConfig, ExperimentKind, OutputFormat, Scale};
use selective::Error;

#[derive(Debug, Parser)]
#[command(name = "selective", version, about = "Selection-adjusted inference experiments with learned selection probabilities")]
struct Cli {
    #[command(subcommand)]
    experiment: Experiment,
}

#[derive(Debug, Subcommand)]
enum Experiment {
    /// Drop-the-losers two-stage trial.
    Dtl(Common),
    /// Lasso with data carving.
    Lasso(Common),
    /// Benjamini-Hochberg rejections.
    Bh(Common),
    /// Repeated t-testing with early stopping.
    Repeated(Common),
    /// Pivot diagnostic for the learned conditional law.
    Diagnose(Common),
}

#[derive(Debug, Args)]
struct Common {
    /// Flat key=value file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_parser = ["desk", "paper"])]
    scale: Option<String>,
    #[arg(long)]
    replicates: Option<String>,
    /// Bootstrap datasets used to train the network.
    #[arg(long)]
    boot: Option<String>,
    #[arg(long)]
    epochs: Option<String>,
    #[arg(long)]
    batch: Option<String>,
    #[arg(long)]
    alpha: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// Results file; defaults to `<experiment>.<format>`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_parser = ["csv", "json"], default_value = "csv")]
    format: String,
    /// First-stage sample size per arm (drop-the-losers); sets n2 = n1/4.
    #[arg(long)]
    n1: Option<String>,
    /// Number of arms.
    #[arg(long)]
    k: Option<String>,
    /// Signal strength constant (lasso).
    #[arg(long)]
    c0: Option<String>,
    /// Non-null mean size (BH).
    #[arg(long)]
    theta0: Option<String>,
    /// Mean difference between arms (repeated testing).
    #[arg(long)]
    effect: Option<String>,
}

impl Common {
    fn overrides(&self) -> Vec<(&'static str, &str)> {
        [
            ("replicates", &self.replicates),
            ("boot", &self.boot),
            ("epochs", &self.epochs),
            ("batch", &self.batch),
            ("alpha", &self.alpha),
            ("seed", &self.seed),
            ("n1", &self.n1),
            ("k", &self.k),
            ("c0", &self.c0),
            ("theta0", &self.theta0),
            ("effect", &self.effect),
        ]
        .into_iter()
        .filter_map(|(k, v)| v.as_deref().map(|v| (k, v)))
        .collect()
    }
}

/// Scale defaults, then the config file, then flags.
fn resolve(kind: ExperimentKind, args: &Common) -> Result<ExperimentConfig, Error> {
    let pairs = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
            ExperimentConfig::parse_pairs(&text)?
        }
        None => Vec::new(),
    };
    let scale_text = args.scale.as_deref().or_else(|| pairs.iter().rev().find(|(k, _)| k == "scale").map(|(_, v)| v.as_str()));
    let scale: Scale = scale_text.unwrap_or("desk").parse()?;
    let mut cfg = ExperimentConfig::for_scale(kind, scale);
    for (k, v) in &pairs {
        if k != "scale" && k != "experiment" {
            cfg.set(k, v)?;
        }
    }
    for (k, v) in args.overrides() {
        cfg.set(k, v)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(kind: ExperimentKind, args: &Common) -> Result<(), Error> {
    let cfg = resolve(kind, args)?;
    let format: OutputFormat = args.format.parse()?;
    let ext = match format {
        OutputFormat::Csv => "csv",
        OutputFormat::Json => "json",
    };
    let out = args.out.clone().unwrap_or_else(|| PathBuf::from(format!("{kind}.{ext}")));
    let written = if kind == ExperimentKind::Diagnose {
        let d = run_diagnosis(&cfg)?;
        eprintln!(
            "pivots: {} accepted of {} attempts; KS adjusted {:.4}, unadjusted {:.4}",
            d.adjusted.accepted,
            d.adjusted.attempts,
            d.ks_adjusted(),
            d.ks_unadjusted()
        );
        emit_diagnosis(&d, cfg.seed, format, &out)?
    } else {
        let output = run_experiment(&cfg)?;
        eprintln!(
            "{} replicates from {} datasets ({} with nothing selected, {} failed)",
            cfg.replicates.min(output.attempts - output.empty - output.failures),
            output.attempts,
            output.empty,
            output.failures
        );
        if let Some(msg) = &output.first_failure {
            eprintln!("first failure: {msg}");
        }
        for r in &output.results {
            eprintln!("{:<18} coverage {:.3}  mean length {:.4}", r.method.as_str(), r.coverage, r.mean_length);
        }
        emit(&output, format, &out)?
    };
    for path in &written {
        eprintln!("wrote {}", display(path));
    }
    Ok(())
}

fn display(path: &Path) -> String {
    path.display().to_string()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, args) = match &cli.experiment {
        Experiment::Dtl(a) => (ExperimentKind::Dtl, a),
        Experiment::Lasso(a) => (ExperimentKind::Lasso, a),
        Experiment::Bh(a) => (ExperimentKind::Bh, a),
        Experiment::Repeated(a) => (ExperimentKind::Repeated, a),
        Experiment::Diagnose(a) => (ExperimentKind::Diagnose, a),
    };
    match run(kind, args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ Error::Config(_)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(3)
        }
    }
}
