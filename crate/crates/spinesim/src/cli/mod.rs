//! Command-line surface: argument parsing, artifact writing, exit codes.
//! `run` returns 0 when every item passes, 2 when anything is inconclusive,
//! 1 on failure or error.

pub mod catalog;
pub mod config;
pub mod experiments;
pub mod report;
pub mod svg;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::error::Result;
use crate::stats::Verdict;
use config::{ExperimentConfig, OutputFormat, Overrides};
use report::Report;

#[derive(Debug, Parser)]
#[command(
    name = "spinesim",
    version,
    about = "Seeded Monte Carlo experiments on branching Markov processes and their \
             spine reweightings"
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run an experiment config and write its artifacts.
    Run {
        /// Path to a TOML experiment config.
        config: PathBuf,
        /// Override the config's replication seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the replicate count.
        #[arg(long)]
        replicates: Option<u64>,
        /// Override the output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads for the replicate fan-out (default: logical cores).
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Print the built-in experiment catalog.
    List,
    /// Parse and validate a config without running it.
    Validate {
        /// Path to a TOML experiment config.
        config: PathBuf,
    },
}

pub fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn execute(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::Run { config, seed, replicates, out, workers } => {
            run_config(&config, &Overrides { seed, replicates, out, workers })
        }
        Command::List => {
            print!("{}", catalog::render());
            Ok(0)
        }
        Command::Validate { config } => {
            let cfg = ExperimentConfig::from_path(&config)?;
            cfg.validate()?;
            println!(
                "ok: {} ({}, {} replicates, seed {})",
                cfg.name,
                cfg.experiment.kind.as_str(),
                cfg.experiment.replicates,
                cfg.experiment.seed
            );
            Ok(0)
        }
    }
}

fn verdict_label(v: Verdict) -> &'static str {
    match v {
        Verdict::Pass => "PASS",
        Verdict::Fail => "FAIL",
        Verdict::Inconclusive => "INCONCLUSIVE",
    }
}

fn run_config(path: &Path, overrides: &Overrides) -> Result<u8> {
    let mut cfg = ExperimentConfig::from_path(path)?;
    cfg.apply(overrides);
    let artifacts = experiments::run(&cfg)?;
    let report = Report {
        experiment: cfg.name.clone(),
        model: cfg.model.clone(),
        seed: cfg.experiment.seed,
        replicates: cfg.experiment.replicates,
        items: artifacts.items,
    };

    std::fs::create_dir_all(&cfg.output.dir)?;
    let file = |suffix: &str| cfg.output.dir.join(format!("{}.{suffix}", cfg.name));
    let enabled = |f: OutputFormat| cfg.output.formats.contains(&f);
    let mut written = Vec::new();

    if enabled(OutputFormat::Json) {
        let p = file("report.json");
        std::fs::write(&p, report.to_json()?)?;
        written.push(p);
        if let Some(eigen) = &artifacts.eigen {
            let mut json = serde_json::to_string_pretty(eigen)
                .map_err(|e| crate::error::Error::Parse(e.to_string()))?;
            json.push('\n');
            let p = file("eigen.json");
            std::fs::write(&p, json)?;
            written.push(p);
        }
    }
    if enabled(OutputFormat::Csv) {
        if !artifacts.traces.is_empty() {
            let p = file("traces.csv");
            std::fs::write(&p, report::traces_csv(&artifacts.traces))?;
            written.push(p);
        }
        if !artifacts.extinction.is_empty() {
            let p = file("extinction.csv");
            std::fs::write(&p, report::extinction_csv(&artifacts.extinction))?;
            written.push(p);
        }
    }
    if enabled(OutputFormat::Svg) {
        for plot in &artifacts.plots {
            let prefix = format!("{}: ", cfg.name);
            let title = plot.title.strip_prefix(&prefix).unwrap_or(&plot.title);
            let p = file(&format!("{}.svg", slug(title)));
            std::fs::write(&p, svg::render(plot))?;
            written.push(p);
        }
    }

    for item in &report.items {
        let mut line = format!(
            "[{}] {} estimate {:.6} (se {:.3e}",
            verdict_label(item.verdict),
            item.name,
            item.estimate,
            item.std_error
        );
        if let Some(target) = item.target {
            line.push_str(&format!(", target {target:.6}"));
        }
        if let Some(z) = item.z_score {
            line.push_str(&format!(", z {z:.2}"));
        }
        line.push(')');
        if item.verdict != Verdict::Pass {
            line.push_str(&format!(" — {}", item.notes));
        }
        println!("{line}");
    }
    let overall = report.overall();
    println!("{}: {}", cfg.name, verdict_label(overall));
    for p in &written {
        println!("wrote {}", p.display());
    }
    Ok(report::exit_code(overall))
}

/// Lowercased filename-safe slug of a plot title.
fn slug(title: &str) -> String {
    let mut out = String::with_capacity(title.len());
    let mut last_dash = true;
    for ch in title.chars() {
        if ch.is_ascii_alphanumeric() {
            out.push(ch.to_ascii_lowercase());
            last_dash = false;
        } else if !last_dash {
            out.push('-');
            last_dash = true;
        }
    }
    while out.ends_with('-') {
        out.pop();
    }
    out
}
