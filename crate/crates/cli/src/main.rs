use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use masc_core::config::{parse_year_list, Variant};
use masc_core::pipeline::{audit_with_exclusions, emit_plot_data, run_pipeline, simulate_command, RunReport, RunRequest, Stage};
use masc_core::{Error, Metric, Result, StudyConfig};

#[derive(Parser)]
#[command(name = "masc", version, about = "Matching-augmented synthetic control study pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate an oracle panel with known effects.
    Simulate {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the study pipeline.
    Run {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        panel: PathBuf,
        #[arg(long)]
        covariates: PathBuf,
        /// CSV with columns year,price_usd_per_kg.
        #[arg(long)]
        price: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated subset of ingest,match,estimate,infer,heterogeneity.
        #[arg(long)]
        stages: Option<String>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        metric: Option<Metric>,
        #[arg(long)]
        no_audit: bool,
        /// Donor ids to drop, one per line.
        #[arg(long)]
        exclude_file: Option<PathBuf>,
        /// e.g. 2014,2016,2017
        #[arg(long)]
        placebo_years: Option<String>,
        /// Variants separated by `;`, e.g. `k=1;audit=off`.
        #[arg(long)]
        robustness: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Write figure-ready CSV from a run report.
    Plot {
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        figure: String,
        #[arg(long)]
        out: PathBuf,
    },
}

fn build_config(cmd: &Command) -> Result<StudyConfig> {
    let Command::Run { config, k, metric, no_audit, exclude_file, placebo_years, robustness, seed, .. } = cmd else {
        unreachable!()
    };
    let mut c = match config {
        Some(p) => StudyConfig::parse(&fs::read_to_string(p)?)?,
        None => StudyConfig::default(),
    };
    if let Some(k) = k {
        c.k = *k;
    }
    if let Some(m) = metric {
        c.metric = *m;
    }
    if *no_audit {
        c.audit = None;
    }
    if let Some(p) = exclude_file {
        c.audit = Some(audit_with_exclusions(c.audit.take(), p)?);
    }
    if let Some(y) = placebo_years {
        c.placebo_years = parse_year_list(y)?;
    }
    if let Some(r) = robustness {
        c.robustness = Variant::parse_list(r)?;
    }
    if let Some(s) = seed {
        c.seed = *s;
    }
    c.validate()?;
    Ok(c)
}

fn execute(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Simulate { spec, seed, out } => {
            let truth = simulate_command(spec, *seed, out)?;
            println!("wrote {} treated units to {}", truth.treated.len(), out.display());
        }
        cmd @ Command::Run { panel, covariates, price, out, stages, .. } => {
            let config = build_config(cmd)?;
            let stages = stages.as_deref().map(Stage::parse_list).transpose()?;
            let report = run_pipeline(&RunRequest {
                config,
                panel: panel.clone(),
                covariates: covariates.clone(),
                price: price.clone(),
                out_dir: out.clone(),
                stages,
            })?;
            if let Some(p) = &report.pooled {
                for (y, e) in p.series.years.iter().zip(&p.series.point) {
                    println!("{y}\t{e:+.4}");
                }
            }
            println!("report written to {}", out.join("report.json").display());
        }
        Command::Plot { report, figure, out } => {
            let report = RunReport::from_json(&fs::read(report)?)?;
            let data = emit_plot_data(&report, figure)?;
            fs::write(out, &data.csv)?;
            if let Some(meta) = data.meta {
                let mut name = out.as_os_str().to_owned();
                name.push(".meta.json");
                fs::write(PathBuf::from(name), format!("{meta}\n"))?;
            }
        }
    }
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Stage { .. } => 3,
        e if e.is_validation() => 2,
        Error::Io(_) | Error::Json(_) => 2,
        _ => 3,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
