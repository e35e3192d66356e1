//! Command-line front end for the clustering and topic pipeline.

pub mod check;
pub mod config;
pub mod eval;
pub mod labels;
pub mod manifest;
pub mod plot;
pub mod run;
pub mod sweep;

use std::io::Write;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use clustop_core::enhance::{planted_corpus, PlantedSpec};

#[derive(Debug, Parser)]
#[command(name = "clustop", version, about = "Cluster documents and extract topics with an enhanced language model")]
pub struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Enhance, reduce, cluster, extract topics, score and plot.
    Run(run::RunArgs),
    /// Grid search over n_neighbors, min_cluster_size and eps.
    Sweep(sweep::SweepArgs),
    /// Score an assignment against labels and its embedding.
    Eval(eval::EvalArgs),
    /// Draw a 2-D embedding coloured by cluster as SVG.
    Plot(plot::PlotArgs),
    /// Check that a backend executable speaks the protocol.
    BackendCheck(check::CheckArgs),
    /// Write a synthetic planted-marker corpus for the fixture backend.
    Planted(PlantedArgs),
}

#[derive(Debug, Clone, Args)]
pub struct PlantedArgs {
    #[arg(long, default_value_t = 3)]
    pub classes: usize,
    #[arg(long, default_value_t = 40)]
    pub docs_per_class: usize,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// Output directory for corpus.jsonl and labels.jsonl.
    #[arg(long)]
    pub out: PathBuf,
}

/// Runs one command, printing its report to `out`; returns the process exit code.
pub fn execute(cli: Cli, out: &mut dyn Write) -> Result<i32> {
    match cli.command {
        Command::Run(args) => {
            let cfg = args.resolve()?;
            let r = run::cmd_run(&cfg)?;
            writeln!(out, "{}", run::summary(&r))?;
            writeln!(out, "artifacts in {}", cfg.out.display())?;
        }
        Command::Sweep(args) => {
            let (cfg, grid) = args.resolve()?;
            let r = sweep::cmd_sweep(&cfg, &grid)?;
            let w = r.winner();
            writeln!(
                out,
                "{} combinations; best n_neighbors {} min_cluster_size {} eps {}: k {} noise {} objective {:.6}",
                r.rows.len(),
                w.n_neighbors.map_or("-".into(), |v| v.to_string()),
                w.min_cluster_size.map_or("-".into(), |v| v.to_string()),
                w.eps.map_or("-".into(), |v| v.to_string()),
                w.k,
                w.noise,
                w.objective
            )?;
            writeln!(out, "table in {}", r.csv.display())?;
        }
        Command::Eval(args) => {
            let report = eval::cmd_eval(&args.assignment, args.labels.as_deref(), args.embedding.as_deref())?;
            if let Some(path) = &args.out {
                std::fs::write(path, serde_json::to_string_pretty(&report)? + "\n")
                    .with_context(|| format!("writing {}", path.display()))?;
            }
            writeln!(out, "{report}")?;
        }
        Command::Plot(args) => {
            plot::cmd_plot(&args.embedding, &args.assignment, args.labels.as_deref(), &args.out)?;
            writeln!(out, "wrote {}", args.out.display())?;
        }
        Command::BackendCheck(args) => {
            let report = check::cmd_check(&args)?;
            write!(out, "{report}")?;
            if !report.passed() {
                return Ok(1);
            }
        }
        Command::Planted(args) => {
            let p = planted_corpus(&PlantedSpec {
                classes: args.classes,
                docs_per_class: args.docs_per_class,
                seed: args.seed,
                ..Default::default()
            })?;
            std::fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
            p.corpus.save(&args.out.join("corpus.jsonl"))?;
            p.write_truth(&args.out.join("labels.jsonl"))?;
            writeln!(out, "{}", p.model_id())?;
        }
    }
    Ok(0)
}
