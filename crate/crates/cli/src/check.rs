//! `backend-check`: protocol conformance of a backend executable.

use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;

use clustop_core::corpus::load_corpus;
use clustop_core::enhance::{check_backend, planted_corpus, BackendSpec, CheckReport, PlantedSpec};
use clustop_core::{Corpus, Document};

/// Twenty short English documents used when no corpus is given.
pub const SAMPLE_TEXTS: [&str; 20] = [
    "The central bank raised interest rates to slow inflation.",
    "Stock markets fell sharply after the earnings report.",
    "The startup closed a new funding round with several investors.",
    "Oil prices climbed as supply concerns grew.",
    "The home team won the championship in overtime.",
    "A young striker scored twice in the second half.",
    "The marathon route passes through the old town.",
    "Tennis fans waited hours in the rain for the final.",
    "Researchers sequenced the genome of a rare orchid.",
    "A new telescope captured images of a distant galaxy.",
    "The vaccine trial reported strong results in older adults.",
    "Engineers tested a battery that charges in minutes.",
    "The city council approved a budget for road repairs.",
    "Voters lined up early at polling stations.",
    "The minister announced reforms to the pension system.",
    "Parliament debated a bill on data privacy.",
    "The film festival opened with a silent comedy.",
    "A jazz quartet played to a packed hall downtown.",
    "The novel follows three sisters across four decades.",
    "Museum visitors crowded around the restored painting.",
];

pub fn sample_corpus() -> Result<Corpus> {
    let docs = SAMPLE_TEXTS
        .iter()
        .enumerate()
        .map(|(i, t)| Document::new(format!("sample{i:02}"), t.to_string(), None))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Corpus::from_documents(docs, "sample")?)
}

#[derive(Debug, Clone, Args)]
pub struct CheckArgs {
    /// Backend executable; defaults to $CLUSTOP_BACKEND.
    #[arg(long)]
    pub backend: Option<PathBuf>,
    /// Model id; the fixture backend defaults to its planted model.
    #[arg(long)]
    pub model: Option<String>,
    /// Corpus JSONL; defaults to a built-in 20-document English corpus.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Directory for the backend's outputs; defaults to a fresh temporary directory.
    #[arg(long)]
    pub scratch: Option<PathBuf>,
}

pub fn cmd_check(args: &CheckArgs) -> Result<CheckReport> {
    let exe = BackendSpec::resolve_executable(args.backend.clone())
        .context("no backend executable (--backend or CLUSTOP_BACKEND)")?;
    let (scratch, temporary) = match &args.scratch {
        Some(s) => (s.clone(), false),
        None => (
            std::env::temp_dir().join(format!("clustop-check-{}", std::process::id())),
            true,
        ),
    };
    std::fs::create_dir_all(&scratch).with_context(|| format!("creating {}", scratch.display()))?;
    let spec = BackendSpec::new(&exe, "", &scratch);
    let model = match (&args.model, spec.is_fixture()) {
        (Some(m), _) => m.clone(),
        (None, true) => planted_corpus(&PlantedSpec::default())?.model_id(),
        (None, false) => anyhow::bail!("--model is required for external backends"),
    };
    let corpus_path = match &args.corpus {
        Some(p) => {
            load_corpus(p)?;
            p.clone()
        }
        None => {
            let p = scratch.join("sample.jsonl");
            sample_corpus()?.save(&p)?;
            p
        }
    };
    let report = check_backend(spec.connect().as_ref(), &corpus_path, &model, &scratch);
    if temporary {
        let _ = std::fs::remove_dir_all(&scratch);
    }
    Ok(report)
}
