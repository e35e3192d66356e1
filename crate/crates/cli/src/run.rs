//! `run`: enhance, reduce, cluster, extract topics, score and plot.

use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;

use clustop_core::cluster::{dbscan, hdbscan, kmeans, ClusterAssignment};
use clustop_core::corpus::load_corpus;
use clustop_core::dimred::{pca, umap};
use clustop_core::enhance::{run_enhancement, Provenance, Workspace};
use clustop_core::topics::{attention_topics, ctfidf_topics};
use clustop_core::{BetaProfile, Corpus, EmbeddingMatrix, ScoreReport, TopicReport};

use crate::config::{combine, to_config_text, Clusterer, GridArgs, Method, PipelineArgs, PipelineConfig, Reducer};
use crate::labels::read_aligned;
use crate::manifest::{Artifact, Manifest};
use crate::plot::render_svg;

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// Flat `key = value` configuration file; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
}

impl RunArgs {
    pub fn resolve(self) -> Result<PipelineConfig> {
        let (args, _) = combine(self.pipeline, GridArgs::default(), self.config.as_deref())?;
        args.resolve()
    }
}

/// Document representation feeding the final clustering.
#[derive(Debug, Clone)]
pub struct Representation {
    /// Corpus with the backend's tokens attached.
    pub corpus: Corpus,
    pub embeddings: EmbeddingMatrix,
    /// Empty when attention was not requested.
    pub profiles: Vec<BetaProfile>,
    pub provenance: Option<Provenance>,
}

/// Embeds the corpus with the enhanced model (or the original one when
/// enhancement is off), reusing cached stages under `<out>/work`.
pub fn representation(cfg: &PipelineConfig) -> Result<Representation> {
    let corpus = load_corpus(&cfg.corpus).context("stage `corpus` failed")?;
    let spec = cfg.backend_spec();
    if cfg.enhance {
        let e = run_enhancement(&corpus, &spec, &cfg.umap, &cfg.hdbscan)
            .context("stage `enhance` failed")?;
        return Ok(Representation {
            corpus: e.corpus,
            embeddings: e.embeddings,
            profiles: e.profiles,
            provenance: Some(e.provenance),
        });
    }
    let backend = spec.connect();
    let mut ws = Workspace::open(&spec.workdir, &corpus).context("stage `embed` failed")?;
    {
        let _lock = ws.lock()?;
        backend
            .capabilities()
            .and_then(|c| c.check())
            .context("stage `handshake` failed")?;
    }
    let (embeddings, tokenized, _) = ws
        .embed(backend.as_ref(), &spec.model, &spec.model)
        .context("stage `embed` failed")?;
    let profiles = if cfg.method == Method::Attention {
        ws.attn(backend.as_ref(), &spec.model, &spec.model, &tokenized)
            .context("stage `attn` failed")?
    } else {
        Vec::new()
    };
    Ok(Representation {
        corpus: tokenized,
        embeddings,
        profiles,
        provenance: None,
    })
}

pub fn reduce(cfg: &PipelineConfig, x: &EmbeddingMatrix) -> Result<EmbeddingMatrix> {
    let y = match cfg.reducer {
        Reducer::Umap => umap(x, &cfg.umap)?,
        Reducer::Pca => pca(x, cfg.umap.out_dims)?,
    };
    Ok(y)
}

pub fn cluster(cfg: &PipelineConfig, y: &EmbeddingMatrix) -> Result<ClusterAssignment> {
    let a = match cfg.clusterer {
        Clusterer::Kmeans => kmeans(y, cfg.k.expect("validated"), cfg.seed)?,
        Clusterer::Dbscan => dbscan(y, cfg.eps, cfg.dbscan_min_samples)?,
        Clusterer::Hdbscan => hdbscan(y, &cfg.hdbscan)?.0,
    };
    Ok(a)
}

pub fn topics(cfg: &PipelineConfig, rep: &Representation, a: &ClusterAssignment) -> Result<TopicReport> {
    let report = match cfg.method {
        Method::Attention => {
            attention_topics(&rep.corpus, &rep.profiles, a, cfg.top_k, cfg.layer)?.report
        }
        Method::Ctfidf => ctfidf_topics(&rep.corpus, a, cfg.top_k)?,
    };
    Ok(report)
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub manifest: Manifest,
    pub assignment: ClusterAssignment,
    pub topics: TopicReport,
    pub scores: ScoreReport,
    pub reduced: EmbeddingMatrix,
    pub representation: Representation,
}

pub fn cmd_run(cfg: &PipelineConfig) -> Result<RunOutput> {
    let out = &cfg.out;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let rep = representation(cfg)?;
    let ids: Vec<&str> = rep.corpus.ids().collect();
    let truth = cfg
        .labels
        .as_deref()
        .map(|p| read_aligned(p, &ids))
        .transpose()
        .context("stage `labels` failed")?;

    let reduced = reduce(cfg, &rep.embeddings).context("stage `reduce` failed")?;
    let reduced_path = out.join("reduced.ctem");
    reduced.write_ctem(&reduced_path)?;

    let assignment = cluster(cfg, &reduced).context("stage `cluster` failed")?;
    let assignment_path = out.join("assignment.jsonl");
    assignment.write(&assignment_path, &ids)?;

    let topic_report = topics(cfg, &rep, &assignment).context("stage `topics` failed")?;
    let topics_path = out.join("topics.json");
    topic_report.write(&topics_path)?;

    let mut scores = ScoreReport {
        assignment_source: Some(assignment_path.display().to_string()),
        embedding_source: Some(reduced_path.display().to_string()),
        labels_source: cfg.labels.as_ref().map(|p| p.display().to_string()),
        ..Default::default()
    }
    .with_internal(&reduced, &assignment.labels);
    if let Some(t) = &truth {
        scores = scores.with_external(&assignment.labels, t)?;
    }
    let scores_path = out.join("scores.json");
    std::fs::write(&scores_path, serde_json::to_string_pretty(&scores)? + "\n")?;

    let plane = if reduced.d() == 2 { reduced.clone() } else { pca(&reduced, 2)? };
    let title = format!("{} clusters, {} noise", assignment.k, assignment.noise_count());
    let plot_path = out.join("clusters.svg");
    std::fs::write(&plot_path, render_svg(&plane, &assignment.labels, truth.as_deref(), &title)?)?;

    let config_path = out.join("config.toml");
    std::fs::write(&config_path, to_config_text(&cfg.args, None))?;
    let mut manifest = Manifest::new("run", cfg.args.clone());
    manifest.artifacts = vec![
        Artifact::new("assignment", &assignment_path)?,
        Artifact::new("topics", &topics_path)?,
        Artifact::new("scores", &scores_path)?,
        Artifact::new("plot", &plot_path)?,
    ];
    manifest.intermediates = vec![
        Artifact::new("reduced", &reduced_path)?,
        Artifact::new("config", &config_path)?,
    ];
    if rep.provenance.is_some() {
        manifest.provenance = Some(cfg.backend_spec().workdir.join("provenance.json"));
    }
    manifest.write(&out.join("manifest.json"))?;
    Ok(RunOutput {
        manifest,
        assignment,
        topics: topic_report,
        scores,
        reduced,
        representation: rep,
    })
}

/// Short human-readable summary of a run.
pub fn summary(r: &RunOutput) -> String {
    let mut s = format!(
        "{} documents, {} clusters, {} noise\n",
        r.assignment.len(),
        r.assignment.k,
        r.assignment.noise_count()
    );
    for c in &r.topics.clusters {
        let words: Vec<&str> = c.words.iter().take(5).map(|w| w.0.as_str()).collect();
        s.push_str(&format!("cluster {}: {}\n", c.label, words.join(" ")));
    }
    s.push_str(&r.scores.to_string());
    s
}
