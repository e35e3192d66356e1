//! The model backend protocol.
//!
//! A backend is an executable with four entry points:
//!
//! ```text
//! <backend> --capabilities
//! <backend> embed    --corpus <jsonl> --model <id> --out <ctem>
//! <backend> attn     --corpus <jsonl> --model <id> --out <beta-jsonl>
//! <backend> finetune --corpus <jsonl> --labels <jsonl> --model <id>
//!                    --epochs E --lr R --batch B --out-model <dir>
//! ```
//!
//! `embed` also writes the tokenization to [`tokens_path`]`(out)`. The
//! directory written by `finetune` is itself a valid `--model` argument.

use std::path::{Path, PathBuf};
use std::process::Command;

use serde::{Deserialize, Serialize};

use super::fixture::FixtureBackend;
use super::EnhanceError;
use crate::corpus::{attach_tokens, load_corpus};
use crate::dimred::EmbeddingMatrix;
use crate::topics::read_beta_profiles;

pub const PROTOCOL_VERSION: u32 = 1;
/// Environment variable naming the backend executable.
pub const BACKEND_ENV: &str = "CLUSTOP_BACKEND";
/// Executable name that selects the in-process fixture backend.
pub const FIXTURE_BACKEND: &str = "builtin:fixture";

const REQUIRED_OPS: [&str; 3] = ["embed", "attn", "finetune"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Capabilities {
    pub protocol: u32,
    pub ops: Vec<String>,
}

impl Capabilities {
    pub fn check(&self) -> Result<(), EnhanceError> {
        if self.protocol != PROTOCOL_VERSION {
            return Err(EnhanceError::Protocol(format!(
                "protocol {} unsupported (expected {PROTOCOL_VERSION})",
                self.protocol
            )));
        }
        for op in REQUIRED_OPS {
            if !self.ops.iter().any(|o| o == op) {
                return Err(EnhanceError::Protocol(format!("backend lacks `{op}`")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FinetuneParams {
    pub epochs: u32,
    pub lr: f64,
    pub batch: usize,
}

impl Default for FinetuneParams {
    fn default() -> Self {
        FinetuneParams {
            epochs: 20,
            lr: 2e-5,
            batch: 16,
        }
    }
}

/// Where the backend lives and how to drive it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendSpec {
    pub executable: PathBuf,
    pub model: String,
    pub finetune: FinetuneParams,
    /// Artifacts, cache and the backend lock live here.
    pub workdir: PathBuf,
}

impl BackendSpec {
    pub fn new(executable: impl Into<PathBuf>, model: impl Into<String>, workdir: impl Into<PathBuf>) -> Self {
        BackendSpec {
            executable: executable.into(),
            model: model.into(),
            finetune: FinetuneParams::default(),
            workdir: workdir.into(),
        }
    }

    /// `explicit` if given, else the executable named by `CLUSTOP_BACKEND`.
    pub fn resolve_executable(explicit: Option<PathBuf>) -> Option<PathBuf> {
        explicit.or_else(|| std::env::var_os(BACKEND_ENV).map(PathBuf::from))
    }

    pub fn is_fixture(&self) -> bool {
        self.executable.as_os_str() == FIXTURE_BACKEND
    }

    pub fn connect(&self) -> Box<dyn Backend> {
        if self.is_fixture() {
            Box::new(FixtureBackend)
        } else {
            Box::new(SubprocessBackend::new(&self.executable, &self.workdir))
        }
    }
}

/// Side file holding the tokenization written by `embed`.
pub fn tokens_path(out: &Path) -> PathBuf {
    out.with_extension("tokens.jsonl")
}

pub trait Backend {
    fn capabilities(&self) -> Result<Capabilities, EnhanceError>;
    fn embed(&self, corpus: &Path, model: &str, out: &Path) -> Result<(), EnhanceError>;
    fn attn(&self, corpus: &Path, model: &str, out: &Path) -> Result<(), EnhanceError>;
    fn finetune(
        &self,
        corpus: &Path,
        labels: &Path,
        model: &str,
        params: &FinetuneParams,
        out_model: &Path,
    ) -> Result<(), EnhanceError>;
}

/// Drives an external executable.
#[derive(Debug, Clone)]
pub struct SubprocessBackend {
    executable: PathBuf,
    workdir: PathBuf,
}

impl SubprocessBackend {
    pub fn new(executable: &Path, workdir: &Path) -> Self {
        SubprocessBackend {
            executable: executable.to_path_buf(),
            workdir: workdir.to_path_buf(),
        }
    }

    fn run(&self, op: &str, args: &[String]) -> Result<String, EnhanceError> {
        log::debug!("backend {} {op} {}", self.executable.display(), args.join(" "));
        let mut cmd = Command::new(&self.executable);
        cmd.arg(op).args(args);
        if self.workdir.is_dir() {
            cmd.current_dir(&self.workdir);
        }
        let output = cmd.output().map_err(|source| EnhanceError::Spawn {
            executable: self.executable.clone(),
            source,
        })?;
        if !output.status.success() {
            let stderr = String::from_utf8_lossy(&output.stderr);
            let tail: String = {
                let chars: Vec<char> = stderr.trim().chars().collect();
                chars[chars.len().saturating_sub(2000)..].iter().collect()
            };
            return Err(EnhanceError::Backend {
                op: op.trim_start_matches('-').to_string(),
                status: output.status.to_string(),
                stderr: tail,
            });
        }
        Ok(String::from_utf8_lossy(&output.stdout).into_owned())
    }
}

fn abs(p: &Path) -> String {
    std::path::absolute(p)
        .unwrap_or_else(|_| p.to_path_buf())
        .display()
        .to_string()
}

/// A model id that names an existing directory is passed as an absolute path.
fn model_arg(model: &str) -> String {
    let p = Path::new(model);
    if p.exists() {
        abs(p)
    } else {
        model.to_string()
    }
}

impl Backend for SubprocessBackend {
    fn capabilities(&self) -> Result<Capabilities, EnhanceError> {
        let out = self.run("--capabilities", &[])?;
        serde_json::from_str(out.trim())
            .map_err(|e| EnhanceError::Protocol(format!("bad capabilities reply `{}`: {e}", out.trim())))
    }

    fn embed(&self, corpus: &Path, model: &str, out: &Path) -> Result<(), EnhanceError> {
        let args = [
            "--corpus".into(),
            abs(corpus),
            "--model".into(),
            model_arg(model),
            "--out".into(),
            abs(out),
        ];
        self.run("embed", &args).map(drop)
    }

    fn attn(&self, corpus: &Path, model: &str, out: &Path) -> Result<(), EnhanceError> {
        let args = [
            "--corpus".into(),
            abs(corpus),
            "--model".into(),
            model_arg(model),
            "--out".into(),
            abs(out),
        ];
        self.run("attn", &args).map(drop)
    }

    fn finetune(
        &self,
        corpus: &Path,
        labels: &Path,
        model: &str,
        params: &FinetuneParams,
        out_model: &Path,
    ) -> Result<(), EnhanceError> {
        let args = [
            "--corpus".into(),
            abs(corpus),
            "--labels".into(),
            abs(labels),
            "--model".into(),
            model_arg(model),
            "--epochs".into(),
            params.epochs.to_string(),
            "--lr".into(),
            params.lr.to_string(),
            "--batch".into(),
            params.batch.to_string(),
            "--out-model".into(),
            abs(out_model),
        ];
        self.run("finetune", &args).map(drop)
    }
}

/// Outcome of [`check_backend`]: one entry per protocol check.
#[derive(Debug, Clone, Default, Serialize)]
pub struct CheckReport {
    pub checks: Vec<(String, Result<String, String>)>,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        !self.checks.is_empty() && self.checks.iter().all(|c| c.1.is_ok())
    }

    fn record<T>(&mut self, name: &str, r: Result<T, EnhanceError>, ok: impl FnOnce(&T) -> String) -> Option<T> {
        match r {
            Ok(v) => {
                self.checks.push((name.to_string(), Ok(ok(&v))));
                Some(v)
            }
            Err(e) => {
                self.checks.push((name.to_string(), Err(e.to_string())));
                None
            }
        }
    }
}

impl std::fmt::Display for CheckReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for (name, r) in &self.checks {
            match r {
                Ok(msg) => writeln!(f, "PASS {name}: {msg}")?,
                Err(msg) => writeln!(f, "FAIL {name}: {msg}")?,
            }
        }
        Ok(())
    }
}

/// Exercises every protocol operation on `corpus` inside `scratch` and
/// validates each output against the file schemas. Stops at the first
/// failure that later checks depend on.
pub fn check_backend(backend: &dyn Backend, corpus: &Path, model: &str, scratch: &Path) -> CheckReport {
    let mut report = CheckReport::default();
    let caps = backend.capabilities().and_then(|c| c.check().map(|_| c));
    if report
        .record("handshake", caps, |c| format!("protocol {} ops {:?}", c.protocol, c.ops))
        .is_none()
    {
        return report;
    }
    let Some(docs) = report.record("corpus", load_corpus(corpus).map_err(Into::into), |c| {
        format!("{} documents", c.len())
    }) else {
        return report;
    };
    if let Err(e) = std::fs::create_dir_all(scratch) {
        report.record::<()>("scratch", Err(EnhanceError::io(scratch, e)), |_| String::new());
        return report;
    }

    let embed_out = scratch.join("check.ctem");
    let embedded = backend.embed(corpus, model, &embed_out).and_then(|_| {
        let m = EmbeddingMatrix::read_ctem(&embed_out)?;
        if m.n() != docs.len() {
            return Err(EnhanceError::RowCount {
                stage: "embed".into(),
                got: m.n(),
                expected: docs.len(),
            });
        }
        Ok(m)
    });
    let Some(matrix) = report.record("embed", embedded, |m| format!("{} x {} CTEM", m.n(), m.d())) else {
        return report;
    };
    let Some(tokenized) = report.record(
        "tokens",
        attach_tokens(&docs, &tokens_path(&embed_out)).map_err(Into::into),
        |c| format!("{} tokens", c.documents.iter().map(|d| d.tokens.len()).sum::<usize>()),
    ) else {
        return report;
    };

    let attn_out = scratch.join("check.beta.jsonl");
    let profiles = backend.attn(corpus, model, &attn_out).and_then(|_| {
        let profiles = read_beta_profiles(&attn_out)?;
        if profiles.len() != docs.len() {
            return Err(EnhanceError::RowCount {
                stage: "attn".into(),
                got: profiles.len(),
                expected: docs.len(),
            });
        }
        let layers = profiles.first().map_or(0, |p| p.layers());
        for (p, d) in profiles.iter().zip(&tokenized.documents) {
            if p.layers() != layers || layers == 0 {
                return Err(EnhanceError::Protocol(format!(
                    "profile `{}` has {} layers, expected {layers}",
                    p.id,
                    p.layers()
                )));
            }
            p.clone().align_with(d)?;
        }
        Ok((profiles.len(), layers))
    });
    report.record("attn", profiles, |(n, l)| format!("{n} profiles x {l} layers"));

    let labels = scratch.join("check.labels.jsonl");
    let out_model = scratch.join("check-model");
    let tuned = (|| {
        if docs.len() < 2 {
            return Err(EnhanceError::Protocol("finetune check needs 2 documents".into()));
        }
        let mut text = String::new();
        for (i, id) in docs.ids().enumerate() {
            text.push_str(&serde_json::json!({"id": id, "label": i % 2}).to_string());
            text.push('\n');
        }
        std::fs::write(&labels, text).map_err(|e| EnhanceError::io(&labels, e))?;
        let params = FinetuneParams {
            epochs: 1,
            ..FinetuneParams::default()
        };
        backend.finetune(corpus, &labels, model, &params, &out_model)?;
        let reembed = scratch.join("check-tuned.ctem");
        let tuned_model = out_model.display().to_string();
        backend.embed(corpus, &tuned_model, &reembed)?;
        let m = EmbeddingMatrix::read_ctem(&reembed)?;
        if m.n() != matrix.n() || m.d() != matrix.d() {
            return Err(EnhanceError::Protocol(format!(
                "fine-tuned model embeds {} x {}, base model {} x {}",
                m.n(),
                m.d(),
                matrix.n(),
                matrix.d()
            )));
        }
        Ok(())
    })();
    report.record("finetune", tuned, |_| "fine-tuned model reloads".to_string());
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn capability_validation() {
        let ok = Capabilities {
            protocol: 1,
            ops: REQUIRED_OPS.iter().map(|s| s.to_string()).collect(),
        };
        assert!(ok.check().is_ok());
        let parsed: Capabilities =
            serde_json::from_str(r#"{"protocol":1,"ops":["embed","attn","finetune"]}"#).unwrap();
        assert_eq!(parsed, ok);
        assert!(Capabilities { protocol: 2, ..ok.clone() }.check().is_err());
        assert!(Capabilities {
            ops: vec!["embed".into()],
            ..ok
        }
        .check()
        .is_err());
    }

    #[test]
    fn tokens_beside_output() {
        assert_eq!(tokens_path(Path::new("/a/emb.ctem")), PathBuf::from("/a/emb.tokens.jsonl"));
    }

    #[test]
    fn missing_executable_is_a_spawn_error() {
        let b = SubprocessBackend::new(Path::new("/nonexistent/backend"), Path::new("."));
        assert!(matches!(b.capabilities(), Err(EnhanceError::Spawn { .. })));
    }

    #[test]
    fn fixture_passes_backend_check() {
        let dir = tempfile::tempdir().unwrap();
        let planted = crate::enhance::planted_corpus(&crate::enhance::PlantedSpec {
            classes: 2,
            docs_per_class: 5,
            ..Default::default()
        })
        .unwrap();
        let path = dir.path().join("c.jsonl");
        planted.corpus.save(&path).unwrap();
        let report = check_backend(&FixtureBackend, &path, &planted.model_id(), &dir.path().join("s"));
        assert!(report.passed(), "{report}");
        assert_eq!(report.checks.len(), 6);
    }
}
