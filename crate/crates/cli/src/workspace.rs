//! Output-directory layout, stage wiring, and run manifests.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::config::RunConfig;

/// A stage failure, printed as `D4M_ERROR <stage>: <message>`.
#[derive(Debug)]
pub struct StageError {
    pub stage: &'static str,
    pub message: String,
}

impl StageError {
    pub fn new(stage: &'static str, message: impl Into<String>) -> Self {
        StageError { stage, message: message.into() }
    }
}

impl std::fmt::Display for StageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "D4M_ERROR {}: {}", self.stage, self.message)
    }
}

impl std::error::Error for StageError {}

pub type StageResult<T> = Result<T, StageError>;

/// File layout inside one output directory.
pub struct Workspace {
    pub out_dir: PathBuf,
}

impl Workspace {
    pub fn new(out_dir: impl Into<PathBuf>) -> Self {
        Workspace { out_dir: out_dir.into() }
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    pub fn train_data(&self) -> PathBuf {
        self.path("shapes_train.d4md")
    }

    pub fn test_data(&self) -> PathBuf {
        self.path("shapes_test.d4md")
    }

    pub fn ae_checkpoint(&self) -> PathBuf {
        self.path("ae.d4mw")
    }

    pub fn diff_checkpoint(&self) -> PathBuf {
        self.path("diff.d4mw")
    }

    pub fn teacher_checkpoint(&self) -> PathBuf {
        self.path("teacher.d4mw")
    }

    pub fn protos_checkpoint(&self) -> PathBuf {
        self.path("protos.d4mw")
    }

    pub fn student_checkpoint(&self) -> PathBuf {
        self.path("student.d4mw")
    }

    pub fn distilled_data(&self) -> PathBuf {
        self.path("distilled.d4md")
    }

    pub fn provenance(&self) -> PathBuf {
        self.path("distilled_provenance.csv")
    }

    pub fn dumps_dir(&self) -> PathBuf {
        self.path("dumps")
    }

    pub fn metrics(&self) -> PathBuf {
        self.path("metrics.csv")
    }

    pub fn report(&self) -> PathBuf {
        self.path("report.txt")
    }

    pub fn loss_csv(&self, stage: &str) -> PathBuf {
        self.path(&format!("{stage}_loss.csv"))
    }

    pub fn ensure_out_dir(&self, stage: &'static str) -> StageResult<()> {
        std::fs::create_dir_all(&self.out_dir)
            .map_err(|e| StageError::new(stage, format!("cannot create {}: {e}", self.out_dir.display())))
    }

    /// Assert an input file exists, otherwise name the subcommand that
    /// produces it.
    pub fn require(&self, stage: &'static str, path: &Path, producer: &str) -> StageResult<()> {
        if path.exists() {
            Ok(())
        } else {
            Err(StageError::new(
                stage,
                format!("missing {}: run {} first", path.display(), producer),
            ))
        }
    }

    /// Write the resolved config echo and the per-stage manifest (resolved
    /// config plus sha256 digests of every input file consumed).
    pub fn write_manifest(
        &self,
        stage: &'static str,
        cfg: &RunConfig,
        inputs: &[&Path],
    ) -> StageResult<()> {
        let echo = cfg.echo();
        write_file(stage, &self.path("config.resolved.cfg"), echo.as_bytes())?;

        let mut manifest = format!("stage = {stage}\n");
        for path in inputs {
            let bytes = std::fs::read(path)
                .map_err(|e| StageError::new(stage, format!("cannot read input {}: {e}", path.display())))?;
            let digest = Sha256::digest(&bytes);
            let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            let mut hex = String::with_capacity(64);
            for b in digest {
                let _ = write!(hex, "{b:02x}");
            }
            let _ = writeln!(manifest, "input {name} sha256 {hex}");
        }
        manifest.push_str("config:\n");
        manifest.push_str(&echo);
        write_file(stage, &self.path(&format!("manifest.{stage}.txt")), manifest.as_bytes())
    }
}

pub fn write_file(stage: &'static str, path: &Path, bytes: &[u8]) -> StageResult<()> {
    std::fs::write(path, bytes)
        .map_err(|e| StageError::new(stage, format!("cannot write {}: {e}", path.display())))
}

/// Two-column CSV for loss histories.
pub fn history_csv(column: &str, history: &[f64]) -> String {
    let mut out = format!("{column},loss\n");
    for (i, v) in history.iter().enumerate() {
        let _ = writeln!(out, "{i},{v}");
    }
    out
}
