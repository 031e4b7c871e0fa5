//! Artifact files and the run manifest.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use bergsample::{Error, QuadratureRule, Result};

use crate::config::ResolvedConfig;

#[derive(Debug, Clone, Serialize)]
pub struct Artifact {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    /// Relative to the output directory.
    pub path: String,
}

/// Exactness and certification residual of a rule a basis was built on.
#[derive(Debug, Clone, Serialize)]
pub struct Certification {
    pub k: usize,
    pub exactness: usize,
    pub nodes: usize,
    pub certified_residual: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Timing {
    pub stage: String,
    pub seconds: f64,
}

/// Everything needed to reproduce a run. Timings vary between runs; every
/// other field, and every artifact byte, is a function of the config.
#[derive(Debug, Serialize)]
pub struct RunManifest<'a> {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'a str,
    pub config_hash: String,
    pub config: &'a ResolvedConfig,
    pub artifacts: &'a [Artifact],
    pub quadrature: &'a [Certification],
    pub timings: &'a [Timing],
}

pub fn manifest_name(command: &str) -> String {
    format!("{command}.manifest.json")
}

/// Writes files below one output directory and records them.
pub struct ArtifactWriter {
    dir: PathBuf,
    artifacts: Vec<Artifact>,
    certifications: Vec<Certification>,
    timings: Vec<Timing>,
}

impl ArtifactWriter {
    pub fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)
            .map_err(|e| Error::Config(format!("cannot create output directory {}: {e}", dir.display())))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            artifacts: Vec::new(),
            certifications: Vec::new(),
            timings: Vec::new(),
        })
    }

    pub fn certify(&mut self, k: usize, rule: &QuadratureRule) {
        self.certifications.push(Certification {
            k,
            exactness: rule.exactness,
            nodes: rule.len(),
            certified_residual: rule.certified_residual,
        });
    }

    pub fn time<T>(&mut self, stage: impl Into<String>, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        self.timings.push(Timing {
            stage: stage.into(),
            seconds: start.elapsed().as_secs_f64(),
        });
        out
    }

    fn open(&mut self, rel: &str, k: Option<usize>) -> Result<fs::File> {
        let path = self.dir.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        self.artifacts.push(Artifact {
            k,
            path: rel.to_string(),
        });
        Ok(fs::File::create(path)?)
    }

    pub fn csv<T: Serialize>(&mut self, rel: &str, k: Option<usize>, rows: &[T]) -> Result<()> {
        let mut w = csv::Writer::from_writer(self.open(rel, k)?);
        for row in rows {
            w.serialize(row).map_err(csv_error)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn json<T: Serialize + ?Sized>(&mut self, rel: &str, k: Option<usize>, value: &T) -> Result<()> {
        let mut f = self.open(rel, k)?;
        serde_json::to_writer_pretty(&mut f, value)?;
        writeln!(f)?;
        Ok(())
    }

    pub fn raw(&mut self, rel: &str, k: Option<usize>, write: impl FnOnce(&mut fs::File) -> Result<()>) -> Result<()> {
        let mut f = self.open(rel, k)?;
        write(&mut f)
    }

    pub fn finish(self, config: &ResolvedConfig) -> Result<PathBuf> {
        let manifest = RunManifest {
            tool: "bergsample",
            version: env!("CARGO_PKG_VERSION"),
            command: &config.command,
            config_hash: config.hash(),
            config,
            artifacts: &self.artifacts,
            quadrature: &self.certifications,
            timings: &self.timings,
        };
        let path = self.dir.join(manifest_name(&config.command));
        let mut f = fs::File::create(&path)?;
        serde_json::to_writer_pretty(&mut f, &manifest)?;
        writeln!(f)?;
        Ok(path)
    }
}

fn csv_error(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}
