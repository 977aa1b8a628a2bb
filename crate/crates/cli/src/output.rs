use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Serialize;

pub const RUN_META_FILE: &str = "run_meta.json";

/// Output directory; every path handed out is relative to it.
#[derive(Debug, Clone)]
pub struct OutputDir {
    root: PathBuf,
}

#[derive(Serialize)]
struct RunMeta<'a> {
    command: &'a str,
    argv: &'a [String],
    tool_version: &'static str,
    defaults_version: &'static str,
    prng: &'static str,
    jobs: usize,
    started_at: String,
}

impl OutputDir {
    pub fn create(root: &Path) -> anyhow::Result<Self> {
        fs::create_dir_all(root)
            .with_context(|| format!("creating output directory {}", root.display()))?;
        Ok(Self {
            root: root.to_path_buf(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn write_bytes(&self, name: &str, bytes: &[u8]) -> anyhow::Result<PathBuf> {
        let path = self.path(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
        }
        fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }

    pub fn write_text(&self, name: &str, text: &str) -> anyhow::Result<PathBuf> {
        self.write_bytes(name, text.as_bytes())
    }

    pub fn write_json<T: Serialize + ?Sized>(
        &self,
        name: &str,
        value: &T,
    ) -> anyhow::Result<PathBuf> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write_text(name, &text)
    }

    /// Buffers a CSV writer's output, then writes it in one go.
    pub fn write_with<E>(
        &self,
        name: &str,
        fill: impl FnOnce(&mut Vec<u8>) -> Result<(), E>,
    ) -> anyhow::Result<PathBuf>
    where
        E: std::error::Error + Send + Sync + 'static,
    {
        let mut buf = Vec::new();
        fill(&mut buf).with_context(|| format!("formatting {name}"))?;
        self.write_bytes(name, &buf)
    }

    /// The one file that holds a wall-clock timestamp.
    pub fn write_run_meta(
        &self,
        command: &str,
        argv: &[String],
        jobs: usize,
    ) -> anyhow::Result<()> {
        let meta = RunMeta {
            command,
            argv,
            tool_version: taskcut::VERSION,
            defaults_version: taskcut::defaults::DEFAULTS_VERSION,
            prng: taskcut::rng::PRNG_ALGORITHM,
            jobs,
            started_at: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
        };
        self.write_json(RUN_META_FILE, &meta)?;
        Ok(())
    }
}
