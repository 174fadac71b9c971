//! The output directory. Every write goes through [`Out`], which only
//! accepts plain relative paths.

use std::io::Write as _;
use std::path::{Component, Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;
use tactsort::formats::ArtifactHeader;

pub struct Out {
    root: PathBuf,
}

impl Out {
    pub fn create(root: &Path) -> Result<Self> {
        std::fs::create_dir_all(root).with_context(|| format!("creating output directory {}", root.display()))?;
        Ok(Self { root: root.to_path_buf() })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Resolve `rel` under the root, creating its parent directories.
    pub fn path(&self, rel: &str) -> Result<PathBuf> {
        let p = Path::new(rel);
        if p.components().any(|c| !matches!(c, Component::Normal(_))) {
            bail!("refusing to write outside the output directory: {rel}");
        }
        let full = self.root.join(p);
        if let Some(parent) = full.parent() {
            std::fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
        }
        Ok(full)
    }

    pub fn write_bytes(&self, rel: &str, bytes: &[u8]) -> Result<PathBuf> {
        let p = self.path(rel)?;
        std::fs::write(&p, bytes).with_context(|| format!("writing {}", p.display()))?;
        Ok(p)
    }

    pub fn write_json<T: Serialize>(&self, rel: &str, value: &T) -> Result<PathBuf> {
        let p = self.path(rel)?;
        tactsort::formats::write_json(&p, value)?;
        Ok(p)
    }

    /// Header line, then one compact JSON value per line.
    pub fn write_jsonl<T: Serialize>(&self, rel: &str, header: &ArtifactHeader, rows: &[T]) -> Result<PathBuf> {
        let mut buf = Vec::new();
        serde_json::to_writer(&mut buf, &HeaderLine { header })?;
        buf.push(b'\n');
        for r in rows {
            serde_json::to_writer(&mut buf, r)?;
            buf.push(b'\n');
        }
        self.write_bytes(rel, &buf)
    }

    /// Text with the header as leading `#` comment lines.
    pub fn write_text(&self, rel: &str, header: &ArtifactHeader, body: &str) -> Result<PathBuf> {
        let mut buf = Vec::new();
        writeln!(buf, "# kind: {}", header.kind)?;
        writeln!(buf, "# config_hash: {}", header.config_hash)?;
        writeln!(buf, "# seed: {}", header.seed)?;
        writeln!(buf, "# tool_version: {}", header.tool_version)?;
        buf.extend_from_slice(body.as_bytes());
        if !body.ends_with('\n') {
            buf.push(b'\n');
        }
        self.write_bytes(rel, &buf)
    }
}

#[derive(Serialize)]
pub struct HeaderLine<'a> {
    pub header: &'a ArtifactHeader,
}

/// An artifact body with its header in front.
#[derive(Serialize)]
pub struct Stamped<'a, T: Serialize> {
    pub header: &'a ArtifactHeader,
    #[serde(flatten)]
    pub body: &'a T,
}
