//! Run manifests: what a command read and wrote, with content hashes.

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

pub const MANIFEST_DIR: &str = "manifests";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    /// Relative to the run directory when the file lives inside it.
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub args: Vec<String>,
    pub config_hash: String,
    pub seed: u64,
    pub started_unix: u64,
    pub finished_unix: u64,
    pub inputs: Vec<Artifact>,
    pub outputs: Vec<Artifact>,
}

pub fn now_unix() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn hash_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(sha256_hex(&bytes))
}

fn display_path(root: &Path, path: &Path) -> String {
    path.strip_prefix(root).unwrap_or(path).to_string_lossy().replace('\\', "/")
}

fn resolve(root: &Path, stored: &str) -> PathBuf {
    let p = Path::new(stored);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        root.join(p)
    }
}

pub struct ManifestBuilder {
    root: PathBuf,
    manifest: RunManifest,
}

impl ManifestBuilder {
    pub fn new(root: &Path, command: &str, config_hash: String, seed: u64) -> Self {
        Self {
            root: root.to_path_buf(),
            manifest: RunManifest {
                tool: env!("CARGO_PKG_NAME").to_string(),
                version: env!("CARGO_PKG_VERSION").to_string(),
                command: command.to_string(),
                args: std::env::args().skip(1).collect(),
                config_hash,
                seed,
                started_unix: now_unix(),
                finished_unix: 0,
                inputs: Vec::new(),
                outputs: Vec::new(),
            },
        }
    }

    pub fn input(&mut self, path: &Path) -> Result<()> {
        let sha256 = hash_file(path).with_context(|| format!("missing upstream artifact {}", path.display()))?;
        self.manifest.inputs.push(Artifact { path: display_path(&self.root, path), sha256 });
        Ok(())
    }

    pub fn output(&mut self, path: &Path) -> Result<()> {
        let sha256 = hash_file(path)?;
        self.manifest.outputs.push(Artifact { path: display_path(&self.root, path), sha256 });
        Ok(())
    }

    pub fn outputs<'a>(&mut self, paths: impl IntoIterator<Item = &'a PathBuf>) -> Result<()> {
        for p in paths {
            self.output(p)?;
        }
        Ok(())
    }

    /// Writes `manifests/<command>.json` under the run directory.
    pub fn finish(mut self) -> Result<PathBuf> {
        self.manifest.finished_unix = now_unix();
        self.manifest.inputs.sort_by(|a, b| a.path.cmp(&b.path));
        self.manifest.outputs.sort_by(|a, b| a.path.cmp(&b.path));
        let dir = self.root.join(MANIFEST_DIR);
        std::fs::create_dir_all(&dir)?;
        let path = dir.join(format!("{}.json", self.manifest.command));
        std::fs::write(&path, serde_json::to_string_pretty(&self.manifest)?)?;
        Ok(path)
    }
}

pub fn read_manifest(path: &Path) -> Result<RunManifest> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Checks that every output of every manifest under `root` exists and
/// matches its recorded hash. Returns the number of artifacts checked.
pub fn verify_run(root: &Path) -> Result<usize> {
    let dir = root.join(MANIFEST_DIR);
    let mut entries: Vec<PathBuf> = std::fs::read_dir(&dir)
        .with_context(|| format!("no manifests in {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    entries.sort();
    let mut checked = 0;
    for m in entries {
        let manifest = read_manifest(&m)?;
        for a in &manifest.outputs {
            let path = resolve(root, &a.path);
            if !path.exists() {
                bail!("{}: artifact {} is missing", m.display(), a.path);
            }
            if hash_file(&path)? != a.sha256 {
                bail!("{}: artifact {} does not match its recorded hash", m.display(), a.path);
            }
            checked += 1;
        }
    }
    Ok(checked)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sha256_of_empty_input() {
        assert_eq!(sha256_hex(b""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    }

    #[test]
    fn verify_detects_tampering() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("a.txt");
        std::fs::write(&out, "one").unwrap();
        let mut b = ManifestBuilder::new(dir.path(), "unit", "h".into(), 1);
        b.output(&out).unwrap();
        b.finish().unwrap();
        assert_eq!(verify_run(dir.path()).unwrap(), 1);
        std::fs::write(&out, "two").unwrap();
        assert!(verify_run(dir.path()).is_err());
    }
}
