//! Run manifests: every command records the exact argv it ran, its seeds,
//! and SHA-256 digests of all inputs and outputs. `rerun` re-executes the
//! recorded command after verifying the inputs still match, then checks the
//! regenerated outputs digest-for-digest — bitwise reproducibility, not
//! approximate equality. Manifests carry no timestamps, so a rerun's
//! manifest is itself identical.

use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    /// Full argv (without the binary name) that produced the outputs.
    pub command: Vec<String>,
    /// Seeds the command consumed, in run order.
    pub seeds: Vec<u64>,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut file =
        fs::File::open(path).with_context(|| format!("digesting {}", path.display()))?;
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 64 * 1024];
    loop {
        let n = file.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

fn digest_all(paths: &[&Path]) -> Result<Vec<FileDigest>> {
    paths
        .iter()
        .map(|p| {
            Ok(FileDigest {
                path: p.to_string_lossy().into_owned(),
                sha256: sha256_file(p)?,
            })
        })
        .collect()
}

impl RunManifest {
    pub fn new(
        argv: Vec<String>,
        seeds: Vec<u64>,
        inputs: &[&Path],
        outputs: &[&Path],
    ) -> Result<RunManifest> {
        Ok(RunManifest {
            tool: "entrain".to_owned(),
            version: env!("CARGO_PKG_VERSION").to_owned(),
            command: argv,
            seeds,
            inputs: digest_all(inputs)?,
            outputs: digest_all(outputs)?,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(path, text).with_context(|| format!("writing manifest {}", path.display()))
    }

    pub fn read(path: &Path) -> Result<RunManifest> {
        let text = fs::read_to_string(path)
            .with_context(|| format!("reading manifest {}", path.display()))?;
        serde_json::from_str(&text)
            .with_context(|| format!("{}: malformed manifest", path.display()))
    }

    /// Every recorded digest still matches the file on disk.
    pub fn verify(&self, which: &[FileDigest], label: &str) -> Result<()> {
        for entry in which {
            let current = sha256_file(Path::new(&entry.path))
                .with_context(|| format!("{label} file {} is missing", entry.path))?;
            if current != entry.sha256 {
                bail!(
                    "{label} file {} changed: manifest records {}, found {current}",
                    entry.path,
                    entry.sha256
                );
            }
        }
        Ok(())
    }
}

/// Default manifest path: alongside the command's primary output.
pub fn default_manifest_path(primary_output: &Path) -> PathBuf {
    let mut name = primary_output
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "out".to_owned());
    name.push_str(".manifest.json");
    primary_output.with_file_name(name)
}
