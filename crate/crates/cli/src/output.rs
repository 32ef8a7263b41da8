use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};
use tempfile::TempDir;

pub fn sha256_file(path: &Path) -> anyhow::Result<String> {
    let mut file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut hasher = Sha256::new();
    io::copy(&mut file, &mut hasher).with_context(|| format!("reading {}", path.display()))?;
    Ok(format!("{:x}", hasher.finalize()))
}

pub fn sha256_bytes(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

#[derive(Debug, Serialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

/// Reproducibility record written next to a command's outputs. Holds no
/// timestamps, so reruns on identical inputs produce identical bytes.
#[derive(Debug, Serialize)]
pub struct Manifest {
    pub command: &'static str,
    pub version: &'static str,
    pub seed: u64,
    pub config_sha256: String,
    pub config: Value,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub summary: Value,
}

impl Manifest {
    pub fn new(command: &'static str, seed: u64, config: impl Serialize) -> anyhow::Result<Self> {
        // `Value` maps are ordered by key, so the hash is canonical.
        let config = serde_json::to_value(config)?;
        Ok(Manifest {
            command,
            version: env!("CARGO_PKG_VERSION"),
            seed,
            config_sha256: sha256_bytes(&serde_json::to_vec(&config)?),
            config,
            inputs: Vec::new(),
            outputs: Vec::new(),
            summary: Value::Null,
        })
    }

    pub fn input(&mut self, path: &Path) -> anyhow::Result<()> {
        self.inputs.push(FileDigest {
            path: path.display().to_string(),
            sha256: sha256_file(path)?,
        });
        Ok(())
    }
}

/// Outputs are written into a hidden scratch directory inside the output
/// directory and moved into place only by [`Staging::commit`]. Dropping an
/// uncommitted staging area deletes everything it wrote.
pub struct Staging {
    dir: PathBuf,
    scratch: TempDir,
    files: Vec<String>,
}

impl Staging {
    pub fn new(dir: &Path) -> anyhow::Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("creating output directory {}", dir.display()))?;
        let scratch = tempfile::Builder::new()
            .prefix(".ftmesh-staging")
            .tempdir_in(dir)
            .with_context(|| format!("creating scratch space in {}", dir.display()))?;
        Ok(Staging {
            dir: dir.to_path_buf(),
            scratch,
            files: Vec::new(),
        })
    }

    /// Scratch path for an output that a library call writes itself.
    pub fn path(&mut self, name: &str) -> PathBuf {
        self.files.push(name.to_string());
        self.scratch.path().join(name)
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> anyhow::Result<()> {
        let path = self.path(name);
        fs::write(&path, bytes).with_context(|| format!("writing {name}"))
    }

    /// Streams an output through `fill`.
    pub fn write_with(
        &mut self,
        name: &str,
        fill: impl FnOnce(&mut BufWriter<File>) -> anyhow::Result<()>,
    ) -> anyhow::Result<()> {
        let path = self.path(name);
        let mut out = BufWriter::new(File::create(&path).with_context(|| format!("creating {name}"))?);
        fill(&mut out)?;
        out.flush().with_context(|| format!("writing {name}"))?;
        Ok(())
    }

    pub fn write_json(&mut self, name: &str, value: &impl Serialize) -> anyhow::Result<()> {
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        self.write(name, &bytes)
    }

    /// Records output digests in `manifest`, writes it as
    /// `<command>.manifest.json`, and moves every file into place. Files
    /// already moved are removed again if a later move fails.
    pub fn commit(mut self, mut manifest: Manifest) -> anyhow::Result<()> {
        for name in &self.files {
            manifest.outputs.push(FileDigest {
                path: name.clone(),
                sha256: sha256_file(&self.scratch.path().join(name))?,
            });
        }
        let manifest_name = format!("{}.manifest.json", manifest.command);
        self.write_json(&manifest_name, &manifest)?;
        let mut placed: Vec<PathBuf> = Vec::new();
        for name in &self.files {
            let target = self.dir.join(name);
            if let Err(e) = fs::rename(self.scratch.path().join(name), &target) {
                for p in &placed {
                    let _ = fs::remove_file(p);
                }
                return Err(e).with_context(|| format!("moving {name} into {}", self.dir.display()));
            }
            placed.push(target);
        }
        Ok(())
    }
}
