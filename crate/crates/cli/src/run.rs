use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context};
use ftmesh::corpus::SplitSpec;
use ftmesh::eval::TuneOptions;
use ftmesh::model::ModelConfig;

use crate::Common;

/// Settings shared by every command: model hyperparameters plus run-level
/// options. Sources apply in order: defaults, config file, `--set`, flags.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub workers: usize,
    pub split_ratios: [f64; 3],
    pub top_k: usize,
    pub max_sweeps: usize,
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            model: ModelConfig::default(),
            workers: 0,
            split_ratios: SplitSpec::default().ratios,
            top_k: 10,
            max_sweeps: TuneOptions::default().max_sweeps,
            output_dir: PathBuf::from("out"),
        }
    }
}

impl RunConfig {
    pub fn resolve(common: &Common) -> anyhow::Result<Self> {
        let mut run = RunConfig::default();
        if let Some(path) = &common.config {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
            for (n, line) in text.lines().enumerate() {
                let line = line.split('#').next().unwrap_or("").trim();
                if line.is_empty() {
                    continue;
                }
                run.apply(line)
                    .with_context(|| format!("{} line {}", path.display(), n + 1))?;
            }
        }
        for kv in &common.set {
            run.apply(kv).with_context(|| format!("--set {kv}"))?;
        }
        if let Some(seed) = common.seed {
            run.model.seed = seed;
        }
        if let Some(w) = common.workers {
            run.workers = w;
        }
        run.output_dir = common.output_dir.clone();
        run.model.validate()?;
        Ok(run)
    }

    fn apply(&mut self, kv: &str) -> anyhow::Result<()> {
        let Some((key, value)) = kv.split_once('=') else {
            bail!("expected key = value");
        };
        let (key, value) = (key.trim(), value.trim());
        match key {
            "workers" => self.workers = value.parse().context("workers")?,
            "split_ratios" => self.split_ratios = parse_ratios(value)?,
            "top_k" => self.top_k = value.parse().context("top_k")?,
            "max_sweeps" => self.max_sweeps = value.parse().context("max_sweeps")?,
            _ => self.model.set(key, value)?,
        }
        Ok(())
    }

    pub fn seed(&self) -> u64 {
        self.model.seed
    }

    pub fn init_workers(&self) -> anyhow::Result<()> {
        if self.workers > 0 {
            rayon::ThreadPoolBuilder::new()
                .num_threads(self.workers)
                .build_global()
                .context("starting worker pool")?;
        }
        Ok(())
    }
}

pub fn parse_ratios(text: &str) -> anyhow::Result<[f64; 3]> {
    let parts: Vec<f64> = text
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .with_context(|| format!("ratios {text:?}"))?;
    let ratios: [f64; 3] = parts
        .try_into()
        .map_err(|_| anyhow::anyhow!("ratios {text:?}: expected three values"))?;
    Ok(ratios)
}

/// Fails unless every path exists.
pub fn require_inputs<'a>(paths: impl IntoIterator<Item = &'a Path>) -> anyhow::Result<()> {
    for p in paths {
        ensure!(p.exists(), "input {} does not exist", p.display());
    }
    Ok(())
}
