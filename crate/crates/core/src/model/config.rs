use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{Channel, ModelError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    /// Test hook: the GCN propagates linearly.
    Identity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AdjacencyNorm {
    /// `D^-1/2 A D^-1/2`.
    Symmetric,
    /// The 0/1 self+parent+child matrix as is.
    Raw,
}

/// Hyperparameters of the network and its training loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Word, label and channel-output width.
    pub d: usize,
    pub kernel_width: usize,
    /// One stacked convolution layer per rate.
    pub dilations: Vec<usize>,
    /// Width of the convolution stack before the projection back to `d`.
    pub conv_width: usize,
    /// Input channels in use, in canonical order.
    pub channels: Vec<Channel>,
    /// Token budget per channel, indexed by [`Channel::index`].
    pub channel_lengths: [usize; 5],
    pub dropout: f64,
    pub learning_rate: f64,
    pub decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Epochs without a validation micro-F gain before stopping.
    pub patience: usize,
    pub seed: u64,
    pub min_word_freq: usize,
    pub gcn_activation: Activation,
    pub adjacency: AdjacencyNorm,
    /// Whether the label matrix is updated after its mean-word-vector start.
    pub train_label_embeddings: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            d: 200,
            kernel_width: 3,
            dilations: vec![1, 2, 3],
            conv_width: 400,
            channels: Channel::ALL.to_vec(),
            channel_lengths: [64, 256, 512, 512, 512],
            dropout: 0.2,
            learning_rate: 3e-4,
            decay: 0.9,
            batch_size: 8,
            epochs: 30,
            patience: 3,
            seed: 0,
            min_word_freq: 2,
            gcn_activation: Activation::Relu,
            adjacency: AdjacencyNorm::Raw,
            train_label_embeddings: true,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, ModelError> {
    value
        .trim()
        .parse()
        .map_err(|_| ModelError::Config(format!("{key}: cannot parse {value:?}")))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>, ModelError> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse(key, s))
        .collect()
}

fn join<T: ToString>(items: impl IntoIterator<Item = T>) -> String {
    items.into_iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

impl ModelConfig {
    /// Receptive-field shrinkage of the convolution stack under valid padding.
    pub fn shrink(&self) -> usize {
        (self.kernel_width - 1) * self.dilations.iter().sum::<usize>()
    }

    pub fn channel_length(&self, c: Channel) -> usize {
        self.channel_lengths[c.index()]
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let fail = |m: String| Err(ModelError::Config(m));
        if self.d == 0 || self.conv_width == 0 || self.kernel_width == 0 {
            return fail("d, conv_width and kernel_width must be positive".into());
        }
        if self.dilations.is_empty() || self.dilations.contains(&0) {
            return fail("dilations must be a non-empty list of positive integers".into());
        }
        if self.batch_size == 0 {
            return fail("batch_size must be at least 1".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return fail(format!("dropout {} outside [0, 1)", self.dropout));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) || !(self.decay > 0.0 && self.decay <= 1.0) {
            return fail("learning_rate must be positive and decay in (0, 1]".into());
        }
        if self.channels.is_empty() {
            return fail("at least one channel is required".into());
        }
        for &c in &self.channels {
            if self.channel_length(c) <= self.shrink() {
                return fail(format!(
                    "channel {} length {} must exceed the receptive-field shrinkage {}",
                    c.name(),
                    self.channel_length(c),
                    self.shrink()
                ));
            }
        }
        Ok(())
    }

    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ModelError> {
        let key = key.trim();
        match key {
            "d" => self.d = parse(key, value)?,
            "kernel_width" => self.kernel_width = parse(key, value)?,
            "dilations" => self.dilations = parse_list(key, value)?,
            "conv_width" => self.conv_width = parse(key, value)?,
            "channels" => {
                let mut cs: Vec<Channel> = parse_list(key, value)?;
                cs.sort();
                cs.dedup();
                self.channels = cs;
            }
            "channel_lengths" => {
                let v: Vec<usize> = parse_list(key, value)?;
                self.channel_lengths = v
                    .try_into()
                    .map_err(|_| ModelError::Config("channel_lengths needs five values".into()))?;
            }
            "dropout" => self.dropout = parse(key, value)?,
            "learning_rate" => self.learning_rate = parse(key, value)?,
            "decay" => self.decay = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "epochs" => self.epochs = parse(key, value)?,
            "patience" => self.patience = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "min_word_freq" => self.min_word_freq = parse(key, value)?,
            "gcn_activation" => {
                self.gcn_activation = match value.trim() {
                    "relu" => Activation::Relu,
                    "identity" => Activation::Identity,
                    other => return Err(ModelError::Config(format!("gcn_activation: unknown {other:?}"))),
                }
            }
            "adjacency" => {
                self.adjacency = match value.trim() {
                    "symmetric" => AdjacencyNorm::Symmetric,
                    "raw" => AdjacencyNorm::Raw,
                    other => return Err(ModelError::Config(format!("adjacency: unknown {other:?}"))),
                }
            }
            "train_label_embeddings" => self.train_label_embeddings = parse(key, value)?,
            _ => return Err(ModelError::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Parses a flat `key = value` file. `#` starts a comment.
    pub fn from_kv(text: &str) -> Result<Self, ModelError> {
        let mut config = ModelConfig::default();
        config.apply_kv(text)?;
        Ok(config)
    }

    pub fn apply_kv(&mut self, text: &str) -> Result<(), ModelError> {
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| ModelError::Config(format!("line {}: expected key = value", n + 1)))?;
            self.set(k, v)
                .map_err(|e| ModelError::Config(format!("line {}: {e}", n + 1)))?;
        }
        Ok(())
    }

    /// Canonical `key = value` rendering; `from_kv(to_kv())` restores the config.
    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        let act = match self.gcn_activation {
            Activation::Relu => "relu",
            Activation::Identity => "identity",
        };
        let adj = match self.adjacency {
            AdjacencyNorm::Symmetric => "symmetric",
            AdjacencyNorm::Raw => "raw",
        };
        let _ = writeln!(s, "d = {}", self.d);
        let _ = writeln!(s, "kernel_width = {}", self.kernel_width);
        let _ = writeln!(s, "dilations = {}", join(&self.dilations));
        let _ = writeln!(s, "conv_width = {}", self.conv_width);
        let _ = writeln!(s, "channels = {}", join(self.channels.iter().map(|c| c.name())));
        let _ = writeln!(s, "channel_lengths = {}", join(self.channel_lengths));
        let _ = writeln!(s, "dropout = {}", self.dropout);
        let _ = writeln!(s, "learning_rate = {}", self.learning_rate);
        let _ = writeln!(s, "decay = {}", self.decay);
        let _ = writeln!(s, "batch_size = {}", self.batch_size);
        let _ = writeln!(s, "epochs = {}", self.epochs);
        let _ = writeln!(s, "patience = {}", self.patience);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "min_word_freq = {}", self.min_word_freq);
        let _ = writeln!(s, "gcn_activation = {act}");
        let _ = writeln!(s, "adjacency = {adj}");
        let _ = writeln!(s, "train_label_embeddings = {}", self.train_label_embeddings);
        s
    }
}
