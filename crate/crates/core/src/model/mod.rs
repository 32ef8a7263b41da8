//! Five-channel dilated-convolution document encoder, two-layer GCN label
//! encoder, label-wise attention and per-label sigmoid scoring.
//!
//! The graph-level building blocks live in [`ops`]; [`Model`] ties them to a
//! parameter set, and [`train`] runs minibatch Adam with early stopping.

mod config;
mod lexicon;
mod network;
pub mod ops;
mod params;
mod train;

pub use config::{Activation, AdjacencyNorm, ModelConfig};
pub use lexicon::{tokenize, Lexicon, PAD, UNK};
pub use network::{Gradients, Model};
pub use params::{ChannelParams, ModelParams};
pub use train::{train, validation_micro_f, EpochStats, TrainReport};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{ArticleRecord, Section};
use crate::eval::LabelSet;
use crate::mesh::{MeshError, MeshVocabulary};
use crate::tensor::TensorError;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("empty training set")]
    EmptyDataset,
    #[error("label ordinal {ordinal} out of range for {labels} labels")]
    LabelOutOfRange { ordinal: usize, labels: usize },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("vocabulary mismatch: {0}")]
    VocabularyMismatch(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Model input channel. Title and abstract share one channel; captions are not
/// model inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    #[serde(rename = "ta")]
    TitleAbstract,
    Intro,
    Methods,
    Results,
    Discuss,
}

impl Channel {
    pub const ALL: [Channel; 5] = [
        Channel::TitleAbstract,
        Channel::Intro,
        Channel::Methods,
        Channel::Results,
        Channel::Discuss,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Channel::TitleAbstract => "ta",
            Channel::Intro => "intro",
            Channel::Methods => "methods",
            Channel::Results => "results",
            Channel::Discuss => "discuss",
        }
    }

    pub fn sections(self) -> &'static [Section] {
        match self {
            Channel::TitleAbstract => &[Section::Title, Section::Abstract],
            Channel::Intro => &[Section::Intro],
            Channel::Methods => &[Section::Methods],
            Channel::Results => &[Section::Results],
            Channel::Discuss => &[Section::Discuss],
        }
    }

    /// Channel text of a record; sections are joined with a space.
    pub fn text(self, record: &ArticleRecord) -> String {
        self.sections()
            .iter()
            .filter_map(|&s| record.section(s))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Channel {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Channel::ALL
            .into_iter()
            .find(|c| c.name() == s.trim())
            .ok_or_else(|| ModelError::Config(format!("unknown channel {s:?}")))
    }
}

/// A document ready for the network: padded token ids per active channel.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedDoc {
    pub pmid: String,
    /// Indexed by [`Channel::index`]; empty for channels not in use.
    pub ids: [Vec<usize>; 5],
    /// Real (unpadded) token counts per channel.
    pub lengths: [usize; 5],
    pub labels: LabelSet,
}

impl EncodedDoc {
    /// Encodes a record's active channels. Descriptors outside `vocab` are dropped.
    pub fn from_record(record: &ArticleRecord, lexicon: &Lexicon, config: &ModelConfig, vocab: &MeshVocabulary) -> Self {
        let mut ids: [Vec<usize>; 5] = Default::default();
        let mut lengths = [0; 5];
        for &c in &config.channels {
            let (v, n) = lexicon.encode(&c.text(record), config.channel_length(c));
            ids[c.index()] = v;
            lengths[c.index()] = n;
        }
        EncodedDoc {
            pmid: record.pmid.clone(),
            ids,
            lengths,
            labels: record.mesh.keys().filter_map(|ui| vocab.ordinal(ui)).collect(),
        }
    }
}

/// Training-split texts of the active channels, for building a [`Lexicon`].
pub fn channel_texts<'a>(records: &'a [ArticleRecord], config: &'a ModelConfig) -> impl Iterator<Item = String> + 'a {
    records
        .iter()
        .flat_map(move |r| config.channels.iter().map(move |c| c.text(r)))
}
