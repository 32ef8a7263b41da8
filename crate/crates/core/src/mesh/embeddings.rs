use std::collections::HashMap;
use std::io::BufRead;
use std::path::Path;

use super::{MeshError, MeshVocabulary};
use crate::tensor::Tensor;

/// Token → vector table read from whitespace-separated text.
#[derive(Debug, Clone, PartialEq)]
pub struct WordEmbeddings {
    dim: usize,
    index: HashMap<String, usize>,
    vectors: Vec<f64>,
}

impl WordEmbeddings {
    pub fn new(dim: usize) -> Self {
        WordEmbeddings {
            dim,
            index: HashMap::new(),
            vectors: Vec::new(),
        }
    }

    /// Adds or replaces a token's vector.
    pub fn insert(&mut self, token: &str, vector: &[f64]) -> Result<(), MeshError> {
        if vector.len() != self.dim {
            return Err(MeshError::DimensionMismatch {
                expected: self.dim,
                found: vector.len(),
            });
        }
        match self.index.get(token) {
            Some(&row) => self.vectors[row * self.dim..(row + 1) * self.dim].copy_from_slice(vector),
            None => {
                self.index.insert(token.to_string(), self.index.len());
                self.vectors.extend_from_slice(vector);
            }
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, MeshError> {
        let file = std::fs::File::open(path)?;
        Self::read(std::io::BufReader::new(file))
    }

    /// One `token v1 … vd` line per token. A leading `count dim` header line
    /// (word2vec text format) is accepted and skipped.
    pub fn read<R: BufRead>(reader: R) -> Result<Self, MeshError> {
        let mut table: Option<WordEmbeddings> = None;
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            let mut parts = line.split_whitespace();
            let Some(token) = parts.next() else { continue };
            let values: Result<Vec<f64>, _> = parts.map(str::parse::<f64>).collect();
            let values = values.map_err(|e| MeshError::Malformed {
                line: i + 1,
                message: e.to_string(),
            })?;
            if i == 0 && values.len() == 1 && token.parse::<usize>().is_ok() {
                continue;
            }
            if values.is_empty() {
                return Err(MeshError::Malformed {
                    line: i + 1,
                    message: format!("token {token:?} has no vector"),
                });
            }
            let t = table.get_or_insert_with(|| WordEmbeddings::new(values.len()));
            t.insert(token, &values).map_err(|_| MeshError::Malformed {
                line: i + 1,
                message: format!("expected {} values, found {}", t.dim, values.len()),
            })?;
        }
        table.ok_or(MeshError::Malformed {
            line: 0,
            message: "no embeddings found".into(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    pub fn get(&self, token: &str) -> Option<&[f64]> {
        self.index
            .get(token)
            .map(|&row| &self.vectors[row * self.dim..(row + 1) * self.dim])
    }
}

/// `L×d` matrix whose row `i` is the initial embedding of label `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelMatrix(pub Tensor);

impl LabelMatrix {
    pub fn tensor(&self) -> &Tensor {
        &self.0
    }

    pub fn rows(&self) -> usize {
        self.0.rows()
    }

    pub fn dim(&self) -> usize {
        self.0.cols()
    }
}

/// Lowercased descriptor-name tokens, split on whitespace and commas.
pub fn label_tokens(name: &str) -> Vec<String> {
    name.split(|c: char| c.is_whitespace() || c == ',')
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Averages word vectors over each descriptor name. Out-of-vocabulary tokens
/// contribute zero vectors but still count toward the average.
pub fn init_label_embeddings(vocab: &MeshVocabulary, emb: &WordEmbeddings) -> Result<LabelMatrix, MeshError> {
    let d = emb.dim();
    let mut data = vec![0.0; vocab.len() * d];
    for (i, desc) in vocab.descriptors().iter().enumerate() {
        let tokens = label_tokens(&desc.name);
        if tokens.is_empty() {
            return Err(MeshError::EmptyName(desc.ui.clone()));
        }
        let row = &mut data[i * d..(i + 1) * d];
        for tok in &tokens {
            if let Some(v) = emb.get(tok) {
                row.iter_mut().zip(v).for_each(|(r, x)| *r += x);
            }
        }
        let m = tokens.len() as f64;
        row.iter_mut().for_each(|r| *r /= m);
    }
    let tensor = Tensor::new(&[vocab.len(), d], data).map_err(|_| MeshError::Malformed {
        line: 0,
        message: "empty descriptor vocabulary".into(),
    })?;
    Ok(LabelMatrix(tensor))
}
