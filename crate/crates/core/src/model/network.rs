use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ops::{attend, encode_channel, fuse_and_score, label_features};
use super::{AdjacencyNorm, Channel, ChannelParams, EncodedDoc, Lexicon, ModelConfig, ModelError, ModelParams, PAD};
use crate::mesh::{init_label_embeddings, AdjacencyMatrix, MeshVocabulary, WordEmbeddings};
use crate::tensor::{read_checkpoint, write_checkpoint, Checkpoint, Graph, SparseMatrix, Tensor, Var};

const FORMAT: &str = "ftmesh-model-1";

/// Gradients aligned with [`ModelParams::named`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients(pub Vec<Vec<f64>>);

/// A trained or freshly initialized network with its lexicon and label space.
#[derive(Debug, Clone)]
pub struct Model {
    pub config: ModelConfig,
    pub lexicon: Lexicon,
    pub label_uis: Vec<String>,
    adjacency: Arc<SparseMatrix>,
    pub params: ModelParams,
}

/// Graph handles of the parameters registered for one document.
struct ParamVars {
    labels: Var,
    channels: Vec<(Vec<Var>, Var)>,
    gcn: [Var; 2],
    bias: Var,
}

/// One document's loss, dense parameter gradients (labels first, in
/// [`ModelParams::named`] order after the embedding table), and embedding
/// row gradients keyed by token ids.
type DocGradients = (f64, Vec<Vec<f64>>, Vec<(Vec<usize>, Vec<f64>)>);

struct DocForward {
    graph: Graph,
    vars: ParamVars,
    /// Gathered embedding rows per active channel, with their token ids.
    embedded: Vec<(Var, Vec<usize>)>,
    scores: Var,
    alphas: Vec<(Channel, Var)>,
}

/// Splitmix64 finalizer, used to derive per-document dropout seeds.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Serialize, Deserialize)]
struct Meta {
    format: String,
    config: ModelConfig,
    lexicon: Lexicon,
    labels: Vec<String>,
    adjacency: Vec<(usize, usize, f64)>,
}

impl Model {
    /// Initializes a network for `vocab`. Lexicon rows found in `pretrained`
    /// start from those vectors; label rows start as mean word vectors of the
    /// descriptor names.
    pub fn new(
        config: ModelConfig,
        lexicon: Lexicon,
        vocab: &MeshVocabulary,
        pretrained: Option<&WordEmbeddings>,
    ) -> Result<Self, ModelError> {
        config.validate()?;
        if vocab.is_empty() {
            return Err(ModelError::Config("empty label vocabulary".into()));
        }
        let d = config.d;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut params = ModelParams::init(&config, lexicon.len(), Tensor::zeros(&[vocab.len(), d]), &mut rng)?;
        if let Some(pre) = pretrained {
            if pre.dim() != d {
                return Err(ModelError::Config(format!("pretrained vectors have width {}, d = {d}", pre.dim())));
            }
            let table = params.embeddings.data_mut();
            for (i, w) in lexicon.words().iter().enumerate().skip(PAD + 2) {
                if let Some(v) = pre.get(w) {
                    table[i * d..(i + 1) * d].copy_from_slice(v);
                }
            }
        }
        let mut words = WordEmbeddings::new(d);
        for (i, w) in lexicon.words().iter().enumerate().skip(PAD + 2) {
            words.insert(w, params.embeddings.row(i))?;
        }
        let init = init_label_embeddings(vocab, &words)?;
        params.labels.data_mut().copy_from_slice(init.tensor().data());

        let adjacency = AdjacencyMatrix::build(vocab);
        let adjacency = match config.adjacency {
            AdjacencyNorm::Symmetric => adjacency.normalized(),
            AdjacencyNorm::Raw => adjacency,
        };
        Model::from_parts(config, lexicon, vocab.uis().map(String::from).collect(), adjacency.matrix().clone(), params)
    }

    /// Assembles a model from explicit parts, checking shapes.
    pub fn from_parts(
        config: ModelConfig,
        lexicon: Lexicon,
        label_uis: Vec<String>,
        adjacency: Arc<SparseMatrix>,
        params: ModelParams,
    ) -> Result<Self, ModelError> {
        config.validate()?;
        let l = label_uis.len();
        let d = config.d;
        let bad = |what: &str| Err(ModelError::Config(format!("parameter shape mismatch: {what}")));
        if params.embeddings.shape() != [lexicon.len().max(2), d] {
            return bad("embeddings");
        }
        if params.labels.shape() != [l, d] || params.bias.shape() != [l] {
            return bad("labels or bias");
        }
        if adjacency.rows() != l || adjacency.cols() != l {
            return bad("adjacency");
        }
        if params.gcn.iter().any(|w| w.shape() != [d, d]) {
            return bad("gcn");
        }
        let channels: Vec<Channel> = params.channels.iter().map(|c| c.channel).collect();
        if channels != config.channels {
            return bad("channel list");
        }
        for c in &params.channels {
            if c.kernels.len() != config.dilations.len() || c.projection.shape() != [config.conv_width, d] {
                return bad("channel stack");
            }
        }
        Ok(Model {
            config,
            lexicon,
            label_uis,
            adjacency,
            params,
        })
    }

    pub fn label_count(&self) -> usize {
        self.label_uis.len()
    }

    pub fn adjacency(&self) -> &Arc<SparseMatrix> {
        &self.adjacency
    }

    /// Fails unless `vocab` lists the same descriptors in the same order.
    pub fn check_vocabulary(&self, vocab: &MeshVocabulary) -> Result<(), ModelError> {
        if vocab.len() != self.label_uis.len() || vocab.uis().zip(&self.label_uis).any(|(a, b)| a != b) {
            return Err(ModelError::VocabularyMismatch(format!(
                "checkpoint has {} labels, vocabulary has {} (or a different order)",
                self.label_uis.len(),
                vocab.len()
            )));
        }
        Ok(())
    }

    pub fn encode(&self, record: &crate::corpus::ArticleRecord, vocab: &MeshVocabulary) -> EncodedDoc {
        EncodedDoc::from_record(record, &self.lexicon, &self.config, vocab)
    }

    fn register(&self, g: &mut Graph) -> ParamVars {
        let p = &self.params;
        ParamVars {
            labels: g.param(&p.labels),
            channels: p
                .channels
                .iter()
                .map(|c| (c.kernels.iter().map(|k| g.param(k)).collect(), g.param(&c.projection)))
                .collect(),
            gcn: [g.param(&p.gcn[0]), g.param(&p.gcn[1])],
            bias: g.param(&p.bias),
        }
    }

    fn gather(&self, ids: &[usize]) -> Result<Tensor, ModelError> {
        let d = self.config.d;
        let table = &self.params.embeddings;
        let mut data = Vec::with_capacity(ids.len() * d);
        for &id in ids {
            if id >= table.rows() {
                return Err(ModelError::VocabularyMismatch(format!("token id {id} outside lexicon of {}", table.rows())));
            }
            data.extend_from_slice(table.row(id));
        }
        let t = Tensor::new(&[ids.len(), d], data)?;
        Ok(if table.requires_grad() { t.with_grad() } else { t })
    }

    fn forward_doc(&self, doc: &EncodedDoc, training: bool, seed: u64) -> Result<DocForward, ModelError> {
        if let Some(&bad) = doc.labels.iter().next_back().filter(|&&o| o >= self.label_count()) {
            return Err(ModelError::LabelOutOfRange {
                ordinal: bad,
                labels: self.label_count(),
            });
        }
        let mut g = Graph::new();
        let vars = self.register(&mut g);
        let h = label_features(&mut g, &self.adjacency, vars.labels, &vars.gcn, self.config.gcn_activation)?;
        let shrink = self.config.shrink();
        let mut contents = Vec::new();
        let mut embedded = Vec::new();
        let mut alphas = Vec::new();
        for (cp, (kernels, projection)) in self.params.channels.iter().zip(&vars.channels) {
            let c = cp.channel;
            let ids = &doc.ids[c.index()];
            if ids.len() != self.config.channel_length(c) {
                return Err(ModelError::Config(format!(
                    "document {} channel {c} has {} ids, expected {}",
                    doc.pmid,
                    ids.len(),
                    self.config.channel_length(c)
                )));
            }
            let e = g.param(&self.gather(ids)?);
            let channel_seed = mix(seed ^ mix(c.index() as u64 + 1));
            let features = encode_channel(
                &mut g,
                e,
                kernels,
                &self.config.dilations,
                *projection,
                self.config.dropout,
                channel_seed,
                training,
            )?;
            let positions = ids.len() - shrink;
            let valid = doc.lengths[c.index()].clamp(1, positions);
            let (content, alpha) = attend(&mut g, features, h, valid)?;
            contents.push(content);
            embedded.push((e, ids.clone()));
            alphas.push((c, alpha));
        }
        let scores = fuse_and_score(&mut g, &contents, h, vars.bias)?;
        Ok(DocForward {
            graph: g,
            vars,
            embedded,
            scores,
            alphas,
        })
    }

    /// Inference-mode label scores for one document.
    pub fn scores(&self, doc: &EncodedDoc) -> Result<Vec<f64>, ModelError> {
        let f = self.forward_doc(doc, false, 0)?;
        Ok(f.graph.data(f.scores).to_vec())
    }

    /// Inference-mode attention weights (`positions × L`) per active channel.
    pub fn attention(&self, doc: &EncodedDoc) -> Result<Vec<(Channel, Tensor)>, ModelError> {
        let f = self.forward_doc(doc, false, 0)?;
        Ok(f.alphas.iter().map(|&(c, a)| (c, f.graph.value(a))).collect())
    }

    /// Scores for every document, in input order. Documents are independent,
    /// so they are evaluated in parallel.
    pub fn predict(&self, docs: &[EncodedDoc]) -> Result<Vec<Vec<f64>>, ModelError> {
        docs.par_iter().map(|d| self.scores(d)).collect()
    }

    /// Mean over documents of the summed label cross-entropy.
    pub fn loss(&self, docs: &[EncodedDoc], training: bool, seed: u64) -> Result<f64, ModelError> {
        if docs.is_empty() {
            return Err(ModelError::EmptyDataset);
        }
        let losses: Result<Vec<f64>, ModelError> = docs
            .par_iter()
            .enumerate()
            .map(|(i, d)| {
                let mut f = self.forward_doc(d, training, mix(seed.wrapping_add(i as u64)))?;
                let loss = f.graph.bce_loss(f.scores, &targets(d, self.label_count()))?;
                Ok(f.graph.scalar(loss))
            })
            .collect();
        Ok(losses?.iter().sum::<f64>() / docs.len() as f64)
    }

    /// Batch loss and its gradient. Per-document gradients are computed in
    /// parallel and summed in document order, so results do not depend on
    /// the thread count.
    pub fn loss_and_gradients(&self, docs: &[EncodedDoc], training: bool, seed: u64) -> Result<(f64, Gradients), ModelError> {
        if docs.is_empty() {
            return Err(ModelError::EmptyDataset);
        }
        let per_doc: Result<Vec<DocGradients>, ModelError> = docs
            .par_iter()
            .enumerate()
            .map(|(i, d)| {
                let mut f = self.forward_doc(d, training, mix(seed.wrapping_add(i as u64)))?;
                let loss = f.graph.bce_loss(f.scores, &targets(d, self.label_count()))?;
                f.graph.backward(loss)?;
                let g = &f.graph;
                let mut dense = vec![g.grad(f.vars.labels)];
                for (kernels, projection) in &f.vars.channels {
                    dense.extend(kernels.iter().map(|&k| g.grad(k)));
                    dense.push(g.grad(*projection));
                }
                dense.push(g.grad(f.vars.gcn[0]));
                dense.push(g.grad(f.vars.gcn[1]));
                dense.push(g.grad(f.vars.bias));
                let rows = f.embedded.iter().map(|(v, ids)| (ids.clone(), g.grad(*v))).collect();
                Ok((g.scalar(loss), dense, rows))
            })
            .collect();
        let per_doc = per_doc?;

        let d = self.config.d;
        let scale = 1.0 / docs.len() as f64;
        let named = self.params.named();
        let mut grads: Vec<Vec<f64>> = named.iter().map(|(_, t)| vec![0.0; t.len()]).collect();
        let mut loss = 0.0;
        for (l, dense, rows) in &per_doc {
            loss += l;
            for (acc, g) in grads[1..].iter_mut().zip(dense) {
                acc.iter_mut().zip(g).for_each(|(a, x)| *a += x);
            }
            if self.params.embeddings.requires_grad() {
                for (ids, g) in rows {
                    for (pos, &id) in ids.iter().enumerate() {
                        if id == PAD {
                            continue;
                        }
                        let dst = &mut grads[0][id * d..(id + 1) * d];
                        dst.iter_mut().zip(&g[pos * d..(pos + 1) * d]).for_each(|(a, x)| *a += x);
                    }
                }
            }
        }
        for g in &mut grads {
            g.iter_mut().for_each(|v| *v *= scale);
        }
        Ok((loss * scale, Gradients(grads)))
    }

    pub fn write_to<W: Write>(&self, out: W) -> Result<(), ModelError> {
        let meta = Meta {
            format: FORMAT.into(),
            config: self.config.clone(),
            lexicon: self.lexicon.clone(),
            labels: self.label_uis.clone(),
            adjacency: self.adjacency.triplets(),
        };
        let ckpt = Checkpoint {
            meta: serde_json::to_value(&meta).map_err(|e| ModelError::Checkpoint(e.to_string()))?,
            tensors: self
                .params
                .named()
                .into_iter()
                .map(|(n, t)| (n, Tensor::new(t.shape(), t.data().to_vec()).expect("valid shape")))
                .collect(),
        };
        write_checkpoint(out, &ckpt)?;
        Ok(())
    }

    pub fn read_from<R: Read>(input: R) -> Result<Self, ModelError> {
        let ckpt = read_checkpoint(input)?;
        let meta: Meta = serde_json::from_value(ckpt.meta.clone()).map_err(|e| ModelError::Checkpoint(e.to_string()))?;
        if meta.format != FORMAT {
            return Err(ModelError::Checkpoint(format!("unsupported format {:?}", meta.format)));
        }
        let take = |name: &str, grad: bool| -> Result<Tensor, ModelError> {
            let t = ckpt
                .get(name)
                .ok_or_else(|| ModelError::Checkpoint(format!("missing tensor {name}")))?;
            let t = Tensor::new(t.shape(), t.data().to_vec())?;
            Ok(if grad { t.with_grad() } else { t })
        };
        let config = meta.config;
        let channels = config
            .channels
            .iter()
            .map(|&c| {
                Ok(ChannelParams {
                    channel: c,
                    kernels: (0..config.dilations.len())
                        .map(|i| take(&format!("{}.conv{i}", c.name()), true))
                        .collect::<Result<_, ModelError>>()?,
                    projection: take(&format!("{}.projection", c.name()), true)?,
                })
            })
            .collect::<Result<Vec<_>, ModelError>>()?;
        let params = ModelParams {
            embeddings: take("embeddings", true)?,
            labels: take("labels", config.train_label_embeddings)?,
            channels,
            gcn: [take("gcn0", true)?, take("gcn1", true)?],
            bias: take("bias", true)?,
        };
        let l = meta.labels.len();
        let adjacency = Arc::new(SparseMatrix::from_triplets(l, l, &meta.adjacency));
        Model::from_parts(config, meta.lexicon, meta.labels, adjacency, params)
    }

    /// Writes the checkpoint atomically.
    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        let dir = match path.parent() {
            Some(p) if !p.as_os_str().is_empty() => p,
            _ => Path::new("."),
        };
        let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
        {
            let mut w = std::io::BufWriter::new(tmp.as_file_mut());
            self.write_to(&mut w)?;
            w.flush()?;
        }
        tmp.as_file().sync_all()?;
        tmp.persist(path).map_err(|e| ModelError::Io(e.error))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        Model::read_from(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

fn targets(doc: &EncodedDoc, labels: usize) -> Vec<f64> {
    let mut t = vec![0.0; labels];
    for &l in &doc.labels {
        t[l] = 1.0;
    }
    t
}
