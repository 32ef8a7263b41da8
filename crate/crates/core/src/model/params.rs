use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{Channel, ModelConfig, ModelError};
use crate::tensor::Tensor;

/// Convolution stack and output projection of one channel.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelParams {
    pub channel: Channel,
    /// `s × c_in × c_out` per layer; no bias.
    pub kernels: Vec<Tensor>,
    /// `conv_width × d`.
    pub projection: Tensor,
}

/// Every trainable value of the network.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    /// `V × d` word embeddings; row 0 (padding) stays zero.
    pub embeddings: Tensor,
    /// `L × d` label matrix before graph propagation.
    pub labels: Tensor,
    /// One entry per active channel, in canonical channel order.
    pub channels: Vec<ChannelParams>,
    /// GCN weights, `d × d` each.
    pub gcn: [Tensor; 2],
    /// Per-label score bias, length `L`.
    pub bias: Tensor,
}

fn uniform(rng: &mut ChaCha8Rng, shape: &[usize], limit: f64) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.gen_range(-limit..limit)).collect();
    Tensor::new(shape, data).expect("positive dimensions").with_grad()
}

/// Uniform He init, for weights feeding a ReLU.
fn he(rng: &mut ChaCha8Rng, shape: &[usize], fan_in: usize) -> Tensor {
    uniform(rng, shape, (6.0 / fan_in as f64).sqrt())
}

fn glorot(rng: &mut ChaCha8Rng, shape: &[usize], fan_in: usize, fan_out: usize) -> Tensor {
    uniform(rng, shape, (6.0 / (fan_in + fan_out) as f64).sqrt())
}

impl ModelParams {
    /// Fresh parameters. Embeddings are uniform in ±0.05, convolution kernels
    /// He-uniform, other weights Glorot-uniform, and the bias starts at zero.
    /// `label_init` is the `L × d` label matrix.
    pub fn init(config: &ModelConfig, vocab_size: usize, label_init: Tensor, rng: &mut ChaCha8Rng) -> Result<Self, ModelError> {
        config.validate()?;
        let d = config.d;
        if label_init.shape().len() != 2 || label_init.cols() != d {
            return Err(ModelError::Config(format!(
                "label matrix shape {:?} does not have width d = {d}",
                label_init.shape()
            )));
        }
        let labels = label_init.rows();
        let mut embeddings = uniform(rng, &[vocab_size.max(2), d], 0.05);
        embeddings.data_mut()[..d].fill(0.0);
        let s = config.kernel_width;
        let h = config.conv_width;
        let channels = config
            .channels
            .iter()
            .map(|&channel| {
                let kernels = (0..config.dilations.len())
                    .map(|layer| {
                        let c_in = if layer == 0 { d } else { h };
                        he(rng, &[s, c_in, h], s * c_in)
                    })
                    .collect();
                let projection = glorot(rng, &[h, d], h, d);
                ChannelParams {
                    channel,
                    kernels,
                    projection,
                }
            })
            .collect();
        let gcn = [glorot(rng, &[d, d], d, d), glorot(rng, &[d, d], d, d)];
        let label_matrix = Tensor::new(&[labels, d], label_init.into_data())?;
        let label_matrix = if config.train_label_embeddings {
            label_matrix.with_grad()
        } else {
            label_matrix
        };
        Ok(ModelParams {
            embeddings,
            labels: label_matrix,
            channels,
            gcn,
            bias: Tensor::zeros(&[labels]).with_grad(),
        })
    }

    pub fn label_count(&self) -> usize {
        self.bias.len()
    }

    pub fn channel(&self, c: Channel) -> Option<&ChannelParams> {
        self.channels.iter().find(|p| p.channel == c)
    }

    /// Parameter tensors with stable names, in a fixed order.
    pub fn named(&self) -> Vec<(String, &Tensor)> {
        let mut out = vec![("embeddings".to_string(), &self.embeddings), ("labels".to_string(), &self.labels)];
        for c in &self.channels {
            for (i, k) in c.kernels.iter().enumerate() {
                out.push((format!("{}.conv{i}", c.channel.name()), k));
            }
            out.push((format!("{}.projection", c.channel.name()), &c.projection));
        }
        out.push(("gcn0".into(), &self.gcn[0]));
        out.push(("gcn1".into(), &self.gcn[1]));
        out.push(("bias".into(), &self.bias));
        out
    }

    /// Same order as [`ModelParams::named`].
    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = vec![&mut self.embeddings, &mut self.labels];
        for c in &mut self.channels {
            out.extend(c.kernels.iter_mut());
            out.push(&mut c.projection);
        }
        let [g0, g1] = &mut self.gcn;
        out.push(g0);
        out.push(g1);
        out.push(&mut self.bias);
        out
    }

    pub fn count(&self) -> usize {
        self.named().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.named().iter().all(|(_, t)| t.is_finite())
    }
}
