//! The classifier: stacked 3×3 conv blocks with 2×2 pooling, a global average
//! pool, and a two-layer dense head. Exposes per-block activations for the
//! transfer losses and a versioned binary checkpoint format.

mod checkpoint;

pub use checkpoint::{
    read_tensor_blob, write_tensor_blob, Checkpoint, CheckpointError, CheckpointTensor,
    TrainingMeta, CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{AutodiffError, NodeId, Tape, Tensor};
use crate::dsp::LogSpectrogram;

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("invalid network spec: {0}")]
    InvalidSpec(String),
    #[error("unknown layer id {0:?}")]
    UnknownLayer(String),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
}

pub type Result<T> = std::result::Result<T, NetworkError>;

/// Keeps standardization finite on constant inputs: std is floored at 1e-8
/// via sqrt(var + floor²), which is smooth through the autodiff tape.
const STD_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvBlockSpec {
    pub out_channels: usize,
    pub pool: bool,
}

/// Layer topology. Kernels are always 3×3; the default is four pooled conv
/// blocks [16, 32, 64, 64], then dense(128) + dense(num_classes) — six
/// weight-bearing layers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub conv_blocks: Vec<ConvBlockSpec>,
    pub hidden_units: usize,
    pub num_classes: usize,
}

impl NetworkSpec {
    pub fn default_with_classes(num_classes: usize) -> Self {
        Self {
            conv_blocks: [16, 32, 64, 64]
                .into_iter()
                .map(|out_channels| ConvBlockSpec { out_channels, pool: true })
                .collect(),
            hidden_units: 128,
            num_classes,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.conv_blocks.is_empty() {
            return Err(NetworkError::InvalidSpec("at least one conv block".into()));
        }
        if self.conv_blocks.iter().any(|b| b.out_channels == 0) {
            return Err(NetworkError::InvalidSpec("zero-channel conv block".into()));
        }
        if self.hidden_units == 0 {
            return Err(NetworkError::InvalidSpec("hidden_units must be positive".into()));
        }
        if self.num_classes < 2 {
            return Err(NetworkError::InvalidSpec(format!(
                "num_classes must be at least 2, got {}",
                self.num_classes
            )));
        }
        Ok(())
    }

    /// Conv block layer id: "block1", "block2", ...
    pub fn block_id(index: usize) -> String {
        format!("block{}", index + 1)
    }

    /// Index of a conv block from its layer id.
    pub fn block_index(&self, id: &str) -> Result<usize> {
        for i in 0..self.conv_blocks.len() {
            if Self::block_id(i) == id {
                return Ok(i);
            }
        }
        Err(NetworkError::UnknownLayer(id.to_string()))
    }

    /// Ordered (name, shape) of every parameter tensor: weight then bias per
    /// layer, conv blocks first, then the dense head.
    pub fn param_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let mut out = Vec::new();
        let mut c_in = 1;
        for (i, block) in self.conv_blocks.iter().enumerate() {
            let id = Self::block_id(i);
            out.push((format!("{id}.weight"), vec![block.out_channels, c_in, 3, 3]));
            out.push((format!("{id}.bias"), vec![block.out_channels]));
            c_in = block.out_channels;
        }
        out.push(("dense1.weight".into(), vec![self.hidden_units, c_in]));
        out.push(("dense1.bias".into(), vec![self.hidden_units]));
        out.push(("dense2.weight".into(), vec![self.num_classes, self.hidden_units]));
        out.push(("dense2.bias".into(), vec![self.num_classes]));
        out
    }

    pub fn param_count(&self) -> usize {
        self.param_shapes()
            .iter()
            .map(|(_, s)| s.iter().product::<usize>())
            .sum()
    }
}

/// Per-layer post-relu conv activations plus logits.
#[derive(Debug, Clone)]
pub struct Activations {
    pub per_layer: Vec<(String, Tensor)>,
    pub logits: Tensor,
}

impl Activations {
    pub fn layer(&self, id: &str) -> Option<&Tensor> {
        self.per_layer.iter().find(|(n, _)| n == id).map(|(_, t)| t)
    }
}

/// Node handles of a forward graph built on a caller-owned tape.
pub struct ForwardGraph {
    pub input: NodeId,
    /// Post-relu activation of each built conv block, in order.
    pub block_acts: Vec<NodeId>,
    /// Present when the dense head was built.
    pub logits: Option<NodeId>,
    /// Parameter leaves in `param_shapes` order (only for built layers).
    pub param_nodes: Vec<NodeId>,
}

/// A built classifier: spec plus parameter tensors in `param_shapes` order.
pub struct Network {
    spec: NetworkSpec,
    params: Vec<Tensor>,
}

impl Network {
    /// He-style init: weights ~ N(0, sqrt(2/fan_in)) from the seed, zero biases.
    pub fn build(spec: NetworkSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::new();
        for (name, shape) in spec.param_shapes() {
            let numel: usize = shape.iter().product();
            let tensor = if name.ends_with(".bias") {
                Tensor::zeros(&shape)
            } else {
                let fan_in: usize = shape[1..].iter().product();
                let std = (2.0 / fan_in as f64).sqrt();
                let normal = Normal::new(0.0, std).expect("std finite");
                let data = (0..numel).map(|_| normal.sample(&mut rng)).collect();
                Tensor::new(shape.clone(), data).map_err(NetworkError::Autodiff)?
            };
            params.push(tensor);
        }
        Ok(Self { spec, params })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn params(&self) -> &[Tensor] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(|t| t.numel()).sum()
    }

    /// Builds the forward graph on `tape`. `x` must be a 2-D [H, W] node.
    /// `up_to_block` limits how deep the conv stack goes (None = all blocks +
    /// head); `params_require_grad` marks parameter leaves as gradient
    /// targets (training) or constants (transfer).
    pub fn build_forward(
        &self,
        tape: &mut Tape,
        x: NodeId,
        up_to_block: Option<usize>,
        params_require_grad: bool,
    ) -> Result<ForwardGraph> {
        let shape = tape.value(x).shape().to_vec();
        if shape.len() != 2 {
            return Err(NetworkError::InvalidSpec(format!(
                "forward input must be 2-D, got {shape:?}"
            )));
        }
        let (h, w) = (shape[0], shape[1]);
        let last_block = up_to_block.unwrap_or(self.spec.conv_blocks.len() - 1);
        let with_head = up_to_block.is_none();

        // per-clip standardization: (x − mean) / sqrt(var + floor²)
        let m = tape.mean(x)?;
        let centered = tape.sub_broadcast(x, m)?;
        let sq = tape.square(centered)?;
        let var = tape.mean(sq)?;
        let var_floored = tape.add_scalar(var, STD_FLOOR * STD_FLOOR)?;
        let std = tape.sqrt(var_floored)?;
        let standardized = tape.div_broadcast(centered, std)?;
        let mut cur = tape.reshape(standardized, &[1, h, w])?;

        let mut param_nodes = Vec::new();
        let mut block_acts = Vec::new();
        for (i, block) in self.spec.conv_blocks.iter().enumerate().take(last_block + 1) {
            let k = tape.leaf(self.params[2 * i].clone(), params_require_grad)?;
            let b = tape.leaf(self.params[2 * i + 1].clone(), params_require_grad)?;
            param_nodes.push(k);
            param_nodes.push(b);
            let conv = tape.conv2d(cur, k, b)?;
            let act = tape.relu(conv)?;
            block_acts.push(act);
            cur = if block.pool { tape.maxpool2x2(act)? } else { act };
        }

        let logits = if with_head {
            let base = 2 * self.spec.conv_blocks.len();
            let g = tape.global_avg_pool(cur)?;
            let w1 = tape.leaf(self.params[base].clone(), params_require_grad)?;
            let b1 = tape.leaf(self.params[base + 1].clone(), params_require_grad)?;
            let h1 = tape.dense(g, w1, b1)?;
            let a1 = tape.relu(h1)?;
            let w2 = tape.leaf(self.params[base + 2].clone(), params_require_grad)?;
            let b2 = tape.leaf(self.params[base + 3].clone(), params_require_grad)?;
            let out = tape.dense(a1, w2, b2)?;
            param_nodes.extend([w1, b1, w2, b2]);
            Some(out)
        } else {
            None
        };

        Ok(ForwardGraph { input: x, block_acts, logits, param_nodes })
    }

    /// Pure forward pass over a 2-D matrix tensor.
    pub fn forward_matrix(&self, x: &Tensor, want_activations: bool) -> Result<Activations> {
        let mut tape = Tape::new();
        let input = tape.constant(x.clone())?;
        let graph = self.build_forward(&mut tape, input, None, false)?;
        let per_layer = if want_activations {
            graph
                .block_acts
                .iter()
                .enumerate()
                .map(|(i, &id)| (NetworkSpec::block_id(i), tape.value(id).clone()))
                .collect()
        } else {
            Vec::new()
        };
        Ok(Activations {
            per_layer,
            logits: tape.value(graph.logits.expect("head built")).clone(),
        })
    }

    /// Forward pass over a log-magnitude spectrogram.
    pub fn forward(&self, x: &LogSpectrogram, want_activations: bool) -> Result<Activations> {
        self.forward_matrix(&log_spec_tensor(x)?, want_activations)
    }

    pub fn to_checkpoint(&self, meta: TrainingMeta) -> Checkpoint {
        let entries = self
            .spec
            .param_shapes()
            .into_iter()
            .zip(&self.params)
            .map(|((name, shape), tensor)| CheckpointTensor {
                name,
                shape,
                data: tensor.data().iter().map(|&v| v as f32).collect(),
            })
            .collect();
        Checkpoint { spec: self.spec.clone(), meta, entries }
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        ckpt.spec.validate()?;
        let expected = ckpt.spec.param_shapes();
        if expected.len() != ckpt.entries.len() {
            return Err(NetworkError::Checkpoint(CheckpointError::ShapeMismatch {
                layer: "parameter count".into(),
            }));
        }
        let mut params = Vec::new();
        for ((name, shape), entry) in expected.into_iter().zip(&ckpt.entries) {
            if entry.shape != shape {
                return Err(NetworkError::Checkpoint(CheckpointError::ShapeMismatch {
                    layer: name,
                }));
            }
            let data = entry.data.iter().map(|&v| v as f64).collect();
            params.push(Tensor::new(shape, data).map_err(NetworkError::Autodiff)?);
        }
        Ok(Self { spec: ckpt.spec.clone(), params })
    }
}

/// [F, T] tensor view of a log-spectrogram.
pub fn log_spec_tensor(x: &LogSpectrogram) -> Result<Tensor> {
    Tensor::matrix(x.f_bins(), x.frames(), x.values.clone()).map_err(NetworkError::Autodiff)
}

#[cfg(test)]
mod tests;
