//! The objective terms. Everything is built on the autodiff tape so the
//! values the trace reports are exactly what the optimizer differentiates.

use crate::autodiff::{NodeId, Tape, Tensor};
use crate::dsp::{self, EnvelopePair, LogSpectrogram};
use crate::network::{log_spec_tensor, Activations, Network, NetworkSpec};

use super::{Result, TransferConfig, TransferError};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub total: f64,
    pub content: f64,
    pub style: f64,
    pub temporal_env: f64,
    pub timbral_env: f64,
}

/// Precomputed constants a loss graph is built against.
pub(crate) struct LossTargets {
    /// (block index, content activation, 1/(C·H·W))
    pub content: Vec<(usize, Tensor, f64)>,
    /// (block index, style Gram, 1/(4·C²·M²)) with M the spatial size of the
    /// iterate's activation at that block.
    pub style: Vec<(usize, Tensor, f64)>,
    pub temporal: Tensor,
    pub spectral: Tensor,
    /// 1/(T·(1 + ‖e_s‖²/T)) and 1/(F·(1 + ‖t_s‖²/F)).
    pub temporal_norm: f64,
    pub spectral_norm: f64,
    pub epsilon: f64,
    pub frames: usize,
    /// Deepest conv block any selected layer needs.
    pub max_block: usize,
}

pub(crate) struct LossNodes {
    pub total: NodeId,
    pub content: NodeId,
    pub style: NodeId,
    pub temporal_env: NodeId,
    pub timbral_env: NodeId,
}

fn layer_indices(spec: &NetworkSpec, layers: &[String]) -> Result<Vec<usize>> {
    let mut out = Vec::with_capacity(layers.len());
    for id in layers {
        out.push(spec.block_index(id)?);
    }
    Ok(out)
}

fn act_norm(shape: &[usize]) -> f64 {
    1.0 / (shape[0] * shape[1] * shape[2]) as f64
}

fn gram_norm(shape: &[usize]) -> f64 {
    let c = shape[0] as f64;
    let m = (shape[1] * shape[2]) as f64;
    1.0 / (4.0 * c * c * m * m)
}

fn envelope_norm(target: &[f64]) -> f64 {
    let n = target.len() as f64;
    let sq: f64 = target.iter().map(|v| v * v).sum();
    1.0 / (n * (1.0 + sq / n))
}

impl LossTargets {
    /// Runs the network over content and style and freezes every constant the
    /// objective needs. Style envelopes are computed once here.
    pub fn prepare(
        net: &Network,
        content: &LogSpectrogram,
        style: &LogSpectrogram,
        cfg: &TransferConfig,
    ) -> Result<Self> {
        if content.f_bins() != style.f_bins() || content.frames() != style.frames() {
            return Err(TransferError::Shape(format!(
                "content is {}x{} but style is {}x{}",
                content.f_bins(),
                content.frames(),
                style.f_bins(),
                style.frames()
            )));
        }
        if content.epsilon() != style.epsilon() {
            return Err(TransferError::Shape(
                "content and style use different log floors".into(),
            ));
        }
        let content_idx = layer_indices(net.spec(), &cfg.content_layers)?;
        let style_idx = layer_indices(net.spec(), &cfg.style_layers)?;
        let max_block = content_idx.iter().chain(&style_idx).copied().max().unwrap_or(0);

        let content_acts = forward_block_acts(net, content, max_block)?;
        let style_acts = forward_block_acts(net, style, max_block)?;

        let content_targets = content_idx
            .into_iter()
            .map(|i| {
                let act = content_acts[i].clone();
                let norm = act_norm(act.shape());
                (i, act, norm)
            })
            .collect();

        let mut style_targets = Vec::with_capacity(style_idx.len());
        for i in style_idx {
            let mut tape = Tape::new();
            let a = tape.constant(style_acts[i].clone())?;
            let g = tape.gram(a)?;
            // normalization uses the iterate's spatial size, which matches the
            // content's activation shape
            style_targets.push((i, tape.value(g).clone(), gram_norm(content_acts[i].shape())));
        }

        let env = dsp::envelopes(style);
        Ok(Self {
            temporal_norm: envelope_norm(&env.temporal),
            spectral_norm: envelope_norm(&env.spectral),
            temporal: Tensor::vector(env.temporal),
            spectral: Tensor::vector(env.spectral),
            content: content_targets,
            style: style_targets,
            epsilon: content.epsilon(),
            frames: content.frames(),
            max_block,
        })
    }

    /// Assembles the objective on `tape` from a 2-D input node. Returns
    /// handles to the total and each component.
    pub fn build(
        &self,
        tape: &mut Tape,
        net: &Network,
        x: NodeId,
        weights: &super::LossWeights,
    ) -> Result<LossNodes> {
        let graph = net.build_forward(tape, x, Some(self.max_block), false)?;

        let mut content = tape.constant(Tensor::scalar(0.0))?;
        for (block, target, norm) in &self.content {
            let t = tape.constant(target.clone())?;
            let d = tape.sse(graph.block_acts[*block], t)?;
            let scaled = tape.mul_scalar(d, *norm)?;
            content = tape.add(content, scaled)?;
        }

        let mut style = tape.constant(Tensor::scalar(0.0))?;
        for (block, target_gram, norm) in &self.style {
            let g = tape.gram(graph.block_acts[*block])?;
            let t = tape.constant(target_gram.clone())?;
            let d = tape.sse(g, t)?;
            let scaled = tape.mul_scalar(d, *norm)?;
            style = tape.add(style, scaled)?;
        }

        // envelopes of the iterate, differentiable through exp
        let expd = tape.exp(x)?;
        let shifted = tape.add_scalar(expd, -self.epsilon)?;
        let mag = tape.relu(shifted)?;
        let mag_sq = tape.square(mag)?;
        let temporal = tape.sum_axis0(mag_sq)?;
        let e_s = tape.constant(self.temporal.clone())?;
        let d_e = tape.sse(temporal, e_s)?;
        let temporal_env = tape.mul_scalar(d_e, self.temporal_norm)?;

        let row_sums = tape.sum_axis1(mag)?;
        let spectral = tape.mul_scalar(row_sums, 1.0 / self.frames as f64)?;
        let t_s = tape.constant(self.spectral.clone())?;
        let d_t = tape.sse(spectral, t_s)?;
        let timbral_env = tape.mul_scalar(d_t, self.spectral_norm)?;

        let wc = tape.mul_scalar(content, weights.alpha)?;
        let ws = tape.mul_scalar(style, weights.beta)?;
        let we = tape.mul_scalar(temporal_env, weights.gamma)?;
        let wt = tape.mul_scalar(timbral_env, weights.delta)?;
        let cs = tape.add(wc, ws)?;
        let et = tape.add(we, wt)?;
        let total = tape.add(cs, et)?;

        Ok(LossNodes { total, content, style, temporal_env, timbral_env })
    }

    pub fn breakdown(&self, tape: &Tape, nodes: &LossNodes) -> LossBreakdown {
        LossBreakdown {
            total: tape.value(nodes.total).scalar_value(),
            content: tape.value(nodes.content).scalar_value(),
            style: tape.value(nodes.style).scalar_value(),
            temporal_env: tape.value(nodes.temporal_env).scalar_value(),
            timbral_env: tape.value(nodes.timbral_env).scalar_value(),
        }
    }
}

fn forward_block_acts(net: &Network, x: &LogSpectrogram, max_block: usize) -> Result<Vec<Tensor>> {
    let mut tape = Tape::new();
    let input = tape.constant(log_spec_tensor(x)?)?;
    let graph = net.build_forward(&mut tape, input, Some(max_block), false)?;
    Ok(graph
        .block_acts
        .iter()
        .map(|&id| tape.value(id).clone())
        .collect())
}

/// Σ over layers of mean-normalized squared activation distance.
pub fn content_loss(
    acts_x: &Activations,
    acts_c: &Activations,
    layers: &[String],
) -> Result<f64> {
    let mut tape = Tape::new();
    let mut total = tape.constant(Tensor::scalar(0.0))?;
    for id in layers {
        let (ax, ac) = match (acts_x.layer(id), acts_c.layer(id)) {
            (Some(a), Some(c)) => (a, c),
            _ => return Err(TransferError::Network(crate::network::NetworkError::UnknownLayer(id.clone()))),
        };
        let norm = act_norm(ax.shape());
        let a = tape.constant(ax.clone())?;
        let c = tape.constant(ac.clone())?;
        let d = tape.sse(a, c)?;
        let scaled = tape.mul_scalar(d, norm)?;
        total = tape.add(total, scaled)?;
    }
    Ok(tape.value(total).scalar_value())
}

/// Σ over layers of Gram-matrix distance, normalized by 1/(4·C²·M²) with M
/// the spatial size of x's activation.
pub fn style_loss(acts_x: &Activations, acts_s: &Activations, layers: &[String]) -> Result<f64> {
    let mut tape = Tape::new();
    let mut total = tape.constant(Tensor::scalar(0.0))?;
    for id in layers {
        let (ax, as_) = match (acts_x.layer(id), acts_s.layer(id)) {
            (Some(a), Some(s)) => (a, s),
            _ => return Err(TransferError::Network(crate::network::NetworkError::UnknownLayer(id.clone()))),
        };
        if ax.shape()[0] != as_.shape()[0] {
            return Err(TransferError::Shape(format!(
                "channel counts differ at {id}: {} vs {}",
                ax.shape()[0],
                as_.shape()[0]
            )));
        }
        let norm = gram_norm(ax.shape());
        let a = tape.constant(ax.clone())?;
        let s = tape.constant(as_.clone())?;
        let ga = tape.gram(a)?;
        let gs = tape.gram(s)?;
        let d = tape.sse(ga, gs)?;
        let scaled = tape.mul_scalar(d, norm)?;
        total = tape.add(total, scaled)?;
    }
    Ok(tape.value(total).scalar_value())
}

/// (L_e, L_t): scale-normalized envelope deviations of `x` from the style's
/// envelopes.
pub fn envelope_loss(x: &LogSpectrogram, style_env: &EnvelopePair) -> Result<(f64, f64)> {
    if style_env.temporal.len() != x.frames() || style_env.spectral.len() != x.f_bins() {
        return Err(TransferError::Shape(format!(
            "style envelopes are {}/{} but x is {}x{}",
            style_env.spectral.len(),
            style_env.temporal.len(),
            x.f_bins(),
            x.frames()
        )));
    }
    let env = dsp::envelopes(x);
    let mut tape = Tape::new();
    let temp = tape.constant(Tensor::vector(env.temporal))?;
    let e_s = tape.constant(Tensor::vector(style_env.temporal.clone()))?;
    let d_e = tape.sse(temp, e_s)?;
    let l_e = tape.mul_scalar(d_e, envelope_norm(&style_env.temporal))?;

    let spec = tape.constant(Tensor::vector(env.spectral))?;
    let t_s = tape.constant(Tensor::vector(style_env.spectral.clone()))?;
    let d_t = tape.sse(spec, t_s)?;
    let l_t = tape.mul_scalar(d_t, envelope_norm(&style_env.spectral))?;
    Ok((tape.value(l_e).scalar_value(), tape.value(l_t).scalar_value()))
}

/// α·L_c + β·L_s + γ·L_e + δ·L_t with the components reported.
pub fn total_loss(
    net: &Network,
    x: &LogSpectrogram,
    content: &LogSpectrogram,
    style: &LogSpectrogram,
    cfg: &TransferConfig,
) -> Result<LossBreakdown> {
    cfg.validate()?;
    if x.f_bins() != content.f_bins() || x.frames() != content.frames() {
        return Err(TransferError::Shape(format!(
            "x is {}x{} but content is {}x{}",
            x.f_bins(),
            x.frames(),
            content.f_bins(),
            content.frames()
        )));
    }
    let targets = LossTargets::prepare(net, content, style, cfg)?;
    let mut tape = Tape::new();
    let input = tape.constant(log_spec_tensor(x)?)?;
    let nodes = targets.build(&mut tape, net, input, &cfg.weights)?;
    Ok(targets.breakdown(&tape, &nodes))
}
