//! The four-term spectrogram objective and its optimizer: drive a
//! log-spectrogram from Gaussian noise toward the content's activations, the
//! style's Gram matrices, and the style's temporal and timbral envelopes,
//! then render audio with Griffin-Lim.

mod losses;
mod optimize;

pub use losses::{content_loss, envelope_loss, style_loss, total_loss, LossBreakdown};
pub use optimize::{init_input, run_transfer, TransferOutcome};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::AutodiffError;
use crate::dsp::{DspError, GriffinLimResult, LogSpectrogram};
use crate::network::NetworkError;
use crate::training::AdamConfig;

#[derive(Debug, Error)]
pub enum TransferError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite loss at step {step}")]
    Numeric { step: usize },
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error(transparent)]
    Dsp(#[from] DspError),
}

pub type Result<T> = std::result::Result<T, TransferError>;

/// The objective weights α, β, γ, δ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub delta: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { alpha: 1.0, beta: 10.0, gamma: 0.1, delta: 0.1 }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [self.alpha, self.beta, self.gamma, self.delta];
        if all.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(TransferError::Config(format!(
                "loss weights must be finite and nonnegative, got {all:?}"
            )));
        }
        if all.iter().all(|&w| w == 0.0) {
            return Err(TransferError::Config("at least one loss weight must be positive".into()));
        }
        Ok(())
    }
}

/// Everything `run_transfer` needs: weights, layer selections, step budget,
/// optimizer constants, and the seeds that make a run reproducible.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferConfig {
    pub weights: LossWeights,
    pub content_layers: Vec<String>,
    pub style_layers: Vec<String>,
    pub steps: usize,
    pub adam: AdamConfig,
    /// Seed of the Gaussian init (statistics come from the content).
    pub init_seed: u64,
    pub griffin_lim_iters: usize,
    /// Seed of Griffin-Lim's random initial phase.
    pub phase_seed: u64,
}

impl Default for TransferConfig {
    fn default() -> Self {
        Self {
            weights: LossWeights::default(),
            content_layers: vec!["block3".into()],
            style_layers: vec!["block1".into(), "block2".into(), "block3".into()],
            steps: 1000,
            adam: AdamConfig::for_transfer(),
            init_seed: 0,
            griffin_lim_iters: 100,
            phase_seed: 0,
        }
    }
}

impl TransferConfig {
    pub fn validate(&self) -> Result<()> {
        self.weights.validate()?;
        if self.steps == 0 {
            return Err(TransferError::Config("steps must be at least 1".into()));
        }
        if self.griffin_lim_iters == 0 {
            return Err(TransferError::Config("griffin_lim_iters must be at least 1".into()));
        }
        self.adam.validate().map_err(TransferError::Config)?;
        if self.content_layers.is_empty() && self.style_layers.is_empty() {
            return Err(TransferError::Config(
                "at least one content or style layer must be selected".into(),
            ));
        }
        Ok(())
    }
}

/// Per-step loss components along a transfer run.
#[derive(Debug, Clone)]
pub struct TransferTrace {
    pub entries: Vec<LossBreakdown>,
}

impl TransferTrace {
    /// CSV with header `step,total,Lc,Ls,Le,Lt`; step indexes the iterate the
    /// loss was evaluated at, starting from the initial noise at step 0.
    pub fn write_csv<W: std::io::Write>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(out, "step,total,Lc,Ls,Le,Lt")?;
        for (step, e) in self.entries.iter().enumerate() {
            writeln!(
                out,
                "{step},{},{},{},{},{}",
                e.total, e.content, e.style, e.temporal_env, e.timbral_env
            )?;
        }
        Ok(())
    }

    pub fn best_step(&self) -> usize {
        self.entries
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total.total_cmp(&b.1.total))
            .map(|(i, _)| i)
            .unwrap_or(0)
    }
}

/// Griffin-Lim reconstruction of an optimized log-spectrogram.
pub fn render(x: &LogSpectrogram, cfg: &TransferConfig) -> Result<GriffinLimResult> {
    let mag = crate::dsp::linear_magnitude(x);
    Ok(crate::dsp::griffin_lim(
        &mag,
        x.config(),
        cfg.griffin_lim_iters,
        cfg.phase_seed,
    )?)
}

#[cfg(test)]
mod tests;
