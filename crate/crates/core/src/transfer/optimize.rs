use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::autodiff::{AutodiffError, Tape};
use crate::dsp::LogSpectrogram;
use crate::network::{log_spec_tensor, Network};
use crate::training::{adam_step, AdamState};

use super::losses::LossTargets;
use super::{Result, TransferConfig, TransferError, TransferTrace};

/// Result of a transfer run: the best-loss iterate, the Gaussian init it
/// started from, and the full loss trace.
#[derive(Debug, Clone)]
pub struct TransferOutcome {
    pub x_recon: LogSpectrogram,
    pub x_init: LogSpectrogram,
    pub trace: TransferTrace,
    /// Step whose iterate became `x_recon`.
    pub best_step: usize,
}

/// Gaussian init with the statistics of `stats_source`, clamped at the log
/// floor.
pub fn init_input(
    f_bins: usize,
    frames: usize,
    stats_source: &LogSpectrogram,
    seed: u64,
) -> Result<LogSpectrogram> {
    let values = &stats_source.values;
    let n = values.len() as f64;
    let mean: f64 = values.iter().sum::<f64>() / n;
    let var: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    let floor = stats_source.floor();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(mean, std.max(f64::MIN_POSITIVE))
        .map_err(|e| TransferError::Config(format!("degenerate init statistics: {e}")))?;
    let data: Vec<f64> = (0..f_bins * frames)
        .map(|_| normal.sample(&mut rng).max(floor))
        .collect();
    Ok(LogSpectrogram::from_values(
        data,
        f_bins,
        frames,
        *stats_source.config(),
        stats_source.epsilon(),
    )?)
}

/// Adam on the input spectrogram for `cfg.steps` steps. The trace records the
/// loss at each evaluated iterate (step 0 is the init); the returned
/// spectrogram is the best-loss iterate, not necessarily the last. Iterates
/// stay at or above the log floor by projection after each update.
pub fn run_transfer(
    net: &Network,
    content: &LogSpectrogram,
    style: &LogSpectrogram,
    cfg: &TransferConfig,
) -> Result<TransferOutcome> {
    cfg.validate()?;
    let targets = LossTargets::prepare(net, content, style, cfg)?;
    let floor = content.floor();

    let x_init = init_input(content.f_bins(), content.frames(), content, cfg.init_seed)?;
    let mut x = log_spec_tensor(&x_init)?;

    let mut state = AdamState::for_params(std::slice::from_ref(&x));
    let mut trace = TransferTrace { entries: Vec::with_capacity(cfg.steps) };
    let mut best: Option<(f64, Vec<f64>, usize)> = None;

    for step in 0..cfg.steps {
        let mut tape = Tape::new();
        let input = tape
            .leaf(x.clone(), true)
            .map_err(|e| numeric_or(e, step))?;
        let nodes = targets
            .build(&mut tape, net, input, &cfg.weights)
            .map_err(|e| match e {
                TransferError::Autodiff(inner) => numeric_or(inner, step),
                other => other,
            })?;
        let breakdown = targets.breakdown(&tape, &nodes);
        if !breakdown.total.is_finite() {
            return Err(TransferError::Numeric { step });
        }
        if best.as_ref().is_none_or(|(b, _, _)| breakdown.total < *b) {
            best = Some((breakdown.total, x.data().to_vec(), step));
        }
        trace.entries.push(breakdown);

        let grads = tape.backward(nodes.total).map_err(|e| numeric_or(e, step))?;
        let grad = grads.get_or_zeros(input);
        let mut params = [x];
        adam_step(&mut params, &[grad], &mut state, &cfg.adam, step + 1)
            .map_err(|e| TransferError::Config(e.to_string()))?;
        let [updated] = params;
        x = updated;
        for v in x.data_mut() {
            if *v < floor {
                *v = floor;
            }
        }
    }

    let (_, best_values, best_step) = best.expect("steps >= 1");
    let x_recon = LogSpectrogram::from_values(
        best_values,
        content.f_bins(),
        content.frames(),
        *content.config(),
        content.epsilon(),
    )?;
    Ok(TransferOutcome { x_recon, x_init, trace, best_step })
}

fn numeric_or(e: AutodiffError, step: usize) -> TransferError {
    match e {
        AutodiffError::NonFinite { .. } | AutodiffError::NonFiniteGradient { .. } => {
            TransferError::Numeric { step }
        }
        other => TransferError::Autodiff(other),
    }
}
