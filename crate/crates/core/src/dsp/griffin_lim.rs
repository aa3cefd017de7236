use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex64;

use super::{istft, stft, ComplexSpectrogram, DspError, Magnitude, Result, StftConfig, Waveform};
use crate::PIPELINE_SAMPLE_RATE;

/// Waveform recovered from a magnitude target, with the per-iteration
/// consistency errors ‖|stft(out)| − mag‖_F / ‖mag‖_F.
#[derive(Debug, Clone)]
pub struct GriffinLimResult {
    pub waveform: Waveform,
    pub consistency_error: f64,
    pub error_trace: Vec<f64>,
}

/// Alternating-projection phase retrieval: synthesize with the current phase,
/// re-analyze, keep the new phase. The initial phase is uniform [0, 2π) from
/// the seed.
pub fn griffin_lim(
    mag: &Magnitude,
    cfg: &StftConfig,
    iters: usize,
    seed: u64,
) -> Result<GriffinLimResult> {
    if iters == 0 {
        return Err(DspError::InvalidInput("iters must be at least 1".into()));
    }
    if mag.f_bins != cfg.num_bins() {
        return Err(DspError::InvalidInput(format!(
            "magnitude has {} bins but config implies {}",
            mag.f_bins,
            cfg.num_bins()
        )));
    }
    for &v in &mag.data {
        if !v.is_finite() || v < 0.0 {
            return Err(DspError::InvalidInput(format!(
                "magnitude entries must be finite and nonnegative, got {v}"
            )));
        }
    }

    let mag_norm = mag.data.iter().map(|v| v * v).sum::<f64>().sqrt();
    let (f_bins, frames) = (mag.f_bins, mag.frames);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut phase: Vec<f64> = (0..f_bins * frames)
        .map(|_| rng.random_range(0.0..std::f64::consts::TAU))
        .collect();

    let mut waveform = None;
    let mut error_trace = Vec::with_capacity(iters);
    for _ in 0..iters {
        let spec = ComplexSpectrogram {
            bins: mag
                .data
                .iter()
                .zip(&phase)
                .map(|(&m, &p)| Complex64::from_polar(m, p))
                .collect(),
            frames,
            config: *cfg,
            sample_rate: PIPELINE_SAMPLE_RATE,
        };
        let w = istft(&spec)?;
        let reanalyzed = stft(&w, cfg)?;
        let mut err_sq = 0.0;
        for (bin, (&target, p)) in reanalyzed
            .bins
            .iter()
            .zip(mag.data.iter().zip(phase.iter_mut()))
        {
            let (r, theta) = bin.to_polar();
            let d = r - target;
            err_sq += d * d;
            *p = theta;
        }
        error_trace.push(if mag_norm > 0.0 { err_sq.sqrt() / mag_norm } else { 0.0 });
        waveform = Some(w);
    }
    Ok(GriffinLimResult {
        waveform: waveform.expect("iters >= 1"),
        consistency_error: *error_trace.last().expect("iters >= 1"),
        error_trace,
    })
}
