//! Deterministic signal analysis and synthesis: framing, windowed STFT/ISTFT,
//! log-magnitude mapping, Griffin-Lim phase retrieval, and energy envelopes.

mod griffin_lim;
mod stft;

pub use griffin_lim::{griffin_lim, GriffinLimResult};
pub use stft::{istft, stft};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::PIPELINE_SAMPLE_RATE;

#[derive(Debug, Error)]
pub enum DspError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("invalid config: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, DspError>;

/// Default log floor: values are ln(|S| + EPSILON), bounded below by ln(EPSILON).
pub const DEFAULT_EPSILON: f64 = 1e-6;

/// Mono PCM samples with their rate.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(DspError::InvalidInput("sample_rate must be positive".into()));
        }
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(DspError::InvalidInput("non-finite sample".into()));
        }
        Ok(Self { samples, sample_rate })
    }

    /// Zero-pad at the tail or truncate to exactly `len` samples.
    pub fn fit_to_length(mut self, len: usize) -> Self {
        self.samples.resize(len, 0.0);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WindowKind {
    PeriodicHann,
}

/// Analysis/synthesis framing parameters.
///
/// Defaults are 30 ms frames, 10 ms hop, FFT 512 at 16 kHz, clip 2.57 s —
/// i.e. 480/160/512/41120 samples. The hop must divide the frame length so
/// the squared periodic Hann window satisfies constant overlap-add.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StftConfig {
    frame_len: usize,
    hop: usize,
    fft_size: usize,
    window: WindowKind,
    clip_len: usize,
}

impl Default for StftConfig {
    fn default() -> Self {
        Self {
            frame_len: 480,
            hop: 160,
            fft_size: 512,
            window: WindowKind::PeriodicHann,
            clip_len: 41_120,
        }
    }
}

impl StftConfig {
    pub fn new(frame_len: usize, hop: usize, fft_size: usize, clip_len: usize) -> Result<Self> {
        if frame_len == 0 || hop == 0 {
            return Err(DspError::Config("frame_len and hop must be positive".into()));
        }
        if frame_len % hop != 0 {
            return Err(DspError::Config(format!(
                "hop {hop} must divide frame_len {frame_len} for overlap-add inversion"
            )));
        }
        if fft_size < frame_len {
            return Err(DspError::Config(format!(
                "fft_size {fft_size} must be at least frame_len {frame_len}"
            )));
        }
        if !fft_size.is_power_of_two() {
            return Err(DspError::Config(format!("fft_size {fft_size} must be a power of two")));
        }
        if clip_len < frame_len {
            return Err(DspError::Config(format!(
                "clip_len {clip_len} must be at least frame_len {frame_len}"
            )));
        }
        Ok(Self {
            frame_len,
            hop,
            fft_size,
            window: WindowKind::PeriodicHann,
            clip_len,
        })
    }

    pub fn frame_len(&self) -> usize {
        self.frame_len
    }

    pub fn hop(&self) -> usize {
        self.hop
    }

    pub fn fft_size(&self) -> usize {
        self.fft_size
    }

    pub fn clip_len(&self) -> usize {
        self.clip_len
    }

    pub fn window(&self) -> WindowKind {
        self.window
    }

    /// One-sided bin count F = fft_size/2 + 1.
    pub fn num_bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    /// Frames covering `len` samples: T = 1 + ⌊(len − frame_len)/hop⌋.
    pub fn num_frames(&self, len: usize) -> usize {
        debug_assert!(len >= self.frame_len);
        1 + (len - self.frame_len) / self.hop
    }

    /// Frames of a clip-length input.
    pub fn clip_frames(&self) -> usize {
        self.num_frames(self.clip_len)
    }

    /// Periodic Hann: w[n] = 0.5 − 0.5·cos(2πn/frame_len).
    pub fn window_values(&self) -> Vec<f64> {
        let n = self.frame_len as f64;
        (0..self.frame_len)
            .map(|i| 0.5 - 0.5 * (std::f64::consts::TAU * i as f64 / n).cos())
            .collect()
    }
}

/// One-sided complex STFT, F×T row-major.
#[derive(Debug, Clone)]
pub struct ComplexSpectrogram {
    pub(crate) bins: Vec<rustfft::num_complex::Complex64>,
    pub(crate) frames: usize,
    config: StftConfig,
    sample_rate: u32,
}

impl ComplexSpectrogram {
    pub fn config(&self) -> &StftConfig {
        &self.config
    }

    pub fn num_bins(&self) -> usize {
        self.config.num_bins()
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn get(&self, f: usize, t: usize) -> rustfft::num_complex::Complex64 {
        self.bins[f * self.frames + t]
    }
}

/// F×T log-magnitudes: values[f,t] = ln(|S[f,t]| + epsilon).
#[derive(Debug, Clone, PartialEq)]
pub struct LogSpectrogram {
    pub values: Vec<f64>,
    f_bins: usize,
    frames: usize,
    config: StftConfig,
    epsilon: f64,
}

impl LogSpectrogram {
    /// Wraps raw values; used when loading from files or optimizing in place.
    /// The floor invariant (entries ≥ ln(epsilon)) is enforced here.
    pub fn from_values(
        values: Vec<f64>,
        f_bins: usize,
        frames: usize,
        config: StftConfig,
        epsilon: f64,
    ) -> Result<Self> {
        if values.len() != f_bins * frames {
            return Err(DspError::InvalidInput(format!(
                "expected {}x{} = {} values, got {}",
                f_bins,
                frames,
                f_bins * frames,
                values.len()
            )));
        }
        if epsilon <= 0.0 {
            return Err(DspError::InvalidInput(format!("epsilon must be positive, got {epsilon}")));
        }
        let floor = epsilon.ln();
        if values.iter().any(|v| !v.is_finite() || *v < floor) {
            return Err(DspError::InvalidInput(format!(
                "log-magnitudes must be finite and at least the floor {floor}"
            )));
        }
        Ok(Self { values, f_bins, frames, config, epsilon })
    }

    pub fn f_bins(&self) -> usize {
        self.f_bins
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn config(&self) -> &StftConfig {
        &self.config
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// Log floor ln(epsilon): the smallest representable value.
    pub fn floor(&self) -> f64 {
        self.epsilon.ln()
    }

    pub fn get(&self, f: usize, t: usize) -> f64 {
        self.values[f * self.frames + t]
    }
}

/// F×T nonnegative linear magnitudes.
#[derive(Debug, Clone, PartialEq)]
pub struct Magnitude {
    pub data: Vec<f64>,
    pub f_bins: usize,
    pub frames: usize,
}

impl Magnitude {
    pub fn get(&self, f: usize, t: usize) -> f64 {
        self.data[f * self.frames + t]
    }
}

/// Per-frame energy and time-averaged per-bin magnitude.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvelopePair {
    /// temporal[t] = Σ_f M[f,t]²
    pub temporal: Vec<f64>,
    /// spectral[f] = (1/T)·Σ_t M[f,t]
    pub spectral: Vec<f64>,
}

/// values[f,t] = ln(|bins[f,t]| + epsilon).
pub fn log_magnitude(s: &ComplexSpectrogram, epsilon: f64) -> Result<LogSpectrogram> {
    if epsilon <= 0.0 {
        return Err(DspError::InvalidInput(format!("epsilon must be positive, got {epsilon}")));
    }
    let values = s.bins.iter().map(|c| (c.norm() + epsilon).ln()).collect();
    LogSpectrogram::from_values(values, s.num_bins(), s.frames, s.config, epsilon)
}

/// M[f,t] = max(exp(values[f,t]) − epsilon, 0): the inverse of [`log_magnitude`]
/// on positive magnitudes. Values at the log floor map to exactly 0 (f64
/// exp∘ln would leave ~1e-22 residue there).
pub fn linear_magnitude(x: &LogSpectrogram) -> Magnitude {
    let eps = x.epsilon;
    let floor = x.floor();
    Magnitude {
        data: x
            .values
            .iter()
            .map(|&v| if v <= floor { 0.0 } else { (v.exp() - eps).max(0.0) })
            .collect(),
        f_bins: x.f_bins,
        frames: x.frames,
    }
}

/// Temporal energy contour and time-averaged timbral envelope of `x`.
pub fn envelopes(x: &LogSpectrogram) -> EnvelopePair {
    let m = linear_magnitude(x);
    let (f_bins, frames) = (m.f_bins, m.frames);
    let mut temporal = vec![0.0; frames];
    let mut spectral = vec![0.0; f_bins];
    for f in 0..f_bins {
        let row = &m.data[f * frames..(f + 1) * frames];
        let mut row_sum = 0.0;
        for (t, &v) in row.iter().enumerate() {
            temporal[t] += v * v;
            row_sum += v;
        }
        spectral[f] = row_sum / frames as f64;
    }
    EnvelopePair { temporal, spectral }
}

/// Waveform of `clip_len` zeros at the pipeline rate.
pub fn silence(cfg: &StftConfig) -> Waveform {
    Waveform {
        samples: vec![0.0; cfg.clip_len()],
        sample_rate: PIPELINE_SAMPLE_RATE,
    }
}
