use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dsp::{log_magnitude, stft, LogSpectrogram, StftConfig, Waveform, DEFAULT_EPSILON};
use crate::PIPELINE_SAMPLE_RATE;

use super::{Result, TrainError};

const VIBRATO_RATE_HZ: f64 = 5.5;
const PEAK_AMPLITUDE: f64 = 0.5;

/// One class of instrument-like tones for the synthetic corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct Archetype {
    pub name: String,
    pub num_partials: usize,
    /// Partial k gets amplitude k^(−this).
    pub partial_decay_exponent: f64,
    /// Peak relative frequency deviation of the 5.5 Hz vibrato.
    pub vibrato_depth: f64,
    pub attack_ms: f64,
    /// Amplitude e-folding rate of the post-attack decay; 0 sustains.
    pub decay_per_s: f64,
    /// White-noise floor amplitude.
    pub noise_floor: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthCorpusConfig {
    pub num_classes: usize,
    pub clips_per_class: usize,
    pub seed: u64,
    pub archetypes: Vec<Archetype>,
}

impl Default for SynthCorpusConfig {
    fn default() -> Self {
        Self {
            num_classes: 4,
            clips_per_class: 64,
            seed: 0,
            archetypes: default_archetypes(),
        }
    }
}

/// Four archetypes mirroring the tones the transfer experiments use:
/// a pure tuning fork, a sustained harmonic-rich bow, a decaying pluck,
/// and a vibrato-heavy formant-ish voice.
pub fn default_archetypes() -> Vec<Archetype> {
    vec![
        Archetype {
            name: "tuning_fork".into(),
            num_partials: 1,
            partial_decay_exponent: 0.0,
            vibrato_depth: 0.0,
            attack_ms: 1.0,
            decay_per_s: 0.5,
            noise_floor: 0.0005,
        },
        Archetype {
            name: "violin".into(),
            num_partials: 12,
            partial_decay_exponent: 1.0,
            vibrato_depth: 0.006,
            attack_ms: 60.0,
            decay_per_s: 0.0,
            noise_floor: 0.001,
        },
        Archetype {
            name: "harp".into(),
            num_partials: 8,
            partial_decay_exponent: 1.4,
            vibrato_depth: 0.0,
            attack_ms: 2.0,
            decay_per_s: 2.5,
            noise_floor: 0.0005,
        },
        Archetype {
            name: "voice".into(),
            num_partials: 6,
            partial_decay_exponent: 0.6,
            vibrato_depth: 0.015,
            attack_ms: 40.0,
            decay_per_s: 0.2,
            noise_floor: 0.002,
        },
    ]
}

impl SynthCorpusConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(TrainError::Config(format!(
                "num_classes must be at least 2, got {}",
                self.num_classes
            )));
        }
        if self.clips_per_class < 2 {
            return Err(TrainError::Config(format!(
                "clips_per_class must be at least 2, got {}",
                self.clips_per_class
            )));
        }
        if self.archetypes.len() != self.num_classes {
            return Err(TrainError::Config(format!(
                "{} archetypes for {} classes",
                self.archetypes.len(),
                self.num_classes
            )));
        }
        for i in 0..self.archetypes.len() {
            for j in i + 1..self.archetypes.len() {
                if self.archetypes[i] == self.archetypes[j] {
                    return Err(TrainError::Config(format!(
                        "archetypes {i} and {j} are identical"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn class_names(&self) -> Vec<String> {
        self.archetypes.iter().map(|a| a.name.clone()).collect()
    }
}

/// Additive-synthesis tone: partial k at k·f0 with amplitude k^(−decay_exp),
/// attack/decay envelope, vibrato, and a seeded noise floor. Peak-normalized.
pub fn synth_tone(arch: &Archetype, f0: f64, num_samples: usize, seed: u64) -> Waveform {
    let sr = PIPELINE_SAMPLE_RATE as f64;
    let nyquist_guard = 0.95 * sr / 2.0;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let partials: Vec<(f64, f64)> = (1..=arch.num_partials.max(1))
        .map(|k| (k as f64, (k as f64).powf(-arch.partial_decay_exponent)))
        .filter(|&(k, _)| k * f0 * (1.0 + arch.vibrato_depth) < nyquist_guard)
        .collect();
    let amp_total: f64 = partials.iter().map(|(_, a)| a).sum();

    let attack_samples = (arch.attack_ms * 1e-3 * sr).max(1.0);
    let mut phases = vec![0.0f64; partials.len()];
    let mut samples = Vec::with_capacity(num_samples);
    let mut peak = 0.0f64;
    for n in 0..num_samples {
        let t = n as f64 / sr;
        let vib = 1.0 + arch.vibrato_depth * (std::f64::consts::TAU * VIBRATO_RATE_HZ * t).sin();
        let mut v = 0.0;
        for ((k, a), ph) in partials.iter().zip(phases.iter_mut()) {
            v += a * ph.sin();
            *ph += std::f64::consts::TAU * k * f0 * vib / sr;
        }
        if amp_total > 0.0 {
            v /= amp_total;
        }
        let env = (n as f64 / attack_samples).min(1.0) * (-arch.decay_per_s * t).exp();
        v = v * env + arch.noise_floor * rng.random_range(-1.0..1.0);
        peak = peak.max(v.abs());
        samples.push(v);
    }
    if peak > 0.0 {
        let scale = PEAK_AMPLITUDE / peak;
        for s in &mut samples {
            *s *= scale;
        }
    }
    Waveform {
        samples,
        sample_rate: PIPELINE_SAMPLE_RATE,
    }
}

/// Labeled clips: `clips_per_class` tones per archetype with log-uniform
/// fundamentals in [110, 880] Hz, analyzed at `stft_cfg`. Bit-deterministic
/// given the seed.
pub fn synth_corpus(
    cfg: &SynthCorpusConfig,
    stft_cfg: &StftConfig,
) -> Result<Vec<(LogSpectrogram, usize)>> {
    cfg.validate()?;
    let mut out = Vec::with_capacity(cfg.num_classes * cfg.clips_per_class);
    for (label, arch) in cfg.archetypes.iter().enumerate() {
        for clip in 0..cfg.clips_per_class {
            let clip_seed = mix_seed(cfg.seed, label as u64, clip as u64);
            let mut rng = ChaCha8Rng::seed_from_u64(clip_seed);
            let f0 = 110.0 * (880.0f64 / 110.0).powf(rng.random_range(0.0..1.0));
            let tone = synth_tone(arch, f0, stft_cfg.clip_len(), clip_seed ^ 0x9e37);
            let spec = stft(&tone, stft_cfg)?;
            out.push((log_magnitude(&spec, DEFAULT_EPSILON)?, label));
        }
    }
    Ok(out)
}

/// SplitMix64-style mixing so per-clip seeds are order-independent.
fn mix_seed(seed: u64, a: u64, b: u64) -> u64 {
    let mut z = seed
        .wrapping_add(a.wrapping_mul(0x9e3779b97f4a7c15))
        .wrapping_add(b.wrapping_mul(0xbf58476d1ce4e5b9));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}
