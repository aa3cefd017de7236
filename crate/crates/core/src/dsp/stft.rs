use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use super::{ComplexSpectrogram, DspError, Result, StftConfig, Waveform};

/// Windowed short-time Fourier transform. Frame t covers samples
/// [t·hop, t·hop + frame_len), multiplied by the periodic Hann window and
/// zero-padded to fft_size; the returned spectrum is one-sided.
pub fn stft(w: &Waveform, cfg: &StftConfig) -> Result<ComplexSpectrogram> {
    if w.samples.len() < cfg.frame_len() {
        return Err(DspError::InvalidInput(format!(
            "input of {} samples is shorter than one frame ({})",
            w.samples.len(),
            cfg.frame_len()
        )));
    }
    let frames = cfg.num_frames(w.samples.len());
    let f_bins = cfg.num_bins();
    let window = cfg.window_values();
    let fft = FftPlanner::new().plan_fft_forward(cfg.fft_size());

    let mut bins = vec![Complex64::default(); f_bins * frames];
    let mut buf = vec![Complex64::default(); cfg.fft_size()];
    for t in 0..frames {
        let start = t * cfg.hop();
        for (i, b) in buf.iter_mut().enumerate() {
            *b = if i < cfg.frame_len() {
                Complex64::new(w.samples[start + i] * window[i], 0.0)
            } else {
                Complex64::default()
            };
        }
        fft.process(&mut buf);
        for f in 0..f_bins {
            bins[f * frames + t] = buf[f];
        }
    }
    Ok(ComplexSpectrogram {
        bins,
        frames,
        config: *cfg,
        sample_rate: w.sample_rate,
    })
}

/// Inverse STFT by weighted overlap-add with window-square normalization.
/// Output length is (T−1)·hop + frame_len; for a spectrogram straight out of
/// [`stft`] this reconstructs the input exactly away from the edges.
pub fn istft(s: &ComplexSpectrogram) -> Result<Waveform> {
    let cfg = s.config();
    let (frames, f_bins) = (s.frames, cfg.num_bins());
    let fft_size = cfg.fft_size();
    let frame_len = cfg.frame_len();
    let hop = cfg.hop();
    let out_len = (frames - 1) * hop + frame_len;
    let window = cfg.window_values();
    let ifft = FftPlanner::new().plan_fft_inverse(fft_size);

    let mut acc = vec![0.0f64; out_len];
    let mut den = vec![0.0f64; out_len];
    let mut buf = vec![Complex64::default(); fft_size];
    let scale = 1.0 / fft_size as f64;
    for t in 0..frames {
        for f in 0..f_bins {
            buf[f] = s.bins[f * frames + t];
        }
        // conjugate-symmetric completion of the one-sided spectrum
        for f in f_bins..fft_size {
            buf[f] = s.bins[(fft_size - f) * frames + t].conj();
        }
        ifft.process(&mut buf);
        let start = t * hop;
        for n in 0..frame_len {
            // real part: projection onto real signals when phases were modified
            acc[start + n] += buf[n].re * scale * window[n];
            den[start + n] += window[n] * window[n];
        }
    }

    let mut samples = vec![0.0f64; out_len];
    let interior = frame_len..out_len.saturating_sub(frame_len);
    for n in 0..out_len {
        if den[n] > 1e-12 {
            samples[n] = acc[n] / den[n];
        } else if interior.contains(&n) {
            return Err(DspError::Config(
                "overlap-add normalization vanished in the interior; window/hop are not COLA"
                    .into(),
            ));
        }
    }
    Ok(Waveform {
        samples,
        sample_rate: s.sample_rate,
    })
}
