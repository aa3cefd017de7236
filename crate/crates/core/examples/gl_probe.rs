use audiostyle::dsp::*;

fn sinusoid(freq: f64, len: usize, amp: f64) -> Waveform {
    Waveform {
        samples: (0..len)
            .map(|n| amp * (std::f64::consts::TAU * freq * n as f64 / 16_000.0).sin())
            .collect(),
        sample_rate: 16_000,
    }
}

fn main() {
    let cfg = StftConfig::default();
    let w = sinusoid(1000.0, cfg.clip_len(), 0.8);
    let s = stft(&w, &cfg).unwrap();
    let f_bins = s.num_bins();
    let frames = s.frames();
    let mut data = vec![0.0; f_bins * frames];
    for f in 0..f_bins {
        for t in 0..frames {
            data[f * frames + t] = s.get(f, t).norm();
        }
    }
    let mag = Magnitude { data, f_bins, frames };
    // long-run tail behavior
    let out = griffin_lim(&mag, &cfg, 1000, 0).unwrap();
    for i in [0, 9, 49, 99, 199, 399, 699, 999] {
        println!("iter {:4}: err {:.5}", i + 1, out.error_trace[i]);
    }
}
