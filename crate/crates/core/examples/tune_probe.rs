use audiostyle::dsp::*;
use audiostyle::network::{Checkpoint, Network};
use audiostyle::training::{default_archetypes, synth_tone, Archetype};
use audiostyle::transfer::*;
use std::path::Path;
use std::time::Instant;

fn tone_spec(arch: &Archetype, f0: f64, cfg: &StftConfig, seed: u64) -> LogSpectrogram {
    let w = synth_tone(arch, f0, cfg.clip_len(), seed);
    log_magnitude(&stft(&w, cfg).unwrap(), 1e-6).unwrap()
}

fn high_band_fraction(x: &LogSpectrogram, hz: f64) -> f64 {
    let m = linear_magnitude(x);
    let cfg = x.config();
    let cutoff_bin = (hz * cfg.fft_size() as f64 / 16000.0).ceil() as usize;
    let mut high = 0.0;
    let mut total = 0.0;
    for f in 0..m.f_bins {
        for t in 0..m.frames {
            let e = m.get(f, t) * m.get(f, t);
            total += e;
            if f >= cutoff_bin {
                high += e;
            }
        }
    }
    high / total
}

fn main() {
    let cfg = StftConfig::default();
    let archs = default_archetypes();
    let pure = tone_spec(&archs[0], 330.0, &cfg, 100);
    let rich = tone_spec(&archs[1], 330.0, &cfg, 101);
    let ckpt = Checkpoint::load(Path::new("/tmp/probe.astc")).unwrap();
    let net = Network::from_checkpoint(&ckpt).unwrap();

    let settings: Vec<(f64, f64, f64, f64, usize)> = vec![
        (1.0, 10.0, 1.0, 1.0, 500),
        (1.0, 10.0, 10.0, 10.0, 500),
        (1.0, 1.0, 1.0, 1.0, 500),
    ];
    for (alpha, beta, gamma, delta, steps) in settings {
        let tcfg = TransferConfig {
            weights: LossWeights { alpha, beta, gamma, delta },
            steps,
            ..Default::default()
        };
        let t0 = Instant::now();
        let out = run_transfer(&net, &rich, &pure, &tcfg).unwrap();
        let b = &out.trace.entries[out.best_step];
        println!(
            "compress w=({alpha},{beta},{gamma},{delta}) {steps} steps [{:.0}s]: total {:.3} Lc {:.3} Ls {:.4} Le {:.4} Lt {:.4} | high-band {:.4} (content {:.4})",
            t0.elapsed().as_secs_f64(), b.total, b.content, b.style, b.temporal_env, b.timbral_env,
            high_band_fraction(&out.x_recon, 2000.0), high_band_fraction(&rich, 2000.0)
        );
    }
}
