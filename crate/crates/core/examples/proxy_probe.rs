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

/// Energy fraction at/above `hz`, from squared linear magnitudes.
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
    // 1-partial "tuning fork" vs 12-partial "violin"
    let pure = tone_spec(&archs[0], 330.0, &cfg, 100);
    let rich = tone_spec(&archs[1], 330.0, &cfg, 101);
    println!("content(pure) high-band {:.5}", high_band_fraction(&pure, 2000.0));
    println!("style(rich)   high-band {:.5}", high_band_fraction(&rich, 2000.0));

    let ckpt = Checkpoint::load(Path::new("/tmp/probe.astc")).unwrap();
    let net = Network::from_checkpoint(&ckpt).unwrap();

    let steps: usize = std::env::args().nth(1).map(|s| s.parse().unwrap()).unwrap_or(300);
    let tcfg = TransferConfig { steps, ..Default::default() };

    let t0 = Instant::now();
    let expand = run_transfer(&net, &pure, &rich, &tcfg).unwrap();
    let dt = t0.elapsed().as_secs_f64();
    let e0 = &expand.trace.entries[0];
    let eb = &expand.trace.entries[expand.best_step];
    println!("EXPANSION: {steps} steps in {dt:.0}s ({:.2}s/step)", dt / steps as f64);
    println!("  loss {:.4} -> {:.4} (Lc {:.4} Ls {:.5} Le {:.5} Lt {:.5})",
        e0.total, eb.total, eb.content, eb.style, eb.temporal_env, eb.timbral_env);
    println!("  x_recon high-band {:.5} (content {:.5})",
        high_band_fraction(&expand.x_recon, 2000.0), high_band_fraction(&pure, 2000.0));

    let t0 = Instant::now();
    let compress = run_transfer(&net, &rich, &pure, &tcfg).unwrap();
    println!("COMPRESSION: in {:.0}s", t0.elapsed().as_secs_f64());
    let cb = &compress.trace.entries[compress.best_step];
    println!("  loss {:.4} -> {:.4}", compress.trace.entries[0].total, cb.total);
    println!("  x_recon high-band {:.5} (content {:.5})",
        high_band_fraction(&compress.x_recon, 2000.0), high_band_fraction(&rich, 2000.0));
}
