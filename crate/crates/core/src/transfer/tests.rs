use super::*;
use crate::autodiff::{grad_check, Tensor};
use crate::dsp::{log_magnitude, stft, EnvelopePair, StftConfig, Waveform};
use crate::network::{Activations, ConvBlockSpec, Network, NetworkSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn tiny_stft() -> StftConfig {
    // 33 bins × 16 frames
    StftConfig::new(60, 20, 64, 360).unwrap()
}

fn tiny_net(seed: u64) -> Network {
    let spec = NetworkSpec {
        conv_blocks: vec![
            ConvBlockSpec { out_channels: 4, pool: true },
            ConvBlockSpec { out_channels: 8, pool: true },
            ConvBlockSpec { out_channels: 8, pool: true },
        ],
        hidden_units: 16,
        num_classes: 3,
    };
    Network::build(spec, seed).unwrap()
}

fn tiny_cfg() -> TransferConfig {
    TransferConfig {
        content_layers: vec!["block2".into()],
        style_layers: vec!["block1".into(), "block2".into()],
        steps: 40,
        ..Default::default()
    }
}

fn random_log_spec(seed: u64) -> LogSpectrogram {
    let cfg = tiny_stft();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = Waveform {
        samples: (0..cfg.clip_len()).map(|_| rng.random_range(-0.8..0.8)).collect(),
        sample_rate: 16_000,
    };
    log_magnitude(&stft(&w, &cfg).unwrap(), 1e-6).unwrap()
}

fn acts_of(tensors: Vec<(&str, Tensor)>) -> Activations {
    Activations {
        per_layer: tensors.into_iter().map(|(n, t)| (n.to_string(), t)).collect(),
        logits: Tensor::vector(vec![0.0, 0.0]),
    }
}

#[test]
fn content_loss_zero_on_identical_activations() {
    let net = tiny_net(0);
    let x = random_log_spec(1);
    let acts = net.forward(&x, true).unwrap();
    let loss = content_loss(&acts, &acts, &["block1".into(), "block2".into()]).unwrap();
    assert_eq!(loss, 0.0);
}

#[test]
fn content_loss_all_ones_difference() {
    let a = acts_of(vec![("block1", Tensor::filled(&[2, 2, 2], 1.5))]);
    let c = acts_of(vec![("block1", Tensor::filled(&[2, 2, 2], 0.5))]);
    let loss = content_loss(&a, &c, &["block1".into()]).unwrap();
    assert!((loss - 1.0).abs() < 1e-15, "got {loss}");
}

#[test]
fn content_loss_matches_loop_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let shape = [3usize, 4, 5];
    let mk = |rng: &mut ChaCha8Rng| {
        Tensor::new(
            shape.to_vec(),
            (0..60).map(|_| rng.random_range(-1.0..1.0)).collect(),
        )
        .unwrap()
    };
    let ax = mk(&mut rng);
    let ac = mk(&mut rng);
    let got = content_loss(
        &acts_of(vec![("block1", ax.clone())]),
        &acts_of(vec![("block1", ac.clone())]),
        &["block1".into()],
    )
    .unwrap();
    let mut oracle = 0.0;
    for i in 0..60 {
        let d = ax.data()[i] - ac.data()[i];
        oracle += d * d;
    }
    oracle /= 60.0;
    assert!((got - oracle).abs() <= 1e-12 * oracle.abs().max(1.0));
}

#[test]
fn style_loss_zero_on_identical_and_hand_case() {
    let net = tiny_net(1);
    let x = random_log_spec(2);
    let acts = net.forward(&x, true).unwrap();
    assert_eq!(style_loss(&acts, &acts, &["block1".into()]).unwrap(), 0.0);

    // C=1, 2×2 spatial: G(x) = 4, G(s) = 0 → (1/(4·1·16))·16 = 0.25
    let a = acts_of(vec![("block1", Tensor::filled(&[1, 2, 2], 1.0))]);
    let s = acts_of(vec![("block1", Tensor::filled(&[1, 2, 2], 0.0))]);
    let loss = style_loss(&a, &s, &["block1".into()]).unwrap();
    assert!((loss - 0.25).abs() < 1e-15, "got {loss}");
}

#[test]
fn style_loss_invariant_under_spatial_permutation() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let data: Vec<f64> = (0..2 * 6).map(|_| rng.random_range(-1.0..1.0)).collect();
    let base = Tensor::new(vec![2, 2, 3], data.clone()).unwrap();
    // permute the 6 spatial positions identically in both channels
    let perm = [5usize, 2, 0, 4, 1, 3];
    let mut permuted = vec![0.0; 12];
    for c in 0..2 {
        for (dst, &src) in perm.iter().enumerate() {
            permuted[c * 6 + dst] = data[c * 6 + src];
        }
    }
    let shuffled = Tensor::new(vec![2, 2, 3], permuted).unwrap();
    let style = acts_of(vec![("block1", random_tensor_like())]);
    let l1 = style_loss(&acts_of(vec![("block1", base)]), &style, &["block1".into()]).unwrap();
    let l2 = style_loss(&acts_of(vec![("block1", shuffled)]), &style, &["block1".into()]).unwrap();
    // permutation reorders the Gram summation, so equality holds to rounding
    assert!((l1 - l2).abs() <= 1e-14 * l1.abs().max(1.0), "{l1} vs {l2}");
}

fn random_tensor_like() -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    Tensor::new(
        vec![2, 2, 3],
        (0..12).map(|_| rng.random_range(-1.0..1.0)).collect(),
    )
    .unwrap()
}

#[test]
fn style_loss_rejects_channel_mismatch() {
    let a = acts_of(vec![("block1", Tensor::filled(&[2, 2, 2], 1.0))]);
    let s = acts_of(vec![("block1", Tensor::filled(&[3, 2, 2], 1.0))]);
    assert!(matches!(
        style_loss(&a, &s, &["block1".into()]),
        Err(TransferError::Shape(_))
    ));
}

#[test]
fn envelope_loss_zero_when_envelopes_match() {
    let x = random_log_spec(3);
    let env = crate::dsp::envelopes(&x);
    let (le, lt) = envelope_loss(&x, &env).unwrap();
    assert_eq!((le, lt), (0.0, 0.0));
}

#[test]
fn envelope_loss_unit_case() {
    // F=1, T=2, M = 1 per cell: temporal = [1,1]; e_s = 0 → L_e = 1.0.
    let cfg = tiny_stft();
    let eps = 1e-6f64;
    let v = (1.0 + eps).ln();
    let x = LogSpectrogram::from_values(vec![v, v], 1, 2, cfg, eps).unwrap();
    let style_env = EnvelopePair {
        temporal: vec![0.0, 0.0],
        spectral: vec![1.0],
    };
    let (le, lt) = envelope_loss(&x, &style_env).unwrap();
    assert!((le - 1.0).abs() < 1e-12, "L_e = {le}");
    assert!(lt.abs() < 1e-12, "L_t = {lt}");
}

#[test]
fn envelope_loss_matches_loop_oracle() {
    let x = random_log_spec(4);
    let style = random_log_spec(5);
    let style_env = crate::dsp::envelopes(&style);
    let (le, lt) = envelope_loss(&x, &style_env).unwrap();

    let env_x = crate::dsp::envelopes(&x);
    let t = x.frames() as f64;
    let f = x.f_bins() as f64;
    let mut d_e = 0.0;
    for (a, b) in env_x.temporal.iter().zip(&style_env.temporal) {
        d_e += (a - b) * (a - b);
    }
    let es_sq: f64 = style_env.temporal.iter().map(|v| v * v).sum();
    let oracle_le = d_e / t / (1.0 + es_sq / t);
    let mut d_t = 0.0;
    for (a, b) in env_x.spectral.iter().zip(&style_env.spectral) {
        d_t += (a - b) * (a - b);
    }
    let ts_sq: f64 = style_env.spectral.iter().map(|v| v * v).sum();
    let oracle_lt = d_t / f / (1.0 + ts_sq / f);

    assert!((le - oracle_le).abs() <= 1e-12 * oracle_le.max(1.0));
    assert!((lt - oracle_lt).abs() <= 1e-12 * oracle_lt.max(1.0));
}

#[test]
fn envelope_loss_rejects_length_mismatch() {
    let x = random_log_spec(6);
    let bad = EnvelopePair { temporal: vec![0.0; 3], spectral: vec![0.0; 4] };
    assert!(matches!(envelope_loss(&x, &bad), Err(TransferError::Shape(_))));
}

#[test]
fn total_loss_zero_when_everything_matches() {
    let net = tiny_net(2);
    let x = random_log_spec(7);
    let b = total_loss(&net, &x, &x, &x, &tiny_cfg()).unwrap();
    assert_eq!(b.total, 0.0);
    assert_eq!(b.content, 0.0);
    assert_eq!(b.style, 0.0);
    assert_eq!(b.temporal_env, 0.0);
    assert_eq!(b.timbral_env, 0.0);
}

#[test]
fn total_loss_degenerate_weights_equal_content_loss() {
    let net = tiny_net(3);
    let x = random_log_spec(8);
    let c = random_log_spec(9);
    let s = random_log_spec(10);
    let cfg = TransferConfig {
        weights: LossWeights { alpha: 1.0, beta: 0.0, gamma: 0.0, delta: 0.0 },
        ..tiny_cfg()
    };
    let b = total_loss(&net, &x, &c, &s, &cfg).unwrap();
    let acts_x = net.forward(&x, true).unwrap();
    let acts_c = net.forward(&c, true).unwrap();
    let direct = content_loss(&acts_x, &acts_c, &cfg.content_layers).unwrap();
    assert!(
        (b.total - direct).abs() <= 1e-12 * direct.max(1.0),
        "{} vs {direct}",
        b.total
    );
}

#[test]
fn total_loss_is_the_weighted_sum_of_components() {
    let net = tiny_net(4);
    let x = random_log_spec(11);
    let c = random_log_spec(12);
    let s = random_log_spec(13);
    let cfg = TransferConfig {
        weights: LossWeights { alpha: 1.0, beta: 2.0, gamma: 3.0, delta: 4.0 },
        ..tiny_cfg()
    };
    let b = total_loss(&net, &x, &c, &s, &cfg).unwrap();

    let acts_x = net.forward(&x, true).unwrap();
    let acts_c = net.forward(&c, true).unwrap();
    let acts_s = net.forward(&s, true).unwrap();
    let lc = content_loss(&acts_x, &acts_c, &cfg.content_layers).unwrap();
    let ls = style_loss(&acts_x, &acts_s, &cfg.style_layers).unwrap();
    let (le, lt) = envelope_loss(&x, &crate::dsp::envelopes(&s)).unwrap();
    let expect = 1.0 * lc + 2.0 * ls + 3.0 * le + 4.0 * lt;
    assert!(
        (b.total - expect).abs() <= 1e-12 * expect.abs().max(1.0),
        "{} vs {expect}",
        b.total
    );
}

#[test]
fn init_input_is_seeded_clamped_and_statistically_faithful() {
    let source = random_log_spec(14);
    let (f, t) = (source.f_bins(), source.frames());
    let a = init_input(f, t, &source, 42).unwrap();
    let b = init_input(f, t, &source, 42).unwrap();
    assert!(a.values.iter().zip(&b.values).all(|(p, q)| p.to_bits() == q.to_bits()));
    let c = init_input(f, t, &source, 43).unwrap();
    assert!(a.values != c.values);

    let floor = source.floor();
    assert!(a.values.iter().all(|&v| v >= floor));

    let n = source.values.len() as f64;
    let mean: f64 = source.values.iter().sum::<f64>() / n;
    let var: f64 = source.values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let sample_mean: f64 = a.values.iter().sum::<f64>() / n;
    // clamping at the floor biases slightly upward; allow the statistical band
    let band = 3.0 * var.sqrt() / n.sqrt();
    assert!(
        (sample_mean - mean).abs() < band + 0.05 * var.sqrt(),
        "sample mean {sample_mean} vs {mean} (band {band})"
    );
}

#[test]
fn run_transfer_self_transfer_reduces_loss() {
    let net = tiny_net(5);
    let content = random_log_spec(15);
    let cfg = TransferConfig {
        weights: LossWeights { alpha: 1.0, beta: 1.0, gamma: 1.0, delta: 1.0 },
        steps: 60,
        ..tiny_cfg()
    };
    let out = run_transfer(&net, &content, &content, &cfg).unwrap();
    assert_eq!(out.trace.entries.len(), 60);
    let initial = out.trace.entries[0].total;
    let last = out.trace.entries.last().unwrap().total;
    assert!(last < 0.5 * initial, "{last} vs initial {initial}");
    // returned iterate attains the trace minimum
    assert_eq!(out.best_step, out.trace.best_step());
    let best = out.trace.entries[out.best_step].total;
    assert!(out.trace.entries.iter().all(|e| e.total >= best));
}

#[test]
fn run_transfer_single_step_and_zero_steps() {
    let net = tiny_net(6);
    let content = random_log_spec(16);
    let style = random_log_spec(17);
    let cfg = TransferConfig { steps: 1, ..tiny_cfg() };
    let out = run_transfer(&net, &content, &style, &cfg).unwrap();
    assert_eq!(out.trace.entries.len(), 1);
    assert_eq!(out.best_step, 0);

    let bad = TransferConfig { steps: 0, ..tiny_cfg() };
    assert!(matches!(
        run_transfer(&net, &content, &style, &bad),
        Err(TransferError::Config(_))
    ));
}

#[test]
fn run_transfer_is_deterministic() {
    let net = tiny_net(7);
    let content = random_log_spec(18);
    let style = random_log_spec(19);
    let cfg = TransferConfig { steps: 5, ..tiny_cfg() };
    let a = run_transfer(&net, &content, &style, &cfg).unwrap();
    let b = run_transfer(&net, &content, &style, &cfg).unwrap();
    assert!(a
        .x_recon
        .values
        .iter()
        .zip(&b.x_recon.values)
        .all(|(p, q)| p.to_bits() == q.to_bits()));
}

#[test]
fn unknown_layer_is_a_config_error() {
    let net = tiny_net(8);
    let x = random_log_spec(20);
    let cfg = TransferConfig {
        content_layers: vec!["block9".into()],
        ..tiny_cfg()
    };
    assert!(run_transfer(&net, &x, &x, &cfg).is_err());
}

#[test]
fn gradient_of_total_loss_matches_finite_differences() {
    let net = tiny_net(9);
    let content = random_log_spec(21);
    let style = random_log_spec(22);
    let cfg = tiny_cfg();
    let targets = super::losses::LossTargets::prepare(&net, &content, &style, &cfg).unwrap();
    let x0 = init_input(content.f_bins(), content.frames(), &content, 3).unwrap();
    let input = crate::network::log_spec_tensor(&x0).unwrap();
    let report = grad_check(
        |tape, x| {
            let nodes = targets
                .build(tape, &net, x, &cfg.weights)
                .map_err(|_| crate::autodiff::AutodiffError::InvalidInput {
                    op: "total_loss",
                    detail: "build failed".into(),
                })?;
            Ok(nodes.total)
        },
        &input,
        1e-3,
        0,
    )
    .unwrap();
    assert!(
        report.max_rel_err < 1e-3,
        "max_rel_err {} at {:?}",
        report.max_rel_err,
        report.failing_index
    );
}

#[test]
fn render_of_floor_spectrogram_is_silence() {
    let cfg = tiny_stft();
    let eps = 1e-6f64;
    let x = LogSpectrogram::from_values(
        vec![eps.ln(); 33 * 16],
        33,
        16,
        cfg,
        eps,
    )
    .unwrap();
    let out = render(&x, &TransferConfig { griffin_lim_iters: 3, ..tiny_cfg() }).unwrap();
    assert!(out.waveform.samples.iter().all(|&v| v == 0.0));
    assert_eq!(out.consistency_error, 0.0);
}

#[test]
fn trace_csv_format() {
    let trace = TransferTrace {
        entries: vec![
            LossBreakdown { total: 1.5, content: 1.0, style: 0.25, temporal_env: 0.15, timbral_env: 0.1 },
            LossBreakdown { total: 0.5, content: 0.25, style: 0.125, temporal_env: 0.075, timbral_env: 0.05 },
        ],
    };
    let mut buf = Vec::new();
    trace.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("step,total,Lc,Ls,Le,Lt"));
    assert_eq!(lines.next(), Some("0,1.5,1,0.25,0.15,0.1"));
    assert_eq!(lines.next(), Some("1,0.5,0.25,0.125,0.075,0.05"));
}
