use super::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_matrix(h: usize, w: usize, seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::matrix(h, w, (0..h * w).map(|_| rng.random_range(-2.0..2.0)).collect()).unwrap()
}

fn meta() -> TrainingMeta {
    TrainingMeta {
        epochs: 0,
        final_loss: 0.0,
        class_names: vec!["a".into(), "b".into(), "c".into(), "d".into()],
        seed: 0,
    }
}

#[test]
fn default_spec_parameter_count() {
    // 16·(3·3·1)+16 + 32·(3·3·16)+32 + 64·(3·3·32)+64 + 64·(3·3·64)+64
    //   + 128·64+128 + 4·128+4, summed layer by layer
    let by_hand: usize = (16 * 9 + 16)
        + (32 * 9 * 16 + 32)
        + (64 * 9 * 32 + 64)
        + (64 * 9 * 64 + 64)
        + (128 * 64 + 128)
        + (4 * 128 + 4);
    assert_eq!(by_hand, 69_060);
    let spec = NetworkSpec::default_with_classes(4);
    assert_eq!(spec.param_count(), by_hand);
    let net = Network::build(spec, 0).unwrap();
    assert_eq!(net.param_count(), by_hand);
}

#[test]
fn six_weight_bearing_layers_in_default() {
    let spec = NetworkSpec::default_with_classes(4);
    assert_eq!(spec.param_shapes().len(), 12); // 6 layers × (weight, bias)
}

#[test]
fn same_seed_is_bit_identical_different_seed_differs() {
    let spec = NetworkSpec::default_with_classes(4);
    let a = Network::build(spec.clone(), 7).unwrap();
    let b = Network::build(spec.clone(), 7).unwrap();
    for (x, y) in a.params().iter().zip(b.params()) {
        assert!(x
            .data()
            .iter()
            .zip(y.data())
            .all(|(p, q)| p.to_bits() == q.to_bits()));
    }
    let c = Network::build(spec, 8).unwrap();
    let differs = a
        .params()
        .iter()
        .zip(c.params())
        .any(|(x, y)| x.data() != y.data());
    assert!(differs);
}

#[test]
fn spec_validation_rejects_bad_configs() {
    let mut spec = NetworkSpec::default_with_classes(4);
    spec.num_classes = 1;
    assert!(matches!(spec.validate(), Err(NetworkError::InvalidSpec(_))));
    let empty = NetworkSpec { conv_blocks: vec![], hidden_units: 8, num_classes: 4 };
    assert!(empty.validate().is_err());
}

#[test]
fn constant_input_yields_bias_pattern_through_relu() {
    // Standardization maps a constant clip to all-zeros, so the first conv
    // output is exactly its bias, then relu.
    let spec = NetworkSpec {
        conv_blocks: vec![ConvBlockSpec { out_channels: 3, pool: true }],
        hidden_units: 8,
        num_classes: 2,
    };
    let mut net = Network::build(spec, 0).unwrap();
    let bias = [0.5, -0.3, 0.0];
    net.params_mut()[1] = Tensor::vector(bias.to_vec());
    // dyadic value and power-of-two count keep the mean exact, so the
    // standardized input is exactly zero
    let x = Tensor::matrix(8, 4, vec![0.75; 32]).unwrap();
    let acts = net.forward_matrix(&x, true).unwrap();
    let block1 = acts.layer("block1").unwrap();
    assert_eq!(block1.shape(), &[3, 8, 4]);
    for (c, &b) in bias.iter().enumerate() {
        let expect = b.max(0.0);
        for &v in &block1.data()[c * 32..(c + 1) * 32] {
            assert!((v - expect).abs() < 1e-12);
        }
    }
}

#[test]
fn activation_shapes_follow_replication_padded_halving() {
    let spec = NetworkSpec::default_with_classes(4);
    let net = Network::build(spec, 1).unwrap();
    let x = random_matrix(257, 255, 3);
    let acts = net.forward_matrix(&x, true).unwrap();
    let spatial: Vec<(usize, usize)> = acts
        .per_layer
        .iter()
        .map(|(_, t)| (t.shape()[1], t.shape()[2]))
        .collect();
    // block activations are pre-pool; pooling halves between blocks
    assert_eq!(spatial, vec![(257, 255), (129, 128), (65, 64), (33, 32)]);
    assert_eq!(acts.logits.shape(), &[4]);
    // after the final pool the spatial extent is (17, 16)
    let mut tape = Tape::new();
    let last = tape.constant(acts.per_layer[3].1.clone()).unwrap();
    let pooled = tape.maxpool2x2(last).unwrap();
    assert_eq!(tape.value(pooled).shape(), &[64, 17, 16]);
}

#[test]
fn forward_is_deterministic_and_finite() {
    let net = Network::build(NetworkSpec::default_with_classes(4), 2).unwrap();
    let x = random_matrix(33, 31, 5);
    let a = net.forward_matrix(&x, true).unwrap();
    let b = net.forward_matrix(&x, true).unwrap();
    for ((_, t1), (_, t2)) in a.per_layer.iter().zip(&b.per_layer) {
        assert!(t1
            .data()
            .iter()
            .zip(t2.data())
            .all(|(p, q)| p.to_bits() == q.to_bits()));
        assert!(t1.all_finite());
        assert!(t1.data().iter().all(|&v| v >= 0.0), "relu output negative");
    }
    assert!(a
        .logits
        .data()
        .iter()
        .zip(b.logits.data())
        .all(|(p, q)| p.to_bits() == q.to_bits()));
}

#[test]
fn standardization_removes_affine_offsets() {
    let net = Network::build(NetworkSpec::default_with_classes(4), 3).unwrap();
    let x = random_matrix(33, 31, 6);
    let scaled = Tensor::matrix(33, 31, x.data().iter().map(|v| 2.5 * v + 0.75).collect()).unwrap();
    let a = net.forward_matrix(&x, true).unwrap();
    let b = net.forward_matrix(&scaled, true).unwrap();
    let mut max_diff = 0.0f64;
    for ((_, t1), (_, t2)) in a.per_layer.iter().zip(&b.per_layer) {
        for (p, q) in t1.data().iter().zip(t2.data()) {
            max_diff = max_diff.max((p - q).abs());
        }
    }
    assert!(max_diff < 1e-5, "max abs diff {max_diff}");
}

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("net.astc");
    let net = Network::build(NetworkSpec::default_with_classes(4), 4).unwrap();
    let ckpt = net.to_checkpoint(meta());
    ckpt.save(&path).unwrap();
    let loaded = Checkpoint::load(&path).unwrap();
    assert_eq!(ckpt, loaded);
    for (a, b) in ckpt.entries.iter().zip(&loaded.entries) {
        assert!(a
            .data
            .iter()
            .zip(&b.data)
            .all(|(p, q)| p.to_bits() == q.to_bits()));
    }
    // a second save emits byte-identical files
    let path2 = dir.path().join("net2.astc");
    loaded.save(&path2).unwrap();
    assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&path2).unwrap());
}

#[test]
fn checkpoint_rejects_corruption() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("net.astc");
    let net = Network::build(NetworkSpec::default_with_classes(4), 5).unwrap();
    net.to_checkpoint(meta()).save(&path).unwrap();
    let good = std::fs::read(&path).unwrap();

    let mut bad_magic = good.clone();
    bad_magic[0] = b'X';
    assert!(matches!(
        Checkpoint::read_from(&mut bad_magic.as_slice()),
        Err(CheckpointError::MagicMismatch { .. })
    ));

    let mut bad_version = good.clone();
    bad_version[4] = 9;
    assert!(matches!(
        Checkpoint::read_from(&mut bad_version.as_slice()),
        Err(CheckpointError::VersionMismatch { found: 9, .. })
    ));

    let truncated = &good[..good.len() - 10];
    assert!(matches!(
        Checkpoint::read_from(&mut &truncated[..]),
        Err(CheckpointError::Truncated(_))
    ));
}

#[test]
fn checkpoint_with_wrong_class_count_is_a_shape_error() {
    let net = Network::build(NetworkSpec::default_with_classes(4), 6).unwrap();
    let mut ckpt = net.to_checkpoint(meta());
    // header claims 5 classes, blobs still carry 4-class dense2 shapes
    ckpt.spec.num_classes = 5;
    let mut bytes = Vec::new();
    ckpt.write_to(&mut bytes).unwrap();
    assert!(matches!(
        Checkpoint::read_from(&mut bytes.as_slice()),
        Err(CheckpointError::ShapeMismatch { .. })
    ));
}

#[test]
fn unknown_layer_id_is_an_error() {
    let spec = NetworkSpec::default_with_classes(4);
    assert_eq!(spec.block_index("block2").unwrap(), 1);
    assert!(matches!(
        spec.block_index("block9"),
        Err(NetworkError::UnknownLayer(_))
    ));
}
