//! Desk-scale training: a procedural generator of labeled instrument-like
//! tones standing in for a real corpus, plus an Adam-driven cross-entropy
//! loop for the classifier.

mod adam;
mod corpus;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use corpus::{default_archetypes, synth_corpus, synth_tone, Archetype, SynthCorpusConfig};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::autodiff::{AutodiffError, Tape, Tensor};
use crate::dsp::{DspError, LogSpectrogram};
use crate::network::{log_spec_tensor, Checkpoint, Network, NetworkError, TrainingMeta};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("label {label} out of range for {num_classes} classes")]
    LabelOutOfRange { label: usize, num_classes: usize },
    #[error("training diverged (non-finite loss) at epoch {epoch}, step {step}")]
    Diverged { epoch: usize, step: usize },
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error(transparent)]
    Dsp(#[from] DspError),
}

pub type Result<T> = std::result::Result<T, TrainError>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub mean_cross_entropy: f64,
    pub train_accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub epochs: Vec<EpochStats>,
    /// True when `target_accuracy` stopped the loop before `epochs` ran out.
    pub stopped_early: bool,
}

/// Everything `train` needs beyond the optimizer constants.
#[derive(Debug, Clone)]
pub struct TrainOptions {
    pub adam: AdamConfig,
    pub seed: u64,
    /// Global L2 gradient clip; None disables.
    pub grad_clip: Option<f64>,
    /// Stop once an epoch's train accuracy reaches this.
    pub target_accuracy: Option<f64>,
    pub class_names: Vec<String>,
}

impl TrainOptions {
    pub fn new(adam: AdamConfig, seed: u64, class_names: Vec<String>) -> Self {
        Self {
            adam,
            seed,
            grad_clip: Some(10.0),
            target_accuracy: None,
            class_names,
        }
    }
}

/// Minibatch cross-entropy training with a seeded shuffle per epoch.
/// Per-example forward/backward runs in parallel; gradients reduce in
/// example order, so results are deterministic.
pub fn train(
    net: &mut Network,
    corpus: &[(LogSpectrogram, usize)],
    opts: &TrainOptions,
) -> Result<(Checkpoint, TrainReport)> {
    opts.adam.validate().map_err(TrainError::Config)?;
    if corpus.is_empty() {
        return Err(TrainError::EmptyCorpus);
    }
    let num_classes = net.spec().num_classes;
    for (_, label) in corpus {
        if *label >= num_classes {
            return Err(TrainError::LabelOutOfRange { label: *label, num_classes });
        }
    }
    let inputs: Vec<Tensor> = corpus
        .iter()
        .map(|(x, _)| log_spec_tensor(x))
        .collect::<std::result::Result<_, _>>()?;

    let mut state = AdamState::for_params(net.params());
    let mut report = TrainReport { epochs: Vec::new(), stopped_early: false };
    let mut global_step = 0usize;
    let mut order: Vec<usize> = (0..corpus.len()).collect();

    for epoch in 0..opts.adam.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed.wrapping_add(epoch as u64));
        order.shuffle(&mut rng);

        let mut epoch_loss = 0.0;
        let mut epoch_correct = 0usize;
        for batch in order.chunks(opts.adam.batch_size.max(1)) {
            global_step += 1;
            let per_example: Vec<Result<(f64, bool, Vec<Tensor>)>> = batch
                .par_iter()
                .map(|&idx| example_grads(net, &inputs[idx], corpus[idx].1))
                .collect();

            let mut batch_loss = 0.0;
            let mut grads: Option<Vec<Tensor>> = None;
            for result in per_example {
                let (loss, correct, example_grads) = result?;
                batch_loss += loss;
                if correct {
                    epoch_correct += 1;
                }
                match &mut grads {
                    None => grads = Some(example_grads),
                    Some(acc) => {
                        for (a, g) in acc.iter_mut().zip(&example_grads) {
                            for (av, gv) in a.data_mut().iter_mut().zip(g.data()) {
                                *av += gv;
                            }
                        }
                    }
                }
            }
            let mut grads = grads.expect("non-empty batch");
            let scale = 1.0 / batch.len() as f64;
            for g in &mut grads {
                for v in g.data_mut() {
                    *v *= scale;
                }
            }
            batch_loss *= scale;
            if !batch_loss.is_finite() {
                return Err(TrainError::Diverged { epoch, step: global_step });
            }

            if let Some(clip) = opts.grad_clip {
                let norm: f64 = grads
                    .iter()
                    .flat_map(|g| g.data())
                    .map(|v| v * v)
                    .sum::<f64>()
                    .sqrt();
                if norm > clip {
                    let s = clip / norm;
                    for g in &mut grads {
                        for v in g.data_mut() {
                            *v *= s;
                        }
                    }
                }
            }

            adam_step(net.params_mut(), &grads, &mut state, &opts.adam, global_step)?;
            epoch_loss += batch_loss * batch.len() as f64;
        }

        let stats = EpochStats {
            mean_cross_entropy: epoch_loss / corpus.len() as f64,
            train_accuracy: epoch_correct as f64 / corpus.len() as f64,
        };
        report.epochs.push(stats);
        if opts
            .target_accuracy
            .is_some_and(|t| stats.train_accuracy >= t)
        {
            report.stopped_early = true;
            break;
        }
    }

    let meta = TrainingMeta {
        epochs: report.epochs.len(),
        final_loss: report.epochs.last().map_or(f64::NAN, |e| e.mean_cross_entropy),
        class_names: opts.class_names.clone(),
        seed: opts.seed,
    };
    Ok((net.to_checkpoint(meta), report))
}

fn example_grads(net: &Network, input: &Tensor, label: usize) -> Result<(f64, bool, Vec<Tensor>)> {
    let mut tape = Tape::new();
    let x = tape.constant(input.clone())?;
    let graph = net.build_forward(&mut tape, x, None, true)?;
    let logits_id = graph.logits.expect("head built");
    let loss = tape.softmax_cross_entropy(logits_id, label)?;
    let grads = tape.backward(loss)?;
    let param_grads = graph
        .param_nodes
        .iter()
        .map(|&id| grads.get_or_zeros(id))
        .collect();
    let logits = tape.value(logits_id).data();
    let predicted = logits
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap_or(0);
    Ok((tape.value(loss).scalar_value(), predicted == label, param_grads))
}
