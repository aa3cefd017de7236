use audiostyle::dsp::StftConfig;
use audiostyle::network::{Network, NetworkSpec};
use audiostyle::training::*;
use std::time::Instant;

fn main() {
    let t0 = Instant::now();
    let corpus_cfg = SynthCorpusConfig::default();
    let corpus = synth_corpus(&corpus_cfg, &StftConfig::default()).unwrap();
    println!("corpus: {} clips in {:.1}s", corpus.len(), t0.elapsed().as_secs_f64());

    let mut net = Network::build(NetworkSpec::default_with_classes(4), 0).unwrap();
    let adam = AdamConfig { epochs: 8, ..AdamConfig::for_training() };
    let mut opts = TrainOptions::new(adam, 0, corpus_cfg.class_names());
    opts.target_accuracy = Some(0.95);
    let t1 = Instant::now();
    let (_, report) = train(&mut net, &corpus, &opts).unwrap();
    for (i, e) in report.epochs.iter().enumerate() {
        println!("epoch {i}: ce {:.4} acc {:.3}", e.mean_cross_entropy, e.train_accuracy);
    }
    println!("training took {:.1}s (early stop: {})", t1.elapsed().as_secs_f64(), report.stopped_early);
}
