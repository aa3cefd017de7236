use audiostyle::dsp::StftConfig;
use audiostyle::network::{Network, NetworkSpec};
use audiostyle::training::*;
use std::path::Path;

fn main() {
    let corpus_cfg = SynthCorpusConfig::default();
    let corpus = synth_corpus(&corpus_cfg, &StftConfig::default()).unwrap();
    let mut net = Network::build(NetworkSpec::default_with_classes(4), 0).unwrap();
    let adam = AdamConfig { epochs: 30, ..AdamConfig::for_training() };
    let mut opts = TrainOptions::new(adam, 0, corpus_cfg.class_names());
    opts.target_accuracy = Some(0.95);
    let (ckpt, report) = train(&mut net, &corpus, &opts).unwrap();
    ckpt.save(Path::new("/tmp/probe.astc")).unwrap();
    println!("saved after {} epochs, final acc {:.3}", report.epochs.len(),
        report.epochs.last().unwrap().train_accuracy);
}
