//! Scratch timing check for the default-scale training run.

use std::time::Instant;

use cacl::augment::SynonymDict;
use cacl::numeric::SplitRng;
use cacl::pipeline::synth::{generate_synth, SynthSpec};
use cacl::pipeline::{pretrain, train, TrainConfig};

fn main() {
    let spec = SynthSpec::default();
    let g = generate_synth(&spec, &SplitRng::new(1)).unwrap();

    let cfg = TrainConfig::default();
    let t0 = Instant::now();
    let _ = pretrain(&g, &cfg).unwrap();
    println!("pretrain(100): {:?}", t0.elapsed());

    let cfg = TrainConfig { epochs: 3, pretrain_epochs: 100, ..TrainConfig::default() };
    let t1 = Instant::now();
    let out = train(&g, &cfg, &SynonymDict::empty(), None).unwrap();
    println!("pretrain+3 epochs: {:?} ({} steps)", t1.elapsed(), out.loss_log.len());
}
