//! Scratch: louvain k on homophilous default graphs.
use cacl::community::louvain_k;
use cacl::graph::extract_user_graph;
use cacl::numeric::SplitRng;
use cacl::pipeline::synth::{generate_synth, SynthSpec};

fn main() {
    for h in [0.0, 1.5, 3.0, 6.0] {
        let spec = SynthSpec { class_homophily: h, ..SynthSpec::default() };
        if spec.validate().is_err() {
            println!("h={h}: invalid");
            continue;
        }
        let g = generate_synth(&spec, &SplitRng::new(1000)).unwrap();
        let ug = extract_user_graph(&g).unwrap();
        println!("h={h}: louvain k = {}", louvain_k(&ug));
    }
}
