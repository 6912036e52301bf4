use std::time::Instant;
use synergy_tensor::data::{generate, ClassContrast, SynthSpec};
use synergy_tensor::experiment::*;
use synergy_tensor::tfa::Dof;
fn main() {
    let contrast: ClassContrast = std::env::args().nth(1).unwrap().parse().unwrap();
    let subjects: usize = std::env::args().nth(2).unwrap().parse().unwrap();
    let d = generate(&SynthSpec {
        subjects,
        seed: 42,
        contrast,
        ..Default::default()
    })
    .unwrap();
    let cfg = ExperimentConfig {
        seed: 42,
        ..Default::default()
    };
    for s in 1..=subjects as u32 {
        for dof in Dof::ALL {
            let t = Instant::now();
            let r = run_tucker_pipeline(&d, s, dof, &cfg).unwrap();
            let tt = t.elapsed().as_secs_f64();
            let n = run_nmf_pipeline(&d, s, dof, &cfg).unwrap();
            println!(
                "s{s} dof{dof} tucker {:.3} ({tt:.1}s) nmf {:.3}",
                r.error_rate, n.error_rate
            );
        }
    }
}
