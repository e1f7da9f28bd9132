//! Mixing uniform points into both samples before estimation. Heavier
//! augmentation pulls estimates towards zero and narrows the posterior.

use cobpm::density::Scenario;
use cobpm::divergence::{augment_uniform, summarize, PhiSpec};
use cobpm::sampler::{run_chain, ChainConfig, ChainRng};
use rand::SeedableRng;

fn main() -> cobpm::Result<()> {
    let s = Scenario::by_name("beta1d")?;
    let mut rng = ChainRng::seed_from_u64(21);
    let (x, y) = s.draw(300, &mut rng)?;
    let tv = PhiSpec::TotalVariation;
    for pi in [0.0, 0.1, 0.3] {
        let (xa, ya) = augment_uniform(&x, &y, pi, &mut rng)?;
        let mut cfg = ChainConfig::for_dimension(1);
        cfg.seed = 22;
        let summary = summarize(&run_chain(&xa, &ya, &cfg)?, &tv, 0.95)?;
        println!(
            "pi {pi:.1}: n = {:>3}, TV median {:.4}, sd {:.4}",
            xa.len(),
            summary.median,
            summary.std
        );
    }
    Ok(())
}
