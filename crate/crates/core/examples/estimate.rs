//! Posterior summaries of four divergences between two one-dimensional
//! beta samples, compared with the exact values.

use cobpm::data::Label;
use cobpm::density::DensitySpec;
use cobpm::divergence::{summarize, PhiSpec};
use cobpm::sampler::{derive_seed, run_chain, ChainConfig, ChainRng};
use rand::SeedableRng;

fn main() -> cobpm::Result<()> {
    let p: DensitySpec = "beta:6,5".parse()?;
    let q: DensitySpec = "beta:5,6".parse()?;
    let mut rng = ChainRng::seed_from_u64(7);
    let x = p.sample(1000, Label::X, &mut rng)?;
    let y = q.sample(1000, Label::Y, &mut rng)?;

    let mut cfg = ChainConfig::for_dimension(1);
    cfg.seed = derive_seed(7, 1);
    let trace = run_chain(&x, &y, &cfg)?;
    println!(
        "acceptance {:.3}, mean depth {:.1}, MAP {}",
        trace.acceptance_rate,
        trace.mean_depth(),
        trace.map_partition()?
    );

    let exact = [0.24609, 0.22066, 0.2, 1.5f64.ln()];
    for (phi, truth) in PhiSpec::standard_set().iter().zip(exact) {
        let s = summarize(&trace, phi, 0.95)?;
        println!(
            "{:<10} median {:.4}  95% [{:.4}, {:.4}]  exact {truth:.4}",
            s.phi, s.median, s.ci_low, s.ci_high
        );
    }
    Ok(())
}
