//! Any convex function with phi(1) = 0 defines a divergence. Here the
//! chi-squared divergence and a Renyi order chosen at run time.

use cobpm::divergence::{summarize, PhiSpec};
use cobpm::density::Scenario;
use cobpm::sampler::{run_chain, ChainConfig, ChainRng};
use rand::SeedableRng;

fn main() -> cobpm::Result<()> {
    let chi2 = PhiSpec::generic("chi2", |t| (t - 1.0) * (t - 1.0))?;
    let renyi: PhiSpec = "renyi:0.5".parse()?;

    let s = Scenario::by_name("beta1d")?;
    let mut rng = ChainRng::seed_from_u64(9);
    let (x, y) = s.draw(500, &mut rng)?;
    let mut cfg = ChainConfig::for_dimension(1);
    cfg.seed = 10;
    let trace = run_chain(&x, &y, &cfg)?;
    for phi in [chi2, renyi] {
        let sm = summarize(&trace, &phi, 0.9)?;
        println!("{:<10} median {:.4}  90% [{:.4}, {:.4}]", sm.phi, sm.median, sm.ci_low, sm.ci_high);
    }
    // A function that is not zero at one is rejected.
    println!("phi(t) = t accepted: {}", PhiSpec::generic("bad", |t| t).is_ok());
    Ok(())
}
