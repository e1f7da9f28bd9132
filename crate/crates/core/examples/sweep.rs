//! How estimates move with sample size, for the Bayesian estimator and the
//! nearest-neighbour baseline.

use cobpm::baselines::knn_kl;
use cobpm::density::Scenario;
use cobpm::divergence::{summarize, PhiSpec};
use cobpm::sampler::{derive_seed, run_chain, ChainConfig, ChainRng};
use rand::SeedableRng;

fn main() -> cobpm::Result<()> {
    let s = Scenario::by_name("beta1d")?;
    let kl = PhiSpec::KullbackLeibler;
    println!("size  replicate  cobpm-median  1-NN   (exact 0.2)");
    for (si, n) in [50usize, 200, 800].into_iter().enumerate() {
        for r in 0..3u64 {
            let seed = derive_seed(derive_seed(5, si as u64), r);
            let mut rng = ChainRng::seed_from_u64(derive_seed(seed, 0));
            let (x, y) = s.draw(n, &mut rng)?;
            let mut cfg = ChainConfig::for_dimension(1);
            cfg.seed = derive_seed(seed, 1);
            let med = summarize(&run_chain(&x, &y, &cfg)?, &kl, 0.95)?.median;
            println!("{n:>4}  {r:>9}  {med:>12.4}  {:.4}", knn_kl(&x, &y, 1)?);
        }
    }
    Ok(())
}
