//! Reference estimators: k-nearest-neighbour KL, a smoothed histogram and
//! the two-step construction that fits each sample separately.

use cobpm::baselines::{histogram_divergence, knn_kl, two_step_divergence};
use cobpm::density::Scenario;
use cobpm::divergence::PhiSpec;
use cobpm::oracle::mc_truth;
use cobpm::sampler::{ChainConfig, ChainRng};
use rand::SeedableRng;

fn main() -> cobpm::Result<()> {
    let s = Scenario::by_name("normal-shift3d")?;
    let mut rng = ChainRng::seed_from_u64(3);
    let (x, y) = s.draw(800, &mut rng)?;
    let kl = PhiSpec::KullbackLeibler;

    let truth = mc_truth(&s.first, &s.second, &kl, 1_000_000, 3, 8)?;
    println!("truth        {:.4}", truth.estimate);
    println!("1-NN         {:.4}", knn_kl(&x, &y, 1)?);
    println!("10-NN        {:.4}", knn_kl(&x, &y, 10)?);
    println!("histogram 8  {:.4}", histogram_divergence(&x, &y, 8, &kl, 0.5)?);
    let mut cfg = ChainConfig::for_dimension(3);
    cfg.seed = 3;
    println!("two-step     {:.4}", two_step_divergence(&x, &y, &cfg, &[kl])?[0]);
    Ok(())
}
