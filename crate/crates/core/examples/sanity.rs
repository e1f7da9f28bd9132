//! Recovering structure in two dimensions. For the piecewise-constant pair
//! the learned partition should refine the partition both densities live
//! on; for the smooth pair it concentrates cells where the densities differ.

use cobpm::density::{DensitySpec, Scenario};
use cobpm::sampler::{run_chain, ChainConfig, ChainRng};
use rand::SeedableRng;

fn main() -> cobpm::Result<()> {
    let truth = DensitySpec::sanity_partition();
    for name in ["sanity-nested", "sanity-mixed"] {
        let s = Scenario::by_name(name)?;
        let mut rng = ChainRng::seed_from_u64(11);
        let (x, y) = s.draw(2000, &mut rng)?;
        let mut cfg = ChainConfig::for_dimension(2);
        cfg.seed = 12;
        let map = run_chain(&x, &y, &cfg)?.map_partition()?;
        println!("{name}: MAP {map} (depth {})", map.depth());
        if name == "sanity-nested" {
            println!("  refines {truth}: {}", map.refines(&truth));
        }
    }
    Ok(())
}
