//! Scoring candidate partitions by their marginal likelihood with masses
//! integrated out.

use cobpm::data::count;
use cobpm::density::Scenario;
use cobpm::model::{log_marginal, Hyperparams};
use cobpm::partition::Partition;
use cobpm::sampler::ChainRng;
use rand::SeedableRng;

fn main() -> cobpm::Result<()> {
    let s = Scenario::by_name("sanity-nested")?;
    let mut rng = ChainRng::seed_from_u64(4);
    let (x, y) = s.draw(1000, &mut rng)?;
    let h = Hyperparams::for_dimension(2);
    for seq in [
        "2",
        "2;(1,2)",
        "2;(1,2);(1,1)",
        "2;(1,2);(1,1);(2,1);(4,2);(5,1)",
        "2;(1,1);(1,1);(1,1);(1,2);(2,2)",
    ] {
        let p: Partition = seq.parse()?;
        let c = count(&x, &y, &p)?;
        println!("{seq:<36} log marginal {:>10.2}", log_marginal(&p, &c, &h)?);
    }
    Ok(())
}
