//! Monte Carlo ground truth between two known densities, with standard
//! errors that shrink as the number of draws grows.

use cobpm::density::Scenario;
use cobpm::divergence::PhiSpec;
use cobpm::oracle::mc_truth;

fn main() -> cobpm::Result<()> {
    let s = Scenario::by_name("mixture3d")?;
    println!("{}: {} against {}", s.name, s.first, s.second);
    for draws in [100_000u64, 1_000_000] {
        for phi in PhiSpec::standard_set() {
            let r = mc_truth(&s.first, &s.second, &phi, draws, 1, 8)?;
            println!("{draws:>8} draws  {:<10} {:.4} +/- {:.4}", r.phi, r.estimate, r.se);
        }
    }
    Ok(())
}
