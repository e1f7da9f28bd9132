//! Comparing two piecewise-constant densities defined on different
//! partitions through their common refinement.

use cobpm::divergence::{two_step_estimate, PhiSpec};
use cobpm::partition::Partition;

fn main() -> cobpm::Result<()> {
    // First density: mass 0.7 on the left half. Second: mass 0.6 on the
    // bottom half.
    let pa: Partition = "2;(1,1)".parse()?;
    let pb: Partition = "2;(1,2)".parse()?;
    let ma = [0.7, 0.3];
    let mb = [0.6, 0.4];
    for phi in PhiSpec::standard_set() {
        println!("{:<10} {:.4}", phi.name(), two_step_estimate(&phi, &pa, &ma, &pb, &mb)?);
    }
    Ok(())
}
