//! Building coupled binary partitions by hand, locating points and
//! combining two partitions.

use cobpm::partition::{common_refinement, Action, Partition};

fn main() -> cobpm::Result<()> {
    // Halve the square along x, then split the upper half along y.
    let mut p = Partition::root(2)?;
    p.push(Action::new(0, 0))?;
    p.push(Action::new(1, 1))?;
    println!("partition {p} has {} regions", p.depth());
    for (i, r) in p.regions().iter().enumerate() {
        println!(
            "  region {}: x in [{}, {}), y in [{}, {}), volume {}",
            i + 1,
            r.lower(0),
            r.upper(0),
            r.lower(1),
            r.upper(1),
            r.volume()
        );
    }
    println!("(0.8, 0.9) lies in region {}", p.locate(&[0.8, 0.9])? + 1);

    // The textual form round-trips.
    let q: Partition = "2;(1,2);(1,1)".parse()?;
    let joint = common_refinement(&p, &q)?;
    println!("common refinement of {p} and {q}: {joint} ({} regions)", joint.depth());
    println!("refines both: {}", joint.refines(&p) && joint.refines(&q));

    // Undo the last decision.
    let (coarser, undone) = p.shrink()?;
    println!("shrinking removes {undone:?}, leaving {coarser}");
    Ok(())
}
