//! Structure recovery on the two-dimensional piecewise-constant pair.

use cobpm::density::{DensitySpec, Scenario};
use cobpm::divergence::{plugin_lower_bound, summarize, PhiSpec};
use cobpm::sampler::{derive_seed, run_chain, ChainConfig, ChainRng};
use rand::SeedableRng;

#[test]
fn map_partition_refines_the_true_partition() {
    let s = Scenario::by_name("sanity-nested").unwrap();
    let truth = DensitySpec::sanity_partition();
    let mut hits = 0;
    for r in 0..5 {
        let seed = derive_seed(99, r);
        let mut rng = ChainRng::seed_from_u64(seed);
        let (x, y) = s.draw(2000, &mut rng).unwrap();
        let mut cfg = ChainConfig::for_dimension(2);
        cfg.seed = derive_seed(seed, 1);
        let map = run_chain(&x, &y, &cfg).unwrap().map_partition().unwrap();
        hits += usize::from(map.refines(&truth));
    }
    assert!(hits >= 4, "only {hits} of 5 MAP partitions refine the truth");
}

#[test]
fn estimates_converge_to_the_exact_divergence() {
    let s = Scenario::by_name("sanity-nested").unwrap();
    // Both densities are constant on the true partition, so exact masses
    // on it give the exact divergence.
    let truth = DensitySpec::sanity_partition();
    let fit = |n: usize| {
        let mut rng = ChainRng::seed_from_u64(5);
        let (x, y) = s.draw(n, &mut rng).unwrap();
        let mut cfg = ChainConfig::for_dimension(2);
        cfg.seed = 6;
        run_chain(&x, &y, &cfg).unwrap()
    };
    let (small, large) = (fit(500), fit(32_000));
    assert_eq!(large.map_partition().unwrap().depth(), truth.depth());
    for phi in PhiSpec::standard_set() {
        let exact = plugin_lower_bound(&phi, &truth, &s.exact_masses()).unwrap();
        let err_small = (summarize(&small, &phi, 0.95).unwrap().median - exact).abs();
        let err_large = (summarize(&large, &phi, 0.95).unwrap().median - exact).abs();
        assert!(err_large < 0.015, "{phi}: error {err_large} at n = 32000");
        assert!(err_large < err_small, "{phi}: {err_large} not below {err_small}");
    }
}
