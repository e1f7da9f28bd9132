//! The coupled partition model: a depth prior `exp(-sigma l)` over decision
//! sequences, independent symmetric Dirichlet priors on the two per-region
//! mass vectors, and piecewise-uniform densities within regions.
//!
//! Everything is evaluated in log space.

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::data::CountPair;
use crate::error::{Error, Result};
use crate::partition::Partition;

const LN_2: f64 = std::f64::consts::LN_2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    /// Dirichlet concentration per region.
    pub delta: f64,
    /// Depth penalty.
    pub sigma: f64,
    /// Probability of proposing a deeper partition when depth > 1.
    pub p_up: f64,
    /// Hard cap on the number of regions.
    pub max_depth: usize,
    /// Adds `-ln((l-1)! d^(l-1))` to the sequence prior, i.e. spreads each
    /// depth's prior weight uniformly over its decision sequences. Off by
    /// default.
    #[serde(default)]
    pub ordering_penalty: bool,
}

impl Hyperparams {
    pub const DEFAULT_MAX_DEPTH: usize = 200;

    /// Defaults for data in `dim` dimensions: `delta = 1/2`, `sigma = d + 1`,
    /// symmetric depth moves.
    pub fn for_dimension(dim: usize) -> Self {
        Hyperparams {
            delta: 0.5,
            sigma: dim as f64 + 1.0,
            p_up: 0.5,
            max_depth: Self::DEFAULT_MAX_DEPTH,
            ordering_penalty: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(Error::BadHyperparams(format!("delta must be positive, got {}", self.delta)));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::BadHyperparams(format!("sigma must be positive, got {}", self.sigma)));
        }
        if !(0.0..=1.0).contains(&self.p_up) {
            return Err(Error::BadHyperparams(format!("p_up must lie in [0, 1], got {}", self.p_up)));
        }
        if self.max_depth == 0 {
            return Err(Error::BadHyperparams("max_depth must be at least 1".into()));
        }
        Ok(())
    }

    /// `p(l+1 | l)`; a root partition can only grow.
    pub fn p_up_at(&self, depth: usize) -> f64 {
        if depth <= 1 {
            1.0
        } else {
            self.p_up
        }
    }

    pub fn p_down_at(&self, depth: usize) -> f64 {
        1.0 - self.p_up_at(depth)
    }

    /// Log prior weight of a depth-`depth` sequence in `dim` dimensions.
    pub fn log_depth_prior(&self, depth: usize, dim: usize) -> f64 {
        let mut v = -self.sigma * depth as f64;
        if self.ordering_penalty && depth > 1 {
            let m = (depth - 1) as f64;
            v -= ln_gamma(m + 1.0) + m * (dim as f64).ln();
        }
        v
    }
}

/// Cached `ln Gamma(delta + m)` for small integer `m`.
#[derive(Clone, Debug)]
pub struct LnGammaTable {
    delta: f64,
    values: Vec<f64>,
}

impl LnGammaTable {
    pub fn new(delta: f64, max_count: usize) -> Self {
        let values = (0..=max_count).map(|m| ln_gamma(delta + m as f64)).collect();
        LnGammaTable { delta, values }
    }

    #[inline]
    pub fn get(&self, m: usize) -> f64 {
        match self.values.get(m) {
            Some(&v) => v,
            None => ln_gamma(self.delta + m as f64),
        }
    }
}

/// `ln B(z) = sum ln Gamma(z_i) - ln Gamma(sum z_i)`, the log multinomial Beta.
pub fn ln_multinomial_beta(z: &[f64]) -> f64 {
    let s: f64 = z.iter().sum();
    z.iter().map(|&v| ln_gamma(v)).sum::<f64>() - ln_gamma(s)
}

/// Per-region probability masses of both samples.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MassPair {
    pub first: Vec<f64>,
    pub second: Vec<f64>,
}

impl MassPair {
    pub fn new(first: Vec<f64>, second: Vec<f64>) -> Result<Self> {
        if first.len() != second.len() {
            return Err(Error::DimensionMismatch {
                expected: first.len(),
                found: second.len(),
            });
        }
        Ok(MassPair { first, second })
    }

    pub fn len(&self) -> usize {
        self.first.len()
    }

    pub fn is_empty(&self) -> bool {
        self.first.is_empty()
    }

    pub fn swapped(&self) -> MassPair {
        MassPair {
            first: self.second.clone(),
            second: self.first.clone(),
        }
    }
}

/// A full model state: a decision sequence with its regions plus masses.
#[derive(Clone, Debug, PartialEq)]
pub struct Theta {
    pub partition: Partition,
    pub masses: MassPair,
}

fn check_counts(p: &Partition, c: &CountPair) -> Result<()> {
    c.check_aligned(p)
}

/// Log of the unnormalised joint posterior
/// `exp(-sigma l) prod (1/|r_i|)^(n1i+n2i) prod m1i^(delta+n1i-1) prod m2i^(delta+n2i-1)`.
pub fn log_psi(theta: &Theta, c: &CountPair, h: &Hyperparams) -> Result<f64> {
    let p = &theta.partition;
    check_counts(p, c)?;
    if theta.masses.len() != p.depth() {
        return Err(Error::Misaligned {
            counts: theta.masses.len(),
            regions: p.depth(),
        });
    }
    let mut v = h.log_depth_prior(p.depth(), p.dim());
    for (i, r) in p.regions().iter().enumerate() {
        let n1 = c.count(0, i) as f64;
        let n2 = c.count(1, i) as f64;
        v += (n1 + n2) * r.log2_inv_volume() as f64 * LN_2;
        v += (h.delta + n1 - 1.0) * theta.masses.first[i].ln();
        v += (h.delta + n2 - 1.0) * theta.masses.second[i].ln();
    }
    Ok(v)
}

/// Log of the sequence posterior with both mass vectors integrated out:
/// `exp(-sigma l) B(delta + n1) B(delta + n2) prod (1/|r_i|)^(n1i+n2i)`.
pub fn log_marginal(p: &Partition, c: &CountPair, h: &Hyperparams) -> Result<f64> {
    check_counts(p, c)?;
    let l = p.depth() as f64;
    let mut v = h.log_depth_prior(p.depth(), p.dim());
    for k in 0..2 {
        let n = c.total(k) as f64;
        v -= ln_gamma(n + h.delta * l);
    }
    for (i, r) in p.regions().iter().enumerate() {
        let n1 = c.count(0, i);
        let n2 = c.count(1, i);
        v += ln_gamma(h.delta + n1 as f64) + ln_gamma(h.delta + n2 as f64);
        v += (n1 + n2) as f64 * r.log2_inv_volume() as f64 * LN_2;
    }
    Ok(v)
}

/// Draws from `Dir(delta + n1) x Dir(delta + n2)` by normalising Gamma variates.
pub fn sample_masses<R: Rng + ?Sized>(c: &CountPair, h: &Hyperparams, rng: &mut R) -> MassPair {
    let mut draw = |k: usize| -> Vec<f64> {
        let mut g: Vec<f64> = (0..c.depth())
            .map(|i| {
                let shape = h.delta + c.count(k, i) as f64;
                Gamma::new(shape, 1.0)
                    .expect("positive shape")
                    .sample(rng)
                    .max(f64::MIN_POSITIVE)
            })
            .collect();
        let s: f64 = g.iter().sum();
        g.iter_mut().for_each(|v| *v /= s);
        g
    };
    let first = draw(0);
    let second = draw(1);
    MassPair { first, second }
}

/// `x -> m_i / |r_i|` for the region containing `x`.
#[derive(Clone, Debug)]
pub struct PiecewiseDensity {
    partition: Partition,
    masses: Vec<f64>,
}

impl PiecewiseDensity {
    pub fn new(partition: Partition, masses: Vec<f64>) -> Result<Self> {
        if masses.len() != partition.depth() {
            return Err(Error::Misaligned {
                counts: masses.len(),
                regions: partition.depth(),
            });
        }
        if masses.iter().any(|&m| m < 0.0) || (masses.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Invalid("masses must lie on the simplex".into()));
        }
        Ok(PiecewiseDensity { partition, masses })
    }

    pub fn partition(&self) -> &Partition {
        &self.partition
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        let i = self.partition.locate(x)?;
        Ok(self.masses[i] / self.partition.region(i).volume())
    }

    /// Exact integral over the cube: the mass total.
    pub fn total_mass(&self) -> f64 {
        self.masses.iter().sum()
    }
}
