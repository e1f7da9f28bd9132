//! Monte Carlo ground truth for divergences between two known densities.

use rand::SeedableRng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::density::DensitySpec;
use crate::divergence::PhiSpec;
use crate::error::{Error, Result};
use crate::sampler::{derive_seed, ChainRng};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    pub phi: String,
    pub estimate: f64,
    /// Monte Carlo standard error of `estimate`.
    pub se: f64,
    pub draws: u64,
    pub workers: usize,
}

/// Running mean and centred second moment, mergeable across workers.
#[derive(Clone, Copy, Default)]
struct Moments {
    n: f64,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn push(&mut self, v: f64) {
        self.n += 1.0;
        let d = v - self.mean;
        self.mean += d / self.n;
        self.m2 += d * (v - self.mean);
    }

    fn merge(self, o: Moments) -> Moments {
        if self.n == 0.0 {
            return o;
        }
        if o.n == 0.0 {
            return self;
        }
        let n = self.n + o.n;
        let d = o.mean - self.mean;
        Moments {
            n,
            mean: self.mean + d * o.n / n,
            m2: self.m2 + o.m2 + d * d * self.n * o.n / n,
        }
    }

    fn se(&self) -> f64 {
        if self.n < 2.0 {
            return 0.0;
        }
        (self.m2 / (self.n - 1.0) / self.n).sqrt()
    }
}

/// Integrand of `E_{x ~ p}[g(q(x) / p(x))]` before the outer transform.
fn integrand(phi: &PhiSpec, ratio: f64) -> f64 {
    match phi {
        PhiSpec::TotalVariation => (ratio - 1.0).abs(),
        PhiSpec::Hellinger => ratio.sqrt(),
        PhiSpec::KullbackLeibler => -ratio.ln(),
        PhiSpec::Renyi(alpha) => ratio.powf(1.0 - alpha),
        PhiSpec::Generic(g) => g.eval(ratio),
    }
}

/// Estimates the divergence of `q` from `p` with `n` draws from `p`, split
/// over `workers` independent streams. Deterministic for fixed
/// `(seed, workers)`.
pub fn mc_truth(
    p: &DensitySpec,
    q: &DensitySpec,
    phi: &PhiSpec,
    n: u64,
    seed: u64,
    workers: usize,
) -> Result<OracleResult> {
    if p.dim() != q.dim() {
        return Err(Error::DimensionMismatch {
            expected: p.dim(),
            found: q.dim(),
        });
    }
    if n < 2 || workers == 0 {
        return Err(Error::Invalid("oracle needs at least two draws and one worker".into()));
    }
    let dim = p.dim();
    let per = n / workers as u64;
    let extra = n % workers as u64;
    let moments = (0..workers)
        .into_par_iter()
        .map(|w| {
            let mut rng = ChainRng::seed_from_u64(derive_seed(seed, w as u64));
            let count = per + u64::from((w as u64) < extra);
            let mut m = Moments::default();
            let mut x = Vec::with_capacity(dim);
            for _ in 0..count {
                x.clear();
                p.draw_into(&mut rng, &mut x);
                let px = p.eval(&x);
                if px <= 0.0 {
                    continue;
                }
                m.push(integrand(phi, q.eval(&x) / px));
            }
            m
        })
        .reduce(Moments::default, Moments::merge);
    if !moments.mean.is_finite() {
        return Err(Error::SingularMass { region: 0 });
    }
    let (mu, se) = (moments.mean, moments.se());
    let (estimate, se) = match phi {
        PhiSpec::TotalVariation => (0.5 * mu, 0.5 * se),
        PhiSpec::Hellinger => {
            let h = (1.0 - mu).max(0.0).sqrt();
            // Delta method; at h = 0 fall back to the square-root bound.
            (h, if h > 0.0 { se / (2.0 * h) } else { se.sqrt() })
        }
        PhiSpec::Renyi(alpha) => (mu.ln() / (alpha - 1.0), se / (mu * (alpha - 1.0).abs())),
        PhiSpec::KullbackLeibler | PhiSpec::Generic(_) => (mu, se),
    };
    Ok(OracleResult {
        phi: phi.name(),
        estimate,
        se,
        draws: moments.n as u64,
        workers,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_densities_give_zero() {
        let u: DensitySpec = "uniform:2".parse().unwrap();
        for phi in PhiSpec::standard_set() {
            let r = mc_truth(&u, &u, &phi, 10_000, 1, 4).unwrap();
            assert_eq!(r.estimate, 0.0);
            assert_eq!(r.se, 0.0);
        }
    }

    #[test]
    fn one_dimensional_beta_truths() {
        // Closed forms for Beta(6,5) against Beta(5,6): KL = 1/5,
        // Renyi-2 = ln(3/2) from the beta-function ratio.
        let p: DensitySpec = "beta:6,5".parse().unwrap();
        let q: DensitySpec = "beta:5,6".parse().unwrap();
        let kl = mc_truth(&p, &q, &PhiSpec::KullbackLeibler, 400_000, 7, 8).unwrap();
        assert!((kl.estimate - 0.2).abs() < 4.0 * kl.se, "{kl:?}");
        let r2 = mc_truth(&p, &q, &PhiSpec::Renyi(2.0), 400_000, 7, 8).unwrap();
        assert!((r2.estimate - 1.5f64.ln()).abs() < 4.0 * r2.se, "{r2:?}");
    }

    #[test]
    fn deterministic_for_seed_and_workers() {
        let p: DensitySpec = "beta:6,5".parse().unwrap();
        let q: DensitySpec = "beta:5,6".parse().unwrap();
        let a = mc_truth(&p, &q, &PhiSpec::Hellinger, 50_000, 3, 5).unwrap();
        let b = mc_truth(&p, &q, &PhiSpec::Hellinger, 50_000, 3, 5).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.draws, 50_000);
    }

    #[test]
    fn standard_error_halves_when_draws_quadruple() {
        let p: DensitySpec = "beta:6,5".parse().unwrap();
        let q: DensitySpec = "beta:5,6".parse().unwrap();
        let small = mc_truth(&p, &q, &PhiSpec::TotalVariation, 100_000, 9, 4).unwrap();
        let large = mc_truth(&p, &q, &PhiSpec::TotalVariation, 400_000, 9, 4).unwrap();
        let ratio = small.se / large.se;
        assert!((ratio - 2.0).abs() < 0.1, "ratio {ratio}");
    }
}
