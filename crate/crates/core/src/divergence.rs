//! Discrepancies between two mass vectors on a shared partition, posterior
//! summaries, and the plug-in and two-step reference computations.
//!
//! For masses `m1`, `m2` on the same regions the volumes cancel, so every
//! functional is a finite sum over regions:
//!
//! | functional | value |
//! |---|---|
//! | total variation | `1/2 sum |m1 - m2|` |
//! | Hellinger | `sqrt(1 - sum sqrt(m1 m2))` |
//! | KL | `sum m1 ln(m1 / m2)` |
//! | Renyi(alpha) | `ln(sum m1^alpha m2^(1 - alpha)) / (alpha - 1)` |
//! | generic phi | `sum m1 phi(m2 / m1)` |

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Sample;
use crate::error::{Error, Result};
use crate::model::MassPair;
use crate::partition::{common_refinement, Partition, Region};
use crate::sampler::Trace;

/// A user-supplied convex `phi` with `phi(1) = 0`.
#[derive(Clone)]
pub struct GenericPhi {
    name: String,
    f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl GenericPhi {
    pub fn eval(&self, t: f64) -> f64 {
        (self.f)(t)
    }
}

impl fmt::Debug for GenericPhi {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GenericPhi").field("name", &self.name).finish()
    }
}

#[derive(Clone, Debug)]
pub enum PhiSpec {
    TotalVariation,
    Hellinger,
    KullbackLeibler,
    Renyi(f64),
    Generic(GenericPhi),
}

impl PartialEq for PhiSpec {
    fn eq(&self, other: &Self) -> bool {
        use PhiSpec::*;
        match (self, other) {
            (TotalVariation, TotalVariation) | (Hellinger, Hellinger) | (KullbackLeibler, KullbackLeibler) => true,
            (Renyi(a), Renyi(b)) => a == b,
            (Generic(a), Generic(b)) => a.name == b.name && Arc::ptr_eq(&a.f, &b.f),
            _ => false,
        }
    }
}

impl PhiSpec {
    pub fn renyi(alpha: f64) -> Result<Self> {
        if !alpha.is_finite() || alpha == 1.0 {
            return Err(Error::BadPhi(format!("renyi:{alpha}")));
        }
        Ok(PhiSpec::Renyi(alpha))
    }

    /// Wraps a convex function; rejects it unless `phi(1) = 0`.
    pub fn generic(name: &str, f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Result<Self> {
        let at_one = f(1.0);
        if !(at_one.abs() <= 1e-12) {
            return Err(Error::BadPhi(format!("{name}: phi(1) = {at_one}, expected 0")));
        }
        Ok(PhiSpec::Generic(GenericPhi {
            name: name.to_string(),
            f: Arc::new(f),
        }))
    }

    /// Total variation, Hellinger, KL and Renyi with alpha = 2.
    pub fn standard_set() -> Vec<PhiSpec> {
        vec![
            PhiSpec::TotalVariation,
            PhiSpec::Hellinger,
            PhiSpec::KullbackLeibler,
            PhiSpec::Renyi(2.0),
        ]
    }

    pub fn name(&self) -> String {
        match self {
            PhiSpec::TotalVariation => "tv".into(),
            PhiSpec::Hellinger => "hellinger".into(),
            PhiSpec::KullbackLeibler => "kl".into(),
            PhiSpec::Renyi(a) => format!("renyi:{a}"),
            PhiSpec::Generic(g) => g.name.clone(),
        }
    }

    pub fn is_kl(&self) -> bool {
        matches!(self, PhiSpec::KullbackLeibler)
    }
}

impl fmt::Display for PhiSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl FromStr for PhiSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim().to_ascii_lowercase();
        match t.as_str() {
            "tv" | "total_variation" => Ok(PhiSpec::TotalVariation),
            "hellinger" => Ok(PhiSpec::Hellinger),
            "kl" => Ok(PhiSpec::KullbackLeibler),
            _ => {
                let alpha = t
                    .strip_prefix("renyi:")
                    .or_else(|| t.strip_prefix("alpha:"))
                    .and_then(|a| a.parse::<f64>().ok())
                    .ok_or_else(|| Error::BadPhi(s.to_string()))?;
                PhiSpec::renyi(alpha)
            }
        }
    }
}

/// Parses a comma list such as `tv,hellinger,kl,renyi:2.0`.
pub fn parse_phi_list(s: &str) -> Result<Vec<PhiSpec>> {
    if s.trim() == "all" {
        return Ok(PhiSpec::standard_set());
    }
    s.split(',')
        .filter(|t| !t.trim().is_empty())
        .map(str::parse)
        .collect()
}

/// Evaluates `phi` over cells `(m1, m2, multiplicity)`; identical cells may
/// be folded into one entry.
pub(crate) fn discrepancy_cells<I>(phi: &PhiSpec, cells: I) -> Result<f64>
where
    I: IntoIterator<Item = (f64, f64, f64)>,
{
    let mut acc = 0.0;
    for (i, (m1, m2, mult)) in cells.into_iter().enumerate() {
        let term = match phi {
            PhiSpec::TotalVariation => (m1 - m2).abs(),
            PhiSpec::Hellinger => (m1 * m2).sqrt(),
            PhiSpec::KullbackLeibler => {
                if m1 == 0.0 {
                    0.0
                } else if m2 == 0.0 {
                    return Err(Error::SingularMass { region: i });
                } else {
                    m1 * (m1 / m2).ln()
                }
            }
            PhiSpec::Renyi(alpha) => {
                if m1 == 0.0 && *alpha > 0.0 {
                    0.0
                } else if m2 == 0.0 && *alpha > 1.0 {
                    return Err(Error::SingularMass { region: i });
                } else {
                    m1.powf(*alpha) * m2.powf(1.0 - alpha)
                }
            }
            PhiSpec::Generic(g) => {
                if m1 == 0.0 {
                    if m2 == 0.0 {
                        0.0
                    } else {
                        return Err(Error::SingularMass { region: i });
                    }
                } else {
                    m1 * g.eval(m2 / m1)
                }
            }
        };
        acc += mult * term;
    }
    Ok(match phi {
        PhiSpec::TotalVariation => 0.5 * acc,
        PhiSpec::Hellinger => (1.0 - acc).max(0.0).sqrt(),
        PhiSpec::Renyi(alpha) => acc.ln() / (alpha - 1.0),
        PhiSpec::KullbackLeibler | PhiSpec::Generic(_) => acc,
    })
}

pub fn discrepancy(phi: &PhiSpec, m: &MassPair) -> Result<f64> {
    if m.first.len() != m.second.len() {
        return Err(Error::DimensionMismatch {
            expected: m.first.len(),
            found: m.second.len(),
        });
    }
    discrepancy_cells(phi, m.first.iter().zip(&m.second).map(|(&a, &b)| (a, b, 1.0)))
}

/// Quantile with linear interpolation between order statistics.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = q.clamp(0.0, 1.0) * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub phi: String,
    pub median: f64,
    pub mean: f64,
    pub std: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n_draws: usize,
    #[serde(skip)]
    pub draws: Vec<f64>,
}

impl PosteriorSummary {
    /// Median, mean, sample standard deviation and the central `level`
    /// interval of `draws`.
    pub fn from_draws(phi: &str, draws: Vec<f64>, level: f64) -> Result<Self> {
        if draws.is_empty() {
            return Err(Error::Empty("no posterior draws to summarise"));
        }
        if !(level > 0.0 && level < 1.0) {
            return Err(Error::Invalid(format!("credible level {level} outside (0, 1)")));
        }
        let mut sorted = draws.clone();
        sorted.sort_by(f64::total_cmp);
        let n = draws.len() as f64;
        let mean = draws.iter().sum::<f64>() / n;
        let std = if draws.len() > 1 {
            (draws.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        let tail = (1.0 - level) / 2.0;
        Ok(PosteriorSummary {
            phi: phi.to_string(),
            median: quantile(&sorted, 0.5),
            mean,
            std,
            ci_low: quantile(&sorted, tail),
            ci_high: quantile(&sorted, 1.0 - tail),
            n_draws: draws.len(),
            draws,
        })
    }
}

/// Evaluates `phi` on every recorded mass pair and summarises the draws.
pub fn summarize(t: &Trace, phi: &PhiSpec, level: f64) -> Result<PosteriorSummary> {
    if t.records.is_empty() {
        return Err(Error::Empty("trace has no recorded states"));
    }
    let draws = posterior_draws(t, phi)?;
    PosteriorSummary::from_draws(&phi.name(), draws, level)
}

pub fn posterior_draws(t: &Trace, phi: &PhiSpec) -> Result<Vec<f64>> {
    t.records
        .par_iter()
        .map(|r| discrepancy(phi, &r.masses))
        .collect()
}

/// Quartiles and 1.5 IQR whiskers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxPlot {
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub whisker_low: f64,
    pub whisker_high: f64,
    pub n_outliers: usize,
    pub n: usize,
}

impl BoxPlot {
    pub fn from_draws(draws: &[f64]) -> Result<Self> {
        if draws.is_empty() {
            return Err(Error::Empty("no draws for box plot"));
        }
        let mut s = draws.to_vec();
        s.sort_by(f64::total_cmp);
        let q1 = quantile(&s, 0.25);
        let q3 = quantile(&s, 0.75);
        let iqr = q3 - q1;
        let (lo_fence, hi_fence) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
        let inside = s.iter().copied().filter(|v| *v >= lo_fence && *v <= hi_fence);
        let whisker_low = inside.clone().fold(f64::INFINITY, f64::min);
        let whisker_high = inside.fold(f64::NEG_INFINITY, f64::max);
        Ok(BoxPlot {
            q1,
            median: quantile(&s, 0.5),
            q3,
            whisker_low,
            whisker_high,
            n_outliers: s.iter().filter(|v| **v < lo_fence || **v > hi_fence).count(),
            n: s.len(),
        })
    }
}

/// Exact region probabilities of two distributions.
pub trait MassOracle {
    fn region_masses(&self, region: &Region) -> Result<(f64, f64)>;
}

impl<F> MassOracle for F
where
    F: Fn(&Region) -> Result<(f64, f64)>,
{
    fn region_masses(&self, region: &Region) -> Result<(f64, f64)> {
        self(region)
    }
}

/// Plug-in value `sum P1(r) phi(P2(r) / P1(r))` on the regions of `p` with
/// exact masses; never exceeds the true divergence.
pub fn plugin_lower_bound(phi: &PhiSpec, p: &Partition, oracle: &dyn MassOracle) -> Result<f64> {
    let masses: Vec<(f64, f64)> = p
        .regions()
        .iter()
        .map(|r| oracle.region_masses(r))
        .collect::<Result<_>>()?;
    discrepancy_cells(phi, masses.into_iter().map(|(a, b)| (a, b, 1.0)))
}

/// Moves `masses` on `from` onto the finer partition `to`, proportionally
/// to volume.
pub fn push_masses(from: &Partition, masses: &[f64], to: &Partition) -> Result<Vec<f64>> {
    if masses.len() != from.depth() {
        return Err(Error::Misaligned {
            counts: masses.len(),
            regions: from.depth(),
        });
    }
    to.regions()
        .iter()
        .map(|cell| {
            let (i, r) = from
                .regions()
                .iter()
                .enumerate()
                .find(|(_, r)| cell.is_within(r))
                .ok_or_else(|| Error::Invalid("target partition does not refine the source".into()))?;
            Ok(masses[i] * cell.volume() / r.volume())
        })
        .collect()
}

/// Divergence between two piecewise-constant densities on different
/// partitions, evaluated on their common refinement.
pub fn two_step_estimate(
    phi: &PhiSpec,
    pa: &Partition,
    ma: &[f64],
    pb: &Partition,
    mb: &[f64],
) -> Result<f64> {
    let joint = common_refinement(pa, pb)?;
    let first = push_masses(pa, ma, &joint)?;
    let second = push_masses(pb, mb, &joint)?;
    discrepancy(phi, &MassPair::new(first, second)?)
}

/// Number of uniform points appended to a sample of size `n` at fraction `pi`.
pub fn augmentation_size(n: usize, pi: f64) -> usize {
    let raw = pi * n as f64 / (1.0 - pi);
    (raw - 1e-9).ceil().max(0.0) as usize
}

/// Appends `ceil(pi n_k / (1 - pi))` uniform points to each sample so that a
/// fraction `pi` of each is uniform. Smooths both densities towards uniform,
/// trading bias for lower variance.
pub fn augment_uniform<R: Rng + ?Sized>(
    x: &Sample,
    y: &Sample,
    pi: f64,
    rng: &mut R,
) -> Result<(Sample, Sample)> {
    if !(0.0..1.0).contains(&pi) {
        return Err(Error::Invalid(format!("augmentation fraction {pi} outside [0, 1)")));
    }
    let mut grow = |s: &Sample| -> Result<Sample> {
        let extra = augmentation_size(s.len(), pi);
        let coords: Vec<f64> = (0..extra * s.dim()).map(|_| rng.random::<f64>()).collect();
        s.with_extra_points(&coords)
    };
    let xa = grow(x)?;
    let ya = grow(y)?;
    Ok((xa, ya))
}
