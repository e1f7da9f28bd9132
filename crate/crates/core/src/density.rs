//! Synthetic densities on the unit cube: evaluation, sampling and exact
//! probabilities of dyadic regions.
//!
//! Text grammar (see [`DensitySpec::from_str`]):
//!
//! ```text
//! beta:6,5                     one-dimensional beta
//! betaprod:1,2,2,3,3,4         product of per-axis betas, shapes listed in pairs
//! betaiid:1,5,10               the same beta on every one of 10 axes
//! truncnorm:0.333,0.2,4        N(mu 1, sigma^2 I) truncated to [0,1]^4
//! uniform:3
//! mix:0.4*betaprod:...+0.6*betaprod:...
//! pwc:2;(1,1);(2,2)@0.2,0.3,0.5
//! p11 | p12 | p21 | p22        built-in two-dimensional test densities
//! ```

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Beta, Distribution};
use statrs::function::beta::{beta_reg, ln_beta};
use statrs::function::erf::{erfc, erfc_inv};

use crate::data::{Label, Sample};
use crate::divergence::{MassOracle, PhiSpec};
use crate::error::{Error, Result};
use crate::model::PiecewiseDensity;
use crate::partition::{Partition, Region};

fn bad(spec: &str, msg: impl Into<String>) -> Error {
    Error::BadDensity {
        spec: spec.to_string(),
        msg: msg.into(),
    }
}

/// Beta(a, b) on one axis.
#[derive(Clone, Debug)]
pub struct BetaAxis {
    a: f64,
    b: f64,
    ln_norm: f64,
}

impl BetaAxis {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if !(a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite()) {
            return Err(bad(&format!("beta:{a},{b}"), "shapes must be positive"));
        }
        Ok(BetaAxis { a, b, ln_norm: ln_beta(a, b) })
    }

    pub fn shapes(&self) -> (f64, f64) {
        (self.a, self.b)
    }

    pub fn pdf(&self, x: f64) -> f64 {
        if !(0.0..=1.0).contains(&x) {
            return 0.0;
        }
        let term = |shape: f64, v: f64| if shape == 1.0 { 0.0 } else { (shape - 1.0) * v.ln() };
        (term(self.a, x) + term(self.b, 1.0 - x) - self.ln_norm).exp()
    }

    /// `P(lo <= X <= hi)`, taken from the nearer tail to limit cancellation.
    pub fn interval(&self, lo: f64, hi: f64) -> f64 {
        let (lo, hi) = (lo.clamp(0.0, 1.0), hi.clamp(0.0, 1.0));
        if lo >= hi {
            return 0.0;
        }
        let mid = self.a / (self.a + self.b);
        if lo >= mid {
            let sf = |x: f64| beta_reg(self.b, self.a, 1.0 - x);
            (sf(lo) - sf(hi)).max(0.0)
        } else {
            (beta_reg(self.a, self.b, hi) - beta_reg(self.a, self.b, lo)).max(0.0)
        }
    }
}

fn std_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

fn std_sf(z: f64) -> f64 {
    0.5 * erfc(z / std::f64::consts::SQRT_2)
}

fn std_interval(zl: f64, zu: f64) -> f64 {
    if zl > 0.0 {
        std_sf(zl) - std_sf(zu)
    } else {
        std_cdf(zu) - std_cdf(zl)
    }
}

/// Isotropic Gaussian `N(mean 1, scale^2 I)` restricted to the unit cube.
#[derive(Clone, Debug)]
pub struct TruncGaussian {
    dim: usize,
    mean: f64,
    scale: f64,
    axis_mass: f64,
}

impl TruncGaussian {
    pub fn new(dim: usize, mean: f64, scale: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidDimension(0));
        }
        if !(scale > 0.0 && scale.is_finite() && mean.is_finite()) {
            return Err(bad(&format!("truncnorm:{mean},{scale},{dim}"), "scale must be positive"));
        }
        let axis_mass = std_interval(-mean / scale, (1.0 - mean) / scale);
        if !(axis_mass > 0.0) {
            return Err(bad(&format!("truncnorm:{mean},{scale},{dim}"), "no mass on [0, 1]"));
        }
        Ok(TruncGaussian { dim, mean, scale, axis_mass })
    }

    pub fn params(&self) -> (usize, f64, f64) {
        (self.dim, self.mean, self.scale)
    }

    fn axis_pdf(&self, x: f64) -> f64 {
        if !(0.0..=1.0).contains(&x) {
            return 0.0;
        }
        let z = (x - self.mean) / self.scale;
        (-0.5 * z * z).exp() / ((2.0 * std::f64::consts::PI).sqrt() * self.scale * self.axis_mass)
    }

    fn axis_interval(&self, lo: f64, hi: f64) -> f64 {
        let z = |x: f64| (x.clamp(0.0, 1.0) - self.mean) / self.scale;
        (std_interval(z(lo), z(hi)) / self.axis_mass).max(0.0)
    }

    /// Inverse-CDF draw on one axis, reflected so the working tail is the lower one.
    fn axis_sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let (zl, zu) = (-self.mean / self.scale, (1.0 - self.mean) / self.scale);
        let u: f64 = rng.random();
        let x = if zl > 0.0 {
            // Sample -Z on (-zu, -zl) from the lower tail.
            let (a, b) = (std_cdf(-zu), std_cdf(-zl));
            let p = a + u * (b - a);
            self.mean - self.scale * (-std::f64::consts::SQRT_2 * erfc_inv(2.0 * p))
        } else {
            let (a, b) = (std_cdf(zl), std_cdf(zu));
            let p = a + u * (b - a);
            self.mean + self.scale * (-std::f64::consts::SQRT_2 * erfc_inv(2.0 * p))
        };
        x.clamp(0.0, 1.0)
    }
}

#[derive(Clone, Debug)]
pub enum DensitySpec {
    BetaProduct(Vec<BetaAxis>),
    /// Weights sum to one. Negative weights are allowed as long as the
    /// resulting function stays non-negative; sampling then rejects from
    /// the positive part.
    Mixture(Vec<(f64, DensitySpec)>),
    TruncGaussian(TruncGaussian),
    Uniform(usize),
    PiecewiseConstant(PiecewiseDensity),
}

impl DensitySpec {
    pub fn beta_product(shapes: &[(f64, f64)]) -> Result<Self> {
        if shapes.is_empty() {
            return Err(Error::InvalidDimension(0));
        }
        Ok(DensitySpec::BetaProduct(
            shapes.iter().map(|&(a, b)| BetaAxis::new(a, b)).collect::<Result<_>>()?,
        ))
    }

    pub fn mixture(components: Vec<(f64, DensitySpec)>) -> Result<Self> {
        let first = components.first().ok_or(Error::Empty("mixture has no components"))?;
        let dim = first.1.dim();
        if let Some((_, c)) = components.iter().find(|(_, c)| c.dim() != dim) {
            return Err(Error::DimensionMismatch { expected: dim, found: c.dim() });
        }
        let total: f64 = components.iter().map(|(w, _)| w).sum();
        if components.iter().any(|(w, _)| !w.is_finite()) || (total - 1.0).abs() > 1e-9 {
            return Err(bad("mix", format!("weights sum to {total}, expected 1")));
        }
        if !components.iter().any(|(w, _)| *w > 0.0) {
            return Err(bad("mix", "no positive weight"));
        }
        Ok(DensitySpec::Mixture(components))
    }

    pub fn trunc_gaussian(dim: usize, mean: f64, scale: f64) -> Result<Self> {
        Ok(DensitySpec::TruncGaussian(TruncGaussian::new(dim, mean, scale)?))
    }

    pub fn uniform(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidDimension(0));
        }
        Ok(DensitySpec::Uniform(dim))
    }

    /// Mixture `w * prod Beta(a, b) + (1 - w) * uniform` on `dim` axes.
    pub fn skewed(dim: usize, a: f64, b: f64, w: f64) -> Result<Self> {
        DensitySpec::mixture(vec![
            (w, DensitySpec::beta_product(&vec![(a, b); dim])?),
            (1.0 - w, DensitySpec::uniform(dim)?),
        ])
    }

    pub fn dim(&self) -> usize {
        match self {
            DensitySpec::BetaProduct(axes) => axes.len(),
            DensitySpec::Mixture(c) => c[0].1.dim(),
            DensitySpec::TruncGaussian(t) => t.dim,
            DensitySpec::Uniform(d) => *d,
            DensitySpec::PiecewiseConstant(p) => p.partition().dim(),
        }
    }

    /// Density at `x`; zero outside the cube.
    pub fn eval(&self, x: &[f64]) -> f64 {
        if x.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return 0.0;
        }
        match self {
            DensitySpec::BetaProduct(axes) => axes.iter().zip(x).map(|(b, &v)| b.pdf(v)).product(),
            DensitySpec::Mixture(c) => c.iter().map(|(w, s)| w * s.eval(x)).sum::<f64>().max(0.0),
            DensitySpec::TruncGaussian(t) => x.iter().map(|&v| t.axis_pdf(v)).product(),
            DensitySpec::Uniform(_) => 1.0,
            DensitySpec::PiecewiseConstant(p) => p.eval(x).unwrap_or(0.0),
        }
    }

    /// Exact probability of a region.
    pub fn region_mass(&self, r: &Region) -> f64 {
        match self {
            DensitySpec::BetaProduct(axes) => axes
                .iter()
                .enumerate()
                .map(|(j, b)| b.interval(r.lower(j), r.upper(j)))
                .product(),
            DensitySpec::Mixture(c) => c.iter().map(|(w, s)| w * s.region_mass(r)).sum::<f64>().max(0.0),
            DensitySpec::TruncGaussian(t) => (0..t.dim).map(|j| t.axis_interval(r.lower(j), r.upper(j))).product(),
            DensitySpec::Uniform(_) => r.volume(),
            DensitySpec::PiecewiseConstant(p) => p
                .partition()
                .regions()
                .iter()
                .zip(p.masses())
                .map(|(cell, m)| m * cell.overlap_volume(r) / cell.volume())
                .sum(),
        }
    }

    /// Draws `n` points, returned as a flat row-major coordinate vector.
    pub fn sample_coords<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<f64> {
        let mut out = Vec::with_capacity(n * self.dim());
        for _ in 0..n {
            self.draw_into(rng, &mut out);
        }
        out
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, label: Label, rng: &mut R) -> Result<Sample> {
        Sample::new(self.dim(), self.sample_coords(n, rng), label)
    }

    /// Appends one draw to `out`.
    pub fn draw_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut Vec<f64>) {
        match self {
            DensitySpec::BetaProduct(axes) => {
                for b in axes {
                    // Shapes were validated on construction.
                    let v: f64 = Beta::new(b.a, b.b).expect("valid beta shapes").sample(rng);
                    out.push(v.clamp(0.0, 1.0));
                }
            }
            DensitySpec::Mixture(c) => {
                let positive: f64 = c.iter().map(|(w, _)| w.max(0.0)).sum();
                let signed = c.iter().any(|(w, _)| *w < 0.0);
                let start = out.len();
                loop {
                    let mut u = rng.random::<f64>() * positive;
                    let pick = c
                        .iter()
                        .filter(|(w, _)| *w > 0.0)
                        .find(|(w, _)| {
                            u -= w;
                            u < 0.0
                        })
                        .or_else(|| c.iter().rev().find(|(w, _)| *w > 0.0))
                        .expect("mixture has a positive weight");
                    pick.1.draw_into(rng, out);
                    if !signed {
                        return;
                    }
                    let x = &out[start..];
                    let env: f64 = c.iter().filter(|(w, _)| *w > 0.0).map(|(w, s)| w * s.eval(x)).sum();
                    if rng.random::<f64>() * env <= self.eval(x) {
                        return;
                    }
                    out.truncate(start);
                }
            }
            DensitySpec::TruncGaussian(t) => {
                for _ in 0..t.dim {
                    out.push(t.axis_sample(rng));
                }
            }
            DensitySpec::Uniform(d) => {
                for _ in 0..*d {
                    out.push(rng.random::<f64>());
                }
            }
            DensitySpec::PiecewiseConstant(p) => {
                let mut u = rng.random::<f64>();
                let regions = p.partition().regions();
                let i = p
                    .masses()
                    .iter()
                    .position(|m| {
                        u -= m;
                        u < 0.0
                    })
                    .unwrap_or(regions.len() - 1);
                let r = &regions[i];
                for j in 0..r.dim() {
                    let (lo, hi) = (r.lower(j), r.upper(j));
                    out.push(lo + rng.random::<f64>() * (hi - lo));
                }
            }
        }
    }

    /// `9/5 U - 4/5 Beta(2,2)^2`; averages with [`DensitySpec::p12`] to uniform.
    pub fn p11() -> Self {
        let bump = DensitySpec::beta_product(&[(2.0, 2.0), (2.0, 2.0)]).expect("valid shapes");
        DensitySpec::Mixture(vec![(1.8, DensitySpec::Uniform(2)), (-0.8, bump)])
    }

    /// `1/5 U + 4/5 Beta(2,2)^2`.
    pub fn p12() -> Self {
        let bump = DensitySpec::beta_product(&[(2.0, 2.0), (2.0, 2.0)]).expect("valid shapes");
        DensitySpec::Mixture(vec![(0.2, DensitySpec::Uniform(2)), (0.8, bump)])
    }

    /// Partition shared by [`DensitySpec::p21`] and [`DensitySpec::p22`].
    pub fn sanity_partition() -> Partition {
        "2;(1,2);(1,1);(2,1);(4,2);(5,1)".parse().expect("valid sequence")
    }

    /// Piecewise constant on [`DensitySpec::sanity_partition`], coarser in effect
    /// than `p22`: it is constant across the last four cells' union.
    pub fn p21() -> Self {
        let masses = vec![1.0 / 6.0, 1.0 / 4.0, 1.0 / 3.0, 1.0 / 8.0, 1.0 / 16.0, 1.0 / 16.0];
        DensitySpec::PiecewiseConstant(
            PiecewiseDensity::new(Self::sanity_partition(), masses).expect("masses on the simplex"),
        )
    }

    pub fn p22() -> Self {
        let masses = vec![1.0 / 6.0, 1.0 / 8.0, 1.0 / 3.0, 1.0 / 8.0, 1.0 / 12.0, 1.0 / 6.0];
        DensitySpec::PiecewiseConstant(
            PiecewiseDensity::new(Self::sanity_partition(), masses).expect("masses on the simplex"),
        )
    }
}

fn fmt_num(v: f64) -> String {
    format!("{v}")
}

impl fmt::Display for DensitySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DensitySpec::BetaProduct(axes) => {
                let shapes: Vec<String> = axes.iter().flat_map(|b| [fmt_num(b.a), fmt_num(b.b)]).collect();
                if axes.len() == 1 {
                    write!(f, "beta:{}", shapes.join(","))
                } else {
                    write!(f, "betaprod:{}", shapes.join(","))
                }
            }
            DensitySpec::Mixture(c) => {
                let terms: Vec<String> = c.iter().map(|(w, s)| format!("{}*{s}", fmt_num(*w))).collect();
                write!(f, "mix:{}", terms.join("+"))
            }
            DensitySpec::TruncGaussian(t) => write!(f, "truncnorm:{},{},{}", fmt_num(t.mean), fmt_num(t.scale), t.dim),
            DensitySpec::Uniform(d) => write!(f, "uniform:{d}"),
            DensitySpec::PiecewiseConstant(p) => {
                let m: Vec<String> = p.masses().iter().map(|v| fmt_num(*v)).collect();
                write!(f, "pwc:{}@{}", p.partition(), m.join(","))
            }
        }
    }
}

fn numbers(spec: &str, body: &str) -> Result<Vec<f64>> {
    body.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| bad(spec, format!("`{t}` is not a number"))))
        .collect()
}

fn count(spec: &str, v: f64) -> Result<usize> {
    if v >= 1.0 && v.fract() == 0.0 && v < 1e6 {
        Ok(v as usize)
    } else {
        Err(bad(spec, format!("`{v}` is not a dimension")))
    }
}

/// Splits `mix` terms on `+` signs that start a new `weight*` term.
fn mixture_terms(body: &str) -> Vec<String> {
    let mut terms: Vec<String> = Vec::new();
    for piece in body.split('+') {
        match terms.last_mut() {
            Some(last) if !piece.contains('*') || last.ends_with(['e', 'E']) => {
                last.push('+');
                last.push_str(piece);
            }
            _ => terms.push(piece.to_string()),
        }
    }
    terms
}

impl FromStr for DensitySpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let spec = s.trim();
        match spec {
            "p11" => return Ok(DensitySpec::p11()),
            "p12" => return Ok(DensitySpec::p12()),
            "p21" => return Ok(DensitySpec::p21()),
            "p22" => return Ok(DensitySpec::p22()),
            _ => {}
        }
        let (tag, body) = spec.split_once(':').ok_or_else(|| bad(spec, "expected `kind:parameters`"))?;
        match tag {
            "beta" => match numbers(spec, body)?[..] {
                [a, b] => DensitySpec::beta_product(&[(a, b)]),
                _ => Err(bad(spec, "beta takes two shapes")),
            },
            "betaprod" => {
                let v = numbers(spec, body)?;
                if v.is_empty() || v.len() % 2 != 0 {
                    return Err(bad(spec, "betaprod takes shape pairs"));
                }
                let pairs: Vec<(f64, f64)> = v.chunks(2).map(|c| (c[0], c[1])).collect();
                DensitySpec::beta_product(&pairs)
            }
            "betaiid" => match numbers(spec, body)?[..] {
                [a, b, d] => DensitySpec::beta_product(&vec![(a, b); count(spec, d)?]),
                _ => Err(bad(spec, "betaiid takes a, b, dim")),
            },
            "truncnorm" => match numbers(spec, body)?[..] {
                [mu, sigma, d] => DensitySpec::trunc_gaussian(count(spec, d)?, mu, sigma),
                _ => Err(bad(spec, "truncnorm takes mean, scale, dim")),
            },
            "uniform" => match numbers(spec, body)?[..] {
                [d] => DensitySpec::uniform(count(spec, d)?),
                _ => Err(bad(spec, "uniform takes a dimension")),
            },
            "mix" => {
                let comps = mixture_terms(body)
                    .iter()
                    .map(|t| {
                        let (w, inner) = t.split_once('*').ok_or_else(|| bad(spec, "term lacks `weight*`"))?;
                        let w: f64 = w.trim().parse().map_err(|_| bad(spec, format!("bad weight `{w}`")))?;
                        Ok((w, inner.parse::<DensitySpec>()?))
                    })
                    .collect::<Result<Vec<_>>>()?;
                DensitySpec::mixture(comps)
            }
            "pwc" => {
                let (seq, masses) = body.split_once('@').ok_or_else(|| bad(spec, "expected `sequence@masses`"))?;
                let p: Partition = seq.parse()?;
                Ok(DensitySpec::PiecewiseConstant(PiecewiseDensity::new(p, numbers(spec, masses)?)?))
            }
            _ => Err(bad(spec, format!("unknown kind `{tag}`"))),
        }
    }
}

/// Exact region probabilities of a pair of densities.
#[derive(Clone, Debug)]
pub struct ExactMasses<'a> {
    pub first: &'a DensitySpec,
    pub second: &'a DensitySpec,
}

impl MassOracle for ExactMasses<'_> {
    fn region_masses(&self, region: &Region) -> Result<(f64, f64)> {
        if region.dim() != self.first.dim() || region.dim() != self.second.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.first.dim(),
                found: region.dim(),
            });
        }
        Ok((self.first.region_mass(region), self.second.region_mass(region)))
    }
}

/// A named pair of densities with any published reference values.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub name: &'static str,
    pub first: DensitySpec,
    pub second: DensitySpec,
    pub reference: Vec<(PhiSpec, f64)>,
}

pub const SCENARIOS: [&str; 9] = [
    "beta1d",
    "mixture3d",
    "truncnorm4d",
    "skewed5d",
    "skewed10d",
    "uniform-normal3d",
    "normal-shift3d",
    "sanity-mixed",
    "sanity-nested",
];

fn with_standard(values: [f64; 4]) -> Vec<(PhiSpec, f64)> {
    PhiSpec::standard_set().into_iter().zip(values).collect()
}

impl Scenario {
    pub fn by_name(name: &str) -> Result<Scenario> {
        let (first, second, reference) = match name {
            "beta1d" => (
                "beta:6,5".parse()?,
                "beta:5,6".parse()?,
                with_standard([0.2461, 0.2207, 0.2000, 0.4056]),
            ),
            "mixture3d" => (
                "mix:0.4*betaprod:1,2,2,3,3,4+0.6*betaprod:4,3,3,2,2,1".parse()?,
                "mix:0.4*betaprod:1,3,3,5,5,7+0.6*betaprod:7,5,5,3,3,1".parse()?,
                with_standard([0.2301, 0.2129, 0.2133, 0.6769]),
            ),
            "truncnorm4d" => (
                DensitySpec::trunc_gaussian(4, 1.0 / 3.0, 0.2)?,
                DensitySpec::trunc_gaussian(4, 0.5, 0.2)?,
                vec![(PhiSpec::Renyi(2.0), 2.2196)],
            ),
            "skewed5d" | "skewed10d" => {
                let d = if name == "skewed5d" { 5 } else { 10 };
                let reference = if d == 5 {
                    [0.9756, 0.9520, 7.6365, 8.9440]
                } else {
                    [0.9790, 0.9779, 11.3819, 13.8341]
                };
                (
                    DensitySpec::skewed(d, 1.0, 5.0, 24.0 / 25.0)?,
                    DensitySpec::skewed(d, 5.0, 1.0, 49.0 / 50.0)?,
                    with_standard(reference),
                )
            }
            "uniform-normal3d" => (DensitySpec::uniform(3)?, DensitySpec::trunc_gaussian(3, 0.0, 1.0 / 3.0)?, vec![]),
            "normal-shift3d" => (
                DensitySpec::trunc_gaussian(3, 0.0, 0.5)?,
                DensitySpec::trunc_gaussian(3, 1.0, 0.5)?,
                vec![],
            ),
            "sanity-mixed" => (DensitySpec::p11(), DensitySpec::p12(), vec![]),
            "sanity-nested" => (DensitySpec::p21(), DensitySpec::p22(), vec![]),
            _ => return Err(Error::Invalid(format!("unknown scenario `{name}`; known: {}", SCENARIOS.join(", ")))),
        };
        Ok(Scenario {
            name: SCENARIOS.iter().find(|n| **n == name).expect("listed above"),
            first,
            second,
            reference,
        })
    }

    pub fn dim(&self) -> usize {
        self.first.dim()
    }

    pub fn reference_for(&self, phi: &PhiSpec) -> Option<f64> {
        self.reference.iter().find(|(p, _)| p == phi).map(|(_, v)| *v)
    }

    pub fn exact_masses(&self) -> ExactMasses<'_> {
        ExactMasses {
            first: &self.first,
            second: &self.second,
        }
    }

    /// Draws `n` points from each density.
    pub fn draw<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<(Sample, Sample)> {
        Ok((self.first.sample(n, Label::X, rng)?, self.second.sample(n, Label::Y, rng)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn beta_pdf_and_intervals() {
        let b = BetaAxis::new(2.0, 2.0).unwrap();
        assert_relative_eq!(b.pdf(0.5), 1.5, epsilon = 1e-12);
        // Beta(2,2) cdf is 3x^2 - 2x^3.
        let cdf = |x: f64| 3.0 * x * x - 2.0 * x * x * x;
        assert_relative_eq!(b.interval(0.1, 0.3), cdf(0.3) - cdf(0.1), epsilon = 1e-12);
        assert_relative_eq!(b.interval(0.7, 0.95), cdf(0.95) - cdf(0.7), epsilon = 1e-12);
        let e = BetaAxis::new(1.0, 5.0).unwrap();
        assert_relative_eq!(e.pdf(0.0), 5.0, epsilon = 1e-12);
        assert!(BetaAxis::new(0.0, 1.0).is_err());
    }

    #[test]
    fn truncated_gaussian_axis_matches_quadrature() {
        let t = TruncGaussian::new(1, 1.0 / 3.0, 0.2).unwrap();
        let n = 20_000;
        let h = 1.0 / n as f64;
        let total: f64 = (0..n).map(|i| t.axis_pdf((i as f64 + 0.5) * h) * h).sum();
        assert_relative_eq!(total, 1.0, epsilon = 1e-8);
        let part: f64 = (0..n / 4).map(|i| t.axis_pdf((i as f64 + 0.5) * h) * h).sum();
        assert_relative_eq!(t.axis_interval(0.0, 0.25), part, epsilon = 1e-8);
        // Mean of 1 sits on the upper edge; reflection path.
        let r = TruncGaussian::new(1, 1.0, 0.5).unwrap();
        let tot: f64 = (0..n).map(|i| r.axis_pdf((i as f64 + 0.5) * h) * h).sum();
        assert_relative_eq!(tot, 1.0, epsilon = 1e-8);
    }

    #[test]
    fn p11_and_p12_average_to_uniform() {
        let (a, b) = (DensitySpec::p11(), DensitySpec::p12());
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let x = [rng.random::<f64>(), rng.random::<f64>()];
            assert_relative_eq!(a.eval(&x) + b.eval(&x), 2.0, epsilon = 1e-12);
            assert!(a.eval(&x) >= 0.0);
        }
    }

    #[test]
    fn nested_pair_densities() {
        let p = DensitySpec::sanity_partition();
        let vol: Vec<f64> = p.regions().iter().map(Region::volume).collect();
        let dens = |s: &DensitySpec| -> Vec<f64> {
            match s {
                DensitySpec::PiecewiseConstant(pw) => pw.masses().iter().zip(&vol).map(|(m, v)| m / v).collect(),
                _ => unreachable!(),
            }
        };
        let d21 = dens(&DensitySpec::p21());
        let d22 = dens(&DensitySpec::p22());
        // Stored region order r0, r1, r2, r3, r4, r5 maps to named cells 1, 3, 2, 4, 5, 6.
        let named = |d: &[f64]| vec![d[0], d[2], d[1], d[3], d[4], d[5]];
        let expect21 = [2.0 / 3.0, 4.0 / 3.0, 1.0, 1.0, 1.0, 1.0];
        let expect22 = [2.0 / 3.0, 4.0 / 3.0, 0.5, 1.0, 4.0 / 3.0, 8.0 / 3.0];
        for (got, want) in named(&d21).iter().zip(expect21) {
            assert_relative_eq!(*got, want, epsilon = 1e-12);
        }
        for (got, want) in named(&d22).iter().zip(expect22) {
            assert_relative_eq!(*got, want, epsilon = 1e-12);
        }
    }

    #[test]
    fn unit_cube_has_mass_one() {
        for name in SCENARIOS {
            let s = Scenario::by_name(name).unwrap();
            let unit = Region::unit(s.dim());
            assert_relative_eq!(s.first.region_mass(&unit), 1.0, epsilon = 1e-9);
            assert_relative_eq!(s.second.region_mass(&unit), 1.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn sampled_frequencies_match_region_masses() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let p: Partition = "2;(1,1);(1,2);(2,2);(3,1)".parse().unwrap();
        let n = 40_000;
        for spec in ["p11", "p12", "p21", "truncnorm:0,0.333,2", "mix:0.5*betaprod:2,5,1,1+0.5*uniform:2"] {
            let d: DensitySpec = spec.parse().unwrap();
            let coords = d.sample_coords(n, &mut rng);
            let mut counts = vec![0usize; p.depth()];
            for x in coords.chunks(2) {
                counts[p.locate(x).unwrap()] += 1;
            }
            for (r, c) in p.regions().iter().zip(&counts) {
                let m = d.region_mass(r);
                let f = *c as f64 / n as f64;
                let se = (m * (1.0 - m) / n as f64).sqrt();
                assert!((f - m).abs() < 5.0 * se + 1e-9, "{spec}: {f} vs {m}");
            }
        }
    }

    #[test]
    fn region_mass_agrees_with_midpoint_integration() {
        let d: DensitySpec = "mix:0.4*betaprod:1,2,2,3+0.6*betaprod:4,3,3,2".parse().unwrap();
        let p: Partition = "2;(1,1);(2,2);(1,2)".parse().unwrap();
        let g = 400;
        for r in p.regions() {
            let (w, h) = (r.upper(0) - r.lower(0), r.upper(1) - r.lower(1));
            let mut acc = 0.0;
            for i in 0..g {
                for j in 0..g {
                    let x = [r.lower(0) + (i as f64 + 0.5) * w / g as f64, r.lower(1) + (j as f64 + 0.5) * h / g as f64];
                    acc += d.eval(&x);
                }
            }
            assert_relative_eq!(d.region_mass(r), acc * w * h / (g * g) as f64, epsilon = 1e-5);
        }
    }

    #[test]
    fn grammar_round_trips() {
        for s in [
            "beta:6,5",
            "betaprod:1,2,2,3,3,4",
            "truncnorm:0.333,0.2,4",
            "uniform:3",
            "mix:0.4*betaprod:1,2,2,3,3,4+0.6*betaprod:4,3,3,2,2,1",
            "mix:1.8*uniform:2+-0.8*betaprod:2,2,2,2",
            "pwc:2;(1,1);(2,2)@0.2,0.3,0.5",
        ] {
            let d: DensitySpec = s.parse().unwrap();
            assert_eq!(d.to_string(), s);
        }
        assert_eq!("betaiid:1,5,10".parse::<DensitySpec>().unwrap().dim(), 10);
        for bad in ["beta:1", "uniform:0", "mix:0.5*uniform:2", "mix:0.5*uniform:2+0.5*uniform:3", "gamma:1,2", "truncnorm:0,-1,2", "beta:-1,2"] {
            assert!(bad.parse::<DensitySpec>().is_err(), "{bad}");
        }
    }
}
