//! Metropolis-Hastings over decision sequences.
//!
//! Each step either appends one cut (extend) or drops the last one (shrink).
//! Extend candidates are chosen uniformly or, for the guided kernel, in
//! proportion to the marginal-posterior gain of each cut. Masses are
//! integrated out of the acceptance ratio and refreshed from their
//! Dirichlet full conditional whenever a state is recorded.
//!
//! Per-region statistics (lower-half counts and candidate log-weights for
//! every axis) are cached, so a step costs `O(l d)` plus a scan of the
//! points of the region being split when an extend is accepted.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::data::{count, CountPair, Sample};
use crate::error::{Error, Result};
use crate::model::{log_marginal, sample_masses, Hyperparams, LnGammaTable, MassPair};
use crate::partition::{cell_index, Action, Partition, MAX_SPLITS_PER_AXIS};

const LN_2: f64 = std::f64::consts::LN_2;

pub type ChainRng = ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProposalKind {
    Guided,
    Uniform,
}

impl ProposalKind {
    /// Guided up to five dimensions, uniform above.
    pub fn default_for(dim: usize) -> Self {
        if dim <= 5 {
            ProposalKind::Guided
        } else {
            ProposalKind::Uniform
        }
    }
}

impl FromStr for ProposalKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "guided" => Ok(ProposalKind::Guided),
            "uniform" => Ok(ProposalKind::Uniform),
            other => Err(Error::BadConfig(format!("unknown proposal kind `{other}`"))),
        }
    }
}

impl fmt::Display for ProposalKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ProposalKind::Guided => "guided",
            ProposalKind::Uniform => "uniform",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    pub proposal: ProposalKind,
    pub hyper: Hyperparams,
}

impl ChainConfig {
    /// 8000 iterations with 5000 burn-in and default hyperparameters.
    pub fn for_dimension(dim: usize) -> Self {
        ChainConfig {
            iterations: 8000,
            burn_in: 5000,
            thin: 1,
            seed: 0,
            proposal: ProposalKind::default_for(dim),
            hyper: Hyperparams::for_dimension(dim),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.burn_in >= self.iterations {
            return Err(Error::BadConfig(format!(
                "burn-in ({}) must be smaller than the number of iterations ({})",
                self.burn_in, self.iterations
            )));
        }
        if self.thin == 0 {
            return Err(Error::BadConfig("thinning stride must be at least 1".into()));
        }
        self.hyper.validate()
    }

    /// Number of recorded states.
    pub fn retained(&self) -> usize {
        (self.iterations - self.burn_in) / self.thin
    }
}

/// Seed of replicate `index` derived from a master seed.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    fn splitmix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    splitmix(master ^ splitmix(index))
}

#[derive(Clone, Debug, PartialEq)]
struct RegionStats {
    /// Per axis, the X and Y counts in the lower half.
    lower: Vec<[u32; 2]>,
    /// Per axis, the local log-weight of cutting there; `-inf` when the axis
    /// is at the split limit.
    log_w: Vec<f64>,
    log_sum: f64,
}

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Local part of the marginal-posterior ratio for cutting a region with
/// counts `n` into a lower half with counts `lower`.
#[inline]
fn cut_log_weight(lg: &LnGammaTable, n: [usize; 2], lower: [u32; 2]) -> f64 {
    let mut w = (n[0] + n[1]) as f64 * LN_2;
    for k in 0..2 {
        let lo = lower[k] as usize;
        w += lg.get(lo) + lg.get(n[k] - lo) - lg.get(n[k]);
    }
    w
}

impl RegionStats {
    fn finish(lower: Vec<[u32; 2]>, splits: impl Fn(usize) -> u8, n: [usize; 2], lg: &LnGammaTable) -> Self {
        let log_w: Vec<f64> = lower
            .iter()
            .enumerate()
            .map(|(j, &lo)| {
                if splits(j) >= MAX_SPLITS_PER_AXIS {
                    f64::NEG_INFINITY
                } else {
                    cut_log_weight(lg, n, lo)
                }
            })
            .collect();
        let log_sum = log_sum_exp(log_w.iter().copied());
        RegionStats {
            lower,
            log_w,
            log_sum,
        }
    }

    fn compute(
        p: &Partition,
        c: &CountPair,
        x: &Sample,
        y: &Sample,
        i: usize,
        lg: &LnGammaTable,
    ) -> Self {
        let r = p.region(i);
        let d = p.dim();
        let mut lower = vec![[0u32; 2]; d];
        for (k, s) in [x, y].into_iter().enumerate() {
            for &idx in c.members(k, i) {
                let pt = s.point(idx as usize);
                for (j, lo) in lower.iter_mut().enumerate() {
                    let e = r.splits(j);
                    if e < MAX_SPLITS_PER_AXIS && cell_index(pt[j], e + 1) & 1 == 0 {
                        lo[k] += 1;
                    }
                }
            }
        }
        let n = [c.count(0, i), c.count(1, i)];
        RegionStats::finish(lower, |j| r.splits(j), n, lg)
    }

    /// Statistics of the parent of `lo` and `hi`, split along `axis`.
    fn merge(
        lo: &RegionStats,
        hi: &RegionStats,
        axis: usize,
        n_lo: [usize; 2],
        n_hi: [usize; 2],
        parent_splits: impl Fn(usize) -> u8,
        lg: &LnGammaTable,
    ) -> Self {
        let lower: Vec<[u32; 2]> = (0..lo.lower.len())
            .map(|j| {
                if j == axis {
                    [n_lo[0] as u32, n_lo[1] as u32]
                } else {
                    [lo.lower[j][0] + hi.lower[j][0], lo.lower[j][1] + hi.lower[j][1]]
                }
            })
            .collect();
        let n = [n_lo[0] + n_hi[0], n_lo[1] + n_hi[1]];
        RegionStats::finish(lower, parent_splits, n, lg)
    }
}

/// Guided extend probabilities for every `(region, axis)` candidate,
/// region-major. Computed from scratch by scanning each region's points.
pub fn extend_weights(
    p: &Partition,
    c: &CountPair,
    x: &Sample,
    y: &Sample,
    h: &Hyperparams,
) -> Result<Vec<f64>> {
    c.check_aligned(p)?;
    if p.depth() >= h.max_depth {
        return Err(Error::BadConfig(format!(
            "depth cap {} reached; no extend candidates",
            h.max_depth
        )));
    }
    let lg = LnGammaTable::new(h.delta, c.total(0).max(c.total(1)));
    let log_w: Vec<f64> = (0..p.depth())
        .flat_map(|i| RegionStats::compute(p, c, x, y, i, &lg).log_w)
        .collect();
    let total = log_sum_exp(log_w.iter().copied());
    Ok(log_w.into_iter().map(|w| (w - total).exp()).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Move {
    Extend(Action),
    Shrink(Action),
}

/// A proposed move with both transition log-probabilities and the log
/// marginal of the proposed state.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Proposal {
    pub mv: Move,
    pub log_forward: f64,
    pub log_reverse: f64,
    pub log_marginal: f64,
}

/// Why an extend could not be proposed. Both cases are zero-probability
/// targets and count as rejections.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Blocked {
    DepthCap,
    SplitLimit,
}

/// `min(1, exp(lm' + rev - lm - fwd))`.
pub fn accept_prob(current_log_marginal: f64, proposal: &Proposal) -> f64 {
    let log_ratio = proposal.log_marginal + proposal.log_reverse
        - current_log_marginal
        - proposal.log_forward;
    if log_ratio.is_nan() {
        return 0.0;
    }
    log_ratio.min(0.0).exp()
}

/// One chain: the current decision sequence with its counts and caches.
pub struct Chain<'a> {
    x: &'a Sample,
    y: &'a Sample,
    hyper: Hyperparams,
    kernel: ProposalKind,
    partition: Partition,
    counts: CountPair,
    stats: Vec<RegionStats>,
    log_marginal: f64,
    lg: LnGammaTable,
    totals: [usize; 2],
}

impl<'a> Chain<'a> {
    /// Starts at the root partition.
    pub fn new(x: &'a Sample, y: &'a Sample, hyper: Hyperparams, kernel: ProposalKind) -> Result<Self> {
        let dim = if !x.is_empty() {
            x.dim()
        } else if !y.is_empty() {
            y.dim()
        } else {
            x.dim().max(y.dim())
        };
        Chain::from_partition(x, y, hyper, kernel, Partition::root(dim)?)
    }

    pub fn from_partition(
        x: &'a Sample,
        y: &'a Sample,
        hyper: Hyperparams,
        kernel: ProposalKind,
        partition: Partition,
    ) -> Result<Self> {
        hyper.validate()?;
        let counts = count(x, y, &partition)?;
        let totals = [counts.total(0), counts.total(1)];
        let lg = LnGammaTable::new(hyper.delta, totals[0].max(totals[1]));
        let stats = (0..partition.depth())
            .map(|i| RegionStats::compute(&partition, &counts, x, y, i, &lg))
            .collect();
        let log_marginal = log_marginal(&partition, &counts, &hyper)?;
        Ok(Chain {
            x,
            y,
            hyper,
            kernel,
            partition,
            counts,
            stats,
            log_marginal,
            lg,
            totals,
        })
    }

    pub fn partition(&self) -> &Partition {
        &self.partition
    }

    pub fn counts(&self) -> &CountPair {
        &self.counts
    }

    pub fn log_marginal(&self) -> f64 {
        self.log_marginal
    }

    pub fn depth(&self) -> usize {
        self.partition.depth()
    }

    /// Change in the log marginal from appending a cut with local weight
    /// `w` to a depth-`l` sequence.
    fn extend_delta(&self, l: usize, w: f64) -> f64 {
        let dim = self.partition.dim();
        let prior = self.hyper.log_depth_prior(l + 1, dim) - self.hyper.log_depth_prior(l, dim);
        let delta = self.hyper.delta;
        let global: f64 = self
            .totals
            .iter()
            .map(|&n| ln_gamma(n as f64 + delta * (l + 1) as f64) - ln_gamma(n as f64 + delta * l as f64))
            .sum();
        prior + w - global
    }

    fn log_normalizer(&self) -> f64 {
        log_sum_exp(self.stats.iter().map(|s| s.log_sum))
    }

    /// Log-probability that the extend kernel picks `a` at the current state.
    fn log_kernel(&self, a: Action) -> f64 {
        match self.kernel {
            ProposalKind::Guided => self.stats[a.region].log_w[a.axis] - self.log_normalizer(),
            ProposalKind::Uniform => -((self.depth() * self.partition.dim()) as f64).ln(),
        }
    }

    pub fn evaluate_extend(&self, a: Action) -> std::result::Result<Proposal, Blocked> {
        let l = self.depth();
        if l >= self.hyper.max_depth {
            return Err(Blocked::DepthCap);
        }
        if self.partition.check_action(a).is_err() {
            return Err(Blocked::SplitLimit);
        }
        let w = self.stats[a.region].log_w[a.axis];
        Ok(Proposal {
            mv: Move::Extend(a),
            log_forward: self.hyper.p_up_at(l).ln() + self.log_kernel(a),
            log_reverse: self.hyper.p_down_at(l + 1).ln(),
            log_marginal: self.log_marginal + self.extend_delta(l, w),
        })
    }

    /// Statistics of the region the last cut would merge back into.
    fn merged_stats(&self, a: Action) -> RegionStats {
        let l = self.depth();
        let parent = self.partition.region(a.region);
        RegionStats::merge(
            &self.stats[a.region],
            &self.stats[l - 1],
            a.axis,
            [self.counts.count(0, a.region), self.counts.count(1, a.region)],
            [self.counts.count(0, l - 1), self.counts.count(1, l - 1)],
            |j| parent.splits(j) - u8::from(j == a.axis),
            &self.lg,
        )
    }

    /// The shrink move, or `None` at the root.
    pub fn evaluate_shrink(&self) -> Option<Proposal> {
        let a = self.partition.last_action()?;
        let l = self.depth();
        let merged = self.merged_stats(a);
        let w = merged.log_w[a.axis];
        let reverse_kernel = match self.kernel {
            ProposalKind::Guided => {
                let others = self
                    .stats
                    .iter()
                    .enumerate()
                    .filter(|&(i, _)| i != a.region && i != l - 1)
                    .map(|(_, s)| s.log_sum)
                    .chain(std::iter::once(merged.log_sum));
                let lse = {
                    let v: Vec<f64> = others.collect();
                    log_sum_exp(v.iter().copied())
                };
                w - lse
            }
            ProposalKind::Uniform => -(((l - 1) * self.partition.dim()) as f64).ln(),
        };
        Some(Proposal {
            mv: Move::Shrink(a),
            log_forward: self.hyper.p_down_at(l).ln(),
            log_reverse: self.hyper.p_up_at(l - 1).ln() + reverse_kernel,
            log_marginal: self.log_marginal - self.extend_delta(l - 1, w),
        })
    }

    fn sample_extend_action<R: Rng + ?Sized>(&self, rng: &mut R) -> Action {
        let d = self.partition.dim();
        match self.kernel {
            ProposalKind::Uniform => {
                let k = rng.random_range(0..self.depth() * d);
                Action::new(k / d, k % d)
            }
            ProposalKind::Guided => {
                let max = self
                    .stats
                    .iter()
                    .map(|s| s.log_sum)
                    .fold(f64::NEG_INFINITY, f64::max);
                let weights: Vec<f64> = self.stats.iter().map(|s| (s.log_sum - max).exp()).collect();
                let total: f64 = weights.iter().sum();
                let mut target = rng.random::<f64>() * total;
                let mut region = self.depth() - 1;
                for (i, &w) in weights.iter().enumerate() {
                    if target < w {
                        region = i;
                        break;
                    }
                    target -= w;
                }
                let s = &self.stats[region];
                let axis_w: Vec<f64> = s.log_w.iter().map(|&w| (w - s.log_sum).exp()).collect();
                let mut target = rng.random::<f64>() * axis_w.iter().sum::<f64>();
                let mut axis = None;
                for (j, &w) in axis_w.iter().enumerate() {
                    if w > 0.0 {
                        axis = Some(j);
                        if target < w {
                            break;
                        }
                        target -= w;
                    }
                }
                Action::new(region, axis.unwrap_or(0))
            }
        }
    }

    /// Draws a move: extend with probability `p(l+1|l)`, otherwise shrink.
    pub fn propose<R: Rng + ?Sized>(&self, rng: &mut R) -> std::result::Result<Proposal, Blocked> {
        let l = self.depth();
        let up = l == 1 || rng.random::<f64>() < self.hyper.p_up_at(l);
        if up {
            if l >= self.hyper.max_depth {
                return Err(Blocked::DepthCap);
            }
            let a = self.sample_extend_action(rng);
            self.evaluate_extend(a)
        } else {
            Ok(self.evaluate_shrink().expect("depth > 1"))
        }
    }

    /// Moves to the proposed state.
    pub fn apply(&mut self, proposal: &Proposal) -> Result<()> {
        match proposal.mv {
            Move::Extend(a) => {
                self.counts.split(self.x, self.y, &self.partition, a)?;
                self.partition.push(a)?;
                let l = self.depth();
                self.stats[a.region] =
                    RegionStats::compute(&self.partition, &self.counts, self.x, self.y, a.region, &self.lg);
                self.stats.push(RegionStats::compute(
                    &self.partition,
                    &self.counts,
                    self.x,
                    self.y,
                    l - 1,
                    &self.lg,
                ));
            }
            Move::Shrink(a) => {
                let merged = self.merged_stats(a);
                let popped = self.partition.pop()?;
                debug_assert_eq!(popped, a);
                self.counts.merge_last(a)?;
                self.stats.pop();
                self.stats[a.region] = merged;
            }
        }
        self.log_marginal = proposal.log_marginal;
        Ok(())
    }

    /// One Metropolis-Hastings step.
    pub fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<StepOutcome> {
        match self.propose(rng) {
            Err(b) => Ok(StepOutcome::Blocked(b)),
            Ok(prop) => {
                let alpha = accept_prob(self.log_marginal, &prop);
                if rng.random::<f64>() < alpha {
                    self.apply(&prop)?;
                    Ok(StepOutcome::Accepted)
                } else {
                    Ok(StepOutcome::Rejected)
                }
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StepOutcome {
    Accepted,
    Rejected,
    Blocked(Blocked),
}

/// One recorded state.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceRecord {
    pub iteration: usize,
    pub depth: usize,
    pub actions: Vec<Action>,
    pub masses: MassPair,
    pub log_marginal: f64,
    pub accepted: bool,
}

#[derive(Serialize)]
struct TraceLine<'r> {
    iteration: usize,
    depth: usize,
    sequence: String,
    log_marginal: f64,
    accepted: bool,
    m1: &'r [f64],
    m2: &'r [f64],
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trace {
    pub dim: usize,
    pub iterations: usize,
    pub records: Vec<TraceRecord>,
    /// Accepted moves over all iterations, burn-in included.
    pub acceptance_rate: f64,
    /// Depth counts over recorded states.
    pub depth_histogram: BTreeMap<usize, usize>,
    /// Extend proposals refused because the depth cap was reached.
    pub depth_cap_hits: usize,
    /// Highest log marginal visited and the sequence that attained it.
    pub map_log_marginal: f64,
    pub map_actions: Vec<Action>,
}

impl Trace {
    pub fn mean_depth(&self) -> f64 {
        if self.records.is_empty() {
            return f64::NAN;
        }
        self.records.iter().map(|r| r.depth as f64).sum::<f64>() / self.records.len() as f64
    }

    pub fn map_partition(&self) -> Result<Partition> {
        Partition::from_actions(self.dim, &self.map_actions)
    }

    /// One JSON object per recorded state.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        for r in &self.records {
            let line = TraceLine {
                iteration: r.iteration,
                depth: r.depth,
                sequence: sequence_string(self.dim, &r.actions),
                log_marginal: r.log_marginal,
                accepted: r.accepted,
                m1: &r.masses.first,
                m2: &r.masses.second,
            };
            serde_json::to_writer(&mut w, &line)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }
}

pub fn sequence_string(dim: usize, actions: &[Action]) -> String {
    let mut s = dim.to_string();
    for a in actions {
        s.push(';');
        s.push_str(&a.to_string());
    }
    s
}

/// Runs one chain from the root partition.
pub fn run_chain(x: &Sample, y: &Sample, cfg: &ChainConfig) -> Result<Trace> {
    cfg.validate()?;
    if !x.is_empty() && !y.is_empty() && x.dim() != y.dim() {
        return Err(Error::DimensionMismatch {
            expected: x.dim(),
            found: y.dim(),
        });
    }
    let mut rng = ChainRng::seed_from_u64(cfg.seed);
    let mut chain = Chain::new(x, y, cfg.hyper.clone(), cfg.proposal)?;
    let mut records = Vec::with_capacity(cfg.retained());
    let mut accepted_total = 0usize;
    let mut depth_cap_hits = 0usize;
    let mut map_log_marginal = chain.log_marginal();
    let mut map_actions = Vec::new();
    for t in 1..=cfg.iterations {
        let outcome = chain.step(&mut rng)?;
        let accepted = outcome == StepOutcome::Accepted;
        if accepted {
            accepted_total += 1;
            if chain.log_marginal() > map_log_marginal {
                map_log_marginal = chain.log_marginal();
                map_actions = chain.partition().actions().to_vec();
            }
        }
        if outcome == StepOutcome::Blocked(Blocked::DepthCap) {
            depth_cap_hits += 1;
        }
        if t > cfg.burn_in && (t - cfg.burn_in) % cfg.thin == 0 {
            let masses = sample_masses(chain.counts(), &cfg.hyper, &mut rng);
            records.push(TraceRecord {
                iteration: t,
                depth: chain.depth(),
                actions: chain.partition().actions().to_vec(),
                masses,
                log_marginal: chain.log_marginal(),
                accepted,
            });
        }
    }
    let mut depth_histogram = BTreeMap::new();
    for r in &records {
        *depth_histogram.entry(r.depth).or_insert(0) += 1;
    }
    Ok(Trace {
        dim: chain.partition().dim(),
        iterations: cfg.iterations,
        records,
        acceptance_rate: accepted_total as f64 / cfg.iterations as f64,
        depth_histogram,
        depth_cap_hits,
        map_log_marginal,
        map_actions,
    })
}

/// Runs `chains` independent replicates in parallel, seeded by
/// [`derive_seed`] from `cfg.seed`.
pub fn run_chains(x: &Sample, y: &Sample, cfg: &ChainConfig, chains: usize) -> Result<Vec<Trace>> {
    (0..chains)
        .into_par_iter()
        .map(|i| {
            let cfg = ChainConfig {
                seed: derive_seed(cfg.seed, i as u64),
                ..cfg.clone()
            };
            run_chain(x, y, &cfg)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{recount_extend, Label};
    use approx::assert_relative_eq;

    fn sample(d: usize, coords: &[f64], label: Label) -> Sample {
        Sample::new(d, coords.to_vec(), label).unwrap()
    }

    fn random_sample(n: usize, d: usize, label: Label, seed: u64) -> Sample {
        let mut rng = ChainRng::seed_from_u64(seed);
        let coords: Vec<f64> = (0..n * d).map(|_| rng.random::<f64>().powi(2)).collect();
        Sample::new(d, coords, label).unwrap()
    }

    #[test]
    fn config_validation() {
        let mut cfg = ChainConfig::for_dimension(2);
        assert!(cfg.validate().is_ok());
        assert_eq!(cfg.retained(), 3000);
        cfg.thin = 4;
        assert_eq!(cfg.retained(), 750);
        cfg.thin = 0;
        assert!(cfg.validate().is_err());
        cfg.thin = 1;
        cfg.burn_in = cfg.iterations;
        assert!(cfg.validate().is_err());
        assert_eq!(ProposalKind::default_for(5), ProposalKind::Guided);
        assert_eq!(ProposalKind::default_for(6), ProposalKind::Uniform);
        assert_eq!("Uniform".parse::<ProposalKind>().unwrap(), ProposalKind::Uniform);
    }

    #[test]
    fn no_data_gives_uniform_weights() {
        let x = Sample::empty(3, Label::X);
        let y = Sample::empty(3, Label::Y);
        let p: Partition = "3;(1,1);(2,3)".parse().unwrap();
        let c = count(&x, &y, &p).unwrap();
        let w = extend_weights(&p, &c, &x, &y, &Hyperparams::for_dimension(3)).unwrap();
        assert_eq!(w.len(), 9);
        for v in w {
            assert_relative_eq!(v, 1.0 / 9.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn single_candidate_has_all_weight() {
        let x = sample(1, &[0.1, 0.2, 0.3, 0.4], Label::X);
        let y = sample(1, &[0.6, 0.7, 0.8, 0.9], Label::Y);
        let p = Partition::root(1).unwrap();
        let c = count(&x, &y, &p).unwrap();
        let w = extend_weights(&p, &c, &x, &y, &Hyperparams::for_dimension(1)).unwrap();
        assert_eq!(w, vec![1.0]);
    }

    #[test]
    fn extend_weights_fail_at_depth_cap() {
        let x = sample(1, &[0.1], Label::X);
        let y = Sample::empty(1, Label::Y);
        let p: Partition = "1;(1,1)".parse().unwrap();
        let c = count(&x, &y, &p).unwrap();
        let h = Hyperparams {
            max_depth: 2,
            ..Hyperparams::for_dimension(1)
        };
        assert!(extend_weights(&p, &c, &x, &y, &h).is_err());
    }

    #[test]
    fn guided_weights_match_marginal_ratios() {
        let x = sample(2, &[0.1, 0.1, 0.2, 0.7, 0.3, 0.3, 0.9, 0.2, 0.8, 0.85], Label::X);
        let y = sample(2, &[0.6, 0.1, 0.7, 0.7, 0.2, 0.9, 0.95, 0.95], Label::Y);
        let p: Partition = "2;(1,1)".parse().unwrap();
        let c = count(&x, &y, &p).unwrap();
        let h = Hyperparams::for_dimension(2);
        let w = extend_weights(&p, &c, &x, &y, &h).unwrap();
        let base = log_marginal(&p, &c, &h).unwrap();
        let mut ratios = Vec::new();
        for i in 0..p.depth() {
            for j in 0..2 {
                let a = Action::new(i, j);
                let p2 = p.extend(a).unwrap();
                let c2 = count(&x, &y, &p2).unwrap();
                ratios.push((log_marginal(&p2, &c2, &h).unwrap() - base).exp());
            }
        }
        let total: f64 = ratios.iter().sum();
        for (got, r) in w.iter().zip(&ratios) {
            assert_relative_eq!(*got, r / total, epsilon = 1e-12);
        }
    }

    #[test]
    fn cached_stats_match_scratch_weights_along_a_run() {
        let x = random_sample(300, 3, Label::X, 1);
        let y = random_sample(200, 3, Label::Y, 2);
        let h = Hyperparams::for_dimension(3);
        let mut chain = Chain::new(&x, &y, h.clone(), ProposalKind::Guided).unwrap();
        let mut rng = ChainRng::seed_from_u64(3);
        for _ in 0..300 {
            chain.step(&mut rng).unwrap();
            let p = chain.partition();
            let c = count(&x, &y, p).unwrap();
            assert_relative_eq!(
                chain.log_marginal(),
                log_marginal(p, &c, &h).unwrap(),
                epsilon = 1e-7,
                max_relative = 1e-10
            );
            let scratch = extend_weights(p, &c, &x, &y, &h).unwrap();
            let norm = chain.log_normalizer();
            for (k, want) in scratch.iter().enumerate() {
                let got = (chain.stats[k / 3].log_w[k % 3] - norm).exp();
                assert_relative_eq!(got, *want, epsilon = 1e-9);
            }
        }
        assert!(chain.depth() > 1);
    }

    #[test]
    fn root_always_extends() {
        let x = random_sample(20, 2, Label::X, 5);
        let y = random_sample(20, 2, Label::Y, 6);
        let chain = Chain::new(&x, &y, Hyperparams::for_dimension(2), ProposalKind::Uniform).unwrap();
        let mut rng = ChainRng::seed_from_u64(0);
        for _ in 0..50 {
            let p = chain.propose(&mut rng).unwrap();
            assert!(matches!(p.mv, Move::Extend(_)));
            assert_relative_eq!(p.log_forward, -(2f64.ln()), epsilon = 1e-12);
        }
    }

    #[test]
    fn uniform_forward_probability_counts_candidates() {
        let x = random_sample(20, 2, Label::X, 5);
        let y = random_sample(20, 2, Label::Y, 6);
        let p: Partition = "2;(1,1);(2,2)".parse().unwrap();
        let h = Hyperparams::for_dimension(2);
        let chain = Chain::from_partition(&x, &y, h, ProposalKind::Uniform, p).unwrap();
        let prop = chain.evaluate_extend(Action::new(2, 0)).unwrap();
        assert_relative_eq!(prop.log_forward, 0.5f64.ln() - 6f64.ln(), epsilon = 1e-12);
        assert_relative_eq!(prop.log_reverse, 0.5f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn guided_reverse_matches_weight_at_shrunken_state() {
        let x = random_sample(200, 2, Label::X, 8);
        let y = random_sample(150, 2, Label::Y, 9);
        let h = Hyperparams::for_dimension(2);
        let p: Partition = "2;(1,1);(2,2);(1,2);(3,1)".parse().unwrap();
        let chain = Chain::from_partition(&x, &y, h.clone(), ProposalKind::Guided, p.clone()).unwrap();
        let prop = chain.evaluate_shrink().unwrap();
        let (shrunk, a) = p.shrink().unwrap();
        let c = count(&x, &y, &shrunk).unwrap();
        let w = extend_weights(&shrunk, &c, &x, &y, &h).unwrap();
        let want = 0.5f64.ln() + w[a.region * 2 + a.axis].ln();
        assert_relative_eq!(prop.log_reverse, want, epsilon = 1e-10);
        assert_relative_eq!(prop.log_forward, 0.5f64.ln(), epsilon = 1e-12);
        assert_relative_eq!(
            prop.log_marginal,
            log_marginal(&shrunk, &c, &h).unwrap(),
            epsilon = 1e-8
        );
    }

    #[test]
    fn move_bookkeeping_is_antisymmetric() {
        let x = random_sample(120, 2, Label::X, 10);
        let y = random_sample(90, 2, Label::Y, 11);
        for kernel in [ProposalKind::Guided, ProposalKind::Uniform] {
            let mut chain = Chain::new(&x, &y, Hyperparams::for_dimension(2), kernel).unwrap();
            let mut rng = ChainRng::seed_from_u64(12);
            for _ in 0..200 {
                let prop = match chain.propose(&mut rng) {
                    Ok(p) => p,
                    Err(_) => continue,
                };
                let before = chain.log_marginal();
                chain.apply(&prop).unwrap();
                let back = match prop.mv {
                    Move::Extend(_) => chain.evaluate_shrink().unwrap(),
                    Move::Shrink(a) => chain.evaluate_extend(a).unwrap(),
                };
                assert_relative_eq!(back.log_forward, prop.log_reverse, epsilon = 1e-9);
                assert_relative_eq!(back.log_reverse, prop.log_forward, epsilon = 1e-9);
                assert_relative_eq!(back.log_marginal, before, epsilon = 1e-7);
                let alpha = accept_prob(chain.log_marginal(), &back);
                assert!((0.0..=1.0).contains(&alpha));
            }
        }
    }

    #[test]
    fn accept_prob_of_identity_is_one() {
        let p = Proposal {
            mv: Move::Extend(Action::new(0, 0)),
            log_forward: -1.3,
            log_reverse: -1.3,
            log_marginal: 4.0,
        };
        assert_eq!(accept_prob(4.0, &p), 1.0);
        let nan = Proposal {
            log_marginal: f64::NAN,
            ..p
        };
        assert_eq!(accept_prob(4.0, &nan), 0.0);
    }

    #[test]
    fn no_data_acceptance_matches_hand_formula() {
        let x = Sample::empty(2, Label::X);
        let y = Sample::empty(2, Label::Y);
        let h = Hyperparams::for_dimension(2);
        let chain = Chain::new(&x, &y, h.clone(), ProposalKind::Uniform).unwrap();
        let prop = chain.evaluate_extend(Action::new(0, 1)).unwrap();
        // exp(-sigma) * B(delta, delta)^2 / Gamma... with no data the
        // root terms vanish; the reverse move has probability p(1|2).
        let beta = crate::model::ln_multinomial_beta(&[h.delta, h.delta]);
        let ratio = (-h.sigma + 2.0 * beta).exp() * 0.5 / (1.0 / 2.0);
        assert_relative_eq!(accept_prob(chain.log_marginal(), &prop), ratio.min(1.0), epsilon = 1e-12);
    }

    #[test]
    fn depth_cap_blocks_extends() {
        let x = random_sample(50, 1, Label::X, 1);
        let y = random_sample(50, 1, Label::Y, 2);
        let h = Hyperparams {
            max_depth: 3,
            ..Hyperparams::for_dimension(1)
        };
        let cfg = ChainConfig {
            iterations: 2000,
            burn_in: 100,
            thin: 1,
            seed: 4,
            proposal: ProposalKind::Guided,
            hyper: h,
        };
        let t = run_chain(&x, &y, &cfg).unwrap();
        assert!(t.records.iter().all(|r| r.depth <= 3));
        assert!(t.depth_cap_hits > 0);
    }

    #[test]
    fn split_limit_is_a_rejection() {
        // Identical points keep attracting cuts on the same cell.
        let x = sample(1, &[0.3; 40], Label::X);
        let y = sample(1, &[0.3; 40], Label::Y);
        let mut p = Partition::root(1).unwrap();
        for _ in 0..MAX_SPLITS_PER_AXIS {
            let i = p.locate(&[0.3]).unwrap();
            p.push(Action::new(i, 0)).unwrap();
        }
        let h = Hyperparams::for_dimension(1);
        let chain = Chain::from_partition(&x, &y, h, ProposalKind::Guided, p.clone()).unwrap();
        let i = p.locate(&[0.3]).unwrap();
        assert_eq!(chain.evaluate_extend(Action::new(i, 0)), Err(Blocked::SplitLimit));
        let mut rng = ChainRng::seed_from_u64(1);
        for _ in 0..100 {
            if let Ok(prop) = chain.propose(&mut rng) {
                if let Move::Extend(a) = prop.mv {
                    assert_ne!(a.region, i);
                }
            }
        }
    }

    #[test]
    fn prior_dominates_without_data() {
        let x = Sample::empty(2, Label::X);
        let y = Sample::empty(2, Label::Y);
        let mut cfg = ChainConfig::for_dimension(2);
        cfg.hyper.sigma = 10.0;
        cfg.iterations = 3000;
        cfg.burn_in = 500;
        let t = run_chain(&x, &y, &cfg).unwrap();
        let at_root = t.depth_histogram.get(&1).copied().unwrap_or(0);
        assert!(at_root as f64 > 0.95 * t.records.len() as f64);
    }

    #[test]
    fn traces_are_reproducible() {
        let x = random_sample(100, 2, Label::X, 1);
        let y = random_sample(80, 2, Label::Y, 2);
        let mut cfg = ChainConfig::for_dimension(2);
        cfg.iterations = 600;
        cfg.burn_in = 100;
        cfg.thin = 5;
        cfg.seed = 99;
        let a = run_chain(&x, &y, &cfg).unwrap();
        let b = run_chain(&x, &y, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.records.len(), 100);
        assert!((0.0..=1.0).contains(&a.acceptance_rate));
        let mut buf = Vec::new();
        a.write_jsonl(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 100);
        let first: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        let seq: Partition = first["sequence"].as_str().unwrap().parse().unwrap();
        assert_eq!(seq.depth(), first["depth"].as_u64().unwrap() as usize);

        let other = run_chain(&x, &y, &ChainConfig { seed: 100, ..cfg.clone() }).unwrap();
        assert_ne!(a, other);
    }

    #[test]
    fn replicate_seeds_differ() {
        let seeds: std::collections::HashSet<u64> = (0..100).map(|i| derive_seed(7, i)).collect();
        assert_eq!(seeds.len(), 100);
        assert_eq!(derive_seed(7, 3), derive_seed(7, 3));
    }

    #[test]
    fn recount_used_by_apply_agrees() {
        let x = random_sample(100, 2, Label::X, 21);
        let y = random_sample(100, 2, Label::Y, 22);
        let p = Partition::root(2).unwrap();
        let mut chain = Chain::from_partition(&x, &y, Hyperparams::for_dimension(2), ProposalKind::Guided, p.clone()).unwrap();
        let a = Action::new(0, 1);
        let prop = chain.evaluate_extend(a).unwrap();
        chain.apply(&prop).unwrap();
        let c = recount_extend(&count(&x, &y, &p).unwrap(), &x, &y, &p, a).unwrap();
        assert_eq!(chain.counts().counts(0), c.counts(0));
        assert_eq!(chain.counts().counts(1), c.counts(1));
    }
}
