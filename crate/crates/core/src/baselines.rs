//! Reference estimators: nearest-neighbour KL and a regular histogram.

use std::collections::HashMap;

use rayon::prelude::*;

use crate::data::{count, Label, Sample};
use crate::divergence::{discrepancy_cells, two_step_estimate, PhiSpec};
use crate::error::{Error, Result};
use crate::partition::Partition;
use crate::sampler::{derive_seed, run_chain, ChainConfig};

/// Distances below this are treated as this value, so duplicated points
/// do not produce infinite log ratios.
pub const MIN_DISTANCE: f64 = 1e-12;

/// Squared distance to the `k`-th nearest point of `pool`, optionally
/// skipping index `skip`.
fn kth_sq_distance(x: &[f64], pool: &Sample, k: usize, skip: Option<usize>) -> f64 {
    // Ascending buffer of the k smallest squared distances seen so far.
    let mut best: Vec<f64> = Vec::with_capacity(k + 1);
    for (j, y) in pool.points().enumerate() {
        if Some(j) == skip {
            continue;
        }
        let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
        if best.len() == k && d2 >= best[k - 1] {
            continue;
        }
        let at = best.partition_point(|v| *v <= d2);
        best.insert(at, d2);
        best.truncate(k);
    }
    best[k - 1]
}

/// k-nearest-neighbour estimate of KL(p1 || p2) from `x ~ p1`, `y ~ p2`.
///
/// Each point's density under p1 uses its k-th neighbour within the rest of
/// `x`, and under p2 its k-th neighbour within `y`. The unit-ball volume
/// cancels, leaving `ln(n2 / (n1 - 1)) + d/n1 sum ln(nu_k / rho_k)`. The
/// estimate can be negative.
pub fn knn_kl(x: &Sample, y: &Sample, k: usize) -> Result<f64> {
    if x.dim() != y.dim() {
        return Err(Error::DimensionMismatch {
            expected: x.dim(),
            found: y.dim(),
        });
    }
    if k == 0 || x.len() <= k || y.len() < k {
        return Err(Error::Invalid(format!(
            "k = {k} needs n1 > k and n2 >= k (n1 = {}, n2 = {})",
            x.len(),
            y.len()
        )));
    }
    let d = x.dim() as f64;
    let floor = MIN_DISTANCE * MIN_DISTANCE;
    let sum: f64 = (0..x.len())
        .into_par_iter()
        .map(|i| {
            let xi = x.point(i);
            let rho2 = kth_sq_distance(xi, x, k, Some(i)).max(floor);
            let nu2 = kth_sq_distance(xi, y, k, None).max(floor);
            0.5 * (nu2 / rho2).ln()
        })
        .sum();
    let (n1, n2) = (x.len() as f64, y.len() as f64);
    Ok(d * sum / n1 + (n2 / (n1 - 1.0)).ln())
}

/// Plug-in divergence from a regular grid of `bins` cells per axis, with
/// `delta` added to every cell count before normalising.
pub fn histogram_divergence(x: &Sample, y: &Sample, bins: usize, phi: &PhiSpec, delta: f64) -> Result<f64> {
    if x.dim() != y.dim() {
        return Err(Error::DimensionMismatch {
            expected: x.dim(),
            found: y.dim(),
        });
    }
    if bins == 0 {
        return Err(Error::Invalid("histogram needs at least one bin".into()));
    }
    if !(delta > 0.0) {
        return Err(Error::Invalid(format!("smoothing {delta} must be positive")));
    }
    let cells = u32::try_from(x.dim())
        .ok()
        .and_then(|d| (bins as u64).checked_pow(d))
        .ok_or_else(|| Error::Invalid(format!("{bins}^{} cells overflow", x.dim())))?;
    let cell_of = |p: &[f64]| -> u64 {
        p.iter().fold(0u64, |acc, &v| {
            let i = ((v * bins as f64) as u64).min(bins as u64 - 1);
            acc * bins as u64 + i
        })
    };
    let mut occupied: HashMap<u64, [u64; 2]> = HashMap::new();
    for (k, s) in [x, y].into_iter().enumerate() {
        for p in s.points() {
            occupied.entry(cell_of(p)).or_default()[k] += 1;
        }
    }
    let total = cells as f64;
    let norm = [x.len() as f64 + delta * total, y.len() as f64 + delta * total];
    let empty = total - occupied.len() as f64;
    let mut entries: Vec<(f64, f64, f64)> = occupied
        .values()
        .map(|c| ((c[0] as f64 + delta) / norm[0], (c[1] as f64 + delta) / norm[1], 1.0))
        .collect();
    // Sort for a summation order independent of hash iteration.
    entries.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    if empty > 0.0 {
        entries.push((delta / norm[0], delta / norm[1], empty));
    }
    discrepancy_cells(phi, entries)
}

/// Separate fit of one sample: the highest-posterior partition visited and
/// its posterior-mean masses.
pub fn fit_single(s: &Sample, cfg: &ChainConfig) -> Result<(Partition, Vec<f64>)> {
    let other = Sample::empty(s.dim(), Label::Y);
    let trace = run_chain(s, &other, cfg)?;
    let map = trace.map_partition()?;
    let c = count(s, &other, &map)?;
    let delta = cfg.hyper.delta;
    let norm = s.len() as f64 + delta * map.depth() as f64;
    let masses = c.counts(0).iter().map(|&n| (n as f64 + delta) / norm).collect();
    Ok((map, masses))
}

/// Two-step reference: fit each sample on its own partition, then evaluate
/// every `phi` on the common refinement. Chain seeds derive from `cfg.seed`.
pub fn two_step_divergence(x: &Sample, y: &Sample, cfg: &ChainConfig, phis: &[PhiSpec]) -> Result<Vec<f64>> {
    let fx = ChainConfig { seed: derive_seed(cfg.seed, 0), ..cfg.clone() };
    let fy = ChainConfig { seed: derive_seed(cfg.seed, 1), ..cfg.clone() };
    let (pa, ma) = fit_single(x, &fx)?;
    let (pb, mb) = fit_single(y, &fy)?;
    phis.iter().map(|phi| two_step_estimate(phi, &pa, &ma, &pb, &mb)).collect()
}
