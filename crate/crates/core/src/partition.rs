//! Coordinate-wise midpoint binary partitions of the unit cube.
//!
//! Every region is a dyadic box: along axis `j` it covers
//! `[num_j / 2^e_j, (num_j + 1) / 2^e_j)`, so volumes and split points are
//! exact at any depth. Cells are half-open, with the upper faces of the unit
//! cube included, which makes [`Partition::locate`] a function.
//!
//! A partition is grown by a decision sequence of [`Action`]s. Splitting
//! region `i` keeps the lower half at index `i` and appends the upper half at
//! the end of the region list, so undoing the last action is a constant-time
//! merge of region `i` with the last region.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Maximum number of halvings along a single axis of one region.
pub const MAX_SPLITS_PER_AXIS: u8 = 63;

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Region {
    num: Vec<u64>,
    exp: Vec<u8>,
}

/// Index of the dyadic cell of width `2^-exp` containing `v`, with `v = 1`
/// folded into the last cell.
#[inline]
pub(crate) fn cell_index(v: f64, exp: u8) -> u64 {
    let cells = 1u64 << exp;
    let scaled = (v * cells as f64).floor();
    if scaled <= 0.0 {
        0
    } else {
        (scaled as u64).min(cells - 1)
    }
}

impl Region {
    pub fn unit(dim: usize) -> Self {
        Region {
            num: vec![0; dim],
            exp: vec![0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.num.len()
    }

    /// Number of times the region has been halved along `axis`.
    pub fn splits(&self, axis: usize) -> u8 {
        self.exp[axis]
    }

    pub fn numerator(&self, axis: usize) -> u64 {
        self.num[axis]
    }

    pub fn lower(&self, axis: usize) -> f64 {
        self.num[axis] as f64 / (1u64 << self.exp[axis]) as f64
    }

    pub fn upper(&self, axis: usize) -> f64 {
        (self.num[axis] + 1) as f64 / (1u64 << self.exp[axis]) as f64
    }

    /// `-log2 |r|`, i.e. the total number of halvings.
    pub fn log2_inv_volume(&self) -> u32 {
        self.exp.iter().map(|&e| e as u32).sum()
    }

    pub fn volume(&self) -> f64 {
        (0.5f64).powi(self.log2_inv_volume() as i32)
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.num.iter().zip(&self.exp))
            .all(|(&v, (&n, &e))| cell_index(v, e) == n)
    }

    /// The (lower, upper) halves of the region along `axis`.
    pub fn halves(&self, axis: usize) -> Option<(Region, Region)> {
        if self.exp[axis] >= MAX_SPLITS_PER_AXIS {
            return None;
        }
        let mut lo = self.clone();
        lo.exp[axis] += 1;
        lo.num[axis] <<= 1;
        let mut hi = lo.clone();
        hi.num[axis] += 1;
        Some((lo, hi))
    }

    /// The region this one was cut from by a split along `axis`.
    fn parent(&self, axis: usize) -> Region {
        let mut p = self.clone();
        p.exp[axis] -= 1;
        p.num[axis] >>= 1;
        p
    }

    /// True when `self` lies inside `other`.
    pub fn is_within(&self, other: &Region) -> bool {
        (0..self.dim()).all(|j| {
            other.exp[j] <= self.exp[j]
                && (self.num[j] >> (self.exp[j] - other.exp[j])) == other.num[j]
        })
    }

    /// True when the interiors intersect. Dyadic intervals are either
    /// nested or disjoint, so this is a per-axis nesting check.
    pub fn overlaps(&self, other: &Region) -> bool {
        (0..self.dim()).all(|j| {
            let (fine, coarse) = if self.exp[j] >= other.exp[j] {
                (self, other)
            } else {
                (other, self)
            };
            (fine.num[j] >> (fine.exp[j] - coarse.exp[j])) == coarse.num[j]
        })
    }

    pub fn overlap_volume(&self, other: &Region) -> f64 {
        if !self.overlaps(other) {
            return 0.0;
        }
        let k: u32 = self
            .exp
            .iter()
            .zip(&other.exp)
            .map(|(&a, &b)| a.max(b) as u32)
            .sum();
        (0.5f64).powi(k as i32)
    }
}

/// One cut: halve region `region` along `axis`. Both indices are 0-based;
/// the text format is 1-based.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Action {
    pub region: usize,
    pub axis: usize,
}

impl Action {
    pub fn new(region: usize, axis: usize) -> Self {
        Action { region, axis }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.region + 1, self.axis + 1)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Partition {
    dim: usize,
    regions: Vec<Region>,
    actions: Vec<Action>,
}

impl Partition {
    pub fn root(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidDimension(dim));
        }
        Ok(Partition {
            dim,
            regions: vec![Region::unit(dim)],
            actions: Vec::new(),
        })
    }

    /// Replays a decision sequence from the root.
    pub fn from_actions(dim: usize, actions: &[Action]) -> Result<Self> {
        let mut p = Partition::root(dim)?;
        for &a in actions {
            p.push(a)?;
        }
        Ok(p)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of regions, `1 + actions().len()`.
    pub fn depth(&self) -> usize {
        self.regions.len()
    }

    pub fn regions(&self) -> &[Region] {
        &self.regions
    }

    pub fn region(&self, i: usize) -> &Region {
        &self.regions[i]
    }

    pub fn actions(&self) -> &[Action] {
        &self.actions
    }

    pub fn last_action(&self) -> Option<Action> {
        self.actions.last().copied()
    }

    pub fn check_action(&self, a: Action) -> Result<()> {
        if a.region >= self.depth() || a.axis >= self.dim {
            return Err(Error::InvalidAction {
                region: a.region,
                axis: a.axis,
                depth: self.depth(),
                dim: self.dim,
            });
        }
        if self.regions[a.region].splits(a.axis) >= MAX_SPLITS_PER_AXIS {
            return Err(Error::DepthLimit {
                region: a.region,
                axis: a.axis,
                limit: MAX_SPLITS_PER_AXIS,
            });
        }
        Ok(())
    }

    /// Applies `a` in place.
    pub fn push(&mut self, a: Action) -> Result<()> {
        self.check_action(a)?;
        let (lo, hi) = self.regions[a.region]
            .halves(a.axis)
            .expect("checked above");
        self.regions[a.region] = lo;
        self.regions.push(hi);
        self.actions.push(a);
        Ok(())
    }

    /// Undoes the last action in place and returns it.
    pub fn pop(&mut self) -> Result<Action> {
        let a = self.actions.pop().ok_or(Error::CannotShrink)?;
        self.regions.pop();
        let merged = self.regions[a.region].parent(a.axis);
        self.regions[a.region] = merged;
        Ok(a)
    }

    pub fn extend(&self, a: Action) -> Result<Partition> {
        let mut p = self.clone();
        p.push(a)?;
        Ok(p)
    }

    pub fn shrink(&self) -> Result<(Partition, Action)> {
        let mut p = self.clone();
        let a = p.pop()?;
        Ok((p, a))
    }

    pub fn locate(&self, x: &[f64]) -> Result<usize> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: x.len(),
            });
        }
        if x.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::OutOfDomain { point: x.to_vec() });
        }
        Ok(self
            .regions
            .iter()
            .position(|r| r.contains(x))
            .expect("regions cover the unit cube"))
    }

    /// True when every region of `coarser` is a union of regions of `self`.
    pub fn refines(&self, coarser: &Partition) -> bool {
        self.dim == coarser.dim
            && self
                .regions
                .iter()
                .all(|r| coarser.regions.iter().any(|c| r.is_within(c)))
    }

    /// Sequence text: `d;(region,axis);...` with 1-based indices.
    pub fn sequence_string(&self) -> String {
        let mut s = self.dim.to_string();
        for a in &self.actions {
            s.push(';');
            s.push_str(&a.to_string());
        }
        s
    }
}

impl fmt::Display for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.sequence_string())
    }
}

impl FromStr for Partition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::BadSequence(s.to_string());
        let mut parts = s.trim().split(';').filter(|t| !t.trim().is_empty());
        let dim: usize = parts
            .next()
            .and_then(|t| t.trim().parse().ok())
            .ok_or_else(bad)?;
        let mut actions = Vec::new();
        for tok in parts {
            let inner = tok
                .trim()
                .strip_prefix('(')
                .and_then(|t| t.strip_suffix(')'))
                .ok_or_else(bad)?;
            let (r, a) = inner.split_once(',').ok_or_else(bad)?;
            let r: usize = r.trim().parse().map_err(|_| bad())?;
            let a: usize = a.trim().parse().map_err(|_| bad())?;
            if r == 0 || a == 0 {
                return Err(bad());
            }
            actions.push(Action::new(r - 1, a - 1));
        }
        Partition::from_actions(dim, &actions)
    }
}

/// A partition that refines both `p` and `q`: every region of either input
/// is a union of returned regions. Starts from `p`'s sequence and keeps
/// halving any cell that straddles a boundary of `q`. Not minimal.
pub fn common_refinement(p: &Partition, q: &Partition) -> Result<Partition> {
    if p.dim() != q.dim() {
        return Err(Error::DimensionMismatch {
            expected: p.dim(),
            found: q.dim(),
        });
    }
    let mut out = p.clone();
    let mut i = 0;
    while i < out.depth() {
        let cell = out.region(i);
        let cut = q
            .regions()
            .iter()
            .filter(|r| r.overlaps(cell) && !cell.is_within(r))
            .find_map(|r| (0..cell.dim()).find(|&j| r.splits(j) > cell.splits(j)));
        match cut {
            Some(axis) => out.push(Action::new(i, axis))?,
            None => i += 1,
        }
    }
    Ok(out)
}
