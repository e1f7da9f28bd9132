//! Samples on the unit cube and per-region point counts.

use std::fs::File;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::partition::{cell_index, Action, Partition};

/// Margin used when rescaling observed data into the unit cube.
pub const RESCALE_EPSILON: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Label {
    X,
    Y,
}

impl Label {
    pub fn index(self) -> usize {
        match self {
            Label::X => 0,
            Label::Y => 1,
        }
    }
}

/// Per-axis affine map applied to raw data: `u = eps + (1 - 2 eps)(v - min)/(max - min)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rescaling {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
    pub epsilon: f64,
}

/// `n` points in `[0,1]^d`, stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    dim: usize,
    coords: Vec<f64>,
    label: Label,
    rescaling: Option<Rescaling>,
}

impl Sample {
    pub fn new(dim: usize, coords: Vec<f64>, label: Label) -> Result<Self> {
        if dim == 0 {
            if !coords.is_empty() {
                return Err(Error::InvalidDimension(0));
            }
        } else if coords.len() % dim != 0 {
            return Err(Error::Invalid(format!(
                "{} coordinates do not form points of dimension {dim}",
                coords.len()
            )));
        }
        if let Some(v) = coords.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::OutOfDomain { point: vec![*v] });
        }
        Ok(Sample {
            dim,
            coords,
            label,
            rescaling: None,
        })
    }

    pub fn from_points(points: &[Vec<f64>], label: Label) -> Result<Self> {
        let dim = points.first().map_or(0, Vec::len);
        if let Some(p) = points.iter().find(|p| p.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: p.len(),
            });
        }
        Sample::new(dim, points.concat(), label)
    }

    pub fn empty(dim: usize, label: Label) -> Self {
        Sample {
            dim,
            coords: Vec::new(),
            label,
            rescaling: None,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        if self.dim == 0 {
            0
        } else {
            self.coords.len() / self.dim
        }
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn label(&self) -> Label {
        self.label
    }

    pub fn rescaling(&self) -> Option<&Rescaling> {
        self.rescaling.as_ref()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.coords.chunks_exact(self.dim.max(1))
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    /// Appends points, keeping the label. Used by uniform augmentation.
    pub fn with_extra_points(&self, extra: &[f64]) -> Result<Sample> {
        let mut coords = self.coords.clone();
        coords.extend_from_slice(extra);
        let mut s = Sample::new(self.dim, coords, self.label)?;
        s.rescaling = self.rescaling.clone();
        Ok(s)
    }

    /// Maps each axis's observed range onto `[eps, 1 - eps]`.
    fn rescale(dim: usize, coords: Vec<f64>, label: Label) -> Result<Sample> {
        let map = Rescaling::fit(dim, &[&coords]);
        map.apply(dim, coords, label)
    }
}

impl Rescaling {
    /// Per-axis range over all of `samples`, each a row-major block of `dim`-vectors.
    pub fn fit(dim: usize, samples: &[&[f64]]) -> Rescaling {
        let mut min = vec![f64::INFINITY; dim];
        let mut max = vec![f64::NEG_INFINITY; dim];
        for coords in samples {
            for row in coords.chunks_exact(dim.max(1)) {
                for (j, &v) in row.iter().enumerate() {
                    min[j] = min[j].min(v);
                    max[j] = max[j].max(v);
                }
            }
        }
        Rescaling {
            min,
            max,
            epsilon: RESCALE_EPSILON,
        }
    }

    /// Applies the map; constant axes go to 1/2.
    pub fn apply(&self, dim: usize, mut coords: Vec<f64>, label: Label) -> Result<Sample> {
        let eps = self.epsilon;
        for row in coords.chunks_exact_mut(dim.max(1)) {
            for (j, v) in row.iter_mut().enumerate() {
                let span = self.max[j] - self.min[j];
                *v = if span > 0.0 {
                    (eps + (1.0 - 2.0 * eps) * (*v - self.min[j]) / span).clamp(0.0, 1.0)
                } else {
                    0.5
                };
            }
        }
        let mut s = Sample::new(dim, coords, label)?;
        if !s.is_empty() {
            s.rescaling = Some(self.clone());
        }
        Ok(s)
    }
}

/// Reads a CSV of points, one per row. A first row that does not parse as
/// numbers is treated as a header.
pub fn load_sample(path: &Path, rescale: bool, label: Label) -> Result<Sample> {
    let mut text = String::new();
    File::open(path)?.read_to_string(&mut text)?;
    parse_sample(&text, path, rescale, label)
}

pub fn parse_sample(text: &str, path: &Path, rescale: bool, label: Label) -> Result<Sample> {
    let (dim, coords) = parse_rows(text, path, !rescale)?;
    if rescale {
        Sample::rescale(dim, coords, label)
    } else {
        Sample::new(dim, coords, label)
    }
}

/// Loads two CSV samples. With `rescale`, both go through one shared
/// per-axis map so that their relative position is preserved.
pub fn load_pair(x: &Path, y: &Path, rescale: bool) -> Result<(Sample, Sample)> {
    if !rescale {
        return Ok((load_sample(x, false, Label::X)?, load_sample(y, false, Label::Y)?));
    }
    let (dx, cx) = parse_rows(&std::fs::read_to_string(x)?, x, false)?;
    let (dy, cy) = parse_rows(&std::fs::read_to_string(y)?, y, false)?;
    if dx != dy {
        return Err(Error::DimensionMismatch { expected: dx, found: dy });
    }
    let map = Rescaling::fit(dx, &[&cx, &cy]);
    Ok((map.apply(dx, cx, Label::X)?, map.apply(dy, cy, Label::Y)?))
}

/// Numeric rows of a CSV as `(columns, row-major values)`.
fn parse_rows(text: &str, path: &Path, unit_cube: bool) -> Result<(usize, Vec<f64>)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut dim = None;
    let mut coords = Vec::new();
    for (row_idx, record) in reader.records().enumerate() {
        let record = record?;
        let line = record
            .position()
            .map_or(row_idx + 1, |p| p.line() as usize);
        if record.iter().all(str::is_empty) {
            continue;
        }
        let parsed: std::result::Result<Vec<f64>, _> =
            record.iter().map(str::parse::<f64>).collect();
        let row = match parsed {
            Ok(row) => row,
            Err(_) if row_idx == 0 => continue,
            Err(e) => {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line,
                    msg: format!("non-numeric field: {e}"),
                })
            }
        };
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line,
                msg: "non-finite value".into(),
            });
        }
        match dim {
            None => dim = Some(row.len()),
            Some(d) if d != row.len() => {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line,
                    msg: format!("expected {d} columns, found {}", row.len()),
                })
            }
            _ => {}
        }
        if unit_cube {
            if let Some(v) = row.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line,
                    msg: format!("value {v} outside [0, 1]; pass the rescale option"),
                });
            }
        }
        coords.extend(row);
    }
    Ok((dim.unwrap_or(0), coords))
}

/// Point counts of both samples per region, with the member indices cached
/// so a split only touches the points of the region being cut.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CountPair {
    members: [Vec<Vec<u32>>; 2],
}

impl CountPair {
    pub fn depth(&self) -> usize {
        self.members[0].len()
    }

    /// `n_{k,i}` for sample `k` (0 for X, 1 for Y) and region `i`.
    pub fn count(&self, sample: usize, region: usize) -> usize {
        self.members[sample][region].len()
    }

    pub fn counts(&self, sample: usize) -> Vec<usize> {
        self.members[sample].iter().map(Vec::len).collect()
    }

    pub fn members(&self, sample: usize, region: usize) -> &[u32] {
        &self.members[sample][region]
    }

    pub fn total(&self, sample: usize) -> usize {
        self.members[sample].iter().map(Vec::len).sum()
    }

    pub fn check_aligned(&self, p: &Partition) -> Result<()> {
        if self.depth() != p.depth() || self.members[1].len() != p.depth() {
            return Err(Error::Misaligned {
                counts: self.depth(),
                regions: p.depth(),
            });
        }
        Ok(())
    }

    /// Applies the split `a` of partition `p` (the partition *before* the
    /// split) in place.
    pub fn split(&mut self, x: &Sample, y: &Sample, p: &Partition, a: Action) -> Result<()> {
        self.check_aligned(p)?;
        p.check_action(a)?;
        let child_exp = p.region(a.region).splits(a.axis) + 1;
        for (k, s) in [x, y].into_iter().enumerate() {
            let list = std::mem::take(&mut self.members[k][a.region]);
            let (hi, lo): (Vec<u32>, Vec<u32>) = list
                .into_iter()
                .partition(|&i| cell_index(s.point(i as usize)[a.axis], child_exp) & 1 == 1);
            self.members[k][a.region] = lo;
            self.members[k].push(hi);
        }
        Ok(())
    }

    /// Undoes the split that created the last region, given the action that
    /// made it.
    pub fn merge_last(&mut self, a: Action) -> Result<()> {
        if a.region + 1 >= self.depth() {
            return Err(Error::Misaligned {
                counts: self.depth(),
                regions: a.region + 2,
            });
        }
        for k in 0..2 {
            let hi = self.members[k].pop().expect("non-empty");
            self.members[k][a.region].extend(hi);
        }
        Ok(())
    }
}

fn check_dims(x: &Sample, y: &Sample, p: &Partition) -> Result<()> {
    for s in [x, y] {
        if !s.is_empty() && s.dim() != p.dim() {
            return Err(Error::DimensionMismatch {
                expected: p.dim(),
                found: s.dim(),
            });
        }
    }
    Ok(())
}

/// Counts both samples over the regions of `p` from scratch.
pub fn count(x: &Sample, y: &Sample, p: &Partition) -> Result<CountPair> {
    check_dims(x, y, p)?;
    let mut members: [Vec<Vec<u32>>; 2] = [vec![Vec::new(); p.depth()], vec![Vec::new(); p.depth()]];
    for (k, s) in [x, y].into_iter().enumerate() {
        for (i, pt) in s.points().enumerate() {
            let r = p.locate(pt)?;
            members[k][r].push(i as u32);
        }
    }
    Ok(CountPair { members })
}

/// `count(x, y, p.extend(a))`, computed by splitting only region `a.region`.
pub fn recount_extend(
    c: &CountPair,
    x: &Sample,
    y: &Sample,
    p: &Partition,
    a: Action,
) -> Result<CountPair> {
    check_dims(x, y, p)?;
    let mut out = c.clone();
    out.split(x, y, p, a)?;
    Ok(out)
}

/// `count(x, y, p.shrink().0)`, computed by merging the last region back.
pub fn recount_shrink(c: &CountPair, p: &Partition) -> Result<CountPair> {
    c.check_aligned(p)?;
    let a = p.last_action().ok_or(Error::CannotShrink)?;
    let mut out = c.clone();
    out.merge_last(a)?;
    Ok(out)
}
