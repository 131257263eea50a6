//! Shared domain types: node identities, positions, per-epoch distance
//! matrices with an explicit missing-measurement mask, and ground truth.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Node label (e.g. `"D5B4"`) together with its row in the distance matrix.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NodeId {
    pub label: String,
    pub index: usize,
}

impl NodeId {
    pub fn new(label: impl Into<String>, index: usize) -> Self {
        Self {
            label: label.into(),
            index,
        }
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}#{}", self.label, self.index)
    }
}

/// Builds node ids from an ordered label list, rejecting duplicates.
pub fn node_ids(labels: &[String]) -> Result<Vec<NodeId>> {
    let mut seen = HashSet::new();
    labels
        .iter()
        .enumerate()
        .map(|(i, l)| {
            if l.is_empty()
                || !l
                    .chars()
                    .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
            {
                return Err(Error::Invalid(format!("bad node label {l:?}")));
            }
            if !seen.insert(l.as_str()) {
                return Err(Error::Invalid(format!("duplicate node label {l:?}")));
            }
            Ok(NodeId::new(l.clone(), i))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Position2D {
    pub x: f64,
    pub y: f64,
}

impl Position2D {
    pub const ORIGIN: Position2D = Position2D { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    /// Rejects non-finite coordinates.
    pub fn checked(x: f64, y: f64) -> Result<Self> {
        if x.is_finite() && y.is_finite() {
            Ok(Self { x, y })
        } else {
            Err(Error::Invalid(format!("non-finite position ({x}, {y})")))
        }
    }

    pub fn distance(&self, other: &Position2D) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

/// One epoch of pairwise range measurements.
///
/// Entries are stored row-major; `mask[i*n+j]` is true when a measurement is
/// present. The diagonal is always absent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceMatrix {
    pub epoch: f64,
    n: usize,
    entries: Vec<f64>,
    mask: Vec<bool>,
}

impl DistanceMatrix {
    /// An epoch with every measurement absent.
    pub fn empty(epoch: f64, n: usize) -> Self {
        Self {
            epoch,
            n,
            entries: vec![0.0; n * n],
            mask: vec![false; n * n],
        }
    }

    /// Builds a matrix from optional entries, validating every present value.
    /// Diagonal entries are dropped.
    pub fn from_options(epoch: f64, rows: &[Vec<Option<f64>>]) -> Result<Self> {
        let n = rows.len();
        let mut m = Self::empty(epoch, n);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: row.len(),
                });
            }
            for (j, v) in row.iter().enumerate() {
                if let (Some(v), false) = (v, i == j) {
                    m.set_directed(i, j, Some(*v))?;
                }
            }
        }
        Ok(m)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Measured range from row `i` to column `j`, if present.
    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        let k = i * self.n + j;
        self.mask[k].then(|| self.entries[k])
    }

    pub fn is_present(&self, i: usize, j: usize) -> bool {
        self.mask[i * self.n + j]
    }

    /// Sets one directed entry. Use [`DistanceMatrix::set`] for a symmetric write.
    pub fn set_directed(&mut self, i: usize, j: usize, value: Option<f64>) -> Result<()> {
        if i >= self.n || j >= self.n {
            return Err(Error::IndexOutOfRange {
                index: i.max(j),
                n: self.n,
            });
        }
        let k = i * self.n + j;
        match value {
            Some(v) if i != j => {
                if !v.is_finite() || v < 0.0 {
                    return Err(Error::Invalid(format!("range {v} at ({i}, {j})")));
                }
                self.entries[k] = v;
                self.mask[k] = true;
            }
            _ => {
                self.entries[k] = 0.0;
                self.mask[k] = false;
            }
        }
        Ok(())
    }

    pub fn set(&mut self, i: usize, j: usize, value: Option<f64>) -> Result<()> {
        self.set_directed(i, j, value)?;
        self.set_directed(j, i, value)
    }

    /// Removes a measurement in both directions.
    pub fn mask_out(&mut self, i: usize, j: usize) {
        if i < self.n && j < self.n {
            let (a, b) = (i * self.n + j, j * self.n + i);
            self.mask[a] = false;
            self.mask[b] = false;
            self.entries[a] = 0.0;
            self.entries[b] = 0.0;
        }
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.n).all(|i| (0..self.n).all(|j| self.get(i, j) == self.get(j, i)))
    }

    /// Number of present unordered pairs (after symmetrization).
    pub fn present_pairs(&self) -> usize {
        (0..self.n)
            .map(|i| ((i + 1)..self.n).filter(|&j| self.is_present(i, j)).count())
            .sum()
    }
}

/// Averages reciprocal readings and mirrors one-sided ones.
pub fn symmetrize(matrix: &DistanceMatrix) -> DistanceMatrix {
    let mut out = matrix.clone();
    let n = matrix.n;
    for i in 0..n {
        for j in (i + 1)..n {
            let v = match (matrix.get(i, j), matrix.get(j, i)) {
                (Some(a), Some(b)) => Some(0.5 * (a + b)),
                (Some(a), None) | (None, Some(a)) => Some(a),
                (None, None) => None,
            };
            // values were validated on insertion
            out.set(i, j, v).expect("validated entry");
        }
    }
    out
}

/// Pairwise line-of-sight classification. Diagonal is LOS by convention.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VisibilityMatrix {
    n: usize,
    los: Vec<bool>,
}

impl VisibilityMatrix {
    pub fn all_los(n: usize) -> Self {
        Self {
            n,
            los: vec![true; n * n],
        }
    }

    pub fn from_rows(rows: &[Vec<bool>]) -> Result<Self> {
        let n = rows.len();
        let mut v = Self::all_los(n);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: row.len(),
                });
            }
            for (j, &b) in row.iter().enumerate() {
                if i != j {
                    v.los[i * n + j] = b;
                }
            }
        }
        if !(0..n).all(|i| (0..n).all(|j| v.is_los(i, j) == v.is_los(j, i))) {
            return Err(Error::Invalid("visibility matrix is not symmetric".into()));
        }
        Ok(v)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn is_los(&self, i: usize, j: usize) -> bool {
        self.los[i * self.n + j]
    }

    pub fn set(&mut self, i: usize, j: usize, los: bool) {
        if i != j {
            self.los[i * self.n + j] = los;
            self.los[j * self.n + i] = los;
        }
    }

    /// Share of unordered pairs that are NLOS.
    pub fn nlos_share(&self) -> f64 {
        let pairs = self.n * self.n.saturating_sub(1) / 2;
        if pairs == 0 {
            return 0.0;
        }
        let nlos: usize = (0..self.n)
            .map(|i| ((i + 1)..self.n).filter(|&j| !self.is_los(i, j)).count())
            .sum();
        nlos as f64 / pairs as f64
    }
}

/// Surveyed node positions plus visibility. True distances are derived.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkTruth {
    pub positions: Vec<Position2D>,
    pub visibility: VisibilityMatrix,
}

impl NetworkTruth {
    pub fn new(positions: Vec<Position2D>, visibility: VisibilityMatrix) -> Result<Self> {
        if positions.len() != visibility.n() {
            return Err(Error::DimensionMismatch {
                expected: positions.len(),
                found: visibility.n(),
            });
        }
        if let Some(p) = positions.iter().find(|p| !p.is_finite()) {
            return Err(Error::Invalid(format!("non-finite truth position {p:?}")));
        }
        Ok(Self {
            positions,
            visibility,
        })
    }

    pub fn n(&self) -> usize {
        self.positions.len()
    }

    pub fn true_distance(&self, i: usize, j: usize) -> Result<f64> {
        let n = self.n();
        let pi = self
            .positions
            .get(i)
            .ok_or(Error::IndexOutOfRange { index: i, n })?;
        let pj = self
            .positions
            .get(j)
            .ok_or(Error::IndexOutOfRange { index: j, n })?;
        Ok(pi.distance(pj))
    }
}

/// The three nodes that define the local frame: origin, +x axis, +y half-plane.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameAssumptions {
    pub origin: usize,
    pub axis: usize,
    pub halfplane: usize,
}

impl FrameAssumptions {
    pub fn new(origin: usize, axis: usize, halfplane: usize) -> Result<Self> {
        if origin == axis || origin == halfplane || axis == halfplane {
            return Err(Error::Invalid(format!(
                "frame nodes must be distinct, got ({origin}, {axis}, {halfplane})"
            )));
        }
        Ok(Self {
            origin,
            axis,
            halfplane,
        })
    }

    /// Resolves three labels against the dataset header.
    pub fn from_labels(labels: &[String], frame: [&str; 3]) -> Result<Self> {
        let find = |l: &str| {
            labels.iter().position(|x| x == l).ok_or_else(|| {
                Error::Invalid(format!(
                    "frame label {l:?} not in dataset; available: {}",
                    labels.join(", ")
                ))
            })
        };
        Self::new(find(frame[0])?, find(frame[1])?, find(frame[2])?)
    }

    pub fn check(&self, n: usize) -> Result<()> {
        for idx in [self.origin, self.axis, self.halfplane] {
            if idx >= n {
                return Err(Error::IndexOutOfRange { index: idx, n });
            }
        }
        Ok(())
    }

    pub fn contains(&self, i: usize) -> bool {
        i == self.origin || i == self.axis || i == self.halfplane
    }
}

/// Per-epoch output of either calibration method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochResult {
    pub epoch: f64,
    pub estimates: Vec<Option<Position2D>>,
    pub available: Vec<bool>,
}

impl EpochResult {
    pub fn unavailable(epoch: f64, n: usize) -> Self {
        Self {
            epoch,
            estimates: vec![None; n],
            available: vec![false; n],
        }
    }

    pub fn n(&self) -> usize {
        self.estimates.len()
    }
}
