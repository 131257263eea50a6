use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::Position2D;

/// Regular lattice of grid points, `cols × rows`, row-major.
///
/// Point `(c, r)` sits at `(x_min + c·cell_size, y_min + r·cell_size)`, so
/// both bounds are grid points when the extent is a multiple of the cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub cell_size: f64,
    cols: usize,
    rows: usize,
}

impl GridSpec {
    pub fn new(x_min: f64, x_max: f64, y_min: f64, y_max: f64, cell_size: f64) -> Result<Self> {
        if !(cell_size > 0.0 && cell_size.is_finite()) {
            return Err(Error::Invalid(format!("cell size {cell_size}")));
        }
        if !(x_min.is_finite() && x_max.is_finite() && y_min.is_finite() && y_max.is_finite())
            || x_min > x_max
            || y_min > y_max
        {
            return Err(Error::Invalid(format!(
                "grid bounds [{x_min}, {x_max}] x [{y_min}, {y_max}]"
            )));
        }
        let cols = ((x_max - x_min) / cell_size + 1e-9).floor() as usize + 1;
        let rows = ((y_max - y_min) / cell_size + 1e-9).floor() as usize + 1;
        Ok(Self {
            x_min,
            x_max,
            y_min,
            y_max,
            cell_size,
            cols,
            rows,
        })
    }

    /// Square grid centred on the origin covering `radius` in every direction.
    pub fn around_origin(radius: f64, cell_size: f64) -> Result<Self> {
        let r = (radius / cell_size).ceil() * cell_size;
        Self::new(-r, r, -r, r, cell_size)
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    /// Total number of grid points `M`.
    pub fn m_total(&self) -> usize {
        self.cols * self.rows
    }

    pub fn index(&self, col: usize, row: usize) -> usize {
        row * self.cols + col
    }

    pub fn col_row(&self, index: usize) -> (usize, usize) {
        (index % self.cols, index / self.cols)
    }

    pub fn x(&self, col: usize) -> f64 {
        self.x_min + col as f64 * self.cell_size
    }

    pub fn y(&self, row: usize) -> f64 {
        self.y_min + row as f64 * self.cell_size
    }

    pub fn point(&self, index: usize) -> Position2D {
        let (c, r) = self.col_row(index);
        Position2D::new(self.x(c), self.y(r))
    }

    /// Nearest grid point to `p`, clamped into the grid.
    pub fn nearest(&self, p: Position2D) -> (usize, usize) {
        let c = ((p.x - self.x_min) / self.cell_size)
            .round()
            .clamp(0.0, (self.cols - 1) as f64);
        let r = ((p.y - self.y_min) / self.cell_size)
            .round()
            .clamp(0.0, (self.rows - 1) as f64);
        (c as usize, r as usize)
    }

    pub fn full_window(&self) -> Window {
        Window {
            c0: 0,
            r0: 0,
            cols: self.cols,
            rows: self.rows,
        }
    }

    /// Window of all points within `radius` (bounding box) of `(c, r)`.
    pub fn window_around(&self, col: usize, row: usize, radius: f64) -> Window {
        let k = (radius / self.cell_size).ceil().max(0.0) as usize;
        let c0 = col.saturating_sub(k);
        let r0 = row.saturating_sub(k);
        let c1 = (col + k).min(self.cols - 1);
        let r1 = (row + k).min(self.rows - 1);
        Window {
            c0,
            r0,
            cols: c1 - c0 + 1,
            rows: r1 - r0 + 1,
        }
    }
}

/// Rectangular sub-block of a grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub c0: usize,
    pub r0: usize,
    pub cols: usize,
    pub rows: usize,
}

impl Window {
    pub fn len(&self) -> usize {
        self.cols * self.rows
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, col: usize, row: usize) -> bool {
        col >= self.c0 && col < self.c0 + self.cols && row >= self.r0 && row < self.r0 + self.rows
    }

    /// Smallest window covering both.
    pub fn union(&self, other: &Window) -> Window {
        let c0 = self.c0.min(other.c0);
        let r0 = self.r0.min(other.r0);
        let c1 = (self.c0 + self.cols).max(other.c0 + other.cols);
        let r1 = (self.r0 + self.rows).max(other.r0 + other.rows);
        Window {
            c0,
            r0,
            cols: c1 - c0,
            rows: r1 - r0,
        }
    }

    /// Grid cell index of local offset `k`.
    pub fn cell(&self, spec: &GridSpec, k: usize) -> usize {
        spec.index(self.c0 + k % self.cols, self.r0 + k / self.cols)
    }
}

/// Discrete probability mass over a grid.
///
/// Mass is stored densely over a window; every cell outside it has zero
/// mass. Constructors normalize, so every belief sums to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridBelief {
    spec: GridSpec,
    window: Window,
    mass: Vec<f64>,
}

impl GridBelief {
    pub fn uniform(spec: &GridSpec) -> Self {
        let m = spec.m_total();
        Self {
            spec: spec.clone(),
            window: spec.full_window(),
            mass: vec![1.0 / m as f64; m],
        }
    }

    /// Builds a normalized belief from one value per grid cell.
    pub fn from_dense(spec: &GridSpec, mass: Vec<f64>) -> Result<Self> {
        if mass.len() != spec.m_total() {
            return Err(Error::DimensionMismatch {
                expected: spec.m_total(),
                found: mass.len(),
            });
        }
        Self::from_window(spec, spec.full_window(), mass)
    }

    /// Builds a normalized belief from values over `window`.
    pub fn from_window(spec: &GridSpec, window: Window, mass: Vec<f64>) -> Result<Self> {
        if mass.len() != window.len() {
            return Err(Error::DimensionMismatch {
                expected: window.len(),
                found: mass.len(),
            });
        }
        if window.c0 + window.cols > spec.cols() || window.r0 + window.rows > spec.rows() {
            return Err(Error::Invalid("window exceeds grid".into()));
        }
        if mass.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Invalid(
                "belief mass must be finite and nonnegative".into(),
            ));
        }
        let total: f64 = mass.iter().sum();
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::AllMassZero);
        }
        let mut b = Self {
            spec: spec.clone(),
            window,
            mass,
        };
        b.mass.iter_mut().for_each(|v| *v /= total);
        b.trim();
        Ok(b)
    }

    /// Point mass on a single cell.
    pub fn delta(spec: &GridSpec, col: usize, row: usize) -> Self {
        Self {
            spec: spec.clone(),
            window: Window {
                c0: col,
                r0: row,
                cols: 1,
                rows: 1,
            },
            mass: vec![1.0],
        }
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn window(&self) -> Window {
        self.window
    }

    /// Mass over the window, row-major.
    pub fn window_mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn get(&self, col: usize, row: usize) -> f64 {
        if self.window.contains(col, row) {
            self.mass[(row - self.window.r0) * self.window.cols + (col - self.window.c0)]
        } else {
            0.0
        }
    }

    pub fn get_index(&self, index: usize) -> f64 {
        let (c, r) = self.spec.col_row(index);
        self.get(c, r)
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.spec.m_total()];
        for (k, v) in self.mass.iter().enumerate() {
            out[self.window.cell(&self.spec, k)] = *v;
        }
        out
    }

    /// `(cell index, mass)` for every cell with positive mass.
    pub fn nonzero(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.mass
            .iter()
            .enumerate()
            .filter(|(_, v)| **v > 0.0)
            .map(|(k, v)| (self.window.cell(&self.spec, k), *v))
    }

    pub fn total(&self) -> f64 {
        self.mass.iter().sum()
    }

    pub fn is_normalized(&self, tol: f64) -> bool {
        self.mass.iter().all(|v| v.is_finite() && *v >= 0.0) && (self.total() - 1.0).abs() <= tol
    }

    /// Highest-mass cell; ties go to the lowest cell index.
    pub fn argmax(&self) -> usize {
        let mut best = (usize::MAX, f64::NEG_INFINITY);
        for (k, v) in self.mass.iter().enumerate() {
            let idx = self.window.cell(&self.spec, k);
            if *v > best.1 || (*v == best.1 && idx < best.0) {
                best = (idx, *v);
            }
        }
        best.0
    }

    pub fn mean(&self) -> Position2D {
        let (mut sx, mut sy) = (0.0, 0.0);
        for (idx, v) in self.nonzero() {
            let p = self.spec.point(idx);
            sx += v * p.x;
            sy += v * p.y;
        }
        Position2D::new(sx, sy)
    }

    /// Square root of the covariance trace.
    pub fn trace_sigma(&self) -> f64 {
        let m = self.mean();
        let var: f64 = self
            .nonzero()
            .map(|(idx, v)| {
                let p = self.spec.point(idx);
                v * ((p.x - m.x).powi(2) + (p.y - m.y).powi(2))
            })
            .sum();
        var.max(0.0).sqrt()
    }

    /// Shrinks the window to the bounding box of positive mass.
    fn trim(&mut self) {
        let w = self.window;
        let (mut c_lo, mut c_hi, mut r_lo, mut r_hi) = (usize::MAX, 0, usize::MAX, 0);
        for r in 0..w.rows {
            for c in 0..w.cols {
                if self.mass[r * w.cols + c] > 0.0 {
                    c_lo = c_lo.min(c);
                    c_hi = c_hi.max(c);
                    r_lo = r_lo.min(r);
                    r_hi = r_hi.max(r);
                }
            }
        }
        if c_lo == usize::MAX
            || (c_lo == 0 && r_lo == 0 && c_hi + 1 == w.cols && r_hi + 1 == w.rows)
        {
            return;
        }
        let cols = c_hi - c_lo + 1;
        let rows = r_hi - r_lo + 1;
        let mut mass = Vec::with_capacity(cols * rows);
        for r in r_lo..=r_hi {
            mass.extend_from_slice(&self.mass[r * w.cols + c_lo..r * w.cols + c_hi + 1]);
        }
        self.window = Window {
            c0: w.c0 + c_lo,
            r0: w.r0 + r_lo,
            cols,
            rows,
        };
        self.mass = mass;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_counts_include_both_bounds() {
        let g = GridSpec::new(0.0, 2.0, 0.0, 1.0, 0.5).unwrap();
        assert_eq!((g.cols(), g.rows(), g.m_total()), (5, 3, 15));
        assert_eq!(g.point(g.index(4, 2)), Position2D::new(2.0, 1.0));
        assert!(GridSpec::new(0.0, 1.0, 0.0, 1.0, 0.0).is_err());
        assert!(GridSpec::new(1.0, 0.0, 0.0, 1.0, 0.1).is_err());
    }

    #[test]
    fn dense_roundtrip_and_trim() {
        let g = GridSpec::new(0.0, 4.0, 0.0, 4.0, 1.0).unwrap();
        let mut m = vec![0.0; g.m_total()];
        m[g.index(1, 2)] = 3.0;
        m[g.index(3, 3)] = 1.0;
        let b = GridBelief::from_dense(&g, m).unwrap();
        assert_eq!(
            b.window(),
            Window {
                c0: 1,
                r0: 2,
                cols: 3,
                rows: 2
            }
        );
        assert!((b.get(1, 2) - 0.75).abs() < 1e-15);
        assert_eq!(b.get(0, 0), 0.0);
        assert_eq!(b.argmax(), g.index(1, 2));
        let d = b.to_dense();
        assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_mass() {
        let g = GridSpec::new(0.0, 1.0, 0.0, 1.0, 1.0).unwrap();
        assert_eq!(
            GridBelief::from_dense(&g, vec![0.0; 4]),
            Err(Error::AllMassZero)
        );
        assert!(GridBelief::from_dense(&g, vec![1.0, f64::NAN, 0.0, 0.0]).is_err());
        assert!(GridBelief::from_dense(&g, vec![1.0, -1.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn argmax_tie_goes_to_lowest_index() {
        let g = GridSpec::new(0.0, 2.0, 0.0, 0.0, 1.0).unwrap();
        let b = GridBelief::from_dense(&g, vec![0.2, 0.4, 0.4]).unwrap();
        assert_eq!(b.argmax(), 1);
    }
}
