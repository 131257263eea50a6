//! Closed-form (CF) self-calibration baseline.
//!
//! The frame is fixed by three nodes: the origin node sits at `(0, 0)`, the
//! axis node at `(z01, 0)`, and the half-plane node is placed by two-circle
//! trilateration with positive `y`. Every other node is positioned by
//! Gauss-Newton least squares against all nodes already placed in the same
//! epoch. Epochs are independent; any failure only removes the affected
//! node (or, for frame failures, the whole epoch) from availability.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{DistanceMatrix, EpochResult, FrameAssumptions, Position2D};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CfConfig {
    /// Minimum number of placed references needed to position a node.
    pub min_refs: usize,
    pub max_iterations: usize,
    /// Convergence threshold on the Gauss-Newton step norm (meters).
    pub tolerance: f64,
    /// Accept mirror-ambiguous fixes instead of marking them unavailable.
    pub accept_ambiguous: bool,
}

impl Default for CfConfig {
    fn default() -> Self {
        Self {
            min_refs: 3,
            max_iterations: 50,
            tolerance: 1e-9,
            accept_ambiguous: false,
        }
    }
}

/// Output of [`trilaterate_node`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Trilateration {
    pub position: Position2D,
    /// Euclidean norm of the range residual vector at the solution.
    pub residual: f64,
    pub iterations: usize,
    /// References are collinear, so the reflected point fits equally well.
    pub ambiguous: bool,
}

/// Anchor 0 at the origin, anchor 1 on the positive x-axis at the measured range.
pub fn establish_frame(
    matrix: &DistanceMatrix,
    frame: &FrameAssumptions,
) -> Result<(Position2D, Position2D)> {
    frame.check(matrix.n())?;
    let z01 = matrix
        .get(frame.origin, frame.axis)
        .ok_or(Error::MissingRange(frame.origin, frame.axis))?;
    if z01 <= 0.0 {
        return Err(Error::DegenerateFrame(format!(
            "zero baseline between nodes {} and {}",
            frame.origin, frame.axis
        )));
    }
    Ok((Position2D::ORIGIN, Position2D::new(z01, 0.0)))
}

/// Places the half-plane anchor from its ranges to anchor 0 (`z02`) and
/// anchor 1 (`z12`). Missing ranges are reported with frame-role indices
/// (0, 1, 2).
pub fn place_anchor2(a1: Position2D, z02: Option<f64>, z12: Option<f64>) -> Result<Position2D> {
    let z02 = z02.ok_or(Error::MissingRange(0, 2))?;
    let z12 = z12.ok_or(Error::MissingRange(1, 2))?;
    let x1 = a1.x;
    if !(x1 > 0.0) {
        return Err(Error::DegenerateFrame(format!("anchor 1 at x = {x1}")));
    }
    let x = (z02 * z02 - z12 * z12 + x1 * x1) / (2.0 * x1);
    let (z02_sq, x_sq) = (z02 * z02, x * x);
    if z02_sq < x_sq {
        return Err(Error::ImaginaryRoot { z02_sq, x_sq });
    }
    Ok(Position2D::new(x, (z02_sq - x_sq).sqrt()))
}

fn cost(p: Position2D, refs: &[(Position2D, f64)]) -> f64 {
    refs.iter().map(|(r, z)| (p.distance(r) - z).powi(2)).sum()
}

/// Collinearity test on the reference positions via the scatter matrix.
fn collinear(refs: &[(Position2D, f64)]) -> bool {
    let n = refs.len() as f64;
    let (mx, my) = refs
        .iter()
        .fold((0.0, 0.0), |(sx, sy), (p, _)| (sx + p.x, sy + p.y));
    let (mx, my) = (mx / n, my / n);
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for (p, _) in refs {
        let (dx, dy) = (p.x - mx, p.y - my);
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    let tr = sxx + syy;
    if tr <= 0.0 {
        return true;
    }
    let det = sxx * syy - sxy * sxy;
    let disc = ((sxx - syy).powi(2) / 4.0 + sxy * sxy).sqrt();
    let lmax = tr / 2.0 + disc;
    let lmin = if lmax > 0.0 { det / lmax } else { 0.0 };
    lmin <= 1e-10 * lmax
}

/// Intersection of the two reference circles furthest apart, choosing the
/// candidate with the lower total squared residual.
fn two_circle_seed(refs: &[(Position2D, f64)]) -> Position2D {
    let mut best = (0, 1, -1.0);
    for i in 0..refs.len() {
        for j in (i + 1)..refs.len() {
            let d = refs[i].0.distance(&refs[j].0);
            if d > best.2 {
                best = (i, j, d);
            }
        }
    }
    let ((c1, r1), (c2, r2), d) = (refs[best.0], refs[best.1], best.2);
    if d <= 0.0 {
        return Position2D::new(c1.x + r1, c1.y);
    }
    let (ux, uy) = ((c2.x - c1.x) / d, (c2.y - c1.y) / d);
    let a = (r1 * r1 - r2 * r2 + d * d) / (2.0 * d);
    let h = (r1 * r1 - a * a).max(0.0).sqrt();
    let base = Position2D::new(c1.x + a * ux, c1.y + a * uy);
    let p = Position2D::new(base.x - h * uy, base.y + h * ux);
    let q = Position2D::new(base.x + h * uy, base.y - h * ux);
    if cost(q, refs) < cost(p, refs) {
        q
    } else {
        p
    }
}

/// Nonlinear least-squares position from `(reference position, range)` pairs.
pub fn trilaterate_node(refs: &[(Position2D, f64)], min_refs: usize) -> Result<Trilateration> {
    trilaterate_with(
        refs,
        &CfConfig {
            min_refs,
            ..CfConfig::default()
        },
    )
}

pub fn trilaterate_with(refs: &[(Position2D, f64)], cfg: &CfConfig) -> Result<Trilateration> {
    let need = cfg.min_refs.max(2);
    if refs.len() < need {
        return Err(Error::InsufficientReferences {
            have: refs.len(),
            need,
        });
    }
    let mut p = two_circle_seed(refs);
    let mut c = cost(p, refs);
    for iter in 1..=cfg.max_iterations {
        let (mut a11, mut a12, mut a22, mut g1, mut g2) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (r, z) in refs {
            let d = p.distance(r);
            if d < 1e-12 {
                continue;
            }
            let (jx, jy) = ((p.x - r.x) / d, (p.y - r.y) / d);
            let res = d - z;
            a11 += jx * jx;
            a12 += jx * jy;
            a22 += jy * jy;
            g1 += jx * res;
            g2 += jy * res;
        }
        let det = a11 * a22 - a12 * a12;
        if det.abs() < 1e-14 * (a11 + a22).max(1.0).powi(2) {
            return Err(Error::NoConvergence(iter));
        }
        let mut dx = -(a22 * g1 - a12 * g2) / det;
        let mut dy = -(a11 * g2 - a12 * g1) / det;
        // step halving keeps the iteration descending
        let mut next = Position2D::new(p.x + dx, p.y + dy);
        let mut nc = cost(next, refs);
        let mut halvings = 0;
        while nc > c && halvings < 30 {
            dx *= 0.5;
            dy *= 0.5;
            next = Position2D::new(p.x + dx, p.y + dy);
            nc = cost(next, refs);
            halvings += 1;
        }
        let step = dx.hypot(dy);
        if nc <= c {
            p = next;
            c = nc;
        }
        if step < cfg.tolerance {
            return Ok(Trilateration {
                position: p,
                residual: c.sqrt(),
                iterations: iter,
                ambiguous: collinear(refs),
            });
        }
    }
    Err(Error::NoConvergence(cfg.max_iterations))
}

/// One CF epoch: frame, anchor 2, then repeated least-squares passes until
/// no further node can be placed.
pub fn run_cf_epoch(
    matrix: &DistanceMatrix,
    frame: &FrameAssumptions,
    cfg: &CfConfig,
) -> EpochResult {
    let n = matrix.n();
    let mut out = EpochResult::unavailable(matrix.epoch, n);
    let (a0, a1) = match establish_frame(matrix, frame) {
        Ok(f) => f,
        Err(_) => return out,
    };
    let mut placed: Vec<Option<Position2D>> = vec![None; n];
    placed[frame.origin] = Some(a0);
    placed[frame.axis] = Some(a1);
    if let Ok(a2) = place_anchor2(
        a1,
        matrix.get(frame.origin, frame.halfplane),
        matrix.get(frame.axis, frame.halfplane),
    ) {
        placed[frame.halfplane] = Some(a2);
    }
    loop {
        let mut progress = false;
        for i in (0..n).filter(|&i| !frame.contains(i)) {
            if placed[i].is_some() {
                continue;
            }
            let refs: Vec<(Position2D, f64)> = (0..n)
                .filter(|&j| j != i)
                .filter_map(|j| Some((placed[j]?, matrix.get(i, j)?)))
                .collect();
            if let Ok(fix) = trilaterate_with(&refs, cfg) {
                if !fix.ambiguous || cfg.accept_ambiguous {
                    placed[i] = Some(fix.position);
                    progress = true;
                }
            }
        }
        if !progress {
            break;
        }
    }
    out.available = placed.iter().map(Option::is_some).collect();
    out.estimates = placed;
    out
}

/// Runs every epoch independently (in parallel).
pub fn run_cf(
    dataset: &[DistanceMatrix],
    frame: &FrameAssumptions,
    cfg: &CfConfig,
) -> Vec<EpochResult> {
    dataset
        .par_iter()
        .map(|m| run_cf_epoch(m, frame, cfg))
        .collect()
}
