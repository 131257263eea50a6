//! Reference-uncertainty propagation into the measurement likelihood.
//!
//! A reference node's belief is either sampled into weighted position
//! hypotheses (its top cumulative mass), or collapsed to a point estimate
//! whose covariance trace inflates the ranging sigma.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::belief::{GridBelief, GridSpec, Window};
use crate::grid::filter::{eval_window, gaussian, PAR_THRESHOLD};
use crate::types::Position2D;

#[derive(Debug, Clone, PartialEq)]
pub struct HypothesisSet {
    pub points: Vec<Position2D>,
    /// Normalized, all positive.
    pub weights: Vec<f64>,
}

impl HypothesisSet {
    pub fn singleton(p: Position2D) -> Self {
        Self {
            points: vec![p],
            weights: vec![1.0],
        }
    }

    /// Normalizes the weights; rejects empty sets and nonpositive weights.
    pub fn new(points: Vec<Position2D>, weights: Vec<f64>) -> Result<Self> {
        if points.is_empty() || points.len() != weights.len() {
            return Err(Error::Invalid(
                "hypothesis set needs matching, nonempty points and weights".into(),
            ));
        }
        if weights.iter().any(|w| !(*w > 0.0) || !w.is_finite()) {
            return Err(Error::Invalid("hypothesis weights must be positive".into()));
        }
        let total: f64 = weights.iter().sum();
        Ok(Self {
            points,
            weights: weights.into_iter().map(|w| w / total).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Sorts `(index, mass)` by descending mass (ties: lower index) and keeps
/// the shortest prefix reaching `tau · total`, capped at `max` entries.
fn top_mass_prefix(cells: &mut Vec<(usize, f64)>, total: f64, tau: f64, max: usize) {
    cells.sort_unstable_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let target = tau.clamp(0.0, 1.0) * total;
    let mut acc = 0.0;
    let mut take = 0;
    for (_, m) in cells.iter() {
        acc += m;
        take += 1;
        if acc >= target || take >= max.max(1) {
            break;
        }
    }
    cells.truncate(take);
}

/// Smallest prefix of cells (sorted by descending mass, ties by lower index)
/// whose cumulative mass reaches `tau`.
pub fn sample_hypotheses(belief: &GridBelief, tau: f64) -> HypothesisSet {
    sample_hypotheses_capped(belief, tau, usize::MAX)
}

/// [`sample_hypotheses`] with at most `max` hypotheses.
pub fn sample_hypotheses_capped(belief: &GridBelief, tau: f64, max: usize) -> HypothesisSet {
    let mut cells: Vec<(usize, f64)> = belief.nonzero().collect();
    top_mass_prefix(&mut cells, belief.total(), tau, max);
    let spec = belief.spec();
    let total: f64 = cells.iter().map(|c| c.1).sum();
    HypothesisSet {
        points: cells.iter().map(|(i, _)| spec.point(*i)).collect(),
        weights: cells.iter().map(|(_, m)| m / total).collect(),
    }
}

/// Point hypotheses from a 1-D histogram over the positive x-axis.
pub fn hypotheses_from_bins(
    bins: &[f64],
    centers: impl Fn(usize) -> f64,
    tau: f64,
    max: usize,
) -> HypothesisSet {
    let mut cells: Vec<(usize, f64)> = bins
        .iter()
        .copied()
        .enumerate()
        .filter(|(_, p)| *p > 0.0)
        .collect();
    top_mass_prefix(&mut cells, bins.iter().sum(), tau, max);
    let total: f64 = cells.iter().map(|c| c.1).sum();
    HypothesisSet {
        points: cells
            .iter()
            .map(|(j, _)| Position2D::new(centers(*j), 0.0))
            .collect(),
        weights: cells.iter().map(|(_, m)| m / total).collect(),
    }
}

pub(crate) fn hypotheses_field_in(
    spec: &GridSpec,
    window: Window,
    refs: &[(HypothesisSet, f64)],
    sigma_r: f64,
) -> Vec<f64> {
    let k = 1.0 / (2.0 * sigma_r * sigma_r);
    eval_window(spec, window, |g| {
        refs.iter()
            .map(|(set, z)| {
                set.points
                    .iter()
                    .zip(&set.weights)
                    .map(|(h, w)| w * gaussian(g.distance(h) - z, k))
                    .sum::<f64>()
            })
            .product()
    })
}

/// Same product as [`hypotheses_field_in`], but references are applied in
/// order of increasing hypothesis count and, after each one, cells below
/// `cutoff` times the running maximum are dropped from further evaluation.
/// Used when starting from a uniform prior over a large grid.
pub(crate) fn hypotheses_field_pruned(
    spec: &GridSpec,
    window: Window,
    refs: &[(HypothesisSet, f64)],
    sigma_r: f64,
    cutoff: f64,
) -> Vec<f64> {
    let k = 1.0 / (2.0 * sigma_r * sigma_r);
    let mut order: Vec<&(HypothesisSet, f64)> = refs.iter().collect();
    order.sort_by_key(|(set, _)| set.len());
    let mut acc = vec![1.0; window.len()];
    for (set, z) in order {
        let apply = |r: usize, out: &mut [f64]| {
            let y = spec.y(window.r0 + r);
            for (c, o) in out.iter_mut().enumerate() {
                if *o == 0.0 {
                    continue;
                }
                let g = Position2D::new(spec.x(window.c0 + c), y);
                *o *= set
                    .points
                    .iter()
                    .zip(&set.weights)
                    .map(|(h, w)| w * gaussian(g.distance(h) - z, k))
                    .sum::<f64>();
            }
        };
        if window.len() >= PAR_THRESHOLD {
            acc.par_chunks_mut(window.cols)
                .enumerate()
                .for_each(|(r, o)| apply(r, o));
        } else {
            acc.chunks_mut(window.cols)
                .enumerate()
                .for_each(|(r, o)| apply(r, o));
        }
        let floor = acc.iter().copied().fold(0.0, f64::max) * cutoff;
        acc.iter_mut()
            .filter(|v| **v < floor)
            .for_each(|v| *v = 0.0);
    }
    acc
}

/// Per-cell product over references of the hypothesis-weighted range
/// likelihoods. Unnormalized; one value per grid cell.
pub fn likelihood_hypotheses(
    spec: &GridSpec,
    refs: &[(HypothesisSet, f64)],
    sigma_r: f64,
) -> Vec<f64> {
    hypotheses_field_in(spec, spec.full_window(), refs, sigma_r)
}

/// A reference collapsed to a point estimate with spread `sigma = sqrt(tr P)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParametricRef {
    pub position: Position2D,
    pub sigma: f64,
    pub range: f64,
}

pub(crate) fn parametric_field_in(
    spec: &GridSpec,
    window: Window,
    refs: &[ParametricRef],
    sigma_r: f64,
) -> Vec<f64> {
    let ks: Vec<f64> = refs
        .iter()
        .map(|r| 1.0 / (2.0 * (sigma_r + r.sigma).powi(2)))
        .collect();
    eval_window(spec, window, |g| {
        refs.iter()
            .zip(&ks)
            .map(|(r, k)| gaussian(g.distance(&r.position) - r.range, *k))
            .product()
    })
}

/// Per-cell product of single Gaussians with the aggregated sigma
/// `sigma_r + sqrt(tr P_ref)`.
pub fn likelihood_parametric(spec: &GridSpec, refs: &[ParametricRef], sigma_r: f64) -> Vec<f64> {
    parametric_field_in(spec, spec.full_window(), refs, sigma_r)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line_belief(mass: &[f64]) -> GridBelief {
        let spec = GridSpec::new(0.0, (mass.len() - 1) as f64, 0.0, 0.0, 1.0).unwrap();
        GridBelief::from_dense(&spec, mass.to_vec()).unwrap()
    }

    #[test]
    fn full_mass_takes_every_positive_cell() {
        let b = line_belief(&[0.1, 0.0, 0.6, 0.3]);
        let h = sample_hypotheses(&b, 1.0);
        assert_eq!(h.len(), 3);
        assert!((h.weights[0] - 0.6).abs() < 1e-12);
        assert_eq!(h.points[0], Position2D::new(2.0, 0.0));
    }

    #[test]
    fn cumulative_prefix() {
        let b = line_belief(&[0.3, 0.5, 0.2]);
        let h = sample_hypotheses(&b, 0.7);
        assert_eq!(
            h.points,
            vec![Position2D::new(1.0, 0.0), Position2D::new(0.0, 0.0)]
        );
        assert!((h.weights[0] - 0.625).abs() < 1e-12);
        assert!((h.weights[1] - 0.375).abs() < 1e-12);
    }

    #[test]
    fn single_cell() {
        let spec = GridSpec::new(0.0, 3.0, 0.0, 3.0, 1.0).unwrap();
        let h = sample_hypotheses(&GridBelief::delta(&spec, 2, 1), 0.3);
        assert_eq!(h, HypothesisSet::singleton(Position2D::new(2.0, 1.0)));
    }

    #[test]
    fn ties_prefer_lower_index() {
        let b = line_belief(&[0.25, 0.25, 0.25, 0.25]);
        let h = sample_hypotheses(&b, 0.5);
        assert_eq!(
            h.points,
            vec![Position2D::new(0.0, 0.0), Position2D::new(1.0, 0.0)]
        );
        let capped = sample_hypotheses_capped(&b, 1.0, 3);
        assert_eq!(capped.len(), 3);
        assert!((capped.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn two_equal_hypotheses_at_equal_distance() {
        let spec = GridSpec::new(0.0, 2.0, 0.0, 0.0, 1.0).unwrap();
        let set = HypothesisSet::new(
            vec![Position2D::new(0.0, 0.0), Position2D::new(2.0, 0.0)],
            vec![1.0, 1.0],
        )
        .unwrap();
        let f = likelihood_hypotheses(&spec, &[(set, 1.0)], 0.3);
        assert!((f[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn parametric_inflation() {
        let spec = GridSpec::new(0.0, 4.0, 0.0, 0.0, 1.0).unwrap();
        let r = ParametricRef {
            position: Position2D::ORIGIN,
            sigma: 0.3,
            range: 1.0,
        };
        let f = likelihood_parametric(&spec, &[r], 0.2);
        // cell at x = 3 has residual 2 under an aggregated sigma of 0.5
        assert!((f[3] - (-4.0f64 / (2.0 * 0.25)).exp()).abs() < 1e-15);
    }

    #[test]
    fn bins_to_axis_points() {
        let h = hypotheses_from_bins(&[0.0, 0.2, 0.7, 0.1], |j| j as f64 * 0.5, 0.8, 10);
        assert_eq!(
            h.points,
            vec![Position2D::new(1.0, 0.0), Position2D::new(0.5, 0.0)]
        );
    }

    #[test]
    fn rejects_bad_sets() {
        assert!(HypothesisSet::new(vec![], vec![]).is_err());
        assert!(HypothesisSet::new(vec![Position2D::ORIGIN], vec![0.0]).is_err());
    }
}
