//! Grid Bayes filter steps: anchor-2 initialization, motion prediction,
//! measurement update and position read-out.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::belief::{GridBelief, GridSpec, Window};
use crate::grid::params::PgpParams;
use crate::types::Position2D;

/// `exp` underflows to exactly zero beyond this many standard deviations.
pub(crate) const UNDERFLOW_SIGMAS: f64 = 38.7;

/// Windows smaller than this are evaluated on the calling thread.
pub(crate) const PAR_THRESHOLD: usize = 4096;

pub(crate) fn gaussian(residual: f64, inv_two_var: f64) -> f64 {
    (-(residual * residual) * inv_two_var).exp()
}

/// Evaluates `f` at every grid point of `window`, row-major.
pub(crate) fn eval_window<F>(spec: &GridSpec, window: Window, f: F) -> Vec<f64>
where
    F: Fn(Position2D) -> f64 + Sync,
{
    let row = |r: usize, out: &mut [f64]| {
        let y = spec.y(window.r0 + r);
        for (c, o) in out.iter_mut().enumerate() {
            *o = f(Position2D::new(spec.x(window.c0 + c), y));
        }
    };
    let mut out = vec![0.0; window.len()];
    if window.len() >= PAR_THRESHOLD {
        out.par_chunks_mut(window.cols)
            .enumerate()
            .for_each(|(r, o)| row(r, o));
    } else {
        out.chunks_mut(window.cols)
            .enumerate()
            .for_each(|(r, o)| row(r, o));
    }
    out
}

/// Likelihood of the half-plane anchor given its ranges to the origin and
/// axis anchors, with every point below the x-axis excluded.
pub(crate) fn anchor2_field(
    spec: &GridSpec,
    window: Window,
    a0: Position2D,
    a1: Position2D,
    z02: f64,
    z12: f64,
    sigma_r: f64,
) -> Vec<f64> {
    let k = 1.0 / (2.0 * sigma_r * sigma_r);
    eval_window(spec, window, |g| {
        if g.y < 0.0 {
            0.0
        } else {
            gaussian(g.distance(&a0) - z02, k) * gaussian(g.distance(&a1) - z12, k)
        }
    })
}

/// Posterior of the half-plane anchor from its two frame ranges over the full grid.
pub fn init_anchor2_grid(
    a0: Position2D,
    a1: Position2D,
    z02: Option<f64>,
    z12: Option<f64>,
    spec: &GridSpec,
    params: &PgpParams,
) -> Result<GridBelief> {
    let z02 = z02.ok_or(Error::MissingRange(0, 2))?;
    let z12 = z12.ok_or(Error::MissingRange(1, 2))?;
    let field = anchor2_field(spec, spec.full_window(), a0, a1, z02, z12, params.sigma_r);
    GridBelief::from_window(spec, spec.full_window(), field)
}

/// The `k` highest-mass cells as `(cell index, mass)`; ties favour the
/// lower cell index.
pub(crate) fn top_cells(belief: &GridBelief, k: usize) -> Vec<(usize, f64)> {
    let mut cells: Vec<(usize, f64)> = belief.nonzero().collect();
    let by_mass = |a: &(usize, f64), b: &(usize, f64)| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0));
    if cells.len() > k {
        cells.select_nth_unstable_by(k - 1, by_mass);
        cells.truncate(k);
    }
    cells.sort_unstable_by(by_mass);
    cells
}

/// Raw (unnormalized) predicted mass over its support window.
pub fn predict_raw(prior: &GridBelief, params: &PgpParams, dt: f64) -> (Window, Vec<f64>) {
    let spec = prior.spec();
    let top = top_cells(prior, params.k_top);
    let shift = params.velocity * dt.max(0.0);
    let sigma = if params.sigma_v > 0.0 {
        params.sigma_v
    } else if shift > 0.0 {
        spec.cell_size / 2.0
    } else {
        // delta kernel: restrict to the selected cells
        let window = top
            .iter()
            .map(|(i, _)| {
                let (c, r) = spec.col_row(*i);
                Window {
                    c0: c,
                    r0: r,
                    cols: 1,
                    rows: 1,
                }
            })
            .reduce(|a, b| a.union(&b))
            .expect("normalized belief has positive mass");
        let mut mass = vec![0.0; window.len()];
        for (i, m) in &top {
            let (c, r) = spec.col_row(*i);
            mass[(r - window.r0) * window.cols + (c - window.c0)] = *m;
        }
        return (window, mass);
    };
    let reach = shift + UNDERFLOW_SIGMAS * sigma;
    let window = top
        .iter()
        .map(|(i, _)| {
            let (c, r) = spec.col_row(*i);
            spec.window_around(c, r, reach)
        })
        .reduce(|a, b| a.union(&b))
        .expect("normalized belief has positive mass");
    let sources: Vec<(Position2D, f64)> = top.iter().map(|(i, m)| (spec.point(*i), *m)).collect();
    let k = 1.0 / (2.0 * sigma * sigma);
    let mass = eval_window(spec, window, |g| {
        sources
            .iter()
            .map(|(s, m)| m * gaussian(g.distance(s) - shift, k))
            .sum()
    });
    (window, mass)
}

/// Motion update over the `k_top` most probable cells, renormalized.
pub fn predict(prior: &GridBelief, params: &PgpParams) -> GridBelief {
    predict_dt(prior, params, 1.0)
}

/// [`predict`] with an explicit epoch interval (only matters when `velocity > 0`).
pub fn predict_dt(prior: &GridBelief, params: &PgpParams, dt: f64) -> GridBelief {
    let (window, mass) = predict_raw(prior, params, dt);
    GridBelief::from_window(prior.spec(), window, mass).unwrap_or_else(|_| prior.clone())
}

/// Bayes update with a dense (one value per grid cell) likelihood field.
pub fn update(predicted: &GridBelief, likelihood: &[f64]) -> Result<GridBelief> {
    let spec = predicted.spec();
    if likelihood.len() != spec.m_total() {
        return Err(Error::DimensionMismatch {
            expected: spec.m_total(),
            found: likelihood.len(),
        });
    }
    let w = predicted.window();
    let values: Vec<f64> = (0..w.len()).map(|k| likelihood[w.cell(spec, k)]).collect();
    update_window(predicted, &values)
}

/// Bayes update with likelihood values laid out over the predicted window.
pub(crate) fn update_window(predicted: &GridBelief, likelihood: &[f64]) -> Result<GridBelief> {
    if likelihood.iter().any(|v| !(*v >= 0.0)) {
        return Err(Error::Invalid("likelihood must be nonnegative".into()));
    }
    let product: Vec<f64> = predicted
        .window_mass()
        .iter()
        .zip(likelihood)
        .map(|(p, l)| p * l)
        .collect();
    GridBelief::from_window(predicted.spec(), predicted.window(), product)
}

/// Mass-weighted centroid of the points within `r_est` of the most probable cell.
pub fn estimate_position(belief: &GridBelief, r_est: f64) -> Position2D {
    let spec = belief.spec();
    let mle_idx = belief.argmax();
    let mle = spec.point(mle_idx);
    let (c, r) = spec.col_row(mle_idx);
    let w = spec.window_around(c, r, r_est);
    let (mut sx, mut sy, mut sw) = (0.0, 0.0, 0.0);
    for row in w.r0..w.r0 + w.rows {
        for col in w.c0..w.c0 + w.cols {
            let p = belief.get(col, row);
            if p <= 0.0 {
                continue;
            }
            let g = Position2D::new(spec.x(col), spec.y(row));
            if g.distance(&mle) < r_est {
                sx += p * g.x;
                sy += p * g.y;
                sw += p;
            }
        }
    }
    if sw > 0.0 {
        Position2D::new(sx / sw, sy / sw)
    } else {
        mle
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(extent: f64, cell: f64) -> GridSpec {
        GridSpec::new(0.0, extent, 0.0, extent, cell).unwrap()
    }

    #[test]
    fn anchor2_grid_peaks_at_closed_form() {
        let spec = GridSpec::new(-2.0, 12.0, -2.0, 8.0, 0.1).unwrap();
        let p = PgpParams {
            sigma_r: 0.3,
            ..PgpParams::default()
        };
        let s = 50f64.sqrt();
        let b = init_anchor2_grid(
            Position2D::ORIGIN,
            Position2D::new(10.0, 0.0),
            Some(s),
            Some(s),
            &spec,
            &p,
        )
        .unwrap();
        let map = spec.point(b.argmax());
        let cf = crate::cf::place_anchor2(Position2D::new(10.0, 0.0), Some(s), Some(s)).unwrap();
        assert!(map.distance(&cf) <= 0.1 * 2f64.sqrt() + 1e-9, "{map:?}");
        assert!((b.total() - 1.0).abs() < 1e-9);
        assert!(b.nonzero().all(|(i, _)| spec.point(i).y >= 0.0));
    }

    #[test]
    fn anchor2_grid_below_axis_is_empty() {
        let spec = GridSpec::new(-2.0, 12.0, -8.0, -1.0, 0.25).unwrap();
        let p = PgpParams::default();
        let r = init_anchor2_grid(
            Position2D::ORIGIN,
            Position2D::new(10.0, 0.0),
            Some(7.0),
            Some(7.0),
            &spec,
            &p,
        );
        assert_eq!(r, Err(Error::AllMassZero));
        let r = init_anchor2_grid(
            Position2D::ORIGIN,
            Position2D::new(10.0, 0.0),
            None,
            Some(7.0),
            &spec,
            &p,
        );
        assert_eq!(r, Err(Error::MissingRange(0, 2)));
    }

    #[test]
    fn delta_kernel_restricts_to_top_cells() {
        let spec = grid(4.0, 1.0);
        let mut m = vec![0.0; spec.m_total()];
        for (i, v) in [(0, 0.4), (6, 0.3), (12, 0.2), (24, 0.1)] {
            m[i] = v;
        }
        let prior = GridBelief::from_dense(&spec, m).unwrap();
        let p = PgpParams {
            sigma_v: 0.0,
            k_top: 2,
            ..PgpParams::default()
        };
        let out = predict(&prior, &p);
        assert!((out.get_index(0) - 0.4 / 0.7).abs() < 1e-12);
        assert!((out.get_index(6) - 0.3 / 0.7).abs() < 1e-12);
        assert_eq!(out.get_index(12), 0.0);
        // tiny sigma gives the same limit
        let p = PgpParams {
            sigma_v: 1e-3,
            k_top: 2,
            ..PgpParams::default()
        };
        let out2 = predict(&prior, &p);
        for i in 0..spec.m_total() {
            assert!((out.get_index(i) - out2.get_index(i)).abs() < 1e-12);
        }
    }

    #[test]
    fn single_cell_prior_spreads_isotropically() {
        let spec = grid(4.0, 0.5);
        let (c, r) = (4, 4);
        let prior = GridBelief::delta(&spec, c, r);
        let p = PgpParams {
            sigma_v: 0.6,
            ..PgpParams::default()
        };
        let out = predict(&prior, &p);
        assert_eq!(out.argmax(), spec.index(c, r));
        // direct kernel oracle
        let centre = spec.point(spec.index(c, r));
        let raw: Vec<f64> = (0..spec.m_total())
            .map(|i| (-(spec.point(i).distance(&centre)).powi(2) / (2.0 * 0.36)).exp())
            .collect();
        let total: f64 = raw.iter().sum();
        for (i, v) in raw.iter().enumerate() {
            assert!((out.get_index(i) - v / total).abs() < 1e-12);
        }
        // symmetric neighbours
        assert!((out.get(c + 1, r) - out.get(c, r + 1)).abs() < 1e-15);
        assert!((out.get(c - 1, r) - out.get(c + 1, r)).abs() < 1e-15);
    }

    #[test]
    fn uniform_prior_stays_uniform() {
        let spec = grid(3.0, 0.5);
        let prior = GridBelief::uniform(&spec);
        let p = PgpParams {
            sigma_v: 0.05,
            k_top: spec.m_total(),
            ..PgpParams::default()
        };
        let out = predict(&prior, &p);
        let u = 1.0 / spec.m_total() as f64;
        for i in 0..spec.m_total() {
            assert!((out.get_index(i) - u).abs() < 1e-6);
        }
    }

    #[test]
    fn update_with_flat_field_is_identity() {
        let spec = grid(2.0, 1.0);
        let prior = GridBelief::from_dense(&spec, (1..=9).map(|v| v as f64).collect()).unwrap();
        let out = update(&prior, &[0.7; 9]).unwrap();
        for i in 0..9 {
            assert!((out.get_index(i) - prior.get_index(i)).abs() < 1e-9);
        }
        let uni = GridBelief::uniform(&spec);
        let field: Vec<f64> = (0..9).map(|v| (v * v) as f64 + 1.0).collect();
        let out = update(&uni, &field).unwrap();
        let s: f64 = field.iter().sum();
        for (i, f) in field.iter().enumerate() {
            assert!((out.get_index(i) - f / s).abs() < 1e-12);
        }
    }

    #[test]
    fn update_matches_brute_force_and_zero_case() {
        let spec = grid(2.0, 1.0);
        let prior_raw = [0.05, 0.1, 0.2, 0.15, 0.1, 0.05, 0.1, 0.2, 0.05];
        let field = [0.3, 0.0, 1.2, 0.4, 2.0, 0.7, 0.9, 0.1, 0.5];
        let prior = GridBelief::from_dense(&spec, prior_raw.to_vec()).unwrap();
        let out = update(&prior, &field).unwrap();
        let prods: Vec<f64> = prior_raw
            .iter()
            .zip(field.iter())
            .map(|(a, b)| a * b)
            .collect();
        let eta = 1.0 / prods.iter().sum::<f64>();
        for (i, p) in prods.iter().enumerate() {
            assert!((out.get_index(i) - p * eta).abs() < 1e-12);
        }
        assert_eq!(update(&prior, &[0.0; 9]), Err(Error::AllMassZero));
        assert!(update(&prior, &[0.0; 4]).is_err());
    }

    #[test]
    fn estimate_examples() {
        let spec = GridSpec::new(0.0, 2.0, 0.0, 1.0, 1.0).unwrap();
        let b = GridBelief::delta(&spec, 2, 1);
        assert_eq!(estimate_position(&b, 0.5), Position2D::new(2.0, 1.0));

        let mut m = vec![0.0; spec.m_total()];
        m[spec.index(0, 0)] = 0.6;
        m[spec.index(1, 0)] = 0.4;
        let b = GridBelief::from_dense(&spec, m).unwrap();
        let e = estimate_position(&b, 1.5);
        assert!((e.x - 0.4).abs() < 1e-12 && e.y.abs() < 1e-12);
    }

    #[test]
    fn estimate_symmetric_bump() {
        let spec = grid(10.0, 0.25);
        let centre = Position2D::new(5.0, 5.0);
        let m: Vec<f64> = (0..spec.m_total())
            .map(|i| (-(spec.point(i).distance(&centre)).powi(2) / 2.0).exp())
            .collect();
        let b = GridBelief::from_dense(&spec, m).unwrap();
        let e = estimate_position(&b, 2.0);
        assert!(e.distance(&centre) < 0.125);
    }
}
