//! One-dimensional histogram filter for the axis anchor, which is confined
//! to the positive x-axis.

use crate::error::{Error, Result};
use crate::grid::params::PgpParams;

#[derive(Debug, Clone, PartialEq)]
pub struct AxisHistogram {
    /// Probability-weighted mean of the bin centres (m).
    pub estimate: f64,
    /// Normalized bin probabilities; bin `j` is centred at `params.bin_center(j)`.
    pub bins: Vec<f64>,
    /// The measurement exceeded `d_max` and was clamped.
    pub clamped: bool,
}

impl AxisHistogram {
    pub fn std_dev(&self, params: &PgpParams) -> f64 {
        let var: f64 = self
            .bins
            .iter()
            .enumerate()
            .map(|(j, p)| p * (params.bin_center(j) - self.estimate).powi(2))
            .sum();
        var.max(0.0).sqrt()
    }
}

fn gaussian(residual: f64, sigma: f64) -> f64 {
    (-(residual * residual) / (2.0 * sigma * sigma)).exp()
}

/// Single-measurement histogram: Gaussian range likelihood over the bins.
pub fn histogram_filter_a1(z01: Option<f64>, params: &PgpParams) -> Result<AxisHistogram> {
    histogram_update(None, z01, params)
}

/// Recursive form: the prior (if any) is blurred by `sigma_v`, multiplied by
/// the range likelihood and renormalized.
pub fn histogram_update(
    prior: Option<&[f64]>,
    z01: Option<f64>,
    params: &PgpParams,
) -> Result<AxisHistogram> {
    let z = z01.ok_or(Error::MissingRange(0, 1))?;
    if !z.is_finite() || z < 0.0 {
        return Err(Error::Invalid(format!("range {z}")));
    }
    let clamped = z > params.d_max;
    let z = z.min(params.d_max);
    let h = params.h_bins;
    let mut bins: Vec<f64> = match prior {
        Some(p) if p.len() == h => blur(p, params),
        Some(p) => {
            return Err(Error::DimensionMismatch {
                expected: h,
                found: p.len(),
            })
        }
        None => vec![1.0; h],
    };
    for (j, b) in bins.iter_mut().enumerate() {
        *b *= gaussian(z - params.bin_center(j), params.sigma_r);
    }
    let total: f64 = bins.iter().sum();
    if !(total > 0.0) {
        return Err(Error::AllMassZero);
    }
    bins.iter_mut().for_each(|b| *b /= total);
    let estimate = bins
        .iter()
        .enumerate()
        .map(|(j, p)| p * params.bin_center(j))
        .sum();
    Ok(AxisHistogram {
        estimate,
        bins,
        clamped,
    })
}

/// Carries a histogram forward one epoch without a measurement.
pub fn histogram_predict(prior: &[f64], params: &PgpParams) -> AxisHistogram {
    let mut bins = blur(prior, params);
    let total: f64 = bins.iter().sum();
    bins.iter_mut().for_each(|b| *b /= total);
    let estimate = bins
        .iter()
        .enumerate()
        .map(|(j, p)| p * params.bin_center(j))
        .sum();
    AxisHistogram {
        estimate,
        bins,
        clamped: false,
    }
}

fn blur(prior: &[f64], params: &PgpParams) -> Vec<f64> {
    if params.sigma_v <= 0.0 {
        return prior.to_vec();
    }
    let width = params.bin_center(1);
    // exp underflows to exactly zero beyond ~38.6 sigma
    let reach = ((params.sigma_v * 38.7) / width).ceil() as usize;
    let kernel: Vec<f64> = (0..=reach)
        .map(|k| gaussian(k as f64 * width, params.sigma_v))
        .collect();
    let n = prior.len();
    let mut out = vec![0.0; n];
    for (m, &p) in prior.iter().enumerate() {
        if p == 0.0 {
            continue;
        }
        let lo = m.saturating_sub(reach);
        let hi = (m + reach).min(n - 1);
        for (i, o) in out.iter_mut().enumerate().take(hi + 1).skip(lo) {
            *o += p * kernel[i.abs_diff(m)];
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(sigma_r: f64) -> PgpParams {
        PgpParams {
            sigma_r,
            d_max: 40.0,
            h_bins: 801,
            ..PgpParams::default()
        }
    }

    #[test]
    fn mode_and_mean_at_measurement() {
        let p = params(0.1);
        let h = histogram_filter_a1(Some(5.0), &p).unwrap();
        let argmax = (0..h.bins.len())
            .max_by(|&a, &b| h.bins[a].total_cmp(&h.bins[b]))
            .unwrap();
        assert!((p.bin_center(argmax) - 5.0).abs() < 1e-12);
        assert!((h.estimate - 5.0).abs() < 1e-6);
        assert!(!h.clamped);
    }

    #[test]
    fn neighbouring_bin_ratio() {
        let p = params(0.1);
        let h = histogram_filter_a1(Some(5.0), &p).unwrap();
        let ratio = h.bins[101] / h.bins[100];
        let expected = (-0.05f64.powi(2) / (2.0 * 0.1f64.powi(2))).exp();
        assert!((ratio - expected).abs() < 1e-12);
        assert!((ratio - 0.8825).abs() < 1e-4);
    }

    #[test]
    fn flat_limit() {
        let p = params(400.0);
        let h = histogram_filter_a1(Some(5.0), &p).unwrap();
        let max = h.bins.iter().cloned().fold(f64::MIN, f64::max);
        let min = h.bins.iter().cloned().fold(f64::MAX, f64::min);
        assert!(max / min < 1.01);
    }

    #[test]
    fn missing_and_clamped() {
        let p = params(0.1);
        assert_eq!(
            histogram_filter_a1(None, &p),
            Err(Error::MissingRange(0, 1))
        );
        let h = histogram_filter_a1(Some(55.0), &p).unwrap();
        assert!(h.clamped);
        assert!(h.estimate <= 40.0);
    }

    #[test]
    fn recursion_tightens() {
        let p = params(0.3);
        let first = histogram_filter_a1(Some(10.0), &p).unwrap();
        let second = histogram_update(Some(&first.bins), Some(10.0), &p).unwrap();
        assert!(second.std_dev(&p) < first.std_dev(&p));
        let carried = histogram_predict(&second.bins, &p);
        assert!((carried.estimate - second.estimate).abs() < 1e-9);
    }
}
