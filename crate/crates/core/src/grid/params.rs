use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How a reference node's positional uncertainty enters the likelihood.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UncertaintyMode {
    /// Weighted sum over the reference's top-mass cells.
    #[default]
    Hypotheses,
    /// Point estimate with ranging sigma inflated by `sqrt(tr P)`.
    Parametric,
}

/// Which beliefs feed other nodes' updates within one epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Sweep {
    /// Every node reads the previous epoch's beliefs.
    #[default]
    Jacobi,
    /// Nodes are updated in index order and read the freshest beliefs.
    GaussSeidel,
}

/// Representation of the axis anchor inside other nodes' likelihoods.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AxisAnchorMode {
    #[default]
    Singleton,
    /// Top-mass histogram bins mapped onto the x-axis.
    Histogram,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Smoothing {
    #[default]
    None,
    Ema,
    /// Sliding coordinate-wise median followed by EMA.
    MedianEma,
}

/// Parameters of the grid-based filter. Keys in the config file use these
/// field names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PgpParams {
    /// Cumulative probability mass sampled as hypotheses, as a fraction in (0, 1].
    pub tau_percent: f64,
    /// Radius of the averaging region around the most likely cell (m).
    pub r_est: f64,
    /// Ranging standard deviation (m).
    pub sigma_r: f64,
    /// Expected node speed (m/s).
    pub velocity: f64,
    /// Motion noise per epoch (m).
    pub sigma_v: f64,
    /// Number of highest-mass cells propagated by the prediction step.
    pub k_top: usize,
    /// EMA factor in (0, 1].
    pub alpha: f64,
    /// Number of histogram bins for the axis anchor, spanning `[0, d_max]`.
    pub h_bins: usize,
    /// Maximum operational range (m).
    pub d_max: f64,
    pub cell_size: f64,
    /// Margin added around the inferred deployment extent (m).
    pub grid_margin: f64,
    pub mode: UncertaintyMode,
    pub sweep: Sweep,
    pub axis_anchor: AxisAnchorMode,
    pub smoothing: Smoothing,
    pub median_window: usize,
    /// References needed before a node's belief is propagated over time
    /// and offered to other nodes.
    pub init_min_refs: usize,
    /// Upper bound on hypotheses drawn from one belief.
    pub max_hypotheses: usize,
    /// A range whose expected likelihood under the predicted belief falls
    /// below `exp(-gate_sigmas²/2)` is left out of the update. 0 disables.
    pub gate_sigmas: f64,
    /// Consecutive epochs in which most ranges were gated out (or the update
    /// wiped all mass) before a node's belief is discarded and rebuilt.
    /// 0 never rebuilds.
    pub reinit_after: usize,
}

impl Default for PgpParams {
    fn default() -> Self {
        let d_max = 60.0;
        Self {
            tau_percent: 0.9,
            r_est: 0.5,
            sigma_r: 0.35,
            velocity: 0.0,
            sigma_v: 0.05,
            k_top: 64,
            alpha: 1.0,
            h_bins: (d_max / 0.05_f64).round() as usize + 1,
            d_max,
            cell_size: 0.25,
            grid_margin: 5.0,
            mode: UncertaintyMode::Hypotheses,
            sweep: Sweep::Jacobi,
            axis_anchor: AxisAnchorMode::Singleton,
            smoothing: Smoothing::None,
            median_window: 5,
            init_min_refs: 3,
            max_hypotheses: 256,
            gate_sigmas: 4.0,
            reinit_after: 3,
        }
    }
}

impl PgpParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.tau_percent > 0.0 && self.tau_percent <= 1.0) {
            return bad("tau_percent must be in (0, 1]");
        }
        if !(self.sigma_r > 0.0) {
            return bad("sigma_r must be > 0");
        }
        if !(self.sigma_v >= 0.0) || !(self.velocity >= 0.0) {
            return bad("sigma_v and velocity must be >= 0");
        }
        if !(self.r_est > 0.0) {
            return bad("r_est must be > 0");
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return bad("alpha must be in (0, 1]");
        }
        if self.h_bins < 2 {
            return bad("h_bins must be >= 2");
        }
        if !(self.d_max > 0.0) || !(self.cell_size > 0.0) || !(self.grid_margin >= 0.0) {
            return bad("d_max and cell_size must be > 0, grid_margin >= 0");
        }
        if !(self.gate_sigmas >= 0.0 && self.gate_sigmas.is_finite()) {
            return bad("gate_sigmas must be finite and >= 0");
        }
        if self.k_top == 0 || self.max_hypotheses == 0 || self.median_window == 0 {
            return bad("k_top, max_hypotheses and median_window must be >= 1");
        }
        Ok(())
    }

    /// Parses `key = value` lines; unknown keys are rejected.
    pub fn from_config_str(text: &str) -> Result<Self> {
        let p: Self = crate::config::parse(text)?;
        p.validate()?;
        Ok(p)
    }

    /// Expected-likelihood floor of the range gate, if enabled.
    pub fn gate_floor(&self) -> Option<f64> {
        (self.gate_sigmas > 0.0).then(|| (-0.5 * self.gate_sigmas * self.gate_sigmas).exp())
    }

    /// Bin centres spaced evenly over `[0, d_max]`.
    pub fn bin_center(&self, j: usize) -> f64 {
        j as f64 * self.d_max / (self.h_bins - 1) as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_bins_are_five_centimetres() {
        let p = PgpParams::default();
        assert!((p.bin_center(1) - 0.05).abs() < 1e-12);
        assert!((p.bin_center(p.h_bins - 1) - p.d_max).abs() < 1e-12);
        p.validate().unwrap();
    }

    #[test]
    fn config_overrides_and_rejects() {
        let p = PgpParams::from_config_str(
            "sigma_r = 0.2\nmode = \"parametric\"\n# note\nk_top = 10\n",
        )
        .unwrap();
        assert_eq!(p.sigma_r, 0.2);
        assert_eq!(p.mode, UncertaintyMode::Parametric);
        assert_eq!(p.k_top, 10);
        assert!(PgpParams::from_config_str("bogus = 1").is_err());
        assert!(PgpParams::from_config_str("sigma_r = 0").is_err());
        assert!(PgpParams::from_config_str("tau_percent = 1.5").is_err());
    }
}
