//! Grid-based Bayesian self-calibration.

mod belief;
mod filter;
mod histogram;
mod hypotheses;
mod params;
mod pgp;
mod smoothing;

pub use belief::{GridBelief, GridSpec, Window};
pub use filter::{estimate_position, init_anchor2_grid, predict, predict_dt, predict_raw, update};
pub use histogram::{histogram_filter_a1, histogram_predict, histogram_update, AxisHistogram};
pub use hypotheses::{
    hypotheses_from_bins, likelihood_hypotheses, likelihood_parametric, sample_hypotheses,
    sample_hypotheses_capped, HypothesisSet, ParametricRef,
};
pub use params::{AxisAnchorMode, PgpParams, Smoothing, Sweep, UncertaintyMode};
pub use pgp::{infer_grid, run_pgp, run_pgp_with, BeliefDump, PgpRun};
pub use smoothing::{smooth_ema, Smoother};
