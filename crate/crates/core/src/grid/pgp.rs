//! Probabilistic grid-based positioning (PGP) over a sequence of epochs.
//!
//! Staging per epoch:
//! 1. the origin anchor is fixed at `(0, 0)` without uncertainty;
//! 2. the axis anchor runs a recursive 1-D histogram filter on `z01`;
//! 3. the half-plane anchor runs a grid filter on its two frame ranges,
//!    restricted to `y >= 0`;
//! 4. every other node runs predict → update against the ranges to all
//!    established references, each reference entering the likelihood as a
//!    weighted hypothesis set (or, in parametric mode, as a point estimate
//!    with inflated sigma).
//!
//! A node becomes established once one of its updates used at least
//! `init_min_refs` references; until then each epoch starts from a uniform
//! prior and the node is not offered to others.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::belief::{GridBelief, GridSpec};
use crate::grid::filter::{
    anchor2_field, estimate_position, eval_window, gaussian, predict_dt, update_window,
};
use crate::grid::histogram::{histogram_predict, histogram_update, AxisHistogram};
use crate::grid::hypotheses::{
    hypotheses_field_in, hypotheses_field_pruned, hypotheses_from_bins, parametric_field_in,
    sample_hypotheses_capped, HypothesisSet, ParametricRef,
};
use crate::grid::params::{AxisAnchorMode, PgpParams, Sweep, UncertaintyMode};
use crate::grid::smoothing::Smoother;
use crate::types::{DistanceMatrix, EpochResult, FrameAssumptions, Position2D};

/// Relative likelihood below which cells are dropped when a node starts
/// from a uniform prior.
const SUPPORT_CUTOFF: f64 = 1e-30;

/// Snapshot of one node's belief taken at a requested epoch.
#[derive(Debug, Clone)]
pub struct BeliefDump {
    pub epoch_index: usize,
    pub node: usize,
    pub belief: GridBelief,
}

#[derive(Debug, Clone)]
pub struct PgpRun {
    pub grid: GridSpec,
    pub results: Vec<EpochResult>,
    pub dumps: Vec<BeliefDump>,
    /// Updates whose likelihood wiped all predicted mass; the predicted
    /// belief was kept instead.
    pub fallbacks: usize,
    /// Beliefs discarded and rebuilt after repeated rejected updates.
    pub rebuilds: usize,
}

/// How a reference node enters other nodes' likelihoods this epoch.
#[derive(Debug, Clone)]
enum Reference {
    Hypotheses(HypothesisSet),
    Parametric { position: Position2D, sigma: f64 },
}

/// Square grid around the origin large enough for every node: the largest
/// per-pair median range (capped at `d_max`) plus the configured margin.
pub fn infer_grid(dataset: &[DistanceMatrix], params: &PgpParams) -> Result<GridSpec> {
    let n = dataset.first().map(DistanceMatrix::n).unwrap_or(0);
    let mut radius: f64 = 0.0;
    let mut samples = Vec::with_capacity(dataset.len());
    for i in 0..n {
        for j in (i + 1)..n {
            samples.clear();
            samples.extend(dataset.iter().filter_map(|m| m.get(i, j)));
            if samples.is_empty() {
                continue;
            }
            samples.sort_unstable_by(f64::total_cmp);
            radius = radius.max(samples[samples.len() / 2]);
        }
    }
    if radius <= 0.0 {
        return Err(Error::InsufficientData("no ranges to size the grid".into()));
    }
    GridSpec::around_origin(
        radius.min(params.d_max) + params.grid_margin,
        params.cell_size,
    )
}

struct Engine<'a> {
    frame: &'a FrameAssumptions,
    spec: &'a GridSpec,
    params: &'a PgpParams,
    axis: Option<AxisHistogram>,
    beliefs: Vec<Option<GridBelief>>,
    smoothers: Vec<Smoother>,
    fallbacks: usize,
    strikes: Vec<usize>,
    /// Consecutive axis ranges rejected by the gate.
    axis_rejected: Vec<f64>,
    rebuilds: usize,
}

struct NodeOutcome {
    belief: Option<GridBelief>,
    estimate: Option<Position2D>,
    available: bool,
    fallback: bool,
    /// Most ranges were gated out, or the update wiped all mass.
    strike: bool,
}

struct Gated {
    belief: GridBelief,
    fallback: bool,
    strike: bool,
}

/// Multiplies the predicted belief by every factor whose expected value
/// under it reaches `floor`, then normalizes. `base` is applied unconditionally.
fn gated_update(
    predicted: GridBelief,
    base: Option<Vec<f64>>,
    factors: &[Vec<f64>],
    floor: Option<f64>,
) -> Gated {
    let mass = predicted.window_mass();
    let mut product = base.unwrap_or_else(|| vec![1.0; mass.len()]);
    let (mut accepted, mut rejected) = (0usize, 0usize);
    for f in factors {
        if let Some(t) = floor {
            let expected: f64 = mass.iter().zip(f).map(|(m, v)| m * v).sum();
            if expected < t {
                rejected += 1;
                continue;
            }
        }
        accepted += 1;
        product.iter_mut().zip(f).for_each(|(a, b)| *a *= b);
    }
    if accepted == 0 {
        return Gated {
            belief: predicted,
            fallback: false,
            strike: true,
        };
    }
    match update_window(&predicted, &product) {
        Ok(b) => Gated {
            belief: b,
            fallback: false,
            strike: rejected > accepted,
        },
        Err(_) => Gated {
            belief: predicted,
            fallback: true,
            strike: true,
        },
    }
}

/// Weighted mean of a hypothesis set and its RMS spread about it.
fn spread_of(set: &HypothesisSet) -> (Position2D, f64) {
    let (mut x, mut y) = (0.0, 0.0);
    for (h, w) in set.points.iter().zip(&set.weights) {
        x += w * h.x;
        y += w * h.y;
    }
    let c = Position2D::new(x, y);
    let var: f64 = set
        .points
        .iter()
        .zip(&set.weights)
        .map(|(h, w)| w * (h.x - c.x).powi(2) + w * (h.y - c.y).powi(2))
        .sum();
    (c, var.sqrt())
}

impl<'a> Engine<'a> {
    fn reference_of(&self, j: usize) -> Option<Reference> {
        let p = self.params;
        if j == self.frame.origin {
            self.axis.as_ref()?;
            return Some(match p.mode {
                UncertaintyMode::Hypotheses => {
                    Reference::Hypotheses(HypothesisSet::singleton(Position2D::ORIGIN))
                }
                UncertaintyMode::Parametric => Reference::Parametric {
                    position: Position2D::ORIGIN,
                    sigma: 0.0,
                },
            });
        }
        if j == self.frame.axis {
            let h = self.axis.as_ref()?;
            let point = Position2D::new(h.estimate, 0.0);
            return Some(match (p.mode, p.axis_anchor) {
                (UncertaintyMode::Parametric, _) => Reference::Parametric {
                    position: point,
                    sigma: h.std_dev(p),
                },
                (UncertaintyMode::Hypotheses, AxisAnchorMode::Singleton) => {
                    Reference::Hypotheses(HypothesisSet::singleton(point))
                }
                (UncertaintyMode::Hypotheses, AxisAnchorMode::Histogram) => {
                    Reference::Hypotheses(hypotheses_from_bins(
                        &h.bins,
                        |k| p.bin_center(k),
                        p.tau_percent,
                        p.max_hypotheses,
                    ))
                }
            });
        }
        let b = self.beliefs[j].as_ref()?;
        Some(match p.mode {
            UncertaintyMode::Hypotheses => {
                Reference::Hypotheses(sample_hypotheses_capped(b, p.tau_percent, p.max_hypotheses))
            }
            UncertaintyMode::Parametric => Reference::Parametric {
                position: estimate_position(b, p.r_est),
                sigma: b.trace_sigma(),
            },
        })
    }

    fn axis_step(&mut self, m: &DistanceMatrix) -> bool {
        let p = self.params;
        let z01 = m.get(self.frame.origin, self.frame.axis);
        match (z01, self.axis.take()) {
            (Some(z), Some(prev)) => {
                let predicted = histogram_predict(&prev.bins, p);
                let consistent = p.gate_floor().is_none_or(|floor| {
                    let k = 1.0 / (2.0 * p.sigma_r * p.sigma_r);
                    let z = z.min(p.d_max);
                    let expected: f64 = predicted
                        .bins
                        .iter()
                        .enumerate()
                        .map(|(j, b)| b * gaussian(z - p.bin_center(j), k))
                        .sum();
                    expected >= floor
                });
                let updated = if consistent {
                    histogram_update(Some(&prev.bins), z01, p).ok()
                } else {
                    None
                };
                match updated {
                    Some(h) => {
                        self.axis = Some(h);
                        self.axis_rejected.clear();
                    }
                    None => {
                        self.fallbacks += consistent as usize;
                        self.axis = Some(predicted);
                        self.axis_rejected.push(z);
                    }
                }
                let limit = p.reinit_after;
                if limit > 0 && self.axis_rejected.len() >= limit {
                    let recent = &self.axis_rejected[self.axis_rejected.len() - limit..];
                    let lo = recent.iter().copied().fold(f64::INFINITY, f64::min);
                    let hi = recent.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    // rebuild only when the rejected ranges agree among themselves
                    if hi - lo <= 2.0 * p.gate_sigmas * p.sigma_r {
                        let mut h: Option<AxisHistogram> = None;
                        for &z in recent {
                            let prior = h.as_ref().map(|h| h.bins.as_slice());
                            h = histogram_update(prior, Some(z), p).ok().or(h);
                        }
                        if h.is_some() {
                            log::debug!("axis anchor rebuilt from {limit} agreeing ranges");
                            self.axis = h;
                            self.rebuilds += 1;
                        }
                        self.axis_rejected.clear();
                    }
                }
            }
            (Some(_), None) => match histogram_update(None, z01, p) {
                Ok(h) => self.axis = Some(h),
                Err(_) => self.fallbacks += 1,
            },
            (None, Some(prev)) => self.axis = Some(histogram_predict(&prev.bins, p)),
            (None, None) => {}
        }
        z01.is_some()
    }

    fn halfplane_step(&self, m: &DistanceMatrix, dt: f64) -> NodeOutcome {
        let (f, p) = (self.frame, self.params);
        let a1 = Position2D::new(self.axis.as_ref().map_or(0.0, |h| h.estimate), 0.0);
        let z02 = m.get(f.origin, f.halfplane);
        let z12 = m.get(f.axis, f.halfplane);
        match &self.beliefs[f.halfplane] {
            None => {
                let (Some(z02), Some(z12)) = (z02, z12) else {
                    return NodeOutcome {
                        belief: None,
                        estimate: None,
                        available: false,
                        fallback: false,
                        strike: false,
                    };
                };
                let window = self.spec.full_window();
                let values = anchor2_field(
                    self.spec,
                    window,
                    Position2D::ORIGIN,
                    a1,
                    z02,
                    z12,
                    p.sigma_r,
                );
                match GridBelief::from_window(self.spec, window, values) {
                    Ok(b) => NodeOutcome {
                        estimate: Some(estimate_position(&b, p.r_est)),
                        belief: Some(b),
                        available: true,
                        fallback: false,
                        strike: false,
                    },
                    Err(_) => NodeOutcome {
                        belief: None,
                        estimate: None,
                        available: false,
                        fallback: true,
                        strike: false,
                    },
                }
            }
            Some(prior) => {
                let predicted = predict_dt(prior, p, dt);
                if z02.is_none() && z12.is_none() {
                    return NodeOutcome {
                        estimate: Some(estimate_position(&predicted, p.r_est)),
                        belief: Some(predicted),
                        available: false,
                        fallback: false,
                        strike: false,
                    };
                }
                let w = predicted.window();
                let k = 1.0 / (2.0 * p.sigma_r * p.sigma_r);
                let upper = eval_window(self.spec, w, |g| if g.y < 0.0 { 0.0 } else { 1.0 });
                let factors: Vec<Vec<f64>> = [(z02, Position2D::ORIGIN), (z12, a1)]
                    .into_iter()
                    .filter_map(|(z, a)| {
                        z.map(|z| eval_window(self.spec, w, |g| gaussian(g.distance(&a) - z, k)))
                    })
                    .collect();
                let g = gated_update(predicted, Some(upper), &factors, p.gate_floor());
                NodeOutcome {
                    estimate: Some(estimate_position(&g.belief, p.r_est)),
                    belief: Some(g.belief),
                    available: true,
                    fallback: g.fallback,
                    strike: g.strike,
                }
            }
        }
    }

    fn node_step(
        &self,
        i: usize,
        m: &DistanceMatrix,
        refs: &[Option<Reference>],
        dt: f64,
    ) -> NodeOutcome {
        let p = self.params;
        let mut hyp: Vec<(HypothesisSet, f64)> = Vec::new();
        let mut par: Vec<ParametricRef> = Vec::new();
        for (j, r) in refs.iter().enumerate() {
            let (Some(r), Some(z)) = (r, m.get(i, j)) else {
                continue;
            };
            if j == i {
                continue;
            }
            match r {
                Reference::Hypotheses(set) => hyp.push((set.clone(), z)),
                Reference::Parametric { position, sigma } => par.push(ParametricRef {
                    position: *position,
                    sigma: *sigma,
                    range: z,
                }),
            }
        }
        let n_refs = hyp.len() + par.len();
        match &self.beliefs[i] {
            Some(prior) => {
                let predicted = predict_dt(prior, p, dt);
                if n_refs == 0 {
                    return NodeOutcome {
                        estimate: Some(estimate_position(&predicted, p.r_est)),
                        belief: Some(predicted),
                        available: false,
                        fallback: false,
                        strike: false,
                    };
                }
                let w = predicted.window();
                let factors: Vec<Vec<f64>> = match p.mode {
                    UncertaintyMode::Hypotheses => hyp
                        .iter()
                        .map(|r| {
                            hypotheses_field_in(self.spec, w, std::slice::from_ref(r), p.sigma_r)
                        })
                        .collect(),
                    UncertaintyMode::Parametric => par
                        .iter()
                        .map(|r| {
                            parametric_field_in(self.spec, w, std::slice::from_ref(r), p.sigma_r)
                        })
                        .collect(),
                };
                let g = gated_update(predicted, None, &factors, p.gate_floor());
                NodeOutcome {
                    estimate: Some(estimate_position(&g.belief, p.r_est)),
                    belief: Some(g.belief),
                    available: true,
                    fallback: g.fallback,
                    strike: g.strike,
                }
            }
            None if n_refs > 0 => {
                let mut b = self.initial_belief(&hyp, &par);
                let mut used = n_refs;
                if let (Ok((first, _)), Some(_)) = (&b, p.gate_floor()) {
                    // one pass dropping ranges that disagree with the first fix
                    let e = estimate_position(first, p.r_est);
                    let limit = |sigma: f64| p.gate_sigmas * (p.sigma_r + sigma);
                    let hyp_kept: Vec<(HypothesisSet, f64)> = hyp
                        .iter()
                        .filter(|(set, z)| {
                            let (c, s) = spread_of(set);
                            (e.distance(&c) - z).abs() <= limit(s)
                        })
                        .cloned()
                        .collect();
                    let par_kept: Vec<ParametricRef> = par
                        .iter()
                        .filter(|r| (e.distance(&r.position) - r.range).abs() <= limit(r.sigma))
                        .copied()
                        .collect();
                    let kept = hyp_kept.len() + par_kept.len();
                    if kept < n_refs && kept >= p.init_min_refs {
                        b = self.initial_belief(&hyp_kept, &par_kept);
                        used = kept;
                    }
                }
                match b {
                    Ok((b, peak)) => {
                        // ranges that cannot be fitted jointly do not seed a belief
                        let coherent = p.gate_floor().is_none_or(|floor| {
                            peak >= floor.powi(used.saturating_sub(2).max(1) as i32)
                        });
                        NodeOutcome {
                            estimate: Some(estimate_position(&b, p.r_est)),
                            belief: (used >= p.init_min_refs && coherent).then_some(b),
                            available: coherent,
                            fallback: false,
                            strike: false,
                        }
                    }
                    Err(_) => NodeOutcome {
                        belief: None,
                        estimate: None,
                        available: false,
                        fallback: true,
                        strike: false,
                    },
                }
            }
            None => NodeOutcome {
                belief: None,
                estimate: None,
                available: false,
                fallback: false,
                strike: false,
            },
        }
    }

    /// Posterior from a uniform prior, with the peak of the unnormalized
    /// likelihood.
    fn initial_belief(
        &self,
        hyp: &[(HypothesisSet, f64)],
        par: &[ParametricRef],
    ) -> Result<(GridBelief, f64)> {
        let p = self.params;
        let uniform = GridBelief::uniform(self.spec);
        let lik = match p.mode {
            UncertaintyMode::Hypotheses => {
                hypotheses_field_pruned(self.spec, uniform.window(), hyp, p.sigma_r, SUPPORT_CUTOFF)
            }
            UncertaintyMode::Parametric => {
                parametric_field_in(self.spec, uniform.window(), par, p.sigma_r)
            }
        };
        let peak = lik.iter().copied().fold(0.0, f64::max);
        Ok((update_window(&uniform, &lik)?, peak))
    }

    fn epoch(&mut self, m: &DistanceMatrix, dt: f64) -> EpochResult {
        let n = m.n();
        let f = self.frame.clone();
        let mut out = EpochResult::unavailable(m.epoch, n);
        let axis_seen = self.axis_step(m);
        let Some(axis) = self.axis.as_ref() else {
            return out;
        };
        out.estimates[f.origin] = Some(Position2D::ORIGIN);
        out.available[f.origin] = true;
        out.estimates[f.axis] = Some(Position2D::new(axis.estimate, 0.0));
        out.available[f.axis] = axis_seen;

        let a2 = self.halfplane_step(m, dt);
        self.apply(f.halfplane, a2, &mut out);

        let others: Vec<usize> = (0..n).filter(|i| !f.contains(*i)).collect();
        match self.params.sweep {
            Sweep::Jacobi => {
                let refs: Vec<Option<Reference>> = (0..n).map(|j| self.reference_of(j)).collect();
                let this = &*self;
                let outcomes: Vec<(usize, NodeOutcome)> = others
                    .par_iter()
                    .map(|&i| (i, this.node_step(i, m, &refs, dt)))
                    .collect();
                for (i, o) in outcomes {
                    self.apply(i, o, &mut out);
                }
            }
            Sweep::GaussSeidel => {
                let mut refs: Vec<Option<Reference>> =
                    (0..n).map(|j| self.reference_of(j)).collect();
                for &i in &others {
                    let o = self.node_step(i, m, &refs, dt);
                    self.apply(i, o, &mut out);
                    refs[i] = self.reference_of(i);
                }
            }
        }
        for i in 0..n {
            if let Some(e) = out.estimates[i] {
                out.estimates[i] = Some(self.smoothers[i].push(e));
            }
        }
        out
    }

    fn apply(&mut self, i: usize, o: NodeOutcome, out: &mut EpochResult) {
        self.fallbacks += o.fallback as usize;
        if o.belief.is_some() {
            self.beliefs[i] = o.belief;
        }
        if o.strike {
            self.strikes[i] += 1;
        } else if o.available {
            self.strikes[i] = 0;
        }
        let limit = self.params.reinit_after;
        if limit > 0 && self.strikes[i] >= limit {
            log::debug!("node {i}: belief rebuilt after {limit} rejected updates");
            self.beliefs[i] = None;
            self.strikes[i] = 0;
            self.rebuilds += 1;
        }
        out.estimates[i] = o.estimate;
        out.available[i] = o.available;
    }
}

/// Runs PGP over `dataset` and returns one result per epoch.
pub fn run_pgp(
    dataset: &[DistanceMatrix],
    frame: &FrameAssumptions,
    spec: &GridSpec,
    params: &PgpParams,
) -> Result<Vec<EpochResult>> {
    Ok(run_pgp_with(dataset, frame, spec, params, &[])?.results)
}

/// [`run_pgp`] that also snapshots every node's belief at `dump_epochs`.
pub fn run_pgp_with(
    dataset: &[DistanceMatrix],
    frame: &FrameAssumptions,
    spec: &GridSpec,
    params: &PgpParams,
    dump_epochs: &[usize],
) -> Result<PgpRun> {
    params.validate()?;
    let n = dataset
        .first()
        .ok_or_else(|| Error::InsufficientData("no epochs".into()))?
        .n();
    frame.check(n)?;
    if let Some(m) = dataset.iter().find(|m| m.n() != n) {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: m.n(),
        });
    }
    let mut engine = Engine {
        frame,
        spec,
        params,
        axis: None,
        beliefs: vec![None; n],
        smoothers: (0..n)
            .map(|_| Smoother::new(params.smoothing, params.alpha, params.median_window))
            .collect(),
        fallbacks: 0,
        strikes: vec![0; n],
        axis_rejected: Vec::new(),
        rebuilds: 0,
    };
    let mut results = Vec::with_capacity(dataset.len());
    let mut dumps = Vec::new();
    let mut last_t: Option<f64> = None;
    for (k, m) in dataset.iter().enumerate() {
        let dt = last_t.map_or(0.0, |t| (m.epoch - t).max(0.0));
        last_t = Some(m.epoch);
        results.push(engine.epoch(m, dt));
        if dump_epochs.contains(&k) {
            for (node, b) in engine.beliefs.iter().enumerate() {
                if let Some(b) = b {
                    dumps.push(BeliefDump {
                        epoch_index: k,
                        node,
                        belief: b.clone(),
                    });
                }
            }
        }
    }
    log::debug!(
        "pgp: {} epochs, {} fallbacks",
        results.len(),
        engine.fallbacks
    );
    Ok(PgpRun {
        grid: spec.clone(),
        results,
        dumps,
        fallbacks: engine.fallbacks,
        rebuilds: engine.rebuilds,
    })
}
