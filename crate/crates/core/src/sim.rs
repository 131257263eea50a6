//! Synthetic fully meshed ranging networks.
//!
//! Visibility comes from segment/obstacle intersection. LOS ranges carry
//! zero-mean Gaussian noise; NLOS ranges carry a positive bias (half-normal
//! plus exponential) and occasionally a uniform outlier.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{DistanceMatrix, NetworkTruth, Position2D, VisibilityMatrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RangingModel {
    pub sigma_los: f64,
    /// Mean of the exponential NLOS bias (m).
    pub nlos_bias_scale: f64,
    pub sigma_nlos_base: f64,
    pub dropout_prob_los: f64,
    pub dropout_prob_nlos: f64,
    /// Probability that an NLOS reading is replaced by `Uniform(d, outlier_max)`.
    pub outlier_prob: f64,
    pub outlier_max: f64,
    pub seed: u64,
}

impl Default for RangingModel {
    fn default() -> Self {
        Self {
            sigma_los: 0.35,
            nlos_bias_scale: 0.4,
            sigma_nlos_base: 0.4,
            dropout_prob_los: 0.01,
            dropout_prob_nlos: 0.05,
            outlier_prob: 0.12,
            outlier_max: 85.0,
            seed: 1,
        }
    }
}

impl RangingModel {
    /// Ranges equal true distances, nothing dropped.
    pub fn noiseless(seed: u64) -> Self {
        Self {
            sigma_los: 0.0,
            nlos_bias_scale: 0.0,
            sigma_nlos_base: 0.0,
            dropout_prob_los: 0.0,
            dropout_prob_nlos: 0.0,
            outlier_prob: 0.0,
            outlier_max: 0.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let probs = [
            self.dropout_prob_los,
            self.dropout_prob_nlos,
            self.outlier_prob,
        ];
        if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::Config("probabilities must lie in [0, 1]".into()));
        }
        let scales = [
            self.sigma_los,
            self.nlos_bias_scale,
            self.sigma_nlos_base,
            self.outlier_max,
        ];
        if scales.iter().any(|s| !(*s >= 0.0) || !s.is_finite()) {
            return Err(Error::Config("scales must be finite and >= 0".into()));
        }
        Ok(())
    }
}

/// Axis-aligned obstacle `[x0, x1] × [y0, y1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl Rect {
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Self {
            x0: x0.min(x1),
            y0: y0.min(y1),
            x1: x0.max(x1),
            y1: y0.max(y1),
        }
    }

    /// Liang-Barsky clip of segment `a–b` against the closed rectangle.
    pub fn intersects_segment(&self, a: Position2D, b: Position2D) -> bool {
        let (dx, dy) = (b.x - a.x, b.y - a.y);
        let mut t0: f64 = 0.0;
        let mut t1: f64 = 1.0;
        for (p, q) in [
            (-dx, a.x - self.x0),
            (dx, self.x1 - a.x),
            (-dy, a.y - self.y0),
            (dy, self.y1 - a.y),
        ] {
            if p == 0.0 {
                if q < 0.0 {
                    return false;
                }
            } else {
                let r = q / p;
                if p < 0.0 {
                    t0 = t0.max(r);
                } else {
                    t1 = t1.min(r);
                }
                if t0 > t1 {
                    return false;
                }
            }
        }
        true
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Layout {
    /// Nodes on a near-square lattice inset 2 m from the walls.
    Grid,
    UniformRandom,
    Explicit {
        positions: Vec<[f64; 2]>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioSpec {
    pub name: String,
    pub n_nodes: usize,
    pub hall_width: f64,
    pub hall_height: f64,
    pub n_epochs: usize,
    /// Epochs per second.
    pub epoch_rate: f64,
    pub layout: Layout,
    pub obstacles: Vec<Rect>,
    /// Node labels; defaults to `N00`, `N01`, ...
    pub labels: Vec<String>,
    /// Explicit LOS matrix (1 = LOS) overriding the obstacle geometry.
    pub visibility: Option<Vec<Vec<u8>>>,
    /// Named frame configurations, each as origin/axis/half-plane labels.
    pub frames: Vec<[String; 3]>,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        Self {
            name: "custom".into(),
            n_nodes: 12,
            hall_width: 44.0,
            hall_height: 30.0,
            n_epochs: 2000,
            epoch_rate: 10.0,
            layout: Layout::Grid,
            obstacles: Vec::new(),
            labels: Vec::new(),
            visibility: None,
            frames: Vec::new(),
        }
    }
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_nodes < 4 {
            return Err(Error::Config(format!(
                "need at least 4 nodes, got {}",
                self.n_nodes
            )));
        }
        if !(self.hall_width > 0.0 && self.hall_height > 0.0) {
            return Err(Error::Config("hall dimensions must be > 0".into()));
        }
        if !(self.epoch_rate > 0.0) {
            return Err(Error::Config("epoch_rate must be > 0".into()));
        }
        if !self.labels.is_empty() && self.labels.len() != self.n_nodes {
            return Err(Error::Config(format!(
                "{} labels for {} nodes",
                self.labels.len(),
                self.n_nodes
            )));
        }
        Ok(())
    }

    pub fn node_labels(&self) -> Vec<String> {
        if self.labels.is_empty() {
            (0..self.n_nodes).map(|i| format!("N{i:02}")).collect()
        } else {
            self.labels.clone()
        }
    }

    /// The built-in 12-node, 44×30 m hall with obstacles around the upper
    /// right corner so that `D5B4`, `8AA5` and `9911` are mostly NLOS.
    pub fn torgau_like() -> Self {
        let labels = [
            "4503", "8B05", "4197", "1C2E", "D5B4", "2A7F", "8AA5", "9911", "3D10", "5E66", "6F21",
            "7A93",
        ];
        let positions = [
            [4.0, 4.0],
            [22.0, 3.0],
            [40.0, 5.0],
            [3.0, 15.0],
            [14.0, 26.0],
            [24.0, 15.0],
            [41.0, 26.0],
            [30.0, 27.0],
            [41.0, 15.0],
            [4.0, 27.0],
            [12.0, 10.0],
            [32.0, 9.0],
        ];
        Self {
            name: "torgau-like".into(),
            n_nodes: 12,
            hall_width: 44.0,
            hall_height: 30.0,
            n_epochs: 2000,
            epoch_rate: 10.0,
            layout: Layout::Explicit {
                positions: positions.to_vec(),
            },
            obstacles: vec![
                Rect::new(14.2, 24.5, 15.1, 29.4),
                Rect::new(39.6, 21.1, 44.0, 23.3),
                Rect::new(26.7, 21.1, 28.3, 24.6),
            ],
            labels: labels.iter().map(|s| s.to_string()).collect(),
            visibility: None,
            frames: vec![
                ["4503".into(), "8B05".into(), "1C2E".into()],
                ["D5B4".into(), "8AA5".into(), "9911".into()],
            ],
        }
    }

    /// Resolves a scenario name shipped with the library.
    pub fn builtin(name: &str) -> Option<Self> {
        match name {
            "torgau-like" => Some(Self::torgau_like()),
            _ => None,
        }
    }
}

/// Places nodes and derives visibility.
pub fn generate_layout(spec: &ScenarioSpec, seed: u64) -> Result<NetworkTruth> {
    spec.validate()?;
    let (w, h) = (spec.hall_width, spec.hall_height);
    let positions: Vec<Position2D> = match &spec.layout {
        Layout::Explicit { positions } => {
            if positions.len() != spec.n_nodes {
                return Err(Error::LayoutInfeasible(format!(
                    "{} explicit positions for {} nodes",
                    positions.len(),
                    spec.n_nodes
                )));
            }
            positions
                .iter()
                .map(|[x, y]| {
                    if (0.0..=w).contains(x) && (0.0..=h).contains(y) {
                        Position2D::checked(*x, *y)
                    } else {
                        Err(Error::LayoutInfeasible(format!(
                            "({x}, {y}) outside the {w}×{h} hall"
                        )))
                    }
                })
                .collect::<Result<_>>()?
        }
        Layout::Grid => {
            let cols = (spec.n_nodes as f64 * w / h).sqrt().ceil().max(1.0) as usize;
            let rows = spec.n_nodes.div_ceil(cols);
            let inset = 2.0f64.min(w / 4.0).min(h / 4.0);
            let step = |extent: f64, k: usize| {
                if k > 1 {
                    (extent - 2.0 * inset) / (k - 1) as f64
                } else {
                    0.0
                }
            };
            let (sx, sy) = (step(w, cols), step(h, rows));
            (0..spec.n_nodes)
                .map(|i| {
                    // stagger alternate rows so no three nodes of a row pair are collinear
                    let shift = if (i / cols) % 2 == 1 { sx / 3.0 } else { 0.0 };
                    Position2D::new(
                        (inset + (i % cols) as f64 * sx + shift).min(w),
                        inset + (i / cols) as f64 * sy,
                    )
                })
                .collect()
        }
        Layout::UniformRandom => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6c61_796f_7574);
            (0..spec.n_nodes)
                .map(|_| Position2D::new(rng.random_range(0.0..=w), rng.random_range(0.0..=h)))
                .collect()
        }
    };
    let n = positions.len();
    let visibility = match &spec.visibility {
        Some(rows) => {
            let rows: Vec<Vec<bool>> = rows
                .iter()
                .map(|r| r.iter().map(|v| *v != 0).collect())
                .collect();
            let v = VisibilityMatrix::from_rows(&rows)?;
            if v.n() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: v.n(),
                });
            }
            v
        }
        None => {
            let mut v = VisibilityMatrix::all_los(n);
            for i in 0..n {
                for j in (i + 1)..n {
                    if spec
                        .obstacles
                        .iter()
                        .any(|r| r.intersects_segment(positions[i], positions[j]))
                    {
                        v.set(i, j, false);
                    }
                }
            }
            v
        }
    };
    NetworkTruth::new(positions, visibility)
}

/// Draws one range for pair `(i, j)`; `None` models a dropped measurement.
pub fn sample_range<R: Rng + ?Sized>(
    truth: &NetworkTruth,
    i: usize,
    j: usize,
    model: &RangingModel,
    rng: &mut R,
) -> Result<Option<f64>> {
    if i == j {
        return Err(Error::Invalid("range to self".into()));
    }
    let d = truth.true_distance(i, j)?;
    let los = truth.visibility.is_los(i, j);
    let dropout = if los {
        model.dropout_prob_los
    } else {
        model.dropout_prob_nlos
    };
    if dropout > 0.0 && rng.random::<f64>() < dropout {
        return Ok(None);
    }
    let z = if los {
        d + normal(rng, model.sigma_los)
    } else if model.outlier_prob > 0.0 && rng.random::<f64>() < model.outlier_prob {
        if model.outlier_max > d {
            rng.random_range(d..model.outlier_max)
        } else {
            d
        }
    } else {
        let bias = if model.nlos_bias_scale > 0.0 {
            Exp::new(1.0 / model.nlos_bias_scale)
                .expect("positive rate")
                .sample(rng)
        } else {
            0.0
        };
        d + normal(rng, model.sigma_nlos_base).abs() + bias
    };
    Ok(Some(z.max(0.0)))
}

fn normal<R: Rng + ?Sized>(rng: &mut R, sigma: f64) -> f64 {
    if sigma > 0.0 {
        Normal::new(0.0, sigma).expect("finite sigma").sample(rng)
    } else {
        0.0
    }
}

/// One symmetric matrix per epoch; epoch `k` draws from its own ChaCha
/// stream, so output is independent of thread scheduling.
pub fn generate_dataset(
    spec: &ScenarioSpec,
    model: &RangingModel,
) -> Result<(NetworkTruth, Vec<DistanceMatrix>)> {
    model.validate()?;
    let truth = generate_layout(spec, model.seed)?;
    let n = truth.n();
    let epochs = (0..spec.n_epochs)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(model.seed);
            rng.set_stream(k as u64);
            let mut m = DistanceMatrix::empty(k as f64 / spec.epoch_rate, n);
            for i in 0..n {
                for j in (i + 1)..n {
                    m.set(i, j, sample_range(&truth, i, j, model, &mut rng)?)?;
                }
            }
            Ok(m)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((truth, epochs))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_nodes(los: bool) -> NetworkTruth {
        let mut v = VisibilityMatrix::all_los(2);
        v.set(0, 1, los);
        NetworkTruth::new(
            vec![Position2D::new(0.0, 0.0), Position2D::new(6.0, 8.0)],
            v,
        )
        .unwrap()
    }

    #[test]
    fn segment_rectangle() {
        let r = Rect::new(4.0, -1.0, 6.0, 1.0);
        assert!(r.intersects_segment(Position2D::new(0.0, 0.0), Position2D::new(10.0, 0.0)));
        assert!(!r.intersects_segment(Position2D::new(0.0, 2.0), Position2D::new(10.0, 2.0)));
        assert!(!r.intersects_segment(Position2D::new(0.0, 0.0), Position2D::new(3.0, 0.0)));
        assert!(r.intersects_segment(Position2D::new(5.0, 0.0), Position2D::new(5.0, 0.5)));
    }

    #[test]
    fn no_obstacles_all_los() {
        let spec = ScenarioSpec {
            layout: Layout::Grid,
            ..ScenarioSpec::default()
        };
        let t = generate_layout(&spec, 0).unwrap();
        assert_eq!(t.visibility.nlos_share(), 0.0);
        assert!(t
            .positions
            .iter()
            .all(|p| (0.0..=44.0).contains(&p.x) && (0.0..=30.0).contains(&p.y)));
    }

    #[test]
    fn single_blocked_pair() {
        let spec = ScenarioSpec {
            n_nodes: 4,
            layout: Layout::Explicit {
                positions: vec![[0.0, 0.0], [10.0, 0.0], [0.0, 10.0], [10.0, 10.0]],
            },
            obstacles: vec![Rect::new(4.5, -0.5, 5.5, 0.5)],
            ..ScenarioSpec::default()
        };
        let t = generate_layout(&spec, 0).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(
                    t.visibility.is_los(i, j),
                    !((i, j) == (0, 1) || (i, j) == (1, 0)),
                    "{i} {j}"
                );
            }
        }
    }

    #[test]
    fn explicit_outside_hall_is_infeasible() {
        let spec = ScenarioSpec {
            n_nodes: 4,
            layout: Layout::Explicit {
                positions: vec![[0.0, 0.0], [50.0, 0.0], [0.0, 10.0], [10.0, 10.0]],
            },
            ..ScenarioSpec::default()
        };
        assert!(matches!(
            generate_layout(&spec, 0),
            Err(Error::LayoutInfeasible(_))
        ));
    }

    #[test]
    fn noiseless_los_is_exact() {
        let t = two_nodes(true);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let z = sample_range(&t, 0, 1, &RangingModel::noiseless(0), &mut rng).unwrap();
        assert_eq!(z, Some(10.0));
    }

    #[test]
    fn full_dropout() {
        let t = two_nodes(false);
        let model = RangingModel {
            dropout_prob_nlos: 1.0,
            ..RangingModel::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            assert_eq!(sample_range(&t, 0, 1, &model, &mut rng).unwrap(), None);
        }
    }

    #[test]
    fn nlos_mean_matches_mixture() {
        let t = two_nodes(false);
        let model = RangingModel {
            sigma_nlos_base: 0.5,
            nlos_bias_scale: 3.0,
            outlier_prob: 0.02,
            outlier_max: 25.0,
            dropout_prob_nlos: 0.0,
            ..RangingModel::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 100_000;
        let mean_bias: f64 = (0..n)
            .map(|_| sample_range(&t, 0, 1, &model, &mut rng).unwrap().unwrap() - 10.0)
            .sum::<f64>()
            / n as f64;
        // E|N(0, s)| = s * sqrt(2/pi); the uniform outlier over (d, 25) has mean bias (25 - d) / 2
        let body = 0.5 * (2.0 / std::f64::consts::PI).sqrt() + 3.0;
        let expected = 0.98 * body + 0.02 * (25.0 - 10.0) / 2.0;
        assert!(mean_bias > 0.0);
        assert!(
            (mean_bias - expected).abs() < 0.1 * expected,
            "{mean_bias} vs {expected}"
        );
    }

    #[test]
    fn dataset_counts_and_determinism() {
        let spec = ScenarioSpec {
            n_epochs: 50,
            ..ScenarioSpec::torgau_like()
        };
        let model = RangingModel {
            dropout_prob_los: 0.0,
            dropout_prob_nlos: 0.0,
            ..RangingModel::default()
        };
        let (truth, a) = generate_dataset(&spec, &model).unwrap();
        let (_, b) = generate_dataset(&spec, &model).unwrap();
        assert_eq!(a, b);
        assert_eq!(truth.n(), 12);
        assert_eq!(
            a.iter().map(DistanceMatrix::present_pairs).sum::<usize>(),
            66 * 50
        );
        assert!(a.iter().all(DistanceMatrix::is_symmetric));
    }

    #[test]
    fn model_validation() {
        assert!(RangingModel {
            outlier_prob: 1.5,
            ..RangingModel::default()
        }
        .validate()
        .is_err());
        assert!(RangingModel {
            sigma_los: -1.0,
            ..RangingModel::default()
        }
        .validate()
        .is_err());
        assert!(ScenarioSpec {
            n_nodes: 3,
            ..ScenarioSpec::default()
        }
        .validate()
        .is_err());
    }
}
