use meshcal::sim::{generate_dataset, sample_range, RangingModel, ScenarioSpec};
use meshcal::{NetworkTruth, Position2D, VisibilityMatrix};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn pair(los: bool) -> NetworkTruth {
    let mut v = VisibilityMatrix::all_los(2);
    v.set(0, 1, los);
    NetworkTruth::new(vec![Position2D::ORIGIN, Position2D::new(20.0, 0.0)], v).unwrap()
}

fn residuals(truth: &NetworkTruth, model: &RangingModel, count: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(model.seed);
    (0..count)
        .filter_map(|_| sample_range(truth, 0, 1, model, &mut rng).unwrap())
        .map(|z| z - 20.0)
        .collect()
}

fn moments(v: &[f64]) -> (f64, f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let m2 = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let m3 = v.iter().map(|x| (x - mean).powi(3)).sum::<f64>() / n;
    (mean, m2.sqrt(), m3 / m2.powf(1.5))
}

#[test]
fn los_noise_is_symmetric_with_configured_spread() {
    let model = RangingModel {
        sigma_los: 0.26,
        dropout_prob_los: 0.0,
        seed: 11,
        ..RangingModel::default()
    };
    let r = residuals(&pair(true), &model, 100_000);
    let (mean, sd, skew) = moments(&r);
    assert!(mean.abs() < 0.005, "mean {mean}");
    assert!((sd - 0.26).abs() <= 0.01, "sd {sd}");
    assert!(skew.abs() < 0.05, "skewness {skew}");
}

#[test]
fn nlos_residuals_have_positive_median() {
    let mut r = residuals(&pair(false), &RangingModel::default(), 20_000);
    r.sort_unstable_by(f64::total_cmp);
    assert!(r[r.len() / 2] > 0.0);
    assert!(r.iter().any(|e| *e > 20.0), "no heavy tail");
}

#[test]
fn generated_matrices_are_valid() {
    let spec = ScenarioSpec {
        n_epochs: 200,
        ..ScenarioSpec::torgau_like()
    };
    let (_, records) = generate_dataset(&spec, &RangingModel::default()).unwrap();
    for m in &records {
        assert!(m.is_symmetric());
        for i in 0..m.n() {
            assert_eq!(m.get(i, i), None);
            for j in 0..m.n() {
                if let Some(z) = m.get(i, j) {
                    assert!(z.is_finite() && z >= 0.0);
                }
            }
        }
    }
    assert!(records.windows(2).all(|w| w[0].epoch <= w[1].epoch));
}

#[test]
fn fixed_seed_replays_bit_identically() {
    let spec = ScenarioSpec {
        n_epochs: 100,
        ..ScenarioSpec::torgau_like()
    };
    let model = RangingModel::default();
    let a = generate_dataset(&spec, &model).unwrap();
    let b = generate_dataset(&spec, &model).unwrap();
    assert_eq!(a, b);
    let other = RangingModel {
        seed: model.seed + 1,
        ..model
    };
    assert_ne!(generate_dataset(&spec, &other).unwrap().1, a.1);
}
