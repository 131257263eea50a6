use std::time::Instant;

use meshcal::io::{parse_dataset, transform_ground_truth, write_dataset, DatasetFile};
use meshcal::sim::{generate_dataset, RangingModel, ScenarioSpec};
use meshcal::{DistanceMatrix, FrameAssumptions, Position2D, VisibilityMatrix};
use proptest::prelude::*;

/// Values on the 4-decimal lattice survive printing exactly.
fn quantized(max: i64) -> impl Strategy<Value = f64> {
    (0..max).prop_map(|v| v as f64 / 10_000.0)
}

fn signed_quantized() -> impl Strategy<Value = f64> {
    (-500_000i64..500_000).prop_map(|v| v as f64 / 10_000.0)
}

fn dataset() -> impl Strategy<Value = DatasetFile> {
    (2usize..6, 0usize..5).prop_flat_map(|(n, epochs)| {
        let pairs = n * (n - 1) / 2;
        (
            proptest::collection::vec(
                proptest::collection::vec(proptest::option::of(quantized(800_000)), pairs),
                epochs,
            ),
            proptest::collection::vec(quantized(10_000), epochs),
            proptest::option::of(proptest::collection::vec(any::<bool>(), pairs)),
            proptest::option::of(proptest::collection::vec(
                (signed_quantized(), signed_quantized()),
                n,
            )),
        )
            .prop_map(move |(ranges, steps, vis, truth)| {
                let mut t = 0.0;
                let records = ranges
                    .iter()
                    .zip(&steps)
                    .map(|(vals, dt)| {
                        t = ((t + dt) * 10_000.0f64).round() / 10_000.0;
                        let mut m = DistanceMatrix::empty(t, n);
                        let mut k = 0;
                        for i in 0..n {
                            for j in (i + 1)..n {
                                m.set(i, j, vals[k]).unwrap();
                                k += 1;
                            }
                        }
                        m
                    })
                    .collect();
                let visibility = vis.map(|flags| {
                    let mut v = VisibilityMatrix::all_los(n);
                    let mut k = 0;
                    for i in 0..n {
                        for j in (i + 1)..n {
                            v.set(i, j, flags[k]);
                            k += 1;
                        }
                    }
                    v
                });
                DatasetFile {
                    labels: (0..n).map(|i| format!("L{i}")).collect(),
                    records,
                    visibility,
                    ground_truth: truth
                        .map(|t| t.into_iter().map(|(x, y)| Position2D::new(x, y)).collect()),
                }
            })
    })
}

fn write_to_string(d: &DatasetFile) -> String {
    let mut buf = Vec::new();
    write_dataset(d, &mut buf).unwrap();
    String::from_utf8(buf).unwrap()
}

fn frame_points() -> impl Strategy<Value = Vec<Position2D>> {
    proptest::collection::vec((-40.0..40.0f64, -40.0..40.0f64), 3..8)
        .prop_map(|v| v.into_iter().map(|(x, y)| Position2D::new(x, y)).collect())
        .prop_filter("distinct frame nodes", |p: &Vec<Position2D>| {
            p[0].distance(&p[1]) > 1e-3
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn parse_inverts_write(d in dataset()) {
        let text = write_to_string(&d);
        let back = parse_dataset(text.as_bytes()).unwrap();
        prop_assert_eq!(&back, &d);
        prop_assert_eq!(write_to_string(&back), text);
    }

    #[test]
    fn transform_is_an_isometry(p in frame_points()) {
        let frame = FrameAssumptions::new(0, 1, 2).unwrap();
        let t = transform_ground_truth(&p, &frame).unwrap();
        for i in 0..p.len() {
            for j in 0..p.len() {
                prop_assert!((p[i].distance(&p[j]) - t[i].distance(&t[j])).abs() <= 1e-9);
            }
        }
        prop_assert_eq!(t[0], Position2D::ORIGIN);
        prop_assert!(t[1].y == 0.0 && t[1].x > 0.0);
        prop_assert!(t[2].y >= 0.0);
        let again = transform_ground_truth(&t, &frame).unwrap();
        for (a, b) in again.iter().zip(&t) {
            prop_assert!(a.distance(b) <= 1e-9);
        }
    }
}

#[test]
fn simulator_output_round_trips_at_printed_precision() {
    let spec = ScenarioSpec {
        n_epochs: 50,
        ..ScenarioSpec::torgau_like()
    };
    let (truth, records) = generate_dataset(&spec, &RangingModel::default()).unwrap();
    let d = DatasetFile {
        labels: spec.node_labels(),
        records: records.clone(),
        visibility: Some(truth.visibility.clone()),
        ground_truth: Some(truth.positions.clone()),
    };
    let back = parse_dataset(write_to_string(&d).as_bytes()).unwrap();
    assert_eq!(back.records.len(), records.len());
    for (a, b) in back.records.iter().zip(&records) {
        for i in 0..a.n() {
            for j in 0..a.n() {
                match (a.get(i, j), b.get(i, j)) {
                    (Some(x), Some(y)) => assert!((x - y).abs() <= 5e-5 + 1e-12),
                    (x, y) => assert_eq!(x.is_some(), y.is_some()),
                }
            }
        }
    }
    assert_eq!(back.visibility, d.visibility);
}

#[test]
fn full_size_dataset_parses_quickly() {
    let spec = ScenarioSpec {
        n_epochs: 2000,
        ..ScenarioSpec::torgau_like()
    };
    let (truth, records) = generate_dataset(&spec, &RangingModel::default()).unwrap();
    let text = write_to_string(&DatasetFile {
        labels: spec.node_labels(),
        records,
        visibility: Some(truth.visibility),
        ground_truth: Some(truth.positions),
    });
    let start = Instant::now();
    let d = parse_dataset(text.as_bytes()).unwrap();
    let elapsed = start.elapsed();
    assert_eq!(d.records.len(), 2000);
    assert_eq!(d.n(), 12);
    assert!(elapsed.as_secs_f64() < 5.0, "parse took {elapsed:?}");
}
