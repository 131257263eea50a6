use std::fs;
use std::path::{Path, PathBuf};

use anyhow::anyhow;
use log::{info, warn};
use serde::{Deserialize, Serialize};

use meshcal::cf::{run_cf, CfConfig};
use meshcal::eval::{self, AvailabilityRow, ConfigurationRun, Summary, SCHEMA_VERSION};
use meshcal::grid::{infer_grid, run_pgp_with, GridSpec, PgpParams, UncertaintyMode};
use meshcal::io::{load_dataset, read_results_csv, save_dataset, write_results_csv, DatasetFile};
use meshcal::sim::{generate_dataset, Layout, RangingModel, ScenarioSpec};
use meshcal::{config, EpochResult, FrameAssumptions};

use crate::failure::{Classify, Failure, Outcome};
use crate::{CalibrateArgs, DemoArgs, Format, Method, Mode, OutDir, SimulateArgs};

const DATASET_FILE: &str = "dataset.txt";
const MANIFEST_FILE: &str = "manifest.json";
const CALIBRATION_FILE: &str = "calibration.json";
const CF_FILE: &str = "cf_estimates.csv";
const PGP_FILE: &str = "pgp_estimates.csv";

#[derive(Debug, Serialize)]
struct SimulateManifest<'a> {
    schema_version: u32,
    tool_version: &'a str,
    scenario: &'a ScenarioSpec,
    model: &'a RangingModel,
    dataset: &'a str,
}

/// Written by `calibrate` next to the estimate files; read back by `evaluate`.
#[derive(Debug, Serialize, Deserialize)]
struct CalibrationManifest {
    schema_version: u32,
    dataset: PathBuf,
    labels: Vec<String>,
    frame: Vec<String>,
    methods: Vec<String>,
    cf_params: CfConfig,
    pgp_params: PgpParams,
    grid: Option<GridSpec>,
    pgp_fallbacks: usize,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Outcome {
    let text = serde_json::to_string_pretty(value).internal(|| "serializing JSON".into())?;
    fs::write(path, text + "\n").internal(|| format!("writing {}", path.display()))
}

fn create_dir(dir: &Path) -> Outcome {
    fs::create_dir_all(dir).internal(|| format!("creating output directory {}", dir.display()))
}

fn load_scenario(name: &str) -> Outcome<ScenarioSpec> {
    let path = Path::new(name);
    if path.exists() {
        return config::load(path).usage(|| format!("scenario file {}", path.display()));
    }
    ScenarioSpec::builtin(name).ok_or_else(|| {
        Failure::Usage(anyhow!(
            "scenario {name}: no such file, and not a built-in scenario (built-in: torgau-like)"
        ))
    })
}

fn resize(spec: &mut ScenarioSpec, nodes: usize) -> Outcome {
    if nodes == spec.n_nodes {
        return Ok(());
    }
    if let Layout::Explicit { positions } = &spec.layout {
        return Err(Failure::Usage(anyhow!(
            "--nodes {nodes}: scenario {} fixes {} explicit positions",
            spec.name,
            positions.len()
        )));
    }
    spec.n_nodes = nodes;
    spec.labels.clear();
    spec.visibility = None;
    spec.frames.clear();
    Ok(())
}

pub fn simulate(a: &SimulateArgs) -> Outcome {
    let mut spec = load_scenario(&a.scenario)?;
    let mut model = match &a.model {
        Some(p) => config::load(p).usage(|| format!("model file {}", p.display()))?,
        None => RangingModel::default(),
    };
    if let Some(seed) = a.seed {
        model.seed = seed;
    }
    if let Some(e) = a.epochs {
        spec.n_epochs = e;
    }
    if let Some(n) = a.nodes {
        resize(&mut spec, n)?;
    }
    spec.validate().usage(|| "invalid scenario".into())?;
    model.validate().usage(|| "invalid ranging model".into())?;
    let (truth, records) =
        generate_dataset(&spec, &model).usage(|| format!("scenario {}", spec.name))?;
    let out = &a.out.out;
    create_dir(out)?;
    let data = DatasetFile {
        labels: spec.node_labels(),
        records,
        visibility: Some(truth.visibility.clone()),
        ground_truth: Some(truth.positions.clone()),
    };
    let path = out.join(DATASET_FILE);
    save_dataset(&data, &path).internal(|| format!("writing {}", path.display()))?;
    write_json(
        &out.join(MANIFEST_FILE),
        &SimulateManifest {
            schema_version: SCHEMA_VERSION,
            tool_version: env!("CARGO_PKG_VERSION"),
            scenario: &spec,
            model: &model,
            dataset: DATASET_FILE,
        },
    )?;
    println!(
        "wrote {} ({} epochs, {} nodes, NLOS share {:.1}%)",
        path.display(),
        data.records.len(),
        data.n(),
        100.0 * truth.visibility.nlos_share()
    );
    Ok(())
}

fn load_data(path: &Path) -> Outcome<DatasetFile> {
    load_dataset(path).data(|| format!("dataset {}", path.display()))
}

fn frame_of(labels: &[String], frame: &[String]) -> Outcome<FrameAssumptions> {
    let [a, b, c] = frame else {
        return Err(Failure::Usage(anyhow!(
            "--frame needs exactly three labels (origin,axis,half-plane), got {}",
            frame.len()
        )));
    };
    FrameAssumptions::from_labels(labels, [a.as_str(), b.as_str(), c.as_str()])
        .usage(|| format!("frame {}", frame.join(",")))
}

fn write_belief_csv(path: &Path, belief: &meshcal::grid::GridBelief) -> Outcome {
    let spec = belief.spec();
    let mut text = String::from("x_m,y_m,mass\n");
    for (k, m) in belief.nonzero() {
        let p = spec.point(k);
        text.push_str(&format!("{:.4},{:.4},{m:e}\n", p.x, p.y));
    }
    fs::write(path, text).internal(|| format!("writing {}", path.display()))
}

pub fn calibrate(a: &CalibrateArgs) -> Outcome {
    let data = load_data(&a.dataset)?;
    let frame = frame_of(&data.labels, &a.frame)?;
    let mut params = match &a.params {
        Some(p) => {
            let text = fs::read_to_string(p).usage(|| format!("params file {}", p.display()))?;
            PgpParams::from_config_str(&text).usage(|| format!("params file {}", p.display()))?
        }
        None => PgpParams::default(),
    };
    if let Some(mode) = a.mode {
        params.mode = match mode {
            Mode::Hypotheses => UncertaintyMode::Hypotheses,
            Mode::Parametric => UncertaintyMode::Parametric,
        };
    }
    params
        .validate()
        .usage(|| "invalid PGP parameters".into())?;
    let cf_params: CfConfig = match &a.cf_params {
        Some(p) => config::load(p).usage(|| format!("CF params file {}", p.display()))?,
        None => CfConfig::default(),
    };
    if data.records.is_empty() {
        return Err(Failure::Data(anyhow!(
            "dataset {} has no epochs",
            a.dataset.display()
        )));
    }
    let out = &a.out.out;
    create_dir(out)?;
    let mut manifest = CalibrationManifest {
        schema_version: SCHEMA_VERSION,
        dataset: a.dataset.clone(),
        labels: data.labels.clone(),
        frame: a.frame.clone(),
        methods: Vec::new(),
        cf_params: cf_params.clone(),
        pgp_params: params.clone(),
        grid: None,
        pgp_fallbacks: 0,
    };
    let run_cf_now = matches!(a.method, Method::Cf | Method::Both);
    let run_pgp_now = matches!(a.method, Method::Pgp | Method::Both);
    for (file, run) in [(CF_FILE, run_cf_now), (PGP_FILE, run_pgp_now)] {
        let stale = out.join(file);
        if !run && stale.exists() {
            fs::remove_file(&stale).internal(|| format!("removing {}", stale.display()))?;
        }
    }
    if run_cf_now {
        let results = run_cf(&data.records, &frame, &cf_params);
        let path = out.join(CF_FILE);
        write_results_csv(&path, &data.labels, &results)
            .internal(|| format!("writing {}", path.display()))?;
        report_availability("cf", &data.labels, &results);
        manifest.methods.push("cf".into());
    }
    if run_pgp_now {
        let grid = infer_grid(&data.records, &params).data(|| "inferring the PGP grid".into())?;
        info!("PGP grid {} x {} cells", grid.cols(), grid.rows());
        let run = run_pgp_with(&data.records, &frame, &grid, &params, &a.dump_epochs)
            .data(|| "running PGP".into())?;
        let path = out.join(PGP_FILE);
        write_results_csv(&path, &data.labels, &run.results)
            .internal(|| format!("writing {}", path.display()))?;
        if !run.dumps.is_empty() {
            let dir = out.join("beliefs");
            create_dir(&dir)?;
            for d in &run.dumps {
                let file = dir.join(format!(
                    "belief_e{}_{}.csv",
                    d.epoch_index, data.labels[d.node]
                ));
                write_belief_csv(&file, &d.belief)?;
            }
        }
        report_availability("pgp", &data.labels, &run.results);
        manifest.grid = Some(run.grid);
        manifest.pgp_fallbacks = run.fallbacks;
        manifest.methods.push("pgp".into());
    }
    write_json(&out.join(CALIBRATION_FILE), &manifest)?;
    println!("wrote results to {}", out.display());
    Ok(())
}

fn report_availability(method: &str, labels: &[String], results: &[EpochResult]) {
    let avail = eval::availability(results);
    let worst = labels
        .iter()
        .zip(&avail)
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(l, v)| format!("{l} {:.1}%", 100.0 * v))
        .unwrap_or_default();
    println!("{method}: lowest availability {worst}");
}

fn load_run(dir: &Path, data: &DatasetFile) -> Outcome<ConfigurationRun> {
    let manifest_path = dir.join(CALIBRATION_FILE);
    let text = fs::read_to_string(&manifest_path).data(|| {
        format!(
            "no results in {} (expected {CALIBRATION_FILE}; run `meshcal calibrate` first)",
            dir.display()
        )
    })?;
    let manifest: CalibrationManifest =
        serde_json::from_str(&text).data(|| format!("parsing {}", manifest_path.display()))?;
    if manifest.labels != data.labels {
        return Err(Failure::Data(anyhow!(
            "{} was computed for nodes [{}], dataset has [{}]",
            dir.display(),
            manifest.labels.join(" "),
            data.labels.join(" ")
        )));
    }
    let frame = frame_of(&data.labels, &manifest.frame)?;
    let read = |file: &str| -> Outcome<Vec<EpochResult>> {
        let path = dir.join(file);
        if !path.exists() {
            return Ok(Vec::new());
        }
        let results =
            read_results_csv(&path, &data.labels).data(|| format!("reading {}", path.display()))?;
        if results.len() != data.records.len() {
            return Err(Failure::Data(anyhow!(
                "{} has {} epochs, dataset has {}",
                path.display(),
                results.len(),
                data.records.len()
            )));
        }
        Ok(results)
    };
    let cf = read(CF_FILE)?;
    let pgp = read(PGP_FILE)?;
    if cf.is_empty() && pgp.is_empty() {
        return Err(Failure::Data(anyhow!(
            "no estimate files ({CF_FILE}, {PGP_FILE}) in {}",
            dir.display()
        )));
    }
    Ok(ConfigurationRun {
        name: manifest.frame.join(","),
        frame,
        cf,
        pgp,
    })
}

pub fn evaluate(dataset: &Path, results: &[PathBuf], format: Format, out: &Path) -> Outcome {
    let data = load_data(dataset)?;
    let runs: Vec<ConfigurationRun> = results
        .iter()
        .map(|d| load_run(d, &data))
        .collect::<Outcome<_>>()?;
    let truth = data.truth();
    if truth.is_none() {
        warn!(
            "{} has no truth section; ranging and positioning metrics skipped",
            dataset.display()
        );
    }
    let availability: Vec<AvailabilityRow> = runs
        .iter()
        .flat_map(|r| {
            [("cf", &r.cf), ("pgp", &r.pgp)]
                .into_iter()
                .filter(|(_, res)| !res.is_empty())
                .map(|(m, res)| AvailabilityRow {
                    method: m.into(),
                    configuration: r.name.clone(),
                    values: eval::availability(res),
                })
        })
        .collect();
    create_dir(out)?;
    let csv = format == Format::Csv;
    let mut summary = Summary {
        schema_version: SCHEMA_VERSION,
        labels: data.labels.clone(),
        ranging: None,
        qq_r_squared: None,
        qq_degenerate: None,
        positioning: None,
        availability,
    };
    if csv {
        eval::write_availability_csv(
            &out.join("availability.csv"),
            &data.labels,
            &summary.availability,
        )
        .internal(|| "writing availability.csv".into())?;
    }
    if let Some(truth) = &truth {
        let t = Some(truth);
        let stats = eval::ranging_stats(&data.records, t).data(|| "ranging statistics".into())?;
        let pairwise =
            eval::pairwise_rmse_matrix(&data.records, t).data(|| "pairwise RMSE".into())?;
        match eval::qq_correlation(&data.records, t) {
            Ok(qq) => {
                summary.qq_r_squared = Some(qq.r_squared);
                summary.qq_degenerate = Some(qq.degenerate);
                if csv {
                    eval::write_qq_csv(&out.join("qq.csv"), &qq)
                        .internal(|| "writing qq.csv".into())?;
                }
            }
            Err(e) => warn!("Q-Q correlation skipped: {e}"),
        }
        let report = eval::positioning_report(&data.labels, &truth.positions, &runs)
            .data(|| "positioning report".into())?;
        if csv {
            eval::write_ranging_csv(&out.join("ranging_stats.csv"), &stats)
                .internal(|| "writing ranging_stats.csv".into())?;
            eval::write_residuals_csv(&out.join("residuals.csv"), &stats)
                .internal(|| "writing residuals.csv".into())?;
            eval::write_pairwise_csv(&out.join("pairwise_rmse.csv"), &data.labels, &pairwise)
                .internal(|| "writing pairwise_rmse.csv".into())?;
            eval::write_node_rmse_csv(&out.join("node_rmse.csv"), &report)
                .internal(|| "writing node_rmse.csv".into())?;
            eval::write_ecdf_csv(&out.join("ecdf.csv"), &report)
                .internal(|| "writing ecdf.csv".into())?;
            if runs.len() > 1 {
                eval::write_delta_csv(&out.join("config_delta.csv"), &report)
                    .internal(|| "writing config_delta.csv".into())?;
            }
        }
        for m in &report.methods {
            println!(
                "{:>3} [{}] all-node RMSE {}",
                m.method,
                m.configuration,
                m.all_node_rmse
                    .map_or("n/a".into(), |v| format!("{v:.3} m"))
            );
        }
        if runs.len() > 1 {
            let fmt = |v: Option<f64>| v.map_or("n/a".into(), |v| format!("{v:.2} m"));
            println!(
                "cross-configuration spread: cf {}, pgp {}",
                fmt(report.cf_spread),
                fmt(report.pgp_spread)
            );
        }
        summary.ranging = Some(stats);
        summary.positioning = Some(report);
    }
    let path = out.join("summary.json");
    eval::write_summary_json(&path, &summary).internal(|| format!("writing {}", path.display()))?;
    println!("wrote {}", path.display());
    Ok(())
}

pub fn demo(a: &DemoArgs) -> Outcome {
    let root = &a.out.out;
    let spec = ScenarioSpec::torgau_like();
    simulate(&SimulateArgs {
        scenario: spec.name.clone(),
        model: None,
        seed: Some(a.seed),
        epochs: Some(a.epochs),
        nodes: None,
        out: OutDir { out: root.clone() },
    })?;
    let dataset = root.join(DATASET_FILE);
    let mut dirs = Vec::new();
    for (k, frame) in spec.frames.iter().enumerate() {
        let dir = root.join(format!("config{}", k + 1));
        println!("configuration {}: {}", k + 1, frame.join(","));
        calibrate(&CalibrateArgs {
            dataset: dataset.clone(),
            method: Method::Both,
            frame: frame.to_vec(),
            mode: None,
            params: None,
            cf_params: None,
            dump_epochs: Vec::new(),
            out: OutDir { out: dir.clone() },
        })?;
        dirs.push(dir);
    }
    evaluate(&dataset, &dirs, Format::Csv, &root.join("report"))
}
