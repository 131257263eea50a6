//! Ranging and positioning metrics plus CSV/JSON report emission.

use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::io::transform_ground_truth;
use crate::types::{DistanceMatrix, EpochResult, FrameAssumptions, NetworkTruth, Position2D};

pub const SCHEMA_VERSION: u32 = 1;

/// One-, two- and three-sigma coverage levels of a normal distribution.
pub const SIGMA_LEVELS: [f64; 3] = [0.6827, 0.9545, 0.9973];

/// Linear-interpolation quantile of an ascending slice, `p` in `[0, 1]`.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 0 {
        return f64::NAN;
    }
    let h = p.clamp(0.0, 1.0) * (n - 1) as f64;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassStats {
    pub count: usize,
    pub share: f64,
    pub mean: f64,
    pub median: f64,
    /// m²
    pub variance: f64,
    pub sigma1: f64,
    pub sigma2: f64,
    pub sigma3: f64,
    pub p25: f64,
    pub p50: f64,
    pub p75: f64,
}

impl ClassStats {
    /// `None` for an empty sample.
    pub fn from_abs(values: &[f64], total: usize) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut s = values.to_vec();
        s.sort_unstable_by(f64::total_cmp);
        let n = s.len() as f64;
        let mean = s.iter().sum::<f64>() / n;
        let variance = s.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let q = |p| quantile_sorted(&s, p);
        Some(Self {
            count: s.len(),
            share: s.len() as f64 / total.max(1) as f64,
            mean,
            median: q(0.5),
            variance,
            sigma1: q(SIGMA_LEVELS[0]),
            sigma2: q(SIGMA_LEVELS[1]),
            sigma3: q(SIGMA_LEVELS[2]),
            p25: q(0.25),
            p50: q(0.5),
            p75: q(0.75),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RangingStats {
    pub los: Option<ClassStats>,
    pub nlos: Option<ClassStats>,
    pub overall: Option<ClassStats>,
    /// Signed residuals `z - d`, for histograms.
    #[serde(skip)]
    pub signed_los: Vec<f64>,
    #[serde(skip)]
    pub signed_nlos: Vec<f64>,
}

fn each_pair(
    records: &[DistanceMatrix],
    truth: &NetworkTruth,
    mut f: impl FnMut(usize, usize, f64, f64),
) -> Result<()> {
    let n = truth.n();
    for m in records {
        if m.n() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: m.n(),
            });
        }
        for i in 0..n {
            for j in i + 1..n {
                if let Some(z) = m.get(i, j) {
                    f(i, j, z, truth.true_distance(i, j)?);
                }
            }
        }
    }
    Ok(())
}

pub fn ranging_stats(
    records: &[DistanceMatrix],
    truth: Option<&NetworkTruth>,
) -> Result<RangingStats> {
    let truth = truth.ok_or(Error::NoTruth)?;
    let (mut signed_los, mut signed_nlos) = (Vec::new(), Vec::new());
    each_pair(records, truth, |i, j, z, d| {
        if truth.visibility.is_los(i, j) {
            signed_los.push(z - d);
        } else {
            signed_nlos.push(z - d);
        }
    })?;
    let abs = |v: &[f64]| v.iter().map(|r| r.abs()).collect::<Vec<_>>();
    let (los, nlos) = (abs(&signed_los), abs(&signed_nlos));
    let total = los.len() + nlos.len();
    let all: Vec<f64> = los.iter().chain(&nlos).copied().collect();
    Ok(RangingStats {
        los: ClassStats::from_abs(&los, total),
        nlos: ClassStats::from_abs(&nlos, total),
        overall: ClassStats::from_abs(&all, total),
        signed_los,
        signed_nlos,
    })
}

/// Symmetric matrix of per-pair residual RMSE; `None` where a pair was never measured.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairwiseRmse {
    pub n: usize,
    pub values: Vec<Option<f64>>,
}

impl PairwiseRmse {
    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        self.values[i * self.n + j]
    }
}

pub fn pairwise_rmse_matrix(
    records: &[DistanceMatrix],
    truth: Option<&NetworkTruth>,
) -> Result<PairwiseRmse> {
    let truth = truth.ok_or(Error::NoTruth)?;
    let n = truth.n();
    let mut sums = vec![(0.0, 0usize); n * n];
    each_pair(records, truth, |i, j, z, d| {
        let s = &mut sums[i * n + j];
        s.0 += (z - d).powi(2);
        s.1 += 1;
    })?;
    let mut values = vec![None; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let (sq, c) = sums[i * n + j];
            if c > 0 {
                let r = (sq / c as f64).sqrt();
                values[i * n + j] = Some(r);
                values[j * n + i] = Some(r);
            }
        }
    }
    Ok(PairwiseRmse { n, values })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QqResult {
    pub reference: Vec<f64>,
    pub measured: Vec<f64>,
    pub r_squared: f64,
    /// Set when either sample has zero spread, making the fit undefined.
    pub degenerate: bool,
}

pub fn r_squared(x: &[f64], y: &[f64]) -> (f64, bool) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return (0.0, true);
    }
    (sxy * sxy / (sxx * syy), false)
}

/// Matched quantiles of reference and measured distances with the R² of their linear fit.
pub fn qq_correlation(
    records: &[DistanceMatrix],
    truth: Option<&NetworkTruth>,
) -> Result<QqResult> {
    let truth = truth.ok_or(Error::NoTruth)?;
    let (mut reference, mut measured) = (Vec::new(), Vec::new());
    each_pair(records, truth, |_, _, z, d| {
        reference.push(d);
        measured.push(z);
    })?;
    if measured.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "{} present measurements, need 2",
            measured.len()
        )));
    }
    reference.sort_unstable_by(f64::total_cmp);
    measured.sort_unstable_by(f64::total_cmp);
    let (r_squared, degenerate) = r_squared(&reference, &measured);
    Ok(QqResult {
        reference,
        measured,
        r_squared,
        degenerate,
    })
}

/// Per-node fraction of epochs flagged available; empty input gives an empty vector.
pub fn availability(results: &[EpochResult]) -> Vec<f64> {
    let Some(first) = results.first() else {
        return Vec::new();
    };
    let n = first.n();
    let mut counts = vec![0usize; n];
    for r in results {
        for (c, &a) in counts.iter_mut().zip(&r.available) {
            *c += a as usize;
        }
    }
    counts
        .iter()
        .map(|&c| c as f64 / results.len() as f64)
        .collect()
}

/// `(value, cumulative fraction)` at each sorted sample.
pub fn ecdf(samples: &[f64]) -> Vec<(f64, f64)> {
    let mut s = samples.to_vec();
    s.sort_unstable_by(f64::total_cmp);
    let n = s.len() as f64;
    let mut out: Vec<(f64, f64)> = Vec::with_capacity(s.len());
    for (k, v) in s.into_iter().enumerate() {
        let f = (k + 1) as f64 / n;
        match out.last_mut() {
            Some(last) if last.0 == v => last.1 = f,
            _ => out.push((v, f)),
        }
    }
    out
}

pub fn rmse(errors: &[f64]) -> Option<f64> {
    if errors.is_empty() {
        return None;
    }
    Some((errors.iter().map(|e| e * e).sum::<f64>() / errors.len() as f64).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NodeAccuracy {
    pub label: String,
    pub rmse: Option<f64>,
    pub availability: f64,
    #[serde(skip)]
    pub errors: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodReport {
    pub method: String,
    pub configuration: String,
    pub nodes: Vec<NodeAccuracy>,
    /// Pooled over every node except the origin, which is fixed by construction.
    pub all_node_rmse: Option<f64>,
    #[serde(skip)]
    pub ecdf: Vec<(f64, f64)>,
}

/// Position errors over available epochs against truth already in the result frame.
pub fn method_report(
    method: &str,
    configuration: &str,
    labels: &[String],
    results: &[EpochResult],
    truth: &[Position2D],
    origin: usize,
) -> Result<MethodReport> {
    let n = truth.len();
    if labels.len() != n {
        return Err(Error::Misaligned(format!(
            "{} labels for {n} truth positions",
            labels.len()
        )));
    }
    if let Some(r) = results
        .iter()
        .find(|r| r.n() != n || r.available.len() != n)
    {
        return Err(Error::Misaligned(format!(
            "epoch t={} has {} nodes, truth has {n}",
            r.epoch,
            r.n()
        )));
    }
    let avail = availability(results);
    let mut nodes = Vec::with_capacity(n);
    let mut pooled = Vec::new();
    for i in 0..n {
        let errors: Vec<f64> = results
            .iter()
            .filter(|r| r.available[i])
            .filter_map(|r| r.estimates[i].map(|p| p.distance(&truth[i])))
            .collect();
        if i != origin {
            pooled.extend_from_slice(&errors);
        }
        nodes.push(NodeAccuracy {
            label: labels[i].clone(),
            rmse: rmse(&errors),
            availability: avail.get(i).copied().unwrap_or(0.0),
            errors,
        });
    }
    Ok(MethodReport {
        method: method.to_string(),
        configuration: configuration.to_string(),
        nodes,
        all_node_rmse: rmse(&pooled),
        ecdf: ecdf(&pooled),
    })
}

/// Results of both methods under one frame configuration. An empty
/// sequence means the method was not run.
#[derive(Debug, Clone)]
pub struct ConfigurationRun {
    pub name: String,
    pub frame: FrameAssumptions,
    pub cf: Vec<EpochResult>,
    pub pgp: Vec<EpochResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NodeDelta {
    pub label: String,
    pub cf: Option<f64>,
    pub pgp: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PositioningReport {
    pub methods: Vec<MethodReport>,
    /// Per node: max minus min RMSE across configurations; `None` if unavailable in any.
    pub deltas: Vec<NodeDelta>,
    pub cf_spread: Option<f64>,
    pub pgp_spread: Option<f64>,
    pub pgp_spread_smaller: bool,
}

fn spread_of(values: &[Option<f64>]) -> Option<f64> {
    let v: Option<Vec<f64>> = values.iter().copied().collect();
    let v = v?;
    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    (!v.is_empty()).then_some(hi - lo)
}

fn max_opt(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    values.flatten().fold(None, |acc: Option<f64>, v| {
        Some(acc.map_or(v, |a| a.max(v)))
    })
}

/// Node-wise accuracy of both methods per configuration and the
/// cross-configuration RMSE deltas. `raw_truth` is in surveyed coordinates.
pub fn positioning_report(
    labels: &[String],
    raw_truth: &[Position2D],
    runs: &[ConfigurationRun],
) -> Result<PositioningReport> {
    let n = raw_truth.len();
    let mut methods = Vec::new();
    for run in runs {
        if !run.cf.is_empty() && !run.pgp.is_empty() && run.cf.len() != run.pgp.len() {
            return Err(Error::Misaligned(format!(
                "configuration {}: {} CF epochs vs {} PGP epochs",
                run.name,
                run.cf.len(),
                run.pgp.len()
            )));
        }
        let truth = transform_ground_truth(raw_truth, &run.frame)?;
        for (method, results) in [("cf", &run.cf), ("pgp", &run.pgp)] {
            if !results.is_empty() {
                methods.push(method_report(
                    method,
                    &run.name,
                    labels,
                    results,
                    &truth,
                    run.frame.origin,
                )?);
            }
        }
    }
    let delta = |method: &str, i: usize| -> Option<f64> {
        let column: Vec<Option<f64>> = methods
            .iter()
            .filter(|m| m.method == method)
            .map(|m| m.nodes[i].rmse)
            .collect();
        if column.len() > 1 {
            spread_of(&column)
        } else {
            None
        }
    };
    let deltas: Vec<NodeDelta> = (0..n)
        .map(|i| NodeDelta {
            label: labels[i].clone(),
            cf: delta("cf", i),
            pgp: delta("pgp", i),
        })
        .collect();
    let cf_spread = max_opt(deltas.iter().map(|d| d.cf));
    let pgp_spread = max_opt(deltas.iter().map(|d| d.pgp));
    let pgp_spread_smaller = matches!((pgp_spread, cf_spread), (Some(p), Some(c)) if p < c);
    Ok(PositioningReport {
        methods,
        deltas,
        cf_spread,
        pgp_spread,
        pgp_spread_smaller,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub schema_version: u32,
    pub labels: Vec<String>,
    pub ranging: Option<RangingStats>,
    pub qq_r_squared: Option<f64>,
    pub qq_degenerate: Option<bool>,
    pub positioning: Option<PositioningReport>,
    pub availability: Vec<AvailabilityRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AvailabilityRow {
    pub method: String,
    pub configuration: String,
    pub values: Vec<f64>,
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x:.6}"))
}

fn write_csv(
    path: &Path,
    header: &[&str],
    rows: impl IntoIterator<Item = Vec<String>>,
) -> Result<()> {
    let mut w =
        csv::Writer::from_path(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let io = |e: csv::Error| Error::Io(format!("{}: {e}", path.display()));
    w.write_record(header).map_err(io)?;
    for r in rows {
        w.write_record(&r).map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_ranging_csv(path: &Path, stats: &RangingStats) -> Result<()> {
    let rows = [
        ("los", &stats.los),
        ("nlos", &stats.nlos),
        ("overall", &stats.overall),
    ]
    .into_iter()
    .map(|(c, s)| {
        let mut r = vec![c.to_string()];
        match s {
            Some(s) => {
                r.push(s.count.to_string());
                r.extend(
                    [
                        s.share, s.mean, s.median, s.variance, s.sigma1, s.sigma2, s.sigma3, s.p25,
                        s.p50, s.p75,
                    ]
                    .iter()
                    .map(|v| format!("{v:.6}")),
                );
            }
            None => r.extend(std::iter::repeat_n(String::new(), 11)),
        }
        r
    });
    write_csv(
        path,
        &[
            "class",
            "count",
            "share",
            "mean_m",
            "median_m",
            "variance_m2",
            "q68_m",
            "q95_m",
            "q99_7_m",
            "p25_m",
            "p50_m",
            "p75_m",
        ],
        rows,
    )
}

pub fn write_residuals_csv(path: &Path, stats: &RangingStats) -> Result<()> {
    let rows = stats
        .signed_los
        .iter()
        .map(|r| vec!["los".to_string(), format!("{r:.6}")])
        .chain(
            stats
                .signed_nlos
                .iter()
                .map(|r| vec!["nlos".to_string(), format!("{r:.6}")]),
        );
    write_csv(path, &["class", "signed_residual_m"], rows)
}

pub fn write_pairwise_csv(path: &Path, labels: &[String], m: &PairwiseRmse) -> Result<()> {
    let mut header = vec!["node"];
    header.extend(labels.iter().map(String::as_str));
    let rows = (0..m.n).map(|i| {
        let mut r = vec![labels[i].clone()];
        r.extend((0..m.n).map(|j| opt(m.get(i, j))));
        r
    });
    write_csv(path, &header, rows)
}

pub fn write_qq_csv(path: &Path, qq: &QqResult) -> Result<()> {
    let rows = qq
        .reference
        .iter()
        .zip(&qq.measured)
        .map(|(a, b)| vec![format!("{a:.6}"), format!("{b:.6}")]);
    write_csv(path, &["reference_m", "measured_m"], rows)
}

pub fn write_availability_csv(
    path: &Path,
    labels: &[String],
    rows: &[AvailabilityRow],
) -> Result<()> {
    let body = rows.iter().flat_map(|row| {
        labels.iter().zip(&row.values).map(move |(l, v)| {
            vec![
                row.method.clone(),
                row.configuration.clone(),
                l.clone(),
                format!("{v:.6}"),
            ]
        })
    });
    write_csv(
        path,
        &["method", "configuration", "node", "availability"],
        body,
    )
}

pub fn write_node_rmse_csv(path: &Path, report: &PositioningReport) -> Result<()> {
    let rows = report.methods.iter().flat_map(|m| {
        m.nodes.iter().map(move |n| {
            vec![
                m.method.clone(),
                m.configuration.clone(),
                n.label.clone(),
                opt(n.rmse),
                format!("{:.6}", n.availability),
            ]
        })
    });
    write_csv(
        path,
        &["method", "configuration", "node", "rmse_m", "availability"],
        rows,
    )
}

pub fn write_ecdf_csv(path: &Path, report: &PositioningReport) -> Result<()> {
    let rows = report.methods.iter().flat_map(|m| {
        m.ecdf.iter().map(move |(e, f)| {
            vec![
                m.method.clone(),
                m.configuration.clone(),
                format!("{e:.6}"),
                format!("{f:.6}"),
            ]
        })
    });
    write_csv(
        path,
        &["method", "configuration", "error_m", "fraction"],
        rows,
    )
}

pub fn write_delta_csv(path: &Path, report: &PositioningReport) -> Result<()> {
    let rows = report
        .deltas
        .iter()
        .map(|d| vec![d.label.clone(), opt(d.cf), opt(d.pgp)]);
    write_csv(path, &["node", "cf_delta_m", "pgp_delta_m"], rows)
}

pub fn write_summary_json(path: &Path, summary: &Summary) -> Result<()> {
    let text = serde_json::to_string_pretty(summary).map_err(|e| Error::Io(e.to_string()))?;
    std::fs::write(path, text + "\n").map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}
