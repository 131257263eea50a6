//! Dataset text format and ground-truth frame transformation.
//!
//! ```text
//! # nodes: 4503 8B05 4197
//! # visibility
//! 1 1 0
//! 1 1 1
//! 0 1 1
//! # truth
//! 4.0000 4.0000
//! 22.0000 3.0000
//! 40.0000 5.0000
//! t=0.0000
//! - 18.0278 36.0139
//! 18.0278 - 18.1108
//! 36.0139 18.1108 -
//! ```
//!
//! `-` (or `nan`) marks a missing range. The `# visibility` and `# truth`
//! sections are optional and may appear anywhere before or between epochs.
//! Other lines starting with `#` are comments.

use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

use crate::types::{
    node_ids, symmetrize, DistanceMatrix, EpochResult, FrameAssumptions, NetworkTruth, Position2D,
    VisibilityMatrix,
};

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetFile {
    pub labels: Vec<String>,
    pub records: Vec<DistanceMatrix>,
    pub visibility: Option<VisibilityMatrix>,
    pub ground_truth: Option<Vec<Position2D>>,
}

impl DatasetFile {
    pub fn n(&self) -> usize {
        self.labels.len()
    }

    /// Ground truth with visibility; missing visibility is taken as all-LOS.
    pub fn truth(&self) -> Option<NetworkTruth> {
        let positions = self.ground_truth.clone()?;
        let vis = self
            .visibility
            .clone()
            .unwrap_or_else(|| VisibilityMatrix::all_los(positions.len()));
        NetworkTruth::new(positions, vis).ok()
    }

    pub fn frame(&self, labels: [&str; 3]) -> Result<FrameAssumptions> {
        FrameAssumptions::from_labels(&self.labels, labels)
    }
}

#[derive(PartialEq)]
enum Section {
    None,
    Visibility,
    Truth,
    Epoch,
}

fn perr(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        line,
        msg: msg.into(),
    }
}

pub fn parse_dataset<R: BufRead>(reader: R) -> Result<DatasetFile> {
    let mut labels: Option<Vec<String>> = None;
    let mut records: Vec<DistanceMatrix> = Vec::new();
    let mut vis_rows: Vec<Vec<bool>> = Vec::new();
    let mut truth_rows: Vec<Position2D> = Vec::new();
    let mut saw_vis = false;
    let mut saw_truth = false;
    let mut section = Section::None;
    let mut section_start = 0;
    let mut rows: Vec<Vec<Option<f64>>> = Vec::new();
    let mut epoch = 0.0;
    let mut asymmetric = 0usize;

    let n_of = |labels: &Option<Vec<String>>, line: usize| -> Result<usize> {
        labels
            .as_ref()
            .map(Vec::len)
            .ok_or_else(|| perr(line, "data before '# nodes:' header"))
    };

    let mut last_line = 0;
    for (k, line) in reader.lines().enumerate() {
        let lineno = k + 1;
        last_line = lineno;
        let line = line?;
        let text = line.trim();
        if text.is_empty() {
            continue;
        }
        let pending = match section {
            Section::Visibility => n_of(&labels, lineno)? - vis_rows.len(),
            Section::Truth => n_of(&labels, lineno)? - truth_rows.len(),
            Section::Epoch => n_of(&labels, lineno)? - rows.len(),
            Section::None => 0,
        };
        if pending > 0 && (text.starts_with('#') || text.starts_with("t=")) {
            return Err(perr(
                lineno,
                format!("section starting at line {section_start} is truncated"),
            ));
        }
        if let Some(rest) = text.strip_prefix('#') {
            let rest = rest.trim();
            if let Some(names) = rest.strip_prefix("nodes:") {
                if labels.is_some() {
                    return Err(perr(lineno, "duplicate '# nodes:' header"));
                }
                let l: Vec<String> = names.split_whitespace().map(str::to_string).collect();
                node_ids(&l).map_err(|e| perr(lineno, e.to_string()))?;
                labels = Some(l);
            } else if rest == "visibility" {
                n_of(&labels, lineno)?;
                saw_vis = true;
                vis_rows.clear();
                section = Section::Visibility;
                section_start = lineno;
            } else if rest == "truth" {
                n_of(&labels, lineno)?;
                saw_truth = true;
                truth_rows.clear();
                section = Section::Truth;
                section_start = lineno;
            }
            continue;
        }
        if let Some(ts) = text.strip_prefix("t=") {
            n_of(&labels, lineno)?;
            epoch = ts
                .trim()
                .parse::<f64>()
                .map_err(|_| perr(lineno, format!("bad timestamp {ts:?}")))?;
            if !epoch.is_finite() {
                return Err(perr(lineno, "non-finite timestamp"));
            }
            rows.clear();
            section = Section::Epoch;
            section_start = lineno;
            continue;
        }
        let n = n_of(&labels, lineno)?;
        let fields: Vec<&str> = text.split_whitespace().collect();
        match section {
            Section::None => return Err(perr(lineno, "data row outside any section")),
            Section::Visibility if pending > 0 => {
                if fields.len() != n {
                    return Err(perr(
                        lineno,
                        format!("expected {n} visibility flags, found {}", fields.len()),
                    ));
                }
                let row = fields
                    .iter()
                    .map(|f| match *f {
                        "1" => Ok(true),
                        "0" => Ok(false),
                        other => Err(perr(lineno, format!("bad visibility flag {other:?}"))),
                    })
                    .collect::<Result<Vec<_>>>()?;
                vis_rows.push(row);
            }
            Section::Truth if pending > 0 => {
                if fields.len() != 2 {
                    return Err(perr(
                        lineno,
                        format!("expected 'x y', found {} fields", fields.len()),
                    ));
                }
                let x = fields[0]
                    .parse::<f64>()
                    .map_err(|_| perr(lineno, format!("bad x {:?}", fields[0])))?;
                let y = fields[1]
                    .parse::<f64>()
                    .map_err(|_| perr(lineno, format!("bad y {:?}", fields[1])))?;
                truth_rows
                    .push(Position2D::checked(x, y).map_err(|e| perr(lineno, e.to_string()))?);
            }
            Section::Epoch if pending > 0 => {
                if fields.len() != n {
                    return Err(perr(
                        lineno,
                        format!("expected {n} ranges, found {}", fields.len()),
                    ));
                }
                let row = fields
                    .iter()
                    .map(|f| match *f {
                        "-" | "nan" | "NaN" => Ok(None),
                        v => match v.parse::<f64>() {
                            Ok(x) if x.is_finite() && x >= 0.0 => Ok(Some(x)),
                            _ => Err(perr(lineno, format!("bad range {v:?}"))),
                        },
                    })
                    .collect::<Result<Vec<_>>>()?;
                rows.push(row);
                if rows.len() == n {
                    let raw = DistanceMatrix::from_options(epoch, &rows)
                        .map_err(|e| perr(lineno, e.to_string()))?;
                    if !raw.is_symmetric() {
                        asymmetric += 1;
                    }
                    records.push(symmetrize(&raw));
                }
            }
            _ => {
                return Err(perr(
                    lineno,
                    format!("unexpected row: section holds only {n} rows"),
                ))
            }
        }
    }
    let labels = labels.ok_or_else(|| perr(last_line.max(1), "missing '# nodes:' header"))?;
    let n = labels.len();
    let complete = match section {
        Section::Visibility => vis_rows.len() == n,
        Section::Truth => truth_rows.len() == n,
        Section::Epoch => rows.len() == n,
        Section::None => true,
    };
    if !complete {
        return Err(perr(
            last_line,
            format!("section starting at line {section_start} is truncated"),
        ));
    }
    if asymmetric > 0 {
        log::info!("symmetrized {asymmetric} epoch(s) with asymmetric readings");
    }
    if records.windows(2).any(|w| w[1].epoch < w[0].epoch) {
        log::warn!("timestamps are not monotone; records reordered");
        records.sort_by(|a, b| a.epoch.total_cmp(&b.epoch));
    }
    let visibility = if saw_vis {
        Some(VisibilityMatrix::from_rows(&vis_rows)?)
    } else {
        None
    };
    Ok(DatasetFile {
        labels,
        records,
        visibility,
        ground_truth: saw_truth.then_some(truth_rows),
    })
}

pub fn load_dataset(path: &Path) -> Result<DatasetFile> {
    let file =
        std::fs::File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_dataset(BufReader::new(file))
}

/// Serializes with 4-decimal ranges, timestamps and coordinates.
pub fn write_dataset<W: Write>(data: &DatasetFile, mut out: W) -> Result<()> {
    let n = data.n();
    if let Some(m) = data.records.iter().find(|m| m.n() != n) {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: m.n(),
        });
    }
    let mut s = String::new();
    writeln!(s, "# nodes: {}", data.labels.join(" ")).ok();
    if let Some(v) = &data.visibility {
        s.push_str("# visibility\n");
        for i in 0..n {
            let row: Vec<&str> = (0..n)
                .map(|j| if v.is_los(i, j) { "1" } else { "0" })
                .collect();
            writeln!(s, "{}", row.join(" ")).ok();
        }
    }
    if let Some(t) = &data.ground_truth {
        s.push_str("# truth\n");
        for p in t {
            writeln!(s, "{:.4} {:.4}", p.x, p.y).ok();
        }
    }
    out.write_all(s.as_bytes())?;
    for m in &data.records {
        s.clear();
        writeln!(s, "t={:.4}", m.epoch).ok();
        for i in 0..n {
            for j in 0..n {
                if j > 0 {
                    s.push(' ');
                }
                match m.get(i, j) {
                    Some(v) => write!(s, "{v:.4}").ok(),
                    None => write!(s, "-").ok(),
                };
            }
            s.push('\n');
        }
        out.write_all(s.as_bytes())?;
    }
    out.flush()?;
    Ok(())
}

pub fn save_dataset(data: &DatasetFile, path: &Path) -> Result<()> {
    let file =
        std::fs::File::create(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    write_dataset(data, std::io::BufWriter::new(file))
}

/// Rigid transform of surveyed coordinates into the calibration frame:
/// origin node to `(0, 0)`, axis node onto the positive x-axis, half-plane
/// node to `y >= 0` (reflecting if necessary).
pub fn transform_ground_truth(
    raw: &[Position2D],
    frame: &FrameAssumptions,
) -> Result<Vec<Position2D>> {
    frame.check(raw.len())?;
    let o = raw[frame.origin];
    let a = raw[frame.axis];
    let d = o.distance(&a);
    if !(d > 0.0) {
        return Err(Error::DegenerateFrame(
            "origin and axis nodes coincide".into(),
        ));
    }
    let (c, s) = ((a.x - o.x) / d, (a.y - o.y) / d);
    // rotation by minus the axis angle
    let rot = |p: &Position2D| {
        let (dx, dy) = (p.x - o.x, p.y - o.y);
        Position2D::new(c * dx + s * dy, -s * dx + c * dy)
    };
    let mut out: Vec<Position2D> = raw.iter().map(rot).collect();
    if out[frame.halfplane].y < 0.0 {
        out.iter_mut().for_each(|p| p.y = -p.y);
    }
    // pin the frame nodes exactly
    out[frame.origin] = Position2D::ORIGIN;
    out[frame.axis] = Position2D::new(d, 0.0);
    Ok(out)
}

#[derive(Debug, Serialize, Deserialize)]
struct ResultRow {
    epoch_index: usize,
    t: f64,
    node: String,
    x: Option<f64>,
    y: Option<f64>,
    available: u8,
}

/// Per-epoch estimates as CSV, one row per (epoch, node); empty `x`/`y` when no estimate.
pub fn write_results_csv(path: &Path, labels: &[String], results: &[EpochResult]) -> Result<()> {
    let io = |e: csv::Error| Error::Io(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    for (k, r) in results.iter().enumerate() {
        if r.n() != labels.len() {
            return Err(Error::DimensionMismatch {
                expected: labels.len(),
                found: r.n(),
            });
        }
        for (i, label) in labels.iter().enumerate() {
            let p = r.estimates[i];
            w.serialize(ResultRow {
                epoch_index: k,
                t: r.epoch,
                node: label.clone(),
                x: p.map(|p| p.x),
                y: p.map(|p| p.y),
                available: r.available[i] as u8,
            })
            .map_err(io)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_results_csv(path: &Path, labels: &[String]) -> Result<Vec<EpochResult>> {
    let io = |e: csv::Error| Error::Io(format!("{}: {e}", path.display()));
    let mut r = csv::Reader::from_path(path).map_err(io)?;
    let n = labels.len();
    let mut out: Vec<EpochResult> = Vec::new();
    for (line, row) in r.deserialize::<ResultRow>().enumerate() {
        let row = row.map_err(|e| Error::Parse {
            line: line + 2,
            msg: e.to_string(),
        })?;
        let i = labels.iter().position(|l| *l == row.node).ok_or_else(|| {
            Error::Misaligned(format!("{}: unknown node {:?}", path.display(), row.node))
        })?;
        while out.len() <= row.epoch_index {
            out.push(EpochResult::unavailable(row.t, n));
        }
        let e = &mut out[row.epoch_index];
        e.epoch = row.t;
        e.estimates[i] = match (row.x, row.y) {
            (Some(x), Some(y)) => Some(Position2D::new(x, y)),
            _ => None,
        };
        e.available[i] = row.available != 0;
    }
    Ok(out)
}
