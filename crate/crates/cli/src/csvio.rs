//! The on-disk dataset layout and the per-stage artifact files.
//!
//! A dataset is a directory of four CSV files (headers mandatory, UTF-8,
//! comma separated, dot decimals):
//!
//! - `anchors.csv`: `anchor_id,x_m,y_m,z_m`
//! - `ground_truth.csv`: `time_idx,x_m,y_m,z_m,zone_tag`
//! - `cir.csv`: `time_idx,anchor_id,fp_idx,pp_idx,t_s_ns,tap_0,...,tap_{L-1}`
//! - `timestamps.csv`: `time_idx,anchor_id,rx_time_ns` plus an optional
//!   trailing `nlos` column holding 0/1 labels
//!
//! Times live in nanoseconds on disk and in seconds in memory.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use decloc_core::data::{
    AnchorNode, CirRecord, Dataset, GroundTruthSample, SourceKey, ZoneTag,
};
use decloc_core::geom::Vec3;
use decloc_core::score::{ClusterScore, SelectionEntry};
use decloc_core::tdoa::PositionEstimate;

use crate::error::CliError;

const ANCHORS_FILE: &str = "anchors.csv";
const GROUND_TRUTH_FILE: &str = "ground_truth.csv";
const CIR_FILE: &str = "cir.csv";
const TIMESTAMPS_FILE: &str = "timestamps.csv";

const NS_PER_S: f64 = 1e9;

/// One parsed row with its provenance, so every complaint can point at a
/// file and line.
struct Row {
    fields: Vec<String>,
    line: u64,
}

fn read_rows(path: &Path) -> Result<(Vec<String>, Vec<Row>), CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(source) => CliError::Ingest {
                path: path.to_path_buf(),
                source,
            },
            other => CliError::Validation {
                file: path.to_path_buf(),
                line: 1,
                message: format!("{other:?}"),
            },
        })?;
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| csv_error(path, e))?
        .iter()
        .map(str::to_owned)
        .collect();
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        rows.push(Row {
            fields: record.iter().map(str::to_owned).collect(),
            line,
        });
    }
    Ok((header, rows))
}

fn csv_error(path: &Path, e: csv::Error) -> CliError {
    let line = match e.position() {
        Some(p) => p.line(),
        None => 0,
    };
    match e.into_kind() {
        csv::ErrorKind::Io(source) => CliError::Ingest {
            path: path.to_path_buf(),
            source,
        },
        other => CliError::Validation {
            file: path.to_path_buf(),
            line,
            message: format!("{other:?}"),
        },
    }
}

fn validation(path: &Path, line: u64, message: impl Into<String>) -> CliError {
    CliError::Validation {
        file: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn expect_header(path: &Path, header: &[String], expected: &[&str]) -> Result<(), CliError> {
    if header.len() != expected.len() || header.iter().zip(expected).any(|(h, e)| h != e) {
        return Err(validation(
            path,
            1,
            format!("expected header {:?}, got {:?}", expected, header),
        ));
    }
    Ok(())
}

fn expect_width(path: &Path, row: &Row, expected: usize) -> Result<(), CliError> {
    if row.fields.len() != expected {
        return Err(validation(
            path,
            row.line,
            format!("expected {} columns, got {}", expected, row.fields.len()),
        ));
    }
    Ok(())
}

fn parse_u64(path: &Path, row: &Row, idx: usize, name: &str) -> Result<u64, CliError> {
    row.fields[idx]
        .parse::<u64>()
        .map_err(|e| validation(path, row.line, format!("{name}: {e}")))
}

fn parse_u32(path: &Path, row: &Row, idx: usize, name: &str) -> Result<u32, CliError> {
    row.fields[idx]
        .parse::<u32>()
        .map_err(|e| validation(path, row.line, format!("{name}: {e}")))
}

fn parse_f64(path: &Path, row: &Row, idx: usize, name: &str) -> Result<f64, CliError> {
    let v = row.fields[idx]
        .parse::<f64>()
        .map_err(|e| validation(path, row.line, format!("{name}: {e}")))?;
    if !v.is_finite() {
        return Err(validation(
            path,
            row.line,
            format!("{name} must be finite, got {v}"),
        ));
    }
    Ok(v)
}

/// Reads the four-file layout from `dir` and returns a validated dataset.
pub fn load_dataset(dir: &Path) -> Result<Dataset, CliError> {
    let anchors = load_anchors(&dir.join(ANCHORS_FILE))?;
    let ground_truth = load_ground_truth(&dir.join(GROUND_TRUTH_FILE))?;
    let records = load_cirs(&dir.join(CIR_FILE))?;
    let (timestamps, nlos_labels) = load_timestamps(&dir.join(TIMESTAMPS_FILE))?;
    let ds = Dataset {
        anchors,
        records,
        timestamps,
        ground_truth,
        nlos_labels,
    };
    ds.validate().map_err(|e| CliError::Invalid(e.to_string()))?;
    Ok(ds)
}

fn load_anchors(path: &Path) -> Result<Vec<AnchorNode>, CliError> {
    let (header, rows) = read_rows(path)?;
    expect_header(path, &header, &["anchor_id", "x_m", "y_m", "z_m"])?;
    let mut anchors = Vec::with_capacity(rows.len());
    let mut seen = BTreeMap::new();
    for row in &rows {
        expect_width(path, row, 4)?;
        let anchor_id = parse_u32(path, row, 0, "anchor_id")?;
        if let Some(prev) = seen.insert(anchor_id, row.line) {
            return Err(validation(
                path,
                row.line,
                format!("duplicate anchor_id {anchor_id} (first seen on line {prev})"),
            ));
        }
        anchors.push(AnchorNode {
            anchor_id,
            position: Vec3::new(
                parse_f64(path, row, 1, "x_m")?,
                parse_f64(path, row, 2, "y_m")?,
                parse_f64(path, row, 3, "z_m")?,
            ),
        });
    }
    Ok(anchors)
}

fn load_ground_truth(path: &Path) -> Result<Vec<GroundTruthSample>, CliError> {
    let (header, rows) = read_rows(path)?;
    expect_header(path, &header, &["time_idx", "x_m", "y_m", "z_m", "zone_tag"])?;
    let mut samples = Vec::with_capacity(rows.len());
    let mut seen = BTreeMap::new();
    for row in &rows {
        expect_width(path, row, 5)?;
        let time_idx = parse_u64(path, row, 0, "time_idx")?;
        if let Some(prev) = seen.insert(time_idx, row.line) {
            return Err(validation(
                path,
                row.line,
                format!("duplicate time_idx {time_idx} (first seen on line {prev})"),
            ));
        }
        let zone_tag = ZoneTag::parse(&row.fields[4]).ok_or_else(|| {
            validation(
                path,
                row.line,
                format!("unknown zone_tag {:?}", row.fields[4]),
            )
        })?;
        samples.push(GroundTruthSample {
            time_idx,
            position: Vec3::new(
                parse_f64(path, row, 1, "x_m")?,
                parse_f64(path, row, 2, "y_m")?,
                parse_f64(path, row, 3, "z_m")?,
            ),
            zone_tag,
        });
    }
    Ok(samples)
}

fn load_cirs(path: &Path) -> Result<Vec<CirRecord>, CliError> {
    let (header, rows) = read_rows(path)?;
    if header.len() < 6 {
        return Err(validation(
            path,
            1,
            format!("expected at least 6 columns, got {}", header.len()),
        ));
    }
    expect_header(
        path,
        &header[..5],
        &["time_idx", "anchor_id", "fp_idx", "pp_idx", "t_s_ns"],
    )?;
    let taps_len = header.len() - 5;
    for (i, name) in header[5..].iter().enumerate() {
        if name != &format!("tap_{i}") {
            return Err(validation(
                path,
                1,
                format!("expected column tap_{i}, got {name:?}"),
            ));
        }
    }
    let mut records = Vec::with_capacity(rows.len());
    let mut seen = BTreeMap::new();
    for row in &rows {
        expect_width(path, row, 5 + taps_len)?;
        let time_idx = parse_u64(path, row, 0, "time_idx")?;
        let anchor_id = parse_u32(path, row, 1, "anchor_id")?;
        if let Some(prev) = seen.insert((time_idx, anchor_id), row.line) {
            return Err(validation(
                path,
                row.line,
                format!(
                    "duplicate record ({time_idx}, {anchor_id}) (first seen on line {prev})"
                ),
            ));
        }
        let fp_idx = parse_f64(path, row, 2, "fp_idx")?;
        let pp_idx = parse_f64(path, row, 3, "pp_idx")?;
        let t_s_ns = parse_f64(path, row, 4, "t_s_ns")?;
        let mut taps = Vec::with_capacity(taps_len);
        for i in 0..taps_len {
            taps.push(parse_f64(path, row, 5 + i, &format!("tap_{i}"))?);
        }
        records.push(CirRecord {
            time_idx,
            anchor_id,
            taps,
            fp_idx,
            pp_idx,
            t_s: t_s_ns / NS_PER_S,
        });
    }
    Ok(records)
}

type Timestamps = BTreeMap<SourceKey, f64>;
type NlosLabels = Option<BTreeMap<SourceKey, bool>>;

fn load_timestamps(path: &Path) -> Result<(Timestamps, NlosLabels), CliError> {
    let (header, rows) = read_rows(path)?;
    let with_nlos = match header.len() {
        3 => {
            expect_header(path, &header, &["time_idx", "anchor_id", "rx_time_ns"])?;
            false
        }
        _ => {
            expect_header(
                path,
                &header,
                &["time_idx", "anchor_id", "rx_time_ns", "nlos"],
            )?;
            true
        }
    };
    let mut timestamps = BTreeMap::new();
    let mut labels = BTreeMap::new();
    for row in &rows {
        expect_width(path, row, header.len())?;
        let time_idx = parse_u64(path, row, 0, "time_idx")?;
        let anchor_id = parse_u32(path, row, 1, "anchor_id")?;
        let rx_ns = parse_f64(path, row, 2, "rx_time_ns")?;
        let key = SourceKey::new(time_idx, anchor_id);
        if timestamps.insert(key, rx_ns / NS_PER_S).is_some() {
            return Err(validation(
                path,
                row.line,
                format!("duplicate record ({time_idx}, {anchor_id})"),
            ));
        }
        if with_nlos {
            let flag = match row.fields[3].as_str() {
                "0" => false,
                "1" => true,
                other => {
                    return Err(validation(
                        path,
                        row.line,
                        format!("nlos must be 0 or 1, got {other:?}"),
                    ))
                }
            };
            labels.insert(key, flag);
        }
    }
    Ok((timestamps, if with_nlos { Some(labels) } else { None }))
}

/// A file writer that buffers everything and reports failures against the
/// target path.
struct FileOut {
    path: PathBuf,
    buf: Vec<u8>,
}

impl FileOut {
    fn new(path: PathBuf) -> Self {
        Self {
            path,
            buf: Vec::new(),
        }
    }

    fn line(&mut self, fields: &[String]) {
        self.buf.extend_from_slice(fields.join(",").as_bytes());
        self.buf.push(b'\n');
    }

    fn finish(self) -> Result<(), CliError> {
        let io = |source| CliError::Io {
            path: self.path.clone(),
            source,
        };
        let mut f = File::create(&self.path).map_err(io)?;
        f.write_all(&self.buf).map_err(io)?;
        Ok(())
    }
}

pub(crate) fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

/// Writes the four-file layout into `dir` (created if missing) with rows
/// ordered by time index then anchor id.
pub fn save_dataset(ds: &Dataset, dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|source| CliError::Io {
        path: dir.to_path_buf(),
        source,
    })?;

    let mut anchors = FileOut::new(dir.join(ANCHORS_FILE));
    anchors.line(&["anchor_id", "x_m", "y_m", "z_m"].map(String::from));
    let mut sorted_anchors: Vec<&AnchorNode> = ds.anchors.iter().collect();
    sorted_anchors.sort_by_key(|a| a.anchor_id);
    for a in sorted_anchors {
        anchors.line(&[
            a.anchor_id.to_string(),
            fmt_f64(a.position.x),
            fmt_f64(a.position.y),
            fmt_f64(a.position.z),
        ]);
    }
    anchors.finish()?;

    let mut truth = FileOut::new(dir.join(GROUND_TRUTH_FILE));
    truth.line(&["time_idx", "x_m", "y_m", "z_m", "zone_tag"].map(String::from));
    let mut sorted_truth: Vec<&GroundTruthSample> = ds.ground_truth.iter().collect();
    sorted_truth.sort_by_key(|g| g.time_idx);
    for g in sorted_truth {
        truth.line(&[
            g.time_idx.to_string(),
            fmt_f64(g.position.x),
            fmt_f64(g.position.y),
            fmt_f64(g.position.z),
            g.zone_tag.as_str().to_owned(),
        ]);
    }
    truth.finish()?;

    let taps_len = ds.taps_len().unwrap_or(0);
    let mut cir = FileOut::new(dir.join(CIR_FILE));
    let mut header: Vec<String> = ["time_idx", "anchor_id", "fp_idx", "pp_idx", "t_s_ns"]
        .map(String::from)
        .to_vec();
    header.extend((0..taps_len).map(|i| format!("tap_{i}")));
    cir.line(&header);
    let mut order: Vec<usize> = (0..ds.records.len()).collect();
    order.sort_by_key(|&i| ds.records[i].key());
    for i in order {
        let r = &ds.records[i];
        let mut fields = vec![
            r.time_idx.to_string(),
            r.anchor_id.to_string(),
            fmt_f64(r.fp_idx),
            fmt_f64(r.pp_idx),
            fmt_f64(r.t_s * NS_PER_S),
        ];
        fields.extend(r.taps.iter().map(|&t| fmt_f64(t)));
        cir.line(&fields);
    }
    cir.finish()?;

    let mut ts = FileOut::new(dir.join(TIMESTAMPS_FILE));
    let labels = ds.nlos_labels.as_ref();
    let mut header = vec![
        "time_idx".to_owned(),
        "anchor_id".to_owned(),
        "rx_time_ns".to_owned(),
    ];
    if labels.is_some() {
        header.push("nlos".to_owned());
    }
    ts.line(&header);
    for (key, rx) in &ds.timestamps {
        let mut fields = vec![
            key.time_idx.to_string(),
            key.anchor_id.to_string(),
            fmt_f64(rx * NS_PER_S),
        ];
        if let Some(labels) = labels {
            let flag = labels.get(key).copied().unwrap_or(false);
            fields.push(if flag { "1" } else { "0" }.to_owned());
        }
        ts.line(&fields);
    }
    ts.finish()?;

    Ok(())
}

/// Writes a `epoch,loss` history.
pub fn write_epoch_losses(path: &Path, losses: &[f64]) -> Result<(), CliError> {
    let mut out = FileOut::new(path.to_path_buf());
    out.line(&["epoch", "loss"].map(String::from));
    for (epoch, loss) in losses.iter().enumerate() {
        out.line(&[epoch.to_string(), fmt_f64(*loss)]);
    }
    out.finish()
}

/// Writes the joint-training history:
/// `iter,recon_loss,cluster_loss,combined_loss`.
pub fn write_finetune_history(
    path: &Path,
    history: &[decloc_core::cluster::dec::DecIterRecord],
) -> Result<(), CliError> {
    let mut out = FileOut::new(path.to_path_buf());
    out.line(&["iter", "recon_loss", "cluster_loss", "combined_loss"].map(String::from));
    for rec in history {
        out.line(&[
            rec.iter.to_string(),
            fmt_f64(rec.recon_loss),
            fmt_f64(rec.cluster_loss),
            fmt_f64(rec.combined_loss),
        ]);
    }
    out.finish()
}

/// Writes one cluster assignment per record: `time_idx,anchor_id,cluster`.
pub fn write_labels(
    path: &Path,
    keys: &[SourceKey],
    labels: &[usize],
) -> Result<(), CliError> {
    let mut out = FileOut::new(path.to_path_buf());
    out.line(&["time_idx", "anchor_id", "cluster"].map(String::from));
    for (key, label) in keys.iter().zip(labels) {
        out.line(&[
            key.time_idx.to_string(),
            key.anchor_id.to_string(),
            label.to_string(),
        ]);
    }
    out.finish()
}

/// Writes per-cluster quality statistics:
/// `cluster_id,mu_m,sigma_m,rank,member_count`.
pub fn write_scores(path: &Path, scores: &[ClusterScore]) -> Result<(), CliError> {
    let mut out = FileOut::new(path.to_path_buf());
    out.line(&["cluster_id", "mu_m", "sigma_m", "rank", "member_count"].map(String::from));
    for s in scores {
        out.line(&[
            s.cluster_id.to_string(),
            fmt_f64(s.mu),
            fmt_f64(s.sigma),
            s.rank.to_string(),
            s.member_count.to_string(),
        ]);
    }
    out.finish()
}

/// Writes the per-record selection outcome:
/// `time_idx,anchor_id,cluster,rank,retained`.
pub fn write_selection(path: &Path, entries: &[SelectionEntry]) -> Result<(), CliError> {
    let mut out = FileOut::new(path.to_path_buf());
    out.line(&["time_idx", "anchor_id", "cluster", "rank", "retained"].map(String::from));
    for e in entries {
        out.line(&[
            e.key.time_idx.to_string(),
            e.key.anchor_id.to_string(),
            e.cluster_id.to_string(),
            e.rank.to_string(),
            if e.retained { "1" } else { "0" }.to_owned(),
        ]);
    }
    out.finish()
}

/// Writes solver outputs with the horizontal error where ground truth is
/// known: `time_idx,x_m,y_m,converged,iterations,error_m`.
pub fn write_estimates(
    path: &Path,
    estimates: &[(PositionEstimate, Option<f64>)],
) -> Result<(), CliError> {
    let mut out = FileOut::new(path.to_path_buf());
    out.line(&["time_idx", "x_m", "y_m", "converged", "iterations", "error_m"].map(String::from));
    for (est, error) in estimates {
        out.line(&[
            est.time_idx.to_string(),
            fmt_f64(est.x),
            fmt_f64(est.y),
            if est.converged { "1" } else { "0" }.to_owned(),
            est.iterations.to_string(),
            error.map(fmt_f64).unwrap_or_default(),
        ]);
    }
    out.finish()
}

/// Writes a two-component projection of the clustered points:
/// `time_idx,anchor_id,pc1,pc2,cluster`.
pub fn write_embedding(
    path: &Path,
    keys: &[SourceKey],
    coords: &decloc_core::mat::Mat,
    labels: &[usize],
) -> Result<(), CliError> {
    let mut out = FileOut::new(path.to_path_buf());
    out.line(&["time_idx", "anchor_id", "pc1", "pc2", "cluster"].map(String::from));
    for (i, (key, label)) in keys.iter().zip(labels).enumerate() {
        out.line(&[
            key.time_idx.to_string(),
            key.anchor_id.to_string(),
            fmt_f64(coords.get(i, 0)),
            fmt_f64(coords.get(i, 1)),
            label.to_string(),
        ]);
    }
    out.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use decloc_core::sim::{build_dataset, ScenarioConfig};

    fn small_scenario() -> ScenarioConfig {
        let mut cfg = ScenarioConfig::default_deployment();
        cfg.anchors.truncate(6);
        cfg.waypoints = vec![
            Vec3::new(1.0, 1.0, 1.0),
            Vec3::new(9.0, 1.0, 1.0),
            Vec3::new(9.0, 5.0, 1.0),
        ];
        cfg.max_range_m = 20.0;
        cfg.taps_len = 64;
        cfg.seed = 41;
        cfg
    }

    fn small_dataset() -> Dataset {
        build_dataset(&small_scenario()).unwrap()
    }

    #[test]
    fn save_then_load_reproduces_the_dataset() {
        let ds = small_dataset();
        let dir = tempfile::tempdir().unwrap();
        save_dataset(&ds, dir.path()).unwrap();
        let back = load_dataset(dir.path()).unwrap();

        assert_eq!(back.anchors, ds.anchors);
        assert_eq!(back.ground_truth.len(), ds.ground_truth.len());
        for (a, b) in back.ground_truth.iter().zip(&ds.ground_truth) {
            assert_eq!(a.time_idx, b.time_idx);
            assert_eq!(a.zone_tag, b.zone_tag);
            assert!(a.position.distance(b.position) < 1e-12);
        }
        assert_eq!(back.records.len(), ds.records.len());
        for (a, b) in back.records.iter().zip(&ds.records) {
            assert_eq!(a.key(), b.key());
            assert_eq!(a.fp_idx, b.fp_idx);
            assert_eq!(a.pp_idx, b.pp_idx);
            assert!((a.t_s - b.t_s).abs() / b.t_s < 1e-9);
            assert_eq!(a.taps.len(), b.taps.len());
            for (x, y) in a.taps.iter().zip(&b.taps) {
                assert!((x - y).abs() <= 1e-9 * y.abs().max(1.0));
            }
        }
        assert_eq!(back.timestamps.len(), ds.timestamps.len());
        for (key, rx) in &ds.timestamps {
            let got = back.timestamps[key];
            assert!((got - rx).abs() / rx.abs().max(1e-12) < 1e-9);
        }
        assert_eq!(back.nlos_labels, ds.nlos_labels);
    }

    #[test]
    fn two_saves_are_byte_identical() {
        let ds = small_dataset();
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        save_dataset(&ds, a.path()).unwrap();
        save_dataset(&ds, b.path()).unwrap();
        for file in [ANCHORS_FILE, GROUND_TRUTH_FILE, CIR_FILE, TIMESTAMPS_FILE] {
            let left = std::fs::read(a.path().join(file)).unwrap();
            let right = std::fs::read(b.path().join(file)).unwrap();
            assert_eq!(left, right, "{file} differs between saves");
        }
    }

    #[test]
    fn empty_dataset_writes_headers_only() {
        let ds = Dataset::default();
        let dir = tempfile::tempdir().unwrap();
        save_dataset(&ds, dir.path()).unwrap();
        let cir = std::fs::read_to_string(dir.path().join(CIR_FILE)).unwrap();
        assert_eq!(cir, "time_idx,anchor_id,fp_idx,pp_idx,t_s_ns\n");
        let ts = std::fs::read_to_string(dir.path().join(TIMESTAMPS_FILE)).unwrap();
        assert_eq!(ts, "time_idx,anchor_id,rx_time_ns\n");
    }

    #[test]
    fn missing_file_is_an_ingest_error() {
        let dir = tempfile::tempdir().unwrap();
        match load_dataset(dir.path()) {
            Err(CliError::Ingest { path, .. }) => {
                assert!(path.ends_with(ANCHORS_FILE));
            }
            other => panic!("expected ingest error, got {other:?}"),
        }
    }

    #[test]
    fn wrong_column_count_names_file_and_line() {
        let ds = small_dataset();
        let dir = tempfile::tempdir().unwrap();
        save_dataset(&ds, dir.path()).unwrap();
        let path = dir.path().join(ANCHORS_FILE);
        let mut content = std::fs::read_to_string(&path).unwrap();
        content.push_str("7,1.0,2.0\n");
        std::fs::write(&path, content).unwrap();
        match load_dataset(dir.path()) {
            Err(CliError::Validation { file, line, message }) => {
                assert!(file.ends_with(ANCHORS_FILE));
                assert_eq!(line, 8);
                assert!(message.contains("4 columns"), "{message}");
            }
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn non_finite_number_is_rejected() {
        let ds = small_dataset();
        let dir = tempfile::tempdir().unwrap();
        save_dataset(&ds, dir.path()).unwrap();
        let path = dir.path().join(TIMESTAMPS_FILE);
        let content = std::fs::read_to_string(&path).unwrap();
        let mut lines: Vec<&str> = content.lines().collect();
        let patched = lines[1].replace(
            lines[1].split(',').nth(2).unwrap(),
            "NaN",
        );
        lines[1] = &patched;
        std::fs::write(&path, lines.join("\n") + "\n").unwrap();
        match load_dataset(dir.path()) {
            Err(CliError::Validation { file, line, .. }) => {
                assert!(file.ends_with(TIMESTAMPS_FILE));
                assert_eq!(line, 2);
            }
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn duplicate_record_is_rejected() {
        let ds = small_dataset();
        let dir = tempfile::tempdir().unwrap();
        save_dataset(&ds, dir.path()).unwrap();
        let path = dir.path().join(CIR_FILE);
        let content = std::fs::read_to_string(&path).unwrap();
        let second = content.lines().nth(1).unwrap().to_owned();
        std::fs::write(&path, content + &second + "\n").unwrap();
        match load_dataset(dir.path()) {
            Err(CliError::Validation { file, message, .. }) => {
                assert!(file.ends_with(CIR_FILE));
                assert!(message.contains("duplicate"), "{message}");
            }
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn out_of_range_peak_index_is_rejected() {
        let mut ds = small_dataset();
        ds.records[0].pp_idx = ds.records[0].taps.len() as f64 + 5.0;
        let dir = tempfile::tempdir().unwrap();
        save_dataset(&ds, dir.path()).unwrap();
        match load_dataset(dir.path()) {
            Err(CliError::Invalid(message)) => {
                assert!(message.contains("pp_idx"), "{message}");
            }
            other => panic!("expected invalid-dataset error, got {other:?}"),
        }
    }

    #[test]
    fn zone_tags_survive_the_round_trip() {
        let header = "time_idx,x_m,y_m,z_m,zone_tag\n";
        let body = "0,1,2,1,warehouse\n1,2,2,1,open_space\n";
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(GROUND_TRUTH_FILE);
        std::fs::write(&path, format!("{header}{body}")).unwrap();
        let samples = load_ground_truth(&path).unwrap();
        assert_eq!(samples[0].zone_tag, ZoneTag::Warehouse);
        assert_eq!(samples[1].zone_tag, ZoneTag::OpenSpace);
        let bad = "0,1,2,1,attic\n";
        std::fs::write(&path, format!("{header}{bad}")).unwrap();
        assert!(matches!(
            load_ground_truth(&path),
            Err(CliError::Validation { line: 2, .. })
        ));
    }

    #[test]
    fn timestamps_without_labels_load_as_none() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(TIMESTAMPS_FILE);
        std::fs::write(&path, "time_idx,anchor_id,rx_time_ns\n0,1,25.5\n").unwrap();
        let (ts, labels) = load_timestamps(&path).unwrap();
        assert!(labels.is_none());
        let rx = ts[&SourceKey::new(0, 1)];
        assert!((rx - 25.5e-9).abs() < 1e-18);
    }
}
