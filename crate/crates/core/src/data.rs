//! Domain types for CIR datasets and window preprocessing.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)] // required in pure no_std builds; std in the graph shadows these with inherent methods
use num_traits::Float;

use crate::error::{ConfigError, ValidationError};
use crate::geom::Vec3;

pub type TimeIdx = u64;
pub type AnchorId = u32;

/// Identifies one received signal: the burst it belongs to and the anchor
/// that captured it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SourceKey {
    pub time_idx: TimeIdx,
    pub anchor_id: AnchorId,
}

impl SourceKey {
    pub const fn new(time_idx: TimeIdx, anchor_id: AnchorId) -> Self {
        Self { time_idx, anchor_id }
    }
}

/// One channel impulse response as captured by an anchor.
///
/// `fp_idx` is the detected first-path tap index, `pp_idx` the strongest-path
/// tap index; both may be fractional on real hardware. `t_s` is the tap
/// spacing in seconds.
#[derive(Debug, Clone, PartialEq)]
pub struct CirRecord {
    pub time_idx: TimeIdx,
    pub anchor_id: AnchorId,
    pub taps: Vec<f64>,
    pub fp_idx: f64,
    pub pp_idx: f64,
    pub t_s: f64,
}

impl CirRecord {
    pub fn key(&self) -> SourceKey {
        SourceKey::new(self.time_idx, self.anchor_id)
    }
}

/// A fixed anchor of the deployment.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AnchorNode {
    pub anchor_id: AnchorId,
    pub position: Vec3,
}

/// Environment class of a ground-truth sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum ZoneTag {
    OpenSpace,
    Warehouse,
}

impl ZoneTag {
    pub fn as_str(self) -> &'static str {
        match self {
            ZoneTag::OpenSpace => "open_space",
            ZoneTag::Warehouse => "warehouse",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "open_space" => Some(ZoneTag::OpenSpace),
            "warehouse" => Some(ZoneTag::Warehouse),
            _ => None,
        }
    }
}

/// True tag position for one burst.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthSample {
    pub time_idx: TimeIdx,
    pub position: Vec3,
    pub zone_tag: ZoneTag,
}

/// A complete capture: deployment, CIRs, receive timestamps (seconds), truth,
/// and (for synthetic data) per-record line-of-sight labels.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub anchors: Vec<AnchorNode>,
    pub records: Vec<CirRecord>,
    pub timestamps: BTreeMap<SourceKey, f64>,
    pub ground_truth: Vec<GroundTruthSample>,
    pub nlos_labels: Option<BTreeMap<SourceKey, bool>>,
}

/// Maximum number of signals an off-the-shelf localization engine accepts per
/// burst.
pub const MAX_SIGNALS_PER_BURST: usize = 9;

/// Minimum tap count for a usable CIR.
pub const MIN_TAPS: usize = 16;

impl Dataset {
    /// Checks every structural invariant; the message names the first
    /// violation found.
    pub fn validate(&self) -> Result<(), ValidationError> {
        if self.anchors.len() < 4 {
            return Err(ValidationError(format!(
                "need at least 4 anchors, got {}",
                self.anchors.len()
            )));
        }
        let mut anchor_ids: Vec<AnchorId> = self.anchors.iter().map(|a| a.anchor_id).collect();
        anchor_ids.sort_unstable();
        if anchor_ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(ValidationError("duplicate anchor_id".into()));
        }
        for a in &self.anchors {
            let p = a.position;
            if !(p.x.is_finite() && p.y.is_finite() && p.z.is_finite()) {
                return Err(ValidationError(format!(
                    "anchor {} has a non-finite position",
                    a.anchor_id
                )));
            }
        }

        if self.records.is_empty() {
            return Err(ValidationError("dataset has no CIR records".into()));
        }
        let taps_len = self.records[0].taps.len();
        if taps_len < MIN_TAPS {
            return Err(ValidationError(format!(
                "CIR length {taps_len} is below the minimum of {MIN_TAPS}"
            )));
        }
        let mut per_burst: BTreeMap<TimeIdx, usize> = BTreeMap::new();
        let mut record_keys: Vec<SourceKey> = Vec::with_capacity(self.records.len());
        for rec in &self.records {
            let key = rec.key();
            if rec.taps.len() != taps_len {
                return Err(ValidationError(format!(
                    "record ({}, {}) has {} taps, expected {taps_len}",
                    key.time_idx,
                    key.anchor_id,
                    rec.taps.len()
                )));
            }
            if !(rec.t_s.is_finite() && rec.t_s > 0.0) {
                return Err(ValidationError(format!(
                    "record ({}, {}) has non-positive tap spacing",
                    key.time_idx, key.anchor_id
                )));
            }
            for field in [("fp_idx", rec.fp_idx), ("pp_idx", rec.pp_idx)] {
                if !(field.1.is_finite() && field.1 >= 0.0 && field.1 < taps_len as f64) {
                    return Err(ValidationError(format!(
                        "record ({}, {}) has {} = {} outside [0, {taps_len})",
                        key.time_idx, key.anchor_id, field.0, field.1
                    )));
                }
            }
            if rec.taps.iter().any(|t| !t.is_finite() || *t < 0.0) {
                return Err(ValidationError(format!(
                    "record ({}, {}) has a negative or non-finite tap",
                    key.time_idx, key.anchor_id
                )));
            }
            if anchor_ids.binary_search(&rec.anchor_id).is_err() {
                return Err(ValidationError(format!(
                    "record ({}, {}) references an unknown anchor",
                    key.time_idx, key.anchor_id
                )));
            }
            *per_burst.entry(rec.time_idx).or_insert(0) += 1;
            record_keys.push(key);
        }
        record_keys.sort_unstable();
        if record_keys.windows(2).any(|w| w[0] == w[1]) {
            return Err(ValidationError("duplicate (time_idx, anchor_id) record".into()));
        }
        for (&t, &n) in &per_burst {
            if n > MAX_SIGNALS_PER_BURST {
                return Err(ValidationError(format!(
                    "burst {t} has {n} records, more than {MAX_SIGNALS_PER_BURST}"
                )));
            }
        }

        if self.timestamps.len() != record_keys.len()
            || !self.timestamps.keys().copied().eq(record_keys.iter().copied())
        {
            return Err(ValidationError(
                "timestamps and CIR records do not cover the same (time_idx, anchor_id) keys"
                    .into(),
            ));
        }
        if self.timestamps.values().any(|v| !v.is_finite()) {
            return Err(ValidationError("non-finite receive timestamp".into()));
        }

        let mut gt_times: Vec<TimeIdx> = self.ground_truth.iter().map(|g| g.time_idx).collect();
        gt_times.sort_unstable();
        if gt_times.windows(2).any(|w| w[0] == w[1]) {
            return Err(ValidationError("duplicate ground-truth time_idx".into()));
        }
        for g in &self.ground_truth {
            let p = g.position;
            if !(p.x.is_finite() && p.y.is_finite() && p.z.is_finite()) {
                return Err(ValidationError(format!(
                    "ground truth at {} has a non-finite position",
                    g.time_idx
                )));
            }
        }

        if let Some(labels) = &self.nlos_labels {
            for key in labels.keys() {
                if record_keys.binary_search(key).is_err() {
                    return Err(ValidationError(format!(
                        "NLoS label for ({}, {}) has no matching record",
                        key.time_idx, key.anchor_id
                    )));
                }
            }
        }
        Ok(())
    }

    /// Uniform tap count of the records, if any.
    pub fn taps_len(&self) -> Option<usize> {
        self.records.first().map(|r| r.taps.len())
    }

    /// Ground truth indexed by burst.
    pub fn ground_truth_by_time(&self) -> BTreeMap<TimeIdx, &GroundTruthSample> {
        self.ground_truth.iter().map(|g| (g.time_idx, g)).collect()
    }

    /// Fraction of records labelled non-line-of-sight (0 when unlabelled).
    pub fn nlos_fraction(&self) -> f64 {
        match &self.nlos_labels {
            Some(labels) if !labels.is_empty() => {
                labels.values().filter(|v| **v).count() as f64 / labels.len() as f64
            }
            _ => 0.0,
        }
    }
}

/// A normalized fixed-width cut of one CIR, aligned on its first path.
#[derive(Debug, Clone, PartialEq)]
pub struct CirWindow {
    pub values: Vec<f64>,
    pub source_key: SourceKey,
    /// Tap index of the record the window starts at; may be negative when the
    /// first path sits close to the start of the CIR.
    pub window_start: i64,
}

/// Window extraction settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowConfig {
    /// Output width in taps.
    pub width: usize,
    /// Taps kept ahead of the first-path tap.
    pub pre_offset: usize,
}

impl Default for WindowConfig {
    fn default() -> Self {
        Self {
            width: 128,
            pre_offset: 10,
        }
    }
}

/// Cuts a window of `cfg.width` taps starting `cfg.pre_offset` taps before
/// the first-path tap, zero-pads outside the record, and scales the result so
/// its largest magnitude is 1 (all-zero windows stay zero).
pub fn preprocess_cir(rec: &CirRecord, cfg: &WindowConfig) -> Result<CirWindow, ConfigError> {
    if cfg.width < 8 {
        return Err(ConfigError(format!(
            "window width {} is below the minimum of 8",
            cfg.width
        )));
    }
    if cfg.width > rec.taps.len() {
        return Err(ConfigError(format!(
            "window width {} exceeds CIR length {}",
            cfg.width,
            rec.taps.len()
        )));
    }
    if cfg.pre_offset >= cfg.width {
        return Err(ConfigError(format!(
            "pre offset {} must be smaller than the window width {}",
            cfg.pre_offset, cfg.width
        )));
    }
    let start = rec.fp_idx.floor() as i64 - cfg.pre_offset as i64;
    let mut values = vec![0.0; cfg.width];
    for (i, v) in values.iter_mut().enumerate() {
        let j = start + i as i64;
        if j >= 0 && (j as usize) < rec.taps.len() {
            *v = rec.taps[j as usize];
        }
    }
    let max_abs = values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if max_abs > 0.0 {
        for v in &mut values {
            *v /= max_abs;
        }
    }
    Ok(CirWindow {
        values,
        source_key: rec.key(),
        window_start: start,
    })
}

/// Windows for every record, in record order.
pub fn preprocess_all(ds: &Dataset, cfg: &WindowConfig) -> Result<Vec<CirWindow>, ConfigError> {
    ds.records.iter().map(|r| preprocess_cir(r, cfg)).collect()
}
