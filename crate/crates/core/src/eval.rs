//! Accuracy metrics over localized trajectories.

use alloc::vec::Vec;

#[allow(unused_imports)] // required in pure no_std builds; std in the graph shadows these with inherent methods
use num_traits::Float;

use crate::data::{GroundTruthSample, TimeIdx, ZoneTag};
use crate::tdoa::PositionEstimate;

/// Horizontal-error statistics of one experiment run.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorReport {
    /// Per-burst horizontal errors, ascending, metres.
    pub errors: Vec<f64>,
    pub mae: f64,
    pub p75: f64,
    pub p90: f64,
    pub p95: f64,
    pub n: usize,
    /// Zone filter this report was computed under, if any.
    pub zone: Option<ZoneTag>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum EvalError {
    #[error("no converged estimates to evaluate")]
    EmptyReport,
    #[error("estimate at burst {0} has no ground-truth sample")]
    MissingGroundTruth(TimeIdx),
}

/// Percentile by linear interpolation between closest order statistics:
/// the value at fractional rank `pct / 100 * (n - 1)`.
///
/// `sorted` must be ascending and non-empty.
pub fn percentile_of_sorted(sorted: &[f64], pct: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    debug_assert!(sorted.windows(2).all(|w| w[0] <= w[1]));
    let rank = (pct / 100.0) * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    if lo + 1 >= sorted.len() {
        return sorted[sorted.len() - 1];
    }
    let frac = rank - lo as f64;
    sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
}

/// Compares converged estimates against ground truth and summarizes the
/// horizontal errors. With a zone filter, only bursts whose ground truth
/// carries that tag count.
pub fn evaluate(
    estimates: &[PositionEstimate],
    ground_truth: &[GroundTruthSample],
    zone: Option<ZoneTag>,
) -> Result<ErrorReport, EvalError> {
    let truth: alloc::collections::BTreeMap<TimeIdx, &GroundTruthSample> =
        ground_truth.iter().map(|g| (g.time_idx, g)).collect();
    let mut errors = Vec::new();
    for est in estimates.iter().filter(|e| e.converged) {
        let gt = truth
            .get(&est.time_idx)
            .ok_or(EvalError::MissingGroundTruth(est.time_idx))?;
        if let Some(z) = zone {
            if gt.zone_tag != z {
                continue;
            }
        }
        let dx = est.x - gt.position.x;
        let dy = est.y - gt.position.y;
        errors.push((dx * dx + dy * dy).sqrt());
    }
    if errors.is_empty() {
        return Err(EvalError::EmptyReport);
    }
    errors.sort_by(f64::total_cmp);
    let n = errors.len();
    let mae = errors.iter().sum::<f64>() / n as f64;
    Ok(ErrorReport {
        mae,
        p75: percentile_of_sorted(&errors, 75.0),
        p90: percentile_of_sorted(&errors, 90.0),
        p95: percentile_of_sorted(&errors, 95.0),
        n,
        zone,
        errors,
    })
}

/// Relative improvement of `treated` over `baseline` per metric:
/// `(baseline - treated) / baseline`. `None` where the baseline metric is
/// zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReportDelta {
    pub mae: Option<f64>,
    pub p75: Option<f64>,
    pub p90: Option<f64>,
    pub p95: Option<f64>,
}

pub fn compare_reports(baseline: &ErrorReport, treated: &ErrorReport) -> ReportDelta {
    let rel = |b: f64, t: f64| -> Option<f64> {
        if b == 0.0 {
            None
        } else {
            Some((b - t) / b)
        }
    };
    ReportDelta {
        mae: rel(baseline.mae, treated.mae),
        p75: rel(baseline.p75, treated.p75),
        p90: rel(baseline.p90, treated.p90),
        p95: rel(baseline.p95, treated.p95),
    }
}
