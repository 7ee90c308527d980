//! TDoA measurement formation and position solving.
//!
//! Receive-time differences against a reference anchor become range
//! differences; a damped Gauss-Newton iteration then finds the horizontal tag
//! position that best explains them. The tag height is treated as known
//! (tags are worn or mounted at a fixed height), so the solve is 2-D while
//! distances stay 3-D.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

#[allow(unused_imports)] // required in pure no_std builds; std in the graph shadows these with inherent methods
use num_traits::Float;

use crate::data::{AnchorId, AnchorNode, Dataset, TimeIdx};
use crate::error::ValidationError;
use crate::geom::Vec3;
use crate::score::SelectionEntry;
use crate::SPEED_OF_LIGHT;

/// One range-difference observation.
#[derive(Debug, Clone, PartialEq)]
pub struct TdoaMeasurement {
    pub time_idx: TimeIdx,
    pub anchor_id: AnchorId,
    pub ref_anchor_id: AnchorId,
    /// `c * (rx_anchor - rx_ref)`, metres.
    pub range_diff: f64,
}

/// Solver output for one burst.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PositionEstimate {
    pub time_idx: TimeIdx,
    pub x: f64,
    pub y: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Euclidean norm of the range-difference residual at the returned
    /// position, metres.
    pub residual_norm: f64,
}

/// Gauss-Newton settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub max_iters: usize,
    /// Step-size convergence threshold, metres.
    pub tol_m: f64,
    /// Initial Levenberg damping.
    pub damping: f64,
    /// Known tag height used in the 3-D distances, metres.
    pub tag_z: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iters: 50,
            tol_m: 1e-6,
            damping: 1e-3,
            tag_z: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum TdoaError {
    #[error("burst {time_idx}: reference anchor {ref_anchor_id} is not in the retained set")]
    RefExcluded {
        time_idx: TimeIdx,
        ref_anchor_id: AnchorId,
    },
    #[error("burst {time_idx}: {measurements} measurements, need at least 3")]
    Underdetermined {
        time_idx: TimeIdx,
        measurements: usize,
    },
    #[error("anchor {anchor_id} has no known position")]
    UnknownAnchor { anchor_id: AnchorId },
}

/// Differences every receive time of one burst against the reference
/// anchor's, in the order given. The reference itself yields no measurement.
pub fn form_tdoa(
    time_idx: TimeIdx,
    rx_times: &[(AnchorId, f64)],
    ref_anchor_id: AnchorId,
) -> Result<Vec<TdoaMeasurement>, TdoaError> {
    let ref_rx = rx_times
        .iter()
        .find(|(a, _)| *a == ref_anchor_id)
        .map(|(_, t)| *t)
        .ok_or(TdoaError::RefExcluded {
            time_idx,
            ref_anchor_id,
        })?;
    Ok(rx_times
        .iter()
        .filter(|(a, _)| *a != ref_anchor_id)
        .map(|&(anchor_id, rx)| TdoaMeasurement {
            time_idx,
            anchor_id,
            ref_anchor_id,
            range_diff: SPEED_OF_LIGHT * (rx - ref_rx),
        })
        .collect())
}

/// Horizontal centroid of the anchors; the default solver start.
pub fn anchor_centroid_xy(anchors: &[AnchorNode]) -> (f64, f64) {
    let n = anchors.len().max(1) as f64;
    let sx: f64 = anchors.iter().map(|a| a.position.x).sum();
    let sy: f64 = anchors.iter().map(|a| a.position.y).sum();
    (sx / n, sy / n)
}

/// Minimizes the squared range-difference residual over (x, y) with damped
/// Gauss-Newton steps (Levenberg acceptance: the damping grows tenfold on a
/// rejected step and shrinks tenfold on an accepted one).
pub fn solve_position(
    measurements: &[TdoaMeasurement],
    anchors: &[AnchorNode],
    init_xy: (f64, f64),
    cfg: &SolverConfig,
) -> Result<PositionEstimate, TdoaError> {
    let time_idx = measurements.first().map_or(0, |m| m.time_idx);
    if measurements.len() < 3 {
        return Err(TdoaError::Underdetermined {
            time_idx,
            measurements: measurements.len(),
        });
    }
    let positions: BTreeMap<AnchorId, Vec3> = anchors
        .iter()
        .map(|a| (a.anchor_id, a.position))
        .collect();
    let geo: Vec<(Vec3, Vec3, f64)> = measurements
        .iter()
        .map(|m| {
            let a = positions
                .get(&m.anchor_id)
                .copied()
                .ok_or(TdoaError::UnknownAnchor { anchor_id: m.anchor_id })?;
            let r = positions
                .get(&m.ref_anchor_id)
                .copied()
                .ok_or(TdoaError::UnknownAnchor { anchor_id: m.ref_anchor_id })?;
            Ok((a, r, m.range_diff))
        })
        .collect::<Result<_, TdoaError>>()?;

    let dist = |p: (f64, f64), a: Vec3| -> f64 {
        Vec3::new(p.0, p.1, cfg.tag_z).distance(a).max(1e-12)
    };
    let cost_at = |p: (f64, f64)| -> f64 {
        geo.iter()
            .map(|&(a, r, diff)| {
                let res = dist(p, a) - dist(p, r) - diff;
                res * res
            })
            .sum()
    };

    let mut p = init_xy;
    let mut cost = cost_at(p);
    let mut mu = cfg.damping;
    let mut converged = false;
    let mut iterations = 0;
    for _ in 0..cfg.max_iters {
        iterations += 1;
        // Normal equations of the linearized residual.
        let (mut h00, mut h01, mut h11) = (0.0, 0.0, 0.0);
        let (mut g0, mut g1) = (0.0, 0.0);
        for &(a, r, diff) in &geo {
            let da = dist(p, a);
            let dr = dist(p, r);
            let res = da - dr - diff;
            let jx = (p.0 - a.x) / da - (p.0 - r.x) / dr;
            let jy = (p.1 - a.y) / da - (p.1 - r.y) / dr;
            h00 += jx * jx;
            h01 += jx * jy;
            h11 += jy * jy;
            g0 += jx * res;
            g1 += jy * res;
        }
        let (a00, a11) = (h00 + mu, h11 + mu);
        let det = a00 * a11 - h01 * h01;
        if det.abs() < 1e-300 || !det.is_finite() {
            mu *= 10.0;
            continue;
        }
        let dx = (-g0 * a11 + g1 * h01) / det;
        let dy = (-g1 * a00 + g0 * h01) / det;
        let candidate = (p.0 + dx, p.1 + dy);
        let cand_cost = cost_at(candidate);
        if cand_cost.is_finite() && cand_cost <= cost {
            p = candidate;
            cost = cand_cost;
            mu = (mu / 10.0).max(1e-12);
            if (dx * dx + dy * dy).sqrt() < cfg.tol_m {
                converged = true;
                break;
            }
        } else {
            mu *= 10.0;
            if mu > 1e12 {
                break;
            }
        }
    }
    Ok(PositionEstimate {
        time_idx,
        x: p.0,
        y: p.1,
        converged,
        iterations,
        residual_norm: cost.sqrt(),
    })
}

/// A burst that produced no estimate, with the reason.
#[derive(Debug, Clone, PartialEq)]
pub struct SkippedBurst {
    pub time_idx: TimeIdx,
    pub error: TdoaError,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrajectoryResult {
    pub estimates: Vec<PositionEstimate>,
    pub skipped: Vec<SkippedBurst>,
}

/// Solves every burst of the dataset using only retained records.
///
/// The reference anchor is `preferred_ref` when that anchor is retained in
/// the burst, otherwise the retained anchor with the best cluster rank
/// (ties: lowest anchor id). Each solve warm-starts from the previous
/// converged estimate; the first burst starts at the anchor centroid.
pub fn localize_trajectory(
    ds: &Dataset,
    selection: &[SelectionEntry],
    preferred_ref: Option<AnchorId>,
    cfg: &SolverConfig,
) -> Result<TrajectoryResult, ValidationError> {
    let mut bursts: BTreeMap<TimeIdx, Vec<(AnchorId, f64, usize)>> = BTreeMap::new();
    for e in selection.iter().filter(|e| e.retained) {
        let rx = *ds.timestamps.get(&e.key).ok_or_else(|| {
            ValidationError(alloc::format!(
                "selection entry ({}, {}) has no timestamp",
                e.key.time_idx,
                e.key.anchor_id
            ))
        })?;
        bursts
            .entry(e.key.time_idx)
            .or_default()
            .push((e.key.anchor_id, rx, e.rank));
    }

    let mut out = TrajectoryResult::default();
    let mut warm = anchor_centroid_xy(&ds.anchors);
    for (&time_idx, retained) in &bursts {
        let ref_id = match preferred_ref {
            Some(pref) if retained.iter().any(|(a, _, _)| *a == pref) => pref,
            _ => {
                // Best cluster rank among the retained, then lowest id.
                retained
                    .iter()
                    .min_by(|x, y| x.2.cmp(&y.2).then(x.0.cmp(&y.0)))
                    .map(|(a, _, _)| *a)
                    .expect("burst grouping never yields an empty burst")
            }
        };
        let rx_times: Vec<(AnchorId, f64)> =
            retained.iter().map(|&(a, rx, _)| (a, rx)).collect();
        let measurements = match form_tdoa(time_idx, &rx_times, ref_id) {
            Ok(m) => m,
            Err(error) => {
                out.skipped.push(SkippedBurst { time_idx, error });
                continue;
            }
        };
        match solve_position(&measurements, &ds.anchors, warm, cfg) {
            Ok(est) => {
                if est.converged {
                    warm = (est.x, est.y);
                }
                out.estimates.push(est);
            }
            Err(error) => out.skipped.push(SkippedBurst { time_idx, error }),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{CirRecord, GroundTruthSample, SourceKey, ZoneTag};
    use alloc::vec;

    fn square_anchors(z: f64) -> Vec<AnchorNode> {
        [(0.0, 0.0), (10.0, 0.0), (0.0, 10.0), (10.0, 10.0)]
            .iter()
            .enumerate()
            .map(|(i, &(x, y))| AnchorNode {
                anchor_id: i as AnchorId,
                position: Vec3::new(x, y, z),
            })
            .collect()
    }

    fn diffs_for(tag: Vec3, anchors: &[AnchorNode], ref_id: AnchorId) -> Vec<TdoaMeasurement> {
        let d_ref = tag.distance(anchors[ref_id as usize].position);
        anchors
            .iter()
            .filter(|a| a.anchor_id != ref_id)
            .map(|a| TdoaMeasurement {
                time_idx: 0,
                anchor_id: a.anchor_id,
                ref_anchor_id: ref_id,
                range_diff: tag.distance(a.position) - d_ref,
            })
            .collect()
    }

    #[test]
    fn form_tdoa_differences_against_reference() {
        let rx = [(0u32, 1.0e-6), (1u32, 1.2e-6), (2u32, 0.9e-6)];
        let m = form_tdoa(5, &rx, 0).unwrap();
        assert_eq!(m.len(), 2);
        assert_eq!(m[0].anchor_id, 1);
        assert!((m[0].range_diff - SPEED_OF_LIGHT * 0.2e-6).abs() < 1e-9);
        assert!((m[1].range_diff + SPEED_OF_LIGHT * 0.1e-6).abs() < 1e-9);
        assert_eq!(m[0].time_idx, 5);

        let err = form_tdoa(5, &rx, 9).unwrap_err();
        assert_eq!(
            err,
            TdoaError::RefExcluded {
                time_idx: 5,
                ref_anchor_id: 9
            }
        );
    }

    #[test]
    fn square_geometry_recovers_the_tag() {
        let anchors = square_anchors(0.0);
        let tag = Vec3::new(3.0, 4.0, 0.0);
        let meas = diffs_for(tag, &anchors, 0);
        // Spot-check the constructed diffs: sqrt(65)-5, sqrt(45)-5, sqrt(85)-5.
        assert!((meas[0].range_diff - (65.0f64.sqrt() - 5.0)).abs() < 1e-12);
        assert!((meas[1].range_diff - (45.0f64.sqrt() - 5.0)).abs() < 1e-12);
        assert!((meas[2].range_diff - (85.0f64.sqrt() - 5.0)).abs() < 1e-12);

        let cfg = SolverConfig { tag_z: 0.0, ..SolverConfig::default() };
        let est = solve_position(&meas, &anchors, (5.0, 5.0), &cfg).unwrap();
        assert!(est.converged);
        assert!((est.x - 3.0).abs() < 1e-6 && (est.y - 4.0).abs() < 1e-6, "{est:?}");
        assert!(est.residual_norm < 1e-9);
    }

    #[test]
    fn elevated_anchors_with_known_tag_height() {
        let anchors = square_anchors(3.0);
        let tag = Vec3::new(7.25, 2.5, 1.0);
        let meas = diffs_for(tag, &anchors, 2);
        let cfg = SolverConfig { tag_z: 1.0, ..SolverConfig::default() };
        let est = solve_position(&meas, &anchors, (5.0, 5.0), &cfg).unwrap();
        assert!(est.converged);
        assert!((est.x - 7.25).abs() < 1e-6 && (est.y - 2.5).abs() < 1e-6);
    }

    #[test]
    fn fewer_than_three_measurements_is_underdetermined() {
        let anchors = square_anchors(0.0);
        let meas = diffs_for(Vec3::new(3.0, 4.0, 0.0), &anchors, 0);
        let cfg = SolverConfig::default();
        let err = solve_position(&meas[..2], &anchors, (5.0, 5.0), &cfg).unwrap_err();
        assert!(matches!(err, TdoaError::Underdetermined { measurements: 2, .. }));
    }

    #[test]
    fn unknown_anchor_is_reported() {
        let anchors = square_anchors(0.0);
        let mut meas = diffs_for(Vec3::new(3.0, 4.0, 0.0), &anchors, 0);
        meas[0].anchor_id = 77;
        let err = solve_position(&meas, &anchors, (5.0, 5.0), &SolverConfig::default());
        assert_eq!(err.unwrap_err(), TdoaError::UnknownAnchor { anchor_id: 77 });
    }

    /// Noiseless end-to-end dataset: timestamps are epoch + distance / c.
    fn noiseless_dataset_with(
        anchors: Vec<AnchorNode>,
        tags: &[Vec3],
    ) -> (Dataset, Vec<SelectionEntry>) {
        let mut ds = Dataset {
            anchors: anchors.clone(),
            ..Dataset::default()
        };
        let mut selection = Vec::new();
        for (t, tag) in tags.iter().enumerate() {
            let time_idx = t as TimeIdx;
            ds.ground_truth.push(GroundTruthSample {
                time_idx,
                position: *tag,
                zone_tag: ZoneTag::OpenSpace,
            });
            for a in &anchors {
                let key = SourceKey::new(time_idx, a.anchor_id);
                let mut taps = vec![0.0; 16];
                taps[5] = 1.0;
                ds.records.push(CirRecord {
                    time_idx,
                    anchor_id: a.anchor_id,
                    taps,
                    fp_idx: 5.0,
                    pp_idx: 5.0,
                    t_s: 1e-9,
                });
                ds.timestamps.insert(
                    key,
                    time_idx as f64 * 0.1 + tag.distance(a.position) / SPEED_OF_LIGHT,
                );
                selection.push(SelectionEntry {
                    key,
                    cluster_id: 0,
                    rank: 0,
                    d: 0.0,
                    retained: true,
                });
            }
        }
        (ds, selection)
    }

    fn noiseless_dataset(tags: &[Vec3]) -> (Dataset, Vec<SelectionEntry>) {
        noiseless_dataset_with(square_anchors(2.5), tags)
    }

    #[test]
    fn trajectory_localization_follows_the_tag() {
        let tags = [
            Vec3::new(2.0, 2.0, 1.0),
            Vec3::new(2.5, 2.4, 1.0),
            Vec3::new(3.0, 2.8, 1.0),
        ];
        let (ds, selection) = noiseless_dataset(&tags);
        let cfg = SolverConfig::default();
        let result = localize_trajectory(&ds, &selection, Some(0), &cfg).unwrap();
        assert!(result.skipped.is_empty());
        assert_eq!(result.estimates.len(), 3);
        for (est, tag) in result.estimates.iter().zip(&tags) {
            assert!(est.converged);
            // Timestamps round-trip through absolute seconds, so allow the
            // few-micron error that costs.
            assert!((est.x - tag.x).abs() < 1e-3, "{est:?}");
            assert!((est.y - tag.y).abs() < 1e-3, "{est:?}");
        }
    }

    #[test]
    fn reference_falls_back_to_best_rank_when_excluded() {
        // Five anchors so that dropping the preferred reference still leaves
        // a solvable burst.
        let mut anchors = square_anchors(2.5);
        anchors.push(AnchorNode {
            anchor_id: 4,
            position: Vec3::new(5.0, 0.0, 2.5),
        });
        let tags = [Vec3::new(4.0, 6.0, 1.0)];
        let (ds, mut selection) = noiseless_dataset_with(anchors, &tags);
        // Drop the preferred reference anchor 0 and make anchor 2 best-ranked.
        selection[0].retained = false;
        selection[1].rank = 1;
        selection[2].rank = 0;
        selection[3].rank = 2;
        selection[4].rank = 2;
        let result =
            localize_trajectory(&ds, &selection, Some(0), &SolverConfig::default()).unwrap();
        assert_eq!(result.estimates.len(), 1);
        let est = result.estimates[0];
        assert!((est.x - 4.0).abs() < 1e-3 && (est.y - 6.0).abs() < 1e-3);

        // With only 3 retained there are 2 measurements: underdetermined.
        selection[4].retained = false;
        let result =
            localize_trajectory(&ds, &selection, Some(0), &SolverConfig::default()).unwrap();
        assert!(result.estimates.is_empty());
        assert_eq!(result.skipped.len(), 1);
        assert!(matches!(
            result.skipped[0].error,
            TdoaError::Underdetermined { measurements: 2, .. }
        ));
    }

    #[test]
    fn selection_without_timestamp_is_rejected() {
        let (ds, mut selection) = noiseless_dataset(&[Vec3::new(2.0, 2.0, 1.0)]);
        selection[0].key = SourceKey::new(9, 9);
        assert!(localize_trajectory(&ds, &selection, None, &SolverConfig::default()).is_err());
    }
}
