//! Cluster quality scoring and per-burst signal selection.
//!
//! Each received signal gets a path-distance feature: the spatial separation
//! between its strongest path and its first detected path. Clusters of
//! signals are then scored by the mean and spread of that feature, ranked,
//! and the worst-ranked signals of every burst are excluded before
//! positioning.

use alloc::format;
use alloc::vec::Vec;

#[allow(unused_imports)] // required in pure no_std builds; std in the graph shadows these with inherent methods
use num_traits::Float;

use crate::data::{AnchorId, CirRecord};
use crate::error::{ConfigError, ValidationError};
use crate::SPEED_OF_LIGHT;

/// Distance in metres between the strongest path and the first detected path
/// of one CIR. Signed: negative if the strongest path precedes the first
/// path index.
pub fn path_distance(rec: &CirRecord) -> f64 {
    (rec.pp_idx - rec.fp_idx) * rec.t_s * SPEED_OF_LIGHT
}

/// Per-cluster summary of the path-distance feature.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ClusterScore {
    pub cluster_id: usize,
    /// Mean path distance of the members; `+inf` for an empty cluster.
    pub mu: f64,
    /// Population standard deviation of the members; `+inf` for an empty
    /// cluster.
    pub sigma: f64,
    pub member_count: usize,
    /// 0 = best. Filled by [`rank_clusters`].
    pub rank: usize,
}

/// Statistic used to order clusters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Criterion {
    /// Order by standard deviation of the path distance.
    Sigma,
    /// Order by mean path distance.
    Mu,
}

impl Criterion {
    pub fn as_str(self) -> &'static str {
        match self {
            Criterion::Sigma => "sigma",
            Criterion::Mu => "mu",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "sigma" => Some(Criterion::Sigma),
            "mu" => Some(Criterion::Mu),
            _ => None,
        }
    }
}

/// How many worst-ranked signals to drop per burst and the floor below which
/// no dropping happens.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelectionPolicy {
    pub criterion: Criterion,
    /// Signals removed per burst.
    pub exclude_count: usize,
    /// Retain-all fallback threshold; positioning needs at least 4 anchors.
    pub min_anchors: usize,
}

impl SelectionPolicy {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.min_anchors < 4 {
            return Err(ConfigError(format!(
                "min_anchors must be at least 4, got {}",
                self.min_anchors
            )));
        }
        Ok(())
    }
}

/// Mean and population standard deviation of `d` per cluster label.
///
/// Empty clusters get `mu = sigma = +inf` so they always rank last.
pub fn cluster_stats(
    d: &[f64],
    labels: &[usize],
    k: usize,
) -> Result<Vec<ClusterScore>, ValidationError> {
    if d.len() != labels.len() {
        return Err(ValidationError(format!(
            "{} path distances but {} labels",
            d.len(),
            labels.len()
        )));
    }
    if let Some(bad) = labels.iter().find(|l| **l >= k) {
        return Err(ValidationError(format!(
            "label {bad} out of range for k = {k}"
        )));
    }
    let mut count = alloc::vec![0usize; k];
    let mut sum = alloc::vec![0.0f64; k];
    for (&v, &l) in d.iter().zip(labels) {
        count[l] += 1;
        sum[l] += v;
    }
    let mut sq_dev = alloc::vec![0.0f64; k];
    for (&v, &l) in d.iter().zip(labels) {
        let dev = v - sum[l] / count[l] as f64;
        sq_dev[l] += dev * dev;
    }
    Ok((0..k)
        .map(|j| {
            if count[j] == 0 {
                ClusterScore {
                    cluster_id: j,
                    mu: f64::INFINITY,
                    sigma: f64::INFINITY,
                    member_count: 0,
                    rank: 0,
                }
            } else {
                let n = count[j] as f64;
                ClusterScore {
                    cluster_id: j,
                    mu: sum[j] / n,
                    sigma: (sq_dev[j] / n).sqrt(),
                    member_count: count[j],
                    rank: 0,
                }
            }
        })
        .collect())
}

/// Fills `rank` in place: 0 for the cluster with the smallest criterion
/// value. Ties break on the other statistic, then on `cluster_id`.
pub fn rank_clusters(scores: &mut [ClusterScore], criterion: Criterion) {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        let (pa, sa) = sort_key(&scores[a], criterion);
        let (pb, sb) = sort_key(&scores[b], criterion);
        pa.total_cmp(&pb)
            .then(sa.total_cmp(&sb))
            .then(scores[a].cluster_id.cmp(&scores[b].cluster_id))
    });
    for (rank, &idx) in order.iter().enumerate() {
        scores[idx].rank = rank;
    }
}

fn sort_key(score: &ClusterScore, criterion: Criterion) -> (f64, f64) {
    match criterion {
        Criterion::Sigma => (score.sigma, score.mu),
        Criterion::Mu => (score.mu, score.sigma),
    }
}

/// One burst signal annotated with its cluster's rank.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredSignal {
    pub anchor_id: AnchorId,
    pub cluster_id: usize,
    /// Rank of the signal's cluster (0 = best).
    pub rank: usize,
    /// Path distance of this signal, metres.
    pub d: f64,
}

/// Drops the `exclude_count` worst signals of one burst.
///
/// Badness order: higher cluster rank first, then larger path distance, then
/// larger anchor id. If dropping would leave fewer than `min_anchors`
/// signals, the burst is returned unchanged. Input order is preserved.
pub fn select_signals(signals: &[ScoredSignal], policy: &SelectionPolicy) -> Vec<ScoredSignal> {
    let e = policy.exclude_count;
    if e == 0 || signals.len() < policy.min_anchors + e {
        return signals.to_vec();
    }
    let mut badness: Vec<usize> = (0..signals.len()).collect();
    badness.sort_by(|&a, &b| {
        let sa = &signals[a];
        let sb = &signals[b];
        sb.rank
            .cmp(&sa.rank)
            .then(sb.d.total_cmp(&sa.d))
            .then(sb.anchor_id.cmp(&sa.anchor_id))
    });
    let dropped = &badness[..e];
    signals
        .iter()
        .enumerate()
        .filter(|(i, _)| !dropped.contains(i))
        .map(|(_, s)| *s)
        .collect()
}

/// Per-record outcome of the selection stage.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelectionEntry {
    pub key: crate::data::SourceKey,
    pub cluster_id: usize,
    /// Rank of the record's cluster (0 = best).
    pub rank: usize,
    /// Path distance of the record, metres.
    pub d: f64,
    pub retained: bool,
}

/// Applies the policy burst by burst and returns one entry per record, in
/// record order.
///
/// `labels` pairs with `records`; `scores` must hold one ranked entry per
/// cluster, indexed by `cluster_id`.
pub fn build_selection(
    records: &[CirRecord],
    labels: &[usize],
    scores: &[ClusterScore],
    policy: &SelectionPolicy,
) -> Result<Vec<SelectionEntry>, ValidationError> {
    if records.len() != labels.len() {
        return Err(ValidationError(format!(
            "{} records but {} labels",
            records.len(),
            labels.len()
        )));
    }
    for (j, s) in scores.iter().enumerate() {
        if s.cluster_id != j {
            return Err(ValidationError(
                "cluster scores must be ordered by cluster_id".into(),
            ));
        }
    }
    let mut entries = Vec::with_capacity(records.len());
    for (rec, &label) in records.iter().zip(labels) {
        let score = scores
            .get(label)
            .ok_or_else(|| ValidationError(format!("label {label} has no cluster score")))?;
        entries.push(SelectionEntry {
            key: rec.key(),
            cluster_id: label,
            rank: score.rank,
            d: path_distance(rec),
            retained: true,
        });
    }
    // Burst boundaries: records of one burst share a time_idx; group without
    // assuming global ordering.
    let mut by_time: alloc::collections::BTreeMap<u64, Vec<usize>> =
        alloc::collections::BTreeMap::new();
    for (i, e) in entries.iter().enumerate() {
        by_time.entry(e.key.time_idx).or_default().push(i);
    }
    for idx in by_time.values() {
        let burst: Vec<ScoredSignal> = idx
            .iter()
            .map(|&i| ScoredSignal {
                anchor_id: entries[i].key.anchor_id,
                cluster_id: entries[i].cluster_id,
                rank: entries[i].rank,
                d: entries[i].d,
            })
            .collect();
        let kept = select_signals(&burst, policy);
        for &i in idx {
            entries[i].retained = kept.iter().any(|s| s.anchor_id == entries[i].key.anchor_id);
        }
    }
    Ok(entries)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use alloc::vec::Vec;

    fn record(fp: f64, pp: f64, t_s: f64) -> CirRecord {
        CirRecord {
            time_idx: 0,
            anchor_id: 0,
            taps: vec![0.0; 16],
            fp_idx: fp,
            pp_idx: pp,
            t_s,
        }
    }

    #[test]
    fn path_distance_converts_tap_separation_to_metres() {
        // 5 taps at 1.0016 ns spacing: 5 * 1.0016e-9 * c = 1.50136... m.
        let d = path_distance(&record(10.0, 15.0, 1.0016e-9));
        assert!((d - 1.5014).abs() < 1e-4, "got {d}");
        // Strongest path on the first path: zero separation.
        assert_eq!(path_distance(&record(12.0, 12.0, 1.0016e-9)), 0.0);
        // Strongest path before the first path index: signed negative.
        assert!(path_distance(&record(15.0, 10.0, 1.0016e-9)) < 0.0);
    }

    #[test]
    fn stats_use_population_sigma() {
        let d = [1.0, 2.0, 3.0, 10.0];
        let labels = [0, 0, 0, 1];
        let scores = cluster_stats(&d, &labels, 2).unwrap();
        assert_eq!(scores[0].member_count, 3);
        assert!((scores[0].mu - 2.0).abs() < 1e-15);
        // Population deviation of {1,2,3} is sqrt(2/3).
        assert!((scores[0].sigma - (2.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(scores[1].member_count, 1);
        assert_eq!(scores[1].sigma, 0.0);
        assert_eq!(scores[1].mu, 10.0);
    }

    #[test]
    fn empty_cluster_gets_infinite_stats() {
        let scores = cluster_stats(&[1.0, 2.0], &[0, 0], 3).unwrap();
        assert_eq!(scores[1].member_count, 0);
        assert!(scores[1].mu.is_infinite() && scores[1].sigma.is_infinite());
        assert!(scores[2].mu.is_infinite());
    }

    #[test]
    fn stats_reject_bad_labels() {
        assert!(cluster_stats(&[1.0], &[0, 1], 2).is_err());
        assert!(cluster_stats(&[1.0, 2.0], &[0, 2], 2).is_err());
    }

    #[test]
    fn ranking_orders_by_criterion_with_tie_breaks() {
        let mut scores = vec![
            ClusterScore { cluster_id: 0, mu: 5.0, sigma: 2.0, member_count: 3, rank: 0 },
            ClusterScore { cluster_id: 1, mu: 1.0, sigma: 0.5, member_count: 3, rank: 0 },
            ClusterScore { cluster_id: 2, mu: 3.0, sigma: 2.0, member_count: 3, rank: 0 },
            // Empty cluster ranks last under either criterion.
            ClusterScore {
                cluster_id: 3,
                mu: f64::INFINITY,
                sigma: f64::INFINITY,
                member_count: 0,
                rank: 0,
            },
        ];
        rank_clusters(&mut scores, Criterion::Sigma);
        // sigma: 0.5 < 2.0 == 2.0 < inf; the sigma tie breaks on mu (3 < 5).
        let ranks: Vec<usize> = scores.iter().map(|s| s.rank).collect();
        assert_eq!(ranks, vec![2, 0, 1, 3]);

        rank_clusters(&mut scores, Criterion::Mu);
        let ranks: Vec<usize> = scores.iter().map(|s| s.rank).collect();
        assert_eq!(ranks, vec![2, 0, 1, 3]);

        // Re-ranking already ranked scores changes nothing.
        let before = scores.clone();
        rank_clusters(&mut scores, Criterion::Mu);
        assert_eq!(scores, before);
    }

    #[test]
    fn ranking_breaks_full_ties_on_cluster_id() {
        let mut scores = vec![
            ClusterScore { cluster_id: 0, mu: 1.0, sigma: 1.0, member_count: 1, rank: 9 },
            ClusterScore { cluster_id: 1, mu: 1.0, sigma: 1.0, member_count: 1, rank: 9 },
        ];
        rank_clusters(&mut scores, Criterion::Sigma);
        assert_eq!(scores[0].rank, 0);
        assert_eq!(scores[1].rank, 1);
    }

    fn signal(anchor_id: AnchorId, rank: usize, d: f64) -> ScoredSignal {
        ScoredSignal { anchor_id, cluster_id: rank, rank, d }
    }

    #[test]
    fn selection_drops_worst_ranked_signal() {
        let policy = SelectionPolicy {
            criterion: Criterion::Sigma,
            exclude_count: 1,
            min_anchors: 4,
        };
        let burst = vec![
            signal(1, 0, 0.1),
            signal(2, 2, 1.5),
            signal(3, 1, 0.4),
            signal(4, 0, 0.2),
            signal(5, 1, 0.3),
        ];
        let kept = select_signals(&burst, &policy);
        let ids: Vec<_> = kept.iter().map(|s| s.anchor_id).collect();
        assert_eq!(ids, vec![1, 3, 4, 5]);
    }

    #[test]
    fn selection_breaks_record_ties_on_distance_then_anchor() {
        let policy = SelectionPolicy {
            criterion: Criterion::Sigma,
            exclude_count: 2,
            min_anchors: 4,
        };
        let burst = vec![
            signal(1, 1, 0.9),
            signal(2, 1, 0.9),
            signal(3, 1, 0.2),
            signal(4, 0, 0.1),
            signal(5, 0, 0.1),
            signal(6, 0, 0.1),
        ];
        // Both drops come from rank 1; anchors 1 and 2 tie on d = 0.9 so the
        // larger anchor id goes first, then anchor 1.
        let kept = select_signals(&burst, &policy);
        let ids: Vec<_> = kept.iter().map(|s| s.anchor_id).collect();
        assert_eq!(ids, vec![3, 4, 5, 6]);
    }

    #[test]
    fn selection_falls_back_to_all_when_too_few_would_remain() {
        let policy = SelectionPolicy {
            criterion: Criterion::Sigma,
            exclude_count: 2,
            min_anchors: 4,
        };
        let burst = vec![
            signal(1, 3, 2.0),
            signal(2, 2, 1.0),
            signal(3, 1, 0.5),
            signal(4, 0, 0.1),
            signal(5, 0, 0.2),
        ];
        // Dropping 2 of 5 would leave 3 < 4: keep everything.
        assert_eq!(select_signals(&burst, &policy).len(), 5);

        // With E = 0 the burst is always unchanged.
        let none = SelectionPolicy { exclude_count: 0, ..policy };
        assert_eq!(select_signals(&burst, &none).len(), 5);
    }

    #[test]
    fn build_selection_marks_worst_per_burst() {
        // Two bursts of five records; anchors map 1:1 onto clusters so each
        // burst's worst record is the one in the worst-ranked cluster.
        let mut records = Vec::new();
        for t in 0..2u64 {
            for a in 0..5u32 {
                records.push(CirRecord {
                    time_idx: t,
                    anchor_id: a,
                    taps: vec![0.0; 16],
                    fp_idx: 10.0,
                    pp_idx: 10.0 + a as f64,
                    t_s: 1e-9,
                });
            }
        }
        let labels: Vec<usize> = records.iter().map(|r| r.anchor_id as usize).collect();
        let d: Vec<f64> = records.iter().map(path_distance).collect();
        let mut scores = cluster_stats(&d, &labels, 5).unwrap();
        rank_clusters(&mut scores, Criterion::Mu);
        let policy = SelectionPolicy {
            criterion: Criterion::Mu,
            exclude_count: 1,
            min_anchors: 4,
        };
        let entries = build_selection(&records, &labels, &scores, &policy).unwrap();
        assert_eq!(entries.len(), 10);
        for e in &entries {
            // Anchor 4 has the largest mean path distance, so it is dropped
            // in both bursts.
            assert_eq!(e.retained, e.key.anchor_id != 4, "{e:?}");
        }

        // Mismatched labels are rejected.
        assert!(build_selection(&records, &labels[1..], &scores, &policy).is_err());
    }

    #[test]
    fn policy_requires_min_anchors_of_four() {
        let bad = SelectionPolicy {
            criterion: Criterion::Mu,
            exclude_count: 1,
            min_anchors: 3,
        };
        assert!(bad.validate().is_err());
        let good = SelectionPolicy { min_anchors: 4, ..bad };
        assert!(good.validate().is_ok());
    }
}
