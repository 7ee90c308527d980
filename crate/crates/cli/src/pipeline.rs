//! The experiment matrix: dataset → windows → pretraining → clustering →
//! scoring → selection → localization → evaluation, for every configured
//! (method, exclusion count) pair, with per-stage artifact files.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use decloc_core::autoenc::{encode_all, pretrain, NetworkParams, PretrainOutcome};
use decloc_core::cluster::dec::{dec_finetune, hard_labels, CentroidInit, DecConfig};
use decloc_core::cluster::gmm::gmm_fit;
use decloc_core::cluster::kmeans::kmeans_fit;
use decloc_core::data::{preprocess_all, CirWindow, Dataset, SourceKey, ZoneTag};
use decloc_core::eval::{compare_reports, evaluate, ErrorReport, EvalError};
use decloc_core::mat::Mat;
use decloc_core::pca::pca_project;
use decloc_core::score::{
    build_selection, cluster_stats, path_distance, rank_clusters, Criterion,
};
use decloc_core::sim::build_dataset;
use decloc_core::tdoa::{localize_trajectory, PositionEstimate};

use crate::checkpoint::{save_checkpoint, Checkpoint};
use crate::config::{DatasetSource, Method, RunConfig};
use crate::csvio::{self, fmt_f64};
use crate::error::CliError;

/// How deep into the pipeline a command runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum StageBound {
    Dataset,
    Pretrain,
    Cluster,
    Score,
    Localize,
    Evaluate,
}

/// One line of the summary: metrics of a (method, exclusion count) pair,
/// overall or restricted to one zone.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub method: Method,
    /// `None` for the baseline, which ranks nothing.
    pub criterion: Option<Criterion>,
    pub exclude_count: usize,
    /// `None` covers the whole trajectory.
    pub zone: Option<ZoneTag>,
    pub mae: f64,
    pub p75: f64,
    pub p90: f64,
    pub p95: f64,
    pub n: usize,
}

impl ResultRow {
    pub fn zone_str(&self) -> &'static str {
        self.zone.map_or("all", ZoneTag::as_str)
    }

    pub fn criterion_str(&self) -> &'static str {
        self.criterion.map_or("-", Criterion::as_str)
    }
}

/// Runs the full experiment and returns the summary rows.
pub fn run_experiment(cfg: &RunConfig) -> Result<Vec<ResultRow>, CliError> {
    run(cfg, StageBound::Evaluate).map(|rows| rows.expect("evaluate bound returns rows"))
}

/// Runs the pipeline through `bound`, writing the artifacts of every stage
/// it passes. Returns summary rows only when evaluation ran.
pub fn run(cfg: &RunConfig, bound: StageBound) -> Result<Option<Vec<ResultRow>>, CliError> {
    let out = &cfg.out_dir;
    make_dir(out)?;

    let ds = obtain_dataset(cfg)?;
    if matches!(cfg.dataset, DatasetSource::Simulate(_)) || bound == StageBound::Dataset {
        let dir = out.join("dataset");
        make_dir(&dir)?;
        csvio::save_dataset(&ds, &dir)?;
    }
    if bound == StageBound::Dataset {
        return Ok(None);
    }

    let windows =
        preprocess_all(&ds, &cfg.window).map_err(|e| CliError::stage("preprocess", e))?;
    let keys: Vec<SourceKey> = ds.records.iter().map(|r| r.key()).collect();
    let d: Vec<f64> = ds.records.iter().map(path_distance).collect();

    // One pretrained network is shared by every embedding-based method.
    let needs_ae = bound == StageBound::Pretrain
        || cfg.methods.iter().any(|m| {
            matches!(
                m,
                Method::AeKMeans | Method::AeGmm | Method::DecKMeans | Method::DecGmm
            )
        });
    let pre = if needs_ae {
        Some(pretrain_shared(cfg, &windows, out)?)
    } else {
        None
    };
    if bound == StageBound::Pretrain {
        return Ok(None);
    }

    // The baseline always runs first so every later row has its denominator.
    let mut methods = vec![Method::None];
    methods.extend(cfg.methods.iter().copied().filter(|m| *m != Method::None));

    let truth_by_time = ds.ground_truth_by_time();
    let mut rows: Vec<ResultRow> = Vec::new();
    let mut reports: Vec<ErrorReport> = Vec::new();
    let mut baseline: BTreeMap<Option<ZoneTag>, ErrorReport> = BTreeMap::new();

    for method in methods {
        let method_dir = out.join(method.as_str());
        make_dir(&method_dir)?;

        let (labels, k_eff) = match method {
            Method::None => (vec![0; windows.len()], 1),
            _ => {
                let fitted = fit_method(cfg, method, &windows, pre.as_ref().map(|p| &p.params))?;
                csvio::write_labels(&method_dir.join("labels.csv"), &keys, &fitted.labels)?;
                if let Ok(coords) = pca_project(&fitted.points) {
                    csvio::write_embedding(
                        &method_dir.join("embedding.csv"),
                        &keys,
                        &coords,
                        &fitted.labels,
                    )?;
                }
                if let Some(outcome) = fitted.finetune {
                    csvio::write_finetune_history(
                        &method_dir.join("finetune.csv"),
                        &outcome.history,
                    )?;
                    save_checkpoint(
                        &method_dir.join("checkpoint.json"),
                        &Checkpoint::new(outcome.params, Some(outcome.centroids)),
                    )?;
                }
                (fitted.labels, cfg.k)
            }
        };
        if bound == StageBound::Cluster {
            continue;
        }

        let mut scores =
            cluster_stats(&d, &labels, k_eff).map_err(|e| CliError::stage("score", e))?;
        let criterion = match method {
            Method::None => None,
            _ => Some(cfg.criterion),
        };
        rank_clusters(&mut scores, cfg.criterion);
        if method != Method::None {
            csvio::write_scores(&method_dir.join("scores.csv"), &scores)?;
        }

        let e_list: &[usize] = match method {
            Method::None => &[0],
            _ => &cfg.exclude_counts,
        };
        for &e in e_list {
            let policy = cfg.policy(e);
            policy
                .validate()
                .map_err(|err| CliError::stage("select", err))?;
            let selection = build_selection(&ds.records, &labels, &scores, &policy)
                .map_err(|err| CliError::stage("select", err))?;
            if method != Method::None {
                csvio::write_selection(
                    &method_dir.join(format!("selection_e{e}.csv")),
                    &selection,
                )?;
            }
            if bound == StageBound::Score {
                continue;
            }

            let traj = localize_trajectory(&ds, &selection, cfg.reference_anchor, &cfg.solver)
                .map_err(|err| CliError::stage("localize", err))?;
            let annotated: Vec<(PositionEstimate, Option<f64>)> = traj
                .estimates
                .iter()
                .map(|est| {
                    let err = truth_by_time.get(&est.time_idx).map(|gt| {
                        let dx = est.x - gt.position.x;
                        let dy = est.y - gt.position.y;
                        (dx * dx + dy * dy).sqrt()
                    });
                    (*est, err)
                })
                .collect();
            csvio::write_estimates(&method_dir.join(format!("estimates_e{e}.csv")), &annotated)?;
            if bound == StageBound::Localize {
                continue;
            }

            for zone in [None, Some(ZoneTag::OpenSpace), Some(ZoneTag::Warehouse)] {
                let report = match evaluate(&traj.estimates, &ds.ground_truth, zone) {
                    Ok(report) => report,
                    Err(EvalError::EmptyReport) => continue,
                    Err(err) => return Err(CliError::stage("evaluate", err)),
                };
                rows.push(ResultRow {
                    method,
                    criterion,
                    exclude_count: e,
                    zone,
                    mae: report.mae,
                    p75: report.p75,
                    p90: report.p90,
                    p95: report.p95,
                    n: report.n,
                });
                if method == Method::None {
                    baseline.insert(zone, report.clone());
                }
                reports.push(report);
            }
        }
    }

    if bound < StageBound::Evaluate {
        return Ok(None);
    }

    write_summary_csv(&out.join("summary.csv"), &rows)?;
    write_summary_table(&out.join("summary.txt"), &rows, &reports, &baseline)?;
    Ok(Some(rows))
}

fn make_dir(path: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn obtain_dataset(cfg: &RunConfig) -> Result<Dataset, CliError> {
    match &cfg.dataset {
        DatasetSource::Simulate(scenario) => {
            build_dataset(scenario).map_err(|e| CliError::stage("simulate", e))
        }
        DatasetSource::Load(path) => csvio::load_dataset(path),
    }
}

fn pretrain_shared(
    cfg: &RunConfig,
    windows: &[CirWindow],
    out: &Path,
) -> Result<PretrainOutcome, CliError> {
    let stage = |e: &dyn std::fmt::Display| CliError::Stage {
        stage: "pretrain",
        message: e.to_string(),
    };
    let init = NetworkParams::conv(
        cfg.window.width,
        cfg.latent_dim,
        cfg.stage_seed("network-init"),
    )
    .map_err(|e| stage(&e))?;
    let pre = pretrain(init, windows, &cfg.pretrain).map_err(|e| stage(&e))?;
    let dir = out.join("pretrain");
    make_dir(&dir)?;
    save_checkpoint(
        &dir.join("checkpoint.json"),
        &Checkpoint::new(pre.params.clone(), None),
    )?;
    csvio::write_epoch_losses(&dir.join("loss.csv"), &pre.epoch_losses)?;
    Ok(pre)
}

/// Clustering output of one method: hard labels plus the points they were
/// computed in, for the two-component export.
struct FittedMethod {
    labels: Vec<usize>,
    points: Mat,
    finetune: Option<decloc_core::cluster::dec::DecOutcome>,
}

fn windows_matrix(windows: &[CirWindow]) -> Mat {
    let rows: Vec<&[f64]> = windows.iter().map(|w| w.values.as_slice()).collect();
    Mat::from_rows(&rows)
}

fn fit_method(
    cfg: &RunConfig,
    method: Method,
    windows: &[CirWindow],
    pretrained: Option<&NetworkParams>,
) -> Result<FittedMethod, CliError> {
    let stage = |e: &dyn std::fmt::Display| CliError::Stage {
        stage: "cluster",
        message: format!("{}: {e}", method.as_str()),
    };
    let seed = cfg.stage_seed(&format!("cluster-{}", method.as_str()));
    let kmeans = |points: &Mat| {
        kmeans_fit(points, cfg.k, seed, cfg.kmeans_max_iters, cfg.kmeans_tol)
            .map(|fit| fit.labels)
            .map_err(|e| stage(&e))
    };
    let gmm = |points: &Mat| {
        gmm_fit(
            points,
            cfg.k,
            seed,
            cfg.gmm_max_iters,
            cfg.gmm_tol,
            cfg.gmm_var_floor,
        )
        .map(|fit| hard_labels(&fit.responsibilities))
        .map_err(|e| stage(&e))
    };
    let encode = |params: &NetworkParams| encode_all(params, windows).map_err(|e| stage(&e));
    let need_pre = || {
        pretrained.ok_or_else(|| CliError::Stage {
            stage: "cluster",
            message: format!("{} needs a pretrained network", method.as_str()),
        })
    };

    match method {
        Method::None => unreachable!("the baseline is not fitted"),
        Method::KMeans => {
            let points = windows_matrix(windows);
            Ok(FittedMethod {
                labels: kmeans(&points)?,
                points,
                finetune: None,
            })
        }
        Method::Gmm => {
            let points = windows_matrix(windows);
            Ok(FittedMethod {
                labels: gmm(&points)?,
                points,
                finetune: None,
            })
        }
        Method::AeKMeans => {
            let points = encode(need_pre()?)?;
            Ok(FittedMethod {
                labels: kmeans(&points)?,
                points,
                finetune: None,
            })
        }
        Method::AeGmm => {
            let points = encode(need_pre()?)?;
            Ok(FittedMethod {
                labels: gmm(&points)?,
                points,
                finetune: None,
            })
        }
        Method::DecKMeans | Method::DecGmm => {
            let dec_cfg = DecConfig {
                init: if method == Method::DecKMeans {
                    CentroidInit::KMeans
                } else {
                    CentroidInit::Gmm
                },
                ..cfg.finetune
            };
            let outcome = dec_finetune(need_pre()?.clone(), windows, cfg.k, &dec_cfg)
                .map_err(|e| stage(&e))?;
            let points = encode(&outcome.params)?;
            Ok(FittedMethod {
                labels: outcome.labels.clone(),
                points,
                finetune: Some(outcome),
            })
        }
    }
}

fn write_summary_csv(path: &Path, rows: &[ResultRow]) -> Result<(), CliError> {
    let mut lines = String::from("method,criterion,e,zone,mae_m,p75_m,p90_m,p95_m,n\n");
    for r in rows {
        lines.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.method.as_str(),
            r.criterion_str(),
            r.exclude_count,
            r.zone_str(),
            fmt_f64(r.mae),
            fmt_f64(r.p75),
            fmt_f64(r.p90),
            fmt_f64(r.p95),
            r.n,
        ));
    }
    std::fs::write(path, lines).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Renders the aligned table, one row per summary line, with relative MAE
/// and 95th-percentile improvement against the baseline of the same zone.
fn write_summary_table(
    path: &Path,
    rows: &[ResultRow],
    reports: &[ErrorReport],
    baseline: &BTreeMap<Option<ZoneTag>, ErrorReport>,
) -> Result<(), CliError> {
    let header = [
        "method", "criterion", "e", "zone", "mae_m", "p75_m", "p90_m", "p95_m", "n",
        "mae_gain", "p95_gain",
    ];
    let mut cells: Vec<Vec<String>> = vec![header.map(String::from).to_vec()];
    for (row, report) in rows.iter().zip(reports) {
        let delta = baseline.get(&row.zone).map(|base| compare_reports(base, report));
        let pct = |v: Option<Option<f64>>| match v {
            Some(Some(d)) => format!("{:+.1}%", d * 100.0),
            _ => "-".to_owned(),
        };
        cells.push(vec![
            row.method.as_str().to_owned(),
            row.criterion_str().to_owned(),
            row.exclude_count.to_string(),
            row.zone_str().to_owned(),
            format!("{:.4}", row.mae),
            format!("{:.4}", row.p75),
            format!("{:.4}", row.p90),
            format!("{:.4}", row.p95),
            row.n.to_string(),
            pct(delta.map(|d| d.mae)),
            pct(delta.map(|d| d.p95)),
        ]);
    }
    let widths: Vec<usize> = (0..header.len())
        .map(|c| cells.iter().map(|row| row[c].len()).max().unwrap_or(0))
        .collect();
    let mut text = String::new();
    for row in &cells {
        let mut line = String::new();
        for (c, cell) in row.iter().enumerate() {
            if c > 0 {
                line.push_str("  ");
            }
            line.push_str(&format!("{:>width$}", cell, width = widths[c]));
        }
        text.push_str(line.trim_end());
        text.push('\n');
    }
    std::fs::write(path, text).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Artifact locations of a finished run, for tests and callers.
pub fn summary_paths(out_dir: &Path) -> (PathBuf, PathBuf) {
    (out_dir.join("summary.csv"), out_dir.join("summary.txt"))
}
