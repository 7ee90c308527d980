//! Deep embedded clustering: Student-t soft assignments, the sharpened
//! target distribution, the KL objective with its analytic gradients, and
//! the joint reconstruction/clustering fine-tuning loop.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)] // required in pure no_std builds; std in the graph shadows these with inherent methods
use num_traits::Float;

use super::gmm::gmm_fit;
use super::kmeans::kmeans_fit;
use super::{argmax_rows, Centroids};
use crate::autoenc::layers::FeatureMap;
use crate::autoenc::{
    apply_network_grads, backward_sample, encode_all, forward_sample, AutoencError,
    BatchScheduler, GradBuffer, NetworkParams, Optimizer, OptimizerKind,
};
use crate::data::CirWindow;
use crate::error::{ConfigError, ShapeError, TrainingError};
use crate::mat::{dist_sq, Mat};
use crate::seed::derive_seed;

/// Soft assignment of every embedding to every centroid under a Student-t
/// kernel with one degree of freedom:
/// `q_ij = (1 + |z_i - l_j|^2)^-1 / sum_j' (1 + |z_i - l_j'|^2)^-1`.
/// Rows sum to 1.
pub fn soft_assign(z: &Mat, centroids: &Centroids) -> Mat {
    let n = z.rows;
    let k = centroids.k();
    let mut q = Mat::zeros(n, k);
    for i in 0..n {
        let zi = z.row(i);
        let row = q.row_mut(i);
        let mut sum = 0.0;
        for (j, qv) in row.iter_mut().enumerate() {
            let u = 1.0 / (1.0 + dist_sq(zi, centroids.coords.row(j)));
            *qv = u;
            sum += u;
        }
        for qv in row.iter_mut() {
            *qv /= sum;
        }
    }
    q
}

/// Sharpened target: `p_ij ∝ q_ij^2 / f_j` with `f_j = sum_i q_ij`, rows
/// normalized to 1. With a single row the target equals the assignment.
pub fn target_distribution(q: &Mat) -> Mat {
    let (n, k) = (q.rows, q.cols);
    if n == 1 {
        // A single row is its own column frequency, so the sharpening
        // cancels algebraically; returning the input keeps the identity
        // exact in floating point too.
        return q.clone();
    }
    let mut freq = alloc::vec![0.0f64; k];
    for row in q.iter_rows() {
        for (f, v) in freq.iter_mut().zip(row) {
            *f += v;
        }
    }
    let mut p = Mat::zeros(n, k);
    for i in 0..n {
        let qi = q.row(i);
        let row = p.row_mut(i);
        let mut sum = 0.0;
        for ((pv, qv), f) in row.iter_mut().zip(qi).zip(&freq) {
            *pv = qv * qv / f;
            sum += *pv;
        }
        for pv in row.iter_mut() {
            *pv /= sum;
        }
    }
    p
}

/// `KL(P || Q) = sum_ij p_ij ln(p_ij / q_ij)`, with `0 ln 0 = 0`.
pub fn kl_divergence(p: &Mat, q: &Mat) -> f64 {
    debug_assert_eq!((p.rows, p.cols), (q.rows, q.cols));
    let mut s = 0.0;
    for (pv, qv) in p.data.iter().zip(&q.data) {
        if *pv > 0.0 {
            s += pv * (pv / qv).ln();
        }
    }
    s
}

/// KL objective value and gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct KlLoss {
    pub value: f64,
    /// Gradient with respect to every embedding row.
    pub grad_z: Mat,
    /// Gradient with respect to every centroid row.
    pub grad_centroids: Mat,
}

/// Evaluates the KL objective at (`z`, `centroids`) against the frozen
/// target `p`, recomputing the soft assignment internally, and returns the
/// analytic gradients:
/// `dL/dz_i  =  2 sum_j u_ij (p_ij - q_ij)(z_i - l_j)`
/// `dL/dl_j  = -2 sum_i u_ij (p_ij - q_ij)(z_i - l_j)`
/// with `u_ij = (1 + |z_i - l_j|^2)^-1`.
pub fn kl_loss(p: &Mat, z: &Mat, centroids: &Centroids) -> KlLoss {
    let n = z.rows;
    let d = z.cols;
    let k = centroids.k();
    debug_assert_eq!(p.rows, n);
    debug_assert_eq!(p.cols, k);
    let q = soft_assign(z, centroids);
    let value = kl_divergence(p, &q);
    let mut grad_z = Mat::zeros(n, d);
    let mut grad_centroids = Mat::zeros(k, d);
    for i in 0..n {
        let zi = z.row(i);
        for j in 0..k {
            let lj = centroids.coords.row(j);
            let u = 1.0 / (1.0 + dist_sq(zi, lj));
            let w = 2.0 * u * (p.get(i, j) - q.get(i, j));
            for ((gz, gl), (zv, lv)) in grad_z
                .row_mut(i)
                .iter_mut()
                .zip(grad_centroids.row_mut(j).iter_mut())
                .zip(zi.iter().zip(lj))
            {
                let diff = zv - lv;
                *gz += w * diff;
                *gl -= w * diff;
            }
        }
    }
    KlLoss {
        value,
        grad_z,
        grad_centroids,
    }
}

/// Most likely cluster per row; ties go to the lowest cluster index.
pub fn hard_labels(q: &Mat) -> Vec<usize> {
    argmax_rows(q)
}

/// How the cluster centres are initialized from the pretrained embeddings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum CentroidInit {
    /// Centres of a k-means fit.
    KMeans,
    /// Means of a diagonal-covariance Gaussian mixture fit.
    Gmm,
}

impl CentroidInit {
    pub fn as_str(self) -> &'static str {
        match self {
            CentroidInit::KMeans => "kmeans",
            CentroidInit::Gmm => "gmm",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "kmeans" => Some(CentroidInit::KMeans),
            "gmm" => Some(CentroidInit::Gmm),
            _ => None,
        }
    }
}

/// Settings for the joint fine-tuning phase. The objective per batch is
/// `(1 - lambda) * L_r + lambda * L_c` where `L_r` is the mean squared
/// reconstruction-error norm and `L_c` the mean per-row KL divergence to the
/// frozen target distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecConfig {
    /// Mixing weight of the clustering term, in `[0, 1]`.
    pub lambda: f64,
    /// Mini-batch optimization steps to run.
    pub total_iters: usize,
    /// The target distribution is recomputed from the full data whenever
    /// `iter % target_refresh == 0`.
    pub target_refresh: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub optimizer: OptimizerKind,
    pub init: CentroidInit,
    pub seed: u64,
}

impl Default for DecConfig {
    fn default() -> Self {
        Self {
            lambda: 0.1,
            total_iters: 1500,
            target_refresh: 100,
            learning_rate: 1e-3,
            batch_size: 64,
            optimizer: OptimizerKind::Adam,
            init: CentroidInit::KMeans,
            seed: 0,
        }
    }
}

/// Batch losses logged at one fine-tuning step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecIterRecord {
    pub iter: usize,
    pub recon_loss: f64,
    pub cluster_loss: f64,
    pub combined_loss: f64,
}

/// Result of the fine-tuning phase.
#[derive(Debug, Clone, PartialEq)]
pub struct DecOutcome {
    pub params: NetworkParams,
    pub centroids: Centroids,
    /// Hard cluster of every input window under the final model, in window
    /// order.
    pub labels: Vec<usize>,
    pub history: Vec<DecIterRecord>,
    /// Iterations at which the target distribution was recomputed.
    pub refresh_iters: Vec<usize>,
}

fn init_centroids(
    z: &Mat,
    k: usize,
    init: CentroidInit,
    seed: u64,
) -> Result<Centroids, ConfigError> {
    match init {
        CentroidInit::KMeans => Ok(kmeans_fit(z, k, seed, 100, 1e-9)?.centroids),
        CentroidInit::Gmm => Ok(Centroids {
            coords: gmm_fit(z, k, seed, 100, 1e-8, 1e-6)?.model.means,
        }),
    }
}

/// Combined batch loss and all of its gradients.
///
/// `targets` holds the frozen target rows for exactly the batch windows.
/// Network gradients accumulate into `grads` (reset it first); the centroid
/// gradient is written into `centroid_grad`. Returns the batch-mean
/// reconstruction and clustering losses.
pub(crate) fn combined_loss_and_grads(
    params: &NetworkParams,
    batch: &[&[f64]],
    targets: &Mat,
    centroids: &Centroids,
    lambda: f64,
    grads: &mut GradBuffer,
    centroid_grad: &mut [f64],
) -> Result<(f64, f64), ShapeError> {
    let scale = 1.0 / batch.len().max(1) as f64;
    let mut forwards = Vec::with_capacity(batch.len());
    for x in batch {
        forwards.push(forward_sample(params, x)?);
    }
    let mut z = Mat::zeros(batch.len(), params.latent_dim);
    for (i, fwd) in forwards.iter().enumerate() {
        z.row_mut(i).copy_from_slice(&fwd.latent.data);
    }
    let kl = kl_loss(targets, &z, centroids);

    let mut recon = 0.0;
    let mut extra = vec![0.0f64; params.latent_dim];
    for (i, (x, fwd)) in batch.iter().zip(&forwards).enumerate() {
        let mut grad_out = FeatureMap::zeros(1, params.input_len);
        for ((g, xhat), xv) in grad_out.data.iter_mut().zip(&fwd.output.data).zip(*x) {
            let diff = xhat - xv;
            recon += diff * diff * scale;
            *g = 2.0 * (1.0 - lambda) * diff * scale;
        }
        for (e, gz) in extra.iter_mut().zip(kl.grad_z.row(i)) {
            *e = lambda * scale * gz;
        }
        backward_sample(params, fwd, grad_out, Some(&extra), grads);
    }
    for (cg, g) in centroid_grad.iter_mut().zip(&kl.grad_centroids.data) {
        *cg = lambda * scale * g;
    }
    Ok((recon, kl.value * scale))
}

/// Jointly refines the network and `k` cluster centres against the combined
/// objective.
///
/// Centres start from a k-means or mixture fit of the pretrained embeddings
/// (seeded independently of the batch order). The target distribution is
/// frozen between refreshes. With `lambda = 0` this reduces exactly to
/// continued reconstruction training and the centres never move. A non-finite
/// batch loss aborts with the number of steps that completed cleanly.
pub fn dec_finetune(
    params: NetworkParams,
    windows: &[CirWindow],
    k: usize,
    cfg: &DecConfig,
) -> Result<DecOutcome, AutoencError> {
    if !(0.0..=1.0).contains(&cfg.lambda) {
        return Err(ConfigError(format!(
            "mixing weight must lie in [0, 1], got {}",
            cfg.lambda
        ))
        .into());
    }
    if cfg.target_refresh == 0 {
        return Err(ConfigError("target refresh interval must be positive".into()).into());
    }
    if cfg.batch_size == 0 {
        return Err(ConfigError("batch size must be positive".into()).into());
    }
    if windows.is_empty() {
        return Err(ConfigError("cannot fine-tune on an empty window set".into()).into());
    }
    for w in windows {
        if w.values.len() != params.input_len {
            return Err(AutoencError::Shape(ShapeError {
                expected: params.input_len,
                got: w.values.len(),
            }));
        }
    }

    let mut params = params;
    let z0 = encode_all(&params, windows)?;
    let mut centroids = init_centroids(&z0, k, cfg.init, derive_seed(cfg.seed, "dec-centroid-init"))?;

    let mut slot_sizes = params.tensor_sizes();
    let centroid_slot = slot_sizes.len();
    slot_sizes.push(k * params.latent_dim);
    let mut opt = Optimizer::new(cfg.optimizer, cfg.learning_rate, &slot_sizes);
    let mut scheduler = BatchScheduler::new(windows.len(), cfg.seed);
    let mut grads = GradBuffer::new(&params);
    let mut centroid_grad = vec![0.0f64; k * params.latent_dim];

    let mut targets = Mat::zeros(0, 0);
    let mut history = Vec::with_capacity(cfg.total_iters);
    let mut refresh_iters = Vec::new();

    for iter in 0..cfg.total_iters {
        if iter % cfg.target_refresh == 0 {
            let z = encode_all(&params, windows)?;
            targets = target_distribution(&soft_assign(&z, &centroids));
            refresh_iters.push(iter);
        }
        let idx = scheduler.next_batch(cfg.batch_size).to_vec();
        let batch: Vec<&[f64]> = idx.iter().map(|&i| windows[i].values.as_slice()).collect();
        let mut batch_targets = Mat::zeros(idx.len(), k);
        for (r, &i) in idx.iter().enumerate() {
            batch_targets.row_mut(r).copy_from_slice(targets.row(i));
        }
        grads.reset();
        let (recon, cluster) = combined_loss_and_grads(
            &params,
            &batch,
            &batch_targets,
            &centroids,
            cfg.lambda,
            &mut grads,
            &mut centroid_grad,
        )?;
        let combined = (1.0 - cfg.lambda) * recon + cfg.lambda * cluster;
        if !combined.is_finite() {
            return Err(TrainingError { last_finite: iter }.into());
        }
        opt.begin_step();
        apply_network_grads(&mut params, &grads, &mut opt);
        opt.apply(centroid_slot, &mut centroids.coords.data, &centroid_grad);
        history.push(DecIterRecord {
            iter,
            recon_loss: recon,
            cluster_loss: cluster,
            combined_loss: combined,
        });
    }

    let z = encode_all(&params, windows)?;
    let labels = hard_labels(&soft_assign(&z, &centroids));
    Ok(DecOutcome {
        params,
        centroids,
        labels,
        history,
        refresh_iters,
    })
}
