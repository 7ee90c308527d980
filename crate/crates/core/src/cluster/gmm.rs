//! Diagonal-covariance Gaussian mixtures fit by expectation-maximization.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)] // required in pure no_std builds; std in the graph shadows these with inherent methods
use num_traits::Float;

use super::kmeans::kmeans_fit;
use crate::error::ConfigError;
use crate::mat::Mat;

const LOG_2PI: f64 = 1.8378770664093453;

/// Mixture parameters: one weight, mean row, and variance row per component.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GmmModel {
    pub weights: Vec<f64>,
    pub means: Mat,
    pub variances: Mat,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GmmFit {
    pub model: GmmModel,
    /// Posterior component probabilities per point, rows summing to 1,
    /// consistent with the final model.
    pub responsibilities: Mat,
    /// Total log-likelihood at each E-step; non-decreasing.
    pub log_likelihood_history: Vec<f64>,
    /// Number of M-steps performed.
    pub iterations: usize,
}

pub fn gmm_fit(
    points: &Mat,
    k: usize,
    seed: u64,
    max_iters: usize,
    tol: f64,
    var_floor: f64,
) -> Result<GmmFit, ConfigError> {
    let n = points.rows;
    let d = points.cols;
    if k == 0 {
        return Err(ConfigError("k must be positive".into()));
    }
    if n < k {
        return Err(ConfigError(format!("{n} points cannot form {k} components")));
    }
    if !(var_floor > 0.0 && var_floor.is_finite()) {
        return Err(ConfigError("variance floor must be positive".into()));
    }
    if !points.is_finite() {
        return Err(ConfigError("points contain non-finite values".into()));
    }

    // Initialize from a short k-means run: its centroids become the means,
    // its cluster fractions the weights, and the global per-dimension
    // variance seeds every component.
    let km = kmeans_fit(points, k, seed, 20, 1e-9)?;
    let mut counts = vec![0usize; k];
    for &l in &km.labels {
        counts[l] += 1;
    }
    let weights: Vec<f64> = {
        let raw: Vec<f64> = counts
            .iter()
            .map(|&c| (c as f64 / n as f64).max(1e-6))
            .collect();
        let s: f64 = raw.iter().sum();
        raw.into_iter().map(|w| w / s).collect()
    };
    let mut global_var = vec![0.0f64; d];
    let mut mean = vec![0.0f64; d];
    for row in points.iter_rows() {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    for row in points.iter_rows() {
        for ((g, v), m) in global_var.iter_mut().zip(row).zip(&mean) {
            let dev = v - m;
            *g += dev * dev;
        }
    }
    let mut variances = Mat::zeros(k, d);
    for j in 0..k {
        for (dst, g) in variances.row_mut(j).iter_mut().zip(&global_var) {
            *dst = (g / n as f64).max(var_floor);
        }
    }
    let mut model = GmmModel {
        weights,
        means: km.centroids.coords,
        variances,
    };

    let mut history = Vec::new();
    let mut iterations = 0;
    let mut responsibilities;
    loop {
        let (resp, ll) = e_step(points, &model);
        responsibilities = resp;
        history.push(ll);
        let len = history.len();
        let converged = len >= 2 && (history[len - 1] - history[len - 2]).abs() < tol;
        if converged || iterations == max_iters {
            break;
        }
        model = m_step(points, &responsibilities, &model, var_floor);
        iterations += 1;
    }

    Ok(GmmFit {
        model,
        responsibilities,
        log_likelihood_history: history,
        iterations,
    })
}

/// Posterior responsibilities and total log-likelihood under `model`,
/// computed with the log-sum-exp trick.
fn e_step(points: &Mat, model: &GmmModel) -> (Mat, f64) {
    let n = points.rows;
    let k = model.weights.len();
    let mut resp = Mat::zeros(n, k);
    let mut total_ll = 0.0;
    let log_w: Vec<f64> = model.weights.iter().map(|w| w.max(1e-300).ln()).collect();
    for i in 0..n {
        let x = points.row(i);
        let row = resp.row_mut(i);
        for (j, r) in row.iter_mut().enumerate() {
            let mu = model.means.row(j);
            let var = model.variances.row(j);
            let mut lp = log_w[j];
            for ((xv, mv), vv) in x.iter().zip(mu).zip(var) {
                let dev = xv - mv;
                lp -= 0.5 * (LOG_2PI + vv.ln() + dev * dev / vv);
            }
            *r = lp;
        }
        let max = row.iter().fold(f64::NEG_INFINITY, |m, v| m.max(*v));
        let sum_exp: f64 = row.iter().map(|v| (v - max).exp()).sum();
        let ll = max + sum_exp.ln();
        for r in row.iter_mut() {
            *r = (*r - ll).exp();
        }
        total_ll += ll;
    }
    (resp, total_ll)
}

/// Weighted maximum-likelihood update. A component whose responsibility mass
/// vanishes keeps its previous mean and variance.
fn m_step(points: &Mat, resp: &Mat, prev: &GmmModel, var_floor: f64) -> GmmModel {
    let n = points.rows;
    let d = points.cols;
    let k = prev.weights.len();
    let mut mass = vec![0.0f64; k];
    let mut means = Mat::zeros(k, d);
    for i in 0..n {
        let x = points.row(i);
        for j in 0..k {
            let r = resp.get(i, j);
            mass[j] += r;
            for (m, v) in means.row_mut(j).iter_mut().zip(x) {
                *m += r * v;
            }
        }
    }
    let mut variances = Mat::zeros(k, d);
    for j in 0..k {
        if mass[j] < 1e-10 {
            means.row_mut(j).copy_from_slice(prev.means.row(j));
            variances.row_mut(j).copy_from_slice(prev.variances.row(j));
            continue;
        }
        for m in means.row_mut(j) {
            *m /= mass[j];
        }
    }
    for i in 0..n {
        let x = points.row(i);
        for j in 0..k {
            if mass[j] < 1e-10 {
                continue;
            }
            let r = resp.get(i, j);
            let mu = means.row(j);
            for ((vsum, xv), mv) in variances.row_mut(j).iter_mut().zip(x).zip(mu) {
                let dev = xv - mv;
                *vsum += r * dev * dev;
            }
        }
    }
    for j in 0..k {
        if mass[j] < 1e-10 {
            continue;
        }
        for v in variances.row_mut(j) {
            *v = (*v / mass[j]).max(var_floor);
        }
    }
    GmmModel {
        weights: mass.iter().map(|m| m / n as f64).collect(),
        means,
        variances,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn two_blobs(seed: u64) -> Mat {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = Mat::zeros(120, 1);
        for i in 0..60 {
            m.set(i, 0, rng.random_range(-0.8..0.8));
            m.set(60 + i, 0, 10.0 + rng.random_range(-0.8..0.8));
        }
        m
    }

    #[test]
    fn two_component_fit_recovers_the_blobs() {
        let points = two_blobs(1);
        let fit = gmm_fit(&points, 2, 3, 100, 1e-9, 1e-6).unwrap();
        let mut means: Vec<f64> = (0..2).map(|j| fit.model.means.get(j, 0)).collect();
        means.sort_by(f64::total_cmp);
        assert!(means[0].abs() < 0.3, "{means:?}");
        assert!((means[1] - 10.0).abs() < 0.3, "{means:?}");
        for w in &fit.model.weights {
            assert!((w - 0.5).abs() < 0.05);
        }
        // Responsibilities of far-apart points are near-certain.
        assert!(fit.responsibilities.row(0).iter().any(|r| *r > 0.999));
    }

    #[test]
    fn log_likelihood_never_decreases() {
        let points = two_blobs(7);
        let fit = gmm_fit(&points, 3, 11, 200, 1e-12, 1e-6).unwrap();
        for w in fit.log_likelihood_history.windows(2) {
            assert!(w[1] >= w[0] - 1e-9, "{:?}", fit.log_likelihood_history);
        }
        // Rows of the responsibility matrix are distributions.
        for i in 0..fit.responsibilities.rows {
            let s: f64 = fit.responsibilities.row(i).iter().sum();
            assert!((s - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn single_component_is_the_closed_form() {
        let points = Mat::from_rows(&[&[1.0, 5.0], &[2.0, 5.0], &[3.0, 5.0], &[6.0, 5.0]]);
        let fit = gmm_fit(&points, 1, 0, 50, 1e-12, 1e-6).unwrap();
        assert_eq!(fit.model.weights, vec![1.0]);
        // Mean is the sample mean.
        assert!((fit.model.means.get(0, 0) - 3.0).abs() < 1e-12);
        assert!((fit.model.means.get(0, 1) - 5.0).abs() < 1e-12);
        // Variance is the population form: mean of squared deviations.
        let expected = (4.0 + 1.0 + 0.0 + 9.0) / 4.0;
        assert!((fit.model.variances.get(0, 0) - expected).abs() < 1e-12);
        // The constant dimension hits the floor.
        assert_eq!(fit.model.variances.get(0, 1), 1e-6);
    }

    #[test]
    fn same_seed_reproduces_the_fit() {
        let points = two_blobs(3);
        let a = gmm_fit(&points, 2, 5, 100, 1e-9, 1e-6).unwrap();
        let b = gmm_fit(&points, 2, 5, 100, 1e-9, 1e-6).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn invalid_arguments_are_rejected() {
        let points = Mat::from_rows(&[&[0.0], &[1.0]]);
        assert!(gmm_fit(&points, 0, 0, 10, 1e-6, 1e-6).is_err());
        assert!(gmm_fit(&points, 3, 0, 10, 1e-6, 1e-6).is_err());
        assert!(gmm_fit(&points, 1, 0, 10, 1e-6, 0.0).is_err());
    }
}
