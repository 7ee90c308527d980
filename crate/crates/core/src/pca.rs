//! Principal component projection for embedding diagnostics.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)] // required in pure no_std builds; std in the graph shadows these with inherent methods
use num_traits::Float;

use crate::error::DegenerateError;
use crate::mat::Mat;

/// Projects `points` (one row per sample) onto their top two principal
/// components.
///
/// Component signs are normalized so each component's largest-magnitude
/// loading is positive. With effectively one-dimensional input the second
/// output column is zero.
pub fn pca_project(points: &Mat) -> Result<Mat, DegenerateError> {
    let n = points.rows;
    let d = points.cols;
    if n < 2 {
        return Err(DegenerateError(format!(
            "need at least 2 points for a projection, got {n}"
        )));
    }
    if d == 0 {
        return Err(DegenerateError("points have no features".into()));
    }

    // Center the columns.
    let mut mean = vec![0.0f64; d];
    for row in points.iter_rows() {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let mut centered = points.clone();
    for i in 0..n {
        for (v, m) in centered.row_mut(i).iter_mut().zip(&mean) {
            *v -= m;
        }
    }

    // Sample covariance.
    let mut cov = Mat::zeros(d, d);
    for row in centered.iter_rows() {
        for p in 0..d {
            for q in p..d {
                cov.data[p * d + q] += row[p] * row[q];
            }
        }
    }
    for p in 0..d {
        for q in p..d {
            let v = cov.get(p, q) / (n - 1) as f64;
            cov.set(p, q, v);
            cov.set(q, p, v);
        }
    }
    let total_var: f64 = (0..d).map(|i| cov.get(i, i)).sum();
    if total_var <= 0.0 {
        return Err(DegenerateError("all points coincide".into()));
    }

    let (eigenvalues, vectors) = jacobi_eigh(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eigenvalues[b].total_cmp(&eigenvalues[a]));

    let mut components = [vec![0.0f64; d], vec![0.0f64; d]];
    for (c, comp) in components.iter_mut().enumerate() {
        if c >= d {
            break; // one-dimensional input: leave the second component zero
        }
        let col = order[c];
        for (p, v) in comp.iter_mut().enumerate() {
            *v = vectors.get(p, col);
        }
        // Largest-magnitude loading points in the positive direction.
        let mut best = 0;
        for p in 1..d {
            if comp[p].abs() > comp[best].abs() {
                best = p;
            }
        }
        if comp[best] < 0.0 {
            for v in comp.iter_mut() {
                *v = -*v;
            }
        }
    }

    let mut out = Mat::zeros(n, 2);
    for i in 0..n {
        let row = centered.row(i);
        let y0: f64 = row.iter().zip(&components[0]).map(|(a, b)| a * b).sum();
        let y1: f64 = row.iter().zip(&components[1]).map(|(a, b)| a * b).sum();
        out.set(i, 0, y0);
        out.set(i, 1, y1);
    }
    Ok(out)
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix. Returns the
/// eigenvalues and the matrix whose columns are the eigenvectors.
fn jacobi_eigh(mut a: Mat) -> (Vec<f64>, Mat) {
    let d = a.rows;
    let mut v = Mat::zeros(d, d);
    for i in 0..d {
        v.set(i, i, 1.0);
    }
    let scale: f64 = a.data.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-300);
    for _sweep in 0..64 {
        let off: f64 = (0..d)
            .flat_map(|p| ((p + 1)..d).map(move |q| (p, q)))
            .map(|(p, q)| a.get(p, q) * a.get(p, q))
            .sum();
        if off.sqrt() <= 1e-14 * scale {
            break;
        }
        for p in 0..d {
            for q in (p + 1)..d {
                let apq = a.get(p, q);
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let tau = (a.get(q, q) - a.get(p, p)) / (2.0 * apq);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                for i in 0..d {
                    let aip = a.get(i, p);
                    let aiq = a.get(i, q);
                    a.set(i, p, c * aip - s * aiq);
                    a.set(i, q, s * aip + c * aiq);
                }
                for j in 0..d {
                    let apj = a.get(p, j);
                    let aqj = a.get(q, j);
                    a.set(p, j, c * apj - s * aqj);
                    a.set(q, j, s * apj + c * aqj);
                }
                for i in 0..d {
                    let vip = v.get(i, p);
                    let viq = v.get(i, q);
                    v.set(i, p, c * vip - s * viq);
                    v.set(i, q, s * vip + c * viq);
                }
            }
        }
    }
    let eigenvalues: Vec<f64> = (0..d).map(|i| a.get(i, i)).collect();
    (eigenvalues, v)
}
