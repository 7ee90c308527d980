//! Unsupervised clustering of CIR embeddings.

pub mod dec;
pub mod gmm;
pub mod kmeans;

use alloc::vec::Vec;

use crate::mat::Mat;

/// Cluster centres in embedding space, one row per cluster.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Centroids {
    pub coords: Mat,
}

impl Centroids {
    pub fn k(&self) -> usize {
        self.coords.rows
    }

    pub fn dim(&self) -> usize {
        self.coords.cols
    }
}

/// Row-wise argmax; ties go to the lowest index.
pub(crate) fn argmax_rows(m: &Mat) -> Vec<usize> {
    m.iter_rows()
        .map(|row| {
            let mut best = 0;
            for (j, v) in row.iter().enumerate() {
                if *v > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn argmax_breaks_ties_low() {
        let m = Mat::from_rows(&[&[0.2, 0.5, 0.3], &[0.4, 0.4, 0.2], &[0.1, 0.2, 0.7]]);
        assert_eq!(argmax_rows(&m), alloc::vec![1, 0, 2]);
    }
}
