use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use super::LocalLine;
use crate::angle::angle_diff;

/// A map line predicted into the scanner frame, with the innovation
/// covariance contributed by the state uncertainty.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictedLine {
    pub global_index: usize,
    pub r_hat: f64,
    pub psi_hat: f64,
    pub cov: Matrix2<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinePair {
    pub local: usize,
    pub global: usize,
    /// Squared Mahalanobis distance of the `(r, psi)` innovation.
    pub mahalanobis_sq: f64,
}

/// One-to-one pairing of extracted lines with map lines.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Association {
    pub pairs: Vec<LinePair>,
}

impl Association {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Pairs ordered by ascending global index.
    pub fn by_global_index(&self) -> Vec<LinePair> {
        let mut pairs = self.pairs.clone();
        pairs.sort_by_key(|p| p.global);
        pairs
    }
}

/// Innovation `(r - r_hat, wrap(psi - psi_hat))`.
pub(crate) fn line_innovation(local: &LocalLine, pred: &PredictedLine) -> Vector2<f64> {
    Vector2::new(local.r - pred.r_hat, angle_diff(local.psi, pred.psi_hat))
}

/// Greedy gated nearest-neighbour association.
///
/// Every (local, prediction) candidate is scored by the squared Mahalanobis
/// distance of its innovation under `pred.cov + local.cov`. Candidates above
/// `gate` are discarded; the rest are accepted in ascending order, skipping
/// any whose local or global line is already taken. Ties go to the lower
/// local index, then the lower global index.
pub fn match_lines(locals: &[LocalLine], predictions: &[PredictedLine], gate: f64) -> Association {
    let mut candidates = Vec::new();
    for (li, local) in locals.iter().enumerate() {
        for pred in predictions {
            let s = pred.cov + local.cov;
            let Some(s_inv) = s.try_inverse() else {
                continue;
            };
            let v = line_innovation(local, pred);
            let d2 = (v.transpose() * s_inv * v)[0];
            if d2.is_finite() && d2 <= gate {
                candidates.push(LinePair {
                    local: li,
                    global: pred.global_index,
                    mahalanobis_sq: d2,
                });
            }
        }
    }
    candidates.sort_by(|a, b| {
        a.mahalanobis_sq
            .total_cmp(&b.mahalanobis_sq)
            .then(a.local.cmp(&b.local))
            .then(a.global.cmp(&b.global))
    });

    let mut used_local = vec![false; locals.len()];
    let mut used_global = std::collections::HashSet::new();
    let mut pairs = Vec::new();
    for c in candidates {
        if used_local[c.local] || used_global.contains(&c.global) {
            continue;
        }
        used_local[c.local] = true;
        used_global.insert(c.global);
        pairs.push(c);
    }
    Association { pairs }
}
