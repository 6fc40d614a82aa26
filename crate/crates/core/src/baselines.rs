//! Memory-based comparison algorithms.
//!
//! Correlation uses the mean-offset weighted sum with Pearson weights over
//! co-rated titles, normalized by the sum of absolute weights. Vector
//! similarity uses cosine weights over full rating vectors (⊥ read as 0) and a
//! plain weighted mean. Degenerate weights are 0. Predictions stay real-valued
//! and are clamped to the scale range; when nothing usable remains the overall
//! mean is returned.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::ratings::{RatingsMatrix, UserProfile};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BaselineKind {
    Correlation,
    VectorSimilarity,
}

impl BaselineKind {
    pub fn name(self) -> &'static str {
        match self {
            BaselineKind::Correlation => "correlation",
            BaselineKind::VectorSimilarity => "vsim",
        }
    }
}

impl fmt::Display for BaselineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BaselineKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "correlation" | "correl" | "pearson" => Ok(BaselineKind::Correlation),
            "vsim" | "vector-similarity" | "cosine" => Ok(BaselineKind::VectorSimilarity),
            other => Err(Error::InvalidParameter(format!("unknown baseline `{other}`"))),
        }
    }
}

/// Similarity of the active user to every database user.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityWeights {
    weights: Vec<f64>,
}

impl SimilarityWeights {
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

fn dense(active: &UserProfile, n_titles: usize) -> Vec<Option<f64>> {
    let mut out = vec![None; n_titles];
    for (t, v) in active.iter() {
        if t < n_titles {
            out[t] = Some(v);
        }
    }
    out
}

fn pearson_dense(active: &[Option<f64>], matrix: &RatingsMatrix, user: usize) -> f64 {
    let pairs: Vec<(f64, f64)> = matrix
        .user_ratings(user)
        .filter_map(|(t, v)| active.get(t).copied().flatten().map(|a| (a, v)))
        .collect();
    if pairs.is_empty() {
        return 0.0;
    }
    let k = pairs.len() as f64;
    let mean_a = pairs.iter().map(|p| p.0).sum::<f64>() / k;
    let mean_u = pairs.iter().map(|p| p.1).sum::<f64>() / k;
    let (mut cov, mut var_a, mut var_u) = (0.0, 0.0, 0.0);
    for &(a, u) in &pairs {
        cov += (a - mean_a) * (u - mean_u);
        var_a += (a - mean_a).powi(2);
        var_u += (u - mean_u).powi(2);
    }
    let denom = (var_a * var_u).sqrt();
    if denom == 0.0 || !denom.is_finite() {
        return 0.0;
    }
    (cov / denom).clamp(-1.0, 1.0)
}

fn cosine_dense(active: &[Option<f64>], active_norm: f64, matrix: &RatingsMatrix, user: usize, user_norm: f64) -> f64 {
    if active_norm == 0.0 || user_norm == 0.0 {
        return 0.0;
    }
    let dot: f64 = matrix
        .user_ratings(user)
        .filter_map(|(t, v)| active.get(t).copied().flatten().map(|a| a * v))
        .sum();
    (dot / (active_norm * user_norm)).clamp(-1.0, 1.0)
}

fn norm(values: impl Iterator<Item = f64>) -> f64 {
    values.map(|v| v * v).sum::<f64>().sqrt()
}

/// Pearson correlation over titles rated by both; 0 when degenerate.
pub fn pearson_similarity(active: &UserProfile, matrix: &RatingsMatrix, user: usize) -> f64 {
    pearson_dense(&dense(active, matrix.n_titles()), matrix, user)
}

/// Cosine of the two rating vectors with ⊥ read as 0; 0 when either norm is 0.
pub fn cosine_similarity(active: &UserProfile, matrix: &RatingsMatrix, user: usize) -> f64 {
    let a = dense(active, matrix.n_titles());
    let an = norm(active.iter().map(|(_, v)| v));
    let un = norm(matrix.user_ratings(user).map(|(_, v)| v));
    cosine_dense(&a, an, matrix, user, un)
}

/// Per-database statistics reused across active users.
#[derive(Debug, Clone)]
pub struct BaselineModel<'a> {
    kind: BaselineKind,
    matrix: &'a RatingsMatrix,
    user_means: Vec<f64>,
    user_norms: Vec<f64>,
    fallback: f64,
}

impl<'a> BaselineModel<'a> {
    pub fn new(kind: BaselineKind, matrix: &'a RatingsMatrix) -> Result<Self> {
        let fallback = matrix.overall_mean()?;
        let user_means = (0..matrix.n_users())
            .map(|u| matrix.user_mean(u).unwrap_or(0.0))
            .collect();
        let user_norms = (0..matrix.n_users())
            .map(|u| norm(matrix.user_ratings(u).map(|(_, v)| v)))
            .collect();
        Ok(Self {
            kind,
            matrix,
            user_means,
            user_norms,
            fallback,
        })
    }

    pub fn kind(&self) -> BaselineKind {
        self.kind
    }

    pub fn weights(&self, active: &UserProfile) -> SimilarityWeights {
        let a = dense(active, self.matrix.n_titles());
        let weights = match self.kind {
            BaselineKind::Correlation => (0..self.matrix.n_users())
                .map(|u| pearson_dense(&a, self.matrix, u))
                .collect(),
            BaselineKind::VectorSimilarity => {
                let an = norm(active.iter().map(|(_, v)| v));
                (0..self.matrix.n_users())
                    .map(|u| cosine_dense(&a, an, self.matrix, u, self.user_norms[u]))
                    .collect()
            }
        };
        SimilarityWeights { weights }
    }

    /// Prediction for `title` with precomputed weights. Does not check that
    /// the title is unrated.
    pub fn predict_with(&self, title: usize, active: &UserProfile, weights: &SimilarityWeights) -> f64 {
        let w = &weights.weights;
        let raw = match self.kind {
            BaselineKind::Correlation => {
                let Some(active_mean) = active.mean() else {
                    return self.fallback;
                };
                let (mut num, mut den) = (0.0, 0.0);
                for (u, v) in self.matrix.title_ratings(title) {
                    num += w[u] * (v - self.user_means[u]);
                    den += w[u].abs();
                }
                if den == 0.0 {
                    return self.fallback;
                }
                active_mean + num / den
            }
            BaselineKind::VectorSimilarity => {
                let (mut num, mut den) = (0.0, 0.0);
                for (u, v) in self.matrix.title_ratings(title) {
                    num += w[u] * v;
                    den += w[u];
                }
                if den == 0.0 {
                    return self.fallback;
                }
                num / den
            }
        };
        self.matrix.scale().clamp(raw)
    }

    pub fn predict(&self, title: usize, active: &UserProfile) -> Result<f64> {
        if title >= self.matrix.n_titles() {
            return Err(Error::OutOfRange {
                kind: "title",
                index: title,
                len: self.matrix.n_titles(),
            });
        }
        if active.contains(title) {
            return Err(Error::TitleRated(title));
        }
        Ok(self.predict_with(title, active, &self.weights(active)))
    }

    pub fn predict_titles(&self, titles: &[usize], active: &UserProfile) -> Result<Vec<f64>> {
        for &t in titles {
            if active.contains(t) {
                return Err(Error::TitleRated(t));
            }
        }
        let w = self.weights(active);
        Ok(titles.iter().map(|&t| self.predict_with(t, active, &w)).collect())
    }
}

pub fn similarity_weights(kind: BaselineKind, active: &UserProfile, matrix: &RatingsMatrix) -> Result<SimilarityWeights> {
    Ok(BaselineModel::new(kind, matrix)?.weights(active))
}

pub fn baseline_predict(kind: BaselineKind, title: usize, active: &UserProfile, matrix: &RatingsMatrix) -> Result<f64> {
    BaselineModel::new(kind, matrix)?.predict(title, active)
}
