//! Personality diagnosis.
//!
//! Every database row is a candidate "personality type" for the active user,
//! with a uniform prior over rows. A reported rating is the type's rating plus
//! Gaussian noise, discretized and normalized over the rating scale; an absent
//! database rating contributes a uniform distribution over the scale. The
//! posterior over types is combined with the same noise model to give a
//! predictive distribution for each unrated title, and the prediction is its
//! mode.
//!
//! The posterior is computed in log space with max-subtraction, and only the
//! columns of titles the active user rated are visited: every row starts from
//! the all-⊥ log-likelihood and is corrected where the row holds a rating.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::ratings::{Rating, RatingScale, RatingsMatrix, UserProfile};

/// Noise level used when none is configured.
pub const DEFAULT_SIGMA: f64 = 2.5;

/// Probabilities closer than this are treated as tied when picking the mode.
const TIE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PdParams {
    sigma: f64,
}

impl PdParams {
    pub fn new(sigma: f64) -> Result<Self> {
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::InvalidParameter(format!("sigma must be > 0, got {sigma}")));
        }
        Ok(Self { sigma })
    }

    /// Starting value derived from the data: the standard deviation of all stored ratings.
    pub fn from_data(matrix: &RatingsMatrix) -> Result<Self> {
        Self::new(matrix.rating_std()?)
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }
}

impl Default for PdParams {
    fn default() -> Self {
        Self { sigma: DEFAULT_SIGMA }
    }
}

/// Normalized rating likelihoods `Pr(x | y)` for every pair of scale levels.
#[derive(Debug, Clone)]
pub struct LikelihoodTable {
    levels: usize,
    /// row-major `[y][x]`
    prob: Vec<f64>,
    log_prob: Vec<f64>,
    uniform: f64,
    log_uniform: f64,
}

impl LikelihoodTable {
    pub fn new(scale: &RatingScale, params: PdParams) -> Self {
        let s = scale.values();
        let k = s.len();
        let two_var = 2.0 * params.sigma * params.sigma;
        let mut prob = vec![0.0; k * k];
        let mut log_prob = vec![0.0; k * k];
        for (y, &yv) in s.iter().enumerate() {
            let logits: Vec<f64> = s.iter().map(|&xv| -(xv - yv).powi(2) / two_var).collect();
            let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let log_z = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
            for x in 0..k {
                log_prob[y * k + x] = logits[x] - log_z;
                prob[y * k + x] = log_prob[y * k + x].exp();
            }
        }
        let uniform = 1.0 / k as f64;
        Self {
            levels: k,
            prob,
            log_prob,
            uniform,
            log_uniform: uniform.ln(),
        }
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    /// `Pr(x | y)`; `y = None` is the uniform no-rating case.
    pub fn prob(&self, x: usize, y: Option<usize>) -> f64 {
        match y {
            Some(y) => self.prob[y * self.levels + x],
            None => self.uniform,
        }
    }

    pub fn log_prob(&self, x: usize, y: Option<usize>) -> f64 {
        match y {
            Some(y) => self.log_prob[y * self.levels + x],
            None => self.log_uniform,
        }
    }

    /// Full distribution over `x` given `y`.
    pub(crate) fn row(&self, y: usize) -> &[f64] {
        &self.prob[y * self.levels..(y + 1) * self.levels]
    }

    pub(crate) fn uniform(&self) -> f64 {
        self.uniform
    }
}

/// `Pr(R = x | R_true = y)` under the discretized Gaussian noise model.
pub fn likelihood(x: f64, y: Rating, params: PdParams, scale: &RatingScale) -> Result<f64> {
    let x = scale.checked_level(x)?;
    let y = match y {
        Rating::Rated(v) => Some(scale.checked_level(v)?),
        Rating::NoRating => None,
    };
    Ok(LikelihoodTable::new(scale, params).prob(x, y))
}

/// Probability that the active user shares each database user's personality type.
#[derive(Debug, Clone, PartialEq)]
pub struct PersonalityPosterior {
    probs: Vec<f64>,
}

impl PersonalityPosterior {
    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Shannon entropy in nats.
    pub fn entropy(&self) -> f64 {
        crate::voi::entropy(&self.probs)
    }

    fn from_log_weights(mut logw: Vec<f64>) -> Result<Self> {
        let max = logw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return Err(Error::NoUsers);
        }
        let mut sum = 0.0;
        for w in logw.iter_mut() {
            *w = (*w - max).exp();
            sum += *w;
        }
        for w in logw.iter_mut() {
            *w /= sum;
        }
        Ok(Self { probs: logw })
    }
}

/// Distribution of the active user's rating for one unrated title.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictiveDistribution {
    values: Vec<f64>,
    probs: Vec<f64>,
}

impl PredictiveDistribution {
    /// Scale values, aligned with [`probs`](Self::probs).
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, value: f64) -> Option<f64> {
        self.values.iter().position(|&v| v == value).map(|i| self.probs[i])
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().zip(&self.probs).map(|(v, p)| v * p).sum()
    }

    /// Most probable value. Ties go to the value closest to the mean, then to
    /// the smaller value.
    pub fn mode(&self) -> f64 {
        let max = self.probs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mean = self.mean();
        let mut best: Option<(f64, f64)> = None;
        for (&v, &p) in self.values.iter().zip(&self.probs) {
            if p < max - TIE_EPS {
                continue;
            }
            let d = (v - mean).abs();
            match best {
                // values ascend, so on equal distance the earlier one is smaller
                Some((_, bd)) if d >= bd - TIE_EPS => {}
                _ => best = Some((v, d)),
            }
        }
        best.expect("non-empty scale").0
    }
}

/// Personality-diagnosis predictor bound to one ratings database.
#[derive(Debug, Clone)]
pub struct PdModel<'a> {
    matrix: &'a RatingsMatrix,
    params: PdParams,
    table: LikelihoodTable,
}

impl<'a> PdModel<'a> {
    pub fn new(matrix: &'a RatingsMatrix, params: PdParams) -> Self {
        Self {
            matrix,
            params,
            table: LikelihoodTable::new(matrix.scale(), params),
        }
    }

    pub fn matrix(&self) -> &'a RatingsMatrix {
        self.matrix
    }

    pub fn params(&self) -> PdParams {
        self.params
    }

    pub fn table(&self) -> &LikelihoodTable {
        &self.table
    }

    pub fn posterior(&self, active: &UserProfile) -> Result<PersonalityPosterior> {
        self.posterior_excluding(active, None)
    }

    /// Posterior with one database row given zero prior mass.
    pub fn posterior_excluding(
        &self,
        active: &UserProfile,
        excluded: Option<usize>,
    ) -> Result<PersonalityPosterior> {
        let levels = active.levels(self.matrix.scale(), self.matrix.n_titles())?;
        self.posterior_from_levels(&levels, excluded)
    }

    pub(crate) fn posterior_from_levels(
        &self,
        levels: &[(usize, usize)],
        excluded: Option<usize>,
    ) -> Result<PersonalityPosterior> {
        let n = self.matrix.n_users();
        if n == 0 {
            return Err(Error::NoUsers);
        }
        let base = levels.len() as f64 * self.table.log_uniform;
        let mut logw = vec![base; n];
        for &(title, x) in levels {
            let (users, ys) = self.matrix.title_levels(title);
            for (&u, &y) in users.iter().zip(ys) {
                logw[u] += self.table.log_prob(x, Some(y as usize)) - self.table.log_uniform;
            }
        }
        if let Some(u) = excluded {
            if u < n {
                logw[u] = f64::NEG_INFINITY;
            }
        }
        PersonalityPosterior::from_log_weights(logw)
    }

    /// Predictive distribution for `title` given a precomputed posterior.
    pub fn predictive_with(&self, title: usize, posterior: &PersonalityPosterior) -> PredictiveDistribution {
        let k = self.table.levels();
        let mut mass = vec![0.0; k];
        let mut rated = 0.0;
        let (users, ys) = self.matrix.title_levels(title);
        for (&u, &y) in users.iter().zip(ys) {
            let w = posterior.probs[u];
            mass[y as usize] += w;
            rated += w;
        }
        let unrated = (1.0 - rated).max(0.0);
        let mut probs = vec![unrated * self.table.uniform(); k];
        for (y, &m) in mass.iter().enumerate() {
            if m == 0.0 {
                continue;
            }
            for (p, &l) in probs.iter_mut().zip(self.table.row(y)) {
                *p += m * l;
            }
        }
        let sum: f64 = probs.iter().sum();
        for p in probs.iter_mut() {
            *p /= sum;
        }
        PredictiveDistribution {
            values: self.matrix.scale().values().to_vec(),
            probs,
        }
    }

    pub fn predictive_distribution(&self, title: usize, active: &UserProfile) -> Result<PredictiveDistribution> {
        self.check_unrated(title, active)?;
        let posterior = self.posterior(active)?;
        Ok(self.predictive_with(title, &posterior))
    }

    pub fn predict(&self, title: usize, active: &UserProfile) -> Result<f64> {
        Ok(self.predictive_distribution(title, active)?.mode())
    }

    /// Predictions for the given titles, sharing one posterior.
    pub fn predict_titles(&self, titles: &[usize], active: &UserProfile) -> Result<Vec<f64>> {
        for &t in titles {
            self.check_unrated(t, active)?;
        }
        let posterior = self.posterior(active)?;
        Ok(titles
            .iter()
            .map(|&t| self.predictive_with(t, &posterior).mode())
            .collect())
    }

    /// Predictions for every title the active user has not rated.
    pub fn predict_all(&self, active: &UserProfile) -> Result<BTreeMap<usize, f64>> {
        let unrated = active.unrated(self.matrix.n_titles());
        let preds = self.predict_titles(&unrated, active)?;
        Ok(unrated.into_iter().zip(preds).collect())
    }

    fn check_unrated(&self, title: usize, active: &UserProfile) -> Result<()> {
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
        Ok(())
    }
}

pub fn posterior(active: &UserProfile, matrix: &RatingsMatrix, params: PdParams) -> Result<PersonalityPosterior> {
    PdModel::new(matrix, params).posterior(active)
}

pub fn predictive_distribution(
    title: usize,
    active: &UserProfile,
    matrix: &RatingsMatrix,
    params: PdParams,
) -> Result<PredictiveDistribution> {
    PdModel::new(matrix, params).predictive_distribution(title, active)
}

pub fn predict(title: usize, active: &UserProfile, matrix: &RatingsMatrix, params: PdParams) -> Result<f64> {
    PdModel::new(matrix, params).predict(title, active)
}

pub fn predict_all(active: &UserProfile, matrix: &RatingsMatrix, params: PdParams) -> Result<BTreeMap<usize, f64>> {
    PdModel::new(matrix, params).predict_all(active)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(sigma: f64) -> PdParams {
        PdParams::new(sigma).unwrap()
    }

    fn m(n: usize, t: usize, entries: &[(usize, usize, f64)]) -> RatingsMatrix {
        RatingsMatrix::from_entries(n, t, RatingScale::movie(), entries.iter().copied()).unwrap()
    }

    #[test]
    fn params_reject_nonpositive_sigma() {
        assert!(PdParams::new(0.0).is_err());
        assert!(PdParams::new(-1.0).is_err());
        assert!(PdParams::new(f64::NAN).is_err());
        assert_eq!(PdParams::default().sigma(), 2.5);
    }

    #[test]
    fn sigma_from_data_is_rating_std() {
        let mat = m(2, 2, &[(0, 0, 1.0), (1, 1, 3.0)]);
        assert_eq!(PdParams::from_data(&mat).unwrap().sigma(), 1.0);
    }

    #[test]
    fn likelihood_uniform_for_no_rating() {
        let s = RatingScale::movie();
        for x in 0..6 {
            let l = likelihood(x as f64, Rating::NoRating, p(2.5), &s).unwrap();
            assert!((l - 1.0 / 6.0).abs() < 1e-15);
        }
    }

    #[test]
    fn likelihood_mode_at_true_value() {
        let s = RatingScale::movie();
        for sigma in [0.3, 1.0, 2.5, 10.0] {
            for y in 0..6 {
                let at = likelihood(y as f64, Rating::Rated(y as f64), p(sigma), &s).unwrap();
                for x in 0..6 {
                    let l = likelihood(x as f64, Rating::Rated(y as f64), p(sigma), &s).unwrap();
                    assert!(l <= at);
                }
            }
        }
    }

    #[test]
    fn likelihood_reference_value() {
        // exp(-4/12.5) / sum_{x=0..5} exp(-(x-4)^2/12.5), evaluated independently
        let l = likelihood(2.0, Rating::Rated(4.0), p(2.5), &RatingScale::movie()).unwrap();
        assert!((l - 0.16742456987439788).abs() < 1e-12);
    }

    #[test]
    fn likelihood_normalizes_over_x() {
        let s = RatingScale::actions();
        for y in 0..7 {
            let total: f64 = (0..7)
                .map(|x| likelihood(x as f64, Rating::Rated(y as f64), p(0.7), &s).unwrap())
                .sum();
            assert!((total - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn likelihood_rejects_off_scale() {
        let s = RatingScale::movie();
        assert!(matches!(
            likelihood(7.0, Rating::NoRating, p(1.0), &s),
            Err(Error::OffScale(_))
        ));
    }

    #[test]
    fn empty_profile_gives_prior() {
        let mat = m(4, 3, &[(0, 0, 1.0), (1, 1, 5.0), (2, 2, 3.0)]);
        let post = posterior(&UserProfile::new(), &mat, p(2.5)).unwrap();
        assert_eq!(post.probs(), &[0.25; 4]);
    }

    #[test]
    fn small_sigma_concentrates_on_exact_match() {
        let mat = m(2, 3, &[(0, 0, 1.0), (0, 1, 4.0), (1, 0, 1.0), (1, 1, 3.0)]);
        let active: UserProfile = [(0, 1.0), (1, 4.0)].into_iter().collect();
        let post = posterior(&active, &mat, p(0.01)).unwrap();
        assert!(post.probs()[0] > 1.0 - 1e-12);
        assert!(post.probs()[1] < 1e-12);
    }

    #[test]
    fn predictive_concentrates_on_shared_rating() {
        let mat = m(3, 2, &[(0, 1, 4.0), (1, 1, 4.0), (2, 1, 4.0), (0, 0, 2.0)]);
        let active: UserProfile = [(0, 2.0)].into_iter().collect();
        let dist = predictive_distribution(1, &active, &mat, p(0.05)).unwrap();
        assert!(dist.prob(4.0).unwrap() > 1.0 - 1e-9);
        assert_eq!(predict(1, &active, &mat, p(0.05)).unwrap(), 4.0);
    }

    #[test]
    fn all_no_rating_column_is_uniform_and_predicts_two() {
        let mat = m(3, 2, &[(0, 0, 2.0), (1, 0, 5.0)]);
        let active: UserProfile = [(0, 5.0)].into_iter().collect();
        let dist = predictive_distribution(1, &active, &mat, p(1.0)).unwrap();
        for &q in dist.probs() {
            assert!((q - 1.0 / 6.0).abs() < 1e-12);
        }
        assert_eq!(dist.mode(), 2.0);
    }

    #[test]
    fn rated_title_is_rejected() {
        let mat = m(2, 2, &[(0, 0, 2.0)]);
        let active: UserProfile = [(0, 5.0)].into_iter().collect();
        assert!(matches!(
            predictive_distribution(0, &active, &mat, p(1.0)),
            Err(Error::TitleRated(0))
        ));
        assert!(matches!(predict(0, &active, &mat, p(1.0)), Err(Error::TitleRated(0))));
    }

    #[test]
    fn predict_all_matches_per_title_predict() {
        let mat = m(
            4,
            5,
            &[(0, 0, 1.0), (0, 2, 5.0), (1, 1, 3.0), (1, 4, 0.0), (2, 3, 4.0), (3, 0, 2.0), (3, 2, 4.0)],
        );
        let active: UserProfile = [(0, 1.0), (3, 4.0)].into_iter().collect();
        let all = predict_all(&active, &mat, p(1.5)).unwrap();
        assert_eq!(all.keys().copied().collect::<Vec<_>>(), vec![1, 2, 4]);
        for (&t, &v) in &all {
            assert_eq!(v, predict(t, &active, &mat, p(1.5)).unwrap());
        }
        let full: UserProfile = (0..5).map(|t| (t, 1.0)).collect();
        assert!(predict_all(&full, &mat, p(1.5)).unwrap().is_empty());
    }

    #[test]
    fn mode_tie_break_prefers_value_near_mean() {
        let d = PredictiveDistribution {
            values: vec![0.0, 1.0, 2.0, 3.0],
            probs: vec![0.4, 0.0, 0.2, 0.4],
        };
        // mean 1.6: tied modes 0 and 3, 3 is closer
        assert_eq!(d.mode(), 3.0);
        let d = PredictiveDistribution {
            values: vec![0.0, 1.0, 2.0],
            probs: vec![0.5, 0.0, 0.5],
        };
        assert_eq!(d.mode(), 0.0);
    }
}
