//! Value of information on top of the personality posterior.
//!
//! The value of asking for a title is the expected reduction in entropy of
//! the personality posterior, i.e. the mutual information between the
//! personality variable and the answer. It is computed as the
//! posterior-weighted KL divergence of each personality's rating
//! distribution from the predictive distribution, grouping database users by
//! their rating of the title, so one evaluation costs `O(column + levels²)`.

use std::fmt;

use rand::Rng as _;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::pd::{LikelihoodTable, PdModel, PdParams, PersonalityPosterior};
use crate::ratings::{Rating, RatingsMatrix, UserProfile};
use crate::rng;

/// Pruning scores average over this many pseudo-active profiles by default.
pub const DEFAULT_PSEUDO_PROFILES: usize = 32;

/// Shannon entropy in nats; zero entries contribute nothing.
pub fn entropy(p: &[f64]) -> f64 {
    -p.iter().filter(|&&x| x > 0.0).map(|&x| x * x.ln()).sum::<f64>()
}

fn kl(q: &[f64], p: &[f64]) -> f64 {
    q.iter()
        .zip(p)
        .filter(|(&qi, _)| qi > 0.0)
        .map(|(&qi, &pi)| qi * (qi / pi).ln())
        .sum()
}

fn kl_uniform(u: f64, p: &[f64]) -> f64 {
    p.iter().map(|&pi| u * (u / pi).ln()).sum()
}

fn tv(q: &[f64], p: &[f64]) -> f64 {
    0.5 * q.iter().zip(p).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

fn tv_uniform(u: f64, p: &[f64]) -> f64 {
    0.5 * p.iter().map(|b| (u - b).abs()).sum::<f64>()
}

/// Posterior mass per rating level for one title, plus the unrated mass.
fn column_mass(matrix: &RatingsMatrix, title: usize, levels: usize, posterior: &PersonalityPosterior) -> (Vec<f64>, f64, f64) {
    let mut mass = vec![0.0; levels];
    let mut rated = 0.0;
    let (users, ys) = matrix.title_levels(title);
    for (&u, &y) in users.iter().zip(ys) {
        let w = posterior.probs()[u];
        mass[y as usize] += w;
        rated += w;
    }
    (mass, rated, (1.0 - rated).max(0.0))
}

fn mixture(table: &LikelihoodTable, mass: &[f64], unrated: f64) -> Vec<f64> {
    let mut p = vec![unrated * table.uniform(); table.levels()];
    for (y, &m) in mass.iter().enumerate() {
        if m > 0.0 {
            for (px, &l) in p.iter_mut().zip(table.row(y)) {
                *px += m * l;
            }
        }
    }
    p
}

/// Expected information gain of asking for `title`, given the current posterior.
pub fn gain_with(model: &PdModel<'_>, title: usize, posterior: &PersonalityPosterior) -> f64 {
    let matrix = model.matrix();
    if matrix.title_count(title) == 0 {
        return 0.0;
    }
    let table = model.table();
    let (mass, _, unrated) = column_mass(matrix, title, table.levels(), posterior);
    let p = mixture(table, &mass, unrated);
    let mut gain = 0.0;
    for (y, &m) in mass.iter().enumerate() {
        if m > 0.0 {
            gain += m * kl(table.row(y), &p);
        }
    }
    if unrated > 0.0 {
        gain += unrated * kl_uniform(table.uniform(), &p);
    }
    gain.max(0.0)
}

/// Expected reduction in posterior entropy from observing the active user's rating of `title`.
pub fn expected_information_gain(
    title: usize,
    active: &UserProfile,
    matrix: &RatingsMatrix,
    params: PdParams,
) -> Result<f64> {
    if title >= matrix.n_titles() {
        return Err(Error::OutOfRange {
            kind: "title",
            index: title,
            len: matrix.n_titles(),
        });
    }
    if active.contains(title) {
        return Err(Error::AlreadyRated(title));
    }
    let model = PdModel::new(matrix, params);
    let posterior = model.posterior(active)?;
    Ok(gain_with(&model, title, &posterior))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QueryValue {
    pub title: usize,
    /// Nats.
    pub expected_gain: f64,
}

fn sort_queries(values: &mut [QueryValue]) {
    values.sort_by(|a, b| {
        b.expected_gain
            .partial_cmp(&a.expected_gain)
            .expect("finite gains")
            .then(a.title.cmp(&b.title))
    });
}

fn rank_candidates(model: &PdModel<'_>, candidates: &[usize], posterior: &PersonalityPosterior) -> Vec<QueryValue> {
    let mut values: Vec<QueryValue> = candidates
        .par_iter()
        .map(|&title| QueryValue {
            title,
            expected_gain: gain_with(model, title, posterior),
        })
        .collect();
    sort_queries(&mut values);
    values
}

/// The `limit` most informative unrated titles, by decreasing gain then ascending title.
pub fn rank_queries(active: &UserProfile, matrix: &RatingsMatrix, params: PdParams, limit: usize) -> Result<Vec<QueryValue>> {
    let model = PdModel::new(matrix, params);
    let posterior = model.posterior(active)?;
    let mut ranked = rank_candidates(&model, &active.unrated(matrix.n_titles()), &posterior);
    ranked.truncate(limit);
    Ok(ranked)
}

/// Marginal cost of the k-th query (k from 1).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum QueryCost {
    Constant(f64),
    /// `base + slope * (k - 1)`.
    Linear { base: f64, slope: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostModel {
    cost: QueryCost,
    gain_to_benefit: f64,
}

impl CostModel {
    pub fn new(cost: QueryCost, gain_to_benefit: f64) -> Result<Self> {
        let ok = |v: f64| v.is_finite() && v >= 0.0;
        let valid = match cost {
            QueryCost::Constant(c) => ok(c),
            QueryCost::Linear { base, slope } => ok(base) && ok(slope),
        };
        if !valid {
            return Err(Error::InvalidParameter(
                "query costs must be finite, non-negative and non-decreasing".into(),
            ));
        }
        if !ok(gain_to_benefit) {
            return Err(Error::InvalidParameter("gain_to_benefit must be finite and >= 0".into()));
        }
        Ok(Self { cost, gain_to_benefit })
    }

    /// No query cost, benefit rate 1.
    pub fn free() -> Self {
        Self {
            cost: QueryCost::Constant(0.0),
            gain_to_benefit: 1.0,
        }
    }

    pub fn gain_to_benefit(&self) -> f64 {
        self.gain_to_benefit
    }

    pub fn query_cost(&self) -> QueryCost {
        self.cost
    }

    pub fn marginal(&self, k: usize) -> f64 {
        match self.cost {
            QueryCost::Constant(c) => c,
            QueryCost::Linear { base, slope } => base + slope * k.saturating_sub(1) as f64,
        }
    }

    pub fn cumulative(&self, k: usize) -> f64 {
        (1..=k).map(|i| self.marginal(i)).sum()
    }
}

/// How the next title is chosen during elicitation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum QueryOrder {
    /// Highest expected gain first.
    Voi,
    /// Uniformly among remaining candidates; used as a comparison.
    Random { seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElicitStep {
    pub step: usize,
    pub title: usize,
    pub gain: f64,
    pub answer: Rating,
    pub cumulative_cost: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    /// `max_queries` reached.
    Budget,
    /// Expected benefit of the best query fell below its marginal cost.
    CostExceedsBenefit,
    /// No unrated, unqueried titles remain.
    Exhausted,
}

impl fmt::Display for StopReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StopReason::Budget => "budget",
            StopReason::CostExceedsBenefit => "cost-exceeds-benefit",
            StopReason::Exhausted => "exhausted",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Elicitation {
    pub profile: UserProfile,
    pub transcript: Vec<ElicitStep>,
    pub stop: StopReason,
}

/// Greedy elicitation in decreasing-VOI order.
pub fn elicit<F>(
    active: &UserProfile,
    matrix: &RatingsMatrix,
    params: PdParams,
    cost: &CostModel,
    answer_source: F,
    max_queries: usize,
) -> Result<Elicitation>
where
    F: FnMut(usize) -> Rating,
{
    elicit_with_order(active, matrix, params, cost, answer_source, max_queries, QueryOrder::Voi)
}

/// Elicitation loop with a configurable query order.
///
/// Each step recomputes the posterior from the current profile, picks a
/// title, and stops first if `gain_to_benefit * gain` is below the marginal
/// cost of that query. A `NoRating` answer consumes the query and removes the
/// title from later rounds without changing the profile.
pub fn elicit_with_order<F>(
    active: &UserProfile,
    matrix: &RatingsMatrix,
    params: PdParams,
    cost: &CostModel,
    mut answer_source: F,
    max_queries: usize,
    order: QueryOrder,
) -> Result<Elicitation>
where
    F: FnMut(usize) -> Rating,
{
    let model = PdModel::new(matrix, params);
    let mut profile = active.clone();
    let mut unseen = vec![false; matrix.n_titles()];
    let mut transcript = Vec::new();
    let mut cumulative = 0.0;
    let mut order_rng = match order {
        QueryOrder::Random { seed } => Some(rng::rng(seed, &[0x454c_4943])),
        QueryOrder::Voi => None,
    };

    let stop = loop {
        if transcript.len() >= max_queries {
            break StopReason::Budget;
        }
        let candidates: Vec<usize> = profile
            .unrated(matrix.n_titles())
            .into_iter()
            .filter(|&t| !unseen[t])
            .collect();
        if candidates.is_empty() {
            break StopReason::Exhausted;
        }
        let posterior = model.posterior(&profile)?;
        let pick = match order_rng.as_mut() {
            None => rank_candidates(&model, &candidates, &posterior)[0],
            Some(r) => {
                let title = candidates[r.random_range(0..candidates.len())];
                QueryValue {
                    title,
                    expected_gain: gain_with(&model, title, &posterior),
                }
            }
        };
        let step = transcript.len() + 1;
        let marginal = cost.marginal(step);
        if cost.gain_to_benefit * pick.expected_gain < marginal {
            break StopReason::CostExceedsBenefit;
        }
        let answer = answer_source(pick.title);
        match answer {
            Rating::Rated(v) => {
                matrix.scale().checked_level(v)?;
                profile.insert(pick.title, v);
            }
            Rating::NoRating => unseen[pick.title] = true,
        }
        cumulative += marginal;
        transcript.push(ElicitStep {
            step,
            title: pick.title,
            gain: pick.expected_gain,
            answer,
            cumulative_cost: cumulative,
        });
    };

    Ok(Elicitation {
        profile,
        transcript,
        stop,
    })
}

/// Header of the transcript records.
pub const TRANSCRIPT_HEADER: &str = "step,title_id,gain,answer,cumulative_cost";

/// Transcript as CSV lines; unanswered queries render as `none`.
pub fn transcript_csv(steps: &[ElicitStep], title_id: impl Fn(usize) -> String) -> String {
    let mut out = String::from(TRANSCRIPT_HEADER);
    out.push('\n');
    for s in steps {
        let answer = match s.answer {
            Rating::Rated(v) => v.to_string(),
            Rating::NoRating => "none".to_string(),
        };
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            s.step,
            title_id(s.title),
            s.gain,
            answer,
            s.cumulative_cost
        ));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PruneTarget {
    Titles,
    Users,
}

impl std::str::FromStr for PruneTarget {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "titles" | "items" => Ok(PruneTarget::Titles),
            "users" => Ok(PruneTarget::Users),
            other => Err(Error::InvalidParameter(format!("unknown prune target `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PruneConfig {
    pub target: PruneTarget,
    pub keep_fraction: f64,
    pub pseudo_profiles: usize,
    pub seed: u64,
}

impl PruneConfig {
    pub fn new(target: PruneTarget, keep_fraction: f64, seed: u64) -> Self {
        Self {
            target,
            keep_fraction,
            pseudo_profiles: DEFAULT_PSEUDO_PROFILES,
            seed,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Pruned {
    pub matrix: RatingsMatrix,
    /// Original indices of the kept rows or columns, ascending.
    pub kept: Vec<usize>,
    /// Value score of every original row or column.
    pub scores: Vec<f64>,
}

/// A pseudo-active user: a random half of a real row, with the source row
/// excluded from its own posterior.
#[derive(Debug, Clone)]
pub struct PseudoProfile {
    pub source: usize,
    pub profile: UserProfile,
}

/// Seeded pseudo-active profiles drawn from users with at least two ratings.
pub fn pseudo_profiles(matrix: &RatingsMatrix, count: usize, seed: u64) -> Vec<PseudoProfile> {
    let eligible: Vec<usize> = (0..matrix.n_users()).filter(|&u| matrix.user_count(u) >= 2).collect();
    if eligible.is_empty() {
        return Vec::new();
    }
    (0..count)
        .map(|s| {
            let mut r = rng::rng(seed, &[0x5053_4555, s as u64]);
            let source = eligible[r.random_range(0..eligible.len())];
            let row: Vec<(usize, f64)> = matrix.user_ratings(source).collect();
            let keep = row.len().div_ceil(2);
            let profile = rand::seq::index::sample(&mut r, row.len(), keep)
                .into_iter()
                .map(|i| row[i])
                .collect();
            PseudoProfile { source, profile }
        })
        .collect()
}

/// Average expected information gain of each title over pseudo-active
/// profiles that have not rated it.
pub fn title_scores(matrix: &RatingsMatrix, params: PdParams, profiles: &[PseudoProfile]) -> Result<Vec<f64>> {
    let model = PdModel::new(matrix, params);
    let m = matrix.n_titles();
    let per_profile = profiles
        .par_iter()
        .map(|pp| {
            let posterior = model.posterior_excluding(&pp.profile, Some(pp.source))?;
            Ok((0..m)
                .map(|t| (!pp.profile.contains(t)).then(|| gain_with(&model, t, &posterior)))
                .collect::<Vec<_>>())
        })
        .collect::<Result<Vec<_>>>()?;
    let mut sums = vec![0.0; m];
    let mut counts = vec![0usize; m];
    for gains in per_profile {
        for (t, g) in gains.into_iter().enumerate() {
            if let Some(g) = g {
                sums[t] += g;
                counts[t] += 1;
            }
        }
    }
    Ok(sums
        .into_iter()
        .zip(counts)
        .map(|(s, c)| if c == 0 { 0.0 } else { s / c as f64 })
        .collect())
}

/// Leave-one-out value of each user row: the total-variation change in the
/// predictive distributions of unrated titles when the row is removed,
/// averaged over titles and pseudo-active profiles.
///
/// Removing row `u` with posterior mass `w` turns each predictive `p_j` into
/// `(p_j - w L_uj) / (1 - w)`, so the change is `w / (1 - w) * TV(L_uj, p_j)`.
pub fn user_scores(matrix: &RatingsMatrix, params: PdParams, profiles: &[PseudoProfile]) -> Result<Vec<f64>> {
    let model = PdModel::new(matrix, params);
    let table = model.table();
    let (n, m) = (matrix.n_users(), matrix.n_titles());
    let per_profile = profiles
        .par_iter()
        .map(|pp| -> Result<Vec<f64>> {
            let posterior = model.posterior_excluding(&pp.profile, Some(pp.source))?;
            let targets: Vec<usize> = pp.profile.unrated(m);
            let mut tv_u = vec![0.0; m];
            let mut preds: Vec<Option<Vec<f64>>> = vec![None; m];
            let mut base = 0.0;
            for &t in &targets {
                let p = model.predictive_with(t, &posterior).probs().to_vec();
                tv_u[t] = tv_uniform(table.uniform(), &p);
                base += tv_u[t];
                preds[t] = Some(p);
            }
            let denom = targets.len().max(1) as f64;
            Ok((0..n)
                .map(|u| {
                    let w = posterior.probs()[u];
                    if w == 0.0 {
                        return 0.0;
                    }
                    let (titles, ys) = matrix.user_levels(u);
                    let mut total = base;
                    for (&t, &y) in titles.iter().zip(ys) {
                        if let Some(p) = &preds[t] {
                            total += tv(table.row(y as usize), p) - tv_u[t];
                        }
                    }
                    let factor = if w >= 1.0 { f64::INFINITY } else { w / (1.0 - w) };
                    factor * total.max(0.0) / denom
                })
                .collect())
        })
        .collect::<Result<Vec<_>>>()?;
    let mut scores = vec![0.0; n];
    for s in &per_profile {
        for (acc, v) in scores.iter_mut().zip(s) {
            *acc += v;
        }
    }
    let k = per_profile.len().max(1) as f64;
    Ok(scores.into_iter().map(|s| s / k).collect())
}

/// Indices of the `keep` highest scores (ties to the lower index), ascending.
pub(crate) fn top_indices(scores: &[f64], keep: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut kept = order[..keep].to_vec();
    kept.sort_unstable();
    kept
}

pub(crate) fn keep_count(keep_fraction: f64, total: usize) -> Result<usize> {
    if !(keep_fraction > 0.0 && keep_fraction <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "keep_fraction must lie in (0, 1], got {keep_fraction}"
        )));
    }
    let keep = (keep_fraction * total as f64).round() as usize;
    if keep == 0 {
        return Err(Error::InvalidParameter(format!(
            "keep_fraction {keep_fraction} keeps nothing out of {total}"
        )));
    }
    Ok(keep.min(total))
}

/// Drops the lowest-value titles or users, keeping `keep_fraction` of them.
pub fn prune(matrix: &RatingsMatrix, params: PdParams, config: &PruneConfig) -> Result<Pruned> {
    let total = match config.target {
        PruneTarget::Titles => matrix.n_titles(),
        PruneTarget::Users => matrix.n_users(),
    };
    let keep = keep_count(config.keep_fraction, total)?;
    let profiles = pseudo_profiles(matrix, config.pseudo_profiles, config.seed);
    let scores = match config.target {
        PruneTarget::Titles => title_scores(matrix, params, &profiles)?,
        PruneTarget::Users => user_scores(matrix, params, &profiles)?,
    };
    let kept = top_indices(&scores, keep);
    let pruned = match config.target {
        PruneTarget::Titles => matrix.select_titles(&kept),
        PruneTarget::Users => matrix.select_users(&kept),
    };
    Ok(Pruned {
        matrix: pruned,
        kept,
        scores,
    })
}
