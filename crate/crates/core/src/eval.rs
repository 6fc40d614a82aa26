//! Evaluation methodology: user split, withholding protocols, average
//! absolute deviation, the extreme-ratings subset and the randomization test.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::ratings::{RatingsMatrix, UserProfile};
use crate::rng;

const SPLIT_TAG: u64 = 0x5350_4c49;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Protocol {
    AllBut1,
    GivenK(usize),
}

impl Protocol {
    pub fn given(k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidParameter("given-k needs k >= 1".into()));
        }
        Ok(Protocol::GivenK(k))
    }

    /// The four standard protocols.
    pub fn standard() -> Vec<Protocol> {
        vec![
            Protocol::AllBut1,
            Protocol::GivenK(10),
            Protocol::GivenK(5),
            Protocol::GivenK(2),
        ]
    }

    pub(crate) fn tag(self) -> u64 {
        match self {
            Protocol::AllBut1 => 0,
            Protocol::GivenK(k) => 1000 + k as u64,
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Protocol::AllBut1 => f.write_str("allbut1"),
            Protocol::GivenK(k) => write!(f, "given{k}"),
        }
    }
}

impl FromStr for Protocol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace(['-', '_'], "");
        if norm == "allbut1" || norm == "allbutone" {
            return Ok(Protocol::AllBut1);
        }
        if let Some(k) = norm.strip_prefix("given") {
            if let Ok(k) = k.parse::<usize>() {
                return Protocol::given(k);
            }
        }
        Err(Error::InvalidParameter(format!("unknown protocol `{s}`")))
    }
}

/// A held-out user: original row index in the full matrix plus all ratings.
#[derive(Debug, Clone, PartialEq)]
pub struct TestUser {
    pub user: usize,
    pub profile: UserProfile,
}

#[derive(Debug, Clone)]
pub struct TrainTestSplit {
    pub train: RatingsMatrix,
    /// Original indices of the training rows, ascending; row `k` of `train` is `train_users[k]`.
    pub train_users: Vec<usize>,
    /// Test users in ascending original index.
    pub test: Vec<TestUser>,
}

/// Partitions users by a seeded shuffle; `fraction` of them (rounded) go to training.
pub fn split_train_test(matrix: &RatingsMatrix, fraction: f64, seed: u64) -> Result<TrainTestSplit> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "train fraction must lie in (0, 1), got {fraction}"
        )));
    }
    let n = matrix.n_users();
    if n == 0 || matrix.nnz() == 0 {
        return Err(Error::NoRatings);
    }
    let n_train = (fraction * n as f64).round() as usize;
    if n_train == 0 || n_train == n {
        return Err(Error::InvalidParameter(format!(
            "train fraction {fraction} leaves one side empty for {n} users"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::rng(seed, &[SPLIT_TAG]));
    let mut train_users = order[..n_train].to_vec();
    let mut test_users = order[n_train..].to_vec();
    train_users.sort_unstable();
    test_users.sort_unstable();
    Ok(TrainTestSplit {
        train: matrix.select_users(&train_users),
        train_users,
        test: test_users
            .into_iter()
            .map(|u| TestUser {
                user: u,
                profile: matrix.user_profile(u),
            })
            .collect(),
    })
}

/// Outcome of applying a protocol to one user.
#[derive(Debug, Clone, PartialEq)]
pub enum ProtocolSplit {
    Split {
        input: UserProfile,
        withheld: BTreeMap<usize, f64>,
    },
    Dropped,
}

/// Splits one user's ratings into algorithm input and withheld targets.
///
/// All-but-1 needs at least 2 ratings; given-k needs at least k + 1.
pub fn apply_protocol(profile: &UserProfile, protocol: Protocol, seed: u64) -> ProtocolSplit {
    let ratings: Vec<(usize, f64)> = profile.iter().collect();
    let mut rng = rng::rng(seed, &[protocol.tag()]);
    let input_idx: Vec<usize> = match protocol {
        Protocol::AllBut1 => {
            if ratings.len() < 2 {
                return ProtocolSplit::Dropped;
            }
            let held = rng.random_range(0..ratings.len());
            (0..ratings.len()).filter(|&i| i != held).collect()
        }
        Protocol::GivenK(k) => {
            if k == 0 || ratings.len() < k + 1 {
                return ProtocolSplit::Dropped;
            }
            let mut idx = rand::seq::index::sample(&mut rng, ratings.len(), k).into_vec();
            idx.sort_unstable();
            idx
        }
    };
    let mut input = UserProfile::new();
    for &i in &input_idx {
        input.insert(ratings[i].0, ratings[i].1);
    }
    let withheld = ratings.iter().copied().filter(|(t, _)| !input.contains(*t)).collect();
    ProtocolSplit::Split { input, withheld }
}

/// One scored prediction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Deviation {
    pub user: usize,
    pub title: usize,
    pub predicted: f64,
    pub actual: f64,
}

impl Deviation {
    pub fn abs(&self) -> f64 {
        (self.predicted - self.actual).abs()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DeviationRecord {
    entries: Vec<Deviation>,
}

impl DeviationRecord {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, d: Deviation) {
        self.entries.push(d);
    }

    pub fn extend(&mut self, other: DeviationRecord) {
        self.entries.extend(other.entries);
    }

    pub fn entries(&self) -> &[Deviation] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Absolute deviations in record order.
    pub fn scores(&self) -> Vec<f64> {
        self.entries.iter().map(Deviation::abs).collect()
    }
}

impl FromIterator<Deviation> for DeviationRecord {
    fn from_iter<I: IntoIterator<Item = Deviation>>(iter: I) -> Self {
        Self {
            entries: iter.into_iter().collect(),
        }
    }
}

/// Average absolute deviation.
pub fn mad(devs: &DeviationRecord) -> Result<f64> {
    if devs.is_empty() {
        return Err(Error::NoPredictions);
    }
    Ok(devs.entries.iter().map(Deviation::abs).sum::<f64>() / devs.len() as f64)
}

/// Keeps predictions whose true rating is strictly more than 0.5 away from `mean`.
pub fn extreme_filter_around(devs: &DeviationRecord, mean: f64) -> DeviationRecord {
    devs.entries
        .iter()
        .copied()
        .filter(|d| d.actual < mean - 0.5 || d.actual > mean + 0.5)
        .collect()
}

/// [`extreme_filter_around`] the overall mean of `matrix` (the training data).
pub fn extreme_filter(devs: &DeviationRecord, matrix: &RatingsMatrix) -> Result<DeviationRecord> {
    Ok(extreme_filter_around(devs, matrix.overall_mean()?))
}

/// Result of a randomization test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Significance {
    /// Fraction of re-partitions with `|mean difference| >= |observed|`.
    pub two_sided: f64,
    /// Fraction of re-partitions with a difference at least as large in the observed direction.
    pub one_sided: f64,
    /// `mean(a) - mean(b)`.
    pub observed: f64,
    pub permutations: usize,
}

const PERMUTATION_BLOCK: usize = 1024;

/// Randomization test on two deviation records.
pub fn randomization_test(
    a: &DeviationRecord,
    b: &DeviationRecord,
    permutations: usize,
    seed: u64,
) -> Result<Significance> {
    randomization_test_scores(&a.scores(), &b.scores(), permutations, seed)
}

/// Randomization test on raw scores: pools both lists, re-partitions the pool
/// at random into groups of the original sizes, and counts how often the
/// difference of group means reaches the observed one.
///
/// Permutations run in fixed blocks seeded independently, so the result does
/// not depend on the thread count.
pub fn randomization_test_scores(a: &[f64], b: &[f64], permutations: usize, seed: u64) -> Result<Significance> {
    if permutations < 1 {
        return Err(Error::InvalidParameter("permutations must be >= 1".into()));
    }
    if a.is_empty() || b.is_empty() {
        return Err(Error::NoPredictions);
    }
    let (na, nb) = (a.len(), b.len());
    let sum_a: f64 = a.iter().sum();
    let sum_b: f64 = b.iter().sum();
    let total = sum_a + sum_b;
    let observed = sum_a / na as f64 - sum_b / nb as f64;
    let scale = a.iter().chain(b).fold(1.0f64, |m, v| m.max(v.abs()));
    let threshold = observed.abs() - 1e-10 * scale;
    let sign = if observed < 0.0 { -1.0 } else { 1.0 };

    let pool: Vec<f64> = a.iter().chain(b).copied().collect();
    // draw the smaller group; its complement is implied
    let draw_a = na <= nb;
    let k = na.min(nb);

    let blocks = permutations.div_ceil(PERMUTATION_BLOCK);
    let (two, one) = (0..blocks)
        .into_par_iter()
        .map(|block| {
            let count = PERMUTATION_BLOCK.min(permutations - block * PERMUTATION_BLOCK);
            let mut rng = rng::rng(seed, &[block as u64]);
            let mut pool = pool.clone();
            let len = pool.len();
            let (mut two, mut one) = (0usize, 0usize);
            for _ in 0..count {
                let mut drawn = 0.0;
                for i in 0..k {
                    let j = rng.random_range(i..len);
                    pool.swap(i, j);
                    drawn += pool[i];
                }
                let perm_a = if draw_a { drawn } else { total - drawn };
                let diff = perm_a / na as f64 - (total - perm_a) / nb as f64;
                if diff.abs() >= threshold {
                    two += 1;
                }
                if sign * diff >= threshold {
                    one += 1;
                }
            }
            (two, one)
        })
        .reduce(|| (0, 0), |x, y| (x.0 + y.0, x.1 + y.1));

    Ok(Significance {
        two_sided: two as f64 / permutations as f64,
        one_sided: one as f64 / permutations as f64,
        observed,
        permutations,
    })
}
