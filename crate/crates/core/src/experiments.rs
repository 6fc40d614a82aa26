//! Paired simulations comparing value-of-information orderings against
//! random ones: query elicitation for held-out users and title pruning.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::eval::{apply_protocol, Protocol, ProtocolSplit, TestUser};
use crate::pd::{PdModel, PdParams};
use crate::ratings::{Rating, RatingsMatrix, UserProfile};
use crate::rng;
use crate::voi::{self, CostModel, PruneConfig, PruneTarget, QueryOrder};

const ORDER_TAG: u64 = 0x4f52_4452;
const RANDOM_PRUNE_TAG: u64 = 0x5250_524e;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElicitationConfig {
    /// Number of test users to simulate (the first ones eligible).
    pub users: usize,
    /// Queries per user.
    pub budget: usize,
    /// Ratings the user starts with.
    pub given: usize,
    pub params: PdParams,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UserElicitation {
    pub user: usize,
    pub voi_mad: f64,
    pub random_mad: f64,
    pub voi_answered: usize,
    pub random_answered: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ElicitationOutcome {
    pub per_user: Vec<UserElicitation>,
}

impl ElicitationOutcome {
    pub fn voi_mad(&self) -> f64 {
        mean(self.per_user.iter().map(|u| u.voi_mad))
    }

    pub fn random_mad(&self) -> f64 {
        mean(self.per_user.iter().map(|u| u.random_mad))
    }
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        s / n as f64
    }
}

/// Starts each user from a given-k split; the withheld ratings answer
/// queries (other titles answer `NoRating`). After `budget` free queries the
/// still-unrevealed withheld titles are predicted. The VOI and random runs
/// share the split for each user.
pub fn elicitation_experiment(
    train: &RatingsMatrix,
    test: &[TestUser],
    config: &ElicitationConfig,
) -> Result<ElicitationOutcome> {
    let protocol = Protocol::given(config.given)?;
    let eligible: Vec<&TestUser> = test
        .iter()
        .filter(|u| u.profile.len() > config.given + config.budget)
        .take(config.users)
        .collect();
    if eligible.is_empty() {
        return Err(Error::NoPredictions);
    }
    let model = PdModel::new(train, config.params);
    let cost = CostModel::free();

    let run = |input: &UserProfile, withheld: &std::collections::BTreeMap<usize, f64>, order| -> Result<(f64, usize)> {
        let result = voi::elicit_with_order(
            input,
            train,
            config.params,
            &cost,
            |t| withheld.get(&t).copied().into(),
            config.budget,
            order,
        )?;
        let remaining: Vec<usize> = withheld.keys().copied().filter(|&t| !result.profile.contains(t)).collect();
        let preds = model.predict_titles(&remaining, &result.profile)?;
        let mad = mean(remaining.iter().zip(&preds).map(|(t, p)| (p - withheld[t]).abs()));
        let answered = result.transcript.iter().filter(|s| s.answer != Rating::NoRating).count();
        Ok((mad, answered))
    };

    let per_user = eligible
        .par_iter()
        .map(|tu| {
            let seed = rng::derive_seed(config.seed, &[tu.user as u64]);
            let ProtocolSplit::Split { input, withheld } = apply_protocol(&tu.profile, protocol, seed) else {
                unreachable!("eligible users have enough ratings")
            };
            let (voi_mad, voi_answered) = run(&input, &withheld, QueryOrder::Voi)?;
            let order_seed = rng::derive_seed(seed, &[ORDER_TAG]);
            let (random_mad, random_answered) = run(&input, &withheld, QueryOrder::Random { seed: order_seed })?;
            Ok(UserElicitation {
                user: tu.user,
                voi_mad,
                random_mad,
                voi_answered,
                random_answered,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ElicitationOutcome { per_user })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PruningConfig {
    pub keep_fraction: f64,
    pub params: PdParams,
    pub pseudo_profiles: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PruningOutcome {
    /// Titles kept by VOI score and by the random draw, original indices.
    pub voi_kept: Vec<usize>,
    pub random_kept: Vec<usize>,
    /// MAD over targets whose title survives both prunings.
    pub full_mad: f64,
    pub voi_mad: f64,
    pub random_mad: f64,
    pub targets: usize,
}

impl PruningOutcome {
    pub fn voi_degradation(&self) -> f64 {
        self.voi_mad - self.full_mad
    }

    pub fn random_degradation(&self) -> f64 {
        self.random_mad - self.full_mad
    }
}

fn restrict(profile: &UserProfile, kept: &[usize]) -> UserProfile {
    kept.iter()
        .enumerate()
        .filter_map(|(new, &old)| profile.get(old).value().map(|v| (new, v)))
        .collect()
}

/// All-but-1 applied to every rating: each rating of each test user is
/// withheld in turn and predicted from the user's other ratings, restricted
/// to the surviving titles of each pruned matrix. Only targets kept by both
/// prunings are scored, so all three MADs share the same targets.
pub fn pruning_experiment(train: &RatingsMatrix, test: &[TestUser], config: &PruningConfig) -> Result<PruningOutcome> {
    let m = train.n_titles();
    let prune_config = PruneConfig {
        target: PruneTarget::Titles,
        keep_fraction: config.keep_fraction,
        pseudo_profiles: config.pseudo_profiles,
        seed: config.seed,
    };
    let by_voi = voi::prune(train, config.params, &prune_config)?;
    let keep = by_voi.kept.len();
    let mut random_kept =
        rand::seq::index::sample(&mut rng::rng(config.seed, &[RANDOM_PRUNE_TAG]), m, keep).into_vec();
    random_kept.sort_unstable();
    let random_matrix = train.select_titles(&random_kept);

    let position = |kept: &[usize]| {
        let mut pos = vec![None; m];
        for (new, &old) in kept.iter().enumerate() {
            pos[old] = Some(new);
        }
        pos
    };
    let voi_pos = position(&by_voi.kept);
    let random_pos = position(&random_kept);

    let full = PdModel::new(train, config.params);
    let voi_model = PdModel::new(&by_voi.matrix, config.params);
    let random_model = PdModel::new(&random_matrix, config.params);

    let per_user = test
        .par_iter()
        .filter(|tu| tu.profile.len() >= 2)
        .map(|tu| -> Result<[f64; 4]> {
            let mut acc = [0.0; 4];
            for (title, actual) in tu.profile.iter() {
                let (Some(vt), Some(rt)) = (voi_pos[title], random_pos[title]) else {
                    continue;
                };
                let mut input = tu.profile.clone();
                input.remove(title);
                let f = full.predict(title, &input)?;
                let v = voi_model.predict(vt, &restrict(&input, &by_voi.kept))?;
                let r = random_model.predict(rt, &restrict(&input, &random_kept))?;
                acc[0] += (f - actual).abs();
                acc[1] += (v - actual).abs();
                acc[2] += (r - actual).abs();
                acc[3] += 1.0;
            }
            Ok(acc)
        })
        .collect::<Result<Vec<_>>>()?;
    let sums = per_user
        .into_iter()
        .fold([0.0; 4], |acc, x| [acc[0] + x[0], acc[1] + x[1], acc[2] + x[2], acc[3] + x[3]]);
    let targets = sums[3] as usize;
    if targets == 0 {
        return Err(Error::NoPredictions);
    }
    let n = sums[3];
    Ok(PruningOutcome {
        voi_kept: by_voi.kept,
        random_kept,
        full_mad: sums[0] / n,
        voi_mad: sums[1] / n,
        random_mad: sums[2] / n,
        targets,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{generate_synthetic, SyntheticSpec};
    use crate::ratings::RatingScale;

    fn data(seed: u64) -> crate::ingest::SyntheticData {
        generate_synthetic(&SyntheticSpec {
            n_users: 80,
            n_test_users: 12,
            n_titles: 30,
            ratings_per_user: 15,
            n_personalities: 6,
            scale: RatingScale::movie(),
            sigma_true: 1.0,
            seed,
        })
        .unwrap()
    }

    #[test]
    fn elicitation_is_deterministic_and_bounded() {
        let d = data(3);
        let config = ElicitationConfig {
            users: 5,
            budget: 3,
            given: 2,
            params: PdParams::new(1.0).unwrap(),
            seed: 11,
        };
        let a = elicitation_experiment(&d.train, &d.test_users(), &config).unwrap();
        let b = elicitation_experiment(&d.train, &d.test_users(), &config).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.per_user.len(), 5);
        for u in &a.per_user {
            assert!(u.voi_answered <= 3 && u.random_answered <= 3);
            assert!(u.voi_mad.is_finite() && u.random_mad.is_finite());
        }
    }

    #[test]
    fn full_keep_fraction_matches_unpruned() {
        let d = data(5);
        let config = PruningConfig {
            keep_fraction: 1.0,
            params: PdParams::new(1.0).unwrap(),
            pseudo_profiles: 8,
            seed: 2,
        };
        let out = pruning_experiment(&d.train, &d.test_users(), &config).unwrap();
        assert_eq!(out.targets, 12 * 15);
        assert_eq!(out.voi_mad, out.full_mad);
        assert_eq!(out.random_mad, out.full_mad);
    }

    #[test]
    fn restrict_reindexes() {
        let p: UserProfile = [(1, 2.0), (4, 3.0), (5, 1.0)].into_iter().collect();
        let r = restrict(&p, &[0, 4, 5]);
        assert_eq!(r.iter().collect::<Vec<_>>(), vec![(1, 3.0), (2, 1.0)]);
    }
}
