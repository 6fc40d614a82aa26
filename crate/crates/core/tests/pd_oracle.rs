mod common;

use std::time::{Duration, Instant};

use common::instances::{random_instance, Instance};
use common::oracle;
use pdiag::pd::PdModel;
use pdiag::voi::{expected_information_gain, rank_queries};
use pdiag::{PdParams, RatingScale, RatingsMatrix, UserProfile};

const TOL: f64 = 1e-9;
const SCALE: [f64; 3] = [0.0, 1.0, 2.0];

fn check(inst: &Instance) {
    let matrix = inst.matrix();
    let model = PdModel::new(&matrix, inst.params());
    let profile = inst.profile();
    let post = model.posterior(&profile).unwrap();
    let expect = oracle::posterior(&inst.grid, &inst.active, &inst.scale, inst.sigma);
    for (a, b) in post.probs().iter().zip(&expect) {
        assert!((a - b).abs() < TOL, "posterior {a} vs {b}");
    }
    for t in inst.unrated() {
        let pred = model.predictive_distribution(t, &profile).unwrap();
        let expect = oracle::predictive(&inst.grid, &inst.active, t, &inst.scale, inst.sigma);
        for (a, b) in pred.probs().iter().zip(&expect) {
            assert!((a - b).abs() < TOL, "predictive {a} vs {b}");
        }
        if let Some(mode) = oracle::clear_mode(&expect, &inst.scale, 1e-9) {
            assert_eq!(model.predict(t, &profile).unwrap(), mode);
        }
        let g = expected_information_gain(t, &profile, &matrix, inst.params()).unwrap();
        let expect = oracle::gain(&inst.grid, &inst.active, t, &inst.scale, inst.sigma);
        assert!((g - expect).abs() < TOL, "gain {g} vs {expect}");
    }
}

#[test]
fn toy_three_by_four() {
    let grid = vec![
        vec![Some(2.0), None, Some(0.0), Some(1.0)],
        vec![Some(0.0), Some(2.0), None, Some(2.0)],
        vec![None, Some(1.0), Some(1.0), Some(0.0)],
    ];
    let inst = Instance {
        grid,
        active: vec![(0, 2.0), (3, 1.0)],
        scale: SCALE.to_vec(),
        sigma: 1.0,
    };
    check(&inst);

    let matrix = inst.matrix();
    let ranked = rank_queries(&inst.profile(), &matrix, inst.params(), 10).unwrap();
    let mut expect: Vec<(usize, f64)> = inst
        .unrated()
        .into_iter()
        .map(|t| (t, oracle::gain(&inst.grid, &inst.active, t, &inst.scale, 1.0)))
        .collect();
    expect.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let got: Vec<usize> = ranked.iter().map(|q| q.title).collect();
    assert_eq!(got, expect.iter().map(|e| e.0).collect::<Vec<_>>());
}

#[test]
fn random_small_instances_match_enumeration() {
    for i in 0..300 {
        check(&random_instance(0x0AC1E, i, 4, 4, &SCALE));
    }
}

#[test]
fn wider_scale_instances_match_enumeration() {
    let scale: Vec<f64> = (0..=5).map(f64::from).collect();
    for i in 0..100 {
        check(&random_instance(91, i, 6, 5, &scale));
    }
}

#[test]
fn user_order_does_not_change_predictions() {
    for i in 0..50 {
        let inst = random_instance(5, i, 4, 4, &SCALE);
        let mut reversed = inst.grid.clone();
        reversed.reverse();
        let rev = Instance {
            grid: reversed,
            active: inst.active.clone(),
            scale: inst.scale.clone(),
            sigma: inst.sigma,
        };
        let (a, b) = (inst.matrix(), rev.matrix());
        let (ma, mb) = (PdModel::new(&a, inst.params()), PdModel::new(&b, inst.params()));
        for t in inst.unrated() {
            let pa = ma.predictive_distribution(t, &inst.profile()).unwrap();
            let pb = mb.predictive_distribution(t, &inst.profile()).unwrap();
            for (x, y) in pa.probs().iter().zip(pb.probs()) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn agreeing_rating_raises_posterior_mass() {
    // user 0 rates title 1 like the active user, user 1 does not
    let m = RatingsMatrix::from_entries(
        2,
        2,
        RatingScale::movie(),
        [(0, 0, 3.0), (1, 0, 3.0), (0, 1, 4.0), (1, 1, 0.0)],
    )
    .unwrap();
    let model = PdModel::new(&m, PdParams::new(1.0).unwrap());
    let before: UserProfile = [(0, 3.0)].into_iter().collect();
    let after: UserProfile = [(0, 3.0), (1, 4.0)].into_iter().collect();
    let p0 = model.posterior(&before).unwrap().probs()[0];
    let p1 = model.posterior(&after).unwrap().probs()[0];
    assert!(p1 > p0);
}

#[test]
fn posterior_reuse_matches_fresh_computation() {
    for i in 0..40 {
        let inst = random_instance(17, i, 4, 4, &SCALE);
        let matrix = inst.matrix();
        let model = PdModel::new(&matrix, inst.params());
        let post = model.posterior(&inst.profile()).unwrap();
        for t in inst.unrated() {
            let reused = model.predictive_with(t, &post);
            let fresh = model.predictive_distribution(t, &inst.profile()).unwrap();
            assert_eq!(reused, fresh);
        }
    }
}

fn synthetic_matrix(n: usize, m: usize, seed: u64) -> RatingsMatrix {
    use rand::Rng as _;
    let mut r = pdiag::rng::rng(seed, &[]);
    let mut entries = Vec::new();
    for u in 0..n {
        for t in 0..m {
            if r.random_bool(0.3) {
                entries.push((u, t, r.random_range(0..6) as f64));
            }
        }
    }
    RatingsMatrix::from_entries(n, m, RatingScale::movie(), entries).unwrap()
}

fn best_time(matrix: &RatingsMatrix, profile: &UserProfile) -> Duration {
    let model = PdModel::new(matrix, PdParams::default());
    (0..5)
        .map(|_| {
            let start = Instant::now();
            std::hint::black_box(model.predict_all(profile).unwrap());
            start.elapsed()
        })
        .min()
        .unwrap()
}

#[test]
fn prediction_cost_scales_linearly_in_users() {
    let profile: UserProfile = (0..100).map(|t| (t * 2, (t % 6) as f64)).collect();
    let small = synthetic_matrix(2000, 200, 1);
    let large = synthetic_matrix(4000, 200, 1);
    let ratio = best_time(&large, &profile).as_secs_f64() / best_time(&small, &profile).as_secs_f64();
    assert!(ratio < 3.0, "doubling users took {ratio:.2}x");
}
