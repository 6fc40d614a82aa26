//! Seeded random small instances shared by the oracle checks.

use pdiag::rng;
use pdiag::{PdParams, RatingScale, RatingsMatrix, UserProfile};
use rand::Rng as _;

use super::oracle::Grid;

pub const SIGMAS: [f64; 3] = [0.5, 1.0, 2.5];

pub struct Instance {
    pub grid: Grid,
    pub active: Vec<(usize, f64)>,
    pub scale: Vec<f64>,
    pub sigma: f64,
}

impl Instance {
    pub fn matrix(&self) -> RatingsMatrix {
        let entries = self.grid.iter().enumerate().flat_map(|(u, row)| {
            row.iter().enumerate().filter_map(move |(t, v)| v.map(|v| (u, t, v)))
        });
        RatingsMatrix::from_entries(
            self.grid.len(),
            self.grid[0].len(),
            RatingScale::new(self.scale.clone()).unwrap(),
            entries,
        )
        .unwrap()
    }

    pub fn profile(&self) -> UserProfile {
        self.active.iter().copied().collect()
    }

    pub fn params(&self) -> PdParams {
        PdParams::new(self.sigma).unwrap()
    }

    pub fn unrated(&self) -> Vec<usize> {
        (0..self.grid[0].len())
            .filter(|t| !self.active.iter().any(|(a, _)| a == t))
            .collect()
    }
}

/// `n <= max_users`, `m <= max_titles`, ratings on `scale`, about 60% density,
/// and an active user who leaves at least one title unrated.
pub fn random_instance(seed: u64, index: u64, max_users: usize, max_titles: usize, scale: &[f64]) -> Instance {
    let mut r = rng::rng(seed, &[index]);
    let n = r.random_range(1..=max_users);
    let m = r.random_range(1..=max_titles);
    let grid = (0..n)
        .map(|_| {
            (0..m)
                .map(|_| r.random_bool(0.6).then(|| scale[r.random_range(0..scale.len())]))
                .collect()
        })
        .collect();
    let n_active = r.random_range(0..m);
    let active = rand::seq::index::sample(&mut r, m, n_active)
        .into_iter()
        .map(|t| (t, scale[r.random_range(0..scale.len())]))
        .collect();
    Instance {
        grid,
        active,
        scale: scale.to_vec(),
        sigma: SIGMAS[r.random_range(0..SIGMAS.len())],
    }
}
