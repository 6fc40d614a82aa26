//! Brute-force reference implementations over dense `Option<f64>` grids.
//!
//! Nothing here touches the library's model code: likelihoods come straight
//! from the Gaussian kernel, posteriors from explicit products, and the
//! information gain from re-running the posterior for every hypothetical
//! answer.

/// Dense ratings: `grid[user][title]`, `None` for no rating.
pub type Grid = Vec<Vec<Option<f64>>>;

pub fn likelihood(x: f64, y: Option<f64>, scale: &[f64], sigma: f64) -> f64 {
    match y {
        None => 1.0 / scale.len() as f64,
        Some(y) => {
            let k = |v: f64| (-(v - y) * (v - y) / (2.0 * sigma * sigma)).exp();
            k(x) / scale.iter().map(|&v| k(v)).sum::<f64>()
        }
    }
}

pub fn posterior(grid: &Grid, active: &[(usize, f64)], scale: &[f64], sigma: f64) -> Vec<f64> {
    let weights: Vec<f64> = grid
        .iter()
        .map(|row| {
            active
                .iter()
                .map(|&(t, x)| likelihood(x, row[t], scale, sigma))
                .product::<f64>()
        })
        .collect();
    let z: f64 = weights.iter().sum();
    weights.iter().map(|w| w / z).collect()
}

pub fn predictive(grid: &Grid, active: &[(usize, f64)], title: usize, scale: &[f64], sigma: f64) -> Vec<f64> {
    let post = posterior(grid, active, scale, sigma);
    scale
        .iter()
        .map(|&x| {
            grid.iter()
                .zip(&post)
                .map(|(row, w)| w * likelihood(x, row[title], scale, sigma))
                .sum()
        })
        .collect()
}

pub fn entropy(p: &[f64]) -> f64 {
    -p.iter().filter(|&&v| v > 0.0).map(|v| v * v.ln()).sum::<f64>()
}

pub fn gain(grid: &Grid, active: &[(usize, f64)], title: usize, scale: &[f64], sigma: f64) -> f64 {
    let h0 = entropy(&posterior(grid, active, scale, sigma));
    let pred = predictive(grid, active, title, scale, sigma);
    let expected_after: f64 = scale
        .iter()
        .zip(&pred)
        .map(|(&x, &px)| {
            let mut augmented = active.to_vec();
            augmented.push((title, x));
            px * entropy(&posterior(grid, &augmented, scale, sigma))
        })
        .sum();
    h0 - expected_after
}

/// Most probable scale value, or `None` when the top two are within `eps`.
pub fn clear_mode(p: &[f64], scale: &[f64], eps: f64) -> Option<f64> {
    let mut idx: Vec<usize> = (0..p.len()).collect();
    idx.sort_by(|&a, &b| p[b].total_cmp(&p[a]));
    (p[idx[0]] - p[idx[1]] > eps).then(|| scale[idx[0]])
}

/// Two-sided significance over every re-partition of the pooled scores.
pub fn exhaustive_significance(a: &[f64], b: &[f64]) -> f64 {
    let pool: Vec<f64> = a.iter().chain(b).copied().collect();
    let (na, n) = (a.len(), pool.len());
    let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
    let observed = (mean(a) - mean(b)).abs();
    let (mut hits, mut total) = (0usize, 0usize);
    for mask in 0u32..(1 << n) {
        if mask.count_ones() as usize != na {
            continue;
        }
        let (ga, gb): (Vec<f64>, Vec<f64>) = {
            let mut ga = Vec::new();
            let mut gb = Vec::new();
            for (i, &v) in pool.iter().enumerate() {
                if mask >> i & 1 == 1 { ga.push(v) } else { gb.push(v) }
            }
            (ga, gb)
        };
        total += 1;
        if (mean(&ga) - mean(&gb)).abs() >= observed - 1e-12 {
            hits += 1;
        }
    }
    hits as f64 / total as f64
}
