//! Ratings data model: the rating scale, the sparse user × title matrix and
//! the active user's profile.
//!
//! Ratings are stored as indices into the bound [`RatingScale`] ("levels"),
//! in both row-major (per user) and column-major (per title) compressed form.
//! An absent entry is [`Rating::NoRating`]; there is no sentinel value.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Finite, strictly increasing set of allowed rating values.
#[derive(Debug, Clone, PartialEq)]
pub struct RatingScale {
    values: Vec<f64>,
}

impl RatingScale {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::InvalidScale(format!(
                "need at least 2 values, got {}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidScale("values must be finite".into()));
        }
        if values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidScale("values must be strictly increasing".into()));
        }
        Ok(Self { values })
    }

    /// Consecutive integers `lo..=hi`.
    pub fn integers(lo: i64, hi: i64) -> Result<Self> {
        Self::new((lo..=hi).map(|v| v as f64).collect())
    }

    /// The 0–5 movie scale.
    pub fn movie() -> Self {
        Self::integers(0, 5).expect("static scale")
    }

    /// The 0–6 scale produced by weighting logged actions.
    pub fn actions() -> Self {
        Self::integers(0, 6).expect("static scale")
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn min(&self) -> f64 {
        self.values[0]
    }

    pub fn max(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    pub fn value(&self, level: usize) -> f64 {
        self.values[level]
    }

    /// Level of `v` if it is a member of the scale.
    pub fn level_of(&self, v: f64) -> Option<usize> {
        self.values.iter().position(|&s| s == v)
    }

    pub fn contains(&self, v: f64) -> bool {
        self.level_of(v).is_some()
    }

    pub fn checked_level(&self, v: f64) -> Result<usize> {
        self.level_of(v).ok_or(Error::OffScale(v))
    }

    /// Level of the scale value nearest to `v`; ties go to the smaller value.
    pub fn nearest_level(&self, v: f64) -> usize {
        let mut best = 0;
        let mut best_dist = f64::INFINITY;
        for (level, &s) in self.values.iter().enumerate() {
            let d = (s - v).abs();
            if d < best_dist {
                best = level;
                best_dist = d;
            }
        }
        best
    }

    pub fn clamp(&self, v: f64) -> f64 {
        v.clamp(self.min(), self.max())
    }
}

impl fmt::Display for RatingScale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.values.iter().map(|v| v.to_string()).collect();
        f.write_str(&parts.join(","))
    }
}

/// Parses either a comma-separated list (`0,0.5,1`) or an integer range (`0..5`, inclusive).
impl FromStr for RatingScale {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Some((lo, hi)) = s.split_once("..") {
            let lo: i64 = lo
                .trim()
                .parse()
                .map_err(|_| Error::InvalidScale(format!("bad range start in `{s}`")))?;
            let hi: i64 = hi
                .trim()
                .trim_start_matches('=')
                .parse()
                .map_err(|_| Error::InvalidScale(format!("bad range end in `{s}`")))?;
            return Self::integers(lo, hi);
        }
        let values = s
            .split(',')
            .map(|p| {
                p.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::InvalidScale(format!("bad value `{}`", p.trim())))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(values)
    }
}

/// A single cell of the ratings matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Rating {
    Rated(f64),
    NoRating,
}

impl Rating {
    pub fn value(self) -> Option<f64> {
        match self {
            Rating::Rated(v) => Some(v),
            Rating::NoRating => None,
        }
    }

    pub fn is_rated(self) -> bool {
        matches!(self, Rating::Rated(_))
    }
}

impl From<Option<f64>> for Rating {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Rating::NoRating, Rating::Rated)
    }
}

/// Known ratings of one user, keyed by title index. Titles absent from the
/// map form the user's unrated set.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct UserProfile {
    ratings: BTreeMap<usize, f64>,
}

impl UserProfile {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, title: usize, value: f64) -> Option<f64> {
        self.ratings.insert(title, value)
    }

    pub fn remove(&mut self, title: usize) -> Option<f64> {
        self.ratings.remove(&title)
    }

    pub fn get(&self, title: usize) -> Rating {
        self.ratings.get(&title).copied().into()
    }

    pub fn contains(&self, title: usize) -> bool {
        self.ratings.contains_key(&title)
    }

    pub fn len(&self) -> usize {
        self.ratings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ratings.is_empty()
    }

    /// Rated titles in ascending order with their values.
    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.ratings.iter().map(|(&t, &v)| (t, v))
    }

    pub fn titles(&self) -> impl Iterator<Item = usize> + '_ {
        self.ratings.keys().copied()
    }

    pub fn mean(&self) -> Option<f64> {
        if self.ratings.is_empty() {
            None
        } else {
            Some(self.ratings.values().sum::<f64>() / self.ratings.len() as f64)
        }
    }

    /// Titles in `0..n_titles` the user has not rated, ascending.
    pub fn unrated(&self, n_titles: usize) -> Vec<usize> {
        (0..n_titles).filter(|t| !self.ratings.contains_key(t)).collect()
    }

    /// Converts to `(title, level)` pairs, validating every value and title index.
    pub fn levels(&self, scale: &RatingScale, n_titles: usize) -> Result<Vec<(usize, usize)>> {
        self.iter()
            .map(|(t, v)| {
                if t >= n_titles {
                    return Err(Error::OutOfRange {
                        kind: "title",
                        index: t,
                        len: n_titles,
                    });
                }
                Ok((t, scale.checked_level(v)?))
            })
            .collect()
    }
}

impl FromIterator<(usize, f64)> for UserProfile {
    fn from_iter<I: IntoIterator<Item = (usize, f64)>>(iter: I) -> Self {
        Self {
            ratings: iter.into_iter().collect(),
        }
    }
}

/// Sparse n × m ratings store bound to a [`RatingScale`].
///
/// Immutable once built; both per-user and per-title views are precomputed.
#[derive(Debug, Clone, PartialEq)]
pub struct RatingsMatrix {
    scale: RatingScale,
    n_users: usize,
    n_titles: usize,
    row_ptr: Vec<usize>,
    row_titles: Vec<usize>,
    row_levels: Vec<u16>,
    col_ptr: Vec<usize>,
    col_users: Vec<usize>,
    col_levels: Vec<u16>,
}

impl RatingsMatrix {
    /// Builds a matrix from `(user, title, value)` triples. Later duplicates
    /// of the same `(user, title)` overwrite earlier ones.
    pub fn from_entries<I>(n_users: usize, n_titles: usize, scale: RatingScale, entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize, f64)>,
    {
        let mut triples = Vec::new();
        for (u, t, v) in entries {
            if u >= n_users {
                return Err(Error::OutOfRange {
                    kind: "user",
                    index: u,
                    len: n_users,
                });
            }
            if t >= n_titles {
                return Err(Error::OutOfRange {
                    kind: "title",
                    index: t,
                    len: n_titles,
                });
            }
            triples.push((u, t, scale.checked_level(v)? as u16));
        }
        Ok(Self::from_levels(n_users, n_titles, scale, triples))
    }

    /// Triples must already be in range and on scale.
    pub(crate) fn from_levels(
        n_users: usize,
        n_titles: usize,
        scale: RatingScale,
        mut triples: Vec<(usize, usize, u16)>,
    ) -> Self {
        // stable sort keeps insertion order within a key, so the last one wins
        triples.sort_by_key(|&(u, t, _)| (u, t));
        let mut deduped: Vec<(usize, usize, u16)> = Vec::with_capacity(triples.len());
        for e in triples {
            match deduped.last_mut() {
                Some(last) if last.0 == e.0 && last.1 == e.1 => *last = e,
                _ => deduped.push(e),
            }
        }

        let mut row_ptr = vec![0usize; n_users + 1];
        let mut col_ptr = vec![0usize; n_titles + 1];
        for &(u, t, _) in &deduped {
            row_ptr[u + 1] += 1;
            col_ptr[t + 1] += 1;
        }
        for i in 0..n_users {
            row_ptr[i + 1] += row_ptr[i];
        }
        for j in 0..n_titles {
            col_ptr[j + 1] += col_ptr[j];
        }
        let row_titles = deduped.iter().map(|e| e.1).collect();
        let row_levels = deduped.iter().map(|e| e.2).collect();

        let nnz = deduped.len();
        let mut col_users = vec![0usize; nnz];
        let mut col_levels = vec![0u16; nnz];
        let mut cursor = col_ptr.clone();
        // row-major traversal fills each column in ascending user order
        for &(u, t, l) in &deduped {
            let k = cursor[t];
            col_users[k] = u;
            col_levels[k] = l;
            cursor[t] += 1;
        }

        Self {
            scale,
            n_users,
            n_titles,
            row_ptr,
            row_titles,
            row_levels,
            col_ptr,
            col_users,
            col_levels,
        }
    }

    pub fn scale(&self) -> &RatingScale {
        &self.scale
    }

    pub fn n_users(&self) -> usize {
        self.n_users
    }

    pub fn n_titles(&self) -> usize {
        self.n_titles
    }

    /// Number of stored (non-⊥) ratings.
    pub fn nnz(&self) -> usize {
        self.row_titles.len()
    }

    pub fn get(&self, user: usize, title: usize) -> Rating {
        self.level(user, title)
            .map_or(Rating::NoRating, |l| Rating::Rated(self.scale.value(l)))
    }

    pub fn level(&self, user: usize, title: usize) -> Option<usize> {
        if user >= self.n_users {
            return None;
        }
        let (titles, levels) = self.user_levels(user);
        titles.binary_search(&title).ok().map(|k| levels[k] as usize)
    }

    /// Titles (ascending) and levels rated by `user`.
    pub fn user_levels(&self, user: usize) -> (&[usize], &[u16]) {
        let (a, b) = (self.row_ptr[user], self.row_ptr[user + 1]);
        (&self.row_titles[a..b], &self.row_levels[a..b])
    }

    /// Users (ascending) and levels that rated `title`.
    pub fn title_levels(&self, title: usize) -> (&[usize], &[u16]) {
        let (a, b) = (self.col_ptr[title], self.col_ptr[title + 1]);
        (&self.col_users[a..b], &self.col_levels[a..b])
    }

    pub fn user_ratings(&self, user: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (titles, levels) = self.user_levels(user);
        titles
            .iter()
            .zip(levels)
            .map(move |(&t, &l)| (t, self.scale.value(l as usize)))
    }

    pub fn title_ratings(&self, title: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (users, levels) = self.title_levels(title);
        users
            .iter()
            .zip(levels)
            .map(move |(&u, &l)| (u, self.scale.value(l as usize)))
    }

    pub fn user_count(&self, user: usize) -> usize {
        self.row_ptr[user + 1] - self.row_ptr[user]
    }

    pub fn title_count(&self, title: usize) -> usize {
        self.col_ptr[title + 1] - self.col_ptr[title]
    }

    /// All stored entries in row-major order.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n_users).flat_map(move |u| self.user_ratings(u).map(move |(t, v)| (u, t, v)))
    }

    pub fn user_profile(&self, user: usize) -> UserProfile {
        self.user_ratings(user).collect()
    }

    /// Mean of all stored ratings (R̄).
    pub fn overall_mean(&self) -> Result<f64> {
        if self.nnz() == 0 {
            return Err(Error::NoRatings);
        }
        let sum: f64 = self.row_levels.iter().map(|&l| self.scale.value(l as usize)).sum();
        Ok(sum / self.nnz() as f64)
    }

    pub fn user_mean(&self, user: usize) -> Result<f64> {
        if user >= self.n_users {
            return Err(Error::OutOfRange {
                kind: "user",
                index: user,
                len: self.n_users,
            });
        }
        let n = self.user_count(user);
        if n == 0 {
            return Err(Error::EmptyUser(user));
        }
        Ok(self.user_ratings(user).map(|(_, v)| v).sum::<f64>() / n as f64)
    }

    /// Population standard deviation of all stored ratings.
    pub fn rating_std(&self) -> Result<f64> {
        let mean = self.overall_mean()?;
        let ss: f64 = self
            .row_levels
            .iter()
            .map(|&l| (self.scale.value(l as usize) - mean).powi(2))
            .sum();
        Ok((ss / self.nnz() as f64).sqrt())
    }

    /// Keeps the listed users (in the given order) as rows `0..users.len()`.
    pub fn select_users(&self, users: &[usize]) -> RatingsMatrix {
        let mut triples = Vec::new();
        for (new_u, &u) in users.iter().enumerate() {
            let (titles, levels) = self.user_levels(u);
            triples.extend(titles.iter().zip(levels).map(|(&t, &l)| (new_u, t, l)));
        }
        Self::from_levels(users.len(), self.n_titles, self.scale.clone(), triples)
    }

    /// Keeps the listed titles (in the given order) as columns `0..titles.len()`.
    pub fn select_titles(&self, titles: &[usize]) -> RatingsMatrix {
        let mut triples = Vec::new();
        for (new_t, &t) in titles.iter().enumerate() {
            let (users, levels) = self.title_levels(t);
            triples.extend(users.iter().zip(levels).map(|(&u, &l)| (u, new_t, l)));
        }
        Self::from_levels(self.n_users, titles.len(), self.scale.clone(), triples)
    }
}

/// Bidirectional map between external identifiers and dense indices.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SymbolTable {
    names: Vec<String>,
    index: HashMap<String, usize>,
}

impl SymbolTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns the index of `name`, assigning the next free one if unseen.
    pub fn intern(&mut self, name: &str) -> usize {
        if let Some(&i) = self.index.get(name) {
            return i;
        }
        let i = self.names.len();
        self.names.push(name.to_owned());
        self.index.insert(name.to_owned(), i);
        i
    }

    pub fn get(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn name(&self, i: usize) -> &str {
        &self.names[i]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    /// Keeps only the listed indices, renumbered in the given order.
    pub fn select(&self, keep: &[usize]) -> SymbolTable {
        let mut out = SymbolTable::new();
        for &i in keep {
            out.intern(&self.names[i]);
        }
        out
    }

    /// Canonical ordering: numeric identifiers ascending by value, then the
    /// rest lexicographically. Returns the permutation `old index → new index`.
    pub(crate) fn canonicalize(&mut self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.names.len()).collect();
        order.sort_by(|&a, &b| compare_ids(&self.names[a], &self.names[b]));
        let mut remap = vec![0; self.names.len()];
        for (new_i, &old_i) in order.iter().enumerate() {
            remap[old_i] = new_i;
        }
        let names: Vec<String> = order.iter().map(|&i| self.names[i].clone()).collect();
        self.index = names.iter().enumerate().map(|(i, n)| (n.clone(), i)).collect();
        self.names = names;
        remap
    }
}

fn compare_ids(a: &str, b: &str) -> std::cmp::Ordering {
    match (a.parse::<u64>(), b.parse::<u64>()) {
        (Ok(x), Ok(y)) => x.cmp(&y).then_with(|| a.cmp(b)),
        (Ok(_), Err(_)) => std::cmp::Ordering::Less,
        (Err(_), Ok(_)) => std::cmp::Ordering::Greater,
        (Err(_), Err(_)) => a.cmp(b),
    }
}
