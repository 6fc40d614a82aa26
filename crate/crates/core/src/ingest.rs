//! Data ingestion: ratings and profile CSV files, action-log conversion,
//! density filtering and the synthetic generator.
//!
//! Identifiers are interned and then put in canonical order (numeric ids by
//! value, then the rest lexicographically), so exporting a loaded dataset and
//! loading it again reproduces the same indices.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::eval::TestUser;
use crate::ratings::{RatingScale, RatingsMatrix, SymbolTable, UserProfile};
use crate::rng;

pub const RATINGS_HEADER: [&str; 3] = ["user_id", "item_id", "rating"];
pub const PROFILE_HEADER: [&str; 2] = ["item_id", "rating"];
pub const ACTIONS_HEADER: [&str; 3] = ["user_id", "doc_id", "action"];

/// A ratings matrix together with the identifiers of its rows and columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub matrix: RatingsMatrix,
    pub users: SymbolTable,
    pub titles: SymbolTable,
}

impl Dataset {
    /// Builds a dataset from identifier triples; later duplicates win.
    /// Returns the dataset and the number of overwritten duplicates.
    pub fn from_named<'a, I>(scale: RatingScale, entries: I) -> Result<(Self, usize)>
    where
        I: IntoIterator<Item = (&'a str, &'a str, f64)>,
    {
        let mut users = SymbolTable::new();
        let mut titles = SymbolTable::new();
        let mut triples = Vec::new();
        for (u, t, v) in entries {
            triples.push((users.intern(u), titles.intern(t), v));
        }
        build(scale, users, titles, triples)
    }

    pub fn select_users(&self, keep: &[usize]) -> Dataset {
        Dataset {
            matrix: self.matrix.select_users(keep),
            users: self.users.select(keep),
            titles: self.titles.clone(),
        }
    }

    pub fn select_titles(&self, keep: &[usize]) -> Dataset {
        Dataset {
            matrix: self.matrix.select_titles(keep),
            users: self.users.clone(),
            titles: self.titles.select(keep),
        }
    }
}

fn build(
    scale: RatingScale,
    mut users: SymbolTable,
    mut titles: SymbolTable,
    triples: Vec<(usize, usize, f64)>,
) -> Result<(Dataset, usize)> {
    if triples.is_empty() {
        return Err(Error::NoRatings);
    }
    let user_map = users.canonicalize();
    let title_map = titles.canonicalize();
    let mut seen = HashSet::new();
    let mut duplicates = 0;
    let remapped: Vec<(usize, usize, f64)> = triples
        .into_iter()
        .map(|(u, t, v)| {
            let key = (user_map[u], title_map[t]);
            if !seen.insert(key) {
                duplicates += 1;
            }
            (key.0, key.1, v)
        })
        .collect();
    let matrix = RatingsMatrix::from_entries(users.len(), titles.len(), scale, remapped)?;
    Ok((Dataset { matrix, users, titles }, duplicates))
}

/// Puts held-out users into the training title index. Titles rated only by
/// test users become empty training columns; test users are numbered after
/// the training users.
pub fn align_test_users(train: &Dataset, test: &Dataset) -> Result<(Dataset, Vec<TestUser>)> {
    let mut titles = train.titles.clone();
    let title_map: Vec<usize> = test.titles.names().iter().map(|name| titles.intern(name)).collect();
    let matrix = if titles.len() == train.matrix.n_titles() {
        train.matrix.clone()
    } else {
        RatingsMatrix::from_entries(
            train.matrix.n_users(),
            titles.len(),
            train.matrix.scale().clone(),
            train.matrix.entries(),
        )?
    };
    let n = matrix.n_users();
    let users = (0..test.matrix.n_users())
        .map(|k| TestUser {
            user: n + k,
            profile: test.matrix.user_ratings(k).map(|(t, v)| (title_map[t], v)).collect(),
        })
        .collect();
    let aligned = Dataset {
        matrix,
        users: train.users.clone(),
        titles,
    };
    Ok((aligned, users))
}

#[derive(Debug, Clone)]
pub struct LoadedRatings {
    pub dataset: Dataset,
    /// `(user, item)` pairs seen more than once; the last value was kept.
    pub duplicates: usize,
}

fn reader_for<R: Read>(reader: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader)
}

fn check_header<R: Read>(rdr: &mut csv::Reader<R>, expected: &[&str]) -> Result<()> {
    let headers = rdr.headers().map_err(|e| malformed(&e))?;
    if headers.iter().ne(expected.iter().copied()) {
        return Err(Error::Malformed {
            line: 1,
            message: format!(
                "expected header `{}`, found `{}`",
                expected.join(","),
                headers.iter().collect::<Vec<_>>().join(",")
            ),
        });
    }
    Ok(())
}

fn malformed(e: &csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    Error::Malformed {
        line,
        message: e.to_string(),
    }
}

fn parse_rating(field: &str, line: u64, scale: &RatingScale) -> Result<f64> {
    let value: f64 = field.parse().map_err(|_| Error::Malformed {
        line,
        message: format!("rating `{field}` is not a number"),
    })?;
    if !scale.contains(value) {
        return Err(Error::OffScaleAt { line, value });
    }
    Ok(value)
}

/// Reads `user_id,item_id,rating` records.
pub fn read_ratings_csv<R: Read>(reader: R, scale: &RatingScale) -> Result<LoadedRatings> {
    let mut rdr = reader_for(reader);
    check_header(&mut rdr, &RATINGS_HEADER)?;
    let mut users = SymbolTable::new();
    let mut titles = SymbolTable::new();
    let mut triples = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| malformed(&e))?;
        let line = record.position().map_or(0, |p| p.line());
        let value = parse_rating(&record[2], line, scale)?;
        triples.push((users.intern(&record[0]), titles.intern(&record[1]), value));
    }
    let (dataset, duplicates) = build(scale.clone(), users, titles, triples)?;
    Ok(LoadedRatings { dataset, duplicates })
}

pub fn load_ratings_csv(path: impl AsRef<Path>, scale: &RatingScale) -> Result<LoadedRatings> {
    read_ratings_csv(File::open(path)?, scale)
}

/// Writes `user_id,item_id,rating` in row-major order; values use the
/// shortest decimal that round-trips.
pub fn write_ratings_csv<W: Write>(dataset: &Dataset, writer: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(writer);
    w.write_record(RATINGS_HEADER)?;
    for (u, t, v) in dataset.matrix.entries() {
        w.write_record([dataset.users.name(u), dataset.titles.name(t), &v.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn ratings_csv_string(dataset: &Dataset) -> Result<String> {
    let mut buf = Vec::new();
    write_ratings_csv(dataset, &mut buf)?;
    Ok(String::from_utf8(buf).expect("csv output is utf-8"))
}

/// Reads an `item_id,rating` profile against a known title table. Unknown
/// items are collected and reported together.
pub fn read_profile_csv<R: Read>(reader: R, titles: &SymbolTable, scale: &RatingScale) -> Result<UserProfile> {
    let mut rdr = reader_for(reader);
    check_header(&mut rdr, &PROFILE_HEADER)?;
    let mut profile = UserProfile::new();
    let mut unknown = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| malformed(&e))?;
        let line = record.position().map_or(0, |p| p.line());
        let value = parse_rating(&record[1], line, scale)?;
        match titles.get(&record[0]) {
            Some(t) => {
                profile.insert(t, value);
            }
            None => unknown.push(record[0].to_string()),
        }
    }
    if !unknown.is_empty() {
        return Err(Error::UnknownItems(unknown));
    }
    Ok(profile)
}

/// Per-action weights used to turn logged actions into ratings.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionWeights {
    weights: BTreeMap<String, f64>,
}

impl Default for ActionWeights {
    fn default() -> Self {
        let table = [
            ("add-to-profile", 2.0),
            ("download", 1.0),
            ("view-details", 0.5),
            ("view-bibliography", 0.5),
            ("view-page-image", 0.5),
            ("ignore-recommendation", -1.0),
            ("view-same-source", 0.5),
            ("view-overlap", 1.0),
            ("correct-details", 1.0),
            ("view-citation-context", 1.0),
            ("view-related", 0.5),
        ];
        Self {
            weights: table.iter().map(|&(k, v)| (k.to_string(), v)).collect(),
        }
    }
}

impl ActionWeights {
    pub fn new(weights: BTreeMap<String, f64>) -> Self {
        Self { weights }
    }

    pub fn get(&self, action: &str) -> Option<f64> {
        self.weights.get(action).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.weights.iter().map(|(k, &v)| (k.as_str(), v))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActionEvent {
    pub user: String,
    pub doc: String,
    pub action: String,
}

/// Reads a `user_id,doc_id,action` log.
pub fn read_action_log<R: Read>(reader: R) -> Result<Vec<ActionEvent>> {
    let mut rdr = reader_for(reader);
    check_header(&mut rdr, &ACTIONS_HEADER)?;
    rdr.records()
        .map(|r| {
            let r = r.map_err(|e| malformed(&e))?;
            Ok(ActionEvent {
                user: r[0].to_string(),
                doc: r[1].to_string(),
                action: r[2].to_string(),
            })
        })
        .collect()
}

/// Sums action weights per (user, document), rounds half away from zero and
/// clamps into the scale range. Every logged action counts, repeats included.
pub fn actions_to_ratings(log: &[ActionEvent], weights: &ActionWeights, scale: &RatingScale) -> Result<Dataset> {
    let mut users = SymbolTable::new();
    let mut titles = SymbolTable::new();
    let mut sums: HashMap<(usize, usize), f64> = HashMap::new();
    let mut order = Vec::new();
    for ev in log {
        let w = weights
            .get(&ev.action)
            .ok_or_else(|| Error::UnknownAction(ev.action.clone()))?;
        let key = (users.intern(&ev.user), titles.intern(&ev.doc));
        let slot = sums.entry(key).or_insert_with(|| {
            order.push(key);
            0.0
        });
        *slot += w;
    }
    let triples = order
        .into_iter()
        .map(|key| {
            let v = scale.clamp(sums[&key].round());
            scale.checked_level(v)?;
            Ok((key.0, key.1, v))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(build(scale.clone(), users, titles, triples)?.0)
}

/// Surviving rows and columns after density filtering.
#[derive(Debug, Clone)]
pub struct DensityFilter {
    /// Result at the fixpoint.
    pub matrix: RatingsMatrix,
    /// Original indices, ascending.
    pub kept_users: Vec<usize>,
    pub kept_titles: Vec<usize>,
    /// `(users, titles, ratings)` after the first title-then-user pass.
    pub single_pass: (usize, usize, usize),
    /// Passes until nothing changed (at least 1).
    pub passes: usize,
}

fn filter_pass(
    matrix: &RatingsMatrix,
    users: &[usize],
    titles: &[usize],
    min_users_per_title: usize,
    min_titles_per_user: usize,
) -> (Vec<usize>, Vec<usize>) {
    let user_set: HashSet<usize> = users.iter().copied().collect();
    let kept_titles: Vec<usize> = titles
        .iter()
        .copied()
        .filter(|&t| {
            matrix.title_levels(t).0.iter().filter(|u| user_set.contains(u)).count() >= min_users_per_title
        })
        .collect();
    let title_set: HashSet<usize> = kept_titles.iter().copied().collect();
    let kept_users = users
        .iter()
        .copied()
        .filter(|&u| {
            matrix.user_levels(u).0.iter().filter(|t| title_set.contains(t)).count() >= min_titles_per_user
        })
        .collect();
    (kept_users, kept_titles)
}

/// Drops titles with fewer than `min_users_per_title` ratings, then users with
/// fewer than `min_titles_per_user` ratings among surviving titles, repeating
/// until nothing changes.
pub fn filter_density(matrix: &RatingsMatrix, min_users_per_title: usize, min_titles_per_user: usize) -> DensityFilter {
    let mut users: Vec<usize> = (0..matrix.n_users()).collect();
    let mut titles: Vec<usize> = (0..matrix.n_titles()).collect();
    let mut passes = 0;
    let mut single_pass = None;
    loop {
        let (u, t) = filter_pass(matrix, &users, &titles, min_users_per_title, min_titles_per_user);
        passes += 1;
        let changed = u != users || t != titles;
        users = u;
        titles = t;
        if single_pass.is_none() {
            let reduced = matrix.select_users(&users).select_titles(&titles);
            single_pass = Some((users.len(), titles.len(), reduced.nnz()));
        }
        if !changed {
            break;
        }
    }
    DensityFilter {
        matrix: matrix.select_users(&users).select_titles(&titles),
        kept_users: users,
        kept_titles: titles,
        single_pass: single_pass.expect("at least one pass"),
        passes,
    }
}

/// Parameters of the synthetic generator.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub n_users: usize,
    pub n_test_users: usize,
    pub n_titles: usize,
    pub ratings_per_user: usize,
    /// Number of distinct latent rating vectors users copy from.
    pub n_personalities: usize,
    pub scale: RatingScale,
    pub sigma_true: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.to_string()));
        if self.n_users == 0 || self.n_titles == 0 || self.n_personalities == 0 {
            return bad("n_users, n_titles and n_personalities must be positive");
        }
        if self.ratings_per_user == 0 || self.ratings_per_user > self.n_titles {
            return bad("ratings_per_user must lie in 1..=n_titles");
        }
        if !(self.sigma_true.is_finite() && self.sigma_true > 0.0) {
            return bad("sigma_true must be > 0");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticUser {
    pub personality: usize,
    pub profile: UserProfile,
}

#[derive(Debug, Clone)]
pub struct SyntheticData {
    /// Latent rating vectors, one value per title.
    pub personalities: Vec<Vec<f64>>,
    pub train: RatingsMatrix,
    pub train_personality: Vec<usize>,
    pub test: Vec<SyntheticUser>,
}

impl SyntheticData {
    /// Test users numbered after the training users.
    pub fn test_users(&self) -> Vec<TestUser> {
        let n = self.train.n_users();
        self.test
            .iter()
            .enumerate()
            .map(|(k, u)| TestUser {
                user: n + k,
                profile: u.profile.clone(),
            })
            .collect()
    }

    /// Training data with numeric identifiers (`0..n` users, `0..m` titles).
    pub fn train_dataset(&self) -> Dataset {
        numbered(self.train.clone(), 0)
    }

    /// Test users as a dataset with identifiers continuing after the training users.
    pub fn test_dataset(&self) -> Dataset {
        let m = self.train.n_titles();
        let entries = self
            .test
            .iter()
            .enumerate()
            .flat_map(|(k, u)| u.profile.iter().map(move |(t, v)| (k, t, v)));
        let matrix = RatingsMatrix::from_entries(self.test.len(), m, self.train.scale().clone(), entries)
            .expect("generated ratings are on scale");
        numbered(matrix, self.train.n_users())
    }
}

fn numbered(matrix: RatingsMatrix, user_offset: usize) -> Dataset {
    let mut users = SymbolTable::new();
    for u in 0..matrix.n_users() {
        users.intern(&(u + user_offset).to_string());
    }
    let mut titles = SymbolTable::new();
    for t in 0..matrix.n_titles() {
        titles.intern(&t.to_string());
    }
    Dataset { matrix, users, titles }
}

fn draw_user(spec: &SyntheticSpec, personalities: &[Vec<f64>], noise: &Normal<f64>, r: &mut rng::Rng) -> SyntheticUser {
    let personality = r.random_range(0..personalities.len());
    let mut titles = rand::seq::index::sample(r, spec.n_titles, spec.ratings_per_user).into_vec();
    titles.sort_unstable();
    let profile = titles
        .into_iter()
        .map(|t| {
            let noisy = personalities[personality][t] + noise.sample(r);
            (t, spec.scale.value(spec.scale.nearest_level(noisy)))
        })
        .collect();
    SyntheticUser { personality, profile }
}

/// Draws users from the generative model: each copies a uniformly chosen
/// latent rating vector and reports a random subset of titles with Gaussian
/// noise, snapped to the nearest scale value.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticData> {
    spec.validate()?;
    let levels = spec.scale.len();
    let mut r = rng::rng(spec.seed, &[0]);
    let personalities: Vec<Vec<f64>> = (0..spec.n_personalities)
        .map(|_| {
            (0..spec.n_titles)
                .map(|_| spec.scale.value(r.random_range(0..levels)))
                .collect()
        })
        .collect();
    let noise = Normal::new(0.0, spec.sigma_true).map_err(|e| Error::InvalidParameter(e.to_string()))?;

    let train_users: Vec<SyntheticUser> = (0..spec.n_users)
        .map(|u| draw_user(spec, &personalities, &noise, &mut rng::rng(spec.seed, &[1, u as u64])))
        .collect();
    let test: Vec<SyntheticUser> = (0..spec.n_test_users)
        .map(|u| draw_user(spec, &personalities, &noise, &mut rng::rng(spec.seed, &[2, u as u64])))
        .collect();

    let entries = train_users
        .iter()
        .enumerate()
        .flat_map(|(u, su)| su.profile.iter().map(move |(t, v)| (u, t, v)));
    let train = RatingsMatrix::from_entries(spec.n_users, spec.n_titles, spec.scale.clone(), entries)?;
    Ok(SyntheticData {
        personalities,
        train_personality: train_users.iter().map(|u| u.personality).collect(),
        train,
        test,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn scale() -> RatingScale {
        RatingScale::movie()
    }

    #[test]
    fn header_only_is_no_ratings() {
        let r = read_ratings_csv("user_id,item_id,rating\n".as_bytes(), &scale());
        assert!(matches!(r, Err(Error::NoRatings)));
    }

    #[test]
    fn bad_header_rejected() {
        let r = read_ratings_csv("user,item,rating\na,b,1\n".as_bytes(), &scale());
        assert!(matches!(r, Err(Error::Malformed { line: 1, .. })));
    }

    #[test]
    fn duplicates_last_wins() {
        let text = "user_id,item_id,rating\nu,i,2\nu,i,5\n";
        let loaded = read_ratings_csv(text.as_bytes(), &scale()).unwrap();
        assert_eq!(loaded.duplicates, 1);
        assert_eq!(loaded.dataset.matrix.nnz(), 1);
        assert_eq!(loaded.dataset.matrix.get(0, 0).value(), Some(5.0));
    }

    #[test]
    fn malformed_and_off_scale_lines_report_position() {
        let text = "user_id,item_id,rating\nu,i,2\nu,j\n";
        match read_ratings_csv(text.as_bytes(), &scale()) {
            Err(Error::Malformed { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        let text = "user_id,item_id,rating\nu,i,2\nu,j,x\n";
        assert!(matches!(
            read_ratings_csv(text.as_bytes(), &scale()),
            Err(Error::Malformed { line: 3, .. })
        ));
        let text = "user_id,item_id,rating\nu,i,2\nv,j,7\n";
        match read_ratings_csv(text.as_bytes(), &scale()) {
            Err(Error::OffScaleAt { line, value }) => assert_eq!((line, value), (3, 7.0)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn fixture_round_trip() {
        let text = "user_id,item_id,rating\n7,b,3\n2,a,0\n7,a,5";
        let loaded = read_ratings_csv(text.as_bytes(), &scale()).unwrap();
        assert_eq!(loaded.dataset.matrix.nnz(), 3);
        let out = ratings_csv_string(&loaded.dataset).unwrap();
        assert_eq!(out, "user_id,item_id,rating\n2,a,0\n7,a,5\n7,b,3\n");
        let again = read_ratings_csv(out.as_bytes(), &scale()).unwrap();
        assert_eq!(again.dataset, loaded.dataset);
    }

    #[test]
    fn half_point_scale_renders_shortest() {
        let s: RatingScale = "0,0.5,1".parse().unwrap();
        let (ds, _) = Dataset::from_named(s, [("a", "x", 0.5), ("a", "y", 1.0)]).unwrap();
        assert_eq!(ratings_csv_string(&ds).unwrap(), "user_id,item_id,rating\na,x,0.5\na,y,1\n");
    }

    #[test]
    fn profile_reports_unknown_items() {
        let (ds, _) = Dataset::from_named(scale(), [("a", "x", 1.0), ("b", "y", 2.0)]).unwrap();
        let p = read_profile_csv("item_id,rating\nx,4\n".as_bytes(), &ds.titles, &scale()).unwrap();
        assert_eq!(p.get(0).value(), Some(4.0));
        match read_profile_csv("item_id,rating\nq,1\nx,4\nz,2\n".as_bytes(), &ds.titles, &scale()) {
            Err(Error::UnknownItems(items)) => assert_eq!(items, vec!["q", "z"]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn test_users_join_training_titles() {
        let (train, _) = Dataset::from_named(scale(), [("a", "x", 1.0), ("b", "y", 2.0)]).unwrap();
        let (test, _) = Dataset::from_named(scale(), [("c", "y", 3.0), ("c", "z", 4.0)]).unwrap();
        let (aligned, users) = align_test_users(&train, &test).unwrap();
        assert_eq!(aligned.matrix.n_titles(), 3);
        assert_eq!(aligned.titles.name(2), "z");
        assert_eq!(aligned.matrix.title_count(2), 0);
        assert_eq!(users[0].user, 2);
        assert_eq!(users[0].profile.iter().collect::<Vec<_>>(), vec![(1, 3.0), (2, 4.0)]);
    }

    fn ev(u: &str, d: &str, a: &str) -> ActionEvent {
        ActionEvent {
            user: u.into(),
            doc: d.into(),
            action: a.into(),
        }
    }

    #[test]
    fn default_weights_table() {
        let w = ActionWeights::default();
        let expect = [
            ("add-to-profile", 2.0),
            ("download", 1.0),
            ("view-details", 0.5),
            ("view-bibliography", 0.5),
            ("view-page-image", 0.5),
            ("ignore-recommendation", -1.0),
            ("view-same-source", 0.5),
            ("view-overlap", 1.0),
            ("correct-details", 1.0),
            ("view-citation-context", 1.0),
            ("view-related", 0.5),
        ];
        assert_eq!(w.iter().count(), expect.len());
        for (k, v) in expect {
            assert_eq!(w.get(k), Some(v), "{k}");
        }
    }

    #[test]
    fn action_sums_round_and_clamp() {
        let log = vec![
            ev("u1", "d1", "add-to-profile"),
            ev("u1", "d1", "download"),
            ev("u1", "d2", "download"),
            ev("u1", "d2", "ignore-recommendation"),
            ev("u2", "d1", "add-to-profile"),
            ev("u2", "d1", "download"),
            ev("u2", "d1", "view-details"),
            ev("u2", "d2", "ignore-recommendation"),
            ev("u3", "d1", "add-to-profile"),
            ev("u3", "d1", "add-to-profile"),
            ev("u3", "d1", "add-to-profile"),
            ev("u3", "d1", "add-to-profile"),
        ];
        let ds = actions_to_ratings(&log, &ActionWeights::default(), &RatingScale::actions()).unwrap();
        let get = |u: &str, d: &str| ds.matrix.get(ds.users.get(u).unwrap(), ds.titles.get(d).unwrap()).value();
        assert_eq!(get("u1", "d1"), Some(3.0));
        assert_eq!(get("u1", "d2"), Some(0.0));
        assert_eq!(get("u2", "d1"), Some(4.0));
        assert_eq!(get("u2", "d2"), Some(0.0));
        assert_eq!(get("u3", "d1"), Some(6.0));
    }

    #[test]
    fn unknown_action_named() {
        let log = vec![ev("u", "d", "print")];
        match actions_to_ratings(&log, &ActionWeights::default(), &RatingScale::actions()) {
            Err(Error::UnknownAction(a)) => assert_eq!(a, "print"),
            other => panic!("{other:?}"),
        }
    }

    fn fixture() -> RatingsMatrix {
        // title 0: users 0,1,2 ; title 1: users 0,1 ; title 2: user 2 ; title 3: users 1,3
        RatingsMatrix::from_entries(
            4,
            4,
            scale(),
            [
                (0, 0, 1.0),
                (1, 0, 2.0),
                (2, 0, 3.0),
                (0, 1, 4.0),
                (1, 1, 5.0),
                (2, 2, 1.0),
                (1, 3, 2.0),
                (3, 3, 3.0),
            ],
        )
        .unwrap()
    }

    #[test]
    fn density_filter_unit_thresholds_is_identity() {
        let m = fixture();
        let f = filter_density(&m, 1, 1);
        assert_eq!(f.matrix, m);
        assert_eq!(f.passes, 1);
    }

    #[test]
    fn density_filter_fixture() {
        // titles with >= 2 users: 0, 1, 3. Users with >= 2 of those: 0 {0,1}, 1 {0,1,3}.
        // user 2 keeps only title 0, user 3 only title 3 -> both dropped.
        // second pass: title 3 now has only user 1 -> dropped; users 0,1 still have 2.
        let f = filter_density(&fixture(), 2, 2);
        assert_eq!(f.single_pass, (2, 3, 5));
        assert_eq!(f.kept_titles, vec![0, 1]);
        assert_eq!(f.kept_users, vec![0, 1]);
        assert_eq!(f.matrix.nnz(), 4);
        assert_eq!(f.passes, 3);
        let again = filter_density(&f.matrix, 2, 2);
        assert_eq!(again.matrix, f.matrix);
    }

    #[test]
    fn density_filter_decrements_user_count() {
        let m = RatingsMatrix::from_entries(2, 2, scale(), [(0, 0, 1.0), (1, 0, 1.0), (0, 1, 2.0)]).unwrap();
        let f = filter_density(&m, 2, 1);
        assert_eq!(f.kept_titles, vec![0]);
        assert_eq!(f.matrix.user_count(0), 1);
    }

    fn spec(sigma: f64, seed: u64) -> SyntheticSpec {
        SyntheticSpec {
            n_users: 60,
            n_test_users: 10,
            n_titles: 30,
            ratings_per_user: 12,
            n_personalities: 5,
            scale: scale(),
            sigma_true: sigma,
            seed,
        }
    }

    #[test]
    fn synthetic_noiseless_limit() {
        let d = generate_synthetic(&spec(1e-9, 4)).unwrap();
        for (u, &p) in d.train_personality.iter().enumerate() {
            for (t, v) in d.train.user_ratings(u) {
                assert_eq!(v, d.personalities[p][t]);
            }
            assert_eq!(d.train.user_count(u), 12);
        }
        for su in &d.test {
            for (t, v) in su.profile.iter() {
                assert_eq!(v, d.personalities[su.personality][t]);
            }
        }
    }

    #[test]
    fn synthetic_is_seeded() {
        let a = generate_synthetic(&spec(1.0, 8)).unwrap();
        let b = generate_synthetic(&spec(1.0, 8)).unwrap();
        let c = generate_synthetic(&spec(1.0, 9)).unwrap();
        assert_eq!(a.train, b.train);
        assert_eq!(a.test, b.test);
        assert_ne!(a.train, c.train);
    }

    #[test]
    fn synthetic_rejects_bad_spec() {
        let mut s = spec(1.0, 1);
        s.ratings_per_user = 31;
        assert!(generate_synthetic(&s).is_err());
        let mut s = spec(1.0, 1);
        s.sigma_true = 0.0;
        assert!(generate_synthetic(&s).is_err());
    }

    #[test]
    fn synthetic_datasets_round_trip_through_csv() {
        let d = generate_synthetic(&spec(1.0, 2)).unwrap();
        let train = d.train_dataset();
        let text = ratings_csv_string(&train).unwrap();
        let back = read_ratings_csv(text.as_bytes(), &scale()).unwrap().dataset;
        assert_eq!(back.matrix.nnz(), train.matrix.nnz());
        assert_eq!(ratings_csv_string(&back).unwrap(), text);
        let test = d.test_dataset();
        assert_eq!(test.users.name(0), "60");
    }

    proptest! {
        #[test]
        fn csv_export_import_identity(
            cells in proptest::collection::btree_map((0usize..8, 0usize..8), 0usize..6, 1..40)
        ) {
            let names: Vec<(String, String, f64)> = cells
                .iter()
                .map(|(&(u, t), &l)| (format!("u{u}"), (t * 3).to_string(), l as f64))
                .collect();
            let (ds, dups) = Dataset::from_named(scale(), names.iter().map(|(u, t, v)| (u.as_str(), t.as_str(), *v))).unwrap();
            prop_assert_eq!(dups, 0);
            let text = ratings_csv_string(&ds).unwrap();
            let back = read_ratings_csv(text.as_bytes(), &scale()).unwrap();
            prop_assert_eq!(back.dataset, ds);
        }

        #[test]
        fn action_ratings_stay_in_range(
            log in proptest::collection::vec((0usize..3, 0usize..3, 0usize..11), 1..40)
        ) {
            let w = ActionWeights::default();
            let names: Vec<&str> = w.iter().map(|(k, _)| k).collect();
            let events: Vec<ActionEvent> = log
                .iter()
                .map(|&(u, d, a)| ev(&u.to_string(), &d.to_string(), names[a]))
                .collect();
            let ds = actions_to_ratings(&events, &w, &RatingScale::actions()).unwrap();
            for (_, _, v) in ds.matrix.entries() {
                prop_assert!((0.0..=6.0).contains(&v) && v.fract() == 0.0);
            }
        }
    }
}
