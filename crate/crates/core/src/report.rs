//! End-to-end benchmark runs: algorithms × protocols over a set of test
//! users, with the results rendered as aligned text tables or CSV.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use rayon::prelude::*;

use crate::baselines::{BaselineKind, BaselineModel};
use crate::error::{Error, Result};
use crate::eval::{
    apply_protocol, extreme_filter_around, mad, randomization_test, Deviation, DeviationRecord, Protocol,
    ProtocolSplit, Significance, TestUser,
};
use crate::pd::{PdModel, PdParams};
use crate::ratings::{RatingsMatrix, UserProfile};
use crate::rng::derive_seed;

/// Header of the machine-readable report.
pub const CSV_HEADER: &str = "algorithm,protocol,subset,metric,value,count,seed";

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Algorithm {
    Pd(PdParams),
    Baseline(BaselineKind),
}

impl Algorithm {
    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::Pd(_) => "pd",
            Algorithm::Baseline(k) => k.name(),
        }
    }

    /// Parses `pd`, `correlation` or `vsim`; PD uses `params`.
    pub fn parse(s: &str, params: PdParams) -> Result<Self> {
        match s.trim() {
            "pd" => Ok(Algorithm::Pd(params)),
            other => Ok(Algorithm::Baseline(BaselineKind::from_str(other)?)),
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// An algorithm bound to a training matrix.
#[derive(Debug, Clone)]
pub enum Predictor<'a> {
    Pd(PdModel<'a>),
    Baseline(BaselineModel<'a>),
}

impl<'a> Predictor<'a> {
    pub fn new(algorithm: Algorithm, matrix: &'a RatingsMatrix) -> Result<Self> {
        Ok(match algorithm {
            Algorithm::Pd(p) => Predictor::Pd(PdModel::new(matrix, p)),
            Algorithm::Baseline(k) => Predictor::Baseline(BaselineModel::new(k, matrix)?),
        })
    }

    pub fn predict_titles(&self, titles: &[usize], active: &UserProfile) -> Result<Vec<f64>> {
        match self {
            Predictor::Pd(m) => m.predict_titles(titles, active),
            Predictor::Baseline(m) => m.predict_titles(titles, active),
        }
    }
}

/// A test user under a protocol: id, algorithm input and withheld `(title, rating)` pairs.
pub type RunUser = (usize, UserProfile, Vec<(usize, f64)>);

/// Protocol applied to every test user.
#[derive(Debug, Clone)]
pub struct ProtocolRun {
    pub protocol: Protocol,
    pub users: Vec<RunUser>,
    pub dropped: usize,
}

/// Applies `protocol` to each test user with a per-user seed derived from `seed`.
pub fn run_protocol(test: &[TestUser], protocol: Protocol, seed: u64) -> ProtocolRun {
    let mut users = Vec::new();
    let mut dropped = 0;
    for tu in test {
        match apply_protocol(&tu.profile, protocol, derive_seed(seed, &[tu.user as u64])) {
            ProtocolSplit::Split { input, withheld } => {
                users.push((tu.user, input, withheld.into_iter().collect()))
            }
            ProtocolSplit::Dropped => dropped += 1,
        }
    }
    ProtocolRun {
        protocol,
        users,
        dropped,
    }
}

/// Scores a predictor on a protocol run; users are processed in parallel and
/// collected in input order.
pub fn score(predictor: &Predictor<'_>, run: &ProtocolRun) -> Result<DeviationRecord> {
    let per_user: Vec<Result<Vec<Deviation>>> = run
        .users
        .par_iter()
        .map(|(user, input, withheld)| {
            let titles: Vec<usize> = withheld.iter().map(|w| w.0).collect();
            let preds = predictor.predict_titles(&titles, input)?;
            Ok(withheld
                .iter()
                .zip(preds)
                .map(|(&(title, actual), predicted)| Deviation {
                    user: *user,
                    title,
                    predicted,
                    actual,
                })
                .collect())
        })
        .collect();
    let mut rec = DeviationRecord::new();
    for devs in per_user {
        for d in devs? {
            rec.push(d);
        }
    }
    Ok(rec)
}

#[derive(Debug, Clone)]
pub struct EvalConfig {
    pub algorithms: Vec<Algorithm>,
    pub protocols: Vec<Protocol>,
    pub seed: u64,
    pub permutations: usize,
    pub extreme: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subset {
    All,
    Extreme,
}

impl Subset {
    pub fn name(self) -> &'static str {
        match self {
            Subset::All => "all",
            Subset::Extreme => "extreme",
        }
    }
}

#[derive(Debug, Clone)]
pub struct CellResult {
    pub algorithm: String,
    pub protocol: Protocol,
    pub users: usize,
    pub dropped: usize,
    pub all: DeviationRecord,
    pub extreme: DeviationRecord,
}

impl CellResult {
    pub fn mad(&self) -> Option<f64> {
        mad(&self.all).ok()
    }

    pub fn extreme_mad(&self) -> Option<f64> {
        mad(&self.extreme).ok()
    }

    pub fn record(&self, subset: Subset) -> &DeviationRecord {
        match subset {
            Subset::All => &self.all,
            Subset::Extreme => &self.extreme,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Comparison {
    pub a: String,
    pub b: String,
    pub protocol: Protocol,
    pub subset: Subset,
    pub significance: Option<Significance>,
}

#[derive(Debug, Clone)]
pub struct EvaluationReport {
    pub seed: u64,
    pub permutations: usize,
    pub sigma: Option<f64>,
    pub train_mean: f64,
    pub test_users: usize,
    pub protocols: Vec<Protocol>,
    pub algorithms: Vec<String>,
    pub cells: Vec<CellResult>,
    pub comparisons: Vec<Comparison>,
}

/// Runs every algorithm under every protocol on the test users.
///
/// All algorithms see the same withholding for a given protocol. Extreme
/// subsets use the training mean. Significance is computed for every
/// algorithm pair, per protocol and subset.
pub fn evaluate(train: &RatingsMatrix, test: &[TestUser], config: &EvalConfig) -> Result<EvaluationReport> {
    if config.algorithms.is_empty() {
        return Err(Error::InvalidParameter("no algorithms selected".into()));
    }
    if config.protocols.is_empty() {
        return Err(Error::InvalidParameter("no protocols selected".into()));
    }
    let train_mean = train.overall_mean()?;
    let predictors = config
        .algorithms
        .iter()
        .map(|&a| Predictor::new(a, train))
        .collect::<Result<Vec<_>>>()?;

    let mut cells = Vec::new();
    let mut comparisons = Vec::new();
    for (pi, &protocol) in config.protocols.iter().enumerate() {
        let run = run_protocol(test, protocol, derive_seed(config.seed, &[protocol.tag()]));
        let first = cells.len();
        for (alg, pred) in config.algorithms.iter().zip(&predictors) {
            let all = score(pred, &run)?;
            let extreme = extreme_filter_around(&all, train_mean);
            cells.push(CellResult {
                algorithm: alg.name().to_string(),
                protocol,
                users: run.users.len(),
                dropped: run.dropped,
                all,
                extreme,
            });
        }
        let subsets: &[Subset] = if config.extreme {
            &[Subset::All, Subset::Extreme]
        } else {
            &[Subset::All]
        };
        let n = config.algorithms.len();
        for i in 0..n {
            for j in i + 1..n {
                for (si, &subset) in subsets.iter().enumerate() {
                    let (ca, cb) = (&cells[first + i], &cells[first + j]);
                    let seed = derive_seed(config.seed, &[pi as u64, i as u64, j as u64, si as u64]);
                    let significance = if config.permutations > 0 {
                        randomization_test(ca.record(subset), cb.record(subset), config.permutations, seed).ok()
                    } else {
                        None
                    };
                    comparisons.push(Comparison {
                        a: ca.algorithm.clone(),
                        b: cb.algorithm.clone(),
                        protocol,
                        subset,
                        significance,
                    });
                }
            }
        }
    }

    let sigma = config.algorithms.iter().find_map(|a| match a {
        Algorithm::Pd(p) => Some(p.sigma()),
        Algorithm::Baseline(_) => None,
    });
    Ok(EvaluationReport {
        seed: config.seed,
        permutations: config.permutations,
        sigma,
        train_mean,
        test_users: test.len(),
        protocols: config.protocols.clone(),
        algorithms: config.algorithms.iter().map(|a| a.name().to_string()).collect(),
        cells,
        comparisons,
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |v| format!("{v:.3}"))
}

fn fmt_sig(v: f64) -> String {
    if v == 0.0 || v >= 1e-3 {
        format!("{v:.4}")
    } else {
        format!("{v:.1e}")
    }
}

impl EvaluationReport {
    pub fn cell(&self, algorithm: &str, protocol: Protocol) -> Option<&CellResult> {
        self.cells
            .iter()
            .find(|c| c.algorithm == algorithm && c.protocol == protocol)
    }

    pub fn comparison(&self, a: &str, b: &str, protocol: Protocol, subset: Subset) -> Option<&Comparison> {
        self.comparisons.iter().find(|c| {
            c.protocol == protocol && c.subset == subset && ((c.a == a && c.b == b) || (c.a == b && c.b == a))
        })
    }

    fn mad_table(&self, out: &mut String, title: &str, pick: impl Fn(&CellResult) -> Option<f64>) {
        let _ = writeln!(out, "{title}");
        let _ = write!(out, "{:<14}", "Algorithm");
        for p in &self.protocols {
            let _ = write!(out, "{:>10}", p.to_string());
        }
        out.push('\n');
        for alg in &self.algorithms {
            let _ = write!(out, "{alg:<14}");
            for &p in &self.protocols {
                let v = self.cell(alg, p).and_then(&pick);
                let _ = write!(out, "{:>10}", fmt_opt(v));
            }
            out.push('\n');
        }
        out.push('\n');
    }

    /// Plain-text tables: deviations, extreme-subset deviations, counts and significance.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "seed={} permutations={} sigma={} test_users={} train_mean={:.4}",
            self.seed,
            self.permutations,
            self.sigma.map_or_else(|| "-".to_string(), |s| s.to_string()),
            self.test_users,
            self.train_mean
        );
        out.push('\n');
        self.mad_table(&mut out, "Average absolute deviation (lower is better)", CellResult::mad);
        let has_extreme = self.comparisons.iter().any(|c| c.subset == Subset::Extreme);
        if has_extreme {
            self.mad_table(
                &mut out,
                &format!(
                    "Average absolute deviation, extreme ratings (more than 0.5 from {:.3})",
                    self.train_mean
                ),
                CellResult::extreme_mad,
            );
        }

        let _ = writeln!(out, "Predictions (users kept / dropped)");
        let _ = write!(out, "{:<14}", "Algorithm");
        for p in &self.protocols {
            let _ = write!(out, "{:>20}", p.to_string());
        }
        out.push('\n');
        for alg in &self.algorithms {
            let _ = write!(out, "{alg:<14}");
            for &p in &self.protocols {
                let s = self
                    .cell(alg, p)
                    .map(|c| format!("{} ({}/{})", c.all.len(), c.users, c.dropped))
                    .unwrap_or_else(|| "-".into());
                let _ = write!(out, "{s:>20}");
            }
            out.push('\n');
        }
        out.push('\n');

        if self.comparisons.iter().any(|c| c.significance.is_some()) {
            let _ = writeln!(out, "Significance levels (two-sided / one-sided)");
            let mut pairs: Vec<(String, String)> = Vec::new();
            for c in &self.comparisons {
                let key = (c.a.clone(), c.b.clone());
                if !pairs.contains(&key) {
                    pairs.push(key);
                }
            }
            let _ = write!(out, "{:<22}", "");
            for (a, b) in &pairs {
                let _ = write!(out, "{:>26}", format!("{a} vs. {b}"));
            }
            out.push('\n');
            let subsets: &[Subset] = if has_extreme {
                &[Subset::All, Subset::Extreme]
            } else {
                &[Subset::All]
            };
            for &p in &self.protocols {
                for &subset in subsets {
                    let label = match subset {
                        Subset::All => p.to_string(),
                        Subset::Extreme => format!("{p} (extreme)"),
                    };
                    let _ = write!(out, "{label:<22}");
                    for (a, b) in &pairs {
                        let s = self
                            .comparison(a, b, p, subset)
                            .and_then(|c| c.significance)
                            .map(|s| format!("{} / {}", fmt_sig(s.two_sided), fmt_sig(s.one_sided)))
                            .unwrap_or_else(|| "-".into());
                        let _ = write!(out, "{s:>26}");
                    }
                    out.push('\n');
                }
            }
        }
        out
    }

    /// CSV with header [`CSV_HEADER`].
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(CSV_HEADER);
        out.push('\n');
        let seed = self.seed;
        let include_extreme = self.comparisons.iter().any(|c| c.subset == Subset::Extreme);
        for c in &self.cells {
            let (alg, p) = (&c.algorithm, c.protocol);
            if let Some(v) = c.mad() {
                let _ = writeln!(out, "{alg},{p},all,mad,{v},{},{seed}", c.all.len());
            }
            let _ = writeln!(out, "{alg},{p},all,dropped_users,{},{},{seed}", c.dropped, c.users + c.dropped);
            if include_extreme {
                if let Some(v) = c.extreme_mad() {
                    let _ = writeln!(out, "{alg},{p},extreme,mad,{v},{},{seed}", c.extreme.len());
                }
            }
        }
        for c in &self.comparisons {
            if let Some(s) = c.significance {
                let name = format!("{}-vs-{}", c.a, c.b);
                let (p, sub, n) = (c.protocol, c.subset.name(), s.permutations);
                let _ = writeln!(out, "{name},{p},{sub},significance_two_sided,{},{n},{seed}", s.two_sided);
                let _ = writeln!(out, "{name},{p},{sub},significance_one_sided,{},{n},{seed}", s.one_sided);
                let _ = writeln!(out, "{name},{p},{sub},mean_difference,{},{n},{seed}", s.observed);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ratings::RatingScale;

    fn toy() -> (RatingsMatrix, Vec<TestUser>) {
        let train = RatingsMatrix::from_entries(
            3,
            4,
            RatingScale::movie(),
            [
                (0, 0, 5.0),
                (0, 1, 4.0),
                (0, 2, 1.0),
                (1, 0, 1.0),
                (1, 1, 2.0),
                (1, 3, 5.0),
                (2, 1, 3.0),
                (2, 2, 3.0),
                (2, 3, 0.0),
            ],
        )
        .unwrap();
        let test = vec![
            TestUser {
                user: 3,
                profile: [(0, 5.0), (1, 4.0), (2, 2.0)].into_iter().collect(),
            },
            TestUser {
                user: 4,
                profile: [(0, 1.0)].into_iter().collect(),
            },
        ];
        (train, test)
    }

    fn config(algs: Vec<Algorithm>) -> EvalConfig {
        EvalConfig {
            algorithms: algs,
            protocols: vec![Protocol::AllBut1, Protocol::GivenK(2)],
            seed: 11,
            permutations: 500,
            extreme: true,
        }
    }

    #[test]
    fn drops_and_counts() {
        let (train, test) = toy();
        let r = evaluate(
            &train,
            &test,
            &config(vec![
                Algorithm::Pd(PdParams::default()),
                Algorithm::Baseline(BaselineKind::Correlation),
            ]),
        )
        .unwrap();
        let c = r.cell("pd", Protocol::AllBut1).unwrap();
        assert_eq!((c.users, c.dropped, c.all.len()), (1, 1, 1));
        let c = r.cell("pd", Protocol::GivenK(2)).unwrap();
        assert_eq!((c.users, c.dropped, c.all.len()), (1, 1, 1));
        assert!(c.extreme.len() <= c.all.len());
        assert_eq!(r.comparisons.len(), 4);
    }

    #[test]
    fn empty_algorithm_list_rejected() {
        let (train, test) = toy();
        assert!(evaluate(&train, &test, &config(vec![])).is_err());
    }

    #[test]
    fn csv_is_deterministic_across_thread_counts() {
        let (train, test) = toy();
        let cfg = config(vec![
            Algorithm::Pd(PdParams::new(1.0).unwrap()),
            Algorithm::Baseline(BaselineKind::VectorSimilarity),
        ]);
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| evaluate(&train, &test, &cfg).unwrap())
        };
        let (a, b) = (run(1), run(3));
        assert_eq!(a.to_csv(), b.to_csv());
        assert_eq!(a.to_text(), b.to_text());
        assert!(a.to_csv().starts_with(CSV_HEADER));
    }

    #[test]
    fn algorithm_parsing() {
        let p = PdParams::default();
        assert_eq!(Algorithm::parse("pd", p).unwrap(), Algorithm::Pd(p));
        assert_eq!(
            Algorithm::parse("vsim", p).unwrap(),
            Algorithm::Baseline(BaselineKind::VectorSimilarity)
        );
        assert!(Algorithm::parse("svd", p).is_err());
    }
}
