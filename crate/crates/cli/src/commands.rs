use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;

use pdiag::baselines::BaselineModel;
use pdiag::eval::{apply_protocol, Protocol, ProtocolSplit, TestUser};
use pdiag::experiments::{pruning_experiment, PruningConfig};
use pdiag::ingest::{self, Dataset, SyntheticSpec};
use pdiag::pd::PdModel;
use pdiag::report::{evaluate as run_evaluation, Algorithm, EvalConfig};
use pdiag::voi::{self, CostModel, PruneConfig, PruneTarget, QueryCost, QueryOrder};
use pdiag::{PdParams, Rating, RatingScale, RatingsMatrix, UserProfile};

use crate::failure::Failure;
use crate::{ActionsArgs, Common, ElicitArgs, EvaluateArgs, GenDataArgs, ModelArgs, PredictArgs, PruneArgs};

type Result<T> = std::result::Result<T, Failure>;

fn scale(common: &Common, default: RatingScale) -> Result<RatingScale> {
    match &common.scale {
        Some(s) => Ok(s.parse()?),
        None => Ok(default),
    }
}

fn with_path(path: &Path) -> impl Fn(pdiag::Error) -> Failure + '_ {
    move |e| Failure::from(e).context(path.display())
}

fn load(path: &Path, scale: &RatingScale) -> Result<ingest::LoadedRatings> {
    ingest::load_ratings_csv(path, scale).map_err(with_path(path))
}

fn load_profile(path: &Path, ds: &Dataset, scale: &RatingScale) -> Result<UserProfile> {
    let file = fs::File::open(path).map_err(|e| Failure::from(e).context(path.display()))?;
    ingest::read_profile_csv(file, &ds.titles, scale).map_err(with_path(path))
}

#[derive(Serialize)]
struct SigmaConfig {
    value: f64,
    source: &'static str,
}

fn params(model: &ModelArgs, train: &RatingsMatrix) -> Result<(PdParams, SigmaConfig)> {
    if model.sigma_from_data {
        let p = PdParams::from_data(train)?;
        return Ok((p, SigmaConfig { value: p.sigma(), source: "data" }));
    }
    let (value, source) = match model.sigma {
        Some(s) => (s, "flag"),
        None => (pdiag::pd::DEFAULT_SIGMA, "default"),
    };
    Ok((PdParams::new(value)?, SigmaConfig { value, source }))
}

fn out_dir(common: &Common) -> Result<&Path> {
    fs::create_dir_all(&common.out)
        .map_err(|e| Failure::new("io", format!("{}: {e}", common.out.display())))?;
    Ok(&common.out)
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| Failure::new("io", format!("{}: {e}", path.display())))
}

fn write_config<T: Serialize>(dir: &Path, config: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(config).map_err(|e| Failure::new("internal", e.to_string()))?;
    text.push('\n');
    write(dir, "config.json", &text)
}

fn path_string(p: &Path) -> String {
    p.display().to_string()
}

#[derive(Serialize)]
struct EvaluateConfig {
    command: &'static str,
    ratings: String,
    test: Option<String>,
    train_fraction: Option<f64>,
    scale: String,
    sigma: SigmaConfig,
    seed: u64,
    algorithms: Vec<String>,
    protocols: Vec<String>,
    permutations: usize,
    extreme: bool,
    train_users: usize,
    test_users: usize,
    titles: usize,
    duplicate_ratings: usize,
}

pub fn evaluate(args: &EvaluateArgs) -> Result<()> {
    let scale = scale(&args.common, RatingScale::movie())?;
    if args.algorithms.iter().all(|a| a.trim().is_empty()) {
        return Err(Failure::usage("no algorithms selected"));
    }
    if args.protocols.iter().all(|p| p.trim().is_empty()) {
        return Err(Failure::usage("no protocols selected"));
    }
    let loaded = load(&args.model.ratings, &scale)?;
    let mut duplicates = loaded.duplicates;

    let (train, test, train_fraction) = match &args.test {
        Some(path) => {
            let held = load(path, &scale)?;
            duplicates += held.duplicates;
            let (aligned, users) = ingest::align_test_users(&loaded.dataset, &held.dataset)?;
            (aligned.matrix, users, None)
        }
        None => {
            let split = pdiag::split_train_test(&loaded.dataset.matrix, args.train_fraction, args.common.seed)?;
            (split.train, split.test, Some(args.train_fraction))
        }
    };
    let (params, sigma) = params(&args.model, &train)?;

    let mut algorithms = Vec::new();
    let mut seen = BTreeSet::new();
    for name in args.algorithms.iter().filter(|a| !a.trim().is_empty()) {
        let alg = Algorithm::parse(name, params)?;
        if !seen.insert(alg.name()) {
            return Err(Failure::usage(format!("algorithm `{}` listed twice", alg.name())));
        }
        algorithms.push(alg);
    }
    let mut protocols = Vec::new();
    for name in args.protocols.iter().filter(|p| !p.trim().is_empty()) {
        let p: Protocol = name.parse()?;
        if protocols.contains(&p) {
            return Err(Failure::usage(format!("protocol `{p}` listed twice")));
        }
        protocols.push(p);
    }

    let config = EvalConfig {
        algorithms: algorithms.clone(),
        protocols: protocols.clone(),
        seed: args.common.seed,
        permutations: args.permutations,
        extreme: args.extreme,
    };
    let report = run_evaluation(&train, &test, &config)?;

    let dir = out_dir(&args.common)?;
    write(dir, "report.txt", &report.to_text())?;
    write(dir, "report.csv", &report.to_csv())?;
    write_config(
        dir,
        &EvaluateConfig {
            command: "evaluate",
            ratings: path_string(&args.model.ratings),
            test: args.test.as_deref().map(path_string),
            train_fraction,
            scale: scale.to_string(),
            sigma,
            seed: args.common.seed,
            algorithms: algorithms.iter().map(|a| a.name().to_string()).collect(),
            protocols: protocols.iter().map(|p| p.to_string()).collect(),
            permutations: args.permutations,
            extreme: args.extreme,
            train_users: train.n_users(),
            test_users: test.len(),
            titles: train.n_titles(),
            duplicate_ratings: duplicates,
        },
    )?;
    print!("{}", report.to_text());
    Ok(())
}

#[derive(Serialize)]
struct PredictConfig {
    command: &'static str,
    ratings: String,
    profile: String,
    scale: String,
    sigma: SigmaConfig,
    algorithm: String,
    seed: u64,
    predictions: usize,
}

pub fn predict(args: &PredictArgs) -> Result<()> {
    let scale = scale(&args.common, RatingScale::movie())?;
    let ds = load(&args.model.ratings, &scale)?.dataset;
    let profile = load_profile(&args.profile, &ds, &scale)?;
    let (params, sigma) = params(&args.model, &ds.matrix)?;
    let algorithm = Algorithm::parse(&args.algorithm, params)?;
    let nr = profile.unrated(ds.matrix.n_titles());

    let mut out = String::new();
    match algorithm {
        Algorithm::Pd(p) => {
            out.push_str("item_id,prediction");
            for v in scale.values() {
                let _ = write!(out, ",prob_{v}");
            }
            out.push('\n');
            let model = PdModel::new(&ds.matrix, p);
            if !nr.is_empty() {
                let posterior = model.posterior(&profile)?;
                for &t in &nr {
                    let dist = model.predictive_with(t, &posterior);
                    let _ = write!(out, "{},{}", ds.titles.name(t), dist.mode());
                    for p in dist.probs() {
                        let _ = write!(out, ",{p}");
                    }
                    out.push('\n');
                }
            }
        }
        Algorithm::Baseline(kind) => {
            out.push_str("item_id,prediction\n");
            let model = BaselineModel::new(kind, &ds.matrix)?;
            for (t, v) in nr.iter().zip(model.predict_titles(&nr, &profile)?) {
                let _ = writeln!(out, "{},{v}", ds.titles.name(*t));
            }
        }
    }
    if nr.is_empty() {
        eprintln!("notice: the profile rates every title; nothing to predict");
    }

    let dir = out_dir(&args.common)?;
    write(dir, "predictions.csv", &out)?;
    write_config(
        dir,
        &PredictConfig {
            command: "predict",
            ratings: path_string(&args.model.ratings),
            profile: path_string(&args.profile),
            scale: scale.to_string(),
            sigma,
            algorithm: algorithm.name().to_string(),
            seed: args.common.seed,
            predictions: nr.len(),
        },
    )
}

#[derive(Serialize)]
struct ElicitConfig {
    command: &'static str,
    ratings: String,
    answers: String,
    scale: String,
    sigma: SigmaConfig,
    seed: u64,
    given: usize,
    budget: usize,
    cost: f64,
    cost_slope: f64,
    gain_to_benefit: f64,
    order: String,
    order_seed: Option<u64>,
}

fn mad_on(model: &PdModel<'_>, profile: &UserProfile, targets: &[(usize, f64)]) -> Result<Option<f64>> {
    if targets.is_empty() {
        return Ok(None);
    }
    let titles: Vec<usize> = targets.iter().map(|t| t.0).collect();
    let preds = model.predict_titles(&titles, profile)?;
    let total: f64 = preds.iter().zip(targets).map(|(p, (_, v))| (p - v).abs()).sum();
    Ok(Some(total / targets.len() as f64))
}

fn fmt_mad(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |v| format!("{v:.6}"))
}

pub fn elicit(args: &ElicitArgs) -> Result<()> {
    let scale = scale(&args.common, RatingScale::movie())?;
    let ds = load(&args.model.ratings, &scale)?.dataset;
    let answers = load_profile(&args.answers, &ds, &scale)?;
    let (params, sigma) = params(&args.model, &ds.matrix)?;
    let protocol = Protocol::given(args.given)?;
    let ProtocolSplit::Split { input, withheld } = apply_protocol(&answers, protocol, args.common.seed) else {
        return Err(Failure::usage(format!(
            "answer file has {} ratings; --given {} needs at least {}",
            answers.len(),
            args.given,
            args.given + 1
        )));
    };
    let query_cost = if args.cost_slope == 0.0 {
        QueryCost::Constant(args.cost)
    } else {
        QueryCost::Linear {
            base: args.cost,
            slope: args.cost_slope,
        }
    };
    let cost = CostModel::new(query_cost, args.gain_to_benefit)?;
    let order_seed = pdiag::rng::derive_seed(args.common.seed, &[1]);
    let order = match args.order.as_str() {
        "voi" => QueryOrder::Voi,
        "random" => QueryOrder::Random { seed: order_seed },
        other => return Err(Failure::usage(format!("unknown order `{other}` (expected voi or random)"))),
    };

    let result = voi::elicit_with_order(
        &input,
        &ds.matrix,
        params,
        &cost,
        |t| withheld.get(&t).copied().into(),
        args.budget,
        order,
    )?;
    let model = PdModel::new(&ds.matrix, params);
    let remaining: Vec<(usize, f64)> = withheld
        .iter()
        .filter(|(t, _)| !result.profile.contains(**t))
        .map(|(&t, &v)| (t, v))
        .collect();
    let before = mad_on(&model, &input, &remaining)?;
    let after = mad_on(&model, &result.profile, &remaining)?;
    let answered = result.transcript.iter().filter(|s| s.answer != Rating::NoRating).count();

    let mut report = String::new();
    let _ = writeln!(report, "queries asked: {}", result.transcript.len());
    let _ = writeln!(report, "answered: {answered}");
    let _ = writeln!(report, "stop: {}", result.stop);
    let _ = writeln!(report, "remaining withheld titles: {}", remaining.len());
    let _ = writeln!(report, "mad before: {}", fmt_mad(before));
    let _ = writeln!(report, "mad after: {}", fmt_mad(after));

    let dir = out_dir(&args.common)?;
    write(
        dir,
        "transcript.csv",
        &voi::transcript_csv(&result.transcript, |t| ds.titles.name(t).to_string()),
    )?;
    write(dir, "elicit.txt", &report)?;
    write_config(
        dir,
        &ElicitConfig {
            command: "elicit",
            ratings: path_string(&args.model.ratings),
            answers: path_string(&args.answers),
            scale: scale.to_string(),
            sigma,
            seed: args.common.seed,
            given: args.given,
            budget: args.budget,
            cost: args.cost,
            cost_slope: args.cost_slope,
            gain_to_benefit: args.gain_to_benefit,
            order: args.order.clone(),
            order_seed: matches!(order, QueryOrder::Random { .. }).then_some(order_seed),
        },
    )?;
    print!("{report}");
    Ok(())
}

#[derive(Serialize)]
struct PruneReportConfig {
    command: &'static str,
    ratings: String,
    test: Option<String>,
    scale: String,
    sigma: SigmaConfig,
    seed: u64,
    target: String,
    keep_fraction: f64,
    pseudo_profiles: usize,
    kept: usize,
    total: usize,
}

pub fn prune(args: &PruneArgs) -> Result<()> {
    let scale = scale(&args.common, RatingScale::movie())?;
    let ds = load(&args.model.ratings, &scale)?.dataset;
    let (params, sigma) = params(&args.model, &ds.matrix)?;
    let target: PruneTarget = args.target.parse()?;
    let config = PruneConfig {
        target,
        keep_fraction: args.keep_fraction,
        pseudo_profiles: args.pseudo_profiles,
        seed: args.common.seed,
    };
    let pruned = voi::prune(&ds.matrix, params, &config)?;
    let (reduced, names) = match target {
        PruneTarget::Titles => (ds.select_titles(&pruned.kept), &ds.titles),
        PruneTarget::Users => (ds.select_users(&pruned.kept), &ds.users),
    };

    let mut scores = String::from("id,score,kept\n");
    let kept: BTreeSet<usize> = pruned.kept.iter().copied().collect();
    for (i, s) in pruned.scores.iter().enumerate() {
        let _ = writeln!(scores, "{},{s},{}", names.name(i), u8::from(kept.contains(&i)));
    }

    let comparison = match &args.test {
        Some(path) => {
            if target != PruneTarget::Titles {
                return Err(Failure::usage("--test comparison needs --target titles"));
            }
            let held = load(path, &scale)?;
            let (aligned, users) = ingest::align_test_users(&ds, &held.dataset)?;
            Some(compare_pruning(&aligned, &users, &config, params)?)
        }
        None => None,
    };

    let dir = out_dir(&args.common)?;
    write(dir, "pruned.csv", &ingest::ratings_csv_string(&reduced)?)?;
    write(dir, "scores.csv", &scores)?;
    if let Some(text) = &comparison {
        write(dir, "comparison.txt", text)?;
        print!("{text}");
    }
    write_config(
        dir,
        &PruneReportConfig {
            command: "prune",
            ratings: path_string(&args.model.ratings),
            test: args.test.as_deref().map(path_string),
            scale: scale.to_string(),
            sigma,
            seed: args.common.seed,
            target: match target {
                PruneTarget::Titles => "titles".into(),
                PruneTarget::Users => "users".into(),
            },
            keep_fraction: args.keep_fraction,
            pseudo_profiles: args.pseudo_profiles,
            kept: pruned.kept.len(),
            total: pruned.scores.len(),
        },
    )
}

fn compare_pruning(train: &Dataset, test: &[TestUser], config: &PruneConfig, params: PdParams) -> Result<String> {
    let out = pruning_experiment(
        &train.matrix,
        test,
        &PruningConfig {
            keep_fraction: config.keep_fraction,
            params,
            pseudo_profiles: config.pseudo_profiles,
            seed: config.seed,
        },
    )?;
    let mut text = String::new();
    let _ = writeln!(text, "All-but-1 MAD on {} targets kept by both prunings", out.targets);
    let _ = writeln!(text, "{:<10}{:>10}{:>14}", "titles", "mad", "degradation");
    let _ = writeln!(text, "{:<10}{:>10.4}{:>14}", "full", out.full_mad, "-");
    let _ = writeln!(text, "{:<10}{:>10.4}{:>14.4}", "voi", out.voi_mad, out.voi_degradation());
    let _ = writeln!(text, "{:<10}{:>10.4}{:>14.4}", "random", out.random_mad, out.random_degradation());
    Ok(text)
}

#[derive(Serialize)]
struct GenDataConfig {
    command: &'static str,
    scale: String,
    seed: u64,
    n_users: usize,
    n_test_users: usize,
    n_titles: usize,
    ratings_per_user: usize,
    personalities: usize,
    sigma_true: f64,
}

pub fn gen_data(args: &GenDataArgs) -> Result<()> {
    let scale = scale(&args.common, RatingScale::movie())?;
    let spec = SyntheticSpec {
        n_users: args.n_users,
        n_test_users: args.n_test_users,
        n_titles: args.n_titles,
        ratings_per_user: args.ratings_per_user,
        n_personalities: args.personalities,
        scale: scale.clone(),
        sigma_true: args.sigma_true,
        seed: args.common.seed,
    };
    let data = ingest::generate_synthetic(&spec)?;

    let mut truth = String::from("user_id,personality,item_id,value\n");
    for (k, u) in data.test.iter().enumerate() {
        let id = args.n_users + k;
        for (t, v) in data.personalities[u.personality].iter().enumerate() {
            let _ = writeln!(truth, "{id},{},{t},{v}", u.personality);
        }
    }

    let dir = out_dir(&args.common)?;
    write(dir, "train.csv", &ingest::ratings_csv_string(&data.train_dataset())?)?;
    write(dir, "test.csv", &ingest::ratings_csv_string(&data.test_dataset())?)?;
    write(dir, "truth.csv", &truth)?;
    write_config(
        dir,
        &GenDataConfig {
            command: "gen-data",
            scale: scale.to_string(),
            seed: args.common.seed,
            n_users: args.n_users,
            n_test_users: args.n_test_users,
            n_titles: args.n_titles,
            ratings_per_user: args.ratings_per_user,
            personalities: args.personalities,
            sigma_true: args.sigma_true,
        },
    )
}

#[derive(Serialize)]
struct ActionsConfig {
    command: &'static str,
    actions: String,
    scale: String,
    seed: u64,
    weights: Vec<(String, f64)>,
    events: usize,
}

pub fn actions_to_ratings(args: &ActionsArgs) -> Result<()> {
    let scale = scale(&args.common, RatingScale::actions())?;
    let file = fs::File::open(&args.actions).map_err(|e| Failure::from(e).context(args.actions.display()))?;
    let log = ingest::read_action_log(file).map_err(with_path(&args.actions))?;
    let weights = ingest::ActionWeights::default();
    let ds = ingest::actions_to_ratings(&log, &weights, &scale)?;
    let dir = out_dir(&args.common)?;
    write(dir, "ratings.csv", &ingest::ratings_csv_string(&ds)?)?;
    write_config(
        dir,
        &ActionsConfig {
            command: "actions-to-ratings",
            actions: path_string(&args.actions),
            scale: scale.to_string(),
            seed: args.common.seed,
            weights: weights.iter().map(|(k, v)| (k.to_string(), v)).collect(),
            events: log.len(),
        },
    )
}
