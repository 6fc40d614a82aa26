//! Personality diagnosis collaborative filtering.
//!
//! Each user in a ratings matrix is treated as a candidate "personality":
//! the active user's reported ratings give a posterior over which stored user
//! they resemble, and predictions for unseen titles mix those users' ratings.
//! The crate also contains the memory-based baselines, an evaluation harness
//! with a permutation significance test, value-of-information query ranking,
//! elicitation and pruning, and CSV ingestion.

pub mod baselines;
pub mod error;
pub mod eval;
pub mod experiments;
pub mod ingest;
pub mod pd;
pub mod ratings;
pub mod report;
pub mod rng;
pub mod voi;

pub use baselines::{baseline_predict, similarity_weights, BaselineKind, BaselineModel};
pub use error::{Error, Result};
pub use eval::{apply_protocol, mad, randomization_test, split_train_test, Protocol, TestUser};
pub use pd::{likelihood, posterior, predict, predict_all, predictive_distribution, PdModel, PdParams};
pub use ratings::{Rating, RatingScale, RatingsMatrix, SymbolTable, UserProfile};
pub use voi::{elicit, expected_information_gain, prune, rank_queries};
