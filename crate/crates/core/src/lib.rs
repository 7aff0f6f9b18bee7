//! Limited-attention collaborative topic regression.
//!
//! A social recommender in which each user splits attention across the
//! people they follow. Every attention edge `(i, l)` carries an influence
//! weight `s_il` and a topical attention vector `phi_il` drawn around
//! `s_il * u_i`; an item is adopted through an edge when `phi_il . v_j` is
//! high, where `v_j` is the item's topic proportions plus an offset.
//!
//! The crate is organised as a pipeline:
//!
//! * [`corpus`]: vocabulary selection by tf-idf, bag-of-words documents and
//!   activity filtering.
//! * [`social`]: follower graph, attention-edge sparsification and
//!   attribution of votes to candidate sources.
//! * [`topics`]: collapsed Gibbs LDA used to warm-start item topics, plus the
//!   topic-word re-estimation step.
//! * [`model`]: the MAP objective, closed-form block updates and the
//!   coordinate-ascent training loop.
//! * [`baselines`]: plain collaborative topic regression and a popularity ranker.
//! * [`eval`]: fold plans, the four prediction rules, recall@X and the
//!   experiment runner.
//! * [`synth`]: a generator that samples datasets from the model itself.

pub mod baselines;
pub mod corpus;
pub mod dataset;
pub mod dump;
pub mod error;
pub mod eval;
pub mod linalg;
pub mod model;
pub mod social;
pub mod synth;
pub mod topics;

pub use error::{Error, Result};
