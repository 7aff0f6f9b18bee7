use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::baselines::Popularity;
use crate::dump::{CtrModel, LaCtrModel, TrainedModel};
use crate::error::{Error, Result};

/// Whether items are represented by their fitted `v_j` or by text topics `theta_j` alone.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    InMatrix,
    OutOfMatrix,
}

/// Which user representation scores an item.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Latent {
    Interest,
    Attention,
}

/// How attention scores combine over a user's sources.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    #[default]
    Max,
    Sum,
}

impl Mode {
    pub fn label(self) -> &'static str {
        match self {
            Mode::InMatrix => "in_matrix",
            Mode::OutOfMatrix => "out_of_matrix",
        }
    }
}

impl Latent {
    pub fn label(self) -> &'static str {
        match self {
            Latent::Interest => "interest",
            Latent::Attention => "attention",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ScoreOptions {
    pub mode: Mode,
    pub latent: Latent,
    pub aggregation: Aggregation,
}

impl ScoreOptions {
    pub fn new(mode: Mode, latent: Latent) -> Self {
        Self {
            mode,
            latent,
            aggregation: Aggregation::Max,
        }
    }
}

/// One ranked item. `source` is the user whose attention edge gave the
/// highest score, for attention-based predictions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scored {
    pub item: usize,
    pub score: f64,
    pub source: Option<usize>,
}

/// Anything that can score items for a user.
pub trait Scorer: Send + Sync {
    fn n_users(&self) -> usize;
    fn n_items(&self) -> usize;
    /// Scores `items` for `user`, in the given order. Indices are already validated.
    fn score_items(&self, user: usize, items: &[usize], opts: &ScoreOptions) -> Result<Vec<Scored>>;
}

/// Scores `items` for `user` and sorts them by descending score, breaking ties
/// by the smaller item index.
pub fn predict_scores(scorer: &dyn Scorer, user: usize, items: &[usize], opts: &ScoreOptions) -> Result<Vec<Scored>> {
    if user >= scorer.n_users() {
        return Err(Error::input(format!("unknown user {user}")));
    }
    if let Some(j) = items.iter().find(|&&j| j >= scorer.n_items()) {
        return Err(Error::input(format!("unknown item {j}")));
    }
    let mut scored = scorer.score_items(user, items, opts)?;
    sort_ranking(&mut scored);
    Ok(scored)
}

pub(crate) fn sort_ranking(scored: &mut [Scored]) {
    scored.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.item.cmp(&b.item)));
}

fn item_vectors<'a>(v: &'a [DVector<f64>], theta: &'a [DVector<f64>], mode: Mode) -> &'a [DVector<f64>] {
    match mode {
        Mode::InMatrix => v,
        Mode::OutOfMatrix => theta,
    }
}

fn interest_scores(u: &DVector<f64>, reps: &[DVector<f64>], items: &[usize]) -> Vec<Scored> {
    items
        .iter()
        .map(|&j| Scored {
            item: j,
            score: u.dot(&reps[j]),
            source: None,
        })
        .collect()
}

impl Scorer for LaCtrModel {
    fn n_users(&self) -> usize {
        self.state.u.len()
    }

    fn n_items(&self) -> usize {
        self.state.v.len()
    }

    fn score_items(&self, user: usize, items: &[usize], opts: &ScoreOptions) -> Result<Vec<Scored>> {
        let st = &self.state;
        let reps = item_vectors(&st.v, &st.theta, opts.mode);
        if opts.latent == Latent::Interest {
            return Ok(interest_scores(&st.u[user], reps, items));
        }
        let range = self.edges.range(user);
        let sum_phi = (opts.aggregation == Aggregation::Sum)
            .then(|| range.clone().fold(DVector::zeros(st.k()), |acc, e| acc + &st.phi[e]));
        Ok(items
            .iter()
            .map(|&j| {
                let x = &reps[j];
                let mut best = f64::NEG_INFINITY;
                let mut source = None;
                for e in range.clone() {
                    let s = st.phi[e].dot(x);
                    if s > best {
                        best = s;
                        source = Some(self.edges.edge(e).source);
                    }
                }
                let score = match &sum_phi {
                    Some(total) => total.dot(x),
                    None => best,
                };
                Scored { item: j, score, source }
            })
            .collect())
    }
}

impl Scorer for CtrModel {
    fn n_users(&self) -> usize {
        self.state.u.len()
    }

    fn n_items(&self) -> usize {
        self.state.v.len()
    }

    fn score_items(&self, user: usize, items: &[usize], opts: &ScoreOptions) -> Result<Vec<Scored>> {
        if opts.latent == Latent::Attention {
            return Err(Error::input("the CTR baseline has no attention vectors"));
        }
        let st = &self.state;
        Ok(interest_scores(&st.u[user], item_vectors(&st.v, &st.theta, opts.mode), items))
    }
}

impl Scorer for TrainedModel {
    fn n_users(&self) -> usize {
        match self {
            TrainedModel::LaCtr(m) => m.n_users(),
            TrainedModel::Ctr(m) => m.n_users(),
        }
    }

    fn n_items(&self) -> usize {
        match self {
            TrainedModel::LaCtr(m) => m.n_items(),
            TrainedModel::Ctr(m) => m.n_items(),
        }
    }

    fn score_items(&self, user: usize, items: &[usize], opts: &ScoreOptions) -> Result<Vec<Scored>> {
        match self {
            TrainedModel::LaCtr(m) => m.score_items(user, items, opts),
            TrainedModel::Ctr(m) => m.score_items(user, items, opts),
        }
    }
}

/// Ignores the prediction mode and latent choice.
impl Scorer for Popularity {
    fn n_users(&self) -> usize {
        self.n_users
    }

    fn n_items(&self) -> usize {
        self.counts.len()
    }

    fn score_items(&self, _user: usize, items: &[usize], _opts: &ScoreOptions) -> Result<Vec<Scored>> {
        Ok(items
            .iter()
            .map(|&j| Scored {
                item: j,
                score: self.counts[j],
                source: None,
            })
            .collect())
    }
}

/// Uniform random scores, reproducible per `(seed, user)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RandomScorer {
    pub n_users: usize,
    pub n_items: usize,
    pub seed: u64,
}

impl Scorer for RandomScorer {
    fn n_users(&self) -> usize {
        self.n_users
    }

    fn n_items(&self) -> usize {
        self.n_items
    }

    fn score_items(&self, user: usize, items: &[usize], _opts: &ScoreOptions) -> Result<Vec<Scored>> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(user as u64);
        let all: Vec<f64> = (0..self.n_items).map(|_| rng.random()).collect();
        Ok(items
            .iter()
            .map(|&j| Scored {
                item: j,
                score: all[j],
                source: None,
            })
            .collect())
    }
}
