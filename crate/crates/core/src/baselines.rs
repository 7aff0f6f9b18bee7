//! Plain collaborative topic regression: one interest vector per user, no
//! attention and no influence. Shares the topic machinery with the full model.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::linalg::{scaled_gram, solve_spd};
use crate::model::{update_theta, Hyperparams, ThetaMode, TraceRow, INIT_STDDEV};
use crate::social::VoteLog;
use crate::topics::{reestimate_beta, row_sum_error, TopicModel};

#[derive(Debug, Clone, PartialEq)]
pub struct CtrState {
    pub u: Vec<DVector<f64>>,
    pub v: Vec<DVector<f64>>,
    pub theta: Vec<DVector<f64>>,
    pub beta: DMatrix<f64>,
}

impl CtrState {
    pub fn initialize(init: &TopicModel, n_users: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, INIT_STDDEV).unwrap();
        let u = (0..n_users)
            .map(|_| DVector::from_fn(init.k(), |_, _| noise.sample(&mut rng)))
            .collect();
        Self {
            u,
            v: init.theta.clone(),
            theta: init.theta.clone(),
            beta: init.beta.clone(),
        }
    }

    pub fn max_row_sum_error(&self) -> f64 {
        row_sum_error(&self.theta, &self.beta)
    }
}

/// Binary user-item ratings, indexed both ways.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UserItemRatings {
    by_user: Vec<Vec<usize>>,
    by_item: Vec<Vec<usize>>,
}

impl UserItemRatings {
    pub fn from_pairs(n_users: usize, n_items: usize, pairs: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut by_user = vec![Vec::new(); n_users];
        let mut by_item = vec![Vec::new(); n_items];
        for (i, j) in pairs {
            if i >= n_users || j >= n_items {
                return Err(Error::input(format!("rating ({i}, {j}) out of range")));
            }
            by_user[i].push(j);
            by_item[j].push(i);
        }
        for v in by_user.iter_mut().chain(by_item.iter_mut()) {
            v.sort_unstable();
            v.dedup();
        }
        Ok(Self { by_user, by_item })
    }

    pub fn from_votes(votes: &VoteLog, n_items: usize) -> Result<Self> {
        Self::from_pairs(votes.n_users(), n_items, votes.votes.iter().map(|v| (v.user, v.item)))
    }

    pub fn items_of_user(&self, i: usize) -> &[usize] {
        &self.by_user[i]
    }

    pub fn users_of_item(&self, j: usize) -> &[usize] {
        &self.by_item[j]
    }

    pub fn n_users(&self) -> usize {
        self.by_user.len()
    }

    pub fn n_items(&self) -> usize {
        self.by_item.len()
    }
}

/// The CTR objective: priors on `u` and `v - theta`, word likelihood, and
/// confidence-weighted squared rating error over every user-item pair.
pub fn ctr_objective(corpus: &Corpus, ratings: &UserItemRatings, hp: &Hyperparams, state: &CtrState) -> f64 {
    let mut ll = -0.5 * hp.lambda_u * state.u.iter().map(|u| u.norm_squared()).sum::<f64>();
    ll -= 0.5
        * hp.lambda_v
        * state
            .v
            .iter()
            .zip(&state.theta)
            .map(|(v, t)| (v - t).norm_squared())
            .sum::<f64>();
    for (doc, theta) in corpus.documents.iter().zip(&state.theta) {
        for &(w, c) in &doc.counts {
            ll += c as f64 * state.beta.column(w).dot(theta).ln();
        }
    }
    let gram = scaled_gram(&state.v, hp.k, 1.0);
    for (i, u) in state.u.iter().enumerate() {
        let mut sq = hp.b_r * u.dot(&(&gram * u));
        for &j in ratings.items_of_user(i) {
            let x = u.dot(&state.v[j]);
            sq += hp.a_r * (1.0 - x) * (1.0 - x) - hp.b_r * x * x;
        }
        ll -= 0.5 * sq;
    }
    ll
}

/// `(lambda_u I + b V^T V + (a - b) sum_P v v^T) u = a sum_P v`.
pub fn ctr_update_user(ratings: &UserItemRatings, hp: &Hyperparams, state: &CtrState, i: usize, gram_v: &DMatrix<f64>) -> Result<DVector<f64>> {
    let mut a = gram_v.clone();
    let mut b = DVector::zeros(hp.k);
    for &j in ratings.items_of_user(i) {
        a.ger(hp.a_r - hp.b_r, &state.v[j], &state.v[j], 1.0);
        b.axpy(hp.a_r, &state.v[j], 1.0);
    }
    for d in 0..hp.k {
        a[(d, d)] += hp.lambda_u;
    }
    solve_spd(a, &b, &format!("ctr user u[{i}]"))
}

/// `(lambda_v I + b U^T U + (a - b) sum_P u u^T) v = a sum_P u + lambda_v theta`.
pub fn ctr_update_item(ratings: &UserItemRatings, hp: &Hyperparams, state: &CtrState, j: usize, gram_u: &DMatrix<f64>) -> Result<DVector<f64>> {
    let mut a = gram_u.clone();
    let mut b = hp.lambda_v * &state.theta[j];
    for &i in ratings.users_of_item(j) {
        a.ger(hp.a_r - hp.b_r, &state.u[i], &state.u[i], 1.0);
        b.axpy(hp.a_r, &state.u[i], 1.0);
    }
    for d in 0..hp.k {
        a[(d, d)] += hp.lambda_v;
    }
    solve_spd(a, &b, &format!("ctr item v[{j}]"))
}

/// One sweep: all `u`, all `v`, then `theta` and `beta` when topics are optimized.
pub fn ctr_sweep(corpus: &Corpus, ratings: &UserItemRatings, hp: &Hyperparams, state: &mut CtrState) -> Result<()> {
    let gram_v = scaled_gram(&state.v, hp.k, hp.b_r);
    let st = &*state;
    let u: Vec<_> = (0..st.u.len())
        .into_par_iter()
        .map(|i| ctr_update_user(ratings, hp, st, i, &gram_v))
        .collect::<Result<_>>()?;
    state.u = u;

    let gram_u = scaled_gram(&state.u, hp.k, hp.b_r);
    let st = &*state;
    let v: Vec<_> = (0..st.v.len())
        .into_par_iter()
        .map(|j| ctr_update_item(ratings, hp, st, j, &gram_u))
        .collect::<Result<_>>()?;
    state.v = v;

    if hp.theta_mode == ThetaMode::Optimize {
        let st = &*state;
        let theta: Vec<_> = (0..st.v.len())
            .into_par_iter()
            .map(|j| update_theta(&st.theta[j], &st.v[j], &st.beta, &corpus.documents[j], hp.lambda_v))
            .collect();
        state.theta = theta;
        state.beta = reestimate_beta(&state.theta, &state.beta, corpus);
    }
    Ok(())
}

pub fn train_ctr(
    corpus: &Corpus,
    init: &TopicModel,
    ratings: &UserItemRatings,
    hp: &Hyperparams,
    seed: u64,
) -> Result<(CtrState, Vec<TraceRow>)> {
    hp.validate()?;
    if init.k() != hp.k || ratings.n_items() != corpus.n_items() || init.theta.len() != corpus.n_items() {
        return Err(Error::input("CTR inputs have inconsistent dimensions"));
    }
    let mut state = CtrState::initialize(init, ratings.n_users(), seed);
    let objective = |s: &CtrState| -> Result<f64> {
        let ll = ctr_objective(corpus, ratings, hp, s);
        if ll.is_finite() {
            Ok(ll)
        } else {
            Err(Error::numeric("ctr objective", format!("value is {ll}")))
        }
    };
    let mut trace = vec![TraceRow {
        sweep: 0,
        log_likelihood: objective(&state)?,
        delta: 0.0,
    }];
    for sweep in 1..=hp.max_sweeps {
        ctr_sweep(corpus, ratings, hp, &mut state).map_err(|e| e.context(format!("ctr sweep {sweep}")))?;
        let prev = trace.last().unwrap().log_likelihood;
        let ll = objective(&state).map_err(|e| e.context(format!("ctr sweep {sweep}")))?;
        trace.push(TraceRow {
            sweep,
            log_likelihood: ll,
            delta: ll - prev,
        });
        if ll - prev < hp.tol * prev.abs() {
            break;
        }
    }
    Ok((state, trace))
}

/// Most-voted ranker: every user gets items ordered by training vote count.
#[derive(Debug, Clone, PartialEq)]
pub struct Popularity {
    pub n_users: usize,
    pub counts: Vec<f64>,
}

impl Popularity {
    pub fn from_ratings(ratings: &UserItemRatings) -> Self {
        Self {
            n_users: ratings.n_users(),
            counts: (0..ratings.n_items()).map(|j| ratings.users_of_item(j).len() as f64).collect(),
        }
    }
}
