use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::social::{AttentionEdgeSet, SourceAttribution};
use crate::topics::{row_sum_error, TopicModel};

use super::Hyperparams;

/// Standard deviation of the Gaussian noise used to initialize `u`, `s` and `phi`.
pub const INIT_STDDEV: f64 = 1e-3;

/// Latent parameters. `s[e]` and `phi[e]` are indexed by attention edge;
/// the item offset `epsilon_j` is implicit as `v[j] - theta[j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    pub u: Vec<DVector<f64>>,
    pub s: Vec<f64>,
    pub phi: Vec<DVector<f64>>,
    pub v: Vec<DVector<f64>>,
    pub theta: Vec<DVector<f64>>,
    pub beta: DMatrix<f64>,
}

impl ModelState {
    /// Warm start: topics from `init`, `v = theta`, small seeded noise elsewhere.
    pub fn initialize(init: &TopicModel, edges: &AttentionEdgeSet, seed: u64) -> Self {
        let k = init.k();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, INIT_STDDEV).unwrap();
        let mut draw = |n: usize| DVector::from_fn(n, |_, _| noise.sample(&mut rng));
        let u = (0..edges.n_users()).map(|_| draw(k)).collect();
        let s = (0..edges.len()).map(|_| draw(1)[0]).collect();
        let phi = (0..edges.len()).map(|_| draw(k)).collect();
        Self {
            u,
            s,
            phi,
            v: init.theta.clone(),
            theta: init.theta.clone(),
            beta: init.beta.clone(),
        }
    }

    pub fn k(&self) -> usize {
        self.beta.nrows()
    }

    pub fn n_users(&self) -> usize {
        self.u.len()
    }

    pub fn n_items(&self) -> usize {
        self.v.len()
    }

    pub fn max_row_sum_error(&self) -> f64 {
        row_sum_error(&self.theta, &self.beta)
    }

    pub fn is_finite(&self) -> bool {
        let vecs = self.u.iter().chain(&self.phi).chain(&self.v).chain(&self.theta);
        vecs.flat_map(|v| v.iter()).chain(self.s.iter()).chain(self.beta.iter()).all(|x| x.is_finite())
    }
}

/// Positive ratings `r_ijl = 1`, indexed both by attention edge and by item.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RatingView {
    by_edge: Vec<Vec<usize>>,
    by_item: Vec<Vec<usize>>,
}

impl RatingView {
    pub fn from_pairs(n_edges: usize, n_items: usize, pairs: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut by_edge = vec![Vec::new(); n_edges];
        let mut by_item = vec![Vec::new(); n_items];
        for (e, j) in pairs {
            if e >= n_edges || j >= n_items {
                return Err(Error::input(format!("rating (edge {e}, item {j}) out of range")));
            }
            by_edge[e].push(j);
            by_item[j].push(e);
        }
        for v in by_edge.iter_mut().chain(by_item.iter_mut()) {
            v.sort_unstable();
            v.dedup();
        }
        Ok(Self { by_edge, by_item })
    }

    /// One positive per (vote, candidate source) pair.
    pub fn from_attribution(attr: &SourceAttribution, edges: &AttentionEdgeSet, n_items: usize) -> Result<Self> {
        let mut pairs = Vec::new();
        for (&(i, j), sources) in &attr.sources {
            for &l in sources {
                let e = edges
                    .find(i, l)
                    .ok_or_else(|| Error::input(format!("attributed source {l} of user {i} is not an attention edge")))?;
                pairs.push((e, j));
            }
        }
        Self::from_pairs(edges.len(), n_items, pairs)
    }

    pub fn items_of_edge(&self, e: usize) -> &[usize] {
        &self.by_edge[e]
    }

    pub fn edges_of_item(&self, j: usize) -> &[usize] {
        &self.by_item[j]
    }

    pub fn is_positive(&self, e: usize, j: usize) -> bool {
        self.by_edge[e].binary_search(&j).is_ok()
    }

    pub fn n_edges(&self) -> usize {
        self.by_edge.len()
    }

    pub fn n_items(&self) -> usize {
        self.by_item.len()
    }

    pub fn n_positives(&self) -> usize {
        self.by_edge.iter().map(Vec::len).sum()
    }
}

/// Everything held fixed during training.
#[derive(Debug, Clone, Copy)]
pub struct Problem<'a> {
    pub corpus: &'a Corpus,
    pub edges: &'a AttentionEdgeSet,
    pub ratings: &'a RatingView,
    pub hp: &'a Hyperparams,
}

impl<'a> Problem<'a> {
    pub fn new(
        corpus: &'a Corpus,
        edges: &'a AttentionEdgeSet,
        ratings: &'a RatingView,
        hp: &'a Hyperparams,
    ) -> Result<Self> {
        hp.validate()?;
        if ratings.n_edges() != edges.len() {
            return Err(Error::input("rating view and attention edges disagree on the edge count"));
        }
        if ratings.n_items() != corpus.n_items() {
            return Err(Error::input("rating view and corpus disagree on the item count"));
        }
        Ok(Self {
            corpus,
            edges,
            ratings,
            hp,
        })
    }

    pub fn phi_confidence(&self, e: usize) -> f64 {
        self.hp.phi_confidence(self.edges.edge(e).kind)
    }

    /// Checks that a state has the shapes this problem expects.
    pub fn check_state(&self, state: &ModelState) -> Result<()> {
        let k = self.hp.k;
        let ok = state.u.len() == self.edges.n_users()
            && state.s.len() == self.edges.len()
            && state.phi.len() == self.edges.len()
            && state.v.len() == self.corpus.n_items()
            && state.theta.len() == self.corpus.n_items()
            && state.beta.nrows() == k
            && state.beta.ncols() == self.corpus.vocab_size()
            && state.u.iter().chain(&state.phi).chain(&state.v).chain(&state.theta).all(|x| x.len() == k);
        if ok {
            Ok(())
        } else {
            Err(Error::input("model state dimensions do not match the problem"))
        }
    }
}
