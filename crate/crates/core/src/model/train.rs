use rayon::prelude::*;

use crate::error::Result;
use crate::topics::{reestimate_beta, TopicModel};

use super::updates::{
    attention_gram, item_gram, orient_user, update_attention, update_influence, update_item, update_theta,
    update_user_interest,
};
use super::{log_likelihood, ModelState, Problem, ThetaMode};

/// One block of a sweep, in execution order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Block {
    Attention(usize),
    Influence(usize),
    Interest(usize),
    Orientation(usize),
    Item(usize),
    Theta(usize),
    Beta,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub sweep: usize,
    pub log_likelihood: f64,
    pub delta: f64,
}

/// Block coordinate ascent. Each sweep runs all `phi`, then all `s`, all `u`
/// (followed by the sign orientation), all `v`, all `theta` and finally `beta`.
pub struct Trainer<'a> {
    problem: Problem<'a>,
    state: ModelState,
    trace: Vec<TraceRow>,
}

impl<'a> Trainer<'a> {
    pub fn new(problem: Problem<'a>, init: &TopicModel, seed: u64) -> Result<Self> {
        Self::from_state(problem, ModelState::initialize(init, problem.edges, seed))
    }

    pub fn from_state(problem: Problem<'a>, state: ModelState) -> Result<Self> {
        problem.check_state(&state)?;
        let ll = log_likelihood(&problem, &state)?.total();
        Ok(Self {
            problem,
            state,
            trace: vec![TraceRow {
                sweep: 0,
                log_likelihood: ll,
                delta: 0.0,
            }],
        })
    }

    pub fn state(&self) -> &ModelState {
        &self.state
    }

    pub fn problem(&self) -> &Problem<'a> {
        &self.problem
    }

    pub fn trace(&self) -> &[TraceRow] {
        &self.trace
    }

    pub fn into_parts(self) -> (ModelState, Vec<TraceRow>) {
        (self.state, self.trace)
    }

    fn optimize_topics(&self) -> bool {
        self.problem.hp.theta_mode == ThetaMode::Optimize
    }

    /// One full sweep; blocks of the same kind are updated in parallel from a
    /// common snapshot. Returns the new log likelihood.
    pub fn sweep(&mut self) -> Result<f64> {
        let n = self.trace.len();
        self.parallel_sweep().map_err(|e| e.context(format!("sweep {n}")))?;
        self.record()
    }

    fn parallel_sweep(&mut self) -> Result<()> {
        let p = self.problem;
        let n_edges = p.edges.len();

        let gram_r = item_gram(&p, &self.state);
        let st = &self.state;
        let phi: Vec<_> = (0..n_edges)
            .into_par_iter()
            .map(|e| update_attention(&p, st, e, &gram_r))
            .collect::<Result<_>>()?;
        self.state.phi = phi;

        let st = &self.state;
        let s: Vec<f64> = (0..n_edges).into_par_iter().map(|e| update_influence(&p, st, e)).collect();
        self.state.s = s;

        let st = &self.state;
        let u: Vec<_> = (0..st.n_users())
            .into_par_iter()
            .map(|i| update_user_interest(&p, st, i))
            .collect();
        self.state.u = u;
        for i in 0..self.state.n_users() {
            orient_user(&p, &mut self.state, i);
        }

        let gram_phi = attention_gram(&p, &self.state);
        let st = &self.state;
        let v: Vec<_> = (0..st.n_items())
            .into_par_iter()
            .map(|j| update_item(&p, st, j, &gram_phi))
            .collect::<Result<_>>()?;
        self.state.v = v;

        if self.optimize_topics() {
            let st = &self.state;
            let theta: Vec<_> = (0..st.n_items())
                .into_par_iter()
                .map(|j| update_theta(&st.theta[j], &st.v[j], &st.beta, &p.corpus.documents[j], p.hp.lambda_v))
                .collect();
            self.state.theta = theta;
            self.state.beta = reestimate_beta(&self.state.theta, &self.state.beta, p.corpus);
        }
        Ok(())
    }

    /// Same sweep, sequential, calling `observe` after every single block.
    /// Produces exactly the state `sweep` would.
    pub fn sweep_observed<F>(&mut self, mut observe: F) -> Result<f64>
    where
        F: FnMut(Block, &ModelState) -> Result<()>,
    {
        let p = self.problem;
        let n_edges = p.edges.len();

        let gram_r = item_gram(&p, &self.state);
        for e in 0..n_edges {
            self.state.phi[e] = update_attention(&p, &self.state, e, &gram_r)?;
            observe(Block::Attention(e), &self.state)?;
        }
        for e in 0..n_edges {
            self.state.s[e] = update_influence(&p, &self.state, e);
            observe(Block::Influence(e), &self.state)?;
        }
        for i in 0..self.state.n_users() {
            self.state.u[i] = update_user_interest(&p, &self.state, i);
            observe(Block::Interest(i), &self.state)?;
        }
        for i in 0..self.state.n_users() {
            orient_user(&p, &mut self.state, i);
            observe(Block::Orientation(i), &self.state)?;
        }
        let gram_phi = attention_gram(&p, &self.state);
        for j in 0..self.state.n_items() {
            self.state.v[j] = update_item(&p, &self.state, j, &gram_phi)?;
            observe(Block::Item(j), &self.state)?;
        }
        if self.optimize_topics() {
            for j in 0..self.state.n_items() {
                let st = &self.state;
                self.state.theta[j] = update_theta(&st.theta[j], &st.v[j], &st.beta, &p.corpus.documents[j], p.hp.lambda_v);
                observe(Block::Theta(j), &self.state)?;
            }
            self.state.beta = reestimate_beta(&self.state.theta, &self.state.beta, p.corpus);
            observe(Block::Beta, &self.state)?;
        }
        self.record()
    }

    fn record(&mut self) -> Result<f64> {
        let sweep = self.trace.len();
        let ll = log_likelihood(&self.problem, &self.state)
            .map_err(|e| e.context(format!("sweep {sweep}")))?
            .total();
        let prev = self.trace.last().map_or(ll, |r| r.log_likelihood);
        self.trace.push(TraceRow {
            sweep,
            log_likelihood: ll,
            delta: ll - prev,
        });
        Ok(ll)
    }

    /// Whether the last sweep improved the objective by less than `tol` (relative).
    pub fn converged(&self) -> bool {
        match self.trace.as_slice() {
            [.., a, b] => (b.log_likelihood - a.log_likelihood) < self.problem.hp.tol * a.log_likelihood.abs(),
            _ => false,
        }
    }

    /// Sweeps until convergence or `max_sweeps`.
    pub fn run(&mut self) -> Result<()> {
        while self.trace.len() <= self.problem.hp.max_sweeps {
            self.sweep()?;
            if self.converged() {
                break;
            }
        }
        Ok(())
    }
}

/// Trains from an LDA warm start and returns the final state and the per-sweep trace.
pub fn train(problem: Problem, init: &TopicModel, seed: u64) -> Result<(ModelState, Vec<TraceRow>)> {
    if init.k() != problem.hp.k {
        return Err(crate::Error::input(format!(
            "topic model has {} topics but hyperparameters ask for {}",
            init.k(),
            problem.hp.k
        )));
    }
    let mut trainer = Trainer::new(problem, init, seed)?;
    trainer.run()?;
    Ok(trainer.into_parts())
}
