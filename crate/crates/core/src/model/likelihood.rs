use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

use super::{ModelState, Problem};

/// The complete log likelihood, split by term.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogLikelihood {
    pub user_prior: f64,
    pub item_prior: f64,
    pub words: f64,
    pub influence_prior: f64,
    pub ratings: f64,
    pub attention: f64,
}

impl LogLikelihood {
    pub fn total(&self) -> f64 {
        self.user_prior + self.item_prior + self.words + self.influence_prior + self.ratings + self.attention
    }
}

/// Evaluates the MAP objective over the materialized attention edges.
///
/// The rating sum over all (edge, item) pairs uses
/// `sum_j b_r (phi.v_j)^2 = b_r phi^T (V^T V) phi`, then corrects the
/// positive entries, so the result equals the literal triple sum.
pub fn log_likelihood(p: &Problem, state: &ModelState) -> Result<LogLikelihood> {
    p.check_state(state)?;
    let hp = p.hp;

    let user_prior = -0.5 * hp.lambda_u * state.u.iter().map(|u| u.norm_squared()).sum::<f64>();
    let item_prior = -0.5
        * hp.lambda_v
        * state
            .v
            .iter()
            .zip(&state.theta)
            .map(|(v, t)| (v - t).norm_squared())
            .sum::<f64>();
    let influence_prior = -0.5 * hp.lambda_s * state.s.iter().map(|s| s * s).sum::<f64>();

    let mut words = 0.0;
    for (doc, theta) in p.corpus.documents.iter().zip(&state.theta) {
        for &(w, c) in &doc.counts {
            words += c as f64 * state.beta.column(w).dot(theta).ln();
        }
    }

    let ratings = rating_term(p, &state.phi, &state.v);

    let mut attention = 0.0;
    for (e, edge) in p.edges.edges().iter().enumerate() {
        let diff = &state.phi[e] - state.s[e] * &state.u[edge.user];
        attention -= 0.5 * hp.lambda_phi * p.phi_confidence(e) * diff.norm_squared();
    }

    let ll = LogLikelihood {
        user_prior,
        item_prior,
        words,
        influence_prior,
        ratings,
        attention,
    };
    for (name, x) in [
        ("user interest prior", user_prior),
        ("item offset prior", item_prior),
        ("word likelihood", words),
        ("influence prior", influence_prior),
        ("rating likelihood", ratings),
        ("attention prior", attention),
    ] {
        if !x.is_finite() {
            return Err(Error::numeric(name, format!("log likelihood term is {x}")));
        }
    }
    Ok(ll)
}

/// `-sum_e sum_j c_ejl/2 (r_ej - phi_e . v_j)^2` for the given attention and item latents.
pub fn rating_term(p: &Problem, phi: &[DVector<f64>], v: &[DVector<f64>]) -> f64 {
    let hp = p.hp;
    let k = hp.k;
    let mut gram = DMatrix::zeros(k, k);
    for vj in v {
        gram.ger(1.0, vj, vj, 1.0);
    }
    let mut total = 0.0;
    for (e, phi_e) in phi.iter().enumerate() {
        total += hp.b_r * phi_e.dot(&(&gram * phi_e));
        for &j in p.ratings.items_of_edge(e) {
            let x = phi_e.dot(&v[j]);
            total += hp.a_r * (1.0 - x) * (1.0 - x) - hp.b_r * x * x;
        }
    }
    -0.5 * total
}
