//! Exact block maximizers of the log likelihood.
//!
//! Zero ratings all share confidence `b_r`, so the rating part of each normal
//! equation splits into `b_r * (global Gram matrix)` plus a correction over
//! the positive entries only, as in implicit-feedback ALS. The global Gram
//! matrices are computed once per phase.

use nalgebra::{DMatrix, DVector};

use crate::corpus::Document;
use crate::error::Result;
use crate::linalg::{project_simplex, scaled_gram, solve_spd};

use super::{ModelState, Problem};

/// Cap on projected-gradient iterations per `theta_j` update.
pub const THETA_MAX_STEPS: usize = 50;

/// `b_r V^T V`, used by the attention updates.
pub fn item_gram(p: &Problem, state: &ModelState) -> DMatrix<f64> {
    scaled_gram(&state.v, p.hp.k, p.hp.b_r)
}

/// `b_r sum_e phi_e phi_e^T`, used by the item updates.
pub fn attention_gram(p: &Problem, state: &ModelState) -> DMatrix<f64> {
    scaled_gram(&state.phi, p.hp.k, p.hp.b_r)
}

/// `u_i = lambda_phi sum_l c_il s_il phi_il / (lambda_u + lambda_phi sum_l c_il s_il^2)`.
pub fn update_user_interest(p: &Problem, state: &ModelState, i: usize) -> DVector<f64> {
    let hp = p.hp;
    let mut num = DVector::zeros(hp.k);
    let mut den = hp.lambda_u;
    for e in p.edges.range(i) {
        let c = p.phi_confidence(e);
        let s = state.s[e];
        num.axpy(hp.lambda_phi * c * s, &state.phi[e], 1.0);
        den += hp.lambda_phi * c * s * s;
    }
    num / den
}

/// `s_il = lambda_phi c_il phi_il.u_i / (lambda_s + lambda_phi c_il |u_i|^2)`.
pub fn update_influence(p: &Problem, state: &ModelState, e: usize) -> f64 {
    let hp = p.hp;
    let c = p.phi_confidence(e);
    let u = &state.u[p.edges.edge(e).user];
    hp.lambda_phi * c * state.phi[e].dot(u) / (hp.lambda_s + hp.lambda_phi * c * u.norm_squared())
}

/// Solves `(lambda_phi c I + gram_r + (a_r - b_r) sum_P v v^T) phi = a_r sum_P v + lambda_phi c s u`
/// over the positive items `P` of edge `e`.
pub fn update_attention(p: &Problem, state: &ModelState, e: usize, gram_r: &DMatrix<f64>) -> Result<DVector<f64>> {
    let hp = p.hp;
    let c = p.phi_confidence(e);
    let edge = p.edges.edge(e);
    let mut a = gram_r.clone();
    let mut b = (hp.lambda_phi * c * state.s[e]) * &state.u[edge.user];
    for &j in p.ratings.items_of_edge(e) {
        let v = &state.v[j];
        a.ger(hp.a_r - hp.b_r, v, v, 1.0);
        b.axpy(hp.a_r, v, 1.0);
    }
    for d in 0..hp.k {
        a[(d, d)] += hp.lambda_phi * c;
    }
    solve_spd(a, &b, &format!("attention phi[{} <- {}]", edge.user, edge.source))
}

/// Solves `(lambda_v I + gram_phi + (a_r - b_r) sum_P phi phi^T) v = a_r sum_P phi + lambda_v theta`
/// over the edges `P` rating item `j` positively.
pub fn update_item(p: &Problem, state: &ModelState, j: usize, gram_phi: &DMatrix<f64>) -> Result<DVector<f64>> {
    let hp = p.hp;
    let mut a = gram_phi.clone();
    let mut b = hp.lambda_v * &state.theta[j];
    for &e in p.ratings.edges_of_item(j) {
        let phi = &state.phi[e];
        a.ger(hp.a_r - hp.b_r, phi, phi, 1.0);
        b.axpy(hp.a_r, phi, 1.0);
    }
    for d in 0..hp.k {
        a[(d, d)] += hp.lambda_v;
    }
    solve_spd(a, &b, &format!("item v[{j}]"))
}

/// The part of the log likelihood that depends on `theta_j`:
/// `sum_m log(sum_k theta_k beta_k,w_m) - lambda_v/2 |v_j - theta_j|^2`.
///
/// This equals the Jensen bound evaluated at its optimal responsibilities
/// `psi_mk ∝ theta_k beta_k,w_m`, so maximizing it is maximizing the bound.
pub fn theta_objective(theta: &DVector<f64>, v: &DVector<f64>, beta: &DMatrix<f64>, doc: &Document, lambda_v: f64) -> f64 {
    let mut f = -0.5 * lambda_v * (v - theta).norm_squared();
    for &(w, c) in &doc.counts {
        f += c as f64 * beta.column(w).dot(theta).ln();
    }
    f
}

fn theta_gradient(theta: &DVector<f64>, v: &DVector<f64>, beta: &DMatrix<f64>, doc: &Document, lambda_v: f64) -> DVector<f64> {
    let mut g = lambda_v * (v - theta);
    for &(w, c) in &doc.counts {
        let col = beta.column(w);
        let mix = col.dot(theta);
        g.axpy(c as f64 / mix, &col, 1.0);
    }
    g
}

/// Projected gradient ascent on the simplex with backtracking.
///
/// A step is accepted only under the Armijo condition, so the objective never
/// decreases; if no ascent step exists `theta` is returned unchanged.
pub fn update_theta(theta: &DVector<f64>, v: &DVector<f64>, beta: &DMatrix<f64>, doc: &Document, lambda_v: f64) -> DVector<f64> {
    const ARMIJO: f64 = 1e-4;
    const MAX_HALVINGS: usize = 60;

    let mut current = theta.clone();
    let mut f = theta_objective(&current, v, beta, doc, lambda_v);
    if !f.is_finite() {
        return current;
    }
    let mut step = 1.0;
    for _ in 0..THETA_MAX_STEPS {
        let g = theta_gradient(&current, v, beta, doc, lambda_v);
        let scale = g.amax().max(1.0);
        let mut accepted = None;
        let mut eta = step;
        for _ in 0..MAX_HALVINGS {
            let moved: Vec<f64> = current.iter().zip(g.iter()).map(|(t, gk)| t + eta / scale * gk).collect();
            let cand = DVector::from_vec(project_simplex(&moved));
            let dir = &cand - &current;
            if dir.amax() == 0.0 {
                break;
            }
            let f_new = theta_objective(&cand, v, beta, doc, lambda_v);
            if f_new >= f + ARMIJO * g.dot(&dir) {
                accepted = Some((cand, f_new));
                break;
            }
            eta *= 0.5;
        }
        let Some((cand, f_new)) = accepted else { break };
        let gain = f_new - f;
        current = cand;
        f = f_new;
        step = (eta * 2.0).min(1e6);
        if gain <= 1e-14 * f.abs().max(1.0) {
            break;
        }
    }
    current
}

/// Flips the sign of `u_i` and all `s_il` when `sum_l c_il s_il < 0`.
///
/// The objective is invariant under `(u_i, s_i.) -> (-u_i, -s_i.)`; fixing the
/// orientation makes interest-based scores comparable across users.
pub fn orient_user(p: &Problem, state: &mut ModelState, i: usize) -> bool {
    let weighted: f64 = p.edges.range(i).map(|e| p.phi_confidence(e) * state.s[e]).sum();
    if weighted < 0.0 {
        state.u[i].neg_mut();
        for e in p.edges.range(i) {
            state.s[e] = -state.s[e];
        }
        true
    } else {
        false
    }
}
