use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::social::EdgeKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThetaMode {
    /// Re-estimate item topics and topic-word distributions every sweep.
    #[default]
    Optimize,
    /// Keep the LDA warm start fixed.
    Frozen,
}

/// Precisions, confidences and loop controls.
///
/// Defaults are the settings reported best on the Digg data: 200 topics,
/// `lambda_u = 0.01`, `lambda_v = 100`, `lambda_phi = 1`, `lambda_s = 0.01`,
/// and confidences `a = 1`, `b = 0.01` for both ratings and attention.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub k: usize,
    pub lambda_u: f64,
    pub lambda_v: f64,
    pub lambda_s: f64,
    pub lambda_phi: f64,
    pub a_r: f64,
    pub b_r: f64,
    pub a_phi: f64,
    pub b_phi: f64,
    pub theta_mode: ThetaMode,
    pub max_sweeps: usize,
    /// Relative log-likelihood improvement below which training stops.
    pub tol: f64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            k: 200,
            lambda_u: 0.01,
            lambda_v: 100.0,
            lambda_s: 0.01,
            lambda_phi: 1.0,
            a_r: 1.0,
            b_r: 0.01,
            a_phi: 1.0,
            b_phi: 0.01,
            theta_mode: ThetaMode::Optimize,
            max_sweeps: 100,
            tol: 1e-6,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::input(format!("invalid hyperparameters: {msg}")));
        if self.k == 0 {
            return bad("k must be positive");
        }
        for (name, x) in [
            ("lambda_u", self.lambda_u),
            ("lambda_v", self.lambda_v),
            ("lambda_s", self.lambda_s),
            ("lambda_phi", self.lambda_phi),
        ] {
            if !(x > 0.0 && x.is_finite()) {
                return bad(&format!("{name} must be positive and finite, got {x}"));
            }
        }
        if !(self.a_r > self.b_r && self.b_r > 0.0 && self.a_r.is_finite()) {
            return bad("rating confidences need a_r > b_r > 0");
        }
        if !(self.a_phi > self.b_phi && self.b_phi > 0.0 && self.a_phi.is_finite()) {
            return bad("attention confidences need a_phi > b_phi > 0");
        }
        if self.tol.is_nan() || self.tol < 0.0 {
            return bad("tol must be non-negative");
        }
        Ok(())
    }

    /// `c^phi_il`: high for the self edge and followees, low for sampled edges.
    pub fn phi_confidence(&self, kind: EdgeKind) -> f64 {
        if kind.is_friend() {
            self.a_phi
        } else {
            self.b_phi
        }
    }
}
