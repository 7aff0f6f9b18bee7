//! Trained models and the self-describing JSON model dump.
//!
//! Floats are written in shortest round-trip form and parsed exactly, so a
//! dump reloads bit-for-bit.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::baselines::CtrState;
use crate::error::{Error, Result};
use crate::model::{Hyperparams, ModelState};
use crate::social::{AttentionEdge, AttentionEdgeSet, EdgeKind};

pub const DUMP_FORMAT: &str = "lactr-model";
pub const DUMP_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct LaCtrModel {
    pub hp: Hyperparams,
    pub edges: AttentionEdgeSet,
    pub state: ModelState,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CtrModel {
    pub hp: Hyperparams,
    pub state: CtrState,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TrainedModel {
    LaCtr(LaCtrModel),
    Ctr(CtrModel),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    LaCtr,
    Ctr,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub n_users: usize,
    pub n_items: usize,
    pub k: usize,
    pub vocab_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeDump {
    pub user: usize,
    pub source: usize,
    pub kind: EdgeKind,
    pub s: f64,
    pub phi: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDump {
    pub format: String,
    pub version: u32,
    pub kind: ModelKind,
    pub dims: Dims,
    pub hyperparams: Hyperparams,
    pub u: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub theta: Vec<Vec<f64>>,
    pub beta: Vec<Vec<f64>>,
    /// `null` for models without attention edges.
    pub edges: Option<Vec<EdgeDump>>,
}

fn rows(v: &[DVector<f64>]) -> Vec<Vec<f64>> {
    v.iter().map(|r| r.as_slice().to_vec()).collect()
}

fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|r| m.row(r).iter().copied().collect()).collect()
}

fn vectors(rows: Vec<Vec<f64>>, k: usize, what: &str) -> Result<Vec<DVector<f64>>> {
    rows.into_iter()
        .map(|r| {
            if r.len() == k {
                Ok(DVector::from_vec(r))
            } else {
                Err(Error::input(format!("{what} row has length {} instead of {k}", r.len())))
            }
        })
        .collect()
}

impl TrainedModel {
    pub fn kind(&self) -> ModelKind {
        match self {
            TrainedModel::LaCtr(_) => ModelKind::LaCtr,
            TrainedModel::Ctr(_) => ModelKind::Ctr,
        }
    }

    pub fn hyperparams(&self) -> &Hyperparams {
        match self {
            TrainedModel::LaCtr(m) => &m.hp,
            TrainedModel::Ctr(m) => &m.hp,
        }
    }

    pub fn beta(&self) -> &DMatrix<f64> {
        match self {
            TrainedModel::LaCtr(m) => &m.state.beta,
            TrainedModel::Ctr(m) => &m.state.beta,
        }
    }

    pub fn to_dump(&self) -> ModelDump {
        let (hp, u, v, theta, beta, edges) = match self {
            TrainedModel::LaCtr(m) => {
                let edges = m
                    .edges
                    .edges()
                    .iter()
                    .enumerate()
                    .map(|(e, edge)| EdgeDump {
                        user: edge.user,
                        source: edge.source,
                        kind: edge.kind,
                        s: m.state.s[e],
                        phi: m.state.phi[e].as_slice().to_vec(),
                    })
                    .collect();
                (m.hp, &m.state.u, &m.state.v, &m.state.theta, &m.state.beta, Some(edges))
            }
            TrainedModel::Ctr(m) => (m.hp, &m.state.u, &m.state.v, &m.state.theta, &m.state.beta, None),
        };
        ModelDump {
            format: DUMP_FORMAT.into(),
            version: DUMP_VERSION,
            kind: self.kind(),
            dims: Dims {
                n_users: u.len(),
                n_items: v.len(),
                k: beta.nrows(),
                vocab_size: beta.ncols(),
            },
            hyperparams: hp,
            u: rows(u),
            v: rows(v),
            theta: rows(theta),
            beta: matrix_rows(beta),
            edges,
        }
    }

    pub fn from_dump(dump: ModelDump) -> Result<Self> {
        if dump.format != DUMP_FORMAT || dump.version != DUMP_VERSION {
            return Err(Error::input(format!(
                "unsupported model dump {} v{}",
                dump.format, dump.version
            )));
        }
        let Dims {
            n_users,
            n_items,
            k,
            vocab_size,
        } = dump.dims;
        if dump.u.len() != n_users || dump.v.len() != n_items || dump.theta.len() != n_items || dump.beta.len() != k {
            return Err(Error::input("model dump dimensions disagree with its contents"));
        }
        if dump.beta.iter().any(|r| r.len() != vocab_size) {
            return Err(Error::input("beta rows do not match the vocabulary size"));
        }
        let beta = DMatrix::from_fn(k, vocab_size, |r, c| dump.beta[r][c]);
        let u = vectors(dump.u, k, "u")?;
        let v = vectors(dump.v, k, "v")?;
        let theta = vectors(dump.theta, k, "theta")?;
        match (dump.kind, dump.edges) {
            (ModelKind::Ctr, None) => Ok(TrainedModel::Ctr(CtrModel {
                hp: dump.hyperparams,
                state: CtrState { u, v, theta, beta },
            })),
            (ModelKind::LaCtr, Some(edge_dumps)) => {
                let edges = AttentionEdgeSet::from_edges(n_users, edge_dumps.iter().map(|d| AttentionEdge {
                    user: d.user,
                    source: d.source,
                    kind: d.kind,
                }))?;
                if edges.len() != edge_dumps.len() {
                    return Err(Error::input("model dump has duplicate or missing attention edges"));
                }
                let mut s = vec![0.0; edges.len()];
                let mut phi = vec![DVector::zeros(k); edges.len()];
                for d in edge_dumps {
                    let e = edges.find(d.user, d.source).expect("edge was just inserted");
                    if d.phi.len() != k {
                        return Err(Error::input("phi has the wrong length"));
                    }
                    s[e] = d.s;
                    phi[e] = DVector::from_vec(d.phi);
                }
                Ok(TrainedModel::LaCtr(LaCtrModel {
                    hp: dump.hyperparams,
                    edges,
                    state: ModelState {
                        u,
                        s,
                        phi,
                        v,
                        theta,
                        beta,
                    },
                }))
            }
            _ => Err(Error::input("model kind and edge section disagree")),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(&self.to_dump())?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_dump(serde_json::from_str(&text)?)
    }
}
