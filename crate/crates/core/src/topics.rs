//! LDA warm start and topic-word re-estimation.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Document, Vocabulary};
use crate::error::{Error, Result};
use crate::linalg::top_indices;

/// Item topic proportions (`theta`, one simplex row per item) and topics
/// (`beta`, K x M, one word distribution per row).
#[derive(Debug, Clone, PartialEq)]
pub struct TopicModel {
    pub theta: Vec<DVector<f64>>,
    pub beta: DMatrix<f64>,
}

impl TopicModel {
    pub fn k(&self) -> usize {
        self.beta.nrows()
    }

    pub fn vocab_size(&self) -> usize {
        self.beta.ncols()
    }

    /// Largest deviation of any theta/beta row sum from one.
    pub fn max_row_sum_error(&self) -> f64 {
        row_sum_error(&self.theta, &self.beta)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let dump = TopicDump {
            k: self.k(),
            theta: self.theta.iter().map(|t| t.as_slice().to_vec()).collect(),
            beta: (0..self.k()).map(|k| self.beta.row(k).iter().copied().collect()).collect(),
        };
        let text = serde_json::to_string(&dump)?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let dump: TopicDump = serde_json::from_str(&text)?;
        let m = dump.beta.first().map_or(0, Vec::len);
        if dump.beta.len() != dump.k || dump.beta.iter().any(|r| r.len() != m) || dump.theta.iter().any(|t| t.len() != dump.k) {
            return Err(Error::input(format!("{}: inconsistent topic model dimensions", path.display())));
        }
        Ok(Self {
            theta: dump.theta.into_iter().map(DVector::from_vec).collect(),
            beta: DMatrix::from_fn(dump.k, m, |k, w| dump.beta[k][w]),
        })
    }
}

#[derive(Serialize, Deserialize)]
struct TopicDump {
    k: usize,
    theta: Vec<Vec<f64>>,
    beta: Vec<Vec<f64>>,
}

pub(crate) fn row_sum_error(theta: &[DVector<f64>], beta: &DMatrix<f64>) -> f64 {
    let t = theta.iter().map(|r| (r.sum() - 1.0).abs());
    let b = (0..beta.nrows()).map(|k| (beta.row(k).sum() - 1.0).abs());
    t.chain(b).fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LdaConfig {
    pub k: usize,
    pub alpha: f64,
    pub eta: f64,
    pub iters: usize,
    pub seed: u64,
}

impl Default for LdaConfig {
    fn default() -> Self {
        Self {
            k: 200,
            alpha: 1.0,
            eta: 0.01,
            iters: 200,
            seed: 0,
        }
    }
}

/// Collapsed Gibbs sampling for LDA; estimates come from the final sweep's counts.
pub fn fit_lda(corpus: &Corpus, cfg: &LdaConfig) -> Result<TopicModel> {
    let LdaConfig { k, alpha, eta, iters, seed } = *cfg;
    if corpus.documents.is_empty() {
        return Err(Error::input("cannot fit LDA on an empty corpus"));
    }
    if k == 0 || iters == 0 || alpha <= 0.0 || eta <= 0.0 {
        return Err(Error::input("LDA needs k >= 1, iters >= 1, alpha > 0 and eta > 0"));
    }
    let m = corpus.vocab_size();
    let d = corpus.n_items();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let words: Vec<Vec<usize>> = corpus.documents.iter().map(expand_tokens).collect();
    let mut z: Vec<Vec<usize>> = words
        .iter()
        .map(|ws| ws.iter().map(|_| rng.random_range(0..k)).collect())
        .collect();
    let mut n_dk = vec![vec![0u32; k]; d];
    let mut n_kw = vec![0u32; k * m];
    let mut n_k = vec![0u32; k];
    for (j, ws) in words.iter().enumerate() {
        for (&w, &t) in ws.iter().zip(&z[j]) {
            n_dk[j][t] += 1;
            n_kw[t * m + w] += 1;
            n_k[t] += 1;
        }
    }

    let m_eta = m as f64 * eta;
    let mut p = vec![0.0; k];
    for _ in 0..iters {
        for (j, ws) in words.iter().enumerate() {
            for (pos, &w) in ws.iter().enumerate() {
                let old = z[j][pos];
                n_dk[j][old] -= 1;
                n_kw[old * m + w] -= 1;
                n_k[old] -= 1;

                let mut total = 0.0;
                for t in 0..k {
                    total += (n_dk[j][t] as f64 + alpha) * (n_kw[t * m + w] as f64 + eta) / (n_k[t] as f64 + m_eta);
                    p[t] = total;
                }
                let u = rng.random::<f64>() * total;
                let new = p.iter().position(|&c| u < c).unwrap_or(k - 1);

                z[j][pos] = new;
                n_dk[j][new] += 1;
                n_kw[new * m + w] += 1;
                n_k[new] += 1;
            }
        }
    }

    let k_alpha = k as f64 * alpha;
    let theta = corpus
        .documents
        .iter()
        .zip(&n_dk)
        .map(|(doc, counts)| {
            DVector::from_iterator(k, counts.iter().map(|&c| (c as f64 + alpha) / (doc.length as f64 + k_alpha)))
        })
        .collect();
    let beta = DMatrix::from_fn(k, m, |t, w| (n_kw[t * m + w] as f64 + eta) / (n_k[t] as f64 + m_eta));
    Ok(TopicModel { theta, beta })
}

fn expand_tokens(doc: &Document) -> Vec<usize> {
    doc.counts
        .iter()
        .flat_map(|&(w, c)| std::iter::repeat_n(w, c as usize))
        .collect()
}

/// Word-topic responsibilities of one document, one K-vector per distinct word
/// (aligned with `doc.counts`): `psi_mk ∝ theta_k * beta_k,w_m`.
pub fn responsibilities(theta: &DVector<f64>, beta: &DMatrix<f64>, doc: &Document) -> Vec<DVector<f64>> {
    let k = theta.len();
    doc.counts
        .iter()
        .map(|&(w, _)| {
            let mut psi = DVector::from_fn(k, |t, _| theta[t] * beta[(t, w)]);
            let z = psi.sum();
            if z > 0.0 {
                psi /= z;
            } else {
                psi.fill(1.0 / k as f64);
            }
            psi
        })
        .collect()
}

/// `beta_kw ∝ sum_j sum_m psi_jmk [w_jm = w]`, with `psi[j]` aligned to the
/// distinct words of document `j` (each weighted by its count). Rows with no
/// mass become uniform.
pub fn update_beta(psi: &[Vec<DVector<f64>>], corpus: &Corpus, k: usize) -> Result<DMatrix<f64>> {
    if psi.len() != corpus.n_items() {
        return Err(Error::input("responsibilities do not match the corpus"));
    }
    let mut acc = DMatrix::zeros(k, corpus.vocab_size());
    for (doc, doc_psi) in corpus.documents.iter().zip(psi) {
        if doc_psi.len() != doc.counts.len() {
            return Err(Error::input(format!("responsibilities for {:?} have the wrong length", doc.item_id)));
        }
        for (&(w, c), p) in doc.counts.iter().zip(doc_psi) {
            for t in 0..k {
                acc[(t, w)] += c as f64 * p[t];
            }
        }
    }
    normalize_rows(&mut acc);
    Ok(acc)
}

/// Recomputes responsibilities from the current `theta`/`beta` and re-estimates `beta`.
pub fn reestimate_beta(theta: &[DVector<f64>], beta: &DMatrix<f64>, corpus: &Corpus) -> DMatrix<f64> {
    let k = beta.nrows();
    let mut acc = DMatrix::zeros(k, corpus.vocab_size());
    for (doc, th) in corpus.documents.iter().zip(theta) {
        for (&(w, c), p) in doc.counts.iter().zip(responsibilities(th, beta, doc)) {
            for t in 0..k {
                acc[(t, w)] += c as f64 * p[t];
            }
        }
    }
    normalize_rows(&mut acc);
    acc
}

fn normalize_rows(acc: &mut DMatrix<f64>) {
    let m = acc.ncols();
    for t in 0..acc.nrows() {
        let mut row = acc.row_mut(t);
        let z = row.sum();
        if z > 0.0 {
            row /= z;
        } else {
            row.fill(1.0 / m as f64);
        }
    }
}

/// `topic <k>: word:prob ...`, top `n` words per topic.
pub fn format_topics(beta: &DMatrix<f64>, vocab: &Vocabulary, n: usize) -> String {
    let mut out = String::new();
    for t in 0..beta.nrows() {
        let row: Vec<f64> = beta.row(t).iter().copied().collect();
        let words: Vec<String> = top_indices(&row, n)
            .into_iter()
            .map(|w| format!("{}:{:.6}", vocab.word(w), row[w]))
            .collect();
        writeln!(out, "topic {t}: {}", words.join(" ")).unwrap();
    }
    out
}
