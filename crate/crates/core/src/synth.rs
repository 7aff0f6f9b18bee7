//! Synthetic datasets sampled from the model's own generative process.
//!
//! Attention edges are every user's self edge plus one edge per followee.
//! Real-valued ratings `r_ijl ~ N(phi_il . v_j, 1 / a_r)` are binarized per
//! edge, then turned into timed votes by a cascade: a positive self edge
//! makes user `i` adopt item `j` at time 0, and a positive edge `(i, l)`
//! makes `i` adopt one step after `l` did. Users never reached stay silent.

use std::collections::{BTreeMap, VecDeque};
use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::distr::weighted::WeightedIndex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Normal};
use serde::{Deserialize, Serialize};

use crate::corpus::{write_items, Corpus, Document, RawItem, Vocabulary};
use crate::dump::{LaCtrModel, TrainedModel};
use crate::error::{Error, Result};
use crate::model::{Hyperparams, ModelState};
use crate::social::{AttentionEdge, AttentionEdgeSet, EdgeKind, FollowerGraph, SourceAttribution, Vote, VoteLog};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum GraphModel {
    /// Every ordered pair is a follow link with probability `p`.
    ErdosRenyi { p: f64 },
    /// Users arrive in order and follow `m` earlier users, chosen with
    /// probability proportional to their follower count plus one.
    Preferential { m: usize },
}

/// How real-valued ratings become binary adoptions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum AdoptionRule {
    Threshold { tau: f64 },
    TopK { kappa: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_users: usize,
    pub n_items: usize,
    pub vocab_size: usize,
    pub doc_length: usize,
    pub graph: GraphModel,
    /// Precisions of the priors and the rating noise; `hp.k` is the topic count.
    pub hp: Hyperparams,
    /// Dirichlet parameter of item topic proportions.
    pub alpha: f64,
    /// Dirichlet parameter of topic-word distributions.
    pub eta: f64,
    pub adoption: AdoptionRule,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_users: 30,
            n_items: 50,
            vocab_size: 200,
            doc_length: 40,
            graph: GraphModel::ErdosRenyi { p: 0.1 },
            hp: Hyperparams {
                k: 5,
                ..Hyperparams::default()
            },
            alpha: 1.0,
            eta: 0.01,
            adoption: AdoptionRule::Threshold { tau: 0.5 },
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::input(format!("invalid synthetic config: {msg}")));
        if self.n_users == 0 || self.n_items == 0 || self.vocab_size == 0 || self.doc_length == 0 || self.hp.k == 0 {
            return bad("all counts must be positive");
        }
        if !(self.alpha > 0.0 && self.eta > 0.0) {
            return bad("Dirichlet parameters must be positive");
        }
        match self.graph {
            GraphModel::ErdosRenyi { p } if !(0.0..=1.0).contains(&p) => return bad("p must lie in [0, 1]"),
            GraphModel::Preferential { m: 0 } => return bad("m must be at least 1"),
            _ => {}
        }
        match self.adoption {
            AdoptionRule::Threshold { tau } if !(tau > 0.0 && tau < 1.0) => return bad("tau must lie in (0, 1)"),
            AdoptionRule::TopK { kappa: 0 } => return bad("kappa must be at least 1"),
            _ => {}
        }
        self.hp.validate()
    }
}

/// A sampled dataset with its ground truth.
#[derive(Debug, Clone)]
pub struct SynthData {
    pub config: SynthConfig,
    pub raw_items: Vec<RawItem>,
    pub corpus: Corpus,
    pub graph: FollowerGraph,
    pub votes: VoteLog,
    pub truth: LaCtrModel,
    /// Edges that actually carried each vote.
    pub sources: SourceAttribution,
}

impl SynthData {
    pub fn positive_rate(&self) -> f64 {
        self.votes.votes.len() as f64 / (self.corpus.n_items() * self.votes.n_users()) as f64
    }

    /// Writes `items.tsv`, `votes.tsv` and `edges.tsv` in the raw input
    /// formats, the ground truth as `truth.json` and the config as `synth.json`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_items(&dir.join("items.tsv"), &self.raw_items)?;
        let item_ids: Vec<String> = self.raw_items.iter().map(|r| r.item_id.clone()).collect();
        self.votes.write(&dir.join("votes.tsv"), &item_ids)?;
        self.graph.write(&dir.join("edges.tsv"), &self.votes.users)?;
        TrainedModel::LaCtr(self.truth.clone()).save(&dir.join("truth.json"))?;
        let meta = serde_json::to_string_pretty(&self.config)?;
        fs::write(dir.join("synth.json"), meta).map_err(|e| Error::io(dir.join("synth.json"), e))
    }
}

/// Everything drawn before binarization.
struct Latents {
    graph: FollowerGraph,
    edges: AttentionEdgeSet,
    state: ModelState,
    raw_items: Vec<RawItem>,
    corpus: Corpus,
    /// `ratings[e][j]`
    ratings: Vec<Vec<f64>>,
}

fn dirichlet(rng: &mut ChaCha8Rng, alpha: f64, n: usize) -> DVector<f64> {
    let gamma = Gamma::new(alpha, 1.0).unwrap();
    loop {
        let x = DVector::from_fn(n, |_, _| gamma.sample(rng));
        let total = x.sum();
        if total > 0.0 && total.is_finite() {
            return x / total;
        }
    }
}

fn gaussian(rng: &mut ChaCha8Rng, mean: &DVector<f64>, precision: f64) -> DVector<f64> {
    let noise = Normal::new(0.0, precision.recip().sqrt()).unwrap();
    DVector::from_fn(mean.len(), |r, _| mean[r] + noise.sample(rng))
}

fn sample_graph(rng: &mut ChaCha8Rng, n: usize, model: GraphModel) -> FollowerGraph {
    let mut links = Vec::new();
    match model {
        GraphModel::ErdosRenyi { p } => {
            for i in 0..n {
                for l in 0..n {
                    if i != l && rng.random_bool(p) {
                        links.push((i, l));
                    }
                }
            }
        }
        GraphModel::Preferential { m } => {
            let mut followers = vec![0usize; n];
            for i in 1..n {
                let chosen: Vec<usize> = if i <= m {
                    (0..i).collect()
                } else {
                    let weights: Vec<f64> = followers[..i].iter().map(|&f| f as f64 + 1.0).collect();
                    let mut picked = Vec::with_capacity(m);
                    let mut weights = weights;
                    for _ in 0..m {
                        let l = WeightedIndex::new(&weights).unwrap().sample(rng);
                        weights[l] = 0.0;
                        picked.push(l);
                    }
                    picked
                };
                for l in chosen {
                    followers[l] += 1;
                    links.push((i, l));
                }
            }
        }
    }
    FollowerGraph::new(n, links).expect("sampled links are valid")
}

fn sample_latents(cfg: &SynthConfig) -> Latents {
    let hp = &cfg.hp;
    let k = hp.k;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let graph = sample_graph(&mut rng, cfg.n_users, cfg.graph);
    let edges = AttentionEdgeSet::from_edges(
        cfg.n_users,
        graph.pairs().map(|(user, source)| AttentionEdge {
            user,
            source,
            kind: EdgeKind::Followee,
        }),
    )
    .expect("graph edges are valid");

    let beta_rows: Vec<DVector<f64>> = (0..k).map(|_| dirichlet(&mut rng, cfg.eta, cfg.vocab_size)).collect();
    let beta = DMatrix::from_fn(k, cfg.vocab_size, |r, c| beta_rows[r][c]);
    let word_dists: Vec<WeightedIndex<f64>> = beta_rows.iter().map(|r| WeightedIndex::new(r.iter()).unwrap()).collect();
    let words: Vec<String> = (0..cfg.vocab_size).map(|w| format!("w{w}")).collect();

    let mut theta = Vec::with_capacity(cfg.n_items);
    let mut raw_items = Vec::with_capacity(cfg.n_items);
    for j in 0..cfg.n_items {
        let t = dirichlet(&mut rng, cfg.alpha, k);
        let topic = WeightedIndex::new(t.iter()).unwrap();
        let tokens = (0..cfg.doc_length)
            .map(|_| words[word_dists[topic.sample(&mut rng)].sample(&mut rng)].clone())
            .collect();
        theta.push(t);
        raw_items.push(RawItem {
            item_id: format!("i{j}"),
            tokens,
        });
    }
    let v: Vec<DVector<f64>> = theta.iter().map(|t| gaussian(&mut rng, t, hp.lambda_v)).collect();

    let zero = DVector::zeros(k);
    let u: Vec<DVector<f64>> = (0..cfg.n_users).map(|_| gaussian(&mut rng, &zero, hp.lambda_u)).collect();
    let s_noise = Normal::new(0.0, hp.lambda_s.recip().sqrt()).unwrap();
    let s: Vec<f64> = (0..edges.len()).map(|_| s_noise.sample(&mut rng)).collect();
    let phi: Vec<DVector<f64>> = edges
        .edges()
        .iter()
        .enumerate()
        .map(|(e, edge)| gaussian(&mut rng, &(s[e] * &u[edge.user]), hp.phi_confidence(edge.kind) * hp.lambda_phi))
        .collect();

    let r_noise = Normal::new(0.0, hp.a_r.recip().sqrt()).unwrap();
    let ratings = phi
        .iter()
        .map(|p| v.iter().map(|vj| p.dot(vj) + r_noise.sample(&mut rng)).collect())
        .collect();

    let vocab = Vocabulary::new(words).expect("generated words are distinct");
    let docs = raw_items
        .iter()
        .map(|r| Document::from_tokens(r.item_id.as_str(), &r.tokens, &vocab))
        .collect();
    let corpus = Corpus::new(vocab, docs).expect("generated documents are valid");
    Latents {
        graph,
        edges,
        state: ModelState {
            u,
            s,
            phi,
            v,
            theta,
            beta,
        },
        raw_items,
        corpus,
        ratings,
    }
}

/// Items each edge rates positively under the adoption rule.
fn binarize(ratings: &[Vec<f64>], rule: AdoptionRule) -> Vec<Vec<usize>> {
    ratings
        .iter()
        .map(|row| match rule {
            AdoptionRule::Threshold { tau } => (0..row.len()).filter(|&j| row[j] > tau).collect(),
            AdoptionRule::TopK { kappa } => {
                let mut top = crate::linalg::top_indices(row, kappa);
                top.sort_unstable();
                top
            }
        })
        .collect()
}

/// Breadth-first adoption times per item and the sources of each vote.
fn cascade(edges: &AttentionEdgeSet, positives: &[Vec<usize>], n_items: usize) -> (Vec<Vote>, SourceAttribution) {
    let n_users = edges.n_users();
    // listeners[j]: positive friend edges (e) on item j, grouped by source.
    let mut listeners: Vec<BTreeMap<usize, Vec<usize>>> = vec![BTreeMap::new(); n_items];
    let mut seeds: Vec<Vec<usize>> = vec![Vec::new(); n_items];
    for (e, items) in positives.iter().enumerate() {
        let edge = edges.edge(e);
        for &j in items {
            if edge.kind == EdgeKind::SelfLoop {
                seeds[j].push(edge.user);
            } else {
                listeners[j].entry(edge.source).or_default().push(e);
            }
        }
    }
    let mut votes = Vec::new();
    let mut sources = BTreeMap::new();
    let mut time = vec![None::<i64>; n_users];
    for j in 0..n_items {
        time.iter_mut().for_each(|t| *t = None);
        let mut queue = VecDeque::new();
        for &i in &seeds[j] {
            time[i] = Some(0);
            queue.push_back(i);
        }
        while let Some(l) = queue.pop_front() {
            let t = time[l].unwrap();
            for &e in listeners[j].get(&l).map(Vec::as_slice).unwrap_or(&[]) {
                let i = edges.edge(e).user;
                if time[i].is_none() {
                    time[i] = Some(t + 1);
                    queue.push_back(i);
                }
            }
        }
        for i in 0..n_users {
            let Some(t) = time[i] else { continue };
            votes.push(Vote {
                user: i,
                item: j,
                timestamp: Some(t),
            });
            let src = if t == 0 {
                vec![i]
            } else {
                edges
                    .range(i)
                    .filter(|&e| {
                        let l = edges.edge(e).source;
                        l != i && positives[e].binary_search(&j).is_ok() && time[l].is_some_and(|tl| tl < t)
                    })
                    .map(|e| edges.edge(e).source)
                    .collect()
            };
            sources.insert((i, j), src);
        }
    }
    (votes, SourceAttribution { sources })
}

fn assemble(cfg: &SynthConfig, lat: Latents, positives: &[Vec<usize>]) -> SynthData {
    let (votes, sources) = cascade(&lat.edges, positives, cfg.n_items);
    SynthData {
        config: *cfg,
        raw_items: lat.raw_items,
        corpus: lat.corpus,
        graph: lat.graph,
        votes: VoteLog {
            users: (0..cfg.n_users).map(|i| format!("u{i}")).collect(),
            votes,
        },
        truth: LaCtrModel {
            hp: cfg.hp,
            edges: lat.edges,
            state: lat.state,
        },
        sources,
    }
}

/// Samples a dataset. Identical configs give identical data.
pub fn generate(cfg: &SynthConfig) -> Result<SynthData> {
    cfg.validate()?;
    let lat = sample_latents(cfg);
    let positives = binarize(&lat.ratings, cfg.adoption);
    Ok(assemble(cfg, lat, &positives))
}

/// Bisects the threshold `tau` in (0, 1) so that the positive rate (votes
/// per user-item cell) is as close as possible to `target_rate`, and returns
/// the config with that threshold.
pub fn calibrate_threshold(cfg: &SynthConfig, target_rate: f64) -> Result<SynthConfig> {
    let probe = SynthConfig {
        adoption: AdoptionRule::Threshold { tau: 0.5 },
        ..*cfg
    };
    probe.validate()?;
    if !(target_rate > 0.0 && target_rate < 1.0) {
        return Err(Error::input("target rate must lie in (0, 1)"));
    }
    let lat = sample_latents(&probe);
    let cells = (cfg.n_users * cfg.n_items) as f64;
    let rate = |tau: f64| {
        let positives = binarize(&lat.ratings, AdoptionRule::Threshold { tau });
        cascade(&lat.edges, &positives, cfg.n_items).0.len() as f64 / cells
    };
    let (mut lo, mut hi) = (f64::EPSILON, 1.0 - f64::EPSILON);
    let (max_rate, min_rate) = (rate(lo), rate(hi));
    if target_rate < min_rate || target_rate > max_rate {
        return Err(Error::input(format!(
            "target rate {target_rate} is outside the reachable range [{min_rate:.6}, {max_rate:.6}] for thresholds in (0, 1)"
        )));
    }
    let (mut best_tau, mut best_gap) = (lo, f64::INFINITY);
    for _ in 0..50 {
        let mid = 0.5 * (lo + hi);
        let r = rate(mid);
        if (r - target_rate).abs() < best_gap {
            best_gap = (r - target_rate).abs();
            best_tau = mid;
        }
        if r > target_rate {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(SynthConfig {
        adoption: AdoptionRule::Threshold { tau: best_tau },
        ..*cfg
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::social::{attribute_sources, AttributionRule};
    use proptest::prelude::*;

    fn small(seed: u64) -> SynthConfig {
        SynthConfig {
            n_users: 12,
            n_items: 15,
            vocab_size: 30,
            doc_length: 10,
            graph: GraphModel::ErdosRenyi { p: 0.3 },
            hp: Hyperparams {
                k: 3,
                lambda_u: 1.0,
                lambda_s: 1.0,
                lambda_v: 10.0,
                a_r: 25.0,
                ..Hyperparams::default()
            },
            seed,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn same_seed_same_data() {
        let a = generate(&small(3)).unwrap();
        let b = generate(&small(3)).unwrap();
        assert_eq!(a.votes, b.votes);
        assert_eq!(a.truth, b.truth);
        assert_eq!(a.corpus, b.corpus);
        let c = generate(&small(4)).unwrap();
        assert_ne!(a.truth, c.truth);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        for cfg in [
            SynthConfig { n_users: 0, ..small(0) },
            SynthConfig {
                adoption: AdoptionRule::Threshold { tau: 1.0 },
                ..small(0)
            },
            SynthConfig {
                adoption: AdoptionRule::TopK { kappa: 0 },
                ..small(0)
            },
            SynthConfig {
                graph: GraphModel::ErdosRenyi { p: 1.5 },
                ..small(0)
            },
        ] {
            assert!(generate(&cfg).is_err());
        }
    }

    #[test]
    fn huge_attention_precision_pins_phi_to_its_mean() {
        let cfg = SynthConfig {
            hp: Hyperparams {
                lambda_u: 0.01,
                lambda_s: 0.01,
                lambda_phi: 1e6,
                ..small(0).hp
            },
            ..small(5)
        };
        let d = generate(&cfg).unwrap();
        let st = &d.truth.state;
        for (e, edge) in d.truth.edges.edges().iter().enumerate() {
            let mean = st.s[e] * &st.u[edge.user];
            let rel = (&st.phi[e] - &mean).norm() / mean.norm();
            assert!(rel < 0.01, "edge {e}: {rel}");
        }
    }

    #[test]
    fn threshold_above_every_rating_gives_no_votes() {
        let cfg = SynthConfig {
            hp: Hyperparams {
                lambda_u: 1e4,
                lambda_s: 1e4,
                lambda_phi: 1e4,
                a_r: 1e6,
                ..small(0).hp
            },
            adoption: AdoptionRule::Threshold { tau: 0.99 },
            ..small(1)
        };
        let d = generate(&cfg).unwrap();
        assert!(d.votes.votes.is_empty());
    }

    #[test]
    fn top_k_rule_gives_every_self_edge_kappa_votes() {
        let cfg = SynthConfig {
            adoption: AdoptionRule::TopK { kappa: 2 },
            ..small(2)
        };
        let d = generate(&cfg).unwrap();
        for i in 0..cfg.n_users {
            let seeded = d.votes.votes.iter().filter(|v| v.user == i && v.timestamp == Some(0)).count();
            assert_eq!(seeded, 2);
        }
    }

    #[test]
    fn threshold_calibrates_to_digg_sparsity() {
        let cfg = SynthConfig {
            n_users: 60,
            n_items: 400,
            graph: GraphModel::ErdosRenyi { p: 0.05 },
            hp: Hyperparams {
                lambda_u: 4.0,
                lambda_s: 4.0,
                lambda_phi: 16.0,
                a_r: 400.0,
                ..small(0).hp
            },
            ..small(8)
        };
        let tuned = calibrate_threshold(&cfg, 0.0073).unwrap();
        let rate = generate(&tuned).unwrap().positive_rate();
        assert!((rate - 0.0073).abs() < 0.0015, "{rate}");
    }

    #[test]
    fn unreachable_rate_is_reported() {
        let cfg = SynthConfig {
            hp: Hyperparams { a_r: 0.02, b_r: 0.01, ..small(0).hp },
            ..small(2)
        };
        let err = calibrate_threshold(&cfg, 1e-4).unwrap_err();
        assert!(err.to_string().contains("reachable range"), "{err}");
    }

    fn moments(xs: &[f64], variance: f64) {
        let n = xs.len() as f64;
        assert!(n >= 1e4, "only {n} samples");
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!(mean.abs() < 3.0 * (variance / n).sqrt(), "mean {mean}");
        assert!((var - variance).abs() < 3.0 * variance * (2.0 / (n - 1.0)).sqrt(), "var {var} vs {variance}");
    }

    #[test]
    fn sampled_latents_match_their_priors() {
        let hp = Hyperparams {
            k: 4,
            lambda_u: 2.0,
            lambda_s: 0.5,
            lambda_phi: 3.0,
            lambda_v: 8.0,
            ..Hyperparams::default()
        };
        let users = generate(&SynthConfig {
            n_users: 2600,
            n_items: 3,
            vocab_size: 10,
            doc_length: 2,
            graph: GraphModel::ErdosRenyi { p: 0.004 },
            hp,
            ..SynthConfig::default()
        })
        .unwrap();
        let st = &users.truth.state;
        moments(&st.u.iter().flat_map(|u| u.iter().copied()).collect::<Vec<_>>(), 0.5);
        assert!(st.s.len() >= 10_000);
        moments(&st.s, 2.0);
        let mut resid = Vec::new();
        for (e, edge) in users.truth.edges.edges().iter().enumerate() {
            resid.extend((&st.phi[e] - st.s[e] * &st.u[edge.user]).iter().copied());
        }
        moments(&resid, 1.0 / 3.0);

        let items = generate(&SynthConfig {
            n_users: 2,
            n_items: 2600,
            vocab_size: 10,
            doc_length: 2,
            hp,
            ..SynthConfig::default()
        })
        .unwrap();
        let st = &items.truth.state;
        let eps: Vec<f64> = st.v.iter().zip(&st.theta).flat_map(|(v, t)| (v - t).iter().copied().collect::<Vec<_>>()).collect();
        moments(&eps, 1.0 / 8.0);
        // Dirichlet(1) over 4 topics: each coordinate has variance 3/80.
        let centred: Vec<f64> = st.theta.iter().flat_map(|t| t.iter().map(|x| x - 0.25).collect::<Vec<_>>()).collect();
        moments(&centred, 3.0 / 80.0);
    }

    #[test]
    fn files_round_trip_through_the_raw_readers() {
        let d = generate(&small(6)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        d.save(dir.path()).unwrap();
        let items = crate::corpus::read_items(&dir.path().join("items.tsv")).unwrap();
        assert_eq!(items, d.raw_items);
        let TrainedModel::LaCtr(truth) = TrainedModel::load(&dir.path().join("truth.json")).unwrap() else {
            panic!("wrong kind");
        };
        assert_eq!(truth, d.truth);
        let meta: SynthConfig = serde_json::from_str(&fs::read_to_string(dir.path().join("synth.json")).unwrap()).unwrap();
        assert_eq!(meta, d.config);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn attribution_recovers_the_true_sources(seed in any::<u64>(), kappa in 1usize..4) {
            let cfg = SynthConfig { adoption: AdoptionRule::TopK { kappa }, ..small(seed) };
            let d = generate(&cfg).unwrap();
            let attr = attribute_sources(&d.votes, &d.truth.edges, AttributionRule::AllCandidates).unwrap();
            prop_assert_eq!(attr.len(), d.sources.len());
            for (&(i, j), truth) in &d.sources.sources {
                let cands = attr.get(i, j).unwrap();
                prop_assert!(!truth.is_empty());
                for l in truth {
                    prop_assert!(cands.contains(l), "vote ({}, {}) true source {} not in {:?}", i, j, l, cands);
                }
            }
        }
    }
}
