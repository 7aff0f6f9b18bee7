//! Prepared dataset directories and the preprocessing pipeline that builds them.
//!
//! A prepared directory holds `vocab.txt`, `bow.txt`, `users.txt`,
//! `votes.tsv` and `edges.tsv`, plus the `attribution.tsv` and `stats.txt`
//! reports written by [`prepare`].

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{build_vocabulary, filter_activity, read_items, Corpus, Document, Vocabulary};
use crate::error::{Error, Result};
use crate::social::{
    attribute_sources, build_attention_edges, read_edges, AttributionRule, FollowerGraph, SourceAttribution, VoteLog,
};

pub const VOCAB_FILE: &str = "vocab.txt";
pub const BOW_FILE: &str = "bow.txt";
pub const USERS_FILE: &str = "users.txt";
pub const VOTES_FILE: &str = "votes.tsv";
pub const EDGES_FILE: &str = "edges.tsv";
pub const ATTRIBUTION_FILE: &str = "attribution.tsv";
pub const STATS_FILE: &str = "stats.txt";

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub corpus: Corpus,
    pub votes: VoteLog,
    pub graph: FollowerGraph,
}

impl Dataset {
    pub fn new(corpus: Corpus, votes: VoteLog, graph: FollowerGraph) -> Result<Self> {
        if graph.n_users() != votes.n_users() {
            return Err(Error::input("follower graph and vote log disagree on the user count"));
        }
        if let Some(v) = votes.votes.iter().find(|v| v.item >= corpus.n_items() || v.user >= votes.n_users()) {
            return Err(Error::input(format!("vote ({}, {}) out of range", v.user, v.item)));
        }
        Ok(Self { corpus, votes, graph })
    }

    pub fn n_users(&self) -> usize {
        self.votes.n_users()
    }

    pub fn n_items(&self) -> usize {
        self.corpus.n_items()
    }

    pub fn item_ids(&self) -> Vec<String> {
        self.corpus.documents.iter().map(|d| d.item_id.clone()).collect()
    }

    pub fn stats(&self) -> DatasetStats {
        let cells = (self.n_users() * self.n_items()) as f64;
        DatasetStats {
            users: self.n_users(),
            items: self.n_items(),
            votes: self.votes.votes.len(),
            vocabulary: self.corpus.vocab_size(),
            follower_links: self.graph.n_edges(),
            positive_rate: if cells > 0.0 { self.votes.votes.len() as f64 / cells } else { 0.0 },
        }
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.corpus.vocabulary.write(&dir.join(VOCAB_FILE))?;
        self.corpus.write_bow(&dir.join(BOW_FILE))?;
        let mut users = self.votes.users.join("\n");
        if !users.is_empty() {
            users.push('\n');
        }
        fs::write(dir.join(USERS_FILE), users).map_err(|e| Error::io(dir.join(USERS_FILE), e))?;
        self.votes.write(&dir.join(VOTES_FILE), &self.item_ids())?;
        self.graph.write(&dir.join(EDGES_FILE), &self.votes.users)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let vocab = Vocabulary::read(&dir.join(VOCAB_FILE))?;
        let corpus = Corpus::read_bow(&dir.join(BOW_FILE), vocab)?;
        let users_path = dir.join(USERS_FILE);
        let users: Vec<String> = fs::read_to_string(&users_path)
            .map_err(|e| Error::io(&users_path, e))?
            .lines()
            .map(str::to_string)
            .collect();
        let user_index: HashMap<&str, usize> = users.iter().enumerate().map(|(i, u)| (u.as_str(), i)).collect();
        if user_index.len() != users.len() {
            return Err(Error::input(format!("{}: duplicate user ids", users_path.display())));
        }
        let (raw, unknown) = VoteLog::read(&dir.join(VOTES_FILE), &corpus.item_index())?;
        if unknown > 0 {
            return Err(Error::input(format!("{unknown} votes reference unknown items")));
        }
        let mut votes = Vec::with_capacity(raw.votes.len());
        for v in raw.votes {
            let name = &raw.users[v.user];
            let user = *user_index
                .get(name.as_str())
                .ok_or_else(|| Error::input(format!("vote by unknown user {name:?}")))?;
            votes.push(crate::social::Vote { user, ..v });
        }
        let votes = VoteLog {
            users: users.clone(),
            votes,
        };
        let pairs = read_edges(&dir.join(EDGES_FILE))?;
        let graph = FollowerGraph::from_named(&user_index, &pairs);
        Dataset::new(corpus, votes, graph)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub users: usize,
    pub items: usize,
    pub votes: usize,
    pub vocabulary: usize,
    pub follower_links: usize,
    /// Votes divided by the number of user-item cells.
    pub positive_rate: f64,
}

/// Preprocessing thresholds. Defaults follow the Digg preparation: a 3000-word
/// tf-idf vocabulary, users with at least 10 votes, items with more than 10 words.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrepConfig {
    pub top_m: usize,
    pub min_votes: usize,
    pub min_words: usize,
    pub neg_samples: usize,
    pub attribution: AttributionRule,
    pub seed: u64,
}

impl Default for PrepConfig {
    fn default() -> Self {
        Self {
            top_m: 3000,
            min_votes: 10,
            min_words: 10,
            neg_samples: 5,
            attribution: AttributionRule::AllCandidates,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Prepared {
    pub dataset: Dataset,
    pub attribution: SourceAttribution,
    pub stats: DatasetStats,
    pub raw_items: usize,
    pub raw_votes: usize,
    pub skipped_votes: usize,
    pub exogenous_fraction: f64,
}

impl Prepared {
    pub fn report(&self) -> String {
        let s = &self.stats;
        let mut out = String::new();
        writeln!(out, "raw_items\t{}", self.raw_items).unwrap();
        writeln!(out, "raw_votes\t{}", self.raw_votes).unwrap();
        writeln!(out, "skipped_votes_unknown_item\t{}", self.skipped_votes).unwrap();
        writeln!(out, "users\t{}", s.users).unwrap();
        writeln!(out, "items\t{}", s.items).unwrap();
        writeln!(out, "votes\t{}", s.votes).unwrap();
        writeln!(out, "vocabulary\t{}", s.vocabulary).unwrap();
        writeln!(out, "follower_links\t{}", s.follower_links).unwrap();
        writeln!(out, "positive_rate\t{:.6}", s.positive_rate).unwrap();
        writeln!(out, "exogenous_fraction\t{:.6}", self.exogenous_fraction).unwrap();
        out
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        self.dataset.save(dir)?;
        let d = &self.dataset;
        self.attribution
            .write(&dir.join(ATTRIBUTION_FILE), &d.votes.users, &d.item_ids())?;
        fs::write(dir.join(STATS_FILE), self.report()).map_err(|e| Error::io(dir.join(STATS_FILE), e))
    }
}

/// Vocabulary, activity filters and source attribution, from raw files.
pub fn prepare(items_path: &Path, votes_path: &Path, edges_path: &Path, cfg: &PrepConfig) -> Result<Prepared> {
    let raw = read_items(items_path)?;
    if raw.is_empty() {
        return Err(Error::input(format!("{}: no items", items_path.display())));
    }
    let token_docs: Vec<Vec<String>> = raw.iter().map(|r| r.tokens.clone()).collect();
    let vocab = build_vocabulary(&token_docs, cfg.top_m)?;
    let docs = raw
        .iter()
        .map(|r| Document::from_tokens(r.item_id.as_str(), &r.tokens, &vocab))
        .collect();
    let corpus = Corpus::new(vocab, docs)?;

    let (votes, skipped) = VoteLog::read(votes_path, &corpus.item_index())?;
    if votes.votes.is_empty() {
        return Err(Error::input(format!("{}: no votes", votes_path.display())));
    }
    let raw_votes = votes.votes.len();
    let pairs = read_edges(edges_path)?;

    let (corpus, votes) = filter_activity(&corpus, &votes, cfg.min_votes, cfg.min_words);
    let graph = FollowerGraph::from_named(&votes.user_index(), &pairs);
    let edges = build_attention_edges(&graph, cfg.neg_samples, cfg.seed);
    let attribution = attribute_sources(&votes, &edges, cfg.attribution)?;
    let dataset = Dataset::new(corpus, votes, graph)?;
    Ok(Prepared {
        stats: dataset.stats(),
        exogenous_fraction: attribution.exogenous_fraction(),
        attribution,
        dataset,
        raw_items: raw.len(),
        raw_votes,
        skipped_votes: skipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.join(name);
        fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn prepare_then_reload() {
        let dir = tempfile::tempdir().unwrap();
        let items = write(dir.path(), "items.tsv", "s1\tgame score team win\ns2\tvote law senate\ns3\tgame team\n");
        let votes = write(dir.path(), "votes.tsv", "a\ts1\t1\nb\ts1\t2\nb\ts2\t3\nc\ts3\t4\na\ts3\t5\n");
        let edges = write(dir.path(), "edges.tsv", "b\ta\na\tc\nzz\ta\n");
        let cfg = PrepConfig {
            min_votes: 0,
            min_words: 0,
            neg_samples: 1,
            ..PrepConfig::default()
        };
        let prep = prepare(&items, &votes, &edges, &cfg).unwrap();
        assert_eq!(prep.stats.users, 3);
        assert_eq!(prep.stats.votes, 5);
        assert_eq!(prep.stats.follower_links, 2);
        assert!((prep.stats.positive_rate - 5.0 / 9.0).abs() < 1e-12);
        let b = prep.dataset.votes.users.iter().position(|u| u == "b").unwrap();
        assert_eq!(prep.attribution.get(b, 0), Some(&[0][..]));

        let out = dir.path().join("prepared");
        prep.save(&out).unwrap();
        let back = Dataset::load(&out).unwrap();
        assert_eq!(back, prep.dataset);
        assert!(fs::read_to_string(out.join(STATS_FILE)).unwrap().contains("positive_rate\t0.555556"));
    }

    #[test]
    fn empty_votes_file_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let items = write(dir.path(), "items.tsv", "s1\ta b\n");
        let votes = write(dir.path(), "votes.tsv", "");
        let edges = write(dir.path(), "edges.tsv", "");
        let err = prepare(&items, &votes, &edges, &PrepConfig::default()).unwrap_err();
        assert!(err.to_string().contains("no votes"), "{err}");
    }
}
