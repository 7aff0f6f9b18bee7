//! Follower graph, attention edges and source attribution of votes.
//!
//! Attention is only materialized on a sparse edge set: every user attends
//! to themselves (exogenous discovery), to everyone they follow, and to a
//! few uniformly sampled non-followees that act as low-confidence negatives.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::io::Write;
use std::ops::Range;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Vote {
    pub user: usize,
    pub item: usize,
    pub timestamp: Option<i64>,
}

/// Adoption events. `users` holds the external user ids, indexed by `Vote::user`;
/// `Vote::item` indexes the documents of the accompanying corpus.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct VoteLog {
    pub users: Vec<String>,
    pub votes: Vec<Vote>,
}

impl VoteLog {
    pub fn n_users(&self) -> usize {
        self.users.len()
    }

    pub fn user_index(&self) -> HashMap<&str, usize> {
        self.users.iter().enumerate().map(|(i, u)| (u.as_str(), i)).collect()
    }

    /// Keeps one vote per (user, item), the earliest one.
    pub fn dedup(&mut self) {
        let mut best: HashMap<(usize, usize), usize> = HashMap::new();
        for (n, v) in self.votes.iter().enumerate() {
            best.entry((v.user, v.item))
                .and_modify(|m| {
                    if earlier(v.timestamp, self.votes[*m].timestamp) {
                        *m = n;
                    }
                })
                .or_insert(n);
        }
        let mut keep: Vec<usize> = best.into_values().collect();
        keep.sort_unstable();
        self.votes = keep.into_iter().map(|n| self.votes[n]).collect();
    }

    /// Reads `<user_id>\t<item_id>[\t<timestamp>]` lines. Users are indexed in
    /// order of first appearance. Votes on unknown items are skipped and counted.
    pub fn read(path: &Path, items: &HashMap<&str, usize>) -> Result<(VoteLog, usize)> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut log = VoteLog::default();
        let mut index: HashMap<String, usize> = HashMap::new();
        let mut unknown = 0;
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').map(str::trim).collect();
            if fields.len() < 2 || fields.len() > 3 || fields[0].is_empty() || fields[1].is_empty() {
                return Err(Error::Parse {
                    path: path.into(),
                    line: n + 1,
                    message: "expected <user_id>\\t<item_id>\\t<timestamp>".into(),
                });
            }
            let timestamp = match fields.get(2) {
                Some(t) if !t.is_empty() => Some(t.parse::<i64>().map_err(|_| Error::Parse {
                    path: path.into(),
                    line: n + 1,
                    message: format!("timestamp {t:?} is not an integer"),
                })?),
                _ => None,
            };
            let Some(&item) = items.get(fields[1]) else {
                unknown += 1;
                continue;
            };
            let next = index.len();
            let user = *index.entry(fields[0].to_string()).or_insert(next);
            if user == log.users.len() {
                log.users.push(fields[0].to_string());
            }
            log.votes.push(Vote { user, item, timestamp });
        }
        log.dedup();
        Ok((log, unknown))
    }

    pub fn write(&self, path: &Path, item_ids: &[String]) -> Result<()> {
        let mut out = Vec::new();
        for v in &self.votes {
            match v.timestamp {
                Some(t) => writeln!(out, "{}\t{}\t{}", self.users[v.user], item_ids[v.item], t),
                None => writeln!(out, "{}\t{}", self.users[v.user], item_ids[v.item]),
            }
            .unwrap();
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

fn earlier(a: Option<i64>, b: Option<i64>) -> bool {
    match (a, b) {
        (Some(a), Some(b)) => a < b,
        (Some(_), None) => true,
        _ => false,
    }
}

/// Directed follower graph: `followees[i]` are the users `i` follows.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FollowerGraph {
    followees: Vec<Vec<usize>>,
}

impl FollowerGraph {
    pub fn new(n_users: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut followees = vec![Vec::new(); n_users];
        for (i, l) in edges {
            if i >= n_users || l >= n_users {
                return Err(Error::input(format!("edge ({i}, {l}) outside {n_users} users")));
            }
            if i == l {
                return Err(Error::input(format!("self-loop on user {i}")));
            }
            followees[i].push(l);
        }
        for f in &mut followees {
            f.sort_unstable();
            f.dedup();
        }
        Ok(Self { followees })
    }

    /// Builds the graph from named `(follower, followee)` pairs, dropping pairs
    /// with unknown endpoints and self-loops.
    pub fn from_named(users: &HashMap<&str, usize>, pairs: &[(String, String)]) -> Self {
        let mut followees = vec![Vec::new(); users.len()];
        for (a, b) in pairs {
            if let (Some(&i), Some(&l)) = (users.get(a.as_str()), users.get(b.as_str())) {
                if i != l {
                    followees[i].push(l);
                }
            }
        }
        for f in &mut followees {
            f.sort_unstable();
            f.dedup();
        }
        Self { followees }
    }

    pub fn n_users(&self) -> usize {
        self.followees.len()
    }

    pub fn followees(&self, i: usize) -> &[usize] {
        &self.followees[i]
    }

    pub fn follows(&self, i: usize, l: usize) -> bool {
        self.followees[i].binary_search(&l).is_ok()
    }

    pub fn n_edges(&self) -> usize {
        self.followees.iter().map(Vec::len).sum()
    }

    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.followees
            .iter()
            .enumerate()
            .flat_map(|(i, f)| f.iter().map(move |&l| (i, l)))
    }

    pub fn write(&self, path: &Path, users: &[String]) -> Result<()> {
        let mut out = Vec::new();
        for (i, l) in self.pairs() {
            writeln!(out, "{}\t{}", users[i], users[l]).unwrap();
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

/// Reads `<follower_id>\t<followee_id>` lines.
pub fn read_edges(path: &Path) -> Result<Vec<(String, String)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut pairs = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match line.split('\t').map(str::trim).collect::<Vec<_>>().as_slice() {
            [a, b] if !a.is_empty() && !b.is_empty() => pairs.push((a.to_string(), b.to_string())),
            _ => {
                return Err(Error::Parse {
                    path: path.into(),
                    line: n + 1,
                    message: "expected <follower_id>\\t<followee_id>".into(),
                })
            }
        }
    }
    Ok(pairs)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeKind {
    /// The mandatory `(i, i)` edge.
    SelfLoop,
    Followee,
    /// A sampled non-followee.
    Sampled,
}

impl EdgeKind {
    /// Friends and the self-edge get the high attention confidence.
    pub fn is_friend(self) -> bool {
        !matches!(self, EdgeKind::Sampled)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttentionEdge {
    pub user: usize,
    pub source: usize,
    pub kind: EdgeKind,
}

/// Per-user attention edges in CSR layout, sorted by `(user, source)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttentionEdgeSet {
    offsets: Vec<usize>,
    edges: Vec<AttentionEdge>,
}

impl AttentionEdgeSet {
    /// Assembles an edge set from arbitrary edges; adds any missing self-edges.
    pub fn from_edges(n_users: usize, edges: impl IntoIterator<Item = AttentionEdge>) -> Result<Self> {
        let mut per_user: Vec<BTreeMap<usize, EdgeKind>> = vec![BTreeMap::new(); n_users];
        for e in edges {
            if e.user >= n_users || e.source >= n_users {
                return Err(Error::input(format!("attention edge ({}, {}) outside {n_users} users", e.user, e.source)));
            }
            let kind = if e.user == e.source { EdgeKind::SelfLoop } else { e.kind };
            if kind == EdgeKind::SelfLoop && e.user != e.source {
                return Err(Error::input("self-loop kind on a non-self edge"));
            }
            per_user[e.user].insert(e.source, kind);
        }
        let mut offsets = Vec::with_capacity(n_users + 1);
        let mut flat = Vec::new();
        offsets.push(0);
        for (i, mut m) in per_user.into_iter().enumerate() {
            m.insert(i, EdgeKind::SelfLoop);
            flat.extend(m.into_iter().map(|(source, kind)| AttentionEdge { user: i, source, kind }));
            offsets.push(flat.len());
        }
        Ok(Self { offsets, edges: flat })
    }

    pub fn n_users(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn edges(&self) -> &[AttentionEdge] {
        &self.edges
    }

    pub fn edge(&self, e: usize) -> AttentionEdge {
        self.edges[e]
    }

    /// Global indices of the edges of user `i`.
    pub fn range(&self, i: usize) -> Range<usize> {
        self.offsets[i]..self.offsets[i + 1]
    }

    pub fn of_user(&self, i: usize) -> &[AttentionEdge] {
        &self.edges[self.range(i)]
    }

    pub fn find(&self, i: usize, l: usize) -> Option<usize> {
        let r = self.range(i);
        self.edges[r.clone()]
            .binary_search_by_key(&l, |e| e.source)
            .ok()
            .map(|p| r.start + p)
    }

    pub fn self_edge(&self, i: usize) -> usize {
        self.find(i, i).expect("every user has a self edge")
    }
}

/// `A(i) = followees(i) + {i} + neg_samples uniformly drawn non-followees`.
pub fn build_attention_edges(graph: &FollowerGraph, neg_samples: usize, seed: u64) -> AttentionEdgeSet {
    let n = graph.n_users();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::new();
    for i in 0..n {
        edges.push(AttentionEdge {
            user: i,
            source: i,
            kind: EdgeKind::SelfLoop,
        });
        for &l in graph.followees(i) {
            edges.push(AttentionEdge {
                user: i,
                source: l,
                kind: EdgeKind::Followee,
            });
        }
        let available = n - 1 - graph.followees(i).len();
        let take = neg_samples.min(available);
        if take == 0 {
            continue;
        }
        let excluded = |l: usize| l == i || graph.follows(i, l);
        let picked: Vec<usize> = if available <= 2 * take {
            let pool: Vec<usize> = (0..n).filter(|&l| !excluded(l)).collect();
            rand::seq::index::sample(&mut rng, pool.len(), take)
                .into_iter()
                .map(|p| pool[p])
                .collect()
        } else {
            let mut chosen = HashSet::with_capacity(take);
            let mut order = Vec::with_capacity(take);
            while order.len() < take {
                let l = rng.random_range(0..n);
                if !excluded(l) && chosen.insert(l) {
                    order.push(l);
                }
            }
            order
        };
        edges.extend(picked.into_iter().map(|l| AttentionEdge {
            user: i,
            source: l,
            kind: EdgeKind::Sampled,
        }));
    }
    AttentionEdgeSet::from_edges(n, edges).expect("edges are in range by construction")
}

/// How a vote is grounded on attention edges.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttributionRule {
    /// Every edge whose source voted strictly earlier.
    #[default]
    AllCandidates,
    /// Only the earliest such source (smallest id on ties).
    Earliest,
}

/// Candidate sources for each positive `(user, item)` pair.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SourceAttribution {
    pub sources: BTreeMap<(usize, usize), Vec<usize>>,
}

impl SourceAttribution {
    pub fn get(&self, user: usize, item: usize) -> Option<&[usize]> {
        self.sources.get(&(user, item)).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.sources.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sources.is_empty()
    }

    /// Fraction of votes attributed only to the self edge.
    pub fn exogenous_fraction(&self) -> f64 {
        if self.sources.is_empty() {
            return 0.0;
        }
        let n = self
            .sources
            .iter()
            .filter(|((i, _), s)| s.len() == 1 && s[0] == *i)
            .count();
        n as f64 / self.sources.len() as f64
    }

    pub fn write(&self, path: &Path, users: &[String], item_ids: &[String]) -> Result<()> {
        let mut out = Vec::new();
        for ((i, j), src) in &self.sources {
            let names: Vec<&str> = src.iter().map(|&l| users[l].as_str()).collect();
            writeln!(out, "{}\t{}\t{}", users[*i], item_ids[*j], names.join(" ")).unwrap();
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

/// Candidates for `(i, j)` are the `l` in `A(i)` that voted for `j` strictly
/// before `i`; a vote with no such `l` is attributed to the self edge.
pub fn attribute_sources(votes: &VoteLog, edges: &AttentionEdgeSet, rule: AttributionRule) -> Result<SourceAttribution> {
    let mut first: HashMap<(usize, usize), i64> = HashMap::new();
    for v in &votes.votes {
        let t = v.timestamp.ok_or_else(|| {
            Error::input(format!(
                "vote of user {:?} on item {} has no timestamp",
                votes.users.get(v.user).map(String::as_str).unwrap_or("?"),
                v.item
            ))
        })?;
        if v.user >= edges.n_users() {
            return Err(Error::input(format!("vote user {} outside the attention graph", v.user)));
        }
        first.entry((v.user, v.item)).and_modify(|x| *x = (*x).min(t)).or_insert(t);
    }
    let mut sources = BTreeMap::new();
    for (&(i, j), &t) in &first {
        let mut cands: Vec<(i64, usize)> = edges
            .of_user(i)
            .iter()
            .filter(|e| e.source != i)
            .filter_map(|e| first.get(&(e.source, j)).filter(|&&tl| tl < t).map(|&tl| (tl, e.source)))
            .collect();
        let chosen = if cands.is_empty() {
            vec![i]
        } else {
            match rule {
                AttributionRule::AllCandidates => {
                    let mut ls: Vec<usize> = cands.into_iter().map(|c| c.1).collect();
                    ls.sort_unstable();
                    ls
                }
                AttributionRule::Earliest => {
                    cands.sort_unstable();
                    vec![cands[0].1]
                }
            }
        };
        sources.insert((i, j), chosen);
    }
    Ok(SourceAttribution { sources })
}
