//! Item text: vocabulary selection, bag-of-words documents and activity filters.
//!
//! Text arrives pre-tokenized, one item per line. The vocabulary keeps the
//! `top_m` tokens by corpus-level tf-idf, `tf(w) * ln(D / df(w))`, with ties
//! broken by lexicographic token order. Word ids follow that ranking.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::social::VoteLog;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    words: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    pub fn new(words: Vec<String>) -> Result<Self> {
        if words.is_empty() {
            return Err(Error::input("vocabulary is empty"));
        }
        let mut index = HashMap::with_capacity(words.len());
        for (id, w) in words.iter().enumerate() {
            if index.insert(w.clone(), id).is_some() {
                return Err(Error::input(format!("duplicate vocabulary token {w:?}")));
            }
        }
        Ok(Self { words, index })
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn word(&self, id: usize) -> &str {
        &self.words[id]
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let words: Vec<String> = text.lines().map(|l| l.trim().to_string()).collect();
        if let Some(pos) = words.iter().position(|w| w.is_empty()) {
            return Err(Error::Parse {
                path: path.into(),
                line: pos + 1,
                message: "empty token".into(),
            });
        }
        Self::new(words)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        for w in &self.words {
            out.push_str(w);
            out.push('\n');
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

/// A bag of words. `counts` is sorted by word id and every count is positive.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub item_id: String,
    pub counts: Vec<(usize, u32)>,
    pub length: u32,
}

impl Document {
    pub fn from_counts(item_id: impl Into<String>, counts: BTreeMap<usize, u32>) -> Self {
        let counts: Vec<(usize, u32)> = counts.into_iter().filter(|&(_, c)| c > 0).collect();
        let length = counts.iter().map(|&(_, c)| c).sum();
        Self {
            item_id: item_id.into(),
            counts,
            length,
        }
    }

    pub fn from_tokens<S: AsRef<str>>(item_id: impl Into<String>, tokens: &[S], vocab: &Vocabulary) -> Self {
        let mut counts = BTreeMap::new();
        for t in tokens {
            if let Some(id) = vocab.id(t.as_ref()) {
                *counts.entry(id).or_insert(0u32) += 1;
            }
        }
        Self::from_counts(item_id, counts)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub vocabulary: Vocabulary,
    pub documents: Vec<Document>,
}

impl Corpus {
    pub fn new(vocabulary: Vocabulary, documents: Vec<Document>) -> Result<Self> {
        let m = vocabulary.len();
        let mut seen = HashSet::with_capacity(documents.len());
        for doc in &documents {
            if !seen.insert(doc.item_id.as_str()) {
                return Err(Error::input(format!("duplicate item id {:?}", doc.item_id)));
            }
            if let Some(&(w, _)) = doc.counts.iter().find(|&&(w, _)| w >= m) {
                return Err(Error::input(format!(
                    "item {:?} references word id {w} outside vocabulary of size {m}",
                    doc.item_id
                )));
            }
            if doc.counts.iter().any(|&(_, c)| c == 0) {
                return Err(Error::input(format!("item {:?} has a zero count", doc.item_id)));
            }
        }
        Ok(Self { vocabulary, documents })
    }

    pub fn n_items(&self) -> usize {
        self.documents.len()
    }

    pub fn vocab_size(&self) -> usize {
        self.vocabulary.len()
    }

    pub fn item_index(&self) -> HashMap<&str, usize> {
        self.documents
            .iter()
            .enumerate()
            .map(|(j, d)| (d.item_id.as_str(), j))
            .collect()
    }

    /// Writes `<item_id>\t<word_id>:<count> ...` lines.
    pub fn write_bow(&self, path: &Path) -> Result<()> {
        let mut out = Vec::new();
        for doc in &self.documents {
            write!(out, "{}\t", doc.item_id).unwrap();
            let parts: Vec<String> = doc.counts.iter().map(|(w, c)| format!("{w}:{c}")).collect();
            writeln!(out, "{}", parts.join(" ")).unwrap();
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn read_bow(path: &Path, vocabulary: Vocabulary) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let parse_err = |line: usize, message: String| Error::Parse {
            path: path.into(),
            line,
            message,
        };
        let mut documents = Vec::new();
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let (id, rest) = line
                .split_once('\t')
                .ok_or_else(|| parse_err(n + 1, "expected <item_id>\\t<word_id>:<count> ...".into()))?;
            let mut counts = BTreeMap::new();
            for pair in rest.split_whitespace() {
                let (w, c) = pair
                    .split_once(':')
                    .ok_or_else(|| parse_err(n + 1, format!("bad entry {pair:?}")))?;
                let w: usize = w.parse().map_err(|_| parse_err(n + 1, format!("bad word id {w:?}")))?;
                let c: u32 = c.parse().map_err(|_| parse_err(n + 1, format!("bad count {c:?}")))?;
                if c == 0 {
                    return Err(parse_err(n + 1, "counts must be positive".into()));
                }
                if w >= vocabulary.len() {
                    return Err(parse_err(n + 1, format!("word id {w} outside vocabulary")));
                }
                *counts.entry(w).or_insert(0) += c;
            }
            documents.push(Document::from_counts(id, counts));
        }
        Corpus::new(vocabulary, documents)
    }
}

/// Raw tokenized item text as read from an items file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawItem {
    pub item_id: String,
    pub tokens: Vec<String>,
}

/// Parses `<item_id>\t<token> <token> ...` lines.
pub fn read_items(path: &Path) -> Result<Vec<RawItem>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut items = Vec::new();
    let mut seen = HashSet::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (id, rest) = line.split_once('\t').ok_or_else(|| Error::Parse {
            path: path.into(),
            line: n + 1,
            message: "expected <item_id>\\t<tokens>".into(),
        })?;
        let id = id.trim();
        if id.is_empty() || !seen.insert(id.to_string()) {
            return Err(Error::Parse {
                path: path.into(),
                line: n + 1,
                message: format!("empty or duplicate item id {id:?}"),
            });
        }
        items.push(RawItem {
            item_id: id.to_string(),
            tokens: rest.split_whitespace().map(str::to_string).collect(),
        });
    }
    Ok(items)
}

pub fn write_items(path: &Path, items: &[RawItem]) -> Result<()> {
    let mut out = Vec::new();
    for item in items {
        writeln!(out, "{}\t{}", item.item_id, item.tokens.join(" ")).unwrap();
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Corpus-level tf-idf score of every distinct token.
pub fn tfidf_scores<S: AsRef<str>>(raw_docs: &[Vec<S>]) -> BTreeMap<String, f64> {
    let n_docs = raw_docs.len() as f64;
    let mut tf: BTreeMap<String, u64> = BTreeMap::new();
    let mut df: BTreeMap<String, u64> = BTreeMap::new();
    for doc in raw_docs {
        let mut distinct = HashSet::new();
        for t in doc {
            let t = t.as_ref();
            *tf.entry(t.to_string()).or_insert(0) += 1;
            if distinct.insert(t) {
                *df.entry(t.to_string()).or_insert(0) += 1;
            }
        }
    }
    tf.into_iter()
        .map(|(t, f)| {
            let idf = (n_docs / df[&t] as f64).ln();
            (t, f as f64 * idf)
        })
        .collect()
}

/// Keeps the `top_m` tokens by tf-idf; word ids follow the ranking.
pub fn build_vocabulary<S: AsRef<str>>(raw_docs: &[Vec<S>], top_m: usize) -> Result<Vocabulary> {
    if raw_docs.is_empty() {
        return Err(Error::input("cannot build a vocabulary from an empty corpus"));
    }
    if top_m == 0 {
        return Err(Error::input("vocabulary budget must be positive"));
    }
    let scores = tfidf_scores(raw_docs);
    if scores.is_empty() {
        return Err(Error::input("corpus contains no tokens"));
    }
    let mut ranked: Vec<(String, f64)> = scores.into_iter().collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked.truncate(top_m);
    Vocabulary::new(ranked.into_iter().map(|(t, _)| t).collect())
}

/// Drops users with fewer than `min_votes` votes and items with at most
/// `min_words` tokens, in one pass over the input. A zero threshold disables
/// the corresponding filter. Surviving users and items keep their relative
/// order and are re-indexed densely.
pub fn filter_activity(corpus: &Corpus, votes: &VoteLog, min_votes: usize, min_words: usize) -> (Corpus, VoteLog) {
    let mut per_user = vec![0usize; votes.n_users()];
    for v in &votes.votes {
        per_user[v.user] += 1;
    }
    let keep_user: Vec<bool> = per_user.iter().map(|&c| min_votes == 0 || c >= min_votes).collect();
    let keep_item: Vec<bool> = corpus
        .documents
        .iter()
        .map(|d| min_words == 0 || d.length as usize > min_words)
        .collect();

    let user_map = dense_remap(&keep_user);
    let item_map = dense_remap(&keep_item);

    let documents = corpus
        .documents
        .iter()
        .zip(&keep_item)
        .filter(|(_, &k)| k)
        .map(|(d, _)| d.clone())
        .collect();
    let users = votes
        .users
        .iter()
        .zip(&keep_user)
        .filter(|(_, &k)| k)
        .map(|(u, _)| u.clone())
        .collect();
    let kept_votes = votes
        .votes
        .iter()
        .filter_map(|v| {
            let user = user_map[v.user]?;
            let item = item_map[v.item]?;
            Some(crate::social::Vote { user, item, ..*v })
        })
        .collect();

    (
        Corpus {
            vocabulary: corpus.vocabulary.clone(),
            documents,
        },
        VoteLog {
            users,
            votes: kept_votes,
        },
    )
}

fn dense_remap(keep: &[bool]) -> Vec<Option<usize>> {
    let mut next = 0;
    keep.iter()
        .map(|&k| {
            k.then(|| {
                next += 1;
                next - 1
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::social::Vote;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    /// Scores every token from scratch without any shared bookkeeping.
    fn brute_force_ranking(docs: &[Vec<String>]) -> Vec<String> {
        let mut all: Vec<String> = docs.iter().flatten().cloned().collect();
        all.sort();
        all.dedup();
        let d = docs.len() as f64;
        let mut scored: Vec<(String, f64)> = all
            .into_iter()
            .map(|t| {
                let tf = docs.iter().map(|doc| doc.iter().filter(|x| **x == t).count()).sum::<usize>();
                let df = docs.iter().filter(|doc| doc.contains(&t)).count();
                let s = tf as f64 * (d / df as f64).ln();
                (t, s)
            })
            .collect();
        scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        scored.into_iter().map(|(t, _)| t).collect()
    }

    #[test]
    fn vocabulary_matches_brute_force_tfidf() {
        let docs = vec![
            toks("apple banana apple cherry"),
            toks("banana durian durian durian"),
            toks("cherry egg apple fig fig"),
        ];
        let expected = brute_force_ranking(&docs);
        for m in 1..=expected.len() {
            let vocab = build_vocabulary(&docs, m).unwrap();
            assert_eq!(vocab.words(), &expected[..m]);
        }
        // durian: tf 3, df 1 -> 3 ln 3 is the top score.
        assert_eq!(expected[0], "durian");
    }

    #[test]
    fn small_corpus_keeps_every_token() {
        let docs = vec![toks("a b c"), toks("d e a")];
        let vocab = build_vocabulary(&docs, 3000).unwrap();
        assert_eq!(vocab.len(), 5);
    }

    #[test]
    fn ties_break_lexicographically_and_deterministically() {
        let docs = vec![toks("zeta alpha"), toks("mid")];
        let a = build_vocabulary(&docs, 3).unwrap();
        let b = build_vocabulary(&docs, 3).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.words(), &["alpha", "mid", "zeta"]);
    }

    #[test]
    fn empty_corpus_is_rejected() {
        let docs: Vec<Vec<String>> = vec![];
        assert!(build_vocabulary(&docs, 10).is_err());
        assert!(build_vocabulary(&[toks("a")], 0).is_err());
    }

    fn toy_corpus(lengths: &[u32]) -> Corpus {
        let vocab = Vocabulary::new(vec!["w".into()]).unwrap();
        let docs = lengths
            .iter()
            .enumerate()
            .map(|(j, &n)| {
                let mut c = BTreeMap::new();
                if n > 0 {
                    c.insert(0, n);
                }
                Document::from_counts(format!("item{j}"), c)
            })
            .collect();
        Corpus::new(vocab, docs).unwrap()
    }

    fn toy_votes(per_user: &[usize], n_items: usize) -> VoteLog {
        let mut votes = Vec::new();
        for (u, &n) in per_user.iter().enumerate() {
            for k in 0..n {
                votes.push(Vote {
                    user: u,
                    item: k % n_items,
                    timestamp: Some(k as i64),
                });
            }
        }
        VoteLog {
            users: (0..per_user.len()).map(|u| format!("u{u}")).collect(),
            votes,
        }
    }

    #[test]
    fn activity_filter_counts_users() {
        let corpus = toy_corpus(&[20; 12]);
        let votes = toy_votes(&[2, 10, 12], 12);
        let (c, v) = filter_activity(&corpus, &votes, 10, 10);
        assert_eq!(v.users, vec!["u1".to_string(), "u2".to_string()]);
        assert_eq!(c.n_items(), 12);
        assert_eq!(v.votes.len(), 22);
    }

    #[test]
    fn zero_thresholds_are_identity() {
        let corpus = toy_corpus(&[3, 0, 11]);
        let votes = toy_votes(&[1, 4], 3);
        let (c, v) = filter_activity(&corpus, &votes, 0, 0);
        assert_eq!(c, corpus);
        assert_eq!(v, votes);
    }

    #[test]
    fn short_items_are_dropped_and_votes_reindexed() {
        // Items need strictly more than min_words tokens.
        let corpus = toy_corpus(&[10, 11, 30]);
        let votes = toy_votes(&[3], 3);
        let (c, v) = filter_activity(&corpus, &votes, 0, 10);
        assert_eq!(c.n_items(), 2);
        assert_eq!(c.documents[0].item_id, "item1");
        let items: Vec<usize> = v.votes.iter().map(|x| x.item).collect();
        assert_eq!(items, vec![0, 1]);
    }

    #[test]
    fn filtering_is_single_pass() {
        // u0 has exactly 2 votes, one of them on a short item that gets removed.
        let corpus = toy_corpus(&[1, 20]);
        let votes = toy_votes(&[2], 2);
        let (_, v) = filter_activity(&corpus, &votes, 2, 5);
        assert_eq!(v.users.len(), 1);
        assert_eq!(v.votes.len(), 1);
    }

    #[test]
    fn bow_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let items = [
            RawItem {
                item_id: "s1".into(),
                tokens: toks("a b a c"),
            },
            RawItem {
                item_id: "s2".into(),
                tokens: toks("c c d"),
            },
        ];
        let docs: Vec<Vec<String>> = items.iter().map(|i| i.tokens.clone()).collect();
        let vocab = build_vocabulary(&docs, 3).unwrap();
        let corpus = Corpus::new(
            vocab.clone(),
            items.iter().map(|i| Document::from_tokens(&*i.item_id, &i.tokens, &vocab)).collect(),
        )
        .unwrap();
        vocab.write(&dir.path().join("vocab.txt")).unwrap();
        corpus.write_bow(&dir.path().join("bow.txt")).unwrap();
        let vocab2 = Vocabulary::read(&dir.path().join("vocab.txt")).unwrap();
        let back = Corpus::read_bow(&dir.path().join("bow.txt"), vocab2).unwrap();
        assert_eq!(back, corpus);
        for d in &back.documents {
            assert_eq!(d.length, d.counts.iter().map(|c| c.1).sum::<u32>());
        }
    }

    #[test]
    fn malformed_bow_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bow.txt");
        fs::write(&p, "s1\t0:1\ns2\t0:x\n").unwrap();
        let vocab = Vocabulary::new(vec!["a".into()]).unwrap();
        let err = Corpus::read_bow(&p, vocab).unwrap_err();
        assert!(err.to_string().contains(":2:"), "{err}");
    }
}
