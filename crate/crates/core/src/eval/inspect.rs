use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};

use crate::corpus::Vocabulary;
use crate::dump::LaCtrModel;
use crate::error::{Error, Result};
use crate::linalg::top_indices;

/// Top topics of a vector together with each topic's most probable words.
#[derive(Debug, Clone, PartialEq)]
pub struct TopicSummary {
    pub topic: usize,
    pub weight: f64,
    pub words: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InfluencerSummary {
    pub source: usize,
    pub influence: f64,
    pub topics: Vec<TopicSummary>,
}

/// What a user is interested in and whom they pay attention to.
#[derive(Debug, Clone, PartialEq)]
pub struct UserReport {
    pub user: usize,
    pub interests: Vec<TopicSummary>,
    pub influencers: Vec<InfluencerSummary>,
}

fn summarize(x: &DVector<f64>, beta: &DMatrix<f64>, vocab: &Vocabulary, n_topics: usize, n_words: usize) -> Vec<TopicSummary> {
    top_indices(x.as_slice(), n_topics)
        .into_iter()
        .map(|k| {
            let row: Vec<f64> = beta.row(k).iter().copied().collect();
            TopicSummary {
                topic: k,
                weight: x[k],
                words: top_indices(&row, n_words).into_iter().map(|w| vocab.word(w).to_string()).collect(),
            }
        })
        .collect()
}

/// Ranks the entries of `u_i`, the sources of user `i` by `s_il`, and the
/// entries of each listed `phi_il`.
pub fn inspect_user(
    model: &LaCtrModel,
    vocab: &Vocabulary,
    user: usize,
    n_topics: usize,
    n_influencers: usize,
    n_words: usize,
) -> Result<UserReport> {
    let st = &model.state;
    if user >= st.n_users() {
        return Err(Error::input(format!("unknown user {user}")));
    }
    if vocab.len() != st.beta.ncols() {
        return Err(Error::input("vocabulary does not match the model"));
    }
    let range = model.edges.range(user);
    let s: Vec<f64> = range.clone().map(|e| st.s[e]).collect();
    let influencers = top_indices(&s, n_influencers)
        .into_iter()
        .map(|o| {
            let e = range.start + o;
            InfluencerSummary {
                source: model.edges.edge(e).source,
                influence: st.s[e],
                topics: summarize(&st.phi[e], &st.beta, vocab, n_topics, n_words),
            }
        })
        .collect();
    Ok(UserReport {
        user,
        interests: summarize(&st.u[user], &st.beta, vocab, n_topics, n_words),
        influencers,
    })
}

fn write_topics(out: &mut String, indent: &str, topics: &[TopicSummary]) {
    for t in topics {
        writeln!(out, "{indent}topic {} ({:.4}): {}", t.topic, t.weight, t.words.join(" ")).unwrap();
    }
}

impl UserReport {
    pub fn format(&self, users: &[String]) -> String {
        let name = |i: usize| users.get(i).cloned().unwrap_or_else(|| i.to_string());
        let mut out = String::new();
        writeln!(out, "user {}", name(self.user)).unwrap();
        writeln!(out, "interests:").unwrap();
        write_topics(&mut out, "  ", &self.interests);
        writeln!(out, "influencers:").unwrap();
        for inf in &self.influencers {
            writeln!(out, "  {} (s = {:.4})", name(inf.source), inf.influence).unwrap();
            write_topics(&mut out, "    ", &inf.topics);
        }
        out
    }
}
