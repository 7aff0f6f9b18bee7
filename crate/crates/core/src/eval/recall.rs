use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::Scored;
use crate::error::{Error, Result};

/// `|top-x ∩ positives| / |positives|`, or `None` when the user has no test positives.
pub fn recall_at_x(ranking: &[Scored], positives: &HashSet<usize>, x: usize) -> Result<Option<f64>> {
    if x == 0 {
        return Err(Error::input("recall cutoff must be at least 1"));
    }
    if ranking.is_empty() {
        return Err(Error::input("empty candidate pool"));
    }
    if positives.is_empty() {
        return Ok(None);
    }
    let hits = ranking.iter().take(x).filter(|s| positives.contains(&s.item)).count();
    Ok(Some(hits as f64 / positives.len() as f64))
}

/// Recall of one user at every cutoff of a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserRecall {
    pub user: usize,
    pub n_positives: usize,
    pub recall: Vec<f64>,
}

/// Recall at each cutoff, averaged over users with at least one test positive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecallCurve {
    pub xs: Vec<usize>,
    pub mean: Vec<f64>,
    pub per_user: Vec<UserRecall>,
}

impl RecallCurve {
    pub fn n_users(&self) -> usize {
        self.per_user.len()
    }

    pub fn at(&self, x: usize) -> Option<f64> {
        self.xs.iter().position(|&c| c == x).map(|p| self.mean[p])
    }
}

/// Recall of a single ranking over a cutoff grid in one pass.
pub fn user_recall(user: usize, ranking: &[Scored], positives: &HashSet<usize>, xs: &[usize]) -> Result<Option<UserRecall>> {
    if xs.contains(&0) {
        return Err(Error::input("recall cutoff must be at least 1"));
    }
    if ranking.is_empty() {
        return Err(Error::input("empty candidate pool"));
    }
    if positives.is_empty() {
        return Ok(None);
    }
    let ranks: Vec<usize> = ranking
        .iter()
        .enumerate()
        .filter(|(_, s)| positives.contains(&s.item))
        .map(|(r, _)| r)
        .collect();
    let n = positives.len() as f64;
    Ok(Some(UserRecall {
        user,
        n_positives: positives.len(),
        recall: xs.iter().map(|&x| ranks.iter().filter(|&&r| r < x).count() as f64 / n).collect(),
    }))
}

/// Averages per-user recalls into a curve.
pub fn recall_curve(xs: &[usize], per_user: Vec<UserRecall>) -> RecallCurve {
    let mut mean = vec![0.0; xs.len()];
    for u in &per_user {
        for (m, r) in mean.iter_mut().zip(&u.recall) {
            *m += r;
        }
    }
    if !per_user.is_empty() {
        let n = per_user.len() as f64;
        mean.iter_mut().for_each(|m| *m /= n);
    }
    RecallCurve {
        xs: xs.to_vec(),
        mean,
        per_user,
    }
}

/// Parses `start:stop:step` (inclusive) or a comma-separated list.
pub fn parse_x_grid(spec: &str) -> Result<Vec<usize>> {
    let bad = || Error::input(format!("invalid x grid {spec:?}"));
    let xs: Vec<usize> = if spec.contains(':') {
        let parts: Vec<usize> = spec.split(':').map(|p| p.trim().parse().map_err(|_| bad())).collect::<Result<_>>()?;
        let [start, stop, step] = parts[..] else { return Err(bad()) };
        if step == 0 || start > stop {
            return Err(bad());
        }
        (start..=stop).step_by(step).collect()
    } else {
        spec.split(',').map(|p| p.trim().parse().map_err(|_| bad())).collect::<Result<_>>()?
    };
    if xs.is_empty() || xs.contains(&0) {
        return Err(bad());
    }
    Ok(xs)
}

/// The cutoffs of the published recall figures: 20, 40, ..., 200.
pub fn default_x_grid() -> Vec<usize> {
    (20..=200).step_by(20).collect()
}
