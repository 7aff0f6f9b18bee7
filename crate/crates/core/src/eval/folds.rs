use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::Mode;
use crate::error::{Error, Result};
use crate::social::VoteLog;

/// Assignment of votes (in-matrix) or items (out-of-matrix) to folds.
///
/// Units are shuffled once and dealt round-robin, so fold sizes differ by at
/// most one.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldPlan {
    pub n_folds: usize,
    pub mode: Mode,
    pub seed: u64,
    /// Fold of each vote (in-matrix) or of each item (out-of-matrix).
    pub assignment: Vec<usize>,
}

impl FoldPlan {
    pub fn new(votes: &VoteLog, n_items: usize, n_folds: usize, mode: Mode, seed: u64) -> Result<Self> {
        if n_folds < 2 {
            return Err(Error::input("cross validation needs at least 2 folds"));
        }
        let n_units = match mode {
            Mode::InMatrix => votes.votes.len(),
            Mode::OutOfMatrix => n_items,
        };
        if n_units < n_folds {
            return Err(Error::input(format!("{n_units} units cannot fill {n_folds} folds")));
        }
        let mut order: Vec<usize> = (0..n_units).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let mut assignment = vec![0; n_units];
        for (pos, &unit) in order.iter().enumerate() {
            assignment[unit] = pos % n_folds;
        }
        Ok(Self {
            n_folds,
            mode,
            seed,
            assignment,
        })
    }

    pub fn split(&self, votes: &VoteLog, n_items: usize, fold: usize) -> Result<Split> {
        if fold >= self.n_folds {
            return Err(Error::input(format!("fold {fold} out of {}", self.n_folds)));
        }
        let mut train = VoteLog {
            users: votes.users.clone(),
            votes: Vec::new(),
        };
        let mut test = train.clone();
        let test_items = match self.mode {
            Mode::InMatrix => {
                if self.assignment.len() != votes.votes.len() {
                    return Err(Error::input("fold plan was built for a different vote log"));
                }
                for (v, &f) in votes.votes.iter().zip(&self.assignment) {
                    if f == fold { &mut test } else { &mut train }.votes.push(*v);
                }
                None
            }
            Mode::OutOfMatrix => {
                if self.assignment.len() != n_items {
                    return Err(Error::input("fold plan was built for a different item count"));
                }
                for v in &votes.votes {
                    if self.assignment[v.item] == fold { &mut test } else { &mut train }.votes.push(*v);
                }
                Some((0..n_items).filter(|&j| self.assignment[j] == fold).collect())
            }
        };
        Ok(Split {
            fold,
            mode: self.mode,
            n_items,
            train,
            test,
            test_items,
        })
    }
}

/// One train/test partition of the votes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub fold: usize,
    pub mode: Mode,
    pub n_items: usize,
    pub train: VoteLog,
    pub test: VoteLog,
    /// Held-out items, out-of-matrix only.
    pub test_items: Option<Vec<usize>>,
}

impl Split {
    /// Items each user voted on, for the train and test parts.
    pub fn positives(&self) -> (Vec<HashSet<usize>>, Vec<HashSet<usize>>) {
        let n = self.train.n_users();
        let collect = |log: &VoteLog| {
            let mut sets = vec![HashSet::new(); n];
            for v in &log.votes {
                sets[v.user].insert(v.item);
            }
            sets
        };
        (collect(&self.train), collect(&self.test))
    }

    /// Items to rank for a user: the held-out items out-of-matrix, otherwise
    /// every item the user has not voted on in training.
    pub fn candidates(&self, train_positives: &HashSet<usize>) -> Vec<usize> {
        match &self.test_items {
            Some(items) => items.iter().copied().filter(|j| !train_positives.contains(j)).collect(),
            None => (0..self.n_items).filter(|j| !train_positives.contains(j)).collect(),
        }
    }
}
