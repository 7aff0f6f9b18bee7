use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::folds::{FoldPlan, Split};
use super::predict::{predict_scores, Aggregation, Latent, Mode, RandomScorer, ScoreOptions, Scorer};
use super::recall::{recall_curve, user_recall, RecallCurve};
use crate::baselines::{train_ctr, Popularity, UserItemRatings};
use crate::corpus::Corpus;
use crate::dump::{CtrModel, LaCtrModel};
use crate::error::{Error, Result};
use crate::model::{train, Hyperparams, Problem, RatingView};
use crate::social::{attribute_sources, build_attention_edges, AttributionRule, FollowerGraph, VoteLog};
use crate::topics::TopicModel;

/// Training data visible to a model for one fold.
#[derive(Clone, Copy)]
pub struct FitContext<'a> {
    pub corpus: &'a Corpus,
    pub graph: &'a FollowerGraph,
    pub train: &'a VoteLog,
    pub init: &'a TopicModel,
    pub fold: usize,
}

pub trait Recommender: Sync {
    fn name(&self) -> &str;
    /// User representations this model can rank with.
    fn latents(&self) -> Vec<Latent>;
    fn fit(&self, ctx: &FitContext) -> Result<Box<dyn Scorer>>;
}

/// The limited-attention model. Sources are attributed on the training votes only.
#[derive(Debug, Clone, PartialEq)]
pub struct LaCtrRecommender {
    pub name: String,
    pub hp: Hyperparams,
    pub neg_samples: usize,
    pub attribution: AttributionRule,
    pub seed: u64,
}

impl LaCtrRecommender {
    pub fn fit_model(&self, ctx: &FitContext) -> Result<LaCtrModel> {
        let edges = build_attention_edges(ctx.graph, self.neg_samples, self.seed);
        let attr = attribute_sources(ctx.train, &edges, self.attribution)?;
        let ratings = RatingView::from_attribution(&attr, &edges, ctx.corpus.n_items())?;
        let problem = Problem::new(ctx.corpus, &edges, &ratings, &self.hp)?;
        let (state, _) = train(problem, ctx.init, self.seed)?;
        Ok(LaCtrModel {
            hp: self.hp,
            edges,
            state,
        })
    }
}

impl Recommender for LaCtrRecommender {
    fn name(&self) -> &str {
        &self.name
    }

    fn latents(&self) -> Vec<Latent> {
        vec![Latent::Attention, Latent::Interest]
    }

    fn fit(&self, ctx: &FitContext) -> Result<Box<dyn Scorer>> {
        Ok(Box::new(self.fit_model(ctx)?))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CtrRecommender {
    pub name: String,
    pub hp: Hyperparams,
    pub seed: u64,
}

impl CtrRecommender {
    pub fn fit_model(&self, ctx: &FitContext) -> Result<CtrModel> {
        let ratings = UserItemRatings::from_votes(ctx.train, ctx.corpus.n_items())?;
        let (state, _) = train_ctr(ctx.corpus, ctx.init, &ratings, &self.hp, self.seed)?;
        Ok(CtrModel { hp: self.hp, state })
    }
}

impl Recommender for CtrRecommender {
    fn name(&self) -> &str {
        &self.name
    }

    fn latents(&self) -> Vec<Latent> {
        vec![Latent::Interest]
    }

    fn fit(&self, ctx: &FitContext) -> Result<Box<dyn Scorer>> {
        Ok(Box::new(self.fit_model(ctx)?))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PopularityRecommender;

impl Recommender for PopularityRecommender {
    fn name(&self) -> &str {
        "popularity"
    }

    fn latents(&self) -> Vec<Latent> {
        vec![Latent::Interest]
    }

    fn fit(&self, ctx: &FitContext) -> Result<Box<dyn Scorer>> {
        let ratings = UserItemRatings::from_votes(ctx.train, ctx.corpus.n_items())?;
        Ok(Box::new(Popularity::from_ratings(&ratings)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RandomRecommender {
    pub seed: u64,
}

impl Recommender for RandomRecommender {
    fn name(&self) -> &str {
        "random"
    }

    fn latents(&self) -> Vec<Latent> {
        vec![Latent::Interest]
    }

    fn fit(&self, ctx: &FitContext) -> Result<Box<dyn Scorer>> {
        Ok(Box::new(RandomScorer {
            n_users: ctx.train.n_users(),
            n_items: ctx.corpus.n_items(),
            seed: self.seed ^ ctx.fold as u64,
        }))
    }
}

/// Shared inputs of an experiment.
#[derive(Clone, Copy)]
pub struct ExperimentData<'a> {
    pub corpus: &'a Corpus,
    pub graph: &'a FollowerGraph,
    pub votes: &'a VoteLog,
    pub init: &'a TopicModel,
}

/// One line of the results table; `fold` is `None` for the cross-fold average.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub model: String,
    pub latent: Latent,
    pub mode: Mode,
    pub fold: Option<usize>,
    pub x: usize,
    pub mean_recall: f64,
    pub n_users: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelCurves {
    pub model: String,
    pub latent: Latent,
    pub folds: Vec<RecallCurve>,
    /// Mean over folds of the per-fold user averages.
    pub mean: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub mode: Mode,
    pub xs: Vec<usize>,
    pub curves: Vec<ModelCurves>,
}

pub const RESULTS_HEADER: &str = "model,latent,mode,fold,x,mean_recall,n_users";

impl ExperimentResult {
    pub fn curve(&self, model: &str, latent: Latent) -> Option<&ModelCurves> {
        self.curves.iter().find(|c| c.model == model && c.latent == latent)
    }

    pub fn mean_at(&self, model: &str, latent: Latent, x: usize) -> Option<f64> {
        let p = self.xs.iter().position(|&c| c == x)?;
        self.curve(model, latent).map(|c| c.mean[p])
    }

    pub fn rows(&self) -> Vec<ResultRow> {
        let mut rows = Vec::new();
        for c in &self.curves {
            for (f, curve) in c.folds.iter().enumerate() {
                for (p, &x) in self.xs.iter().enumerate() {
                    rows.push(ResultRow {
                        model: c.model.clone(),
                        latent: c.latent,
                        mode: self.mode,
                        fold: Some(f),
                        x,
                        mean_recall: curve.mean[p],
                        n_users: curve.n_users(),
                    });
                }
            }
            let total: usize = c.folds.iter().map(RecallCurve::n_users).sum();
            for (p, &x) in self.xs.iter().enumerate() {
                rows.push(ResultRow {
                    model: c.model.clone(),
                    latent: c.latent,
                    mode: self.mode,
                    fold: None,
                    x,
                    mean_recall: c.mean[p],
                    n_users: total,
                });
            }
        }
        rows
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(RESULTS_HEADER);
        out.push('\n');
        for r in self.rows() {
            let fold = r.fold.map_or_else(|| "all".to_string(), |f| f.to_string());
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.model,
                r.latent.label(),
                r.mode.label(),
                fold,
                r.x,
                r.mean_recall,
                r.n_users
            )
            .unwrap();
        }
        out
    }
}

/// Recall curve of a fitted scorer on one split.
pub fn evaluate_split(scorer: &dyn Scorer, split: &Split, opts: &ScoreOptions, xs: &[usize]) -> Result<RecallCurve> {
    let (train_pos, test_pos) = split.positives();
    let per_user: Vec<_> = (0..split.train.n_users())
        .into_par_iter()
        .filter(|&i| !test_pos[i].is_empty())
        .map(|i| {
            let pool = split.candidates(&train_pos[i]);
            let ranking = predict_scores(scorer, i, &pool, opts)?;
            user_recall(i, &ranking, &test_pos[i], xs)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(recall_curve(xs, per_user.into_iter().flatten().collect()))
}

/// Cross-validated recall curves: per fold, every model is trained on the
/// training split and scored on the test candidates; recall is averaged over
/// users, then over folds.
pub fn run_experiment(
    data: &ExperimentData,
    models: &[&dyn Recommender],
    plan: &FoldPlan,
    xs: &[usize],
    aggregation: Aggregation,
) -> Result<ExperimentResult> {
    if xs.is_empty() || xs.contains(&0) {
        return Err(Error::input("x grid must be non-empty and positive"));
    }
    if data.init.theta.len() != data.corpus.n_items() || data.graph.n_users() != data.votes.n_users() {
        return Err(Error::input("corpus, graph and votes are inconsistent"));
    }
    let mut curves: Vec<ModelCurves> = models
        .iter()
        .flat_map(|m| {
            m.latents().into_iter().map(|latent| ModelCurves {
                model: m.name().to_string(),
                latent,
                folds: Vec::new(),
                mean: vec![0.0; xs.len()],
            })
        })
        .collect();
    for fold in 0..plan.n_folds {
        let split = plan.split(data.votes, data.corpus.n_items(), fold)?;
        let ctx = FitContext {
            corpus: data.corpus,
            graph: data.graph,
            train: &split.train,
            init: data.init,
            fold,
        };
        let mut slot = 0;
        for m in models {
            let scorer = m.fit(&ctx).map_err(|e| e.context(format!("fold {fold}, model {}", m.name())))?;
            for latent in m.latents() {
                let opts = ScoreOptions {
                    mode: plan.mode,
                    latent,
                    aggregation,
                };
                let curve = evaluate_split(scorer.as_ref(), &split, &opts, xs)
                    .map_err(|e| e.context(format!("fold {fold}, model {}", m.name())))?;
                curves[slot].folds.push(curve);
                slot += 1;
            }
        }
    }
    for c in &mut curves {
        let used: Vec<&RecallCurve> = c.folds.iter().filter(|f| f.n_users() > 0).collect();
        for (p, m) in c.mean.iter_mut().enumerate() {
            if !used.is_empty() {
                *m = used.iter().map(|f| f.mean[p]).sum::<f64>() / used.len() as f64;
            }
        }
    }
    Ok(ExperimentResult {
        mode: plan.mode,
        xs: xs.to_vec(),
        curves,
    })
}
