//! Cross-validation folds, item scoring, recall@X and the experiment runner.
//!
//! In-matrix prediction scores items by their fitted `v_j`; out-of-matrix
//! prediction uses only `theta_j`. Interest scores are `u_i . x_j`; attention
//! scores take the best edge, `max_l phi_il . x_j`, and report that `l` as the
//! predicted source.

mod experiment;
mod folds;
mod inspect;
mod predict;
mod recall;

pub use experiment::{
    evaluate_split, run_experiment, CtrRecommender, ExperimentData, ExperimentResult, FitContext, LaCtrRecommender,
    ModelCurves, PopularityRecommender, RandomRecommender, Recommender, ResultRow, RESULTS_HEADER,
};
pub use folds::{FoldPlan, Split};
pub use inspect::{inspect_user, InfluencerSummary, TopicSummary, UserReport};
pub use predict::{predict_scores, Aggregation, Latent, Mode, RandomScorer, ScoreOptions, Scored, Scorer};
pub use recall::{default_x_grid, parse_x_grid, recall_at_x, recall_curve, user_recall, RecallCurve, UserRecall};
