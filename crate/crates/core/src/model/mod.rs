//! The limited-attention CTR model: MAP objective, block updates and training.

mod hyper;
mod likelihood;
mod state;
mod train;
mod updates;

pub use hyper::{Hyperparams, ThetaMode};
pub use likelihood::{log_likelihood, rating_term, LogLikelihood};
pub use state::{ModelState, Problem, RatingView, INIT_STDDEV};
pub use train::{train, Block, TraceRow, Trainer};
pub use updates::{
    attention_gram, item_gram, orient_user, theta_objective, update_attention, update_influence, update_item,
    update_theta, update_user_interest, THETA_MAX_STEPS,
};

#[cfg(test)]
mod tests;
