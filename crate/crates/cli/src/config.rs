//! Line-oriented `key = value` run configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Unknown keys are
//! rejected. [`RunConfig::to_text`] writes every key in a fixed order, and
//! parsing that text gives back the same configuration.

use std::fmt::Write as _;
use std::path::PathBuf;

use anyhow::{anyhow, bail, Context, Result};

use lactr::dataset::PrepConfig;
use lactr::eval::{parse_x_grid, Aggregation, Mode};
use lactr::model::{Hyperparams, ThetaMode};
use lactr::social::AttributionRule;
use lactr::synth::{AdoptionRule, GraphModel, SynthConfig};
use lactr::topics::LdaConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelChoice {
    LaCtr,
    Ctr,
    Popularity,
    Random,
}

impl ModelChoice {
    pub fn label(self) -> &'static str {
        match self {
            ModelChoice::LaCtr => "lactr",
            ModelChoice::Ctr => "ctr",
            ModelChoice::Popularity => "popularity",
            ModelChoice::Random => "random",
        }
    }

    fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "lactr" => ModelChoice::LaCtr,
            "ctr" => ModelChoice::Ctr,
            "popularity" => ModelChoice::Popularity,
            "random" => ModelChoice::Random,
            _ => bail!("unknown model {s:?} (expected lactr, ctr, popularity or random)"),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub hp: Hyperparams,
    pub seed: u64,
    pub threads: usize,

    pub top_m: usize,
    pub min_votes: usize,
    pub min_words: usize,
    pub neg_samples: usize,
    pub attribution: AttributionRule,

    pub lda_alpha: f64,
    pub lda_eta: f64,
    pub lda_iters: usize,

    pub model: ModelChoice,
    pub models: Vec<ModelChoice>,
    pub folds: usize,
    pub mode: Mode,
    pub x_grid: Vec<usize>,
    pub aggregation: Aggregation,

    pub n_users: usize,
    pub n_items: usize,
    pub vocab_size: usize,
    pub doc_length: usize,
    pub graph: GraphModel,
    pub adoption: AdoptionRule,
    pub synth_alpha: f64,
    pub synth_eta: f64,
    /// When positive, `simulate` tunes the threshold to this positive rate.
    pub target_rate: f64,

    pub data: Option<PathBuf>,
    pub init: Option<PathBuf>,
    pub model_path: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let prep = PrepConfig::default();
        let lda = LdaConfig::default();
        let synth = SynthConfig::default();
        Self {
            hp: Hyperparams::default(),
            seed: 0,
            threads: 0,
            top_m: prep.top_m,
            min_votes: prep.min_votes,
            min_words: prep.min_words,
            neg_samples: prep.neg_samples,
            attribution: prep.attribution,
            lda_alpha: lda.alpha,
            lda_eta: lda.eta,
            lda_iters: lda.iters,
            model: ModelChoice::LaCtr,
            models: vec![ModelChoice::LaCtr, ModelChoice::Ctr, ModelChoice::Popularity],
            folds: 5,
            mode: Mode::InMatrix,
            x_grid: lactr::eval::default_x_grid(),
            aggregation: Aggregation::Max,
            n_users: synth.n_users,
            n_items: synth.n_items,
            vocab_size: synth.vocab_size,
            doc_length: synth.doc_length,
            graph: synth.graph,
            adoption: synth.adoption,
            synth_alpha: synth.alpha,
            synth_eta: synth.eta,
            target_rate: 0.0,
            data: None,
            init: None,
            model_path: None,
            out: None,
        }
    }
}

/// Every key, in serialization order.
pub const KEYS: &[&str] = &[
    "k",
    "lambda_u",
    "lambda_v",
    "lambda_s",
    "lambda_phi",
    "a_r",
    "b_r",
    "a_phi",
    "b_phi",
    "theta_mode",
    "max_sweeps",
    "tol",
    "seed",
    "threads",
    "top_m",
    "min_votes",
    "min_words",
    "neg_samples",
    "attribution",
    "lda_alpha",
    "lda_eta",
    "lda_iters",
    "model",
    "models",
    "folds",
    "mode",
    "x_grid",
    "aggregation",
    "n_users",
    "n_items",
    "vocab_size",
    "doc_length",
    "graph",
    "adoption",
    "synth_alpha",
    "synth_eta",
    "target_rate",
    "data",
    "init",
    "model_path",
    "out",
];

fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| anyhow!("{key}: cannot parse {value:?}"))
}

fn path(value: &str) -> Option<PathBuf> {
    (!value.is_empty()).then(|| PathBuf::from(value))
}

fn show_path(p: &Option<PathBuf>) -> String {
    p.as_ref().map(|p| p.display().to_string()).unwrap_or_default()
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| lactr::Error::input(format!("config line {}: expected key = value", n + 1)))?;
            cfg.set(key.trim(), value.trim())
                .map_err(|e| lactr::Error::input(format!("config line {}: {e:#}", n + 1)))?;
        }
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let hp = &mut self.hp;
        match key {
            "k" => hp.k = num(key, value)?,
            "lambda_u" => hp.lambda_u = num(key, value)?,
            "lambda_v" => hp.lambda_v = num(key, value)?,
            "lambda_s" => hp.lambda_s = num(key, value)?,
            "lambda_phi" => hp.lambda_phi = num(key, value)?,
            "a_r" => hp.a_r = num(key, value)?,
            "b_r" => hp.b_r = num(key, value)?,
            "a_phi" => hp.a_phi = num(key, value)?,
            "b_phi" => hp.b_phi = num(key, value)?,
            "theta_mode" => {
                hp.theta_mode = match value {
                    "optimize" => ThetaMode::Optimize,
                    "frozen" => ThetaMode::Frozen,
                    _ => bail!("theta_mode must be optimize or frozen"),
                }
            }
            "max_sweeps" => hp.max_sweeps = num(key, value)?,
            "tol" => hp.tol = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "threads" => self.threads = num(key, value)?,
            "top_m" => self.top_m = num(key, value)?,
            "min_votes" => self.min_votes = num(key, value)?,
            "min_words" => self.min_words = num(key, value)?,
            "neg_samples" => self.neg_samples = num(key, value)?,
            "attribution" => {
                self.attribution = match value {
                    "all" => AttributionRule::AllCandidates,
                    "earliest" => AttributionRule::Earliest,
                    _ => bail!("attribution must be all or earliest"),
                }
            }
            "lda_alpha" => self.lda_alpha = num(key, value)?,
            "lda_eta" => self.lda_eta = num(key, value)?,
            "lda_iters" => self.lda_iters = num(key, value)?,
            "model" => self.model = ModelChoice::parse(value)?,
            "models" => {
                self.models = value
                    .split(',')
                    .map(|m| ModelChoice::parse(m.trim()))
                    .collect::<Result<_>>()?
            }
            "folds" => self.folds = num(key, value)?,
            "mode" => {
                self.mode = match value {
                    "in_matrix" => Mode::InMatrix,
                    "out_of_matrix" => Mode::OutOfMatrix,
                    _ => bail!("mode must be in_matrix or out_of_matrix"),
                }
            }
            "x_grid" => self.x_grid = parse_x_grid(value)?,
            "aggregation" => {
                self.aggregation = match value {
                    "max" => Aggregation::Max,
                    "sum" => Aggregation::Sum,
                    _ => bail!("aggregation must be max or sum"),
                }
            }
            "n_users" => self.n_users = num(key, value)?,
            "n_items" => self.n_items = num(key, value)?,
            "vocab_size" => self.vocab_size = num(key, value)?,
            "doc_length" => self.doc_length = num(key, value)?,
            "graph" => {
                self.graph = match value.split_once(':') {
                    Some(("erdos_renyi", p)) => GraphModel::ErdosRenyi { p: num(key, p)? },
                    Some(("preferential", m)) => GraphModel::Preferential { m: num(key, m)? },
                    _ => bail!("graph must be erdos_renyi:<p> or preferential:<m>"),
                }
            }
            "adoption" => {
                self.adoption = match value.split_once(':') {
                    Some(("threshold", t)) => AdoptionRule::Threshold { tau: num(key, t)? },
                    Some(("top_k", k)) => AdoptionRule::TopK { kappa: num(key, k)? },
                    _ => bail!("adoption must be threshold:<tau> or top_k:<kappa>"),
                }
            }
            "synth_alpha" => self.synth_alpha = num(key, value)?,
            "synth_eta" => self.synth_eta = num(key, value)?,
            "target_rate" => self.target_rate = num(key, value)?,
            "data" => self.data = path(value),
            "init" => self.init = path(value),
            "model_path" => self.model_path = path(value),
            "out" => self.out = path(value),
            _ => bail!("unknown key {key:?}"),
        }
        Ok(())
    }

    /// Applies `key=value` overrides in order.
    pub fn apply_overrides(&mut self, overrides: &[String]) -> Result<()> {
        for o in overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| lactr::Error::input(format!("override {o:?} is not key=value")))?;
            self.set(k.trim(), v.trim())
                .map_err(|e| lactr::Error::input(format!("override {o:?}: {e:#}")))?;
        }
        Ok(())
    }

    fn value(&self, key: &str) -> String {
        let hp = &self.hp;
        match key {
            "k" => hp.k.to_string(),
            "lambda_u" => hp.lambda_u.to_string(),
            "lambda_v" => hp.lambda_v.to_string(),
            "lambda_s" => hp.lambda_s.to_string(),
            "lambda_phi" => hp.lambda_phi.to_string(),
            "a_r" => hp.a_r.to_string(),
            "b_r" => hp.b_r.to_string(),
            "a_phi" => hp.a_phi.to_string(),
            "b_phi" => hp.b_phi.to_string(),
            "theta_mode" => match hp.theta_mode {
                ThetaMode::Optimize => "optimize".into(),
                ThetaMode::Frozen => "frozen".into(),
            },
            "max_sweeps" => hp.max_sweeps.to_string(),
            "tol" => hp.tol.to_string(),
            "seed" => self.seed.to_string(),
            "threads" => self.threads.to_string(),
            "top_m" => self.top_m.to_string(),
            "min_votes" => self.min_votes.to_string(),
            "min_words" => self.min_words.to_string(),
            "neg_samples" => self.neg_samples.to_string(),
            "attribution" => match self.attribution {
                AttributionRule::AllCandidates => "all".into(),
                AttributionRule::Earliest => "earliest".into(),
            },
            "lda_alpha" => self.lda_alpha.to_string(),
            "lda_eta" => self.lda_eta.to_string(),
            "lda_iters" => self.lda_iters.to_string(),
            "model" => self.model.label().into(),
            "models" => self.models.iter().map(|m| m.label()).collect::<Vec<_>>().join(","),
            "folds" => self.folds.to_string(),
            "mode" => self.mode.label().into(),
            "x_grid" => self.x_grid.iter().map(usize::to_string).collect::<Vec<_>>().join(","),
            "aggregation" => match self.aggregation {
                Aggregation::Max => "max".into(),
                Aggregation::Sum => "sum".into(),
            },
            "n_users" => self.n_users.to_string(),
            "n_items" => self.n_items.to_string(),
            "vocab_size" => self.vocab_size.to_string(),
            "doc_length" => self.doc_length.to_string(),
            "graph" => match self.graph {
                GraphModel::ErdosRenyi { p } => format!("erdos_renyi:{p}"),
                GraphModel::Preferential { m } => format!("preferential:{m}"),
            },
            "adoption" => match self.adoption {
                AdoptionRule::Threshold { tau } => format!("threshold:{tau}"),
                AdoptionRule::TopK { kappa } => format!("top_k:{kappa}"),
            },
            "synth_alpha" => self.synth_alpha.to_string(),
            "synth_eta" => self.synth_eta.to_string(),
            "target_rate" => self.target_rate.to_string(),
            "data" => show_path(&self.data),
            "init" => show_path(&self.init),
            "model_path" => show_path(&self.model_path),
            "out" => show_path(&self.out),
            _ => unreachable!("unlisted key {key}"),
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for key in KEYS {
            writeln!(out, "{key} = {}", self.value(key)).unwrap();
        }
        out
    }

    pub fn prep_config(&self) -> PrepConfig {
        PrepConfig {
            top_m: self.top_m,
            min_votes: self.min_votes,
            min_words: self.min_words,
            neg_samples: self.neg_samples,
            attribution: self.attribution,
            seed: self.seed,
        }
    }

    pub fn lda_config(&self) -> LdaConfig {
        LdaConfig {
            k: self.hp.k,
            alpha: self.lda_alpha,
            eta: self.lda_eta,
            iters: self.lda_iters,
            seed: self.seed,
        }
    }

    pub fn synth_config(&self) -> SynthConfig {
        SynthConfig {
            n_users: self.n_users,
            n_items: self.n_items,
            vocab_size: self.vocab_size,
            doc_length: self.doc_length,
            graph: self.graph,
            hp: self.hp,
            alpha: self.synth_alpha,
            eta: self.synth_eta,
            adoption: self.adoption,
            seed: self.seed,
        }
    }

    /// Checks everything that can be checked before any work starts.
    pub fn validate(&self) -> Result<()> {
        self.hp.validate()?;
        if self.folds < 2 {
            bail!(lactr::Error::input("folds must be at least 2"));
        }
        if self.models.is_empty() {
            bail!(lactr::Error::input("models must list at least one model"));
        }
        if !(self.target_rate >= 0.0 && self.target_rate < 1.0) {
            bail!(lactr::Error::input("target_rate must lie in [0, 1)"));
        }
        Ok(())
    }

    pub fn require<'a>(&self, field: &'a Option<PathBuf>, name: &str) -> Result<&'a PathBuf> {
        field
            .as_ref()
            .ok_or_else(|| lactr::Error::input(format!("missing required path `{name}`")))
            .context("configuration")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn defaults_survive_a_round_trip() {
        let cfg = RunConfig::default();
        assert_eq!(RunConfig::parse(&cfg.to_text()).unwrap(), cfg);
        assert_eq!(cfg.hp.lambda_phi, 1.0);
        assert_eq!(cfg.x_grid, vec![20, 40, 60, 80, 100, 120, 140, 160, 180, 200]);
    }

    #[test]
    fn comments_blanks_and_errors() {
        let cfg = RunConfig::parse("# note\n\nk = 7\nlambda_phi=0.5\nx_grid = 20:60:20\ndata = /tmp/d\n").unwrap();
        assert_eq!(cfg.hp.k, 7);
        assert_eq!(cfg.hp.lambda_phi, 0.5);
        assert_eq!(cfg.x_grid, vec![20, 40, 60]);
        assert_eq!(cfg.data, Some(PathBuf::from("/tmp/d")));
        let err = RunConfig::parse("k = 3\nbogus = 1\n").unwrap_err();
        assert!(format!("{err:#}").contains("line 2"), "{err:#}");
        assert!(format!("{err:#}").contains("unknown key"), "{err:#}");
        assert!(RunConfig::parse("k 3").is_err());
        assert!(RunConfig::parse("k = three").is_err());
        assert!(RunConfig::parse("graph = ring").is_err());
    }

    fn positive() -> impl Strategy<Value = f64> {
        prop_oneof![1e-6f64..1e6, Just(0.01), Just(1.0 / 3.0)]
    }

    prop_compose! {
        fn arb_config()(
            k in 1usize..300,
            lambdas in prop::array::uniform4(positive()),
            conf in prop::array::uniform2(positive()),
            frozen in any::<bool>(),
            seed in any::<u64>(),
            counts in prop::array::uniform6(0usize..5000),
            earliest in any::<bool>(),
            models in prop::collection::vec(0usize..4, 1..4),
            xs in prop::collection::vec(1usize..500, 1..6),
            graph_p in 0.0f64..1.0,
            pref in any::<bool>(),
            tau in 0.01f64..0.99,
            top in any::<bool>(),
            path in "[a-z/]{0,12}",
        ) -> RunConfig {
            let all = [ModelChoice::LaCtr, ModelChoice::Ctr, ModelChoice::Popularity, ModelChoice::Random];
            RunConfig {
                hp: Hyperparams {
                    k,
                    lambda_u: lambdas[0],
                    lambda_v: lambdas[1],
                    lambda_s: lambdas[2],
                    lambda_phi: lambdas[3],
                    a_r: conf[0] + conf[1],
                    b_r: conf[1],
                    theta_mode: if frozen { ThetaMode::Frozen } else { ThetaMode::Optimize },
                    max_sweeps: counts[0],
                    tol: lambdas[0] * 1e-9,
                    ..Hyperparams::default()
                },
                seed,
                top_m: counts[1],
                min_votes: counts[2],
                neg_samples: counts[3],
                attribution: if earliest { AttributionRule::Earliest } else { AttributionRule::AllCandidates },
                models: models.iter().map(|&m| all[m]).collect(),
                x_grid: xs,
                n_users: counts[4] + 1,
                n_items: counts[5] + 1,
                graph: if pref { GraphModel::Preferential { m: counts[4] + 1 } } else { GraphModel::ErdosRenyi { p: graph_p } },
                adoption: if top { AdoptionRule::TopK { kappa: counts[5] + 1 } } else { AdoptionRule::Threshold { tau } },
                target_rate: tau / 100.0,
                data: (!path.is_empty()).then(|| PathBuf::from(&path)),
                ..RunConfig::default()
            }
        }
    }

    proptest! {
        #[test]
        fn serialize_then_parse_is_identity(cfg in arb_config()) {
            let text = cfg.to_text();
            let back = RunConfig::parse(&text).unwrap();
            prop_assert_eq!(&back, &cfg);
            prop_assert_eq!(back.to_text(), text);
        }
    }
}
