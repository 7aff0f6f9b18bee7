use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

use lactr::baselines::{train_ctr, UserItemRatings};
use lactr::dataset::{prepare, Dataset};
use lactr::dump::{CtrModel, LaCtrModel, TrainedModel};
use lactr::eval::{
    inspect_user, predict_scores, run_experiment, CtrRecommender, ExperimentData, FoldPlan, LaCtrRecommender, Latent,
    PopularityRecommender, RandomRecommender, Recommender, ScoreOptions,
};
use lactr::model::{Problem, RatingView, TraceRow, Trainer};
use lactr::social::{attribute_sources, build_attention_edges};
use lactr::synth::{calibrate_threshold, generate};
use lactr::topics::{fit_lda, format_topics, TopicModel};
use lactr::Error;

use crate::config::{ModelChoice, RunConfig};
use crate::{manifest, Command, Common};

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Prep {
            items,
            votes,
            edges,
            out,
            common,
        } => {
            let cfg = load_config(&common, |_| Ok(()))?;
            for p in [&items, &votes, &edges] {
                require_file(p)?;
            }
            prep(&cfg, &items, &votes, &edges, &out).context("prep")
        }
        Command::LdaInit { data, out, common } => {
            let cfg = load_config(&common, |c| {
                set_path(&mut c.data, data);
                Ok(())
            })?;
            lda_init(&cfg, &out).context("lda-init")
        }
        Command::Train {
            data,
            init,
            out,
            model,
            lambda_phi,
            common,
        } => {
            let cfg = load_config(&common, |c| {
                set_path(&mut c.data, data);
                set_path(&mut c.init, init);
                set_path(&mut c.out, out);
                if let Some(m) = model {
                    c.set("model", &m)?;
                }
                if let Some(l) = lambda_phi {
                    c.hp.lambda_phi = l;
                }
                Ok(())
            })?;
            train(&cfg).context("train")
        }
        Command::Eval {
            data,
            init,
            out,
            x_grid,
            sweep,
            common,
        } => {
            let cfg = load_config(&common, |c| {
                set_path(&mut c.data, data);
                set_path(&mut c.init, init);
                set_path(&mut c.out, out);
                if let Some(g) = x_grid {
                    c.set("x_grid", &g)?;
                }
                Ok(())
            })?;
            eval(&cfg, sweep.as_deref()).context("eval")
        }
        Command::Predict {
            data,
            model,
            user,
            top,
            latent,
            exclude_voted,
            out,
            common,
        } => {
            let cfg = load_config(&common, |c| {
                set_path(&mut c.data, data);
                set_path(&mut c.model_path, model);
                set_path(&mut c.out, out);
                Ok(())
            })?;
            let latent = match latent.as_str() {
                "interest" => Latent::Interest,
                "attention" => Latent::Attention,
                _ => bail!(Error::input("latent must be interest or attention")),
            };
            predict(&cfg, &user, top, latent, exclude_voted).context("predict")
        }
        Command::Simulate { out, common } => {
            let cfg = load_config(&common, |c| {
                set_path(&mut c.out, out);
                Ok(())
            })?;
            simulate(&cfg).context("simulate")
        }
        Command::Inspect {
            data,
            model,
            user,
            topics,
            influencers,
            words,
            out,
            common,
        } => {
            let cfg = load_config(&common, |c| {
                set_path(&mut c.data, data);
                set_path(&mut c.model_path, model);
                set_path(&mut c.out, out);
                Ok(())
            })?;
            inspect(&cfg, &user, topics, influencers, words).context("inspect")
        }
    }
}

fn set_path(field: &mut Option<PathBuf>, value: Option<PathBuf>) {
    if value.is_some() {
        *field = value;
    }
}

/// Config file, then `--set` overrides, then dedicated flags, then validation.
fn load_config<F>(common: &Common, flags: F) -> Result<RunConfig>
where
    F: FnOnce(&mut RunConfig) -> Result<()>,
{
    let mut cfg = match &common.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Error::input(format!("cannot read config {}: {e}", path.display())))?;
            RunConfig::parse(&text).with_context(|| format!("config {}", path.display()))?
        }
        None => RunConfig::default(),
    };
    cfg.apply_overrides(&common.overrides)?;
    flags(&mut cfg).map_err(|e| Error::input(format!("{e:#}")))?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(t) = common.threads {
        cfg.threads = t;
    }
    cfg.validate()?;
    if cfg.threads > 0 {
        // Only the first call in a process can size the global pool.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(cfg.threads).build_global();
    }
    Ok(cfg)
}

fn require_file(p: &Path) -> Result<()> {
    if p.is_file() {
        Ok(())
    } else {
        bail!(Error::input(format!("{} is not a readable file", p.display())))
    }
}

fn require_dir(p: &Path) -> Result<()> {
    if p.is_dir() {
        Ok(())
    } else {
        bail!(Error::input(format!("{} is not a directory", p.display())))
    }
}

fn create_dir(p: &Path) -> Result<()> {
    fs::create_dir_all(p).with_context(|| format!("creating {}", p.display()))
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn prep(cfg: &RunConfig, items: &Path, votes: &Path, edges: &Path, out: &Path) -> Result<()> {
    let prepared = prepare(items, votes, edges, &cfg.prep_config())?;
    prepared.save(out)?;
    manifest::write(
        out,
        "prep",
        cfg,
        &[items, votes, edges],
        &["vocab.txt", "bow.txt", "users.txt", "votes.tsv", "edges.tsv", "attribution.tsv", "stats.txt"],
    )?;
    print!("{}", prepared.report());
    Ok(())
}

fn load_topics(cfg: &RunConfig, dataset: &Dataset) -> Result<TopicModel> {
    let topics = match &cfg.init {
        Some(p) => TopicModel::load(p)?,
        None => fit_lda(&dataset.corpus, &cfg.lda_config())?,
    };
    if topics.k() != cfg.hp.k || topics.theta.len() != dataset.n_items() || topics.vocab_size() != dataset.corpus.vocab_size() {
        bail!(Error::input(format!(
            "topic model ({} topics, {} items, {} words) does not match k = {} and the dataset ({} items, {} words)",
            topics.k(),
            topics.theta.len(),
            topics.vocab_size(),
            cfg.hp.k,
            dataset.n_items(),
            dataset.corpus.vocab_size()
        )));
    }
    Ok(topics)
}

fn lda_init(cfg: &RunConfig, out: &Path) -> Result<()> {
    let data = cfg.require(&cfg.data, "data")?;
    require_dir(data)?;
    let dataset = Dataset::load(data)?;
    let topics = fit_lda(&dataset.corpus, &cfg.lda_config())?;
    create_dir(out)?;
    topics.save(&out.join("topics.json"))?;
    write_file(&out.join("topics.txt"), &format_topics(&topics.beta, &dataset.corpus.vocabulary, 10))?;
    manifest::write(out, "lda-init", cfg, &[data], &["topics.json", "topics.txt"])
}

fn trace_csv(trace: &[TraceRow]) -> String {
    let mut out = String::from("sweep,log_likelihood,delta\n");
    for r in trace {
        writeln!(out, "{},{},{}", r.sweep, r.log_likelihood, r.delta).unwrap();
    }
    out
}

fn train(cfg: &RunConfig) -> Result<()> {
    let data = cfg.require(&cfg.data, "data")?;
    let out = cfg.require(&cfg.out, "out")?;
    require_dir(data)?;
    if let Some(init) = &cfg.init {
        require_file(init)?;
    }
    let dataset = Dataset::load(data)?;
    let topics = load_topics(cfg, &dataset)?;
    let hp = cfg.hp;
    let (model, trace) = match cfg.model {
        ModelChoice::LaCtr => {
            let edges = build_attention_edges(&dataset.graph, cfg.neg_samples, cfg.seed);
            let attr = attribute_sources(&dataset.votes, &edges, cfg.attribution)?;
            let ratings = RatingView::from_attribution(&attr, &edges, dataset.n_items())?;
            let problem = Problem::new(&dataset.corpus, &edges, &ratings, &hp)?;
            let mut trainer = Trainer::new(problem, &topics, cfg.seed)?;
            trainer.run()?;
            let (state, trace) = trainer.into_parts();
            (TrainedModel::LaCtr(LaCtrModel { hp, edges, state }), trace)
        }
        ModelChoice::Ctr => {
            let ratings = UserItemRatings::from_votes(&dataset.votes, dataset.n_items())?;
            let (state, trace) = train_ctr(&dataset.corpus, &topics, &ratings, &hp, cfg.seed)?;
            (TrainedModel::Ctr(CtrModel { hp, state }), trace)
        }
        m => bail!(Error::input(format!("{} has nothing to train", m.label()))),
    };
    create_dir(out)?;
    model.save(&out.join("model.json"))?;
    write_file(&out.join("trace.csv"), &trace_csv(&trace))?;
    let mut inputs: Vec<&Path> = vec![data];
    inputs.extend(cfg.init.as_deref());
    manifest::write(out, "train", cfg, &inputs, &["model.json", "trace.csv"])?;
    let last = trace.last().expect("trace has the initial row");
    println!("sweeps\t{}\nlog_likelihood\t{}", last.sweep, last.log_likelihood);
    Ok(())
}

/// Parses `key=v1,v2,...`.
fn parse_sweep(spec: &str) -> Result<(String, Vec<String>)> {
    let (key, values) = spec
        .split_once('=')
        .ok_or_else(|| Error::input(format!("sweep {spec:?} is not key=v1,v2,...")))?;
    let values: Vec<String> = values.split(',').map(|v| v.trim().to_string()).filter(|v| !v.is_empty()).collect();
    if values.is_empty() {
        bail!(Error::input("sweep needs at least one value"));
    }
    Ok((key.trim().to_string(), values))
}

fn eval(cfg: &RunConfig, sweep: Option<&str>) -> Result<()> {
    let data = cfg.require(&cfg.data, "data")?;
    let out = cfg.require(&cfg.out, "out")?;
    require_dir(data)?;
    if let Some(init) = &cfg.init {
        require_file(init)?;
    }
    let mut models: Vec<Box<dyn Recommender>> = Vec::new();
    let lactr = |name: String, c: &RunConfig| -> Box<dyn Recommender> {
        Box::new(LaCtrRecommender {
            name,
            hp: c.hp,
            neg_samples: c.neg_samples,
            attribution: c.attribution,
            seed: c.seed,
        })
    };
    for &m in &cfg.models {
        match m {
            ModelChoice::LaCtr => match sweep {
                Some(spec) => {
                    let (key, values) = parse_sweep(spec)?;
                    for v in values {
                        let mut c = cfg.clone();
                        c.set(&key, &v).map_err(|e| Error::input(format!("sweep: {e:#}")))?;
                        c.validate()?;
                        models.push(lactr(format!("lactr[{key}={v}]"), &c));
                    }
                }
                None => models.push(lactr("lactr".into(), cfg)),
            },
            ModelChoice::Ctr => models.push(Box::new(CtrRecommender {
                name: "ctr".into(),
                hp: cfg.hp,
                seed: cfg.seed,
            })),
            ModelChoice::Popularity => models.push(Box::new(PopularityRecommender)),
            ModelChoice::Random => models.push(Box::new(RandomRecommender { seed: cfg.seed })),
        }
    }
    let dataset = Dataset::load(data)?;
    let topics = load_topics(cfg, &dataset)?;
    let plan = FoldPlan::new(&dataset.votes, dataset.n_items(), cfg.folds, cfg.mode, cfg.seed)?;
    let refs: Vec<&dyn Recommender> = models.iter().map(|m| m.as_ref()).collect();
    let result = run_experiment(
        &ExperimentData {
            corpus: &dataset.corpus,
            graph: &dataset.graph,
            votes: &dataset.votes,
            init: &topics,
        },
        &refs,
        &plan,
        &cfg.x_grid,
        cfg.aggregation,
    )?;
    create_dir(out)?;
    write_file(&out.join("results.csv"), &result.to_csv())?;
    let mut inputs: Vec<&Path> = vec![data];
    inputs.extend(cfg.init.as_deref());
    manifest::write(out, "eval", cfg, &inputs, &["results.csv"])?;
    for c in &result.curves {
        let cells: Vec<String> = result.xs.iter().zip(&c.mean).map(|(x, m)| format!("{x}:{m:.4}")).collect();
        println!("{}\t{}\t{}", c.model, c.latent.label(), cells.join(" "));
    }
    Ok(())
}

fn load_model(cfg: &RunConfig) -> Result<(Dataset, TrainedModel, PathBuf, PathBuf)> {
    let data = cfg.require(&cfg.data, "data")?.clone();
    let path = cfg.require(&cfg.model_path, "model_path")?.clone();
    require_dir(&data)?;
    require_file(&path)?;
    let dataset = Dataset::load(&data)?;
    let model = TrainedModel::load(&path)?;
    let st_users = lactr::eval::Scorer::n_users(&model);
    if st_users != dataset.n_users() || lactr::eval::Scorer::n_items(&model) != dataset.n_items() {
        bail!(Error::input("model and dataset dimensions differ"));
    }
    Ok((dataset, model, data, path))
}

fn user_id(dataset: &Dataset, name: &str) -> Result<usize> {
    dataset
        .votes
        .users
        .iter()
        .position(|u| u == name)
        .ok_or_else(|| Error::input(format!("unknown user {name:?}")).into())
}

fn predict(cfg: &RunConfig, user: &str, top: usize, latent: Latent, exclude_voted: bool) -> Result<()> {
    let (dataset, model, data, path) = load_model(cfg)?;
    let i = user_id(&dataset, user)?;
    let voted: HashSet<usize> = dataset.votes.votes.iter().filter(|v| v.user == i).map(|v| v.item).collect();
    let items: Vec<usize> = (0..dataset.n_items()).filter(|j| !exclude_voted || !voted.contains(j)).collect();
    let opts = ScoreOptions {
        aggregation: cfg.aggregation,
        ..ScoreOptions::new(cfg.mode, latent)
    };
    let ranking = predict_scores(&model, i, &items, &opts)?;
    let item_ids = dataset.item_ids();
    let mut text = String::from("rank\titem\tscore\tsource\n");
    for (r, s) in ranking.iter().take(top).enumerate() {
        let source = s.source.map(|l| dataset.votes.users[l].as_str()).unwrap_or("-");
        writeln!(text, "{}\t{}\t{}\t{}", r + 1, item_ids[s.item], s.score, source).unwrap();
    }
    print!("{text}");
    if let Some(out) = &cfg.out {
        create_dir(out)?;
        write_file(&out.join("predictions.tsv"), &text)?;
        manifest::write(out, "predict", cfg, &[&data, &path], &["predictions.tsv"])?;
    }
    Ok(())
}

fn simulate(cfg: &RunConfig) -> Result<()> {
    let out = cfg.require(&cfg.out, "out")?;
    let mut synth = cfg.synth_config();
    if cfg.target_rate > 0.0 {
        synth = calibrate_threshold(&synth, cfg.target_rate)?;
    }
    let data = generate(&synth)?;
    data.save(out)?;
    let stats = format!(
        "users\t{}\nitems\t{}\nvotes\t{}\nfollower_links\t{}\npositive_rate\t{:.6}\n",
        data.votes.n_users(),
        data.corpus.n_items(),
        data.votes.votes.len(),
        data.graph.n_edges(),
        data.positive_rate()
    );
    write_file(&out.join("stats.txt"), &stats)?;
    manifest::write(
        out,
        "simulate",
        cfg,
        &[],
        &["items.tsv", "votes.tsv", "edges.tsv", "truth.json", "synth.json", "stats.txt"],
    )?;
    print!("{stats}");
    Ok(())
}

fn inspect(cfg: &RunConfig, user: &str, topics: usize, influencers: usize, words: usize) -> Result<()> {
    let (dataset, model, data, path) = load_model(cfg)?;
    let TrainedModel::LaCtr(model) = model else {
        bail!(Error::input("inspect needs a limited-attention model"));
    };
    let i = user_id(&dataset, user)?;
    let report = inspect_user(&model, &dataset.corpus.vocabulary, i, topics, influencers, words)?;
    let text = report.format(&dataset.votes.users);
    print!("{text}");
    if let Some(out) = &cfg.out {
        create_dir(out)?;
        write_file(&out.join("report.txt"), &text)?;
        manifest::write(out, "inspect", cfg, &[&data, &path], &["report.txt"])?;
    }
    Ok(())
}
