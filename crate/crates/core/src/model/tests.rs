use std::collections::{BTreeMap, HashSet};

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::*;
use crate::corpus::{Corpus, Document, Vocabulary};
use crate::social::{AttentionEdge, AttentionEdgeSet, EdgeKind};
use crate::topics::TopicModel;

struct Fixture {
    corpus: Corpus,
    edges: AttentionEdgeSet,
    ratings: RatingView,
    hp: Hyperparams,
    state: ModelState,
}

impl Fixture {
    fn problem(&self) -> Problem<'_> {
        Problem::new(&self.corpus, &self.edges, &self.ratings, &self.hp).unwrap()
    }
}

fn normal_vec(rng: &mut ChaCha8Rng, k: usize, scale: f64) -> DVector<f64> {
    DVector::from_fn(k, |_, _| {
        let z: f64 = StandardNormal.sample(rng);
        scale * z
    })
}

fn simplex(rng: &mut ChaCha8Rng, k: usize) -> DVector<f64> {
    let x = DVector::from_fn(k, |_, _| rng.random_range(0.05..1.0));
    let total = x.sum();
    x / total
}

fn test_hp(k: usize) -> Hyperparams {
    Hyperparams {
        k,
        lambda_u: 0.5,
        lambda_v: 2.0,
        lambda_s: 0.3,
        lambda_phi: 1.5,
        a_r: 1.0,
        b_r: 0.05,
        a_phi: 1.0,
        b_phi: 0.1,
        ..Hyperparams::default()
    }
}

/// A random instance with followee and sampled edges, random positives and a random state.
fn fixture(n_users: usize, n_items: usize, k: usize, m: usize, seed: u64) -> Fixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut list = Vec::new();
    for i in 0..n_users {
        for l in 0..n_users {
            if i != l && rng.random_bool(0.4) {
                let kind = if rng.random_bool(0.7) { EdgeKind::Followee } else { EdgeKind::Sampled };
                list.push(AttentionEdge { user: i, source: l, kind });
            }
        }
    }
    let edges = AttentionEdgeSet::from_edges(n_users, list).unwrap();
    let pairs: Vec<(usize, usize)> = (0..edges.len())
        .flat_map(|e| (0..n_items).map(move |j| (e, j)))
        .filter(|_| rng.random_bool(0.25))
        .collect();
    let ratings = RatingView::from_pairs(edges.len(), n_items, pairs).unwrap();
    let vocab = Vocabulary::new((0..m).map(|w| format!("w{w}")).collect()).unwrap();
    let docs = (0..n_items)
        .map(|j| {
            let mut c = BTreeMap::new();
            for _ in 0..6 {
                *c.entry(rng.random_range(0..m)).or_insert(0) += 1;
            }
            Document::from_counts(format!("d{j}"), c)
        })
        .collect();
    let corpus = Corpus::new(vocab, docs).unwrap();
    let theta: Vec<_> = (0..n_items).map(|_| simplex(&mut rng, k)).collect();
    let beta_rows: Vec<_> = (0..k).map(|_| simplex(&mut rng, m)).collect();
    let state = ModelState {
        u: (0..n_users).map(|_| normal_vec(&mut rng, k, 0.7)).collect(),
        s: (0..edges.len()).map(|_| rng.random_range(-1.0..1.0)).collect(),
        phi: (0..edges.len()).map(|_| normal_vec(&mut rng, k, 0.7)).collect(),
        v: theta.iter().map(|t| t + normal_vec(&mut rng, k, 0.3)).collect(),
        theta,
        beta: DMatrix::from_fn(k, m, |r, c| beta_rows[r][c]),
    };
    Fixture {
        corpus,
        edges,
        ratings,
        hp: test_hp(k),
        state,
    }
}

/// Literal evaluation of every term, one rating at a time.
fn naive_log_likelihood(f: &Fixture, st: &ModelState) -> f64 {
    let hp = &f.hp;
    let mut ll = 0.0;
    for u in &st.u {
        ll -= 0.5 * hp.lambda_u * u.iter().map(|x| x * x).sum::<f64>();
    }
    for (v, t) in st.v.iter().zip(&st.theta) {
        ll -= 0.5 * hp.lambda_v * v.iter().zip(t.iter()).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
    }
    for (j, doc) in f.corpus.documents.iter().enumerate() {
        for &(w, c) in &doc.counts {
            let mix: f64 = (0..hp.k).map(|k| st.theta[j][k] * st.beta[(k, w)]).sum();
            ll += c as f64 * mix.ln();
        }
    }
    for s in &st.s {
        ll -= 0.5 * hp.lambda_s * s * s;
    }
    for e in 0..f.edges.len() {
        for j in 0..f.corpus.n_items() {
            let positive = f.ratings.items_of_edge(e).contains(&j);
            let (c, r) = if positive { (hp.a_r, 1.0) } else { (hp.b_r, 0.0) };
            let x: f64 = (0..hp.k).map(|k| st.phi[e][k] * st.v[j][k]).sum();
            ll -= 0.5 * c * (r - x).powi(2);
        }
        let edge = f.edges.edge(e);
        let c = hp.phi_confidence(edge.kind);
        let d: f64 = (0..hp.k).map(|k| (st.phi[e][k] - st.s[e] * st.u[edge.user][k]).powi(2)).sum();
        ll -= 0.5 * hp.lambda_phi * c * d;
    }
    ll
}

fn ll(f: &Fixture, st: &ModelState) -> f64 {
    log_likelihood(&f.problem(), st).unwrap().total()
}

#[test]
fn objective_matches_naive_summation() {
    for seed in 0..5 {
        let f = fixture(4, 3, 2, 5, seed);
        let fast = ll(&f, &f.state);
        let slow = naive_log_likelihood(&f, &f.state);
        assert!((fast - slow).abs() < 1e-10 * slow.abs().max(1.0), "{fast} vs {slow}");
    }
}

fn one_edge_one_item(positive: bool) -> Fixture {
    let edges = AttentionEdgeSet::from_edges(1, []).unwrap();
    let ratings = RatingView::from_pairs(1, 1, if positive { vec![(0, 0)] } else { vec![] }).unwrap();
    let vocab = Vocabulary::new(vec!["w".into()]).unwrap();
    let corpus = Corpus::new(vocab, vec![Document::from_counts("d", BTreeMap::new())]).unwrap();
    let zero = DVector::zeros(1);
    Fixture {
        corpus,
        edges,
        ratings,
        hp: Hyperparams {
            k: 1,
            lambda_u: 0.01,
            lambda_s: 0.01,
            lambda_phi: 1.0,
            ..Hyperparams::default()
        },
        state: ModelState {
            u: vec![zero.clone()],
            s: vec![0.0],
            phi: vec![zero.clone()],
            v: vec![zero.clone()],
            theta: vec![zero],
            beta: DMatrix::from_element(1, 1, 1.0),
        },
    }
}

#[test]
fn hand_evaluated_objectives() {
    assert_eq!(ll(&one_edge_one_item(false), &one_edge_one_item(false).state), 0.0);
    let f = one_edge_one_item(true);
    assert_eq!(ll(&f, &f.state), -0.5);
}

fn scalar(x: f64) -> DVector<f64> {
    DVector::from_element(1, x)
}

/// Central difference of the objective along one coordinate of a state.
fn fd<F>(f: &Fixture, st: &ModelState, h: f64, mut poke: F) -> f64
where
    F: FnMut(&mut ModelState, f64),
{
    let mut plus = st.clone();
    poke(&mut plus, h);
    let mut minus = st.clone();
    poke(&mut minus, -h);
    (ll(f, &plus) - ll(f, &minus)) / (2.0 * h)
}

#[test]
fn scalar_interest_and_influence_closed_forms() {
    let mut f = one_edge_one_item(false);
    f.state.s[0] = 2.0;
    f.state.phi[0] = scalar(3.0);
    let p = f.problem();
    let u = update_user_interest(&p, &f.state, 0);
    assert!((u[0] - 6.0 / 4.01).abs() < 1e-15);
    let mut st = f.state.clone();
    st.u[0] = u;
    assert!(fd(&f, &st, 1e-5, |s, h| s.u[0][0] += h).abs() < 1e-8);

    let mut g = one_edge_one_item(false);
    g.state.u[0] = scalar(2.0);
    g.state.phi[0] = scalar(3.0);
    let s = update_influence(&g.problem(), &g.state, 0);
    assert!((s - 6.0 / 4.01).abs() < 1e-15);
    let mut st = g.state.clone();
    st.s[0] = s;
    assert!(fd(&g, &st, 1e-5, |s, h| s.s[0] += h).abs() < 1e-8);
}

#[test]
fn degenerate_interest_and_influence() {
    let f = fixture(3, 4, 3, 5, 1);
    let mut st = f.state.clone();
    for e in f.edges.range(1) {
        st.s[e] = 0.0;
    }
    assert_eq!(update_user_interest(&f.problem(), &st, 1), DVector::zeros(3));
    st.u[2] = DVector::zeros(3);
    for e in f.edges.range(2) {
        assert_eq!(update_influence(&f.problem(), &st, e), 0.0);
    }
    st.u[0] = DVector::from_vec(vec![1.0, 0.0, 0.0]);
    let e = f.edges.self_edge(0);
    st.phi[e] = DVector::from_vec(vec![0.0, 2.0, -1.0]);
    assert_eq!(update_influence(&f.problem(), &st, e), 0.0);
}

#[test]
fn scalar_attention_closed_form() {
    let mut f = one_edge_one_item(true);
    f.hp.b_r = 1e-300;
    f.state.v[0] = scalar(1.0);
    let p = f.problem();
    let gram = item_gram(&p, &f.state);
    let phi = update_attention(&p, &f.state, 0, &gram).unwrap();
    assert!((phi[0] - 0.5).abs() < 1e-12);
}

#[test]
fn prior_means_without_positives() {
    let mut f = fixture(3, 4, 2, 5, 2);
    f.ratings = RatingView::from_pairs(f.edges.len(), 4, []).unwrap();
    f.hp.b_r = 1e-300;
    let p = f.problem();
    let gram = item_gram(&p, &f.state);
    for e in 0..f.edges.len() {
        let phi = update_attention(&p, &f.state, e, &gram).unwrap();
        let mean = f.state.s[e] * &f.state.u[f.edges.edge(e).user];
        assert!((phi - mean).amax() < 1e-12);
    }
    let gram = attention_gram(&p, &f.state);
    for j in 0..4 {
        let v = update_item(&p, &f.state, j, &gram).unwrap();
        assert!((v - &f.state.theta[j]).amax() < 1e-12);
    }
}

/// Normal equations assembled entry by entry over every (edge, item) pair.
fn naive_attention(f: &Fixture, st: &ModelState, e: usize) -> DVector<f64> {
    let hp = &f.hp;
    let k = hp.k;
    let c_phi = hp.phi_confidence(f.edges.edge(e).kind);
    let mut a = DMatrix::<f64>::zeros(k, k);
    let mut b = DVector::<f64>::zeros(k);
    for j in 0..f.corpus.n_items() {
        let pos = f.ratings.items_of_edge(e).contains(&j);
        let (c, r) = if pos { (hp.a_r, 1.0) } else { (hp.b_r, 0.0) };
        for x in 0..k {
            for y in 0..k {
                a[(x, y)] += c * st.v[j][x] * st.v[j][y];
            }
            b[x] += c * r * st.v[j][x];
        }
    }
    let u = &st.u[f.edges.edge(e).user];
    for x in 0..k {
        a[(x, x)] += hp.lambda_phi * c_phi;
        b[x] += hp.lambda_phi * c_phi * st.s[e] * u[x];
    }
    a.lu().solve(&b).unwrap()
}

fn naive_item(f: &Fixture, st: &ModelState, j: usize) -> DVector<f64> {
    let hp = &f.hp;
    let k = hp.k;
    let mut a = DMatrix::<f64>::zeros(k, k);
    let mut b = DVector::<f64>::zeros(k);
    for e in 0..f.edges.len() {
        let pos = f.ratings.items_of_edge(e).contains(&j);
        let (c, r) = if pos { (hp.a_r, 1.0) } else { (hp.b_r, 0.0) };
        for x in 0..k {
            for y in 0..k {
                a[(x, y)] += c * st.phi[e][x] * st.phi[e][y];
            }
            b[x] += c * r * st.phi[e][x];
        }
    }
    for x in 0..k {
        a[(x, x)] += hp.lambda_v;
        b[x] += hp.lambda_v * st.theta[j][x];
    }
    a.lu().solve(&b).unwrap()
}

#[test]
fn gram_updates_match_dense_assembly() {
    for (seed, k) in [(0, 2), (1, 2), (2, 3), (3, 1)] {
        let f = fixture(5, 6, k, 7, seed);
        let p = f.problem();
        let gram_r = item_gram(&p, &f.state);
        for e in 0..f.edges.len() {
            let fast = update_attention(&p, &f.state, e, &gram_r).unwrap();
            assert!((fast - naive_attention(&f, &f.state, e)).amax() < 1e-8);
        }
        let gram_phi = attention_gram(&p, &f.state);
        for j in 0..6 {
            let fast = update_item(&p, &f.state, j, &gram_phi).unwrap();
            assert!((fast - naive_item(&f, &f.state, j)).amax() < 1e-8);
        }
    }
}

#[test]
fn nan_input_names_the_block() {
    let mut f = fixture(3, 3, 2, 4, 3);
    f.state.theta[1][0] = f64::NAN;
    let p = f.problem();
    let err = update_item(&p, &f.state, 1, &attention_gram(&p, &f.state)).unwrap_err();
    assert!(err.is_numeric());
    assert!(err.to_string().contains("item v[1]"), "{err}");
    let err = log_likelihood(&p, &f.state).unwrap_err();
    assert!(err.to_string().contains("item offset prior"), "{err}");
}

/// Every block update zeroes the partial gradient of its own block.
#[test]
fn block_updates_are_stationary() {
    let f = fixture(4, 5, 3, 6, 4);
    let p = f.problem();
    let h = 1e-5;
    let tol = 1e-6;
    let mut st = f.state.clone();
    let gram = item_gram(&p, &st);
    for e in 0..f.edges.len() {
        st.phi[e] = update_attention(&p, &st, e, &gram).unwrap();
        for k in 0..3 {
            assert!(fd(&f, &st, h, |s, d| s.phi[e][k] += d).abs() < tol);
        }
    }
    for e in 0..f.edges.len() {
        st.s[e] = update_influence(&p, &st, e);
        assert!(fd(&f, &st, h, |s, d| s.s[e] += d).abs() < tol);
    }
    for i in 0..4 {
        st.u[i] = update_user_interest(&p, &st, i);
        for k in 0..3 {
            assert!(fd(&f, &st, h, |s, d| s.u[i][k] += d).abs() < tol);
        }
    }
    let gram = attention_gram(&p, &st);
    for j in 0..5 {
        st.v[j] = update_item(&p, &st, j, &gram).unwrap();
        for k in 0..3 {
            assert!(fd(&f, &st, h, |s, d| s.v[j][k] += d).abs() < tol);
        }
    }
}

fn doc(counts: &[(usize, u32)]) -> Document {
    Document::from_counts("d", counts.iter().copied().collect())
}

#[test]
fn theta_matches_simplex_grid_search() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..20 {
        let beta_rows = [simplex(&mut rng, 4), simplex(&mut rng, 4)];
        let beta = DMatrix::from_fn(2, 4, |r, c| beta_rows[r][c]);
        let d = doc(&[(0, rng.random_range(1..5)), (1, rng.random_range(0..5)), (3, rng.random_range(1..4))]);
        let v = DVector::from_vec(vec![rng.random_range(-0.5..1.5), rng.random_range(-0.5..1.5)]);
        let lambda_v = rng.random_range(0.1..20.0);
        let start = simplex(&mut rng, 2);
        let theta = update_theta(&start, &v, &beta, &d, lambda_v);
        assert!((theta.sum() - 1.0).abs() < 1e-9 && theta.min() >= 0.0);
        let got = theta_objective(&theta, &v, &beta, &d, lambda_v);
        assert!(got >= theta_objective(&start, &v, &beta, &d, lambda_v));
        let best = (0..=1000)
            .map(|n| {
                let t = n as f64 / 1000.0;
                theta_objective(&DVector::from_vec(vec![t, 1.0 - t]), &v, &beta, &d, lambda_v)
            })
            .fold(f64::NEG_INFINITY, f64::max);
        assert!(got >= best - 5e-3, "{got} vs grid {best}");
    }
}

#[test]
fn theta_at_em_fixed_point_stays_put_without_prior() {
    let beta = DMatrix::from_row_slice(3, 4, &[0.5, 0.2, 0.2, 0.1, 0.1, 0.6, 0.1, 0.2, 0.25, 0.25, 0.25, 0.25]);
    let d = doc(&[(0, 3), (1, 2), (3, 1)]);
    let mut theta = DVector::from_element(3, 1.0 / 3.0);
    for _ in 0..20000 {
        let mut next = DVector::zeros(3);
        for &(w, c) in &d.counts {
            let col = beta.column(w);
            let mix = col.dot(&theta);
            next += (c as f64 / mix) * col.component_mul(&theta);
        }
        theta = &next / next.sum();
    }
    let moved = update_theta(&theta, &DVector::zeros(3), &beta, &d, 0.0);
    assert!((moved - &theta).amax() < 1e-6);
}

#[test]
fn single_word_pulls_theta_to_its_topic() {
    let beta = DMatrix::from_row_slice(2, 2, &[0.9, 0.1, 0.2, 0.8]);
    let d = doc(&[(1, 1)]);
    let theta = DVector::from_vec(vec![0.5, 0.5]);
    let moved = update_theta(&theta, &theta, &beta, &d, 1.0);
    assert!(moved[1] > 0.5);
    assert!(theta_objective(&moved, &theta, &beta, &d, 1.0) >= theta_objective(&theta, &theta, &beta, &d, 1.0));
}

#[test]
fn rating_term_is_invariant_to_trading_scale_between_phi_and_v() {
    let f = fixture(4, 5, 3, 6, 6);
    let p = f.problem();
    let c = 2.5;
    let phi: Vec<_> = f.state.phi.iter().map(|x| c * x).collect();
    let v: Vec<_> = f.state.v.iter().map(|x| x / c).collect();
    let before = rating_term(&p, &f.state.phi, &f.state.v);
    assert!((rating_term(&p, &phi, &v) - before).abs() < 1e-12 * before.abs());
    let scaled = ModelState {
        phi,
        v,
        ..f.state.clone()
    };
    let a = log_likelihood(&p, &f.state).unwrap();
    let b = log_likelihood(&p, &scaled).unwrap();
    assert!((a.attention - b.attention).abs() > 1e-6);
}

fn warm_start(f: &Fixture) -> TopicModel {
    TopicModel {
        theta: f.state.theta.clone(),
        beta: f.state.beta.clone(),
    }
}

#[test]
fn every_block_update_is_monotone() {
    for theta_mode in [ThetaMode::Optimize, ThetaMode::Frozen] {
        let mut f = fixture(5, 6, 3, 8, 7);
        f.hp.theta_mode = theta_mode;
        let p = f.problem();
        let mut trainer = Trainer::new(p, &warm_start(&f), 3).unwrap();
        let mut prev = trainer.trace()[0].log_likelihood;
        let mut blocks = HashSet::new();
        for _ in 0..5 {
            trainer
                .sweep_observed(|block, st| {
                    let now = log_likelihood(&p, st)?.total();
                    assert!(now >= prev - 1e-10 * prev.abs(), "{block:?}: {prev} -> {now}");
                    assert!(st.max_row_sum_error() < 1e-9);
                    blocks.insert(std::mem::discriminant(&block));
                    prev = now;
                    Ok(())
                })
                .unwrap();
        }
        let expected = if theta_mode == ThetaMode::Optimize { 7 } else { 5 };
        assert_eq!(blocks.len(), expected);
        if theta_mode == ThetaMode::Frozen {
            assert_eq!(trainer.state().theta, f.state.theta);
        }
    }
}

#[test]
fn parallel_sweep_equals_sequential_sweep() {
    let f = fixture(6, 7, 3, 8, 8);
    let p = f.problem();
    let init = warm_start(&f);
    let mut a = Trainer::new(p, &init, 5).unwrap();
    let mut b = Trainer::new(p, &init, 5).unwrap();
    for _ in 0..3 {
        let la = a.sweep().unwrap();
        let lb = b.sweep_observed(|_, _| Ok(())).unwrap();
        assert_eq!(la.to_bits(), lb.to_bits());
    }
    assert_eq!(a.state(), b.state());
}

#[test]
fn orientation_makes_weighted_influence_non_negative() {
    let f = fixture(5, 4, 2, 6, 9);
    let p = f.problem();
    let mut st = f.state.clone();
    let before = ll(&f, &st);
    for i in 0..5 {
        orient_user(&p, &mut st, i);
        let total: f64 = f.edges.range(i).map(|e| p.phi_confidence(e) * st.s[e]).sum();
        assert!(total >= 0.0);
    }
    assert!((ll(&f, &st) - before).abs() < 1e-12 * before.abs());
}

#[test]
fn training_stops_and_reports_a_trace() {
    let mut f = fixture(4, 5, 2, 6, 10);
    f.hp.max_sweeps = 7;
    f.hp.tol = 0.0;
    let (state, trace) = train(f.problem(), &warm_start(&f), 1).unwrap();
    assert_eq!(trace.len(), 8);
    assert!(state.is_finite());
    for w in trace.windows(2) {
        assert_eq!(w[1].delta, w[1].log_likelihood - w[0].log_likelihood);
        assert!(w[1].delta >= -1e-10 * w[0].log_likelihood.abs());
    }
    let bad = TopicModel {
        theta: f.state.theta.clone(),
        beta: DMatrix::from_element(3, 6, 1.0 / 6.0),
    };
    assert!(train(f.problem(), &bad, 1).is_err());
}

#[test]
fn initialization_is_small_seeded_noise() {
    let f = fixture(4, 5, 3, 6, 12);
    let a = ModelState::initialize(&warm_start(&f), &f.edges, 9);
    let b = ModelState::initialize(&warm_start(&f), &f.edges, 9);
    assert_eq!(a, b);
    assert_eq!(a.v, f.state.theta);
    assert!(a.u.iter().chain(&a.phi).all(|x| x.amax() < 10.0 * INIT_STDDEV));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn one_sweep_never_lowers_the_objective(seed in any::<u64>(), k in 1usize..4) {
        let f = fixture(4, 4, k, 5, seed);
        let mut trainer = Trainer::new(f.problem(), &warm_start(&f), seed).unwrap();
        let before = trainer.trace()[0].log_likelihood;
        let after = trainer.sweep().unwrap();
        prop_assert!(after >= before - 1e-10 * before.abs());
        prop_assert!(trainer.state().max_row_sum_error() < 1e-9);
    }
}

#[test]
fn zero_state_without_words_or_positives_has_zero_objective() {
    let f = fixture(3, 4, 2, 5, 14);
    let corpus = Corpus::new(
        f.corpus.vocabulary.clone(),
        (0..4).map(|j| Document::from_counts(format!("d{j}"), BTreeMap::new())).collect(),
    )
    .unwrap();
    let ratings = RatingView::from_pairs(f.edges.len(), 4, []).unwrap();
    let p = Problem::new(&corpus, &f.edges, &ratings, &f.hp).unwrap();
    let zero = DVector::zeros(2);
    let st = ModelState {
        u: vec![zero.clone(); 3],
        s: vec![0.0; f.edges.len()],
        phi: vec![zero.clone(); f.edges.len()],
        v: vec![zero.clone(); 4],
        theta: vec![zero; 4],
        beta: f.state.beta.clone(),
    };
    assert_eq!(log_likelihood(&p, &st).unwrap().total(), 0.0);
}
