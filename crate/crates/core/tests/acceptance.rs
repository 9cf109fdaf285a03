//! Acceptance gate: one check per criterion, each printing a PASS/FAIL line.

mod common;

use std::time::{Duration, Instant};

use bbm::corpus::{BitermVocabulary, BobDocument, Corpus, Document, Vocabulary};
use bbm::eval::{convert_topic_elements, lpp, npmi_for_word_lists, LdaProportions, TopicWordDist};
use bbm::hdp_b::{
    expected_stick_weights, hdp_batch_stats, hdp_global_update, hdp_local_step, HdpBModel,
    HdpHyper, HdpStats,
};
use bbm::lda_b::{
    corpus_elbo, document_elbo, e_step, local_vb, local_vb_observed, sufficient_stats,
    update_gamma, update_phi, update_phi_tilde, LdaBModel, LocalOptions, LocalState, TopicPrior,
};
use bbm::math::digamma;
use bbm::streaming::{kps_step, svb_step, svi_step, train_lda, LearnerConfig, LearnerMode};
use bbm::Parallelism;
use common::*;
use ndarray::{array, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn max_abs_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn golden_bob() -> Check {
    let start = Instant::now();
    let doc = Document::from_counts([(0, 2), (1, 2), (2, 4)]);
    let bob = BobDocument::from_document(&doc);
    let elements = bob.ordered_elements();
    let freqs: Vec<f64> = elements.iter().map(|e| e.1).collect();
    let expected = vec![
        ((0, 0), 2.0),
        ((1, 1), 2.0),
        ((2, 2), 4.0),
        ((0, 1), 2.0),
        ((0, 2), 2.0),
        ((1, 0), 2.0),
        ((1, 2), 2.0),
        ((2, 0), 2.0),
        ((2, 1), 2.0),
    ];
    ensure(elements == expected, || format!("elements {elements:?}"))?;
    ensure(bob.term_tokens() == 8.0 && bob.biterm_tokens() == 12.0, || {
        "N_d or M_d wrong".into()
    })?;
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(1), || format!("took {elapsed:?}"))?;
    Ok(format!("9 elements, frequencies {freqs:?}"))
}

fn twenty_documents() -> (LdaBModel, Vec<BobDocument>) {
    let model = LdaBModel::init(5, 50, 0.2, TopicPrior::Symmetric(0.05), 11).unwrap();
    let docs = random_documents(20, 50, 3..=12, 12)
        .iter()
        .map(BobDocument::from_document)
        .collect();
    (model, docs)
}

fn fixed_point() -> Check {
    let (model, docs) = twenty_documents();
    let ctx = model.context();
    let opts = LocalOptions {
        tol: 1e-11,
        max_iters: 10_000,
    };
    let mut worst = 0.0f64;
    for (d, doc) in docs.iter().enumerate() {
        let s = local_vb(doc, &ctx, &opts).map_err(|e| e.to_string())?;
        ensure(s.converged, || format!("document {d} did not converge"))?;
        let phi = update_phi(doc, &ctx, &s.gamma).unwrap();
        let phi_t = update_phi_tilde(doc, &ctx, &s.gamma).unwrap();
        let gamma = update_gamma(doc, ctx.alpha(), &phi, &phi_t);
        let moves = [
            max_abs_diff(&phi, &s.phi),
            max_abs_diff(&phi_t, &s.phi_tilde),
            (&gamma - &s.gamma).mapv(f64::abs).fold(0.0, |m: f64, &x| m.max(x)),
        ];
        worst = moves.into_iter().fold(worst, f64::max);
    }
    ensure(worst <= 1e-8, || format!("extra sweep moved a parameter by {worst:e}"))?;
    Ok(format!("max move after an extra sweep {worst:.2e}"))
}

fn elbo_monotone() -> Check {
    let (model, docs) = twenty_documents();
    let ctx = model.context();
    let opts = LocalOptions {
        tol: 1e-10,
        max_iters: 500,
    };
    let mut worst_drop = 0.0f64;
    let mut sweeps = 0;
    for doc in &docs {
        let mut prev = f64::NEG_INFINITY;
        local_vb_observed(doc, &ctx, &opts, |s| {
            let l = document_elbo(doc, &ctx, s);
            worst_drop = worst_drop.max(prev - l);
            prev = l;
            sweeps += 1;
        })
        .map_err(|e| e.to_string())?;
    }
    ensure(worst_drop <= 1e-9, || format!("ELBO dropped by {worst_drop:e}"))?;
    Ok(format!("{sweeps} sweeps, largest decrease {:.2e}", worst_drop.max(0.0)))
}

fn gradient_check() -> Check {
    let start = Instant::now();
    let eta = 0.1;
    let init = LdaBModel::init(2, 5, 0.5, TopicPrior::Symmetric(eta), 4).unwrap();
    let docs: Vec<BobDocument> = random_documents(6, 5, 3..=8, 5)
        .iter()
        .map(BobDocument::from_document)
        .collect();
    let locals: Vec<LocalState> = e_step(&docs, &init.context(), &LocalOptions::default(), Parallelism::Sequential)
        .unwrap()
        .into_iter()
        .map(Option::unwrap)
        .collect();
    let optimum = sufficient_stats(&docs, &locals, 2, 5).mapv(|s| s + eta);
    let bound = |lambda: &Array2<f64>| {
        let m = LdaBModel::new(lambda.clone(), init.alpha().clone(), TopicPrior::Symmetric(eta)).unwrap();
        corpus_elbo(&docs, &m, &locals)
    };
    let relative_gradients = |lambda: &Array2<f64>| {
        let l0 = bound(lambda).abs();
        let mut out = Vec::new();
        for k in 0..2 {
            for v in 0..5 {
                let h = 1e-5 * lambda[[k, v]];
                let mut up = lambda.clone();
                up[[k, v]] += h;
                let mut down = lambda.clone();
                down[[k, v]] -= h;
                let g = (bound(&up) - bound(&down)) / (2.0 * h);
                out.push(g.abs() * lambda[[k, v]] / l0);
            }
        }
        out
    };
    let at_optimum = relative_gradients(&optimum).into_iter().fold(0.0, f64::max);
    ensure(at_optimum <= 1e-4, || format!("relative gradient {at_optimum:e} at the closed form"))?;
    let perturbed = optimum.mapv(|x| x * 1.3);
    let off = relative_gradients(&perturbed).into_iter().fold(0.0, f64::max);
    // Away from the closed form the same check must fail.
    ensure(off > 1e-4, || format!("check has no power: {off:e} away from the optimum"))?;
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(10), || format!("took {elapsed:?}"))?;
    Ok(format!("max relative gradient {at_optimum:.2e} (perturbed: {off:.2e})"))
}

fn svi_batch_equivalence() -> Check {
    let eta = 0.02;
    let mut model = LdaBModel::init(3, 20, 0.3, TopicPrior::Symmetric(eta), 8).unwrap();
    let docs: Vec<BobDocument> = random_documents(30, 20, 2..=10, 9)
        .iter()
        .map(BobDocument::from_document)
        .collect();
    let opts = LocalOptions::default();
    let locals: Vec<LocalState> = e_step(&docs, &model.context(), &opts, Parallelism::Sequential)
        .unwrap()
        .into_iter()
        .map(Option::unwrap)
        .collect();
    let batch = sufficient_stats(&docs, &locals, 3, 20).mapv(|s| eta + s);
    svi_step(&mut model, &docs, docs.len() as f64, 1.0, &opts, Parallelism::Rayon).map_err(|e| e.to_string())?;
    let diff = max_abs_diff(model.lambda(), &batch);
    ensure(diff < 1e-10, || format!("max entrywise difference {diff:e}"))?;
    Ok(format!("max entrywise difference {diff:.2e}"))
}

fn degenerate_equivalence() -> Check {
    let (k, v, alpha, eta, seed) = (4, 30, 0.25, 0.05, 21);
    let raw = random_documents(60, v, 1..=9, 22);
    let bow: Vec<BobDocument> = raw.iter().map(BobDocument::terms_only).collect();
    let config = LearnerConfig {
        mode: LearnerMode::Svi,
        tau: 2.0,
        kappa: 0.7,
        batch_size: 15,
        corpus_size: 600,
        ..Default::default()
    };
    let mut model = LdaBModel::init(k, v, alpha, TopicPrior::Symmetric(eta), seed).unwrap();
    train_lda(&mut model, &bow, &config, None, |_, _| Ok(None)).map_err(|e| e.to_string())?;
    let mut oracle = OnlineLda {
        lambda: seeded_lambda(k, v, eta, seed),
        alpha,
        eta,
        tau: 2.0,
        kappa: 0.7,
        corpus_size: 600.0,
        tol: 1e-3,
        max_iters: 100,
        steps: 0,
    };
    for batch in raw.chunks(15) {
        oracle.step(batch);
    }
    let lda_bits = (0..k).all(|t| (0..v).all(|w| model.lambda()[[t, w]].to_bits() == oracle.lambda[t][w].to_bits()));
    ensure(lda_bits, || "LDA-B on BoW input differs from online LDA".into())?;

    let hyper = HdpHyper {
        num_topics: 6,
        doc_truncation: 3,
        omega: 1.5,
        alpha: 0.8,
        eta: 0.05,
    };
    let mut hdp = HdpBModel::init(hyper, v, 3).unwrap();
    let opts = LocalOptions::default();
    let warmup = hdp_batch_stats(&bow[..20], &hdp.context(), &opts, Parallelism::Sequential).unwrap();
    hdp_global_update(&mut hdp, &warmup, 200.0, 0.6).unwrap();
    let ctx = hdp.context();
    let elog_beta = hdp.expected_log_beta();
    let elog_corpus = hdp.corpus_stick_expectations().to_vec();
    for (d, (doc, plain)) in bow.iter().zip(&raw).enumerate() {
        let got = hdp_local_step(doc, &ctx, &opts).map_err(|e| e.to_string())?;
        let want = online_hdp_locals(plain, &elog_beta, &elog_corpus, 0.8, 3, 1e-3, 100);
        let same = got.iterations == want.iterations
            && got.zeta.rows().into_iter().zip(&want.zeta).all(|(a, b)| bits_eq(a.iter(), b))
            && got.phi.rows().into_iter().zip(&want.phi).all(|(a, b)| bits_eq(a.iter(), b))
            && bits_eq(got.gamma1.iter(), &want.gamma1)
            && bits_eq(got.gamma2.iter(), &want.gamma2);
        ensure(same, || format!("HDP-B locals differ from online HDP on document {d}"))?;
    }
    Ok(format!("LDA: {} steps bit-identical; HDP: {} documents bit-identical", oracle.steps, bow.len()))
}

fn bits_eq<'a>(a: impl Iterator<Item = &'a f64>, b: &[f64]) -> bool {
    let a: Vec<u64> = a.map(|x| x.to_bits()).collect();
    let b: Vec<u64> = b.iter().map(|x| x.to_bits()).collect();
    a == b
}

fn kps_svb_separation() -> Check {
    let eta = 0.03;
    let b = 7;
    let start = LdaBModel::init(3, 8, 0.5, TopicPrior::Symmetric(eta), 2).unwrap();
    let prior = TopicPrior::Symmetric(eta);
    let opts = LocalOptions::default();
    let mut kps = start.clone();
    let mut svb = start.clone();
    let mut iterative = start.lambda().clone();
    for _ in 0..b {
        kps_step(&mut kps, &[], &prior, &opts, Parallelism::Rayon).map_err(|e| e.to_string())?;
        svb_step(&mut svb, &[], &opts, Parallelism::Rayon).map_err(|e| e.to_string())?;
        iterative.mapv_inplace(|x| x + eta);
    }
    ensure(svb.lambda() == start.lambda(), || "SVB moved on empty minibatches".into())?;
    ensure(kps.lambda() == &iterative, || "KPS differs from λ0 + η added b times".into())?;
    let closed = start.lambda().mapv(|x| x + b as f64 * eta);
    let diff = max_abs_diff(kps.lambda(), &closed);
    ensure(diff <= 1e-14, || format!("KPS differs from λ0 + bη by {diff:e}"))?;
    Ok(format!("b={b}: SVB unchanged, KPS = λ0 + bη (rounding {diff:.1e})"))
}

fn conversion_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = 0.0f64;
    for _ in 0..300 {
        let k = rng.random_range(1..=3);
        let v = rng.random_range(1..=6);
        let merged: Vec<(usize, usize)> = (0..v)
            .flat_map(|i| (i..v).map(move |j| (i, j)))
            .collect();
        let mut m = Array2::from_shape_fn((k, merged.len()), |_| rng.random::<f64>());
        for mut row in m.rows_mut() {
            let s = row.sum();
            row.mapv_inplace(|x| x / s);
        }
        let got = convert_topic_elements(&m, &merged, v).map_err(|e| e.to_string())?;
        let mut ordered = Vec::new();
        let mut ordered_cols = Vec::new();
        for (e, &(i, j)) in merged.iter().enumerate() {
            if i == j {
                ordered.push((i, j));
                ordered_cols.push((e, 1.0));
            } else {
                ordered.push((i, j));
                ordered.push((j, i));
                ordered_cols.push((e, 0.5));
                ordered_cols.push((e, 0.5));
            }
        }
        let om = Array2::from_shape_fn((k, ordered.len()), |(r, c)| m[[r, ordered_cols[c].0]] * ordered_cols[c].1);
        let got_ordered = convert_topic_elements(&om, &ordered, v).map_err(|e| e.to_string())?;
        for t in 0..k {
            let row_sum: f64 = got.matrix().row(t).sum();
            ensure((row_sum - 1.0).abs() <= 1e-9, || format!("row sums to {row_sum}"))?;
            for w in 0..v {
                // Each element holds two word slots; word w owns the slots it fills.
                let brute: f64 = merged
                    .iter()
                    .enumerate()
                    .map(|(e, &(i, j))| m[[t, e]] * ((i == w) as u8 + (j == w) as u8) as f64 / 2.0)
                    .sum();
                worst = worst
                    .max((got.matrix()[[t, w]] - brute).abs())
                    .max((got_ordered.matrix()[[t, w]] - brute).abs());
            }
        }
    }
    ensure(worst <= 1e-12, || format!("max deviation from brute force {worst:e}"))?;
    Ok(format!("300 random instances, max deviation {worst:.1e}"))
}

fn lpp_oracle() -> Check {
    let mut worst = 0.0f64;
    for (v, seed) in [(2, 1), (7, 2), (40, 3), (250, 4)] {
        let model = LdaBModel::new(Array2::ones((1, v)), array![1.0], TopicPrior::Symmetric(0.1)).unwrap();
        let topics = TopicWordDist::from_lambda(model.lambda()).unwrap();
        let test = random_documents(25, v, 5..=20, seed);
        for biterms in [true, false] {
            let inf = LdaProportions::new(&model, biterms, LocalOptions::default());
            let r = lpp(&topics, &inf, &test, seed, Parallelism::Rayon).map_err(|e| e.to_string())?;
            let target = -(v as f64).ln();
            worst = worst.max((r.mean - target).abs());
            for s in r.per_document.iter().flatten() {
                worst = worst.max((s - target).abs());
            }
        }
    }
    ensure(worst <= 1e-12, || format!("deviation from -log V: {worst:e}"))?;
    Ok(format!("max deviation from -log V {worst:.1e}"))
}

fn npmi_oracle() -> Check {
    let perfect = vec![
        Document::from_ids([0, 1, 3]),
        Document::from_ids([0, 1]),
        Document::from_ids([2, 3]),
        Document::from_ids([3]),
    ];
    let p = npmi_for_word_lists(&[vec![0, 1]], &perfect).map_err(|e| e.to_string())?.mean;
    ensure((p - 1.0).abs() <= 1e-6, || format!("perfect pair scored {p}"))?;
    let independent = vec![
        Document::from_ids([0, 1]),
        Document::from_ids([0, 2]),
        Document::from_ids([1, 2]),
        Document::from_ids([2]),
    ];
    let z = npmi_for_word_lists(&[vec![0, 1]], &independent).map_err(|e| e.to_string())?.mean;
    ensure(z.abs() <= 1e-6, || format!("independent pair scored {z}"))?;

    let docs = random_documents(5, 8, 2..=6, 17);
    let lists = vec![vec![0, 1, 2, 3], vec![7, 5, 4], vec![6, 2]];
    let got = npmi_for_word_lists(&lists, &docs).map_err(|e| e.to_string())?;
    let tokens: Vec<Vec<usize>> = docs.iter().map(|d| d.tokens()).collect();
    let contains = |d: usize, w: usize| tokens[d].iter().any(|&t| t == w);
    let prob = |c: usize| (c as f64 + 1e-12) / 5.0;
    let mut worst = 0.0f64;
    for (list, score) in lists.iter().zip(&got.per_topic) {
        let mut total = 0.0;
        let mut n = 0;
        for &i in list {
            for &j in list {
                if i == j {
                    continue;
                }
                let (mut ci, mut cj, mut cij) = (0, 0, 0);
                for d in 0..5 {
                    ci += contains(d, i) as usize;
                    cj += contains(d, j) as usize;
                    cij += (contains(d, i) && contains(d, j)) as usize;
                }
                let (pi, pj, pij) = (prob(ci), prob(cj), prob(cij));
                total += if -pij.ln() <= 1e-12 {
                    1.0
                } else {
                    (pij / (pi * pj)).ln() / -pij.ln()
                };
                n += 1;
            }
        }
        worst = worst.max((total / n as f64 - score).abs());
    }
    ensure(worst <= 1e-12, || format!("5-doc corpus deviates by {worst:e}"))?;
    Ok(format!("perfect {p:.6}, independent {z:.1e}, brute-force deviation {worst:.1e}"))
}

fn stick_invariants() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let n = rng.random_range(1..=30);
        let a: Vec<f64> = (0..n).map(|_| rng.random_range(0.01..20.0)).collect();
        let b: Vec<f64> = (0..n).map(|_| rng.random_range(0.01..20.0)).collect();
        let w = expected_stick_weights(&a, &b).unwrap();
        worst = worst.max((w.sum() - 1.0).abs());
    }
    let hyper = HdpHyper {
        num_topics: 8,
        doc_truncation: 4,
        ..Default::default()
    };
    let model = HdpBModel::init(hyper, 12, 6).unwrap();
    worst = worst.max((model.expected_corpus_weights().sum() - 1.0).abs());
    for doc in random_documents(10, 12, 2..=9, 7) {
        let s = hdp_local_step(&BobDocument::from_document(&doc), &model.context(), &LocalOptions::default()).unwrap();
        worst = worst.max((s.expected_doc_weights().sum() - 1.0).abs());
        worst = worst.max((s.topic_proportions().sum() - 1.0).abs());
    }
    ensure(worst <= 1e-9, || format!("stick weights sum off by {worst:e}"))?;
    let line = hdp_sweep_oracle()?;
    Ok(format!("sums within {worst:.1e}; {line}"))
}

/// One local sweep plus the global step for K = T = 2, written out scalar by scalar.
fn hdp_sweep_oracle() -> Check {
    let hyper = HdpHyper {
        num_topics: 2,
        doc_truncation: 2,
        omega: 1.3,
        alpha: 0.7,
        eta: 0.2,
    };
    let lambda = array![[1.5, 0.4, 2.0, 0.9], [0.3, 2.2, 0.8, 1.1]];
    let (a, b) = (array![1.4, 2.0], array![0.9, 1.7]);
    let mut model = HdpBModel::new(hyper, lambda.clone(), a.clone(), b.clone()).unwrap();
    let doc = BobDocument::from_document(&Document::from_counts([(0, 2), (1, 1), (3, 3)]));
    let (rho, big_d) = (0.4, 50.0);

    let elb: Vec<Vec<f64>> = (0..2).map(|k| elog_dirichlet(&lambda.row(k).to_vec())).collect();
    let corpus_log = {
        let t = digamma(a[0] + b[0]);
        vec![digamma(a[0]) - t, digamma(b[0]) - t]
    };
    // (weight, words) per item: terms then biterms.
    let items: Vec<(f64, Vec<usize>)> = doc
        .terms
        .iter()
        .map(|&(w, c)| (c, vec![w]))
        .chain(doc.biterms.iter().map(|bt| (2.0 * bt.count, vec![bt.first, bt.second])))
        .collect();
    let lik = |k: usize, words: &[usize]| words.iter().map(|&w| elb[k][w]).sum::<f64>();
    let softmax2 = |x0: f64, x1: f64| {
        let m = x0.max(x1);
        let (e0, e1) = ((x0 - m).exp(), (x1 - m).exp());
        [e0 / (e0 + e1), e1 / (e0 + e1)]
    };
    // Identical initial ζ rows make the first assignments uniform over atoms.
    let assign: Vec<[f64; 2]> = items.iter().map(|_| [0.5, 0.5]).collect();

    let mass: Vec<f64> = (0..2).map(|i| items.iter().zip(&assign).map(|((c, _), p)| c * p[i]).sum()).collect();
    let g1 = [1.0 + mass[0], 1.0 + mass[1]];
    let g2 = [hyper.alpha + mass[1], hyper.alpha];
    let doc_log = {
        let t = digamma(g1[0] + g2[0]);
        [digamma(g1[0]) - t, digamma(g2[0]) - t]
    };
    let zeta: Vec<[f64; 2]> = (0..2)
        .map(|i| {
            let s: Vec<f64> = (0..2)
                .map(|k| corpus_log[k] + items.iter().zip(&assign).map(|((c, ws), p)| c * p[i] * lik(k, ws)).sum::<f64>())
                .collect();
            softmax2(s[0], s[1])
        })
        .collect();
    let new_assign: Vec<[f64; 2]> = items
        .iter()
        .map(|(_, ws)| {
            let s: Vec<f64> = (0..2)
                .map(|i| doc_log[i] + (0..2).map(|k| zeta[i][k] * lik(k, ws)).sum::<f64>())
                .collect();
            softmax2(s[0], s[1])
        })
        .collect();
    let mut lam_hat = Array2::from_elem((2, 4), hyper.eta);
    let mut topic_mass = [0.0; 2];
    for k in 0..2 {
        for i in 0..2 {
            topic_mass[k] += zeta[i][k];
            for ((c, ws), p) in items.iter().zip(&new_assign) {
                for &w in ws {
                    lam_hat[[k, w]] += big_d * zeta[i][k] * c * p[i];
                }
            }
        }
    }
    let a_hat = [1.0 + big_d * topic_mass[0], 1.0 + big_d * topic_mass[1]];
    let b_hat = [hyper.omega + big_d * topic_mass[1], hyper.omega];
    let want_lambda = &lambda * (1.0 - rho) + &lam_hat * rho;
    let want_a = [(1.0 - rho) * a[0] + rho * a_hat[0], (1.0 - rho) * a[1] + rho * a_hat[1]];
    let want_b = [(1.0 - rho) * b[0] + rho * b_hat[0], (1.0 - rho) * b[1] + rho * b_hat[1]];

    let state = hdp_local_step(&doc, &model.context(), &LocalOptions { tol: 0.0, max_iters: 1 }).unwrap();
    let mut worst = 0.0f64;
    let mut note = |x: f64, y: f64| worst = worst.max((x - y).abs());
    for i in 0..2 {
        note(state.gamma1[i], g1[i]);
        note(state.gamma2[i], g2[i]);
        for k in 0..2 {
            note(state.zeta[[i, k]], zeta[i][k]);
        }
    }
    let got_assign = state.phi.rows().into_iter().chain(state.phi_tilde.rows());
    for (row, want) in got_assign.zip(&new_assign) {
        note(row[0], want[0]);
        note(row[1], want[1]);
    }
    let mut stats = HdpStats::zeros(2, 4);
    stats.accumulate(&doc, &state);
    hdp_global_update(&mut model, &stats, big_d, rho).unwrap();
    let (ga, gb) = model.sticks();
    for k in 0..2 {
        note(ga[k], want_a[k]);
        note(gb[k], want_b[k]);
        for w in 0..4 {
            note(model.lambda()[[k, w]], want_lambda[[k, w]]);
        }
    }
    ensure(worst <= 1e-10, || format!("K=T=2 sweep deviates from the oracle by {worst:e}"))?;
    Ok(format!("K=T=2 sweep matches the oracle within {worst:.1e}"))
}

fn planted_reproduction() -> Check {
    let start = Instant::now();
    let mut wins = 0;
    let mut lines = Vec::new();
    for seed in 0..5u64 {
        let docs = planted_corpus(2000, 5, 100 + seed);
        let (train, test) = docs.split_at(1600);
        let mut scores = [0.0; 2];
        for (slot, biterms) in [(0, false), (1, true)] {
            let input: Vec<BobDocument> = train
                .iter()
                .map(|d| if biterms { BobDocument::from_document(d) } else { BobDocument::terms_only(d) })
                .collect();
            let config = LearnerConfig {
                mode: LearnerMode::Svi,
                tau: 1.0,
                kappa: 0.7,
                batch_size: 100,
                corpus_size: train.len(),
                passes: 10,
                shuffle: true,
                seed,
                ..Default::default()
            };
            let mut model = LdaBModel::init(5, 100, 0.2, TopicPrior::Symmetric(0.01), seed).unwrap();
            train_lda(&mut model, &input, &config, None, |_, _| Ok(None)).map_err(|e| e.to_string())?;
            let topics = TopicWordDist::from_lambda(model.lambda()).unwrap();
            let inf = LdaProportions::new(&model, biterms, LocalOptions::default());
            scores[slot] = lpp(&topics, &inf, test, seed, Parallelism::Rayon).map_err(|e| e.to_string())?.mean;
        }
        if scores[1] > scores[0] {
            wins += 1;
        }
        lines.push(format!("seed {seed}: BoW {:.4} BoB {:.4}", scores[0], scores[1]));
    }
    let elapsed = start.elapsed();
    let summary = format!("{wins}/5 seeds favour BoB in {:.1}s [{}]", elapsed.as_secs_f64(), lines.join("; "));
    ensure(wins >= 4 && elapsed < Duration::from_secs(300), || summary.clone())?;
    Ok(summary)
}

fn biterm_vocabulary_size() -> Check {
    for v in [3usize, 10, 50] {
        let tokens: Vec<String> = (0..v).map(|i| format!("w{i}")).collect();
        let docs = (0..3).map(|_| Document::from_ids(0..v)).collect();
        let corpus = Corpus::new(docs, Vocabulary::from_tokens(tokens).unwrap()).unwrap();
        let size = BitermVocabulary::build(&corpus, 1).unwrap().size();
        ensure(size == v * (v + 1) / 2, || format!("V={v}: V_b = {size}"))?;
    }
    Ok("V_b = V(V+1)/2 for V in {3, 10, 50}".into())
}

#[test]
fn acceptance() {
    let criteria: [(&str, fn() -> Check); 13] = [
        ("golden BoB example", golden_bob),
        ("local fixed point", fixed_point),
        ("ELBO monotonicity", elbo_monotone),
        ("coordinate-optimal lambda", gradient_check),
        ("SVI matches batch update", svi_batch_equivalence),
        ("degenerate BBM equals LDA / HDP", degenerate_equivalence),
        ("KPS vs SVB on empty minibatches", kps_svb_separation),
        ("biterm-topic conversion", conversion_oracle),
        ("LPP of uniform topic", lpp_oracle),
        ("NPMI oracle", npmi_oracle),
        ("HDP-B stick invariants", stick_invariants),
        ("planted corpus: BoB beats BoW", planted_reproduction),
        ("biterm vocabulary size", biterm_vocabulary_size),
    ];
    let mut failed = Vec::new();
    for (i, (name, check)) in criteria.iter().enumerate() {
        let n = i + 1;
        match check() {
            Ok(detail) => println!("criterion {n:>2} PASS  {name}: {detail}"),
            Err(detail) => {
                println!("criterion {n:>2} FAIL  {name}: {detail}");
                failed.push(n);
            }
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
