//! Independent oracles and corpus generators shared by the integration tests.
//!
//! Reductions that the library performs with ndarray (`sum`, `dot`) are done
//! the same way here so that bitwise comparisons are meaningful.

#![allow(dead_code)]

use bbm::corpus::Document;
use bbm::math::digamma;
use ndarray::{Array1, Array2, ArrayView1};
use rand::distr::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn nd_sum(xs: &[f64]) -> f64 {
    ArrayView1::from(xs).sum()
}

pub fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x));
    let mut total = 0.0;
    for x in row.iter_mut() {
        *x = (*x - max).exp();
        total += *x;
    }
    for x in row.iter_mut() {
        *x /= total;
    }
}

/// Random documents over `vocab` words with lengths in `lens`.
pub fn random_documents(
    n: usize,
    vocab: usize,
    lens: std::ops::RangeInclusive<usize>,
    seed: u64,
) -> Vec<Document> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let len = rng.random_range(lens.clone());
            Document::from_ids((0..len).map(|_| rng.random_range(0..vocab)))
        })
        .collect()
}

/// λ = η + U(0,1), drawn row-major.
pub fn seeded_lambda(k: usize, v: usize, eta: f64, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..k)
        .map(|_| {
            (0..v)
                .map(|_| {
                    let u: f64 = rng.sample(Open01);
                    eta + u
                })
                .collect()
        })
        .collect()
}

pub fn elog_dirichlet(params: &[f64]) -> Vec<f64> {
    let total = digamma(nd_sum(params));
    params.iter().map(|&p| digamma(p) - total).collect()
}

/// Plain online LDA over bag-of-words documents.
pub struct OnlineLda {
    pub lambda: Vec<Vec<f64>>,
    pub alpha: f64,
    pub eta: f64,
    pub tau: f64,
    pub kappa: f64,
    pub corpus_size: f64,
    pub tol: f64,
    pub max_iters: usize,
    pub steps: usize,
}

impl OnlineLda {
    /// γ for one document, plus φ per distinct word.
    pub fn e_step(&self, doc: &Document) -> (Vec<f64>, Vec<Vec<f64>>) {
        let k = self.lambda.len();
        let elog_beta: Vec<Vec<f64>> = self.lambda.iter().map(|r| elog_dirichlet(r)).collect();
        let n: f64 = doc.words().iter().map(|&(_, c)| c as f64).sum();
        let share = (n + 0.0) / k as f64;
        let mut gamma = vec![self.alpha + share; k];
        let mut phi = Vec::new();
        for _ in 0..self.max_iters {
            let elog_theta = elog_dirichlet(&gamma);
            phi = doc
                .words()
                .iter()
                .map(|&(w, _)| {
                    let mut row: Vec<f64> = (0..k).map(|t| elog_theta[t] + elog_beta[t][w]).collect();
                    softmax_in_place(&mut row);
                    row
                })
                .collect();
            let mut next = vec![self.alpha; k];
            for (row, &(_, c)) in phi.iter().zip(doc.words()) {
                for t in 0..k {
                    next[t] += c as f64 * row[t];
                }
            }
            let change: f64 =
                next.iter().zip(&gamma).map(|(a, b)| (a - b).abs()).sum::<f64>() / k as f64;
            gamma = next;
            if change < self.tol {
                break;
            }
        }
        (gamma, phi)
    }

    pub fn step(&mut self, batch: &[Document]) {
        self.steps += 1;
        let rho = (self.tau + self.steps as f64).powf(-self.kappa);
        let k = self.lambda.len();
        let v = self.lambda[0].len();
        let mut stats = vec![vec![0.0; v]; k];
        let mut used = 0;
        for doc in batch {
            if doc.is_empty() {
                continue;
            }
            used += 1;
            let (_, phi) = self.e_step(doc);
            for (row, &(w, c)) in phi.iter().zip(doc.words()) {
                for t in 0..k {
                    stats[t][w] += c as f64 * row[t];
                }
            }
        }
        let scale = self.corpus_size / used as f64;
        for t in 0..k {
            for w in 0..v {
                let target = stats[t][w] * scale + self.eta;
                self.lambda[t][w] = self.lambda[t][w] * (1.0 - rho) + target * rho;
            }
        }
    }
}

/// E[log σ_i] of a truncated stick-breaking sequence (last stick = 1).
pub fn stick_log_weights(a: &[f64], b: &[f64]) -> Vec<f64> {
    let n = a.len();
    let mut out = vec![0.0; n];
    let mut acc = 0.0;
    for i in 0..n {
        if i == n - 1 {
            out[i] = acc;
            break;
        }
        let t = digamma(a[i] + b[i]);
        out[i] = (digamma(a[i]) - t) + acc;
        acc += digamma(b[i]) - t;
    }
    out
}

/// Local state of plain online HDP for one bag-of-words document.
#[derive(Debug, Clone)]
pub struct HdpLocals {
    pub zeta: Vec<Vec<f64>>,
    pub phi: Vec<Vec<f64>>,
    pub gamma1: Vec<f64>,
    pub gamma2: Vec<f64>,
    pub iterations: usize,
}

/// Plain online HDP document inference. `elog_beta` is K×V, `elog_corpus`
/// the corpus stick log weights.
pub fn online_hdp_locals(
    doc: &Document,
    elog_beta: &Array2<f64>,
    elog_corpus: &[f64],
    alpha: f64,
    t: usize,
    tol: f64,
    max_iters: usize,
) -> HdpLocals {
    let k = elog_corpus.len();
    let words: Vec<(f64, Array1<f64>)> = doc
        .words()
        .iter()
        .map(|&(w, c)| (c as f64, elog_beta.column(w).to_owned()))
        .collect();

    let mut init = Array1::<f64>::zeros(k);
    for (c, eb) in &words {
        init.scaled_add(*c, eb);
    }
    let mut init = init.to_vec();
    softmax_in_place(&mut init);
    let mut zeta = Array2::from_shape_fn((t, k), |(_, j)| init[j]);

    let assign = |zeta: &Array2<f64>, prior: Option<&[f64]>| -> Vec<Vec<f64>> {
        words
            .iter()
            .map(|(_, eb)| {
                let mut row: Vec<f64> = (0..t).map(|i| zeta.row(i).dot(eb)).collect();
                if let Some(p) = prior {
                    for i in 0..t {
                        row[i] += p[i];
                    }
                }
                softmax_in_place(&mut row);
                row
            })
            .collect()
    };
    let mut phi = assign(&zeta, None);
    let mut gamma1 = vec![1.0; t];
    let mut gamma2 = vec![alpha; t];
    let mut iterations = 0;
    while iterations < max_iters {
        let mut mass = Array1::<f64>::zeros(t);
        for (row, (c, _)) in phi.iter().zip(&words) {
            mass.scaled_add(*c, &ArrayView1::from(&row[..]));
        }
        gamma1 = mass.iter().map(|m| 1.0 + m).collect();
        let mut tail = 0.0;
        for i in (0..t).rev() {
            gamma2[i] = alpha + tail;
            tail += mass[i];
        }
        let elog_doc = stick_log_weights(&gamma1, &gamma2);

        let mut next = Array2::from_shape_fn((t, k), |(_, j)| elog_corpus[j]);
        for (row, (c, eb)) in phi.iter().zip(&words) {
            for i in 0..t {
                next.row_mut(i).scaled_add(c * row[i], eb);
            }
        }
        for i in 0..t {
            let mut r = next.row(i).to_vec();
            softmax_in_place(&mut r);
            next.row_mut(i).assign(&ArrayView1::from(&r[..]));
        }
        phi = assign(&next, Some(&elog_doc));
        let change = (&next - &zeta).mapv(f64::abs).mean().unwrap();
        zeta = next;
        iterations += 1;
        if change < tol {
            break;
        }
    }
    HdpLocals {
        zeta: zeta.rows().into_iter().map(|r| r.to_vec()).collect(),
        phi,
        gamma1,
        gamma2,
        iterations,
    }
}

/// Planted-topic short texts: topic k favours words [20k, 20k+20) with a
/// Zipf profile and a small uniform floor. Each document follows one topic,
/// with occasional tokens from a second one.
pub fn planted_corpus(num_docs: usize, doc_len: usize, seed: u64) -> Vec<Document> {
    const K: usize = 5;
    const V: usize = 100;
    const BLOCK: usize = 20;
    let mut topics = vec![vec![0.0; V]; K];
    for (k, row) in topics.iter_mut().enumerate() {
        for (w, p) in row.iter_mut().enumerate() {
            *p = 0.05 / V as f64;
            if w / BLOCK == k {
                *p += 1.0 / (1.0 + (w % BLOCK) as f64);
            }
        }
        let s: f64 = row.iter().sum();
        row.iter_mut().for_each(|p| *p /= s);
    }
    let draw = |rng: &mut ChaCha8Rng, row: &[f64]| {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (w, &p) in row.iter().enumerate() {
            acc += p;
            if u < acc {
                return w;
            }
        }
        V - 1
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..num_docs)
        .map(|_| {
            let main = rng.random_range(0..K);
            let other = rng.random_range(0..K);
            let ids: Vec<usize> = (0..doc_len)
                .map(|_| {
                    let k = if rng.random::<f64>() < 0.8 { main } else { other };
                    draw(&mut rng, &topics[k])
                })
                .collect();
            Document::from_ids(ids)
        })
        .collect()
}
