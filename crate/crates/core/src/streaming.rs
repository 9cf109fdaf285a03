//! Online and streaming learners for LDA-B.
//!
//! * SVI: λ ← (1−ρ_t)λ + ρ_t(η + (D/|C|)·stats), with ρ_t = (τ+t)^−κ.
//! * SVB: λ ← λ + stats; the posterior after one minibatch is the prior for the next.
//! * KPS: λ ← λ + stats + η; the prior is re-applied at every minibatch.

use std::io::{BufRead, Write};
use std::time::Instant;

use log::{debug, warn};
use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::{BobDocument, Vocabulary};
use crate::error::{BbmError, Result};
use crate::lda_b::{batch_stats, LdaBModel, LocalOptions, TopicPrior};
use crate::math::normalize_log_weights;
use crate::parallel::Parallelism;

/// ρ_t = (τ + t)^−κ.
pub fn learning_rate(tau: f64, kappa: f64, t: f64) -> Result<f64> {
    if !(tau + t > 0.0) {
        return Err(BbmError::invalid(format!(
            "learning rate needs tau + t > 0, got tau={tau}, t={t}"
        )));
    }
    Ok((tau + t).powf(-kappa))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LearnerMode {
    Svi,
    Svb,
    Kps,
}

#[derive(Debug, Clone)]
pub struct LearnerConfig {
    pub mode: LearnerMode,
    /// Delay τ ≥ 0.
    pub tau: f64,
    /// Forgetting rate κ.
    pub kappa: f64,
    pub batch_size: usize,
    /// Corpus-size estimate D used to scale SVI minibatch statistics.
    pub corpus_size: usize,
    pub passes: usize,
    pub shuffle: bool,
    pub seed: u64,
    pub local: LocalOptions,
    pub parallelism: Parallelism,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        Self {
            mode: LearnerMode::Svi,
            tau: 1.0,
            kappa: 0.9,
            batch_size: 500,
            corpus_size: 500,
            passes: 1,
            shuffle: false,
            seed: 0,
            local: LocalOptions::default(),
            parallelism: Parallelism::default(),
        }
    }
}

impl LearnerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(BbmError::invalid("batch size must be positive"));
        }
        if self.passes == 0 {
            return Err(BbmError::invalid("number of passes must be positive"));
        }
        if self.mode == LearnerMode::Svi {
            if !(self.tau >= 0.0) {
                return Err(BbmError::invalid("tau must be nonnegative"));
            }
            if !(self.kappa > 0.5 && self.kappa <= 1.0) {
                return Err(BbmError::invalid(format!(
                    "kappa must lie in (0.5, 1], got {}",
                    self.kappa
                )));
            }
            if self.corpus_size < self.batch_size {
                return Err(BbmError::invalid(format!(
                    "corpus size estimate D={} is smaller than the batch size {}",
                    self.corpus_size, self.batch_size
                )));
            }
        }
        Ok(())
    }
}

/// What a single global step did.
#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    /// 1-based step index.
    pub step: usize,
    /// Learning rate; SVI only.
    pub rho: Option<f64>,
    /// Documents that went through local inference.
    pub docs: usize,
    /// Documents skipped because they had no tokens.
    pub skipped: usize,
    pub elapsed_ms: f64,
    pub heldout_lpp: Option<f64>,
}

/// Per-step statistics returned by the step functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StepCounts {
    pub docs: usize,
    pub skipped: usize,
}

/// One SVI step: local inference on the minibatch, then the blended λ update.
///
/// `corpus_size` is D; |C| counts the documents that were actually inferred.
/// A minibatch with no usable documents leaves λ unchanged.
pub fn svi_step(
    model: &mut LdaBModel,
    batch: &[BobDocument],
    corpus_size: f64,
    rho: f64,
    local: &LocalOptions,
    parallelism: Parallelism,
) -> Result<StepCounts> {
    if batch.is_empty() {
        return Err(BbmError::invalid("SVI step needs a nonempty minibatch"));
    }
    if !(0.0..=1.0).contains(&rho) {
        return Err(BbmError::invalid(format!("rho must lie in [0, 1], got {rho}")));
    }
    let bs = batch_stats(batch, &model.context(), local, parallelism)?;
    let counts = StepCounts {
        docs: bs.processed,
        skipped: bs.skipped,
    };
    if bs.processed == 0 {
        warn!("minibatch of {} documents had no tokens; skipped", batch.len());
        return Ok(counts);
    }
    let scale = corpus_size / bs.processed as f64;
    let mut target = bs.stats * scale;
    model.eta().add_to(&mut target);
    let updated = model.lambda() * (1.0 - rho) + target * rho;
    model.set_lambda(updated)?;
    Ok(counts)
}

fn streaming_increment(
    model: &LdaBModel,
    batch: &[BobDocument],
    local: &LocalOptions,
    parallelism: Parallelism,
) -> Result<(Array2<f64>, StepCounts)> {
    let bs = batch_stats(batch, &model.context(), local, parallelism)?;
    Ok((
        bs.stats,
        StepCounts {
            docs: bs.processed,
            skipped: bs.skipped,
        },
    ))
}

/// One SVB step: λ ← λ + Σ_{d∈C} f(v, φ, φ̃).
pub fn svb_step(
    model: &mut LdaBModel,
    batch: &[BobDocument],
    local: &LocalOptions,
    parallelism: Parallelism,
) -> Result<StepCounts> {
    let (stats, counts) = streaming_increment(model, batch, local, parallelism)?;
    let updated = model.lambda() + &stats;
    model.set_lambda(updated)?;
    Ok(counts)
}

/// One KPS step: λ ← λ + Σ_{d∈C} f(v, φ, φ̃) + η, with `prior` as η.
pub fn kps_step(
    model: &mut LdaBModel,
    batch: &[BobDocument],
    prior: &TopicPrior,
    local: &LocalOptions,
    parallelism: Parallelism,
) -> Result<StepCounts> {
    prior.check(model.num_topics(), model.vocab_size(), true)?;
    let (stats, counts) = streaming_increment(model, batch, local, parallelism)?;
    let mut updated = model.lambda() + &stats;
    prior.add_to(&mut updated);
    model.set_lambda(updated)?;
    Ok(counts)
}

/// Order in which documents are visited: input order per pass, or a seeded
/// shuffle per pass when `config.shuffle` is set.
pub fn visit_order(num_docs: usize, config: &LearnerConfig) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order = Vec::with_capacity(num_docs * config.passes);
    for _ in 0..config.passes {
        let mut pass: Vec<usize> = (0..num_docs).collect();
        if config.shuffle {
            pass.shuffle(&mut rng);
        }
        order.extend(pass);
    }
    order
}

/// Streams `docs` through the configured learner in minibatches.
///
/// `prior` is the η re-applied by KPS (ignored by the other modes; defaults
/// to the model's own prior). After every step `on_step` may return a
/// held-out score that is recorded in the step report.
pub fn train_lda<F>(
    model: &mut LdaBModel,
    docs: &[BobDocument],
    config: &LearnerConfig,
    prior: Option<&TopicPrior>,
    mut on_step: F,
) -> Result<Vec<StepReport>>
where
    F: FnMut(&StepReport, &LdaBModel) -> Result<Option<f64>>,
{
    config.validate()?;
    let kps_prior = prior.cloned().unwrap_or_else(|| model.eta().clone());
    let order = visit_order(docs.len(), config);
    let mut reports = Vec::new();
    for (i, chunk) in order.chunks(config.batch_size).enumerate() {
        let step = i + 1;
        let batch: Vec<BobDocument> = chunk.iter().map(|&d| docs[d].clone()).collect();
        let start = Instant::now();
        let (rho, counts) = match config.mode {
            LearnerMode::Svi => {
                let rho = learning_rate(config.tau, config.kappa, step as f64)?;
                let c = svi_step(
                    model,
                    &batch,
                    config.corpus_size as f64,
                    rho,
                    &config.local,
                    config.parallelism,
                )?;
                (Some(rho), c)
            }
            LearnerMode::Svb => (None, svb_step(model, &batch, &config.local, config.parallelism)?),
            LearnerMode::Kps => (
                None,
                kps_step(model, &batch, &kps_prior, &config.local, config.parallelism)?,
            ),
        };
        let mut report = StepReport {
            step,
            rho,
            docs: counts.docs,
            skipped: counts.skipped,
            elapsed_ms: start.elapsed().as_secs_f64() * 1e3,
            heldout_lpp: None,
        };
        report.heldout_lpp = on_step(&report, model)?;
        debug!("step {step}: {} docs, rho {:?}", report.docs, report.rho);
        reports.push(report);
    }
    Ok(reports)
}

/// CSV `step,rho,docs,elapsed_ms,heldout_lpp`; absent values are left empty.
pub fn write_metrics_csv<W: Write>(reports: &[StepReport], mut out: W) -> Result<()> {
    writeln!(out, "step,rho,docs,elapsed_ms,heldout_lpp")?;
    for r in reports {
        let rho = r.rho.map(|x| x.to_string()).unwrap_or_default();
        let lpp = r.heldout_lpp.map(|x| x.to_string()).unwrap_or_default();
        writeln!(out, "{},{},{},{:.3},{}", r.step, rho, r.docs, r.elapsed_ms, lpp)?;
    }
    Ok(())
}

/// K×V prior whose column for word v is the softmax of v's K-dimensional embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorMatrix(Array2<f64>);

impl PriorMatrix {
    pub fn matrix(&self) -> &Array2<f64> {
        &self.0
    }

    pub fn into_prior(self) -> TopicPrior {
        TopicPrior::Matrix(self.0)
    }
}

/// Reads `word v1 … vK` lines. Vocabulary words missing from the file get the
/// uniform column 1/K; file words outside the vocabulary are ignored.
pub fn load_prior_embeddings<R: BufRead>(
    input: R,
    vocab: &Vocabulary,
    num_topics: usize,
) -> Result<PriorMatrix> {
    if num_topics == 0 {
        return Err(BbmError::invalid("K must be positive"));
    }
    let mut prior = Array2::from_elem((num_topics, vocab.len()), 1.0 / num_topics as f64);
    for (lineno, line) in input.lines().enumerate() {
        let line = line?;
        let mut fields = line.split_whitespace();
        let Some(word) = fields.next() else { continue };
        let values: Vec<f64> = fields
            .map(|f| {
                f.parse::<f64>().ok().filter(|x| x.is_finite()).ok_or_else(|| BbmError::Parse {
                    line: lineno + 1,
                    message: format!("malformed embedding value {f:?}"),
                })
            })
            .collect::<Result<_>>()?;
        if values.len() != num_topics {
            return Err(BbmError::Dimension {
                context: "embedding row",
                expected: num_topics,
                found: values.len(),
            });
        }
        if let Some(v) = vocab.id(word) {
            let mut col = Array1::from(values);
            normalize_log_weights(col.view_mut()).ok_or(BbmError::NonFinite {
                stage: "embedding softmax",
                document: None,
            })?;
            prior.column_mut(v).assign(&col);
        }
    }
    Ok(PriorMatrix(prior))
}
