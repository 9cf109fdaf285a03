//! Held-out log predictive probability, NPMI coherence, top words, and the
//! biterm-topic to word-topic conversion.

use std::io::Write;

use ndarray::{Array1, Array2, ArrayView1};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::{BitermVocabulary, BobDocument, Document, Vocabulary};
use crate::error::{BbmError, Result};
use crate::hdp_b::{hdp_local_step, HdpBModel, HdpContext};
use crate::lda_b::{local_vb, InferenceContext, LdaBModel, LocalOptions};
use crate::parallel::Parallelism;

/// Documents with at most this many tokens are not evaluated.
pub const MIN_EVAL_LEN: usize = 4;

/// Default number of top words per topic for NPMI.
pub const DEFAULT_TOP_N: usize = 10;

const ROW_SUM_TOL: f64 = 1e-9;
const NPMI_EPSILON: f64 = 1e-12;

/// Observed (w1) and held-out (w2) parts of a test document.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HeldoutSplit {
    pub observed: Vec<usize>,
    pub heldout: Vec<usize>,
}

/// Shuffles the document's tokens and holds out the last max(1, ⌊n/5⌋).
///
/// Returns `None` for documents of length ≤ 4.
pub fn split_heldout<R: rand::Rng>(doc: &Document, rng: &mut R) -> Option<HeldoutSplit> {
    let mut tokens = doc.tokens();
    if tokens.len() <= MIN_EVAL_LEN {
        return None;
    }
    tokens.shuffle(rng);
    let held = (tokens.len() / 5).max(1);
    let heldout = tokens.split_off(tokens.len() - held);
    Some(HeldoutSplit {
        observed: tokens,
        heldout,
    })
}

/// Seed for one document's split, derived from the run seed and the document
/// content so the split does not depend on the document's position.
fn document_seed(seed: u64, doc: &Document) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ seed;
    for &(w, c) in doc.words() {
        for x in [w as u64, c as u64] {
            h ^= x;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    h
}

/// K×V row-stochastic topic-over-words matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct TopicWordDist(Array2<f64>);

impl TopicWordDist {
    pub fn new(matrix: Array2<f64>) -> Result<Self> {
        if matrix.nrows() == 0 || matrix.ncols() == 0 {
            return Err(BbmError::invalid("topic-word matrix must be nonempty"));
        }
        check_rows(&matrix, "topic-word row")?;
        Ok(Self(matrix))
    }

    /// Normalized rows of a positive variational parameter λ.
    pub fn from_lambda(lambda: &Array2<f64>) -> Result<Self> {
        Self::new(crate::math::row_normalize(lambda))
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.0
    }

    pub fn num_topics(&self) -> usize {
        self.0.nrows()
    }

    pub fn vocab_size(&self) -> usize {
        self.0.ncols()
    }

    /// log Σ_k φ_kw π̂_k.
    pub fn log_predictive(&self, word: usize, proportions: ArrayView1<f64>) -> f64 {
        self.0.column(word).dot(&proportions).ln()
    }
}

fn check_rows(m: &Array2<f64>, what: &str) -> Result<()> {
    for (k, row) in m.rows().into_iter().enumerate() {
        if row.iter().any(|&x| !(x >= 0.0 && x.is_finite())) {
            return Err(BbmError::invalid(format!("{what} {k} has a negative or non-finite entry")));
        }
        let s = row.sum();
        if (s - 1.0).abs() > ROW_SUM_TOL {
            return Err(BbmError::invalid(format!("{what} {k} sums to {s}, not 1")));
        }
    }
    Ok(())
}

/// Converts topics over biterm elements into topics over words.
///
/// `elements[e] = (i, j)` names column e of `biterm_topics`. A diagonal
/// element (i, i) gives its full mass to word i; a cross element gives half
/// to each of its words. Works for merged (i < j only) and ordered element
/// lists alike.
pub fn convert_topic_elements(
    biterm_topics: &Array2<f64>,
    elements: &[(usize, usize)],
    num_words: usize,
) -> Result<TopicWordDist> {
    if biterm_topics.ncols() != elements.len() {
        return Err(BbmError::Dimension {
            context: "biterm topic columns",
            expected: elements.len(),
            found: biterm_topics.ncols(),
        });
    }
    if let Some(&(i, j)) = elements.iter().find(|&&(i, j)| i.max(j) >= num_words) {
        return Err(BbmError::VocabularyMismatch(format!(
            "biterm ({i}, {j}) outside a vocabulary of {num_words} words"
        )));
    }
    check_rows(biterm_topics, "biterm-topic row")?;
    let mut out = Array2::zeros((biterm_topics.nrows(), num_words));
    for (mut dst, src) in out.rows_mut().into_iter().zip(biterm_topics.rows()) {
        for (&(i, j), &p) in elements.iter().zip(src.iter()) {
            if i == j {
                dst[i] += p;
            } else {
                dst[i] += 0.5 * p;
                dst[j] += 0.5 * p;
            }
        }
    }
    TopicWordDist::new(out)
}

/// Column layout of a BoB feature space: V diagonal terms, then the
/// biterm vocabulary's pairs in order.
pub fn feature_elements(bvocab: &BitermVocabulary) -> Vec<(usize, usize)> {
    (0..bvocab.num_words())
        .map(|i| (i, i))
        .chain(bvocab.pairs().iter().copied())
        .collect()
}

/// Converts K×(V + V_b) topics over BoB features into topics over words.
pub fn convert_topics(biterm_topics: &Array2<f64>, bvocab: &BitermVocabulary) -> Result<TopicWordDist> {
    convert_topic_elements(biterm_topics, &feature_elements(bvocab), bvocab.num_words())
}

/// Local inference on the observed part of a test document, yielding
/// normalized topic proportions π̂.
pub trait ProportionInference: Sync {
    fn num_topics(&self) -> usize;

    fn vocab_size(&self) -> usize;

    /// `observed` holds in-vocabulary ids only and is nonempty.
    fn infer(&self, observed: &Document) -> Result<Array1<f64>>;
}

fn normalized(v: Array1<f64>) -> Array1<f64> {
    let s = v.sum();
    v / s
}

/// LDA or LDA-B inference: π̂ = γ / Σγ.
pub struct LdaProportions {
    ctx: InferenceContext,
    opts: LocalOptions,
    biterms: bool,
    biterm_cap: Option<usize>,
}

impl LdaProportions {
    /// `biterms` selects BoB (LDA-B) or plain term (LDA) input.
    pub fn new(model: &LdaBModel, biterms: bool, opts: LocalOptions) -> Self {
        Self {
            ctx: model.context(),
            opts,
            biterms,
            biterm_cap: None,
        }
    }

    /// Limits biterm construction to the most frequent `cap` words of w1.
    pub fn with_biterm_cap(mut self, cap: Option<usize>) -> Self {
        self.biterm_cap = cap;
        self
    }
}

impl ProportionInference for LdaProportions {
    fn num_topics(&self) -> usize {
        self.ctx.num_topics()
    }

    fn vocab_size(&self) -> usize {
        self.ctx.vocab_size()
    }

    fn infer(&self, observed: &Document) -> Result<Array1<f64>> {
        let bob = if self.biterms {
            BobDocument::from_document_capped(observed, self.biterm_cap)
        } else {
            BobDocument::terms_only(observed)
        };
        Ok(normalized(local_vb(&bob, &self.ctx, &self.opts)?.gamma))
    }
}

/// HDP-B inference: π̂_k = Σ_i E[σ_i(π_d)] ζ_ik.
pub struct HdpProportions {
    ctx: HdpContext,
    opts: LocalOptions,
    biterms: bool,
    biterm_cap: Option<usize>,
}

impl HdpProportions {
    /// `biterms` selects BoB (HDP-B) or plain term (HDP) input.
    pub fn new(model: &HdpBModel, biterms: bool, opts: LocalOptions) -> Self {
        Self {
            ctx: model.context(),
            opts,
            biterms,
            biterm_cap: None,
        }
    }

    pub fn with_biterm_cap(mut self, cap: Option<usize>) -> Self {
        self.biterm_cap = cap;
        self
    }
}

impl ProportionInference for HdpProportions {
    fn num_topics(&self) -> usize {
        self.ctx.num_topics()
    }

    fn vocab_size(&self) -> usize {
        self.ctx.vocab_size()
    }

    fn infer(&self, observed: &Document) -> Result<Array1<f64>> {
        let bob = if self.biterms {
            BobDocument::from_document_capped(observed, self.biterm_cap)
        } else {
            BobDocument::terms_only(observed)
        };
        Ok(normalized(hdp_local_step(&bob, &self.ctx, &self.opts)?.topic_proportions()))
    }
}

/// Plain LDA trained on BoB features (terms plus vocabulary biterms as
/// extra word types). w1 is mapped into the feature space before inference.
pub struct FeatureLdaProportions<'a> {
    ctx: InferenceContext,
    opts: LocalOptions,
    bvocab: &'a BitermVocabulary,
}

impl<'a> FeatureLdaProportions<'a> {
    pub fn new(model: &LdaBModel, bvocab: &'a BitermVocabulary, opts: LocalOptions) -> Result<Self> {
        let expected = bvocab.size();
        if model.vocab_size() != expected {
            return Err(BbmError::Dimension {
                context: "feature model vocabulary",
                expected,
                found: model.vocab_size(),
            });
        }
        Ok(Self {
            ctx: model.context(),
            opts,
            bvocab,
        })
    }
}

impl ProportionInference for FeatureLdaProportions<'_> {
    fn num_topics(&self) -> usize {
        self.ctx.num_topics()
    }

    fn vocab_size(&self) -> usize {
        self.bvocab.num_words()
    }

    fn infer(&self, observed: &Document) -> Result<Array1<f64>> {
        let features = BobDocument::terms_only(&self.bvocab.feature_document(observed));
        Ok(normalized(local_vb(&features, &self.ctx, &self.opts)?.gamma))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LppReport {
    /// Mean per-document LPP.
    pub mean: f64,
    /// Documents that contributed.
    pub documents: usize,
    /// Documents of length ≤ 4, or left with an empty part after dropping
    /// unseen words.
    pub skipped: usize,
    /// Held-out tokens dropped because the model does not know them.
    pub dropped_tokens: usize,
    pub per_document: Vec<Option<f64>>,
}

/// Held-out LPP of `test` under `topics`, with π̂ from `inference` on w1.
///
/// Word ids ≥ V are unseen and dropped. Splits are seeded per document from
/// `seed` and the document content.
pub fn lpp<I: ProportionInference + ?Sized>(
    topics: &TopicWordDist,
    inference: &I,
    test: &[Document],
    seed: u64,
    parallelism: Parallelism,
) -> Result<LppReport> {
    let v = topics.vocab_size();
    if inference.vocab_size() != v || inference.num_topics() != topics.num_topics() {
        return Err(BbmError::Dimension {
            context: "inference model vs topic matrix",
            expected: topics.num_topics(),
            found: inference.num_topics(),
        });
    }
    let results = parallelism.try_map(test, |d, doc| -> Result<(Option<f64>, usize)> {
        let mut rng = ChaCha8Rng::seed_from_u64(document_seed(seed, doc));
        let Some(split) = split_heldout(doc, &mut rng) else {
            return Ok((None, 0));
        };
        let observed = Document::from_ids(split.observed.into_iter().filter(|&w| w < v));
        let heldout: Vec<usize> = split.heldout.iter().copied().filter(|&w| w < v).collect();
        let dropped = split.heldout.len() - heldout.len();
        if observed.is_empty() || heldout.is_empty() {
            return Ok((None, dropped));
        }
        let pi = inference.infer(&observed).map_err(|e| e.with_document(d))?;
        let total: f64 = heldout.iter().map(|&w| topics.log_predictive(w, pi.view())).sum();
        Ok((Some(total / heldout.len() as f64), dropped))
    })?;
    let per_document: Vec<Option<f64>> = results.iter().map(|r| r.0).collect();
    let dropped_tokens = results.iter().map(|r| r.1).sum();
    let scores: Vec<f64> = per_document.iter().flatten().copied().collect();
    if scores.is_empty() {
        return Err(BbmError::NoEvaluableDocuments);
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(BbmError::NonFinite {
            stage: "held-out log predictive probability",
            document: per_document.iter().position(|s| s.is_some_and(|x| !x.is_finite())),
        });
    }
    Ok(LppReport {
        mean: scores.iter().sum::<f64>() / scores.len() as f64,
        documents: scores.len(),
        skipped: test.len() - scores.len(),
        dropped_tokens,
        per_document,
    })
}

/// Word ids ranked by decreasing weight, ties to the lower id; `n` is
/// clamped to V.
pub fn top_words(weights: &Array2<f64>, n: usize) -> Vec<Vec<usize>> {
    let n = n.min(weights.ncols());
    weights
        .rows()
        .into_iter()
        .map(|row| {
            let mut ids: Vec<usize> = (0..row.len()).collect();
            ids.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
            ids.truncate(n);
            ids
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct NpmiReport {
    /// Mean pair score per topic.
    pub per_topic: Vec<f64>,
    pub mean: f64,
}

/// Normalized PMI of one pair from document probabilities.
pub fn npmi_pair(p_i: f64, p_j: f64, p_ij: f64) -> f64 {
    let denom = -p_ij.ln();
    if denom <= NPMI_EPSILON {
        return 1.0;
    }
    (p_ij / (p_i * p_j)).ln() / denom
}

/// NPMI of each word list against document co-occurrence in `reference`,
/// averaged over ordered pairs (i, j), i ≠ j.
pub fn npmi_for_word_lists(lists: &[Vec<usize>], reference: &[Document]) -> Result<NpmiReport> {
    if reference.is_empty() {
        return Err(BbmError::EmptyCorpus);
    }
    let d = reference.len() as f64;
    let prob = |count: usize| (count as f64 + NPMI_EPSILON) / d;
    let mut per_topic = Vec::with_capacity(lists.len());
    for words in lists {
        let presence: Vec<Vec<bool>> = words
            .iter()
            .map(|&w| reference.iter().map(|doc| doc.count(w) > 0).collect())
            .collect();
        let df: Vec<usize> = presence.iter().map(|p| p.iter().filter(|&&x| x).count()).collect();
        let mut total = 0.0;
        let mut pairs = 0usize;
        for i in 0..words.len() {
            for j in 0..words.len() {
                if i == j {
                    continue;
                }
                let co = presence[i]
                    .iter()
                    .zip(&presence[j])
                    .filter(|(a, b)| **a && **b)
                    .count();
                total += npmi_pair(prob(df[i]), prob(df[j]), prob(co));
                pairs += 1;
            }
        }
        per_topic.push(if pairs == 0 { 0.0 } else { total / pairs as f64 });
    }
    let mean = if per_topic.is_empty() {
        0.0
    } else {
        per_topic.iter().sum::<f64>() / per_topic.len() as f64
    };
    Ok(NpmiReport { per_topic, mean })
}

/// NPMI of each topic's `top_n` words.
pub fn npmi(topics: &TopicWordDist, reference: &[Document], top_n: usize) -> Result<NpmiReport> {
    npmi_for_word_lists(&top_words(topics.matrix(), top_n), reference)
}

/// `metric,value` CSV, then one `npmi_topic_k` row per topic.
pub fn write_report<W: Write>(
    mut out: W,
    lpp: Option<&LppReport>,
    npmi: Option<&NpmiReport>,
) -> Result<()> {
    writeln!(out, "metric,value")?;
    if let Some(r) = lpp {
        writeln!(out, "lpp,{}", r.mean)?;
        writeln!(out, "lpp_documents,{}", r.documents)?;
        writeln!(out, "lpp_skipped_documents,{}", r.skipped)?;
        writeln!(out, "lpp_dropped_tokens,{}", r.dropped_tokens)?;
    }
    if let Some(r) = npmi {
        writeln!(out, "npmi_mean,{}", r.mean)?;
        for (k, s) in r.per_topic.iter().enumerate() {
            writeln!(out, "npmi_topic_{k},{s}")?;
        }
    }
    Ok(())
}

/// One topic per line, space-separated tokens.
pub fn write_top_words<W: Write>(mut out: W, lists: &[Vec<usize>], vocab: &Vocabulary) -> Result<()> {
    for list in lists {
        let words: Vec<&str> = list.iter().map(|&w| vocab.token(w)).collect();
        writeln!(out, "{}", words.join(" "))?;
    }
    Ok(())
}
