//! LDA-B: LDA extended with a biterm plate.
//!
//! Every document contributes its terms (count n_dn each) and its unordered
//! cross pairs (2·m_db ordered biterm tokens each). A biterm's two words share
//! one topic assignment, so its variational weight sees E[log β] of both.
//! With no biterms every routine here is exactly the standard LDA update.

use std::io::{BufRead, Write};

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::distr::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::BobDocument;
use crate::error::{BbmError, Result};
use crate::math::{
    dirichlet_expectation, dirichlet_expectation_rows, ln_gamma, neg_entropy,
    normalize_log_weights,
};
use crate::parallel::Parallelism;

/// Dirichlet prior over topic-word distributions.
#[derive(Debug, Clone, PartialEq)]
pub enum TopicPrior {
    Symmetric(f64),
    /// K×V matrix, e.g. built from word embeddings.
    Matrix(Array2<f64>),
}

impl TopicPrior {
    pub fn get(&self, k: usize, v: usize) -> f64 {
        match self {
            TopicPrior::Symmetric(eta) => *eta,
            TopicPrior::Matrix(m) => m[[k, v]],
        }
    }

    /// Dense K×V copy.
    pub fn to_matrix(&self, k: usize, v: usize) -> Array2<f64> {
        match self {
            TopicPrior::Symmetric(eta) => Array2::from_elem((k, v), *eta),
            TopicPrior::Matrix(m) => m.clone(),
        }
    }

    /// Adds the prior to `target` entrywise.
    pub fn add_to(&self, target: &mut Array2<f64>) {
        match self {
            TopicPrior::Symmetric(eta) => target.mapv_inplace(|x| x + eta),
            TopicPrior::Matrix(m) => *target += m,
        }
    }

    fn validate(&self, k: usize, v: usize, allow_zero: bool) -> Result<()> {
        let ok = |x: f64| x.is_finite() && (x > 0.0 || (allow_zero && x == 0.0));
        match self {
            TopicPrior::Symmetric(eta) if !ok(*eta) => {
                Err(BbmError::invalid(format!("eta must be positive, got {eta}")))
            }
            TopicPrior::Matrix(m) => {
                if m.dim() != (k, v) {
                    return Err(BbmError::Dimension {
                        context: "topic prior",
                        expected: k * v,
                        found: m.len(),
                    });
                }
                if !m.iter().all(|&x| ok(x)) {
                    return Err(BbmError::invalid("prior matrix entries must be positive"));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    pub(crate) fn check(&self, k: usize, v: usize, allow_zero: bool) -> Result<()> {
        self.validate(k, v, allow_zero)
    }
}

/// Global variational state of LDA-B.
#[derive(Debug, Clone, PartialEq)]
pub struct LdaBModel {
    lambda: Array2<f64>,
    alpha: Array1<f64>,
    eta: TopicPrior,
}

impl LdaBModel {
    pub fn new(lambda: Array2<f64>, alpha: Array1<f64>, eta: TopicPrior) -> Result<Self> {
        let (k, v) = lambda.dim();
        if k == 0 || v == 0 {
            return Err(BbmError::invalid("model needs K ≥ 1 and V ≥ 1"));
        }
        if alpha.len() != k {
            return Err(BbmError::Dimension {
                context: "alpha",
                expected: k,
                found: alpha.len(),
            });
        }
        if !alpha.iter().all(|&a| a > 0.0 && a.is_finite()) {
            return Err(BbmError::invalid("alpha must be positive"));
        }
        if !lambda.iter().all(|&l| l > 0.0 && l.is_finite()) {
            return Err(BbmError::invalid("lambda must be positive"));
        }
        eta.validate(k, v, false)?;
        Ok(Self { lambda, alpha, eta })
    }

    /// λ_kv = η_kv + u with u ~ Uniform(0, 1) from a seeded ChaCha stream.
    pub fn init(
        num_topics: usize,
        vocab_size: usize,
        alpha: f64,
        eta: TopicPrior,
        seed: u64,
    ) -> Result<Self> {
        if num_topics == 0 || vocab_size == 0 {
            return Err(BbmError::invalid("model needs K ≥ 1 and V ≥ 1"));
        }
        if !(alpha > 0.0) {
            return Err(BbmError::invalid(format!("alpha must be positive, got {alpha}")));
        }
        eta.validate(num_topics, vocab_size, false)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut lambda = Array2::zeros((num_topics, vocab_size));
        for ((k, v), x) in lambda.indexed_iter_mut() {
            let u: f64 = rng.sample(Open01);
            *x = eta.get(k, v) + u;
        }
        Self::new(lambda, Array1::from_elem(num_topics, alpha), eta)
    }

    pub fn num_topics(&self) -> usize {
        self.lambda.nrows()
    }

    pub fn vocab_size(&self) -> usize {
        self.lambda.ncols()
    }

    pub fn lambda(&self) -> &Array2<f64> {
        &self.lambda
    }

    pub fn alpha(&self) -> &Array1<f64> {
        &self.alpha
    }

    pub fn eta(&self) -> &TopicPrior {
        &self.eta
    }

    /// Replaces λ, checking shape and positivity.
    pub fn set_lambda(&mut self, lambda: Array2<f64>) -> Result<()> {
        if lambda.dim() != self.lambda.dim() {
            return Err(BbmError::Dimension {
                context: "lambda",
                expected: self.lambda.len(),
                found: lambda.len(),
            });
        }
        if !lambda.iter().all(|&l| l > 0.0 && l.is_finite()) {
            return Err(BbmError::NonFinite {
                stage: "global update",
                document: None,
            });
        }
        self.lambda = lambda;
        Ok(())
    }

    /// E_q[log β_kv] = ψ(λ_kv) − ψ(Σ_u λ_ku), K×V.
    pub fn expected_log_beta(&self) -> Array2<f64> {
        dirichlet_expectation_rows(&self.lambda)
    }

    /// E_q[β]: row-normalized λ.
    pub fn topic_word(&self) -> Array2<f64> {
        crate::math::row_normalize(&self.lambda)
    }

    pub fn context(&self) -> InferenceContext {
        InferenceContext::new(self)
    }

    /// Header `K V alpha eta`, then K rows of V tab-separated λ values in
    /// 17-significant-digit exponent notation.
    pub fn write_checkpoint<W: Write>(&self, mut out: W) -> Result<()> {
        let alpha = self.alpha[0];
        if self.alpha.iter().any(|&a| a != alpha) {
            return Err(BbmError::invalid("checkpoint format requires a symmetric alpha"));
        }
        let eta = match self.eta {
            TopicPrior::Symmetric(eta) => eta,
            TopicPrior::Matrix(_) => {
                return Err(BbmError::invalid(
                    "checkpoint format stores a scalar eta; matrix priors are not persisted",
                ))
            }
        };
        writeln!(
            out,
            "{} {} {} {}",
            self.num_topics(),
            self.vocab_size(),
            fmt_f64(alpha),
            fmt_f64(eta)
        )?;
        write_matrix(&mut out, &self.lambda)?;
        Ok(())
    }

    pub fn read_checkpoint<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = NumberedLines::new(input);
        let header = lines.next_fields()?;
        if header.len() != 4 {
            return Err(lines.error("expected header `K V alpha eta`"));
        }
        let k: usize = lines.parse(&header[0])?;
        let v: usize = lines.parse(&header[1])?;
        let alpha: f64 = lines.parse(&header[2])?;
        let eta: f64 = lines.parse(&header[3])?;
        let lambda = read_matrix(&mut lines, k, v)?;
        Self::new(lambda, Array1::from_elem(k, alpha), TopicPrior::Symmetric(eta))
    }
}

pub(crate) fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub(crate) fn write_matrix<W: Write>(out: &mut W, m: &Array2<f64>) -> Result<()> {
    for row in m.axis_iter(Axis(0)) {
        write_row(out, row)?;
    }
    Ok(())
}

pub(crate) fn write_row<W: Write>(out: &mut W, row: ArrayView1<f64>) -> Result<()> {
    let line: Vec<String> = row.iter().map(|&x| fmt_f64(x)).collect();
    writeln!(out, "{}", line.join("\t"))?;
    Ok(())
}

pub(crate) fn read_matrix<R: BufRead>(
    lines: &mut NumberedLines<R>,
    rows: usize,
    cols: usize,
) -> Result<Array2<f64>> {
    let mut m = Array2::zeros((rows, cols));
    for r in 0..rows {
        let row = lines.next_row(cols)?;
        m.row_mut(r).assign(&row);
    }
    Ok(m)
}

/// Line reader that keeps track of line numbers for parse errors.
pub(crate) struct NumberedLines<R> {
    inner: std::io::Lines<R>,
    line: usize,
}

impl<R: BufRead> NumberedLines<R> {
    pub(crate) fn new(input: R) -> Self {
        Self {
            inner: input.lines(),
            line: 0,
        }
    }

    pub(crate) fn error(&self, message: impl Into<String>) -> BbmError {
        BbmError::Parse {
            line: self.line,
            message: message.into(),
        }
    }

    pub(crate) fn next_fields(&mut self) -> Result<Vec<String>> {
        self.line += 1;
        match self.inner.next() {
            Some(line) => Ok(line?.split_whitespace().map(str::to_string).collect()),
            None => Err(self.error("unexpected end of file")),
        }
    }

    pub(crate) fn parse<T: std::str::FromStr>(&self, field: &str) -> Result<T> {
        field
            .parse()
            .map_err(|_| self.error(format!("cannot parse {field:?}")))
    }

    pub(crate) fn next_row(&mut self, cols: usize) -> Result<Array1<f64>> {
        let fields = self.next_fields()?;
        if fields.len() != cols {
            return Err(self.error(format!("expected {cols} values, found {}", fields.len())));
        }
        fields
            .iter()
            .map(|f| self.parse::<f64>(f))
            .collect::<Result<Vec<_>>>()
            .map(Array1::from)
    }
}

/// Read-only quantities needed by local inference, computed once per global
/// step and shared across documents.
#[derive(Debug, Clone)]
pub struct InferenceContext {
    /// E[log β] stored word-major (V×K) so each word's topic vector is contiguous.
    elog_beta_by_word: Array2<f64>,
    alpha: Array1<f64>,
}

impl InferenceContext {
    pub fn new(model: &LdaBModel) -> Self {
        Self::from_parts(model.expected_log_beta(), model.alpha.clone())
    }

    /// `elog_beta` is K×V.
    pub fn from_parts(elog_beta: Array2<f64>, alpha: Array1<f64>) -> Self {
        Self {
            elog_beta_by_word: elog_beta.t().as_standard_layout().into_owned(),
            alpha,
        }
    }

    pub fn num_topics(&self) -> usize {
        self.alpha.len()
    }

    pub fn vocab_size(&self) -> usize {
        self.elog_beta_by_word.nrows()
    }

    pub fn alpha(&self) -> &Array1<f64> {
        &self.alpha
    }

    /// E[log β_{·,w}] as a K-vector.
    pub fn elog_beta(&self, word: usize) -> ArrayView1<'_, f64> {
        self.elog_beta_by_word.row(word)
    }

    fn check_document(&self, doc: &BobDocument) -> Result<()> {
        match doc.max_word_id() {
            Some(w) if w >= self.vocab_size() => Err(BbmError::VocabularyMismatch(format!(
                "word id {w} outside model vocabulary of size {}",
                self.vocab_size()
            ))),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalOptions {
    /// Stop when the mean absolute change of the document-level parameters drops below this.
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for LocalOptions {
    fn default() -> Self {
        Self {
            tol: 1e-3,
            max_iters: 100,
        }
    }
}

/// Per-document variational parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalState {
    pub gamma: Array1<f64>,
    /// One K-row per distinct term, aligned with `BobDocument::terms`.
    pub phi: Array2<f64>,
    /// One K-row per unordered biterm, aligned with `BobDocument::biterms`.
    pub phi_tilde: Array2<f64>,
    pub iterations: usize,
    pub converged: bool,
}

fn non_finite(stage: &'static str) -> BbmError {
    BbmError::NonFinite {
        stage,
        document: None,
    }
}

/// φ_nk ∝ exp{E[log θ_k] + E[log β_{k,w_n}]}.
pub fn update_phi(
    doc: &BobDocument,
    ctx: &InferenceContext,
    gamma: &Array1<f64>,
) -> Result<Array2<f64>> {
    let elog_theta = dirichlet_expectation(gamma.view());
    let k = ctx.num_topics();
    let mut phi = Array2::zeros((doc.terms.len(), k));
    for (mut row, &(w, _)) in phi.axis_iter_mut(Axis(0)).zip(&doc.terms) {
        row.assign(&elog_theta);
        row += &ctx.elog_beta(w);
        normalize_log_weights(row).ok_or_else(|| non_finite("phi update"))?;
    }
    Ok(phi)
}

/// φ̃_bk ∝ exp{E[log θ_k] + E[log β_{k,w1}] + E[log β_{k,w2}]}.
pub fn update_phi_tilde(
    doc: &BobDocument,
    ctx: &InferenceContext,
    gamma: &Array1<f64>,
) -> Result<Array2<f64>> {
    let elog_theta = dirichlet_expectation(gamma.view());
    let k = ctx.num_topics();
    let mut phi = Array2::zeros((doc.biterms.len(), k));
    for (mut row, b) in phi.axis_iter_mut(Axis(0)).zip(&doc.biterms) {
        row.assign(&elog_theta);
        row += &ctx.elog_beta(b.first);
        row += &ctx.elog_beta(b.second);
        normalize_log_weights(row).ok_or_else(|| non_finite("phi-tilde update"))?;
    }
    Ok(phi)
}

/// γ_k = α_k + Σ_n n_dn φ_nk + Σ_b 2 m_db φ̃_bk.
pub fn update_gamma(
    doc: &BobDocument,
    alpha: &Array1<f64>,
    phi: &Array2<f64>,
    phi_tilde: &Array2<f64>,
) -> Array1<f64> {
    let mut gamma = alpha.clone();
    for (row, &(_, c)) in phi.axis_iter(Axis(0)).zip(&doc.terms) {
        gamma.scaled_add(c, &row);
    }
    for (row, b) in phi_tilde.axis_iter(Axis(0)).zip(&doc.biterms) {
        gamma.scaled_add(b.multiplicity(), &row);
    }
    gamma
}

/// Initial γ: α plus an even split of the document's token mass.
pub fn initial_gamma(doc: &BobDocument, alpha: &Array1<f64>) -> Array1<f64> {
    let share = (doc.term_tokens() + doc.biterm_tokens()) / alpha.len() as f64;
    alpha.mapv(|a| a + share)
}

fn mean_abs_diff(a: &Array1<f64>, b: &Array1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64
}

/// Coordinate ascent over (φ, φ̃, γ) for one document with λ held fixed.
pub fn local_vb(
    doc: &BobDocument,
    ctx: &InferenceContext,
    opts: &LocalOptions,
) -> Result<LocalState> {
    local_vb_observed(doc, ctx, opts, |_| {})
}

/// [`local_vb`] that hands the state to `observe` after every sweep.
pub fn local_vb_observed<F: FnMut(&LocalState)>(
    doc: &BobDocument,
    ctx: &InferenceContext,
    opts: &LocalOptions,
    mut observe: F,
) -> Result<LocalState> {
    if doc.terms.is_empty() {
        return Err(BbmError::invalid("local inference needs a nonempty document"));
    }
    ctx.check_document(doc)?;
    let mut state = LocalState {
        gamma: initial_gamma(doc, ctx.alpha()),
        phi: Array2::zeros((0, 0)),
        phi_tilde: Array2::zeros((0, 0)),
        iterations: 0,
        converged: false,
    };
    while state.iterations < opts.max_iters {
        state.phi = update_phi(doc, ctx, &state.gamma)?;
        state.phi_tilde = update_phi_tilde(doc, ctx, &state.gamma)?;
        let gamma = update_gamma(doc, ctx.alpha(), &state.phi, &state.phi_tilde);
        let change = mean_abs_diff(&gamma, &state.gamma);
        if !change.is_finite() {
            return Err(non_finite("gamma update"));
        }
        state.gamma = gamma;
        state.iterations += 1;
        observe(&state);
        if change < opts.tol {
            state.converged = true;
            break;
        }
    }
    Ok(state)
}

/// Adds one document's f(v, φ, φ̃) into a K×V accumulator.
pub fn accumulate_stats(stats: &mut Array2<f64>, doc: &BobDocument, local: &LocalState) {
    for (row, &(w, c)) in local.phi.axis_iter(Axis(0)).zip(&doc.terms) {
        stats.column_mut(w).scaled_add(c, &row);
    }
    for (row, b) in local.phi_tilde.axis_iter(Axis(0)).zip(&doc.biterms) {
        let mult = b.multiplicity();
        stats.column_mut(b.first).scaled_add(mult, &row);
        stats.column_mut(b.second).scaled_add(mult, &row);
    }
}

/// Σ_d f(v, φ_d, φ̃_d) over a minibatch, K×V.
pub fn sufficient_stats(
    docs: &[BobDocument],
    locals: &[LocalState],
    num_topics: usize,
    vocab_size: usize,
) -> Array2<f64> {
    let mut stats = Array2::zeros((num_topics, vocab_size));
    for (doc, local) in docs.iter().zip(locals) {
        accumulate_stats(&mut stats, doc, local);
    }
    stats
}

/// Runs [`local_vb`] on every nonempty document. Empty documents yield `None`.
pub fn e_step(
    docs: &[BobDocument],
    ctx: &InferenceContext,
    opts: &LocalOptions,
    parallelism: Parallelism,
) -> Result<Vec<Option<LocalState>>> {
    parallelism.try_map(docs, |i, doc| {
        if doc.terms.is_empty() {
            Ok(None)
        } else {
            local_vb(doc, ctx, opts).map(Some).map_err(|e| e.with_document(i))
        }
    })
}

/// Minibatch statistics plus bookkeeping from [`batch_stats`].
#[derive(Debug, Clone)]
pub struct BatchStats {
    pub stats: Array2<f64>,
    pub processed: usize,
    pub skipped: usize,
}

/// E-step followed by an in-order reduction of sufficient statistics.
pub fn batch_stats(
    docs: &[BobDocument],
    ctx: &InferenceContext,
    opts: &LocalOptions,
    parallelism: Parallelism,
) -> Result<BatchStats> {
    let locals = e_step(docs, ctx, opts, parallelism)?;
    let mut stats = Array2::zeros((ctx.num_topics(), ctx.vocab_size()));
    let mut processed = 0;
    for (doc, local) in docs.iter().zip(&locals) {
        if let Some(local) = local {
            accumulate_stats(&mut stats, doc, local);
            processed += 1;
        }
    }
    Ok(BatchStats {
        stats,
        processed,
        skipped: docs.len() - processed,
    })
}

fn dirichlet_log_norm(params: ArrayView1<f64>) -> f64 {
    ln_gamma(params.sum()) - params.iter().map(|&p| ln_gamma(p)).sum::<f64>()
}

/// Document-level part of the lower bound: the θ, z, z̃ and likelihood
/// terms and their entropies. Global β terms are in [`topic_elbo`].
pub fn document_elbo(doc: &BobDocument, ctx: &InferenceContext, local: &LocalState) -> f64 {
    let alpha = ctx.alpha();
    let gamma = &local.gamma;
    let elog_theta = dirichlet_expectation(gamma.view());

    // E[log p(θ|α)] − E[log q(θ|γ)]
    let mut bound = dirichlet_log_norm(alpha.view()) - dirichlet_log_norm(gamma.view());
    for k in 0..alpha.len() {
        bound += (alpha[k] - gamma[k]) * elog_theta[k];
    }

    for (row, &(w, c)) in local.phi.axis_iter(Axis(0)).zip(&doc.terms) {
        let eb = ctx.elog_beta(w);
        let expected: f64 = (0..row.len())
            .map(|k| row[k] * (elog_theta[k] + eb[k]))
            .sum();
        bound += c * (expected - neg_entropy(row));
    }
    for (row, b) in local.phi_tilde.axis_iter(Axis(0)).zip(&doc.biterms) {
        let e1 = ctx.elog_beta(b.first);
        let e2 = ctx.elog_beta(b.second);
        let expected: f64 = (0..row.len())
            .map(|k| row[k] * (elog_theta[k] + e1[k] + e2[k]))
            .sum();
        bound += b.multiplicity() * (expected - neg_entropy(row));
    }
    bound
}

/// Σ_k E[log p(β_k|η_k)] − E[log q(β_k|λ_k)].
pub fn topic_elbo(model: &LdaBModel) -> f64 {
    let elog_beta = model.expected_log_beta();
    let (k_topics, v_words) = model.lambda.dim();
    let eta = model.eta.to_matrix(k_topics, v_words);
    let mut bound = 0.0;
    for k in 0..k_topics {
        let lam = model.lambda.row(k);
        let eta_k = eta.row(k);
        bound += dirichlet_log_norm(eta_k) - dirichlet_log_norm(lam);
        for v in 0..v_words {
            bound += (eta_k[v] - lam[v]) * elog_beta[[k, v]];
        }
    }
    bound
}

/// Per-document lower bound with the global β terms apportioned evenly over
/// a corpus of `num_docs` documents.
pub fn elbo(doc: &BobDocument, model: &LdaBModel, local: &LocalState, num_docs: usize) -> f64 {
    document_elbo(doc, &model.context(), local) + topic_elbo(model) / num_docs as f64
}

/// Full lower bound over a corpus with the given local states.
pub fn corpus_elbo(docs: &[BobDocument], model: &LdaBModel, locals: &[LocalState]) -> f64 {
    let ctx = model.context();
    docs.iter()
        .zip(locals)
        .map(|(d, l)| document_elbo(d, &ctx, l))
        .sum::<f64>()
        + topic_elbo(model)
}
