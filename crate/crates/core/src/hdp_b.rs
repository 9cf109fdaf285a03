//! HDP-B: truncated stick-breaking HDP over bag-of-biterms documents.
//!
//! Corpus level: K topics with Beta(a_k, b_k) stick variables. Document level:
//! T atoms, each pointing at a corpus topic through ζ, with Beta(γ¹_i, γ²_i)
//! sticks. Terms and biterms pick a document atom through φ and φ̃; a biterm's
//! two words share its atom. The last stick at each level takes all of the
//! remaining mass.

use std::io::{BufRead, Write};
use std::time::Instant;

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::distr::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::BobDocument;
use crate::error::{BbmError, Result};
use crate::lda_b::{fmt_f64, read_matrix, write_matrix, write_row, LocalOptions, NumberedLines};
use crate::math::{digamma, dirichlet_expectation_rows, ln_gamma, neg_entropy, normalize_log_weights};
use crate::parallel::Parallelism;
use crate::streaming::{learning_rate, visit_order, LearnerConfig, LearnerMode, StepReport};

/// E[log σ_i] for a truncated stick-breaking sequence with Beta(first_i,
/// second_i) sticks.
///
/// E[log σ_i] = E[log π_i] + Σ_{j<i} E[log(1−π_j)]; the final stick is fixed
/// at π = 1, so its own parameters are validated but do not enter the result.
pub fn stick_expectations(first: &[f64], second: &[f64]) -> Result<Array1<f64>> {
    check_sticks(first, second)?;
    let n = first.len();
    let mut out = Array1::zeros(n);
    let mut rest = 0.0;
    for i in 0..n {
        if i + 1 == n {
            out[i] = rest;
        } else {
            let total = digamma(first[i] + second[i]);
            out[i] = digamma(first[i]) - total + rest;
            rest += digamma(second[i]) - total;
        }
    }
    Ok(out)
}

/// E[σ_i] = E[π_i] Π_{j<i} E[1−π_j], with the last stick absorbing the rest.
pub fn expected_stick_weights(first: &[f64], second: &[f64]) -> Result<Array1<f64>> {
    check_sticks(first, second)?;
    let n = first.len();
    let mut out = Array1::zeros(n);
    let mut remaining = 1.0;
    for i in 0..n {
        if i + 1 == n {
            out[i] = remaining;
        } else {
            let p = first[i] / (first[i] + second[i]);
            out[i] = remaining * p;
            remaining *= 1.0 - p;
        }
    }
    Ok(out)
}

fn check_sticks(first: &[f64], second: &[f64]) -> Result<()> {
    if first.len() != second.len() {
        return Err(BbmError::Dimension {
            context: "stick parameters",
            expected: first.len(),
            found: second.len(),
        });
    }
    if first.is_empty() {
        return Err(BbmError::invalid("stick-breaking needs at least one stick"));
    }
    if !first.iter().chain(second).all(|&x| x > 0.0 && x.is_finite()) {
        return Err(BbmError::invalid("Beta stick parameters must be positive"));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HdpHyper {
    /// Corpus truncation K.
    pub num_topics: usize,
    /// Document truncation T.
    pub doc_truncation: usize,
    /// Corpus concentration ω.
    pub omega: f64,
    /// Document concentration α.
    pub alpha: f64,
    /// Topic Dirichlet prior η.
    pub eta: f64,
}

impl Default for HdpHyper {
    fn default() -> Self {
        Self {
            num_topics: 100,
            doc_truncation: 20,
            omega: 1.0,
            alpha: 1.0,
            eta: 0.01,
        }
    }
}

impl HdpHyper {
    fn validate(&self) -> Result<()> {
        if self.num_topics == 0 || self.doc_truncation == 0 {
            return Err(BbmError::invalid("truncations K and T must be positive"));
        }
        if self.doc_truncation > self.num_topics {
            return Err(BbmError::invalid(format!(
                "document truncation T={} exceeds corpus truncation K={}",
                self.doc_truncation, self.num_topics
            )));
        }
        for (name, x) in [("omega", self.omega), ("alpha", self.alpha), ("eta", self.eta)] {
            if !(x > 0.0 && x.is_finite()) {
                return Err(BbmError::invalid(format!("{name} must be positive, got {x}")));
            }
        }
        Ok(())
    }
}

/// Global variational state of HDP-B.
#[derive(Debug, Clone, PartialEq)]
pub struct HdpBModel {
    hyper: HdpHyper,
    lambda: Array2<f64>,
    a: Array1<f64>,
    b: Array1<f64>,
}

impl HdpBModel {
    pub fn new(hyper: HdpHyper, lambda: Array2<f64>, a: Array1<f64>, b: Array1<f64>) -> Result<Self> {
        hyper.validate()?;
        let k = hyper.num_topics;
        if lambda.nrows() != k || lambda.ncols() == 0 {
            return Err(BbmError::Dimension {
                context: "HDP lambda rows",
                expected: k,
                found: lambda.nrows(),
            });
        }
        if a.len() != k || b.len() != k {
            return Err(BbmError::Dimension {
                context: "corpus sticks",
                expected: k,
                found: a.len().min(b.len()),
            });
        }
        if !lambda.iter().all(|&x| x > 0.0 && x.is_finite()) {
            return Err(BbmError::invalid("lambda must be positive"));
        }
        check_sticks(a.as_slice().unwrap(), b.as_slice().unwrap())?;
        Ok(Self { hyper, lambda, a, b })
    }

    /// λ = η + Uniform(0, 1) noise, a = 1, b = ω.
    pub fn init(hyper: HdpHyper, vocab_size: usize, seed: u64) -> Result<Self> {
        hyper.validate()?;
        if vocab_size == 0 {
            return Err(BbmError::invalid("V must be positive"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut lambda = Array2::zeros((hyper.num_topics, vocab_size));
        for x in lambda.iter_mut() {
            let u: f64 = rng.sample(Open01);
            *x = hyper.eta + u;
        }
        let a = Array1::ones(hyper.num_topics);
        let b = Array1::from_elem(hyper.num_topics, hyper.omega);
        Self::new(hyper, lambda, a, b)
    }

    pub fn hyper(&self) -> &HdpHyper {
        &self.hyper
    }

    pub fn num_topics(&self) -> usize {
        self.hyper.num_topics
    }

    pub fn doc_truncation(&self) -> usize {
        self.hyper.doc_truncation
    }

    pub fn vocab_size(&self) -> usize {
        self.lambda.ncols()
    }

    pub fn lambda(&self) -> &Array2<f64> {
        &self.lambda
    }

    pub fn sticks(&self) -> (&Array1<f64>, &Array1<f64>) {
        (&self.a, &self.b)
    }

    pub fn expected_log_beta(&self) -> Array2<f64> {
        dirichlet_expectation_rows(&self.lambda)
    }

    pub fn topic_word(&self) -> Array2<f64> {
        crate::math::row_normalize(&self.lambda)
    }

    /// E[log σ_k(V)] over the K corpus sticks.
    pub fn corpus_stick_expectations(&self) -> Array1<f64> {
        stick_expectations(self.a.as_slice().unwrap(), self.b.as_slice().unwrap())
            .expect("validated sticks")
    }

    /// E[σ_k(V)], a probability vector over the K topics.
    pub fn expected_corpus_weights(&self) -> Array1<f64> {
        expected_stick_weights(self.a.as_slice().unwrap(), self.b.as_slice().unwrap())
            .expect("validated sticks")
    }

    pub fn context(&self) -> HdpContext {
        HdpContext {
            elog_beta_by_word: self
                .expected_log_beta()
                .t()
                .as_standard_layout()
                .into_owned(),
            elog_corpus_sticks: self.corpus_stick_expectations(),
            alpha: self.hyper.alpha,
            doc_truncation: self.hyper.doc_truncation,
        }
    }

    /// Header `K T omega alpha eta`, λ rows, then the a row and the b row.
    pub fn write_checkpoint<W: Write>(&self, mut out: W) -> Result<()> {
        let h = &self.hyper;
        writeln!(
            out,
            "{} {} {} {} {}",
            h.num_topics,
            h.doc_truncation,
            fmt_f64(h.omega),
            fmt_f64(h.alpha),
            fmt_f64(h.eta)
        )?;
        write_matrix(&mut out, &self.lambda)?;
        write_row(&mut out, self.a.view())?;
        write_row(&mut out, self.b.view())?;
        Ok(())
    }

    pub fn read_checkpoint<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = NumberedLines::new(input);
        let header = lines.next_fields()?;
        if header.len() != 5 {
            return Err(lines.error("expected header `K T omega alpha eta`"));
        }
        let hyper = HdpHyper {
            num_topics: lines.parse(&header[0])?,
            doc_truncation: lines.parse(&header[1])?,
            omega: lines.parse(&header[2])?,
            alpha: lines.parse(&header[3])?,
            eta: lines.parse(&header[4])?,
        };
        let k = hyper.num_topics;
        let first = lines.next_fields()?;
        let v = first.len();
        let mut lambda = Array2::zeros((k, v));
        for (j, f) in first.iter().enumerate() {
            lambda[[0, j]] = lines.parse(f)?;
        }
        if k > 1 {
            let rest = read_matrix(&mut lines, k - 1, v)?;
            lambda.slice_mut(ndarray::s![1.., ..]).assign(&rest);
        }
        let a = lines.next_row(k)?;
        let b = lines.next_row(k)?;
        Self::new(hyper, lambda, a, b)
    }
}

/// Read-only inputs to HDP-B local inference.
#[derive(Debug, Clone)]
pub struct HdpContext {
    elog_beta_by_word: Array2<f64>,
    elog_corpus_sticks: Array1<f64>,
    alpha: f64,
    doc_truncation: usize,
}

impl HdpContext {
    pub fn num_topics(&self) -> usize {
        self.elog_corpus_sticks.len()
    }

    pub fn vocab_size(&self) -> usize {
        self.elog_beta_by_word.nrows()
    }

    pub fn doc_truncation(&self) -> usize {
        self.doc_truncation
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn elog_corpus_sticks(&self) -> &Array1<f64> {
        &self.elog_corpus_sticks
    }

    pub fn elog_beta(&self, word: usize) -> ArrayView1<'_, f64> {
        self.elog_beta_by_word.row(word)
    }
}

/// Per-document variational parameters of HDP-B.
#[derive(Debug, Clone, PartialEq)]
pub struct HdpLocalState {
    /// T×K: document atom i → corpus topic k.
    pub zeta: Array2<f64>,
    /// One T-row per distinct term.
    pub phi: Array2<f64>,
    /// One T-row per unordered biterm.
    pub phi_tilde: Array2<f64>,
    pub gamma1: Array1<f64>,
    pub gamma2: Array1<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl HdpLocalState {
    /// E[σ_i(π_d)] over the T document sticks.
    pub fn expected_doc_weights(&self) -> Array1<f64> {
        expected_stick_weights(
            self.gamma1.as_slice().unwrap(),
            self.gamma2.as_slice().unwrap(),
        )
        .expect("positive document sticks")
    }

    /// Document topic proportions over the K corpus topics: Σ_i E[σ_i(π_d)] ζ_ik.
    pub fn topic_proportions(&self) -> Array1<f64> {
        self.expected_doc_weights().dot(&self.zeta)
    }
}

/// Per-document likelihood vectors: for each term and each biterm, the
/// K-vector of E[log β] (summed over both words for a biterm), with weights.
#[derive(Debug, Clone)]
pub struct DocumentLikelihood {
    /// (count, E[log β_{·,w}]) per term.
    pub terms: Vec<(f64, Array1<f64>)>,
    /// (2·m, E[log β_{·,w1}] + E[log β_{·,w2}]) per biterm.
    pub biterms: Vec<(f64, Array1<f64>)>,
}

impl DocumentLikelihood {
    pub fn new(doc: &BobDocument, ctx: &HdpContext) -> Self {
        let terms = doc
            .terms
            .iter()
            .map(|&(w, c)| (c, ctx.elog_beta(w).to_owned()))
            .collect();
        let biterms = doc
            .biterms
            .iter()
            .map(|b| (b.multiplicity(), &ctx.elog_beta(b.first) + &ctx.elog_beta(b.second)))
            .collect();
        Self { terms, biterms }
    }

    fn items(&self) -> impl Iterator<Item = &(f64, Array1<f64>)> {
        self.terms.iter().chain(self.biterms.iter())
    }
}

fn non_finite(stage: &'static str) -> BbmError {
    BbmError::NonFinite {
        stage,
        document: None,
    }
}

/// Initial ζ: every atom gets the softmax of the document's summed E[log β].
pub fn initial_zeta(lik: &DocumentLikelihood, k: usize, t: usize) -> Result<Array2<f64>> {
    let mut row = Array1::<f64>::zeros(k);
    for (weight, eb) in lik.items() {
        row.scaled_add(*weight, eb);
    }
    normalize_log_weights(row.view_mut()).ok_or_else(|| non_finite("zeta initialization"))?;
    let mut zeta = Array2::zeros((t, k));
    for mut r in zeta.axis_iter_mut(Axis(0)) {
        r.assign(&row);
    }
    Ok(zeta)
}

/// Atom assignments for a list of likelihood vectors:
/// row_i ∝ exp{prior_i + Σ_k ζ_ik eb_k}. `prior` is `None` on the first pass.
fn assign_atoms(
    items: &[(f64, Array1<f64>)],
    zeta: &Array2<f64>,
    prior: Option<&Array1<f64>>,
    stage: &'static str,
) -> Result<Array2<f64>> {
    let t = zeta.nrows();
    let mut out = Array2::zeros((items.len(), t));
    for (mut row, (_, eb)) in out.axis_iter_mut(Axis(0)).zip(items) {
        row.assign(&zeta.dot(eb));
        if let Some(p) = prior {
            row += p;
        }
        normalize_log_weights(row).ok_or_else(|| non_finite(stage))?;
    }
    Ok(out)
}

/// φ_n^i ∝ exp{E[log σ_i(π_d)] + Σ_k ζ_ik E[log β_{k,w_n}]}.
pub fn update_phi(
    lik: &DocumentLikelihood,
    zeta: &Array2<f64>,
    elog_doc_sticks: Option<&Array1<f64>>,
) -> Result<Array2<f64>> {
    assign_atoms(&lik.terms, zeta, elog_doc_sticks, "HDP phi update")
}

/// φ̃_m^i ∝ exp{E[log σ_i(π_d)] + Σ_k ζ_ik (E[log β_{k,w1}] + E[log β_{k,w2}])}.
pub fn update_phi_tilde(
    lik: &DocumentLikelihood,
    zeta: &Array2<f64>,
    elog_doc_sticks: Option<&Array1<f64>>,
) -> Result<Array2<f64>> {
    assign_atoms(&lik.biterms, zeta, elog_doc_sticks, "HDP phi-tilde update")
}

/// Document stick parameters:
/// γ¹_i = 1 + Σ φ^i, γ²_i = α + Σ Σ_{j>i} φ^j (weighted by counts).
pub fn update_doc_sticks(
    lik: &DocumentLikelihood,
    phi: &Array2<f64>,
    phi_tilde: &Array2<f64>,
    alpha: f64,
) -> (Array1<f64>, Array1<f64>) {
    let t = phi.ncols().max(phi_tilde.ncols());
    let mut mass = Array1::<f64>::zeros(t);
    for (row, (w, _)) in phi.axis_iter(Axis(0)).zip(&lik.terms) {
        mass.scaled_add(*w, &row);
    }
    for (row, (w, _)) in phi_tilde.axis_iter(Axis(0)).zip(&lik.biterms) {
        mass.scaled_add(*w, &row);
    }
    let gamma1 = mass.mapv(|m| 1.0 + m);
    let mut gamma2 = Array1::zeros(t);
    let mut tail = 0.0;
    for i in (0..t).rev() {
        gamma2[i] = alpha + tail;
        tail += mass[i];
    }
    (gamma1, gamma2)
}

/// ζ_ik ∝ exp{E[log σ_k(V)] + Σ_n φ_n^i E[log β_{k,w_n}] + Σ_m φ̃_m^i (…)}.
pub fn update_zeta(
    lik: &DocumentLikelihood,
    phi: &Array2<f64>,
    phi_tilde: &Array2<f64>,
    elog_corpus_sticks: &Array1<f64>,
) -> Result<Array2<f64>> {
    let t = phi.ncols().max(phi_tilde.ncols());
    let k = elog_corpus_sticks.len();
    let mut zeta = Array2::zeros((t, k));
    for mut row in zeta.axis_iter_mut(Axis(0)) {
        row.assign(elog_corpus_sticks);
    }
    let weighted = phi
        .axis_iter(Axis(0))
        .zip(&lik.terms)
        .chain(phi_tilde.axis_iter(Axis(0)).zip(&lik.biterms));
    for (assign, (w, eb)) in weighted {
        for (i, mut row) in zeta.axis_iter_mut(Axis(0)).enumerate() {
            row.scaled_add(w * assign[i], eb);
        }
    }
    for row in zeta.axis_iter_mut(Axis(0)) {
        normalize_log_weights(row).ok_or_else(|| non_finite("zeta update"))?;
    }
    Ok(zeta)
}

/// Local coordinate ascent for one document with the global state fixed.
pub fn hdp_local_step(
    doc: &BobDocument,
    ctx: &HdpContext,
    opts: &LocalOptions,
) -> Result<HdpLocalState> {
    hdp_local_step_observed(doc, ctx, opts, |_| {})
}

/// [`hdp_local_step`] calling `observe` after each full sweep.
pub fn hdp_local_step_observed<F: FnMut(&HdpLocalState)>(
    doc: &BobDocument,
    ctx: &HdpContext,
    opts: &LocalOptions,
    mut observe: F,
) -> Result<HdpLocalState> {
    if doc.terms.is_empty() {
        return Err(BbmError::invalid("local inference needs a nonempty document"));
    }
    if let Some(w) = doc.max_word_id() {
        if w >= ctx.vocab_size() {
            return Err(BbmError::VocabularyMismatch(format!(
                "word id {w} outside model vocabulary of size {}",
                ctx.vocab_size()
            )));
        }
    }
    let lik = DocumentLikelihood::new(doc, ctx);
    let t = ctx.doc_truncation;
    let mut zeta = initial_zeta(&lik, ctx.num_topics(), t)?;
    let mut phi = update_phi(&lik, &zeta, None)?;
    let mut phi_tilde = update_phi_tilde(&lik, &zeta, None)?;
    let mut state = HdpLocalState {
        zeta: zeta.clone(),
        phi: phi.clone(),
        phi_tilde: phi_tilde.clone(),
        gamma1: Array1::ones(t),
        gamma2: Array1::from_elem(t, ctx.alpha),
        iterations: 0,
        converged: false,
    };
    while state.iterations < opts.max_iters {
        let (gamma1, gamma2) = update_doc_sticks(&lik, &phi, &phi_tilde, ctx.alpha);
        let elog_doc = stick_expectations(gamma1.as_slice().unwrap(), gamma2.as_slice().unwrap())?;
        let new_zeta = update_zeta(&lik, &phi, &phi_tilde, &ctx.elog_corpus_sticks)?;
        phi = update_phi(&lik, &new_zeta, Some(&elog_doc))?;
        phi_tilde = update_phi_tilde(&lik, &new_zeta, Some(&elog_doc))?;
        let change = (&new_zeta - &zeta).mapv(f64::abs).mean().unwrap_or(0.0);
        zeta = new_zeta;
        state.zeta = zeta.clone();
        state.phi = phi.clone();
        state.phi_tilde = phi_tilde.clone();
        state.gamma1 = gamma1;
        state.gamma2 = gamma2;
        state.iterations += 1;
        observe(&state);
        if change < opts.tol {
            state.converged = true;
            break;
        }
    }
    Ok(state)
}

/// Document-level lower bound of HDP-B for the given local state.
///
/// Includes the corpus-index term for ζ, the document stick prior and
/// entropy (first T−1 sticks), and the term/biterm assignment and
/// likelihood terms with their entropies.
pub fn hdp_document_elbo(doc: &BobDocument, ctx: &HdpContext, state: &HdpLocalState) -> f64 {
    let lik = DocumentLikelihood::new(doc, ctx);
    let alpha = ctx.alpha;
    let g1 = state.gamma1.as_slice().unwrap();
    let g2 = state.gamma2.as_slice().unwrap();
    let elog_doc = stick_expectations(g1, g2).expect("positive sticks");

    let mut bound = 0.0;
    for row in state.zeta.axis_iter(Axis(0)) {
        bound += row.dot(&ctx.elog_corpus_sticks) - neg_entropy(row);
    }
    for i in 0..g1.len().saturating_sub(1) {
        let total = digamma(g1[i] + g2[i]);
        let e_log_p = digamma(g1[i]) - total;
        let e_log_1mp = digamma(g2[i]) - total;
        bound += ln_gamma(1.0 + alpha) - ln_gamma(alpha) + (alpha - 1.0) * e_log_1mp;
        bound -= ln_gamma(g1[i] + g2[i]) - ln_gamma(g1[i]) - ln_gamma(g2[i])
            + (g1[i] - 1.0) * e_log_p
            + (g2[i] - 1.0) * e_log_1mp;
    }
    let weighted = state
        .phi
        .axis_iter(Axis(0))
        .zip(&lik.terms)
        .chain(state.phi_tilde.axis_iter(Axis(0)).zip(&lik.biterms));
    for (assign, (w, eb)) in weighted {
        let atom_lik = state.zeta.dot(eb);
        let expected: f64 = (0..assign.len())
            .map(|i| assign[i] * (elog_doc[i] + atom_lik[i]))
            .sum();
        bound += w * (expected - neg_entropy(assign));
    }
    bound
}

/// Sufficient statistics of a minibatch for the global update.
#[derive(Debug, Clone)]
pub struct HdpStats {
    /// K×V: Σ_i ζ_ik (Σ_n φ_n^i 1[w_n=v] + Σ_m φ̃_m^i (1[w1=v] + 1[w2=v])).
    pub topic_word: Array2<f64>,
    /// K: Σ_i ζ_ik.
    pub topic_mass: Array1<f64>,
    pub docs: usize,
}

impl HdpStats {
    pub fn zeros(k: usize, v: usize) -> Self {
        Self {
            topic_word: Array2::zeros((k, v)),
            topic_mass: Array1::zeros(k),
            docs: 0,
        }
    }

    pub fn accumulate(&mut self, doc: &BobDocument, state: &HdpLocalState) {
        // Per-word atom mass, then mapped through ζ to topics.
        for (assign, &(w, c)) in state.phi.axis_iter(Axis(0)).zip(&doc.terms) {
            let topic = state.zeta.t().dot(&assign);
            self.topic_word.column_mut(w).scaled_add(c, &topic);
        }
        for (assign, b) in state.phi_tilde.axis_iter(Axis(0)).zip(&doc.biterms) {
            let topic = state.zeta.t().dot(&assign);
            let mult = b.multiplicity();
            self.topic_word.column_mut(b.first).scaled_add(mult, &topic);
            self.topic_word.column_mut(b.second).scaled_add(mult, &topic);
        }
        self.topic_mass += &state.zeta.sum_axis(Axis(0));
        self.docs += 1;
    }
}

/// Global step: intermediate λ̂, â, b̂ from minibatch statistics scaled by
/// D/|C|, then a ρ-blend with the current values.
pub fn hdp_global_update(
    model: &mut HdpBModel,
    stats: &HdpStats,
    corpus_size: f64,
    rho: f64,
) -> Result<()> {
    if !(0.0..=1.0).contains(&rho) {
        return Err(BbmError::invalid(format!("rho must lie in [0, 1], got {rho}")));
    }
    if stats.docs == 0 {
        return Ok(());
    }
    let scale = corpus_size / stats.docs as f64;
    let h = model.hyper;
    let lambda_hat = stats.topic_word.mapv(|x| h.eta + scale * x);
    let a_hat = stats.topic_mass.mapv(|x| 1.0 + scale * x);
    let k = h.num_topics;
    let mut b_hat = Array1::zeros(k);
    let mut tail = 0.0;
    for i in (0..k).rev() {
        b_hat[i] = h.omega + scale * tail;
        tail += stats.topic_mass[i];
    }
    let lambda = &model.lambda * (1.0 - rho) + lambda_hat * rho;
    let a = &model.a * (1.0 - rho) + a_hat * rho;
    let b = &model.b * (1.0 - rho) + b_hat * rho;
    if !lambda.iter().chain(a.iter()).chain(b.iter()).all(|&x| x > 0.0 && x.is_finite()) {
        return Err(non_finite("HDP global update"));
    }
    model.lambda = lambda;
    model.a = a;
    model.b = b;
    Ok(())
}

/// Runs local inference over a minibatch and reduces statistics in input
/// order. Documents without terms are skipped.
pub fn hdp_batch_stats(
    docs: &[BobDocument],
    ctx: &HdpContext,
    opts: &LocalOptions,
    parallelism: Parallelism,
) -> Result<HdpStats> {
    let locals = parallelism.try_map(docs, |i, doc| {
        if doc.terms.is_empty() {
            Ok(None)
        } else {
            hdp_local_step(doc, ctx, opts)
                .map(Some)
                .map_err(|e| e.with_document(i))
        }
    })?;
    let mut stats = HdpStats::zeros(ctx.num_topics(), ctx.vocab_size());
    for (doc, local) in docs.iter().zip(&locals) {
        if let Some(local) = local {
            stats.accumulate(doc, local);
        }
    }
    Ok(stats)
}

/// Online HDP-B training over a document stream, minibatch by minibatch,
/// with ρ_t = (τ + t)^−κ.
pub fn hdp_svi<F>(
    model: &mut HdpBModel,
    docs: &[BobDocument],
    config: &LearnerConfig,
    mut on_step: F,
) -> Result<Vec<StepReport>>
where
    F: FnMut(&StepReport, &HdpBModel) -> Result<Option<f64>>,
{
    if config.mode != LearnerMode::Svi {
        return Err(BbmError::invalid("HDP-B is trained with SVI only"));
    }
    config.validate()?;
    let order = visit_order(docs.len(), config);
    let mut reports = Vec::new();
    for (i, chunk) in order.chunks(config.batch_size).enumerate() {
        let step = i + 1;
        let start = Instant::now();
        let batch: Vec<BobDocument> = chunk.iter().map(|&d| docs[d].clone()).collect();
        let rho = learning_rate(config.tau, config.kappa, step as f64)?;
        let stats = hdp_batch_stats(&batch, &model.context(), &config.local, config.parallelism)?;
        hdp_global_update(model, &stats, config.corpus_size as f64, rho)?;
        let mut report = StepReport {
            step,
            rho: Some(rho),
            docs: stats.docs,
            skipped: batch.len() - stats.docs,
            elapsed_ms: start.elapsed().as_secs_f64() * 1e3,
            heldout_lpp: None,
        };
        report.heldout_lpp = on_step(&report, model)?;
        reports.push(report);
    }
    Ok(reports)
}
