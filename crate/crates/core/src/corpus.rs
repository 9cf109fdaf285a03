//! Corpus ingestion, vocabularies, bag-of-words and bag-of-biterms documents,
//! and sparse feature export.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::io::{BufRead, Write};

use log::warn;

use crate::error::{BbmError, Result};

/// Ordered-biterm multiplicity of an unordered cross pair: (i, j) stands for
/// both (w_i, w_j) and (w_j, w_i).
pub const PAIR_MULTIPLICITY: f64 = 2.0;

/// Documents with more distinct words than this trigger a quadratic-blowup warning.
pub const BITERM_WARN_DISTINCT: usize = 200;

/// Token ↔ id map with per-token document frequencies.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    df: Vec<usize>,
}

impl Vocabulary {
    /// Builds a vocabulary from tokens in id order; document frequencies start at zero.
    pub fn from_tokens<I, S>(tokens: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let tokens: Vec<String> = tokens.into_iter().map(Into::into).collect();
        let mut index = HashMap::with_capacity(tokens.len());
        for (id, tok) in tokens.iter().enumerate() {
            if tok.is_empty() {
                return Err(BbmError::Parse {
                    line: id + 1,
                    message: "empty token in vocabulary".into(),
                });
            }
            if index.insert(tok.clone(), id).is_some() {
                return Err(BbmError::Parse {
                    line: id + 1,
                    message: format!("duplicate token {tok:?}"),
                });
            }
        }
        let df = vec![0; tokens.len()];
        Ok(Self { tokens, index, df })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: usize) -> &str {
        &self.tokens[id]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Number of documents containing word `id`.
    pub fn df(&self, id: usize) -> usize {
        self.df[id]
    }

    fn recount_df(&mut self, docs: &[Document]) {
        self.df.iter_mut().for_each(|d| *d = 0);
        for doc in docs {
            for &(w, _) in doc.words() {
                self.df[w] += 1;
            }
        }
    }

    /// Maps tokens to a document, dropping unknown tokens. Returns the
    /// document and the number of dropped tokens.
    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> (Document, usize) {
        let mut unseen = 0;
        let ids: Vec<usize> = tokens
            .iter()
            .filter_map(|t| {
                let id = self.id(t.as_ref());
                if id.is_none() {
                    unseen += 1;
                }
                id
            })
            .collect();
        (Document::from_ids(ids), unseen)
    }

    /// One token per line; the id is the 0-based line number.
    pub fn write<W: Write>(&self, mut out: W) -> Result<()> {
        for tok in &self.tokens {
            writeln!(out, "{tok}")?;
        }
        Ok(())
    }

    pub fn read<R: BufRead>(input: R) -> Result<Self> {
        let mut tokens = Vec::new();
        for line in input.lines() {
            let line = line?;
            tokens.push(line.trim_end_matches('\r').to_string());
        }
        Self::from_tokens(tokens)
    }
}

/// A bag-of-words document: word id → positive count, ids ascending.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Document {
    words: Vec<(usize, u32)>,
    pub label: Option<String>,
}

impl Document {
    /// Builds a document from (id, count) pairs, merging duplicates and
    /// discarding zero counts.
    pub fn from_counts<I: IntoIterator<Item = (usize, u32)>>(counts: I) -> Self {
        let mut map: BTreeMap<usize, u32> = BTreeMap::new();
        for (w, c) in counts {
            if c > 0 {
                *map.entry(w).or_insert(0) += c;
            }
        }
        Self {
            words: map.into_iter().collect(),
            label: None,
        }
    }

    pub fn from_ids<I: IntoIterator<Item = usize>>(ids: I) -> Self {
        Self::from_counts(ids.into_iter().map(|w| (w, 1)))
    }

    pub fn with_label(mut self, label: Option<String>) -> Self {
        self.label = label;
        self
    }

    pub fn words(&self) -> &[(usize, u32)] {
        &self.words
    }

    /// Number of distinct words.
    pub fn distinct(&self) -> usize {
        self.words.len()
    }

    /// Total token count N_d.
    pub fn len(&self) -> usize {
        self.words.iter().map(|&(_, c)| c as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn count(&self, word: usize) -> u32 {
        self.words
            .binary_search_by_key(&word, |&(w, _)| w)
            .map(|i| self.words[i].1)
            .unwrap_or(0)
    }

    /// Expands the document into a flat token list in ascending id order.
    pub fn tokens(&self) -> Vec<usize> {
        self.words
            .iter()
            .flat_map(|&(w, c)| std::iter::repeat_n(w, c as usize))
            .collect()
    }

    pub fn max_word_id(&self) -> Option<usize> {
        self.words.last().map(|&(w, _)| w)
    }
}

/// A collection of documents over a shared vocabulary.
#[derive(Debug, Clone)]
pub struct Corpus {
    docs: Vec<Document>,
    vocab: Vocabulary,
}

impl Corpus {
    /// Assembles a corpus and recomputes document frequencies.
    pub fn new(docs: Vec<Document>, mut vocab: Vocabulary) -> Result<Self> {
        if docs.is_empty() {
            return Err(BbmError::EmptyCorpus);
        }
        for (d, doc) in docs.iter().enumerate() {
            if let Some(w) = doc.max_word_id() {
                if w >= vocab.len() {
                    return Err(BbmError::VocabularyMismatch(format!(
                        "document {d} uses word id {w} but the vocabulary has {} entries",
                        vocab.len()
                    )));
                }
            }
        }
        vocab.recount_df(&docs);
        Ok(Self { docs, vocab })
    }

    pub fn docs(&self) -> &[Document] {
        &self.docs
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn num_docs(&self) -> usize {
        self.docs.len()
    }

    pub fn num_words(&self) -> usize {
        self.vocab.len()
    }

    /// Writes the bag format: `docid term:count …`, one document per line.
    pub fn write_bag<W: Write>(&self, mut out: W) -> Result<()> {
        for (d, doc) in self.docs.iter().enumerate() {
            write!(out, "{d}")?;
            for &(w, c) in doc.words() {
                write!(out, " {w}:{c}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }

    /// Reads a bag-format file against an existing vocabulary.
    pub fn read_bag<R: BufRead>(input: R, vocab: Vocabulary) -> Result<Self> {
        let mut docs = Vec::new();
        for (lineno, line) in input.lines().enumerate() {
            let line = line?;
            let mut fields = line.split_whitespace();
            if fields.next().is_none() {
                continue;
            }
            let mut counts = Vec::new();
            for field in fields {
                let parse_err = || BbmError::Parse {
                    line: lineno + 1,
                    message: format!("malformed entry {field:?}, expected term:count"),
                };
                let (w, c) = field.split_once(':').ok_or_else(parse_err)?;
                let w: usize = w.parse().map_err(|_| parse_err())?;
                let c: u32 = c.parse().map_err(|_| parse_err())?;
                counts.push((w, c));
            }
            docs.push(Document::from_counts(counts));
        }
        Self::new(docs, vocab)
    }
}

/// Word stemming hook applied after lowercasing.
pub type Stemmer = Box<dyn Fn(&str) -> String + Send + Sync>;

pub struct PreprocessOptions {
    pub stopwords: HashSet<String>,
    pub min_df: usize,
    pub min_doc_len: usize,
    /// Identity when `None`.
    pub stemmer: Option<Stemmer>,
}

impl Default for PreprocessOptions {
    fn default() -> Self {
        Self {
            stopwords: HashSet::new(),
            min_df: 3,
            min_doc_len: 3,
            stemmer: None,
        }
    }
}

impl fmt::Debug for PreprocessOptions {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PreprocessOptions")
            .field("stopwords", &self.stopwords.len())
            .field("min_df", &self.min_df)
            .field("min_doc_len", &self.min_doc_len)
            .field("stemmer", &self.stemmer.is_some())
            .finish()
    }
}

impl PreprocessOptions {
    /// Reads a stopword list, one word per line (blank lines and `#` comments ignored).
    pub fn read_stopwords<R: BufRead>(input: R) -> Result<HashSet<String>> {
        let mut set = HashSet::new();
        for line in input.lines() {
            let line = line?;
            let w = line.trim();
            if !w.is_empty() && !w.starts_with('#') {
                set.insert(w.to_lowercase());
            }
        }
        Ok(set)
    }

    fn normalize_tokens(&self, text: &str) -> Vec<String> {
        tokenize(text)
            .into_iter()
            .filter(|t| !self.stopwords.contains(t))
            .map(|t| match &self.stemmer {
                Some(stem) => stem(&t),
                None => t,
            })
            .filter(|t| !t.is_empty() && !self.stopwords.contains(t))
            .collect()
    }
}

/// Lowercases and splits on anything that is not alphanumeric.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Splits an input line into an optional label and the text.
pub fn split_label(line: &str) -> (Option<String>, &str) {
    match line.split_once('\t') {
        Some((label, text)) => (Some(label.trim().to_string()), text),
        None => (None, line),
    }
}

/// Builds a corpus from raw lines (one document per line, optionally
/// `label<TAB>text`).
///
/// Rare-token and short-document filters are applied repeatedly until
/// neither removes anything, so every surviving token still meets `min_df`
/// after short documents are dropped.
pub fn preprocess<I, S>(raw_lines: I, opts: &PreprocessOptions) -> Result<Corpus>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let mut docs: Vec<(Option<String>, Vec<String>)> = raw_lines
        .into_iter()
        .filter_map(|line| {
            let line = line.as_ref();
            if line.trim().is_empty() {
                return None;
            }
            let (label, text) = split_label(line);
            Some((label, opts.normalize_tokens(text)))
        })
        .collect();

    loop {
        let mut df: HashMap<&str, usize> = HashMap::new();
        for (_, toks) in &docs {
            let distinct: HashSet<&str> = toks.iter().map(String::as_str).collect();
            for t in distinct {
                *df.entry(t).or_insert(0) += 1;
            }
        }
        let rare: HashSet<String> = df
            .into_iter()
            .filter(|&(_, n)| n < opts.min_df)
            .map(|(t, _)| t.to_string())
            .collect();
        let before: usize = docs.len();
        let mut removed_tokens = false;
        for (_, toks) in docs.iter_mut() {
            let n = toks.len();
            toks.retain(|t| !rare.contains(t));
            removed_tokens |= toks.len() != n;
        }
        docs.retain(|(_, toks)| toks.len() >= opts.min_doc_len.max(1));
        if !removed_tokens && docs.len() == before {
            break;
        }
    }

    if docs.is_empty() {
        return Err(BbmError::EmptyCorpus);
    }

    let mut tokens = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let documents = docs
        .into_iter()
        .map(|(label, toks)| {
            let ids: Vec<usize> = toks
                .into_iter()
                .map(|t| {
                    let next = index.len();
                    *index.entry(t.clone()).or_insert_with(|| {
                        tokens.push(t);
                        next
                    })
                })
                .collect();
            Document::from_ids(ids).with_label(label)
        })
        .collect();
    Corpus::new(documents, Vocabulary::from_tokens(tokens)?)
}

/// Reads lines from `input` and runs [`preprocess`].
pub fn preprocess_reader<R: BufRead>(input: R, opts: &PreprocessOptions) -> Result<Corpus> {
    let lines: Vec<String> = input.lines().collect::<std::io::Result<_>>()?;
    preprocess(lines, opts)
}

/// Encodes raw lines against a fixed vocabulary (test-time data). Unknown
/// tokens are dropped; documents left shorter than `min_doc_len` are removed.
/// Returns the corpus and the number of dropped tokens.
pub fn encode_with_vocabulary<I, S>(
    raw_lines: I,
    opts: &PreprocessOptions,
    vocab: &Vocabulary,
) -> Result<(Corpus, usize)>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let mut unseen = 0;
    let mut docs = Vec::new();
    for line in raw_lines {
        let line = line.as_ref();
        if line.trim().is_empty() {
            continue;
        }
        let (label, text) = split_label(line);
        let (doc, dropped) = vocab.encode(&opts.normalize_tokens(text));
        unseen += dropped;
        if doc.len() >= opts.min_doc_len.max(1) {
            docs.push(doc.with_label(label));
        }
    }
    Ok((Corpus::new(docs, vocab.clone())?, unseen))
}

/// An unordered cross pair of distinct words (`first < second`) with its
/// min-rule count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biterm {
    pub first: usize,
    pub second: usize,
    pub count: f64,
}

impl Biterm {
    /// Effective number of ordered biterm tokens this pair stands for.
    pub fn multiplicity(&self) -> f64 {
        PAIR_MULTIPLICITY * self.count
    }
}

/// Bag-of-biterms view of a document: every term with its count, plus every
/// unordered pair of distinct words weighted by the smaller of the two counts.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct BobDocument {
    pub terms: Vec<(usize, f64)>,
    pub biterms: Vec<Biterm>,
}

impl BobDocument {
    pub fn from_document(doc: &Document) -> Self {
        Self::from_document_capped(doc, None)
    }

    /// Like [`from_document`](Self::from_document) but, when `cap` is set,
    /// only the `cap` most frequent words (ties to the lower id) form biterms.
    pub fn from_document_capped(doc: &Document, cap: Option<usize>) -> Self {
        let weights: Vec<(usize, f64)> = doc.words().iter().map(|&(w, c)| (w, c as f64)).collect();
        Self::from_weights_capped(weights, cap)
    }

    /// BoB over arbitrary nonnegative term weights (e.g. tf-idf); pair weight is the min.
    pub fn from_weights(weights: Vec<(usize, f64)>) -> Self {
        Self::from_weights_capped(weights, None)
    }

    fn from_weights_capped(mut terms: Vec<(usize, f64)>, cap: Option<usize>) -> Self {
        terms.sort_by_key(|&(w, _)| w);
        terms.dedup_by(|b, a| {
            if a.0 == b.0 {
                a.1 += b.1;
                true
            } else {
                false
            }
        });
        if terms.len() > BITERM_WARN_DISTINCT {
            warn!(
                "document has {} distinct words; biterm count grows quadratically",
                terms.len()
            );
        }
        let pool: Vec<(usize, f64)> = match cap {
            Some(cap) if terms.len() > cap => {
                let mut ranked = terms.clone();
                ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
                ranked.truncate(cap);
                ranked.sort_by_key(|&(w, _)| w);
                ranked
            }
            _ => terms.clone(),
        };
        let mut biterms = Vec::with_capacity(pool.len() * pool.len().saturating_sub(1) / 2);
        for (a, &(wi, fi)) in pool.iter().enumerate() {
            for &(wj, fj) in &pool[a + 1..] {
                biterms.push(Biterm {
                    first: wi,
                    second: wj,
                    count: fi.min(fj),
                });
            }
        }
        Self { terms, biterms }
    }

    /// Terms only; the plain bag-of-words path.
    pub fn terms_only(doc: &Document) -> Self {
        Self {
            terms: doc.words().iter().map(|&(w, c)| (w, c as f64)).collect(),
            biterms: Vec::new(),
        }
    }

    /// Drops the biterms, keeping the terms.
    pub fn without_biterms(&self) -> Self {
        Self {
            terms: self.terms.clone(),
            biterms: Vec::new(),
        }
    }

    /// N_d: total term tokens.
    pub fn term_tokens(&self) -> f64 {
        self.terms.iter().map(|&(_, c)| c).sum()
    }

    /// M_d: total ordered-biterm tokens.
    pub fn biterm_tokens(&self) -> f64 {
        self.biterms.iter().map(Biterm::multiplicity).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty() && self.biterms.is_empty()
    }

    pub fn max_word_id(&self) -> Option<usize> {
        self.terms.iter().map(|&(w, _)| w).max()
    }

    /// Expands to the ordered reading: terms first (ascending id), then every
    /// ordered biterm (w_i, w_j), i ≠ j, sorted lexicographically.
    pub fn ordered_elements(&self) -> Vec<((usize, usize), f64)> {
        let mut out: Vec<((usize, usize), f64)> =
            self.terms.iter().map(|&(w, c)| ((w, w), c)).collect();
        let mut pairs: Vec<((usize, usize), f64)> = self
            .biterms
            .iter()
            .flat_map(|b| [((b.first, b.second), b.count), ((b.second, b.first), b.count)])
            .collect();
        pairs.sort_by_key(|&(p, _)| p);
        out.extend(pairs);
        out
    }
}

/// Document-frequency-thresholded vocabulary of cross pairs, laid out after
/// the V word features.
#[derive(Debug, Clone)]
pub struct BitermVocabulary {
    num_words: usize,
    threshold: usize,
    pairs: Vec<(usize, usize)>,
    index: HashMap<(usize, usize), usize>,
}

impl BitermVocabulary {
    /// Keeps every pair of distinct words that co-occurs in at least
    /// `threshold` documents.
    pub fn build(corpus: &Corpus, threshold: usize) -> Result<Self> {
        if threshold == 0 {
            return Err(BbmError::invalid("biterm threshold must be positive"));
        }
        let mut df: HashMap<(usize, usize), usize> = HashMap::new();
        for doc in corpus.docs() {
            let words = doc.words();
            for (a, &(wi, _)) in words.iter().enumerate() {
                for &(wj, _) in &words[a + 1..] {
                    *df.entry((wi, wj)).or_insert(0) += 1;
                }
            }
        }
        let mut pairs: Vec<(usize, usize)> = df
            .into_iter()
            .filter(|&(_, n)| n >= threshold)
            .map(|(p, _)| p)
            .collect();
        pairs.sort_unstable();
        let index = pairs.iter().enumerate().map(|(i, &p)| (p, i)).collect();
        Ok(Self {
            num_words: corpus.num_words(),
            threshold,
            pairs,
            index,
        })
    }

    pub fn threshold(&self) -> usize {
        self.threshold
    }

    pub fn num_words(&self) -> usize {
        self.num_words
    }

    /// Retained cross pairs in ascending order.
    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    /// V_b: word features plus retained pairs.
    pub fn size(&self) -> usize {
        self.num_words + self.pairs.len()
    }

    /// 0-based feature id of a pair (order of `i`, `j` irrelevant); `None` if
    /// the pair was not retained or `i == j`.
    pub fn pair_feature(&self, i: usize, j: usize) -> Option<usize> {
        let key = if i < j { (i, j) } else { (j, i) };
        self.index.get(&key).map(|&k| self.num_words + k)
    }

    /// Words `(i, j)` of a feature id; diagonal for word features.
    pub fn feature_words(&self, feature: usize) -> (usize, usize) {
        if feature < self.num_words {
            (feature, feature)
        } else {
            self.pairs[feature - self.num_words]
        }
    }

    /// Re-expresses a document over the V_b features: word features keep
    /// their counts, a retained pair (i, j) gets 2·min(f_i, f_j) (both
    /// orientations merged).
    pub fn feature_document(&self, doc: &Document) -> Document {
        let bob = BobDocument::from_document(doc);
        let mut counts: Vec<(usize, u32)> = doc.words().to_vec();
        for b in &bob.biterms {
            if let Some(f) = self.pair_feature(b.first, b.second) {
                counts.push((f, b.multiplicity() as u32));
            }
        }
        Document::from_counts(counts).with_label(doc.label.clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Representation {
    Bow,
    Bob,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Weighting {
    Tf,
    TfIdf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ExportSummary {
    pub documents: usize,
    /// Documents written with a label but no features.
    pub empty_documents: usize,
}

fn word_weight(corpus: &Corpus, doc_len: f64, word: usize, count: u32, weighting: Weighting) -> f64 {
    let tf = count as f64 / doc_len;
    match weighting {
        Weighting::Tf => tf,
        Weighting::TfIdf => {
            let n = corpus.num_docs() as f64;
            let df = corpus.vocab().df(word) as f64;
            tf * (n / df).ln()
        }
    }
}

/// Weighted features of one document, 0-based ids ascending. Zero weights
/// (e.g. idf of a ubiquitous word) are kept.
pub fn feature_weights(
    corpus: &Corpus,
    doc: &Document,
    repr: Representation,
    weighting: Weighting,
    bvocab: Option<&BitermVocabulary>,
) -> Result<Vec<(usize, f64)>> {
    let len = doc.len() as f64;
    let words: Vec<(usize, f64)> = doc
        .words()
        .iter()
        .map(|&(w, c)| (w, word_weight(corpus, len, w, c, weighting)))
        .collect();
    let mut out = words.clone();
    if repr == Representation::Bob {
        let bvocab = bvocab.ok_or_else(|| {
            BbmError::invalid("bag-of-biterms export requires a biterm vocabulary")
        })?;
        for (a, &(wi, xi)) in words.iter().enumerate() {
            for &(wj, xj) in &words[a + 1..] {
                if let Some(f) = bvocab.pair_feature(wi, wj) {
                    out.push((f, xi.min(xj)));
                }
            }
        }
        out.sort_by_key(|&(f, _)| f);
    }
    Ok(out)
}

/// Writes LIBSVM-style lines `<label> <fid>:<weight> …` with 1-based,
/// strictly ascending feature ids. Features with zero weight are omitted;
/// unlabeled documents get label `0`.
pub fn export_features<W: Write>(
    corpus: &Corpus,
    repr: Representation,
    weighting: Weighting,
    bvocab: Option<&BitermVocabulary>,
    mut out: W,
) -> Result<ExportSummary> {
    if repr == Representation::Bob && bvocab.is_none() {
        return Err(BbmError::invalid(
            "bag-of-biterms export requires a biterm vocabulary",
        ));
    }
    let mut summary = ExportSummary::default();
    for doc in corpus.docs() {
        let feats = feature_weights(corpus, doc, repr, weighting, bvocab)?;
        write!(out, "{}", doc.label.as_deref().unwrap_or("0"))?;
        let mut written = 0;
        for (f, x) in feats {
            if x != 0.0 {
                write!(out, " {}:{}", f + 1, x)?;
                written += 1;
            }
        }
        writeln!(out)?;
        summary.documents += 1;
        if written == 0 {
            summary.empty_documents += 1;
        }
    }
    if summary.empty_documents > 0 {
        warn!(
            "{} of {} documents have no nonzero features",
            summary.empty_documents, summary.documents
        );
    }
    Ok(summary)
}
