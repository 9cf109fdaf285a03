use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use log::{info, warn};

use bbm::corpus::{
    encode_with_vocabulary, export_features, preprocess, PreprocessOptions, Representation,
};
use bbm::eval::{
    lpp, npmi, top_words, write_report, write_top_words, HdpProportions, LdaProportions,
    ProportionInference, TopicWordDist,
};
use bbm::hdp_b::{hdp_svi, HdpHyper};
use bbm::streaming::{load_prior_embeddings, train_lda, write_metrics_csv, LearnerConfig, LearnerMode};
use bbm::{
    BitermVocabulary, BobDocument, Corpus, Document, HdpBModel, LdaBModel, LocalOptions,
    Parallelism, TopicPrior, Vocabulary,
};

use crate::args::{
    EvalArgs, ExportArgs, Learner, ModelKind, PreprocessArgs, Repr, TopWordsArgs, TrainArgs,
    WeightingArg,
};
use crate::settings::{usage, Settings};

const LARGE_CORPUS: usize = 50_000;

fn open(path: &Path) -> Result<BufReader<File>> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(BufReader::new(f))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn out_dir(settings: &mut Settings, flag: Option<PathBuf>) -> Result<PathBuf> {
    settings.require("out-dir", flag)
}

fn prepare_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating directory {}", dir.display()))
}

fn read_vocab(path: &Path) -> Result<Vocabulary> {
    Vocabulary::read(open(path)?).with_context(|| format!("reading vocabulary {}", path.display()))
}

fn read_corpus(path: &Path, vocab: &Vocabulary) -> Result<Corpus> {
    Corpus::read_bag(open(path)?, vocab.clone())
        .with_context(|| format!("reading corpus {}", path.display()))
}

fn read_labels(path: &Path, corpus: Corpus) -> Result<Corpus> {
    let labels: Vec<String> = open(path)?.lines().collect::<std::io::Result<_>>()?;
    if labels.len() != corpus.num_docs() {
        return Err(usage(format!(
            "{} has {} labels but the corpus has {} documents",
            path.display(),
            labels.len(),
            corpus.num_docs()
        )));
    }
    let docs: Vec<Document> = corpus
        .docs()
        .iter()
        .zip(labels)
        .map(|(d, l)| d.clone().with_label(Some(l).filter(|l| !l.is_empty())))
        .collect();
    Ok(Corpus::new(docs, corpus.vocab().clone())?)
}

fn positive<T: PartialOrd + Default + std::fmt::Display>(name: &str, value: T) -> Result<()> {
    if value > T::default() {
        Ok(())
    } else {
        Err(usage(format!("--{name} must be positive, got {value}")))
    }
}

fn bob_documents(corpus: &Corpus, repr: Repr) -> Vec<BobDocument> {
    corpus
        .docs()
        .iter()
        .map(|d| match repr {
            Repr::Bob => BobDocument::from_document(d),
            Repr::Bow => BobDocument::terms_only(d),
        })
        .collect()
}

/// Maps the worker count onto an execution strategy. Only the first call in
/// a process can size the global rayon pool.
pub fn parallelism(workers: usize) -> Result<Parallelism> {
    if workers == 1 {
        return Ok(Parallelism::Sequential);
    }
    #[cfg(feature = "parallel")]
    {
        if workers > 1 {
            if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(workers).build_global() {
                warn!("could not size the worker pool: {e}");
            }
        }
        Ok(Parallelism::Rayon)
    }
    #[cfg(not(feature = "parallel"))]
    {
        if workers > 1 {
            warn!("built without the `parallel` feature; running on one thread");
        }
        Ok(Parallelism::Sequential)
    }
}

fn workers(settings: &mut Settings, flag: Option<usize>) -> Result<Parallelism> {
    parallelism(settings.or("workers", flag, 0)?)
}

fn finish(settings: &Settings, dir: &Path) -> Result<()> {
    settings.warn_unused();
    let path = settings.write_to(dir)?;
    info!("resolved settings written to {}", path.display());
    Ok(())
}

pub fn preprocess_cmd(args: PreprocessArgs, mut s: Settings, workers_flag: Option<usize>) -> Result<()> {
    let input: PathBuf = s.require("input", args.input)?;
    let dir = out_dir(&mut s, args.out_dir)?;
    let stopwords: Option<PathBuf> = s.get("stopwords", args.stopwords)?;
    let fixed_vocab: Option<PathBuf> = s.get("vocab", args.vocab)?;
    let min_doc_len = s.or("min-doc-len", args.min_doc_len, 3)?;
    let min_df = if fixed_vocab.is_some() {
        if args.min_df.is_some() {
            return Err(usage("--min-df has no effect with a fixed --vocab"));
        }
        None
    } else {
        Some(s.or("min-df", args.min_df, 3)?)
    };
    workers(&mut s, workers_flag)?;
    if let Some(m) = min_df {
        positive("min-df", m)?;
    }

    let mut opts = PreprocessOptions {
        min_doc_len,
        min_df: min_df.unwrap_or(1),
        ..Default::default()
    };
    if let Some(path) = &stopwords {
        opts.stopwords = PreprocessOptions::read_stopwords(open(path)?)?;
    }
    let lines: Vec<String> = open(&input)?.lines().collect::<std::io::Result<_>>()?;
    let corpus = match &fixed_vocab {
        Some(path) => {
            let vocab = read_vocab(path)?;
            let (corpus, unseen) = encode_with_vocabulary(&lines, &opts, &vocab)?;
            info!("{unseen} tokens outside the fixed vocabulary were dropped");
            corpus
        }
        None => preprocess(&lines, &opts)?,
    };

    prepare_dir(&dir)?;
    let mut out = create(&dir.join("vocab.txt"))?;
    corpus.vocab().write(&mut out)?;
    out.flush()?;
    let mut out = create(&dir.join("corpus.bag"))?;
    corpus.write_bag(&mut out)?;
    out.flush()?;
    let labels = dir.join("labels.txt");
    if corpus.docs().iter().any(|d| d.label.is_some()) {
        let mut out = create(&labels)?;
        for d in corpus.docs() {
            writeln!(out, "{}", d.label.as_deref().unwrap_or(""))?;
        }
        out.flush()?;
    } else if labels.exists() {
        fs::remove_file(&labels)?;
    }
    info!(
        "{} documents, {} vocabulary words written to {}",
        corpus.num_docs(),
        corpus.num_words(),
        dir.display()
    );
    finish(&s, &dir)
}

pub fn train_cmd(args: TrainArgs, mut s: Settings, workers_flag: Option<usize>) -> Result<()> {
    let corpus_path: PathBuf = s.require("corpus", args.corpus)?;
    let vocab_path: PathBuf = s.require("vocab", args.vocab)?;
    let dir = out_dir(&mut s, args.out_dir)?;
    let model = s.or("model", args.model, ModelKind::LdaB)?;
    let repr = s.or("repr", args.repr, Repr::Bob)?;
    let learner = s.or("learner", args.learner, Learner::Svi)?;
    let k = s.or("K", args.k, 100)?;
    let t: Option<usize> = s.get("T", args.t)?;
    let omega: Option<f64> = s.get("omega", args.omega)?;
    let prior: Option<PathBuf> = s.get("prior", args.prior)?;
    let alpha = s.or("alpha", args.alpha, 1.0)?;
    let eta = s.or("eta", args.eta, 0.01)?;
    let tau = s.or("tau", args.tau, 1.0)?;
    let kappa = s.or("kappa", args.kappa, 0.9)?;
    let batch_flag: Option<usize> = s.get("batch-size", args.batch_size)?;
    let d_flag: Option<usize> = s.get("D", args.d)?;
    let seed = s.or("seed", args.seed, 0u64)?;
    let passes = s.or("passes", args.passes, 1)?;
    let shuffle = s.switch("shuffle", args.shuffle)?;
    let heldout: Option<PathBuf> = s.get("heldout", args.heldout)?;
    let par = workers(&mut s, workers_flag)?;

    match (learner, &prior) {
        (Learner::Kps, None) => return Err(usage("--learner kps requires --prior")),
        (Learner::Svi | Learner::Svb, Some(_)) => {
            return Err(usage("--prior is only used by --learner kps"))
        }
        _ => {}
    }
    if model == ModelKind::LdaB {
        if t.is_some() {
            return Err(usage("--T only applies to --model hdp-b"));
        }
        if omega.is_some() {
            return Err(usage("--omega only applies to --model hdp-b"));
        }
    }
    if model == ModelKind::HdpB && learner != Learner::Svi {
        return Err(usage("--model hdp-b is trained with --learner svi only"));
    }
    positive("K", k)?;
    positive("alpha", alpha)?;
    positive("eta", eta)?;
    positive("passes", passes)?;
    if let Some(t) = t {
        positive("T", t)?;
        if t > k {
            return Err(usage(format!("--T ({t}) must not exceed --K ({k})")));
        }
    }
    if let Some(w) = omega {
        positive("omega", w)?;
    }
    if let Some(b) = batch_flag {
        positive("batch-size", b)?;
    }
    if let Some(d) = d_flag {
        positive("D", d)?;
    }
    if learner == Learner::Svi {
        if !(tau >= 0.0) {
            return Err(usage(format!("--tau must be nonnegative, got {tau}")));
        }
        if !(kappa > 0.5 && kappa <= 1.0) {
            return Err(usage(format!("--kappa must lie in (0.5, 1], got {kappa}")));
        }
    }

    let vocab = read_vocab(&vocab_path)?;
    let corpus = read_corpus(&corpus_path, &vocab)?;
    let n = corpus.num_docs();
    let batch_size = batch_flag.unwrap_or(if n >= LARGE_CORPUS { 5000 } else { n.min(500) });
    s.record("batch-size", &batch_size);
    let corpus_size = d_flag.unwrap_or(n);
    s.record("D", &corpus_size);
    let heldout_corpus = heldout.as_deref().map(|p| read_corpus(p, &vocab)).transpose()?;

    let config = LearnerConfig {
        mode: match learner {
            Learner::Svi => LearnerMode::Svi,
            Learner::Svb => LearnerMode::Svb,
            Learner::Kps => LearnerMode::Kps,
        },
        tau,
        kappa,
        batch_size,
        corpus_size,
        passes,
        shuffle,
        seed,
        local: LocalOptions::default(),
        parallelism: par,
    };
    config.validate().map_err(|e| usage(e.to_string()))?;
    let docs = bob_documents(&corpus, repr);
    info!("training on {n} documents, V = {}, batch size {batch_size}", vocab.len());

    let heldout_lpp = |topics: &TopicWordDist, inf: &dyn ProportionInference| -> Result<Option<f64>> {
        match &heldout_corpus {
            Some(c) => Ok(Some(lpp(topics, inf, c.docs(), seed, par)?.mean)),
            None => Ok(None),
        }
    };

    prepare_dir(&dir)?;
    let (reports, checkpoint) = match model {
        ModelKind::LdaB => {
            let kps_prior = match &prior {
                Some(path) => Some(load_prior_embeddings(open(path)?, &vocab, k)?.into_prior()),
                None => None,
            };
            let mut m = LdaBModel::init(k, vocab.len(), alpha, TopicPrior::Symmetric(eta), seed)?;
            let reports = train_lda(&mut m, &docs, &config, kps_prior.as_ref(), |r, m| {
                let lpp = if heldout_corpus.is_some() {
                    let topics = TopicWordDist::from_lambda(m.lambda())?;
                    let inf = LdaProportions::new(m, repr.biterms(), LocalOptions::default());
                    heldout_lpp(&topics, &inf).map_err(into_bbm)?
                } else {
                    None
                };
                log_step(r.step, lpp);
                Ok(lpp)
            })?;
            let mut buf = Vec::new();
            m.write_checkpoint(&mut buf)?;
            (reports, buf)
        }
        ModelKind::HdpB => {
            let hyper = HdpHyper {
                num_topics: k,
                doc_truncation: t.unwrap_or(k.min(20)),
                omega: omega.unwrap_or(1.0),
                alpha,
                eta,
            };
            s.record("T", &hyper.doc_truncation);
            s.record("omega", &hyper.omega);
            let mut m = HdpBModel::init(hyper, vocab.len(), seed)?;
            let reports = hdp_svi(&mut m, &docs, &config, |r, m| {
                let lpp = if heldout_corpus.is_some() {
                    let topics = TopicWordDist::from_lambda(m.lambda())?;
                    let inf = HdpProportions::new(m, repr.biterms(), LocalOptions::default());
                    heldout_lpp(&topics, &inf).map_err(into_bbm)?
                } else {
                    None
                };
                log_step(r.step, lpp);
                Ok(lpp)
            })?;
            let mut buf = Vec::new();
            m.write_checkpoint(&mut buf)?;
            (reports, buf)
        }
    };
    fs::write(dir.join("model.ckpt"), checkpoint).context("writing model.ckpt")?;
    let mut out = create(&dir.join("metrics.csv"))?;
    write_metrics_csv(&reports, &mut out)?;
    out.flush()?;
    info!("{} steps, checkpoint written to {}", reports.len(), dir.display());
    finish(&s, &dir)
}

fn log_step(step: usize, lpp: Option<f64>) {
    match lpp {
        Some(x) => info!("step {step}: held-out LPP {x:.4}"),
        None => info!("step {step} done"),
    }
}

fn into_bbm(e: anyhow::Error) -> bbm::BbmError {
    match e.downcast::<bbm::BbmError>() {
        Ok(b) => b,
        Err(other) => bbm::BbmError::InvalidParameter(format!("{other:#}")),
    }
}

enum Checkpoint {
    Lda(LdaBModel),
    Hdp(HdpBModel),
}

impl Checkpoint {
    fn read(path: &Path, model: ModelKind) -> Result<Self> {
        let input = open(path)?;
        let ctx = || format!("reading {} checkpoint {}", settings_name(model), path.display());
        Ok(match model {
            ModelKind::LdaB => Checkpoint::Lda(LdaBModel::read_checkpoint(input).with_context(ctx)?),
            ModelKind::HdpB => Checkpoint::Hdp(HdpBModel::read_checkpoint(input).with_context(ctx)?),
        })
    }

    fn vocab_size(&self) -> usize {
        match self {
            Checkpoint::Lda(m) => m.vocab_size(),
            Checkpoint::Hdp(m) => m.vocab_size(),
        }
    }

    fn topics(&self) -> Result<TopicWordDist> {
        Ok(match self {
            Checkpoint::Lda(m) => TopicWordDist::from_lambda(m.lambda())?,
            Checkpoint::Hdp(m) => TopicWordDist::from_lambda(m.lambda())?,
        })
    }

    fn check_vocab(&self, vocab: &Vocabulary) -> Result<()> {
        if self.vocab_size() != vocab.len() {
            return Err(bbm::BbmError::VocabularyMismatch(format!(
                "checkpoint has V = {} but the vocabulary file has {} words",
                self.vocab_size(),
                vocab.len()
            ))
            .into());
        }
        Ok(())
    }
}

fn settings_name(model: ModelKind) -> String {
    crate::settings::value_name(&model)
}

pub fn eval_cmd(args: EvalArgs, mut s: Settings, workers_flag: Option<usize>) -> Result<()> {
    let ckpt_path: PathBuf = s.require("checkpoint", args.checkpoint)?;
    let model = s.or("model", args.model, ModelKind::LdaB)?;
    let repr = s.or("repr", args.repr, Repr::Bob)?;
    let vocab_path: PathBuf = s.require("vocab", args.vocab)?;
    let corpus_path: PathBuf = s.require("corpus", args.corpus)?;
    let reference_path: Option<PathBuf> = s.get("reference", args.reference)?;
    let top_n = s.or("top-n", args.top_n, bbm::eval::DEFAULT_TOP_N)?;
    let seed = s.or("seed", args.seed, 0u64)?;
    let dir = out_dir(&mut s, args.out_dir)?;
    let par = workers(&mut s, workers_flag)?;
    positive("top-n", top_n)?;

    let vocab = read_vocab(&vocab_path)?;
    let checkpoint = Checkpoint::read(&ckpt_path, model)?;
    checkpoint.check_vocab(&vocab)?;
    let test = read_corpus(&corpus_path, &vocab)?;
    let reference = match &reference_path {
        Some(p) => read_corpus(p, &vocab)?,
        None => test.clone(),
    };

    let topics = checkpoint.topics()?;
    let inference: Box<dyn ProportionInference> = match &checkpoint {
        Checkpoint::Lda(m) => Box::new(LdaProportions::new(m, repr.biterms(), LocalOptions::default())),
        Checkpoint::Hdp(m) => Box::new(HdpProportions::new(m, repr.biterms(), LocalOptions::default())),
    };
    let lpp_report = lpp(&topics, inference.as_ref(), test.docs(), seed, par)?;
    let npmi_report = npmi(&topics, reference.docs(), top_n)?;
    info!(
        "LPP {:.4} over {} documents ({} skipped), NPMI {:.4}",
        lpp_report.mean, lpp_report.documents, lpp_report.skipped, npmi_report.mean
    );

    prepare_dir(&dir)?;
    let mut out = create(&dir.join("report.csv"))?;
    write_report(&mut out, Some(&lpp_report), Some(&npmi_report))?;
    out.flush()?;
    finish(&s, &dir)
}

pub fn export_cmd(args: ExportArgs, mut s: Settings, workers_flag: Option<usize>) -> Result<()> {
    let corpus_path: PathBuf = s.require("corpus", args.corpus)?;
    let vocab_path: PathBuf = s.require("vocab", args.vocab)?;
    let labels: Option<PathBuf> = s.get("labels", args.labels)?;
    let repr = s.or("repr", args.repr, Repr::Bob)?;
    let weighting = s.or("weighting", args.weighting, WeightingArg::Tfidf)?;
    let (threshold, biterm_corpus) = if repr == Repr::Bob {
        let t = s.or("biterm-threshold", args.biterm_threshold, 1)?;
        (t, s.get::<PathBuf>("biterm-corpus", args.biterm_corpus)?)
    } else {
        if args.biterm_threshold.is_some() || args.biterm_corpus.is_some() {
            return Err(usage("biterm options only apply to --repr bob"));
        }
        (1, None)
    };
    let dir = out_dir(&mut s, args.out_dir)?;
    workers(&mut s, workers_flag)?;
    positive("biterm-threshold", threshold)?;

    let vocab = read_vocab(&vocab_path)?;
    let mut corpus = read_corpus(&corpus_path, &vocab)?;
    if let Some(path) = &labels {
        corpus = read_labels(path, corpus)?;
    }
    let bvocab = match repr {
        Repr::Bob => {
            let source = match &biterm_corpus {
                Some(p) => read_corpus(p, &vocab)?,
                None => corpus.clone(),
            };
            let b = BitermVocabulary::build(&source, threshold)?;
            info!("biterm vocabulary: {} features ({} pairs)", b.size(), b.pairs().len());
            Some(b)
        }
        Repr::Bow => None,
    };

    prepare_dir(&dir)?;
    let mut out = create(&dir.join("features.svm"))?;
    let summary = export_features(
        &corpus,
        Representation::from(repr),
        weighting.into(),
        bvocab.as_ref(),
        &mut out,
    )?;
    out.flush()?;
    if summary.empty_documents > 0 {
        warn!("{} documents have no nonzero features", summary.empty_documents);
    }
    info!("{} documents exported", summary.documents);
    finish(&s, &dir)
}

pub fn top_words_cmd(args: TopWordsArgs, mut s: Settings, workers_flag: Option<usize>) -> Result<()> {
    let ckpt_path: PathBuf = s.require("checkpoint", args.checkpoint)?;
    let model = s.or("model", args.model, ModelKind::LdaB)?;
    let vocab_path: PathBuf = s.require("vocab", args.vocab)?;
    let n = s.or("n", args.n, bbm::eval::DEFAULT_TOP_N)?;
    let dir = out_dir(&mut s, args.out_dir)?;
    workers(&mut s, workers_flag)?;
    positive("n", n)?;

    let vocab = read_vocab(&vocab_path)?;
    let checkpoint = Checkpoint::read(&ckpt_path, model)?;
    checkpoint.check_vocab(&vocab)?;
    let weights = match &checkpoint {
        Checkpoint::Lda(m) => m.topic_word(),
        Checkpoint::Hdp(m) => m.topic_word(),
    };
    prepare_dir(&dir)?;
    let mut out = create(&dir.join("top_words.txt"))?;
    write_top_words(&mut out, &top_words(&weights, n), &vocab)?;
    out.flush()?;
    finish(&s, &dir)
}
