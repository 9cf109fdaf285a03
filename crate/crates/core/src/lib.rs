//! Topic models for short texts built on the bag-of-biterms representation.
//!
//! A document is represented by its terms plus every pair of distinct words
//! it contains (biterms), each pair weighted by the smaller of the two word
//! counts. LDA-B and HDP-B model the pairs explicitly: both words of a biterm
//! share a single topic assignment. Learners cover stochastic variational
//! inference, streaming variational Bayes and prior-keeping streaming, and
//! the evaluation module provides held-out log predictive probability and
//! NPMI coherence.

pub mod corpus;
pub mod error;
pub mod eval;
pub mod hdp_b;
pub mod lda_b;
pub mod math;
pub mod parallel;
pub mod streaming;

pub use corpus::{BitermVocabulary, BobDocument, Corpus, Document, Vocabulary};
pub use error::{BbmError, Result};
pub use hdp_b::HdpBModel;
pub use lda_b::{LdaBModel, LocalOptions, LocalState, TopicPrior};
pub use parallel::Parallelism;
