//! Tools for making precomputed multilingual token embeddings more
//! language-agnostic, and for measuring how well that worked.
//!
//! The crate is organised by pipeline stage:
//!
//! * [`store`]: the embedding data model and its on-disk formats
//!   (line-delimited JSON embeddings, Pharaoh word alignments).
//! * [`vecnorm`]: batch, layer and per-language normalization of vector spaces.
//! * [`realign`]: joint affine re-alignment of non-pivot languages toward a pivot.
//! * [`emd`]: exact Earth Mover Distance and the cross-lingual sentence score built on it.
//! * [`textnorm`]: CoNLL-U ingestion and typology-driven rewriting of input text.
//! * [`analysis`]: language centroids, WALS similarity, correlations and transfer gaps.
//! * [`pipeline`]: declarative composition of the stages above.

pub mod analysis;
pub mod emd;
pub mod pipeline;
pub mod realign;
pub mod store;
pub mod textnorm;
pub mod vecnorm;

pub use store::{AlignedSentencePair, EmbeddingCorpus, ParallelCorpus, SentenceEmbedding};
