//! Entropy-coefficient analysis of language models.
//!
//! * [`annotations`] parses per-token annotated corpora and builds conflation ladders.
//! * [`seqmodel`] estimates sequence entropies with Kneser-Ney n-gram models and
//!   derives the entropy coefficient `rho = H[T] / H[W]`.
//! * [`sgns`] trains skip-gram embeddings with negative sampling and measures
//!   word-prediction loss.
//! * [`inlp`] removes an annotation from embeddings by iterative nullspace
//!   projection and measures the resulting loss increase.
//! * [`itoracle`] checks information-theoretic identities and bounds exactly on
//!   small discrete worlds, and provides the slope t-test.
//! * [`pipeline`] wires everything into the reproducible runs behind the CLI.

pub mod annotations;
pub mod error;
pub mod inlp;
pub mod itoracle;
pub mod pipeline;
pub mod seqmodel;
pub mod sgns;
pub mod stats;
pub mod synth;

pub use error::{Error, Result};
