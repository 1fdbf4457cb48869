//! Phrase-bias measurement for topic-labelled news corpora.
//!
//! The crate normalizes article text, counts discriminative phrases per
//! source, fits a Poisson low-rank factorization of the phrase-by-source
//! counts, and aggregates the per-topic bias components into a
//! two-dimensional media landscape.

// `!(x > 0)` style checks are how NaN gets rejected along with the bound.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod biasmap;
pub mod counts;
pub mod error;
pub mod linalg;
pub mod lists;
pub mod optim;
pub mod phrasestats;
pub mod pipeline;
pub mod poissonfactor;
pub mod scalar;
pub mod svg;
pub mod synth;
pub mod textprep;

pub use counts::Counts;
pub use error::{Error, Result};
pub use linalg::Matrix;
pub use phrasestats::{CountMatrix, PhraseKey, PhraseScore};
pub use poissonfactor::{BiasComponents, FactorModel, FitConfig, FitResult, Link};
pub use scalar::Real;
pub use textprep::{CleanArticle, RawArticle};

pub type Matrix64 = Matrix<f64>;
pub type Matrix32 = Matrix<f32>;
pub type FactorModel64 = FactorModel<f64>;
pub type FactorModel32 = FactorModel<f32>;
pub type FitResult64 = FitResult<f64>;
pub type FitResult32 = FitResult<f32>;
pub type BiasComponents64 = BiasComponents<f64>;
pub type BiasComponents32 = BiasComponents<f32>;
