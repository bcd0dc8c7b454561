//! Query performance prediction for e-commerce search.
//!
//! Raw interaction logs are grouped into query instances, reduced to
//! per-instance behavioral metrics, aggregated per query, combined with text
//! and meta features, binned into one-hot indicators and scored by a random
//! forest that predicts whether a query's results are unsatisfactory (DSAT).

// Negated float comparisons are deliberate: they reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod eval;
pub mod event_log;
pub mod featurizer;
pub mod forest;
pub mod metafeat;
pub mod metrics;
pub mod pipeline;
pub mod synthgen;
pub mod textfeat;

pub use error::{Error, Result};
