//! Tail-risk forecasting with a factor-augmented realized ES-CAViaR model.
//!
//! The crate covers the full pipeline: realized measures from intraday
//! prices ([`realized`]), a common high-frequency risk factor ([`factors`]),
//! the joint VaR/ES recursion ([`model`]) and its quasi-likelihood
//! estimation ([`estimate`]), GARCH-family and EVT benchmarks
//! ([`baselines`]), and backtests, scoring rules and the Model Confidence
//! Set ([`evaluate`]).

pub mod baselines;
pub mod error;
pub mod estimate;
pub mod evaluate;
pub mod factors;
pub mod ingest;
pub mod model;
pub mod optim;
pub mod realized;
pub mod simulate;

pub use error::{Error, Result};
