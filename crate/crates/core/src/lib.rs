//! Genre-cluster discovery and self-exciting upload modelling.
//!
//! The pipeline runs in stages:
//!
//! 1. [`ingest`] parses raw upload records into an [`ingest::EventStream`]
//!    on a day-valued time axis.
//! 2. [`taggraph`] builds the tag co-occurrence graph, prunes weak edges and
//!    turns connected components into genre-clusters.
//! 3. [`hawkes`] fits a univariate exponential-kernel Hawkes process per
//!    cluster; [`baselines`] fits the comparison models.
//! 4. [`forecast`] splits each cluster into train/test windows and scores
//!    count forecasts; [`attribution`] splits triggering mass into
//!    self-reinforcing, popularity and exogenous shares.
//!
//! [`simulate`] provides exact thinning simulators and synthetic corpora.

pub mod attribution;
pub mod baselines;
pub mod error;
pub mod fit;
pub mod forecast;
pub mod hawkes;
pub mod ingest;
pub mod optim;
pub mod rng;
pub mod simulate;
pub mod stats;
pub mod taggraph;

pub use error::{Error, Result};
pub use fit::{FitFlag, FitResult, ModelParams};
pub use hawkes::HawkesParams;
pub use ingest::{Event, EventStream};
pub use taggraph::{GenreCluster, TagGraph};
