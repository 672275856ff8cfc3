//! Multi-turn interactive active learning for noisy, open-vocabulary QA.
//!
//! Candidates are ranked by the log-determinant of the semantic covariance of
//! the model's answer distribution, annotated instances whose labels the model
//! confidently contradicts are flagged by a Z-score rule, and flagged items go
//! through a rule-based canonicalizer before any manual pass.

pub mod cli;
pub mod config;
pub mod corpus;
pub mod error;
pub mod experiment;
pub mod learner;
pub mod oracle;
pub mod policy;
pub mod pools;
pub mod rng;
pub mod service;
pub mod synth;
pub mod uncertainty;

pub use error::{Error, Result};
