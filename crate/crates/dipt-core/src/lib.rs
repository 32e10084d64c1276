//! Core library for the DiPT evaluation harness: prompt composition,
//! dataset normalization, a record/replay model gateway, scoring, the
//! experiment runners, safety moderation, and fine-tuning data enrichment.

pub mod config;
pub mod corpus;
pub mod enrich;
pub mod error;
pub mod gateway;
pub mod mislabel;
pub mod prompt;
pub mod report;
pub mod runner;
pub mod safety;
pub mod scoring;
pub mod seed;

pub use error::{Error, Result};
