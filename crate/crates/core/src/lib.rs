//! Numeric value identification for short constructed responses to math items.
//!
//! The pipeline detects and normalizes every number stated in a response
//! ([`numlex`]), decides per value slot whether the student stated zero, one or
//! some other value ([`classify`]), locates the stated value among the masked
//! numbers ([`identify`]), blends several identification models with convex
//! weights ([`ensemble`]) and scores the result against human raters
//! ([`metrics`]). [`verify`] turns extracted values into correctness and
//! misconception feedback, and [`syngen`] produces labeled synthetic corpora
//! so the whole thing can be trained and evaluated offline.

pub mod classify;
pub mod cli;
pub mod corpus;
pub mod ensemble;
pub mod error;
pub mod features;
pub mod identify;
pub mod manifest;
pub mod metrics;
pub mod numlex;
pub mod pipeline;
pub mod rational;
pub mod syngen;
pub mod verify;

pub use error::{Error, Result};
pub use rational::Rational;
