//! Critique-driven prompt optimization for binary text classification.
//!
//! A Specialist prompt labels notes yes/no; Improver agents critique its
//! errors; Summarizer agents fold the critiques into a revised prompt. The
//! loop runs on a development split, a prompt is selected retrospectively,
//! and every iteration can be replayed on a validation split.
//!
//! Model calls go through [`gateway::Backend`]: an OpenAI-compatible HTTP
//! client for real runs, or the deterministic [`simlab`] world for desk-scale
//! experiments.

pub mod agents;
pub mod baseline;
pub mod cli;
pub mod config;
pub mod dataset;
pub mod gateway;
pub mod metrics;
pub mod pipeline;
pub mod reporting;
pub mod simlab;
