//! Inductive rule learning over natural-language facts.
//!
//! A proposer model drafts candidate rules from a handful of facts, four
//! verifier prompts score each candidate (consistency with the facts,
//! agreement with reality, generality, non-triviality), and thresholds on
//! those scores decide which candidates survive. The crate also carries the
//! dataset formats, comparison baselines, and the evaluation metrics used to
//! score the surviving rules.

pub mod backend;
pub mod baselines;
pub mod corpus;
pub mod harness;
pub mod metrics;
pub mod pipeline;
pub mod templates;
pub mod tuning;
