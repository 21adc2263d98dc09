//! Rubric extraction and diagnostics over pairwise preference data.
//!
//! The library turns a small set of labeled preference pairs into a compact,
//! human-readable rubric hierarchy in two stages. First, a propose-evaluate-
//! revise loop ([`refinement`]) generates query-specific rubrics and keeps
//! only those that verifiably pick the preferred response. Second, the
//! validated pool is distilled into a diverse core set by greedy coding-rate
//! maximization ([`coding_rate`], [`selection`]) and structured into a
//! theme/tips hierarchy ([`theme_tips`]). [`pipeline`] wires the stages into
//! a batch-iterative, checkpointable run and [`diagnostics`] scores each
//! resulting rubric on coverage, precision, and contribution against a
//! labeled test set.

pub mod artifacts;
pub mod client;
pub mod coding_rate;
pub mod dataset;
pub mod diagnostics;
pub mod hashing;
pub mod json17;
pub mod pipeline;
pub mod refinement;
pub mod selection;
pub mod theme_tips;
