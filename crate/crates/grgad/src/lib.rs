//! Group-level anomaly detection on attributed graphs.
//!
//! The pipeline runs in five stages:
//!
//! 1. [`mhgae`] trains a graph autoencoder against a multi-hop
//!    reconstruction target and ranks nodes by reconstruction error; the
//!    worst-reconstructed nodes become *anchors*.
//! 2. [`sampler`] grows candidate groups around anchor pairs by shortest
//!    path, truncated BFS tree, and fundamental cycle search.
//! 3. [`tpgcl`] embeds each candidate group with a small GCN trained
//!    contrastively: pattern-destroying and pattern-extending views of a
//!    group are pushed apart under a mutual-information objective.
//! 4. [`scoring`] turns group embeddings into outlier scores with an
//!    empirical-tail detector and thresholds them into verdicts.
//! 5. [`pipeline`] wires the stages together behind a JSON config and
//!    persists every intermediate artifact so stages can be rerun alone.
//!
//! [`datagen`] builds labeled synthetic benchmarks with injected anomalous
//! groups for end-to-end evaluation.

#![forbid(unsafe_code)]

pub mod matrix;
pub mod graph;
pub mod mhgae;
pub mod ndiff;
pub mod datagen;
pub mod pipeline;
pub mod sampler;
pub mod scoring;
pub mod tpgcl;
