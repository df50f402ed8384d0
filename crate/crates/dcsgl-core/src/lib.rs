//! Causal-structure guided graph representation learning.
//!
//! The crate bundles everything needed to study how a hand-built causal
//! oracle can steer GNN training on synthetic biased motif graphs:
//!
//! - [`graph`]: the graph/dataset data model and its JSONL serialization
//! - [`tensor`]: a small reverse-mode autodiff engine with Adam/SGD
//! - [`gnn`]: message-passing backbones, heads, and checkpoints
//! - [`synth`]: biased motif-graph and marker-graph dataset generators
//! - [`causal`]: the causal oracle, selectors, and interchange interventions
//! - [`train`]: the guided training loop, losses, evaluation, and reports
//! - [`scm`]: exact-enumeration discrete SCMs and information-theoretic checks

pub mod causal;
pub mod gnn;
pub mod graph;
pub mod rngstream;
pub mod scm;
pub mod synth;
pub mod tensor;
pub mod train;
