//! Attribute-driven graph domain adaptation.
//!
//! A labeled source graph and an unlabeled target graph are each encoded in
//! two views (the given topology and a cosine kNN feature graph) by shared
//! GCN encoders. Attention embeddings of both views are gated by cross-view
//! agreement and aligned across domains, while a gradient-reversed domain
//! discriminator and a target entropy term complete the objective.
//!
//! Modules, bottom-up:
//!
//! * [`numcore`]: dense matrices and a reverse-mode autodiff tape.
//! * [`graphio`]: graphs, file formats and synthetic shift generators.
//! * [`featgraph`]: kNN feature graphs and normalized propagation matrices.
//! * [`model`]: encoders, attention, refinement, heads, checkpoints.
//! * [`losses`]: the four loss terms and their weighted sum.
//! * [`train`]: Adam, the training loop, evaluation, repeated runs.
//! * [`analysis`]: discrepancy bound, feature-value diagnostics, margin loss.
//! * [`cli`]: the `gaa` command-line tool.

pub mod analysis;
pub mod cli;
pub mod featgraph;
pub mod graphio;
pub mod losses;
pub mod model;
pub mod numcore;
pub mod seeding;
pub mod train;
