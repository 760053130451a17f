//! Robust feature selection and engineering for prediction tasks whose causes
//! and effects are only observed through noisy proxies.
//!
//! The crate models environments as distribution shift diagrams: causal DAGs
//! over a label `Y`, unobserved variables `U` adjacent to `Y`, observed proxy
//! variables `V` downstream of `U`, and per-`U` shift mechanisms `M`. On top of
//! that structure it provides
//!
//! - [`graph`]: the diagram representation, d-separation queries, and the
//!   good/bad/ambiguous classification of hidden variables and proxies;
//! - [`dropout_scm`]: discrete structural equation models whose edges transmit
//!   an invertible transform of the parent with probability `alpha` and a null
//!   symbol otherwise, with exact joint enumeration and sampling;
//! - [`info`]: exact entropies and (conditional/interaction) mutual
//!   information on enumerated tables, plug-in estimators on samples, and
//!   checkers for the inequality bounds that govern the setting;
//! - [`bootstrap`]: the label-conditioned dependence graph over proxies and
//!   seed-based propagation of good/bad labels;
//! - [`cis`]: causal information splitting, i.e. engineered features from
//!   per-label-stratum auxiliary prediction tasks;
//! - [`learn`]: L1-regularized logistic regression and evaluation metrics;
//! - [`bench`]: the synthetic Gaussian sweep and the tabular income pipeline;
//! - [`formats`]: the JSON/CSV file formats shared with the CLI.

pub mod bench;
pub mod bootstrap;
pub mod cis;
pub mod dataset;
pub mod dropout_scm;
pub mod formats;
pub mod graph;
pub mod info;
pub mod learn;

pub use dataset::Dataset;
pub use dropout_scm::{DropoutScm, JointTable};
pub use graph::{Dag, DistributionShiftDiagram, VertexId, VertexRole};
