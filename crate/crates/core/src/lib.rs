//! Link-weight traffic engineering with exponential ECMP splitting.
//!
//! The crate computes first link weights that make a utility-optimal traffic
//! distribution a shortest-path routing ([`solver`]), second link weights that realize
//! it with exponential splits on the equal-cost DAGs ([`spef`]), the even-split OSPF
//! baseline and evaluation metrics ([`metrics`]), and the experiment pipeline
//! ([`harness`]).

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod builtin;
pub mod error;
pub mod graph;
pub mod harness;
pub mod io;
pub mod metrics;
pub mod model;
pub mod solver;
pub mod spef;
pub mod utility;

pub use error::{Error, Result};
pub use model::{DemandMatrix, FlowAssignment, LinkId, NodeId, Topology};
pub use utility::{NamedObjective, UtilitySpec};
