//! Prefix-label XML fragmentation toolkit: annotate documents with
//! ordinal/tag-type address labels, fragment them (horizontally, vertically,
//! hybrid, by size, by structural constraints, or via holes and fillers),
//! allocate fragments to simulated nodes, route predicate queries with
//! pruning, and reassemble the original document.

pub mod addressing;
pub mod cluster;
pub mod error;
pub mod fragmentation;
pub mod generate;
pub mod workload;
pub mod xml_model;

pub use error::{Error, Result};
