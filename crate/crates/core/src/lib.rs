pub mod error;
pub mod findmst;
pub mod findst;
pub mod graph;
pub mod harness;
pub mod msf;
pub mod simnet;
pub mod sketch;
pub mod treeops;
pub mod wire;

pub use error::{Error, Result};
