//! A parallel dataflow engine with bulk and incremental iterations.

pub mod error;
pub mod operators;
pub mod optimizer;
pub mod physical;
pub mod plan;
pub mod record;

pub use error::{EngineError, Result, UdfError, UdfResult};
pub use record::{extract_key, partition_of, EngineConfig, Key, KeySpec, Record, Value};
pub mod algorithms;
pub mod bulk;
pub mod incremental;
pub mod runtime;
