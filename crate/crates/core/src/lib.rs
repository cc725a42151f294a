//! A small prototype-based object language with typed object shapes and a
//! basic-block-versioning execution engine.

pub mod corpus;
pub mod engine;
pub mod error;
pub mod frontend;
pub mod harness;
pub mod metrics;
pub mod object;
pub mod oracle;
pub mod runtime;
pub mod shape;
pub mod value;
