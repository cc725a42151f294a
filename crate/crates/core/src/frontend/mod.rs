//! Source language front end: parsing and lowering to block IR.

pub mod ast;
pub mod ir;
pub mod lower;
pub mod parser;

pub use parser::{parse, SyntaxError};
