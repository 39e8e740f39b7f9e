//! Trajectory language toolkit: encodes daily movement into text, tokenizes
//! it, and provides the baselines and metrics used to judge generated days.

pub mod baselines;
pub mod codec;
pub mod corpus;
pub mod eval;
pub mod tokenizer;
pub mod synthgen;
