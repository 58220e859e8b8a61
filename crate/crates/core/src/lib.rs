//! Mining ambiguous integer sequences from a lambda-template function space
//! and measuring whether a language model's separately elicited completions
//! and explanations agree with each other.

pub mod backends;
pub mod distribution;
pub mod evaluation;
pub mod funcspace;
pub mod mining;
pub mod prompting;
pub mod sequence;

pub use sequence::{Base, SequenceRecord};
