//! The template function space: expression trees, the surface-syntax parser,
//! exact evaluation, and enumeration of valid template instances.

mod ast;
mod parse;
mod template;

pub use ast::{BinOp, EvalError, Evaluate, Expr, Function, MAX_ITERATIONS, MAX_RESULT_BITS};
pub use parse::{parse, ParseError, ParsedFunction};
pub use template::{
    enumerate_space, generate_sequence, probe_range, wrap_binary, ConcreteFunction,
    ConstantRange, ExcludedCandidate, FunctionError, FunctionSpace, IndexConvention,
    TemplateKind,
};
