//! The eight two-constant function templates and the enumerated space.

use std::cmp::Ordering;
use std::fmt;
use std::ops::Range;

use num_bigint::BigInt;
use num_traits::ToPrimitive;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use super::ast::{BinOp, EvalError, Evaluate, Expr, Function};
use super::parse::parse;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateKind {
    Arithmetic,
    Geometric,
    Exponential,
    Power,
    BitOr,
    Modular,
    IndexingCriteria,
    Recursive,
}

impl TemplateKind {
    /// Template order; enumeration and tie-breaking follow it.
    pub const ALL: [TemplateKind; 8] = [
        TemplateKind::Arithmetic,
        TemplateKind::Geometric,
        TemplateKind::Exponential,
        TemplateKind::Power,
        TemplateKind::BitOr,
        TemplateKind::Modular,
        TemplateKind::IndexingCriteria,
        TemplateKind::Recursive,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TemplateKind::Arithmetic => "arithmetic",
            TemplateKind::Geometric => "geometric",
            TemplateKind::Exponential => "exponential",
            TemplateKind::Power => "power",
            TemplateKind::BitOr => "bit_or",
            TemplateKind::Modular => "modular",
            TemplateKind::IndexingCriteria => "indexing_criteria",
            TemplateKind::Recursive => "recursive",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == name)
    }

    /// Canonical surface text with both constant slots filled.
    pub fn render(self, c1: u64, c2: u64) -> String {
        match self {
            TemplateKind::Arithmetic => format!("lambda x: ({c1} * x) + {c2}"),
            TemplateKind::Geometric => format!("lambda x: ({c1} * x) * {c2}"),
            TemplateKind::Exponential => format!("lambda x: ({c1} * x) ** {c2}"),
            TemplateKind::Power => format!("lambda x: {c1} ** ({c2} * x)"),
            TemplateKind::BitOr => format!("lambda x: ({c1} * x) | {c2}"),
            TemplateKind::Modular => format!("lambda x: (x * {c1}) % ({c2}+1)"),
            TemplateKind::IndexingCriteria => format!(
                "lambda x: [i for i in range(100) if i % ({c1} + 1) or i % ({c2} + 1)][x]"
            ),
            TemplateKind::Recursive => format!(
                "(lambda a: lambda v: a(a,v))(lambda fn,x: 1 if x==0 else {c1} * x * fn(fn,x-1) + {c2})"
            ),
        }
    }

    /// Expression tree of the template with both slots filled.
    pub fn build(self, c1: u64, c2: u64) -> Function {
        use BinOp::*;
        let c = Expr::int;
        let b = Expr::binary;
        match self {
            TemplateKind::Arithmetic => Function::Lambda(b(Add, b(Mul, c(c1), Expr::Var), c(c2))),
            TemplateKind::Geometric => Function::Lambda(b(Mul, b(Mul, c(c1), Expr::Var), c(c2))),
            TemplateKind::Exponential => Function::Lambda(b(Pow, b(Mul, c(c1), Expr::Var), c(c2))),
            TemplateKind::Power => Function::Lambda(b(Pow, c(c1), b(Mul, c(c2), Expr::Var))),
            TemplateKind::BitOr => Function::Lambda(b(BitOr, b(Mul, c(c1), Expr::Var), c(c2))),
            TemplateKind::Modular => {
                Function::Lambda(b(Mod, b(Mul, Expr::Var, c(c1)), b(Add, c(c2), c(1))))
            }
            TemplateKind::IndexingCriteria => Function::Lambda(Expr::FilteredIndex {
                limit: 100,
                filters: vec![
                    b(Mod, Expr::Var, b(Add, c(c1), c(1))),
                    b(Mod, Expr::Var, b(Add, c(c2), c(1))),
                ],
                index: Box::new(Expr::Var),
            }),
            TemplateKind::Recursive => Function::Recursive {
                base: c(1),
                step: b(Add, b(Mul, b(Mul, c(c1), Expr::Var), Expr::Prev), c(c2)),
            },
        }
    }
}

impl fmt::Display for TemplateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Inclusive range of values for both constant slots.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConstantRange {
    pub min: u64,
    pub max: u64,
}

impl Default for ConstantRange {
    fn default() -> Self {
        ConstantRange { min: 0, max: 4 }
    }
}

impl ConstantRange {
    pub fn new(min: u64, max: u64) -> Self {
        ConstantRange { min, max }
    }

    pub fn contains(&self, c: u64) -> bool {
        (self.min..=self.max).contains(&c)
    }

    pub fn values(&self) -> impl Iterator<Item = u64> + Clone {
        self.min..=self.max
    }
}

/// Which argument generates the first sequence element, and how far a
/// generator may be shifted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexConvention {
    pub start_index: u64,
    pub max_offset: u64,
}

impl Default for IndexConvention {
    fn default() -> Self {
        IndexConvention {
            start_index: 1,
            max_offset: 4,
        }
    }
}

impl IndexConvention {
    pub fn offsets(&self) -> impl Iterator<Item = u64> + Clone {
        0..=self.max_offset
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FunctionError {
    #[error("constants ({c1}, {c2}) outside the range [{min}, {max}]", min = .range.min, max = .range.max)]
    ConstantOutOfRange {
        c1: u64,
        c2: u64,
        range: ConstantRange,
    },
    #[error("offset {offset} exceeds maximum offset {max}")]
    OffsetOutOfRange { offset: u64, max: u64 },
    #[error("sequence length must be at least 1")]
    EmptySequence,
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// One filled-in template.
#[derive(Debug, Clone)]
pub struct ConcreteFunction {
    kind: TemplateKind,
    c1: u64,
    c2: u64,
    ast: Function,
    text: String,
}

impl ConcreteFunction {
    pub fn new(kind: TemplateKind, c1: u64, c2: u64) -> Self {
        ConcreteFunction {
            kind,
            c1,
            c2,
            ast: kind.build(c1, c2),
            text: kind.render(c1, c2),
        }
    }

    /// Range-checked construction.
    pub fn instantiate(
        kind: TemplateKind,
        c1: u64,
        c2: u64,
        range: &ConstantRange,
    ) -> Result<Self, FunctionError> {
        if !range.contains(c1) || !range.contains(c2) {
            return Err(FunctionError::ConstantOutOfRange {
                c1,
                c2,
                range: *range,
            });
        }
        Ok(Self::new(kind, c1, c2))
    }

    /// Find the template instance whose expression tree equals `function`.
    pub fn recognize(function: &Function) -> Option<Self> {
        use BinOp::*;
        let small = |e: &Expr| match e {
            Expr::Int(v) => v.to_u64(),
            _ => None,
        };
        let plus_one = |e: &Expr| match e {
            Expr::Binary { op: Add, lhs, rhs } if small(rhs) == Some(1) => small(lhs),
            _ => None,
        };
        let scaled_var = |e: &Expr| match e {
            Expr::Binary { op: Mul, lhs, rhs } if **rhs == Expr::Var => small(lhs),
            _ => None,
        };
        let (kind, c1, c2) = match function {
            Function::Lambda(Expr::Binary { op, lhs, rhs }) => match op {
                Add => (TemplateKind::Arithmetic, scaled_var(lhs)?, small(rhs)?),
                Mul => (TemplateKind::Geometric, scaled_var(lhs)?, small(rhs)?),
                BitOr => (TemplateKind::BitOr, scaled_var(lhs)?, small(rhs)?),
                Pow => match (small(lhs), scaled_var(rhs)) {
                    (Some(c1), Some(c2)) => (TemplateKind::Power, c1, c2),
                    _ => (TemplateKind::Exponential, scaled_var(lhs)?, small(rhs)?),
                },
                Mod => match &**lhs {
                    Expr::Binary {
                        op: Mul,
                        lhs: v,
                        rhs: c1,
                    } if **v == Expr::Var => (TemplateKind::Modular, small(c1)?, plus_one(rhs)?),
                    _ => return None,
                },
                _ => return None,
            },
            Function::Lambda(Expr::FilteredIndex {
                limit: 100,
                filters,
                index,
            }) if **index == Expr::Var && filters.len() == 2 => {
                let slot = |e: &Expr| match e {
                    Expr::Binary { op: Mod, lhs, rhs } if **lhs == Expr::Var => plus_one(rhs),
                    _ => None,
                };
                (
                    TemplateKind::IndexingCriteria,
                    slot(&filters[0])?,
                    slot(&filters[1])?,
                )
            }
            Function::Recursive { base, step } if small(base) == Some(1) => match step {
                Expr::Binary { op: Add, lhs, rhs } => match &**lhs {
                    Expr::Binary {
                        op: Mul,
                        lhs: inner,
                        rhs: prev,
                    } if **prev == Expr::Prev => {
                        (TemplateKind::Recursive, scaled_var(inner)?, small(rhs)?)
                    }
                    _ => return None,
                },
                _ => return None,
            },
            _ => return None,
        };
        let candidate = Self::new(kind, c1, c2);
        (candidate.ast == *function).then_some(candidate)
    }

    pub fn kind(&self) -> TemplateKind {
        self.kind
    }

    pub fn c1(&self) -> u64 {
        self.c1
    }

    pub fn c2(&self) -> u64 {
        self.c2
    }

    pub fn ast(&self) -> &Function {
        &self.ast
    }

    /// Canonical base-10 text.
    pub fn text(&self) -> &str {
        &self.text
    }

    /// Text as shown for a given numeral base; base 2 wraps the output in
    /// `bin(...)`.
    pub fn render(&self, base: u32) -> String {
        if base == 2 {
            wrap_binary(&self.text)
        } else {
            self.text.clone()
        }
    }

    pub fn evaluate(&self, x: u64) -> Result<BigInt, EvalError> {
        self.ast.evaluate(x)
    }
}

/// `lambda x: body` becomes `lambda x: bin(body)`; any other callable text
/// `f` becomes `lambda x: bin(f(x))`.
pub fn wrap_binary(text: &str) -> String {
    match text.strip_prefix("lambda x: ") {
        Some(body) => format!("lambda x: bin({body})"),
        None => format!("lambda x: bin({text}(x))"),
    }
}

impl Evaluate for ConcreteFunction {
    fn evaluate(&self, x: u64) -> Result<BigInt, EvalError> {
        self.ast.evaluate(x)
    }
}

impl PartialEq for ConcreteFunction {
    fn eq(&self, other: &Self) -> bool {
        (self.kind, self.c1, self.c2) == (other.kind, other.c1, other.c2)
    }
}

impl Eq for ConcreteFunction {}

impl std::hash::Hash for ConcreteFunction {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        (self.kind, self.c1, self.c2).hash(state);
    }
}

impl PartialOrd for ConcreteFunction {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Enumeration order: template, then first constant, then second.
impl Ord for ConcreteFunction {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.kind, self.c1, self.c2).cmp(&(other.kind, other.c1, other.c2))
    }
}

impl fmt::Display for ConcreteFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text)
    }
}

impl Serialize for ConcreteFunction {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.text)
    }
}

impl<'de> Deserialize<'de> for ConcreteFunction {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        let parsed = parse(&text).map_err(serde::de::Error::custom)?;
        parsed
            .template
            .ok_or_else(|| serde::de::Error::custom(format!("not a template function: {text}")))
    }
}

/// `[f(s + o + j) for j in 0..length]` with `s` the convention's start index.
pub fn generate_sequence<F: Evaluate + ?Sized>(
    f: &F,
    offset: u64,
    length: usize,
    conv: &IndexConvention,
) -> Result<Vec<BigInt>, FunctionError> {
    if offset > conv.max_offset {
        return Err(FunctionError::OffsetOutOfRange {
            offset,
            max: conv.max_offset,
        });
    }
    if length == 0 {
        return Err(FunctionError::EmptySequence);
    }
    let first = conv.start_index + offset;
    (first..first + length as u64)
        .map(|x| f.evaluate(x).map_err(FunctionError::from))
        .collect()
}

/// A candidate dropped from the space, with the first failing index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExcludedCandidate {
    pub kind: TemplateKind,
    pub c1: u64,
    pub c2: u64,
    pub index: u64,
    pub error: EvalError,
}

impl fmt::Display for ExcludedCandidate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}({}, {}) fails at x={}: {}",
            self.kind, self.c1, self.c2, self.index, self.error
        )
    }
}

/// The valid function space and what was dropped while building it.
#[derive(Debug, Clone)]
pub struct FunctionSpace {
    pub functions: Vec<ConcreteFunction>,
    pub excluded: Vec<ExcludedCandidate>,
    pub constants: ConstantRange,
    pub probe: Range<u64>,
}

impl FunctionSpace {
    pub fn candidate_count(&self) -> usize {
        self.functions.len() + self.excluded.len()
    }

    pub fn len(&self) -> usize {
        self.functions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.functions.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, ConcreteFunction> {
        self.functions.iter()
    }
}

/// Probe range covering every index a task with this convention and prefix
/// length evaluates (prefix plus continuation at the largest offset).
pub fn probe_range(conv: &IndexConvention, seq_len: usize) -> Range<u64> {
    0..conv.start_index + conv.max_offset + seq_len as u64 + 1
}

/// All template instances that evaluate without error at every probed index,
/// in template order, then `c1`, then `c2`.
pub fn enumerate_space(constants: ConstantRange, probe: Range<u64>) -> FunctionSpace {
    let mut functions = Vec::new();
    let mut excluded = Vec::new();
    for kind in TemplateKind::ALL {
        for c1 in constants.values() {
            for c2 in constants.values() {
                let f = ConcreteFunction::new(kind, c1, c2);
                match probe.clone().find_map(|x| f.evaluate(x).err().map(|e| (x, e))) {
                    None => functions.push(f),
                    Some((index, error)) => excluded.push(ExcludedCandidate {
                        kind,
                        c1,
                        c2,
                        index,
                        error,
                    }),
                }
            }
        }
    }
    FunctionSpace {
        functions,
        excluded,
        constants,
        probe,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ints(v: &[i64]) -> Vec<BigInt> {
        v.iter().copied().map(BigInt::from).collect()
    }

    #[test]
    fn instantiate_renders_canonical_text() {
        let r = ConstantRange::default();
        let f = ConcreteFunction::instantiate(TemplateKind::Arithmetic, 4, 3, &r).unwrap();
        assert_eq!(f.text(), "lambda x: (4 * x) + 3");
        let g = ConcreteFunction::instantiate(TemplateKind::BitOr, 3, 3, &r).unwrap();
        assert_eq!(g.text(), "lambda x: (3 * x) | 3");
        assert!(matches!(
            ConcreteFunction::instantiate(TemplateKind::Power, 5, 0, &r),
            Err(FunctionError::ConstantOutOfRange { .. })
        ));
    }

    #[test]
    fn constant_zero_function() {
        let f = ConcreteFunction::new(TemplateKind::Arithmetic, 0, 0);
        let conv = IndexConvention::default();
        for offset in conv.offsets() {
            assert_eq!(generate_sequence(&f, offset, 3, &conv).unwrap(), ints(&[0, 0, 0]));
        }
    }

    #[test]
    fn reference_sequences() {
        let conv = IndexConvention::default();
        let arith = ConcreteFunction::new(TemplateKind::Arithmetic, 4, 3);
        assert_eq!(arith.evaluate(1).unwrap(), BigInt::from(7));
        assert_eq!(generate_sequence(&arith, 0, 3, &conv).unwrap(), ints(&[7, 11, 15]));
        let bit_or = ConcreteFunction::new(TemplateKind::BitOr, 3, 3);
        assert_eq!(bit_or.evaluate(2).unwrap(), BigInt::from(7));
        assert_eq!(
            generate_sequence(&bit_or, 1, 4, &conv).unwrap(),
            ints(&[7, 11, 15, 15])
        );
    }

    #[test]
    fn recursive_and_filtered_examples() {
        let rec = ConcreteFunction::new(TemplateKind::Recursive, 1, 0);
        assert_eq!(rec.evaluate(3).unwrap(), BigInt::from(6));
        let idx = ConcreteFunction::new(TemplateKind::IndexingCriteria, 1, 2);
        assert_eq!(idx.evaluate(0).unwrap(), BigInt::from(1));
    }

    #[test]
    fn offset_and_length_preconditions() {
        let f = ConcreteFunction::new(TemplateKind::Arithmetic, 1, 0);
        let conv = IndexConvention::default();
        assert!(matches!(
            generate_sequence(&f, 5, 3, &conv),
            Err(FunctionError::OffsetOutOfRange { .. })
        ));
        assert_eq!(
            generate_sequence(&f, 0, 0, &conv),
            Err(FunctionError::EmptySequence)
        );
    }

    #[test]
    fn empty_filter_is_excluded() {
        let space = enumerate_space(ConstantRange::default(), 0..11);
        assert!(space
            .excluded
            .iter()
            .any(|e| e.kind == TemplateKind::IndexingCriteria && e.c1 == 0 && e.c2 == 0));
        assert_eq!(space.candidate_count(), 200);
    }

    #[test]
    fn single_constant_range_is_tiny() {
        let space = enumerate_space(ConstantRange::new(0, 0), 0..11);
        assert!(space.len() <= 8);
        assert_eq!(space.candidate_count(), 8);
    }

    #[test]
    fn binary_wrapping() {
        let f = ConcreteFunction::new(TemplateKind::Arithmetic, 4, 3);
        assert_eq!(f.render(2), "lambda x: bin((4 * x) + 3)");
        let r = ConcreteFunction::new(TemplateKind::Recursive, 1, 0);
        assert_eq!(
            r.render(2),
            "lambda x: bin((lambda a: lambda v: a(a,v))(lambda fn,x: 1 if x==0 else 1 * x * fn(fn,x-1) + 0)(x))"
        );
        for f in [f, r] {
            let p = parse(&f.render(2)).unwrap();
            assert!(p.binary_output);
            assert_eq!(p.template.as_ref(), Some(&f));
        }
    }
}
