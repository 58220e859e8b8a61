//! Expression tree for the lambda surface syntax and its exact evaluator.

use std::cell::RefCell;
use std::collections::HashMap;
use std::fmt;
use std::rc::Rc;

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};
use thiserror::Error;

/// Results wider than this many bits are rejected instead of computed.
pub const MAX_RESULT_BITS: u64 = 1 << 20;
/// Upper bound on recursion depth and comprehension ranges.
pub const MAX_ITERATIONS: u64 = 1_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("index {index} out of range for filtered list of length {len}")]
    IndexOutOfRange { index: BigInt, len: usize },
    #[error("division or modulo by zero")]
    ZeroDivision,
    #[error("negative exponent or shift produces a non-integer or invalid value")]
    NegativeExponent,
    #[error("value exceeds {MAX_RESULT_BITS} bits")]
    TooLarge,
    #[error("recursion referenced outside a recursive step")]
    UnboundRecursion,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    FloorDiv,
    Mod,
    Pow,
    BitOr,
    BitXor,
    BitAnd,
    Shl,
    Shr,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::FloorDiv => "//",
            BinOp::Mod => "%",
            BinOp::Pow => "**",
            BinOp::BitOr => "|",
            BinOp::BitXor => "^",
            BinOp::BitAnd => "&",
            BinOp::Shl => "<<",
            BinOp::Shr => ">>",
        }
    }
}

/// One integer expression over a single bound variable.
///
/// `Var` always refers to the innermost binding: the lambda parameter, the
/// comprehension variable inside a filter, or the step index inside a
/// recursive step.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Expr {
    Int(BigInt),
    Var,
    Neg(Box<Expr>),
    Binary {
        op: BinOp,
        lhs: Box<Expr>,
        rhs: Box<Expr>,
    },
    /// `[i for i in range(limit) if f_1 or f_2 ...][index]`
    FilteredIndex {
        limit: u64,
        filters: Vec<Expr>,
        index: Box<Expr>,
    },
    /// The recursive call `fn(fn, x-1)`; only meaningful inside a step body.
    Prev,
}

impl Expr {
    pub fn int(v: u64) -> Self {
        Expr::Int(BigInt::from(v))
    }

    pub fn binary(op: BinOp, lhs: Expr, rhs: Expr) -> Self {
        Expr::Binary {
            op,
            lhs: Box::new(lhs),
            rhs: Box::new(rhs),
        }
    }

    fn mentions_prev(&self) -> bool {
        match self {
            Expr::Prev => true,
            Expr::Int(_) | Expr::Var => false,
            Expr::Neg(e) => e.mentions_prev(),
            Expr::Binary { lhs, rhs, .. } => lhs.mentions_prev() || rhs.mentions_prev(),
            Expr::FilteredIndex { filters, index, .. } => {
                filters.iter().any(Expr::mentions_prev) || index.mentions_prev()
            }
        }
    }

    pub fn eval(&self, var: &BigInt, prev: Option<&BigInt>) -> Result<BigInt, EvalError> {
        match self {
            Expr::Int(v) => Ok(v.clone()),
            Expr::Var => Ok(var.clone()),
            Expr::Prev => prev.cloned().ok_or(EvalError::UnboundRecursion),
            Expr::Neg(e) => Ok(-e.eval(var, prev)?),
            Expr::Binary { op, lhs, rhs } => {
                let a = lhs.eval(var, prev)?;
                let b = rhs.eval(var, prev)?;
                apply(*op, a, b)
            }
            Expr::FilteredIndex {
                limit,
                filters,
                index,
            } => {
                let kept = filtered_list(*limit, filters)?;
                let idx = index.eval(var, prev)?;
                let len = kept.len();
                // negative indices count from the end
                let resolved = if idx.is_negative() {
                    BigInt::from(len) + &idx
                } else {
                    idx.clone()
                };
                resolved
                    .to_usize()
                    .and_then(|i| kept.get(i).cloned())
                    .ok_or(EvalError::IndexOutOfRange { index: idx, len })
            }
        }
    }
}

thread_local! {
    // Filters only see the comprehension variable, so the list does not
    // depend on `x`; sequence generation would otherwise rebuild it per index.
    static FILTERED: RefCell<HashMap<(u64, Vec<Expr>), Rc<Vec<BigInt>>>> = RefCell::new(HashMap::new());
}

const FILTERED_CACHE_CAP: usize = 4096;

fn filtered_list(limit: u64, filters: &[Expr]) -> Result<Rc<Vec<BigInt>>, EvalError> {
    let key = (limit, filters.to_vec());
    if let Some(hit) = FILTERED.with(|c| c.borrow().get(&key).cloned()) {
        return Ok(hit);
    }
    if limit > MAX_ITERATIONS {
        return Err(EvalError::TooLarge);
    }
    let mut kept = Vec::new();
    for i in 0..limit {
        let i = BigInt::from(i);
        let mut keep = false;
        for f in filters {
            if !f.eval(&i, None)?.is_zero() {
                keep = true;
                break;
            }
        }
        if keep {
            kept.push(i);
        }
    }
    let kept = Rc::new(kept);
    FILTERED.with(|c| {
        let mut c = c.borrow_mut();
        if c.len() >= FILTERED_CACHE_CAP {
            c.clear();
        }
        c.insert(key, kept.clone());
    });
    Ok(kept)
}

fn check_size(v: BigInt) -> Result<BigInt, EvalError> {
    if v.bits() > MAX_RESULT_BITS {
        Err(EvalError::TooLarge)
    } else {
        Ok(v)
    }
}

fn apply(op: BinOp, a: BigInt, b: BigInt) -> Result<BigInt, EvalError> {
    match op {
        BinOp::Add => Ok(a + b),
        BinOp::Sub => Ok(a - b),
        BinOp::Mul => check_size(a * b),
        BinOp::FloorDiv => {
            if b.is_zero() {
                Err(EvalError::ZeroDivision)
            } else {
                Ok(a.div_floor(&b))
            }
        }
        BinOp::Mod => {
            if b.is_zero() {
                Err(EvalError::ZeroDivision)
            } else {
                Ok(a.mod_floor(&b))
            }
        }
        BinOp::Pow => pow(a, b),
        BinOp::BitOr => Ok(a | b),
        BinOp::BitXor => Ok(a ^ b),
        BinOp::BitAnd => Ok(a & b),
        BinOp::Shl => {
            if b.is_negative() {
                return Err(EvalError::NegativeExponent);
            }
            let n = b.to_u64().ok_or(EvalError::TooLarge)?;
            if a.bits() + n > MAX_RESULT_BITS {
                return Err(EvalError::TooLarge);
            }
            Ok(a << n)
        }
        BinOp::Shr => {
            if b.is_negative() {
                return Err(EvalError::NegativeExponent);
            }
            match b.to_u64() {
                Some(n) => Ok(a >> n),
                None if a.is_negative() => Ok(-BigInt::one()),
                None => Ok(BigInt::zero()),
            }
        }
    }
}

fn pow(base: BigInt, exp: BigInt) -> Result<BigInt, EvalError> {
    if exp.is_negative() {
        return Err(EvalError::NegativeExponent);
    }
    if base.is_zero() {
        return Ok(if exp.is_zero() { BigInt::one() } else { BigInt::zero() });
    }
    if base.abs().is_one() {
        let odd = exp.is_odd();
        return Ok(if base.is_negative() && odd {
            -BigInt::one()
        } else {
            BigInt::one()
        });
    }
    let e = exp.to_u64().ok_or(EvalError::TooLarge)?;
    if (base.bits() - 1).saturating_mul(e) > MAX_RESULT_BITS {
        return Err(EvalError::TooLarge);
    }
    let e = u32::try_from(e).map_err(|_| EvalError::TooLarge)?;
    Ok(base.pow(e))
}

/// A complete one-argument function.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Function {
    /// `lambda x: <expr>`
    Lambda(Expr),
    /// The self-applying recursion: value `base` at 0, `step` afterwards with
    /// `Prev` bound to the value at the previous index.
    Recursive { base: Expr, step: Expr },
}

impl Function {
    pub fn evaluate(&self, x: u64) -> Result<BigInt, EvalError> {
        match self {
            Function::Lambda(body) => body.eval(&BigInt::from(x), None),
            Function::Recursive { base, step } => {
                if x > MAX_ITERATIONS {
                    return Err(EvalError::TooLarge);
                }
                let mut value = base.eval(&BigInt::zero(), None)?;
                for k in 1..=x {
                    value = check_size(step.eval(&BigInt::from(k), Some(&value))?)?;
                }
                Ok(value)
            }
        }
    }

    /// True when the step body actually recurses.
    pub fn is_recursive(&self) -> bool {
        matches!(self, Function::Recursive { step, .. } if step.mentions_prev())
    }
}

/// Evaluation shared by parsed and template-instantiated functions.
pub trait Evaluate {
    fn evaluate(&self, x: u64) -> Result<BigInt, EvalError>;
}

impl Evaluate for Function {
    fn evaluate(&self, x: u64) -> Result<BigInt, EvalError> {
        Function::evaluate(self, x)
    }
}

struct ExprText<'a> {
    expr: &'a Expr,
    var: &'a str,
    top: bool,
}

impl fmt::Display for ExprText<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sub = |e| self.child(e);
        match self.expr {
            Expr::Int(v) => write!(f, "{v}"),
            Expr::Var => f.write_str(self.var),
            Expr::Prev => write!(f, "fn(fn,{}-1)", self.var),
            Expr::Neg(e) => write!(f, "-{}", sub(e)),
            Expr::Binary { op, lhs, rhs } => {
                if self.top {
                    write!(f, "{} {} {}", sub(lhs), op.symbol(), sub(rhs))
                } else {
                    write!(f, "({} {} {})", sub(lhs), op.symbol(), sub(rhs))
                }
            }
            Expr::FilteredIndex {
                limit,
                filters,
                index,
            } => {
                write!(f, "[i for i in range({limit}) if ")?;
                for (n, filter) in filters.iter().enumerate() {
                    if n > 0 {
                        f.write_str(" or ")?;
                    }
                    write!(
                        f,
                        "{}",
                        ExprText {
                            expr: filter,
                            var: "i",
                            top: true,
                        }
                    )?;
                }
                write!(
                    f,
                    "][{}]",
                    ExprText {
                        expr: index,
                        var: self.var,
                        top: true,
                    }
                )
            }
        }
    }
}

impl<'a> ExprText<'a> {
    fn child<'b>(&'b self, expr: &'b Expr) -> ExprText<'b> {
        ExprText {
            expr,
            var: self.var,
            top: false,
        }
    }

    fn top(expr: &'a Expr, var: &'a str) -> Self {
        ExprText {
            expr,
            var,
            top: true,
        }
    }
}

/// Fully parenthesised rendering. Template functions carry their own
/// canonical text; this is used for everything else.
impl fmt::Display for Function {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Function::Lambda(body) => write!(f, "lambda x: {}", ExprText::top(body, "x")),
            Function::Recursive { base, step } => write!(
                f,
                "(lambda a: lambda v: a(a,v))(lambda fn,x: {} if x==0 else {})",
                ExprText::top(base, "x"),
                ExprText::top(step, "x")
            ),
        }
    }
}
