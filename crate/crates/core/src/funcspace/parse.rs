//! Recursive-descent parser for the lambda surface syntax.
//!
//! Accepts `lambda x: <expr>`, the self-applying recursive form, and either of
//! those wrapped in `bin(...)`. Expressions follow Python precedence for
//! `| ^ & << >> + - * // % **`, unary minus, integer literals, the bound
//! variable and the filtered list-comprehension index form. Whitespace is
//! insignificant.

use num_bigint::BigInt;
use thiserror::Error;

use super::ast::{BinOp, Expr, Function, MAX_ITERATIONS};
use super::template::ConcreteFunction;

const MAX_DEPTH: usize = 128;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unparseable function at byte {pos}: {message}")]
pub struct ParseError {
    pub pos: usize,
    pub message: String,
}

/// Result of parsing a function text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedFunction {
    pub function: Function,
    /// The text wrapped its output in `bin(...)`.
    pub binary_output: bool,
    /// The template instance with the same expression tree, if any.
    pub template: Option<ConcreteFunction>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Int(BigInt),
    Ident(String),
    Sym(&'static str),
}

const SYMBOLS: [&str; 20] = [
    "**", "//", "<<", ">>", "==", "+", "-", "*", "%", "|", "^", "&", "(", ")", "[", "]", ":",
    ",", "/", ".",
];

fn tokenize(text: &str) -> Result<Vec<(usize, Tok)>, ParseError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    'outer: while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        if c.is_ascii_digit() {
            let start = i;
            while i < bytes.len() && bytes[i].is_ascii_digit() {
                i += 1;
            }
            let v: BigInt = text[start..i].parse().map_err(|_| ParseError {
                pos: start,
                message: "bad integer literal".into(),
            })?;
            out.push((start, Tok::Int(v)));
            continue;
        }
        if c.is_ascii_alphabetic() || c == b'_' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push((start, Tok::Ident(text[start..i].to_string())));
            continue;
        }
        for sym in SYMBOLS {
            if text[i..].starts_with(sym) {
                out.push((i, Tok::Sym(sym)));
                i += sym.len();
                continue 'outer;
            }
        }
        return Err(ParseError {
            pos: i,
            message: format!("unexpected character {:?}", text[i..].chars().next().unwrap_or('?')),
        });
    }
    Ok(out)
}

#[derive(Clone, Copy)]
enum Scope<'s> {
    Plain { var: &'s str },
    Step { var: &'s str, fn_name: &'s str },
}

impl<'s> Scope<'s> {
    fn var(&self) -> &'s str {
        match self {
            Scope::Plain { var } | Scope::Step { var, .. } => var,
        }
    }
}

struct Parser<'t> {
    toks: &'t [(usize, Tok)],
    pos: usize,
    end: usize,
    depth: usize,
}

impl<'t> Parser<'t> {
    fn err<T>(&self, message: impl Into<String>) -> Result<T, ParseError> {
        let pos = self.toks.get(self.pos).map(|(p, _)| *p).unwrap_or(self.end);
        Err(ParseError {
            pos,
            message: message.into(),
        })
    }

    fn peek(&self) -> Option<&'t Tok> {
        self.toks.get(self.pos).map(|(_, t)| t)
    }

    fn peek_at(&self, ahead: usize) -> Option<&'t Tok> {
        self.toks.get(self.pos + ahead).map(|(_, t)| t)
    }

    fn is_sym(&self, sym: &str) -> bool {
        matches!(self.peek(), Some(Tok::Sym(s)) if *s == sym)
    }

    fn is_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Some(Tok::Ident(s)) if s == kw)
    }

    fn eat_sym(&mut self, sym: &str) -> bool {
        if self.is_sym(sym) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect_sym(&mut self, sym: &str) -> Result<(), ParseError> {
        if self.eat_sym(sym) {
            Ok(())
        } else {
            self.err(format!("expected `{sym}`"))
        }
    }

    fn expect_kw(&mut self, kw: &str) -> Result<(), ParseError> {
        if self.is_kw(kw) {
            self.pos += 1;
            Ok(())
        } else {
            self.err(format!("expected `{kw}`"))
        }
    }

    fn ident(&mut self) -> Result<&'t str, ParseError> {
        match self.peek() {
            Some(Tok::Ident(s)) if !is_keyword(s) => {
                self.pos += 1;
                Ok(s.as_str())
            }
            _ => self.err("expected identifier"),
        }
    }

    fn expect_ident(&mut self, name: &str) -> Result<(), ParseError> {
        let got = self.ident()?;
        if got == name {
            Ok(())
        } else {
            self.pos -= 1;
            self.err(format!("expected `{name}`, found `{got}`"))
        }
    }

    fn int_literal(&mut self) -> Result<&'t BigInt, ParseError> {
        match self.peek() {
            Some(Tok::Int(v)) => {
                self.pos += 1;
                Ok(v)
            }
            _ => self.err("expected integer literal"),
        }
    }

    fn function(&mut self) -> Result<(Function, bool), ParseError> {
        if self.is_kw("lambda") {
            self.pos += 1;
            let var = self.ident()?;
            self.expect_sym(":")?;
            if self.is_kw("bin") && matches!(self.peek_at(1), Some(Tok::Sym("("))) {
                self.pos += 2;
                let inner = self.bin_inner(var)?;
                self.expect_sym(")")?;
                return Ok((inner, true));
            }
            let body = self.expr(Scope::Plain { var })?;
            Ok((Function::Lambda(body), false))
        } else if self.is_sym("(") {
            Ok((self.recursive_form()?, false))
        } else {
            self.err("expected `lambda`")
        }
    }

    /// Contents of `bin(...)`: either an expression in `var` or an applied
    /// recursive form `(...)(...)(var)`.
    fn bin_inner(&mut self, var: &'t str) -> Result<Function, ParseError> {
        if self.is_sym("(") && matches!(self.peek_at(1), Some(Tok::Ident(s)) if s == "lambda") {
            let f = self.recursive_form()?;
            self.expect_sym("(")?;
            self.expect_ident(var)?;
            self.expect_sym(")")?;
            Ok(f)
        } else {
            Ok(Function::Lambda(self.expr(Scope::Plain { var })?))
        }
    }

    /// `(lambda a: lambda v: a(a,v))(lambda fn,x: <base> if x==0 else <step>)`
    fn recursive_form(&mut self) -> Result<Function, ParseError> {
        self.expect_sym("(")?;
        self.expect_kw("lambda")?;
        let a = self.ident()?;
        self.expect_sym(":")?;
        self.expect_kw("lambda")?;
        let v = self.ident()?;
        self.expect_sym(":")?;
        self.expect_ident(a)?;
        self.expect_sym("(")?;
        self.expect_ident(a)?;
        self.expect_sym(",")?;
        self.expect_ident(v)?;
        self.expect_sym(")")?;
        self.expect_sym(")")?;

        self.expect_sym("(")?;
        self.expect_kw("lambda")?;
        let fn_name = self.ident()?;
        self.expect_sym(",")?;
        let var = self.ident()?;
        if var == fn_name {
            return self.err("recursive function and argument share a name");
        }
        self.expect_sym(":")?;
        let base = self.expr(Scope::Plain { var })?;
        self.expect_kw("if")?;
        self.expect_ident(var)?;
        self.expect_sym("==")?;
        let zero = self.int_literal()?;
        if *zero != BigInt::from(0) {
            return self.err("recursion must bottom out at 0");
        }
        self.expect_kw("else")?;
        let step = self.expr(Scope::Step { var, fn_name })?;
        self.expect_sym(")")?;
        Ok(Function::Recursive { base, step })
    }

    fn enter(&mut self) -> Result<(), ParseError> {
        self.depth += 1;
        if self.depth > MAX_DEPTH {
            self.err("expression nested too deeply")
        } else {
            Ok(())
        }
    }

    fn expr(&mut self, scope: Scope<'t>) -> Result<Expr, ParseError> {
        self.enter()?;
        let e = self.binary_level(scope, 0);
        self.depth -= 1;
        e
    }

    fn binary_level(&mut self, scope: Scope<'t>, level: usize) -> Result<Expr, ParseError> {
        const LEVELS: [&[(&str, BinOp)]; 5] = [
            &[("|", BinOp::BitOr)],
            &[("^", BinOp::BitXor)],
            &[("&", BinOp::BitAnd)],
            &[("<<", BinOp::Shl), (">>", BinOp::Shr)],
            &[("+", BinOp::Add), ("-", BinOp::Sub)],
        ];
        if level == LEVELS.len() {
            return self.term(scope);
        }
        let mut lhs = self.binary_level(scope, level + 1)?;
        'ops: loop {
            for (sym, op) in LEVELS[level] {
                if self.eat_sym(sym) {
                    let rhs = self.binary_level(scope, level + 1)?;
                    lhs = Expr::binary(*op, lhs, rhs);
                    continue 'ops;
                }
            }
            return Ok(lhs);
        }
    }

    fn term(&mut self, scope: Scope<'t>) -> Result<Expr, ParseError> {
        let mut lhs = self.factor(scope)?;
        loop {
            let op = if self.eat_sym("*") {
                BinOp::Mul
            } else if self.eat_sym("//") {
                BinOp::FloorDiv
            } else if self.eat_sym("%") {
                BinOp::Mod
            } else if self.is_sym("/") {
                return self.err("true division is not integer arithmetic");
            } else {
                return Ok(lhs);
            };
            let rhs = self.factor(scope)?;
            lhs = Expr::binary(op, lhs, rhs);
        }
    }

    fn factor(&mut self, scope: Scope<'t>) -> Result<Expr, ParseError> {
        self.enter()?;
        let e = if self.eat_sym("-") {
            self.factor(scope).map(|e| Expr::Neg(Box::new(e)))
        } else if self.eat_sym("+") {
            self.factor(scope)
        } else {
            self.power(scope)
        };
        self.depth -= 1;
        e
    }

    fn power(&mut self, scope: Scope<'t>) -> Result<Expr, ParseError> {
        let base = self.atom(scope)?;
        if self.eat_sym("**") {
            let exp = self.factor(scope)?;
            Ok(Expr::binary(BinOp::Pow, base, exp))
        } else {
            Ok(base)
        }
    }

    fn atom(&mut self, scope: Scope<'t>) -> Result<Expr, ParseError> {
        match self.peek() {
            Some(Tok::Int(v)) => {
                self.pos += 1;
                Ok(Expr::Int(v.clone()))
            }
            Some(Tok::Sym("(")) => {
                self.pos += 1;
                let e = self.expr(scope)?;
                self.expect_sym(")")?;
                Ok(e)
            }
            Some(Tok::Sym("[")) => self.comprehension(scope),
            Some(Tok::Ident(name)) => {
                if let Scope::Step { fn_name, var } = scope {
                    if name == fn_name {
                        self.pos += 1;
                        return self.recursive_call(fn_name, var);
                    }
                }
                if name == scope.var() {
                    self.pos += 1;
                    Ok(Expr::Var)
                } else {
                    self.err(format!("unknown name `{name}`"))
                }
            }
            _ => self.err("expected expression"),
        }
    }

    /// After the function name: `(fn, x-1)`.
    fn recursive_call(&mut self, fn_name: &str, var: &str) -> Result<Expr, ParseError> {
        self.expect_sym("(")?;
        self.expect_ident(fn_name)?;
        self.expect_sym(",")?;
        self.expect_ident(var)?;
        self.expect_sym("-")?;
        let one = self.int_literal()?;
        if *one != BigInt::from(1) {
            return self.err("recursive call must step by one");
        }
        self.expect_sym(")")?;
        Ok(Expr::Prev)
    }

    /// `[i for i in range(N) if f_1 or f_2 ...][index]`
    fn comprehension(&mut self, scope: Scope<'t>) -> Result<Expr, ParseError> {
        self.expect_sym("[")?;
        let elem = self.ident()?;
        self.expect_kw("for")?;
        self.expect_ident(elem)?;
        self.expect_kw("in")?;
        self.expect_kw("range")?;
        self.expect_sym("(")?;
        let limit = self.int_literal()?;
        let limit = u64::try_from(limit)
            .ok()
            .filter(|l| *l <= MAX_ITERATIONS)
            .map_or_else(|| self.err("range bound too large"), Ok)?;
        self.expect_sym(")")?;
        let inner = Scope::Plain { var: elem };
        let filters = if self.is_kw("if") {
            self.pos += 1;
            let mut filters = vec![self.expr(inner)?];
            while self.is_kw("or") {
                self.pos += 1;
                filters.push(self.expr(inner)?);
            }
            filters
        } else {
            // no filter keeps every element
            vec![Expr::int(1)]
        };
        self.expect_sym("]")?;
        self.expect_sym("[")?;
        let index = self.expr(scope)?;
        self.expect_sym("]")?;
        Ok(Expr::FilteredIndex {
            limit,
            filters,
            index: Box::new(index),
        })
    }
}

fn is_keyword(s: &str) -> bool {
    matches!(
        s,
        "lambda" | "for" | "in" | "if" | "else" | "or" | "and" | "not" | "range"
    )
}

/// Parse a function text. Never panics; anything outside the grammar is an
/// error.
pub fn parse(text: &str) -> Result<ParsedFunction, ParseError> {
    let toks = tokenize(text)?;
    let mut p = Parser {
        toks: &toks,
        pos: 0,
        end: text.len(),
        depth: 0,
    };
    let (function, binary_output) = p.function()?;
    if p.pos != toks.len() {
        return p.err("trailing input");
    }
    let template = ConcreteFunction::recognize(&function);
    Ok(ParsedFunction {
        function,
        binary_output,
        template,
    })
}
