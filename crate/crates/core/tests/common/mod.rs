//! Independent reference code shared by the integration tests. Nothing here
//! goes through the library's AST, parser or evaluator.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use num_bigint::BigInt;
use num_traits::{One, Pow, Zero};

pub const KINDS: [&str; 8] = [
    "arithmetic",
    "geometric",
    "exponential",
    "power",
    "bit_or",
    "modular",
    "indexing_criteria",
    "recursive",
];

/// Direct evaluation of template `kind` with constants `c1`, `c2` at `x`.
/// `None` where the filtered list is too short.
pub fn brute(kind: &str, c1: u64, c2: u64, x: u64) -> Option<BigInt> {
    let (a, b, xb) = (BigInt::from(c1), BigInt::from(c2), BigInt::from(x));
    Some(match kind {
        "arithmetic" => &a * &xb + &b,
        "geometric" => &a * &xb * &b,
        "exponential" => Pow::pow(&a * &xb, c2 as u32),
        "power" => Pow::pow(a, (c2 * x) as u32),
        "bit_or" => (&a * &xb) | &b,
        "modular" => (&xb * &a) % (&b + 1u32),
        "indexing_criteria" => {
            let list: Vec<u64> = (0..100u64)
                .filter(|i| i % (c1 + 1) != 0 || i % (c2 + 1) != 0)
                .collect();
            BigInt::from(*list.get(x as usize)?)
        }
        "recursive" => {
            let mut f = BigInt::one();
            for k in 1..=x {
                f = &a * BigInt::from(k) * &f + &b;
            }
            f
        }
        _ => unreachable!("unknown kind {kind}"),
    })
}

/// Canonical text typed out per template.
pub fn text(kind: &str, c1: u64, c2: u64) -> String {
    match kind {
        "arithmetic" => format!("lambda x: ({c1} * x) + {c2}"),
        "geometric" => format!("lambda x: ({c1} * x) * {c2}"),
        "exponential" => format!("lambda x: ({c1} * x) ** {c2}"),
        "power" => format!("lambda x: {c1} ** ({c2} * x)"),
        "bit_or" => format!("lambda x: ({c1} * x) | {c2}"),
        "modular" => format!("lambda x: (x * {c1}) % ({c2}+1)"),
        "indexing_criteria" => {
            format!("lambda x: [i for i in range(100) if i % ({c1} + 1) or i % ({c2} + 1)][x]")
        }
        "recursive" => format!(
            "(lambda a: lambda v: a(a,v))(lambda fn,x: 1 if x==0 else {c1} * x * fn(fn,x-1) + {c2})"
        ),
        _ => unreachable!(),
    }
}

/// (kind, c1, c2) valid on indices `0..probe_end`, in template/c1/c2 order.
pub fn brute_space(probe_end: u64) -> Vec<(&'static str, u64, u64)> {
    let mut out = Vec::new();
    for kind in KINDS {
        for c1 in 0..=4 {
            for c2 in 0..=4 {
                if (0..probe_end).all(|x| brute(kind, c1, c2, x).is_some()) {
                    out.push((kind, c1, c2));
                }
            }
        }
    }
    out
}

pub type Triple = ((&'static str, u64, u64), u64, BigInt);

/// prefix -> every (function, offset, continuation) producing it.
pub fn brute_groups(
    space: &[(&'static str, u64, u64)],
    len: usize,
    start: u64,
    max_offset: u64,
) -> BTreeMap<Vec<BigInt>, Vec<Triple>> {
    let mut groups: BTreeMap<Vec<BigInt>, Vec<Triple>> = BTreeMap::new();
    for &(k, a, b) in space {
        for o in 0..=max_offset {
            let vals: Option<Vec<BigInt>> = (0..=len as u64).map(|j| brute(k, a, b, start + o + j)).collect();
            let Some(mut vals) = vals else { continue };
            let next = vals.pop().unwrap();
            groups.entry(vals).or_default().push(((k, a, b), o, next));
        }
    }
    groups
}

pub fn is_ambiguous(g: &[Triple]) -> bool {
    g.iter().map(|t| &t.2).collect::<BTreeSet<_>>().len() >= 2
}

pub fn zero() -> BigInt {
    BigInt::zero()
}
