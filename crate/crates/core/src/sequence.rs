//! Integer sequences and their numeral rendering in base 2 or 10.

use std::fmt;

use num_bigint::BigInt;
use num_traits::Signed;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub enum Base {
    Binary,
    #[default]
    Decimal,
}

impl Base {
    pub fn radix(self) -> u32 {
        match self {
            Base::Binary => 2,
            Base::Decimal => 10,
        }
    }

    pub fn from_radix(radix: u32) -> Option<Self> {
        match radix {
            2 => Some(Base::Binary),
            10 => Some(Base::Decimal),
            _ => None,
        }
    }

    /// Python-style numeral: `19` or `0b10011` (`-0b11` for negatives).
    pub fn render(self, v: &BigInt) -> String {
        match self {
            Base::Decimal => v.to_string(),
            Base::Binary => {
                let digits = v.abs().to_str_radix(2);
                if v.is_negative() {
                    format!("-0b{digits}")
                } else {
                    format!("0b{digits}")
                }
            }
        }
    }

    /// Strict numeral parse: optional sign, digits of this base, and for base
    /// 2 an optional `0b` prefix. No other characters.
    pub fn parse_numeral(self, text: &str) -> Option<BigInt> {
        let (negative, rest) = match text.strip_prefix('-') {
            Some(r) => (true, r),
            None => (false, text.strip_prefix('+').unwrap_or(text)),
        };
        let digits = match self {
            Base::Decimal => rest,
            Base::Binary => rest
                .strip_prefix("0b")
                .or_else(|| rest.strip_prefix("0B"))
                .unwrap_or(rest),
        };
        if digits.is_empty() || !digits.chars().all(|c| c.is_digit(self.radix())) {
            return None;
        }
        let v = BigInt::parse_bytes(digits.as_bytes(), self.radix())?;
        Some(if negative { -v } else { v })
    }

    pub fn join(self, values: &[BigInt], sep: &str) -> String {
        values
            .iter()
            .map(|v| self.render(v))
            .collect::<Vec<_>>()
            .join(sep)
    }
}

impl fmt::Display for Base {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.radix())
    }
}

impl Serialize for Base {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u32(self.radix())
    }
}

impl<'de> Deserialize<'de> for Base {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let radix = u32::deserialize(d)?;
        Base::from_radix(radix)
            .ok_or_else(|| serde::de::Error::custom(format!("unsupported base {radix}")))
    }
}

/// A sequence prefix as shown to a model.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SequenceRecord {
    pub values: Vec<BigInt>,
    pub base: Base,
}

impl SequenceRecord {
    pub fn new(values: Vec<BigInt>, base: Base) -> Self {
        SequenceRecord { values, base }
    }

    pub fn decimal<I: IntoIterator<Item = i64>>(values: I) -> Self {
        SequenceRecord {
            values: values.into_iter().map(BigInt::from).collect(),
            base: Base::Decimal,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn with_base(&self, base: Base) -> Self {
        SequenceRecord {
            values: self.values.clone(),
            base,
        }
    }

    /// Numerals in the record's base joined with `sep`.
    pub fn render(&self, sep: &str) -> String {
        self.base.join(&self.values, sep)
    }
}

impl fmt::Display for SequenceRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render(", "))
    }
}

#[derive(Serialize, Deserialize)]
struct SequenceWire {
    values: Vec<String>,
    base: Base,
}

impl Serialize for SequenceRecord {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        SequenceWire {
            values: self.values.iter().map(|v| self.base.render(v)).collect(),
            base: self.base,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for SequenceRecord {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let wire = SequenceWire::deserialize(d)?;
        let values = wire
            .values
            .iter()
            .map(|t| {
                wire.base
                    .parse_numeral(t)
                    .ok_or_else(|| serde::de::Error::custom(format!("bad numeral {t:?}")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        if values.is_empty() {
            return Err(serde::de::Error::custom("empty sequence"));
        }
        Ok(SequenceRecord {
            values,
            base: wire.base,
        })
    }
}

/// Serde adapter storing a `BigInt` as a decimal string.
pub mod bigint_string {
    use num_bigint::BigInt;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &BigInt, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&v.to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BigInt, D::Error> {
        let text = String::deserialize(d)?;
        text.parse().map_err(serde::de::Error::custom)
    }
}

/// Serde adapter storing a list of `BigInt`s as decimal strings.
pub mod bigint_vec {
    use num_bigint::BigInt;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[BigInt], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(v.iter().map(|x| x.to_string()))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<BigInt>, D::Error> {
        Vec::<String>::deserialize(d)?
            .iter()
            .map(|t| t.parse().map_err(serde::de::Error::custom))
            .collect()
    }
}
