//! Mining ambiguous sequences from a function space.
//!
//! Every (function, offset) pair produces a prefix of the requested length
//! plus the next value. Pairs are grouped by prefix: a prefix reached with two
//! or more distinct next values is ambiguous, one with a single next value is
//! unambiguous. [`mine_pairwise`] keeps the pair-by-pair formulation for
//! auditing the grouped result.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};

use num_bigint::BigInt;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::funcspace::{generate_sequence, ConcreteFunction, ConstantRange, IndexConvention};
use crate::sequence::{bigint_string, Base, SequenceRecord};

pub const DATASET_FORMAT: &str = "seqcon-dataset";
pub const DATASET_VERSION: u32 = 1;

/// One way of producing a sequence: a function started at an offset, and the
/// value it produces next.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Generator {
    pub function: ConcreteFunction,
    pub offset: u64,
    #[serde(with = "bigint_string")]
    pub continuation: BigInt,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AmbiguityRecord {
    pub sequence: SequenceRecord,
    /// Sorted by function enumeration order, then offset.
    pub generators: Vec<Generator>,
}

impl AmbiguityRecord {
    pub fn continuations(&self) -> BTreeSet<BigInt> {
        self.generators
            .iter()
            .map(|g| g.continuation.clone())
            .collect()
    }

    /// Distinct generating functions in enumeration order.
    pub fn explanations(&self) -> Vec<ConcreteFunction> {
        let set: BTreeSet<&ConcreteFunction> = self.generators.iter().map(|g| &g.function).collect();
        set.into_iter().cloned().collect()
    }

    /// Continuations `f` produces for this prefix across its matching offsets.
    pub fn continuations_of(&self, f: &ConcreteFunction) -> BTreeSet<BigInt> {
        self.generators
            .iter()
            .filter(|g| &g.function == f)
            .map(|g| g.continuation.clone())
            .collect()
    }

    pub fn is_ambiguous(&self) -> bool {
        self.continuations().len() >= 2
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MiningParams {
    pub length: usize,
    pub start_index: u64,
    pub max_offset: u64,
    /// Constant range of the space, when it came from template enumeration.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constants: Option<ConstantRange>,
}

impl MiningParams {
    pub fn convention(&self) -> IndexConvention {
        IndexConvention {
            start_index: self.start_index,
            max_offset: self.max_offset,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    pub params: MiningParams,
    pub space_size: usize,
    pub ambiguous: Vec<AmbiguityRecord>,
    pub unambiguous: Vec<AmbiguityRecord>,
}

/// Counts in each of the units a dataset can be measured in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct DatasetCounts {
    pub ambiguous_sequences: usize,
    pub unambiguous_sequences: usize,
    /// Functions generating at least one ambiguous prefix.
    pub ambiguous_functions: usize,
    /// Functions that never generate an ambiguous prefix.
    pub unambiguous_functions: usize,
}

impl Dataset {
    pub fn counts(&self) -> DatasetCounts {
        let ambiguous_fns: BTreeSet<&ConcreteFunction> = self
            .ambiguous
            .iter()
            .flat_map(|r| r.generators.iter().map(|g| &g.function))
            .collect();
        DatasetCounts {
            ambiguous_sequences: self.ambiguous.len(),
            unambiguous_sequences: self.unambiguous.len(),
            ambiguous_functions: ambiguous_fns.len(),
            unambiguous_functions: self.space_size - ambiguous_fns.len(),
        }
    }

    pub fn convention(&self) -> IndexConvention {
        self.params.convention()
    }

    pub fn records(&self) -> impl Iterator<Item = &AmbiguityRecord> {
        self.ambiguous.iter().chain(self.unambiguous.iter())
    }

    pub fn find(&self, values: &[BigInt]) -> Option<&AmbiguityRecord> {
        let search = |list: &'_ [AmbiguityRecord]| {
            list.binary_search_by(|r| r.sequence.values.as_slice().cmp(values))
                .ok()
        };
        search(&self.ambiguous)
            .map(|i| &self.ambiguous[i])
            .or_else(|| search(&self.unambiguous).map(|i| &self.unambiguous[i]))
    }

    /// Line-oriented serialization: a header line, then one record per line,
    /// ambiguous records first, each group sorted by sequence values.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<(), DatasetError> {
        let header = DatasetHeader {
            format: DATASET_FORMAT.to_string(),
            version: DATASET_VERSION,
            params: self.params,
            space_size: self.space_size,
        };
        serde_json::to_writer(&mut w, &header)?;
        w.write_all(b"\n")?;
        for (class, list) in [
            (RecordClass::Ambiguous, &self.ambiguous),
            (RecordClass::Unambiguous, &self.unambiguous),
        ] {
            for r in list {
                let line = RecordLine {
                    class,
                    sequence: r.sequence.clone(),
                    generators: r.generators.clone(),
                };
                serde_json::to_writer(&mut w, &line)?;
                w.write_all(b"\n")?;
            }
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> Result<Dataset, DatasetError> {
        let mut lines = r.lines();
        let header_line = lines.next().ok_or(DatasetError::MissingHeader)??;
        let header: DatasetHeader = serde_json::from_str(&header_line)?;
        if header.format != DATASET_FORMAT || header.version != DATASET_VERSION {
            return Err(DatasetError::Version {
                format: header.format,
                version: header.version,
            });
        }
        let mut ds = Dataset {
            params: header.params,
            space_size: header.space_size,
            ambiguous: Vec::new(),
            unambiguous: Vec::new(),
        };
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: RecordLine = serde_json::from_str(&line)?;
            let record = AmbiguityRecord {
                sequence: rec.sequence,
                generators: rec.generators,
            };
            match rec.class {
                RecordClass::Ambiguous => ds.ambiguous.push(record),
                RecordClass::Unambiguous => ds.unambiguous.push(record),
            }
        }
        Ok(ds)
    }
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("dataset file has no header line")]
    MissingHeader,
    #[error("unsupported dataset format {format:?} version {version}")]
    Version { format: String, version: u32 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Serialize, Deserialize)]
struct DatasetHeader {
    format: String,
    version: u32,
    params: MiningParams,
    space_size: usize,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum RecordClass {
    Ambiguous,
    Unambiguous,
}

#[derive(Serialize, Deserialize)]
struct RecordLine {
    class: RecordClass,
    sequence: SequenceRecord,
    generators: Vec<Generator>,
}

/// Sequence prefix of `length` plus the next value for every valid
/// (function, offset) pair, in space order then offset order.
fn all_generations<'a>(
    space: &'a [ConcreteFunction],
    length: usize,
    conv: &'a IndexConvention,
) -> impl Iterator<Item = (Vec<BigInt>, Generator)> + 'a {
    space.iter().flat_map(move |f| {
        conv.offsets().filter_map(move |offset| {
            let mut values = generate_sequence(f, offset, length + 1, conv).ok()?;
            let continuation = values.pop()?;
            Some((
                values,
                Generator {
                    function: f.clone(),
                    offset,
                    continuation,
                },
            ))
        })
    })
}

/// Group every (function, offset) pair of `space` by its length-`length`
/// prefix and split the prefixes into ambiguous and unambiguous records.
pub fn mine(space: &[ConcreteFunction], length: usize, conv: &IndexConvention) -> Dataset {
    mine_with_constants(space, length, conv, None)
}

pub fn mine_with_constants(
    space: &[ConcreteFunction],
    length: usize,
    conv: &IndexConvention,
    constants: Option<ConstantRange>,
) -> Dataset {
    let mut groups: BTreeMap<Vec<BigInt>, Vec<Generator>> = BTreeMap::new();
    if length > 0 {
        for (prefix, generator) in all_generations(space, length, conv) {
            groups.entry(prefix).or_default().push(generator);
        }
    }
    let mut ambiguous = Vec::new();
    let mut unambiguous = Vec::new();
    for (values, mut generators) in groups {
        generators.sort_by(|a, b| (&a.function, a.offset).cmp(&(&b.function, b.offset)));
        let record = AmbiguityRecord {
            sequence: SequenceRecord::new(values, Base::Decimal),
            generators,
        };
        if record.is_ambiguous() {
            ambiguous.push(record);
        } else {
            unambiguous.push(record);
        }
    }
    Dataset {
        params: MiningParams {
            length,
            start_index: conv.start_index,
            max_offset: conv.max_offset,
            constants,
        },
        space_size: space.len(),
        ambiguous,
        unambiguous,
    }
}

/// All (function, offset) pairs whose prefix equals `seq`.
pub fn matching_generators(
    seq: &SequenceRecord,
    space: &[ConcreteFunction],
    conv: &IndexConvention,
) -> Vec<Generator> {
    if seq.values.is_empty() {
        return Vec::new();
    }
    let mut out = Vec::new();
    for f in space {
        for offset in conv.offsets() {
            let first = conv.start_index + offset;
            // stop at the first mismatch instead of generating the full prefix
            let matches = seq
                .values
                .iter()
                .zip(first..)
                .all(|(want, x)| f.evaluate(x).is_ok_and(|v| v == *want));
            if !matches {
                continue;
            }
            if let Ok(continuation) = f.evaluate(first + seq.values.len() as u64) {
                out.push(Generator {
                    function: f.clone(),
                    offset,
                    continuation,
                });
            }
        }
    }
    out
}

/// Every continuation some space function produces after `seq`.
pub fn valid_continuations(
    seq: &SequenceRecord,
    space: &[ConcreteFunction],
    conv: &IndexConvention,
) -> BTreeSet<BigInt> {
    matching_generators(seq, space, conv)
        .into_iter()
        .map(|g| g.continuation)
        .collect()
}

/// Every space function that generates `seq` at some allowed offset.
pub fn valid_explanations(
    seq: &SequenceRecord,
    space: &[ConcreteFunction],
    conv: &IndexConvention,
) -> BTreeSet<ConcreteFunction> {
    matching_generators(seq, space, conv)
        .into_iter()
        .map(|g| g.function)
        .collect()
}

/// One ambiguous (function, offset) pairing found by the pairwise search.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AmbiguousPair {
    pub first: usize,
    pub first_offset: u64,
    pub second: usize,
    pub second_offset: u64,
    pub prefix: Vec<BigInt>,
    pub first_continuation: BigInt,
    pub second_continuation: BigInt,
}

/// Pairwise search over `space x space x offsets x offsets`: two
/// generations are ambiguous when they agree on the first `length` values and
/// differ on the next. Function indices refer to positions in `space`; the
/// same function at two offsets counts as a pair.
pub fn mine_pairwise(
    space: &[ConcreteFunction],
    length: usize,
    conv: &IndexConvention,
) -> Vec<AmbiguousPair> {
    let generations: Vec<Vec<Option<Vec<BigInt>>>> = space
        .iter()
        .map(|f| {
            conv.offsets()
                .map(|o| generate_sequence(f, o, length + 1, conv).ok())
                .collect()
        })
        .collect();
    let mut out = Vec::new();
    if length == 0 {
        return out;
    }
    for (i, gi) in generations.iter().enumerate() {
        for (j, gj) in generations.iter().enumerate() {
            for (o1, a) in gi.iter().enumerate() {
                for (o2, b) in gj.iter().enumerate() {
                    let (Some(a), Some(b)) = (a, b) else { continue };
                    if a[..length] == b[..length] && a[length] != b[length] {
                        out.push(AmbiguousPair {
                            first: i,
                            first_offset: o1 as u64,
                            second: j,
                            second_offset: o2 as u64,
                            prefix: a[..length].to_vec(),
                            first_continuation: a[length].clone(),
                            second_continuation: b[length].clone(),
                        });
                    }
                }
            }
        }
    }
    out
}

/// Summary of a pairwise search.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct PairwiseCounts {
    /// Ordered (function, offset, function, offset) tuples.
    pub tuples: usize,
    /// Unordered function pairs, a function paired with itself included.
    pub function_pairs: usize,
    /// Distinct functions appearing in any pair.
    pub functions: usize,
    /// Distinct ambiguous prefixes.
    pub sequences: usize,
}

pub fn pairwise_counts(pairs: &[AmbiguousPair]) -> PairwiseCounts {
    let fn_pairs: BTreeSet<(usize, usize)> = pairs
        .iter()
        .map(|p| (p.first.min(p.second), p.first.max(p.second)))
        .collect();
    let fns: BTreeSet<usize> = pairs.iter().flat_map(|p| [p.first, p.second]).collect();
    let seqs: BTreeSet<&Vec<BigInt>> = pairs.iter().map(|p| &p.prefix).collect();
    PairwiseCounts {
        tuples: pairs.len(),
        function_pairs: fn_pairs.len(),
        functions: fns.len(),
        sequences: seqs.len(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::funcspace::TemplateKind;

    fn f(kind: TemplateKind, c1: u64, c2: u64) -> ConcreteFunction {
        ConcreteFunction::new(kind, c1, c2)
    }

    #[test]
    fn single_function_space_has_no_ambiguity() {
        let space = [f(TemplateKind::Arithmetic, 2, 1)];
        let ds = mine(&space, 3, &IndexConvention::default());
        assert!(ds.ambiguous.is_empty());
        assert_eq!(ds.unambiguous.len(), 5);
    }

    #[test]
    fn table_vectors_at_length_three() {
        let space = [
            f(TemplateKind::Arithmetic, 4, 3),
            f(TemplateKind::BitOr, 3, 3),
        ];
        let conv = IndexConvention::default();
        let ds = mine(&space, 3, &conv);
        let seq = SequenceRecord::decimal([7, 11, 15]);
        let rec = ds.find(&seq.values).unwrap();
        assert!(rec.is_ambiguous());
        assert_eq!(
            rec.continuations(),
            [BigInt::from(15), BigInt::from(19)].into_iter().collect()
        );
        assert_eq!(rec.generators[0].offset, 0);
        assert_eq!(rec.generators[1].offset, 1);
    }

    #[test]
    fn unmatched_sequence_has_empty_sets() {
        let space = [f(TemplateKind::Arithmetic, 4, 3)];
        let seq = SequenceRecord::decimal([1, 2, 4, 8, 17]);
        let conv = IndexConvention::default();
        assert!(valid_continuations(&seq, &space, &conv).is_empty());
        assert!(valid_explanations(&seq, &space, &conv).is_empty());
    }

    #[test]
    fn identical_continuations_are_not_ambiguous() {
        // geometric(2,1) and arithmetic(2,0) are the same function
        let space = [
            f(TemplateKind::Arithmetic, 2, 0),
            f(TemplateKind::Geometric, 2, 1),
        ];
        let ds = mine(&space, 2, &IndexConvention::default());
        assert!(ds.ambiguous.is_empty());
        assert!(ds.unambiguous.iter().all(|r| r.generators.len() == 2));
    }

    #[test]
    fn jsonl_round_trip() {
        let space = [
            f(TemplateKind::Arithmetic, 4, 3),
            f(TemplateKind::BitOr, 3, 3),
            f(TemplateKind::Recursive, 2, 1),
        ];
        let ds = mine(&space, 3, &IndexConvention::default());
        let mut buf = Vec::new();
        ds.write_jsonl(&mut buf).unwrap();
        let back = Dataset::read_jsonl(buf.as_slice()).unwrap();
        assert_eq!(back, ds);
        let mut again = Vec::new();
        back.write_jsonl(&mut again).unwrap();
        assert_eq!(buf, again);
    }

    #[test]
    fn wrong_version_is_rejected() {
        let text = r#"{"format":"seqcon-dataset","version":99,"params":{"length":3,"start_index":1,"max_offset":4},"space_size":0}"#;
        assert!(matches!(
            Dataset::read_jsonl(text.as_bytes()),
            Err(DatasetError::Version { version: 99, .. })
        ));
    }
}
