//! Response parsing, accuracy, cross-context and model-judged consistency,
//! the random-answer consistency baseline, and verbalization scores.

use std::collections::{BTreeMap, BTreeSet};

use num_bigint::BigInt;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backends::{Backend, BackendError, CompletionRequest};
use crate::distribution::TokenDistribution;
use crate::funcspace::{generate_sequence, parse, ConcreteFunction, Evaluate, IndexConvention, ParsedFunction};
use crate::mining::{valid_continuations, valid_explanations, AmbiguityRecord, Dataset};
use crate::prompting::{
    build_judgment_prompt, Choice, JudgedPair, PromptContext, PromptSpec, RenderedPrompt, Task,
    Variant, VerdictVocabulary, ALTERNATIVE_SEPARATOR, MAX_ALTERNATIVES,
};
use crate::sequence::{bigint_string, bigint_vec, Base, SequenceRecord};

const EXPLANATION_MARKER: &str = "Explanation:";

fn first_line(text: &str) -> &str {
    text.lines().map(str::trim).find(|l| !l.is_empty()).unwrap_or("")
}

/// A bare numeral in `base`, surrounding whitespace allowed. Only the first
/// non-empty line is read.
pub fn parse_completion_response(text: &str, base: Base) -> Option<BigInt> {
    base.parse_numeral(first_line(text))
}

fn explanation_body(text: &str) -> &str {
    let line = first_line(text);
    line.strip_prefix(EXPLANATION_MARKER).unwrap_or(line).trim()
}

/// The function after an optional `Explanation:` marker.
pub fn parse_explanation_response(text: &str) -> Option<ParsedFunction> {
    parse(explanation_body(text)).ok()
}

/// Explanation text as scored: marker removed, all whitespace dropped.
pub fn normalize_explanation(text: &str) -> String {
    explanation_body(text).chars().filter(|c| !c.is_whitespace()).collect()
}

/// Exact-match rule: canonical text of `f` in `base`, whitespace ignored.
pub fn explanation_matches(text: &str, f: &ConcreteFunction, base: Base) -> bool {
    normalize_explanation(text) == normalize_explanation(&f.render(base.radix()))
}

/// The first word of the response, lowercased and stripped of quotes and
/// punctuation, looked up in the vocabulary.
pub fn parse_verdict(text: &str, vocab: &VerdictVocabulary) -> Option<bool> {
    let word = first_line(text)
        .split_whitespace()
        .next()?
        .trim_matches(|c: char| !c.is_alphanumeric())
        .to_lowercase();
    if vocab.affirmative.iter().any(|w| w.to_lowercase() == word) {
        Some(true)
    } else if vocab.negative.iter().any(|w| w.to_lowercase() == word) {
        Some(false)
    } else {
        None
    }
}

/// Alternatives separated by the literal `\n` marker or real newlines.
/// Unparseable pieces are dropped; no numeral at all is invalid.
pub fn parse_alternatives(text: &str, base: Base) -> Option<Vec<BigInt>> {
    let sep = ALTERNATIVE_SEPARATOR.trim();
    let out: Vec<BigInt> = text
        .split(sep)
        .flat_map(str::lines)
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .filter_map(|p| base.parse_numeral(p))
        .collect();
    (!out.is_empty()).then_some(out)
}

pub fn parse_choice(text: &str, choices: &[Choice]) -> Option<String> {
    let word = first_line(text).split_whitespace().next()?;
    let word = word.trim_end_matches(['.', ')', ':']);
    choices.iter().find(|c| c.label == word).map(|c| c.label.clone())
}

/// Continuations `f` produces after `prefix` at offsets where it
/// reproduces the prefix.
pub fn explanation_continuations<F: Evaluate + ?Sized>(
    prefix: &[BigInt],
    f: &F,
    conv: &IndexConvention,
) -> BTreeSet<BigInt> {
    conv.offsets()
        .filter_map(|o| generate_sequence(f, o, prefix.len() + 1, conv).ok())
        .filter(|s| s[..prefix.len()] == *prefix)
        .map(|mut s| s.pop().expect("non-empty"))
        .collect()
}

/// True iff executing `explanation` at some allowed offset yields `prefix`
/// followed by `completion`.
pub fn check_cross_context_consistency<F: Evaluate + ?Sized>(
    prefix: &[BigInt],
    completion: &BigInt,
    explanation: &F,
    conv: &IndexConvention,
) -> bool {
    conv.offsets().any(|o| {
        generate_sequence(explanation, o, prefix.len() + 1, conv).is_ok_and(|s| {
            s[..prefix.len()] == *prefix && s[prefix.len()] == *completion
        })
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum Parsed {
    Integer(#[serde(with = "bigint_string")] BigInt),
    /// Function text, marker and surrounding whitespace removed.
    Function(String),
    Verdict(bool),
    Integers(#[serde(with = "bigint_vec")] Vec<BigInt>),
    Choice(String),
    Invalid,
}

/// One parsed model response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub run_id: u32,
    pub task: Task,
    pub variant: Variant,
    pub sequence: SequenceRecord,
    pub raw_response: String,
    pub parsed: Parsed,
    pub valid: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correct: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub judged: Option<JudgedPair>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub choices: Vec<Choice>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub logprobs: Option<TokenDistribution>,
}

impl EvalRecord {
    /// Parse `raw` as an answer to `prompt` and grade it against the valid
    /// answers in `space`. Judgments are graded against execution.
    pub fn grade(
        run_id: u32,
        prompt: &RenderedPrompt,
        raw: &str,
        space: &[ConcreteFunction],
        conv: &IndexConvention,
        vocab: &VerdictVocabulary,
    ) -> EvalRecord {
        let seq = &prompt.target;
        let base = seq.base;
        let (parsed, correct) = match prompt.task {
            Task::Completion => match parse_completion_response(raw, base) {
                Some(v) => {
                    let ok = valid_continuations(seq, space, conv).contains(&v);
                    (Parsed::Integer(v), Some(ok))
                }
                None => (Parsed::Invalid, None),
            },
            Task::Explanation => match parse_explanation_response(raw) {
                Some(_) => {
                    let ok = valid_explanations(seq, space, conv)
                        .iter()
                        .any(|f| explanation_matches(raw, f, base));
                    (Parsed::Function(explanation_body(raw).to_string()), Some(ok))
                }
                None => (Parsed::Invalid, None),
            },
            Task::ConsistencyJudgment => match parse_verdict(raw, vocab) {
                Some(v) => {
                    let truth = prompt.judged.as_ref().is_some_and(|j| {
                        parse(&j.explanation).is_ok_and(|f| {
                            check_cross_context_consistency(&seq.values, &j.continuation, &f.function, conv)
                        })
                    });
                    (Parsed::Verdict(v), Some(v == truth))
                }
                None => (Parsed::Invalid, None),
            },
            Task::VerbalizeAlternatives => match parse_alternatives(raw, base) {
                Some(v) => (Parsed::Integers(v), None),
                None => (Parsed::Invalid, None),
            },
            Task::ExplanationChoice => match parse_choice(raw, &prompt.choices) {
                Some(label) => {
                    let valid = valid_explanations(seq, space, conv);
                    let ok = prompt
                        .choices
                        .iter()
                        .any(|c| c.label == label && valid.contains(&c.function));
                    (Parsed::Choice(label), Some(ok))
                }
                None => (Parsed::Invalid, None),
            },
        };
        EvalRecord {
            run_id,
            task: prompt.task,
            variant: prompt.variant,
            sequence: seq.clone(),
            raw_response: raw.to_string(),
            valid: parsed != Parsed::Invalid,
            parsed,
            correct,
            judged: prompt.judged.clone(),
            choices: prompt.choices.clone(),
            logprobs: None,
        }
    }

    pub fn completion(&self) -> Option<&BigInt> {
        match &self.parsed {
            Parsed::Integer(v) => Some(v),
            _ => None,
        }
    }

    pub fn explanation(&self) -> Option<ParsedFunction> {
        match &self.parsed {
            Parsed::Function(t) => parse(t).ok(),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AccuracyScores {
    pub completion_accuracy: Option<f64>,
    pub explanation_accuracy: Option<f64>,
    pub valid_fraction: Option<f64>,
    pub n_completion: usize,
    pub n_explanation: usize,
    /// Records whose sequence is not in the dataset; ignored.
    pub unmatched: usize,
}

fn pct(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| 100.0 * num as f64 / den as f64)
}

/// Accuracy over completion and explanation records whose sequence is in
/// `dataset.unambiguous`. Invalid answers count as wrong.
pub fn score_accuracy(records: &[EvalRecord], dataset: &Dataset) -> AccuracyScores {
    let index: BTreeMap<&[BigInt], &AmbiguityRecord> = dataset
        .unambiguous
        .iter()
        .map(|r| (r.sequence.values.as_slice(), r))
        .collect();
    let mut s = AccuracyScores::default();
    let (mut c_ok, mut e_ok, mut valid) = (0, 0, 0);
    for r in records {
        if !matches!(r.task, Task::Completion | Task::Explanation) {
            continue;
        }
        let Some(truth) = index.get(r.sequence.values.as_slice()) else {
            s.unmatched += 1;
            continue;
        };
        valid += r.valid as usize;
        match (&r.task, &r.parsed) {
            (Task::Completion, p) => {
                s.n_completion += 1;
                if let Parsed::Integer(v) = p {
                    c_ok += truth.continuations().contains(v) as usize;
                }
            }
            (_, p) => {
                s.n_explanation += 1;
                if let Parsed::Function(t) = p {
                    let base = r.sequence.base;
                    e_ok += truth.explanations().iter().any(|f| explanation_matches(t, f, base)) as usize;
                }
            }
        }
    }
    s.completion_accuracy = pct(c_ok, s.n_completion);
    s.explanation_accuracy = pct(e_ok, s.n_explanation);
    s.valid_fraction = pct(valid, s.n_completion + s.n_explanation);
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConsistencyOutcome {
    Consistent,
    Inconsistent,
    Invalid,
}

pub fn pair_consistency(
    completion: &EvalRecord,
    explanation: &EvalRecord,
    conv: &IndexConvention,
) -> ConsistencyOutcome {
    match (completion.completion(), explanation.explanation()) {
        (Some(c), Some(f)) => {
            if check_cross_context_consistency(&completion.sequence.values, c, &f.function, conv) {
                ConsistencyOutcome::Consistent
            } else {
                ConsistencyOutcome::Inconsistent
            }
        }
        _ => ConsistencyOutcome::Invalid,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConsistencyCounts {
    pub consistent: usize,
    pub inconsistent: usize,
    pub invalid: usize,
    /// Consistent pairs in which both answers were also correct.
    pub consistent_both_correct: usize,
    /// Pairs in which both answers were correct.
    pub both_correct: usize,
}

impl ConsistencyCounts {
    pub fn add(&mut self, outcome: ConsistencyOutcome, both_correct: bool) {
        match outcome {
            ConsistencyOutcome::Consistent => self.consistent += 1,
            ConsistencyOutcome::Inconsistent => self.inconsistent += 1,
            ConsistencyOutcome::Invalid => self.invalid += 1,
        }
        if both_correct {
            self.both_correct += 1;
            self.consistent_both_correct += (outcome == ConsistencyOutcome::Consistent) as usize;
        }
    }

    /// Consistent share of valid pairs.
    pub fn percent(&self) -> Option<f64> {
        pct(self.consistent, self.consistent + self.inconsistent)
    }
}

type PairKey = (u32, Variant, Base, Vec<BigInt>);

fn key(r: &EvalRecord) -> PairKey {
    (r.run_id, r.variant, r.sequence.base, r.sequence.values.clone())
}

/// Joins completion and explanation records of the same run, variant and
/// sequence and checks each pair by execution.
pub fn cross_context_consistency(records: &[EvalRecord], conv: &IndexConvention) -> ConsistencyCounts {
    let mut explanations: BTreeMap<PairKey, &EvalRecord> = BTreeMap::new();
    for r in records.iter().filter(|r| r.task == Task::Explanation) {
        explanations.insert(key(r), r);
    }
    let mut counts = ConsistencyCounts::default();
    for c in records.iter().filter(|r| r.task == Task::Completion) {
        if let Some(e) = explanations.get(&key(c)) {
            let both = c.correct == Some(true) && e.correct == Some(true);
            counts.add(pair_consistency(c, e, conv), both);
        }
    }
    counts
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct JudgmentCounts {
    pub judged_consistent: usize,
    pub judged_inconsistent: usize,
    pub invalid: usize,
    /// Verdicts agreeing with execution.
    pub agreeing: usize,
}

impl JudgmentCounts {
    pub fn percent(&self) -> Option<f64> {
        pct(self.judged_consistent, self.judged_consistent + self.judged_inconsistent)
    }
}

pub fn judged_consistency(records: &[EvalRecord]) -> JudgmentCounts {
    let mut c = JudgmentCounts::default();
    for r in records.iter().filter(|r| r.task == Task::ConsistencyJudgment) {
        match r.parsed {
            Parsed::Verdict(true) => c.judged_consistent += 1,
            Parsed::Verdict(false) => c.judged_inconsistent += 1,
            _ => c.invalid += 1,
        }
        c.agreeing += (r.correct == Some(true)) as usize;
    }
    c
}

/// Ask `backend` whether `explanation` generates `seq` followed by
/// `completion`. `None` when the verdict cannot be read.
pub fn model_judged_consistency<B: Backend + ?Sized>(
    backend: &B,
    spec: &PromptSpec,
    seq: &SequenceRecord,
    completion: &BigInt,
    explanation: &str,
    ctx: PromptContext<'_>,
) -> Result<Option<bool>, EvalError> {
    let prompt = build_judgment_prompt(spec, seq, completion, explanation, ctx)?;
    let resp = backend.complete(&CompletionRequest::new(prompt))?;
    Ok(parse_verdict(&resp.text, &spec.verdicts))
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Prompt(#[from] crate::prompting::PromptError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("probability {0} outside [0, 100]")]
    Probability(f64),
    #[error("no runs to aggregate")]
    NoRuns,
}

/// Which records of a dataset enter the random baseline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordSelection {
    #[default]
    Ambiguous,
    Unambiguous,
    All,
}

struct BaselineSequence {
    /// Continuations after the prefix for each correct explanation.
    correct_expl: Vec<BTreeSet<BigInt>>,
    /// Same for every non-generating function (all empty by construction,
    /// but computed by execution rather than assumed).
    wrong_expl: Vec<BTreeSet<BigInt>>,
    correct_compl: Vec<BigInt>,
    wrong_compl: Vec<BigInt>,
}

/// Precomputed answer sets for the random baseline over one dataset.
pub struct RandomBaseline {
    seqs: Vec<BaselineSequence>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RandomConsistency {
    pub closed_form: f64,
    pub monte_carlo: f64,
    /// Standard error of the Monte Carlo estimate, in percentage points.
    pub sigma: f64,
    pub n_sequences: usize,
    pub n_samples: usize,
}

impl RandomConsistency {
    /// |MC - closed form| in units of sigma; 0 when both agree exactly.
    pub fn z(&self) -> f64 {
        let d = (self.monte_carlo - self.closed_form).abs();
        if d == 0.0 {
            0.0
        } else {
            d / self.sigma
        }
    }
}

impl RandomBaseline {
    /// Wrong completions are drawn from every continuation in the dataset
    /// that is not valid for the sequence; wrong explanations from every
    /// space function that does not generate it.
    pub fn new(
        dataset: &Dataset,
        selection: RecordSelection,
        space: &[ConcreteFunction],
        conv: &IndexConvention,
    ) -> Self {
        let pool: BTreeSet<BigInt> = dataset.records().flat_map(|r| r.continuations()).collect();
        let chosen: Vec<&AmbiguityRecord> = match selection {
            RecordSelection::Ambiguous => dataset.ambiguous.iter().collect(),
            RecordSelection::Unambiguous => dataset.unambiguous.iter().collect(),
            RecordSelection::All => dataset.records().collect(),
        };
        // every function's output at every offset, executed once
        let len = dataset.params.length;
        let outputs: Vec<Vec<Vec<BigInt>>> = space
            .iter()
            .map(|f| {
                conv.offsets()
                    .filter_map(|o| generate_sequence(f, o, len + 1, conv).ok())
                    .collect()
            })
            .collect();
        let continuations_after = |prefix: &[BigInt], i: usize| -> BTreeSet<BigInt> {
            outputs[i]
                .iter()
                .filter(|s| s[..len] == *prefix)
                .map(|s| s[len].clone())
                .collect()
        };
        let seqs = chosen
            .into_iter()
            .map(|r| {
                let prefix = &r.sequence.values;
                let explanations: BTreeSet<ConcreteFunction> = r.explanations().into_iter().collect();
                let conts = r.continuations();
                let (correct, wrong): (Vec<usize>, Vec<usize>) =
                    (0..space.len()).partition(|&i| explanations.contains(&space[i]));
                BaselineSequence {
                    correct_expl: correct.iter().map(|&i| continuations_after(prefix, i)).collect(),
                    wrong_expl: wrong.iter().map(|&i| continuations_after(prefix, i)).collect(),
                    wrong_compl: pool.difference(&conts).cloned().collect(),
                    correct_compl: conts.into_iter().collect(),
                }
            })
            .collect();
        RandomBaseline { seqs }
    }

    pub fn len(&self) -> usize {
        self.seqs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.seqs.is_empty()
    }

    fn check_p(p: f64) -> Result<f64, EvalError> {
        if (0.0..=100.0).contains(&p) {
            Ok(p / 100.0)
        } else {
            Err(EvalError::Probability(p))
        }
    }

    /// Exact per-sequence probabilities of a consistent pair.
    pub fn per_sequence(&self, p_expl: f64, p_compl: f64) -> Result<Vec<f64>, EvalError> {
        let pe = Self::check_p(p_expl)?;
        let pc = Self::check_p(p_compl)?;
        Ok(self
            .seqs
            .iter()
            .map(|s| {
                let correct: BTreeSet<&BigInt> = s.correct_compl.iter().collect();
                let wrong: BTreeSet<&BigInt> = s.wrong_compl.iter().collect();
                let weight = |c: &BigInt| -> f64 {
                    if correct.contains(c) {
                        pc / correct.len() as f64
                    } else if wrong.contains(c) {
                        (1.0 - pc) / wrong.len() as f64
                    } else {
                        0.0
                    }
                };
                weighted(&s.correct_expl, pe, &s.wrong_expl)
                    .into_iter()
                    .map(|(we, group)| {
                        we * group
                            .iter()
                            .map(|conts| conts.iter().map(&weight).sum::<f64>())
                            .sum::<f64>()
                    })
                    .sum()
            })
            .collect())
    }

    pub fn closed_form(&self, p_expl: f64, p_compl: f64) -> Result<f64, EvalError> {
        let ps = self.per_sequence(p_expl, p_compl)?;
        Ok(mean(&ps) * 100.0)
    }

    /// Closed form, Monte Carlo estimate with `n_samples` draws per
    /// sequence, and the estimator's standard error.
    pub fn estimate(
        &self,
        p_expl: f64,
        p_compl: f64,
        n_samples: usize,
        rng_seed: u64,
    ) -> Result<RandomConsistency, EvalError> {
        let ps = self.per_sequence(p_expl, p_compl)?;
        let pe = p_expl / 100.0;
        let pc = p_compl / 100.0;
        let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
        let mut hits = 0usize;
        for s in &self.seqs {
            for _ in 0..n_samples {
                let expl = pick(&mut rng, pe, &s.correct_expl, &s.wrong_expl);
                let compl = pick(&mut rng, pc, &s.correct_compl, &s.wrong_compl);
                if let (Some(e), Some(c)) = (expl, compl) {
                    hits += e.contains(c) as usize;
                }
            }
        }
        let n_seq = self.seqs.len();
        let total = (n_seq * n_samples).max(1);
        let var: f64 = ps.iter().map(|p| p * (1.0 - p)).sum::<f64>()
            / (n_seq.max(1) as f64).powi(2)
            / n_samples.max(1) as f64;
        Ok(RandomConsistency {
            closed_form: mean(&ps) * 100.0,
            monte_carlo: 100.0 * hits as f64 / total as f64,
            sigma: 100.0 * var.sqrt(),
            n_sequences: n_seq,
            n_samples,
        })
    }
}

/// (weight per element, elements) for the correct and wrong pools; an
/// empty pool gives its mass to "no answer", which is never consistent.
fn weighted<'a, T>(correct: &'a [T], p: f64, wrong: &'a [T]) -> Vec<(f64, &'a [T])> {
    let mut out = Vec::with_capacity(2);
    if !correct.is_empty() {
        out.push((p / correct.len() as f64, correct));
    }
    if !wrong.is_empty() {
        out.push(((1.0 - p) / wrong.len() as f64, wrong));
    }
    out
}

fn pick<'a, T, R: Rng>(rng: &mut R, p: f64, correct: &'a [T], wrong: &'a [T]) -> Option<&'a T> {
    let pool = if rng.gen::<f64>() < p { correct } else { wrong };
    (!pool.is_empty()).then(|| &pool[rng.gen_range(0..pool.len())])
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineMode {
    #[default]
    MonteCarlo,
    ClosedForm,
}

/// Expected consistency (percent) if explanations were correct with
/// probability `p_expl`% and completions with `p_compl`%, correct answers
/// drawn uniformly among the valid ones.
#[allow(clippy::too_many_arguments)]
pub fn expected_random_consistency(
    p_expl: f64,
    p_compl: f64,
    dataset: &Dataset,
    selection: RecordSelection,
    space: &[ConcreteFunction],
    conv: &IndexConvention,
    mode: BaselineMode,
    n_samples: usize,
    rng_seed: u64,
) -> Result<f64, EvalError> {
    let b = RandomBaseline::new(dataset, selection, space, conv);
    match mode {
        BaselineMode::ClosedForm => b.closed_form(p_expl, p_compl),
        BaselineMode::MonteCarlo => Ok(b.estimate(p_expl, p_compl, n_samples, rng_seed)?.monte_carlo),
    }
}

/// Precision and recall of a verbalized answer list: duplicates removed,
/// first five distinct answers kept. No answers scores (0, 0).
pub fn verbalization_scores<T: Ord + Clone>(answers: &[T], valid: &BTreeSet<T>) -> (f64, f64) {
    let mut seen = BTreeSet::new();
    let distinct: Vec<&T> = answers
        .iter()
        .filter(|a| seen.insert((*a).clone()))
        .take(MAX_ALTERNATIVES)
        .collect();
    if distinct.is_empty() {
        return (0.0, 0.0);
    }
    let hits = distinct.iter().filter(|a| valid.contains(**a)).count() as f64;
    let precision = hits / distinct.len() as f64;
    let recall = if valid.is_empty() {
        0.0
    } else {
        hits / valid.len() as f64
    };
    (precision, recall)
}

/// Mean precision and recall over verbalization records; invalid responses
/// score (0, 0).
pub fn verbalization_summary(
    records: &[EvalRecord],
    space: &[ConcreteFunction],
    conv: &IndexConvention,
) -> Option<(f64, f64)> {
    let scores: Vec<(f64, f64)> = records
        .iter()
        .filter(|r| r.task == Task::VerbalizeAlternatives)
        .map(|r| match &r.parsed {
            Parsed::Integers(v) => verbalization_scores(v, &valid_continuations(&r.sequence, space, conv)),
            _ => (0.0, 0.0),
        })
        .collect();
    if scores.is_empty() {
        return None;
    }
    let n = scores.len() as f64;
    Some((
        scores.iter().map(|s| s.0).sum::<f64>() / n,
        scores.iter().map(|s| s.1).sum::<f64>() / n,
    ))
}

/// Per-run (or averaged) metrics. Percentages in [0, 100]; `None` when the
/// run had no records for that metric.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RunMetrics {
    pub explanation_accuracy: Option<f64>,
    pub completion_accuracy: Option<f64>,
    pub valid_fraction: Option<f64>,
    pub cross_context_consistency: Option<f64>,
    pub model_judged_consistency: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub n_runs: usize,
}

impl RunMetrics {
    /// Metrics of one run's records. Accuracy is scored on unambiguous
    /// sequences, consistency on every completion/explanation pair.
    pub fn from_records(
        records: &[EvalRecord],
        dataset: &Dataset,
        space: &[ConcreteFunction],
        conv: &IndexConvention,
    ) -> RunMetrics {
        let acc = score_accuracy(records, dataset);
        let (precision, recall) = verbalization_summary(records, space, conv).unzip();
        RunMetrics {
            explanation_accuracy: acc.explanation_accuracy,
            completion_accuracy: acc.completion_accuracy,
            valid_fraction: acc.valid_fraction,
            cross_context_consistency: cross_context_consistency(records, conv).percent(),
            model_judged_consistency: judged_consistency(records).percent(),
            precision,
            recall,
            n_runs: 1,
        }
    }
}

/// Field-wise mean over the runs that report the field.
pub fn aggregate_runs(per_run: &[RunMetrics]) -> Result<RunMetrics, EvalError> {
    if per_run.is_empty() {
        return Err(EvalError::NoRuns);
    }
    let avg = |f: fn(&RunMetrics) -> Option<f64>| {
        let v: Vec<f64> = per_run.iter().filter_map(f).collect();
        (!v.is_empty()).then(|| mean(&v))
    };
    Ok(RunMetrics {
        explanation_accuracy: avg(|m| m.explanation_accuracy),
        completion_accuracy: avg(|m| m.completion_accuracy),
        valid_fraction: avg(|m| m.valid_fraction),
        cross_context_consistency: avg(|m| m.cross_context_consistency),
        model_judged_consistency: avg(|m| m.model_judged_consistency),
        precision: avg(|m| m.precision),
        recall: avg(|m| m.recall),
        n_runs: per_run.iter().map(|m| m.n_runs.max(1)).sum(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::ScriptedBackend;
    use crate::funcspace::{enumerate_space, probe_range, ConstantRange, TemplateKind};
    use crate::mining::mine;

    fn b(v: i64) -> BigInt {
        BigInt::from(v)
    }

    fn setup() -> (Vec<ConcreteFunction>, IndexConvention) {
        let conv = IndexConvention::default();
        (enumerate_space(ConstantRange::default(), probe_range(&conv, 4)).functions, conv)
    }

    // the stored text must stay parseable for the consistency join
    #[test]
    fn graded_explanation_text_reparses() {
        let (space, conv) = setup();
        let seq = SequenceRecord::decimal([7, 11, 15]);
        let p = crate::backends::tests::bare_prompt(&seq.render(", "));
        let p = RenderedPrompt {
            task: Task::Explanation,
            target: seq,
            ..p
        };
        let r = EvalRecord::grade(0, &p, "Explanation:  lambda x: (4 * x) + 3 \n", &space, &conv, &VerdictVocabulary::default());
        assert_eq!(r.parsed, Parsed::Function("lambda x: (4 * x) + 3".into()));
        assert_eq!(r.correct, Some(true));
        assert!(r.explanation().is_some());
    }

    #[test]
    fn completion_parsing() {
        assert_eq!(parse_completion_response("19", Base::Decimal), Some(b(19)));
        assert_eq!(parse_completion_response(" 19\n", Base::Decimal), Some(b(19)));
        assert_eq!(parse_completion_response("0b10011", Base::Binary), Some(b(19)));
        assert_eq!(parse_completion_response("probably 19 or 15", Base::Decimal), None);
        assert_eq!(parse_completion_response("", Base::Decimal), None);
    }

    #[test]
    fn explanation_parsing() {
        let want = ConcreteFunction::new(TemplateKind::Arithmetic, 4, 3);
        let got = parse_explanation_response("Explanation: lambda x: (4 * x) + 3").unwrap();
        assert_eq!(got.template, Some(want.clone()));
        let got = parse_explanation_response("lambda x: (4 * x) + 3").unwrap();
        assert_eq!(got.template, Some(want.clone()));
        assert!(parse_explanation_response("Explanation: I think x+2").is_none());
        assert!(explanation_matches("Explanation: lambda x:(4*x)+3", &want, Base::Decimal));
        // extensionally equal but not the template text
        assert!(!explanation_matches("lambda x: 3 + (4 * x)", &want, Base::Decimal));
        assert!(explanation_matches("lambda x: bin((4 * x) + 3)", &want, Base::Binary));
    }

    #[test]
    fn consistency_vectors() {
        let conv = IndexConvention::default();
        let seq = [b(7), b(11), b(15)];
        let arith = ConcreteFunction::new(TemplateKind::Arithmetic, 4, 3);
        let bitor = ConcreteFunction::new(TemplateKind::BitOr, 3, 3);
        assert!(check_cross_context_consistency(&seq, &b(19), &arith, &conv));
        assert!(check_cross_context_consistency(&seq, &b(15), &bitor, &conv));
        assert!(!check_cross_context_consistency(&seq, &b(15), &arith, &conv));
        assert_eq!(explanation_continuations(&seq, &bitor, &conv), [b(15)].into());
    }

    #[test]
    fn verdicts() {
        let v = VerdictVocabulary::default();
        assert_eq!(parse_verdict("consistent", &v), Some(true));
        assert_eq!(parse_verdict("Inconsistent.", &v), Some(false));
        assert_eq!(parse_verdict("maybe", &v), None);
        assert_eq!(parse_verdict("", &v), None);
    }

    #[test]
    fn judged_by_scripted_backend() {
        let (space, conv) = setup();
        let ds = mine(&space, 3, &conv);
        let ctx = PromptContext {
            space: &space,
            conv: &conv,
            dataset: &ds,
        };
        let spec = PromptSpec::new(Task::ConsistencyJudgment);
        let seq = SequenceRecord::decimal([7, 11, 15]);
        let query = build_judgment_prompt(&spec, &seq, &b(19), "lambda x: (4 * x) + 3", ctx)
            .unwrap()
            .test_query;
        for (answer, want) in [("consistent", Some(true)), ("inconsistent", Some(false)), ("maybe", None)] {
            let backend = ScriptedBackend::new("s").with(query.clone(), answer);
            let got =
                model_judged_consistency(&backend, &spec, &seq, &b(19), "lambda x: (4 * x) + 3", ctx).unwrap();
            assert_eq!(got, want);
        }
    }

    #[test]
    fn alternatives_parsing() {
        assert_eq!(parse_alternatives("4 \\n 15 \\n ", Base::Decimal), Some(vec![b(4), b(15)]));
        assert_eq!(parse_alternatives("19\n15", Base::Decimal), Some(vec![b(19), b(15)]));
        assert_eq!(parse_alternatives("no idea", Base::Decimal), None);
    }

    #[test]
    fn verbalization_fixtures() {
        let valid: BTreeSet<BigInt> = [b(19), b(15)].into();
        assert_eq!(verbalization_scores(&[b(19), b(15)], &valid), (1.0, 1.0));
        let (p, r) = verbalization_scores(&[b(19), b(15), b(21)], &valid);
        assert!((p - 2.0 / 3.0).abs() < 1e-12 && r == 1.0);
        assert_eq!(verbalization_scores(&[b(19), b(15), b(15)], &valid), (1.0, 1.0));
        assert_eq!(verbalization_scores(&[], &valid), (0.0, 0.0));
    }

    #[test]
    fn aggregation() {
        let m = |v| RunMetrics {
            completion_accuracy: Some(v),
            n_runs: 1,
            ..RunMetrics::default()
        };
        let a = aggregate_runs(&[m(0.0), m(100.0)]).unwrap();
        assert_eq!(a.completion_accuracy, Some(50.0));
        assert_eq!(a.explanation_accuracy, None);
        assert_eq!(a.n_runs, 2);
        let same = aggregate_runs(&[m(40.0), m(40.0), m(40.0)]).unwrap();
        assert_eq!(same.completion_accuracy, Some(40.0));
        assert!(aggregate_runs(&[]).is_err());
    }

    #[test]
    fn random_baseline_edges() {
        let (space, conv) = setup();
        let ds = mine(&space, 3, &conv);
        let un = RandomBaseline::new(&ds, RecordSelection::Unambiguous, &space, &conv);
        assert_eq!(un.closed_form(100.0, 100.0).unwrap(), 100.0);
        let amb = RandomBaseline::new(&ds, RecordSelection::Ambiguous, &space, &conv);
        assert_eq!(amb.closed_form(0.0, 100.0).unwrap(), 0.0);
        let r = amb.estimate(0.0, 37.0, 100, 1).unwrap();
        assert_eq!(r.monte_carlo, 0.0);
        let r = amb.estimate(60.0, 80.0, 2000, 7).unwrap();
        assert!(r.z() < 3.0, "{r:?}");
        assert!(amb.closed_form(101.0, 0.0).is_err());
    }

    #[test]
    fn record_round_trip() {
        let (space, conv) = setup();
        let ds = mine(&space, 3, &conv);
        let ctx = PromptContext {
            space: &space,
            conv: &conv,
            dataset: &ds,
        };
        let p = crate::prompting::build_prompt(
            &PromptSpec::new(Task::Completion),
            &SequenceRecord::decimal([7, 11, 15]),
            ctx,
        )
        .unwrap();
        let r = EvalRecord::grade(0, &p, "19", &space, &conv, &VerdictVocabulary::default());
        assert_eq!(r.correct, Some(true));
        let json = serde_json::to_string(&r).unwrap();
        assert_eq!(serde_json::from_str::<EvalRecord>(&json).unwrap(), r);
    }
}
