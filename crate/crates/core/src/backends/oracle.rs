use std::collections::BTreeSet;

use num_bigint::BigInt;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Backend, BackendError, CompletionRequest, CompletionResponse};
use crate::distribution::TokenDistribution;
use crate::evaluation::check_cross_context_consistency;
use crate::funcspace::{parse, ConcreteFunction, IndexConvention};
use crate::mining::{matching_generators, valid_continuations, valid_explanations, Generator};
use crate::prompting::{
    format_alternatives, format_completion, format_explanation, prompt_seed, RenderedPrompt, Task,
    VerdictVocabulary, MAX_ALTERNATIVES,
};
use crate::sequence::SequenceRecord;

/// Answer text when nothing in the space fits.
pub const NO_ANSWER: &str = "no valid answer";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieBreak {
    /// Smallest continuation; ties by enumeration order.
    #[default]
    MinValue,
    /// First generator in enumeration order.
    EnumerationOrder,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleMode {
    /// Completion and explanation both come from the chosen generator.
    #[default]
    Consistent,
    /// The explanation comes from a function that does not produce the
    /// chosen completion, whenever the space has one.
    Adversarial,
}

fn choose(gens: &[Generator], tie: TieBreak) -> Option<&Generator> {
    match tie {
        TieBreak::EnumerationOrder => gens.first(),
        // min_by_key keeps the first of equal keys
        TieBreak::MinValue => gens.iter().min_by_key(|g| &g.continuation),
    }
}

fn adversary<'a>(gens: &'a [Generator], chosen: &Generator) -> Option<&'a ConcreteFunction> {
    gens.iter().map(|g| &g.function).find(|f| {
        !gens
            .iter()
            .any(|g| &g.function == *f && g.continuation == chosen.continuation)
    })
}

fn explanation_for(gens: &[Generator], tie: TieBreak, mode: OracleMode) -> Option<&ConcreteFunction> {
    let chosen = choose(gens, tie)?;
    match mode {
        OracleMode::Consistent => Some(&chosen.function),
        OracleMode::Adversarial => Some(adversary(gens, chosen).unwrap_or(&chosen.function)),
    }
}

/// Ground-truth answer for a completion, explanation or verbalization
/// query about `seq`, in the sequence's base.
pub fn oracle_answer(
    seq: &SequenceRecord,
    task: Task,
    space: &[ConcreteFunction],
    conv: &IndexConvention,
    tie_break: TieBreak,
) -> String {
    oracle_answer_with_mode(seq, task, space, conv, tie_break, OracleMode::Consistent)
}

fn oracle_answer_with_mode(
    seq: &SequenceRecord,
    task: Task,
    space: &[ConcreteFunction],
    conv: &IndexConvention,
    tie: TieBreak,
    mode: OracleMode,
) -> String {
    let gens = matching_generators(seq, space, conv);
    let base = seq.base;
    let answer = match task {
        Task::Completion => choose(&gens, tie).map(|g| format_completion(&g.continuation, base)),
        Task::Explanation => explanation_for(&gens, tie, mode).map(|f| format_explanation(f, base)),
        Task::VerbalizeAlternatives => {
            let conts: Vec<BigInt> = gens
                .iter()
                .map(|g| g.continuation.clone())
                .collect::<BTreeSet<_>>()
                .into_iter()
                .take(MAX_ALTERNATIVES)
                .collect();
            (!conts.is_empty()).then(|| format_alternatives(&conts, base))
        }
        Task::ConsistencyJudgment | Task::ExplanationChoice => None,
    };
    answer.unwrap_or_else(|| NO_ANSWER.to_string())
}

/// A uniformly drawn valid completion or explanation.
pub fn random_valid_answer(
    seq: &SequenceRecord,
    task: Task,
    space: &[ConcreteFunction],
    conv: &IndexConvention,
    rng_seed: u64,
) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let base = seq.base;
    let answer = match task {
        Task::Completion => {
            let c: Vec<BigInt> = valid_continuations(seq, space, conv).into_iter().collect();
            (!c.is_empty()).then(|| format_completion(&c[rng.gen_range(0..c.len())], base))
        }
        Task::Explanation => {
            let e: Vec<ConcreteFunction> = valid_explanations(seq, space, conv).into_iter().collect();
            (!e.is_empty()).then(|| format_explanation(&e[rng.gen_range(0..e.len())], base))
        }
        _ => None,
    };
    answer.unwrap_or_else(|| NO_ANSWER.to_string())
}

/// Perfect solver. Judgments are decided by executing the judged function;
/// multiple-choice answers pick a generating option.
#[derive(Debug, Clone)]
pub struct OracleBackend {
    id: String,
    space: Vec<ConcreteFunction>,
    conv: IndexConvention,
    tie_break: TieBreak,
    mode: OracleMode,
    verdicts: VerdictVocabulary,
}

impl OracleBackend {
    pub fn new(space: Vec<ConcreteFunction>, conv: IndexConvention) -> Self {
        OracleBackend {
            id: "oracle".into(),
            space,
            conv,
            tie_break: TieBreak::default(),
            mode: OracleMode::default(),
            verdicts: VerdictVocabulary::default(),
        }
    }

    pub fn tie_break(mut self, t: TieBreak) -> Self {
        self.tie_break = t;
        self
    }

    pub fn mode(mut self, m: OracleMode) -> Self {
        self.mode = m;
        self.id = match m {
            OracleMode::Consistent => "oracle".into(),
            OracleMode::Adversarial => "oracle-adversarial".into(),
        };
        self
    }

    pub fn verdicts(mut self, v: VerdictVocabulary) -> Self {
        self.verdicts = v;
        self
    }

    fn answer(&self, p: &RenderedPrompt) -> String {
        match p.task {
            Task::ConsistencyJudgment => {
                let Some(j) = &p.judged else {
                    return NO_ANSWER.into();
                };
                let ok = parse(&j.explanation).is_ok_and(|f| {
                    check_cross_context_consistency(&p.target.values, &j.continuation, &f.function, &self.conv)
                });
                if ok { self.verdicts.yes() } else { self.verdicts.no() }.to_string()
            }
            Task::ExplanationChoice => {
                let valid = valid_explanations(&p.target, &self.space, &self.conv);
                p.choices
                    .iter()
                    .find(|c| valid.contains(&c.function))
                    .map_or_else(|| NO_ANSWER.to_string(), |c| c.label.clone())
            }
            task => oracle_answer_with_mode(&p.target, task, &self.space, &self.conv, self.tie_break, self.mode),
        }
    }

    /// Correct answers first, most preferred on top, then one wrong answer.
    fn synth_logprobs(&self, p: &RenderedPrompt, text: &str, k: usize) -> Result<TokenDistribution, BackendError> {
        let mut tokens: Vec<String> = vec![text.to_string()];
        match p.task {
            Task::Completion => {
                let c = valid_continuations(&p.target, &self.space, &self.conv);
                tokens.extend(c.iter().map(|v| p.target.base.render(v)));
                let wrong = c.iter().max().map_or_else(|| BigInt::from(0), |m| m + 1);
                dedup_push(&mut tokens, MAX_TOKENS_CORRECT);
                tokens.push(p.target.base.render(&wrong));
            }
            Task::ExplanationChoice => {
                let valid = valid_explanations(&p.target, &self.space, &self.conv);
                let (good, bad): (Vec<_>, Vec<_>) = p.choices.iter().partition(|c| valid.contains(&c.function));
                tokens.extend(good.iter().map(|c| c.label.clone()));
                dedup_push(&mut tokens, MAX_TOKENS_CORRECT);
                tokens.extend(bad.iter().take(1).map(|c| c.label.clone()));
            }
            _ => {
                tokens = vec![text.split_whitespace().next().unwrap_or(text).to_string()];
            }
        }
        tokens.truncate(k);
        let n = tokens.len();
        Ok(TokenDistribution::new(
            tokens
                .into_iter()
                .enumerate()
                .map(|(i, t)| (t, if i + 1 == n && n > 1 { -6.0 } else { -0.1 * (i as f64 + 1.0) })),
        )?)
    }
}

const MAX_TOKENS_CORRECT: usize = 4;

fn dedup_push(tokens: &mut Vec<String>, cap: usize) {
    let mut seen = BTreeSet::new();
    tokens.retain(|t| seen.insert(t.clone()));
    tokens.truncate(cap);
}

impl Backend for OracleBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn complete(&self, req: &CompletionRequest) -> Result<CompletionResponse, BackendError> {
        req.validate()?;
        let text = self.answer(&req.prompt);
        let logprobs = (req.want_top_logprobs > 0)
            .then(|| self.synth_logprobs(&req.prompt, &text, req.want_top_logprobs))
            .transpose()?;
        Ok(CompletionResponse {
            text,
            first_position_top_logprobs: logprobs,
            backend_id: self.id.clone(),
            cached: false,
        })
    }
}

/// Answers completions and explanations uniformly at random among the valid
/// ones, independently per task; other tasks as the oracle.
#[derive(Debug, Clone)]
pub struct RandomValidBackend {
    id: String,
    seed: u64,
    oracle: OracleBackend,
}

impl RandomValidBackend {
    pub fn new(space: Vec<ConcreteFunction>, conv: IndexConvention, seed: u64) -> Self {
        RandomValidBackend {
            id: format!("random-valid-{seed}"),
            seed,
            oracle: OracleBackend::new(space, conv),
        }
    }
}

impl Backend for RandomValidBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn complete(&self, req: &CompletionRequest) -> Result<CompletionResponse, BackendError> {
        req.validate()?;
        let p = &req.prompt;
        if !matches!(p.task, Task::Completion | Task::Explanation) || req.want_top_logprobs > 0 {
            let mut r = self.oracle.complete(req)?;
            r.backend_id = self.id.clone();
            return Ok(r);
        }
        let seed = prompt_seed(self.seed, p.task, &p.target);
        Ok(CompletionResponse {
            text: random_valid_answer(&p.target, p.task, &self.oracle.space, &self.oracle.conv, seed),
            first_position_top_logprobs: None,
            backend_id: self.id.clone(),
            cached: false,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::funcspace::{enumerate_space, probe_range, ConstantRange, TemplateKind};
    use crate::sequence::Base;

    fn space() -> Vec<ConcreteFunction> {
        let conv = IndexConvention::default();
        enumerate_space(ConstantRange::default(), probe_range(&conv, 4)).functions
    }

    #[test]
    fn tie_breaks() {
        let s = space();
        let conv = IndexConvention::default();
        let seq = SequenceRecord::decimal([7, 11, 15]);
        assert_eq!(oracle_answer(&seq, Task::Completion, &s, &conv, TieBreak::MinValue), "15");
        assert_eq!(
            oracle_answer(&seq, Task::Completion, &s, &conv, TieBreak::EnumerationOrder),
            "19"
        );
        assert_eq!(
            oracle_answer(&seq, Task::Explanation, &s, &conv, TieBreak::EnumerationOrder),
            "Explanation: lambda x: (4 * x) + 3"
        );
        assert_eq!(
            oracle_answer(&seq.with_base(Base::Binary), Task::Completion, &s, &conv, TieBreak::MinValue),
            "0b1111"
        );
        let none = SequenceRecord::decimal([5, 3, 1000]);
        assert_eq!(oracle_answer(&none, Task::Completion, &s, &conv, TieBreak::MinValue), NO_ANSWER);
    }

    #[test]
    fn adversary_picks_other_continuation() {
        let s = space();
        let conv = IndexConvention::default();
        let seq = SequenceRecord::decimal([7, 11, 15]);
        let a = oracle_answer_with_mode(
            &seq,
            Task::Explanation,
            &s,
            &conv,
            TieBreak::MinValue,
            OracleMode::Adversarial,
        );
        assert_eq!(a, format_explanation(&ConcreteFunction::new(TemplateKind::Arithmetic, 4, 3), Base::Decimal));
    }

    #[test]
    fn random_valid_is_seeded_and_valid() {
        let s = space();
        let conv = IndexConvention::default();
        let seq = SequenceRecord::decimal([7, 11, 15]);
        let a = random_valid_answer(&seq, Task::Completion, &s, &conv, 5);
        assert_eq!(a, random_valid_answer(&seq, Task::Completion, &s, &conv, 5));
        let hits: BTreeSet<String> = (0..64)
            .map(|i| random_valid_answer(&seq, Task::Completion, &s, &conv, i))
            .collect();
        assert_eq!(hits, ["15".to_string(), "19".to_string()].into());
    }
}
