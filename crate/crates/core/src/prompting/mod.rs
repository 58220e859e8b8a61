//! Prompt rendering for every task and task-prompt variant.
//!
//! A rendered prompt is a system text, a list of few-shot demonstrations and
//! a test query. [`RenderedPrompt::full_text`] flattens it for completion
//! style endpoints; [`RenderedPrompt::messages`] gives the chat form.

mod templates;

use std::collections::BTreeSet;
use std::fmt;

use num_bigint::BigInt;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::funcspace::{generate_sequence, ConcreteFunction, Evaluate, IndexConvention, TemplateKind};
use crate::mining::{valid_explanations, AmbiguityRecord, Dataset};
use crate::sequence::{Base, SequenceRecord};

pub use templates::ALTERNATIVE_SEPARATOR;

/// At most this many alternatives are requested or scored.
pub const MAX_ALTERNATIVES: usize = 5;
/// Labels for multiple-choice options.
pub const CHOICE_LABELS: [&str; 5] = ["A", "B", "C", "D", "E"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Completion,
    Explanation,
    ConsistencyJudgment,
    VerbalizeAlternatives,
    /// Explanation as a single-letter multiple choice, for reading token
    /// probabilities over candidate functions.
    ExplanationChoice,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Completion => "completion",
            Task::Explanation => "explanation",
            Task::ConsistencyJudgment => "consistency_judgment",
            Task::VerbalizeAlternatives => "verbalize_alternatives",
            Task::ExplanationChoice => "explanation_choice",
        }
    }

    /// Default demonstration counts.
    pub fn default_shots(self) -> usize {
        match self {
            Task::Completion => 8,
            Task::Explanation | Task::ConsistencyJudgment => 6,
            Task::VerbalizeAlternatives | Task::ExplanationChoice => 4,
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    #[default]
    Plain,
    Random,
    SelfConsistent,
    MostLikely,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant::Plain,
        Variant::Random,
        Variant::SelfConsistent,
        Variant::MostLikely,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Plain => "plain",
            Variant::Random => "random",
            Variant::SelfConsistent => "self_consistent",
            Variant::MostLikely => "most_likely",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShotSampling {
    #[default]
    Random,
    SameClass,
    ExcludeClass,
}

/// Words accepted as consistency verdicts. The first word of each list is
/// the one named in the judgment prompt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerdictVocabulary {
    pub affirmative: Vec<String>,
    pub negative: Vec<String>,
}

impl Default for VerdictVocabulary {
    fn default() -> Self {
        VerdictVocabulary {
            affirmative: vec!["consistent".into(), "yes".into()],
            negative: vec!["inconsistent".into(), "no".into()],
        }
    }
}

impl VerdictVocabulary {
    pub fn yes(&self) -> &str {
        self.affirmative.first().map_or("consistent", String::as_str)
    }

    pub fn no(&self) -> &str {
        self.negative.first().map_or("inconsistent", String::as_str)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptSpec {
    pub task: Task,
    pub variant: Variant,
    pub base: Base,
    pub n_shots: usize,
    pub shot_sampling: ShotSampling,
    /// Free-text speaker prefix for the system prompt.
    pub role_text: Option<String>,
    /// Substituted for `{model_name}` in verbalization prompts.
    pub model_name: String,
    pub rng_seed: u64,
    pub verdicts: VerdictVocabulary,
}

impl PromptSpec {
    pub fn new(task: Task) -> Self {
        PromptSpec {
            task,
            variant: Variant::Plain,
            base: Base::Decimal,
            n_shots: task.default_shots(),
            shot_sampling: ShotSampling::Random,
            role_text: None,
            model_name: "{model_name}".into(),
            rng_seed: 0,
            verdicts: VerdictVocabulary::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Demonstration {
    pub query: String,
    pub answer: String,
}

/// A pair submitted for a consistency judgment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgedPair {
    #[serde(with = "crate::sequence::bigint_string")]
    pub continuation: BigInt,
    pub explanation: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Choice {
    pub label: String,
    pub function: ConcreteFunction,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderedPrompt {
    pub task: Task,
    pub variant: Variant,
    pub system: String,
    pub demonstrations: Vec<Demonstration>,
    pub test_query: String,
    pub target: SequenceRecord,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub judged: Option<JudgedPair>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub choices: Vec<Choice>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl RenderedPrompt {
    /// System text, each demonstration as query + answer, then the test
    /// query, separated by blank lines.
    pub fn full_text(&self) -> String {
        let mut out = String::new();
        if !self.system.is_empty() {
            out.push_str(&self.system);
            out.push_str("\n\n");
        }
        for d in &self.demonstrations {
            out.push_str(&d.query);
            out.push('\n');
            out.push_str(&d.answer);
            out.push_str("\n\n");
        }
        out.push_str(&self.test_query);
        out.push('\n');
        out
    }

    pub fn messages(&self) -> Vec<ChatMessage> {
        let mut out = Vec::with_capacity(2 + 2 * self.demonstrations.len());
        if !self.system.is_empty() {
            out.push(ChatMessage {
                role: Role::System,
                content: self.system.clone(),
            });
        }
        for d in &self.demonstrations {
            out.push(ChatMessage {
                role: Role::User,
                content: d.query.clone(),
            });
            out.push(ChatMessage {
                role: Role::Assistant,
                content: d.answer.clone(),
            });
        }
        out.push(ChatMessage {
            role: Role::User,
            content: self.test_query.clone(),
        });
        out
    }

    pub fn base(&self) -> Base {
        self.target.base
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PromptError {
    #[error("empty function space")]
    EmptySpace,
    #[error("only {available} demonstrations available, {requested} requested")]
    InsufficientPool { requested: usize, available: usize },
    #[error("task {0} needs a dedicated builder")]
    WrongBuilder(Task),
}

/// Everything a prompt draws on besides its spec and target.
#[derive(Debug, Clone, Copy)]
pub struct PromptContext<'a> {
    pub space: &'a [ConcreteFunction],
    pub conv: &'a IndexConvention,
    pub dataset: &'a Dataset,
}

/// Instruction text listing the function space.
pub fn build_system_prompt(
    space: &[ConcreteFunction],
    base: Base,
    variant: Variant,
    role_text: Option<&str>,
) -> Result<String, PromptError> {
    if space.is_empty() {
        return Err(PromptError::EmptySpace);
    }
    let mut lines: Vec<String> = Vec::with_capacity(space.len() + 3);
    if let Some(role) = role_text.filter(|r| !r.trim().is_empty()) {
        lines.push(role.to_string());
    }
    lines.push(templates::SYSTEM_HEADER.to_string());
    lines.extend(space.iter().map(|f| f.render(base.radix())));
    if variant == Variant::Plain {
        lines.push(templates::SYSTEM_OFFSET_NOTE.to_string());
    }
    Ok(lines.join("\n"))
}

fn instruction(task: Task, variant: Variant) -> &'static str {
    use templates::*;
    match (task, variant) {
        (Task::Completion, Variant::Plain) => COMPLETION_PLAIN,
        (Task::Completion, Variant::Random) => COMPLETION_RANDOM,
        (Task::Completion, Variant::SelfConsistent) => COMPLETION_SELF_CONSISTENT,
        (Task::Completion, Variant::MostLikely) => COMPLETION_MOST_LIKELY,
        (Task::Explanation, Variant::Plain) => EXPLANATION_PLAIN,
        (Task::Explanation, Variant::Random) => EXPLANATION_RANDOM,
        (Task::Explanation, Variant::SelfConsistent) => EXPLANATION_SELF_CONSISTENT,
        (Task::Explanation, Variant::MostLikely) => EXPLANATION_MOST_LIKELY,
        (Task::ConsistencyJudgment, _) => JUDGMENT,
        (Task::ExplanationChoice, _) => EXPLANATION_CHOICE,
        (Task::VerbalizeAlternatives, _) => VERBALIZE_QUERY,
    }
}

/// Query asking for a completion or explanation of `seq`.
pub fn render_query(task: Task, variant: Variant, seq: &SequenceRecord) -> String {
    format!("{}\nSequence: {}", instruction(task, variant), seq.render(", "))
}

pub fn render_judgment_query(
    seq: &SequenceRecord,
    continuation: &BigInt,
    explanation: &str,
    verdicts: &VerdictVocabulary,
) -> String {
    let head = templates::JUDGMENT
        .replace("{verdict_yes}", verdicts.yes())
        .replace("{verdict_no}", verdicts.no());
    format!(
        "{head}\nSequence: {}\nContinuation: {}\nFunction: {explanation}",
        seq.render(", "),
        seq.base.render(continuation)
    )
}

pub fn render_choice_query(seq: &SequenceRecord, choices: &[Choice]) -> String {
    let mut out = format!("{}\nSequence: {}", templates::EXPLANATION_CHOICE, seq.render(", "));
    for c in choices {
        out.push_str(&format!("\n{}. {}", c.label, c.function.render(seq.base.radix())));
    }
    out
}

/// Verbalization query; demonstrations use the "next possible number"
/// wording, the test query the "only the next number" wording.
pub fn render_verbalize_query(seq: &SequenceRecord, model_name: &str, demo: bool) -> String {
    let template = if demo {
        templates::VERBALIZE_DEMO
    } else {
        templates::VERBALIZE_QUERY
    };
    template
        .replace("{sequence}", &seq.render(","))
        .replace("{model_name}", model_name)
}

/// `4 \n 15 \n ` for alternatives 4 and 15: every value followed by the
/// literal separator.
pub fn format_alternatives(values: &[BigInt], base: Base) -> String {
    values
        .iter()
        .map(|v| format!("{}{}", base.render(v), ALTERNATIVE_SEPARATOR))
        .collect()
}

pub fn format_completion(v: &BigInt, base: Base) -> String {
    base.render(v)
}

pub fn format_explanation(f: &ConcreteFunction, base: Base) -> String {
    format!("Explanation: {}", f.render(base.radix()))
}

/// Seed for one prompt: the spec seed mixed with the task and target so
/// different targets get different demonstrations.
pub fn prompt_seed(seed: u64, task: Task, target: &SequenceRecord) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(task.name().as_bytes());
    for v in &target.values {
        h.update(v.to_signed_bytes_le());
        h.update([0xff]);
    }
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

/// Draw `k` distinct functions for demonstrations.
///
/// `exclude_class` drops every function whose template is one of
/// `target_kinds`; `same_class` keeps only those; `random` keeps all.
/// Functions in `exclude` never appear.
pub fn sample_few_shot<R: Rng>(
    mode: ShotSampling,
    k: usize,
    target_kinds: &[TemplateKind],
    space: &[ConcreteFunction],
    exclude: &BTreeSet<ConcreteFunction>,
    rng: &mut R,
) -> Result<Vec<ConcreteFunction>, PromptError> {
    let pool: Vec<&ConcreteFunction> = space
        .iter()
        .filter(|f| !exclude.contains(*f))
        .filter(|f| match mode {
            ShotSampling::Random => true,
            ShotSampling::SameClass => target_kinds.contains(&f.kind()),
            ShotSampling::ExcludeClass => !target_kinds.contains(&f.kind()),
        })
        .collect();
    if pool.len() < k {
        return Err(PromptError::InsufficientPool {
            requested: k,
            available: pool.len(),
        });
    }
    Ok(pool.choose_multiple(rng, k).map(|f| (*f).clone()).collect())
}

/// Convenience wrapper seeding the sampler from a plain integer.
pub fn sample_few_shot_seeded(
    mode: ShotSampling,
    k: usize,
    target_kinds: &[TemplateKind],
    space: &[ConcreteFunction],
    rng_seed: u64,
) -> Result<Vec<ConcreteFunction>, PromptError> {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    sample_few_shot(mode, k, target_kinds, space, &BTreeSet::new(), &mut rng)
}

/// A demonstration sequence: prefix of the target's length produced by `f`
/// at a random offset, with the value that follows it.
fn demo_sequence<R: Rng>(
    f: &ConcreteFunction,
    length: usize,
    conv: &IndexConvention,
    rng: &mut R,
) -> Option<(Vec<BigInt>, BigInt)> {
    let offset = rng.gen_range(0..=conv.max_offset);
    let mut values = generate_sequence(f, offset, length + 1, conv).ok()?;
    let next = values.pop()?;
    Some((values, next))
}

/// True iff `f` reproduces `prefix` followed by `next` at some offset.
fn generates<F: Evaluate + ?Sized>(
    f: &F,
    prefix: &[BigInt],
    next: &BigInt,
    conv: &IndexConvention,
) -> bool {
    conv.offsets().any(|o| {
        generate_sequence(f, o, prefix.len() + 1, conv)
            .map(|s| s[..prefix.len()] == *prefix && s[prefix.len()] == *next)
            .unwrap_or(false)
    })
}

struct Sampler<'a> {
    spec: &'a PromptSpec,
    ctx: PromptContext<'a>,
    target: SequenceRecord,
    generators: BTreeSet<ConcreteFunction>,
    rng: ChaCha8Rng,
}

impl<'a> Sampler<'a> {
    fn new(spec: &'a PromptSpec, target: &SequenceRecord, ctx: PromptContext<'a>) -> Self {
        let target = target.with_base(spec.base);
        let generators = valid_explanations(&target, ctx.space, ctx.conv);
        let rng = ChaCha8Rng::seed_from_u64(prompt_seed(spec.rng_seed, spec.task, &target));
        Sampler {
            spec,
            ctx,
            target,
            generators,
            rng,
        }
    }

    fn target_kinds(&self) -> Vec<TemplateKind> {
        let kinds: BTreeSet<TemplateKind> = self.generators.iter().map(|f| f.kind()).collect();
        kinds.into_iter().collect()
    }

    /// Demonstration functions with their sequences; the target's own
    /// generators are never used.
    fn demo_functions(&mut self, k: usize) -> Result<Vec<(ConcreteFunction, Vec<BigInt>, BigInt)>, PromptError> {
        let kinds = self.target_kinds();
        let fns = sample_few_shot(
            self.spec.shot_sampling,
            k,
            &kinds,
            self.ctx.space,
            &self.generators,
            &mut self.rng,
        )?;
        let length = self.target.len();
        let mut out = Vec::with_capacity(k);
        for f in fns {
            let (prefix, next) = demo_sequence(&f, length, self.ctx.conv, &mut self.rng)
                .ok_or(PromptError::InsufficientPool {
                    requested: k,
                    available: out.len(),
                })?;
            out.push((f, prefix, next));
        }
        Ok(out)
    }

    fn system(&self, variant: Variant) -> Result<String, PromptError> {
        build_system_prompt(
            self.ctx.space,
            self.spec.base,
            variant,
            self.spec.role_text.as_deref(),
        )
    }

    fn prompt(
        &self,
        variant: Variant,
        demonstrations: Vec<Demonstration>,
        test_query: String,
    ) -> Result<RenderedPrompt, PromptError> {
        Ok(RenderedPrompt {
            task: self.spec.task,
            variant,
            system: self.system(variant)?,
            demonstrations,
            test_query,
            target: self.target.clone(),
            judged: None,
            choices: Vec::new(),
        })
    }
}

/// Render a completion, explanation or verbalization prompt for `target`.
/// Deterministic in `spec.rng_seed`.
pub fn build_prompt(
    spec: &PromptSpec,
    target: &SequenceRecord,
    ctx: PromptContext<'_>,
) -> Result<RenderedPrompt, PromptError> {
    let mut s = Sampler::new(spec, target, ctx);
    let base = spec.base;
    match spec.task {
        Task::Completion | Task::Explanation => {
            let variant = spec.variant;
            let demos = s
                .demo_functions(spec.n_shots)?
                .into_iter()
                .map(|(f, prefix, next)| {
                    let seq = SequenceRecord::new(prefix, base);
                    Demonstration {
                        query: render_query(spec.task, variant, &seq),
                        answer: match spec.task {
                            Task::Completion => format_completion(&next, base),
                            _ => format_explanation(&f, base),
                        },
                    }
                })
                .collect();
            let query = render_query(spec.task, variant, &s.target);
            s.prompt(variant, demos, query)
        }
        Task::VerbalizeAlternatives => {
            let demos = verbalize_demos(&mut s)?;
            let query = render_verbalize_query(&s.target, &spec.model_name, false);
            s.prompt(Variant::Plain, demos, query)
        }
        Task::ConsistencyJudgment | Task::ExplanationChoice => Err(PromptError::WrongBuilder(spec.task)),
    }
}

/// Demonstrations for verbalization come from other ambiguous records of
/// the same length, filtered by the sampling mode, with their valid
/// continuations as the answer.
fn verbalize_demos(s: &mut Sampler<'_>) -> Result<Vec<Demonstration>, PromptError> {
    let kinds = s.target_kinds();
    let length = s.target.len();
    let pool: Vec<&AmbiguityRecord> = s
        .ctx
        .dataset
        .ambiguous
        .iter()
        .filter(|r| r.sequence.len() == length && r.sequence.values != s.target.values)
        .filter(|r| {
            let rk: BTreeSet<TemplateKind> = r.generators.iter().map(|g| g.function.kind()).collect();
            match s.spec.shot_sampling {
                ShotSampling::Random => true,
                ShotSampling::SameClass => rk.iter().any(|k| kinds.contains(k)),
                ShotSampling::ExcludeClass => rk.iter().all(|k| !kinds.contains(k)),
            }
        })
        .collect();
    if pool.len() < s.spec.n_shots {
        return Err(PromptError::InsufficientPool {
            requested: s.spec.n_shots,
            available: pool.len(),
        });
    }
    let base = s.spec.base;
    let model = s.spec.model_name.clone();
    Ok(pool
        .choose_multiple(&mut s.rng, s.spec.n_shots)
        .map(|r| {
            let alts: Vec<BigInt> = r.continuations().into_iter().take(MAX_ALTERNATIVES).collect();
            Demonstration {
                query: render_verbalize_query(&r.sequence.with_base(base), &model, true),
                answer: format_alternatives(&alts, base),
            }
        })
        .collect())
}

/// Prompt asking the model whether `explanation` generates `target`
/// followed by `continuation`. Demonstrations alternate between true pairs
/// and pairs with a perturbed continuation; every label is checked by
/// executing the function.
pub fn build_judgment_prompt(
    spec: &PromptSpec,
    target: &SequenceRecord,
    continuation: &BigInt,
    explanation: &str,
    ctx: PromptContext<'_>,
) -> Result<RenderedPrompt, PromptError> {
    let mut s = Sampler::new(spec, target, ctx);
    let base = spec.base;
    let conv = *ctx.conv;
    let mut demos = Vec::with_capacity(spec.n_shots);
    for (i, (f, prefix, next)) in s.demo_functions(spec.n_shots)?.into_iter().enumerate() {
        let shown = if i % 2 == 0 {
            next
        } else {
            let step = BigInt::from(s.rng.gen_range(1..=9u32));
            &next + step
        };
        let truth = generates(&f, &prefix, &shown, &conv);
        let verdict = if truth {
            spec.verdicts.yes()
        } else {
            spec.verdicts.no()
        };
        demos.push(Demonstration {
            query: render_judgment_query(
                &SequenceRecord::new(prefix, base),
                &shown,
                &f.render(base.radix()),
                &spec.verdicts,
            ),
            answer: verdict.to_string(),
        });
    }
    let query = render_judgment_query(&s.target, continuation, explanation, &spec.verdicts);
    let mut p = s.prompt(Variant::Plain, demos, query)?;
    p.judged = Some(JudgedPair {
        continuation: continuation.clone(),
        explanation: explanation.to_string(),
    });
    Ok(p)
}

/// Multiple-choice explanation prompt: up to three generating functions
/// plus non-generating distractors, shuffled into labels A-E.
pub fn build_choice_prompt(
    spec: &PromptSpec,
    target: &SequenceRecord,
    ctx: PromptContext<'_>,
) -> Result<RenderedPrompt, PromptError> {
    let mut s = Sampler::new(spec, target, ctx);
    let base = spec.base;
    let mut demos = Vec::with_capacity(spec.n_shots);
    for (f, prefix, _) in s.demo_functions(spec.n_shots)? {
        let seq = SequenceRecord::new(prefix, base);
        let mut exclude = valid_explanations(&seq, ctx.space, ctx.conv);
        let choices = choice_set(std::slice::from_ref(&f), &mut exclude, ctx.space, &mut s.rng);
        let label = choices
            .iter()
            .find(|c| c.function == f)
            .map(|c| c.label.clone())
            .unwrap_or_default();
        demos.push(Demonstration {
            query: render_choice_query(&seq, &choices),
            answer: label,
        });
    }
    let correct: Vec<ConcreteFunction> = s.generators.iter().take(3).cloned().collect();
    let mut exclude = s.generators.clone();
    let choices = choice_set(&correct, &mut exclude, ctx.space, &mut s.rng);
    let query = render_choice_query(&s.target, &choices);
    let mut p = s.prompt(Variant::Plain, demos, query)?;
    p.choices = choices;
    Ok(p)
}

fn choice_set<R: Rng>(
    correct: &[ConcreteFunction],
    exclude: &mut BTreeSet<ConcreteFunction>,
    space: &[ConcreteFunction],
    rng: &mut R,
) -> Vec<Choice> {
    exclude.extend(correct.iter().cloned());
    let distractors: Vec<&ConcreteFunction> = space.iter().filter(|f| !exclude.contains(*f)).collect();
    let n_wrong = CHOICE_LABELS.len().saturating_sub(correct.len());
    let mut options: Vec<ConcreteFunction> = correct.to_vec();
    options.extend(distractors.choose_multiple(rng, n_wrong).map(|f| (*f).clone()));
    options.shuffle(rng);
    options
        .into_iter()
        .zip(CHOICE_LABELS)
        .map(|(function, label)| Choice {
            label: label.to_string(),
            function,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::funcspace::{enumerate_space, probe_range, ConstantRange};
    use crate::mining::mine;

    fn setup(length: usize) -> (Vec<ConcreteFunction>, IndexConvention, Dataset) {
        let conv = IndexConvention::default();
        let space = enumerate_space(ConstantRange::default(), probe_range(&conv, 4)).functions;
        let ds = mine(&space, length, &conv);
        (space, conv, ds)
    }

    #[test]
    fn alternatives_use_literal_separator() {
        let v = [BigInt::from(4), BigInt::from(15)];
        assert_eq!(format_alternatives(&v, Base::Decimal), "4 \\n 15 \\n ");
    }

    #[test]
    fn exclude_class_never_samples_target_kind() {
        let (space, _, _) = setup(3);
        for seed in 0..20 {
            let fns = sample_few_shot_seeded(
                ShotSampling::ExcludeClass,
                8,
                &[TemplateKind::Arithmetic],
                &space,
                seed,
            )
            .unwrap();
            assert_eq!(fns.len(), 8);
            assert!(fns.iter().all(|f| f.kind() != TemplateKind::Arithmetic));
        }
    }

    #[test]
    fn same_class_samples_only_target_kind() {
        let (space, _, _) = setup(3);
        let fns =
            sample_few_shot_seeded(ShotSampling::SameClass, 8, &[TemplateKind::BitOr], &space, 3)
                .unwrap();
        assert_eq!(fns.len(), 8);
        assert!(fns.iter().all(|f| f.kind() == TemplateKind::BitOr));
        let distinct: BTreeSet<_> = fns.iter().collect();
        assert_eq!(distinct.len(), 8);
    }

    #[test]
    fn pool_exhaustion_is_an_error() {
        let (space, _, _) = setup(3);
        let err = sample_few_shot_seeded(ShotSampling::SameClass, 26, &[TemplateKind::BitOr], &space, 0)
            .unwrap_err();
        assert_eq!(
            err,
            PromptError::InsufficientPool {
                requested: 26,
                available: 25
            }
        );
    }

    #[test]
    fn prompts_are_deterministic_in_seed() {
        let (space, conv, ds) = setup(3);
        let ctx = PromptContext {
            space: &space,
            conv: &conv,
            dataset: &ds,
        };
        let target = SequenceRecord::decimal([7, 11, 15]);
        let mut spec = PromptSpec::new(Task::Completion);
        spec.rng_seed = 11;
        let a = build_prompt(&spec, &target, ctx).unwrap();
        let b = build_prompt(&spec, &target, ctx).unwrap();
        assert_eq!(a, b);
        spec.rng_seed = 12;
        let c = build_prompt(&spec, &target, ctx).unwrap();
        assert_ne!(a.demonstrations, c.demonstrations);
    }

    #[test]
    fn judgment_demonstration_labels_are_true() {
        let (space, conv, ds) = setup(3);
        let ctx = PromptContext {
            space: &space,
            conv: &conv,
            dataset: &ds,
        };
        let spec = PromptSpec::new(Task::ConsistencyJudgment);
        let target = SequenceRecord::decimal([7, 11, 15]);
        let p = build_judgment_prompt(&spec, &target, &BigInt::from(19), "lambda x: (4 * x) + 3", ctx)
            .unwrap();
        assert_eq!(p.demonstrations.len(), 6);
        assert!(p.demonstrations.iter().any(|d| d.answer == "consistent"));
        assert!(p.test_query.ends_with("Function: lambda x: (4 * x) + 3"));
    }

    #[test]
    fn choice_prompt_contains_generators() {
        let (space, conv, ds) = setup(3);
        let ctx = PromptContext {
            space: &space,
            conv: &conv,
            dataset: &ds,
        };
        let spec = PromptSpec::new(Task::ExplanationChoice);
        let target = SequenceRecord::decimal([7, 11, 15]);
        let p = build_choice_prompt(&spec, &target, ctx).unwrap();
        assert_eq!(p.choices.len(), 5);
        let fns: BTreeSet<_> = p.choices.iter().map(|c| c.function.clone()).collect();
        assert!(fns.contains(&ConcreteFunction::new(TemplateKind::Arithmetic, 4, 3)));
        assert!(fns.contains(&ConcreteFunction::new(TemplateKind::BitOr, 3, 3)));
        for d in &p.demonstrations {
            assert!(CHOICE_LABELS.contains(&d.answer.as_str()));
        }
    }
}
