//! `mine` and `run`.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;

use anyhow::{anyhow, Context, Result};
use num_bigint::BigInt;
use serde::Serialize;

use seqcon::backends::{
    complete_all, AuditedBackend, Backend, CachedBackend, CompletionRequest, HttpBackend, OracleBackend,
    OracleMode, RandomValidBackend, ScriptedBackend,
};
use seqcon::evaluation::{EvalRecord, RecordSelection};
use seqcon::funcspace::{enumerate_space, probe_range, ConcreteFunction, FunctionSpace, IndexConvention};
use seqcon::mining::{mine_with_constants, Dataset, DatasetCounts};
use seqcon::prompting::{
    build_choice_prompt, build_judgment_prompt, build_prompt, PromptContext, PromptSpec, RenderedPrompt, Task,
    Variant,
};
use seqcon::{Base, SequenceRecord};

use crate::config::{BackendKind, CampaignConfig};
use crate::results::{line_key, ResultLine, ResultsWriter};

/// Reference figures the mined counts are compared against.
pub const REFERENCE_SPACE: usize = 197;
pub const REFERENCE_L4: (usize, usize) = (57, 140);
pub const REFERENCE_AMBIGUOUS_BY_LENGTH: [(usize, usize); 3] = [(2, 196), (3, 76), (4, 140)];

pub fn function_space(cfg: &CampaignConfig) -> FunctionSpace {
    let conv = cfg.dataset.convention();
    enumerate_space(cfg.dataset.constants, probe_range(&conv, cfg.max_length()))
}

pub fn datasets(cfg: &CampaignConfig, space: &[ConcreteFunction]) -> Vec<Dataset> {
    let conv = cfg.dataset.convention();
    cfg.dataset
        .lengths
        .iter()
        .map(|&l| mine_with_constants(space, l, &conv, Some(cfg.dataset.constants)))
        .collect()
}

#[derive(Debug, Serialize)]
pub struct MineSummary {
    pub config_digest: String,
    pub functions: usize,
    pub candidates: usize,
    pub excluded: Vec<String>,
    pub lengths: BTreeMap<usize, DatasetCounts>,
}

pub fn cmd_mine(cfg: &CampaignConfig) -> Result<MineSummary> {
    let space = function_space(cfg);
    std::fs::create_dir_all(&cfg.run.output_dir)
        .with_context(|| format!("creating {}", cfg.run.output_dir.display()))?;
    let mut lengths = BTreeMap::new();
    for ds in datasets(cfg, &space.functions) {
        let path = cfg.run.output_dir.join(format!("dataset_L{}.jsonl", ds.params.length));
        let f = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        ds.write_jsonl(BufWriter::new(f))?;
        lengths.insert(ds.params.length, ds.counts());
    }
    let summary = MineSummary {
        config_digest: cfg.digest(),
        functions: space.len(),
        candidates: space.candidate_count(),
        excluded: space.excluded.iter().map(|e| e.to_string()).collect(),
        lengths,
    };
    let path = cfg.run.output_dir.join("mine_summary.json");
    std::fs::write(&path, serde_json::to_string_pretty(&summary)? + "\n")?;
    Ok(summary)
}

pub fn print_mine_summary(s: &MineSummary) {
    println!("{} functions ({} candidates)", s.functions, s.candidates);
    for e in &s.excluded {
        println!("  excluded: {e}");
    }
    if s.functions != REFERENCE_SPACE {
        println!("  divergence: reference count is {REFERENCE_SPACE} ({:+})", s.functions as i64 - REFERENCE_SPACE as i64);
    }
    for (len, c) in &s.lengths {
        println!(
            "length {len}: {} ambiguous, {} unambiguous sequences; {} functions generate an ambiguous prefix, {} do not",
            c.ambiguous_sequences, c.unambiguous_sequences, c.ambiguous_functions, c.unambiguous_functions
        );
        if let Some((_, r)) = REFERENCE_AMBIGUOUS_BY_LENGTH.iter().find(|(l, _)| l == len) {
            println!("  reference ambiguous count at length {len}: {r} (sequences {:+})", c.ambiguous_sequences as i64 - *r as i64);
        }
        if *len == 4 {
            let (ra, ru) = REFERENCE_L4;
            println!(
                "  reference split {ra}/{ru}: sequences {:+}/{:+}, functions {:+}/{:+}",
                c.ambiguous_sequences as i64 - ra as i64,
                c.unambiguous_sequences as i64 - ru as i64,
                c.ambiguous_functions as i64 - ra as i64,
                c.unambiguous_functions as i64 - ru as i64
            );
        }
    }
}

pub fn make_backend(cfg: &CampaignConfig, space: &[ConcreteFunction]) -> Result<Box<dyn Backend>> {
    let conv = cfg.dataset.convention();
    let b = &cfg.backend;
    let mut backend: Box<dyn Backend> = match b.kind {
        BackendKind::Oracle => Box::new(OracleBackend::new(space.to_vec(), conv)),
        BackendKind::Adversarial => Box::new(OracleBackend::new(space.to_vec(), conv).mode(OracleMode::Adversarial)),
        BackendKind::RandomValid => Box::new(RandomValidBackend::new(space.to_vec(), conv, b.seed)),
        BackendKind::Scripted => {
            let path = b.fixtures.as_ref().ok_or_else(|| anyhow!("scripted backend needs fixtures"))?;
            Box::new(ScriptedBackend::load("scripted", path).with_context(|| format!("loading {}", path.display()))?)
        }
        BackendKind::Http => Box::new(HttpBackend::new(b.http.clone())?),
    };
    if let Some(dir) = &b.cache_dir {
        backend = Box::new(CachedBackend::new(backend, cfg.under_output(dir))?);
    }
    if let Some(log) = &b.audit_log {
        backend = Box::new(AuditedBackend::new(backend, &cfg.under_output(log))?);
    }
    Ok(backend)
}

struct Job {
    key: String,
    run_id: u32,
    length: usize,
    prompt: RenderedPrompt,
    logprobs: usize,
}

#[derive(Debug, Default, Serialize)]
pub struct RunSummary {
    pub written: usize,
    pub skipped: usize,
    pub failed: usize,
    pub results: PathBuf,
}

struct Runner<'a> {
    cfg: &'a CampaignConfig,
    space: &'a [ConcreteFunction],
    conv: IndexConvention,
    backend: &'a dyn Backend,
    writer: ResultsWriter,
    /// Every record of the campaign so far, by key.
    done: BTreeMap<String, EvalRecord>,
    summary: RunSummary,
    first_error: Option<anyhow::Error>,
}

impl Runner<'_> {
    /// Sends the jobs not yet in the file; stops the campaign after the
    /// batch if any request failed.
    fn execute(&mut self, jobs: Vec<Job>) -> Result<()> {
        let (todo, skipped): (Vec<Job>, Vec<Job>) = jobs.into_iter().partition(|j| !self.done.contains_key(&j.key));
        self.summary.skipped += skipped.len();
        if todo.is_empty() {
            return Ok(());
        }
        let requests: Vec<CompletionRequest> = todo
            .iter()
            .map(|j| {
                let mut r = CompletionRequest::new(j.prompt.clone());
                r.temperature = self.cfg.prompt.temperature;
                r.max_tokens = self.cfg.prompt.max_tokens;
                r.with_logprobs(j.logprobs)
            })
            .collect();
        let responses = complete_all(self.backend, &requests, self.cfg.backend.max_in_flight);
        let vocab = PromptSpec::new(Task::Completion).verdicts;
        for (job, resp) in todo.into_iter().zip(responses) {
            match resp {
                Ok(resp) => {
                    let mut record = EvalRecord::grade(job.run_id, &job.prompt, &resp.text, self.space, &self.conv, &vocab);
                    record.logprobs = resp.first_position_top_logprobs;
                    let line = ResultLine {
                        key: job.key.clone(),
                        length: job.length,
                        backend_id: resp.backend_id,
                        cached: resp.cached,
                        timestamp: self.cfg.run.timestamps.then(|| chrono::Utc::now().to_rfc3339()),
                        record,
                    };
                    self.writer.append(&line)?;
                    self.done.insert(job.key, line.record);
                    self.summary.written += 1;
                }
                Err(e) => {
                    log::error!("{} ({}): {e}", job.prompt.task.name(), job.prompt.target.render(", "));
                    self.summary.failed += 1;
                    if self.first_error.is_none() {
                        self.first_error = Some(anyhow!(e));
                    }
                }
            }
        }
        match self.first_error.take() {
            Some(e) => Err(e.context(format!(
                "backend failed; {} results kept in {}",
                self.summary.written + self.summary.skipped,
                self.summary.results.display()
            ))),
            None => Ok(()),
        }
    }
}

fn selection(ds: &Dataset, sel: RecordSelection, cap: Option<usize>) -> Vec<&SequenceRecord> {
    let it: Box<dyn Iterator<Item = _>> = match sel {
        RecordSelection::Ambiguous => Box::new(ds.ambiguous.iter()),
        RecordSelection::Unambiguous => Box::new(ds.unambiguous.iter()),
        RecordSelection::All => Box::new(ds.records()),
    };
    it.map(|r| &r.sequence).take(cap.unwrap_or(usize::MAX)).collect()
}

fn spec_for(cfg: &CampaignConfig, task: Task, variant: Variant, base: Base, seed: u64) -> PromptSpec {
    let mut s = PromptSpec::new(task);
    s.variant = variant;
    s.base = base;
    if let Some(n) = cfg.prompt.n_shots {
        s.n_shots = n;
    }
    s.shot_sampling = cfg.prompt.shot_sampling;
    s.role_text = cfg.prompt.role_text.clone();
    s.model_name = cfg.prompt.model_name.clone();
    s.rng_seed = seed;
    s
}

pub fn cmd_run(cfg: &CampaignConfig) -> Result<RunSummary> {
    let space = function_space(cfg);
    let conv = cfg.dataset.convention();
    let sets = datasets(cfg, &space.functions);
    std::fs::create_dir_all(&cfg.run.output_dir)?;
    let backend = make_backend(cfg, &space.functions)?;
    let path = cfg.results_path();
    let (writer, existing) = ResultsWriter::open(&path, cfg)?;
    if !existing.is_empty() {
        log::info!("resuming: {} results already in {}", existing.len(), path.display());
    }
    let mut runner = Runner {
        cfg,
        space: &space.functions,
        conv,
        backend: backend.as_ref(),
        writer,
        done: existing.into_iter().map(|l| (l.key, l.record)).collect(),
        summary: RunSummary {
            results: path.clone(),
            ..RunSummary::default()
        },
        first_error: None,
    };
    let tasks = &cfg.prompt.tasks;
    let has = |t: Task| tasks.contains(&t);
    let k = cfg.prompt.top_logprobs;
    for ds in &sets {
        let len = ds.params.length;
        let ctx = PromptContext {
            space: &space.functions,
            conv: &conv,
            dataset: ds,
        };
        let pair_targets = selection(ds, cfg.dataset.sequences, cfg.dataset.max_sequences);
        let amb_targets = selection(ds, RecordSelection::Ambiguous, cfg.dataset.max_sequences);
        for run in 0..cfg.run.n_runs {
            let seed = cfg.run.rng_seed.wrapping_add(run as u64);
            for &base in &cfg.prompt.bases {
                for &variant in &cfg.prompt.variants {
                    log::info!("length {len}, run {run}, base {base}, {}", variant.name());
                    let job = |task: Task, target: &SequenceRecord, prompt: RenderedPrompt, logprobs: usize| Job {
                        key: line_key(run, len, base, variant, task, &target.values),
                        run_id: run,
                        length: len,
                        prompt,
                        logprobs,
                    };
                    let mut jobs = Vec::new();
                    for task in [Task::Completion, Task::Explanation].into_iter().filter(|t| has(*t)) {
                        let spec = spec_for(cfg, task, variant, base, seed);
                        let lp = if task == Task::Completion { k } else { 0 };
                        for t in &pair_targets {
                            let target = t.with_base(base);
                            jobs.push(job(task, &target, build_prompt(&spec, &target, ctx)?, lp));
                        }
                    }
                    for (task, targets) in [
                        (Task::VerbalizeAlternatives, &amb_targets),
                        (Task::ExplanationChoice, &amb_targets),
                    ] {
                        if !has(task) {
                            continue;
                        }
                        let spec = spec_for(cfg, task, variant, base, seed);
                        for t in targets.iter() {
                            let target = t.with_base(base);
                            let prompt = if task == Task::ExplanationChoice {
                                build_choice_prompt(&spec, &target, ctx)?
                            } else {
                                build_prompt(&spec, &target, ctx)?
                            };
                            let lp = if task == Task::ExplanationChoice { k } else { 0 };
                            jobs.push(job(task, &target, prompt, lp));
                        }
                    }
                    runner.execute(jobs)?;

                    // judgments need this run's own completion and explanation
                    if has(Task::ConsistencyJudgment) {
                        let spec = spec_for(cfg, Task::ConsistencyJudgment, variant, base, seed);
                        let mut jobs = Vec::new();
                        for t in &pair_targets {
                            let target = t.with_base(base);
                            let get = |task| runner.done.get(&line_key(run, len, base, variant, task, &target.values));
                            let (Some(c), Some(e)) = (get(Task::Completion), get(Task::Explanation)) else {
                                continue;
                            };
                            let (Some(value), Some(_)) = (c.completion(), e.explanation()) else {
                                continue;
                            };
                            let seqcon::evaluation::Parsed::Function(text) = &e.parsed else {
                                continue;
                            };
                            let value: BigInt = value.clone();
                            let prompt = build_judgment_prompt(&spec, &target, &value, text, ctx)?;
                            jobs.push(job(Task::ConsistencyJudgment, &target, prompt, 0));
                        }
                        runner.execute(jobs)?;
                    }
                }
            }
        }
    }
    Ok(runner.summary)
}
