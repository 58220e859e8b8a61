//! Metrics from a results file. Never queries a backend.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use anyhow::{Context, Result};
use num_bigint::BigInt;
use serde::Serialize;

use seqcon::distribution::{
    alternative_choice_test, alternative_consideration_test, build_shared_histograms, gaussian_smooth,
    quadrant_kl_report, quadrant_labels, Quadrant, QuadrantKl, DEFAULT_BINS, DEFAULT_SIGMA,
};
use seqcon::evaluation::{aggregate_runs, cross_context_consistency, EvalRecord, RandomBaseline, RecordSelection, RunMetrics};
use seqcon::mining::Dataset;
use seqcon::prompting::{Task, Variant, CHOICE_LABELS};
use seqcon::Base;

use crate::campaign::{datasets, function_space};
use crate::config::CampaignConfig;
use crate::results::Results;

/// One (length, base, variant) cell.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct Cell {
    pub length: usize,
    pub base: u32,
    pub variant: Variant,
}

#[derive(Debug, Clone, Serialize)]
pub struct MetricsRow {
    pub cell: Cell,
    /// Run id, or `None` for the mean over runs.
    pub run: Option<u32>,
    pub metrics: RunMetrics,
    pub pairs: usize,
    /// Consistency over ambiguous sequences only, the population the
    /// random baseline describes.
    pub ambiguous_consistency: Option<f64>,
    pub random_closed_form: Option<f64>,
    pub random_monte_carlo: Option<f64>,
    pub random_sigma: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct AlternativeRow {
    pub cell: Option<Cell>,
    pub task: Option<Task>,
    pub tested: usize,
    pub passed: usize,
    pub multi_token_suspect: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct HistogramRow {
    pub quadrant: Quadrant,
    pub bin_lo: f64,
    pub bin_hi: f64,
    pub density: f64,
    pub smoothed: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Analysis {
    pub config_digest: String,
    pub records: usize,
    pub metrics: Vec<MetricsRow>,
    pub alternatives: Vec<AlternativeRow>,
    pub quadrant_counts: BTreeMap<Quadrant, usize>,
    pub kl: Vec<QuadrantKl>,
    pub histograms: Vec<HistogramRow>,
}

fn cell_of(length: usize, r: &EvalRecord) -> Cell {
    Cell {
        length,
        base: r.sequence.base.radix(),
        variant: r.variant,
    }
}

/// Valid continuations of a decimal-valued prefix, from the mined dataset.
fn truth(ds: &Dataset, values: &[BigInt]) -> Option<BTreeSet<BigInt>> {
    ds.find(values).map(|r| r.continuations())
}

pub fn analyze(results: &Results) -> Result<Analysis> {
    let cfg: &CampaignConfig = &results.header.config;
    let space = function_space(cfg);
    let conv = cfg.dataset.convention();
    let sets: BTreeMap<usize, Dataset> = datasets(cfg, &space.functions)
        .into_iter()
        .map(|d| (d.params.length, d))
        .collect();

    let mut cells: BTreeMap<Cell, BTreeMap<u32, Vec<EvalRecord>>> = BTreeMap::new();
    for (line, r) in results.records() {
        cells
            .entry(cell_of(line.length, r))
            .or_default()
            .entry(r.run_id)
            .or_default()
            .push(r.clone());
    }

    let mut metrics = Vec::new();
    for (cell, runs) in &cells {
        let ds = sets
            .get(&cell.length)
            .with_context(|| format!("results mention length {} absent from the config", cell.length))?;
        let baseline = RandomBaseline::new(ds, RecordSelection::Ambiguous, &space.functions, &conv);
        let mut per_run = Vec::new();
        let mut per_run_ambiguous = Vec::new();
        let mut total_pairs = 0;
        for (run, records) in runs {
            let m = RunMetrics::from_records(records, ds, &space.functions, &conv);
            let c = cross_context_consistency(records, &conv);
            let pairs = c.consistent + c.inconsistent + c.invalid;
            total_pairs += pairs;
            let ambiguous: Vec<EvalRecord> = records
                .iter()
                .filter(|r| ds.find(&r.sequence.values).is_some_and(|x| x.is_ambiguous()))
                .cloned()
                .collect();
            let amb = cross_context_consistency(&ambiguous, &conv).percent();
            per_run_ambiguous.extend(amb);
            metrics.push(MetricsRow {
                cell: cell.clone(),
                run: Some(*run),
                metrics: m.clone(),
                pairs,
                ambiguous_consistency: amb,
                random_closed_form: None,
                random_monte_carlo: None,
                random_sigma: None,
            });
            per_run.push(m);
        }
        let mean = aggregate_runs(&per_run)?;
        let (mut closed, mut mc, mut sigma) = (None, None, None);
        if let (Some(e), Some(c)) = (mean.explanation_accuracy, mean.completion_accuracy) {
            if !baseline.is_empty() {
                let est = baseline.estimate(e, c, cfg.run.baseline_samples, cfg.run.rng_seed)?;
                closed = Some(est.closed_form);
                mc = Some(est.monte_carlo);
                sigma = Some(est.sigma);
            }
        }
        metrics.push(MetricsRow {
            cell: cell.clone(),
            run: None,
            metrics: mean,
            pairs: total_pairs,
            ambiguous_consistency: (!per_run_ambiguous.is_empty())
                .then(|| per_run_ambiguous.iter().sum::<f64>() / per_run_ambiguous.len() as f64),
            random_closed_form: closed,
            random_monte_carlo: mc,
            random_sigma: sigma,
        });
    }

    // top-k tests and quadrant groups, ambiguous sequences only
    let mut alt: BTreeMap<(Cell, Task), AlternativeRow> = BTreeMap::new();
    let mut groups: BTreeMap<Quadrant, Vec<f64>> = BTreeMap::new();
    for (line, r) in results.records() {
        let Some(dist) = &r.logprobs else { continue };
        let Some(ds) = sets.get(&line.length) else { continue };
        let Some(rec) = ds.find(&r.sequence.values).filter(|x| x.is_ambiguous()) else {
            continue;
        };
        let outcome = match r.task {
            Task::Completion => {
                let correct = truth(ds, &r.sequence.values).unwrap_or_default();
                for (q, lp) in quadrant_labels(dist, &correct, r.sequence.base) {
                    groups.entry(q).or_default().push(lp);
                }
                alternative_consideration_test(dist, &correct, r.sequence.base)
            }
            Task::ExplanationChoice => {
                let valid: BTreeSet<_> = rec.explanations().into_iter().collect();
                let correct: BTreeSet<String> = r
                    .choices
                    .iter()
                    .filter(|c| valid.contains(&c.function))
                    .map(|c| c.label.clone())
                    .collect();
                let labels: Vec<&str> = r.choices.iter().map(|c| c.label.as_str()).collect();
                let labels = if labels.is_empty() { CHOICE_LABELS.to_vec() } else { labels };
                alternative_choice_test(dist, &correct, &labels)
            }
            _ => continue,
        };
        let row = alt.entry((cell_of(line.length, r), r.task)).or_default();
        row.tested += 1;
        row.passed += outcome.passed as usize;
        row.multi_token_suspect += outcome.multi_token_suspect as usize;
    }
    let alternatives = alt
        .into_iter()
        .map(|((cell, task), mut row)| {
            row.cell = Some(cell);
            row.task = Some(task);
            row
        })
        .collect();

    let quadrant_counts = groups.iter().map(|(q, v)| (*q, v.len())).collect();
    let kl = quadrant_kl_report(&groups, DEFAULT_BINS, DEFAULT_SIGMA)?;
    let mut histograms = Vec::new();
    let present: Vec<(Quadrant, &[f64])> = groups
        .iter()
        .filter(|(_, v)| !v.is_empty())
        .map(|(q, v)| (*q, v.as_slice()))
        .collect();
    if !present.is_empty() {
        let slices: Vec<&[f64]> = present.iter().map(|p| p.1).collect();
        for ((q, _), h) in present.iter().zip(build_shared_histograms(&slices, DEFAULT_BINS)?) {
            let s = gaussian_smooth(&h, DEFAULT_SIGMA)?;
            let edges = h.edges();
            for i in 0..h.densities.len() {
                histograms.push(HistogramRow {
                    quadrant: *q,
                    bin_lo: edges[i],
                    bin_hi: edges[i + 1],
                    density: h.densities[i],
                    smoothed: s.densities[i],
                });
            }
        }
    }

    Ok(Analysis {
        config_digest: results.header.config_digest.clone(),
        records: results.lines.len(),
        metrics,
        alternatives,
        quadrant_counts,
        kl,
        histograms,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.4}")).unwrap_or_default()
}

/// Writes metrics.csv, alternatives.csv, kl.csv, histograms.csv and
/// analysis.json into `dir`. Every file carries the config digest.
pub fn write_tables(a: &Analysis, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let d = &a.config_digest;

    let mut w = csv::Writer::from_path(dir.join("metrics.csv"))?;
    w.write_record([
        "config_digest", "length", "base", "variant", "run", "n_runs", "explanation_accuracy", "completion_accuracy",
        "valid_fraction", "cross_context_consistency", "pairs", "ambiguous_consistency", "model_judged_consistency", "precision", "recall",
        "random_closed_form", "random_monte_carlo", "random_sigma",
    ])?;
    for r in &a.metrics {
        let m = &r.metrics;
        w.write_record([
            d.clone(),
            r.cell.length.to_string(),
            r.cell.base.to_string(),
            r.cell.variant.name().to_string(),
            r.run.map_or("mean".into(), |x| x.to_string()),
            m.n_runs.to_string(),
            opt(m.explanation_accuracy),
            opt(m.completion_accuracy),
            opt(m.valid_fraction),
            opt(m.cross_context_consistency),
            r.pairs.to_string(),
            opt(r.ambiguous_consistency),
            opt(m.model_judged_consistency),
            opt(m.precision.map(|p| p * 100.0)),
            opt(m.recall.map(|p| p * 100.0)),
            opt(r.random_closed_form),
            opt(r.random_monte_carlo),
            opt(r.random_sigma),
        ])?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join("alternatives.csv"))?;
    w.write_record(["config_digest", "length", "base", "variant", "task", "tested", "passed", "pass_rate", "multi_token_suspect"])?;
    for r in &a.alternatives {
        let cell = r.cell.as_ref().expect("filled");
        w.write_record([
            d.clone(),
            cell.length.to_string(),
            cell.base.to_string(),
            cell.variant.name().to_string(),
            r.task.map(|t| t.name()).unwrap_or_default().to_string(),
            r.tested.to_string(),
            r.passed.to_string(),
            opt((r.tested > 0).then(|| 100.0 * r.passed as f64 / r.tested as f64)),
            r.multi_token_suspect.to_string(),
        ])?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join("kl.csv"))?;
    w.write_record(["config_digest", "p", "q", "kl_bits"])?;
    for k in &a.kl {
        w.write_record([d.clone(), k.p.name().into(), k.q.name().into(), opt(k.kl_bits)])?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join("histograms.csv"))?;
    w.write_record(["config_digest", "quadrant", "bin_lo", "bin_hi", "density", "smoothed"])?;
    for h in &a.histograms {
        w.write_record([
            d.clone(),
            h.quadrant.name().into(),
            format!("{:.6}", h.bin_lo),
            format!("{:.6}", h.bin_hi),
            format!("{:.6}", h.density),
            format!("{:.6}", h.smoothed),
        ])?;
    }
    w.flush()?;

    std::fs::write(dir.join("analysis.json"), serde_json::to_string_pretty(a)? + "\n")?;
    Ok(())
}

pub fn base_name(radix: u32) -> &'static str {
    match Base::from_radix(radix) {
        Some(Base::Binary) => "base 2",
        _ => "base 10",
    }
}
