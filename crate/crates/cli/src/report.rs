//! Human-readable summary of an analysis, plus how the regenerated dataset
//! and baseline compare with the reference figures.

use std::fmt::Write as _;

use anyhow::Result;

use seqcon::evaluation::{RandomBaseline, RecordSelection};

use crate::analyze::{base_name, Analysis};
use crate::campaign::{datasets, function_space, REFERENCE_AMBIGUOUS_BY_LENGTH, REFERENCE_L4, REFERENCE_SPACE};
use crate::config::CampaignConfig;

/// Reference accuracies (explanation %, completion %) and the random
/// consistency reported for them.
pub const REFERENCE_BASELINES: [(f64, f64, f64); 3] = [(31.18, 65.95, 8.50), (50.25, 77.56, 10.02), (59.05, 78.64, 15.22)];

fn pct(v: Option<f64>) -> String {
    v.map(|x| format!("{x:6.2}")).unwrap_or_else(|| "     -".into())
}

pub fn render(a: &Analysis, cfg: &CampaignConfig) -> Result<String> {
    let mut out = String::new();
    writeln!(out, "campaign {}  ({} records)", a.config_digest, a.records)?;
    writeln!(out)?;
    writeln!(out, "length  base     variant          runs  expl%  compl%  valid%  consist%  amb%    judged%  prec%  recall%  random%")?;
    for r in a.metrics.iter().filter(|r| r.run.is_none()) {
        let m = &r.metrics;
        writeln!(
            out,
            "{:6}  {:7}  {:15}  {:4}  {}  {}  {}  {}  {}    {}   {} {}   {}",
            r.cell.length,
            base_name(r.cell.base),
            r.cell.variant.name(),
            m.n_runs,
            pct(m.explanation_accuracy),
            pct(m.completion_accuracy),
            pct(m.valid_fraction),
            pct(m.cross_context_consistency),
            pct(r.ambiguous_consistency),
            pct(m.model_judged_consistency),
            pct(m.precision.map(|p| p * 100.0)),
            pct(m.recall.map(|p| p * 100.0)),
            pct(r.random_closed_form),
        )?;
    }
    writeln!(out, "accuracy is scored on unambiguous sequences; amb% and random% cover ambiguous ones")?;
    if !a.alternatives.is_empty() {
        writeln!(out)?;
        writeln!(out, "top-k alternative test")?;
        for r in &a.alternatives {
            let cell = r.cell.as_ref().expect("filled");
            writeln!(
                out,
                "  length {} {} {} {}: {}/{} passed{}",
                cell.length,
                base_name(cell.base),
                cell.variant.name(),
                r.task.map(|t| t.name()).unwrap_or_default(),
                r.passed,
                r.tested,
                if r.multi_token_suspect > 0 {
                    format!(" ({} with multi-token suspects)", r.multi_token_suspect)
                } else {
                    String::new()
                }
            )?;
        }
    }
    if !a.kl.is_empty() {
        writeln!(out)?;
        writeln!(out, "KL divergence between quadrant densities (bits, 40 bins, sigma 1)")?;
        for k in &a.kl {
            let v = k.kl_bits.map_or("undefined (disjoint support)".into(), |v| format!("{v:.3}"));
            writeln!(out, "  KL({} || {}) = {v}", k.p.name(), k.q.name())?;
        }
    }
    writeln!(out)?;
    out.push_str(&divergences(cfg)?);
    Ok(out)
}

/// Regenerated counts and baselines next to the reference figures.
pub fn divergences(cfg: &CampaignConfig) -> Result<String> {
    let mut out = String::new();
    let space = function_space(cfg);
    let conv = cfg.dataset.convention();
    writeln!(out, "reference comparison")?;
    writeln!(
        out,
        "  function space: {} (reference {REFERENCE_SPACE}, {:+}); excluded: {}",
        space.len(),
        space.len() as i64 - REFERENCE_SPACE as i64,
        space.excluded.iter().map(|e| e.to_string()).collect::<Vec<_>>().join("; ")
    )?;
    let sets = datasets(cfg, &space.functions);
    for ds in &sets {
        let c = ds.counts();
        let len = ds.params.length;
        let reference = REFERENCE_AMBIGUOUS_BY_LENGTH.iter().find(|(l, _)| *l == len).map(|r| r.1);
        write!(
            out,
            "  length {len}: {} ambiguous / {} unambiguous sequences, {} / {} functions",
            c.ambiguous_sequences, c.unambiguous_sequences, c.ambiguous_functions, c.unambiguous_functions
        )?;
        if let Some(r) = reference {
            write!(out, "; reference ambiguous {r} ({:+})", c.ambiguous_sequences as i64 - r as i64)?;
        }
        if len == 4 {
            write!(out, "; reference split {}/{}", REFERENCE_L4.0, REFERENCE_L4.1)?;
        }
        writeln!(out)?;
    }
    let ambiguous: Vec<RandomBaseline> = sets
        .iter()
        .map(|ds| RandomBaseline::new(ds, RecordSelection::Ambiguous, &space.functions, &conv))
        .collect();
    writeln!(out, "  random baseline at reference accuracies (closed form, ambiguous sequences, mean over lengths):")?;
    for (e, c, reported) in REFERENCE_BASELINES {
        let vals: Vec<f64> = ambiguous
            .iter()
            .filter(|b| !b.is_empty())
            .map(|b| b.closed_form(e, c))
            .collect::<Result<_, _>>()?;
        if vals.is_empty() {
            continue;
        }
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        writeln!(out, "    explanation {e:.2}%, completion {c:.2}%: {mean:.2}% vs reference {reported:.2}% ({:+.2})", mean - reported)?;
    }
    Ok(out)
}
