mod analyze;
mod campaign;
mod config;
mod report;
mod results;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;

use config::{BackendKind, CampaignConfig};
use seqcon::evaluation::RecordSelection;
use seqcon::funcspace::ConstantRange;
use seqcon::prompting::{Task, Variant};
use seqcon::Base;

#[derive(Parser)]
#[command(name = "seqcon", version, about = "Ambiguous integer sequences and cross-context consistency")]
struct Cli {
    /// Campaign config (TOML); defaults apply when omitted.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Enumerate the function space and write one dataset per length.
    Mine(#[command(flatten)] Overrides),
    /// Prompt the backend for every task, run and sequence of the campaign.
    Run(#[command(flatten)] Overrides),
    /// Compute metric tables from a results file.
    Analyze(ReadArgs),
    /// Print the metric tables and the reference comparison.
    Report(ReadArgs),
    /// Print the effective config and its digest.
    Config(#[command(flatten)] Overrides),
}

fn parse_enum<T: DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|e| e.to_string())
}

fn parse_base(s: &str) -> Result<Base, String> {
    s.parse::<u32>()
        .ok()
        .and_then(Base::from_radix)
        .ok_or_else(|| format!("base must be 2 or 10, got {s}"))
}

fn parse_constants(s: &str) -> Result<ConstantRange, String> {
    let (a, b) = s.split_once("..").ok_or("expected MIN..MAX")?;
    let a = a.trim().parse().map_err(|e| format!("{e}"))?;
    let b = b.trim().parse().map_err(|e| format!("{e}"))?;
    Ok(ConstantRange::new(a, b))
}

/// Flags overriding single config fields.
#[derive(Args, Default)]
struct Overrides {
    #[arg(long, value_delimiter = ',')]
    lengths: Option<Vec<usize>>,
    /// Inclusive constant range, e.g. `0..4`.
    #[arg(long, value_parser = parse_constants)]
    constants: Option<ConstantRange>,
    #[arg(long)]
    max_offset: Option<u64>,
    #[arg(long)]
    start_index: Option<u64>,
    /// all, ambiguous or unambiguous.
    #[arg(long, value_parser = parse_enum::<RecordSelection>)]
    sequences: Option<RecordSelection>,
    #[arg(long)]
    max_sequences: Option<usize>,
    #[arg(long, value_delimiter = ',', value_parser = parse_enum::<Task>)]
    tasks: Option<Vec<Task>>,
    #[arg(long, value_delimiter = ',', value_parser = parse_enum::<Variant>)]
    variants: Option<Vec<Variant>>,
    #[arg(long, value_delimiter = ',', value_parser = parse_base)]
    bases: Option<Vec<Base>>,
    #[arg(long)]
    shots: Option<usize>,
    #[arg(long)]
    top_logprobs: Option<usize>,
    #[arg(long, value_enum)]
    backend: Option<BackendKind>,
    #[arg(long)]
    backend_seed: Option<u64>,
    #[arg(long)]
    fixtures: Option<PathBuf>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    base_url: Option<String>,
    #[arg(long)]
    cache_dir: Option<PathBuf>,
    #[arg(long)]
    audit_log: Option<PathBuf>,
    #[arg(long)]
    max_in_flight: Option<usize>,
    #[arg(long)]
    runs: Option<u32>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, short)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    timestamps: bool,
}

impl Overrides {
    fn apply(self, cfg: &mut CampaignConfig) {
        let d = &mut cfg.dataset;
        set(&mut d.lengths, self.lengths);
        set(&mut d.constants, self.constants);
        set(&mut d.max_offset, self.max_offset);
        set(&mut d.start_index, self.start_index);
        set(&mut d.sequences, self.sequences);
        if self.max_sequences.is_some() {
            d.max_sequences = self.max_sequences;
        }
        let p = &mut cfg.prompt;
        set(&mut p.tasks, self.tasks);
        set(&mut p.variants, self.variants);
        set(&mut p.bases, self.bases);
        if self.shots.is_some() {
            p.n_shots = self.shots;
        }
        set(&mut p.top_logprobs, self.top_logprobs);
        let b = &mut cfg.backend;
        set(&mut b.kind, self.backend);
        set(&mut b.seed, self.backend_seed);
        if self.fixtures.is_some() {
            b.fixtures = self.fixtures;
        }
        set(&mut b.http.model, self.model);
        set(&mut b.http.base_url, self.base_url);
        if self.cache_dir.is_some() {
            b.cache_dir = self.cache_dir;
        }
        if self.audit_log.is_some() {
            b.audit_log = self.audit_log;
        }
        set(&mut b.max_in_flight, self.max_in_flight);
        let r = &mut cfg.run;
        set(&mut r.n_runs, self.runs);
        set(&mut r.rng_seed, self.seed);
        set(&mut r.output_dir, self.output_dir);
        r.timestamps |= self.timestamps;
    }
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

#[derive(Args)]
struct ReadArgs {
    /// Results file; defaults to results.jsonl in the config's output dir.
    #[arg(long)]
    results: Option<PathBuf>,
    /// Where tables go; defaults to the results file's directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, short)]
    output_dir: Option<PathBuf>,
}

fn load_config(path: Option<&PathBuf>, o: Option<Overrides>) -> Result<CampaignConfig> {
    let mut cfg = match path {
        Some(p) => CampaignConfig::load(p)?,
        None => CampaignConfig::default(),
    };
    if let Some(o) = o {
        o.apply(&mut cfg);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn read_stage(cli_config: Option<&PathBuf>, a: ReadArgs) -> Result<(results::Results, PathBuf)> {
    let path = match a.results {
        Some(p) => p,
        None => {
            let o = Overrides {
                output_dir: a.output_dir,
                ..Overrides::default()
            };
            load_config(cli_config, Some(o))?.results_path()
        }
    };
    let (res, torn) = results::read_results(&path)?;
    if torn.is_some() {
        log::warn!("{}: ignoring torn final line", path.display());
    }
    let out = a
        .out
        .unwrap_or_else(|| path.parent().map(PathBuf::from).unwrap_or_default());
    Ok((res, out))
}

fn real_main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Mine(o) => {
            let cfg = load_config(cli.config.as_ref(), Some(o))?;
            let s = campaign::cmd_mine(&cfg)?;
            campaign::print_mine_summary(&s);
            println!("datasets written to {}", cfg.run.output_dir.display());
        }
        Command::Run(o) => {
            let cfg = load_config(cli.config.as_ref(), Some(o))?;
            let s = campaign::cmd_run(&cfg)?;
            println!(
                "{} new results, {} already present -> {}",
                s.written,
                s.skipped,
                s.results.display()
            );
        }
        Command::Analyze(a) => {
            let (res, out) = read_stage(cli.config.as_ref(), a)?;
            let analysis = analyze::analyze(&res)?;
            analyze::write_tables(&analysis, &out).with_context(|| format!("writing tables to {}", out.display()))?;
            println!("{} records analysed; tables in {}", analysis.records, out.display());
        }
        Command::Report(a) => {
            let (res, out) = read_stage(cli.config.as_ref(), a)?;
            let analysis = analyze::analyze(&res)?;
            let text = report::render(&analysis, &res.header.config)?;
            std::fs::create_dir_all(&out)?;
            std::fs::write(out.join("report.txt"), &text)?;
            print!("{text}");
        }
        Command::Config(o) => {
            let cfg = load_config(cli.config.as_ref(), Some(o))?;
            print!("{}", cfg.to_toml()?);
            println!("# digest {}", cfg.digest());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match real_main() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
