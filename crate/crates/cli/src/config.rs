//! Campaign configuration: one TOML file drives every stage, flags override
//! single fields.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use seqcon::backends::HttpConfig;
use seqcon::evaluation::RecordSelection;
use seqcon::funcspace::{ConstantRange, IndexConvention};
use seqcon::prompting::{ShotSampling, Task, Variant};
use seqcon::Base;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    /// Prefix lengths to mine and evaluate.
    pub lengths: Vec<usize>,
    pub start_index: u64,
    pub max_offset: u64,
    pub constants: ConstantRange,
    /// Which sequences get completion/explanation prompts. Judgment follows
    /// them; verbalization and multiple choice always use ambiguous ones.
    pub sequences: RecordSelection,
    /// Cap per length and selection, taken in dataset order.
    pub max_sequences: Option<usize>,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            lengths: vec![2, 3, 4],
            start_index: 1,
            max_offset: 4,
            constants: ConstantRange::default(),
            sequences: RecordSelection::All,
            max_sequences: None,
        }
    }
}

impl DatasetConfig {
    pub fn convention(&self) -> IndexConvention {
        IndexConvention {
            start_index: self.start_index,
            max_offset: self.max_offset,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PromptConfig {
    pub tasks: Vec<Task>,
    pub variants: Vec<Variant>,
    pub bases: Vec<Base>,
    /// Demonstrations per prompt; task default when unset.
    pub n_shots: Option<usize>,
    pub shot_sampling: ShotSampling,
    pub role_text: Option<String>,
    pub model_name: String,
    /// Top-k first-token logprobs requested for completion and multiple
    /// choice prompts; 0 disables.
    pub top_logprobs: usize,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl Default for PromptConfig {
    fn default() -> Self {
        PromptConfig {
            tasks: vec![
                Task::Completion,
                Task::Explanation,
                Task::ConsistencyJudgment,
                Task::VerbalizeAlternatives,
            ],
            variants: vec![Variant::Plain],
            bases: vec![Base::Decimal],
            n_shots: None,
            shot_sampling: ShotSampling::Random,
            role_text: None,
            model_name: "{model_name}".into(),
            top_logprobs: 0,
            temperature: 0.0,
            max_tokens: 64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    /// Ground-truth answers, completion and explanation from one generator.
    #[default]
    Oracle,
    /// Ground truth with explanations chosen to disagree with the completion.
    Adversarial,
    /// Uniformly drawn valid answers.
    RandomValid,
    /// Replayed fixtures keyed by test query.
    Scripted,
    /// Remote chat/completions endpoint.
    Http,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendConfig {
    pub kind: BackendKind,
    /// Seed of the random_valid backend.
    pub seed: u64,
    /// JSONL fixtures for the scripted backend.
    pub fixtures: Option<PathBuf>,
    pub http: HttpConfig,
    /// Response cache directory; relative paths are under the output dir.
    pub cache_dir: Option<PathBuf>,
    /// JSONL log of every request and response.
    pub audit_log: Option<PathBuf>,
    pub max_in_flight: usize,
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig {
            kind: BackendKind::Oracle,
            seed: 0,
            fixtures: None,
            http: HttpConfig::default(),
            cache_dir: None,
            audit_log: None,
            max_in_flight: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub n_runs: u32,
    pub rng_seed: u64,
    pub output_dir: PathBuf,
    /// Wall-clock timestamps in result lines. Off by default so identical
    /// campaigns give identical files.
    pub timestamps: bool,
    /// Monte Carlo draws per sequence for the random baseline.
    pub baseline_samples: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            n_runs: 3,
            rng_seed: 0,
            output_dir: PathBuf::from("seqcon-out"),
            timestamps: false,
            baseline_samples: 2000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CampaignConfig {
    pub dataset: DatasetConfig,
    pub prompt: PromptConfig,
    pub backend: BackendConfig,
    pub run: RunConfig,
}

impl CampaignConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let cfg: CampaignConfig = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string_pretty(self)?)
    }

    /// The config minus where its outputs go; this is what result headers
    /// store and what the digest covers.
    pub fn identity(&self) -> CampaignConfig {
        let mut c = self.clone();
        c.run.output_dir = PathBuf::new();
        c
    }

    /// sha256 of the canonical JSON form of `identity()`.
    pub fn digest(&self) -> String {
        let json = serde_json::to_vec(&self.identity()).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }

    pub fn validate(&self) -> Result<()> {
        let d = &self.dataset;
        if d.lengths.is_empty() || d.lengths.contains(&0) {
            bail!("dataset.lengths must be non-empty and positive");
        }
        if d.constants.min > d.constants.max {
            bail!("dataset.constants: min {} > max {}", d.constants.min, d.constants.max);
        }
        if self.prompt.variants.is_empty() || self.prompt.bases.is_empty() {
            bail!("prompt.variants and prompt.bases must be non-empty");
        }
        if self.prompt.top_logprobs > seqcon::distribution::MAX_TOP_K {
            bail!("prompt.top_logprobs is at most {}", seqcon::distribution::MAX_TOP_K);
        }
        if self.run.n_runs == 0 {
            bail!("run.n_runs must be at least 1");
        }
        if self.backend.kind == BackendKind::Scripted && self.backend.fixtures.is_none() {
            bail!("the scripted backend needs backend.fixtures");
        }
        Ok(())
    }

    pub fn max_length(&self) -> usize {
        self.dataset.lengths.iter().copied().max().unwrap_or(1)
    }

    /// Paths in the config are taken relative to the output directory
    /// unless absolute.
    pub fn under_output(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.run.output_dir.join(p)
        }
    }

    pub fn results_path(&self) -> PathBuf {
        self.run.output_dir.join("results.jsonl")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_round_trip_and_digest() {
        let mut cfg = CampaignConfig::default();
        cfg.prompt.bases = vec![Base::Decimal, Base::Binary];
        cfg.prompt.tasks.push(Task::ExplanationChoice);
        let text = cfg.to_toml().unwrap();
        let back: CampaignConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.digest(), cfg.digest());
        let mut other = cfg.clone();
        other.run.rng_seed = 1;
        assert_ne!(other.digest(), cfg.digest());
        let mut moved = cfg.clone();
        moved.run.output_dir = "elsewhere".into();
        assert_eq!(moved.digest(), cfg.digest());
    }

    #[test]
    fn partial_files_fill_defaults() {
        let cfg: CampaignConfig = toml::from_str("[dataset]\nlengths = [3]\n[backend]\nkind = \"random_valid\"\n").unwrap();
        assert_eq!(cfg.dataset.lengths, vec![3]);
        assert_eq!(cfg.dataset.max_offset, 4);
        assert_eq!(cfg.backend.kind, BackendKind::RandomValid);
        assert!(toml::from_str::<CampaignConfig>("[dataset]\nlenghts = [3]\n").is_err());
    }

    #[test]
    fn validation() {
        let mut cfg = CampaignConfig::default();
        assert!(cfg.validate().is_ok());
        cfg.dataset.lengths = vec![];
        assert!(cfg.validate().is_err());
        let mut cfg = CampaignConfig::default();
        cfg.backend.kind = BackendKind::Scripted;
        assert!(cfg.validate().is_err());
    }
}
