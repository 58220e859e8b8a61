//! Versioned JSONL results: a header line with the config and its digest,
//! then one line per graded response.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use num_bigint::BigInt;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use seqcon::evaluation::EvalRecord;
use seqcon::prompting::{Task, Variant};
use seqcon::Base;

use crate::config::CampaignConfig;

pub const RESULTS_SCHEMA: &str = "seqcon-results";
pub const RESULTS_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub schema: String,
    pub version: u32,
    pub config_digest: String,
    pub config: CampaignConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultLine {
    pub key: String,
    pub length: usize,
    pub backend_id: String,
    pub cached: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<String>,
    pub record: EvalRecord,
}

/// Identity of one prompt within a campaign; resumption skips keys already
/// in the file.
pub fn line_key(run_id: u32, length: usize, base: Base, variant: Variant, task: Task, values: &[BigInt]) -> String {
    let v: Vec<String> = values.iter().map(|x| x.to_string()).collect();
    let id = serde_json::json!([run_id, length, base.radix(), variant.name(), task.name(), v]);
    hex::encode(Sha256::digest(id.to_string().as_bytes()))
}

pub struct Results {
    pub header: Header,
    pub lines: Vec<ResultLine>,
}

impl Results {
    pub fn records(&self) -> impl Iterator<Item = (&ResultLine, &EvalRecord)> {
        self.lines.iter().map(|l| (l, &l.record))
    }
}

fn check_header(h: &Header, path: &Path) -> Result<()> {
    if h.schema != RESULTS_SCHEMA {
        bail!("{}: not a results file (schema {:?})", path.display(), h.schema);
    }
    if h.version != RESULTS_VERSION {
        bail!(
            "{}: results schema version {} unsupported (expected {RESULTS_VERSION})",
            path.display(),
            h.version
        );
    }
    if h.config.digest() != h.config_digest {
        bail!("{}: header digest does not match its config", path.display());
    }
    Ok(())
}

/// Read a results file. A torn final line (no trailing newline, from an
/// interrupted write) is dropped and reported through the second value.
pub fn read_results(path: &Path) -> Result<(Results, Option<u64>)> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut reader = BufReader::new(file);
    let mut buf = String::new();
    let mut offset = 0u64;
    reader.read_line(&mut buf)?;
    if buf.trim().is_empty() {
        bail!("{}: empty results file", path.display());
    }
    let header: Header = serde_json::from_str(buf.trim_end()).with_context(|| format!("{}: bad header", path.display()))?;
    check_header(&header, path)?;
    offset += buf.len() as u64;
    let mut lines = Vec::new();
    let mut torn = None;
    loop {
        buf.clear();
        let n = reader.read_line(&mut buf)?;
        if n == 0 {
            break;
        }
        if !buf.ends_with('\n') {
            torn = Some(offset);
            break;
        }
        if !buf.trim().is_empty() {
            let line: ResultLine = serde_json::from_str(buf.trim_end())
                .with_context(|| format!("{}: bad result line at byte {offset}", path.display()))?;
            lines.push(line);
        }
        offset += n as u64;
    }
    Ok((Results { header, lines }, torn))
}

/// Appends result lines, flushing each so an interruption loses at most the
/// line being written.
pub struct ResultsWriter {
    file: File,
}

impl ResultsWriter {
    /// Open for appending, creating the file and header when absent. An
    /// existing file must belong to the same campaign.
    pub fn open(path: &Path, cfg: &CampaignConfig) -> Result<(ResultsWriter, Vec<ResultLine>)> {
        let digest = cfg.digest();
        if path.exists() {
            let (existing, torn) = read_results(path)?;
            if existing.header.config_digest != digest {
                bail!(
                    "{} belongs to another campaign (digest {}, this config {digest}); use a fresh output directory",
                    path.display(),
                    existing.header.config_digest
                );
            }
            if let Some(len) = torn {
                log::warn!("dropping torn final line of {}", path.display());
                OpenOptions::new().write(true).open(path)?.set_len(len)?;
            }
            let file = OpenOptions::new().append(true).open(path)?;
            return Ok((ResultsWriter { file }, existing.lines));
        }
        let header = Header {
            schema: RESULTS_SCHEMA.into(),
            version: RESULTS_VERSION,
            config_digest: digest,
            config: cfg.identity(),
        };
        let mut file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
        writeln!(file, "{}", serde_json::to_string(&header)?)?;
        file.flush()?;
        Ok((ResultsWriter { file }, Vec::new()))
    }

    pub fn append(&mut self, line: &ResultLine) -> Result<()> {
        writeln!(self.file, "{}", serde_json::to_string(line)?)?;
        self.file.flush()?;
        Ok(())
    }
}
