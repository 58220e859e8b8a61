//! Top-k token log-probability analysis: the alternative-consideration test
//! and the histogram / smoothing / KL pipeline used to compare logprob
//! distributions between answer groups.

use std::collections::{BTreeMap, BTreeSet};

use num_bigint::BigInt;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sequence::Base;

/// The API exposes at most this many alternatives per position.
pub const MAX_TOP_K: usize = 5;
pub const DEFAULT_BINS: usize = 40;
pub const DEFAULT_SIGMA: f64 = 1.0;
/// Gaussian kernels are cut off this many standard deviations out.
pub const KERNEL_TRUNCATE: f64 = 4.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DistributionError {
    #[error("more than {MAX_TOP_K} entries ({0})")]
    TooManyEntries(usize),
    #[error("duplicate token {0:?}")]
    DuplicateToken(String),
    #[error("logprob {1} for token {0:?} is not a finite value <= 0")]
    BadLogprob(String, f64),
    #[error("no values to bin")]
    Empty,
    #[error("need at least one bin")]
    NoBins,
    #[error("smoothing width must be positive, got {0}")]
    BadSigma(f64),
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("q is zero at bin {0} where p has mass")]
    SupportViolation(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenLogprob {
    pub token: String,
    pub logprob: f64,
}

/// Top-k alternatives at the first answer position, most likely first.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(try_from = "Vec<TokenLogprob>", into = "Vec<TokenLogprob>")]
pub struct TokenDistribution {
    entries: Vec<TokenLogprob>,
}

impl TokenDistribution {
    pub fn new<S: Into<String>, I: IntoIterator<Item = (S, f64)>>(
        entries: I,
    ) -> Result<Self, DistributionError> {
        let mut entries: Vec<TokenLogprob> = entries
            .into_iter()
            .map(|(t, lp)| TokenLogprob {
                token: t.into(),
                logprob: lp,
            })
            .collect();
        if entries.len() > MAX_TOP_K {
            return Err(DistributionError::TooManyEntries(entries.len()));
        }
        let mut seen = BTreeSet::new();
        for e in &entries {
            if !e.logprob.is_finite() || e.logprob > 0.0 {
                return Err(DistributionError::BadLogprob(e.token.clone(), e.logprob));
            }
            if !seen.insert(e.token.as_str()) {
                return Err(DistributionError::DuplicateToken(e.token.clone()));
            }
        }
        // stable: equal logprobs keep their reported order
        entries.sort_by(|a, b| b.logprob.total_cmp(&a.logprob));
        Ok(TokenDistribution { entries })
    }

    pub fn entries(&self) -> &[TokenLogprob] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn top(&self) -> Option<&TokenLogprob> {
        self.entries.first()
    }
}

impl TryFrom<Vec<TokenLogprob>> for TokenDistribution {
    type Error = DistributionError;

    fn try_from(v: Vec<TokenLogprob>) -> Result<Self, Self::Error> {
        TokenDistribution::new(v.into_iter().map(|e| (e.token, e.logprob)))
    }
}

impl From<TokenDistribution> for Vec<TokenLogprob> {
    fn from(d: TokenDistribution) -> Self {
        d.entries
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestReason {
    AllCorrectRankHigher,
    IncorrectOutranksCorrect,
    CorrectMissingIncorrectPresent,
    NoIncorrectListed,
}

impl TestReason {
    pub fn passed(self) -> bool {
        matches!(
            self,
            TestReason::AllCorrectRankHigher | TestReason::NoIncorrectListed
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlternativeTestResult {
    pub passed: bool,
    pub reason: TestReason,
    /// A listed token looked like the first piece of a longer numeral.
    pub multi_token_suspect: bool,
}

/// How one listed token is read.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TokenClass<K> {
    Answer(K),
    /// Possibly the start of a longer answer; ignored but flagged.
    Ambiguous,
    Ignored,
}

/// Core of the test, generic over the answer key. Each value keeps the best
/// logprob among the tokens mapped to it.
///
/// Fails when some listed incorrect answer is at least as likely as some
/// listed correct one, or when a correct answer is missing while an
/// incorrect one is listed. Passes vacuously with no incorrect answer.
pub fn alternative_test_by<K: Ord + Clone>(
    dist: &TokenDistribution,
    correct: &BTreeSet<K>,
    classify: impl Fn(&str) -> TokenClass<K>,
) -> AlternativeTestResult {
    let mut best: BTreeMap<K, f64> = BTreeMap::new();
    let mut suspect = false;
    for e in dist.entries() {
        match classify(&e.token) {
            TokenClass::Answer(k) => {
                let slot = best.entry(k).or_insert(f64::NEG_INFINITY);
                *slot = slot.max(e.logprob);
            }
            TokenClass::Ambiguous => suspect = true,
            TokenClass::Ignored => {}
        }
    }
    let mut min_correct = f64::INFINITY;
    let mut max_incorrect = f64::NEG_INFINITY;
    let mut n_correct = 0;
    let mut any_incorrect = false;
    for (k, lp) in &best {
        if correct.contains(k) {
            n_correct += 1;
            min_correct = min_correct.min(*lp);
        } else {
            any_incorrect = true;
            max_incorrect = max_incorrect.max(*lp);
        }
    }
    let reason = if !any_incorrect {
        TestReason::NoIncorrectListed
    } else if n_correct > 0 && max_incorrect >= min_correct {
        TestReason::IncorrectOutranksCorrect
    } else if n_correct < correct.len() {
        TestReason::CorrectMissingIncorrectPresent
    } else {
        TestReason::AllCorrectRankHigher
    };
    AlternativeTestResult {
        passed: reason.passed(),
        reason,
        multi_token_suspect: suspect,
    }
}

/// Numeral reading of a token: whitespace stripped, parsed in `base`. A
/// numeral that is not itself correct but is a strict textual prefix of a
/// correct value's numeral stands for that value when exactly one correct
/// value matches; with several it is ambiguous.
pub fn classify_numeral_token(token: &str, correct: &BTreeSet<BigInt>, base: Base) -> TokenClass<BigInt> {
    let text = token.trim();
    let Some(v) = base.parse_numeral(text) else {
        return TokenClass::Ignored;
    };
    if correct.contains(&v) {
        return TokenClass::Answer(v);
    }
    let extensions: Vec<&BigInt> = correct
        .iter()
        .filter(|c| {
            let full = base.render(c);
            full.len() > text.len() && full.starts_with(text)
        })
        .collect();
    match extensions.as_slice() {
        [] => TokenClass::Answer(v),
        [one] => TokenClass::Answer((*one).clone()),
        _ => TokenClass::Ambiguous,
    }
}

/// The test over numeral continuations.
pub fn alternative_consideration_test(
    dist: &TokenDistribution,
    correct: &BTreeSet<BigInt>,
    base: Base,
) -> AlternativeTestResult {
    let mut r = alternative_test_by(dist, correct, |t| classify_numeral_token(t, correct, base));
    // A prefix mapped onto a longer correct value is worth flagging too.
    r.multi_token_suspect |= dist.entries().iter().any(|e| {
        base.parse_numeral(e.token.trim())
            .is_some_and(|v| !correct.contains(&v) && classify_numeral_token(&e.token, correct, base) != TokenClass::Answer(v))
    });
    r
}

/// The test over multiple-choice labels (`A`..`E`).
pub fn alternative_choice_test(
    dist: &TokenDistribution,
    correct_labels: &BTreeSet<String>,
    labels: &[&str],
) -> AlternativeTestResult {
    alternative_test_by(dist, correct_labels, |t| {
        let t = t.trim().trim_end_matches(['.', ')']);
        if labels.contains(&t) {
            TokenClass::Answer(t.to_string())
        } else {
            TokenClass::Ignored
        }
    })
}

/// Binned densities over `[lo, hi]`; `densities[i] * width` sums to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub densities: Vec<f64>,
}

impl Histogram {
    pub fn n_bins(&self) -> usize {
        self.densities.len()
    }

    pub fn width(&self) -> f64 {
        (self.hi - self.lo) / self.densities.len() as f64
    }

    pub fn edges(&self) -> Vec<f64> {
        let w = self.width();
        (0..=self.n_bins()).map(|i| self.lo + w * i as f64).collect()
    }

    /// Probability mass per bin.
    pub fn masses(&self) -> Vec<f64> {
        let w = self.width();
        self.densities.iter().map(|d| d * w).collect()
    }

    pub fn total_mass(&self) -> f64 {
        self.masses().iter().sum()
    }
}

/// Common `[min, max]` of all groups; a degenerate range is widened by half a
/// unit each side.
pub fn pooled_range(groups: &[&[f64]]) -> Result<(f64, f64), DistributionError> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for v in groups.iter().flat_map(|g| g.iter()) {
        lo = lo.min(*v);
        hi = hi.max(*v);
    }
    if lo > hi {
        return Err(DistributionError::Empty);
    }
    if lo == hi {
        return Ok((lo - 0.5, hi + 0.5));
    }
    Ok((lo, hi))
}

/// Density histogram of `values` on fixed edges. Values outside the range
/// are dropped; the maximum lands in the last bin.
pub fn histogram_in_range(
    values: &[f64],
    lo: f64,
    hi: f64,
    n_bins: usize,
) -> Result<Histogram, DistributionError> {
    if n_bins == 0 {
        return Err(DistributionError::NoBins);
    }
    let width = (hi - lo) / n_bins as f64;
    let mut counts = vec![0usize; n_bins];
    let mut n = 0usize;
    for &v in values {
        if !(lo..=hi).contains(&v) {
            continue;
        }
        let i = (((v - lo) / width) as usize).min(n_bins - 1);
        counts[i] += 1;
        n += 1;
    }
    if n == 0 {
        return Err(DistributionError::Empty);
    }
    let densities = counts
        .iter()
        .map(|&c| c as f64 / (n as f64 * width))
        .collect();
    Ok(Histogram { lo, hi, densities })
}

pub fn build_density_histogram(values: &[f64], n_bins: usize) -> Result<Histogram, DistributionError> {
    let (lo, hi) = pooled_range(&[values])?;
    histogram_in_range(values, lo, hi, n_bins)
}

/// One histogram per group, all on the pooled edges.
pub fn build_shared_histograms(
    groups: &[&[f64]],
    n_bins: usize,
) -> Result<Vec<Histogram>, DistributionError> {
    let (lo, hi) = pooled_range(groups)?;
    groups
        .iter()
        .map(|g| histogram_in_range(g, lo, hi, n_bins))
        .collect()
}

/// Scipy-style `reflect` boundary: `d c b a | a b c d | d c b a`.
fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let period = 2 * n;
    let mut j = i.rem_euclid(period);
    if j >= n {
        j = period - 1 - j;
    }
    j as usize
}

/// Gaussian-kernel convolution with `sigma` in bin units, renormalised to
/// unit mass.
pub fn gaussian_smooth(hist: &Histogram, sigma: f64) -> Result<Histogram, DistributionError> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(DistributionError::BadSigma(sigma));
    }
    let radius = (KERNEL_TRUNCATE * sigma + 0.5) as isize;
    let mut kernel: Vec<f64> = (-radius..=radius)
        .map(|k| (-0.5 * (k as f64 / sigma).powi(2)).exp())
        .collect();
    let ks: f64 = kernel.iter().sum();
    kernel.iter_mut().for_each(|k| *k /= ks);

    let n = hist.n_bins();
    let mut out: Vec<f64> = (0..n as isize)
        .map(|i| {
            kernel
                .iter()
                .zip(-radius..=radius)
                .map(|(w, k)| w * hist.densities[reflect(i + k, n)])
                .sum()
        })
        .collect();
    let mass: f64 = out.iter().sum::<f64>() * hist.width();
    if mass > 0.0 {
        out.iter_mut().for_each(|d| *d /= mass);
    }
    Ok(Histogram {
        lo: hist.lo,
        hi: hist.hi,
        densities: out,
    })
}

/// KL(p || q) in bits between two discrete distributions given as bin
/// masses (normalised here). Bins where p is zero contribute nothing.
pub fn kl_divergence_bits(p: &[f64], q: &[f64]) -> Result<f64, DistributionError> {
    if p.len() != q.len() {
        return Err(DistributionError::LengthMismatch(p.len(), q.len()));
    }
    let sp: f64 = p.iter().sum();
    let sq: f64 = q.iter().sum();
    if !(sp > 0.0) || !(sq > 0.0) {
        return Err(DistributionError::Empty);
    }
    let mut kl = 0.0;
    for (i, (&a, &b)) in p.iter().zip(q).enumerate() {
        if a <= 0.0 {
            continue;
        }
        if b <= 0.0 {
            return Err(DistributionError::SupportViolation(i));
        }
        let (a, b) = (a / sp, b / sq);
        kl += a * (a / b).log2();
    }
    // rounding can leave a tiny negative for identical inputs
    Ok(kl.max(0.0))
}

pub fn kl_between(p: &Histogram, q: &Histogram) -> Result<f64, DistributionError> {
    kl_divergence_bits(&p.masses(), &q.masses())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quadrant {
    CorrectAndPred,
    CorrectNotPred,
    IncorrectAndPred,
    IncorrectNotPred,
}

impl Quadrant {
    pub const ALL: [Quadrant; 4] = [
        Quadrant::CorrectAndPred,
        Quadrant::CorrectNotPred,
        Quadrant::IncorrectAndPred,
        Quadrant::IncorrectNotPred,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Quadrant::CorrectAndPred => "correct_and_pred",
            Quadrant::CorrectNotPred => "correct_not_pred",
            Quadrant::IncorrectAndPred => "incorrect_and_pred",
            Quadrant::IncorrectNotPred => "incorrect_not_pred",
        }
    }
}

pub fn classify_response_quadrant(is_correct: bool, predicted_top1: bool) -> Quadrant {
    match (is_correct, predicted_top1) {
        (true, true) => Quadrant::CorrectAndPred,
        (true, false) => Quadrant::CorrectNotPred,
        (false, true) => Quadrant::IncorrectAndPred,
        (false, false) => Quadrant::IncorrectNotPred,
    }
}

/// Labels every listed token of `dist`. A token is correct when its numeral
/// reading is in `correct`; non-numerals are incorrect.
pub fn quadrant_labels(
    dist: &TokenDistribution,
    correct: &BTreeSet<BigInt>,
    base: Base,
) -> Vec<(Quadrant, f64)> {
    dist.entries()
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let ok = matches!(classify_numeral_token(&e.token, correct, base), TokenClass::Answer(v) if correct.contains(&v));
            (classify_response_quadrant(ok, i == 0), e.logprob)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadrantKl {
    pub p: Quadrant,
    pub q: Quadrant,
    /// `None` when the smoothed supports still do not overlap.
    pub kl_bits: Option<f64>,
}

/// Pairwise KL between the smoothed logprob densities of every two
/// non-empty quadrant groups, on shared edges.
pub fn quadrant_kl_report(
    groups: &BTreeMap<Quadrant, Vec<f64>>,
    n_bins: usize,
    sigma: f64,
) -> Result<Vec<QuadrantKl>, DistributionError> {
    let present: Vec<(Quadrant, &[f64])> = Quadrant::ALL
        .iter()
        .filter_map(|q| groups.get(q).filter(|v| !v.is_empty()).map(|v| (*q, v.as_slice())))
        .collect();
    if present.is_empty() {
        return Ok(Vec::new());
    }
    let slices: Vec<&[f64]> = present.iter().map(|(_, v)| *v).collect();
    let smoothed = build_shared_histograms(&slices, n_bins)?
        .iter()
        .map(|h| gaussian_smooth(h, sigma))
        .collect::<Result<Vec<_>, _>>()?;
    let mut out = Vec::new();
    for (i, (qa, _)) in present.iter().enumerate() {
        for (j, (qb, _)) in present.iter().enumerate() {
            if i != j {
                let kl_bits = match kl_between(&smoothed[i], &smoothed[j]) {
                    Ok(v) => Some(v),
                    Err(DistributionError::SupportViolation(_)) => None,
                    Err(e) => return Err(e),
                };
                out.push(QuadrantKl {
                    p: *qa,
                    q: *qb,
                    kl_bits,
                });
            }
        }
    }
    Ok(out)
}
