//! Task-scoring functions: the fitness signal for amplification and the final report metrics.
//!
//! SMILES-valued tasks use character tokens; captioning uses lowercased whitespace tokens.
//! The fingerprint and validity checks are lightweight stand-ins for a cheminformatics
//! toolkit; external providers can be plugged in through [`FingerprintProvider`] and
//! [`ValidityChecker`].

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hashing::fnv1a64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("incomparable fingerprints: widths {0} and {1}")]
    WidthMismatch(usize, usize),
    #[error("fingerprint width must be a positive power of two, got {0}")]
    BadWidth(usize),
    #[error("invalid n-gram range [{0}, {1}]")]
    BadNgramRange(usize, usize),
    #[error("unknown task kind `{0}`")]
    UnknownTaskKind(String),
    #[error("unknown metric `{0}`")]
    UnknownMetric(String),
    #[error("cannot aggregate an empty list of instance scores")]
    EmptyAggregate,
    #[error("instance {index} has metric keys {found:?}, expected {expected:?}")]
    HeterogeneousKeys { index: usize, expected: Vec<MetricId>, found: Vec<MetricId> },
    #[error("fitness metric {0} is not present in the instance scores")]
    MissingFitness(MetricId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenMode {
    Character,
    Whitespace,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSequence {
    pub tokens: Vec<String>,
    pub mode: TokenMode,
}

impl TokenSequence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Convenience constructor for tests and callers that already hold tokens.
    pub fn from_tokens<S: AsRef<str>>(tokens: &[S]) -> Self {
        TokenSequence { tokens: tokens.iter().map(|t| t.as_ref().to_string()).collect(), mode: TokenMode::Whitespace }
    }
}

pub fn tokenize(text: &str, mode: TokenMode) -> TokenSequence {
    let tokens = match mode {
        TokenMode::Character => text.chars().map(|c| c.to_string()).collect(),
        TokenMode::Whitespace => text.split_whitespace().map(str::to_string).collect(),
    };
    TokenSequence { tokens, mode }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Smoothing {
    None,
    AddOne,
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    if n == 0 || tokens.len() < n {
        return counts;
    }
    for window in tokens.windows(n) {
        *counts.entry(window).or_insert(0) += 1;
    }
    counts
}

/// Clipped n-gram overlap and the candidate's n-gram total.
fn clipped_overlap(candidate: &[String], reference: &[String], n: usize) -> (usize, usize) {
    let cand = ngram_counts(candidate, n);
    let refs = ngram_counts(reference, n);
    let overlap = cand.iter().map(|(gram, &c)| c.min(refs.get(gram).copied().unwrap_or(0))).sum();
    (overlap, candidate.len().saturating_sub(n - 1))
}

/// Sentence-level BLEU: geometric mean of modified n-gram precisions (n = 1..=max_n)
/// times the brevity penalty.
///
/// An empty candidate scores 0 regardless of smoothing, since its brevity penalty is 0.
pub fn bleu(candidate: &TokenSequence, reference: &TokenSequence, max_n: usize, smoothing: Smoothing) -> f64 {
    assert!(max_n >= 1, "bleu requires max_n >= 1");
    if candidate.is_empty() {
        return 0.0;
    }
    let mut log_sum = 0.0;
    for n in 1..=max_n {
        let (overlap, total) = clipped_overlap(&candidate.tokens, &reference.tokens, n);
        let precision = match smoothing {
            Smoothing::None => {
                if total == 0 || overlap == 0 {
                    return 0.0;
                }
                overlap as f64 / total as f64
            }
            Smoothing::AddOne => (overlap as f64 + 1.0) / (total as f64 + 1.0),
        };
        log_sum += precision.ln();
    }
    let c = candidate.len() as f64;
    let r = reference.len() as f64;
    let brevity = if c > r { 1.0 } else { (1.0 - r / c).exp() };
    (brevity * (log_sum / max_n as f64).exp()).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf {
    fn from_counts(hits: usize, cand_total: usize, ref_total: usize) -> Self {
        let precision = if cand_total == 0 { 0.0 } else { hits as f64 / cand_total as f64 };
        let recall = if ref_total == 0 { 0.0 } else { hits as f64 / ref_total as f64 };
        let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
        Prf { precision, recall, f1 }
    }
}

pub fn rouge_n(candidate: &TokenSequence, reference: &TokenSequence, n: usize) -> Prf {
    assert!(n >= 1, "rouge_n requires n >= 1");
    let (overlap, cand_total) = clipped_overlap(&candidate.tokens, &reference.tokens, n);
    let ref_total = reference.len().saturating_sub(n - 1);
    Prf::from_counts(overlap, cand_total, ref_total)
}

pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { prev[j + 1].max(cur[j]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

pub fn rouge_l(candidate: &TokenSequence, reference: &TokenSequence) -> Prf {
    let lcs = lcs_len(&candidate.tokens, &reference.tokens);
    Prf::from_counts(lcs, candidate.len(), reference.len())
}

/// Unit-cost edit distance over Unicode scalar values.
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    if a.is_empty() {
        return b.len();
    }
    let mut row: Vec<usize> = (0..=b.len()).collect();
    for (i, ca) in a.iter().enumerate() {
        let mut diag = row[0];
        row[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let above = row[j + 1];
            let cost = usize::from(ca != cb);
            row[j + 1] = (above + 1).min(row[j] + 1).min(diag + cost);
            diag = above;
        }
    }
    row[b.len()]
}

/// Normalizes a string before exact-match comparison.
pub trait Normalizer: Send + Sync {
    fn normalize(&self, text: &str) -> Result<String, String>;
}

/// Strips surrounding whitespace.
#[derive(Debug, Default, Clone, Copy)]
pub struct TrimNormalizer;

impl Normalizer for TrimNormalizer {
    fn normalize(&self, text: &str) -> Result<String, String> {
        Ok(text.trim().to_string())
    }
}

impl<F> Normalizer for F
where
    F: Fn(&str) -> Result<String, String> + Send + Sync,
{
    fn normalize(&self, text: &str) -> Result<String, String> {
        self(text)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExactMatch {
    pub matched: bool,
    /// Set when the normalizer failed on either side; `matched` is then false.
    pub normalizer_error: Option<String>,
}

pub fn exact_match(pred: &str, gold: &str, normalizer: Option<&dyn Normalizer>) -> ExactMatch {
    let normalizer = normalizer.unwrap_or(&TrimNormalizer);
    match (normalizer.normalize(pred), normalizer.normalize(gold)) {
        (Ok(p), Ok(g)) => ExactMatch { matched: p == g, normalizer_error: None },
        (Err(e), _) | (_, Err(e)) => ExactMatch { matched: false, normalizer_error: Some(e) },
    }
}

/// Fixed-width bit set used as a molecular fingerprint.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Bitset {
    width: usize,
    words: Vec<u64>,
}

impl Bitset {
    pub fn new(width: usize) -> Self {
        assert!(width > 0, "bitset width must be positive");
        Bitset { width, words: vec![0; width.div_ceil(64)] }
    }

    pub fn from_indices(width: usize, indices: impl IntoIterator<Item = usize>) -> Self {
        let mut set = Bitset::new(width);
        for i in indices {
            set.insert(i);
        }
        set
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn insert(&mut self, index: usize) {
        assert!(index < self.width, "bit {index} out of range for width {}", self.width);
        self.words[index / 64] |= 1u64 << (index % 64);
    }

    pub fn contains(&self, index: usize) -> bool {
        index < self.width && self.words[index / 64] & (1u64 << (index % 64)) != 0
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    pub fn ones(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.width).filter(move |&i| self.contains(i))
    }
}

/// Default fingerprint parameters for the hashed n-gram stand-in.
pub const FINGERPRINT_N_LO: usize = 2;
pub const FINGERPRINT_N_HI: usize = 4;
pub const FINGERPRINT_WIDTH: usize = 1024;

/// Hashed character n-gram fingerprint (FNV-1a 64 over the n-gram's UTF-8 bytes).
///
/// This is a stand-in for structural fingerprints; it sees only the string.
pub fn hashed_fingerprint(text: &str, n_lo: usize, n_hi: usize, width: usize) -> Result<Bitset, MetricsError> {
    if n_lo == 0 || n_lo > n_hi {
        return Err(MetricsError::BadNgramRange(n_lo, n_hi));
    }
    if width == 0 || !width.is_power_of_two() {
        return Err(MetricsError::BadWidth(width));
    }
    let chars: Vec<char> = text.chars().collect();
    let mut set = Bitset::new(width);
    let mut buf = String::new();
    for n in n_lo..=n_hi {
        for window in chars.windows(n) {
            buf.clear();
            buf.extend(window);
            set.insert((fnv1a64(buf.as_bytes()) % width as u64) as usize);
        }
    }
    Ok(set)
}

pub fn tanimoto(a: &Bitset, b: &Bitset) -> Result<f64, MetricsError> {
    if a.width != b.width {
        return Err(MetricsError::WidthMismatch(a.width, b.width));
    }
    let (mut inter, mut union) = (0u32, 0u32);
    for (x, y) in a.words.iter().zip(&b.words) {
        inter += (x & y).count_ones();
        union += (x | y).count_ones();
    }
    if union == 0 {
        return Ok(1.0);
    }
    Ok(f64::from(inter) / f64::from(union))
}

/// Source of fingerprints for the tanimoto metric.
pub trait FingerprintProvider: Send + Sync {
    fn fingerprint(&self, text: &str) -> Result<Bitset, MetricsError>;
    fn label(&self) -> &str;
}

#[derive(Debug, Clone, Copy)]
pub struct HashedNgramFingerprint {
    pub n_lo: usize,
    pub n_hi: usize,
    pub width: usize,
}

impl Default for HashedNgramFingerprint {
    fn default() -> Self {
        HashedNgramFingerprint { n_lo: FINGERPRINT_N_LO, n_hi: FINGERPRINT_N_HI, width: FINGERPRINT_WIDTH }
    }
}

impl FingerprintProvider for HashedNgramFingerprint {
    fn fingerprint(&self, text: &str) -> Result<Bitset, MetricsError> {
        hashed_fingerprint(text, self.n_lo, self.n_hi, self.width)
    }

    fn label(&self) -> &str {
        "hashed-ngram-standin"
    }
}

/// Decides whether a string is a valid molecule.
pub trait ValidityChecker: Send + Sync {
    fn is_valid(&self, text: &str) -> bool;
}

#[derive(Debug, Default, Clone, Copy)]
pub struct SmilesLite;

impl ValidityChecker for SmilesLite {
    fn is_valid(&self, text: &str) -> bool {
        smiles_lite_valid(text)
    }
}

const ORGANIC_TWO_LETTER: [&str; 2] = ["Cl", "Br"];
const ORGANIC_ONE_LETTER: &str = "BCNOPSFIbcnops*";
const BOND_CHARS: &str = "-=#$:/\\";

/// SMILES-lite syntax check: balanced parentheses and brackets, paired ring-closure
/// labels, and only atoms/bonds/digits/parentheses/dots outside brackets.
pub fn smiles_lite_valid(text: &str) -> bool {
    let chars: Vec<char> = text.chars().collect();
    let mut depth = 0i64;
    let mut ring_counts: BTreeMap<u32, usize> = BTreeMap::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if i + 1 < chars.len() {
            let pair: String = chars[i..i + 2].iter().collect();
            if ORGANIC_TWO_LETTER.contains(&pair.as_str()) {
                i += 2;
                continue;
            }
        }
        match c {
            '[' => {
                let Some(close) = chars[i + 1..].iter().position(|&x| x == ']') else {
                    return false;
                };
                let inner = &chars[i + 1..i + 1 + close];
                if inner.is_empty() || inner.contains(&'[') {
                    return false;
                }
                if !inner.iter().all(|ch| ch.is_ascii_alphanumeric() || "@+-:.#=".contains(*ch)) {
                    return false;
                }
                i += close + 2;
                continue;
            }
            ']' => return false,
            '(' => depth += 1,
            ')' => {
                depth -= 1;
                if depth < 0 {
                    return false;
                }
            }
            '%' => {
                let (Some(d1), Some(d2)) =
                    (chars.get(i + 1).and_then(|c| c.to_digit(10)), chars.get(i + 2).and_then(|c| c.to_digit(10)))
                else {
                    return false;
                };
                *ring_counts.entry(d1 * 10 + d2).or_insert(0) += 1;
                i += 3;
                continue;
            }
            d if d.is_ascii_digit() => {
                *ring_counts.entry(d.to_digit(10).unwrap_or(0)).or_insert(0) += 1;
            }
            '.' => {}
            c if ORGANIC_ONE_LETTER.contains(c) || BOND_CHARS.contains(c) => {}
            _ => return false,
        }
        i += 1;
    }
    depth == 0 && ring_counts.values().all(|n| n % 2 == 0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricId {
    Exact,
    Bleu2,
    Bleu4,
    Rouge1,
    Rouge2,
    #[serde(rename = "rougeL")]
    RougeL,
    Levenshtein,
    Validity,
    Tanimoto,
    Accuracy,
}

impl MetricId {
    pub const ALL: [MetricId; 10] = [
        MetricId::Exact,
        MetricId::Bleu2,
        MetricId::Bleu4,
        MetricId::Rouge1,
        MetricId::Rouge2,
        MetricId::RougeL,
        MetricId::Levenshtein,
        MetricId::Validity,
        MetricId::Tanimoto,
        MetricId::Accuracy,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MetricId::Exact => "exact",
            MetricId::Bleu2 => "bleu2",
            MetricId::Bleu4 => "bleu4",
            MetricId::Rouge1 => "rouge1",
            MetricId::Rouge2 => "rouge2",
            MetricId::RougeL => "rougeL",
            MetricId::Levenshtein => "levenshtein",
            MetricId::Validity => "validity",
            MetricId::Tanimoto => "tanimoto",
            MetricId::Accuracy => "accuracy",
        }
    }

    /// Levenshtein is a distance; everything else is a similarity in [0, 1].
    pub fn higher_is_better(self) -> bool {
        self != MetricId::Levenshtein
    }
}

impl fmt::Display for MetricId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MetricId {
    type Err = MetricsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        MetricId::ALL
            .into_iter()
            .find(|m| m.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| MetricsError::UnknownMetric(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricValue {
    pub metric_id: MetricId,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    MoleculeDesign,
    Captioning,
    ReactionPrediction,
    PropertyPrediction,
}

impl TaskKind {
    pub const ALL: [TaskKind; 4] =
        [TaskKind::MoleculeDesign, TaskKind::Captioning, TaskKind::ReactionPrediction, TaskKind::PropertyPrediction];

    pub fn as_str(self) -> &'static str {
        match self {
            TaskKind::MoleculeDesign => "molecule_design",
            TaskKind::Captioning => "captioning",
            TaskKind::ReactionPrediction => "reaction_prediction",
            TaskKind::PropertyPrediction => "property_prediction",
        }
    }

    pub fn metrics(self) -> &'static [MetricId] {
        match self {
            TaskKind::MoleculeDesign | TaskKind::ReactionPrediction => {
                &[MetricId::Exact, MetricId::Bleu2, MetricId::Levenshtein, MetricId::Validity, MetricId::Tanimoto]
            }
            TaskKind::Captioning => {
                &[MetricId::Bleu2, MetricId::Bleu4, MetricId::Rouge1, MetricId::Rouge2, MetricId::RougeL]
            }
            TaskKind::PropertyPrediction => &[MetricId::Accuracy],
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TaskKind {
    type Err = MetricsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "molecule_design" => Ok(TaskKind::MoleculeDesign),
            "captioning" => Ok(TaskKind::Captioning),
            "reaction_prediction" => Ok(TaskKind::ReactionPrediction),
            "property_prediction" => Ok(TaskKind::PropertyPrediction),
            other => Err(MetricsError::UnknownTaskKind(other.to_string())),
        }
    }
}

pub type InstanceScores = BTreeMap<MetricId, f64>;

fn caption_tokens(text: &str) -> TokenSequence {
    tokenize(&text.to_lowercase(), TokenMode::Whitespace)
}

fn normalize_label(text: &str) -> String {
    text.trim().trim_end_matches('.').trim().to_lowercase()
}

/// Scores one prediction against its gold answer with the task's metric bundle,
/// using the built-in fingerprint and validity stand-ins.
pub fn score_instance(task: TaskKind, pred: &str, gold: &str) -> InstanceScores {
    score_instance_with(task, pred, gold, &HashedNgramFingerprint::default(), &SmilesLite)
}

pub fn score_instance_with(
    task: TaskKind,
    pred: &str,
    gold: &str,
    fingerprints: &dyn FingerprintProvider,
    validity: &dyn ValidityChecker,
) -> InstanceScores {
    let mut out = InstanceScores::new();
    match task {
        TaskKind::MoleculeDesign | TaskKind::ReactionPrediction => {
            let (p, g) = (pred.trim(), gold.trim());
            let exact = exact_match(p, g, None).matched;
            out.insert(MetricId::Exact, if exact { 1.0 } else { 0.0 });
            let (pt, gt) = (tokenize(p, TokenMode::Character), tokenize(g, TokenMode::Character));
            out.insert(MetricId::Bleu2, bleu(&pt, &gt, 2, Smoothing::AddOne));
            out.insert(MetricId::Levenshtein, levenshtein(p, g) as f64);
            out.insert(MetricId::Validity, if validity.is_valid(p) { 1.0 } else { 0.0 });
            let fts = match (fingerprints.fingerprint(p), fingerprints.fingerprint(g)) {
                (Ok(a), Ok(b)) => tanimoto(&a, &b).unwrap_or(0.0),
                _ => 0.0,
            };
            out.insert(MetricId::Tanimoto, fts);
        }
        TaskKind::Captioning => {
            let (pt, gt) = (caption_tokens(pred), caption_tokens(gold));
            out.insert(MetricId::Bleu2, bleu(&pt, &gt, 2, Smoothing::AddOne));
            out.insert(MetricId::Bleu4, bleu(&pt, &gt, 4, Smoothing::AddOne));
            out.insert(MetricId::Rouge1, rouge_n(&pt, &gt, 1).f1);
            out.insert(MetricId::Rouge2, rouge_n(&pt, &gt, 2).f1);
            out.insert(MetricId::RougeL, rouge_l(&pt, &gt).f1);
        }
        TaskKind::PropertyPrediction => {
            let hit = normalize_label(pred) == normalize_label(gold);
            out.insert(MetricId::Accuracy, if hit { 1.0 } else { 0.0 });
        }
    }
    out
}

/// Scores for an answer that must count as a total miss (reserve, tool failure):
/// every similarity is 0 and the edit distance is the gold length.
pub fn failure_scores(task: TaskKind, gold: &str) -> InstanceScores {
    task.metrics()
        .iter()
        .map(|&m| {
            let v = if m == MetricId::Levenshtein { gold.trim().chars().count() as f64 } else { 0.0 };
            (m, v)
        })
        .collect()
}

/// Per-metric means over a validation run plus the designated fitness value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub means: BTreeMap<MetricId, f64>,
    pub count: usize,
    pub fitness_metric: MetricId,
    pub fitness: f64,
    /// Instances whose run failed (tool error or budget exhaustion without an answer).
    #[serde(default)]
    pub failures: usize,
    /// Instances where the planner declined to answer.
    #[serde(default)]
    pub reserved: usize,
}

pub fn aggregate(instance_scores: &[InstanceScores], fitness: MetricId) -> Result<ScoreReport, MetricsError> {
    let first = instance_scores.first().ok_or(MetricsError::EmptyAggregate)?;
    let keys: Vec<MetricId> = first.keys().copied().collect();
    let mut sums: BTreeMap<MetricId, f64> = keys.iter().map(|&k| (k, 0.0)).collect();
    for (index, scores) in instance_scores.iter().enumerate() {
        if scores.len() != keys.len() || !keys.iter().all(|k| scores.contains_key(k)) {
            return Err(MetricsError::HeterogeneousKeys {
                index,
                expected: keys.clone(),
                found: scores.keys().copied().collect(),
            });
        }
        for (k, v) in scores {
            *sums.get_mut(k).expect("keys checked") += v;
        }
    }
    let n = instance_scores.len() as f64;
    let means: BTreeMap<MetricId, f64> = sums.into_iter().map(|(k, s)| (k, s / n)).collect();
    let fitness_value = *means.get(&fitness).ok_or(MetricsError::MissingFitness(fitness))?;
    Ok(ScoreReport {
        means,
        count: instance_scores.len(),
        fitness_metric: fitness,
        fitness: fitness_value,
        failures: 0,
        reserved: 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(tokens: &[&str]) -> TokenSequence {
        TokenSequence::from_tokens(tokens)
    }

    #[test]
    fn tokenize_examples() {
        assert_eq!(tokenize("C1CC1", TokenMode::Character).tokens, ["C", "1", "C", "C", "1"]);
        assert_eq!(tokenize("a b  c", TokenMode::Whitespace).tokens, ["a", "b", "c"]);
        assert!(tokenize("", TokenMode::Character).is_empty());
    }

    #[test]
    fn bleu_examples() {
        let x = seq(&["a", "b", "c"]);
        assert!((bleu(&x, &x, 3, Smoothing::None) - 1.0).abs() < 1e-12);
        assert!((bleu(&x, &x, 2, Smoothing::AddOne) - 1.0).abs() < 1e-12);
        // p1 = 3/4, p2 = 2/3, BP = 1
        let got = bleu(&seq(&["a", "b", "c", "d"]), &seq(&["a", "b", "c", "e"]), 2, Smoothing::None);
        assert!((got - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12, "{got}");
        assert_eq!(bleu(&seq(&[]), &seq(&["a"]), 2, Smoothing::None), 0.0);
        assert_eq!(bleu(&seq(&[]), &seq(&["a"]), 2, Smoothing::AddOne), 0.0);
    }

    #[test]
    fn bleu_brevity_penalty() {
        // candidate [a] vs reference [a, b]: p1 = 1, BP = exp(1 - 2)
        let got = bleu(&seq(&["a"]), &seq(&["a", "b"]), 1, Smoothing::None);
        assert!((got - (-1.0f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn rouge_examples() {
        let x = seq(&["a", "b", "c"]);
        let full = rouge_n(&x, &x, 1);
        assert_eq!((full.precision, full.recall, full.f1), (1.0, 1.0, 1.0));
        let none = rouge_n(&seq(&["a"]), &seq(&["b"]), 1);
        assert_eq!((none.precision, none.recall, none.f1), (0.0, 0.0, 0.0));
        let half = rouge_n(&seq(&["a", "b"]), &seq(&["a", "c"]), 1);
        assert_eq!((half.precision, half.recall, half.f1), (0.5, 0.5, 0.5));

        let l = rouge_l(&seq(&["a", "x", "b"]), &seq(&["a", "b"]));
        assert!((l.precision - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(l.recall, 1.0);
        let empty = rouge_l(&seq(&[]), &seq(&["a"]));
        assert_eq!((empty.precision, empty.recall, empty.f1), (0.0, 0.0, 0.0));
        let ident = rouge_l(&x, &x);
        assert_eq!(ident.f1, 1.0);
    }

    #[test]
    fn levenshtein_examples() {
        assert_eq!(levenshtein("C1CC1", "C1CC1"), 0);
        assert_eq!(levenshtein("abc", "abd"), 1);
        assert_eq!(levenshtein("", "abc"), 3);
        // Insert "C(C)" inside: C1CC1 -> CC1(C)CC1
        assert_eq!(levenshtein("C1CC1", "CC1(C)CC1"), 4);
    }

    #[test]
    fn exact_match_examples() {
        assert!(exact_match("C1CC1", "C1CC1", None).matched);
        assert!(exact_match(" C1CC1", "C1CC1", None).matched);
        assert!(!exact_match("C1CC1", "CC1CC1", None).matched);
        let failing = |s: &str| -> Result<String, String> {
            if s.contains('!') {
                Err("bad input".into())
            } else {
                Ok(s.to_string())
            }
        };
        let out = exact_match("C!", "C!", Some(&failing));
        assert!(!out.matched);
        assert_eq!(out.normalizer_error.as_deref(), Some("bad input"));
    }

    #[test]
    fn fingerprint_examples() {
        let a = hashed_fingerprint("CCO", 2, 4, 1024).unwrap();
        assert_eq!(a, hashed_fingerprint("CCO", 2, 4, 1024).unwrap());
        assert!(hashed_fingerprint("", 2, 4, 1024).unwrap().is_empty());
        assert_eq!(hashed_fingerprint("CCO", 1, 1, 1024).unwrap(), hashed_fingerprint("OCC", 1, 1, 1024).unwrap());
        assert!(matches!(hashed_fingerprint("C", 3, 2, 1024), Err(MetricsError::BadNgramRange(3, 2))));
        assert!(matches!(hashed_fingerprint("C", 1, 2, 1000), Err(MetricsError::BadWidth(1000))));
    }

    #[test]
    fn tanimoto_examples() {
        let a = Bitset::from_indices(64, [1, 2, 3]);
        let b = Bitset::from_indices(64, [2, 3, 4]);
        assert_eq!(tanimoto(&a, &b).unwrap(), 0.5);
        assert_eq!(tanimoto(&a, &a).unwrap(), 1.0);
        let c = Bitset::from_indices(64, [10, 11]);
        assert_eq!(tanimoto(&a, &c).unwrap(), 0.0);
        assert_eq!(tanimoto(&Bitset::new(64), &Bitset::new(64)).unwrap(), 1.0);
        assert_eq!(tanimoto(&a, &Bitset::new(128)), Err(MetricsError::WidthMismatch(64, 128)));
    }

    #[test]
    fn smiles_lite_examples() {
        assert!(smiles_lite_valid("C1CC1"));
        assert!(!smiles_lite_valid("C1CC"));
        assert!(!smiles_lite_valid("C(C"));
        assert!(smiles_lite_valid("CC(=O)Oc1ccccc1C(=O)O"));
        assert!(smiles_lite_valid("[Na+].[Cl-]"));
        assert!(smiles_lite_valid("C%12CC%12"));
        assert!(smiles_lite_valid("ClCBr"));
        assert!(!smiles_lite_valid("C)C("));
        assert!(!smiles_lite_valid("C[NH4+"));
        assert!(!smiles_lite_valid("CXC"));
        assert!(!smiles_lite_valid("UNABLE_TO_ANSWER"));
    }

    #[test]
    fn score_instance_examples() {
        let s = score_instance(TaskKind::PropertyPrediction, "Yes", "yes");
        assert_eq!(s[&MetricId::Accuracy], 1.0);

        let gold = "CC(=O)Oc1ccccc1C(=O)O";
        let s = score_instance(TaskKind::MoleculeDesign, gold, gold);
        assert_eq!(s[&MetricId::Exact], 1.0);
        assert!((s[&MetricId::Bleu2] - 1.0).abs() < 1e-12);
        assert_eq!(s[&MetricId::Levenshtein], 0.0);
        assert_eq!(s[&MetricId::Tanimoto], 1.0);
        assert_eq!(s.keys().copied().collect::<Vec<_>>(), TaskKind::MoleculeDesign.metrics());

        let s = score_instance(TaskKind::Captioning, "", "the molecule is water");
        assert_eq!(s.len(), 5);
        assert!(s.values().all(|&v| v == 0.0));
    }

    #[test]
    fn unknown_task_kind_is_an_error() {
        assert_eq!("protein_folding".parse::<TaskKind>(), Err(MetricsError::UnknownTaskKind("protein_folding".into())));
    }

    #[test]
    fn aggregate_examples() {
        let one = |v: f64| InstanceScores::from([(MetricId::Accuracy, v)]);
        let r = aggregate(&[one(1.0), one(0.0)], MetricId::Accuracy).unwrap();
        assert_eq!(r.fitness, 0.5);
        assert_eq!(r.count, 2);
        let r = aggregate(&[one(0.25)], MetricId::Accuracy).unwrap();
        assert_eq!(r.fitness, 0.25);
        let many = vec![one(0.375); 100];
        assert!((aggregate(&many, MetricId::Accuracy).unwrap().fitness - 0.375).abs() < 1e-12);
        assert_eq!(aggregate(&[], MetricId::Accuracy), Err(MetricsError::EmptyAggregate));
        let mixed = [one(1.0), InstanceScores::from([(MetricId::Exact, 1.0)])];
        assert!(matches!(aggregate(&mixed, MetricId::Accuracy), Err(MetricsError::HeterogeneousKeys { index: 1, .. })));
    }

    #[test]
    fn failure_scores_are_total_misses() {
        let s = failure_scores(TaskKind::MoleculeDesign, "CCO");
        assert_eq!(s[&MetricId::Levenshtein], 3.0);
        assert_eq!(s[&MetricId::Exact], 0.0);
        assert_eq!(s[&MetricId::Tanimoto], 0.0);
    }
}
