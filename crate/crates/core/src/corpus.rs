//! Corpus loading, featurization, train/test splitting and client partitioning.
//!
//! Two on-disk formats are accepted:
//!
//! * `phrasebank`: one example per line, `<sentence>@<label>`. The label is
//!   taken after the last `@`, so sentences may themselves contain `@`.
//! * `tsv`: `<label>\t<sentence>`.
//!
//! Labels are `negative`, `neutral` or `positive`, matched case-insensitively.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hash::fnv1a64;
use crate::rng;

pub const NUM_CLASSES: usize = 3;

pub const DEFAULT_FEATURE_DIM: usize = 1 << 18;
pub const DEFAULT_VOCAB_HASH_DIM: usize = 1 << 15;
pub const DEFAULT_MAX_LEN: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Negative = 0,
    Neutral = 1,
    Positive = 2,
}

impl Label {
    pub const ALL: [Label; NUM_CLASSES] = [Label::Negative, Label::Neutral, Label::Positive];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Label> {
        Label::ALL.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Negative => "negative",
            Label::Neutral => "neutral",
            Label::Positive => "positive",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "negative" => Ok(Label::Negative),
            "neutral" => Ok(Label::Neutral),
            "positive" => Ok(Label::Positive),
            other => Err(format!("unknown label {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum CorpusFormat {
    #[default]
    Phrasebank,
    Tsv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum TextEncoding {
    #[default]
    Utf8,
    Latin1,
}

/// A sentence and its label, before featurization.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawExample {
    pub id: usize,
    pub text: String,
    pub label: Label,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledExample {
    pub id: usize,
    pub text: String,
    /// Sparse hashed bag-of-words, sorted by index, unit Euclidean norm.
    pub features: Vec<(u32, f64)>,
    pub token_ids: Vec<u32>,
    pub label: Label,
}

pub fn load_corpus(path: &Path, format: CorpusFormat, encoding: TextEncoding) -> Result<Vec<RawExample>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let text = match encoding {
        TextEncoding::Utf8 => String::from_utf8(bytes).map_err(|e| Error::Parse {
            line: line_of_offset(e.as_bytes(), e.utf8_error().valid_up_to()),
            message: "invalid UTF-8 (try the latin1 encoding)".into(),
        })?,
        // Latin-1 code points map one-to-one onto U+0000..U+00FF.
        TextEncoding::Latin1 => bytes.iter().map(|&b| b as char).collect(),
    };
    parse_corpus(&text, format)
}

fn line_of_offset(bytes: &[u8], offset: usize) -> usize {
    bytes[..offset].iter().filter(|&&b| b == b'\n').count() + 1
}

/// Parses corpus text. Blank lines are skipped; line numbers in errors are 1-based.
pub fn parse_corpus(text: &str, format: CorpusFormat) -> Result<Vec<RawExample>> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            line: lineno + 1,
            message,
        };
        let (sentence, label) = match format {
            CorpusFormat::Phrasebank => {
                let (s, l) = line
                    .rsplit_once('@')
                    .ok_or_else(|| parse_err("missing '@' label separator".into()))?;
                (s, l)
            }
            CorpusFormat::Tsv => {
                let (l, s) = line
                    .split_once('\t')
                    .ok_or_else(|| parse_err("missing tab separator".into()))?;
                (s, l)
            }
        };
        let label = label.parse::<Label>().map_err(parse_err)?;
        let sentence = sentence.trim();
        if sentence.is_empty() {
            return Err(parse_err("empty sentence".into()));
        }
        out.push(RawExample {
            id: out.len(),
            text: sentence.to_string(),
            label,
        });
    }
    Ok(out)
}

pub fn write_corpus(examples: &[RawExample], format: CorpusFormat) -> String {
    let mut s = String::new();
    for ex in examples {
        match format {
            CorpusFormat::Phrasebank => s.push_str(&format!("{}@{}\n", ex.text, ex.label)),
            CorpusFormat::Tsv => s.push_str(&format!("{}\t{}\n", ex.label, ex.text)),
        }
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeaturizeConfig {
    pub feature_dim: usize,
    pub vocab_hash_dim: usize,
    pub max_len: usize,
}

impl Default for FeaturizeConfig {
    fn default() -> Self {
        FeaturizeConfig {
            feature_dim: DEFAULT_FEATURE_DIM,
            vocab_hash_dim: DEFAULT_VOCAB_HASH_DIM,
            max_len: DEFAULT_MAX_LEN,
        }
    }
}

impl FeaturizeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.feature_dim < 2 {
            return Err(Error::invalid("feature_dim must be at least 2"));
        }
        if self.vocab_hash_dim < 1 {
            return Err(Error::invalid("vocab_hash_dim must be at least 1"));
        }
        if self.max_len < 1 {
            return Err(Error::invalid("max_len must be at least 1"));
        }
        if self.feature_dim > u32::MAX as usize || self.vocab_hash_dim > u32::MAX as usize {
            return Err(Error::invalid("hash dimensions must fit in 32 bits"));
        }
        Ok(())
    }
}

/// Lowercases and splits into maximal runs of alphanumeric characters.
/// Punctuation and whitespace only delimit tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Featurized {
    pub examples: Vec<LabeledExample>,
    pub dropped: usize,
}

/// Sparse hashed features and token ids of one sentence.
pub type Features = (Vec<(u32, f64)>, Vec<u32>);

pub fn featurize_one(text: &str, cfg: &FeaturizeConfig) -> Option<Features> {
    let tokens = tokenize(text);
    if tokens.is_empty() {
        return None;
    }
    let mut counts: BTreeMap<u32, f64> = BTreeMap::new();
    let mut token_ids = Vec::with_capacity(tokens.len().min(cfg.max_len));
    for tok in &tokens {
        let h = fnv1a64(tok.as_bytes());
        *counts.entry((h % cfg.feature_dim as u64) as u32).or_insert(0.0) += 1.0;
        if token_ids.len() < cfg.max_len {
            token_ids.push((h % cfg.vocab_hash_dim as u64) as u32);
        }
    }
    let norm = counts.values().map(|c| c * c).sum::<f64>().sqrt();
    let features = counts.into_iter().map(|(i, c)| (i, c / norm)).collect();
    Some((features, token_ids))
}

/// Hashes every sentence into sparse features and token ids. Sentences with
/// no tokens are dropped and counted.
pub fn featurize(raw: &[RawExample], cfg: &FeaturizeConfig) -> Result<Featurized> {
    cfg.validate()?;
    let mut examples = Vec::with_capacity(raw.len());
    let mut dropped = 0;
    for ex in raw {
        match featurize_one(&ex.text, cfg) {
            Some((features, token_ids)) => examples.push(LabeledExample {
                id: ex.id,
                text: ex.text.clone(),
                features,
                token_ids,
                label: ex.label,
            }),
            None => {
                log::warn!("dropping example {} with no tokens: {:?}", ex.id, ex.text);
                dropped += 1;
            }
        }
    }
    Ok(Featurized { examples, dropped })
}

/// A rational in (0, 1), written `num/den` in config files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Fraction {
    pub num: u64,
    pub den: u64,
}

impl Fraction {
    pub fn new(num: u64, den: u64) -> Result<Self> {
        if den == 0 || num == 0 || num >= den {
            return Err(Error::invalid(format!(
                "fraction {num}/{den} must lie strictly in (0, 1)"
            )));
        }
        Ok(Fraction { num, den })
    }

    pub fn floor_mul(&self, n: usize) -> usize {
        ((n as u128 * self.num as u128) / self.den as u128) as usize
    }
}

impl FromStr for Fraction {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (a, b) = s
            .split_once('/')
            .ok_or_else(|| format!("expected num/den, got {s:?}"))?;
        let num = a.trim().parse().map_err(|_| format!("bad numerator in {s:?}"))?;
        let den = b.trim().parse().map_err(|_| format!("bad denominator in {s:?}"))?;
        Fraction::new(num, den).map_err(|e| e.to_string())
    }
}

impl TryFrom<String> for Fraction {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<Fraction> for String {
    fn from(f: Fraction) -> String {
        format!("{}/{}", f.num, f.den)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitSpec {
    pub train_fraction: Fraction,
    pub seed: u64,
    pub shuffle: bool,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            train_fraction: Fraction { num: 4, den: 5 },
            seed: 0,
            shuffle: true,
        }
    }
}

/// Shuffles (optionally) under `spec.seed` and cuts the first
/// `floor(train_fraction * n)` items into the train set.
pub fn train_test_split<T: Clone>(examples: &[T], spec: &SplitSpec) -> Result<(Vec<T>, Vec<T>)> {
    let n = examples.len();
    if n < 5 {
        return Err(Error::invalid(format!(
            "corpus too small to split: {n} examples, need at least 5"
        )));
    }
    let train_size = spec.train_fraction.floor_mul(n);
    if train_size == 0 || train_size == n {
        return Err(Error::invalid(format!(
            "train fraction {} of {n} examples leaves an empty side",
            String::from(spec.train_fraction)
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    if spec.shuffle {
        order.shuffle(&mut rng::seeded(spec.seed));
    }
    let train = order[..train_size].iter().map(|&i| examples[i].clone()).collect();
    let test = order[train_size..].iter().map(|&i| examples[i].clone()).collect();
    Ok((train, test))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClientPartition {
    pub client_id: usize,
    /// Train-set ordinals, ascending.
    pub example_indices: Vec<usize>,
    pub label_histogram: [usize; NUM_CLASSES],
}

impl ClientPartition {
    fn build(client_id: usize, mut indices: Vec<usize>, labels: &[Label]) -> Self {
        indices.sort_unstable();
        let label_histogram = histogram(indices.iter().map(|&i| labels[i]));
        ClientPartition {
            client_id,
            example_indices: indices,
            label_histogram,
        }
    }

    pub fn len(&self) -> usize {
        self.example_indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.example_indices.is_empty()
    }
}

pub fn histogram(labels: impl IntoIterator<Item = Label>) -> [usize; NUM_CLASSES] {
    let mut h = [0; NUM_CLASSES];
    for l in labels {
        h[l.index()] += 1;
    }
    h
}

/// Seeded uniform shuffle of the train ordinals dealt round-robin to clients.
pub fn partition_iid(train_labels: &[Label], num_clients: usize, seed: u64) -> Result<Vec<ClientPartition>> {
    let n = train_labels.len();
    if num_clients == 0 {
        return Err(Error::invalid("num_clients must be at least 1"));
    }
    if num_clients > n {
        return Err(Error::invalid(format!(
            "{num_clients} clients but only {n} train examples"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::seeded(seed));
    let mut buckets = vec![Vec::with_capacity(n / num_clients + 1); num_clients];
    for (pos, idx) in order.into_iter().enumerate() {
        buckets[pos % num_clients].push(idx);
    }
    Ok(buckets
        .into_iter()
        .enumerate()
        .map(|(c, idx)| ClientPartition::build(c, idx, train_labels))
        .collect())
}

/// Label-sorted shard partitioning.
///
/// Train ordinals are sorted by (label, ordinal) and cut into consecutive
/// shards of `shard_size`; the trailing partial shard is left unassigned.
/// Shard ids are shuffled under `seed` and dealt one at a time, round-robin,
/// until every client holds `shards_per_client` shards or the shards run out.
pub fn partition_noniid_shards(
    train_labels: &[Label],
    shard_size: usize,
    shards_per_client: usize,
    num_clients: usize,
    seed: u64,
) -> Result<Vec<ClientPartition>> {
    if shard_size == 0 || shards_per_client == 0 || num_clients == 0 {
        return Err(Error::invalid(
            "shard_size, shards_per_client and num_clients must all be at least 1",
        ));
    }
    let mut sorted: Vec<usize> = (0..train_labels.len()).collect();
    sorted.sort_by_key(|&i| (train_labels[i], i));
    let num_shards = sorted.len() / shard_size;
    if num_shards < num_clients {
        return Err(Error::invalid(format!(
            "only {num_shards} shards of size {shard_size} for {num_clients} clients"
        )));
    }
    let mut shard_ids: Vec<usize> = (0..num_shards).collect();
    shard_ids.shuffle(&mut rng::seeded(seed));

    let dealt = num_shards.min(shards_per_client * num_clients);
    let mut buckets = vec![Vec::new(); num_clients];
    for (pos, &shard) in shard_ids[..dealt].iter().enumerate() {
        buckets[pos % num_clients].extend_from_slice(&sorted[shard * shard_size..(shard + 1) * shard_size]);
    }
    Ok(buckets
        .into_iter()
        .enumerate()
        .map(|(c, idx)| ClientPartition::build(c, idx, train_labels))
        .collect())
}

/// Train ordinals not held by any partition, ascending.
pub fn unassigned(partitions: &[ClientPartition], train_size: usize) -> Vec<usize> {
    let mut seen = vec![false; train_size];
    for p in partitions {
        for &i in &p.example_indices {
            seen[i] = true;
        }
    }
    (0..train_size).filter(|&i| !seen[i]).collect()
}

pub fn total_variation(hist: &[usize; NUM_CLASSES], reference: &[usize; NUM_CLASSES]) -> f64 {
    let n: usize = hist.iter().sum();
    let m: usize = reference.iter().sum();
    if n == 0 || m == 0 {
        return 0.0;
    }
    0.5 * hist
        .iter()
        .zip(reference)
        .map(|(&a, &b)| (a as f64 / n as f64 - b as f64 / m as f64).abs())
        .sum::<f64>()
}

/// Mean total-variation distance between each client's label distribution
/// and the global one. Always in [0, 1].
pub fn heterogeneity_score(partitions: &[ClientPartition], global: &[usize; NUM_CLASSES]) -> f64 {
    if partitions.is_empty() {
        return 0.0;
    }
    partitions
        .iter()
        .map(|p| total_variation(&p.label_histogram, global))
        .sum::<f64>()
        / partitions.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(spec: &[(Label, usize)]) -> Vec<Label> {
        spec.iter().flat_map(|&(l, n)| std::iter::repeat_n(l, n)).collect()
    }

    #[test]
    fn parses_phrasebank_fixture() {
        let text = "Profit rose .@positive\nSales fell sharply .@Negative\nThe board met on Monday .@NEUTRAL\n";
        let ex = parse_corpus(text, CorpusFormat::Phrasebank).unwrap();
        assert_eq!(ex.len(), 3);
        assert_eq!(ex[0].id, 0);
        assert_eq!(ex[0].text, "Profit rose .");
        assert_eq!(ex[0].label, Label::Positive);
        assert_eq!(ex[1].id, 1);
        assert_eq!(ex[1].text, "Sales fell sharply .");
        assert_eq!(ex[1].label, Label::Negative);
        assert_eq!(ex[2].id, 2);
        assert_eq!(ex[2].label, Label::Neutral);
    }

    #[test]
    fn phrasebank_label_is_after_last_at() {
        let ex = parse_corpus("mail ceo@corp.com today@neutral", CorpusFormat::Phrasebank).unwrap();
        assert_eq!(ex[0].text, "mail ceo@corp.com today");
    }

    #[test]
    fn parses_tsv() {
        let ex = parse_corpus("positive\tProfit rose .\r\nnegative\tLoss widened\n", CorpusFormat::Tsv).unwrap();
        assert_eq!(ex.len(), 2);
        assert_eq!(ex[1].label, Label::Negative);
        assert_eq!(ex[1].text, "Loss widened");
    }

    #[test]
    fn empty_corpus_is_valid() {
        assert!(parse_corpus("", CorpusFormat::Phrasebank).unwrap().is_empty());
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let err = parse_corpus("a@positive\nb@neutral\nno label here\n", CorpusFormat::Phrasebank).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
    }

    #[test]
    fn unknown_label_fails_whole_load() {
        let err = parse_corpus("a@positive\nb@mixed\n", CorpusFormat::Phrasebank).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
    }

    #[test]
    fn latin1_decoding() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.txt");
        std::fs::write(&path, b"Nokia \xe9tait en hausse@positive\n").unwrap();
        let ex = load_corpus(&path, CorpusFormat::Phrasebank, TextEncoding::Latin1).unwrap();
        assert_eq!(ex[0].text, "Nokia était en hausse");
        assert!(matches!(
            load_corpus(&path, CorpusFormat::Phrasebank, TextEncoding::Utf8),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn missing_file_is_io_error() {
        let err = load_corpus(Path::new("/nonexistent/x.txt"), CorpusFormat::Tsv, TextEncoding::Utf8).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }

    #[test]
    fn tokenizer_drops_punctuation() {
        assert_eq!(tokenize("Good good."), vec!["good", "good"]);
        assert_eq!(tokenize("EUR3.5m, up 12%!"), vec!["eur3", "5m", "up", "12"]);
        assert!(tokenize(" .,; ").is_empty());
    }

    #[test]
    fn repeated_token_has_unit_weight() {
        let cfg = FeaturizeConfig::default();
        let (f, ids) = featurize_one("Good good.", &cfg).unwrap();
        assert_eq!(f.len(), 1);
        assert_eq!(f[0].1, 1.0);
        assert_eq!(f[0].0 as u64, fnv1a64(b"good") % (1 << 18));
        assert_eq!(ids.len(), 2);
        assert_eq!(ids[0], ids[1]);
    }

    #[test]
    fn featurize_drops_empty_and_truncates() {
        let raw = vec![
            RawExample {
                id: 0,
                text: "one two three four".into(),
                label: Label::Neutral,
            },
            RawExample {
                id: 1,
                text: "...".into(),
                label: Label::Positive,
            },
        ];
        let cfg = FeaturizeConfig {
            feature_dim: 16,
            vocab_hash_dim: 8,
            max_len: 2,
        };
        let out = featurize(&raw, &cfg).unwrap();
        assert_eq!(out.dropped, 1);
        assert_eq!(out.examples.len(), 1);
        assert_eq!(out.examples[0].token_ids.len(), 2);
        assert!(out.examples[0].token_ids.iter().all(|&t| t < 8));
        assert!(out.examples[0].features.iter().all(|&(i, _)| i < 16));
        let norm: f64 = out.examples[0].features.iter().map(|(_, w)| w * w).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-9);
    }

    #[test]
    fn featurize_rejects_bad_dims() {
        let cfg = FeaturizeConfig {
            feature_dim: 1,
            ..Default::default()
        };
        assert!(featurize(&[], &cfg).is_err());
        let cfg = FeaturizeConfig {
            max_len: 0,
            ..Default::default()
        };
        assert!(featurize(&[], &cfg).is_err());
    }

    #[test]
    fn split_of_full_sized_corpus() {
        let items: Vec<usize> = (0..3453).collect();
        let (train, test) = train_test_split(&items, &SplitSpec::default()).unwrap();
        assert_eq!((train.len(), test.len()), (2762, 691));
        let mut all: Vec<usize> = train.iter().chain(&test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, items);
    }

    #[test]
    fn split_of_five() {
        let (train, test) = train_test_split(&[1, 2, 3, 4, 5], &SplitSpec::default()).unwrap();
        assert_eq!((train.len(), test.len()), (4, 1));
        assert!(!train.contains(&test[0]));
        assert!(train_test_split(&[1, 2, 3, 4], &SplitSpec::default()).is_err());
    }

    #[test]
    fn split_is_seed_deterministic() {
        let items: Vec<usize> = (0..100).collect();
        let a = train_test_split(
            &items,
            &SplitSpec {
                seed: 3,
                ..Default::default()
            },
        )
        .unwrap();
        let b = train_test_split(
            &items,
            &SplitSpec {
                seed: 3,
                ..Default::default()
            },
        )
        .unwrap();
        let c = train_test_split(
            &items,
            &SplitSpec {
                seed: 4,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        let unshuffled = train_test_split(
            &items,
            &SplitSpec {
                shuffle: false,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(unshuffled.0, (0..80).collect::<Vec<_>>());
    }

    #[test]
    fn fraction_parsing() {
        assert_eq!("4/5".parse::<Fraction>().unwrap(), Fraction { num: 4, den: 5 });
        assert!("5/5".parse::<Fraction>().is_err());
        assert!("0/5".parse::<Fraction>().is_err());
        assert!("0.8".parse::<Fraction>().is_err());
    }

    #[test]
    fn iid_small_case() {
        let l = labels(&[(Label::Neutral, 4)]);
        let parts = partition_iid(&l, 2, 1).unwrap();
        assert_eq!(parts.len(), 2);
        assert!(parts.iter().all(|p| p.len() == 2));
        let mut all: Vec<usize> = parts.iter().flat_map(|p| p.example_indices.clone()).collect();
        all.sort_unstable();
        assert_eq!(all, vec![0, 1, 2, 3]);
        assert!(partition_iid(&l, 5, 1).is_err());
        assert!(partition_iid(&l, 0, 1).is_err());
    }

    #[test]
    fn iid_ten_clients_of_240() {
        let l = labels(&[(Label::Neutral, 1440), (Label::Positive, 672), (Label::Negative, 288)]);
        let parts = partition_iid(&l, 10, 9).unwrap();
        assert!(parts.iter().all(|p| p.len() == 240));
    }

    #[test]
    fn noniid_label_pure_hand_case() {
        let l = labels(&[(Label::Negative, 4), (Label::Neutral, 4), (Label::Positive, 4)]);
        let parts = partition_noniid_shards(&l, 4, 1, 3, 11).unwrap();
        let mut seen_labels = Vec::new();
        for p in &parts {
            assert_eq!(p.len(), 4);
            assert_eq!(p.label_histogram.iter().filter(|&&c| c > 0).count(), 1);
            seen_labels.push(p.label_histogram.iter().position(|&c| c == 4).unwrap());
        }
        seen_labels.sort_unstable();
        assert_eq!(seen_labels, vec![0, 1, 2]);
    }

    #[test]
    fn noniid_shard_remainder_arithmetic() {
        // 2762 train examples cut into 240-shards: 11 shards, 122 left over.
        let l = labels(&[(Label::Neutral, 1657), (Label::Positive, 773), (Label::Negative, 332)]);
        let parts = partition_noniid_shards(&l, 240, 10, 10, 5).unwrap();
        assert!(parts.iter().all(|p| !p.is_empty() && p.len() % 240 == 0));
        assert_eq!(parts.iter().map(|p| p.len()).sum::<usize>(), 11 * 240);
        assert_eq!(unassigned(&parts, l.len()).len(), 2762 - 11 * 240);
    }

    #[test]
    fn noniid_single_client() {
        let l = labels(&[(Label::Neutral, 10)]);
        let parts = partition_noniid_shards(&l, 3, 1, 1, 0).unwrap();
        assert_eq!(parts.len(), 1);
        assert_eq!(parts[0].len(), 3);
    }

    #[test]
    fn noniid_too_few_shards() {
        let l = labels(&[(Label::Neutral, 10)]);
        assert!(partition_noniid_shards(&l, 4, 1, 3, 0).is_err());
    }

    #[test]
    fn tv_distance_bounds() {
        assert_eq!(total_variation(&[5, 0, 0], &[5, 0, 0]), 0.0);
        assert_eq!(total_variation(&[5, 0, 0], &[0, 0, 7]), 1.0);
    }
}
