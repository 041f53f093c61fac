//! Synthetic financial-news sentences with a fixed class mix.
//!
//! Sentences are assembled from templates: a company, a metric, a cue phrase
//! for the class, a period and some filler. All three classes share the
//! template, so the class is carried by the cue phrase alone; each class has
//! forty cues drawn with Zipf-like frequencies, so a few cues are common
//! and most are rare. A small fraction of
//! sentences also borrows a cue from another class.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Label, RawExample};
use crate::error::{Error, Result};
use crate::rng;

/// Class shares in per-mille: negative, neutral, positive.
pub const DEFAULT_MIX_PER_MILLE: [u32; 3] = [120, 600, 280];

const COMPANIES: &[&str] = &[
    "Nokia",
    "Fiskars",
    "Stora Enso",
    "UPM-Kymmene",
    "Kone",
    "Elisa",
    "Outokumpu",
    "Wartsila",
    "Sampo",
    "Orion",
    "Tieto",
    "Metso",
    "Ramirent",
    "Aspo",
    "Componenta",
    "Raisio",
    "Finnair",
    "Alma Media",
    "Cargotec",
    "YIT",
    "Konecranes",
    "Uponor",
    "Kesko",
    "Stockmann",
];

const METRICS: &[&str] = &[
    "net sales",
    "operating profit",
    "earnings per share",
    "net profit",
    "revenue",
    "order intake",
    "cash flow",
    "profit before taxes",
    "EBITDA",
    "market share",
];

const PERIODS: &[&str] = &[
    "in the third quarter",
    "for the first half of 2008",
    "in 2009",
    "in the reporting period",
    "compared with the previous year",
    "in January-March",
    "year-on-year",
    "in the fourth quarter",
];

const POSITIVE_CUES: &[&str] = &[
    "rose",
    "increased",
    "grew",
    "improved",
    "climbed",
    "surged",
    "doubled",
    "jumped",
    "soared",
    "advanced",
    "strengthened",
    "expanded",
    "accelerated",
    "recovered",
    "rebounded",
    "tripled",
    "beat expectations",
    "hit a record high",
    "exceeded forecasts",
    "outperformed the market",
    "posted solid growth",
    "showed strong gains",
    "gained",
    "boomed",
    "picked up",
    "went up",
    "was up sharply",
    "rallied",
    "topped estimates",
    "reached an all-time high",
    "more than doubled",
    "grew significantly",
    "rose markedly",
    "improved substantially",
    "increased considerably",
    "turned to a profit",
    "returned to growth",
    "outpaced rivals",
    "swelled",
    "skyrocketed",
];

const NEGATIVE_CUES: &[&str] = &[
    "fell",
    "decreased",
    "dropped",
    "declined",
    "plunged",
    "weakened",
    "slumped",
    "deteriorated",
    "shrank",
    "tumbled",
    "sank",
    "collapsed",
    "contracted",
    "halved",
    "slipped",
    "eroded",
    "missed forecasts",
    "turned to a loss",
    "fell short of expectations",
    "hit a record low",
    "went down",
    "was down sharply",
    "came under pressure",
    "disappointed analysts",
    "underperformed the market",
    "posted a loss",
    "showed weak demand",
    "lagged behind",
    "dived",
    "crashed",
    "retreated",
    "slowed",
    "softened",
    "dwindled",
    "plummeted",
    "nosedived",
    "worsened",
    "faltered",
    "stagnated",
    "diminished",
];

const NEUTRAL_CUES: &[&str] = &[
    "was reported",
    "totalled",
    "amounted to",
    "was published",
    "will be disclosed",
    "is calculated",
    "stood at",
    "was recorded",
    "is presented",
    "was announced",
    "is included",
    "will be reported",
    "was booked",
    "is specified",
    "was restated",
    "is estimated",
    "is shown",
    "was itemized",
    "is broken down",
    "was audited",
    "is reviewed",
    "was compiled",
    "is summarized",
    "was filed",
    "will be announced",
    "is measured",
    "was tabulated",
    "is accounted for",
    "was allocated",
    "is disclosed separately",
    "was consolidated",
    "is reported quarterly",
    "was documented",
    "is listed",
    "was registered",
    "is described",
    "was categorized",
    "is itemized below",
    "was communicated",
    "is defined",
];

const NEUTRAL_CLAUSES: &[&str] = &[
    "will publish its interim report on Thursday",
    "is headquartered in Helsinki",
    "appointed a new chief financial officer",
    "operates in 30 countries",
    "signed a distribution agreement",
    "held its annual general meeting",
    "employs about 5,000 people",
    "is listed on the Helsinki stock exchange",
    "announced the date of its capital markets day",
    "completed the previously announced transfer of shares",
    "will hold a conference call for analysts",
    "changed the composition of its management team",
];

const FILLER: &[&str] = &[
    "the company said",
    "according to the statement",
    "in a stock exchange release",
    "the group reported",
    "it said on Tuesday",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub size: usize,
    pub seed: u64,
    /// Per-mille probability that a sentence also carries a cue of a different class.
    pub confusion_per_mille: u32,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            size: 3000,
            seed: 0,
            confusion_per_mille: 100,
        }
    }
}

/// Exact per-class counts for `size` examples under the 12/60/28 mix; the
/// neutral class absorbs rounding.
pub fn class_counts(size: usize) -> [usize; 3] {
    let share = |pm: u32| (size * pm as usize + 500) / 1000;
    let neg = share(DEFAULT_MIX_PER_MILLE[0]);
    let pos = share(DEFAULT_MIX_PER_MILLE[2]);
    [neg, size - neg - pos, pos]
}

pub fn generate(cfg: &SynthConfig) -> Result<Vec<RawExample>> {
    if cfg.size == 0 {
        return Err(Error::invalid("synthetic corpus size must be at least 1"));
    }
    if cfg.confusion_per_mille > 1000 {
        return Err(Error::invalid("confusion_per_mille must be at most 1000"));
    }
    let mut rng = rng::seeded(cfg.seed);
    let counts = class_counts(cfg.size);
    let mut labels: Vec<Label> = Label::ALL
        .iter()
        .zip(counts)
        .flat_map(|(&l, n)| std::iter::repeat_n(l, n))
        .collect();
    labels.shuffle(&mut rng);

    Ok(labels
        .into_iter()
        .enumerate()
        .map(|(id, label)| {
            let confuse = rng.random_range(0..1000) < cfg.confusion_per_mille;
            RawExample {
                id,
                text: sentence(label, confuse, &mut rng),
                label,
            }
        })
        .collect())
}

fn pick<'a, R: Rng>(rng: &mut R, xs: &[&'a str]) -> &'a str {
    xs.choose(rng).copied().unwrap_or_default()
}

/// Cue `i` of a class is drawn with weight `1 / (i + 1)`: a few common cues
/// and a long tail of rare ones.
fn cue<R: Rng>(label: Label, rng: &mut R) -> &'static str {
    let cues = match label {
        Label::Positive => POSITIVE_CUES,
        Label::Negative => NEGATIVE_CUES,
        Label::Neutral => NEUTRAL_CUES,
    };
    let total: f64 = (1..=cues.len()).map(|r| 1.0 / r as f64).sum();
    let mut u = rng.random::<f64>() * total;
    for (i, c) in cues.iter().enumerate() {
        u -= 1.0 / (i + 1) as f64;
        if u <= 0.0 {
            return c;
        }
    }
    cues[cues.len() - 1]
}

fn sentence<R: Rng>(label: Label, confuse: bool, rng: &mut R) -> String {
    let company = pick(rng, COMPANIES);
    let mut s = if label == Label::Neutral && rng.random_bool(0.2) {
        format!("{company} {}", pick(rng, NEUTRAL_CLAUSES))
    } else {
        format!(
            "{company} 's {} {} {}",
            pick(rng, METRICS),
            cue(label, rng),
            pick(rng, PERIODS)
        )
    };
    if confuse {
        let others: Vec<Label> = Label::ALL.iter().copied().filter(|&l| l != label).collect();
        let other = *others.choose(rng).expect("two other classes");
        s = format!("{s} while {} {}", pick(rng, METRICS), cue(other, rng));
    }
    if rng.random_bool(0.5) {
        s = format!("{s} , {}", pick(rng, FILLER));
    }
    s.push_str(" .");
    s
}
