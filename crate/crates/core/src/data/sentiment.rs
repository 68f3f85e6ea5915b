//! Pre-tokenized sentiment corpora.
//!
//! On disk a corpus is one record per line: a label digit, a tab, then
//! space-separated integer token ids.

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Zipf};

use crate::error::{Error, Result};

pub const PAD: usize = 0;
pub const START: usize = 1;
pub const OOV: usize = 2;
/// Ids below this are reserved markers.
pub const FIRST_WORD: usize = 4;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SentimentSample {
    pub token_ids: Vec<usize>,
    pub label: u8,
}

pub fn parse_sentiment(text: &str, source_name: &str) -> Result<Vec<SentimentSample>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            source_name: source_name.to_string(),
            location: format!("line {lineno}"),
            message,
        };
        let (label, tokens) = line
            .split_once('\t')
            .ok_or_else(|| parse_err("expected '<label>\\t<ids>'".into()))?;
        let label: u32 = label
            .trim()
            .parse()
            .map_err(|_| parse_err(format!("label '{label}' is not an integer")))?;
        if label > 1 {
            return Err(Error::Data(format!("{source_name} line {lineno}: label {label} is not 0 or 1")));
        }
        let token_ids = tokens
            .split_ascii_whitespace()
            .map(|t| {
                t.parse::<usize>()
                    .map_err(|_| parse_err(format!("token '{t}' is not a non-negative integer")))
            })
            .collect::<Result<Vec<_>>>()?;
        out.push(SentimentSample {
            token_ids,
            label: label as u8,
        });
    }
    Ok(out)
}

pub fn load_sentiment(path: impl AsRef<Path>) -> Result<Vec<SentimentSample>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_sentiment(&text, &path.display().to_string())
}

pub fn write_sentiment_to(out: &mut impl Write, samples: &[SentimentSample]) -> std::io::Result<()> {
    for s in samples {
        write!(out, "{}\t", s.label)?;
        for (i, t) in s.token_ids.iter().enumerate() {
            if i > 0 {
                out.write_all(b" ")?;
            }
            write!(out, "{t}")?;
        }
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn write_sentiment(path: impl AsRef<Path>, samples: &[SentimentSample]) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    write_sentiment_to(&mut buf, samples).expect("writing to memory");
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

/// Replaces ids `≥ max_features` by [`OOV`], keeps the last `maxlen`
/// tokens and pre-pads with [`PAD`] to exactly `maxlen`.
pub fn preprocess(samples: &[SentimentSample], max_features: usize, maxlen: usize) -> Result<Vec<SentimentSample>> {
    if max_features <= OOV {
        return Err(Error::Config(format!("max_features must exceed {OOV}, got {max_features}")));
    }
    if maxlen == 0 {
        return Err(Error::Config("maxlen must be at least 1".into()));
    }
    Ok(samples
        .iter()
        .map(|s| {
            let tail = &s.token_ids[s.token_ids.len().saturating_sub(maxlen)..];
            let mut ids = vec![PAD; maxlen - tail.len()];
            ids.extend(tail.iter().map(|&t| if t >= max_features { OOV } else { t }));
            SentimentSample {
                token_ids: ids,
                label: s.label,
            }
        })
        .collect())
}

/// Parameters of the synthetic review generator.
///
/// Documents are Zipf-distributed filler words sprinkled with polar words.
/// Each polar word agrees with the document label with probability
/// `polar_agreement`; a negation token before a word flips its polarity.
/// A fraction of labels is flipped outright, which caps attainable
/// accuracy below 1.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticCorpus {
    pub vocab: usize,
    pub zipf_exponent: f64,
    pub polar_words: usize,
    pub polar_rate: f64,
    pub polar_agreement: f64,
    pub negation_rate: f64,
    pub label_noise: f64,
    pub min_len: usize,
    pub max_len: usize,
}

impl Default for SyntheticCorpus {
    fn default() -> Self {
        SyntheticCorpus {
            vocab: 30_000,
            zipf_exponent: 1.05,
            polar_words: 400,
            polar_rate: 0.16,
            polar_agreement: 0.75,
            negation_rate: 0.2,
            label_noise: 0.04,
            min_len: 60,
            max_len: 400,
        }
    }
}

impl SyntheticCorpus {
    /// Negation marker; a frequent word.
    pub const NOT: usize = FIRST_WORD + 7;

    fn polar_id(&self, positive: bool, k: usize) -> usize {
        // Polar words interleave through ranks 40.. so that both classes
        // have the same frequency profile.
        FIRST_WORD + 40 + 2 * k + usize::from(!positive)
    }

    /// `n` documents with balanced labels, deterministic in `seed`.
    pub fn generate(&self, n: usize, seed: u64) -> Result<Vec<SentimentSample>> {
        let needed = FIRST_WORD + 40 + 2 * self.polar_words;
        if self.vocab <= needed || self.min_len == 0 || self.min_len > self.max_len {
            return Err(Error::Config("inconsistent synthetic corpus parameters".into()));
        }
        let zipf = Zipf::new((self.vocab - FIRST_WORD) as f64, self.zipf_exponent)
            .map_err(|e| Error::Config(format!("zipf: {e}")))?;
        let polar_zipf = Zipf::new(self.polar_words as f64, 0.8).map_err(|e| Error::Config(format!("zipf: {e}")))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            let label = (i % 2) as u8;
            let len = rng.random_range(self.min_len..=self.max_len);
            let mut ids = Vec::with_capacity(len + 1);
            ids.push(START);
            while ids.len() <= len {
                if rng.random_bool(self.polar_rate) {
                    let agree = rng.random_bool(self.polar_agreement);
                    let mut positive = (label == 1) == agree;
                    if rng.random_bool(self.negation_rate) {
                        ids.push(Self::NOT);
                        positive = !positive;
                    }
                    let k = polar_zipf.sample(&mut rng) as usize - 1;
                    ids.push(self.polar_id(positive, k));
                } else {
                    let r = zipf.sample(&mut rng) as usize - 1;
                    let mut id = FIRST_WORD + r;
                    // Filler never collides with polar or negation ids.
                    if id == Self::NOT || (FIRST_WORD + 40..needed).contains(&id) {
                        id = needed + (r % (self.vocab - needed));
                    }
                    ids.push(id);
                }
            }
            let label = if rng.random_bool(self.label_noise) { 1 - label } else { label };
            out.push(SentimentSample { token_ids: ids, label });
        }
        // Interleaved labels would let a model key on position in the batch.
        let mut order: Vec<usize> = (0..n).collect();
        rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut rng);
        Ok(order.into_iter().map(|k| out[k].clone()).collect())
    }
}
