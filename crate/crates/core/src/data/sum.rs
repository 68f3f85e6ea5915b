//! The summation task: `"a+b"` strings over a 12-symbol vocabulary.

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

pub const VOCAB: usize = 12;
pub const PLUS: usize = 10;
pub const SPACE: usize = 11;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SumSample {
    /// `"a+b"` left-padded with spaces to `2·max_digits + 1` symbols.
    pub input_ids: Vec<usize>,
    /// Digits of `a + b`, unpadded.
    pub target_ids: Vec<usize>,
}

pub fn symbol_id(c: char) -> Result<usize> {
    match c {
        '0'..='9' => Ok(c as usize - '0' as usize),
        '+' => Ok(PLUS),
        ' ' => Ok(SPACE),
        other => Err(Error::Data(format!("symbol {other:?} is not in the summation vocabulary"))),
    }
}

pub fn id_symbol(id: usize) -> Result<char> {
    match id {
        0..=9 => Ok((b'0' + id as u8) as char),
        PLUS => Ok('+'),
        SPACE => Ok(' '),
        other => Err(Error::Data(format!("id {other} is outside the 12-symbol vocabulary"))),
    }
}

pub fn encode(s: &str) -> Result<Vec<usize>> {
    s.chars().map(symbol_id).collect()
}

pub fn decode(ids: &[usize]) -> Result<String> {
    ids.iter().map(|&i| id_symbol(i)).collect()
}

pub fn input_width(max_digits: usize) -> usize {
    2 * max_digits + 1
}

pub fn target_width(max_digits: usize) -> usize {
    max_digits + 1
}

/// Right-pads a target with spaces to `width` symbols.
pub fn pad_target(ids: &[usize], width: usize) -> Vec<usize> {
    let mut out = ids.to_vec();
    out.resize(width.max(ids.len()), SPACE);
    out
}

impl SumSample {
    pub fn new(a: u64, b: u64, max_digits: usize) -> Result<Self> {
        let expr = format!("{a}+{b}");
        let width = input_width(max_digits);
        if expr.len() > width {
            return Err(Error::Data(format!("'{expr}' does not fit in {width} symbols")));
        }
        Ok(SumSample {
            input_ids: encode(&format!("{expr:>width$}"))?,
            target_ids: encode(&(a + b).to_string())?,
        })
    }

    /// Decodes the operands from the input ids.
    pub fn operands(&self) -> Result<(u64, u64)> {
        let text = decode(&self.input_ids)?;
        let (a, b) = text
            .trim_start()
            .split_once('+')
            .ok_or_else(|| Error::Data(format!("'{text}' is not an a+b expression")))?;
        let parse = |s: &str| {
            s.parse::<u64>()
                .map_err(|_| Error::Data(format!("'{text}' is not an a+b expression")))
        };
        Ok((parse(a)?, parse(b)?))
    }
}

/// `n` samples with operands drawn uniformly from `[0, 10^max_digits)`.
pub fn gen_sum_dataset(n: usize, max_digits: usize, seed: u64) -> Result<Vec<SumSample>> {
    if max_digits == 0 || max_digits > 9 {
        return Err(Error::Config(format!("max_digits must be in 1..=9, got {max_digits}")));
    }
    let bound = 10u64.pow(max_digits as u32);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let a = rng.random_range(0..bound);
            let b = rng.random_range(0..bound);
            SumSample::new(a, b, max_digits)
        })
        .collect()
}

/// One-hot rows `[len(ids) × classes]`.
pub fn one_hot<T: Scalar>(ids: &[usize], classes: usize) -> Result<Tensor<T>> {
    if let Some(bad) = ids.iter().find(|&&i| i >= classes) {
        return Err(Error::Data(format!("id {bad} out of range for {classes} classes")));
    }
    if ids.is_empty() {
        return Err(Error::Data("one_hot of an empty sequence".into()));
    }
    let mut t = Tensor::zeros(&[ids.len(), classes]);
    for (row, &i) in ids.iter().enumerate() {
        t.data_mut()[row * classes + i] = T::one();
    }
    Ok(t)
}

/// One `a+b` expression per line.
pub fn write_sums_to(out: &mut impl Write, samples: &[SumSample]) -> Result<()> {
    for s in samples {
        let (a, b) = s.operands()?;
        writeln!(out, "{a}+{b}").map_err(|e| Error::Data(format!("writing sums: {e}")))?;
    }
    Ok(())
}

pub fn write_sums(path: impl AsRef<Path>, samples: &[SumSample]) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    write_sums_to(&mut buf, samples)?;
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn parse_sums(text: &str, source_name: &str, max_digits: usize) -> Result<Vec<SumSample>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let err = |message: String| Error::Parse {
            source_name: source_name.to_string(),
            location: format!("line {}", i + 1),
            message,
        };
        let (a, b) = line
            .split_once('+')
            .ok_or_else(|| err(format!("'{line}' is not an a+b expression")))?;
        let num = |s: &str| {
            s.parse::<u64>()
                .map_err(|_| err(format!("'{s}' is not a non-negative integer")))
        };
        out.push(SumSample::new(num(a)?, num(b)?, max_digits)?);
    }
    Ok(out)
}

pub fn load_sums(path: impl AsRef<Path>, max_digits: usize) -> Result<Vec<SumSample>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_sums(&text, &path.display().to_string(), max_digits)
}
