//! Statistics-driven weight quantizers.
//!
//! Binary Connect thresholds at zero. Ternary and Quaternary Connect derive
//! their cutpoints from the mean `μ` and population standard deviation `σ`
//! of the tensor being quantized, recomputed on every call:
//!
//! | scheme               | cutpoints                     | levels                 |
//! |----------------------|-------------------------------|------------------------|
//! | ternary, normal-like | `−(μ+σ)`, `μ+σ`               | −1, 0, 1               |
//! | ternary, uniform-like| `−(μ+σ/2)`, `μ+σ/2`           | −1, 0, 1               |
//! | quaternary, normal   | `−(μ+σ/4)`, 0, `μ+σ/4`        | −1, −0.5, 0.5, 1       |
//! | quaternary, uniform  | `−(μ+σ/6)`, 0, `μ+σ/6`        | −1, −0.5, 0.5, 1       |
//!
//! A value equal to a cutpoint belongs to the lower interval.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::tensor::{mean_std, Scalar, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
pub enum DistShape {
    #[default]
    NormalLike,
    UniformLike,
}

impl DistShape {
    pub fn name(self) -> &'static str {
        match self {
            DistShape::NormalLike => "normal",
            DistShape::UniformLike => "uniform",
        }
    }
}

impl FromStr for DistShape {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "normal" => Ok(DistShape::NormalLike),
            "uniform" => Ok(DistShape::UniformLike),
            other => Err(Error::Config(format!(
                "unknown distribution shape '{other}' (expected normal|uniform)"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
pub enum QuantScheme {
    #[default]
    FullPrecision,
    BinaryConnect,
    TernaryConnect(DistShape),
    QuaternaryConnect(DistShape),
}

impl QuantScheme {
    /// Parses the short CLI names `fp|bc|tc|qc`; the shape is ignored for
    /// `fp` and `bc`.
    pub fn from_parts(kind: &str, shape: DistShape) -> Result<Self> {
        match kind {
            "fp" => Ok(QuantScheme::FullPrecision),
            "bc" => Ok(QuantScheme::BinaryConnect),
            "tc" => Ok(QuantScheme::TernaryConnect(shape)),
            "qc" => Ok(QuantScheme::QuaternaryConnect(shape)),
            other => Err(Error::Config(format!(
                "unknown quantization scheme '{other}' (expected fp|bc|tc|qc)"
            ))),
        }
    }

    pub fn short_name(self) -> &'static str {
        match self {
            QuantScheme::FullPrecision => "fp",
            QuantScheme::BinaryConnect => "bc",
            QuantScheme::TernaryConnect(_) => "tc",
            QuantScheme::QuaternaryConnect(_) => "qc",
        }
    }

    pub fn shape(self) -> Option<DistShape> {
        match self {
            QuantScheme::TernaryConnect(s) | QuantScheme::QuaternaryConnect(s) => Some(s),
            _ => None,
        }
    }

    /// The set of values a quantized weight can take; `None` for full precision.
    pub fn levels(self) -> Option<&'static [f64]> {
        match self {
            QuantScheme::FullPrecision => None,
            QuantScheme::BinaryConnect => Some(&[-1.0, 1.0]),
            QuantScheme::TernaryConnect(_) => Some(&[-1.0, 0.0, 1.0]),
            QuantScheme::QuaternaryConnect(_) => Some(&[-1.0, -0.5, 0.5, 1.0]),
        }
    }
}

impl fmt::Display for QuantScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.shape() {
            Some(s) => write!(f, "{}-{}", self.short_name(), s.name()),
            None => f.write_str(self.short_name()),
        }
    }
}

/// Partition of the real line into quantization buckets.
///
/// `levels[i]` is assigned to values in `(cutpoints[i-1], cutpoints[i]]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ThresholdSet {
    pub mu: f64,
    pub sigma: f64,
    pub cutpoints: Vec<f64>,
    pub levels: Vec<f64>,
}

impl ThresholdSet {
    fn checked(mu: f64, sigma: f64, cutpoints: Vec<f64>, levels: Vec<f64>) -> Option<Self> {
        debug_assert_eq!(levels.len(), cutpoints.len() + 1);
        let increasing = cutpoints.windows(2).all(|w| w[0] < w[1]);
        increasing.then_some(ThresholdSet {
            mu,
            sigma,
            cutpoints,
            levels,
        })
    }

    /// Level for a single value.
    #[inline]
    pub fn apply(&self, w: f64) -> f64 {
        let idx = self.cutpoints.iter().filter(|&&c| w > c).count();
        self.levels[idx]
    }
}

fn check_sigma(sigma: f64) -> Result<()> {
    if sigma < 0.0 || sigma.is_nan() {
        return Err(Error::Domain(format!("standard deviation must be >= 0, got {sigma}")));
    }
    Ok(())
}

/// Cutpoints for Ternary Connect.
///
/// When `μ + σ/k ≤ 0` the two cutpoints do not increase; the set then
/// degenerates to a single level 0 (this covers every constant tensor).
pub fn ternary_thresholds(mu: f64, sigma: f64, shape: DistShape) -> Result<ThresholdSet> {
    check_sigma(sigma)?;
    let a = match shape {
        DistShape::NormalLike => mu + sigma,
        DistShape::UniformLike => mu + sigma / 2.0,
    };
    Ok(ThresholdSet::checked(mu, sigma, vec![-a, a], vec![-1.0, 0.0, 1.0]).unwrap_or(
        ThresholdSet {
            mu,
            sigma,
            cutpoints: vec![],
            levels: vec![0.0],
        },
    ))
}

/// Cutpoints for Quaternary Connect.
///
/// When `μ + σ/k ≤ 0` the outer levels vanish and values map to ±0.5 by
/// sign, with 0 going to −0.5.
pub fn quaternary_thresholds(mu: f64, sigma: f64, shape: DistShape) -> Result<ThresholdSet> {
    check_sigma(sigma)?;
    let a = match shape {
        DistShape::NormalLike => mu + sigma / 4.0,
        DistShape::UniformLike => mu + sigma / 6.0,
    };
    Ok(
        ThresholdSet::checked(mu, sigma, vec![-a, 0.0, a], vec![-1.0, -0.5, 0.5, 1.0]).unwrap_or(
            ThresholdSet {
                mu,
                sigma,
                cutpoints: vec![0.0],
                levels: vec![-0.5, 0.5],
            },
        ),
    )
}

fn non_empty<T: Scalar>(w: &Tensor<T>) -> Result<()> {
    if w.numel() == 0 {
        return Err(Error::Domain("cannot quantize an empty tensor".into()));
    }
    Ok(())
}

/// Binary Connect: `w ≥ 0 → 1`, otherwise `−1`.
pub fn quantize_bc<T: Scalar>(w: &Tensor<T>) -> Result<Tensor<T>> {
    non_empty(w)?;
    Ok(w.map(|v| if v >= T::zero() { T::one() } else { -T::one() }))
}

/// Applies a threshold set elementwise.
pub fn apply_thresholds<T: Scalar>(w: &Tensor<T>, set: &ThresholdSet) -> Tensor<T> {
    let levels: Vec<T> = set.levels.iter().map(|&l| T::of(l)).collect();
    let cuts = &set.cutpoints;
    w.map(|v| {
        let x = v.f64();
        let idx = cuts.iter().filter(|&&c| x > c).count();
        levels[idx]
    })
}

/// Threshold set used for `w` under `scheme` (fresh statistics). Binary
/// Connect and full precision have none.
pub fn thresholds_for<T: Scalar>(w: &Tensor<T>, scheme: QuantScheme) -> Result<Option<ThresholdSet>> {
    non_empty(w)?;
    match scheme {
        QuantScheme::FullPrecision | QuantScheme::BinaryConnect => Ok(None),
        QuantScheme::TernaryConnect(shape) => {
            let (mu, sigma) = mean_std(w)?;
            ternary_thresholds(mu, sigma, shape).map(Some)
        }
        QuantScheme::QuaternaryConnect(shape) => {
            let (mu, sigma) = mean_std(w)?;
            quaternary_thresholds(mu, sigma, shape).map(Some)
        }
    }
}

/// Ternary Connect with statistics taken from `w` itself.
pub fn quantize_tc<T: Scalar>(w: &Tensor<T>, shape: DistShape) -> Result<Tensor<T>> {
    non_empty(w)?;
    let (mu, sigma) = mean_std(w)?;
    Ok(apply_thresholds(w, &ternary_thresholds(mu, sigma, shape)?))
}

/// Quaternary Connect with statistics taken from `w` itself.
pub fn quantize_qc<T: Scalar>(w: &Tensor<T>, shape: DistShape) -> Result<Tensor<T>> {
    non_empty(w)?;
    let (mu, sigma) = mean_std(w)?;
    Ok(apply_thresholds(w, &quaternary_thresholds(mu, sigma, shape)?))
}

/// Quantizes `w` under `scheme`; full precision returns a copy.
pub fn quantize<T: Scalar>(w: &Tensor<T>, scheme: QuantScheme) -> Result<Tensor<T>> {
    match scheme {
        QuantScheme::FullPrecision => {
            non_empty(w)?;
            Ok(w.clone())
        }
        QuantScheme::BinaryConnect => quantize_bc(w),
        QuantScheme::TernaryConnect(s) => quantize_tc(w, s),
        QuantScheme::QuaternaryConnect(s) => quantize_qc(w, s),
    }
}

/// Quantizes `w` with statistics `(mu, sigma)` supplied by the caller,
/// e.g. pooled over all tensors of one cell.
pub fn quantize_with_stats<T: Scalar>(
    w: &Tensor<T>,
    scheme: QuantScheme,
    mu: f64,
    sigma: f64,
) -> Result<Tensor<T>> {
    non_empty(w)?;
    match scheme {
        QuantScheme::FullPrecision => Ok(w.clone()),
        QuantScheme::BinaryConnect => quantize_bc(w),
        QuantScheme::TernaryConnect(s) => Ok(apply_thresholds(w, &ternary_thresholds(mu, sigma, s)?)),
        QuantScheme::QuaternaryConnect(s) => {
            Ok(apply_thresholds(w, &quaternary_thresholds(mu, sigma, s)?))
        }
    }
}

/// One histogram bin.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Bin {
    pub center: f64,
    pub count: usize,
}

/// Equal-width histogram over `[min(w), max(w)]`.
///
/// The last bin is closed on the right. A constant tensor puts every
/// element in the first bin.
pub fn weight_histogram<T: Scalar>(w: &Tensor<T>, bins: usize) -> Result<Vec<Bin>> {
    if bins < 2 {
        return Err(Error::Config(format!("histogram needs at least 2 bins, got {bins}")));
    }
    non_empty(w)?;
    let lo = w.min().f64();
    let hi = w.max().f64();
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    for v in w.data() {
        let idx = if width > 0.0 {
            (((v.f64() - lo) / width) as usize).min(bins - 1)
        } else {
            0
        };
        counts[idx] += 1;
    }
    Ok(counts
        .into_iter()
        .enumerate()
        .map(|(i, count)| Bin {
            center: lo + width * (i as f64 + 0.5),
            count,
        })
        .collect())
}

/// Writes a histogram as CSV with header `bin_center,count`.
pub fn write_histogram_csv(out: &mut impl Write, bins: &[Bin]) -> std::io::Result<()> {
    writeln!(out, "bin_center,count")?;
    for b in bins {
        writeln!(out, "{},{}", b.center, b.count)?;
    }
    Ok(())
}

/// Fraction of elements equal to each level of `scheme`, in level order.
pub fn level_fractions<T: Scalar>(q: &Tensor<T>, levels: &[f64]) -> Vec<f64> {
    let n = q.numel() as f64;
    levels
        .iter()
        .map(|&l| q.data().iter().filter(|v| v.f64() == l).count() as f64 / n)
        .collect()
}
