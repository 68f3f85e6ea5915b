use proptest::prelude::*;
use qrnn::quantize::{
    level_fractions, quantize, quantize_bc, quantize_qc, quantize_tc, quaternary_thresholds, ternary_thresholds,
    weight_histogram, ThresholdSet,
};
use qrnn::{mean_std, DistShape, QuantScheme, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use statrs::distribution::{ContinuousCDF, Normal};

const SHAPES: [DistShape; 2] = [DistShape::NormalLike, DistShape::UniformLike];

fn all_schemes() -> Vec<QuantScheme> {
    let mut s = vec![QuantScheme::BinaryConnect];
    for sh in SHAPES {
        s.push(QuantScheme::TernaryConnect(sh));
        s.push(QuantScheme::QuaternaryConnect(sh));
    }
    s
}

// Plain two-pass population statistics.
fn stats(w: &[f64]) -> (f64, f64) {
    let n = w.len() as f64;
    let mu = w.iter().sum::<f64>() / n;
    let var = w.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / n;
    (mu, var.sqrt())
}

// Element-by-element reference written straight from the inequality chains.
fn reference(w: &[f64], scheme: QuantScheme) -> Vec<f64> {
    let (mu, sigma) = stats(w);
    w.iter()
        .map(|&x| match scheme {
            QuantScheme::FullPrecision => x,
            QuantScheme::BinaryConnect => {
                if x >= 0.0 {
                    1.0
                } else {
                    -1.0
                }
            }
            QuantScheme::TernaryConnect(shape) => {
                let a = match shape {
                    DistShape::NormalLike => mu + sigma,
                    DistShape::UniformLike => mu + sigma / 2.0,
                };
                if a <= 0.0 {
                    0.0
                } else if x <= -a {
                    -1.0
                } else if x <= a {
                    0.0
                } else {
                    1.0
                }
            }
            QuantScheme::QuaternaryConnect(shape) => {
                let a = match shape {
                    DistShape::NormalLike => mu + sigma / 4.0,
                    DistShape::UniformLike => mu + sigma / 6.0,
                };
                if a <= 0.0 {
                    if x <= 0.0 {
                        -0.5
                    } else {
                        0.5
                    }
                } else if x <= -a {
                    -1.0
                } else if x <= 0.0 {
                    -0.5
                } else if x <= a {
                    0.5
                } else {
                    1.0
                }
            }
        })
        .collect()
}

fn normal_samples(n: usize, seed: u64) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_vec(&[n], (0..n).map(|_| StandardNormal.sample(&mut rng)).collect())
}

#[test]
fn vectorized_matches_scalar_reference_on_random_weights() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let uni = Uniform::new(-2.0, 3.0).unwrap();
    let sets = [
        normal_samples(100_000, 5),
        Tensor::from_vec(&[100_000], (0..100_000).map(|_| uni.sample(&mut rng)).collect()),
    ];
    for w in &sets {
        for scheme in all_schemes() {
            let got = quantize(w, scheme).unwrap();
            let want = reference(w.data(), scheme);
            assert_eq!(got.data(), &want[..], "{scheme}");
        }
    }
}

#[test]
fn f32_path_matches_reference() {
    let w64 = normal_samples(10_000, 9);
    let w32: Tensor<f32> = w64.cast();
    for scheme in all_schemes() {
        let got = quantize(&w32, scheme).unwrap();
        let as64: Vec<f64> = w32.data().iter().map(|&v| v as f64).collect();
        let want = reference(&as64, scheme);
        let got: Vec<f64> = got.data().iter().map(|&v| v as f64).collect();
        assert_eq!(got, want, "{scheme}");
    }
}

fn gaussian_fractions(cuts: &[f64]) -> Vec<f64> {
    let n = Normal::new(0.0, 1.0).unwrap();
    let mut edges = vec![f64::NEG_INFINITY];
    edges.extend_from_slice(cuts);
    edges.push(f64::INFINITY);
    edges.windows(2).map(|e| n.cdf(e[1]) - n.cdf(e[0])).collect()
}

#[test]
fn gaussian_oracle_matches_tabulated_fractions() {
    let tc_n = gaussian_fractions(&[-1.0, 1.0]);
    let tc_u = gaussian_fractions(&[-0.5, 0.5]);
    for (got, want) in tc_n.iter().zip([0.1587, 0.6827, 0.1587]) {
        assert!((got - want).abs() < 1e-4);
    }
    for (got, want) in tc_u.iter().zip([0.3085, 0.3829, 0.3085]) {
        assert!((got - want).abs() < 1e-4);
    }
    let qc_n = gaussian_fractions(&[-0.25, 0.0, 0.25]);
    for (got, want) in qc_n.iter().zip([0.4013, 0.0987, 0.0987, 0.4013]) {
        assert!((got - want).abs() < 1e-4);
    }
}

#[test]
fn level_fractions_on_a_million_gaussian_samples() {
    let w = normal_samples(1_000_000, 2024);
    let (mu, sigma) = mean_std(&w).unwrap();
    let check = |scheme: QuantScheme, cuts: Vec<f64>| {
        let q = quantize(&w, scheme).unwrap();
        let got = level_fractions(&q, scheme.levels().unwrap());
        let want = gaussian_fractions(&cuts);
        for (g, e) in got.iter().zip(&want) {
            assert!((g - e).abs() <= 0.005, "{scheme}: {got:?} vs {want:?}");
        }
        assert!((got.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    };
    check(QuantScheme::BinaryConnect, vec![0.0]);
    let a = mu + sigma;
    check(QuantScheme::TernaryConnect(DistShape::NormalLike), vec![-a, a]);
    let a = mu + sigma / 2.0;
    check(QuantScheme::TernaryConnect(DistShape::UniformLike), vec![-a, a]);
    let a = mu + sigma / 4.0;
    check(QuantScheme::QuaternaryConnect(DistShape::NormalLike), vec![-a, 0.0, a]);
    let a = mu + sigma / 6.0;
    check(QuantScheme::QuaternaryConnect(DistShape::UniformLike), vec![-a, 0.0, a]);
}

#[test]
fn bc_monte_carlo_balance() {
    let w = normal_samples(100_000, 3);
    let q = quantize_bc(&w).unwrap();
    let plus = level_fractions(&q, &[1.0])[0];
    assert!((plus - 0.5).abs() <= 0.01, "{plus}");
}

#[test]
fn tc_normal_histogram_peaks_in_the_middle() {
    let w = normal_samples(50_000, 4);
    let q = quantize_tc(&w, DistShape::NormalLike).unwrap();
    let bins = weight_histogram(&q, 3).unwrap();
    assert!(bins[1].count > bins[0].count && bins[1].count > bins[2].count);
    assert_eq!(bins.iter().map(|b| b.count).sum::<usize>(), 50_000);
}

#[test]
fn bc_histogram_has_two_populated_bins() {
    let w = normal_samples(1000, 8);
    let q = quantize_bc(&w).unwrap();
    for bins in [2, 10, 64] {
        let h = weight_histogram(&q, bins).unwrap();
        assert_eq!(h.iter().filter(|b| b.count > 0).count(), 2);
    }
}

#[test]
fn printed_examples() {
    let w = Tensor::from_vec(&[5], vec![-3.0, -1.0, 0.2, 1.0, 3.0]);
    let set = ternary_thresholds(0.0, 1.0, DistShape::NormalLike).unwrap();
    assert_eq!(qrnn::quantize::apply_thresholds(&w, &set).data(), &[-1.0, -1.0, 0.0, 0.0, 1.0]);
    let w = Tensor::from_vec(&[4], vec![-0.6, -0.4, 0.5, 0.51]);
    let set = ternary_thresholds(0.0, 1.0, DistShape::UniformLike).unwrap();
    assert_eq!(qrnn::quantize::apply_thresholds(&w, &set).data(), &[-1.0, 0.0, 0.0, 1.0]);
    let w = Tensor::from_vec(&[4], vec![-0.3, -0.1, 0.1, 0.3]);
    let set = quaternary_thresholds(0.0, 1.0, DistShape::NormalLike).unwrap();
    assert_eq!(qrnn::quantize::apply_thresholds(&w, &set).data(), &[-1.0, -0.5, 0.5, 1.0]);
    assert_eq!(set.apply(0.0), -0.5);
    let u = quaternary_thresholds(0.0, 1.0, DistShape::UniformLike).unwrap();
    assert_eq!(u.cutpoints, vec![-1.0 / 6.0, 0.0, 1.0 / 6.0]);
    let w = Tensor::from_vec(&[2], vec![-5.0, 5.0]);
    assert_eq!(quantize(&w, QuantScheme::BinaryConnect).unwrap().data(), &[-1.0, 1.0]);
}

#[test]
fn constant_tensors_are_degenerate_but_total() {
    for c in [-2.0, 0.0, 3.5] {
        let w = Tensor::full(&[7], c);
        assert!(quantize_tc(&w, DistShape::NormalLike).unwrap().data().iter().all(|&v| v == 0.0));
        let want = if c > 0.0 { 0.5 } else { -0.5 };
        assert!(quantize_qc(&w, DistShape::UniformLike).unwrap().data().iter().all(|&v| v == want));
    }
}

#[test]
fn empty_tensors_cannot_reach_a_quantizer() {
    assert!(Tensor::<f64>::new(&[0], vec![]).is_err());
}

fn scheme_strategy() -> impl Strategy<Value = QuantScheme> {
    prop::sample::select(all_schemes())
}

fn finite() -> impl Strategy<Value = f64> {
    prop_oneof![
        -10.0..10.0f64,
        Just(0.0),
        Just(-0.0),
        Just(f64::MIN_POSITIVE / 4.0),
        Just(-f64::MIN_POSITIVE / 4.0),
        -1e150..1e150f64,
    ]
}

fn threshold_set(scheme: QuantScheme, mu: f64, sigma: f64) -> Option<ThresholdSet> {
    match scheme {
        QuantScheme::TernaryConnect(s) => Some(ternary_thresholds(mu, sigma, s).unwrap()),
        QuantScheme::QuaternaryConnect(s) => Some(quaternary_thresholds(mu, sigma, s).unwrap()),
        _ => None,
    }
}

proptest! {
    #[test]
    fn codomain_and_shape(scheme in scheme_strategy(), w in prop::collection::vec(finite(), 1..64)) {
        let n = w.len();
        let t = Tensor::from_vec(&[n], w);
        let q = quantize(&t, scheme).unwrap();
        prop_assert_eq!(q.shape(), t.shape());
        let levels = scheme.levels().unwrap();
        prop_assert!(q.data().iter().all(|v| levels.contains(v)));
    }

    #[test]
    fn matrix_shape_is_preserved(scheme in scheme_strategy(), r in 1usize..6, c in 1usize..6, seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = Tensor::from_vec(&[r, c], (0..r * c).map(|_| StandardNormal.sample(&mut rng)).collect::<Vec<f64>>());
        let q = quantize(&t, scheme).unwrap();
        prop_assert_eq!(q.shape(), &[r, c]);
    }

    #[test]
    fn monotone_under_a_fixed_set(
        scheme in scheme_strategy(),
        mu in -1.0..1.0f64,
        sigma in 0.0..3.0f64,
        a in finite(),
        b in finite(),
    ) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        match threshold_set(scheme, mu, sigma) {
            Some(set) => prop_assert!(set.apply(lo) <= set.apply(hi)),
            None => {
                let q = quantize_bc(&Tensor::from_vec(&[2], vec![lo, hi])).unwrap();
                prop_assert!(q.data()[0] <= q.data()[1]);
            }
        }
    }

    #[test]
    fn partition_is_total_with_lower_inclusive_boundaries(scheme in scheme_strategy(), mu in -1.0..1.0f64, sigma in 0.0..3.0f64) {
        if let Some(set) = threshold_set(scheme, mu, sigma) {
            prop_assert_eq!(set.levels.len(), set.cutpoints.len() + 1);
            prop_assert!(set.cutpoints.windows(2).all(|w| w[0] < w[1]));
            for (i, &c) in set.cutpoints.iter().enumerate() {
                prop_assert_eq!(set.apply(c), set.levels[i]);
                prop_assert_eq!(set.apply(c + c.abs().max(1.0) * 1e-9), set.levels[i + 1]);
            }
        }
    }

    #[test]
    fn bc_is_scale_invariant(w in prop::collection::vec(finite(), 1..64), alpha in 1e-6..1e6f64) {
        let n = w.len();
        let t = Tensor::from_vec(&[n], w.clone());
        let s = Tensor::from_vec(&[n], w.iter().map(|x| x * alpha).collect());
        prop_assert_eq!(quantize_bc(&t).unwrap(), quantize_bc(&s).unwrap());
    }

    #[test]
    fn statistics_follow_mutation(seed in 0u64..500, shift in 0.5..3.0f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut t = Tensor::from_vec(&[32], (0..32).map(|_| StandardNormal.sample(&mut rng)).collect::<Vec<f64>>());
        let before = qrnn::quantize::thresholds_for(&t, QuantScheme::TernaryConnect(DistShape::NormalLike)).unwrap().unwrap();
        for v in t.data_mut() {
            *v += shift;
        }
        let after = qrnn::quantize::thresholds_for(&t, QuantScheme::TernaryConnect(DistShape::NormalLike)).unwrap().unwrap();
        prop_assert!((after.mu - before.mu - shift).abs() < 1e-9);
        prop_assert!(after.cutpoints != before.cutpoints);
    }
}
