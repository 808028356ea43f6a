//! Top-p (nucleus) filtering.
//!
//! [`top_p_filter_vulnerable`] follows the textbook implementation: it
//! collects the out-of-nucleus indices and then runs a removal loop whose
//! trip count equals the number of removed tokens, which reveals the
//! nucleus size to anyone who can count loop iterations.
//! [`top_p_filter_mitigated`] always runs exactly `|vocab|` iterations and
//! masks logits arithmetically, with no branch or index list depending on
//! the comparison outcome.

pub mod bench;

use std::cmp::Ordering;

use rand::Rng;

use crate::error::{Error, Result};
use crate::model::Distribution;
use crate::scalar::Scalar;

/// Ranking order used everywhere: descending probability, ties by
/// ascending token id.
#[inline]
pub(crate) fn rank_cmp<S: PartialOrd>(a: (S, u32), b: (S, u32)) -> Ordering {
    b.0.partial_cmp(&a.0)
        .unwrap_or(Ordering::Equal)
        .then(a.1.cmp(&b.1))
}

/// Token ids sorted by descending value, ties by ascending id.
pub fn descending_order<S: Scalar>(values: &[S]) -> Vec<u32> {
    let mut ids: Vec<u32> = (0..values.len() as u32).collect();
    ids.sort_unstable_by(|&a, &b| rank_cmp((values[a as usize], a), (values[b as usize], b)));
    ids
}

/// Numerically stable softmax.
pub fn softmax<S: Scalar>(logits: &[S]) -> Vec<S> {
    let max = logits.iter().copied().fold(S::neg_infinity(), S::max);
    let mut out: Vec<S> = logits.iter().map(|&l| (l - max).exp()).collect();
    let total = out.iter().fold(S::zero(), |acc, &x| acc + x);
    for x in &mut out {
        *x = *x / total;
    }
    out
}

/// Cumulative probability as seen by the `> p` comparison.
///
/// Normalization drift can push a running sum a hair above 1; clamping keeps
/// `p = 1` from ever removing a token.
#[inline(always)]
pub fn clamp_cumulative<S: Scalar>(running: S) -> S {
    running.min(S::one())
}

/// Clamped cumulative sums of probabilities taken in the given order.
pub fn cumulative<S: Scalar>(sorted_probs: impl IntoIterator<Item = S>) -> Vec<S> {
    let mut running = S::zero();
    sorted_probs
        .into_iter()
        .map(|p| {
            running = running + p;
            clamp_cumulative(running)
        })
        .collect()
}

pub(crate) fn check_logits<S: Scalar>(logits: &[S]) -> Result<()> {
    if logits.is_empty() {
        return Err(Error::Validation("logits are empty".into()));
    }
    if let Some((i, l)) = logits.iter().enumerate().find(|(_, l)| !l.is_finite()) {
        return Err(Error::Validation(format!(
            "logit {l} at index {i} is not finite"
        )));
    }
    Ok(())
}

fn check_p<S: Scalar>(p: S) -> Result<()> {
    if !(p > S::zero() && p <= S::one()) {
        return Err(Error::Usage(format!("p must be in (0, 1], got {p}")));
    }
    Ok(())
}

/// Number of sorted positions whose cumulative probability is `<= p`.
///
/// This is the literal rule of the leaking filter, so it can be 0 when the
/// top token alone exceeds `p`.
pub fn nucleus_size(dist: &Distribution, p: f64) -> Result<u32> {
    check_p(p)?;
    Ok(nucleus_size_unchecked(dist, p))
}

pub(crate) fn nucleus_size_unchecked(dist: &Distribution, p: f64) -> u32 {
    let mut running = 0.0;
    let mut size = 0;
    for prob in dist.sorted_probs() {
        running += prob;
        if clamp_cumulative(running) <= p {
            size += 1;
        }
    }
    size
}

/// Filter mode.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Variant {
    Vulnerable,
    Mitigated,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Vulnerable => "vulnerable",
            Variant::Mitigated => "mitigated",
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vulnerable" => Ok(Variant::Vulnerable),
            "mitigated" => Ok(Variant::Mitigated),
            _ => Err(Error::Usage(format!("unknown filter variant {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FilterOutcome {
    /// Ids whose logits stayed finite, ascending.
    pub kept_ids: Vec<u32>,
    pub removed_count: usize,
    /// Trip count of the removal loop.
    pub removal_loop_iterations: usize,
    pub nucleus_size: usize,
}

/// Sort order and cumulative probabilities shared by both filters.
#[derive(Clone, Debug)]
pub struct FilterPlan<S> {
    indices: Vec<u32>,
    cum_probs: Vec<S>,
}

impl<S: Scalar> FilterPlan<S> {
    pub fn new(logits: &[S]) -> Result<Self> {
        check_logits(logits)?;
        let probs = softmax(logits);
        let indices = descending_order(&probs);
        let cum_probs = cumulative(indices.iter().map(|&i| probs[i as usize]));
        Ok(FilterPlan { indices, cum_probs })
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// The `not_in_p` list of the leaking filter.
    pub fn removals(&self, p: S) -> Vec<u32> {
        let mut not_in_p = Vec::new();
        for (i, &c) in self.cum_probs.iter().enumerate() {
            if c > p {
                not_in_p.push(self.indices[i]);
            }
        }
        not_in_p
    }
}

/// Removal loop of the leaking filter: one iteration per removed token.
#[inline(never)]
pub fn remove_listed<S: Scalar>(logits: &mut [S], not_in_p: &[u32]) -> usize {
    let mut iterations = 0;
    for &i in not_in_p {
        logits[i as usize] = S::neg_infinity();
        iterations += 1;
    }
    iterations
}

/// Constant-trip-count removal loop.
///
/// `z` is `MAX * 2 = inf` when the cumulative probability exceeds `p` and
/// `0` otherwise; subtracting it leaves in-nucleus logits untouched and
/// sends the rest to `-inf`.
#[inline(never)]
pub fn remove_masked<S: Scalar>(logits: &mut [S], plan: &FilterPlan<S>, p: S) -> usize {
    let two = S::one() + S::one();
    let mut iterations = 0;
    for (&idx, &c) in plan.indices.iter().zip(&plan.cum_probs) {
        let z = S::indicator(c > p) * S::max_value() * two;
        let slot = &mut logits[idx as usize];
        *slot = *slot - z;
        iterations += 1;
    }
    iterations
}

fn outcome<S: Scalar>(filtered: &[S], iterations: usize) -> FilterOutcome {
    let kept_ids: Vec<u32> = filtered
        .iter()
        .enumerate()
        .filter(|(_, l)| l.is_finite())
        .map(|(i, _)| i as u32)
        .collect();
    let nucleus_size = kept_ids.len();
    FilterOutcome {
        kept_ids,
        removed_count: filtered.len() - nucleus_size,
        removal_loop_iterations: iterations,
        nucleus_size,
    }
}

pub fn top_p_filter_vulnerable<S: Scalar>(logits: &[S], p: S) -> Result<(Vec<S>, FilterOutcome)> {
    check_p(p)?;
    let plan = FilterPlan::new(logits)?;
    let not_in_p = plan.removals(p);
    let mut out = logits.to_vec();
    let iterations = remove_listed(&mut out, &not_in_p);
    let o = outcome(&out, iterations);
    Ok((out, o))
}

pub fn top_p_filter_mitigated<S: Scalar>(logits: &[S], p: S) -> Result<(Vec<S>, FilterOutcome)> {
    check_p(p)?;
    let plan = FilterPlan::new(logits)?;
    let mut out = logits.to_vec();
    let iterations = remove_masked(&mut out, &plan, p);
    let o = outcome(&out, iterations);
    Ok((out, o))
}

pub fn top_p_filter<S: Scalar>(
    variant: Variant,
    logits: &[S],
    p: S,
) -> Result<(Vec<S>, FilterOutcome)> {
    match variant {
        Variant::Vulnerable => top_p_filter_vulnerable(logits, p),
        Variant::Mitigated => top_p_filter_mitigated(logits, p),
    }
}

/// Draws a token proportionally to the softmax over the finite logits.
pub fn multinomial_sample<S: Scalar, R: Rng + ?Sized>(logits: &[S], rng: &mut R) -> Result<u32> {
    let max = logits
        .iter()
        .copied()
        .filter(|l| l.is_finite())
        .fold(S::neg_infinity(), S::max);
    if !max.is_finite() {
        return Err(Error::Internal("no finite logit to sample from".into()));
    }
    let weights: Vec<f64> = logits
        .iter()
        .map(|&l| {
            if l.is_finite() {
                (l - max).exp().as_f64()
            } else {
                0.0
            }
        })
        .collect();
    let total: f64 = weights.iter().sum();
    let mut target = rng.random::<f64>() * total;
    let mut last = 0;
    for (i, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            last = i;
            if target < w {
                return Ok(i as u32);
            }
            target -= w;
        }
    }
    Ok(last as u32)
}

/// Filters and samples one token. If the literal filter removed everything,
/// the top-ranked token is restored before sampling; the returned outcome
/// still reports the literal nucleus size.
pub fn sample_next<S: Scalar, R: Rng + ?Sized>(
    variant: Variant,
    logits: &[S],
    p: S,
    rng: &mut R,
) -> Result<(u32, FilterOutcome)> {
    let (mut filtered, outcome) = top_p_filter(variant, logits, p)?;
    if outcome.nucleus_size == 0 {
        let top = descending_order(&softmax(logits))[0] as usize;
        filtered[top] = logits[top];
    }
    Ok((multinomial_sample(&filtered, rng)?, outcome))
}

/// Argmax with ties to the lowest id.
pub fn greedy<S: Scalar>(logits: &[S]) -> Result<u32> {
    check_logits(logits)?;
    Ok(descending_order(logits)[0])
}

/// Sampling from the unfiltered distribution.
pub fn pure_sample<S: Scalar, R: Rng + ?Sized>(logits: &[S], rng: &mut R) -> Result<u32> {
    check_logits(logits)?;
    multinomial_sample(logits, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn logits_of(probs: &[f64]) -> Vec<f64> {
        probs.iter().map(|p| p.ln()).collect()
    }

    #[test]
    fn nucleus_size_examples() {
        let d = Distribution::from_probs(vec![0.5, 0.3, 0.15, 0.05]).unwrap();
        assert_eq!(nucleus_size(&d, 0.9).unwrap(), 2);
        assert_eq!(nucleus_size(&d, 1.0).unwrap(), 4);
        let single = Distribution::from_probs(vec![1.0]).unwrap();
        assert_eq!(nucleus_size(&single, 0.9).unwrap(), 0);
        assert!(matches!(nucleus_size(&d, 0.0), Err(Error::Usage(_))));
        assert!(matches!(nucleus_size(&d, 1.5), Err(Error::Usage(_))));
    }

    #[test]
    fn p_one_keeps_everything_despite_drift() {
        // sums to 1.0000000000000002 in f64
        let probs = vec![0.7314682766017807, 0.26853172339821946];
        assert!(probs[0] + probs[1] > 1.0);
        let d = Distribution::from_probs(probs.clone()).unwrap();
        assert_eq!(nucleus_size(&d, 1.0).unwrap(), 2);
        let (out, o) = top_p_filter_vulnerable(&logits_of(&probs), 1.0).unwrap();
        assert_eq!(o.removal_loop_iterations, 0);
        assert_eq!(out, logits_of(&probs));
    }

    #[test]
    fn vulnerable_example() {
        let logits = logits_of(&[0.15, 0.5, 0.05, 0.3]);
        let (out, o) = top_p_filter_vulnerable(&logits, 0.9).unwrap();
        assert_eq!(o.kept_ids, vec![1, 3]);
        assert_eq!(o.removal_loop_iterations, 2);
        assert_eq!(o.removed_count, 2);
        assert_eq!(o.nucleus_size, 2);
        assert_eq!(out[0], f64::NEG_INFINITY);
        assert_eq!(out[1], logits[1]);
    }

    #[test]
    fn uniform_eight_tokens() {
        let logits = vec![0.0f64; 8];
        let (_, o) = top_p_filter_vulnerable(&logits, 0.9).unwrap();
        assert_eq!(o.nucleus_size, 7);
        assert_eq!(o.removal_loop_iterations, 1);
        assert_eq!(o.kept_ids, (0..7).collect::<Vec<_>>());
    }

    #[test]
    fn mitigated_example() {
        let logits = logits_of(&[0.5, 0.3, 0.15, 0.05]);
        let (out_m, m) = top_p_filter_mitigated(&logits, 0.9).unwrap();
        let (out_v, v) = top_p_filter_vulnerable(&logits, 0.9).unwrap();
        assert_eq!(m.kept_ids, v.kept_ids);
        assert_eq!(m.removal_loop_iterations, 4);
        assert_eq!(out_m, out_v);
        let (unchanged, m1) = top_p_filter_mitigated(&logits, 1.0).unwrap();
        assert_eq!(unchanged, logits);
        assert_eq!(m1.removal_loop_iterations, 4);
    }

    #[test]
    fn mitigated_works_in_f32() {
        let logits: Vec<f32> = vec![2.0, 1.0, 0.5, -3.0, 0.0];
        let (out, m) = top_p_filter_mitigated(&logits, 0.8f32).unwrap();
        let (_, v) = top_p_filter_vulnerable(&logits, 0.8f32).unwrap();
        assert_eq!(m.kept_ids, v.kept_ids);
        assert!(out.iter().all(|l| l.is_finite() || *l == f32::NEG_INFINITY));
    }

    #[test]
    fn non_finite_logits_rejected() {
        assert!(matches!(
            top_p_filter_vulnerable(&[0.0, f64::INFINITY], 0.9),
            Err(Error::Validation(_))
        ));
        assert!(matches!(
            top_p_filter_mitigated(&[f64::NAN, 0.0], 0.9),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn sampling_single_and_seeded() {
        let logits = [f64::NEG_INFINITY, 0.3, f64::NEG_INFINITY];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            assert_eq!(multinomial_sample(&logits, &mut rng).unwrap(), 1);
        }
        let wide = [0.1, 0.2, 0.3, 0.4];
        let a = multinomial_sample(&wide, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = multinomial_sample(&wide, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
        assert!(matches!(
            multinomial_sample(&[f64::NEG_INFINITY; 2], &mut rng),
            Err(Error::Internal(_))
        ));
    }

    #[test]
    fn sampling_two_equal_logits_is_fair() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let n = 100_000;
        let ones = (0..n)
            .filter(|_| multinomial_sample(&[1.0, 1.0], &mut rng).unwrap() == 1)
            .count();
        let freq = ones as f64 / n as f64;
        // binomial sd = 0.0016; 0.01 is > 6 sd
        assert!((freq - 0.5).abs() < 0.01, "{freq}");
    }

    #[test]
    fn empty_nucleus_is_clamped_for_sampling() {
        let logits = logits_of(&[0.95, 0.05]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (tok, o) = sample_next(Variant::Mitigated, &logits, 0.9, &mut rng).unwrap();
        assert_eq!(o.nucleus_size, 0);
        assert_eq!(tok, 0);
    }

    #[test]
    fn baselines() {
        assert_eq!(greedy(&[0.1, 3.0, 3.0]).unwrap(), 1);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(pure_sample(&[0.0, 0.0, 0.0], &mut rng).unwrap() < 3);
    }
}
