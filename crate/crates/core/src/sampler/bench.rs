//! Timing harness for the removal loop of both filter variants.

use std::io::Write;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{remove_listed, remove_masked, FilterPlan, Variant};
use crate::error::{Error, Result};

const REPEATS: usize = 5;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TimingSample {
    pub variant: Variant,
    pub vocab_size: usize,
    pub nucleus_size: usize,
    pub iterations: usize,
    /// Median over repeats of the removal loop's wall time; always >= 1.
    pub loop_time_ns: u64,
}

/// Language-model-like logits: Zipf-shaped over a random permutation of
/// the vocabulary with a random exponent, plus small Gaussian-ish noise, so
/// nucleus sizes at p = 0.9 range from a handful to a large fraction of
/// the vocabulary.
pub fn lm_like_logits<R: Rng + ?Sized>(rng: &mut R, vocab_size: usize) -> Vec<f64> {
    let exponent = rng.random_range(0.8..2.0);
    let mut ids: Vec<usize> = (0..vocab_size).collect();
    ids.shuffle(rng);
    let mut logits = vec![0.0; vocab_size];
    for (rank, &id) in ids.iter().enumerate() {
        let noise: f64 = rng.random_range(-0.05..0.05);
        logits[id] = -exponent * ((rank + 1) as f64).ln() + noise;
    }
    logits
}

fn median(xs: &mut [u64]) -> u64 {
    xs.sort_unstable();
    xs[xs.len() / 2]
}

/// Times the removal loop of `variant` on `trials` random distributions.
///
/// Each trial runs one discarded warm-up pass and reports the median of
/// five timed passes. Only the removal loop is inside the timed region;
/// sorting, the cumulative sum and the `not_in_p` list are built outside.
pub fn bench_filter(
    variant: Variant,
    vocab_size: usize,
    trials: usize,
    seed: u64,
) -> Result<Vec<TimingSample>> {
    if trials == 0 {
        return Err(Error::Usage("trials must be >= 1".into()));
    }
    if vocab_size == 0 {
        return Err(Error::Usage("vocab size must be >= 1".into()));
    }
    let p = 0.9;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = Vec::with_capacity(trials);
    let mut work = vec![0.0; vocab_size];
    let mut times = [0u64; REPEATS];
    for _ in 0..trials {
        let logits = lm_like_logits(&mut rng, vocab_size);
        let plan = FilterPlan::new(&logits)?;
        let not_in_p = plan.removals(p);
        let mut iterations = 0;
        for rep in 0..=REPEATS {
            work.copy_from_slice(&logits);
            let start = Instant::now();
            iterations = match variant {
                Variant::Vulnerable => remove_listed(std::hint::black_box(&mut work), &not_in_p),
                Variant::Mitigated => remove_masked(std::hint::black_box(&mut work), &plan, p),
            };
            let elapsed = start.elapsed().as_nanos() as u64;
            std::hint::black_box(&work);
            if rep > 0 {
                times[rep - 1] = elapsed.max(1);
            }
        }
        samples.push(TimingSample {
            variant,
            vocab_size,
            nucleus_size: vocab_size - not_in_p.len(),
            iterations,
            loop_time_ns: median(&mut times),
        });
    }
    Ok(samples)
}

/// Pearson correlation; `None` when either series is constant.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let n = xs.len().min(ys.len());
    if n < 2 {
        return None;
    }
    let mx = xs[..n].iter().sum::<f64>() / n as f64;
    let my = ys[..n].iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs[..n].iter().zip(&ys[..n]) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}

#[derive(Clone, Debug)]
pub struct VariantSummary {
    pub variant: Variant,
    pub median_loop_time_ns: u64,
    pub mean_loop_time_ns: f64,
    /// Correlation between nucleus size and loop time.
    pub size_time_correlation: Option<f64>,
    pub iteration_variance: f64,
}

pub fn summarize(samples: &[TimingSample]) -> Option<VariantSummary> {
    let first = samples.first()?;
    let mut times: Vec<u64> = samples.iter().map(|s| s.loop_time_ns).collect();
    let sizes: Vec<f64> = samples.iter().map(|s| s.nucleus_size as f64).collect();
    let tf: Vec<f64> = times.iter().map(|&t| t as f64).collect();
    let iters: Vec<f64> = samples.iter().map(|s| s.iterations as f64).collect();
    let n = samples.len() as f64;
    let mean_iter = iters.iter().sum::<f64>() / n;
    let iteration_variance = iters.iter().map(|i| (i - mean_iter).powi(2)).sum::<f64>() / n;
    Some(VariantSummary {
        variant: first.variant,
        mean_loop_time_ns: tf.iter().sum::<f64>() / n,
        size_time_correlation: pearson(&sizes, &tf),
        iteration_variance,
        median_loop_time_ns: median(&mut times),
    })
}

/// Benchmarks both variants on the same seeded inputs.
///
/// Runs on a dedicated thread pinned to a single logical core.
pub fn bench_both(
    vocab_size: usize,
    trials: usize,
    seed: u64,
) -> Result<(Vec<TimingSample>, Vec<TimingSample>)> {
    std::thread::scope(|s| {
        s.spawn(|| {
            if let Err(e) = pin_to_current_core() {
                log::warn!("could not pin benchmark thread: {e}");
            }
            let vulnerable = bench_filter(Variant::Vulnerable, vocab_size, trials, seed)?;
            let mitigated = bench_filter(Variant::Mitigated, vocab_size, trials, seed)?;
            Ok((vulnerable, mitigated))
        })
        .join()
        .map_err(|_| Error::Internal("benchmark thread panicked".into()))?
    })
}

/// Ratio of mitigated to vulnerable median removal-loop time.
pub fn slowdown(vulnerable: &[TimingSample], mitigated: &[TimingSample]) -> Option<f64> {
    let v = summarize(vulnerable)?;
    let m = summarize(mitigated)?;
    Some(m.median_loop_time_ns as f64 / v.median_loop_time_ns as f64)
}

/// One `variant, vocab_size, nucleus_size, loop_time_ns` line per sample.
pub fn write_report<W: Write>(mut out: W, samples: &[TimingSample]) -> std::io::Result<()> {
    writeln!(out, "variant, vocab_size, nucleus_size, loop_time_ns")?;
    for s in samples {
        writeln!(
            out,
            "{}, {}, {}, {}",
            s.variant.name(),
            s.vocab_size,
            s.nucleus_size,
            s.loop_time_ns
        )?;
    }
    Ok(())
}

#[cfg(target_os = "linux")]
fn pin_to_current_core() -> std::io::Result<()> {
    // SAFETY: sched_getcpu and sched_setaffinity only read/write the
    // cpu_set_t we own; pid 0 targets the calling thread.
    unsafe {
        let cpu = libc::sched_getcpu();
        if cpu < 0 {
            return Err(std::io::Error::last_os_error());
        }
        let mut set: libc::cpu_set_t = std::mem::zeroed();
        libc::CPU_SET(cpu as usize, &mut set);
        if libc::sched_setaffinity(0, std::mem::size_of::<libc::cpu_set_t>(), &set) != 0 {
            return Err(std::io::Error::last_os_error());
        }
    }
    Ok(())
}

#[cfg(not(target_os = "linux"))]
fn pin_to_current_core() -> std::io::Result<()> {
    Err(std::io::Error::new(
        std::io::ErrorKind::Unsupported,
        "core pinning is only implemented on Linux",
    ))
}
