//! Simulated Flush+Reload measurement of the victim's removal loop.
//!
//! The probe sees each loop iteration independently with probability
//! `capture_fraction`. Hits carry cycle timestamps; the attacker splits the
//! hit stream into steps at long gaps and rescales hit counts by
//! `1 / capture_fraction` to estimate iterations and hence nucleus sizes.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution as _, Geometric, Normal};

use crate::error::{Error, Result};

pub const DEFAULT_CAPTURE_FRACTION: f64 = 0.011;
pub const DEFAULT_DROP_FRACTION: f64 = 0.06;
/// Segmentation threshold as a multiple of the median inter-hit gap.
pub const SEGMENT_GAP_MULTIPLE: f64 = 50.0;
pub const TRACE_MAGIC: &str = "#trace v1";

#[derive(Clone, Debug, PartialEq)]
pub struct ChannelConfig {
    pub capture_fraction: f64,
    pub cycles_per_iteration: f64,
    /// Standard deviation of the Gaussian noise on each hit timestamp, in cycles.
    pub hit_jitter_std: f64,
    /// Per-step probability that the step's timing is dilated.
    pub outlier_rate: f64,
    pub outlier_scale: f64,
    /// Idle time between consecutive steps (the user typing the next word).
    pub segment_gap_cycles: u64,
    /// Fixed segmentation threshold; when unset it is derived from the
    /// median inter-hit gap.
    pub segment_threshold_cycles: Option<u64>,
    pub rng_seed: u64,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        ChannelConfig {
            capture_fraction: DEFAULT_CAPTURE_FRACTION,
            cycles_per_iteration: 300.0,
            hit_jitter_std: 30.0,
            outlier_rate: 2e-5,
            outlier_scale: 10.0,
            segment_gap_cycles: 100_000_000,
            segment_threshold_cycles: None,
            rng_seed: 0,
        }
    }
}

impl ChannelConfig {
    /// Every iteration captured, no jitter, no outliers.
    pub fn lossless() -> Self {
        ChannelConfig {
            capture_fraction: 1.0,
            hit_jitter_std: 0.0,
            outlier_rate: 0.0,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.capture_fraction > 0.0 && self.capture_fraction <= 1.0) {
            return bad(format!(
                "capture_fraction must be in (0, 1], got {}",
                self.capture_fraction
            ));
        }
        if !(self.cycles_per_iteration > 0.0 && self.cycles_per_iteration.is_finite()) {
            return bad(format!(
                "cycles_per_iteration must be positive, got {}",
                self.cycles_per_iteration
            ));
        }
        if !(self.hit_jitter_std >= 0.0 && self.hit_jitter_std.is_finite()) {
            return bad(format!(
                "hit_jitter_std must be >= 0, got {}",
                self.hit_jitter_std
            ));
        }
        if !(0.0..=1.0).contains(&self.outlier_rate) {
            return bad(format!(
                "outlier_rate must be in [0, 1], got {}",
                self.outlier_rate
            ));
        }
        if !(self.outlier_scale >= 1.0 && self.outlier_scale.is_finite()) {
            return bad(format!(
                "outlier_scale must be >= 1, got {}",
                self.outlier_scale
            ));
        }
        if self.segment_gap_cycles == 0 {
            return bad("segment_gap_cycles must be positive".into());
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Hit {
    /// Ground-truth step of the access; not visible to reconstruction.
    pub step: u32,
    pub cycles: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RawTrace {
    pub seq_id: String,
    pub hits: Vec<Hit>,
    pub true_step_count: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trace {
    pub seq_id: String,
    pub vocab_size: usize,
    pub capture_fraction: f64,
    pub estimated_sizes: Vec<f64>,
    pub per_step_hit_counts: Vec<u32>,
    pub per_step_durations: Vec<u64>,
    /// Steps with no hits at all; their estimate is the full vocabulary.
    pub zero_hit_steps: Vec<usize>,
    pub noise_level: f64,
}

impl Trace {
    pub fn len(&self) -> usize {
        self.estimated_sizes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.estimated_sizes.is_empty()
    }

    /// The first `len` steps (a measurement of the text's prefix).
    pub fn truncated(&self, len: usize) -> Trace {
        let len = len.min(self.len());
        Trace {
            estimated_sizes: self.estimated_sizes[..len].to_vec(),
            per_step_hit_counts: self.per_step_hit_counts[..len].to_vec(),
            per_step_durations: self.per_step_durations[..len].to_vec(),
            zero_hit_steps: self
                .zero_hit_steps
                .iter()
                .copied()
                .filter(|&s| s < len)
                .collect(),
            ..self.clone()
        }
    }

    pub fn estimated_iterations(&self) -> impl Iterator<Item = f64> + '_ {
        let v = self.vocab_size as f64;
        self.estimated_sizes.iter().map(move |s| v - s)
    }
}

/// Simulates the probe while the victim filters once per position of `sizes`.
pub fn simulate_trace(
    seq_id: &str,
    sizes: &[u32],
    vocab_size: usize,
    cfg: &ChannelConfig,
) -> Result<RawTrace> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    simulate_trace_with(seq_id, sizes, vocab_size, cfg, &mut rng)
}

pub fn simulate_trace_with<R: Rng + ?Sized>(
    seq_id: &str,
    sizes: &[u32],
    vocab_size: usize,
    cfg: &ChannelConfig,
    rng: &mut R,
) -> Result<RawTrace> {
    cfg.validate()?;
    if let Some((t, &s)) = sizes
        .iter()
        .enumerate()
        .find(|(_, &s)| s as usize > vocab_size)
    {
        return Err(Error::Validation(format!(
            "{seq_id}: nucleus size {s} at step {t} exceeds vocabulary size {vocab_size}"
        )));
    }
    let skip = (cfg.capture_fraction < 1.0)
        .then(|| Geometric::new(cfg.capture_fraction).expect("validated capture fraction"));
    let jitter = (cfg.hit_jitter_std > 0.0)
        .then(|| Normal::new(0.0, cfg.hit_jitter_std).expect("validated jitter"));
    let gap = cfg.segment_gap_cycles as f64;

    let mut hits = Vec::new();
    let mut start = gap;
    let mut last = 0u64;
    for (t, &size) in sizes.iter().enumerate() {
        let iters = (vocab_size - size as usize) as u64;
        let scale = if cfg.outlier_rate > 0.0 && rng.random_bool(cfg.outlier_rate) {
            cfg.outlier_scale
        } else {
            1.0
        };
        let per_iter = cfg.cycles_per_iteration * scale;
        let mut k = skip.as_ref().map_or(0, |g| g.sample(rng));
        while k < iters {
            let mut at = start + (k as f64 + 0.5) * per_iter;
            if let Some(j) = &jitter {
                at += j.sample(rng);
            }
            let cycles = (at.max(0.0).round() as u64).max(last);
            last = cycles;
            hits.push(Hit {
                step: t as u32,
                cycles,
            });
            k += 1 + skip.as_ref().map_or(0, |g| g.sample(rng));
        }
        start += iters as f64 * per_iter + gap;
    }
    Ok(RawTrace {
        seq_id: seq_id.to_owned(),
        hits,
        true_step_count: sizes.len(),
    })
}

fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    })
}

/// Gap above which consecutive hits belong to different steps.
pub fn segmentation_threshold(raw: &RawTrace, cfg: &ChannelConfig) -> f64 {
    if let Some(t) = cfg.segment_threshold_cycles {
        return t as f64;
    }
    let mut gaps: Vec<f64> = raw
        .hits
        .windows(2)
        .map(|w| (w[1].cycles - w[0].cycles) as f64)
        .collect();
    let m = median(&mut gaps).unwrap_or(cfg.cycles_per_iteration / cfg.capture_fraction);
    SEGMENT_GAP_MULTIPLE * m.max(1.0)
}

/// Splits hits into steps, rescales hit counts, and scores the trace against
/// the nominal cycles per iteration.
///
/// Steps that produced no hits at all are recovered from the length of the
/// surrounding gaps (each idle period is `segment_gap_cycles` long) and from
/// `true_step_count` at the end of the trace; they are estimated at zero
/// iterations and listed in `zero_hit_steps`.
pub fn segment_and_reconstruct(
    raw: &RawTrace,
    cfg: &ChannelConfig,
    vocab_size: usize,
) -> Result<Trace> {
    cfg.validate()?;
    if raw.true_step_count == 0 && raw.hits.is_empty() {
        return Err(Error::Usage(format!("{}: empty raw trace", raw.seq_id)));
    }
    let threshold = segmentation_threshold(raw, cfg);
    let gap = cfg.segment_gap_cycles as f64;
    let idle_steps = |span: f64| ((span / gap).round() as i64 - 1).max(0) as usize;

    // (hit count, first, last) per step, None for zero-hit steps
    let mut steps: Vec<Option<(u32, u64, u64)>> = Vec::new();
    if let Some(first) = raw.hits.first() {
        steps.extend(std::iter::repeat_n(None, idle_steps(first.cycles as f64)));
        let mut cur = (1u32, first.cycles, first.cycles);
        for w in raw.hits.windows(2) {
            let g = (w[1].cycles - w[0].cycles) as f64;
            if g > threshold {
                steps.push(Some(cur));
                steps.extend(std::iter::repeat_n(None, idle_steps(g)));
                cur = (0, w[1].cycles, w[1].cycles);
            }
            cur.0 += 1;
            cur.2 = w[1].cycles;
        }
        steps.push(Some(cur));
    }
    if steps.len() < raw.true_step_count {
        steps.resize(raw.true_step_count, None);
    } else if steps.len() > raw.true_step_count {
        log::debug!(
            "{}: {} segments for {} steps",
            raw.seq_id,
            steps.len(),
            raw.true_step_count
        );
    }

    let v = vocab_size as f64;
    let mut trace = Trace {
        seq_id: raw.seq_id.clone(),
        vocab_size,
        capture_fraction: cfg.capture_fraction,
        estimated_sizes: Vec::with_capacity(steps.len()),
        per_step_hit_counts: Vec::with_capacity(steps.len()),
        per_step_durations: Vec::with_capacity(steps.len()),
        zero_hit_steps: Vec::new(),
        noise_level: 0.0,
    };
    for (t, step) in steps.into_iter().enumerate() {
        let (hits, duration) = match step {
            None => {
                trace.zero_hit_steps.push(t);
                (0, 0)
            }
            // span of h uniform points underestimates the interval by (h-1)/(h+1)
            Some((h, first, last)) if h >= 2 => {
                let span = (last - first) as f64;
                (
                    h,
                    (span * (h as f64 + 1.0) / (h as f64 - 1.0)).round() as u64,
                )
            }
            Some((h, _, _)) => (h, 0),
        };
        trace.per_step_hit_counts.push(hits);
        trace.per_step_durations.push(duration);
        trace
            .estimated_sizes
            .push(v - hits as f64 / cfg.capture_fraction);
    }
    trace.noise_level = noise_level(&trace, cfg.cycles_per_iteration);
    Ok(trace)
}

/// Mean squared distance, in iterations², of the (iterations, duration)
/// points from the line `duration = slope * iterations`.
pub fn noise_level(trace: &Trace, slope: f64) -> f64 {
    if trace.is_empty() {
        return 0.0;
    }
    let sum: f64 = trace
        .estimated_iterations()
        .zip(&trace.per_step_durations)
        .map(|(it, &d)| {
            let r = (d as f64 - slope * it) / slope;
            r * r
        })
        .sum();
    sum / trace.len() as f64
}

/// Least-squares slope of duration against estimated iterations.
pub fn trace_slope(trace: &Trace) -> Option<f64> {
    let n = trace.len();
    if n < 2 {
        return None;
    }
    let xs: Vec<f64> = trace.estimated_iterations().collect();
    let ys: Vec<f64> = trace.per_step_durations.iter().map(|&d| d as f64).collect();
    let mx = xs.iter().sum::<f64>() / n as f64;
    let my = ys.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (x, y) in xs.iter().zip(&ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
    }
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Median over traces of the per-trace least-squares slope.
pub fn estimate_global_slope(traces: &[Trace]) -> Result<f64> {
    let mut slopes: Vec<f64> = traces.iter().filter_map(trace_slope).collect();
    median(&mut slopes).ok_or_else(|| {
        Error::InsufficientData("slope estimate needs a trace with two distinct step sizes".into())
    })
}

/// Recomputes every trace's noise level against `slope`.
pub fn rescore(traces: &mut [Trace], slope: f64) {
    for t in traces {
        t.noise_level = noise_level(t, slope);
    }
}

/// Drops the `ceil(drop_fraction * n)` noisiest traces. Both halves keep
/// input order; equal noise levels are dropped in input order.
pub fn filter_noisy(traces: Vec<Trace>, drop_fraction: f64) -> Result<(Vec<Trace>, Vec<Trace>)> {
    if !(0.0..1.0).contains(&drop_fraction) {
        return Err(Error::Usage(format!(
            "drop fraction must be in [0, 1), got {drop_fraction}"
        )));
    }
    let n_drop = (drop_fraction * traces.len() as f64).ceil() as usize;
    let mut order: Vec<usize> = (0..traces.len()).collect();
    // NaN noise sorts as noisiest
    order.sort_by(|&a, &b| {
        let (x, y) = (traces[a].noise_level, traces[b].noise_level);
        match (x.is_nan(), y.is_nan()) {
            (true, false) => std::cmp::Ordering::Less,
            (false, true) => std::cmp::Ordering::Greater,
            _ => y.total_cmp(&x),
        }
        .then(a.cmp(&b))
    });
    let mut drop = vec![false; traces.len()];
    for &i in &order[..n_drop] {
        drop[i] = true;
    }
    let (mut kept, mut dropped) = (Vec::new(), Vec::new());
    for (t, d) in traces.into_iter().zip(drop) {
        if d {
            dropped.push(t);
        } else {
            kept.push(t);
        }
    }
    Ok((kept, dropped))
}

/// Writes traces as `seq_id, step, hit_count, duration_cycles,
/// estimated_size` records. The header also records the vocabulary size.
pub fn write_traces<W: Write>(mut out: W, traces: &[Trace], seed: u64) -> Result<()> {
    let io = |e: std::io::Error| Error::Internal(format!("write failed: {e}"));
    let (capture, vocab) = traces.first().map_or((DEFAULT_CAPTURE_FRACTION, 0), |t| {
        (t.capture_fraction, t.vocab_size)
    });
    if traces
        .iter()
        .any(|t| t.capture_fraction != capture || t.vocab_size != vocab)
    {
        return Err(Error::Usage(
            "all traces in one file must share capture fraction and vocabulary".into(),
        ));
    }
    writeln!(
        out,
        "{TRACE_MAGIC} seed={seed} capture={capture} vocab={vocab}"
    )
    .map_err(io)?;
    for t in traces {
        for s in 0..t.len() {
            writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}",
                t.seq_id,
                s,
                t.per_step_hit_counts[s],
                t.per_step_durations[s],
                t.estimated_sizes[s]
            )
            .map_err(io)?;
        }
    }
    Ok(())
}

/// Header fields of a trace file.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceFileHeader {
    pub seed: u64,
    pub capture_fraction: f64,
    pub vocab_size: usize,
}

/// Reads a trace file. Noise levels are scored against `slope`.
pub fn read_traces<R: BufRead>(input: R, slope: f64) -> Result<(TraceFileHeader, Vec<Trace>)> {
    let mut lines = input.lines().enumerate();
    let header_line = loop {
        match lines.next() {
            None => return Err(Error::parse("trace line 1", "missing header")),
            Some((i, l)) => {
                let l =
                    l.map_err(|e| Error::parse(format!("trace line {}", i + 1), e.to_string()))?;
                if !l.trim().is_empty() {
                    break l;
                }
            }
        }
    };
    let rest = header_line
        .strip_prefix(TRACE_MAGIC)
        .ok_or_else(|| Error::parse("trace header", format!("expected {TRACE_MAGIC:?}")))?;
    let mut fields = BTreeMap::new();
    for kv in rest.split_whitespace() {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::parse("trace header", format!("bad field {kv:?}")))?;
        fields.insert(k, v);
    }
    let field = |k: &str| {
        fields
            .get(k)
            .copied()
            .ok_or_else(|| Error::parse("trace header", format!("missing {k}=")))
    };
    let bad = |k: &str| Error::parse("trace header", format!("bad {k}="));
    let header = TraceFileHeader {
        seed: field("seed")?.parse().map_err(|_| bad("seed"))?,
        capture_fraction: field("capture")?.parse().map_err(|_| bad("capture"))?,
        vocab_size: field("vocab")?.parse().map_err(|_| bad("vocab"))?,
    };
    if !(header.capture_fraction > 0.0 && header.capture_fraction <= 1.0) {
        return Err(Error::Validation(format!(
            "capture fraction {} out of range",
            header.capture_fraction
        )));
    }

    let mut traces: Vec<Trace> = Vec::new();
    for (i, line) in lines {
        let loc = format!("trace line {}", i + 1);
        let line = line.map_err(|e| Error::parse(&loc, e.to_string()))?;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 5 {
            return Err(Error::parse(
                &loc,
                format!("expected 5 fields, got {}", f.len()),
            ));
        }
        let num_err = |what: &str| Error::parse(&loc, format!("bad {what}"));
        let step: usize = f[1].parse().map_err(|_| num_err("step"))?;
        let hits: u32 = f[2].parse().map_err(|_| num_err("hit_count"))?;
        let duration: u64 = f[3].parse().map_err(|_| num_err("duration_cycles"))?;
        let size: f64 = f[4].parse().map_err(|_| num_err("estimated_size"))?;
        if traces.last().is_none_or(|t| t.seq_id != f[0]) {
            traces.push(Trace {
                seq_id: f[0].to_owned(),
                vocab_size: header.vocab_size,
                capture_fraction: header.capture_fraction,
                estimated_sizes: Vec::new(),
                per_step_hit_counts: Vec::new(),
                per_step_durations: Vec::new(),
                zero_hit_steps: Vec::new(),
                noise_level: 0.0,
            });
        }
        let t = traces.last_mut().expect("just pushed");
        if step != t.len() {
            return Err(Error::Validation(format!(
                "{loc}: trace {:?} expected step {}, found {step}",
                t.seq_id,
                t.len()
            )));
        }
        if hits == 0 {
            t.zero_hit_steps.push(step);
        }
        t.per_step_hit_counts.push(hits);
        t.per_step_durations.push(duration);
        t.estimated_sizes.push(size);
    }
    rescore(&mut traces, slope);
    Ok((header, traces))
}
