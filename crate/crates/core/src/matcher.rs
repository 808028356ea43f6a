//! Open-world matching of a candidate text's NSS against measured traces,
//! and the end-to-end evaluation harness.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::PipelineConfig;
use crate::corpus::{aggregate_by_author, PostCorpus};
use crate::error::{Error, Result};
use crate::fingerprint::{
    euclidean_sizes, fingerprint_distances, similar, variability, Nss, NssGenerator,
    DEFAULT_SIMILARITY_WINDOW, DEFAULT_VARIABILITY_THRESHOLD,
};
use crate::model::{NgramModel, Sequence};
use crate::sidechannel::{
    estimate_global_slope, filter_noisy, rescore, segment_and_reconstruct, simulate_trace_with,
    ChannelConfig, Trace, DEFAULT_DROP_FRACTION,
};
use crate::stats::{
    error_bound, uniqueness_radius, ErrorModel, PairwiseDistanceSample, UniquenessModel,
};

/// Uniqueness and error models for one sequence length.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MatchModels {
    pub uniqueness: UniquenessModel,
    pub error: ErrorModel,
}

impl MatchModels {
    pub fn new(uniqueness: UniquenessModel, error: ErrorModel) -> Result<Self> {
        if uniqueness.length != error.length {
            return Err(Error::Usage(format!(
                "uniqueness model is for length {}, error model for {}",
                uniqueness.length, error.length
            )));
        }
        Ok(MatchModels { uniqueness, error })
    }

    pub fn length(&self) -> usize {
        self.uniqueness.length
    }

    /// `tau = U(N) - d(N)`.
    pub fn threshold(&self) -> f64 {
        self.uniqueness.radius - self.error.bound
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    Matched,
    NoMatch,
    NotVariable,
}

impl Verdict {
    pub fn name(self) -> &'static str {
        match self {
            Verdict::Matched => "matched",
            Verdict::NoMatch => "no_match",
            Verdict::NotVariable => "not_variable",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MatchResult {
    pub verdict: Verdict,
    pub trace_id: Option<String>,
    pub offset: Option<usize>,
    pub distance: Option<f64>,
    pub threshold_used: f64,
    /// Number of window distances computed.
    pub distance_evaluations: usize,
}

/// A window of `length` consecutive steps of one trace.
#[derive(Clone, Copy, Debug)]
pub struct Candidate<'t> {
    pub trace_index: usize,
    pub trace_id: &'t str,
    pub offset: usize,
    pub view: &'t [f64],
}

/// All contiguous windows of `length` steps, in trace order then offset
/// order. Traces shorter than `length` contribute nothing.
pub fn gen_candidate_subtraces(traces: &[Trace], length: usize) -> Result<Vec<Candidate<'_>>> {
    if length == 0 {
        return Err(Error::Usage("window length must be at least 1".into()));
    }
    Ok(traces
        .iter()
        .enumerate()
        .flat_map(|(i, t)| {
            t.estimated_sizes
                .windows(length)
                .enumerate()
                .map(move |(offset, view)| Candidate {
                    trace_index: i,
                    trace_id: &t.seq_id,
                    offset,
                    view,
                })
        })
        .collect())
}

fn check_models(x: &Nss, models: &MatchModels) -> Result<()> {
    if x.len() != models.length() {
        return Err(Error::Usage(format!(
            "models are fitted for length {}, series {:?} has length {}",
            models.length(),
            x.seq_id,
            x.len()
        )));
    }
    Ok(())
}

/// Returns the first window (trace order, then offset) closer than `tau`
/// to `x`, or `not_variable` without computing any distance when `x` is
/// not variable.
pub fn match_nss(
    x: &Nss,
    traces: &[Trace],
    models: &MatchModels,
    variability_threshold: f64,
) -> Result<MatchResult> {
    check_models(x, models)?;
    let tau = models.threshold();
    let mut result = MatchResult {
        verdict: Verdict::NotVariable,
        trace_id: None,
        offset: None,
        distance: None,
        threshold_used: tau,
        distance_evaluations: 0,
    };
    if !variability(&x.sizes, variability_threshold).is_variable {
        return Ok(result);
    }
    result.verdict = Verdict::NoMatch;
    for t in traces {
        for (offset, view) in t.estimated_sizes.windows(x.len()).enumerate() {
            let d: f64 = euclidean_sizes(&x.sizes, view);
            result.distance_evaluations += 1;
            if d < tau {
                result.verdict = Verdict::Matched;
                result.trace_id = Some(t.seq_id.clone());
                result.offset = Some(offset);
                result.distance = Some(d);
                return Ok(result);
            }
        }
    }
    Ok(result)
}

/// Every window closer than `tau`, as matched results. Under the model at
/// most one should exist; more indicate a violated assumption.
pub fn match_all(
    x: &Nss,
    traces: &[Trace],
    models: &MatchModels,
    variability_threshold: f64,
) -> Result<Vec<MatchResult>> {
    check_models(x, models)?;
    let tau = models.threshold();
    if !variability(&x.sizes, variability_threshold).is_variable {
        return Ok(Vec::new());
    }
    let mut out = Vec::new();
    for c in gen_candidate_subtraces(traces, x.len())? {
        let d: f64 = euclidean_sizes(&x.sizes, c.view);
        if d < tau {
            out.push(MatchResult {
                verdict: Verdict::Matched,
                trace_id: Some(c.trace_id.to_owned()),
                offset: Some(c.offset),
                distance: Some(d),
                threshold_used: tau,
                distance_evaluations: 1,
            });
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalConfig {
    pub length: usize,
    pub variability_threshold: f64,
    pub similarity_window: usize,
    pub drop_fraction: f64,
    pub epsilon: f64,
    pub channel: ChannelConfig,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            length: 2700,
            variability_threshold: DEFAULT_VARIABILITY_THRESHOLD,
            similarity_window: DEFAULT_SIMILARITY_WINDOW,
            drop_fraction: DEFAULT_DROP_FRACTION,
            epsilon: crate::stats::DEFAULT_EPSILON,
            channel: ChannelConfig::default(),
            seed: 0,
        }
    }
}

/// Traces of a batch after noise filtering.
#[derive(Clone, Debug)]
pub struct TraceBatch {
    pub kept: Vec<Trace>,
    pub dropped: Vec<Trace>,
    pub global_slope: f64,
}

/// Simulates and reconstructs one trace per series, each on its own
/// stream of `seed`.
pub fn simulate_traces(
    series: &[Nss],
    vocab_size: usize,
    channel: &ChannelConfig,
    seed: u64,
) -> Result<Vec<Trace>> {
    series
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let raw = simulate_trace_with(&s.seq_id, &s.sizes, vocab_size, channel, &mut rng)?;
            segment_and_reconstruct(&raw, channel, vocab_size)
        })
        .collect()
}

/// Rescores noise against the estimated global slope and drops the noisiest
/// `drop_fraction`.
pub fn filter_batch(mut traces: Vec<Trace>, drop_fraction: f64) -> Result<TraceBatch> {
    let global_slope = estimate_global_slope(&traces)?;
    rescore(&mut traces, global_slope);
    let (kept, dropped) = filter_noisy(traces, drop_fraction)?;
    Ok(TraceBatch {
        kept,
        dropped,
        global_slope,
    })
}

pub fn simulate_batch(
    series: &[Nss],
    vocab_size: usize,
    channel: &ChannelConfig,
    seed: u64,
    drop_fraction: f64,
) -> Result<TraceBatch> {
    filter_batch(
        simulate_traces(series, vocab_size, channel, seed)?,
        drop_fraction,
    )
}

/// Distance from a trace to the series it measured, over the series' length.
/// `None` when the trace is shorter.
pub fn measurement_error(series: &Nss, trace: &Trace) -> Option<f64> {
    (trace.len() >= series.len())
        .then(|| euclidean_sizes(&series.sizes, &trace.estimated_sizes[..series.len()]))
}

/// Measurement errors of every trace whose series is known, by seq id.
pub fn measurement_errors(series: &[Nss], traces: &[Trace]) -> Vec<f64> {
    traces
        .iter()
        .filter_map(|t| {
            let s = series.iter().find(|s| s.seq_id == t.seq_id)?;
            measurement_error(s, t)
        })
        .collect()
}

/// Fits `U(N)` on pairwise fingerprint distances and `d(N)` on the traces'
/// measurement errors. All series must already have length `N`.
pub fn fit_models(
    sequences: &[Sequence],
    series: &[Nss],
    traces: &[Trace],
    cfg: &EvalConfig,
) -> Result<MatchModels> {
    let distances = fingerprint_distances(
        series,
        sequences,
        cfg.variability_threshold,
        cfg.similarity_window,
    )?;
    let sample = PairwiseDistanceSample::new(cfg.length, distances)?;
    let uniqueness = uniqueness_radius(&sample, cfg.epsilon)?;
    let errors = measurement_errors(series, traces);
    let error = error_bound(cfg.length, &errors, &uniqueness)?;
    MatchModels::new(uniqueness, error)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SequenceOutcome {
    pub seq_id: String,
    pub variability: f64,
    pub is_variable: bool,
    /// `None` when the sequence's trace was dropped as noisy.
    pub measurement_error: Option<f64>,
    /// The sequence matched its own trace at offset 0.
    pub matched: bool,
    pub false_matches: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvaluationReport {
    pub total: usize,
    /// Variable sequences whose trace survived noise filtering.
    pub variable_count: usize,
    pub filtered_noisy: usize,
    pub true_matches: usize,
    pub false_positives: usize,
    pub recall: f64,
    pub models: MatchModels,
    pub details: Vec<SequenceOutcome>,
}

impl EvaluationReport {
    pub fn write<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let m = &self.models;
        writeln!(
            out,
            "# total={} variable={} filtered_noisy={} true_matches={} false_positives={} recall={}",
            self.total,
            self.variable_count,
            self.filtered_noisy,
            self.true_matches,
            self.false_positives,
            self.recall
        )?;
        writeln!(
            out,
            "# N={} U={} d={} tau={} epsilon={}",
            m.length(),
            m.uniqueness.radius,
            m.error.bound,
            m.threshold(),
            m.uniqueness.epsilon
        )?;
        writeln!(
            out,
            "seq_id, variability, is_variable, measurement_error, matched"
        )?;
        for d in &self.details {
            let err = d
                .measurement_error
                .map_or_else(|| "dropped".to_owned(), |e| e.to_string());
            writeln!(
                out,
                "{}, {}, {}, {}, {}",
                d.seq_id, d.variability, d.is_variable, err, d.matched
            )?;
        }
        Ok(())
    }
}

fn truncate_all(
    sequences: &[Sequence],
    series: &[Nss],
    length: usize,
) -> Result<(Vec<Sequence>, Vec<Nss>)> {
    if sequences.len() != series.len() {
        return Err(Error::Usage("need one sequence per series".into()));
    }
    if series.len() < 2 {
        return Err(Error::Usage(
            "evaluation needs at least two sequences".into(),
        ));
    }
    if let Some(s) = series.iter().find(|s| s.len() < length) {
        return Err(Error::Usage(format!(
            "series {:?} has {} positions, shorter than N = {length}",
            s.seq_id,
            s.len()
        )));
    }
    let seqs = sequences
        .iter()
        .map(|s| s.truncated(length))
        .collect::<Result<Vec<_>>>()?;
    Ok((seqs, series.iter().map(|s| s.truncated(length)).collect()))
}

/// Matches every variable series against the whole pool of kept traces.
/// A match to the sequence's own trace at offset 0 is a true match; a match
/// to the trace of a non-similar sequence is a false positive.
pub fn evaluate_traces(
    sequences: &[Sequence],
    series: &[Nss],
    batch: &TraceBatch,
    models: &MatchModels,
    cfg: &EvalConfig,
) -> Result<EvaluationReport> {
    let (sequences, series) = truncate_all(sequences, series, cfg.length)?;
    let index_of = |id: &str| series.iter().position(|s| s.seq_id == id);
    let mut report = EvaluationReport {
        total: series.len(),
        variable_count: 0,
        filtered_noisy: batch.dropped.len(),
        true_matches: 0,
        false_positives: 0,
        recall: 0.0,
        models: *models,
        details: Vec::with_capacity(series.len()),
    };
    for (i, x) in series.iter().enumerate() {
        let var = variability(&x.sizes, cfg.variability_threshold);
        let own = batch.kept.iter().find(|t| t.seq_id == x.seq_id);
        let mut outcome = SequenceOutcome {
            seq_id: x.seq_id.clone(),
            variability: var.variability,
            is_variable: var.is_variable,
            measurement_error: own.and_then(|t| measurement_error(x, t)),
            matched: false,
            false_matches: 0,
        };
        if var.is_variable && own.is_some() {
            report.variable_count += 1;
        }
        for m in match_all(x, &batch.kept, models, cfg.variability_threshold)? {
            let id = m.trace_id.as_deref().expect("matched result has a trace");
            if id == x.seq_id {
                outcome.matched |= m.offset == Some(0);
                continue;
            }
            let j = index_of(id)
                .ok_or_else(|| Error::Usage(format!("trace {id:?} has no sequence")))?;
            if !similar(&sequences[i], &sequences[j], cfg.similarity_window)? {
                outcome.false_matches += 1;
            }
        }
        report.true_matches += outcome.matched as usize;
        report.false_positives += outcome.false_matches;
        report.details.push(outcome);
    }
    report.recall = if report.variable_count == 0 {
        0.0
    } else {
        report.true_matches as f64 / report.variable_count as f64
    };
    Ok(report)
}

/// Simulates, filters and matches with the given models.
pub fn evaluate(
    sequences: &[Sequence],
    series: &[Nss],
    vocab_size: usize,
    models: &MatchModels,
    cfg: &EvalConfig,
) -> Result<EvaluationReport> {
    let (_, truncated) = truncate_all(sequences, series, cfg.length)?;
    let batch = simulate_batch(
        &truncated,
        vocab_size,
        &cfg.channel,
        cfg.seed,
        cfg.drop_fraction,
    )?;
    evaluate_traces(sequences, series, &batch, models, cfg)
}

/// Simulates and filters traces, fits both models on this batch, then
/// matches.
pub fn run_pipeline(
    sequences: &[Sequence],
    series: &[Nss],
    vocab_size: usize,
    cfg: &EvalConfig,
) -> Result<EvaluationReport> {
    let (seqs, truncated) = truncate_all(sequences, series, cfg.length)?;
    let batch = simulate_batch(
        &truncated,
        vocab_size,
        &cfg.channel,
        cfg.seed,
        cfg.drop_fraction,
    )?;
    let models = fit_models(&seqs, &truncated, &batch.kept, cfg)?;
    if !models.error.is_matchable() {
        log::warn!(
            "tau = {} <= 0 at N = {}: no match can be declared safely",
            models.threshold(),
            cfg.length
        );
    }
    evaluate_traces(&seqs, &truncated, &batch, &models, cfg)
}

/// Author sequences of `corpus` with at least `cfg.sequence_length` words,
/// and their series under `model`.
pub fn corpus_series(
    model: &NgramModel,
    corpus: &PostCorpus,
    cfg: &PipelineConfig,
) -> Result<(Vec<Sequence>, Vec<Nss>)> {
    let authors = aggregate_by_author(corpus, model.vocab(), cfg.word_cap, cfg.sequence_length)?;
    log::info!(
        "{} of {} posts aggregated into {} author sequences",
        authors.iter().map(|a| a.post_count).sum::<usize>(),
        corpus.posts.len(),
        authors.len()
    );
    let sequences: Vec<Sequence> = authors.into_iter().map(|a| a.sequence).collect();
    let mut generator = NssGenerator::new(model, cfg.q)?;
    let series = sequences
        .iter()
        .map(|s| generator.generate(s))
        .collect::<Result<_>>()?;
    Ok((sequences, series))
}

/// `run_pipeline` on the author sequences of `corpus`.
pub fn evaluate_corpus(
    model: &NgramModel,
    corpus: &PostCorpus,
    cfg: &PipelineConfig,
) -> Result<EvaluationReport> {
    let (sequences, series) = corpus_series(model, corpus, cfg)?;
    run_pipeline(&sequences, &series, model.vocab_size(), &cfg.eval_config())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn nss(id: &str, sizes: Vec<u32>) -> Nss {
        Nss {
            seq_id: id.into(),
            q: 0.9,
            model_id: "m".into(),
            sizes,
        }
    }

    fn trace(id: &str, sizes: Vec<f64>) -> Trace {
        let n = sizes.len();
        Trace {
            seq_id: id.into(),
            vocab_size: 50_257,
            capture_fraction: 1.0,
            estimated_sizes: sizes,
            per_step_hit_counts: vec![0; n],
            per_step_durations: vec![0; n],
            zero_hit_steps: Vec::new(),
            noise_level: 0.0,
        }
    }

    fn models(length: usize, radius: f64, bound: f64) -> MatchModels {
        let uniqueness = UniquenessModel {
            length,
            log_mu: radius.ln() + 1.0,
            log_sigma: 0.1,
            epsilon: 1e-6,
            radius,
        };
        let error = ErrorModel {
            length,
            mean: bound,
            std: 0.0,
            bound,
            tau: radius - bound,
        };
        MatchModels::new(uniqueness, error).unwrap()
    }

    #[test]
    fn window_counts() {
        let t5 = trace("a", vec![1.0; 5]);
        let c = gen_candidate_subtraces(std::slice::from_ref(&t5), 3).unwrap();
        assert_eq!(
            c.iter().map(|c| c.offset).collect::<Vec<_>>(),
            vec![0, 1, 2]
        );
        assert!(gen_candidate_subtraces(&[trace("b", vec![1.0; 2])], 3)
            .unwrap()
            .is_empty());
        let long = [trace("x", vec![0.0; 2700]), trace("y", vec![0.0; 3000])];
        assert_eq!(gen_candidate_subtraces(&long, 2700).unwrap().len(), 302);
        assert!(gen_candidate_subtraces(&long, 0).is_err());
    }

    #[test]
    fn exact_trace_matches_at_zero() {
        let sizes: Vec<u32> = (0..100).map(|i| (i % 7) * 5000).collect();
        let x = nss("x", sizes.clone());
        let traces = [
            trace("other", vec![25_000.0; 100]),
            trace("x", sizes.iter().map(|&s| s as f64).collect()),
        ];
        let r = match_nss(&x, &traces, &models(100, 1000.0, 10.0), 1450.0).unwrap();
        assert_eq!(r.verdict, Verdict::Matched);
        assert_eq!(
            (r.trace_id.as_deref(), r.offset, r.distance),
            (Some("x"), Some(0), Some(0.0))
        );
        assert_eq!(r.distance_evaluations, 2);
    }

    #[test]
    fn not_variable_short_circuits() {
        let x = nss("x", vec![100; 50]);
        let traces = [trace("x", vec![100.0; 50])];
        let r = match_nss(&x, &traces, &models(50, 1000.0, 10.0), 1450.0).unwrap();
        assert_eq!(r.verdict, Verdict::NotVariable);
        assert_eq!(r.distance_evaluations, 0);
        assert!(match_all(&x, &traces, &models(50, 1000.0, 10.0), 1450.0)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn length_mismatch_is_usage() {
        let x = nss("x", vec![1; 10]);
        assert!(matches!(
            match_nss(&x, &[], &models(11, 1.0, 0.5), 1.0),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn triangle_inequality_grid() {
        // X and Y are more than U apart; t measures Y with error below d,
        // pushed as far toward X as allowed. X must never match t.
        let n = 64;
        let (u, d) = (10_000.0, 4_000.0);
        let m = models(n, u, d);
        for k in 0..40u32 {
            let x: Vec<u32> = (0..n as u32)
                .map(|i| 20_000 + ((i * 7919 + k * 104_729) % 6_000))
                .collect();
            let dir: Vec<f64> = (0..n)
                .map(|i| {
                    if (i + k as usize).is_multiple_of(3) {
                        1.0
                    } else {
                        -0.5
                    }
                })
                .collect();
            let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
            for gap in [1.0001, 1.01, 1.5] {
                let y: Vec<f64> = x
                    .iter()
                    .zip(&dir)
                    .map(|(&xi, v)| xi as f64 + v / norm * u * gap)
                    .collect();
                for frac in [0.0, 0.5, 0.999_9] {
                    // measurement error `frac * d` directly toward X
                    let t: Vec<f64> = x
                        .iter()
                        .zip(&y)
                        .map(|(&xi, &yi)| yi + (xi as f64 - yi) / (u * gap) * d * frac)
                        .collect();
                    let r = match_nss(&nss("x", x.clone()), &[trace("y", t)], &m, 1.0).unwrap();
                    assert_eq!(r.verdict, Verdict::NoMatch, "k={k} gap={gap} frac={frac}");
                }
            }
        }
    }

    fn toy_corpus() -> (Vec<Sequence>, Vec<Nss>) {
        let n = 60;
        let mut seqs = Vec::new();
        let mut series = Vec::new();
        for s in 0..6u32 {
            let words: Vec<u32> = (0..n as u32)
                .map(|i| (i * 31 + s * 1_000) % 5_000)
                .collect();
            let sizes: Vec<u32> = (0..n as u32)
                .map(|i| ((i * 97 + s * 13 + 1).wrapping_mul(2_654_435_761) >> 7) % 10_000 + 40_000)
                .collect();
            seqs.push(Sequence::single(format!("s{s}"), words).unwrap());
            series.push(nss(&format!("s{s}"), sizes));
        }
        (seqs, series)
    }

    #[test]
    fn lossless_evaluation_is_perfect() {
        let (seqs, series) = toy_corpus();
        let cfg = EvalConfig {
            length: 60,
            channel: ChannelConfig::lossless(),
            drop_fraction: 0.0,
            ..Default::default()
        };
        let report = evaluate(&seqs, &series, 50_257, &models(60, 1000.0, 10.0), &cfg).unwrap();
        assert_eq!(report.variable_count, 6);
        assert_eq!(
            (report.true_matches, report.false_positives, report.recall),
            (6, 0, 1.0)
        );
        let mut buf = Vec::new();
        report.write(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.contains("seq_id, variability, is_variable, measurement_error, matched\ns0, "));
    }

    #[test]
    fn duplicates_are_not_false_positives() {
        let (mut seqs, mut series) = toy_corpus();
        let dup = Sequence::single("dup", seqs[2].words().to_vec()).unwrap();
        seqs.push(dup);
        series.push(nss("dup", series[2].sizes.clone()));
        let cfg = EvalConfig {
            length: 60,
            channel: ChannelConfig::lossless(),
            drop_fraction: 0.0,
            ..Default::default()
        };
        let report = evaluate(&seqs, &series, 50_257, &models(60, 1000.0, 10.0), &cfg).unwrap();
        assert_eq!(report.false_positives, 0);
        assert_eq!(report.true_matches, 7);
        let r = match_all(
            &series[2],
            &simulate_batch(&series, 50_257, &cfg.channel, 0, 0.0)
                .unwrap()
                .kept,
            &models(60, 1000.0, 10.0),
            1450.0,
        )
        .unwrap();
        let ids: Vec<_> = r.iter().map(|m| m.trace_id.clone().unwrap()).collect();
        assert_eq!(ids, vec!["s2".to_owned(), "dup".to_owned()]);
    }

    #[test]
    fn evaluation_preconditions() {
        let (seqs, series) = toy_corpus();
        let cfg = EvalConfig {
            length: 500,
            ..Default::default()
        };
        assert!(matches!(
            evaluate(&seqs, &series, 50_257, &models(500, 1.0, 0.5), &cfg),
            Err(Error::Usage(_))
        ));
        let cfg = EvalConfig {
            length: 60,
            ..Default::default()
        };
        assert!(evaluate(
            &seqs[..1],
            &series[..1],
            50_257,
            &models(60, 1.0, 0.5),
            &cfg
        )
        .is_err());
    }
}
