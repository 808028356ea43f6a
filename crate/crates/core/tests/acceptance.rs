//! Acceptance runner: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails.

use std::time::Instant;

use nssfp_core::corpus::{SyntheticConfig, SyntheticScale, SyntheticSetup};
use nssfp_core::fingerprint::fingerprint_distances;
use nssfp_core::matcher::{
    corpus_series, evaluate_corpus, filter_batch, fit_models, simulate_batch, EvalConfig,
};
use nssfp_core::model::Distribution;
use nssfp_core::sampler::bench::{bench_both, lm_like_logits, summarize};
use nssfp_core::sampler::{nucleus_size, top_p_filter_mitigated, top_p_filter_vulnerable};
use nssfp_core::sidechannel::{segment_and_reconstruct, simulate_trace};
use nssfp_core::stats::{
    half_split_radii, normal_cdf, normal_quantile, uniqueness_radius, PairwiseDistanceSample,
};
use nssfp_core::{ChannelConfig, Nss, PipelineConfig, Sequence};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution as _, Normal};

const VOCAB: usize = 50_257;
const P_CHOICES: [f64; 4] = [0.5, 0.9, 0.95, 1.0];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn random_logits(rng: &mut ChaCha8Rng, vocab: usize) -> Vec<f64> {
    if rng.random_bool(0.5) {
        lm_like_logits(rng, vocab)
    } else {
        let temp: f64 = rng.random_range(0.1..5.0);
        let normal = Normal::new(0.0, temp).unwrap();
        (0..vocab).map(|_| normal.sample(rng)).collect()
    }
}

fn log_uniform_vocab(rng: &mut ChaCha8Rng) -> usize {
    let (lo, hi) = (4f64.ln(), 50_000f64.ln());
    (rng.random_range(lo..=hi).exp().round() as usize).clamp(4, 50_000)
}

/// Criteria 1 and 2 share their inputs.
fn filter_equivalence() -> (Outcome, Outcome) {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (mut size_mismatch, mut kept_mismatch) = (0, 0);
    let trials = 10_000;
    for _ in 0..trials {
        let vocab = log_uniform_vocab(&mut rng);
        let logits = random_logits(&mut rng, vocab);
        let p = P_CHOICES[rng.random_range(0..P_CHOICES.len())];
        let (_, vulnerable) = top_p_filter_vulnerable(&logits, p).unwrap();
        let (_, mitigated) = top_p_filter_mitigated(&logits, p).unwrap();
        let expected =
            nucleus_size(&Distribution::from_logits(&logits).unwrap(), p).unwrap() as usize;
        if expected != vocab - vulnerable.removal_loop_iterations
            || expected != vocab - vulnerable.removed_count
        {
            size_mismatch += 1;
        }
        if vulnerable.kept_ids != mitigated.kept_ids {
            kept_mismatch += 1;
        }
    }
    (
        outcome(
            size_mismatch == 0,
            format!("{size_mismatch} of {trials} nucleus sizes differ from vocab - removals"),
        ),
        outcome(
            kept_mismatch == 0,
            format!("{kept_mismatch} of {trials} kept sets differ between variants"),
        ),
    )
}

fn leak_closure() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut mitigated_trips = Vec::new();
    let mut vulnerable_off = 0;
    for _ in 0..1_000 {
        let logits = random_logits(&mut rng, VOCAB);
        let p = P_CHOICES[rng.random_range(0..P_CHOICES.len())];
        let (_, m) = top_p_filter_mitigated(&logits, p).unwrap();
        let (_, v) = top_p_filter_vulnerable(&logits, p).unwrap();
        mitigated_trips.push(m.removal_loop_iterations);
        let nucleus =
            nucleus_size(&Distribution::from_logits(&logits).unwrap(), p).unwrap() as usize;
        if v.removal_loop_iterations != VOCAB - nucleus {
            vulnerable_off += 1;
        }
    }
    let constant = mitigated_trips.iter().all(|&t| t == VOCAB);
    outcome(
        constant && vulnerable_off == 0,
        format!(
            "mitigated trip counts constant at {VOCAB}: {constant}; vulnerable trip count != vocab - nucleus in {vulnerable_off} of 1000"
        ),
    )
}

fn overhead() -> Outcome {
    let (v, m) = bench_both(VOCAB, 300, 13).unwrap();
    let (sv, sm) = (summarize(&v).unwrap(), summarize(&m).unwrap());
    let ratio = sm.median_loop_time_ns as f64 / sv.median_loop_time_ns as f64;
    outcome(
        ratio <= 3.0,
        format!(
            "median removal loop {} ns mitigated vs {} ns vulnerable, ratio {ratio:.3}",
            sm.median_loop_time_ns, sv.median_loop_time_ns
        ),
    )
}

struct Experiment {
    cfg: PipelineConfig,
    sequences: Vec<Sequence>,
    series: Vec<Nss>,
}

fn experiment(authors: usize) -> Experiment {
    let cfg = PipelineConfig {
        sequence_length: 1000,
        word_cap: 1000,
        ..Default::default()
    };
    let scale = SyntheticScale {
        authors,
        words_per_author: 1000,
        train_words: 1_000_000,
    };
    let setup = SyntheticSetup::build(SyntheticConfig::default(), &scale, cfg.order).unwrap();
    let (sequences, series) = corpus_series(&setup.model, &setup.corpus, &cfg).unwrap();
    Experiment {
        cfg,
        sequences,
        series,
    }
}

fn at_length(e: &Experiment, n: usize) -> (Vec<Sequence>, Vec<Nss>) {
    (
        e.sequences
            .iter()
            .map(|s| s.truncated(n).unwrap())
            .collect(),
        e.series.iter().map(|s| s.truncated(n)).collect(),
    )
}

fn separation(e: &Experiment) -> Outcome {
    let (seqs, series) = at_length(e, 1000);
    let distances = fingerprint_distances(
        &series,
        &seqs,
        e.cfg.variability_threshold,
        e.cfg.similarity_window,
    )
    .unwrap();
    let sample = PairwiseDistanceSample::new(1000, distances).unwrap();
    let u = uniqueness_radius(&sample, 1e-6).unwrap().radius;
    let below = sample.distances().iter().filter(|&&d| d < u).count();
    let (a, b) = half_split_radii(&sample, 1e-6).unwrap();
    let spread = (a - b).abs() / a.min(b);
    outcome(
        series.len() == 500 && below == 0 && spread <= 0.05,
        format!(
            "{} series, {} pairs, min distance {:.0}, U = {u:.0}, {below} below U; half radii {a:.0} / {b:.0} ({:.2}% apart)",
            series.len(),
            sample.distances().len(),
            sample.min().unwrap_or(f64::NAN),
            100.0 * spread
        ),
    )
}

fn growth(e: &Experiment) -> Outcome {
    let lengths = [250, 500, 750, 1000];
    let (_, full) = at_length(e, 1000);
    let batch = simulate_batch(
        &full,
        VOCAB,
        &e.cfg.channel,
        e.cfg.seed,
        e.cfg.drop_fraction,
    )
    .unwrap();
    let mut radii = Vec::new();
    let mut taus = Vec::new();
    for n in lengths {
        let (seqs, series) = at_length(e, n);
        let kept: Vec<_> = batch.kept.iter().map(|t| t.truncated(n)).collect();
        let cfg = EvalConfig {
            length: n,
            ..e.cfg.eval_config()
        };
        let models = fit_models(&seqs, &series, &kept, &cfg).unwrap();
        radii.push(models.uniqueness.radius);
        taus.push(models.threshold());
    }
    let u_increasing = radii.windows(2).all(|w| w[0] < w[1]);
    let tau_increasing = taus[1..].windows(2).all(|w| w[0] < w[1]);
    let fmt = |v: &[f64]| {
        v.iter()
            .map(|x| format!("{x:.0}"))
            .collect::<Vec<_>>()
            .join(", ")
    };
    outcome(
        u_increasing && tau_increasing,
        format!(
            "N = {lengths:?}: U = [{}], U - d = [{}]",
            fmt(&radii),
            fmt(&taus)
        ),
    )
}

fn reconstruction() -> Outcome {
    let iterations: Vec<usize> = vec![
        2000, 0, 2500, 50_000, 3000, 800, 5000, 10_000, 20_000, 2000, 35_000, 40, 4000, 12_000,
        45_000, 2200,
    ];
    let sizes: Vec<u32> = iterations.iter().map(|&i| (VOCAB - i) as u32).collect();
    let trials = 100;
    let mut sums = vec![0.0; sizes.len()];
    for trial in 0..trials {
        let channel = ChannelConfig {
            rng_seed: trial,
            ..Default::default()
        };
        let raw = simulate_trace("t", &sizes, VOCAB, &channel).unwrap();
        let trace = segment_and_reconstruct(&raw, &channel, VOCAB).unwrap();
        for (s, est) in sums.iter_mut().zip(trace.estimated_iterations()) {
            *s += est;
        }
    }
    let worst = iterations
        .iter()
        .zip(&sums)
        .filter(|(&i, _)| i >= 2000)
        .map(|(&i, &s)| ((s / trials as f64 - i as f64) / i as f64).abs())
        .fold(0.0, f64::max);
    outcome(
        worst <= 0.05,
        format!(
            "worst relative error of the mean over {trials} trials: {:.2}%",
            100.0 * worst
        ),
    )
}

fn noise_filtering() -> Outcome {
    let (batches, per_batch, corrupted_per_batch, steps) = (20, 100, 5, 200);
    let (mut corrupted, mut removed) = (0, 0);
    for b in 0..batches {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + b);
        let mut traces = Vec::new();
        for t in 0..per_batch {
            let is_corrupt = t < corrupted_per_batch;
            let sizes: Vec<u32> = (0..steps)
                .map(|_| rng.random_range(0..VOCAB as u32))
                .collect();
            let mut channel = ChannelConfig {
                rng_seed: b * 1000 + t,
                ..Default::default()
            };
            if is_corrupt {
                channel.outlier_rate = 0.05;
                channel.outlier_scale = 10.0;
            }
            let id = format!("{}{t}", if is_corrupt { "bad" } else { "ok" });
            let raw = simulate_trace(&id, &sizes, VOCAB, &channel).unwrap();
            traces.push(segment_and_reconstruct(&raw, &channel, VOCAB).unwrap());
        }
        let batch = filter_batch(traces, 0.06).unwrap();
        corrupted += corrupted_per_batch;
        removed += batch
            .dropped
            .iter()
            .filter(|t| t.seq_id.starts_with("bad"))
            .count();
    }
    let share = removed as f64 / corrupted as f64;
    outcome(
        share >= 0.95,
        format!(
            "{removed} of {corrupted} corrupted traces removed ({:.1}%)",
            100.0 * share
        ),
    )
}

fn evaluation_report(authors: usize) -> (nssfp_core::EvaluationReport, Vec<u8>) {
    let cfg = PipelineConfig {
        sequence_length: 1000,
        ..Default::default()
    };
    let scale = SyntheticScale {
        authors,
        words_per_author: 1000,
        train_words: 1_000_000,
    };
    let setup = SyntheticSetup::build(SyntheticConfig::default(), &scale, cfg.order).unwrap();
    let report = evaluate_corpus(&setup.model, &setup.corpus, &cfg).unwrap();
    let mut bytes = Vec::new();
    report.write(&mut bytes).unwrap();
    (report, bytes)
}

fn end_to_end(report: &nssfp_core::EvaluationReport) -> Outcome {
    outcome(
        report.total == 200 && report.false_positives == 0 && report.recall >= 0.9,
        format!(
            "{} sequences, {} variable, {} filtered, recall {:.3}, false positives {}, tau {:.0}",
            report.total,
            report.variable_count,
            report.filtered_noisy,
            report.recall,
            report.false_positives,
            report.models.threshold()
        ),
    )
}

fn quantile_precision() -> Outcome {
    // (eps, z*, phi(z*)/eps) from a 60-digit erfc root solve
    const ORACLE: [(f64, f64, f64); 4] = [
        (0.5, 0.0, 0.797884560802865355879892119869),
        (1e-3, -3.09023230616781354154, 3.36709007706399043),
        (1e-9, -5.997807015007686871562, 6.15634224080528082),
        (1e-18, -8.757290348782315063881, 8.8686804011965088),
    ];
    let mut worst: f64 = 0.0;
    for (eps, z_star, hazard) in ORACLE {
        let z = normal_quantile(eps).unwrap();
        let against_oracle = hazard * (z - z_star).abs();
        let round_trip = ((normal_cdf(z) - eps) / eps).abs();
        worst = worst.max(against_oracle).max(round_trip);
    }
    outcome(
        worst <= 1e-9,
        format!("worst relative CDF error {worst:.2e}"),
    )
}

fn reproducibility(first: &[u8]) -> Outcome {
    let (_, second) = evaluation_report(200);
    outcome(
        first == second,
        format!(
            "two evaluate reports of {} bytes identical: {}",
            first.len(),
            first == second
        ),
    )
}

fn report(id: usize, name: &str, started: Instant, o: &Outcome) -> bool {
    println!(
        "criterion {id:>2} {} {name}: {} ({:.1} s)",
        if o.pass { "PASS" } else { "FAIL" },
        o.detail,
        started.elapsed().as_secs_f64()
    );
    o.pass
}

fn main() {
    let mut all = true;

    // timing first, while nothing else runs
    let t = Instant::now();
    all &= report(4, "mitigation overhead", t, &overhead());

    let t = Instant::now();
    let (c1, c2) = filter_equivalence();
    all &= report(1, "filter oracle equivalence", t, &c1);
    all &= report(2, "mitigation functional equivalence", t, &c2);

    let t = Instant::now();
    all &= report(3, "mitigation leak closure", t, &leak_closure());

    let t = Instant::now();
    let e = experiment(500);
    all &= report(5, "fingerprint separation", t, &separation(&e));
    let t = Instant::now();
    all &= report(6, "uniqueness radius growth", t, &growth(&e));
    drop(e);

    let t = Instant::now();
    all &= report(7, "channel reconstruction", t, &reconstruction());

    let t = Instant::now();
    all &= report(8, "noise filtering", t, &noise_filtering());

    let t = Instant::now();
    let (eval, bytes) = evaluation_report(200);
    all &= report(9, "end-to-end evaluation", t, &end_to_end(&eval));

    let t = Instant::now();
    all &= report(10, "quantile precision", t, &quantile_precision());

    let t = Instant::now();
    all &= report(11, "reproducibility", t, &reproducibility(&bytes));

    println!(
        "acceptance: {}",
        if all { "all criteria pass" } else { "FAILED" }
    );
    if !all {
        std::process::exit(1);
    }
}
