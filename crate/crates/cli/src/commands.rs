use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use nssfp_core::corpus::{
    aggregate_by_author, load_corpus, read_sequences, save_corpus, write_sequences, CorpusFormat,
    PostCorpus, SyntheticConfig, SyntheticScale, SyntheticSetup,
};
use nssfp_core::fingerprint::{
    fingerprint_distances, read_nss_with_header, variability, write_nss, NssGenerator,
};
use nssfp_core::matcher::{
    corpus_series, filter_batch, fit_models, match_all, match_nss, run_pipeline, simulate_traces,
    EvalConfig, MatchModels,
};
use nssfp_core::model::{train_model, Smoothing};
use nssfp_core::sampler::bench::{
    bench_both, bench_filter, slowdown, summarize, write_report, TimingSample,
};
use nssfp_core::sidechannel::{read_traces, write_traces};
use nssfp_core::stats::{
    read_fit_report, smoothed_histogram, uniqueness_radius, write_fit_report, FitRow,
    PairwiseDistanceSample, DEFAULT_SMOOTHING_WINDOW,
};
use nssfp_core::{Error, NgramModel, Nss, PipelineConfig, Result, Sequence, Variant, Vocabulary};

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::io(path, e))
}

fn finish(mut w: BufWriter<File>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

fn write_with<F>(path: &Path, f: F) -> Result<()>
where
    F: FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
{
    let mut w = create(path)?;
    f(&mut w).map_err(|e| Error::io(path, e))?;
    finish(w, path)
}

#[derive(Args, Debug)]
pub struct SyntheticArgs {
    /// Number of authors in the synthetic evaluation corpus
    #[arg(long, default_value_t = 200)]
    authors: usize,

    /// Words written by each synthetic author (default: the sequence length)
    #[arg(long)]
    words_per_author: Option<usize>,

    /// Words of synthetic training text
    #[arg(long, default_value_t = 1_000_000)]
    train_words: usize,

    #[arg(long, default_value_t = 50_257)]
    lexicon_size: usize,
}

fn synthetic_setup(args: &SyntheticArgs, cfg: &PipelineConfig) -> Result<SyntheticSetup> {
    let scale = SyntheticScale {
        authors: args.authors,
        words_per_author: args.words_per_author.unwrap_or(cfg.sequence_length),
        train_words: args.train_words,
    };
    let language = SyntheticConfig {
        lexicon_size: args.lexicon_size,
        seed: cfg.seed,
        ..Default::default()
    };
    let setup = SyntheticSetup::build(language, &scale, cfg.order)?;
    log::info!(
        "synthetic language: {} words, model {}",
        args.lexicon_size,
        setup.model.model_id()
    );
    Ok(setup)
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Training corpus
    #[arg(
        long,
        required_unless_present = "synthetic",
        conflicts_with = "synthetic"
    )]
    corpus: Option<PathBuf>,

    #[arg(long, default_value = "tsv_posts")]
    format: CorpusFormat,

    /// Train on synthetic text instead of a corpus
    #[arg(long)]
    synthetic: bool,

    #[command(flatten)]
    synth: SyntheticArgs,

    /// Further corpora (same format) whose words join the vocabulary
    #[arg(long, value_name = "PATH")]
    extra_vocab: Vec<PathBuf>,

    /// With --synthetic, also write an evaluation corpus from the same language
    #[arg(long, value_name = "PATH")]
    emit_corpus: Option<PathBuf>,

    /// Model file to write
    #[arg(long)]
    out: PathBuf,
}

pub fn train(args: &TrainArgs, cfg: &PipelineConfig) -> Result<()> {
    let model = if args.synthetic {
        let setup = synthetic_setup(&args.synth, cfg)?;
        if let Some(path) = &args.emit_corpus {
            save_corpus(path, &setup.corpus)?;
            println!(
                "wrote {} posts to {}",
                setup.corpus.posts.len(),
                path.display()
            );
        }
        setup.model
    } else {
        let path = args.corpus.as_deref().expect("clap requires --corpus");
        let corpus = load_corpus(path, args.format)?;
        let extra = args
            .extra_vocab
            .iter()
            .map(|p| load_corpus(p, args.format))
            .collect::<Result<Vec<_>>>()?;
        let vocab = Vocabulary::from_stream(
            std::iter::once(&corpus)
                .chain(&extra)
                .flat_map(|c| c.posts.iter().flat_map(|p| p.words.iter())),
        )?;
        let training: Vec<Sequence> = aggregate_by_author(&corpus, &vocab, usize::MAX, 1)?
            .into_iter()
            .map(|a| a.sequence)
            .collect();
        train_model(
            &vocab,
            &training,
            cfg.order,
            Smoothing::for_order(cfg.order)?,
        )?
    };
    model.save(&args.out)?;
    println!(
        "model {} (order {}, {} words) written to {}",
        model.model_id(),
        model.order(),
        model.vocab_size(),
        args.out.display()
    );
    Ok(())
}

#[derive(Args, Debug)]
pub struct NssArgs {
    #[arg(long)]
    model: PathBuf,

    #[arg(long)]
    corpus: PathBuf,

    #[arg(long, default_value = "tsv_posts")]
    format: CorpusFormat,

    /// Authors with fewer words are skipped (default: the sequence length)
    #[arg(long)]
    min_words: Option<usize>,

    /// Series file to write
    #[arg(long)]
    out: PathBuf,

    /// Sequence file to write
    #[arg(long)]
    seqs_out: PathBuf,
}

fn generate_all(model: &NgramModel, sequences: &[Sequence], q: f64) -> Result<Vec<Nss>> {
    let mut generator = NssGenerator::new(model, q)?;
    sequences.iter().map(|s| generator.generate(s)).collect()
}

fn author_sequences(
    model: &NgramModel,
    corpus: &PostCorpus,
    cfg: &PipelineConfig,
    min_words: usize,
) -> Result<Vec<Sequence>> {
    let authors = aggregate_by_author(corpus, model.vocab(), cfg.word_cap, min_words)?;
    log::info!(
        "{} of {} posts aggregated into {} author sequences",
        authors.iter().map(|a| a.post_count).sum::<usize>(),
        corpus.posts.len(),
        authors.len()
    );
    Ok(authors.into_iter().map(|a| a.sequence).collect())
}

pub fn nss(args: &NssArgs, cfg: &PipelineConfig) -> Result<()> {
    let model = NgramModel::load(&args.model)?;
    let corpus = load_corpus(&args.corpus, args.format)?;
    let sequences = author_sequences(
        &model,
        &corpus,
        cfg,
        args.min_words.unwrap_or(cfg.sequence_length),
    )?;
    let series = generate_all(&model, &sequences, cfg.q)?;
    let mut w = create(&args.out)?;
    write_nss(&mut w, &series, Some(model.vocab_size()))?;
    finish(w, &args.out)?;
    write_with(&args.seqs_out, |w| {
        write_sequences(w, &sequences, model.vocab_size())
    })?;
    println!("{} series written to {}", series.len(), args.out.display());
    Ok(())
}

struct SeriesFile {
    series: Vec<Nss>,
    vocab_size: Option<usize>,
}

fn load_series(path: &Path) -> Result<SeriesFile> {
    let (header, series) = read_nss_with_header(open(path)?)?;
    let vocab_size = match header.as_ref().and_then(|h| h.get("vocab")) {
        Some(v) => Some(
            v.parse()
                .map_err(|_| Error::parse(path.display().to_string(), format!("bad vocab={v}")))?,
        ),
        None => None,
    };
    Ok(SeriesFile { series, vocab_size })
}

/// Sequences reordered to match `series` by id.
fn load_sequences_for(path: &Path, series: &[Nss]) -> Result<Vec<Sequence>> {
    let (_, sequences) = read_sequences(open(path)?)?;
    let mut by_id: HashMap<String, Sequence> = sequences
        .into_iter()
        .map(|s| (s.id().to_owned(), s))
        .collect();
    series
        .iter()
        .map(|s| {
            by_id
                .remove(&s.seq_id)
                .ok_or_else(|| Error::Validation(format!("no sequence for series {:?}", s.seq_id)))
        })
        .collect()
}

fn truncate_series(series: &[Nss], length: usize) -> Result<Vec<Nss>> {
    if let Some(s) = series.iter().find(|s| s.len() < length) {
        return Err(Error::Usage(format!(
            "series {:?} has {} positions, shorter than N = {length}",
            s.seq_id,
            s.len()
        )));
    }
    Ok(series.iter().map(|s| s.truncated(length)).collect())
}

fn truncate_sequences(sequences: &[Sequence], length: usize) -> Result<Vec<Sequence>> {
    sequences.iter().map(|s| s.truncated(length)).collect()
}

fn lengths_or_default(lengths: &[usize], cfg: &PipelineConfig) -> Vec<usize> {
    if lengths.is_empty() {
        vec![cfg.sequence_length]
    } else {
        lengths.to_vec()
    }
}

fn eval_config_for(cfg: &PipelineConfig, length: usize) -> EvalConfig {
    EvalConfig {
        length,
        ..cfg.eval_config()
    }
}

#[derive(Args, Debug)]
pub struct AnalyzeArgs {
    #[arg(long)]
    nss: PathBuf,

    #[arg(long)]
    seqs: PathBuf,

    /// Lengths for the distance histograms (default: the sequence length)
    #[arg(long, value_delimiter = ',')]
    lengths: Vec<usize>,

    #[arg(long, default_value_t = 100)]
    buckets: usize,

    #[arg(long, default_value_t = DEFAULT_SMOOTHING_WINDOW)]
    window: usize,

    /// Per-sequence variability at the sequence length
    #[arg(long)]
    out: PathBuf,

    /// Smoothed histogram rows `N, distance, density`
    #[arg(long)]
    histogram: Option<PathBuf>,
}

pub fn analyze(args: &AnalyzeArgs, cfg: &PipelineConfig) -> Result<()> {
    let file = load_series(&args.nss)?;
    let sequences = load_sequences_for(&args.seqs, &file.series)?;
    let at_n = truncate_series(&file.series, cfg.sequence_length)?;
    let reports: Vec<_> = at_n
        .iter()
        .map(|s| variability::<f64>(&s.sizes, cfg.variability_threshold))
        .collect();
    write_with(&args.out, |w| {
        writeln!(w, "seq_id, mean, variability, is_variable")?;
        for (s, r) in at_n.iter().zip(&reports) {
            writeln!(
                w,
                "{}, {}, {}, {}",
                s.seq_id, r.mean, r.variability, r.is_variable
            )?;
        }
        Ok(())
    })?;
    println!(
        "{} of {} sequences variable at N = {}",
        reports.iter().filter(|r| r.is_variable).count(),
        reports.len(),
        cfg.sequence_length
    );

    let mut rows = Vec::new();
    for n in lengths_or_default(&args.lengths, cfg) {
        let series = truncate_series(&file.series, n)?;
        let seqs = truncate_sequences(&sequences, n)?;
        let distances = fingerprint_distances(
            &series,
            &seqs,
            cfg.variability_threshold,
            cfg.similarity_window,
        )?;
        let min = distances.iter().copied().fold(f64::INFINITY, f64::min);
        let sample = PairwiseDistanceSample::new(n, distances)?;
        match uniqueness_radius(&sample, cfg.epsilon) {
            Ok(u) => println!(
                "N = {n}: {} pairs, min distance {min}, U = {} at epsilon {}",
                sample.distances().len(),
                u.radius,
                cfg.epsilon
            ),
            Err(e) => println!(
                "N = {n}: {} pairs, min distance {min}, no fit ({e})",
                sample.distances().len()
            ),
        }
        if args.histogram.is_some() && !sample.distances().is_empty() {
            for (x, density) in smoothed_histogram(sample.distances(), args.buckets, args.window)? {
                rows.push((n, x, density));
            }
        }
    }
    if let Some(path) = &args.histogram {
        write_with(path, |w| {
            writeln!(w, "N, distance, density")?;
            for (n, x, d) in &rows {
                writeln!(w, "{n}, {x}, {d}")?;
            }
            Ok(())
        })?;
    }
    Ok(())
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[arg(long)]
    nss: PathBuf,

    /// Vocabulary size of the victim model (default: from the series file)
    #[arg(long)]
    vocab_size: Option<usize>,

    /// Trace file to write
    #[arg(long)]
    out: PathBuf,
}

pub fn simulate(args: &SimulateArgs, cfg: &PipelineConfig) -> Result<()> {
    let file = load_series(&args.nss)?;
    let vocab_size = args
        .vocab_size
        .or(file.vocab_size)
        .ok_or_else(|| Error::Usage("vocabulary size unknown; pass --vocab-size".into()))?;
    let series = truncate_series(&file.series, cfg.sequence_length)?;
    let traces = simulate_traces(&series, vocab_size, &cfg.channel, cfg.seed)?;
    let mut w = create(&args.out)?;
    write_traces(&mut w, &traces, cfg.seed)?;
    finish(w, &args.out)?;
    let zero: usize = traces.iter().map(|t| t.zero_hit_steps.len()).sum();
    println!(
        "{} traces written to {} ({zero} zero-hit steps)",
        traces.len(),
        args.out.display()
    );
    Ok(())
}

#[derive(Args, Debug)]
pub struct FitArgs {
    #[arg(long)]
    nss: PathBuf,

    #[arg(long)]
    seqs: PathBuf,

    #[arg(long)]
    traces: PathBuf,

    /// Lengths to fit (default: the sequence length)
    #[arg(long, value_delimiter = ',')]
    lengths: Vec<usize>,

    /// Fit report to write
    #[arg(long)]
    out: PathBuf,
}

pub fn fit(args: &FitArgs, cfg: &PipelineConfig) -> Result<()> {
    let file = load_series(&args.nss)?;
    let sequences = load_sequences_for(&args.seqs, &file.series)?;
    let (_, traces) = read_traces(open(&args.traces)?, cfg.channel.cycles_per_iteration)?;
    let batch = filter_batch(traces, cfg.drop_fraction)?;
    log::info!(
        "global slope {} cycles/iteration; dropped {} noisy traces",
        batch.global_slope,
        batch.dropped.len()
    );
    let mut rows = Vec::new();
    for n in lengths_or_default(&args.lengths, cfg) {
        let series = truncate_series(&file.series, n)?;
        let seqs = truncate_sequences(&sequences, n)?;
        let kept: Vec<_> = batch.kept.iter().map(|t| t.truncated(n)).collect();
        let models = fit_models(&seqs, &series, &kept, &eval_config_for(cfg, n))?;
        println!(
            "N = {n}: U = {}, d = {}, tau = {}{}",
            models.uniqueness.radius,
            models.error.bound,
            models.threshold(),
            if models.error.is_matchable() {
                ""
            } else {
                " (not matchable)"
            }
        );
        rows.push(FitRow {
            uniqueness: models.uniqueness,
            error: models.error,
        });
    }
    write_with(&args.out, |w| write_fit_report(w, &rows))
}

fn models_for(path: &Path, length: usize) -> Result<MatchModels> {
    let rows = read_fit_report(open(path)?)?;
    let row = rows
        .iter()
        .find(|r| r.uniqueness.length == length)
        .ok_or_else(|| Error::Usage(format!("{} has no fit for N = {length}", path.display())))?;
    MatchModels::new(row.uniqueness, row.error)
}

#[derive(Args, Debug)]
pub struct MatchArgs {
    #[arg(long)]
    nss: PathBuf,

    #[arg(long)]
    traces: PathBuf,

    /// Fit report containing a row for the sequence length
    #[arg(long)]
    fit: PathBuf,

    /// Report every window below the threshold instead of the first
    #[arg(long)]
    exhaustive: bool,

    /// Match results to write
    #[arg(long)]
    out: PathBuf,
}

pub fn match_cmd(args: &MatchArgs, cfg: &PipelineConfig) -> Result<()> {
    let file = load_series(&args.nss)?;
    let series = truncate_series(&file.series, cfg.sequence_length)?;
    let models = models_for(&args.fit, cfg.sequence_length)?;
    if !models.error.is_matchable() {
        log::warn!(
            "tau = {} <= 0: no match can be declared safely",
            models.threshold()
        );
    }
    let (_, traces) = read_traces(open(&args.traces)?, cfg.channel.cycles_per_iteration)?;
    let batch = filter_batch(traces, cfg.drop_fraction)?;
    let mut results = Vec::new();
    for x in &series {
        if args.exhaustive {
            for r in match_all(x, &batch.kept, &models, cfg.variability_threshold)? {
                results.push((x.seq_id.clone(), r));
            }
        } else {
            results.push((
                x.seq_id.clone(),
                match_nss(x, &batch.kept, &models, cfg.variability_threshold)?,
            ));
        }
    }
    let own = results
        .iter()
        .filter(|(id, r)| r.trace_id.as_deref() == Some(id.as_str()))
        .count();
    let other = results
        .iter()
        .filter(|(id, r)| r.trace_id.as_deref().is_some_and(|t| t != id))
        .count();
    write_with(&args.out, |w| {
        writeln!(w, "seq_id, verdict, trace_id, offset, distance, threshold")?;
        for (id, r) in &results {
            let opt = |v: Option<String>| v.unwrap_or_else(|| "-".into());
            writeln!(
                w,
                "{id}, {}, {}, {}, {}, {}",
                r.verdict.name(),
                opt(r.trace_id.clone()),
                opt(r.offset.map(|o| o.to_string())),
                opt(r.distance.map(|d| d.to_string())),
                r.threshold_used
            )?;
        }
        Ok(())
    })?;
    println!("matches to own trace: {own}; matches to other traces: {other}");
    Ok(())
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    /// Series file (default: generate a synthetic corpus)
    #[arg(long, requires = "seqs")]
    nss: Option<PathBuf>,

    #[arg(long)]
    seqs: Option<PathBuf>,

    /// Vocabulary size of the victim model (default: from the series file)
    #[arg(long)]
    vocab_size: Option<usize>,

    #[command(flatten)]
    synth: SyntheticArgs,

    /// Evaluation report to write
    #[arg(long)]
    out: PathBuf,

    /// Also write the fitted models
    #[arg(long)]
    fit_out: Option<PathBuf>,
}

pub fn evaluate(args: &EvaluateArgs, cfg: &PipelineConfig) -> Result<()> {
    let (sequences, series, vocab_size) = match (&args.nss, &args.seqs) {
        (Some(nss), Some(seqs)) => {
            let file = load_series(nss)?;
            let vocab_size = args
                .vocab_size
                .or(file.vocab_size)
                .ok_or_else(|| Error::Usage("vocabulary size unknown; pass --vocab-size".into()))?;
            let sequences = load_sequences_for(seqs, &file.series)?;
            (sequences, file.series, vocab_size)
        }
        _ => {
            let setup = synthetic_setup(&args.synth, cfg)?;
            let (sequences, series) = corpus_series(&setup.model, &setup.corpus, cfg)?;
            (sequences, series, setup.model.vocab_size())
        }
    };
    let report = run_pipeline(&sequences, &series, vocab_size, &cfg.eval_config())?;
    write_with(&args.out, |w| report.write(w))?;
    if let Some(path) = &args.fit_out {
        let row = FitRow {
            uniqueness: report.models.uniqueness,
            error: report.models.error,
        };
        write_with(path, |w| write_fit_report(w, &[row]))?;
    }
    println!(
        "N = {}: recall {} ({} of {} variable), false positives {}, filtered {}, tau {}",
        cfg.sequence_length,
        report.recall,
        report.true_matches,
        report.variable_count,
        report.false_positives,
        report.filtered_noisy,
        report.models.threshold()
    );
    Ok(())
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum BenchVariant {
    Vulnerable,
    Mitigated,
    Both,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    #[arg(long, value_enum, default_value = "both")]
    variant: BenchVariant,

    #[arg(long, default_value_t = 50_257)]
    vocab_size: usize,

    #[arg(long, default_value_t = 200)]
    trials: usize,

    /// Timing samples `variant, vocab_size, nucleus_size, loop_time_ns`
    #[arg(long)]
    out: PathBuf,
}

fn print_summary(samples: &[TimingSample]) {
    if let Some(s) = summarize(samples) {
        let corr = s
            .size_time_correlation
            .map_or_else(|| "n/a".to_owned(), |c| format!("{c:.3}"));
        println!(
            "{}: median {} ns, mean {:.0} ns, corr(nucleus size, time) {corr}, iteration variance {}",
            s.variant.name(),
            s.median_loop_time_ns,
            s.mean_loop_time_ns,
            s.iteration_variance
        );
    }
}

pub fn bench(args: &BenchArgs, cfg: &PipelineConfig) -> Result<()> {
    let samples = match args.variant {
        BenchVariant::Both => {
            let (v, m) = bench_both(args.vocab_size, args.trials, cfg.seed)?;
            print_summary(&v);
            print_summary(&m);
            if let Some(r) = slowdown(&v, &m) {
                println!("slowdown (mitigated / vulnerable median): {r:.3}x");
            }
            v.into_iter().chain(m).collect()
        }
        one => {
            let variant = match one {
                BenchVariant::Vulnerable => Variant::Vulnerable,
                _ => Variant::Mitigated,
            };
            let s = bench_filter(variant, args.vocab_size, args.trials, cfg.seed)?;
            print_summary(&s);
            s
        }
    };
    write_with(&args.out, |w| write_report(w, &samples))
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    /// Fit report from `fit` or `evaluate --fit-out`
    #[arg(long, required_unless_present = "evaluation")]
    fit: Option<PathBuf>,

    /// Evaluation report from `evaluate`
    #[arg(long)]
    evaluation: Option<PathBuf>,
}

pub fn report(args: &ReportArgs, _cfg: &PipelineConfig) -> Result<()> {
    if let Some(path) = &args.fit {
        println!(
            "{:>8} {:>14} {:>14} {:>14} {:>10}",
            "N", "U", "d", "tau", "matchable"
        );
        for r in read_fit_report(open(path)?)? {
            println!(
                "{:>8} {:>14.1} {:>14.1} {:>14.1} {:>10}",
                r.uniqueness.length,
                r.uniqueness.radius,
                r.error.bound,
                r.error.tau,
                r.error.is_matchable()
            );
        }
    }
    if let Some(path) = &args.evaluation {
        let (mut rows, mut variable, mut matched, mut dropped) = (0, 0, 0, 0);
        for (i, line) in open(path)?.lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if let Some(summary) = line.strip_prefix("# ") {
                println!("{summary}");
                continue;
            }
            if line.starts_with("seq_id") || line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(", ").collect();
            if f.len() != 5 {
                return Err(Error::parse(
                    format!("{}:{}", path.display(), i + 1),
                    "expected 5 fields",
                ));
            }
            rows += 1;
            variable += (f[2] == "true") as usize;
            dropped += (f[3] == "dropped") as usize;
            matched += (f[4] == "true") as usize;
        }
        println!(
            "{rows} sequences: {variable} variable, {dropped} traces dropped, {matched} matched"
        );
    }
    Ok(())
}
