//! Nucleus size series and the quantities defined on them: variability,
//! the positional similarity predicate, and Euclidean distance.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::model::{
    InterchangeReader, InterchangeWriter, NgramModel, NssHeader, Payload, Scratch, Sequence,
};
use crate::sampler;
use crate::scalar::{pairwise_sum, Scalar};

/// Variability threshold used with a GPT-2-sized vocabulary.
pub const DEFAULT_VARIABILITY_THRESHOLD: f64 = 1450.0;
/// Length of the shared run that makes two sequences similar.
pub const DEFAULT_SIMILARITY_WINDOW: usize = 50;
pub const DEFAULT_Q: f64 = 0.9;

/// Nucleus size series of one sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct Nss {
    pub seq_id: String,
    pub q: f64,
    pub model_id: String,
    pub sizes: Vec<u32>,
}

impl Nss {
    pub fn len(&self) -> usize {
        self.sizes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sizes.is_empty()
    }

    /// First `len` positions.
    pub fn truncated(&self, len: usize) -> Nss {
        Nss {
            sizes: self.sizes[..len.min(self.sizes.len())].to_vec(),
            ..self.clone()
        }
    }

    pub fn as_scalars<S: Scalar>(&self) -> Vec<S> {
        self.sizes.iter().map(|&s| S::of(s as f64)).collect()
    }
}

/// Generates series for many sequences, reusing per-context results.
pub struct NssGenerator<'m> {
    model: &'m NgramModel,
    q: f64,
    cache: HashMap<(usize, u128), u32>,
    scratch: Scratch,
}

impl<'m> NssGenerator<'m> {
    pub fn new(model: &'m NgramModel, q: f64) -> Result<Self> {
        if !(q > 0.0 && q <= 1.0) {
            return Err(Error::Usage(format!("q must be in (0, 1], got {q}")));
        }
        Ok(NssGenerator {
            model,
            q,
            cache: HashMap::new(),
            scratch: Scratch::default(),
        })
    }

    pub fn generate(&mut self, sequence: &Sequence) -> Result<Nss> {
        let v = self.model.vocab_size();
        if let Some(&bad) = sequence.words().iter().find(|&&w| w as usize >= v) {
            return Err(Error::Validation(format!(
                "sequence {:?} contains token id {bad} unknown to the model",
                sequence.id()
            )));
        }
        let mut sizes = Vec::with_capacity(sequence.len());
        for t in 0..sequence.len() {
            let ctx = self.model.context(sequence, t)?;
            let key = (
                ctx.len(),
                ctx.iter().fold(0u128, |acc, &w| (acc << 32) | w as u128),
            );
            let size = match self.cache.get(&key) {
                Some(&s) => s,
                None => {
                    let s = self
                        .model
                        .nucleus_size_for_context(ctx, self.q, &mut self.scratch);
                    self.cache.insert(key, s);
                    s
                }
            };
            sizes.push(size);
        }
        Ok(Nss {
            seq_id: sequence.id().to_owned(),
            q: self.q,
            model_id: self.model.model_id().to_owned(),
            sizes,
        })
    }
}

/// Nucleus size at every prefix of `sequence`, resetting the context at
/// each session boundary.
pub fn generate_nss(model: &NgramModel, sequence: &Sequence, q: f64) -> Result<Nss> {
    NssGenerator::new(model, q)?.generate(sequence)
}

/// Reference path: materializes every distribution. Slow; used to check the
/// fast path.
pub fn generate_nss_dense(model: &NgramModel, sequence: &Sequence, q: f64) -> Result<Nss> {
    let sizes = (0..sequence.len())
        .map(|t| sampler::nucleus_size(&model.next_distribution(sequence, t)?, q))
        .collect::<Result<Vec<u32>>>()?;
    Ok(Nss {
        seq_id: sequence.id().to_owned(),
        q,
        model_id: model.model_id().to_owned(),
        sizes,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VariabilityReport<S = f64> {
    pub mean: S,
    pub variability: S,
    pub threshold: S,
    pub is_variable: bool,
}

/// Population standard deviation of the series, compared strictly against
/// `threshold`.
pub fn variability<S: Scalar>(sizes: &[u32], threshold: S) -> VariabilityReport<S> {
    let n = S::of_usize(sizes.len().max(1));
    let value = |i: usize| S::of(sizes[i] as f64);
    let mean = pairwise_sum(sizes.len(), &value) / n;
    let var = pairwise_sum(sizes.len(), &|i| {
        let d = value(i) - mean;
        d * d
    }) / n;
    let variability = var.sqrt();
    VariabilityReport {
        mean,
        variability,
        threshold,
        is_variable: variability > threshold,
    }
}

/// Longest run of positions where the two sequences agree.
pub fn longest_positional_match(x: &[u32], y: &[u32]) -> usize {
    let mut best = 0;
    let mut run = 0;
    for (a, b) in x.iter().zip(y) {
        if a == b {
            run += 1;
            best = best.max(run);
        } else {
            run = 0;
        }
    }
    best
}

/// True iff both sequences share an identical run of `window` words starting
/// at the same index.
pub fn similar_words(x: &[u32], y: &[u32], window: usize) -> Result<bool> {
    if x.len() != y.len() {
        return Err(Error::Usage(format!(
            "similarity needs equal lengths, got {} and {}",
            x.len(),
            y.len()
        )));
    }
    if window == 0 {
        return Err(Error::Usage("similarity window must be >= 1".into()));
    }
    Ok(longest_positional_match(x, y) >= window)
}

pub fn similar(x: &Sequence, y: &Sequence, window: usize) -> Result<bool> {
    similar_words(x.words(), y.words(), window)
}

/// Euclidean distance with pairwise summation of the squared terms.
pub fn euclidean<S: Scalar>(a: &[S], b: &[S]) -> S {
    debug_assert_eq!(a.len(), b.len());
    pairwise_sum(a.len().min(b.len()), &|i| {
        let d = a[i] - b[i];
        d * d
    })
    .sqrt()
}

/// Distance between an integer series and a real-valued one (a trace).
pub fn euclidean_sizes<S: Scalar>(sizes: &[u32], other: &[S]) -> S {
    debug_assert_eq!(sizes.len(), other.len());
    pairwise_sum(sizes.len().min(other.len()), &|i| {
        let d = S::of(sizes[i] as f64) - other[i];
        d * d
    })
    .sqrt()
}

pub fn nss_distance<S: Scalar>(a: &Nss, b: &Nss) -> Result<S> {
    if a.len() != b.len() {
        return Err(Error::Usage(format!(
            "distance needs equal lengths, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    Ok(pairwise_sum(a.len(), &|i| {
        let d = S::of(a.sizes[i] as f64) - S::of(b.sizes[i] as f64);
        d * d
    })
    .sqrt())
}

/// Distances between every unordered pair of equal-length series where at
/// least one side is variable and the underlying sequences are not similar.
///
/// `sequences[i]` must be the text behind `series[i]`.
pub fn fingerprint_distances(
    series: &[Nss],
    sequences: &[Sequence],
    threshold: f64,
    window: usize,
) -> Result<Vec<f64>> {
    if series.len() != sequences.len() {
        return Err(Error::Usage("need one sequence per series".into()));
    }
    let variable: Vec<bool> = series
        .iter()
        .map(|s| variability(&s.sizes, threshold).is_variable)
        .collect();
    let mut out = Vec::new();
    for i in 0..series.len() {
        for j in i + 1..series.len() {
            if !(variable[i] || variable[j]) {
                continue;
            }
            if similar(&sequences[i], &sequences[j], window)? {
                continue;
            }
            out.push(nss_distance::<f64>(&series[i], &series[j])?);
        }
    }
    Ok(out)
}

/// Writes series in the interchange format (`n=` payloads). A vocabulary
/// size, when given, is recorded in the header as `vocab=`.
pub fn write_nss<W: Write>(out: W, series: &[Nss], vocab_size: Option<usize>) -> Result<()> {
    let (model_id, q) = match series.first() {
        Some(s) => (s.model_id.clone(), s.q),
        None => (String::from("none"), DEFAULT_Q),
    };
    if series.iter().any(|s| s.model_id != model_id || s.q != q) {
        return Err(Error::Usage(
            "all series in one file must share model and q".into(),
        ));
    }
    let io = |e: std::io::Error| Error::Internal(format!("write failed: {e}"));
    let mut header = NssHeader::new(model_id, q);
    if let Some(v) = vocab_size {
        header.extra.push(("vocab".into(), v.to_string()));
    }
    let mut w = InterchangeWriter::new(out, &header).map_err(io)?;
    for s in series {
        for (t, &size) in s.sizes.iter().enumerate() {
            w.nucleus_size(&s.seq_id, t, size).map_err(io)?;
        }
    }
    w.finish().map_err(io)?;
    Ok(())
}

/// Reads series from an interchange file. `p=` records are converted to
/// nucleus sizes with the header's `q`. Positions of each sequence must be
/// `0, 1, 2, ...` in file order.
pub fn read_nss<R: BufRead>(input: R) -> Result<Vec<Nss>> {
    Ok(read_nss_with_header(input)?.1)
}

/// [`read_nss`], also returning the header of a non-empty file.
pub fn read_nss_with_header<R: BufRead>(input: R) -> Result<(Option<NssHeader>, Vec<Nss>)> {
    let reader = InterchangeReader::new(input)?;
    let Some(header) = reader.header().cloned() else {
        return Ok((None, Vec::new()));
    };
    let mut series: Vec<Nss> = Vec::new();
    let mut slot: HashMap<String, usize> = HashMap::new();
    for rec in reader {
        let rec = rec?;
        let size = match &rec.payload {
            Payload::NucleusSize(n) => *n,
            Payload::Distribution(d) => sampler::nucleus_size(d, header.q)?,
        };
        let idx = *slot.entry(rec.seq_id.clone()).or_insert_with(|| {
            series.push(Nss {
                seq_id: rec.seq_id.clone(),
                q: header.q,
                model_id: header.model_id.clone(),
                sizes: Vec::new(),
            });
            series.len() - 1
        });
        let s = &mut series[idx];
        if rec.position != s.sizes.len() {
            return Err(Error::Validation(format!(
                "sequence {:?}: expected position {}, found {}",
                rec.seq_id,
                s.sizes.len(),
                rec.position
            )));
        }
        s.sizes.push(size);
    }
    Ok((Some(header), series))
}
