use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::distribution::Distribution;
use super::vocab::{Sequence, Vocabulary};
use crate::error::{Error, Result};
use crate::sampler;

pub const MAX_ORDER: usize = 5;

/// Interpolation weights, indexed by context length (0 = unigram).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Smoothing {
    weights: Vec<f64>,
}

impl Smoothing {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() || weights.len() > MAX_ORDER {
            return Err(Error::Config(format!(
                "need between 1 and {MAX_ORDER} interpolation weights, got {}",
                weights.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::Config(format!(
                "interpolation weights must be non-negative: {weights:?}"
            )));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "interpolation weights sum to {total}, expected 1"
            )));
        }
        Ok(Smoothing { weights })
    }

    /// Weights for an order-`order` model: the default 0.1/0.3/0.6 for
    /// trigrams, uniform otherwise.
    pub fn for_order(order: usize) -> Result<Self> {
        if order == 3 {
            return Ok(Smoothing::default());
        }
        if order == 0 || order > MAX_ORDER {
            return Err(Error::Config(format!(
                "order must be in [1, {MAX_ORDER}], got {order}"
            )));
        }
        Smoothing::new(vec![1.0 / order as f64; order])
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn order(&self) -> usize {
        self.weights.len()
    }
}

impl Default for Smoothing {
    fn default() -> Self {
        Smoothing {
            weights: vec![0.1, 0.3, 0.6],
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
struct ContextCounts {
    total: u64,
    /// (next token, count), sorted by token id.
    next: Vec<(u32, u64)>,
}

/// Context key: up to four 32-bit ids packed into a `u128`.
fn pack(ctx: &[u32]) -> u128 {
    ctx.iter().fold(0u128, |acc, &w| (acc << 32) | w as u128)
}

/// Jelinek-Mercer interpolated n-gram model with an add-one unigram floor.
///
/// A level whose context was never observed hands its weight down to the
/// next lower level, so every context yields a normalized distribution.
#[derive(Clone, Debug)]
pub struct NgramModel {
    order: usize,
    smoothing: Smoothing,
    vocab: Vocabulary,
    unigram_counts: Vec<u64>,
    /// `tables[k - 1]` maps a packed k-word context to its continuation counts.
    tables: Vec<HashMap<u128, ContextCounts>>,
    unigram_probs: Vec<f64>,
    /// Token ids by descending add-one unigram probability, ties by id.
    unigram_order: Vec<u32>,
    model_id: String,
}

/// Interpolation structure for one conditioning context.
struct Resolved<'a> {
    unigram_weight: f64,
    /// Observed levels in ascending context length.
    levels: Vec<(f64, &'a ContextCounts)>,
}

impl Resolved<'_> {
    fn term(weight: f64, counts: &ContextCounts, c: u64) -> f64 {
        weight * (c as f64 / counts.total as f64)
    }
}

pub fn train_model(
    vocab: &Vocabulary,
    corpus: &[Sequence],
    order: usize,
    smoothing: Smoothing,
) -> Result<NgramModel> {
    if corpus.is_empty() {
        return Err(Error::Config("training corpus is empty".into()));
    }
    if order == 0 || order > MAX_ORDER {
        return Err(Error::Config(format!(
            "order must be in [1, {MAX_ORDER}], got {order}"
        )));
    }
    if smoothing.order() != order {
        return Err(Error::Config(format!(
            "order {order} needs {order} interpolation weights, got {}",
            smoothing.order()
        )));
    }
    let v = vocab.len();
    let mut unigram_counts = vec![0u64; v];
    let mut raw: Vec<HashMap<u128, HashMap<u32, u64>>> = vec![HashMap::new(); order - 1];
    for seq in corpus {
        let words = seq.words();
        if let Some(&bad) = words.iter().find(|&&w| w as usize >= v) {
            return Err(Error::Validation(format!(
                "sequence {:?} has token id {bad} outside the vocabulary",
                seq.id()
            )));
        }
        for (t, &w) in words.iter().enumerate() {
            unigram_counts[w as usize] += 1;
            let available = t - seq.session_start(t);
            for k in 1..order.min(available + 1) {
                let key = pack(&words[t - k..t]);
                *raw[k - 1].entry(key).or_default().entry(w).or_default() += 1;
            }
        }
    }
    let tables = raw
        .into_iter()
        .map(|table| {
            table
                .into_iter()
                .map(|(key, next)| {
                    let mut next: Vec<(u32, u64)> = next.into_iter().collect();
                    next.sort_unstable();
                    let total = next.iter().map(|&(_, c)| c).sum();
                    (key, ContextCounts { total, next })
                })
                .collect()
        })
        .collect();
    Ok(NgramModel::assemble(
        order,
        smoothing,
        vocab.clone(),
        unigram_counts,
        tables,
    ))
}

impl NgramModel {
    fn assemble(
        order: usize,
        smoothing: Smoothing,
        vocab: Vocabulary,
        unigram_counts: Vec<u64>,
        tables: Vec<HashMap<u128, ContextCounts>>,
    ) -> Self {
        let v = vocab.len() as f64;
        let total: u64 = unigram_counts.iter().sum();
        let denom = total as f64 + v;
        let unigram_probs: Vec<f64> = unigram_counts
            .iter()
            .map(|&c| (c as f64 + 1.0) / denom)
            .collect();
        let unigram_order = sampler::descending_order(&unigram_probs);
        let mut model = NgramModel {
            order,
            smoothing,
            vocab,
            unigram_counts,
            tables,
            unigram_probs,
            unigram_order,
            model_id: String::new(),
        };
        model.model_id = model.content_hash();
        model
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn smoothing(&self) -> &Smoothing {
        &self.smoothing
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    pub fn model_id(&self) -> &str {
        &self.model_id
    }

    /// The conditioning context for predicting `position`: the last
    /// `order - 1` words since the active session started.
    pub fn context<'s>(&self, sequence: &'s Sequence, position: usize) -> Result<&'s [u32]> {
        if position > sequence.len() {
            return Err(Error::Usage(format!(
                "position {position} out of range for sequence of length {}",
                sequence.len()
            )));
        }
        let start = sequence
            .session_start(position)
            .max(position.saturating_sub(self.order - 1));
        Ok(&sequence.words()[start..position])
    }

    /// Next-word distribution after the prefix `sequence[..position]`.
    pub fn next_distribution(&self, sequence: &Sequence, position: usize) -> Result<Distribution> {
        let ctx = self.context(sequence, position)?;
        Ok(self.distribution_for_context(ctx))
    }

    /// Dense distribution for an explicit context (only the last
    /// `order - 1` words are used).
    pub fn distribution_for_context(&self, ctx: &[u32]) -> Distribution {
        let r = self.resolve(ctx);
        let mut probs: Vec<f64> = self
            .unigram_probs
            .iter()
            .map(|&u| r.unigram_weight * u)
            .collect();
        for &(weight, counts) in &r.levels {
            for &(w, c) in &counts.next {
                probs[w as usize] += Resolved::term(weight, counts, c);
            }
        }
        let sorted = sampler::descending_order(&probs);
        Distribution::from_sorted_unchecked(probs, sorted)
    }

    fn resolve(&self, ctx: &[u32]) -> Resolved<'_> {
        let ctx = &ctx[ctx.len().saturating_sub(self.order - 1)..];
        let weights = self.smoothing.weights();
        let mut carry = 0.0;
        let mut levels = Vec::with_capacity(self.order - 1);
        for k in (1..self.order).rev() {
            carry += weights[k];
            if k > ctx.len() {
                continue;
            }
            if let Some(counts) = self.tables[k - 1].get(&pack(&ctx[ctx.len() - k..])) {
                levels.push((carry, counts));
                carry = 0.0;
            }
        }
        levels.reverse();
        Resolved {
            unigram_weight: weights[0] + carry,
            levels,
        }
    }

    /// Nucleus size for a context without materializing the dense
    /// distribution.
    ///
    /// Walks the descending order lazily by merging the sparse observed
    /// continuations with the precomputed unigram order. Probabilities are
    /// formed with the same operations as [`Self::distribution_for_context`]
    /// and summed in the same order, so the result is bit-identical to
    /// `nucleus_size(distribution_for_context(ctx), q)`.
    pub fn nucleus_size_for_context(&self, ctx: &[u32], q: f64, scratch: &mut Scratch) -> u32 {
        let r = self.resolve(ctx);
        let a = r.unigram_weight;
        if a == 0.0 {
            // non-observed tokens all tie at zero; the unigram order no longer applies
            return sampler::nucleus_size_unchecked(&self.distribution_for_context(ctx), q);
        }
        scratch.ensure(self.vocab_size());
        let Scratch {
            marked,
            slot,
            entries,
        } = scratch;
        entries.clear();
        for &(weight, counts) in &r.levels {
            for &(w, c) in &counts.next {
                let wi = w as usize;
                if !marked[wi] {
                    marked[wi] = true;
                    slot[wi] = entries.len() as u32;
                    entries.push((w, a * self.unigram_probs[wi]));
                }
                entries[slot[wi] as usize].1 += Resolved::term(weight, counts, c);
            }
        }
        entries.sort_unstable_by(|x, y| sampler::rank_cmp((x.1, x.0), (y.1, y.0)));

        let v = self.vocab_size();
        let mut si = 0;
        let mut ui = 0;
        let mut running = 0.0;
        let mut size = 0u32;
        for _ in 0..v {
            while ui < v && marked[self.unigram_order[ui] as usize] {
                ui += 1;
            }
            let take_sparse = match (entries.get(si), self.unigram_order.get(ui)) {
                (Some(&(sid, sp)), Some(&uid)) => {
                    let up = a * self.unigram_probs[uid as usize];
                    sampler::rank_cmp((sp, sid), (up, uid)).is_lt()
                }
                (Some(_), None) => true,
                _ => false,
            };
            let p = if take_sparse {
                si += 1;
                entries[si - 1].1
            } else {
                ui += 1;
                a * self.unigram_probs[self.unigram_order[ui - 1] as usize]
            };
            running += p;
            if sampler::clamp_cumulative(running) > q {
                break;
            }
            size += 1;
        }
        for &(w, _) in entries.iter() {
            marked[w as usize] = false;
        }
        size
    }

    fn content_hash(&self) -> String {
        struct HashWriter(Sha256);
        impl std::io::Write for HashWriter {
            fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
                self.0.update(buf);
                Ok(buf.len())
            }
            fn flush(&mut self) -> std::io::Result<()> {
                Ok(())
            }
        }
        let mut w = HashWriter(Sha256::new());
        serde_json::to_writer(&mut w, &self.to_file(String::new())).expect("model file serializes");
        hex::encode(w.0.finalize())
    }

    fn to_file(&self, model_id: String) -> ModelFile {
        let contexts = self
            .tables
            .iter()
            .enumerate()
            .map(|(i, table)| {
                let k = i + 1;
                let mut rows: Vec<(u128, &ContextCounts)> =
                    table.iter().map(|(key, c)| (*key, c)).collect();
                rows.sort_unstable_by_key(|(key, _)| *key);
                rows.into_iter()
                    .map(|(key, c)| ContextRow {
                        context: (0..k).rev().map(|j| (key >> (32 * j)) as u32).collect(),
                        next: c.next.clone(),
                    })
                    .collect()
            })
            .collect();
        ModelFile {
            format: MODEL_FORMAT.to_owned(),
            model_id,
            order: self.order,
            weights: self.smoothing.weights().to_vec(),
            vocabulary: self.vocab.tokens().to_vec(),
            unigram_counts: self.unigram_counts.clone(),
            contexts,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_file(self.model_id.clone())).expect("model file serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile =
            serde_json::from_str(text).map_err(|e| Error::parse("model file", e.to_string()))?;
        if file.format != MODEL_FORMAT {
            return Err(Error::parse(
                "model file",
                format!("unsupported format {:?}", file.format),
            ));
        }
        let vocab = Vocabulary::new(file.vocabulary)?;
        let smoothing = Smoothing::new(file.weights)?;
        if smoothing.order() != file.order || file.contexts.len() + 1 != file.order {
            return Err(Error::Validation("model order is inconsistent".into()));
        }
        if file.unigram_counts.len() != vocab.len() {
            return Err(Error::Validation("unigram table size mismatch".into()));
        }
        let v = vocab.len() as u32;
        let mut tables = Vec::with_capacity(file.contexts.len());
        for (i, rows) in file.contexts.into_iter().enumerate() {
            let mut table = HashMap::with_capacity(rows.len());
            for row in rows {
                if row.context.len() != i + 1
                    || row.context.iter().any(|&w| w >= v)
                    || row.next.iter().any(|&(w, c)| w >= v || c == 0)
                    || row.next.is_empty()
                {
                    return Err(Error::Validation("malformed context row".into()));
                }
                let total = row.next.iter().map(|&(_, c)| c).sum();
                table.insert(
                    pack(&row.context),
                    ContextCounts {
                        total,
                        next: row.next,
                    },
                );
            }
            tables.push(table);
        }
        let model = NgramModel::assemble(file.order, smoothing, vocab, file.unigram_counts, tables);
        if !file.model_id.is_empty() && file.model_id != model.model_id {
            return Err(Error::Validation(format!(
                "model id mismatch: file says {}, content hashes to {}",
                file.model_id, model.model_id
            )));
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        NgramModel::from_json(&text)
    }
}

/// Reusable buffers for [`NgramModel::nucleus_size_for_context`].
#[derive(Default)]
pub struct Scratch {
    marked: Vec<bool>,
    slot: Vec<u32>,
    entries: Vec<(u32, f64)>,
}

impl Scratch {
    fn ensure(&mut self, v: usize) {
        if self.marked.len() < v {
            self.marked.resize(v, false);
            self.slot.resize(v, 0);
        }
    }
}

const MODEL_FORMAT: &str = "nssfp-ngram v1";

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    model_id: String,
    order: usize,
    weights: Vec<f64>,
    vocabulary: Vec<String>,
    unigram_counts: Vec<u64>,
    contexts: Vec<Vec<ContextRow>>,
}

#[derive(Serialize, Deserialize)]
struct ContextRow {
    context: Vec<u32>,
    next: Vec<(u32, u64)>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::tokenize;

    fn corpus_of(texts: &[&str]) -> (Vocabulary, Vec<Sequence>) {
        let toks: Vec<Vec<String>> = texts.iter().map(|t| tokenize(t)).collect();
        let vocab = Vocabulary::from_stream(toks.iter().flatten()).unwrap();
        let seqs = toks
            .iter()
            .enumerate()
            .map(|(i, t)| Sequence::single(format!("s{i}"), vocab.encode(t).unwrap()).unwrap())
            .collect();
        (vocab, seqs)
    }

    #[test]
    fn unigram_symmetric_counts() {
        let (vocab, seqs) = corpus_of(&["a b a b"]);
        let m = train_model(&vocab, &seqs, 1, Smoothing::for_order(1).unwrap()).unwrap();
        let d = m.distribution_for_context(&[]);
        // add-one: (2 + 1) / (4 + 2) for both
        assert_eq!(d.probs(), &[0.5, 0.5]);
    }

    #[test]
    fn training_is_deterministic() {
        let (vocab, seqs) = corpus_of(&["the cat sat on the mat", "the dog sat"]);
        let a = train_model(&vocab, &seqs, 3, Smoothing::default()).unwrap();
        let b = train_model(&vocab, &seqs, 3, Smoothing::default()).unwrap();
        assert_eq!(a.model_id(), b.model_id());
        let c = train_model(&vocab, &seqs[..1], 3, Smoothing::default()).unwrap();
        assert_ne!(a.model_id(), c.model_id());
    }

    #[test]
    fn configuration_errors() {
        let (vocab, seqs) = corpus_of(&["a b"]);
        assert!(matches!(
            train_model(&vocab, &[], 3, Smoothing::default()),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            train_model(&vocab, &seqs, 0, Smoothing::default()),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            train_model(&vocab, &seqs, 6, Smoothing::default()),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            train_model(&vocab, &seqs, 2, Smoothing::default()),
            Err(Error::Config(_))
        ));
        assert!(Smoothing::new(vec![0.5, 0.6]).is_err());
        assert!(Smoothing::new(vec![1.5, -0.5]).is_err());
    }

    #[test]
    fn order_one_is_position_independent() {
        let (vocab, seqs) = corpus_of(&["x y z x y x"]);
        let m = train_model(&vocab, &seqs, 1, Smoothing::for_order(1).unwrap()).unwrap();
        let first = m.next_distribution(&seqs[0], 0).unwrap();
        for pos in 1..=seqs[0].len() {
            assert_eq!(m.next_distribution(&seqs[0], pos).unwrap(), first);
        }
    }

    #[test]
    fn bigram_hand_count() {
        // Ten sentences; "the" is followed by cat x3, dog x2, end x1.
        let texts = [
            "the cat runs",
            "the cat sleeps",
            "the dog runs",
            "a cat runs",
            "the cat eats",
            "a dog sleeps",
            "the dog eats",
            "dogs run",
            "cats sleep",
            "the end",
        ];
        let (vocab, seqs) = corpus_of(&texts);
        let smoothing = Smoothing::new(vec![0.25, 0.75]).unwrap();
        let m = train_model(&vocab, &seqs, 2, smoothing).unwrap();
        let the = vocab.id("the").unwrap();
        let d = m.distribution_for_context(&[the]);
        let v = vocab.len() as f64;
        let total = 27.0; // words in the corpus
        let expect = |w: &str, uni: f64, big: f64| {
            let p = d.probs()[vocab.id(w).unwrap() as usize];
            let e = 0.25 * (uni + 1.0) / (total + v) + 0.75 * big;
            assert!((p - e).abs() < 1e-15, "{w}: {p} vs {e}");
        };
        expect("cat", 4.0, 3.0 / 6.0);
        expect("dog", 3.0, 2.0 / 6.0);
        expect("end", 1.0, 1.0 / 6.0);
        expect("runs", 3.0, 0.0);
        let sum: f64 = d.probs().iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn boundary_resets_context() {
        let (vocab, seqs) = corpus_of(&["a b c a b d a b c"]);
        let m = train_model(&vocab, &seqs, 3, Smoothing::default()).unwrap();
        let words = seqs[0].words().to_vec();
        let reset = Sequence::new("r", words, vec![0, 4]).unwrap();
        let empty = m.distribution_for_context(&[]);
        assert_eq!(m.next_distribution(&reset, 4).unwrap(), empty);
        assert_eq!(m.next_distribution(&reset, 0).unwrap(), empty);
        assert_ne!(m.next_distribution(&seqs[0], 4).unwrap(), empty);
    }

    #[test]
    fn position_out_of_range_is_usage_error() {
        let (vocab, seqs) = corpus_of(&["a b"]);
        let m = train_model(&vocab, &seqs, 2, Smoothing::for_order(2).unwrap()).unwrap();
        assert!(m.next_distribution(&seqs[0], 2).is_ok());
        assert!(matches!(
            m.next_distribution(&seqs[0], 3),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn json_round_trip_preserves_id() {
        let (vocab, seqs) = corpus_of(&["the cat sat on the mat", "the dog sat"]);
        let m = train_model(&vocab, &seqs, 3, Smoothing::default()).unwrap();
        let back = NgramModel::from_json(&m.to_json()).unwrap();
        assert_eq!(back.model_id(), m.model_id());
        assert_eq!(
            back.distribution_for_context(&[0, 1]),
            m.distribution_for_context(&[0, 1])
        );
        let bad = m.to_json().replace(m.model_id(), "deadbeef");
        assert!(NgramModel::from_json(&bad).is_err());
    }
}
