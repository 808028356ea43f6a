//! Seeded Markov babble over a pseudo-word lexicon.
//!
//! Word frequencies follow a Zipf law over a shuffled lexicon. Each word is
//! either narrow (a handful of fixed successors) or broad (successors drawn
//! from the unigram law), which gives a trained n-gram model contexts with
//! very different nucleus sizes. Authors differ in mean post length; post
//! lengths are geometric around the author's mean.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution as _, Geometric, Zipf};

use super::{Post, PostCorpus};
use crate::error::{Error, Result};
use crate::model::{train_model, NgramModel, Sequence, Smoothing, Vocabulary};

const CONSONANTS: &[u8] = b"bdfgklmnprstvz";
const VOWELS: &[u8] = b"aeiou";

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticConfig {
    pub lexicon_size: usize,
    pub zipf_exponent: f64,
    /// Share of words with a small fixed successor set.
    pub narrow_fraction: f64,
    pub max_narrow_successors: usize,
    /// Author mean post lengths are log-uniform in this range.
    pub post_length_range: (f64, f64),
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            lexicon_size: 50_257,
            zipf_exponent: 0.6,
            narrow_fraction: 0.5,
            max_narrow_successors: 5,
            post_length_range: (3.0, 12.0),
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug)]
enum Successors {
    Broad,
    /// Range into the shared successor table.
    Narrow(u32, u32),
}

pub struct SyntheticLanguage {
    cfg: SyntheticConfig,
    vocab: Vocabulary,
    zipf: Zipf<f64>,
    /// Word id of each Zipf rank (rank 1 at index 0).
    by_rank: Vec<u32>,
    successors: Vec<Successors>,
    /// (word, cumulative weight) runs for narrow words.
    table: Vec<(u32, f64)>,
}

/// Pseudo-word for index `i`: `i` in base 70 spelled as consonant-vowel
/// syllables. Distinct indices give distinct words.
pub fn pseudo_word(mut i: usize) -> String {
    let base = CONSONANTS.len() * VOWELS.len();
    let mut syllables = Vec::new();
    loop {
        let d = i % base;
        syllables.push([CONSONANTS[d / VOWELS.len()], VOWELS[d % VOWELS.len()]]);
        i /= base;
        if i == 0 {
            break;
        }
    }
    syllables
        .iter()
        .rev()
        .flatten()
        .map(|&b| b as char)
        .collect()
}

impl SyntheticLanguage {
    pub fn new(cfg: SyntheticConfig) -> Result<Self> {
        let (lo, hi) = cfg.post_length_range;
        if cfg.lexicon_size < 2 {
            return Err(Error::Config("lexicon needs at least 2 words".into()));
        }
        if !(1.0..=hi).contains(&lo) {
            return Err(Error::Config(format!("bad post length range {lo}..{hi}")));
        }
        if !(0.0..=1.0).contains(&cfg.narrow_fraction) || cfg.max_narrow_successors == 0 {
            return Err(Error::Config("bad narrow word settings".into()));
        }
        let zipf = Zipf::new(cfg.lexicon_size as f64, cfg.zipf_exponent)
            .map_err(|e| Error::Config(format!("zipf law: {e}")))?;
        let vocab = Vocabulary::new((0..cfg.lexicon_size).map(pseudo_word).collect())?;

        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut by_rank: Vec<u32> = (0..cfg.lexicon_size as u32).collect();
        by_rank.shuffle(&mut rng);
        let mut lang = SyntheticLanguage {
            cfg,
            vocab,
            zipf,
            by_rank,
            successors: Vec::new(),
            table: Vec::new(),
        };
        for _ in 0..lang.cfg.lexicon_size {
            if rng.random_bool(lang.cfg.narrow_fraction) {
                let k = rng.random_range(1..=lang.cfg.max_narrow_successors);
                let start = lang.table.len() as u32;
                let mut acc = 0.0;
                for _ in 0..k {
                    acc += rng.random_range(0.2..1.0);
                    let w = lang.unigram(&mut rng);
                    lang.table.push((w, acc));
                }
                lang.successors
                    .push(Successors::Narrow(start, lang.table.len() as u32));
            } else {
                lang.successors.push(Successors::Broad);
            }
        }
        Ok(lang)
    }

    pub fn config(&self) -> &SyntheticConfig {
        &self.cfg
    }

    pub fn vocabulary(&self) -> &Vocabulary {
        &self.vocab
    }

    fn unigram<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        let rank = self.zipf.sample(rng) as usize;
        self.by_rank[rank.clamp(1, self.by_rank.len()) - 1]
    }

    fn next<R: Rng + ?Sized>(&self, prev: u32, rng: &mut R) -> u32 {
        match self.successors[prev as usize] {
            Successors::Broad => self.unigram(rng),
            Successors::Narrow(a, b) => {
                let run = &self.table[a as usize..b as usize];
                let u = rng.random_range(0.0..run[run.len() - 1].1);
                run.iter()
                    .find(|(_, c)| u < *c)
                    .unwrap_or(&run[run.len() - 1])
                    .0
            }
        }
    }

    pub fn post<R: Rng + ?Sized>(&self, len: usize, rng: &mut R) -> Vec<u32> {
        let mut words = Vec::with_capacity(len);
        if len == 0 {
            return words;
        }
        words.push(self.unigram(rng));
        while words.len() < len {
            let prev = words[words.len() - 1];
            words.push(self.next(prev, rng));
        }
        words
    }

    fn author_posts<R: Rng + ?Sized>(&self, min_words: usize, rng: &mut R) -> Vec<Vec<u32>> {
        let (lo, hi) = self.cfg.post_length_range;
        let mean = (rng.random_range(lo.ln()..=hi.ln())).exp();
        let extra = Geometric::new(1.0 / mean).expect("mean >= 1");
        let mut posts = Vec::new();
        let mut total = 0;
        while total < min_words {
            let len = 1 + extra.sample(rng) as usize;
            total += len;
            posts.push(self.post(len, rng));
        }
        posts
    }

    /// `authors` authors with at least `words_per_author` words each.
    /// Author `i` is named `user{i:05}`; timestamps increase within an author.
    pub fn corpus(&self, authors: usize, words_per_author: usize, seed: u64) -> PostCorpus {
        let mut posts = Vec::new();
        for a in 0..authors {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(a as u64);
            let mut ts: i64 = rng.random_range(1_500_000_000..1_600_000_000);
            for words in self.author_posts(words_per_author, &mut rng) {
                ts += rng.random_range(60..86_400);
                posts.push(Post {
                    author: format!("user{a:05}"),
                    timestamp: ts,
                    words: words
                        .iter()
                        .map(|&w| self.vocab.tokens()[w as usize].clone())
                        .collect(),
                });
            }
        }
        PostCorpus {
            source: format!("synthetic seed={} corpus_seed={seed}", self.cfg.seed),
            posts,
        }
    }

    /// Training text of at least `words` words, as sequences of about 1000
    /// words by independent authors.
    pub fn training_sequences(&self, words: usize, seed: u64) -> Result<Vec<Sequence>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::new();
        let mut total = 0;
        while total < words {
            let mut ids = Vec::new();
            let mut boundaries = Vec::new();
            for p in self.author_posts(1000, &mut rng) {
                boundaries.push(ids.len());
                ids.extend(p);
            }
            total += ids.len();
            out.push(Sequence::new(
                format!("train{}", out.len()),
                ids,
                boundaries,
            )?);
        }
        Ok(out)
    }
}

/// Sizes of a synthetic experiment.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticScale {
    pub authors: usize,
    pub words_per_author: usize,
    pub train_words: usize,
}

/// A language, a model trained on its text, and an evaluation corpus.
///
/// The training text uses seed `cfg.seed + 1` and the corpus `cfg.seed + 2`,
/// so the model never sees the evaluated authors.
pub struct SyntheticSetup {
    pub language: SyntheticLanguage,
    pub model: NgramModel,
    pub corpus: PostCorpus,
}

impl SyntheticSetup {
    pub fn build(cfg: SyntheticConfig, scale: &SyntheticScale, order: usize) -> Result<Self> {
        let seed = cfg.seed;
        let language = SyntheticLanguage::new(cfg)?;
        let training = language.training_sequences(scale.train_words, seed.wrapping_add(1))?;
        let model = train_model(
            language.vocabulary(),
            &training,
            order,
            Smoothing::for_order(order)?,
        )?;
        let corpus = language.corpus(scale.authors, scale.words_per_author, seed.wrapping_add(2));
        Ok(SyntheticSetup {
            language,
            model,
            corpus,
        })
    }
}
