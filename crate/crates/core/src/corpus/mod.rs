//! Post corpora: loading, per-author aggregation into sequences with a
//! session boundary at every post, and sequence persistence.

mod synthetic;

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

pub use synthetic::{SyntheticConfig, SyntheticLanguage, SyntheticScale, SyntheticSetup};

use crate::error::{Error, Result};
use crate::model::{tokenize, Sequence, Vocabulary};

pub const SEQ_MAGIC: &str = "#seq v1";
/// Aggregated sequences are capped at this many words.
pub const DEFAULT_WORD_CAP: usize = 3000;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Post {
    pub author: String,
    pub timestamp: i64,
    /// Tokens of the post text.
    pub words: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PostCorpus {
    pub source: String,
    pub posts: Vec<Post>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CorpusFormat {
    /// One post per line: `author <TAB> unix_timestamp <TAB> text`.
    TsvPosts,
    /// `<dir>/<author>/<unix_timestamp>.txt`, one post per file.
    PlainDir,
}

impl FromStr for CorpusFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tsv_posts" | "tsv" => Ok(CorpusFormat::TsvPosts),
            "plain_dir" | "dir" => Ok(CorpusFormat::PlainDir),
            other => Err(Error::Usage(format!(
                "unknown corpus format {other:?} (expected tsv_posts or plain_dir)"
            ))),
        }
    }
}

pub fn load_corpus(path: &Path, format: CorpusFormat) -> Result<PostCorpus> {
    let corpus = match format {
        CorpusFormat::TsvPosts => {
            let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
            read_tsv(BufReader::new(file), &path.display().to_string())?
        }
        CorpusFormat::PlainDir => read_dir(path)?,
    };
    if corpus.posts.is_empty() {
        return Err(Error::Validation(format!(
            "corpus {} has no posts",
            path.display()
        )));
    }
    Ok(corpus)
}

/// Parses the tsv format. Blank lines are skipped.
pub fn read_tsv<R: BufRead>(input: R, source: &str) -> Result<PostCorpus> {
    let mut posts = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let loc = format!("{source}:{}", i + 1);
        let line = line.map_err(|e| Error::parse(&loc, e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.splitn(3, '\t');
        let (Some(author), Some(ts), Some(text)) = (fields.next(), fields.next(), fields.next())
        else {
            return Err(Error::parse(
                &loc,
                "expected author, timestamp and text separated by tabs",
            ));
        };
        if author.is_empty() {
            return Err(Error::parse(&loc, "empty author"));
        }
        let timestamp = ts
            .trim()
            .parse()
            .map_err(|_| Error::parse(&loc, format!("bad timestamp {ts:?}")))?;
        posts.push(Post {
            author: author.to_owned(),
            timestamp,
            words: tokenize(text),
        });
    }
    Ok(PostCorpus {
        source: source.to_owned(),
        posts,
    })
}

fn read_dir(root: &Path) -> Result<PostCorpus> {
    let listing = |dir: &Path| -> Result<Vec<std::path::PathBuf>> {
        let mut entries = fs::read_dir(dir)
            .map_err(|e| Error::io(dir, e))?
            .map(|e| e.map(|e| e.path()).map_err(|e| Error::io(dir, e)))
            .collect::<Result<Vec<_>>>()?;
        entries.sort();
        Ok(entries)
    };
    let mut posts = Vec::new();
    for author_dir in listing(root)? {
        if !author_dir.is_dir() {
            continue;
        }
        let author = author_dir
            .file_name()
            .and_then(|n| n.to_str())
            .ok_or_else(|| {
                Error::parse(
                    author_dir.display().to_string(),
                    "author directory name is not UTF-8",
                )
            })?
            .to_owned();
        for file in listing(&author_dir)? {
            let loc = file.display().to_string();
            let timestamp = file
                .file_stem()
                .and_then(|s| s.to_str())
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::parse(&loc, "file name must be <unix_timestamp>.txt"))?;
            let text = fs::read_to_string(&file).map_err(|e| Error::io(&file, e))?;
            posts.push(Post {
                author: author.clone(),
                timestamp,
                words: tokenize(&text),
            });
        }
    }
    Ok(PostCorpus {
        source: root.display().to_string(),
        posts,
    })
}

/// Writes the tsv format; posts round-trip exactly through [`read_tsv`].
pub fn write_tsv<W: Write>(mut out: W, corpus: &PostCorpus) -> std::io::Result<()> {
    for p in &corpus.posts {
        writeln!(out, "{}\t{}\t{}", p.author, p.timestamp, p.words.join(" "))?;
    }
    Ok(())
}

pub fn save_corpus(path: &Path, corpus: &PostCorpus) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    write_tsv(&mut w, corpus).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Clone, Debug, PartialEq)]
pub struct AuthorSequence {
    pub author: String,
    pub sequence: Sequence,
    /// Posts contributing at least one word; equals the boundary count.
    pub post_count: usize,
    /// Mean length in words over all of the author's non-empty posts,
    /// before the cap.
    pub mean_post_length: f64,
}

/// Concatenates each author's posts in timestamp order (ties keep input
/// order) with a boundary at every post start, truncated at `word_cap`.
/// Authors with fewer than `min_words` words after truncation are left out.
/// Output is sorted by author.
pub fn aggregate_by_author(
    corpus: &PostCorpus,
    vocab: &Vocabulary,
    word_cap: usize,
    min_words: usize,
) -> Result<Vec<AuthorSequence>> {
    if min_words == 0 || word_cap < min_words {
        return Err(Error::Usage(format!(
            "need word_cap >= min_words >= 1, got cap {word_cap}, min {min_words}"
        )));
    }
    let mut by_author: BTreeMap<&str, Vec<&Post>> = BTreeMap::new();
    for p in &corpus.posts {
        by_author.entry(&p.author).or_default().push(p);
    }
    let mut out = Vec::new();
    for (author, mut posts) in by_author {
        posts.sort_by_key(|p| p.timestamp);
        let non_empty: Vec<&Post> = posts.into_iter().filter(|p| !p.words.is_empty()).collect();
        let total: usize = non_empty.iter().map(|p| p.words.len()).sum();
        if total.min(word_cap) < min_words {
            continue;
        }
        let mut words = Vec::with_capacity(total.min(word_cap));
        let mut boundaries = Vec::new();
        for p in &non_empty {
            if words.len() >= word_cap {
                break;
            }
            boundaries.push(words.len());
            let take = (word_cap - words.len()).min(p.words.len());
            words.extend(vocab.encode(&p.words[..take])?);
        }
        out.push(AuthorSequence {
            author: author.to_owned(),
            post_count: boundaries.len(),
            mean_post_length: total as f64 / non_empty.len() as f64,
            sequence: Sequence::new(author, words, boundaries)?,
        });
    }
    Ok(out)
}

/// Writes sequences as `seq_id <TAB> boundaries <TAB> ids`, with
/// comma-separated boundaries and space-separated token ids.
pub fn write_sequences<W: Write>(
    mut out: W,
    sequences: &[Sequence],
    vocab_size: usize,
) -> std::io::Result<()> {
    writeln!(out, "{SEQ_MAGIC} vocab={vocab_size}")?;
    for s in sequences {
        let b: Vec<String> = s.boundaries().iter().map(usize::to_string).collect();
        let w: Vec<String> = s.words().iter().map(u32::to_string).collect();
        writeln!(out, "{}\t{}\t{}", s.id(), b.join(","), w.join(" "))?;
    }
    Ok(())
}

/// Reads sequences; returns the vocabulary size from the header with them.
pub fn read_sequences<R: BufRead>(input: R) -> Result<(usize, Vec<Sequence>)> {
    let mut lines = input.lines().enumerate();
    let header = match lines.next() {
        Some((_, l)) => l.map_err(|e| Error::parse("seq line 1", e.to_string()))?,
        None => return Err(Error::parse("seq line 1", "missing header")),
    };
    let vocab_size = header
        .strip_prefix(SEQ_MAGIC)
        .and_then(|rest| rest.trim().strip_prefix("vocab="))
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| Error::parse("seq line 1", format!("expected `{SEQ_MAGIC} vocab=<n>`")))?;
    let mut out = Vec::new();
    for (i, line) in lines {
        let loc = format!("seq line {}", i + 1);
        let line = line.map_err(|e| Error::parse(&loc, e.to_string()))?;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 3 {
            return Err(Error::parse(
                &loc,
                format!("expected 3 fields, got {}", f.len()),
            ));
        }
        let boundaries = f[1]
            .split(',')
            .map(|b| b.parse::<usize>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| Error::parse(&loc, "bad boundary list"))?;
        let words = f[2]
            .split(' ')
            .map(|w| w.parse::<u32>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| Error::parse(&loc, "bad token id list"))?;
        if let Some(w) = words.iter().find(|&&w| w as usize >= vocab_size) {
            return Err(Error::Validation(format!(
                "{loc}: token id {w} outside vocabulary of {vocab_size}"
            )));
        }
        out.push(Sequence::new(f[0], words, boundaries)?);
    }
    Ok((vocab_size, out))
}
