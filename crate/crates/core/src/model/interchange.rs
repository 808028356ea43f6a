//! Line-oriented interchange format for nucleus sizes and distributions.
//!
//! ```text
//! #nss v1 model=<model id> q=<float>
//! <seq_id> TAB <position> TAB n=<nucleus size>
//! <seq_id> TAB <position> TAB p=<prob>,<prob>,...
//! ```
//!
//! The header must be the first non-blank line of a non-empty file; extra
//! `key=value` pairs after `q` are preserved. Blank lines and lines starting
//! with `##` are ignored. `seq_id` must not contain tabs or newlines.
//! Probabilities in a `p=` payload are listed in non-increasing order and
//! must sum to 1 within 1e-9. Floats are written in shortest round-trip form,
//! so export followed by ingest is lossless.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader, Lines, Write};
use std::path::Path;

use super::distribution::Distribution;
use crate::error::{Error, Result};

pub const NSS_MAGIC: &str = "#nss v1";

#[derive(Clone, Debug, PartialEq)]
pub struct NssHeader {
    pub model_id: String,
    pub q: f64,
    pub extra: Vec<(String, String)>,
}

impl NssHeader {
    pub fn new(model_id: impl Into<String>, q: f64) -> Self {
        NssHeader {
            model_id: model_id.into(),
            q,
            extra: Vec::new(),
        }
    }

    /// Value of an extra header field.
    pub fn get(&self, key: &str) -> Option<&str> {
        self.extra
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn render(&self) -> String {
        let mut line = format!("{NSS_MAGIC} model={} q={}", self.model_id, self.q);
        for (k, v) in &self.extra {
            let _ = write!(line, " {k}={v}");
        }
        line
    }

    fn parse(line: &str, line_no: usize) -> Result<Self> {
        let loc = || format!("line {line_no}");
        let rest = line.strip_prefix(NSS_MAGIC).ok_or_else(|| {
            Error::parse(
                loc(),
                format!("expected header starting with {NSS_MAGIC:?}"),
            )
        })?;
        let mut model_id = None;
        let mut q = None;
        let mut extra = Vec::new();
        for field in rest.split_whitespace() {
            let (k, v) = field.split_once('=').ok_or_else(|| {
                Error::parse(loc(), format!("header field {field:?} is not key=value"))
            })?;
            match k {
                "model" => model_id = Some(v.to_owned()),
                "q" => {
                    let parsed: f64 = v
                        .parse()
                        .map_err(|_| Error::parse(loc(), format!("bad q value {v:?}")))?;
                    q = Some(parsed)
                }
                _ => extra.push((k.to_owned(), v.to_owned())),
            }
        }
        Ok(NssHeader {
            model_id: model_id.ok_or_else(|| Error::parse(loc(), "header lacks model="))?,
            q: q.ok_or_else(|| Error::parse(loc(), "header lacks q="))?,
            extra,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Payload {
    NucleusSize(u32),
    Distribution(Distribution),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Record {
    pub seq_id: String,
    pub position: usize,
    pub payload: Payload,
}

/// Streaming reader over an interchange file.
pub struct InterchangeReader<R> {
    lines: Lines<R>,
    header: Option<NssHeader>,
    line_no: usize,
    pending: Option<(usize, String)>,
}

impl<R: BufRead> InterchangeReader<R> {
    pub fn new(reader: R) -> Result<Self> {
        let mut lines = reader.lines();
        let mut line_no = 0;
        let mut header = None;
        let mut pending = None;
        for line in lines.by_ref() {
            line_no += 1;
            let line = line.map_err(|e| Error::parse(format!("line {line_no}"), e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            if line.starts_with(NSS_MAGIC) {
                header = Some(NssHeader::parse(&line, line_no)?);
            } else {
                pending = Some((line_no, line));
            }
            break;
        }
        if header.is_none() && pending.is_some() {
            return Err(Error::parse(
                format!("line {line_no}"),
                format!("missing {NSS_MAGIC:?} header"),
            ));
        }
        Ok(InterchangeReader {
            lines,
            header,
            line_no,
            pending,
        })
    }

    /// `None` only for an empty file.
    pub fn header(&self) -> Option<&NssHeader> {
        self.header.as_ref()
    }
}

impl<R: BufRead> Iterator for InterchangeReader<R> {
    type Item = Result<Record>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let (line_no, line) = match self.pending.take() {
                Some(p) => p,
                None => {
                    let line = self.lines.next()?;
                    self.line_no += 1;
                    match line {
                        Ok(l) => (self.line_no, l),
                        Err(e) => {
                            return Some(Err(Error::parse(
                                format!("line {}", self.line_no),
                                e.to_string(),
                            )))
                        }
                    }
                }
            };
            if line.trim().is_empty() || line.starts_with("##") {
                continue;
            }
            return Some(parse_record(&line, line_no));
        }
    }
}

fn parse_record(line: &str, line_no: usize) -> Result<Record> {
    let loc = || format!("line {line_no}");
    let mut fields = line.split('\t');
    let (Some(seq_id), Some(pos), Some(payload), None) =
        (fields.next(), fields.next(), fields.next(), fields.next())
    else {
        return Err(Error::parse(loc(), "expected 3 tab-separated fields"));
    };
    if seq_id.is_empty() {
        return Err(Error::parse(loc(), "empty sequence id"));
    }
    let position: usize = pos
        .parse()
        .map_err(|_| Error::parse(loc(), format!("bad position {pos:?}")))?;
    let payload = if let Some(n) = payload.strip_prefix("n=") {
        Payload::NucleusSize(
            n.parse()
                .map_err(|_| Error::parse(loc(), format!("bad nucleus size {n:?}")))?,
        )
    } else if let Some(ps) = payload.strip_prefix("p=") {
        let probs = ps
            .split(',')
            .map(|p| {
                p.parse::<f64>()
                    .map_err(|_| Error::parse(loc(), format!("bad probability {p:?}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        if probs.windows(2).any(|w| w[0] < w[1]) {
            return Err(Error::Validation(format!(
                "line {line_no}: probabilities are not in descending order"
            )));
        }
        let dist = Distribution::from_probs(probs)
            .map_err(|e| Error::Validation(format!("line {line_no}: {e}")))?;
        Payload::Distribution(dist)
    } else {
        return Err(Error::parse(loc(), format!("unknown payload {payload:?}")));
    };
    Ok(Record {
        seq_id: seq_id.to_owned(),
        position,
        payload,
    })
}

/// Opens an interchange file for streaming.
pub fn ingest_distributions(path: &Path) -> Result<InterchangeReader<BufReader<File>>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    InterchangeReader::new(BufReader::new(file))
}

/// Writes interchange records.
pub struct InterchangeWriter<W: Write> {
    out: W,
}

impl<W: Write> InterchangeWriter<W> {
    pub fn new(mut out: W, header: &NssHeader) -> std::io::Result<Self> {
        writeln!(out, "{}", header.render())?;
        Ok(InterchangeWriter { out })
    }

    pub fn nucleus_size(
        &mut self,
        seq_id: &str,
        position: usize,
        size: u32,
    ) -> std::io::Result<()> {
        writeln!(self.out, "{seq_id}\t{position}\tn={size}")
    }

    pub fn distribution(
        &mut self,
        seq_id: &str,
        position: usize,
        dist: &Distribution,
    ) -> std::io::Result<()> {
        let mut line = format!("{seq_id}\t{position}\tp=");
        for (i, p) in dist.sorted_probs().enumerate() {
            if i > 0 {
                line.push(',');
            }
            let _ = write!(line, "{p}");
        }
        writeln!(self.out, "{line}")
    }

    pub fn finish(mut self) -> std::io::Result<W> {
        self.out.flush()?;
        Ok(self.out)
    }
}
