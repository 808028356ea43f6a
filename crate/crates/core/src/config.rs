//! Pipeline configuration: defaults, a `key = value` file format, and
//! `NSSFP_<KEY>` environment overrides.

use std::fmt;
use std::path::Path;

use crate::corpus::DEFAULT_WORD_CAP;
use crate::error::{Error, Result};
use crate::fingerprint::{DEFAULT_Q, DEFAULT_SIMILARITY_WINDOW, DEFAULT_VARIABILITY_THRESHOLD};
use crate::matcher::EvalConfig;
use crate::sidechannel::{ChannelConfig, DEFAULT_DROP_FRACTION};
use crate::stats::DEFAULT_EPSILON;

pub const ENV_PREFIX: &str = "NSSFP_";
pub const DEFAULT_SEQUENCE_LENGTH: usize = 2700;

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineConfig {
    pub q: f64,
    pub variability_threshold: f64,
    pub similarity_window: usize,
    pub epsilon: f64,
    pub sequence_length: usize,
    pub drop_fraction: f64,
    pub word_cap: usize,
    pub order: usize,
    pub channel: ChannelConfig,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            q: DEFAULT_Q,
            variability_threshold: DEFAULT_VARIABILITY_THRESHOLD,
            similarity_window: DEFAULT_SIMILARITY_WINDOW,
            epsilon: DEFAULT_EPSILON,
            sequence_length: DEFAULT_SEQUENCE_LENGTH,
            drop_fraction: DEFAULT_DROP_FRACTION,
            word_cap: DEFAULT_WORD_CAP,
            order: 3,
            channel: ChannelConfig::default(),
            seed: 0,
        }
    }
}

/// Every key accepted by [`PipelineConfig::set`].
pub const KEYS: &[&str] = &[
    "q",
    "variability_threshold",
    "similarity_window",
    "epsilon",
    "sequence_length",
    "drop_fraction",
    "word_cap",
    "order",
    "seed",
    "capture_fraction",
    "cycles_per_iteration",
    "hit_jitter_std",
    "outlier_rate",
    "outlier_scale",
    "segment_gap_cycles",
    "segment_threshold_cycles",
];

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("bad value {value:?} for {key}")))
}

impl PipelineConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let c = &mut self.channel;
        match key {
            "q" => self.q = parse(key, value)?,
            "variability_threshold" => self.variability_threshold = parse(key, value)?,
            "similarity_window" => self.similarity_window = parse(key, value)?,
            "epsilon" => self.epsilon = parse(key, value)?,
            "sequence_length" => self.sequence_length = parse(key, value)?,
            "drop_fraction" => self.drop_fraction = parse(key, value)?,
            "word_cap" => self.word_cap = parse(key, value)?,
            "order" => self.order = parse(key, value)?,
            "seed" => {
                self.seed = parse(key, value)?;
                c.rng_seed = self.seed;
            }
            "capture_fraction" => c.capture_fraction = parse(key, value)?,
            "cycles_per_iteration" => c.cycles_per_iteration = parse(key, value)?,
            "hit_jitter_std" => c.hit_jitter_std = parse(key, value)?,
            "outlier_rate" => c.outlier_rate = parse(key, value)?,
            "outlier_scale" => c.outlier_scale = parse(key, value)?,
            "segment_gap_cycles" => c.segment_gap_cycles = parse(key, value)?,
            "segment_threshold_cycles" => {
                c.segment_threshold_cycles = match value.trim() {
                    "" | "auto" => None,
                    v => Some(parse(key, v)?),
                }
            }
            _ => return Err(Error::Config(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    /// Applies `key = value` lines. `#` starts a comment.
    pub fn apply_text(&mut self, text: &str, source: &str) -> Result<()> {
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::parse(format!("{source}:{}", i + 1), "expected key = value")
            })?;
            self.set(k.trim(), v)?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        self.apply_text(&text, &path.display().to_string())
    }

    /// Applies `NSSFP_<KEY>` variables from `vars` (typically
    /// `std::env::vars()`). Returns the keys that were set.
    pub fn apply_env<I: IntoIterator<Item = (String, String)>>(
        &mut self,
        vars: I,
    ) -> Result<Vec<String>> {
        let mut applied = Vec::new();
        for (name, value) in vars {
            let Some(key) = name.strip_prefix(ENV_PREFIX) else {
                continue;
            };
            let key = key.to_ascii_lowercase();
            if KEYS.contains(&key.as_str()) {
                self.set(&key, &value)?;
                applied.push(key);
            }
        }
        applied.sort();
        Ok(applied)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.q > 0.0 && self.q <= 1.0) {
            return Err(Error::Config(format!(
                "q must be in (0, 1], got {}",
                self.q
            )));
        }
        if !(self.epsilon > 0.0 && self.epsilon <= 0.5) {
            return Err(Error::Config(format!(
                "epsilon must be in (0, 0.5], got {}",
                self.epsilon
            )));
        }
        if !(0.0..1.0).contains(&self.drop_fraction) {
            return Err(Error::Config(format!(
                "drop_fraction must be in [0, 1), got {}",
                self.drop_fraction
            )));
        }
        if self.sequence_length == 0 || self.similarity_window == 0 {
            return Err(Error::Config(
                "sequence_length and similarity_window must be positive".into(),
            ));
        }
        if self.word_cap < self.sequence_length {
            return Err(Error::Config(format!(
                "word_cap {} is below sequence_length {}",
                self.word_cap, self.sequence_length
            )));
        }
        self.channel.validate()
    }

    pub fn eval_config(&self) -> EvalConfig {
        EvalConfig {
            length: self.sequence_length,
            variability_threshold: self.variability_threshold,
            similarity_window: self.similarity_window,
            drop_fraction: self.drop_fraction,
            epsilon: self.epsilon,
            channel: self.channel.clone(),
            seed: self.seed,
        }
    }
}

/// The resolved configuration as `key = value` lines, in [`KEYS`] order.
impl fmt::Display for PipelineConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = &self.channel;
        let threshold = c
            .segment_threshold_cycles
            .map_or_else(|| "auto".to_owned(), |t| t.to_string());
        let values: [String; 16] = [
            self.q.to_string(),
            self.variability_threshold.to_string(),
            self.similarity_window.to_string(),
            self.epsilon.to_string(),
            self.sequence_length.to_string(),
            self.drop_fraction.to_string(),
            self.word_cap.to_string(),
            self.order.to_string(),
            self.seed.to_string(),
            c.capture_fraction.to_string(),
            c.cycles_per_iteration.to_string(),
            c.hit_jitter_std.to_string(),
            c.outlier_rate.to_string(),
            c.outlier_scale.to_string(),
            c.segment_gap_cycles.to_string(),
            threshold,
        ];
        for (k, v) in KEYS.iter().zip(values) {
            writeln!(f, "{k} = {v}")?;
        }
        Ok(())
    }
}
