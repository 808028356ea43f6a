use crate::error::{Error, Result};
use crate::sampler;

/// Absolute tolerance on the total probability mass of a distribution.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-9;

/// Next-word probability vector together with its descending sort order.
#[derive(Clone, Debug, PartialEq)]
pub struct Distribution {
    probs: Vec<f64>,
    sorted_ids: Vec<u32>,
}

impl Distribution {
    /// Validates `probs` and sorts token ids by descending probability,
    /// ties broken by ascending id.
    pub fn from_probs(probs: Vec<f64>) -> Result<Self> {
        validate_probs(&probs)?;
        let sorted_ids = sampler::descending_order(&probs);
        Ok(Distribution { probs, sorted_ids })
    }

    /// Softmax of `logits`, computed with the same kernel the filters use.
    pub fn from_logits(logits: &[f64]) -> Result<Self> {
        sampler::check_logits(logits)?;
        Distribution::from_probs(sampler::softmax(logits))
    }

    pub(crate) fn from_sorted_unchecked(probs: Vec<f64>, sorted_ids: Vec<u32>) -> Self {
        debug_assert_eq!(probs.len(), sorted_ids.len());
        Distribution { probs, sorted_ids }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn sorted_ids(&self) -> &[u32] {
        &self.sorted_ids
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Probabilities in descending order.
    pub fn sorted_probs(&self) -> impl Iterator<Item = f64> + '_ {
        self.sorted_ids.iter().map(|&i| self.probs[i as usize])
    }
}

pub(crate) fn validate_probs(probs: &[f64]) -> Result<()> {
    if probs.is_empty() {
        return Err(Error::Validation("distribution is empty".into()));
    }
    if let Some((i, p)) = probs
        .iter()
        .enumerate()
        .find(|(_, p)| !p.is_finite() || **p < 0.0)
    {
        return Err(Error::Validation(format!(
            "probability {p} at index {i} is negative or non-finite"
        )));
    }
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > NORMALIZATION_TOLERANCE {
        return Err(Error::Validation(format!(
            "probabilities sum to {total}, expected 1 within {NORMALIZATION_TOLERANCE}"
        )));
    }
    Ok(())
}
