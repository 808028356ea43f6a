//! Next-word distributions: vocabulary and tokenization, the interpolated
//! n-gram model, and the interchange format for externally produced
//! distributions or nucleus sizes.

mod distribution;
mod interchange;
mod ngram;
mod vocab;

pub use distribution::{Distribution, NORMALIZATION_TOLERANCE};
pub use interchange::{
    ingest_distributions, InterchangeReader, InterchangeWriter, NssHeader, Payload, Record,
    NSS_MAGIC,
};
pub use ngram::{train_model, NgramModel, Scratch, Smoothing, MAX_ORDER};
pub use vocab::{tokenize, Sequence, Vocabulary};
