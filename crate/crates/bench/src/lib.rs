//! Shared fixtures for the benchmarks.

use sdsm_core::{
    sample_query, sample_source, BitString, CountLaw, QueryModel, SourceSequence, SourceSpec,
};

pub fn source(p: f64, n: u64, seed: u64) -> SourceSequence {
    sample_source(&SourceSpec::new(p, n, seed).expect("valid source spec")).expect("source")
}

/// `count` i.i.d. queries of fixed `len`, each from its own seed.
pub fn queries(q: f64, len: usize, count: usize, seed: u64) -> Vec<BitString> {
    let model = QueryModel::iid(q, CountLaw::Fixed(len));
    (0..count as u64)
        .map(|i| sample_query(&model, sdsm_core::derive_seed(seed, i)).expect("query"))
        .collect()
}
