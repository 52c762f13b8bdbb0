//! Statistical dictionary-based string matching.
//!
//! A source sequence is indexed by a *posting code*: every source position
//! is filed under the codeword that starts there. Queries are covered by
//! codewords, and the cost of a covering is the sum of the log-sizes of the
//! posting lists it touches. With a complete prefix-free code every query
//! has exactly one covering (its parsing), and the table holds exactly one
//! entry per source position.
//!
//! Modules:
//! - [`bits`]: binary sequences and circular windows.
//! - [`code`]: k-gram, run-length, explicit and random complete codes.
//! - [`source`]: i.i.d. Bernoulli sources.
//! - [`index`]: posting tables and retrieval.
//! - [`query`]: query laws, parsing, covering cost.
//! - [`analytics`]: stationary laws and efficiency formulas.
//! - [`experiments`]: Monte Carlo estimates, sweeps and CSV output.

pub mod analytics;
pub mod bits;
pub mod code;
pub mod error;
pub mod experiments;
pub mod index;
pub mod query;
pub mod seed;
pub mod source;

pub use analytics::{analytic_list_size, AnalyticTable, EfficiencyFormula, MarkovChain, TailTerm};
pub use bits::BitString;
pub use code::{
    kgram_code, random_complete_code, rle_code, CodeFamily, CodeSpec, CodewordIndex, PostingCode,
};
pub use error::{Error, Result};
pub use experiments::{
    best_random_code, estimate_efficiency, sweep, EfficiencyEstimate, ExperimentConfig, TableMode,
};
pub use index::{
    build_posting_table, naive_scan, retrieve_matches, Boundary, ListSizes, PostingTable,
};
pub use query::{
    covering_cost, parse_query, sample_query, CountLaw, Parsing, QueryModel, QuerySampler,
    QueryShape,
};
pub use seed::derive_seed;
pub use source::{sample_source, SourceSequence, SourceSpec};
