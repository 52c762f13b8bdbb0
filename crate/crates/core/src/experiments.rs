//! Monte Carlo efficiency estimates, random-code search and parameter
//! sweeps with CSV output.

use std::fmt;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytics::analytic_list_size;
use crate::code::{random_complete_code, CodeFamily, CodeSpec, PostingCode};
use crate::error::{invalid, Error, Result};
use crate::index::{Boundary, ListSizes, PostingTable};
use crate::query::{covering_cost, parse_query, CountLaw, QueryModel, QuerySampler, QueryShape};
use crate::seed::derive_seed;
use crate::source::{sample_source, validate_probability, SourceSequence, SourceSpec};

/// Largest source materialized in empirical mode.
pub const MAX_EMPIRICAL_N: u64 = 100_000_000;

/// Where list sizes come from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TableMode {
    /// Sizes counted in a posting table over a sampled source.
    Empirical,
    /// Expected sizes `N π(c)`; no source is materialized.
    #[default]
    AnalyticTable,
}

impl fmt::Display for TableMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TableMode::Empirical => "empirical",
            TableMode::AnalyticTable => "analytic_table",
        })
    }
}

impl FromStr for TableMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "empirical" => Ok(TableMode::Empirical),
            "analytic_table" | "analytic" => Ok(TableMode::AnalyticTable),
            _ => Err(invalid(format!("unknown table mode `{s}`"))),
        }
    }
}

/// `cost / log2 N` averaged over the finite-cost trials.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EfficiencyEstimate {
    pub eta_mean: f64,
    pub eta_stderr: f64,
    pub trials: usize,
    pub infinite_cost_trials: usize,
    pub mode: TableMode,
}

impl EfficiencyEstimate {
    pub fn finite_trials(&self) -> usize {
        self.trials - self.infinite_cost_trials
    }
}

/// Estimates efficiency from `trials` queries drawn with per-trial seeds
/// `derive_seed(seed, t)`. Empirical mode samples the source from
/// `source.seed` and builds a circular table.
pub fn estimate_efficiency(
    code: &PostingCode,
    source: &SourceSpec,
    query: &QueryModel,
    trials: usize,
    mode: TableMode,
    seed: u64,
) -> Result<EfficiencyEstimate> {
    source.validate()?;
    match mode {
        TableMode::AnalyticTable => {
            let sizes = analytic_list_size(code, source.p, source.n)?;
            estimate_with_sizes(code, &sizes, source.n, query, trials, mode, seed)
        }
        TableMode::Empirical => {
            let seq = sample_empirical_source(source)?;
            let table = PostingTable::build(code, &seq, Boundary::Circular)?;
            estimate_with_sizes(code, &table, source.n, query, trials, mode, seed)
        }
    }
}

fn sample_empirical_source(source: &SourceSpec) -> Result<SourceSequence> {
    if source.n > MAX_EMPIRICAL_N {
        return Err(invalid(format!(
            "empirical mode needs N <= {MAX_EMPIRICAL_N}, got {}",
            source.n
        )));
    }
    sample_source(source)
}

/// Estimates efficiency against precomputed list sizes. In empirical mode a
/// query longer than `n` is an error.
pub fn estimate_with_sizes<S: ListSizes + Sync + ?Sized>(
    code: &PostingCode,
    sizes: &S,
    n: u64,
    query: &QueryModel,
    trials: usize,
    mode: TableMode,
    seed: u64,
) -> Result<EfficiencyEstimate> {
    if trials == 0 {
        return Err(invalid("trials must be at least 1"));
    }
    if n < 2 {
        return Err(invalid("efficiency needs N >= 2"));
    }
    code.complete_tree()?;
    let sampler = QuerySampler::new(query)?;
    let log_n = (n as f64).log2();
    let costs = (0..trials as u64)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, t));
            let q = sampler.sample(&mut rng);
            if mode == TableMode::Empirical && q.len() as u64 > n {
                return Err(Error::QueryTooLong {
                    query: q.len(),
                    source_len: n as usize,
                });
            }
            let parsing = parse_query(code, &q)?;
            Ok(covering_cost(sizes, &parsing) / log_n)
        })
        .collect::<Result<Vec<f64>>>()?;
    summarize(&costs, mode)
}

fn summarize(etas: &[f64], mode: TableMode) -> Result<EfficiencyEstimate> {
    let finite: Vec<f64> = etas.iter().copied().filter(|v| v.is_finite()).collect();
    if finite.is_empty() {
        return Err(Error::AllTrialsInfinite);
    }
    let k = finite.len() as f64;
    let mean = finite.iter().sum::<f64>() / k;
    let stderr = if finite.len() > 1 {
        let var = finite.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0);
        (var / k).sqrt()
    } else {
        0.0
    };
    Ok(EfficiencyEstimate {
        eta_mean: mean,
        eta_stderr: stderr,
        trials: etas.len(),
        infinite_cost_trials: etas.len() - finite.len(),
        mode,
    })
}

/// Index offset separating code-generation seeds from query seeds.
const CODE_STREAM: u64 = 1 << 63;

/// Draws `candidates` random complete codes (candidate `i` from
/// `derive_seed(seed, 2^63 + i)`) and scores each in analytic-table mode on
/// the same query stream `seed`. Returns the first minimizer.
#[allow(clippy::too_many_arguments)]
pub fn best_random_code(
    m: usize,
    max_len: usize,
    candidates: usize,
    p: f64,
    n: u64,
    query: &QueryModel,
    trials: usize,
    seed: u64,
) -> Result<(PostingCode, EfficiencyEstimate)> {
    if candidates == 0 {
        return Err(invalid("candidates must be at least 1"));
    }
    validate_probability("p", p)?;
    let mut best: Option<(PostingCode, EfficiencyEstimate)> = None;
    for i in 0..candidates as u64 {
        let code = random_complete_code(m, max_len, derive_seed(seed, CODE_STREAM + i))?;
        let sizes = analytic_list_size(&code, p, n)?;
        let est = estimate_with_sizes(
            &code,
            &sizes,
            n,
            query,
            trials,
            TableMode::AnalyticTable,
            seed,
        )?;
        if best.as_ref().is_none_or(|(_, b)| est.eta_mean < b.eta_mean) {
            best = Some((code, est));
        }
    }
    Ok(best.expect("at least one candidate"))
}

/// Runs `f` on a dedicated pool of `workers` threads, or on the global pool
/// when `workers` is `None`.
pub fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match workers {
        None => Ok(f()),
        Some(0) => Err(invalid("workers must be at least 1")),
        Some(w) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(w)
                .build()
                .map_err(|e| invalid(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SymbolPair {
    pub p: f64,
    pub q: f64,
}

fn default_query() -> QueryShape {
    QueryShape::Iid {
        length: CountLaw::default(),
    }
}

fn default_trials() -> usize {
    10_000
}

fn default_draws() -> usize {
    1
}

/// A sweep over codes × (p, q) pairs × source lengths.
///
/// ```json
/// {
///   "codes": ["kgram:7", "random:128,8"],
///   "pairs": [{"p": 0.7, "q": 0.2}],
///   "n": [1000000],
///   "query": {"kind": "iid", "length": {"truncated_geometric": {"success": 0.5, "max": 64}}},
///   "trials": 2000,
///   "mode": "analytic_table",
///   "random_draws": 100,
///   "seed": 1
/// }
/// ```
///
/// Cell `(pair i, length j)` uses seed `derive_seed(seed, i * |n| + j)` for
/// its queries and `derive_seed(cell, 2^63 - 1)` for its source, so all
/// codes in a cell see the same queries and source. Random specs keep the
/// best of `random_draws` codes, searched in analytic-table mode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub codes: Vec<CodeSpec>,
    pub pairs: Vec<SymbolPair>,
    pub n: Vec<u64>,
    #[serde(default = "default_query")]
    pub query: QueryShape,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub mode: TableMode,
    #[serde(default = "default_draws")]
    pub random_draws: usize,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |m: String| Error::Config(m);
        if self.trials == 0 {
            return Err(cfg("trials must be at least 1".into()));
        }
        if self.random_draws == 0 {
            return Err(cfg("random_draws must be at least 1".into()));
        }
        for pair in &self.pairs {
            validate_probability("p", pair.p).map_err(|e| cfg(e.to_string()))?;
            validate_probability("q", pair.q).map_err(|e| cfg(e.to_string()))?;
        }
        for &n in &self.n {
            if n < 2 {
                return Err(cfg(format!("N must be at least 2, got {n}")));
            }
            if self.mode == TableMode::Empirical && n > MAX_EMPIRICAL_N {
                return Err(cfg(format!(
                    "empirical mode needs N <= {MAX_EMPIRICAL_N}, got {n}"
                )));
            }
        }
        QueryModel {
            shape: self.query.clone(),
            q: 0.5,
        }
        .validate()
        .map_err(|e| cfg(e.to_string()))?;
        for spec in &self.codes {
            match spec {
                CodeSpec::File(p) if !p.exists() => {
                    return Err(cfg(format!("code file not found: {}", p.display())));
                }
                CodeSpec::Kgram(_) | CodeSpec::Rle(_) | CodeSpec::File(_) => {
                    spec.build(None).map_err(|e| cfg(format!("{spec}: {e}")))?;
                }
                CodeSpec::Random { .. } => {
                    spec.build(Some(0))
                        .map_err(|e| cfg(format!("{spec}: {e}")))?;
                }
            }
        }
        Ok(())
    }

    pub fn cell_count(&self) -> usize {
        self.codes.len() * self.pairs.len() * self.n.len()
    }
}

/// One CSV row.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub code_type: &'static str,
    pub m: usize,
    pub k_or_maxlen: usize,
    pub n: u64,
    pub p: f64,
    pub q: f64,
    pub trials: usize,
    pub eta_mean: f64,
    pub eta_stderr: f64,
    pub infinite_cost_trials: usize,
    pub seed: u64,
}

pub const CSV_HEADER: &str =
    "code_type,M,k_or_maxlen,N,p,q,trials,eta_mean,eta_stderr,infinite_cost_trials,seed";

impl SweepRow {
    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            self.code_type,
            self.m,
            self.k_or_maxlen,
            self.n,
            format_sig(self.p),
            format_sig(self.q),
            self.trials,
            format_sig(self.eta_mean),
            format_sig(self.eta_stderr),
            self.infinite_cost_trials,
            self.seed
        )
    }
}

/// `k` for k-gram codes, the longest codeword length otherwise.
pub fn code_columns(code: &PostingCode) -> (&'static str, usize, usize) {
    let second = match code.family() {
        CodeFamily::Kgram { k } => k,
        CodeFamily::Random { max_len, .. } => max_len,
        _ => code.max_len(),
    };
    (code.family().name(), code.size(), second)
}

/// Formats like C's `%.12g`.
pub fn format_sig(x: f64) -> String {
    const DIGITS: i32 = 12;
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf" } else { "-inf" }.into();
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{:.*e}", (DIGITS - 1) as usize, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("exponent digits");
    if (-5..DIGITS).contains(&exp) {
        let fixed = format!("{:.*}", (DIGITS - 1 - exp) as usize, x);
        trim_zeros(&fixed).to_string()
    } else {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{}{:02}", trim_zeros(mantissa), sign, exp.abs())
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Runs every cell of the sweep in a fixed order. A cell whose trials all
/// have infinite cost is reported with `nan` statistics.
pub fn sweep(config: &ExperimentConfig) -> Result<Vec<SweepRow>> {
    config.validate()?;
    let mut rows = Vec::with_capacity(config.cell_count());
    for (i, pair) in config.pairs.iter().enumerate() {
        let query = QueryModel {
            shape: config.query.clone(),
            q: pair.q,
        };
        for (j, &n) in config.n.iter().enumerate() {
            let cell_seed = derive_seed(config.seed, (i * config.n.len() + j) as u64);
            let spec = SourceSpec::new(pair.p, n, derive_seed(cell_seed, CODE_STREAM - 1))?;
            let source = match config.mode {
                TableMode::Empirical => Some(sample_empirical_source(&spec)?),
                TableMode::AnalyticTable => None,
            };
            for code_spec in &config.codes {
                let code = match code_spec {
                    CodeSpec::Random { m, max_len } => {
                        best_random_code(
                            *m,
                            *max_len,
                            config.random_draws,
                            pair.p,
                            n,
                            &query,
                            config.trials,
                            cell_seed,
                        )?
                        .0
                    }
                    other => other.build(None)?,
                };
                let est = match &source {
                    None => {
                        let sizes = analytic_list_size(&code, pair.p, n)?;
                        estimate_with_sizes(
                            &code,
                            &sizes,
                            n,
                            &query,
                            config.trials,
                            config.mode,
                            cell_seed,
                        )
                    }
                    Some(seq) => {
                        let table = PostingTable::build(&code, seq, Boundary::Circular)?;
                        estimate_with_sizes(
                            &code,
                            &table,
                            n,
                            &query,
                            config.trials,
                            config.mode,
                            cell_seed,
                        )
                    }
                };
                let (eta_mean, eta_stderr, infinite) = match est {
                    Ok(e) => (e.eta_mean, e.eta_stderr, e.infinite_cost_trials),
                    Err(Error::AllTrialsInfinite) => (f64::NAN, f64::NAN, config.trials),
                    Err(e) => return Err(e),
                };
                let (code_type, m, k_or_maxlen) = code_columns(&code);
                rows.push(SweepRow {
                    code_type,
                    m,
                    k_or_maxlen,
                    n,
                    p: pair.p,
                    q: pair.q,
                    trials: config.trials,
                    eta_mean,
                    eta_stderr,
                    infinite_cost_trials: infinite,
                    seed: cell_seed,
                });
            }
        }
    }
    Ok(rows)
}

pub fn write_csv(rows: &[SweepRow], mut out: impl Write) -> io::Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for row in rows {
        writeln!(out, "{}", row.to_csv())?;
    }
    Ok(())
}
