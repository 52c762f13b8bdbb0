//! Closed-form quantities for k-gram and run-length codes over i.i.d.
//! binary sources: the sliding-window Markov chain and its stationary law,
//! expected posting-list sizes, and first-order efficiency formulas.

use nalgebra::{DMatrix, DVector};

use crate::code::{CodewordIndex, PostingCode};
use crate::error::{invalid, Error, Result};
use crate::index::ListSizes;
use crate::query::CountLaw;
use crate::source::validate_probability;

/// Largest `k` for which the dense `2^k × 2^k` transition matrix is built.
pub const MAX_CHAIN_K: usize = 12;
/// Chains up to this many states are solved directly; larger ones iterate.
pub const DIRECT_SOLVE_MAX_STATES: usize = 256;
pub const POWER_TOLERANCE: f64 = 1e-12;
pub const POWER_MAX_ITERATIONS: usize = 1_000_000;

/// Finite row-stochastic chain with a dense transition matrix.
#[derive(Clone, Debug)]
pub struct MarkovChain {
    size: usize,
    /// Row-major.
    transition: Vec<f64>,
}

impl MarkovChain {
    pub fn new(size: usize, transition: Vec<f64>) -> Result<Self> {
        if size == 0 || transition.len() != size * size {
            return Err(invalid("transition matrix must be square and nonempty"));
        }
        for (i, row) in transition.chunks(size).enumerate() {
            if row.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
                return Err(invalid(format!("row {i} has an entry outside [0, 1]")));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > 1e-12 {
                return Err(invalid(format!("row {i} sums to {s}")));
            }
        }
        Ok(Self { size, transition })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.transition[i * self.size + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.transition[i * self.size..(i + 1) * self.size]
    }

    /// `v^T P`.
    pub fn left_multiply(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.size];
        for (i, &vi) in v.iter().enumerate() {
            if vi == 0.0 {
                continue;
            }
            for (o, &p) in out.iter_mut().zip(self.row(i)) {
                *o += vi * p;
            }
        }
        out
    }
}

/// Window-shift chain of the k-gram code: state `i` (the k-gram's binary
/// value) moves to `2i mod 2^k` on a new 0 and to `2i mod 2^k + 1` on a 1.
pub fn kgram_transition_matrix(k: usize, p: f64) -> Result<MarkovChain> {
    validate_probability("p", p)?;
    if !(1..=MAX_CHAIN_K).contains(&k) {
        return Err(invalid(format!(
            "dense chain needs 1 <= k <= {MAX_CHAIN_K}, got {k}"
        )));
    }
    let m = 1usize << k;
    let mut t = vec![0.0; m * m];
    for i in 0..m {
        let j = (2 * i) % m;
        t[i * m + j] = 1.0 - p;
        t[i * m + j + 1] = p;
    }
    MarkovChain::new(m, t)
}

/// The probability vector fixed by the chain. Direct linear solve for small
/// chains, power iteration otherwise.
pub fn stationary_distribution(chain: &MarkovChain) -> Result<Vec<f64>> {
    if chain.size() <= DIRECT_SOLVE_MAX_STATES {
        stationary_direct(chain)
    } else {
        stationary_power(chain, POWER_TOLERANCE, POWER_MAX_ITERATIONS)
    }
}

/// Solves `(P^T - I) π = 0` with the last equation replaced by `Σ π = 1`.
pub fn stationary_direct(chain: &MarkovChain) -> Result<Vec<f64>> {
    let m = chain.size();
    let a = DMatrix::from_fn(m, m, |r, c| {
        if r == m - 1 {
            1.0
        } else {
            chain.get(c, r) - if r == c { 1.0 } else { 0.0 }
        }
    });
    let mut b = DVector::zeros(m);
    b[m - 1] = 1.0;
    let x = a
        .lu()
        .solve(&b)
        .ok_or_else(|| invalid("stationary system is singular"))?;
    Ok(x.iter().copied().collect())
}

/// Iterates `π ← π P` from the uniform vector until the L1 change drops
/// below `tol`.
pub fn stationary_power(chain: &MarkovChain, tol: f64, max_iter: usize) -> Result<Vec<f64>> {
    let m = chain.size();
    let mut pi = vec![1.0 / m as f64; m];
    for _ in 0..max_iter {
        let next = chain.left_multiply(&pi);
        let delta: f64 = next.iter().zip(&pi).map(|(a, b)| (a - b).abs()).sum();
        pi = next;
        if delta < tol {
            let s: f64 = pi.iter().sum();
            pi.iter_mut().for_each(|v| *v /= s);
            return Ok(pi);
        }
    }
    Err(Error::NoConvergence(max_iter))
}

/// `π_i = (1-p)^(k - w_i) p^(w_i)` with `w_i` the weight of k-gram `i`.
pub fn kgram_stationary_closed_form(k: usize, p: f64) -> Result<Vec<f64>> {
    validate_probability("p", p)?;
    if k == 0 || k > crate::code::MAX_KGRAM_K {
        return Err(invalid(format!("k out of range: {k}")));
    }
    Ok((0..1u64 << k)
        .map(|i| {
            let w = i.count_ones() as i32;
            (1.0 - p).powi(k as i32 - w) * p.powi(w)
        })
        .collect())
}

/// Unnormalized left eigenvector `u_i = ((1-p)/p)^(k - w_i)`; it sums to
/// `p^-k`.
pub fn kgram_eigenvector_unnormalized(k: usize, p: f64) -> Result<Vec<f64>> {
    validate_probability("p", p)?;
    if k == 0 || k > crate::code::MAX_KGRAM_K {
        return Err(invalid(format!("k out of range: {k}")));
    }
    let ratio = (1.0 - p) / p;
    Ok((0..1u64 << k)
        .map(|i| ratio.powi(k as i32 - i.count_ones() as i32))
        .collect())
}

/// Expected posting-list sizes `N · p^w(c) (1-p)^(l(c) - w(c))`.
#[derive(Clone, Debug)]
pub struct AnalyticTable {
    sizes: Vec<f64>,
    log2_sizes: Vec<f64>,
    n: u64,
}

impl AnalyticTable {
    pub fn sizes(&self) -> &[f64] {
        &self.sizes
    }

    /// Sizes divided by `N`.
    pub fn fractions(&self) -> Vec<f64> {
        self.sizes.iter().map(|s| s / self.n as f64).collect()
    }

    pub fn source_len(&self) -> u64 {
        self.n
    }
}

impl ListSizes for AnalyticTable {
    fn list_size_of(&self, c: CodewordIndex) -> f64 {
        self.sizes[c]
    }

    fn log2_list_size(&self, c: CodewordIndex) -> f64 {
        self.log2_sizes[c]
    }
}

pub fn analytic_list_size(code: &PostingCode, p: f64, n: u64) -> Result<AnalyticTable> {
    validate_probability("p", p)?;
    if !code.is_complete() {
        return Err(Error::IncompleteCode);
    }
    if n == 0 {
        return Err(invalid("N must be at least 1"));
    }
    let (lp, lq) = (p.log2(), (1.0 - p).log2());
    let nf = n as f64;
    let mut sizes = Vec::with_capacity(code.size());
    let mut log2_sizes = Vec::with_capacity(code.size());
    for w in code.codewords() {
        let ones = w.hamming_weight() as f64;
        let zeros = (w.len() - w.hamming_weight()) as f64;
        let log2 = nf.log2() + ones * lp + zeros * lq;
        sizes.push(log2.exp2());
        log2_sizes.push(log2);
    }
    Ok(AnalyticTable {
        sizes,
        log2_sizes,
        n,
    })
}

/// Moment generating function of Binomial(k, q) at `t`: `(1 - q + q t)^k`.
pub fn binomial_mgf(q: f64, k: u32, t: f64) -> f64 {
    (1.0 - q + q * t).powi(k as i32)
}

/// `E[π(Q_1^k)] = ((1-p)(1-q) + pq)^k`, the expected k-gram list size as a
/// fraction of `N`.
pub fn expected_kgram_list_size(p: f64, q: f64, k: u32) -> f64 {
    ((1.0 - p) * (1.0 - q) + p * q).powi(k as i32)
}

/// `log2` of a k-gram list-size fraction, averaged two ways.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogSizeGap {
    /// `E[log2 π(Q_1^k)] = k (q log2 p + (1-q) log2 (1-p))`.
    pub expected_log: f64,
    /// `log2 E[π(Q_1^k)] = k log2((1-p)(1-q) + pq)`.
    pub log_expected: f64,
}

impl LogSizeGap {
    /// Non-negative by Jensen's inequality.
    pub fn gap(&self) -> f64 {
        self.log_expected - self.expected_log
    }
}

pub fn kgram_log_size_gap(p: f64, q: f64, k: u32) -> LogSizeGap {
    let k = k as f64;
    LogSizeGap {
        expected_log: k * (q * p.log2() + (1.0 - q) * (1.0 - p).log2()),
        log_expected: k * expected_kgram_list_size(p, q, 1).log2(),
    }
}

/// `η(N) ≈ dominant · (1 + correction / log2 N)`, with the first-order
/// constant taken as exactly 1.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EfficiencyFormula {
    /// Expected number of covering codewords per query.
    pub dominant: f64,
    pub correction: f64,
}

impl EfficiencyFormula {
    pub fn value_at(&self, n: f64) -> f64 {
        self.dominant * (1.0 + self.correction / n.log2())
    }
}

/// How the k-gram tail term enters the codeword count.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum TailTerm {
    /// `E[1{R>0} 2^(k-R)]`, the average tail-expansion size.
    #[default]
    Unconditional,
    /// `E[2^(k-R) | R > 0]` added without a `P(R>0)` weight; 0 when `R` is
    /// always 0.
    Conditional,
}

/// Quotient/remainder moments of the query length against block size `k`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BlockMoments {
    pub mean_z: f64,
    pub prob_tail: f64,
    pub tail_unconditional: f64,
    pub tail_conditional: f64,
}

pub fn block_moments(k: usize, length: &CountLaw) -> Result<BlockMoments> {
    if k == 0 {
        return Err(invalid("k must be positive"));
    }
    length.validate()?;
    let (mut mean_z, mut prob_tail, mut tail) = (0.0, 0.0, 0.0);
    for (l, pr) in length.pmf() {
        let (z, r) = (l / k, l % k);
        mean_z += pr * z as f64;
        if r > 0 {
            prob_tail += pr;
            tail += pr * (1u64 << (k - r)) as f64;
        }
    }
    Ok(BlockMoments {
        mean_z,
        prob_tail,
        tail_unconditional: tail,
        tail_conditional: if prob_tail > 0.0 {
            tail / prob_tail
        } else {
            0.0
        },
    })
}

/// First-order k-gram efficiency with correction `k log2((1-p)(1-q) + pq)`.
pub fn lemma1_efficiency(
    p: f64,
    q: f64,
    k: usize,
    length: &CountLaw,
    tail: TailTerm,
) -> Result<EfficiencyFormula> {
    validate_probability("p", p)?;
    validate_probability("q", q)?;
    let m = block_moments(k, length)?;
    let tail_term = match tail {
        TailTerm::Unconditional => m.tail_unconditional,
        TailTerm::Conditional => m.tail_conditional,
    };
    Ok(EfficiencyFormula {
        dominant: m.mean_z + tail_term,
        correction: kgram_log_size_gap(p, q, k as u32).log_expected,
    })
}

/// As [`lemma1_efficiency`] but with `E[log2 π]` in place of `log2 E[π]`.
pub fn lemma1_efficiency_expected_log(
    p: f64,
    q: f64,
    k: usize,
    length: &CountLaw,
    tail: TailTerm,
) -> Result<EfficiencyFormula> {
    let mut f = lemma1_efficiency(p, q, k, length, tail)?;
    f.correction = kgram_log_size_gap(p, q, k as u32).expected_log;
    Ok(f)
}

/// Exact large-table k-gram efficiency: the expected cost per query, when
/// every list has its expected size, written in the [`EfficiencyFormula`]
/// form. Tail codewords `t.s` contribute through the average weight of the
/// free suffix `s`.
pub fn kgram_table_efficiency(
    p: f64,
    q: f64,
    k: usize,
    length: &CountLaw,
) -> Result<EfficiencyFormula> {
    validate_probability("p", p)?;
    validate_probability("q", q)?;
    let m = block_moments(k, length)?;
    let (lp, lq) = (p.log2(), (1.0 - p).log2());
    let h = q * lp + (1.0 - q) * lq;
    let mut log_part = 0.0;
    for (l, pr) in length.pmf() {
        let (z, r) = (l / k, l % k);
        log_part += pr * z as f64 * k as f64 * h;
        if r > 0 {
            let free = (k - r) as f64;
            let width = (1u64 << (k - r)) as f64;
            log_part += pr * width * (r as f64 * h + free * (lp + lq) / 2.0);
        }
    }
    let dominant = m.mean_z + m.tail_unconditional;
    Ok(EfficiencyFormula {
        dominant,
        correction: log_part / dominant,
    })
}

/// `pq / ((1 - (1-p)(1-q)) (1 - (1-q)^(M-1)))`.
pub fn rle_per_run_constant(p: f64, q: f64, m: usize) -> f64 {
    let (pb, qb) = (1.0 - p, 1.0 - q);
    p * q / ((1.0 - pb * qb) * (1.0 - qb.powi(m as i32 - 1)))
}

/// `Σ_{Z>=0} Σ_{R=1}^{M-1} pq ((1-p)(1-q))^(Z(M-1)+R-1)`, summed until the
/// next block of terms falls below `tol`.
pub fn rle_per_run_series(p: f64, q: f64, m: usize, tol: f64) -> f64 {
    let x = (1.0 - p) * (1.0 - q);
    let mut total = 0.0;
    for z in 0.. {
        let block: f64 = (1..m)
            .map(|r| p * q * x.powi((z * (m - 1) + r - 1) as i32))
            .sum();
        total += block;
        if block < tol {
            break;
        }
    }
    total
}

/// First-order run-length efficiency: `E[B]` with correction
/// `log2` of [`rle_per_run_constant`].
pub fn lemma2_efficiency(p: f64, q: f64, m: usize, runs: &CountLaw) -> Result<EfficiencyFormula> {
    validate_probability("p", p)?;
    validate_probability("q", q)?;
    if m < 2 {
        return Err(invalid(format!("rle code needs M >= 2, got {m}")));
    }
    runs.validate()?;
    Ok(EfficiencyFormula {
        dominant: runs.mean(),
        correction: rle_per_run_constant(p, q, m).log2(),
    })
}

/// Exact large-table run-length efficiency. A run of length `l` parses into
/// `Z + 1` codewords with `E[Z + 1] = 1 / (1 - (1-q)^(M-1))`, and the
/// product of their list-size fractions is `p (1-p)^(l-1)`.
pub fn rle_table_efficiency(
    p: f64,
    q: f64,
    m: usize,
    runs: &CountLaw,
) -> Result<EfficiencyFormula> {
    validate_probability("p", p)?;
    validate_probability("q", q)?;
    if m < 2 {
        return Err(invalid(format!("rle code needs M >= 2, got {m}")));
    }
    runs.validate()?;
    let per_run = 1.0 / (1.0 - (1.0 - q).powi(m as i32 - 1));
    let log_per_run = p.log2() + (1.0 - q) / q * (1.0 - p).log2();
    Ok(EfficiencyFormula {
        dominant: runs.mean() * per_run,
        correction: log_per_run / per_run,
    })
}
