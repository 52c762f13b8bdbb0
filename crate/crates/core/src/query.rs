//! Query laws, unique parsing over a complete code, and covering costs.

use std::fmt;
use std::str::FromStr;

use rand::distr::{weighted::WeightedIndex, Distribution};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Geometric;
use serde::{Deserialize, Serialize};

use crate::bits::BitString;
use crate::code::{CodeFamily, CodeTree, CodewordIndex, PostingCode};
use crate::error::{invalid, Error, Result};
use crate::index::ListSizes;
use crate::source::validate_probability;

/// A law over positive integers: query lengths or run counts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CountLaw {
    Fixed(usize),
    /// `P(n) ∝ success · (1 - success)^(n-1)` on `1..=max`.
    TruncatedGeometric {
        success: f64,
        max: usize,
    },
}

impl Default for CountLaw {
    fn default() -> Self {
        CountLaw::TruncatedGeometric {
            success: 0.5,
            max: 64,
        }
    }
}

impl CountLaw {
    pub fn validate(&self) -> Result<()> {
        match *self {
            CountLaw::Fixed(0) => Err(invalid("fixed count must be at least 1")),
            CountLaw::Fixed(_) => Ok(()),
            CountLaw::TruncatedGeometric { success, max } => {
                if !(success > 0.0 && success <= 1.0) {
                    return Err(invalid(format!(
                        "geometric success {success} not in (0, 1]"
                    )));
                }
                if max == 0 {
                    return Err(invalid("geometric truncation must be at least 1"));
                }
                Ok(())
            }
        }
    }

    /// `(value, probability)` over the support, ascending.
    pub fn pmf(&self) -> Vec<(usize, f64)> {
        match *self {
            CountLaw::Fixed(v) => vec![(v, 1.0)],
            CountLaw::TruncatedGeometric { success, max } => {
                let weights: Vec<f64> = (0..max)
                    .map(|i| success * (1.0 - success).powi(i as i32))
                    .collect();
                let total: f64 = weights.iter().sum();
                weights
                    .into_iter()
                    .enumerate()
                    .map(|(i, w)| (i + 1, w / total))
                    .collect()
            }
        }
    }

    pub fn mean(&self) -> f64 {
        self.pmf().iter().map(|&(v, p)| v as f64 * p).sum()
    }

    pub fn max_value(&self) -> usize {
        match *self {
            CountLaw::Fixed(v) => v,
            CountLaw::TruncatedGeometric { max, .. } => max,
        }
    }
}

/// `fixed:<n>` or `geom:<success>,<max>`.
impl FromStr for CountLaw {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || {
            invalid(format!(
                "bad count law {s:?}; expected fixed:<n> or geom:<success>,<max>"
            ))
        };
        let law = match s.split_once(':').ok_or_else(bad)? {
            ("fixed", n) => CountLaw::Fixed(n.parse().map_err(|_| bad())?),
            ("geom", rest) => {
                let (success, max) = rest.split_once(',').ok_or_else(bad)?;
                CountLaw::TruncatedGeometric {
                    success: success.parse().map_err(|_| bad())?,
                    max: max.parse().map_err(|_| bad())?,
                }
            }
            _ => return Err(bad()),
        };
        law.validate()?;
        Ok(law)
    }
}

impl fmt::Display for CountLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CountLaw::Fixed(n) => write!(f, "fixed:{n}"),
            CountLaw::TruncatedGeometric { success, max } => write!(f, "geom:{success},{max}"),
        }
    }
}

/// Query structure without its symbol parameter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum QueryShape {
    /// Length `L` from `length`, then `L` i.i.d. Bernoulli(q) symbols.
    Iid { length: CountLaw },
    /// `B` runs from `runs`; each run is `0^(k-1)1` with `k` geometric(q).
    Runlength { runs: CountLaw },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QueryModel {
    #[serde(flatten)]
    pub shape: QueryShape,
    pub q: f64,
}

impl QueryModel {
    pub fn iid(q: f64, length: CountLaw) -> Self {
        Self {
            shape: QueryShape::Iid { length },
            q,
        }
    }

    pub fn runlength(q: f64, runs: CountLaw) -> Self {
        Self {
            shape: QueryShape::Runlength { runs },
            q,
        }
    }

    pub fn validate(&self) -> Result<()> {
        validate_probability("q", self.q)?;
        match &self.shape {
            QueryShape::Iid { length } => length.validate(),
            QueryShape::Runlength { runs } => runs.validate(),
        }
    }
}

/// Prepared sampler; reusable across trials with per-trial generators.
#[derive(Clone, Debug)]
pub struct QuerySampler {
    q: f64,
    counts: Vec<usize>,
    pick: WeightedIndex<f64>,
    runs: bool,
    run_len: Geometric,
}

impl QuerySampler {
    pub fn new(model: &QueryModel) -> Result<Self> {
        model.validate()?;
        let (law, runs) = match &model.shape {
            QueryShape::Iid { length } => (length, false),
            QueryShape::Runlength { runs } => (runs, true),
        };
        let pmf = law.pmf();
        let pick = WeightedIndex::new(pmf.iter().map(|&(_, p)| p))
            .map_err(|e| invalid(format!("count law: {e}")))?;
        Ok(Self {
            q: model.q,
            counts: pmf.into_iter().map(|(v, _)| v).collect(),
            pick,
            runs,
            run_len: Geometric::new(model.q).map_err(|e| invalid(format!("run law: {e}")))?,
        })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> BitString {
        let count = self.counts[self.pick.sample(rng)];
        let mut out = BitString::new();
        if self.runs {
            for _ in 0..count {
                let zeros = self.run_len.sample(rng);
                for _ in 0..zeros {
                    out.push(false);
                }
                out.push(true);
            }
        } else {
            for _ in 0..count {
                out.push(rng.random_bool(self.q));
            }
        }
        out
    }
}

pub fn sample_query(model: &QueryModel, seed: u64) -> Result<BitString> {
    let sampler = QuerySampler::new(model)?;
    Ok(sampler.sample(&mut ChaCha8Rng::seed_from_u64(seed)))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Segment {
    pub codeword: CodewordIndex,
    pub offset: usize,
}

/// The unfinished end of a query: `bits` starts at `offset` and every
/// codeword in `codewords` extends it past the query end.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Tail {
    pub offset: usize,
    pub bits: BitString,
    pub codewords: Vec<CodewordIndex>,
}

/// The non-overlapping covering of a query by a complete code.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Parsing {
    pub body: Vec<Segment>,
    pub tail: Option<Tail>,
}

impl Parsing {
    /// Body segments plus every tail-expansion codeword.
    pub fn codeword_count(&self) -> usize {
        self.body.len() + self.tail.as_ref().map_or(0, |t| t.codewords.len())
    }

    pub fn covering_codewords(&self) -> impl Iterator<Item = CodewordIndex> + '_ {
        self.body
            .iter()
            .map(|s| s.codeword)
            .chain(self.tail.iter().flat_map(|t| t.codewords.iter().copied()))
    }

    /// Body codewords followed by the tail string.
    pub fn reconstruct(&self, code: &PostingCode) -> BitString {
        let mut out = BitString::new();
        for s in &self.body {
            out = out.concat(code.codeword(s.codeword));
        }
        if let Some(t) = &self.tail {
            out = out.concat(&t.bits);
        }
        out
    }

    pub fn describe(&self, code: &PostingCode) -> String {
        let body: Vec<String> = self
            .body
            .iter()
            .map(|s| format!("({}@{})", code.codeword(s.codeword), s.offset))
            .collect();
        let mut out = format!("body [{}]", body.join(","));
        match &self.tail {
            Some(t) => {
                let words: Vec<String> = t
                    .codewords
                    .iter()
                    .map(|&c| code.codeword(c).to_string())
                    .collect();
                out.push_str(&format!(
                    "\ntail {}@{} {{{}}}",
                    t.bits,
                    t.offset,
                    words.join(",")
                ));
            }
            None => out.push_str("\ntail none"),
        }
        out.push_str(&format!("\ncodewords {}", self.codeword_count()));
        out
    }
}

/// Walks the code tree over the query, emitting a segment at each leaf. A
/// walk left unfinished at the query end becomes the tail.
pub fn parse_query(code: &PostingCode, query: &BitString) -> Result<Parsing> {
    let tree = code.complete_tree()?;
    if query.is_empty() {
        return Err(invalid("query must be nonempty"));
    }
    let mut body = Vec::new();
    let mut node = CodeTree::ROOT;
    let mut start = 0;
    for (i, &b) in query.bits().iter().enumerate() {
        // Complete trees have both children at every internal node.
        node = tree.child(node, b).ok_or(Error::IncompleteCode)?;
        if let Some(c) = tree.leaf(node) {
            body.push(Segment {
                codeword: c,
                offset: start,
            });
            node = CodeTree::ROOT;
            start = i + 1;
        }
    }
    let tail = (node != CodeTree::ROOT).then(|| Tail {
        offset: start,
        bits: query.slice(start..query.len()),
        codewords: tree.leaves_under(node),
    });
    Ok(Parsing { body, tail })
}

/// Sum of `log2 |T(c)|` over every covering codeword; `+inf` if any list is
/// empty.
pub fn covering_cost<S: ListSizes + ?Sized>(sizes: &S, parsing: &Parsing) -> f64 {
    parsing
        .covering_codewords()
        .map(|c| sizes.log2_list_size(c))
        .sum()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RunSummary {
    /// Number of all-zero codewords consumed.
    pub z: usize,
    /// Length of the terminating codeword, in `1..=M-1`.
    pub r: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ParseSummary {
    /// k-gram codes: `L = kZ + R`, `0 <= R < k`.
    Blocks { z: usize, r: usize },
    /// RLE codes: one entry per run, `l(S_j) = Z_j (M-1) + R_j`.
    Runs(Vec<RunSummary>),
}

pub fn parse_summary(code: &PostingCode, query: &BitString) -> Result<ParseSummary> {
    match code.family() {
        CodeFamily::Kgram { k } => Ok(ParseSummary::Blocks {
            z: query.len() / k,
            r: query.len() % k,
        }),
        CodeFamily::Rle { m } => {
            if query.is_empty() || query.bits().last() != Some(&1) {
                return Err(invalid(
                    "run summaries need a query made of runs ending in 1",
                ));
            }
            let mut runs = Vec::new();
            let mut len = 0;
            for &b in query.bits() {
                len += 1;
                if b == 1 {
                    let z = (len - 1) / (m - 1);
                    runs.push(RunSummary {
                        z,
                        r: len - z * (m - 1),
                    });
                    len = 0;
                }
            }
            Ok(ParseSummary::Runs(runs))
        }
        other => Err(invalid(format!(
            "no parse summary for {} codes",
            other.name()
        ))),
    }
}

pub const BRUTE_FORCE_MAX_QUERY: usize = 12;
pub const BRUTE_FORCE_MAX_CODE: usize = 16;

#[derive(Clone, Debug, PartialEq)]
pub struct BruteForceCovering {
    /// Minimum covering cost; `+inf` when no tiling exists.
    pub cost: f64,
    pub covering: Option<Vec<Segment>>,
    /// Number of distinct tilings found.
    pub tilings: usize,
}

/// Enumerates every tiling of `query` by codewords placed end to end and
/// returns the cheapest. Works on any codeword list, complete or not;
/// tilings never overflow the query end.
pub fn brute_force_min_covering<S: ListSizes + ?Sized>(
    code: &PostingCode,
    sizes: &S,
    query: &BitString,
) -> Result<BruteForceCovering> {
    if query.len() > BRUTE_FORCE_MAX_QUERY {
        return Err(invalid(format!(
            "brute force limited to queries of length <= {BRUTE_FORCE_MAX_QUERY}"
        )));
    }
    if code.size() > BRUTE_FORCE_MAX_CODE {
        return Err(invalid(format!(
            "brute force limited to codes of size <= {BRUTE_FORCE_MAX_CODE}"
        )));
    }

    struct Search<'a, S: ?Sized> {
        words: &'a [BitString],
        sizes: &'a S,
        q: &'a [u8],
        path: Vec<Segment>,
        best: Option<(f64, Vec<Segment>)>,
        tilings: usize,
    }

    impl<S: ListSizes + ?Sized> Search<'_, S> {
        fn go(&mut self, pos: usize, cost: f64) {
            if pos == self.q.len() {
                self.tilings += 1;
                if self.best.as_ref().is_none_or(|(b, _)| cost < *b) {
                    self.best = Some((cost, self.path.clone()));
                }
                return;
            }
            for (c, w) in self.words.iter().enumerate() {
                if self.q[pos..].starts_with(w.bits()) {
                    self.path.push(Segment {
                        codeword: c,
                        offset: pos,
                    });
                    let step = self.sizes.log2_list_size(c);
                    self.go(pos + w.len(), cost + step);
                    self.path.pop();
                }
            }
        }
    }

    let mut search = Search {
        words: code.codewords(),
        sizes,
        q: query.bits(),
        path: Vec::new(),
        best: None,
        tilings: 0,
    };
    search.go(0, 0.0);
    Ok(match search.best {
        Some((cost, covering)) => BruteForceCovering {
            cost,
            covering: Some(covering),
            tilings: search.tilings,
        },
        None => BruteForceCovering {
            cost: f64::INFINITY,
            covering: None,
            tilings: 0,
        },
    })
}
