//! Posting codes and their binary code trees.
//!
//! A code is stored as an ordered codeword list plus, when the code is
//! prefix-free, a trie whose leaves are exactly the codewords. Completeness
//! is decided by an exact dyadic Kraft sum, so it is a crisp boolean.

use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bits::BitString;
use crate::error::{invalid, Error, Result};

/// Index of a codeword within [`PostingCode::codewords`].
pub type CodewordIndex = usize;

/// Largest `k` for which [`kgram_code`] materializes all `2^k` codewords.
pub const MAX_KGRAM_K: usize = 24;

const NONE: u32 = u32::MAX;

#[derive(Clone, Debug)]
struct Node {
    child: [u32; 2],
    leaf: u32,
}

impl Node {
    fn empty() -> Self {
        Self {
            child: [NONE, NONE],
            leaf: NONE,
        }
    }

    fn is_internal(&self) -> bool {
        self.child[0] != NONE || self.child[1] != NONE
    }
}

/// Binary trie over the codewords of a prefix-free code.
#[derive(Clone, Debug)]
pub struct CodeTree {
    nodes: Vec<Node>,
}

/// Node handle inside a [`CodeTree`]; the root is [`CodeTree::ROOT`].
pub type NodeId = usize;

impl CodeTree {
    pub const ROOT: NodeId = 0;

    /// Returns `None` when some codeword is a proper prefix of another.
    fn build(codewords: &[BitString]) -> Option<Self> {
        let mut nodes = vec![Node::empty()];
        for (idx, word) in codewords.iter().enumerate() {
            let mut node = 0usize;
            for &bit in word.bits() {
                if nodes[node].leaf != NONE {
                    return None;
                }
                let next = nodes[node].child[bit as usize];
                node = if next == NONE {
                    nodes.push(Node::empty());
                    let id = (nodes.len() - 1) as u32;
                    nodes[node].child[bit as usize] = id;
                    id as usize
                } else {
                    next as usize
                };
            }
            if nodes[node].is_internal() || nodes[node].leaf != NONE {
                return None;
            }
            nodes[node].leaf = idx as u32;
        }
        Some(Self { nodes })
    }

    pub fn child(&self, node: NodeId, bit: u8) -> Option<NodeId> {
        match self.nodes[node].child[bit as usize] {
            NONE => None,
            c => Some(c as usize),
        }
    }

    pub fn leaf(&self, node: NodeId) -> Option<CodewordIndex> {
        match self.nodes[node].leaf {
            NONE => None,
            l => Some(l as usize),
        }
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes.iter().filter(|n| n.leaf != NONE).count()
    }

    /// True iff every internal node has exactly two children and every
    /// childless node is a codeword.
    pub fn is_full(&self) -> bool {
        self.nodes.iter().all(|n| {
            let kids = n.child.iter().filter(|&&c| c != NONE).count();
            kids == 2 || (kids == 0 && n.leaf != NONE)
        })
    }

    /// Walks from the root consuming symbols from `next` until a leaf is
    /// reached. `next(d)` yields the `d`-th symbol or `None` when the input
    /// is exhausted; exhaustion or a missing child yields `None`.
    #[inline]
    pub fn walk(&self, mut next: impl FnMut(usize) -> Option<u8>) -> Option<CodewordIndex> {
        let mut node = Self::ROOT;
        let mut depth = 0;
        loop {
            let n = &self.nodes[node];
            if n.leaf != NONE {
                return Some(n.leaf as usize);
            }
            let bit = next(depth)?;
            let c = n.child[bit as usize];
            if c == NONE {
                return None;
            }
            node = c as usize;
            depth += 1;
        }
    }

    /// Codeword indices of every leaf below `node`, in ascending index order.
    pub fn leaves_under(&self, node: NodeId) -> Vec<CodewordIndex> {
        let mut out = Vec::new();
        let mut stack = vec![node];
        while let Some(id) = stack.pop() {
            let n = &self.nodes[id];
            if n.leaf != NONE {
                out.push(n.leaf as usize);
            }
            stack.extend(n.child.iter().filter(|&&c| c != NONE).map(|&c| c as usize));
        }
        out.sort_unstable();
        out
    }
}

/// Exact value of `Σ 2^-l(c)` as an integer part plus a binary fraction.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KraftSum {
    integer: u64,
    /// `fraction[i]` is the coefficient of `2^-(i+1)`.
    fraction: Vec<u8>,
}

impl KraftSum {
    pub fn of_lengths(lengths: impl IntoIterator<Item = usize>) -> Self {
        let mut counts: Vec<u64> = Vec::new();
        for l in lengths {
            if counts.len() <= l {
                counts.resize(l + 1, 0);
            }
            counts[l] += 1;
        }
        let depth = counts.len().saturating_sub(1);
        let mut fraction = vec![0u8; depth];
        let mut carry = 0u64;
        for l in (1..=depth).rev() {
            let total = counts[l] + carry;
            fraction[l - 1] = (total & 1) as u8;
            carry = total >> 1;
        }
        let integer = counts.first().copied().unwrap_or(0) + carry;
        while fraction.last() == Some(&0) {
            fraction.pop();
        }
        Self { integer, fraction }
    }

    pub fn is_one(&self) -> bool {
        self.integer == 1 && self.fraction.is_empty()
    }

    pub fn at_most_one(&self) -> bool {
        self.integer == 0 || self.is_one()
    }

    pub fn to_f64(&self) -> f64 {
        self.fraction
            .iter()
            .enumerate()
            .fold(self.integer as f64, |acc, (i, &b)| {
                acc + b as f64 * 0.5f64.powi(i as i32 + 1)
            })
    }
}

/// How a code was produced; used for reporting and for the run/block
/// summaries that only make sense for structured codes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CodeFamily {
    Explicit,
    Kgram { k: usize },
    Rle { m: usize },
    Random { max_len: usize, seed: u64 },
}

impl CodeFamily {
    pub fn name(&self) -> &'static str {
        match self {
            CodeFamily::Explicit => "explicit",
            CodeFamily::Kgram { .. } => "kgram",
            CodeFamily::Rle { .. } => "rle",
            CodeFamily::Random { .. } => "random",
        }
    }
}

#[derive(Clone, Debug)]
pub struct PostingCode {
    codewords: Vec<BitString>,
    tree: Option<CodeTree>,
    prefix_free: bool,
    complete: bool,
    max_len: usize,
    family: CodeFamily,
}

impl PostingCode {
    /// Validates an explicit codeword list.
    pub fn from_codewords(words: Vec<BitString>) -> Result<Self> {
        Self::with_family(words, CodeFamily::Explicit)
    }

    fn with_family(words: Vec<BitString>, family: CodeFamily) -> Result<Self> {
        if words.is_empty() {
            return Err(Error::InvalidCode("no codewords".into()));
        }
        let mut seen = HashSet::with_capacity(words.len());
        for w in &words {
            if w.is_empty() {
                return Err(Error::InvalidCode("empty codeword".into()));
            }
            if !seen.insert(w) {
                return Err(Error::InvalidCode(format!("duplicate codeword {w}")));
            }
        }
        if words.len() > NONE as usize {
            return Err(Error::InvalidCode("too many codewords".into()));
        }
        let tree = CodeTree::build(&words);
        let prefix_free = tree.is_some();
        let complete = prefix_free && KraftSum::of_lengths(words.iter().map(|w| w.len())).is_one();
        let max_len = words.iter().map(|w| w.len()).max().unwrap_or(0);
        Ok(Self {
            codewords: words,
            tree,
            prefix_free,
            complete,
            max_len,
            family,
        })
    }

    /// Reads one ASCII codeword per line; blank lines are ignored.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let words = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(str::parse)
            .collect::<Result<Vec<BitString>>>()?;
        Self::from_codewords(words)
    }

    pub fn codewords(&self) -> &[BitString] {
        &self.codewords
    }

    pub fn codeword(&self, idx: CodewordIndex) -> &BitString {
        &self.codewords[idx]
    }

    pub fn size(&self) -> usize {
        self.codewords.len()
    }

    pub fn tree(&self) -> Option<&CodeTree> {
        self.tree.as_ref()
    }

    /// The tree of a complete code, or [`Error::IncompleteCode`].
    pub fn complete_tree(&self) -> Result<&CodeTree> {
        match &self.tree {
            Some(t) if self.complete => Ok(t),
            _ => Err(Error::IncompleteCode),
        }
    }

    pub fn is_prefix_free(&self) -> bool {
        self.prefix_free
    }

    pub fn is_complete(&self) -> bool {
        self.complete
    }

    pub fn max_len(&self) -> usize {
        self.max_len
    }

    pub fn family(&self) -> CodeFamily {
        self.family
    }

    pub fn kraft_sum(&self) -> KraftSum {
        KraftSum::of_lengths(self.codewords.iter().map(|w| w.len()))
    }

    pub fn index_of(&self, word: &BitString) -> Option<CodewordIndex> {
        match &self.tree {
            Some(tree) => {
                let mut node = CodeTree::ROOT;
                for &b in word.bits() {
                    node = tree.child(node, b)?;
                }
                tree.leaf(node)
            }
            None => self.codewords.iter().position(|c| c == word),
        }
    }

    /// Same codeword set, ignoring order.
    pub fn same_codewords(&self, other: &PostingCode) -> bool {
        let mut a: Vec<_> = self.codewords.iter().collect();
        let mut b: Vec<_> = other.codewords.iter().collect();
        a.sort();
        b.sort();
        a == b
    }

    /// All codewords having `tail` as a prefix: the leaves below the node
    /// reached by walking `tail`.
    pub fn tail_expansion(&self, tail: &BitString) -> Result<Vec<CodewordIndex>> {
        let tree = self.complete_tree()?;
        if tail.is_empty() {
            return Err(invalid("tail must be nonempty"));
        }
        let mut node = CodeTree::ROOT;
        for &b in tail.bits() {
            if tree.leaf(node).is_some() {
                return Err(Error::TailNotProper(tail.to_string()));
            }
            node = tree
                .child(node, b)
                .ok_or_else(|| Error::TailNotProper(tail.to_string()))?;
        }
        if tree.leaf(node).is_some() {
            return Err(Error::TailNotProper(tail.to_string()));
        }
        Ok(tree.leaves_under(node))
    }
}

/// All `2^k` strings of length `k`, in lexicographic order, so that the
/// index of a k-gram equals its binary value.
pub fn kgram_code(k: usize) -> Result<PostingCode> {
    if !(1..=MAX_KGRAM_K).contains(&k) {
        return Err(invalid(format!("k must be in 1..={MAX_KGRAM_K}, got {k}")));
    }
    let words = (0..1u64 << k)
        .map(|v| BitString::from_value(v, k))
        .collect();
    PostingCode::with_family(words, CodeFamily::Kgram { k })
}

/// The run-length chain `1, 01, 001, …, 0^(M-2)1, 0^(M-1)`.
pub fn rle_code(m: usize) -> Result<PostingCode> {
    if m < 2 {
        return Err(invalid(format!("rle code needs M >= 2, got {m}")));
    }
    let mut words = Vec::with_capacity(m);
    let mut word = BitString::from_bits_unchecked(vec![1]);
    for _ in 1..m {
        words.push(word.clone());
        word = BitString::zeros(1).concat(&word);
    }
    words.push(BitString::zeros(m - 1));
    PostingCode::with_family(words, CodeFamily::Rle { m })
}

/// Grows a complete code from the tree `{0, 1}` by splitting uniformly
/// chosen leaves of depth below `max_len` until `m` leaves exist.
///
/// Codewords are kept in generation order: a split leaf is replaced in
/// place by its `0` child and its `1` child is appended.
pub fn random_complete_code(m: usize, max_len: usize, seed: u64) -> Result<PostingCode> {
    if m < 2 {
        return Err(invalid(format!("random code needs M >= 2, got {m}")));
    }
    if max_len == 0 {
        return Err(invalid("max_len must be positive"));
    }
    if max_len < 64 && m as u64 > 1u64 << max_len {
        return Err(invalid(format!(
            "M = {m} leaves cannot fit in a tree of depth {max_len}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut leaves = vec![
        BitString::from_bits_unchecked(vec![0]),
        BitString::from_bits_unchecked(vec![1]),
    ];
    let mut splittable = Vec::with_capacity(m);
    while leaves.len() < m {
        splittable.clear();
        splittable.extend((0..leaves.len()).filter(|&i| leaves[i].len() < max_len));
        let pick = splittable[rng.random_range(0..splittable.len())];
        let mut one = leaves[pick].clone();
        one.push(true);
        leaves[pick].push(false);
        leaves.push(one);
    }
    PostingCode::with_family(leaves, CodeFamily::Random { max_len, seed })
}

/// Textual code selector: `kgram:<k>`, `rle:<M>`, `random:<M>,<max_len>` or
/// `file:<path>`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum CodeSpec {
    Kgram(usize),
    Rle(usize),
    Random { m: usize, max_len: usize },
    File(PathBuf),
}

impl CodeSpec {
    pub fn is_random(&self) -> bool {
        matches!(self, CodeSpec::Random { .. })
    }

    /// Materializes the code. Random codes require a seed.
    pub fn build(&self, seed: Option<u64>) -> Result<PostingCode> {
        match self {
            CodeSpec::Kgram(k) => kgram_code(*k),
            CodeSpec::Rle(m) => rle_code(*m),
            CodeSpec::Random { m, max_len } => {
                let seed = seed.ok_or_else(|| invalid("random codes require a seed"))?;
                random_complete_code(*m, *max_len, seed)
            }
            CodeSpec::File(path) => PostingCode::load(path),
        }
    }
}

impl FromStr for CodeSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, arg) = s
            .split_once(':')
            .ok_or_else(|| invalid(format!("code spec {s:?} lacks a ':'")))?;
        let num = |v: &str| {
            v.trim()
                .parse::<usize>()
                .map_err(|_| invalid(format!("bad number {v:?} in code spec {s:?}")))
        };
        match kind {
            "kgram" => Ok(CodeSpec::Kgram(num(arg)?)),
            "rle" => Ok(CodeSpec::Rle(num(arg)?)),
            "random" => {
                let (m, max_len) = arg.split_once(',').ok_or_else(|| {
                    invalid(format!("random code spec {s:?} needs <M>,<max_len>"))
                })?;
                Ok(CodeSpec::Random {
                    m: num(m)?,
                    max_len: num(max_len)?,
                })
            }
            "file" if !arg.is_empty() => Ok(CodeSpec::File(PathBuf::from(arg))),
            _ => Err(invalid(format!("unknown code spec {s:?}"))),
        }
    }
}

impl TryFrom<String> for CodeSpec {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<CodeSpec> for String {
    fn from(c: CodeSpec) -> String {
        c.to_string()
    }
}

impl fmt::Display for CodeSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CodeSpec::Kgram(k) => write!(f, "kgram:{k}"),
            CodeSpec::Rle(m) => write!(f, "rle:{m}"),
            CodeSpec::Random { m, max_len } => write!(f, "random:{m},{max_len}"),
            CodeSpec::File(p) => write!(f, "file:{}", p.display()),
        }
    }
}
