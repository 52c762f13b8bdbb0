//! Posting tables: complete storage of every codeword start position, and
//! retrieval by offset-joining posting lists.

use std::io::{self, Write};

use rayon::prelude::*;

use crate::bits::BitString;
use crate::code::{CodewordIndex, PostingCode};
use crate::error::{Error, Result};
use crate::query::Parsing;
use crate::source::SourceSequence;

/// How windows behave at the end of the source.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Boundary {
    /// Windows wrap around to the start; every position stores exactly one
    /// codeword.
    #[default]
    Circular,
    /// Positions whose codeword would run past the end are dropped.
    Truncated,
}

/// Anything that can report the size of each codeword's posting list.
pub trait ListSizes {
    /// Size of the posting list of codeword `c`. Fractional for expected
    /// (analytic) tables.
    fn list_size_of(&self, c: CodewordIndex) -> f64;

    /// `log2` of the list size; `+inf` marks an empty list.
    fn log2_list_size(&self, c: CodewordIndex) -> f64 {
        let s = self.list_size_of(c);
        if s > 0.0 {
            s.log2()
        } else {
            f64::INFINITY
        }
    }
}

impl ListSizes for [f64] {
    fn list_size_of(&self, c: CodewordIndex) -> f64 {
        self[c]
    }
}

const CHUNK: usize = 1 << 15;
const DROPPED: u32 = u32::MAX;

#[derive(Clone, Debug)]
pub struct PostingTable<'c> {
    code: &'c PostingCode,
    lists: Vec<Vec<u32>>,
    n: usize,
    boundary: Boundary,
}

/// Circular posting table over `source`.
pub fn build_posting_table<'c>(
    code: &'c PostingCode,
    source: &SourceSequence,
) -> Result<PostingTable<'c>> {
    PostingTable::build(code, source, Boundary::Circular)
}

impl<'c> PostingTable<'c> {
    /// Walks the code tree from every source position and files the
    /// position under the codeword it reaches. Position identification runs
    /// on the rayon pool; list order is the same as a sequential scan.
    pub fn build(
        code: &'c PostingCode,
        source: &SourceSequence,
        boundary: Boundary,
    ) -> Result<Self> {
        let tree = code.complete_tree()?;
        let x = source.bits().bits();
        let n = x.len();
        let mut starts = vec![DROPPED; n];
        starts
            .par_chunks_mut(CHUNK)
            .enumerate()
            .for_each(|(chunk, out)| {
                let base = chunk * CHUNK;
                for (off, slot) in out.iter_mut().enumerate() {
                    let w = base + off;
                    let hit = match boundary {
                        Boundary::Circular => tree.walk(|d| {
                            let i = w + d;
                            Some(x[if i < n { i } else { i % n }])
                        }),
                        Boundary::Truncated => tree.walk(|d| x.get(w + d).copied()),
                    };
                    if let Some(c) = hit {
                        *slot = c as u32;
                    }
                }
            });

        let mut counts = vec![0usize; code.size()];
        for &c in &starts {
            if c != DROPPED {
                counts[c as usize] += 1;
            }
        }
        let mut lists: Vec<Vec<u32>> = counts.iter().map(|&k| Vec::with_capacity(k)).collect();
        for (w, &c) in starts.iter().enumerate() {
            if c != DROPPED {
                lists[c as usize].push(w as u32);
            }
        }
        Ok(Self {
            code,
            lists,
            n,
            boundary,
        })
    }

    pub fn code(&self) -> &'c PostingCode {
        self.code
    }

    pub fn source_len(&self) -> usize {
        self.n
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    /// Sorted start positions of codeword `c`.
    pub fn list(&self, c: CodewordIndex) -> &[u32] {
        &self.lists[c]
    }

    pub fn lists(&self) -> &[Vec<u32>] {
        &self.lists
    }

    pub fn list_size(&self, word: &BitString) -> Result<usize> {
        self.code
            .index_of(word)
            .map(|c| self.lists[c].len())
            .ok_or_else(|| Error::UnknownCodeword(word.to_string()))
    }

    pub fn total_entries(&self) -> usize {
        self.lists.iter().map(Vec::len).sum()
    }

    /// `codeword<TAB>p1,p2,...` per codeword, in code order.
    pub fn write_dump(&self, mut out: impl Write) -> io::Result<()> {
        for (word, list) in self.code.codewords().iter().zip(&self.lists) {
            write!(out, "{word}\t")?;
            for (i, p) in list.iter().enumerate() {
                if i > 0 {
                    out.write_all(b",")?;
                }
                write!(out, "{p}")?;
            }
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

impl ListSizes for PostingTable<'_> {
    fn list_size_of(&self, c: CodewordIndex) -> f64 {
        self.lists[c].len() as f64
    }
}

/// All positions `m` at which the parsed query occurs, reading the source
/// circularly. Each body segment `(c, off)` requires `m + off ∈ T(c)`; the
/// tail requires `m + n_K` to start one of the tail codewords.
pub fn retrieve_matches(table: &PostingTable<'_>, parsing: &Parsing) -> Vec<u32> {
    let n = table.n as u64;
    let shifted = |pos: u32, off: usize| ((pos as u64 + n - (off as u64 % n)) % n) as u32;
    let ahead = |m: u32, off: usize| ((m as u64 + off as u64) % n) as u32;

    let mut body: Vec<(&[u32], usize)> = parsing
        .body
        .iter()
        .map(|s| (table.list(s.codeword), s.offset))
        .collect();
    body.sort_by_key(|(list, _)| list.len());

    let mut candidates: Vec<u32> = match body.first() {
        Some(&(list, off)) => list.iter().map(|&p| shifted(p, off)).collect(),
        None => match &parsing.tail {
            Some(tail) => tail
                .codewords
                .iter()
                .flat_map(|&c| table.list(c).iter().map(|&p| shifted(p, tail.offset)))
                .collect(),
            None => return Vec::new(),
        },
    };
    candidates.sort_unstable();

    for &(list, off) in body.iter().skip(1) {
        candidates.retain(|&m| list.binary_search(&ahead(m, off)).is_ok());
        if candidates.is_empty() {
            return candidates;
        }
    }
    if let (Some(tail), false) = (&parsing.tail, body.is_empty()) {
        let lists: Vec<&[u32]> = tail.codewords.iter().map(|&c| table.list(c)).collect();
        candidates.retain(|&m| {
            let at = ahead(m, tail.offset);
            lists.iter().any(|l| l.binary_search(&at).is_ok())
        });
    }
    candidates
}

/// Brute-force circular occurrence scan; the reference for
/// [`retrieve_matches`].
pub fn naive_scan(source: &SourceSequence, query: &BitString) -> Result<Vec<u32>> {
    let x = source.bits().bits();
    let n = x.len();
    if query.len() > n {
        return Err(Error::QueryTooLong {
            query: query.len(),
            source_len: n,
        });
    }
    let q = query.bits();
    Ok((0..n)
        .filter(|&m| q.iter().enumerate().all(|(j, &b)| x[(m + j) % n] == b))
        .map(|m| m as u32)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::code::{kgram_code, random_complete_code, rle_code};
    use crate::query::parse_query;
    use crate::source::{sample_source, SourceSpec};

    fn bs(s: &str) -> BitString {
        s.parse().unwrap()
    }

    fn src(s: &str) -> SourceSequence {
        SourceSequence::from_bits(bs(s)).unwrap()
    }

    fn explicit(words: &[&str]) -> PostingCode {
        PostingCode::from_codewords(words.iter().map(|w| bs(w)).collect()).unwrap()
    }

    #[test]
    fn single_symbol_code() {
        let code = explicit(&["0", "1"]);
        let t = build_posting_table(&code, &src("0110")).unwrap();
        assert_eq!(t.list(0), [0, 3]);
        assert_eq!(t.list(1), [1, 2]);
        assert_eq!(t.list_size(&bs("0")).unwrap(), 2);
        assert!(matches!(
            t.list_size(&bs("00")),
            Err(Error::UnknownCodeword(_))
        ));
    }

    #[test]
    fn circular_kgrams() {
        let code = kgram_code(2).unwrap();
        let t = build_posting_table(&code, &src("0110")).unwrap();
        let get = |w: &str| t.list(code.index_of(&bs(w)).unwrap()).to_vec();
        assert_eq!(get("01"), [0]);
        assert_eq!(get("11"), [1]);
        assert_eq!(get("10"), [2]);
        assert_eq!(get("00"), [3]);
        assert_eq!(t.total_entries(), 4);
    }

    #[test]
    fn absent_codeword_has_empty_list() {
        let code = kgram_code(2).unwrap();
        let t = build_posting_table(&code, &src("0000")).unwrap();
        assert_eq!(t.list_size(&bs("11")).unwrap(), 0);
        assert_eq!(t.list_size(&bs("00")).unwrap(), 4);
    }

    #[test]
    fn truncated_boundary_drops_tail_positions() {
        let code = kgram_code(2).unwrap();
        let t = PostingTable::build(&code, &src("0110"), Boundary::Truncated).unwrap();
        assert_eq!(t.total_entries(), 3);
        assert!(t.list(0).is_empty());
    }

    #[test]
    fn incomplete_code_rejected() {
        let code = explicit(&["0", "11"]);
        assert!(matches!(
            build_posting_table(&code, &src("0110")),
            Err(Error::IncompleteCode)
        ));
    }

    #[test]
    fn dump_format() {
        let code = explicit(&["0", "10", "11"]);
        let t = build_posting_table(&code, &src("00101")).unwrap();
        let mut out = Vec::new();
        t.write_dump(&mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "0\t0,1,3\n10\t2,4\n11\t\n");
    }

    #[test]
    fn scan_examples() {
        assert_eq!(naive_scan(&src("0110"), &bs("11")).unwrap(), [1]);
        assert_eq!(naive_scan(&src("0110"), &bs("0")).unwrap(), [0, 3]);
        assert_eq!(naive_scan(&src("0000"), &bs("00")).unwrap(), [0, 1, 2, 3]);
        assert!(naive_scan(&src("01"), &bs("010")).is_err());
    }

    #[test]
    fn retrieval_examples() {
        let code = explicit(&["0", "1"]);
        let source = src("00101");
        let t = build_posting_table(&code, &source).unwrap();
        let q = bs("01");
        assert_eq!(
            retrieve_matches(&t, &parse_query(&code, &q).unwrap()),
            [1, 3]
        );
        let whole = source.bits().clone();
        assert_eq!(
            retrieve_matches(&t, &parse_query(&code, &whole).unwrap()),
            [0]
        );
    }

    #[test]
    fn retrieval_matches_scan_on_random_instances() {
        let codes = [
            kgram_code(3).unwrap(),
            rle_code(5).unwrap(),
            random_complete_code(20, 7, 5).unwrap(),
        ];
        for (i, code) in codes.iter().enumerate() {
            for trial in 0..20u64 {
                let n = 50 + 97 * trial;
                let source =
                    sample_source(&SourceSpec::new(0.35, n, trial * 31 + i as u64).unwrap())
                        .unwrap();
                let t = build_posting_table(code, &source).unwrap();
                for len in 1..=12usize {
                    let start = (trial as usize * 13 + len * 7) % source.len();
                    let q = source.bits().circular_window(start, len).unwrap();
                    let parsing = parse_query(code, &q).unwrap();
                    let got = retrieve_matches(&t, &parsing);
                    assert_eq!(got, naive_scan(&source, &q).unwrap());
                    assert!(got.contains(&(start as u32)));
                }
            }
        }
    }

    #[test]
    fn partition_and_entry_count() {
        let code = random_complete_code(40, 9, 3).unwrap();
        let source = sample_source(&SourceSpec::new(0.6, 3333, 9).unwrap()).unwrap();
        let t = build_posting_table(&code, &source).unwrap();
        assert_eq!(t.total_entries(), 3333);
        let mut all: Vec<u32> = t.lists().iter().flatten().copied().collect();
        all.sort_unstable();
        assert!(all.iter().copied().eq(0..3333u32));
        for (c, list) in t.lists().iter().enumerate() {
            let word = code.codeword(c);
            assert!(list.windows(2).all(|w| w[0] < w[1]));
            for &w in list {
                assert_eq!(
                    &source
                        .bits()
                        .circular_window(w as usize, word.len())
                        .unwrap(),
                    word
                );
            }
        }
    }

    #[test]
    fn parallel_build_matches_sequential_layout() {
        let code = kgram_code(4).unwrap();
        let source = sample_source(&SourceSpec::new(0.5, 200_000, 1).unwrap()).unwrap();
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap();
        let one = pool.install(|| build_posting_table(&code, &source).unwrap());
        let many = build_posting_table(&code, &source).unwrap();
        assert_eq!(one.lists(), many.lists());
    }
}
