//! Non-crossing partitions of `{1..n}`: enumeration, refinement order,
//! Möbius function to the top element, Kreweras complement.
//!
//! Partitions are kept in canonical form (ascending within blocks, blocks
//! ordered by least element). Enumeration packs each partition into a
//! restricted-growth code of 4 bits per position, which keeps `NC(14)`
//! (about 2.7 million partitions) at a few tens of megabytes.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

pub const CATALAN_MAX_N: u32 = 30;
pub const ENUMERATE_MAX_N: usize = 14;
/// The lattice recursion is quadratic in `c_n`; beyond this size use
/// [`moebius_to_top_kreweras`].
pub const MOEBIUS_RECURSION_MAX_N: usize = 9;

/// `(2n)! / (n! (n+1)!)`, exact for `n <= 30`.
pub fn catalan(n: u32) -> Result<u64> {
    if n > CATALAN_MAX_N {
        return Err(Error::Range(format!("catalan({n}) exceeds the supported range n <= {CATALAN_MAX_N}")));
    }
    // c_{k+1} = c_k * 2(2k+1) / (k+2), exact at every step
    let mut c: u128 = 1;
    for k in 0..n as u128 {
        c = c * 2 * (2 * k + 1) / (k + 2);
    }
    Ok(c as u64)
}

#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Partition {
    n: usize,
    blocks: Vec<Vec<usize>>,
}

impl Partition {
    /// Validates and canonicalizes a partition of `{1..n}`.
    pub fn new(n: usize, blocks: Vec<Vec<usize>>) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidPartition("ground set must be nonempty".into()));
        }
        let mut seen = vec![false; n + 1];
        let mut blocks = blocks;
        for b in &mut blocks {
            if b.is_empty() {
                return Err(Error::InvalidPartition("empty block".into()));
            }
            b.sort_unstable();
            for &x in b.iter() {
                if x == 0 || x > n {
                    return Err(Error::InvalidPartition(format!("element {x} outside 1..{n}")));
                }
                if seen[x] {
                    return Err(Error::InvalidPartition(format!("element {x} appears twice")));
                }
                seen[x] = true;
            }
        }
        if let Some(missing) = (1..=n).find(|&x| !seen[x]) {
            return Err(Error::InvalidPartition(format!("element {missing} not covered")));
        }
        blocks.sort_unstable_by_key(|b| b[0]);
        Ok(Self { n, blocks })
    }

    pub fn singletons(n: usize) -> Self {
        Self { n, blocks: (1..=n).map(|i| vec![i]).collect() }
    }

    /// The one-block partition `1_n`.
    pub fn one_block(n: usize) -> Self {
        Self { n, blocks: vec![(1..=n).collect()] }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    pub fn block_count(&self) -> usize {
        self.blocks.len()
    }

    /// Block index (0-based, canonical order) of every element `1..=n`.
    pub fn labels(&self) -> Vec<usize> {
        let mut lab = vec![0; self.n];
        for (bi, b) in self.blocks.iter().enumerate() {
            for &x in b {
                lab[x - 1] = bi;
            }
        }
        lab
    }

    fn from_labels(labels: &[usize]) -> Self {
        let n = labels.len();
        let mut blocks: Vec<Vec<usize>> = Vec::new();
        let mut map: HashMap<usize, usize> = HashMap::new();
        for (i, &l) in labels.iter().enumerate() {
            let idx = *map.entry(l).or_insert_with(|| {
                blocks.push(Vec::new());
                blocks.len() - 1
            });
            blocks[idx].push(i + 1);
        }
        Self { n, blocks }
    }

    /// False iff some `i < j < k < l` has `i, k` in one block and `j, l` in another.
    pub fn is_noncrossing(&self) -> bool {
        let lab = self.labels();
        // a crossing exists iff some j strictly between consecutive elements
        // i < k of one block belongs to a block reaching past k
        let last: Vec<usize> = self.blocks.iter().map(|b| *b.last().unwrap()).collect();
        for b in &self.blocks {
            for w in b.windows(2) {
                let (i, k) = (w[0], w[1]);
                for j in i + 1..k {
                    if last[lab[j - 1]] > k {
                        return false;
                    }
                }
            }
        }
        true
    }

    fn require_noncrossing(&self) -> Result<()> {
        if self.is_noncrossing() {
            Ok(())
        } else {
            Err(Error::Crossing(self.to_string()))
        }
    }

    /// Refinement order: every block of `self` lies inside a block of `other`.
    pub fn leq(&self, other: &Partition) -> Result<bool> {
        if self.n != other.n {
            return Err(Error::SizeMismatch(self.n, other.n));
        }
        let lab = other.labels();
        Ok(self.blocks.iter().all(|b| b.iter().all(|&x| lab[x - 1] == lab[b[0] - 1])))
    }

    /// Cyclic relabeling `i -> i + 1 (mod n)`.
    pub fn rotate(&self) -> Partition {
        let n = self.n;
        let blocks = self.blocks.iter().map(|b| b.iter().map(|&x| x % n + 1).collect()).collect();
        Partition::new(n, blocks).expect("rotation preserves validity")
    }

    fn as_permutation(&self) -> Vec<usize> {
        // each block becomes the increasing cycle (b_1 b_2 ... b_k)
        let mut perm = vec![0; self.n];
        for b in &self.blocks {
            for (i, &x) in b.iter().enumerate() {
                perm[x - 1] = b[(i + 1) % b.len()] - 1;
            }
        }
        perm
    }

    fn from_permutation(perm: &[usize]) -> Partition {
        let n = perm.len();
        let mut label = vec![usize::MAX; n];
        let mut next = 0;
        for start in 0..n {
            if label[start] != usize::MAX {
                continue;
            }
            let mut x = start;
            while label[x] == usize::MAX {
                label[x] = next;
                x = perm[x];
            }
            next += 1;
        }
        Partition::from_labels(&label)
    }

    fn code(&self) -> u64 {
        pack(&self.labels())
    }
}

/// Kreweras complement: the coarsest partition of the interleaved points
/// `1' .. n'` compatible with `p`, relabeled onto `1..n`. As permutations,
/// `K(p) = p^{-1} γ` with `γ = (1 2 ... n)`.
pub fn kreweras(p: &Partition) -> Result<Partition> {
    p.require_noncrossing()?;
    let pi = p.as_permutation();
    let n = p.n;
    let mut inv = vec![0; n];
    for (i, &j) in pi.iter().enumerate() {
        inv[j] = i;
    }
    let k: Vec<usize> = (0..n).map(|i| inv[(i + 1) % n]).collect();
    Ok(Partition::from_permutation(&k))
}

/// Inverse of [`kreweras`]: `K^{-1}(s) = γ s^{-1}`. Applying [`kreweras`]
/// twice instead yields the rotation of `p`.
pub fn kreweras_inverse(s: &Partition) -> Result<Partition> {
    s.require_noncrossing()?;
    let sigma = s.as_permutation();
    let n = s.n;
    let mut inv = vec![0; n];
    for (i, &j) in sigma.iter().enumerate() {
        inv[j] = i;
    }
    let k: Vec<usize> = (0..n).map(|i| (inv[i] + 1) % n).collect();
    Ok(Partition::from_permutation(&k))
}

impl fmt::Display for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, b) in self.blocks.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{{")?;
            for (j, x) in b.iter().enumerate() {
                if j > 0 {
                    write!(f, ",")?;
                }
                write!(f, "{x}")?;
            }
            write!(f, "}}")?;
        }
        write!(f, "}}")
    }
}

impl fmt::Debug for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl FromStr for Partition {
    type Err = Error;

    /// Parses `{{1,4,5},{2},{3},{6,8},{7}}`; whitespace is ignored and `n`
    /// is the largest element.
    fn from_str(s: &str) -> Result<Self> {
        let compact: String = s.chars().filter(|c| !c.is_whitespace()).collect();
        let inner = compact
            .strip_prefix('{')
            .and_then(|r| r.strip_suffix('}'))
            .ok_or_else(|| Error::Parse(format!("expected outer braces in {s:?}")))?;
        let mut blocks = Vec::new();
        let mut rest = inner;
        while !rest.is_empty() {
            let body = rest
                .strip_prefix('{')
                .ok_or_else(|| Error::Parse(format!("expected '{{' in {s:?}")))?;
            let close = body.find('}').ok_or_else(|| Error::Parse(format!("unclosed block in {s:?}")))?;
            let block = body[..close]
                .split(',')
                .map(|t| t.parse::<usize>().map_err(|e| Error::Parse(format!("{t:?}: {e}"))))
                .collect::<Result<Vec<_>>>()?;
            blocks.push(block);
            rest = &body[close + 1..];
            if let Some(r) = rest.strip_prefix(',') {
                rest = r;
            } else if !rest.is_empty() {
                return Err(Error::Parse(format!("expected ',' between blocks in {s:?}")));
            }
        }
        let n = blocks.iter().flatten().copied().max().unwrap_or(0);
        Partition::new(n, blocks)
    }
}

fn pack(labels: &[usize]) -> u64 {
    labels.iter().enumerate().fold(0u64, |acc, (i, &l)| acc | ((l as u64) << (4 * i)))
}

fn unpack(code: u64, n: usize) -> Vec<usize> {
    (0..n).map(|i| ((code >> (4 * i)) & 0xF) as usize).collect()
}

/// All of `NC(n)` in lexicographic order of canonical block form.
pub struct NCIndex {
    n: usize,
    codes: Vec<u64>,
    lookup: Vec<(u64, u32)>,
}

impl NCIndex {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    pub fn get(&self, i: usize) -> Partition {
        Partition::from_labels(&unpack(self.codes[i], self.n))
    }

    /// Block labels of entry `i`, without materializing block vectors.
    pub fn labels(&self, i: usize) -> Vec<usize> {
        unpack(self.codes[i], self.n)
    }

    pub fn index_of(&self, p: &Partition) -> Option<usize> {
        if p.n != self.n {
            return None;
        }
        let code = p.code();
        self.lookup
            .binary_search_by_key(&code, |&(c, _)| c)
            .ok()
            .map(|pos| self.lookup[pos].1 as usize)
    }

    pub fn iter(&self) -> impl Iterator<Item = Partition> + '_ {
        (0..self.len()).map(|i| self.get(i))
    }
}

/// Relative restricted-growth codes of `NC(len)` for a contiguous run of
/// positions, paired with block counts.
type Family = Vec<(u64, u8)>;

/// Enumerates `NC(n)` by the block containing 1: once that block is fixed,
/// the gaps between its elements and the tail after it are independent
/// smaller instances.
pub fn enumerate_nc(n: usize) -> Result<NCIndex> {
    if n == 0 || n > ENUMERATE_MAX_N {
        return Err(Error::Range(format!("enumerate_nc supports 1 <= n <= {ENUMERATE_MAX_N}, got {n}")));
    }
    let mut memo: Vec<Family> = vec![vec![(0, 0)]];
    for len in 1..=n {
        let fam = build_family(len, &memo);
        memo.push(fam);
    }
    let codes: Vec<u64> = memo[n].iter().map(|&(c, _)| c).collect();
    let mut lookup: Vec<(u64, u32)> = codes.iter().enumerate().map(|(i, &c)| (c, i as u32)).collect();
    lookup.sort_unstable();
    Ok(NCIndex { n, codes, lookup })
}

fn build_family(len: usize, memo: &[Family]) -> Family {
    let mut out = Vec::new();
    let mut first = vec![0usize];
    first_blocks(len, &mut first, memo, &mut out);
    out
}

// DFS over the block containing position 0, in lexicographic order of the
// block (a block precedes its own extensions).
fn first_blocks(len: usize, block: &mut Vec<usize>, memo: &[Family], out: &mut Family) {
    emit_with_first_block(len, block, memo, out);
    let last = *block.last().unwrap();
    for next in last + 1..len {
        block.push(next);
        first_blocks(len, block, memo, out);
        block.pop();
    }
}

fn emit_with_first_block(len: usize, block: &[usize], memo: &[Family], out: &mut Family) {
    // gaps: (start, length) of the runs strictly between block elements, then the tail
    let mut gaps = Vec::new();
    for w in block.windows(2) {
        if w[1] > w[0] + 1 {
            gaps.push((w[0] + 1, w[1] - w[0] - 1));
        }
    }
    let last = *block.last().unwrap();
    if last + 1 < len {
        gaps.push((last + 1, len - last - 1));
    }
    // label 0 is the first block; its bits are zero already
    combine(&gaps, 0, 0, 1, memo, out);
}

fn combine(gaps: &[(usize, usize)], gi: usize, code: u64, blocks: u8, memo: &[Family], out: &mut Family) {
    if gi == gaps.len() {
        out.push((code, blocks));
        return;
    }
    let (start, glen) = gaps[gi];
    for &(sub, sub_blocks) in &memo[glen] {
        let mut c = code;
        for i in 0..glen {
            let l = (sub >> (4 * i)) & 0xF;
            c |= (l + blocks as u64) << (4 * (start + i));
        }
        combine(gaps, gi + 1, c, blocks + sub_blocks, memo, out);
    }
}

/// `μ(p, 1_n)` in `NC(n)` by the defining recursion
/// `Σ_{p <= σ <= 1_n} μ(σ, 1_n) = [p = 1_n]`.
pub fn moebius_to_top(p: &Partition) -> Result<i64> {
    p.require_noncrossing()?;
    if p.n > MOEBIUS_RECURSION_MAX_N {
        return Err(Error::Range(format!(
            "lattice recursion supports n <= {MOEBIUS_RECURSION_MAX_N}, got {}",
            p.n
        )));
    }
    let table = MoebiusTable::by_recursion(p.n)?;
    Ok(table.values[table.index.index_of(p).expect("non-crossing partitions are enumerated")])
}

/// `μ(p, 1_n)` as `Π_{V ∈ K(p)} (-1)^{|V|-1} c_{|V|-1}`, using the
/// isomorphism between `[p, 1_n]` and a product of full lattices over
/// the blocks of the Kreweras complement. Agrees with [`moebius_to_top`]
/// on every `NC(n)`, `n <= 7` (checked in tests).
pub fn moebius_to_top_kreweras(p: &Partition) -> Result<i64> {
    let k = kreweras(p)?;
    Ok(k.blocks
        .iter()
        .map(|b| {
            let s = b.len() as u32 - 1;
            let c = catalan(s).expect("block sizes are small") as i64;
            if s % 2 == 0 { c } else { -c }
        })
        .product())
}

/// `μ(π, 1_n)` for every `π ∈ NC(n)`, aligned with an [`NCIndex`].
pub struct MoebiusTable {
    pub index: NCIndex,
    pub values: Vec<i64>,
}

impl MoebiusTable {
    pub fn by_recursion(n: usize) -> Result<Self> {
        if n > MOEBIUS_RECURSION_MAX_N {
            return Err(Error::Range(format!("lattice recursion supports n <= {MOEBIUS_RECURSION_MAX_N}")));
        }
        let index = enumerate_nc(n)?;
        let labels: Vec<Vec<usize>> = (0..index.len()).map(|i| index.labels(i)).collect();
        let nblocks: Vec<usize> = labels.iter().map(|l| l.iter().max().unwrap() + 1).collect();
        // coarser partitions first
        let mut order: Vec<usize> = (0..index.len()).collect();
        order.sort_by_key(|&i| nblocks[i]);
        let leq = |a: &[usize], b: &[usize]| {
            // a refines b iff equal labels in a imply equal labels in b
            let mut rep = vec![usize::MAX; a.len()];
            a.iter().zip(b).all(|(&la, &lb)| {
                if rep[la] == usize::MAX {
                    rep[la] = lb;
                    true
                } else {
                    rep[la] == lb
                }
            })
        };
        let mut values = vec![0i64; index.len()];
        for (pos, &i) in order.iter().enumerate() {
            if nblocks[i] == 1 {
                values[i] = 1;
                continue;
            }
            let mut sum = 0i64;
            for &j in &order[..pos] {
                if nblocks[j] < nblocks[i] && leq(&labels[i], &labels[j]) {
                    sum += values[j];
                }
            }
            values[i] = -sum;
        }
        Ok(Self { index, values })
    }

    pub fn by_kreweras(n: usize) -> Result<Self> {
        let index = enumerate_nc(n)?;
        let values = index
            .iter()
            .map(|p| moebius_to_top_kreweras(&p))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { index, values })
    }
}
