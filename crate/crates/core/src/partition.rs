//! Partitions of `[n]` with at most `k` blocks.
//!
//! A [`Partition`] is stored in canonical form: block labels assigned in order
//! of least element (a restricted growth string), so structural equality of
//! the stored labels is equality of partitions.

use std::fmt;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Serialize, Serializer};

use crate::coloring::{check_k, Coloring, Permutation, Prefix};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Partition {
    k: usize,
    /// `labels[j]` is the 0-based index of the block containing `j + 1`.
    labels: Vec<u8>,
}

impl Partition {
    /// Canonicalizes an arbitrary block labeling of `[n]`.
    pub fn from_labels(k: usize, labels: &[usize]) -> Result<Self> {
        check_k(k)?;
        let mut map: Vec<(usize, u8)> = Vec::new();
        let mut out = Vec::with_capacity(labels.len());
        for &l in labels {
            let c = match map.iter().find(|(v, _)| *v == l) {
                Some(&(_, c)) => c,
                None => {
                    if map.len() == k {
                        return Err(Error::TooManyBlocks { blocks: k + 1, k });
                    }
                    let c = map.len() as u8;
                    map.push((l, c));
                    c
                }
            };
            out.push(c);
        }
        Ok(Self { k, labels: out })
    }

    /// Builds a partition from explicit 1-based blocks covering `{1..n}`.
    pub fn from_blocks(k: usize, n: usize, blocks: &[Vec<usize>]) -> Result<Self> {
        let mut labels = vec![usize::MAX; n];
        for (b, block) in blocks.iter().enumerate() {
            if block.is_empty() {
                return Err(Error::InvalidPartition("empty block".into()));
            }
            for &e in block {
                if e == 0 || e > n {
                    return Err(Error::InvalidPartition(format!("element {e} outside 1..={n}")));
                }
                if labels[e - 1] != usize::MAX {
                    return Err(Error::InvalidPartition(format!("element {e} appears twice")));
                }
                labels[e - 1] = b;
            }
        }
        if let Some(missing) = labels.iter().position(|&l| l == usize::MAX) {
            return Err(Error::InvalidPartition(format!("element {} not covered", missing + 1)));
        }
        if blocks.len() > k {
            return Err(Error::TooManyBlocks { blocks: blocks.len(), k });
        }
        Self::from_labels(k, &labels)
    }

    /// The one-block partition `{1..n}`.
    pub fn one_block(k: usize, n: usize) -> Result<Self> {
        check_k(k)?;
        Ok(Self { k, labels: vec![0; n] })
    }

    /// Parses `"12|3"` block syntax. Elements inside a block are either
    /// single digits or comma-separated; `{}` braces are tolerated.
    pub fn parse(k: usize, text: &str) -> Result<Self> {
        let text: String = text.chars().filter(|c| !c.is_whitespace() && *c != '{' && *c != '}').collect();
        if text.is_empty() {
            return Self::from_blocks(k, 0, &[]);
        }
        let mut blocks = Vec::new();
        for part in text.split('|') {
            let block: Vec<usize> = if part.contains(',') {
                part.split(',')
                    .map(|s| s.parse::<usize>().map_err(|e| Error::Parse(format!("{s:?}: {e}"))))
                    .collect::<Result<_>>()?
            } else {
                part.chars()
                    .map(|c| c.to_digit(10).map(|d| d as usize).ok_or_else(|| Error::Parse(format!("bad element {c:?}"))))
                    .collect::<Result<_>>()?
            };
            blocks.push(block);
        }
        let n = blocks.iter().map(Vec::len).sum();
        Self::from_blocks(k, n, &blocks)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    /// Canonical 0-based block labels.
    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn block_count(&self) -> usize {
        self.labels.iter().map(|&l| l as usize + 1).max().unwrap_or(0)
    }

    /// Blocks as sorted 1-based element lists, ordered by least element.
    pub fn blocks(&self) -> Vec<Vec<usize>> {
        let mut blocks = vec![Vec::new(); self.block_count()];
        for (j, &l) in self.labels.iter().enumerate() {
            blocks[l as usize].push(j + 1);
        }
        blocks
    }

    pub fn block_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.block_count()];
        for &l in &self.labels {
            sizes[l as usize] += 1;
        }
        sizes
    }

    /// Whether `i ~ j` (1-based).
    pub fn same_block(&self, i: usize, j: usize) -> bool {
        self.labels[i - 1] == self.labels[j - 1]
    }

    /// The restriction `π^[m]`.
    pub fn restrict(&self, m: usize) -> Result<Self> {
        if m > self.n() {
            return Err(Error::LengthMismatch { expected: self.n(), got: m });
        }
        Ok(Self { k: self.k, labels: self.labels[..m].to_vec() })
    }

    /// `π^σ`: `i ~ j` in `π^σ` iff `σ(i) ~ σ(j)` in `π`.
    pub fn relabel(&self, sigma: &Permutation) -> Result<Self> {
        if sigma.len() != self.n() {
            return Err(Error::LengthMismatch { expected: self.n(), got: sigma.len() });
        }
        let labels: Vec<usize> = sigma.images().iter().map(|&s| self.labels[s - 1] as usize).collect();
        Self::from_labels(self.k, &labels)
    }
}

impl Prefix for Partition {
    fn color_count(&self) -> usize {
        self.k
    }
    fn prefix_word(&self) -> Vec<u8> {
        self.labels.clone()
    }
}

impl fmt::Display for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sep = if self.n() >= 10 { "," } else { "" };
        let blocks: Vec<String> = self
            .blocks()
            .iter()
            .map(|b| b.iter().map(|e| e.to_string()).collect::<Vec<_>>().join(sep))
            .collect();
        write!(f, "{}", blocks.join("|"))
    }
}

/// Serializes in block syntax, e.g. `"12|3"`.
impl Serialize for Partition {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

/// `B(x)`: `i ~ j` iff `x^i = x^j`.
pub fn project_to_partition(x: &Coloring) -> Partition {
    let mut seen = [u8::MAX; 256];
    let mut next = 0u8;
    let labels = x
        .word()
        .iter()
        .map(|&c| {
            let slot = &mut seen[c as usize];
            if *slot == u8::MAX {
                *slot = next;
                next += 1;
            }
            *slot
        })
        .collect();
    Partition { k: x.k(), labels }
}

/// A symmetric associate of `pi`: blocks labeled uniformly without
/// replacement from `{1..k}`. Each of the `k↓#π` colorings projecting to `pi`
/// is equally likely.
pub fn symmetric_associate<R: Rng + ?Sized>(pi: &Partition, rng: &mut R) -> Result<Coloring> {
    let blocks = pi.block_count();
    if blocks > pi.k {
        return Err(Error::TooManyBlocks { blocks, k: pi.k });
    }
    let mut colors: Vec<u8> = (1..=pi.k as u8).collect();
    let (chosen, _) = colors.partial_shuffle(rng, blocks);
    let word = pi.labels.iter().map(|&l| chosen[l as usize]).collect();
    Ok(Coloring::from_word_unchecked(pi.k, word))
}

/// Falling factorial `k↓m = k(k−1)⋯(k−m+1)`.
pub fn falling_factorial(k: usize, m: usize) -> u128 {
    if m > k {
        return 0;
    }
    (0..m).map(|i| (k - i) as u128).product()
}

/// Every partition of `[n]` with at most `k` blocks, in lexicographic order
/// of canonical labels.
pub fn enumerate_partitions(n: usize, k: usize) -> Vec<Partition> {
    let mut out = Vec::new();
    let mut labels = vec![0u8; n];
    fn rec(pos: usize, max: u8, labels: &mut Vec<u8>, k: usize, out: &mut Vec<Partition>) {
        if pos == labels.len() {
            out.push(Partition { k, labels: labels.clone() });
            return;
        }
        let limit = if pos == 0 { 0 } else { (max + 1).min(k as u8 - 1) };
        for l in 0..=limit {
            labels[pos] = l;
            rec(pos + 1, max.max(l), labels, k, out);
        }
    }
    if k >= 1 {
        rec(0, 0, &mut labels, k, &mut out);
    }
    out
}
