//! Finite k-colorings `x = x^1 ⋯ x^n` over the colors `{1..k}`.
//!
//! A [`Coloring`] is always an explicit finite restriction; every operation
//! here is pure. Colors are 1-based and stored as bytes, so `k ≤ 255`.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frequency::FrequencyVector;

/// Largest supported color count.
pub const MAX_COLORS: usize = 255;

/// Symbols used by the plain-text form of a coloring, color `i` at position `i - 1`.
pub const COLOR_SYMBOLS: &str = "123456789abcdefghijklmnopqrstuvwxyz";

pub(crate) fn check_k(k: usize) -> Result<()> {
    if k == 0 || k > MAX_COLORS {
        return Err(Error::InvalidColorCount { k, max: MAX_COLORS });
    }
    Ok(())
}

/// A permutation of `{1..n}`, stored by its images `σ(1), …, σ(n)`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Permutation {
    images: Vec<usize>,
}

impl Permutation {
    /// Builds `σ` from 1-based images; rejects anything that is not a bijection.
    pub fn new(images: Vec<usize>) -> Result<Self> {
        let n = images.len();
        let mut seen = vec![false; n];
        for &v in &images {
            if v == 0 || v > n || seen[v - 1] {
                return Err(Error::NotAPermutation { n });
            }
            seen[v - 1] = true;
        }
        Ok(Self { images })
    }

    pub fn identity(n: usize) -> Self {
        Self { images: (1..=n).collect() }
    }

    /// The transposition swapping `a` and `b` (1-based).
    pub fn transposition(n: usize, a: usize, b: usize) -> Result<Self> {
        if a == 0 || a > n {
            return Err(Error::IndexOutOfRange { index: a, n });
        }
        if b == 0 || b > n {
            return Err(Error::IndexOutOfRange { index: b, n });
        }
        let mut images: Vec<usize> = (1..=n).collect();
        images.swap(a - 1, b - 1);
        Ok(Self { images })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    /// `σ(j)` for 1-based `j`.
    pub fn image(&self, j: usize) -> usize {
        self.images[j - 1]
    }

    pub fn images(&self) -> &[usize] {
        &self.images
    }

    pub fn inverse(&self) -> Self {
        let mut inv = vec![0; self.images.len()];
        for (j, &v) in self.images.iter().enumerate() {
            inv[v - 1] = j + 1;
        }
        Self { images: inv }
    }

    /// All permutations of `{1..n}` in lexicographic order.
    pub fn all(n: usize) -> Vec<Permutation> {
        let mut out = Vec::new();
        let mut cur: Vec<usize> = (1..=n).collect();
        loop {
            out.push(Permutation { images: cur.clone() });
            // next lexicographic permutation
            let Some(i) = (1..cur.len()).rev().find(|&i| cur[i - 1] < cur[i]) else {
                break;
            };
            let j = (i..cur.len()).rev().find(|&j| cur[j] > cur[i - 1]).unwrap();
            cur.swap(i - 1, j);
            cur[i..].reverse();
        }
        out
    }
}

/// A coloring of `[n]` with colors in `{1..k}`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Coloring {
    k: usize,
    word: Vec<u8>,
}

impl Coloring {
    pub fn new(k: usize, word: Vec<u8>) -> Result<Self> {
        check_k(k)?;
        for (index, &c) in word.iter().enumerate() {
            if c == 0 || c as usize > k {
                return Err(Error::ColorOutOfRange { index: index + 1, color: c as usize, k });
            }
        }
        Ok(Self { k, word })
    }

    pub fn from_colors(k: usize, colors: &[usize]) -> Result<Self> {
        check_k(k)?;
        let word = colors
            .iter()
            .enumerate()
            .map(|(index, &c)| {
                if c == 0 || c > k {
                    Err(Error::ColorOutOfRange { index: index + 1, color: c, k })
                } else {
                    Ok(c as u8)
                }
            })
            .collect::<Result<Vec<u8>>>()?;
        Ok(Self { k, word })
    }

    pub(crate) fn from_word_unchecked(k: usize, word: Vec<u8>) -> Self {
        debug_assert!(word.iter().all(|&c| c >= 1 && c as usize <= k));
        Self { k, word }
    }

    /// The constant word `i i ⋯ i` of length `n`.
    pub fn constant(k: usize, n: usize, color: usize) -> Result<Self> {
        Self::from_colors(k, &vec![color; n])
    }

    /// Coordinates i.i.d. uniform on `{1..k}`.
    pub fn uniform<R: Rng + ?Sized>(k: usize, n: usize, rng: &mut R) -> Result<Self> {
        check_k(k)?;
        let word = (0..n).map(|_| rng.random_range(1..=k) as u8).collect();
        Ok(Self { k, word })
    }

    /// Paintbox coloring: coordinates i.i.d. from the frequency vector `freq`.
    pub fn paintbox<R: Rng + ?Sized>(freq: &FrequencyVector, n: usize, rng: &mut R) -> Result<Self> {
        let k = freq.len();
        check_k(k)?;
        let cumulative = cumulative(freq.entries());
        let word = (0..n).map(|_| pick(&cumulative, rng.random::<f64>()) as u8 + 1).collect();
        Ok(Self { k, word })
    }

    /// Parses color symbols (`1`-`9`, then `a`-`z`); whitespace is ignored.
    pub fn parse(k: usize, text: &str) -> Result<Self> {
        check_k(k)?;
        let mut word = Vec::with_capacity(text.len());
        for ch in text.chars().filter(|c| !c.is_whitespace()) {
            let c = COLOR_SYMBOLS
                .find(ch.to_ascii_lowercase())
                .ok_or_else(|| Error::Parse(format!("unknown color symbol {ch:?}")))?;
            word.push((c + 1) as u8);
        }
        Self::new(k, word)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.word.len()
    }

    pub fn is_empty(&self) -> bool {
        self.word.is_empty()
    }

    /// Raw 1-based colors.
    pub fn word(&self) -> &[u8] {
        &self.word
    }

    /// `x^j` for 1-based `j`.
    pub fn color(&self, j: usize) -> usize {
        self.word[j - 1] as usize
    }

    pub(crate) fn set(&mut self, j: usize, color: usize) {
        self.word[j - 1] = color as u8;
    }

    /// The restriction `x^[m]`, i.e. the length-`m` prefix.
    pub fn restrict(&self, m: usize) -> Result<Self> {
        if m > self.len() {
            return Err(Error::LengthMismatch { expected: self.len(), got: m });
        }
        Ok(Self { k: self.k, word: self.word[..m].to_vec() })
    }

    /// The relabeling `x^σ` with `(x^σ)^j = x^{σ(j)}`.
    pub fn relabel(&self, sigma: &Permutation) -> Result<Self> {
        if sigma.len() != self.len() {
            return Err(Error::LengthMismatch { expected: self.len(), got: sigma.len() });
        }
        let word = sigma.images().iter().map(|&s| self.word[s - 1]).collect();
        Ok(Self { k: self.k, word })
    }

    /// `x^φ = x^{φ(1)} ⋯ x^{φ(m)}` for a one-to-one `φ: [m] → [n]`.
    pub fn subsequence(&self, phi: &[usize]) -> Result<Self> {
        let n = self.len();
        let mut seen = vec![false; n];
        let mut word = Vec::with_capacity(phi.len());
        for &p in phi {
            if p == 0 || p > n {
                return Err(Error::IndexOutOfRange { index: p, n });
            }
            if seen[p - 1] {
                return Err(Error::InvalidParameter("subsequence map is not one-to-one".into()));
            }
            seen[p - 1] = true;
            word.push(self.word[p - 1]);
        }
        Ok(Self { k: self.k, word })
    }

    /// Recoloring `γx` with `(γx)^j = γ(x^j)`, for `γ` a permutation of `{1..k}`.
    pub fn recolor(&self, gamma: &Permutation) -> Result<Self> {
        if gamma.len() != self.k {
            return Err(Error::ColorCountMismatch { left: self.k, right: gamma.len() });
        }
        let word = self.word.iter().map(|&c| gamma.image(c as usize) as u8).collect();
        Ok(Self { k: self.k, word })
    }

    /// Number of coordinates of each color; entry `i - 1` counts color `i`.
    pub fn counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.k];
        for &c in &self.word {
            counts[c as usize - 1] += 1;
        }
        counts
    }

    /// Rank in `{1..k}^n` with coordinate 1 most significant (lexicographic order).
    pub fn index(&self) -> usize {
        self.word.iter().fold(0usize, |acc, &c| acc * self.k + (c as usize - 1))
    }

    /// Inverse of [`Coloring::index`].
    pub fn from_index(k: usize, n: usize, mut index: usize) -> Self {
        let mut word = vec![1u8; n];
        for slot in word.iter_mut().rev() {
            *slot = (index % k) as u8 + 1;
            index /= k;
        }
        Self { k, word }
    }
}

/// Serializes as the color word, e.g. `"1121"`.
impl Serialize for Coloring {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl fmt::Display for Coloring {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.k <= COLOR_SYMBOLS.len() {
            let symbols = COLOR_SYMBOLS.as_bytes();
            for &c in &self.word {
                write!(f, "{}", symbols[c as usize - 1] as char)?;
            }
            Ok(())
        } else {
            let parts: Vec<String> = self.word.iter().map(|c| c.to_string()).collect();
            write!(f, "{}", parts.join(","))
        }
    }
}

/// Every coloring in `{1..k}^n`, in [`Coloring::index`] order.
pub fn enumerate(k: usize, n: usize) -> impl Iterator<Item = Coloring> {
    let total = (k as u128).pow(n as u32);
    (0..total as usize).map(move |i| Coloring::from_index(k, n, i))
}

/// Empirical color frequencies `(1/n)·#{j : x^j = i}`.
pub fn empirical_frequency(x: &Coloring) -> Result<FrequencyVector> {
    if x.is_empty() {
        return Err(Error::Empty);
    }
    let n = x.len() as f64;
    let entries = x.counts().into_iter().map(|c| c as f64 / n).collect();
    Ok(FrequencyVector::empirical(entries, x.len()))
}

/// Anything with a finite prefix that approximates an infinite object:
/// colorings directly, partitions through their canonical labels.
pub trait Prefix {
    fn color_count(&self) -> usize;
    fn prefix_word(&self) -> Vec<u8>;
}

impl Prefix for Coloring {
    fn color_count(&self) -> usize {
        self.k
    }
    fn prefix_word(&self) -> Vec<u8> {
        self.word.clone()
    }
}

/// Ultrametric `2^{-n(a,b)}`, `n(a,b)` the length of the longest agreeing
/// prefix. Returns 0 when the words agree on their whole common length.
pub fn distance<T: Prefix>(a: &T, b: &T) -> Result<f64> {
    if a.color_count() != b.color_count() {
        return Err(Error::ColorCountMismatch { left: a.color_count(), right: b.color_count() });
    }
    let (wa, wb) = (a.prefix_word(), b.prefix_word());
    match wa.iter().zip(&wb).position(|(p, q)| p != q) {
        Some(agree) => Ok(0.5f64.powi(agree as i32)),
        None => Ok(0.0),
    }
}

pub(crate) fn cumulative(weights: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    weights
        .iter()
        .map(|w| {
            acc += w;
            acc
        })
        .collect()
}

/// Index of the first cumulative weight exceeding `u·total`.
pub(crate) fn pick(cumulative: &[f64], u: f64) -> usize {
    let total = *cumulative.last().unwrap();
    let target = u * total;
    let idx = cumulative.partition_point(|&c| c <= target);
    // guard against round-off at the upper end and zero-weight trailing entries
    let mut idx = idx.min(cumulative.len() - 1);
    while idx > 0 && cumulative[idx] == cumulative[idx - 1] {
        idx -= 1;
    }
    idx
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn relabel_transposition() {
        let x = Coloring::parse(3, "123").unwrap();
        let sigma = Permutation::transposition(3, 1, 2).unwrap();
        assert_eq!(x.relabel(&sigma).unwrap().to_string(), "213");
        let c = Coloring::parse(3, "111").unwrap();
        for s in Permutation::all(3) {
            assert_eq!(c.relabel(&s).unwrap(), c);
        }
        let y = Coloring::parse(2, "12").unwrap();
        assert_eq!(y.relabel(&Permutation::identity(2)).unwrap(), y);
    }

    #[test]
    fn non_bijection_rejected() {
        assert!(Permutation::new(vec![1, 1, 2]).is_err());
        assert!(Permutation::new(vec![0, 1]).is_err());
        assert!(Permutation::new(vec![1, 3]).is_err());
    }

    #[test]
    fn color_out_of_range_rejected() {
        assert!(Coloring::from_colors(2, &[1, 3]).is_err());
        assert!(Coloring::from_colors(2, &[0]).is_err());
        assert!(Coloring::parse(2, "12x").is_err());
        assert!(Coloring::new(0, vec![]).is_err());
    }

    #[test]
    fn distance_examples() {
        let a = Coloring::parse(2, "121").unwrap();
        let b = Coloring::parse(2, "122").unwrap();
        assert_eq!(distance(&a, &b).unwrap(), 0.25);
        assert_eq!(distance(&a, &a).unwrap(), 0.0);
        let c = Coloring::parse(2, "211").unwrap();
        let d = Coloring::parse(2, "122").unwrap();
        assert_eq!(distance(&c, &d).unwrap(), 1.0);
        let e = Coloring::parse(3, "121").unwrap();
        assert!(matches!(distance(&a, &e), Err(Error::ColorCountMismatch { .. })));
    }

    #[test]
    fn frequency_examples() {
        let f = empirical_frequency(&Coloring::parse(2, "1122").unwrap()).unwrap();
        assert_eq!(f.entries(), &[0.5, 0.5]);
        let g = empirical_frequency(&Coloring::parse(2, "111").unwrap()).unwrap();
        assert_eq!(g.entries(), &[1.0, 0.0]);
        assert_eq!(g.sample_size(), Some(3));
        assert_eq!(empirical_frequency(&Coloring::new(2, vec![]).unwrap()), Err(Error::Empty));
    }

    #[test]
    fn frequency_of_uniform_word_concentrates() {
        let n = 1_000_000;
        let x = Coloring::uniform(2, n, &mut rng::seeded(11)).unwrap();
        let f = empirical_frequency(&x).unwrap();
        let bound = 3.0 * 0.5 / (n as f64).sqrt();
        assert!(bound <= 0.005);
        for &e in f.entries() {
            assert!((e - 0.5).abs() <= bound, "entry {e}");
        }
    }

    #[test]
    fn index_round_trip_and_order() {
        let all: Vec<Coloring> = enumerate(3, 3).collect();
        assert_eq!(all.len(), 27);
        for (i, x) in all.iter().enumerate() {
            assert_eq!(x.index(), i);
        }
        assert_eq!(all[1].to_string(), "112");
        assert!(all.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn all_permutations_lexicographic() {
        let all = Permutation::all(3);
        assert_eq!(all.len(), 6);
        assert_eq!(all[0].images(), &[1, 2, 3]);
        assert_eq!(all[5].images(), &[3, 2, 1]);
        let p = Permutation::new(vec![2, 3, 1]).unwrap();
        assert_eq!(p.inverse().images(), &[3, 1, 2]);
    }

    #[test]
    fn pick_skips_zero_weights() {
        let cum = cumulative(&[0.0, 0.5, 0.0, 0.5, 0.0]);
        assert_eq!(pick(&cum, 0.0), 1);
        assert_eq!(pick(&cum, 0.49), 1);
        assert_eq!(pick(&cum, 0.5), 3);
        assert_eq!(pick(&cum, 0.999_999), 3);
    }
}
