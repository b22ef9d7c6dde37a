//! Coset decompositions as self-maps of coloring space.
//!
//! A coloring `M` of `[nk]` splits into `k` interleaved cosets
//! `M_i = M^i M^{i+k} M^{i+2k} ⋯`. Read as a map, `M(x)^j = M_{x^j}^j`:
//! coordinate `j` of the image is entry `j` of the coset named by `x^j`.
//! The coset form is stored directly; the flat `[nk]` word is a view.

use std::fmt;

use crate::coloring::{check_k, Coloring};
use crate::error::{Error, Result};
use crate::matrix::StochMatrix;

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct CosetMap {
    k: usize,
    n: usize,
    /// `cosets[i][j]` is `M_{i+1}^{j+1}`.
    cosets: Vec<Vec<u8>>,
}

impl CosetMap {
    /// Builds a map from its `k` cosets, each a word of length `n` over `{1..k}`.
    pub fn from_cosets(cosets: Vec<Coloring>) -> Result<Self> {
        let k = cosets.len();
        check_k(k)?;
        let n = cosets[0].len();
        for c in &cosets {
            if c.k() != k {
                return Err(Error::ColorCountMismatch { left: k, right: c.k() });
            }
            if c.len() != n {
                return Err(Error::LengthMismatch { expected: n, got: c.len() });
            }
        }
        Ok(Self { k, n, cosets: cosets.into_iter().map(|c| c.word().to_vec()).collect() })
    }

    pub(crate) fn from_raw(k: usize, n: usize, cosets: Vec<Vec<u8>>) -> Self {
        debug_assert_eq!(cosets.len(), k);
        debug_assert!(cosets.iter().all(|c| c.len() == n));
        Self { k, n, cosets }
    }

    /// Reads the flat form: a coloring of `[nk]` with `M^{i+(j−1)k} = M_i^j`.
    pub fn from_flat(k: usize, flat: &Coloring) -> Result<Self> {
        if flat.k() != k {
            return Err(Error::ColorCountMismatch { left: k, right: flat.k() });
        }
        if flat.len() % k != 0 {
            return Err(Error::InvalidParameter(format!("flat length {} is not a multiple of k = {k}", flat.len())));
        }
        let n = flat.len() / k;
        let w = flat.word();
        let cosets = (0..k).map(|i| (0..n).map(|j| w[i + j * k]).collect()).collect();
        Ok(Self { k, n, cosets })
    }

    /// `id_{k,n}`: coset `i` is the constant word `i ⋯ i`.
    pub fn identity(k: usize, n: usize) -> Result<Self> {
        check_k(k)?;
        Ok(Self { k, n, cosets: (1..=k as u8).map(|i| vec![i; n]).collect() })
    }

    /// The map sending every coordinate of color `i` to `recolor[i - 1]`.
    pub fn from_color_map(k: usize, n: usize, recolor: &[usize]) -> Result<Self> {
        check_k(k)?;
        if recolor.len() != k {
            return Err(Error::ColorCountMismatch { left: k, right: recolor.len() });
        }
        let cosets = recolor
            .iter()
            .map(|&c| {
                if c == 0 || c > k {
                    Err(Error::ColorOutOfRange { index: 1, color: c, k })
                } else {
                    Ok(vec![c as u8; n])
                }
            })
            .collect::<Result<_>>()?;
        Ok(Self { k, n, cosets })
    }

    /// The single-index flip `κ_{ii'}^{(index)}` sized to `n`: fixes every
    /// coordinate except `index`, where color `from` goes to `to`.
    pub fn single_flip(k: usize, n: usize, index: usize, from: usize, to: usize) -> Result<Self> {
        SingleFlip::new(k, index, from, to)?.to_coset_map(n)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Coset `i` (1-based) as a coloring.
    pub fn coset(&self, i: usize) -> Coloring {
        Coloring::from_word_unchecked(self.k, self.cosets[i - 1].clone())
    }

    /// `M_i^j` for 1-based `i, j`.
    pub fn entry(&self, i: usize, j: usize) -> usize {
        self.cosets[i - 1][j - 1] as usize
    }

    /// The flat `[nk]` coloring.
    pub fn flat(&self) -> Coloring {
        let mut word = Vec::with_capacity(self.n * self.k);
        for j in 0..self.n {
            for coset in &self.cosets {
                word.push(coset[j]);
            }
        }
        Coloring::from_word_unchecked(self.k, word)
    }

    pub fn is_identity(&self) -> bool {
        self.cosets.iter().enumerate().all(|(i, c)| c.iter().all(|&v| v as usize == i + 1))
    }

    /// The restriction `M^[m]` (each coset truncated to length `m`).
    pub fn restrict(&self, m: usize) -> Result<Self> {
        if m > self.n {
            return Err(Error::LengthMismatch { expected: self.n, got: m });
        }
        Ok(Self { k: self.k, n: m, cosets: self.cosets.iter().map(|c| c[..m].to_vec()).collect() })
    }

    /// `M(x)` with `M(x)^j = M_{x^j}^j`. Colorings shorter than `n` use the map's prefix.
    pub fn apply(&self, x: &Coloring) -> Result<Coloring> {
        if x.k() != self.k {
            return Err(Error::ColorCountMismatch { left: self.k, right: x.k() });
        }
        if x.len() > self.n {
            return Err(Error::LengthMismatch { expected: self.n, got: x.len() });
        }
        let word = x.word().iter().enumerate().map(|(j, &c)| self.cosets[c as usize - 1][j]).collect();
        Ok(Coloring::from_word_unchecked(self.k, word))
    }

    /// `M2 ∘ M1`, so that `compose(M2, M1)(x) = M2(M1(x))`.
    pub fn compose(m2: &CosetMap, m1: &CosetMap) -> Result<Self> {
        if m2.k != m1.k {
            return Err(Error::ColorCountMismatch { left: m2.k, right: m1.k });
        }
        if m2.n != m1.n {
            return Err(Error::LengthMismatch { expected: m2.n, got: m1.n });
        }
        let cosets = m1
            .cosets
            .iter()
            .map(|c| c.iter().enumerate().map(|(j, &v)| m2.cosets[v as usize - 1][j]).collect())
            .collect();
        Ok(Self { k: m1.k, n: m1.n, cosets })
    }

    /// Empirical matrix frequency: entry `(i, i')` is `(1/n)·#{j : M_i^j = i'}`.
    pub fn matrix_frequency(&self) -> Result<StochMatrix> {
        if self.n == 0 {
            return Err(Error::Empty);
        }
        let k = self.k;
        let mut data = vec![0.0; k * k];
        for (i, coset) in self.cosets.iter().enumerate() {
            for &v in coset {
                data[i * k + v as usize - 1] += 1.0;
            }
        }
        let n = self.n as f64;
        data.iter_mut().for_each(|v| *v /= n);
        Ok(StochMatrix::from_row_major_unchecked(k, data))
    }
}

impl fmt::Display for CosetMap {
    /// One row of color symbols per coset.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 1..=self.k {
            if i > 1 {
                writeln!(f)?;
            }
            write!(f, "{}", self.coset(i))?;
        }
        Ok(())
    }
}

/// 1-based flat indices `φ_x(j) = x^j + (j−1)k`, so that `M(x) = M^{φ_x}` on the flat form.
pub fn phi_indices(x: &Coloring) -> Vec<usize> {
    let k = x.k();
    x.word().iter().enumerate().map(|(j, &c)| c as usize + j * k).collect()
}

/// A single-index flip kept symbolic, so applying it costs O(1).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct SingleFlip {
    pub k: usize,
    /// 1-based coordinate.
    pub index: usize,
    pub from: usize,
    pub to: usize,
}

impl SingleFlip {
    pub fn new(k: usize, index: usize, from: usize, to: usize) -> Result<Self> {
        check_k(k)?;
        if from == to {
            return Err(Error::TrivialFlip(from));
        }
        for c in [from, to] {
            if c == 0 || c > k {
                return Err(Error::ColorOutOfRange { index, color: c, k });
            }
        }
        if index == 0 {
            return Err(Error::IndexOutOfRange { index, n: 0 });
        }
        Ok(Self { k, index, from, to })
    }

    pub fn to_coset_map(&self, n: usize) -> Result<CosetMap> {
        if self.index > n {
            return Err(Error::IndexOutOfRange { index: self.index, n });
        }
        let mut map = CosetMap::identity(self.k, n)?;
        map.cosets[self.from - 1][self.index - 1] = self.to as u8;
        Ok(map)
    }

    /// Applies the flip in place; returns whether the coloring changed.
    pub fn apply_in_place(&self, x: &mut Coloring) -> Result<bool> {
        if self.index > x.len() {
            return Ok(false);
        }
        if x.color(self.index) == self.from {
            x.set(self.index, self.to);
            Ok(true)
        } else {
            Ok(false)
        }
    }

    pub fn apply(&self, x: &Coloring) -> Result<Coloring> {
        let mut y = x.clone();
        self.apply_in_place(&mut y)?;
        Ok(y)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coloring::enumerate;
    use crate::rng;
    use rand::Rng;

    fn swap(n: usize) -> CosetMap {
        CosetMap::from_color_map(2, n, &[2, 1]).unwrap()
    }

    #[test]
    fn identity_fixes_everything() {
        let id = CosetMap::identity(3, 4).unwrap();
        for x in enumerate(3, 4) {
            assert_eq!(id.apply(&x).unwrap(), x);
        }
        assert!(id.is_identity());
        assert_eq!(id.matrix_frequency().unwrap(), StochMatrix::identity(3));
    }

    #[test]
    fn phi_indices_example() {
        let x = Coloring::parse(3, "213").unwrap();
        assert_eq!(phi_indices(&x), vec![2, 4, 9]);
    }

    #[test]
    fn apply_matches_flat_subsequence() {
        let mut rng = rng::seeded(5);
        for _ in 0..50 {
            let flat = Coloring::uniform(3, 12, &mut rng).unwrap();
            let m = CosetMap::from_flat(3, &flat).unwrap();
            assert_eq!(m.flat(), flat);
            let x = Coloring::uniform(3, 4, &mut rng).unwrap();
            assert_eq!(m.apply(&x).unwrap(), flat.subsequence(&phi_indices(&x)).unwrap());
        }
    }

    #[test]
    fn swap_map() {
        let m = swap(3);
        let x = Coloring::parse(2, "121").unwrap();
        assert_eq!(m.apply(&x).unwrap().to_string(), "212");
        assert_eq!(m.matrix_frequency().unwrap().rows(), vec![vec![0.0, 1.0], vec![1.0, 0.0]]);
        assert_eq!(CosetMap::compose(&m, &m).unwrap(), CosetMap::identity(2, 3).unwrap());
    }

    #[test]
    fn single_flip_examples() {
        let kappa = CosetMap::single_flip(3, 4, 3, 1, 2).unwrap();
        assert_eq!(kappa.to_string(), "1121\n2222\n3333");
        assert!(matches!(CosetMap::single_flip(3, 4, 3, 2, 2), Err(Error::TrivialFlip(2))));

        let k12 = CosetMap::single_flip(2, 3, 1, 1, 2).unwrap();
        let k21 = CosetMap::single_flip(2, 3, 1, 2, 1).unwrap();
        let x = Coloring::parse(2, "122").unwrap();
        assert_eq!(k12.apply(&x).unwrap().to_string(), "222");
        let y = Coloring::parse(2, "212").unwrap();
        assert_eq!(k12.apply(&y).unwrap(), y);
        let back = CosetMap::compose(&k21, &k12).unwrap();
        for x in enumerate(2, 3).filter(|x| x.color(1) == 1) {
            assert_eq!(back.apply(&x).unwrap(), x);
        }
    }

    #[test]
    fn symbolic_flip_agrees_with_materialized() {
        for index in 1..=3 {
            for from in 1..=3 {
                for to in (1..=3).filter(|&t| t != from) {
                    let sym = SingleFlip::new(3, index, from, to).unwrap();
                    let mat = sym.to_coset_map(3).unwrap();
                    for x in enumerate(3, 3) {
                        let y = mat.apply(&x).unwrap();
                        assert_eq!(sym.apply(&x).unwrap(), y);
                        let changed = x.word().iter().zip(y.word()).filter(|(a, b)| a != b).count();
                        assert!(changed <= 1);
                        assert!(x.word().iter().zip(y.word()).enumerate().all(|(j, (a, b))| a == b || j + 1 == index));
                    }
                }
            }
        }
    }

    #[test]
    fn compose_law_exhaustive() {
        let mut rng = rng::seeded(99);
        for _ in 0..20 {
            let m1 = CosetMap::from_raw(2, 3, (0..2).map(|_| (0..3).map(|_| rng.random_range(1..=2u8)).collect()).collect());
            let m2 = CosetMap::from_raw(2, 3, (0..2).map(|_| (0..3).map(|_| rng.random_range(1..=2u8)).collect()).collect());
            let c = CosetMap::compose(&m2, &m1).unwrap();
            for x in enumerate(2, 3) {
                assert_eq!(c.apply(&x).unwrap(), m2.apply(&m1.apply(&x).unwrap()).unwrap());
            }
            assert_eq!(CosetMap::compose(&CosetMap::identity(2, 3).unwrap(), &m1).unwrap(), m1);
        }
    }

    #[test]
    fn lipschitz_in_prefix_metric() {
        let mut rng = rng::seeded(3);
        let m = CosetMap::from_flat(2, &Coloring::uniform(2, 16, &mut rng).unwrap()).unwrap();
        for x in enumerate(2, 8) {
            for y in enumerate(2, 8) {
                let agree = x.word().iter().zip(y.word()).take_while(|(a, b)| a == b).count();
                let (mx, my) = (m.apply(&x).unwrap(), m.apply(&y).unwrap());
                assert!(mx.word()[..agree] == my.word()[..agree]);
            }
        }
    }

    #[test]
    fn errors() {
        let m = CosetMap::identity(2, 2).unwrap();
        assert!(m.apply(&Coloring::parse(2, "121").unwrap()).is_err());
        assert!(m.apply(&Coloring::parse(3, "12").unwrap()).is_err());
        assert!(CosetMap::compose(&m, &CosetMap::identity(2, 3).unwrap()).is_err());
        assert_eq!(CosetMap::identity(2, 0).unwrap().matrix_frequency(), Err(Error::Empty));
    }
}
