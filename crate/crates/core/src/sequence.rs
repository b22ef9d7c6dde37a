//! Sequence arrays: one row per individual, one column per site. Column `m`
//! read top to bottom is the coloring `X_m = X_m^1 ⋯ X_m^n`; forgetting the
//! symbols gives the partition sequence.

use std::io::Read;

use crate::coloring::Coloring;
use crate::error::{Error, Result};
use crate::partition::{project_to_partition, Partition};

/// Codec between external symbols and colors `{1..k}`; symbol `i` maps to color `i + 1`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Alphabet {
    symbols: Vec<char>,
}

impl Alphabet {
    pub fn new(symbols: &str) -> Result<Self> {
        let symbols: Vec<char> = symbols.chars().collect();
        if symbols.is_empty() {
            return Err(Error::Empty);
        }
        for (i, c) in symbols.iter().enumerate() {
            if symbols[..i].contains(c) {
                return Err(Error::Parse(format!("duplicate symbol {c:?} in alphabet")));
            }
        }
        Ok(Self { symbols })
    }

    /// Nucleotides `A, C, G, T` as colors 1..4.
    pub fn dna() -> Self {
        Self { symbols: vec!['A', 'C', 'G', 'T'] }
    }

    pub fn k(&self) -> usize {
        self.symbols.len()
    }

    pub fn encode_symbol(&self, c: char) -> Result<usize> {
        self.symbols
            .iter()
            .position(|&s| s == c)
            .map(|p| p + 1)
            .ok_or_else(|| Error::Parse(format!("symbol {c:?} not in alphabet")))
    }

    pub fn encode(&self, text: &str) -> Result<Coloring> {
        let colors = text.chars().map(|c| self.encode_symbol(c)).collect::<Result<Vec<_>>>()?;
        Coloring::from_colors(self.k(), &colors)
    }

    pub fn decode(&self, x: &Coloring) -> Result<String> {
        if x.k() != self.k() {
            return Err(Error::ColorCountMismatch { left: self.k(), right: x.k() });
        }
        Ok(x.word().iter().map(|&c| self.symbols[c as usize - 1]).collect())
    }
}

/// An individuals × sites array of colors.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SequenceArray {
    k: usize,
    rows: Vec<Vec<u8>>,
}

impl SequenceArray {
    /// Reads a headerless CSV of symbols, one row per individual.
    pub fn from_csv<R: Read>(reader: R, alphabet: &Alphabet) -> Result<Self> {
        let mut csv = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_reader(reader);
        let mut rows = Vec::new();
        for record in csv.records() {
            let record = record.map_err(|e| Error::Parse(e.to_string()))?;
            let row = record
                .iter()
                .map(|field| {
                    let mut chars = field.chars();
                    match (chars.next(), chars.next()) {
                        (Some(c), None) => alphabet.encode_symbol(c).map(|v| v as u8),
                        _ => Err(Error::Parse(format!("expected one symbol per cell, got {field:?}"))),
                    }
                })
                .collect::<Result<Vec<u8>>>()?;
            if let Some(first) = rows.first() {
                let first: &Vec<u8> = first;
                if first.len() != row.len() {
                    return Err(Error::Parse(format!(
                        "row {} has {} sites, expected {}",
                        rows.len() + 1,
                        row.len(),
                        first.len()
                    )));
                }
            }
            rows.push(row);
        }
        Ok(Self { k: alphabet.k(), rows })
    }

    pub fn individuals(&self) -> usize {
        self.rows.len()
    }

    pub fn sites(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }

    /// The coloring at site `m` (1-based).
    pub fn site(&self, m: usize) -> Coloring {
        let word = self.rows.iter().map(|r| r[m - 1]).collect();
        Coloring::from_word_unchecked(self.k, word)
    }

    pub fn colorings(&self) -> Vec<Coloring> {
        (1..=self.sites()).map(|m| self.site(m)).collect()
    }

    pub fn partitions(&self) -> Vec<Partition> {
        self.colorings().iter().map(project_to_partition).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dna_table_to_partitions() {
        let csv = "A,A,T,C,C,G,A\nA,T,T,C,G,G,A\nT,T,T,G,G,C,T\n";
        let array = SequenceArray::from_csv(csv.as_bytes(), &Alphabet::dna()).unwrap();
        assert_eq!(array.individuals(), 3);
        assert_eq!(array.sites(), 7);
        let alpha = Alphabet::dna();
        let sites: Vec<String> = array.colorings().iter().map(|x| alpha.decode(x).unwrap()).collect();
        assert_eq!(sites, vec!["AAT", "ATT", "TTT", "CCG", "CGG", "GGC", "AAT"]);
        let parts: Vec<String> = array.partitions().iter().map(|p| p.to_string()).collect();
        assert_eq!(parts, vec!["12|3", "1|23", "123", "12|3", "1|23", "12|3", "12|3"]);
    }

    #[test]
    fn bad_symbols_and_ragged_rows() {
        assert!(SequenceArray::from_csv("A,X\n".as_bytes(), &Alphabet::dna()).is_err());
        assert!(SequenceArray::from_csv("A,C\nA\n".as_bytes(), &Alphabet::dna()).is_err());
        assert!(Alphabet::new("AA").is_err());
    }
}
