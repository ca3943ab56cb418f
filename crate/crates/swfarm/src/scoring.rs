//! Substitution matrices and gap penalties.

use std::path::Path;

use crate::SwError;

const BLOSUM50: &str = include_str!("blosum50.txt");

/// Score of an unknown residue against anything, unless overridden.
pub const DEFAULT_WILDCARD: i32 = -1;

/// A square substitution matrix over its own alphabet, plus one extra
/// wildcard row and column for residues the alphabet lacks.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    alphabet: Vec<u8>,
    // (n+1)^2, row-major; index n is the wildcard.
    scores: Vec<i32>,
    lookup: [u8; 256],
}

impl Matrix {
    pub fn blosum50() -> Self {
        Self::blosum50_with_wildcard(DEFAULT_WILDCARD)
    }

    pub fn blosum50_with_wildcard(wildcard: i32) -> Self {
        Self::parse(BLOSUM50, wildcard).expect("embedded matrix is well formed")
    }

    pub fn from_file(path: &Path, wildcard: i32) -> Result<Self, SwError> {
        let text = std::fs::read_to_string(path).map_err(|e| SwError::io(path, e))?;
        Self::parse(&text, wildcard)
    }

    /// Parses the usual text layout: `#` comments, a header line of residue
    /// letters, then one row per letter starting with that letter.
    pub fn parse(text: &str, wildcard: i32) -> Result<Self, SwError> {
        let bad = |line: usize, msg: String| SwError::Matrix { line, msg };
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let (hline, header) = lines.next().ok_or_else(|| bad(0, "no header line".into()))?;
        let alphabet: Vec<u8> = header
            .split_whitespace()
            .map(|t| match t.as_bytes() {
                [c] => Ok(c.to_ascii_uppercase()),
                _ => Err(bad(hline, format!("header entry {t:?} is not a single residue"))),
            })
            .collect::<Result<_, _>>()?;
        let n = alphabet.len();
        if n == 0 {
            return Err(bad(hline, "empty alphabet".into()));
        }
        let mut scores = vec![wildcard; (n + 1) * (n + 1)];
        let mut seen_rows = 0;
        for (ln, line) in lines {
            let mut toks = line.split_whitespace();
            let label = toks.next().unwrap_or_default().as_bytes();
            let row = match label {
                [c] if seen_rows < n && c.to_ascii_uppercase() == alphabet[seen_rows] => seen_rows,
                _ => return Err(bad(ln, format!("expected row {}", alphabet.get(seen_rows).map_or('?', |&c| c as char)))),
            };
            let vals: Vec<i32> = toks
                .map(|t| t.parse().map_err(|_| bad(ln, format!("bad score {t:?}"))))
                .collect::<Result<_, _>>()?;
            if vals.len() != n {
                return Err(bad(ln, format!("{} scores, expected {n}", vals.len())));
            }
            scores[row * (n + 1)..row * (n + 1) + n].copy_from_slice(&vals);
            seen_rows += 1;
        }
        if seen_rows != n {
            return Err(bad(0, format!("{seen_rows} rows, expected {n}")));
        }
        for i in 0..n {
            for j in 0..i {
                if scores[i * (n + 1) + j] != scores[j * (n + 1) + i] {
                    return Err(bad(
                        0,
                        format!("not symmetric at {}/{}", alphabet[i] as char, alphabet[j] as char),
                    ));
                }
            }
        }
        let mut lookup = [n as u8; 256];
        if n >= 255 {
            return Err(bad(hline, "alphabet too large".into()));
        }
        for (i, &c) in alphabet.iter().enumerate() {
            lookup[c as usize] = i as u8;
            lookup[c.to_ascii_lowercase() as usize] = i as u8;
        }
        Ok(Matrix {
            alphabet,
            scores,
            lookup,
        })
    }

    /// Alphabet size including the wildcard.
    pub fn size(&self) -> usize {
        self.alphabet.len() + 1
    }

    pub fn alphabet(&self) -> &[u8] {
        &self.alphabet
    }

    #[inline]
    pub fn index(&self, residue: u8) -> u8 {
        self.lookup[residue as usize]
    }

    pub fn encode(&self, residues: &[u8]) -> Vec<u8> {
        residues.iter().map(|&r| self.index(r)).collect()
    }

    #[inline]
    pub fn score_idx(&self, a: u8, b: u8) -> i32 {
        self.scores[a as usize * self.size() + b as usize]
    }

    /// Score of two residue letters; unknown letters use the wildcard.
    pub fn score(&self, a: u8, b: u8) -> i32 {
        self.score_idx(self.index(a), self.index(b))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoringScheme {
    pub matrix: Matrix,
    /// Cost of the first residue of a gap.
    pub gap_open: i32,
    /// Cost of each further residue.
    pub gap_extend: i32,
}

impl ScoringScheme {
    pub fn new(matrix: Matrix, gap_open: i32, gap_extend: i32) -> Result<Self, SwError> {
        if !(gap_extend >= 1 && gap_open >= gap_extend) {
            return Err(SwError::Config(format!(
                "need gap_open >= gap_extend >= 1, got {gap_open}/{gap_extend}"
            )));
        }
        Ok(ScoringScheme {
            matrix,
            gap_open,
            gap_extend,
        })
    }

    pub fn blosum50(gap_open: i32, gap_extend: i32) -> Result<Self, SwError> {
        Self::new(Matrix::blosum50(), gap_open, gap_extend)
    }

    /// Penalty of a gap of `len` residues.
    pub fn gap(&self, len: usize) -> i32 {
        if len == 0 {
            0
        } else {
            self.gap_open + (len as i32 - 1) * self.gap_extend
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blosum50_spot_values() {
        let m = Matrix::blosum50();
        assert_eq!(m.score(b'A', b'A'), 5);
        assert_eq!(m.score(b'W', b'W'), 15);
        assert_eq!(m.score(b'C', b'C'), 13);
        assert_eq!(m.score(b'W', b'C'), -5);
        assert_eq!(m.score(b'a', b'r'), -2);
        assert_eq!(m.alphabet().len(), 24);
    }

    #[test]
    fn unknown_residues_use_the_wildcard() {
        let m = Matrix::blosum50();
        assert_eq!(m.score(b'J', b'A'), DEFAULT_WILDCARD);
        assert_eq!(m.score(b'J', b'J'), DEFAULT_WILDCARD);
        let m = Matrix::parse(BLOSUM50, -4).unwrap();
        assert_eq!(m.score(b'U', b'W'), -4);
    }

    #[test]
    fn asymmetric_matrix_is_rejected() {
        let text = "  A B\nA 1 2\nB 3 1\n";
        assert!(matches!(Matrix::parse(text, -1), Err(SwError::Matrix { .. })));
        let ok = Matrix::parse("  A B\nA 1 2\nB 2 1\n", -1).unwrap();
        assert_eq!(ok.score(b'B', b'A'), 2);
    }

    #[test]
    fn ragged_matrix_is_rejected() {
        assert!(Matrix::parse("  A B\nA 1\nB 2 1\n", -1).is_err());
        assert!(Matrix::parse("  A B\nA 1 2\n", -1).is_err());
        assert!(Matrix::parse("", -1).is_err());
    }

    #[test]
    fn gap_penalties_are_validated() {
        assert!(ScoringScheme::blosum50(10, 2).is_ok());
        assert!(ScoringScheme::blosum50(5, 2).is_ok());
        assert!(ScoringScheme::blosum50(1, 2).is_err());
        assert!(ScoringScheme::blosum50(3, 0).is_err());
        let s = ScoringScheme::blosum50(10, 2).unwrap();
        assert_eq!((s.gap(1), s.gap(2), s.gap(5)), (10, 12, 18));
    }
}
