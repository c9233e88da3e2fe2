use crate::error::{Error, Result};

use super::Matrix;

/// The set Ω of observed positions of a `rows x cols` matrix.
///
/// Positions are 0-based and kept sorted lexicographically by `(i, j)`;
/// this order fixes the row order of every Ω-indexed object downstream.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ObservationMask {
    rows: usize,
    cols: usize,
    known: Vec<(usize, usize)>,
    dense: Vec<bool>,
}

impl ObservationMask {
    pub fn new(rows: usize, cols: usize, pairs: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Dimension(format!("mask over a {rows}x{cols} matrix")));
        }
        let mut dense = vec![false; rows * cols];
        let mut known = Vec::new();
        for (i, j) in pairs {
            if i >= rows || j >= cols {
                return Err(Error::InvalidArgument(format!(
                    "position ({i}, {j}) outside a {rows}x{cols} matrix"
                )));
            }
            let slot = &mut dense[i * cols + j];
            if *slot {
                return Err(Error::InvalidArgument(format!("duplicate position ({i}, {j})")));
            }
            *slot = true;
            known.push((i, j));
        }
        if known.is_empty() {
            return Err(Error::InvalidArgument("mask has no known positions".into()));
        }
        known.sort_unstable();
        Ok(Self {
            rows,
            cols,
            known,
            dense,
        })
    }

    /// Mask containing every position.
    pub fn full(rows: usize, cols: usize) -> Result<Self> {
        Self::new(rows, cols, (0..rows).flat_map(|i| (0..cols).map(move |j| (i, j))))
    }

    /// Mask of the positions where `keep` returns true.
    pub fn from_predicate(rows: usize, cols: usize, mut keep: impl FnMut(usize, usize) -> bool) -> Result<Self> {
        let mut pairs = Vec::new();
        for i in 0..rows {
            for j in 0..cols {
                if keep(i, j) {
                    pairs.push((i, j));
                }
            }
        }
        Self::new(rows, cols, pairs)
    }

    /// Mask of the nonzero entries of `m`.
    pub fn nonzero_of(m: &Matrix) -> Result<Self> {
        Self::from_predicate(m.rows(), m.cols(), |i, j| m[(i, j)] != 0.0)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Number of known positions, `m = |Ω|`.
    pub fn len(&self) -> usize {
        self.known.len()
    }

    pub fn is_empty(&self) -> bool {
        self.known.is_empty()
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        i < self.rows && j < self.cols && self.dense[i * self.cols + j]
    }

    /// Known positions in lexicographic order.
    pub fn known(&self) -> &[(usize, usize)] {
        &self.known
    }

    /// Unknown positions (Ω^c) in lexicographic order.
    pub fn complement(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.rows * self.cols - self.len());
        for i in 0..self.rows {
            for j in 0..self.cols {
                if !self.dense[i * self.cols + j] {
                    out.push((i, j));
                }
            }
        }
        out
    }

    /// Fraction of positions that are unknown.
    pub fn missing_rate(&self) -> f64 {
        let total = (self.rows * self.cols) as f64;
        (total - self.len() as f64) / total
    }

    pub(crate) fn require_shape(&self, m: &Matrix, what: &str) -> Result<()> {
        if m.shape() != (self.rows, self.cols) {
            return Err(Error::Dimension(format!(
                "{what}: matrix is {}x{} but mask is {}x{}",
                m.rows(),
                m.cols(),
                self.rows,
                self.cols
            )));
        }
        Ok(())
    }
}
