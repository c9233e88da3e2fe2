//! Counting bound for rank-`r` completions from generic observations.
//!
//! For `m = dim M_r` generic observations of an `n x n` matrix the number of
//! complex rank-`r` completions is at most the degree of the determinantal
//! variety,
//!
//! ```text
//! prod_{i=0}^{n-r-1} C(n+i, r) / C(r+i, r)
//! ```
//!
//! which is an integer for every `1 <= r <= n`.

use num_bigint::BigUint;
use num_rational::BigRational;
use num_traits::One;
use serde::Serialize;

use crate::error::{Error, Result};

fn binomial(n: usize, k: usize) -> BigUint {
    let mut acc = BigUint::one();
    for i in 0..k {
        acc = acc * BigUint::from(n - i) / BigUint::from(i + 1);
    }
    acc
}

fn check_sizes(n: usize, r: usize) -> Result<()> {
    if r == 0 || r > n {
        return Err(Error::InvalidArgument(format!("rank {r} outside 1..={n}")));
    }
    Ok(())
}

/// Degree of the variety of `n x n` matrices of rank at most `r`.
pub fn degree_bound(n: usize, r: usize) -> Result<BigUint> {
    check_sizes(n, r)?;
    let mut acc = BigRational::one();
    for i in 0..n - r {
        acc *= BigRational::new(binomial(n + i, r).into(), binomial(r + i, r).into());
    }
    if !acc.is_integer() {
        return Err(Error::InvalidArgument(format!(
            "degree product for n = {n}, r = {r} is not an integer"
        )));
    }
    let (_, magnitude) = acc.to_integer().into_parts();
    Ok(magnitude)
}

/// `2nr - r^2`.
pub fn manifold_dimension(n: usize, r: usize) -> Result<usize> {
    check_sizes(n, r)?;
    Ok(2 * n * r - r * r)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExistenceReport {
    pub n: usize,
    pub r: usize,
    /// Number of observed entries.
    pub m: usize,
    pub manifold_dim: usize,
    /// `m > 2nr - r^2`.
    pub sample_ok: bool,
    /// Exact decimal; may exceed every machine integer.
    pub degree_bound: String,
}

pub fn existence_report(n: usize, r: usize, m: usize) -> Result<ExistenceReport> {
    let degree = degree_bound(n, r)?;
    if m > n * n {
        return Err(Error::InvalidArgument(format!("m = {m} exceeds n^2 = {}", n * n)));
    }
    let manifold_dim = manifold_dimension(n, r)?;
    Ok(ExistenceReport {
        n,
        r,
        m,
        manifold_dim,
        sample_ok: m > manifold_dim,
        degree_bound: degree.to_string(),
    })
}
