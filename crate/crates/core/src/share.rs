//! Types shared by the three splitting schemes.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gfp::{FieldElement, FieldError};

pub type NodeId = u32;

/// Source nodes whose readings are folded into an aggregated share.
pub type Contributors = BTreeSet<NodeId>;

/// One share value tagged with its share index (1-based; index 0 is
/// reserved for the secret itself).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PathShare {
    pub path: usize,
    pub value: FieldElement,
}

impl PathShare {
    pub fn new(path: usize, value: FieldElement) -> Self {
        Self { path, value }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Sma,
    Dma,
    Adma,
    Tree,
}

impl Scheme {
    pub fn name(&self) -> &'static str {
        match self {
            Scheme::Sma => "sma",
            Scheme::Dma => "dma",
            Scheme::Adma => "adma",
            Scheme::Tree => "tree",
        }
    }

    pub const ALL: [Scheme; 4] = [Scheme::Tree, Scheme::Sma, Scheme::Dma, Scheme::Adma];
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Scheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "sma" => Ok(Scheme::Sma),
            "dma" => Ok(Scheme::Dma),
            "adma" | "a-dma" => Ok(Scheme::Adma),
            "tree" => Ok(Scheme::Tree),
            other => Err(format!("unknown scheme `{other}` (expected sma, dma, adma or tree)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SchemeError {
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("need {needed} distinct shares, have {have}")]
    InsufficientShares { needed: usize, have: usize },
    #[error("share index {path} outside 1..={paths}")]
    PathOutOfRange { path: usize, paths: usize },
    #[error("cannot combine shares for paths {left} and {right}")]
    PathMismatch { left: usize, right: usize },
    #[error("expected {expected} values, got {actual}")]
    WrongLength { expected: usize, actual: usize },
    #[error("shares carry different contributor sets")]
    MixedContributors,
    #[error("no authentication key for node {0}")]
    UnknownNode(u32),
    #[error("internal error: {0}")]
    Internal(String),
}

/// Sorts shares by index, keeps the first occurrence of each index and
/// rejects indices outside `1..=paths`.
pub(crate) fn distinct_by_path(shares: &[PathShare], paths: usize) -> Result<Vec<PathShare>, SchemeError> {
    let mut out: Vec<PathShare> = Vec::with_capacity(shares.len());
    for s in shares {
        if s.path == 0 || s.path > paths {
            return Err(SchemeError::PathOutOfRange { path: s.path, paths });
        }
        if !out.iter().any(|o| o.path == s.path) {
            out.push(*s);
        }
    }
    out.sort_by_key(|s| s.path);
    Ok(out)
}

/// `n choose k`, saturating at `u64::MAX`.
pub fn binomial(n: usize, k: usize) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
        if acc > u64::MAX as u128 {
            return u64::MAX;
        }
    }
    acc as u64
}

/// Lexicographic `k`-subsets of `0..n`.
#[derive(Debug, Clone)]
pub struct Combinations {
    n: usize,
    current: Option<Vec<usize>>,
}

impl Combinations {
    pub fn new(n: usize, k: usize) -> Self {
        Self {
            n,
            current: (k <= n).then(|| (0..k).collect()),
        }
    }
}

impl Iterator for Combinations {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        let cur = self.current.take()?;
        let k = cur.len();
        let mut next = cur.clone();
        let mut i = k;
        while i > 0 {
            i -= 1;
            if next[i] < self.n - k + i {
                next[i] += 1;
                for j in i + 1..k {
                    next[j] = next[j - 1] + 1;
                }
                self.current = Some(next);
                break;
            }
        }
        Some(cur)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn combinations_are_lexicographic_and_complete() {
        let all: Vec<_> = Combinations::new(4, 2).collect();
        assert_eq!(all, vec![vec![0, 1], vec![0, 2], vec![0, 3], vec![1, 2], vec![1, 3], vec![2, 3]]);
        assert_eq!(Combinations::new(8, 3).count() as u64, binomial(8, 3));
        assert_eq!(Combinations::new(3, 0).collect::<Vec<_>>(), vec![Vec::<usize>::new()]);
        assert_eq!(Combinations::new(2, 3).count(), 0);
    }

    #[test]
    fn binomials() {
        assert_eq!(binomial(5, 3), 10);
        assert_eq!(binomial(16, 8), 12_870);
        assert_eq!(binomial(3, 4), 0);
        assert_eq!(binomial(200, 100), u64::MAX);
    }
}
