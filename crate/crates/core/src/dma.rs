//! Dispersed multipath aggregation.
//!
//! A source buffers `t` readings into a block `R` and sends the `p` entries
//! of `R · A`, one per path, where `A` is a public `t × p` matrix whose
//! every `t`-column submatrix is invertible. Each share is a single field
//! element, so `t` readings cost `p` messages instead of `p · t`. The sink
//! solves the `t × t` system formed by any `t` shares. The map `R ↦ R · A`
//! is linear, so pathwise sums of shares reconstruct to blockwise sums of
//! readings.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::gfp::{solve_linear, FieldElement, FieldMatrix, PrimeField};
use crate::share::{binomial, distinct_by_path, Combinations, PathShare, SchemeError};

/// Above this many column subsets, invertibility is spot-checked instead of
/// verified exhaustively.
pub const EXHAUSTIVE_SUBSET_LIMIT: u64 = 100_000;
const SPOT_CHECK_SUBSETS: usize = 1_000;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DispersalMatrix {
    a: FieldMatrix,
}

impl DispersalMatrix {
    /// Transposed Vandermonde matrix `a[k][q] = q^k` for `k = 0..t`,
    /// `q = 1..=p`. Any `t` columns form a Vandermonde matrix on distinct
    /// nonzero points, so the invertibility property holds by construction.
    pub fn vandermonde(t: usize, p: usize, field: PrimeField) -> Result<Self, SchemeError> {
        check_dims(t, p, field)?;
        let a = FieldMatrix::from_fn(field, t, p, |k, q| field.element(q as u64 + 1).pow(k as u64));
        Ok(Self { a })
    }

    /// Wraps an arbitrary matrix after checking the column property.
    pub fn from_matrix(a: FieldMatrix) -> Result<Self, SchemeError> {
        check_dims(a.rows(), a.cols(), a.field())?;
        let m = Self { a };
        if let Some(bad) = m.find_singular_subset() {
            return Err(SchemeError::InvalidParams(format!(
                "columns {bad:?} do not form an invertible matrix"
            )));
        }
        Ok(m)
    }

    pub fn threshold(&self) -> usize {
        self.a.rows()
    }

    pub fn paths(&self) -> usize {
        self.a.cols()
    }

    pub fn field(&self) -> PrimeField {
        self.a.field()
    }

    pub fn matrix(&self) -> &FieldMatrix {
        &self.a
    }

    /// Entry `a_{k,q}` with 1-based `k` and `q`.
    pub fn coefficient(&self, k: usize, q: usize) -> FieldElement {
        self.a.get(k - 1, q - 1)
    }

    /// Returns the first (0-based) column subset whose submatrix is
    /// singular. Exhaustive when there are at most
    /// [`EXHAUSTIVE_SUBSET_LIMIT`] subsets, otherwise a seeded sample.
    pub fn find_singular_subset(&self) -> Option<Vec<usize>> {
        let (t, p) = (self.threshold(), self.paths());
        let singular = |cols: &Vec<usize>| {
            self.a
                .select_columns(cols)
                .determinant()
                .map(|d| d.is_zero())
                .unwrap_or(true)
        };
        if binomial(p, t) <= EXHAUSTIVE_SUBSET_LIMIT {
            Combinations::new(p, t).find(singular)
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            (0..SPOT_CHECK_SUBSETS)
                .map(|_| {
                    let mut cols = sample(&mut rng, p, t).into_vec();
                    cols.sort_unstable();
                    cols
                })
                .find(singular)
        }
    }

    /// Number of `t`-column subsets, and whether all of them are
    /// invertible. Always exhaustive; callers bound the cost.
    pub fn verify_exhaustive(&self) -> (u64, bool) {
        let mut checked = 0;
        for cols in Combinations::new(self.paths(), self.threshold()) {
            checked += 1;
            match self.a.select_columns(&cols).determinant() {
                Ok(d) if !d.is_zero() => {}
                _ => return (checked, false),
            }
        }
        (checked, true)
    }
}

fn check_dims(t: usize, p: usize, field: PrimeField) -> Result<(), SchemeError> {
    if t == 0 || t > p {
        return Err(SchemeError::InvalidParams(format!(
            "threshold {t} must satisfy 1 <= t <= p = {p}"
        )));
    }
    if p as u64 >= field.modulus() {
        return Err(SchemeError::InvalidParams(format!(
            "{p} shares need distinct nonzero points in {field}"
        )));
    }
    Ok(())
}

/// A source's buffer of `t` readings.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReadingBlock(Vec<FieldElement>);

impl ReadingBlock {
    pub fn new(values: Vec<FieldElement>) -> Self {
        Self(values)
    }

    pub fn values(&self) -> &[FieldElement] {
        &self.0
    }

    pub fn into_values(self) -> Vec<FieldElement> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// The `p` shares `m_q` of one block.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DmaShareSet(Vec<FieldElement>);

impl DmaShareSet {
    pub fn values(&self) -> &[FieldElement] {
        &self.0
    }

    pub fn get(&self, path: usize) -> Option<FieldElement> {
        path.checked_sub(1).and_then(|i| self.0.get(i)).copied()
    }

    pub fn shares(&self) -> impl Iterator<Item = PathShare> + '_ {
        self.0.iter().enumerate().map(|(i, &v)| PathShare::new(i + 1, v))
    }

    pub fn add(&self, other: &DmaShareSet) -> Result<DmaShareSet, SchemeError> {
        if self.0.len() != other.0.len() {
            return Err(SchemeError::WrongLength {
                expected: self.0.len(),
                actual: other.0.len(),
            });
        }
        let values = self
            .0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| a.try_add(b))
            .collect::<Result<_, _>>()?;
        Ok(DmaShareSet(values))
    }
}

/// `M = R · A`.
pub fn disperse(block: &ReadingBlock, matrix: &DispersalMatrix) -> Result<DmaShareSet, SchemeError> {
    if block.len() != matrix.threshold() {
        return Err(SchemeError::WrongLength {
            expected: matrix.threshold(),
            actual: block.len(),
        });
    }
    Ok(DmaShareSet(matrix.a.vec_mul(block.values())?))
}

/// Solves for the block from the `t` lowest-indexed distinct shares.
pub fn reconstruct(shares: &[PathShare], matrix: &DispersalMatrix) -> Result<ReadingBlock, SchemeError> {
    let distinct = distinct_by_path(shares, matrix.paths())?;
    let t = matrix.threshold();
    if distinct.len() < t {
        return Err(SchemeError::InsufficientShares {
            needed: t,
            have: distinct.len(),
        });
    }
    reconstruct_subset(&distinct[..t], matrix)
}

/// Solves the system for exactly `t` shares with distinct indices.
pub fn reconstruct_subset(shares: &[PathShare], matrix: &DispersalMatrix) -> Result<ReadingBlock, SchemeError> {
    let t = matrix.threshold();
    if shares.len() != t {
        return Err(SchemeError::WrongLength {
            expected: t,
            actual: shares.len(),
        });
    }
    let cols: Vec<usize> = shares.iter().map(|s| s.path - 1).collect();
    // row j of the system: sum_k r_k a_{k, q_j} = m_{q_j}
    let system = matrix.a.select_columns(&cols).transpose();
    let rhs: Vec<FieldElement> = shares.iter().map(|s| s.value).collect();
    match solve_linear(&system, &rhs) {
        Ok(r) => Ok(ReadingBlock(r)),
        Err(crate::gfp::FieldError::Singular) => Err(SchemeError::Internal(format!(
            "dispersal columns {cols:?} are singular"
        ))),
        Err(e) => Err(e.into()),
    }
}

/// Adds two shares travelling on the same path.
pub fn aggregate(a: PathShare, b: PathShare) -> Result<PathShare, SchemeError> {
    crate::sma::aggregate(a, b)
}
