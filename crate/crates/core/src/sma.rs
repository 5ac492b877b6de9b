//! Secret multipath aggregation.
//!
//! A reading `r` becomes the constant term of a random polynomial of degree
//! `t - 1`; the share sent on path `q` is the polynomial evaluated at `q`.
//! Any `t` shares determine the polynomial and hence `r`, while `t - 1`
//! shares are consistent with every possible reading equally often.
//! Because evaluation is linear, aggregators can add same-path shares from
//! different sources and the sink interpolates the sum of the readings.

use rand::Rng;

use crate::gfp::{lagrange_at_zero, FieldElement, FieldMatrix, PrimeField};
use crate::share::{distinct_by_path, PathShare, SchemeError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SmaParams {
    paths: usize,
    threshold: usize,
    field: PrimeField,
}

impl SmaParams {
    pub fn new(paths: usize, threshold: usize, field: PrimeField) -> Result<Self, SchemeError> {
        if threshold == 0 || threshold > paths {
            return Err(SchemeError::InvalidParams(format!(
                "threshold {threshold} must satisfy 1 <= t <= p = {paths}"
            )));
        }
        if paths as u64 >= field.modulus() {
            return Err(SchemeError::InvalidParams(format!(
                "{paths} paths need distinct nonzero points in {field}"
            )));
        }
        Ok(Self {
            paths,
            threshold,
            field,
        })
    }

    pub fn paths(&self) -> usize {
        self.paths
    }

    pub fn threshold(&self) -> usize {
        self.threshold
    }

    pub fn field(&self) -> PrimeField {
        self.field
    }
}

/// The `p` shares of one reading (or of a pathwise sum of readings).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SmaShareSet {
    values: Vec<FieldElement>,
    params: SmaParams,
}

impl SmaShareSet {
    pub fn params(&self) -> &SmaParams {
        &self.params
    }

    /// Share for path `q` (1-based).
    pub fn get(&self, path: usize) -> Option<FieldElement> {
        path.checked_sub(1).and_then(|i| self.values.get(i)).copied()
    }

    pub fn values(&self) -> &[FieldElement] {
        &self.values
    }

    pub fn shares(&self) -> impl Iterator<Item = PathShare> + '_ {
        self.values.iter().enumerate().map(|(i, &v)| PathShare::new(i + 1, v))
    }

    /// Pathwise sum; reconstructs to the sum of both readings.
    pub fn add(&self, other: &SmaShareSet) -> Result<SmaShareSet, SchemeError> {
        if self.params != other.params {
            return Err(SchemeError::InvalidParams("share sets use different parameters".into()));
        }
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a.try_add(b))
            .collect::<Result<_, _>>()?;
        Ok(SmaShareSet {
            values,
            params: self.params,
        })
    }

    /// Pathwise scalar multiple; reconstructs to `k * r`.
    pub fn scale(&self, k: FieldElement) -> Result<SmaShareSet, SchemeError> {
        let values = self.values.iter().map(|v| v.try_mul(&k)).collect::<Result<_, _>>()?;
        Ok(SmaShareSet {
            values,
            params: self.params,
        })
    }
}

/// Splits `reading` with fresh uniformly random coefficients.
pub fn split<R: Rng + ?Sized>(reading: FieldElement, params: &SmaParams, rng: &mut R) -> Result<SmaShareSet, SchemeError> {
    let coeffs: Vec<FieldElement> = (1..params.threshold).map(|_| params.field.random(rng)).collect();
    split_with_coefficients(reading, params, &coeffs)
}

/// Splits `reading` using the given higher-order coefficients
/// `a_1 .. a_{t-1}`.
pub fn split_with_coefficients(
    reading: FieldElement,
    params: &SmaParams,
    coeffs: &[FieldElement],
) -> Result<SmaShareSet, SchemeError> {
    params.field.check(&reading)?;
    if coeffs.len() != params.threshold - 1 {
        return Err(SchemeError::WrongLength {
            expected: params.threshold - 1,
            actual: coeffs.len(),
        });
    }
    for c in coeffs {
        params.field.check(c)?;
    }
    let values = (1..=params.paths)
        .map(|q| {
            let x = params.field.element(q as u64);
            // Horner, highest degree first
            coeffs.iter().rev().fold(params.field.zero(), |acc, &c| (acc + c) * x) + reading
        })
        .collect();
    Ok(SmaShareSet {
        values,
        params: *params,
    })
}

/// Recovers `P(0)` from the `t` lowest-indexed distinct shares.
pub fn reconstruct(shares: &[PathShare], params: &SmaParams) -> Result<FieldElement, SchemeError> {
    let distinct = distinct_by_path(shares, params.paths)?;
    if distinct.len() < params.threshold {
        return Err(SchemeError::InsufficientShares {
            needed: params.threshold,
            have: distinct.len(),
        });
    }
    let points: Vec<_> = distinct[..params.threshold]
        .iter()
        .map(|s| (params.field.element(s.path as u64), s.value))
        .collect();
    Ok(lagrange_at_zero(&points)?)
}

/// Adds two shares travelling on the same path.
pub fn aggregate(a: PathShare, b: PathShare) -> Result<PathShare, SchemeError> {
    if a.path != b.path {
        return Err(SchemeError::PathMismatch {
            left: a.path,
            right: b.path,
        });
    }
    Ok(PathShare::new(a.path, a.value.try_add(&b.value)?))
}

/// True when the observed shares are consistent with every candidate
/// reading equally often, i.e. they reveal nothing about it.
///
/// With `k < t` shares at distinct nonzero points, the unknown coefficients
/// `a_1..a_{t-1}` satisfy `k` equations whose matrix `[x_j^i]` has full row
/// rank, so each secret leaves a solution space of the same dimension.
pub fn leaks_nothing(observed: &[PathShare], params: &SmaParams) -> Result<bool, SchemeError> {
    let distinct = distinct_by_path(observed, params.paths)?;
    let k = distinct.len();
    if k >= params.threshold {
        return Ok(false);
    }
    if k == 0 {
        return Ok(true);
    }
    let f = params.field;
    let m = FieldMatrix::from_fn(f, k, params.threshold - 1, |j, i| {
        f.element(distinct[j].path as u64).pow(i as u64 + 1)
    });
    Ok(m.rank() == k)
}

/// Brute-force posterior: for every candidate secret, the number of
/// polynomials of degree `< t` whose evaluations match `observed`.
///
/// Only feasible for tiny fields; returns `None` when `modulus^t` exceeds
/// `limit`.
pub fn posterior_counts(observed: &[PathShare], params: &SmaParams, limit: u64) -> Option<Vec<u64>> {
    let f = params.field;
    let q = f.modulus();
    let t = params.threshold as u32;
    let total = q.checked_pow(t).filter(|&n| n <= limit)?;
    let mut counts = vec![0u64; q as usize];
    let mut coeffs = vec![0u64; t as usize];
    for _ in 0..total {
        let consistent = observed.iter().all(|s| {
            let x = f.element(s.path as u64);
            let y = coeffs.iter().rev().fold(f.zero(), |acc, &c| acc * x + f.element(c));
            y == s.value
        });
        if consistent {
            counts[coeffs[0] as usize] += 1;
        }
        // odometer increment
        for c in coeffs.iter_mut() {
            *c += 1;
            if *c < q {
                break;
            }
            *c = 0;
        }
    }
    Some(counts)
}
