//! Prime-field arithmetic and the small amount of linear algebra the
//! schemes need: Gaussian elimination over GF(p) and Lagrange
//! interpolation at zero.
//!
//! Elements carry their modulus so that mixing values from two differently
//! configured fields is caught at runtime. The `try_*` methods report a
//! mismatch as [`FieldError::FieldMismatch`]; the operator impls (`+`, `-`,
//! `*`) panic on it and are meant for code that already validated its inputs.

use std::fmt;
use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FieldError {
    #[error("modulus {0} is not prime")]
    NotPrime(u64),
    #[error("modulus {0} is too small (need a prime >= 3)")]
    ModulusTooSmall(u64),
    #[error("operands belong to different fields (GF({left}) vs GF({right}))")]
    FieldMismatch { left: u64, right: u64 },
    #[error("zero has no multiplicative inverse")]
    ZeroInverse,
    #[error("matrix is singular")]
    Singular,
    #[error("matrix is {rows}x{cols}, expected a square matrix")]
    NotSquare { rows: usize, cols: usize },
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("interpolation needs at least one point")]
    NoPoints,
    #[error("evaluation point x = 0 is reserved for the secret")]
    ZeroAbscissa,
    #[error("duplicate evaluation point x = {0}")]
    DuplicateAbscissa(u64),
}

/// Deterministic Miller-Rabin; these bases are exact for every `u64`.
pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    const BASES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];
    for &b in &BASES {
        if n == b {
            return true;
        }
        if n.is_multiple_of(b) {
            return false;
        }
    }
    let mut d = n - 1;
    let mut r = 0;
    while d.is_multiple_of(2) {
        d /= 2;
        r += 1;
    }
    'witness: for &a in &BASES {
        let mut x = pow_mod(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..r {
            x = mul_mod(x, x, n);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

#[inline]
fn mul_mod(a: u64, b: u64, m: u64) -> u64 {
    ((a as u128 * b as u128) % m as u128) as u64
}

#[inline]
fn add_mod(a: u64, b: u64, m: u64) -> u64 {
    ((a as u128 + b as u128) % m as u128) as u64
}

fn pow_mod(mut base: u64, mut exp: u64, m: u64) -> u64 {
    let mut acc = 1 % m;
    base %= m;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = mul_mod(acc, base, m);
        }
        base = mul_mod(base, base, m);
        exp >>= 1;
    }
    acc
}

/// GF(p) for a word-sized prime p.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u64", into = "u64")]
pub struct PrimeField {
    modulus: u64,
}

impl PrimeField {
    /// 2^31 - 1.
    pub const DEFAULT_MODULUS: u64 = 2_147_483_647;

    pub fn new(modulus: u64) -> Result<Self, FieldError> {
        if modulus < 3 {
            return Err(FieldError::ModulusTooSmall(modulus));
        }
        if !is_prime(modulus) {
            return Err(FieldError::NotPrime(modulus));
        }
        Ok(Self { modulus })
    }

    pub fn modulus(&self) -> u64 {
        self.modulus
    }

    /// Reduces `value` into the field.
    pub fn element(&self, value: u64) -> FieldElement {
        FieldElement {
            value: value % self.modulus,
            modulus: self.modulus,
        }
    }

    pub fn zero(&self) -> FieldElement {
        self.element(0)
    }

    pub fn one(&self) -> FieldElement {
        self.element(1)
    }

    pub fn random<R: Rng + ?Sized>(&self, rng: &mut R) -> FieldElement {
        self.element(rng.gen_range(0..self.modulus))
    }

    pub fn contains(&self, x: &FieldElement) -> bool {
        x.modulus == self.modulus
    }

    pub(crate) fn check(&self, x: &FieldElement) -> Result<(), FieldError> {
        if self.contains(x) {
            Ok(())
        } else {
            Err(FieldError::FieldMismatch {
                left: self.modulus,
                right: x.modulus,
            })
        }
    }

    /// Sums an iterator of elements, starting from zero.
    pub fn sum<I: IntoIterator<Item = FieldElement>>(&self, it: I) -> Result<FieldElement, FieldError> {
        it.into_iter().try_fold(self.zero(), |acc, x| acc.try_add(&x))
    }
}

impl Default for PrimeField {
    fn default() -> Self {
        Self {
            modulus: Self::DEFAULT_MODULUS,
        }
    }
}

impl TryFrom<u64> for PrimeField {
    type Error = FieldError;

    fn try_from(modulus: u64) -> Result<Self, Self::Error> {
        Self::new(modulus)
    }
}

impl From<PrimeField> for u64 {
    fn from(f: PrimeField) -> u64 {
        f.modulus
    }
}

impl fmt::Display for PrimeField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "GF({})", self.modulus)
    }
}

/// A residue in `[0, modulus)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FieldElement {
    value: u64,
    modulus: u64,
}

impl FieldElement {
    pub fn value(&self) -> u64 {
        self.value
    }

    pub fn field(&self) -> PrimeField {
        PrimeField {
            modulus: self.modulus,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.value == 0
    }

    fn same_field(&self, other: &Self) -> Result<(), FieldError> {
        if self.modulus == other.modulus {
            Ok(())
        } else {
            Err(FieldError::FieldMismatch {
                left: self.modulus,
                right: other.modulus,
            })
        }
    }

    fn with(&self, value: u64) -> Self {
        Self {
            value,
            modulus: self.modulus,
        }
    }

    pub fn try_add(&self, other: &Self) -> Result<Self, FieldError> {
        self.same_field(other)?;
        Ok(self.with(add_mod(self.value, other.value, self.modulus)))
    }

    pub fn try_sub(&self, other: &Self) -> Result<Self, FieldError> {
        self.same_field(other)?;
        Ok(self.with(add_mod(self.value, other.neg().value, self.modulus)))
    }

    pub fn try_mul(&self, other: &Self) -> Result<Self, FieldError> {
        self.same_field(other)?;
        Ok(self.with(mul_mod(self.value, other.value, self.modulus)))
    }

    pub fn try_div(&self, other: &Self) -> Result<Self, FieldError> {
        self.same_field(other)?;
        self.try_mul(&other.inv()?)
    }

    pub fn neg(&self) -> Self {
        if self.value == 0 {
            *self
        } else {
            self.with(self.modulus - self.value)
        }
    }

    /// Multiplicative inverse via Fermat's little theorem.
    pub fn inv(&self) -> Result<Self, FieldError> {
        if self.value == 0 {
            return Err(FieldError::ZeroInverse);
        }
        Ok(self.pow(self.modulus - 2))
    }

    pub fn pow(&self, exp: u64) -> Self {
        self.with(pow_mod(self.value, exp, self.modulus))
    }
}

impl fmt::Display for FieldElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.value)
    }
}

impl Add for FieldElement {
    type Output = FieldElement;

    fn add(self, rhs: Self) -> Self {
        self.try_add(&rhs).expect("field mismatch in `+`")
    }
}

impl AddAssign for FieldElement {
    fn add_assign(&mut self, rhs: Self) {
        *self = *self + rhs;
    }
}

impl Sub for FieldElement {
    type Output = FieldElement;

    fn sub(self, rhs: Self) -> Self {
        self.try_sub(&rhs).expect("field mismatch in `-`")
    }
}

impl Mul for FieldElement {
    type Output = FieldElement;

    fn mul(self, rhs: Self) -> Self {
        self.try_mul(&rhs).expect("field mismatch in `*`")
    }
}

impl Neg for FieldElement {
    type Output = FieldElement;

    fn neg(self) -> Self {
        FieldElement::neg(&self)
    }
}

/// Dense row-major matrix over a single prime field.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldMatrix {
    field: PrimeField,
    rows: usize,
    cols: usize,
    entries: Vec<u64>,
}

impl FieldMatrix {
    pub fn zeros(field: PrimeField, rows: usize, cols: usize) -> Self {
        Self {
            field,
            rows,
            cols,
            entries: vec![0; rows * cols],
        }
    }

    pub fn identity(field: PrimeField, n: usize) -> Self {
        let mut m = Self::zeros(field, n, n);
        for i in 0..n {
            m.entries[i * n + i] = 1;
        }
        m
    }

    /// Builds a matrix from raw integers, reducing each one into the field.
    pub fn from_rows(field: PrimeField, rows: &[Vec<u64>]) -> Result<Self, FieldError> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        let mut entries = Vec::with_capacity(r * c);
        for row in rows {
            if row.len() != c {
                return Err(FieldError::DimensionMismatch {
                    expected: c,
                    actual: row.len(),
                });
            }
            entries.extend(row.iter().map(|&v| v % field.modulus()));
        }
        Ok(Self {
            field,
            rows: r,
            cols: c,
            entries,
        })
    }

    pub fn from_fn(field: PrimeField, rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> FieldElement) -> Self {
        let mut m = Self::zeros(field, rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                let x = f(i, j);
                assert!(field.contains(&x), "entry from another field");
                m.entries[i * cols + j] = x.value();
            }
        }
        m
    }

    pub fn field(&self) -> PrimeField {
        self.field
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, row: usize, col: usize) -> FieldElement {
        self.field.element(self.entries[row * self.cols + col])
    }

    pub fn set(&mut self, row: usize, col: usize, x: FieldElement) -> Result<(), FieldError> {
        self.field.check(&x)?;
        self.entries[row * self.cols + col] = x.value();
        Ok(())
    }

    /// Sub-matrix made of the listed columns, in the given order.
    pub fn select_columns(&self, cols: &[usize]) -> Self {
        Self::from_fn(self.field, self.rows, cols.len(), |i, j| self.get(i, cols[j]))
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.field, self.cols, self.rows, |i, j| self.get(j, i))
    }

    /// `self * x` for a column vector `x`.
    pub fn mul_vec(&self, x: &[FieldElement]) -> Result<Vec<FieldElement>, FieldError> {
        if x.len() != self.cols {
            return Err(FieldError::DimensionMismatch {
                expected: self.cols,
                actual: x.len(),
            });
        }
        for v in x {
            self.field.check(v)?;
        }
        let m = self.field.modulus();
        Ok((0..self.rows)
            .map(|i| {
                let row = &self.entries[i * self.cols..(i + 1) * self.cols];
                let acc = row
                    .iter()
                    .zip(x)
                    .fold(0u128, |acc, (&a, b)| (acc + a as u128 * b.value() as u128) % m as u128);
                self.field.element(acc as u64)
            })
            .collect())
    }

    /// `x * self` for a row vector `x`.
    pub fn vec_mul(&self, x: &[FieldElement]) -> Result<Vec<FieldElement>, FieldError> {
        self.transpose().mul_vec(x)
    }

    pub fn rank(&self) -> usize {
        let (n, m) = (self.rows, self.cols);
        let p = self.field.modulus();
        let mut a = self.entries.clone();
        let mut rank = 0;
        for col in 0..m {
            let Some(pivot) = (rank..n).find(|&r| a[r * m + col] != 0) else {
                continue;
            };
            for j in 0..m {
                a.swap(pivot * m + j, rank * m + j);
            }
            let inv = pow_mod(a[rank * m + col], p - 2, p);
            for r in rank + 1..n {
                let factor = mul_mod(a[r * m + col], inv, p);
                for j in col..m {
                    let sub = mul_mod(factor, a[rank * m + j], p);
                    a[r * m + j] = add_mod(a[r * m + j], p - sub, p);
                }
            }
            rank += 1;
            if rank == n {
                break;
            }
        }
        rank
    }

    /// Determinant by elimination; zero iff the matrix is singular.
    pub fn determinant(&self) -> Result<FieldElement, FieldError> {
        if self.rows != self.cols {
            return Err(FieldError::NotSquare {
                rows: self.rows,
                cols: self.cols,
            });
        }
        let n = self.rows;
        let p = self.field.modulus();
        let mut a = self.entries.clone();
        let mut det = 1u64;
        for col in 0..n {
            let Some(pivot) = (col..n).find(|&r| a[r * n + col] != 0) else {
                return Ok(self.field.zero());
            };
            if pivot != col {
                for j in 0..n {
                    a.swap(pivot * n + j, col * n + j);
                }
                det = (p - det) % p;
            }
            let pv = a[col * n + col];
            det = mul_mod(det, pv, p);
            let inv = pow_mod(pv, p - 2, p);
            for r in col + 1..n {
                let factor = mul_mod(a[r * n + col], inv, p);
                if factor == 0 {
                    continue;
                }
                for j in col..n {
                    let sub = mul_mod(factor, a[col * n + j], p);
                    a[r * n + j] = add_mod(a[r * n + j], p - sub, p);
                }
            }
        }
        Ok(self.field.element(det))
    }
}

/// Solves `coeffs * x = rhs` by Gauss-Jordan elimination.
///
/// Any nonzero pivot will do; there is no rounding to guard against.
pub fn solve_linear(coeffs: &FieldMatrix, rhs: &[FieldElement]) -> Result<Vec<FieldElement>, FieldError> {
    let n = coeffs.rows;
    if coeffs.cols != n {
        return Err(FieldError::NotSquare {
            rows: coeffs.rows,
            cols: coeffs.cols,
        });
    }
    if rhs.len() != n {
        return Err(FieldError::DimensionMismatch {
            expected: n,
            actual: rhs.len(),
        });
    }
    let field = coeffs.field;
    for v in rhs {
        field.check(v)?;
    }
    let p = field.modulus();
    let w = n + 1;
    // augmented [A | b]
    let mut a = vec![0u64; n * w];
    for i in 0..n {
        a[i * w..i * w + n].copy_from_slice(&coeffs.entries[i * n..(i + 1) * n]);
        a[i * w + n] = rhs[i].value();
    }
    for col in 0..n {
        let pivot = (col..n).find(|&r| a[r * w + col] != 0).ok_or(FieldError::Singular)?;
        if pivot != col {
            for j in 0..w {
                a.swap(pivot * w + j, col * w + j);
            }
        }
        let inv = pow_mod(a[col * w + col], p - 2, p);
        for j in col..w {
            a[col * w + j] = mul_mod(a[col * w + j], inv, p);
        }
        for r in 0..n {
            if r == col {
                continue;
            }
            let factor = a[r * w + col];
            if factor == 0 {
                continue;
            }
            for j in col..w {
                let sub = mul_mod(factor, a[col * w + j], p);
                a[r * w + j] = add_mod(a[r * w + j], p - sub, p);
            }
        }
    }
    Ok((0..n).map(|i| field.element(a[i * w + n])).collect())
}

/// Value at zero of the unique polynomial of degree < `points.len()` through
/// `points`.
pub fn lagrange_at_zero(points: &[(FieldElement, FieldElement)]) -> Result<FieldElement, FieldError> {
    let Some(&(x0, _)) = points.first() else {
        return Err(FieldError::NoPoints);
    };
    let field = x0.field();
    for (i, (x, y)) in points.iter().enumerate() {
        field.check(x)?;
        field.check(y)?;
        if x.is_zero() {
            return Err(FieldError::ZeroAbscissa);
        }
        if points[..i].iter().any(|(other, _)| other == x) {
            return Err(FieldError::DuplicateAbscissa(x.value()));
        }
    }
    let mut acc = field.zero();
    for (j, &(xj, yj)) in points.iter().enumerate() {
        let mut num = field.one();
        let mut den = field.one();
        for (m, &(xm, _)) in points.iter().enumerate() {
            if m != j {
                num = num * xm;
                den = den * (xm - xj);
            }
        }
        acc += yj * num * den.inv()?;
    }
    Ok(acc)
}

/// Lagrange basis coefficients `L_j(0)` for the given abscissas.
pub fn lagrange_weights_at_zero(xs: &[FieldElement]) -> Result<Vec<FieldElement>, FieldError> {
    let Some(first) = xs.first() else {
        return Err(FieldError::NoPoints);
    };
    let field = first.field();
    (0..xs.len())
        .map(|j| {
            let mut basis = vec![(xs[j], field.one())];
            basis.extend(xs.iter().enumerate().filter(|&(m, _)| m != j).map(|(_, &x)| (x, field.zero())));
            lagrange_at_zero(&basis)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gf(p: u64) -> PrimeField {
        PrimeField::new(p).unwrap()
    }

    #[test]
    fn primality() {
        assert!(is_prime(2_147_483_647));
        assert!(is_prime(18_446_744_073_709_551_557));
        assert!(!is_prime(2_147_483_649));
        assert!(!is_prime(3_215_031_751)); // strong pseudoprime to 2, 3, 5, 7
        assert!(PrimeField::new(2).is_err());
        assert!(matches!(PrimeField::new(15), Err(FieldError::NotPrime(15))));
    }

    #[test]
    fn gf7_examples() {
        let f = gf(7);
        let e = |v| f.element(v);
        assert_eq!(e(0) + e(5), e(5));
        assert_eq!(e(3) + e(5), e(1));
        assert_eq!(e(6) + e(1), e(0));
        assert_eq!(e(1) * e(6), e(6));
        assert_eq!(e(3) * e(5), e(1));
        assert_eq!(e(0).neg(), e(0));
        assert_eq!(e(1).inv().unwrap(), e(1));
        assert_eq!(e(3).inv().unwrap(), e(5));
        assert_eq!(e(0).inv(), Err(FieldError::ZeroInverse));
    }

    #[test]
    fn gf7_tables_against_integer_arithmetic() {
        let f = gf(7);
        for a in 0..7 {
            for b in 0..7 {
                assert_eq!((f.element(a) + f.element(b)).value(), (a + b) % 7);
                assert_eq!((f.element(a) * f.element(b)).value(), (a * b) % 7);
                assert_eq!((f.element(a) - f.element(b)).value(), (a + 7 - b) % 7);
            }
        }
    }

    #[test]
    fn cross_field_is_rejected() {
        let a = gf(7).element(3);
        let b = gf(11).element(3);
        assert_eq!(a.try_add(&b), Err(FieldError::FieldMismatch { left: 7, right: 11 }));
        assert!(a.try_mul(&b).is_err());
        assert!(a.try_sub(&b).is_err());
        assert!(lagrange_at_zero(&[(a, a), (b, b)]).is_err());
    }

    #[test]
    fn solve_examples() {
        let f = gf(7);
        let id = FieldMatrix::identity(f, 2);
        let x = solve_linear(&id, &[f.element(4), f.element(2)]).unwrap();
        assert_eq!(x, vec![f.element(4), f.element(2)]);

        let m = FieldMatrix::from_rows(f, &[vec![1, 1], vec![1, 2]]).unwrap();
        let x = solve_linear(&m, &[f.element(0), f.element(4)]).unwrap();
        assert_eq!(x, vec![f.element(3), f.element(4)]);

        let singular = FieldMatrix::from_rows(f, &[vec![1, 1], vec![2, 2]]).unwrap();
        assert_eq!(solve_linear(&singular, &[f.element(1), f.element(2)]), Err(FieldError::Singular));
        assert!(singular.determinant().unwrap().is_zero());
    }

    #[test]
    fn solve_needs_row_swap() {
        let f = gf(7);
        let m = FieldMatrix::from_rows(f, &[vec![0, 1], vec![1, 0]]).unwrap();
        let x = solve_linear(&m, &[f.element(2), f.element(5)]).unwrap();
        assert_eq!(x, vec![f.element(5), f.element(2)]);
        assert_eq!(m.determinant().unwrap(), f.element(6));
    }

    #[test]
    fn lagrange_examples() {
        let f = gf(11);
        assert_eq!(lagrange_at_zero(&[(f.element(1), f.element(9))]).unwrap(), f.element(9));

        let f = gf(251);
        let pts = [(f.element(1), f.element(105)), (f.element(3), f.element(115))];
        assert_eq!(lagrange_at_zero(&pts).unwrap(), f.element(100));

        let f = gf(7);
        let pts = [(f.element(1), f.element(5)), (f.element(2), f.element(0))];
        assert_eq!(lagrange_at_zero(&pts).unwrap(), f.element(3));
    }

    #[test]
    fn lagrange_rejects_bad_points() {
        let f = gf(7);
        assert_eq!(lagrange_at_zero(&[]), Err(FieldError::NoPoints));
        assert_eq!(
            lagrange_at_zero(&[(f.element(0), f.element(1))]),
            Err(FieldError::ZeroAbscissa)
        );
        assert_eq!(
            lagrange_at_zero(&[(f.element(2), f.element(1)), (f.element(2), f.element(3))]),
            Err(FieldError::DuplicateAbscissa(2))
        );
    }

    #[test]
    fn weights_sum_to_one() {
        let f = gf(251);
        let xs: Vec<_> = (1..=5).map(|x| f.element(x)).collect();
        let w = lagrange_weights_at_zero(&xs).unwrap();
        assert_eq!(f.sum(w).unwrap(), f.one());
    }

    #[test]
    fn modulus_serde_validates() {
        let f: PrimeField = serde_json::from_str("7").unwrap();
        assert_eq!(f.modulus(), 7);
        assert!(serde_json::from_str::<PrimeField>("8").is_err());
    }
}
