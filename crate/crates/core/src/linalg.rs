//! Small dense complex matrices (K×K, K rarely above 10) and partially
//! pivoted LU with a 1-norm condition number.

use std::ops::{Index, IndexMut};

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Condition numbers above this mean the contour sits too close to the
/// spectrum for the kernel systems to be trusted.
pub const CONDITION_LIMIT: f64 = 1e12;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Square complex matrix, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct CMatrix {
    dim: usize,
    data: Vec<Complex64>,
}

impl CMatrix {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: vec![ZERO; dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m[(i, i)] = Complex64::new(1.0, 0.0);
        }
        m
    }

    pub fn from_fn(dim: usize, f: impl Fn(usize, usize) -> Complex64) -> Self {
        let mut data = Vec::with_capacity(dim * dim);
        for r in 0..dim {
            for c in 0..dim {
                data.push(f(r, c));
            }
        }
        Self { dim, data }
    }

    pub fn diagonal(values: &[Complex64]) -> Self {
        let mut m = Self::zeros(values.len());
        for (i, &v) in values.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.dim, |r, c| self[(c, r)])
    }

    pub fn conj(&self) -> Self {
        Self {
            dim: self.dim,
            data: self.data.iter().map(|v| v.conj()).collect(),
        }
    }

    pub fn scale(&self, s: Complex64) -> Self {
        Self {
            dim: self.dim,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    pub fn matmul(&self, other: &CMatrix) -> Self {
        let k = self.dim;
        let mut out = Self::zeros(k);
        for r in 0..k {
            for j in 0..k {
                let a = self[(r, j)];
                for c in 0..k {
                    out.data[r * k + c] += a * other.data[j * k + c];
                }
            }
        }
        out
    }

    pub fn sum(&self) -> Complex64 {
        self.data.iter().sum()
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.re.is_finite() && v.im.is_finite())
    }

    /// Largest entry modulus.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Max entry modulus of `self - other`.
    pub fn max_abs_diff(&self, other: &CMatrix) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// Maximum absolute column sum.
    pub fn norm_1(&self) -> f64 {
        (0..self.dim)
            .map(|c| (0..self.dim).map(|r| self[(r, c)].norm()).sum::<f64>())
            .fold(0.0, f64::max)
    }
}

impl Index<(usize, usize)> for CMatrix {
    type Output = Complex64;

    #[inline]
    fn index(&self, (r, c): (usize, usize)) -> &Complex64 {
        &self.data[r * self.dim + c]
    }
}

impl IndexMut<(usize, usize)> for CMatrix {
    #[inline]
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut Complex64 {
        &mut self.data[r * self.dim + c]
    }
}

/// LU factorization `P A = L U` with partial (row) pivoting.
#[derive(Clone, Debug)]
pub struct Lu {
    lu: CMatrix,
    perm: Vec<usize>,
    norm_1: f64,
}

impl Lu {
    /// Factors `a`; `None` if a pivot is exactly zero.
    pub fn factor(a: &CMatrix) -> Option<Self> {
        let k = a.dim;
        let norm_1 = a.norm_1();
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..k).collect();
        for col in 0..k {
            let (pivot, best) = (col..k)
                .map(|r| (r, lu[(r, col)].norm()))
                .fold((col, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
            if best == 0.0 || !best.is_finite() {
                return None;
            }
            if pivot != col {
                for c in 0..k {
                    lu.data.swap(col * k + c, pivot * k + c);
                }
                perm.swap(col, pivot);
            }
            let inv = lu[(col, col)].inv();
            for r in (col + 1)..k {
                let factor = lu[(r, col)] * inv;
                lu[(r, col)] = factor;
                if factor != ZERO {
                    for c in (col + 1)..k {
                        let u = lu[(col, c)];
                        lu[(r, c)] -= factor * u;
                    }
                }
            }
        }
        Some(Self { lu, perm, norm_1 })
    }

    pub fn dim(&self) -> usize {
        self.lu.dim
    }

    /// Solves `A x = b` in place.
    pub fn solve_in_place(&self, b: &mut [Complex64]) {
        let k = self.lu.dim;
        debug_assert_eq!(b.len(), k);
        let mut x: Vec<Complex64> = self.perm.iter().map(|&p| b[p]).collect();
        for r in 0..k {
            let mut acc = x[r];
            for c in 0..r {
                acc -= self.lu[(r, c)] * x[c];
            }
            x[r] = acc;
        }
        for r in (0..k).rev() {
            let mut acc = x[r];
            for c in (r + 1)..k {
                acc -= self.lu[(r, c)] * x[c];
            }
            x[r] = acc / self.lu[(r, r)];
        }
        b.copy_from_slice(&x);
    }

    pub fn solve(&self, b: &[Complex64]) -> Vec<Complex64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }

    /// Solves `A X = B` column by column.
    pub fn solve_matrix(&self, b: &CMatrix) -> CMatrix {
        let k = self.lu.dim;
        let mut out = CMatrix::zeros(k);
        let mut col = vec![ZERO; k];
        for c in 0..k {
            for r in 0..k {
                col[r] = b[(r, c)];
            }
            self.solve_in_place(&mut col);
            for r in 0..k {
                out[(r, c)] = col[r];
            }
        }
        out
    }

    pub fn inverse(&self) -> CMatrix {
        self.solve_matrix(&CMatrix::identity(self.lu.dim))
    }

    /// `‖A‖₁ ‖A⁻¹‖₁`, exact for the small sizes used here.
    pub fn condition_1(&self) -> f64 {
        self.norm_1 * self.inverse().norm_1()
    }
}

/// Factors `a` and rejects it when singular or worse conditioned than
/// [`CONDITION_LIMIT`]; `z` only labels the error.
pub fn checked_lu(a: &CMatrix, z: Complex64) -> Result<Lu> {
    let lu = Lu::factor(a).ok_or(Error::ContourTooClose {
        z,
        condition: f64::INFINITY,
    })?;
    let condition = lu.condition_1();
    if !condition.is_finite() || condition > CONDITION_LIMIT {
        return Err(Error::ContourTooClose { z, condition });
    }
    Ok(lu)
}

/// Inverse with the same conditioning guard as [`checked_lu`].
pub fn checked_inverse(a: &CMatrix, z: Complex64) -> Result<CMatrix> {
    Ok(checked_lu(a, z)?.inverse())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn solves_with_pivoting() {
        // zero leading entry forces a row swap
        let a = CMatrix::from_fn(2, |r, col| match (r, col) {
            (0, 0) => c(0.0, 0.0),
            (0, 1) => c(1.0, 1.0),
            (1, 0) => c(2.0, 0.0),
            _ => c(3.0, -1.0),
        });
        let lu = Lu::factor(&a).unwrap();
        let x = lu.solve(&[c(1.0, 0.0), c(0.0, 1.0)]);
        let back = [
            a[(0, 0)] * x[0] + a[(0, 1)] * x[1],
            a[(1, 0)] * x[0] + a[(1, 1)] * x[1],
        ];
        assert!((back[0] - c(1.0, 0.0)).norm() < 1e-15);
        assert!((back[1] - c(0.0, 1.0)).norm() < 1e-15);
    }

    #[test]
    fn singular_matrix_is_flagged() {
        let a = CMatrix::from_fn(2, |_, _| c(1.0, 2.0));
        assert!(Lu::factor(&a).is_none());
        assert!(matches!(
            checked_lu(&a, c(0.0, 1.0)),
            Err(Error::ContourTooClose { .. })
        ));
    }

    #[test]
    fn ill_conditioned_matrix_is_flagged() {
        let a = CMatrix::from_fn(2, |r, col| match (r, col) {
            (0, 0) => c(1.0, 0.0),
            (1, 1) => c(1e-14, 0.0),
            _ => c(0.0, 0.0),
        });
        let err = checked_lu(&a, c(0.0, 1.0)).unwrap_err();
        assert!(matches!(err, Error::ContourTooClose { condition, .. } if condition > 1e13));
    }

    #[test]
    fn identity_condition_is_one() {
        let lu = Lu::factor(&CMatrix::identity(4)).unwrap();
        assert!((lu.condition_1() - 1.0).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn inverse_times_matrix_is_identity(
            entries in proptest::collection::vec(-1.0f64..1.0, 2 * 36),
            k in 1usize..=6,
        ) {
            // diagonal shift keeps the draw comfortably nonsingular
            let a = CMatrix::from_fn(k, |r, col| {
                let i = 2 * (r * 6 + col);
                c(entries[i], entries[i + 1]) + if r == col { c(3.0, 0.0) } else { c(0.0, 0.0) }
            });
            let inv = checked_inverse(&a, c(0.0, 1.0)).unwrap();
            let prod = a.matmul(&inv);
            prop_assert!(prod.max_abs_diff(&CMatrix::identity(k)) < 1e-12);
        }
    }
}
