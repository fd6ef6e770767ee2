//! Small complex linear-algebra helpers on top of `nalgebra`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::{Error, Result};

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

pub const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
pub const ONE: C64 = C64 { re: 1.0, im: 0.0 };

#[inline]
pub fn cis(phase: f64) -> C64 {
    C64::from_polar(1.0, phase)
}

/// Solves `a x = b` for Hermitian positive-definite `a`, falling back to LU
/// when the Cholesky factorization breaks down.
pub fn solve_hpd(a: &CMat, b: &CMat) -> Result<CMat> {
    if let Some(chol) = a.clone().cholesky() {
        // The complex factorization takes complex square roots of
        // non-positive pivots instead of failing.
        let l = chol.l_dirty();
        if (0..l.nrows()).all(|i| l[(i, i)].re > 0.0 && l[(i, i)].im.abs() <= 1e-8 * l[(i, i)].re) {
            return Ok(chol.solve(b));
        }
    }
    a.clone()
        .lu()
        .solve(b)
        .ok_or_else(|| Error::Numerical(format!("singular {}x{} system", a.nrows(), a.ncols())))
}

/// Frobenius norm squared.
#[inline]
pub fn fro2(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum()
}

#[inline]
pub fn vec_norm2(v: &CVec) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}

/// Re{tr(a^H b)}.
pub fn real_inner(a: &CMat, b: &CMat) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x.conj() * y).re).sum()
}

/// Hermitian part `(m + m^H)/2`; cleans up round-off asymmetry.
pub fn hermitian_part(m: &CMat) -> CMat {
    (m + m.adjoint()) * C64::new(0.5, 0.0)
}

pub fn max_abs(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Constant complex matrix kept as separate real and imaginary parts so
/// products run on the real GEMM kernels.
#[derive(Debug, Clone)]
pub struct SplitMat {
    re: DMatrix<f64>,
    im: DMatrix<f64>,
}

impl SplitMat {
    pub fn new(m: &CMat) -> Self {
        Self {
            re: m.map(|z| z.re),
            im: m.map(|z| z.im),
        }
    }

    pub fn nrows(&self) -> usize {
        self.re.nrows()
    }

    /// `x * self`.
    pub fn left_mul(&self, x: &CMat) -> CMat {
        let xr = x.map(|z| z.re);
        let xi = x.map(|z| z.im);
        let mut re = &xr * &self.re;
        re.gemm(-1.0, &xi, &self.im, 1.0);
        let mut im = &xr * &self.im;
        im.gemm(1.0, &xi, &self.re, 1.0);
        re.zip_map(&im, C64::new)
    }
}
