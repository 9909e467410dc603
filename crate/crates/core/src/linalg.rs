//! Small dense complex linear-algebra helpers on top of `nalgebra`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

/// Largest entrywise deviation `|m_ij - conj(m_ji)|`.
pub fn hermitian_asymmetry(m: &CMatrix) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in i..n {
            let d = (m[(i, j)] - m[(j, i)].conj()).norm();
            worst = worst.max(d);
        }
    }
    worst
}

/// Fails unless `m` is square and Hermitian to a tolerance relative to its largest entry.
pub fn ensure_hermitian(m: &CMatrix) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::Dimension { expected: m.nrows(), actual: m.ncols() });
    }
    let scale = m.iter().fold(0.0f64, |acc, z| acc.max(z.norm()));
    let asym = hermitian_asymmetry(m);
    if asym > 1e-10 * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::NotHermitian { asymmetry: asym });
    }
    Ok(())
}

/// Eigendecomposition of a Hermitian matrix; eigenvalues are real.
pub struct HermitianSpectrum {
    pub values: DVector<f64>,
    pub vectors: CMatrix,
}

impl HermitianSpectrum {
    pub fn new(m: &CMatrix) -> Self {
        // Symmetrize first so tiny rounding asymmetry cannot leak into the solver.
        let sym = (m + m.adjoint()).scale(0.5);
        let eig = SymmetricEigen::new(sym);
        Self { values: eig.eigenvalues, vectors: eig.eigenvectors }
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Rebuilds `U diag(f(lambda)) U^H`.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> CMatrix {
        let n = self.values.len();
        let mut scaled = self.vectors.clone();
        for j in 0..n {
            let w = f(self.values[j]);
            for i in 0..n {
                scaled[(i, j)] *= w;
            }
        }
        scaled * self.vectors.adjoint()
    }

    /// Hermitian PSD square root with negative eigenvalues clipped to zero.
    pub fn psd_sqrt(&self) -> CMatrix {
        self.map(|l| libm::sqrt(l.max(0.0)))
    }
}

pub fn psd_sqrt(m: &CMatrix) -> CMatrix {
    HermitianSpectrum::new(m).psd_sqrt()
}

pub fn min_eigenvalue(m: &CMatrix) -> f64 {
    HermitianSpectrum::new(m).min_value()
}

/// `Re(v^H M v)`.
pub fn quad_form(m: &CMatrix, v: &CVector) -> f64 {
    let mv = m * v;
    v.dotc(&mv).re
}

/// `tr(A B)` without forming the product.
pub fn trace_product(a: &CMatrix, b: &CMatrix) -> Complex64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for i in 0..a.nrows() {
        for k in 0..a.ncols() {
            acc += a[(i, k)] * b[(k, i)];
        }
    }
    acc
}

pub fn trace(m: &CMatrix) -> Complex64 {
    m.diagonal().iter().sum()
}

pub fn real_identity(n: usize) -> CMatrix {
    CMatrix::identity(n, n)
}

pub fn frobenius(m: &CMatrix) -> f64 {
    libm::sqrt(m.iter().map(|z| z.norm_sqr()).sum::<f64>())
}
