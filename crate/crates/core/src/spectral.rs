//! Real-arithmetic eigendecomposition of Hermitian Toeplitz correlation matrices.
//!
//! A Hermitian Toeplitz `R` satisfies `J R J = conj(R)` with `J` the exchange matrix.
//! The sparse unitary `Q` below has `J conj(Q) = Q`, so `Q^H R Q` is real symmetric and
//! `R = (Q W) diag(lambda) (Q W)^H` with a real orthogonal `W`.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::FRAC_1_SQRT_2;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use crate::linalg::CMatrix;
use crate::propagation::toeplitz_entry;

/// Components with eigenvalue below this fraction of the largest one are dropped.
pub const RANK_TOLERANCE: f64 = 1e-12;

#[inline]
fn pairs(n: usize) -> (usize, usize) {
    (n / 2, n % 2)
}

/// `Q^H v`.
pub fn q_adjoint(v: &[Complex64], out: &mut [Complex64]) {
    let n = v.len();
    let (h, odd) = pairs(n);
    for i in 0..h {
        let (a, b) = (v[i], v[n - 1 - i]);
        out[i] = (a + b) * FRAC_1_SQRT_2;
        let d = (a - b) * FRAC_1_SQRT_2;
        out[h + odd + i] = Complex64::new(d.im, -d.re);
    }
    if odd == 1 {
        out[h] = v[h];
    }
}

/// `Q x`.
pub fn q_apply(x: &[Complex64], out: &mut [Complex64]) {
    let n = x.len();
    let (h, odd) = pairs(n);
    for i in 0..h {
        let s = x[i];
        let t = x[h + odd + i];
        let it = Complex64::new(-t.im, t.re);
        out[i] = (s + it) * FRAC_1_SQRT_2;
        out[n - 1 - i] = (s - it) * FRAC_1_SQRT_2;
    }
    if odd == 1 {
        out[h] = x[h];
    }
}

// Nonzeros of column j of Q.
fn q_column(n: usize, j: usize) -> [(usize, Complex64); 2] {
    let (h, odd) = pairs(n);
    let s = FRAC_1_SQRT_2;
    let zero = (usize::MAX, Complex64::new(0.0, 0.0));
    if j < h {
        [(j, Complex64::new(s, 0.0)), (n - 1 - j, Complex64::new(s, 0.0))]
    } else if odd == 1 && j == h {
        [(h, Complex64::new(1.0, 0.0)), zero]
    } else {
        let i = j - h - odd;
        [(i, Complex64::new(0.0, s)), (n - 1 - i, Complex64::new(0.0, -s))]
    }
}

/// `Q^H R Q` for the Hermitian Toeplitz `R` with first column `column`; real symmetric.
pub fn real_form(column: &[Complex64]) -> DMatrix<f64> {
    let n = column.len();
    let cols: Vec<_> = (0..n).map(|j| q_column(n, j)).collect();
    DMatrix::from_fn(n, n, |j, k| {
        let mut acc = Complex64::new(0.0, 0.0);
        for &(m, a) in &cols[j] {
            if m == usize::MAX {
                continue;
            }
            for &(p, b) in &cols[k] {
                if p == usize::MAX {
                    continue;
                }
                acc += a.conj() * toeplitz_entry(column, m, p) * b;
            }
        }
        acc.re
    })
}

/// Eigen-pairs of a Hermitian Toeplitz correlation matrix, with negligible ones dropped.
#[derive(Debug, Clone)]
pub struct ToeplitzSpectrum {
    antennas: usize,
    /// Every eigenvalue, clipped at zero.
    all_values: Vec<f64>,
    /// Eigenvalues of the kept components.
    values: Vec<f64>,
    /// Real `N x r` basis; eigenvectors of `R` are `Q w_i`.
    basis: DMatrix<f64>,
    min_raw: f64,
}

impl ToeplitzSpectrum {
    pub fn new(column: &[Complex64]) -> Self {
        let n = column.len();
        let eig = SymmetricEigen::new(real_form(column));
        let min_raw = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
        let all_values: Vec<f64> = eig.eigenvalues.iter().map(|&l| l.max(0.0)).collect();
        let top = all_values.iter().copied().fold(0.0, f64::max);
        let kept: Vec<usize> = (0..n).filter(|&i| top > 0.0 && all_values[i] > RANK_TOLERANCE * top).collect();
        let mut basis = DMatrix::zeros(n, kept.len());
        for (c, &i) in kept.iter().enumerate() {
            basis.set_column(c, &eig.eigenvectors.column(i));
        }
        let values = kept.iter().map(|&i| all_values[i]).collect();
        Self { antennas: n, all_values, values, basis, min_raw }
    }

    pub fn antennas(&self) -> usize {
        self.antennas
    }

    pub fn rank(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn all_values(&self) -> &[f64] {
        &self.all_values
    }

    /// Smallest eigenvalue before clipping.
    pub fn min_raw_value(&self) -> f64 {
        self.min_raw
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    /// `y = W^T Q^H v`; coordinates of `v` along the kept eigenvectors.
    pub fn coordinates(&self, v: &[Complex64], scratch: &mut [Complex64], out: &mut [Complex64]) {
        q_adjoint(v, scratch);
        for (c, o) in out.iter_mut().enumerate().take(self.rank()) {
            let w = self.basis.column(c);
            let mut acc = Complex64::new(0.0, 0.0);
            for (m, x) in scratch.iter().enumerate() {
                acc += *x * w[m];
            }
            *o = acc;
        }
    }

    /// `sum_i weights[i] |w_i^T x|^2` for an already rotated `x = Q^H v`; the
    /// quadratic form of `v` with `Q W diag(weights) W^T Q^H`.
    pub fn rotated_energy(&self, x: &[Complex64], weights: &[f64]) -> f64 {
        let mut acc = 0.0;
        for (c, &w) in weights.iter().enumerate().take(self.rank()) {
            let col = self.basis.column(c);
            let mut y = Complex64::new(0.0, 0.0);
            for (m, xm) in x.iter().enumerate() {
                y += *xm * col[m];
            }
            acc += w * y.norm_sqr();
        }
        acc
    }

    /// `Q W c`; the vector with coordinates `c` along the kept eigenvectors.
    pub fn synthesize(&self, c: &[Complex64], scratch: &mut [Complex64], out: &mut [Complex64]) {
        scratch.iter_mut().for_each(|s| *s = Complex64::new(0.0, 0.0));
        for (j, cj) in c.iter().enumerate().take(self.rank()) {
            let w = self.basis.column(j);
            for (m, s) in scratch.iter_mut().enumerate() {
                *s += *cj * w[m];
            }
        }
        q_apply(scratch, out);
    }

    /// Sums `s(d) = sum_n M[n + d, n]`, `d >= 0`, of `M = Q W diag(weights) W^T Q^H`.
    pub fn weighted_diagonal_sums(&self, weights: &[f64]) -> Vec<Complex64> {
        let n = self.antennas;
        let r = self.rank();
        // P = W diag(weights) W^T, real symmetric
        let mut scaled = self.basis.clone();
        for j in 0..r {
            let w = weights[j];
            scaled.column_mut(j).iter_mut().for_each(|x| *x *= w);
        }
        let p = &scaled * self.basis.transpose();
        let rows: Vec<_> = (0..n).map(|m| q_row(n, m)).collect();
        let mut sums = vec![Complex64::new(0.0, 0.0); n];
        for m in 0..n {
            for k in 0..=m {
                // M[m, k] = sum_{j,l} Q[m, j] P[j, l] conj(Q[k, l])
                let mut acc = Complex64::new(0.0, 0.0);
                for &(j, a) in &rows[m] {
                    if j == usize::MAX {
                        continue;
                    }
                    for &(l, b) in &rows[k] {
                        if l == usize::MAX {
                            continue;
                        }
                        acc += a * p[(j, l)] * b.conj();
                    }
                }
                sums[m - k] += acc;
            }
        }
        sums
    }

    /// Dense `Q W diag(weights) W^T Q^H`.
    pub fn weighted_matrix(&self, weights: &[f64]) -> CMatrix {
        let n = self.antennas;
        let r = self.rank();
        let mut u = CMatrix::zeros(n, r);
        let mut scratch = vec![Complex64::new(0.0, 0.0); n];
        let mut out = vec![Complex64::new(0.0, 0.0); n];
        for j in 0..r {
            let col: Vec<Complex64> = self.basis.column(j).iter().map(|&x| Complex64::new(x, 0.0)).collect();
            scratch.copy_from_slice(&col);
            q_apply(&scratch, &mut out);
            u.set_column(j, &nalgebra::DVector::from_column_slice(&out));
        }
        let mut scaled = u.clone();
        for j in 0..r {
            let w = Complex64::new(weights[j], 0.0);
            scaled.column_mut(j).iter_mut().for_each(|x| *x *= w);
        }
        scaled * u.adjoint()
    }
}

// Nonzeros of row m of Q.
fn q_row(n: usize, m: usize) -> [(usize, Complex64); 2] {
    let (h, odd) = pairs(n);
    let s = FRAC_1_SQRT_2;
    if odd == 1 && m == h {
        return [(h, Complex64::new(1.0, 0.0)), (usize::MAX, Complex64::new(0.0, 0.0))];
    }
    if m < h {
        [(m, Complex64::new(s, 0.0)), (h + odd + m, Complex64::new(0.0, s))]
    } else {
        let i = n - 1 - m;
        [(i, Complex64::new(s, 0.0)), (h + odd + i, Complex64::new(0.0, -s))]
    }
}

/// `tr(R M)` for Hermitian Toeplitz `R` (first column `r`) and Hermitian `M` with
/// lower diagonal sums `s`.
pub fn toeplitz_trace(r: &[Complex64], s: &[Complex64]) -> f64 {
    let mut acc = r[0].re * s[0].re;
    let mut off = 0.0;
    for d in 1..r.len() {
        off += r[d].re * s[d].re + r[d].im * s[d].im;
    }
    acc += 2.0 * off;
    acc
}

/// Lower diagonal sums of `v v^H`: `s(d) = sum_n v[n + d] conj(v[n])`.
pub fn outer_diagonal_sums(v: &[Complex64], out: &mut [Complex64]) {
    let n = v.len();
    for d in 0..n {
        let mut acc = Complex64::new(0.0, 0.0);
        for k in 0..n - d {
            acc += v[k + d] * v[k].conj();
        }
        out[d] = acc;
    }
}
