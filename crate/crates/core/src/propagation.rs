//! Large-scale gains, Gaussian local-scattering correlation and correlated Rayleigh draws.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::{PI, TAU};

use num_complex::Complex64;
use rand_core::RngCore;

use crate::config::{PathLossParams, ScenarioConfig};
use crate::error::{domain, Result};
use crate::geometry::Point;
use crate::linalg::{ensure_hermitian, trace, CMatrix, CVector, HermitianSpectrum};
use crate::rng::{complex_normal_vector, standard_normal};


/// Spatial correlation of one node array towards one user.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix {
    entries: CMatrix,
}

impl CorrelationMatrix {
    pub fn new(entries: CMatrix) -> Result<Self> {
        ensure_hermitian(&entries)?;
        Ok(Self { entries })
    }

    /// Hermitian Toeplitz matrix from its first column `r(d) = R[d, 0]`.
    pub fn from_toeplitz(column: &[Complex64]) -> Self {
        let n = column.len();
        let entries = CMatrix::from_fn(n, n, |m, k| toeplitz_entry(column, m, k));
        Self { entries }
    }

    pub fn entries(&self) -> &CMatrix {
        &self.entries
    }

    pub fn into_entries(self) -> CMatrix {
        self.entries
    }

    pub fn node_antennas(&self) -> usize {
        self.entries.nrows()
    }

    pub fn trace(&self) -> f64 {
        trace(&self.entries).re
    }
}

#[inline]
pub(crate) fn toeplitz_entry(column: &[Complex64], m: usize, k: usize) -> Complex64 {
    if m >= k {
        column[m - k]
    } else {
        column[k - m].conj()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LargeScale {
    /// Linear power gain.
    pub beta: f64,
    pub pathloss_db: f64,
    pub shadow_db: f64,
    /// Angle of the user off the array broadside, radians in `(-pi, pi]`.
    pub nominal_angle: f64,
}

impl LargeScale {
    pub fn compose(pathloss_db: f64, shadow_db: f64, nominal_angle: f64) -> Self {
        Self {
            beta: libm::pow(10.0, (-pathloss_db + shadow_db) / 10.0),
            pathloss_db,
            shadow_db,
            nominal_angle,
        }
    }
}

/// Three-slope COST-Hata loss in dB at distance `d` meters.
///
/// `l_ref + 35 log10(d/1 km)` beyond `d1`, 20 dB/decade between `d0` and `d1`,
/// flat below `d0`; continuous at both breakpoints.
pub fn path_loss_db(d: f64, model: &PathLossParams) -> Result<f64> {
    if !(d > 0.0) || !d.is_finite() {
        return Err(domain("path loss needs a positive distance"));
    }
    let km = |x: f64| x / 1000.0;
    let loss = if d > model.d1 {
        model.l_ref + 35.0 * libm::log10(km(d))
    } else if d > model.d0 {
        model.l_ref + 15.0 * libm::log10(km(model.d1)) + 20.0 * libm::log10(km(d))
    } else {
        model.l_ref + 15.0 * libm::log10(km(model.d1)) + 20.0 * libm::log10(km(model.d0))
    };
    Ok(loss)
}

/// Distance-dependent part of the channel model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkBudget {
    pub pathloss: PathLossParams,
    pub shadowing_std: f64,
    pub min_distance: f64,
}

impl LinkBudget {
    pub fn from_config(cfg: &ScenarioConfig) -> Self {
        Self { pathloss: cfg.pathloss, shadowing_std: cfg.shadowing_std, min_distance: cfg.min_distance }
    }

    /// Path loss, a fresh shadowing draw and the user's angle off the node's broadside.
    pub fn large_scale<R: RngCore + ?Sized>(
        &self,
        node: Point,
        orientation: f64,
        user: Point,
        rng: &mut R,
    ) -> LargeScale {
        let d = node.distance(user).max(self.min_distance);
        let pl = path_loss_db(d, &self.pathloss).expect("clamped distance is positive");
        let shadow = if self.shadowing_std > 0.0 { self.shadowing_std * standard_normal(rng) } else { 0.0 };
        LargeScale::compose(pl, shadow, wrap_angle(node.bearing_to(user) - orientation))
    }
}

/// Wraps to `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    let mut w = libm::fmod(a, TAU);
    if w <= -PI {
        w += TAU;
    } else if w > PI {
        w -= TAU;
    }
    w
}

pub use crate::config::ScatteringModel;

/// `J_n(pi d)` for `d < antennas`, `n <= max_order`; shared by every link of one array size.
#[derive(Debug, Clone)]
pub struct BesselTable {
    antennas: usize,
    max_order: usize,
    values: Vec<f64>,
}

impl BesselTable {
    pub fn new(antennas: usize, asd: f64) -> Self {
        let max_order = series_order(antennas, asd);
        let mut values = vec![0.0; antennas * (max_order + 1)];
        for d in 0..antennas {
            let z = PI * d as f64;
            for n in 0..=max_order {
                values[d * (max_order + 1) + n] = libm::jn(n as i32, z);
            }
        }
        Self { antennas, max_order, values }
    }

    pub fn antennas(&self) -> usize {
        self.antennas
    }

    fn row(&self, d: usize) -> &[f64] {
        let w = self.max_order + 1;
        &self.values[d * w..(d + 1) * w]
    }
}

// Terms beyond this order are below 1e-17: either the Gaussian angular weight
// exp(-n^2 sigma^2 / 2) or J_n(pi d) itself has died out.
fn series_order(antennas: usize, asd: f64) -> usize {
    let by_spread = libm::ceil(8.9 / asd.max(1e-9));
    let by_bessel = libm::ceil(PI * antennas.saturating_sub(1) as f64) + 40.0;
    by_spread.min(by_bessel) as usize
}

/// First column `r(d) = R[d, 0]`, `d = 0..N`, of the Gaussian local-scattering correlation.
///
/// `R[m, k] = beta E[exp(j pi (m - k) sin(angle + delta))]` with `delta ~ N(0, asd^2)`,
/// for a half-wavelength uniform linear array.
pub fn scattering_column(
    beta: f64,
    angle: f64,
    asd: f64,
    table: &BesselTable,
    model: ScatteringModel,
) -> Vec<Complex64> {
    let n = table.antennas;
    match model {
        ScatteringModel::Exact => {
            // Jacobi-Anger: E[e^{jz sin(a+delta)}] = sum_n J_n(z) e^{jna} e^{-n^2 s^2/2}
            let orders = table.max_order + 1;
            let mut even = vec![0.0; orders];
            let mut odd = vec![0.0; orders];
            for k in 1..orders {
                let g = 2.0 * libm::exp(-0.5 * (k * k) as f64 * asd * asd);
                if k % 2 == 0 {
                    even[k] = g * libm::cos(k as f64 * angle);
                } else {
                    odd[k] = g * libm::sin(k as f64 * angle);
                }
            }
            (0..n)
                .map(|d| {
                    let j = table.row(d);
                    let mut re = j[0];
                    let mut im = 0.0;
                    for k in 1..orders {
                        re += j[k] * even[k];
                        im += j[k] * odd[k];
                    }
                    Complex64::new(beta * re, beta * im)
                })
                .collect()
        }
        ScatteringModel::SmallAngle => {
            let (s, c) = (libm::sin(angle), libm::cos(angle));
            (0..n)
                .map(|d| {
                    let x = PI * d as f64;
                    let mag = beta * libm::exp(-0.5 * asd * asd * (x * c) * (x * c));
                    Complex64::from_polar(mag, x * s)
                })
                .collect()
        }
    }
}

/// Dense Gaussian local-scattering correlation matrix (exact model).
pub fn local_scattering_r(beta: f64, angle: f64, asd: f64, antennas: usize) -> Result<CorrelationMatrix> {
    local_scattering_r_with(beta, angle, asd, antennas, ScatteringModel::Exact)
}

pub fn local_scattering_r_with(
    beta: f64,
    angle: f64,
    asd: f64,
    antennas: usize,
    model: ScatteringModel,
) -> Result<CorrelationMatrix> {
    if antennas == 0 {
        return Err(domain("array needs at least one antenna"));
    }
    if !(beta >= 0.0) || !(asd >= 0.0) {
        return Err(domain("gain and angular spread must be nonnegative"));
    }
    let table = BesselTable::new(antennas, asd);
    Ok(CorrelationMatrix::from_toeplitz(&scattering_column(beta, angle, asd, &table, model)))
}

/// Correlated Rayleigh draw `R^{1/2} h'` with `h'` i.i.d. `CN(0, 1)`.
pub fn draw_channel<R: RngCore + ?Sized>(r: &CorrelationMatrix, rng: &mut R) -> Result<CVector> {
    ensure_hermitian(r.entries())?;
    let root = HermitianSpectrum::new(r.entries()).psd_sqrt();
    let z = complex_normal_vector(r.node_antennas(), rng);
    Ok(root * z)
}
