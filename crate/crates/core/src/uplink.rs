//! Uplink MR-combining SINR and SE, and the symbol-level check of its interference terms.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand_core::RngCore;

use crate::error::{domain, Error, Result};
use crate::linalg::{psd_sqrt, quad_form, CMatrix, CVector};
use crate::rng::{complex_normal, complex_normal_vector};

/// What the processing unit of one cell knows in one fading realization:
/// its own users' stacked estimates and error covariances, and only the stacked
/// correlation of every other-cell user.
#[derive(Debug, Clone, PartialEq)]
pub struct UplinkCellView {
    pub cell: usize,
    pub own_users: Vec<usize>,
    pub estimates: Vec<CVector>,
    pub err_covs: Vec<CMatrix>,
    /// `(user, stacked R)` for users served elsewhere.
    pub foreign: Vec<(usize, CMatrix)>,
}

impl UplinkCellView {
    pub fn dimension(&self) -> usize {
        self.estimates.first().map_or(0, |e| e.len())
    }

    fn position(&self, user: usize) -> Option<usize> {
        self.own_users.iter().position(|&u| u == user)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UplinkRealization {
    pub cells: Vec<UplinkCellView>,
    pub num_users: usize,
    /// Per-user power coefficient in `[0, 1]`.
    pub eta: Vec<f64>,
    pub ue_power: f64,
    pub noise_power: f64,
}

impl UplinkRealization {
    pub fn serving_cell(&self, user: usize) -> Option<usize> {
        self.cells.iter().position(|c| c.own_users.contains(&user))
    }

    fn view(&self, cell: usize, user: usize) -> Result<(&UplinkCellView, usize)> {
        let v = self.cells.get(cell).ok_or_else(|| domain("no such cell"))?;
        let pos = v.position(user).ok_or_else(|| domain("user is not served by this cell"))?;
        Ok((v, pos))
    }

    pub fn check(&self) -> Result<()> {
        if self.eta.len() != self.num_users {
            return Err(Error::Dimension { expected: self.num_users, actual: self.eta.len() });
        }
        if self.eta.iter().any(|&e| !(0.0..=1.0).contains(&e)) {
            return Err(domain("uplink power coefficients must lie in [0, 1]"));
        }
        for v in &self.cells {
            let m = v.dimension();
            let dims_ok = v.estimates.iter().all(|e| e.len() == m)
                && v.err_covs.iter().all(|t| t.nrows() == m && t.ncols() == m)
                && v.foreign.iter().all(|(_, r)| r.nrows() == m && r.ncols() == m)
                && v.err_covs.len() == v.own_users.len()
                && v.estimates.len() == v.own_users.len();
            if !dims_ok {
                return Err(domain("stacked uplink statistics disagree on dimension"));
            }
        }
        Ok(())
    }
}

/// Uplink SINR of `user` in `cell` with MR combining, from the realization as stored.
pub fn ul_sinr(r: &UplinkRealization, cell: usize, user: usize) -> Result<f64> {
    r.check()?;
    let (v, pos) = r.view(cell, user)?;
    let h = &v.estimates[pos];
    let norm2 = h.norm_squared();
    if norm2 == 0.0 {
        return Ok(0.0);
    }
    let m = v.dimension();
    let mut cov = CMatrix::identity(m, m).scale(r.noise_power / r.ue_power);
    for (j, &u) in v.own_users.iter().enumerate() {
        let eta = Complex64::new(r.eta[u], 0.0);
        if j != pos {
            cov += (&v.estimates[j] * v.estimates[j].adjoint()) * eta;
        }
        cov += &v.err_covs[j] * eta;
    }
    for (u, rr) in &v.foreign {
        cov += rr * Complex64::new(r.eta[*u], 0.0);
    }
    let denom = quad_form(&cov, h);
    Ok(r.eta[user] * norm2 * norm2 / denom)
}

/// `(1 - tau_p/tau_c) log2(1 + gamma)`.
pub fn ul_se(gamma: f64, pilot_length: usize, coherence_block: usize) -> f64 {
    let prelog = 1.0 - pilot_length as f64 / coherence_block as f64;
    prelog * libm::log2(1.0 + gamma)
}

/// SINR ingredients linear in the power coefficients:
/// `gamma_k = eta_k S_k / (sum_j eta_j I[k, j] + N_k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct UplinkGains {
    pub signal: Vec<f64>,
    /// `I[k, k]` is the user's own estimation-error term.
    pub interference: DMatrix<f64>,
    pub noise: Vec<f64>,
}

impl UplinkGains {
    pub fn num_users(&self) -> usize {
        self.signal.len()
    }

    pub fn from_realization(r: &UplinkRealization) -> Result<Self> {
        r.check()?;
        let k_total = r.num_users;
        let mut signal = vec![0.0; k_total];
        let mut noise = vec![0.0; k_total];
        let mut interference = DMatrix::zeros(k_total, k_total);
        for v in &r.cells {
            for (pos, &k) in v.own_users.iter().enumerate() {
                let h = &v.estimates[pos];
                let n2 = h.norm_squared();
                signal[k] = n2 * n2;
                noise[k] = r.noise_power / r.ue_power * n2;
                for (j, &u) in v.own_users.iter().enumerate() {
                    let mut t = quad_form(&v.err_covs[j], h);
                    if j != pos {
                        t += h.dotc(&v.estimates[j]).norm_sqr();
                    }
                    interference[(k, u)] = t;
                }
                for (u, rr) in &v.foreign {
                    interference[(k, *u)] = quad_form(rr, h);
                }
            }
        }
        Ok(Self { signal, interference, noise })
    }

    pub fn sinr(&self, eta: &[f64], k: usize) -> f64 {
        if self.signal[k] == 0.0 || eta[k] == 0.0 {
            return 0.0;
        }
        let row = self.interference.row(k);
        let denom: f64 = row.iter().zip(eta).map(|(i, e)| i * e).sum::<f64>() + self.noise[k];
        eta[k] * self.signal[k] / denom
    }

    pub fn sinrs(&self, eta: &[f64]) -> Vec<f64> {
        (0..self.num_users()).map(|k| self.sinr(eta, k)).collect()
    }
}

/// Closed-form variances of the four MR interference terms of one user:
/// estimation error, intra-cell, inter-cell, noise.
pub fn ul_interference_terms(r: &UplinkRealization, cell: usize, user: usize) -> Result<[f64; 4]> {
    r.check()?;
    let (v, pos) = r.view(cell, user)?;
    let h = &v.estimates[pos];
    let i1 = r.eta[user] * quad_form(&v.err_covs[pos], h);
    let mut i2 = 0.0;
    for (j, &u) in v.own_users.iter().enumerate() {
        if j != pos {
            i2 += r.eta[u] * (h.dotc(&v.estimates[j]).norm_sqr() + quad_form(&v.err_covs[j], h));
        }
    }
    let i3: f64 = v.foreign.iter().map(|(u, rr)| r.eta[*u] * quad_form(rr, h)).sum();
    let i4 = r.noise_power / r.ue_power * h.norm_squared();
    Ok([i1, i2, i3, i4])
}

/// Minimum trial count accepted by the symbol-level oracles.
pub const MIN_ORACLE_TRIALS: usize = 10_000;

/// One Monte Carlo estimate against its closed form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TermCheck {
    pub name: &'static str,
    pub empirical: f64,
    pub std_error: f64,
    pub closed_form: f64,
}

impl TermCheck {
    /// Deviation in standard errors.
    pub fn z_score(&self) -> f64 {
        let d = (self.empirical - self.closed_form).abs();
        if d <= 1e-12 * self.closed_form.abs().max(self.empirical.abs()) {
            0.0
        } else if self.std_error == 0.0 {
            f64::INFINITY
        } else {
            d / self.std_error
        }
    }

    pub fn passes(&self, sigmas: f64) -> bool {
        self.z_score() <= sigmas
    }
}

/// Sample mean and its standard error, accumulated one observation at a time.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct Moments {
    n: f64,
    sum: f64,
    sum_sq: f64,
}

impl Moments {
    pub(crate) fn push(&mut self, x: f64) {
        self.n += 1.0;
        self.sum += x;
        self.sum_sq += x * x;
    }

    pub(crate) fn mean(&self) -> f64 {
        self.sum / self.n
    }

    pub(crate) fn std_error(&self) -> f64 {
        let m = self.mean();
        let var = (self.sum_sq / self.n - m * m).max(0.0) * self.n / (self.n - 1.0);
        libm::sqrt(var / self.n)
    }

    pub(crate) fn check(&self, name: &'static str, closed_form: f64) -> TermCheck {
        TermCheck { name, empirical: self.mean(), std_error: self.std_error(), closed_form }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UlOracleReport {
    pub terms: [TermCheck; 4],
    /// Sample correlations `E[I_i conj(I_j)]`, `i < j`, as checks against zero.
    pub cross: Vec<TermCheck>,
}

impl UlOracleReport {
    pub fn passes(&self, sigmas: f64) -> bool {
        self.terms.iter().chain(&self.cross).all(|t| t.passes(sigmas))
    }
}

pub const UL_TERM_NAMES: [&str; 4] = ["I1 estimation error", "I2 intra-cell", "I3 inter-cell", "I4 noise"];

/// Simulates transmitted symbols, estimation errors, other-cell channels and noise
/// with the cell's estimates held fixed, and measures the four interference terms
/// at the MR output of `user`.
pub fn ul_interference_oracle<R: RngCore + ?Sized>(
    r: &UplinkRealization,
    cell: usize,
    user: usize,
    trials: usize,
    rng: &mut R,
) -> Result<UlOracleReport> {
    if trials < MIN_ORACLE_TRIALS {
        return Err(Error::OracleRefused("symbol-level oracle needs at least 10^4 trials".into()));
    }
    let closed = ul_interference_terms(r, cell, user)?;
    let (v, pos) = r.view(cell, user)?;
    let m = v.dimension();
    let h = &v.estimates[pos];
    let err_roots: Vec<CMatrix> = v.err_covs.iter().map(psd_sqrt).collect();
    let foreign_roots: Vec<(usize, CMatrix)> = v.foreign.iter().map(|(u, rr)| (*u, psd_sqrt(rr))).collect();
    let noise_std = libm::sqrt(r.noise_power);
    let inv_sqrt_pu = 1.0 / libm::sqrt(r.ue_power);

    let mut moments = [Moments::default(); 4];
    let mut cross_re = [Moments::default(); 6];
    let mut cross_im = [Moments::default(); 6];
    for _ in 0..trials {
        let mut terms = [Complex64::new(0.0, 0.0); 4];
        for (j, &u) in v.own_users.iter().enumerate() {
            let amp = libm::sqrt(r.eta[u]);
            let x = complex_normal(rng);
            let e = &err_roots[j] * complex_normal_vector(m, rng);
            if j == pos {
                terms[0] += h.dotc(&e) * x * amp;
            } else {
                let channel = &v.estimates[j] + e;
                terms[1] += h.dotc(&channel) * x * amp;
            }
        }
        for (u, root) in &foreign_roots {
            let amp = libm::sqrt(r.eta[*u]);
            let x = complex_normal(rng);
            let channel = root * complex_normal_vector(m, rng);
            terms[2] += h.dotc(&channel) * x * amp;
        }
        let n = complex_normal_vector(m, rng).scale(noise_std);
        terms[3] = h.dotc(&n) * inv_sqrt_pu;
        for i in 0..4 {
            moments[i].push(terms[i].norm_sqr());
        }
        let mut c = 0;
        for i in 0..4 {
            for j in i + 1..4 {
                let z = terms[i] * terms[j].conj();
                cross_re[c].push(z.re);
                cross_im[c].push(z.im);
                c += 1;
            }
        }
    }
    let terms = core::array::from_fn(|i| moments[i].check(UL_TERM_NAMES[i], closed[i]));
    let mut cross = Vec::with_capacity(12);
    for c in 0..6 {
        cross.push(cross_re[c].check("cross-correlation (re)", 0.0));
        cross.push(cross_im[c].check("cross-correlation (im)", 0.0));
    }
    Ok(UlOracleReport { terms, cross })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::propagation::local_scattering_r;
    use crate::rng::epoch_stream;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    /// Two cells, two users each, four stacked antennas.
    pub(crate) fn toy() -> UplinkRealization {
        let mut rng = epoch_stream(42, 0);
        let mut cells = Vec::new();
        let r = |beta: f64, a: f64| local_scattering_r(beta, a, 0.3, 4).unwrap().into_entries();
        for cell in 0..2 {
            let own = vec![2 * cell, 2 * cell + 1];
            let estimates = own.iter().map(|_| complex_normal_vector(4, &mut rng)).collect();
            let err_covs = own.iter().map(|&u| r(0.2 + 0.1 * u as f64, 0.3 * u as f64)).collect();
            let foreign = (0..4).filter(|u| !own.contains(u)).map(|u| (u, r(0.5, -0.4 * u as f64))).collect();
            cells.push(UplinkCellView { cell, own_users: own, estimates, err_covs, foreign });
        }
        UplinkRealization { cells, num_users: 4, eta: vec![1.0, 0.7, 0.4, 0.9], ue_power: 0.1, noise_power: 0.05 }
    }

    // Term-by-term expansion of the MR SINR, written with explicit index loops.
    fn sinr_by_loops(r: &UplinkRealization, cell: usize, user: usize) -> f64 {
        let v = &r.cells[cell];
        let pos = v.own_users.iter().position(|&u| u == user).unwrap();
        let h = &v.estimates[pos];
        let m = h.len();
        let q = |a: &CMatrix| {
            let mut acc = c(0.0, 0.0);
            for i in 0..m {
                for j in 0..m {
                    acc += h[i].conj() * a[(i, j)] * h[j];
                }
            }
            acc.re
        };
        let mut norm2 = 0.0;
        for i in 0..m {
            norm2 += h[i].norm_sqr();
        }
        let mut denom = r.noise_power / r.ue_power * norm2;
        for (u, rr) in v.foreign.iter().rev() {
            denom += r.eta[*u] * q(rr);
        }
        for j in (0..v.own_users.len()).rev() {
            let u = v.own_users[j];
            denom += r.eta[u] * q(&v.err_covs[j]);
            if j != pos {
                let mut ip = c(0.0, 0.0);
                for i in 0..m {
                    ip += h[i].conj() * v.estimates[j][i];
                }
                denom += r.eta[u] * ip.norm_sqr();
            }
        }
        r.eta[user] * norm2 * norm2 / denom
    }

    #[test]
    fn matches_loop_expansion() {
        let r = toy();
        for cell in 0..2 {
            for &u in &r.cells[cell].own_users {
                let a = ul_sinr(&r, cell, u).unwrap();
                let b = sinr_by_loops(&r, cell, u);
                assert!((a - b).abs() <= 1e-12 * b, "{a} vs {b}");
                let g = UplinkGains::from_realization(&r).unwrap();
                assert!((g.sinr(&r.eta, u) - b).abs() <= 1e-12 * b);
            }
        }
    }

    #[test]
    fn lone_user_without_error_sees_only_noise() {
        let h = CVector::from_vec(vec![c(1.0, 2.0), c(-0.5, 0.0)]);
        let r = UplinkRealization {
            cells: vec![UplinkCellView {
                cell: 0,
                own_users: vec![0],
                estimates: vec![h.clone()],
                err_covs: vec![CMatrix::zeros(2, 2)],
                foreign: vec![],
            }],
            num_users: 1,
            eta: vec![0.6],
            ue_power: 0.2,
            noise_power: 0.01,
        };
        let expect = 0.6 * 0.2 / 0.01 * h.norm_squared();
        assert!((ul_sinr(&r, 0, 0).unwrap() - expect).abs() < 1e-12 * expect);
    }

    #[test]
    fn zero_power_or_estimate_gives_zero() {
        let mut r = toy();
        r.eta[1] = 0.0;
        assert_eq!(ul_sinr(&r, 0, 1).unwrap(), 0.0);
        let mut r = toy();
        r.cells[1].estimates[0] = CVector::zeros(4);
        assert_eq!(ul_sinr(&r, 1, 2).unwrap(), 0.0);
    }

    #[test]
    fn se_values() {
        assert_eq!(ul_se(0.0, 8, 200), 0.0);
        assert!((ul_se(1.0, 8, 200) - 0.96).abs() < 1e-15);
        assert!((ul_se(3.0, 8, 200) - 1.92).abs() < 1e-15);
    }

    #[test]
    fn other_cells_estimates_do_not_leak() {
        let a = toy();
        let mut b = a.clone();
        b.cells[1].estimates[0] = CVector::from_element(4, c(9.0, -9.0));
        b.cells[1].err_covs[1] = CMatrix::identity(4, 4);
        assert_eq!(ul_sinr(&a, 0, 0).unwrap(), ul_sinr(&b, 0, 0).unwrap());
        assert_eq!(ul_sinr(&a, 0, 1).unwrap(), ul_sinr(&b, 0, 1).unwrap());
    }

    #[test]
    fn power_scaling_invariance() {
        let a = toy();
        let mut b = a.clone();
        b.ue_power *= 7.0;
        b.noise_power *= 7.0;
        let (x, y) = (ul_sinr(&a, 1, 3).unwrap(), ul_sinr(&b, 1, 3).unwrap());
        assert!((x - y).abs() <= 1e-13 * x);
    }

    #[test]
    fn rejects_out_of_range_eta() {
        let mut r = toy();
        r.eta[0] = 1.5;
        assert!(ul_sinr(&r, 0, 0).is_err());
    }

    #[test]
    fn oracle_agrees_with_closed_forms() {
        let r = toy();
        let rep = ul_interference_oracle(&r, 0, 1, 20_000, &mut epoch_stream(5, 5)).unwrap();
        assert!(rep.passes(5.0), "{rep:?}");
    }

    #[test]
    fn oracle_noise_only() {
        let mut r = toy();
        r.eta = vec![0.0; 4];
        let rep = ul_interference_oracle(&r, 1, 2, 10_000, &mut epoch_stream(5, 6)).unwrap();
        for t in &rep.terms[..3] {
            assert_eq!(t.empirical, 0.0);
            assert_eq!(t.closed_form, 0.0);
        }
        assert!(rep.terms[3].passes(5.0));
    }

    #[test]
    fn oracle_without_estimation_error() {
        let mut r = toy();
        for v in &mut r.cells {
            for t in &mut v.err_covs {
                *t = CMatrix::zeros(4, 4);
            }
        }
        let rep = ul_interference_oracle(&r, 0, 0, 10_000, &mut epoch_stream(5, 7)).unwrap();
        assert_eq!(rep.terms[0].empirical, 0.0);
    }

    #[test]
    fn oracle_refuses_small_runs() {
        assert!(matches!(
            ul_interference_oracle(&toy(), 0, 0, 100, &mut epoch_stream(0, 0)),
            Err(Error::OracleRefused(_))
        ));
    }
}
