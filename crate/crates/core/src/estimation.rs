//! MMSE channel-estimation statistics, estimate/error draws and per-cell stacking.

use alloc::vec::Vec;

use nalgebra::DVector;
use num_complex::Complex64;
use rand_core::RngCore;

use crate::config::{EstimatorNormalization, ScenarioConfig};
use crate::error::{domain, Error, Result};
use crate::linalg::{ensure_hermitian, CMatrix, CVector, HermitianSpectrum};
use crate::propagation::CorrelationMatrix;
use crate::rng::complex_normal_vector;

/// Condition number of `Gamma` beyond which it is regularized.
pub const MAX_CONDITION: f64 = 1e12;
/// Tikhonov weight, relative to `tr(Gamma)/N`.
pub const TIKHONOV: f64 = 1e-12;

/// Scalars feeding the estimator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorParams {
    pub ue_power: f64,
    pub pilot_length: usize,
    pub noise_power: f64,
    pub mode: EstimatorNormalization,
}

impl EstimatorParams {
    pub fn from_config(cfg: &ScenarioConfig) -> Self {
        Self {
            ue_power: cfg.ue_power,
            pilot_length: cfg.pilot_length,
            noise_power: cfg.noise_power,
            mode: cfg.estimator_normalization,
        }
    }

    pub fn with_mode(self, mode: EstimatorNormalization) -> Self {
        Self { mode, ..self }
    }

    fn check(&self) -> Result<()> {
        if !(self.ue_power > 0.0) || self.pilot_length == 0 || !(self.noise_power > 0.0) {
            return Err(domain("estimator needs positive power, pilot length and noise"));
        }
        Ok(())
    }

    /// Eigenvalue of `Gamma` along an eigenvector of `R` with eigenvalue `lambda`.
    pub fn gamma(&self, lambda: f64) -> f64 {
        let tau = self.pilot_length as f64;
        let inner = self.ue_power * tau * lambda + self.noise_power;
        match self.mode {
            EstimatorNormalization::PilotScaled => tau * inner,
            EstimatorNormalization::StandardMmse => inner,
        }
    }

    fn phi_numerator(&self, lambda: f64) -> f64 {
        let tau = self.pilot_length as f64;
        match self.mode {
            EstimatorNormalization::PilotScaled => self.ue_power * lambda * lambda,
            EstimatorNormalization::StandardMmse => self.ue_power * tau * lambda * lambda,
        }
    }

    /// Diagonal loading added to `Gamma` given the full spectrum of `R`.
    pub fn regularization(&self, all_values: &[f64]) -> f64 {
        if all_values.is_empty() {
            return 0.0;
        }
        let gammas = all_values.iter().map(|&l| self.gamma(l.max(0.0)));
        let (lo, hi, sum) = gammas.fold((f64::INFINITY, 0.0f64, 0.0), |(lo, hi, s), g| (lo.min(g), hi.max(g), s + g));
        if lo <= 0.0 || hi / lo > MAX_CONDITION {
            TIKHONOV * sum / all_values.len() as f64
        } else {
            0.0
        }
    }

    /// Eigenvalues of `Phi` and `Theta` for the eigenvalues `values` of `R`;
    /// `all_values` is the full spectrum used for the conditioning check.
    pub fn spectral_maps(&self, all_values: &[f64], values: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let eps = self.regularization(all_values);
        let mut phi = Vec::with_capacity(values.len());
        let mut theta = Vec::with_capacity(values.len());
        for &l in values {
            let l = l.max(0.0);
            let p = (self.phi_numerator(l) / (self.gamma(l) + eps)).min(l);
            phi.push(p);
            theta.push(l - p);
        }
        (phi, theta)
    }
}

/// `Gamma`, estimate covariance `Phi` and error covariance `Theta` of one link.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimationStats {
    pub gamma: CMatrix,
    pub est_cov: CMatrix,
    pub err_cov: CMatrix,
}

/// Estimation statistics of one link. `R` and `Gamma` share eigenvectors, so every
/// matrix function is applied on the spectrum of `R`.
pub fn estimation_stats(r: &CorrelationMatrix, params: &EstimatorParams) -> Result<EstimationStats> {
    params.check()?;
    let spec = HermitianSpectrum::new(r.entries());
    let values: Vec<f64> = spec.values.iter().map(|&l| l.max(0.0)).collect();
    let eps = params.regularization(&values);
    let (phi, _) = params.spectral_maps(&values, &values);
    let n = values.len();
    let gamma_diag = DVector::from_fn(n, |i, _| params.gamma(values[i]) + eps);
    let phi_diag = DVector::from_column_slice(&phi);
    let rebuild = |d: &DVector<f64>| {
        let mut scaled = spec.vectors.clone();
        for j in 0..n {
            let w = Complex64::new(d[j], 0.0);
            scaled.column_mut(j).iter_mut().for_each(|x| *x *= w);
        }
        let m = scaled * spec.vectors.adjoint();
        (&m + m.adjoint()).scale(0.5)
    };
    let gamma = rebuild(&gamma_diag);
    let est_cov = rebuild(&phi_diag);
    let err_cov = r.entries() - &est_cov;
    Ok(EstimationStats { gamma, est_cov, err_cov })
}

/// Draws `(estimate, channel)` with independent `CN(0, Phi)` estimate and `CN(0, Theta)` error.
pub fn draw_estimate_pair<R: RngCore + ?Sized>(stats: &EstimationStats, rng: &mut R) -> Result<(CVector, CVector)> {
    ensure_hermitian(&stats.est_cov)?;
    ensure_hermitian(&stats.err_cov)?;
    let n = stats.est_cov.nrows();
    let est = HermitianSpectrum::new(&stats.est_cov).psd_sqrt() * complex_normal_vector(n, rng);
    let err = HermitianSpectrum::new(&stats.err_cov).psd_sqrt() * complex_normal_vector(n, rng);
    let h = &est + err;
    Ok((est, h))
}

/// Block-diagonal stack, blocks in the given order.
pub fn block_diag(blocks: &[CMatrix]) -> CMatrix {
    let m: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = CMatrix::zeros(m, m);
    let mut at = 0;
    for b in blocks {
        let n = b.nrows();
        out.view_mut((at, at), (n, n)).copy_from(b);
        at += n;
    }
    out
}

pub fn stack_vectors(parts: &[CVector]) -> CVector {
    let m: usize = parts.iter().map(|p| p.len()).sum();
    let mut out = CVector::zeros(m);
    let mut at = 0;
    for p in parts {
        out.rows_mut(at, p.len()).copy_from(p);
        at += p.len();
    }
    out
}

/// What one node of a cell holds about one user.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeLink {
    pub r: CMatrix,
    /// Only for users the cell serves.
    pub err_cov: Option<CMatrix>,
    pub estimate: Option<CVector>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StackedLink {
    pub user: usize,
    pub r: CMatrix,
    pub err_cov: Option<CMatrix>,
    pub estimate: Option<CVector>,
}

/// Cell-wide view: node blocks stacked cell-center array first, then edge nodes by index.
#[derive(Debug, Clone, PartialEq)]
pub struct StackedCellStats {
    pub cell: usize,
    pub node_antennas: Vec<usize>,
    pub links: Vec<StackedLink>,
}

impl StackedCellStats {
    /// Service antennas of the cell, `M_c`.
    pub fn dimension(&self) -> usize {
        self.node_antennas.iter().sum()
    }

    pub fn link(&self, user: usize) -> Option<&StackedLink> {
        self.links.iter().find(|l| l.user == user)
    }
}

/// Stacks the per-node statistics of every user seen by `cell`.
pub fn stack_cell(cell: usize, node_antennas: &[usize], users: &[(usize, Vec<NodeLink>)]) -> Result<StackedCellStats> {
    let mut links = Vec::with_capacity(users.len());
    for (user, nodes) in users {
        if nodes.len() != node_antennas.len() {
            return Err(Error::Dimension { expected: node_antennas.len(), actual: nodes.len() });
        }
        for (link, &n) in nodes.iter().zip(node_antennas) {
            let sizes_ok = link.r.nrows() == n
                && link.err_cov.as_ref().is_none_or(|t| t.nrows() == n)
                && link.estimate.as_ref().is_none_or(|e| e.len() == n);
            if !sizes_ok {
                return Err(domain("node block does not match the node's antenna count"));
            }
        }
        let has_err = nodes.iter().all(|l| l.err_cov.is_some());
        let has_est = nodes.iter().all(|l| l.estimate.is_some());
        if nodes.iter().any(|l| l.err_cov.is_some()) != has_err || nodes.iter().any(|l| l.estimate.is_some()) != has_est
        {
            return Err(domain("a user's statistics must be present at every node or none"));
        }
        let r_blocks: Vec<CMatrix> = nodes.iter().map(|l| l.r.clone()).collect();
        let err_cov = has_err.then(|| {
            let blocks: Vec<CMatrix> = nodes.iter().map(|l| l.err_cov.clone().unwrap()).collect();
            block_diag(&blocks)
        });
        let estimate = has_est.then(|| {
            let parts: Vec<CVector> = nodes.iter().map(|l| l.estimate.clone().unwrap()).collect();
            stack_vectors(&parts)
        });
        links.push(StackedLink { user: *user, r: block_diag(&r_blocks), err_cov, estimate });
    }
    Ok(StackedCellStats { cell, node_antennas: node_antennas.to_vec(), links })
}

/// Linear-MMSE estimate covariance obtained by simulating despread pilot observations
/// `y = sqrt(p_u tau_p) h + n` and regressing `h` on `y`. Matches the standard normalization.
pub fn pilot_regression_oracle<R: RngCore + ?Sized>(
    r: &CorrelationMatrix,
    params: &EstimatorParams,
    trials: usize,
    rng: &mut R,
) -> Result<CMatrix> {
    params.check()?;
    if trials < 1000 {
        return Err(Error::OracleRefused("pilot regression needs at least 1000 trials".into()));
    }
    let n = r.node_antennas();
    let root = HermitianSpectrum::new(r.entries()).psd_sqrt();
    let gain = libm::sqrt(params.ue_power * params.pilot_length as f64);
    let noise = libm::sqrt(params.noise_power);
    let mut c_hy = CMatrix::zeros(n, n);
    let mut c_yy = CMatrix::zeros(n, n);
    for _ in 0..trials {
        let h = &root * complex_normal_vector(n, rng);
        let y = h.scale(gain) + complex_normal_vector(n, rng).scale(noise);
        c_hy += &h * y.adjoint();
        c_yy += &y * y.adjoint();
    }
    let inv = c_yy
        .clone()
        .try_inverse()
        .ok_or_else(|| domain("sample observation covariance is singular"))?;
    let w = &c_hy * inv;
    let phi = &w * c_yy * w.adjoint() / Complex64::new(trials as f64, 0.0);
    Ok((&phi + phi.adjoint()).scale(0.5))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{frobenius, min_eigenvalue};
    use crate::propagation::local_scattering_r;
    use crate::rng::epoch_stream;

    fn params(mode: EstimatorNormalization) -> EstimatorParams {
        EstimatorParams { ue_power: 0.1, pilot_length: 8, noise_power: 1.0, mode }
    }

    #[test]
    fn scaled_identity_closed_form() {
        let beta = 3.0;
        let r = CorrelationMatrix::new(CMatrix::identity(3, 3).scale(beta)).unwrap();
        let p = params(EstimatorNormalization::PilotScaled);
        let s = estimation_stats(&r, &p).unwrap();
        let expect = 0.1 * beta * beta / (8.0 * (0.1 * 8.0 * beta + 1.0));
        let target = CMatrix::identity(3, 3).scale(expect);
        assert!(frobenius(&(&s.est_cov - target)) < 1e-14);
        let g = 8.0 * (0.8 * beta + 1.0);
        assert!(frobenius(&(&s.gamma - CMatrix::identity(3, 3).scale(g))) < 1e-12);
    }

    #[test]
    fn pilot_scaled_is_standard_over_tau_squared() {
        let r = local_scattering_r(2.0, 0.5, 0.26, 6).unwrap();
        let a = estimation_stats(&r, &params(EstimatorNormalization::PilotScaled)).unwrap();
        let b = estimation_stats(&r, &params(EstimatorNormalization::StandardMmse)).unwrap();
        assert!(frobenius(&(a.est_cov.scale(64.0) - &b.est_cov)) < 1e-12 * frobenius(&b.est_cov));
    }

    #[test]
    fn sum_rule_and_psd_both_modes() {
        let r = local_scattering_r(1e-9, -0.7, 0.26, 8).unwrap();
        for mode in [EstimatorNormalization::PilotScaled, EstimatorNormalization::StandardMmse] {
            let p = EstimatorParams { ue_power: 0.1, pilot_length: 8, noise_power: 1.58e-13, mode };
            let s = estimation_stats(&r, &p).unwrap();
            assert!(frobenius(&(&s.est_cov + &s.err_cov - r.entries())) <= 1e-12 * frobenius(r.entries()));
            assert!(min_eigenvalue(&s.est_cov) >= -1e-12 * r.trace());
            assert!(min_eigenvalue(&s.err_cov) >= -1e-12 * r.trace());
        }
    }

    #[test]
    fn ill_conditioned_gamma_is_regularized() {
        let p = EstimatorParams { ue_power: 1.0, pilot_length: 1, noise_power: 1e-20, mode: EstimatorNormalization::StandardMmse };
        let eps = p.regularization(&[1.0, 0.0]);
        assert!((eps - 1e-12 * (1.0 + 2e-20) / 2.0).abs() < 1e-24);
        assert_eq!(p.regularization(&[1.0, 0.5]), 0.0);
    }

    #[test]
    fn regression_oracle_matches_standard_phi() {
        let r = local_scattering_r(1.0, 0.9, 0.3, 4).unwrap();
        let p = params(EstimatorNormalization::StandardMmse);
        let s = estimation_stats(&r, &p).unwrap();
        let emp = pilot_regression_oracle(&r, &p, 40_000, &mut epoch_stream(8, 0)).unwrap();
        let rel = frobenius(&(emp - &s.est_cov)) / frobenius(&s.est_cov);
        assert!(rel < 0.05, "{rel}");
    }

    #[test]
    fn oracle_refuses_underpowered_runs() {
        let r = local_scattering_r(1.0, 0.0, 0.3, 2).unwrap();
        let p = params(EstimatorNormalization::StandardMmse);
        assert!(matches!(pilot_regression_oracle(&r, &p, 10, &mut epoch_stream(0, 0)), Err(Error::OracleRefused(_))));
    }

    #[test]
    fn perfect_estimation_draws_equal_channel() {
        let s = EstimationStats {
            gamma: CMatrix::identity(2, 2),
            est_cov: CMatrix::identity(2, 2),
            err_cov: CMatrix::zeros(2, 2),
        };
        let (est, h) = draw_estimate_pair(&s, &mut epoch_stream(1, 1)).unwrap();
        assert!((est - h).norm() == 0.0);
    }

    #[test]
    fn estimate_and_error_are_uncorrelated() {
        let r = local_scattering_r(1.0, 0.2, 0.26, 3).unwrap();
        let s = estimation_stats(&r, &params(EstimatorNormalization::StandardMmse)).unwrap();
        let mut rng = epoch_stream(2, 2);
        let n = 100_000;
        let mut cross = CMatrix::zeros(3, 3);
        let mut cov = CMatrix::zeros(3, 3);
        for _ in 0..n {
            let (e, h) = draw_estimate_pair(&s, &mut rng).unwrap();
            let err = &h - &e;
            cross += &e * err.adjoint();
            cov += &h * h.adjoint();
        }
        let scale = Complex64::new(n as f64, 0.0);
        cross /= scale;
        cov /= scale;
        // entries have standard error about sqrt(phi * theta / n)
        let tol = 5.0 * libm::sqrt(s.est_cov[(0, 0)].re * s.err_cov[(0, 0)].re / n as f64);
        assert!(cross.iter().all(|z| z.norm() < tol), "{cross}");
        assert!(frobenius(&(cov - r.entries())) < 0.03 * frobenius(r.entries()));
    }

    #[test]
    fn stacking_shapes() {
        let r4 = CMatrix::identity(4, 4);
        let r32 = CMatrix::identity(32, 32).scale(2.0);
        let mut nodes = alloc::vec![NodeLink { r: r32, err_cov: None, estimate: None }];
        for _ in 0..24 {
            nodes.push(NodeLink { r: r4.clone(), err_cov: None, estimate: None });
        }
        let mut antennas = alloc::vec![32];
        antennas.extend(core::iter::repeat_n(4, 24));
        let s = stack_cell(0, &antennas, &[(3, nodes)]).unwrap();
        assert_eq!(s.dimension(), 128);
        let stacked = &s.link(3).unwrap().r;
        assert_eq!(stacked.nrows(), 128);
        assert_eq!(stacked[(0, 40)], Complex64::new(0.0, 0.0));
        assert_eq!(stacked[(40, 40)], Complex64::new(1.0, 0.0));
        assert_eq!(stacked[(5, 5)], Complex64::new(2.0, 0.0));
    }

    #[test]
    fn single_node_stack_is_identity_map() {
        let r = local_scattering_r(1.0, 0.3, 0.2, 5).unwrap().into_entries();
        let e = CVector::from_element(5, Complex64::new(1.0, -1.0));
        let s = stack_cell(
            1,
            &[5],
            &[(0, alloc::vec![NodeLink { r: r.clone(), err_cov: Some(r.clone()), estimate: Some(e.clone()) }])],
        )
        .unwrap();
        assert_eq!(s.links[0].r, r);
        assert_eq!(s.links[0].estimate.as_ref().unwrap(), &e);
    }

    #[test]
    fn mismatched_node_count_rejected() {
        let link = NodeLink { r: CMatrix::identity(2, 2), err_cov: None, estimate: None };
        assert!(stack_cell(0, &[2, 2], &[(0, alloc::vec![link])]).is_err());
    }
}
