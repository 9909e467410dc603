//! Downlink conjugate-beamforming SINR from channel statistics, and the symbol-level
//! check of its signal and interference terms.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand_core::RngCore;

use crate::error::{domain, Error, Result};
use crate::linalg::{psd_sqrt, trace_product, CMatrix, CVector};
use crate::rng::{complex_normal, complex_normal_vector};
use crate::uplink::{Moments, TermCheck, MIN_ORACLE_TRIALS};

/// Trace building blocks of one transmitting node.
#[derive(Debug, Clone, PartialEq)]
pub struct DlNode {
    pub cell: usize,
    /// Users this node precodes for.
    pub served: Vec<usize>,
    /// `tr(Phi)` of each served user at this node.
    pub trace_phi: Vec<f64>,
    /// `cross[(k, j)] = tr(R_k Phi_j)` for every user `k` and served position `j`.
    pub cross: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DownlinkStatistics {
    pub nodes: Vec<DlNode>,
    pub num_users: usize,
    pub dl_power: f64,
    pub noise_power: f64,
}

/// Power coefficient per node and served user; the precoder of `(l, j)` is
/// `sqrt(eta[l][j])` times the conjugate estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct DlPower {
    pub eta: Vec<Vec<f64>>,
}

impl DlPower {
    pub fn zeros(stats: &DownlinkStatistics) -> Self {
        Self { eta: stats.nodes.iter().map(|n| vec![0.0; n.served.len()]).collect() }
    }

    /// Same coefficient for a user at every node that serves it.
    pub fn per_user(stats: &DownlinkStatistics, eta: &[f64]) -> Self {
        Self { eta: stats.nodes.iter().map(|n| n.served.iter().map(|&u| eta[u]).collect()).collect() }
    }
}

/// Dense inputs of one node, for building statistics from explicit matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct DlNodeMatrices {
    pub cell: usize,
    pub served: Vec<usize>,
    /// Correlation towards every user, indexed by user.
    pub r: Vec<CMatrix>,
    /// Estimate covariance of each served user.
    pub est_cov: Vec<CMatrix>,
}

impl DownlinkStatistics {
    pub fn from_matrices(nodes: &[DlNodeMatrices], dl_power: f64, noise_power: f64) -> Result<Self> {
        let num_users = nodes.first().map_or(0, |n| n.r.len());
        let mut out = Vec::with_capacity(nodes.len());
        for n in nodes {
            if n.r.len() != num_users || n.est_cov.len() != n.served.len() {
                return Err(domain("node matrices do not cover every user"));
            }
            let trace_phi = n.est_cov.iter().map(|p| real_trace(&crate::linalg::trace(p))).collect::<Result<_>>()?;
            let mut cross = DMatrix::zeros(num_users, n.served.len());
            for (k, rk) in n.r.iter().enumerate() {
                for (j, p) in n.est_cov.iter().enumerate() {
                    cross[(k, j)] = real_trace(&trace_product(rk, p))?;
                }
            }
            out.push(DlNode { cell: n.cell, served: n.served.clone(), trace_phi, cross });
        }
        Ok(Self { nodes: out, num_users, dl_power, noise_power })
    }

    /// `(node, served position)` pairs through which `user` receives its data.
    pub fn serving(&self, user: usize) -> Vec<(usize, usize)> {
        let mut v = Vec::new();
        for (l, n) in self.nodes.iter().enumerate() {
            if let Some(j) = n.served.iter().position(|&u| u == user) {
                v.push((l, j));
            }
        }
        v
    }

    /// `sum_j eta[l][j] tr(Phi_j)` per node; at most one when the budget holds.
    pub fn budget_usage(&self, power: &DlPower) -> Vec<f64> {
        self.nodes
            .iter()
            .zip(&power.eta)
            .map(|(n, e)| n.trace_phi.iter().zip(e).map(|(t, x)| t * x).sum())
            .collect()
    }

    pub fn noise_over_power(&self) -> f64 {
        self.noise_power / self.dl_power
    }
}

fn real_trace(z: &Complex64) -> Result<f64> {
    if z.im.abs() > 1e-9 * z.norm().max(f64::MIN_POSITIVE) {
        return Err(domain("trace of a product of PSD matrices has an imaginary part"));
    }
    Ok(z.re.max(0.0))
}

/// Downlink SINR of `user` with conjugate beamforming and the given coefficients.
pub fn dl_sinr(stats: &DownlinkStatistics, power: &DlPower, user: usize) -> f64 {
    let mut signal = 0.0;
    for (l, n) in stats.nodes.iter().enumerate() {
        if let Some(j) = n.served.iter().position(|&u| u == user) {
            signal += libm::sqrt(power.eta[l][j]) * n.trace_phi[j];
        }
    }
    if signal == 0.0 {
        return 0.0;
    }
    let mut denom = stats.noise_over_power();
    for (l, n) in stats.nodes.iter().enumerate() {
        let row = n.cross.row(user);
        for (j, e) in power.eta[l].iter().enumerate() {
            denom += e * row[j];
        }
    }
    signal * signal / denom
}

pub fn dl_sinrs(stats: &DownlinkStatistics, power: &DlPower) -> Vec<f64> {
    (0..stats.num_users).map(|k| dl_sinr(stats, power, k)).collect()
}

/// `log2(1 + gamma)`.
pub fn dl_se(gamma: f64) -> f64 {
    libm::log2(1.0 + gamma)
}

/// One node of a small downlink instance for [`dl_term_oracle`].
#[derive(Debug, Clone, PartialEq)]
pub struct DlOracleNode {
    pub cell: usize,
    pub served: Vec<usize>,
    pub r: Vec<CMatrix>,
    pub est_cov: Vec<CMatrix>,
    /// Diagonal of the power matrix `D` per served user.
    pub d: Vec<DVector<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DlOracleInstance {
    pub nodes: Vec<DlOracleNode>,
    /// Serving cell of each user.
    pub user_cells: Vec<usize>,
}

impl DlOracleInstance {
    fn diag(d: &DVector<f64>) -> CMatrix {
        CMatrix::from_diagonal(&d.map(|x| Complex64::new(x, 0.0)))
    }

    /// Closed forms for `user`: desired mean `sum_l tr(D Phi)`, and the variances of the
    /// beamforming-uncertainty, intra-cell and inter-cell terms, each `sum tr(D R_k D Phi)`.
    pub fn closed_forms(&self, user: usize) -> [f64; 4] {
        let mut out = [0.0; 4];
        for n in &self.nodes {
            for (j, &u) in n.served.iter().enumerate() {
                let d = Self::diag(&n.d[j]);
                let dphi = &d * &n.est_cov[j];
                let var = trace_product(&(&d * &n.r[user]), &dphi).re;
                if u == user {
                    out[0] += crate::linalg::trace(&dphi).re;
                    out[1] += var;
                } else if self.user_cells[u] == self.user_cells[user] {
                    out[2] += var;
                } else {
                    out[3] += var;
                }
            }
        }
        out
    }
}

pub const DL_TERM_NAMES: [&str; 4] = ["desired mean", "J1 beamforming gain uncertainty", "J2 intra-cell", "J3 inter-cell"];

#[derive(Debug, Clone, PartialEq)]
pub struct DlOracleReport {
    /// Desired-signal mean (real part), then the three interference variances.
    pub terms: [TermCheck; 4],
    /// Imaginary part of the desired-signal mean, checked against zero.
    pub desired_imag: TermCheck,
}

impl DlOracleReport {
    pub fn passes(&self, sigmas: f64) -> bool {
        self.terms.iter().all(|t| t.passes(sigmas)) && self.desired_imag.passes(sigmas)
    }
}

/// Draws estimates, errors and data symbols, forms the conjugate-beamformed signal at
/// `user`, and measures the desired-signal mean and each interference term's power.
pub fn dl_term_oracle<R: RngCore + ?Sized>(
    inst: &DlOracleInstance,
    user: usize,
    trials: usize,
    rng: &mut R,
) -> Result<DlOracleReport> {
    if trials < MIN_ORACLE_TRIALS {
        return Err(Error::OracleRefused("symbol-level oracle needs at least 10^4 trials".into()));
    }
    if user >= inst.user_cells.len() {
        return Err(domain("no such user"));
    }
    let closed = inst.closed_forms(user);
    struct Prepared {
        phi_roots: Vec<CMatrix>,
        own_err_root: Option<(usize, CMatrix)>,
        r_root: CMatrix,
        d: Vec<CMatrix>,
    }
    let prepared: Vec<Prepared> = inst
        .nodes
        .iter()
        .map(|n| {
            let own = n.served.iter().position(|&u| u == user);
            Prepared {
                phi_roots: n.est_cov.iter().map(psd_sqrt).collect(),
                own_err_root: own.map(|j| (j, psd_sqrt(&(&n.r[user] - &n.est_cov[j])))),
                r_root: psd_sqrt(&n.r[user]),
                d: n.d.iter().map(DlOracleInstance::diag).collect(),
            }
        })
        .collect();

    let mut mean_re = Moments::default();
    let mut mean_im = Moments::default();
    let mut vars = [Moments::default(); 3];
    for _ in 0..trials {
        let mut gain = Complex64::new(0.0, 0.0);
        let mut interference = [Complex64::new(0.0, 0.0); 2];
        for (n, p) in inst.nodes.iter().zip(&prepared) {
            let m = n.r[user].nrows();
            let estimates: Vec<CVector> = p.phi_roots.iter().map(|root| root * complex_normal_vector(m, rng)).collect();
            let channel = match &p.own_err_root {
                Some((j, root)) => &estimates[*j] + root * complex_normal_vector(m, rng),
                None => &p.r_root * complex_normal_vector(m, rng),
            };
            for (j, &u) in n.served.iter().enumerate() {
                let g = channel.dotc(&(&p.d[j] * &estimates[j]));
                if u == user {
                    gain += g;
                } else {
                    let symbol = complex_normal(rng);
                    let slot = usize::from(inst.user_cells[u] != inst.user_cells[user]);
                    interference[slot] += g * symbol;
                }
            }
        }
        mean_re.push(gain.re);
        mean_im.push(gain.im);
        let symbol = complex_normal(rng);
        vars[0].push(((gain - closed[0]) * symbol).norm_sqr());
        vars[1].push(interference[0].norm_sqr());
        vars[2].push(interference[1].norm_sqr());
    }
    Ok(DlOracleReport {
        terms: [
            mean_re.check(DL_TERM_NAMES[0], closed[0]),
            vars[0].check(DL_TERM_NAMES[1], closed[1]),
            vars[1].check(DL_TERM_NAMES[2], closed[2]),
            vars[2].check(DL_TERM_NAMES[3], closed[3]),
        ],
        desired_imag: mean_im.check("desired mean (imag)", 0.0),
    })
}
