//! Fixed-seed oracle suite: symbol-level UL/DL term checks, estimator regression,
//! estimation identities and power-control grid searches on small random instances.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use nalgebra::DVector;
use rand_core::RngCore;

use crate::config::EstimatorNormalization;
use crate::downlink::{DlNodeMatrices, DlOracleInstance, DlOracleNode, DownlinkStatistics};
use crate::error::Result;
use crate::estimation::{block_diag, draw_estimate_pair, estimation_stats, pilot_regression_oracle, stack_vectors, EstimatorParams};
use crate::linalg::{frobenius, min_eigenvalue, CMatrix, CVector};
use crate::power_control::{grid_oracle_dl, grid_oracle_ul, maxmin_dl_restricted, maxmin_ul};
use crate::propagation::{local_scattering_r, CorrelationMatrix};
use crate::rng::{epoch_stream, uniform};
use crate::uplink::{ul_interference_oracle, UplinkCellView, UplinkGains, UplinkRealization};

/// Acceptance threshold of the symbol-level oracles, in standard errors.
pub const ORACLE_SIGMAS: f64 = 5.0;
/// Relative slack of max-min against the grid search.
pub const GRID_SLACK: f64 = 0.01;

/// Deliberate defects used to confirm the suite notices them.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    /// Negates the noise term of the uplink SINR denominator.
    NoiseSign,
    /// Negates the inter-cell term of the downlink SINR denominator.
    InterCellSign,
}

impl Fault {
    pub fn as_str(self) -> &'static str {
        match self {
            Fault::NoiseSign => "noise-sign",
            Fault::InterCellSign => "inter-cell-sign",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [Fault::NoiseSign, Fault::InterCellSign].into_iter().find(|f| f.as_str() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuiteOptions {
    pub seed: u64,
    /// Random instances per oracle family.
    pub instances: usize,
    pub trials: usize,
    pub fault: Option<Fault>,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        Self { seed: 2024, instances: 4, trials: 10_000, fault: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckRow {
    pub name: String,
    pub detail: String,
    pub pass: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SuiteReport {
    pub rows: Vec<CheckRow>,
}

impl SuiteReport {
    pub fn is_pass(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }

    fn push(&mut self, name: String, detail: String, pass: bool) {
        self.rows.push(CheckRow { name, detail, pass });
    }
}

impl fmt::Display for SuiteReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let width = self.rows.iter().map(|r| r.name.len()).max().unwrap_or(0);
        for r in &self.rows {
            let verdict = if r.pass { "pass" } else { "FAIL" };
            writeln!(f, "{verdict}  {:width$}  {}", r.name, r.detail)?;
        }
        let failed = self.rows.iter().filter(|r| !r.pass).count();
        write!(f, "{} checks, {} failed", self.rows.len(), failed)
    }
}

fn pick<R: RngCore + ?Sized>(rng: &mut R, lo: usize, hi: usize) -> usize {
    lo + ((uniform(rng) * (hi - lo + 1) as f64) as usize).min(hi - lo)
}

fn random_mode<R: RngCore + ?Sized>(rng: &mut R) -> EstimatorNormalization {
    if uniform(rng) < 0.5 {
        EstimatorNormalization::PilotScaled
    } else {
        EstimatorNormalization::StandardMmse
    }
}

/// A small multi-cell network with drawn correlation matrices and estimates.
#[derive(Debug, Clone)]
pub struct ToyNetwork {
    pub user_cells: Vec<usize>,
    /// Per cell, the antenna count of each node.
    pub cell_nodes: Vec<Vec<usize>>,
    /// `r[cell][node][user]`.
    pub r: Vec<Vec<Vec<CMatrix>>>,
    /// `est_cov[cell][node][user]`, only meaningful for the cell's own users.
    pub est_cov: Vec<Vec<Vec<CMatrix>>>,
    /// `estimate[cell][node][user]` drawn from `CN(0, Phi)`.
    pub estimate: Vec<Vec<Vec<CVector>>>,
    pub ue_power: f64,
    pub noise_power: f64,
}

/// Draws a network with up to `max_cells` cells, `users` users, and node sizes in
/// `1..=max_antennas`; every user is served by some cell.
pub fn random_toy<R: RngCore + ?Sized>(rng: &mut R, max_cells: usize, users: usize, max_antennas: usize) -> Result<ToyNetwork> {
    let cells = pick(rng, 1, max_cells.max(1));
    let user_cells: Vec<usize> = (0..users).map(|u| if u < cells { u } else { pick(rng, 0, cells - 1) }).collect();
    let params = EstimatorParams { ue_power: 0.1, pilot_length: pick(rng, 1, 4), noise_power: 0.02, mode: random_mode(rng) };
    let mut cell_nodes = Vec::new();
    let mut r = Vec::new();
    let mut est_cov = Vec::new();
    let mut estimate = Vec::new();
    for c in 0..cells {
        let nodes: Vec<usize> = (0..pick(rng, 1, 2)).map(|_| pick(rng, 1, max_antennas.max(1))).collect();
        let mut rc = Vec::new();
        let mut pc = Vec::new();
        let mut ec = Vec::new();
        for &n in &nodes {
            let mut rn = Vec::new();
            let mut pn = Vec::new();
            let mut en = Vec::new();
            for &uc in &user_cells {
                let beta = libm::pow(10.0, 2.0 * uniform(rng) - 1.0);
                let angle = (2.0 * uniform(rng) - 1.0) * core::f64::consts::PI;
                let asd = 0.05 + 0.5 * uniform(rng);
                let corr = local_scattering_r(beta, angle, asd, n)?;
                if uc == c {
                    let stats = estimation_stats(&corr, &params)?;
                    let (e, _) = draw_estimate_pair(&stats, rng)?;
                    pn.push(stats.est_cov);
                    en.push(e);
                } else {
                    pn.push(CMatrix::zeros(n, n));
                    en.push(CVector::zeros(n));
                }
                rn.push(corr.into_entries());
            }
            rc.push(rn);
            pc.push(pn);
            ec.push(en);
        }
        cell_nodes.push(nodes);
        r.push(rc);
        est_cov.push(pc);
        estimate.push(ec);
    }
    Ok(ToyNetwork { user_cells, cell_nodes, r, est_cov, estimate, ue_power: params.ue_power, noise_power: params.noise_power })
}

impl ToyNetwork {
    pub fn num_users(&self) -> usize {
        self.user_cells.len()
    }

    pub fn uplink(&self, eta: Vec<f64>) -> UplinkRealization {
        let cells = (0..self.cell_nodes.len())
            .map(|c| {
                let own: Vec<usize> = (0..self.num_users()).filter(|&u| self.user_cells[u] == c).collect();
                let nodes = 0..self.cell_nodes[c].len();
                let estimates = own
                    .iter()
                    .map(|&u| stack_vectors(&nodes.clone().map(|l| self.estimate[c][l][u].clone()).collect::<Vec<_>>()))
                    .collect();
                let err_covs = own
                    .iter()
                    .map(|&u| {
                        block_diag(&nodes.clone().map(|l| &self.r[c][l][u] - &self.est_cov[c][l][u]).collect::<Vec<_>>())
                    })
                    .collect();
                let foreign = (0..self.num_users())
                    .filter(|u| !own.contains(u))
                    .map(|u| (u, block_diag(&nodes.clone().map(|l| self.r[c][l][u].clone()).collect::<Vec<_>>())))
                    .collect();
                UplinkCellView { cell: c, own_users: own, estimates, err_covs, foreign }
            })
            .collect();
        UplinkRealization { cells, num_users: self.num_users(), eta, ue_power: self.ue_power, noise_power: self.noise_power }
    }

    pub fn downlink_matrices(&self) -> Vec<DlNodeMatrices> {
        let mut out = Vec::new();
        for (c, nodes) in self.cell_nodes.iter().enumerate() {
            let served: Vec<usize> = (0..self.num_users()).filter(|&u| self.user_cells[u] == c).collect();
            for l in 0..nodes.len() {
                out.push(DlNodeMatrices {
                    cell: c,
                    served: served.clone(),
                    r: self.r[c][l].clone(),
                    est_cov: served.iter().map(|&u| self.est_cov[c][l][u].clone()).collect(),
                });
            }
        }
        out
    }

    /// Symbol-level downlink instance with random diagonal power matrices.
    pub fn downlink_oracle<R: RngCore + ?Sized>(&self, rng: &mut R) -> DlOracleInstance {
        let nodes = self
            .downlink_matrices()
            .into_iter()
            .map(|m| {
                let n = m.r[0].nrows();
                let d = m.served.iter().map(|_| DVector::from_fn(n, |_, _| 0.2 + uniform(rng))).collect();
                DlOracleNode { cell: m.cell, served: m.served, r: m.r, est_cov: m.est_cov, d }
            })
            .collect();
        DlOracleInstance { nodes, user_cells: self.user_cells.clone() }
    }
}

fn z_detail(names: &[&str], z: &[f64]) -> String {
    let worst = z.iter().copied().fold(0.0, f64::max);
    let i = z.iter().position(|&x| x == worst).unwrap_or(0);
    format!("max |z| = {:.2} ({})", worst, names.get(i).copied().unwrap_or(""))
}

/// Runs every oracle family on instances drawn from `opts.seed`.
pub fn run_suite(opts: &SuiteOptions) -> Result<SuiteReport> {
    let mut report = SuiteReport::default();
    let mut rng = epoch_stream(opts.seed, 0);

    for i in 0..opts.instances {
        let toy = random_toy(&mut rng, 2, 3, 4)?;
        let eta: Vec<f64> = (0..toy.num_users()).map(|_| 0.1 + 0.9 * uniform(&mut rng)).collect();
        let real = toy.uplink(eta);
        let user = pick(&mut rng, 0, toy.num_users() - 1);
        let cell = toy.user_cells[user];
        let mut ul = ul_interference_oracle(&real, cell, user, opts.trials, &mut rng)?;
        if opts.fault == Some(Fault::NoiseSign) {
            ul.terms[3].closed_form = -ul.terms[3].closed_form;
        }
        let names: Vec<&str> = ul.terms.iter().chain(&ul.cross).map(|t| t.name).collect();
        let z: Vec<f64> = ul.terms.iter().chain(&ul.cross).map(|t| t.z_score()).collect();
        report.push(format!("uplink terms #{i}"), z_detail(&names, &z), ul.passes(ORACLE_SIGMAS));

        let toy = random_toy(&mut rng, 2, 3, 4)?;
        let inst = toy.downlink_oracle(&mut rng);
        let user = pick(&mut rng, 0, toy.num_users() - 1);
        let mut dl = crate::downlink::dl_term_oracle(&inst, user, opts.trials, &mut rng)?;
        if opts.fault == Some(Fault::InterCellSign) && dl.terms[3].closed_form != 0.0 {
            dl.terms[3].closed_form = -dl.terms[3].closed_form;
        }
        let names: Vec<&str> = dl.terms.iter().chain([&dl.desired_imag]).map(|t| t.name).collect();
        let z: Vec<f64> = dl.terms.iter().chain([&dl.desired_imag]).map(|t| t.z_score()).collect();
        report.push(format!("downlink terms #{i}"), z_detail(&names, &z), dl.passes(ORACLE_SIGMAS));
    }
    if opts.fault == Some(Fault::InterCellSign) && !report.rows.iter().any(|r| !r.pass) {
        // Every drawn user may have been alone; force a two-cell instance.
        let toy = loop {
            let t = random_toy(&mut rng, 2, 3, 4)?;
            if t.cell_nodes.len() == 2 {
                break t;
            }
        };
        let inst = toy.downlink_oracle(&mut rng);
        let mut dl = crate::downlink::dl_term_oracle(&inst, 0, opts.trials, &mut rng)?;
        dl.terms[3].closed_form = -dl.terms[3].closed_form;
        report.push("downlink terms (two cells)".into(), format!("z = {:.2}", dl.terms[3].z_score()), dl.passes(ORACLE_SIGMAS));
    }

    // Linear-MMSE regression on simulated pilots versus the standard estimator.
    for i in 0..opts.instances {
        let n = 4;
        let corr = local_scattering_r(0.5 + uniform(&mut rng), uniform(&mut rng) * 2.0 - 1.0, 0.1 + 0.4 * uniform(&mut rng), n)?;
        let params = EstimatorParams {
            ue_power: 0.1,
            pilot_length: pick(&mut rng, 1, 8),
            noise_power: 0.05 + 0.5 * uniform(&mut rng),
            mode: EstimatorNormalization::StandardMmse,
        };
        let target = estimation_stats(&corr, &params)?.est_cov;
        let sample = pilot_regression_oracle(&corr, &params, 20 * opts.trials, &mut rng)?;
        let rel = frobenius(&(&sample - &target)) / frobenius(&target);
        report.push(format!("pilot regression #{i}"), format!("relative error {rel:.4}"), rel < 0.05);
    }

    // Phi + Theta = R with both parts PSD.
    let mut worst_sum = 0.0f64;
    let mut worst_min = 0.0f64;
    for _ in 0..10 * opts.instances {
        let n = pick(&mut rng, 1, 8);
        let corr = random_psd(&mut rng, n);
        for mode in [EstimatorNormalization::PilotScaled, EstimatorNormalization::StandardMmse] {
            let params = EstimatorParams { ue_power: 0.1, pilot_length: pick(&mut rng, 1, 16), noise_power: 0.1, mode };
            let s = estimation_stats(&corr, &params)?;
            let scale = frobenius(corr.entries()).max(f64::MIN_POSITIVE);
            worst_sum = worst_sum.max(frobenius(&(&s.est_cov + &s.err_cov - corr.entries())) / scale);
            worst_min = worst_min.min(min_eigenvalue(&s.est_cov) / scale).min(min_eigenvalue(&s.err_cov) / scale);
        }
    }
    report.push(
        "estimation identities".into(),
        format!("max sum residual {worst_sum:.1e}, min eigenvalue {worst_min:.1e}"),
        worst_sum <= 1e-12 && worst_min >= -1e-12,
    );

    // Two-user power control against exhaustive grids.
    for i in 0..opts.instances {
        let toy = random_toy(&mut rng, 2, 2, 4)?;
        let gains = UplinkGains::from_realization(&toy.uplink(vec![1.0, 1.0]))?;
        let (grid, _) = grid_oracle_ul(&gains, 100);
        let got = maxmin_ul(&gains).achieved_min_sinr.unwrap_or(0.0);
        report.push(
            format!("uplink max-min grid #{i}"),
            format!("bisection {got:.5e} grid {grid:.5e}"),
            (got / grid - 1.0).abs() <= GRID_SLACK,
        );

        let stats = DownlinkStatistics::from_matrices(&toy.downlink_matrices(), 0.2, toy.noise_power)?;
        let (grid, _) = grid_oracle_dl(&stats, 100);
        let got = maxmin_dl_restricted(&stats).achieved_min_sinr.unwrap_or(0.0);
        report.push(
            format!("downlink max-min grid #{i}"),
            format!("bisection {got:.5e} grid {grid:.5e}"),
            (got / grid - 1.0).abs() <= GRID_SLACK,
        );
    }
    Ok(report)
}

/// Random PSD matrix `A A^H / n` with a random rank.
pub fn random_psd<R: RngCore + ?Sized>(rng: &mut R, n: usize) -> CorrelationMatrix {
    let rank = pick(rng, 1, n);
    let a = CMatrix::from_fn(n, rank, |_, _| crate::rng::complex_normal(rng));
    let m = &a * a.adjoint() / nalgebra::Complex::new(n as f64, 0.0);
    CorrelationMatrix::new((&m + m.adjoint()).scale(0.5)).expect("symmetrized")
}
