//! Epoch pipeline (layout, statistics, power control, SINR, SE) and sample summaries.

use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand_core::RngCore;

use crate::config::{EstimatorNormalization, MaxMinScope, Paradigm, PowerControl, ScenarioConfig, UlSampling};
use crate::downlink::{dl_se, dl_sinrs, DlNode, DlNodeMatrices, DownlinkStatistics};
use crate::error::{domain, Error, Result};
use crate::estimation::{block_diag, stack_vectors, EstimatorParams};
use crate::geometry::{generate_layout, NetworkLayout, Point};
use crate::linalg::{CMatrix, CVector};
use crate::power_control::{equal_power_dl, full_power_ul, maxmin_dl_scoped, maxmin_ul_scoped, PowerAllocation, PowerWarning};
use crate::propagation::{scattering_column, BesselTable, CorrelationMatrix, LargeScale, LinkBudget};
use crate::rng::{complex_normal, epoch_stream};
use crate::spectral::{outer_diagonal_sums, q_adjoint, toeplitz_trace, ToeplitzSpectrum};
use crate::uplink::{ul_se, UplinkCellView, UplinkGains, UplinkRealization};

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub enum Link {
    #[cfg_attr(feature = "serde", serde(rename = "UL"))]
    Uplink,
    #[cfg_attr(feature = "serde", serde(rename = "DL"))]
    Downlink,
}

impl Link {
    pub fn as_str(self) -> &'static str {
        match self {
            Link::Uplink => "UL",
            Link::Downlink => "DL",
        }
    }
}

/// What to evaluate in every epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct RunPlan {
    pub uplink: bool,
    pub downlink: bool,
    pub power_modes: Vec<PowerControl>,
    /// Evaluated on the same layouts and fading draws.
    pub normalizations: Vec<EstimatorNormalization>,
}

impl RunPlan {
    /// Both links, the configured power mode and estimator.
    pub fn from_config(cfg: &ScenarioConfig) -> Self {
        Self {
            uplink: true,
            downlink: true,
            power_modes: vec![cfg.power_control],
            normalizations: vec![cfg.estimator_normalization],
        }
    }

    pub fn links(&self) -> Vec<Link> {
        let mut v = Vec::new();
        if self.uplink {
            v.push(Link::Uplink);
        }
        if self.downlink {
            v.push(Link::Downlink);
        }
        v
    }
}

/// Arrays at or below this size are handled with dense packed Hermitian forms,
/// larger ones through their Toeplitz structure and eigenbasis.
const PACKED_MAX_ANTENNAS: usize = 16;

#[derive(Debug, Clone)]
struct NodeInfo {
    cell: usize,
    antennas: usize,
}

#[derive(Debug, Clone)]
struct OwnLink {
    node: usize,
    user: usize,
    spectrum: ToeplitzSpectrum,
}

/// Everything about one epoch that does not depend on the estimator normalization.
#[derive(Debug, Clone)]
pub struct EpochModel {
    pub layout: NetworkLayout,
    nodes: Vec<NodeInfo>,
    cell_nodes: Vec<Vec<usize>>,
    cell_users: Vec<Vec<usize>>,
    large_scale: Vec<LargeScale>,
    columns: Vec<Vec<Complex64>>,
    own: Vec<OwnLink>,
    own_index: Vec<Option<usize>>,
    num_users: usize,
    params: EstimatorParams,
    dl_power: f64,
}

/// Normalization-dependent estimate spectra for one epoch.
#[derive(Debug, Clone)]
pub struct EstimateSet {
    pub mode: EstimatorNormalization,
    phi: Vec<Vec<f64>>,
    theta: Vec<Vec<f64>>,
    sqrt_phi: Vec<Vec<f64>>,
    /// Per cell: packed error/correlation forms of the small nodes, one column per user.
    packed: Vec<DMatrix<f64>>,
}

/// Unit-variance innovations of one small-scale fading realization, one vector per
/// own link; shared by every normalization.
#[derive(Debug, Clone)]
pub struct FadingDraw {
    innovations: Vec<Vec<Complex64>>,
}

fn packed_len(n: usize) -> usize {
    n * n
}

// Real packing with <pack(X), pack(S)> = tr(X S) for Hermitian X, S.
fn pack_hermitian(m: &CMatrix, out: &mut [f64]) {
    let n = m.nrows();
    let mut at = 0;
    for i in 0..n {
        out[at] = m[(i, i)].re;
        at += 1;
    }
    let s2 = core::f64::consts::SQRT_2;
    for i in 0..n {
        for j in i + 1..n {
            out[at] = s2 * m[(i, j)].re;
            out[at + 1] = s2 * m[(i, j)].im;
            at += 2;
        }
    }
}

fn pack_outer(v: &[Complex64], out: &mut [f64]) {
    let n = v.len();
    let mut at = 0;
    for x in v {
        out[at] = x.norm_sqr();
        at += 1;
    }
    let s2 = core::f64::consts::SQRT_2;
    for i in 0..n {
        for j in i + 1..n {
            let z = v[i] * v[j].conj();
            out[at] = s2 * z.re;
            out[at + 1] = s2 * z.im;
            at += 2;
        }
    }
}

impl EpochModel {
    /// Draws the layout and every large-scale gain from `rng`, in that order.
    pub fn new<R: RngCore + ?Sized>(cfg: &ScenarioConfig, rng: &mut R) -> Self {
        let layout = generate_layout(cfg, rng);
        let mut nodes = Vec::new();
        let mut positions: Vec<(Point, f64)> = Vec::new();
        let mut cell_nodes = vec![Vec::new(); cfg.num_cells];
        for c in 0..cfg.num_cells {
            if c < layout.cbs_positions.len() {
                cell_nodes[c].push(nodes.len());
                nodes.push(NodeInfo { cell: c, antennas: cfg.cbs_antennas });
                positions.push((layout.cbs_positions[c], layout.cbs_orientations[c]));
            }
            for (i, &(cell, p)) in layout.eap_positions.iter().enumerate() {
                if cell == c {
                    cell_nodes[c].push(nodes.len());
                    nodes.push(NodeInfo { cell: c, antennas: cfg.eap_antennas });
                    positions.push((p, layout.eap_orientations[i]));
                }
            }
        }
        let num_users = layout.user_positions.len();
        let mut cell_users = vec![Vec::new(); cfg.num_cells];
        for (u, &(c, _)) in layout.user_positions.iter().enumerate() {
            cell_users[c].push(u);
        }

        let budget = LinkBudget::from_config(cfg);
        let mut large_scale = Vec::with_capacity(nodes.len() * num_users);
        for &(p, o) in &positions {
            for &(_, up) in &layout.user_positions {
                large_scale.push(budget.large_scale(p, o, up, rng));
            }
        }

        let mut tables: Vec<BesselTable> = Vec::new();
        let mut columns = Vec::with_capacity(large_scale.len());
        let mut own = Vec::new();
        let mut own_index = vec![None; large_scale.len()];
        for (l, node) in nodes.iter().enumerate() {
            let ti = match tables.iter().position(|t| t.antennas() == node.antennas) {
                Some(i) => i,
                None => {
                    tables.push(BesselTable::new(node.antennas, cfg.asd));
                    tables.len() - 1
                }
            };
            for u in 0..num_users {
                let ls = large_scale[l * num_users + u];
                let col = scattering_column(ls.beta, ls.nominal_angle, cfg.asd, &tables[ti], cfg.scattering_model);
                if layout.user_positions[u].0 == node.cell {
                    own_index[l * num_users + u] = Some(own.len());
                    own.push(OwnLink { node: l, user: u, spectrum: ToeplitzSpectrum::new(&col) });
                }
                columns.push(col);
            }
        }
        Self {
            layout,
            nodes,
            cell_nodes,
            cell_users,
            large_scale,
            columns,
            own,
            own_index,
            num_users,
            params: EstimatorParams::from_config(cfg),
            dl_power: cfg.dl_power,
        }
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }

    /// Users of each cell.
    pub fn cell_users(&self) -> &[Vec<usize>] {
        &self.cell_users
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn large_scale(&self, node: usize, user: usize) -> LargeScale {
        self.large_scale[node * self.num_users + user]
    }

    pub fn correlation(&self, node: usize, user: usize) -> CorrelationMatrix {
        CorrelationMatrix::from_toeplitz(&self.columns[node * self.num_users + user])
    }

    /// Smallest eigenvalue over all serving links before clipping, relative to the trace.
    pub fn worst_relative_min_eigenvalue(&self) -> f64 {
        self.own
            .iter()
            .map(|o| {
                let tr = self.large_scale(o.node, o.user).beta * o.spectrum.antennas() as f64;
                o.spectrum.min_raw_value() / tr
            })
            .fold(f64::INFINITY, f64::min)
    }

    fn column(&self, node: usize, user: usize) -> &[Complex64] {
        &self.columns[node * self.num_users + user]
    }

    pub fn estimates(&self, mode: EstimatorNormalization) -> EstimateSet {
        let params = self.params.with_mode(mode);
        let mut phi = Vec::with_capacity(self.own.len());
        let mut theta = Vec::with_capacity(self.own.len());
        let mut sqrt_phi = Vec::with_capacity(self.own.len());
        for o in &self.own {
            let (p, t) = params.spectral_maps(o.spectrum.all_values(), o.spectrum.values());
            sqrt_phi.push(p.iter().map(|x| libm::sqrt(*x)).collect());
            phi.push(p);
            theta.push(t);
        }
        let mut set = EstimateSet { mode, phi, theta, sqrt_phi, packed: Vec::new() };
        set.packed = (0..self.cell_nodes.len()).map(|c| self.pack_cell(c, &set)).collect();
        set
    }

    fn small_nodes(&self, cell: usize) -> impl Iterator<Item = usize> + '_ {
        self.cell_nodes[cell].iter().copied().filter(|&l| self.nodes[l].antennas <= PACKED_MAX_ANTENNAS)
    }

    fn pack_cell(&self, cell: usize, est: &EstimateSet) -> DMatrix<f64> {
        let width: usize = self.small_nodes(cell).map(|l| packed_len(self.nodes[l].antennas)).sum();
        let mut out = DMatrix::zeros(width, self.num_users);
        let mut at = 0;
        for l in self.small_nodes(cell) {
            let n = self.nodes[l].antennas;
            let len = packed_len(n);
            for u in 0..self.num_users {
                let r = self.correlation(l, u).into_entries();
                let m = match self.own_index[l * self.num_users + u] {
                    Some(i) => r - self.own[i].spectrum.weighted_matrix(&est.phi[i]),
                    None => r,
                };
                let mut col = out.column_mut(u);
                pack_hermitian(&m, &mut col.as_mut_slice()[at..at + len]);
            }
            at += len;
        }
        out
    }

    /// Conjugate-beamforming statistics of every node.
    pub fn downlink_statistics(&self, est: &EstimateSet) -> DownlinkStatistics {
        let nodes = self
            .nodes
            .iter()
            .enumerate()
            .map(|(l, node)| {
                let served = self.cell_users[node.cell].clone();
                let mut trace_phi = Vec::with_capacity(served.len());
                let mut cross = DMatrix::zeros(self.num_users, served.len());
                for (j, &u) in served.iter().enumerate() {
                    let i = self.own_index[l * self.num_users + u].expect("served users have own links");
                    trace_phi.push(est.phi[i].iter().sum());
                    let sums = self.own[i].spectrum.weighted_diagonal_sums(&est.phi[i]);
                    for k in 0..self.num_users {
                        cross[(k, j)] = toeplitz_trace(self.column(l, k), &sums).max(0.0);
                    }
                }
                DlNode { cell: node.cell, served, trace_phi, cross }
            })
            .collect();
        DownlinkStatistics {
            nodes,
            num_users: self.num_users,
            dl_power: self.dl_power,
            noise_power: self.params.noise_power,
        }
    }

    /// Same statistics assembled from dense matrices; slow, for cross-checks.
    pub fn downlink_matrices(&self, est: &EstimateSet) -> Vec<DlNodeMatrices> {
        self.nodes
            .iter()
            .enumerate()
            .map(|(l, node)| {
                let served = self.cell_users[node.cell].clone();
                let r = (0..self.num_users).map(|u| self.correlation(l, u).into_entries()).collect();
                let est_cov = served
                    .iter()
                    .map(|&u| {
                        let i = self.own_index[l * self.num_users + u].unwrap();
                        self.own[i].spectrum.weighted_matrix(&est.phi[i])
                    })
                    .collect();
                DlNodeMatrices { cell: node.cell, served, r, est_cov }
            })
            .collect()
    }

    pub fn draw_fading<R: RngCore + ?Sized>(&self, rng: &mut R) -> FadingDraw {
        let innovations = self
            .own
            .iter()
            .map(|o| (0..o.spectrum.antennas()).map(|_| complex_normal(rng)).collect())
            .collect();
        FadingDraw { innovations }
    }

    /// Channel estimate of every own link, in own-link order.
    pub fn realize_estimates(&self, est: &EstimateSet, draw: &FadingDraw) -> Vec<Vec<Complex64>> {
        self.own
            .iter()
            .enumerate()
            .map(|(i, o)| {
                let n = o.spectrum.antennas();
                let coords: Vec<Complex64> =
                    est.sqrt_phi[i].iter().zip(&draw.innovations[i]).map(|(s, z)| z * *s).collect();
                let mut scratch = vec![Complex64::new(0.0, 0.0); n];
                let mut out = vec![Complex64::new(0.0, 0.0); n];
                o.spectrum.synthesize(&coords, &mut scratch, &mut out);
                out
            })
            .collect()
    }

    fn own_link(&self, node: usize, user: usize) -> usize {
        self.own_index[node * self.num_users + user].expect("own link")
    }

    /// Uplink SINR ingredients of one fading realization.
    pub fn uplink_gains(&self, est: &EstimateSet, hats: &[Vec<Complex64>]) -> UplinkGains {
        let k_total = self.num_users;
        let noise_ratio = self.params.noise_power / self.params.ue_power;
        let mut signal = vec![0.0; k_total];
        let mut noise = vec![0.0; k_total];
        let mut interference = DMatrix::zeros(k_total, k_total);
        for (c, users) in self.cell_users.iter().enumerate() {
            let kc = users.len();
            if kc == 0 {
                continue;
            }
            let nodes = &self.cell_nodes[c];
            let mut gram = DMatrix::<Complex64>::zeros(kc, kc);
            for &l in nodes {
                let ids: Vec<usize> = users.iter().map(|&u| self.own_link(l, u)).collect();
                for a in 0..kc {
                    let ha = &hats[ids[a]];
                    gram[(a, a)] += Complex64::new(ha.iter().map(|z| z.norm_sqr()).sum(), 0.0);
                    for b in a + 1..kc {
                        let hb = &hats[ids[b]];
                        let mut acc = Complex64::new(0.0, 0.0);
                        for (x, y) in ha.iter().zip(hb) {
                            acc += x.conj() * y;
                        }
                        gram[(a, b)] += acc;
                    }
                }
            }
            for (a, &k) in users.iter().enumerate() {
                let n2 = gram[(a, a)].re;
                signal[k] = n2 * n2;
                noise[k] = noise_ratio * n2;
                for (b, &j) in users.iter().enumerate() {
                    let g = if a < b { gram[(a, b)] } else { gram[(b, a)] };
                    if a != b {
                        interference[(k, j)] += g.norm_sqr();
                    }
                }
            }

            // Large arrays: Toeplitz traces for correlation terms, eigenbasis for error terms.
            for &l in nodes.iter().filter(|&&l| self.nodes[l].antennas > PACKED_MAX_ANTENNAS) {
                let n = self.nodes[l].antennas;
                let mut sums = vec![Complex64::new(0.0, 0.0); n];
                let mut rotated = vec![Complex64::new(0.0, 0.0); n];
                for &k in users {
                    let h = &hats[self.own_link(l, k)];
                    outer_diagonal_sums(h, &mut sums);
                    q_adjoint(h, &mut rotated);
                    for j in 0..k_total {
                        match self.own_index[l * k_total + j] {
                            Some(i) => {
                                interference[(k, j)] += self.own[i].spectrum.rotated_energy(&rotated, &est.theta[i]);
                            }
                            None => {
                                interference[(k, j)] += toeplitz_trace(self.column(l, j), &sums);
                            }
                        }
                    }
                }
            }

            // Small arrays: one product of packed outer products with packed forms.
            let packed = &est.packed[c];
            if packed.nrows() > 0 {
                let mut s = DMatrix::zeros(packed.nrows(), kc);
                for (a, &k) in users.iter().enumerate() {
                    let mut col = s.column_mut(a);
                    let slice = col.as_mut_slice();
                    let mut at = 0;
                    for l in self.small_nodes(c) {
                        let len = packed_len(self.nodes[l].antennas);
                        pack_outer(&hats[self.own_link(l, k)], &mut slice[at..at + len]);
                        at += len;
                    }
                }
                let q = s.tr_mul(packed);
                for (a, &k) in users.iter().enumerate() {
                    for j in 0..k_total {
                        interference[(k, j)] += q[(a, j)];
                    }
                }
            }
        }
        UplinkGains { signal, interference, noise }
    }

    /// Dense per-cell uplink views of the same realization; slow, for cross-checks.
    pub fn uplink_realization(&self, est: &EstimateSet, hats: &[Vec<Complex64>], eta: Vec<f64>) -> UplinkRealization {
        let cells = self
            .cell_users
            .iter()
            .enumerate()
            .map(|(c, users)| {
                let nodes = &self.cell_nodes[c];
                let estimates = users
                    .iter()
                    .map(|&u| {
                        let parts: Vec<CVector> =
                            nodes.iter().map(|&l| CVector::from_column_slice(&hats[self.own_link(l, u)])).collect();
                        stack_vectors(&parts)
                    })
                    .collect();
                let err_covs = users
                    .iter()
                    .map(|&u| {
                        let blocks: Vec<CMatrix> = nodes
                            .iter()
                            .map(|&l| {
                                let i = self.own_link(l, u);
                                self.correlation(l, u).into_entries() - self.own[i].spectrum.weighted_matrix(&est.phi[i])
                            })
                            .collect();
                        block_diag(&blocks)
                    })
                    .collect();
                let foreign = (0..self.num_users)
                    .filter(|u| !users.contains(u))
                    .map(|u| {
                        let blocks: Vec<CMatrix> =
                            nodes.iter().map(|&l| self.correlation(l, u).into_entries()).collect();
                        (u, block_diag(&blocks))
                    })
                    .collect();
                UplinkCellView { cell: c, own_users: users.clone(), estimates, err_covs, foreign }
            })
            .collect();
        UplinkRealization {
            cells,
            num_users: self.num_users,
            eta,
            ue_power: self.params.ue_power,
            noise_power: self.params.noise_power,
        }
    }
}

/// SE of every user for one (normalization, link, power mode) in one epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochBlock {
    pub normalization: EstimatorNormalization,
    pub link: Link,
    pub power_mode: PowerControl,
    /// Per user; with per-draw uplink sampling, draw-major blocks of all users.
    pub se: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochWarning {
    pub normalization: EstimatorNormalization,
    pub link: Link,
    pub power_mode: PowerControl,
    pub warning: PowerWarning,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochResult {
    pub epoch: u64,
    pub num_users: usize,
    pub blocks: Vec<EpochBlock>,
    pub warnings: Vec<EpochWarning>,
}

impl EpochResult {
    pub fn block(&self, normalization: EstimatorNormalization, link: Link, mode: PowerControl) -> Option<&EpochBlock> {
        self.blocks
            .iter()
            .find(|b| b.normalization == normalization && b.link == link && b.power_mode == mode)
    }
}

fn dl_allocation(stats: &DownlinkStatistics, mode: PowerControl, scope: MaxMinScope) -> PowerAllocation {
    match mode {
        PowerControl::FullEqual => equal_power_dl(stats),
        PowerControl::MaxMin => maxmin_dl_scoped(stats, scope),
    }
}

fn ul_allocation(gains: &UplinkGains, cells: &[Vec<usize>], mode: PowerControl, scope: MaxMinScope) -> PowerAllocation {
    match mode {
        PowerControl::FullEqual => full_power_ul(gains.num_users()),
        PowerControl::MaxMin => maxmin_ul_scoped(gains, cells, scope),
    }
}

/// Runs one epoch on its own random stream.
pub fn simulate_epoch(cfg: &ScenarioConfig, plan: &RunPlan, epoch: u64) -> Result<EpochResult> {
    let mut rng = epoch_stream(cfg.seed, epoch);
    let model = EpochModel::new(cfg, &mut rng);
    let k = model.num_users();
    let sets: Vec<EstimateSet> = plan.normalizations.iter().map(|&m| model.estimates(m)).collect();
    let mut blocks = Vec::new();
    let mut warnings = Vec::new();
    let dl_factor = if cfg.dl_prelog { cfg.prelog() } else { 1.0 };

    let mut dl_blocks = Vec::new();
    if plan.downlink {
        for set in &sets {
            let stats = model.downlink_statistics(set);
            for &mode in &plan.power_modes {
                let alloc = dl_allocation(&stats, mode, cfg.maxmin_scope);
                if let Some(w) = alloc.warning {
                    warnings.push(EpochWarning { normalization: set.mode, link: Link::Downlink, power_mode: mode, warning: w });
                }
                let power = alloc.dl_eta.as_ref().ok_or_else(|| domain("downlink allocation missing"))?;
                let se = dl_sinrs(&stats, power).into_iter().map(|g| dl_factor * dl_se(g)).collect();
                dl_blocks.push(EpochBlock { normalization: set.mode, link: Link::Downlink, power_mode: mode, se });
            }
        }
    }

    let mut ul_blocks: Vec<EpochBlock> = Vec::new();
    if plan.uplink {
        let draws = cfg.fading_draws_per_epoch;
        for set in &sets {
            for &mode in &plan.power_modes {
                ul_blocks.push(EpochBlock { normalization: set.mode, link: Link::Uplink, power_mode: mode, se: Vec::new() });
            }
        }
        let per_draw = cfg.ul_sampling == UlSampling::PerDraw;
        let mut sums = vec![vec![0.0; k]; ul_blocks.len()];
        for _ in 0..draws {
            let draw = model.draw_fading(&mut rng);
            for (si, set) in sets.iter().enumerate() {
                let hats = model.realize_estimates(set, &draw);
                let gains = model.uplink_gains(set, &hats);
                for (mi, &mode) in plan.power_modes.iter().enumerate() {
                    let b = si * plan.power_modes.len() + mi;
                    let alloc = ul_allocation(&gains, model.cell_users(), mode, cfg.maxmin_scope);
                    if let Some(w) = alloc.warning {
                        warnings.push(EpochWarning { normalization: set.mode, link: Link::Uplink, power_mode: mode, warning: w });
                    }
                    let se = gains
                        .sinrs(&alloc.ul_eta)
                        .into_iter()
                        .map(|g| ul_se(g, cfg.pilot_length, cfg.coherence_block));
                    if per_draw {
                        ul_blocks[b].se.extend(se);
                    } else {
                        for (acc, v) in sums[b].iter_mut().zip(se) {
                            *acc += v;
                        }
                    }
                }
            }
        }
        if !per_draw {
            for (block, sum) in ul_blocks.iter_mut().zip(sums) {
                block.se = sum.into_iter().map(|s| s / draws as f64).collect();
            }
        }
    }

    for &norm in &plan.normalizations {
        for link in plan.links() {
            for &mode in &plan.power_modes {
                let pool = if link == Link::Uplink { &mut ul_blocks } else { &mut dl_blocks };
                if let Some(i) = pool.iter().position(|b| b.normalization == norm && b.power_mode == mode) {
                    blocks.push(pool.swap_remove(i));
                }
            }
        }
    }
    Ok(EpochResult { epoch, num_users: k, blocks, warnings })
}

/// One SE observation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeSample {
    pub epoch: u64,
    pub paradigm: Paradigm,
    pub link: Link,
    pub power_mode: PowerControl,
    pub user: usize,
    pub se: f64,
}

/// 5th percentile, median and mean of one (link, power mode) sample pool; `None` when empty.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SummaryRow {
    pub paradigm: Paradigm,
    pub link: Link,
    pub power_mode: PowerControl,
    pub p5: Option<f64>,
    pub p50: Option<f64>,
    pub mean: Option<f64>,
    pub epochs: u64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SEResults {
    pub paradigm: Paradigm,
    pub normalization: EstimatorNormalization,
    pub seed: u64,
    pub epochs_run: u64,
    pub samples: Vec<SeSample>,
    pub summary: Vec<SummaryRow>,
    pub warnings: usize,
}

impl SEResults {
    /// Flattens per-epoch results for one normalization, in the order given.
    pub fn from_epochs(
        cfg: &ScenarioConfig,
        plan: &RunPlan,
        normalization: EstimatorNormalization,
        epochs: &[EpochResult],
    ) -> Self {
        let mut samples = Vec::new();
        let mut warnings = 0;
        for e in epochs {
            warnings += e.warnings.iter().filter(|w| w.normalization == normalization).count();
            for b in e.blocks.iter().filter(|b| b.normalization == normalization) {
                let k = e.num_users.max(1);
                for (i, &se) in b.se.iter().enumerate() {
                    samples.push(SeSample {
                        epoch: e.epoch,
                        paradigm: cfg.paradigm,
                        link: b.link,
                        power_mode: b.power_mode,
                        user: i % k,
                        se,
                    });
                }
            }
        }
        let summary = summarize(cfg.paradigm, cfg.seed, epochs.len() as u64, plan, &samples);
        Self { paradigm: cfg.paradigm, normalization, seed: cfg.seed, epochs_run: epochs.len() as u64, samples, summary, warnings }
    }

    pub fn values(&self, link: Link, mode: PowerControl) -> Vec<f64> {
        self.samples.iter().filter(|s| s.link == link && s.power_mode == mode).map(|s| s.se).collect()
    }

    pub fn summary_row(&self, link: Link, mode: PowerControl) -> Option<&SummaryRow> {
        self.summary.iter().find(|r| r.link == link && r.power_mode == mode)
    }

    /// Smallest SE in each epoch, in epoch order of first appearance.
    pub fn per_epoch_min(&self, link: Link, mode: PowerControl) -> Vec<(u64, f64)> {
        let mut out: Vec<(u64, f64)> = Vec::new();
        for s in self.samples.iter().filter(|s| s.link == link && s.power_mode == mode) {
            match out.last_mut() {
                Some((e, m)) if *e == s.epoch => *m = m.min(s.se),
                _ => out.push((s.epoch, s.se)),
            }
        }
        out
    }
}

pub fn summarize(paradigm: Paradigm, seed: u64, epochs: u64, plan: &RunPlan, samples: &[SeSample]) -> Vec<SummaryRow> {
    let mut rows = Vec::new();
    for link in plan.links() {
        for &mode in &plan.power_modes {
            let v: Vec<f64> = samples.iter().filter(|s| s.link == link && s.power_mode == mode).map(|s| s.se).collect();
            let mean = (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
            rows.push(SummaryRow {
                paradigm,
                link,
                power_mode: mode,
                p5: percentile(&v, 0.05).ok(),
                p50: percentile(&v, 0.5).ok(),
                mean,
                epochs,
                seed,
            });
        }
    }
    rows
}

/// Runs `epochs` sequentially; the parallel runner lives in the `hetmimo` crate.
pub fn run_plan(cfg: &ScenarioConfig, plan: &RunPlan) -> Result<Vec<SEResults>> {
    let report = cfg.validate();
    if !report.is_pass() {
        return Err(Error::InvalidConfig(report.to_string()));
    }
    let results = (0..cfg.epochs).map(|e| simulate_epoch(cfg, plan, e)).collect::<Result<Vec<_>>>()?;
    Ok(plan.normalizations.iter().map(|&n| SEResults::from_epochs(cfg, plan, n, &results)).collect())
}

/// Runs the configured experiment on one thread.
pub fn run_simulation(cfg: &ScenarioConfig) -> Result<SEResults> {
    let plan = RunPlan::from_config(cfg);
    Ok(run_plan(cfg, &plan)?.remove(0))
}

/// Right-continuous empirical CDF as `(value, fraction <= value)` steps.
pub fn empirical_cdf(samples: &[f64]) -> Result<Vec<(f64, f64)>> {
    if samples.is_empty() {
        return Err(domain("empirical CDF of an empty sample"));
    }
    let mut v = samples.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let mut out: Vec<(f64, f64)> = Vec::new();
    for (i, &x) in v.iter().enumerate() {
        let frac = (i + 1) as f64 / n;
        match out.last_mut() {
            Some(last) if last.0 == x => last.1 = frac,
            _ => out.push((x, frac)),
        }
    }
    Ok(out)
}

/// Lower order statistic: the `ceil(p n)`-th smallest sample.
pub fn percentile(samples: &[f64], p: f64) -> Result<f64> {
    if samples.is_empty() {
        return Err(domain("percentile of an empty sample"));
    }
    if !(p > 0.0 && p < 1.0) {
        return Err(domain("percentile level must lie strictly between 0 and 1"));
    }
    let mut v = samples.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    let rank = (libm::ceil(p * n as f64 - 1e-9) as usize).clamp(1, n);
    Ok(v[rank - 1])
}

/// Percentile convention, as stated in run metadata.
pub const PERCENTILE_CONVENTION: &str = "lower order statistic at rank ceil(p*n)";

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Preset;
    use crate::linalg::frobenius;
    use crate::uplink::ul_sinr;

    fn small_hetero() -> ScenarioConfig {
        let mut cfg = Preset::HeteroQuarter.config();
        cfg.cbs_antennas = 20;
        cfg.eap_count = 3;
        cfg.users_per_cell = 2;
        cfg.users_total = 8;
        cfg.pilot_length = 2;
        cfg.epochs = 3;
        cfg.fading_draws_per_epoch = 2;
        cfg
    }

    fn small_cell_free() -> ScenarioConfig {
        let mut cfg = Preset::CellFree512.config();
        cfg.eap_count = 6;
        cfg.users_total = 3;
        cfg.users_per_cell = 3;
        cfg.epochs = 3;
        cfg.fading_draws_per_epoch = 2;
        cfg
    }

    #[test]
    fn fast_uplink_matches_dense_realization() {
        for cfg in [small_hetero(), small_cell_free()] {
            for mode in [EstimatorNormalization::PilotScaled, EstimatorNormalization::StandardMmse] {
                let mut rng = epoch_stream(3, 1);
                let model = EpochModel::new(&cfg, &mut rng);
                let set = model.estimates(mode);
                let draw = model.draw_fading(&mut rng);
                let hats = model.realize_estimates(&set, &draw);
                let fast = model.uplink_gains(&set, &hats);
                let eta: Vec<f64> = (0..model.num_users()).map(|u| 0.3 + 0.7 * ((u * 7) % 5) as f64 / 4.0).collect();
                let dense = model.uplink_realization(&set, &hats, eta.clone());
                let reference = UplinkGains::from_realization(&dense).unwrap();
                for k in 0..model.num_users() {
                    let c = dense.serving_cell(k).unwrap();
                    let a = fast.sinr(&eta, k);
                    let b = ul_sinr(&dense, c, k).unwrap();
                    assert!((a - b).abs() <= 1e-9 * b, "{:?} user {k}: {a} vs {b}", cfg.paradigm);
                    assert!((fast.signal[k] - reference.signal[k]).abs() <= 1e-9 * reference.signal[k]);
                }
            }
        }
    }

    #[test]
    fn fast_downlink_matches_dense_matrices() {
        for cfg in [small_hetero(), small_cell_free()] {
            let model = EpochModel::new(&cfg, &mut epoch_stream(8, 2));
            let set = model.estimates(EstimatorNormalization::StandardMmse);
            let fast = model.downlink_statistics(&set);
            let dense = DownlinkStatistics::from_matrices(&model.downlink_matrices(&set), cfg.dl_power, cfg.noise_power).unwrap();
            for (a, b) in fast.nodes.iter().zip(&dense.nodes) {
                for (x, y) in a.trace_phi.iter().zip(&b.trace_phi) {
                    assert!((x - y).abs() <= 1e-9 * y);
                }
                let scale = b.cross.iter().copied().fold(0.0, f64::max);
                assert!((&a.cross - &b.cross).amax() <= 1e-9 * scale);
            }
        }
    }

    #[test]
    fn estimates_have_their_covariance() {
        let cfg = small_cell_free();
        let model = EpochModel::new(&cfg, &mut epoch_stream(1, 1));
        let set = model.estimates(EstimatorNormalization::StandardMmse);
        let mut rng = epoch_stream(1, 2);
        let (node, user) = (model.own[0].node, model.own[0].user);
        let target = model.own[0].spectrum.weighted_matrix(&set.phi[0]);
        let n = model.nodes[node].antennas;
        let mut cov = CMatrix::zeros(n, n);
        let trials = 20_000;
        for _ in 0..trials {
            let d = model.draw_fading(&mut rng);
            let h = CVector::from_vec(model.realize_estimates(&set, &d).swap_remove(0));
            cov += &h * h.adjoint();
        }
        cov /= Complex64::new(trials as f64, 0.0);
        assert!(frobenius(&(cov - &target)) < 0.05 * frobenius(&target), "user {user}");
    }

    #[test]
    fn epoch_is_reproducible() {
        let cfg = small_hetero();
        let plan = RunPlan { power_modes: vec![PowerControl::FullEqual, PowerControl::MaxMin], ..RunPlan::from_config(&cfg) };
        assert_eq!(simulate_epoch(&cfg, &plan, 2).unwrap(), simulate_epoch(&cfg, &plan, 2).unwrap());
    }

    #[test]
    fn normalizations_share_layouts_and_draws() {
        let cfg = small_hetero();
        let both = RunPlan {
            normalizations: vec![EstimatorNormalization::PilotScaled, EstimatorNormalization::StandardMmse],
            ..RunPlan::from_config(&cfg)
        };
        let joint = simulate_epoch(&cfg, &both, 1).unwrap();
        let mut solo_cfg = cfg.clone();
        solo_cfg.estimator_normalization = EstimatorNormalization::StandardMmse;
        let solo = simulate_epoch(&solo_cfg, &RunPlan::from_config(&solo_cfg), 1).unwrap();
        let a = joint.block(EstimatorNormalization::StandardMmse, Link::Uplink, PowerControl::FullEqual).unwrap();
        let b = solo.block(EstimatorNormalization::StandardMmse, Link::Uplink, PowerControl::FullEqual).unwrap();
        assert_eq!(a.se, b.se);
    }

    #[test]
    fn sample_counts_and_nonnegativity() {
        let cfg = small_hetero();
        let r = run_simulation(&cfg).unwrap();
        assert_eq!(r.samples.len() as u64, cfg.epochs * cfg.users_total as u64 * 2);
        assert!(r.samples.iter().all(|s| s.se >= 0.0 && s.se.is_finite()));
    }

    #[test]
    fn zero_epochs_give_empty_results() {
        let mut cfg = small_hetero();
        cfg.epochs = 0;
        let r = run_simulation(&cfg).unwrap();
        assert!(r.samples.is_empty());
        assert!(r.summary.iter().all(|s| s.p5.is_none() && s.mean.is_none()));
    }

    #[test]
    fn invalid_config_is_rejected() {
        let mut cfg = small_hetero();
        cfg.pilot_length = 500;
        assert!(matches!(run_simulation(&cfg), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn cdf_steps() {
        assert_eq!(empirical_cdf(&[3.0, 1.0, 2.0]).unwrap(), vec![(1.0, 1.0 / 3.0), (2.0, 2.0 / 3.0), (3.0, 1.0)]);
        assert_eq!(empirical_cdf(&[2.0, 2.0]).unwrap(), vec![(2.0, 1.0)]);
        assert!(empirical_cdf(&[]).is_err());
    }

    #[test]
    fn cdf_of_uniform_draws_is_near_identity() {
        let mut rng = epoch_stream(12, 0);
        let v: Vec<f64> = (0..10_000).map(|_| crate::rng::uniform(&mut rng)).collect();
        let worst = empirical_cdf(&v).unwrap().iter().map(|(x, f)| (f - x).abs()).fold(0.0, f64::max);
        assert!(worst < 0.03, "{worst}");
    }

    #[test]
    fn percentile_order_statistics() {
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(percentile(&v, 0.05).unwrap(), 5.0);
        assert_eq!(percentile(&[4.2], 0.3).unwrap(), 4.2);
        assert!(percentile(&v, 0.0).is_err() && percentile(&v, 1.0).is_err() && percentile(&[], 0.5).is_err());
    }

    #[test]
    fn normal_fifth_percentile() {
        let mut rng = epoch_stream(13, 0);
        let v: Vec<f64> = (0..100_000).map(|_| crate::rng::standard_normal(&mut rng)).collect();
        let p = percentile(&v, 0.05).unwrap();
        assert!((p + 1.645).abs() < 0.03, "{p}");
    }
}
