//! Full/equal power and max-min fair power allocation.
//!
//! Both max-min problems have SINRs linear-fractional in the coefficients, so for a
//! common target `t` the smallest coefficients meeting it solve a linear system
//! `(diag(S) - t I) eta = t N`; `t` is feasible iff that solution is nonnegative and
//! within the power limits. Bisection on `t` then gives the max-min value.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::config::MaxMinScope;
use crate::downlink::{dl_sinrs, DlNode, DlPower, DownlinkStatistics};
use crate::uplink::UplinkGains;

/// Relative width of the final bisection bracket.
pub const BISECTION_TOLERANCE: f64 = 1e-4;
pub const MAX_BISECTIONS: usize = 60;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PowerWarning {
    /// Bisection stopped at the iteration cap; the best feasible point is returned.
    NotConverged,
    /// The max-min search ended below the full/equal allocation, which is returned instead.
    FellBack,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerAllocation {
    pub ul_eta: Vec<f64>,
    pub dl_eta: Option<DlPower>,
    pub achieved_min_sinr: Option<f64>,
    pub warning: Option<PowerWarning>,
}

impl PowerAllocation {
    fn uplink(eta: Vec<f64>, min: Option<f64>, warning: Option<PowerWarning>) -> Self {
        Self { ul_eta: eta, dl_eta: None, achieved_min_sinr: min, warning }
    }

    fn downlink(power: DlPower, min: Option<f64>, warning: Option<PowerWarning>) -> Self {
        Self { ul_eta: Vec::new(), dl_eta: Some(power), achieved_min_sinr: min, warning }
    }
}

fn min_of(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::INFINITY, f64::min)
}

/// Every user at full power.
pub fn full_power_ul(num_users: usize) -> PowerAllocation {
    PowerAllocation::uplink(vec![1.0; num_users], None, None)
}

/// Each node splits its budget equally over the users it serves; users with a zero
/// estimate at a node get nothing there.
pub fn equal_power_dl(stats: &DownlinkStatistics) -> PowerAllocation {
    let eta = stats
        .nodes
        .iter()
        .map(|n| {
            let active = n.trace_phi.iter().filter(|&&t| t > 0.0).count();
            n.trace_phi.iter().map(|&t| if t > 0.0 { 1.0 / (active as f64 * t) } else { 0.0 }).collect()
        })
        .collect();
    PowerAllocation::downlink(DlPower { eta }, None, None)
}

// Smallest coefficients giving every user SINR t, if any.
fn minimal_solution(signal: &[f64], coupling: &DMatrix<f64>, noise: &[f64], t: f64) -> Option<DVector<f64>> {
    let k = signal.len();
    let mut a = coupling.scale(-t);
    for i in 0..k {
        a[(i, i)] += signal[i];
    }
    let b = DVector::from_fn(k, |i, _| t * noise[i]);
    let x = a.lu().solve(&b)?;
    // A positive solution exists only below the Perron bound of t F, so positivity certifies it.
    if x.iter().all(|v| v.is_finite() && *v > 0.0) {
        Some(x)
    } else {
        None
    }
}

struct Bisection {
    lo: f64,
    hi: f64,
    best: Option<DVector<f64>>,
    converged: bool,
}

fn bisect(mut lo: f64, mut hi: f64, mut best: Option<DVector<f64>>, feasible: impl Fn(f64) -> Option<DVector<f64>>) -> Bisection {
    let mut converged = false;
    for _ in 0..MAX_BISECTIONS {
        if hi - lo <= BISECTION_TOLERANCE * hi {
            converged = true;
            break;
        }
        let mid = 0.5 * (lo + hi);
        match feasible(mid) {
            Some(x) => {
                lo = mid;
                best = Some(x);
            }
            None => hi = mid,
        }
        debug_assert!(lo <= hi);
    }
    if !converged && hi - lo <= BISECTION_TOLERANCE * hi {
        converged = true;
    }
    Bisection { lo, hi, best, converged }
}

/// Max-min fair uplink coefficients in `[0, 1]` for one fading realization.
pub fn maxmin_ul(gains: &UplinkGains) -> PowerAllocation {
    let k = gains.num_users();
    if k == 0 {
        return full_power_ul(0);
    }
    let full = vec![1.0; k];
    let baseline = min_of(&gains.sinrs(&full));
    if gains.signal.contains(&0.0) {
        return PowerAllocation::uplink(full, Some(0.0), None);
    }
    let within_limits = |t: f64| {
        minimal_solution(&gains.signal, &gains.interference, &gains.noise, t)
            .filter(|x| x.iter().all(|&v| v <= 1.0 + 1e-12))
    };
    let hi = (0..k)
        .map(|i| gains.signal[i] / (gains.interference[(i, i)] + gains.noise[i]))
        .fold(f64::INFINITY, f64::min);
    if let Some(x) = within_limits(hi) {
        return finish_ul(gains, x, baseline, false);
    }
    let start = within_limits(baseline);
    let lo = if start.is_some() { baseline } else { 0.0 };
    let b = bisect(lo, hi, start, within_limits);
    debug_assert!(b.lo <= b.hi);
    match b.best {
        Some(x) => finish_ul(gains, x, baseline, !b.converged),
        None => PowerAllocation::uplink(full, Some(baseline), Some(PowerWarning::FellBack)),
    }
}

fn finish_ul(gains: &UplinkGains, x: DVector<f64>, baseline: f64, not_converged: bool) -> PowerAllocation {
    let eta: Vec<f64> = x.iter().map(|v| v.clamp(0.0, 1.0)).collect();
    let achieved = min_of(&gains.sinrs(&eta));
    if achieved < baseline {
        let k = eta.len();
        return PowerAllocation::uplink(vec![1.0; k], Some(baseline), Some(PowerWarning::FellBack));
    }
    PowerAllocation::uplink(eta, Some(achieved), not_converged.then_some(PowerWarning::NotConverged))
}

/// Max-min uplink solved independently in each cell, with every other cell's users
/// transmitting at full power; `cells` lists the users of each cell.
pub fn maxmin_ul_per_cell(gains: &UplinkGains, cells: &[Vec<usize>]) -> PowerAllocation {
    let k = gains.num_users();
    let mut eta = vec![1.0; k];
    let mut warning = None;
    for users in cells.iter().filter(|u| !u.is_empty()) {
        let sub = UplinkGains {
            signal: users.iter().map(|&u| gains.signal[u]).collect(),
            interference: DMatrix::from_fn(users.len(), users.len(), |a, b| gains.interference[(users[a], users[b])]),
            noise: users
                .iter()
                .map(|&u| gains.noise[u] + (0..k).filter(|j| !users.contains(j)).map(|j| gains.interference[(u, j)]).sum::<f64>())
                .collect(),
        };
        let a = maxmin_ul(&sub);
        for (&u, &e) in users.iter().zip(&a.ul_eta) {
            eta[u] = e;
        }
        warning = warning.or(a.warning);
    }
    let achieved = min_of(&gains.sinrs(&eta));
    PowerAllocation::uplink(eta, Some(achieved), warning)
}

/// Max-min uplink over the requested scope.
pub fn maxmin_ul_scoped(gains: &UplinkGains, cells: &[Vec<usize>], scope: MaxMinScope) -> PowerAllocation {
    match scope {
        MaxMinScope::Network => maxmin_ul(gains),
        MaxMinScope::PerCell => maxmin_ul_per_cell(gains, cells),
    }
}

/// Per-user view of downlink statistics when a user's coefficient is shared by all
/// of its serving nodes: `gamma_k = eta_k A_k / (sum_j eta_j B[k, j] + n_k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SharedDlProblem {
    pub signal: Vec<f64>,
    pub coupling: DMatrix<f64>,
    pub noise: Vec<f64>,
    /// Largest coefficient each user's serving nodes allow on their own.
    pub eta_max: Vec<f64>,
}

impl SharedDlProblem {
    pub fn new(stats: &DownlinkStatistics) -> Self {
        let k = stats.num_users;
        let mut amp = vec![0.0; k];
        let mut coupling = DMatrix::zeros(k, k);
        let mut eta_max = vec![f64::INFINITY; k];
        for n in &stats.nodes {
            for (j, &u) in n.served.iter().enumerate() {
                amp[u] += n.trace_phi[j];
                if n.trace_phi[j] > 0.0 {
                    eta_max[u] = eta_max[u].min(1.0 / n.trace_phi[j]);
                }
                for kk in 0..k {
                    coupling[(kk, u)] += n.cross[(kk, j)];
                }
            }
        }
        Self { signal: amp.iter().map(|a| a * a).collect(), coupling, noise: vec![stats.noise_over_power(); k], eta_max }
    }

    pub fn sinrs(&self, eta: &[f64]) -> Vec<f64> {
        (0..self.signal.len())
            .map(|i| {
                if eta[i] == 0.0 || self.signal[i] == 0.0 {
                    return 0.0;
                }
                let d: f64 = self.coupling.row(i).iter().zip(eta).map(|(b, e)| b * e).sum();
                eta[i] * self.signal[i] / (d + self.noise[i])
            })
            .collect()
    }
}

fn budgets_hold(stats: &DownlinkStatistics, eta: &[f64]) -> bool {
    stats.budget_usage(&DlPower::per_user(stats, eta)).iter().all(|&u| u <= 1.0 + 1e-9)
}

// Bisection on the shared-coefficient problem; `t0` is the weakest SINR of the
// reference allocation and seeds the lower bracket when feasible.
fn solve_shared(stats: &DownlinkStatistics, prob: &SharedDlProblem, t0: f64) -> (Vec<f64>, f64, Option<PowerWarning>) {
    let k = prob.signal.len();
    if k == 0 || prob.signal.contains(&0.0) {
        return (vec![0.0; k], 0.0, None);
    }
    let feasible = |t: f64| {
        minimal_solution(&prob.signal, &prob.coupling, &prob.noise, t).filter(|x| budgets_hold(stats, x.as_slice()))
    };
    let hi = (0..k)
        .map(|i| {
            let e = prob.eta_max[i];
            e * prob.signal[i] / (e * prob.coupling[(i, i)] + prob.noise[i])
        })
        .fold(f64::INFINITY, f64::min);
    let result = |x: DVector<f64>, warn: bool| {
        let eta: Vec<f64> = x.iter().map(|v| v.max(0.0)).collect();
        let achieved = min_of(&prob.sinrs(&eta));
        (eta, achieved, warn.then_some(PowerWarning::NotConverged))
    };
    if let Some(x) = feasible(hi) {
        return result(x, false);
    }
    let (lo, hi, start) = match feasible(t0) {
        Some(x) if t0 < hi => (t0, hi, Some(x)),
        _ => (0.0, t0.min(hi), None),
    };
    let b = bisect(lo, hi, start, feasible);
    match b.best {
        Some(x) => result(x, !b.converged),
        None => (vec![0.0; k], 0.0, Some(PowerWarning::NotConverged)),
    }
}

/// Max-min downlink with one coefficient per user shared across its serving nodes.
pub fn maxmin_dl_restricted(stats: &DownlinkStatistics) -> PowerAllocation {
    let prob = SharedDlProblem::new(stats);
    let equal = equal_power_dl(stats);
    let t0 = min_of(&dl_sinrs(stats, equal.dl_eta.as_ref().unwrap()));
    let (eta, achieved, warning) = solve_shared(stats, &prob, t0);
    PowerAllocation::downlink(DlPower::per_user(stats, &eta), Some(achieved), warning)
}

/// Max-min downlink: the shared-coefficient optimum, or the equal split when that
/// leaves the weakest user better off.
pub fn maxmin_dl(stats: &DownlinkStatistics) -> PowerAllocation {
    let restricted = maxmin_dl_restricted(stats);
    let equal = equal_power_dl(stats);
    let equal_min = min_of(&dl_sinrs(stats, equal.dl_eta.as_ref().unwrap()));
    let achieved = restricted.achieved_min_sinr.unwrap_or(0.0);
    if achieved < equal_min {
        return PowerAllocation { achieved_min_sinr: Some(equal_min), warning: Some(PowerWarning::FellBack), ..equal };
    }
    restricted
}

/// Max-min downlink solved independently in each cell: the cell's nodes re-split
/// their budgets while every other node keeps the equal split. A cell whose weakest
/// user would lose against the equal split keeps it, and so does the whole network
/// when the combined allocation lowers the network-wide minimum.
pub fn maxmin_dl_per_cell(stats: &DownlinkStatistics) -> PowerAllocation {
    let equal = equal_power_dl(stats);
    let equal_power = equal.dl_eta.clone().unwrap();
    let equal_sinrs = dl_sinrs(stats, &equal_power);
    let mut cells: Vec<usize> = stats.nodes.iter().map(|n| n.cell).collect();
    cells.sort_unstable();
    cells.dedup();
    let mut power = equal_power.clone();
    let mut warning = None;
    for c in cells {
        let nodes: Vec<usize> = (0..stats.nodes.len()).filter(|&l| stats.nodes[l].cell == c).collect();
        let mut users: Vec<usize> = nodes.iter().flat_map(|&l| stats.nodes[l].served.iter().copied()).collect();
        users.sort_unstable();
        users.dedup();
        if users.is_empty() {
            continue;
        }
        let index = |u: usize| users.iter().position(|&x| x == u).unwrap();
        let sub = DownlinkStatistics {
            nodes: nodes
                .iter()
                .map(|&l| {
                    let n = &stats.nodes[l];
                    DlNode {
                        cell: c,
                        served: n.served.iter().map(|&u| index(u)).collect(),
                        trace_phi: n.trace_phi.clone(),
                        cross: DMatrix::from_fn(users.len(), n.served.len(), |a, j| n.cross[(users[a], j)]),
                    }
                })
                .collect(),
            num_users: users.len(),
            dl_power: stats.dl_power,
            noise_power: stats.noise_power,
        };
        let mut prob = SharedDlProblem::new(&sub);
        for (a, &u) in users.iter().enumerate() {
            for (l, n) in stats.nodes.iter().enumerate().filter(|(_, n)| n.cell != c) {
                prob.noise[a] += n.cross.row(u).iter().zip(&equal_power.eta[l]).map(|(x, e)| x * e).sum::<f64>();
            }
        }
        let t0 = users.iter().map(|&u| equal_sinrs[u]).fold(f64::INFINITY, f64::min);
        let (eta, achieved, w) = solve_shared(&sub, &prob, t0);
        if achieved < t0 {
            warning = warning.or(Some(PowerWarning::FellBack));
            continue;
        }
        warning = warning.or(w);
        for &l in &nodes {
            power.eta[l] = stats.nodes[l].served.iter().map(|&u| eta[index(u)]).collect();
        }
    }
    let achieved = min_of(&dl_sinrs(stats, &power));
    let equal_min = min_of(&equal_sinrs);
    if achieved < equal_min {
        return PowerAllocation { achieved_min_sinr: Some(equal_min), warning: Some(PowerWarning::FellBack), ..equal };
    }
    PowerAllocation::downlink(power, Some(achieved), warning)
}

/// Max-min downlink over the requested scope.
pub fn maxmin_dl_scoped(stats: &DownlinkStatistics, scope: MaxMinScope) -> PowerAllocation {
    match scope {
        MaxMinScope::Network => maxmin_dl(stats),
        MaxMinScope::PerCell => maxmin_dl_per_cell(stats),
    }
}

/// Zoom rounds after the first full grid. Each keeps a fifth of the previous
/// window centred on the incumbent, wide enough to follow a diagonal ridge.
const GRID_ZOOMS: usize = 6;

/// Maximizes `f` over `[0, hi_0] x [0, hi_1]` by a full grid followed by zoomed
/// grids around the incumbent. `f` returns `None` at infeasible points.
fn zoom_grid(hi: [f64; 2], steps: usize, f: impl Fn([f64; 2]) -> Option<f64>) -> (f64, [f64; 2]) {
    let mut best = (f64::NEG_INFINITY, [0.0, 0.0]);
    let mut lo_w = [0.0, 0.0];
    let mut hi_w = hi;
    for _ in 0..=GRID_ZOOMS {
        let h = [(hi_w[0] - lo_w[0]) / steps as f64, (hi_w[1] - lo_w[1]) / steps as f64];
        for i in 0..=steps {
            for j in 0..=steps {
                let eta = [lo_w[0] + h[0] * i as f64, lo_w[1] + h[1] * j as f64];
                if let Some(m) = f(eta) {
                    if m > best.0 {
                        best = (m, eta);
                    }
                }
            }
        }
        for k in 0..2 {
            let half = 0.1 * (hi_w[k] - lo_w[k]);
            lo_w[k] = (best.1[k] - half).max(0.0);
            hi_w[k] = (best.1[k] + half).min(hi[k]);
        }
    }
    best
}

/// Grid search with zoom refinement over `[0, 1]^2` for a two-user uplink.
pub fn grid_oracle_ul(gains: &UplinkGains, steps: usize) -> (f64, [f64; 2]) {
    assert_eq!(gains.num_users(), 2, "grid oracle is for two users");
    zoom_grid([1.0, 1.0], steps, |eta| Some(min_of(&gains.sinrs(&eta))))
}

/// Grid search with zoom refinement for a two-user downlink over shared
/// coefficients `eta_k = g_k eta_max_k`, skipping points that break a budget.
pub fn grid_oracle_dl(stats: &DownlinkStatistics, steps: usize) -> (f64, [f64; 2]) {
    assert_eq!(stats.num_users, 2, "grid oracle is for two users");
    let prob = SharedDlProblem::new(stats);
    zoom_grid([prob.eta_max[0], prob.eta_max[1]], steps, |eta| budgets_hold(stats, &eta).then(|| min_of(&prob.sinrs(&eta))))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::downlink::DlNode;

    fn two_user_gains(s: [f64; 2], i: [[f64; 2]; 2], n: [f64; 2]) -> UplinkGains {
        UplinkGains {
            signal: s.to_vec(),
            interference: DMatrix::from_row_slice(2, 2, &[i[0][0], i[0][1], i[1][0], i[1][1]]),
            noise: n.to_vec(),
        }
    }

    #[test]
    fn single_user_uplink_uses_full_power() {
        let g = UplinkGains { signal: vec![4.0], interference: DMatrix::from_element(1, 1, 0.5), noise: vec![1.0] };
        let a = maxmin_ul(&g);
        assert!((a.ul_eta[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn symmetric_uplink_users_get_equal_power() {
        let g = two_user_gains([3.0, 3.0], [[0.1, 0.4], [0.4, 0.1]], [0.5, 0.5]);
        let a = maxmin_ul(&g);
        assert!((a.ul_eta[0] - a.ul_eta[1]).abs() < 1e-9);
        let s = g.sinrs(&a.ul_eta);
        assert!((s[0] - s[1]).abs() < 1e-9 * s[0]);
    }

    #[test]
    fn uplink_sinrs_are_equalized() {
        let g = two_user_gains([5.0, 1.0], [[0.2, 0.3], [0.6, 0.1]], [0.4, 0.3]);
        let a = maxmin_ul(&g);
        let s = g.sinrs(&a.ul_eta);
        assert!((s[0] - s[1]).abs() <= 1e-3 * s[0]);
        assert!(a.ul_eta.iter().any(|&e| (e - 1.0).abs() < 1e-3));
    }

    #[test]
    fn uplink_matches_grid() {
        let g = two_user_gains([2.0, 1.5], [[0.2, 0.5], [0.3, 0.1]], [0.3, 0.2]);
        let a = maxmin_ul(&g);
        let (grid, _) = grid_oracle_ul(&g, 100);
        let got = a.achieved_min_sinr.unwrap();
        assert!((got / grid - 1.0).abs() < 1e-3, "{got} vs {grid}");
    }

    fn single_node(trace: Vec<f64>, cross: DMatrix<f64>) -> DownlinkStatistics {
        let k = trace.len();
        DownlinkStatistics {
            nodes: vec![DlNode { cell: 0, served: (0..k).collect(), trace_phi: trace, cross }],
            num_users: k,
            dl_power: 1.0,
            noise_power: 0.1,
        }
    }

    #[test]
    fn equal_power_fills_each_budget() {
        let s = single_node(vec![2.0, 2.0], DMatrix::from_element(2, 2, 0.1));
        let a = equal_power_dl(&s);
        let p = a.dl_eta.unwrap();
        assert_eq!(p.eta[0][0], p.eta[0][1]);
        assert!((s.budget_usage(&p)[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn equal_power_skips_silent_pairs() {
        let s = single_node(vec![2.0, 0.0, 4.0], DMatrix::from_element(3, 3, 0.1));
        let p = equal_power_dl(&s).dl_eta.unwrap();
        assert_eq!(p.eta[0][1], 0.0);
        assert!((p.eta[0][0] - 0.25).abs() < 1e-15 && (p.eta[0][2] - 0.125).abs() < 1e-15);
    }

    #[test]
    fn single_user_downlink_spends_the_budget() {
        let s = single_node(vec![0.5], DMatrix::from_element(1, 1, 0.2));
        let a = maxmin_dl(&s);
        let p = a.dl_eta.unwrap();
        assert!((p.eta[0][0] - 2.0).abs() < 1e-9);
    }

    #[test]
    fn symmetric_downlink_users_get_equal_sinr() {
        let s = single_node(vec![1.0, 1.0], DMatrix::from_row_slice(2, 2, &[0.3, 0.1, 0.1, 0.3]));
        let a = maxmin_dl_restricted(&s);
        let g = dl_sinrs(&s, a.dl_eta.as_ref().unwrap());
        assert!((g[0] - g[1]).abs() < 1e-9 * g[0]);
    }

    #[test]
    fn downlink_matches_grid_and_respects_budgets() {
        let s = DownlinkStatistics {
            nodes: vec![
                DlNode { cell: 0, served: vec![0], trace_phi: vec![0.8], cross: DMatrix::from_row_slice(2, 1, &[0.5, 0.05]) },
                DlNode { cell: 1, served: vec![1], trace_phi: vec![0.3], cross: DMatrix::from_row_slice(2, 1, &[0.02, 0.1]) },
            ],
            num_users: 2,
            dl_power: 1.0,
            noise_power: 0.05,
        };
        let a = maxmin_dl_restricted(&s);
        let (grid, _) = grid_oracle_dl(&s, 100);
        let got = a.achieved_min_sinr.unwrap();
        assert!((got / grid - 1.0).abs() < 1e-3, "{got} vs {grid}");
        assert!(s.budget_usage(a.dl_eta.as_ref().unwrap()).iter().all(|&u| u <= 1.0 + 1e-9));
    }

    #[test]
    fn maxmin_never_below_baseline() {
        let s = DownlinkStatistics {
            nodes: vec![
                DlNode { cell: 0, served: vec![0, 1], trace_phi: vec![1.0, 0.01], cross: DMatrix::from_element(2, 2, 0.01) },
                DlNode { cell: 0, served: vec![0, 1], trace_phi: vec![0.01, 1.0], cross: DMatrix::from_element(2, 2, 0.01) },
            ],
            num_users: 2,
            dl_power: 1.0,
            noise_power: 0.1,
        };
        let eq = min_of(&dl_sinrs(&s, equal_power_dl(&s).dl_eta.as_ref().unwrap()));
        let mm = maxmin_dl(&s);
        assert!(mm.achieved_min_sinr.unwrap() >= eq * (1.0 - 1e-6));
        let got = min_of(&dl_sinrs(&s, mm.dl_eta.as_ref().unwrap()));
        assert!(got >= eq * (1.0 - 1e-6));
    }
}
