use hetmimo_core::config::{EstimatorNormalization, MaxMinScope, PathLossParams, Preset};
use hetmimo_core::downlink::{dl_sinrs, DlNode, DownlinkStatistics};
use hetmimo_core::estimation::{estimation_stats, EstimatorParams};
use hetmimo_core::geometry::{containing_cell, generate_layout};
use hetmimo_core::linalg::{frobenius, hermitian_asymmetry, min_eigenvalue};
use hetmimo_core::power_control::{equal_power_dl, full_power_ul, maxmin_dl_scoped, maxmin_ul, maxmin_ul_per_cell};
use hetmimo_core::propagation::{local_scattering_r, path_loss_db};
use hetmimo_core::rng::epoch_stream;
use hetmimo_core::simulation::{empirical_cdf, percentile};
use hetmimo_core::uplink::UplinkGains;
use hetmimo_core::validation::random_psd;
use nalgebra::DMatrix;
use proptest::prelude::*;

fn min_of(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::INFINITY, f64::min)
}

fn mode() -> impl Strategy<Value = EstimatorNormalization> {
    prop_oneof![Just(EstimatorNormalization::PilotScaled), Just(EstimatorNormalization::StandardMmse)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn estimate_and_error_split_the_correlation(
        seed in any::<u64>(),
        n in 1usize..8,
        tau in 1usize..16,
        noise_db in -40.0f64..20.0,
        m in mode(),
    ) {
        let r = random_psd(&mut epoch_stream(seed, 0), n);
        let p = EstimatorParams { ue_power: 0.1, pilot_length: tau, noise_power: 10f64.powf(noise_db / 10.0), mode: m };
        let s = estimation_stats(&r, &p).unwrap();
        let scale = frobenius(r.entries());
        prop_assert!(frobenius(&(&s.est_cov + &s.err_cov - r.entries())) <= 1e-12 * scale);
        prop_assert!(min_eigenvalue(&s.est_cov) >= -1e-12 * scale);
        prop_assert!(min_eigenvalue(&s.err_cov) >= -1e-12 * scale);
        prop_assert!(hermitian_asymmetry(&s.est_cov) <= 1e-12 * scale);
    }

    #[test]
    fn scattering_correlation_is_a_valid_covariance(
        beta in 1e-14f64..1.0,
        angle in -3.2f64..3.2,
        asd_deg in 1.0f64..60.0,
        n in 1usize..40,
    ) {
        let r = local_scattering_r(beta, angle, asd_deg.to_radians(), n).unwrap();
        prop_assert!((r.trace() - n as f64 * beta).abs() <= 1e-9 * n as f64 * beta);
        prop_assert!(hermitian_asymmetry(r.entries()) <= 1e-15 * beta);
        prop_assert!(min_eigenvalue(r.entries()) >= -1e-9 * beta * n as f64);
    }

    #[test]
    fn path_loss_grows_with_distance(a in 0.5f64..5000.0, b in 0.5f64..5000.0) {
        let p = PathLossParams::default();
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assert!(path_loss_db(lo, &p).unwrap() <= path_loss_db(hi, &p).unwrap());
    }

    #[test]
    fn users_and_aps_sit_in_their_cells(seed in any::<u64>(), which in 0usize..4) {
        let cfg = Preset::ALL[which].config();
        let layout = generate_layout(&cfg, &mut epoch_stream(seed, 0));
        prop_assert_eq!(layout.num_users(), cfg.users_total);
        for &(c, p) in layout.user_positions.iter().chain(&layout.eap_positions) {
            prop_assert_eq!(containing_cell(&cfg, p), c);
        }
        if cfg.balanced_drop {
            for c in 0..cfg.num_cells {
                prop_assert_eq!(layout.user_positions.iter().filter(|(cc, _)| *cc == c).count(), cfg.users_per_cell);
            }
        }
    }

    #[test]
    fn percentile_and_cdf_are_consistent(v in prop::collection::vec(-1e3f64..1e3, 1..200), p in 0.001f64..0.999) {
        let q = percentile(&v, p).unwrap();
        let cdf = empirical_cdf(&v).unwrap();
        prop_assert!(cdf.windows(2).all(|w| w[0].0 < w[1].0 && w[0].1 < w[1].1));
        prop_assert_eq!(cdf.last().unwrap().1, 1.0);
        // the percentile is the first step at or above p
        let first = cdf.iter().find(|(_, f)| *f >= p - 1e-9).unwrap().0;
        prop_assert_eq!(q, first);
    }

    #[test]
    fn uplink_maxmin_never_loses_to_full_power(
        sig in prop::collection::vec(1e-3f64..10.0, 1..6),
        seed in any::<u64>(),
    ) {
        let k = sig.len();
        let mut rng = epoch_stream(seed, 1);
        let coupling = DMatrix::from_fn(k, k, |_, _| hetmimo_core::rng::uniform(&mut rng));
        let noise: Vec<f64> = (0..k).map(|_| 0.01 + hetmimo_core::rng::uniform(&mut rng)).collect();
        let g = UplinkGains { signal: sig, interference: coupling, noise };
        let base = min_of(&g.sinrs(&full_power_ul(k).ul_eta));
        let a = maxmin_ul(&g);
        prop_assert!(a.ul_eta.iter().all(|&e| (0.0..=1.0).contains(&e)));
        prop_assert!(min_of(&g.sinrs(&a.ul_eta)) >= base * (1.0 - 1e-6));
        let cells = vec![(0..k).filter(|i| i % 2 == 0).collect(), (0..k).filter(|i| i % 2 == 1).collect()];
        let b = maxmin_ul_per_cell(&g, &cells);
        prop_assert!(b.ul_eta.iter().all(|&e| (0.0..=1.0).contains(&e)));
        prop_assert!(min_of(&g.sinrs(&b.ul_eta)) >= base * (1.0 - 1e-6));
    }

    #[test]
    fn downlink_allocations_respect_budgets(seed in any::<u64>(), k in 1usize..5, nodes in 1usize..4, per_cell in any::<bool>()) {
        let mut rng = epoch_stream(seed, 2);
        let mut u = || hetmimo_core::rng::uniform(&mut rng);
        let cell_of = |l: usize| if nodes > 1 { l % 2 } else { 0 };
        let user_cell: Vec<usize> = (0..k).map(|i| if nodes > 1 { i % 2 } else { 0 }).collect();
        let stats = DownlinkStatistics {
            nodes: (0..nodes)
                .map(|l| {
                    let served: Vec<usize> = (0..k).filter(|&i| user_cell[i] == cell_of(l)).collect();
                    DlNode {
                        cell: cell_of(l),
                        trace_phi: served.iter().map(|_| 0.1 + u()).collect(),
                        cross: DMatrix::from_fn(k, served.len(), |_, _| 0.01 * u()),
                        served,
                    }
                })
                .collect(),
            num_users: k,
            dl_power: 1.0,
            noise_power: 0.01 + u(),
        };
        let scope = if per_cell { MaxMinScope::PerCell } else { MaxMinScope::Network };
        let equal = equal_power_dl(&stats).dl_eta.unwrap();
        let a = maxmin_dl_scoped(&stats, scope).dl_eta.unwrap();
        for used in stats.budget_usage(&a) {
            prop_assert!(used <= 1.0 + 1e-9);
        }
        for (used, n) in stats.budget_usage(&equal).iter().zip(&stats.nodes) {
            if !n.served.is_empty() {
                prop_assert!((used - 1.0).abs() < 1e-9);
            }
        }
        prop_assert!(min_of(&dl_sinrs(&stats, &a)) >= min_of(&dl_sinrs(&stats, &equal)) * (1.0 - 1e-6));
    }
}

#[test]
fn presets_validate_and_broken_configs_are_reported() {
    for p in Preset::ALL {
        assert!(p.config().validate().is_pass(), "{p}");
    }
    let mut c = Preset::HeteroQuarter.config();
    c.pilot_length = 4;
    assert!(c.validate().mentions("τ_p ≥ users_per_cell"));
    let mut c = Preset::Cellular512.config();
    c.pilot_length = 200;
    assert!(c.validate().mentions("τ_p < τ_c"));
    let mut c = Preset::CellFree512.config();
    c.asd = 2.0;
    assert!(c.validate().mentions("0 < asd < π/2"));
}
