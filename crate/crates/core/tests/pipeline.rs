use hetmimo_core::config::{EstimatorNormalization, PowerControl, Preset, UlSampling};
use hetmimo_core::geometry::fronthaul_cost;
use hetmimo_core::simulation::{percentile, run_plan, simulate_epoch, Link, RunPlan, SEResults};
use hetmimo_core::ScenarioConfig;

fn small(preset: Preset) -> ScenarioConfig {
    let mut cfg = preset.config();
    cfg.epochs = 4;
    cfg.fading_draws_per_epoch = 3;
    cfg.seed = 99;
    cfg
}

fn both_modes(cfg: &ScenarioConfig) -> RunPlan {
    RunPlan { power_modes: vec![PowerControl::FullEqual, PowerControl::MaxMin], ..RunPlan::from_config(cfg) }
}

#[test]
fn rerunning_an_epoch_reproduces_it() {
    let cfg = small(Preset::HeteroHalf);
    let plan = both_modes(&cfg);
    let all = run_plan(&cfg, &plan).unwrap().remove(0);
    let again = SEResults::from_epochs(&cfg, &plan, cfg.estimator_normalization, &[simulate_epoch(&cfg, &plan, 2).unwrap()]);
    let from_run: Vec<f64> = all.samples.iter().filter(|s| s.epoch == 2).map(|s| s.se).collect();
    let alone: Vec<f64> = again.samples.iter().map(|s| s.se).collect();
    assert_eq!(from_run, alone);
}

#[test]
fn maxmin_lifts_the_weakest_user_every_epoch() {
    for preset in [Preset::CellFree512, Preset::HeteroQuarter] {
        let cfg = small(preset);
        let r = run_plan(&cfg, &both_modes(&cfg)).unwrap().remove(0);
        let equal = r.per_epoch_min(Link::Downlink, PowerControl::FullEqual);
        let fair = r.per_epoch_min(Link::Downlink, PowerControl::MaxMin);
        for ((e, a), (_, b)) in equal.iter().zip(&fair) {
            assert!(*b >= a - 1e-6, "{preset} epoch {e}: {b} < {a}");
        }
    }
}

#[test]
fn sample_counts_follow_links_and_sampling() {
    let mut cfg = small(Preset::HeteroQuarter);
    let plan = RunPlan { downlink: false, ..RunPlan::from_config(&cfg) };
    let r = run_plan(&cfg, &plan).unwrap().remove(0);
    assert_eq!(r.samples.len() as u64, cfg.epochs * cfg.users_total as u64);
    cfg.ul_sampling = UlSampling::PerDraw;
    let r = run_plan(&cfg, &plan).unwrap().remove(0);
    assert_eq!(r.samples.len() as u64, cfg.epochs * (cfg.users_total * cfg.fading_draws_per_epoch) as u64);
    assert!(r.samples.iter().all(|s| s.se >= 0.0));
}

#[test]
fn summary_matches_recomputed_percentiles() {
    let cfg = small(Preset::Cellular512);
    let r = run_plan(&cfg, &both_modes(&cfg)).unwrap().remove(0);
    for row in &r.summary {
        let v = r.values(row.link, row.power_mode);
        assert_eq!(row.p5, Some(percentile(&v, 0.05).unwrap()));
        assert_eq!(row.p50, Some(percentile(&v, 0.5).unwrap()));
    }
}

#[test]
fn both_normalizations_run_side_by_side() {
    let cfg = small(Preset::CellFree512);
    let plan = RunPlan {
        normalizations: vec![EstimatorNormalization::PilotScaled, EstimatorNormalization::StandardMmse],
        ..RunPlan::from_config(&cfg)
    };
    let r = run_plan(&cfg, &plan).unwrap();
    assert_eq!(r.len(), 2);
    // the standard estimator sees a pilot gain tau_p^2 larger, so every SE improves on average
    let mean = |s: &SEResults| s.samples.iter().map(|x| x.se).sum::<f64>() / s.samples.len() as f64;
    assert!(mean(&r[1]) > mean(&r[0]));
}

#[test]
fn fronthaul_cost_of_presets() {
    let got: Vec<(usize, f64)> = [Preset::CellFree512, Preset::HeteroQuarter, Preset::HeteroHalf, Preset::Cellular512]
        .iter()
        .map(|p| {
            let c = fronthaul_cost(&p.config());
            (c.fronthaul_links, c.reduction_vs_cellfree)
        })
        .collect();
    assert_eq!(got, [(128, 0.0), (96, 0.25), (64, 0.5), (0, 1.0)]);
}
