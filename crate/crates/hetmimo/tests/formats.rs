use hetmimo::config_io::{apply_env, parse_config, to_toml};
use hetmimo::output::{read_samples, write_samples};
use hetmimo_core::config::{EstimatorNormalization, Preset};
use hetmimo_core::simulation::{run_plan, RunPlan};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn scenario_toml_round_trips(which in 0usize..4, seed in any::<u64>(), epochs in 0u64..100_000, asd in 0.01f64..1.5, std in any::<bool>()) {
        let mut cfg = Preset::ALL[which].config();
        cfg.seed = seed;
        cfg.epochs = epochs;
        cfg.asd = asd;
        if std {
            cfg.estimator_normalization = EstimatorNormalization::StandardMmse;
        }
        prop_assert_eq!(parse_config(&to_toml(&cfg)).unwrap(), cfg);
    }

    #[test]
    fn env_seed_override_wins(seed in any::<u64>()) {
        let base = Preset::CellFree512.config();
        let (cfg, unknown) = apply_env(&base, [("HETMIMO_SEED".to_string(), seed.to_string())]).unwrap();
        prop_assert_eq!(cfg.seed, seed);
        prop_assert!(unknown.is_empty());
    }
}

#[test]
fn sample_csv_round_trips_exactly() {
    let mut cfg = Preset::HeteroHalf.config();
    cfg.epochs = 2;
    let r = run_plan(&cfg, &RunPlan::from_config(&cfg)).unwrap().remove(0);
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("s.csv");
    write_samples(&path, &r).unwrap();
    let back = read_samples(&path).unwrap();
    assert_eq!(back.len(), r.samples.len());
    for (a, b) in back.iter().zip(&r.samples) {
        assert_eq!(a.se_bps_hz, b.se);
        assert_eq!((a.epoch, a.user, a.link, a.power_mode), (b.epoch, b.user, b.link, b.power_mode));
    }
}
