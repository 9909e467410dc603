//! Epoch-parallel execution. Each epoch owns its random stream, so results do not
//! depend on the worker count.

use anyhow::{anyhow, Result};
use hetmimo_core::config::EstimatorNormalization;
use hetmimo_core::simulation::{simulate_epoch, EpochResult, RunPlan, SEResults};
use hetmimo_core::ScenarioConfig;
use rayon::prelude::*;

/// Runs epochs `0..cfg.epochs` on `workers` threads (0 picks the core count) and
/// returns them in epoch order.
pub fn run_epochs(cfg: &ScenarioConfig, plan: &RunPlan, workers: usize) -> Result<Vec<EpochResult>> {
    let report = cfg.validate();
    if !report.is_pass() {
        return Err(hetmimo_core::Error::InvalidConfig(report.to_string()).into());
    }
    let pool = rayon::ThreadPoolBuilder::new().num_threads(workers).build()?;
    pool.install(|| {
        (0..cfg.epochs)
            .into_par_iter()
            .map(|e| simulate_epoch(cfg, plan, e).map_err(|err| anyhow!("epoch {e}: {err}")))
            .collect()
    })
}

/// One result set per requested estimator normalization.
pub fn run(cfg: &ScenarioConfig, plan: &RunPlan, workers: usize) -> Result<Vec<SEResults>> {
    let epochs = run_epochs(cfg, plan, workers)?;
    Ok(plan.normalizations.iter().map(|&n| SEResults::from_epochs(cfg, plan, n, &epochs)).collect())
}

/// Results for the configured normalization only.
pub fn run_single(cfg: &ScenarioConfig, plan: &RunPlan, workers: usize) -> Result<SEResults> {
    let plan = RunPlan { normalizations: vec![cfg.estimator_normalization], ..plan.clone() };
    Ok(run(cfg, &plan, workers)?.remove(0))
}

pub fn both_normalizations() -> Vec<EstimatorNormalization> {
    vec![EstimatorNormalization::PilotScaled, EstimatorNormalization::StandardMmse]
}
