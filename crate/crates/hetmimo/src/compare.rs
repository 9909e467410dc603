//! Side-by-side table of completed run directories.

use std::fmt;
use std::path::{Path, PathBuf};

use hetmimo_core::config::PowerControl;
use hetmimo_core::geometry::{fronthaul_cost, CostReport};
use hetmimo_core::simulation::Link;

use crate::output::{read_metadata, read_summary, SummaryCsvRow, METADATA_FILE, SUMMARY_FILE};

/// Ratio above which one 5th percentile counts as far above another.
pub const FAR_ABOVE: f64 = 10.0;

#[derive(Debug, Clone)]
pub struct RunEntry {
    pub dir: PathBuf,
    pub cost: CostReport,
    pub rows: Vec<SummaryCsvRow>,
}

#[derive(Debug, Clone)]
pub enum DirResult {
    Loaded(RunEntry),
    Failed { dir: PathBuf, error: String },
}

pub fn load_run(dir: &Path) -> DirResult {
    let load = || -> anyhow::Result<RunEntry> {
        let meta = read_metadata(&dir.join(METADATA_FILE))?;
        let rows = read_summary(&dir.join(SUMMARY_FILE))?;
        Ok(RunEntry { dir: dir.to_path_buf(), cost: fronthaul_cost(&meta.config), rows })
    };
    match load() {
        Ok(e) => DirResult::Loaded(e),
        Err(e) => DirResult::Failed { dir: dir.to_path_buf(), error: format!("{e:#}") },
    }
}

#[derive(Debug, Clone)]
pub struct Comparison {
    pub runs: Vec<DirResult>,
}

impl Comparison {
    pub fn load(dirs: &[PathBuf]) -> Self {
        Self { runs: dirs.iter().map(|d| load_run(d)).collect() }
    }

    pub fn has_errors(&self) -> bool {
        self.runs.iter().any(|r| matches!(r, DirResult::Failed { .. }))
    }

    fn loaded(&self) -> impl Iterator<Item = &RunEntry> {
        self.runs.iter().filter_map(|r| match r {
            DirResult::Loaded(e) => Some(e),
            DirResult::Failed { .. } => None,
        })
    }

    fn keys(&self) -> Vec<(Link, PowerControl)> {
        let mut keys: Vec<(Link, PowerControl)> = self.loaded().flat_map(|e| e.rows.iter().map(|r| (r.link, r.power_mode))).collect();
        keys.sort();
        keys.dedup();
        keys
    }

    /// 5th percentile of each loaded run for one (link, power mode), if present.
    pub fn p5(&self, link: Link, mode: PowerControl) -> Vec<(&RunEntry, f64)> {
        self.loaded()
            .filter_map(|e| {
                let row = e.rows.iter().find(|r| r.link == link && r.power_mode == mode)?;
                Some((e, row.p5_value()?))
            })
            .collect()
    }

    /// Runs sorted by decreasing 5th percentile, joined by `>>`, `>` or `=`.
    pub fn ordering(&self, link: Link, mode: PowerControl) -> String {
        let mut v = self.p5(link, mode);
        v.sort_by(|a, b| b.1.total_cmp(&a.1));
        let mut s = String::new();
        for (i, (e, p)) in v.iter().enumerate() {
            if i > 0 {
                let prev = v[i - 1].1;
                let rel = if prev == *p {
                    "="
                } else if prev >= FAR_ABOVE * p {
                    ">>"
                } else {
                    ">"
                };
                s.push_str(&format!(" {rel} "));
            }
            s.push_str(&e.dir.display().to_string());
        }
        s
    }
}

impl fmt::Display for Comparison {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<28} {:<10} {:<4} {:<10} {:>10} {:>10} {:>11} {:>6} {:>10}",
            "run", "paradigm", "link", "power", "p5", "p50", "d_p5", "sites", "reduction"
        )?;
        for r in &self.runs {
            match r {
                DirResult::Failed { dir, error } => writeln!(f, "{:<28} error: {error}", dir.display())?,
                DirResult::Loaded(e) => {
                    for row in &e.rows {
                        let base = self
                            .p5(row.link, row.power_mode)
                            .first()
                            .map(|(_, p)| *p);
                        let delta = match (row.p5_value(), base) {
                            (Some(a), Some(b)) => format!("{:+.4}", a - b),
                            _ => "NA".into(),
                        };
                        writeln!(
                            f,
                            "{:<28} {:<10} {:<4} {:<10} {:>10} {:>10} {:>11} {:>6} {:>10.2}",
                            e.dir.display(),
                            row.paradigm.as_str(),
                            row.link.as_str(),
                            row.power_mode.as_str(),
                            short(&row.p5),
                            short(&row.p50),
                            delta,
                            e.cost.ap_sites,
                            e.cost.reduction_vs_cellfree,
                        )?;
                    }
                }
            }
        }
        for (link, mode) in self.keys() {
            if self.p5(link, mode).len() >= 2 {
                writeln!(f, "{} {} p5: {}", link.as_str(), mode.as_str(), self.ordering(link, mode))?;
            }
        }
        Ok(())
    }
}

fn short(v: &str) -> String {
    v.parse::<f64>().map_or_else(|_| v.to_string(), |x| format!("{x:.4}"))
}
