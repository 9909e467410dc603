//! Run directory contents: samples, summary, CDF, metadata, layout dump, plot script.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use hetmimo_core::config::{wide_u64, Paradigm, PowerControl};
use hetmimo_core::geometry::NetworkLayout;
use hetmimo_core::simulation::{empirical_cdf, Link, SEResults, SeSample, PERCENTILE_CONVENTION};
use hetmimo_core::ScenarioConfig;
use serde::{Deserialize, Serialize};

pub const SAMPLES_FILE: &str = "samples.csv";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const CDF_FILE: &str = "cdf.csv";
pub const METADATA_FILE: &str = "metadata.toml";
pub const LAYOUT_FILE: &str = "layout.csv";
pub const PLOT_FILE: &str = "plot_cdf.py";

/// Marker written for statistics of an empty sample pool.
pub const UNDEFINED: &str = "NA";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRow {
    pub epoch: u64,
    pub paradigm: Paradigm,
    pub link: Link,
    pub power_mode: PowerControl,
    pub user: usize,
    pub se_bps_hz: f64,
}

impl From<&SeSample> for SampleRow {
    fn from(s: &SeSample) -> Self {
        Self { epoch: s.epoch, paradigm: s.paradigm, link: s.link, power_mode: s.power_mode, user: s.user, se_bps_hz: s.se }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryCsvRow {
    pub paradigm: Paradigm,
    pub link: Link,
    pub power_mode: PowerControl,
    pub p5: String,
    pub p50: String,
    pub mean: String,
    pub epochs: u64,
    pub seed: u64,
}

impl SummaryCsvRow {
    pub fn p5_value(&self) -> Option<f64> {
        self.p5.parse().ok()
    }

    pub fn p50_value(&self) -> Option<f64> {
        self.p50.parse().ok()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CdfRow {
    pub paradigm: Paradigm,
    pub link: Link,
    pub power_mode: PowerControl,
    pub se_bps_hz: f64,
    pub cdf: f64,
}

/// Run provenance written next to the CSVs; `[config]` alone reproduces the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunInfo {
    pub software: String,
    #[serde(with = "wide_u64")]
    pub seed: u64,
    #[serde(with = "wide_u64")]
    pub epochs: u64,
    pub links: Vec<Link>,
    pub power_modes: Vec<PowerControl>,
    pub percentile: String,
    pub warnings: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub run: RunInfo,
    pub config: ScenarioConfig,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| UNDEFINED.to_string(), |x| x.to_string())
}

fn write_rows<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    r.deserialize().collect::<std::result::Result<_, _>>().with_context(|| format!("parsing {}", path.display()))
}

pub fn write_samples(path: &Path, results: &SEResults) -> Result<()> {
    write_rows(path, results.samples.iter().map(SampleRow::from))
}

pub fn read_samples(path: &Path) -> Result<Vec<SampleRow>> {
    read_rows(path)
}

pub fn summary_rows(results: &SEResults) -> Vec<SummaryCsvRow> {
    results
        .summary
        .iter()
        .map(|s| SummaryCsvRow {
            paradigm: s.paradigm,
            link: s.link,
            power_mode: s.power_mode,
            p5: fmt_opt(s.p5),
            p50: fmt_opt(s.p50),
            mean: fmt_opt(s.mean),
            epochs: s.epochs,
            seed: s.seed,
        })
        .collect()
}

pub fn write_summary(path: &Path, results: &SEResults) -> Result<()> {
    write_rows(path, summary_rows(results))
}

pub fn read_summary(path: &Path) -> Result<Vec<SummaryCsvRow>> {
    read_rows(path)
}

pub fn cdf_rows(results: &SEResults) -> Vec<CdfRow> {
    let mut rows = Vec::new();
    for s in &results.summary {
        let values = results.values(s.link, s.power_mode);
        if let Ok(steps) = empirical_cdf(&values) {
            rows.extend(steps.into_iter().map(|(x, f)| CdfRow {
                paradigm: s.paradigm,
                link: s.link,
                power_mode: s.power_mode,
                se_bps_hz: x,
                cdf: f,
            }));
        }
    }
    rows
}

pub fn write_cdf(path: &Path, results: &SEResults) -> Result<()> {
    write_rows(path, cdf_rows(results))
}

pub fn write_metadata(path: &Path, meta: &Metadata) -> Result<()> {
    fs::write(path, toml::to_string(meta)?).with_context(|| format!("writing {}", path.display()))
}

pub fn read_metadata(path: &Path) -> Result<Metadata> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

pub fn metadata(cfg: &ScenarioConfig, results: &SEResults, links: Vec<Link>, power_modes: Vec<PowerControl>) -> Metadata {
    Metadata {
        run: RunInfo {
            software: format!("hetmimo {}", env!("CARGO_PKG_VERSION")),
            seed: cfg.seed,
            epochs: results.epochs_run,
            links,
            power_modes,
            percentile: PERCENTILE_CONVENTION.to_string(),
            warnings: results.warnings,
        },
        config: cfg.clone(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutRow {
    pub entity_type: String,
    pub cell: usize,
    pub x_m: f64,
    pub y_m: f64,
    /// Array broadside azimuth; empty for users.
    pub orientation_rad: Option<f64>,
}

pub fn layout_rows(layout: &NetworkLayout) -> Vec<LayoutRow> {
    let mut rows = Vec::new();
    for (c, (p, o)) in layout.cbs_positions.iter().zip(&layout.cbs_orientations).enumerate() {
        rows.push(LayoutRow { entity_type: "cbs".into(), cell: c, x_m: p.x, y_m: p.y, orientation_rad: Some(*o) });
    }
    for ((c, p), o) in layout.eap_positions.iter().zip(&layout.eap_orientations) {
        rows.push(LayoutRow { entity_type: "ap".into(), cell: *c, x_m: p.x, y_m: p.y, orientation_rad: Some(*o) });
    }
    for (c, p) in &layout.user_positions {
        rows.push(LayoutRow { entity_type: "user".into(), cell: *c, x_m: p.x, y_m: p.y, orientation_rad: None });
    }
    rows
}

pub fn write_layout(path: &Path, layout: &NetworkLayout) -> Result<()> {
    write_rows(path, layout_rows(layout))
}

const PLOT_SCRIPT: &str = r#"#!/usr/bin/env python3
# Plots every CDF in cdf.csv next to this file. Usage: python3 plot_cdf.py [out.png]
import csv, os, sys
from collections import defaultdict

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

here = os.path.dirname(os.path.abspath(__file__))
curves = defaultdict(lambda: ([], []))
with open(os.path.join(here, "cdf.csv")) as f:
    for row in csv.DictReader(f):
        key = (row["paradigm"], row["link"], row["power_mode"])
        curves[key][0].append(float(row["se_bps_hz"]))
        curves[key][1].append(float(row["cdf"]))

fig, ax = plt.subplots(figsize=(7, 5))
for (paradigm, link, mode), (x, y) in sorted(curves.items()):
    ax.step(x, y, where="post", label=f"{paradigm} {link} {mode}")
ax.axhline(0.05, color="grey", lw=0.5, ls=":")
ax.set_xlabel("SE per user [bit/s/Hz]")
ax.set_ylabel("CDF")
ax.legend()
fig.tight_layout()
fig.savefig(sys.argv[1] if len(sys.argv) > 1 else os.path.join(here, "cdf.png"), dpi=150)
"#;

pub fn write_plot_script(path: &Path) -> Result<()> {
    fs::write(path, PLOT_SCRIPT).with_context(|| format!("writing {}", path.display()))
}

/// Writes the three CSVs and the metadata file into `dir`, creating it if needed.
pub fn write_run(dir: &Path, meta: &Metadata, results: &SEResults) -> Result<()> {
    if dir.exists() && !dir.is_dir() {
        bail!("{} exists and is not a directory", dir.display());
    }
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    write_samples(&dir.join(SAMPLES_FILE), results)?;
    write_summary(&dir.join(SUMMARY_FILE), results)?;
    write_cdf(&dir.join(CDF_FILE), results)?;
    write_metadata(&dir.join(METADATA_FILE), meta)
}
