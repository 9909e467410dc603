//! Scenario parameters, the four reference deployments, and validation.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::f64::consts::{FRAC_PI_2, PI};
use core::fmt;
use core::str::FromStr;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

/// Network architecture under test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize), serde(rename_all = "kebab-case"))]
pub enum Paradigm {
    /// One co-located array per cell, no distributed nodes.
    Cellular,
    /// Distributed APs over the whole area, one CPU, no cells.
    CellFree,
    /// Cell-center array plus edge access points fronthauled to it.
    Hetero,
}

impl Paradigm {
    pub fn as_str(self) -> &'static str {
        match self {
            Paradigm::Cellular => "cellular",
            Paradigm::CellFree => "cell-free",
            Paradigm::Hetero => "hetero",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize), serde(rename_all = "kebab-case"))]
pub enum PowerControl {
    /// Full uplink power, equal downlink power split per node.
    FullEqual,
    /// Max-min fairness.
    #[cfg_attr(feature = "serde", serde(rename = "maxmin"))]
    MaxMin,
}

impl PowerControl {
    pub fn as_str(self) -> &'static str {
        match self {
            PowerControl::FullEqual => "full-equal",
            PowerControl::MaxMin => "maxmin",
        }
    }
}

/// How the MMSE normalization matrix is scaled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize), serde(rename_all = "kebab-case"))]
pub enum EstimatorNormalization {
    /// `Gamma = tau_p (p_u tau_p R + sigma^2 I)`, `Phi = p_u R Gamma^-1 R`.
    PilotScaled,
    /// `Gamma = p_u tau_p R + sigma^2 I`, `Phi = p_u tau_p R Gamma^-1 R`.
    StandardMmse,
}

impl EstimatorNormalization {
    pub fn as_str(self) -> &'static str {
        match self {
            EstimatorNormalization::PilotScaled => "pilot-scaled",
            EstimatorNormalization::StandardMmse => "standard-mmse",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize), serde(rename_all = "kebab-case"))]
pub enum EapPlacement {
    /// Uniform over the owning cell square.
    Uniform,
    /// Uniform over the outer ring of the cell square, `edge_band_width` wide.
    EdgeBand,
}

/// What one uplink sample represents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize), serde(rename_all = "kebab-case"))]
pub enum UlSampling {
    /// One sample per user and layout, averaged over the inner fading draws.
    FadingAveraged,
    /// One sample per user and fading draw.
    PerDraw,
}

/// Which Gaussian local-scattering correlation to build.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize), serde(rename_all = "kebab-case"))]
pub enum ScatteringModel {
    /// The scattering integral itself, evaluated by its Bessel series.
    Exact,
    /// First-order expansion of `sin(angle + delta)` around the nominal angle.
    SmallAngle,
}

/// How far a max-min solve reaches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize), serde(rename_all = "kebab-case"))]
pub enum MaxMinScope {
    /// Each cell balances its own users; other cells stay at full/equal power.
    PerCell,
    /// One problem over every user of the network.
    Network,
}

/// Three-slope path-loss constants. Distances in meters, loss in dB.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize), serde(deny_unknown_fields))]
pub struct PathLossParams {
    pub l_ref: f64,
    pub d0: f64,
    pub d1: f64,
}

impl Default for PathLossParams {
    fn default() -> Self {
        Self { l_ref: 140.7, d0: 10.0, d1: 50.0 }
    }
}

/// Full parameterization of one experiment.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize), serde(deny_unknown_fields))]
pub struct ScenarioConfig {
    pub paradigm: Paradigm,
    /// Number of square cells; 1 for cell-free.
    pub num_cells: usize,
    /// Edge of the square coverage area, meters.
    pub area_side: f64,
    /// Antennas per cell-center array (0 for cell-free).
    pub cbs_antennas: usize,
    /// Edge APs per cell (hetero) or total APs (cell-free).
    pub eap_count: usize,
    pub eap_antennas: usize,
    pub users_total: usize,
    pub users_per_cell: usize,
    pub coherence_block: usize,
    pub pilot_length: usize,
    /// Watts.
    pub ue_power: f64,
    /// Watts per transmitting node.
    pub dl_power: f64,
    /// Watts.
    pub noise_power: f64,
    /// Hertz.
    pub bandwidth: f64,
    /// dB.
    pub noise_figure: f64,
    /// dB.
    pub shadowing_std: f64,
    /// Angular standard deviation of local scattering, radians.
    pub asd: f64,
    pub pathloss: PathLossParams,
    pub power_control: PowerControl,
    pub estimator_normalization: EstimatorNormalization,
    #[cfg_attr(feature = "serde", serde(with = "wide_u64"))]
    pub epochs: u64,
    pub fading_draws_per_epoch: usize,
    #[cfg_attr(feature = "serde", serde(with = "wide_u64"))]
    pub seed: u64,
    /// Drop exactly `users_per_cell` users inside each cell square.
    pub balanced_drop: bool,
    pub eap_placement: EapPlacement,
    /// Meters; only read for [`EapPlacement::EdgeBand`].
    pub edge_band_width: f64,
    /// Minimum user-node distance, meters.
    pub min_distance: f64,
    /// Apply the pilot prelog `1 - tau_p/tau_c` to downlink SE as well.
    pub dl_prelog: bool,
    pub ul_sampling: UlSampling,
    pub scattering_model: ScatteringModel,
    pub maxmin_scope: MaxMinScope,
}

/// The four reference deployments, all with 512 service antennas and 32 users.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Preset {
    Cellular512,
    CellFree512,
    HeteroQuarter,
    HeteroHalf,
}

impl Preset {
    pub const ALL: [Preset; 4] =
        [Preset::Cellular512, Preset::CellFree512, Preset::HeteroQuarter, Preset::HeteroHalf];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Cellular512 => "cellular",
            Preset::CellFree512 => "cell-free",
            Preset::HeteroQuarter => "hetero-quarter",
            Preset::HeteroHalf => "hetero-half",
        }
    }

    pub fn config(self) -> ScenarioConfig {
        paradigm_preset(self)
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Preset::ALL
            .iter()
            .copied()
            .find(|p| p.name() == s)
            .ok_or_else(|| format!("unknown preset `{s}`"))
    }
}

/// Thermal noise power in watts for a bandwidth and receiver noise figure.
pub fn noise_power_watts(bandwidth_hz: f64, noise_figure_db: f64) -> f64 {
    let dbm = -174.0 + 10.0 * libm::log10(bandwidth_hz) + noise_figure_db;
    libm::pow(10.0, (dbm - 30.0) / 10.0)
}

pub const DEFAULT_UE_POWER: f64 = 0.1;
pub const DEFAULT_DL_POWER: f64 = 0.2;

pub fn paradigm_preset(preset: Preset) -> ScenarioConfig {
    let bandwidth = 5.0e6;
    let noise_figure = 9.0;
    let (paradigm, num_cells, cbs_antennas, eap_count, eap_antennas, users_per_cell) = match preset {
        Preset::Cellular512 => (Paradigm::Cellular, 4, 128, 0, 0, 8),
        Preset::CellFree512 => (Paradigm::CellFree, 1, 0, 128, 4, 32),
        Preset::HeteroQuarter => (Paradigm::Hetero, 4, 32, 24, 4, 8),
        Preset::HeteroHalf => (Paradigm::Hetero, 4, 64, 16, 4, 8),
    };
    ScenarioConfig {
        paradigm,
        num_cells,
        area_side: 1000.0,
        cbs_antennas,
        eap_count,
        eap_antennas,
        users_total: 32,
        users_per_cell,
        coherence_block: 200,
        pilot_length: 8,
        ue_power: DEFAULT_UE_POWER,
        dl_power: DEFAULT_DL_POWER,
        noise_power: noise_power_watts(bandwidth, noise_figure),
        bandwidth,
        noise_figure,
        shadowing_std: 8.0,
        asd: 15.0 * PI / 180.0,
        pathloss: PathLossParams::default(),
        power_control: PowerControl::FullEqual,
        estimator_normalization: EstimatorNormalization::PilotScaled,
        epochs: 2000,
        fading_draws_per_epoch: 10,
        seed: 1,
        balanced_drop: paradigm != Paradigm::CellFree,
        eap_placement: EapPlacement::Uniform,
        edge_band_width: 100.0,
        min_distance: 1.0,
        dl_prelog: false,
        ul_sampling: UlSampling::FadingAveraged,
        scattering_model: ScatteringModel::Exact,
        maxmin_scope: if paradigm == Paradigm::Cellular { MaxMinScope::PerCell } else { MaxMinScope::Network },
    }
}

impl ScenarioConfig {
    /// Side of one square cell in meters.
    pub fn cell_side(&self) -> f64 {
        self.area_side / self.cells_per_row() as f64
    }

    /// Cells per row of the square grid.
    pub fn cells_per_row(&self) -> usize {
        integer_sqrt(self.num_cells).max(1)
    }

    /// Service antennas per cell, `N_b + L_c N_a`.
    pub fn antennas_per_cell(&self) -> usize {
        self.cbs_antennas + self.eap_count * self.eap_antennas
    }

    pub fn total_antennas(&self) -> usize {
        self.num_cells * self.antennas_per_cell()
    }

    /// Pilot prelog `1 - tau_p / tau_c`.
    pub fn prelog(&self) -> f64 {
        1.0 - self.pilot_length as f64 / self.coherence_block as f64
    }

    pub fn validate(&self) -> ValidationReport {
        validate(self)
    }
}

fn integer_sqrt(n: usize) -> usize {
    let mut r = libm::sqrt(n as f64) as usize;
    while r * r > n {
        r -= 1;
    }
    while (r + 1) * (r + 1) <= n {
        r += 1;
    }
    r
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub field: &'static str,
    pub invariant: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.invariant)
    }
}

/// Outcome of [`validate`]; empty means the configuration passes.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_pass(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn mentions(&self, invariant: &str) -> bool {
        self.violations.iter().any(|v| v.invariant == invariant)
    }

    fn fail(&mut self, field: &'static str, invariant: impl Into<String>) {
        self.violations.push(Violation { field, invariant: invariant.into() });
    }

    fn require(&mut self, ok: bool, field: &'static str, invariant: &str) {
        if !ok {
            self.fail(field, invariant);
        }
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_pass() {
            return f.write_str("pass");
        }
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                f.write_str("\n")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

fn positive(x: f64) -> bool {
    x.is_finite() && x > 0.0
}

/// Checks every scenario invariant and lists the violated ones.
pub fn validate(cfg: &ScenarioConfig) -> ValidationReport {
    let mut r = ValidationReport::default();

    r.require(cfg.pilot_length > 0, "pilot_length", "τ_p > 0");
    r.require(cfg.pilot_length < cfg.coherence_block, "pilot_length", "τ_p < τ_c");
    r.require(cfg.users_total > 0, "users_total", "users_total > 0");
    r.require(cfg.users_per_cell > 0, "users_per_cell", "users_per_cell > 0");
    r.require(cfg.num_cells > 0, "num_cells", "num_cells > 0");
    r.require(cfg.fading_draws_per_epoch > 0, "fading_draws_per_epoch", "fading_draws_per_epoch > 0");

    for (field, value) in [
        ("area_side", cfg.area_side),
        ("ue_power", cfg.ue_power),
        ("dl_power", cfg.dl_power),
        ("noise_power", cfg.noise_power),
        ("bandwidth", cfg.bandwidth),
        ("min_distance", cfg.min_distance),
    ] {
        if !positive(value) {
            r.fail(field, format!("{field} > 0"));
        }
    }
    r.require(cfg.noise_figure.is_finite(), "noise_figure", "noise_figure finite");
    r.require(
        cfg.shadowing_std.is_finite() && cfg.shadowing_std >= 0.0,
        "shadowing_std",
        "shadowing_std ≥ 0",
    );
    r.require(cfg.asd > 0.0 && cfg.asd < FRAC_PI_2, "asd", "0 < asd < π/2");
    let pl = cfg.pathloss;
    r.require(pl.l_ref.is_finite(), "pathloss.l_ref", "l_ref finite");
    r.require(positive(pl.d0) && pl.d0 < pl.d1 && pl.d1.is_finite(), "pathloss", "0 < d0 < d1");

    match cfg.paradigm {
        Paradigm::CellFree => {
            r.require(cfg.num_cells == 1, "num_cells", "cell-free uses a single pseudo-cell");
            r.require(cfg.cbs_antennas == 0, "cbs_antennas", "cell-free has no cell-center array");
            r.require(cfg.eap_count > 0, "eap_count", "eap_count > 0");
            r.require(cfg.eap_antennas > 0, "eap_antennas", "eap_antennas > 0");
            r.require(
                cfg.users_per_cell == cfg.users_total,
                "users_per_cell",
                "users_per_cell = users_total",
            );
        }
        Paradigm::Cellular | Paradigm::Hetero => {
            let side = integer_sqrt(cfg.num_cells);
            r.require(side * side == cfg.num_cells, "num_cells", "num_cells is a perfect square");
            r.require(
                cfg.pilot_length >= cfg.users_per_cell,
                "pilot_length",
                "τ_p ≥ users_per_cell",
            );
            r.require(
                cfg.users_total == cfg.num_cells * cfg.users_per_cell,
                "users_total",
                "users_total = num_cells·users_per_cell",
            );
            r.require(cfg.cbs_antennas > 0, "cbs_antennas", "cbs_antennas > 0");
            if cfg.paradigm == Paradigm::Cellular {
                r.require(cfg.eap_count == 0, "eap_count", "cellular has no edge APs");
            } else {
                r.require(cfg.eap_count > 0, "eap_count", "eap_count > 0");
                r.require(cfg.eap_antennas > 0, "eap_antennas", "eap_antennas > 0");
            }
        }
    }

    if cfg.eap_placement == EapPlacement::EdgeBand {
        let half = cfg.cell_side() / 2.0;
        r.require(
            positive(cfg.edge_band_width) && cfg.edge_band_width <= half,
            "edge_band_width",
            "0 < edge_band_width ≤ cell_side/2",
        );
    }
    r
}

/// Serde adapter for `u64` fields in formats whose integers are signed 64-bit
/// (TOML). Values past `i64::MAX` are written as decimal strings; both forms
/// are accepted back.
#[cfg(feature = "serde")]
pub mod wide_u64 {
    use alloc::string::ToString;
    use core::fmt;
    use serde::de::{self, Visitor};
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &u64, s: S) -> Result<S::Ok, S::Error> {
        match i64::try_from(*v) {
            Ok(i) => s.serialize_i64(i),
            Err(_) => s.serialize_str(&v.to_string()),
        }
    }

    struct Wide;

    impl<'de> Visitor<'de> for Wide {
        type Value = u64;

        fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
            f.write_str("a non-negative integer, possibly as a decimal string")
        }

        fn visit_u64<E: de::Error>(self, v: u64) -> Result<u64, E> {
            Ok(v)
        }

        fn visit_i64<E: de::Error>(self, v: i64) -> Result<u64, E> {
            u64::try_from(v).map_err(|_| E::invalid_value(de::Unexpected::Signed(v), &self))
        }

        fn visit_str<E: de::Error>(self, v: &str) -> Result<u64, E> {
            v.trim().parse().map_err(|_| E::invalid_value(de::Unexpected::Str(v), &self))
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<u64, D::Error> {
        d.deserialize_any(Wide)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_match_reference_deployments() {
        let cf = Preset::CellFree512.config();
        assert_eq!((cf.eap_count, cf.eap_antennas, cf.cbs_antennas), (128, 4, 0));
        let hq = Preset::HeteroQuarter.config();
        assert_eq!((hq.num_cells, hq.cbs_antennas, hq.eap_count, hq.eap_antennas), (4, 32, 24, 4));
        assert_eq!(hq.antennas_per_cell(), 128);
        let cell = Preset::Cellular512.config();
        assert_eq!((cell.num_cells, cell.cbs_antennas, cell.eap_count, cell.users_per_cell), (4, 128, 0, 8));
        let hh = Preset::HeteroHalf.config();
        assert_eq!((hh.cbs_antennas, hh.eap_count), (64, 16));
    }

    #[test]
    fn noise_power_from_thermal_floor() {
        // -174 dBm/Hz + 66.99 dB(5 MHz) + 9 dB = -98.01 dBm
        let expected = libm::pow(10.0, (-174.0 + 10.0 * libm::log10(5.0e6) + 9.0 - 30.0) / 10.0);
        for p in Preset::ALL {
            let n = p.config().noise_power;
            assert!((n - expected).abs() < 1e-25);
            assert!((n - 1.5812e-13).abs() < 1e-16, "{n:e}");
        }
    }

    #[test]
    fn every_preset_validates_and_conserves_antennas() {
        for p in Preset::ALL {
            let cfg = p.config();
            assert!(cfg.validate().is_pass(), "{p}: {}", cfg.validate());
            assert_eq!(cfg.total_antennas(), 512, "{p}");
            assert_eq!(cfg.users_total, 32);
        }
    }

    #[test]
    fn pilot_longer_than_block_fails() {
        let mut cfg = Preset::HeteroQuarter.config();
        cfg.pilot_length = 250;
        let report = cfg.validate();
        assert!(report.mentions("τ_p < τ_c"), "{report}");
    }

    #[test]
    fn too_many_users_per_cell_for_pilots_fails() {
        let mut cfg = Preset::HeteroQuarter.config();
        cfg.users_per_cell = 16;
        let report = cfg.validate();
        assert!(report.mentions("τ_p ≥ users_per_cell"), "{report}");
    }

    #[test]
    fn asd_and_powers_are_checked() {
        let mut cfg = Preset::Cellular512.config();
        cfg.asd = 2.0;
        cfg.ue_power = 0.0;
        let report = cfg.validate();
        assert!(report.mentions("0 < asd < π/2"));
        assert!(report.violations.iter().any(|v| v.field == "ue_power"));
    }

    #[test]
    fn preset_names_round_trip() {
        for p in Preset::ALL {
            assert_eq!(p.name().parse::<Preset>().unwrap(), p);
        }
        assert!("macro".parse::<Preset>().is_err());
    }
}
