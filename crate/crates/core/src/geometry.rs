//! Per-epoch network layouts and deployment cost accounting.

use alloc::vec::Vec;
use core::f64::consts::TAU;

use rand_core::RngCore;

use crate::config::{EapPlacement, Paradigm, ScenarioConfig};
use crate::rng::uniform;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(self, other: Point) -> f64 {
        libm::hypot(self.x - other.x, self.y - other.y)
    }

    /// Azimuth of `other` as seen from `self`, radians.
    pub fn bearing_to(self, other: Point) -> f64 {
        libm::atan2(other.y - self.y, other.x - self.x)
    }
}

/// Node and user positions for one epoch.
///
/// Orientations are the broadside azimuths of each array, drawn per epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkLayout {
    pub cbs_positions: Vec<Point>,
    pub cbs_orientations: Vec<f64>,
    /// `(cell index, position)`
    pub eap_positions: Vec<(usize, Point)>,
    pub eap_orientations: Vec<f64>,
    /// `(serving cell index, position)`, grouped by cell when users are dropped per cell.
    pub user_positions: Vec<(usize, Point)>,
    pub area_side: f64,
}

impl NetworkLayout {
    pub fn num_users(&self) -> usize {
        self.user_positions.len()
    }
}

/// Index of the cell square containing `p`.
pub fn containing_cell(cfg: &ScenarioConfig, p: Point) -> usize {
    if cfg.paradigm == Paradigm::CellFree {
        return 0;
    }
    let g = cfg.cells_per_row();
    let side = cfg.cell_side();
    let col = ((p.x / side) as usize).min(g - 1);
    let row = ((p.y / side) as usize).min(g - 1);
    row * g + col
}

/// Center of cell `c`; cells are numbered row-major with x varying fastest.
pub fn cell_center(cfg: &ScenarioConfig, c: usize) -> Point {
    let g = cfg.cells_per_row();
    let side = cfg.cell_side();
    Point::new((c % g) as f64 * side + side / 2.0, (c / g) as f64 * side + side / 2.0)
}

fn cell_origin(cfg: &ScenarioConfig, c: usize) -> Point {
    let g = cfg.cells_per_row();
    let side = cfg.cell_side();
    Point::new((c % g) as f64 * side, (c / g) as f64 * side)
}

fn uniform_in_square<R: RngCore + ?Sized>(origin: Point, side: f64, rng: &mut R) -> Point {
    let x = origin.x + uniform(rng) * side;
    let y = origin.y + uniform(rng) * side;
    Point::new(x, y)
}

fn uniform_in_edge_band<R: RngCore + ?Sized>(origin: Point, side: f64, width: f64, rng: &mut R) -> Point {
    loop {
        let p = uniform_in_square(origin, side, rng);
        let dx = (p.x - origin.x).min(origin.x + side - p.x);
        let dy = (p.y - origin.y).min(origin.y + side - p.y);
        if dx.min(dy) <= width {
            return p;
        }
    }
}

/// Draws one layout. Draw order is fixed: edge APs, users, then array orientations.
pub fn generate_layout<R: RngCore + ?Sized>(cfg: &ScenarioConfig, rng: &mut R) -> NetworkLayout {
    let side = cfg.cell_side();
    let cbs_positions: Vec<Point> = match cfg.paradigm {
        Paradigm::CellFree => Vec::new(),
        _ => (0..cfg.num_cells).map(|c| cell_center(cfg, c)).collect(),
    };

    let mut eap_positions = Vec::new();
    match cfg.paradigm {
        Paradigm::Cellular => {}
        Paradigm::CellFree => {
            for _ in 0..cfg.eap_count {
                eap_positions.push((0, uniform_in_square(Point::new(0.0, 0.0), cfg.area_side, rng)));
            }
        }
        Paradigm::Hetero => {
            for c in 0..cfg.num_cells {
                let origin = cell_origin(cfg, c);
                for _ in 0..cfg.eap_count {
                    let p = match cfg.eap_placement {
                        EapPlacement::Uniform => uniform_in_square(origin, side, rng),
                        EapPlacement::EdgeBand => uniform_in_edge_band(origin, side, cfg.edge_band_width, rng),
                    };
                    eap_positions.push((c, p));
                }
            }
        }
    }

    let mut user_positions = Vec::with_capacity(cfg.users_total);
    if cfg.balanced_drop && cfg.paradigm != Paradigm::CellFree {
        for c in 0..cfg.num_cells {
            let origin = cell_origin(cfg, c);
            for _ in 0..cfg.users_per_cell {
                user_positions.push((c, uniform_in_square(origin, side, rng)));
            }
        }
    } else {
        for _ in 0..cfg.users_total {
            let p = uniform_in_square(Point::new(0.0, 0.0), cfg.area_side, rng);
            user_positions.push((containing_cell(cfg, p), p));
        }
    }

    let cbs_orientations = (0..cbs_positions.len()).map(|_| uniform(rng) * TAU).collect();
    let eap_orientations = (0..eap_positions.len()).map(|_| uniform(rng) * TAU).collect();

    NetworkLayout {
        cbs_positions,
        cbs_orientations,
        eap_positions,
        eap_orientations,
        user_positions,
        area_side: cfg.area_side,
    }
}

/// AP sites of the cell-free reference deployment.
pub const CELL_FREE_BASELINE_SITES: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostReport {
    pub ap_sites: usize,
    pub fronthaul_links: usize,
    /// Fraction of the cell-free baseline's sites that are no longer needed.
    pub reduction_vs_cellfree: f64,
}

/// Distributed sites and star-fronthaul links a deployment needs.
pub fn fronthaul_cost(cfg: &ScenarioConfig) -> CostReport {
    let ap_sites = match cfg.paradigm {
        Paradigm::Cellular => 0,
        Paradigm::CellFree => cfg.eap_count,
        Paradigm::Hetero => cfg.num_cells * cfg.eap_count,
    };
    CostReport {
        ap_sites,
        fronthaul_links: ap_sites,
        reduction_vs_cellfree: 1.0 - ap_sites as f64 / CELL_FREE_BASELINE_SITES as f64,
    }
}
