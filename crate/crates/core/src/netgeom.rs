//! Network geometry: torus layouts, UMi large-scale fading, SNR calibration
//! and single-ring angular supports.

use std::f64::consts::{PI, TAU};

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::config::{PathlossParams, SimConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layout {
    pub rrh_pos: Vec<Point>,
    pub ue_pos: Vec<Point>,
    /// Torus period in meters.
    pub side: f64,
}

impl Layout {
    pub fn num_rrh(&self) -> usize {
        self.rrh_pos.len()
    }

    pub fn num_ue(&self) -> usize {
        self.ue_pos.len()
    }

    pub fn distance_2d(&self, rrh: usize, ue: usize) -> f64 {
        torus_distance(self.rrh_pos[rrh], self.ue_pos[ue], self.side)
    }

    /// Azimuth from RRH `rrh` towards UE `ue` along the shortest torus path.
    pub fn direction(&self, rrh: usize, ue: usize) -> f64 {
        let (dx, dy) = torus_displacement(self.rrh_pos[rrh], self.ue_pos[ue], self.side);
        dy.atan2(dx)
    }
}

/// Large-scale fading coefficients and the calibrated system SNR.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lsfc {
    /// `K x L`, linear power gain of every UE-RRH pair.
    pub beta: DMatrix<f64>,
    /// `P_ue / N0`, linear.
    pub snr: f64,
}

impl Lsfc {
    pub fn new(beta: DMatrix<f64>, snr: f64) -> Self {
        Self { beta, snr }
    }

    #[inline]
    pub fn beta(&self, rrh: usize, ue: usize) -> f64 {
        self.beta[(ue, rrh)]
    }

    pub fn num_ue(&self) -> usize {
        self.beta.nrows()
    }

    pub fn num_rrh(&self) -> usize {
        self.beta.ncols()
    }
}

/// Per-pair DFT index sets `S_{l,k}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AngularSupports {
    num_rrh: usize,
    antennas: usize,
    sets: Vec<Vec<usize>>,
}

impl AngularSupports {
    pub fn from_layout(layout: &Layout, config: &SimConfig) -> Self {
        let l_count = layout.num_rrh();
        let mut sets = Vec::with_capacity(l_count * layout.num_ue());
        for k in 0..layout.num_ue() {
            for l in 0..l_count {
                sets.push(angular_support(layout, l, k, config));
            }
        }
        Self {
            num_rrh: l_count,
            antennas: config.scenario.antennas_per_rrh,
            sets,
        }
    }

    /// Builds supports from explicit sets, indexed `[ue][rrh]`.
    pub fn from_sets(antennas: usize, sets: Vec<Vec<Vec<usize>>>) -> Self {
        let num_rrh = sets.first().map_or(0, |row| row.len());
        assert!(sets.iter().all(|row| row.len() == num_rrh));
        Self {
            num_rrh,
            antennas,
            sets: sets.into_iter().flatten().collect(),
        }
    }

    /// Every pair uses the full DFT basis.
    pub fn full(num_rrh: usize, num_ue: usize, antennas: usize) -> Self {
        Self {
            num_rrh,
            antennas,
            sets: vec![(0..antennas).collect(); num_rrh * num_ue],
        }
    }

    #[inline]
    pub fn get(&self, rrh: usize, ue: usize) -> &[usize] {
        &self.sets[ue * self.num_rrh + rrh]
    }

    pub fn antennas(&self) -> usize {
        self.antennas
    }

    pub fn num_rrh(&self) -> usize {
        self.num_rrh
    }

    pub fn num_ue(&self) -> usize {
        self.sets.len().checked_div(self.num_rrh).unwrap_or(0)
    }
}

fn wrap_delta(d: f64, side: f64) -> f64 {
    let mut d = d.rem_euclid(side);
    if d > side / 2.0 {
        d -= side;
    }
    d
}

/// Minimal-image displacement `b - a` on the torus.
pub fn torus_displacement(a: Point, b: Point, side: f64) -> (f64, f64) {
    (wrap_delta(b.x - a.x, side), wrap_delta(b.y - a.y, side))
}

/// Euclidean distance between the closest wrap images of `a` and `b`.
pub fn torus_distance(a: Point, b: Point, side: f64) -> f64 {
    let (dx, dy) = torus_displacement(a, b, side);
    dx.hypot(dy)
}

pub fn generate_layout<R: Rng + ?Sized>(config: &SimConfig, rng: &mut R) -> Layout {
    let side = config.scenario.side_m;
    let mut draw = |n: usize| -> Vec<Point> {
        (0..n)
            .map(|_| Point::new(rng.random_range(0.0..side), rng.random_range(0.0..side)))
            .collect()
    };
    let rrh_pos = draw(config.scenario.num_rrh);
    let ue_pos = draw(config.scenario.num_ue);
    Layout { rrh_pos, ue_pos, side }
}

fn distance_3d(d2d: f64, p: &PathlossParams) -> f64 {
    d2d.hypot(p.h_bs_m - p.h_ut_m)
}

/// UMi street-canyon LOS probability at 2-D distance `d2d`.
pub fn los_probability(d2d: f64) -> f64 {
    if d2d <= 18.0 {
        return 1.0;
    }
    let decay = (-d2d / 36.0).exp();
    (18.0 / d2d) * (1.0 - decay) + decay
}

pub fn pathloss_los_db(d3d: f64, p: &PathlossParams) -> f64 {
    32.4 + 21.0 * d3d.log10() + 20.0 * p.carrier_ghz.log10()
}

pub fn pathloss_nlos_db(d3d: f64, p: &PathlossParams) -> f64 {
    let nlos = 35.3 * d3d.log10() + 22.4 + 21.3 * p.carrier_ghz.log10() - 0.3 * (p.h_ut_m - 1.5);
    nlos.max(pathloss_los_db(d3d, p))
}

fn db_to_gain(db: f64) -> f64 {
    10f64.powf(-db / 10.0)
}

/// Deterministic pathloss gain (no shadowing) for a given LOS state.
pub fn pathloss_gain(d2d: f64, los: bool, p: &PathlossParams) -> f64 {
    let d3d = distance_3d(d2d, p);
    db_to_gain(if los {
        pathloss_los_db(d3d, p)
    } else {
        pathloss_nlos_db(d3d, p)
    })
}

/// LOS/NLOS-probability weighted pathloss gain, without shadowing.
pub fn expected_pathloss_gain(d2d: f64, p: &PathlossParams) -> f64 {
    let p_los = los_probability(d2d);
    p_los * pathloss_gain(d2d, true, p) + (1.0 - p_los) * pathloss_gain(d2d, false, p)
}

/// Diameter of a disk whose area is `A / L`.
pub fn rrh_disk_diameter(config: &SimConfig) -> f64 {
    let area = config.scenario.side_m * config.scenario.side_m;
    2.0 * (area / (PI * config.scenario.num_rrh as f64)).sqrt()
}

/// System SNR such that `beta_bar * M * snr = 1`, with `beta_bar` the
/// expected pathloss at three disk diameters.
pub fn calibrate_snr(config: &SimConfig) -> f64 {
    let d = 3.0 * rrh_disk_diameter(config);
    let beta_bar = expected_pathloss_gain(d, &config.pathloss);
    1.0 / (beta_bar * config.scenario.antennas_per_rrh as f64)
}

/// UE transmit power in dBm implied by the calibrated SNR and `N0`.
pub fn ue_power_dbm(config: &SimConfig) -> f64 {
    config.scenario.noise_dbm + 10.0 * calibrate_snr(config).log10()
}

pub fn lsfc_from_layout<R: Rng + ?Sized>(layout: &Layout, config: &SimConfig, rng: &mut R) -> Lsfc {
    let p = &config.pathloss;
    let (k_count, l_count) = (layout.num_ue(), layout.num_rrh());
    let mut beta = DMatrix::zeros(k_count, l_count);
    for k in 0..k_count {
        for l in 0..l_count {
            let d2d = layout.distance_2d(l, k);
            let los = rng.random::<f64>() < los_probability(d2d);
            let sigma = if los {
                p.shadow_sigma_los_db
            } else {
                p.shadow_sigma_nlos_db
            };
            let z: f64 = rng.sample(StandardNormal);
            let pl_db = -10.0 * pathloss_gain(d2d, los, p).log10() + sigma * z;
            beta[(k, l)] = db_to_gain(pl_db);
        }
    }
    Lsfc::new(beta, calibrate_snr(config))
}

/// Wrap-around distance between two angles, in `[0, pi]`.
fn angular_gap(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(TAU);
    d.min(TAU - d)
}

/// DFT indices whose angle `2 pi m / M` lies within `spread / 2` of
/// `direction` (boundary inclusive). Falls back to the nearest index.
pub fn support_for_direction(direction: f64, antennas: usize, spread: f64) -> Vec<usize> {
    const BOUNDARY_TOL: f64 = 1e-12;
    let half = spread / 2.0;
    let step = TAU / antennas as f64;
    let set: Vec<usize> = (0..antennas)
        .filter(|&m| angular_gap(step * m as f64, direction) <= half + BOUNDARY_TOL)
        .collect();
    if !set.is_empty() {
        return set;
    }
    let nearest = (0..antennas)
        .min_by(|&a, &b| angular_gap(step * a as f64, direction).total_cmp(&angular_gap(step * b as f64, direction)))
        .expect("at least one antenna");
    vec![nearest]
}

pub fn angular_support(layout: &Layout, rrh: usize, ue: usize, config: &SimConfig) -> Vec<usize> {
    support_for_direction(
        layout.direction(rrh, ue),
        config.scenario.antennas_per_rrh,
        config.angular_spread_rad(),
    )
}
