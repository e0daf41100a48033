//! Nominal interference coefficients, nominal SINRs, UL-DL duality power
//! allocation and the per-RRH EPA/PPA rules.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::association::AssociationGraph;
use crate::beamforming::ClusterVector;
use crate::channel::{dft_submatrix, EstimateSet};
use crate::config::ThetaNorm;
use crate::linalg::{inner, C64};
use crate::netgeom::{AngularSupports, Lsfc};

/// Duality solutions with a component below this are infeasible.
pub const NEGATIVE_TOL: f64 = -1e-9;
/// Relative residual above which the duality solve is rejected.
pub const RESIDUAL_TOL: f64 = 1e-8;
/// Relative tolerance on the power-conservation identity.
pub const POWER_SUM_TOL: f64 = 1e-6;

/// `theta[(k, j)]`: nominal power of beamformer `j` seen through the channel
/// of UE `k`. The diagonal is the useful term.
///
/// The DL SINR of `k` reads row `k`; the UL SINR of `k` reads column `k`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThetaMatrix {
    pub theta: DMatrix<f64>,
    pub served: Vec<bool>,
}

impl ThetaMatrix {
    pub fn num_ue(&self) -> usize {
        self.served.len()
    }

    pub fn served_count(&self) -> usize {
        self.served.iter().filter(|&&s| s).count()
    }
}

fn iso_weight(norm: ThetaNorm, beamformer: &ClusterVector, block: usize) -> f64 {
    match norm {
        ThetaNorm::ClusterSize => 1.0 / beamformer.rrhs.len() as f64,
        ThetaNorm::Exact => beamformer.blocks[block].norm_squared(),
    }
}

/// Nominal coefficient for channel of `ue` through `beamformer` of `owner`
/// (`owner != ue`): coherent known part over `C_ue ∩ C_owner`, isotropic
/// LSFC part over `C_owner \ C_ue`.
fn cross_theta(
    estimates: &EstimateSet,
    graph: &AssociationGraph,
    lsfc: &Lsfc,
    ue: usize,
    beamformer: &ClusterVector,
    norm: ThetaNorm,
) -> f64 {
    let mut known = C64::new(0.0, 0.0);
    let mut iso = 0.0;
    for (i, (&l, u)) in beamformer.rrhs.iter().zip(&beamformer.blocks).enumerate() {
        if graph.is_edge(l, ue) {
            known += inner(estimates.get(l, ue).expect("edge"), u);
        } else {
            iso += lsfc.beta(l, ue) * iso_weight(norm, beamformer, i);
        }
    }
    known.norm_sqr() + iso
}

/// Builds the `K x K` nominal coefficient matrix for beamformers `u = v`.
pub fn theta_matrix(
    estimates: &EstimateSet,
    graph: &AssociationGraph,
    lsfc: &Lsfc,
    beamformers: &[Option<ClusterVector>],
    norm: ThetaNorm,
) -> ThetaMatrix {
    let k_count = graph.num_ue();
    let served: Vec<bool> = (0..k_count)
        .map(|k| beamformers[k].is_some() && graph.is_served(k))
        .collect();
    let mut theta = DMatrix::zeros(k_count, k_count);
    for j in 0..k_count {
        let Some(u) = beamformers[j].as_ref().filter(|_| served[j]) else {
            continue;
        };
        for k in 0..k_count {
            if !served[k] {
                continue;
            }
            theta[(k, j)] = if k == j {
                u.rrhs
                    .iter()
                    .zip(&u.blocks)
                    .map(|(&l, b)| inner(b, estimates.get(l, k).expect("edge")))
                    .sum::<C64>()
                    .norm_sqr()
            } else {
                cross_theta(estimates, graph, lsfc, k, u, norm)
            };
        }
    }
    ThetaMatrix { theta, served }
}

/// `E[|h_ue^H u_owner|^2 | known CSI]` with the true single-ring covariance
/// `(beta M / |S|) F F^H` for the unknown blocks.
#[allow(clippy::too_many_arguments)]
pub fn theta_exact_conditional_oracle(
    estimates: &EstimateSet,
    supports: &AngularSupports,
    graph: &AssociationGraph,
    lsfc: &Lsfc,
    beamformer: &ClusterVector,
    ue: usize,
) -> f64 {
    let m = supports.antennas();
    let mut known = C64::new(0.0, 0.0);
    let mut unknown = 0.0;
    for (&l, u) in beamformer.rrhs.iter().zip(&beamformer.blocks) {
        if graph.is_edge(l, ue) {
            known += inner(estimates.get(l, ue).expect("edge"), u);
        } else {
            let s = supports.get(l, ue);
            let f = dft_submatrix(m, s).expect("supports are never empty");
            let scale = lsfc.beta(l, ue) * m as f64 / s.len() as f64;
            unknown += scale * f.ad_mul(u).norm_squared();
        }
    }
    known.norm_sqr() + unknown
}

/// `gamma_k = theta_kk / (1/snr + sum_{j != k} theta_jk)`; zero when unserved.
pub fn nominal_ul_sinr(theta: &ThetaMatrix, snr: f64) -> Vec<f64> {
    let k_count = theta.num_ue();
    (0..k_count)
        .map(|k| {
            if !theta.served[k] {
                return 0.0;
            }
            let interference: f64 = (0..k_count).filter(|&j| j != k).map(|j| theta.theta[(j, k)]).sum();
            theta.theta[(k, k)] / (1.0 / snr + interference)
        })
        .collect()
}

/// `theta_kk q_k / (1/snr + sum_{j != k} theta_kj q_j)`.
pub fn nominal_dl_sinr(theta: &ThetaMatrix, q: &[f64], snr: f64) -> Vec<f64> {
    let k_count = theta.num_ue();
    (0..k_count)
        .map(|k| {
            if !theta.served[k] {
                return 0.0;
            }
            let interference: f64 = (0..k_count)
                .filter(|&j| j != k)
                .map(|j| theta.theta[(k, j)] * q[j])
                .sum();
            theta.theta[(k, k)] * q[k] / (1.0 / snr + interference)
        })
        .collect()
}

/// Centralized DL powers `q_k`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PowerVector {
    pub q: Vec<f64>,
    pub feasible: bool,
}

impl PowerVector {
    pub fn total(&self) -> f64 {
        self.q.iter().sum()
    }
}

/// Result of the duality solve with its diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DualityOutcome {
    pub power: PowerVector,
    pub mu: Vec<f64>,
    /// `||A q - b|| / ||b||`; infinite when the system is singular.
    pub residual: f64,
    pub min_component: f64,
}

/// Solves `(I - diag(mu) Theta) q = mu / snr`, `mu_k = gamma_k / ((1 + gamma_k) theta_kk)`,
/// with the full coefficient matrix (diagonal included) and a partially
/// pivoted LU factorisation.
pub fn duality_power_allocation(theta: &ThetaMatrix, gamma: &[f64], snr: f64) -> DualityOutcome {
    let k_count = theta.num_ue();
    let mu: Vec<f64> = (0..k_count)
        .map(|k| {
            let d = theta.theta[(k, k)];
            if theta.served[k] && d > 0.0 && gamma[k] > 0.0 {
                gamma[k] / ((1.0 + gamma[k]) * d)
            } else {
                0.0
            }
        })
        .collect();
    let a = DMatrix::from_fn(k_count, k_count, |r, c| {
        let id = if r == c { 1.0 } else { 0.0 };
        id - mu[r] * theta.theta[(r, c)]
    });
    let b = DVector::from_iterator(k_count, mu.iter().map(|m| m / snr));
    let solution = a.clone().lu().solve(&b);
    let (q, residual) = match solution {
        Some(q) if q.iter().all(|x| x.is_finite()) => {
            let r = (&a * &q - &b).norm();
            let scale = b.norm();
            (q, if scale > 0.0 { r / scale } else { r })
        }
        _ => (DVector::zeros(k_count), f64::INFINITY),
    };
    let min_component = q.iter().cloned().fold(f64::INFINITY, f64::min);
    let feasible = residual <= RESIDUAL_TOL && min_component >= NEGATIVE_TOL;
    DualityOutcome {
        power: PowerVector {
            // round-off negatives inside the tolerance are clipped
            q: q.iter().map(|&x| x.max(0.0)).collect(),
            feasible,
        },
        mu,
        residual,
        min_component,
    }
}

/// `q_k = 1` for all `k`.
pub fn epa_central(num_ue: usize) -> PowerVector {
    PowerVector {
        q: vec![1.0; num_ue],
        feasible: true,
    }
}

/// Per-edge DL powers `q_{l,k}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EdgePowers {
    num_rrh: usize,
    q: Vec<f64>,
    pub budget: f64,
}

impl EdgePowers {
    fn zeros(num_rrh: usize, num_ue: usize, budget: f64) -> Self {
        Self {
            num_rrh,
            q: vec![0.0; num_rrh * num_ue],
            budget,
        }
    }

    #[inline]
    pub fn get(&self, rrh: usize, ue: usize) -> f64 {
        self.q[ue * self.num_rrh + rrh]
    }

    fn set(&mut self, rrh: usize, ue: usize, value: f64) {
        self.q[ue * self.num_rrh + rrh] = value;
    }

    pub fn rrh_total(&self, rrh: usize) -> f64 {
        let num_ue = self.q.len() / self.num_rrh.max(1);
        (0..num_ue).map(|k| self.get(rrh, k)).sum()
    }

    pub fn total(&self) -> f64 {
        self.q.iter().sum()
    }
}

/// `q_{l,k} = P / |U_l|` over each per-RRH set.
pub fn epa_local(user_sets: &[Vec<usize>], num_ue: usize, budget: f64) -> EdgePowers {
    let mut p = EdgePowers::zeros(user_sets.len(), num_ue, budget);
    for (l, set) in user_sets.iter().enumerate() {
        let share = budget / set.len().max(1) as f64;
        for &k in set {
            p.set(l, k, share);
        }
    }
    p
}

/// `q_{l,k} = P beta_{l,k} / sum_{j in U_l} beta_{l,j}`.
pub fn ppa_local(user_sets: &[Vec<usize>], lsfc: &Lsfc, budget: f64) -> EdgePowers {
    let mut p = EdgePowers::zeros(user_sets.len(), lsfc.num_ue(), budget);
    for (l, set) in user_sets.iter().enumerate() {
        let total: f64 = set.iter().map(|&k| lsfc.beta(l, k)).sum();
        if total <= 0.0 {
            continue;
        }
        for &k in set {
            p.set(l, k, budget * lsfc.beta(l, k) / total);
        }
    }
    p
}

#[cfg(test)]
mod tests {
    use super::*;

    fn theta(rows: &[&[f64]]) -> ThetaMatrix {
        let k = rows.len();
        ThetaMatrix {
            theta: DMatrix::from_fn(k, k, |r, c| rows[r][c]),
            served: vec![true; k],
        }
    }

    #[test]
    fn nominal_ul_examples() {
        let t = theta(&[&[2.0]]);
        assert!((nominal_ul_sinr(&t, 3.0)[0] - 6.0).abs() < 1e-12);
        let t = theta(&[&[2.0, 0.0], &[0.0, 0.5]]);
        let g = nominal_ul_sinr(&t, 4.0);
        assert!((g[0] - 8.0).abs() < 1e-12 && (g[1] - 2.0).abs() < 1e-12);
        // column sums: gamma_0 = 2 / (1/2 + 0.3), gamma_1 = 1 / (1/2 + 0.1)
        let t = theta(&[&[2.0, 0.1], &[0.3, 1.0]]);
        let g = nominal_ul_sinr(&t, 2.0);
        assert!((g[0] - 2.0 / 0.8).abs() < 1e-12);
        assert!((g[1] - 1.0 / 0.6).abs() < 1e-12);
    }

    #[test]
    fn duality_single_ue_gives_unit_power() {
        let t = theta(&[&[0.7]]);
        let snr = 5.0;
        let gamma = nominal_ul_sinr(&t, snr);
        let out = duality_power_allocation(&t, &gamma, snr);
        assert!(out.power.feasible);
        assert!((out.power.q[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn duality_symmetric_pair_is_uniform() {
        let t = theta(&[&[1.0, 0.2], &[0.2, 1.0]]);
        let gamma = nominal_ul_sinr(&t, 10.0);
        let q = duality_power_allocation(&t, &gamma, 10.0).power.q;
        assert!((q[0] - 1.0).abs() < 1e-12 && (q[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn duality_fixed_point_and_power_conservation() {
        let t = theta(&[&[1.2, 0.3, 0.05], &[0.1, 0.8, 0.2], &[0.4, 0.02, 2.0]]);
        let snr = 3.0;
        let gamma = nominal_ul_sinr(&t, snr);
        let out = duality_power_allocation(&t, &gamma, snr);
        assert!(out.power.feasible);
        let dl = nominal_dl_sinr(&t, &out.power.q, snr);
        for k in 0..3 {
            assert!((dl[k] - gamma[k]).abs() <= 1e-8 * gamma[k]);
        }
        assert!((out.power.total() - 3.0).abs() < 1e-9);
    }

    #[test]
    fn duality_scales_with_noise_without_interference() {
        let t = theta(&[&[1.0, 0.0], &[0.0, 2.0]]);
        let gamma = vec![3.0, 0.5];
        let a = duality_power_allocation(&t, &gamma, 2.0).power.q;
        let b = duality_power_allocation(&t, &gamma, 1.0).power.q;
        for k in 0..2 {
            assert!((b[k] - 2.0 * a[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn unreachable_targets_are_infeasible() {
        // two UEs that each see the other at full strength cannot both reach 10
        let t = theta(&[&[1.0, 1.0], &[1.0, 1.0]]);
        let out = duality_power_allocation(&t, &[10.0, 10.0], 1.0);
        assert!(!out.power.feasible);
    }

    #[test]
    fn unserved_rows_get_zero_power() {
        let mut t = theta(&[&[1.0, 0.0], &[0.0, 0.0]]);
        t.served[1] = false;
        let gamma = nominal_ul_sinr(&t, 1.0);
        assert_eq!(gamma[1], 0.0);
        let out = duality_power_allocation(&t, &gamma, 1.0);
        assert!(out.power.feasible);
        assert_eq!(out.power.q[1], 0.0);
        assert!((out.power.q[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn epa_examples() {
        let p = epa_central(5);
        assert_eq!(p.total(), 5.0);
        assert!(p.feasible && p.q.iter().all(|&x| x == 1.0));
        let sets = vec![vec![0, 1, 2, 3], vec![]];
        let e = epa_local(&sets, 4, 2.0);
        for k in 0..4 {
            assert_eq!(e.get(0, k), 0.5);
            assert_eq!(e.get(1, k), 0.0);
        }
        assert_eq!(e.rrh_total(0), 2.0);
        assert_eq!(e.rrh_total(1), 0.0);
    }

    #[test]
    fn ppa_examples() {
        let mut beta = DMatrix::zeros(2, 1);
        beta[(0, 0)] = 1.0;
        beta[(1, 0)] = 3.0;
        let lsfc = Lsfc::new(beta, 1.0);
        let p = ppa_local(&[vec![0, 1]], &lsfc, 1.0);
        assert!((p.get(0, 0) - 0.25).abs() < 1e-15);
        assert!((p.get(0, 1) - 0.75).abs() < 1e-15);
        let p = ppa_local(&[vec![1]], &lsfc, 2.5);
        assert_eq!(p.get(0, 1), 2.5);
        assert!((p.rrh_total(0) - 2.5).abs() < 1e-12);
    }
}
