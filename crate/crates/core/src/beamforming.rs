//! UL combiners and DL precoders.
//!
//! Centralized schemes compute one unit-norm `LM x 1` vector per UE that is
//! non-zero only on the blocks of its cluster; the same vector serves as UL
//! combiner and DL precoder. Local schemes compute one unit-norm `M x 1`
//! block per edge at each RRH independently.

use crate::association::AssociationGraph;
use crate::channel::{ChannelSet, EstimateSet};
use crate::error::{Error, Result};
use crate::linalg::{self, inner, CMat, CVec, IncrementalBasis, C64};
use crate::netgeom::Lsfc;

/// Tolerance on declared unit norms.
pub const NORM_TOL: f64 = 1e-9;

/// An `LM x 1` vector stored as its non-zero `M`-blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterVector {
    pub rrhs: Vec<usize>,
    pub blocks: Vec<CVec>,
}

impl ClusterVector {
    pub fn new(rrhs: Vec<usize>, blocks: Vec<CVec>) -> Self {
        assert_eq!(rrhs.len(), blocks.len());
        Self { rrhs, blocks }
    }

    /// Splits a stacked `|C| M` vector into blocks.
    fn from_stacked(rrhs: &[usize], stacked: &CVec, m: usize) -> Self {
        let blocks = (0..rrhs.len()).map(|i| stacked.rows(i * m, m).into_owned()).collect();
        Self::new(rrhs.to_vec(), blocks)
    }

    pub fn block(&self, rrh: usize) -> Option<&CVec> {
        self.rrhs.iter().position(|&l| l == rrh).map(|i| &self.blocks[i])
    }

    pub fn norm_squared(&self) -> f64 {
        self.blocks.iter().map(|b| b.norm_squared()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_squared().sqrt()
    }

    /// `v^H h_j` against the true channel of UE `ue`.
    pub fn dot_channel(&self, channels: &ChannelSet, ue: usize) -> C64 {
        self.rrhs
            .iter()
            .zip(&self.blocks)
            .map(|(&l, b)| inner(b, channels.block(l, ue)))
            .sum()
    }

    /// Dense `LM x 1` form.
    pub fn dense(&self, num_rrh: usize, antennas: usize) -> CVec {
        let mut out = CVec::zeros(num_rrh * antennas);
        for (&l, b) in self.rrhs.iter().zip(&self.blocks) {
            out.rows_mut(l * antennas, antennas).copy_from(b);
        }
        out
    }
}

/// Per-UE unit-norm combiners; `None` for unserved UEs.
#[derive(Debug, Clone, PartialEq)]
pub struct CombinerSet {
    pub vectors: Vec<Option<ClusterVector>>,
    /// Co-served UEs dropped from the GZF interference matrix (empty for
    /// LMMSE).
    pub excluded: Vec<Vec<usize>>,
}

impl CombinerSet {
    pub fn get(&self, ue: usize) -> Option<&ClusterVector> {
        self.vectors[ue].as_ref()
    }

    pub fn num_ue(&self) -> usize {
        self.vectors.len()
    }

    pub fn exclusion_count(&self) -> usize {
        self.excluded.iter().map(Vec::len).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockRole {
    Zf,
    Mrt,
    Outage,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PrecoderKind {
    /// Stacked vectors are unit-norm.
    Centralized,
    /// Every non-outage block is unit-norm.
    Local,
}

/// DL precoders `u_{l,k}`, stored per UE on its cluster.
#[derive(Debug, Clone, PartialEq)]
pub struct PrecoderSet {
    pub kind: PrecoderKind,
    pub columns: Vec<Option<ClusterVector>>,
    /// Local schemes: role of each block, aligned with `columns[k].rrhs`.
    pub roles: Vec<Vec<BlockRole>>,
}

impl PrecoderSet {
    pub fn get(&self, ue: usize) -> Option<&ClusterVector> {
        self.columns[ue].as_ref()
    }

    pub fn role(&self, rrh: usize, ue: usize) -> Option<BlockRole> {
        let col = self.columns[ue].as_ref()?;
        let i = col.rrhs.iter().position(|&l| l == rrh)?;
        self.roles[ue].get(i).copied()
    }

    /// Per-RRH UEs that actually receive a signal (not in outage).
    pub fn active_user_sets(&self, num_rrh: usize) -> Vec<Vec<usize>> {
        let mut sets = vec![Vec::new(); num_rrh];
        for (k, col) in self.columns.iter().enumerate() {
            let Some(col) = col else { continue };
            for (i, &l) in col.rrhs.iter().enumerate() {
                let active = match self.kind {
                    PrecoderKind::Centralized => true,
                    PrecoderKind::Local => self.roles[k][i] != BlockRole::Outage,
                };
                if active {
                    sets[l].push(k);
                }
            }
        }
        sets
    }

    pub fn count_role(&self, role: BlockRole) -> usize {
        self.roles.iter().flatten().filter(|&&r| r == role).count()
    }
}

fn stacked_known(estimates: &EstimateSet, rrhs: &[usize], ue: usize) -> CVec {
    let m = estimates.antennas();
    let mut out = CVec::zeros(rrhs.len() * m);
    for (i, &l) in rrhs.iter().enumerate() {
        if let Some(h) = estimates.get(l, ue) {
            out.rows_mut(i * m, m).copy_from(h);
        }
    }
    out
}

/// GZF combiner for UE `ue`, plus the co-served UEs excluded to avoid
/// zero-forcing outage.
///
/// The interference matrix has one column per UE of `U(C_k) \ {k}` (its
/// known blocks on `C_k`). If the projected channel keeps at most
/// `eps_zf` of its norm, columns are dropped one at a time, each time the
/// one whose removal leaves the largest projected norm.
pub fn gzf_combiner(
    estimates: &EstimateSet,
    graph: &AssociationGraph,
    ue: usize,
    eps_rank: f64,
    eps_zf: f64,
) -> Result<(ClusterVector, Vec<usize>)> {
    let cluster = graph.cluster(ue);
    if cluster.is_empty() {
        return Err(Error::Unserved(ue));
    }
    let m = estimates.antennas();
    let h = stacked_known(estimates, cluster, ue);
    let h_norm = h.norm();
    if h_norm == 0.0 {
        return Err(Error::ZeroChannel { ue });
    }
    let mut retained: Vec<(usize, CVec)> = graph
        .ues_served_by_cluster(ue)
        .into_iter()
        .filter(|&j| j != ue)
        .map(|j| (j, stacked_known(estimates, cluster, j)))
        .collect();

    let residual = |cols: &[(usize, CVec)]| -> CVec {
        let basis = if cols.is_empty() {
            CMat::zeros(h.len(), 0)
        } else {
            // unit columns keep the rank test independent of the pathloss spread
            let unit: Vec<CVec> = cols.iter().filter_map(|(_, c)| linalg::normalized(c)).collect();
            if unit.is_empty() {
                return h.clone();
            }
            let mat = CMat::from_columns(&unit);
            linalg::column_space_basis(&mat, eps_rank)
        };
        linalg::project_orthogonal(&basis, &h)
    };

    let mut excluded = Vec::new();
    let mut projected = residual(&retained);
    while projected.norm() <= eps_zf * h_norm && !retained.is_empty() {
        let (best, best_res) = (0..retained.len())
            .map(|i| {
                let mut trial = retained.clone();
                trial.remove(i);
                let r = residual(&trial);
                (i, r)
            })
            .max_by(|a, b| a.1.norm().total_cmp(&b.1.norm()))
            .expect("retained is non-empty");
        excluded.push(retained.remove(best).0);
        projected = best_res;
    }
    let v = linalg::normalized(&projected).ok_or(Error::ZeroChannel { ue })?;
    excluded.sort_unstable();
    Ok((ClusterVector::from_stacked(cluster, &v, m), excluded))
}

pub fn gzf_combiners(
    estimates: &EstimateSet,
    graph: &AssociationGraph,
    eps_rank: f64,
    eps_zf: f64,
) -> Result<CombinerSet> {
    let mut vectors = Vec::with_capacity(graph.num_ue());
    let mut excluded = Vec::with_capacity(graph.num_ue());
    for k in 0..graph.num_ue() {
        if !graph.is_served(k) {
            vectors.push(None);
            excluded.push(Vec::new());
            continue;
        }
        let (v, ex) = gzf_combiner(estimates, graph, k, eps_rank, eps_zf)?;
        vectors.push(Some(v));
        excluded.push(ex);
    }
    Ok(CombinerSet { vectors, excluded })
}

/// Variance of the unknown interference plus noise per antenna at RRH `rrh`:
/// `1 + snr * sum_{j not in U_l} beta_{l,j}`.
pub fn unknown_interference_variance(graph: &AssociationGraph, lsfc: &Lsfc, rrh: usize) -> f64 {
    let served = graph.user_set(rrh);
    let unknown: f64 = (0..graph.num_ue())
        .filter(|j| served.binary_search(j).is_err())
        .map(|j| lsfc.beta(rrh, j))
        .sum();
    1.0 + lsfc.snr * unknown
}

/// Local LMMSE vectors `(sigma^2 I + snr sum_{j in U_l} h_j h_j^H)^{-1} h_k`
/// for every `k` in `U_l`, in the order of `U_l`.
pub fn lmmse_local_combiners_at(
    estimates: &EstimateSet,
    graph: &AssociationGraph,
    lsfc: &Lsfc,
    rrh: usize,
) -> Vec<CVec> {
    let m = estimates.antennas();
    let users = graph.user_set(rrh);
    let sigma2 = unknown_interference_variance(graph, lsfc, rrh);
    let mut r = CMat::identity(m, m) * C64::new(sigma2, 0.0);
    let snr = C64::new(lsfc.snr, 0.0);
    for &j in users {
        let h = estimates.get(rrh, j).expect("U_l members have estimates");
        r += (h * h.adjoint()) * snr;
    }
    let chol = r.cholesky().expect("sigma^2 > 0 keeps the system positive definite");
    users
        .iter()
        .map(|&k| chol.solve(estimates.get(rrh, k).expect("edge")))
        .collect()
}

pub fn lmmse_local_combiner(
    estimates: &EstimateSet,
    graph: &AssociationGraph,
    lsfc: &Lsfc,
    rrh: usize,
    ue: usize,
) -> Result<CVec> {
    let pos = graph
        .user_set(rrh)
        .iter()
        .position(|&k| k == ue)
        .ok_or_else(|| Error::Dimension(format!("UE {ue} is not served by RRH {rrh}")))?;
    Ok(lmmse_local_combiners_at(estimates, graph, lsfc, rrh).swap_remove(pos))
}

/// Nominal signal amplitude `a_l` and interference-plus-noise power
/// `Gamma_l` of the local observation `v_{l,k}^H y_l`.
pub fn local_observation_statistics(
    estimates: &EstimateSet,
    graph: &AssociationGraph,
    lsfc: &Lsfc,
    rrh: usize,
    ue: usize,
    local: &CVec,
) -> (C64, f64) {
    let a = inner(local, estimates.get(rrh, ue).expect("edge"));
    let known: f64 = graph
        .user_set(rrh)
        .iter()
        .filter(|&&j| j != ue)
        .map(|&j| inner(local, estimates.get(rrh, j).expect("edge")).norm_sqr())
        .sum();
    let sigma2 = unknown_interference_variance(graph, lsfc, rrh);
    (a, lsfc.snr * known + sigma2 * local.norm_squared())
}

/// `snr |sum_l w_l^* a_l|^2 / sum_l |w_l|^2 Gamma_l`.
pub fn per_rrh_nominal_sinr(weights: &[C64], amplitudes: &[C64], powers: &[f64], snr: f64) -> f64 {
    let signal: C64 = weights.iter().zip(amplitudes).map(|(w, a)| w.conj() * a).sum();
    let noise: f64 = weights.iter().zip(powers).map(|(w, g)| w.norm_sqr() * g).sum();
    if noise == 0.0 {
        return 0.0;
    }
    snr * signal.norm_sqr() / noise
}

/// Max-SINR weights `w_l = a_l / Gamma_l` over the cluster, treating the
/// per-RRH observations as independent, and the assembled unit-norm vector.
/// `local` is aligned with `C_k`.
pub fn global_combining_weights(
    estimates: &EstimateSet,
    graph: &AssociationGraph,
    lsfc: &Lsfc,
    ue: usize,
    local: &[CVec],
) -> Result<(Vec<C64>, ClusterVector)> {
    let cluster = graph.cluster(ue);
    if cluster.is_empty() {
        return Err(Error::Unserved(ue));
    }
    assert_eq!(cluster.len(), local.len());
    let weights: Vec<C64> = cluster
        .iter()
        .zip(local)
        .map(|(&l, v)| {
            let (a, gamma) = local_observation_statistics(estimates, graph, lsfc, l, ue, v);
            if gamma > 0.0 {
                a / gamma
            } else {
                C64::new(0.0, 0.0)
            }
        })
        .collect();
    let blocks: Vec<CVec> = local.iter().zip(&weights).map(|(v, &w)| v * w).collect();
    let mut vec = ClusterVector::new(cluster.to_vec(), blocks);
    let n = vec.norm();
    if n == 0.0 || !n.is_finite() {
        return Err(Error::ZeroLocalCombiners(ue));
    }
    for b in &mut vec.blocks {
        *b /= C64::new(n, 0.0);
    }
    Ok((weights, vec))
}

pub fn lmmse_combiners(estimates: &EstimateSet, graph: &AssociationGraph, lsfc: &Lsfc) -> Result<CombinerSet> {
    let l_count = graph.num_rrh();
    // local vectors indexed [rrh][position in U_l]
    let local: Vec<Vec<CVec>> = (0..l_count)
        .map(|l| lmmse_local_combiners_at(estimates, graph, lsfc, l))
        .collect();
    let mut vectors = Vec::with_capacity(graph.num_ue());
    for k in 0..graph.num_ue() {
        let cluster = graph.cluster(k);
        if cluster.is_empty() {
            vectors.push(None);
            continue;
        }
        let blocks: Vec<CVec> = cluster
            .iter()
            .map(|&l| {
                let pos = graph.user_set(l).binary_search(&k).expect("edge");
                local[l][pos].clone()
            })
            .collect();
        let (_, v) = global_combining_weights(estimates, graph, lsfc, k, &blocks)?;
        vectors.push(Some(v));
    }
    Ok(CombinerSet {
        excluded: vec![Vec::new(); graph.num_ue()],
        vectors,
    })
}

/// Greedy full-rank selection of at most `M` UEs in descending `key`.
fn select_independent(
    estimates: &EstimateSet,
    rrh: usize,
    candidates: &[usize],
    key: impl Fn(usize) -> f64,
    eps_rank: f64,
) -> Vec<usize> {
    let mut order = candidates.to_vec();
    order.sort_by(|&a, &b| key(b).total_cmp(&key(a)).then(a.cmp(&b)));
    let mut basis = IncrementalBasis::new(eps_rank);
    let mut chosen = Vec::new();
    for k in order {
        if basis.rank() >= estimates.antennas() {
            break;
        }
        if basis.try_add(estimates.get(rrh, k).expect("edge")) {
            chosen.push(k);
        }
    }
    chosen.sort_unstable();
    chosen
}

/// Normalised ZF columns for `selected` (ascending UE order).
fn zf_blocks(estimates: &EstimateSet, rrh: usize, selected: &[usize]) -> Result<Vec<CVec>> {
    let cols: Vec<CVec> = selected
        .iter()
        .map(|&k| estimates.get(rrh, k).expect("edge").clone())
        .collect();
    let h = CMat::from_columns(&cols);
    let pinv = linalg::zero_forcing_columns(&h)
        .ok_or_else(|| Error::Dimension(format!("rank-deficient ZF matrix at RRH {rrh}")))?;
    selected
        .iter()
        .enumerate()
        .map(|(i, &k)| linalg::normalized(&pinv.column(i).into_owned()).ok_or(Error::ZeroChannel { ue: k }))
        .collect()
}

/// Local partial ZF at RRH `rrh`: ZF for the strongest (by `||h_hat||`)
/// linearly independent UEs, normalised MRT for the rest. Returned in `U_l`
/// order.
pub fn lpzf_precoders(
    estimates: &EstimateSet,
    graph: &AssociationGraph,
    rrh: usize,
    eps_rank: f64,
) -> Result<Vec<(usize, CVec, BlockRole)>> {
    let users = graph.user_set(rrh);
    let norm = |k: usize| estimates.get(rrh, k).expect("edge").norm();
    let zf = select_independent(estimates, rrh, users, norm, eps_rank);
    let zf_u = zf_blocks(estimates, rrh, &zf)?;
    users
        .iter()
        .map(|&k| match zf.binary_search(&k) {
            Ok(i) => Ok((k, zf_u[i].clone(), BlockRole::Zf)),
            Err(_) => {
                let u = linalg::normalized(estimates.get(rrh, k).expect("edge")).ok_or(Error::ZeroChannel { ue: k })?;
                Ok((k, u, BlockRole::Mrt))
            }
        })
        .collect()
}

/// Local ZF at RRH `rrh`: ZF for at most `M` independent UEs with the largest
/// LSFCs; the remaining UEs are in outage at this RRH (zero block).
pub fn lzf_precoders(
    estimates: &EstimateSet,
    graph: &AssociationGraph,
    lsfc: &Lsfc,
    rrh: usize,
    eps_rank: f64,
) -> Result<Vec<(usize, CVec, BlockRole)>> {
    let users = graph.user_set(rrh);
    let zf = select_independent(estimates, rrh, users, |k| lsfc.beta(rrh, k), eps_rank);
    let zf_u = zf_blocks(estimates, rrh, &zf)?;
    Ok(users
        .iter()
        .map(|&k| match zf.binary_search(&k) {
            Ok(i) => (k, zf_u[i].clone(), BlockRole::Zf),
            Err(_) => (k, CVec::zeros(estimates.antennas()), BlockRole::Outage),
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LocalScheme {
    Lpzf,
    Lzf,
}

/// Runs a local scheme at every RRH and assembles per-UE columns.
pub fn local_precoders(
    estimates: &EstimateSet,
    graph: &AssociationGraph,
    lsfc: &Lsfc,
    scheme: LocalScheme,
    eps_rank: f64,
) -> Result<PrecoderSet> {
    let num_ue = graph.num_ue();
    let mut per_rrh = Vec::with_capacity(graph.num_rrh());
    for l in 0..graph.num_rrh() {
        let blocks = match scheme {
            LocalScheme::Lpzf => lpzf_precoders(estimates, graph, l, eps_rank)?,
            LocalScheme::Lzf => lzf_precoders(estimates, graph, lsfc, l, eps_rank)?,
        };
        per_rrh.push(blocks);
    }
    let mut columns = Vec::with_capacity(num_ue);
    let mut roles = Vec::with_capacity(num_ue);
    for k in 0..num_ue {
        let cluster = graph.cluster(k);
        if cluster.is_empty() {
            columns.push(None);
            roles.push(Vec::new());
            continue;
        }
        let mut blocks = Vec::with_capacity(cluster.len());
        let mut r = Vec::with_capacity(cluster.len());
        for &l in cluster {
            let (_, u, role) = per_rrh[l].iter().find(|(j, _, _)| *j == k).expect("edge");
            blocks.push(u.clone());
            r.push(*role);
        }
        columns.push(Some(ClusterVector::new(cluster.to_vec(), blocks)));
        roles.push(r);
    }
    Ok(PrecoderSet {
        kind: PrecoderKind::Local,
        columns,
        roles,
    })
}

/// `u_k = v_k`; fails if a combiner is not unit-norm.
pub fn centralized_precoders_from_combiners(combiners: &CombinerSet) -> Result<PrecoderSet> {
    for (k, v) in combiners.vectors.iter().enumerate() {
        if let Some(v) = v {
            let n = v.norm();
            if (n - 1.0).abs() > NORM_TOL {
                return Err(Error::NotUnitNorm { ue: k, norm: n });
            }
        }
    }
    Ok(PrecoderSet {
        kind: PrecoderKind::Centralized,
        columns: combiners.vectors.clone(),
        roles: vec![Vec::new(); combiners.num_ue()],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{draw_channels, ChannelSet};
    use crate::netgeom::AngularSupports;
    use crate::rng::layout_rng;
    use nalgebra::DMatrix;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn v(xs: &[(f64, f64)]) -> CVec {
        CVec::from_iterator(xs.len(), xs.iter().map(|&(a, b)| c(a, b)))
    }

    #[test]
    fn gzf_without_interferers_is_matched_filter() {
        let h = v(&[(1.0, 1.0), (0.0, -2.0)]);
        let ch = ChannelSet::from_blocks(vec![vec![h.clone()]]);
        let g = AssociationGraph::from_edges(1, 1, 1, &[(0, 0)], vec![Some(0)]).unwrap();
        let est = EstimateSet::ideal(&ch, &g);
        let (u, ex) = gzf_combiner(&est, &g, 0, 1e-9, 1e-6).unwrap();
        assert!(ex.is_empty());
        assert!((&u.blocks[0] - &h / c(h.norm(), 0.0)).norm() < 1e-12);
    }

    #[test]
    fn gzf_colinear_channels_trigger_exclusion() {
        // M = 2, two UEs with identical channel direction at the only RRH
        let h0 = v(&[(1.0, 0.0), (1.0, 0.0)]);
        let h1 = &h0 * c(0.0, 2.5);
        let ch = ChannelSet::from_blocks(vec![vec![h0.clone()], vec![h1]]);
        let g = AssociationGraph::from_edges(1, 2, 2, &[(0, 0), (0, 1)], vec![Some(0), Some(1)]).unwrap();
        let est = EstimateSet::ideal(&ch, &g);
        let (u, ex) = gzf_combiner(&est, &g, 0, 1e-9, 1e-6).unwrap();
        assert_eq!(ex, vec![1]);
        assert!((&u.blocks[0] - &h0 / c(h0.norm(), 0.0)).norm() < 1e-12);
    }

    #[test]
    fn gzf_errors() {
        let ch = ChannelSet::from_blocks(vec![vec![CVec::zeros(2)], vec![v(&[(1.0, 0.0), (0.0, 0.0)])]]);
        let g = AssociationGraph::from_edges(1, 2, 1, &[(0, 0)], vec![Some(0), None]).unwrap();
        let est = EstimateSet::ideal(&ch, &g);
        assert!(matches!(gzf_combiner(&est, &g, 1, 1e-9, 1e-6), Err(Error::Unserved(1))));
        assert!(matches!(
            gzf_combiner(&est, &g, 0, 1e-9, 1e-6),
            Err(Error::ZeroChannel { ue: 0 })
        ));
    }

    fn random_setup(
        seed: u64,
        num_rrh: usize,
        num_ue: usize,
        m: usize,
        edges: &[(usize, usize)],
        pilots: Vec<Option<usize>>,
    ) -> (ChannelSet, AssociationGraph, Lsfc) {
        let lsfc = Lsfc::new(
            DMatrix::from_fn(num_ue, num_rrh, |k, l| 0.5 + 0.1 * ((k + 2 * l) % 5) as f64),
            2.0,
        );
        let supports = AngularSupports::full(num_rrh, num_ue, m);
        let ch = draw_channels(&lsfc, &supports, &mut layout_rng(seed, 0));
        let g = AssociationGraph::from_edges(num_rrh, num_ue, 8, edges, pilots).unwrap();
        (ch, g, lsfc)
    }

    #[test]
    fn gzf_annihilates_known_interference() {
        let edges = [(0, 0), (1, 0), (0, 1), (1, 2), (0, 3)];
        let (ch, g, _) = random_setup(4, 2, 4, 3, &edges, vec![Some(0), Some(1), Some(2), Some(3)]);
        let est = EstimateSet::ideal(&ch, &g);
        let set = gzf_combiners(&est, &g, 1e-9, 1e-6).unwrap();
        let v0 = set.get(0).unwrap();
        assert!((v0.norm() - 1.0).abs() < 1e-12);
        for j in [1, 2, 3] {
            let known = stacked_known(&est, g.cluster(0), j);
            let dense = CVec::from_iterator(known.len(), v0.blocks.iter().flat_map(|b| b.iter().copied()));
            assert!(inner(&dense, &known).norm() <= 1e-9 * known.norm());
        }
    }

    #[test]
    fn lmmse_single_user_keeps_direction() {
        let h = v(&[(1.0, 0.5), (-0.3, 0.2), (0.0, 1.0)]);
        let ch = ChannelSet::from_blocks(vec![vec![h.clone()]]);
        let g = AssociationGraph::from_edges(1, 1, 1, &[(0, 0)], vec![Some(0)]).unwrap();
        let lsfc = Lsfc::new(DMatrix::from_element(1, 1, 1.0), 3.0);
        let est = EstimateSet::ideal(&ch, &g);
        let u = lmmse_local_combiner(&est, &g, &lsfc, 0, 0).unwrap();
        let cos = inner(&u, &h).norm() / (u.norm() * h.norm());
        assert!((cos - 1.0).abs() < 1e-9);
    }

    #[test]
    fn lmmse_low_snr_tends_to_scaled_matched_filter() {
        let h0 = v(&[(1.0, 0.5), (-0.3, 0.2)]);
        let h1 = v(&[(0.2, 0.0), (1.0, -1.0)]);
        let ch = ChannelSet::from_blocks(vec![vec![h0.clone()], vec![h1]]);
        let g = AssociationGraph::from_edges(1, 2, 2, &[(0, 0), (0, 1)], vec![Some(0), Some(1)]).unwrap();
        let est = EstimateSet::ideal(&ch, &g);
        let lsfc = Lsfc::new(DMatrix::from_element(2, 1, 1.0), 1e-12);
        let u = lmmse_local_combiner(&est, &g, &lsfc, 0, 0).unwrap();
        // sigma^2 -> 1 as snr -> 0
        assert!((u - &h0).norm() < 1e-9);
    }

    #[test]
    fn lmmse_matches_explicit_two_by_two_inverse() {
        let h0 = v(&[(1.0, 0.0), (0.0, 0.0)]);
        let h1 = v(&[(0.0, 0.0), (0.0, 2.0)]);
        let ch = ChannelSet::from_blocks(vec![
            vec![h0.clone()],
            vec![h1.clone()],
            vec![v(&[(0.1, 0.0), (0.1, 0.0)])],
        ]);
        let g = AssociationGraph::from_edges(1, 3, 2, &[(0, 0), (0, 1)], vec![Some(0), Some(1), None]).unwrap();
        let est = EstimateSet::ideal(&ch, &g);
        let mut beta = DMatrix::from_element(3, 1, 1.0);
        beta[(2, 0)] = 0.25;
        let snr = 2.0;
        let lsfc = Lsfc::new(beta, snr);
        let sigma2 = 1.0 + snr * 0.25;
        // R = diag(sigma2 + snr * 1, sigma2 + snr * 4), closed-form inverse
        let u0 = lmmse_local_combiner(&est, &g, &lsfc, 0, 0).unwrap();
        let expected = v(&[(1.0 / (sigma2 + snr), 0.0), (0.0, 0.0)]);
        assert!((&u0 - expected).norm() < 1e-12);
        assert!(inner(&u0, &h1).norm() < 1e-12);
        let u1 = lmmse_local_combiner(&est, &g, &lsfc, 0, 1).unwrap();
        let expected = v(&[(0.0, 0.0), (0.0, 2.0 / (sigma2 + 4.0 * snr))]);
        assert!((&u1 - expected).norm() < 1e-12);
    }

    #[test]
    fn global_weights_single_rrh_and_symmetry() {
        let edges = [(0, 0), (1, 0)];
        let h = v(&[(1.0, 0.0), (0.0, 1.0)]);
        let ch = ChannelSet::from_blocks(vec![vec![h.clone(), h.clone()]]);
        let g = AssociationGraph::from_edges(2, 1, 1, &edges, vec![Some(0)]).unwrap();
        let est = EstimateSet::ideal(&ch, &g);
        let lsfc = Lsfc::new(DMatrix::from_element(1, 2, 1.0), 1.0);
        let locals: Vec<CVec> = (0..2)
            .map(|l| lmmse_local_combiner(&est, &g, &lsfc, l, 0).unwrap())
            .collect();
        let (w, _) = global_combining_weights(&est, &g, &lsfc, 0, &locals).unwrap();
        assert!((w[0] - w[1]).norm() < 1e-12);

        let g1 = AssociationGraph::from_edges(2, 1, 1, &[(1, 0)], vec![Some(0)]).unwrap();
        let est1 = EstimateSet::ideal(&ch, &g1);
        let local = lmmse_local_combiner(&est1, &g1, &lsfc, 1, 0).unwrap();
        let (_, vec) = global_combining_weights(&est1, &g1, &lsfc, 0, std::slice::from_ref(&local)).unwrap();
        assert!((&vec.blocks[0] - &local / c(local.norm(), 0.0)).norm() < 1e-12);
    }

    #[test]
    fn lpzf_identity_channel_gives_unit_vectors() {
        let e0 = v(&[(2.0, 0.0), (0.0, 0.0)]);
        let e1 = v(&[(0.0, 0.0), (2.0, 0.0)]);
        let ch = ChannelSet::from_blocks(vec![vec![e0], vec![e1]]);
        let g = AssociationGraph::from_edges(1, 2, 2, &[(0, 0), (0, 1)], vec![Some(0), Some(1)]).unwrap();
        let est = EstimateSet::ideal(&ch, &g);
        let u = lpzf_precoders(&est, &g, 0, 1e-9).unwrap();
        assert!((&u[0].1 - v(&[(1.0, 0.0), (0.0, 0.0)])).norm() < 1e-12);
        assert!((&u[1].1 - v(&[(0.0, 0.0), (1.0, 0.0)])).norm() < 1e-12);
        assert!(u.iter().all(|x| x.2 == BlockRole::Zf));
    }

    #[test]
    fn lpzf_two_antennas_three_users() {
        // norms 3 > 2 > 1; UE 2 (weakest) is left to MRT
        let h0 = v(&[(3.0, 0.0), (0.0, 0.0)]);
        let h1 = v(&[(0.0, 0.0), (0.0, 2.0)]);
        let h2 = v(&[(0.6, 0.0), (0.8, 0.0)]);
        let ch = ChannelSet::from_blocks(vec![vec![h0], vec![h1], vec![h2.clone()]]);
        let g =
            AssociationGraph::from_edges(1, 3, 3, &[(0, 0), (0, 1), (0, 2)], vec![Some(0), Some(1), Some(2)]).unwrap();
        let est = EstimateSet::ideal(&ch, &g);
        let u = lpzf_precoders(&est, &g, 0, 1e-9).unwrap();
        let roles: Vec<_> = u.iter().map(|x| x.2).collect();
        assert_eq!(roles, vec![BlockRole::Zf, BlockRole::Zf, BlockRole::Mrt]);
        assert!((&u[2].1 - h2).norm() < 1e-12);
        // ZF members do not leak into each other
        assert!(inner(est.get(0, 1).unwrap(), &u[0].1).norm() < 1e-9);
        assert!(inner(est.get(0, 0).unwrap(), &u[1].1).norm() < 1e-9);
    }

    #[test]
    fn lpzf_skips_dependent_channel() {
        // h1 is colinear with the stronger h0, so h2 joins the ZF set instead
        let h0 = v(&[(3.0, 0.0), (3.0, 0.0)]);
        let h1 = v(&[(0.0, 2.0), (0.0, 2.0)]);
        let h2 = v(&[(1.0, 0.0), (0.0, 0.0)]);
        let ch = ChannelSet::from_blocks(vec![vec![h0], vec![h1], vec![h2]]);
        let g =
            AssociationGraph::from_edges(1, 3, 3, &[(0, 0), (0, 1), (0, 2)], vec![Some(0), Some(1), Some(2)]).unwrap();
        let est = EstimateSet::ideal(&ch, &g);
        let roles: Vec<_> = lpzf_precoders(&est, &g, 0, 1e-9)
            .unwrap()
            .into_iter()
            .map(|x| x.2)
            .collect();
        assert_eq!(roles, vec![BlockRole::Zf, BlockRole::Mrt, BlockRole::Zf]);
    }

    #[test]
    fn lzf_single_antenna_serves_stronger_beta() {
        let ch = ChannelSet::from_blocks(vec![vec![v(&[(5.0, 0.0)])], vec![v(&[(0.0, 1.0)])]]);
        let g = AssociationGraph::from_edges(1, 2, 2, &[(0, 0), (0, 1)], vec![Some(0), Some(1)]).unwrap();
        let est = EstimateSet::ideal(&ch, &g);
        let mut beta = DMatrix::from_element(2, 1, 1.0);
        beta[(1, 0)] = 2.0;
        let lsfc = Lsfc::new(beta, 1.0);
        let u = lzf_precoders(&est, &g, &lsfc, 0, 1e-9).unwrap();
        assert_eq!(u[0].2, BlockRole::Outage);
        assert_eq!(u[0].1.norm(), 0.0);
        assert_eq!(u[1].2, BlockRole::Zf);
        assert!((&u[1].1 - v(&[(0.0, 1.0)])).norm() < 1e-12);
    }

    #[test]
    fn centralized_copy_checks_norm() {
        let good = ClusterVector::new(vec![0], vec![v(&[(0.6, 0.0), (0.0, 0.8)])]);
        let set = CombinerSet {
            vectors: vec![Some(good.clone()), None],
            excluded: vec![vec![], vec![]],
        };
        let p = centralized_precoders_from_combiners(&set).unwrap();
        assert_eq!(p.get(0), Some(&good));
        assert!(p.get(1).is_none());
        let again = centralized_precoders_from_combiners(&CombinerSet {
            vectors: p.columns.clone(),
            excluded: set.excluded.clone(),
        })
        .unwrap();
        assert_eq!(again, p);
        let bad = CombinerSet {
            vectors: vec![Some(ClusterVector::new(vec![0], vec![v(&[(2.0, 0.0)])]))],
            excluded: vec![vec![]],
        };
        assert!(matches!(
            centralized_precoders_from_combiners(&bad),
            Err(Error::NotUnitNorm { .. })
        ));
    }
}
