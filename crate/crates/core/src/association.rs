//! User-centric cluster formation and UL pilot assignment.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config::SimConfig;
use crate::error::{Error, Result};
use crate::netgeom::Lsfc;

/// Bipartite UE-RRH association with pilot map.
#[derive(Debug, Clone, PartialEq)]
pub struct AssociationGraph {
    num_rrh: usize,
    num_ue: usize,
    pilot_dim: usize,
    /// `C_k`, in the order the RRHs were granted (descending beta).
    clusters: Vec<Vec<usize>>,
    /// `U_l`, ascending UE index.
    user_sets: Vec<Vec<usize>>,
    pilots: Vec<Option<usize>>,
    edge: Vec<bool>,
}

/// Serialized form of an [`AssociationGraph`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphDocument {
    pub num_rrh: usize,
    pub num_ue: usize,
    pub pilot_dim: usize,
    /// `[rrh, ue]` pairs, listed per UE in cluster order.
    pub edges: Vec<[usize; 2]>,
    pub pilots: Vec<Option<usize>>,
}

impl AssociationGraph {
    fn empty(num_rrh: usize, num_ue: usize, pilot_dim: usize) -> Self {
        Self {
            num_rrh,
            num_ue,
            pilot_dim,
            clusters: vec![Vec::new(); num_ue],
            user_sets: vec![Vec::new(); num_rrh],
            pilots: vec![None; num_ue],
            edge: vec![false; num_rrh * num_ue],
        }
    }

    fn connect(&mut self, rrh: usize, ue: usize) {
        self.clusters[ue].push(rrh);
        let set = &mut self.user_sets[rrh];
        let pos = set.binary_search(&ue).unwrap_err();
        set.insert(pos, ue);
        self.edge[ue * self.num_rrh + rrh] = true;
    }

    /// Builds a graph from explicit edges `(rrh, ue)` and pilots. Cluster
    /// order follows the order of `edges`.
    pub fn from_edges(
        num_rrh: usize,
        num_ue: usize,
        pilot_dim: usize,
        edges: &[(usize, usize)],
        pilots: Vec<Option<usize>>,
    ) -> Result<Self> {
        if pilots.len() != num_ue {
            return Err(Error::Dimension(format!("{} pilots for {num_ue} UEs", pilots.len())));
        }
        let mut g = Self::empty(num_rrh, num_ue, pilot_dim);
        for &(l, k) in edges {
            if l >= num_rrh || k >= num_ue {
                return Err(Error::Dimension(format!("edge ({l}, {k}) out of range")));
            }
            if g.is_edge(l, k) {
                return Err(Error::Dimension(format!("duplicate edge ({l}, {k})")));
            }
            g.connect(l, k);
        }
        for (k, p) in pilots.iter().enumerate() {
            match *p {
                Some(t) if t >= pilot_dim => return Err(Error::Dimension(format!("pilot {t} of UE {k} out of range"))),
                None if !g.clusters[k].is_empty() => {
                    return Err(Error::Dimension(format!("served UE {k} has no pilot")))
                }
                _ => {}
            }
        }
        g.pilots = pilots;
        Ok(g)
    }

    pub fn num_rrh(&self) -> usize {
        self.num_rrh
    }

    pub fn num_ue(&self) -> usize {
        self.num_ue
    }

    pub fn pilot_dim(&self) -> usize {
        self.pilot_dim
    }

    #[inline]
    pub fn is_edge(&self, rrh: usize, ue: usize) -> bool {
        self.edge[ue * self.num_rrh + rrh]
    }

    pub fn cluster(&self, ue: usize) -> &[usize] {
        &self.clusters[ue]
    }

    pub fn user_set(&self, rrh: usize) -> &[usize] {
        &self.user_sets[rrh]
    }

    pub fn user_sets(&self) -> &[Vec<usize>] {
        &self.user_sets
    }

    pub fn pilot(&self, ue: usize) -> Option<usize> {
        self.pilots[ue]
    }

    pub fn is_served(&self, ue: usize) -> bool {
        !self.clusters[ue].is_empty()
    }

    pub fn unserved(&self) -> Vec<usize> {
        (0..self.num_ue).filter(|&k| !self.is_served(k)).collect()
    }

    pub fn served_count(&self) -> usize {
        (0..self.num_ue).filter(|&k| self.is_served(k)).count()
    }

    /// All edges `(rrh, ue)`, grouped by UE in cluster order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.clusters
            .iter()
            .enumerate()
            .flat_map(|(k, c)| c.iter().map(move |&l| (l, k)))
    }

    pub fn edge_count(&self) -> usize {
        self.clusters.iter().map(Vec::len).sum()
    }

    /// `U(C_k)`: UEs served by at least one RRH of `C_k`, ascending. Empty
    /// for an unserved UE.
    pub fn ues_served_by_cluster(&self, ue: usize) -> Vec<usize> {
        let set: BTreeSet<usize> = self.clusters[ue]
            .iter()
            .flat_map(|&l| self.user_sets[l].iter().copied())
            .collect();
        set.into_iter().collect()
    }

    /// Checks every structural invariant; `lsfc`/`config` add the threshold
    /// and cluster-size checks.
    pub fn check_invariants(&self, lsfc: Option<(&Lsfc, &SimConfig)>) -> std::result::Result<(), String> {
        for k in 0..self.num_ue {
            for &l in &self.clusters[k] {
                if !self.user_sets[l].contains(&k) || !self.is_edge(l, k) {
                    return Err(format!("edge ({l}, {k}) missing from U_{l}"));
                }
            }
        }
        for (l, set) in self.user_sets.iter().enumerate() {
            if set.len() > self.pilot_dim {
                return Err(format!("|U_{l}| = {} exceeds pilot dimension", set.len()));
            }
            let mut seen = BTreeSet::new();
            for &k in set {
                if !self.clusters[k].contains(&l) {
                    return Err(format!("UE {k} in U_{l} but RRH not in C_{k}"));
                }
                let Some(t) = self.pilots[k] else {
                    return Err(format!("served UE {k} has no pilot"));
                };
                if !seen.insert(t) {
                    return Err(format!("pilot {t} reused inside U_{l}"));
                }
            }
        }
        if self.edge.iter().filter(|&&e| e).count() != self.edge_count() {
            return Err("edge mask disagrees with clusters".into());
        }
        if let Some((lsfc, cfg)) = lsfc {
            let thr = association_threshold(lsfc, cfg);
            for (l, k) in self.edges() {
                if lsfc.beta(l, k) < thr {
                    return Err(format!("edge ({l}, {k}) below the SNR threshold"));
                }
            }
            if self.clusters.iter().any(|c| c.len() > cfg.scenario.max_cluster_size) {
                return Err("cluster larger than Q".into());
            }
        }
        Ok(())
    }

    pub fn to_document(&self) -> GraphDocument {
        GraphDocument {
            num_rrh: self.num_rrh,
            num_ue: self.num_ue,
            pilot_dim: self.pilot_dim,
            edges: self.edges().map(|(l, k)| [l, k]).collect(),
            pilots: self.pilots.clone(),
        }
    }

    pub fn from_document(doc: &GraphDocument) -> Result<Self> {
        let edges: Vec<(usize, usize)> = doc.edges.iter().map(|e| (e[0], e[1])).collect();
        Self::from_edges(doc.num_rrh, doc.num_ue, doc.pilot_dim, &edges, doc.pilots.clone())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_document())?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_document(&serde_json::from_str(text)?)
    }
}

/// Minimum LSFC of an association edge, `eta / (M snr)`.
pub fn association_threshold(lsfc: &Lsfc, config: &SimConfig) -> f64 {
    config.scenario.snr_threshold / (config.scenario.antennas_per_rrh as f64 * lsfc.snr)
}

/// Greedy user-centric cluster formation.
///
/// UEs are visited in a random order. Each UE requests its eligible RRHs in
/// descending beta until it holds `Q` of them. An RRH grants a request while
/// it has fewer than `tau_p` users and the UE's pilot is free in its user
/// set; a UE without a pilot adopts the least-used pilot that is free at the
/// RRH (lowest index on ties).
pub fn form_clusters<R: Rng + ?Sized>(lsfc: &Lsfc, config: &SimConfig, rng: &mut R) -> AssociationGraph {
    let s = &config.scenario;
    let (num_rrh, num_ue, tau_p) = (lsfc.num_rrh(), lsfc.num_ue(), s.pilot_dim);
    let mut g = AssociationGraph::empty(num_rrh, num_ue, tau_p);
    let thr = association_threshold(lsfc, config);
    let mut pilot_use = vec![0usize; tau_p];

    let mut order: Vec<usize> = (0..num_ue).collect();
    order.shuffle(rng);

    for k in order {
        let mut eligible: Vec<usize> = (0..num_rrh).filter(|&l| lsfc.beta(l, k) >= thr).collect();
        eligible.sort_by(|&a, &b| lsfc.beta(b, k).total_cmp(&lsfc.beta(a, k)).then(a.cmp(&b)));
        for l in eligible {
            if g.clusters[k].len() >= s.max_cluster_size {
                break;
            }
            if g.user_sets[l].len() >= tau_p {
                continue;
            }
            let mut taken = vec![false; tau_p];
            for &j in &g.user_sets[l] {
                if let Some(t) = g.pilots[j] {
                    taken[t] = true;
                }
            }
            match g.pilots[k] {
                Some(t) if taken[t] => continue,
                Some(_) => {}
                None => {
                    let t = (0..tau_p)
                        .filter(|&t| !taken[t])
                        .min_by_key(|&t| (pilot_use[t], t))
                        .expect("a free pilot exists while |U_l| < tau_p");
                    g.pilots[k] = Some(t);
                    pilot_use[t] += 1;
                }
            }
            g.connect(l, k);
        }
    }
    g
}
