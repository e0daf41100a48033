//! Single-ring DFT-subspace channels and subspace-projection estimation from
//! contaminated UL pilots.

use std::f64::consts::TAU;

use rand::Rng;

use crate::association::AssociationGraph;
use crate::error::{Error, Result};
use crate::linalg::{CMat, CVec, C64};
use crate::netgeom::{AngularSupports, Lsfc};
use crate::rng::complex_normal;

/// `F(:, S)` of the unitary `M x M` DFT, `F[m, n] = exp(-j 2 pi m n / M) / sqrt(M)`.
pub fn dft_submatrix(antennas: usize, support: &[usize]) -> Result<CMat> {
    if support.is_empty() {
        return Err(Error::EmptySupport);
    }
    let scale = 1.0 / (antennas as f64).sqrt();
    Ok(CMat::from_fn(antennas, support.len(), |m, c| {
        let phase = -TAU * (m * support[c]) as f64 / antennas as f64;
        C64::from_polar(scale, phase)
    }))
}

/// `F_S F_S^H x`.
pub fn project_onto_support(antennas: usize, support: &[usize], x: &CVec) -> CVec {
    let f = dft_submatrix(antennas, support).expect("supports are never empty");
    &f * f.ad_mul(x)
}

/// True channels `h_{l,k}` of every UE-RRH pair.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet {
    num_rrh: usize,
    num_ue: usize,
    antennas: usize,
    blocks: Vec<CVec>,
}

impl ChannelSet {
    /// `blocks[k][l]` is the `M x 1` channel between RRH `l` and UE `k`.
    pub fn from_blocks(blocks: Vec<Vec<CVec>>) -> Self {
        let num_ue = blocks.len();
        let num_rrh = blocks.first().map_or(0, Vec::len);
        let antennas = blocks.first().and_then(|r| r.first()).map_or(0, |b| b.len());
        assert!(blocks
            .iter()
            .all(|r| r.len() == num_rrh && r.iter().all(|b| b.len() == antennas)));
        Self {
            num_rrh,
            num_ue,
            antennas,
            blocks: blocks.into_iter().flatten().collect(),
        }
    }

    #[inline]
    pub fn block(&self, rrh: usize, ue: usize) -> &CVec {
        &self.blocks[ue * self.num_rrh + rrh]
    }

    pub fn num_rrh(&self) -> usize {
        self.num_rrh
    }

    pub fn num_ue(&self) -> usize {
        self.num_ue
    }

    pub fn antennas(&self) -> usize {
        self.antennas
    }

    /// Stacked `LM x 1` channel of UE `ue`.
    pub fn stacked(&self, ue: usize) -> CVec {
        let mut out = CVec::zeros(self.num_rrh * self.antennas);
        for l in 0..self.num_rrh {
            out.rows_mut(l * self.antennas, self.antennas)
                .copy_from(self.block(l, ue));
        }
        out
    }
}

/// `h = sqrt(beta M / |S|) F(:, S) nu`, `nu ~ CN(0, I)`, independent per pair.
pub fn draw_channels<R: Rng + ?Sized>(lsfc: &Lsfc, supports: &AngularSupports, rng: &mut R) -> ChannelSet {
    let m = supports.antennas();
    let (num_rrh, num_ue) = (lsfc.num_rrh(), lsfc.num_ue());
    let mut blocks = Vec::with_capacity(num_rrh * num_ue);
    for k in 0..num_ue {
        for l in 0..num_rrh {
            let s = supports.get(l, k);
            let f = dft_submatrix(m, s).expect("supports are never empty");
            let nu = CVec::from_fn(s.len(), |_, _| complex_normal(rng));
            let scale = (lsfc.beta(l, k) * m as f64 / s.len() as f64).sqrt();
            blocks.push(f * nu * C64::new(scale, 0.0));
        }
    }
    ChannelSet {
        num_rrh,
        num_ue,
        antennas: m,
        blocks,
    }
}

/// Pilot codebook entry `phi_t = sqrt(tau_p snr) e_t`.
pub fn pilot_amplitude(pilot_dim: usize, snr: f64) -> f64 {
    (pilot_dim as f64 * snr).sqrt()
}

/// Noise-free part of `Y_l = sum_i h_{l,i} phi_{t_i}^H`, one `M x tau_p`
/// matrix per RRH. UEs without a pilot do not transmit one.
pub fn pilot_signal(channels: &ChannelSet, graph: &AssociationGraph, snr: f64) -> Vec<CMat> {
    let tau_p = graph.pilot_dim();
    let amp = C64::new(pilot_amplitude(tau_p, snr), 0.0);
    (0..channels.num_rrh())
        .map(|l| {
            let mut y = CMat::zeros(channels.antennas(), tau_p);
            for i in 0..channels.num_ue() {
                if let Some(t) = graph.pilot(i) {
                    let mut col = y.column_mut(t);
                    col += channels.block(l, i) * amp;
                }
            }
            y
        })
        .collect()
}

/// `Y_l^pilot` including unit-variance complex Gaussian noise.
pub fn received_pilot_matrix<R: Rng + ?Sized>(
    channels: &ChannelSet,
    graph: &AssociationGraph,
    lsfc: &Lsfc,
    rng: &mut R,
) -> Vec<CMat> {
    let mut y = pilot_signal(channels, graph, lsfc.snr);
    for yl in &mut y {
        for z in yl.iter_mut() {
            *z += complex_normal(rng);
        }
    }
    y
}

/// Per-edge channel knowledge `h_{l,k}`, `(l, k)` in E.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateSet {
    num_rrh: usize,
    antennas: usize,
    blocks: Vec<Option<CVec>>,
}

impl EstimateSet {
    /// Ideal partial CSI: the true channels restricted to the edges.
    pub fn ideal(channels: &ChannelSet, graph: &AssociationGraph) -> Self {
        let num_rrh = channels.num_rrh();
        let mut blocks = vec![None; num_rrh * channels.num_ue()];
        for (l, k) in graph.edges() {
            blocks[k * num_rrh + l] = Some(channels.block(l, k).clone());
        }
        Self {
            num_rrh,
            antennas: channels.antennas(),
            blocks,
        }
    }

    #[inline]
    pub fn get(&self, rrh: usize, ue: usize) -> Option<&CVec> {
        self.blocks[ue * self.num_rrh + rrh].as_ref()
    }

    /// Known block, or zero when `(rrh, ue)` is not an edge.
    pub fn block_or_zero(&self, rrh: usize, ue: usize) -> CVec {
        self.get(rrh, ue).cloned().unwrap_or_else(|| CVec::zeros(self.antennas))
    }

    pub fn antennas(&self) -> usize {
        self.antennas
    }

    pub fn num_rrh(&self) -> usize {
        self.num_rrh
    }

    pub fn num_ue(&self) -> usize {
        self.blocks.len().checked_div(self.num_rrh).unwrap_or(0)
    }
}

/// `h_hat_{l,k} = F F^H Y_l phi_{t_k} / (tau_p snr)` for every edge.
pub fn estimate_channels(
    pilot_rx: &[CMat],
    graph: &AssociationGraph,
    supports: &AngularSupports,
    snr: f64,
) -> EstimateSet {
    let m = supports.antennas();
    let num_rrh = graph.num_rrh();
    let mut blocks = vec![None; num_rrh * graph.num_ue()];
    // Y phi_t / (tau_p snr) = Y[:, t] / sqrt(tau_p snr)
    let inv_amp = C64::new(1.0 / pilot_amplitude(graph.pilot_dim(), snr), 0.0);
    for (l, k) in graph.edges() {
        let t = graph.pilot(k).expect("served UEs carry a pilot");
        let despread = pilot_rx[l].column(t).into_owned() * inv_amp;
        blocks[k * num_rrh + l] = Some(project_onto_support(m, supports.get(l, k), &despread));
    }
    EstimateSet {
        num_rrh,
        antennas: m,
        blocks,
    }
}
