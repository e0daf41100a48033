//! Actual optimistic SINRs against the true channels, Monte Carlo ergodic
//! rates, spectral efficiency and empirical CDFs.

use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::association::{form_clusters, AssociationGraph};
use crate::beamforming::{
    centralized_precoders_from_combiners, gzf_combiners, lmmse_combiners, local_precoders, BlockRole, ClusterVector,
    CombinerSet, LocalScheme, PrecoderSet,
};
use crate::channel::{draw_channels, estimate_channels, received_pilot_matrix, ChannelSet, EstimateSet};
use crate::config::{CentralPower, Combining, CsiMode, LocalPower, LocalPrecoding, RateUnit, Scheme, SimConfig};
use crate::error::{Error, Result};
use crate::linalg::inner;
use crate::netgeom::{generate_layout, lsfc_from_layout, AngularSupports, Layout, Lsfc};
use crate::power::{
    duality_power_allocation, epa_local, nominal_dl_sinr, nominal_ul_sinr, ppa_local, theta_matrix, EdgePowers,
    PowerVector, ThetaMatrix, POWER_SUM_TOL, RESIDUAL_TOL,
};
use crate::rng::{fading_rng, layout_rng};

/// `|v^H h_k|^2 / (1/snr + sum_{j != k} |v^H h_j|^2)` over the true channels
/// of every UE.
pub fn ul_sinr_actual(channels: &ChannelSet, combiner: Option<&ClusterVector>, snr: f64, ue: usize) -> f64 {
    let Some(v) = combiner else { return 0.0 };
    let mut interference = 0.0;
    let mut signal = 0.0;
    for j in 0..channels.num_ue() {
        let g = v.dot_channel(channels, j).norm_sqr();
        if j == ue {
            signal = g;
        } else {
            interference += g;
        }
    }
    signal / (1.0 / snr + interference)
}

/// Centralized DL SINR with per-UE powers `q`.
pub fn dl_sinr_actual(channels: &ChannelSet, precoders: &PrecoderSet, q: &PowerVector, snr: f64, ue: usize) -> f64 {
    let Some(u) = precoders.get(ue) else { return 0.0 };
    let signal = u.dot_channel(channels, ue).norm_sqr() * q.q[ue];
    let interference: f64 = (0..channels.num_ue())
        .filter(|&j| j != ue)
        .filter_map(|j| {
            precoders
                .get(j)
                .map(|uj| uj.dot_channel(channels, ue).norm_sqr() * q.q[j])
        })
        .sum();
    signal / (1.0 / snr + interference)
}

/// DL SINR with per-RRH powers: the useful term adds the per-RRH received
/// powers of UE `ue`, the interference those of every other UE's blocks.
pub fn dl_sinr_distributed(
    channels: &ChannelSet,
    precoders: &PrecoderSet,
    powers: &EdgePowers,
    snr: f64,
    ue: usize,
) -> f64 {
    let per_block = |j: usize| -> f64 {
        precoders.get(j).map_or(0.0, |u| {
            u.rrhs
                .iter()
                .zip(&u.blocks)
                .map(|(&l, b)| inner(channels.block(l, ue), b).norm_sqr() * powers.get(l, j))
                .sum()
        })
    };
    let signal = per_block(ue);
    let interference: f64 = (0..channels.num_ue()).filter(|&j| j != ue).map(per_block).sum();
    signal / (1.0 / snr + interference)
}

/// `gains[(a, b)] = |u_b^H h_a|^2` for every channel `a` and beamformer `b`.
pub fn beam_gains(channels: &ChannelSet, beams: &[Option<ClusterVector>]) -> DMatrix<f64> {
    let k = channels.num_ue();
    let cols: Vec<Vec<f64>> = beams
        .par_iter()
        .map(|b| match b {
            Some(u) => (0..k).map(|a| u.dot_channel(channels, a).norm_sqr()).collect(),
            None => vec![0.0; k],
        })
        .collect();
    DMatrix::from_fn(k, beams.len(), |a, b| cols[b][a])
}

fn ul_sinrs_from_gains(gains: &DMatrix<f64>, served: &[bool], snr: f64) -> Vec<f64> {
    let k_count = gains.nrows();
    (0..k_count)
        .map(|k| {
            if !served[k] {
                return 0.0;
            }
            let col = gains.column(k);
            let interference = col.sum() - col[k];
            col[k] / (1.0 / snr + interference)
        })
        .collect()
}

fn dl_sinrs_from_gains(gains: &DMatrix<f64>, served: &[bool], q: &[f64], snr: f64) -> Vec<f64> {
    let k_count = gains.nrows();
    (0..k_count)
        .map(|k| {
            if !served[k] {
                return 0.0;
            }
            let interference: f64 = (0..k_count).filter(|&j| j != k).map(|j| gains[(k, j)] * q[j]).sum();
            gains[(k, k)] * q[k] / (1.0 / snr + interference)
        })
        .collect()
}

/// `E||x||^2 = tr(sum_k q_k u_k u_k^H)`, accumulated entry by entry over the
/// `LM` transmit antennas.
pub fn total_transmit_power(precoders: &PrecoderSet, q: &[f64], num_rrh: usize, antennas: usize) -> f64 {
    let mut diag = vec![0.0; num_rrh * antennas];
    for (k, col) in precoders.columns.iter().enumerate() {
        let Some(u) = col else { continue };
        for (&l, b) in u.rrhs.iter().zip(&u.blocks) {
            for (m, z) in b.iter().enumerate() {
                diag[l * antennas + m] += q[k] * z.norm_sqr();
            }
        }
    }
    diag.iter().sum()
}

/// `sum_l sum_k q_{l,k} ||u_{l,k}||^2`.
pub fn total_transmit_power_distributed(precoders: &PrecoderSet, powers: &EdgePowers) -> f64 {
    precoders
        .columns
        .iter()
        .enumerate()
        .filter_map(|(k, c)| c.as_ref().map(|u| (k, u)))
        .map(|(k, u)| {
            u.rrhs
                .iter()
                .zip(&u.blocks)
                .map(|(&l, b)| powers.get(l, k) * b.norm_squared())
                .sum::<f64>()
        })
        .sum()
}

/// `(1 - tau_p / T) R`.
pub fn spectral_efficiency(rate: f64, config: &SimConfig) -> f64 {
    config.prelog() * rate
}

/// Everything that stays fixed across the fading draws of one layout.
#[derive(Debug, Clone)]
pub struct LayoutContext {
    pub index: usize,
    pub layout: Option<Layout>,
    pub lsfc: Lsfc,
    pub supports: AngularSupports,
    pub graph: AssociationGraph,
}

impl LayoutContext {
    /// Positions, LSFCs and clusters for layout `index` of `config`.
    pub fn generate(config: &SimConfig, index: usize) -> Self {
        let mut rng = layout_rng(config.scenario.seed, index);
        let layout = generate_layout(config, &mut rng);
        let lsfc = lsfc_from_layout(&layout, config, &mut rng);
        let graph = form_clusters(&lsfc, config, &mut rng);
        let supports = AngularSupports::from_layout(&layout, config);
        Self {
            index,
            layout: Some(layout),
            lsfc,
            supports,
            graph,
        }
    }
}

/// True channels and their per-edge estimates for one fading draw.
#[derive(Debug, Clone)]
pub struct DrawInputs {
    pub channels: ChannelSet,
    pub estimates: EstimateSet,
}

pub fn draw_inputs(config: &SimConfig, ctx: &LayoutContext, draw: usize) -> DrawInputs {
    let mut rng = fading_rng(config.scenario.seed, ctx.index, draw);
    let channels = draw_channels(&ctx.lsfc, &ctx.supports, &mut rng);
    let estimates = match config.scenario.csi {
        CsiMode::Ideal => EstimateSet::ideal(&channels, &ctx.graph),
        CsiMode::Estimated => {
            let rx = received_pilot_matrix(&channels, &ctx.graph, &ctx.lsfc, &mut rng);
            estimate_channels(&rx, &ctx.graph, &ctx.supports, ctx.lsfc.snr)
        }
    };
    DrawInputs { channels, estimates }
}

/// Event counters accumulated over draws.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Counters {
    /// Draws where the duality solve failed and EPA was used instead.
    pub duality_infeasible: usize,
    /// Co-served UEs dropped from GZF interference matrices.
    pub gzf_exclusions: usize,
    pub mrt_blocks: usize,
    pub outage_blocks: usize,
    /// Largest relative nominal DL vs UL SINR mismatch on feasible draws.
    pub duality_max_sinr_error: f64,
    /// Largest `|sum q - served| / served` on feasible draws.
    pub duality_max_sum_error: f64,
    /// Largest relative gap between the transmit covariance trace and the
    /// nominal total power.
    pub max_power_identity_error: f64,
}

impl Counters {
    fn merge(&mut self, other: &Counters) {
        self.duality_infeasible += other.duality_infeasible;
        self.gzf_exclusions += other.gzf_exclusions;
        self.mrt_blocks += other.mrt_blocks;
        self.outage_blocks += other.outage_blocks;
        self.duality_max_sinr_error = self.duality_max_sinr_error.max(other.duality_max_sinr_error);
        self.duality_max_sum_error = self.duality_max_sum_error.max(other.duality_max_sum_error);
        self.max_power_identity_error = self.max_power_identity_error.max(other.max_power_identity_error);
    }
}

/// Nominal quantities behind one centralized power allocation.
#[derive(Debug, Clone, Serialize)]
pub struct PowerDebug {
    pub theta: Option<ThetaMatrix>,
    pub gamma: Vec<f64>,
    pub q: Vec<f64>,
    pub feasible: bool,
}

/// Per-scheme outcome of one fading draw.
#[derive(Debug, Clone)]
pub struct SchemeDraw {
    pub scheme: Scheme,
    pub ul_sinr: Option<Vec<f64>>,
    pub dl_sinr: Vec<f64>,
    /// Nominal total DL power (`sum q`).
    pub nominal_power: f64,
    /// Trace of the transmit covariance.
    pub transmit_power: f64,
    pub counters: Counters,
    pub power_debug: Option<PowerDebug>,
}

#[derive(Default)]
struct BeamCache {
    gzf: Option<(CombinerSet, PrecoderSet, DMatrix<f64>)>,
    lmmse: Option<(CombinerSet, PrecoderSet, DMatrix<f64>)>,
    lpzf: Option<PrecoderSet>,
    lzf: Option<PrecoderSet>,
}

fn rel_err(a: f64, b: f64) -> f64 {
    let scale = b.abs().max(f64::MIN_POSITIVE);
    (a - b).abs() / scale
}

/// Runs every scheme on the same draw. Combiners and local precoders are
/// computed once and shared by the schemes that use them.
pub fn evaluate_schemes(
    config: &SimConfig,
    ctx: &LayoutContext,
    inputs: &DrawInputs,
    schemes: &[Scheme],
    keep_debug: bool,
) -> Result<Vec<SchemeDraw>> {
    let num = &config.numerics;
    let snr = ctx.lsfc.snr;
    let graph = &ctx.graph;
    let (est, ch) = (&inputs.estimates, &inputs.channels);
    let served: Vec<bool> = (0..graph.num_ue()).map(|k| graph.is_served(k)).collect();
    let mut cache = BeamCache::default();
    let mut out = Vec::with_capacity(schemes.len());

    for &scheme in schemes {
        let mut counters = Counters::default();
        let draw = match scheme {
            Scheme::Central(combining, power) => {
                let slot = match combining {
                    Combining::Gzf => &mut cache.gzf,
                    Combining::Lmmse => &mut cache.lmmse,
                };
                if slot.is_none() {
                    let combiners = match combining {
                        Combining::Gzf => gzf_combiners(est, graph, num.eps_rank, num.eps_zf)?,
                        Combining::Lmmse => lmmse_combiners(est, graph, &ctx.lsfc)?,
                    };
                    let precoders = centralized_precoders_from_combiners(&combiners)?;
                    let gains = beam_gains(ch, &combiners.vectors);
                    *slot = Some((combiners, precoders, gains));
                }
                let (combiners, precoders, gains) = slot.as_ref().expect("filled above");
                counters.gzf_exclusions = combiners.exclusion_count();
                let ul = ul_sinrs_from_gains(gains, &served, snr);

                let epa: Vec<f64> = served.iter().map(|&s| if s { 1.0 } else { 0.0 }).collect();
                let (q, debug) = match power {
                    CentralPower::Epa => (
                        epa.clone(),
                        keep_debug.then(|| PowerDebug {
                            theta: None,
                            gamma: Vec::new(),
                            q: epa.clone(),
                            feasible: true,
                        }),
                    ),
                    CentralPower::Duality => {
                        let theta = theta_matrix(est, graph, &ctx.lsfc, &combiners.vectors, num.theta_norm);
                        let gamma = nominal_ul_sinr(&theta, snr);
                        let outcome = duality_power_allocation(&theta, &gamma, snr);
                        let n_served = theta.served_count() as f64;
                        let mut feasible = outcome.power.feasible;
                        if feasible {
                            let dl = nominal_dl_sinr(&theta, &outcome.power.q, snr);
                            let sinr_err = dl
                                .iter()
                                .zip(&gamma)
                                .filter(|(_, &g)| g > 0.0)
                                .map(|(&d, &g)| rel_err(d, g))
                                .fold(0.0, f64::max);
                            let sum_err = if n_served > 0.0 {
                                rel_err(outcome.power.total(), n_served)
                            } else {
                                0.0
                            };
                            if sum_err > POWER_SUM_TOL || sinr_err > RESIDUAL_TOL * 1e2 {
                                log::warn!(
                                    "layout {}: duality power sum {:.3e} off by {:.2e}, sinr error {:.2e}",
                                    ctx.index,
                                    outcome.power.total(),
                                    sum_err,
                                    sinr_err
                                );
                                feasible = false;
                            } else {
                                counters.duality_max_sinr_error = sinr_err;
                                counters.duality_max_sum_error = sum_err;
                            }
                        }
                        let q = if feasible {
                            outcome.power.q.clone()
                        } else {
                            log::debug!("layout {}: duality infeasible, using EPA", ctx.index);
                            counters.duality_infeasible = 1;
                            epa.clone()
                        };
                        let debug = keep_debug.then(|| PowerDebug {
                            theta: Some(theta.clone()),
                            gamma: gamma.clone(),
                            q: q.clone(),
                            feasible,
                        });
                        (q, debug)
                    }
                };
                let dl = dl_sinrs_from_gains(gains, &served, &q, snr);
                let nominal: f64 = q.iter().sum();
                let actual = total_transmit_power(precoders, &q, graph.num_rrh(), est.antennas());
                counters.max_power_identity_error = if nominal > 0.0 {
                    rel_err(actual, nominal)
                } else {
                    actual
                };
                SchemeDraw {
                    scheme,
                    ul_sinr: Some(ul),
                    dl_sinr: dl,
                    nominal_power: nominal,
                    transmit_power: actual,
                    counters,
                    power_debug: debug,
                }
            }
            Scheme::Local(precoding, power) => {
                let (slot, local) = match precoding {
                    LocalPrecoding::Lpzf => (&mut cache.lpzf, LocalScheme::Lpzf),
                    LocalPrecoding::Lzf => (&mut cache.lzf, LocalScheme::Lzf),
                };
                if slot.is_none() {
                    *slot = Some(local_precoders(est, graph, &ctx.lsfc, local, num.eps_rank)?);
                }
                let precoders = slot.as_ref().expect("filled above");
                counters.mrt_blocks = precoders.count_role(BlockRole::Mrt);
                counters.outage_blocks = precoders.count_role(BlockRole::Outage);
                let active = precoders.active_user_sets(graph.num_rrh());
                let budget = config.rrh_power_budget();
                let powers = match power {
                    LocalPower::Epa => epa_local(&active, graph.num_ue(), budget),
                    LocalPower::Ppa => ppa_local(&active, &ctx.lsfc, budget),
                };
                let dl: Vec<f64> = (0..graph.num_ue())
                    .map(|k| {
                        if served[k] {
                            dl_sinr_distributed(ch, precoders, &powers, snr, k)
                        } else {
                            0.0
                        }
                    })
                    .collect();
                let nominal = powers.total();
                let actual = total_transmit_power_distributed(precoders, &powers);
                counters.max_power_identity_error = if nominal > 0.0 {
                    rel_err(actual, nominal)
                } else {
                    actual
                };
                SchemeDraw {
                    scheme,
                    ul_sinr: None,
                    dl_sinr: dl,
                    nominal_power: nominal,
                    transmit_power: actual,
                    counters,
                    power_debug: None,
                }
            }
        };
        out.push(draw);
    }
    Ok(out)
}

/// Ergodic per-UE rates of one scheme on one layout.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateReport {
    pub scheme: String,
    pub layout: usize,
    pub n_draws: usize,
    pub unit: RateUnit,
    pub prelog: f64,
    pub served: Vec<bool>,
    pub ul_rate: Option<Vec<f64>>,
    pub ul_stderr: Option<Vec<f64>>,
    pub dl_rate: Vec<f64>,
    pub dl_stderr: Vec<f64>,
    pub counters: Counters,
    /// Mean over draws of the nominal total DL power.
    pub mean_dl_power: f64,
}

impl RateReport {
    pub fn num_ue(&self) -> usize {
        self.served.len()
    }

    pub fn ul_se(&self) -> Option<Vec<f64>> {
        self.ul_rate
            .as_ref()
            .map(|r| r.iter().map(|x| x * self.prelog).collect())
    }

    pub fn dl_se(&self) -> Vec<f64> {
        self.dl_rate.iter().map(|x| x * self.prelog).collect()
    }

    pub fn sum_ul_se(&self) -> Option<f64> {
        self.ul_se().map(|v| v.iter().sum())
    }

    pub fn sum_dl_se(&self) -> f64 {
        self.dl_se().iter().sum()
    }
}

#[derive(Clone)]
struct Moments {
    sum: Vec<f64>,
    sum_sq: Vec<f64>,
}

impl Moments {
    fn new(k: usize) -> Self {
        Self {
            sum: vec![0.0; k],
            sum_sq: vec![0.0; k],
        }
    }

    fn push(&mut self, values: impl Iterator<Item = f64>) {
        for (i, x) in values.enumerate() {
            self.sum[i] += x;
            self.sum_sq[i] += x * x;
        }
    }

    fn finish(&self, n: usize) -> (Vec<f64>, Vec<f64>) {
        let nf = n as f64;
        let mean: Vec<f64> = self.sum.iter().map(|s| s / nf).collect();
        let stderr = self
            .sum_sq
            .iter()
            .zip(&mean)
            .map(|(sq, m)| {
                if n < 2 {
                    0.0
                } else {
                    let var = ((sq - nf * m * m) / (nf - 1.0)).max(0.0);
                    (var / nf).sqrt()
                }
            })
            .collect();
        (mean, stderr)
    }
}

/// Monte Carlo ergodic rates of `schemes` on one layout. Draws run in
/// parallel; the reduction runs in draw order, so the result does not depend
/// on the thread count.
pub fn ergodic_rates(config: &SimConfig, ctx: &LayoutContext, schemes: &[Scheme]) -> Result<Vec<RateReport>> {
    let n = config.scenario.n_fading;
    let draws: Vec<Vec<SchemeDraw>> = (0..n)
        .into_par_iter()
        .map(|d| {
            let inputs = draw_inputs(config, ctx, d);
            evaluate_schemes(config, ctx, &inputs, schemes, false)
        })
        .collect::<Result<_>>()?;
    Ok(reduce_draws(config, ctx, schemes, &draws))
}

/// Folds per-draw SINRs into per-UE log-rate means and standard errors.
pub fn reduce_draws(
    config: &SimConfig,
    ctx: &LayoutContext,
    schemes: &[Scheme],
    draws: &[Vec<SchemeDraw>],
) -> Vec<RateReport> {
    let k = ctx.graph.num_ue();
    let unit = config.numerics.rate_unit;
    let served: Vec<bool> = (0..k).map(|u| ctx.graph.is_served(u)).collect();
    schemes
        .iter()
        .enumerate()
        .map(|(s, scheme)| {
            let mut ul = Moments::new(k);
            let mut dl = Moments::new(k);
            let mut counters = Counters::default();
            let mut power = 0.0;
            for draw in draws {
                let r = &draw[s];
                if let Some(u) = &r.ul_sinr {
                    ul.push(u.iter().map(|&x| unit.log1p(x)));
                }
                dl.push(r.dl_sinr.iter().map(|&x| unit.log1p(x)));
                counters.merge(&r.counters);
                power += r.nominal_power;
            }
            let n = draws.len();
            let (dl_rate, dl_stderr) = dl.finish(n);
            let (ul_rate, ul_stderr) = if scheme.has_uplink() {
                let (m, e) = ul.finish(n);
                (Some(m), Some(e))
            } else {
                (None, None)
            };
            RateReport {
                scheme: scheme.name().to_string(),
                layout: ctx.index,
                n_draws: n,
                unit,
                prelog: config.prelog(),
                served: served.clone(),
                ul_rate,
                ul_stderr,
                dl_rate,
                dl_stderr,
                counters,
                mean_dl_power: if n > 0 { power / n as f64 } else { 0.0 },
            }
        })
        .collect()
}

/// Reports for every layout of `config` (layout-major, scheme order as in
/// `schemes`).
pub fn simulate(config: &SimConfig, schemes: &[Scheme]) -> Result<Vec<RateReport>> {
    config.validate()?;
    let per_layout: Vec<Vec<RateReport>> = (0..config.scenario.n_layouts)
        .into_par_iter()
        .map(|i| {
            let ctx = LayoutContext::generate(config, i);
            let unserved = ctx.graph.unserved();
            if !unserved.is_empty() {
                log::warn!("layout {i}: {} UEs without any serving RRH", unserved.len());
            }
            ergodic_rates(config, &ctx, schemes)
        })
        .collect::<Result<_>>()?;
    Ok(per_layout.into_iter().flatten().collect())
}

/// Empirical CDF over a sorted sample.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmpiricalCdf {
    pub values: Vec<f64>,
}

impl EmpiricalCdf {
    pub fn new(mut values: Vec<f64>) -> Self {
        values.sort_by(f64::total_cmp);
        Self { values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `P[X <= x]`.
    pub fn eval(&self, x: f64) -> f64 {
        if self.values.is_empty() {
            return 0.0;
        }
        let n = self.values.partition_point(|&v| v <= x);
        n as f64 / self.values.len() as f64
    }

    /// Smallest sample value `v` with `P[X <= v] >= p`.
    pub fn quantile(&self, p: f64) -> f64 {
        if self.values.is_empty() {
            return f64::NAN;
        }
        let n = self.values.len();
        let rank = ((p.clamp(0.0, 1.0) * n as f64).ceil() as usize).clamp(1, n);
        self.values[rank - 1]
    }

    /// Distinct sample values with the CDF evaluated at each.
    pub fn steps(&self) -> Vec<(f64, f64)> {
        let mut out: Vec<(f64, f64)> = Vec::new();
        let n = self.values.len() as f64;
        for (i, &v) in self.values.iter().enumerate() {
            let p = (i + 1) as f64 / n;
            match out.last_mut() {
                Some(last) if last.0 == v => last.1 = p,
                _ => out.push((v, p)),
            }
        }
        out
    }
}

/// Pooled and per-layout CDFs of per-UE values.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CdfTable {
    pub pooled: EmpiricalCdf,
    pub per_layout: Vec<EmpiricalCdf>,
}

pub fn aggregate_cdf(per_layout: &[Vec<f64>]) -> CdfTable {
    CdfTable {
        pooled: EmpiricalCdf::new(per_layout.iter().flatten().copied().collect()),
        per_layout: per_layout.iter().map(|v| EmpiricalCdf::new(v.clone())).collect(),
    }
}

const CSV_HEADER: [&str; 10] = [
    "scheme",
    "layout",
    "ue",
    "served",
    "ul_rate",
    "ul_stderr",
    "dl_rate",
    "dl_stderr",
    "ul_se",
    "dl_se",
];

/// One row per UE per scheme and layout. Missing UL values are empty.
pub fn write_rates_csv<W: Write>(writer: W, reports: &[RateReport]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(CSV_HEADER)?;
    let fmt = |x: f64| format!("{x:.12e}");
    for r in reports {
        let ul_se = r.ul_se();
        let dl_se = r.dl_se();
        for k in 0..r.num_ue() {
            let opt = |v: &Option<Vec<f64>>| v.as_ref().map(|v| fmt(v[k])).unwrap_or_default();
            w.write_record([
                r.scheme.clone(),
                r.layout.to_string(),
                k.to_string(),
                r.served[k].to_string(),
                opt(&r.ul_rate),
                opt(&r.ul_stderr),
                fmt(r.dl_rate[k]),
                fmt(r.dl_stderr[k]),
                opt(&ul_se),
                fmt(dl_se[k]),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// A CSV row read back for comparisons.
#[derive(Debug, Clone, PartialEq)]
pub struct RateRow {
    pub scheme: String,
    pub layout: usize,
    pub ue: usize,
    pub served: bool,
    pub ul_se: Option<f64>,
    pub dl_se: f64,
}

pub fn read_rates_csv(path: &Path) -> Result<Vec<RateRow>> {
    let bad = |reason: String| Error::ResultFormat {
        path: path.display().to_string(),
        reason,
    };
    let mut r = csv::Reader::from_path(path)?;
    let headers = r.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != CSV_HEADER {
        return Err(bad("unexpected header".into()));
    }
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let num = |i: usize| -> Result<f64> {
            rec[i]
                .parse::<f64>()
                .map_err(|e| bad(format!("column {}: {e}", CSV_HEADER[i])))
        };
        let idx = |i: usize| -> Result<usize> {
            rec[i]
                .parse::<usize>()
                .map_err(|e| bad(format!("column {}: {e}", CSV_HEADER[i])))
        };
        rows.push(RateRow {
            scheme: rec[0].to_string(),
            layout: idx(1)?,
            ue: idx(2)?,
            served: rec[3] == *"true",
            ul_se: if rec[8].is_empty() { None } else { Some(num(8)?) },
            dl_se: num(9)?,
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Quantiles {
    pub p05: f64,
    pub p50: f64,
    pub p95: f64,
}

impl Quantiles {
    fn of(cdf: &EmpiricalCdf) -> Self {
        Self {
            p05: cdf.quantile(0.05),
            p50: cdf.quantile(0.50),
            p95: cdf.quantile(0.95),
        }
    }
}

/// Layout-averaged sum SE and per-UE SE quantiles of one scheme.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SchemeSummary {
    pub scheme: String,
    pub layouts: usize,
    pub mean_sum_ul_se: Option<f64>,
    pub mean_sum_dl_se: f64,
    pub ul_se_quantiles: Option<Quantiles>,
    pub dl_se_quantiles: Quantiles,
    pub unserved_ue_layouts: usize,
    pub counters: Counters,
}

/// Groups layout reports by scheme in first-seen order.
pub fn summarize(reports: &[RateReport]) -> Vec<SchemeSummary> {
    let mut names: Vec<&str> = Vec::new();
    for r in reports {
        if !names.contains(&r.scheme.as_str()) {
            names.push(&r.scheme);
        }
    }
    names
        .into_iter()
        .map(|name| {
            let rs: Vec<&RateReport> = reports.iter().filter(|r| r.scheme == name).collect();
            let n = rs.len() as f64;
            let mut counters = Counters::default();
            for r in &rs {
                counters.merge(&r.counters);
            }
            let has_ul = rs.iter().all(|r| r.ul_rate.is_some());
            let dl = aggregate_cdf(&rs.iter().map(|r| r.dl_se()).collect::<Vec<_>>());
            let ul = has_ul.then(|| aggregate_cdf(&rs.iter().map(|r| r.ul_se().expect("checked")).collect::<Vec<_>>()));
            SchemeSummary {
                scheme: name.to_string(),
                layouts: rs.len(),
                mean_sum_ul_se: has_ul.then(|| rs.iter().map(|r| r.sum_ul_se().expect("checked")).sum::<f64>() / n),
                mean_sum_dl_se: rs.iter().map(|r| r.sum_dl_se()).sum::<f64>() / n,
                ul_se_quantiles: ul.as_ref().map(|c| Quantiles::of(&c.pooled)),
                dl_se_quantiles: Quantiles::of(&dl.pooled),
                unserved_ue_layouts: rs.iter().map(|r| r.served.iter().filter(|&&s| !s).count()).sum(),
                counters,
            }
        })
        .collect()
}
