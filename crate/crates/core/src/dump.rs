//! Debug dumps of a single fading draw: channels, estimates and beamformers
//! as `.npy` arrays of shape `(K, L, M)` (complex128), power allocation
//! internals as JSON.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;

use npyz::WriterBuilder;

use crate::beamforming::ClusterVector;
use crate::channel::{ChannelSet, EstimateSet};
use crate::config::{Scheme, SimConfig};
use crate::error::Result;
use crate::eval::{draw_inputs, evaluate_schemes, LayoutContext, PowerDebug};
use crate::linalg::C64;

/// Writes a C-ordered complex128 array.
pub fn write_complex_npy(path: &Path, shape: &[u64], data: impl IntoIterator<Item = C64>) -> Result<()> {
    let file = BufWriter::new(File::create(path)?);
    let mut w = npyz::WriteOptions::<C64>::new()
        .default_dtype()
        .shape(shape)
        .writer(file)
        .begin_nd()?;
    w.extend(data)?;
    w.finish()?;
    Ok(())
}

fn kl_shape(num_ue: usize, num_rrh: usize, m: usize) -> [u64; 3] {
    [num_ue as u64, num_rrh as u64, m as u64]
}

pub fn dump_channels(path: &Path, channels: &ChannelSet) -> Result<()> {
    let (k, l, m) = (channels.num_ue(), channels.num_rrh(), channels.antennas());
    let data = (0..k).flat_map(|u| (0..l).flat_map(move |r| channels.block(r, u).iter().copied().collect::<Vec<_>>()));
    write_complex_npy(path, &kl_shape(k, l, m), data)
}

/// Non-edge blocks are written as zeros.
pub fn dump_estimates(path: &Path, estimates: &EstimateSet) -> Result<()> {
    let (k, l, m) = (estimates.num_ue(), estimates.num_rrh(), estimates.antennas());
    let data = (0..k)
        .flat_map(|u| (0..l).flat_map(move |r| estimates.block_or_zero(r, u).iter().copied().collect::<Vec<_>>()));
    write_complex_npy(path, &kl_shape(k, l, m), data)
}

/// Beamformers in dense per-RRH form; unserved UEs are all-zero.
pub fn dump_beams(path: &Path, beams: &[Option<ClusterVector>], num_rrh: usize, antennas: usize) -> Result<()> {
    let data = beams.iter().flat_map(|b| match b {
        Some(v) => v.dense(num_rrh, antennas).iter().copied().collect::<Vec<_>>(),
        None => vec![C64::new(0.0, 0.0); num_rrh * antennas],
    });
    write_complex_npy(path, &kl_shape(beams.len(), num_rrh, antennas), data)
}

pub fn dump_power_debug(path: &Path, debug: &PowerDebug) -> Result<()> {
    let doc = serde_json::json!({
        "theta": debug.theta.as_ref().map(|t| {
            (0..t.num_ue()).map(|r| (0..t.num_ue()).map(|c| t.theta[(r, c)]).collect::<Vec<_>>()).collect::<Vec<_>>()
        }),
        "gamma": debug.gamma,
        "q": debug.q,
        "feasible": debug.feasible,
    });
    fs::write(path, serde_json::to_string_pretty(&doc)?)?;
    Ok(())
}

/// Re-runs draw `draw` of `ctx` and writes every intermediate quantity
/// under `dir`.
pub fn dump_draw(dir: &Path, config: &SimConfig, ctx: &LayoutContext, draw: usize, schemes: &[Scheme]) -> Result<()> {
    fs::create_dir_all(dir)?;
    let inputs = draw_inputs(config, ctx, draw);
    dump_channels(&dir.join("channels.npy"), &inputs.channels)?;
    dump_estimates(&dir.join("estimates.npy"), &inputs.estimates)?;
    fs::write(dir.join("graph.json"), ctx.graph.to_json()?)?;
    let results = evaluate_schemes(config, ctx, &inputs, schemes, true)?;
    let (l, m) = (ctx.graph.num_rrh(), inputs.estimates.antennas());
    for (scheme, r) in schemes.iter().zip(&results) {
        let beams = scheme_beams(config, ctx, &inputs.estimates, *scheme)?;
        dump_beams(&dir.join(format!("beams_{}.npy", scheme.name())), &beams, l, m)?;
        if let Some(debug) = &r.power_debug {
            dump_power_debug(&dir.join(format!("power_{}.json", scheme.name())), debug)?;
        }
    }
    Ok(())
}

fn scheme_beams(
    config: &SimConfig,
    ctx: &LayoutContext,
    estimates: &EstimateSet,
    scheme: Scheme,
) -> Result<Vec<Option<ClusterVector>>> {
    use crate::beamforming::{gzf_combiners, lmmse_combiners, local_precoders, LocalScheme};
    use crate::config::{Combining, LocalPrecoding};
    let n = &config.numerics;
    Ok(match scheme {
        Scheme::Central(Combining::Gzf, _) => gzf_combiners(estimates, &ctx.graph, n.eps_rank, n.eps_zf)?.vectors,
        Scheme::Central(Combining::Lmmse, _) => lmmse_combiners(estimates, &ctx.graph, &ctx.lsfc)?.vectors,
        Scheme::Local(p, _) => {
            let s = match p {
                LocalPrecoding::Lpzf => LocalScheme::Lpzf,
                LocalPrecoding::Lzf => LocalScheme::Lzf,
            };
            local_precoders(estimates, &ctx.graph, &ctx.lsfc, s, n.eps_rank)?.columns
        }
    })
}
