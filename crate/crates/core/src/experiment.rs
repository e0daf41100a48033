//! Experiment plans: a base configuration plus an optional `[sweep]` table,
//! expanded into independent cells that each write a CSV and a JSON summary
//! into `cell_<hash>/`.
//!
//! Sweep keys are dotted paths into the configuration. A key may join
//! several paths with `+` to vary them together:
//!
//! ```toml
//! [sweep]
//! "scenario.num_ue" = [20, 40]
//! "scenario.num_rrh+scenario.antennas_per_rrh" = [[2, 16], [4, 8], [8, 4]]
//! ```
//!
//! Keys form a cartesian product (in key order); zipped paths do not.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{Scheme, SimConfig};
use crate::dump::dump_draw;
use crate::error::{Error, Result};
use crate::eval::{read_rates_csv, simulate, summarize, write_rates_csv, LayoutContext, SchemeSummary};

/// Largest `K` for which the debug dump is written.
pub const DEBUG_MAX_UES: usize = 64;

/// Hex SHA-256 of the canonical TOML serialization.
pub fn config_hash(config: &SimConfig) -> String {
    hex::encode(Sha256::digest(config.to_toml_string().as_bytes()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub id: String,
    pub config: SimConfig,
    pub schemes: Vec<Scheme>,
    /// Sweep values that distinguish this cell, by dotted path.
    pub overrides: BTreeMap<String, toml::Value>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentPlan {
    pub cells: Vec<Cell>,
    pub out_dir: PathBuf,
    /// Worker threads; 0 lets the runtime decide.
    pub jobs: usize,
}

/// Command-line adjustments applied to every cell.
#[derive(Debug, Clone, Default)]
pub struct PlanOverrides {
    pub seed: Option<u64>,
    /// Keep only these schemes (intersected with each cell's selection).
    pub schemes: Option<Vec<Scheme>>,
}

fn set_path(table: &mut toml::Table, path: &str, value: toml::Value) -> Result<()> {
    let parts: Vec<&str> = path.split('.').collect();
    if parts.len() != 2 || parts.iter().any(|p| p.is_empty()) {
        return Err(Error::invalid(&format!("sweep.{path}"), "expected `section.key`"));
    }
    let section = table
        .entry(parts[0])
        .or_insert_with(|| toml::Value::Table(toml::Table::new()));
    match section {
        toml::Value::Table(t) => {
            t.insert(parts[1].to_string(), value);
            Ok(())
        }
        _ => Err(Error::invalid(parts[0], "expected a table")),
    }
}

type Assignment = Vec<(String, toml::Value)>;

/// Per sweep key: the list of `(path, value)` assignments of each option.
fn sweep_axes(sweep: &toml::Table) -> Result<Vec<Vec<Assignment>>> {
    let mut axes = Vec::new();
    for (key, values) in sweep {
        let key_name = format!("sweep.{key}");
        let toml::Value::Array(values) = values else {
            return Err(Error::invalid(&key_name, "expected an array of values"));
        };
        let paths: Vec<&str> = key.split('+').map(str::trim).collect();
        let mut options = Vec::with_capacity(values.len());
        for v in values {
            if paths.len() == 1 {
                options.push(vec![(paths[0].to_string(), v.clone())]);
                continue;
            }
            match v {
                toml::Value::Array(items) if items.len() == paths.len() => {
                    options.push(paths.iter().map(|p| p.to_string()).zip(items.iter().cloned()).collect());
                }
                _ => {
                    return Err(Error::invalid(
                        &key_name,
                        format!("expected arrays of {} values", paths.len()),
                    ))
                }
            }
        }
        axes.push(options);
    }
    Ok(axes)
}

fn finish_cell(mut config: SimConfig, overrides: BTreeMap<String, toml::Value>, o: &PlanOverrides) -> Result<Cell> {
    if let Some(seed) = o.seed {
        config.scenario.seed = seed;
    }
    config.validate()?;
    let mut schemes = config.schemes.schemes();
    if let Some(keep) = &o.schemes {
        schemes.retain(|s| keep.contains(s));
    }
    let mut hasher = Sha256::new();
    hasher.update(config.to_toml_string().as_bytes());
    for s in &schemes {
        hasher.update(s.name().as_bytes());
    }
    let id = hex::encode(hasher.finalize())[..16].to_string();
    Ok(Cell {
        id,
        config,
        schemes,
        overrides,
    })
}

impl ExperimentPlan {
    /// Parses a plan file. Configuration sections are the same as for a
    /// single [`SimConfig`]; `[sweep]` is optional.
    pub fn from_toml_str(text: &str, out_dir: impl Into<PathBuf>, overrides: &PlanOverrides) -> Result<Self> {
        let mut table: toml::Table = text.parse()?;
        let sweep = match table.remove("sweep") {
            None => toml::Table::new(),
            Some(toml::Value::Table(t)) => t,
            Some(_) => return Err(Error::invalid("sweep", "expected a table")),
        };
        let axes = sweep_axes(&sweep)?;

        // cartesian product, first key varying slowest
        let mut combos: Vec<Vec<(String, toml::Value)>> = vec![Vec::new()];
        for axis in &axes {
            let mut next = Vec::with_capacity(combos.len() * axis.len());
            for c in &combos {
                for opt in axis {
                    let mut c = c.clone();
                    c.extend(opt.iter().cloned());
                    next.push(c);
                }
            }
            combos = next;
        }

        let mut cells = Vec::with_capacity(combos.len());
        for combo in combos {
            let mut t = table.clone();
            let mut ov = BTreeMap::new();
            for (path, value) in combo {
                set_path(&mut t, &path, value.clone())?;
                ov.insert(path, value);
            }
            let config: SimConfig = toml::Value::Table(t).try_into()?;
            cells.push(finish_cell(config, ov, overrides)?);
        }
        let plan = Self {
            cells,
            out_dir: out_dir.into(),
            jobs: 0,
        };
        plan.check_unique()?;
        Ok(plan)
    }

    pub fn single(config: SimConfig, out_dir: impl Into<PathBuf>, overrides: &PlanOverrides) -> Result<Self> {
        Ok(Self {
            cells: vec![finish_cell(config, BTreeMap::new(), overrides)?],
            out_dir: out_dir.into(),
            jobs: 0,
        })
    }

    fn check_unique(&self) -> Result<()> {
        let mut seen = std::collections::HashSet::new();
        for c in &self.cells {
            if !seen.insert(&c.id) {
                return Err(Error::DuplicateCell(c.id.clone()));
            }
        }
        Ok(())
    }

    pub fn cell_dir(&self, cell: &Cell) -> PathBuf {
        self.out_dir.join(format!("cell_{}", cell.id))
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub dry_run: bool,
    /// Dump draw 0 of layout 0 of every cell (small `K` only).
    pub debug: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ManifestCell {
    pub id: String,
    pub dir: String,
    pub config_hash: String,
    pub seed: u64,
    pub schemes: Vec<String>,
    pub overrides: BTreeMap<String, toml::Value>,
    pub status: String,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Manifest {
    pub generator: String,
    pub version: String,
    pub cells: Vec<ManifestCell>,
}

pub const MANIFEST_FILE: &str = "manifest.json";
pub const RATES_FILE: &str = "rates.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const CONFIG_FILE: &str = "config.toml";

#[derive(Debug, Clone, Serialize)]
struct CellSummary<'a> {
    cell: &'a str,
    config_hash: String,
    seed: u64,
    rate_unit: crate::config::RateUnit,
    n_layouts: usize,
    n_fading: usize,
    schemes: Vec<SchemeSummary>,
}

#[derive(Debug, Clone)]
pub struct CellOutcome {
    pub id: String,
    pub dir: PathBuf,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Default)]
pub struct RunReport {
    pub cells: Vec<CellOutcome>,
}

impl RunReport {
    pub fn failures(&self) -> impl Iterator<Item = &CellOutcome> {
        self.cells.iter().filter(|c| c.error.is_some())
    }

    pub fn ok(&self) -> bool {
        self.failures().next().is_none()
    }
}

fn run_cell(plan: &ExperimentPlan, cell: &Cell, opts: &RunOptions) -> Result<()> {
    let dir = plan.cell_dir(cell);
    fs::create_dir_all(&dir)?;
    fs::write(dir.join(CONFIG_FILE), cell.config.to_toml_string())?;
    let reports = simulate(&cell.config, &cell.schemes)?;
    write_rates_csv(BufWriter::new(File::create(dir.join(RATES_FILE))?), &reports)?;
    let summary = CellSummary {
        cell: &cell.id,
        config_hash: config_hash(&cell.config),
        seed: cell.config.scenario.seed,
        rate_unit: cell.config.numerics.rate_unit,
        n_layouts: cell.config.scenario.n_layouts,
        n_fading: cell.config.scenario.n_fading,
        schemes: summarize(&reports),
    };
    fs::write(dir.join(SUMMARY_FILE), serde_json::to_string_pretty(&summary)?)?;
    if opts.debug {
        if cell.config.scenario.num_ue <= DEBUG_MAX_UES && cell.config.scenario.n_layouts > 0 {
            let ctx = LayoutContext::generate(&cell.config, 0);
            dump_draw(&dir.join("debug"), &cell.config, &ctx, 0, &cell.schemes)?;
        } else {
            log::info!("cell {}: K above {DEBUG_MAX_UES}, skipping debug dump", cell.id);
        }
    }
    Ok(())
}

fn manifest(plan: &ExperimentPlan, statuses: &[Option<String>]) -> Manifest {
    Manifest {
        generator: env!("CARGO_PKG_NAME").to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        cells: plan
            .cells
            .iter()
            .zip(statuses)
            .map(|(c, s)| ManifestCell {
                id: c.id.clone(),
                dir: format!("cell_{}", c.id),
                config_hash: config_hash(&c.config),
                seed: c.config.scenario.seed,
                schemes: c.schemes.iter().map(|s| s.name().to_string()).collect(),
                overrides: c.overrides.clone(),
                status: s.clone().unwrap_or_else(|| "ok".into()),
            })
            .collect(),
    }
}

/// Runs every cell (concurrently up to `plan.jobs`) and writes the manifest.
/// Cell failures are collected, not propagated; I/O failures on the output
/// directory are.
pub fn run_experiment(plan: &ExperimentPlan, opts: &RunOptions) -> Result<RunReport> {
    if plan.cells.is_empty() {
        log::info!("empty plan, nothing to do");
        return Ok(RunReport::default());
    }
    if opts.dry_run {
        for c in &plan.cells {
            log::info!("would run cell {} with {} schemes", c.id, c.schemes.len());
        }
        return Ok(RunReport {
            cells: plan
                .cells
                .iter()
                .map(|c| CellOutcome {
                    id: c.id.clone(),
                    dir: plan.cell_dir(c),
                    error: None,
                })
                .collect(),
        });
    }
    fs::create_dir_all(&plan.out_dir)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(plan.jobs)
        .build()
        .map_err(|e| Error::invalid("jobs", e.to_string()))?;
    let errors: Vec<Option<String>> = pool.install(|| {
        plan.cells
            .par_iter()
            .map(|c| {
                log::info!("running cell {}", c.id);
                run_cell(plan, c, opts).err().map(|e| {
                    log::error!("cell {} failed: {e}", c.id);
                    e.to_string()
                })
            })
            .collect()
    });
    let m = manifest(plan, &errors);
    fs::write(plan.out_dir.join(MANIFEST_FILE), serde_json::to_string_pretty(&m)?)?;
    Ok(RunReport {
        cells: plan
            .cells
            .iter()
            .zip(errors)
            .map(|(c, error)| CellOutcome {
                id: c.id.clone(),
                dir: plan.cell_dir(c),
                error,
            })
            .collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankRow {
    pub rank: usize,
    pub scheme: String,
    pub mean_sum_dl_se: f64,
    pub mean_sum_ul_se: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Ranking {
    pub cell: String,
    pub rows: Vec<RankRow>,
}

fn cell_dirs(path: &Path) -> Result<Vec<PathBuf>> {
    let manifest = path.join(MANIFEST_FILE);
    if manifest.exists() {
        let m: Manifest = serde_json::from_str(&fs::read_to_string(&manifest)?)?;
        return Ok(m
            .cells
            .iter()
            .filter(|c| c.status == "ok")
            .map(|c| path.join(&c.dir))
            .collect());
    }
    Ok(vec![path.to_path_buf()])
}

/// Ranks schemes by layout-averaged DL sum SE within each cell; ties are
/// ordered by scheme name. `paths` are cell directories or output
/// directories holding a manifest.
pub fn compare_schemes(paths: &[PathBuf]) -> Result<Vec<Ranking>> {
    let mut out = Vec::new();
    for p in paths {
        for dir in cell_dirs(p)? {
            let rows = read_rates_csv(&dir.join(RATES_FILE))?;
            // scheme -> layout -> (dl sum, ul sum)
            let mut sums: BTreeMap<&str, BTreeMap<usize, (f64, Option<f64>)>> = BTreeMap::new();
            for r in &rows {
                let e = sums
                    .entry(&r.scheme)
                    .or_default()
                    .entry(r.layout)
                    .or_insert((0.0, Some(0.0)));
                e.0 += r.dl_se;
                e.1 = match (e.1, r.ul_se) {
                    (Some(a), Some(b)) => Some(a + b),
                    _ => None,
                };
            }
            let mut ranked: Vec<RankRow> = sums
                .into_iter()
                .map(|(scheme, layouts)| {
                    let n = layouts.len() as f64;
                    let dl = layouts.values().map(|v| v.0).sum::<f64>() / n;
                    let ul = layouts.values().map(|v| v.1).sum::<Option<f64>>().map(|s| s / n);
                    RankRow {
                        rank: 0,
                        scheme: scheme.to_string(),
                        mean_sum_dl_se: dl,
                        mean_sum_ul_se: ul,
                    }
                })
                .collect();
            ranked.sort_by(|a, b| {
                b.mean_sum_dl_se
                    .total_cmp(&a.mean_sum_dl_se)
                    .then_with(|| a.scheme.cmp(&b.scheme))
            });
            for (i, r) in ranked.iter_mut().enumerate() {
                r.rank = i + 1;
            }
            let cell = dir
                .file_name()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| dir.display().to_string());
            out.push(Ranking { cell, rows: ranked });
        }
    }
    Ok(out)
}

/// Plain-text table of rankings.
pub fn format_rankings(rankings: &[Ranking]) -> String {
    let mut s = String::new();
    for r in rankings {
        s.push_str(&format!("{}\n", r.cell));
        s.push_str(&format!(
            "{:>4}  {:<14} {:>12} {:>12}\n",
            "rank", "scheme", "sum_dl_se", "sum_ul_se"
        ));
        for row in &r.rows {
            let ul = row
                .mean_sum_ul_se
                .map(|x| format!("{x:.4}"))
                .unwrap_or_else(|| "-".into());
            s.push_str(&format!(
                "{:>4}  {:<14} {:>12.4} {:>12}\n",
                row.rank, row.scheme, row.mean_sum_dl_se, ul
            ));
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    const TINY: &str = r#"
[scenario]
num_rrh = 2
antennas_per_rrh = 4
num_ue = 4
pilot_dim = 4
n_layouts = 2
n_fading = 3
"#;

    #[test]
    fn plan_without_sweep_is_one_cell() {
        let p = ExperimentPlan::from_toml_str(TINY, "/tmp/x", &PlanOverrides::default()).unwrap();
        assert_eq!(p.cells.len(), 1);
        assert_eq!(p.cells[0].config.scenario.num_ue, 4);
        assert_eq!(p.cells[0].schemes.len(), 8);
    }

    #[test]
    fn sweep_product_and_zip() {
        let text = format!(
            "{TINY}\n[sweep]\n\"scenario.num_ue\" = [2, 4]\n\"scenario.num_rrh+scenario.antennas_per_rrh\" = [[1, 8], [2, 4], [4, 2]]\n"
        );
        let p = ExperimentPlan::from_toml_str(&text, "/tmp/x", &PlanOverrides::default()).unwrap();
        assert_eq!(p.cells.len(), 6);
        let lm: Vec<usize> = p
            .cells
            .iter()
            .map(|c| c.config.scenario.num_rrh * c.config.scenario.antennas_per_rrh)
            .collect();
        assert!(lm.iter().all(|&x| x == 8));
        let ids: std::collections::HashSet<_> = p.cells.iter().map(|c| &c.id).collect();
        assert_eq!(ids.len(), 6);
    }

    #[test]
    fn empty_sweep_axis_is_empty_plan() {
        let text = format!("{TINY}\n[sweep]\n\"scenario.num_ue\" = []\n");
        let p = ExperimentPlan::from_toml_str(&text, "/tmp/x", &PlanOverrides::default()).unwrap();
        assert!(p.cells.is_empty());
        assert!(run_experiment(&p, &RunOptions::default()).unwrap().ok());
    }

    #[test]
    fn duplicate_cells_are_rejected() {
        let text = format!("{TINY}\n[sweep]\n\"scenario.num_ue\" = [3, 3]\n");
        let e = ExperimentPlan::from_toml_str(&text, "/tmp/x", &PlanOverrides::default()).unwrap_err();
        assert!(matches!(e, Error::DuplicateCell(_)));
    }

    #[test]
    fn invalid_sweep_value_names_key() {
        let text = format!("{TINY}\n[sweep]\n\"scenario.pilot_dim\" = [0]\n");
        let e = ExperimentPlan::from_toml_str(&text, "/tmp/x", &PlanOverrides::default()).unwrap_err();
        assert!(e.to_string().contains("scenario.pilot_dim"), "{e}");
        let text = format!("{TINY}\n[sweep]\n\"scenario.bogus\" = [1]\n");
        let e = ExperimentPlan::from_toml_str(&text, "/tmp/x", &PlanOverrides::default()).unwrap_err();
        assert!(e.to_string().contains("bogus"), "{e}");
    }

    #[test]
    fn overrides_apply_to_every_cell() {
        let o = PlanOverrides {
            seed: Some(99),
            schemes: Some(vec!["lzf-ppa".parse().unwrap()]),
        };
        let text = format!("{TINY}\n[sweep]\n\"scenario.num_ue\" = [2, 4]\n");
        let p = ExperimentPlan::from_toml_str(&text, "/tmp/x", &o).unwrap();
        for c in &p.cells {
            assert_eq!(c.config.scenario.seed, 99);
            assert_eq!(c.schemes.len(), 1);
        }
    }

    #[test]
    fn run_and_compare_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let o = PlanOverrides {
            seed: None,
            schemes: Some(vec!["gzf-epa".parse().unwrap(), "lzf-epa".parse().unwrap()]),
        };
        let mut p = ExperimentPlan::from_toml_str(TINY, dir.path(), &o).unwrap();
        p.jobs = 2;
        let report = run_experiment(&p, &RunOptions::default()).unwrap();
        assert!(report.ok());
        let cell = p.cell_dir(&p.cells[0]);
        let first = fs::read(cell.join(RATES_FILE)).unwrap();
        run_experiment(&p, &RunOptions::default()).unwrap();
        assert_eq!(first, fs::read(cell.join(RATES_FILE)).unwrap());

        let rankings = compare_schemes(&[dir.path().to_path_buf()]).unwrap();
        assert_eq!(rankings.len(), 1);
        let rows = &rankings[0].rows;
        assert_eq!(rows.len(), 2);
        assert!(rows[0].mean_sum_dl_se >= rows[1].mean_sum_dl_se);
        assert_eq!(rows[0].rank, 1);
        // manual recomputation from the CSV
        let csv = read_rates_csv(&cell.join(RATES_FILE)).unwrap();
        let manual: f64 = csv
            .iter()
            .filter(|r| r.scheme == rows[0].scheme)
            .map(|r| r.dl_se)
            .sum::<f64>()
            / 2.0;
        assert!((manual - rows[0].mean_sum_dl_se).abs() < 1e-9);
    }

    #[test]
    fn dry_run_writes_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("out");
        let p = ExperimentPlan::from_toml_str(TINY, &out, &PlanOverrides::default()).unwrap();
        let r = run_experiment(
            &p,
            &RunOptions {
                dry_run: true,
                debug: false,
            },
        )
        .unwrap();
        assert_eq!(r.cells.len(), 1);
        assert!(!out.exists());
    }
}
