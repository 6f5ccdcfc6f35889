//! Command-line front end: configuration, sweeps, distributions, the oracle
//! suite and SVG maps.

pub mod config;
pub mod contour;
pub mod dist;
pub mod error;
pub mod render;
pub mod sweep;
pub mod validate;

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use elphot::measures::measure_all;
use serde::Serialize;

use config::RunConfig;
use error::{CliError, Result};
use render::{render_heatmap, render_regime_map, Field, Palette};
use sweep::{run_sweep, Provenance, SweepGrid};

#[derive(Debug, Parser)]
#[command(name = "elphot", version, about = "Electron-photon entanglement in coherent cathodoluminescence")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// TOML run configuration; the built-in defaults when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory, overriding `[output] dir`.
    #[arg(long, env = "ELPHOT_OUT_DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// All measures at the configured point.
    Measure(Common),
    /// Measures over the (Δq⊥, Δk_ph) grid, as CSV and JSON.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, env = "ELPHOT_THREADS")]
        threads: Option<usize>,
    },
    /// Joint position and wavevector grids and the photon k_x marginal.
    Dist(Common),
    /// Categorical regime map, from a fresh sweep or an existing CSV.
    RegimeMap {
        #[command(flatten)]
        common: Common,
        #[arg(long, env = "ELPHOT_THREADS")]
        threads: Option<usize>,
        /// Sweep CSV to map instead of sweeping.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Runs the oracle suite at the configured point.
    Validate {
        #[command(flatten)]
        common: Common,
        /// Monte Carlo seed, overriding `[validate] seed`.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Heatmap of one column of a sweep CSV.
    Render {
        #[command(flatten)]
        common: Common,
        /// Sweep CSV.
        #[arg(long)]
        input: PathBuf,
        /// purity_sc, purity_z, var_rel_pos_um2, var_tot_wv_um_inv2, d2 or schmidt_number.
        #[arg(long)]
        field: String,
    },
}

impl Common {
    fn load(&self) -> Result<(RunConfig, PathBuf)> {
        let cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        let out = self.out.clone().unwrap_or_else(|| cfg.output.dir.clone());
        Ok((cfg, out))
    }
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let path = dir.join(name);
    let f = File::create(&path).map_err(|e| CliError::io(&path, e))?;
    Ok(BufWriter::new(f))
}

fn write_text(dir: &Path, name: &str, text: &str) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let path = dir.join(name);
    fs::write(&path, text).map_err(|e| CliError::io(&path, e))
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(dir, name, &text)
}

fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        Some(0) => Err(CliError::Config("--threads must be at least 1".into())),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| CliError::Failed(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
        None => Ok(f()),
    }
}

/// Writes `sweep.csv` and its JSON mirror; fails if any cell failed.
fn emit_sweep(grid: &SweepGrid, out: &Path) -> Result<()> {
    sweep::write_csv(grid, create(out, "sweep.csv")?)?;
    write_json(out, "sweep.json", grid)?;
    for (label, n) in grid.census() {
        println!("{label}: {n}");
    }
    match grid.failures() {
        0 => Ok(()),
        n => Err(CliError::Failed(format!("{n} of {} cells failed", grid.cells.len()))),
    }
}

#[derive(Serialize)]
struct MeasureDoc {
    provenance: Provenance,
    dq_perp_um_inv: f64,
    dk_ph_um_inv: f64,
    result: elphot::measures::MeasureResult,
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Measure(common) => {
            let (cfg, out) = common.load()?;
            let beam = cfg.beam(None)?;
            let spectrum = cfg.spectrum(None)?;
            let r = measure_all(&beam, &spectrum, &cfg.phase_model()?, &cfg.quadrature, &cfg.thresholds)?;
            println!("purity_sc          {:.10}", r.purity_sc);
            println!("purity_z           {:.10}", r.purity_z);
            println!("var_rel_pos_um2    {:.10e}", r.var_rel_pos);
            println!("var_tot_wv_um_inv2 {:.10e}", r.var_tot_wavevector);
            println!("d2                 {:.10e}", r.d2);
            println!("schmidt_number     {:.10}", r.schmidt_number);
            println!("regime             {}", r.regime);
            println!("longitudinal       {}", r.longitudinal_entangled);
            let doc = MeasureDoc {
                provenance: Provenance::of(&cfg),
                dq_perp_um_inv: beam.dq_perp,
                dk_ph_um_inv: spectrum.dk_ph,
                result: r,
            };
            write_json(&out, "measure.json", &doc)
        }
        Command::Sweep { common, threads } => {
            let (cfg, out) = common.load()?;
            let grid = with_threads(threads, || run_sweep(&cfg))??;
            emit_sweep(&grid, &out)
        }
        Command::Dist(common) => {
            let (cfg, out) = common.load()?;
            let d = dist::compute(&cfg)?;
            dist::write_grid(&d.position, create(&out, "position.csv")?)?;
            dist::write_grid(&d.momentum, create(&out, "momentum.csv")?)?;
            dist::write_marginal(&d.kx, &d.marginal, create(&out, "marginal.csv")?)?;
            write_json(&out, "dist.json", &d.summary)?;
            println!("marginal peak {:.6} μm⁻¹", d.summary.marginal_peak_um_inv);
            for r in &d.summary.checks {
                println!("{}", validate::report_line(r));
            }
            if d.summary.checks.iter().all(|r| r.pass) {
                Ok(())
            } else {
                Err(CliError::Failed("grid variance check failed".into()))
            }
        }
        Command::RegimeMap { common, threads, input } => {
            let (cfg, out) = common.load()?;
            let grid = match input {
                Some(path) => {
                    let f = File::open(&path).map_err(|e| CliError::io(&path, e))?;
                    sweep::read_csv(f)?
                }
                None => {
                    let grid = with_threads(threads, || run_sweep(&cfg))??;
                    emit_sweep(&grid, &out)?;
                    grid
                }
            };
            let svg = render_regime_map(&grid, &cfg.thresholds)?;
            write_text(&out, "regime_map.svg", &svg)?;
            write_json(&out, "regime_census.json", &grid.census())
        }
        Command::Validate { common, seed } => {
            let (cfg, out) = common.load()?;
            let report = validate::run_validation(&cfg, seed)?;
            for r in &report.checks {
                println!("{}", validate::report_line(r));
            }
            write_json(&out, "validation.json", &report)?;
            match report.failures().count() {
                0 => Ok(()),
                n => Err(CliError::Failed(format!("{n} oracle checks failed"))),
            }
        }
        Command::Render { common, input, field } => {
            let field: Field = field.parse()?;
            let (cfg, out) = common.load()?;
            let f = File::open(&input).map_err(|e| CliError::io(&input, e))?;
            let grid = sweep::read_csv(f)?;
            let svg = render_heatmap(&grid, field, &Palette::default(), &cfg.thresholds)?;
            write_text(&out, &format!("{}.svg", field.name()), &svg)
        }
    }
}
