//! Parameter sweeps over (Δq⊥, Δk_ph) and their CSV/JSON forms.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use elphot::measures::{measure_all, MeasureResult, Regime, RegimeThresholds};
use elphot::model::{BeamParams, PhaseModel, SpectrumModel};
use elphot::quadrature::QuadratureSpec;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{CliError, Result};

pub const CSV_HEADER: [&str; 10] = [
    "dq_perp_um_inv",
    "dk_ph_um_inv",
    "purity_sc",
    "purity_z",
    "var_rel_pos_um2",
    "var_tot_wv_um_inv2",
    "d2",
    "schmidt_number",
    "regime",
    "longitudinal_entangled",
];

/// Label written in the regime column of a failed cell.
pub const FAILED_LABEL: &str = "failed";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub dq_perp: f64,
    pub dk_ph: f64,
    #[serde(flatten)]
    pub outcome: CellOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellOutcome {
    Ok(MeasureResult),
    Failed(String),
}

impl CellOutcome {
    pub fn result(&self) -> Option<&MeasureResult> {
        match self {
            CellOutcome::Ok(r) => Some(r),
            CellOutcome::Failed(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_sha256: String,
    pub version: String,
    pub quadrature_seed: u64,
    pub validate_seed: u64,
}

impl Provenance {
    pub fn of(cfg: &RunConfig) -> Self {
        Provenance {
            config_sha256: cfg.hash(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            quadrature_seed: cfg.quadrature.mc_seed,
            validate_seed: cfg.validate.seed,
        }
    }
}

/// Cells in row-major order: Δk_ph is the slow index, Δq⊥ the fast one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub dq_perp: Vec<f64>,
    pub dk_ph: Vec<f64>,
    pub cells: Vec<Cell>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
}

impl SweepGrid {
    pub fn cell(&self, i_dq: usize, j_dk: usize) -> &Cell {
        &self.cells[j_dk * self.dq_perp.len() + i_dq]
    }

    pub fn failures(&self) -> usize {
        self.cells.iter().filter(|c| c.outcome.result().is_none()).count()
    }

    /// Cells per regime label, failures under [`FAILED_LABEL`].
    pub fn census(&self) -> BTreeMap<String, usize> {
        let mut out = BTreeMap::new();
        for c in &self.cells {
            let label = c.outcome.result().map_or(FAILED_LABEL, |r| r.regime.label());
            *out.entry(label.to_string()).or_insert(0) += 1;
        }
        out
    }
}

/// Everything a cell needs besides its two coordinates.
pub struct SweepSetup {
    pub beam: BeamParams,
    pub spectrum: SpectrumModel,
    pub phase: PhaseModel,
    pub quad: QuadratureSpec,
    pub thresholds: RegimeThresholds,
}

impl SweepSetup {
    pub fn from_config(cfg: &RunConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(SweepSetup {
            beam: cfg.beam(Some(cfg.sweep.dq_perp.min))?,
            spectrum: cfg.spectrum(Some(cfg.sweep.dk_ph.min))?,
            phase: cfg.phase_model()?,
            quad: cfg.quadrature,
            thresholds: cfg.thresholds,
        })
    }

    pub fn evaluate(&self, dq_perp: f64, dk_ph: f64) -> CellOutcome {
        let run = || -> elphot::error::Result<MeasureResult> {
            let beam = self.beam.with_dq_perp(dq_perp)?;
            let spectrum = self.spectrum.with_dk_ph(dk_ph)?;
            measure_all(&beam, &spectrum, &self.phase, &self.quad, &self.thresholds)
        };
        match run() {
            Ok(r) if is_finite(&r) => CellOutcome::Ok(r),
            Ok(r) => CellOutcome::Failed(format!("non-finite measures {r:?}")),
            Err(e) => CellOutcome::Failed(e.to_string()),
        }
    }

    /// Evaluates every cell on the current rayon pool. The order of the
    /// output never depends on scheduling.
    pub fn run(&self, dq_perp: &[f64], dk_ph: &[f64]) -> SweepGrid {
        let n = dq_perp.len();
        let cells = (0..n * dk_ph.len())
            .into_par_iter()
            .map(|idx| {
                let (dq, dk) = (dq_perp[idx % n], dk_ph[idx / n]);
                let outcome = self.evaluate(dq, dk);
                if let CellOutcome::Failed(msg) = &outcome {
                    log::warn!("cell (Δq⊥ = {dq}, Δk_ph = {dk}) failed: {msg}");
                }
                Cell { dq_perp: dq, dk_ph: dk, outcome }
            })
            .collect();
        SweepGrid { dq_perp: dq_perp.to_vec(), dk_ph: dk_ph.to_vec(), cells, provenance: None }
    }
}

fn is_finite(r: &MeasureResult) -> bool {
    [r.purity_sc, r.purity_z, r.var_rel_pos, r.var_tot_wavevector, r.d2, r.schmidt_number].iter().all(|v| v.is_finite())
}

pub fn run_sweep(cfg: &RunConfig) -> Result<SweepGrid> {
    let setup = SweepSetup::from_config(cfg)?;
    let mut grid = setup.run(&cfg.sweep.dq_perp.values(), &cfg.sweep.dk_ph.values());
    grid.provenance = Some(Provenance::of(cfg));
    Ok(grid)
}

/// 17 significant digits, enough to round-trip any f64.
fn num(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_csv<W: Write>(grid: &SweepGrid, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for c in &grid.cells {
        let mut row = vec![num(c.dq_perp), num(c.dk_ph)];
        match &c.outcome {
            CellOutcome::Ok(r) => {
                row.extend(
                    [r.purity_sc, r.purity_z, r.var_rel_pos, r.var_tot_wavevector, r.d2, r.schmidt_number].map(num),
                );
                row.push(r.regime.label().to_string());
                row.push(r.longitudinal_entangled.to_string());
            }
            CellOutcome::Failed(_) => {
                row.extend(std::iter::repeat_n("NaN".to_string(), 6));
                row.push(FAILED_LABEL.to_string());
                row.push("false".to_string());
            }
        }
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| CliError::Failed(format!("writing csv: {e}")))?;
    Ok(())
}

pub fn to_csv_string(grid: &SweepGrid) -> Result<String> {
    let mut buf = Vec::new();
    write_csv(grid, &mut buf)?;
    Ok(String::from_utf8(buf).expect("csv output is ascii"))
}

fn parse_regime(s: &str) -> Option<Regime> {
    match s {
        "A" => Some(Regime::A),
        "B" => Some(Regime::B),
        "C" => Some(Regime::C),
        "anomaly" => Some(Regime::Anomaly),
        _ => None,
    }
}

/// Reads a sweep CSV back. The axes are the distinct coordinates in order of
/// first appearance; the grid must be complete and row-major.
pub fn read_csv<R: Read>(input: R) -> Result<SweepGrid> {
    let bad = |msg: String| CliError::Failed(format!("sweep csv: {msg}"));
    let mut r = csv::Reader::from_reader(input);
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != CSV_HEADER {
        return Err(bad(format!("unexpected header {header:?}")));
    }
    let mut cells = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let f = |i: usize| -> Result<f64> {
            rec[i].parse::<f64>().map_err(|e| bad(format!("row {}: column {}: {e}", line + 1, CSV_HEADER[i])))
        };
        let (dq, dk) = (f(0)?, f(1)?);
        let outcome = if &rec[8] == FAILED_LABEL {
            CellOutcome::Failed("failed in the original sweep".into())
        } else {
            let regime = parse_regime(&rec[8]).ok_or_else(|| bad(format!("row {}: regime {:?}", line + 1, &rec[8])))?;
            let flag = rec[9].parse::<bool>().map_err(|e| bad(format!("row {}: {e}", line + 1)))?;
            CellOutcome::Ok(MeasureResult {
                purity_sc: f(2)?,
                purity_z: f(3)?,
                var_rel_pos: f(4)?,
                var_tot_wavevector: f(5)?,
                d2: f(6)?,
                schmidt_number: f(7)?,
                regime,
                longitudinal_entangled: flag,
            })
        };
        cells.push(Cell { dq_perp: dq, dk_ph: dk, outcome });
    }
    let mut dq_perp: Vec<f64> = Vec::new();
    let mut dk_ph: Vec<f64> = Vec::new();
    for c in &cells {
        if !dq_perp.contains(&c.dq_perp) {
            dq_perp.push(c.dq_perp);
        }
        if !dk_ph.contains(&c.dk_ph) {
            dk_ph.push(c.dk_ph);
        }
    }
    if cells.is_empty() || dq_perp.len() * dk_ph.len() != cells.len() {
        return Err(bad(format!("{} cells do not fill a {}×{} grid", cells.len(), dq_perp.len(), dk_ph.len())));
    }
    let grid = SweepGrid { dq_perp, dk_ph, cells, provenance: None };
    for (idx, c) in grid.cells.iter().enumerate() {
        let n = grid.dq_perp.len();
        if c.dq_perp != grid.dq_perp[idx % n] || c.dk_ph != grid.dk_ph[idx / n] {
            return Err(bad(format!("row {} is out of row-major order", idx + 1)));
        }
    }
    Ok(grid)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fake(dq: &[f64], dk: &[f64]) -> SweepGrid {
        let th = RegimeThresholds::default();
        let mut cells = Vec::new();
        for &k in dk {
            for &q in dq {
                let r = MeasureResult::new(1.0 / (1.0 + q / k), 0.99, 0.1 / (k * k), q * q, &th).unwrap();
                cells.push(Cell { dq_perp: q, dk_ph: k, outcome: CellOutcome::Ok(r) });
            }
        }
        SweepGrid { dq_perp: dq.to_vec(), dk_ph: dk.to_vec(), cells, provenance: None }
    }

    #[test]
    fn header_is_exact() {
        let s = to_csv_string(&fake(&[1.0], &[1.0])).unwrap();
        assert!(s.starts_with(
            "dq_perp_um_inv,dk_ph_um_inv,purity_sc,purity_z,var_rel_pos_um2,var_tot_wv_um_inv2,d2,schmidt_number,regime,longitudinal_entangled\n"
        ));
    }

    #[test]
    fn failed_cells_survive_the_round_trip() {
        let mut g = fake(&[1.0, 2.0], &[0.5]);
        g.cells[1].outcome = CellOutcome::Failed("boom".into());
        let back = read_csv(to_csv_string(&g).unwrap().as_bytes()).unwrap();
        assert_eq!(back.failures(), 1);
        assert_eq!(back.cells[0], g.cells[0]);
        assert_eq!(back.census()[FAILED_LABEL], 1);
    }

    #[test]
    fn incomplete_grid_is_rejected() {
        let g = fake(&[1.0, 2.0], &[0.5, 3.0]);
        let s = to_csv_string(&g).unwrap();
        let truncated: String = s.lines().take(4).map(|l| format!("{l}\n")).collect();
        assert!(read_csv(truncated.as_bytes()).is_err());
    }

    #[test]
    fn wrong_header_is_rejected() {
        assert!(read_csv("a,b\n1,2\n".as_bytes()).is_err());
    }
}
