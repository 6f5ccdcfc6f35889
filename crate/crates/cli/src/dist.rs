//! Joint distributions and the photon marginal as files.

use std::io::Write;

use elphot::distributions::{joint_momentum_grid, joint_position, kx_axis, marginal_peak, photon_marginal, JointGrid};
use elphot::oracles::{variance_from_grid, OracleReport};
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::Result;
use crate::sweep::Provenance;

pub struct Distributions {
    pub position: JointGrid,
    pub momentum: JointGrid,
    pub kx: Vec<f64>,
    pub marginal: Vec<f64>,
    pub summary: DistSummary,
}

#[derive(Debug, Clone, Serialize)]
pub struct DistSummary {
    pub provenance: Provenance,
    pub dq_perp_um_inv: f64,
    pub dk_ph_um_inv: f64,
    pub position_mass: f64,
    pub momentum_mass: f64,
    /// Located maximum of the k_x marginal, μm⁻¹.
    pub marginal_peak_um_inv: f64,
    /// Grid variances against the closed forms.
    pub checks: Vec<OracleReport>,
}

pub fn compute(cfg: &RunConfig) -> Result<Distributions> {
    cfg.validate()?;
    let beam = cfg.beam(None)?;
    let spectrum = cfg.spectrum(None)?;
    let quad = &cfg.quadrature;
    let position = joint_position(&beam, &spectrum, &cfg.grid, quad)?;
    let momentum = joint_momentum_grid(&beam, &spectrum, &cfg.grid, quad)?;
    let kx = kx_axis(&spectrum, cfg.grid.n, quad);
    let marginal = photon_marginal(&spectrum, &kx, quad)?;
    let checks = vec![
        variance_from_grid(&momentum, &beam, &spectrum, 0.005, quad)?,
        variance_from_grid(&position, &beam, &spectrum, 0.02, quad)?,
    ];
    let summary = DistSummary {
        provenance: Provenance::of(cfg),
        dq_perp_um_inv: beam.dq_perp,
        dk_ph_um_inv: spectrum.dk_ph,
        position_mass: position.mass(),
        momentum_mass: momentum.mass(),
        marginal_peak_um_inv: marginal_peak(&spectrum, quad)?,
        checks,
    };
    Ok(Distributions { position, momentum, kx, marginal, summary })
}

/// Long format: one row per grid node.
pub fn write_grid<W: Write>(grid: &JointGrid, out: W) -> Result<()> {
    let (a, b) = grid.axis_names();
    let mut w = csv::Writer::from_writer(out);
    w.write_record([a, b, "density"])?;
    for (i, &x) in grid.axis1.iter().enumerate() {
        for (j, &y) in grid.axis2.iter().enumerate() {
            w.write_record([format!("{x:.16e}"), format!("{y:.16e}"), format!("{:.16e}", grid.at(i, j))])?;
        }
    }
    w.flush().map_err(|e| crate::error::CliError::Failed(format!("writing csv: {e}")))?;
    Ok(())
}

pub fn write_marginal<W: Write>(kx: &[f64], g: &[f64], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["kx_ph_um_inv", "density_um"])?;
    for (&k, &v) in kx.iter().zip(g) {
        w.write_record([format!("{k:.16e}"), format!("{v:.16e}")])?;
    }
    w.flush().map_err(|e| crate::error::CliError::Failed(format!("writing csv: {e}")))?;
    Ok(())
}
