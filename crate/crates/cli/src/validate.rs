use elphot::oracles::{run_suite, OracleReport};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::Result;
use crate::sweep::Provenance;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub provenance: Provenance,
    pub dq_perp_um_inv: f64,
    pub dk_ph_um_inv: f64,
    pub seed: u64,
    pub mc_samples: usize,
    pub pass: bool,
    pub checks: Vec<OracleReport>,
}

impl ValidationReport {
    pub fn failures(&self) -> impl Iterator<Item = &OracleReport> {
        self.checks.iter().filter(|r| !r.pass)
    }
}

/// The oracle suite at the configured point. `seed` overrides the
/// configured Monte Carlo seed.
pub fn run_validation(cfg: &RunConfig, seed: Option<u64>) -> Result<ValidationReport> {
    cfg.validate()?;
    let mut cfg = cfg.clone();
    if let Some(s) = seed {
        cfg.validate.seed = s;
    }
    let beam = cfg.beam(None)?;
    let spectrum = cfg.spectrum(None)?;
    let checks = run_suite(&beam, &spectrum, &cfg.quadrature, cfg.validate.mc_samples, cfg.validate.seed)?;
    Ok(ValidationReport {
        provenance: Provenance::of(&cfg),
        dq_perp_um_inv: beam.dq_perp,
        dk_ph_um_inv: spectrum.dk_ph,
        seed: cfg.validate.seed,
        mc_samples: cfg.validate.mc_samples,
        pass: checks.iter().all(|r| r.pass),
        checks,
    })
}

/// One line per check.
pub fn report_line(r: &OracleReport) -> String {
    format!(
        "{} {}: main {:.10e} oracle {:.10e} |diff| {:.3e} tol {:.3e}",
        if r.pass { "PASS" } else { "FAIL" },
        r.quantity,
        r.main_value,
        r.oracle_value,
        r.discrepancy,
        r.tolerance
    )
}
