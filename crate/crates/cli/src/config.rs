//! The run configuration: one TOML document per experiment.
//!
//! Every physical quantity may be given as a length or as a wavenumber, never
//! both. Which of them a command actually needs is checked when it asks for
//! the resolved model (a sweep supplies Δq⊥ and Δk_ph from its axes).

use std::f64::consts::TAU;
use std::path::{Path, PathBuf};

use elphot::distributions::GridSpec;
use elphot::measures::RegimeThresholds;
use elphot::model::{wavelength_to_wavenumbers, BeamParams, PhaseModel, SpectrumModel};
use elphot::quadrature::QuadratureSpec;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BeamConfig {
    pub kinetic_energy_kev: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l_par_um: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dq_par_um_inv: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l_perp_um: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dq_perp_um_inv: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_c_um: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_c_um_inv: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dlambda_um: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dk_ph_um_inv: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseKind {
    #[default]
    Zero,
    /// η = slope·θ; `xi` is ξ₁.
    PolarLinear,
    /// η = √ξ₂ k/k_c; `xi` is ξ₂.
    RadialKc,
    /// η = √ξ₂ k/Δk_ph; `xi` is ξ₂.
    RadialDk,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseConfig {
    #[serde(default)]
    pub model: PhaseKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub xi: Option<f64>,
}

/// Log-spaced axis from `min` to `max` inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisConfig {
    pub min: f64,
    pub max: f64,
    pub steps: usize,
}

impl AxisConfig {
    pub fn values(&self) -> Vec<f64> {
        log_axis(self.min, self.max, self.steps)
    }

    fn validate(&self, name: &str) -> Result<()> {
        if !(self.min > 0.0 && self.min.is_finite() && self.max.is_finite()) {
            return Err(CliError::Config(format!("sweep.{name}: range must be positive and finite")));
        }
        if self.max <= self.min {
            return Err(CliError::Config(format!("sweep.{name}: max must exceed min")));
        }
        if self.steps < 2 {
            return Err(CliError::Config(format!("sweep.{name}: steps must be at least 2, got {}", self.steps)));
        }
        Ok(())
    }
}

/// Geometric progression with the end points hit exactly.
pub fn log_axis(min: f64, max: f64, steps: usize) -> Vec<f64> {
    if steps == 1 {
        return vec![min];
    }
    let (a, b) = (min.ln(), max.ln());
    let last = (steps - 1) as f64;
    (0..steps)
        .map(|i| match i {
            0 => min,
            i if i == steps - 1 => max,
            i => (a + (b - a) * i as f64 / last).exp(),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    /// Δq⊥ axis, μm⁻¹.
    pub dq_perp: AxisConfig,
    /// Δk_ph axis, μm⁻¹.
    pub dk_ph: AxisConfig,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            dq_perp: AxisConfig { min: 0.1, max: 100.0, steps: 40 },
            dk_ph: AxisConfig { min: 0.1, max: 30.0, steps: 40 },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValidateConfig {
    pub mc_samples: usize,
    pub seed: u64,
}

impl Default for ValidateConfig {
    fn default() -> Self {
        ValidateConfig { mc_samples: 1_000_000, seed: 7 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { dir: PathBuf::from("out") }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub beam: BeamConfig,
    pub spectrum: SpectrumConfig,
    #[serde(default)]
    pub phase: PhaseConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub thresholds: RegimeThresholds,
    #[serde(default)]
    pub quadrature: QuadratureSpec,
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default)]
    pub validate: ValidateConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

/// K = 200 keV, λ_c = 0.5 μm, L∥ = 1.3 μm, evaluated at Δq⊥ = 3 and
/// Δk_ph = 1 μm⁻¹, with the 40×40 map over the usual decades.
impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            beam: BeamConfig {
                kinetic_energy_kev: 200.0,
                l_par_um: Some(1.3),
                dq_par_um_inv: None,
                l_perp_um: None,
                dq_perp_um_inv: Some(3.0),
            },
            spectrum: SpectrumConfig {
                lambda_c_um: Some(0.5),
                k_c_um_inv: None,
                dlambda_um: None,
                dk_ph_um_inv: Some(1.0),
            },
            phase: PhaseConfig::default(),
            sweep: SweepConfig::default(),
            thresholds: RegimeThresholds::default(),
            quadrature: QuadratureSpec::default(),
            grid: GridSpec::default(),
            validate: ValidateConfig::default(),
            output: OutputConfig::default(),
        }
    }
}

fn one_of(name: &str, length: Option<f64>, wavenumber: Option<f64>) -> Result<Option<f64>> {
    let to_wavenumber = |l: f64| TAU / l;
    match (length, wavenumber) {
        (Some(_), Some(_)) => Err(CliError::Config(format!("{name}: give the length or the wavenumber, not both"))),
        (Some(l), None) => Ok(Some(to_wavenumber(positive(name, l)?))),
        (None, Some(q)) => Ok(Some(positive(name, q)?)),
        (None, None) => Ok(None),
    }
}

fn positive(name: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(CliError::Config(format!("{name} must be positive and finite, got {v}")))
    }
}

fn required(name: &str, v: Option<f64>) -> Result<f64> {
    v.ok_or_else(|| CliError::Config(format!("{name} is required for this command")))
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Checks everything that does not depend on the command.
    pub fn validate(&self) -> Result<()> {
        positive("beam.kinetic_energy_kev", self.beam.kinetic_energy_kev)?;
        self.dq_par()?;
        self.dq_perp()?;
        self.k_c()?;
        self.dk_ph()?;
        self.sweep.dq_perp.validate("dq_perp")?;
        self.sweep.dk_ph.validate("dk_ph")?;
        self.thresholds.validate().map_err(|e| CliError::Config(e.to_string()))?;
        self.quadrature.validate().map_err(|e| CliError::Config(e.to_string()))?;
        if self.grid.n < 16 || self.grid.max_points < 16 {
            return Err(CliError::Config("grid.n and grid.max_points must be at least 16".into()));
        }
        match (self.phase.model, self.phase.xi) {
            (PhaseKind::Zero, Some(x)) if x != 0.0 => {
                return Err(CliError::Config("phase.xi must be absent or 0 for the zero phase".into()));
            }
            (PhaseKind::Zero, _) => {}
            (_, None) => return Err(CliError::Config("phase.xi is required for this phase model".into())),
            (_, Some(x)) if !(x >= 0.0 && x.is_finite()) => {
                return Err(CliError::Config(format!("phase.xi must be non-negative, got {x}")));
            }
            _ => {}
        }
        Ok(())
    }

    fn dq_par(&self) -> Result<f64> {
        let v = one_of("beam.l_par_um / beam.dq_par_um_inv", self.beam.l_par_um, self.beam.dq_par_um_inv)?;
        required("beam.l_par_um or beam.dq_par_um_inv", v)
    }

    fn dq_perp(&self) -> Result<Option<f64>> {
        one_of("beam.l_perp_um / beam.dq_perp_um_inv", self.beam.l_perp_um, self.beam.dq_perp_um_inv)
    }

    fn k_c(&self) -> Result<f64> {
        let v =
            one_of("spectrum.lambda_c_um / spectrum.k_c_um_inv", self.spectrum.lambda_c_um, self.spectrum.k_c_um_inv)?;
        required("spectrum.lambda_c_um or spectrum.k_c_um_inv", v)
    }

    fn dk_ph(&self) -> Result<Option<f64>> {
        match (self.spectrum.dlambda_um, self.spectrum.dk_ph_um_inv) {
            (Some(_), Some(_)) => {
                Err(CliError::Config("spectrum.dlambda_um / spectrum.dk_ph_um_inv: give one, not both".into()))
            }
            (Some(dl), None) => {
                let lambda_c = TAU / self.k_c()?;
                let (_, dk) = wavelength_to_wavenumbers(lambda_c, positive("spectrum.dlambda_um", dl)?)
                    .map_err(|e| CliError::Config(e.to_string()))?;
                Ok(Some(dk))
            }
            (None, Some(dk)) => Ok(Some(positive("spectrum.dk_ph_um_inv", dk)?)),
            (None, None) => Ok(None),
        }
    }

    /// The beam at the configured Δq⊥, or at `dq_perp` when given.
    pub fn beam(&self, dq_perp: Option<f64>) -> Result<BeamParams> {
        let dq = match dq_perp {
            Some(v) => v,
            None => required("beam.l_perp_um or beam.dq_perp_um_inv", self.dq_perp()?)?,
        };
        BeamParams::new(self.beam.kinetic_energy_kev, dq, self.dq_par()?).map_err(|e| CliError::Config(e.to_string()))
    }

    /// The spectrum at the configured width, or at `dk_ph` when given.
    pub fn spectrum(&self, dk_ph: Option<f64>) -> Result<SpectrumModel> {
        let dk = match dk_ph {
            Some(v) => v,
            None => required("spectrum.dlambda_um or spectrum.dk_ph_um_inv", self.dk_ph()?)?,
        };
        SpectrumModel::new(self.k_c()?, dk).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn phase_model(&self) -> Result<PhaseModel> {
        let xi = self.phase.xi.unwrap_or(0.0);
        let r = match self.phase.model {
            PhaseKind::Zero => Ok(PhaseModel::Zero),
            PhaseKind::PolarLinear => PhaseModel::polar_linear_with_xi1(xi, &self.quadrature),
            PhaseKind::RadialKc => PhaseModel::radial_kc(xi),
            PhaseKind::RadialDk => PhaseModel::radial_dk(xi),
        };
        r.map_err(|e| CliError::Config(e.to_string()))
    }

    /// SHA-256 of the canonical JSON serialization, in hex.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        Sha256::digest(canonical.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_is_valid_and_resolves() {
        let cfg = RunConfig::default();
        cfg.validate().unwrap();
        let beam = cfg.beam(None).unwrap();
        assert!((beam.dq_par - TAU / 1.3).abs() < 1e-12);
        let s = cfg.spectrum(None).unwrap();
        assert!((s.k_c - TAU / 0.5).abs() < 1e-12);
    }

    #[test]
    fn log_axis_hits_end_points() {
        let a = log_axis(0.1, 100.0, 4);
        assert_eq!(a[0], 0.1);
        assert_eq!(a[3], 100.0);
        assert!((a[1] - 1.0).abs() < 1e-12 && (a[2] - 10.0).abs() < 1e-12);
    }

    #[test]
    fn both_alternatives_are_rejected() {
        let mut cfg = RunConfig::default();
        cfg.beam.dq_par_um_inv = Some(4.0);
        assert!(matches!(cfg.validate(), Err(CliError::Config(_))));
        let mut cfg = RunConfig::default();
        cfg.spectrum.dlambda_um = Some(0.01);
        assert!(matches!(cfg.validate(), Err(CliError::Config(_))));
    }

    #[test]
    fn missing_point_is_reported_when_needed() {
        let mut cfg = RunConfig::default();
        cfg.beam.dq_perp_um_inv = None;
        cfg.validate().unwrap();
        assert!(matches!(cfg.beam(None), Err(CliError::Config(_))));
        assert!(cfg.beam(Some(2.0)).is_ok());
    }

    #[test]
    fn bad_axes_are_rejected() {
        for axis in [
            AxisConfig { min: 0.1, max: 10.0, steps: 1 },
            AxisConfig { min: 0.0, max: 10.0, steps: 5 },
            AxisConfig { min: 10.0, max: 1.0, steps: 5 },
        ] {
            let mut cfg = RunConfig::default();
            cfg.sweep.dk_ph = axis;
            assert!(matches!(cfg.validate(), Err(CliError::Config(_))), "{axis:?}");
        }
    }

    #[test]
    fn phase_needs_xi() {
        let mut cfg = RunConfig::default();
        cfg.phase.model = PhaseKind::RadialKc;
        assert!(cfg.validate().is_err());
        cfg.phase.xi = Some(100.0);
        cfg.validate().unwrap();
        assert_eq!(cfg.phase_model().unwrap(), PhaseModel::RadialKc { xi2: 100.0 });
    }

    #[test]
    fn wavelength_width_converts() {
        let mut cfg = RunConfig::default();
        cfg.spectrum.dk_ph_um_inv = None;
        cfg.spectrum.dlambda_um = Some(0.01);
        let s = cfg.spectrum(None).unwrap();
        assert!((s.dk_ph - TAU * 0.01 / 0.25).abs() < 1e-9, "{}", s.dk_ph);
    }

    #[test]
    fn unknown_keys_are_config_errors() {
        let text = "[beam]\nkinetic_energy_kev = 200.0\nl_par_um = 1.3\nspeed = 3\n[spectrum]\nlambda_c_um = 0.5\n";
        assert!(matches!(RunConfig::from_toml(text), Err(CliError::Config(_))));
    }

    #[test]
    fn hash_tracks_content() {
        let a = RunConfig::default();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.validate.seed += 1;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }
}
