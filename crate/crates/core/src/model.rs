//! Beam, spectrum and phase types, kinematics and unit conversions.
//!
//! Units: wavenumbers in μm⁻¹, lengths in μm, energies in keV.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{integrate_1d, integrate_1d_with_breaks, QuadratureSpec};
use crate::special::erf;

/// Electron rest energy mc² in keV.
pub const ELECTRON_REST_ENERGY_KEV: f64 = 510.999;
/// ħc in keV·μm (0.197327 eV·μm).
pub const HBAR_C_KEV_UM: f64 = 0.197327e-3;
/// Normalization of the angular profile f(θ) = C (sinθ cosθ)².
pub const ANGULAR_NORM: f64 = 15.0 / (8.0 * PI);

fn positive(name: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Domain(format!("{name} must be positive and finite, got {v}")))
    }
}

/// Central electron wavenumber q0 (μm⁻¹) and c/v_z for kinetic energy `kinetic_energy` (keV).
pub fn derive_kinematics(kinetic_energy: f64) -> Result<(f64, f64)> {
    let k = positive("kinetic energy", kinetic_energy)?;
    let mc2 = ELECTRON_REST_ENERGY_KEV;
    // K² + 2mc²K written as K(K + 2mc²) so tiny K does not underflow early.
    let pc = (k * (k + 2.0 * mc2)).sqrt();
    let q0 = pc / HBAR_C_KEV_UM;
    // v_z = ħq0/m with the rest mass m.
    let c_over_vz = mc2 / pc;
    if !(q0.is_finite() && c_over_vz.is_finite() && q0 > 0.0) {
        return Err(Error::Domain(format!("kinematics not representable for K = {kinetic_energy} keV")));
    }
    Ok((q0, c_over_vz))
}

/// Converts a central wavelength and width (μm) into k_c and Δk_ph (μm⁻¹).
pub fn wavelength_to_wavenumbers(lambda_c: f64, dlambda: f64) -> Result<(f64, f64)> {
    let l = positive("central wavelength", lambda_c)?;
    let dl = positive("wavelength width", dlambda)?;
    Ok((TAU / l, TAU * dl / (l * l)))
}

/// Normalization N_g of the radial profile, fixed by ∫₀^∞ k² g(k) dk = 1.
pub fn spectrum_normalization(k_c: f64, dk_ph: f64) -> Result<f64> {
    let kc = positive("k_c", k_c)?;
    let d = positive("dk_ph", dk_ph)?;
    let z = kc / (std::f64::consts::SQRT_2 * d);
    let inv = (PI / 2.0).sqrt() * d * (d * d + kc * kc) * (erf(z) + 1.0) + kc * d * d * (-z * z).exp();
    let n = 1.0 / inv;
    if !(n.is_finite() && n > 0.0) {
        return Err(Error::Domain(format!("normalization not representable for k_c = {k_c}, dk = {dk_ph}")));
    }
    Ok(n)
}

// ---------------------------------------------------------------------------
// Beam

/// Electron kinematics and coherence widths.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeamParams {
    pub kinetic_energy: f64,
    pub q0: f64,
    pub c_over_vz: f64,
    pub dq_perp: f64,
    pub dq_par: f64,
}

impl BeamParams {
    pub fn new(kinetic_energy: f64, dq_perp: f64, dq_par: f64) -> Result<Self> {
        let (q0, c_over_vz) = derive_kinematics(kinetic_energy)?;
        let beam = BeamParams {
            kinetic_energy,
            q0,
            c_over_vz,
            dq_perp: positive("dq_perp", dq_perp)?,
            dq_par: positive("dq_par", dq_par)?,
        };
        beam.warn_small_recoil();
        Ok(beam)
    }

    /// Widths from coherence lengths via Δq = 2π/L.
    pub fn from_coherence_lengths(kinetic_energy: f64, l_perp: f64, l_par: f64) -> Result<Self> {
        let lp = positive("l_perp", l_perp)?;
        let ll = positive("l_par", l_par)?;
        Self::new(kinetic_energy, TAU / lp, TAU / ll)
    }

    pub fn with_dq_perp(&self, dq_perp: f64) -> Result<Self> {
        Self::new(self.kinetic_energy, dq_perp, self.dq_par)
    }

    pub fn with_dq_par(&self, dq_par: f64) -> Result<Self> {
        Self::new(self.kinetic_energy, self.dq_perp, dq_par)
    }

    pub fn l_perp(&self) -> f64 {
        TAU / self.dq_perp
    }

    pub fn l_par(&self) -> f64 {
        TAU / self.dq_par
    }

    /// Coefficient α in the longitudinal overlap factor exp(−α (k − k′)²),
    /// α = c²/(4 v_z² Δq∥²).
    pub fn longitudinal_alpha(&self) -> f64 {
        let r = self.c_over_vz / self.dq_par;
        0.25 * r * r
    }

    /// The longitudinal term c²/(14 v_z² Δq∥²) of the relative-position variance.
    pub fn longitudinal_variance_term(&self) -> f64 {
        let r = self.c_over_vz / self.dq_par;
        r * r / 14.0
    }

    /// Ratio q0 / max(Δq⊥, Δq∥). The small-recoil treatment wants this ≫ 1.
    pub fn recoil_margin(&self) -> f64 {
        self.q0 / self.dq_perp.max(self.dq_par)
    }

    /// Recomputes the derived fields from the stored energy and compares.
    pub fn check_consistency(&self) -> Result<()> {
        let (q0, cv) = derive_kinematics(self.kinetic_energy)?;
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * b.abs();
        if close(self.q0, q0) && close(self.c_over_vz, cv) && self.dq_perp > 0.0 && self.dq_par > 0.0 {
            Ok(())
        } else {
            Err(Error::Consistency("beam kinematics do not match the stored energy".into()))
        }
    }

    fn warn_small_recoil(&self) {
        if self.recoil_margin() < 10.0 {
            log::warn!(
                "coherence widths (dq_perp = {}, dq_par = {}) are within a factor 10 of q0 = {}; \
                 the small-recoil approximation is questionable",
                self.dq_perp,
                self.dq_par,
                self.q0
            );
        }
    }
}

/// Initial electron amplitude ψ_ini(q), a normalized Gaussian centred at
/// (0, 0, q0) with widths (Δq⊥, Δq⊥, Δq∥).
pub fn eval_psi_ini(beam: &BeamParams, q: [f64; 3]) -> f64 {
    psi_1d(q[0], beam.dq_perp) * psi_1d(q[1], beam.dq_perp) * psi_1d(q[2] - beam.q0, beam.dq_par)
}

/// One-dimensional normalized Gaussian amplitude of width `sigma` in |ψ|².
#[inline]
pub fn psi_1d(x: f64, sigma: f64) -> f64 {
    (TAU * sigma * sigma).powf(-0.25) * (-x * x / (4.0 * sigma * sigma)).exp()
}

// ---------------------------------------------------------------------------
// Filters

/// User-supplied filter weight with the metadata the integrators need.
#[derive(Clone)]
pub struct CustomFilter {
    pub name: String,
    weight: Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>,
    /// Upper bound of the weight, used by the rejection sampler.
    pub bound: f64,
    /// True when the weight ignores θ.
    pub radial_only: bool,
    /// Radii where the weight has kinks or jumps.
    pub breakpoints: Vec<f64>,
}

impl CustomFilter {
    pub fn new<F>(name: impl Into<String>, bound: f64, radial_only: bool, breakpoints: Vec<f64>, weight: F) -> Self
    where
        F: Fn(f64, f64) -> f64 + Send + Sync + 'static,
    {
        CustomFilter { name: name.into(), weight: Arc::new(weight), bound, radial_only, breakpoints }
    }
}

impl fmt::Debug for CustomFilter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomFilter")
            .field("name", &self.name)
            .field("bound", &self.bound)
            .field("radial_only", &self.radial_only)
            .field("breakpoints", &self.breakpoints)
            .finish()
    }
}

/// Multiplicative photonic filter |F(k)|².
#[derive(Debug, Clone)]
pub enum FilterWeight {
    /// Indicator of k_min ≤ k ≤ k_max.
    Band {
        k_min: f64,
        k_max: f64,
    },
    /// exp(−(k − center)²/(2 width²)).
    GaussianK {
        center: f64,
        width: f64,
    },
    Custom(CustomFilter),
}

impl FilterWeight {
    pub fn weight(&self, k: f64, theta: f64) -> f64 {
        match self {
            FilterWeight::Band { k_min, k_max } => {
                if k >= *k_min && k <= *k_max {
                    1.0
                } else {
                    0.0
                }
            }
            FilterWeight::GaussianK { center, width } => {
                let z = (k - center) / width;
                (-0.5 * z * z).exp()
            }
            FilterWeight::Custom(c) => (c.weight)(k, theta),
        }
    }

    pub fn is_radial(&self) -> bool {
        match self {
            FilterWeight::Band { .. } | FilterWeight::GaussianK { .. } => true,
            FilterWeight::Custom(c) => c.radial_only,
        }
    }

    pub fn bound(&self) -> f64 {
        match self {
            FilterWeight::Custom(c) => c.bound,
            _ => 1.0,
        }
    }

    fn breakpoints(&self) -> Vec<f64> {
        match self {
            FilterWeight::Band { k_min, k_max } => vec![*k_min, *k_max],
            FilterWeight::GaussianK { .. } => Vec::new(),
            FilterWeight::Custom(c) => c.breakpoints.clone(),
        }
    }

    /// (ln w)′ and (ln w)″ for smooth radial weights.
    fn log_derivatives(&self, k: f64) -> Option<(f64, f64)> {
        match self {
            FilterWeight::GaussianK { center, width } => {
                let s2 = width * width;
                Some((-(k - center) / s2, -1.0 / s2))
            }
            _ => None,
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            FilterWeight::Band { k_min, k_max } => {
                if !(k_min.is_finite() && k_max.is_finite() && *k_min >= 0.0 && k_min < k_max) {
                    return Err(Error::Domain(format!("invalid band [{k_min}, {k_max}]")));
                }
            }
            FilterWeight::GaussianK { center, width } => {
                if !center.is_finite() {
                    return Err(Error::Domain("filter center must be finite".into()));
                }
                positive("filter width", *width)?;
            }
            FilterWeight::Custom(c) => {
                positive("filter bound", c.bound)?;
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Spectrum

/// Partial derivatives of Γ in Cartesian coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaDerivatives {
    pub gamma: f64,
    pub d_kx: f64,
    pub d_ky: f64,
    pub d2_kx: f64,
    pub d2_ky: f64,
}

/// Luminescence spectrum Γ(k) = n_f w(k, θ) g(k) f(θ).
#[derive(Debug, Clone)]
pub struct SpectrumModel {
    pub k_c: f64,
    pub dk_ph: f64,
    pub n_g: f64,
    filter: Option<FilterWeight>,
    n_f: f64,
}

impl SpectrumModel {
    pub fn new(k_c: f64, dk_ph: f64) -> Result<Self> {
        let n_g = spectrum_normalization(k_c, dk_ph)?;
        Ok(SpectrumModel { k_c, dk_ph, n_g, filter: None, n_f: 1.0 })
    }

    pub fn from_wavelengths(lambda_c: f64, dlambda: f64) -> Result<Self> {
        let (k_c, dk) = wavelength_to_wavenumbers(lambda_c, dlambda)?;
        Self::new(k_c, dk)
    }

    /// Same centre, different width (and no filter).
    pub fn with_dk_ph(&self, dk_ph: f64) -> Result<Self> {
        Self::new(self.k_c, dk_ph)
    }

    pub fn filter(&self) -> Option<&FilterWeight> {
        self.filter.as_ref()
    }

    pub fn n_f(&self) -> f64 {
        self.n_f
    }

    pub fn is_filtered(&self) -> bool {
        self.filter.is_some()
    }

    /// True when Γ factorizes into a radial density times f(θ).
    pub fn is_angle_separable(&self) -> bool {
        self.filter.as_ref().is_none_or(FilterWeight::is_radial)
    }

    /// Base radial profile g(k).
    #[inline]
    pub fn g(&self, k: f64) -> f64 {
        let z = (k - self.k_c) / self.dk_ph;
        self.n_g * (-0.5 * z * z).exp()
    }

    /// Angular profile f(θ).
    #[inline]
    pub fn angular(theta: f64) -> f64 {
        let sc = theta.sin() * theta.cos();
        ANGULAR_NORM * sc * sc
    }

    #[inline]
    pub fn filter_weight(&self, k: f64, theta: f64) -> f64 {
        self.filter.as_ref().map_or(1.0, |w| w.weight(k, theta))
    }

    pub fn filter_bound(&self) -> f64 {
        self.filter.as_ref().map_or(1.0, FilterWeight::bound)
    }

    /// Radial density ρ(k) = n_f w(k) g(k); only meaningful when the spectrum
    /// is angle-separable (otherwise the θ-dependence of w is ignored).
    #[inline]
    pub fn radial_density(&self, k: f64) -> f64 {
        match &self.filter {
            None => self.g(k),
            Some(w) => self.n_f * w.weight(k, 0.25 * PI) * self.g(k),
        }
    }

    /// Γ at (k, θ).
    #[inline]
    pub fn gamma(&self, k: f64, theta: f64) -> f64 {
        let base = self.g(k) * Self::angular(theta);
        match &self.filter {
            None => base,
            Some(w) => self.n_f * w.weight(k, theta) * base,
        }
    }

    /// Γ at a Cartesian wavevector.
    pub fn gamma_vec(&self, k: [f64; 3]) -> f64 {
        let kk = norm(k);
        if kk == 0.0 {
            return 0.0;
        }
        let kperp = k[0].hypot(k[1]);
        self.gamma(kk, kperp.atan2(k[2]))
    }

    /// Radial integration range [max(0, k_c − sΔk), k_c + sΔk], narrowed to a
    /// band filter when one is set.
    pub fn radial_support(&self, sigmas: f64) -> (f64, f64) {
        let lo = (self.k_c - sigmas * self.dk_ph).max(0.0);
        let hi = self.k_c + sigmas * self.dk_ph;
        match &self.filter {
            Some(FilterWeight::Band { k_min, k_max }) => {
                let a = lo.max(*k_min);
                let b = hi.min(*k_max);
                if a < b {
                    (a, b)
                } else {
                    (lo, hi)
                }
            }
            _ => (lo, hi),
        }
    }

    /// Radii inside the support where the spectrum is not smooth.
    pub fn radial_breakpoints(&self, sigmas: f64) -> Vec<f64> {
        let (lo, hi) = self.radial_support(sigmas);
        let mut pts: Vec<f64> = self
            .filter
            .as_ref()
            .map(FilterWeight::breakpoints)
            .unwrap_or_default()
            .into_iter()
            .filter(|&p| p > lo && p < hi)
            .collect();
        pts.sort_by(f64::total_cmp);
        pts
    }

    /// Support endpoints with breakpoints in between, ready for quadrature.
    pub fn radial_points(&self, sigmas: f64) -> Vec<f64> {
        let (lo, hi) = self.radial_support(sigmas);
        let mut pts = vec![lo];
        pts.extend(self.radial_breakpoints(sigmas));
        pts.push(hi);
        pts
    }

    /// (ln ρ)′ and (ln ρ)″ where ρ is the radial density.
    fn radial_log_derivatives(&self, k: f64) -> Result<(f64, f64)> {
        let s2 = self.dk_ph * self.dk_ph;
        let (mut d1, mut d2) = (-(k - self.k_c) / s2, -1.0 / s2);
        if let Some(w) = &self.filter {
            match w.log_derivatives(k) {
                Some((a, b)) => {
                    d1 += a;
                    d2 += b;
                }
                None => return Err(Error::NotDifferentiable("filter weight has no analytic derivatives".into())),
            }
        }
        Ok((d1, d2))
    }

    /// Γ and its first and second partials in k_x and k_y, by the chain rule
    /// through Γ = C h(k) (k_x² + k_y²) k_z² with h = ρ/k⁴.
    pub fn gamma_derivatives(&self, kv: [f64; 3]) -> Result<GammaDerivatives> {
        let k = norm(kv);
        if k == 0.0 {
            return Err(Error::SingularPoint("Γ derivatives at k = 0".into()));
        }
        let (l1, l2) = self.radial_log_derivatives(k)?;
        let rho = self.radial_density(k);
        let (r1, r2) = (rho * l1, rho * (l2 + l1 * l1));
        let k2 = k * k;
        let k4 = k2 * k2;
        let h = rho / k4;
        let h1 = r1 / k4 - 4.0 * rho / (k4 * k);
        let h2 = r2 / k4 - 8.0 * r1 / (k4 * k) + 20.0 * rho / (k4 * k2);
        let (kx, ky, kz) = (kv[0], kv[1], kv[2]);
        let kp2 = kx * kx + ky * ky;
        let c = ANGULAR_NORM * kz * kz;
        let first = |a: f64| c * (h1 * (a / k) * kp2 + 2.0 * h * a);
        let second = |a: f64| {
            let a2 = a * a;
            c * (h2 * a2 * kp2 / k2 + h1 * (kp2 / k + 4.0 * a2 / k - a2 * kp2 / (k2 * k)) + 2.0 * h)
        };
        Ok(GammaDerivatives {
            gamma: c * h * kp2,
            d_kx: first(kx),
            d_ky: first(ky),
            d2_kx: second(kx),
            d2_ky: second(ky),
        })
    }
}

#[inline]
pub(crate) fn norm(k: [f64; 3]) -> f64 {
    (k[0] * k[0] + k[1] * k[1] + k[2] * k[2]).sqrt()
}

/// Γ(k, θ); see [`SpectrumModel::gamma`].
pub fn eval_gamma(spectrum: &SpectrumModel, k: f64, theta: f64) -> f64 {
    spectrum.gamma(k, theta)
}

/// See [`SpectrumModel::gamma_derivatives`].
pub fn gamma_cartesian_derivatives(spectrum: &SpectrumModel, k: [f64; 3]) -> Result<GammaDerivatives> {
    spectrum.gamma_derivatives(k)
}

/// Returns the spectrum n_f w Γ with n_f⁻¹ = ∫ d³k w Γ computed numerically.
pub fn apply_filter(spectrum: &SpectrumModel, weight: FilterWeight, quad: &QuadratureSpec) -> Result<SpectrumModel> {
    if spectrum.is_filtered() {
        return Err(Error::Domain("spectrum already carries a filter".into()));
    }
    weight.validate()?;
    let mut out = SpectrumModel { filter: Some(weight), n_f: 1.0, ..spectrum.clone() };
    let pts = out.radial_points(quad.truncation_sigmas);
    let w = out.filter.as_ref().expect("filter just set");
    let mut negative = false;
    let inv = if w.is_radial() {
        integrate_1d_with_breaks(
            |k| {
                let v = w.weight(k, 0.25 * PI);
                negative |= v < 0.0;
                k * k * v * spectrum.g(k)
            },
            &pts,
            quad,
        )?
        .value
    } else {
        let mut inner_err = None;
        let outer = integrate_1d_with_breaks(
            |k| {
                let r = integrate_1d(
                    |t| {
                        let v = w.weight(k, t);
                        negative |= v < 0.0;
                        t.sin() * v * SpectrumModel::angular(t)
                    },
                    0.0,
                    PI,
                    quad,
                );
                match r {
                    Ok(r) => TAU * k * k * spectrum.g(k) * r.value,
                    Err(e) => {
                        inner_err.get_or_insert(e);
                        0.0
                    }
                }
            },
            &pts,
            quad,
        )?;
        if let Some(e) = inner_err {
            return Err(e);
        }
        outer.value
    };
    if negative {
        return Err(Error::Domain("filter weight must be non-negative".into()));
    }
    if !(inv > 0.0) || !inv.is_finite() {
        return Err(Error::EmptyFilter);
    }
    out.n_f = 1.0 / inv;
    Ok(out)
}

// ---------------------------------------------------------------------------
// Phase

/// Models of the undetermined photon phase η(k).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PhaseModel {
    Zero,
    /// η = slope·θ, with ξ₁ precomputed from the angular profile.
    PolarLinear {
        slope: f64,
        xi1: f64,
    },
    /// η = √ξ₂ k / k_c.
    RadialKc {
        xi2: f64,
    },
    /// η = √ξ₂ k / Δk_ph.
    RadialDk {
        xi2: f64,
    },
}

impl PhaseModel {
    /// ξ₁ = π ∫₀^π sinθ cos²θ f(θ) (η₁′(θ))² dθ for a polar phase η₁.
    pub fn polar_xi<F: Fn(f64) -> f64>(deta: F, quad: &QuadratureSpec) -> Result<f64> {
        let r = integrate_1d_with_breaks(
            |t| {
                let c = t.cos();
                let d = deta(t);
                t.sin() * c * c * SpectrumModel::angular(t) * d * d
            },
            &[0.0, 0.5 * PI, PI],
            quad,
        )?;
        Ok(PI * r.value)
    }

    pub fn polar_linear(slope: f64, quad: &QuadratureSpec) -> Result<Self> {
        if !slope.is_finite() {
            return Err(Error::Domain("phase slope must be finite".into()));
        }
        let xi1 = Self::polar_xi(|_| slope, quad)?;
        Ok(PhaseModel::PolarLinear { slope, xi1 })
    }

    /// Linear polar phase with the slope chosen to give the requested ξ₁.
    pub fn polar_linear_with_xi1(xi1: f64, quad: &QuadratureSpec) -> Result<Self> {
        if !(xi1 >= 0.0) || !xi1.is_finite() {
            return Err(Error::Domain(format!("xi1 must be non-negative, got {xi1}")));
        }
        let unit = Self::polar_xi(|_| 1.0, quad)?;
        Ok(PhaseModel::PolarLinear { slope: (xi1 / unit).sqrt(), xi1 })
    }

    pub fn radial_kc(xi2: f64) -> Result<Self> {
        if !(xi2 >= 0.0) || !xi2.is_finite() {
            return Err(Error::Domain(format!("xi2 must be non-negative, got {xi2}")));
        }
        Ok(PhaseModel::RadialKc { xi2 })
    }

    pub fn radial_dk(xi2: f64) -> Result<Self> {
        if !(xi2 >= 0.0) || !xi2.is_finite() {
            return Err(Error::Domain(format!("xi2 must be non-negative, got {xi2}")));
        }
        Ok(PhaseModel::RadialDk { xi2 })
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, PhaseModel::Zero)
    }

    /// η at (k, θ).
    pub fn eta(&self, spectrum: &SpectrumModel, k: f64, theta: f64) -> f64 {
        match *self {
            PhaseModel::Zero => 0.0,
            PhaseModel::PolarLinear { slope, .. } => slope * theta,
            PhaseModel::RadialKc { xi2 } => xi2.sqrt() * k / spectrum.k_c,
            PhaseModel::RadialDk { xi2 } => xi2.sqrt() * k / spectrum.dk_ph,
        }
    }

    /// (∂η/∂k_x)² + (∂η/∂k_y)² at (k, θ). Both the radial and polar unit
    /// vectors project onto the transverse plane along the same direction,
    /// with weights sinθ and cosθ.
    pub fn grad_perp_sq(&self, spectrum: &SpectrumModel, k: f64, theta: f64) -> f64 {
        let (s, c) = theta.sin_cos();
        let (dk, dtheta) = match *self {
            PhaseModel::Zero => return 0.0,
            PhaseModel::PolarLinear { slope, .. } => (0.0, slope),
            PhaseModel::RadialKc { xi2 } => (xi2.sqrt() / spectrum.k_c, 0.0),
            PhaseModel::RadialDk { xi2 } => (xi2.sqrt() / spectrum.dk_ph, 0.0),
        };
        let g = dk * s + dtheta * c / k;
        g * g
    }
}

// ---------------------------------------------------------------------------
// Scattered state

/// The post-selected electron-photon state.
#[derive(Debug, Clone)]
pub struct ScatteredState {
    pub beam: BeamParams,
    pub spectrum: SpectrumModel,
    pub phase: PhaseModel,
}

impl ScatteredState {
    pub fn new(beam: BeamParams, spectrum: SpectrumModel, phase: PhaseModel) -> Self {
        ScatteredState { beam, spectrum, phase }
    }

    /// Amplitude ψ_sc(q, k) = ψ_ini(q⊥ + k⊥, q_z + c k / v_z) √Γ(k) e^{iη(k)}
    /// returned as (real, imaginary).
    pub fn amplitude(&self, q: [f64; 3], k: [f64; 3]) -> (f64, f64) {
        let kk = norm(k);
        let shifted = [q[0] + k[0], q[1] + k[1], q[2] + self.beam.c_over_vz * kk];
        let theta = if kk > 0.0 { k[0].hypot(k[1]).atan2(k[2]) } else { 0.0 };
        let mag = eval_psi_ini(&self.beam, shifted) * self.spectrum.gamma(kk, theta).sqrt();
        let (s, c) = self.phase.eta(&self.spectrum, kk, theta).sin_cos();
        (mag * c, mag * s)
    }

    /// |ψ_sc(q, k)|².
    pub fn density(&self, q: [f64; 3], k: [f64; 3]) -> f64 {
        let (re, im) = self.amplitude(q, k);
        re * re + im * im
    }
}
