//! Entanglement measures of the scattered state: the subsystem purities,
//! the EPR uncertainty product and the regime classification built on them.

mod purity;
mod transform;

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{BeamParams, PhaseModel, SpectrumModel};
use crate::quadrature::{integrate_1d_with_breaks, QuadratureSpec};
use crate::special::erf;

pub use purity::{purity_sc, purity_sc_direct, MAX_LEVEL};
pub use transform::angular_transform;

/// All measures at one parameter point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasureResult {
    pub purity_sc: f64,
    pub purity_z: f64,
    /// μm²
    pub var_rel_pos: f64,
    /// μm⁻²
    pub var_tot_wavevector: f64,
    pub d2: f64,
    pub schmidt_number: f64,
    pub regime: Regime,
    pub longitudinal_entangled: bool,
}

impl MeasureResult {
    /// Fills in the derived fields and the classification.
    pub fn new(
        purity_sc: f64,
        purity_z: f64,
        var_rel_pos: f64,
        var_tot_wavevector: f64,
        thresholds: &RegimeThresholds,
    ) -> Result<Self> {
        let mut r = MeasureResult {
            purity_sc,
            purity_z,
            var_rel_pos,
            var_tot_wavevector,
            d2: var_rel_pos * var_tot_wavevector,
            schmidt_number: 1.0 / purity_sc,
            regime: Regime::C,
            longitudinal_entangled: false,
        };
        let (regime, flag) = classify_regime(&r, thresholds)?;
        r.regime = regime;
        r.longitudinal_entangled = flag;
        Ok(r)
    }
}

/// Regions of the (Δq⊥, Δk_ph) plane.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Regime {
    /// Wave-like: entangled by purity and by the EPR product.
    A,
    /// Particle-like: entangled by purity only.
    B,
    /// Classical: nearly separable.
    C,
    /// EPR-entangled while the purity stays above threshold. Never forced
    /// into A, B or C.
    Anomaly,
}

impl Regime {
    pub fn label(&self) -> &'static str {
        match self {
            Regime::A => "A",
            Regime::B => "B",
            Regime::C => "C",
            Regime::Anomaly => "anomaly",
        }
    }
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RegimeThresholds {
    pub purity_threshold: f64,
    pub epr_threshold: f64,
}

impl Default for RegimeThresholds {
    fn default() -> Self {
        RegimeThresholds { purity_threshold: 2.0 / 3.0, epr_threshold: 1.0 }
    }
}

impl RegimeThresholds {
    pub fn validate(&self) -> Result<()> {
        if !(self.purity_threshold > 0.0 && self.purity_threshold < 1.0) {
            return Err(Error::Domain(format!("purity threshold must lie in (0, 1), got {}", self.purity_threshold)));
        }
        if !(self.epr_threshold > 0.0) || !self.epr_threshold.is_finite() {
            return Err(Error::Domain(format!("EPR threshold must be positive, got {}", self.epr_threshold)));
        }
        Ok(())
    }
}

/// Regime label and the longitudinal-entanglement flag (P_z below threshold).
pub fn classify_regime(result: &MeasureResult, thresholds: &RegimeThresholds) -> Result<(Regime, bool)> {
    thresholds.validate()?;
    if !(result.purity_sc.is_finite() && result.d2.is_finite() && result.purity_z.is_finite()) {
        return Err(Error::Domain("cannot classify non-finite measures".into()));
    }
    let entangled_p = result.purity_sc < thresholds.purity_threshold;
    let entangled_d = result.d2 < thresholds.epr_threshold;
    let regime = match (entangled_p, entangled_d) {
        (true, true) => Regime::A,
        (true, false) => Regime::B,
        (false, false) => Regime::C,
        (false, true) => Regime::Anomaly,
    };
    Ok((regime, result.purity_z < thresholds.purity_threshold))
}

/// Purity of the electron's longitudinal degree of freedom,
/// ∫∫ dk dk′ R(k) R(k′) exp(−α (k − k′)²), R the radial marginal of Γ.
pub fn purity_z(beam: &BeamParams, spectrum: &SpectrumModel, quad: &QuadratureSpec) -> Result<f64> {
    quad.validate()?;
    let alpha = beam.longitudinal_alpha();
    let points = spectrum.radial_points(quad.truncation_sigmas);
    let (lo, hi) = (points[0], points[points.len() - 1]);
    let inner_quad = tighter(quad);
    let mass = RadialMass::new(spectrum, &inner_quad);
    let sigma = (0.5 / alpha).sqrt();
    let mut failure = None;
    let outer = integrate_1d_with_breaks(
        |k| {
            let rk = mass.at(k);
            if rk == 0.0 || failure.is_some() {
                return 0.0;
            }
            let a = lo.max(k - 9.0 * sigma);
            let b = hi.min(k + 9.0 * sigma);
            let mut pts = vec![a];
            pts.extend(points.iter().copied().filter(|&p| p > a && p < b));
            pts.extend([-5.0, -2.0, 0.0, 2.0, 5.0].iter().map(|j| k + j * sigma).filter(|&p| p > a && p < b));
            pts.push(b);
            pts.sort_by(f64::total_cmp);
            pts.dedup();
            match integrate_1d_with_breaks(
                |kp| {
                    let d = k - kp;
                    mass.at(kp) * (-alpha * d * d).exp()
                },
                &pts,
                &inner_quad,
            ) {
                Ok(r) => rk * r.value,
                Err(e) => {
                    failure = Some(e);
                    0.0
                }
            }
        },
        &points,
        quad,
    )?;
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(purity::clamp_purity(outer.value))
}

/// Radial marginal R(k) = k² ∫ dΩ Γ(k, Ω).
struct RadialMass<'a> {
    spectrum: &'a SpectrumModel,
    separable: bool,
    quad: &'a QuadratureSpec,
}

impl<'a> RadialMass<'a> {
    fn new(spectrum: &'a SpectrumModel, quad: &'a QuadratureSpec) -> Self {
        RadialMass { spectrum, separable: spectrum.is_angle_separable(), quad }
    }

    fn at(&self, k: f64) -> f64 {
        if self.separable {
            // The angular profile integrates to one over the sphere.
            return k * k * self.spectrum.radial_density(k);
        }
        let r = integrate_1d_with_breaks(|t| t.sin() * self.spectrum.gamma(k, t), &[0.0, 0.5 * PI, PI], self.quad);
        // Non-convergence of this smooth 1D integral leaves its best estimate.
        let v = match r {
            Ok(r) => r.value,
            Err(Error::NonConvergence { estimate, .. }) => estimate,
            Err(_) => 0.0,
        };
        2.0 * PI * k * k * v
    }
}

fn tighter(quad: &QuadratureSpec) -> QuadratureSpec {
    QuadratureSpec { rel_tol: (quad.rel_tol * 1e-2).max(1e-13), ..*quad }
}

/// ⟨Δ(x_el − x_ph)²⟩ from the erf/exp closed form for the unfiltered model,
/// plus the longitudinal term and the phase term.
pub fn rel_pos_variance_closed(beam: &BeamParams, spectrum: &SpectrumModel, phase: &PhaseModel) -> Result<f64> {
    if spectrum.is_filtered() {
        return Err(Error::Domain(
            "the closed form holds for the unfiltered spectrum; use rel_pos_variance_quadrature".into(),
        ));
    }
    Ok(spectral_variance_closed(spectrum) + beam.longitudinal_variance_term() + d_eta(phase, spectrum))
}

/// The spectrum-only part of the closed form.
fn spectral_variance_closed(spectrum: &SpectrumModel) -> f64 {
    let (kc, dk, ng) = (spectrum.k_c, spectrum.dk_ph, spectrum.n_g);
    let z = kc / (std::f64::consts::SQRT_2 * dk);
    (2.0 * PI).sqrt() * ng / 56.0 * (19.0 * dk + 2.0 * kc * kc / dk) * (erf(z) + 1.0) + ng / 14.0 * kc * (-z * z).exp()
}

/// ⟨Δ(x_el − x_ph)²⟩ by direct quadrature of
/// (1/8)∫[|∇⊥Γ|²/Γ − 2∇⊥²Γ + (c/v_z)² k⊥²Γ/(Δq∥² k²)] + (1/2)∫Γ|∇⊥η|².
/// The azimuth is integrated analytically.
pub fn rel_pos_variance_quadrature(
    beam: &BeamParams,
    spectrum: &SpectrumModel,
    phase: &PhaseModel,
    quad: &QuadratureSpec,
) -> Result<f64> {
    quad.validate()?;
    let cv2 = (beam.c_over_vz / beam.dq_par).powi(2);
    spherical_integral(spectrum, quad, |k, t| {
        let (s, c) = t.sin_cos();
        let d = spectrum.gamma_derivatives([k * s, 0.0, k * c])?;
        let fisher = if d.gamma > 0.0 { (d.d_kx * d.d_kx + d.d_ky * d.d_ky) / d.gamma } else { 0.0 };
        let laplacian = d.d2_kx + d.d2_ky;
        let longitudinal = cv2 * s * s * d.gamma;
        let eta = if phase.is_zero() { 0.0 } else { 0.5 * d.gamma * phase.grad_perp_sq(spectrum, k, t) };
        Ok(0.125 * (fisher - 2.0 * laplacian + longitudinal) + eta)
    })
}

/// (1/8)∫ (c/v_z)² k⊥² Γ / (Δq∥² k²) d³k by quadrature; equals
/// (c/v_z)²/(14 Δq∥²) for the model angular profile.
pub fn longitudinal_term_quadrature(beam: &BeamParams, spectrum: &SpectrumModel, quad: &QuadratureSpec) -> Result<f64> {
    quad.validate()?;
    let cv2 = (beam.c_over_vz / beam.dq_par).powi(2);
    spherical_integral(spectrum, quad, |k, t| {
        let s = t.sin();
        Ok(0.125 * cv2 * s * s * spectrum.gamma(k, t))
    })
}

/// ∫ Γ d³k by spherical quadrature; 1 for a normalized spectrum.
pub fn gamma_mass(spectrum: &SpectrumModel, quad: &QuadratureSpec) -> Result<f64> {
    quad.validate()?;
    spherical_integral(spectrum, quad, |k, t| Ok(spectrum.gamma(k, t)))
}

/// ∫ d³k F(k, θ) for azimuthally symmetric F.
fn spherical_integral<F>(spectrum: &SpectrumModel, quad: &QuadratureSpec, f: F) -> Result<f64>
where
    F: Fn(f64, f64) -> Result<f64>,
{
    let inner_quad = tighter(quad);
    let mut failure = None;
    let outer = integrate_1d_with_breaks(
        |k| {
            if failure.is_some() {
                return 0.0;
            }
            let r = integrate_1d_with_breaks(
                |t| match f(k, t) {
                    Ok(v) => t.sin() * v,
                    Err(e) => {
                        failure.get_or_insert(e);
                        0.0
                    }
                },
                &[0.0, 0.5 * PI, PI],
                &inner_quad,
            );
            match r {
                Ok(r) => k * k * r.value,
                Err(e) => {
                    failure.get_or_insert(e);
                    0.0
                }
            }
        },
        &spectrum.radial_points(quad.truncation_sigmas),
        quad,
    )?;
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(2.0 * PI * outer.value)
}

/// ⟨Δ(q_x + k_x)²⟩ = Δq⊥², fixed by transverse momentum conservation.
pub fn total_wavevector_variance(beam: &BeamParams) -> f64 {
    beam.dq_perp * beam.dq_perp
}

/// D² = ⟨Δ(x_el − x_ph)²⟩ ⟨Δ(q_x + k_x)²⟩ from the closed form.
pub fn uncertainty_product(beam: &BeamParams, spectrum: &SpectrumModel, phase: &PhaseModel) -> Result<f64> {
    Ok(rel_pos_variance_closed(beam, spectrum, phase)? * total_wavevector_variance(beam))
}

/// Phase contribution D_η = (1/2)∫Γ|∇⊥η|² d³k for the unfiltered model.
pub fn d_eta(phase: &PhaseModel, spectrum: &SpectrumModel) -> f64 {
    match *phase {
        PhaseModel::Zero => 0.0,
        PhaseModel::PolarLinear { xi1, .. } => {
            let z = spectrum.k_c / (std::f64::consts::SQRT_2 * spectrum.dk_ph);
            xi1 * (0.5 * PI).sqrt() * spectrum.n_g * spectrum.dk_ph * (erf(z) + 1.0)
        }
        PhaseModel::RadialKc { xi2 } => 2.0 * xi2 / (7.0 * spectrum.k_c * spectrum.k_c),
        PhaseModel::RadialDk { xi2 } => 2.0 * xi2 / (7.0 * spectrum.dk_ph * spectrum.dk_ph),
    }
}

/// Every measure at one point: quadrature purities, closed-form variance
/// (quadrature when a filter is applied) and the classification.
pub fn measure_all(
    beam: &BeamParams,
    spectrum: &SpectrumModel,
    phase: &PhaseModel,
    quad: &QuadratureSpec,
    thresholds: &RegimeThresholds,
) -> Result<MeasureResult> {
    let p_sc = purity_sc(beam, spectrum, quad)?;
    let p_z = purity_z(beam, spectrum, quad)?;
    let var_x = if spectrum.is_filtered() {
        rel_pos_variance_quadrature(beam, spectrum, phase, quad)?
    } else {
        rel_pos_variance_closed(beam, spectrum, phase)?
    };
    MeasureResult::new(p_sc, p_z, var_x, total_wavevector_variance(beam), thresholds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::FilterWeight;
    use proptest::prelude::*;
    use std::f64::consts::TAU;

    fn fig2(dq_perp: f64, dk: f64) -> (BeamParams, SpectrumModel) {
        (BeamParams::new(200.0, dq_perp, TAU / 1.3).unwrap(), SpectrumModel::new(TAU / 0.5, dk).unwrap())
    }

    fn result(p: f64, d2: f64) -> MeasureResult {
        MeasureResult::new(p, 0.9, d2, 1.0, &RegimeThresholds::default()).unwrap()
    }

    #[test]
    fn regime_labels() {
        assert_eq!(result(0.1, 0.5).regime, Regime::A);
        assert_eq!(result(0.1, 5.0).regime, Regime::B);
        assert_eq!(result(0.9, 5.0).regime, Regime::C);
        assert_eq!(result(0.9, 0.5).regime, Regime::Anomaly);
        assert_eq!(Regime::Anomaly.to_string(), "anomaly");
    }

    #[test]
    fn longitudinal_flag_follows_purity_z() {
        let t = RegimeThresholds::default();
        let r = MeasureResult::new(0.5, 0.5, 1.0, 1.0, &t).unwrap();
        assert!(r.longitudinal_entangled);
        let r = MeasureResult::new(0.5, 0.7, 1.0, 1.0, &t).unwrap();
        assert!(!r.longitudinal_entangled);
    }

    #[test]
    fn thresholds_are_validated() {
        for p in [0.0, 1.0, -0.5, f64::NAN] {
            let t = RegimeThresholds { purity_threshold: p, ..Default::default() };
            assert!(t.validate().is_err());
        }
        let t = RegimeThresholds { epr_threshold: 0.0, ..Default::default() };
        assert!(t.validate().is_err());
        let r = result(0.5, 0.5);
        let t = RegimeThresholds { purity_threshold: 0.4, ..Default::default() };
        assert_eq!(classify_regime(&r, &t).unwrap().0, Regime::Anomaly);
    }

    #[test]
    fn total_wavevector_variance_is_the_square() {
        let beam = BeamParams::new(200.0, 0.314, 4.8).unwrap();
        assert!((total_wavevector_variance(&beam) - 0.098596).abs() < 1e-15);
    }

    #[test]
    fn d_eta_values() {
        let s = SpectrumModel::new(12.566, 0.3).unwrap();
        assert_eq!(d_eta(&PhaseModel::Zero, &s), 0.0);
        let kc = d_eta(&PhaseModel::radial_kc(100.0).unwrap(), &s);
        assert!((kc - 200.0 / (7.0 * 12.566f64.powi(2))).abs() < 1e-15);
        assert!((kc - 0.1809).abs() < 1e-4);
        let dk = d_eta(&PhaseModel::radial_dk(1.0).unwrap(), &s);
        assert!((dk - 2.0 / (7.0 * 0.09)).abs() < 1e-12);
    }

    #[test]
    fn d_eta_matches_quadrature_for_each_phase_model() {
        let quad = QuadratureSpec::default();
        let (beam, s) = fig2(3.0, 1.0);
        let zero = rel_pos_variance_quadrature(&beam, &s, &PhaseModel::Zero, &quad).unwrap();
        for phase in [
            PhaseModel::polar_linear(0.7, &quad).unwrap(),
            PhaseModel::radial_kc(100.0).unwrap(),
            PhaseModel::radial_dk(0.2).unwrap(),
        ] {
            let direct = rel_pos_variance_quadrature(&beam, &s, &phase, &quad).unwrap() - zero;
            let closed = d_eta(&phase, &s);
            assert!((direct - closed).abs() < 1e-6 * closed, "{phase:?}: {direct} vs {closed}");
        }
    }

    #[test]
    fn closed_variance_matches_quadrature() {
        let quad = QuadratureSpec::default();
        for (dq, dk) in [(0.3, 3.0), (3.0, 0.3), (0.1, 30.0), (1.0, 0.1), (10.0, 12.0)] {
            let (beam, s) = fig2(dq, dk);
            let c = rel_pos_variance_closed(&beam, &s, &PhaseModel::Zero).unwrap();
            let q = rel_pos_variance_quadrature(&beam, &s, &PhaseModel::Zero, &quad).unwrap();
            assert!((c - q).abs() < 1e-4 * c, "({dq}, {dk}): {c} vs {q}");
        }
    }

    #[test]
    fn closed_variance_refuses_filtered_spectra() {
        let quad = QuadratureSpec::default();
        let (beam, s) = fig2(3.0, 1.0);
        let f = crate::model::apply_filter(&s, FilterWeight::GaussianK { center: 12.0, width: 1.0 }, &quad).unwrap();
        assert!(rel_pos_variance_closed(&beam, &f, &PhaseModel::Zero).is_err());
        assert!(rel_pos_variance_quadrature(&beam, &f, &PhaseModel::Zero, &quad).unwrap() > 0.0);
    }

    #[test]
    fn variance_scales_as_inverse_square_at_small_width() {
        // Δk_ph ≪ k_c and ≪ Δq∥; the longitudinal term is removed by a huge Δq∥.
        let beam = BeamParams::new(200.0, 1.0, 1e4).unwrap();
        let s1 = SpectrumModel::new(TAU / 0.5, 0.05).unwrap();
        let s2 = s1.with_dk_ph(0.1).unwrap();
        let ratio = rel_pos_variance_closed(&beam, &s1, &PhaseModel::Zero).unwrap()
            / rel_pos_variance_closed(&beam, &s2, &PhaseModel::Zero).unwrap();
        assert!((ratio / 4.0 - 1.0).abs() < 0.1, "{ratio}");
    }

    #[test]
    fn longitudinal_term_identity() {
        let quad = QuadratureSpec::default();
        for (dq, dk) in [(1.0, 0.3), (1.0, 3.0), (1.0, 30.0)] {
            let (beam, s) = fig2(dq, dk);
            let direct = longitudinal_term_quadrature(&beam, &s, &quad).unwrap();
            let closed = beam.longitudinal_variance_term();
            assert!((closed - beam.c_over_vz.powi(2) / (14.0 * beam.dq_par.powi(2))).abs() < 1e-15 * closed);
            assert!((direct - closed).abs() < 1e-6 * closed, "{direct} vs {closed}");
        }
    }

    #[test]
    fn large_width_leaves_the_longitudinal_term() {
        let (beam, s) = fig2(1.0, 30.0);
        let total = rel_pos_variance_closed(&beam, &s, &PhaseModel::Zero).unwrap();
        let spectral = spectral_variance_closed(&s);
        assert!(spectral < 0.2 * total, "{spectral} of {total}");
        assert!((total - spectral - beam.longitudinal_variance_term()).abs() < 1e-15 * total);
    }

    #[test]
    fn epr_needs_a_few_micrometres_of_coherence() {
        let s = SpectrumModel::new(TAU / 0.5, 3.0).unwrap();
        let d2 = |l: f64| {
            let beam = BeamParams::from_coherence_lengths(200.0, l, 1.3).unwrap();
            uncertainty_product(&beam, &s, &PhaseModel::Zero).unwrap()
        };
        assert!(d2(5.0) < 1.0, "{}", d2(5.0));
        assert!(d2(0.5) > 1.0, "{}", d2(0.5));
    }

    #[test]
    fn purity_z_limits() {
        let quad = QuadratureSpec::default();
        let (beam, s) = fig2(1.0, 1.0);
        let narrow = s.with_dk_ph(0.1 * beam.dq_par).unwrap();
        assert!(purity_z(&beam, &narrow, &quad).unwrap() > 0.99);
        let other = beam.with_dq_perp(100.0).unwrap();
        assert_eq!(purity_z(&beam, &s, &quad).unwrap(), purity_z(&other, &s, &quad).unwrap());
        let loose = BeamParams::new(200.0, 1.0, 1e6).unwrap();
        assert!((purity_z(&loose, &s, &quad).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn purity_z_against_a_trapezoid_double_sum() {
        let quad = QuadratureSpec::default();
        let (beam, s) = fig2(1.0, 8.0);
        let alpha = beam.longitudinal_alpha();
        let (lo, hi) = s.radial_support(quad.truncation_sigmas);
        let n = 1500;
        let h = (hi - lo) / n as f64;
        let r: Vec<f64> = (0..=n)
            .map(|i| {
                let k = lo + h * i as f64;
                let w = if i == 0 || i == n { 0.5 } else { 1.0 };
                w * h * k * k * s.radial_density(k)
            })
            .collect();
        let mut sum = 0.0;
        for (i, a) in r.iter().enumerate() {
            for (j, b) in r.iter().enumerate() {
                let d = h * (i as f64 - j as f64);
                sum += a * b * (-alpha * d * d).exp();
            }
        }
        let p = purity_z(&beam, &s, &quad).unwrap();
        assert!((p - sum).abs() < 1e-6, "{p} vs {sum}");
    }

    #[test]
    fn purity_sc_grows_with_dq_perp() {
        let quad = QuadratureSpec::default();
        let mut last = 0.0;
        for dq in [3.0, 10.0, 30.0, 100.0] {
            let (beam, s) = fig2(dq, 1.0);
            let p = purity_sc(&beam, &s, &quad).unwrap();
            assert!(p >= last, "{dq}: {p} < {last}");
            last = p;
        }
    }

    #[test]
    fn epr_boundary_at_small_width_sits_near_root_14_widths() {
        // D² = Δq⊥² var and var → 1/(14 Δk²) for Δk ≪ k_c, Δq∥.
        for dk in [0.1, 0.2, 0.3] {
            let (beam, s) = fig2(1.0, dk);
            let var = rel_pos_variance_closed(&beam, &s, &PhaseModel::Zero).unwrap();
            let crossing = 1.0 / var.sqrt();
            let ratio = crossing / dk;
            assert!(ratio > 0.9 * 14f64.sqrt() && ratio < 14f64.sqrt(), "{dk}: {ratio}");
        }
    }

    #[test]
    fn purity_boundary_at_small_width_sits_near_k_c() {
        let quad = QuadratureSpec::default();
        let thresholds = RegimeThresholds::default();
        let kc = TAU / 0.5;
        let below = purity_sc(&fig2(kc / 3.0, 0.3).0, &fig2(1.0, 0.3).1, &quad).unwrap();
        let above = purity_sc(&fig2(3.0 * kc, 0.3).0, &fig2(1.0, 0.3).1, &quad).unwrap();
        assert!(below < thresholds.purity_threshold, "{below}");
        assert!(above > thresholds.purity_threshold, "{above}");
    }

    #[test]
    fn measure_all_is_consistent() {
        let quad = QuadratureSpec::default();
        let (beam, s) = fig2(60.0, 0.3);
        let r = measure_all(&beam, &s, &PhaseModel::Zero, &quad, &RegimeThresholds::default()).unwrap();
        assert_eq!(r.regime, Regime::C);
        assert_eq!(r.schmidt_number, 1.0 / r.purity_sc);
        assert_eq!(r.d2, r.var_rel_pos * r.var_tot_wavevector);
        assert!(r.d2 >= 1.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn result_invariants(p in 1e-6f64..1.0, pz in 1e-6f64..1.0, vx in 1e-4f64..1e3, vq in 1e-4f64..1e3) {
            let r = MeasureResult::new(p, pz, vx, vq, &RegimeThresholds::default()).unwrap();
            prop_assert_eq!(r.schmidt_number, 1.0 / p);
            prop_assert_eq!(r.d2, vx * vq);
            let (regime, _) = classify_regime(&r, &RegimeThresholds::default()).unwrap();
            prop_assert_eq!(regime, r.regime);
            let expected = match (p < 2.0 / 3.0, r.d2 < 1.0) {
                (true, true) => Regime::A,
                (true, false) => Regime::B,
                (false, false) => Regime::C,
                (false, true) => Regime::Anomaly,
            };
            prop_assert_eq!(r.regime, expected);
        }

        #[test]
        fn closed_variance_matches_quadrature_anywhere(
            dq in 0.1f64..100.0,
            dk in 0.1f64..30.0,
            l_par in 0.13f64..13.0,
        ) {
            let quad = QuadratureSpec::default();
            let beam = BeamParams::from_coherence_lengths(200.0, TAU / dq, l_par).unwrap();
            let s = SpectrumModel::new(TAU / 0.5, dk).unwrap();
            let c = rel_pos_variance_closed(&beam, &s, &PhaseModel::Zero).unwrap();
            let q = rel_pos_variance_quadrature(&beam, &s, &PhaseModel::Zero, &quad).unwrap();
            prop_assert!((c - q).abs() < 1e-4 * c);
        }

        #[test]
        fn purity_z_in_unit_interval(dk in 0.05f64..40.0, l_par in 0.1f64..20.0) {
            let quad = QuadratureSpec::default();
            let beam = BeamParams::from_coherence_lengths(200.0, 1.0, l_par).unwrap();
            let s = SpectrumModel::new(TAU / 0.5, dk).unwrap();
            let p = purity_z(&beam, &s, &quad).unwrap();
            prop_assert!(p > 0.0 && p <= 1.0);
        }

        #[test]
        fn total_variance_ignores_the_spectrum(dq in 0.01f64..100.0) {
            let beam = BeamParams::new(200.0, dq, 4.8).unwrap();
            prop_assert_eq!(total_wavevector_variance(&beam), dq * dq);
        }
    }
}
