//! Electron purity of the scattered state.
//!
//! After the azimuthal integrals the purity is
//!
//! P = (2π)² ∫∫ dk dk′ k² k′² E(k, k′) ∫∫ dθ dθ′ sinθ sinθ′ Γ(k, θ) Γ(k′, θ′) K(k sinθ, k′ sinθ′)
//!
//! with E = exp(−α (k − k′)²), α = c²/(4 v_z² Δq∥²), and
//! K(u, v) = exp(−(u − v)²/(4Δq⊥²)) Ī₀(uv/(2Δq⊥²)), Ī₀ the scaled Bessel function.
//!
//! K depends on θ only through sinθ, so the polar range folds onto [0, π/2],
//! and the integrand is symmetric under (k, θ) ↔ (k′, θ′), so only k′ ≤ k
//! is integrated. Panels are aligned with the ridges of K (width √2 Δq⊥ in
//! transverse wavenumber) and of E (width 1/√(2α)), and every level of the
//! nesting carries an embedded 7/15 Gauss-Kronrod pair for the error estimate.

use std::f64::consts::{FRAC_PI_2, PI};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{BeamParams, SpectrumModel, ANGULAR_NORM};
use crate::quadrature::{kronrod15, kronrod_nodes, panel_edges, QuadratureSpec};
use crate::special::bessel_i0e;

/// Deepest refinement level tried before giving up.
pub const MAX_LEVEL: u32 = 3;

// Ridge offsets in units of the ridge width. Panels that stay more than
// CUTOFF widths from the ridge (Gaussian factor of K below e^-21) are skipped.
const KERNEL_MARKS: [f64; 5] = [-7.0, -2.0, 0.0, 2.0, 7.0];
const CUTOFF: f64 = 6.5;
const EDGE_MARKS: [f64; 5] = [-4.0, -1.0, 0.0, 1.0, 4.0];
const SPECTRUM_MARKS: [f64; 4] = [-4.0, -1.5, 1.5, 4.0];
// Pairs whose longitudinal factor is below e^-40 are dropped.
const EXP_CUTOFF: f64 = 40.0;
const MAX_EDGES: usize = 128;
const POLAR_WIDTH: f64 = PI / 4.0;

/// Panel edges on [0, π/2] held on the stack.
struct PolarEdges {
    pts: [f64; MAX_EDGES],
    len: usize,
}

impl PolarEdges {
    fn new(marks: &[f64], width: f64, splits: usize) -> Self {
        let mut cuts = [0.0; 8];
        let mut n = 0;
        for &m in marks {
            if m > 1e-12 && m < FRAC_PI_2 - 1e-12 && n < cuts.len() {
                cuts[n] = m;
                n += 1;
            }
        }
        cuts[..n].sort_by(f64::total_cmp);
        let mut out = PolarEdges { pts: [0.0; MAX_EDGES], len: 1 };
        let mut prev = 0.0;
        for &c in cuts[..n].iter().chain(std::iter::once(&FRAC_PI_2)) {
            if c <= prev {
                continue;
            }
            let pieces = ((c - prev) / width).ceil().max(1.0) as usize * splits;
            let h = (c - prev) / pieces as f64;
            for i in 1..=pieces {
                debug_assert!(out.len < MAX_EDGES);
                if out.len < MAX_EDGES {
                    out.pts[out.len] = if i == pieces { c } else { prev + h * i as f64 };
                    out.len += 1;
                }
            }
            prev = c;
        }
        out
    }

    fn as_slice(&self) -> &[f64] {
        &self.pts[..self.len]
    }
}

/// Nested quadrature value with per-dimension error attribution.
///
/// Slot 0 uses Kronrod weights in every dimension; slot 1 + d swaps in the
/// Gauss weights of dimension d only. The rule is multilinear in the weights,
/// so all five sums come from the same evaluations and |slot0 − slot(1+d)|
/// estimates the error contributed by dimension d.
#[derive(Clone, Copy, Debug, Default)]
pub(crate) struct Nested([f64; 5]);

// Dimension indices: outer radius, inner radius, outer polar, inner polar.
const DIM_K: usize = 0;
const DIM_KP: usize = 1;
const DIM_T: usize = 2;
const DIM_TP: usize = 3;

impl Nested {
    #[inline]
    fn add(&mut self, dim: usize, wk: f64, wg: f64, x: &Nested) {
        for (j, (v, xv)) in self.0.iter_mut().zip(x.0.iter()).enumerate() {
            *v += if j == 1 + dim { wg } else { wk } * xv;
        }
    }

    fn scale(mut self, f: f64) -> Self {
        for v in self.0.iter_mut() {
            *v *= f;
        }
        self
    }

    pub(crate) fn value(&self) -> f64 {
        self.0[0]
    }

    pub(crate) fn errors(&self) -> [f64; 4] {
        std::array::from_fn(|d| (self.0[0] - self.0[1 + d]).abs())
    }

    pub(crate) fn error(&self) -> f64 {
        self.errors().iter().sum()
    }
}

/// Refinement level per dimension; each level halves every panel.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub(crate) struct Levels(pub(crate) [u32; 4]);

pub(crate) struct PurityKernel<'a> {
    spectrum: &'a SpectrumModel,
    symmetric: bool,
    alpha: f64,
    inv4d2: f64,
    inv2d2: f64,
    sigma_u: f64,
    sigma_par: f64,
    lo: f64,
    hi: f64,
    radial_marks: Vec<f64>,
    rho_floor: f64,
}

impl<'a> PurityKernel<'a> {
    pub(crate) fn new(beam: &BeamParams, spectrum: &'a SpectrumModel, quad: &QuadratureSpec) -> Self {
        let d = beam.dq_perp;
        let alpha = beam.longitudinal_alpha();
        let (lo, hi) = spectrum.radial_support(quad.truncation_sigmas);
        let mut radial_marks: Vec<f64> = SPECTRUM_MARKS.iter().map(|m| spectrum.k_c + m * spectrum.dk_ph).collect();
        radial_marks.extend(spectrum.radial_breakpoints(quad.truncation_sigmas));
        radial_marks.retain(|&m| m > lo && m < hi);
        radial_marks.sort_by(f64::total_cmp);
        let peak = spectrum.k_c.max(lo).min(hi);
        let rho_floor = 1e-300_f64.max(1e-22 * peak * peak * spectrum.g(peak));
        PurityKernel {
            spectrum,
            symmetric: spectrum.is_angle_separable(),
            alpha,
            inv4d2: 0.25 / (d * d),
            inv2d2: 0.5 / (d * d),
            sigma_u: std::f64::consts::SQRT_2 * d,
            sigma_par: if alpha > 0.0 { (0.5 / alpha).sqrt() } else { f64::INFINITY },
            lo,
            hi,
            radial_marks,
            rho_floor,
        }
    }

    /// Γ(k, θ) + Γ(k, π − θ); `rho` is the radial density at k, used on the
    /// separable fast path.
    #[inline]
    fn gamma_fold(&self, rho: f64, k: f64, t: f64, s: f64, c: f64) -> f64 {
        if self.symmetric {
            let sc = s * c;
            2.0 * ANGULAR_NORM * rho * sc * sc
        } else {
            self.spectrum.gamma(k, t) + self.spectrum.gamma(k, PI - t)
        }
    }

    #[inline]
    fn kernel(&self, u: f64, v: f64) -> f64 {
        let d = u - v;
        (-d * d * self.inv4d2).exp() * bessel_i0e(u * v * self.inv2d2)
    }

    /// Polar angles in [0, π/2] at which k sinθ hits `center + j σ_u`.
    fn polar_marks(&self, center: f64, k: f64, offsets: &[f64; 5]) -> [f64; 5] {
        let mut out = [-1.0; 5];
        for (o, j) in out.iter_mut().zip(offsets) {
            let u = center + j * self.sigma_u;
            if u > 0.0 && u < k {
                *o = (u / k).asin();
            }
        }
        out
    }

    fn radial_width(&self) -> f64 {
        3.0 * self.spectrum.dk_ph
    }

    /// ∫₀^{π/2} dθ′ sinθ′ Γ_fold(k′, θ′) K(u, k′ sinθ′).
    fn inner(&self, u: f64, kp: f64, rho_p: f64, lv: &Levels) -> Nested {
        let edges = PolarEdges::new(&self.polar_marks(u, kp, &KERNEL_MARKS), POLAR_WIDTH, 1 << lv.0[DIM_TP]);
        let rule = kronrod15();
        let reach = CUTOFF * self.sigma_u;
        let mut acc = Nested::default();
        for w in edges.as_slice().windows(2) {
            // k′ sinθ′ is increasing on the quarter range.
            let (v0, v1) = (kp * w[0].sin(), kp * w[1].sin());
            if v0 > u + reach || v1 < u - reach {
                continue;
            }
            let half = 0.5 * (w[1] - w[0]);
            let mid = 0.5 * (w[0] + w[1]);
            let (mut sk, mut sg) = (0.0, 0.0);
            for &(x, wk, wg) in rule.iter() {
                let t = mid + half * x;
                let (s, c) = t.sin_cos();
                let v = s * self.gamma_fold(rho_p, kp, t, s, c) * self.kernel(u, kp * s);
                sk += wk * v;
                sg += wg * v;
            }
            // Innermost dimension: only the θ′ slot sees the Gauss weights.
            for v in acc.0.iter_mut() {
                *v += sk * half;
            }
            acc.0[1 + DIM_TP] += (sg - sk) * half;
        }
        acc
    }

    /// ∫₀^{π/2} dθ sinθ Γ_fold(k, θ) inner(k sinθ, k′).
    fn angular(&self, k: f64, rho: f64, kp: f64, rho_p: f64, lv: &Levels) -> Nested {
        let edges = PolarEdges::new(&self.polar_marks(kp, k, &EDGE_MARKS), POLAR_WIDTH, 1 << lv.0[DIM_T]);
        let rule = kronrod15();
        let mut acc = Nested::default();
        for w in edges.as_slice().windows(2) {
            let half = 0.5 * (w[1] - w[0]);
            let mid = 0.5 * (w[0] + w[1]);
            for &(x, wk, wg) in rule.iter() {
                let t = mid + half * x;
                let (s, c) = t.sin_cos();
                let a = s * self.gamma_fold(rho, k, t, s, c);
                if a == 0.0 {
                    continue;
                }
                let inner = self.inner(k * s, kp, rho_p, lv);
                acc.add(DIM_T, wk * half * a, wg * half * a, &inner);
            }
        }
        acc
    }

    /// Radial density (the filter's bound stands in for angular filters).
    #[inline]
    fn rho(&self, k: f64) -> f64 {
        if self.symmetric {
            self.spectrum.radial_density(k)
        } else {
            self.spectrum.g(k) * self.spectrum.n_f() * self.spectrum.filter_bound()
        }
    }

    /// ∫_{lo}^{k} dk′ k′² E(k, k′) angular(k, k′).
    fn radial_inner(&self, k: f64, rho: f64, lv: &Levels) -> Nested {
        let mut marks: Vec<f64> = self.radial_marks.clone();
        if self.sigma_par.is_finite() {
            marks.extend([1.5, 4.0, 8.0].iter().map(|j| k - j * self.sigma_par));
        }
        marks.extend([1.5, 4.0].iter().map(|j| k - j * self.sigma_u));
        let edges = panel_edges(self.lo, k, &marks, self.radial_width(), 1 << lv.0[DIM_KP]);
        let mut acc = Nested::default();
        for (kp, wk, wg) in kronrod_nodes(&edges) {
            let d = k - kp;
            let e = self.alpha * d * d;
            if e > EXP_CUTOFF {
                continue;
            }
            let rho_p = self.rho(kp);
            if kp * kp * rho_p < self.rho_floor {
                continue;
            }
            let f = kp * kp * (-e).exp();
            acc.add(DIM_KP, wk * f, wg * f, &self.angular(k, rho, kp, rho_p, lv));
        }
        acc
    }

    /// One full pass at the given refinement levels.
    pub(crate) fn evaluate(&self, lv: &Levels) -> Nested {
        let edges = panel_edges(self.lo, self.hi, &self.radial_marks, self.radial_width(), 1 << lv.0[DIM_K]);
        let nodes = kronrod_nodes(&edges);
        let parts: Vec<(f64, f64, Nested)> = nodes
            .par_iter()
            .map(|&(k, wk, wg)| {
                let rho = self.rho(k);
                if k * k * rho < self.rho_floor {
                    return (wk, wg, Nested::default());
                }
                (wk, wg, self.radial_inner(k, rho, lv).scale(k * k))
            })
            .collect();
        let mut total = Nested::default();
        for (wk, wg, p) in &parts {
            total.add(DIM_K, *wk, *wg, p);
        }
        // (2π)² from the azimuths, 2 from the k′ ≤ k triangle.
        total.scale(8.0 * PI * PI)
    }
}

/// Purity P_sc. Angle-separable spectra go through the transverse Hankel
/// transform, anything else through [`purity_sc_direct`].
pub fn purity_sc(beam: &BeamParams, spectrum: &SpectrumModel, quad: &QuadratureSpec) -> Result<f64> {
    quad.validate()?;
    if spectrum.is_angle_separable() {
        super::transform::purity_transform(beam, spectrum, quad).map(clamp_purity)
    } else {
        purity_sc_direct(beam, spectrum, quad)
    }
}

/// Purity P_sc by nested Gauss-Kronrod quadrature over (k, k′, θ, θ′).
///
/// The dimension with the largest embedded error share is refined until the
/// total estimate, or agreement with the previous pass, meets the tolerance.
pub fn purity_sc_direct(beam: &BeamParams, spectrum: &SpectrumModel, quad: &QuadratureSpec) -> Result<f64> {
    quad.validate()?;
    let kernel = PurityKernel::new(beam, spectrum, quad);
    let mut levels = Levels::default();
    let mut previous = f64::NAN;
    loop {
        let e = kernel.evaluate(&levels);
        let value = e.value();
        if !value.is_finite() {
            return Err(Error::Domain("purity integrand is not finite".into()));
        }
        let tol = quad.abs_tol.max(quad.rel_tol * value.abs());
        let agree = previous.is_finite() && (value - previous).abs() <= tol;
        if e.error() <= tol || agree {
            return Ok(clamp_purity(value));
        }
        log::debug!("purity at {levels:?}: {value} ± {:?}", e.errors());
        // Only the dimension with the largest share is refined per pass.
        let errors = e.errors();
        let worst = (0..4).max_by(|&a, &b| errors[a].total_cmp(&errors[b])).unwrap_or(0);
        let mut next = levels;
        next.0[worst] += 1;
        if next.0.iter().any(|&l| l > MAX_LEVEL) {
            return Err(Error::NonConvergence { estimate: value, previous, error: e.error(), evals: 0 });
        }
        levels = next;
        previous = value;
    }
}

/// Purities are clamped to (0, 1]; values above one are quadrature noise.
pub(crate) fn clamp_purity(p: f64) -> f64 {
    p.clamp(f64::MIN_POSITIVE, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::gauss_legendre;
    use std::f64::consts::TAU;

    fn fig2(dq_perp: f64, dk: f64) -> (BeamParams, SpectrumModel) {
        (BeamParams::new(200.0, dq_perp, TAU / 1.3).unwrap(), SpectrumModel::new(TAU / 0.5, dk).unwrap())
    }

    #[test]
    fn bessel_kernel_is_the_azimuthal_average() {
        let (beam, s) = fig2(0.4, 1.0);
        let quad = QuadratureSpec::default();
        let k = PurityKernel::new(&beam, &s, &quad);
        let rule = gauss_legendre(64);
        for (u, v) in [(0.0, 3.0), (1.0, 1.2), (5.0, 5.3), (12.0, 11.6), (0.3, 0.05)] {
            // Panels in φ keep the peak at φ = 0 resolved for large uv/Δ².
            let mut avg = 0.0;
            let n = 64;
            for p in 0..n {
                let (a, b) = (PI * p as f64 / n as f64, PI * (p + 1) as f64 / n as f64);
                avg += rule.integrate(a, b, |phi| (-(u * u + v * v - 2.0 * u * v * phi.cos()) * k.inv4d2).exp());
            }
            avg /= PI;
            let got = k.kernel(u, v);
            assert!((got - avg).abs() <= 1e-12 * avg.max(1e-300), "{u} {v}: {got} vs {avg}");
        }
    }

    #[test]
    fn generic_angular_path_matches_the_separable_one() {
        let (beam, s) = fig2(3.0, 0.3);
        let quad = QuadratureSpec::default();
        let fast = PurityKernel::new(&beam, &s, &quad);
        let mut slow = PurityKernel::new(&beam, &s, &quad);
        slow.symmetric = false;
        let lv = Levels::default();
        let (a, b) = (fast.evaluate(&lv).value(), slow.evaluate(&lv).value());
        assert!((a - b).abs() < 1e-12 * a, "{a} vs {b}");
    }

    #[test]
    fn separable_limit_is_one() {
        let beam = BeamParams::new(200.0, 1e5, 1e5).unwrap();
        let s = SpectrumModel::new(TAU / 0.5, 1.0).unwrap();
        let p = purity_sc(&beam, &s, &QuadratureSpec::default()).unwrap();
        assert!((p - 1.0).abs() < 1e-6, "{p}");
    }

    // Frozen 10⁶-sample Monte Carlo estimates (seed 7) of the Cartesian
    // double integral, with their standard errors.
    #[test]
    fn agrees_with_frozen_monte_carlo() {
        let quad = QuadratureSpec::default();
        for (dq, dk, mc, se) in
            [(30.0, 1.0, 9.296073e-1, 4.65e-5), (3.0, 0.3, 1.588299e-1, 2.62e-4), (100.0, 30.0, 1.962109e-1, 3.03e-4)]
        {
            let (beam, s) = fig2(dq, dk);
            let p = purity_sc(&beam, &s, &quad).unwrap();
            assert!((p - mc).abs() < 3.0 * se, "({dq}, {dk}): {p} vs {mc}");
        }
    }

    // Values of the four-fold scheme at its first pass, where its error
    // estimates are already far inside the tolerance.
    #[test]
    fn transform_route_matches_the_direct_scheme() {
        let quad = QuadratureSpec::default();
        for (dq, dk, direct) in [
            (100.0, 30.0, 0.1961080704482355),
            (3.0, 3.0, 0.11109439411876867),
            (0.1, 0.5, 2.832829736657872e-4),
            (0.1, 30.0, 4.3787037e-6),
            (3.0, 0.5, 0.15737886875130058),
            (100.0, 0.5, 0.9898436627930627),
        ] {
            let (beam, s) = fig2(dq, dk);
            let p = purity_sc(&beam, &s, &quad).unwrap();
            assert!((p - direct).abs() < 2e-6 * direct, "({dq}, {dk}): {p} vs {direct}");
        }
    }

    #[test]
    fn clamp_keeps_purity_in_range() {
        assert_eq!(clamp_purity(1.0 + 1e-9), 1.0);
        assert!(clamp_purity(-1e-20) > 0.0);
        assert_eq!(clamp_purity(0.25), 0.25);
    }
}
