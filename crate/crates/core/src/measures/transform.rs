//! Purity of angle-separable spectra through a transverse Hankel transform.
//!
//! Writing the transverse kernel exp(−|q⊥ − q⊥′|²/(4Δq⊥²)) as a Fourier
//! integral over a transverse displacement and doing the polar integrals
//! first turns the four-fold integral into
//!
//! P = ∫₀^∞ 2s e^{−s²} Q(s/Δq⊥) ds,
//! Q(x) = ∫∫ a_x(k) a_x(k′) exp(−α (k − k′)²) dk dk′,
//! a_x(k) = (15/2) k² ρ(k) b(xk),
//!
//! where b is the angular profile sin²θ cos²θ seen through J₀(z sinθ):
//! b(z) = ½ ∫₀^π sin³θ cos²θ J₀(z sinθ) dθ = (4/z³ − 9/z⁵) sin z + (9/z⁴ − 1/z²) cos z.
//!
//! The longitudinal factor is unfolded as a Gaussian average over a
//! frequency ω, Q = ∫ G(ω) |Φ(ω)|² dω with Φ(ω) = ∫ a_x(k) e^{iωk} dk.
//! Φ is band-limited in the sense that its power spectrum lives on
//! |k − k′| ≤ L (L the radial support), so a trapezoid rule with step
//! 2π/(L + √(40/α)) has aliasing below e^{−40}. The cost per Q is then
//! (number of radial nodes) × (number of frequencies), both small.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};
use std::f64::consts::{PI, TAU};

use crate::error::{Error, Result};
use crate::model::{BeamParams, SpectrumModel};
use crate::quadrature::{gauss_legendre, kronrod15, panel_edges, QuadratureSpec};

/// Upper end of the s integral; the weight 2s e^{−s²} is below e^{−42} beyond.
const S_MAX: f64 = 6.5;
/// Exponent at which the Gaussian frequency weight and the aliasing are cut.
const EXP_CUTOFF: f64 = 40.0;
/// Radial nodes per panel.
const RADIAL_ORDER: usize = 20;
const MAX_PANELS: usize = 4000;

/// b(z) = (4/z³ − 9/z⁵) sin z + (9/z⁴ − 1/z²) cos z, with b(0) = 2/15.
///
/// Below z = 2 the closed form cancels badly and the Taylor series is used.
pub fn angular_transform(z: f64) -> f64 {
    let z = z.abs();
    if z < 2.0 {
        angular_series(z)
    } else {
        angular_closed(z)
    }
}

fn angular_series(z: f64) -> f64 {
    let q = z * z;
    let mut term = 2.0 / 15.0;
    let mut sum = term;
    for m in 0..60 {
        let m = m as f64;
        term *= -(m + 2.0) / (2.0 * (m + 1.0) * (m + 1.0) * (2.0 * m + 7.0)) * q;
        sum += term;
        if term.abs() < 1e-18 {
            break;
        }
    }
    sum
}

fn angular_closed(z: f64) -> f64 {
    let (s, c) = z.sin_cos();
    let r = 1.0 / (z * z);
    (s * (4.0 - 9.0 * r) / z + c * (9.0 * r - 1.0)) * r
}

struct RadialRule {
    k: Vec<f64>,
    /// (15/2) w k² ρ(k).
    weight: Vec<f64>,
    /// e^{i h k}, the phase step between neighbouring frequencies.
    step: Vec<(f64, f64)>,
}

struct Transform<'a> {
    spectrum: &'a SpectrumModel,
    lo: f64,
    hi: f64,
    marks: Vec<f64>,
    /// Trapezoid weights h G(jh), j = 0..=J.
    freq_weights: Vec<f64>,
    h: f64,
    omega_max: f64,
    rules: HashMap<usize, RadialRule>,
}

impl<'a> Transform<'a> {
    fn new(beam: &BeamParams, spectrum: &'a SpectrumModel, quad: &QuadratureSpec) -> Self {
        let (lo, hi) = spectrum.radial_support(quad.truncation_sigmas);
        let len = hi - lo;
        let alpha = beam.longitudinal_alpha();
        let (h, freq_weights) = if alpha > 0.0 {
            let omega_max = (4.0 * EXP_CUTOFF * alpha).sqrt();
            let h = TAU / (len + (EXP_CUTOFF / alpha).sqrt());
            let n = (omega_max / h).ceil() as usize;
            let norm = h / (4.0 * PI * alpha).sqrt();
            let w = (0..=n)
                .map(|j| {
                    let om = j as f64 * h;
                    norm * (-om * om / (4.0 * alpha)).exp()
                })
                .collect();
            (h, w)
        } else {
            (0.0, vec![1.0])
        };
        let omega_max = h * (freq_weights.len() - 1) as f64;
        Transform {
            spectrum,
            lo,
            hi,
            marks: spectrum.radial_breakpoints(quad.truncation_sigmas),
            freq_weights,
            h,
            omega_max,
            rules: HashMap::new(),
        }
    }

    /// Panel count for Q(x), rounded up to m·2^e with m in 4..8 so that
    /// nearby x share a cached rule.
    fn panel_count(&self, x: f64) -> usize {
        // Oscillation of b(xk) e^{iωk} across the support, plus the spectral width.
        let freq = x + self.omega_max + 1.0 / self.spectrum.dk_ph;
        let n = ((self.hi - self.lo) * freq / 6.0).ceil().max(4.0) as usize;
        let e = usize::BITS - 1 - n.leading_zeros();
        let base = 1usize << e.saturating_sub(2);
        n.div_ceil(base) * base
    }

    fn rule(&mut self, panels: usize) -> &RadialRule {
        let (spectrum, lo, hi, h) = (self.spectrum, self.lo, self.hi, self.h);
        let marks = &self.marks;
        self.rules.entry(panels).or_insert_with(|| {
            let gl = gauss_legendre(RADIAL_ORDER);
            let edges = panel_edges(lo, hi, marks, (hi - lo) / panels as f64, 1);
            let mut rule = RadialRule { k: Vec::new(), weight: Vec::new(), step: Vec::new() };
            for w in edges.windows(2) {
                let (mid, half) = (0.5 * (w[0] + w[1]), 0.5 * (w[1] - w[0]));
                for (&t, &wt) in gl.nodes.iter().zip(&gl.weights) {
                    let k = mid + half * t;
                    let v = 7.5 * half * wt * k * k * spectrum.radial_density(k);
                    if v == 0.0 {
                        continue;
                    }
                    let (s, c) = (h * k).sin_cos();
                    rule.k.push(k);
                    rule.weight.push(v);
                    rule.step.push((c, s));
                }
            }
            rule
        })
    }

    /// Q(x) by the frequency trapezoid.
    fn q(&mut self, x: f64) -> f64 {
        let panels = self.panel_count(x);
        let fw = std::mem::take(&mut self.freq_weights);
        let rule = self.rule(panels);
        let a: Vec<f64> = rule.k.iter().zip(&rule.weight).map(|(&k, &w)| w * angular_transform(x * k)).collect();
        let phi0: f64 = a.iter().sum();
        let mut total = fw[0] * phi0 * phi0;
        if fw.len() > 1 {
            let mut phase: Vec<(f64, f64)> = rule.step.clone();
            for (j, &g) in fw.iter().enumerate().skip(1) {
                let (mut re, mut im) = (0.0, 0.0);
                for (p, &an) in phase.iter().zip(&a) {
                    re += an * p.0;
                    im += an * p.1;
                }
                total += 2.0 * g * (re * re + im * im);
                if j + 1 < fw.len() {
                    for (p, s) in phase.iter_mut().zip(&rule.step) {
                        *p = (p.0 * s.0 - p.1 * s.1, p.0 * s.1 + p.1 * s.0);
                    }
                }
            }
        }
        self.freq_weights = fw;
        total
    }
}

struct Panel {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn gk15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> Panel {
    let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
    let (mut k, mut g) = (0.0, 0.0);
    for &(x, wk, wg) in kronrod15() {
        let v = f(mid + half * x);
        k += wk * v;
        g += wg * v;
    }
    Panel { a, b, value: k * half, error: ((k - g) * half).abs() }
}

/// Initial s panels: about one oscillation of Q per panel while the
/// radial shell is still resolved (x ≲ 8/Δk), 0.5 wide beyond.
fn initial_edges(dq_perp: f64, spectrum: &SpectrumModel) -> Vec<f64> {
    let fine_end = (8.0 * dq_perp / spectrum.dk_ph).min(S_MAX);
    let fine = (TAU * dq_perp / spectrum.k_c.max(spectrum.dk_ph)).max(1e-3);
    let mut edges = panel_edges(0.0, fine_end, &[], fine, 1);
    if fine_end < S_MAX {
        edges.pop();
        edges.extend(panel_edges(fine_end, S_MAX, &[], 0.5, 1));
    }
    edges.truncate(MAX_PANELS / 2);
    if *edges.last().unwrap_or(&0.0) < S_MAX {
        edges.push(S_MAX);
    }
    edges
}

/// P_sc for an angle-separable spectrum.
pub(crate) fn purity_transform(beam: &BeamParams, spectrum: &SpectrumModel, quad: &QuadratureSpec) -> Result<f64> {
    debug_assert!(spectrum.is_angle_separable());
    let d = beam.dq_perp;
    let mut t = Transform::new(beam, spectrum, quad);
    let mut f = |s: f64| 2.0 * s * (-s * s).exp() * t.q(s / d);
    let mut heap: BinaryHeap<Panel> = initial_edges(d, spectrum).windows(2).map(|w| gk15(&mut f, w[0], w[1])).collect();
    loop {
        let (value, error) = heap.iter().fold((0.0, 0.0), |(v, e), p| (v + p.value, e + p.error));
        if !value.is_finite() {
            return Err(Error::Domain("purity integrand is not finite".into()));
        }
        if error <= quad.abs_tol.max(quad.rel_tol * value.abs()) {
            return Ok(value);
        }
        if heap.len() >= MAX_PANELS {
            return Err(Error::NonConvergence { estimate: value, previous: f64::NAN, error, evals: 15 * heap.len() });
        }
        let worst = heap.pop().expect("panels are never empty");
        let m = 0.5 * (worst.a + worst.b);
        heap.push(gk15(&mut f, worst.a, m));
        heap.push(gk15(&mut f, m, worst.b));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// J₀ from its integral representation, then the θ integral, both by
    /// panelled Gauss-Legendre.
    fn b_direct(z: f64) -> f64 {
        let gl = gauss_legendre(40);
        let j0 = |y: f64| {
            let mut s = 0.0;
            for p in 0..16 {
                let (a, b) = (PI * p as f64 / 16.0, PI * (p + 1) as f64 / 16.0);
                s += gl.integrate(a, b, |phi| (y * phi.sin()).cos());
            }
            s / PI
        };
        let mut s = 0.0;
        for p in 0..32 {
            let (a, b) = (PI * p as f64 / 32.0, PI * (p + 1) as f64 / 32.0);
            s += gl.integrate(a, b, |th| {
                let (sn, cs) = th.sin_cos();
                sn.powi(3) * cs * cs * j0(z * sn)
            });
        }
        0.5 * s
    }

    #[test]
    fn angular_transform_matches_the_polar_integral() {
        for z in [0.0, 0.3, 1.0, 1.999, 2.0, 2.5, 7.0, 20.0, 60.0] {
            let (got, want) = (angular_transform(z), b_direct(z));
            assert!((got - want).abs() < 1e-13, "{z}: {got} vs {want}");
        }
    }

    #[test]
    fn series_and_closed_form_meet() {
        for z in [1.5, 1.9, 2.0, 2.5, 3.0] {
            let (a, b) = (angular_series(z), angular_closed(z));
            assert!((a - b).abs() < 1e-14, "{z}: {a} vs {b}");
        }
        assert!((angular_transform(0.0) - 2.0 / 15.0).abs() < 1e-17);
    }

    #[test]
    fn q_at_zero_is_the_longitudinal_overlap() {
        // b(0) = 2/15 turns a into k²ρ, so Q(0) = ∫∫ k²ρ k′²ρ′ e^{−α(k−k′)²}.
        let beam = BeamParams::new(200.0, 3.0, TAU / 1.3).unwrap();
        let s = SpectrumModel::new(TAU / 0.5, 1.0).unwrap();
        let quad = QuadratureSpec::default();
        let mut t = Transform::new(&beam, &s, &quad);
        let q0 = t.q(0.0);
        let alpha = beam.longitudinal_alpha();
        let (lo, hi) = s.radial_support(8.0);
        let gl = gauss_legendre(20);
        let edges = panel_edges(lo, hi, &[], 0.5, 1);
        let mut direct = 0.0;
        for u in edges.windows(2) {
            for v in edges.windows(2) {
                direct += gl.integrate(u[0], u[1], |k| {
                    gl.integrate(v[0], v[1], |kp| {
                        k * k * s.g(k) * kp * kp * s.g(kp) * (-alpha * (k - kp) * (k - kp)).exp()
                    })
                });
            }
        }
        assert!((q0 - direct).abs() < 1e-12 * direct, "{q0} vs {direct}");
    }
}
