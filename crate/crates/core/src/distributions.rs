//! Joint probability distributions along x and the photon's transverse
//! wavevector marginal G(k_x) = ∫ dk_y dk_z Γ(k).
//!
//! Both 2D integrals over the (k_y, k_z) plane run in polar coordinates
//! (r, ψ) with k_y = r sinψ, k_z = r cosψ, so that |k| = √(k_x² + r²)
//! depends on r alone and the spectral shell maps onto a radial interval.

use std::f64::consts::{FRAC_PI_2, PI};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::{rel_pos_variance_closed, rel_pos_variance_quadrature};
use crate::model::{psi_1d, BeamParams, PhaseModel, SpectrumModel, ANGULAR_NORM};
use crate::quadrature::{gauss_legendre, integrate_1d_with_breaks, kronrod_nodes, panel_edges, QuadratureSpec};

/// What a [`JointGrid`] holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridKind {
    /// P(x_el, x_ph): axes in μm, density in μm⁻².
    Position,
    /// P(q_x, k_x): axes in μm⁻¹, density in μm².
    Momentum,
}

/// Density sampled on a tensor grid, row-major in (axis1, axis2).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JointGrid {
    pub kind: GridKind,
    pub axis1: Vec<f64>,
    pub axis2: Vec<f64>,
    pub density: Vec<f64>,
}

impl JointGrid {
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.density[i * self.axis2.len() + j]
    }

    pub fn axis_names(&self) -> (&'static str, &'static str) {
        match self.kind {
            GridKind::Position => ("x_el_um", "x_ph_um"),
            GridKind::Momentum => ("qx_el_um_inv", "kx_ph_um_inv"),
        }
    }

    /// Trapezoidal double integral.
    pub fn mass(&self) -> f64 {
        self.moment(|_, _| 1.0)
    }

    /// Trapezoidal ∫∫ f(a1, a2) P da1 da2.
    pub fn moment<F: Fn(f64, f64) -> f64>(&self, f: F) -> f64 {
        let w1 = trapezoid_weights(&self.axis1);
        let w2 = trapezoid_weights(&self.axis2);
        let mut sum = 0.0;
        for (i, (&a, &wa)) in self.axis1.iter().zip(&w1).enumerate() {
            let row = &self.density[i * self.axis2.len()..(i + 1) * self.axis2.len()];
            let mut r = 0.0;
            for ((&b, &wb), &p) in self.axis2.iter().zip(&w2).zip(row) {
                r += wb * p * f(a, b);
            }
            sum += wa * r;
        }
        sum
    }

    /// Normalized mean and variance of the grid's natural combination:
    /// x_el − x_ph for positions, q_x + k_x for wavevectors.
    pub fn combination_moments(&self) -> (f64, f64) {
        let comb = |a: f64, b: f64| match self.kind {
            GridKind::Position => a - b,
            GridKind::Momentum => a + b,
        };
        let m0 = self.mass();
        let m1 = self.moment(comb) / m0;
        let m2 = self.moment(|a, b| (comb(a, b) - m1).powi(2)) / m0;
        (m1, m2)
    }
}

/// Trapezoid weights of a sorted axis.
pub fn trapezoid_weights(axis: &[f64]) -> Vec<f64> {
    let n = axis.len();
    let mut w = vec![0.0; n];
    for i in 1..n {
        let h = 0.5 * (axis[i] - axis[i - 1]);
        w[i - 1] += h;
        w[i] += h;
    }
    w
}

/// Grid options for the distributions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridSpec {
    /// Points on the photon k_x axis.
    pub n: usize,
    /// Largest number of points on any other axis.
    pub max_points: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec { n: 512, max_points: 8193 }
    }
}

impl GridSpec {
    fn validate(&self) -> Result<()> {
        if self.n < 16 || self.max_points < 16 {
            return Err(Error::Resolution(format!(
                "grids need at least 16 points per axis (n = {}, max_points = {})",
                self.n, self.max_points
            )));
        }
        Ok(())
    }
}

/// Uniform k_x axis over ±(upper edge of the radial support).
pub fn kx_axis(spectrum: &SpectrumModel, n: usize, quad: &QuadratureSpec) -> Vec<f64> {
    let (_, hi) = spectrum.radial_support(quad.truncation_sigmas);
    mirrored(hi, n)
}

/// Uniform axis over ±`half` that is exactly mirror-symmetric, so that ±x
/// share one |x|.
fn mirrored(half: f64, n: usize) -> Vec<f64> {
    let mut axis = uniform(-half, half, n);
    for i in 0..n / 2 {
        axis[n - 1 - i] = -axis[i];
    }
    if n % 2 == 1 {
        axis[n / 2] = 0.0;
    }
    axis
}

fn uniform(a: f64, b: f64, n: usize) -> Vec<f64> {
    let h = (b - a) / (n - 1) as f64;
    (0..n).map(|i| if i == n - 1 { b } else { a + h * i as f64 }).collect()
}

/// Γ at (k_x, r sinψ, r cosψ).
#[inline]
fn gamma_polar(spectrum: &SpectrumModel, kx: f64, r: f64, psi: f64) -> f64 {
    let (s, c) = psi.sin_cos();
    let (ky, kz) = (r * s, r * c);
    let k = (kx * kx + r * r).sqrt();
    spectrum.gamma(k, (kx * kx + ky * ky).sqrt().atan2(kz))
}

/// r at which |k| = k on the plane of fixed k_x (0 inside the shell's hole).
#[inline]
fn radius_at(k: f64, kx: f64) -> f64 {
    (k * k - kx * kx).max(0.0).sqrt()
}

/// Radial marks on the (k_y, k_z) plane for the spectral shell.
fn shell_marks(spectrum: &SpectrumModel, kx: f64, quad: &QuadratureSpec, offsets: &[f64]) -> Vec<f64> {
    let mut ks: Vec<f64> = offsets.iter().map(|j| spectrum.k_c + j * spectrum.dk_ph).collect();
    ks.extend(spectrum.radial_breakpoints(quad.truncation_sigmas));
    ks.into_iter().filter(|&k| k > kx.abs()).map(|k| radius_at(k, kx)).collect()
}

/// Photon transverse marginal G(k_x) = ∫ dk_y dk_z Γ(k_x, k_y, k_z) in μm.
pub fn photon_marginal_kx(spectrum: &SpectrumModel, kx: f64, quad: &QuadratureSpec) -> Result<f64> {
    quad.validate()?;
    let (lo, hi) = spectrum.radial_support(quad.truncation_sigmas);
    let ax = kx.abs();
    if ax >= hi {
        return Ok(0.0);
    }
    let r_lo = radius_at(lo.max(ax), kx);
    let r_hi = radius_at(hi, kx);
    let mut pts = vec![r_lo];
    pts.extend(
        shell_marks(spectrum, kx, quad, &[-4.0, -2.0, -1.0, 0.0, 1.0, 2.0, 4.0])
            .into_iter()
            .filter(|&r| r > r_lo && r < r_hi),
    );
    pts.push(r_hi);
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    let inner_quad = QuadratureSpec { rel_tol: (quad.rel_tol * 1e-2).max(1e-13), ..*quad };
    if spectrum.is_angle_separable() {
        // The ring integrand is C ρ(k) (k_x² + r² sin²ψ) r² cos²ψ / k⁴, a
        // trigonometric polynomial in ψ; GL-16 per quarter is exact to rounding.
        let rule = gauss_legendre(16);
        let kx2 = kx * kx;
        let outer = integrate_1d_with_breaks(
            |r| {
                let k2 = kx2 + r * r;
                let rho = spectrum.radial_density(k2.sqrt());
                if rho == 0.0 {
                    return 0.0;
                }
                let ring = rule.integrate(0.0, FRAC_PI_2, |psi| {
                    let (s, c) = psi.sin_cos();
                    (kx2 + r * r * s * s) * c * c
                });
                4.0 * ANGULAR_NORM * rho * r * r * r * ring / (k2 * k2)
            },
            &pts,
            quad,
        )?;
        return Ok(outer.value);
    }
    let mut failure = None;
    let outer = integrate_1d_with_breaks(
        |r| {
            if failure.is_some() {
                return 0.0;
            }
            // Γ is even in k_y, so ψ ∈ [0, π] covers half the circle.
            match integrate_1d_with_breaks(|psi| gamma_polar(spectrum, kx, r, psi), &[0.0, FRAC_PI_2, PI], &inner_quad)
            {
                Ok(v) => 2.0 * r * v.value,
                Err(e) => {
                    failure = Some(e);
                    0.0
                }
            }
        },
        &pts,
        quad,
    )?;
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(outer.value)
}

/// G on a set of points; the evenness in k_x is used to halve the work.
pub fn photon_marginal(spectrum: &SpectrumModel, kx: &[f64], quad: &QuadratureSpec) -> Result<Vec<f64>> {
    let mut mags: Vec<f64> = kx.iter().map(|k| k.abs()).collect();
    mags.sort_by(f64::total_cmp);
    mags.dedup();
    let values: Vec<f64> = mags.par_iter().map(|&k| photon_marginal_kx(spectrum, k, quad)).collect::<Result<_>>()?;
    Ok(kx
        .iter()
        .map(|k| {
            let i = mags.partition_point(|&m| m < k.abs());
            values[i]
        })
        .collect())
}

/// Location k_c′ > 0 of the marginal's peak, from a scan refined by
/// golden-section search.
pub fn marginal_peak(spectrum: &SpectrumModel, quad: &QuadratureSpec) -> Result<f64> {
    let (_, hi) = spectrum.radial_support(quad.truncation_sigmas);
    let n = 257;
    let xs = uniform(0.0, hi, n);
    let g = photon_marginal(spectrum, &xs, quad)?;
    let best = (0..n).max_by(|&a, &b| g[a].total_cmp(&g[b])).unwrap_or(0);
    let (mut a, mut b) = (xs[best.saturating_sub(1)], xs[(best + 1).min(n - 1)]);
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    let f = |x: f64| photon_marginal_kx(spectrum, x, quad);
    let (mut c, mut d) = (b - phi * (b - a), a + phi * (b - a));
    let (mut fc, mut fd) = (f(c)?, f(d)?);
    for _ in 0..60 {
        if (b - a).abs() <= 1e-9 * hi {
            break;
        }
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = f(d)?;
        }
    }
    Ok(0.5 * (a + b))
}

/// P(q_x, k_x) = |ψ_ini^(x)(q_x + k_x)|² G(k_x) in μm².
pub fn joint_momentum(
    beam: &BeamParams,
    spectrum: &SpectrumModel,
    qx: f64,
    kx: f64,
    quad: &QuadratureSpec,
) -> Result<f64> {
    let psi = psi_1d(qx + kx, beam.dq_perp);
    Ok(psi * psi * photon_marginal_kx(spectrum, kx, quad)?)
}

/// P(q_x, k_x) on a grid: k_x on the uniform axis of `spec.n` points and q_x
/// spaced at Δq⊥/8 over the range the Gaussian factor can reach.
pub fn joint_momentum_grid(
    beam: &BeamParams,
    spectrum: &SpectrumModel,
    spec: &GridSpec,
    quad: &QuadratureSpec,
) -> Result<JointGrid> {
    spec.validate()?;
    let kx = kx_axis(spectrum, spec.n, quad);
    let kmax = kx[kx.len() - 1];
    let d = beam.dq_perp;
    let qmax = kmax + quad.truncation_sigmas * d;
    let mut nq = (2.0 * qmax / (d / 8.0)).ceil() as usize + 1;
    if nq > spec.max_points {
        log::warn!("momentum grid capped at {} q points; Δq⊥ is under-resolved", spec.max_points);
        nq = spec.max_points;
    }
    let qx = mirrored(qmax, nq);
    let g = photon_marginal(spectrum, &kx, quad)?;
    let mut density = Vec::with_capacity(nq * kx.len());
    for &q in &qx {
        for (&k, &gk) in kx.iter().zip(&g) {
            let psi = psi_1d(q + k, d);
            density.push(psi * psi * gk);
        }
    }
    Ok(JointGrid { kind: GridKind::Momentum, axis1: qx, axis2: kx, density })
}

/// M(k_x, k_x′) = ∫ dk_y dk_z √(Γ(k)Γ(k′)) exp(−c²(k − k′)²/(8 v_z² Δq∥²)),
/// with k = (k_x, k_y, k_z) and k′ = (k_x′, k_y, k_z).
pub fn position_kernel(beam: &BeamParams, spectrum: &SpectrumModel, kx: f64, kxp: f64, quad: &QuadratureSpec) -> f64 {
    let (lo, hi) = spectrum.radial_support(quad.truncation_sigmas);
    let (a, b) = (kx.abs(), kxp.abs());
    let r_lo = radius_at(lo, a).max(radius_at(lo, b));
    let r_hi = if a >= hi || b >= hi { 0.0 } else { radius_at(hi, a).min(radius_at(hi, b)) };
    if r_hi <= r_lo {
        return 0.0;
    }
    let offsets = [-4.0, -1.5, 0.0, 1.5, 4.0];
    let mut marks = shell_marks(spectrum, a, quad, &offsets);
    marks.extend(shell_marks(spectrum, b, quad, &offsets));
    let edges = panel_edges(r_lo, r_hi, &marks, 2.0 * spectrum.dk_ph, 1);
    let half_alpha = 0.5 * beam.longitudinal_alpha();
    let separable = spectrum.is_angle_separable();
    let rule = gauss_legendre(32);
    let mut sum = 0.0;
    for (r, wk, _) in kronrod_nodes(&edges) {
        let k = (a * a + r * r).sqrt();
        let kp = (b * b + r * r).sqrt();
        let dk = k - kp;
        let e = (-half_alpha * dk * dk).exp();
        let ring = if separable {
            let amp = (spectrum.radial_density(k) * spectrum.radial_density(kp)).sqrt();
            if amp == 0.0 {
                continue;
            }
            // Quarter circle by the k_y and k_z parities of Γ.
            let phi = rule.integrate(0.0, FRAC_PI_2, |psi| {
                let (s, c) = psi.sin_cos();
                let rs2 = r * r * s * s;
                ((a * a + rs2) * (b * b + rs2)).sqrt() * c * c
            });
            4.0 * ANGULAR_NORM * amp * r * r * phi / (k * k * kp * kp)
        } else {
            2.0 * rule
                .integrate(0.0, PI, |psi| (gamma_polar(spectrum, a, r, psi) * gamma_polar(spectrum, b, r, psi)).sqrt())
        };
        sum += wk * r * e * ring;
    }
    sum
}

/// P(x_el, x_ph) with the photon phase removed:
/// (Δq⊥/√(2π³)) e^{−2Δq⊥² x_el²} ∫∫ dk_x dk_x′ M(k_x, k_x′) cos((k_x − k_x′)(x_el − x_ph)).
pub fn joint_position(
    beam: &BeamParams,
    spectrum: &SpectrumModel,
    spec: &GridSpec,
    quad: &QuadratureSpec,
) -> Result<JointGrid> {
    spec.validate()?;
    let kx = kx_axis(spectrum, spec.n, quad);
    let n = kx.len();
    let w = trapezoid_weights(&kx);
    let kmax = kx[n - 1];
    let hk = kx[1] - kx[0];

    // M depends on |k_x| and |k_x′| only, and the axis is symmetric.
    let half: Vec<usize> = (0..n).filter(|&i| kx[i] >= -1e-12 * kmax).collect();
    let mags: Vec<f64> = half.iter().map(|&i| kx[i].abs()).collect();
    let m = mags.len();
    let rows: Vec<Vec<f64>> = (0..m)
        .into_par_iter()
        .map(|i| (i..m).map(|j| position_kernel(beam, spectrum, mags[i], mags[j], quad)).collect())
        .collect();
    let mut mh = vec![0.0; m * m];
    for i in 0..m {
        for j in i..m {
            mh[i * m + j] = rows[i][j - i];
            mh[j * m + i] = rows[i][j - i];
        }
    }
    // Spot check of the kernel symmetry with the arguments swapped.
    let scale = mh.iter().fold(0.0_f64, |a, &b| a.max(b.abs()));
    for i in (0..m).step_by(31) {
        for j in (i + 1..m).step_by(37) {
            let swapped = position_kernel(beam, spectrum, mags[j], mags[i], quad);
            let diff = (swapped - mh[i * m + j]).abs();
            if diff > 1e-10 * scale.max(f64::MIN_POSITIVE) {
                return Err(Error::Consistency(format!(
                    "M({}, {}) is not symmetric: difference {diff:e}",
                    mags[i], mags[j]
                )));
            }
        }
    }
    let index_of = |i: usize| -> usize {
        let a = kx[i].abs();
        mags.iter().position(|&x| (x - a).abs() <= 1e-9 * kmax.max(1.0)).expect("axis is symmetric")
    };
    let map: Vec<usize> = (0..n).map(index_of).collect();
    let mut wm = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            wm[i * n + j] = w[i] * w[j] * mh[map[i] * m + map[j]];
        }
    }

    // Axes: one spacing for both so that x_el − x_ph lies on a lattice.
    let d = beam.dq_perp;
    let sigma_el = 0.5 / d;
    let zero = PhaseModel::Zero;
    let var_u = rel_pos_variance_closed(beam, spectrum, &zero)
        .or_else(|_| rel_pos_variance_quadrature(beam, spectrum, &zero, quad))
        .ok()
        .filter(|v| v.is_finite() && *v > 0.0);
    let u_reach = match var_u {
        Some(v) => (7.0 * v.sqrt()).min(PI / hk),
        None => PI / hk,
    };
    let mut h = (sigma_el / 3.0).min(PI / (4.0 * kmax));
    let x_el_reach = 4.5 * sigma_el;
    let x_ph_reach = x_el_reach + u_reach;
    let mut n_ph = 2 * (x_ph_reach / h).ceil() as usize + 1;
    if n_ph > spec.max_points {
        h = 2.0 * x_ph_reach / (spec.max_points - 1) as f64;
        n_ph = spec.max_points;
        log::warn!("position grid capped at {n_ph} points; spacing raised to {h}");
    }
    let half_el = (x_el_reach / h).ceil() as i64;
    let half_ph = (n_ph as i64 - 1) / 2;
    let x_el: Vec<f64> = (-half_el..=half_el).map(|i| i as f64 * h).collect();
    let x_ph: Vec<f64> = (-half_ph..=half_ph).map(|i| i as f64 * h).collect();

    // T(u) on the lattice u = l h by direct summation.
    let lmax = half_el + half_ph;
    let lags: Vec<i64> = (-lmax..=lmax).collect();
    let t: Vec<f64> = lags
        .par_iter()
        .map(|&l| {
            let u = l as f64 * h;
            let (s, c): (Vec<f64>, Vec<f64>) = kx.iter().map(|&k| (k * u).sin_cos()).unzip();
            let mut acc = 0.0;
            for i in 0..n {
                let row = &wm[i * n..(i + 1) * n];
                let (mut rc, mut rs) = (0.0, 0.0);
                for j in 0..n {
                    rc += row[j] * c[j];
                    rs += row[j] * s[j];
                }
                acc += c[i] * rc + s[i] * rs;
            }
            acc
        })
        .collect();
    let pref = d / (2.0 * PI.powi(3)).sqrt();
    let mut density = Vec::with_capacity(x_el.len() * x_ph.len());
    for (i, &xe) in x_el.iter().enumerate() {
        let g = pref * (-2.0 * d * d * xe * xe).exp();
        for (j, _) in x_ph.iter().enumerate() {
            let l = (i as i64 - half_el) - (j as i64 - half_ph);
            let mut v = g * t[(l + lmax) as usize];
            // Quadrature noise may dip below zero; anything larger is a bug.
            if v < 0.0 {
                if v < -1e-9 {
                    return Err(Error::Consistency(format!("negative position density {v:e} at lag {l}")));
                }
                v = 0.0;
            }
            density.push(v);
        }
    }
    Ok(JointGrid { kind: GridKind::Position, axis1: x_el, axis2: x_ph, density })
}

/// Δx range covered by the transform of an `n`-point k_x axis.
pub fn reciprocal_reach(spectrum: &SpectrumModel, n: usize, quad: &QuadratureSpec) -> f64 {
    let kx = kx_axis(spectrum, n, quad);
    PI / (kx[1] - kx[0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::TAU;

    fn fig5(l_perp: f64) -> (BeamParams, SpectrumModel) {
        (BeamParams::from_coherence_lengths(200.0, l_perp, 1.3).unwrap(), SpectrumModel::new(TAU / 0.5, 0.3).unwrap())
    }

    /// G(k_x) on a Cartesian (k_y, k_z) quarter plane with GL-8 panels one
    /// spectral width across.
    fn cartesian_marginal(spectrum: &SpectrumModel, kx: f64) -> f64 {
        let rule = gauss_legendre(8);
        let h = spectrum.dk_ph;
        let reach = spectrum.k_c + 9.0 * h;
        let n = (reach / h).ceil() as usize;
        let mut total = 0.0;
        for i in 0..n {
            for j in 0..n {
                let (ya, za) = (i as f64 * h, j as f64 * h);
                if kx * kx + ya * ya + za * za > reach * reach {
                    continue;
                }
                total +=
                    rule.integrate(ya, ya + h, |ky| rule.integrate(za, za + h, |kz| spectrum.gamma_vec([kx, ky, kz])));
            }
        }
        4.0 * total
    }

    #[test]
    fn marginal_matches_cartesian_quadrature() {
        let quad = QuadratureSpec::default();
        let s = SpectrumModel::new(12.566, 0.7).unwrap();
        for kx in [0.0, 3.0, 7.25, 11.0, 12.9] {
            let polar = photon_marginal_kx(&s, kx, &quad).unwrap();
            let cart = cartesian_marginal(&s, kx);
            assert!((polar - cart).abs() < 1e-9 * cart, "{kx}: {polar} vs {cart}");
        }
    }

    #[test]
    fn generic_marginal_path_matches_the_separable_one() {
        let quad = QuadratureSpec::default();
        let s = SpectrumModel::new(12.566, 0.7).unwrap();
        // Weight one, declared angular: same Γ through the generic path.
        let flat = crate::model::CustomFilter::new("flat", 1.0, false, vec![], |_, _| 1.0);
        let f = crate::model::apply_filter(&s, crate::model::FilterWeight::Custom(flat), &quad).unwrap();
        assert!(!f.is_angle_separable());
        for kx in [0.0, 5.0, 12.0] {
            let a = photon_marginal_kx(&s, kx, &quad).unwrap();
            let b = photon_marginal_kx(&f, kx, &quad).unwrap();
            assert!((a - b).abs() < 1e-9 * a, "{kx}: {a} vs {b}");
        }
    }

    #[test]
    fn marginal_is_normalized_and_even() {
        let quad = QuadratureSpec::default();
        let s = SpectrumModel::new(12.566, 1.0).unwrap();
        let kx = kx_axis(&s, 301, &quad);
        let g = photon_marginal(&s, &kx, &quad).unwrap();
        let mass: f64 = trapezoid_weights(&kx).iter().zip(&g).map(|(w, v)| w * v).sum();
        assert!((mass - 1.0).abs() < 1e-6, "{mass}");
        for i in 0..kx.len() {
            assert_eq!(g[i], g[kx.len() - 1 - i]);
        }
        assert_eq!(photon_marginal_kx(&s, -4.2, &quad).unwrap(), photon_marginal_kx(&s, 4.2, &quad).unwrap());
    }

    #[test]
    fn marginal_is_bimodal_at_fig5_width() {
        let quad = QuadratureSpec::default();
        let (_, s) = fig5(1.5);
        let peak = marginal_peak(&s, &quad).unwrap();
        assert!(peak > 0.0 && peak < s.k_c);
        // Golden-section maximum of the 1D radial formula, frozen.
        assert!((peak - 7.2448).abs() < 1e-3, "{peak}");
        let g0 = photon_marginal_kx(&s, 0.0, &quad).unwrap();
        let gp = photon_marginal_kx(&s, peak, &quad).unwrap();
        // G(0)/G(k_c′) = 3/4 in the narrow-shell limit.
        assert!(gp > 1.25 * g0, "{gp} vs {g0}");
    }

    #[test]
    fn momentum_grid_has_two_ridges() {
        let quad = QuadratureSpec::default();
        let (beam, s) = fig5(1.5);
        let grid = joint_momentum_grid(&beam, &s, &GridSpec { n: 129, ..Default::default() }, &quad).unwrap();
        let nk = grid.axis2.len();
        let col: Vec<f64> = (0..nk).map(|j| (0..grid.axis1.len()).map(|i| grid.at(i, j)).sum()).collect();
        let best = (0..nk).max_by(|&a, &b| col[a].total_cmp(&col[b])).unwrap();
        let mirror = nk - 1 - best;
        assert!((col[best] - col[mirror]).abs() <= 1e-12 * col[best]);
        assert!(grid.axis2[best].abs() > 0.3 * s.k_c && grid.axis2[best].abs() < s.k_c);
        assert!(col[nk / 2] < 0.8 * col[best]);
        // Parity of the density.
        let nq = grid.axis1.len();
        for (i, j) in [(3, 5), (nq / 2, 17), (nq / 3, nk / 2)] {
            assert!((grid.at(i, j) - grid.at(nq - 1 - i, nk - 1 - j)).abs() <= 1e-15 * grid.at(i, j).max(1e-300));
        }
    }

    #[test]
    fn joint_momentum_parity() {
        let quad = QuadratureSpec::default();
        let (beam, s) = fig5(1.5);
        for (q, k) in [(1.0, -7.0), (-3.5, 2.0), (0.0, 12.0)] {
            let a = joint_momentum(&beam, &s, q, k, &quad).unwrap();
            let b = joint_momentum(&beam, &s, -q, -k, &quad).unwrap();
            assert_eq!(a, b);
        }
    }

    /// M(k_x, k_x′) on a Cartesian quarter plane.
    fn cartesian_kernel(beam: &BeamParams, s: &SpectrumModel, kx: f64, kxp: f64) -> f64 {
        let rule = gauss_legendre(8);
        let h = s.dk_ph;
        let reach = s.k_c + 9.0 * h;
        let n = (reach / h).ceil() as usize;
        let half_alpha = 0.5 * beam.longitudinal_alpha();
        let mut total = 0.0;
        for i in 0..n {
            for j in 0..n {
                let (ya, za) = (i as f64 * h, j as f64 * h);
                total += rule.integrate(ya, ya + h, |ky| {
                    rule.integrate(za, za + h, |kz| {
                        let k = (kx * kx + ky * ky + kz * kz).sqrt();
                        let kp = (kxp * kxp + ky * ky + kz * kz).sqrt();
                        (s.gamma_vec([kx, ky, kz]) * s.gamma_vec([kxp, ky, kz])).sqrt()
                            * (-half_alpha * (k - kp).powi(2)).exp()
                    })
                });
            }
        }
        4.0 * total
    }

    #[test]
    fn position_kernel_matches_cartesian_quadrature() {
        let quad = QuadratureSpec::default();
        let beam = BeamParams::from_coherence_lengths(200.0, 1.5, 1.3).unwrap();
        let s = SpectrumModel::new(12.566, 0.7).unwrap();
        for (a, b) in [(0.0, 0.0), (2.0, 2.3), (7.0, -7.2), (5.0, 9.0)] {
            let m = position_kernel(&beam, &s, a, b, &quad);
            let c = cartesian_kernel(&beam, &s, a, b);
            assert!((m - c).abs() < 1e-8 * c.max(1e-12), "({a}, {b}): {m} vs {c}");
        }
    }

    fn moments(grid: &JointGrid) -> (f64, f64, f64) {
        let m = grid.mass();
        let var = |f: &dyn Fn(f64, f64) -> f64| grid.moment(|a, b| f(a, b).powi(2)) / m;
        (var(&|a, _| a), var(&|_, b| b), var(&|a, b| a - b))
    }

    #[test]
    fn position_grid_in_regimes_a_and_b() {
        let quad = QuadratureSpec::default();
        for l in [20.0, 1.5] {
            let (beam, s) = fig5(l);
            let grid = joint_position(&beam, &s, &GridSpec::default(), &quad).unwrap();
            assert!((grid.mass() - 1.0).abs() < 0.01, "{}", grid.mass());
            assert!(grid.density.iter().all(|&p| p >= 0.0));
            let (mean, var) = grid.combination_moments();
            let closed = rel_pos_variance_closed(&beam, &s, &PhaseModel::Zero).unwrap();
            assert!(mean.abs() < 1e-12, "{mean}");
            assert!((var / closed - 1.0).abs() < 0.02, "L = {l}: {var} vs {closed}");
            let (n1, n2) = (grid.axis1.len(), grid.axis2.len());
            for (i, j) in [(0, 0), (n1 / 3, n2 / 2), (n1 / 2 + 1, n2 / 5)] {
                let (p, q) = (grid.at(i, j), grid.at(n1 - 1 - i, n2 - 1 - j));
                assert!((p - q).abs() <= 1e-12 * p.max(1e-300), "{p} vs {q}");
            }
        }
    }

    #[test]
    fn spatial_correlation_fades_from_a_to_c() {
        let quad = QuadratureSpec::default();
        let corr = |l: f64| {
            let (beam, s) = fig5(l);
            let g = joint_position(&beam, &s, &GridSpec::default(), &quad).unwrap();
            let (ve, vp, vu) = moments(&g);
            // cov(x_el, x_ph) from var(x_el − x_ph).
            0.5 * (ve + vp - vu) / (ve * vp).sqrt()
        };
        let a = corr(20.0);
        let c = corr(0.2);
        assert!(a > 0.8, "{a}");
        assert!(c.abs() < 0.1, "{c}");
    }

    #[test]
    fn grid_spec_is_validated() {
        let quad = QuadratureSpec::default();
        let (beam, s) = fig5(1.5);
        let spec = GridSpec { n: 8, ..Default::default() };
        assert!(matches!(joint_position(&beam, &s, &spec, &quad), Err(Error::Resolution(_))));
        assert!(matches!(joint_momentum_grid(&beam, &s, &spec, &quad), Err(Error::Resolution(_))));
    }

    #[test]
    fn kx_axis_is_mirror_symmetric() {
        let quad = QuadratureSpec::default();
        let s = SpectrumModel::new(12.566, 0.3).unwrap();
        for n in [16, 17, 512] {
            let a = kx_axis(&s, n, &quad);
            assert_eq!(a.len(), n);
            for i in 0..n {
                assert_eq!(a[i], -a[n - 1 - i]);
            }
            assert!(a.windows(2).all(|w| w[1] > w[0]));
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn position_kernel_is_symmetric(a in -15.0f64..15.0, b in -15.0f64..15.0) {
            let quad = QuadratureSpec::default();
            let (beam, s) = fig5(1.5);
            let m1 = position_kernel(&beam, &s, a, b, &quad);
            let m2 = position_kernel(&beam, &s, b, a, &quad);
            prop_assert!((m1 - m2).abs() <= 1e-10 * m1.abs().max(1e-300));
            prop_assert_eq!(m1, position_kernel(&beam, &s, -a, b, &quad));
        }

        #[test]
        fn marginal_is_even(kx in 0.0f64..20.0) {
            let quad = QuadratureSpec::default();
            let s = SpectrumModel::new(12.566, 0.3).unwrap();
            prop_assert_eq!(photon_marginal_kx(&s, kx, &quad).unwrap(), photon_marginal_kx(&s, -kx, &quad).unwrap());
        }
    }
}
