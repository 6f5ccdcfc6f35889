//! Brute-force validators. Each one reaches the quantity by a route that
//! shares no reduction step with the main implementation.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::distributions::{photon_marginal_kx, GridKind, JointGrid};
use crate::error::{Error, Result};
use crate::measures::{
    longitudinal_term_quadrature, purity_sc, rel_pos_variance_closed, rel_pos_variance_quadrature,
    total_wavevector_variance,
};
use crate::model::{psi_1d, BeamParams, PhaseModel, SpectrumModel, ANGULAR_NORM};
use crate::quadrature::{
    integrate_1d, integrate_1d_with_breaks, mc_integrate, stream_rng, GammaSampler, IntegrationResult, PairSampler,
    QuadratureSpec,
};

/// Smallest sample count accepted by [`mc_purity`].
pub const MC_PURITY_MIN_SAMPLES: usize = 10_000;

/// Outcome of one oracle comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub quantity: String,
    pub main_value: f64,
    pub oracle_value: f64,
    pub discrepancy: f64,
    pub tolerance: f64,
    pub pass: bool,
    /// Seed, sample counts, grid sizes and similar.
    pub metadata: BTreeMap<String, String>,
}

impl OracleReport {
    pub fn new(quantity: impl Into<String>, main_value: f64, oracle_value: f64, tolerance: f64) -> Self {
        let discrepancy = main_value - oracle_value;
        OracleReport {
            quantity: quantity.into(),
            main_value,
            oracle_value,
            discrepancy,
            tolerance,
            pass: discrepancy.abs() <= tolerance,
            metadata: BTreeMap::new(),
        }
    }

    pub fn with(mut self, key: &str, value: impl ToString) -> Self {
        self.metadata.insert(key.to_string(), value.to_string());
        self
    }
}

/// Monte Carlo estimate of the purity as the expectation, over independent
/// k and k′ drawn from Γ, of
/// exp(−|k⊥ − k′⊥|²/(4Δq⊥²) − c²(k − k′)²/(4 v_z² Δq∥²)).
pub fn mc_purity_estimate(
    beam: &BeamParams,
    spectrum: &SpectrumModel,
    n: usize,
    seed: u64,
    quad: &QuadratureSpec,
) -> Result<IntegrationResult> {
    if n < MC_PURITY_MIN_SAMPLES {
        return Err(Error::TooFewSamples { got: n, min: MC_PURITY_MIN_SAMPLES });
    }
    let sampler = GammaSampler::new(spectrum, quad)?;
    let inv4d2 = 0.25 / (beam.dq_perp * beam.dq_perp);
    let alpha = beam.longitudinal_alpha();
    mc_integrate(
        &PairSampler(&sampler),
        |(a, b)| {
            let dx = a[0] - b[0];
            let dy = a[1] - b[1];
            let ka = (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt();
            let kb = (b[0] * b[0] + b[1] * b[1] + b[2] * b[2]).sqrt();
            let dk = ka - kb;
            (-(dx * dx + dy * dy) * inv4d2 - alpha * dk * dk).exp()
        },
        n,
        seed,
    )
}

/// Compares [`purity_sc`] with the Monte Carlo estimate. The tolerance is
/// three standard errors, floored at the quadrature's own relative
/// tolerance for the near-deterministic separable limit.
pub fn mc_purity(
    beam: &BeamParams,
    spectrum: &SpectrumModel,
    n: usize,
    seed: u64,
    quad: &QuadratureSpec,
) -> Result<OracleReport> {
    let mc = mc_purity_estimate(beam, spectrum, n, seed, quad)?;
    let main = purity_sc(beam, spectrum, quad)?;
    let tol = (3.0 * mc.error_estimate).max(quad.rel_tol * main.abs());
    Ok(OracleReport::new("purity_sc", main, mc.value, tol)
        .with("standard_error", mc.error_estimate)
        .with("samples", n)
        .with("seed", seed))
}

/// Sampling grid for the 1D Schmidt oracle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchmidtGrid {
    pub k_min: f64,
    pub k_max: f64,
    pub nk: usize,
    pub q_min: f64,
    pub q_max: f64,
    pub nq: usize,
    /// Narrowest feature of G; the grid must place 8 points across it.
    pub feature_width: f64,
}

impl SchmidtGrid {
    /// A grid covering ±`reach` widths of a G centred at `center` with
    /// width `sigma_g`, for electron width `delta`, at `per_sigma` points
    /// per narrowest width.
    pub fn covering(center: f64, sigma_g: f64, delta: f64, reach: f64, per_sigma: f64) -> Self {
        let narrow = sigma_g.min(delta);
        let k_half = reach * sigma_g;
        let q_half = reach * (sigma_g + delta);
        let nk = (2.0 * k_half / narrow * per_sigma).ceil() as usize + 1;
        let nq = (2.0 * q_half / delta * per_sigma).ceil() as usize + 1;
        SchmidtGrid {
            k_min: center - k_half,
            k_max: center + k_half,
            nk,
            q_min: -center - q_half,
            q_max: -center + q_half,
            nq,
            feature_width: sigma_g,
        }
    }

    fn check(&self, delta: f64) -> Result<()> {
        if self.nk < 2 || self.nq < 2 || !(self.k_max > self.k_min) || !(self.q_max > self.q_min) {
            return Err(Error::Resolution("Schmidt grid needs two or more points on ordered axes".into()));
        }
        let hk = (self.k_max - self.k_min) / (self.nk - 1) as f64;
        let hq = (self.q_max - self.q_min) / (self.nq - 1) as f64;
        let need = self.feature_width.min(delta) / 8.0;
        if hk > need * (1.0 + 1e-12) || hq > delta / 8.0 * (1.0 + 1e-12) {
            return Err(Error::Resolution(format!(
                "Schmidt grid spacing (k {hk}, q {hq}) exceeds 1/8 of the narrowest width {}",
                self.feature_width.min(delta)
            )));
        }
        Ok(())
    }
}

/// Purity of ψ(q, k) = ψ_ini(q + k)√G(k) from the singular values of the
/// weighted amplitude matrix, Σs⁴/(Σs²)², against the overlap formula
/// ∫∫ G(k)G(k′) exp(−(k − k′)²/(4Δ²)) dk dk′ / (∫G)².
pub fn schmidt_purity_1d<G>(g: G, delta: f64, grid: &SchmidtGrid, quad: &QuadratureSpec) -> Result<OracleReport>
where
    G: Fn(f64) -> f64,
{
    grid.check(delta)?;
    let ks = linspace(grid.k_min, grid.k_max, grid.nk);
    let qs = linspace(grid.q_min, grid.q_max, grid.nq);
    let wk = trapezoid(&ks);
    let wq = trapezoid(&qs);
    let gk: Vec<f64> = ks.iter().map(|&k| g(k)).collect();
    if gk.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
        return Err(Error::Domain("G must be finite and non-negative on the grid".into()));
    }
    let a = DMatrix::from_fn(grid.nq, grid.nk, |i, j| psi_1d(qs[i] + ks[j], delta) * (gk[j] * wq[i] * wk[j]).sqrt());
    let (svd_purity, top) = svd_purity(&a);

    let inner_quad = QuadratureSpec { rel_tol: 1e-10, ..*quad };
    let norm = integrate_1d(&g, grid.k_min, grid.k_max, &inner_quad)?.value;
    let inv4d2 = 0.25 / (delta * delta);
    let mut failure = None;
    let overlap = integrate_1d(
        |k| {
            let gk = g(k);
            if gk == 0.0 {
                return 0.0;
            }
            let pts = [grid.k_min, k, grid.k_max];
            match integrate_1d_with_breaks(|kp| g(kp) * (-(k - kp).powi(2) * inv4d2).exp(), &pts, &inner_quad) {
                Ok(r) => gk * r.value,
                Err(e) => {
                    failure.get_or_insert(e);
                    0.0
                }
            }
        },
        grid.k_min,
        grid.k_max,
        &inner_quad,
    )?;
    if let Some(e) = failure {
        return Err(e);
    }
    let formula = overlap.value / (norm * norm);
    Ok(OracleReport::new("schmidt_purity_1d", svd_purity, formula, 1e-3)
        .with("nk", grid.nk)
        .with("nq", grid.nq)
        .with("top_schmidt_weight", top))
}

/// Σs⁴/(Σs²)² over the singular values of a measure-weighted amplitude
/// matrix, and the largest Schmidt weight s₁²/Σs².
pub fn svd_purity(amplitude: &DMatrix<f64>) -> (f64, f64) {
    let sv = amplitude.singular_values();
    let s2: f64 = sv.iter().map(|s| s * s).sum();
    let s4: f64 = sv.iter().map(|s| s.powi(4)).sum();
    (s4 / (s2 * s2), sv.max().powi(2) / s2)
}

/// (1 + σ_g²/Δ²)^(−1/2), the purity for a Gaussian G of width σ_g.
pub fn gaussian_schmidt_purity(sigma_g: f64, delta: f64) -> f64 {
    (1.0 + (sigma_g / delta).powi(2)).powf(-0.5)
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    let h = (b - a) / (n - 1) as f64;
    (0..n).map(|i| a + h * i as f64).collect()
}

fn trapezoid(x: &[f64]) -> Vec<f64> {
    crate::distributions::trapezoid_weights(x)
}

/// Discrete variance of the grid's combination (x_el − x_ph or q_x + k_x)
/// against the closed form: Δq⊥² for wavevectors, the zero-phase relative
/// position variance for positions.
pub fn variance_from_grid(
    grid: &JointGrid,
    beam: &BeamParams,
    spectrum: &SpectrumModel,
    rel_tol: f64,
    quad: &QuadratureSpec,
) -> Result<OracleReport> {
    let mass = grid.mass();
    if !((mass - 1.0).abs() <= 0.01) {
        return Err(Error::Unnormalized(mass));
    }
    let (mean, var) = grid.combination_moments();
    let (name, expected) = match grid.kind {
        GridKind::Momentum => ("var_tot_wavevector", total_wavevector_variance(beam)),
        GridKind::Position => {
            let zero = PhaseModel::Zero;
            let v = if spectrum.is_filtered() {
                rel_pos_variance_quadrature(beam, spectrum, &zero, quad)?
            } else {
                rel_pos_variance_closed(beam, spectrum, &zero)?
            };
            ("var_rel_pos", v)
        }
    };
    Ok(OracleReport::new(name, expected, var, rel_tol * expected.abs())
        .with("mean", mean)
        .with("mass", mass)
        .with("grid", format!("{}x{}", grid.axis1.len(), grid.axis2.len())))
}

/// Relative error of the analytic Γ partials against central differences
/// at the given points. First partials are differenced from Γ, second
/// partials from the analytic first partials. Errors are scaled by
/// max(|partial|, Γ/Δk^order) so that zeros of a partial do not blow up.
pub fn fd_gradient_check(spectrum: &SpectrumModel, points: &[[f64; 3]], step: f64) -> Result<OracleReport> {
    let dk = spectrum.dk_ph;
    let mut worst = 0.0_f64;
    for &p in points {
        let d = spectrum.gamma_derivatives(p)?;
        for axis in 0..2 {
            let shift = |h: f64| {
                let mut q = p;
                q[axis] += h;
                q
            };
            let fd1 = (spectrum.gamma_vec(shift(step)) - spectrum.gamma_vec(shift(-step))) / (2.0 * step);
            let plus = spectrum.gamma_derivatives(shift(step))?;
            let minus = spectrum.gamma_derivatives(shift(-step))?;
            let (a1, a2, fd2) = if axis == 0 {
                (d.d_kx, d.d2_kx, (plus.d_kx - minus.d_kx) / (2.0 * step))
            } else {
                (d.d_ky, d.d2_ky, (plus.d_ky - minus.d_ky) / (2.0 * step))
            };
            let s1 = a1.abs().max(d.gamma / dk).max(f64::MIN_POSITIVE);
            let s2 = a2.abs().max(d.gamma / (dk * dk)).max(f64::MIN_POSITIVE);
            worst = worst.max((fd1 - a1).abs() / s1).max((fd2 - a2).abs() / s2);
        }
    }
    Ok(OracleReport::new("gamma_partials_fd", worst, 0.0, 1e-6).with("points", points.len()).with("step", step))
}

/// Random points on the spectral shell for [`fd_gradient_check`].
pub fn random_shell_points(spectrum: &SpectrumModel, n: usize, seed: u64) -> Vec<[f64; 3]> {
    let mut rng = stream_rng(seed, 0);
    (0..n)
        .map(|_| {
            let k = (spectrum.k_c + spectrum.dk_ph * (4.0 * rng.gen::<f64>() - 2.0)).max(0.1 * spectrum.k_c);
            let c: f64 = 1.8 * rng.gen::<f64>() - 0.9;
            let s = (1.0 - c * c).sqrt();
            let phi = 2.0 * PI * rng.gen::<f64>();
            [k * s * phi.cos(), k * s * phi.sin(), k * c]
        })
        .collect()
}

/// G(k_x) from the 1D radial formula π C ∫_{|k_x|} k ρ(k) β(1 − ¾β) dk with
/// β = 1 − k_x²/k², obtained by doing the ring integral by hand. Separable
/// spectra only.
pub fn marginal_from_radial(spectrum: &SpectrumModel, kx: f64, quad: &QuadratureSpec) -> Result<f64> {
    if !spectrum.is_angle_separable() {
        return Err(Error::Domain("the radial marginal formula needs a separable spectrum".into()));
    }
    let (lo, hi) = spectrum.radial_support(quad.truncation_sigmas);
    let a = kx.abs().max(lo);
    if a >= hi {
        return Ok(0.0);
    }
    let mut pts = vec![a];
    pts.extend(
        [-3.0, -1.0, 0.0, 1.0, 3.0]
            .iter()
            .map(|j| spectrum.k_c + j * spectrum.dk_ph)
            .chain(spectrum.radial_breakpoints(quad.truncation_sigmas))
            .filter(|&k| k > a && k < hi),
    );
    pts.push(hi);
    pts.sort_by(f64::total_cmp);
    let kx2 = kx * kx;
    let r = integrate_1d_with_breaks(
        |k| {
            let beta = 1.0 - kx2 / (k * k);
            k * spectrum.radial_density(k) * beta * (1.0 - 0.75 * beta)
        },
        &pts,
        quad,
    )?;
    Ok(PI * ANGULAR_NORM * r.value)
}

/// Marginal from the 2D quadrature against [`marginal_from_radial`].
pub fn marginal_check(spectrum: &SpectrumModel, kx: f64, quad: &QuadratureSpec) -> Result<OracleReport> {
    let main = photon_marginal_kx(spectrum, kx, quad)?;
    let oracle = marginal_from_radial(spectrum, kx, quad)?;
    Ok(OracleReport::new("photon_marginal_kx", main, oracle, 1e-6 * oracle.abs().max(1e-12)).with("kx", kx))
}

/// The oracle suite behind `validate`: every closed form or reduction in
/// `measures` and `distributions` against an independent route.
pub fn run_suite(
    beam: &BeamParams,
    spectrum: &SpectrumModel,
    quad: &QuadratureSpec,
    mc_samples: usize,
    seed: u64,
) -> Result<Vec<OracleReport>> {
    let mut out = Vec::new();

    // Normalization of Γ by direct spherical quadrature.
    let norm = crate::measures::gamma_mass(spectrum, quad)?;
    out.push(OracleReport::new("gamma_normalization", norm, 1.0, 1e-8));

    out.push(mc_purity(beam, spectrum, mc_samples, seed, quad)?);

    if spectrum.is_angle_separable() {
        // Hankel-transform route against the four-fold quadrature.
        let fast = crate::measures::purity_sc(beam, spectrum, quad)?;
        let direct = crate::measures::purity_sc_direct(beam, spectrum, quad)?;
        let tol = quad.abs_tol + 4.0 * quad.rel_tol * direct;
        out.push(OracleReport::new("purity_routes", fast, direct, tol));
    }

    let unit = spectrum.clone();
    if !unit.is_filtered() {
        let zero = PhaseModel::Zero;
        let closed = rel_pos_variance_closed(beam, &unit, &zero)?;
        let direct = rel_pos_variance_quadrature(beam, &unit, &zero, quad)?;
        out.push(OracleReport::new("var_rel_pos_closed", closed, direct, 1e-4 * direct.abs()));
    }

    let lt = longitudinal_term_quadrature(beam, spectrum, quad)?;
    let closed_lt = beam.longitudinal_variance_term();
    if spectrum.is_angle_separable() {
        out.push(OracleReport::new("longitudinal_term", closed_lt, lt, 1e-6 * closed_lt));
    }

    let xi1 = PhaseModel::polar_xi(|_| 1.0, quad)?;
    out.push(OracleReport::new("xi1_linear_polar", xi1, 3.0 / 14.0, 1e-10));

    if spectrum.is_angle_separable() {
        for kx in [0.0, 0.5 * spectrum.k_c, spectrum.k_c / 3f64.sqrt()] {
            out.push(marginal_check(spectrum, kx, quad)?);
        }
    }

    let pts = random_shell_points(spectrum, 100, seed);
    match fd_gradient_check(spectrum, &pts, 1e-5 * spectrum.k_c) {
        Ok(r) => out.push(r),
        Err(Error::NotDifferentiable(_)) => {}
        Err(e) => return Err(e),
    }

    let sigma_g = beam.dq_perp;
    let grid = SchmidtGrid::covering(0.0, sigma_g, beam.dq_perp, 7.0, 8.0);
    let gauss = |k: f64| (-k * k / (2.0 * sigma_g * sigma_g)).exp();
    let r = schmidt_purity_1d(gauss, beam.dq_perp, &grid, quad)?;
    let closed = gaussian_schmidt_purity(sigma_g, beam.dq_perp);
    out.push(OracleReport::new("schmidt_vs_gaussian", r.main_value, closed, 1e-3));
    out.push(r);

    let mgrid = crate::distributions::joint_momentum_grid(
        beam,
        spectrum,
        &crate::distributions::GridSpec { n: 256, ..Default::default() },
        quad,
    )?;
    out.push(variance_from_grid(&mgrid, beam, spectrum, 0.005, quad)?);
    Ok(out)
}
