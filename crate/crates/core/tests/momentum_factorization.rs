//! The factorized joint wavevector density against brute-force
//! marginalization of |ψ_sc(q, k)|² over (q_y, q_z, k_y, k_z) in Cartesian
//! coordinates.

use elphot::distributions::joint_momentum;
use elphot::model::{BeamParams, PhaseModel, ScatteredState, SpectrumModel};
use elphot::quadrature::{gauss_legendre, QuadratureSpec};

/// ∫∫ dq_y dq_z |ψ_sc|² on two GL-20 panels per axis over ±9 widths.
fn q_marginal(state: &ScatteredState, qx: f64, k: [f64; 3]) -> f64 {
    let rule = gauss_legendre(20);
    let kk = (k[0] * k[0] + k[1] * k[1] + k[2] * k[2]).sqrt();
    let (dy, dz) = (state.beam.dq_perp, state.beam.dq_par);
    let cy = -k[1];
    let cz = state.beam.q0 - state.beam.c_over_vz * kk;
    let panels = |c: f64, w: f64| [(c - 9.0 * w, c), (c, c + 9.0 * w)];
    let mut total = 0.0;
    for (ya, yb) in panels(cy, dy) {
        total += rule.integrate(ya, yb, |qy| {
            panels(cz, dz)
                .iter()
                .map(|&(za, zb)| rule.integrate(za, zb, |qz| state.density([qx, qy, qz], k)))
                .sum::<f64>()
        });
    }
    total
}

/// Direct P(q_x, k_x): quarter (k_y, k_z) plane by parity, GL-8 on square
/// panels one spectral width across. GL-6 on those is already at rounding.
fn direct(state: &ScatteredState, qx: f64, kx: f64, reach: f64) -> f64 {
    let rule = gauss_legendre(6);
    let h = state.spectrum.dk_ph;
    let n = (reach / h).ceil() as usize;
    let mut total = 0.0;
    for i in 0..n {
        let (ya, yb) = (i as f64 * h, (i + 1) as f64 * h);
        for j in 0..n {
            let (za, zb) = (j as f64 * h, (j + 1) as f64 * h);
            if kx * kx + ya * ya + za * za > reach * reach {
                continue;
            }
            total += rule.integrate(ya, yb, |ky| rule.integrate(za, zb, |kz| q_marginal(state, qx, [kx, ky, kz])));
        }
    }
    4.0 * total
}

#[test]
fn factorized_momentum_density_matches_direct_marginalization() {
    let beam = BeamParams::new(200.0, 3.0, 4.8).unwrap();
    let spectrum = SpectrumModel::new(12.566, 2.0).unwrap();
    // The phase drops out of the x-wavevector density.
    let quad = QuadratureSpec::default();
    let phase = PhaseModel::polar_linear(0.8, &quad).unwrap();
    let state = ScatteredState::new(beam, spectrum.clone(), phase);
    let reach = spectrum.k_c + 8.5 * spectrum.dk_ph;
    for (qx, kx) in [(0.0, 0.0), (2.5, 0.0), (-6.0, 6.0), (-3.0, 6.0), (-15.0, 13.5)] {
        let factorized = joint_momentum(&beam, &spectrum, qx, kx, &quad).unwrap();
        if factorized <= 1e-12 {
            continue;
        }
        let brute = direct(&state, qx, kx, reach);
        let rel = (factorized - brute).abs() / factorized;
        assert!(rel < 1e-8, "({qx}, {kx}): {factorized:e} vs {brute:e}, rel {rel:e}");
    }
}
