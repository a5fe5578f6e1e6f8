//! Second-rotating-frame RWA: closed-form triplet, exact two-rotation
//! evolution, analytic Floquet modes and the numeric block-diagonal variant.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::floquet::{self, eigensolve, select_quasienergies, Convention, FloquetMode, FloquetSolution};
use crate::model::{validate, DriveConfig, InitialState, ModelTag, TimeGrid, TimeTrace};
use crate::modes::ModeSpectrum;
use crate::pauli::{self, Mat2, Spinor, ZERO};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RwaSolution {
    pub delta_lambda: f64,
    pub omega_r: f64,
    pub beta: f64,
    /// Pauli vector of the second-frame Hamiltonian.
    pub h2: [f64; 3],
}

impl RwaSolution {
    pub fn h2_matrix(&self) -> Mat2 {
        pauli::from_vector(self.h2)
    }
}

/// Primed axes `(x', y, z')` of the tilted frame, `sin beta = delta / Omega_R`.
pub fn tilted_axes(config: &DriveConfig) -> ([f64; 3], [f64; 3], [f64; 3]) {
    let omega_r = config.omega_rabi();
    let (sb, cb) = if omega_r == 0.0 {
        (0.0, 1.0)
    } else {
        (config.delta / omega_r, config.omega_main / omega_r)
    };
    ([cb, 0.0, -sb], [0.0, 1.0, 0.0], [sb, 0.0, cb])
}

fn ensure_valid(config: &DriveConfig) -> Result<()> {
    let v = validate(config);
    if v.is_empty() {
        Ok(())
    } else {
        Err(Error::InvalidConfig(v))
    }
}

/// Pauli vector of the second-frame Hamiltonian.
pub fn second_frame_vector(config: &DriveConfig) -> [f64; 3] {
    let (xp, y, zp) = tilted_axes(config);
    let a = 0.5 * (config.omega_rabi() - config.omega_mod);
    let e = 0.5 * config.modulation_amplitude();
    let (s, c) = config.phase.sin_cos();
    let mut h = [0.0; 3];
    for k in 0..3 {
        h[k] = a * xp[k] + e * c * y[k] + e * s * zp[k];
    }
    h
}

/// `1/2 (Omega_R - w_m) s_x' + (eps/2)(cos phi s_y + sin phi s_z')`.
pub fn second_frame_hamiltonian(config: &DriveConfig) -> Result<Mat2> {
    ensure_valid(config)?;
    Ok(pauli::from_vector(second_frame_vector(config)))
}

pub fn rwa_solution(config: &DriveConfig) -> Result<RwaSolution> {
    ensure_valid(config)?;
    let omega_r = config.omega_rabi();
    let beta = if omega_r == 0.0 {
        0.0
    } else {
        (config.delta / omega_r).asin()
    };
    Ok(RwaSolution {
        delta_lambda: delta_lambda(config),
        omega_r,
        beta,
        h2: second_frame_vector(config),
    })
}

pub fn delta_lambda(config: &DriveConfig) -> f64 {
    config
        .modulation_amplitude()
        .hypot(config.omega_mod - config.omega_rabi())
}

/// Triplet frequencies `(w_m - dl, w_m, w_m + dl)`.
pub fn rwa_triplet(config: &DriveConfig) -> Result<[f64; 3]> {
    ensure_valid(config)?;
    let dl = delta_lambda(config);
    let w = config.omega_mod;
    Ok([w - dl, w, w + dl])
}

/// `psi(t) = exp(-i w_m t s_x'/2) exp(-i H2 t) psi0`.
pub fn rwa_state(config: &DriveConfig, psi0: &Spinor, t: f64) -> Spinor {
    let (xp, _, _) = tilted_axes(config);
    let mut psi = *psi0;
    pauli::rotate(&mut psi, second_frame_vector(config), t);
    let half = 0.5 * config.omega_mod;
    pauli::rotate(&mut psi, [half * xp[0], half * xp[1], half * xp[2]], t);
    psi
}

pub fn rwa_evolution(config: &DriveConfig, psi0: &InitialState, grid: TimeGrid) -> Result<TimeTrace> {
    ensure_valid(config)?;
    let a = psi0.amplitudes();
    let values = grid
        .times()
        .map(|t| rwa_state(config, &a, t)[0].norm_sqr())
        .collect();
    Ok(TimeTrace::new(grid, values))
}

/// Floquet modes of the RWA evolution: `lambda = w_m/2 +- dl/2`,
/// `Phi_0 = P+ chi`, `Phi_-1 = P- chi` with `P+- = (1 +- s_x')/2`.
pub fn analytic_modes(config: &DriveConfig) -> (FloquetMode, FloquetMode) {
    let (xp, _, _) = tilted_axes(config);
    let h2 = second_frame_vector(config);
    let r = pauli::norm3(h2);
    let axis = if r == 0.0 { xp } else { h2 };
    let up = pauli::spinor_along(axis);
    let down = pauli::spinor_along([-axis[0], -axis[1], -axis[2]]);
    let px = pauli::from_vector(xp);
    let project = |chi: &Spinor, sign: f64| -> Spinor {
        let s = pauli::apply(&px, chi);
        [
            (chi[0] + s[0] * sign) * 0.5,
            (chi[1] + s[1] * sign) * 0.5,
        ]
    };
    let w = config.omega_mod;
    let build = |chi: &Spinor, e: f64| FloquetMode {
        lambda: 0.5 * w + e,
        first_index: -1,
        blocks: vec![project(chi, -1.0), project(chi, 1.0)],
    };
    (build(&up, r), build(&down, -r))
}

fn match_coefficients(plus: &FloquetMode, minus: &FloquetMode, psi0: &Spinor) -> Result<floquet::InitialMatch> {
    floquet::match_modes(plus, minus, psi0)
}

/// Closed-form RWA mode spectrum.
pub fn rwa_spectrum(config: &DriveConfig, psi0: &InitialState, n_max: u32) -> Result<ModeSpectrum> {
    ensure_valid(config)?;
    let (plus, minus) = analytic_modes(config);
    let m = match_coefficients(&plus, &minus, &psi0.amplitudes())?;
    let mut spec = ModeSpectrum::from_modes(
        ModelTag::Rwa,
        &plus,
        &minus,
        m.c_plus,
        m.c_minus,
        config.omega_mod,
        n_max,
    );
    spec.residual = m.residual;
    Ok(spec)
}

/// Unitary whose columns are the spinors along `+x'` and `-x'`.
fn aligning_rotation(config: &DriveConfig) -> Mat2 {
    let (xp, _, _) = tilted_axes(config);
    let a = pauli::spinor_along(xp);
    let b = pauli::spinor_along([-xp[0], -xp[1], -xp[2]]);
    Mat2::new(a[0], b[0], a[1], b[1])
}

/// Block-diagonal Floquet solution: counter-rotating blocks dropped after
/// rotating the static field onto z.
pub fn rwa_floquet_solve(config: &DriveConfig, k: usize) -> Result<FloquetSolution> {
    let blocks = floquet::fourier_components(config)?;
    let r = aligning_rotation(config);
    let rd = r.adjoint();
    let mut kept = floquet::FourierBlocks::zeros(1);
    let h0 = rd * blocks.get(0) * r;
    kept.set(0, Mat2::new(h0[(0, 0)], ZERO, ZERO, h0[(1, 1)]));
    let h1 = rd * blocks.get(1) * r;
    let hm1 = rd * blocks.get(-1) * r;
    kept.set(1, Mat2::new(ZERO, h1[(0, 1)], ZERO, ZERO));
    kept.set(-1, Mat2::new(ZERO, ZERO, hm1[(1, 0)], ZERO));
    let k = k.max(1);
    let m = floquet::assemble(&kept, config.omega_mod, k)?;
    let pairs = eigensolve(&m)?;
    let mut sol = select_quasienergies(&pairs, k, config.omega_mod, Convention::FirstZone, None)?;
    for mode in [&mut sol.plus, &mut sol.minus] {
        for b in mode.blocks.iter_mut() {
            *b = pauli::apply(&r, b);
        }
    }
    Ok(sol)
}

pub fn rwa_floquet_spectrum(config: &DriveConfig, psi0: &InitialState, k: usize, n_max: u32) -> Result<ModeSpectrum> {
    let sol = rwa_floquet_solve(config, k)?;
    let m = floquet::match_initial_state(&sol, &psi0.amplitudes())?;
    let mut spec = ModeSpectrum::from_modes(
        ModelTag::RwaFloquet,
        &sol.plus,
        &sol.minus,
        m.c_plus,
        m.c_minus,
        config.omega_mod,
        n_max,
    );
    spec.convention = Some(Convention::FirstZone);
    spec.k = Some(sol.k);
    spec.residual = m.residual;
    Ok(spec)
}
