//! First-order effective Hamiltonian of the amplitude-modulated drive at
//! zero detuning and its closed-form consequences.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::floquet;
use crate::model::{validate, Axis, DriveConfig, InitialState, ModelTag, Scheme};
use crate::modes::ModeSpectrum;
use crate::pauli::{self, Mat2};
use crate::FloquetMode;

const MODEL: &str = "effective";

fn check_static(config: &DriveConfig) -> Result<()> {
    let v = validate(config);
    if !v.is_empty() {
        return Err(Error::InvalidConfig(v));
    }
    if config.delta != 0.0 {
        return Err(Error::NotApplicable {
            model: MODEL,
            reason: format!("requires delta = 0, got {}", config.delta),
        });
    }
    if config.scheme != Scheme::AmplitudeMod {
        return Err(Error::NotApplicable {
            model: MODEL,
            reason: "defined for the amplitude-modulated drive only".into(),
        });
    }
    if !(config.omega_main > 0.0) {
        return Err(Error::NotApplicable {
            model: MODEL,
            reason: "requires omega_main > 0".into(),
        });
    }
    Ok(())
}

fn check_resonant(config: &DriveConfig) -> Result<()> {
    check_static(config)?;
    let scale = config.omega_mod.abs().max(config.omega_main.abs());
    if (config.omega_mod - config.omega_main).abs() > 1e-9 * scale {
        return Err(Error::NotApplicable {
            model: MODEL,
            reason: "requires omega_mod = omega_main".into(),
        });
    }
    Ok(())
}

/// Pauli vector of
/// `(eps/2)(cos phi s_y + sin phi s_z) + (eps^2/(8 Omega)) s_x + ((Omega - w_m)/2) s_x`.
pub fn effective_vector(config: &DriveConfig) -> Result<[f64; 3]> {
    check_static(config)?;
    let e = config.eps_mod;
    let (s, c) = config.phase.sin_cos();
    Ok([
        e * e / (8.0 * config.omega_main) + 0.5 * (config.omega_main - config.omega_mod),
        0.5 * e * c,
        0.5 * e * s,
    ])
}

pub fn effective_hamiltonian(config: &DriveConfig) -> Result<Mat2> {
    Ok(pauli::from_vector(effective_vector(config)?))
}

/// `eps^3 / (32 Omega^2)`.
pub fn splitting_shift(config: &DriveConfig) -> Result<f64> {
    check_resonant(config)?;
    let e = config.eps_mod;
    Ok(e.powi(3) / (32.0 * config.omega_main.powi(2)))
}

/// Larger root of `Omega^2 - w_m Omega + eps^2/4 = 0`.
pub fn resonance_compensation(config: &DriveConfig) -> Result<f64> {
    let v = validate(config);
    if !v.is_empty() {
        return Err(Error::InvalidConfig(v));
    }
    let w = config.omega_mod;
    let disc = w * w - config.eps_mod * config.eps_mod;
    if disc < 0.0 {
        return Err(Error::NotApplicable {
            model: MODEL,
            reason: "no real compensating Omega for eps_mod > omega_mod".into(),
        });
    }
    Ok(0.5 * (w + disc.sqrt()))
}

/// `arctan(eps / (4 Omega))`.
pub fn tilt_angle(config: &DriveConfig) -> Result<f64> {
    check_resonant(config)?;
    Ok((config.eps_mod / (4.0 * config.omega_main)).atan())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AmpShifts {
    pub center_x: f64,
    pub center_y: f64,
    pub center_z: f64,
    pub side_plus: f64,
    pub side_minus: f64,
}

impl AmpShifts {
    /// Predicted center-band shift for an initial state along `axis`.
    pub fn center(&self, axis: Axis) -> f64 {
        match axis {
            Axis::X => self.center_x,
            Axis::Y => self.center_y,
            Axis::Z => self.center_z,
        }
    }
}

/// Closed-form amplitude-shift scalings in `r = eps/Omega`.
pub fn amplitude_shift_predictions(config: &DriveConfig) -> Result<AmpShifts> {
    check_resonant(config)?;
    let r = config.eps_mod / config.omega_main;
    let root = PI.sqrt() / 2f64.sqrt();
    let side = root / 16.0 * r;
    Ok(AmpShifts {
        center_x: root / 8.0 * r,
        center_y: root / 32.0 * r * r,
        center_z: 0.0,
        side_plus: side,
        side_minus: -side,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrectionReport {
    /// Pauli vector of the effective Hamiltonian.
    pub h_eff: [f64; 3],
    pub delta_eps: f64,
    pub tilt: f64,
    pub tilt_small_angle: f64,
    pub omega_star: Option<f64>,
    pub amp_shifts: AmpShifts,
}

impl CorrectionReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

pub fn correction_report(config: &DriveConfig) -> Result<CorrectionReport> {
    Ok(CorrectionReport {
        h_eff: effective_vector(config)?,
        delta_eps: splitting_shift(config)?,
        tilt: tilt_angle(config)?,
        tilt_small_angle: config.eps_mod / (4.0 * config.omega_main),
        omega_star: resonance_compensation(config).ok(),
        amp_shifts: amplitude_shift_predictions(config)?,
    })
}

/// Mode spectrum with the effective Hamiltonian in place of the RWA one.
pub fn effective_spectrum(config: &DriveConfig, psi0: &InitialState, n_max: u32) -> Result<ModeSpectrum> {
    let h = effective_vector(config)?;
    let xp = [1.0, 0.0, 0.0];
    let r = pauli::norm3(h);
    let axis = if r == 0.0 { xp } else { h };
    let up = pauli::spinor_along(axis);
    let down = pauli::spinor_along([-axis[0], -axis[1], -axis[2]]);
    let px = pauli::sigma_x();
    let build = |chi: &[crate::C64; 2], e: f64| {
        let s = pauli::apply(&px, chi);
        FloquetMode {
            lambda: 0.5 * config.omega_mod + e,
            first_index: -1,
            blocks: vec![
                [(chi[0] - s[0]) * 0.5, (chi[1] - s[1]) * 0.5],
                [(chi[0] + s[0]) * 0.5, (chi[1] + s[1]) * 0.5],
            ],
        }
    };
    let plus = build(&up, r);
    let minus = build(&down, -r);
    let m = floquet::match_modes(&plus, &minus, &psi0.amplitudes())?;
    let mut spec = ModeSpectrum::from_modes(
        ModelTag::Effective,
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

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::mhz_to_angular;
    use crate::C64;

    fn fig2() -> DriveConfig {
        DriveConfig::resonant_mhz(3.75, 3.75, 2.08, 0.0)
    }

    #[test]
    fn zero_modulation_leaves_detuning_term() {
        let c = DriveConfig::resonant_mhz(3.0, 3.75, 0.0, 0.0);
        let h = effective_hamiltonian(&c).unwrap();
        let e = pauli::sigma_x() * C64::new(0.5 * (c.omega_main - c.omega_mod), 0.0);
        assert!((h - e).norm() < 1e-14);
    }

    #[test]
    fn splitting_contains_quadratic_correction() {
        let c = fig2();
        let v = effective_vector(&c).unwrap();
        let e = c.eps_mod;
        let expect = 2.0 * ((e / 2.0).powi(2) + (e * e / (8.0 * c.omega_main)).powi(2)).sqrt();
        assert!((2.0 * pauli::norm3(v) - expect).abs() < 1e-12);
    }

    #[test]
    fn fig2_closed_forms() {
        let c = fig2();
        let de = crate::model::angular_to_mhz(splitting_shift(&c).unwrap());
        assert!((de - 2.08f64.powi(3) / (32.0 * 3.75 * 3.75)).abs() < 1e-12);
        assert!((de - 0.0200).abs() < 1e-4);
        let tilt = tilt_angle(&c).unwrap();
        assert!((tilt - 0.1378).abs() < 1e-4);
        let s = amplitude_shift_predictions(&c).unwrap();
        assert!((s.side_plus - 0.0435).abs() < 1e-4);
        assert_eq!(s.side_plus, -s.side_minus);
        assert!(s.center_x > s.center_y && s.center_y > s.center_z);
    }

    #[test]
    fn compensation_root() {
        let c = fig2();
        let w = crate::model::angular_to_mhz(resonance_compensation(&c).unwrap());
        assert!((w - 3.435).abs() < 1e-3);
        let c0 = DriveConfig::resonant_mhz(3.75, 3.75, 0.0, 0.0);
        assert_eq!(resonance_compensation(&c0).unwrap(), c0.omega_mod);
        let strong = DriveConfig::resonant_mhz(3.0, 3.0, 4.0, 0.0);
        assert!(resonance_compensation(&strong).is_err());
    }

    #[test]
    fn shift_ratio_at_point_three() {
        let c = DriveConfig::resonant_mhz(3.0, 3.0, 0.9, 0.0);
        let r = splitting_shift(&c).unwrap() / c.eps_mod;
        assert!((r - 0.09 / 32.0).abs() < 1e-15);
    }

    #[test]
    fn preconditions_enforced() {
        let c = fig2().with_delta(mhz_to_angular(0.1));
        assert!(effective_hamiltonian(&c).is_err());
        let c = DriveConfig::resonant_mhz(3.0, 3.75, 1.0, 0.0);
        assert!(splitting_shift(&c).is_err());
        let c = fig2().with_scheme(Scheme::PhaseMod);
        assert!(effective_hamiltonian(&c).is_err());
    }

    #[test]
    fn all_corrections_vanish_without_modulation() {
        let c = DriveConfig::resonant_mhz(3.75, 3.75, 0.0, 0.0);
        let r = correction_report(&c).unwrap();
        assert_eq!(r.delta_eps, 0.0);
        assert_eq!(r.tilt, 0.0);
        assert_eq!(r.amp_shifts.side_plus, 0.0);
        assert_eq!(r.amp_shifts.center_x, 0.0);
    }

    #[test]
    fn effective_spectrum_splitting() {
        let c = fig2().with_phase(0.6);
        let s = effective_spectrum(&c, &InitialState::ground(), 2).unwrap();
        let v = effective_vector(&c).unwrap();
        assert!((s.delta_lambda - 2.0 * pauli::norm3(v)).abs() < 1e-12);
        assert!(s.manifold_weight(2) < 1e-14);
    }
}
