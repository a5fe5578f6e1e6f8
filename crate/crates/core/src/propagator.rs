//! Drive waveforms and the piecewise-constant exact propagator used as the
//! brute-force reference.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::model::{validate, Axis, DriveConfig, InitialState, Scheme, TimeGrid, TimeTrace};
use crate::pauli::{self, Spinor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Frame {
    /// First rotating frame, Hamiltonian as written for the modulation scheme.
    Rotating,
    /// Lab frame `w0/2 s_z + d(t) s_x`.
    Lab,
}

/// Initial-state convention for lab-frame runs of the phase scheme, whose
/// frame transformation differs from the identity at t = 0.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FrameOffset {
    /// The lab state is prepared so that the interaction-frame state at t = 0
    /// equals `psi0`.
    Compensated,
    /// The lab state at t = 0 equals `psi0`.
    Uncompensated,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrotterOptions {
    pub frame: Frame,
    pub offset: FrameOffset,
    pub dt_step: f64,
}

impl TrotterOptions {
    pub fn rotating(dt_step: f64) -> Self {
        Self {
            frame: Frame::Rotating,
            offset: FrameOffset::Compensated,
            dt_step,
        }
    }

    pub fn lab(dt_step: f64, offset: FrameOffset) -> Self {
        Self {
            frame: Frame::Lab,
            offset,
            dt_step,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Waveform {
    pub t0: f64,
    pub dt: f64,
    pub samples: Vec<f64>,
    pub frame: Frame,
}

impl Waveform {
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t_us,value")?;
        for (k, v) in self.samples.iter().enumerate() {
            writeln!(w, "{},{}", self.t0 + k as f64 * self.dt, v)?;
        }
        Ok(())
    }

    pub fn clipped(&self, level: f64) -> Self {
        Self {
            samples: self.samples.iter().map(|&s| clip(s, Some(level))).collect(),
            ..self.clone()
        }
    }
}

#[inline]
fn clip(x: f64, level: Option<f64>) -> f64 {
    match level {
        Some(c) => x.clamp(-c, c),
        None => x,
    }
}

fn ensure_valid(config: &DriveConfig) -> Result<()> {
    let v = validate(config);
    if v.is_empty() {
        Ok(())
    } else {
        Err(Error::InvalidConfig(v))
    }
}

fn lab(config: &DriveConfig) -> Result<crate::model::LabFrame> {
    config
        .lab_frame
        .ok_or_else(|| invalid("lab_frame", "lab-frame synthesis requires lab_frame"))
}

/// Pauli vector of the first-rotating-frame Hamiltonian at time t.
pub fn rotating_vector(config: &DriveConfig, t: f64) -> [f64; 3] {
    let mut h = [0.5 * config.omega_main, 0.0, -0.5 * config.delta];
    let arg = config.omega_mod * t + config.phase;
    match config.scheme {
        Scheme::AmplitudeMod => h[1] += config.eps_mod * arg.cos(),
        Scheme::PhaseMod => h[2] += config.modulation_amplitude() * arg.sin(),
    }
    if let Some(tone) = config.extra_tone {
        let v = tone.eps2 * (tone.harmonic as f64 * config.omega_mod * t).cos();
        match tone.axis {
            Axis::X => h[0] += v,
            Axis::Y => h[1] += v,
            Axis::Z => h[2] += v,
        }
    }
    h
}

/// Rotating-frame modulation coefficient: `eps cos(w_m t + phi)` for the
/// amplitude scheme, `eps (w_m/Omega) sin(w_m t + phi)` for the phase scheme.
pub fn modulation_coefficient(config: &DriveConfig, t: f64) -> f64 {
    let arg = config.omega_mod * t + config.phase;
    match config.scheme {
        Scheme::AmplitudeMod => config.eps_mod * arg.cos(),
        Scheme::PhaseMod => config.modulation_amplitude() * arg.sin(),
    }
}

/// Unclipped lab-frame transverse drive `d(t)`.
pub fn lab_drive(config: &DriveConfig, omega: f64, t: f64) -> f64 {
    let arg = config.omega_mod * t + config.phase;
    let mut d = match config.scheme {
        Scheme::AmplitudeMod => {
            config.omega_main * (omega * t).cos()
                - 2.0 * config.eps_mod * (omega * t).sin() * arg.cos()
        }
        Scheme::PhaseMod => {
            let theta = 2.0 * config.eps_mod / config.omega_main * arg.cos();
            config.omega_main * (omega * t + theta).cos()
        }
    };
    if let Some(tone) = config.extra_tone {
        let env = 2.0 * tone.eps2 * (tone.harmonic as f64 * config.omega_mod * t).cos();
        match tone.axis {
            Axis::X => d += env * (omega * t).cos(),
            Axis::Y => d -= env * (omega * t).sin(),
            Axis::Z => {}
        }
    }
    d
}

/// Pauli vector of the lab Hamiltonian with clipping applied to `d(t)`.
pub fn lab_vector(config: &DriveConfig, omega0: f64, omega: f64, t: f64) -> [f64; 3] {
    let d = clip(lab_drive(config, omega, t), config.clip_level);
    let mut hz = 0.5 * omega0;
    if let Some(tone) = config.extra_tone {
        if tone.axis == Axis::Z {
            hz += tone.eps2 * (tone.harmonic as f64 * config.omega_mod * t).cos();
        }
    }
    [d, 0.0, hz]
}

fn tone_harmonic(config: &DriveConfig) -> f64 {
    config.bandwidth() as f64
}

/// Highest frequency (MHz) present in the sampled drive of the given frame.
pub fn max_frequency(config: &DriveConfig, frame: Frame) -> f64 {
    let wm = config.omega_mod;
    let w = match frame {
        Frame::Rotating => tone_harmonic(config) * wm,
        Frame::Lab => {
            let omega = config.lab_frame.map(|l| l.omega).unwrap_or(0.0);
            let spread = match config.scheme {
                Scheme::AmplitudeMod => tone_harmonic(config) * wm,
                Scheme::PhaseMod => {
                    let beta = if config.omega_main > 0.0 {
                        2.0 * config.eps_mod / config.omega_main
                    } else {
                        0.0
                    };
                    (beta + 1.0).max(tone_harmonic(config)) * wm
                }
            };
            omega + spread
        }
    };
    w / TAU
}

/// Largest rotation rate (MHz) of the Hamiltonian in the given frame.
fn max_rate(config: &DriveConfig, frame: Frame) -> f64 {
    let tone = config.extra_tone.map(|t| t.eps2).unwrap_or(0.0);
    let h = match frame {
        Frame::Rotating => {
            0.5 * config.omega_main
                + 0.5 * config.delta.abs()
                + config.modulation_amplitude()
                + tone
        }
        Frame::Lab => {
            let omega0 = config.lab_frame.map(|l| l.omega0).unwrap_or(0.0);
            let mut d = config.omega_main + 2.0 * config.eps_mod + 2.0 * tone;
            if let Some(c) = config.clip_level {
                d = d.min(c);
            }
            0.5 * omega0 + d + tone
        }
    };
    2.0 * h / TAU
}

/// Samples the drive on `grid`. Lab frame emits `d(t)` (clipped when a clip
/// level is set); rotating frame emits the modulation coefficient.
pub fn synthesize_waveform(config: &DriveConfig, grid: TimeGrid, frame: Frame) -> Result<Waveform> {
    ensure_valid(config)?;
    let f_max = max_frequency(config, frame);
    let limit = 1.0 / (20.0 * f_max);
    if f_max > 0.0 && grid.dt > limit {
        return Err(Error::GridTooCoarse { dt: grid.dt, limit });
    }
    let samples = match frame {
        Frame::Lab => {
            let omega = lab(config)?.omega;
            grid.times()
                .map(|t| clip(lab_drive(config, omega, t), config.clip_level))
                .collect()
        }
        Frame::Rotating => grid.times().map(|t| modulation_coefficient(config, t)).collect(),
    };
    Ok(Waveform {
        t0: grid.t0,
        dt: grid.dt,
        samples,
        frame,
    })
}

/// Maximum step allowed for the given configuration and frame (us).
pub fn step_limit(config: &DriveConfig, frame: Frame) -> f64 {
    let f = max_frequency(config, frame).max(max_rate(config, frame));
    if f > 0.0 {
        1.0 / (50.0 * f)
    } else {
        f64::INFINITY
    }
}

/// Interaction-frame state at t = 0 mapped to the frame being integrated.
fn prepare(config: &DriveConfig, psi0: &Spinor, opts: &TrotterOptions) -> Spinor {
    if opts.frame == Frame::Lab
        && opts.offset == FrameOffset::Compensated
        && config.scheme == Scheme::PhaseMod
    {
        // exp(-i (eps/Omega) cos(phi) s_z)
        let a = config.eps_mod / config.omega_main * config.phase.cos();
        let mut psi = *psi0;
        pauli::rotate(&mut psi, [0.0, 0.0, a], 1.0);
        psi
    } else {
        *psi0
    }
}

/// States at every grid point from piecewise-constant exact steps with
/// midpoint sampling, started at t = 0.
pub fn trotter_states(
    config: &DriveConfig,
    psi0: &Spinor,
    grid: TimeGrid,
    opts: &TrotterOptions,
) -> Result<Vec<Spinor>> {
    ensure_valid(config)?;
    let (omega0, omega) = match opts.frame {
        Frame::Lab => {
            let l = lab(config)?;
            (l.omega0, l.omega)
        }
        Frame::Rotating => (0.0, 0.0),
    };
    if !(opts.dt_step > 0.0) {
        return Err(invalid("dt_step", "must be positive"));
    }
    if grid.t0 < 0.0 {
        return Err(invalid("grid", "grid must start at t >= 0"));
    }
    if grid.len > 1 && opts.dt_step > grid.dt * (1.0 + 1e-12) {
        return Err(invalid("dt_step", "dt_step must not exceed the grid spacing"));
    }
    let limit = step_limit(config, opts.frame);
    if opts.dt_step > limit {
        return Err(Error::GridTooCoarse {
            dt: opts.dt_step,
            limit,
        });
    }
    let h_at = |t: f64| match opts.frame {
        Frame::Rotating => rotating_vector(config, t),
        Frame::Lab => lab_vector(config, omega0, omega, t),
    };
    let advance = |psi: &mut Spinor, from: f64, to: f64| {
        let span = to - from;
        if span <= 0.0 {
            return;
        }
        let n = (span / opts.dt_step - 1e-9).ceil().max(1.0) as usize;
        let h = span / n as f64;
        for j in 0..n {
            let tm = from + (j as f64 + 0.5) * h;
            pauli::rotate(psi, h_at(tm), h);
        }
    };
    let mut psi = prepare(config, psi0, opts);
    let mut out = Vec::with_capacity(grid.len);
    let mut t = 0.0;
    for k in 0..grid.len {
        let target = grid.time(k);
        advance(&mut psi, t, target);
        t = target;
        out.push(psi);
    }
    Ok(out)
}

/// Population of |0> on `grid`.
pub fn trotter_evolve_with(
    config: &DriveConfig,
    psi0: &InitialState,
    grid: TimeGrid,
    opts: &TrotterOptions,
) -> Result<TimeTrace> {
    let states = trotter_states(config, &psi0.amplitudes(), grid, opts)?;
    Ok(TimeTrace::new(grid, states.iter().map(|s| s[0].norm_sqr()).collect()))
}

/// Rotating-frame population of |0> on `grid`.
pub fn trotter_evolve(config: &DriveConfig, psi0: &InitialState, grid: TimeGrid, dt_step: f64) -> Result<TimeTrace> {
    trotter_evolve_with(config, psi0, grid, &TrotterOptions::rotating(dt_step))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceComparison {
    pub sup_norm: f64,
    pub rms: f64,
}

pub fn compare_traces(a: &TimeTrace, b: &TimeTrace) -> Result<TraceComparison> {
    let same_dt = (a.dt - b.dt).abs() <= 1e-12 * a.dt.abs().max(b.dt.abs());
    let same_t0 = (a.t0 - b.t0).abs() <= 1e-12 * a.dt.abs().max(1.0);
    if a.len() != b.len() || !same_dt || !same_t0 {
        return Err(Error::GridMismatch(format!(
            "({}, {}, {}) vs ({}, {}, {})",
            a.t0,
            a.dt,
            a.len(),
            b.t0,
            b.dt,
            b.len()
        )));
    }
    let mut sup: f64 = 0.0;
    let mut ss = 0.0;
    for (x, y) in a.values.iter().zip(&b.values) {
        let d = (x - y).abs();
        sup = sup.max(d);
        ss += d * d;
    }
    let rms = if a.is_empty() { 0.0 } else { (ss / a.len() as f64).sqrt() };
    Ok(TraceComparison { sup_norm: sup, rms })
}

/// Norm of a state, for unitarity checks.
pub fn state_norm(psi: &Spinor) -> f64 {
    pauli::norm_sqr(psi).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{mhz_to_angular, LabFrame};

    #[test]
    fn rabi_oscillation() {
        let c = DriveConfig::resonant_mhz(3.0, 3.75, 0.0, 0.0);
        let grid = TimeGrid::new(0.0, 0.01, 200).unwrap();
        let tr = trotter_evolve(&c, &InitialState::ground(), grid, 1e-3).unwrap();
        for (k, v) in tr.values.iter().enumerate() {
            let t = grid.time(k);
            assert!((v - (0.5 * c.omega_main * t).cos().powi(2)).abs() < 1e-8);
        }
    }

    #[test]
    fn pure_carrier_without_modulation() {
        let mut c = DriveConfig::resonant_mhz(3.0, 3.0, 0.0, 0.0);
        c.lab_frame = Some(LabFrame {
            omega0: mhz_to_angular(100.0),
            omega: mhz_to_angular(100.0),
        });
        let grid = TimeGrid::new(0.0, 1e-4, 500).unwrap();
        let w = synthesize_waveform(&c, grid, Frame::Lab).unwrap();
        for (k, s) in w.samples.iter().enumerate() {
            let t = grid.time(k);
            assert!((s - c.omega_main * (mhz_to_angular(100.0) * t).cos()).abs() < 1e-12);
        }
    }

    #[test]
    fn coarse_grid_rejected() {
        let mut c = DriveConfig::resonant_mhz(3.0, 3.0, 1.0, 0.0);
        c.lab_frame = Some(LabFrame {
            omega0: mhz_to_angular(100.0),
            omega: mhz_to_angular(100.0),
        });
        let grid = TimeGrid::new(0.0, 1e-3, 10).unwrap();
        assert!(matches!(
            synthesize_waveform(&c, grid, Frame::Lab),
            Err(Error::GridTooCoarse { .. })
        ));
        let grid = TimeGrid::new(0.0, 0.01, 10).unwrap();
        assert!(trotter_evolve(&c, &InitialState::ground(), grid, 0.01).is_err());
    }

    #[test]
    fn infinite_clip_is_identity() {
        let mut c = DriveConfig::resonant_mhz(3.0, 3.0, 6.0, 0.0);
        c.lab_frame = Some(LabFrame {
            omega0: mhz_to_angular(100.0),
            omega: mhz_to_angular(100.0),
        });
        let grid = TimeGrid::new(0.0, 2e-4, 2000).unwrap();
        let w = synthesize_waveform(&c, grid, Frame::Lab).unwrap();
        assert_eq!(w.clipped(f64::INFINITY), w);
        let once = w.clipped(mhz_to_angular(8.0));
        assert_eq!(once.clipped(mhz_to_angular(8.0)), once);
        assert!(once.samples.iter().all(|s| s.abs() <= mhz_to_angular(8.0)));
    }

    #[test]
    fn identical_traces_compare_to_zero() {
        let grid = TimeGrid::new(0.0, 0.1, 4).unwrap();
        let a = TimeTrace::new(grid, vec![0.1, 0.2, 0.3, 0.4]);
        let r = compare_traces(&a, &a).unwrap();
        assert_eq!(r.sup_norm, 0.0);
        let b = TimeTrace::new(grid, a.values.iter().map(|v| v + 1e-3).collect());
        let r = compare_traces(&a, &b).unwrap();
        assert!((r.sup_norm - 1e-3).abs() < 1e-15);
        let c = TimeTrace::new(TimeGrid::new(0.0, 0.2, 4).unwrap(), a.values.clone());
        assert!(matches!(compare_traces(&a, &c), Err(Error::GridMismatch(_))));
    }

    #[test]
    fn grid_may_start_late() {
        let c = DriveConfig::resonant_mhz(3.0, 3.75, 1.0, 0.4);
        let full = TimeGrid::new(0.0, 0.01, 101).unwrap();
        let late = TimeGrid::new(0.5, 0.01, 51).unwrap();
        let a = trotter_evolve(&c, &InitialState::ground(), full, 1e-4).unwrap();
        let b = trotter_evolve(&c, &InitialState::ground(), late, 1e-4).unwrap();
        for k in 0..51 {
            assert!((a.values[50 + k] - b.values[k]).abs() < 1e-12);
        }
    }
}
