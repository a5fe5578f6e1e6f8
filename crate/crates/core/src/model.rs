//! Drive configuration, initial states, decay envelopes and time traces.
//!
//! Internally every frequency is angular (rad/us) and every time is in us.
//! Configuration files carry linear frequencies in MHz; the 2*pi factor is
//! applied in [`ConfigFile::ingest`] and removed in [`ConfigFile::from_parts`]
//! and nowhere else.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::pauli::Spinor;

/// MHz -> rad/us.
pub fn mhz_to_angular(f: f64) -> f64 {
    TAU * f
}

/// rad/us -> MHz.
pub fn angular_to_mhz(w: f64) -> f64 {
    w / TAU
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scheme {
    #[serde(rename = "amplitude", alias = "AmplitudeMod")]
    AmplitudeMod,
    #[serde(rename = "phase", alias = "PhaseMod")]
    PhaseMod,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub fn unit(self) -> [f64; 3] {
        match self {
            Axis::X => [1.0, 0.0, 0.0],
            Axis::Y => [0.0, 1.0, 0.0],
            Axis::Z => [0.0, 0.0, 1.0],
        }
    }
}

/// Distortion tone `eps2 cos(harmonic * omega_mod * t) sigma_axis` added to the
/// first-rotating-frame Hamiltonian.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtraTone {
    pub eps2: f64,
    pub harmonic: u32,
    pub axis: Axis,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabFrame {
    pub omega0: f64,
    pub omega: f64,
}

/// Complete description of the concatenated drive, in rad/us.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriveConfig {
    pub delta: f64,
    pub omega_main: f64,
    pub omega_mod: f64,
    pub eps_mod: f64,
    pub phase: f64,
    pub scheme: Scheme,
    pub extra_tone: Option<ExtraTone>,
    pub clip_level: Option<f64>,
    pub lab_frame: Option<LabFrame>,
}

impl DriveConfig {
    /// Resonant amplitude-modulated drive with no distortions.
    pub fn resonant(omega_main: f64, omega_mod: f64, eps_mod: f64, phase: f64) -> Self {
        Self {
            delta: 0.0,
            omega_main,
            omega_mod,
            eps_mod,
            phase: normalize_phase(phase),
            scheme: Scheme::AmplitudeMod,
            extra_tone: None,
            clip_level: None,
            lab_frame: None,
        }
    }

    /// Same drive from linear frequencies in MHz.
    pub fn resonant_mhz(omega_main: f64, omega_mod: f64, eps_mod: f64, phase: f64) -> Self {
        Self::resonant(
            mhz_to_angular(omega_main),
            mhz_to_angular(omega_mod),
            mhz_to_angular(eps_mod),
            phase,
        )
    }

    pub fn with_scheme(mut self, scheme: Scheme) -> Self {
        self.scheme = scheme;
        self
    }

    pub fn with_phase(mut self, phase: f64) -> Self {
        self.phase = normalize_phase(phase);
        self
    }

    pub fn with_delta(mut self, delta: f64) -> Self {
        self.delta = delta;
        self
    }

    pub fn with_extra_tone(mut self, tone: Option<ExtraTone>) -> Self {
        self.extra_tone = tone;
        self
    }

    /// Effective Rabi frequency sqrt(Omega^2 + delta^2).
    pub fn omega_rabi(&self) -> f64 {
        self.omega_main.hypot(self.delta)
    }

    /// Amplitude of the oscillating term in the first rotating frame:
    /// `eps_mod` for amplitude modulation, `eps_mod * omega_mod / omega_main`
    /// for phase modulation.
    pub fn modulation_amplitude(&self) -> f64 {
        match self.scheme {
            Scheme::AmplitudeMod => self.eps_mod,
            Scheme::PhaseMod => self.eps_mod * self.omega_mod / self.omega_main,
        }
    }

    /// Highest Fourier harmonic of `omega_mod` present in the rotating-frame
    /// Hamiltonian.
    pub fn bandwidth(&self) -> usize {
        let tone = self.extra_tone.map(|t| t.harmonic as usize).unwrap_or(0);
        if self.eps_mod == 0.0 && tone == 0 {
            0
        } else {
            tone.max(1)
        }
    }

    /// Set when the lab-frame carrier is not well above the drive strengths.
    pub fn first_rwa_warning(&self) -> bool {
        match self.lab_frame {
            Some(lab) => lab.omega0 < 10.0 * self.omega_main.max(self.eps_mod),
            None => false,
        }
    }

    pub fn validated(self) -> Result<Self> {
        let v = validate(&self);
        if v.is_empty() {
            Ok(self)
        } else {
            Err(Error::InvalidConfig(v))
        }
    }
}

pub fn normalize_phase(phi: f64) -> f64 {
    let p = phi.rem_euclid(TAU);
    if p >= TAU {
        0.0
    } else {
        p
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub field: String,
    pub rule: String,
}

impl Violation {
    fn new(field: &str, rule: &str) -> Self {
        Self {
            field: field.to_string(),
            rule: rule.to_string(),
        }
    }
}

/// Checks every configuration invariant and reports all failures.
pub fn validate(config: &DriveConfig) -> Vec<Violation> {
    let mut out = Vec::new();
    let finite = [
        ("delta", config.delta),
        ("omega_main", config.omega_main),
        ("omega_mod", config.omega_mod),
        ("eps_mod", config.eps_mod),
        ("phase", config.phase),
    ];
    for (name, value) in finite {
        if !value.is_finite() {
            out.push(Violation::new(name, &format!("{name} must be finite")));
        }
    }
    if !(config.omega_mod > 0.0) {
        out.push(Violation::new("omega_mod", "omega_mod must be positive"));
    }
    if config.omega_main < 0.0 {
        out.push(Violation::new("omega_main", "omega_main must be non-negative"));
    }
    if config.eps_mod < 0.0 {
        out.push(Violation::new("eps_mod", "eps_mod must be non-negative"));
    }
    if !(0.0..TAU).contains(&config.phase) {
        out.push(Violation::new("phase", "phase must lie in [0, 2pi)"));
    }
    if config.scheme == Scheme::PhaseMod && !(config.omega_main > 0.0) {
        out.push(Violation::new(
            "omega_main",
            "omega_main must be positive for phase modulation",
        ));
    }
    if let Some(tone) = config.extra_tone {
        if !tone.eps2.is_finite() || tone.eps2 < 0.0 {
            out.push(Violation::new(
                "extra_tone.eps2",
                "eps2 must be finite and non-negative",
            ));
        }
        if tone.harmonic < 2 {
            out.push(Violation::new(
                "extra_tone.harmonic",
                "harmonic must be at least 2",
            ));
        }
    }
    if let Some(c) = config.clip_level {
        if !(c > 0.0) {
            out.push(Violation::new("clip_level", "clip_level positive"));
        }
    }
    if let Some(lab) = config.lab_frame {
        if !(lab.omega0.is_finite() && lab.omega0 > 0.0) {
            out.push(Violation::new(
                "lab_frame.omega0",
                "omega0 must be finite and positive",
            ));
        }
        if !(lab.omega.is_finite() && lab.omega > 0.0) {
            out.push(Violation::new(
                "lab_frame.omega",
                "omega must be finite and positive",
            ));
        }
        let expected = lab.omega - lab.omega0;
        let scale = lab.omega0.abs().max(1.0);
        if (expected - config.delta).abs() > 1e-9 * scale {
            out.push(Violation::new(
                "delta",
                "delta must equal lab_frame.omega - lab_frame.omega0",
            ));
        }
    }
    out
}

/// Pure state `cos(theta/2)|0> + exp(i phi_s) sin(theta/2)|1>` in the first
/// rotating frame.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InitialState {
    pub theta: f64,
    pub phi_s: f64,
}

impl Default for InitialState {
    fn default() -> Self {
        Self::ground()
    }
}

impl InitialState {
    pub fn ground() -> Self {
        Self {
            theta: 0.0,
            phi_s: 0.0,
        }
    }

    pub fn new(theta: f64, phi_s: f64) -> Self {
        Self { theta, phi_s }
    }

    pub fn amplitudes(&self) -> Spinor {
        use num_complex::Complex64 as C64;
        [
            C64::new((0.5 * self.theta).cos(), 0.0),
            C64::from_polar((0.5 * self.theta).sin(), self.phi_s),
        ]
    }

    pub fn bloch(&self) -> [f64; 3] {
        let (s, c) = self.theta.sin_cos();
        [s * self.phi_s.cos(), s * self.phi_s.sin(), c]
    }

    pub fn from_bloch(b: [f64; 3]) -> Result<Self> {
        let r = (b[0] * b[0] + b[1] * b[1] + b[2] * b[2]).sqrt();
        if !r.is_finite() || (r - 1.0).abs() > 1e-9 {
            return Err(invalid("bloch", format!("vector norm {r} is not 1")));
        }
        let theta = (b[2] / r).clamp(-1.0, 1.0).acos();
        let phi_s = if b[0] == 0.0 && b[1] == 0.0 {
            0.0
        } else {
            normalize_phase(b[1].atan2(b[0]))
        };
        Ok(Self { theta, phi_s })
    }

    /// State from normalized amplitudes, global phase removed.
    pub fn from_amplitudes(psi: Spinor) -> Result<Self> {
        let n = (psi[0].norm_sqr() + psi[1].norm_sqr()).sqrt();
        if !(n > 0.0) {
            return Err(invalid("state", "zero vector"));
        }
        let a = psi[0].norm() / n;
        let theta = 2.0 * a.clamp(0.0, 1.0).acos();
        let rel = if psi[0].norm() == 0.0 || psi[1].norm() == 0.0 {
            psi[1].arg()
        } else {
            psi[1].arg() - psi[0].arg()
        };
        Ok(Self {
            theta,
            phi_s: if theta == 0.0 { 0.0 } else { normalize_phase(rel) },
        })
    }

    /// Member of an initial-state sweep plane.
    pub fn in_plane(plane: StatePlane, angle: f64) -> Self {
        match plane {
            StatePlane::ZY => Self::new(angle, PI / 2.0),
            StatePlane::ZX => Self::new(angle, 0.0),
            StatePlane::XY => Self::new(PI / 2.0, angle),
        }
    }
}

/// Plane traced by an initial-state sweep: ZY and ZX sweep `theta` at fixed
/// azimuth pi/2 and 0; XY sweeps the azimuth on the equator.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StatePlane {
    ZY,
    ZX,
    XY,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Envelope {
    None,
    #[serde(alias = "gauss")]
    Gaussian,
    #[serde(alias = "exp")]
    Exponential,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeTau {
    pub i: i8,
    pub n: u32,
    pub tau: f64,
}

/// Phenomenological per-mode decay. The DC term never decays.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayModel {
    pub envelope: Envelope,
    pub default_tau: f64,
    #[serde(default)]
    pub taus: Vec<ModeTau>,
}

impl Default for DecayModel {
    fn default() -> Self {
        Self::none()
    }
}

impl DecayModel {
    pub fn none() -> Self {
        Self {
            envelope: Envelope::None,
            default_tau: f64::INFINITY,
            taus: Vec::new(),
        }
    }

    pub fn uniform(envelope: Envelope, tau: f64) -> Result<Self> {
        let m = Self {
            envelope,
            default_tau: tau,
            taus: Vec::new(),
        };
        m.check()?;
        Ok(m)
    }

    pub fn with_mode(mut self, i: i8, n: u32, tau: f64) -> Result<Self> {
        self.taus.retain(|m| !(m.i == i && m.n == n));
        self.taus.push(ModeTau { i, n, tau });
        self.check()?;
        Ok(self)
    }

    fn check(&self) -> Result<()> {
        if self.envelope == Envelope::None {
            return Ok(());
        }
        let all_positive = self.default_tau > 0.0 && self.taus.iter().all(|m| m.tau > 0.0);
        if all_positive {
            Ok(())
        } else {
            Err(invalid("decay.tau", "all decay times must be positive"))
        }
    }

    pub fn tau(&self, i: i8, n: u32) -> f64 {
        self.taus
            .iter()
            .find(|m| m.i == i && m.n == n)
            .map(|m| m.tau)
            .unwrap_or(self.default_tau)
    }

    /// Envelope factor for mode (i, n) at time t.
    pub fn factor(&self, i: i8, n: u32, t: f64) -> f64 {
        if i == 0 && n == 0 {
            return 1.0;
        }
        let tau = self.tau(i, n);
        match self.envelope {
            Envelope::None => 1.0,
            Envelope::Gaussian => (-(t / tau).powi(2)).exp(),
            Envelope::Exponential => (-t / tau).exp(),
        }
    }
}

/// Uniform sampling grid `t0 + k dt`, k = 0..len.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub t0: f64,
    pub dt: f64,
    pub len: usize,
}

impl TimeGrid {
    pub fn new(t0: f64, dt: f64, len: usize) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() || !t0.is_finite() {
            return Err(invalid("grid", "dt must be positive and finite"));
        }
        Ok(Self { t0, dt, len })
    }

    /// Grid covering [0, t_max] inclusive.
    pub fn span(t_max: f64, dt: f64) -> Result<Self> {
        let len = (t_max / dt).round() as usize + 1;
        Self::new(0.0, dt, len)
    }

    #[inline]
    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len).map(move |k| self.time(k))
    }

    pub fn end(&self) -> f64 {
        self.time(self.len.saturating_sub(1))
    }
}

/// Sampled population P0(t).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeTrace {
    pub t0: f64,
    pub dt: f64,
    pub values: Vec<f64>,
}

impl TimeTrace {
    pub fn new(grid: TimeGrid, values: Vec<f64>) -> Self {
        debug_assert_eq!(grid.len, values.len());
        Self {
            t0: grid.t0,
            dt: grid.dt,
            values,
        }
    }

    pub fn grid(&self) -> TimeGrid {
        TimeGrid {
            t0: self.t0,
            dt: self.dt,
            len: self.values.len(),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Builds a trace from explicit sample times, rejecting non-uniform spacing.
    pub fn from_samples(times: &[f64], values: Vec<f64>) -> Result<Self> {
        if times.len() != values.len() {
            return Err(Error::GridMismatch(format!(
                "{} times for {} values",
                times.len(),
                values.len()
            )));
        }
        if times.len() < 2 {
            return Err(Error::NonUniformGrid("need at least two samples".into()));
        }
        let dt = (times[times.len() - 1] - times[0]) / (times.len() - 1) as f64;
        if !(dt > 0.0) {
            return Err(Error::NonUniformGrid("times must increase".into()));
        }
        for (k, t) in times.iter().enumerate() {
            let expect = times[0] + k as f64 * dt;
            if (t - expect).abs() > 1e-6 * dt {
                return Err(Error::NonUniformGrid(format!(
                    "sample {k} at t={t} deviates from uniform spacing {dt}"
                )));
            }
        }
        Ok(Self {
            t0: times[0],
            dt,
            values,
        })
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len().max(1) as f64
    }

    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t_us,value")?;
        for (k, v) in self.values.iter().enumerate() {
            writeln!(w, "{},{}", self.t0 + k as f64 * self.dt, v)?;
        }
        Ok(())
    }

    pub fn read_csv<R: std::io::BufRead>(r: R) -> Result<Self> {
        let mut times = Vec::new();
        let mut values = Vec::new();
        for (lineno, line) in r.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || (lineno == 0 && line.starts_with('t')) {
                continue;
            }
            let mut it = line.split(',');
            let parse = |s: Option<&str>| -> Result<f64> {
                s.and_then(|x| x.trim().parse::<f64>().ok()).ok_or_else(|| {
                    invalid("trace", format!("malformed line {}: '{line}'", lineno + 1))
                })
            };
            times.push(parse(it.next())?);
            values.push(parse(it.next())?);
        }
        Self::from_samples(&times, values)
    }
}

/// Model tags used in spectra, sweeps and exports.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelTag {
    Floquet,
    Rwa,
    RwaFloquet,
    Effective,
    Trotter,
}

impl ModelTag {
    pub const ALL: [ModelTag; 5] = [
        ModelTag::Floquet,
        ModelTag::Rwa,
        ModelTag::RwaFloquet,
        ModelTag::Effective,
        ModelTag::Trotter,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelTag::Floquet => "floquet",
            ModelTag::Rwa => "rwa",
            ModelTag::RwaFloquet => "rwa_floquet",
            ModelTag::Effective => "effective",
            ModelTag::Trotter => "trotter",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.as_str() == s)
    }
}

impl std::fmt::Display for ModelTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

// ---------------------------------------------------------------------------
// Configuration file (MHz at the boundary)

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExtraToneFile {
    #[serde(rename = "eps2_MHz")]
    pub eps2_mhz: f64,
    pub harmonic: u32,
    pub axis: Axis,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabFrameFile {
    #[serde(rename = "omega0_MHz")]
    pub omega0_mhz: f64,
    #[serde(rename = "omega_MHz")]
    pub omega_mhz: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialStateFile {
    pub theta_rad: f64,
    pub phi_s_rad: f64,
}

/// Flat JSON configuration document. Unknown keys are rejected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(rename = "delta_MHz", default)]
    pub delta_mhz: f64,
    #[serde(rename = "omega_main_MHz")]
    pub omega_main_mhz: f64,
    #[serde(rename = "omega_mod_MHz")]
    pub omega_mod_mhz: f64,
    #[serde(rename = "eps_mod_MHz")]
    pub eps_mod_mhz: f64,
    #[serde(default)]
    pub phase_rad: f64,
    #[serde(default = "default_scheme")]
    pub scheme: Scheme,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extra_tone: Option<ExtraToneFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clip_level: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lab_frame: Option<LabFrameFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_state: Option<InitialStateFile>,
}

fn default_scheme() -> Scheme {
    Scheme::AmplitudeMod
}

impl ConfigFile {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Converts to internal units and validates. The clip level is a
    /// waveform amplitude in MHz and is converted like a frequency.
    pub fn ingest(&self) -> Result<(DriveConfig, InitialState)> {
        let cfg = DriveConfig {
            delta: mhz_to_angular(self.delta_mhz),
            omega_main: mhz_to_angular(self.omega_main_mhz),
            omega_mod: mhz_to_angular(self.omega_mod_mhz),
            eps_mod: mhz_to_angular(self.eps_mod_mhz),
            phase: normalize_phase(self.phase_rad),
            scheme: self.scheme,
            extra_tone: self.extra_tone.as_ref().map(|t| ExtraTone {
                eps2: mhz_to_angular(t.eps2_mhz),
                harmonic: t.harmonic,
                axis: t.axis,
            }),
            clip_level: self.clip_level.map(mhz_to_angular),
            lab_frame: self.lab_frame.as_ref().map(|l| LabFrame {
                omega0: mhz_to_angular(l.omega0_mhz),
                omega: mhz_to_angular(l.omega_mhz),
            }),
        };
        let psi = self
            .initial_state
            .as_ref()
            .map(|s| InitialState::new(s.theta_rad, s.phi_s_rad))
            .unwrap_or_default();
        Ok((cfg.validated()?, psi))
    }

    pub fn from_parts(cfg: &DriveConfig, psi: Option<&InitialState>) -> Self {
        Self {
            delta_mhz: angular_to_mhz(cfg.delta),
            omega_main_mhz: angular_to_mhz(cfg.omega_main),
            omega_mod_mhz: angular_to_mhz(cfg.omega_mod),
            eps_mod_mhz: angular_to_mhz(cfg.eps_mod),
            phase_rad: cfg.phase,
            scheme: cfg.scheme,
            extra_tone: cfg.extra_tone.map(|t| ExtraToneFile {
                eps2_mhz: angular_to_mhz(t.eps2),
                harmonic: t.harmonic,
                axis: t.axis,
            }),
            clip_level: cfg.clip_level.map(angular_to_mhz),
            lab_frame: cfg.lab_frame.map(|l| LabFrameFile {
                omega0_mhz: angular_to_mhz(l.omega0),
                omega_mhz: angular_to_mhz(l.omega),
            }),
            initial_state: psi.map(|s| InitialStateFile {
                theta_rad: s.theta,
                phi_s_rad: s.phi_s,
            }),
        }
    }

    /// Applies dotted `key=value` overrides (e.g. `extra_tone.eps2_MHz=0.2`).
    /// Values are parsed as JSON, falling back to a bare string.
    pub fn with_overrides<S: AsRef<str>>(&self, overrides: &[S]) -> Result<Self> {
        let mut doc = serde_json::to_value(self)?;
        for ov in overrides {
            let ov = ov.as_ref();
            let (key, raw) = ov
                .split_once('=')
                .ok_or_else(|| invalid("override", format!("'{ov}' is not key=value")))?;
            let value: serde_json::Value = serde_json::from_str(raw)
                .unwrap_or_else(|_| serde_json::Value::String(raw.to_string()));
            let mut node = &mut doc;
            let parts: Vec<&str> = key.split('.').collect();
            for (depth, part) in parts.iter().enumerate() {
                let obj = node.as_object_mut().ok_or_else(|| {
                    invalid("override", format!("'{key}' does not address an object"))
                })?;
                if depth + 1 == parts.len() {
                    obj.insert(part.to_string(), value.clone());
                    break;
                }
                node = obj
                    .entry(part.to_string())
                    .or_insert_with(|| serde_json::Value::Object(Default::default()));
            }
        }
        Ok(serde_json::from_value(doc)?)
    }
}
