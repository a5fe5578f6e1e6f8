//! Parameter sweeps, figure presets, multi-model comparison and export.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, TAU};
use std::io::Write;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::effective;
use crate::error::{invalid, Error, Result};
use crate::floquet::{self, Convention, EigenPairs, FloquetSolution};
use crate::model::{
    angular_to_mhz, Axis, ConfigFile, DecayModel, DriveConfig, Envelope, ExtraToneFile,
    InitialState, InitialStateFile, ModelTag, Scheme, StatePlane, TimeGrid, TimeTrace,
};
use crate::modes::ModeSpectrum;
use crate::propagator::{self, Frame, TrotterOptions};
use crate::rwa;
use crate::spectral::{self, FitResult, Peak, SpectrumOptions};

/// Relative height threshold used for peak lists in sweep records.
pub const PEAK_THRESHOLD: f64 = 0.01;
/// Truncation used by the block-diagonal RWA route when none is fixed. Its
/// quasienergies are exact for any K >= 1; K only bounds the ladder length.
pub const RWA_FLOQUET_K: usize = 4;

// ---------------------------------------------------------------------------
// Specification

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "parameter", rename_all = "snake_case")]
pub enum SweepAxis {
    /// Modulation phase, rad.
    Phase,
    /// Initial-state angle in a plane, rad.
    Theta { plane: StatePlane },
    /// Main drive strength, MHz.
    OmegaMain,
    /// Modulation strength, MHz.
    EpsMod,
}

impl SweepAxis {
    pub fn label(&self) -> String {
        match self {
            SweepAxis::Phase => "phase_rad".into(),
            SweepAxis::Theta { plane } => format!("theta_{plane:?}_rad").to_lowercase(),
            SweepAxis::OmegaMain => "omega_main_MHz".into(),
            SweepAxis::EpsMod => "eps_mod_MHz".into(),
        }
    }

    fn apply(&self, base: &ConfigFile, v: f64) -> ConfigFile {
        let mut c = base.clone();
        match self {
            SweepAxis::Phase => c.phase_rad = v,
            SweepAxis::Theta { plane } => {
                let s = InitialState::in_plane(*plane, v);
                c.initial_state = Some(InitialStateFile {
                    theta_rad: s.theta,
                    phi_s_rad: s.phi_s,
                });
            }
            SweepAxis::OmegaMain => c.omega_main_mhz = v,
            SweepAxis::EpsMod => c.eps_mod_mhz = v,
        }
        c
    }
}

/// How drive saturation is represented in a preset.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Saturation {
    #[default]
    None,
    /// Rotating-frame tone `eps2 cos(h w_m t) s_axis`.
    ExtraTone,
    /// Lab-frame waveform clipping.
    Clipping,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceSpec {
    pub t_max_us: f64,
    pub dt_us: f64,
    /// Propagator step for trotter runs; defaults to the largest admissible step.
    #[serde(default)]
    pub trotter_step_us: Option<f64>,
}

impl Default for TraceSpec {
    fn default() -> Self {
        Self {
            t_max_us: 4.0,
            dt_us: 0.01,
            trotter_step_us: None,
        }
    }
}

impl TraceSpec {
    pub fn grid(&self) -> Result<TimeGrid> {
        if !(self.t_max_us > 0.0) || !(self.dt_us > 0.0) {
            return Err(invalid("trace", "t_max_us and dt_us must be positive"));
        }
        TimeGrid::span(self.t_max_us, self.dt_us)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Outputs {
    #[serde(default = "yes")]
    pub modes: bool,
    #[serde(default)]
    pub spectrum: bool,
    #[serde(default)]
    pub fit: bool,
}

fn yes() -> bool {
    true
}

impl Default for Outputs {
    fn default() -> Self {
        Self {
            modes: true,
            spectrum: false,
            fit: false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitSpec {
    pub n_components: usize,
    pub envelope: Envelope,
}

impl Default for FitSpec {
    fn default() -> Self {
        Self {
            n_components: 3,
            envelope: Envelope::Gaussian,
        }
    }
}

/// Per-point computation settings shared by sweeps and single solves.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunOptions {
    pub models: Vec<ModelTag>,
    #[serde(default = "default_convention")]
    pub convention: Convention,
    #[serde(default = "default_n_max")]
    pub n_max: u32,
    /// Fixed truncation; converged per point when absent.
    #[serde(default)]
    pub k: Option<usize>,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default)]
    pub trace: TraceSpec,
    #[serde(default)]
    pub decay: Option<DecayModel>,
    #[serde(default)]
    pub fit: FitSpec,
    #[serde(default)]
    pub outputs: Outputs,
}

fn default_convention() -> Convention {
    Convention::FirstZone
}

fn default_n_max() -> u32 {
    floquet::DEFAULT_N_MAX
}

fn default_tol() -> f64 {
    floquet::DEFAULT_TOL
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            models: vec![ModelTag::Floquet, ModelTag::Rwa],
            convention: default_convention(),
            n_max: default_n_max(),
            k: None,
            tol: default_tol(),
            trace: TraceSpec::default(),
            decay: None,
            fit: FitSpec::default(),
            outputs: Outputs::default(),
        }
    }
}

impl RunOptions {
    fn check(&self) -> Result<()> {
        if self.models.is_empty() {
            return Err(invalid("models", "at least one model is required"));
        }
        for (j, m) in self.models.iter().enumerate() {
            if self.models[..j].contains(m) {
                return Err(invalid("models", format!("'{m}' listed twice")));
            }
        }
        if !(self.tol > 0.0) {
            return Err(invalid("tol", "must be positive"));
        }
        if self.fit.n_components == 0 || self.fit.n_components > spectral::MAX_COMPONENTS {
            return Err(invalid("fit.n_components", "must lie in 1..=6"));
        }
        self.trace.grid()?;
        Ok(())
    }

    fn decay(&self) -> DecayModel {
        self.decay.clone().unwrap_or_default()
    }

    fn needs_trace(&self) -> bool {
        self.outputs.spectrum || self.outputs.fit
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub base: ConfigFile,
    pub axis: SweepAxis,
    /// Ordered sweep values, in the unit named by the axis label.
    pub grid: Vec<f64>,
    /// When set, the extra tone strength follows `ratio * eps_mod` at every point.
    #[serde(default)]
    pub tone_ratio: Option<f64>,
    #[serde(default)]
    pub saturation: Saturation,
    pub run: RunOptions,
}

impl SweepSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid.len() < 2 {
            return Err(invalid("grid", "need at least two points"));
        }
        if self.grid.iter().any(|v| !v.is_finite()) {
            return Err(invalid("grid", "values must be finite"));
        }
        let up = self.grid.windows(2).all(|w| w[1] > w[0]);
        let down = self.grid.windows(2).all(|w| w[1] < w[0]);
        if !(up || down) {
            return Err(invalid("grid", "values must be strictly monotone"));
        }
        if let Some(r) = self.tone_ratio {
            if !(r >= 0.0) {
                return Err(invalid("tone_ratio", "must be non-negative"));
            }
        }
        self.run.check()
    }

    /// Configuration file of one grid point.
    pub fn point_config(&self, v: f64) -> ConfigFile {
        let mut c = self.axis.apply(&self.base, v);
        if let Some(r) = self.tone_ratio {
            let (harmonic, axis) = self
                .base
                .extra_tone
                .as_ref()
                .map(|t| (t.harmonic, t.axis))
                .unwrap_or((2, Axis::Y));
            c.extra_tone = Some(ExtraToneFile {
                eps2_mhz: r * c.eps_mod_mhz,
                harmonic,
                axis,
            });
        }
        c
    }
}

// ---------------------------------------------------------------------------
// Results

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Quasi {
    pub k: usize,
    pub lambda_plus: f64,
    pub lambda_minus: f64,
    pub delta_lambda: f64,
    pub degenerate: bool,
    pub residual: f64,
}

impl Quasi {
    fn of(sol: &FloquetSolution) -> Self {
        Self {
            k: sol.k,
            lambda_plus: sol.lambda_plus(),
            lambda_minus: sol.lambda_minus(),
            delta_lambda: sol.delta_lambda(),
            degenerate: sol.degenerate,
            residual: sol.residual,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceDigest {
    pub len: usize,
    pub t0: f64,
    pub dt: f64,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

impl TraceDigest {
    pub fn of(trace: &TimeTrace) -> Self {
        let (min, max) = trace
            .values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        Self {
            len: trace.len(),
            t0: trace.t0,
            dt: trace.dt,
            mean: trace.mean(),
            min,
            max,
        }
    }
}

/// Positive-frequency FFT heights of a trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumData {
    pub df_mhz: f64,
    pub heights: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelRecord {
    pub model: ModelTag,
    /// Splitting `lambda+ - lambda-`, rad/us.
    pub delta_lambda: Option<f64>,
    pub omega_mod: Option<f64>,
    pub quasi: Option<Quasi>,
    pub modes: Option<ModeSpectrum>,
    pub trace: Option<TraceDigest>,
    pub peaks: Option<Vec<Peak>>,
    pub spectrum: Option<SpectrumData>,
    pub fit: Option<FitResult>,
    pub error: Option<String>,
}

impl ModelRecord {
    fn empty(model: ModelTag) -> Self {
        Self {
            model,
            delta_lambda: None,
            omega_mod: None,
            quasi: None,
            modes: None,
            trace: None,
            peaks: None,
            spectrum: None,
            fit: None,
            error: None,
        }
    }

    fn failed(model: ModelTag, e: &Error) -> Self {
        let mut r = Self::empty(model);
        r.error = Some(e.to_string());
        r
    }

}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointResult {
    pub index: usize,
    pub value: f64,
    pub records: Vec<ModelRecord>,
    pub error: Option<String>,
}

impl PointResult {
    pub fn record(&self, model: ModelTag) -> Option<&ModelRecord> {
        self.records.iter().find(|r| r.model == model)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub name: String,
    pub axis: SweepAxis,
    pub models: Vec<ModelTag>,
    pub convention: Convention,
    pub n_max: u32,
    pub saturation: Saturation,
    pub points: Vec<PointResult>,
    /// Wall-clock seconds; never serialized so exports stay deterministic.
    #[serde(skip)]
    pub runtime_s: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "csv" => Some(Format::Csv),
            "json" => Some(Format::Json),
            _ => None,
        }
    }
}

impl SweepResult {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn values(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.value).collect()
    }

    /// Long format: one row per (point, model, mode).
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "sweep_value,model,i,n,freq_MHz,amp,phase_rad")?;
        for p in &self.points {
            for r in &p.records {
                let Some(m) = &r.modes else { continue };
                for e in &m.entries {
                    writeln!(
                        w,
                        "{},{},{},{},{},{},{}",
                        p.value,
                        r.model,
                        e.i,
                        e.n,
                        angular_to_mhz(e.omega),
                        e.amp,
                        e.phase
                    )?;
                }
            }
        }
        Ok(())
    }

    /// Quasienergy branches per point and model.
    pub fn write_branches_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(
            w,
            "sweep_value,model,K,lambda_plus_MHz,lambda_minus_MHz,delta_lambda_MHz,degenerate"
        )?;
        for p in &self.points {
            for r in &p.records {
                if let Some(q) = r.quasi {
                    writeln!(
                        w,
                        "{},{},{},{},{},{},{}",
                        p.value,
                        r.model,
                        q.k,
                        angular_to_mhz(q.lambda_plus),
                        angular_to_mhz(q.lambda_minus),
                        angular_to_mhz(q.delta_lambda),
                        q.degenerate
                    )?;
                } else if let Some(dl) = r.delta_lambda {
                    writeln!(w, "{},{},,,,{},", p.value, r.model, angular_to_mhz(dl))?;
                }
            }
        }
        Ok(())
    }

    /// FFT heatmap rows: (sweep value, model, frequency, height).
    pub fn write_heatmap_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "sweep_value,model,f_MHz,abs")?;
        for p in &self.points {
            for r in &p.records {
                let Some(s) = &r.spectrum else { continue };
                for (k, h) in s.heights.iter().enumerate() {
                    writeln!(w, "{},{},{},{}", p.value, r.model, k as f64 * s.df_mhz, h)?;
                }
            }
        }
        Ok(())
    }

    /// Per-point, per-model scalar series, `None` where the model failed.
    pub fn series(&self, model: ModelTag, f: impl Fn(&ModelRecord) -> Option<f64>) -> Vec<(f64, Option<f64>)> {
        self.points
            .iter()
            .map(|p| (p.value, p.record(model).and_then(|r| f(r))))
            .collect()
    }
}

pub fn export<W: Write>(result: &SweepResult, format: Format, mut sink: W) -> Result<()> {
    match format {
        Format::Csv => result.write_csv(sink),
        Format::Json => {
            sink.write_all(result.to_json()?.as_bytes())?;
            sink.write_all(b"\n")?;
            Ok(())
        }
    }
}

// ---------------------------------------------------------------------------
// Execution

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    /// Data-parallel over grid points; `jobs` caps the worker count. Falls
    /// back to sequential execution when built without the `parallel` feature.
    Parallel { jobs: Option<usize> },
}

impl Default for Execution {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Execution::Parallel { jobs: None }
        } else {
            Execution::Sequential
        }
    }
}

#[cfg(feature = "parallel")]
fn map_points<T, F>(n: usize, exec: Execution, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    match exec {
        Execution::Sequential => Ok((0..n).map(f).collect()),
        Execution::Parallel { jobs: None } => Ok((0..n).into_par_iter().map(f).collect()),
        Execution::Parallel { jobs: Some(j) } => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(j.max(1))
                .build()
                .map_err(|e| invalid("jobs", e.to_string()))?;
            Ok(pool.install(|| (0..n).into_par_iter().map(f).collect()))
        }
    }
}

#[cfg(not(feature = "parallel"))]
fn map_points<T, F>(n: usize, _exec: Execution, f: F) -> Result<Vec<T>>
where
    F: Fn(usize) -> T,
{
    Ok((0..n).map(f).collect())
}

/// Population trace of one model on the run grid, without analysis.
pub fn model_trace(model: ModelTag, config: &DriveConfig, psi0: &InitialState, run: &RunOptions) -> Result<TimeTrace> {
    let grid = run.trace.grid()?;
    match model {
        ModelTag::Trotter => {
            let step = run.trace.trotter_step_us.unwrap_or_else(|| {
                let limit = propagator::step_limit(config, Frame::Rotating);
                grid.dt.min(0.999 * limit)
            });
            propagator::trotter_evolve_with(config, psi0, grid, &TrotterOptions::rotating(step))
        }
        _ => {
            let spec = model_spectrum(model, config, psi0, run, None)?.1;
            Ok(spec.reconstruct(grid, &run.decay()))
        }
    }
}

fn floquet_k(config: &DriveConfig, psi0: &InitialState, run: &RunOptions) -> Result<usize> {
    match run.k {
        Some(k) => Ok(k),
        None => floquet::converge_truncation(config, psi0, run.tol),
    }
}

fn floquet_pairs(config: &DriveConfig, psi0: &InitialState, run: &RunOptions) -> Result<(usize, EigenPairs)> {
    let k = floquet_k(config, psi0, run)?;
    let blocks = floquet::fourier_components(config)?;
    let m = floquet::assemble(&blocks, config.omega_mod, k)?;
    Ok((k, floquet::eigensolve(&m)?))
}

fn floquet_select(
    pairs: &EigenPairs,
    k: usize,
    config: &DriveConfig,
    psi0: &InitialState,
    run: &RunOptions,
    reference: Option<&FloquetSolution>,
) -> Result<(FloquetSolution, ModeSpectrum)> {
    let sol = floquet::select_quasienergies(pairs, k, config.omega_mod, run.convention, reference)?;
    let m = floquet::match_initial_state(&sol, &psi0.amplitudes())?;
    let spec = floquet::mode_amplitudes(&sol, &m, run.n_max);
    Ok((sol, spec))
}

/// Mode spectrum of a mode-based model; the Floquet solution is returned
/// for the models that have one.
pub fn model_spectrum(
    model: ModelTag,
    config: &DriveConfig,
    psi0: &InitialState,
    run: &RunOptions,
    reference: Option<&FloquetSolution>,
) -> Result<(Option<FloquetSolution>, ModeSpectrum)> {
    match model {
        ModelTag::Floquet => {
            let (k, pairs) = floquet_pairs(config, psi0, run)?;
            let (sol, spec) = floquet_select(&pairs, k, config, psi0, run, reference)?;
            Ok((Some(sol), spec))
        }
        ModelTag::Rwa => Ok((None, rwa::rwa_spectrum(config, psi0, run.n_max)?)),
        ModelTag::RwaFloquet => {
            let k = run.k.unwrap_or(RWA_FLOQUET_K);
            let sol = rwa::rwa_floquet_solve(config, k)?;
            let m = floquet::match_initial_state(&sol, &psi0.amplitudes())?;
            let mut spec = floquet::mode_amplitudes(&sol, &m, run.n_max);
            spec.model = ModelTag::RwaFloquet;
            Ok((Some(sol), spec))
        }
        ModelTag::Effective => Ok((None, effective::effective_spectrum(config, psi0, run.n_max)?)),
        ModelTag::Trotter => Err(Error::NotApplicable {
            model: "trotter",
            reason: "produces traces, not mode spectra".into(),
        }),
    }
}

fn analyse(record: &mut ModelRecord, trace: &TimeTrace, run: &RunOptions) {
    record.trace = Some(TraceDigest::of(trace));
    if run.outputs.spectrum {
        match spectral::fft_spectrum(trace, &SpectrumOptions::default())
            .and_then(|s| Ok((spectral::detect_peaks(&s, PEAK_THRESHOLD)?, s)))
        {
            Ok((peaks, s)) => {
                record.peaks = Some(peaks);
                record.spectrum = Some(SpectrumData {
                    df_mhz: s.resolution(),
                    heights: s.heights(),
                });
            }
            Err(e) => record.error = Some(e.to_string()),
        }
    }
    if run.outputs.fit {
        match spectral::fit_modes(trace, run.fit.n_components, run.fit.envelope, None) {
            Ok(f) => record.fit = Some(f),
            Err(e) => record.error = Some(e.to_string()),
        }
    }
}

fn finish_modes(
    model: ModelTag,
    sol: Option<&FloquetSolution>,
    spec: ModeSpectrum,
    run: &RunOptions,
) -> (ModelRecord, Option<TimeTrace>) {
    let mut r = ModelRecord::empty(model);
    r.quasi = sol.map(Quasi::of);
    let trace = if run.needs_trace() {
        match run.trace.grid() {
            Ok(g) => {
                let t = spec.reconstruct(g, &run.decay());
                analyse(&mut r, &t, run);
                Some(t)
            }
            Err(e) => {
                r.error = Some(e.to_string());
                None
            }
        }
    } else {
        None
    };
    r.delta_lambda = Some(spec.delta_lambda);
    r.omega_mod = Some(spec.omega_mod);
    if run.outputs.modes {
        r.modes = Some(spec);
    }
    (r, trace)
}

fn other_model(model: ModelTag, config: &DriveConfig, psi0: &InitialState, run: &RunOptions) -> (ModelRecord, Option<TimeTrace>) {
    if model == ModelTag::Trotter {
        return match model_trace(model, config, psi0, run) {
            Ok(t) => {
                let mut r = ModelRecord::empty(model);
                analyse(&mut r, &t, run);
                (r, Some(t))
            }
            Err(e) => (ModelRecord::failed(model, &e), None),
        };
    }
    match model_spectrum(model, config, psi0, run, None) {
        Ok((sol, spec)) => finish_modes(model, sol.as_ref(), spec, run),
        Err(e) => (ModelRecord::failed(model, &e), None),
    }
}

/// Records and in-memory traces of all requested models at one point.
#[derive(Clone, Debug)]
pub struct PointEvaluation {
    pub records: Vec<ModelRecord>,
    pub traces: Vec<(ModelTag, TimeTrace)>,
    pub floquet: Option<FloquetSolution>,
}

fn collect_traces(records: &[(ModelRecord, Option<TimeTrace>)]) -> Vec<(ModelTag, TimeTrace)> {
    records
        .iter()
        .filter_map(|(r, t)| t.clone().map(|t| (r.model, t)))
        .collect()
}

/// Evaluates every requested model at one configuration. Traces are always
/// produced so that callers can compare or export them.
pub fn evaluate_point(
    config: &DriveConfig,
    psi0: &InitialState,
    run: &RunOptions,
    reference: Option<&FloquetSolution>,
) -> Result<PointEvaluation> {
    run.check()?;
    let grid = run.trace.grid()?;
    let mut out = Vec::new();
    let mut floq = None;
    for &m in &run.models {
        let (mut rec, trace) = match m {
            ModelTag::Floquet => match model_spectrum(m, config, psi0, run, reference) {
                Ok((sol, spec)) => {
                    let r = finish_modes(m, sol.as_ref(), spec, run);
                    floq = sol;
                    r
                }
                Err(e) => (ModelRecord::failed(m, &e), None),
            },
            _ => other_model(m, config, psi0, run),
        };
        let trace = match (trace, &rec.modes) {
            (Some(t), _) => Some(t),
            (None, Some(spec)) => Some(spec.reconstruct(grid, &run.decay())),
            (None, None) => None,
        };
        if rec.trace.is_none() {
            rec.trace = trace.as_ref().map(TraceDigest::of);
        }
        out.push((rec, trace));
    }
    let traces = collect_traces(&out);
    Ok(PointEvaluation {
        records: out.into_iter().map(|(r, _)| r).collect(),
        traces,
        floquet: floq,
    })
}

enum Stage1 {
    Done(ModelRecord),
    Pairs(Result<(usize, EigenPairs)>),
}

/// Runs a sweep. Per-point work runs in parallel; Smooth continuation of the
/// Floquet branches is a sequential left-to-right pass.
pub fn run_sweep(spec: &SweepSpec, exec: Execution) -> Result<SweepResult> {
    spec.validate()?;
    let start = Instant::now();
    let run = &spec.run;
    let n = spec.grid.len();
    let settings: Vec<Result<(DriveConfig, InitialState)>> = spec
        .grid
        .iter()
        .map(|&v| spec.point_config(v).ingest())
        .collect();

    let stage1: Vec<Vec<Stage1>> = map_points(n, exec, |j| {
        let Ok((cfg, psi)) = &settings[j] else {
            return Vec::new();
        };
        run.models
            .iter()
            .map(|&m| match m {
                ModelTag::Floquet => Stage1::Pairs(floquet_pairs(cfg, psi, run)),
                _ => Stage1::Done(other_model(m, cfg, psi, run).0),
            })
            .collect()
    })?;

    let mut selected: Vec<Option<Result<(FloquetSolution, ModeSpectrum)>>> = Vec::with_capacity(n);
    let mut prev: Option<FloquetSolution> = None;
    for (j, work) in stage1.iter().enumerate() {
        let sel = work.iter().find_map(|w| match w {
            Stage1::Pairs(p) => Some(p),
            Stage1::Done(_) => None,
        });
        let (Some(p), Ok((cfg, psi))) = (sel, &settings[j]) else {
            selected.push(None);
            continue;
        };
        let r = match p {
            Ok((k, pairs)) => floquet_select(pairs, *k, cfg, psi, run, prev.as_ref()),
            Err(e) => Err(Error::Selection(e.to_string())),
        };
        if let Ok((sol, _)) = &r {
            prev = Some(sol.clone());
        }
        selected.push(Some(r));
    }

    let floquet_records: Vec<Option<ModelRecord>> = map_points(n, exec, |j| {
        selected[j].as_ref().map(|r| match r {
            Ok((sol, s)) => finish_modes(ModelTag::Floquet, Some(sol), s.clone(), run).0,
            Err(e) => {
                let mut rec = ModelRecord::empty(ModelTag::Floquet);
                rec.error = Some(match e {
                    Error::Selection(s) => s.clone(),
                    other => other.to_string(),
                });
                rec
            }
        })
    })?;

    let mut points = Vec::with_capacity(n);
    for (j, (work, fr)) in stage1.into_iter().zip(floquet_records).enumerate() {
        let error = settings[j].as_ref().err().map(|e| e.to_string());
        let mut fr = fr;
        let records = work
            .into_iter()
            .map(|w| match w {
                Stage1::Done(r) => r,
                Stage1::Pairs(_) => fr.take().expect("floquet record for every floquet slot"),
            })
            .collect();
        points.push(PointResult {
            index: j,
            value: spec.grid[j],
            records,
            error,
        });
    }
    Ok(SweepResult {
        name: spec.name.clone(),
        axis: spec.axis,
        models: run.models.clone(),
        convention: run.convention,
        n_max: run.n_max,
        saturation: spec.saturation,
        points,
        runtime_s: start.elapsed().as_secs_f64(),
    })
}

// ---------------------------------------------------------------------------
// Analysis helpers

/// Vertex of the parabola through three equally spaced samples around the
/// discrete minimum; `(x, y)` of the refined extremum.
pub fn refined_minimum(xs: &[f64], ys: &[f64]) -> Option<(f64, f64)> {
    let (j, _) = ys
        .iter()
        .enumerate()
        .filter(|(_, y)| y.is_finite())
        .min_by(|a, b| a.1.total_cmp(b.1))?;
    if j == 0 || j + 1 >= ys.len() || !ys[j - 1].is_finite() || !ys[j + 1].is_finite() {
        return Some((xs[j], ys[j]));
    }
    let (a, b, c) = (ys[j - 1], ys[j], ys[j + 1]);
    let den = a - 2.0 * b + c;
    if den <= 0.0 {
        return Some((xs[j], b));
    }
    let d = (0.5 * (a - c) / den).clamp(-1.0, 1.0);
    let h = if d >= 0.0 { xs[j + 1] - xs[j] } else { xs[j] - xs[j - 1] };
    Some((xs[j] + d * h, b - 0.25 * (a - c) * d))
}

/// Closest approach of the branches `delta` and `order w_m - delta`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapAnalysis {
    pub order: u32,
    /// Smallest `|order w_m - 2 delta|` on the grid, in MHz.
    pub min_gap_mhz: f64,
    /// Refined sweep value of the closest approach.
    pub at: f64,
    /// Whether `order w_m - 2 delta` changes sign between neighbours.
    pub crosses: bool,
    pub samples: usize,
}

/// Gap between the `delta` and `order w_m - delta` branches of `model`,
/// optionally restricted to a window of sweep values.
pub fn branch_gap(result: &SweepResult, model: ModelTag, order: u32, window: Option<(f64, f64)>) -> Result<GapAnalysis> {
    let mut xs = Vec::new();
    let mut signed = Vec::new();
    for p in &result.points {
        if let Some((lo, hi)) = window {
            if p.value < lo || p.value > hi {
                continue;
            }
        }
        let Some(r) = p.record(model) else { continue };
        let (Some(dl), Some(w)) = (r.delta_lambda, r.omega_mod) else {
            continue;
        };
        xs.push(p.value);
        signed.push(angular_to_mhz(order as f64 * w - 2.0 * dl));
    }
    if xs.len() < 3 {
        return Err(invalid("sweep", "need at least three usable points for a gap scan"));
    }
    let crosses = signed.windows(2).any(|w| w[0] * w[1] <= 0.0);
    let abs: Vec<f64> = signed.iter().map(|g| g.abs()).collect();
    let (at, _) = refined_minimum(&xs, &abs).expect("non-empty");
    let min = abs.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(GapAnalysis {
        order,
        min_gap_mhz: min,
        at,
        crosses,
        samples: xs.len(),
    })
}

/// Sweep value minimising `|a+1,1| + |a-1,1|`, parabolically refined.
pub fn sideband_minimum(result: &SweepResult, model: ModelTag) -> Option<(f64, f64)> {
    let s = result.series(model, |r| {
        r.modes
            .as_ref()
            .map(|m| m.amplitude(1, 1) + m.amplitude(-1, 1))
    });
    let xs: Vec<f64> = s.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = s.iter().map(|p| p.1.unwrap_or(f64::NAN)).collect();
    refined_minimum(&xs, &ys)
}

// ---------------------------------------------------------------------------
// Model comparison

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeDeviation {
    pub i: i8,
    pub n: u32,
    /// |delta omega|, rad/us.
    pub d_omega: f64,
    pub d_amp: f64,
    /// |delta a| / |a_ref|; absent when the reference amplitude vanishes.
    pub rel_amp: Option<f64>,
    pub rel_omega: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelDeviation {
    pub model: ModelTag,
    pub modes: Vec<ModeDeviation>,
    pub max_d_omega: f64,
    pub max_d_amp: f64,
    /// Largest relative amplitude deviation over the n = 1 modes.
    pub max_rel_amp_n1: Option<f64>,
    /// Sup-norm distance of population traces, when both are available.
    pub trace_sup_norm: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub reference: ModelTag,
    /// Sideband asymmetry per model with a mode spectrum.
    pub asymmetry: Vec<(ModelTag, f64)>,
    pub deviations: Vec<ModelDeviation>,
}

impl ComparisonReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

const AMP_FLOOR: f64 = 1e-12;

fn rel(d: f64, r: f64) -> Option<f64> {
    (r.abs() > AMP_FLOOR).then(|| d / r.abs())
}

fn deviation(reference: &ModeSpectrum, other: &ModeSpectrum, model: ModelTag) -> ModelDeviation {
    let mut modes = Vec::new();
    for e in &reference.entries {
        let (o_omega, o_amp) = other
            .get(e.i, e.n)
            .map(|x| (x.omega, x.amp))
            .unwrap_or((e.omega, 0.0));
        let d_omega = (e.omega - o_omega).abs();
        let d_amp = (e.amp - o_amp).abs();
        modes.push(ModeDeviation {
            i: e.i,
            n: e.n,
            d_omega,
            d_amp,
            rel_amp: rel(d_amp, e.amp),
            rel_omega: rel(d_omega, e.omega),
        });
    }
    let max_d_omega = modes.iter().map(|m| m.d_omega).fold(0.0, f64::max);
    let max_d_amp = modes.iter().map(|m| m.d_amp).fold(0.0, f64::max);
    let max_rel_amp_n1 = modes
        .iter()
        .filter(|m| m.n == 1)
        .filter_map(|m| m.rel_amp)
        .reduce(f64::max);
    ModelDeviation {
        model,
        modes,
        max_d_omega,
        max_d_amp,
        max_rel_amp_n1,
        trace_sup_norm: None,
    }
}

/// Deviations of every model from the first one with a mode spectrum.
pub fn compare_models(records: &[ModelRecord]) -> Result<ComparisonReport> {
    let with_modes: Vec<&ModelRecord> = records.iter().filter(|r| r.modes.is_some()).collect();
    if records.len() < 2 || with_modes.is_empty() {
        return Err(invalid(
            "models",
            "comparison needs at least two models, one with a mode spectrum",
        ));
    }
    let base = with_modes[0];
    let bm = base.modes.as_ref().expect("filtered");
    let asymmetry = with_modes
        .iter()
        .map(|r| (r.model, r.modes.as_ref().expect("filtered").sideband_asymmetry()))
        .collect();
    let deviations = records
        .iter()
        .filter(|r| r.model != base.model)
        .map(|r| match &r.modes {
            Some(m) => deviation(bm, m, r.model),
            None => ModelDeviation {
                model: r.model,
                modes: Vec::new(),
                max_d_omega: 0.0,
                max_d_amp: 0.0,
                max_rel_amp_n1: None,
                trace_sup_norm: None,
            },
        })
        .collect();
    Ok(ComparisonReport {
        reference: base.model,
        asymmetry,
        deviations,
    })
}

/// Evaluates `run.models` at one point and compares them, including trace
/// distances to the reference model.
pub fn compare_point(config: &DriveConfig, psi0: &InitialState, run: &RunOptions) -> Result<ComparisonReport> {
    let ev = evaluate_point(config, psi0, run, None)?;
    let mut report = compare_models(&ev.records)?;
    let base = ev.traces.iter().find(|(m, _)| *m == report.reference);
    if let Some((_, bt)) = base {
        for d in report.deviations.iter_mut() {
            if let Some((_, t)) = ev.traces.iter().find(|(m, _)| *m == d.model) {
                d.trace_sup_norm = propagator::compare_traces(bt, t).ok().map(|c| c.sup_norm);
            }
        }
    }
    Ok(report)
}

// ---------------------------------------------------------------------------
// Presets

pub const SCENARIOS: [&str; 10] = [
    "fig1",
    "fig2_phase",
    "fig2_state_zy",
    "figB1_zx",
    "figB1_xy",
    "fig3_phi0",
    "fig3_phiPiOver2",
    "fig4_phi0",
    "fig4_phiPiOver2",
    "figS1_saturation",
];

/// `count` values from `start` with spacing `(stop - start) / count`, `stop` excluded.
pub fn periodic_grid(start: f64, stop: f64, count: usize) -> Vec<f64> {
    let h = (stop - start) / count as f64;
    (0..count).map(|k| start + k as f64 * h).collect()
}

/// `count` evenly spaced values spanning `[start, stop]`.
pub fn linspace(start: f64, stop: f64, count: usize) -> Vec<f64> {
    if count < 2 {
        return vec![start; count];
    }
    let h = (stop - start) / (count - 1) as f64;
    (0..count).map(|k| start + k as f64 * h).collect()
}

fn base_file(omega: f64, omega_mod: f64, eps: f64, phase: f64, scheme: Scheme) -> ConfigFile {
    ConfigFile {
        delta_mhz: 0.0,
        omega_main_mhz: omega,
        omega_mod_mhz: omega_mod,
        eps_mod_mhz: eps,
        phase_rad: phase,
        scheme,
        extra_tone: None,
        clip_level: None,
        lab_frame: None,
        initial_state: Some(InitialStateFile {
            theta_rad: 0.0,
            phi_s_rad: 0.0,
        }),
    }
}

fn spectral_run(t_max_us: f64, dt_us: f64) -> RunOptions {
    RunOptions {
        trace: TraceSpec {
            t_max_us,
            dt_us,
            trotter_step_us: None,
        },
        outputs: Outputs {
            modes: true,
            spectrum: true,
            fit: false,
        },
        ..RunOptions::default()
    }
}

fn fig2_base() -> ConfigFile {
    base_file(3.75, 3.75, 2.08, 0.0, Scheme::AmplitudeMod)
}

fn fig3(phase: f64, name: &str) -> SweepSpec {
    let mut base = base_file(3.75, 3.75, 2.08, phase, Scheme::AmplitudeMod);
    base.extra_tone = Some(ExtraToneFile {
        eps2_mhz: 0.2,
        harmonic: 2,
        axis: Axis::Y,
    });
    SweepSpec {
        name: name.into(),
        description: "Omega sweep at w_m = 3.75 MHz, eps_m = 2.08 MHz with a fixed 0.2 MHz cos(2 w_m t) s_y saturation tone".into(),
        base,
        axis: SweepAxis::OmegaMain,
        grid: linspace(0.5, 8.0, 76),
        tone_ratio: None,
        saturation: Saturation::ExtraTone,
        run: RunOptions {
            convention: Convention::Smooth,
            ..spectral_run(4.0, 0.01)
        },
    }
}

fn fig4(phase: f64, name: &str) -> SweepSpec {
    SweepSpec {
        name: name.into(),
        description: "eps_m sweep of the phase-modulated drive at Omega = w_m = 3 MHz; starts above eps_m = 0, where the two quasienergies coincide".into(),
        base: base_file(3.0, 3.0, 0.1, phase, Scheme::PhaseMod),
        axis: SweepAxis::EpsMod,
        grid: linspace(0.1, 9.0, 90),
        tone_ratio: None,
        saturation: Saturation::None,
        run: RunOptions {
            convention: Convention::Smooth,
            ..spectral_run(4.0, 0.01)
        },
    }
}

fn state_sweep(plane: StatePlane, name: &str, what: &str) -> SweepSpec {
    SweepSpec {
        name: name.into(),
        description: format!("initial-state sweep in the {what} plane at Omega = w_m = 3.75 MHz, eps_m = 2.08 MHz"),
        base: fig2_base(),
        axis: SweepAxis::Theta { plane },
        grid: periodic_grid(0.0, TAU, 36),
        tone_ratio: None,
        saturation: Saturation::None,
        run: spectral_run(4.0, 0.01),
    }
}

/// Preset sweep reproducing one figure panel.
pub fn scenario(name: &str) -> Result<SweepSpec> {
    let spec = match name {
        "fig1" => SweepSpec {
            name: name.into(),
            description: "weak modulation at Omega = w_m = 3.75 MHz: spin locking at phi = pi/2, sidebands only at phi = 0".into(),
            base: base_file(3.75, 3.75, 0.075, 0.0, Scheme::AmplitudeMod),
            axis: SweepAxis::Phase,
            grid: vec![0.0, FRAC_PI_4, FRAC_PI_2],
            tone_ratio: None,
            saturation: Saturation::None,
            run: spectral_run(20.0, 0.02),
        },
        "fig2_phase" => SweepSpec {
            name: name.into(),
            description: "modulation-phase sweep at Omega = w_m = 3.75 MHz, eps_m = 2.08 MHz".into(),
            base: fig2_base(),
            axis: SweepAxis::Phase,
            grid: periodic_grid(0.0, TAU, 36),
            tone_ratio: None,
            saturation: Saturation::None,
            run: spectral_run(4.0, 0.01),
        },
        "fig2_state_zy" => state_sweep(StatePlane::ZY, name, "ZY"),
        "figB1_zx" => state_sweep(StatePlane::ZX, name, "ZX"),
        "figB1_xy" => state_sweep(StatePlane::XY, name, "XY"),
        "fig3_phi0" => fig3(0.0, name),
        "fig3_phiPiOver2" => fig3(FRAC_PI_2, name),
        "fig4_phi0" => fig4(0.0, name),
        "fig4_phiPiOver2" => fig4(FRAC_PI_2, name),
        "figS1_saturation" => {
            let mut base = base_file(3.0, 3.0, 0.1, 0.0, Scheme::AmplitudeMod);
            base.extra_tone = Some(ExtraToneFile {
                eps2_mhz: 0.04,
                harmonic: 2,
                axis: Axis::Y,
            });
            SweepSpec {
                name: name.into(),
                description: "eps_m sweep of the amplitude-modulated drive at Omega = w_m = 3 MHz with a 0.4 eps_m cos(2 w_m t) s_y tone".into(),
                base,
                axis: SweepAxis::EpsMod,
                grid: linspace(0.1, 9.0, 90),
                tone_ratio: Some(0.4),
                saturation: Saturation::ExtraTone,
                run: RunOptions {
                    convention: Convention::Smooth,
                    ..spectral_run(4.0, 0.01)
                },
            }
        }
        other => return Err(Error::UnknownScenario(other.into())),
    };
    Ok(spec)
}

/// Scenario documents shipped with the crate, by name.
pub fn scenario_file(name: &str) -> Option<&'static str> {
    Some(match name {
        "fig1" => include_str!("../scenarios/fig1.json"),
        "fig2_phase" => include_str!("../scenarios/fig2_phase.json"),
        "fig2_state_zy" => include_str!("../scenarios/fig2_state_zy.json"),
        "figB1_zx" => include_str!("../scenarios/figB1_zx.json"),
        "figB1_xy" => include_str!("../scenarios/figB1_xy.json"),
        "fig3_phi0" => include_str!("../scenarios/fig3_phi0.json"),
        "fig3_phiPiOver2" => include_str!("../scenarios/fig3_phiPiOver2.json"),
        "fig4_phi0" => include_str!("../scenarios/fig4_phi0.json"),
        "fig4_phiPiOver2" => include_str!("../scenarios/fig4_phiPiOver2.json"),
        "figS1_saturation" => include_str!("../scenarios/figS1_saturation.json"),
        _ => return None,
    })
}
