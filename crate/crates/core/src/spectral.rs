//! FFT spectra, peak picking and damped multi-cosine fits of Rabi traces.

use std::f64::consts::TAU;

use nalgebra::{DMatrix, DVector};
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::model::{Envelope, TimeTrace};
use crate::C64;

pub const MIN_SAMPLES: usize = 16;
pub const MAX_COMPONENTS: usize = 6;
/// Fractional bound on each fitted frequency around its seed.
pub const FREQ_BOUND: f64 = 0.2;
const MAX_ITER: usize = 500;
const REL_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Window {
    Rect,
    Hann,
}

impl Window {
    pub fn as_str(self) -> &'static str {
        match self {
            Window::Rect => "rect",
            Window::Hann => "hann",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "rect" => Some(Window::Rect),
            "hann" => Some(Window::Hann),
            _ => None,
        }
    }

    fn weights(self, n: usize) -> Vec<f64> {
        match self {
            Window::Rect => vec![1.0; n],
            Window::Hann => {
                let m = n.saturating_sub(1).max(1) as f64;
                (0..n)
                    .map(|k| 0.5 - 0.5 * (TAU * k as f64 / m).cos())
                    .collect()
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumOptions {
    pub window: Window,
    pub pad_factor: usize,
    pub subtract_mean: bool,
}

impl Default for SpectrumOptions {
    fn default() -> Self {
        Self {
            window: Window::Rect,
            pad_factor: 4,
            subtract_mean: true,
        }
    }
}

/// Two-sided DFT of a windowed, zero-padded trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    /// Bin frequencies in MHz; bins above N/2 are negative.
    pub freqs_mhz: Vec<f64>,
    pub values: Vec<C64>,
    pub window: Window,
    pub pad_factor: usize,
    pub n_samples: usize,
    /// Sum of window weights, used to express heights as cosine amplitudes.
    pub window_sum: f64,
    /// Time-domain samples that were transformed, after windowing and padding.
    #[serde(skip)]
    pub input: Vec<f64>,
}

impl Spectrum {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Bin spacing in MHz.
    pub fn resolution(&self) -> f64 {
        if self.freqs_mhz.len() > 1 {
            self.freqs_mhz[1] - self.freqs_mhz[0]
        } else {
            0.0
        }
    }

    /// Index range of the non-negative frequency half.
    pub fn positive_len(&self) -> usize {
        self.values.len() / 2 + 1
    }

    /// |X_k| scaled so that a cosine of amplitude a reads as a.
    pub fn height(&self, k: usize) -> f64 {
        let scale = if k == 0 { 1.0 } else { 2.0 };
        scale * self.values[k].norm() / self.window_sum
    }

    pub fn heights(&self) -> Vec<f64> {
        (0..self.positive_len()).map(|k| self.height(k)).collect()
    }

    /// Relative defect of `sum |X_k|^2 / M = sum |x_n|^2`.
    pub fn parseval_defect(&self) -> f64 {
        let m = self.values.len() as f64;
        let lhs: f64 = self.values.iter().map(|z| z.norm_sqr()).sum::<f64>() / m;
        let rhs: f64 = self.input.iter().map(|x| x * x).sum();
        if rhs == 0.0 {
            lhs
        } else {
            (lhs - rhs).abs() / rhs
        }
    }

    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "f_MHz,re,im,abs")?;
        for (f, z) in self.freqs_mhz.iter().zip(&self.values) {
            writeln!(w, "{},{},{},{}", f, z.re, z.im, z.norm())?;
        }
        Ok(())
    }
}

pub fn fft_spectrum(trace: &TimeTrace, opts: &SpectrumOptions) -> Result<Spectrum> {
    let n = trace.len();
    if n < MIN_SAMPLES {
        return Err(invalid(
            "trace",
            format!("need at least {MIN_SAMPLES} samples, got {n}"),
        ));
    }
    if !(trace.dt > 0.0) || !trace.dt.is_finite() {
        return Err(Error::NonUniformGrid(format!("invalid spacing {}", trace.dt)));
    }
    if opts.pad_factor == 0 {
        return Err(invalid("pad_factor", "must be at least 1"));
    }
    let mean = if opts.subtract_mean { trace.mean() } else { 0.0 };
    let w = opts.window.weights(n);
    let m = n * opts.pad_factor;
    let mut input = vec![0.0; m];
    for k in 0..n {
        input[k] = (trace.values[k] - mean) * w[k];
    }
    let mut buf: Vec<C64> = input.iter().map(|&x| C64::new(x, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(m).process(&mut buf);
    let df = 1.0 / (m as f64 * trace.dt);
    let freqs_mhz = (0..m)
        .map(|k| {
            let k = if k <= m / 2 { k as f64 } else { k as f64 - m as f64 };
            k * df
        })
        .collect();
    Ok(Spectrum {
        freqs_mhz,
        values: buf,
        window: opts.window,
        pad_factor: opts.pad_factor,
        n_samples: n,
        window_sum: w.iter().sum(),
        input,
    })
}

/// Spectrum of explicitly timed samples.
pub fn fft_samples(times: &[f64], values: Vec<f64>, opts: &SpectrumOptions) -> Result<Spectrum> {
    fft_spectrum(&TimeTrace::from_samples(times, values)?, opts)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    pub freq_mhz: f64,
    pub height: f64,
}

/// Vertex of the parabola through (-1, a), (0, b), (1, c).
fn parabolic(a: f64, b: f64, c: f64) -> (f64, f64) {
    let den = a - 2.0 * b + c;
    if den == 0.0 {
        return (0.0, b);
    }
    let d = (0.5 * (a - c) / den).clamp(-0.5, 0.5);
    (d, b - 0.25 * (a - c) * d)
}

/// Interior local maxima of the positive half above `min_rel_height` times
/// the largest non-DC height, tallest first.
pub fn detect_peaks(spec: &Spectrum, min_rel_height: f64) -> Result<Vec<Peak>> {
    if !(min_rel_height > 0.0 && min_rel_height < 1.0) {
        return Err(invalid("min_rel_height", "must lie in (0, 1)"));
    }
    let h = spec.heights();
    if h.len() < 3 {
        return Ok(Vec::new());
    }
    let top = h[1..].iter().cloned().fold(0.0, f64::max);
    if !(top > 0.0) {
        return Ok(Vec::new());
    }
    let floor = min_rel_height * top;
    let df = spec.resolution();
    let mut peaks = Vec::new();
    for k in 1..h.len() - 1 {
        if h[k] > h[k - 1] && h[k] >= h[k + 1] && h[k] >= floor {
            let (d, y) = parabolic(h[k - 1], h[k], h[k + 1]);
            peaks.push(Peak {
                freq_mhz: (k as f64 + d) * df,
                height: y,
            });
        }
    }
    peaks.sort_by(|a, b| b.height.total_cmp(&a.height));
    Ok(peaks)
}

// ---------------------------------------------------------------------------
// Fitting

/// One damped cosine `a env(t; tau) cos(omega t + phase)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitComponent {
    pub amp: f64,
    /// Angular frequency, rad/us.
    pub omega: f64,
    pub phase: f64,
    /// Decay time in us; absent for undamped fits.
    pub tau: Option<f64>,
}

impl FitComponent {
    pub fn undamped(amp: f64, omega: f64, phase: f64) -> Self {
        Self {
            amp,
            omega,
            phase,
            tau: None,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ComponentErrors {
    pub amp: Option<f64>,
    pub omega: Option<f64>,
    pub phase: Option<f64>,
    pub tau: Option<f64>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FitFlags {
    pub converged: bool,
    pub degenerate_frequencies: bool,
    pub singular_covariance: bool,
    pub iterations: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub a0: f64,
    pub components: Vec<FitComponent>,
    pub envelope: Envelope,
    pub residual_rms: f64,
    pub a0_err: Option<f64>,
    pub errors: Vec<ComponentErrors>,
    pub flags: FitFlags,
}

fn envelope_value(env: Envelope, t: f64, tau: Option<f64>) -> f64 {
    match (env, tau) {
        (Envelope::None, _) | (_, None) => 1.0,
        (Envelope::Gaussian, Some(tau)) => (-(t / tau).powi(2)).exp(),
        (Envelope::Exponential, Some(tau)) => (-t / tau).exp(),
    }
}

impl FitResult {
    pub fn value_at(&self, t: f64) -> f64 {
        self.a0
            + self
                .components
                .iter()
                .map(|c| {
                    c.amp * envelope_value(self.envelope, t, c.tau) * (c.omega * t + c.phase).cos()
                })
                .sum::<f64>()
    }

    pub fn synthesize(&self, grid: crate::model::TimeGrid) -> TimeTrace {
        TimeTrace::new(grid, grid.times().map(|t| self.value_at(t)).collect())
    }

    /// Single header row and a single value row: a0, then (a, f_MHz, phi_rad, tau_us) per component.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        let mut head = vec!["a0".to_string()];
        let mut row = vec![format!("{}", self.a0)];
        for (k, c) in self.components.iter().enumerate() {
            let j = k + 1;
            head.extend([
                format!("a_{j}"),
                format!("f_MHz_{j}"),
                format!("phi_rad_{j}"),
                format!("tau_us_{j}"),
            ]);
            row.extend([
                format!("{}", c.amp),
                format!("{}", c.omega / TAU),
                format!("{}", c.phase),
                c.tau.map(|t| format!("{t}")).unwrap_or_default(),
            ]);
        }
        writeln!(w, "{}", head.join(","))?;
        writeln!(w, "{}", row.join(","))?;
        Ok(())
    }
}

/// Least-squares common factor `s` minimising `sum (measured - s predicted)^2`.
pub fn shared_scale(measured: &[f64], predicted: &[f64]) -> f64 {
    let num: f64 = measured.iter().zip(predicted).map(|(m, p)| m * p).sum();
    let den: f64 = predicted.iter().map(|p| p * p).sum();
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Largest fitted decay time, in units of the trace span.
const TAU_CAP: f64 = 1e6;

/// Internal parameterisation: a0, then per component
/// (c, d, u, s) with `c cos + d sin` quadratures, `omega = w0 (1 + B tanh u)`, `tau = e^s`.
struct Problem<'a> {
    t: Vec<f64>,
    y: &'a [f64],
    seeds: Vec<f64>,
    env: Envelope,
}

impl Problem<'_> {
    fn damped(&self) -> bool {
        self.env != Envelope::None
    }

    fn stride(&self) -> usize {
        if self.damped() {
            4
        } else {
            3
        }
    }

    fn n_params(&self) -> usize {
        1 + self.stride() * self.seeds.len()
    }

    fn omega(&self, j: usize, u: f64) -> f64 {
        self.seeds[j] * (1.0 + FREQ_BOUND * u.tanh())
    }

    fn env_and_ds(&self, t: f64, s: f64) -> (f64, f64) {
        match self.env {
            Envelope::None => (1.0, 0.0),
            Envelope::Gaussian => {
                let q = t * (-s).exp();
                let e = (-q * q).exp();
                (e, e * 2.0 * q * q)
            }
            Envelope::Exponential => {
                let q = t * (-s).exp();
                let e = (-q).exp();
                (e, e * q)
            }
        }
    }

    /// Residuals r = model - y and, optionally, the Jacobian.
    fn eval(&self, p: &DVector<f64>, jac: Option<&mut DMatrix<f64>>) -> DVector<f64> {
        let st = self.stride();
        let mut r = DVector::from_element(self.t.len(), p[0]);
        let mut jac = jac;
        for (row, &t) in self.t.iter().enumerate() {
            if let Some(jm) = jac.as_deref_mut() {
                jm[(row, 0)] = 1.0;
            }
            for j in 0..self.seeds.len() {
                let b = 1 + st * j;
                let (c, d, u) = (p[b], p[b + 1], p[b + 2]);
                let w = self.omega(j, u);
                let (e, de) = if self.damped() {
                    self.env_and_ds(t, p[b + 3])
                } else {
                    (1.0, 0.0)
                };
                let (sn, cs) = (w * t).sin_cos();
                let osc = c * cs + d * sn;
                r[row] += e * osc;
                if let Some(jm) = jac.as_deref_mut() {
                    jm[(row, b)] = e * cs;
                    jm[(row, b + 1)] = e * sn;
                    let sech2 = 1.0 / u.cosh().powi(2);
                    let dw = self.seeds[j] * FREQ_BOUND * sech2;
                    jm[(row, b + 2)] = e * t * (-c * sn + d * cs) * dw;
                    if self.damped() {
                        jm[(row, b + 3)] = de * osc;
                    }
                }
            }
        }
        for (ri, yi) in r.iter_mut().zip(self.y) {
            *ri -= yi;
        }
        r
    }

    fn jacobian(&self, p: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
        let mut jm = DMatrix::zeros(self.t.len(), self.n_params());
        let r = self.eval(p, Some(&mut jm));
        (r, jm)
    }
}

fn solve_normal(a: DMatrix<f64>, g: &DVector<f64>) -> Option<DVector<f64>> {
    if let Some(ch) = a.clone().cholesky() {
        return Some(ch.solve(g));
    }
    a.lu().solve(g)
}

/// Linear least squares for a0 and quadratures at fixed frequencies and decay.
fn linear_seed(prob: &Problem, p: &mut DVector<f64>) {
    let st = prob.stride();
    let cols = 1 + 2 * prob.seeds.len();
    let mut a = DMatrix::zeros(prob.t.len(), cols);
    for (row, &t) in prob.t.iter().enumerate() {
        a[(row, 0)] = 1.0;
        for j in 0..prob.seeds.len() {
            let b = 1 + st * j;
            let w = prob.omega(j, p[b + 2]);
            let e = if prob.damped() {
                prob.env_and_ds(t, p[b + 3]).0
            } else {
                1.0
            };
            let (sn, cs) = (w * t).sin_cos();
            a[(row, 1 + 2 * j)] = e * cs;
            a[(row, 2 + 2 * j)] = e * sn;
        }
    }
    let y = DVector::from_column_slice(prob.y);
    let ata = a.transpose() * &a + DMatrix::identity(cols, cols) * 1e-12;
    if let Some(x) = solve_normal(ata, &(a.transpose() * y)) {
        p[0] = x[0];
        for j in 0..prob.seeds.len() {
            let b = 1 + st * j;
            p[b] = x[1 + 2 * j];
            p[b + 1] = x[2 + 2 * j];
        }
    }
}

/// Residual of the least-squares fit of `a0 + sum (c cos + d sin)(w t)`.
fn sinusoid_residual(t: &[f64], y: &[f64], omegas: &[f64]) -> Vec<f64> {
    let cols = 1 + 2 * omegas.len();
    let mut a = DMatrix::zeros(t.len(), cols);
    for (row, &ti) in t.iter().enumerate() {
        a[(row, 0)] = 1.0;
        for (j, w) in omegas.iter().enumerate() {
            let (sn, cs) = (w * ti).sin_cos();
            a[(row, 1 + 2 * j)] = cs;
            a[(row, 2 + 2 * j)] = sn;
        }
    }
    let yv = DVector::from_column_slice(y);
    let ata = a.transpose() * &a + DMatrix::identity(cols, cols) * 1e-12;
    match solve_normal(ata, &(a.transpose() * &yv)) {
        Some(x) => (yv - a * x).iter().copied().collect(),
        None => y.to_vec(),
    }
}

/// Greedy seeds: strongest peak of the running residual, refitted and
/// subtracted before the next pick, so leakage of strong lines is not seeded.
fn seed_frequencies(trace: &TimeTrace, n: usize) -> Result<Vec<(f64, f64)>> {
    let t: Vec<f64> = trace.grid().times().collect();
    let raw_df = 1.0 / (trace.dt * trace.len() as f64);
    let mut seeds: Vec<(f64, f64)> = Vec::with_capacity(n);
    let mut resid = trace.values.clone();
    for _ in 0..n {
        let rt = TimeTrace::new(trace.grid(), resid.clone());
        let spec = fft_spectrum(&rt, &SpectrumOptions::default())?;
        let clear = |f: f64| seeds.iter().all(|&(w, _)| (w / TAU - f).abs() > raw_df);
        let pick = detect_peaks(&spec, 1e-6)?
            .into_iter()
            .find(|p| clear(p.freq_mhz))
            .or_else(|| {
                let h = spec.heights();
                let df = spec.resolution();
                (1..h.len())
                    .filter(|&k| clear(k as f64 * df))
                    .max_by(|&a, &b| h[a].total_cmp(&h[b]))
                    .map(|k| Peak {
                        freq_mhz: k as f64 * df,
                        height: h[k],
                    })
            });
        let Some(p) = pick else { break };
        seeds.push((TAU * p.freq_mhz, p.height));
        let omegas: Vec<f64> = seeds.iter().map(|s| s.0).collect();
        resid = sinusoid_residual(&t, &trace.values, &omegas);
    }
    if seeds.len() < n {
        return Err(invalid("trace", format!("found only {} of {n} components", seeds.len())));
    }
    Ok(seeds)
}

/// Levenberg-Marquardt fit of `a0 + sum a_i env(t; tau_i) cos(omega_i t + phi_i)`.
pub fn fit_modes(
    trace: &TimeTrace,
    n_components: usize,
    envelope: Envelope,
    init: Option<&[FitComponent]>,
) -> Result<FitResult> {
    if n_components == 0 || n_components > MAX_COMPONENTS {
        return Err(invalid(
            "n_components",
            format!("must lie in 1..={MAX_COMPONENTS}"),
        ));
    }
    if trace.len() < MIN_SAMPLES {
        return Err(invalid(
            "trace",
            format!("need at least {MIN_SAMPLES} samples"),
        ));
    }
    let span = trace.dt * (trace.len() - 1) as f64;
    let default_tau = span.max(trace.dt);
    let seeds: Vec<FitComponent> = match init {
        Some(s) => {
            if s.len() != n_components {
                return Err(invalid(
                    "init",
                    format!("{} seeds for {n_components} components", s.len()),
                ));
            }
            s.to_vec()
        }
        None => seed_frequencies(trace, n_components)?
            .into_iter()
            .map(|(w, h)| FitComponent {
                amp: h,
                omega: w,
                phase: 0.0,
                tau: Some(default_tau),
            })
            .collect(),
    };
    if seeds.iter().any(|c| !(c.omega > 0.0) || !c.omega.is_finite()) {
        return Err(invalid("init", "seed frequencies must be positive"));
    }
    let prob = Problem {
        t: trace.grid().times().collect(),
        y: &trace.values,
        seeds: seeds.iter().map(|c| c.omega).collect(),
        env: envelope,
    };
    let st = prob.stride();
    let mut p = DVector::zeros(prob.n_params());
    p[0] = trace.mean();
    for (j, c) in seeds.iter().enumerate() {
        let b = 1 + st * j;
        p[b] = c.amp * c.phase.cos();
        p[b + 1] = -c.amp * c.phase.sin();
        if prob.damped() {
            let tau = c.tau.unwrap_or(default_tau);
            if !(tau > 0.0) {
                return Err(invalid("init", "seed decay times must be positive"));
            }
            p[b + 3] = tau.ln();
        }
    }
    if init.is_none() {
        linear_seed(&prob, &mut p);
    }

    let (mut r, mut jm) = prob.jacobian(&p);
    let mut cost = r.norm_squared();
    let mut mu = 1e-3;
    let mut converged = false;
    let mut iterations = 0;
    let np = prob.n_params();
    let s_max = (TAU_CAP * default_tau).ln();
    while iterations < MAX_ITER {
        iterations += 1;
        let jt = jm.transpose();
        let jtj = &jt * &jm;
        let g = -(&jt * &r);
        let mut a = jtj.clone();
        for k in 0..np {
            a[(k, k)] += mu * jtj[(k, k)].max(1e-12);
        }
        let Some(step) = solve_normal(a, &g) else {
            mu *= 10.0;
            continue;
        };
        let mut trial = &p + &step;
        if prob.damped() {
            // Undamped lines saturate at a finite decay time.
            for j in 0..n_components {
                let k = 1 + st * j + 3;
                trial[k] = trial[k].min(s_max);
            }
        }
        let rt = prob.eval(&trial, None);
        let ct = rt.norm_squared();
        if ct.is_finite() && ct <= cost {
            let change = (cost - ct) / cost.max(f64::MIN_POSITIVE);
            p = trial;
            cost = ct;
            let (r2, j2) = prob.jacobian(&p);
            r = r2;
            jm = j2;
            mu = (mu / 3.0).max(1e-15);
            if change < REL_TOL || cost == 0.0 {
                converged = true;
                break;
            }
        } else {
            mu *= 2.0;
            if mu > 1e16 {
                // No descent direction left at working precision.
                converged = true;
                break;
            }
        }
    }

    let m = trace.len();
    let mut comps = Vec::with_capacity(n_components);
    for j in 0..n_components {
        let b = 1 + st * j;
        let (c, d) = (p[b], p[b + 1]);
        comps.push(FitComponent {
            amp: c.hypot(d),
            omega: prob.omega(j, p[b + 2]),
            phase: (-d).atan2(c),
            tau: prob.damped().then(|| p[b + 3].exp()),
        });
    }
    let bin = TAU / (m as f64 * trace.dt);
    let degenerate = comps
        .iter()
        .enumerate()
        .any(|(i, a)| comps[i + 1..].iter().any(|b| (a.omega - b.omega).abs() < bin));

    let mut result = FitResult {
        a0: p[0],
        components: comps,
        envelope,
        residual_rms: (cost / m as f64).sqrt(),
        a0_err: None,
        errors: vec![ComponentErrors::default(); n_components],
        flags: FitFlags {
            converged,
            degenerate_frequencies: degenerate,
            singular_covariance: false,
            iterations,
        },
    };
    physical_covariance(trace, &mut result);
    Ok(result)
}

/// Standard errors from `sigma^2 (J^T J)^-1` in the physical parameters.
fn physical_covariance(trace: &TimeTrace, fit: &mut FitResult) {
    let damped = fit.envelope != Envelope::None;
    let st = if damped { 4 } else { 3 };
    let np = 1 + st * fit.components.len();
    let m = trace.len();
    if m <= np {
        fit.flags.singular_covariance = true;
        return;
    }
    let mut jm = DMatrix::zeros(m, np);
    for (row, t) in trace.grid().times().enumerate() {
        jm[(row, 0)] = 1.0;
        for (j, c) in fit.components.iter().enumerate() {
            let b = 1 + st * j;
            let e = envelope_value(fit.envelope, t, c.tau);
            let (sn, cs) = (c.omega * t + c.phase).sin_cos();
            jm[(row, b)] = e * cs;
            jm[(row, b + 1)] = -c.amp * e * t * sn;
            jm[(row, b + 2)] = -c.amp * e * sn;
            if let (true, Some(tau)) = (damped, c.tau) {
                let de = match fit.envelope {
                    Envelope::Gaussian => e * 2.0 * t * t / tau.powi(3),
                    Envelope::Exponential => e * t / (tau * tau),
                    Envelope::None => 0.0,
                };
                jm[(row, b + 3)] = c.amp * de * cs;
            }
        }
    }
    let sigma2 = (fit.residual_rms.powi(2) * m as f64) / (m - np) as f64;
    let jtj = jm.transpose() * &jm;
    let scale = jtj.diagonal().iter().cloned().fold(0.0, f64::max);
    let cov = match jtj.clone().try_inverse() {
        Some(inv) if scale > 0.0 && inv.iter().all(|x| x.is_finite()) => inv,
        _ => {
            fit.flags.singular_covariance = true;
            return;
        }
    };
    let eig = jtj.symmetric_eigenvalues();
    let min = eig.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(min > 1e-12 * scale) {
        fit.flags.singular_covariance = true;
        return;
    }
    let sd = |k: usize| Some((sigma2 * cov[(k, k)]).max(0.0).sqrt());
    fit.a0_err = sd(0);
    for j in 0..fit.components.len() {
        let b = 1 + st * j;
        fit.errors[j] = ComponentErrors {
            amp: sd(b),
            omega: sd(b + 1),
            phase: sd(b + 2),
            tau: if damped { sd(b + 3) } else { None },
        };
    }
}
