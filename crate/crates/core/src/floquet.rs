//! Truncated Floquet matrix, Hermitian eigensolution, physical-pair selection
//! and initial-state matching.
//!
//! Fourier convention: `H(t) = sum_n H_n exp(-i n w_m t)`. Block (r, c) of the
//! Floquet matrix is `H_{r-c} - r w_m delta_rc` for r, c in -K..=K and the
//! state index of Fourier block r, spin s is `2 (r + K) + s`.

use nalgebra::{DMatrix, Matrix2, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::model::{validate, Axis, DriveConfig, InitialState, ModelTag, Scheme};
use crate::modes::ModeSpectrum;
use crate::pauli::{self, Mat2, Spinor, I, ZERO};
use crate::C64;

pub const DEFAULT_TOL: f64 = 1e-8;
pub const K_MAX: usize = 512;
pub const DEFAULT_N_MAX: u32 = 5;

#[derive(Clone, Debug, PartialEq)]
pub struct FourierBlocks {
    bandwidth: usize,
    blocks: Vec<Mat2>,
}

impl FourierBlocks {
    pub fn zeros(bandwidth: usize) -> Self {
        Self {
            bandwidth,
            blocks: vec![Mat2::zeros(); 2 * bandwidth + 1],
        }
    }

    pub fn bandwidth(&self) -> usize {
        self.bandwidth
    }

    pub fn get(&self, n: i64) -> Mat2 {
        if n.unsigned_abs() as usize > self.bandwidth {
            Mat2::zeros()
        } else {
            self.blocks[(n + self.bandwidth as i64) as usize]
        }
    }

    pub fn set(&mut self, n: i64, m: Mat2) {
        assert!(n.unsigned_abs() as usize <= self.bandwidth);
        self.blocks[(n + self.bandwidth as i64) as usize] = m;
    }

    fn add(&mut self, n: i64, m: Mat2) {
        let cur = self.get(n);
        self.set(n, cur + m);
    }

    /// `sum_n H_n exp(-i n w t)`.
    pub fn evaluate(&self, omega: f64, t: f64) -> Mat2 {
        let mut h = Mat2::zeros();
        for n in -(self.bandwidth as i64)..=self.bandwidth as i64 {
            h += self.get(n) * C64::from_polar(1.0, -(n as f64) * omega * t);
        }
        h
    }

    /// `max_n |H_{-n} - H_n^dagger|`.
    pub fn hermiticity_defect(&self) -> f64 {
        let mut d: f64 = 0.0;
        for n in 0..=self.bandwidth as i64 {
            let diff = self.get(-n) - self.get(n).adjoint();
            d = d.max(diff.iter().map(|z| z.norm()).fold(0.0, f64::max));
        }
        d
    }
}

fn axis_matrix(axis: Axis) -> Mat2 {
    match axis {
        Axis::X => pauli::sigma_x(),
        Axis::Y => pauli::sigma_y(),
        Axis::Z => pauli::sigma_z(),
    }
}

/// Fourier blocks of the first-rotating-frame Hamiltonian.
pub fn fourier_components(config: &DriveConfig) -> Result<FourierBlocks> {
    let v = validate(config);
    if !v.is_empty() {
        return Err(Error::InvalidConfig(v));
    }
    let mut fb = FourierBlocks::zeros(config.bandwidth());
    let h0 = pauli::sigma_z() * C64::new(-0.5 * config.delta, 0.0)
        + pauli::sigma_x() * C64::new(0.5 * config.omega_main, 0.0);
    fb.set(0, h0);
    if config.eps_mod != 0.0 {
        let phi = config.phase;
        match config.scheme {
            Scheme::AmplitudeMod => {
                let half = 0.5 * config.eps_mod;
                fb.add(1, pauli::sigma_y() * C64::from_polar(half, -phi));
                fb.add(-1, pauli::sigma_y() * C64::from_polar(half, phi));
            }
            Scheme::PhaseMod => {
                let half = 0.5 * config.modulation_amplitude();
                fb.add(1, pauli::sigma_z() * (I * C64::from_polar(half, -phi)));
                fb.add(-1, pauli::sigma_z() * (-I * C64::from_polar(half, phi)));
            }
        }
    }
    if let Some(tone) = config.extra_tone {
        let h = tone.harmonic as i64;
        let m = axis_matrix(tone.axis) * C64::new(0.5 * tone.eps2, 0.0);
        fb.add(h, m);
        fb.add(-h, m);
    }
    Ok(fb)
}

/// Truncated Floquet matrix with blocks -K..=K.
pub fn assemble(blocks: &FourierBlocks, omega_mod: f64, k: usize) -> Result<DMatrix<C64>> {
    if k < blocks.bandwidth() {
        return Err(Error::TruncationTooSmall {
            k,
            bandwidth: blocks.bandwidth(),
        });
    }
    let nb = 2 * k + 1;
    let dim = 2 * nb;
    let ki = k as i64;
    let mut m = DMatrix::<C64>::zeros(dim, dim);
    for br in 0..nb {
        let r = br as i64 - ki;
        for bc in 0..nb {
            let c = bc as i64 - ki;
            let d = r - c;
            if d.unsigned_abs() as usize > blocks.bandwidth() {
                continue;
            }
            let mut h = blocks.get(d);
            if d == 0 {
                let shift = C64::new(-(r as f64) * omega_mod, 0.0);
                h[(0, 0)] += shift;
                h[(1, 1)] += shift;
            }
            for s in 0..2 {
                for q in 0..2 {
                    m[(2 * br + s, 2 * bc + q)] = h[(s, q)];
                }
            }
        }
    }
    Ok(m)
}

#[derive(Clone, Debug)]
pub struct EigenPairs {
    /// Ascending eigenvalues.
    pub values: Vec<f64>,
    /// Orthonormal eigenvectors as columns, in the order of `values`.
    pub vectors: DMatrix<C64>,
    /// `max_j |M v_j - l_j v_j| / |M|`.
    pub residual: f64,
    /// Largest absolute entry of the input matrix scaled by its dimension.
    pub norm: f64,
}

fn matrix_norm(m: &DMatrix<C64>) -> f64 {
    // Frobenius norm bounds the spectral norm.
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Dense Hermitian eigendecomposition with Hermiticity and residual checks.
pub fn eigensolve(m: &DMatrix<C64>) -> Result<EigenPairs> {
    if !m.is_square() {
        return Err(invalid("matrix", "not square"));
    }
    let norm = matrix_norm(m);
    let mut deviation: f64 = 0.0;
    for r in 0..m.nrows() {
        for c in r..m.ncols() {
            deviation = deviation.max((m[(r, c)] - m[(c, r)].conj()).norm());
        }
    }
    if deviation > 1e-12 * norm.max(1.0) {
        return Err(Error::NotHermitian { deviation });
    }
    let dim = m.nrows();
    let eig = SymmetricEigen::try_new(m.clone(), 1e-15, 0)
        .ok_or_else(|| Error::Eigensolver("QR iteration did not converge".into()))?;
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values: Vec<f64> = order.iter().map(|&j| eig.eigenvalues[j]).collect();
    let mut vectors = DMatrix::<C64>::zeros(dim, dim);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    let mv = m * &vectors;
    let mut residual: f64 = 0.0;
    for j in 0..dim {
        let lj = C64::new(values[j], 0.0);
        let r: f64 = (0..dim)
            .map(|i| (mv[(i, j)] - vectors[(i, j)] * lj).norm_sqr())
            .sum::<f64>()
            .sqrt();
        residual = residual.max(r);
    }
    let scale = norm.max(f64::MIN_POSITIVE);
    let rel = residual / scale;
    if !(rel <= 1e-10) {
        return Err(Error::Eigensolver(format!(
            "eigen-residual {rel:e} exceeds 1e-10 relative"
        )));
    }
    Ok(EigenPairs {
        values,
        vectors,
        residual: rel,
        norm,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Convention {
    FirstZone,
    Smooth,
}

impl Convention {
    pub fn as_str(self) -> &'static str {
        match self {
            Convention::FirstZone => "first_zone",
            Convention::Smooth => "smooth",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "first_zone" | "first-zone" | "firstzone" => Some(Convention::FirstZone),
            "smooth" => Some(Convention::Smooth),
            _ => None,
        }
    }
}

/// One Floquet mode: quasienergy and Fourier blocks `Phi_m` for
/// `m = first_index .. first_index + blocks.len()`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FloquetMode {
    pub lambda: f64,
    pub first_index: i64,
    pub blocks: Vec<Spinor>,
}

impl FloquetMode {
    pub fn from_column(pairs: &EigenPairs, col: usize, k: usize) -> Self {
        let nb = 2 * k + 1;
        let v = pairs.vectors.column(col);
        let blocks = (0..nb).map(|b| [v[2 * b], v[2 * b + 1]]).collect();
        Self {
            lambda: pairs.values[col],
            first_index: -(k as i64),
            blocks,
        }
    }

    pub fn last_index(&self) -> i64 {
        self.first_index + self.blocks.len() as i64 - 1
    }

    pub fn block(&self, m: i64) -> Spinor {
        if m < self.first_index || m > self.last_index() {
            [ZERO; 2]
        } else {
            self.blocks[(m - self.first_index) as usize]
        }
    }

    /// Ladder partner with quasienergy `lambda + j w_m`: `Phi'_m = Phi_{m+j}`.
    pub fn shifted(&self, j: i64, omega_mod: f64) -> Self {
        Self {
            lambda: self.lambda + j as f64 * omega_mod,
            first_index: self.first_index - j,
            blocks: self.blocks.clone(),
        }
    }

    pub fn norm_sqr(&self) -> f64 {
        self.blocks.iter().map(pauli::norm_sqr).sum()
    }

    /// `sum_m m |Phi_m|^2`.
    pub fn centroid(&self) -> f64 {
        self.weighted(|m| m)
    }

    /// `sum_m m^2 |Phi_m|^2`; small for modes concentrated on the central blocks.
    pub fn second_moment(&self) -> f64 {
        self.weighted(|m| m * m)
    }

    fn weighted(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.blocks
            .iter()
            .enumerate()
            .map(|(j, b)| f((self.first_index + j as i64) as f64) * pauli::norm_sqr(b))
            .sum()
    }

    /// `<self|other>` over aligned Fourier indices.
    pub fn overlap(&self, other: &Self) -> C64 {
        let lo = self.first_index.max(other.first_index);
        let hi = self.last_index().min(other.last_index());
        let mut s = C64::new(0.0, 0.0);
        for m in lo..=hi {
            s += pauli::dot(&self.block(m), &other.block(m));
        }
        s
    }

    /// Shift `j` in `guess-window..=guess+window` maximizing `|<self shifted by j|other>|`.
    fn best_shift(&self, other: &Self, guess: i64, window: i64, omega: f64) -> (i64, f64) {
        let mut best = (guess, -1.0);
        for j in (guess - window)..=(guess + window) {
            let ov = self.shifted(j, omega).overlap(other).norm();
            if ov > best.1 + 1e-12 {
                best = (j, ov);
            }
        }
        best
    }

    /// Largest overlap with any ladder partner of `other`.
    fn ladder_overlap(&self, other: &Self) -> f64 {
        let span = (self.blocks.len() + other.blocks.len()) as i64;
        let mut best: f64 = 0.0;
        for j in -span..=span {
            let lo = self.first_index.max(other.first_index - j);
            let hi = self.last_index().min(other.last_index() - j);
            if lo > hi {
                continue;
            }
            let mut s = C64::new(0.0, 0.0);
            for m in lo..=hi {
                s += pauli::dot(&self.block(m), &other.block(m + j));
            }
            best = best.max(s.norm());
        }
        best
    }

    /// Floquet state at t = 0, `sum_m Phi_m`.
    pub fn state_at_zero(&self) -> Spinor {
        let mut s = [ZERO; 2];
        for b in &self.blocks {
            s[0] += b[0];
            s[1] += b[1];
        }
        s
    }

    fn fold(&self, omega: f64) -> Self {
        let j = (self.lambda / omega).floor() as i64;
        let mut m = self.shifted(-j, omega);
        if m.lambda >= omega {
            m = m.shifted(-1, omega);
        }
        if m.lambda < 0.0 {
            m = m.shifted(1, omega);
        }
        m
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FloquetSolution {
    pub k: usize,
    pub omega_mod: f64,
    pub plus: FloquetMode,
    pub minus: FloquetMode,
    pub convention: Convention,
    /// Relative eigen-residual of the decomposition.
    pub residual: f64,
    /// Set when the two quasienergies coincide modulo `w_m`.
    pub degenerate: bool,
}

impl FloquetSolution {
    pub fn lambda_plus(&self) -> f64 {
        self.plus.lambda
    }

    pub fn lambda_minus(&self) -> f64 {
        self.minus.lambda
    }

    pub fn delta_lambda(&self) -> f64 {
        self.plus.lambda - self.minus.lambda
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Circular distance between two quasienergies modulo `w`.
pub fn circular_gap(a: f64, b: f64, omega: f64) -> f64 {
    let d = (a - b).rem_euclid(omega);
    d.min(omega - d)
}

/// The two physical, mutually non-ladder modes with the most central weight.
pub fn central_pair(pairs: &EigenPairs, k: usize, omega_mod: f64) -> Result<(FloquetMode, FloquetMode, bool)> {
    let dim = pairs.values.len();
    if dim < 2 {
        return Err(Error::Selection("need at least two eigenpairs".into()));
    }
    let modes: Vec<FloquetMode> = (0..dim).map(|c| FloquetMode::from_column(pairs, c, k)).collect();
    let mut order: Vec<usize> = (0..dim).collect();
    let moments: Vec<f64> = modes.iter().map(|m| m.second_moment()).collect();
    order.sort_by(|&a, &b| {
        moments[a]
            .total_cmp(&moments[b])
            .then(pairs.values[a].total_cmp(&pairs.values[b]))
    });
    let a = &modes[order[0]];
    let b = order[1..]
        .iter()
        .map(|&j| &modes[j])
        .find(|m| m.ladder_overlap(a) < 0.5)
        .ok_or_else(|| Error::Selection("no second independent Floquet mode".into()))?;
    let degenerate = circular_gap(a.lambda, b.lambda, omega_mod) < 1e-9 * omega_mod;
    Ok((a.clone(), b.clone(), degenerate))
}

/// Picks and labels the physical quasienergy pair.
pub fn select_quasienergies(
    pairs: &EigenPairs,
    k: usize,
    omega_mod: f64,
    convention: Convention,
    reference: Option<&FloquetSolution>,
) -> Result<FloquetSolution> {
    let (a, b, degenerate) = central_pair(pairs, k, omega_mod)?;
    let fa = a.fold(omega_mod);
    let fb = b.fold(omega_mod);
    let (mut plus, mut minus) = if fa.lambda > fb.lambda || (fa.lambda == fb.lambda && fa.second_moment() <= fb.second_moment()) {
        (fa, fb)
    } else {
        (fb, fa)
    };
    if let (Convention::Smooth, Some(r)) = (convention, reference) {
        let track = |m: &FloquetMode, target: &FloquetMode| {
            let guess = (m.centroid() - target.centroid()).round() as i64;
            m.best_shift(target, guess, 4, omega_mod)
        };
        let (j1, o1) = track(&plus, &r.plus);
        let (j2, o2) = track(&minus, &r.minus);
        let (j3, o3) = track(&minus, &r.plus);
        let (j4, o4) = track(&plus, &r.minus);
        if o3 + o4 > o1 + o2 {
            let p = minus.shifted(j3, omega_mod);
            let m = plus.shifted(j4, omega_mod);
            plus = p;
            minus = m;
        } else {
            plus = plus.shifted(j1, omega_mod);
            minus = minus.shifted(j2, omega_mod);
        }
    }
    Ok(FloquetSolution {
        k,
        omega_mod,
        plus,
        minus,
        convention,
        residual: pairs.residual,
        degenerate,
    })
}

/// Builds, diagonalizes and selects at fixed truncation.
pub fn solve(
    config: &DriveConfig,
    k: usize,
    convention: Convention,
    reference: Option<&FloquetSolution>,
) -> Result<FloquetSolution> {
    let blocks = fourier_components(config)?;
    let m = assemble(&blocks, config.omega_mod, k)?;
    let pairs = eigensolve(&m)?;
    select_quasienergies(&pairs, k, config.omega_mod, convention, reference)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InitialMatch {
    pub c_plus: C64,
    pub c_minus: C64,
    /// Max of reconstruction error and the orthonormality defect of the two
    /// Floquet states at t = 0 (both vanish for an untruncated solution).
    pub residual: f64,
    pub condition: f64,
}

/// Solves `psi0 = c+ sum Phi+ + c- sum Phi-`.
pub fn match_initial_state(sol: &FloquetSolution, psi0: &Spinor) -> Result<InitialMatch> {
    match_modes(&sol.plus, &sol.minus, psi0)
}

pub(crate) fn match_modes(plus: &FloquetMode, minus: &FloquetMode, psi0: &Spinor) -> Result<InitialMatch> {
    let sp = plus.state_at_zero();
    let sm = minus.state_at_zero();
    let a = Matrix2::new(sp[0], sm[0], sp[1], sm[1]);
    let svd = a.svd(false, false);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if !(condition <= 1e8) {
        return Err(Error::NearSingular { condition });
    }
    let inv = a
        .try_inverse()
        .ok_or(Error::NearSingular { condition: f64::INFINITY })?;
    let c_plus = inv[(0, 0)] * psi0[0] + inv[(0, 1)] * psi0[1];
    let c_minus = inv[(1, 0)] * psi0[0] + inv[(1, 1)] * psi0[1];
    let rec = [
        sp[0] * c_plus + sm[0] * c_minus - psi0[0],
        sp[1] * c_plus + sm[1] * c_minus - psi0[1],
    ];
    let solve_res = pauli::norm_sqr(&rec).sqrt();
    let ortho = (pauli::norm_sqr(&sp) - 1.0)
        .abs()
        .max((pauli::norm_sqr(&sm) - 1.0).abs())
        .max(pauli::dot(&sp, &sm).norm());
    Ok(InitialMatch {
        c_plus,
        c_minus,
        residual: solve_res.max(ortho),
        condition,
    })
}

/// Mode spectrum of a Floquet solution for the matched coefficients.
pub fn mode_amplitudes(sol: &FloquetSolution, m: &InitialMatch, n_max: u32) -> ModeSpectrum {
    let mut spec = ModeSpectrum::from_modes(
        ModelTag::Floquet,
        &sol.plus,
        &sol.minus,
        m.c_plus,
        m.c_minus,
        sol.omega_mod,
        n_max,
    );
    spec.convention = Some(sol.convention);
    spec.k = Some(sol.k);
    spec.residual = m.residual;
    spec
}

/// Full pipeline at fixed truncation.
pub fn floquet_spectrum(
    config: &DriveConfig,
    psi0: &InitialState,
    k: usize,
    convention: Convention,
    reference: Option<&FloquetSolution>,
    n_max: u32,
) -> Result<(FloquetSolution, ModeSpectrum)> {
    let sol = solve(config, k, convention, reference)?;
    let m = match_initial_state(&sol, &psi0.amplitudes())?;
    let spec = mode_amplitudes(&sol, &m, n_max);
    Ok((sol, spec))
}

fn truncation_change(a: &(FloquetSolution, ModeSpectrum), b: &(FloquetSolution, ModeSpectrum)) -> f64 {
    let w = a.0.omega_mod;
    let mut d = (circular_gap(a.0.lambda_plus(), b.0.lambda_plus(), w) / w)
        .max(circular_gap(a.0.lambda_minus(), b.0.lambda_minus(), w) / w);
    for e in a.1.entries.iter().filter(|e| e.n <= 3) {
        d = d.max((e.amp - b.1.amplitude(e.i, e.n)).abs());
    }
    d
}

/// Smallest K in the doubling sequence starting from the Fourier bandwidth
/// for which quasienergies (in units of `w_m`) and all `|a_{i,n}|`, n <= 3,
/// change by less than `tol` when K is doubled.
pub fn converge_truncation(config: &DriveConfig, psi0: &InitialState, tol: f64) -> Result<usize> {
    if !(tol > 0.0) {
        return Err(invalid("tol", "must be positive"));
    }
    // Floquet states spread over roughly A / w_m harmonics; K_MAX / 2 is the
    // largest order the doubling sequence can return.
    if config.modulation_amplitude() / config.omega_mod > (K_MAX / 2) as f64 {
        return Err(Error::NoConvergence { tol, k_max: K_MAX });
    }
    let mut k = config.bandwidth();
    let at =|k: usize| floquet_spectrum(config, psi0, k, Convention::FirstZone, None, 3);
    let mut cur = at(k)?;
    loop {
        let next_k = (2 * k).max(1);
        if next_k > K_MAX {
            return Err(Error::NoConvergence { tol, k_max: K_MAX });
        }
        let next = at(next_k)?;
        if truncation_change(&cur, &next) < tol {
            return Ok(k);
        }
        k = next_k;
        cur = next;
    }
}

/// Converged truncation for a whole set of configurations (their maximum).
pub fn converge_truncation_all<'a, I>(configs: I, psi0: &InitialState, tol: f64) -> Result<usize>
where
    I: IntoIterator<Item = &'a DriveConfig>,
{
    let mut k = 0;
    for c in configs {
        k = k.max(converge_truncation(c, psi0, tol)?);
    }
    Ok(k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn fig2() -> DriveConfig {
        DriveConfig::resonant_mhz(3.75, 3.75, 2.08, 0.0)
    }

    #[test]
    fn zero_modulation_has_only_static_block() {
        let c = DriveConfig::resonant_mhz(3.0, 3.75, 0.0, 0.0);
        let fb = fourier_components(&c).unwrap();
        assert_eq!(fb.bandwidth(), 0);
        assert_eq!(fb.get(1), Mat2::zeros());
    }

    #[test]
    fn amplitude_block_at_zero_phase() {
        let c = fig2();
        let fb = fourier_components(&c).unwrap();
        let expect = pauli::sigma_y() * C64::new(0.5 * c.eps_mod, 0.0);
        assert!((fb.get(1) - expect).norm() < 1e-15);
        assert!(fb.hermiticity_defect() < 1e-15);
    }

    #[test]
    fn time_domain_reconstruction_amplitude_scheme() {
        let c = fig2().with_phase(0.7).with_delta(0.4);
        let fb = fourier_components(&c).unwrap();
        for j in 0..50 {
            let t = 0.013 * j as f64;
            let direct = pauli::from_vector([
                0.5 * c.omega_main,
                c.eps_mod * (c.omega_mod * t + c.phase).cos(),
                -0.5 * c.delta,
            ]);
            assert!((fb.evaluate(c.omega_mod, t) - direct).norm() < 1e-12);
        }
    }

    #[test]
    fn k1_matrix_matches_explicit_layout() {
        let c = fig2().with_phase(0.3);
        let m = assemble(&fourier_components(&c).unwrap(), c.omega_mod, 1).unwrap();
        let (w, o, e, d) = (c.omega_mod, c.omega_main, c.eps_mod, c.delta);
        let ie = |s: f64| C64::new(0.0, 1.0) * C64::from_polar(0.5 * e, s * c.phase);
        let r = |x: f64| C64::new(x, 0.0);
        let z = ZERO;
        let expect = [
            [r(-d / 2.0 + w), r(o / 2.0), z, -ie(1.0), z, z],
            [r(o / 2.0), r(d / 2.0 + w), ie(1.0), z, z, z],
            [z, -ie(-1.0), r(-d / 2.0), r(o / 2.0), z, -ie(1.0)],
            [ie(-1.0), z, r(o / 2.0), r(d / 2.0), ie(1.0), z],
            [z, z, z, -ie(-1.0), r(-d / 2.0 - w), r(o / 2.0)],
            [z, z, ie(-1.0), z, r(o / 2.0), r(d / 2.0 - w)],
        ];
        for i in 0..6 {
            for j in 0..6 {
                assert!((m[(i, j)] - expect[i][j]).norm() < 1e-14, "({i},{j})");
            }
        }
    }

    #[test]
    fn truncation_below_bandwidth_rejected() {
        let c = fig2();
        let fb = fourier_components(&c).unwrap();
        assert!(matches!(
            assemble(&fb, c.omega_mod, 0),
            Err(Error::TruncationTooSmall { .. })
        ));
    }

    #[test]
    fn zero_blocks_give_diagonal_shifts() {
        let fb = FourierBlocks::zeros(1);
        let m = assemble(&fb, 2.0, 2).unwrap();
        for b in 0..5 {
            let shift = -((b as f64) - 2.0) * 2.0;
            assert_eq!(m[(2 * b, 2 * b)].re, shift);
            assert_eq!(m[(2 * b + 1, 2 * b + 1)].re, shift);
        }
        assert_eq!(m.iter().filter(|z| z.norm() != 0.0).count(), 8);
    }

    #[test]
    fn eigensolve_two_by_two() {
        let m = DMatrix::from_row_slice(2, 2, &[ZERO, C64::new(1.5, 0.0), C64::new(1.5, 0.0), ZERO]);
        let p = eigensolve(&m).unwrap();
        assert!((p.values[0] + 1.5).abs() < 1e-14);
        assert!((p.values[1] - 1.5).abs() < 1e-14);
    }

    #[test]
    fn eigensolve_rejects_non_hermitian() {
        let m = DMatrix::from_row_slice(2, 2, &[ZERO, C64::new(1.0, 0.0), C64::new(2.0, 0.0), ZERO]);
        assert!(matches!(eigensolve(&m), Err(Error::NotHermitian { .. })));
    }

    #[test]
    fn pure_rabi_splitting_folds_to_rabi_frequency() {
        let c = DriveConfig::resonant_mhz(2.0, 3.75, 0.0, 0.0);
        let sol = solve(&c, 2, Convention::FirstZone, None).unwrap();
        let d = sol.delta_lambda().rem_euclid(c.omega_mod);
        let target = c.omega_main;
        assert!(circular_gap(d, target, c.omega_mod) < 1e-12 || circular_gap(d, -target, c.omega_mod) < 1e-12);
        assert!(sol.lambda_plus() >= 0.0 && sol.lambda_plus() < c.omega_mod);
        assert!(sol.lambda_minus() >= 0.0 && sol.lambda_minus() < c.omega_mod);
    }

    #[test]
    fn eigenstate_preparation_has_single_mode() {
        let c = fig2().with_phase(0.4);
        let sol = solve(&c, 16, Convention::FirstZone, None).unwrap();
        let s = sol.plus.state_at_zero();
        let n = pauli::norm_sqr(&s).sqrt();
        let psi = [s[0] / n, s[1] / n];
        let m = match_initial_state(&sol, &psi).unwrap();
        assert!(m.c_minus.norm() < 1e-8);
        assert!((m.c_plus.norm() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn spin_locking_is_nearly_single_mode() {
        // The residual mixing is a rotation by 3 eps / (4 Omega): eps/(4 Omega)
        // from the static correction plus eps/(2 Omega) of micromotion at t = 0.
        for eps in [0.0375, 0.075] {
            let c = DriveConfig::resonant_mhz(3.75, 3.75, eps, FRAC_PI_2);
            let sol = solve(&c, 16, Convention::FirstZone, None).unwrap();
            let m = match_initial_state(&sol, &InitialState::ground().amplitudes()).unwrap();
            let mix = (m.c_plus * m.c_minus).norm();
            let avg = 0.5 * (m.c_plus.norm_sqr() + m.c_minus.norm_sqr());
            assert!(mix < 0.02 * avg, "mix {mix} avg {avg}");
            let r = eps / 3.75;
            assert!((mix / avg / r - 0.75).abs() < 0.02, "{}", mix / avg / r);
        }
    }

    #[test]
    fn direct_state_evaluation_matches_mode_sum() {
        let c = fig2().with_phase(1.1);
        let psi0 = InitialState::new(0.8, 0.3);
        let (sol, spec) = floquet_spectrum(&c, &psi0, 20, Convention::FirstZone, None, 40).unwrap();
        let decay = crate::model::DecayModel::none();
        for j in 0..40 {
            let t = 0.037 * j as f64;
            let psi = crate::modes::state_at(&sol.plus, &sol.minus, spec.c_plus, spec.c_minus, c.omega_mod, t);
            let p_direct = psi[0].norm_sqr();
            assert!((p_direct - spec.value_at(t, &decay)).abs() < 1e-10, "t={t}");
        }
    }

    #[test]
    fn ladder_partner_is_an_eigenvector() {
        let c = fig2();
        let m = assemble(&fourier_components(&c).unwrap(), c.omega_mod, 24).unwrap();
        let pairs = eigensolve(&m).unwrap();
        let sol = select_quasienergies(&pairs, 24, c.omega_mod, Convention::FirstZone, None).unwrap();
        let (values, _) = (&pairs.values, ());
        for mode in [&sol.plus, &sol.minus] {
            for j in -3..=3 {
                let target = mode.lambda + j as f64 * c.omega_mod;
                let near = values.iter().map(|v| (v - target).abs()).fold(f64::INFINITY, f64::min);
                assert!(near < 1e-8, "shift {j}: {near}");
            }
        }
    }

    #[test]
    fn smooth_without_reference_equals_first_zone() {
        let c = fig2();
        let a = solve(&c, 12, Convention::FirstZone, None).unwrap();
        let b = solve(&c, 12, Convention::Smooth, None).unwrap();
        assert_eq!(a.plus, b.plus);
        assert_eq!(a.minus, b.minus);
    }

    #[test]
    fn smooth_tracking_is_consistent_modulo_omega() {
        let c = fig2();
        let r = solve(&c, 16, Convention::FirstZone, None).unwrap();
        let c2 = DriveConfig::resonant_mhz(3.75, 3.75, 2.2, 0.0);
        let f = solve(&c2, 16, Convention::FirstZone, None).unwrap();
        let s = solve(&c2, 16, Convention::Smooth, Some(&r)).unwrap();
        let w = c.omega_mod;
        assert!(circular_gap(f.lambda_plus(), s.lambda_plus(), w) < 1e-8);
        assert!(circular_gap(f.lambda_minus(), s.lambda_minus(), w) < 1e-8);
    }

    #[test]
    fn solution_json_round_trip() {
        let sol = solve(&fig2(), 4, Convention::FirstZone, None).unwrap();
        let back = FloquetSolution::from_json(&sol.to_json().unwrap()).unwrap();
        assert_eq!(back, sol);
    }

    #[test]
    fn convergence_ladder_for_weak_and_zero_modulation() {
        let psi0 = InitialState::ground();
        let weak = DriveConfig::resonant_mhz(3.75, 3.75, 0.0375, 0.0);
        let k = converge_truncation(&weak, &psi0, 1e-8).unwrap();
        assert!(k <= 4, "K = {k}");
        let none = DriveConfig::resonant_mhz(3.75, 3.75, 0.0, 0.0);
        assert_eq!(converge_truncation(&none, &psi0, 1e-8).unwrap(), 0);
        let _ = PI;
    }
}
