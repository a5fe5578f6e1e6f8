//! Mode decomposition of the population signal
//! `P0(t) = sum |a_{i,n}| cos(w_{i,n} t + phi_{i,n})` with `w_{i,n} = n w_m + i dlambda`.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::floquet::{Convention, FloquetMode};
use crate::model::{angular_to_mhz, DecayModel, ModelTag, TimeGrid, TimeTrace};
use crate::pauli::Spinor;
use crate::{Result, C64};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeEntry {
    pub i: i8,
    pub n: u32,
    /// Signed frequency `n w_m + i dlambda` (rad/us).
    pub omega: f64,
    pub amp: f64,
    pub phase: f64,
}

impl ModeEntry {
    pub fn complex(&self) -> C64 {
        C64::from_polar(self.amp, self.phase)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeSpectrum {
    pub model: ModelTag,
    pub omega_mod: f64,
    pub delta_lambda: f64,
    pub c_plus: C64,
    pub c_minus: C64,
    pub entries: Vec<ModeEntry>,
    pub convention: Option<Convention>,
    pub k: Option<usize>,
    pub residual: f64,
}

/// `sum_k conj(a_{k+d}) b_k` over the |0> components.
fn correlation(a: &FloquetMode, b: &FloquetMode, d: i64) -> C64 {
    let lo = b.first_index.max(a.first_index - d);
    let hi = b.last_index().min(a.last_index() - d);
    let mut s = C64::new(0.0, 0.0);
    let mut k = lo;
    while k <= hi {
        s += a.block(k + d)[0].conj() * b.block(k)[0];
        k += 1;
    }
    s
}

impl ModeSpectrum {
    /// Builds the spectrum of `c+ e^{-i l+ t} u+(t) + c- e^{-i l- t} u-(t)`
    /// from the Fourier blocks of the two Floquet modes.
    pub fn from_modes(
        model: ModelTag,
        plus: &FloquetMode,
        minus: &FloquetMode,
        c_plus: C64,
        c_minus: C64,
        omega_mod: f64,
        n_max: u32,
    ) -> Self {
        let dl = plus.lambda - minus.lambda;
        let wp = c_plus.norm_sqr();
        let wm = c_minus.norm_sqr();
        let cross = c_plus.conj() * c_minus;
        let mut entries = Vec::with_capacity(3 * n_max as usize + 2);
        let mut push = |i: i8, n: u32, a: C64| {
            entries.push(ModeEntry {
                i,
                n,
                omega: n as f64 * omega_mod + i as f64 * dl,
                amp: a.norm(),
                phase: if a.norm() == 0.0 { 0.0 } else { a.arg() },
            });
        };
        let dc = correlation(plus, plus, 0) * wp + correlation(minus, minus, 0) * wm;
        push(0, 0, C64::new(dc.re, 0.0));
        push(1, 0, correlation(plus, minus, 0) * cross * 2.0);
        for n in 1..=n_max {
            let d = n as i64;
            let h_neg = correlation(plus, minus, -d);
            push(-1, n, (h_neg * cross).conj() * 2.0);
            let g = correlation(plus, plus, d) * wp + correlation(minus, minus, d) * wm;
            push(0, n, g * 2.0);
            push(1, n, correlation(plus, minus, d) * cross * 2.0);
        }
        Self {
            model,
            omega_mod,
            delta_lambda: dl,
            c_plus,
            c_minus,
            entries,
            convention: None,
            k: None,
            residual: 0.0,
        }
    }

    pub fn n_max(&self) -> u32 {
        self.entries.iter().map(|e| e.n).max().unwrap_or(0)
    }

    pub fn get(&self, i: i8, n: u32) -> Option<&ModeEntry> {
        self.entries.iter().find(|e| e.i == i && e.n == n)
    }

    /// `|a_{i,n}|`, zero when the entry is absent.
    pub fn amplitude(&self, i: i8, n: u32) -> f64 {
        self.get(i, n).map(|e| e.amp).unwrap_or(0.0)
    }

    /// Summed amplitude of the n-th manifold.
    pub fn manifold_weight(&self, n: u32) -> f64 {
        self.entries
            .iter()
            .filter(|e| e.n == n && !(e.i == 0 && e.n == 0))
            .map(|e| e.amp)
            .sum()
    }

    /// Sideband asymmetry `(|a+1,1| - |a-1,1|) / (|a+1,1| + |a-1,1|)`.
    pub fn sideband_asymmetry(&self) -> f64 {
        let p = self.amplitude(1, 1);
        let m = self.amplitude(-1, 1);
        if p + m == 0.0 {
            0.0
        } else {
            (p - m) / (p + m)
        }
    }

    pub fn value_at(&self, t: f64, decay: &DecayModel) -> f64 {
        self.entries
            .iter()
            .map(|e| e.amp * decay.factor(e.i, e.n, t) * (e.omega * t + e.phase).cos())
            .sum()
    }

    pub fn reconstruct(&self, grid: TimeGrid, decay: &DecayModel) -> TimeTrace {
        let values = grid.times().map(|t| self.value_at(t, decay)).collect();
        TimeTrace::new(grid, values)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "i,n,freq_MHz,amp,phase_rad,convention,K,residual")?;
        let conv = self.convention.map(|c| c.as_str()).unwrap_or("");
        let k = self.k.map(|k| k.to_string()).unwrap_or_default();
        for e in &self.entries {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{}",
                e.i,
                e.n,
                angular_to_mhz(e.omega),
                e.amp,
                e.phase,
                conv,
                k,
                self.residual
            )?;
        }
        Ok(())
    }
}

/// `P0(t) = sum |a| env cos(w t + phi)` for a spectrum.
pub fn reconstruct_population(
    spec: &ModeSpectrum,
    grid: TimeGrid,
    decay: &DecayModel,
) -> TimeTrace {
    spec.reconstruct(grid, decay)
}

/// State at time t from two Floquet modes, evaluated directly.
pub fn state_at(
    plus: &FloquetMode,
    minus: &FloquetMode,
    c_plus: C64,
    c_minus: C64,
    omega_mod: f64,
    t: f64,
) -> Spinor {
    let mut psi = [C64::new(0.0, 0.0); 2];
    for (mode, c) in [(plus, c_plus), (minus, c_minus)] {
        let phase = C64::from_polar(1.0, -mode.lambda * t) * c;
        for (j, b) in mode.blocks.iter().enumerate() {
            let m = (mode.first_index + j as i64) as f64;
            let e = phase * C64::from_polar(1.0, -m * omega_mod * t);
            psi[0] += e * b[0];
            psi[1] += e * b[1];
        }
    }
    psi
}
