use std::f64::consts::TAU;

use proptest::prelude::*;

use mollow_core::floquet::{self, Convention, FloquetMode};
use mollow_core::model::{mhz_to_angular, Envelope, TimeGrid, TimeTrace};
use mollow_core::modes::state_at;
use mollow_core::pauli;
use mollow_core::propagator::{self, Frame, TrotterOptions};
use mollow_core::spectral::{self, FitComponent, SpectrumOptions, Window};
use mollow_core::{rwa, ConfigFile, DecayModel, DriveConfig, InitialState, Scheme, C64};

fn drive() -> impl Strategy<Value = DriveConfig> {
    (
        1.0..5.0f64,
        1.0..5.0f64,
        0.05..2.0f64,
        0.0..TAU,
        -0.5..0.5f64,
        prop::bool::ANY,
    )
        .prop_map(|(om, wm, eps, phi, delta, phase_mod)| {
            let c = DriveConfig::resonant_mhz(om, wm, eps, phi).with_delta(mhz_to_angular(delta));
            if phase_mod {
                c.with_scheme(Scheme::PhaseMod)
            } else {
                c
            }
        })
}

fn state() -> impl Strategy<Value = InitialState> {
    (0.0..std::f64::consts::PI, 0.0..TAU).prop_map(|(t, p)| InitialState::new(t, p))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn floquet_matrix_is_hermitian(c in drive(), k in 1usize..10) {
        let b = floquet::fourier_components(&c).unwrap();
        prop_assert!(b.hermiticity_defect() <= 1e-14);
        let m = floquet::assemble(&b, c.omega_mod, k.max(c.bandwidth())).unwrap();
        let d = (&m - m.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max);
        prop_assert!(d <= 1e-14, "defect {d}");
    }

    #[test]
    fn ladder_representatives_share_the_splitting(c in drive()) {
        let k = 20;
        let pairs = floquet::eigensolve(
            &floquet::assemble(&floquet::fourier_components(&c).unwrap(), c.omega_mod, k).unwrap(),
        )
        .unwrap();
        let sol = floquet::select_quasienergies(&pairs, k, c.omega_mod, Convention::FirstZone, None).unwrap();
        let w = c.omega_mod;
        let nearest = |x: f64| {
            pairs.values.iter().cloned().min_by(|a, b| (a - x).abs().total_cmp(&(b - x).abs())).unwrap()
        };
        let base = sol.delta_lambda().rem_euclid(w);
        for j in -2i64..=2 {
            let lp = nearest(sol.lambda_plus() + j as f64 * w);
            let lm = nearest(sol.lambda_minus() - j as f64 * w);
            let d = (lp - lm).rem_euclid(w);
            let diff = (d - base).abs().min(w - (d - base).abs());
            prop_assert!(diff < 1e-8, "j = {j}: {diff}");
        }
    }

    #[test]
    fn global_phase_of_a_mode_leaves_magnitudes(c in drive(), psi in state(), g in 0.0..TAU) {
        let sol = floquet::solve(&c, 12, Convention::FirstZone, None).unwrap();
        let m = floquet::match_initial_state(&sol, &psi.amplitudes()).unwrap();
        let a = floquet::mode_amplitudes(&sol, &m, 4);
        let mut rot = sol.clone();
        let e = C64::from_polar(1.0, g);
        for b in rot.plus.blocks.iter_mut() {
            b[0] *= e;
            b[1] *= e;
        }
        let m2 = floquet::match_initial_state(&rot, &psi.amplitudes()).unwrap();
        let b = floquet::mode_amplitudes(&rot, &m2, 4);
        for (x, y) in a.entries.iter().zip(&b.entries) {
            prop_assert!((x.amp - y.amp).abs() < 1e-12);
        }
    }

    #[test]
    fn reconstruction_matches_direct_state_population(c in drive(), psi in state(), t in 0.0..5.0f64) {
        let sol = floquet::solve(&c, 16, Convention::FirstZone, None).unwrap();
        let m = floquet::match_initial_state(&sol, &psi.amplitudes()).unwrap();
        let spec = floquet::mode_amplitudes(&sol, &m, 2 * sol.k as u32);
        let s = state_at(&sol.plus, &sol.minus, m.c_plus, m.c_minus, c.omega_mod, t);
        let direct = s[0].norm_sqr();
        prop_assert!((spec.value_at(t, &DecayModel::none()) - direct).abs() < 1e-10);
    }

    #[test]
    fn trotter_steps_are_unitary(c in drive(), psi in state()) {
        let grid = TimeGrid::span(1.0, 0.01).unwrap();
        let step = 0.002f64.min(0.9 * propagator::step_limit(&c, Frame::Rotating));
        let states = propagator::trotter_states(&c, &psi.amplitudes(), grid, &TrotterOptions::rotating(step)).unwrap();
        for s in states {
            prop_assert!((pauli::norm_sqr(&s).sqrt() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn rwa_sidebands_symmetric_at_resonance(om in 1.0..5.0f64, eps in 0.05..2.0f64, phi in 0.0..TAU, psi in state()) {
        let c = DriveConfig::resonant_mhz(om, om, eps, phi);
        let s = rwa::rwa_spectrum(&c, &psi, 2).unwrap();
        prop_assert!((s.amplitude(-1, 1) - s.amplitude(1, 1)).abs() < 1e-12);
    }

    #[test]
    fn rwa_states_keep_unit_norm(c in drive(), psi in state(), t in 0.0..10.0f64) {
        let s = rwa::rwa_state(&c, &psi.amplitudes(), t);
        prop_assert!((pauli::norm_sqr(&s) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rwa_splitting_increases_with_modulation(om in 1.0..5.0f64, detune in -1.0..1.0f64, e1 in 0.0..3.0f64, de in 0.01..1.0f64) {
        let lo = DriveConfig::resonant_mhz(om, om + detune, e1, 0.0);
        let hi = DriveConfig::resonant_mhz(om, om + detune, e1 + de, 0.0);
        prop_assert!(rwa::delta_lambda(&hi) > rwa::delta_lambda(&lo));
    }

    #[test]
    fn parseval_holds(values in prop::collection::vec(-1.0..1.0f64, 16..300), hann in prop::bool::ANY, pad in 1usize..5) {
        let trace = TimeTrace::new(TimeGrid::new(0.0, 0.01, values.len()).unwrap(), values);
        let opts = SpectrumOptions {
            window: if hann { Window::Hann } else { Window::Rect },
            pad_factor: pad,
            subtract_mean: false,
        };
        let s = spectral::fft_spectrum(&trace, &opts).unwrap();
        prop_assert!(s.parseval_defect() < 1e-9);
    }

    #[test]
    fn clipping_is_idempotent(c in drive(), level in 0.1..10.0f64) {
        let mut c = c;
        c.lab_frame = Some(mollow_core::model::LabFrame { omega0: mhz_to_angular(100.0), omega: mhz_to_angular(100.0) + c.delta });
        let grid = TimeGrid::span(0.2, 2e-4).unwrap();
        let w = propagator::synthesize_waveform(&c, grid, Frame::Lab).unwrap();
        let once = w.clipped(level);
        prop_assert_eq!(once.clipped(level), once.clone());
        prop_assert!(once.samples.iter().all(|s| s.abs() <= level));
    }

    #[test]
    fn bloch_angles_round_trip(psi in state()) {
        let back = InitialState::from_bloch(psi.bloch()).unwrap();
        let (a, b) = (psi.bloch(), back.bloch());
        for j in 0..3 {
            prop_assert!((a[j] - b[j]).abs() < 1e-12);
        }
        let amp = InitialState::from_amplitudes(psi.amplitudes()).unwrap();
        let ov = pauli::dot(&amp.amplitudes(), &psi.amplitudes()).norm();
        prop_assert!((ov - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mhz_survive_ingestion(c in drive(), psi in state()) {
        let file = ConfigFile::from_parts(&c, Some(&psi));
        let text = file.to_json().unwrap();
        prop_assert_eq!(ConfigFile::from_json(&text).unwrap(), file.clone());
        let (c2, _) = file.ingest().unwrap();
        let back = ConfigFile::from_parts(&c2, None);
        for (x, y) in [
            (file.omega_main_mhz, back.omega_main_mhz),
            (file.omega_mod_mhz, back.omega_mod_mhz),
            (file.eps_mod_mhz, back.eps_mod_mhz),
            (file.delta_mhz, back.delta_mhz),
        ] {
            prop_assert!((x - y).abs() <= 1e-12 * x.abs().max(1e-300));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn noiseless_fit_round_trip(
        a in prop::collection::vec(0.05..0.5f64, 3),
        f0 in 0.8..1.2f64,
        phases in prop::collection::vec(-3.0..3.0f64, 3),
        a0 in -0.2..0.8f64,
    ) {
        let freqs = [f0, 2.3 * f0, 3.9 * f0];
        let truth: Vec<FitComponent> = (0..3)
            .map(|j| FitComponent::undamped(a[j], mhz_to_angular(freqs[j]), phases[j]))
            .collect();
        let grid = TimeGrid::span(8.0, 0.01).unwrap();
        let values = grid
            .times()
            .map(|t| a0 + truth.iter().map(|c| c.amp * (c.omega * t + c.phase).cos()).sum::<f64>())
            .collect();
        let trace = TimeTrace::new(grid, values);
        let fit = spectral::fit_modes(&trace, 3, Envelope::None, None).unwrap();
        prop_assert!(fit.flags.converged);
        prop_assert!((fit.a0 - a0).abs() < 1e-6 * a0.abs().max(1.0));
        let mut got = fit.components.clone();
        got.sort_by(|x, y| x.omega.total_cmp(&y.omega));
        for (g, t) in got.iter().zip(&truth) {
            prop_assert!((g.omega - t.omega).abs() < 1e-6 * t.omega);
            prop_assert!((g.amp - t.amp).abs() < 1e-6 * t.amp);
            let dp = (g.phase - t.phase).rem_euclid(TAU);
            prop_assert!(dp.min(TAU - dp) < 1e-6);
        }
    }
}

#[test]
fn ladder_partner_of_a_mode_is_an_eigenvector() {
    let c = DriveConfig::resonant_mhz(3.75, 3.75, 2.08, 0.0);
    let k = 16;
    let m = floquet::assemble(&floquet::fourier_components(&c).unwrap(), c.omega_mod, k).unwrap();
    let sol = floquet::solve(&c, k, Convention::FirstZone, None).unwrap();
    let shifted: FloquetMode = sol.plus.shifted(1, c.omega_mod);
    let v = nalgebra::DVector::from_iterator(
        2 * (2 * k + 1),
        (-(k as i64)..=k as i64).flat_map(|b| shifted.block(b)),
    );
    let r = (&m * &v - &v * C64::new(shifted.lambda, 0.0)).norm();
    assert!(r < 1e-6, "residual {r}");
}
