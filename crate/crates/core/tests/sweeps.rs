use mollow_core::experiments::{self, Execution, Outputs, SweepResult, SweepSpec};
use mollow_core::model::mhz_to_angular;
use mollow_core::{Convention, ModelTag};

fn small_phase_sweep() -> SweepSpec {
    let mut s = experiments::scenario("fig2_phase").unwrap();
    s.grid = experiments::periodic_grid(0.0, std::f64::consts::TAU, 6);
    s.run.models = vec![ModelTag::Floquet, ModelTag::Rwa, ModelTag::Effective];
    s.run.outputs = Outputs {
        modes: true,
        spectrum: true,
        fit: true,
    };
    s
}

#[test]
fn results_do_not_depend_on_worker_count() {
    let s = small_phase_sweep();
    let reference = experiments::run_sweep(&s, Execution::Sequential).unwrap().to_json().unwrap();
    for exec in [
        Execution::Parallel { jobs: Some(1) },
        Execution::Parallel { jobs: Some(2) },
        Execution::default(),
    ] {
        let got = experiments::run_sweep(&s, exec).unwrap().to_json().unwrap();
        assert!(got == reference, "{exec:?}");
    }
}

#[test]
fn sweep_results_survive_json() {
    let r = experiments::run_sweep(&small_phase_sweep(), Execution::default()).unwrap();
    let back = SweepResult::from_json(&r.to_json().unwrap()).unwrap();
    assert_eq!(back.points, r.points);
    let mut a = Vec::new();
    let mut b = Vec::new();
    r.write_csv(&mut a).unwrap();
    back.write_csv(&mut b).unwrap();
    assert_eq!(a, b);
    let fit = r.points[0].record(ModelTag::Floquet).unwrap().fit.as_ref().unwrap();
    assert_eq!(fit.components.len(), 3);
}

fn eps_sweep(convention: Convention) -> SweepResult {
    let mut s = experiments::scenario("fig4_phi0").unwrap();
    s.run.convention = convention;
    s.run.models = vec![ModelTag::Floquet];
    s.run.outputs = Outputs::default();
    experiments::run_sweep(&s, Execution::default()).unwrap()
}

#[test]
fn conventions_agree_modulo_drive_frequency() {
    let a = eps_sweep(Convention::FirstZone);
    let b = eps_sweep(Convention::Smooth);
    let w = mhz_to_angular(3.0);
    for (p, q) in a.points.iter().zip(&b.points) {
        let x = p.record(ModelTag::Floquet).unwrap().delta_lambda.unwrap();
        let y = q.record(ModelTag::Floquet).unwrap().delta_lambda.unwrap();
        let d = (x - y).rem_euclid(w);
        let e = (x + y).rem_euclid(w);
        assert!(d.min(w - d).min(e).min(w - e) < 1e-8, "eps = {}", p.value);
    }
    // The smooth branch leaves the first zone.
    let top = b
        .points
        .iter()
        .filter_map(|p| p.record(ModelTag::Floquet).unwrap().delta_lambda)
        .fold(0.0, f64::max);
    assert!(top > w, "{top}");
}

#[test]
fn smooth_branch_avoids_the_third_order_crossing() {
    let r = eps_sweep(Convention::Smooth);
    let g = experiments::branch_gap(&r, ModelTag::Floquet, 3, Some((3.0, 7.0))).unwrap();
    assert!(!g.crosses);
    assert!(g.min_gap_mhz > 0.3, "{g:?}");

    let mut s = experiments::scenario("fig4_phi0").unwrap();
    s.run.models = vec![ModelTag::Rwa];
    s.run.outputs = Outputs::default();
    let rwa = experiments::run_sweep(&s, Execution::default()).unwrap();
    let h = experiments::branch_gap(&rwa, ModelTag::Rwa, 3, Some((3.0, 7.0))).unwrap();
    assert!(h.crosses);
    assert!((h.at - 4.5).abs() < 0.1, "{h:?}");
}

#[test]
fn weak_modulation_approaches_the_rotating_wave_limit() {
    let run = experiments::RunOptions {
        models: vec![ModelTag::Floquet, ModelTag::Rwa],
        ..Default::default()
    };
    let psi = mollow_core::InitialState::ground();
    let dev = |r: f64| {
        let c = mollow_core::DriveConfig::resonant_mhz(3.0, 3.0, 3.0 * r, 0.0);
        let rep = experiments::compare_point(&c, &psi, &run).unwrap();
        let d = &rep.deviations[0];
        let rel_omega = d
            .modes
            .iter()
            .filter(|m| m.n == 1)
            .filter_map(|m| m.rel_omega)
            .fold(0.0, f64::max);
        (rel_omega, d.max_rel_amp_n1.unwrap())
    };
    let (w1, a1) = dev(0.1);
    let (w2, a2) = dev(0.01);
    assert!(w2 < 1e-3 && w1 < 1e-2, "{w1} {w2}");
    let ratio = a1 / a2;
    assert!((5.0..20.0).contains(&ratio), "{a1} {a2}");
}
