//! End-to-end physics properties of the gate, cheaper siblings of the acceptance runs.

use std::f64::consts::PI;

use dressed_gate::dynamics::{evolve_pure, DressedGate, DrivenGate};
use dressed_gate::hamiltonian::{DriveSnapshot, GateHamiltonian, HamiltonianModel};
use dressed_gate::integrate::{IntegratorConfig, Workspace};
use dressed_gate::noise::{carrier_infidelity_probe, NoiseModel, RunOptions};
use dressed_gate::sequence::{calibrate_sideband_amplitude, ground_spins, run_experiment, CarrierProfile, Perturbation, Variant};
use dressed_gate::space::{bell_target, spin_basis, thermal_state, FockCutoff, GateParams, Spin};
use dressed_gate::{State, C};

fn calibrated(variant: Variant, n_max: usize) -> GateParams {
    let base = variant.nominal_params(FockCutoff::new(n_max).unwrap()).unwrap();
    let cal_cut = FockCutoff::new(n_max.min(8)).unwrap();
    let cal = calibrate_sideband_amplitude(variant, &base.with_cutoff(cal_cut), &IntegratorConfig::default()).unwrap();
    cal.apply(&base)
}

fn gate_fidelity(p: &GateParams, variant: Variant, model: HamiltonianModel, n_bar: f64) -> f64 {
    let ham = GateHamiltonian::new(*p).unwrap();
    let seq = variant.gate_sequence(p).unwrap();
    let psi = State::spin_with_thermal(
        p.cutoff,
        &spin_basis(Spin::Down, Spin::Down),
        &thermal_state(n_bar, p.cutoff).unwrap(),
    )
    .unwrap();
    run_experiment(&ham, &seq, &psi, &Perturbation::ideal(model), &IntegratorConfig::default())
        .unwrap()
        .state
        .spin_fidelity(&bell_target())
}

#[test]
fn both_variants_make_the_bell_state() {
    for v in Variant::ALL {
        let p = calibrated(v, 10);
        assert!(gate_fidelity(&p, v, HamiltonianModel::Secular, 0.0) > 0.9999, "{v}");
        // the fast term costs a few 1e-3 at the experimental Ω_C/δ
        let full = gate_fidelity(&p, v, HamiltonianModel::Full, 0.0);
        assert!(full > 0.99 && full < 0.9999, "{v}: {full}");
    }
}

#[test]
fn lab_and_dressed_frames_agree() {
    let cutoff = FockCutoff::new(4).unwrap();
    let mut p = Variant::Laser.nominal_params(cutoff).unwrap();
    p.omega_c = 10.0 * p.delta;
    p.phi = 0.0;
    let ham = GateHamiltonian::new(p).unwrap();
    let drive = DriveSnapshot::gate(0.0);
    let cfg = IntegratorConfig::default().with_tolerance(1e-12, 1e-14);
    let t1 = PI / p.delta;
    let spin = [C::new(0.6, 0.0), C::new(0.0, 0.48), C::new(0.0, 0.0), C::new(0.64, 0.0)];
    let psi0 = State::product_pure(cutoff, &spin, 0).unwrap();

    let lab = DrivenGate {
        hamiltonian: &ham,
        model: HamiltonianModel::Full,
        drive,
        carrier_mult: 1.0,
    };
    let mut v = psi0.amplitudes().unwrap().to_vec();
    let mut ws = Workspace::new(v.len());
    evolve_pure(&lab, &cfg, &mut ws, &mut v, 0.0, t1).unwrap();
    let mapped = ham.to_dressed_frame(&State::pure(cutoff, v).unwrap(), &drive, t1).unwrap();

    let dressed = DressedGate::new(&ham, drive, true).unwrap();
    let mut w = ham
        .to_dressed_frame(&psi0, &drive, 0.0)
        .unwrap()
        .amplitudes()
        .unwrap()
        .to_vec();
    evolve_pure(&dressed, &cfg, &mut ws, &mut w, 0.0, t1).unwrap();
    let dist: f64 = mapped
        .amplitudes()
        .unwrap()
        .iter()
        .zip(&w)
        .map(|(a, b)| (a - b).norm_sqr())
        .sum::<f64>()
        .sqrt();
    assert!(dist < 1e-8, "{dist}");
}

#[test]
fn secular_gate_ignores_stretch_temperature() {
    let p = calibrated(Variant::Laser, 20);
    let f0 = gate_fidelity(&p, Variant::Laser, HamiltonianModel::Secular, 0.0);
    let f1 = gate_fidelity(&p, Variant::Laser, HamiltonianModel::Secular, 0.2);
    assert!((f0 - f1).abs() < 1e-6, "{f0} vs {f1}");
}

#[test]
fn microwave_echo_cancels_carrier_offsets() {
    let p = calibrated(Variant::Microwave, 6);
    let ham = GateHamiltonian::new(p).unwrap();
    let echo = Variant::Microwave.gate_sequence(&p).unwrap();
    let bare = echo.filtered(|_, s| s.drive.sideband_on);
    let psi = ground_spins(p.cutoff, 0).unwrap();
    let cfg = IntegratorConfig::default();
    let err = |seq| {
        let ideal = Perturbation::ideal(HamiltonianModel::Secular);
        let nominal = run_experiment(&ham, seq, &psi, &ideal, &cfg).unwrap().state;
        let off = run_experiment(&ham, seq, &psi, &ideal.with_carrier(CarrierProfile::Constant(0.98)), &cfg)
            .unwrap()
            .state;
        1.0 - off.overlap_with(nominal.amplitudes().unwrap())
    };
    assert!(err(&bare) > 10.0 * err(&echo));
}

#[test]
fn carrier_probe_refocuses_slow_noise_only() {
    let p = Variant::Laser.nominal_params(FockCutoff::new(1).unwrap()).unwrap();
    let opts = RunOptions {
        shots: 64,
        seed: 3,
        ..RunOptions::default()
    };
    let sigma = 0.01;
    let slow = NoiseModel {
        carrier_slow_sigma: sigma,
        ..NoiseModel::none()
    };
    let fast = NoiseModel {
        carrier_fast_sigma: sigma,
        ..NoiseModel::none()
    };
    let s = carrier_infidelity_probe(Variant::Laser, &p, &slow, &opts).unwrap();
    let f = carrier_infidelity_probe(Variant::Laser, &p, &fast, &opts).unwrap();
    assert!(
        f.infidelity > 10.0 * s.infidelity,
        "slow {} fast {}",
        s.infidelity,
        f.infidelity
    );
}

#[test]
fn single_precision_propagation_tracks_double() {
    use dressed_gate::{Hamiltonian32, Params32, State32};
    let cutoff = FockCutoff::new(4).unwrap();
    let p = Variant::Laser.nominal_params(cutoff).unwrap();
    let p32 = Params32 {
        omega_c: p.omega_c as f32,
        omega_0: p.omega_0 as f32,
        delta: p.delta as f32,
        eta: p.eta as f32,
        phi: p.phi as f32,
        phi_prime: p.phi_prime.map(|x| x as f32),
        geometry: dressed_gate::space::ModeGeometry {
            label: p.geometry.label,
            omega_nu: p.geometry.omega_nu as f32,
            ion_mass: p.geometry.ion_mass as f32,
            delta_k_z: p.geometry.delta_k_z as f32,
            xi: p.geometry.xi.map(|x| x as f32),
        },
        cutoff,
    };
    let t1 = (PI / p.delta) as f32;
    let h32 = Hamiltonian32::new(p32).unwrap();
    let gate32 = DrivenGate {
        hamiltonian: &h32,
        model: HamiltonianModel::Full,
        drive: DriveSnapshot::gate(0.0f32),
        carrier_mult: 1.0f32,
    };
    let psi32 = State32::product_pure(cutoff, &spin_basis(Spin::Down, Spin::Down), 0).unwrap();
    let mut v32 = psi32.amplitudes().unwrap().to_vec();
    let mut ws32 = Workspace::new(v32.len());
    let cfg32 = IntegratorConfig::<f32>::default().with_tolerance(1e-5, 1e-7);
    evolve_pure(&gate32, &cfg32, &mut ws32, &mut v32, 0.0, t1).unwrap();

    let h = GateHamiltonian::new(p).unwrap();
    let gate = DrivenGate {
        hamiltonian: &h,
        model: HamiltonianModel::Full,
        drive: DriveSnapshot::gate(0.0),
        carrier_mult: 1.0,
    };
    let psi = ground_spins(cutoff, 0).unwrap();
    let mut v = psi.amplitudes().unwrap().to_vec();
    let mut ws = Workspace::new(v.len());
    evolve_pure(&gate, &IntegratorConfig::default(), &mut ws, &mut v, 0.0, PI / p.delta).unwrap();
    let diff = v32
        .iter()
        .zip(&v)
        .map(|(a, b)| (C::new(a.re as f64, a.im as f64) - b).norm())
        .fold(0.0, f64::max);
    assert!(diff < 1e-3, "{diff}");
}
