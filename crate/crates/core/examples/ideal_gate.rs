//! Calibrates both gate variants and prints their noise-free Bell fidelities.

use dressed_gate::hamiltonian::{GateHamiltonian, HamiltonianModel};
use dressed_gate::integrate::IntegratorConfig;
use dressed_gate::sequence::{calibrate_sideband_amplitude, ground_spins, run_experiment, Perturbation, Variant};
use dressed_gate::space::{bell_target, FockCutoff};

fn main() -> dressed_gate::Result<()> {
    let cfg = IntegratorConfig::default();
    for variant in Variant::ALL {
        let base = variant.nominal_params(FockCutoff::new(8)?)?;
        let params = calibrate_sideband_amplitude(variant, &base, &cfg)?.apply(&base);
        let ham = GateHamiltonian::new(params)?;
        let seq = variant.gate_sequence(&params)?;
        let psi = ground_spins(params.cutoff, 0)?;
        for model in [HamiltonianModel::Secular, HamiltonianModel::Full] {
            let out = run_experiment(&ham, &seq, &psi, &Perturbation::ideal(model), &cfg)?;
            println!(
                "{variant:<9} {model:?}: Bell fidelity {:.6}",
                out.state.spin_fidelity(&bell_target())
            );
        }
    }
    Ok(())
}
