//! Unitary and Lindblad propagation, jump operators and seeded Monte-Carlo ensembles.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{GateError, Result};
use crate::hamiltonian::{DriveSnapshot, GateHamiltonian, HamiltonianModel};
use crate::integrate::{integrate, IntegratorConfig, StepStats, Workspace};
use crate::linalg::{adjoint_in_place, norm_sqr, DenseMatrix, SparseOp};
use crate::scalar::{ci, cone, czero, Real, C};
use crate::space::{ladder_operators, spin_operators, FockCutoff};
use crate::state::{CompositeState, Representation};

/// Eigenvalues below this fail a Lindblad run.
pub const NEGATIVE_EIGENVALUE_THRESHOLD: f64 = -1e-6;

/// `H(t)/ħ` evaluated on demand.
pub trait TimeDependentHamiltonian<T: Real = f64> {
    fn dim(&self) -> usize;
    /// Overwrites `out` with `H(t)`.
    fn assemble(&self, t: T, out: &mut SparseOp<T>);
}

impl<T: Real> TimeDependentHamiltonian<T> for SparseOp<T> {
    fn dim(&self) -> usize {
        SparseOp::dim(self)
    }

    fn assemble(&self, _t: T, out: &mut SparseOp<T>) {
        out.clear();
        out.push_scaled(self, cone());
    }
}

/// Wraps a closure as a Hamiltonian.
pub struct FnHamiltonian<F> {
    dim: usize,
    f: F,
}

impl<F> FnHamiltonian<F> {
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<T: Real, F: Fn(T, &mut SparseOp<T>)> TimeDependentHamiltonian<T> for FnHamiltonian<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn assemble(&self, t: T, out: &mut SparseOp<T>) {
        (self.f)(t, out)
    }
}

/// Lab-frame gate Hamiltonian under one fixed drive snapshot.
pub struct DrivenGate<'a, T: Real = f64> {
    pub hamiltonian: &'a GateHamiltonian<T>,
    pub model: HamiltonianModel,
    pub drive: DriveSnapshot<T>,
    /// Extra multiplier on `Ω_C` (amplitude noise).
    pub carrier_mult: T,
}

impl<T: Real> TimeDependentHamiltonian<T> for DrivenGate<'_, T> {
    fn dim(&self) -> usize {
        self.hamiltonian.dim()
    }

    fn assemble(&self, t: T, out: &mut SparseOp<T>) {
        self.hamiltonian
            .model_into(self.model, &self.drive, t, self.carrier_mult, out);
    }
}

/// Eq. (2) in the dressed frame, with or without the fast flip term.
pub struct DressedGate<'a, T: Real = f64> {
    hamiltonian: &'a GateHamiltonian<T>,
    drive: DriveSnapshot<T>,
    with_flip: bool,
}

impl<'a, T: Real> DressedGate<'a, T> {
    /// Fails where the dressed frame is undefined (carrier off or phased).
    pub fn new(hamiltonian: &'a GateHamiltonian<T>, drive: DriveSnapshot<T>, with_flip: bool) -> Result<Self> {
        let mut probe = SparseOp::zeros(hamiltonian.dim());
        hamiltonian.dressed_into(&drive, T::zero(), &mut probe)?;
        Ok(Self {
            hamiltonian,
            drive,
            with_flip,
        })
    }
}

impl<T: Real> TimeDependentHamiltonian<T> for DressedGate<'_, T> {
    fn dim(&self) -> usize {
        self.hamiltonian.dim()
    }

    fn assemble(&self, t: T, out: &mut SparseOp<T>) {
        let r = if self.with_flip {
            self.hamiltonian.dressed_into(&self.drive, t, out)
        } else {
            self.hamiltonian.dressed_rwa_into(&self.drive, t, out)
        };
        debug_assert!(r.is_ok(), "validated in DressedGate::new");
    }
}

/// Collapse operators `L_k` with rates `γ_k`; the dissipator uses `√γ_k L_k`.
#[derive(Clone, Debug)]
pub struct JumpOperatorSet<T: Real = f64> {
    dim: usize,
    jumps: Vec<(SparseOp<T>, T)>,
}

impl<T: Real> JumpOperatorSet<T> {
    pub fn empty(dim: usize) -> Self {
        Self { dim, jumps: Vec::new() }
    }

    pub fn push(&mut self, op: SparseOp<T>, rate: T) -> Result<()> {
        if !(rate >= T::zero()) || !rate.is_finite() {
            return Err(GateError::param("rate", "jump rates must be finite and non-negative"));
        }
        if op.dim() != self.dim {
            return Err(GateError::param("jump operator", "dimension mismatch"));
        }
        if rate > T::zero() {
            self.jumps.push((op, rate));
        }
        Ok(())
    }

    pub fn merged(mut self, other: JumpOperatorSet<T>) -> Result<Self> {
        if other.dim != self.dim {
            return Err(GateError::param("jump operator", "dimension mismatch"));
        }
        self.jumps.extend(other.jumps);
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// True when no channel has a positive rate.
    pub fn is_empty(&self) -> bool {
        self.jumps.is_empty()
    }

    pub fn len(&self) -> usize {
        self.jumps.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = &(SparseOp<T>, T)> {
        self.jumps.iter()
    }
}

/// Symmetric heating `{(a†, Γ), (a, Γ)}`, so `d⟨n⟩/dt = Γ` at any occupation.
pub fn heating_jumps<T: Real>(cutoff: FockCutoff, rate_quanta_per_s: T) -> Result<JumpOperatorSet<T>> {
    let (a, ad) = ladder_operators::<T>(cutoff);
    let id = SparseOp::identity(4);
    let mut set = JumpOperatorSet::empty(cutoff.dim());
    set.push(id.kron(&ad), rate_quanta_per_s)?;
    set.push(id.kron(&a), rate_quanta_per_s)?;
    Ok(set)
}

/// Per ion: Rayleigh dephasing `σ^z` at `(1−f)·r` and Raman flips `σ^±` at `f·r/2` each.
pub fn spontaneous_emission_jumps<T: Real>(cutoff: FockCutoff, rate_per_ion: T, raman_fraction: T) -> Result<JumpOperatorSet<T>> {
    if !(T::zero()..=T::one()).contains(&raman_fraction) {
        return Err(GateError::param("raman_fraction", "must lie in [0, 1]"));
    }
    let ops = spin_operators::<T>(cutoff);
    let half = T::lit(0.5);
    let mut set = JumpOperatorSet::empty(cutoff.dim());
    for j in 0..2 {
        set.push(ops.z[j].clone(), (T::one() - raman_fraction) * rate_per_ion)?;
        set.push(ops.plus[j].clone(), raman_fraction * rate_per_ion * half)?;
        set.push(ops.minus[j].clone(), raman_fraction * rate_per_ion * half)?;
    }
    Ok(set)
}

/// Diagnostics from one propagation call.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PropagationReport {
    pub steps: StepStats,
    /// `|‖ψ‖ − ‖ψ₀‖|` (unitary runs).
    pub norm_drift: f64,
    /// `|tr ρ − tr ρ₀|` (Lindblad runs).
    pub trace_drift: f64,
    /// Largest anti-Hermitian part removed by symmetrization.
    pub hermiticity_drift: f64,
    /// Smallest eigenvalue of the final density operator (Lindblad runs).
    pub min_eigenvalue: Option<f64>,
}

impl PropagationReport {
    /// Combines reports of consecutive segments (drifts are maxima).
    pub fn merge(&mut self, other: &PropagationReport) {
        self.steps.merge(&other.steps);
        self.norm_drift = self.norm_drift.max(other.norm_drift);
        self.trace_drift = self.trace_drift.max(other.trace_drift);
        self.hermiticity_drift = self.hermiticity_drift.max(other.hermiticity_drift);
        self.min_eigenvalue = match (self.min_eigenvalue, other.min_eigenvalue) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        };
    }
}

/// Evolves the amplitudes in `psi` under `H` from `t0` to `t1`.
pub fn evolve_pure<T: Real, H: TimeDependentHamiltonian<T> + ?Sized>(
    h: &H,
    cfg: &IntegratorConfig<T>,
    ws: &mut Workspace<T>,
    psi: &mut [C<T>],
    t0: T,
    t1: T,
) -> Result<PropagationReport> {
    let n0 = norm_sqr(psi).sqrt();
    let mut op = SparseOp::zeros(h.dim());
    let steps = integrate(
        cfg,
        ws,
        psi,
        t0,
        t1,
        |t, y, dy| {
            h.assemble(t, &mut op);
            dy.fill(czero());
            op.mul_vec_acc(y, dy);
            for d in dy.iter_mut() {
                // −i·d
                *d = C::new(d.im, -d.re);
            }
        },
        |_| false,
    )?;
    Ok(PropagationReport {
        steps,
        norm_drift: (norm_sqr(psi).sqrt() - n0).abs().to_f64_lossy(),
        ..Default::default()
    })
}

/// Precomputed pieces of the Lindblad generator.
pub struct LindbladOps<T: Real = f64> {
    /// `√γ_k L_k`
    scaled: Vec<SparseOp<T>>,
    /// `½ Σ L̃†L̃`
    decay: SparseOp<T>,
}

impl<T: Real> LindbladOps<T> {
    pub fn new(jumps: &JumpOperatorSet<T>) -> Self {
        let scaled: Vec<SparseOp<T>> = jumps.iter().map(|(l, g)| l.scaled(C::new(g.sqrt(), T::zero()))).collect();
        let mut decay = SparseOp::zeros(jumps.dim());
        for l in &scaled {
            decay.push_scaled(&l.adjoint().matmul(l), C::new(T::lit(0.5), T::zero()));
        }
        Self {
            scaled,
            decay: decay.compressed(),
        }
    }

    /// `dρ/dt` for a row-major `ρ`, using `G = iH + K`:
    /// `dρ = −Gρ − (Gρ)† + Σ L̃(L̃ρ)†`. Needs Hermitian `ρ`.
    pub fn rhs(&self, h: &SparseOp<T>, g: &mut SparseOp<T>, rho: &[C<T>], out: &mut [C<T>], scratch: &mut [C<T>]) {
        let n = h.dim();
        g.clear();
        g.push_scaled(h, ci());
        g.push_scaled(&self.decay, cone());
        scratch.fill(czero());
        g.mul_dense_acc(rho, scratch);
        for r in 0..n {
            for c in 0..n {
                out[r * n + c] = -(scratch[r * n + c] + scratch[c * n + r].conj());
            }
        }
        for l in &self.scaled {
            scratch.fill(czero());
            l.mul_dense_acc(rho, scratch);
            adjoint_in_place(scratch, n);
            // out += L̃ · scratch
            l.mul_dense_acc(scratch, out);
        }
    }
}

fn hermitian_defect<T: Real>(m: &[C<T>], n: usize) -> T {
    let mut worst = T::zero();
    for r in 0..n {
        for c in r..n {
            worst = worst.max((m[r * n + c] - m[c * n + r].conj()).norm());
        }
    }
    worst
}

fn symmetrize_buf<T: Real>(m: &mut [C<T>], n: usize) {
    let half = T::lit(0.5);
    for r in 0..n {
        for c in r..n {
            let v = (m[r * n + c] + m[c * n + r].conj()) * half;
            m[r * n + c] = v;
            m[c * n + r] = v.conj();
        }
    }
}

fn trace_buf<T: Real>(m: &[C<T>], n: usize) -> T {
    (0..n).map(|i| m[i * n + i].re).sum()
}

/// Evolves a row-major density buffer under the master equation.
///
/// The eigenvalue check is left to the caller (it needs a full diagonalization).
pub fn evolve_density<T: Real, H: TimeDependentHamiltonian<T> + ?Sized>(
    h: &H,
    lind: &LindbladOps<T>,
    cfg: &IntegratorConfig<T>,
    ws: &mut Workspace<T>,
    rho: &mut [C<T>],
    t0: T,
    t1: T,
) -> Result<PropagationReport> {
    let n = h.dim();
    let tr0 = trace_buf(rho, n);
    let mut op = SparseOp::zeros(n);
    let mut g = SparseOp::zeros(n);
    let mut scratch = vec![czero(); n * n];
    let mut worst = T::zero();
    // symmetrize only once the defect is above rounding level
    let threshold = T::lit(1e-13).max(T::epsilon() * T::lit(64.0));
    let steps = integrate(
        cfg,
        ws,
        rho,
        t0,
        t1,
        |t, y, dy| {
            h.assemble(t, &mut op);
            lind.rhs(&op, &mut g, y, dy, &mut scratch);
        },
        |y| {
            let d = hermitian_defect(y, n);
            worst = worst.max(d);
            if d > threshold {
                symmetrize_buf(y, n);
                true
            } else {
                false
            }
        },
    )?;
    Ok(PropagationReport {
        steps,
        trace_drift: (trace_buf(rho, n) - tr0).abs().to_f64_lossy(),
        hermiticity_drift: worst.to_f64_lossy(),
        ..Default::default()
    })
}

/// Solves `i∂ψ/∂t = H(t)ψ` for a pure state. Norm drift is reported, not corrected.
pub fn propagate_unitary<T: Real, H: TimeDependentHamiltonian<T> + ?Sized>(
    h: &H,
    psi0: &CompositeState<T>,
    t0: T,
    t1: T,
    cfg: &IntegratorConfig<T>,
) -> Result<(CompositeState<T>, PropagationReport)> {
    cfg.validate()?;
    check_interval(t0, t1)?;
    let amps = psi0
        .amplitudes()
        .ok_or_else(|| GateError::InvalidState("propagate_unitary needs a pure state".into()))?;
    check_dim(h.dim(), psi0.dim())?;
    let mut psi = amps.to_vec();
    let mut ws = Workspace::new(psi.len());
    let report = evolve_pure(h, cfg, &mut ws, &mut psi, t0, t1)?;
    Ok((CompositeState::pure_unchecked(psi0.cutoff(), psi), report))
}

/// Solves the Lindblad master equation; a pure input is promoted to `|ψ⟩⟨ψ|`.
pub fn propagate_lindblad<T: Real, H: TimeDependentHamiltonian<T> + ?Sized>(
    h: &H,
    jumps: &JumpOperatorSet<T>,
    rho0: &CompositeState<T>,
    t0: T,
    t1: T,
    cfg: &IntegratorConfig<T>,
) -> Result<(CompositeState<T>, PropagationReport)> {
    cfg.validate()?;
    check_interval(t0, t1)?;
    check_dim(h.dim(), rho0.dim())?;
    check_dim(jumps.dim(), rho0.dim())?;
    let n = rho0.dim();
    let mut rho = rho0.to_density().into_vec();
    let mut ws = Workspace::new(n * n);
    let lind = LindbladOps::new(jumps);
    let mut report = evolve_density(h, &lind, cfg, &mut ws, &mut rho, t0, t1)?;
    let state = CompositeState::mixed_unchecked(rho0.cutoff(), DenseMatrix::from_row_major(n, rho));
    report.min_eigenvalue = Some(check_eigenvalues(&state)?);
    Ok((state, report))
}

/// Smallest eigenvalue, or an error when it is below the allowed threshold.
pub fn check_eigenvalues<T: Real>(state: &CompositeState<T>) -> Result<f64> {
    let min = state.min_eigenvalue();
    if min < NEGATIVE_EIGENVALUE_THRESHOLD {
        return Err(GateError::NegativeEigenvalue {
            value: min,
            threshold: NEGATIVE_EIGENVALUE_THRESHOLD,
        });
    }
    Ok(min)
}

fn check_interval<T: Real>(t0: T, t1: T) -> Result<()> {
    if !(t1 >= t0) {
        return Err(GateError::param("t1", "end time precedes start time"));
    }
    Ok(())
}

fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(GateError::InvalidState(format!(
            "Hamiltonian dimension {expected} does not match state dimension {got}"
        )));
    }
    Ok(())
}

/// Random stream for one Monte-Carlo shot, independent of scheduling.
pub fn shot_rng(seed: u64, shot: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(shot);
    rng
}

/// Per-shot outcomes, in shot order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ensemble<O> {
    pub seed: u64,
    pub outcomes: Vec<O>,
}

impl<O> Ensemble<O> {
    pub fn shots(&self) -> usize {
        self.outcomes.len()
    }

    /// Sequential mean, so the result does not depend on the worker count.
    pub fn mean_by(&self, f: impl Fn(&O) -> f64) -> f64 {
        let sum: f64 = self.outcomes.iter().map(&f).fold(0.0, |a, x| a + x);
        sum / self.outcomes.len() as f64
    }

    /// Sample standard error of the mean.
    pub fn stderr_by(&self, f: impl Fn(&O) -> f64) -> f64 {
        let n = self.outcomes.len();
        if n < 2 {
            return 0.0;
        }
        let m = self.mean_by(&f);
        let var = self.outcomes.iter().map(|o| (f(o) - m).powi(2)).fold(0.0, |a, x| a + x) / (n - 1) as f64;
        (var / n as f64).sqrt()
    }
}

/// Runs `experiment(sample(rng_k))` for shots `k = 0..shots` on `workers` threads
/// (0 means the rayon default). Shot `k` always sees [`shot_rng`]`(seed, k)`.
pub fn monte_carlo_ensemble<D, O, S, E>(shots: usize, seed: u64, workers: usize, sample: S, experiment: E) -> Result<Ensemble<O>>
where
    D: Send,
    O: Send,
    S: Fn(&mut ChaCha8Rng) -> D + Sync,
    E: Fn(usize, D) -> Result<O> + Sync,
{
    if shots == 0 {
        return Err(GateError::param("shots", "need at least one shot"));
    }
    let run = || {
        (0..shots)
            .into_par_iter()
            .map(|k| {
                let mut rng = shot_rng(seed, k as u64);
                experiment(k, sample(&mut rng))
            })
            .collect::<Result<Vec<O>>>()
    };
    let outcomes = with_workers(workers, run)?;
    Ok(Ensemble { seed, outcomes })
}

/// Runs `f` inside a pool of `workers` threads (0: global pool).
pub fn with_workers<R: Send>(workers: usize, f: impl FnOnce() -> R + Send) -> R {
    if workers == 0 {
        return f();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
        Ok(pool) => pool.install(f),
        Err(e) => {
            log::warn!("could not build a {workers}-thread pool ({e}); using the global pool");
            f()
        }
    }
}

/// Expectation `tr(Oρ)` for either representation.
pub fn expectation<T: Real>(op: &SparseOp<T>, state: &CompositeState<T>) -> C<T> {
    match state.representation() {
        Representation::Pure(v) => op.expectation(v, v),
        Representation::Mixed(m) => {
            let n = m.dim();
            op.entries()
                .iter()
                .fold(czero(), |acc, &(r, c, v)| acc + v * m.as_slice()[c * n + r])
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::{bell_target, spin_basis, thermal_state, GateParams, ModeGeometry, ModeLabel, Spin};
    use std::f64::consts::PI;

    fn small_params(n_max: usize) -> GateParams {
        let geom = ModeGeometry::beryllium(ModeLabel::Stretch, 4.5e6, 313e-9);
        let delta = 2.0 * PI * 8e3;
        GateParams::new(2.0 * PI * 50e3, 1.0, delta, geom, FockCutoff::new(n_max).unwrap())
            .unwrap()
            .with_sideband_rabi(delta / (2.0 * 2f64.sqrt()))
    }

    #[test]
    fn zero_hamiltonian_is_identity() {
        let cutoff = FockCutoff::new(3).unwrap();
        let psi = CompositeState::product_pure(cutoff, &bell_target(), 1).unwrap();
        let h = SparseOp::<f64>::zeros(cutoff.dim());
        let (out, rep) = propagate_unitary(&h, &psi, 0.0, 1e-3, &IntegratorConfig::default()).unwrap();
        assert_eq!(out, psi);
        assert!(rep.norm_drift < 1e-15);
    }

    #[test]
    fn carrier_pi_pulse_flips_both_spins() {
        let params = small_params(3);
        let ham = GateHamiltonian::new(params).unwrap();
        let gate = DrivenGate {
            hamiltonian: &ham,
            model: HamiltonianModel::Full,
            drive: DriveSnapshot::carrier_only(0.0),
            carrier_mult: 1.0,
        };
        let psi = CompositeState::product_pure(params.cutoff, &spin_basis(Spin::Down, Spin::Down), 0).unwrap();
        let t_pi = PI / (2.0 * params.omega_c);
        let (out, rep) = propagate_unitary(&gate, &psi, 0.0, t_pi, &IntegratorConfig::default()).unwrap();
        assert!(out.spin_fidelity(&spin_basis(Spin::Up, Spin::Up)) > 1.0 - 1e-8);
        assert!(rep.norm_drift < 1e-9);
    }

    #[test]
    fn lindblad_without_jumps_matches_unitary() {
        let params = small_params(4);
        let ham = GateHamiltonian::new(params).unwrap();
        let gate = DrivenGate {
            hamiltonian: &ham,
            model: HamiltonianModel::Full,
            drive: DriveSnapshot::gate(0.3),
            carrier_mult: 1.0,
        };
        let psi = CompositeState::product_pure(params.cutoff, &spin_basis(Spin::Down, Spin::Down), 1).unwrap();
        let cfg = IntegratorConfig::default();
        let t1 = 40e-6;
        let (u, _) = propagate_unitary(&gate, &psi, 0.0, t1, &cfg).unwrap();
        let jumps = JumpOperatorSet::empty(params.cutoff.dim());
        let (rho, rep) = propagate_lindblad(&gate, &jumps, &psi, 0.0, t1, &cfg).unwrap();
        assert!(rho.to_density().max_abs_diff(&u.to_density()) < 1e-8);
        assert!(rep.trace_drift < 1e-9);
        assert!(rep.min_eigenvalue.unwrap() > -1e-6);
    }

    #[test]
    fn heating_rate_sets_initial_slope() {
        let cutoff = FockCutoff::new(6).unwrap();
        let gamma = 300.0;
        let jumps = heating_jumps(cutoff, gamma).unwrap();
        let lind = LindbladOps::new(&jumps);
        let psi = CompositeState::<f64>::product_pure(cutoff, &spin_basis(Spin::Down, Spin::Down), 0).unwrap();
        let rho = psi.to_density();
        let n = cutoff.dim();
        let h = SparseOp::zeros(n);
        let mut g = SparseOp::zeros(n);
        let mut d = vec![czero(); n * n];
        let mut scratch = vec![czero(); n * n];
        lind.rhs(&h, &mut g, rho.as_slice(), &mut d, &mut scratch);
        let (_, ad) = ladder_operators::<f64>(cutoff);
        let num = SparseOp::identity(4).kron(&ad.matmul(&ad.adjoint()));
        let dn = expectation(
            &num,
            &CompositeState::mixed_unchecked(cutoff, DenseMatrix::from_row_major(n, d)),
        );
        assert!((dn.re - gamma).abs() < 1e-9);
    }

    #[test]
    fn heating_keeps_thermal_state_diagonal() {
        let cutoff = FockCutoff::new(8).unwrap();
        let th = thermal_state(0.2, cutoff).unwrap();
        let rho0 = CompositeState::spin_with_thermal(cutoff, &spin_basis(Spin::Down, Spin::Down), &th).unwrap();
        let jumps = heating_jumps(cutoff, 500.0).unwrap();
        let h = SparseOp::zeros(cutoff.dim());
        let (rho, rep) = propagate_lindblad(&h, &jumps, &rho0, 0.0, 200e-6, &IntegratorConfig::default()).unwrap();
        let m = rho.to_density();
        for r in 0..m.dim() {
            for c in 0..m.dim() {
                if r != c {
                    assert!(m[(r, c)].norm() < 1e-14);
                }
            }
        }
        assert!(rep.trace_drift < 1e-9);
    }

    #[test]
    fn dephasing_preserves_populations() {
        let cutoff = FockCutoff::new(2).unwrap();
        let jumps = spontaneous_emission_jumps(cutoff, 1e3, 0.0).unwrap();
        assert_eq!(jumps.len(), 2);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let spin = [C::new(s, 0.0), czero(), czero(), C::new(s, 0.0)];
        let psi = CompositeState::product_pure(cutoff, &spin, 0).unwrap();
        let h = SparseOp::zeros(cutoff.dim());
        let (rho, _) = propagate_lindblad(&h, &jumps, &psi, 0.0, 1e-3, &IntegratorConfig::default()).unwrap();
        let sd = rho.spin_density();
        assert!((sd[(0, 0)].re - 0.5).abs() < 1e-10);
        assert!((sd[(3, 3)].re - 0.5).abs() < 1e-10);
        // two σ^z channels at rate r each: coherence decays as e^{−4rt}
        assert!((sd[(0, 3)].norm() - 0.5 * (-4.0f64).exp()).abs() < 1e-8);
    }

    #[test]
    fn jump_set_rejects_negative_rates() {
        let cutoff = FockCutoff::new(2).unwrap();
        assert!(heating_jumps::<f64>(cutoff, -1.0).is_err());
        assert!(heating_jumps::<f64>(cutoff, 0.0).unwrap().is_empty());
        assert!(spontaneous_emission_jumps::<f64>(cutoff, 1.0, 1.5).is_err());
    }

    #[test]
    fn monte_carlo_is_worker_independent() {
        use rand::Rng;
        let run = |workers| {
            monte_carlo_ensemble(64, 7, workers, |rng| rng.random::<f64>(), |_, x| Ok(x.sin()))
                .unwrap()
                .mean_by(|x| *x)
        };
        assert_eq!(run(1).to_bits(), run(4).to_bits());
        let zero = monte_carlo_ensemble(5, 1, 2, |_| 0.25, |_, x| Ok(x)).unwrap();
        assert_eq!(zero.mean_by(|x| *x), 0.25);
    }
}
