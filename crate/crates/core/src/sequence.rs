//! Pulse programs for the two gate variants, amplitude calibration and
//! segment-by-segment execution.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

use serde::{Deserialize, Serialize};

use crate::dynamics::{
    check_eigenvalues, evolve_density, evolve_pure, DrivenGate, JumpOperatorSet, LindbladOps, PropagationReport,
};
use crate::error::{GateError, Result};
use crate::hamiltonian::{DriveSnapshot, GateHamiltonian, HamiltonianModel};
use crate::integrate::{IntegratorConfig, Workspace};
use crate::linalg::DenseMatrix;
use crate::scalar::{Real, C};
use crate::space::{bell_target, spin_basis, FockCutoff, GateParams, ModeGeometry, ModeLabel, Spin};
use crate::state::{CompositeState, Representation};

/// Which carrier source drives the gate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Two loops with a mid-gate carrier π pulse, 4π/δ of sideband time.
    Microwave,
    /// One loop with a carrier phase flip at half time, 2π/δ total.
    Laser,
}

impl Variant {
    pub const ALL: [Variant; 2] = [Variant::Microwave, Variant::Laser];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Microwave => "microwave",
            Variant::Laser => "laser",
        }
    }

    /// Carrier π time of the experiment, seconds.
    pub fn pi_time_s(self) -> f64 {
        match self {
            Variant::Microwave => 11e-6,
            Variant::Laser => 5e-6,
        }
    }

    /// Gate detuning `δ/2π` in Hz, from the quoted gate durations.
    pub fn detuning_hz(self) -> f64 {
        match self {
            // 4π/δ = 250 µs
            Variant::Microwave => 2.0 / 250e-6,
            // 2π/δ = 105 µs
            Variant::Laser => 1.0 / 105e-6,
        }
    }

    /// Number of closed phase-space loops.
    pub fn loops(self) -> u32 {
        match self {
            Variant::Microwave => 2,
            Variant::Laser => 1,
        }
    }

    /// `|Ω_j|/δ` that closes the gate on a maximally entangled state.
    pub fn nominal_force_ratio(self) -> f64 {
        0.5 / f64::from(self.loops()).sqrt()
    }

    /// Carrier phase that puts the Bell coherence on the real axis.
    pub fn nominal_phase(self) -> f64 {
        match self {
            Variant::Microwave => FRAC_PI_4,
            Variant::Laser => -FRAC_PI_4,
        }
    }

    /// Spin state reached by the gate-timed carrier-only sequence from `|↓↓⟩`.
    pub fn carrier_only_target(self) -> [C<f64>; 4] {
        match self {
            Variant::Microwave => spin_basis(Spin::Up, Spin::Up),
            Variant::Laser => spin_basis(Spin::Down, Spin::Down),
        }
    }

    /// Experimental parameters: ⁹Be⁺ stretch mode at 4.5 MHz, 313 nm Raman
    /// beams, carrier from the π time, nominal sideband amplitude and phase.
    pub fn nominal_params(self, cutoff: FockCutoff) -> Result<GateParams> {
        self.params_from(&self.physical_inputs(), cutoff)
    }

    pub fn physical_inputs(self) -> PhysicalInputs {
        PhysicalInputs {
            carrier_pi_time_s: self.pi_time_s(),
            detuning_hz: self.detuning_hz(),
            stretch_frequency_hz: STRETCH_FREQUENCY_HZ,
            raman_wavelength_m: RAMAN_WAVELENGTH_M,
        }
    }

    /// Like [`Variant::nominal_params`] with the physical inputs replaced.
    pub fn params_from(self, inputs: &PhysicalInputs, cutoff: FockCutoff) -> Result<GateParams> {
        inputs.validate()?;
        let delta = 2.0 * PI * inputs.detuning_hz;
        let geom = ModeGeometry::beryllium(ModeLabel::Stretch, inputs.stretch_frequency_hz, inputs.raman_wavelength_m);
        let mut p = GateParams::new(PI / (2.0 * inputs.carrier_pi_time_s), 1.0, delta, geom, cutoff)?
            .with_sideband_rabi(self.nominal_force_ratio() * delta);
        p.phi = self.nominal_phase();
        Ok(p)
    }

    /// Interrogation of total sideband time `duration` with the variant's echo at
    /// the midpoint: a phase flip (laser) or a carrier π pulse (microwave).
    pub fn scan_sequence(self, params: &GateParams, duration: f64) -> Result<PulseSequence> {
        if !(duration >= 0.0) {
            return Err(GateError::param("duration", "must be non-negative"));
        }
        match self {
            Variant::Laser => laser_scan_sequence(duration),
            Variant::Microwave => PulseSequence::new(SequenceLabel::Custom)
                .with(duration / 2.0, DriveSnapshot::gate(0.0))?
                .with(carrier_pi_time(params)?, DriveSnapshot::carrier_only(FRAC_PI_2))?
                .with(duration / 2.0, DriveSnapshot::gate(0.0)),
        }
    }

    pub fn gate_sequence(self, params: &GateParams) -> Result<PulseSequence> {
        match self {
            Variant::Microwave => microwave_gate_sequence(params),
            Variant::Laser => laser_gate_sequence(params),
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = GateError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "microwave" => Ok(Variant::Microwave),
            "laser" => Ok(Variant::Laser),
            _ => Err(GateError::param("variant", format!("expected microwave or laser, got {s:?}"))),
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Inputs the experimental parameter set is derived from.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhysicalInputs {
    pub carrier_pi_time_s: f64,
    /// `δ/2π`.
    pub detuning_hz: f64,
    pub stretch_frequency_hz: f64,
    pub raman_wavelength_m: f64,
}

impl PhysicalInputs {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("carrier_pi_time", self.carrier_pi_time_s),
            ("detuning", self.detuning_hz),
            ("stretch_frequency", self.stretch_frequency_hz),
            ("raman_wavelength", self.raman_wavelength_m),
        ];
        for (name, v) in fields {
            if !(v > 0.0) || !v.is_finite() {
                return Err(GateError::param(name, format!("must be positive and finite, got {v}")));
            }
        }
        Ok(())
    }
}

pub const STRETCH_FREQUENCY_HZ: f64 = 4.5e6;
pub const COM_FREQUENCY_HZ: f64 = 2.6e6;
pub const RAMAN_WAVELENGTH_M: f64 = 313e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PulseSegment {
    /// Seconds.
    pub duration: f64,
    pub drive: DriveSnapshot,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SequenceLabel {
    MicrowaveGate,
    LaserGate,
    CarrierOnly,
    Analysis,
    Custom,
}

/// Ordered drive segments; time runs continuously across segment boundaries.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PulseSequence {
    pub label: SequenceLabel,
    segments: Vec<PulseSegment>,
}

impl PulseSequence {
    pub fn new(label: SequenceLabel) -> Self {
        Self {
            label,
            segments: Vec::new(),
        }
    }

    pub fn push(&mut self, duration: f64, drive: DriveSnapshot) -> Result<()> {
        if !(duration >= 0.0) || !duration.is_finite() {
            return Err(GateError::param(
                "duration",
                "segment durations must be finite and non-negative",
            ));
        }
        drive.validate()?;
        self.segments.push(PulseSegment { duration, drive });
        Ok(())
    }

    pub fn with(mut self, duration: f64, drive: DriveSnapshot) -> Result<Self> {
        self.push(duration, drive)?;
        Ok(self)
    }

    /// `self` followed by `other`, labelled custom.
    pub fn then(&self, other: &PulseSequence) -> PulseSequence {
        let mut segments = self.segments.clone();
        segments.extend_from_slice(&other.segments);
        PulseSequence {
            label: SequenceLabel::Custom,
            segments,
        }
    }

    pub fn segments(&self) -> &[PulseSegment] {
        &self.segments
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn total_duration(&self) -> f64 {
        self.segments.iter().map(|s| s.duration).sum()
    }

    /// Time with the sideband on.
    pub fn sideband_time(&self) -> f64 {
        self.segments.iter().filter(|s| s.drive.sideband_on).map(|s| s.duration).sum()
    }

    /// The same timing with the sideband switched off everywhere.
    pub fn carrier_only(&self) -> PulseSequence {
        PulseSequence {
            label: SequenceLabel::CarrierOnly,
            segments: self
                .segments
                .iter()
                .map(|s| PulseSegment {
                    duration: s.duration,
                    drive: DriveSnapshot {
                        sideband_on: false,
                        ..s.drive
                    },
                })
                .collect(),
        }
    }

    /// Applies `f` to every drive.
    pub fn map_drives(&self, f: impl Fn(&DriveSnapshot) -> DriveSnapshot) -> PulseSequence {
        PulseSequence {
            label: self.label,
            segments: self
                .segments
                .iter()
                .map(|s| PulseSegment {
                    duration: s.duration,
                    drive: f(&s.drive),
                })
                .collect(),
        }
    }

    /// Drops the segments for which `keep` is false.
    pub fn filtered(&self, keep: impl Fn(usize, &PulseSegment) -> bool) -> PulseSequence {
        PulseSequence {
            label: SequenceLabel::Custom,
            segments: self
                .segments
                .iter()
                .enumerate()
                .filter(|(i, s)| keep(*i, s))
                .map(|(_, s)| *s)
                .collect(),
        }
    }

    /// Text form for golden files: µs, phases in units of π.
    pub fn to_document(&self) -> SequenceDocument {
        SequenceDocument {
            label: self.label,
            total_us: self.total_duration() * 1e6,
            segments: self
                .segments
                .iter()
                .map(|s| SegmentDocument {
                    duration_us: s.duration * 1e6,
                    carrier_on: s.drive.carrier_on,
                    carrier_phase_pi: s.drive.carrier_phase / PI,
                    carrier_scale: s.drive.carrier_scale,
                    sideband_on: s.drive.sideband_on,
                    sideband_phase_offsets_pi: s.drive.sideband_phase_offsets.map(|x| x / PI),
                    sideband_scale: s.drive.sideband_scale,
                })
                .collect(),
        }
    }

    pub fn from_document(doc: &SequenceDocument) -> Result<Self> {
        let mut seq = PulseSequence::new(doc.label);
        for s in &doc.segments {
            seq.push(
                s.duration_us * 1e-6,
                DriveSnapshot {
                    carrier_on: s.carrier_on,
                    carrier_phase: s.carrier_phase_pi * PI,
                    carrier_scale: s.carrier_scale,
                    sideband_on: s.sideband_on,
                    sideband_phase_offsets: s.sideband_phase_offsets_pi.map(|x| x * PI),
                    sideband_scale: s.sideband_scale,
                },
            )?;
        }
        Ok(seq)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SequenceDocument {
    pub label: SequenceLabel,
    pub total_us: f64,
    pub segments: Vec<SegmentDocument>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentDocument {
    pub duration_us: f64,
    pub carrier_on: bool,
    pub carrier_phase_pi: f64,
    pub carrier_scale: f64,
    pub sideband_on: bool,
    pub sideband_phase_offsets_pi: [f64; 2],
    pub sideband_scale: [f64; 2],
}

fn check_delta(params: &GateParams) -> Result<()> {
    if !(params.delta > 0.0) {
        return Err(GateError::param("delta", "gate sequences need δ > 0"));
    }
    Ok(())
}

fn carrier_pi_time(params: &GateParams) -> Result<f64> {
    if !(params.omega_c > 0.0) {
        return Err(GateError::param("omega_c", "a carrier pulse needs Ω_C > 0"));
    }
    Ok(PI / (2.0 * params.omega_c))
}

/// Loop, carrier π pulse at `φ+π/2`, loop.
pub fn microwave_gate_sequence(params: &GateParams) -> Result<PulseSequence> {
    check_delta(params)?;
    let loop_time = 2.0 * PI / params.delta;
    PulseSequence::new(SequenceLabel::MicrowaveGate)
        .with(loop_time, DriveSnapshot::gate(0.0))?
        .with(carrier_pi_time(params)?, DriveSnapshot::carrier_only(FRAC_PI_2))?
        .with(loop_time, DriveSnapshot::gate(0.0))
}

/// One loop of `2π/δ`, the carrier phase flipped by π at half time.
pub fn laser_gate_sequence(params: &GateParams) -> Result<PulseSequence> {
    check_delta(params)?;
    laser_scan_sequence(2.0 * PI / params.delta).map(|mut s| {
        s.label = SequenceLabel::LaserGate;
        s
    })
}

/// Laser-variant interrogation of arbitrary length with the flip at half of it.
pub fn laser_scan_sequence(duration: f64) -> Result<PulseSequence> {
    PulseSequence::new(SequenceLabel::Custom)
        .with(duration / 2.0, DriveSnapshot::gate(0.0))?
        .with(duration / 2.0, DriveSnapshot::gate(PI))
}

/// Carrier π/2 pulse at absolute phase `phi`.
pub fn analysis_pulse(phi: f64, params: &GateParams) -> Result<PulseSequence> {
    let t = carrier_pi_time(params)? / 2.0;
    PulseSequence::new(SequenceLabel::Analysis).with(t, DriveSnapshot::carrier_only(phi - params.phi))
}

/// Carrier-amplitude multiplier as a function of time since the sequence start.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum CarrierProfile {
    Constant(f64),
    /// `values[k]` holds on `[kτ, (k+1)τ)`; the last value continues afterwards.
    Piecewise {
        tau: f64,
        values: Vec<f64>,
    },
}

impl Default for CarrierProfile {
    fn default() -> Self {
        CarrierProfile::Constant(1.0)
    }
}

impl CarrierProfile {
    fn value_at(&self, t: f64) -> f64 {
        match self {
            CarrierProfile::Constant(v) => *v,
            CarrierProfile::Piecewise { tau, values } => {
                let k = (t / tau).floor().max(0.0) as usize;
                values.get(k).or(values.last()).copied().unwrap_or(1.0)
            }
        }
    }

    /// Switching times strictly inside `(t0, t1)`.
    fn breakpoints(&self, t0: f64, t1: f64) -> Vec<f64> {
        match self {
            CarrierProfile::Constant(_) => Vec::new(),
            CarrierProfile::Piecewise { tau, values } => (1..values.len())
                .map(|k| k as f64 * tau)
                .filter(|&t| t > t0 && t < t1)
                .collect(),
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            CarrierProfile::Constant(v) if *v >= 0.0 => Ok(()),
            CarrierProfile::Piecewise { tau, values } if *tau > 0.0 && values.iter().all(|v| *v >= 0.0) => Ok(()),
            _ => Err(GateError::param("carrier_profile", "multipliers must be ≥ 0 and τ > 0")),
        }
    }
}

/// One realization of every imperfection a run can carry.
#[derive(Clone, Debug)]
pub struct Perturbation {
    pub model: HamiltonianModel,
    /// Lindblad channels; `None` or an empty set gives a unitary run.
    pub jumps: Option<JumpOperatorSet<f64>>,
    pub carrier: CarrierProfile,
    /// Extra per-ion multipliers on `Ω_j`.
    pub sideband_scale: [f64; 2],
    /// Applied to segments labelled as analysis pulses too.
    pub perturb_analysis: bool,
}

impl Perturbation {
    pub fn ideal(model: HamiltonianModel) -> Self {
        Self {
            model,
            jumps: None,
            carrier: CarrierProfile::default(),
            sideband_scale: [1.0; 2],
            perturb_analysis: false,
        }
    }

    pub fn with_carrier(mut self, carrier: CarrierProfile) -> Self {
        self.carrier = carrier;
        self
    }

    pub fn with_sideband_scale(mut self, scale: [f64; 2]) -> Self {
        self.sideband_scale = scale;
        self
    }

    pub fn with_jumps(mut self, jumps: JumpOperatorSet<f64>) -> Self {
        self.jumps = Some(jumps);
        self
    }

    fn is_open(&self) -> bool {
        self.jumps.as_ref().is_some_and(|j| !j.is_empty())
    }
}

/// Final state plus merged diagnostics.
#[derive(Clone, Debug)]
pub struct ExperimentOutput {
    pub state: CompositeState,
    pub report: PropagationReport,
}

/// Runs `seq` from `initial`.
///
/// Unitary runs on a mixed input evolve each eigencomponent separately.
/// Errors carry the index of the failing segment.
pub fn run_experiment(
    hamiltonian: &GateHamiltonian,
    seq: &PulseSequence,
    initial: &CompositeState,
    perturbation: &Perturbation,
    cfg: &IntegratorConfig,
) -> Result<ExperimentOutput> {
    cfg.validate()?;
    perturbation.carrier.validate()?;
    if perturbation.sideband_scale.iter().any(|s| !(*s >= 0.0)) {
        return Err(GateError::param("sideband_scale", "must be non-negative"));
    }
    if initial.dim() != hamiltonian.dim() {
        return Err(GateError::InvalidState(
            "initial state does not match the Hamiltonian cutoff".into(),
        ));
    }
    initial.validate()?;
    if seq.is_empty() {
        return Ok(ExperimentOutput {
            state: initial.clone(),
            report: PropagationReport::default(),
        });
    }
    let cutoff = initial.cutoff();
    if perturbation.is_open() {
        let jumps = perturbation.jumps.as_ref().expect("checked by is_open");
        let n = initial.dim();
        let lind = LindbladOps::new(jumps);
        let mut rho = initial.to_density().into_vec();
        let mut ws = Workspace::new(n * n);
        let report = walk_segments(hamiltonian, seq, perturbation, |gate, i, t0, t1| {
            evolve_density(gate, &lind, cfg, &mut ws, &mut rho, t0, t1).map_err(|e| e.in_segment(i))
        })?;
        let state = CompositeState::mixed_unchecked(cutoff, DenseMatrix::from_row_major(n, rho));
        let mut report = report;
        report.min_eigenvalue = Some(check_eigenvalues(&state)?);
        return Ok(ExperimentOutput { state, report });
    }
    let comps = initial.pure_components(1e-14);
    let mut report = PropagationReport::default();
    let mut finals = Vec::with_capacity(comps.len());
    for (w, mut psi) in comps {
        let mut ws = Workspace::new(psi.len());
        let r = walk_segments(hamiltonian, seq, perturbation, |gate, i, t0, t1| {
            evolve_pure(gate, cfg, &mut ws, &mut psi, t0, t1).map_err(|e| e.in_segment(i))
        })?;
        report.merge(&r);
        finals.push((w, psi));
    }
    let state = match (initial.representation(), finals.len()) {
        (Representation::Pure(_), 1) => CompositeState::pure_unchecked(cutoff, finals.pop().expect("one component").1),
        _ => {
            let parts: Vec<(f64, CompositeState)> = finals
                .into_iter()
                .map(|(w, v)| (w, CompositeState::pure_unchecked(cutoff, v)))
                .collect();
            CompositeState::mixture(&parts)?
        }
    };
    Ok(ExperimentOutput { state, report })
}

/// Calls `step` for every constant-drive piece of the sequence.
fn walk_segments(
    hamiltonian: &GateHamiltonian,
    seq: &PulseSequence,
    perturbation: &Perturbation,
    mut step: impl FnMut(&DrivenGate<'_, f64>, usize, f64, f64) -> Result<PropagationReport>,
) -> Result<PropagationReport> {
    let mut report = PropagationReport::default();
    let mut t = 0.0;
    for (i, seg) in seq.segments().iter().enumerate() {
        let t_end = t + seg.duration;
        let nominal = seq.label == SequenceLabel::Analysis && !perturbation.perturb_analysis;
        let mut drive = seg.drive;
        if !nominal {
            for j in 0..2 {
                drive.sideband_scale[j] *= perturbation.sideband_scale[j];
            }
        }
        let mut cuts = vec![t];
        if !nominal {
            cuts.extend(perturbation.carrier.breakpoints(t, t_end));
        }
        cuts.push(t_end);
        for w in cuts.windows(2) {
            let (a, b) = (w[0], w[1]);
            if b <= a {
                continue;
            }
            let carrier_mult = if nominal {
                1.0
            } else {
                perturbation.carrier.value_at(0.5 * (a + b))
            };
            let gate = DrivenGate {
                hamiltonian,
                model: perturbation.model,
                drive,
                carrier_mult,
            };
            report.merge(&step(&gate, i, a, b)?);
        }
        t = t_end;
    }
    Ok(report)
}

/// Runs several sequences back to back, e.g. gate then analysis pulse.
pub fn run_sequences(
    hamiltonian: &GateHamiltonian,
    seqs: &[&PulseSequence],
    initial: &CompositeState,
    perturbation: &Perturbation,
    cfg: &IntegratorConfig,
) -> Result<ExperimentOutput> {
    let mut state = initial.clone();
    let mut report = PropagationReport::default();
    for seq in seqs {
        let out = run_experiment(hamiltonian, seq, &state, perturbation, cfg)?;
        report.merge(&out.report);
        state = out.state;
    }
    Ok(ExperimentOutput { state, report })
}

/// Spin-space figures used by calibration: `(P_↑↑, P_↓↓, ⟨↑↑|ρ|↓↓⟩)`.
pub fn bell_components(state: &CompositeState) -> (f64, f64, C<f64>) {
    let s = state.spin_density();
    (s[(0, 0)].re, s[(3, 3)].re, s[(0, 3)])
}

/// Bell-state fidelity optimized over the carrier phase: `(P0+P2)/2 + |c|`.
pub fn phase_insensitive_fidelity(state: &CompositeState) -> f64 {
    let (p0, p2, c) = bell_components(state);
    0.5 * (p0 + p2) + c.norm()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub variant: Variant,
    /// Calibrated `Ω₀`, rad/s.
    pub omega_0: f64,
    /// `|Ω_j|` at the optimum, rad/s.
    pub sideband_rabi: f64,
    /// Carrier phase aligning the Bell coherence, rad.
    pub phi: f64,
    /// Bell fidelity with the calibrated parameters.
    pub fidelity: f64,
    /// Coarse scan: `(Ω₀, phase-insensitive fidelity)`.
    pub scan: Vec<(f64, f64)>,
    pub evaluations: usize,
}

impl CalibrationResult {
    pub fn apply(&self, params: &GateParams) -> GateParams {
        GateParams {
            omega_0: self.omega_0,
            phi: self.phi,
            ..*params
        }
    }
}

/// Minimum ideal fidelity a calibration must reach.
pub const CALIBRATION_TARGET: f64 = 0.9999;

const GRID_POINTS: usize = 48;

/// Finds `Ω₀` in `[0.1δ/η, 2δ/η]` maximizing the ideal (secular-model)
/// Bell fidelity from `|↓↓, n=0⟩`, then aligns the carrier phase.
///
/// The fidelity is multimodal in `Ω₀` (phases of π/4 + kπ/2 all work), so a
/// coarse grid picks the lowest-amplitude peak before golden-section refinement.
pub fn calibrate_sideband_amplitude(
    variant: Variant,
    params_base: &GateParams,
    cfg: &IntegratorConfig,
) -> Result<CalibrationResult> {
    params_base.validate()?;
    if !(params_base.eta > 0.0) {
        return Err(GateError::param("eta", "calibration needs η > 0"));
    }
    let seq = variant.gate_sequence(params_base)?;
    let cutoff = params_base.cutoff;
    let psi0 = CompositeState::product_pure(cutoff, &spin_basis(Spin::Down, Spin::Down), 0)?;
    let base_ham = GateHamiltonian::new(*params_base)?;
    let ideal = Perturbation::ideal(HamiltonianModel::Secular);
    let mut evaluations = 0usize;
    let mut run = |omega_0: f64, phi: f64| -> Result<CompositeState> {
        evaluations += 1;
        let p = GateParams {
            omega_0,
            phi,
            ..*params_base
        };
        let ham = base_ham.with_params(p)?;
        Ok(run_experiment(&ham, &seq, &psi0, &ideal, cfg)?.state)
    };

    let lo = 0.1 * params_base.delta / params_base.eta;
    let hi = 2.0 * params_base.delta / params_base.eta;
    let step = (hi - lo) / (GRID_POINTS - 1) as f64;
    let mut scan = Vec::with_capacity(GRID_POINTS);
    for k in 0..GRID_POINTS {
        let x = lo + step * k as f64;
        scan.push((x, phase_insensitive_fidelity(&run(x, params_base.phi)?)));
    }
    let best = scan.iter().map(|s| s.1).fold(f64::MIN, f64::max);
    // first local maximum within reach of the global one
    let peak = (0..GRID_POINTS)
        .find(|&k| {
            let v = scan[k].1;
            let left = k == 0 || scan[k - 1].1 <= v;
            let right = k + 1 == GRID_POINTS || scan[k + 1].1 <= v;
            left && right && v >= best - 0.02
        })
        .unwrap_or(0);
    let a = scan[peak.saturating_sub(1)].0;
    let b = scan[(peak + 1).min(GRID_POINTS - 1)].0;
    let mut objective = |x: f64| run(x, params_base.phi).map(|s| phase_insensitive_fidelity(&s));
    let omega_0 = golden_section_max(&mut objective, a, b, 1e-6)?;

    // a carrier phase shift Δ rotates the coherence by e^{2iΔ}; try both signs
    let state = run(omega_0, params_base.phi)?;
    let (_, _, c) = bell_components(&state);
    let mut phi = params_base.phi;
    let mut fidelity = f64::MIN;
    for sign in [-1.0, 1.0] {
        let cand = wrap_phase(params_base.phi + sign * 0.5 * c.arg());
        let f = run(omega_0, cand)?.spin_fidelity(&bell_target());
        if f > fidelity {
            fidelity = f;
            phi = cand;
        }
    }
    if fidelity < CALIBRATION_TARGET {
        return Err(GateError::CalibrationFailed {
            fidelity,
            required: CALIBRATION_TARGET,
        });
    }
    let p = GateParams { omega_0, ..*params_base };
    Ok(CalibrationResult {
        variant,
        omega_0,
        sideband_rabi: p.sideband_rabi(0).abs(),
        phi,
        fidelity,
        scan,
        evaluations,
    })
}

/// Wraps to `(−π, π]`.
pub fn wrap_phase(x: f64) -> f64 {
    let y = x.rem_euclid(2.0 * PI);
    if y > PI {
        y - 2.0 * PI
    } else {
        y
    }
}

/// Maximizes a unimodal `f` on `[a, b]` to relative tolerance `rel_tol`.
pub fn golden_section_max(f: &mut impl FnMut(f64) -> Result<f64>, mut a: f64, mut b: f64, rel_tol: f64) -> Result<f64> {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let mut fc = f(c)?;
    let mut fd = f(d)?;
    while (b - a).abs() > rel_tol * 0.5 * (a.abs() + b.abs()) {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d)?;
        }
    }
    Ok(0.5 * (a + b))
}

/// Pure amplitude vector of `|↓↓⟩ ⊗ |n⟩`.
pub fn ground_spins(cutoff: FockCutoff, n: usize) -> Result<CompositeState> {
    CompositeState::product_pure(cutoff, &spin_basis(Spin::Down, Spin::Down), n)
}

/// Overlap `tr(ρ_a ρ_b)` of two reduced motional states.
pub fn motional_overlap(a: &CompositeState, b: &CompositeState) -> f64 {
    let ma = a.motional_density();
    let mb = b.motional_density();
    ma.matmul(&mb).trace().re
}

/// Generic single-segment runner used by the `f32` aliases and tests.
pub fn run_drive_unitary<T: Real>(
    hamiltonian: &GateHamiltonian<T>,
    model: HamiltonianModel,
    drive: DriveSnapshot<T>,
    psi: &mut [C<T>],
    t0: T,
    t1: T,
    cfg: &IntegratorConfig<T>,
) -> Result<PropagationReport> {
    let gate = DrivenGate {
        hamiltonian,
        model,
        drive,
        carrier_mult: T::one(),
    };
    let mut ws = Workspace::new(psi.len());
    evolve_pure(&gate, cfg, &mut ws, psi, t0, t1)
}
