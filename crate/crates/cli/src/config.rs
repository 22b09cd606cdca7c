//! Run configuration: a TOML file with unit-suffixed keys, then flag overrides.
//!
//! Precedence, lowest first: built-in defaults, variant defaults, noise preset,
//! file values, command-line flags.

use std::path::{Path, PathBuf};

use dressed_gate::hamiltonian::HamiltonianModel;
use dressed_gate::integrate::IntegratorConfig;
use dressed_gate::measurement::{DetectionModel, MixtureFitMode};
use dressed_gate::noise::{DebyeWaller, NoiseModel};
use dressed_gate::sequence::{PhysicalInputs, Variant};
use dressed_gate::space::FockCutoff;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Artifact schema version, bumped on any incompatible change.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Expectation values straight from ρ.
    Exact,
    /// Simulated count histograms through the mixture fit.
    Sampled,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoisePreset {
    None,
    /// Calibrated defaults of every channel.
    Default,
    /// Spontaneous emission and SPAM only (the Fig. 3 overlay for the laser).
    Overlay,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitKind {
    Frozen,
    Free,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Calibrate,
    Evolve,
    Parity,
    Budget,
    Fastscan,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Calibrate => "calibrate",
            Command::Evolve => "evolve",
            Command::Parity => "parity",
            Command::Budget => "budget",
            Command::Fastscan => "fastscan",
        }
    }

    fn default_preset(self) -> NoisePreset {
        match self {
            Command::Evolve => NoisePreset::Overlay,
            Command::Parity | Command::Budget => NoisePreset::Default,
            Command::Calibrate | Command::Fastscan => NoisePreset::None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub variant: Variant,
    pub seed: u64,
    /// Readout shots per point in sampled mode.
    pub readout_shots: usize,
    /// Monte-Carlo noise draws per run.
    pub mc_shots: usize,
    /// Worker threads, 0 for one per core. Never changes results, so it is left
    /// out of the embedded config (as is `out_dir`) to keep artifacts byte-identical.
    #[serde(skip_serializing)]
    pub workers: usize,
    pub mode: Mode,
    #[serde(skip_serializing)]
    pub out_dir: PathBuf,
    /// Experiment to run when none is given on the command line.
    pub experiment: Option<Command>,
    pub physics: PhysicsConfig,
    pub noise: NoiseConfig,
    pub detection: DetectionConfig,
    pub integrator: IntegratorSection,
    pub evolve: EvolveConfig,
    pub parity: ParityConfig,
    pub budget: BudgetSection,
    pub fastscan: FastscanConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            variant: Variant::Laser,
            seed: 0,
            readout_shots: 500,
            mc_shots: 48,
            workers: 0,
            mode: Mode::Exact,
            out_dir: PathBuf::from("out"),
            experiment: None,
            physics: PhysicsConfig::default(),
            noise: NoiseConfig::default(),
            detection: DetectionConfig::default(),
            integrator: IntegratorSection::default(),
            evolve: EvolveConfig::default(),
            parity: ParityConfig::default(),
            budget: BudgetSection::default(),
            fastscan: FastscanConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhysicsConfig {
    /// `full` keeps the fast dressed-state term; `secular` drops it (the ideal gate).
    pub model: HamiltonianModel,
    pub n_max: usize,
    /// Initial stretch-mode occupation.
    pub stretch_n_bar: f64,
    /// Defaults: 11 µs (microwave), 5 µs (laser).
    pub carrier_pi_time_us: Option<f64>,
    /// `δ/2π`. Defaults: 8 kHz (microwave), 9.524 kHz (laser).
    pub detuning_khz: Option<f64>,
    pub stretch_frequency_mhz: f64,
    pub raman_wavelength_nm: f64,
}

impl Default for PhysicsConfig {
    fn default() -> Self {
        Self {
            model: HamiltonianModel::Full,
            n_max: FockCutoff::DEFAULT_N_MAX,
            stretch_n_bar: 0.0,
            carrier_pi_time_us: None,
            detuning_khz: None,
            stretch_frequency_mhz: dressed_gate::sequence::STRETCH_FREQUENCY_HZ * 1e-6,
            raman_wavelength_nm: dressed_gate::sequence::RAMAN_WAVELENGTH_M * 1e9,
        }
    }
}

/// Every field left out comes from the preset.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    pub preset: Option<NoisePreset>,
    /// Stretch-mode heating, quanta/s.
    pub heating_rate_per_s: Option<f64>,
    pub se_rate_per_ion_per_s: Option<f64>,
    pub se_raman_fraction: Option<f64>,
    pub carrier_slow_sigma: Option<f64>,
    pub carrier_fast_sigma: Option<f64>,
    pub carrier_fast_tau_us: Option<f64>,
    pub sideband_intensity_sigma: Option<f64>,
    pub pointing_sigma: Option<f64>,
    pub spam_error: Option<f64>,
    pub n_bar_com: Option<f64>,
    pub eta_com: Option<f64>,
    /// COM heating, quanta/s.
    pub com_heating_rate_per_s: Option<f64>,
    /// Run the analysis pulse under the same noise as the gate.
    pub noisy_analysis: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectionConfig {
    pub bright_counts: f64,
    pub background_counts: f64,
    pub window_us: f64,
    pub fit: FitKind,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        let d = DetectionModel::default();
        Self {
            bright_counts: d.mean_counts_per_bright_ion,
            background_counts: d.mean_background_counts,
            window_us: d.detection_window * 1e6,
            fit: FitKind::Frozen,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegratorSection {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_step_us: f64,
}

impl Default for IntegratorSection {
    fn default() -> Self {
        let c = IntegratorConfig::<f64>::default();
        Self {
            rel_tol: c.rel_tol,
            abs_tol: c.abs_tol,
            max_step_us: c.max_step * 1e6,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvolveConfig {
    /// Longest interrogation; defaults to twice the gate's sideband time.
    pub t_max_us: Option<f64>,
    pub points: usize,
}

impl Default for EvolveConfig {
    fn default() -> Self {
        Self {
            t_max_us: None,
            points: 21,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ParityConfig {
    /// Analysis phases evenly spread over `[0, 2π)`.
    pub phase_points: usize,
}

impl Default for ParityConfig {
    fn default() -> Self {
        Self { phase_points: 24 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BudgetSection {
    /// Fock cutoff of budget runs (cheaper than the physics default).
    pub n_max: usize,
    pub probe_shots: usize,
}

impl Default for BudgetSection {
    fn default() -> Self {
        Self {
            n_max: 8,
            probe_shots: 400,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FastscanConfig {
    pub ratios: Vec<f64>,
}

impl Default for FastscanConfig {
    fn default() -> Self {
        Self {
            ratios: vec![5.0, 10.0, 20.0, 40.0],
        }
    }
}

/// Command-line values that win over the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub variant: Option<Variant>,
    pub shots: Option<usize>,
    pub mode: Option<Mode>,
    pub workers: Option<usize>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let de = toml::Deserializer::parse(text)
            .map_err(|e| CliError::config("<file>", e.message().to_string() + &span_hint(text, e.span())))?;
        serde_path_to_error::deserialize(de).map_err(|e| {
            let key = e.path().to_string();
            let inner = e.into_inner();
            CliError::config(key, inner.message().to_string() + &span_hint(text, inner.span()))
        })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::config("--config", format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(v) = o.seed {
            self.seed = v;
        }
        if let Some(v) = &o.out_dir {
            self.out_dir = v.clone();
        }
        if let Some(v) = o.variant {
            self.variant = v;
        }
        if let Some(v) = o.shots {
            self.readout_shots = v;
        }
        if let Some(v) = o.mode {
            self.mode = v;
        }
        if let Some(v) = o.workers {
            self.workers = v;
        }
    }

    /// Fills every variant- and preset-dependent value, then validates, so the
    /// result is the full configuration an artifact embeds.
    pub fn resolve(mut self, command: Command) -> Result<Self, CliError> {
        let inputs = self.variant.physical_inputs();
        self.physics.carrier_pi_time_us.get_or_insert(inputs.carrier_pi_time_s * 1e6);
        self.physics.detuning_khz.get_or_insert(inputs.detuning_hz * 1e-3);
        let preset = *self.noise.preset.get_or_insert(command.default_preset());
        let base = match preset {
            NoisePreset::None => NoiseModel::none(),
            NoisePreset::Default => NoiseModel::defaults(self.variant),
            NoisePreset::Overlay => {
                let d = NoiseModel::defaults(self.variant);
                NoiseModel {
                    se_rate_per_ion: d.se_rate_per_ion,
                    spam_error: d.spam_error,
                    ..NoiseModel::none()
                }
            }
        };
        let n = &mut self.noise;
        n.heating_rate_per_s.get_or_insert(base.heating_rate);
        n.se_rate_per_ion_per_s.get_or_insert(base.se_rate_per_ion);
        n.se_raman_fraction.get_or_insert(base.se_raman_fraction);
        n.carrier_slow_sigma.get_or_insert(base.carrier_slow_sigma);
        n.carrier_fast_sigma.get_or_insert(base.carrier_fast_sigma);
        n.carrier_fast_tau_us.get_or_insert(base.carrier_fast_tau * 1e6);
        n.sideband_intensity_sigma.get_or_insert(base.sideband_intensity_sigma);
        n.pointing_sigma.get_or_insert(base.pointing_sigma);
        n.spam_error.get_or_insert(base.spam_error);
        n.n_bar_com.get_or_insert(base.debye_waller.n_bar_com);
        n.eta_com.get_or_insert(base.debye_waller.eta_com);
        n.com_heating_rate_per_s.get_or_insert(base.debye_waller.com_heating_rate);
        if self.evolve.t_max_us.is_none() {
            // one loop lasts 1/(δ/2π)
            let loop_us = 1e3 / self.physics.detuning_khz.unwrap_or(f64::NAN);
            self.evolve.t_max_us = Some(2.0 * f64::from(self.variant.loops()) * loop_us);
        }
        self.validate()?;
        Ok(self)
    }

    /// Checks every field; errors name the key path.
    pub fn validate(&self) -> Result<(), CliError> {
        let positive = |key: &str, v: f64| -> Result<(), CliError> {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(CliError::config(key, format!("must be positive and finite, got {v}")))
            }
        };
        let non_negative = |key: &str, v: f64| -> Result<(), CliError> {
            if v >= 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(CliError::config(key, format!("must be finite and ≥ 0, got {v}")))
            }
        };
        let probability = |key: &str, v: f64| -> Result<(), CliError> {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(CliError::config(key, format!("must lie in [0, 1], got {v}")))
            }
        };
        let resolved = |key: &str, v: Option<f64>| v.ok_or_else(|| CliError::config(key, "unresolved"));

        if self.mc_shots == 0 {
            return Err(CliError::config("mc_shots", "must be at least 1"));
        }
        if self.readout_shots < 100 {
            return Err(CliError::config("readout_shots", "the mixture fit needs at least 100 shots"));
        }
        let p = &self.physics;
        FockCutoff::new(p.n_max).map_err(|e| CliError::config("physics.n_max", e.to_string()))?;
        non_negative("physics.stretch_n_bar", p.stretch_n_bar)?;
        positive(
            "physics.carrier_pi_time_us",
            resolved("physics.carrier_pi_time_us", p.carrier_pi_time_us)?,
        )?;
        positive("physics.detuning_khz", resolved("physics.detuning_khz", p.detuning_khz)?)?;
        positive("physics.stretch_frequency_mhz", p.stretch_frequency_mhz)?;
        positive("physics.raman_wavelength_nm", p.raman_wavelength_nm)?;

        let n = &self.noise;
        for (key, v) in [
            ("noise.heating_rate_per_s", n.heating_rate_per_s),
            ("noise.se_rate_per_ion_per_s", n.se_rate_per_ion_per_s),
            ("noise.carrier_slow_sigma", n.carrier_slow_sigma),
            ("noise.carrier_fast_sigma", n.carrier_fast_sigma),
            ("noise.sideband_intensity_sigma", n.sideband_intensity_sigma),
            ("noise.pointing_sigma", n.pointing_sigma),
            ("noise.n_bar_com", n.n_bar_com),
            ("noise.eta_com", n.eta_com),
            ("noise.com_heating_rate_per_s", n.com_heating_rate_per_s),
        ] {
            non_negative(key, resolved(key, v)?)?;
        }
        probability(
            "noise.se_raman_fraction",
            resolved("noise.se_raman_fraction", n.se_raman_fraction)?,
        )?;
        probability("noise.spam_error", resolved("noise.spam_error", n.spam_error)?)?;
        positive(
            "noise.carrier_fast_tau_us",
            resolved("noise.carrier_fast_tau_us", n.carrier_fast_tau_us)?,
        )?;

        let d = &self.detection;
        non_negative("detection.bright_counts", d.bright_counts)?;
        non_negative("detection.background_counts", d.background_counts)?;
        if !(d.bright_counts > 0.0) {
            return Err(CliError::config("detection.bright_counts", "must be positive"));
        }
        positive("detection.window_us", d.window_us)?;

        let i = &self.integrator;
        for (key, v) in [("integrator.rel_tol", i.rel_tol), ("integrator.abs_tol", i.abs_tol)] {
            if !(v > 0.0 && v <= 1e-2) {
                return Err(CliError::config(key, format!("must lie in (0, 1e-2], got {v}")));
            }
        }
        positive("integrator.max_step_us", i.max_step_us)?;

        if let Some(t) = self.evolve.t_max_us {
            non_negative("evolve.t_max_us", t)?;
        }
        if self.evolve.points < 2 {
            return Err(CliError::config("evolve.points", "need at least 2 points"));
        }
        if self.parity.phase_points < 8 {
            return Err(CliError::config("parity.phase_points", "need at least 8 phases"));
        }
        FockCutoff::new(self.budget.n_max).map_err(|e| CliError::config("budget.n_max", e.to_string()))?;
        if self.budget.probe_shots == 0 {
            return Err(CliError::config("budget.probe_shots", "must be at least 1"));
        }
        if self.fastscan.ratios.is_empty() {
            return Err(CliError::config("fastscan.ratios", "must not be empty"));
        }
        for (k, r) in self.fastscan.ratios.iter().enumerate() {
            positive(&format!("fastscan.ratios[{k}]"), *r)?;
        }
        self.noise_model()?
            .validate()
            .map_err(|e| CliError::config("noise", e.to_string()))?;
        Ok(())
    }

    pub fn physical_inputs(&self) -> PhysicalInputs {
        PhysicalInputs {
            carrier_pi_time_s: self.physics.carrier_pi_time_us.unwrap_or(f64::NAN) * 1e-6,
            detuning_hz: self.physics.detuning_khz.unwrap_or(f64::NAN) * 1e3,
            stretch_frequency_hz: self.physics.stretch_frequency_mhz * 1e6,
            raman_wavelength_m: self.physics.raman_wavelength_nm * 1e-9,
        }
    }

    /// Noise model in SI units; needs a resolved config.
    pub fn noise_model(&self) -> Result<NoiseModel, CliError> {
        let n = &self.noise;
        let get = |key: &str, v: Option<f64>| v.ok_or_else(|| CliError::config(key, "unresolved"));
        Ok(NoiseModel {
            heating_rate: get("noise.heating_rate_per_s", n.heating_rate_per_s)?,
            se_rate_per_ion: get("noise.se_rate_per_ion_per_s", n.se_rate_per_ion_per_s)?,
            se_raman_fraction: get("noise.se_raman_fraction", n.se_raman_fraction)?,
            carrier_slow_sigma: get("noise.carrier_slow_sigma", n.carrier_slow_sigma)?,
            carrier_fast_sigma: get("noise.carrier_fast_sigma", n.carrier_fast_sigma)?,
            carrier_fast_tau: get("noise.carrier_fast_tau_us", n.carrier_fast_tau_us)? * 1e-6,
            sideband_intensity_sigma: get("noise.sideband_intensity_sigma", n.sideband_intensity_sigma)?,
            pointing_sigma: get("noise.pointing_sigma", n.pointing_sigma)?,
            spam_error: get("noise.spam_error", n.spam_error)?,
            debye_waller: DebyeWaller {
                n_bar_com: get("noise.n_bar_com", n.n_bar_com)?,
                eta_com: get("noise.eta_com", n.eta_com)?,
                com_heating_rate: get("noise.com_heating_rate_per_s", n.com_heating_rate_per_s)?,
            },
        })
    }

    pub fn detection_model(&self) -> DetectionModel {
        DetectionModel {
            mean_counts_per_bright_ion: self.detection.bright_counts,
            mean_background_counts: self.detection.background_counts,
            detection_window: self.detection.window_us * 1e-6,
        }
    }

    pub fn fit_mode(&self) -> MixtureFitMode {
        let det = self.detection_model();
        match self.detection.fit {
            FitKind::Frozen => MixtureFitMode::frozen(&det),
            FitKind::Free => MixtureFitMode::free(&det),
        }
    }

    pub fn integrator(&self) -> IntegratorConfig {
        IntegratorConfig {
            rel_tol: self.integrator.rel_tol,
            abs_tol: self.integrator.abs_tol,
            max_step: self.integrator.max_step_us * 1e-6,
            ..IntegratorConfig::default()
        }
    }
}

fn span_hint(text: &str, span: Option<std::ops::Range<usize>>) -> String {
    match span {
        Some(r) => {
            let line = text[..r.start.min(text.len())].lines().count().max(1);
            format!(" (line {line})")
        }
        None => String::new(),
    }
}
