//! The five experiments. Each writes its artifacts into `out_dir` and returns
//! the paths plus a one-paragraph summary for the terminal.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use dressed_gate::dynamics::with_workers;
use dressed_gate::hamiltonian::GateHamiltonian;
use dressed_gate::linalg::DenseMatrix;
use dressed_gate::measurement::{
    bell_fidelity, default_phase_grid, fit_poisson_mixture, fmt_f64, parity, parity_scan, populations_from_spin_density,
    simulate_histogram, Fidelity, ParityScan, PopulationProbs,
};
use dressed_gate::noise::{
    apply_spam, error_budget_report, fast_term_error_scan, run_noisy, AnalysisBank, BudgetConfig, NoiseModel, RunOptions,
};
use dressed_gate::sequence::{analysis_pulse, calibrate_sideband_amplitude, CalibrationResult};
use dressed_gate::space::{FockCutoff, GateParams};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::config::{Command, Mode, RunConfig, SCHEMA_VERSION};
use crate::error::{CliError, Context};

/// Largest cutoff used for the amplitude calibration. It starts from the
/// motional ground state, which stays well inside it.
const CALIBRATION_N_MAX: usize = 8;

#[derive(Clone, Debug)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    pub summary: String,
}

/// Runs `command` with an already resolved config.
pub fn run(command: Command, cfg: &RunConfig) -> Result<Outcome, CliError> {
    std::fs::create_dir_all(&cfg.out_dir).map_err(|e| io_err(&cfg.out_dir, e))?;
    with_workers(cfg.workers, || match command {
        Command::Calibrate => calibrate(cfg),
        Command::Evolve => evolve(cfg),
        Command::Parity => parity_cmd(cfg),
        Command::Budget => budget(cfg),
        Command::Fastscan => fastscan(cfg),
    })
}

fn io_err(path: &Path, source: std::io::Error) -> CliError {
    CliError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn write(cfg: &RunConfig, name: &str, body: &str) -> Result<PathBuf, CliError> {
    let path = cfg.out_dir.join(name);
    std::fs::write(&path, body).map_err(|e| io_err(&path, e))?;
    Ok(path)
}

fn schema(kind: &str) -> String {
    format!("dressed-gate/{kind}/{SCHEMA_VERSION}")
}

fn config_json(cfg: &RunConfig) -> serde_json::Value {
    serde_json::to_value(cfg).expect("config serializes")
}

/// CSV preamble: schema line and the full config as one JSON line.
fn csv_header(cfg: &RunConfig, kind: &str) -> String {
    format!("# schema: {}\n# config: {}\n", schema(kind), config_json(cfg))
}

fn json_doc(cfg: &RunConfig, kind: &str, body: impl Serialize) -> String {
    let mut doc = json!({
        "schema_version": schema(kind),
        "config": config_json(cfg),
    });
    let extra = serde_json::to_value(body).expect("artifact serializes");
    if let (Some(d), serde_json::Value::Object(e)) = (doc.as_object_mut(), extra) {
        d.extend(e);
    }
    let mut s = serde_json::to_string_pretty(&doc).expect("json");
    s.push('\n');
    s
}

/// Independent, reproducible seed for readout stream `k`.
fn readout_seed(seed: u64, k: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ 0x6A09_E667_F3BC_C909u64.wrapping_add(k.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn cutoff(n_max: usize, key: &str) -> Result<FockCutoff, CliError> {
    FockCutoff::new(n_max).map_err(|e| CliError::config(key, e.to_string()))
}

/// Nominal parameters from the configured physics, calibrated, at cutoff `n_max`.
pub fn calibrated(cfg: &RunConfig, n_max: usize) -> Result<(GateParams, CalibrationResult), CliError> {
    let inputs = cfg.physical_inputs();
    let cut = cutoff(n_max, "physics.n_max")?;
    let base = cfg.variant.params_from(&inputs, cut).context(|| "physics".into())?;
    let cal_cut = cutoff(n_max.min(CALIBRATION_N_MAX), "physics.n_max")?;
    let cal = calibrate_sideband_amplitude(cfg.variant, &base.with_cutoff(cal_cut), &cfg.integrator())
        .context(|| "sideband amplitude calibration".into())?;
    Ok((cal.apply(&base), cal))
}

fn run_options(cfg: &RunConfig) -> RunOptions {
    RunOptions {
        model: cfg.physics.model,
        shots: cfg.mc_shots,
        seed: cfg.seed,
        // the pool is already installed by `run`
        workers: 0,
        stretch_n_bar: cfg.physics.stretch_n_bar,
        stratify: true,
        integrator: cfg.integrator(),
    }
}

/// Readout of one population vector: exact passes through, sampled goes via a
/// histogram and the mixture fit.
fn readout(cfg: &RunConfig, p: &PopulationProbs, stream: u64) -> Result<(PopulationProbs, [f64; 3]), CliError> {
    match cfg.mode {
        Mode::Exact => Ok((*p, [0.0; 3])),
        Mode::Sampled => {
            let det = cfg.detection_model();
            let hist =
                simulate_histogram(p, &det, cfg.readout_shots, readout_seed(cfg.seed, stream)).context(|| "histogram".into())?;
            let fit = fit_poisson_mixture(&hist, cfg.fit_mode()).context(|| "mixture fit".into())?;
            Ok((fit.probs, fit.probs_stderr))
        }
    }
}

#[derive(Serialize)]
struct CalibrationArtifact<'a> {
    calibration: &'a CalibrationResult,
    params: &'a GateParams,
}

fn calibrate(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let (params, cal) = calibrated(cfg, cfg.physics.n_max)?;
    let path = write(
        cfg,
        "calibration.json",
        &json_doc(
            cfg,
            "calibration",
            CalibrationArtifact {
                calibration: &cal,
                params: &params,
            },
        ),
    )?;
    let summary = format!(
        "{} calibration: Ω₀ = {:.6e} rad/s, |Ω_j| = {:.6e} rad/s, φ = {:.6} rad, ideal fidelity {:.6}",
        cfg.variant, cal.omega_0, cal.sideband_rabi, cal.phi, cal.fidelity
    );
    Ok(Outcome {
        files: vec![path],
        summary,
    })
}

struct EvolveRow {
    t_us: f64,
    p: PopulationProbs,
    se: [f64; 3],
}

fn evolve(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let (params, _) = calibrated(cfg, cfg.physics.n_max)?;
    let noise = cfg.noise_model()?;
    let ham = GateHamiltonian::new(params).context(|| "hamiltonian".into())?;
    let opts = run_options(cfg);
    let t_max = cfg.evolve.t_max_us.unwrap_or(0.0);
    let n = cfg.evolve.points;
    let rows: Vec<EvolveRow> = (0..n)
        .into_par_iter()
        .map(|k| {
            let t_us = t_max * k as f64 / (n - 1) as f64;
            let seq = cfg
                .variant
                .scan_sequence(&params, t_us * 1e-6)
                .context(|| format!("evolve point {k}"))?;
            // same noise seed at every duration, so the curve is smooth
            let out = run_noisy(&ham, &seq, &noise, &opts).context(|| format!("evolve t = {t_us} µs"))?;
            let p = apply_spam(&out.populations(), noise.spam_error).context(|| "spam".into())?;
            let (p, se) = match cfg.mode {
                Mode::Exact if out.shots > 1 => {
                    let comp = |i: usize| {
                        out.shot_stats(|s| {
                            apply_spam(&populations_from_spin_density(s), noise.spam_error)
                                .map(|q| q.as_array()[i])
                                .unwrap_or(f64::NAN)
                        })
                        .1
                    };
                    (p, [comp(0), comp(1), comp(2)])
                }
                _ => readout(cfg, &p, k as u64)?,
            };
            Ok(EvolveRow { t_us, p, se })
        })
        .collect::<Result<_, CliError>>()?;

    let mut csv = csv_header(cfg, "populations");
    csv.push_str("t_us,P_dd,P_uu,P_anti,P_dd_stderr,P_uu_stderr,P_anti_stderr\n");
    for r in &rows {
        // P0 counts ↑↑, P2 counts ↓↓
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{}",
            fmt_f64(r.t_us),
            fmt_f64(r.p.p2),
            fmt_f64(r.p.p0),
            fmt_f64(r.p.p1),
            fmt_f64(r.se[2]),
            fmt_f64(r.se[0]),
            fmt_f64(r.se[1])
        );
    }
    let path = write(cfg, "populations.csv", &csv)?;
    let last = rows.last().expect("at least two points");
    let summary = format!(
        "{} evolution, {} points to {:.1} µs; final (P_dd, P_uu, P_anti) = ({:.4}, {:.4}, {:.4})",
        cfg.variant, n, t_max, last.p.p2, last.p.p0, last.p.p1
    );
    Ok(Outcome {
        files: vec![path],
        summary,
    })
}

#[derive(Serialize)]
struct ParityArtifact<'a> {
    mode: Mode,
    populations: PopulationProbs,
    populations_stderr: [f64; 3],
    fit: Vec<dressed_gate::measurement::FitRecord>,
    residual_rms: f64,
    fidelity: Fidelity,
    /// `⟨Ψ|ρ|Ψ⟩` of the simulated state, before SPAM.
    exact_bell_fidelity: f64,
    noisy_analysis: bool,
    scan: &'a ParityScan,
}

fn parity_cmd(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let (params, _) = calibrated(cfg, cfg.physics.n_max)?;
    let noise = cfg.noise_model()?;
    let ham = GateHamiltonian::new(params).context(|| "hamiltonian".into())?;
    let opts = run_options(cfg);
    let gate = cfg.variant.gate_sequence(&params).context(|| "gate sequence".into())?;
    let out = run_noisy(&ham, &gate, &noise, &opts).context(|| "gate run".into())?;
    let phis = default_phase_grid(cfg.parity.phase_points);

    let rotated: Vec<DenseMatrix> = if cfg.noise.noisy_analysis {
        phis.par_iter()
            .map(|&phi| {
                let pulse = analysis_pulse(phi, &params).context(|| "analysis pulse".into())?;
                // gate and pulse as one sequence, so the pulse sees the same noise realization
                let o = run_noisy(&ham, &gate.then(&pulse), &noise, &opts).context(|| format!("analysis at φ = {phi}"))?;
                Ok(o.spin_density)
            })
            .collect::<Result<_, CliError>>()?
    } else {
        let bank = AnalysisBank::new(&params, &phis, &cfg.integrator()).context(|| "analysis pulses".into())?;
        (0..phis.len()).map(|k| bank.rotate(k, &out.spin_density)).collect()
    };

    let spam = |s: &DenseMatrix| apply_spam(&populations_from_spin_density(s), noise.spam_error).context(|| "spam".into());
    let (pops, pops_se) = readout(cfg, &spam(&out.spin_density)?, 0)?;
    let points: Vec<(f64, f64)> = rotated
        .par_iter()
        .enumerate()
        .map(|(k, rho)| {
            let (p, se) = readout(cfg, &spam(rho)?, k as u64 + 1)?;
            // Π = 1 − 2·P1
            Ok((parity(&p), 2.0 * se[1]))
        })
        .collect::<Result<_, CliError>>()?;
    let scan = parity_scan(&phis, |k, _| Ok(points[k])).context(|| "parity fit".into())?;
    let fidelity = bell_fidelity(pops.p0 + pops.p2, pops_se[1], scan.fit.a, scan.fit.stderr[0]);

    let mut csv = csv_header(cfg, "parity");
    csv.push_str("phi_rad,parity,stderr\n");
    for p in &scan.points {
        let _ = writeln!(csv, "{},{},{}", fmt_f64(p.phi), fmt_f64(p.value), fmt_f64(p.stderr));
    }
    let csv_path = write(cfg, "parity.csv", &csv)?;
    let art = ParityArtifact {
        mode: cfg.mode,
        populations: pops,
        populations_stderr: pops_se,
        fit: scan.fit.records(),
        residual_rms: scan.fit.residual_rms,
        fidelity,
        exact_bell_fidelity: out.bell_fidelity,
        noisy_analysis: cfg.noise.noisy_analysis,
        scan: &scan,
    };
    let json_path = write(cfg, "parity_fit.json", &json_doc(cfg, "parity_fit", art))?;
    let summary = format!(
        "{} parity: P0+P2 = {:.4}, A = {:.4} ± {:.4}, F = {:.4} ± {:.4}",
        cfg.variant,
        pops.p0 + pops.p2,
        scan.fit.a,
        scan.fit.stderr[0],
        fidelity.value,
        fidelity.stderr
    );
    Ok(Outcome {
        files: vec![csv_path, json_path],
        summary,
    })
}

fn budget(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let (params, _) = calibrated(cfg, cfg.budget.n_max)?;
    let noise: NoiseModel = cfg.noise_model()?;
    let bc = BudgetConfig {
        run: run_options(cfg),
        probe_shots: cfg.budget.probe_shots,
        phase_points: cfg.parity.phase_points,
    };
    let report = error_budget_report(&params, &noise, cfg.variant, &bc).context(|| "error budget".into())?;
    let table = report.to_table();
    let json_path = write(cfg, "budget.json", &json_doc(cfg, "budget", json!({ "budget": report })))?;
    let txt_path = write(cfg, "budget.txt", &table)?;
    Ok(Outcome {
        files: vec![json_path, txt_path],
        summary: table,
    })
}

fn fastscan(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let cut = cutoff(cfg.physics.n_max, "physics.n_max")?;
    let integ = cfg.integrator();
    let rows = cfg
        .fastscan
        .ratios
        .par_iter()
        .map(|&r| {
            fast_term_error_scan(&[r], cfg.variant, cut, &integ)
                .map(|mut v| v.remove(0))
                .context(|| format!("fast-term scan at Ω_C/δ = {r}"))
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let mut csv = csv_header(cfg, "fastscan");
    csv.push_str("ratio,infidelity,secular_infidelity,omega_c_rad_s,omega_0_rad_s\n");
    let mut summary = format!("{} fast-term scan:", cfg.variant);
    for r in &rows {
        let _ = writeln!(
            csv,
            "{},{},{},{},{}",
            fmt_f64(r.ratio),
            fmt_f64(r.infidelity),
            fmt_f64(r.secular_infidelity),
            fmt_f64(r.omega_c),
            fmt_f64(r.omega_0)
        );
        let _ = write!(summary, "\n  Ω_C/δ = {:>6.2}: 1 − F = {:.3e}", r.ratio, r.infidelity);
    }
    let path = write(cfg, "fastscan.csv", &csv)?;
    Ok(Outcome {
        files: vec![path],
        summary,
    })
}
