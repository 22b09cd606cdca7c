use std::process::Command as Process;

use dressed_gate::sequence::Variant;
use dressed_gate_cli::config::{Command, Mode, NoisePreset, Overrides, RunConfig};
use dressed_gate_cli::{run, CliError};

fn bin() -> Process {
    Process::new(env!("CARGO_BIN_EXE_dressed-gate"))
}

#[test]
fn defaults_resolve_per_variant_and_command() {
    let laser = RunConfig::default().resolve(Command::Evolve).unwrap();
    assert_eq!(laser.physics.carrier_pi_time_us, Some(5.0));
    assert!((laser.physics.detuning_khz.unwrap() - 1e3 / 105.0).abs() < 1e-9);
    assert_eq!(laser.noise.preset, Some(NoisePreset::Overlay));
    // twice the single-loop gate
    assert!((laser.evolve.t_max_us.unwrap() - 210.0).abs() < 1e-9);

    let mw = RunConfig {
        variant: Variant::Microwave,
        ..RunConfig::default()
    }
    .resolve(Command::Budget)
    .unwrap();
    assert_eq!(mw.physics.carrier_pi_time_us, Some(11.0));
    assert_eq!(mw.noise.preset, Some(NoisePreset::Default));
    assert!(mw.noise.com_heating_rate_per_s.unwrap() > 0.0);
}

#[test]
fn file_values_override_presets_and_flags_override_files() {
    let mut cfg = RunConfig::from_toml(
        r#"
        variant = "microwave"
        seed = 5
        [noise]
        preset = "default"
        spam_error = 0.0
        "#,
    )
    .unwrap();
    cfg.apply(&Overrides {
        seed: Some(9),
        mode: Some(Mode::Sampled),
        shots: Some(800),
        ..Overrides::default()
    });
    let cfg = cfg.resolve(Command::Parity).unwrap();
    assert_eq!(cfg.seed, 9);
    assert_eq!(cfg.mode, Mode::Sampled);
    assert_eq!(cfg.readout_shots, 800);
    let noise = cfg.noise_model().unwrap();
    assert_eq!(noise.spam_error, 0.0);
    assert_eq!(noise.se_rate_per_ion, dressed_gate::noise::MICROWAVE_SE_RATE);
}

fn config_key(text: &str) -> String {
    let err = RunConfig::from_toml(text)
        .and_then(|c| c.resolve(Command::Parity))
        .unwrap_err();
    assert_eq!(err.exit_code(), 2);
    match err {
        CliError::Config { key, .. } => key,
        other => panic!("expected a config error, got {other}"),
    }
}

#[test]
fn errors_name_the_key_path() {
    assert_eq!(config_key("[physics]\nn_max = -1\n"), "physics.n_max");
    assert_eq!(config_key("[physics]\nn_max = 0\n"), "physics.n_max");
    assert_eq!(config_key("[noise]\nspam_error = 1.5\n"), "noise.spam_error");
    assert_eq!(config_key("[noise]\npointing_sigma = -0.1\n"), "noise.pointing_sigma");
    assert_eq!(config_key("[fastscan]\nratios = [5.0, -1.0]\n"), "fastscan.ratios[1]");
    assert_eq!(config_key("variant = \"optical\"\n"), "variant");
    assert_eq!(config_key("readout_shots = 10\n"), "readout_shots");
    assert!(config_key("[physics]\nunknown_key = 1\n").starts_with("physics"));
}

#[test]
fn binary_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[integrator]\nrel_tol = 0.0\n").unwrap();
    let out = bin().arg("evolve").arg("--config").arg(&bad).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("integrator.rel_tol"));

    // clap usage errors use 2 as well
    let out = bin().arg("--no-such-flag").output().unwrap();
    assert_eq!(out.status.code(), Some(2));

    // an integrator that cannot finish is a numerical failure
    let slow = dir.path().join("slow.toml");
    std::fs::write(
        &slow,
        "[physics]\nn_max = 2\n[integrator]\nrel_tol = 1e-14\nabs_tol = 1e-300\nmax_step_us = 1e-6\n",
    )
    .unwrap();
    let out = bin()
        .args(["calibrate", "--out"])
        .arg(dir.path().join("o"))
        .arg("--config")
        .arg(&slow)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn experiment_can_come_from_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(
        &cfg,
        "experiment = \"evolve\"\nvariant = \"laser\"\n[physics]\nn_max = 6\nmodel = \"secular\"\n[noise]\npreset = \"none\"\n[evolve]\npoints = 3\n",
    )
    .unwrap();
    let out = bin().arg("--config").arg(&cfg).arg("--out").arg(dir.path()).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("populations.csv").exists());
}

#[test]
fn ideal_evolution_reaches_the_bell_populations() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = RunConfig {
        out_dir: dir.path().to_path_buf(),
        ..RunConfig::default()
    };
    cfg.physics.model = dressed_gate::hamiltonian::HamiltonianModel::Secular;
    cfg.noise.preset = Some(NoisePreset::None);
    cfg.evolve.t_max_us = Some(105.0);
    cfg.evolve.points = 3;
    let cfg = cfg.resolve(Command::Evolve).unwrap();
    run(Command::Evolve, &cfg).unwrap();
    let text = std::fs::read_to_string(dir.path().join("populations.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("# schema: dressed-gate/populations/1"));
    let cfg_line = lines.next().unwrap();
    let embedded: RunConfig = serde_json::from_str(cfg_line.strip_prefix("# config: ").unwrap()).unwrap();
    assert_eq!(embedded.seed, cfg.seed);
    assert_eq!(
        lines.next(),
        Some("t_us,P_dd,P_uu,P_anti,P_dd_stderr,P_uu_stderr,P_anti_stderr")
    );
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|x| x.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 3);
    assert_eq!(&rows[0][..4], &[0.0, 1.0, 0.0, 0.0]);
    let last = &rows[2];
    assert!((last[0] - 105.0).abs() < 1e-9);
    for (got, want) in last[1..4].iter().zip([0.5, 0.5, 0.0]) {
        assert!((got - want).abs() < 1e-3, "{last:?}");
    }
}

#[test]
fn ideal_parity_has_unit_contrast() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = RunConfig {
        variant: Variant::Microwave,
        out_dir: dir.path().to_path_buf(),
        ..RunConfig::default()
    };
    cfg.physics.model = dressed_gate::hamiltonian::HamiltonianModel::Secular;
    cfg.physics.n_max = 8;
    cfg.noise.preset = Some(NoisePreset::None);
    let cfg = cfg.resolve(Command::Parity).unwrap();
    run(Command::Parity, &cfg).unwrap();
    let doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("parity_fit.json")).unwrap()).unwrap();
    assert_eq!(doc["schema_version"], "dressed-gate/parity_fit/1");
    let a = doc["fit"][0]["estimate"].as_f64().unwrap();
    assert_eq!(doc["fit"][0]["parameter"], "A");
    assert!((a - 1.0).abs() < 1e-4, "{a}");
    let csv = std::fs::read_to_string(dir.path().join("parity.csv")).unwrap();
    assert_eq!(csv.lines().filter(|l| !l.starts_with('#')).count(), 1 + 24);
}

#[test]
fn sampled_parity_agrees_with_exact() {
    let a = |mode: Mode| {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = RunConfig {
            variant: Variant::Laser,
            out_dir: dir.path().to_path_buf(),
            mode,
            ..RunConfig::default()
        };
        cfg.physics.n_max = 6;
        cfg.noise.preset = Some(NoisePreset::Overlay);
        let cfg = cfg.resolve(Command::Parity).unwrap();
        run(Command::Parity, &cfg).unwrap();
        let doc: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join("parity_fit.json")).unwrap()).unwrap();
        (
            doc["fit"][0]["estimate"].as_f64().unwrap(),
            doc["fit"][0]["stderr"].as_f64().unwrap(),
        )
    };
    let (exact, _) = a(Mode::Exact);
    let (sampled, se) = a(Mode::Sampled);
    assert!(se > 0.0);
    assert!((sampled - exact).abs() < 3.0 * se, "exact {exact}, sampled {sampled} ± {se}");
}

#[test]
fn fastscan_writes_one_row_per_ratio() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = RunConfig {
        out_dir: dir.path().to_path_buf(),
        ..RunConfig::default()
    };
    // the calibration needs the loop to fit, n_max = 4 does not
    cfg.physics.n_max = 8;
    cfg.fastscan.ratios = vec![10.0, 20.0];
    let cfg = cfg.resolve(Command::Fastscan).unwrap();
    run(Command::Fastscan, &cfg).unwrap();
    let csv = std::fs::read_to_string(dir.path().join("fastscan.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows[0], "ratio,infidelity,secular_infidelity,omega_c_rad_s,omega_0_rad_s");
    assert_eq!(rows.len(), 3);
    let inf: Vec<f64> = rows[1..]
        .iter()
        .map(|r| r.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert!(inf[1] < inf[0]);
}

#[test]
fn shipped_configs_are_valid() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            let cfg = RunConfig::load(&path).unwrap();
            let command = cfg.experiment.unwrap_or(Command::Parity);
            cfg.resolve(command).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            seen += 1;
        }
    }
    assert!(seen >= 3);
}
