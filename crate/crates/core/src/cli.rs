//! Command-line front end.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numeric, calibration or
//! data error, 4 I/O error.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{self, BufWriter, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde::Serialize;

use crate::config::{self, ExperimentConfig, LoadedConfig, Summary};
use crate::error::{Error, Result};
use crate::experiments::chsh::{bob_phase_for, chsh_run};
use crate::experiments::fringe::{uniform_phases, wrap_phase, FringeScan};
use crate::experiments::{
    calibrate_phase, config_settings, run_chsh, run_visibility_scan, write_chsh_csv, ConfigurationId, ScanMode,
    SettingsQuad,
};
use crate::montecarlo::records::{Channel, CSV_HEADER};
use crate::montecarlo::{extract_coincidences, stream_run};
use crate::qstate::{
    correlation_tensor, horodecki_max, local_phase_average, phi_plus, white_noise_mix, BlochSetting, CorrelationTensor,
    TwoQubitState, Visibility,
};

#[derive(Debug, Parser)]
#[command(
    name = "timebin",
    version,
    about = "Time-bin entanglement and CHSH experiment simulator"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Configuration file; built-in defaults are used for anything it omits.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Root seed of every random stream.
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Override one configuration value, e.g. `--set channel.loss_db=7.3`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Subcommand, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    /// Exact CHSH values of the configured state for the four configurations.
    Analytic,
    /// Monte Carlo CHSH measurement of every configured configuration.
    Chsh,
    /// Monte Carlo fringe scans in both scan modes.
    Visibility,
    /// Phase calibration of Bob's analyzer for every configured configuration.
    Calibrate,
    /// Raw TDC record stream of one setting pair.
    Events,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Analytic => "analytic",
            Command::Chsh => "chsh",
            Command::Visibility => "visibility",
            Command::Calibrate => "calibrate",
            Command::Events => "events",
        }
    }
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) => 2,
        Error::Io(_) => 4,
        Error::Domain(_)
        | Error::DegenerateSettings(_)
        | Error::Numeric(_)
        | Error::InsufficientData(_)
        | Error::Calibration { .. } => 3,
    }
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let stdout = io::stdout();
    match run(&cli, &mut stdout.lock()) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

/// Resolves the configuration: file, then `--set`, then `--seed` and `--out`.
pub fn load_config(cli: &Cli) -> Result<LoadedConfig> {
    let mut overrides = cli.overrides.clone();
    if let Some(seed) = cli.seed {
        if seed > i64::MAX as u64 {
            return Err(Error::config(format!("--seed must be at most {}", i64::MAX)));
        }
        overrides.push(format!("seed={seed}"));
    }
    if let Some(out) = &cli.out {
        let quoted = toml::Value::String(out.to_string_lossy().into_owned()).to_string();
        overrides.push(format!("output.dir={quoted}"));
    }
    config::load(cli.config.as_deref(), &overrides)
}

pub fn run<W: Write>(cli: &Cli, out: &mut W) -> Result<()> {
    let started = Instant::now();
    let loaded = load_config(cli)?;
    let cfg = &loaded.config;
    let dir = PathBuf::from(&cfg.output.dir);
    fs::create_dir_all(&dir)?;

    let result = match cli.command {
        Command::Analytic => cmd_analytic(cfg, &dir),
        Command::Chsh => cmd_chsh(cfg, &dir),
        Command::Visibility => cmd_visibility(cfg, &dir),
        Command::Calibrate => cmd_calibrate(cfg, &dir),
        Command::Events => cmd_events(cfg, &dir),
    };
    let (summary, mut outputs) = result.map_err(|e| match e {
        Error::Config(msg) => Error::Config(loaded.anchor(&msg)),
        other => other,
    })?;

    write_atomic(&dir.join("summary.txt"), summary.as_str().as_bytes())?;
    write_atomic(&dir.join("config.toml"), cfg.canonical().as_bytes())?;
    outputs.push("summary.txt".into());
    outputs.push("config.toml".into());
    out.write_all(summary.as_str().as_bytes())?;

    let manifest = RunManifest {
        command: cli.command.name().into(),
        scenario: cfg.scenario.clone(),
        config_hash: cfg.hash(),
        seed: cfg.seed as u64,
        version: env!("CARGO_PKG_VERSION").into(),
        wall_clock_s: started.elapsed().as_secs_f64(),
        outputs,
    };
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Numeric(e.to_string()))?;
    write_atomic(&dir.join("manifest.json"), format!("{json}\n").as_bytes())?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub scenario: String,
    pub config_hash: String,
    pub seed: u64,
    pub version: String,
    pub wall_clock_s: f64,
    pub outputs: Vec<String>,
}

fn tmp_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".tmp");
    path.with_file_name(name)
}

/// Writes through a temporary file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let tmp = tmp_path(path);
    {
        let mut f = File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)
}

fn fmt_vec(s: &BlochSetting) -> String {
    let v = s.vector();
    format!("({:.6}, {:.6}, {:.6})", v.x, v.y, v.z)
}

type CommandOutput = Result<(Summary, Vec<String>)>;

/// The state the simulator emits, with the interferometer phase jitter
/// averaged in.
pub fn effective_state(cfg: &ExperimentConfig) -> Result<TwoQubitState> {
    let mixed = white_noise_mix(&phi_plus(), Visibility::new(cfg.state.visibility)?);
    Ok(local_phase_average(&mixed, cfg.noise.jitter_rad))
}

fn cmd_analytic(cfg: &ExperimentConfig, _dir: &Path) -> CommandOutput {
    let state = effective_state(cfg)?;
    let tensor = correlation_tensor(&state);
    let mut summary = Summary::default();
    summary.put("scenario", &cfg.scenario);
    summary.put("state_visibility", cfg.state.visibility);
    summary.put("phase_jitter_rad", cfg.noise.jitter_rad);
    summary.put("horodecki_bound", format!("{:.6}", horodecki_max(&tensor)));
    for id in ConfigurationId::ALL {
        let quad = config_settings(id, &CorrelationTensor::ideal())?;
        let s = quad.chsh(&state)?;
        let key = format!("config_{id}");
        summary.put(&format!("{key}.S"), format!("{s:.6}"));
        summary.put(&format!("{key}.violation"), if s > 2.0 { "yes" } else { "no" });
        for (name, setting) in [("a1", quad.a1), ("a2", quad.a2), ("b1", quad.b1), ("b2", quad.b2)] {
            summary.put(&format!("{key}.{name}"), fmt_vec(&setting));
        }
    }
    Ok((summary, Vec::new()))
}

fn cmd_chsh(cfg: &ExperimentConfig, dir: &Path) -> CommandOutput {
    let ctx = cfg.context()?;
    let opts = cfg.chsh_options();
    let tensor = CorrelationTensor::ideal();
    let analytic = effective_state(cfg)?;
    let mut results = Vec::new();
    let mut summary = Summary::default();
    summary.put("scenario", &cfg.scenario);
    summary.put("duration_per_config_s", cfg.chsh.duration_s);
    for id in cfg.configurations()? {
        let r = run_chsh(&ctx, id, &tensor, &opts)?;
        let key = format!("config_{id}");
        summary.put(&format!("{key}.S"), format!("{:.6}", r.s.s));
        summary.put(&format!("{key}.sigma_S"), format!("{:.6}", r.s.sigma));
        summary.put(&format!("{key}.significance"), format!("{:.3}", r.s.significance));
        summary.put(
            &format!("{key}.S_analytic"),
            format!("{:.6}", config_settings(id, &tensor)?.chsh(&analytic)?),
        );
        summary.put(&format!("{key}.bob_phase"), format!("{:.6}", r.bob_phase));
        summary.put(
            &format!("{key}.phase_error"),
            format!("{:.6}", wrap_phase(r.bob_phase + cfg.alice.phase)),
        );
        if let Some(c) = &r.calibration {
            summary.put(&format!("{key}.calibration_iterations"), c.iterations);
        }
        let total: u64 = r.estimates.iter().map(|e| e.counts.total()).sum();
        summary.put(&format!("{key}.coincidences"), total);
        results.push(r);
    }
    let mut csv = Vec::new();
    write_chsh_csv(&mut csv, &results)?;
    write_atomic(&dir.join("chsh.csv"), &csv)?;
    Ok((summary, vec!["chsh.csv".into()]))
}

fn cmd_visibility(cfg: &ExperimentConfig, dir: &Path) -> CommandOutput {
    let ctx = cfg.context()?;
    let phases = uniform_phases(cfg.visibility.points as usize);
    let weighting = cfg.fit_weighting()?;
    let mut summary = Summary::default();
    summary.put("scenario", &cfg.scenario);
    summary.put("integration_per_point_s", cfg.visibility.integration_s);
    let mut outputs = Vec::new();
    for mode in [ScanMode::BobEquatorial, ScanMode::AliceXz] {
        let scan: FringeScan = run_visibility_scan(
            &ctx,
            mode,
            &phases,
            cfg.visibility.integration_s,
            cfg.bob.phase,
            weighting,
        )?;
        let name = format!("visibility_{}.csv", mode.name());
        let mut csv = Vec::new();
        scan.write_csv(&mut csv)?;
        write_atomic(&dir.join(&name), &csv)?;
        outputs.push(name);
        let key = mode.name();
        summary.put(&format!("{key}.visibility"), format!("{:.6}", scan.visibility));
        summary.put(&format!("{key}.phase_offset"), format!("{:.6}", scan.phase_offset));
        summary.put(&format!("{key}.residual"), format!("{:.6}", scan.residual));
        for (label, fit) in ["pp", "pm", "mp", "mm"].iter().zip(&scan.fits) {
            summary.put(&format!("{key}.visibility_{label}"), format!("{:.6}", fit.visibility));
        }
    }
    Ok((summary, outputs))
}

fn cmd_calibrate(cfg: &ExperimentConfig, dir: &Path) -> CommandOutput {
    let ctx = cfg.context()?;
    let opts = cfg.calibration_options();
    let tensor = CorrelationTensor::ideal();
    let mut summary = Summary::default();
    summary.put("scenario", &cfg.scenario);
    let mut csv = String::from("config,i,j,bob_phase,iterations,E,target_E,phase_error\n");
    for id in cfg.configurations()? {
        let quad = config_settings(id, &tensor)?;
        let c = calibrate_phase(&ctx, &quad, &tensor, cfg.bob.phase, &opts, id.get() as u64)?;
        let err = wrap_phase(c.bob_phase + cfg.alice.phase);
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            id, c.pair.0, c.pair.1, c.bob_phase, c.iterations, c.measured_e, c.target_e, err
        ));
        let key = format!("config_{id}");
        summary.put(&format!("{key}.bob_phase"), format!("{:.6}", c.bob_phase));
        summary.put(&format!("{key}.iterations"), c.iterations);
        summary.put(&format!("{key}.E"), format!("{:.6}", c.measured_e));
        summary.put(&format!("{key}.target_E"), format!("{:.6}", c.target_e));
        summary.put(&format!("{key}.phase_error"), format!("{:.6}", err));
    }
    write_atomic(&dir.join("calibration.csv"), csv.as_bytes())?;
    Ok((summary, vec!["calibration.csv".into()]))
}

fn cmd_events(cfg: &ExperimentConfig, dir: &Path) -> CommandOutput {
    let ctx = cfg.context()?;
    let id = ConfigurationId::new(cfg.events.config as u8)?;
    let (i, j) = (cfg.events.i as usize, cfg.events.j as usize);
    let tensor = CorrelationTensor::ideal();
    let quad: SettingsQuad = config_settings(id, &tensor)?;
    let (bob_phase, _) = bob_phase_for(&ctx, id, &quad, &tensor, &cfg.chsh_options())?;
    let (a, b) = quad.pair(i, j);
    let (alice, bob) = ctx.analyzers(&a, &b, bob_phase);
    let duration = cfg.events_duration_s();
    let window = ctx.window(&alice, &bob);

    let csv_path = dir.join("events.csv");
    let bin_path = dir.join("events.bin");
    let mut csv = BufWriter::new(File::create(tmp_path(&csv_path))?);
    let mut bin = BufWriter::new(File::create(tmp_path(&bin_path))?);
    writeln!(csv, "{CSV_HEADER}")?;
    bin.write_all(&0u64.to_le_bytes())?;
    let mut n_records = 0u64;
    let mut counts = crate::montecarlo::CoincidenceCounts::default();
    let mut per_channel = [0u64; 6];
    for chunk in stream_run(&ctx.setup, &alice, &bob, duration, chsh_run(id, i, j))? {
        for r in &chunk {
            writeln!(csv, "{},{}", r.channel, r.timestamp_ns)?;
            bin.write_all(&[r.channel.tag()])?;
            bin.write_all(&r.timestamp_ns.to_le_bytes())?;
            per_channel[r.channel.tag() as usize] += 1;
        }
        n_records += chunk.len() as u64;
        counts += extract_coincidences(&chunk, &window)?;
    }
    csv.flush()?;
    let mut bin = bin.into_inner().map_err(|e| e.into_error())?;
    bin.seek(SeekFrom::Start(0))?;
    bin.write_all(&n_records.to_le_bytes())?;
    bin.sync_all()?;
    csv.get_ref().sync_all()?;
    drop(csv);
    fs::rename(tmp_path(&csv_path), &csv_path)?;
    fs::rename(tmp_path(&bin_path), &bin_path)?;

    let mut summary = Summary::default();
    summary.put("scenario", &cfg.scenario);
    summary.put("config", id);
    summary.put("i", i);
    summary.put("j", j);
    summary.put("duration_s", duration);
    summary.put("bob_phase", format!("{bob_phase:.6}"));
    summary.put("records", n_records);
    for ch in Channel::ALL {
        summary.put(&format!("records.{}", ch.name()), per_channel[ch.tag() as usize]);
    }
    summary.put("n_pp", counts.n_pp);
    summary.put("n_pm", counts.n_pm);
    summary.put("n_mp", counts.n_mp);
    summary.put("n_mm", counts.n_mm);
    Ok((summary, vec!["events.csv".into(), "events.bin".into()]))
}
