//! Experiment configuration files.
//!
//! A configuration is a TOML-compatible key-value text file. Values are
//! resolved in three layers: built-in defaults, then the file, then
//! `section.key=value` overrides from the command line. Every key must exist
//! in the defaults and keep its type (integers are accepted for reals).
//! Errors carry the file line of the offending key when it came from a file.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use toml::{Table, Value};

use crate::error::{Error, Result};
use crate::experiments::{CalibrationOptions, ChshOptions, ConfigurationId, FitWeighting, SimContext};
use crate::montecarlo::{ChannelConfig, DetectorConfig, PhaseNoise, SimulationSetup, SourceConfig, TimingConfig};
use crate::optics::{AnalyzerConfig, DEFAULT_TAU_NS};
use crate::qstate::{phi_plus, white_noise_mix, Visibility};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceSection {
    pub rep_rate_hz: f64,
    pub pair_prob_per_pulse: f64,
}

/// Werner mixture of the maximally entangled state with the given visibility.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateSection {
    pub visibility: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalyzerSection {
    pub phase: f64,
    pub insertion_loss_db: f64,
    pub tau_ns: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorsSection {
    pub s1: DetectorConfig,
    pub s2: DetectorConfig,
    pub i1: DetectorConfig,
    pub i2: DetectorConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoincidenceSection {
    pub window_ns: f64,
    pub ready_gating: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChshSection {
    /// Total time per configuration, split evenly over the four setting pairs.
    pub duration_s: f64,
    pub configs: Vec<i64>,
    pub calibrate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VisibilitySection {
    pub points: i64,
    pub integration_s: f64,
    /// `unweighted` or `poisson`.
    pub weighting: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationSection {
    pub target_visibility: f64,
    pub tolerance: f64,
    pub max_iterations: i64,
    pub integration_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventsSection {
    /// 0 uses the per-pair duration of the CHSH run.
    pub duration_s: f64,
    pub config: i64,
    pub i: i64,
    pub j: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    /// 0 uses all available cores. Results do not depend on it.
    pub threads: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: String,
    pub seed: i64,
    pub source: SourceSection,
    pub state: StateSection,
    pub noise: PhaseNoise,
    pub channel: ChannelConfig,
    pub alice: AnalyzerSection,
    pub bob: AnalyzerSection,
    pub detectors: DetectorsSection,
    pub timing: TimingConfig,
    pub coincidence: CoincidenceSection,
    pub chsh: ChshSection,
    pub visibility: VisibilitySection,
    pub calibration: CalibrationSection,
    pub events: EventsSection,
    pub output: OutputSection,
    pub run: RunSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let analyzer = AnalyzerSection {
            phase: 0.0,
            insertion_loss_db: 0.0,
            tau_ns: DEFAULT_TAU_NS,
        };
        ExperimentConfig {
            scenario: "default".into(),
            seed: 0,
            source: SourceSection {
                rep_rate_hz: SourceConfig::default().rep_rate_hz,
                pair_prob_per_pulse: 1e-4,
            },
            state: StateSection { visibility: 1.0 },
            noise: PhaseNoise::default(),
            channel: ChannelConfig::default(),
            alice: analyzer,
            bob: analyzer,
            detectors: DetectorsSection {
                s1: DetectorConfig::silicon(),
                s2: DetectorConfig::silicon(),
                i1: DetectorConfig::ingaas(),
                i2: DetectorConfig::ingaas(),
            },
            timing: TimingConfig::default(),
            coincidence: CoincidenceSection {
                window_ns: 0.6,
                ready_gating: true,
            },
            chsh: ChshSection {
                duration_s: 160.0,
                configs: vec![1, 2, 3, 4],
                calibrate: true,
            },
            visibility: VisibilitySection {
                points: 12,
                integration_s: 10.0,
                weighting: "unweighted".into(),
            },
            calibration: CalibrationSection {
                target_visibility: 1.0,
                tolerance: 0.05,
                max_iterations: 6,
                integration_s: 10.0,
            },
            events: EventsSection {
                duration_s: 0.0,
                config: 1,
                i: 1,
                j: 1,
            },
            output: OutputSection { dir: "out".into() },
            run: RunSection { threads: 0 },
        }
    }
}

/// File line of every `section.key` (and of every `[section]` header).
#[derive(Debug, Clone, Default)]
pub struct LineIndex {
    lines: BTreeMap<String, usize>,
}

impl LineIndex {
    pub fn scan(text: &str) -> Self {
        let mut lines = BTreeMap::new();
        let mut section = String::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                section = name.trim().to_string();
                lines.entry(section.clone()).or_insert(n + 1);
            } else if let Some((key, _)) = line.split_once('=') {
                let key = key.trim().trim_matches('"');
                let path = if section.is_empty() {
                    key.to_string()
                } else {
                    format!("{section}.{key}")
                };
                lines.entry(path).or_insert(n + 1);
            }
        }
        LineIndex { lines }
    }

    pub fn line_of(&self, path: &str) -> Option<usize> {
        self.lines.get(path).copied()
    }

    /// The longest known key path mentioned in `message`.
    fn find_in(&self, message: &str) -> Option<(&str, usize)> {
        self.lines
            .iter()
            .filter(|(path, _)| path.contains('.') && message.contains(path.as_str()))
            .max_by_key(|(path, _)| path.len())
            .map(|(path, &line)| (path.as_str(), line))
    }
}

/// A resolved configuration together with where it came from.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: ExperimentConfig,
    pub source: Option<PathBuf>,
    lines: LineIndex,
}

impl LoadedConfig {
    /// Prefixes a message with `file:line` when it names a key from the file.
    pub fn anchor(&self, message: &str) -> String {
        match (&self.source, self.lines.find_in(message)) {
            (Some(file), Some((_, line))) => format!("{}:{line}: {message}", file.display()),
            _ => message.to_string(),
        }
    }
}

fn defaults_table() -> Table {
    match Value::try_from(ExperimentConfig::default()).expect("defaults serialize") {
        Value::Table(t) => t,
        _ => unreachable!("configuration serializes to a table"),
    }
}

fn type_name(v: &Value) -> &'static str {
    match v {
        Value::String(_) => "string",
        Value::Integer(_) => "integer",
        Value::Float(_) => "real",
        Value::Boolean(_) => "boolean",
        Value::Datetime(_) => "datetime",
        Value::Array(_) => "array",
        Value::Table(_) => "table",
    }
}

/// `value` converted to the type of `default`, if compatible.
fn coerce(default: &Value, value: Value) -> std::result::Result<Value, String> {
    match (default, value) {
        (Value::Float(_), Value::Integer(i)) => Ok(Value::Float(i as f64)),
        (Value::Array(d), Value::Array(items)) => {
            let proto = d.first();
            let items = items
                .into_iter()
                .map(|item| match proto {
                    Some(p) => coerce(p, item),
                    None => Ok(item),
                })
                .collect::<std::result::Result<Vec<_>, _>>()?;
            Ok(Value::Array(items))
        }
        (d, v) if std::mem::discriminant(d) == std::mem::discriminant(&v) => Ok(v),
        (d, v) => Err(format!("expected {}, found {}", type_name(d), type_name(&v))),
    }
}

/// Overlays `layer` on `base`, rejecting keys absent from `base`.
fn merge(base: &mut Table, layer: Table, prefix: &str, locate: &dyn Fn(&str) -> String) -> Result<()> {
    for (key, value) in layer {
        let path = if prefix.is_empty() {
            key.clone()
        } else {
            format!("{prefix}.{key}")
        };
        let Some(slot) = base.get_mut(&key) else {
            return Err(Error::config(format!("{}unknown key `{path}`", locate(&path))));
        };
        match (slot, value) {
            (Value::Table(b), Value::Table(l)) => merge(b, l, &path, locate)?,
            (slot, value) => {
                *slot = coerce(slot, value).map_err(|e| Error::config(format!("{}`{path}`: {e}", locate(&path))))?;
            }
        }
    }
    Ok(())
}

/// Parses the right-hand side of a `--set` override as a TOML value, falling
/// back to a bare string.
fn parse_override_value(raw: &str) -> Value {
    match format!("v = {raw}").parse::<Table>() {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => Value::String(raw.to_string()),
    }
}

fn override_table(assignment: &str) -> Result<Table> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::config(format!("override `{assignment}` must have the form section.key=value")))?;
    let path = path.trim();
    if path.is_empty() || path.split('.').any(str::is_empty) {
        return Err(Error::config(format!("override `{assignment}` has an empty key")));
    }
    let mut value = parse_override_value(raw.trim());
    for part in path.rsplit('.') {
        let mut t = Table::new();
        t.insert(part.to_string(), value);
        value = Value::Table(t);
    }
    match value {
        Value::Table(t) => Ok(t),
        _ => unreachable!(),
    }
}

/// Resolves defaults, the optional file contents and the overrides.
pub fn resolve(text: Option<(&str, &Path)>, overrides: &[String]) -> Result<LoadedConfig> {
    let mut table = defaults_table();
    let (lines, source) = match text {
        Some((text, path)) => {
            let file: Table = text.parse().map_err(|e: toml::de::Error| {
                Error::config(format!("{}: {}", path.display(), e.to_string().trim_end()))
            })?;
            let lines = LineIndex::scan(text);
            let locate = |key: &str| match lines.line_of(key) {
                Some(n) => format!("{}:{n}: ", path.display()),
                None => format!("{}: ", path.display()),
            };
            merge(&mut table, file, "", &locate)?;
            (lines, Some(path.to_path_buf()))
        }
        None => (LineIndex::default(), None),
    };
    for assignment in overrides {
        let layer = override_table(assignment)?;
        merge(&mut table, layer, "", &|_| "--set: ".to_string())?;
    }
    let config: ExperimentConfig = Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| Error::config(e.to_string().trim_end().to_string()))?;
    let loaded = LoadedConfig { config, source, lines };
    if let Err(e) = loaded.config.validate() {
        return Err(match e {
            Error::Config(msg) => Error::Config(loaded.anchor(&msg)),
            other => other,
        });
    }
    Ok(loaded)
}

pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<LoadedConfig> {
    match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)?;
            resolve(Some((&text, p)), overrides)
        }
        None => resolve(None, overrides),
    }
}

fn in_range(path: &str, v: i64, lo: i64, hi: i64) -> Result<()> {
    if (lo..=hi).contains(&v) {
        Ok(())
    } else {
        Err(Error::config(format!("{path} must lie in [{lo}, {hi}] (got {v})")))
    }
}

fn positive(path: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::config(format!("{path} must be positive (got {v})")))
    }
}

impl ExperimentConfig {
    /// Checks every precondition of every procedure the configuration can
    /// drive, before anything is simulated.
    pub fn validate(&self) -> Result<()> {
        if self.seed < 0 {
            return Err(Error::config(format!("seed must be >= 0 (got {})", self.seed)));
        }
        if !(0.0..=1.0).contains(&self.state.visibility) {
            return Err(Error::config(format!(
                "state.visibility must lie in [0, 1] (got {})",
                self.state.visibility
            )));
        }
        for (name, a) in [("alice", &self.alice), ("bob", &self.bob)] {
            if !a.phase.is_finite() {
                return Err(Error::config(format!("{name}.phase must be finite")));
            }
            positive(&format!("{name}.tau_ns"), a.tau_ns)?;
            if !(a.insertion_loss_db >= 0.0 && a.insertion_loss_db.is_finite()) {
                return Err(Error::config(format!("{name}.insertion_loss_db must be >= 0")));
            }
        }
        let w = self.coincidence.window_ns;
        positive("coincidence.window_ns", w)?;
        for (name, a) in [("alice", &self.alice), ("bob", &self.bob)] {
            if w >= a.tau_ns {
                return Err(Error::config(format!(
                    "coincidence.window_ns ({w}) must be narrower than {name}.tau_ns ({}) or the slots overlap",
                    a.tau_ns
                )));
            }
        }
        positive("chsh.duration_s", self.chsh.duration_s)?;
        if self.chsh.configs.is_empty() {
            return Err(Error::config("chsh.configs must list at least one configuration"));
        }
        for &c in &self.chsh.configs {
            in_range("chsh.configs", c, 1, 4)?;
        }
        in_range("visibility.points", self.visibility.points, 5, 100_000)?;
        positive("visibility.integration_s", self.visibility.integration_s)?;
        self.fit_weighting()?;
        in_range("calibration.max_iterations", self.calibration.max_iterations, 1, 64)?;
        self.calibration_options().validate()?;
        if !(self.events.duration_s >= 0.0 && self.events.duration_s.is_finite()) {
            return Err(Error::config("events.duration_s must be >= 0"));
        }
        in_range("events.config", self.events.config, 1, 4)?;
        in_range("events.i", self.events.i, 1, 2)?;
        in_range("events.j", self.events.j, 1, 2)?;
        if self.output.dir.trim().is_empty() {
            return Err(Error::config("output.dir must not be empty"));
        }
        in_range("run.threads", self.run.threads, 0, 4096)?;
        self.context()?;
        Ok(())
    }

    pub fn setup(&self) -> Result<SimulationSetup> {
        let state = white_noise_mix(&phi_plus(), Visibility::new(self.state.visibility)?);
        let source = SourceConfig {
            rep_rate_hz: self.source.rep_rate_hz,
            pair_prob_per_pulse: self.source.pair_prob_per_pulse,
            seed: self.seed as u64,
        };
        let mut setup = SimulationSetup::new(source, state);
        setup.channel = self.channel;
        let d = &self.detectors;
        setup.detectors = [d.s1, d.s2, d.i1, d.i2];
        setup.timing = self.timing;
        setup.noise = self.noise;
        setup.threads = if self.run.threads > 0 {
            Some(self.run.threads as usize)
        } else {
            None
        };
        Ok(setup)
    }

    pub fn analyzer(section: &AnalyzerSection) -> AnalyzerConfig {
        AnalyzerConfig {
            phase: section.phase,
            tau_ns: section.tau_ns,
            insertion_loss_db: section.insertion_loss_db,
            ..Default::default()
        }
    }

    /// The simulated laboratory; Bob's analyzer starts at the configured phase.
    pub fn context(&self) -> Result<SimContext> {
        let mut ctx = SimContext::new(
            self.setup()?,
            Self::analyzer(&self.alice),
            Self::analyzer(&self.bob),
            self.coincidence.window_ns,
        )?;
        ctx.ready_gating = self.coincidence.ready_gating;
        Ok(ctx)
    }

    pub fn calibration_options(&self) -> CalibrationOptions {
        CalibrationOptions {
            target_visibility: self.calibration.target_visibility,
            tolerance: self.calibration.tolerance,
            max_iterations: self.calibration.max_iterations.max(0) as usize,
            integration_s: self.calibration.integration_s,
        }
    }

    pub fn chsh_options(&self) -> ChshOptions {
        ChshOptions {
            duration_s: self.chsh.duration_s,
            calibration: self.chsh.calibrate.then(|| self.calibration_options()),
            start_bob_phase: self.bob.phase,
        }
    }

    pub fn configurations(&self) -> Result<Vec<ConfigurationId>> {
        self.chsh
            .configs
            .iter()
            .map(|&c| ConfigurationId::new(c as u8))
            .collect()
    }

    pub fn fit_weighting(&self) -> Result<FitWeighting> {
        match self.visibility.weighting.as_str() {
            "unweighted" => Ok(FitWeighting::Unweighted),
            "poisson" => Ok(FitWeighting::Poisson),
            other => Err(Error::config(format!(
                "visibility.weighting must be `unweighted` or `poisson` (got `{other}`)"
            ))),
        }
    }

    pub fn events_duration_s(&self) -> f64 {
        if self.events.duration_s > 0.0 {
            self.events.duration_s
        } else {
            self.chsh.duration_s / 4.0
        }
    }

    /// The resolved configuration in canonical TOML form.
    pub fn canonical(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    /// SHA-256 of [`canonical`](Self::canonical), hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical().as_bytes()))
    }
}

/// `key = value` lines for a summary document.
#[derive(Debug, Default, Clone)]
pub struct Summary {
    text: String,
}

impl Summary {
    pub fn put(&mut self, key: &str, value: impl std::fmt::Display) {
        writeln!(self.text, "{key} = {value}").expect("write to string");
    }

    pub fn as_str(&self) -> &str {
        &self.text
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn resolve_text(text: &str, overrides: &[&str]) -> Result<LoadedConfig> {
        let o: Vec<String> = overrides.iter().map(|s| s.to_string()).collect();
        resolve(Some((text, Path::new("test.cfg"))), &o)
    }

    #[test]
    fn defaults_are_valid() {
        let loaded = resolve(None, &[]).unwrap();
        assert_eq!(loaded.config, ExperimentConfig::default());
    }

    #[test]
    fn file_and_overrides_layer() {
        let text = "seed = 5\n[channel]\nloss_db = 7\n[detectors.i1]\nefficiency = 0.2\n";
        let c = resolve_text(text, &["channel.duty_cycle=0.96", "scenario=sait"])
            .unwrap()
            .config;
        assert_eq!(c.seed, 5);
        assert_eq!(c.channel.loss_db, 7.0);
        assert_eq!(c.channel.duty_cycle, 0.96);
        assert_eq!(c.detectors.i1.efficiency, 0.2);
        assert_eq!(c.detectors.i2.efficiency, DetectorConfig::ingaas().efficiency);
        assert_eq!(c.scenario, "sait");
    }

    #[test]
    fn unknown_keys_are_rejected_with_line() {
        let text = "seed = 1\n\n[channel]\nloss_db = 1\nlos_db = 2\n";
        let err = resolve_text(text, &[]).unwrap_err().to_string();
        assert!(err.contains("test.cfg:5:") && err.contains("channel.los_db"), "{err}");
        let err = resolve_text("[chanel]\nloss_db = 1\n", &[]).unwrap_err().to_string();
        assert!(err.contains("test.cfg:1:"), "{err}");
        assert!(resolve(None, &["source.colour=3".into()]).is_err());
    }

    #[test]
    fn type_mismatch_is_reported() {
        let err = resolve_text("[coincidence]\nready_gating = 3\n", &[])
            .unwrap_err()
            .to_string();
        assert!(err.contains("test.cfg:2:") && err.contains("expected boolean"), "{err}");
    }

    #[test]
    fn semantic_errors_are_anchored() {
        let text = "[source]\nrep_rate_hz = 2e7\n\n[channel]\nduty_cycle = 1.5\n";
        let err = resolve_text(text, &[]).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        assert!(err.to_string().contains("test.cfg:5:"), "{err}");
        let err = resolve_text("[coincidence]\nwindow_ns = 1.6\n", &[])
            .unwrap_err()
            .to_string();
        assert!(err.contains("test.cfg:2:"), "{err}");
    }

    #[test]
    fn syntax_errors_are_reported() {
        let err = resolve_text("[source\nrep_rate_hz = 1\n", &[]).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        assert!(err.to_string().contains("test.cfg"));
    }

    #[test]
    fn hash_tracks_every_field() {
        let base = ExperimentConfig::default();
        let mut other = base.clone();
        assert_eq!(base.hash(), other.hash());
        other.detectors.i2.dead_time_ns += 1e-9;
        assert_ne!(base.hash(), other.hash());
        let mut other = base.clone();
        other.output.dir = "elsewhere".into();
        assert_ne!(base.hash(), other.hash());
    }

    #[test]
    fn override_values_parse_as_toml() {
        assert_eq!(parse_override_value("3"), Value::Integer(3));
        assert_eq!(
            parse_override_value("[1, 2]"),
            Value::Array(vec![Value::Integer(1), Value::Integer(2)])
        );
        assert_eq!(parse_override_value("lab"), Value::String("lab".into()));
        let c = resolve(None, &["chsh.configs=[2]".into(), "run.threads=2".into()])
            .unwrap()
            .config;
        assert_eq!(c.chsh.configs, vec![2]);
        assert_eq!(c.setup().unwrap().threads, Some(2));
    }
}
