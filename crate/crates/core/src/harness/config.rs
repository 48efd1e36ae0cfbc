//! Flat `key = value` experiment configuration.
//!
//! ```text
//! # comments start with '#'
//! system = "(2^3 x 2^6 x 2^12, 1x1)"
//! power_db = 0, 10, 20, 30
//! t = 0.5
//! realizations = 100
//! variants = baseline, final
//! n_init = 1, 5
//! ```
//!
//! Lists are comma separated. String values may be quoted. Unknown keys are
//! rejected.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::pipeline::{PipelineOptions, VariantId};
use crate::topology::{db_to_linear, parse_system_spec, SystemSpec};

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    /// Topology, streams and noise; powers and timesharing are set per cell.
    pub system: SystemSpec,
    /// Transmitter power sweep in dB.
    pub power_db: Vec<f64>,
    /// Relay power relative to the transmitter power, in dB.
    pub relay_power_offset_db: f64,
    pub timesharing: Vec<f64>,
    pub realizations: usize,
    pub seed: u64,
    pub variants: Vec<VariantId>,
    /// Best-of-N values to report.
    pub n_init: Vec<usize>,
    /// Worker threads; results do not depend on it.
    pub parallel: usize,
    pub out: PathBuf,
    pub options: PipelineOptions,
    /// Write one trace file per realization and variant.
    pub traces: bool,
}

impl ExperimentConfig {
    /// Defaults around `system`.
    pub fn new(system: SystemSpec) -> Self {
        ExperimentConfig {
            system,
            power_db: (0..=6).map(|i| 5.0 * i as f64).collect(),
            relay_power_offset_db: 0.0,
            timesharing: vec![0.5],
            realizations: 100,
            seed: 0,
            variants: VariantId::ALL.to_vec(),
            n_init: vec![1],
            parallel: 1,
            out: PathBuf::from("results"),
            options: PipelineOptions::default(),
            traces: false,
        }
    }

    /// The system at transmitter power `power_db` and timesharing `t`.
    pub fn system_at(&self, power_db: f64, t: f64) -> SystemSpec {
        self.system
            .clone()
            .with_powers(db_to_linear(power_db), db_to_linear(power_db + self.relay_power_offset_db))
            .with_timesharing(t)
    }

    pub fn max_n_init(&self) -> usize {
        self.n_init.iter().copied().max().unwrap_or(1)
    }

    /// Every violated constraint, or `Ok` if there are none.
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.realizations == 0 {
            problems.push("realizations must be at least 1".to_string());
        }
        if self.power_db.is_empty() {
            problems.push("power_db must not be empty".to_string());
        }
        if self.power_db.iter().any(|p| !p.is_finite()) {
            problems.push("power_db values must be finite".to_string());
        }
        if !self.relay_power_offset_db.is_finite() {
            problems.push("relay_power_offset_db must be finite".to_string());
        }
        if self.timesharing.is_empty() {
            problems.push("t must not be empty".to_string());
        }
        for &t in &self.timesharing {
            if !(t > 0.0 && t < 1.0) {
                problems.push(format!("t = {t} is outside (0, 1)"));
            }
        }
        if self.variants.is_empty() {
            problems.push("variants must not be empty".to_string());
        }
        if self.n_init.is_empty() {
            problems.push("n_init must not be empty".to_string());
        }
        if self.n_init.contains(&0) {
            problems.push("n_init values must be at least 1".to_string());
        }
        if self.parallel == 0 {
            problems.push("parallel must be at least 1".to_string());
        }
        if self.options.phase1.max_iter == 0 || self.options.phase2.max_iter == 0 {
            problems.push("max_iter_phase1 and max_iter_phase2 must be at least 1".to_string());
        }
        for (name, tol) in [("tol_phase1", self.options.phase1.tol), ("tol_phase2", self.options.phase2.tol)] {
            if !(tol > 0.0 && tol.is_finite()) {
                problems.push(format!("{name} must be positive"));
            }
        }
        if let Err(e) = self.system.validate() {
            problems.push(e.to_string());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::ConfigInvalid(problems))
        }
    }

    /// Canonical text form; parsing it gives back an equal config.
    pub fn to_text(&self) -> String {
        let join = |v: Vec<String>| v.join(", ");
        let mut s = String::new();
        let _ = writeln!(s, "system = \"{}\"", self.system);
        let _ = writeln!(s, "power_db = {}", join(self.power_db.iter().map(|p| format!("{p:?}")).collect()));
        let _ = writeln!(s, "relay_power_offset_db = {:?}", self.relay_power_offset_db);
        let _ = writeln!(s, "t = {}", join(self.timesharing.iter().map(|t| format!("{t:?}")).collect()));
        let _ = writeln!(s, "realizations = {}", self.realizations);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "variants = {}", join(self.variants.iter().map(|v| v.to_string()).collect()));
        let _ = writeln!(s, "n_init = {}", join(self.n_init.iter().map(|n| n.to_string()).collect()));
        let _ = writeln!(s, "parallel = {}", self.parallel);
        let _ = writeln!(s, "out = \"{}\"", self.out.display());
        let _ = writeln!(s, "max_iter_phase1 = {}", self.options.phase1.max_iter);
        let _ = writeln!(s, "max_iter_phase2 = {}", self.options.phase2.max_iter);
        let _ = writeln!(s, "max_iter_phase3 = {}", self.options.phase3_max_iter);
        let _ = writeln!(s, "tol_phase1 = {:?}", self.options.phase1.tol);
        let _ = writeln!(s, "tol_phase2 = {:?}", self.options.phase2.tol);
        let _ = writeln!(s, "noise_relay = {:?}", self.system.relay_noise);
        let _ = writeln!(s, "noise_receiver = {:?}", self.system.receiver_noise);
        let _ = writeln!(s, "traces = {}", self.traces);
        s
    }
}

fn unquote(value: &str) -> &str {
    let v = value.trim();
    v.strip_prefix('"')
        .and_then(|s| s.strip_suffix('"'))
        .unwrap_or(v)
}

fn parse_scalar<T: std::str::FromStr>(value: &str, line: usize, key: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    unquote(value).parse::<T>().map_err(|e| Error::ConfigParse {
        line,
        reason: format!("{key}: cannot parse {value:?}: {e}"),
    })
}

fn parse_list<T: std::str::FromStr>(value: &str, line: usize, key: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    unquote(value)
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|item| parse_scalar(item, line, key))
        .collect()
}

/// Parses and validates configuration text.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let mut entries: Vec<(usize, String, String)> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.trim();
        if content.is_empty() || content.starts_with('#') {
            continue;
        }
        let (key, value) = content.split_once('=').ok_or_else(|| Error::ConfigParse {
            line,
            reason: format!("expected `key = value`, found {content:?}"),
        })?;
        let key = key.trim().to_string();
        if entries.iter().any(|(_, k, _)| *k == key) {
            return Err(Error::ConfigParse {
                line,
                reason: format!("duplicate key `{key}`"),
            });
        }
        entries.push((line, key, value.trim().to_string()));
    }

    let (system_line, system_text) = entries
        .iter()
        .find(|(_, k, _)| k == "system")
        .map(|(l, _, v)| (*l, v.clone()))
        .ok_or(Error::ConfigParse {
            line: 0,
            reason: "missing required key `system`".into(),
        })?;
    let system = parse_system_spec(unquote(&system_text)).map_err(|e| Error::ConfigParse {
        line: system_line,
        reason: e.to_string(),
    })?;
    let mut config = ExperimentConfig::new(system);

    for (line, key, value) in &entries {
        let (line, v) = (*line, value.as_str());
        match key.as_str() {
            "system" => {}
            "power_db" => config.power_db = parse_list(v, line, key)?,
            "relay_power_offset_db" => config.relay_power_offset_db = parse_scalar(v, line, key)?,
            "t" => config.timesharing = parse_list(v, line, key)?,
            "realizations" => config.realizations = parse_scalar(v, line, key)?,
            "seed" => config.seed = parse_scalar(v, line, key)?,
            "variants" => config.variants = parse_list(v, line, key)?,
            "n_init" => config.n_init = parse_list(v, line, key)?,
            "parallel" => config.parallel = parse_scalar(v, line, key)?,
            "out" => config.out = PathBuf::from(unquote(v)),
            "max_iter_phase1" => config.options.phase1.max_iter = parse_scalar(v, line, key)?,
            "max_iter_phase2" => config.options.phase2.max_iter = parse_scalar(v, line, key)?,
            "max_iter_phase3" => config.options.phase3_max_iter = parse_scalar(v, line, key)?,
            "tol_phase1" => config.options.phase1.tol = parse_scalar(v, line, key)?,
            "tol_phase2" => config.options.phase2.tol = parse_scalar(v, line, key)?,
            "noise_relay" => config.system.relay_noise = parse_scalar(v, line, key)?,
            "noise_receiver" => config.system.receiver_noise = parse_scalar(v, line, key)?,
            "traces" => config.traces = parse_scalar(v, line, key)?,
            other => {
                return Err(Error::ConfigParse {
                    line,
                    reason: format!("unknown key `{other}`"),
                })
            }
        }
    }
    config.validate()?;
    Ok(config)
}

/// Reads, parses and validates a config file.
pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text)
}
