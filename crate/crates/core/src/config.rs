//! Run configuration: one sectioned TOML document covering every knob,
//! with `key=value` overrides and parameter sweeps.

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::error::{Error, Result};
use crate::grid::PhaseGrid;
use crate::model::{self, CircuitParams, WireParams};
use crate::protocol::ProtocolConfig;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PotentialSection {
    /// Flux bias `φ_e` (rad).
    pub phi_e: f64,
}

impl Default for PotentialSection {
    fn default() -> Self {
        Self { phi_e: 2.0 * PI }
    }
}

/// Which Hamiltonian the spectrum command diagonalizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectrumModel {
    #[default]
    Even,
    Odd,
    Spinor,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectrumSection {
    /// Number of eigenpairs (per parity sector for the spinor model).
    pub k: usize,
    pub phi_e: f64,
    pub model: SpectrumModel,
    /// Also write the eigenvectors.
    pub wavefunctions: bool,
}

impl Default for SpectrumSection {
    fn default() -> Self {
        Self {
            k: 4,
            phi_e: 2.0 * PI,
            model: SpectrumModel::Even,
            wavefunctions: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DynamicsSection {
    /// Time step (ns).
    pub dt: f64,
}

impl Default for DynamicsSection {
    fn default() -> Self {
        Self { dt: 1e-3 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    #[default]
    Linear,
    Log,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepRange {
    pub start: f64,
    pub stop: f64,
    pub count: usize,
    #[serde(default)]
    pub scale: Scale,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepTarget {
    /// Lowest even-doublet splitting (GHz) at `spectrum.phi_e`.
    Splitting,
    /// Double-well minima separation (rad) at `potential.phi_e`.
    Separation,
    /// Fitted protocol visibility.
    Visibility,
}

impl SweepTarget {
    pub fn column(self) -> &'static str {
        match self {
            SweepTarget::Splitting => "splitting_GHz",
            SweepTarget::Separation => "separation_rad",
            SweepTarget::Visibility => "visibility",
        }
    }
}

/// One parameter varied over a list or a range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    /// Dotted path such as `circuit.e_l`.
    pub parameter: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub range: Option<SweepRange>,
    pub target: SweepTarget,
}

impl SweepSpec {
    pub fn points(&self) -> Result<Vec<f64>> {
        match (&self.values, &self.range) {
            (Some(v), None) => {
                if v.is_empty() {
                    return Err(Error::config("sweep.values", "must not be empty"));
                }
                Ok(v.clone())
            }
            (None, Some(r)) => r.points(),
            _ => Err(Error::config("sweep", "give exactly one of `values` or `range`")),
        }
    }
}

impl SweepRange {
    pub fn points(&self) -> Result<Vec<f64>> {
        if self.count == 0 {
            return Err(Error::config("sweep.range.count", "must be at least 1"));
        }
        if !(self.start.is_finite() && self.stop.is_finite()) {
            return Err(Error::config("sweep.range", "endpoints must be finite"));
        }
        if self.count == 1 {
            return Ok(vec![self.start]);
        }
        let last = (self.count - 1) as f64;
        match self.scale {
            Scale::Linear => Ok((0..self.count)
                .map(|i| self.start + (self.stop - self.start) * i as f64 / last)
                .collect()),
            Scale::Log => {
                if !(self.start > 0.0 && self.stop > 0.0) {
                    return Err(Error::config("sweep.range", "log ranges need positive endpoints"));
                }
                let (a, b) = (self.start.ln(), self.stop.ln());
                Ok((0..self.count)
                    .map(|i| (a + (b - a) * i as f64 / last).exp())
                    .collect())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub circuit: CircuitParams,
    pub wire: WireParams,
    pub grid: PhaseGrid,
    pub potential: PotentialSection,
    pub spectrum: SpectrumSection,
    pub dynamics: DynamicsSection,
    pub protocol: ProtocolConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSpec>,
}

impl RunConfig {
    /// Parse a document and apply `key=value` overrides.
    pub fn from_toml(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::config("config", e.message().to_string()))?;
        for o in overrides {
            let (key, value) = parse_override(o)?;
            set_path(&mut table, &key, value)?;
        }
        Self::from_table(table)
    }

    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p)
                .map_err(|e| Error::config("--config", format!("{}: {e}", p.display())))?,
            None => String::new(),
        };
        Self::from_toml(&text, overrides)
    }

    pub fn from_table(table: Table) -> Result<Self> {
        let cfg: RunConfig = Value::Table(table.clone()).try_into().map_err(|e: toml::de::Error| {
            let msg = e.message().to_string();
            let key = offending_key(&msg)
                .map(|leaf| locate(&table, &leaf, "").unwrap_or(leaf))
                .unwrap_or_else(|| "config".into());
            Error::config(key, msg)
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_table(&self) -> Table {
        match Value::try_from(self).expect("config serializes") {
            Value::Table(t) => t,
            _ => unreachable!("config serializes to a table"),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.circuit
            .validate()
            .map_err(|e| Error::config("circuit", e.to_string()))?;
        self.wire
            .validate()
            .map_err(|e| Error::config("wire", e.to_string()))?;
        if self.wire.derive_epsilon && !model::is_topological(self.wire.b, self.circuit.delta, self.wire.mu) {
            return Err(Error::config(
                "wire.b",
                format!(
                    "B = {} does not exceed sqrt(delta^2 + mu^2); the wire hosts no Majorana modes",
                    self.wire.b
                ),
            ));
        }
        self.grid
            .validate()
            .map_err(|e| Error::config("grid", e.to_string()))?;
        if self.spectrum.k < 2 {
            return Err(Error::config("spectrum.k", "must be at least 2"));
        }
        let guard = 0.1 / self.circuit().max_energy_scale();
        if !(self.dynamics.dt > 0.0 && self.dynamics.dt <= guard) {
            return Err(Error::config("dynamics.dt", format!("must lie in (0, {guard:.3e}] ns")));
        }
        self.protocol_config().validate()?;
        if let Some(s) = &self.sweep {
            s.points()?;
        }
        Ok(())
    }

    /// Circuit parameters with `ε` taken from the wire when requested.
    pub fn circuit(&self) -> CircuitParams {
        let mut p = self.circuit;
        if self.wire.derive_epsilon {
            p.epsilon = model::majorana_epsilon(&self.wire);
        }
        p
    }

    pub fn protocol_config(&self) -> ProtocolConfig {
        ProtocolConfig {
            circuit: self.circuit(),
            grid: self.grid,
            dt: self.dynamics.dt,
            ..self.protocol.clone()
        }
    }

    /// Copy with the dotted parameter `path` set to `value`.
    pub fn with_value(&self, path: &str, value: f64) -> Result<Self> {
        let mut t = self.to_table();
        let v = if is_integer_key(path) {
            if value.fract() != 0.0 || value < 0.0 {
                return Err(Error::config(path, format!("needs a nonnegative integer, got {value}")));
            }
            Value::Integer(value as i64)
        } else {
            Value::Float(value)
        };
        set_path(&mut t, path, v)?;
        Self::from_table(t)
    }
}

/// `key=value` with the value read as a TOML literal, or as a bare string
/// when it does not parse.
pub fn parse_override(s: &str) -> Result<(String, Value)> {
    let (key, raw) = s
        .split_once('=')
        .ok_or_else(|| Error::config(s, "override must look like key=value"))?;
    let key = key.trim().to_string();
    let raw = raw.trim();
    let value = format!("v = {raw}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()));
    let value = match value {
        Value::Integer(i) if !is_integer_key(&key) => Value::Float(i as f64),
        v => v,
    };
    Ok((key, value))
}

fn is_integer_key(path: &str) -> bool {
    let defaults = RunConfig::default().to_table();
    matches!(lookup(&defaults, path), Some(Value::Integer(_)))
}

fn lookup<'a>(t: &'a Table, path: &str) -> Option<&'a Value> {
    let mut parts = path.split('.');
    let mut cur = t.get(parts.next()?)?;
    for p in parts {
        cur = cur.as_table()?.get(p)?;
    }
    Some(cur)
}

fn set_path(t: &mut Table, path: &str, value: Value) -> Result<()> {
    let parts: Vec<&str> = path.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::config(path, "malformed key"));
    }
    let mut cur = t;
    for p in &parts[..parts.len() - 1] {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| Value::Table(Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Error::config(path, format!("`{p}` is not a section")))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

/// Dotted path of the first key named `leaf`, depth first.
fn locate(table: &Table, leaf: &str, prefix: &str) -> Option<String> {
    for (k, v) in table {
        let path = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        if k == leaf {
            return Some(path);
        }
        if let Value::Table(t) = v {
            if let Some(found) = locate(t, leaf, &path) {
                return Some(found);
            }
        }
    }
    None
}

fn offending_key(msg: &str) -> Option<String> {
    let start = msg.find('`')? + 1;
    let len = msg[start..].find('`')?;
    Some(msg[start..start + len].to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::JunctionMode;
    use crate::protocol::Readout;

    #[test]
    fn empty_document_gives_defaults() {
        let cfg = RunConfig::from_toml("", &[]).unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.circuit.e_c, 3.0);
        assert_eq!(cfg.circuit.e_l, 1.0);
        assert_eq!(cfg.circuit.e_m, 25.0);
        assert_eq!(cfg.circuit.delta, 200.0);
        assert_eq!(cfg.circuit.epsilon, 0.025);
        assert_eq!(cfg.protocol.poisoning_rate, 1e-4);
        assert_eq!(cfg.grid.n, 4096);
    }

    #[test]
    fn round_trips_through_toml() {
        let cfg = RunConfig::default();
        let text = toml::to_string(&cfg).unwrap();
        assert_eq!(RunConfig::from_toml(&text, &[]).unwrap(), cfg);
    }

    #[test]
    fn unknown_keys_are_named() {
        let err = RunConfig::from_toml("[circuit]\ne_x = 1.0\n", &[]).unwrap_err();
        match err {
            Error::Config { key, .. } => assert_eq!(key, "circuit.e_x"),
            e => panic!("unexpected {e}"),
        }
        assert!(RunConfig::from_toml("[nope]\na = 1\n", &[]).is_err());
    }

    #[test]
    fn overrides_apply_with_types() {
        let cfg = RunConfig::from_toml(
            "[circuit]\ne_l = 2.0\n",
            &[
                "circuit.e_m=30".into(),
                "grid.n=2048".into(),
                "circuit.junction_mode=trivial_tunneling".into(),
                "protocol.readout=barrier".into(),
                "protocol.hold_times=[0, 10, 20]".into(),
            ],
        )
        .unwrap();
        assert_eq!(cfg.circuit.e_l, 2.0);
        assert_eq!(cfg.circuit.e_m, 30.0);
        assert_eq!(cfg.grid.n, 2048);
        assert_eq!(cfg.circuit.junction_mode, JunctionMode::TrivialTunneling);
        assert_eq!(cfg.protocol.readout, Readout::Barrier);
        assert_eq!(cfg.protocol.hold_times, vec![0.0, 10.0, 20.0]);
        assert!(RunConfig::from_toml("", &["circuit.e_c".into()]).is_err());
    }

    #[test]
    fn semantic_errors_name_section() {
        match RunConfig::from_toml("", &["circuit.e_c=-1".into()]).unwrap_err() {
            Error::Config { key, message } => {
                assert_eq!(key, "circuit");
                assert!(message.contains("e_c"));
            }
            e => panic!("unexpected {e}"),
        }
        match RunConfig::from_toml("", &["spectrum.k=1".into()]).unwrap_err() {
            Error::Config { key, .. } => assert_eq!(key, "spectrum.k"),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn sweep_ranges() {
        let r = SweepRange { start: 1e-4, stop: 1.0, count: 5, scale: Scale::Log };
        let p = r.points().unwrap();
        assert_eq!(p.len(), 5);
        assert!((p[0] - 1e-4).abs() < 1e-18 && (p[4] - 1.0).abs() < 1e-12);
        assert!((p[1] / p[0] - 10.0).abs() < 1e-9);
        let r = SweepRange { start: 0.0, stop: 1.0, count: 3, scale: Scale::Log };
        assert!(r.points().is_err());
        let r = SweepRange { start: 0.0, stop: 1.0, count: 0, scale: Scale::Linear };
        assert!(r.points().is_err());
        let r = SweepRange { start: 2.0, stop: 5.0, count: 1, scale: Scale::Linear };
        assert_eq!(r.points().unwrap(), vec![2.0]);
    }

    #[test]
    fn with_value_keeps_integer_fields() {
        let cfg = RunConfig::default();
        assert_eq!(cfg.with_value("grid.n", 2048.0).unwrap().grid.n, 2048);
        assert!(cfg.with_value("grid.n", 2048.5).is_err());
        assert_eq!(cfg.with_value("circuit.e_l", 0.5).unwrap().circuit.e_l, 0.5);
    }

    #[test]
    fn wire_derived_epsilon() {
        let cfg = RunConfig::from_toml("[wire]\nderive_epsilon = true\n", &[]).unwrap();
        let eps = cfg.circuit().epsilon;
        assert!((eps - 100.0 * (-2.0f64 / 0.2413).exp()).abs() < 1e-15);
        assert!(RunConfig::from_toml("[wire]\nderive_epsilon = true\nb = 150.0\n", &[]).is_err());
    }
}
