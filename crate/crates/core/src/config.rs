//! TOML run configuration, shipped presets and command-line overrides.
//!
//! A configuration is assembled from up to three layers, later ones winning:
//! a named preset, a TOML file, and `key.path=value` overrides. Tables are
//! merged key by key, so a file only needs the entries it changes.
//!
//! ```toml
//! schemes = ["feedback", "no_feedback"]
//! seed = 7
//!
//! [profile]
//! source = "ratios"          # or "probabilities" / "physics"
//! primary = 0.7
//! primary_conc = 0.14
//! sec_full = 0.6065
//! sec_full_conc = 0.182
//! delta = 0.9782
//! delta_conc = 0.8
//!
//! [sensing]
//! false_alarm = 0.1
//! missed_detection = 0.08
//!
//! [traffic]
//! lambda_p = 0.1
//! lambda_e = 0.8
//! delay_bound = 2.0
//!
//! [sweep]
//! variable = "lambda_p"
//! range = { start = 0.0, stop = 0.4, step = 0.05 }
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::error::{Error, Result};
use crate::model::{PolicyFb, PolicyNoFb, Scheme, SensingQuality, TrafficParams};
use crate::optimizer::SolverConfig;
use crate::outage::{build_profile, CrossSnr, LinkBudget, OutageProfile, PowerMode};
use crate::sim::SimSemantics;

/// Environment variable naming the directory searched for configuration files.
pub const CONFIG_DIR_ENV: &str = "EHCR_CONFIG_DIR";

/// File looked up in [`CONFIG_DIR_ENV`] when neither a preset nor a file is given.
pub const DEFAULT_CONFIG_FILE: &str = "ehcr.toml";

/// Presets reproducing the published curves.
pub const PRESETS: [(&str, &str); 5] = [
    ("fig4", include_str!("../presets/fig4.toml")),
    ("fig6", include_str!("../presets/fig6.toml")),
    ("fig7", include_str!("../presets/fig7.toml")),
    ("fig8", include_str!("../presets/fig8.toml")),
    ("delay", include_str!("../presets/delay.toml")),
];

pub fn preset_source(name: &str) -> Option<&'static str> {
    PRESETS.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
}

pub fn preset_names() -> Vec<&'static str> {
    PRESETS.iter().map(|(n, _)| *n).collect()
}

/// Where the outage profile comes from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProfileSource {
    /// The six success probabilities directly.
    Probabilities {
        primary: f64,
        primary_conc: f64,
        sec_full: f64,
        sec_sensed: f64,
        sec_full_conc: f64,
        sec_sensed_conc: f64,
    },
    /// Full-slot probabilities plus the sensing penalties `delta`, `delta_conc`.
    Ratios {
        primary: f64,
        primary_conc: f64,
        sec_full: f64,
        sec_full_conc: f64,
        delta: f64,
        delta_conc: f64,
    },
    /// Link budgets and cross-link SNRs.
    Physics {
        primary: LinkBudget,
        secondary: LinkBudget,
        #[serde(default)]
        cross: CrossSnr,
        #[serde(default)]
        power_mode: PowerMode,
    },
}

impl ProfileSource {
    pub fn build(&self) -> Result<OutageProfile> {
        match *self {
            ProfileSource::Probabilities {
                primary,
                primary_conc,
                sec_full,
                sec_sensed,
                sec_full_conc,
                sec_sensed_conc,
            } => OutageProfile::from_probabilities(
                primary,
                primary_conc,
                sec_full,
                sec_sensed,
                sec_full_conc,
                sec_sensed_conc,
            ),
            ProfileSource::Ratios {
                primary,
                primary_conc,
                sec_full,
                sec_full_conc,
                delta,
                delta_conc,
            } => OutageProfile::from_ratios(
                primary,
                primary_conc,
                sec_full,
                sec_full_conc,
                delta,
                delta_conc,
            ),
            ProfileSource::Physics {
                primary,
                secondary,
                cross,
                power_mode,
            } => build_profile(&primary, &secondary, cross, power_mode),
        }
    }
}

/// Quantities a sweep can vary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVar {
    LambdaP,
    LambdaE,
    DelayBound,
    /// 1 keeps the concurrent success probabilities, 0 zeroes them.
    MprOn,
}

impl SweepVar {
    pub fn name(self) -> &'static str {
        match self {
            SweepVar::LambdaP => "lambda_p",
            SweepVar::LambdaE => "lambda_e",
            SweepVar::DelayBound => "delay_bound",
            SweepVar::MprOn => "mpr_on",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Range {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl Range {
    /// Inclusive grid `start, start + step, ..., stop`, each point rounded to
    /// twelve decimals so that `0.1 + 2 * 0.1` prints as `0.3`.
    pub fn expand(&self) -> Result<Vec<f64>> {
        let Range { start, stop, step } = *self;
        if !(start.is_finite()
            && stop.is_finite()
            && step.is_finite()
            && step > 0.0
            && stop >= start)
        {
            return Err(Error::Config(format!(
                "range needs finite start <= stop and step > 0, got {start}..{stop} step {step}"
            )));
        }
        let n = ((stop - start) / step + 1e-9).floor() as usize + 1;
        if n > 100_000 {
            return Err(Error::Config(format!(
                "range has {n} points (limit 100000)"
            )));
        }
        Ok((0..n)
            .map(|i| ((start + i as f64 * step) * 1e12).round() / 1e12)
            .collect())
    }
}

/// One swept axis: either explicit `values` or a `range`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Axis {
    pub variable: SweepVar,
    #[serde(default)]
    pub values: Option<Vec<f64>>,
    #[serde(default)]
    pub range: Option<Range>,
}

impl Axis {
    pub fn points(&self) -> Result<Vec<f64>> {
        let pts = match (&self.values, &self.range) {
            (Some(v), None) => v.clone(),
            (None, Some(r)) => r.expand()?,
            _ => {
                return Err(Error::Config(format!(
                    "axis `{}` needs exactly one of `values` or `range`",
                    self.variable.name()
                )))
            }
        };
        if pts.is_empty() {
            return Err(Error::Config(format!(
                "axis `{}` has an empty grid",
                self.variable.name()
            )));
        }
        if pts.iter().any(|v| v.is_nan()) {
            return Err(Error::Config(format!(
                "axis `{}` contains NaN",
                self.variable.name()
            )));
        }
        let up = pts.windows(2).all(|w| w[0] < w[1]);
        let down = pts.windows(2).all(|w| w[0] > w[1]);
        if !(up || down) {
            return Err(Error::Config(format!(
                "axis `{}` must be strictly monotone",
                self.variable.name()
            )));
        }
        if self.variable == SweepVar::MprOn && pts.iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::Config("axis `mpr_on` takes only 0 and 1".into()));
        }
        Ok(pts)
    }
}

/// The sweep grid: the main axis, optionally repeated for each series value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub variable: SweepVar,
    #[serde(default)]
    pub values: Option<Vec<f64>>,
    #[serde(default)]
    pub range: Option<Range>,
    #[serde(default)]
    pub series: Option<Axis>,
}

impl SweepSpec {
    pub fn axis(&self) -> Axis {
        Axis {
            variable: self.variable,
            values: self.values.clone(),
            range: self.range,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub slots: u64,
    pub semantics: SimSemantics,
    /// Finite energy battery; unlimited when absent.
    pub energy_capacity: Option<u64>,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            slots: 1_000_000,
            semantics: SimSemantics::Backlogged,
            energy_capacity: None,
        }
    }
}

fn default_schemes() -> Vec<Scheme> {
    Scheme::ALL.to_vec()
}

fn default_true() -> bool {
    true
}

fn default_policy() -> PolicyFb {
    PolicyFb::new(PolicyNoFb::new(0.0, 0.0, 0.0, 1.0).expect("valid"), 0.0).expect("valid")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_schemes")]
    pub schemes: Vec<Scheme>,
    pub profile: ProfileSource,
    /// When false all concurrent success probabilities are zero.
    #[serde(default = "default_true")]
    pub mpr: bool,
    pub sensing: SensingQuality,
    pub traffic: TrafficParams,
    /// Policy used by `analyze`, `simulate` and `validate`.
    #[serde(default = "default_policy")]
    pub policy: PolicyFb,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub sweep: Option<SweepSpec>,
    #[serde(default)]
    pub simulation: SimConfig,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
}

/// Concrete model inputs at one sweep point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub profile: OutageProfile,
    pub traffic: TrafficParams,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.schemes.is_empty() {
            return Err(Error::Config("`schemes` is empty".into()));
        }
        self.base_point()?;
        self.sensing.validate()?;
        self.policy.base.validate()?;
        PolicyFb::new(self.policy.base, self.policy.access_retx)?;
        self.solver.validate()?;
        if self.simulation.slots == 0 {
            return Err(Error::Config("`simulation.slots` must be > 0".into()));
        }
        if let Some(sweep) = &self.sweep {
            sweep.axis().points()?;
            if let Some(series) = &sweep.series {
                series.points()?;
                if series.variable == sweep.variable {
                    return Err(Error::Config(
                        "sweep and series vary the same quantity".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn base_point(&self) -> Result<Point> {
        self.point(&[])
    }

    /// Model inputs with the given sweep assignments applied.
    pub fn point(&self, assignments: &[(SweepVar, f64)]) -> Result<Point> {
        let mut traffic = self.traffic;
        let mut mpr = self.mpr;
        for &(var, value) in assignments {
            match var {
                SweepVar::LambdaP => traffic.lambda_p = value,
                SweepVar::LambdaE => traffic.lambda_e = value,
                SweepVar::DelayBound => traffic.delay_bound = value,
                SweepVar::MprOn => mpr = value != 0.0,
            }
        }
        let profile = self.profile.build()?;
        Ok(Point {
            profile: if mpr { profile } else { profile.without_mpr() },
            traffic: traffic.validate()?,
        })
    }
}

fn merge(base: &mut Table, over: Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(Value::Table(b)), Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// Applies one `dotted.key=value` override. The value is read as a TOML value
/// and falls back to a plain string.
pub fn apply_override(table: &mut Table, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{assignment}` is not key=value")))?;
    let path: Vec<&str> = key.trim().split('.').collect();
    if path.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!(
            "override `{assignment}` has an empty key"
        )));
    }
    let raw = raw.trim();
    let value = match format!("v = {raw}").parse::<Table>() {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => Value::String(raw.to_string()),
    };
    let (last, parents) = path.split_last().expect("nonempty");
    let mut cur = table;
    for p in parents {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| Value::Table(Table::new()));
        cur = match entry {
            Value::Table(t) => t,
            _ => {
                return Err(Error::Config(format!(
                    "override `{key}`: `{p}` is not a table"
                )))
            }
        };
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

fn parse_table(text: &str, origin: &str) -> Result<Table> {
    text.parse::<Table>()
        .map_err(|e| Error::Config(format!("{origin}: {e}")))
}

/// Resolves a `--config` argument; relative paths that do not exist are
/// looked up in `config_dir`.
pub fn resolve_path(path: &Path, config_dir: Option<&Path>) -> PathBuf {
    match config_dir {
        Some(dir) if path.is_relative() && !path.exists() => dir.join(path),
        _ => path.to_path_buf(),
    }
}

/// Builds the configuration from a preset, a file and overrides.
///
/// With neither a preset nor a file, `<config_dir>/ehcr.toml` is used.
pub fn load(
    preset: Option<&str>,
    file: Option<&Path>,
    overrides: &[String],
    config_dir: Option<&Path>,
) -> Result<RunConfig> {
    let mut layers: Vec<(String, String)> = Vec::new();
    if let Some(name) = preset {
        let text = preset_source(name).ok_or_else(|| {
            Error::Config(format!(
                "unknown preset `{name}` (available: {})",
                preset_names().join(", ")
            ))
        })?;
        layers.push((format!("preset {name}"), text.to_string()));
    }
    let file = match (file, preset, config_dir) {
        (Some(f), _, _) => Some(resolve_path(f, config_dir)),
        (None, None, Some(dir)) => Some(dir.join(DEFAULT_CONFIG_FILE)),
        _ => None,
    };
    if let Some(path) = file {
        let text = std::fs::read_to_string(&path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        layers.push((path.display().to_string(), text));
    }
    if layers.is_empty() {
        return Err(Error::Config(format!(
            "no configuration: pass --config or --preset, or set {CONFIG_DIR_ENV}"
        )));
    }

    let config = if layers.len() == 1 && overrides.is_empty() {
        // a single source keeps toml's line and column diagnostics
        let (origin, text) = &layers[0];
        toml::from_str::<RunConfig>(text).map_err(|e| Error::Config(format!("{origin}: {e}")))?
    } else {
        let mut table = Table::new();
        let origin = layers
            .iter()
            .map(|(o, _)| o.as_str())
            .collect::<Vec<_>>()
            .join(" + ");
        for (o, text) in &layers {
            merge(&mut table, parse_table(text, o)?);
        }
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        RunConfig::deserialize(Value::Table(table))
            .map_err(|e| Error::Config(format!("{origin}: {e}")))?
    };
    config.validate()?;
    Ok(config)
}

/// Parses a configuration held in memory.
pub fn from_toml(text: &str) -> Result<RunConfig> {
    let config: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    config.validate()?;
    Ok(config)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_parse_and_validate() {
        for (name, text) in PRESETS {
            let c = from_toml(text).unwrap_or_else(|e| panic!("{name}: {e}"));
            assert!(c.sweep.is_some(), "{name}");
        }
    }

    #[test]
    fn fig4_preset_matches_caption() {
        let c = from_toml(preset_source("fig4").unwrap()).unwrap();
        let p = c.base_point().unwrap();
        assert_eq!(p.profile.primary, 0.7);
        assert!((p.profile.delta() - 0.9782).abs() < 1e-15);
        assert!((p.profile.delta_conc() - 0.8).abs() < 1e-15);
        assert_eq!(p.traffic.lambda_e, 0.8);
        assert_eq!(p.traffic.delay_bound, 2.0);
        assert_eq!(c.sensing.false_alarm, 0.1);
    }

    #[test]
    fn overrides_win_and_parse_types() {
        let c = load(
            Some("fig4"),
            None,
            &[
                "traffic.lambda_p=0.126".into(),
                "schemes=[\"feedback\"]".into(),
                "mpr=false".into(),
            ],
            None,
        )
        .unwrap();
        assert_eq!(c.traffic.lambda_p, 0.126);
        assert_eq!(c.schemes, vec![Scheme::Feedback]);
        assert_eq!(c.base_point().unwrap().profile.primary_conc, 0.0);
    }

    #[test]
    fn errors_name_the_field_and_line() {
        let text = preset_source("fig4").unwrap().replace("lambda_e = 0.8", "");
        let e = from_toml(&text).unwrap_err().to_string();
        assert!(e.contains("lambda_e"), "{e}");
        let e = from_toml("schemes = [\"feedback\"]\n[profile]\nsource = \"nope\"\n")
            .unwrap_err()
            .to_string();
        assert!(e.contains("line 3") || e.contains("3 |"), "{e}");
    }

    #[test]
    fn empty_or_unsorted_grids_are_rejected() {
        let base = preset_source("fig4").unwrap();
        for bad in [
            "values = []",
            "values = [0.1, 0.3, 0.2]",
            "values = [0.1]\nrange = { start = 0.0, stop = 1.0, step = 0.5 }",
        ] {
            let text = base.replace("range = { start = 0.0, stop = 0.7, step = 0.025 }", bad);
            assert!(from_toml(&text).is_err(), "{bad}");
        }
    }

    #[test]
    fn range_is_inclusive_and_clean() {
        let r = Range {
            start: 0.0,
            stop: 0.7,
            step: 0.025,
        }
        .expand()
        .unwrap();
        assert_eq!(r.len(), 29);
        assert_eq!(r[12], 0.3);
        assert_eq!(*r.last().unwrap(), 0.7);
    }

    #[test]
    fn config_dir_supplies_default_file() {
        let dir = std::env::temp_dir().join(format!("ehcr-config-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        std::fs::write(
            dir.join(DEFAULT_CONFIG_FILE),
            preset_source("fig7").unwrap(),
        )
        .unwrap();
        let c = load(None, None, &[], Some(&dir)).unwrap();
        assert_eq!(c.sweep.unwrap().series.unwrap().variable, SweepVar::LambdaE);
        assert!(load(None, None, &[], None).is_err());
        std::fs::remove_dir_all(&dir).unwrap();
    }
}
