use std::fmt;
use std::path::PathBuf;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use nvsim_core::dynamics::{build_nv_model, Drive, Envelope, Level, ModelRates, NVModel, NoiseProcess};
use nvsim_core::error::Error;
use nvsim_core::experiments::{BathConfig, CPTConfig, CoolingConfig, EntanglementConfig, PLEProtocol, RabiConfig};
use nvsim_core::levels::{ExcitedStateParams, GroundParams};
use nvsim_core::photonics::{CavityParams, CollectionGeometry, DEFAULT_XI};

/// One configuration problem, reported as `path: reason`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub path: String,
    pub reason: String,
}

impl ConfigError {
    fn new(path: impl Into<String>, reason: impl Into<String>) -> Self {
        Self { path: path.into(), reason: reason.into() }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.reason)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Experiment {
    Levels,
    Ple,
    Rabi,
    Cpt,
    Cool,
    Bath,
    Entangle,
    Purcell,
    Collect,
    Fit,
}

impl Experiment {
    pub const ALL: [Experiment; 10] = [
        Experiment::Levels,
        Experiment::Ple,
        Experiment::Rabi,
        Experiment::Cpt,
        Experiment::Cool,
        Experiment::Bath,
        Experiment::Entangle,
        Experiment::Purcell,
        Experiment::Collect,
        Experiment::Fit,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Levels => "levels",
            Experiment::Ple => "ple",
            Experiment::Rabi => "rabi",
            Experiment::Cpt => "cpt",
            Experiment::Cool => "cool",
            Experiment::Bath => "bath",
            Experiment::Entangle => "entangle",
            Experiment::Purcell => "purcell",
            Experiment::Collect => "collect",
            Experiment::Fit => "fit",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|e| e.name() == s)
    }

    pub fn is_stochastic(self) -> bool {
        matches!(
            self,
            Experiment::Ple
                | Experiment::Rabi
                | Experiment::Cpt
                | Experiment::Cool
                | Experiment::Bath
                | Experiment::Entangle
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

/// Ten-level model inputs shared by the dynamical experiments.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub excited: ExcitedStateParams,
    pub ground: GroundParams,
    pub rates: ModelRates,
}

impl ModelSpec {
    pub fn build(&self) -> nvsim_core::error::Result<NVModel> {
        self.excited.validate()?;
        build_nv_model(self.excited, self.ground, &self.rates)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LevelsParams {
    pub excited: ExcitedStateParams,
    pub ground: GroundParams,
}

/// Rectangular optical pulse from g0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PulseSpec {
    pub target: Level,
    pub rabi_frequency: f64,
    pub detuning: f64,
    pub start: f64,
    pub stop: f64,
}

impl Default for PulseSpec {
    fn default() -> Self {
        Self { target: Level::Ey, rabi_frequency: 100.0, detuning: 0.0, start: 50.0, stop: 90.0 }
    }
}

impl PulseSpec {
    pub fn drive(&self) -> Drive {
        Drive::optical(Level::G0, self.target, self.rabi_frequency, self.detuning)
            .with_envelope(Envelope::pulse(self.start, self.stop))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PurcellParams {
    /// Uncoupled and coupled excited-state lifetimes (ns).
    pub tau0: f64,
    pub tau: f64,
    pub xi: f64,
    pub cavity: CavityParams,
}

impl Default for PurcellParams {
    fn default() -> Self {
        Self { tau0: 18.5, tau: 11.6, xi: DEFAULT_XI, cavity: CavityParams::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FitModel {
    Lorentzian,
    Exponential,
    Oscillation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitParams {
    /// CSV file with a header row; relative paths resolve against the config file.
    pub input: String,
    pub x_column: String,
    pub y_column: String,
    pub model: FitModel,
    pub n_peaks: usize,
    pub with_offset: bool,
    /// Starting frequency for the oscillation model (MHz).
    pub expected_frequency: f64,
}

impl Default for FitParams {
    fn default() -> Self {
        Self {
            input: String::new(),
            x_column: "axis".into(),
            y_column: "sampled".into(),
            model: FitModel::Lorentzian,
            n_peaks: 1,
            with_offset: false,
            expected_frequency: 122.0,
        }
    }
}

fn default_collection() -> CollectionGeometry {
    CollectionGeometry { na: 0.95, n1: 1.0, n2: 2.4, phi_em: std::f64::consts::FRAC_PI_2 }
}

/// Typed parameters of one experiment.
#[derive(Debug, Clone, PartialEq)]
pub enum Params {
    Levels(LevelsParams),
    Ple { protocol: PLEProtocol, noise: NoiseProcess, model: ModelSpec },
    Rabi { config: RabiConfig, pulse: PulseSpec, model: ModelSpec },
    Cpt { config: CPTConfig, model: ModelSpec },
    Cool(CoolingConfig),
    Bath { config: BathConfig, model: ModelSpec },
    Entangle(EntanglementConfig),
    Purcell(PurcellParams),
    Collect(CollectionGeometry),
    Fit(FitParams),
}

/// Fully resolved run configuration.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub experiment: Experiment,
    pub seed: Option<u64>,
    pub output: PathBuf,
    pub format: Format,
    /// Parameter tree with every default filled in.
    pub parameters: Value,
    pub params: Params,
}

impl Resolved {
    pub fn to_json(&self) -> Value {
        let mut m = Map::new();
        m.insert("experiment".into(), Value::String(self.experiment.name().into()));
        m.insert("seed".into(), self.seed.map_or(Value::Null, Value::from));
        m.insert("output".into(), Value::String(self.output.to_string_lossy().into_owned()));
        m.insert("format".into(), Value::String(self.format.extension().into()));
        m.insert("parameters".into(), self.parameters.clone());
        Value::Object(m)
    }
}

const TOP_KEYS: [&str; 5] = ["experiment", "parameters", "seed", "output", "format"];

/// Keys held next to the primary config struct of an experiment.
fn extras(experiment: Experiment) -> Vec<(&'static str, Value)> {
    match experiment {
        Experiment::Ple => {
            vec![("noise", to_value(&NoiseProcess::none())), ("model", to_value(&ModelSpec::default()))]
        }
        Experiment::Rabi => {
            vec![("pulse", to_value(&PulseSpec::default())), ("model", to_value(&ModelSpec::default()))]
        }
        Experiment::Cpt | Experiment::Bath => vec![("model", to_value(&ModelSpec::default()))],
        _ => vec![],
    }
}

fn to_value<T: Serialize>(x: &T) -> Value {
    serde_json::to_value(x).expect("parameter types serialize")
}

fn defaults(experiment: Experiment) -> Value {
    let mut base = match experiment {
        Experiment::Levels => to_value(&LevelsParams::default()),
        Experiment::Ple => to_value(&PLEProtocol::default()),
        Experiment::Rabi => to_value(&RabiConfig::default()),
        Experiment::Cpt => to_value(&CPTConfig::default()),
        Experiment::Cool => to_value(&CoolingConfig::default()),
        Experiment::Bath => to_value(&BathConfig::default()),
        Experiment::Entangle => to_value(&EntanglementConfig::default()),
        Experiment::Purcell => to_value(&PurcellParams::default()),
        Experiment::Collect => to_value(&default_collection()),
        Experiment::Fit => to_value(&FitParams::default()),
    };
    let obj = base.as_object_mut().expect("parameter defaults are objects");
    for (k, v) in extras(experiment) {
        obj.insert(k.into(), v);
    }
    base
}

fn join(path: &str, key: &str) -> String {
    if path.is_empty() {
        key.to_string()
    } else {
        format!("{path}.{key}")
    }
}

fn kind(v: &Value) -> &'static str {
    match v {
        Value::Null => "null",
        Value::Bool(_) => "a boolean",
        Value::Number(_) => "a number",
        Value::String(_) => "a string",
        Value::Array(_) => "an array",
        Value::Object(_) => "an object",
    }
}

const MAX_RANGE_POINTS: usize = 10_000_000;

/// Inclusive `start..=stop` in steps of `step`.
fn expand_range(obj: &Map<String, Value>, path: &str, errs: &mut Vec<ConfigError>) -> Option<Value> {
    let mut get = |k: &str| -> Option<f64> {
        match obj.get(k).and_then(Value::as_f64) {
            Some(x) if x.is_finite() => Some(x),
            _ => {
                errs.push(ConfigError::new(join(path, k), "must be a finite number"));
                None
            }
        }
    };
    let (start, stop, step) = (get("start"), get("stop"), get("step"));
    let (start, stop, step) = (start?, stop?, step?);
    if step == 0.0 || (stop - start) * step < 0.0 {
        errs.push(ConfigError::new(join(path, "step"), "must be nonzero and point from start to stop"));
        return None;
    }
    let n = ((stop - start) / step + 1e-9).floor();
    if n >= MAX_RANGE_POINTS as f64 {
        errs.push(ConfigError::new(path, format!("range has more than {MAX_RANGE_POINTS} points")));
        return None;
    }
    Some(Value::Array((0..=n as usize).map(|k| Value::from(start + k as f64 * step)).collect()))
}

/// Overlays `user` on `default`, recording unknown keys and kind mismatches.
fn merge(default: &Value, user: &Value, path: &str, errs: &mut Vec<ConfigError>) -> Value {
    match (default, user) {
        (Value::Object(d), Value::Object(u)) => {
            let mut out = d.clone();
            for (k, uv) in u {
                match d.get(k) {
                    Some(dv) => {
                        let merged = merge(dv, uv, &join(path, k), errs);
                        out.insert(k.clone(), merged);
                    }
                    None => errs.push(ConfigError::new(join(path, k), "unknown key")),
                }
            }
            Value::Object(out)
        }
        (Value::Array(_), Value::Object(u)) => {
            let keys: Vec<&str> = u.keys().map(String::as_str).collect();
            let mut sorted = keys.clone();
            sorted.sort_unstable();
            if sorted == ["start", "step", "stop"] {
                expand_range(u, path, errs).unwrap_or(Value::Null)
            } else {
                for k in keys.iter().filter(|k| !["start", "stop", "step"].contains(k)) {
                    errs.push(ConfigError::new(join(path, k), "unknown key"));
                }
                for k in ["start", "stop", "step"].iter().filter(|k| !u.contains_key(**k)) {
                    errs.push(ConfigError::new(join(path, k), "missing"));
                }
                Value::Null
            }
        }
        (Value::Null, u) => u.clone(),
        (d, u) if std::mem::discriminant(d) != std::mem::discriminant(u) => {
            errs.push(ConfigError::new(path, format!("expected {}, got {}", kind(d), kind(u))));
            d.clone()
        }
        (_, u) => u.clone(),
    }
}

fn typed<T: DeserializeOwned>(v: Value, prefix: &str) -> Result<T, ConfigError> {
    serde_path_to_error::deserialize(v).map_err(|e| {
        let inner = e.path().to_string();
        let path = if inner == "." { prefix.to_string() } else { join(prefix, &inner) };
        let path = if path.is_empty() { "parameters".to_string() } else { path };
        ConfigError::new(path, e.into_inner().to_string())
    })
}

fn split(params: &Value, experiment: Experiment) -> (Value, Map<String, Value>) {
    let mut primary = params.as_object().cloned().unwrap_or_default();
    let mut rest = Map::new();
    for (k, _) in extras(experiment) {
        if let Some(v) = primary.remove(k) {
            rest.insert(k.into(), v);
        }
    }
    (Value::Object(primary), rest)
}

fn extra<T: DeserializeOwned>(rest: &Map<String, Value>, key: &str) -> Result<T, ConfigError> {
    typed(rest.get(key).cloned().unwrap_or(Value::Null), key)
}

fn build_params(experiment: Experiment, params: &Value) -> Result<Params, ConfigError> {
    let (primary, rest) = split(params, experiment);
    Ok(match experiment {
        Experiment::Levels => Params::Levels(typed(primary, "")?),
        Experiment::Ple => {
            Params::Ple { protocol: typed(primary, "")?, noise: extra(&rest, "noise")?, model: extra(&rest, "model")? }
        }
        Experiment::Rabi => {
            Params::Rabi { config: typed(primary, "")?, pulse: extra(&rest, "pulse")?, model: extra(&rest, "model")? }
        }
        Experiment::Cpt => Params::Cpt { config: typed(primary, "")?, model: extra(&rest, "model")? },
        Experiment::Cool => Params::Cool(typed(primary, "")?),
        Experiment::Bath => Params::Bath { config: typed(primary, "")?, model: extra(&rest, "model")? },
        Experiment::Entangle => Params::Entangle(typed(primary, "")?),
        Experiment::Purcell => Params::Purcell(typed(primary, "")?),
        Experiment::Collect => Params::Collect(typed(primary, "")?),
        Experiment::Fit => Params::Fit(typed(primary, "")?),
    })
}

/// Every key path of `v` whose last segment is `name`, shallowest first.
fn find_paths(v: &Value, name: &str, path: &str, out: &mut Vec<String>) {
    if let Value::Object(m) = v {
        for (k, child) in m {
            let p = join(path, k);
            if k == name {
                out.push(p.clone());
            }
            find_paths(child, name, &p, out);
        }
    }
}

fn all_keys(v: &Value, out: &mut Vec<String>) {
    if let Value::Object(m) = v {
        for (k, child) in m {
            out.push(k.clone());
            all_keys(child, out);
        }
    }
}

fn mentions(message: &str, key: &str) -> bool {
    message.match_indices(key).any(|(i, _)| {
        let word = |c: char| c.is_alphanumeric() || c == '_';
        let before = message[..i].chars().next_back().is_none_or(|c| !word(c));
        let after = message[i + key.len()..].chars().next().is_none_or(|c| !word(c));
        before && after
    })
}

/// Attributes a core validation error to the parameter key it concerns.
pub fn attribute(err: &Error, parameters: &Value, section: Option<&str>) -> ConfigError {
    let scoped = |p: String| match section {
        Some(s) if !p.starts_with(s) => join(s, &p),
        _ => p,
    };
    let root = match section {
        Some(s) => parameters.pointer(&format!("/{}", s.replace('.', "/"))).unwrap_or(parameters),
        None => parameters,
    };
    if let Error::InvalidParameter { name, reason } = err {
        let mut paths = Vec::new();
        find_paths(root, name, "", &mut paths);
        paths.sort_by_key(|p| p.matches('.').count());
        let path = paths.into_iter().next().unwrap_or_else(|| name.to_string());
        return ConfigError::new(scoped(path), reason.clone());
    }
    let message = err.to_string();
    let mut keys = Vec::new();
    all_keys(root, &mut keys);
    keys.sort_by_key(|k| std::cmp::Reverse(k.len()));
    let hit = keys.into_iter().find(|k| mentions(&message, k));
    match hit {
        Some(k) => {
            let mut paths = Vec::new();
            find_paths(root, &k, "", &mut paths);
            paths.sort_by_key(|p| p.matches('.').count());
            ConfigError::new(scoped(paths.into_iter().next().unwrap_or(k)), message)
        }
        None => ConfigError::new(section.unwrap_or("parameters"), message),
    }
}

fn check_params(params: &Params, tree: &Value) -> Result<(), ConfigError> {
    let at = |section: Option<&'static str>| move |e: Error| attribute(&e, tree, section);
    match params {
        Params::Levels(p) => {
            p.excited.validate().map_err(at(Some("excited")))?;
            p.ground.validate().map_err(at(Some("ground")))
        }
        Params::Ple { protocol, noise, model } => {
            protocol.validate().map_err(at(None))?;
            noise.validate().map_err(at(Some("noise")))?;
            model.build().map(drop).map_err(at(Some("model")))
        }
        Params::Rabi { config, pulse, model } => {
            config.validate().map_err(at(None))?;
            pulse.drive().validate().map_err(at(Some("pulse")))?;
            model.build().map(drop).map_err(at(Some("model")))
        }
        Params::Cpt { config, model } => {
            config.validate().map_err(at(None))?;
            model.build().map(drop).map_err(at(Some("model")))
        }
        Params::Cool(c) => c.validate().map_err(at(None)),
        Params::Bath { config, model } => {
            config.validate().map_err(at(None))?;
            model.build().map(drop).map_err(at(Some("model")))
        }
        Params::Entangle(c) => c.validate().map_err(at(None)),
        Params::Purcell(p) => {
            nvsim_core::photonics::purcell_from_lifetimes(p.tau0, p.tau).map(drop).map_err(at(None))?;
            nvsim_core::photonics::zpl_enhancement(0.0, p.xi).map(drop).map_err(at(None))?;
            p.cavity.validate().map_err(at(Some("cavity")))
        }
        Params::Collect(g) => nvsim_core::photonics::collection_efficiency(g).map(drop).map_err(at(None)),
        Params::Fit(f) => {
            if f.input.is_empty() {
                return Err(ConfigError::new("input", "missing"));
            }
            if f.model == FitModel::Lorentzian && !(1..=3).contains(&f.n_peaks) {
                return Err(ConfigError::new("n_peaks", format!("must be 1, 2 or 3, got {}", f.n_peaks)));
            }
            Ok(())
        }
    }
}

/// Parses and resolves a configuration document. All problems found are
/// returned together; nothing is resolved when any are present.
pub fn resolve(text: &str) -> Result<Resolved, Vec<ConfigError>> {
    if text.trim().is_empty() {
        return Err(vec![ConfigError::new("experiment", "missing")]);
    }
    let root: Value = serde_json::from_str(text).map_err(|e| vec![ConfigError::new("config", e.to_string())])?;
    let Value::Object(root) = root else {
        return Err(vec![ConfigError::new("config", format!("expected an object, got {}", kind(&root)))]);
    };
    let mut errs = Vec::new();
    for k in root.keys().filter(|k| !TOP_KEYS.contains(&k.as_str())) {
        errs.push(ConfigError::new(k.clone(), "unknown key"));
    }
    let experiment = match root.get("experiment") {
        None => {
            errs.push(ConfigError::new("experiment", "missing"));
            None
        }
        Some(Value::String(s)) => match Experiment::parse(s) {
            Some(e) => Some(e),
            None => {
                let names: Vec<&str> = Experiment::ALL.iter().map(|e| e.name()).collect();
                errs.push(ConfigError::new(
                    "experiment",
                    format!("unknown experiment `{s}`, expected one of {}", names.join(", ")),
                ));
                None
            }
        },
        Some(v) => {
            errs.push(ConfigError::new("experiment", format!("expected a string, got {}", kind(v))));
            None
        }
    };
    let seed = match root.get("seed") {
        None | Some(Value::Null) => None,
        Some(v) => match v.as_u64() {
            Some(s) => Some(s),
            None => {
                errs.push(ConfigError::new("seed", "must be a non-negative integer"));
                None
            }
        },
    };
    if seed.is_none() && !root.contains_key("seed") && experiment.is_some_and(Experiment::is_stochastic) {
        errs.push(ConfigError::new("seed", "missing"));
    }
    let format = match root.get("format") {
        None => Format::Csv,
        Some(Value::String(s)) if s == "csv" => Format::Csv,
        Some(Value::String(s)) if s == "json" => Format::Json,
        Some(_) => {
            errs.push(ConfigError::new("format", "must be \"csv\" or \"json\""));
            Format::Csv
        }
    };
    let output = match root.get("output") {
        None => experiment.map(|e| PathBuf::from(e.name())),
        Some(Value::String(s)) if !s.is_empty() => Some(PathBuf::from(s)),
        Some(_) => {
            errs.push(ConfigError::new("output", "must be a non-empty path prefix"));
            None
        }
    };
    let user_params = match root.get("parameters") {
        None | Some(Value::Null) => Value::Object(Map::new()),
        Some(v @ Value::Object(_)) => v.clone(),
        Some(v) => {
            errs.push(ConfigError::new("parameters", format!("expected an object, got {}", kind(v))));
            Value::Object(Map::new())
        }
    };
    let Some(experiment) = experiment else {
        return Err(errs);
    };
    let parameters = merge(&defaults(experiment), &user_params, "", &mut errs);
    if !errs.is_empty() {
        return Err(errs);
    }
    let params = build_params(experiment, &parameters).map_err(|e| vec![e])?;
    check_params(&params, &parameters).map_err(|e| vec![e])?;
    if experiment.is_stochastic() && seed.is_none() {
        return Err(vec![ConfigError::new("seed", "must be a non-negative integer")]);
    }
    Ok(Resolved {
        experiment,
        seed,
        output: output.expect("output resolved with the experiment"),
        format,
        parameters,
        params,
    })
}
