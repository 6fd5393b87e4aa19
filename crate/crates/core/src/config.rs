//! Simulator configuration: application, architecture, circuit and device
//! sections parsed from a JSON document.
//!
//! Parsing is deliberately lenient about unknown keys (they are reported as
//! warnings) and strict about enum values and counts. Cross-section
//! consistency is checked separately by [`validate`], which returns a list of
//! violations instead of failing on the first one.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde_json::{json, Map, Value};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("missing required field `{0}`")]
    MissingField(String),
    #[error("bad value for `{field}`: {message}")]
    BadValue { field: String, message: String },
}

fn bad(field: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::BadValue {
        field: field.to_string(),
        message: message.into(),
    }
}

macro_rules! string_enum {
    ($(#[$meta:meta])* $name:ident { $($variant:ident => $canon:literal $(| $alias:literal)*),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
        pub enum $name { $($variant),+ }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self { $($name::$variant => $canon),+ }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl serde::Serialize for $name {
            fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                s.serialize_str(self.as_str())
            }
        }

        impl FromStr for $name {
            type Err = String;

            fn from_str(s: &str) -> Result<Self, String> {
                let lower = s.trim().to_ascii_lowercase();
                $(
                    if lower == $canon.to_ascii_lowercase() $(|| lower == $alias)* {
                        return Ok($name::$variant);
                    }
                )+
                Err(format!(
                    "unrecognized value `{}` (expected one of: {})",
                    s,
                    [$($canon),+].join(", ")
                ))
            }
        }
    };
}

string_enum!(
    /// Distance function used to compare a query with stored entries.
    DistanceFunction {
        Hamming => "hamming" | "hamm",
        L1 => "l1" | "manhattan",
        L2 => "l2" | "euclidean",
    }
);

string_enum!(
    /// Match semantics; also the sensing circuit kind.
    MatchType {
        Exact => "exact",
        Best => "best",
        Threshold => "threshold",
    }
);

string_enum!(
    HorizontalMerge {
        Voting => "voting",
        And => "and",
    }
);

string_enum!(
    VerticalMerge {
        Comparator => "comparator",
        Gather => "gather",
    }
);

string_enum!(
    CellType {
        Bcam => "BCAM",
        Tcam => "TCAM",
        Mcam => "MCAM",
        Acam => "ACAM",
    }
);

string_enum!(
    VariationType {
        D2D => "d2d",
        C2C => "c2c",
        Both => "both",
    }
);

string_enum!(
    VariationSource {
        Statistical => "statistical" | "stat" | "stat.",
        Experimental => "experimental" | "exper" | "exper.",
    }
);

#[derive(Debug, Clone, PartialEq)]
pub struct AppConfig {
    pub distance_function: DistanceFunction,
    pub match_type: MatchType,
    /// Neighbour count `k` for best match, distance threshold for threshold
    /// match, 0 for exact match.
    pub match_parameter: f64,
    pub data_bits: u32,
    /// Fixed quantization range. `None` infers it from the stored data.
    pub value_range: Option<(f64, f64)>,
}

impl AppConfig {
    /// Neighbour count for best match (at least 1).
    pub fn k(&self) -> usize {
        (self.match_parameter.max(1.0)) as usize
    }

    pub fn levels(&self) -> u32 {
        1u32 << self.data_bits
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArchConfig {
    pub subarrays_per_array: usize,
    pub arrays_per_mat: usize,
    pub mats_per_bank: usize,
    pub horizontal_merge: HorizontalMerge,
    pub vertical_merge: VerticalMerge,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CircuitConfig {
    pub rows: usize,
    pub columns: usize,
    pub cell_type: CellType,
    pub sensing_circuit: MatchType,
    /// Sensing limit, in distance units.
    pub sensing_limit: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeviceConfig {
    pub device_type: String,
    pub variation_enabled: bool,
    pub variation_type: VariationType,
    pub variation_spec: VariationSource,
    /// Standard deviation of statistical variation, in level units.
    pub variation_std: f64,
    pub empirical_table_path: Option<PathBuf>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub app: AppConfig,
    pub arch: ArchConfig,
    pub circuit: CircuitConfig,
    pub device: DeviceConfig,
    pub strict_merge: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Severity {
    Warning,
    Error,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub severity: Severity,
    pub code: &'static str,
    pub message: String,
}

impl Violation {
    fn error(code: &'static str, message: impl Into<String>) -> Self {
        Violation {
            severity: Severity::Error,
            code,
            message: message.into(),
        }
    }

    fn warning(code: &'static str, message: impl Into<String>) -> Self {
        Violation {
            severity: Severity::Warning,
            code,
            message: message.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sev = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(f, "{sev}[{}]: {}", self.code, self.message)
    }
}

pub fn has_errors(violations: &[Violation]) -> bool {
    violations.iter().any(|v| v.severity == Severity::Error)
}

const APP_KEYS: &[&str] = &[
    "distance_function",
    "match_type",
    "match_parameter",
    "data_bits",
    "value_range",
];
const ARCH_KEYS: &[&str] = &[
    "subarrays_per_array",
    "arrays_per_mat",
    "mats_per_bank",
    "horizontal_merge",
    "vertical_merge",
];
const CIRCUIT_KEYS: &[&str] = &[
    "rows",
    "columns",
    "cell_type",
    "sensing_circuit",
    "sensing_limit",
];
const DEVICE_KEYS: &[&str] = &[
    "device_type",
    "variation_enabled",
    "variation_type",
    "variation_spec",
    "variation_std",
    "empirical_table_path",
    "seed",
];
const TOP_KEYS: &[&str] = &[
    "application",
    "architecture",
    "circuit",
    "device",
    "strict_merge",
];

/// Parses a configuration document, discarding unknown-key warnings.
pub fn parse_config(text: &str) -> Result<SimConfig, ConfigError> {
    parse_config_with_warnings(text).map(|(cfg, _)| cfg)
}

/// Parses a configuration document and reports unknown keys as warnings.
pub fn parse_config_with_warnings(text: &str) -> Result<(SimConfig, Vec<Violation>), ConfigError> {
    let root: Value = serde_json::from_str(text).map_err(|e| ConfigError::Syntax {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    config_from_value(&root)
}

/// Builds a configuration from an already-parsed JSON value.
pub fn config_from_value(root: &Value) -> Result<(SimConfig, Vec<Violation>), ConfigError> {
    let root = root
        .as_object()
        .ok_or_else(|| bad("<root>", "configuration must be a JSON object"))?;
    let mut warnings = Vec::new();
    unknown_keys(root, TOP_KEYS, "", &mut warnings);

    let app = section(root, "application")?;
    unknown_keys(app, APP_KEYS, "application.", &mut warnings);
    let distance_function = enum_field(app, "application", "distance_function")?;
    let match_type: MatchType = enum_field(app, "application", "match_type")?;
    let data_bits = uint_field(app, "application", "data_bits")?
        .ok_or_else(|| ConfigError::MissingField("application.data_bits".into()))?;
    if data_bits == 0 || data_bits > 16 {
        return Err(bad("application.data_bits", "must be between 1 and 16"));
    }
    let raw_param = real_field(app, "application", "match_parameter")?;
    let match_parameter = match match_type {
        MatchType::Exact => 0.0,
        MatchType::Best => raw_param.unwrap_or(1.0),
        MatchType::Threshold => raw_param
            .ok_or_else(|| ConfigError::MissingField("application.match_parameter".into()))?,
    };
    let value_range = match app.get("value_range") {
        None | Some(Value::Null) => None,
        Some(Value::Array(pair)) if pair.len() == 2 => {
            let lo = pair[0].as_f64();
            let hi = pair[1].as_f64();
            match (lo, hi) {
                (Some(lo), Some(hi)) if lo < hi => Some((lo, hi)),
                _ => {
                    return Err(bad(
                        "application.value_range",
                        "expected [min, max] with min < max",
                    ))
                }
            }
        }
        Some(_) => {
            return Err(bad(
                "application.value_range",
                "expected [min, max] with min < max",
            ))
        }
    };

    let arch = section(root, "architecture")?;
    unknown_keys(arch, ARCH_KEYS, "architecture.", &mut warnings);
    let count = |key: &str| -> Result<usize, ConfigError> {
        uint_field(arch, "architecture", key)?
            .map(|v| v as usize)
            .ok_or_else(|| ConfigError::MissingField(format!("architecture.{key}")))
    };
    let arch_cfg = ArchConfig {
        subarrays_per_array: count("subarrays_per_array")?,
        arrays_per_mat: count("arrays_per_mat")?,
        mats_per_bank: count("mats_per_bank")?,
        horizontal_merge: opt_enum_field(arch, "architecture", "horizontal_merge")?.unwrap_or(
            match match_type {
                MatchType::Best => HorizontalMerge::Voting,
                _ => HorizontalMerge::And,
            },
        ),
        vertical_merge: opt_enum_field(arch, "architecture", "vertical_merge")?.unwrap_or(
            match match_type {
                MatchType::Best => VerticalMerge::Comparator,
                _ => VerticalMerge::Gather,
            },
        ),
    };

    let circ = section(root, "circuit")?;
    unknown_keys(circ, CIRCUIT_KEYS, "circuit.", &mut warnings);
    let dim = |key: &str| -> Result<usize, ConfigError> {
        uint_field(circ, "circuit", key)?
            .map(|v| v as usize)
            .ok_or_else(|| ConfigError::MissingField(format!("circuit.{key}")))
    };
    let circuit = CircuitConfig {
        rows: dim("rows")?,
        columns: dim("columns")?,
        cell_type: enum_field(circ, "circuit", "cell_type")?,
        sensing_circuit: opt_enum_field(circ, "circuit", "sensing_circuit")?.unwrap_or(match_type),
        sensing_limit: real_field(circ, "circuit", "sensing_limit")?.unwrap_or(0.0),
    };

    let dev = section(root, "device")?;
    unknown_keys(dev, DEVICE_KEYS, "device.", &mut warnings);
    let device_type = match dev.get("device_type") {
        Some(Value::String(s)) => s.clone(),
        Some(_) => return Err(bad("device.device_type", "expected a string")),
        None => return Err(ConfigError::MissingField("device.device_type".into())),
    };
    let variation_enabled = match dev.get("variation_enabled") {
        None | Some(Value::Null) => false,
        Some(Value::Bool(b)) => *b,
        Some(_) => return Err(bad("device.variation_enabled", "expected a boolean")),
    };
    let empirical_table_path = match dev.get("empirical_table_path") {
        None | Some(Value::Null) => None,
        Some(Value::String(s)) => Some(PathBuf::from(s)),
        Some(_) => return Err(bad("device.empirical_table_path", "expected a string")),
    };
    let device = DeviceConfig {
        device_type,
        variation_enabled,
        variation_type: opt_enum_field(dev, "device", "variation_type")?
            .unwrap_or(VariationType::D2D),
        variation_spec: opt_enum_field(dev, "device", "variation_spec")?
            .unwrap_or(VariationSource::Statistical),
        variation_std: real_field(dev, "device", "variation_std")?.unwrap_or(0.0),
        empirical_table_path,
        seed: uint_field(dev, "device", "seed")?.unwrap_or(0),
    };

    let strict_merge = match root.get("strict_merge") {
        None | Some(Value::Null) => true,
        Some(Value::Bool(b)) => *b,
        Some(_) => return Err(bad("strict_merge", "expected a boolean")),
    };

    Ok((
        SimConfig {
            app: AppConfig {
                distance_function,
                match_type,
                match_parameter,
                data_bits: data_bits as u32,
                value_range,
            },
            arch: arch_cfg,
            circuit,
            device,
            strict_merge,
        },
        warnings,
    ))
}

fn section<'a>(
    root: &'a Map<String, Value>,
    name: &str,
) -> Result<&'a Map<String, Value>, ConfigError> {
    match root.get(name) {
        Some(Value::Object(m)) => Ok(m),
        Some(_) => Err(bad(name, "expected an object")),
        None => Err(ConfigError::MissingField(name.to_string())),
    }
}

fn unknown_keys(map: &Map<String, Value>, known: &[&str], prefix: &str, out: &mut Vec<Violation>) {
    for key in map.keys() {
        if !known.contains(&key.as_str()) {
            out.push(Violation::warning(
                "unknown_key",
                format!("unknown key `{prefix}{key}` ignored"),
            ));
        }
    }
}

fn opt_enum_field<T: FromStr<Err = String>>(
    map: &Map<String, Value>,
    section: &str,
    key: &str,
) -> Result<Option<T>, ConfigError> {
    let field = format!("{section}.{key}");
    match map.get(key) {
        None | Some(Value::Null) => Ok(None),
        Some(Value::String(s)) => s.parse().map(Some).map_err(|m| bad(&field, m)),
        Some(_) => Err(bad(&field, "expected a string")),
    }
}

fn enum_field<T: FromStr<Err = String>>(
    map: &Map<String, Value>,
    section: &str,
    key: &str,
) -> Result<T, ConfigError> {
    opt_enum_field(map, section, key)?
        .ok_or_else(|| ConfigError::MissingField(format!("{section}.{key}")))
}

fn uint_field(
    map: &Map<String, Value>,
    section: &str,
    key: &str,
) -> Result<Option<u64>, ConfigError> {
    let field = format!("{section}.{key}");
    match map.get(key) {
        None | Some(Value::Null) => Ok(None),
        Some(Value::Number(n)) => {
            if let Some(u) = n.as_u64() {
                Ok(Some(u))
            } else if n.as_i64().is_some_and(|i| i < 0) {
                Err(bad(&field, format!("negative value {n}")))
            } else {
                match n.as_f64() {
                    Some(f) if f >= 0.0 && f.fract() == 0.0 && f <= u64::MAX as f64 => {
                        Ok(Some(f as u64))
                    }
                    Some(f) if f < 0.0 => Err(bad(&field, format!("negative value {n}"))),
                    _ => Err(bad(
                        &field,
                        format!("expected a non-negative integer, got {n}"),
                    )),
                }
            }
        }
        Some(_) => Err(bad(&field, "expected a non-negative integer")),
    }
}

fn real_field(
    map: &Map<String, Value>,
    section: &str,
    key: &str,
) -> Result<Option<f64>, ConfigError> {
    let field = format!("{section}.{key}");
    match map.get(key) {
        None | Some(Value::Null) => Ok(None),
        Some(Value::Number(n)) => n
            .as_f64()
            .map(Some)
            .ok_or_else(|| bad(&field, "expected a number")),
        Some(_) => Err(bad(&field, "expected a number")),
    }
}

/// Serializes a configuration back to its canonical JSON value. All optional
/// fields are written out, so the output parses to the same `SimConfig`.
pub fn config_to_value(cfg: &SimConfig) -> Value {
    let mut app = json!({
        "distance_function": cfg.app.distance_function.as_str(),
        "match_type": cfg.app.match_type.as_str(),
        "match_parameter": cfg.app.match_parameter,
        "data_bits": cfg.app.data_bits,
    });
    if let Some((lo, hi)) = cfg.app.value_range {
        app["value_range"] = json!([lo, hi]);
    }
    let mut device = json!({
        "device_type": cfg.device.device_type,
        "variation_enabled": cfg.device.variation_enabled,
        "variation_type": cfg.device.variation_type.as_str(),
        "variation_spec": cfg.device.variation_spec.as_str(),
        "variation_std": cfg.device.variation_std,
        "seed": cfg.device.seed,
    });
    if let Some(p) = &cfg.device.empirical_table_path {
        device["empirical_table_path"] = json!(p.to_string_lossy());
    }
    json!({
        "application": app,
        "architecture": {
            "subarrays_per_array": cfg.arch.subarrays_per_array,
            "arrays_per_mat": cfg.arch.arrays_per_mat,
            "mats_per_bank": cfg.arch.mats_per_bank,
            "horizontal_merge": cfg.arch.horizontal_merge.as_str(),
            "vertical_merge": cfg.arch.vertical_merge.as_str(),
        },
        "circuit": {
            "rows": cfg.circuit.rows,
            "columns": cfg.circuit.columns,
            "cell_type": cfg.circuit.cell_type.as_str(),
            "sensing_circuit": cfg.circuit.sensing_circuit.as_str(),
            "sensing_limit": cfg.circuit.sensing_limit,
        },
        "device": device,
        "strict_merge": cfg.strict_merge,
    })
}

pub fn serialize_config(cfg: &SimConfig) -> String {
    serde_json::to_string_pretty(&config_to_value(cfg)).expect("config serializes")
}

/// Checks cross-section consistency. An empty list means the configuration
/// is internally consistent.
pub fn validate(cfg: &SimConfig) -> Vec<Violation> {
    let mut out = Vec::new();
    let app = &cfg.app;
    let circ = &cfg.circuit;

    match circ.cell_type {
        CellType::Bcam | CellType::Tcam if app.data_bits != 1 => out.push(Violation::error(
            "cell_bits",
            format!(
                "cell type {} supports 1 bit per cell, but data_bits = {}",
                circ.cell_type, app.data_bits
            ),
        )),
        CellType::Mcam if app.data_bits < 2 => out.push(Violation::error(
            "cell_bits",
            format!("cell type MCAM needs data_bits >= 2, got {}", app.data_bits),
        )),
        _ => {}
    }

    if app.match_type != circ.sensing_circuit {
        out.push(Violation::error(
            "sensing_mismatch",
            format!(
                "match_type {} is not realized by sensing_circuit {}",
                app.match_type, circ.sensing_circuit
            ),
        ));
    }

    match app.match_type {
        MatchType::Best => {
            if app.match_parameter < 1.0 || app.match_parameter.fract() != 0.0 {
                out.push(Violation::error(
                    "bad_value",
                    format!(
                        "best match needs an integer neighbour count >= 1, got {}",
                        app.match_parameter
                    ),
                ));
            }
        }
        MatchType::Threshold => {
            if app.match_parameter.is_nan() || app.match_parameter < 0.0 {
                out.push(Violation::error(
                    "bad_value",
                    format!("threshold must be >= 0, got {}", app.match_parameter),
                ));
            }
        }
        MatchType::Exact => {}
    }

    if app.distance_function == DistanceFunction::Hamming && app.data_bits > 1 {
        out.push(Violation::warning(
            "hamming_multibit",
            format!(
                "Hamming distance on {}-bit levels counts unequal dimensions",
                app.data_bits
            ),
        ));
    }

    for (name, v) in [
        ("subarrays_per_array", cfg.arch.subarrays_per_array),
        ("arrays_per_mat", cfg.arch.arrays_per_mat),
        ("mats_per_bank", cfg.arch.mats_per_bank),
        ("rows", circ.rows),
        ("columns", circ.columns),
    ] {
        if v == 0 {
            out.push(Violation::error(
                "bad_value",
                format!("{name} must be >= 1"),
            ));
        }
    }

    if circ.sensing_limit.is_nan() || circ.sensing_limit < 0.0 {
        out.push(Violation::error(
            "bad_value",
            format!("sensing_limit must be >= 0, got {}", circ.sensing_limit),
        ));
    }

    let dev = &cfg.device;
    match dev.variation_spec {
        VariationSource::Statistical => {
            if dev.variation_std.is_nan() || dev.variation_std < 0.0 {
                out.push(Violation::error(
                    "bad_value",
                    format!("variation_std must be >= 0, got {}", dev.variation_std),
                ));
            }
        }
        VariationSource::Experimental => {
            if dev.variation_enabled && dev.empirical_table_path.is_none() {
                out.push(Violation::error(
                    "missing_table",
                    "experimental variation requires empirical_table_path",
                ));
            }
        }
    }

    let scheme_warning = match app.match_type {
        MatchType::Exact if cfg.arch.horizontal_merge == HorizontalMerge::Voting => {
            Some("voting horizontal merge does not apply to exact match")
        }
        MatchType::Best if cfg.arch.horizontal_merge == HorizontalMerge::And => {
            Some("AND horizontal merge does not apply to best match")
        }
        MatchType::Best if cfg.arch.vertical_merge == VerticalMerge::Gather => {
            Some("gather vertical merge does not apply to best match")
        }
        MatchType::Exact | MatchType::Threshold
            if cfg.arch.vertical_merge == VerticalMerge::Comparator =>
        {
            Some("comparator vertical merge applies to best match only")
        }
        _ => None,
    };
    if let Some(msg) = scheme_warning {
        out.push(Violation::warning(
            "merge_scheme",
            format!("{msg}; fails if the partition needs that merge"),
        ));
    }

    out
}
