use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Simulate,
    WsVerify,
    Functional,
    Existence,
    Kinetic,
    Heterogeneous,
}

impl Experiment {
    /// Metric names the experiment reports, for gate validation.
    pub fn metrics(self) -> &'static [&'static str] {
        match self {
            Experiment::Simulate => &["final_r2", "max_norm_defect", "snapshots"],
            Experiment::WsVerify => &[
                "max_mismatch",
                "conjugacy_residual",
                "max_orthogonality_defect",
                "guard_rescales",
                "cross_ratio_drift",
                "cycle_ratio_drift",
            ],
            Experiment::Functional => &["max_drift", "p0_drift", "max_estimate_std_error"],
            Experiment::Existence => &[
                "classification_mismatches",
                "max_log_decade_spread",
                "anchor_error_d2_p0",
                "anchor_error_d1_pm1",
            ],
            Experiment::Kinetic => &[
                "max_r2_decrease",
                "max_fd_error",
                "initial_r",
                "final_r",
                "mass_plus_error",
                "mass_minus_error",
                "symmetric_max_r",
                "perturbed_final_r",
                "mixed_ratio_max",
                "fixed_tuple_drift",
                "control_drift",
            ],
            Experiment::Heterogeneous => &[
                "max_within_drift",
                "mixed_drift",
                "beta_constant",
                "max_mismatch",
                "groups_skipped",
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OmegaSpec {
    Zero,
    Random { seed: u64, scale: f64 },
    Planar { rate: f64, plane: [usize; 2] },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FieldSpec {
    MeanField,
    Frustrated { v: Vec<Vec<f64>> },
    Winfree {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        pole: Option<Vec<f64>>,
    },
    TimeDelay { tau: f64 },
    /// X(t) = a cos(frequency·t) + b sin(frequency·t).
    Prescribed { a: Vec<f64>, b: Vec<f64>, frequency: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitSpec {
    Uniform,
    Vmf {
        concentration: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        mu: Option<Vec<f64>>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GateOp {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Gate {
    pub metric: String,
    pub op: GateOp,
    pub value: f64,
}

impl Gate {
    pub fn passes(&self, observed: f64) -> bool {
        match self.op {
            GateOp::Le => observed <= self.value,
            GateOp::Ge => observed >= self.value,
            GateOp::Eq => observed == self.value,
        }
    }
}

fn default_d() -> usize {
    2
}
fn default_n() -> usize {
    64
}
fn default_kappa() -> f64 {
    1.0
}
fn default_omega() -> OmegaSpec {
    OmegaSpec::Zero
}
fn default_field() -> FieldSpec {
    FieldSpec::MeanField
}
fn default_init() -> InitSpec {
    InitSpec::Uniform
}
fn default_t_end() -> f64 {
    1.0
}
fn default_dt() -> f64 {
    1e-3
}
fn default_record_every() -> usize {
    1
}
fn default_p_list() -> Vec<f64> {
    vec![0.3, -0.3]
}
fn default_k() -> usize {
    2
}
fn default_m() -> usize {
    100
}
fn default_epsilon() -> f64 {
    0.5
}
fn default_delta() -> f64 {
    1e-3
}
fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    #[serde(default = "default_d")]
    pub d: usize,
    #[serde(rename = "N", default = "default_n")]
    pub n: usize,
    #[serde(default = "default_kappa")]
    pub kappa: f64,
    #[serde(default = "default_omega")]
    pub omega: OmegaSpec,
    #[serde(default)]
    pub omega_groups: Vec<OmegaSpec>,
    #[serde(default = "default_field")]
    pub field: FieldSpec,
    #[serde(default = "default_init")]
    pub init: InitSpec,
    #[serde(default = "default_t_end")]
    pub t_end: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_record_every")]
    pub record_every: usize,
    #[serde(default = "default_p_list")]
    pub p_list: Vec<f64>,
    #[serde(default)]
    pub d_list: Vec<usize>,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_m")]
    pub m: usize,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub gates: Vec<Gate>,
}

const TOP_LEVEL_KEYS: &[&str] = &[
    "experiment",
    "d",
    "N",
    "kappa",
    "omega",
    "omega_groups",
    "field",
    "init",
    "t_end",
    "dt",
    "record_every",
    "p_list",
    "d_list",
    "k",
    "m",
    "epsilon",
    "delta",
    "seed",
    "output_dir",
    "gates",
];

fn config_error(key: impl Into<String>, msg: impl Into<String>) -> CliError {
    CliError::Config {
        key: key.into(),
        message: msg.into(),
    }
}

/// Turns serde's "unknown field `x`" into "unknown key: path.x".
fn describe(path: String, err: &serde_json::Error) -> CliError {
    let msg = err.to_string();
    if let Some(rest) = msg.strip_prefix("unknown field `") {
        if let Some(end) = rest.find('`') {
            let name = &rest[..end];
            let full = if path.is_empty() || path == "." {
                name.to_string()
            } else {
                format!("{path}.{name}")
            };
            return CliError::UnknownKey(full);
        }
    }
    config_error(path, msg)
}

pub fn parse_str(text: &str) -> Result<ExperimentConfig, CliError> {
    let value: Value = serde_json::from_str(text).map_err(|e| config_error("<document>", e.to_string()))?;
    let obj = value
        .as_object()
        .ok_or_else(|| config_error("<document>", "top level must be a JSON object"))?;
    for key in obj.keys() {
        if !TOP_LEVEL_KEYS.contains(&key.as_str()) {
            return Err(CliError::UnknownKey(key.clone()));
        }
    }
    let cfg: ExperimentConfig = serde_path_to_error::deserialize(value).map_err(|e| {
        let path = e.path().to_string();
        describe(path, e.inner())
    })?;
    validate(&cfg)?;
    Ok(cfg)
}

pub fn parse_config(path: &Path) -> Result<ExperimentConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    parse_str(&text)
}

fn finite(key: &str, v: f64) -> Result<(), CliError> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(config_error(key, "must be finite"))
    }
}

fn positive(key: &str, v: f64) -> Result<(), CliError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(config_error(key, "must be finite and > 0"))
    }
}

fn check_len(key: &str, v: &[f64], dim: usize) -> Result<(), CliError> {
    if v.len() != dim {
        return Err(config_error(key, format!("expected {dim} entries, got {}", v.len())));
    }
    for x in v {
        finite(key, *x)?;
    }
    Ok(())
}

fn validate_omega(key: &str, om: &OmegaSpec, dim: usize) -> Result<(), CliError> {
    match om {
        OmegaSpec::Zero => Ok(()),
        OmegaSpec::Random { scale, .. } => {
            finite(&format!("{key}.scale"), *scale)?;
            if *scale < 0.0 {
                return Err(config_error(format!("{key}.scale"), "must be >= 0"));
            }
            Ok(())
        }
        OmegaSpec::Planar { rate, plane } => {
            finite(&format!("{key}.rate"), *rate)?;
            if plane[0] == plane[1] || plane[0] >= dim || plane[1] >= dim {
                return Err(config_error(
                    format!("{key}.plane"),
                    format!("need two distinct axes below {dim}"),
                ));
            }
            Ok(())
        }
    }
}

/// Checks every parameter against the preconditions of the operations the
/// experiment will call.
pub fn validate(cfg: &ExperimentConfig) -> Result<(), CliError> {
    if cfg.d < 1 {
        return Err(config_error("d", "sphere dimension must be >= 1"));
    }
    let dim = cfg.d + 1;
    if cfg.n < 1 {
        return Err(config_error("N", "must be >= 1"));
    }
    finite("kappa", cfg.kappa)?;
    validate_omega("omega", &cfg.omega, dim)?;
    for (i, om) in cfg.omega_groups.iter().enumerate() {
        validate_omega(&format!("omega_groups[{i}]"), om, dim)?;
    }
    positive("dt", cfg.dt)?;
    if !(cfg.t_end >= 0.0 && cfg.t_end.is_finite()) {
        return Err(config_error("t_end", "must be finite and >= 0"));
    }
    if cfg.record_every < 1 {
        return Err(config_error("record_every", "must be >= 1"));
    }
    for p in &cfg.p_list {
        finite("p_list", *p)?;
    }
    if cfg.k < 2 {
        return Err(config_error("k", "cycle half-length must be >= 2"));
    }
    if cfg.m < 1 {
        return Err(config_error("m", "must be >= 1"));
    }
    if !(cfg.epsilon > 0.0 && cfg.epsilon < 2.0) {
        return Err(config_error("epsilon", "chordal radius must lie in (0, 2)"));
    }
    positive("delta", cfg.delta)?;
    match &cfg.field {
        FieldSpec::MeanField => {}
        FieldSpec::Frustrated { v } => {
            if v.len() != dim {
                return Err(config_error("field.v", format!("expected {dim} rows")));
            }
            for row in v {
                check_len("field.v", row, dim)?;
            }
        }
        FieldSpec::Winfree { pole } => {
            if let Some(p) = pole {
                check_len("field.pole", p, dim)?;
                if p.iter().all(|x| *x == 0.0) {
                    return Err(config_error("field.pole", "must be nonzero"));
                }
            }
        }
        FieldSpec::TimeDelay { tau } => {
            positive("field.tau", *tau)?;
            if *tau < cfg.dt {
                return Err(config_error("field.tau", "delay must be >= dt"));
            }
        }
        FieldSpec::Prescribed { a, b, frequency } => {
            check_len("field.a", a, dim)?;
            check_len("field.b", b, dim)?;
            finite("field.frequency", *frequency)?;
        }
    }
    if let InitSpec::Vmf { concentration, mu } = &cfg.init {
        if !(concentration.is_finite() && *concentration >= 0.0) {
            return Err(config_error("init.concentration", "must be finite and >= 0"));
        }
        if let Some(mu) = mu {
            check_len("init.mu", mu, dim)?;
            if mu.iter().all(|x| *x == 0.0) {
                return Err(config_error("init.mu", "must be nonzero"));
            }
        }
    }
    match cfg.experiment {
        Experiment::Functional => {
            if cfg.p_list.is_empty() {
                return Err(config_error("p_list", "need at least one exponent"));
            }
            if cfg.n < 2 * cfg.k {
                return Err(config_error("N", format!("need at least 2k = {} particles", 2 * cfg.k)));
            }
        }
        Experiment::Heterogeneous => {
            if cfg.omega_groups.len() < 2 {
                return Err(config_error("omega_groups", "need at least two groups"));
            }
            if cfg.n < cfg.omega_groups.len() {
                return Err(config_error("N", "need at least one particle per group"));
            }
        }
        Experiment::Existence => {
            if cfg.d_list.contains(&0) {
                return Err(config_error("d_list", "sphere dimensions must be >= 1"));
            }
        }
        _ => {}
    }
    let known = cfg.experiment.metrics();
    for (i, g) in cfg.gates.iter().enumerate() {
        if !known.contains(&g.metric.as_str()) {
            return Err(config_error(
                format!("gates[{i}].metric"),
                format!("`{}` is not reported by this experiment (known: {})", g.metric, known.join(", ")),
            ));
        }
        finite(&format!("gates[{i}].value"), g.value)?;
    }
    Ok(())
}

/// Canonical JSON of the resolved config: sorted keys, defaults filled in.
pub fn canonical_json(cfg: &ExperimentConfig) -> String {
    let value = serde_json::to_value(cfg).expect("config serializes");
    serde_json::to_string(&value).expect("value serializes")
}
