//! JSON experiment configurations with embedded acceptance thresholds.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::drift::DriftSurveySpec;
use super::{
    run_classical_scaling, run_drift_survey, run_occupation_experiment, run_scaling_experiment, ComparisonResult,
    DriftSurvey, HarnessError, Monotonicity, OccupationExperiment, ScalingSpec,
};
use crate::limits::{
    integrate_dominant_ode, integrate_mass_action_ode, triangle_regime_curves, AgazziCurves, CapHorizontal, LimitCurve,
    OdeOptions, TriangleRates, TriangleRegime, DEFAULT_DT,
};
use crate::network::ReactionNetwork;
use crate::parser::{parse_network, ModelSource};

/// Reference curve of a scaling experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum CurveReference {
    /// Triangle regime (a), (b) or (c); `x0` is α1 or β.
    Triangle {
        regime: TriangleRegime,
        rates: TriangleRates,
        #[serde(default)]
        x0: f64,
    },
    /// Mass-action ODE of the model from `x0`.
    MassActionOde {
        x0: Vec<f64>,
        #[serde(default = "default_dt")]
        dt: f64,
    },
    /// ODE of the reactions with largest source size.
    DominantOde {
        x0: Vec<f64>,
        #[serde(default = "default_dt")]
        dt: f64,
    },
    /// (y1, y2) of the auxiliary two-reaction process.
    AgazziY { p: u32, q: u32, k3: f64, k4: f64, delta: f64 },
    /// α1 (1 − t/t∞) on [0, t∞).
    CapHorizontal { k0: f64, k1: f64, k2: f64, k3: f64, alpha1: f64 },
}

fn default_dt() -> f64 {
    DEFAULT_DT
}

impl CurveReference {
    pub fn build(&self, net: &ReactionNetwork, horizon: f64) -> Result<LimitCurve, HarnessError> {
        Ok(match self {
            CurveReference::Triangle { regime, rates, x0 } => triangle_regime_curves(*regime, rates, *x0, horizon)?,
            CurveReference::MassActionOde { x0, dt } => {
                integrate_mass_action_ode(net, x0, &OdeOptions::new(horizon).with_dt(*dt))?
            }
            CurveReference::DominantOde { x0, dt } => {
                integrate_dominant_ode(net, x0, &OdeOptions::new(horizon).with_dt(*dt))?
            }
            CurveReference::AgazziY { p, q, k3, k4, delta } => AgazziCurves::new(*p, *q, *k3, *k4, *delta)?.y_curve(),
            CurveReference::CapHorizontal { k0, k1, k2, k3, alpha1 } => {
                CapHorizontal::new(*k0, *k1, *k2, *k3, *alpha1)?.linear_curve()
            }
        })
    }
}

/// Pass/fail conditions checked after a run. Absent fields are not checked.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Thresholds {
    /// Mean sup error at the largest N.
    pub max_final_sup_error: Option<f64>,
    /// Errors must be non-increasing in N within one stderr.
    #[serde(default)]
    pub require_non_increasing: bool,
    /// Mean scaled value of each compared coordinate at the horizon, at the
    /// largest N, with an absolute tolerance.
    pub final_value: Option<Vec<f64>>,
    pub final_value_tolerance: Option<f64>,
    /// TV distance at the largest N.
    pub max_tv: Option<f64>,
    /// KS test level at every N.
    pub ks_level: Option<f64>,
    /// Mean scaled excursion duration relative to this target.
    pub duration_target: Option<f64>,
    pub duration_rel_tolerance: Option<f64>,
    /// E f(X(τ)) / f(x) at every surveyed state.
    pub max_energy_ratio: Option<f64>,
    /// Mean energy change / mean τ at every surveyed state.
    pub max_drift_ratio: Option<f64>,
}

/// Body of a scaling or classical-scaling experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComparisonFile {
    pub model: PathBuf,
    pub spec: ScalingSpec,
    pub reference: CurveReference,
    #[serde(default)]
    pub thresholds: Thresholds,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OccupationFile {
    pub model: PathBuf,
    pub experiment: OccupationExperiment,
    #[serde(default)]
    pub thresholds: Thresholds,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriftFile {
    pub model: PathBuf,
    pub survey: DriftSurveySpec,
    #[serde(default)]
    pub thresholds: Thresholds,
}

/// An experiment file, selected by its `kind` field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ExperimentConfig {
    Scaling(ComparisonFile),
    Classical(ComparisonFile),
    Occupation(OccupationFile),
    Drift(DriftFile),
}

/// Error while loading a configuration.
#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: at `{field}`: {message}")]
    Schema { path: PathBuf, field: String, message: String },
    #[error("model {path}: {source}")]
    Model { path: PathBuf, source: crate::parser::ParseError },
}

/// Parses a configuration; model paths are resolved against the config's
/// directory.
pub fn load_experiment(path: &Path) -> Result<(ExperimentConfig, PathBuf), ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.into(), source })?;
    let schema = |field: &str, message: String| ConfigError::Schema { path: path.into(), field: field.into(), message };
    let mut value: serde_json::Value = serde_json::from_str(&text).map_err(|e| schema(".", e.to_string()))?;
    let kind = match value.as_object_mut().and_then(|o| o.remove("kind")) {
        Some(serde_json::Value::String(k)) => k,
        Some(_) => return Err(schema("kind", "expected a string".into())),
        None => return Err(schema("kind", "missing field".into())),
    };
    // Deserializing the body directly keeps the path of a failing field.
    fn body<T: serde::de::DeserializeOwned>(value: serde_json::Value) -> Result<T, (String, String)> {
        serde_path_to_error::deserialize(value).map_err(|e| (e.path().to_string(), e.inner().to_string()))
    }
    let config = match kind.as_str() {
        "scaling" => body(value).map(ExperimentConfig::Scaling),
        "classical" => body(value).map(ExperimentConfig::Classical),
        "occupation" => body(value).map(ExperimentConfig::Occupation),
        "drift" => body(value).map(ExperimentConfig::Drift),
        other => {
            return Err(schema(
                "kind",
                format!("unknown kind `{other}`, expected scaling, classical, occupation or drift"),
            ))
        }
    }
    .map_err(|(field, message)| schema(&field, message))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok((config, base))
}

fn load_model(base: &Path, model: &Path) -> Result<ReactionNetwork, ConfigError> {
    let path = base.join(model);
    let text = std::fs::read_to_string(&path).map_err(|source| ConfigError::Io { path: path.clone(), source })?;
    let name = path.display().to_string();
    parse_network(&ModelSource { text, name }).map_err(|source| ConfigError::Model { path, source })
}

/// What an experiment produced.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", content = "result", rename_all = "kebab-case")]
pub enum ExperimentResult {
    Comparison(ComparisonResult),
    Drift(DriftSurvey),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentOutcome {
    pub result: ExperimentResult,
    pub violations: Vec<String>,
    pub passed: bool,
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Harness(#[from] HarnessError),
}

/// Runs a loaded configuration and checks its thresholds.
pub fn run_experiment(config: &ExperimentConfig, base: &Path) -> Result<ExperimentOutcome, RunError> {
    let (result, thresholds) = match config {
        ExperimentConfig::Scaling(ComparisonFile { model, spec, reference, thresholds })
        | ExperimentConfig::Classical(ComparisonFile { model, spec, reference, thresholds }) => {
            let net = load_model(base, model)?;
            let curve = reference.build(&net, spec.horizon)?;
            let r = if matches!(config, ExperimentConfig::Scaling(_)) {
                run_scaling_experiment(&net, spec, &curve)?
            } else {
                run_classical_scaling(&net, spec, &curve)?
            };
            (ExperimentResult::Comparison(r), thresholds)
        }
        ExperimentConfig::Occupation(OccupationFile { model, experiment, thresholds }) => {
            let net = load_model(base, model)?;
            (ExperimentResult::Comparison(run_occupation_experiment(&net, experiment)?), thresholds)
        }
        ExperimentConfig::Drift(DriftFile { model, survey, thresholds }) => {
            let net = load_model(base, model)?;
            let s = run_drift_survey(&net, &survey.states, &survey.energy, &survey.rule, survey.replicas, &survey.sim)
                .map_err(RunError::Harness)?;
            (ExperimentResult::Drift(s), thresholds)
        }
    };
    let violations = check(&result, thresholds);
    Ok(ExperimentOutcome { passed: violations.is_empty(), result, violations })
}

fn check(result: &ExperimentResult, th: &Thresholds) -> Vec<String> {
    let mut v = Vec::new();
    match result {
        ExperimentResult::Comparison(c) => {
            let last = c.last();
            if let Some(max) = th.max_final_sup_error {
                match last.sup_error {
                    Some(e) if e.mean < max => {}
                    Some(e) => v.push(format!("sup error {:.4} at N = {} is not below {max}", e.mean, last.n)),
                    None => v.push("no sup error computed".into()),
                }
            }
            if th.require_non_increasing && c.monotonicity != Monotonicity::NonIncreasing {
                v.push(format!("errors are not non-increasing in N ({:?})", c.monotonicity));
            }
            if let Some(target) = &th.final_value {
                let tol = th.final_value_tolerance.unwrap_or(0.0);
                for (k, (want, got)) in target.iter().zip(&last.final_scaled).enumerate() {
                    if (got.mean - want).abs() > tol {
                        v.push(format!("coordinate {k} at the horizon is {:.4}, expected {want} ± {tol}", got.mean));
                    }
                }
            }
            if let Some(max) = th.max_tv {
                match last.tv {
                    Some(tv) if tv < max => {}
                    other => v.push(format!("TV {other:?} at N = {} is not below {max}", last.n)),
                }
            }
            if let Some(level) = th.ks_level {
                for p in &c.per_n {
                    if let Some(ks) = p.ks {
                        if !ks.passes(level) {
                            v.push(format!("KS test at N = {} rejects (p = {:.4})", p.n, ks.p_value));
                        }
                    }
                }
            }
            if let (Some(target), Some(tol)) = (th.duration_target, th.duration_rel_tolerance) {
                for p in &c.per_n {
                    if let Some(d) = p.duration {
                        if ((d.mean - target) / target).abs() > tol {
                            v.push(format!("mean duration {:.4} at N = {} not within {tol} of {target}", d.mean, p.n));
                        }
                    }
                }
            }
        }
        ExperimentResult::Drift(s) => {
            for row in &s.rows {
                if let Some(max) = th.max_energy_ratio {
                    if row.energy_ratio >= max {
                        v.push(format!("energy ratio {:.4} at {:?} is not below {max}", row.energy_ratio, row.state.0));
                    }
                }
                if let Some(max) = th.max_drift_ratio {
                    if row.estimate.drift_ratio >= max {
                        v.push(format!(
                            "drift ratio {:.4} at {:?} is not below {max}",
                            row.estimate.drift_ratio, row.state.0
                        ));
                    }
                }
            }
        }
    }
    v
}
