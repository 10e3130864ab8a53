//! Scaling experiments: replica ensembles at increasing N, scaled and
//! compared with limit curves or limit distributions.

mod config;
mod drift;
mod occupation;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::limits::{LimitCurve, LimitError};
use crate::network::{CoreError, ReactionNetwork, StateVector};
use crate::rng::{replica_stream, stream_rng};
use crate::sim::{run_observed, Control, Kinetics, Observer, SimError, Termination, DEFAULT_MAX_EVENTS};
use crate::stats::{mean_se, KsResult, MeanSe};

pub use config::{
    load_experiment, run_experiment, ComparisonFile, ConfigError, CurveReference, DriftFile, ExperimentConfig,
    ExperimentOutcome, ExperimentResult, OccupationFile, RunError, Thresholds,
};
pub use drift::{run_drift_survey, DriftRow, DriftSurvey, DriftSurveySpec};
pub use occupation::{
    run_occupation_experiment, tv_on_reference_support, ExcursionSpec, OccupationExperiment, OccupationReference,
};

/// Number of comparison grid points on `[horizon/200, horizon]`.
pub const GRID_POINTS: usize = 200;
/// Largest tolerated fraction of excluded replicas per N.
pub const MAX_EXCLUDED_FRACTION: f64 = 0.1;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid experiment: {0}")]
    Spec(String),
    #[error("N = {n}: {excluded} of {replicas} replicas hit a limit (more than 10%)")]
    TooManyExcluded { n: u64, excluded: usize, replicas: usize },
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Limit(#[from] LimitError),
    #[error(transparent)]
    Core(#[from] CoreError),
}

/// One coordinate of an initial-state family: ⌊coef · N^power⌋ + offset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitialTerm {
    #[serde(default)]
    pub coef: f64,
    #[serde(default = "one")]
    pub power: f64,
    #[serde(default)]
    pub offset: u64,
}

fn one() -> f64 {
    1.0
}

impl InitialTerm {
    pub fn linear(coef: f64) -> Self {
        InitialTerm { coef, power: 1.0, offset: 0 }
    }

    pub fn constant(offset: u64) -> Self {
        InitialTerm { coef: 0.0, power: 0.0, offset }
    }

    pub fn at(&self, n: u64) -> u64 {
        (self.coef * (n as f64).powf(self.power)).floor() as u64 + self.offset
    }
}

/// Initial state as a function of N.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct InitialFamily(pub Vec<InitialTerm>);

impl InitialFamily {
    pub fn at(&self, n: u64) -> StateVector {
        StateVector(self.0.iter().map(|t| t.at(n)).collect())
    }
}

/// How scaled time maps to raw simulation time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TimeConvention {
    /// Raw time t · N^β per scaled time t (the process is observed at N^β t).
    SlowDown,
    /// Raw time t / N^β per scaled time t (the process is observed at t/N^β).
    SpeedUp,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeScaling {
    pub convention: TimeConvention,
    pub beta: f64,
}

impl TimeScaling {
    pub fn unscaled() -> Self {
        TimeScaling { convention: TimeConvention::SpeedUp, beta: 0.0 }
    }

    /// Raw time units per unit of scaled time.
    pub fn factor(&self, n: u64) -> f64 {
        let s = (n as f64).powf(self.beta);
        match self.convention {
            TimeConvention::SlowDown => s,
            TimeConvention::SpeedUp => 1.0 / s,
        }
    }
}

/// A family of scaled processes indexed by N.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingSpec {
    pub initial: InitialFamily,
    /// Coordinate i is divided by N^{space_exponents[i]}.
    pub space_exponents: Vec<f64>,
    pub time: TimeScaling,
    pub n_values: Vec<u64>,
    pub replicas: usize,
    /// Horizon in scaled time.
    pub horizon: f64,
    /// Coordinates compared with the reference components, in order;
    /// defaults to all coordinates.
    #[serde(default)]
    pub compare: Option<Vec<usize>>,
    pub seed: u64,
    #[serde(default = "default_max_events")]
    pub max_events: u64,
}

fn default_max_events() -> u64 {
    DEFAULT_MAX_EVENTS
}

impl ScalingSpec {
    fn compared(&self) -> Vec<usize> {
        self.compare.clone().unwrap_or_else(|| (0..self.initial.0.len()).collect())
    }

    pub fn validate(&self, n_species: usize) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Spec(m));
        if self.initial.0.len() != n_species {
            return bad(format!(
                "initial family has {} coordinates, network has {n_species} species",
                self.initial.0.len()
            ));
        }
        if self.space_exponents.len() != n_species {
            return bad(format!(
                "space_exponents has {} entries, network has {n_species} species",
                self.space_exponents.len()
            ));
        }
        if self.n_values.is_empty() {
            return bad("n_values is empty".into());
        }
        if self.n_values.windows(2).any(|w| w[0] >= w[1]) {
            return bad("n_values must be strictly increasing".into());
        }
        if self.replicas == 0 {
            return bad("replicas must be ≥ 1".into());
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return bad(format!("horizon must be positive, got {}", self.horizon));
        }
        if self.max_events == 0 {
            return bad("max_events must be positive".into());
        }
        if let Some(c) = &self.compare {
            if c.is_empty() || c.iter().any(|&i| i >= n_species) {
                return bad(format!("compare indices {c:?} out of range"));
            }
        }
        Ok(())
    }

    /// `GRID_POINTS` evenly spaced scaled times on `[h/200, h]`.
    pub fn grid(&self) -> Vec<f64> {
        (1..=GRID_POINTS).map(|j| self.horizon * j as f64 / GRID_POINTS as f64).collect()
    }
}

/// Whether the per-N errors decrease.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Monotonicity {
    /// Each error is at most the previous one plus one combined stderr.
    NonIncreasing,
    Increasing,
    InsufficientData,
}

/// Results at one N.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PerN {
    pub n: u64,
    pub replicas: usize,
    pub excluded: usize,
    /// Sup over the grid and compared coordinates of |scaled − reference|.
    pub sup_error: Option<MeanSe>,
    /// Scaled compared coordinates at the horizon.
    pub final_scaled: Vec<MeanSe>,
    pub tv: Option<f64>,
    /// Reference mass outside the support used for the TV distance.
    pub tv_leak: Option<f64>,
    pub ks: Option<KsResult>,
    /// Scaled excursion durations.
    pub duration: Option<MeanSe>,
    pub excursions: Option<usize>,
    pub events: u64,
}

impl PerN {
    fn empty(n: u64, replicas: usize) -> Self {
        PerN {
            n,
            replicas,
            excluded: 0,
            sup_error: None,
            final_scaled: Vec::new(),
            tv: None,
            tv_leak: None,
            ks: None,
            duration: None,
            excursions: None,
            events: 0,
        }
    }

    fn headline(&self) -> Option<(f64, f64)> {
        if let Some(e) = self.sup_error {
            return Some((e.mean, e.stderr));
        }
        self.tv.map(|t| (t, 0.0)).or(self.ks.map(|k| (k.statistic, 0.0)))
    }
}

/// Outcome of a harness run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonResult {
    pub experiment: String,
    pub per_n: Vec<PerN>,
    pub monotonicity: Monotonicity,
    /// Non-fatal conditions worth a look, such as too few excursions.
    pub flags: Vec<String>,
}

impl ComparisonResult {
    fn new(experiment: &str, per_n: Vec<PerN>, flags: Vec<String>) -> Self {
        let monotonicity = monotonicity(&per_n);
        ComparisonResult { experiment: experiment.into(), per_n, monotonicity, flags }
    }

    pub fn last(&self) -> &PerN {
        self.per_n.last().expect("at least one N")
    }

    /// Per-N table as CSV.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "n",
            "replicas",
            "excluded",
            "sup_error",
            "sup_error_stderr",
            "tv",
            "tv_leak",
            "ks_statistic",
            "ks_p_value",
            "duration_mean",
            "duration_stderr",
            "events",
        ])?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for p in &self.per_n {
            w.write_record([
                p.n.to_string(),
                p.replicas.to_string(),
                p.excluded.to_string(),
                opt(p.sup_error.map(|e| e.mean)),
                opt(p.sup_error.map(|e| e.stderr)),
                opt(p.tv),
                opt(p.tv_leak),
                opt(p.ks.map(|k| k.statistic)),
                opt(p.ks.map(|k| k.p_value)),
                opt(p.duration.map(|d| d.mean)),
                opt(p.duration.map(|d| d.stderr)),
                p.events.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn monotonicity(per_n: &[PerN]) -> Monotonicity {
    let heads: Vec<(f64, f64)> = per_n.iter().filter_map(PerN::headline).collect();
    if heads.len() < 2 {
        return Monotonicity::InsufficientData;
    }
    let ok = heads.windows(2).all(|w| w[1].0 <= w[0].0 + (w[0].1.powi(2) + w[1].1.powi(2)).sqrt());
    if ok {
        Monotonicity::NonIncreasing
    } else {
        Monotonicity::Increasing
    }
}

/// Records the state at prescribed raw times.
struct GridObserver<'a> {
    times: &'a [f64],
    next: usize,
    states: Vec<Vec<u64>>,
}

impl Observer for GridObserver<'_> {
    fn deadline(&self) -> f64 {
        self.times.get(self.next).copied().unwrap_or(f64::INFINITY)
    }

    fn on_deadline(&mut self, _t: f64, x: &[u64]) -> Control {
        self.states.push(x.to_vec());
        self.next += 1;
        if self.next == self.times.len() {
            Control::Stop
        } else {
            Control::Continue
        }
    }

    fn on_jump(&mut self, _t: f64, _r: usize, _before: &[u64], _after: &[u64]) -> Control {
        Control::Continue
    }
}

/// Replica outcome on the comparison grid; `None` when a limit cut it short.
struct GridRun {
    states: Option<Vec<Vec<u64>>>,
    events: u64,
}

fn run_grid(
    kin: &Kinetics,
    x0: &[u64],
    raw_times: &[f64],
    max_events: u64,
    seed: u64,
    stream: u64,
) -> Result<GridRun, SimError> {
    let mut rng = stream_rng(seed, stream);
    let mut obs = GridObserver { times: raw_times, next: 0, states: Vec::with_capacity(raw_times.len()) };
    let horizon = *raw_times.last().expect("non-empty grid");
    let summary = run_observed(kin, x0, horizon, max_events, &mut rng, &mut obs)?;
    let complete = obs.states.len() == raw_times.len() && summary.termination != Termination::EventLimit;
    Ok(GridRun { states: complete.then_some(obs.states), events: summary.event_count })
}

/// Shared engine of the scaling experiments. `network_at(N)` supplies the
/// network simulated at size N.
fn scaling_core(
    label: &str,
    network_at: &(dyn Fn(u64) -> Result<ReactionNetwork, HarnessError> + Sync),
    spec: &ScalingSpec,
    reference: &LimitCurve,
) -> Result<ComparisonResult, HarnessError> {
    let compared = spec.compared();
    if reference.dim() != compared.len() {
        return Err(HarnessError::Spec(format!(
            "reference has {} components, {} coordinates compared",
            reference.dim(),
            compared.len()
        )));
    }
    if !reference.in_domain(spec.horizon) {
        return Err(HarnessError::Spec(format!(
            "reference domain ends at {} before the horizon {}",
            reference.t_end, spec.horizon
        )));
    }
    let grid = spec.grid();
    let ref_values: Vec<Vec<f64>> = grid.iter().map(|&t| reference.eval(t)).collect::<Result<_, _>>()?;
    let mut per_n = Vec::new();
    for (ni, &n) in spec.n_values.iter().enumerate() {
        let net = network_at(n)?;
        spec.validate(net.n_species())?;
        let kin = Kinetics::new(&net);
        let x0 = spec.initial.at(n);
        let factor = spec.time.factor(n);
        let raw: Vec<f64> = grid.iter().map(|t| t * factor).collect();
        let scale: Vec<f64> = compared.iter().map(|&i| (n as f64).powf(spec.space_exponents[i])).collect();
        let runs: Vec<GridRun> = (0..spec.replicas)
            .into_par_iter()
            .map(|r| run_grid(&kin, &x0.0, &raw, spec.max_events, spec.seed, replica_stream(ni, r)))
            .collect::<Result<_, _>>()?;
        let mut errors = Vec::new();
        let mut finals: Vec<Vec<f64>> = vec![Vec::new(); compared.len()];
        let mut events = 0;
        for run in &runs {
            events += run.events;
            let Some(states) = &run.states else { continue };
            let mut sup: f64 = 0.0;
            for (state, rv) in states.iter().zip(&ref_values) {
                for (k, &i) in compared.iter().enumerate() {
                    sup = sup.max((state[i] as f64 / scale[k] - rv[k]).abs());
                }
            }
            errors.push(sup);
            let last = states.last().expect("complete grid");
            for (k, &i) in compared.iter().enumerate() {
                finals[k].push(last[i] as f64 / scale[k]);
            }
        }
        let excluded = spec.replicas - errors.len();
        if excluded as f64 > MAX_EXCLUDED_FRACTION * spec.replicas as f64 {
            return Err(HarnessError::TooManyExcluded { n, excluded, replicas: spec.replicas });
        }
        let mut row = PerN::empty(n, spec.replicas);
        row.excluded = excluded;
        row.sup_error = Some(mean_se(&errors));
        row.final_scaled = finals.iter().map(|v| mean_se(v)).collect();
        row.events = events;
        per_n.push(row);
    }
    Ok(ComparisonResult::new(label, per_n, Vec::new()))
}

/// Simulates `spec.replicas` replicas per N to the raw horizon, scales
/// coordinate i by N^{−α_i} and time per `spec.time`, and measures the sup
/// distance to `reference` on the comparison grid.
///
/// Replicas that hit the event limit are excluded and counted; more than
/// 10% excluded at any N is an error.
pub fn run_scaling_experiment(
    net: &ReactionNetwork,
    spec: &ScalingSpec,
    reference: &LimitCurve,
) -> Result<ComparisonResult, HarnessError> {
    spec.validate(net.n_species())?;
    scaling_core("scaling", &|_| Ok(net.clone()), spec, reference)
}

/// κ_r / N^{‖y_r⁻‖ − 1} applied to every reaction.
pub fn classical_rates(net: &ReactionNetwork, n: u64) -> Result<ReactionNetwork, CoreError> {
    net.map_rates(|_, r| r.rate / (n as f64).powi(r.source.size() as i32 - 1))
}

/// Classical (density-dependent) scaling: rates rescaled by
/// [`classical_rates`], unscaled time, every coordinate divided by N.
/// The time and space fields of `spec` are overridden accordingly.
pub fn run_classical_scaling(
    net: &ReactionNetwork,
    spec: &ScalingSpec,
    reference: &LimitCurve,
) -> Result<ComparisonResult, HarnessError> {
    let mut spec = spec.clone();
    spec.time = TimeScaling::unscaled();
    spec.space_exponents = vec![1.0; net.n_species()];
    spec.validate(net.n_species())?;
    scaling_core("classical", &|n| Ok(classical_rates(net, n)?), &spec, reference)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::limits::{integrate_mass_action_ode, triangle_regime_curves, OdeOptions, TriangleRates, TriangleRegime};
    use crate::parser::parse_str;

    fn t1() -> ReactionNetwork {
        parse_str("S1 -> S2 @ 1\nS2 -> S1 + S2 @ 1\nS1 + S2 -> S1 @ 1\n").unwrap()
    }

    fn regime_a_spec(n_values: Vec<u64>, replicas: usize) -> ScalingSpec {
        ScalingSpec {
            initial: InitialFamily(vec![InitialTerm::linear(0.5), InitialTerm::linear(0.5)]),
            space_exponents: vec![1.0, 1.0],
            time: TimeScaling { convention: TimeConvention::SpeedUp, beta: 1.0 },
            n_values,
            replicas,
            horizon: 2.0,
            compare: None,
            seed: 17,
            max_events: DEFAULT_MAX_EVENTS,
        }
    }

    #[test]
    fn initial_family_and_time_factor() {
        let f = InitialFamily(vec![
            InitialTerm::linear(0.5),
            InitialTerm::constant(3),
            InitialTerm { coef: 2.0, power: 0.5, offset: 1 },
        ]);
        assert_eq!(f.at(100).0, vec![50, 3, 21]);
        assert_eq!(TimeScaling { convention: TimeConvention::SlowDown, beta: 1.0 }.factor(10), 10.0);
        assert_eq!(TimeScaling { convention: TimeConvention::SpeedUp, beta: 2.0 }.factor(10), 0.01);
    }

    #[test]
    fn regime_a_errors_shrink_and_are_reproducible() {
        let net = t1();
        let reference =
            triangle_regime_curves(TriangleRegime::A, &TriangleRates { k1: 1.0, k2: 1.0, k12: 1.0 }, 0.5, 2.0).unwrap();
        let spec = regime_a_spec(vec![100, 2000], 8);
        let a = run_scaling_experiment(&net, &spec, &reference).unwrap();
        let b = run_scaling_experiment(&net, &spec, &reference).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.monotonicity, Monotonicity::NonIncreasing);
        assert!(a.last().sup_error.unwrap().mean < 0.1, "{a:?}");
    }

    #[test]
    fn single_n_gives_insufficient_data() {
        let net = t1();
        let reference =
            triangle_regime_curves(TriangleRegime::A, &TriangleRates { k1: 1.0, k2: 1.0, k12: 1.0 }, 0.5, 2.0).unwrap();
        let r = run_scaling_experiment(&net, &regime_a_spec(vec![50], 2), &reference).unwrap();
        assert_eq!(r.monotonicity, Monotonicity::InsufficientData);
        assert!(r.per_n[0].sup_error.unwrap().mean >= 0.0);
    }

    #[test]
    fn event_limit_exclusion_is_loud() {
        let net = t1();
        let reference =
            triangle_regime_curves(TriangleRegime::A, &TriangleRates { k1: 1.0, k2: 1.0, k12: 1.0 }, 0.5, 2.0).unwrap();
        let mut spec = regime_a_spec(vec![1000], 4);
        spec.max_events = 10;
        let err = run_scaling_experiment(&net, &spec, &reference).unwrap_err();
        assert!(matches!(err, HarnessError::TooManyExcluded { excluded: 4, .. }));
    }

    #[test]
    fn classical_scaling_of_mm_infinity() {
        let net = parse_str("0 <-> S1 @ 1, 1").unwrap();
        let scaled = classical_rates(&net, 100).unwrap();
        assert_eq!(scaled.reactions()[0].rate, 100.0);
        assert_eq!(scaled.reactions()[1].rate, 1.0);
        let spec = ScalingSpec {
            initial: InitialFamily(vec![InitialTerm::linear(3.0)]),
            space_exponents: vec![1.0],
            time: TimeScaling::unscaled(),
            n_values: vec![100, 3000],
            replicas: 8,
            horizon: 3.0,
            compare: None,
            seed: 5,
            max_events: DEFAULT_MAX_EVENTS,
        };
        let reference = integrate_mass_action_ode(&net, &[3.0], &OdeOptions::new(3.0)).unwrap();
        let r = run_classical_scaling(&net, &spec, &reference).unwrap();
        assert!(r.last().sup_error.unwrap().mean < 0.05, "{r:?}");
    }

    #[test]
    fn reference_domain_must_cover_horizon() {
        let net = parse_str("0 <-> S1 @ 1, 1").unwrap();
        let reference = integrate_mass_action_ode(&net, &[1.0], &OdeOptions::new(1.0)).unwrap();
        let mut spec = regime_a_spec(vec![10], 2);
        spec.initial = InitialFamily(vec![InitialTerm::linear(1.0)]);
        spec.space_exponents = vec![1.0];
        assert!(run_scaling_experiment(&net, &spec, &reference).is_err());
    }
}
