//! Occupation experiments: stationary state laws by TV distance and
//! excursion laws of the vertical-axis regime by KS tests.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{ComparisonResult, HarnessError, InitialFamily, PerN, TimeScaling, MAX_EXCLUDED_FRACTION};
use crate::limits::conditioned_poisson;
use crate::network::ReactionNetwork;
use crate::rng::{replica_stream, stream_rng};
use crate::sim::{
    run_observed, Control, Kinetics, Observer, OccupationObserver, OccupationSpec, SimError, StatePredicate,
    Termination, DEFAULT_MAX_EVENTS,
};
use crate::stats::{exp_cdf, ks_test, mean_se};

/// Fewer excursions than this in total raises a flag.
pub const MIN_EXCURSIONS: usize = 20;
/// Mass of the reference kept for the TV support.
pub const TV_SUPPORT_MASS: f64 = 0.999;

/// Excursions of the first coordinate above `p − 1`: an excursion ends when
/// x1 jumps from p to p − 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExcursionSpec {
    pub p: u64,
    pub r1: f64,
    pub delta1: f64,
    /// Index of the coordinate that is p near the end of an excursion.
    #[serde(default)]
    pub fast: usize,
    /// Index of the decaying coordinate.
    #[serde(default = "one_index")]
    pub slow: usize,
    #[serde(default = "one_count")]
    pub excursions_per_replica: usize,
}

fn one_index() -> usize {
    1
}

fn one_count() -> usize {
    1
}

/// What the empirical occupation is compared with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum OccupationReference {
    /// Poisson(ρ) conditioned on being ≥ 1.
    ConditionedPoisson { rho: f64 },
    /// Explicit probabilities per projected value.
    Distribution { probabilities: BTreeMap<u64, f64> },
    /// −ln(X_slow(T_{k+1})/X_slow(T_k))/δ1 against Exp(1), and excursion
    /// durations scaled by X_slow(T_k)^{p−1} against mean 1/r1.
    JumpProcess(ExcursionSpec),
}

/// An occupation experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupationExperiment {
    pub initial: InitialFamily,
    pub n_values: Vec<u64>,
    pub replicas: usize,
    pub seed: u64,
    /// Projected coordinate (stationary references).
    #[serde(default)]
    pub projection: usize,
    #[serde(default = "unscaled")]
    pub time: TimeScaling,
    /// Scaled horizon for stationary references; a raw time cap for
    /// excursion references.
    pub horizon: f64,
    /// States removed from the clock.
    #[serde(default)]
    pub skip: Option<StatePredicate>,
    #[serde(default = "default_max_events")]
    pub max_events: u64,
    pub reference: OccupationReference,
}

fn unscaled() -> TimeScaling {
    TimeScaling::unscaled()
}

fn default_max_events() -> u64 {
    DEFAULT_MAX_EVENTS
}

impl OccupationExperiment {
    fn validate(&self, n_species: usize) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Spec(m));
        if self.initial.0.len() != n_species {
            return bad(format!("initial family has {} coordinates, network has {n_species}", self.initial.0.len()));
        }
        if self.n_values.is_empty() || self.replicas == 0 {
            return bad("need at least one N and one replica".into());
        }
        if self.projection >= n_species {
            return bad(format!("projection {} out of range", self.projection));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return bad(format!("horizon must be positive, got {}", self.horizon));
        }
        match &self.reference {
            OccupationReference::ConditionedPoisson { rho } if !(*rho > 0.0) => {
                bad(format!("rho must be positive, got {rho}"))
            }
            OccupationReference::Distribution { probabilities } => {
                let total: f64 = probabilities.values().sum();
                if probabilities.values().any(|&p| p < 0.0) || (total - 1.0).abs() > 1e-6 {
                    return bad(format!("reference probabilities must be non-negative and sum to 1 (sum {total})"));
                }
                Ok(())
            }
            OccupationReference::JumpProcess(e) => {
                if e.p == 0 || e.fast >= n_species || e.slow >= n_species || e.excursions_per_replica == 0 {
                    return bad("invalid excursion spec".into());
                }
                if !(e.r1 > 0.0 && e.delta1 > 0.0) {
                    return bad("r1 and delta1 must be positive".into());
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

/// TV distance on the smallest set of most likely reference values holding
/// at least 99.9% of the reference mass. Empirical mass outside that set
/// counts in full. Returns (tv, reference mass left out).
pub fn tv_on_reference_support(empirical: &BTreeMap<u64, f64>, reference: &BTreeMap<u64, f64>) -> (f64, f64) {
    let total: f64 = empirical.values().sum();
    let mut by_mass: Vec<(u64, f64)> = reference.iter().map(|(&k, &v)| (k, v)).collect();
    by_mass.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let mut support = BTreeMap::new();
    let mut kept = 0.0;
    for (k, v) in by_mass {
        if kept >= TV_SUPPORT_MASS {
            break;
        }
        support.insert(k, v);
        kept += v;
    }
    let e = |k: &u64| empirical.get(k).copied().unwrap_or(0.0) / total;
    let inside: f64 = support.iter().map(|(k, &r)| (e(k) - r).abs()).sum();
    let outside: f64 = empirical.keys().filter(|k| !support.contains_key(k)).map(e).sum();
    (0.5 * (inside + outside), (1.0 - kept).max(0.0))
}

fn reference_table(r: &OccupationReference, observed: &BTreeMap<u64, f64>) -> BTreeMap<u64, f64> {
    match r {
        OccupationReference::ConditionedPoisson { rho } => {
            let max = observed.keys().last().copied().unwrap_or(0).max((rho * 10.0) as u64 + 30);
            (1..=max).map(|x| (x, conditioned_poisson(*rho, x))).collect()
        }
        OccupationReference::Distribution { probabilities } => probabilities.clone(),
        OccupationReference::JumpProcess(_) => unreachable!("excursion references have no table"),
    }
}

struct ExcursionObserver {
    spec: ExcursionSpec,
    start: Option<(f64, u64)>,
    ratios: Vec<f64>,
    durations: Vec<f64>,
}

impl Observer for ExcursionObserver {
    fn on_start(&mut self, x: &[u64]) -> Control {
        self.start = Some((0.0, x[self.spec.slow]));
        Control::Continue
    }

    fn on_jump(&mut self, t: f64, _r: usize, before: &[u64], after: &[u64]) -> Control {
        let p = self.spec.p;
        if before[self.spec.fast] == p && after[self.spec.fast] == p - 1 {
            let (t0, v0) = self.start.expect("started");
            let v1 = after[self.spec.slow];
            self.ratios.push(v1 as f64 / v0 as f64);
            self.durations.push((t - t0) / (v0 as f64).powi(p as i32 - 1));
            self.start = Some((t, v1));
            if self.ratios.len() == self.spec.excursions_per_replica || v1 == 0 {
                return Control::Stop;
            }
        }
        Control::Continue
    }
}

fn exclusion_check(n: u64, excluded: usize, replicas: usize) -> Result<(), HarnessError> {
    if excluded as f64 > MAX_EXCLUDED_FRACTION * replicas as f64 {
        return Err(HarnessError::TooManyExcluded { n, excluded, replicas });
    }
    Ok(())
}

/// Runs the occupation experiment at each N.
///
/// Stationary references: the projected occupation measures of all replicas
/// are pooled and compared by [`tv_on_reference_support`]. Replicas that do
/// not reach the horizon are excluded.
///
/// Excursion references: each replica records up to
/// `excursions_per_replica` excursions; replicas with none are excluded.
pub fn run_occupation_experiment(
    net: &ReactionNetwork,
    exp: &OccupationExperiment,
) -> Result<ComparisonResult, HarnessError> {
    exp.validate(net.n_species())?;
    let kin = Kinetics::new(net);
    let mut per_n = Vec::new();
    let mut flags = Vec::new();
    for (ni, &n) in exp.n_values.iter().enumerate() {
        let x0 = exp.initial.at(n);
        let mut row = PerN::empty(n, exp.replicas);
        match &exp.reference {
            OccupationReference::JumpProcess(spec) => {
                let runs: Vec<(Vec<f64>, Vec<f64>, u64)> = (0..exp.replicas)
                    .into_par_iter()
                    .map(|r| {
                        let mut rng = stream_rng(exp.seed, replica_stream(ni, r));
                        let mut obs = ExcursionObserver { spec: *spec, start: None, ratios: vec![], durations: vec![] };
                        let s = run_observed(&kin, &x0.0, exp.horizon, exp.max_events, &mut rng, &mut obs)?;
                        Ok::<_, SimError>((obs.ratios, obs.durations, s.event_count))
                    })
                    .collect::<Result<_, _>>()?;
                let excluded = runs.iter().filter(|r| r.0.is_empty()).count();
                exclusion_check(n, excluded, exp.replicas)?;
                let transformed: Vec<f64> =
                    runs.iter().flat_map(|r| r.0.iter().map(|q| -q.ln() / spec.delta1)).collect();
                let durations: Vec<f64> = runs.iter().flat_map(|r| r.1.iter().copied()).collect();
                if transformed.len() < MIN_EXCURSIONS {
                    flags.push(format!("N = {n}: only {} excursions (fewer than {MIN_EXCURSIONS})", transformed.len()));
                }
                row.excluded = excluded;
                row.excursions = Some(transformed.len());
                row.ks = Some(ks_test(&transformed, exp_cdf(1.0)));
                row.duration = Some(mean_se(&durations));
                row.events = runs.iter().map(|r| r.2).sum();
            }
            reference => {
                let factor = exp.time.factor(n);
                let spec = OccupationSpec {
                    skip: exp.skip.clone(),
                    ..OccupationSpec::new(exp.projection, factor, 1.0, exp.horizon)
                };
                let raw_cap = f64::MAX;
                let runs: Vec<(Option<BTreeMap<u64, f64>>, u64)> = (0..exp.replicas)
                    .into_par_iter()
                    .map(|r| {
                        let mut rng = stream_rng(exp.seed, replica_stream(ni, r));
                        let mut obs = OccupationObserver::new(spec.clone());
                        let s = run_observed(&kin, &x0.0, raw_cap, exp.max_events, &mut rng, &mut obs)?;
                        let m = obs.finish(s.termination, s.event_count);
                        let ok = m.complete && s.termination != Termination::EventLimit;
                        Ok::<_, SimError>((ok.then(|| m.state_marginal()), s.event_count))
                    })
                    .collect::<Result<_, _>>()?;
                let excluded = runs.iter().filter(|r| r.0.is_none()).count();
                exclusion_check(n, excluded, exp.replicas)?;
                let mut pooled = BTreeMap::new();
                for (m, _) in &runs {
                    for (&v, &w) in m.iter().flatten() {
                        *pooled.entry(v).or_insert(0.0) += w;
                    }
                }
                let table = reference_table(reference, &pooled);
                let (tv, leak) = tv_on_reference_support(&pooled, &table);
                row.excluded = excluded;
                row.tv = Some(tv);
                row.tv_leak = Some(leak);
                row.events = runs.iter().map(|r| r.1).sum();
            }
        }
        per_n.push(row);
    }
    Ok(ComparisonResult::new("occupation", per_n, flags))
}
