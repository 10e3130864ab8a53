//! Scaled occupation measures of one projected coordinate.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{run_observed, Control, Kinetics, Observer, SimConfig, SimError, StatePredicate, Termination};
use crate::network::{ReactionNetwork, StateVector};
use crate::rng::stream_rng;

/// What to accumulate.
///
/// Time on the measure's axis is `s / time_scale` and a sojourn of length
/// `ds` carries mass `ds / time_scale`. Sojourns in states matching `skip`
/// are removed from the clock altogether (time change).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupationSpec {
    pub projection: usize,
    pub time_scale: f64,
    pub space_scale: f64,
    /// Scaled horizon; accumulation stops when the scaled clock reaches it.
    pub horizon: f64,
    /// Width of the time bins, in scaled time.
    pub time_bin: f64,
    #[serde(default)]
    pub skip: Option<StatePredicate>,
}

impl OccupationSpec {
    pub fn new(projection: usize, time_scale: f64, space_scale: f64, horizon: f64) -> Self {
        OccupationSpec { projection, time_scale, space_scale, horizon, time_bin: horizon, skip: None }
    }

    fn validate(&self, n: usize) -> Result<(), SimError> {
        if self.projection >= n {
            return Err(SimError::Config(format!("projection {} out of range ({n} species)", self.projection)));
        }
        for (name, v) in [
            ("time_scale", self.time_scale),
            ("space_scale", self.space_scale),
            ("horizon", self.horizon),
            ("time_bin", self.time_bin),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(SimError::Config(format!("{name} must be positive and finite, got {v}")));
            }
        }
        Ok(())
    }
}

/// Histogram over (time bin × raw projected value) of scaled sojourn time.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OccupationMeasure {
    pub time_bin: f64,
    pub space_scale: f64,
    /// `bins[k][v]`: mass at projected value v during scaled times
    /// `[k·time_bin, (k+1)·time_bin)`.
    pub bins: Vec<BTreeMap<u64, f64>>,
    pub total_mass: f64,
    /// Whether the scaled clock reached the horizon.
    pub complete: bool,
    pub termination: Termination,
    pub event_count: u64,
}

impl OccupationMeasure {
    /// Mass per projected value, summed over time.
    pub fn state_marginal(&self) -> BTreeMap<u64, f64> {
        let mut out = BTreeMap::new();
        for bin in &self.bins {
            for (&v, &m) in bin {
                *out.entry(v).or_insert(0.0) += m;
            }
        }
        out
    }

    /// Mass per time bin.
    pub fn time_marginal(&self) -> Vec<f64> {
        self.bins.iter().map(|b| b.values().sum()).collect()
    }

    /// State marginal on the scaled axis `v / space_scale`.
    pub fn scaled_marginal(&self) -> Vec<(f64, f64)> {
        self.state_marginal().into_iter().map(|(v, m)| (v as f64 / self.space_scale, m)).collect()
    }
}

/// Observer accumulating an [`OccupationMeasure`].
#[derive(Debug, Clone)]
pub struct OccupationObserver {
    spec: OccupationSpec,
    bins: Vec<BTreeMap<u64, f64>>,
    /// Unscaled conditioned clock.
    clock: f64,
    t_last: f64,
    value: u64,
    skipping: bool,
    total: f64,
}

impl OccupationObserver {
    pub fn new(spec: OccupationSpec) -> Self {
        let n_bins = (spec.horizon / spec.time_bin).ceil().max(1.0) as usize;
        OccupationObserver {
            spec,
            bins: vec![BTreeMap::new(); n_bins],
            clock: 0.0,
            t_last: 0.0,
            value: 0,
            skipping: false,
            total: 0.0,
        }
    }

    fn limit(&self) -> f64 {
        self.spec.horizon * self.spec.time_scale
    }

    fn set_state(&mut self, x: &[u64]) {
        self.value = x[self.spec.projection];
        self.skipping = self.spec.skip.as_ref().is_some_and(|p| p.holds(x));
    }

    /// Credits the sojourn up to real time `t`.
    fn advance(&mut self, t: f64) {
        let dt = t - self.t_last;
        self.t_last = t;
        if self.skipping || dt <= 0.0 {
            return;
        }
        let limit = self.limit();
        let c1 = (self.clock + dt).min(limit);
        let ts = self.spec.time_scale;
        let (mut u, u_end) = (self.clock / ts, c1 / ts);
        let last = self.bins.len() - 1;
        let mut k = ((u / self.spec.time_bin) as usize).min(last);
        while u < u_end {
            // Rounding in u / time_bin can land one bin early; step past it.
            let edge = if k == last { u_end } else { ((k + 1) as f64 * self.spec.time_bin).min(u_end) };
            if edge > u {
                *self.bins[k].entry(self.value).or_insert(0.0) += edge - u;
                self.total += edge - u;
                u = edge;
            }
            if k < last {
                k += 1;
            }
        }
        self.clock = c1;
    }

    pub fn finish(self, termination: Termination, event_count: u64) -> OccupationMeasure {
        let complete = self.clock >= self.limit();
        OccupationMeasure {
            time_bin: self.spec.time_bin,
            space_scale: self.spec.space_scale,
            bins: self.bins,
            total_mass: self.total,
            complete,
            termination,
            event_count,
        }
    }
}

impl Observer for OccupationObserver {
    fn on_start(&mut self, x: &[u64]) -> Control {
        self.set_state(x);
        Control::Continue
    }

    fn deadline(&self) -> f64 {
        if self.skipping {
            f64::INFINITY
        } else {
            self.t_last + (self.limit() - self.clock)
        }
    }

    fn on_deadline(&mut self, t: f64, _x: &[u64]) -> Control {
        self.advance(t);
        // The deadline was computed so that the clock reaches the limit at t;
        // t_last + (limit - clock) can round a few ulps short of it.
        self.clock = self.limit();
        Control::Stop
    }

    fn on_jump(&mut self, t: f64, _r: usize, _before: &[u64], after: &[u64]) -> Control {
        self.advance(t);
        self.set_state(after);
        if self.clock >= self.limit() {
            Control::Stop
        } else {
            Control::Continue
        }
    }

    fn on_end(&mut self, t_end: f64, _x: &[u64], _termination: Termination) {
        self.advance(t_end);
    }
}

/// Simulates one trajectory (stream 0) and accumulates its occupation
/// measure up to the scaled horizon.
pub fn occupation_measure(
    net: &ReactionNetwork,
    x0: &StateVector,
    spec: &OccupationSpec,
    cfg: &SimConfig,
) -> Result<OccupationMeasure, SimError> {
    occupation_measure_stream(net, x0, spec, cfg, 0)
}

pub(crate) fn occupation_measure_stream(
    net: &ReactionNetwork,
    x0: &StateVector,
    spec: &OccupationSpec,
    cfg: &SimConfig,
    stream: u64,
) -> Result<OccupationMeasure, SimError> {
    cfg.validate()?;
    spec.validate(net.n_species())?;
    if let Some(p) = &spec.skip {
        super::StopRule::HitSet { set: p.clone() }.validate(net.n_species(), net.reactions().len())?;
    }
    let kin = Kinetics::new(net);
    let mut rng = stream_rng(cfg.seed, stream);
    let mut obs = OccupationObserver::new(spec.clone());
    let summary = run_observed(&kin, &x0.0, cfg.max_time, cfg.max_events, &mut rng, &mut obs)?;
    Ok(obs.finish(summary.termination, summary.event_count))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::parse_str;

    #[test]
    fn constant_trajectory_puts_all_mass_in_one_bin() {
        let net = parse_str("S1 -> 0 @ 1").unwrap();
        let spec = OccupationSpec { time_bin: 0.5, ..OccupationSpec::new(0, 2.0, 1.0, 3.0) };
        let m = occupation_measure(&net, &StateVector(vec![0]), &spec, &SimConfig::new(1, 100.0)).unwrap();
        assert!(m.complete);
        assert_eq!(m.state_marginal().len(), 1);
        assert!((m.total_mass - 3.0).abs() < 1e-12);
        assert_eq!(m.bins.len(), 6);
        assert!(m.time_marginal().iter().all(|&w| (w - 0.5).abs() < 1e-12));
    }

    #[test]
    fn total_mass_equals_scaled_horizon() {
        let net = parse_str("0 <-> S1 @ 3, 1").unwrap();
        let spec = OccupationSpec { time_bin: 0.7, ..OccupationSpec::new(0, 10.0, 3.0, 5.0) };
        for seed in 0..10 {
            let m = occupation_measure(&net, &StateVector(vec![4]), &spec, &SimConfig::new(seed, 1e6)).unwrap();
            assert!(m.complete);
            assert!((m.total_mass - 5.0).abs() < 1e-9, "{}", m.total_mass);
            assert_eq!(m.termination, Termination::StopRule);
        }
    }

    #[test]
    fn time_average_of_mm_infinity_is_poisson() {
        let net = parse_str("0 <-> S1 @ 2, 1").unwrap();
        let spec = OccupationSpec::new(0, 1.0, 1.0, 20_000.0);
        let m = occupation_measure(&net, &StateVector(vec![0]), &spec, &SimConfig::new(5, 1e9)).unwrap();
        let mean: f64 = m.state_marginal().iter().map(|(&v, &w)| v as f64 * w).sum::<f64>() / m.total_mass;
        assert!((mean - 2.0).abs() < 0.1, "{mean}");
    }

    #[test]
    fn skipped_states_do_not_advance_the_clock() {
        // S1 flips between 0 and 1; only time at 1 is counted.
        let net = parse_str("0 <-> S1 @ 1, 1").unwrap();
        let spec = OccupationSpec {
            skip: Some(StatePredicate::Equals { species: 0, value: 0 }),
            ..OccupationSpec::new(0, 1.0, 1.0, 10.0)
        };
        let m = occupation_measure(&net, &StateVector(vec![0]), &spec, &SimConfig::new(2, 1e6)).unwrap();
        assert!(!m.state_marginal().contains_key(&0));
        assert!((m.total_mass - 10.0).abs() < 1e-9);
    }

    #[test]
    fn time_limit_leaves_measure_incomplete() {
        let net = parse_str("0 <-> S1 @ 1, 1").unwrap();
        let spec = OccupationSpec::new(0, 1.0, 1.0, 10.0);
        let m = occupation_measure(&net, &StateVector(vec![0]), &spec, &SimConfig::new(2, 4.0)).unwrap();
        assert!(!m.complete);
        assert!((m.total_mass - 4.0).abs() < 1e-9);
    }

    #[test]
    fn horizon_reached_under_rounding_with_skips() {
        // Small time scale plus many skipped sojourns used to leave the clock
        // a few ulps short of the limit, re-arming the same deadline forever.
        let net = parse_str("0 <-> S1 + S2 @ 1, 1\n2 S1 + S2 <-> 2 S1 + 2 S2 @ 1, 1\n").unwrap();
        let spec = OccupationSpec {
            skip: Some(StatePredicate::Equals { species: 1, value: 0 }),
            ..OccupationSpec::new(1, 1.0 / 900.0, 1.0, 3000.0)
        };
        for seed in 0..20 {
            let m = occupation_measure(&net, &StateVector(vec![30, 1]), &spec, &SimConfig::new(seed, 1e6)).unwrap();
            assert!(m.complete);
            assert!((m.total_mass - 3000.0).abs() < 1e-6, "{}", m.total_mass);
        }
    }
}
