//! Stopping rules and the `run_until` driver.

use serde::{Deserialize, Serialize};

use super::{
    run_observed, Both, Control, Kinetics, Observer, Recorder, SimConfig, SimError, Termination, TrajectoryRecord,
};
use crate::network::{ReactionNetwork, StateVector};
use crate::rng::{stream_rng, SimRng};

/// A set of states, as a predicate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum StatePredicate {
    AtLeast {
        species: usize,
        value: u64,
    },
    AtMost {
        species: usize,
        value: u64,
    },
    Equals {
        species: usize,
        value: u64,
    },
    /// ‖x‖₁ ≥ value.
    NormAtLeast {
        value: u64,
    },
    NormAtMost {
        value: u64,
    },
    All {
        of: Vec<StatePredicate>,
    },
    Any {
        of: Vec<StatePredicate>,
    },
    Not {
        of: Box<StatePredicate>,
    },
}

impl StatePredicate {
    pub fn holds(&self, x: &[u64]) -> bool {
        match self {
            StatePredicate::AtLeast { species, value } => x.get(*species).is_some_and(|v| v >= value),
            StatePredicate::AtMost { species, value } => x.get(*species).is_some_and(|v| v <= value),
            StatePredicate::Equals { species, value } => x.get(*species) == Some(value),
            StatePredicate::NormAtLeast { value } => x.iter().map(|&v| v as u128).sum::<u128>() >= *value as u128,
            StatePredicate::NormAtMost { value } => x.iter().map(|&v| v as u128).sum::<u128>() <= *value as u128,
            StatePredicate::All { of } => of.iter().all(|p| p.holds(x)),
            StatePredicate::Any { of } => of.iter().any(|p| p.holds(x)),
            StatePredicate::Not { of } => !of.holds(x),
        }
    }

    fn check(&self, n: usize) -> Result<(), SimError> {
        match self {
            StatePredicate::AtLeast { species, .. }
            | StatePredicate::AtMost { species, .. }
            | StatePredicate::Equals { species, .. } => {
                if *species >= n {
                    return Err(SimError::Rule(format!("species index {species} out of range ({n} species)")));
                }
                Ok(())
            }
            StatePredicate::NormAtLeast { .. } | StatePredicate::NormAtMost { .. } => Ok(()),
            StatePredicate::All { of } | StatePredicate::Any { of } => of.iter().try_for_each(|p| p.check(n)),
            StatePredicate::Not { of } => of.check(n),
        }
    }
}

/// A class of jumps, identified by reaction index or by displacement.
///
/// Several reactions may share a displacement, so the two are distinct.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum JumpFilter {
    Reactions { reactions: Vec<usize> },
    ExceptReactions { reactions: Vec<usize> },
    Displacement { change: Vec<i64> },
    NotDisplacement { change: Vec<i64> },
}

impl JumpFilter {
    pub fn matches(&self, r: usize, before: &[u64], after: &[u64]) -> bool {
        let same_change = |change: &[i64]| {
            change.len() == before.len()
                && before.iter().zip(after).zip(change).all(|((&b, &a), &d)| a as i128 - b as i128 == d as i128)
        };
        match self {
            JumpFilter::Reactions { reactions } => reactions.contains(&r),
            JumpFilter::ExceptReactions { reactions } => !reactions.contains(&r),
            JumpFilter::Displacement { change } => same_change(change),
            JumpFilter::NotDisplacement { change } => !same_change(change),
        }
    }

    fn check(&self, n_species: usize, n_reactions: usize) -> Result<(), SimError> {
        match self {
            JumpFilter::Reactions { reactions } | JumpFilter::ExceptReactions { reactions } => {
                match reactions.iter().find(|&&r| r >= n_reactions) {
                    Some(r) => {
                        Err(SimError::Rule(format!("reaction index {r} out of range ({n_reactions} reactions)")))
                    }
                    None => Ok(()),
                }
            }
            JumpFilter::Displacement { change } | JumpFilter::NotDisplacement { change } => {
                if change.len() != n_species {
                    return Err(SimError::Rule(format!(
                        "displacement has {} entries, network has {n_species} species",
                        change.len()
                    )));
                }
                Ok(())
            }
        }
    }
}

/// When to stop a trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum StopRule {
    FirstJump,
    NthJump {
        n: u64,
    },
    /// Elapsed time η since the rule became active.
    FixedTime {
        eta: f64,
    },
    HitSet {
        set: StatePredicate,
    },
    /// The `count`-th jump matching `filter`.
    JumpOfType {
        filter: JumpFilter,
        #[serde(default = "one")]
        count: u64,
    },
    /// Each rule starts where the previous one fired.
    Sequence {
        rules: Vec<StopRule>,
    },
}

fn one() -> u64 {
    1
}

impl StopRule {
    pub fn validate(&self, n_species: usize, n_reactions: usize) -> Result<(), SimError> {
        match self {
            StopRule::FirstJump => Ok(()),
            StopRule::NthJump { n } => {
                if *n == 0 {
                    return Err(SimError::Rule("nth-jump needs n ≥ 1".into()));
                }
                Ok(())
            }
            StopRule::FixedTime { eta } => {
                if !(*eta >= 0.0 && eta.is_finite()) {
                    return Err(SimError::Rule(format!("fixed-time needs finite eta ≥ 0, got {eta}")));
                }
                Ok(())
            }
            StopRule::HitSet { set } => set.check(n_species),
            StopRule::JumpOfType { filter, count } => {
                if *count == 0 {
                    return Err(SimError::Rule("jump-of-type needs count ≥ 1".into()));
                }
                filter.check(n_species, n_reactions)
            }
            StopRule::Sequence { rules } => {
                if rules.is_empty() {
                    return Err(SimError::Rule("empty sequence".into()));
                }
                rules.iter().try_for_each(|r| r.validate(n_species, n_reactions))
            }
        }
    }

    fn flatten(&self, out: &mut Vec<StopRule>) {
        match self {
            StopRule::Sequence { rules } => rules.iter().for_each(|r| r.flatten(out)),
            other => out.push(other.clone()),
        }
    }
}

/// Observer that fires when a (possibly sequential) stop rule is met.
#[derive(Debug, Clone)]
pub struct StopObserver {
    stages: Vec<StopRule>,
    stage: usize,
    stage_start: f64,
    counter: u64,
    fired_at: Option<(f64, Vec<u64>)>,
}

impl StopObserver {
    pub fn new(rule: &StopRule) -> Self {
        let mut stages = Vec::new();
        rule.flatten(&mut stages);
        StopObserver { stages, stage: 0, stage_start: 0.0, counter: 0, fired_at: None }
    }

    pub fn fired(&self) -> Option<&(f64, Vec<u64>)> {
        self.fired_at.as_ref()
    }

    /// Moves to the next stage, skipping stages already met at `t, x`.
    fn advance(&mut self, t: f64, x: &[u64]) -> Control {
        self.stage += 1;
        self.enter(t, x)
    }

    fn enter(&mut self, t: f64, x: &[u64]) -> Control {
        loop {
            let Some(rule) = self.stages.get(self.stage) else {
                self.fired_at = Some((t, x.to_vec()));
                return Control::Stop;
            };
            self.stage_start = t;
            self.counter = 0;
            let immediate = match rule {
                StopRule::FixedTime { eta } => *eta == 0.0,
                StopRule::HitSet { set } => set.holds(x),
                _ => false,
            };
            if !immediate {
                return Control::Continue;
            }
            self.stage += 1;
        }
    }
}

impl Observer for StopObserver {
    fn on_start(&mut self, x: &[u64]) -> Control {
        self.stage = 0;
        self.fired_at = None;
        self.enter(0.0, x)
    }

    fn deadline(&self) -> f64 {
        match self.stages.get(self.stage) {
            Some(StopRule::FixedTime { eta }) if self.fired_at.is_none() => self.stage_start + eta,
            _ => f64::INFINITY,
        }
    }

    fn on_deadline(&mut self, t: f64, x: &[u64]) -> Control {
        match self.stages.get(self.stage) {
            Some(StopRule::FixedTime { .. }) if t >= self.deadline() => self.advance(t, x),
            _ => Control::Continue,
        }
    }

    fn on_jump(&mut self, t: f64, r: usize, before: &[u64], after: &[u64]) -> Control {
        let done = match self.stages.get(self.stage) {
            None => return Control::Stop,
            Some(StopRule::FirstJump) => true,
            Some(StopRule::NthJump { n }) => {
                self.counter += 1;
                self.counter >= *n
            }
            Some(StopRule::FixedTime { .. }) => false,
            Some(StopRule::HitSet { set }) => set.holds(after),
            Some(StopRule::JumpOfType { filter, count }) => {
                if filter.matches(r, before, after) {
                    self.counter += 1;
                }
                self.counter >= *count
            }
            Some(StopRule::Sequence { .. }) => unreachable!("sequences are flattened"),
        };
        if done {
            self.advance(t, after)
        } else {
            Control::Continue
        }
    }
}

/// Result of [`run_until`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunOutcome {
    pub record: TrajectoryRecord,
    /// State and time at which the rule fired; `None` when censored.
    pub stop_state: Option<StateVector>,
    pub stop_time: Option<f64>,
}

impl RunOutcome {
    pub fn censored(&self) -> bool {
        self.stop_time.is_none()
    }
}

/// Runs one replica until `rule` fires; returns the stop time and state
/// without recording the path.
pub(crate) fn stop_only(
    kin: &Kinetics,
    x0: &[u64],
    rule: &StopRule,
    cfg: &SimConfig,
    rng: &mut SimRng,
) -> Result<Option<(f64, Vec<u64>)>, SimError> {
    let mut stop = StopObserver::new(rule);
    run_observed(kin, x0, cfg.max_time, cfg.max_events, rng, &mut stop)?;
    Ok(stop.fired_at)
}

/// Simulates until `rule` fires or the limits in `cfg` are reached.
///
/// A rule that never fires is not an error: the outcome is censored and the
/// record's termination says which limit was hit.
pub fn run_until(
    net: &ReactionNetwork,
    x0: &StateVector,
    rule: &StopRule,
    cfg: &SimConfig,
) -> Result<RunOutcome, SimError> {
    cfg.validate()?;
    rule.validate(net.n_species(), net.reactions().len())?;
    let kin = Kinetics::new(net);
    let mut rng = stream_rng(cfg.seed, 0);
    let mut rec = Recorder::new(cfg.thinning);
    let mut stop = StopObserver::new(rule);
    let summary = run_observed(&kin, &x0.0, cfg.max_time, cfg.max_events, &mut rng, &mut Both(&mut rec, &mut stop))?;
    let record = rec.into_record(summary.termination, summary.event_count);
    let (stop_state, stop_time) = match stop.fired_at {
        Some((t, x)) if summary.termination == Termination::StopRule => (Some(StateVector(x)), Some(t)),
        _ => (None, None),
    };
    Ok(RunOutcome { record, stop_state, stop_time })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::parse_str;
    use crate::stats::{exp_cdf, ks_test, mean_se};

    fn cap(p: u64) -> ReactionNetwork {
        parse_str(&format!(
            "0 -> S1 + S2 @ 1\nS1 + S2 -> 0 @ 1\n{p} S1 + S2 -> {p} S1 @ 1\n{p} S1 -> {p} S1 + S2 @ 1\n"
        ))
        .unwrap()
    }

    #[test]
    fn fixed_time_zero_stops_at_origin() {
        let net = cap(2);
        let out =
            run_until(&net, &StateVector(vec![0, 5]), &StopRule::FixedTime { eta: 0.0 }, &SimConfig::new(1, 10.0))
                .unwrap();
        assert_eq!(out.stop_time, Some(0.0));
        assert_eq!(out.stop_state, Some(StateVector(vec![0, 5])));
        assert_eq!(out.record.samples.len(), 1);
        assert_eq!(out.record.event_count, 0);
    }

    #[test]
    fn fixed_time_stops_exactly_at_eta() {
        let net = cap(2);
        let out =
            run_until(&net, &StateVector(vec![0, 5]), &StopRule::FixedTime { eta: 2.5 }, &SimConfig::new(7, 10.0))
                .unwrap();
        assert_eq!(out.stop_time, Some(2.5));
        assert_eq!(out.record.samples.last().unwrap().0, 2.5);
        assert_eq!(out.record.termination, Termination::StopRule);
    }

    #[test]
    fn first_jump_time_is_exponential_with_total_rate() {
        // From (1,3): propensities 1 + 3 + 0 + 0 = 4.
        let net = cap(2);
        let x0 = StateVector(vec![1, 3]);
        let times: Vec<f64> = (0..4000)
            .map(|s| run_until(&net, &x0, &StopRule::FirstJump, &SimConfig::new(s, 100.0)).unwrap().stop_time.unwrap())
            .collect();
        let m = mean_se(&times);
        assert!((m.mean - 0.25).abs() < 3.0 * m.stderr, "{m:?}");
        assert!(ks_test(&times, exp_cdf(4.0)).passes(0.01));
    }

    #[test]
    fn hit_set_containing_start_fires_immediately() {
        let rule = StopRule::HitSet { set: StatePredicate::AtLeast { species: 1, value: 3 } };
        let out = run_until(&cap(2), &StateVector(vec![0, 5]), &rule, &SimConfig::new(1, 10.0)).unwrap();
        assert_eq!(out.stop_time, Some(0.0));
    }

    #[test]
    fn censored_when_limit_hit() {
        let rule = StopRule::HitSet { set: StatePredicate::AtLeast { species: 0, value: 1_000_000 } };
        let out = run_until(&cap(2), &StateVector(vec![0, 5]), &rule, &SimConfig::new(1, 1.0)).unwrap();
        assert!(out.censored());
        assert_eq!(out.record.termination, Termination::TimeLimit);
    }

    #[test]
    fn nth_jump_and_sequence_count_events() {
        let net = parse_str("0 -> S1 @ 1").unwrap();
        let x0 = StateVector(vec![0]);
        let out = run_until(&net, &x0, &StopRule::NthJump { n: 7 }, &SimConfig::new(3, 1e9)).unwrap();
        assert_eq!(out.stop_state, Some(StateVector(vec![7])));
        let seq = StopRule::Sequence {
            rules: vec![StopRule::NthJump { n: 2 }, StopRule::Sequence { rules: vec![StopRule::FirstJump; 3] }],
        };
        let out = run_until(&net, &x0, &seq, &SimConfig::new(3, 1e9)).unwrap();
        assert_eq!(out.stop_state, Some(StateVector(vec![5])));
        assert_eq!(out.record.event_count, 5);
    }

    #[test]
    fn jump_of_type_by_reaction_and_by_displacement() {
        let net = cap(2);
        let x0 = StateVector(vec![3, 3]);
        let by_reaction = StopRule::JumpOfType { filter: JumpFilter::Reactions { reactions: vec![1] }, count: 2 };
        let by_change = StopRule::JumpOfType { filter: JumpFilter::Displacement { change: vec![-1, -1] }, count: 2 };
        for seed in 0..50 {
            let cfg = SimConfig::new(seed, 1e3);
            let a = run_until(&net, &x0, &by_reaction, &cfg).unwrap();
            let b = run_until(&net, &x0, &by_change, &cfg).unwrap();
            // Reaction 1 is the only one with this displacement.
            assert_eq!(a, b);
            let last = &a.record.samples;
            let n = last.len();
            let d: Vec<i64> = (0..2).map(|i| last[n - 1].1 .0[i] as i64 - last[n - 2].1 .0[i] as i64).collect();
            assert_eq!(d, vec![-1, -1]);
        }
    }

    #[test]
    fn sequence_after_fixed_time_uses_relative_clock() {
        let net = parse_str("0 -> S1 @ 1").unwrap();
        let rule =
            StopRule::Sequence { rules: vec![StopRule::FixedTime { eta: 1.0 }, StopRule::FixedTime { eta: 2.0 }] };
        let out = run_until(&net, &StateVector(vec![0]), &rule, &SimConfig::new(5, 10.0)).unwrap();
        assert_eq!(out.stop_time, Some(3.0));
    }

    #[test]
    fn validation_rejects_bad_rules() {
        let net = cap(2);
        let bad = [
            StopRule::NthJump { n: 0 },
            StopRule::FixedTime { eta: -1.0 },
            StopRule::Sequence { rules: vec![] },
            StopRule::HitSet { set: StatePredicate::Equals { species: 2, value: 0 } },
            StopRule::JumpOfType { filter: JumpFilter::Reactions { reactions: vec![4] }, count: 1 },
            StopRule::JumpOfType { filter: JumpFilter::Displacement { change: vec![1] }, count: 1 },
        ];
        for r in bad {
            assert!(r.validate(2, 4).is_err(), "{r:?}");
        }
        let rule: StopRule =
            serde_json::from_str(r#"{"kind":"jump-of-type","filter":{"kind":"except-reactions","reactions":[2]}}"#)
                .unwrap();
        assert_eq!(rule, StopRule::JumpOfType { filter: JumpFilter::ExceptReactions { reactions: vec![2] }, count: 1 });
        let _ = net;
    }

    #[test]
    fn absorbed_start_is_censored() {
        let net = parse_str("S1 -> 0 @ 1").unwrap();
        let out = run_until(&net, &StateVector(vec![0]), &StopRule::FirstJump, &SimConfig::new(1, 5.0)).unwrap();
        assert!(out.censored());
        assert_eq!(out.record.termination, Termination::Absorbed);
    }
}
