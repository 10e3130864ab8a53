//! Independent replica hitting times of a target set.

use rayon::prelude::*;
use serde::Serialize;

use super::stop::stop_only;
use super::{Kinetics, SimConfig, SimError, StatePredicate, StopRule};
use crate::network::{ReactionNetwork, StateVector};
use crate::rng::stream_rng;

/// Hitting time of one replica; `time` is the time reached when censored.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HittingSample {
    pub replica: usize,
    pub time: f64,
    pub censored: bool,
}

/// Hitting times of `target` from `x0`, replica r on stream r.
pub fn hitting_time_sample(
    net: &ReactionNetwork,
    x0: &StateVector,
    target: &StatePredicate,
    replicas: usize,
    cfg: &SimConfig,
) -> Result<Vec<HittingSample>, SimError> {
    if replicas == 0 {
        return Err(SimError::Config("at least one replica is required".into()));
    }
    cfg.validate()?;
    let rule = StopRule::HitSet { set: target.clone() };
    rule.validate(net.n_species(), net.reactions().len())?;
    let kin = Kinetics::new(net);
    (0..replicas)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream_rng(cfg.seed, r as u64);
            Ok(match stop_only(&kin, &x0.0, &rule, cfg, &mut rng)? {
                Some((t, _)) => HittingSample { replica: r, time: t, censored: false },
                None => HittingSample { replica: r, time: cfg.max_time, censored: true },
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::parse_str;

    #[test]
    fn target_containing_start_gives_zeros() {
        let net = parse_str("0 -> S1 @ 1").unwrap();
        let target = StatePredicate::AtMost { species: 0, value: 3 };
        let s = hitting_time_sample(&net, &StateVector(vec![2]), &target, 8, &SimConfig::new(1, 1.0)).unwrap();
        assert!(s.iter().all(|h| h.time == 0.0 && !h.censored));
    }

    #[test]
    fn pure_birth_hitting_time_is_gamma() {
        // Time for a rate-2 Poisson process to reach 5 has mean 2.5.
        let net = parse_str("0 -> S1 @ 2").unwrap();
        let target = StatePredicate::AtLeast { species: 0, value: 5 };
        let s = hitting_time_sample(&net, &StateVector(vec![0]), &target, 4000, &SimConfig::new(4, 1e3)).unwrap();
        let times: Vec<f64> = s.iter().map(|h| h.time).collect();
        let m = crate::stats::mean_se(&times);
        assert!((m.mean - 2.5).abs() < 3.0 * m.stderr, "{m:?}");
    }

    #[test]
    fn censoring_is_flagged() {
        let net = parse_str("0 -> S1 @ 1").unwrap();
        let target = StatePredicate::AtLeast { species: 0, value: 1000 };
        let s = hitting_time_sample(&net, &StateVector(vec![0]), &target, 3, &SimConfig::new(1, 1.0)).unwrap();
        assert!(s.iter().all(|h| h.censored && h.time == 1.0));
        assert_eq!(s.iter().map(|h| h.replica).collect::<Vec<_>>(), vec![0, 1, 2]);
    }
}
