mod common;

use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};

use common::{arb_network, arb_state, dot};
use crnlab::network::{ReactionNetwork, StateVector};
use crnlab::parser::parse_str;
use crnlab::rng::stream_rng;
use crnlab::sim::{run_observed, simulate, Control, Kinetics, Observer, SimConfig, Thinning};
use crnlab::stats::{exp_cdf, ks_test};
use crnlab::structural::ln_factorial;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn same_seed_gives_identical_records(net in arb_network(3, 5, 3), x in arb_state(3, 20), seed in any::<u64>(), k in 1u64..4) {
        let x0 = StateVector(x[..net.n_species()].to_vec());
        let cfg = SimConfig::new(seed, 5.0).with_max_events(2_000);
        for cfg in [cfg, cfg.with_thinning(Thinning::EveryK { k }), cfg.with_thinning(Thinning::OnGrid { dt: 0.1 })] {
            match (simulate(&net, &x0, &cfg), simulate(&net, &x0, &cfg)) {
                (Ok(a), Ok(b)) => prop_assert_eq!(a, b),
                (Err(a), Err(b)) => prop_assert_eq!(a, b),
                (a, b) => prop_assert!(false, "{:?} vs {:?}", a, b),
            }
        }
    }

    #[test]
    fn trajectories_keep_conserved_quantities(net in arb_network(4, 5, 3), x in arb_state(4, 30), seed in any::<u64>()) {
        let x0 = &x[..net.n_species()];
        let laws = net.conservation_vectors().integer_basis_i64().unwrap();
        let cfg = SimConfig::new(seed, 10.0).with_max_events(500);
        let Ok(record) = simulate(&net, &StateVector(x0.to_vec()), &cfg) else {
            // Only overflow can fail here; nothing to check.
            return Ok(());
        };
        for (_, s) in &record.samples {
            for rho in &laws {
                prop_assert_eq!(dot(rho, &s.0), dot(rho, x0));
            }
        }
    }
}

/// Reachable states from `x0`, refusing more than `cap`.
fn reachable(net: &ReactionNetwork, x0: &[u64], cap: usize) -> HashSet<Vec<u64>> {
    let mut seen = HashSet::from([x0.to_vec()]);
    let mut queue = VecDeque::from([x0.to_vec()]);
    while let Some(x) = queue.pop_front() {
        for (z, _) in net.transitions(&x).unwrap() {
            if seen.insert(z.0.clone()) {
                assert!(seen.len() <= cap, "more than {cap} reachable states");
                queue.push_back(z.0);
            }
        }
    }
    seen
}

#[derive(Default)]
struct Transitions {
    counts: HashMap<(Vec<u64>, Vec<u64>), u64>,
    visits: HashMap<Vec<u64>, u64>,
}

impl Observer for Transitions {
    fn on_jump(&mut self, _t: f64, _r: usize, before: &[u64], after: &[u64]) -> Control {
        *self.counts.entry((before.to_vec(), after.to_vec())).or_default() += 1;
        *self.visits.entry(before.to_vec()).or_default() += 1;
        Control::Continue
    }
}

fn ln_binomial_pmf(n: u64, k: u64, p: f64) -> f64 {
    ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k) + k as f64 * p.ln() + (n - k) as f64 * (1.0 - p).ln()
}

/// Two-sided exact tail: total probability of outcomes no more likely than k.
fn binomial_two_sided(n: u64, k: u64, p: f64) -> f64 {
    let at_k = ln_binomial_pmf(n, k, p);
    (0..=n).map(|j| ln_binomial_pmf(n, j, p)).filter(|&l| l <= at_k + 1e-9).map(f64::exp).sum::<f64>().min(1.0)
}

/// P(|Z| > 4) for a standard normal.
const FOUR_SIGMA_TAIL: f64 = 6.334e-5;

#[test]
fn jump_frequencies_match_transition_probabilities() {
    let cases = [
        ("S1 <-> S2 @ 1, 2\n2 S1 <-> S3 @ 0.5, 1\n", vec![30, 0, 0]),
        ("2 S1 <-> S2 @ 1, 1\nS1 + S2 <-> S3 @ 0.1, 2\n", vec![20, 0, 0]),
        ("S1 -> S2 @ 1\nS2 -> S1 + S2 @ 1\nS1 + S2 -> S1 @ 1\n", vec![3, 3]),
    ];
    for (seed, (text, x0)) in cases.iter().enumerate() {
        let net = parse_str(text).unwrap();
        // The triangle's class is infinite; there the visited states must
        // number at most 500 instead.
        let states = if net.conservation_vectors().dimension() > 0 { Some(reachable(&net, x0, 500)) } else { None };
        let kin = Kinetics::new(&net);
        let mut obs = Transitions::default();
        let mut rng = stream_rng(1000 + seed as u64, 0);
        let summary = run_observed(&kin, x0, f64::INFINITY, 1_000_000, &mut rng, &mut obs).unwrap();
        assert_eq!(summary.event_count, 1_000_000);
        let visited: HashSet<&Vec<u64>> = obs.visits.keys().collect();
        match &states {
            Some(s) => assert!(visited.iter().all(|x| s.contains(*x))),
            None => assert!(visited.len() <= 500, "{text}: {} states visited", visited.len()),
        }
        for (x, &n) in &obs.visits {
            let out = net.transitions(x).unwrap();
            let total: f64 = out.iter().map(|t| t.1).sum();
            for (z, rate) in out {
                let p = rate / total;
                let c = obs.counts.get(&(x.clone(), z.0.clone())).copied().unwrap_or(0);
                let within_four_se = (c as f64 - n as f64 * p).abs() <= 4.0 * (n as f64 * p * (1.0 - p)).sqrt();
                // Counts of a few events are judged by the exact binomial tail
                // at the same level as four normal standard errors.
                let ok = within_four_se || binomial_two_sided(n, c, p) >= FOUR_SIGMA_TAIL;
                assert!(ok, "{text}: {x:?} -> {:?}: {c} of {n}, p = {p}", z.0);
            }
        }
        let observed: u64 = obs.counts.values().sum();
        assert_eq!(observed, 1_000_000);
    }
}

/// Holding times per state.
#[derive(Default)]
struct Holding {
    entered: f64,
    times: BTreeMap<Vec<u64>, Vec<f64>>,
}

impl Observer for Holding {
    fn on_jump(&mut self, t: f64, _r: usize, before: &[u64], _after: &[u64]) -> Control {
        self.times.entry(before.to_vec()).or_default().push(t - self.entered);
        self.entered = t;
        Control::Continue
    }
}

#[test]
fn holding_times_are_exponential() {
    let net = parse_str("0 <-> S1 @ 3, 1\nS1 <-> S2 @ 1, 2\n").unwrap();
    let kin = Kinetics::new(&net);
    let mut obs = Holding::default();
    let mut rng = stream_rng(77, 0);
    run_observed(&kin, &[3, 1], f64::INFINITY, 500_000, &mut rng, &mut obs).unwrap();
    let mut tested: Vec<(Vec<u64>, Vec<f64>)> = obs.times.into_iter().filter(|(_, v)| v.len() >= 2_000).collect();
    tested.sort_by_key(|(_, v)| std::cmp::Reverse(v.len()));
    tested.truncate(10);
    assert_eq!(tested.len(), 10);
    let level = 0.01 / tested.len() as f64;
    for (x, sample) in &tested {
        let rate: f64 = net.transitions(x).unwrap().iter().map(|t| t.1).sum();
        let ks = ks_test(sample, exp_cdf(rate));
        assert!(ks.passes(level), "{x:?}: {ks:?}");
    }
}

#[test]
fn binomial_tail_sanity() {
    // P(X = 0 or X = 2) for Binomial(2, 1/2) is 1/2; the mode has tail 1.
    assert!((binomial_two_sided(2, 0, 0.5) - 0.5).abs() < 1e-12);
    assert!((binomial_two_sided(2, 1, 0.5) - 1.0).abs() < 1e-12);
}
