//! Graph and algebraic invariants of a network: linkage classes, weak
//! reversibility, stoichiometric rank and deficiency, plus deterministic
//! equilibria and product-form stationary measures for weakly reversible
//! deficiency-zero networks.

use std::collections::{BTreeMap, HashSet, VecDeque};

use nalgebra::{DMatrix, DVector};
use num_traits::ToPrimitive;
use petgraph::graph::{DiGraph, UnGraph};
use serde::Serialize;
use thiserror::Error;

use crate::linalg;
use crate::network::{CoreError, ReactionNetwork, StateVector};

/// Structural invariants of a network.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StructuralReport {
    pub species: Vec<String>,
    pub complexes: Vec<String>,
    pub complex_count: usize,
    /// Partition of complex indices into linkage classes.
    pub linkage_classes: Vec<Vec<usize>>,
    pub linkage_class_count: usize,
    pub weakly_reversible: bool,
    pub stoich_rank: usize,
    pub deficiency: i64,
    pub conservation_dimension: usize,
}

/// Computes linkage classes, weak reversibility, rank and deficiency.
pub fn analyze(net: &ReactionNetwork) -> StructuralReport {
    let c = net.complexes().len();
    let mut ug: UnGraph<(), ()> = UnGraph::with_capacity(c, net.reactions().len());
    let mut dg: DiGraph<(), ()> = DiGraph::with_capacity(c, net.reactions().len());
    for _ in 0..c {
        ug.add_node(());
        dg.add_node(());
    }
    for &(s, t) in net.endpoints() {
        ug.add_edge((s as u32).into(), (t as u32).into(), ());
        dg.add_edge((s as u32).into(), (t as u32).into(), ());
    }

    let mut uf = petgraph::unionfind::UnionFind::<usize>::new(c);
    for &(s, t) in net.endpoints() {
        uf.union(s, t);
    }
    let mut classes: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..c {
        classes.entry(uf.find(i)).or_default().push(i);
    }
    let mut linkage_classes: Vec<Vec<usize>> = classes.into_values().collect();
    linkage_classes.sort_by_key(|v| v[0]);

    let mut scc_of = vec![0usize; c];
    for (k, comp) in petgraph::algo::tarjan_scc(&dg).into_iter().enumerate() {
        for node in comp {
            scc_of[node.index()] = k;
        }
    }
    let weakly_reversible = net.endpoints().iter().all(|&(s, t)| scc_of[s] == scc_of[t]);

    let rows = linalg::to_rational(&net.stoichiometric_rows());
    let s = linalg::rank(&rows, net.n_species());
    let l = linkage_classes.len();
    StructuralReport {
        species: net.species().to_vec(),
        complexes: net.complexes().iter().map(|c| net.complex_label(c)).collect(),
        complex_count: c,
        linkage_class_count: l,
        linkage_classes,
        weakly_reversible,
        stoich_rank: s,
        deficiency: c as i64 - l as i64 - s as i64,
        conservation_dimension: net.n_species() - s,
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StructuralError {
    #[error("precondition not met: {0}")]
    Precondition(String),
    #[error("Newton iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64, last: Vec<f64> },
    #[error("truncation window contains no state of the class")]
    EmptyWindow,
    #[error(transparent)]
    Core(#[from] CoreError),
}

pub const NEWTON_MAX_ITERATIONS: usize = 200;
pub const NEWTON_TOLERANCE: f64 = 1e-10;

/// Mass-action vector field Σ_r κ_r c^{y_r⁻} (y_r⁺ − y_r⁻) with ordinary powers.
pub fn mass_action_field(net: &ReactionNetwork, c: &[f64], out: &mut [f64]) {
    out.iter_mut().for_each(|v| *v = 0.0);
    for r in net.reactions() {
        let mut m = r.rate;
        for (&ci, &yi) in c.iter().zip(&r.source.0) {
            m *= ci.powi(yi as i32);
        }
        for (o, (&t, &s)) in out.iter_mut().zip(r.target.0.iter().zip(&r.source.0)) {
            *o += m * (t as f64 - s as f64);
        }
    }
}

/// RK4 in log coordinates on u' = F(e^u)/e^u with a step adapted to the
/// current speed, stopping when `done` holds or after a fixed budget.
fn follow_flow(net: &ReactionNetwork, c0: &[f64], done: impl Fn(&[f64]) -> bool) -> Vec<f64> {
    let n = c0.len();
    let mut u: Vec<f64> = c0.iter().map(|c| c.ln()).collect();
    let mut f = vec![0.0; n];
    let mut velocity = |u: &[f64], out: &mut Vec<f64>| {
        let c: Vec<f64> = u.iter().map(|x| x.exp()).collect();
        mass_action_field(net, &c, &mut f);
        *out = f.iter().zip(&c).map(|(fi, ci)| fi / ci).collect();
    };
    let (mut k1, mut k2, mut k3, mut k4) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    for _ in 0..100_000 {
        let c: Vec<f64> = u.iter().map(|x| x.exp()).collect();
        if done(&c) {
            break;
        }
        velocity(&u, &mut k1);
        let speed = k1.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let dt = 0.05 / speed.max(1e-12);
        let shift = |a: &[f64], k: &[f64], s: f64| -> Vec<f64> { a.iter().zip(k).map(|(x, y)| x + s * y).collect() };
        velocity(&shift(&u, &k1, dt / 2.0), &mut k2);
        velocity(&shift(&u, &k2, dt / 2.0), &mut k3);
        velocity(&shift(&u, &k3, dt), &mut k4);
        for i in 0..n {
            u[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    u.iter().map(|x| x.exp()).collect()
}

/// Positive equilibrium of the mass-action ODE inside the stoichiometric
/// class of `initial_guess` (all ones when `None`).
///
/// Refuses unless the network is weakly reversible with deficiency zero.
/// Newton steps are halved until the iterate stays positive and the residual
/// decreases. When conservation laws exist, the equations ⟨ρ, c⟩ = ⟨ρ, c₀⟩
/// replace the redundant directions of the field.
pub fn deterministic_equilibrium(
    net: &ReactionNetwork,
    initial_guess: Option<&[f64]>,
) -> Result<Vec<f64>, StructuralError> {
    let report = analyze(net);
    if !report.weakly_reversible || report.deficiency != 0 {
        return Err(StructuralError::Precondition(format!(
            "equilibrium requires a weakly reversible network with deficiency zero (weakly_reversible={}, deficiency={})",
            report.weakly_reversible, report.deficiency
        )));
    }
    let n = net.n_species();
    let c0: Vec<f64> = match initial_guess {
        Some(g) => {
            if g.len() != n {
                return Err(CoreError::DimensionMismatch { expected: n, found: g.len() }.into());
            }
            if g.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
                return Err(StructuralError::Precondition("initial guess must be strictly positive".into()));
            }
            g.to_vec()
        }
        None => vec![1.0; n],
    };
    if n == 0 {
        return Ok(Vec::new());
    }
    let rows = linalg::to_rational(&net.stoichiometric_rows());
    let to_f64 =
        |v: &Vec<num_rational::BigRational>| -> Vec<f64> { v.iter().map(|x| x.to_f64().unwrap_or(f64::NAN)).collect() };
    let span: Vec<Vec<f64>> = linalg::row_space_basis(&rows, n).iter().map(to_f64).collect();
    let laws: Vec<Vec<f64>> = linalg::null_space(&rows, n).iter().map(to_f64).collect();
    let targets: Vec<f64> = laws.iter().map(|w| dot(w, &c0)).collect();

    // Unknowns u = ln c keep every iterate positive. Each projected field
    // equation is divided by its gross flux, so the boundary point c = 0 (where
    // all fluxes vanish) is not an approximate root.
    let a: Vec<Vec<f64>> = span
        .iter()
        .map(|b| net.stoichiometric_rows().iter().map(|d| d.iter().zip(b).map(|(&x, y)| x as f64 * y).sum()).collect())
        .collect();
    let system = |c: &[f64]| -> (DVector<f64>, DMatrix<f64>) {
        let mono: Vec<f64> = net
            .reactions()
            .iter()
            .map(|r| r.rate * c.iter().zip(&r.source.0).map(|(&ci, &yi)| ci.powi(yi as i32)).product::<f64>())
            .collect();
        let mut h = DVector::zeros(n);
        let mut j = DMatrix::zeros(n, n);
        for (i, ai) in a.iter().enumerate() {
            let (mut num, mut den) = (0.0, 0.0);
            let mut dnum = vec![0.0; n];
            let mut dden = vec![0.0; n];
            for (r, reaction) in net.reactions().iter().enumerate() {
                num += mono[r] * ai[r];
                den += mono[r] * ai[r].abs();
                for k in 0..n {
                    let d = reaction.source.0[k] as f64 * mono[r];
                    dnum[k] += d * ai[r];
                    dden[k] += d * ai[r].abs();
                }
            }
            if den > 0.0 {
                h[i] = num / den;
                for k in 0..n {
                    j[(i, k)] = (dnum[k] * den - num * dden[k]) / (den * den);
                }
            }
        }
        for (k, w) in laws.iter().enumerate() {
            let scale = 1.0 + targets[k].abs();
            h[span.len() + k] = (dot(w, c) - targets[k]) / scale;
            for col in 0..n {
                j[(span.len() + k, col)] = w[col] * c[col] / scale;
            }
        }
        (h, j)
    };
    let mut field = vec![0.0; n];
    let mut residual_of = |c: &[f64]| {
        mass_action_field(net, c, &mut field);
        field.iter().fold(0.0f64, |m, x| m.max(x.abs()))
    };

    let newton = |start: Vec<f64>, residual_of: &mut dyn FnMut(&[f64]) -> f64| -> (Vec<f64>, f64, f64) {
        let mut c = start;
        let (mut h, mut jac) = system(&c);
        for _ in 0..NEWTON_MAX_ITERATIONS {
            if h.amax() < 1e-14 {
                break;
            }
            let Some(step) = jac.clone().lu().solve(&(-&h)) else {
                break;
            };
            let merit = h.norm_squared();
            let mut lambda = 1.0;
            let mut accepted = false;
            while lambda > 1e-12 {
                let trial: Vec<f64> = c.iter().zip(step.iter()).map(|(ci, si)| ci * (lambda * si).exp()).collect();
                if trial.iter().all(|&v| v > 0.0 && v.is_finite()) {
                    let (ht, jt) = system(&trial);
                    if ht.norm_squared() < merit {
                        c = trial;
                        h = ht;
                        jac = jt;
                        accepted = true;
                        break;
                    }
                }
                lambda *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        let residual = residual_of(&c);
        (c, residual, h.amax())
    };
    let ok = |residual: f64, rel: f64| residual < NEWTON_TOLERANCE && rel < 1e-8;

    let (c, residual, rel) = newton(c0.clone(), &mut residual_of);
    if ok(residual, rel) {
        return Ok(c);
    }
    // Fallback: follow the mass-action flow from the guess (it stays in the
    // stoichiometric class) until close to the equilibrium, then retry Newton.
    let flowed = follow_flow(net, &c0, |c| system(c).0.amax() < 1e-3);
    let (c, residual, rel) = newton(flowed, &mut residual_of);
    if ok(residual, rel) {
        return Ok(c);
    }
    Err(StructuralError::NoConvergence { iterations: NEWTON_MAX_ITERATIONS, residual, last: c })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Box of states lower ≤ x ≤ upper (inclusive).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Window {
    pub lower: Vec<u64>,
    pub upper: Vec<u64>,
}

impl Window {
    /// The box {0, …, side−1}^n.
    pub fn cube(n: usize, side: u64) -> Self {
        Window { lower: vec![0; n], upper: vec![side.saturating_sub(1); n] }
    }

    pub fn contains(&self, x: &[u64]) -> bool {
        x.len() == self.lower.len()
            && x.iter().zip(self.lower.iter().zip(&self.upper)).all(|(&v, (&lo, &hi))| lo <= v && v <= hi)
    }

    pub fn is_empty(&self) -> bool {
        self.lower.iter().zip(&self.upper).any(|(lo, hi)| lo > hi)
    }

    /// All states of the box in lexicographic order.
    pub fn states(&self) -> Vec<Vec<u64>> {
        if self.is_empty() {
            return Vec::new();
        }
        let mut out = Vec::new();
        let mut cur = self.lower.clone();
        loop {
            out.push(cur.clone());
            let mut k = cur.len();
            loop {
                if k == 0 {
                    return out;
                }
                k -= 1;
                if cur[k] < self.upper[k] {
                    cur[k] += 1;
                    cur[k + 1..].copy_from_slice(&self.lower[k + 1..]);
                    break;
                }
            }
        }
    }
}

/// Unnormalized measure given in log space.
pub trait LogMeasure {
    fn log_weight(&self, x: &[u64]) -> f64;
}

/// π(x) = Π c_i^{x_i} / x_i! built from a positive equilibrium.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProductFormMeasure {
    pub equilibrium: Vec<f64>,
}

impl ProductFormMeasure {
    pub fn new(c: &[f64]) -> Result<Self, StructuralError> {
        if c.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
            return Err(StructuralError::Precondition("equilibrium must be strictly positive".into()));
        }
        Ok(ProductFormMeasure { equilibrium: c.to_vec() })
    }

    /// Normalizes the measure over the part of the irreducible class of `base`
    /// that lies inside `window`.
    pub fn truncate(
        &self,
        net: &ReactionNetwork,
        base: &[u64],
        window: &Window,
    ) -> Result<TruncatedMeasure, StructuralError> {
        truncate_measure(self, net, base, window)
    }
}

impl LogMeasure for ProductFormMeasure {
    fn log_weight(&self, x: &[u64]) -> f64 {
        x.iter().zip(&self.equilibrium).map(|(&k, &c)| k as f64 * c.ln() - ln_factorial(k)).sum()
    }
}

/// ln(k!) via a cached table for small k and Stirling's series beyond.
pub fn ln_factorial(k: u64) -> f64 {
    if k < 2 {
        return 0.0;
    }
    if k < 256 {
        return (2..=k).map(|i| (i as f64).ln()).sum();
    }
    let x = k as f64 + 1.0;
    // ln Γ(x) Stirling series, accurate to well below 1e-14 relative for x > 256.
    (x - 0.5) * x.ln() - x + 0.5 * (2.0 * std::f64::consts::PI).ln() + 1.0 / (12.0 * x) - 1.0 / (360.0 * x.powi(3))
        + 1.0 / (1260.0 * x.powi(5))
}

/// A product-form measure normalized on an enumerated truncated class.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TruncatedMeasure {
    pub equilibrium: Vec<f64>,
    pub base_state: Vec<u64>,
    pub window: Window,
    /// Class states inside the window with their normalized probabilities,
    /// sorted lexicographically.
    pub states: Vec<(Vec<u64>, f64)>,
    /// Normalized mass carried by class states that have a transition leaving
    /// the window. Zero means the whole class fits in the window.
    pub boundary_leak: f64,
    /// True when the class was fully enumerated (no transition leaves the
    /// window), in which case the measure is a probability on the class.
    pub normalizable: bool,
}

impl TruncatedMeasure {
    pub fn probability(&self, x: &[u64]) -> f64 {
        self.states.binary_search_by(|(s, _)| s.as_slice().cmp(x)).map(|i| self.states[i].1).unwrap_or(0.0)
    }
}

fn truncate_measure(
    m: &ProductFormMeasure,
    net: &ReactionNetwork,
    base: &[u64],
    window: &Window,
) -> Result<TruncatedMeasure, StructuralError> {
    let n = net.n_species();
    if base.len() != n || window.lower.len() != n {
        return Err(CoreError::DimensionMismatch { expected: n, found: base.len() }.into());
    }
    if window.is_empty() || !window.contains(base) {
        return Err(StructuralError::EmptyWindow);
    }
    let changes = net.stoichiometric_rows();
    let step = |x: &[u64], d: &[i64]| -> Option<Vec<u64>> {
        x.iter().zip(d).map(|(&v, &dv)| (v as i64).checked_add(dv).filter(|&s| s >= 0).map(|s| s as u64)).collect()
    };
    let enabled = |x: &[u64], r: usize| net.reactions()[r].source.0.iter().zip(x).all(|(&y, &v)| v >= y);

    // Forward reachability inside the window.
    let mut forward: HashSet<Vec<u64>> = HashSet::new();
    let mut queue = VecDeque::from([base.to_vec()]);
    forward.insert(base.to_vec());
    let mut leaks = false;
    while let Some(x) = queue.pop_front() {
        for r in 0..changes.len() {
            if !enabled(&x, r) {
                continue;
            }
            let z = step(&x, &changes[r]).expect("enabled jump stays in N^n");
            if !window.contains(&z) {
                leaks = true;
                continue;
            }
            if forward.insert(z.clone()) {
                queue.push_back(z);
            }
        }
    }
    // Backward reachability inside the window.
    let mut backward: HashSet<Vec<u64>> = HashSet::new();
    let mut queue = VecDeque::from([base.to_vec()]);
    backward.insert(base.to_vec());
    while let Some(z) = queue.pop_front() {
        for r in 0..changes.len() {
            let neg: Vec<i64> = changes[r].iter().map(|d| -d).collect();
            let Some(x) = step(&z, &neg) else { continue };
            if !window.contains(&x) || !enabled(&x, r) {
                continue;
            }
            if backward.insert(x.clone()) {
                queue.push_back(x);
            }
        }
    }
    let mut class: Vec<Vec<u64>> = forward.intersection(&backward).cloned().collect();
    class.sort();
    if class.is_empty() {
        return Err(StructuralError::EmptyWindow);
    }
    let logs: Vec<f64> = class.iter().map(|x| m.log_weight(x)).collect();
    let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = weights.iter().sum();
    let mut leak = 0.0;
    let states: Vec<(Vec<u64>, f64)> = class
        .into_iter()
        .zip(weights)
        .map(|(x, w)| {
            let p = w / total;
            let exits = (0..changes.len())
                .any(|r| enabled(&x, r) && !window.contains(&step(&x, &changes[r]).expect("enabled")));
            if exits {
                leak += p;
            }
            (x, p)
        })
        .collect();
    Ok(TruncatedMeasure {
        equilibrium: m.equilibrium.clone(),
        base_state: base.to_vec(),
        window: window.clone(),
        states,
        boundary_leak: leak,
        normalizable: !leaks,
    })
}

/// max over interior states z of |Σ_x π(x) q(x,z) − π(z) q(z)| / (π(z) q(z)).
///
/// A state is interior when every predecessor z − (y⁺_r − y⁻_r) that lies in
/// N^n also lies in the window. States with no exit and no inflow are skipped;
/// a state with inflow but no exit has infinite residual.
pub fn stationarity_residual(
    net: &ReactionNetwork,
    measure: &dyn LogMeasure,
    window: &Window,
) -> Result<f64, CoreError> {
    let changes = net.stoichiometric_rows();
    let mut worst: f64 = 0.0;
    for z in window.states() {
        let preds: Vec<Option<Vec<u64>>> = changes
            .iter()
            .map(|d| {
                z.iter()
                    .zip(d)
                    .map(|(&v, &dv)| (v as i64).checked_sub(dv).filter(|&s| s >= 0).map(|s| s as u64))
                    .collect()
            })
            .collect();
        if preds.iter().flatten().any(|x| !window.contains(x)) {
            continue;
        }
        let lz = measure.log_weight(&z);
        let mut outflow = 0.0;
        for r in 0..changes.len() {
            outflow += net.propensity(r, &z)?;
        }
        let mut inflow = 0.0;
        for (r, x) in preds.iter().enumerate() {
            if let Some(x) = x {
                let a = net.propensity(r, x)?;
                if a > 0.0 {
                    inflow += (measure.log_weight(x) - lz).exp() * a;
                }
            }
        }
        if outflow == 0.0 {
            if inflow > 0.0 {
                return Ok(f64::INFINITY);
            }
            continue;
        }
        worst = worst.max((inflow - outflow).abs() / outflow);
    }
    Ok(worst)
}

/// Convenience: the unnormalized measure of a state vector.
pub fn product_form_weight(c: &[f64], x: &StateVector) -> f64 {
    ProductFormMeasure { equilibrium: c.to_vec() }.log_weight(&x.0).exp()
}
