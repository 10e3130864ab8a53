//! Reaction network data model and the mass-action rate algebra.
//!
//! A network is a list of species, the set of complexes appearing as reaction
//! endpoints, and reactions carrying positive rate constants. States are
//! copy-number vectors in N^n.

use std::collections::HashMap;
use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg;

/// Errors raised by the core model and rate operations.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum CoreError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("falling factorial overflows 128 bits at state {state:?}")]
    FactorialOverflow { state: Vec<u64> },
    #[error("reaction {index}: rate constant must be positive and finite, got {rate}")]
    InvalidRate { index: usize, rate: f64 },
    #[error("reaction {index}: source equals target")]
    SelfLoop { index: usize },
    #[error("reaction {index} duplicates reaction {first}")]
    DuplicateReaction { index: usize, first: usize },
    #[error("reaction index {index} out of range ({count} reactions)")]
    ReactionIndex { index: usize, count: usize },
    #[error("reaction {reaction} has zero propensity at state {state:?}")]
    ZeroPropensity { reaction: usize, state: Vec<u64> },
    #[error("state overflow applying reaction {reaction} at {state:?}")]
    StateOverflow { reaction: usize, state: Vec<u64> },
    #[error("duplicate species name {0:?}")]
    DuplicateSpecies(String),
}

/// Index of a species inside its network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SpeciesId(pub usize);

/// A non-negative integer combination of species, stored densely.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Complex(pub Vec<u64>);

impl Complex {
    pub fn zero(n: usize) -> Self {
        Complex(vec![0; n])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    /// Total molecule count ‖y‖.
    pub fn size(&self) -> u64 {
        self.0.iter().sum()
    }

    pub fn is_empty_complex(&self) -> bool {
        self.0.iter().all(|&c| c == 0)
    }
}

/// Copy-number vector in N^n.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct StateVector(pub Vec<u64>);

impl StateVector {
    pub fn new(counts: Vec<u64>) -> Self {
        StateVector(counts)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    /// ‖x‖ = Σ x_i, computed in 128 bits so it cannot overflow.
    pub fn norm(&self) -> u128 {
        self.0.iter().map(|&c| c as u128).sum()
    }

    /// ‖x‖_∞.
    pub fn norm_inf(&self) -> u64 {
        self.0.iter().copied().max().unwrap_or(0)
    }

    pub fn as_slice(&self) -> &[u64] {
        &self.0
    }
}

impl From<Vec<u64>> for StateVector {
    fn from(v: Vec<u64>) -> Self {
        StateVector(v)
    }
}

/// A reaction y⁻ → y⁺ with rate constant κ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reaction {
    pub source: Complex,
    pub target: Complex,
    pub rate: f64,
}

impl Reaction {
    pub fn new(source: Complex, target: Complex, rate: f64) -> Self {
        Reaction { source, target, rate }
    }

    /// The change vector y⁺ − y⁻.
    pub fn change(&self) -> Vec<i64> {
        self.target.0.iter().zip(&self.source.0).map(|(&t, &s)| t as i64 - s as i64).collect()
    }
}

/// The (species, complexes, reactions, rates) quadruple.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReactionNetwork {
    species: Vec<String>,
    complexes: Vec<Complex>,
    reactions: Vec<Reaction>,
    /// For each reaction, indices of its source and target in `complexes`.
    endpoints: Vec<(usize, usize)>,
}

impl ReactionNetwork {
    /// Builds a network, deriving the complex set from the reaction endpoints
    /// in order of first appearance (source before target).
    pub fn new(species: Vec<String>, reactions: Vec<Reaction>) -> Result<Self, CoreError> {
        let n = species.len();
        for (i, s) in species.iter().enumerate() {
            if species[..i].contains(s) {
                return Err(CoreError::DuplicateSpecies(s.clone()));
            }
        }
        let mut complexes: Vec<Complex> = Vec::new();
        let mut index: HashMap<Complex, usize> = HashMap::new();
        let mut endpoints = Vec::with_capacity(reactions.len());
        let mut seen: HashMap<(usize, usize), usize> = HashMap::new();
        for (ri, r) in reactions.iter().enumerate() {
            for c in [&r.source, &r.target] {
                if c.dim() != n {
                    return Err(CoreError::DimensionMismatch { expected: n, found: c.dim() });
                }
            }
            if !(r.rate > 0.0 && r.rate.is_finite()) {
                return Err(CoreError::InvalidRate { index: ri, rate: r.rate });
            }
            if r.source == r.target {
                return Err(CoreError::SelfLoop { index: ri });
            }
            let mut idx = |c: &Complex| -> usize {
                *index.entry(c.clone()).or_insert_with(|| {
                    complexes.push(c.clone());
                    complexes.len() - 1
                })
            };
            let e = (idx(&r.source), idx(&r.target));
            if let Some(&first) = seen.get(&e) {
                return Err(CoreError::DuplicateReaction { index: ri, first });
            }
            seen.insert(e, ri);
            endpoints.push(e);
        }
        Ok(ReactionNetwork { species, complexes, reactions, endpoints })
    }

    /// Convenience constructor with species named `S1..Sn`.
    pub fn with_default_names(n: usize, reactions: Vec<Reaction>) -> Result<Self, CoreError> {
        Self::new((1..=n).map(|i| format!("S{i}")).collect(), reactions)
    }

    pub fn n_species(&self) -> usize {
        self.species.len()
    }

    pub fn species(&self) -> &[String] {
        &self.species
    }

    pub fn species_id(&self, name: &str) -> Option<SpeciesId> {
        self.species.iter().position(|s| s == name).map(SpeciesId)
    }

    pub fn complexes(&self) -> &[Complex] {
        &self.complexes
    }

    pub fn reactions(&self) -> &[Reaction] {
        &self.reactions
    }

    pub fn reaction(&self, r: usize) -> Result<&Reaction, CoreError> {
        self.reactions.get(r).ok_or(CoreError::ReactionIndex { index: r, count: self.reactions.len() })
    }

    /// Complex indices (source, target) of every reaction.
    pub fn endpoints(&self) -> &[(usize, usize)] {
        &self.endpoints
    }

    /// y⁻_max: the largest source size.
    pub fn source_max(&self) -> u64 {
        self.reactions.iter().map(|r| r.source.size()).max().unwrap_or(0)
    }

    /// y⁺_max: the largest target size.
    pub fn target_max(&self) -> u64 {
        self.reactions.iter().map(|r| r.target.size()).max().unwrap_or(0)
    }

    /// Same network with every rate replaced by `f(index, rate)`.
    pub fn map_rates(&self, mut f: impl FnMut(usize, &Reaction) -> f64) -> Result<Self, CoreError> {
        let reactions =
            self.reactions.iter().enumerate().map(|(i, r)| Reaction { rate: f(i, r), ..r.clone() }).collect();
        Self::new(self.species.clone(), reactions)
    }

    /// Human-readable form of a complex, e.g. `2 S1 + S2` or `0`.
    pub fn complex_label(&self, c: &Complex) -> String {
        let terms: Vec<String> =
            c.0.iter()
                .enumerate()
                .filter(|(_, &k)| k > 0)
                .map(|(i, &k)| if k == 1 { self.species[i].clone() } else { format!("{k} {}", self.species[i]) })
                .collect();
        if terms.is_empty() {
            "0".to_string()
        } else {
            terms.join(" + ")
        }
    }

    fn check_dim(&self, len: usize) -> Result<(), CoreError> {
        if len != self.n_species() {
            return Err(CoreError::DimensionMismatch { expected: self.n_species(), found: len });
        }
        Ok(())
    }

    /// κ_r · x^(y_r⁻).
    pub fn propensity(&self, r: usize, x: &[u64]) -> Result<f64, CoreError> {
        let reaction = self.reaction(r)?;
        let ff = falling_factorial(x, &reaction.source.0)?;
        Ok(reaction.rate * ff as f64)
    }

    /// Applies reaction `r` to `x`; refuses when the reaction is not enabled.
    pub fn apply_jump(&self, r: usize, x: &[u64]) -> Result<StateVector, CoreError> {
        let reaction = self.reaction(r)?;
        self.check_dim(x.len())?;
        if x.iter().zip(&reaction.source.0).any(|(&xi, &yi)| xi < yi) {
            return Err(CoreError::ZeroPropensity { reaction: r, state: x.to_vec() });
        }
        let mut out = Vec::with_capacity(x.len());
        for ((&xi, &s), &t) in x.iter().zip(&reaction.source.0).zip(&reaction.target.0) {
            let v =
                (xi - s).checked_add(t).ok_or_else(|| CoreError::StateOverflow { reaction: r, state: x.to_vec() })?;
            out.push(v);
        }
        Ok(StateVector(out))
    }

    /// Q(f)(x) = Σ_r κ_r x^(y_r⁻) (f(x + y_r⁺ − y_r⁻) − f(x)) for a finitely
    /// supported `f`; states missing from the map read as 0.
    pub fn generator_apply(&self, f: &HashMap<StateVector, f64>, x: &[u64]) -> Result<f64, CoreError> {
        self.check_dim(x.len())?;
        let fx = f.get(&StateVector(x.to_vec())).copied().unwrap_or(0.0);
        let mut acc = 0.0;
        for r in 0..self.reactions.len() {
            let a = self.propensity(r, x)?;
            if a == 0.0 {
                continue;
            }
            let z = self.apply_jump(r, x)?;
            acc += a * (f.get(&z).copied().unwrap_or(0.0) - fx);
        }
        Ok(acc)
    }

    /// Transitions out of `x`: (target state, rate), merged when several
    /// reactions share a displacement.
    pub fn transitions(&self, x: &[u64]) -> Result<Vec<(StateVector, f64)>, CoreError> {
        let mut out: Vec<(StateVector, f64)> = Vec::new();
        for r in 0..self.reactions.len() {
            let a = self.propensity(r, x)?;
            if a == 0.0 {
                continue;
            }
            let z = self.apply_jump(r, x)?;
            match out.iter_mut().find(|(s, _)| *s == z) {
                Some(entry) => entry.1 += a,
                None => out.push((z, a)),
            }
        }
        Ok(out)
    }

    /// Stoichiometric matrix with one row per reaction (y⁺ − y⁻).
    pub fn stoichiometric_rows(&self) -> Vec<Vec<i64>> {
        self.reactions.iter().map(Reaction::change).collect()
    }

    /// Conservation laws: a rational basis of {ρ : ⟨ρ, y⁺_r − y⁻_r⟩ = 0 ∀r}
    /// and the outcome of a search for a strictly positive member.
    pub fn conservation_vectors(&self) -> ConservationLaws {
        self.conservation_vectors_with_bound(DEFAULT_POSITIVE_SEARCH_BOUND)
    }

    pub fn conservation_vectors_with_bound(&self, bound: i64) -> ConservationLaws {
        let rows = self.stoichiometric_rows();
        let basis = linalg::null_space(&linalg::to_rational(&rows), self.n_species());
        let integer_basis: Vec<Vec<BigInt>> = basis.iter().map(|v| linalg::primitive_integer(v)).collect();
        let positive = if integer_basis.is_empty() {
            PositiveConservation::Absent
        } else {
            match search_positive(&integer_basis, bound) {
                Some(v) => PositiveConservation::Found(v),
                None => PositiveConservation::NotFound { bound },
            }
        };
        ConservationLaws { basis, integer_basis, positive }
    }
}

impl fmt::Display for ReactionNetwork {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&crate::parser::render_network(self))
    }
}

/// Default coefficient bound for the positive conservation vector search.
pub const DEFAULT_POSITIVE_SEARCH_BOUND: i64 = 4;

/// Outcome of searching for a strictly positive conservation vector.
#[derive(Debug, Clone, PartialEq)]
pub enum PositiveConservation {
    /// A strictly positive integer vector in the conservation space.
    Found(Vec<BigInt>),
    /// The conservation space is trivial, so no such vector exists.
    Absent,
    /// No combination with coefficients up to `bound` was positive. This does
    /// not prove that none exists.
    NotFound { bound: i64 },
}

/// Conservation laws of a network.
#[derive(Debug, Clone, PartialEq)]
pub struct ConservationLaws {
    /// Exact basis of the left null space of the stoichiometric matrix.
    pub basis: Vec<Vec<BigRational>>,
    /// The same basis scaled to primitive integer vectors.
    pub integer_basis: Vec<Vec<BigInt>>,
    pub positive: PositiveConservation,
}

impl ConservationLaws {
    pub fn dimension(&self) -> usize {
        self.basis.len()
    }

    /// Integer basis as i64 vectors (None if an entry does not fit).
    pub fn integer_basis_i64(&self) -> Option<Vec<Vec<i64>>> {
        use num_traits::ToPrimitive;
        self.integer_basis.iter().map(|v| v.iter().map(|c| c.to_i64()).collect()).collect()
    }
}

/// Enumerates integer combinations of the basis with coefficients in
/// [-bound, bound], by increasing max-coefficient, and returns the first
/// strictly positive result (as a primitive vector).
fn search_positive(basis: &[Vec<BigInt>], bound: i64) -> Option<Vec<BigInt>> {
    let d = basis.len();
    let n = basis[0].len();
    // Keep the enumeration below about a million combinations.
    let mut b = bound.max(1);
    while b > 1 && ((2 * b + 1) as f64).powi(d as i32) > 1.0e6 {
        b -= 1;
    }
    for level in 1..=b {
        let mut coef = vec![-level; d];
        loop {
            if coef.iter().any(|c| c.abs() == level) {
                let mut v = vec![BigInt::zero(); n];
                for (c, row) in coef.iter().zip(basis) {
                    for (acc, x) in v.iter_mut().zip(row) {
                        *acc += x * BigInt::from(*c);
                    }
                }
                if v.iter().all(|x| x.is_positive()) {
                    let g = v.iter().fold(BigInt::zero(), |g, x| num_integer::Integer::gcd(&g, x));
                    return Some(v.into_iter().map(|x| x / &g).collect());
                }
            }
            let mut k = 0;
            loop {
                if k == d {
                    break;
                }
                if coef[k] < level {
                    coef[k] += 1;
                    break;
                }
                coef[k] = -level;
                k += 1;
            }
            if k == d {
                break;
            }
        }
    }
    None
}

/// Generalized factorial x^(y) = Π_i x_i (x_i − 1) … (x_i − y_i + 1), which is
/// 0 as soon as some x_i < y_i.
pub fn falling_factorial(x: &[u64], y: &[u64]) -> Result<u128, CoreError> {
    if x.len() != y.len() {
        return Err(CoreError::DimensionMismatch { expected: y.len(), found: x.len() });
    }
    let mut acc: u128 = 1;
    for (&xi, &yi) in x.iter().zip(y) {
        if xi < yi {
            return Ok(0);
        }
    }
    for (&xi, &yi) in x.iter().zip(y) {
        for j in 0..yi {
            acc =
                acc.checked_mul((xi - j) as u128).ok_or_else(|| CoreError::FactorialOverflow { state: x.to_vec() })?;
        }
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(v: &[u64]) -> Complex {
        Complex(v.to_vec())
    }

    fn mm_inf(lambda: f64, mu: f64) -> ReactionNetwork {
        ReactionNetwork::with_default_names(
            1,
            vec![Reaction::new(c(&[0]), c(&[1]), lambda), Reaction::new(c(&[1]), c(&[0]), mu)],
        )
        .unwrap()
    }

    #[test]
    fn falling_factorial_examples() {
        assert_eq!(falling_factorial(&[3, 2], &[2, 1]).unwrap(), 12);
        assert_eq!(falling_factorial(&[5, 0], &[0, 0]).unwrap(), 1);
        assert_eq!(falling_factorial(&[1, 4], &[2, 0]).unwrap(), 0);
        assert!(matches!(falling_factorial(&[1, 2], &[1]), Err(CoreError::DimensionMismatch { .. })));
    }

    #[test]
    fn falling_factorial_overflow_is_an_error() {
        let x = [u64::MAX, u64::MAX, u64::MAX];
        assert!(matches!(falling_factorial(&x, &[1, 1, 1]), Err(CoreError::FactorialOverflow { .. })));
        assert_eq!(falling_factorial(&[u64::MAX, u64::MAX], &[1, 1]).unwrap(), (u64::MAX as u128).pow(2));
    }

    #[test]
    fn propensity_examples() {
        let net = mm_inf(1.0, 2.0);
        assert_eq!(net.propensity(1, &[7]).unwrap(), 14.0);
        assert_eq!(net.propensity(1, &[0]).unwrap(), 0.0);
        // 2 S1 + 2 S2 -> 2 S1 + S2 with κ3 = 1 at (3,3): 3·2·3·2.
        let cap = ReactionNetwork::with_default_names(2, vec![Reaction::new(c(&[2, 2]), c(&[2, 1]), 1.0)]).unwrap();
        assert_eq!(cap.propensity(0, &[3, 3]).unwrap(), 36.0);
    }

    #[test]
    fn apply_jump_examples() {
        let net = ReactionNetwork::with_default_names(
            2,
            vec![Reaction::new(c(&[1, 1]), c(&[2, 0]), 1.0), Reaction::new(c(&[0, 0]), c(&[1, 1]), 1.0)],
        )
        .unwrap();
        assert_eq!(net.apply_jump(0, &[3, 2]).unwrap().0, vec![4, 1]);
        assert_eq!(net.apply_jump(1, &[0, 5]).unwrap().0, vec![1, 6]);
        assert!(matches!(net.apply_jump(0, &[0, 5]), Err(CoreError::ZeroPropensity { .. })));
    }

    #[test]
    fn constructor_rejects_bad_reactions() {
        assert!(matches!(
            ReactionNetwork::with_default_names(1, vec![Reaction::new(c(&[1]), c(&[1]), 1.0)]),
            Err(CoreError::SelfLoop { .. })
        ));
        assert!(matches!(
            ReactionNetwork::with_default_names(1, vec![Reaction::new(c(&[1]), c(&[0]), 0.0)]),
            Err(CoreError::InvalidRate { .. })
        ));
        assert!(matches!(
            ReactionNetwork::with_default_names(
                1,
                vec![Reaction::new(c(&[1]), c(&[0]), 1.0), Reaction::new(c(&[1]), c(&[0]), 2.0)]
            ),
            Err(CoreError::DuplicateReaction { index: 1, first: 0 })
        ));
    }

    #[test]
    fn generator_on_identity_function() {
        // f(k) = k on a window around x gives λ − μk.
        let (lambda, mu) = (1.5, 0.7);
        let net = mm_inf(lambda, mu);
        let f: HashMap<StateVector, f64> = (0..20).map(|k| (StateVector(vec![k]), k as f64)).collect();
        for k in 1..19u64 {
            let q = net.generator_apply(&f, &[k]).unwrap();
            assert!((q - (lambda - mu * k as f64)).abs() < 1e-12);
        }
    }

    #[test]
    fn generator_kills_constants_and_absorbing_states() {
        let net = mm_inf(1.0, 1.0);
        let f: HashMap<StateVector, f64> = (0..10).map(|k| (StateVector(vec![k]), 3.0)).collect();
        assert_eq!(net.generator_apply(&f, &[4]).unwrap(), 0.0);
        let blocked = ReactionNetwork::with_default_names(1, vec![Reaction::new(c(&[2]), c(&[0]), 1.0)]).unwrap();
        let g: HashMap<StateVector, f64> = [(StateVector(vec![1]), 5.0)].into();
        assert_eq!(blocked.generator_apply(&g, &[1]).unwrap(), 0.0);
    }

    #[test]
    fn conservation_examples() {
        // T1 triangle: rank 2 in dimension 2, no conservation law.
        let t1 = ReactionNetwork::with_default_names(
            2,
            vec![
                Reaction::new(c(&[0, 1]), c(&[1, 1]), 1.0),
                Reaction::new(c(&[1, 1]), c(&[1, 0]), 1.0),
                Reaction::new(c(&[1, 0]), c(&[0, 1]), 1.0),
            ],
        )
        .unwrap();
        let laws = t1.conservation_vectors();
        assert_eq!(laws.dimension(), 0);
        assert_eq!(laws.positive, PositiveConservation::Absent);

        let exchange = ReactionNetwork::with_default_names(
            2,
            vec![Reaction::new(c(&[1, 0]), c(&[0, 1]), 1.0), Reaction::new(c(&[0, 1]), c(&[1, 0]), 1.0)],
        )
        .unwrap();
        let laws = exchange.conservation_vectors();
        assert_eq!(laws.dimension(), 1);
        assert_eq!(laws.positive, PositiveConservation::Found(vec![BigInt::from(1), BigInt::from(1)]));
    }

    #[test]
    fn positive_search_needs_combination() {
        // S1 + S2 -> S3 conserves every ρ with ρ1 + ρ2 = ρ3; the basis found
        // by elimination has mixed signs, so positivity needs a combination.
        let net =
            ReactionNetwork::with_default_names(3, vec![Reaction::new(c(&[1, 1, 0]), c(&[0, 0, 1]), 1.0)]).unwrap();
        let laws = net.conservation_vectors();
        assert_eq!(laws.dimension(), 2);
        match laws.positive {
            PositiveConservation::Found(v) => {
                assert!(v.iter().all(|x| x.is_positive()));
                assert_eq!(&v[0] + &v[1], v[2]);
            }
            other => panic!("expected positive vector, got {other:?}"),
        }
    }

    #[test]
    fn norm_does_not_overflow() {
        let x = StateVector(vec![u64::MAX, u64::MAX]);
        assert_eq!(x.norm(), 2 * u64::MAX as u128);
        assert_eq!(x.norm_inf(), u64::MAX);
    }
}
