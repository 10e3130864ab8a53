#![allow(dead_code)]

use crnlab::network::{Complex, Reaction, ReactionNetwork};
use proptest::prelude::*;

/// Random valid networks with up to `max_species` species, up to
/// `max_reactions` reactions and coefficients below `max_coef`.
pub fn arb_network(max_species: usize, max_reactions: usize, max_coef: u64) -> impl Strategy<Value = ReactionNetwork> {
    (1..=max_species).prop_flat_map(move |n| {
        let complex = prop::collection::vec(0..max_coef, n);
        let reaction = (complex.clone(), complex, 0.01f64..100.0);
        prop::collection::vec(reaction, 1..=max_reactions).prop_filter_map("invalid network", move |rs| {
            let reactions = rs.into_iter().map(|(s, t, k)| Reaction::new(Complex(s), Complex(t), k)).collect();
            ReactionNetwork::with_default_names(n, reactions).ok()
        })
    })
}

pub fn arb_state(n: usize, max: u64) -> impl Strategy<Value = Vec<u64>> {
    prop::collection::vec(0..=max, n)
}

pub fn dot(a: &[i64], x: &[u64]) -> i128 {
    a.iter().zip(x).map(|(&ai, &xi)| ai as i128 * xi as i128).sum()
}
