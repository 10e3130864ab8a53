//! Triangular networks y1 → y2 → y3 → y1 and their reduction to a
//! one-dimensional birth–death-like chain, plus complex shifting.

use serde::Serialize;

use crate::linalg;
use crate::network::{falling_factorial, Complex, CoreError, Reaction, ReactionNetwork, SpeciesId};
use crate::structural::StructuralError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum TriangularVerdict {
    /// The stoichiometric space has dimension 2.
    DeficiencyZero,
    /// The displacement direction has mixed signs, so a positive conservation
    /// law confines the chain to finite sets.
    FiniteConserved,
    /// The chain lives on lines a + kΔ with Δ ≥ 0.
    Reduced1d,
}

/// Result of reducing a triangular network.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TriangularReduction {
    pub verdict: TriangularVerdict,
    /// Cycle complexes after rotation, y1 → y2 → y3 → y1.
    pub cycle: [Vec<u64>; 3],
    /// Rate constants of y1→y2, y2→y3, y3→y1.
    pub rates: [f64; 3],
    /// Primitive direction Δ (None when the stoichiometric space is 2-D). For
    /// reduced-1d it is non-negative and zero exactly on dropped species.
    pub delta_vector: Option<Vec<i64>>,
    /// (p1, p2, p3) with y2−y1 = p1Δ, y3−y2 = p2Δ, y1−y3 = p3Δ.
    pub p: Option<[i64; 3]>,
    /// Positive conservation vector for the finite-conserved verdict.
    pub conserved: Option<Vec<i64>>,
    /// Species whose count never changes (Δ_i = 0).
    pub dropped_species: Vec<usize>,
}

impl TriangularReduction {
    fn line(&self) -> Result<(&[i64], [i64; 3]), StructuralError> {
        match (self.verdict, &self.delta_vector, self.p) {
            (TriangularVerdict::Reduced1d, Some(d), Some(p)) => Ok((d, p)),
            _ => Err(StructuralError::Precondition("reduction is not one-dimensional".into())),
        }
    }

    /// Jump sizes of the 1-D chain: +p1, +p2, −(p1+p2).
    pub fn jump_sizes(&self) -> Result<[i64; 3], StructuralError> {
        let (_, p) = self.line()?;
        Ok([p[0], p[1], -(p[0] + p[1])])
    }

    /// Anchor a of the line through a reduced state z (a state of the network
    /// shifted by y1): the smallest non-negative point of z + ZΔ, together
    /// with the index k = Φ_a(z) such that z = a + kΔ.
    pub fn anchor(&self, z: &[u64]) -> Result<(Vec<u64>, u64), StructuralError> {
        let (d, _) = self.line()?;
        if z.len() != d.len() {
            return Err(CoreError::DimensionMismatch { expected: d.len(), found: z.len() }.into());
        }
        let k = z.iter().zip(d).filter(|(_, &di)| di > 0).map(|(&zi, &di)| zi / di as u64).min().unwrap_or(0);
        let a = z.iter().zip(d).map(|(&zi, &di)| zi - k * di as u64).collect();
        Ok((a, k))
    }

    /// Ψ_a(k) = a + kΔ.
    pub fn psi(&self, anchor: &[u64], k: u64) -> Result<Vec<u64>, StructuralError> {
        let (d, _) = self.line()?;
        Ok(anchor.iter().zip(d).map(|(&ai, &di)| ai + k * di as u64).collect())
    }

    /// Φ_a(z) = ⟨z − a, Δ⟩ / ⟨Δ, Δ⟩.
    pub fn phi(&self, anchor: &[u64], z: &[u64]) -> Result<i64, StructuralError> {
        let (d, _) = self.line()?;
        let num: i64 = z.iter().zip(anchor).zip(d).map(|((&zi, &ai), &di)| (zi as i64 - ai as i64) * di).sum();
        let den: i64 = d.iter().map(|x| x * x).sum();
        Ok(num / den)
    }

    /// Falling-factorial parts of the three 1-D rates at Ψ_a(k):
    /// 1, Ψ_a(k)^(p1Δ), Ψ_a(k)^((p1+p2)Δ).
    pub fn chain_factorials(&self, anchor: &[u64], k: u64) -> Result<[u128; 3], StructuralError> {
        let (d, p) = self.line()?;
        let z = self.psi(anchor, k)?;
        let y2: Vec<u64> = d.iter().map(|&di| (p[0] * di) as u64).collect();
        let y3: Vec<u64> = d.iter().map(|&di| ((p[0] + p[1]) * di) as u64).collect();
        Ok([1, falling_factorial(&z, &y2)?, falling_factorial(&z, &y3)?])
    }

    /// Rates of the jumps +p1, +p2, −(p1+p2) at Ψ_a(k).
    pub fn chain_rates(&self, anchor: &[u64], k: u64) -> Result<[f64; 3], StructuralError> {
        let f = self.chain_factorials(anchor, k)?;
        Ok([self.rates[0] * f[0] as f64, self.rates[1] * f[1] as f64, self.rates[2] * f[2] as f64])
    }
}

fn sub(a: &[u64], b: &[u64]) -> Vec<i64> {
    a.iter().zip(b).map(|(&x, &y)| x as i64 - y as i64).collect()
}

/// Reduces a triangular network (three complexes, reactions forming the
/// directed cycle y1 → y2 → y3 → y1 in some rotation).
pub fn triangular_reduce(net: &ReactionNetwork) -> Result<TriangularReduction, StructuralError> {
    let refuse = || StructuralError::Precondition("network is not a triangular cycle".into());
    if net.complexes().len() != 3 || net.reactions().len() != 3 {
        return Err(refuse());
    }
    let ends = net.endpoints();
    let mut order = vec![0usize];
    for _ in 0..2 {
        let last = *order.last().expect("non-empty");
        let next = (0..3).find(|&r| ends[r].0 == ends[last].1).ok_or_else(refuse)?;
        if order.contains(&next) {
            return Err(refuse());
        }
        order.push(next);
    }
    if ends[order[2]].1 != ends[order[0]].0 {
        return Err(refuse());
    }
    let mut cycle: Vec<Vec<u64>> = order.iter().map(|&r| net.complexes()[ends[r].0].0.clone()).collect();
    let mut rates: Vec<f64> = order.iter().map(|&r| net.reactions()[r].rate).collect();

    let u = sub(&cycle[1], &cycle[0]);
    let v = sub(&cycle[2], &cycle[1]);
    let rank = linalg::rank(&linalg::to_rational(&[u.clone(), v.clone()]), net.n_species());
    let as_array = |c: Vec<Vec<u64>>| -> [Vec<u64>; 3] { [c[0].clone(), c[1].clone(), c[2].clone()] };
    if rank == 2 {
        return Ok(TriangularReduction {
            verdict: TriangularVerdict::DeficiencyZero,
            cycle: as_array(cycle),
            rates: [rates[0], rates[1], rates[2]],
            delta_vector: None,
            p: None,
            conserved: None,
            dropped_species: Vec::new(),
        });
    }

    // Rank 1: every difference is an integer multiple of a primitive vector.
    let g = linalg::gcd_slice(&u);
    let mut dir: Vec<i64> = u.iter().map(|x| x / g).collect();
    let first = dir.iter().find(|&&x| x != 0).copied().expect("distinct complexes");
    if first < 0 {
        dir.iter_mut().for_each(|x| *x = -*x);
    }
    let dropped: Vec<usize> = (0..dir.len()).filter(|&i| dir[i] == 0).collect();
    let mixed = dir.iter().any(|&x| x < 0);
    let coef = |w: &[i64]| -> i64 {
        let i = dir.iter().position(|&x| x != 0).expect("non-zero direction");
        w[i] / dir[i]
    };

    if mixed {
        let pos: i64 = dir.iter().filter(|&&x| x > 0).sum();
        let neg: i64 = -dir.iter().filter(|&&x| x < 0).sum::<i64>();
        let rho: Vec<i64> = dir
            .iter()
            .map(|&x| {
                if x > 0 {
                    neg
                } else if x < 0 {
                    pos
                } else {
                    1
                }
            })
            .collect();
        let gr = linalg::gcd_slice(&rho);
        let rho = rho.into_iter().map(|x| x / gr).collect();
        let p = [coef(&u), coef(&v), coef(&sub(&cycle[0], &cycle[2]))];
        return Ok(TriangularReduction {
            verdict: TriangularVerdict::FiniteConserved,
            cycle: as_array(cycle),
            rates: [rates[0], rates[1], rates[2]],
            delta_vector: Some(dir),
            p: Some(p),
            conserved: Some(rho),
            dropped_species: dropped,
        });
    }

    // Δ ≥ 0: rotate so that y1 is the lowest complex along Δ, which makes
    // p1 > 0 and p1 + p2 > 0.
    let proj = |c: &[u64]| -> i64 { c.iter().zip(&dir).map(|(&x, &d)| x as i64 * d).sum() };
    let lowest = (0..3).min_by_key(|&i| proj(&cycle[i])).expect("three complexes");
    cycle.rotate_left(lowest);
    rates.rotate_left(lowest);
    let p1 = coef(&sub(&cycle[1], &cycle[0]));
    let p2 = coef(&sub(&cycle[2], &cycle[1]));
    let p3 = coef(&sub(&cycle[0], &cycle[2]));
    debug_assert!(p1 > 0 && p1 + p2 > 0 && p1 + p2 + p3 == 0);
    Ok(TriangularReduction {
        verdict: TriangularVerdict::Reduced1d,
        cycle: as_array(cycle),
        rates: [rates[0], rates[1], rates[2]],
        delta_vector: Some(dir),
        p: Some([p1, p2, p3]),
        conserved: None,
        dropped_species: dropped,
    })
}

/// Subtracts e_i from every complex. Rates are unchanged; the embedded jump
/// chain is preserved because all propensities at x share the factor x_i.
pub fn shift_complexes(net: &ReactionNetwork, species: SpeciesId) -> Result<ReactionNetwork, StructuralError> {
    let i = species.0;
    if i >= net.n_species() {
        return Err(StructuralError::Precondition(format!("species index {i} out of range")));
    }
    if net.complexes().iter().any(|c| c.0[i] == 0) {
        return Err(StructuralError::Precondition(format!("every complex must contain species {}", net.species()[i])));
    }
    let shift = |c: &Complex| {
        let mut v = c.0.clone();
        v[i] -= 1;
        Complex(v)
    };
    let reactions = net.reactions().iter().map(|r| Reaction::new(shift(&r.source), shift(&r.target), r.rate)).collect();
    Ok(ReactionNetwork::new(net.species().to_vec(), reactions)?)
}
