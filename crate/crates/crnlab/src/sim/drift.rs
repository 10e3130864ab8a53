//! Monte Carlo drift of an energy function at a stopping time.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::stop::stop_only;
use super::{Kinetics, SimConfig, SimError, StopRule};
use crate::network::{ReactionNetwork, StateVector};
use crate::rng::stream_rng;
use crate::stats::{mean_se, MeanSe};

/// Energy (Lyapunov candidate) functions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Energy {
    /// Σ wᵢ xᵢ.
    Linear { weights: Vec<f64> },
    /// Σ (xᵢ ln xᵢ − xᵢ + 1), with 0 ln 0 = 0.
    Entropy,
    /// Σ xᵢ^{eᵢ}; a zero exponent drops the coordinate.
    Polynomial { exponents: Vec<u32> },
}

impl Energy {
    pub fn name(&self) -> String {
        match self {
            Energy::Linear { weights } => format!("linear{weights:?}"),
            Energy::Entropy => "entropy".into(),
            Energy::Polynomial { exponents } => format!("polynomial{exponents:?}"),
        }
    }

    pub fn eval(&self, x: &[u64]) -> f64 {
        match self {
            Energy::Linear { weights } => weights.iter().zip(x).map(|(w, &v)| w * v as f64).sum(),
            Energy::Entropy => x
                .iter()
                .map(|&v| {
                    let v = v as f64;
                    if v == 0.0 {
                        1.0
                    } else {
                        v * v.ln() - v + 1.0
                    }
                })
                .sum(),
            Energy::Polynomial { exponents } => {
                exponents.iter().zip(x).filter(|(&e, _)| e > 0).map(|(&e, &v)| (v as f64).powi(e as i32)).sum()
            }
        }
    }

    fn check(&self, n: usize) -> Result<(), SimError> {
        let len = match self {
            Energy::Linear { weights } => weights.len(),
            Energy::Polynomial { exponents } => exponents.len(),
            Energy::Entropy => n,
        };
        if len != n {
            return Err(SimError::Config(format!("energy has {len} coordinates, network has {n} species")));
        }
        Ok(())
    }
}

/// Estimate of E_x[f(X(τ))] − f(x) and E_x[τ].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DriftEstimate {
    pub energy_name: String,
    pub mean_energy_change: MeanSe,
    pub mean_tau: MeanSe,
    /// Mean energy change divided by mean τ.
    pub drift_ratio: f64,
    pub replicas: usize,
    /// Replicas where the rule did not fire; excluded from the means.
    pub censored: usize,
}

/// Runs `replicas` independent trajectories (stream r for replica r) to the
/// stopping rule and averages the energy change and the stopping time.
pub fn estimate_drift(
    net: &ReactionNetwork,
    x0: &StateVector,
    energy: &Energy,
    rule: &StopRule,
    replicas: usize,
    cfg: &SimConfig,
) -> Result<DriftEstimate, SimError> {
    if replicas < 2 {
        return Err(SimError::Config("drift estimation needs at least 2 replicas".into()));
    }
    cfg.validate()?;
    rule.validate(net.n_species(), net.reactions().len())?;
    energy.check(net.n_species())?;
    let kin = Kinetics::new(net);
    let f0 = energy.eval(&x0.0);
    let results: Vec<Option<(f64, f64)>> = (0..replicas)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream_rng(cfg.seed, r as u64);
            let fired = stop_only(&kin, &x0.0, rule, cfg, &mut rng)?;
            Ok(fired.map(|(t, x)| (energy.eval(&x) - f0, t)))
        })
        .collect::<Result<_, SimError>>()?;
    let kept: Vec<(f64, f64)> = results.iter().flatten().copied().collect();
    if kept.is_empty() {
        return Err(SimError::AllCensored(replicas));
    }
    let changes: Vec<f64> = kept.iter().map(|k| k.0).collect();
    let taus: Vec<f64> = kept.iter().map(|k| k.1).collect();
    let mean_energy_change = mean_se(&changes);
    let mean_tau = mean_se(&taus);
    Ok(DriftEstimate {
        energy_name: energy.name(),
        drift_ratio: mean_energy_change.mean / mean_tau.mean,
        mean_energy_change,
        mean_tau,
        replicas,
        censored: replicas - kept.len(),
    })
}
