//! Limit curves of scaled processes: closed forms, integrated limit ODEs and
//! the limit jump process on (0, 1].

use std::collections::BTreeMap;
use std::io::Write;
use std::sync::Arc;

use rand::Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::network::ReactionNetwork;
use crate::rng::stream_rng;
use crate::structural::mass_action_field;

pub const DEFAULT_DT: f64 = 1e-3;
pub const DEFAULT_CEILING: f64 = 1e9;
pub const BISECTION_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LimitError {
    #[error("t = {t} is outside the domain [0, {t_end}{close}")]
    Domain { t: f64, t_end: f64, close: char },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

type ClosedForm = Arc<dyn Fn(f64) -> Vec<f64> + Send + Sync>;

#[derive(Clone)]
enum Evaluator {
    Closed(ClosedForm),
    /// Cubic Hermite interpolation through integrator output.
    Tabulated {
        times: Vec<f64>,
        values: Vec<Vec<f64>>,
        slopes: Vec<Vec<f64>>,
    },
}

/// A vector-valued function of time on `[0, t_end]`, or `[0, t_end)` when
/// the curve stops at a blow-up or degeneracy time.
#[derive(Clone)]
pub struct LimitCurve {
    pub components: Vec<String>,
    pub parameters: BTreeMap<String, f64>,
    pub t_end: f64,
    /// The domain ends because the curve leaves every bounded set (or, for
    /// closed forms, stops being defined) at `t_end`.
    pub blow_up: bool,
    eval: Evaluator,
}

impl std::fmt::Debug for LimitCurve {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LimitCurve")
            .field("components", &self.components)
            .field("parameters", &self.parameters)
            .field("t_end", &self.t_end)
            .field("blow_up", &self.blow_up)
            .finish()
    }
}

impl LimitCurve {
    pub fn closed(
        components: &[&str],
        parameters: &[(&str, f64)],
        t_end: f64,
        blow_up: bool,
        f: impl Fn(f64) -> Vec<f64> + Send + Sync + 'static,
    ) -> Self {
        LimitCurve {
            components: components.iter().map(|s| s.to_string()).collect(),
            parameters: parameters.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            t_end,
            blow_up,
            eval: Evaluator::Closed(Arc::new(f)),
        }
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn in_domain(&self, t: f64) -> bool {
        t >= 0.0 && (t < self.t_end || (!self.blow_up && t == self.t_end))
    }

    pub fn eval(&self, t: f64) -> Result<Vec<f64>, LimitError> {
        if !self.in_domain(t) {
            return Err(LimitError::Domain { t, t_end: self.t_end, close: if self.blow_up { ')' } else { ']' } });
        }
        Ok(match &self.eval {
            Evaluator::Closed(f) => f(t),
            Evaluator::Tabulated { times, values, slopes } => hermite(times, values, slopes, t),
        })
    }

    pub fn eval_component(&self, t: f64, i: usize) -> Result<f64, LimitError> {
        Ok(self.eval(t)?[i])
    }

    /// Values on `grid`; every point must lie in the domain.
    pub fn sample(&self, grid: &[f64]) -> Result<Vec<(f64, Vec<f64>)>, LimitError> {
        grid.iter().map(|&t| Ok((t, self.eval(t)?))).collect()
    }

    /// Writes `t,<components>` rows on `grid`.
    pub fn write_csv<W: Write>(&self, grid: &[f64], out: W) -> Result<(), Box<dyn std::error::Error>> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["t".to_string()];
        header.extend(self.components.iter().cloned());
        w.write_record(&header)?;
        for (t, v) in self.sample(grid)? {
            let mut row = vec![t.to_string()];
            row.extend(v.iter().map(|x| x.to_string()));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn hermite(times: &[f64], values: &[Vec<f64>], slopes: &[Vec<f64>], t: f64) -> Vec<f64> {
    let i = match times.binary_search_by(|s| s.total_cmp(&t)) {
        Ok(i) => return values[i].clone(),
        Err(i) => i.clamp(1, times.len() - 1) - 1,
    };
    let h = times[i + 1] - times[i];
    let s = (t - times[i]) / h;
    let (s2, s3) = (s * s, s * s * s);
    let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
    let h10 = s3 - 2.0 * s2 + s;
    let h01 = -2.0 * s3 + 3.0 * s2;
    let h11 = s3 - s2;
    (0..values[i].len())
        .map(|k| h00 * values[i][k] + h10 * h * slopes[i][k] + h01 * values[i + 1][k] + h11 * h * slopes[i + 1][k])
        .collect()
}

/// Integration settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OdeOptions {
    pub dt: f64,
    pub t_end: f64,
    /// Blow-up is declared once ‖x‖∞ exceeds this.
    pub ceiling: f64,
}

impl OdeOptions {
    pub fn new(t_end: f64) -> Self {
        OdeOptions { dt: DEFAULT_DT, t_end, ceiling: DEFAULT_CEILING }
    }

    pub fn with_dt(mut self, dt: f64) -> Self {
        self.dt = dt;
        self
    }

    fn validate(&self) -> Result<(), LimitError> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(LimitError::InvalidParameter(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return Err(LimitError::InvalidParameter(format!("t_end must be positive, got {}", self.t_end)));
        }
        Ok(())
    }
}

/// Classical fixed-step RK4 for `ẋ = field(x)`. The last step is shortened
/// to land on `t_end`. When the state stops being finite or exceeds the
/// ceiling, the domain is cut at the last good step and flagged.
pub fn integrate_field(
    field: impl Fn(&[f64], &mut [f64]),
    x0: &[f64],
    opts: &OdeOptions,
    components: Vec<String>,
) -> Result<LimitCurve, LimitError> {
    opts.validate()?;
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut f = vec![0.0; n];
    field(&x, &mut f);
    let mut times = vec![0.0];
    let mut values = vec![x.clone()];
    let mut slopes = vec![f.clone()];
    let (mut k2, mut k3, mut k4, mut tmp) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let steps = (opts.t_end / opts.dt).ceil() as u64;
    let mut blow_up = false;
    for step in 0..steps {
        let t = step as f64 * opts.dt;
        let h = if step + 1 == steps { opts.t_end - t } else { opts.dt };
        if h <= 0.0 {
            break;
        }
        let k1 = &f;
        for i in 0..n {
            tmp[i] = x[i] + 0.5 * h * k1[i];
        }
        field(&tmp, &mut k2);
        for i in 0..n {
            tmp[i] = x[i] + 0.5 * h * k2[i];
        }
        field(&tmp, &mut k3);
        for i in 0..n {
            tmp[i] = x[i] + h * k3[i];
        }
        field(&tmp, &mut k4);
        let mut next = vec![0.0; n];
        for i in 0..n {
            next[i] = x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        if next.iter().any(|v| !v.is_finite() || v.abs() > opts.ceiling) {
            blow_up = true;
            break;
        }
        x = next;
        field(&x, &mut f);
        times.push(if step + 1 == steps { opts.t_end } else { t + h });
        values.push(x.clone());
        slopes.push(f.clone());
    }
    if times.len() < 2 {
        return Err(LimitError::InvalidParameter("blow-up before the first step; reduce dt".into()));
    }
    let t_end = *times.last().unwrap();
    Ok(LimitCurve {
        components,
        parameters: BTreeMap::from([("dt".to_string(), opts.dt), ("ceiling".to_string(), opts.ceiling)]),
        t_end,
        blow_up,
        eval: Evaluator::Tabulated { times, values, slopes },
    })
}

fn species_components(net: &ReactionNetwork) -> Vec<String> {
    net.species().to_vec()
}

fn check_dim(net: &ReactionNetwork, x0: &[f64]) -> Result<(), LimitError> {
    if x0.len() != net.n_species() {
        return Err(LimitError::InvalidParameter(format!(
            "initial point has {} entries, network has {} species",
            x0.len(),
            net.n_species()
        )));
    }
    Ok(())
}

/// Solution of ẋ = Σ_r κ_r x^{y_r⁻} (y_r⁺ − y_r⁻).
pub fn integrate_mass_action_ode(
    net: &ReactionNetwork,
    x0: &[f64],
    opts: &OdeOptions,
) -> Result<LimitCurve, LimitError> {
    check_dim(net, x0)?;
    integrate_field(|x, out| mass_action_field(net, x, out), x0, opts, species_components(net))
}

/// Same as [`integrate_mass_action_ode`], keeping only reactions whose
/// source complex has the maximal size.
pub fn integrate_dominant_ode(net: &ReactionNetwork, x0: &[f64], opts: &OdeOptions) -> Result<LimitCurve, LimitError> {
    check_dim(net, x0)?;
    let dominant = dominant_subnetwork(net);
    integrate_field(|x, out| mass_action_field(&dominant, x, out), x0, opts, species_components(net))
}

/// The reactions of `net` with ‖y⁻‖ = max_r ‖y_r⁻‖.
pub fn dominant_subnetwork(net: &ReactionNetwork) -> ReactionNetwork {
    let max = net.source_max();
    let kept = net.reactions().iter().filter(|r| r.source.size() == max).cloned().collect();
    ReactionNetwork::new(net.species().to_vec(), kept).expect("a subset of a valid network is valid")
}

/// Rates of the triangle S2 → S1+S2 (κ2), S1+S2 → S1 (κ12), S1 → S2 (κ1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TriangleRates {
    pub k1: f64,
    pub k2: f64,
    pub k12: f64,
}

/// The three initial-state regimes of the triangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TriangleRegime {
    /// x ≈ (α1 N, (1−α1) N), time t/N.
    A,
    /// x ≈ (β √N, N), time t/√N, first coordinate scaled by √N.
    B,
    /// x = (N, k), unscaled time; first coordinate only.
    C,
}

/// Limit curve of the triangle in the given regime. `x0` is α1 for (a), β
/// for (b) and unused for (c); `t_end` bounds the integrated regime (b).
pub fn triangle_regime_curves(
    regime: TriangleRegime,
    rates: &TriangleRates,
    x0: f64,
    t_end: f64,
) -> Result<LimitCurve, LimitError> {
    let TriangleRates { k1, k2, k12 } = *rates;
    if !(k1 > 0.0 && k2 > 0.0 && k12 > 0.0) {
        return Err(LimitError::InvalidParameter("triangle rates must be positive".into()));
    }
    let params = [("kappa1", k1), ("kappa2", k2), ("kappa12", k12)];
    match regime {
        TriangleRegime::A => {
            if !(0.0..=1.0).contains(&x0) {
                return Err(LimitError::InvalidParameter(format!("alpha1 must be in [0, 1], got {x0}")));
            }
            Ok(LimitCurve::closed(
                &["x1", "x2"],
                &[params[0], params[1], params[2], ("alpha1", x0)],
                f64::INFINITY,
                false,
                move |t| vec![x0, (1.0 - x0) * (-k12 * x0 * t).exp()],
            ))
        }
        TriangleRegime::B => {
            if !(x0 >= 0.0) {
                return Err(LimitError::InvalidParameter(format!("beta must be ≥ 0, got {x0}")));
            }
            let mut c = integrate_field(
                move |x, out| {
                    out[0] = k2 * x[1];
                    out[1] = -k12 * x[0] * x[1];
                },
                &[x0, 1.0],
                &OdeOptions::new(t_end),
                vec!["x1".into(), "x2".into()],
            )?;
            c.parameters.extend(params.iter().map(|(k, v)| (k.to_string(), *v)));
            c.parameters.insert("beta".into(), x0);
            Ok(c)
        }
        TriangleRegime::C => {
            Ok(LimitCurve::closed(&["x1"], &params, f64::INFINITY, false, move |t| vec![(-k1 * t).exp()]))
        }
    }
}

/// Limit curves of the network 0 ⇄ S1+S2 (κ0, κ1), pS1+S2 ⇄ pS1+2S2
/// (κ2, κ3) started near the horizontal axis at (α1 N, b).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CapHorizontal {
    pub k0: f64,
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub alpha1: f64,
}

impl CapHorizontal {
    pub fn new(k0: f64, k1: f64, k2: f64, k3: f64, alpha1: f64) -> Result<Self, LimitError> {
        if [k0, k1, k2, k3, alpha1].iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(LimitError::InvalidParameter("rates and alpha1 must be positive".into()));
        }
        Ok(CapHorizontal { k0, k1, k2, k3, alpha1 })
    }

    fn rho(&self) -> f64 {
        self.k2 / self.k3
    }

    /// e^{κ2/κ3} − 1.
    fn norm(&self) -> f64 {
        self.rho().exp_m1()
    }

    pub fn t_inf(&self) -> f64 {
        self.alpha1 / (self.k0 * self.norm())
    }

    /// First coordinate of the process with the empty-S2 periods removed.
    pub fn y_inf(&self, t: f64) -> f64 {
        self.alpha1 * (-self.k1 * self.rho() * t).exp()
    }

    /// Scaled cumulative time spent with no S2, as a function of the
    /// time-changed clock.
    pub fn a(&self, t: f64) -> f64 {
        -self.t_inf() * (-self.k1 * self.rho() * t).exp_m1()
    }

    /// Closed-form inverse of [`CapHorizontal::a`] on [0, t∞).
    pub fn a_inv(&self, t: f64) -> Result<f64, LimitError> {
        let t_inf = self.t_inf();
        if !(0.0..t_inf).contains(&t) {
            return Err(LimitError::Domain { t, t_end: t_inf, close: ')' });
        }
        Ok(-(self.k3 / (self.k1 * self.k2)) * ((self.alpha1 - self.k0 * self.norm() * t) / self.alpha1).ln())
    }

    /// Inverse of `a` by bisection, as a cross-check of [`CapHorizontal::a_inv`].
    pub fn a_inv_bisect(&self, t: f64) -> Result<f64, LimitError> {
        let t_inf = self.t_inf();
        if !(0.0..t_inf).contains(&t) {
            return Err(LimitError::Domain { t, t_end: t_inf, close: ')' });
        }
        Ok(invert_increasing(|s| self.a(s), t, BISECTION_TOLERANCE))
    }

    /// α1 (1 − t/t∞), the scaled first coordinate on the original clock.
    pub fn linear(&self, t: f64) -> Result<f64, LimitError> {
        let t_inf = self.t_inf();
        if !(0.0..t_inf).contains(&t) {
            return Err(LimitError::Domain { t, t_end: t_inf, close: ')' });
        }
        Ok(self.alpha1 * (1.0 - t / t_inf))
    }

    fn params(&self) -> [(&'static str, f64); 5] {
        [("kappa0", self.k0), ("kappa1", self.k1), ("kappa2", self.k2), ("kappa3", self.k3), ("alpha1", self.alpha1)]
    }

    pub fn y_inf_curve(&self) -> LimitCurve {
        let s = *self;
        LimitCurve::closed(&["y_inf"], &self.params(), f64::INFINITY, false, move |t| vec![s.y_inf(t)])
    }

    pub fn a_curve(&self) -> LimitCurve {
        let s = *self;
        LimitCurve::closed(&["a"], &self.params(), f64::INFINITY, false, move |t| vec![s.a(t)])
    }

    pub fn a_inv_curve(&self) -> LimitCurve {
        let s = *self;
        LimitCurve::closed(&["a_inv"], &self.params(), self.t_inf(), true, move |t| {
            vec![s.a_inv(t).unwrap_or(f64::INFINITY)]
        })
    }

    /// x1/N on timescale N t, defined on [0, t∞).
    pub fn linear_curve(&self) -> LimitCurve {
        let s = *self;
        LimitCurve::closed(&["x1"], &self.params(), self.t_inf(), true, move |t| vec![s.linear(t).unwrap_or(0.0)])
    }
}

/// Smallest s with f(s) ≥ target for nondecreasing f with f(0) ≤ target,
/// to absolute tolerance `tol` in s (relative for large s).
pub fn invert_increasing(f: impl Fn(f64) -> f64, target: f64, tol: f64) -> f64 {
    let mut lo = 0.0;
    let mut hi = 1.0;
    while f(hi) < target {
        lo = hi;
        hi *= 2.0;
        if hi > 1e300 {
            return f64::INFINITY;
        }
    }
    while hi - lo > tol * hi.max(1.0) {
        let mid = 0.5 * (lo + hi);
        if f(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Adaptive Simpson quadrature of `f` on [a, b].
pub fn adaptive_simpson(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn rec(
        f: &impl Fn(f64) -> f64,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) + rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
    }
    if a == b {
        return 0.0;
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    rec(f, a, b, fa, fm, fb, whole, tol, 50)
}

/// Limit curves for the network 0 ⇄ S1, pS1 + qS2 → (q+1)S2 (κ3),
/// (q+1)S2 → qS2 (κ4) started at (⌊δN⌋, ⌊(1−δ)N/p⌋).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgazziCurves {
    pub p: u32,
    pub q: u32,
    pub k3: f64,
    pub k4: f64,
    pub delta: f64,
}

impl AgazziCurves {
    pub fn new(p: u32, q: u32, k3: f64, k4: f64, delta: f64) -> Result<Self, LimitError> {
        if p < 2 || q < 2 {
            return Err(LimitError::InvalidParameter(format!("p and q must be ≥ 2, got p={p}, q={q}")));
        }
        if !(k3 > 0.0 && k4 > 0.0) {
            return Err(LimitError::InvalidParameter("rates must be positive".into()));
        }
        if !(delta > 0.0 && delta <= 1.0) {
            return Err(LimitError::InvalidParameter(format!("delta must be in (0, 1], got {delta}")));
        }
        Ok(AgazziCurves { p, q, k3, k4, delta })
    }

    /// Scaled first coordinate on timescale t/N^{p−1}.
    pub fn y1(&self, t: f64) -> f64 {
        let p = self.p as f64;
        let d = self.delta;
        d / (p * (p - 1.0) * d.powf(p - 1.0) * self.k3 * t + 1.0).powf(1.0 / (p - 1.0))
    }

    pub fn y2(&self, t: f64) -> f64 {
        (1.0 - self.y1(t)) / self.p as f64
    }

    fn phi_integrand(&self, s: f64) -> f64 {
        (self.p as f64).powi(self.q as i32) / (1.0 - self.y1(s)).powi(self.q as i32)
    }

    /// φ(t) = ∫₀ᵗ p^q / (1 − y1(s))^q ds; finite only when δ < 1.
    pub fn phi(&self, t: f64) -> Result<f64, LimitError> {
        if self.delta >= 1.0 {
            return Err(LimitError::InvalidParameter("phi diverges at 0 when delta = 1".into()));
        }
        if !(t >= 0.0) {
            return Err(LimitError::Domain { t, t_end: f64::INFINITY, close: ')' });
        }
        Ok(adaptive_simpson(&|s| self.phi_integrand(s), 0.0, t, 1e-13))
    }

    /// φ⁻¹ by bisection.
    pub fn phi_inv(&self, t: f64) -> Result<f64, LimitError> {
        self.phi(0.0)?;
        if !(t >= 0.0) {
            return Err(LimitError::Domain { t, t_end: f64::INFINITY, close: ')' });
        }
        Ok(invert_increasing(|s| self.phi(s).unwrap_or(f64::INFINITY), t, 1e-12))
    }

    /// Scaled state on timescale t/N^{p+q−1}: (y1, y2)(φ⁻¹(t)).
    pub fn x(&self, t: f64) -> Result<[f64; 2], LimitError> {
        let s = self.phi_inv(t)?;
        Ok([self.y1(s), self.y2(s)])
    }

    /// Scaled second coordinate on timescale t/N^q once the first one is
    /// negligible.
    pub fn final_decay(&self, t: f64) -> f64 {
        let q = self.q as f64;
        1.0 / (1.0 + self.k4 * q * t).powf(1.0 / q)
    }

    fn params(&self) -> [(&'static str, f64); 5] {
        [("p", self.p as f64), ("q", self.q as f64), ("kappa3", self.k3), ("kappa4", self.k4), ("delta", self.delta)]
    }

    pub fn y_curve(&self) -> LimitCurve {
        let s = *self;
        LimitCurve::closed(&["y1", "y2"], &self.params(), f64::INFINITY, false, move |t| vec![s.y1(t), s.y2(t)])
    }

    pub fn x_curve(&self) -> Result<LimitCurve, LimitError> {
        self.phi(0.0)?;
        let s = *self;
        Ok(LimitCurve::closed(&["x1", "x2"], &self.params(), f64::INFINITY, false, move |t| {
            s.x(t).map(|v| v.to_vec()).unwrap_or_else(|_| vec![f64::NAN; 2])
        }))
    }

    pub fn final_decay_curve(&self) -> LimitCurve {
        let s = *self;
        LimitCurve::closed(&["x2"], &self.params(), f64::INFINITY, false, move |t| vec![s.final_decay(t)])
    }
}

/// Markov process on (0, 1] with generator
/// A f(x) = r1 / x^{p−1} ∫₀¹ (f(x u^{δ1}) − f(x)) du.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimitJumpProcess {
    pub r1: f64,
    pub delta1: f64,
    pub p: u32,
    pub alpha: f64,
}

fn factorial(n: u32) -> f64 {
    (1..=n).map(f64::from).product()
}

impl LimitJumpProcess {
    pub fn new(r1: f64, delta1: f64, p: u32, alpha: f64) -> Result<Self, LimitError> {
        if !(r1 > 0.0 && delta1 > 0.0) {
            return Err(LimitError::InvalidParameter("r1 and delta1 must be positive".into()));
        }
        if p < 2 {
            return Err(LimitError::InvalidParameter(format!("p must be ≥ 2, got {p}")));
        }
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(LimitError::InvalidParameter(format!("alpha must be in (0, 1], got {alpha}")));
        }
        Ok(LimitJumpProcess { r1, delta1, p, alpha })
    }

    /// Constants for 0 ⇄ S1+S2 (κ0, κ1), pS1+S2 ⇄ pS1+2S2 (κ2, κ3).
    pub fn from_rates(k0: f64, k1: f64, k3: f64, p: u32, alpha: f64) -> Result<Self, LimitError> {
        Self::new(cap_r1(k0, k1, p), cap_delta1(k1, k3, p), p, alpha)
    }

    /// Jump times and states (t_k, V_k), k = 0..=n_jumps, with
    /// V_k = V_{k−1} exp(−δ1 E_k) and t_k = t_{k−1} + V_{k−1}^{p−1} φ_k / r1.
    pub fn sample(&self, seed: u64, n_jumps: usize) -> Result<Vec<(f64, f64)>, LimitError> {
        if n_jumps == 0 {
            return Err(LimitError::InvalidParameter("n_jumps must be ≥ 1".into()));
        }
        let mut rng = stream_rng(seed, 0);
        let mut out = Vec::with_capacity(n_jumps + 1);
        let (mut t, mut v) = (0.0, self.alpha);
        out.push((t, v));
        for _ in 0..n_jumps {
            let phi: f64 = rng.sample(Exp1);
            let e: f64 = rng.sample(Exp1);
            t += v.powi(self.p as i32 - 1) * phi / self.r1;
            v *= (-self.delta1 * e).exp();
            out.push((t, v));
        }
        Ok(out)
    }

    /// Mean explosion time E[lim t_k] = α^{p−1} / (r1 (1 − E[e^{−(p−1)δ1 E}])).
    pub fn mean_explosion_time(&self) -> f64 {
        let m = 1.0 / (1.0 + (self.p as f64 - 1.0) * self.delta1);
        self.alpha.powi(self.p as i32 - 1) / (self.r1 * (1.0 - m))
    }
}

/// r1 = κ0/(p−1)! · (κ0/κ1)^{p−1}.
pub fn cap_r1(k0: f64, k1: f64, p: u32) -> f64 {
    k0 / factorial(p - 1) * (k0 / k1).powi(p as i32 - 1)
}

/// δ1 = κ3 (p−1)! / κ1.
pub fn cap_delta1(k1: f64, k3: f64, p: u32) -> f64 {
    k3 * factorial(p - 1) / k1
}

/// Poisson(ρ) conditioned on being ≥ 1: ρ^x / x! / (e^ρ − 1).
pub fn conditioned_poisson(rho: f64, x: u64) -> f64 {
    if x == 0 {
        return 0.0;
    }
    (x as f64 * rho.ln() - crate::structural::ln_factorial(x)).exp() / rho.exp_m1()
}
