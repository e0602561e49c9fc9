//! Chernov-type bounds for additive functionals of finite Markov chains,
//! with an empirical harness.
//!
//! The deviation level of the bounds is called `gamma_dev` to keep it apart
//! from the exponent `γ` of the geometry.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::par;
use crate::rng;
use crate::slt::ChainKernel;

/// Inputs of the discrete and continuous bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundInput {
    /// `n`, or `t` in continuous time.
    pub horizon: f64,
    pub gamma_dev: f64,
    /// `σ² >= π(f²)`.
    pub sigma2: f64,
    pub pi_star: f64,
    /// Mixing time.
    pub t_mix: f64,
}

/// A bound value; `vacuous` when it is at least one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Bound {
    pub value: f64,
    pub k: f64,
    pub vacuous: bool,
}

fn k_value(arg: f64) -> Result<f64> {
    let k = -arg.log2();
    if !(k > 0.0) {
        return Err(Error::KNonpositive(k));
    }
    Ok(k)
}

fn evaluate(horizon: f64, k: f64, t_mix: f64, exponent: f64) -> Bound {
    let blocks = (horizon / (k * t_mix) - 1.0).floor();
    let value = 4.0 * (-blocks * exponent).exp();
    Bound { value, k, vacuous: value >= 1.0 }
}

fn check_common(input: &BoundInput) -> Result<()> {
    let BoundInput { horizon, sigma2, pi_star, t_mix, .. } = *input;
    if !(horizon >= 0.0) || !(sigma2 > 0.0) || !(pi_star > 0.0 && pi_star <= 1.0) || !(t_mix >= 1.0) {
        return Err(Error::InvalidParameter(format!("{input:?}")));
    }
    let max = input.sigma2.min(0.5);
    if !(input.gamma_dev > 0.0) || input.gamma_dev > max {
        return Err(Error::GammaOutOfRange { gamma: input.gamma_dev, max });
    }
    Ok(())
}

/// `4 exp(-⌊n/(k T) - 1⌋ γ²/(6σ²))` with `k = -log2(π_* γ²/(6σ²))`.
pub fn chernov_discrete(input: &BoundInput) -> Result<Bound> {
    check_common(input)?;
    let ratio = input.gamma_dev * input.gamma_dev / (6.0 * input.sigma2);
    let k = k_value(input.pi_star * ratio)?;
    Ok(evaluate(input.horizon, k, input.t_mix, ratio))
}

/// The continuous-time bound; same expression with `t` for `n`.
pub fn chernov_continuous(input: &BoundInput) -> Result<Bound> {
    chernov_discrete(input)
}

/// Bound on `P[∫_0^t h(X_s) ds - t π(h) >= δ t π(h)]`.
///
/// `sigma2` defaults to `Var_π(h)`.
pub fn chernov_functional(h: &[f64], delta: f64, t: f64, pi: &[f64], t_mix: f64, sigma2: Option<f64>) -> Result<Bound> {
    if h.len() != pi.len() || h.is_empty() {
        return Err(Error::InvalidParameter("h and π have different lengths".into()));
    }
    let ph: f64 = h.iter().zip(pi).map(|(a, p)| a * p).sum();
    let var: f64 = h.iter().zip(pi).map(|(a, p)| p * (a - ph).powi(2)).sum();
    let s2 = sigma2.unwrap_or(var);
    if s2 < var * (1.0 - 1e-12) {
        return Err(Error::InvalidParameter(format!("σ² = {s2} is below Var_π(h) = {var}")));
    }
    if !(s2 > 0.0) {
        return Err(Error::BoundInapplicable("h has zero variance".into()));
    }
    if !(ph > 0.0) {
        return Err(Error::InvalidParameter(format!("π(h) = {ph} must be positive")));
    }
    let sup = h.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let max = (s2 / (2.0 * ph * sup)).min(1.0);
    if !(delta > 0.0) || delta > max {
        return Err(Error::DeltaOutOfRange { delta, max });
    }
    let pi_star = pi.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(t_mix >= 1.0) || !(t >= 0.0) || !(pi_star > 0.0) {
        return Err(Error::InvalidParameter("horizon, mixing time or π out of range".into()));
    }
    let ratio = delta * delta * ph * ph / (6.0 * s2);
    let k = k_value(ratio * pi_star)?;
    Ok(evaluate(t, k, t_mix, ratio))
}

/// Wilson score interval at this normal quantile (99%).
pub const WILSON_Z: f64 = 2.576;

/// Monte Carlo frequency with its Wilson interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TailEstimate {
    pub frequency: f64,
    pub lower: f64,
    pub upper: f64,
    pub replicas: usize,
}

pub fn wilson(successes: usize, trials: usize, z: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let centre = (p + z2 / (2.0 * n)) / (1.0 + z2 / n);
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / (1.0 + z2 / n);
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

/// Frequency of `{Σ_{i<n} f(X_i) >= n γ}` for the chain started from `ν`.
/// `f` is centred under `π` first; values outside `[-1, 1]` after centring
/// are refused.
pub fn empirical_tail<K: ChainKernel + ?Sized>(
    kernel: &K,
    f: &[f64],
    n: usize,
    gamma_dev: f64,
    replicas: usize,
    seed: u64,
) -> Result<TailEstimate> {
    let m = kernel.n_states();
    if f.len() != m {
        return Err(Error::InvalidParameter("f has the wrong length".into()));
    }
    let pf: f64 = (0..m).map(|x| kernel.pi(x) * f[x]).sum();
    let fc: Vec<f64> = f.iter().map(|v| v - pf).collect();
    if let Some(bad) = fc.iter().find(|v| v.abs() > 1.0 + 1e-12) {
        return Err(Error::FOutOfRange(*bad));
    }
    let rows: Vec<Vec<f64>> = (0..m)
        .map(|x| rng::cumulative(&(0..m).map(|y| kernel.transition(x, y)).collect::<Vec<_>>()))
        .collect();
    let start = rng::cumulative(&(0..m).map(|x| kernel.nu(x)).collect::<Vec<_>>());
    let level = n as f64 * gamma_dev;
    let hits: usize = par::map_replicas(replicas, |k| {
        let mut r = rng::replica(seed, k as u64);
        let mut x = rng::sample_cumulative(&mut r, &start);
        let mut s = 0.0;
        for i in 0..n {
            s += fc[x];
            if i + 1 < n {
                x = rng::sample_cumulative(&mut r, &rows[x]);
            }
        }
        (s >= level) as usize
    })
    .into_iter()
    .sum();
    let (lower, upper) = wilson(hits, replicas, WILSON_Z);
    Ok(TailEstimate { frequency: hits as f64 / replicas.max(1) as f64, lower, upper, replicas })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn check_input() -> BoundInput {
        BoundInput { horizon: 1000.0, gamma_dev: 0.1, sigma2: 0.5, pi_star: 0.1, t_mix: 5.0 }
    }

    #[test]
    fn worked_value() {
        let b = chernov_discrete(&check_input()).unwrap();
        let k = -(0.1f64 * 0.01 / 3.0).log2();
        assert!((b.k - k).abs() < 1e-12);
        assert!((b.k - 11.55).abs() < 0.01);
        assert!((b.value - 4.0 * (-16.0 * 0.01f64 / 3.0).exp()).abs() < 1e-12);
        assert!((b.value - 3.79).abs() < 0.01);
        assert!(b.vacuous);
    }

    #[test]
    fn guards() {
        let mut i = check_input();
        i.gamma_dev = 0.6;
        assert!(matches!(chernov_discrete(&i), Err(Error::GammaOutOfRange { .. })));
        let i = BoundInput { pi_star: 1.0, sigma2: 1e-3, gamma_dev: 1e-3, ..check_input() };
        // π_* γ²/(6σ²) < 1 here, so k is still positive
        assert!(chernov_discrete(&i).is_ok());
    }

    #[test]
    fn short_horizon_is_vacuous() {
        let i = BoundInput { horizon: 10.0, ..check_input() };
        let b = chernov_continuous(&i).unwrap();
        assert!(b.value >= 4.0);
    }

    #[test]
    fn constant_h_has_no_bound() {
        let r = chernov_functional(&[2.0, 2.0], 0.1, 100.0, &[0.5, 0.5], 1.0, None);
        assert!(matches!(r, Err(Error::BoundInapplicable(_))));
    }

    #[test]
    fn wilson_contains_point_estimate() {
        let (lo, hi) = wilson(30, 100, WILSON_Z);
        assert!(lo < 0.3 && 0.3 < hi);
        assert_eq!(wilson(0, 50, WILSON_Z).0, 0.0);
    }
}
