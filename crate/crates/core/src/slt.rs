//! Soft local times.
//!
//! A Poisson point process on `Σ x [0, ∞)` with intensity `μ ⊗ dx` drives a
//! Markov chain: at every step the soft local time `G` grows along the
//! current transition density until it covers a new point, whose state is the
//! next position of the chain. Several chains (or a chain and an i.i.d.
//! sequence) reading the same point process have nearly equal ranges.
//!
//! States are organised in *fibre groups*: sets of states on which every
//! density row is constant. The process restricted to a group is then a
//! Poisson process of rate `μ(group)` with i.i.d. marks drawn from
//! `μ / μ(group)`, and `G` only needs one value per group. A general kernel
//! uses one group per state.

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::{self, StreamRng};

/// The interface the soft-local-times engine couples over.
pub trait ChainKernel: Sync {
    fn n_states(&self) -> usize;
    fn n_groups(&self) -> usize;
    fn group_of(&self, state: usize) -> usize;
    /// Number of states in a group.
    fn group_size(&self, group: usize) -> usize;
    /// `μ(group)`.
    fn group_rate(&self, group: usize) -> f64;
    /// State in `group` drawn with probability `μ(z) / μ(group)`, from a
    /// uniform `u` in `[0, 1)`.
    fn group_mark(&self, group: usize, u: f64) -> usize;

    fn mu(&self, state: usize) -> f64;
    fn transition(&self, x: usize, y: usize) -> f64;
    fn pi(&self, state: usize) -> f64;
    fn nu(&self, state: usize) -> f64;

    /// `ρ(x, ·)`, one value per group.
    fn density_row(&self, x: usize, out: &mut [f64]);
    /// Rows coincide for states with equal keys.
    fn row_key(&self, x: usize) -> usize {
        x
    }
    /// `ν / μ`, one value per group.
    fn initial_row(&self, out: &mut [f64]);
    /// `g = π / μ`, one value per group.
    fn pi_density(&self, out: &mut [f64]);

    /// `π_* = min π`.
    fn pi_star(&self) -> f64 {
        (0..self.n_states()).map(|x| self.pi(x)).fold(f64::INFINITY, f64::min)
    }

    /// Per group: `Var_π ρ_z` and `‖ρ_z‖_∞`.
    fn density_moments(&self) -> DensityMoments {
        let m = self.n_groups();
        let mut g = vec![0.0; m];
        self.pi_density(&mut g);
        let mut var = vec![0.0; m];
        let mut sup = vec![0.0f64; m];
        let mut mean = vec![0.0; m];
        let mut row = vec![0.0; m];
        for x in 0..self.n_states() {
            self.density_row(x, &mut row);
            let p = self.pi(x);
            for z in 0..m {
                mean[z] += p * row[z];
                var[z] += p * (row[z] - g[z]).powi(2);
                sup[z] = sup[z].max(row[z]);
            }
        }
        DensityMoments { g, var, sup, mean }
    }
}

/// Moments of the transition densities under `π`, per fibre group.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMoments {
    /// `g(z) = π(z) / μ(z)`.
    pub g: Vec<f64>,
    /// `Var_π ρ_z`.
    pub var: Vec<f64>,
    /// `max_x ρ(x, z)`.
    pub sup: Vec<f64>,
    /// `π(ρ_z)`, equal to `g(z)` when `π` is invariant.
    pub mean: Vec<f64>,
}

/// A dense transition matrix with one fibre group per state.
#[derive(Debug, Clone)]
pub struct DenseKernel {
    n: usize,
    p: Vec<f64>,
    mu: Vec<f64>,
    pi: Vec<f64>,
    nu: Vec<f64>,
}

impl DenseKernel {
    /// Validates the rows and `μ`, and computes `π`.
    pub fn new(p: Vec<Vec<f64>>, mu: Vec<f64>, nu: Vec<f64>) -> Result<Self> {
        let n = p.len();
        if n == 0 || mu.len() != n || nu.len() != n || p.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidParameter("kernel dimensions disagree".into()));
        }
        for (i, r) in p.iter().enumerate() {
            let s: f64 = r.iter().sum();
            if (s - 1.0).abs() > 1e-10 || r.iter().any(|&v| v < 0.0) {
                return Err(Error::InvalidParameter(format!("row {i} is not a distribution (sum {s})")));
            }
        }
        if mu.iter().any(|&m| m <= 0.0) {
            return Err(Error::InvalidParameter("base measure must have full support".into()));
        }
        let s: f64 = nu.iter().sum();
        if (s - 1.0).abs() > 1e-10 || nu.iter().any(|&v| v < 0.0) {
            return Err(Error::InvalidParameter("initial law is not a distribution".into()));
        }
        let flat: Vec<f64> = p.into_iter().flatten().collect();
        let pi = stationary(n, &flat)?;
        Ok(DenseKernel { n, p: flat, mu, pi, nu })
    }

    /// Same chain with `μ` the counting measure and `ν = π`.
    pub fn stationary_start(p: Vec<Vec<f64>>) -> Result<Self> {
        let n = p.len();
        let k = DenseKernel::new(p, vec![1.0; n], vec![1.0 / n as f64; n])?;
        let pi = k.pi.clone();
        Ok(DenseKernel { nu: pi, ..k })
    }

    /// Kernel with every row equal to `π` (an i.i.d. sequence), same `μ`.
    pub fn iid(pi: Vec<f64>, mu: Vec<f64>) -> Result<Self> {
        let n = pi.len();
        let rows = vec![pi.clone(); n];
        let mut k = DenseKernel::new(rows, mu, pi.clone())?;
        k.pi = pi;
        Ok(k)
    }

    pub fn with_nu(mut self, nu: Vec<f64>) -> Self {
        self.nu = nu;
        self
    }

    pub fn matrix(&self) -> &[f64] {
        &self.p
    }

    pub fn pi_vec(&self) -> &[f64] {
        &self.pi
    }

    pub fn mu_vec(&self) -> &[f64] {
        &self.mu
    }
}

/// Invariant distribution by a dense linear solve.
fn stationary(n: usize, p: &[f64]) -> Result<Vec<f64>> {
    use nalgebra::{DMatrix, DVector};
    // (P^T - I) π = 0 with the last equation replaced by Σ π = 1
    let mut a = DMatrix::from_fn(n, n, |i, j| p[j * n + i] - if i == j { 1.0 } else { 0.0 });
    let mut b = DVector::zeros(n);
    for j in 0..n {
        a[(n - 1, j)] = 1.0;
    }
    b[n - 1] = 1.0;
    let pi = a
        .lu()
        .solve(&b)
        .ok_or_else(|| Error::InvalidParameter("kernel is not irreducible".into()))?;
    Ok(pi.iter().map(|v| v.max(0.0)).collect())
}

impl ChainKernel for DenseKernel {
    fn n_states(&self) -> usize {
        self.n
    }
    fn n_groups(&self) -> usize {
        self.n
    }
    fn group_of(&self, state: usize) -> usize {
        state
    }
    fn group_size(&self, _group: usize) -> usize {
        1
    }
    fn group_rate(&self, group: usize) -> f64 {
        self.mu[group]
    }
    fn group_mark(&self, group: usize, _u: f64) -> usize {
        group
    }
    fn mu(&self, state: usize) -> f64 {
        self.mu[state]
    }
    fn transition(&self, x: usize, y: usize) -> f64 {
        self.p[x * self.n + y]
    }
    fn pi(&self, state: usize) -> f64 {
        self.pi[state]
    }
    fn nu(&self, state: usize) -> f64 {
        self.nu[state]
    }
    fn density_row(&self, x: usize, out: &mut [f64]) {
        for (y, o) in out.iter_mut().enumerate() {
            *o = self.p[x * self.n + y] / self.mu[y];
        }
    }
    fn initial_row(&self, out: &mut [f64]) {
        for (y, o) in out.iter_mut().enumerate() {
            *o = self.nu[y] / self.mu[y];
        }
    }
    fn pi_density(&self, out: &mut [f64]) {
        for (y, o) in out.iter_mut().enumerate() {
            *o = self.pi[y] / self.mu[y];
        }
    }
}

/// Lazily generated Poisson points, one ascending list per fibre group.
///
/// Group `g` reads its own random stream, so the realisation does not depend
/// on the order in which groups are extended.
#[derive(Debug, Clone)]
pub struct FiberedPoissonProcess {
    rates: Vec<f64>,
    levels: Vec<Vec<f64>>,
    marks: Vec<Vec<u32>>,
    streams: Vec<Option<StreamRng>>,
    seed: u64,
}

impl FiberedPoissonProcess {
    pub fn new<K: ChainKernel + ?Sized>(kernel: &K, seed: u64) -> Self {
        let m = kernel.n_groups();
        FiberedPoissonProcess {
            rates: (0..m).map(|g| kernel.group_rate(g)).collect(),
            levels: vec![Vec::new(); m],
            marks: vec![Vec::new(); m],
            streams: vec![None; m],
            seed,
        }
    }

    pub fn n_groups(&self) -> usize {
        self.rates.len()
    }

    /// The `j`-th point (level, state) of group `g`, generating as needed.
    pub fn point<K: ChainKernel + ?Sized>(&mut self, kernel: &K, g: usize, j: usize) -> (f64, usize) {
        while self.levels[g].len() <= j {
            let seed = self.seed;
            let rate = self.rates[g];
            let s = self.streams[g].get_or_insert_with(|| rng::stream(seed, rng::domain::POISSON_FIBRE | g as u64));
            let gap = rng::exp1(s) / rate;
            let u: f64 = s.random();
            let last = self.levels[g].last().copied().unwrap_or(0.0);
            self.levels[g].push(last + gap);
            self.marks[g].push(kernel.group_mark(g, u) as u32);
        }
        (self.levels[g][j], self.marks[g][j] as usize)
    }

    /// Points generated so far in group `g`.
    pub fn generated(&self, g: usize) -> (&[f64], &[u32]) {
        (&self.levels[g], &self.marks[g])
    }
}

/// One step of a soft-local-time construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Step {
    pub xi: f64,
    pub state: usize,
    pub group: usize,
    pub level: f64,
}

/// The accumulator `G` and, per group, the number of points consumed.
#[derive(Debug, Clone)]
pub struct SoftLocalTime {
    pub g: Vec<f64>,
    consumed: Vec<usize>,
    pub steps: usize,
    log: Option<Vec<(usize, f64, usize)>>,
}

impl SoftLocalTime {
    pub fn new(n_groups: usize) -> Self {
        SoftLocalTime { g: vec![0.0; n_groups], consumed: vec![0; n_groups], steps: 0, log: None }
    }

    /// Record `(state, level, step)` of every consumed point.
    pub fn with_log(mut self) -> Self {
        self.log = Some(Vec::new());
        self
    }

    pub fn log(&self) -> Option<&[(usize, f64, usize)]> {
        self.log.as_deref()
    }

    pub fn consumed(&self, group: usize) -> usize {
        self.consumed[group]
    }

    /// Grow `G` along `row` until it covers the next point.
    pub fn advance<K: ChainKernel + ?Sized>(
        &mut self,
        ppp: &mut FiberedPoissonProcess,
        kernel: &K,
        row: &[f64],
    ) -> Result<Step> {
        let mut best = f64::INFINITY;
        let mut arg = usize::MAX;
        for (z, &r) in row.iter().enumerate() {
            if r <= 0.0 {
                continue;
            }
            let (v, _) = ppp.point(kernel, z, self.consumed[z]);
            let t = (v - self.g[z]) / r;
            // strict comparison: ties go to the lowest group
            if t < best {
                best = t;
                arg = z;
            }
        }
        if arg == usize::MAX {
            return Err(Error::DegenerateRow);
        }
        let xi = best.max(0.0);
        let (level, state) = ppp.point(kernel, arg, self.consumed[arg]);
        for (z, &r) in row.iter().enumerate() {
            if r <= 0.0 || z == arg {
                continue;
            }
            let grown = self.g[z] + xi * r;
            // rounding must not let G cover a point that was not selected
            let (v, _) = ppp.point(kernel, z, self.consumed[z]);
            self.g[z] = if grown >= v { v.next_down() } else { grown };
        }
        self.g[arg] = level;
        self.consumed[arg] += 1;
        if let Some(log) = self.log.as_mut() {
            log.push((state, level, self.steps));
        }
        self.steps += 1;
        Ok(Step { xi, state, group: arg, level })
    }

    /// Check that the points at or below `G` are exactly the consumed ones.
    pub fn covers_exactly_consumed<K: ChainKernel + ?Sized>(
        &self,
        ppp: &mut FiberedPoissonProcess,
        kernel: &K,
    ) -> bool {
        (0..self.g.len()).all(|z| {
            let c = self.consumed[z];
            let (below, _) = ppp.generated(z);
            let ok_below = below[..c].iter().all(|&v| v <= self.g[z]);
            let (next, _) = ppp.point(kernel, z, c);
            ok_below && next > self.g[z]
        })
    }

    /// States with a point at or below `G` (the range identity).
    pub fn covered_states(&self, ppp: &FiberedPoissonProcess) -> Vec<usize> {
        let mut out = Vec::new();
        for z in 0..self.g.len() {
            let (levels, marks) = ppp.generated(z);
            for (v, m) in levels.iter().zip(marks) {
                if *v <= self.g[z] {
                    out.push(*m as usize);
                } else {
                    break;
                }
            }
        }
        out.sort_unstable();
        out.dedup();
        out
    }
}

/// Which rows drive a soft local time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Drive {
    /// `ν/μ` first, then `ρ(Z_{k-1}, ·)`.
    Chain,
    /// `g` at every step: an i.i.d. sequence with marginal `π`.
    Iid,
}

/// A chain (or i.i.d. sequence) read off a shared point process.
#[derive(Debug, Clone)]
pub struct SltChain {
    pub slt: SoftLocalTime,
    pub drive: Drive,
    pub path: Vec<usize>,
    row: Vec<f64>,
    row_key: Option<usize>,
}

impl SltChain {
    pub fn new<K: ChainKernel + ?Sized>(kernel: &K, drive: Drive) -> Self {
        let m = kernel.n_groups();
        let mut row = vec![0.0; m];
        match drive {
            Drive::Chain => kernel.initial_row(&mut row),
            Drive::Iid => kernel.pi_density(&mut row),
        }
        SltChain { slt: SoftLocalTime::new(m), drive, path: Vec::new(), row, row_key: None }
    }

    pub fn with_log(mut self) -> Self {
        self.slt = self.slt.with_log();
        self
    }

    pub fn next<K: ChainKernel + ?Sized>(&mut self, ppp: &mut FiberedPoissonProcess, kernel: &K) -> Result<Step> {
        if self.drive == Drive::Chain {
            if let Some(&last) = self.path.last() {
                let key = kernel.row_key(last);
                if self.row_key != Some(key) {
                    kernel.density_row(last, &mut self.row);
                    self.row_key = Some(key);
                }
            }
        }
        let step = self.slt.advance(ppp, kernel, &self.row)?;
        self.path.push(step.state);
        Ok(step)
    }

    /// Extend until the path has `len` elements.
    pub fn extend_to<K: ChainKernel + ?Sized>(
        &mut self,
        ppp: &mut FiberedPoissonProcess,
        kernel: &K,
        len: usize,
    ) -> Result<()> {
        while self.path.len() < len {
            self.next(ppp, kernel)?;
        }
        Ok(())
    }
}

/// `⌊n(1-ε)⌋` and `⌈n(1+ε)⌉`.
pub fn window_indices(n: usize, eps: f64) -> (usize, usize) {
    let nf = n as f64;
    ((nf * (1.0 - eps)).floor() as usize, (nf * (1.0 + eps) - 1e-12).ceil() as usize)
}

/// `{a_i}_{i<la} ⊆ {b_i}_{i<lb}`, states bounded by `n_states`.
pub fn range_subset(a: &[usize], b: &[usize], n_states: usize) -> bool {
    let mut seen = vec![false; n_states];
    for &x in b {
        seen[x] = true;
    }
    a.iter().all(|&x| seen[x])
}

/// Output of the chain / i.i.d. coupling.
#[derive(Debug, Clone, PartialEq)]
pub struct IidCoupling {
    /// `Z_0, ..., Z_n`.
    pub z: Vec<usize>,
    /// `U_0, ..., U_{⌈n(1+ε)⌉}`.
    pub u: Vec<usize>,
    pub good: bool,
}

/// Output of the two-chain coupling.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainCoupling {
    /// `Z^1_1, ..., Z^1_{⌈n(1+ε)⌉}`.
    pub z1: Vec<usize>,
    /// `Z^2_1, ..., Z^2_n`.
    pub z2: Vec<usize>,
    pub good: bool,
}

fn check_eps(eps: f64) -> Result<()> {
    if !(0.0..1.0).contains(&eps) {
        return Err(Error::EpsilonOutOfRange { eps, max: 1.0 });
    }
    Ok(())
}

/// Couple a `ν`-started chain with an i.i.d. `π` sequence through one point
/// process. The good event is
/// `{U_i}_{i ≤ n(1-ε)} ⊆ {Z_i}_{i ≤ n} ⊆ {U_i}_{i ≤ n(1+ε)}`, indices from 0.
pub fn couple_iid<K: ChainKernel + ?Sized>(kernel: &K, n: usize, eps: f64, seed: u64) -> Result<IidCoupling> {
    check_eps(eps)?;
    let mut ppp = FiberedPoissonProcess::new(kernel, seed);
    let (lo, hi) = window_indices(n, eps);
    let mut z = SltChain::new(kernel, Drive::Chain);
    z.extend_to(&mut ppp, kernel, n + 1)?;
    let mut u = SltChain::new(kernel, Drive::Iid);
    u.extend_to(&mut ppp, kernel, hi + 1)?;
    let ns = kernel.n_states();
    let good = range_subset(&u.path[..=lo], &z.path, ns) && range_subset(&z.path, &u.path, ns);
    Ok(IidCoupling { z: z.path, u: u.path, good })
}

/// Check that two kernels can share a point process.
pub fn check_compatible<K1, K2>(k1: &K1, k2: &K2) -> Result<()>
where
    K1: ChainKernel + ?Sized,
    K2: ChainKernel + ?Sized,
{
    if k1.n_states() != k2.n_states() || k1.n_groups() != k2.n_groups() {
        return Err(Error::InvalidParameter("kernels live on different state spaces".into()));
    }
    for g in 0..k1.n_groups() {
        let (a, b) = (k1.group_rate(g), k2.group_rate(g));
        if (a - b).abs() > 1e-12 * a.abs().max(1.0) {
            return Err(Error::InvalidParameter("kernels use different base measures".into()));
        }
    }
    let tv = 0.5 * (0..k1.n_states()).map(|x| (k1.pi(x) - k2.pi(x)).abs()).sum::<f64>();
    if tv > 1e-8 {
        return Err(Error::InvariantMismatch(tv));
    }
    Ok(())
}

/// Couple two chains sharing `π` and `μ`. The good event is
/// `{Z^1_i}_{i ≤ n(1-ε)} ⊆ {Z^2_i}_{i ≤ n} ⊆ {Z^1_i}_{i ≤ n(1+ε)}`, indices from 1.
pub fn couple_chains<K1, K2>(k1: &K1, k2: &K2, n: usize, eps: f64, seed: u64) -> Result<ChainCoupling>
where
    K1: ChainKernel + ?Sized,
    K2: ChainKernel + ?Sized,
{
    check_eps(eps)?;
    check_compatible(k1, k2)?;
    let mut ppp = FiberedPoissonProcess::new(k1, seed);
    let (lo, hi) = window_indices(n, eps);
    let mut c1 = SltChain::new(k1, Drive::Chain);
    c1.extend_to(&mut ppp, k1, hi)?;
    let mut c2 = SltChain::new(k2, Drive::Chain);
    c2.extend_to(&mut ppp, k2, n)?;
    let ns = k1.n_states();
    let good = range_subset(&c1.path[..lo], &c2.path, ns) && range_subset(&c2.path, &c1.path, ns);
    Ok(ChainCoupling { z1: c1.path, z2: c2.path, good })
}

/// Per-kernel ingredients of the coupling bounds.
#[derive(Debug, Clone)]
pub struct BoundInputs {
    pub moments: DensityMoments,
    pub pi_star: f64,
    /// Mixing time.
    pub t_mix: usize,
    /// Per group: `π(z)/ν(z)` (constant on groups), `∞` where `ν = 0`.
    pub pi_over_nu: Vec<f64>,
    pub group_sizes: Vec<usize>,
    pub n_states: usize,
}

impl BoundInputs {
    pub fn new<K: ChainKernel + ?Sized>(kernel: &K, t_mix: usize) -> Self {
        let m = kernel.n_groups();
        let moments = kernel.density_moments();
        let mut q = vec![0.0; m];
        kernel.initial_row(&mut q);
        let pi_over_nu = (0..m)
            .map(|z| if q[z] > 0.0 { moments.g[z] / q[z] } else { f64::INFINITY })
            .collect();
        BoundInputs {
            pi_star: kernel.pi_star(),
            t_mix,
            pi_over_nu,
            group_sizes: (0..m).map(|g| kernel.group_size(g)).collect(),
            n_states: kernel.n_states(),
            moments,
        }
    }

    /// Largest `ε` allowed: `1/2 ∧ min_z Var_π ρ_z / (2 ‖ρ_z‖_∞ g(z))`.
    pub fn epsilon_max(&self) -> f64 {
        let m = &self.moments;
        (0..m.g.len())
            .filter(|&z| m.sup[z] > 0.0 && m.g[z] > 0.0)
            .map(|z| m.var[z] / (2.0 * m.sup[z] * m.g[z]))
            .fold(0.5, f64::min)
    }
}

/// `k(ε) = -min_i min_z log2(π_* ε² g(z)² / (6 Var_π ρ^i_z))`.
pub fn k_of_epsilon(inputs: &[BoundInputs], eps: f64) -> Result<f64> {
    if !(eps > 0.0) {
        return Err(Error::EpsilonOutOfRange { eps, max: 0.5 });
    }
    let mut min_log = f64::INFINITY;
    for b in inputs {
        for z in 0..b.moments.g.len() {
            let v = b.moments.var[z];
            if v > 0.0 {
                let arg = b.pi_star * eps * eps * b.moments.g[z].powi(2) / (6.0 * v);
                min_log = min_log.min(arg.log2());
            }
        }
    }
    if !min_log.is_finite() {
        return Err(Error::BoundInapplicable("every density has zero variance".into()));
    }
    Ok(-min_log)
}

/// Calibration constants of the coupling bounds.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Calibration {
    pub c: f64,
    pub big_c: f64,
}

impl Default for Calibration {
    fn default() -> Self {
        Calibration { c: 1.0, big_c: 1.0 }
    }
}

/// Right-hand side of the coupling bound for one or two kernels.
pub fn failure_bound(inputs: &[BoundInputs], n: usize, eps: f64, cal: Calibration) -> Result<f64> {
    let eps_max = inputs.iter().map(|b| b.epsilon_max()).fold(0.5, f64::min);
    if !(eps > 0.0 && eps <= eps_max) {
        return Err(Error::EpsilonOutOfRange { eps, max: eps_max });
    }
    let k = k_of_epsilon(inputs, eps)?;
    let t = inputs.iter().map(|b| b.t_mix).max().unwrap_or(0) as f64;
    let required = 2.0 * k * t;
    let nf = n as f64;
    if nf < required {
        return Err(Error::NotEnoughSteps { n: nf, required });
    }
    let mut total = 0.0;
    for b in inputs {
        let tk = k * b.t_mix as f64;
        total += b.n_states as f64 * (-cal.c * nf * eps * eps).exp();
        for z in 0..b.moments.g.len() {
            let size = b.group_sizes[z] as f64;
            let r = b.pi_over_nu[z];
            if r.is_finite() {
                total += size * (-cal.c * nf * eps * r).exp();
            }
            let v = b.moments.var[z];
            if v > 0.0 && tk > 0.0 {
                total += size * (-cal.c * eps * eps * b.moments.g[z].powi(2) / v * nf / tk).exp();
            }
        }
    }
    Ok(cal.big_c * total)
}

/// CSV lines `state,level,step` for a consumption log.
pub fn consumption_csv(log: &[(usize, f64, usize)]) -> String {
    let mut s = String::from("state,level,step\n");
    for (state, level, step) in log {
        s.push_str(&format!("{state},{level:.17e},{step}\n"));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_state() -> DenseKernel {
        DenseKernel::stationary_start(vec![vec![0.3, 0.7], vec![0.6, 0.4]]).unwrap()
    }

    #[test]
    fn single_state_gives_unit_exponentials() {
        let k = DenseKernel::stationary_start(vec![vec![1.0]]).unwrap();
        let mut ppp = FiberedPoissonProcess::new(&k, 3);
        let mut ch = SltChain::new(&k, Drive::Chain);
        let mut xs = Vec::new();
        for _ in 0..10_000 {
            let s = ch.next(&mut ppp, &k).unwrap();
            assert_eq!(s.state, 0);
            xs.push(s.xi);
        }
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = xs.len() as f64;
        let ks = xs
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let f = 1.0 - (-x).exp();
                (f - i as f64 / n).abs().max((f - (i + 1) as f64 / n).abs())
            })
            .fold(0.0, f64::max);
        // 1% critical value 1.63 / sqrt(n)
        assert!(ks < 1.63 / n.sqrt(), "KS {ks}");
    }

    #[test]
    fn replay_is_deterministic() {
        let k = two_state();
        let a = couple_iid(&k, 200, 0.2, 9).unwrap();
        let b = couple_iid(&k, 200, 0.2, 9).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.z.len(), 201);
    }

    #[test]
    fn degenerate_row_is_rejected() {
        let k = two_state();
        let mut ppp = FiberedPoissonProcess::new(&k, 1);
        let mut s = SoftLocalTime::new(2);
        assert_eq!(s.advance(&mut ppp, &k, &[0.0, 0.0]), Err(Error::DegenerateRow));
    }

    #[test]
    fn identical_kernels_give_identical_paths() {
        let k = two_state();
        for seed in 0..20 {
            let c = couple_chains(&k, &k, 300, 0.0, seed).unwrap();
            assert_eq!(c.z1, c.z2);
            assert!(c.good);
        }
    }

    #[test]
    fn iid_kernel_reduces_to_couple_iid() {
        let k = two_state();
        let iid = DenseKernel::iid(k.pi_vec().to_vec(), vec![1.0, 1.0]).unwrap();
        let a = couple_iid(&k, 100, 0.1, 5).unwrap();
        let b = couple_chains(&k, &iid, 100, 0.1, 5).unwrap();
        // the chain side starts from ν = π in both constructions
        assert_eq!(a.z[..100], b.z1[..100]);
        assert_eq!(a.u[..100], b.z2[..100]);
    }

    #[test]
    fn k_of_epsilon_hand_value() {
        // p = [[0.3, 0.7], [0.7, 0.3]]: π = (1/2, 1/2), μ counting, g = 1/2,
        // ρ_0 = (0.3, 0.7): Var = 0.04; π_* = 1/2
        let k = DenseKernel::stationary_start(vec![vec![0.3, 0.7], vec![0.7, 0.3]]).unwrap();
        let b = BoundInputs::new(&k, 1);
        assert!((b.moments.var[0] - 0.04).abs() < 1e-12);
        let eps = 0.1;
        let expect = -(0.5f64 * 0.01 * 0.25 / (6.0 * 0.04)).log2();
        assert!((k_of_epsilon(std::slice::from_ref(&b), eps).unwrap() - expect).abs() < 1e-12);
        assert!(k_of_epsilon(std::slice::from_ref(&b), 0.2).unwrap() <= k_of_epsilon(&[b], 0.1).unwrap());
    }

    #[test]
    fn iid_kernel_has_no_bound() {
        let iid = DenseKernel::iid(vec![0.25; 4], vec![1.0; 4]).unwrap();
        let b = BoundInputs::new(&iid, 1);
        assert!(b.moments.var.iter().all(|&v| v.abs() < 1e-15));
        assert!(matches!(k_of_epsilon(&[b], 0.1), Err(Error::BoundInapplicable(_))));
    }

    #[test]
    fn window_rounding() {
        assert_eq!(window_indices(100, 0.25), (75, 125));
        assert_eq!(window_indices(10, 0.15), (8, 12));
        assert_eq!(window_indices(10, 0.0), (10, 10));
    }
}
