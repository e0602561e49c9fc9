//! The excursion chains `Y` (torus walk) and `Z` (interlacements) on
//! `Σ = ∂B × ∂Δ`.
//!
//! Both kernels factor as `p(x, y) = ρ̃(x₂, y₁) M(y₁, y₂)` with
//! `M(y₁, y₂) = P_{y₁}[X_{H_Δ} = y₂]`. Taking `μ = M` makes every density
//! row constant on the fibre `{y₁} × ∂Δ`, so the kernels are stored through
//! their two factors and never as `|Σ| x |Σ|` matrices.

use std::io::Write;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::interlacements::{self, ZdTarget};
use crate::lattice::{Layout, Point, LABEL_B, LABEL_DELTA};
use crate::par;
use crate::potential::{self, BufferSolves, TorusCapacitance, TorusGreen, ZdCapacitance, ZdGreen};
use crate::rng::{self, DirectionSource};
use crate::slt::{ChainKernel, DenseKernel, DensityMoments};

/// The layout plus the quantities of the walk killed on `Δ` that both chains
/// share.
#[derive(Debug, Clone)]
pub struct ExcursionGeometry {
    pub layout: Layout,
    pub labels: Vec<u8>,
    /// `∂B`, torus sites.
    pub b_boundary: Vec<usize>,
    /// `∂Δ`, torus sites.
    pub delta_boundary: Vec<usize>,
    /// Torus site to index in `B` (`u32::MAX` outside).
    pub b_index: Vec<u32>,
    /// Torus site to index in `∂B`.
    pub b_pos: Vec<u32>,
    /// Torus site to index in `∂Δ`.
    pub delta_pos: Vec<u32>,
    pub exit: Arc<ExitLaw>,
    /// `ē_B^Δ` on `∂B`.
    pub eq_delta: Vec<f64>,
    /// `cap_Δ(B)`.
    pub cap_delta: f64,
    /// `Σ_{z ∈ Δ^c} P_z[X_{H_Δ} = w]` on `∂Δ`.
    pub exit_mass: Vec<f64>,
    /// `∂B` as a subset of `Z^d`, for interlacement walks.
    pub zd: ZdTarget,
}

/// `M(y₁, y₂)`, row-major `|∂B| x |∂Δ|`, with row-wise cumulative sums.
#[derive(Debug, Clone)]
pub struct ExitLaw {
    pub nb: usize,
    pub nd: usize,
    pub m: Vec<f64>,
    cum: Vec<f64>,
}

impl ExitLaw {
    fn new(exit: &DMatrix<f64>) -> Result<Self> {
        let (nb, nd) = exit.shape();
        let mut m = vec![0.0; nb * nd];
        let mut cum = vec![0.0; nb * nd];
        for i in 0..nb {
            let s: f64 = exit.row(i).iter().sum();
            if (s - 1.0).abs() > 1e-8 {
                return Err(Error::InvariantMismatch((s - 1.0).abs()));
            }
            let mut acc = 0.0;
            for j in 0..nd {
                let v = exit[(i, j)] / s;
                if v <= 0.0 {
                    return Err(Error::InvalidParameter(format!(
                        "exit law has an empty entry ({i}, {j}); the base measure needs full support"
                    )));
                }
                m[i * nd + j] = v;
                acc += v;
                cum[i * nd + j] = acc;
            }
        }
        Ok(ExitLaw { nb, nd, m, cum })
    }

    #[inline]
    pub fn get(&self, y1: usize, y2: usize) -> f64 {
        self.m[y1 * self.nd + y2]
    }

    pub fn row(&self, y1: usize) -> &[f64] {
        &self.m[y1 * self.nd..(y1 + 1) * self.nd]
    }

    /// `y₂ ~ M(y₁, ·)` from a uniform `u`.
    pub fn sample(&self, y1: usize, u: f64) -> usize {
        let row = &self.cum[y1 * self.nd..(y1 + 1) * self.nd];
        row.partition_point(|&c| c <= u * row[self.nd - 1]).min(self.nd - 1)
    }
}

/// Default kill radius for interlacement walks around the box: the side of
/// the torus.
pub fn default_kill_radius(layout: &Layout) -> f64 {
    layout.geom.n as f64
}

impl ExcursionGeometry {
    pub fn new(layout: Layout, kill_radius: f64) -> Result<Self> {
        let solves = potential::buffer_solves(&layout)?;
        Self::from_solves(layout, solves, kill_radius)
    }

    pub fn from_solves(layout: Layout, solves: BufferSolves, kill_radius: f64) -> Result<Self> {
        let torus = &layout.geom.torus;
        let vol = torus.volume();
        let labels = layout.labels();
        let mut b_index = vec![u32::MAX; vol];
        for (i, &s) in layout.b.points().iter().enumerate() {
            b_index[s] = i as u32;
        }
        let mut b_pos = vec![u32::MAX; vol];
        for (i, &s) in solves.b_boundary.iter().enumerate() {
            b_pos[s] = i as u32;
        }
        let mut delta_pos = vec![u32::MAX; vol];
        for (i, &s) in solves.delta_boundary.iter().enumerate() {
            delta_pos[s] = i as u32;
        }
        let cap_delta: f64 = solves.relative_escape.iter().sum();
        if !(cap_delta > 0.0) {
            return Err(Error::InvalidParameter("relative capacity vanishes".into()));
        }
        let eq_delta = solves.relative_escape.iter().map(|e| e / cap_delta).collect();
        let pts: Vec<Point> = solves.b_boundary.iter().map(|&s| torus.point(s)).collect();
        let zd = ZdTarget::new(torus.d, &pts, kill_radius)?;
        Ok(ExcursionGeometry {
            exit: Arc::new(ExitLaw::new(&solves.exit)?),
            labels,
            b_index,
            b_pos,
            delta_pos,
            eq_delta,
            cap_delta,
            exit_mass: solves.exit_mass,
            b_boundary: solves.b_boundary,
            delta_boundary: solves.delta_boundary,
            zd,
            layout,
        })
    }

    pub fn space(&self) -> ExcursionStateSpace {
        ExcursionStateSpace { nb: self.b_boundary.len(), nd: self.delta_boundary.len() }
    }

    /// `cap(B)` on `Z^d`.
    pub fn cap_b(&self) -> f64 {
        self.zd.capacity()
    }

    /// `ē_B` on `∂B`.
    pub fn eq_b(&self) -> Vec<f64> {
        self.zd.normalized_equilibrium()
    }

    fn delta_points(&self) -> Vec<Point> {
        let t = &self.layout.geom.torus;
        self.delta_boundary.iter().map(|&s| t.point(s)).collect()
    }
}

/// `Σ = ∂B × ∂Δ`, state `(i, j)` stored as `i |∂Δ| + j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ExcursionStateSpace {
    pub nb: usize,
    pub nd: usize,
}

impl ExcursionStateSpace {
    pub fn len(&self) -> usize {
        self.nb * self.nd
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, x1: usize, x2: usize) -> usize {
        x1 * self.nd + x2
    }

    #[inline]
    pub fn split(&self, s: usize) -> (usize, usize) {
        (s / self.nd, s % self.nd)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ChainKind {
    /// Excursions of the walk on the torus.
    Y,
    /// Excursions of random interlacements.
    Z,
}

/// How the entrance law `P_{x₂}[X_{H_B} = ·]` is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum KernelMode {
    Exact,
    /// `walks` simulated walks from every point of `∂Δ`.
    MonteCarlo { walks: usize, seed: u64 },
}

/// A factored excursion kernel.
#[derive(Debug, Clone)]
pub struct ExcursionKernel {
    pub kind: ChainKind,
    pub space: ExcursionStateSpace,
    exit: Arc<ExitLaw>,
    /// `ρ̃(x₂, y₁)`, row-major `|∂Δ| x |∂B|`.
    entry: Vec<f64>,
    /// `P^{Z^d}_{x₂}[H_B = ∞]` for `Z`.
    escape: Option<Vec<f64>>,
    /// `ē_B` for `Z`.
    eq_b: Option<Vec<f64>>,
    /// `ē_B^Δ`.
    g: Vec<f64>,
    /// `ν(x) / μ(x)`, a function of `x₁`.
    initial: Vec<f64>,
    /// Per-entry observation counts in Monte Carlo mode.
    pub counts: Option<Vec<u32>>,
}

/// Entries with fewer observations are not trusted in Monte Carlo mode.
pub const MIN_TRUSTED_COUNT: u32 = 10;

fn dense_to_rows(m: &DMatrix<f64>) -> Vec<f64> {
    let (r, c) = m.shape();
    let mut out = vec![0.0; r * c];
    for i in 0..r {
        for j in 0..c {
            out[i * c + j] = m[(i, j)];
        }
    }
    out
}

/// Estimated entrance rows: counts of `(x₂, y₁)` and escapes per `x₂`.
fn simulate_entries<F>(d: usize, nd: usize, nb: usize, walks: usize, seed: u64, f: F) -> Result<(Vec<u32>, Vec<u32>)>
where
    F: Fn(usize, &mut rng::StreamRng, &mut DirectionSource) -> Result<Option<usize>> + Sync,
{
    let rows = par::map_replicas(nd, |x2| -> Result<(Vec<u32>, u32)> {
        let mut r = rng::stream(seed, rng::domain::AUX | x2 as u64);
        let mut dirs = DirectionSource::new(d);
        let mut c = vec![0u32; nb];
        let mut esc = 0u32;
        for _ in 0..walks {
            match f(x2, &mut r, &mut dirs)? {
                Some(y1) => c[y1] += 1,
                None => esc += 1,
            }
        }
        Ok((c, esc))
    });
    let mut counts = Vec::with_capacity(nd * nb);
    let mut escapes = Vec::with_capacity(nd);
    for row in rows {
        let (c, e) = row?;
        counts.extend(c);
        escapes.push(e);
    }
    Ok((counts, escapes))
}

/// `P[X_{R_1} = x₁]` for the walk started from the uniform distribution.
fn first_entrance_law(geo: &ExcursionGeometry, green: &TorusGreen, cap: &TorusCapacitance) -> Vec<f64> {
    let dc = geo.layout.delta_complement();
    let from_delta = cap.summed_over_complement(green, &dc);
    let a = cap.hitting_matrix(green, &geo.delta_boundary);
    let vol = geo.layout.geom.torus.volume() as f64;
    (0..geo.b_boundary.len())
        .map(|i| {
            let via_exit: f64 = geo.exit_mass.iter().enumerate().map(|(j, m)| m * a[(j, i)]).sum();
            ((from_delta[i] + via_exit) / vol).max(0.0)
        })
        .collect()
}

/// The kernel of `Y`.
pub fn build_y_kernel(geo: &ExcursionGeometry, mode: KernelMode) -> Result<ExcursionKernel> {
    let space = geo.space();
    let torus = &geo.layout.geom.torus;
    let green = TorusGreen::new(torus);
    let cap = TorusCapacitance::new(&green, &geo.b_boundary)?;
    let initial = first_entrance_law(geo, &green, &cap);
    let (entry, counts) = match mode {
        KernelMode::Exact => (dense_to_rows(&cap.hitting_matrix(&green, &geo.delta_boundary)), None),
        KernelMode::MonteCarlo { walks, seed } => {
            let (counts, _) = simulate_entries(torus.d, space.nd, space.nb, walks, seed, |x2, r, _| {
                let mut w = crate::walk::TorusWalk::new(torus, geo.delta_boundary[x2], &mut *r);
                let (hit, _) = w.run_until_hit(geo.layout.b.membership(), u64::MAX)?;
                Ok(Some(geo.b_pos[hit] as usize))
            })?;
            let entry = counts.iter().map(|&c| c as f64 / walks as f64).collect();
            (entry, Some(counts))
        }
    };
    Ok(ExcursionKernel {
        kind: ChainKind::Y,
        space,
        exit: geo.exit.clone(),
        entry,
        escape: None,
        eq_b: None,
        g: geo.eq_delta.clone(),
        initial,
        counts,
    })
}

/// The kernel of `Z`, including the escape-and-restart term.
pub fn build_z_kernel(geo: &ExcursionGeometry, mode: KernelMode) -> Result<ExcursionKernel> {
    let space = geo.space();
    let eq_b = geo.eq_b();
    let (hit, escape, counts) = match mode {
        KernelMode::Exact => {
            let dpts = geo.delta_points();
            let bpts = &geo.zd.points;
            let d = geo.layout.geom.d;
            let span = (0..d)
                .map(|i| {
                    let lo = dpts.iter().chain(bpts.iter()).map(|p| p[i]).min().unwrap();
                    let hi = dpts.iter().chain(bpts.iter()).map(|p| p[i]).max().unwrap();
                    (hi - lo) as usize
                })
                .max()
                .unwrap_or(1);
            let green = ZdGreen::new(d, span.max(1))?;
            let cap = ZdCapacitance::new(&green, bpts)?;
            let h = dense_to_rows(&cap.hitting_matrix(&green, &dpts));
            let escape: Vec<f64> = (0..space.nd)
                .map(|j| (1.0 - h[j * space.nb..(j + 1) * space.nb].iter().sum::<f64>()).max(0.0))
                .collect();
            (h, escape, None)
        }
        KernelMode::MonteCarlo { walks, seed } => {
            let (counts, esc) = simulate_entries(geo.layout.geom.d, space.nd, space.nb, walks, seed, |x2, r, dirs| {
                interlacements::zd_return(geo, x2, dirs, r)
            })?;
            let h = counts.iter().map(|&c| c as f64 / walks as f64).collect();
            let escape = esc.iter().map(|&e| e as f64 / walks as f64).collect();
            (h, escape, Some(counts))
        }
    };
    let mut entry = hit;
    for j in 0..space.nd {
        for i in 0..space.nb {
            entry[j * space.nb + i] += escape[j] * eq_b[i];
        }
    }
    Ok(ExcursionKernel {
        kind: ChainKind::Z,
        space,
        exit: geo.exit.clone(),
        entry,
        escape: Some(escape),
        initial: eq_b.clone(),
        eq_b: Some(eq_b),
        g: geo.eq_delta.clone(),
        counts,
    })
}

/// `π(x) = ē_B^Δ(x₁) P_{x₁}[X_{H_Δ} = x₂]`, as a dense vector over `Σ`.
pub fn invariant_pi(geo: &ExcursionGeometry) -> Vec<f64> {
    let s = geo.space();
    let mut pi = vec![0.0; s.len()];
    for i in 0..s.nb {
        for j in 0..s.nd {
            pi[s.index(i, j)] = geo.eq_delta[i] * geo.exit.get(i, j);
        }
    }
    pi
}

impl ExcursionKernel {
    /// `ρ̃(x₂, ·)`.
    pub fn entry_row(&self, x2: usize) -> &[f64] {
        &self.entry[x2 * self.space.nb..(x2 + 1) * self.space.nb]
    }

    pub fn exit_law(&self) -> &ExitLaw {
        &self.exit
    }

    /// `P_{x₂}[H_B = ∞]` (interlacements only).
    pub fn escape(&self) -> Option<&[f64]> {
        self.escape.as_deref()
    }

    pub fn eq_b(&self) -> Option<&[f64]> {
        self.eq_b.as_deref()
    }

    /// Probability that the trajectory ends after an excursion ending at
    /// `x₂` and that the next excursion starts at `y₁` on a new trajectory.
    pub fn restart_probability(&self, x2: usize, y1: usize) -> f64 {
        match (&self.escape, &self.eq_b) {
            (Some(e), Some(b)) => {
                let total = self.entry_row(x2)[y1];
                if total > 0.0 {
                    (e[x2] * b[y1] / total).min(1.0)
                } else {
                    0.0
                }
            }
            _ => 0.0,
        }
    }

    /// Marginal of `π` on `x₂`.
    pub fn pi_second(&self) -> Vec<f64> {
        let s = self.space;
        let mut out = vec![0.0; s.nd];
        for i in 0..s.nb {
            let gi = self.g[i];
            for (j, o) in out.iter_mut().enumerate() {
                *o += gi * self.exit.get(i, j);
            }
        }
        out
    }

    /// `‖πP - π‖_TV`.
    pub fn stationarity_defect(&self) -> f64 {
        // πP(y) = M(y₁, y₂) Σ_{x₂} π₂(x₂) ρ̃(x₂, y₁); rows of M sum to one
        let p2 = self.pi_second();
        let nb = self.space.nb;
        let mut a = vec![0.0; nb];
        for (j, &w) in p2.iter().enumerate() {
            for (i, v) in self.entry_row(j).iter().enumerate() {
                a[i] += w * v;
            }
        }
        0.5 * a.iter().zip(&self.g).map(|(x, g)| (x - g).abs()).sum::<f64>()
    }

    /// Entries observed fewer than [`MIN_TRUSTED_COUNT`] times but more than
    /// zero.
    pub fn untrusted_entries(&self) -> usize {
        self.counts
            .as_ref()
            .map(|c| c.iter().filter(|&&v| v > 0 && v < MIN_TRUSTED_COUNT).count())
            .unwrap_or(0)
    }

    /// `max ρ̃`.
    pub fn max_density(&self) -> f64 {
        self.entry.iter().cloned().fold(0.0, f64::max)
    }

    /// `Σ_{y₁} min_{x₂} ρ̃(x₂, y₁)`: every step couples two copies with at
    /// least this probability.
    pub fn doeblin_mass(&self) -> f64 {
        let nb = self.space.nb;
        (0..nb)
            .map(|i| (0..self.space.nd).map(|j| self.entry[j * nb + i]).fold(f64::INFINITY, f64::min))
            .sum()
    }
}

impl ChainKernel for ExcursionKernel {
    fn n_states(&self) -> usize {
        self.space.len()
    }
    fn n_groups(&self) -> usize {
        self.space.nb
    }
    fn group_of(&self, state: usize) -> usize {
        state / self.space.nd
    }
    fn group_size(&self, _group: usize) -> usize {
        self.space.nd
    }
    fn group_rate(&self, _group: usize) -> f64 {
        1.0
    }
    fn group_mark(&self, group: usize, u: f64) -> usize {
        self.space.index(group, self.exit.sample(group, u))
    }
    fn mu(&self, state: usize) -> f64 {
        let (i, j) = self.space.split(state);
        self.exit.get(i, j)
    }
    fn transition(&self, x: usize, y: usize) -> f64 {
        let (_, x2) = self.space.split(x);
        let (y1, y2) = self.space.split(y);
        self.entry_row(x2)[y1] * self.exit.get(y1, y2)
    }
    fn pi(&self, state: usize) -> f64 {
        let (i, j) = self.space.split(state);
        self.g[i] * self.exit.get(i, j)
    }
    fn nu(&self, state: usize) -> f64 {
        let (i, j) = self.space.split(state);
        self.initial[i] * self.exit.get(i, j)
    }
    fn density_row(&self, x: usize, out: &mut [f64]) {
        let (_, x2) = self.space.split(x);
        out.copy_from_slice(self.entry_row(x2));
    }
    fn row_key(&self, x: usize) -> usize {
        self.space.split(x).1
    }
    fn initial_row(&self, out: &mut [f64]) {
        out.copy_from_slice(&self.initial);
    }
    fn pi_density(&self, out: &mut [f64]) {
        out.copy_from_slice(&self.g);
    }
    fn pi_star(&self) -> f64 {
        let s = self.space;
        (0..s.nb)
            .flat_map(|i| (0..s.nd).map(move |j| (i, j)))
            .map(|(i, j)| self.g[i] * self.exit.get(i, j))
            .fold(f64::INFINITY, f64::min)
    }
    fn density_moments(&self) -> DensityMoments {
        let nb = self.space.nb;
        let p2 = self.pi_second();
        let mut mean = vec![0.0; nb];
        let mut var = vec![0.0; nb];
        let mut sup = vec![0.0f64; nb];
        for (j, &w) in p2.iter().enumerate() {
            for (i, &v) in self.entry_row(j).iter().enumerate() {
                mean[i] += w * v;
                var[i] += w * (v - self.g[i]).powi(2);
                sup[i] = sup[i].max(v);
            }
        }
        DensityMoments { g: self.g.clone(), var, sup, mean }
    }
}

/// How to certify a mixing time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MixingMethod {
    /// Smallest `n` with `max_x ‖P^n(x, ·) - π‖_TV <= 1/4`.
    Exact,
    /// Smallest `n` at which a coupling of any two copies has met with
    /// probability at least `3/4`.
    Coupling { replicas: usize, seed: u64 },
}

/// Upper bound on the mixing time.
pub trait MixingTime {
    fn mixing_time(&self, method: MixingMethod, cap: usize) -> Result<usize>;
}

impl MixingTime for ExcursionKernel {
    fn mixing_time(&self, method: MixingMethod, cap: usize) -> Result<usize> {
        match method {
            MixingMethod::Exact => {
                // law of Y_n from x is a_n(y₁) M(y₁, y₂) with a_1 = ρ̃(x₂, ·)
                // and a_{n+1} = a_n W, W = M ρ̃
                let nb = self.space.nb;
                let nd = self.space.nd;
                let m = DMatrix::from_row_slice(nb, nd, &self.exit.m);
                let r = DMatrix::from_row_slice(nd, nb, &self.entry);
                let w = &m * &r;
                let mut a = r.clone();
                for n in 1..=cap {
                    let tv = (0..nd)
                        .map(|j| 0.5 * (0..nb).map(|i| (a[(j, i)] - self.g[i]).abs()).sum::<f64>())
                        .fold(0.0, f64::max);
                    if tv <= 0.25 {
                        return Ok(n);
                    }
                    a = &a * &w;
                }
                Err(Error::NotConverged(cap))
            }
            MixingMethod::Coupling { .. } => {
                let delta = self.doeblin_mass().min(1.0);
                if delta >= 1.0 - 1e-15 {
                    return Ok(1);
                }
                if delta <= 0.0 {
                    return Err(Error::NotConverged(cap));
                }
                let n = ((0.25f64).ln() / (1.0 - delta).ln()).ceil().max(1.0) as usize;
                if n > cap {
                    return Err(Error::NotConverged(cap));
                }
                Ok(n)
            }
        }
    }
}

/// Largest dense state space the simulated coupling accepts.
pub const MAX_COUPLING_STATES: usize = 64;

impl MixingTime for DenseKernel {
    fn mixing_time(&self, method: MixingMethod, cap: usize) -> Result<usize> {
        let n = self.n_states();
        let p = self.matrix();
        let pi = self.pi_vec();
        match method {
            MixingMethod::Exact => {
                let pm = DMatrix::from_row_slice(n, n, p);
                let mut pw = pm.clone();
                for k in 1..=cap {
                    let tv = (0..n)
                        .map(|x| 0.5 * (0..n).map(|y| (pw[(x, y)] - pi[y]).abs()).sum::<f64>())
                        .fold(0.0, f64::max);
                    if tv <= 0.25 {
                        return Ok(k);
                    }
                    pw = &pw * &pm;
                }
                Err(Error::NotConverged(cap))
            }
            MixingMethod::Coupling { replicas, seed } => {
                if n > MAX_COUPLING_STATES {
                    return Err(Error::TooLarge { unknowns: n, limit: MAX_COUPLING_STATES });
                }
                let cums: Vec<Vec<f64>> = (0..n).map(|x| rng::cumulative(&p[x * n..(x + 1) * n])).collect();
                // worst pair: fraction of replicas not yet met, per time
                let pairs: Vec<(usize, usize)> = (0..n).flat_map(|a| (a + 1..n).map(move |b| (a, b))).collect();
                let apart = par::map_replicas(pairs.len(), |k| {
                    let (a, b) = pairs[k];
                    let mut r = rng::stream(seed, rng::domain::AUX | k as u64);
                    let mut hist = vec![0usize; cap + 1];
                    for _ in 0..replicas {
                        let (mut x, mut y) = (a, b);
                        for h in hist.iter_mut().skip(1) {
                            if x != y {
                                (x, y) = maximal_step(p, n, &cums, x, y, &mut r);
                            }
                            if x != y {
                                *h += 1;
                            }
                        }
                    }
                    hist
                });
                for t in 1..=cap {
                    let worst = apart.iter().map(|h| h[t]).max().unwrap_or(0);
                    if worst as f64 <= 0.25 * replicas as f64 {
                        return Ok(t);
                    }
                }
                Err(Error::NotConverged(cap))
            }
        }
    }
}

/// One step of the maximal coupling of `p(x, ·)` and `p(y, ·)`.
fn maximal_step<R: Rng>(p: &[f64], n: usize, cums: &[Vec<f64>], x: usize, y: usize, r: &mut R) -> (usize, usize) {
    let px = &p[x * n..(x + 1) * n];
    let py = &p[y * n..(y + 1) * n];
    let overlap: Vec<f64> = px.iter().zip(py).map(|(a, b)| a.min(*b)).collect();
    let o: f64 = overlap.iter().sum();
    if r.random::<f64>() < o {
        let z = rng::sample_cumulative(r, &rng::cumulative(&overlap));
        return (z, z);
    }
    if o <= 0.0 {
        return (rng::sample_cumulative(r, &cums[x]), rng::sample_cumulative(r, &cums[y]));
    }
    let rx: Vec<f64> = px.iter().zip(&overlap).map(|(a, m)| (a - m).max(0.0)).collect();
    let ry: Vec<f64> = py.iter().zip(&overlap).map(|(a, m)| (a - m).max(0.0)).collect();
    (rng::sample_cumulative(r, &rng::cumulative(&rx)), rng::sample_cumulative(r, &rng::cumulative(&ry)))
}

/// Per-group `Var_π ρ_z` and the largest `‖ρ_z‖_∞`.
pub fn density_variance<K: ChainKernel + ?Sized>(kernel: &K) -> (Vec<f64>, f64) {
    let m = kernel.density_moments();
    let sup = m.sup.iter().cloned().fold(0.0, f64::max);
    (m.var, sup)
}

/// `‖πP - π‖_TV` for a small kernel, by brute force.
pub fn dense_stationarity_defect<K: ChainKernel + ?Sized>(kernel: &K) -> f64 {
    let n = kernel.n_states();
    0.5 * (0..n)
        .map(|y| ((0..n).map(|x| kernel.pi(x) * kernel.transition(x, y)).sum::<f64>() - kernel.pi(y)).abs())
        .sum::<f64>()
}

/// Samples of `𝒩(t)`, the number of returns to `B` before time `t` of the
/// walk started from the uniform distribution.
pub fn count_excursions_walk(geo: &ExcursionGeometry, t: u64, replicas: usize, seed: u64) -> Vec<u64> {
    let torus = &geo.layout.geom.torus;
    par::map_replicas(replicas, |k| {
        let mut r = rng::replica(seed, k as u64);
        let mut dirs = DirectionSource::new(torus.d);
        let mut x = (r.random::<u64>() % torus.volume() as u64) as usize;
        let mut seeking_b = false;
        let mut count = 0u64;
        for s in 0..t {
            let l = geo.labels[x];
            if seeking_b {
                if l == LABEL_B {
                    count += 1;
                    seeking_b = false;
                }
            } else if l == LABEL_DELTA {
                seeking_b = true;
            }
            if s + 1 < t {
                x = torus.neighbor(x, dirs.next(&mut r));
            }
        }
        count
    })
}

/// `J_u` and the excursion counts `T^(i)` of one interlacement sample.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RiCounts {
    pub trajectories: usize,
    pub per_trajectory: Vec<usize>,
}

impl RiCounts {
    /// `𝒩'(u)`.
    pub fn total(&self) -> usize {
        self.per_trajectory.iter().sum()
    }
}

/// Samples of `𝒩'(u)` with the per-trajectory counts.
pub fn count_excursions_ri(geo: &ExcursionGeometry, u: f64, replicas: usize, seed: u64) -> Result<Vec<RiCounts>> {
    if !(u >= 0.0) {
        return Err(Error::InvalidParameter(format!("level {u}")));
    }
    par::map_replicas(replicas, |k| {
        let s = interlacements::sample_excursion_stream(geo, u, false, rng::derive_seed(seed, k as u64))?;
        Ok(RiCounts { trajectories: s.counts.len(), per_trajectory: s.counts })
    })
    .into_iter()
    .collect()
}

/// Header of a kernel export.
#[derive(Debug, Clone, Serialize)]
pub struct KernelHeader<'a> {
    pub kind: &'a str,
    pub d: usize,
    pub n: usize,
    pub gamma: f64,
    pub chi: f64,
    pub mode: KernelMode,
    pub states: usize,
}

/// Largest kernel written as dense triples.
pub const MAX_EXPORT_STATES: usize = 4096;

/// One JSON header line, then CSV `i,j,p` for the nonzero entries.
pub fn export_kernel<K: ChainKernel + ?Sized, W: Write>(kernel: &K, header: &KernelHeader, out: &mut W) -> Result<()> {
    let n = kernel.n_states();
    if n > MAX_EXPORT_STATES {
        return Err(Error::TooLarge { unknowns: n, limit: MAX_EXPORT_STATES });
    }
    serde_json::to_writer(&mut *out, header).map_err(|e| Error::Format(e.to_string()))?;
    out.write_all(b"\ni,j,p\n")?;
    for i in 0..n {
        for j in 0..n {
            let p = kernel.transition(i, j);
            if p != 0.0 {
                writeln!(out, "{i},{j},{p:.17e}")?;
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn iid_and_flip_kernels_mix_in_one_step() {
        let k = DenseKernel::iid(vec![0.2, 0.3, 0.5], vec![1.0; 3]).unwrap();
        assert_eq!(k.mixing_time(MixingMethod::Exact, 10).unwrap(), 1);
        let f = DenseKernel::stationary_start(vec![vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
        assert_eq!(f.mixing_time(MixingMethod::Exact, 10).unwrap(), 1);
        assert_eq!(f.mixing_time(MixingMethod::Coupling { replicas: 400, seed: 1 }, 10).unwrap(), 1);
    }

    #[test]
    fn coupling_bound_dominates_exact() {
        // lazy walk on a 6-cycle
        let n = 6;
        let p: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let mut r = vec![0.0; n];
                r[i] += 0.5;
                r[(i + 1) % n] += 0.25;
                r[(i + n - 1) % n] += 0.25;
                r
            })
            .collect();
        let k = DenseKernel::stationary_start(p).unwrap();
        let exact = k.mixing_time(MixingMethod::Exact, 200).unwrap();
        let coupled = k.mixing_time(MixingMethod::Coupling { replicas: 2000, seed: 3 }, 200).unwrap();
        assert!(coupled + 1 >= exact, "{coupled} vs {exact}");
    }

    #[test]
    fn slow_chain_reports_not_converged() {
        let k = DenseKernel::stationary_start(vec![vec![0.999, 0.001], vec![0.001, 0.999]]).unwrap();
        assert_eq!(k.mixing_time(MixingMethod::Exact, 5), Err(Error::NotConverged(5)));
    }
}
