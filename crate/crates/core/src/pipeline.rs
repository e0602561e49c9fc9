//! The torus / interlacement coupling inside the box.
//!
//! `Y` and `Z` are read off one Poisson point process by soft local times.
//! Excursion bodies are attached to `Y` given its endpoints, bridges between
//! excursions give the time line of the torus walk, and interlacement
//! excursions reuse the body of the first unused `Y` excursion with the same
//! endpoints. The vacant sets `𝒱_N^u ∩ B` and `𝒱^{u±ε} ∩ B` then live on one
//! probability space.

use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::chains::{ExcursionGeometry, ExcursionKernel};
use crate::error::{Error, Result, StageExt};
use crate::interlacements::{run_excursion, Excursion};
use crate::lattice::{LABEL_B, LABEL_DELTA};
use crate::par;
use crate::rng::{self, DirectionSource, StreamRng};
use crate::slt::{check_compatible, Drive, FiberedPoissonProcess, SltChain};

/// Parameters of the construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineParams {
    pub u: f64,
    /// Offset of the time window, in units of `N^d`.
    pub beta: f64,
    /// Ascending grid of `ε`.
    pub eps_grid: Vec<f64>,
    /// Cap on the samples drawn for one conditioned path.
    pub max_rejections: u64,
}

/// Constant `c` in the admissibility condition `ε² >= c N^{-κ/2}`,
/// `κ = γ(d-1) - 1`.
pub const DEFAULT_REGIME_CONSTANT: f64 = 1.0;

/// Smallest `ε` allowed at this size.
pub fn epsilon_floor(d: usize, n: usize, gamma: f64, c: f64) -> Result<f64> {
    let kappa = gamma * (d as f64 - 1.0) - 1.0;
    if !(kappa > 0.0) {
        return Err(Error::InvalidParameter(format!("κ = {kappa} is not positive")));
    }
    Ok((c * (n as f64).powf(-kappa / 2.0)).sqrt())
}

impl PipelineParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.u >= 0.0) || !self.u.is_finite() {
            return Err(Error::InvalidParameter(format!("level {}", self.u)));
        }
        if self.eps_grid.is_empty() || self.eps_grid.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidParameter("ε grid must be nonempty and ascending".into()));
        }
        for &e in &self.eps_grid {
            if !(e > 0.0) || e > 1.0 {
                return Err(Error::EpsilonOutOfRange { eps: e, max: 1.0 });
            }
        }
        let e_max = *self.eps_grid.last().unwrap();
        if self.beta < e_max / 2.0 {
            return Err(Error::InvalidParameter(format!(
                "β = {} must be at least ε/2 = {}",
                self.beta,
                e_max / 2.0
            )));
        }
        Ok(())
    }
}

/// The search for `ι_i` stops at this multiple of the number of `Z` steps.
pub const MATCH_HORIZON_FACTOR: usize = 2;

/// Unused conditioned samples, keyed by `(start, end)`.
struct PathCache<T> {
    spare: HashMap<(u32, u32), Vec<T>>,
}

impl<T> PathCache<T> {
    fn new() -> Self {
        PathCache { spare: HashMap::new() }
    }

    /// A sample from `start` conditioned to end at `end`: a spare one if
    /// available, otherwise fresh samples until one fits (the others are kept).
    fn take<F>(&mut self, start: u32, end: u32, cap: u64, mut draw: F) -> Result<T>
    where
        F: FnMut() -> (u32, T),
    {
        if let Some(v) = self.spare.get_mut(&(start, end)) {
            if !v.is_empty() {
                return Ok(v.remove(0));
            }
        }
        for _ in 0..cap {
            let (e, s) = draw();
            if e == end {
                return Ok(s);
            }
            self.spare.entry((start, e)).or_default().push(s);
        }
        Err(Error::TooManyRejections(cap))
    }
}

/// Steps from `∂Δ` site `from` until the box, and the `∂B` index reached.
fn bridge_length<R: Rng>(geo: &ExcursionGeometry, from: usize, dirs: &mut DirectionSource, rng: &mut R) -> (u32, u32) {
    let torus = &geo.layout.geom.torus;
    let mut x = geo.delta_boundary[from];
    let mut t = 0u32;
    while geo.labels[x] != LABEL_B {
        x = torus.neighbor(x, dirs.next(rng));
        t += 1;
    }
    (geo.b_pos[x], t)
}

/// From the uniform distribution up to `R_1`: the hit `∂B` index, `R_1`, and
/// box visits before `R_1`.
fn initial_segment<R: Rng>(geo: &ExcursionGeometry, dirs: &mut DirectionSource, rng: &mut R) -> (u32, (u32, Vec<(u32, u32)>)) {
    let torus = &geo.layout.geom.torus;
    let mut x = (rng.random::<u64>() % torus.volume() as u64) as usize;
    let mut t = 0u32;
    let mut visits = Vec::new();
    while geo.labels[x] != LABEL_DELTA {
        if geo.labels[x] == LABEL_B {
            visits.push((t, geo.b_index[x]));
        }
        x = torus.neighbor(x, dirs.next(rng));
        t += 1;
    }
    while geo.labels[x] != LABEL_B {
        x = torus.neighbor(x, dirs.next(rng));
        t += 1;
    }
    (geo.b_pos[x], (t, visits))
}

/// Outcome of one replica.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicaOutcome {
    /// Per `ε`: `𝒱^{u-ε} ⊇ 𝒱_N^u ⊇ 𝒱^{u+ε}` inside the box.
    pub sandwich: Vec<bool>,
    /// `|𝒱_N^u ∩ B|`.
    pub vacant_walk: usize,
    /// Per `ε`: `|𝒱^{u-ε} ∩ B|`, `|𝒱^{u+ε} ∩ B|`.
    pub vacant_ri: Vec<(usize, usize)>,
    /// `Y` excursions used by the torus walk.
    pub y_steps: usize,
    /// `Z` excursions used by the widest window.
    pub z_steps: usize,
    /// Interlacement excursions matched to a `Y` excursion.
    pub matched: usize,
}

struct Replica<'a> {
    geo: &'a ExcursionGeometry,
    y_kernel: &'a ExcursionKernel,
    z_kernel: &'a ExcursionKernel,
    ppp: FiberedPoissonProcess,
    y: SltChain,
    z: SltChain,
    bodies: Vec<Option<Excursion>>,
    exc_cache: PathCache<Excursion>,
    bridge_cache: PathCache<u32>,
    exc_rng: StreamRng,
    bridge_rng: StreamRng,
    exc_dirs: DirectionSource,
    bridge_dirs: DirectionSource,
    cap: u64,
}

impl<'a> Replica<'a> {
    fn y_at(&mut self, j: usize) -> Result<(u32, u32)> {
        self.y.extend_to(&mut self.ppp, self.y_kernel, j)?;
        let (a, b) = self.y_kernel.space.split(self.y.path[j - 1]);
        Ok((a as u32, b as u32))
    }

    fn z_at(&mut self, i: usize) -> Result<(u32, u32)> {
        self.z.extend_to(&mut self.ppp, self.z_kernel, i)?;
        let (a, b) = self.z_kernel.space.split(self.z.path[i - 1]);
        Ok((a as u32, b as u32))
    }

    fn fresh_excursion(&mut self, start: u32, end: u32) -> Result<Excursion> {
        let geo = self.geo;
        let (rng, dirs) = (&mut self.exc_rng, &mut self.exc_dirs);
        self.exc_cache.take(start, end, self.cap, || {
            let e = run_excursion(geo, start as usize, true, dirs, rng);
            (e.exit, e)
        })
    }

    /// `𝓔_j`, sampled on first use.
    fn body(&mut self, j: usize) -> Result<&Excursion> {
        if self.bodies.len() < j {
            self.bodies.resize(j, None);
        }
        if self.bodies[j - 1].is_none() {
            let (a, b) = self.y_at(j)?;
            let e = self.fresh_excursion(a, b)?;
            self.bodies[j - 1] = Some(e);
        }
        Ok(self.bodies[j - 1].as_ref().unwrap())
    }

    fn bridge(&mut self, from: u32, to: u32) -> Result<u32> {
        let geo = self.geo;
        let (rng, dirs) = (&mut self.bridge_rng, &mut self.bridge_dirs);
        self.bridge_cache.take(from, to, self.cap, || bridge_length(geo, from as usize, dirs, rng))
    }
}

/// Run one replica of the construction.
pub fn run_replica(
    geo: &ExcursionGeometry,
    y_kernel: &ExcursionKernel,
    z_kernel: &ExcursionKernel,
    params: &PipelineParams,
    seed: u64,
) -> Result<ReplicaOutcome> {
    params.validate()?;
    let vol = geo.layout.geom.torus.volume() as f64;
    let nb_all = geo.layout.b.len();
    let stream = |k: u64| rng::stream(seed, rng::domain::AUX | k);
    let mut rep = Replica {
        geo,
        y_kernel,
        z_kernel,
        ppp: FiberedPoissonProcess::new(y_kernel, rng::derive_seed(seed, 0)),
        y: SltChain::new(y_kernel, Drive::Chain),
        z: SltChain::new(z_kernel, Drive::Chain),
        bodies: Vec::new(),
        exc_cache: PathCache::new(),
        bridge_cache: PathCache::new(),
        exc_rng: stream(1),
        bridge_rng: stream(2),
        exc_dirs: DirectionSource::new(geo.layout.geom.d),
        bridge_dirs: DirectionSource::new(geo.layout.geom.d),
        cap: params.max_rejections,
    };

    // torus walk on the ⌊uN^d⌋ times starting at ⌊βN^d⌋
    let lo = (params.beta * vol).floor() as u64;
    let hi = lo + (params.u * vol).floor() as u64;
    let mut covered_walk = vec![false; nb_all];
    let (y1, _) = rep.y_at(1).stage("coupling")?;
    let mut init_rng = stream(3);
    let mut init_cache: PathCache<(u32, Vec<(u32, u32)>)> = PathCache::new();
    let (r1, pre) = {
        let mut dirs = DirectionSource::new(geo.layout.geom.d);
        init_cache
            .take(u32::MAX, y1, params.max_rejections, || initial_segment(geo, &mut dirs, &mut init_rng))
            .stage("initial bridge")?
    };
    for &(t, b) in &pre {
        if (lo..hi).contains(&(t as u64)) {
            covered_walk[b as usize] = true;
        }
    }
    let mut t = r1 as u64;
    let mut j = 1usize;
    while t < hi {
        let body = rep.body(j).stage("excursion bodies")?;
        for &(off, b) in &body.visits {
            if (lo..hi).contains(&(t + off as u64)) {
                covered_walk[b as usize] = true;
            }
        }
        let d_j = t + body.len as u64;
        if d_j >= hi {
            break;
        }
        let (_, x2) = rep.y_at(j).stage("coupling")?;
        let (next1, _) = rep.y_at(j + 1).stage("coupling")?;
        t = d_j + rep.bridge(x2, next1).stage("bridges")? as u64;
        j += 1;
    }
    let y_steps = j;

    // interlacement side: trajectory breaks U_i and the Poisson clock J
    let eps_max = *params.eps_grid.last().unwrap();
    let level_max = params.beta + params.u + eps_max / 2.0;
    let cap_b = geo.cap_b();
    let mut clock = stream(4);
    let mut arrivals = Vec::new();
    let mut a = 0.0;
    loop {
        a += rng::exp1(&mut clock) / cap_b;
        if a > level_max {
            break;
        }
        arrivals.push(a);
    }
    // V_k: index of the last excursion of trajectory k
    let mut breaks: Vec<usize> = Vec::with_capacity(arrivals.len());
    let mut coin = stream(5);
    let mut i = 0usize;
    while breaks.len() < arrivals.len() {
        i += 1;
        let (_, x2) = rep.z_at(i).stage("coupling")?;
        let (n1, _) = rep.z_at(i + 1).stage("coupling")?;
        let p = z_kernel.restart_probability(x2 as usize, n1 as usize);
        if coin.random::<f64>() < p {
            breaks.push(i);
        }
    }
    let n_prime = |u: f64| -> usize {
        let k = arrivals.partition_point(|&x| x <= u);
        if k == 0 {
            0
        } else {
            breaks[k - 1]
        }
    };
    let z_steps = n_prime(level_max);

    // E^RI_i: body of the first unused Y_j equal to Z_i with j up to the
    // horizon, a fresh sample with the same endpoints otherwise
    let y_len = rep.y.path.len().max(MATCH_HORIZON_FACTOR * z_steps);
    rep.y_at(y_len.max(1)).stage("coupling")?;
    let mut unused: HashMap<usize, Vec<usize>> = HashMap::new();
    for jj in (1..=y_len).rev() {
        unused.entry(rep.y.path[jj - 1]).or_default().push(jj);
    }
    let mut ri_bodies: Vec<Vec<u32>> = Vec::with_capacity(z_steps);
    let mut matched = 0usize;
    for ii in 1..=z_steps {
        let state = rep.z.path[ii - 1];
        let visits = match unused.get_mut(&state).and_then(|v| v.pop()) {
            Some(jj) => {
                matched += 1;
                rep.body(jj).stage("matching")?.visits.iter().map(|v| v.1).collect()
            }
            None => {
                let (a1, a2) = rep.z_kernel.space.split(state);
                rep.fresh_excursion(a1 as u32, a2 as u32)
                    .stage("matching")?
                    .visits
                    .iter()
                    .map(|v| v.1)
                    .collect()
            }
        };
        ri_bodies.push(visits);
    }

    let cover = |from: usize, to: usize| {
        let mut c = vec![false; nb_all];
        for body in ri_bodies.iter().take(to).skip(from) {
            for &b in body {
                c[b as usize] = true;
            }
        }
        c
    };
    let vacant_walk = covered_walk.iter().filter(|c| !**c).count();
    let mut sandwich = Vec::new();
    let mut vacant_ri = Vec::new();
    for &eps in &params.eps_grid {
        // 𝒱^{u-ε}: indices 𝒩'(β+ε/2)+1 ..= 𝒩'(β+u-ε/2); 𝒱^{u+ε}: 𝒩'(β-ε/2)+1 ..= 𝒩'(β+u+ε/2)
        let small_to = n_prime(params.beta + params.u - eps / 2.0);
        let small_from = n_prime(params.beta + eps / 2.0);
        let big_from = n_prime(params.beta - eps / 2.0);
        let big_to = n_prime(params.beta + params.u + eps / 2.0);
        let c_small = cover(small_from, small_to.max(small_from));
        let c_big = cover(big_from, big_to);
        // 𝒱^{u-ε} ⊇ 𝒱_N^u ⊇ 𝒱^{u+ε}, i.e. covered sets nested the other way
        let lower_ok = (0..nb_all).all(|b| !c_small[b] || covered_walk[b]);
        let upper_ok = (0..nb_all).all(|b| !covered_walk[b] || c_big[b]);
        sandwich.push(lower_ok && upper_ok);
        vacant_ri.push((
            c_small.iter().filter(|c| !**c).count(),
            c_big.iter().filter(|c| !**c).count(),
        ));
    }
    Ok(ReplicaOutcome { sandwich, vacant_walk, vacant_ri, y_steps, z_steps, matched })
}

/// Aggregate of the replicas.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineSummary {
    pub params: PipelineParams,
    pub replicas: usize,
    /// Per `ε`: frequency of the sandwich event.
    pub frequency: Vec<f64>,
    pub stderr: Vec<f64>,
    pub outcomes: Vec<ReplicaOutcome>,
}

/// Run `replicas` independent replicas.
pub fn run_pipeline(
    geo: &ExcursionGeometry,
    y_kernel: &ExcursionKernel,
    z_kernel: &ExcursionKernel,
    params: &PipelineParams,
    replicas: usize,
    seed: u64,
) -> Result<PipelineSummary> {
    params.validate()?;
    check_compatible(z_kernel, y_kernel).stage("kernels")?;
    let outcomes: Vec<ReplicaOutcome> = par::map_replicas(replicas, |k| {
        run_replica(geo, y_kernel, z_kernel, params, rng::derive_seed(seed, k as u64))
    })
    .into_iter()
    .collect::<Result<_>>()?;
    let r = replicas.max(1) as f64;
    let frequency: Vec<f64> = (0..params.eps_grid.len())
        .map(|e| outcomes.iter().filter(|o| o.sandwich[e]).count() as f64 / r)
        .collect();
    let stderr = frequency.iter().map(|p| (p * (1.0 - p) / r).sqrt()).collect();
    Ok(PipelineSummary { params: params.clone(), replicas, frequency, stderr, outcomes })
}
