//! Random interlacements seen from a finite set.
//!
//! Trajectories hitting `K` arrive as a Poisson process of rate `cap(K)` in
//! the level `u`; each starts from `ē_K` and runs as a simple random walk on
//! `Z^d`. When a walk reaches the kill sphere it either returns to `K`, at a
//! point drawn from the exact hitting distribution, or escapes for good.

use std::io::Write;

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::chains::ExcursionGeometry;
use crate::error::{Error, Result};
use crate::lattice::{Point, LABEL_B, LABEL_DELTA, MAX_D};
use crate::potential::{ZdCapacitance, ZdGreen};
use crate::rng::{self, DirectionSource, StreamRng};

/// A finite set `K ⊂ Z^d` with everything needed to run walks around it.
#[derive(Debug, Clone)]
pub struct ZdTarget {
    pub d: usize,
    pub points: Vec<Point>,
    green: ZdGreen,
    cap: ZdCapacitance,
    /// Twice the centre of the bounding box.
    center2: [i64; MAX_D],
    kill_r2x4: f64,
    lo: Point,
    ext: [usize; MAX_D],
    lookup: Vec<u32>,
    eq_cum: Vec<f64>,
}

impl ZdTarget {
    pub fn new(d: usize, points: &[Point], kill_radius: f64) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptySet);
        }
        let mut lo = [0i32; MAX_D];
        let mut hi = [0i32; MAX_D];
        for i in 0..d {
            lo[i] = points.iter().map(|p| p[i]).min().unwrap();
            hi[i] = points.iter().map(|p| p[i]).max().unwrap();
        }
        let mut center2 = [0i64; MAX_D];
        for i in 0..d {
            center2[i] = lo[i] as i64 + hi[i] as i64;
        }
        let reach2x4 = points
            .iter()
            .map(|p| (0..d).map(|i| (2 * p[i] as i64 - center2[i]).pow(2)).sum::<i64>())
            .max()
            .unwrap() as f64;
        if !kill_radius.is_finite() || 4.0 * kill_radius * kill_radius <= reach2x4 + 4.0 * (reach2x4.sqrt() + 1.0) {
            return Err(Error::InvalidParameter(format!(
                "kill radius {kill_radius} does not clear the target (reach {})",
                reach2x4.sqrt() / 2.0
            )));
        }
        let span = (0..d).map(|i| (hi[i] - lo[i]) as usize).max().unwrap();
        let green = ZdGreen::new(d, span.max(1))?;
        let cap = ZdCapacitance::new(&green, points)?;
        let mut ext = [1usize; MAX_D];
        for i in 0..d {
            ext[i] = (hi[i] - lo[i]) as usize + 1;
        }
        let vol: usize = ext[..d].iter().product();
        let mut lookup = vec![u32::MAX; vol];
        let mut t = ZdTarget {
            d,
            points: points.to_vec(),
            green,
            cap,
            center2,
            kill_r2x4: 4.0 * kill_radius * kill_radius,
            lo,
            ext,
            lookup: Vec::new(),
            eq_cum: Vec::new(),
        };
        for (k, p) in points.iter().enumerate() {
            let slot = t.slot(p).expect("point inside its own bounding box");
            lookup[slot] = k as u32;
        }
        t.lookup = lookup;
        t.eq_cum = rng::cumulative(&t.cap.equilibrium);
        Ok(t)
    }

    #[inline]
    fn slot(&self, p: &Point) -> Option<usize> {
        let mut s = 0usize;
        for i in (0..self.d).rev() {
            let c = p[i] - self.lo[i];
            if c < 0 || c as usize >= self.ext[i] {
                return None;
            }
            s = s * self.ext[i] + c as usize;
        }
        Some(s)
    }

    /// Index of `p` in `points`.
    #[inline]
    pub fn index_of(&self, p: &Point) -> Option<usize> {
        self.slot(p).and_then(|s| {
            let k = self.lookup[s];
            (k != u32::MAX).then_some(k as usize)
        })
    }

    pub fn capacity(&self) -> f64 {
        self.cap.capacity()
    }

    pub fn equilibrium(&self) -> &[f64] {
        &self.cap.equilibrium
    }

    /// `ē_K`.
    pub fn normalized_equilibrium(&self) -> Vec<f64> {
        let c = self.capacity();
        self.cap.equilibrium.iter().map(|e| e / c).collect()
    }

    pub fn green(&self) -> &ZdGreen {
        &self.green
    }

    pub fn capacitance(&self) -> &ZdCapacitance {
        &self.cap
    }

    /// A start drawn from `ē_K`.
    pub fn sample_start<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        rng::sample_cumulative(rng, &self.eq_cum)
    }

    #[inline]
    pub fn outside_kill_sphere(&self, p: &Point) -> bool {
        let mut s = 0i64;
        for i in 0..self.d {
            let v = 2 * p[i] as i64 - self.center2[i];
            s += v * v;
        }
        s as f64 >= self.kill_r2x4
    }

    /// From `x` outside the kill sphere: the point where the walk next enters
    /// `K`, or `None` if it never does.
    pub fn reenter<R: Rng + ?Sized>(&self, x: &Point, rng: &mut R) -> Option<usize> {
        let p = self.cap.hit_probability(&self.green, x);
        if rng.random::<f64>() >= p {
            return None;
        }
        let row = self.cap.hitting_row(&self.green, x);
        Some(rng::sample_cumulative(rng, &rng::cumulative(&row)))
    }
}

/// Vacant set of interlacements in `K`, for every level up to `u_max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VacantProcess {
    pub u_max: f64,
    /// Levels at which trajectories arrive, ascending.
    pub arrivals: Vec<f64>,
    /// Per site of `K`: first level at which it is covered, `∞` if never.
    pub cover_level: Vec<f64>,
}

impl VacantProcess {
    /// `J_u`.
    pub fn trajectories(&self, u: f64) -> usize {
        self.arrivals.partition_point(|&a| a <= u)
    }

    pub fn vacant(&self, u: f64) -> Vec<bool> {
        self.cover_level.iter().map(|&c| c > u).collect()
    }

    pub fn at(&self, u: f64) -> VacantSample {
        VacantSample { u, trajectories: self.trajectories(u), vacant: self.vacant(u) }
    }
}

/// `𝒱^u ∩ K`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VacantSample {
    pub u: f64,
    /// `J_u`.
    pub trajectories: usize,
    /// Indexed like the points of `K`.
    pub vacant: Vec<bool>,
}

/// Run one trajectory from `ē_K`, calling `visit` with the index of every
/// visited point of `K`.
pub fn run_trajectory<R: Rng, F: FnMut(usize)>(
    target: &ZdTarget,
    max_steps: u64,
    dirs: &mut DirectionSource,
    rng: &mut R,
    mut visit: F,
) -> Result<()> {
    let mut p = target.points[target.sample_start(rng)];
    let mut steps = 0u64;
    loop {
        if let Some(k) = target.index_of(&p) {
            visit(k);
        }
        if target.outside_kill_sphere(&p) {
            match target.reenter(&p, rng) {
                Some(k) => {
                    p = target.points[k];
                    continue;
                }
                None => return Ok(()),
            }
        }
        if steps >= max_steps {
            return Err(Error::StepCapExceeded(max_steps));
        }
        let dir = dirs.next(rng);
        p[dir >> 1] += if dir & 1 == 0 { 1 } else { -1 };
        steps += 1;
    }
}

/// Default step cap for a single interlacement trajectory.
pub const MAX_TRAJECTORY_STEPS: u64 = 1 << 36;

/// Vacant set of interlacements in `K` at all levels up to `u_max`.
pub fn sample_vacant_process(target: &ZdTarget, u_max: f64, seed: u64) -> Result<VacantProcess> {
    if !(u_max >= 0.0) || !u_max.is_finite() {
        return Err(Error::InvalidParameter(format!("level {u_max}")));
    }
    let mut arrival_rng = rng::stream(seed, rng::domain::AUX);
    let cap = target.capacity();
    let mut arrivals = Vec::new();
    let mut a = 0.0;
    loop {
        a += rng::exp1(&mut arrival_rng) / cap;
        if a > u_max {
            break;
        }
        arrivals.push(a);
    }
    let mut cover_level = vec![f64::INFINITY; target.points.len()];
    for (i, &level) in arrivals.iter().enumerate() {
        let mut r = rng::replica(seed, i as u64);
        let mut dirs = DirectionSource::new(target.d);
        run_trajectory(target, MAX_TRAJECTORY_STEPS, &mut dirs, &mut r, |k| {
            if cover_level[k] > level {
                cover_level[k] = level;
            }
        })?;
    }
    Ok(VacantProcess { u_max, arrivals, cover_level })
}

/// `𝒱^u ∩ K` for `K` a list of points of `Z^d`.
pub fn sample_vacant(d: usize, k: &[Point], u: f64, kill_radius: f64, seed: u64) -> Result<VacantSample> {
    let target = ZdTarget::new(d, k, kill_radius)?;
    Ok(sample_vacant_process(&target, u, seed)?.at(u))
}

/// Header of a vacant-set dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VacantHeader {
    pub d: usize,
    /// Torus side, if the set lives on a torus.
    pub n: Option<usize>,
    /// Box extents, if the set lives in a box.
    pub extents: Option<Vec<usize>>,
    pub u: f64,
    pub seed: u64,
    pub len: usize,
}

/// One JSON header line, then run lengths of the bitmask separated by
/// spaces. Runs alternate starting with vacant sites, so a leading `0` means
/// the first site is occupied.
pub fn dump_vacant<W: Write>(out: &mut W, header: &VacantHeader, vacant: &[bool]) -> Result<()> {
    if header.len != vacant.len() {
        return Err(Error::InvalidParameter("header length disagrees with the mask".into()));
    }
    serde_json::to_writer(&mut *out, header).map_err(|e| Error::Format(e.to_string()))?;
    out.write_all(b"\n")?;
    let mut runs = Vec::new();
    let mut cur = true;
    let mut len = 0usize;
    for &v in vacant {
        if v == cur {
            len += 1;
        } else {
            runs.push(len);
            cur = v;
            len = 1;
        }
    }
    runs.push(len);
    let line: Vec<String> = runs.iter().map(|r| r.to_string()).collect();
    out.write_all(line.join(" ").as_bytes())?;
    out.write_all(b"\n")?;
    Ok(())
}

/// Inverse of [`dump_vacant`].
pub fn read_vacant(text: &str) -> Result<(VacantHeader, Vec<bool>)> {
    let mut lines = text.lines();
    let header: VacantHeader = serde_json::from_str(lines.next().ok_or_else(|| Error::Format("empty dump".into()))?)
        .map_err(|e| Error::Format(e.to_string()))?;
    let mut mask = Vec::with_capacity(header.len);
    let mut cur = true;
    for tok in lines.next().unwrap_or("").split_whitespace() {
        let r: usize = tok.parse().map_err(|_| Error::Format(format!("bad run length {tok}")))?;
        mask.extend(std::iter::repeat_n(cur, r));
        cur = !cur;
    }
    if mask.len() != header.len {
        return Err(Error::Format(format!("{} sites decoded, header says {}", mask.len(), header.len)));
    }
    Ok((header, mask))
}

/// A visit of an excursion to the box: time since the excursion started and
/// index of the site in the box.
pub type BoxVisit = (u32, u32);

/// One excursion between the box and the buffer set.
#[derive(Debug, Clone, PartialEq)]
pub struct Excursion {
    /// Index in `∂B`.
    pub entry: u32,
    /// Index in `∂Δ`.
    pub exit: u32,
    /// Number of steps from entry to exit.
    pub len: u32,
    pub visits: Vec<BoxVisit>,
}

/// Walk from `∂B` site `start` until the buffer set, recording box visits.
pub fn run_excursion<R: Rng>(
    geo: &ExcursionGeometry,
    start: usize,
    keep_visits: bool,
    dirs: &mut DirectionSource,
    rng: &mut R,
) -> Excursion {
    let torus = &geo.layout.geom.torus;
    let mut x = geo.b_boundary[start];
    let mut visits = Vec::new();
    let mut t = 0u32;
    while geo.labels[x] != LABEL_DELTA {
        if keep_visits && geo.labels[x] == LABEL_B {
            visits.push((t, geo.b_index[x]));
        }
        x = torus.neighbor(x, dirs.next(rng));
        t += 1;
    }
    Excursion { entry: start as u32, exit: geo.delta_pos[x], len: t, visits }
}

/// Where a `Z^d` walk from `∂Δ` site `from` next enters the box: a `∂B` index,
/// or `None` if it escapes.
pub fn zd_return<R: Rng>(
    geo: &ExcursionGeometry,
    from: usize,
    dirs: &mut DirectionSource,
    rng: &mut R,
) -> Result<Option<usize>> {
    let torus = &geo.layout.geom.torus;
    let n = torus.n as i32;
    let d = torus.d;
    let mut p = torus.point(geo.delta_boundary[from]);
    let mut steps = 0u64;
    loop {
        if (0..d).all(|i| p[i] >= 0 && p[i] < n) {
            let x = torus.index(&p);
            if geo.labels[x] == LABEL_B {
                return Ok(Some(geo.b_pos[x] as usize));
            }
        }
        if geo.zd.outside_kill_sphere(&p) {
            return Ok(geo.zd.reenter(&p, rng));
        }
        if steps >= MAX_TRAJECTORY_STEPS {
            return Err(Error::StepCapExceeded(MAX_TRAJECTORY_STEPS));
        }
        let dir = dirs.next(rng);
        p[dir >> 1] += if dir & 1 == 0 { 1 } else { -1 };
        steps += 1;
    }
}

/// Excursions of one interlacement trajectory started from `ē_B`.
pub fn ri_trajectory<R: Rng>(
    geo: &ExcursionGeometry,
    keep_visits: bool,
    dirs: &mut DirectionSource,
    rng: &mut R,
) -> Result<Vec<Excursion>> {
    let mut start = geo.zd.sample_start(rng);
    let mut out = Vec::new();
    loop {
        let e = run_excursion(geo, start, keep_visits, dirs, rng);
        let exit = e.exit as usize;
        out.push(e);
        match zd_return(geo, exit, dirs, rng)? {
            Some(next) => start = next,
            None => return Ok(out),
        }
    }
}

/// Interlacement excursions up to level `u_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExcursionStream {
    pub u_max: f64,
    /// Arrival levels of the trajectories (the jumps of `J_·`).
    pub arrivals: Vec<f64>,
    /// `T^(i)` per trajectory.
    pub counts: Vec<usize>,
    /// Endpoint pairs `(∂B index, ∂Δ index)`, concatenated over trajectories.
    pub pairs: Vec<(u32, u32)>,
    /// Excursion bodies, if requested.
    pub bodies: Option<Vec<Excursion>>,
}

impl ExcursionStream {
    /// `𝒩'(u)`.
    pub fn count_up_to(&self, u: f64) -> usize {
        let j = self.arrivals.partition_point(|&a| a <= u);
        self.counts[..j].iter().sum()
    }
}

/// The chain `Z` as produced by interlacement trajectories up to `u_max`.
pub fn sample_excursion_stream(geo: &ExcursionGeometry, u_max: f64, keep_bodies: bool, seed: u64) -> Result<ExcursionStream> {
    if !(u_max >= 0.0) || !u_max.is_finite() {
        return Err(Error::InvalidParameter(format!("level {u_max}")));
    }
    let cap = geo.zd.capacity();
    let mut arrival_rng = rng::stream(seed, rng::domain::AUX);
    let mut arrivals = Vec::new();
    let mut a = 0.0;
    loop {
        a += rng::exp1(&mut arrival_rng) / cap;
        if a > u_max {
            break;
        }
        arrivals.push(a);
    }
    let mut counts = Vec::with_capacity(arrivals.len());
    let mut pairs = Vec::new();
    let mut bodies = keep_bodies.then(Vec::new);
    for i in 0..arrivals.len() {
        let mut r = rng::replica(seed, i as u64);
        let mut dirs = DirectionSource::new(geo.layout.geom.d);
        let exc = ri_trajectory(geo, keep_bodies, &mut dirs, &mut r)?;
        counts.push(exc.len());
        pairs.extend(exc.iter().map(|e| (e.entry, e.exit)));
        if let Some(b) = bodies.as_mut() {
            b.extend(exc);
        }
    }
    Ok(ExcursionStream { u_max, arrivals, counts, pairs, bodies })
}

/// `J_u ~ Poisson(u cap)`, drawn directly.
pub fn poisson_count(rng: &mut StreamRng, mean: f64) -> Result<u64> {
    if mean == 0.0 {
        return Ok(0);
    }
    let p = Poisson::new(mean).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    Ok(p.sample(rng) as u64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn origin() -> Vec<Point> {
        vec![[0; MAX_D]]
    }

    #[test]
    fn zero_level_is_all_vacant() {
        let v = sample_vacant(3, &origin(), 0.0, 4.0, 1).unwrap();
        assert_eq!(v.vacant, vec![true]);
        assert_eq!(v.trajectories, 0);
    }

    #[test]
    fn nested_levels() {
        let k: Vec<Point> = (0..4).flat_map(|a| (0..4).map(move |b| [a, b, 0, 0, 0, 0])).collect();
        let t = ZdTarget::new(3, &k, 10.0).unwrap();
        let p = sample_vacant_process(&t, 2.0, 5).unwrap();
        let (a, b) = (p.vacant(0.5), p.vacant(1.5));
        assert!(a.iter().zip(&b).all(|(x, y)| *x || !*y));
    }

    #[test]
    fn singleton_every_trajectory_covers() {
        let t = ZdTarget::new(3, &origin(), 3.0).unwrap();
        let p = sample_vacant_process(&t, 3.0, 2).unwrap();
        let first = p.arrivals.first().copied().unwrap_or(f64::INFINITY);
        assert_eq!(p.cover_level[0], first);
    }

    #[test]
    fn kill_radius_must_clear_target() {
        assert!(ZdTarget::new(3, &origin(), 0.5).is_err());
        assert!(ZdTarget::new(3, &origin(), f64::INFINITY).is_err());
    }

    #[test]
    fn vacant_dump_round_trip() {
        let mask = vec![false, false, true, true, true, false];
        let h = VacantHeader { d: 3, n: Some(4), extents: None, u: 1.0, seed: 9, len: mask.len() };
        let mut buf = Vec::new();
        dump_vacant(&mut buf, &h, &mask).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.lines().nth(1).unwrap().starts_with("0 2 3 1"));
        assert_eq!(read_vacant(&text).unwrap(), (h, mask));
    }
}
