//! Clusters of vacant sets: union-find labelling, Euclidean diameters and the
//! estimator of `η_N(u)`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::lattice::{Torus, MAX_D};
use crate::par;
use crate::rng::{self, DirectionSource};
use rand::Rng;

/// Adjacency of the sites carrying the indicator.
#[derive(Debug, Clone, PartialEq)]
pub enum Topology {
    Torus(Torus),
    /// A box with the given extents, no wrap-around.
    Box(Vec<usize>),
}

impl Topology {
    pub fn d(&self) -> usize {
        match self {
            Topology::Torus(t) => t.d,
            Topology::Box(e) => e.len(),
        }
    }

    pub fn volume(&self) -> usize {
        match self {
            Topology::Torus(t) => t.volume(),
            Topology::Box(e) => e.iter().product(),
        }
    }

    fn extent(&self, axis: usize) -> usize {
        match self {
            Topology::Torus(t) => t.n,
            Topology::Box(e) => e[axis],
        }
    }

    fn coords(&self, mut idx: usize) -> [i64; MAX_D] {
        let mut c = [0i64; MAX_D];
        for (i, ci) in c.iter_mut().enumerate().take(self.d()) {
            let e = self.extent(i);
            *ci = (idx % e) as i64;
            idx /= e;
        }
        c
    }

    /// Squared distance; wrapped on the torus.
    fn dist2(&self, a: &[i64; MAX_D], b: &[i64; MAX_D]) -> i64 {
        let wrap = matches!(self, Topology::Torus(_));
        (0..self.d())
            .map(|i| {
                let mut diff = (a[i] - b[i]).abs();
                if wrap {
                    diff = diff.min(self.extent(i) as i64 - diff);
                }
                diff * diff
            })
            .sum()
    }

    /// Neighbours of `idx` in the positive direction of every axis.
    fn forward_neighbors(&self, idx: usize, out: &mut Vec<usize>) {
        out.clear();
        let mut stride = 1usize;
        let mut rest = idx;
        for i in 0..self.d() {
            let e = self.extent(i);
            let c = rest % e;
            rest /= e;
            if c + 1 < e {
                out.push(idx + stride);
            } else if matches!(self, Topology::Torus(_)) && e > 2 {
                out.push(idx + stride - e * stride);
            } else if matches!(self, Topology::Torus(_)) && e == 2 {
                out.push(idx - stride);
            }
            stride *= e;
        }
    }
}

/// Connected components of a vacant set.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusterStats {
    /// Component id per site, `u32::MAX` for occupied sites.
    pub label: Vec<u32>,
    pub sizes: Vec<usize>,
    pub largest: usize,
}

impl ClusterStats {
    pub fn n_components(&self) -> usize {
        self.sizes.len()
    }

    /// Sites of component `c`.
    pub fn members(&self, c: u32) -> Vec<usize> {
        (0..self.label.len()).filter(|&i| self.label[i] == c).collect()
    }
}

fn find(parent: &mut [u32], mut x: u32) -> u32 {
    while parent[x as usize] != x {
        let p = parent[x as usize];
        parent[x as usize] = parent[p as usize];
        x = p;
    }
    x
}

/// Union-find labelling of the vacant sites with nearest-neighbour adjacency.
pub fn components(vacant: &[bool], topo: &Topology) -> ClusterStats {
    let n = vacant.len();
    assert_eq!(n, topo.volume(), "indicator does not match the topology");
    let mut parent: Vec<u32> = (0..n as u32).collect();
    let mut size = vec![1u32; n];
    let mut nb = Vec::with_capacity(MAX_D);
    for i in 0..n {
        if !vacant[i] {
            continue;
        }
        topo.forward_neighbors(i, &mut nb);
        for &j in &nb {
            if !vacant[j] {
                continue;
            }
            let (a, b) = (find(&mut parent, i as u32), find(&mut parent, j as u32));
            if a != b {
                let (big, small) = if size[a as usize] >= size[b as usize] { (a, b) } else { (b, a) };
                parent[small as usize] = big;
                size[big as usize] += size[small as usize];
            }
        }
    }
    let mut label = vec![u32::MAX; n];
    let mut root_id = vec![u32::MAX; n];
    let mut sizes = Vec::new();
    for i in 0..n {
        if !vacant[i] {
            continue;
        }
        let r = find(&mut parent, i as u32) as usize;
        if root_id[r] == u32::MAX {
            root_id[r] = sizes.len() as u32;
            sizes.push(0);
        }
        label[i] = root_id[r];
        sizes[root_id[r] as usize] += 1;
    }
    let largest = sizes.iter().copied().max().unwrap_or(0);
    ClusterStats { label, sizes, largest }
}

/// Components up to this size get an exact quadratic diameter.
pub const EXACT_DIAMETER_LIMIT: usize = 10_000;

/// Lower and upper bounds on the diameter: two farthest-point sweeps, and
/// the per-axis extents of the smallest covering (circular) intervals.
pub fn diameter_bounds(points: &[usize], topo: &Topology) -> (f64, f64) {
    if points.len() <= 1 {
        return (0.0, 0.0);
    }
    let cs: Vec<[i64; MAX_D]> = points.iter().map(|&p| topo.coords(p)).collect();
    let far = |from: &[i64; MAX_D]| {
        cs.iter()
            .enumerate()
            .map(|(k, c)| (topo.dist2(from, c), k))
            .max()
            .unwrap()
    };
    let (_, a) = far(&cs[0]);
    let (d2, _) = far(&cs[a]);
    let mut upper2 = 0i64;
    for i in 0..topo.d() {
        let e = topo.extent(i);
        let mut seen = vec![false; e];
        for c in &cs {
            seen[c[i] as usize] = true;
        }
        let span = match topo {
            Topology::Box(_) => {
                let lo = seen.iter().position(|&s| s).unwrap();
                let hi = seen.iter().rposition(|&s| s).unwrap();
                (hi - lo) as i64
            }
            Topology::Torus(_) => {
                // complement of the longest circular gap
                let mut best_gap = 0usize;
                let mut run = 0usize;
                for k in 0..2 * e {
                    if seen[k % e] {
                        run = 0;
                    } else {
                        run += 1;
                        best_gap = best_gap.max(run.min(e));
                    }
                }
                ((e - best_gap.min(e)) as i64 - 1).min(e as i64 / 2)
            }
        };
        upper2 += span * span;
    }
    ((d2 as f64).sqrt(), (upper2 as f64).sqrt())
}

fn exact_diameter2(cs: &[[i64; MAX_D]], topo: &Topology, stop_at: Option<i64>) -> i64 {
    let mut best = 0i64;
    for a in 0..cs.len() {
        for b in a + 1..cs.len() {
            let v = topo.dist2(&cs[a], &cs[b]);
            if v > best {
                best = v;
                if stop_at.is_some_and(|s| best >= s) {
                    return best;
                }
            }
        }
    }
    best
}

/// Maximum over pairs of the Euclidean distance (wrapped on the torus).
pub fn euclid_diameter(points: &[usize], topo: &Topology) -> Result<f64> {
    if points.is_empty() {
        return Err(Error::EmptySet);
    }
    let (lo, hi) = diameter_bounds(points, topo);
    if lo == hi {
        return Ok(lo);
    }
    let cs: Vec<[i64; MAX_D]> = points.iter().map(|&p| topo.coords(p)).collect();
    Ok((exact_diameter2(&cs, topo, None) as f64).sqrt())
}

/// Whether the diameter is at least `r`; the quadratic scan only runs when
/// the bounds do not decide.
pub fn diameter_at_least(points: &[usize], topo: &Topology, r: f64) -> bool {
    if points.is_empty() {
        return false;
    }
    let (lo, hi) = diameter_bounds(points, topo);
    if lo >= r {
        return true;
    }
    if hi < r {
        return false;
    }
    let cs: Vec<[i64; MAX_D]> = points.iter().map(|&p| topo.coords(p)).collect();
    let need = (r * r).ceil() as i64;
    exact_diameter2(&cs, topo, Some(need)) as f64 >= r * r
}

/// First visit time of every site by a walk from the uniform distribution,
/// `u64::MAX` if unvisited by time `steps`.
pub fn first_visits<R: Rng>(torus: &Torus, steps: u64, rng: &mut R) -> Vec<u64> {
    let mut first = vec![u64::MAX; torus.volume()];
    let mut dirs = DirectionSource::new(torus.d);
    let mut x = (rng.random::<u64>() % torus.volume() as u64) as usize;
    first[x] = 0;
    for t in 1..=steps {
        x = torus.neighbor(x, dirs.next(rng));
        if first[x] == u64::MAX {
            first[x] = t;
        }
    }
    first
}

/// One row of the `η̂` table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EtaEstimate {
    pub u: f64,
    pub eta: f64,
    pub stderr: f64,
    pub mean_largest: f64,
}

/// `η̂` on a grid plus the per-replica indicators.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EtaHat {
    pub d: usize,
    pub n: usize,
    pub replicas: usize,
    pub seed: u64,
    pub rows: Vec<EtaEstimate>,
    /// `indicators[r][k]`: event at `u_grid[k]` in replica `r`.
    pub indicators: Vec<Vec<bool>>,
}

impl EtaHat {
    /// Whether every replica's indicator is non-increasing along the grid.
    pub fn pathwise_monotone(&self) -> bool {
        self.indicators.iter().all(|row| row.windows(2).all(|w| w[0] || !w[1]))
    }

    /// Level where `η̂` first drops below `1/2`, by linear interpolation.
    pub fn half_crossing(&self) -> Option<f64> {
        self.rows.windows(2).find_map(|w| {
            let (a, b) = (&w[0], &w[1]);
            (a.eta >= 0.5 && b.eta < 0.5).then(|| a.u + (a.eta - 0.5) / (a.eta - b.eta) * (b.u - a.u))
        })
    }
}

/// Estimate `η_N(u) = P[diam 𝒞_N(u) >= N/4]` along `u_grid`, one walk per
/// replica shared by the whole grid. The origin is the site `0`.
pub fn eta_hat(d: usize, n: usize, u_grid: &[f64], replicas: usize, seed: u64) -> Result<EtaHat> {
    if u_grid.is_empty() || u_grid.iter().any(|&u| !(u >= 0.0) || !u.is_finite()) {
        return Err(Error::InvalidParameter("levels must be finite and nonnegative".into()));
    }
    if u_grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidParameter("level grid must be ascending".into()));
    }
    if replicas == 0 {
        return Err(Error::InvalidParameter("no replicas".into()));
    }
    let torus = Torus::new(d, n)?;
    let vol = torus.volume() as f64;
    let u_max = *u_grid.last().unwrap();
    let steps = (u_max * vol).floor() as u64;
    let topo = Topology::Torus(torus.clone());
    let threshold = n as f64 / 4.0;
    let per_replica: Vec<Vec<(bool, usize)>> = par::map_replicas(replicas, |k| {
        let mut r = rng::replica(seed, k as u64);
        let first = first_visits(&torus, steps, &mut r);
        u_grid
            .iter()
            .map(|&u| {
                let horizon = (u * vol).floor() as u64;
                // the first ⌊uN^d⌋ positions X_0, ..., X_{⌊uN^d⌋-1}
                let vacant: Vec<bool> = first.iter().map(|&f| f >= horizon).collect();
                let stats = components(&vacant, &topo);
                let event = stats.label[0] != u32::MAX && {
                    let c = stats.label[0];
                    diameter_at_least(&stats.members(c), &topo, threshold)
                };
                (event, stats.largest)
            })
            .collect()
    });
    let rf = replicas as f64;
    let rows = u_grid
        .iter()
        .enumerate()
        .map(|(k, &u)| {
            let hits = per_replica.iter().filter(|r| r[k].0).count() as f64;
            let eta = hits / rf;
            let mean_largest = per_replica.iter().map(|r| r[k].1 as f64).sum::<f64>() / rf;
            EtaEstimate { u, eta, stderr: (eta * (1.0 - eta) / rf).sqrt(), mean_largest }
        })
        .collect();
    let indicators = per_replica.iter().map(|r| r.iter().map(|v| v.0).collect()).collect();
    Ok(EtaHat { d, n, replicas, seed, rows, indicators })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_and_empty() {
        let t = Torus::new(3, 5).unwrap();
        let topo = Topology::Torus(t);
        let s = components(&[true; 125], &topo);
        assert_eq!(s.sizes, vec![125]);
        let s = components(&[false; 125], &topo);
        assert_eq!(s.n_components(), 0);
    }

    #[test]
    fn full_torus_diameter() {
        let t = Torus::new(3, 8).unwrap();
        let pts: Vec<usize> = (0..512).collect();
        let d = euclid_diameter(&pts, &Topology::Torus(t)).unwrap();
        assert!((d - (48.0f64).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn segment_and_singleton() {
        let t = Torus::new(3, 20).unwrap();
        let topo = Topology::Torus(t.clone());
        let seg: Vec<usize> = (0..=7).map(|k| t.index(&[k, 3, 3, 0, 0, 0])).collect();
        assert_eq!(euclid_diameter(&seg, &topo).unwrap(), 7.0);
        assert_eq!(euclid_diameter(&seg[..1], &topo).unwrap(), 0.0);
        assert!(euclid_diameter(&[], &topo).is_err());
    }

    #[test]
    fn box_topology_does_not_wrap() {
        let topo = Topology::Box(vec![4, 1, 1]);
        let s = components(&[true, false, true, true], &topo);
        assert_eq!(s.n_components(), 2);
        let torus = Topology::Torus(Torus::new(1, 4).unwrap());
        assert_eq!(components(&[true, false, true, true], &torus).n_components(), 1);
    }
}
