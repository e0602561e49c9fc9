//! Geometry of the discrete torus and of the rounded box / buffer pair.
//!
//! Sites of the torus `{0,..,N-1}^d` are addressed by a flat index
//! `sum_i x_i N^i`. The same coordinates are used for `Z^d`: the rounded box
//! and the complement of the buffer set stay away from the faces of the
//! fundamental domain, so both are honest subsets of `Z^d` too.

use crate::error::{Error, Result};

/// Largest supported dimension.
pub const MAX_D: usize = 6;

/// A lattice point; only the first `d` coordinates are meaningful.
pub type Point = [i32; MAX_D];

/// Neighbourhood structure of `T^d_N`.
#[derive(Debug, Clone, PartialEq)]
pub struct Torus {
    pub d: usize,
    pub n: usize,
    strides: [usize; MAX_D],
    volume: usize,
}

impl Torus {
    pub fn new(d: usize, n: usize) -> Result<Self> {
        if d == 0 || d > MAX_D {
            return Err(Error::InvalidParameter(format!("dimension {d} not in 1..={MAX_D}")));
        }
        if n < 2 {
            return Err(Error::InvalidParameter(format!("side length {n} < 2")));
        }
        let mut strides = [0usize; MAX_D];
        let mut s = 1usize;
        for st in strides.iter_mut().take(d) {
            *st = s;
            s = s
                .checked_mul(n)
                .ok_or_else(|| Error::InvalidParameter("torus volume overflows".into()))?;
        }
        Ok(Torus { d, n, strides, volume: s })
    }

    #[inline]
    pub fn volume(&self) -> usize {
        self.volume
    }

    /// Flat index of `p`, reducing every coordinate modulo `N`.
    #[inline]
    pub fn index(&self, p: &Point) -> usize {
        let n = self.n as i64;
        (0..self.d)
            .map(|i| (p[i] as i64).rem_euclid(n) as usize * self.strides[i])
            .sum()
    }

    #[inline]
    pub fn point(&self, mut idx: usize) -> Point {
        let mut p = [0i32; MAX_D];
        for c in p.iter_mut().take(self.d) {
            *c = (idx % self.n) as i32;
            idx /= self.n;
        }
        p
    }

    #[inline]
    pub fn coord(&self, idx: usize, axis: usize) -> usize {
        (idx / self.strides[axis]) % self.n
    }

    /// Neighbour of `idx` in direction `dir`: axis `dir / 2`, sign by parity.
    #[inline]
    pub fn neighbor(&self, idx: usize, dir: usize) -> usize {
        let axis = dir >> 1;
        let st = self.strides[axis];
        let c = (idx / st) % self.n;
        if dir & 1 == 0 {
            if c + 1 == self.n {
                idx + st - self.n * st
            } else {
                idx + st
            }
        } else if c == 0 {
            idx + self.n * st - st
        } else {
            idx - st
        }
    }

    /// Squared wrapped Euclidean distance.
    pub fn dist2(&self, a: usize, b: usize) -> i64 {
        let n = self.n as i64;
        (0..self.d)
            .map(|i| {
                let diff = (self.coord(a, i) as i64 - self.coord(b, i) as i64).abs();
                let w = diff.min(n - diff);
                w * w
            })
            .sum()
    }
}

/// Torus dimensions and the exponents of the rounded box.
#[derive(Debug, Clone, PartialEq)]
pub struct Geometry {
    pub d: usize,
    pub n: usize,
    pub gamma: f64,
    pub chi: f64,
    /// `L = 2 N^gamma + chi N`, kept real.
    pub l: f64,
    pub torus: Torus,
}

impl Geometry {
    /// Radius of the balls making up the rounded box.
    pub fn box_radius(&self) -> f64 {
        self.chi * self.n as f64
    }

    /// Width `N^gamma` of the security zone.
    pub fn buffer_width(&self) -> f64 {
        (self.n as f64).powf(self.gamma)
    }

    /// Integer centres `[L, N-L] ∩ Z`, per axis, as an inclusive range.
    pub fn center_range(&self) -> Option<(i64, i64)> {
        let lo = self.l.ceil() as i64;
        let hi = (self.n as f64 - self.l).floor() as i64;
        (lo <= hi).then_some((lo, hi))
    }

    /// `kappa = gamma (d-1) - 1`.
    pub fn kappa(&self) -> f64 {
        self.gamma * (self.d as f64 - 1.0) - 1.0
    }

    /// Smallest side length accepted for the given exponents, if any below `limit`.
    pub fn min_feasible_n(d: usize, gamma: f64, chi: f64, limit: usize) -> Option<usize> {
        (2..=limit).find(|&n| build_geometry(d, n, gamma, chi).is_ok())
    }
}

/// Validate the exponents and side length and compute `L`.
pub fn build_geometry(d: usize, n: usize, gamma: f64, chi: f64) -> Result<Geometry> {
    if d < 3 {
        return Err(Error::InvalidParameter(format!("dimension {d} < 3")));
    }
    let lower = 1.0 / (d as f64 - 1.0);
    if !(gamma > lower && gamma < 1.0) {
        return Err(Error::GeometryInfeasible(format!(
            "gamma = {gamma} outside ({lower}, 1)"
        )));
    }
    if !(chi > 0.0 && chi < 0.25) {
        return Err(Error::GeometryInfeasible(format!("chi = {chi} outside (0, 1/4)")));
    }
    let torus = Torus::new(d, n)?;
    let nf = n as f64;
    let l = 2.0 * nf.powf(gamma) + chi * nf;
    if 2.0 * l > nf {
        return Err(Error::GeometryInfeasible(format!(
            "2L = {:.4} exceeds N = {n}",
            2.0 * l
        )));
    }
    let g = Geometry { d, n, gamma, chi, l, torus };
    if g.center_range().is_none() {
        return Err(Error::GeometryInfeasible(format!(
            "[L, N-L] = [{l:.4}, {:.4}] contains no integer",
            nf - l
        )));
    }
    Ok(g)
}

/// A subset of the torus: membership bitmap, sorted points and inner boundary.
#[derive(Debug, Clone)]
pub struct LatticeSet {
    pub torus: Torus,
    member: Vec<bool>,
    points: Vec<usize>,
    boundary: Vec<usize>,
}

impl LatticeSet {
    pub fn from_membership(torus: Torus, member: Vec<bool>) -> Self {
        assert_eq!(member.len(), torus.volume());
        let points: Vec<usize> = (0..member.len()).filter(|&i| member[i]).collect();
        let boundary = points
            .iter()
            .copied()
            .filter(|&x| (0..2 * torus.d).any(|dir| !member[torus.neighbor(x, dir)]))
            .collect();
        LatticeSet { torus, member, points, boundary }
    }

    pub fn from_points(torus: Torus, pts: &[usize]) -> Self {
        let mut member = vec![false; torus.volume()];
        for &p in pts {
            member[p] = true;
        }
        Self::from_membership(torus, member)
    }

    #[inline]
    pub fn contains(&self, idx: usize) -> bool {
        self.member[idx]
    }

    pub fn membership(&self) -> &[bool] {
        &self.member
    }

    pub fn points(&self) -> &[usize] {
        &self.points
    }

    /// Inner boundary `{x in K : some neighbour is outside K}`, sorted.
    pub fn inner_boundary(&self) -> &[usize] {
        &self.boundary
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn complement(&self) -> LatticeSet {
        LatticeSet::from_membership(self.torus.clone(), self.member.iter().map(|m| !m).collect())
    }
}

/// The rounded box: union of closed balls of radius `chi N` around the integer
/// points of `[L, N-L]^d`.
pub fn rounded_box(geom: &Geometry) -> LatticeSet {
    let t = &geom.torus;
    let (lo, hi) = geom.center_range().expect("validated geometry");
    let r = geom.box_radius();
    let r2 = r * r;
    let member = (0..t.volume())
        .map(|idx| {
            // nearest admissible centre is the coordinatewise clamp
            let d2: i64 = (0..geom.d)
                .map(|i| {
                    let x = t.coord(idx, i) as i64;
                    let c = x.clamp(lo, hi);
                    (x - c) * (x - c)
                })
                .sum();
            (d2 as f64) <= r2
        })
        .collect();
    LatticeSet::from_membership(t.clone(), member)
}

/// The buffer complement: sites at wrapped Euclidean distance strictly more
/// than `N^gamma` from the box.
pub fn delta_set(geom: &Geometry, bx: &LatticeSet) -> Result<LatticeSet> {
    let t = &geom.torus;
    let w = geom.buffer_width();
    let w2 = w * w;
    let reach = w.floor() as i32;
    // offsets of the closed ball of radius N^gamma
    let mut offsets: Vec<Point> = Vec::new();
    let side = (2 * reach + 1) as usize;
    let count = side.pow(geom.d as u32);
    for k in 0..count {
        let mut p = [0i32; MAX_D];
        let mut r = k;
        for c in p.iter_mut().take(geom.d) {
            *c = (r % side) as i32 - reach;
            r /= side;
        }
        let d2: i64 = p.iter().map(|&c| (c as i64) * (c as i64)).sum();
        if (d2 as f64) <= w2 {
            offsets.push(p);
        }
    }
    let mut near = vec![false; t.volume()];
    for &b in bx.points() {
        let bp = t.point(b);
        for off in &offsets {
            let mut q = bp;
            for i in 0..geom.d {
                q[i] += off[i];
            }
            near[t.index(&q)] = true;
        }
    }
    let member: Vec<bool> = near.iter().map(|&x| !x).collect();
    if !member.iter().any(|&m| m) {
        return Err(Error::EmptyDelta);
    }
    Ok(LatticeSet::from_membership(t.clone(), member))
}

/// Box, buffer set and their boundaries, built once per geometry.
#[derive(Debug, Clone)]
pub struct Layout {
    pub geom: Geometry,
    pub b: LatticeSet,
    pub delta: LatticeSet,
}

/// Site labels used by walkers.
pub const LABEL_NONE: u8 = 0;
pub const LABEL_B: u8 = 1;
pub const LABEL_DELTA: u8 = 2;

impl Layout {
    pub fn new(geom: Geometry) -> Result<Self> {
        let b = rounded_box(&geom);
        let delta = delta_set(&geom, &b)?;
        Ok(Layout { geom, b, delta })
    }

    pub fn build(d: usize, n: usize, gamma: f64, chi: f64) -> Result<Self> {
        Self::new(build_geometry(d, n, gamma, chi)?)
    }

    /// One byte per site: box, buffer set, or neither.
    pub fn labels(&self) -> Vec<u8> {
        (0..self.geom.torus.volume())
            .map(|i| {
                if self.b.contains(i) {
                    LABEL_B
                } else if self.delta.contains(i) {
                    LABEL_DELTA
                } else {
                    LABEL_NONE
                }
            })
            .collect()
    }

    /// Sites outside the buffer set, sorted.
    pub fn delta_complement(&self) -> Vec<usize> {
        (0..self.geom.torus.volume()).filter(|&i| !self.delta.contains(i)).collect()
    }
}
