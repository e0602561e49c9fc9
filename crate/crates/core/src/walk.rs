//! Simple random walk on the torus and on `Z^d`, hitting times and the
//! decomposition of a path into excursions between `B` and `Δ`.

use std::io::Write;

use rand::RngCore;

use crate::error::{Error, Result};
use crate::lattice::{Point, Torus};
use crate::rng::DirectionSource;

/// A walker on the torus with its own random stream.
#[derive(Debug, Clone)]
pub struct TorusWalk<R> {
    pub torus: Torus,
    pub position: usize,
    pub time: u64,
    dirs: DirectionSource,
    rng: R,
}

impl<R: RngCore> TorusWalk<R> {
    pub fn new(torus: &Torus, start: usize, rng: R) -> Self {
        TorusWalk { torus: torus.clone(), position: start, time: 0, dirs: DirectionSource::new(torus.d), rng }
    }

    /// Start from the uniform distribution.
    pub fn uniform(torus: &Torus, mut rng: R) -> Self {
        let start = (rng.next_u64() % torus.volume() as u64) as usize;
        Self::new(torus, start, rng)
    }

    #[inline]
    pub fn step(&mut self) -> usize {
        let dir = self.dirs.next(&mut self.rng);
        self.position = self.torus.neighbor(self.position, dir);
        self.time += 1;
        self.position
    }

    /// First `k >= 0` (relative to now) with the walk in the target, and the
    /// hit site. `target` is a membership table over the torus.
    pub fn run_until_hit(&mut self, target: &[bool], max_steps: u64) -> Result<(usize, u64)> {
        let mut elapsed = 0u64;
        while !target[self.position] {
            if elapsed >= max_steps {
                return Err(Error::Timeout(max_steps));
            }
            self.step();
            elapsed += 1;
        }
        Ok((self.position, elapsed))
    }

    /// Same as [`run_until_hit`](Self::run_until_hit) but calls `visit` on
    /// every site occupied before the hit (the starting site included).
    pub fn run_until_hit_with<F: FnMut(usize)>(
        &mut self,
        target: &[bool],
        max_steps: u64,
        mut visit: F,
    ) -> Result<(usize, u64)> {
        let mut elapsed = 0u64;
        while !target[self.position] {
            if elapsed >= max_steps {
                return Err(Error::Timeout(max_steps));
            }
            visit(self.position);
            self.step();
            elapsed += 1;
        }
        Ok((self.position, elapsed))
    }

    pub fn rng_mut(&mut self) -> &mut R {
        &mut self.rng
    }
}

/// One excursion from `B` to `Δ`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExcursionRecord<T> {
    /// `R_i`.
    pub return_time: usize,
    /// `D_i`, `None` if the path ended before reaching `Δ`.
    pub departure_time: Option<usize>,
    /// `X_{R_i}`.
    pub entry: T,
    /// `X_{D_i}`.
    pub exit: Option<T>,
}

/// `D_0` and the excursions of a finite path.
#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition<T> {
    /// `D_0 = H_Δ`, `None` if the path never enters `Δ`.
    pub d0: Option<usize>,
    pub excursions: Vec<ExcursionRecord<T>>,
}

/// Successive excursion times between `B` and `Δ` along a path.
pub fn excursion_decompose<T, FB, FD>(path: &[T], in_b: FB, in_delta: FD) -> Decomposition<T>
where
    T: Copy,
    FB: Fn(&T) -> bool,
    FD: Fn(&T) -> bool,
{
    let d0 = path.iter().position(&in_delta);
    let mut excursions = Vec::new();
    let Some(mut t) = d0 else {
        return Decomposition { d0, excursions };
    };
    loop {
        let Some(r) = path[t..].iter().position(&in_b).map(|k| k + t) else {
            break;
        };
        match path[r..].iter().position(&in_delta).map(|k| k + r) {
            Some(dd) => {
                excursions.push(ExcursionRecord {
                    return_time: r,
                    departure_time: Some(dd),
                    entry: path[r],
                    exit: Some(path[dd]),
                });
                t = dd;
            }
            None => {
                excursions.push(ExcursionRecord {
                    return_time: r,
                    departure_time: None,
                    entry: path[r],
                    exit: None,
                });
                break;
            }
        }
    }
    Decomposition { d0, excursions }
}

/// Outcome of a walk on `Z^d` stopped at the kill ball.
#[derive(Debug, Clone, PartialEq)]
pub struct ZdWalkOutcome {
    /// Sites visited strictly inside the kill ball, start included.
    pub trajectory: Vec<Point>,
    /// First site at distance `>= kill_radius`, if reached.
    pub exit: Option<Point>,
    pub escaped: bool,
}

#[inline]
pub fn norm2(d: usize, p: &Point) -> i64 {
    p[..d].iter().map(|&v| v as i64 * v as i64).sum()
}

/// Run a walk on `Z^d` from `start` until it leaves the open ball of radius
/// `kill_radius` around the origin.
pub fn walk_on_zd<R: RngCore>(
    d: usize,
    start: Point,
    kill_radius: f64,
    max_steps: u64,
    rng: &mut R,
) -> Result<ZdWalkOutcome> {
    if !kill_radius.is_finite() || kill_radius <= 0.0 {
        return Err(Error::InvalidParameter(format!("kill radius {kill_radius}")));
    }
    let r2 = kill_radius * kill_radius;
    let mut trajectory = Vec::new();
    let mut p = start;
    let mut dirs = DirectionSource::new(d);
    let mut steps = 0u64;
    while (norm2(d, &p) as f64) < r2 {
        if steps >= max_steps {
            return Err(Error::StepCapExceeded(max_steps));
        }
        trajectory.push(p);
        let dir = dirs.next(rng);
        p[dir >> 1] += if dir & 1 == 0 { 1 } else { -1 };
        steps += 1;
    }
    Ok(ZdWalkOutcome { trajectory, exit: Some(p), escaped: true })
}

/// Streaming walk on `Z^d`: calls `visit` on every site until it returns
/// `true` (stop) or the walk leaves the kill ball. Returns the final site and
/// whether the walk left the ball.
pub fn walk_on_zd_until<R: RngCore, F: FnMut(&Point) -> bool>(
    d: usize,
    start: Point,
    kill_radius2: f64,
    max_steps: u64,
    dirs: &mut DirectionSource,
    rng: &mut R,
    mut visit: F,
) -> Result<(Point, bool)> {
    let mut p = start;
    let mut steps = 0u64;
    loop {
        if (norm2(d, &p) as f64) >= kill_radius2 {
            return Ok((p, true));
        }
        if visit(&p) {
            return Ok((p, false));
        }
        if steps >= max_steps {
            return Err(Error::StepCapExceeded(max_steps));
        }
        let dir = dirs.next(rng);
        p[dir >> 1] += if dir & 1 == 0 { 1 } else { -1 };
        steps += 1;
    }
}

/// Write a trajectory as little-endian 32-bit coordinates, `d` per site,
/// no header.
pub fn dump_trajectory<W: Write>(out: &mut W, d: usize, path: &[Point]) -> Result<()> {
    for p in path {
        for c in &p[..d] {
            out.write_all(&c.to_le_bytes())?;
        }
    }
    Ok(())
}

/// Inverse of [`dump_trajectory`].
pub fn read_trajectory(bytes: &[u8], d: usize) -> Result<Vec<Point>> {
    let rec = 4 * d;
    if !bytes.len().is_multiple_of(rec) {
        return Err(Error::Format(format!("{} bytes is not a multiple of {rec}", bytes.len())));
    }
    Ok(bytes
        .chunks(rec)
        .map(|chunk| {
            let mut p = [0i32; crate::lattice::MAX_D];
            for (i, c) in chunk.chunks(4).enumerate() {
                p[i] = i32::from_le_bytes([c[0], c[1], c[2], c[3]]);
            }
            p
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[derive(Clone, Copy, Debug, PartialEq)]
    enum S {
        A,
        B,
        C,
    }

    fn in_b(s: &S) -> bool {
        *s == S::A
    }
    fn in_d(s: &S) -> bool {
        *s == S::C
    }

    #[test]
    fn decomposition_examples() {
        let dec = excursion_decompose(&[S::C, S::B, S::A, S::B, S::C, S::A], in_b, in_d);
        assert_eq!(dec.d0, Some(0));
        let times: Vec<_> = dec.excursions.iter().map(|e| (e.return_time, e.departure_time)).collect();
        assert_eq!(times, vec![(2, Some(4)), (5, None)]);

        let dec = excursion_decompose(&[S::C, S::C, S::C], in_b, in_d);
        assert_eq!(dec.d0, Some(0));
        assert!(dec.excursions.is_empty());

        let dec = excursion_decompose(&[S::A, S::C, S::A, S::C], in_b, in_d);
        assert_eq!(dec.d0, Some(1));
        assert_eq!(dec.excursions.len(), 1);
        assert_eq!((dec.excursions[0].return_time, dec.excursions[0].departure_time), (2, Some(3)));
    }

    #[test]
    fn hit_at_time_zero() {
        let t = Torus::new(3, 6).unwrap();
        let mut target = vec![false; t.volume()];
        target[7] = true;
        let mut w = TorusWalk::new(&t, 7, rng::replica(1, 0));
        assert_eq!(w.run_until_hit(&target, 10).unwrap(), (7, 0));
        let all = vec![true; t.volume()];
        let mut w = TorusWalk::new(&t, 3, rng::replica(1, 0));
        assert_eq!(w.run_until_hit(&all, 10).unwrap(), (3, 0));
    }

    #[test]
    fn timeout_is_reported() {
        let t = Torus::new(3, 30).unwrap();
        let mut target = vec![false; t.volume()];
        target[0] = true;
        let mut w = TorusWalk::new(&t, t.volume() / 2, rng::replica(1, 0));
        assert_eq!(w.run_until_hit(&target, 5), Err(Error::Timeout(5)));
    }

    #[test]
    fn zd_walk_on_boundary_is_empty() {
        let mut r = rng::replica(2, 0);
        let out = walk_on_zd(3, [5, 0, 0, 0, 0, 0], 5.0, 100, &mut r).unwrap();
        assert!(out.trajectory.is_empty());
        assert!(out.escaped);
        assert!(walk_on_zd(3, [0; 6], f64::INFINITY, 100, &mut r).is_err());
    }

    #[test]
    fn trajectory_dump_round_trip() {
        let path = vec![[1, -2, 3, 0, 0, 0], [i32::MAX, 0, i32::MIN, 0, 0, 0]];
        let mut buf = Vec::new();
        dump_trajectory(&mut buf, 3, &path).unwrap();
        assert_eq!(buf.len(), 24);
        assert_eq!(read_trajectory(&buf, 3).unwrap(), path);
    }
}
