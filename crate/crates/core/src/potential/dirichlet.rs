//! Discrete Dirichlet problems for the simple random walk, solved by
//! conjugate gradients on `I - P` restricted to the unknowns.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::lattice::{Point, Torus, MAX_D};

/// Largest number of unknowns accepted by the solver.
pub const MAX_UNKNOWNS: usize = 20_000_000;

/// Default residual tolerance (max norm).
pub const DEFAULT_TOL: f64 = 1e-10;

/// Unknown sites plus their adjacency. Neighbour slots pointing outside the
/// domain refer to an exterior list that carries the boundary data.
#[derive(Debug, Clone)]
pub struct Domain {
    pub n_dirs: usize,
    n: usize,
    /// `n * n_dirs` entries; interior neighbours are `< n`, exterior ones are `n`.
    nbr: Vec<u32>,
    /// `(unknown, exterior id)` for every edge leaving the domain.
    exits: Vec<(u32, u32)>,
    n_exterior: usize,
}

/// Solver statistics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveInfo {
    pub iterations: usize,
    pub residual: f64,
}

impl Domain {
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn n_exterior(&self) -> usize {
        self.n_exterior
    }

    pub fn exits(&self) -> &[(u32, u32)] {
        &self.exits
    }

    /// Neighbour `dir` of unknown `i`, or `None` when it leaves the domain.
    pub fn neighbor(&self, i: usize, dir: usize) -> Option<usize> {
        let v = self.nbr[i * self.n_dirs + dir] as usize;
        (v < self.n).then_some(v)
    }

    /// Domain on the torus with the given unknown sites (any order). Returns
    /// the domain and the torus sites of the exterior ids.
    pub fn on_torus(torus: &Torus, unknown: &[usize]) -> Result<(Domain, Vec<usize>)> {
        let n = unknown.len();
        check_size(n)?;
        let n_dirs = 2 * torus.d;
        let mut pos = vec![u32::MAX; torus.volume()];
        for (i, &s) in unknown.iter().enumerate() {
            pos[s] = i as u32;
        }
        let mut ext_pos = vec![u32::MAX; torus.volume()];
        let mut exterior = Vec::new();
        let mut nbr = Vec::with_capacity(n * n_dirs);
        let mut exits = Vec::new();
        for (i, &s) in unknown.iter().enumerate() {
            for dir in 0..n_dirs {
                let t = torus.neighbor(s, dir);
                if pos[t] != u32::MAX {
                    nbr.push(pos[t]);
                } else {
                    if ext_pos[t] == u32::MAX {
                        ext_pos[t] = exterior.len() as u32;
                        exterior.push(t);
                    }
                    nbr.push(n as u32);
                    exits.push((i as u32, ext_pos[t]));
                }
            }
        }
        let n_exterior = exterior.len();
        Ok((Domain { n_dirs, n, nbr, exits, n_exterior }, exterior))
    }

    /// Domain on `Z^d`: the open Euclidean ball `|x| < radius` minus `holes`.
    /// Exterior ids `0..holes.len()` are the holes (in the given order); the
    /// sphere sites follow. Returns the domain and the unknown points.
    pub fn zd_ball(d: usize, radius: f64, holes: &[Point]) -> Result<(Domain, Vec<Point>)> {
        if !(radius.is_finite() && radius > 0.0) {
            return Err(Error::InvalidParameter(format!("kill radius {radius}")));
        }
        let r = radius.ceil() as i32;
        let side = (2 * r + 3) as usize;
        let cells = side
            .checked_pow(d as u32)
            .filter(|&c| c <= 8 * MAX_UNKNOWNS)
            .ok_or(Error::TooLarge { unknowns: usize::MAX, limit: MAX_UNKNOWNS })?;
        let off = r + 1;
        let cell_of = |p: &Point| -> usize {
            let mut idx = 0usize;
            for i in (0..d).rev() {
                idx = idx * side + (p[i] + off) as usize;
            }
            idx
        };
        let r2 = radius * radius;
        let mut id = vec![u32::MAX; cells];
        let mut hole_ids: HashMap<usize, u32> = HashMap::new();
        for (k, h) in holes.iter().enumerate() {
            hole_ids.insert(cell_of(h), k as u32);
        }
        let mut pts = Vec::new();
        for c in 0..cells {
            let mut p = [0i32; MAX_D];
            let mut rem = c;
            for x in p.iter_mut().take(d) {
                *x = (rem % side) as i32 - off;
                rem /= side;
            }
            let n2: i64 = p[..d].iter().map(|&v| v as i64 * v as i64).sum();
            if (n2 as f64) < r2 && !hole_ids.contains_key(&c) {
                id[c] = pts.len() as u32;
                pts.push(p);
            }
        }
        let n = pts.len();
        check_size(n)?;
        let n_dirs = 2 * d;
        let mut ext_ids: HashMap<usize, u32> = HashMap::new();
        let mut n_exterior = holes.len();
        let mut nbr = Vec::with_capacity(n * n_dirs);
        let mut exits = Vec::new();
        for (i, p) in pts.iter().enumerate() {
            for dir in 0..n_dirs {
                let mut q = *p;
                q[dir >> 1] += if dir & 1 == 0 { 1 } else { -1 };
                let c = cell_of(&q);
                if id[c] != u32::MAX {
                    nbr.push(id[c]);
                } else {
                    let e = match hole_ids.get(&c) {
                        Some(&h) => h,
                        None => *ext_ids.entry(c).or_insert_with(|| {
                            n_exterior += 1;
                            (n_exterior - 1) as u32
                        }),
                    };
                    nbr.push(n as u32);
                    exits.push((i as u32, e));
                }
            }
        }
        Ok((Domain { n_dirs, n, nbr, exits, n_exterior }, pts))
    }

    /// `y = (I - P) x` on the unknowns (exterior values treated as zero).
    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        let w = 1.0 / self.n_dirs as f64;
        let k = self.n_dirs;
        for i in 0..self.n {
            let mut s = 0.0;
            for &j in &self.nbr[i * k..(i + 1) * k] {
                if (j as usize) < self.n {
                    s += x[j as usize];
                }
            }
            y[i] = x[i] - w * s;
        }
    }

    /// Right-hand side for harmonic extension of `boundary` (indexed by exterior id).
    pub fn boundary_rhs(&self, boundary: &[f64]) -> Vec<f64> {
        assert_eq!(boundary.len(), self.n_exterior);
        let w = 1.0 / self.n_dirs as f64;
        let mut b = vec![0.0; self.n];
        for &(i, e) in &self.exits {
            b[i as usize] += w * boundary[e as usize];
        }
        b
    }

    /// Solve `(I - P) x = rhs` by conjugate gradients.
    pub fn solve(&self, rhs: &[f64], tol: f64) -> Result<(Vec<f64>, SolveInfo)> {
        cg(self, rhs, tol, 20 * self.n.max(100))
    }

    /// Harmonic function with the given exterior values plus a source term:
    /// `h = P h + source` on the unknowns.
    pub fn harmonic(&self, boundary: &[f64], source: Option<&[f64]>, tol: f64) -> Result<Vec<f64>> {
        let mut b = self.boundary_rhs(boundary);
        if let Some(s) = source {
            for (bi, si) in b.iter_mut().zip(s) {
                *bi += si;
            }
        }
        Ok(self.solve(&b, tol)?.0)
    }
}

fn check_size(n: usize) -> Result<()> {
    if n > MAX_UNKNOWNS {
        return Err(Error::TooLarge { unknowns: n, limit: MAX_UNKNOWNS });
    }
    Ok(())
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Plain CG. `I - P` is symmetric positive definite on a domain from which
/// the walk can exit.
fn cg(dom: &Domain, b: &[f64], tol: f64, max_iter: usize) -> Result<(Vec<f64>, SolveInfo)> {
    let n = dom.len();
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut p = r.clone();
    let mut ap = vec![0.0; n];
    let mut rr = dot(&r, &r);
    let mut res = max_abs(&r);
    let mut it = 0;
    while res > tol {
        if it >= max_iter || !res.is_finite() {
            return Err(Error::SolverDiverged { residual: res, iterations: it });
        }
        dom.apply(&p, &mut ap);
        let alpha = rr / dot(&p, &ap);
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rr_new = dot(&r, &r);
        let beta = rr_new / rr;
        rr = rr_new;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
        it += 1;
        if it % 50 == 0 {
            // refresh against drift of the recursive residual
            dom.apply(&x, &mut ap);
            for i in 0..n {
                r[i] = b[i] - ap[i];
            }
            rr = dot(&r, &r);
        }
        res = max_abs(&r);
    }
    // certify with the true residual
    dom.apply(&x, &mut ap);
    let true_res = b.iter().zip(&ap).map(|(bi, ai)| (bi - ai).abs()).fold(0.0, f64::max);
    if true_res > 10.0 * tol.max(1e-15) {
        return Err(Error::SolverDiverged { residual: true_res, iterations: it });
    }
    Ok((x, SolveInfo { iterations: it, residual: true_res }))
}

/// Expected exit time `E_x[tau]` of the domain for every unknown.
pub fn expected_exit_time(dom: &Domain, tol: f64) -> Result<Vec<f64>> {
    let ones = vec![1.0; dom.len()];
    Ok(dom.solve(&ones, tol)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn absorbing_everywhere_is_identity() {
        let t = Torus::new(3, 4).unwrap();
        let (dom, ext) = Domain::on_torus(&t, &[]).unwrap();
        assert!(dom.is_empty());
        assert!(ext.is_empty());
        let h = dom.harmonic(&[], None, 1e-12).unwrap();
        assert!(h.is_empty());
    }

    #[test]
    fn linearity() {
        let t = Torus::new(3, 6).unwrap();
        let unknown: Vec<usize> = (0..t.volume()).filter(|&i| t.coord(i, 0) != 0).collect();
        let (dom, ext) = Domain::on_torus(&t, &unknown).unwrap();
        let f: Vec<f64> = (0..ext.len()).map(|i| (i % 3) as f64).collect();
        let g: Vec<f64> = (0..ext.len()).map(|i| (i % 5) as f64 * 0.5).collect();
        let fg: Vec<f64> = f.iter().zip(&g).map(|(a, b)| a + b).collect();
        let hf = dom.harmonic(&f, None, 1e-12).unwrap();
        let hg = dom.harmonic(&g, None, 1e-12).unwrap();
        let hfg = dom.harmonic(&fg, None, 1e-12).unwrap();
        for i in 0..dom.len() {
            assert!((hf[i] + hg[i] - hfg[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn gambler_ruin_on_slab() {
        // exits on the plane x0 = 0: h = P[hit x0 = 0 side at coordinate] is linear
        // between the two copies of the plane, i.e. constant 1
        let t = Torus::new(3, 8).unwrap();
        let unknown: Vec<usize> = (0..t.volume()).filter(|&i| t.coord(i, 0) != 0).collect();
        let (dom, ext) = Domain::on_torus(&t, &unknown).unwrap();
        let h = dom.harmonic(&vec![1.0; ext.len()], None, 1e-12).unwrap();
        assert!(h.iter().all(|v| (v - 1.0).abs() < 1e-9));
        // expected exit time of a 1-d gambler's ruin, slowed by 3
        let e = expected_exit_time(&dom, 1e-10).unwrap();
        for (i, &s) in unknown.iter().enumerate() {
            let k = t.coord(s, 0) as f64;
            assert!((e[i] - 3.0 * k * (8.0 - k)).abs() < 1e-6);
        }
    }
}
