//! Capacitance-matrix representation of hitting distributions.
//!
//! A function harmonic off a finite set `K` is a potential `Σ_b G(x-b) σ(b)`
//! (plus a constant on the torus). Matching boundary data on `K` is a dense
//! `|K| x |K|` solve, after which hitting probabilities from any start are a
//! single matrix product.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::lattice::{Point, Torus};

use super::green::{TorusGreen, ZdGreen};

fn sub(a: &Point, b: &Point) -> Point {
    let mut p = *a;
    for i in 0..p.len() {
        p[i] -= b[i];
    }
    p
}

/// Hitting distribution of `K` on `Z^d` together with its equilibrium measure.
#[derive(Debug, Clone)]
pub struct ZdCapacitance {
    pub points: Vec<Point>,
    /// `(G_KK)^{-1}`.
    inverse: DMatrix<f64>,
    /// Equilibrium measure `e_K`, indexed like `points`.
    pub equilibrium: Vec<f64>,
}

impl ZdCapacitance {
    pub fn new(green: &ZdGreen, points: &[Point]) -> Result<Self> {
        let m = points.len();
        if m == 0 {
            return Err(Error::EmptySet);
        }
        let g = DMatrix::from_fn(m, m, |i, j| green.value(&sub(&points[i], &points[j])));
        let inverse = g
            .try_inverse()
            .ok_or_else(|| Error::InvalidParameter("singular Green matrix".into()))?;
        let equilibrium = (0..m).map(|i| inverse.row(i).sum()).collect();
        Ok(ZdCapacitance { points: points.to_vec(), inverse, equilibrium })
    }

    pub fn capacity(&self) -> f64 {
        self.equilibrium.iter().sum()
    }

    /// `G(x - b)` for every `b` in `K`.
    fn potential_row(&self, green: &ZdGreen, x: &Point) -> Vec<f64> {
        self.points.iter().map(|b| green.value(&sub(x, b))).collect()
    }

    /// `P_x[H_K < ∞]`.
    pub fn hit_probability(&self, green: &ZdGreen, x: &Point) -> f64 {
        self.potential_row(green, x)
            .iter()
            .zip(&self.equilibrium)
            .map(|(g, e)| g * e)
            .sum::<f64>()
            .clamp(0.0, 1.0)
    }

    /// `P_x[H_K < ∞, X_{H_K} = y]` for every `y` in `K`; `x` outside `K`.
    pub fn hitting_row(&self, green: &ZdGreen, x: &Point) -> Vec<f64> {
        let g = self.potential_row(green, x);
        let m = self.points.len();
        (0..m)
            .map(|y| (0..m).map(|b| g[b] * self.inverse[(b, y)]).sum::<f64>().max(0.0))
            .collect()
    }

    /// Hitting rows for many starts at once: `rows x |K|`, row-major.
    pub fn hitting_matrix(&self, green: &ZdGreen, starts: &[Point]) -> DMatrix<f64> {
        let m = self.points.len();
        let g = DMatrix::from_fn(starts.len(), m, |i, j| green.value(&sub(&starts[i], &self.points[j])));
        let mut h = g * &self.inverse;
        h.apply(|v| *v = v.max(0.0));
        h
    }
}

/// Hitting distribution of a set `K` on the torus.
#[derive(Debug, Clone)]
pub struct TorusCapacitance {
    pub torus: Torus,
    pub sites: Vec<usize>,
    /// Rows `0..m`: charges `σ_y`; row `m`: constants `c_y`.
    solution: DMatrix<f64>,
}

impl TorusCapacitance {
    pub fn new(green: &TorusGreen, sites: &[usize]) -> Result<Self> {
        let m = sites.len();
        if m == 0 {
            return Err(Error::EmptySet);
        }
        let mut a = DMatrix::zeros(m + 1, m + 1);
        for i in 0..m {
            for j in 0..m {
                a[(i, j)] = green.between(sites[i], sites[j]);
            }
            a[(i, m)] = 1.0;
            a[(m, i)] = 1.0;
        }
        let mut rhs = DMatrix::zeros(m + 1, m);
        for y in 0..m {
            rhs[(y, y)] = 1.0;
        }
        let solution = a
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::InvalidParameter("singular capacitance system".into()))?;
        Ok(TorusCapacitance { torus: green.torus.clone(), sites: sites.to_vec(), solution })
    }

    /// `P_x[X_{H_K} = y]` for every `x` in `starts` (outside `K`) and `y` in `K`.
    pub fn hitting_matrix(&self, green: &TorusGreen, starts: &[usize]) -> DMatrix<f64> {
        let m = self.sites.len();
        let g = DMatrix::from_fn(starts.len(), m + 1, |i, j| {
            if j == m {
                1.0
            } else {
                green.between(starts[i], self.sites[j])
            }
        });
        let mut h = g * &self.solution;
        h.apply(|v| *v = v.max(0.0));
        h
    }

    /// Sum over `x` in `region` of `P_x[X_{H_K} = y]`, for every `y`.
    ///
    /// Uses `Σ_{all x} G̃(x - b) = 0` when `region` is given as its complement.
    pub fn summed_over_complement(&self, green: &TorusGreen, complement: &[usize]) -> Vec<f64> {
        let m = self.sites.len();
        let vol = self.torus.volume() as f64;
        let count = vol - complement.len() as f64;
        // s_b = Σ_{x in region} G̃(x - b) = -Σ_{x in complement} G̃(x - b)
        let s: Vec<f64> = self
            .sites
            .iter()
            .map(|&b| -complement.iter().map(|&x| green.between(x, b)).sum::<f64>())
            .collect();
        (0..m)
            .map(|y| {
                (0..m).map(|b| s[b] * self.solution[(b, y)]).sum::<f64>()
                    + count * self.solution[(m, y)]
            })
            .collect()
    }
}
