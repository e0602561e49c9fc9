//! Discrete potential theory: equilibrium measures, capacities, hitting
//! distributions and Green functions on the torus and on `Z^d`.
//!
//! Two independent routes are kept for the quantities that matter:
//! sparse Dirichlet solves (with kill balls and extrapolation in `1/R` on
//! `Z^d`) and capacitance matrices built from exact Green functions. Monte
//! Carlo estimators with standard errors sit on top for large instances.

pub mod capacitance;
pub mod dirichlet;
pub mod green;

use std::collections::HashSet;

use nalgebra::DMatrix;
use rand::RngCore;

use crate::error::{Error, Result};
use crate::lattice::{Layout, LatticeSet, Point, Torus, MAX_D};
use crate::rng::{self, DirectionSource};
use crate::walk::{self, TorusWalk};

pub use capacitance::{TorusCapacitance, ZdCapacitance};
pub use dirichlet::{Domain, SolveInfo, DEFAULT_TOL};
pub use green::{asymptotic_green, scaled_bessel_i, TorusGreen, ZdGreen};

/// Equilibrium measure on a finite support.
#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumMeasure<S> {
    pub support: Vec<S>,
    pub weights: Vec<f64>,
    /// Capacity when unnormalised.
    pub total_mass: f64,
    /// Per-weight standard errors for estimated measures.
    pub stderr: Option<Vec<f64>>,
}

impl<S: Clone> EquilibriumMeasure<S> {
    fn new(support: Vec<S>, weights: Vec<f64>, stderr: Option<Vec<f64>>) -> Self {
        let total_mass = weights.iter().sum();
        EquilibriumMeasure { support, weights, total_mass, stderr }
    }

    /// Normalised measure, summing to one.
    pub fn normalized(&self) -> Vec<f64> {
        self.weights.iter().map(|w| w / self.total_mass).collect()
    }
}

/// Rows: sources; columns: boundary points of the target.
#[derive(Debug, Clone)]
pub struct HittingKernel {
    pub from: Vec<usize>,
    pub to: Vec<usize>,
    pub rows: DMatrix<f64>,
    pub stderr: Option<DMatrix<f64>>,
}

impl HittingKernel {
    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.rows.nrows()).map(|i| self.rows.row(i).sum()).collect()
    }
}

/// Which lattice a hitting problem lives on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LatticeKind {
    Torus,
    Zd,
}

/// How a quantity is obtained.
#[derive(Debug, Clone, PartialEq)]
pub enum Method {
    /// Capacitance matrices from exact Green functions.
    Exact,
    /// Sparse Dirichlet solves; on `Z^d` with kill balls of the given radii
    /// and polynomial extrapolation in `1/R`.
    Dirichlet { radii: Vec<f64> },
    /// Simulation with the given number of walks per source.
    MonteCarlo { walks: usize, seed: u64, radii: Vec<f64> },
}

/// Harmonic extension on the torus: unknowns are the sites outside
/// `absorbing`; `boundary(site)` gives the value on absorbing sites.
pub fn exact_harmonic_solve<F: Fn(usize) -> f64>(
    torus: &Torus,
    absorbing: &[bool],
    boundary: F,
) -> Result<Vec<f64>> {
    let unknown: Vec<usize> = (0..torus.volume()).filter(|&i| !absorbing[i]).collect();
    let (dom, ext) = Domain::on_torus(torus, &unknown)?;
    let bvals: Vec<f64> = ext.iter().map(|&s| boundary(s)).collect();
    let h = dom.harmonic(&bvals, None, DEFAULT_TOL)?;
    let mut out: Vec<f64> = (0..torus.volume()).map(|s| if absorbing[s] { boundary(s) } else { 0.0 }).collect();
    for (i, &s) in unknown.iter().enumerate() {
        out[s] = h[i];
    }
    Ok(out)
}

/// Evaluate at zero the polynomial in `1/R` through `(1/R_i, v_i)`.
pub fn extrapolate_to_infinity(radii: &[f64], values: &[f64]) -> f64 {
    let xs: Vec<f64> = radii.iter().map(|r| 1.0 / r).collect();
    extrapolation_weights(&xs).iter().zip(values).map(|(w, v)| w * v).sum()
}

/// Lagrange weights for evaluating the interpolant at zero.
fn extrapolation_weights(xs: &[f64]) -> Vec<f64> {
    (0..xs.len())
        .map(|i| {
            (0..xs.len())
                .filter(|&j| j != i)
                .map(|j| (0.0 - xs[j]) / (xs[i] - xs[j]))
                .product()
        })
        .collect()
}

fn centre(d: usize, pts: &[Point]) -> Point {
    let mut c = [0i32; MAX_D];
    for (i, ci) in c.iter_mut().enumerate().take(d) {
        let s: i64 = pts.iter().map(|p| p[i] as i64).sum();
        *ci = (s as f64 / pts.len() as f64).round() as i32;
    }
    c
}

fn shifted(pts: &[Point], c: &Point) -> Vec<Point> {
    pts.iter()
        .map(|p| {
            let mut q = *p;
            for i in 0..MAX_D {
                q[i] -= c[i];
            }
            q
        })
        .collect()
}

fn dedup_points(pts: &[Point]) -> Result<Vec<Point>> {
    if pts.is_empty() {
        return Err(Error::EmptySet);
    }
    let mut v = pts.to_vec();
    v.sort();
    v.dedup();
    Ok(v)
}

/// Escape probabilities `P_x[H̃_K > τ_R]` for `x` in `K` from one Dirichlet
/// solve in the ball of radius `R` (centred at the origin).
fn killed_escape(d: usize, k: &[Point], radius: f64) -> Result<Vec<f64>> {
    let (dom, _) = Domain::zd_ball(d, radius, k)?;
    let mut bvals = vec![0.0; dom.n_exterior()];
    for v in bvals.iter_mut().take(k.len()) {
        *v = 1.0;
    }
    let h = dom.harmonic(&bvals, None, 1e-12)?;
    let set: HashSet<Point> = k.iter().copied().collect();
    let w = 1.0 / (2 * d) as f64;
    let mut ret = vec![0.0; k.len()];
    for (e, p) in k.iter().enumerate() {
        for dir in 0..2 * d {
            let mut q = *p;
            q[dir >> 1] += if dir & 1 == 0 { 1 } else { -1 };
            if set.contains(&q) {
                ret[e] += w;
            }
        }
    }
    for &(i, e) in dom.exits() {
        if (e as usize) < k.len() {
            ret[e as usize] += w * h[i as usize];
        }
    }
    Ok(ret.iter().map(|r| 1.0 - r).collect())
}

/// Monte Carlo escape frequency from each `x` in `K` to distance `R`.
fn mc_escape<Rn: RngCore>(
    d: usize,
    k: &[Point],
    radius: f64,
    walks: usize,
    rng: &mut Rn,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let set: HashSet<Point> = k.iter().copied().collect();
    let mut dirs = DirectionSource::new(d);
    let mut mean = Vec::with_capacity(k.len());
    let mut se = Vec::with_capacity(k.len());
    for p in k {
        let mut esc = 0usize;
        for _ in 0..walks {
            let dir = dirs.next(rng);
            let mut q = *p;
            q[dir >> 1] += if dir & 1 == 0 { 1 } else { -1 };
            let (_, left) = walk::walk_on_zd_until(d, q, radius * radius, u64::MAX, &mut dirs, rng, |x| {
                set.contains(x)
            })?;
            esc += left as usize;
        }
        let m = esc as f64 / walks as f64;
        mean.push(m);
        se.push((m * (1.0 - m) / walks as f64).sqrt());
    }
    Ok((mean, se))
}

/// Equilibrium measure and capacity of a finite `K ⊂ Z^d`.
pub fn capacity(d: usize, k: &[Point], method: &Method) -> Result<EquilibriumMeasure<Point>> {
    let k = dedup_points(k)?;
    let c = centre(d, &k);
    let ks = shifted(&k, &c);
    let reach = ks
        .iter()
        .map(|p| walk::norm2(d, p))
        .max()
        .map(|r2| (r2 as f64).sqrt())
        .unwrap_or(0.0);
    match method {
        Method::Exact => {
            let span = ks.iter().flat_map(|p| p[..d].iter().map(|v| v.unsigned_abs() as usize)).max().unwrap_or(0);
            let green = ZdGreen::new(d, 2 * span + 1)?;
            let cap = ZdCapacitance::new(&green, &ks)?;
            Ok(EquilibriumMeasure::new(k, cap.equilibrium.clone(), None))
        }
        Method::Dirichlet { radii } => {
            check_radii(radii, reach)?;
            let per: Vec<Vec<f64>> = radii.iter().map(|&r| killed_escape(d, &ks, r)).collect::<Result<_>>()?;
            let w = (0..ks.len())
                .map(|i| {
                    let vals: Vec<f64> = per.iter().map(|v| v[i]).collect();
                    extrapolate_to_infinity(radii, &vals)
                })
                .collect();
            Ok(EquilibriumMeasure::new(k, w, None))
        }
        Method::MonteCarlo { walks, seed, radii } => {
            check_radii(radii, reach)?;
            let xs: Vec<f64> = radii.iter().map(|r| 1.0 / r).collect();
            let lw = extrapolation_weights(&xs);
            let mut mean = vec![0.0; ks.len()];
            let mut var = vec![0.0; ks.len()];
            for (j, &r) in radii.iter().enumerate() {
                let mut g = rng::stream(*seed, rng::domain::AUX | j as u64);
                let (m, s) = mc_escape(d, &ks, r, *walks, &mut g)?;
                for i in 0..ks.len() {
                    mean[i] += lw[j] * m[i];
                    var[i] += lw[j] * lw[j] * s[i] * s[i];
                }
            }
            Ok(EquilibriumMeasure::new(k, mean, Some(var.iter().map(|v| v.sqrt()).collect())))
        }
    }
}

fn check_radii(radii: &[f64], reach: f64) -> Result<()> {
    if radii.is_empty() {
        return Err(Error::InvalidParameter("no kill radii".into()));
    }
    if radii.iter().any(|&r| !(r.is_finite() && r > reach + 1.0)) {
        return Err(Error::InvalidParameter(format!(
            "kill radii {radii:?} must exceed the set radius {reach:.2} + 1"
        )));
    }
    Ok(())
}

/// Green function of `Z^d` between `x` and `y`.
pub fn green_function(green: &ZdGreen, x: &Point, y: &Point) -> f64 {
    let mut diff = *x;
    for i in 0..MAX_D {
        diff[i] -= y[i];
    }
    green.value(&diff)
}

/// Green function from killed solves in balls centred at `y`, extrapolated.
pub fn green_function_killed(d: usize, x: &Point, y: &Point, radii: &[f64]) -> Result<f64> {
    let mut diff = *x;
    for i in 0..MAX_D {
        diff[i] -= y[i];
    }
    check_radii(radii, (walk::norm2(d, &diff) as f64).sqrt())?;
    let vals: Vec<f64> = radii
        .iter()
        .map(|&r| {
            let (dom, pts) = Domain::zd_ball(d, r, &[])?;
            let src: Vec<f64> = pts.iter().map(|p| if p[..d] == [0; MAX_D][..d] { 1.0 } else { 0.0 }).collect();
            let g = dom.solve(&src, 1e-12)?.0;
            let i = pts.iter().position(|p| p[..d] == diff[..d]).expect("inside ball");
            Ok(g[i])
        })
        .collect::<Result<_>>()?;
    Ok(extrapolate_to_infinity(radii, &vals))
}

/// Hitting distribution of `target` (on its inner boundary) from `from`.
///
/// On the torus rows sum to one; on `Z^d` they sum to `P_x[H_K < ∞]`.
pub fn hitting_kernel(
    from: &[usize],
    target: &LatticeSet,
    lattice: LatticeKind,
    method: &Method,
) -> Result<HittingKernel> {
    let torus = &target.torus;
    let to = target.inner_boundary().to_vec();
    if to.is_empty() {
        return Err(Error::EmptySet);
    }
    if from.iter().any(|&x| target.contains(x)) {
        return Err(Error::InvalidParameter("sources must lie outside the target".into()));
    }
    match (lattice, method) {
        (LatticeKind::Torus, Method::Exact) => {
            let g = TorusGreen::new(torus);
            let cap = TorusCapacitance::new(&g, &to)?;
            let rows = cap.hitting_matrix(&g, from);
            Ok(HittingKernel { from: from.to_vec(), to, rows, stderr: None })
        }
        (LatticeKind::Zd, Method::Exact) => {
            let pts: Vec<Point> = to.iter().map(|&s| torus.point(s)).collect();
            let starts: Vec<Point> = from.iter().map(|&s| torus.point(s)).collect();
            let green = ZdGreen::new(torus.d, torus.n)?;
            let cap = ZdCapacitance::new(&green, &pts)?;
            let rows = cap.hitting_matrix(&green, &starts);
            Ok(HittingKernel { from: from.to_vec(), to, rows, stderr: None })
        }
        (LatticeKind::Torus, Method::Dirichlet { .. }) => {
            let unknown: Vec<usize> = (0..torus.volume()).filter(|&i| !target.contains(i)).collect();
            let (dom, ext) = Domain::on_torus(torus, &unknown)?;
            let mut pos = vec![usize::MAX; torus.volume()];
            for (i, &s) in unknown.iter().enumerate() {
                pos[s] = i;
            }
            let mut rows = DMatrix::zeros(from.len(), to.len());
            for (j, &y) in to.iter().enumerate() {
                let bvals: Vec<f64> = ext.iter().map(|&s| if s == y { 1.0 } else { 0.0 }).collect();
                let h = dom.harmonic(&bvals, None, DEFAULT_TOL)?;
                for (i, &x) in from.iter().enumerate() {
                    rows[(i, j)] = h[pos[x]];
                }
            }
            Ok(HittingKernel { from: from.to_vec(), to, rows, stderr: None })
        }
        (LatticeKind::Torus, Method::MonteCarlo { walks, seed, .. }) => {
            let mut col = vec![usize::MAX; torus.volume()];
            for (j, &y) in to.iter().enumerate() {
                col[y] = j;
            }
            let mut rows = DMatrix::<f64>::zeros(from.len(), to.len());
            let mut se = DMatrix::<f64>::zeros(from.len(), to.len());
            for (i, &x) in from.iter().enumerate() {
                let mut w = TorusWalk::new(torus, x, rng::stream(*seed, rng::domain::AUX | i as u64));
                for _ in 0..*walks {
                    w.position = x;
                    let (hit, _) = w.run_until_hit(target.membership(), u64::MAX)?;
                    rows[(i, col[hit])] += 1.0;
                }
                for j in 0..to.len() {
                    let p = rows[(i, j)] / *walks as f64;
                    rows[(i, j)] = p;
                    se[(i, j)] = (p * (1.0 - p) / *walks as f64).sqrt();
                }
            }
            Ok(HittingKernel { from: from.to_vec(), to, rows, stderr: Some(se) })
        }
        (LatticeKind::Zd, _) => Err(Error::InvalidParameter(
            "Z^d hitting kernels are computed with the exact method".into(),
        )),
    }
}

/// Quantities of the walk killed on `Δ`, computed on `Δ^c`.
#[derive(Debug, Clone)]
pub struct BufferSolves {
    /// Inner boundary of `B`, the row index of the matrices below.
    pub b_boundary: Vec<usize>,
    /// Inner boundary of `Δ`, the column index.
    pub delta_boundary: Vec<usize>,
    /// `M(y1, y2) = P_{y1}[X_{H_Δ} = y2]`.
    pub exit: DMatrix<f64>,
    /// `P_x[H̃_B > H_Δ]` for `x` in `∂B`.
    pub relative_escape: Vec<f64>,
    /// `Σ_{z ∈ Δ^c} P_z[X_{H_Δ} = w]` for `w` in `∂Δ`.
    pub exit_mass: Vec<f64>,
    /// Sites of `Δ^c`.
    pub delta_complement: Vec<usize>,
}

/// Exit distribution from `∂B` to `∂Δ`, relative escape probabilities and
/// the exit mass of the uniform start, all from CG solves on `Δ^c`.
pub fn buffer_solves(layout: &Layout) -> Result<BufferSolves> {
    let torus = &layout.geom.torus;
    let dc = layout.delta_complement();
    let (dom, ext) = Domain::on_torus(torus, &dc)?;
    let mut pos = vec![usize::MAX; torus.volume()];
    for (i, &s) in dc.iter().enumerate() {
        pos[s] = i;
    }
    let bb = layout.b.inner_boundary().to_vec();
    let db = layout.delta.inner_boundary().to_vec();
    let mut col = vec![usize::MAX; torus.volume()];
    for (j, &w) in db.iter().enumerate() {
        col[w] = j;
    }
    let w = 1.0 / (2 * torus.d) as f64;
    // exits: (unknown z, exterior id e), exterior sites lie in ∂Δ
    let exit_cols: Vec<(usize, usize)> = dom.exits().iter().map(|&(z, e)| (z as usize, col[ext[e as usize]])).collect();

    // Green function of Δ^c from each y1 (symmetric), then last step into Δ
    let mut exit = DMatrix::zeros(bb.len(), db.len());
    let mut rhs = vec![0.0; dom.len()];
    for (i, &y) in bb.iter().enumerate() {
        rhs[pos[y]] = 1.0;
        let (g, _) = dom.solve(&rhs, 1e-13)?;
        rhs[pos[y]] = 0.0;
        for &(z, j) in &exit_cols {
            exit[(i, j)] += w * g[z];
        }
    }

    // relative escape: unknowns Δ^c \ B, 1 on Δ, 0 on B
    let free: Vec<usize> = dc.iter().copied().filter(|&s| !layout.b.contains(s)).collect();
    let (dom2, ext2) = Domain::on_torus(torus, &free)?;
    let bvals: Vec<f64> = ext2.iter().map(|&s| if layout.delta.contains(s) { 1.0 } else { 0.0 }).collect();
    let h = dom2.harmonic(&bvals, None, 1e-13)?;
    let mut pos2 = vec![usize::MAX; torus.volume()];
    for (i, &s) in free.iter().enumerate() {
        pos2[s] = i;
    }
    let relative_escape = bb
        .iter()
        .map(|&x| {
            (0..2 * torus.d)
                .map(|dir| {
                    let y = torus.neighbor(x, dir);
                    if layout.b.contains(y) {
                        0.0
                    } else if layout.delta.contains(y) {
                        w
                    } else {
                        w * h[pos2[y]]
                    }
                })
                .sum()
        })
        .collect();

    // Σ_z P_z[exit at w] = (1/2d) Σ_{v ~ w, v ∈ Δ^c} E_v[H_Δ]
    let et = dirichlet::expected_exit_time(&dom, 1e-11)?;
    let mut exit_mass = vec![0.0; db.len()];
    for &(z, j) in &exit_cols {
        exit_mass[j] += w * et[z];
    }
    Ok(BufferSolves {
        b_boundary: bb,
        delta_boundary: db,
        exit,
        relative_escape,
        exit_mass,
        delta_complement: dc,
    })
}

/// `cap_Δ(B)` and `ē_B^Δ` on `∂B`.
pub fn cap_delta(layout: &Layout, method: &Method) -> Result<EquilibriumMeasure<usize>> {
    let bb = layout.b.inner_boundary().to_vec();
    match method {
        Method::MonteCarlo { walks, seed, .. } => {
            let torus = &layout.geom.torus;
            let mut target = vec![false; torus.volume()];
            for i in 0..torus.volume() {
                target[i] = layout.b.contains(i) || layout.delta.contains(i);
            }
            let mut mean = Vec::with_capacity(bb.len());
            let mut se = Vec::with_capacity(bb.len());
            for (i, &x) in bb.iter().enumerate() {
                let mut wk = TorusWalk::new(torus, x, rng::stream(*seed, rng::domain::AUX | i as u64));
                let mut esc = 0usize;
                for _ in 0..*walks {
                    wk.position = x;
                    wk.step();
                    let (hit, _) = wk.run_until_hit(&target, u64::MAX)?;
                    esc += layout.delta.contains(hit) as usize;
                }
                let m = esc as f64 / *walks as f64;
                mean.push(m);
                se.push((m * (1.0 - m) / *walks as f64).sqrt());
            }
            Ok(EquilibriumMeasure::new(bb, mean, Some(se)))
        }
        _ => {
            let s = buffer_solves(layout)?;
            Ok(EquilibriumMeasure::new(bb, s.relative_escape, None))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn origin() -> Point {
        [0; MAX_D]
    }

    #[test]
    fn singleton_capacity_routes_agree() {
        let exact = capacity(3, &[origin()], &Method::Exact).unwrap();
        assert!((exact.total_mass - 1.0 / 1.516_386_059_151_978).abs() < 1e-9);
        let dir = capacity(3, &[origin()], &Method::Dirichlet { radii: vec![8.0, 12.0, 16.0] }).unwrap();
        assert!((dir.total_mass - exact.total_mass).abs() < 2e-3, "{}", dir.total_mass);
        assert_eq!(exact.normalized(), vec![1.0]);
    }

    #[test]
    fn equilibrium_identity_on_small_box() {
        // Σ_z e_B(z) g(z, x) = 1 for x in B
        let mut k = Vec::new();
        for a in 0..3 {
            for b in 0..3 {
                for c in 0..2 {
                    k.push([a, b, c, 0, 0, 0]);
                }
            }
        }
        let em = capacity(3, &k, &Method::Exact).unwrap();
        let green = ZdGreen::new(3, 6).unwrap();
        for x in &k {
            let s: f64 = em.support.iter().zip(&em.weights).map(|(z, e)| e * green_function(&green, z, x)).sum();
            assert!((s - 1.0).abs() < 1e-9);
        }
        // interior point carries no mass
        let sum: f64 = em.normalized().iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn capacity_is_permutation_invariant() {
        let k = vec![[0, 0, 0, 0, 0, 0], [1, 0, 0, 0, 0, 0], [0, 1, 0, 0, 0, 0]];
        let em = capacity(3, &k, &Method::Exact).unwrap();
        let i = em.support.iter().position(|p| *p == [1, 0, 0, 0, 0, 0]).unwrap();
        let j = em.support.iter().position(|p| *p == [0, 1, 0, 0, 0, 0]).unwrap();
        assert!((em.weights[i] - em.weights[j]).abs() < 1e-12);
    }

    #[test]
    fn killed_green_matches_exact() {
        let green = ZdGreen::new(3, 4).unwrap();
        let x = [1, 1, 0, 0, 0, 0];
        let y = origin();
        let k = green_function_killed(3, &x, &y, &[8.0, 12.0, 16.0]).unwrap();
        assert!((k - green_function(&green, &x, &y)).abs() < 2e-3);
        assert!(green_function(&green, &y, &y) > 1.0);
        assert_eq!(green_function(&green, &x, &y), green_function(&green, &y, &x));
    }

    #[test]
    fn torus_hitting_routes_agree() {
        let t = Torus::new(3, 8).unwrap();
        let pts: Vec<usize> = [[3, 3, 3], [4, 3, 3], [3, 4, 3]]
            .iter()
            .map(|p| t.index(&[p[0], p[1], p[2], 0, 0, 0]))
            .collect();
        let k = LatticeSet::from_points(t.clone(), &pts);
        let from = vec![0usize, 17, 300];
        let a = hitting_kernel(&from, &k, LatticeKind::Torus, &Method::Exact).unwrap();
        let b = hitting_kernel(&from, &k, LatticeKind::Torus, &Method::Dirichlet { radii: vec![] }).unwrap();
        for s in a.row_sums() {
            assert!((s - 1.0).abs() < 1e-10);
        }
        assert!((&a.rows - &b.rows).abs().max() < 1e-9);
    }
}
