//! Green functions of the simple random walk.
//!
//! On `Z^d` the Green function is the time integral of the continuous-time
//! walk's heat kernel, `G(x) = d ∫_0^∞ Π_i e^{-s} I_{x_i}(s) ds`, evaluated by
//! Gauss-Legendre quadrature on dyadic panels plus an asymptotic tail. On the
//! torus the zero-mean pseudo Green function is obtained by FFT.

use std::f64::consts::PI;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::lattice::{Point, Torus, MAX_D};

/// 20-point Gauss-Legendre nodes and weights on [-1, 1] (positive half).
const GL_X: [f64; 10] = [
    0.076_526_521_133_497_33,
    0.227_785_851_141_645_1,
    0.373_706_088_715_419_56,
    0.510_867_001_950_827_1,
    0.636_053_680_726_515,
    0.746_331_906_460_150_8,
    0.839_116_971_822_218_8,
    0.912_234_428_251_326,
    0.963_971_927_277_913_8,
    0.993_128_599_185_094_9,
];
const GL_W: [f64; 10] = [
    0.152_753_387_130_725_85,
    0.149_172_986_472_603_75,
    0.142_096_109_318_382_05,
    0.131_688_638_449_176_63,
    0.118_194_531_961_518_42,
    0.101_930_119_817_240_44,
    0.083_276_741_576_704_75,
    0.062_672_048_334_109_06,
    0.040_601_429_800_386_94,
    0.017_614_007_139_152_12,
];

/// Number of terms kept in the large-argument expansion of `e^{-s} I_n(s)`.
const ASYM_TERMS: usize = 5;

/// `e^{-s} I_n(s)` for `n = 0..=nmax`, by Miller's backward recurrence
/// normalised with `e^{-s}(I_0 + 2 Σ I_n) = 1`.
pub fn scaled_bessel_i(s: f64, nmax: usize) -> Vec<f64> {
    let mut out = vec![0.0; nmax + 1];
    if s == 0.0 {
        out[0] = 1.0;
        return out;
    }
    let start = nmax + 30 + (12.0 * s.sqrt()).ceil() as usize;
    let mut next = 0.0f64; // I_{k+1}
    let mut cur = 1e-300f64; // I_k
    let mut sum = 0.0f64;
    for k in (1..=start).rev() {
        // I_{k-1} = I_{k+1} + (2k/s) I_k
        let prev = next + (2.0 * k as f64 / s) * cur;
        if k <= nmax {
            out[k] = cur;
        }
        sum += 2.0 * cur;
        next = cur;
        cur = prev;
        if cur > 1e250 {
            let scale = 1e-250;
            cur *= scale;
            next *= scale;
            sum *= scale;
            for v in out.iter_mut() {
                *v *= scale;
            }
        }
    }
    out[0] = cur;
    sum += cur;
    for v in out.iter_mut() {
        *v /= sum;
    }
    out
}

/// Coefficients `c_k` with `e^{-s} I_n(s) ~ (2πs)^{-1/2} Σ c_k s^{-k}`.
fn asym_coeffs(n: i64) -> [f64; ASYM_TERMS] {
    let mut c = [0.0; ASYM_TERMS];
    c[0] = 1.0;
    let mu = 4.0 * (n * n) as f64;
    for k in 1..ASYM_TERMS {
        let j = (2 * k - 1) as f64;
        c[k] = -c[k - 1] * (mu - j * j) / (k as f64 * 8.0);
    }
    c
}

/// Green function of the simple random walk on `Z^d`, tabulated for all
/// points with `max_i |x_i| <= max_coord`, asymptotic beyond.
#[derive(Debug, Clone)]
pub struct ZdGreen {
    pub d: usize,
    pub max_coord: usize,
    side: usize,
    table: Vec<f64>,
}

impl ZdGreen {
    pub fn new(d: usize, max_coord: usize) -> Result<Self> {
        if !(3..=MAX_D).contains(&d) {
            return Err(Error::InvalidParameter(format!("Green function needs 3 <= d <= {MAX_D}")));
        }
        let side = max_coord + 1;
        let cells = side.pow(d as u32);
        // sorted representatives x_0 >= x_1 >= ... >= 0
        let mut reps: Vec<[usize; MAX_D]> = Vec::new();
        for c in 0..cells {
            let mut p = [0usize; MAX_D];
            let mut r = c;
            for v in p.iter_mut().take(d) {
                *v = r % side;
                r /= side;
            }
            if (1..d).all(|i| p[i - 1] >= p[i]) {
                reps.push(p);
            }
        }
        let s_max = 40.0 * (max_coord.max(2) as f64).powi(2);
        let mut vals = vec![0.0; reps.len()];
        // dyadic panels [0, 1/2], [1/2, 1], [1, 2], ...
        let mut edges = vec![0.0, 0.5];
        while *edges.last().unwrap() < s_max {
            let e = edges.last().unwrap() * 2.0;
            edges.push(e.min(s_max));
        }
        for w in edges.windows(2) {
            let (a, b) = (w[0], w[1]);
            let half = 0.5 * (b - a);
            let mid = 0.5 * (a + b);
            for k in 0..10 {
                for sign in [-1.0, 1.0] {
                    let s = mid + sign * half * GL_X[k];
                    let wt = half * GL_W[k];
                    let bes = scaled_bessel_i(s, max_coord);
                    for (v, p) in vals.iter_mut().zip(&reps) {
                        let mut prod = wt;
                        for &x in p.iter().take(d) {
                            prod *= bes[x];
                        }
                        *v += prod;
                    }
                }
            }
        }
        // tail beyond s_max from the asymptotic expansion, integrated termwise
        let df = d as f64;
        for (v, p) in vals.iter_mut().zip(&reps) {
            let mut poly = [0.0; ASYM_TERMS];
            poly[0] = 1.0;
            for &x in p.iter().take(d) {
                let c = asym_coeffs(x as i64);
                let mut next = [0.0; ASYM_TERMS];
                for i in 0..ASYM_TERMS {
                    for j in 0..ASYM_TERMS - i {
                        next[i + j] += poly[i] * c[j];
                    }
                }
                poly = next;
            }
            let mut tail = 0.0;
            for (j, cj) in poly.iter().enumerate() {
                let e = df / 2.0 + j as f64 - 1.0;
                tail += cj * s_max.powf(-e) / e;
            }
            *v += tail * (2.0 * PI).powf(-df / 2.0);
            *v *= df;
        }
        let mut table = vec![0.0; cells];
        for c in 0..cells {
            let mut p = [0usize; MAX_D];
            let mut r = c;
            for v in p.iter_mut().take(d) {
                *v = r % side;
                r /= side;
            }
            let key = &mut p[..d];
            key.sort_unstable_by(|a, b| b.cmp(a));
            let idx = reps
                .binary_search_by(|q| {
                    // reps are generated in increasing cell order of the sorted tuple
                    let cq: usize = (0..d).rev().fold(0, |acc, i| acc * side + q[i]);
                    let ck: usize = (0..d).rev().fold(0, |acc, i| acc * side + key[i]);
                    cq.cmp(&ck)
                })
                .expect("representative present");
            table[c] = vals[idx];
        }
        Ok(ZdGreen { d, max_coord, side, table })
    }

    /// `G(x)`: exact from the table when in range, asymptotic otherwise.
    pub fn value(&self, x: &Point) -> f64 {
        let mut c = 0usize;
        for i in (0..self.d).rev() {
            let a = x[i].unsigned_abs() as usize;
            if a > self.max_coord {
                return self.asymptotic(x);
            }
            c = c * self.side + a;
        }
        self.table[c]
    }

    /// Whether `x` is inside the tabulated range.
    pub fn in_table(&self, x: &Point) -> bool {
        (0..self.d).all(|i| x[i].unsigned_abs() as usize <= self.max_coord)
    }

    /// Large-distance expansion. For `d = 3` the first anisotropic correction
    /// is included.
    pub fn asymptotic(&self, x: &Point) -> f64 {
        asymptotic_green(self.d, x)
    }

    pub fn origin(&self) -> f64 {
        self.table[0]
    }
}

/// `G(x) ≈ d Γ(d/2 - 1) / (2 π^{d/2}) |x|^{2-d}`, with the cubic-lattice
/// correction `(5 Σ x_i^4 / r^4 - 3) / (8 r^2)` in three dimensions.
pub fn asymptotic_green(d: usize, x: &Point) -> f64 {
    let r2: f64 = x[..d].iter().map(|&v| (v as f64) * (v as f64)).sum();
    let r = r2.sqrt();
    let df = d as f64;
    let lead = df * gamma_fn(df / 2.0 - 1.0) / (2.0 * PI.powf(df / 2.0)) * r.powf(2.0 - df);
    if d == 3 {
        let q: f64 = x[..3].iter().map(|&v| (v as f64).powi(4)).sum::<f64>() / (r2 * r2);
        lead * (1.0 + (5.0 * q - 3.0) / (8.0 * r2))
    } else {
        lead
    }
}

fn gamma_fn(x: f64) -> f64 {
    // half-integer and integer arguments only
    if (x - x.round()).abs() < 1e-12 {
        (1..x.round() as i64).map(|k| k as f64).product()
    } else {
        let mut v = PI.sqrt();
        let mut a = 0.5;
        while a < x - 1e-12 {
            v *= a;
            a += 1.0;
        }
        v
    }
}

/// Zero-mean Green function of the torus: `(I - P) G̃ = δ_0 - N^{-d}`,
/// `Σ_x G̃(x) = 0`.
#[derive(Debug, Clone)]
pub struct TorusGreen {
    pub torus: Torus,
    values: Vec<f64>,
}

impl TorusGreen {
    pub fn new(torus: &Torus) -> Self {
        let d = torus.d;
        let n = torus.n;
        let vol = torus.volume();
        let mut data: Vec<Complex<f64>> = (0..vol)
            .map(|idx| {
                if idx == 0 {
                    return Complex::new(0.0, 0.0);
                }
                let s: f64 = (0..d)
                    .map(|i| (2.0 * PI * torus.coord(idx, i) as f64 / n as f64).cos())
                    .sum();
                Complex::new(1.0 / (1.0 - s / d as f64), 0.0)
            })
            .collect();
        let mut planner = FftPlanner::new();
        let fft = planner.plan_fft_inverse(n);
        let mut line = vec![Complex::new(0.0, 0.0); n];
        let mut stride = 1usize;
        for _ in 0..d {
            for base in 0..vol {
                if !(base / stride).is_multiple_of(n) {
                    continue;
                }
                for (k, v) in line.iter_mut().enumerate() {
                    *v = data[base + k * stride];
                }
                fft.process(&mut line);
                for (k, v) in line.iter().enumerate() {
                    data[base + k * stride] = *v;
                }
            }
            stride *= n;
        }
        let scale = 1.0 / vol as f64;
        let values = data.iter().map(|c| c.re * scale).collect();
        TorusGreen { torus: torus.clone(), values }
    }

    /// `G̃(a - b)` for torus sites `a`, `b`.
    #[inline]
    pub fn between(&self, a: usize, b: usize) -> f64 {
        let t = &self.torus;
        let n = t.n;
        let mut idx = 0usize;
        let mut stride = 1usize;
        for i in 0..t.d {
            let diff = (t.coord(a, i) + n - t.coord(b, i)) % n;
            idx += diff * stride;
            stride *= n;
        }
        self.values[idx]
    }

    pub fn at(&self, idx: usize) -> f64 {
        self.values[idx]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pt(a: i32, b: i32, c: i32) -> Point {
        [a, b, c, 0, 0, 0]
    }

    #[test]
    fn bessel_normalisation_and_known_values() {
        // e^{-1} I_0(1) = 0.46575960759364043, e^{-1} I_1(1) = 0.2079104153497085
        let v = scaled_bessel_i(1.0, 3);
        assert!((v[0] - 0.465_759_607_593_640_4).abs() < 1e-14);
        assert!((v[1] - 0.207_910_415_349_708_5).abs() < 1e-14);
        // large argument: compare with the asymptotic series
        let s = 5000.0;
        let v = scaled_bessel_i(s, 2);
        let c = asym_coeffs(2);
        let asym: f64 = c.iter().enumerate().map(|(k, ck)| ck / s.powi(k as i32)).sum::<f64>()
            / (2.0 * PI * s).sqrt();
        assert!((v[2] / asym - 1.0).abs() < 1e-12);
    }

    #[test]
    fn watson_constant() {
        let g = ZdGreen::new(3, 4).unwrap();
        assert!((g.origin() - 1.516_386_059_151_978).abs() < 1e-10, "{}", g.origin());
        // harmonic away from 0: G(0) - mean of neighbours = 1
        assert!((g.origin() - g.value(&pt(1, 0, 0)) - 1.0).abs() < 1e-10);
        let p = pt(2, 1, 0);
        let mean: f64 = (0..6)
            .map(|dir| {
                let mut q = p;
                q[dir >> 1] += if dir & 1 == 0 { 1 } else { -1 };
                g.value(&q)
            })
            .sum::<f64>()
            / 6.0;
        assert!((g.value(&p) - mean).abs() < 1e-11);
    }

    #[test]
    fn symmetric_under_lattice_symmetries() {
        let g = ZdGreen::new(3, 5).unwrap();
        let a = g.value(&pt(3, -1, 2));
        for q in [pt(1, 2, 3), pt(-2, 3, 1), pt(3, 2, -1)] {
            assert!((g.value(&q) - a).abs() < 1e-15);
        }
    }

    #[test]
    fn asymptotic_matches_table_far_out() {
        let g = ZdGreen::new(3, 24).unwrap();
        for p in [pt(24, 0, 0), pt(15, 15, 10), pt(20, 11, 3)] {
            let rel = g.value(&p) / asymptotic_green(3, &p) - 1.0;
            assert!(rel.abs() < 2e-5, "{p:?}: {rel}");
        }
    }

    #[test]
    fn torus_green_solves_poisson() {
        let t = Torus::new(3, 10).unwrap();
        let g = TorusGreen::new(&t);
        let vol = t.volume() as f64;
        let sum: f64 = (0..t.volume()).map(|i| g.at(i)).sum();
        assert!(sum.abs() < 1e-9);
        for x in [0usize, 1, 37, 555] {
            let lap = g.at(x) - (0..6).map(|dir| g.at(t.neighbor(x, dir))).sum::<f64>() / 6.0;
            let expect = if x == 0 { 1.0 } else { 0.0 } - 1.0 / vol;
            assert!((lap - expect).abs() < 1e-10);
        }
    }
}
