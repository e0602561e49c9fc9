use interlacement::chains::{
    build_y_kernel, build_z_kernel, default_kill_radius, invariant_pi, ExcursionGeometry, KernelMode,
};
use interlacement::concentration::{chernov_discrete, chernov_functional, BoundInput};
use interlacement::lattice::Layout;
use interlacement::pipeline::{run_pipeline, run_replica, PipelineParams};
use interlacement::slt::{couple_iid, ChainKernel, DenseKernel, Drive, FiberedPoissonProcess, SltChain};
use interlacement::Error;
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn geometry() -> ExcursionGeometry {
    let layout = Layout::build(3, 36, 0.55, 0.1).unwrap();
    let kr = default_kill_radius(&layout);
    ExcursionGeometry::new(layout, kr).unwrap()
}

fn chi_square_p(observed: &[f64], expected: &[f64]) -> f64 {
    let stat: f64 = observed.iter().zip(expected).map(|(o, e)| (o - e).powi(2) / e).sum();
    let dist = ChiSquared::new((observed.len() - 1) as f64).unwrap();
    1.0 - dist.cdf(stat)
}

#[test]
fn functional_bound_is_discrete_bound_at_gamma_delta_pi_h() {
    let h = [0.1, 0.9, 0.4];
    let pi = [0.3, 0.2, 0.5];
    let ph: f64 = h.iter().zip(&pi).map(|(a, p)| a * p).sum();
    let var: f64 = h.iter().zip(&pi).map(|(a, p)| p * (a - ph).powi(2)).sum();
    let delta = 0.05;
    let f = chernov_functional(&h, delta, 5e5, &pi, 4.0, None).unwrap();
    let d = chernov_discrete(&BoundInput { horizon: 5e5, gamma_dev: delta * ph, sigma2: var, pi_star: 0.2, t_mix: 4.0 })
        .unwrap();
    assert!((f.value - d.value).abs() < 1e-12 * d.value.max(1e-300));
    assert!((f.k - d.k).abs() < 1e-12);
}

#[test]
fn first_two_steps_follow_the_kernel() {
    let p = vec![vec![0.7, 0.3], vec![0.4, 0.6]];
    let k = DenseKernel::new(p.clone(), vec![0.5, 0.5], vec![0.25, 0.75]).unwrap();
    let nu = [0.25, 0.75];
    let runs = 20_000u64;
    let mut counts = [0.0; 4];
    for s in 0..runs {
        let mut ppp = FiberedPoissonProcess::new(&k, s);
        let mut c = SltChain::new(&k, Drive::Chain);
        c.extend_to(&mut ppp, &k, 2).unwrap();
        counts[2 * c.path[0] + c.path[1]] += 1.0;
    }
    let expected: Vec<f64> = (0..4).map(|i| runs as f64 * nu[i / 2] * p[i / 2][i % 2]).collect();
    assert!(chi_square_p(&counts, &expected) > 0.001, "{counts:?} vs {expected:?}");
}

#[test]
fn three_step_law_is_exact() {
    let p = vec![vec![0.2, 0.5, 0.3], vec![0.6, 0.1, 0.3], vec![0.3, 0.3, 0.4]];
    let nu = [0.5, 0.3, 0.2];
    let k = DenseKernel::new(p.clone(), vec![0.3, 0.3, 0.4], nu.to_vec()).unwrap();
    let runs = 1_000_000u64;
    let counts = interlacement::par::map_replicas(8, |part| {
        let mut c = vec![0u64; 27];
        for s in (part as u64..runs).step_by(8) {
            let mut ppp = FiberedPoissonProcess::new(&k, s);
            let mut ch = SltChain::new(&k, Drive::Chain);
            ch.extend_to(&mut ppp, &k, 3).unwrap();
            c[9 * ch.path[0] + 3 * ch.path[1] + ch.path[2]] += 1;
        }
        c
    });
    let mut tv = 0.0;
    for i in 0..27 {
        let (a, b, c) = (i / 9, (i / 3) % 3, i % 3);
        let exact = nu[a] * p[a][b] * p[b][c];
        let freq = counts.iter().map(|v| v[i]).sum::<u64>() as f64 / runs as f64;
        tv += 0.5 * (freq - exact).abs();
    }
    assert!(tv < 0.01, "TV {tv}");
}

#[test]
fn poisson_counts_are_poisson() {
    let k = DenseKernel::iid(vec![0.5, 0.5], vec![0.2, 0.8]).unwrap();
    let level = 10.0;
    let runs = 4000u64;
    let counts: Vec<f64> = (0..runs)
        .map(|s| {
            let mut ppp = FiberedPoissonProcess::new(&k, s);
            let mut j = 0;
            while ppp.point(&k, 0, j).0 <= level {
                j += 1;
            }
            j as f64
        })
        .collect();
    let mean = counts.iter().sum::<f64>() / runs as f64;
    let var = counts.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (runs - 1) as f64;
    // rate μ = 0.2: mean and variance 2
    assert!((mean - 2.0).abs() < 4.0 * (2.0 / runs as f64).sqrt());
    assert!((var / mean - 1.0).abs() < 0.1);
}

#[test]
fn iid_side_has_marginal_pi() {
    let p = vec![vec![0.1, 0.6, 0.3], vec![0.5, 0.2, 0.3], vec![0.3, 0.3, 0.4]];
    let k = DenseKernel::new(p, vec![0.2, 0.5, 0.3], vec![1.0 / 3.0; 3]).unwrap();
    let c = couple_iid(&k, 30_000, 0.1, 11).unwrap();
    let mut obs = [0.0; 3];
    for &u in &c.u {
        obs[u] += 1.0;
    }
    let n = c.u.len() as f64;
    let exp: Vec<f64> = (0..3).map(|x| n * k.pi(x)).collect();
    assert!(chi_square_p(&obs, &exp) > 0.001);
}

#[test]
fn excursion_kernels_preserve_closed_form_pi() {
    let geo = geometry();
    let pi = invariant_pi(&geo);
    assert!((pi.iter().sum::<f64>() - 1.0).abs() < 1e-10);
    let y = build_y_kernel(&geo, KernelMode::Exact).unwrap();
    let z = build_z_kernel(&geo, KernelMode::Exact).unwrap();
    let n = y.n_states();
    for k in [&y, &z] {
        for (x, p) in pi.iter().enumerate().step_by(997) {
            assert!((k.pi(x) - p).abs() < 1e-12);
        }
        // πP(y) by brute force over all states for a few columns
        for col in (0..n).step_by(n / 7) {
            let s: f64 = (0..n).map(|x| pi[x] * k.transition(x, col)).sum();
            assert!((s - pi[col]).abs() < 1e-10 * pi[col].max(1e-12) + 1e-15, "column {col}: {s} vs {}", pi[col]);
        }
    }
}

#[test]
fn pipeline_at_level_zero_is_trivial() {
    let geo = geometry();
    let y = build_y_kernel(&geo, KernelMode::Exact).unwrap();
    let z = build_z_kernel(&geo, KernelMode::Exact).unwrap();
    let params = PipelineParams { u: 0.0, beta: 0.5, eps_grid: vec![0.15, 0.25, 0.5], max_rejections: 1 << 22 };
    let o = run_replica(&geo, &y, &z, &params, 3).unwrap();
    assert_eq!(o.vacant_walk, geo.layout.b.len());
    assert!(o.sandwich.iter().all(|s| *s));
    for (lo, _) in &o.vacant_ri {
        assert_eq!(*lo, geo.layout.b.len());
    }
}

#[test]
fn pipeline_replays_and_nests() {
    let geo = geometry();
    let y = build_y_kernel(&geo, KernelMode::Exact).unwrap();
    let z = build_z_kernel(&geo, KernelMode::Exact).unwrap();
    let params = PipelineParams { u: 0.5, beta: 0.5, eps_grid: vec![0.15, 0.25, 0.5], max_rejections: 1 << 22 };
    let a = run_pipeline(&geo, &y, &z, &params, 4, 9).unwrap();
    let b = run_pipeline(&geo, &y, &z, &params, 4, 9).unwrap();
    assert_eq!(a, b);
    for o in &a.outcomes {
        // wider ε: larger V^{u-ε}, smaller V^{u+ε}
        assert!(o.vacant_ri.windows(2).all(|w| w[1].0 >= w[0].0 && w[1].1 <= w[0].1));
        assert!(o.matched <= o.z_steps);
    }
    let bad = PipelineParams { beta: 0.1, ..params };
    assert!(matches!(run_replica(&geo, &y, &z, &bad, 0), Err(Error::InvalidParameter(_))));
}

#[test]
fn torus_steps_are_reversible() {
    use interlacement::lattice::Torus;
    use interlacement::walk::TorusWalk;
    let torus = Torus::new(2, 4).unwrap();
    let v = torus.volume();
    let runs = 200_000u64;
    let mut pairs = vec![0u32; v * v];
    for s in 0..runs {
        let mut w = TorusWalk::uniform(&torus, interlacement::rng::replica(5, s));
        for _ in 0..3 {
            w.step();
        }
        let x = w.position;
        pairs[x * v + w.step()] += 1;
    }
    let mut worst = 0.0f64;
    for x in 0..v {
        for y in x + 1..v {
            let (a, b) = (pairs[x * v + y] as f64, pairs[y * v + x] as f64);
            if a + b > 0.0 {
                worst = worst.max((a - b).abs() / (a + b).sqrt());
            }
        }
    }
    // 32 edges, each |a - b| / sqrt(a + b) approximately standard normal
    assert!(worst < 4.0, "largest z-score {worst}");
}

#[test]
fn vacant_set_ignores_trajectory_order() {
    use interlacement::interlacements::{run_trajectory, sample_vacant_process, ZdTarget, MAX_TRAJECTORY_STEPS};
    use interlacement::rng::DirectionSource;
    let mut pts = Vec::new();
    for x in 0..4 {
        for y in 0..4 {
            for z in 0..4 {
                let mut p = [0i32; interlacement::lattice::MAX_D];
                p[..3].copy_from_slice(&[x, y, z]);
                pts.push(p);
            }
        }
    }
    let target = ZdTarget::new(3, &pts, 12.0).unwrap();
    let seed = 17;
    let process = sample_vacant_process(&target, 1.5, seed).unwrap();
    assert!(process.arrivals.len() > 2);
    let mut covered = vec![false; pts.len()];
    for i in (0..process.arrivals.len()).rev() {
        let mut r = interlacement::rng::replica(seed, i as u64);
        let mut dirs = DirectionSource::new(3);
        run_trajectory(&target, MAX_TRAJECTORY_STEPS, &mut dirs, &mut r, |k| covered[k] = true).unwrap();
    }
    let reversed: Vec<bool> = covered.iter().map(|c| !c).collect();
    assert_eq!(reversed, process.vacant(1.5));
}

#[test]
fn densities_reduce_to_entry_and_exit_points() {
    let geo = geometry();
    let pi = invariant_pi(&geo);
    let y = build_y_kernel(&geo, KernelMode::Exact).unwrap();
    let z = build_z_kernel(&geo, KernelMode::Exact).unwrap();
    let s = y.space;
    let mut g = vec![0.0; s.nb];
    for k in [&y, &z] {
        k.pi_density(&mut g);
        // π / μ depends on x₁ alone
        for x1 in (0..s.nb).step_by(7) {
            for x2 in (0..s.nd).step_by(s.nd / 5) {
                let st = s.index(x1, x2);
                let mu = k.mu(st);
                if mu > 0.0 {
                    assert!((pi[st] / mu - g[x1]).abs() < 1e-9 * g[x1], "g at {x1}");
                }
            }
        }
        // P(x, y) / μ(y) depends on (x₂, y₁) alone
        for x2 in (0..s.nd).step_by(s.nd / 4) {
            let row = k.entry_row(x2);
            for y1 in (0..s.nb).step_by(11) {
                for (x1, y2) in [(0, 0), (s.nb - 1, s.nd / 2), (s.nb / 3, s.nd - 1)] {
                    let (a, b) = (s.index(x1, x2), s.index(y1, y2));
                    let mu = k.mu(b);
                    if mu > 0.0 {
                        assert!((k.transition(a, b) / mu - row[y1]).abs() <= 1e-12 * row[y1].max(1e-300));
                    }
                }
            }
        }
    }
}
