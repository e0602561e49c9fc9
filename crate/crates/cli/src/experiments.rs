//! The four experiments.

use std::time::Instant;

use anyhow::Result;
use rand::Rng;
use serde_json::json;

use interlacement::chains::{
    build_y_kernel, build_z_kernel, default_kill_radius, ExcursionGeometry, KernelMode, MixingMethod, MixingTime,
};
use interlacement::concentration::{chernov_discrete, empirical_tail, BoundInput};
use interlacement::error::StageExt;
use interlacement::lattice::{Layout, Point};
use interlacement::par;
use interlacement::percolation::eta_hat;
use interlacement::pipeline::{epsilon_floor, run_pipeline, PipelineParams};
use interlacement::potential::{capacity, Method, ZdGreen};
use interlacement::rng;
use interlacement::slt::{couple_iid, failure_bound, BoundInputs, Calibration, DenseKernel};
use interlacement::Error;

use crate::config::{Experiment, ExperimentConfig};
use crate::report::{Assertion, Report, Table};

/// Kill-ball radii of the extrapolated Dirichlet capacity.
pub const DIRICHLET_RADII: [f64; 4] = [8.0, 12.0, 16.0, 24.0];
/// Agreement required between the two capacity routes.
pub const CAPACITY_TOLERANCE: f64 = 1e-3;
/// Largest allowed shift of the half-crossing between successive sizes.
pub const MAX_CROSSING_SHIFT: f64 = 1.0;
/// Cap on the exact mixing-time search of the bound check.
pub const MIXING_CAP: usize = 10_000;

fn fmt(x: f64) -> String {
    if x != 0.0 && (x.abs() < 1e-4 || x.abs() >= 1e15) {
        format!("{x:e}")
    } else {
        x.to_string()
    }
}

pub fn run(cfg: &ExperimentConfig) -> Result<Report> {
    cfg.validate()?;
    let start = Instant::now();
    let (table, metrics, assertions) = match cfg.experiment {
        Experiment::PhaseSweep => phase_sweep(cfg)?,
        Experiment::CouplingPipeline => coupling_pipeline(cfg)?,
        Experiment::BoundCheck => bound_check(cfg)?,
        Experiment::TabulatePotential => tabulate_potential(cfg)?,
    };
    Ok(Report { config: cfg.clone(), table, metrics, assertions, wall_clock_s: start.elapsed().as_secs_f64() })
}

type Parts = (Table, serde_json::Value, Vec<Assertion>);

fn phase_sweep(cfg: &ExperimentConfig) -> Result<Parts> {
    let mut table = Table::new(&["n", "u", "eta", "stderr", "mean_largest"]);
    let mut assertions = Vec::new();
    let mut crossings = Vec::new();
    for n in cfg.sweep_sizes() {
        let est = eta_hat(cfg.d, n, &cfg.u_grid, cfg.replicas, rng::derive_seed(cfg.seed, n as u64))
            .stage("phase sweep")?;
        for r in &est.rows {
            table.push(vec![n.to_string(), fmt(r.u), fmt(r.eta), fmt(r.stderr), fmt(r.mean_largest)]);
        }
        assertions.push(Assertion::new(&format!("monotone_n{n}"), est.pathwise_monotone(), "indicators non-increasing in u"));
        crossings.push((n, est.half_crossing()));
    }
    if crossings.len() > 1 {
        let mut ok = true;
        let mut detail = Vec::new();
        for w in crossings.windows(2) {
            match (w[0].1, w[1].1) {
                (Some(a), Some(b)) => {
                    ok &= (a - b).abs() < MAX_CROSSING_SHIFT;
                    detail.push(format!("{}->{}: {:.3}", w[0].0, w[1].0, b - a));
                }
                _ => {
                    ok = false;
                    detail.push(format!("{}->{}: no crossing", w[0].0, w[1].0));
                }
            }
        }
        assertions.push(Assertion::new("half_crossing_shift", ok, detail.join("; ")));
    }
    let metrics = json!({
        "half_crossings": crossings.iter().map(|(n, c)| json!({"n": n, "u": c})).collect::<Vec<_>>(),
    });
    Ok((table, metrics, assertions))
}

/// Geometry and exact kernels at the configured size.
pub fn excursion_setup(
    cfg: &ExperimentConfig,
) -> interlacement::Result<(ExcursionGeometry, interlacement::chains::ExcursionKernel, interlacement::chains::ExcursionKernel)> {
    let layout = Layout::build(cfg.d, cfg.n, cfg.gamma, cfg.chi).stage("geometry")?;
    let kr = cfg.kill_radius.unwrap_or_else(|| default_kill_radius(&layout));
    let geo = ExcursionGeometry::new(layout, kr).stage("geometry")?;
    let y = build_y_kernel(&geo, KernelMode::Exact).stage("torus kernel")?;
    let z = build_z_kernel(&geo, KernelMode::Exact).stage("interlacement kernel")?;
    Ok((geo, y, z))
}

fn coupling_pipeline(cfg: &ExperimentConfig) -> Result<Parts> {
    let floor = epsilon_floor(cfg.d, cfg.n, cfg.gamma, cfg.regime_c).stage("configuration")?;
    if let Some(&e) = cfg.epsilon.iter().find(|&&e| e < floor) {
        let msg = format!("ε = {e} is below the admissible floor {floor:.4} at N = {} (regime_c = {})", cfg.n, cfg.regime_c);
        return Err(Error::InvalidParameter(msg).in_stage("configuration").into());
    }
    let (geo, y, z) = excursion_setup(cfg)?;
    let params = PipelineParams {
        u: cfg.u,
        beta: cfg.beta,
        eps_grid: cfg.epsilon.clone(),
        max_rejections: cfg.max_rejections,
    };
    let s = run_pipeline(&geo, &y, &z, &params, cfg.replicas, cfg.seed)?;
    let r = s.outcomes.len() as f64;
    let mean = |f: &dyn Fn(&interlacement::pipeline::ReplicaOutcome) -> f64| s.outcomes.iter().map(f).sum::<f64>() / r;
    let mut table =
        Table::new(&["epsilon", "frequency", "stderr", "mean_vacant_walk", "mean_vacant_lower", "mean_vacant_upper"]);
    for (k, &eps) in cfg.epsilon.iter().enumerate() {
        table.push(vec![
            fmt(eps),
            fmt(s.frequency[k]),
            fmt(s.stderr[k]),
            fmt(mean(&|o| o.vacant_walk as f64)),
            fmt(mean(&|o| o.vacant_ri[k].0 as f64)),
            fmt(mean(&|o| o.vacant_ri[k].1 as f64)),
        ]);
    }
    let monotone = s.frequency.windows(2).all(|w| w[1] >= w[0]);
    let assertions = vec![Assertion::new("monotone_in_epsilon", monotone, format!("{:?}", s.frequency))];
    let metrics = json!({
        "box_sites": geo.layout.b.len(),
        "cap_b": geo.cap_b(),
        "cap_delta": geo.cap_delta,
        "epsilon_floor": floor,
        "mean_y_steps": mean(&|o| o.y_steps as f64),
        "mean_z_steps": mean(&|o| o.z_steps as f64),
        "matched_fraction": mean(&|o| if o.z_steps == 0 { 1.0 } else { o.matched as f64 / o.z_steps as f64 }),
    });
    Ok((table, metrics, assertions))
}

/// A chain on `m` states with random rows, uniform `μ` and `ν = δ_0`.
pub fn random_chain<R: Rng>(m: usize, rng: &mut R) -> interlacement::Result<DenseKernel> {
    let p: Vec<Vec<f64>> = (0..m)
        .map(|_| {
            let r: Vec<f64> = (0..m).map(|_| rng.random::<f64>() + 1e-3).collect();
            let s: f64 = r.iter().sum();
            r.into_iter().map(|v| v / s).collect()
        })
        .collect();
    let mut nu = vec![0.0; m];
    nu[0] = 1.0;
    DenseKernel::new(p, vec![1.0 / m as f64; m], nu)
}

/// Lazy walk on the `m`-cycle.
pub fn lazy_cycle(m: usize) -> interlacement::Result<DenseKernel> {
    let p = (0..m)
        .map(|x| {
            let mut r = vec![0.0; m];
            r[x] += 0.5;
            r[(x + 1) % m] += 0.25;
            r[(x + m - 1) % m] += 0.25;
            r
        })
        .collect();
    DenseKernel::new(p, vec![1.0 / m as f64; m], vec![1.0 / m as f64; m])
}

/// One row of the Chernov table.
#[derive(Debug, Clone, PartialEq)]
pub struct TailRow {
    pub chain: usize,
    pub states: usize,
    pub n: usize,
    pub gamma: f64,
    pub bound: f64,
    pub frequency: f64,
}

/// Empirical tails against the discrete bound, for every chain and grid point
/// where the bound is below one.
pub fn chernov_table(cfg: &ExperimentConfig) -> interlacement::Result<Vec<TailRow>> {
    let mut rows = Vec::new();
    for c in 0..cfg.chains {
        let mut r = rng::stream(cfg.seed, rng::domain::AUX | c as u64);
        let m = r.random_range(2..=cfg.max_states);
        let k = random_chain(m, &mut r)?;
        let t_mix = k.mixing_time(MixingMethod::Exact, MIXING_CAP)?;
        let pi = k.pi_vec().to_vec();
        let f: Vec<f64> = (0..m).map(|x| if x == 0 { 1.0 } else { 0.0 }).collect();
        let sigma2 = pi[0] * (1.0 - pi[0]);
        let pi_star = pi.iter().cloned().fold(f64::INFINITY, f64::min);
        let top = sigma2.min(0.5);
        for gamma in [top, 0.5 * top] {
            for &n in &cfg.n_grid {
                let input = BoundInput { horizon: n as f64, gamma_dev: gamma, sigma2, pi_star, t_mix: t_mix as f64 };
                let b = chernov_discrete(&input)?;
                if b.value >= 1.0 {
                    continue;
                }
                let seed = rng::derive_seed(cfg.seed, (c * 1_000_003 + n) as u64 ^ gamma.to_bits());
                let tail = empirical_tail(&k, &f, n, gamma, cfg.replicas, seed)?;
                rows.push(TailRow { chain: c, states: m, n, gamma, bound: b.value, frequency: tail.frequency });
            }
        }
    }
    Ok(rows)
}

fn coupling_failures(k: &DenseKernel, n: usize, eps: f64, replicas: usize, seed: u64) -> interlacement::Result<f64> {
    let good: Vec<interlacement::Result<bool>> =
        par::map_replicas(replicas, |i| couple_iid(k, n, eps, rng::derive_seed(seed, i as u64)).map(|c| c.good));
    let mut fails = 0usize;
    for g in good {
        fails += (!g?) as usize;
    }
    Ok(fails as f64 / replicas as f64)
}

fn bound_check(cfg: &ExperimentConfig) -> Result<Parts> {
    let mut table = Table::new(&["kind", "chain", "states", "n", "parameter", "frequency", "bound"]);
    let mut assertions = Vec::new();
    let cal = Calibration { c: cfg.calibration_c, big_c: cfg.calibration_big_c };
    let cycle = lazy_cycle(6)?;
    let inputs = [BoundInputs::new(&cycle, cycle.mixing_time(MixingMethod::Exact, MIXING_CAP)?)];
    let eps = cfg.epsilon[0].min(inputs[0].epsilon_max());
    let iid = DenseKernel::iid(vec![1.0 / 6.0; 6], vec![1.0 / 6.0; 6])?;
    let mut cycle_freq = Vec::new();
    let mut iid_fail = 0.0f64;
    let mut worst_ratio = 0.0f64;
    for &n in &cfg.coupling_n_grid {
        let f = coupling_failures(&cycle, n, eps, cfg.replicas, rng::derive_seed(cfg.seed, n as u64))
            .stage("cycle coupling")?;
        let bound = match failure_bound(&inputs, n, eps, cal) {
            Ok(b) => Some(b),
            Err(Error::NotEnoughSteps { .. }) | Err(Error::EpsilonOutOfRange { .. }) => None,
            Err(e) => return Err(e.into()),
        };
        if let Some(b) = bound {
            worst_ratio = worst_ratio.max(f / b);
        }
        table.push(vec![
            "coupling_cycle".into(),
            "0".into(),
            "6".into(),
            n.to_string(),
            fmt(eps),
            fmt(f),
            bound.map(fmt).unwrap_or_else(|| "NA".into()),
        ]);
        cycle_freq.push(f);
        let fi = coupling_failures(&iid, n, eps, cfg.replicas, rng::derive_seed(cfg.seed ^ 1, n as u64))
            .stage("i.i.d. coupling")?;
        iid_fail = iid_fail.max(fi);
        table.push(vec![
            "coupling_iid".into(),
            "0".into(),
            "6".into(),
            n.to_string(),
            fmt(eps),
            fmt(fi),
            "NA".into(),
        ]);
    }
    assertions.push(Assertion::new("iid_never_fails", iid_fail == 0.0, format!("max frequency {iid_fail}")));
    assertions.push(Assertion::new(
        "cycle_failure_non_increasing",
        cycle_freq.windows(2).all(|w| w[1] <= w[0]),
        format!("{cycle_freq:?}"),
    ));
    assertions.push(Assertion::new(
        "coupling_bound_valid",
        worst_ratio <= 1.0,
        format!("largest frequency / bound = {worst_ratio}"),
    ));

    let rows = chernov_table(cfg).stage("chernov")?;
    let mut violations = 0usize;
    let mut tail_ratio = 0.0f64;
    for r in &rows {
        violations += (r.frequency > r.bound) as usize;
        tail_ratio = tail_ratio.max(r.frequency / r.bound);
        table.push(vec![
            "chernov".into(),
            r.chain.to_string(),
            r.states.to_string(),
            r.n.to_string(),
            fmt(r.gamma),
            fmt(r.frequency),
            fmt(r.bound),
        ]);
    }
    assertions.push(Assertion::new(
        "chernov_bound_valid",
        violations == 0,
        format!("{violations} violations over {} grid points", rows.len()),
    ));
    let metrics = json!({
        "calibration": {"c": cal.c, "big_c": cal.big_c},
        "coupling_worst_ratio": worst_ratio,
        "chernov_worst_ratio": tail_ratio,
        "chernov_grid_points": rows.len(),
    });
    Ok((table, metrics, assertions))
}

fn tabulate_potential(cfg: &ExperimentConfig) -> Result<Parts> {
    let mut table = Table::new(&["quantity", "value"]);
    let origin: Point = [0; 6];
    let exact = capacity(cfg.d, &[origin], &Method::Exact).stage("singleton capacity")?;
    let dir = capacity(cfg.d, &[origin], &Method::Dirichlet { radii: DIRICHLET_RADII.to_vec() })
        .stage("singleton capacity")?;
    let green = ZdGreen::new(cfg.d, 4).stage("green function")?;
    let mut e1 = origin;
    e1[0] = 1;
    table.push(vec!["singleton_capacity_exact".into(), fmt(exact.total_mass)]);
    table.push(vec!["singleton_capacity_dirichlet".into(), fmt(dir.total_mass)]);
    table.push(vec!["green_origin".into(), fmt(green.origin())]);
    table.push(vec!["green_neighbor".into(), fmt(green.value(&e1))]);
    let diff = (exact.total_mass - dir.total_mass).abs();
    let mut assertions =
        vec![Assertion::new("capacity_routes_agree", diff <= CAPACITY_TOLERANCE, format!("difference {diff:e}"))];
    let layout = Layout::build(cfg.d, cfg.n, cfg.gamma, cfg.chi).stage("geometry")?;
    let kr = cfg.kill_radius.unwrap_or_else(|| default_kill_radius(&layout));
    let geo = ExcursionGeometry::new(layout, kr).stage("geometry")?;
    let s = geo.space();
    table.push(vec!["box_sites".into(), geo.layout.b.len().to_string()]);
    table.push(vec!["box_boundary".into(), s.nb.to_string()]);
    table.push(vec!["buffer_boundary".into(), s.nd.to_string()]);
    table.push(vec!["cap_b".into(), fmt(geo.cap_b())]);
    table.push(vec!["cap_delta".into(), fmt(geo.cap_delta)]);
    let mass: f64 = geo.eq_delta.iter().sum();
    assertions.push(Assertion::new(
        "relative_capacity_exceeds_capacity",
        geo.cap_delta >= geo.cap_b(),
        format!("{} vs {}", geo.cap_delta, geo.cap_b()),
    ));
    let metrics = json!({
        "singleton_capacity": {"exact": exact.total_mass, "dirichlet": dir.total_mass},
        "cap_b": geo.cap_b(),
        "cap_delta": geo.cap_delta,
        "eq_delta_mass": mass,
    });
    Ok((table, metrics, assertions))
}
