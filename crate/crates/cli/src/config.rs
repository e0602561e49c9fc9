//! Flat `key = value` experiment configuration.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("key `{key}`: cannot parse `{value}`")]
    BadValue { key: String, value: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    PhaseSweep,
    CouplingPipeline,
    BoundCheck,
    TabulatePotential,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::PhaseSweep => "phase-sweep",
            Experiment::CouplingPipeline => "coupling-pipeline",
            Experiment::BoundCheck => "bound-check",
            Experiment::TabulatePotential => "tabulate-potential",
        }
    }
}

impl FromStr for Experiment {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        match s {
            "phase-sweep" => Ok(Experiment::PhaseSweep),
            "coupling-pipeline" => Ok(Experiment::CouplingPipeline),
            "bound-check" => Ok(Experiment::BoundCheck),
            "tabulate-potential" => Ok(Experiment::TabulatePotential),
            _ => Err(()),
        }
    }
}

/// Everything an experiment reads.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub d: usize,
    pub n: usize,
    pub gamma: f64,
    pub chi: f64,
    /// Torus sizes of a phase sweep; empty means `[n]`.
    pub sizes: Vec<usize>,
    pub u: f64,
    pub u_grid: Vec<f64>,
    /// One or more values of `ε`, ascending.
    pub epsilon: Vec<f64>,
    pub beta: f64,
    pub replicas: usize,
    pub seed: u64,
    /// Defaults to `N`.
    pub kill_radius: Option<f64>,
    pub calibration_c: f64,
    pub calibration_big_c: f64,
    /// Constant in the admissibility condition on `ε`.
    pub regime_c: f64,
    /// Step counts of the Chernov part of the bound check.
    pub n_grid: Vec<usize>,
    /// Step counts of the coupling part of the bound check.
    pub coupling_n_grid: Vec<usize>,
    /// Random chains in the bound check.
    pub chains: usize,
    pub max_states: usize,
    pub max_rejections: u64,
    pub output: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            experiment: Experiment::PhaseSweep,
            d: 3,
            n: 36,
            gamma: 0.55,
            chi: 0.1,
            sizes: Vec::new(),
            u: 1.0,
            u_grid: vec![0.0, 1.0, 2.0, 3.0, 4.0, 6.0, 8.0, 10.0],
            epsilon: vec![0.25],
            beta: 0.5,
            replicas: 100,
            seed: 1,
            kill_radius: None,
            calibration_c: 1.0,
            calibration_big_c: 1.0,
            regime_c: 1.0,
            n_grid: vec![20_000, 50_000, 100_000],
            coupling_n_grid: vec![25, 100, 400],
            chains: 50,
            max_states: 8,
            max_rejections: 1 << 24,
            output: PathBuf::from("out"),
        }
    }
}

fn parse_one<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError> {
    value.parse().map_err(|_| ConfigError::BadValue { key: key.into(), value: value.into() })
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>, ConfigError> {
    if value.is_empty() {
        return Ok(Vec::new());
    }
    value.split(',').map(|v| parse_one(key, v.trim())).collect()
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ")
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut c = ExperimentConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| ConfigError::Syntax { line: i + 1, msg: "expected `key = value`".into() })?;
            c.set(key.trim(), value.trim())?;
        }
        c.validate()?;
        Ok(c)
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<(), ConfigError> {
        match key {
            "experiment" => {
                self.experiment = v.parse().map_err(|_| ConfigError::BadValue { key: key.into(), value: v.into() })?
            }
            "d" => self.d = parse_one(key, v)?,
            "n" => self.n = parse_one(key, v)?,
            "gamma" => self.gamma = parse_one(key, v)?,
            "chi" => self.chi = parse_one(key, v)?,
            "sizes" => self.sizes = parse_list(key, v)?,
            "u" => self.u = parse_one(key, v)?,
            "u_grid" => self.u_grid = parse_list(key, v)?,
            "epsilon" => self.epsilon = parse_list(key, v)?,
            "beta" => self.beta = parse_one(key, v)?,
            "replicas" => self.replicas = parse_one(key, v)?,
            "seed" => self.seed = parse_one(key, v)?,
            "kill_radius" => self.kill_radius = if v.is_empty() { None } else { Some(parse_one(key, v)?) },
            "calibration_c" => self.calibration_c = parse_one(key, v)?,
            "calibration_big_c" => self.calibration_big_c = parse_one(key, v)?,
            "regime_c" => self.regime_c = parse_one(key, v)?,
            "n_grid" => self.n_grid = parse_list(key, v)?,
            "coupling_n_grid" => self.coupling_n_grid = parse_list(key, v)?,
            "chains" => self.chains = parse_one(key, v)?,
            "max_states" => self.max_states = parse_one(key, v)?,
            "max_rejections" => self.max_rejections = parse_one(key, v)?,
            "output" => self.output = PathBuf::from(v),
            _ => return Err(ConfigError::UnknownKey(key.into())),
        }
        Ok(())
    }

    /// The file form; `parse(render(c)) == c`.
    pub fn render(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("experiment", self.experiment.name().into());
        kv("d", self.d.to_string());
        kv("n", self.n.to_string());
        kv("gamma", self.gamma.to_string());
        kv("chi", self.chi.to_string());
        kv("sizes", join(&self.sizes));
        kv("u", self.u.to_string());
        kv("u_grid", join(&self.u_grid));
        kv("epsilon", join(&self.epsilon));
        kv("beta", self.beta.to_string());
        kv("replicas", self.replicas.to_string());
        kv("seed", self.seed.to_string());
        kv("kill_radius", self.kill_radius.map(|r| r.to_string()).unwrap_or_default());
        kv("calibration_c", self.calibration_c.to_string());
        kv("calibration_big_c", self.calibration_big_c.to_string());
        kv("regime_c", self.regime_c.to_string());
        kv("n_grid", join(&self.n_grid));
        kv("coupling_n_grid", join(&self.coupling_n_grid));
        kv("chains", self.chains.to_string());
        kv("max_states", self.max_states.to_string());
        kv("max_rejections", self.max_rejections.to_string());
        kv("output", self.output.display().to_string());
        s
    }

    /// Torus sizes to sweep.
    pub fn sweep_sizes(&self) -> Vec<usize> {
        if self.sizes.is_empty() {
            vec![self.n]
        } else {
            self.sizes.clone()
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if !(1..=6).contains(&self.d) {
            return bad(format!("d = {} outside 1..=6", self.d));
        }
        if self.n < 2 || self.sizes.iter().any(|&n| n < 2) {
            return bad("torus sizes must be at least 2".into());
        }
        if self.replicas == 0 {
            return bad("replicas must be positive".into());
        }
        if !(self.u >= 0.0 && self.u.is_finite()) {
            return bad(format!("u = {}", self.u));
        }
        if self.u_grid.is_empty() || self.u_grid.iter().any(|u| !(*u >= 0.0 && u.is_finite())) {
            return bad("u_grid must hold finite nonnegative levels".into());
        }
        if self.u_grid.windows(2).any(|w| w[1] < w[0]) {
            return bad("u_grid must be ascending".into());
        }
        if self.epsilon.is_empty() || self.epsilon.iter().any(|e| !(*e > 0.0 && *e <= 1.0)) {
            return bad("epsilon values must lie in (0, 1]".into());
        }
        if self.epsilon.windows(2).any(|w| w[1] < w[0]) {
            return bad("epsilon must be ascending".into());
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return bad(format!("beta = {}", self.beta));
        }
        if self.kill_radius.is_some_and(|r| r.is_nan() || r <= 0.0) {
            return bad("kill_radius must be positive".into());
        }
        if !(self.calibration_c > 0.0 && self.calibration_big_c > 0.0 && self.regime_c > 0.0) {
            return bad("calibration constants must be positive".into());
        }
        for g in [&self.n_grid, &self.coupling_n_grid] {
            if g.is_empty() || g.windows(2).any(|w| w[1] <= w[0]) {
                return bad("step grids must be nonempty and strictly ascending".into());
            }
        }
        if !(2..=64).contains(&self.max_states) {
            return bad("max_states must lie in 2..=64".into());
        }
        if self.max_rejections == 0 {
            return bad("max_rejections must be positive".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips() {
        let c = ExperimentConfig::default();
        assert_eq!(ExperimentConfig::parse(&c.render()).unwrap(), c);
    }

    #[test]
    fn comments_and_errors() {
        let c = ExperimentConfig::parse("# sweep\nexperiment = bound-check  # trailing\nn = 40\n").unwrap();
        assert_eq!(c.experiment, Experiment::BoundCheck);
        assert_eq!(c.n, 40);
        assert!(matches!(ExperimentConfig::parse("n 40"), Err(ConfigError::Syntax { line: 1, .. })));
        assert!(matches!(ExperimentConfig::parse("colour = red"), Err(ConfigError::UnknownKey(_))));
        assert!(matches!(ExperimentConfig::parse("u_grid = 2, 1"), Err(ConfigError::Invalid(_))));
    }
}
