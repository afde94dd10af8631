//! Controlled hidden-Markov-model contract consumed by the filter, the grid
//! oracle, the bound ledger and the planners.
//!
//! A model bundles the transition kernel (sampler + density), the observation
//! likelihood (sampler + density), the initial law, the admissible control
//! set and the stage costs. Noise laws are embedded in the samplers and
//! densities; nothing else ever needs them.

use rand::RngCore;
use thiserror::Error;

use crate::linalg::dist_sq;
use crate::scalar::Real;

/// Admissible control values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ControlSet<R: Real> {
    Unconstrained,
    /// Euclidean ball of the given radius.
    Ball(R),
}

impl<R: Real> ControlSet<R> {
    pub fn contains(&self, u: &[R]) -> bool {
        match self {
            ControlSet::Unconstrained => true,
            ControlSet::Ball(r) => crate::linalg::norm(u) <= *r + R::from_f64_c(1e-9),
        }
    }
}

/// Controlled state-space model with explicit densities.
///
/// All methods must be safe to call concurrently; implementations hold no
/// mutable state and all randomness flows through the passed rng.
pub trait Model<R: Real>: Send + Sync {
    fn state_dim(&self) -> usize;
    fn control_dim(&self) -> usize;
    fn obs_dim(&self) -> usize;

    /// Draws the next state from the transition kernel.
    fn transition_sample(&self, state: &[R], control: &[R], rng: &mut dyn RngCore) -> Vec<R>;
    /// Kernel density K(next | state, control).
    fn transition_density(&self, next: &[R], state: &[R], control: &[R]) -> R;

    /// Draws an observation from the current state.
    fn observation_sample(&self, state: &[R], rng: &mut dyn RngCore) -> Vec<R>;
    /// Likelihood density rho(obs, state).
    fn likelihood(&self, obs: &[R], state: &[R]) -> R;

    fn initial_sample(&self, rng: &mut dyn RngCore) -> Vec<R>;
    fn initial_density(&self, state: &[R]) -> R;

    fn control_set(&self) -> ControlSet<R>;

    /// Control-oriented stage cost, nonnegative.
    fn cost_control(&self, state: &[R], control: &[R]) -> R;

    /// Estimation-oriented stage cost, nonnegative. Defaults to the squared
    /// Euclidean error, the case the near-optimality machinery targets.
    fn cost_estimation(&self, state: &[R], estimate: &[R]) -> R {
        dist_sq(state, estimate)
    }

    /// Per-coordinate region holding effectively all state mass. Quadrature
    /// grids and norm sweeps cover it.
    fn state_support(&self) -> Vec<(R, R)>;

    /// Per-coordinate region holding effectively all observation mass.
    fn obs_support(&self) -> Vec<(R, R)>;

    /// Support of the kernel K(. | state, control). Quadrature grids align
    /// their endpoints with it, which keeps truncated densities integrable
    /// to tight tolerances. Defaults to the whole declared state support.
    fn transition_support(&self, _state: &[R], _control: &[R]) -> Vec<(R, R)> {
        self.state_support()
    }

    /// Support of rho(. , state) in observation space.
    fn likelihood_support(&self, _state: &[R]) -> Vec<(R, R)> {
        self.obs_support()
    }

    /// Noise-free dynamics, when the model can expose them; planners use
    /// this for deterministic rollouts. Default: unavailable.
    fn transition_mode(&self, _state: &[R], _control: &[R]) -> Option<Vec<R>> {
        None
    }
}

/// Boxed models forward every method, so config-selected models plug into
/// the generic filter/oracle/bound machinery.
impl<R: Real> Model<R> for Box<dyn Model<R>> {
    fn state_dim(&self) -> usize {
        (**self).state_dim()
    }
    fn control_dim(&self) -> usize {
        (**self).control_dim()
    }
    fn obs_dim(&self) -> usize {
        (**self).obs_dim()
    }
    fn transition_sample(&self, state: &[R], control: &[R], rng: &mut dyn RngCore) -> Vec<R> {
        (**self).transition_sample(state, control, rng)
    }
    fn transition_density(&self, next: &[R], state: &[R], control: &[R]) -> R {
        (**self).transition_density(next, state, control)
    }
    fn observation_sample(&self, state: &[R], rng: &mut dyn RngCore) -> Vec<R> {
        (**self).observation_sample(state, rng)
    }
    fn likelihood(&self, obs: &[R], state: &[R]) -> R {
        (**self).likelihood(obs, state)
    }
    fn initial_sample(&self, rng: &mut dyn RngCore) -> Vec<R> {
        (**self).initial_sample(rng)
    }
    fn initial_density(&self, state: &[R]) -> R {
        (**self).initial_density(state)
    }
    fn control_set(&self) -> ControlSet<R> {
        (**self).control_set()
    }
    fn cost_control(&self, state: &[R], control: &[R]) -> R {
        (**self).cost_control(state, control)
    }
    fn cost_estimation(&self, state: &[R], estimate: &[R]) -> R {
        (**self).cost_estimation(state, estimate)
    }
    fn state_support(&self) -> Vec<(R, R)> {
        (**self).state_support()
    }
    fn obs_support(&self) -> Vec<(R, R)> {
        (**self).obs_support()
    }
    fn transition_support(&self, state: &[R], control: &[R]) -> Vec<(R, R)> {
        (**self).transition_support(state, control)
    }
    fn likelihood_support(&self, state: &[R]) -> Vec<(R, R)> {
        (**self).likelihood_support(state)
    }
    fn transition_mode(&self, state: &[R], control: &[R]) -> Option<Vec<R>> {
        (**self).transition_mode(state, control)
    }
}

/// Observation/control history I_k = (Y_0, U_0, ..., Y_{k-1}, U_{k-1}, Y_k).
#[derive(Debug, Clone, PartialEq)]
pub struct History<R: Real> {
    pub observations: Vec<Vec<R>>,
    pub controls: Vec<Vec<R>>,
}

impl<R: Real> History<R> {
    pub fn new(first_obs: Vec<R>) -> Self {
        Self { observations: vec![first_obs], controls: Vec::new() }
    }

    /// Current time index k.
    pub fn len(&self) -> usize {
        debug_assert_eq!(self.observations.len(), self.controls.len() + 1);
        self.controls.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn push(&mut self, control: Vec<R>, observation: Vec<R>) {
        self.controls.push(control);
        self.observations.push(observation);
    }
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("non-finite density value in check '{check}' at node {node:?}")]
    NonFiniteDensity { check: String, node: Vec<f64> },
    #[error("model validation only runs on 1-D test models (state_dim = {0})")]
    UnsupportedDimension(usize),
}

/// Regular 1-D quadrature grid.
#[derive(Debug, Clone, Copy)]
pub struct Grid1<R: Real> {
    pub lo: R,
    pub hi: R,
    pub nodes: usize,
}

impl<R: Real> Grid1<R> {
    pub fn new(lo: R, hi: R, nodes: usize) -> Self {
        assert!(nodes >= 2 && hi > lo);
        Self { lo, hi, nodes }
    }

    pub fn step(&self) -> R {
        (self.hi - self.lo) / R::from_f64_c((self.nodes - 1) as f64)
    }

    pub fn points(&self) -> impl Iterator<Item = R> + '_ {
        let h = self.step();
        (0..self.nodes).map(move |i| self.lo + h * R::from_f64_c(i as f64))
    }

    /// Trapezoid quadrature of `f` over the grid.
    pub fn integrate<F: Fn(R) -> R>(&self, f: F) -> R {
        let h = self.step();
        let mut acc = R::zero();
        for (i, x) in self.points().enumerate() {
            let w = if i == 0 || i == self.nodes - 1 {
                R::from_f64_c(0.5)
            } else {
                R::one()
            };
            acc += w * f(x);
        }
        acc * h
    }
}

#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: String,
    pub defect: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Default)]
pub struct ValidationReport {
    pub checks: Vec<CheckResult>,
}

impl ValidationReport {
    pub fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

pub const DENSITY_DEFECT_TOL: f64 = 1e-6;

/// Checks that the transition kernel, likelihood and initial density of a
/// 1-D model integrate to one over the declared support.
pub fn validate_model<R: Real, M: Model<R>>(
    model: &M,
    grid: Grid1<R>,
) -> Result<ValidationReport, ModelError> {
    if model.state_dim() != 1 {
        return Err(ModelError::UnsupportedDimension(model.state_dim()));
    }
    let mut report = ValidationReport::default();
    let (slo, shi) = model.state_support()[0];
    let zero_u = vec![R::zero(); model.control_dim()];

    // probe states across the central part of the support, so kernels
    // centered on them keep their mass inside the declared region
    let probes: Vec<R> = (0..5)
        .map(|i| slo + (shi - slo) * R::from_f64_c(0.3 + 0.4 * i as f64 / 4.0))
        .collect();

    let mut check = |name: String, defect: R, at: f64| -> Result<(), ModelError> {
        if !defect.is_finite() {
            return Err(ModelError::NonFiniteDensity { check: name, node: vec![at] });
        }
        let d = defect.to_f64_c().abs();
        report.checks.push(CheckResult { name, defect: d, pass: d < DENSITY_DEFECT_TOL });
        Ok(())
    };

    for &x in &probes {
        let (klo, khi) = model.transition_support(&[x], &zero_u)[0];
        let kgrid = Grid1::new(klo, khi, grid.nodes);
        let mass = kgrid.integrate(|z| {
            let v = model.transition_density(&[z], &[x], &zero_u);
            if v.is_finite() { v } else { R::nan() }
        });
        check(format!("transition_density@x={}", x.to_f64_c()), mass - R::one(), x.to_f64_c())?;

        let (llo, lhi) = model.likelihood_support(&[x])[0];
        let lgrid = Grid1::new(llo, lhi, grid.nodes);
        let lmass = lgrid.integrate(|y| model.likelihood(&[y], &[x]));
        check(format!("likelihood@x={}", x.to_f64_c()), lmass - R::one(), x.to_f64_c())?;
    }

    let igrid = Grid1::new(slo, shi, grid.nodes);
    let imass = igrid.integrate(|x| model.initial_density(&[x]));
    check("initial_density".to_string(), imass - R::one(), 0.0)?;

    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::GaussianRandomWalk;

    struct DoubledLikelihood(GaussianRandomWalk<f64>);

    impl Model<f64> for DoubledLikelihood {
        fn state_dim(&self) -> usize {
            1
        }
        fn control_dim(&self) -> usize {
            1
        }
        fn obs_dim(&self) -> usize {
            1
        }
        fn transition_sample(&self, s: &[f64], u: &[f64], rng: &mut dyn RngCore) -> Vec<f64> {
            self.0.transition_sample(s, u, rng)
        }
        fn transition_density(&self, n: &[f64], s: &[f64], u: &[f64]) -> f64 {
            self.0.transition_density(n, s, u)
        }
        fn observation_sample(&self, s: &[f64], rng: &mut dyn RngCore) -> Vec<f64> {
            self.0.observation_sample(s, rng)
        }
        fn likelihood(&self, y: &[f64], s: &[f64]) -> f64 {
            2.0 * self.0.likelihood(y, s)
        }
        fn initial_sample(&self, rng: &mut dyn RngCore) -> Vec<f64> {
            self.0.initial_sample(rng)
        }
        fn initial_density(&self, s: &[f64]) -> f64 {
            self.0.initial_density(s)
        }
        fn control_set(&self) -> ControlSet<f64> {
            self.0.control_set()
        }
        fn cost_control(&self, s: &[f64], u: &[f64]) -> f64 {
            self.0.cost_control(s, u)
        }
        fn state_support(&self) -> Vec<(f64, f64)> {
            self.0.state_support()
        }
        fn obs_support(&self) -> Vec<(f64, f64)> {
            self.0.obs_support()
        }
    }

    #[test]
    fn gaussian_walk_validates() {
        let m = GaussianRandomWalk::standard();
        let grid = Grid1::new(-10.0, 10.0, 2001);
        let report = validate_model(&m, grid).unwrap();
        assert!(report.pass(), "{:?}", report.checks);
    }

    #[test]
    fn doubled_likelihood_fails_with_unit_defect() {
        let m = DoubledLikelihood(GaussianRandomWalk::standard());
        let grid = Grid1::new(-10.0, 10.0, 2001);
        let report = validate_model(&m, grid).unwrap();
        assert!(!report.pass());
        let worst = report
            .checks
            .iter()
            .filter(|c| c.name.starts_with("likelihood"))
            .map(|c| c.defect)
            .fold(0.0f64, f64::max);
        assert!((worst - 1.0).abs() < 1e-3, "defect {worst}");
    }

    #[test]
    fn history_layout() {
        let mut h = History::new(vec![0.0]);
        assert_eq!(h.len(), 0);
        h.push(vec![1.0], vec![0.5]);
        assert_eq!(h.len(), 1);
        assert_eq!(h.observations.len(), 2);
    }
}
