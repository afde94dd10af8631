//! Desk-scale benchmark models: a 1-D linear-Gaussian chain, a bounded-noise
//! 1-D chain gentle enough for the uniform-mode thresholds, and a 1-D
//! terrain-slice model with a nonlinear height observation.

use rand::RngCore;

use crate::dist::{normal_pdf, TruncatedNormal};
use crate::model::{ControlSet, Model};
use crate::scalar::Real;

/// x' = a x + b u + xi,  xi ~ N(0, q_std^2);  y = x + eta,  eta ~ N(0, r_std^2).
#[derive(Debug, Clone, Copy)]
pub struct LinearGaussian1d<R: Real> {
    pub a: R,
    pub b: R,
    pub q_std: R,
    pub r_std: R,
    pub m0: R,
    pub p0_std: R,
    pub support: (R, R),
}

impl<R: Real> LinearGaussian1d<R> {
    /// Mean-reverting variant used by the convergence benchmarks.
    pub fn mean_reverting() -> Self {
        Self {
            a: R::from_f64_c(0.9),
            b: R::one(),
            q_std: R::from_f64_c(0.7),
            r_std: R::from_f64_c(0.7),
            m0: R::zero(),
            p0_std: R::one(),
            support: (R::from_f64_c(-10.0), R::from_f64_c(10.0)),
        }
    }
}

/// Unit-coefficient random walk on a wide support.
#[derive(Debug, Clone, Copy)]
pub struct GaussianRandomWalk<R: Real>(pub LinearGaussian1d<R>);

impl<R: Real> GaussianRandomWalk<R> {
    pub fn standard() -> Self {
        Self(LinearGaussian1d {
            a: R::one(),
            b: R::one(),
            q_std: R::one(),
            r_std: R::one(),
            m0: R::zero(),
            p0_std: R::one(),
            support: (R::from_f64_c(-10.0), R::from_f64_c(10.0)),
        })
    }
}

impl<R: Real> Model<R> for LinearGaussian1d<R> {
    fn state_dim(&self) -> usize {
        1
    }
    fn control_dim(&self) -> usize {
        1
    }
    fn obs_dim(&self) -> usize {
        1
    }

    fn transition_sample(&self, s: &[R], u: &[R], rng: &mut dyn RngCore) -> Vec<R> {
        vec![self.a * s[0] + self.b * u[0] + R::standard_normal(rng) * self.q_std]
    }

    fn transition_density(&self, next: &[R], s: &[R], u: &[R]) -> R {
        normal_pdf(next[0], self.a * s[0] + self.b * u[0], self.q_std)
    }

    fn observation_sample(&self, s: &[R], rng: &mut dyn RngCore) -> Vec<R> {
        vec![s[0] + R::standard_normal(rng) * self.r_std]
    }

    fn likelihood(&self, y: &[R], s: &[R]) -> R {
        normal_pdf(y[0], s[0], self.r_std)
    }

    fn initial_sample(&self, rng: &mut dyn RngCore) -> Vec<R> {
        vec![self.m0 + R::standard_normal(rng) * self.p0_std]
    }

    fn initial_density(&self, s: &[R]) -> R {
        normal_pdf(s[0], self.m0, self.p0_std)
    }

    fn control_set(&self) -> ControlSet<R> {
        ControlSet::Unconstrained
    }

    fn cost_control(&self, s: &[R], u: &[R]) -> R {
        s[0] * s[0] + u[0] * u[0]
    }

    fn state_support(&self) -> Vec<(R, R)> {
        vec![self.support]
    }

    fn obs_support(&self) -> Vec<(R, R)> {
        let six = R::from_f64_c(6.0);
        vec![(self.support.0 - six * self.r_std, self.support.1 + six * self.r_std)]
    }

    fn transition_mode(&self, s: &[R], u: &[R]) -> Option<Vec<R>> {
        Some(vec![self.a * s[0] + self.b * u[0]])
    }
}

impl<R: Real> Model<R> for GaussianRandomWalk<R> {
    fn state_dim(&self) -> usize {
        1
    }
    fn control_dim(&self) -> usize {
        1
    }
    fn obs_dim(&self) -> usize {
        1
    }
    fn transition_sample(&self, s: &[R], u: &[R], rng: &mut dyn RngCore) -> Vec<R> {
        self.0.transition_sample(s, u, rng)
    }
    fn transition_density(&self, n: &[R], s: &[R], u: &[R]) -> R {
        self.0.transition_density(n, s, u)
    }
    fn observation_sample(&self, s: &[R], rng: &mut dyn RngCore) -> Vec<R> {
        self.0.observation_sample(s, rng)
    }
    fn likelihood(&self, y: &[R], s: &[R]) -> R {
        self.0.likelihood(y, s)
    }
    fn initial_sample(&self, rng: &mut dyn RngCore) -> Vec<R> {
        self.0.initial_sample(rng)
    }
    fn initial_density(&self, s: &[R]) -> R {
        self.0.initial_density(s)
    }
    fn control_set(&self) -> ControlSet<R> {
        self.0.control_set()
    }
    fn cost_control(&self, s: &[R], u: &[R]) -> R {
        self.0.cost_control(s, u)
    }
    fn state_support(&self) -> Vec<(R, R)> {
        self.0.state_support()
    }
    fn obs_support(&self) -> Vec<(R, R)> {
        self.0.obs_support()
    }
    fn transition_mode(&self, s: &[R], u: &[R]) -> Option<Vec<R>> {
        self.0.transition_mode(s, u)
    }
}

/// Bounded-noise 1-D chain whose sup-norms stay small enough that the
/// uniform-mode particle thresholds are reachable on a workstation.
///
/// Dynamics: x' = a x + xi with xi a wide-sigma truncated Gaussian (nearly
/// uniform on its support). Observation: a mixture channel on the fixed
/// interval [-y_max, y_max] — with probability 1-w the observation is
/// uniform on the whole interval (state-independent), with probability w it
/// is the state plus raised-cosine noise of radius `bump_radius`. The
/// likelihood therefore has the deterministic floor (1-w)/(2 y_max) at
/// every (y, x), so any predicted mean likelihood sits above it and a
/// gamma threshold just below the floor is satisfied with certainty.
#[derive(Debug, Clone, Copy)]
pub struct CalmBounded1d<R: Real> {
    pub a: R,
    pub proc_noise: TruncatedNormal<R>,
    pub init: TruncatedNormal<R>,
    pub mix_w: R,
    pub bump_radius: R,
    y_max: R,
    x_max: R,
}

impl<R: Real> CalmBounded1d<R> {
    pub fn new(a: R, proc_radius: R, bump_radius: R, mix_w: R) -> Self {
        assert!(a >= R::zero() && a < R::one());
        assert!(mix_w > R::zero() && mix_w < R::one());
        let wide = R::from_f64_c(20.0);
        let x_max = proc_radius / (R::one() - a);
        // bump must stay inside the observation interval for every state
        let y_max = x_max + bump_radius + proc_radius * R::from_f64_c(0.1);
        Self {
            a,
            proc_noise: TruncatedNormal::new(proc_radius * wide, proc_radius),
            init: TruncatedNormal::new(x_max * wide, x_max),
            mix_w,
            bump_radius,
            y_max,
            x_max,
        }
    }

    /// Parameters used by the total-MSE sandwich experiment.
    pub fn bench() -> Self {
        Self::new(
            R::from_f64_c(0.05),
            R::from_f64_c(1000.0),
            R::from_f64_c(2000.0),
            R::from_f64_c(0.02),
        )
    }

    pub fn x_max(&self) -> R {
        self.x_max
    }

    pub fn y_max(&self) -> R {
        self.y_max
    }

    /// Deterministic lower bound of the likelihood: the uniform component.
    pub fn rho_floor(&self) -> R {
        (R::one() - self.mix_w) / (R::from_f64_c(2.0) * self.y_max)
    }

    /// Raised-cosine bump density at offset z, integrating to one on its
    /// radius.
    fn bump(&self, z: R) -> R {
        if z.abs() > self.bump_radius {
            R::zero()
        } else {
            let half = R::from_f64_c(0.5);
            (R::one() + (R::PI() * z / self.bump_radius).cos()) * half / self.bump_radius
        }
    }

    fn bump_sample(&self, rng: &mut dyn RngCore) -> R {
        let half = R::from_f64_c(0.5);
        loop {
            let z = R::uniform(rng, -self.bump_radius, self.bump_radius);
            let accept = (R::one() + (R::PI() * z / self.bump_radius).cos()) * half;
            if R::uniform(rng, R::zero(), R::one()) < accept {
                return z;
            }
        }
    }
}

impl<R: Real> Model<R> for CalmBounded1d<R> {
    fn state_dim(&self) -> usize {
        1
    }
    fn control_dim(&self) -> usize {
        1
    }
    fn obs_dim(&self) -> usize {
        1
    }

    fn transition_sample(&self, s: &[R], _u: &[R], rng: &mut dyn RngCore) -> Vec<R> {
        vec![self.a * s[0] + self.proc_noise.sample(rng)]
    }

    fn transition_density(&self, next: &[R], s: &[R], _u: &[R]) -> R {
        self.proc_noise.pdf(next[0] - self.a * s[0])
    }

    fn observation_sample(&self, s: &[R], rng: &mut dyn RngCore) -> Vec<R> {
        if R::uniform(rng, R::zero(), R::one()) < self.mix_w {
            vec![s[0] + self.bump_sample(rng)]
        } else {
            vec![R::uniform(rng, -self.y_max, self.y_max)]
        }
    }

    fn likelihood(&self, y: &[R], s: &[R]) -> R {
        if y[0].abs() > self.y_max {
            R::zero()
        } else {
            self.rho_floor() + self.mix_w * self.bump(y[0] - s[0])
        }
    }

    fn initial_sample(&self, rng: &mut dyn RngCore) -> Vec<R> {
        vec![self.init.sample(rng)]
    }

    fn initial_density(&self, s: &[R]) -> R {
        self.init.pdf(s[0])
    }

    fn control_set(&self) -> ControlSet<R> {
        ControlSet::Unconstrained
    }

    fn cost_control(&self, s: &[R], u: &[R]) -> R {
        s[0] * s[0] + u[0] * u[0]
    }

    fn state_support(&self) -> Vec<(R, R)> {
        vec![(-self.x_max, self.x_max)]
    }

    fn obs_support(&self) -> Vec<(R, R)> {
        vec![(-self.y_max, self.y_max)]
    }

    fn transition_support(&self, state: &[R], _control: &[R]) -> Vec<(R, R)> {
        let c = self.a * state[0];
        vec![(c - self.proc_noise.radius, c + self.proc_noise.radius)]
    }

    fn transition_mode(&self, s: &[R], _u: &[R]) -> Option<Vec<R>> {
        Some(vec![self.a * s[0]])
    }
}

/// One-dimensional terrain slice: position random walk observed through a
/// nonlinear height profile with bounded sensor noise.
#[derive(Debug, Clone, Copy)]
pub struct TanSlice1d<R: Real> {
    pub q_std: R,
    pub obs_noise: TruncatedNormal<R>,
    pub m0: R,
    pub p0_std: R,
    pub amp: R,
    pub freq: R,
    pub slope: R,
    pub support: (R, R),
}

impl<R: Real> TanSlice1d<R> {
    pub fn bench() -> Self {
        Self {
            q_std: R::from_f64_c(0.5),
            obs_noise: TruncatedNormal::new(R::from_f64_c(0.6), R::from_f64_c(2.4)),
            m0: R::zero(),
            p0_std: R::one(),
            amp: R::from_f64_c(1.5),
            freq: R::from_f64_c(0.8),
            slope: R::from_f64_c(0.6),
            support: (R::from_f64_c(-9.0), R::from_f64_c(9.0)),
        }
    }

    pub fn height(&self, x: R) -> R {
        self.amp * (self.freq * x).sin() + self.slope * x
    }
}

impl<R: Real> Model<R> for TanSlice1d<R> {
    fn state_dim(&self) -> usize {
        1
    }
    fn control_dim(&self) -> usize {
        1
    }
    fn obs_dim(&self) -> usize {
        1
    }

    fn transition_sample(&self, s: &[R], u: &[R], rng: &mut dyn RngCore) -> Vec<R> {
        vec![s[0] + u[0] + R::standard_normal(rng) * self.q_std]
    }

    fn transition_density(&self, next: &[R], s: &[R], u: &[R]) -> R {
        normal_pdf(next[0], s[0] + u[0], self.q_std)
    }

    fn observation_sample(&self, s: &[R], rng: &mut dyn RngCore) -> Vec<R> {
        vec![self.height(s[0]) + self.obs_noise.sample(rng)]
    }

    fn likelihood(&self, y: &[R], s: &[R]) -> R {
        self.obs_noise.pdf(y[0] - self.height(s[0]))
    }

    fn initial_sample(&self, rng: &mut dyn RngCore) -> Vec<R> {
        vec![self.m0 + R::standard_normal(rng) * self.p0_std]
    }

    fn initial_density(&self, s: &[R]) -> R {
        normal_pdf(s[0], self.m0, self.p0_std)
    }

    fn control_set(&self) -> ControlSet<R> {
        ControlSet::Ball(R::one())
    }

    fn cost_control(&self, s: &[R], u: &[R]) -> R {
        s[0] * s[0] + u[0] * u[0]
    }

    fn state_support(&self) -> Vec<(R, R)> {
        vec![self.support]
    }

    fn obs_support(&self) -> Vec<(R, R)> {
        // height range over the support plus the noise support
        let h_max = self.amp + self.slope * self.support.1.abs().max(self.support.0.abs());
        let b = h_max + self.obs_noise.radius;
        vec![(-b, b)]
    }

    fn likelihood_support(&self, state: &[R]) -> Vec<(R, R)> {
        let h = self.height(state[0]);
        vec![(h - self.obs_noise.radius, h + self.obs_noise.radius)]
    }

    fn transition_mode(&self, s: &[R], u: &[R]) -> Option<Vec<R>> {
        Some(vec![s[0] + u[0]])
    }
}
