//! Deterministic point-mass (grid) filter: the ground-truth oracle for the
//! conditional law, the conditional mean and the optimal MSE on 1-D and 2-D
//! models, plus a closed-form 1-D Kalman filter used to cross-check it, and
//! an outer Monte Carlo estimator of the total MSE.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::model::{Grid1, Model};
use crate::scalar::Real;
use crate::seed::derive_seed;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("total grid mass underflow ({0:.3e}); widen the grid or its support")]
    MassUnderflow(f64),
    #[error("posterior is identically zero: observation outside model support")]
    ZeroPosterior,
    #[error("grid oracle supports 1 or 2 hidden dimensions, got {0}")]
    UnsupportedDimension(usize),
}

/// Probability masses on a fixed regular grid of state nodes.
///
/// Nodes are stored flat, `dim` coordinates per node; masses sum to one.
#[derive(Debug, Clone)]
pub struct GridDistribution<R: Real> {
    nodes: Vec<R>,
    masses: Vec<R>,
    dim: usize,
    pub cell_volume: R,
}

const MASS_UNDERFLOW_TOL: f64 = 1e-300;

impl<R: Real> GridDistribution<R> {
    /// Tensor grid over the given axes with masses proportional to `f`.
    pub fn from_density(
        axes: &[Grid1<R>],
        f: impl Fn(&[R]) -> R,
    ) -> Result<Self, OracleError> {
        if axes.is_empty() || axes.len() > 2 {
            return Err(OracleError::UnsupportedDimension(axes.len()));
        }
        let dim = axes.len();
        let mut nodes = Vec::new();
        let mut cell_volume = R::one();
        for a in axes {
            cell_volume *= a.step();
        }
        match axes {
            [ax] => {
                for x in ax.points() {
                    nodes.push(x);
                }
            }
            [ax, ay] => {
                for x in ax.points() {
                    for y in ay.points() {
                        nodes.push(x);
                        nodes.push(y);
                    }
                }
            }
            _ => unreachable!(),
        }
        let n = nodes.len() / dim;
        let masses: Vec<R> = (0..n).map(|i| f(&nodes[i * dim..(i + 1) * dim])).collect();
        let mut d = Self { nodes, masses, dim, cell_volume };
        d.normalize()?;
        Ok(d)
    }

    /// Grid matched to the model's declared state support.
    pub fn from_initial<M: Model<R>>(model: &M, nodes_per_axis: usize) -> Result<Self, OracleError> {
        let support = model.state_support();
        if support.len() > 2 {
            return Err(OracleError::UnsupportedDimension(support.len()));
        }
        let axes: Vec<Grid1<R>> =
            support.iter().map(|&(lo, hi)| Grid1::new(lo, hi, nodes_per_axis)).collect();
        Self::from_density(&axes, |x| model.initial_density(x))
    }

    pub fn from_parts(nodes: Vec<R>, masses: Vec<R>, dim: usize, cell_volume: R) -> Self {
        assert_eq!(nodes.len(), masses.len() * dim);
        let mut d = Self { nodes, masses, dim, cell_volume };
        d.normalize().expect("from_parts requires positive total mass");
        d
    }

    pub fn len(&self) -> usize {
        self.masses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masses.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn node(&self, i: usize) -> &[R] {
        &self.nodes[i * self.dim..(i + 1) * self.dim]
    }

    pub fn mass(&self, i: usize) -> R {
        self.masses[i]
    }

    fn normalize(&mut self) -> Result<(), OracleError> {
        let total: R = self.masses.iter().copied().sum();
        if !total.is_finite() || total.to_f64_c() < MASS_UNDERFLOW_TOL {
            return Err(OracleError::MassUnderflow(total.to_f64_c()));
        }
        for m in &mut self.masses {
            *m /= total;
        }
        Ok(())
    }

    /// <dist, f>
    pub fn expect(&self, f: impl Fn(&[R]) -> R) -> R {
        (0..self.len()).map(|i| self.masses[i] * f(self.node(i))).sum()
    }

    pub fn mean(&self) -> Vec<R> {
        let mut m = vec![R::zero(); self.dim];
        for i in 0..self.len() {
            crate::linalg::axpy(&mut m, self.masses[i], self.node(i));
        }
        m
    }

    /// Conditional mean and the optimal MSE it attains,
    /// e* = <dist, ||x - mean||^2>.
    pub fn conditional_mse(&self) -> (Vec<R>, R) {
        let mean = self.mean();
        let e = self.expect(|x| crate::linalg::dist_sq(x, &mean));
        (mean, e)
    }

    /// Draws a node index according to the masses.
    pub fn sample_index(&self, rng: &mut dyn RngCore) -> usize {
        let u = R::uniform(rng, R::zero(), R::one());
        let mut cum = R::zero();
        for i in 0..self.len() {
            cum += self.masses[i];
            if cum >= u {
                return i;
            }
        }
        self.len() - 1
    }
}

/// Prediction half of the exact filtering recursion on the grid:
/// masses'(z) ∝ Σ_x K(z | x, u) masses(x).
pub fn grid_predict<R: Real, M: Model<R>>(
    dist: &GridDistribution<R>,
    model: &M,
    control: &[R],
) -> Result<GridDistribution<R>, OracleError> {
    let n = dist.len();
    let masses: Vec<R> = (0..n)
        .into_par_iter()
        .map(|j| {
            let z = dist.node(j);
            (0..n)
                .map(|i| model.transition_density(z, dist.node(i), control) * dist.mass(i))
                .sum()
        })
        .collect();
    let mut out = GridDistribution {
        nodes: dist.nodes.clone(),
        masses,
        dim: dist.dim,
        cell_volume: dist.cell_volume,
    };
    out.normalize()?;
    Ok(out)
}

/// Correction half: masses'(x) ∝ rho(y, x) masses(x).
pub fn grid_correct<R: Real, M: Model<R>>(
    dist: &GridDistribution<R>,
    model: &M,
    obs: &[R],
) -> Result<GridDistribution<R>, OracleError> {
    let masses: Vec<R> =
        (0..dist.len()).map(|i| model.likelihood(obs, dist.node(i)) * dist.mass(i)).collect();
    let total: R = masses.iter().copied().sum();
    if total <= R::zero() {
        return Err(OracleError::ZeroPosterior);
    }
    let mut out = GridDistribution {
        nodes: dist.nodes.clone(),
        masses,
        dim: dist.dim,
        cell_volume: dist.cell_volume,
    };
    out.normalize()?;
    Ok(out)
}

/// One-dimensional Kalman filter, closed form; independent oracle for the
/// linear-Gaussian model.
#[derive(Debug, Clone, Copy)]
pub struct Kalman1d {
    pub mean: f64,
    pub var: f64,
}

impl Kalman1d {
    pub fn new(m0: f64, p0_var: f64) -> Self {
        Self { mean: m0, var: p0_var }
    }

    pub fn predict(&mut self, a: f64, b: f64, u: f64, q_var: f64) {
        self.mean = a * self.mean + b * u;
        self.var = a * a * self.var + q_var;
    }

    pub fn update(&mut self, y: f64, r_var: f64) {
        let k = self.var / (self.var + r_var);
        self.mean += k * (y - self.mean);
        self.var *= 1.0 - k;
    }
}

/// A causal state estimator driven by the observation/control stream.
pub trait SequentialEstimator<R: Real>: Send {
    /// Consumes the observation at the next time index (preceded by
    /// `prev_control` for k >= 1) and returns the state estimate.
    fn step(
        &mut self,
        obs: &[R],
        prev_control: Option<&[R]>,
        rng: &mut dyn RngCore,
    ) -> anyhow::Result<Vec<R>>;
}

/// Total-MSE estimate per time step from independent simulated trajectories.
#[derive(Debug, Clone)]
pub struct TotalMse {
    /// Mean squared error at each k, averaged over surviving trials.
    pub mean: Vec<f64>,
    /// Standard error of that mean.
    pub se: Vec<f64>,
    pub trials_used: usize,
    pub trials_failed: usize,
}

/// Simulates `trials` independent closed trajectories under the fixed
/// control sequence and measures E||X_k - estimate_k||^2 for each k.
///
/// Trial t draws its truth and estimator rng streams from
/// (base_seed, "truth"/"estimator", t), so the set of trials is
/// reproducible and order-independent.
pub fn total_mse_monte_carlo<R, M, F>(
    model: &M,
    controls: &[Vec<R>],
    trials: usize,
    base_seed: u64,
    make_estimator: F,
) -> TotalMse
where
    R: Real,
    M: Model<R>,
    F: Fn(u64) -> Box<dyn SequentialEstimator<R>> + Sync,
{
    let steps = controls.len() + 1;
    let per_trial: Vec<Option<Vec<f64>>> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut truth_rng = ChaCha12Rng::seed_from_u64(derive_seed(base_seed, "truth", t as u64));
            let mut est_rng =
                ChaCha12Rng::seed_from_u64(derive_seed(base_seed, "estimator", t as u64));
            let mut est = make_estimator(t as u64);
            let mut x = model.initial_sample(&mut truth_rng);
            let mut errs = Vec::with_capacity(steps);
            for k in 0..steps {
                let prev = if k == 0 { None } else { Some(controls[k - 1].as_slice()) };
                if let Some(u) = prev {
                    x = model.transition_sample(&x, u, &mut truth_rng);
                }
                let y = model.observation_sample(&x, &mut truth_rng);
                match est.step(&y, prev, &mut est_rng) {
                    Ok(xh) => errs.push(crate::linalg::dist_sq(&x, &xh).to_f64_c()),
                    Err(_) => return None,
                }
            }
            Some(errs)
        })
        .collect();

    let used: Vec<&Vec<f64>> = per_trial.iter().flatten().collect();
    let failed = trials - used.len();
    let n = used.len().max(1) as f64;
    let mut mean = vec![0.0; steps];
    let mut se = vec![0.0; steps];
    for k in 0..steps {
        let m = used.iter().map(|e| e[k]).sum::<f64>() / n;
        let var = used.iter().map(|e| (e[k] - m).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
        mean[k] = m;
        se[k] = (var / n).sqrt();
    }
    TotalMse { mean, se, trials_used: used.len(), trials_failed: failed }
}
