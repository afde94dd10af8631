//! Sequential Monte Carlo filter with a likelihood-threshold selection step.
//!
//! The filter follows the usual predict / correct / resample cycle, with an
//! intermediate selection step: after prediction, the cloud is accepted only
//! if its weighted mean likelihood under the new observation clears a
//! threshold; otherwise the prediction is redrawn from the previous
//! corrected cloud, up to a configured number of attempts.

use rand::RngCore;
use thiserror::Error;

use crate::model::Model;
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Predicted,
    Corrected,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Resampling {
    Multinomial,
    Systematic,
}

#[derive(Debug, Clone)]
pub struct FilterConfig<R: Real> {
    pub particle_count: usize,
    /// Acceptance level for the selection step (the gamma/2 quantity).
    pub gamma_threshold: R,
    pub max_redraws: usize,
    pub resampling: Resampling,
}

impl<R: Real> FilterConfig<R> {
    pub fn new(particle_count: usize) -> Self {
        Self {
            particle_count,
            gamma_threshold: R::zero(),
            max_redraws: 10,
            resampling: Resampling::Systematic,
        }
    }

    pub fn with_gamma(mut self, gamma_threshold: R) -> Self {
        self.gamma_threshold = gamma_threshold;
        self
    }
}

/// Weighted particle cloud. Positions are stored flat, `dim` per particle.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleSet<R: Real> {
    positions: Vec<R>,
    weights: Vec<R>,
    dim: usize,
    pub stage: Stage,
}

#[derive(Debug, Error)]
pub enum FilterError {
    #[error("non-finite propagated position for particle {index}")]
    NonFinitePosition { index: usize },
    #[error("all particle likelihoods are zero: filter diverged")]
    Divergence,
    #[error("particle cloud must be non-empty")]
    Empty,
    #[error("operation requires stage {expected:?}, cloud is {actual:?}")]
    WrongStage { expected: Stage, actual: Stage },
}

/// Per-step filter diagnostics.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct StepDiagnostics {
    pub mean_pred_likelihood: f64,
    pub redraw_count: usize,
    /// Set when selection exhausted its redraw budget and the best-scoring
    /// cloud was kept anyway.
    pub selection_exhausted: bool,
    /// ESS of the corrected weights, before resampling.
    pub ess_pre_resample: f64,
    /// ESS of the returned cloud (uniform after resampling).
    pub effective_sample_size: f64,
}

impl<R: Real> ParticleSet<R> {
    pub fn from_positions(positions: Vec<R>, dim: usize, stage: Stage) -> Result<Self, FilterError> {
        if positions.is_empty() || dim == 0 || positions.len() % dim != 0 {
            return Err(FilterError::Empty);
        }
        let n = positions.len() / dim;
        let w = R::one() / R::from_f64_c(n as f64);
        Ok(Self { positions, weights: vec![w; n], dim, stage })
    }

    /// Samples an initial corrected-stage cloud from the model's initial law.
    pub fn init<M: Model<R>>(model: &M, n: usize, rng: &mut dyn RngCore) -> Self {
        let dim = model.state_dim();
        let mut positions = Vec::with_capacity(n * dim);
        for _ in 0..n {
            positions.extend(model.initial_sample(rng));
        }
        let w = R::one() / R::from_f64_c(n as f64);
        Self { positions, weights: vec![w; n], dim, stage: Stage::Corrected }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn position(&self, i: usize) -> &[R] {
        &self.positions[i * self.dim..(i + 1) * self.dim]
    }

    pub fn weight(&self, i: usize) -> R {
        self.weights[i]
    }

    pub fn weights(&self) -> &[R] {
        &self.weights
    }

    fn require(&self, expected: Stage) -> Result<(), FilterError> {
        if self.stage == expected {
            Ok(())
        } else {
            Err(FilterError::WrongStage { expected, actual: self.stage })
        }
    }

    /// Propagates every particle through the transition kernel.
    pub fn predict<M: Model<R>>(
        &self,
        model: &M,
        control: &[R],
        rng: &mut dyn RngCore,
    ) -> Result<Self, FilterError> {
        self.require(Stage::Corrected)?;
        let mut positions = Vec::with_capacity(self.positions.len());
        for i in 0..self.len() {
            let next = model.transition_sample(self.position(i), control, rng);
            if next.iter().any(|x| !x.is_finite()) {
                return Err(FilterError::NonFinitePosition { index: i });
            }
            positions.extend(next);
        }
        Ok(Self {
            positions,
            weights: self.weights.clone(),
            dim: self.dim,
            stage: Stage::Predicted,
        })
    }

    /// Weighted mean likelihood of the cloud under `obs`.
    pub fn mean_likelihood<M: Model<R>>(&self, model: &M, obs: &[R]) -> R {
        (0..self.len())
            .map(|i| self.weights[i] * model.likelihood(obs, self.position(i)))
            .sum()
    }

    /// Reweights by the likelihood of `obs` and normalizes.
    pub fn correct<M: Model<R>>(mut self, model: &M, obs: &[R]) -> Result<Self, FilterError> {
        self.require(Stage::Predicted)?;
        let mut total = R::zero();
        for i in 0..self.len() {
            let l = model.likelihood(obs, self.position(i));
            self.weights[i] *= l;
            total += self.weights[i];
        }
        if total <= R::zero() || !total.is_finite() {
            return Err(FilterError::Divergence);
        }
        for w in &mut self.weights {
            *w /= total;
        }
        self.stage = Stage::Corrected;
        Ok(self)
    }

    /// Draws a uniformly weighted cloud from the current weights.
    pub fn resample(
        &self,
        scheme: Resampling,
        rng: &mut dyn RngCore,
    ) -> Result<Self, FilterError> {
        self.require(Stage::Corrected)?;
        let n = self.len();
        let nf = R::from_f64_c(n as f64);
        let mut positions = Vec::with_capacity(self.positions.len());
        match scheme {
            Resampling::Systematic => {
                let u0 = R::uniform(rng, R::zero(), R::one()) / nf;
                let mut cum = self.weights[0];
                let mut i = 0usize;
                for k in 0..n {
                    let target = u0 + R::from_f64_c(k as f64) / nf;
                    while cum < target && i + 1 < n {
                        i += 1;
                        cum += self.weights[i];
                    }
                    positions.extend_from_slice(self.position(i));
                }
            }
            Resampling::Multinomial => {
                for _ in 0..n {
                    let target = R::uniform(rng, R::zero(), R::one());
                    let mut cum = R::zero();
                    let mut chosen = n - 1;
                    for i in 0..n {
                        cum += self.weights[i];
                        if cum >= target {
                            chosen = i;
                            break;
                        }
                    }
                    positions.extend_from_slice(self.position(chosen));
                }
            }
        }
        let w = R::one() / nf;
        Ok(Self { positions, weights: vec![w; n], dim: self.dim, stage: Stage::Corrected })
    }

    /// Weighted mean of the cloud.
    pub fn empirical_mean(&self) -> Vec<R> {
        let mut mean = vec![R::zero(); self.dim];
        for i in 0..self.len() {
            crate::linalg::axpy(&mut mean, self.weights[i], self.position(i));
        }
        mean
    }

    /// Weighted total variance around the empirical mean (trace of the
    /// weighted covariance), over all coordinates.
    pub fn variance_trace(&self) -> R {
        let mean = self.empirical_mean();
        (0..self.len())
            .map(|i| self.weights[i] * crate::linalg::dist_sq(self.position(i), &mean))
            .sum()
    }

    pub fn ess(&self) -> f64 {
        let s: R = self.weights.iter().map(|w| *w * *w).sum();
        1.0 / s.to_f64_c()
    }
}

/// Outcome of the selection step.
#[derive(Debug, Clone, Copy)]
pub struct Selection {
    pub redraw_count: usize,
    pub exhausted: bool,
    pub mean_pred_likelihood: f64,
}

/// Accept-or-redraw selection of a predicted cloud against the threshold.
///
/// `spawn` regenerates a predicted cloud (re-propagation from the previous
/// corrected cloud). If every attempt scores at or below the threshold the
/// best-scoring cloud is returned with `exhausted` set; the caller decides
/// whether that is fatal.
pub fn select<R: Real, M: Model<R>>(
    pf: ParticleSet<R>,
    model: &M,
    obs: &[R],
    cfg: &FilterConfig<R>,
    mut spawn: impl FnMut(&mut dyn RngCore) -> Result<ParticleSet<R>, FilterError>,
    rng: &mut dyn RngCore,
) -> Result<(ParticleSet<R>, Selection), FilterError> {
    pf.require(Stage::Predicted)?;
    let score = pf.mean_likelihood(model, obs);
    if score > cfg.gamma_threshold {
        return Ok((
            pf,
            Selection { redraw_count: 0, exhausted: false, mean_pred_likelihood: score.to_f64_c() },
        ));
    }
    let mut best = pf;
    let mut best_score = score;
    for attempt in 1..=cfg.max_redraws {
        let candidate = spawn(rng)?;
        candidate.require(Stage::Predicted)?;
        let s = candidate.mean_likelihood(model, obs);
        if s > cfg.gamma_threshold {
            return Ok((
                candidate,
                Selection {
                    redraw_count: attempt,
                    exhausted: false,
                    mean_pred_likelihood: s.to_f64_c(),
                },
            ));
        }
        if s > best_score {
            best = candidate;
            best_score = s;
        }
    }
    Ok((
        best,
        Selection {
            redraw_count: cfg.max_redraws,
            exhausted: true,
            mean_pred_likelihood: best_score.to_f64_c(),
        },
    ))
}

/// One full filter cycle: predict, select, correct, resample.
pub fn filter_step<R: Real, M: Model<R>>(
    pf: &ParticleSet<R>,
    model: &M,
    control: &[R],
    obs: &[R],
    cfg: &FilterConfig<R>,
    rng: &mut dyn RngCore,
) -> Result<(ParticleSet<R>, StepDiagnostics), FilterError> {
    pf.require(Stage::Corrected)?;
    let predicted = pf.predict(model, control, rng)?;
    let (selected, sel) =
        select(predicted, model, obs, cfg, |r| pf.predict(model, control, r), rng)?;
    let corrected = selected.correct(model, obs)?;
    let ess_pre = corrected.ess();
    let resampled = corrected.resample(cfg.resampling, rng)?;
    let diag = StepDiagnostics {
        mean_pred_likelihood: sel.mean_pred_likelihood,
        redraw_count: sel.redraw_count,
        selection_exhausted: sel.exhausted,
        ess_pre_resample: ess_pre,
        effective_sample_size: resampled.ess(),
    };
    Ok((resampled, diag))
}
