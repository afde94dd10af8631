//! Scenario-based open-loop MPC with an additive information cost.
//!
//! The planner scores finite-horizon control plans against a belief cloud:
//! each scenario propagates the cloud through the plan (predict only, no
//! observation feedback) and accumulates the discounted control stage cost
//! plus an information term weighted by `info_weight`. With zero weight this
//! reduces to a plain stochastic MPC; the certainty-equivalent baseline
//! additionally collapses the cloud to its point estimate and uses the
//! noise-free dynamics.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::filter::{ParticleSet, Stage};
use crate::linalg::{norm, project_ball};
use crate::model::{ControlSet, Model};
use crate::scalar::Real;
use crate::seed::derive_seed;
use crate::terrain::TerrainMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    RandomShooting,
    CrossEntropy,
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct DualMpcConfig {
    /// Plan length H >= 1.
    pub horizon: usize,
    /// Discount factor in (0, 1].
    pub discount: f64,
    /// Scenario rollouts per candidate plan, S >= 1.
    pub scenario_count: usize,
    /// Candidate plans per optimizer batch.
    pub candidate_count: usize,
    /// Information-cost weight lambda >= 0; 0 is the non-dual baseline.
    pub info_weight: f64,
    pub optimizer: Optimizer,
    /// Cross-entropy refinement rounds (cross_entropy only).
    pub ce_iterations: usize,
    /// Elite fraction in (0, 1] (cross_entropy only).
    pub ce_elite_fraction: f64,
    /// When false, rollouts use the model's noise-free dynamics; the model
    /// must expose them.
    pub scenario_noise: bool,
}

impl DualMpcConfig {
    pub fn new(horizon: usize) -> Self {
        Self {
            horizon,
            discount: 1.0,
            scenario_count: 8,
            candidate_count: 64,
            info_weight: 0.0,
            optimizer: Optimizer::RandomShooting,
            ce_iterations: 4,
            ce_elite_fraction: 0.25,
            scenario_noise: true,
        }
    }

    pub fn validate(&self) -> Result<(), DualError> {
        let ok = self.horizon >= 1
            && self.discount > 0.0
            && self.discount <= 1.0
            && self.scenario_count >= 1
            && self.candidate_count >= 1
            && self.info_weight >= 0.0
            && (self.optimizer != Optimizer::CrossEntropy
                || (self.ce_iterations >= 1
                    && self.ce_elite_fraction > 0.0
                    && self.ce_elite_fraction <= 1.0));
        if ok {
            Ok(())
        } else {
            Err(DualError::InvalidConfig(format!("{self:?}")))
        }
    }
}

/// Information measure evaluated on a belief cloud.
#[derive(Debug, Clone, Copy, PartialEq, Default, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InfoCostSpec {
    /// No information term; always 0.
    #[default]
    None,
    /// Weighted variance trace over the first `pos_dims` coordinates
    /// (all coordinates when unset) — the exact minimal squared-error
    /// estimation cost of the cloud.
    PosteriorTrace { pos_dims: Option<usize> },
    /// Mean over particles of 1 / (eps_g + |terrain gradient|^2): cheap
    /// a-priori surrogate favoring informative (high-gradient) terrain.
    TerrainGradientDeficit { eps_g: f64 },
}

#[derive(Debug, Error)]
pub enum DualError {
    #[error("invalid planner configuration: {0}")]
    InvalidConfig(String),
    #[error("terrain map required for the gradient-deficit information cost")]
    TerrainRequired,
    #[error("gradient-deficit information cost needs >= 2 state dims, got {0}")]
    BadStateDim(usize),
    #[error("non-finite plan cost in scenario {scenario}, step {step}")]
    NonFiniteCost { scenario: usize, step: usize },
    #[error("noise-free rollouts requested but the model exposes no deterministic dynamics")]
    DeterministicDynamicsUnavailable,
    #[error("no candidate plan evaluated to a finite cost")]
    NoFiniteCandidate,
    #[error("terrain error: {0}")]
    Terrain(#[from] crate::terrain::TerrainError),
    #[error("filter error: {0}")]
    Filter(#[from] crate::filter::FilterError),
}

/// Information-cost value plus the number of terrain queries that fell
/// outside the map footprint and were clamped to its boundary.
#[derive(Debug, Clone, Copy)]
pub struct InfoCost {
    pub value: f64,
    pub clamped_queries: usize,
}

fn info_cost_raw(
    positions: &[f64],
    weights: &[f64],
    dim: usize,
    spec: InfoCostSpec,
    terrain: Option<&TerrainMap>,
) -> Result<InfoCost, DualError> {
    let n = weights.len();
    match spec {
        InfoCostSpec::None => Ok(InfoCost { value: 0.0, clamped_queries: 0 }),
        InfoCostSpec::PosteriorTrace { pos_dims } => {
            let p = pos_dims.unwrap_or(dim).min(dim);
            let mut mean = vec![0.0; p];
            for i in 0..n {
                for d in 0..p {
                    mean[d] += weights[i] * positions[i * dim + d];
                }
            }
            let mut trace = 0.0;
            for i in 0..n {
                for d in 0..p {
                    let r = positions[i * dim + d] - mean[d];
                    trace += weights[i] * r * r;
                }
            }
            Ok(InfoCost { value: trace, clamped_queries: 0 })
        }
        InfoCostSpec::TerrainGradientDeficit { eps_g } => {
            let map = terrain.ok_or(DualError::TerrainRequired)?;
            if dim < 2 {
                return Err(DualError::BadStateDim(dim));
            }
            let mut value = 0.0;
            let mut clamped = 0;
            for i in 0..n {
                let s = map.sample(positions[i * dim], positions[i * dim + 1])?;
                if s.clamped {
                    clamped += 1;
                }
                let g2 = s.gradient[0] * s.gradient[0] + s.gradient[1] * s.gradient[1];
                value += weights[i] / (eps_g + g2);
            }
            Ok(InfoCost { value, clamped_queries: clamped })
        }
    }
}

/// Information cost of a belief cloud under `spec`.
pub fn info_cost(
    cloud: &ParticleSet<f64>,
    spec: InfoCostSpec,
    terrain: Option<&TerrainMap>,
) -> Result<InfoCost, DualError> {
    let dim = cloud.dim();
    let positions: Vec<f64> = (0..cloud.len()).flat_map(|i| cloud.position(i).to_vec()).collect();
    info_cost_raw(&positions, cloud.weights(), dim, spec, terrain)
}

/// Cost of one candidate plan plus rollout bookkeeping.
#[derive(Debug, Clone, Copy)]
pub struct PlanCost {
    pub cost: f64,
    pub clamped_queries: usize,
}

fn propagate<M: Model<f64>>(
    model: &M,
    positions: &[f64],
    dim: usize,
    control: &[f64],
    noise: bool,
    rng: &mut dyn RngCore,
) -> Result<Vec<f64>, DualError> {
    let mut next = Vec::with_capacity(positions.len());
    for chunk in positions.chunks_exact(dim) {
        let x = if noise {
            model.transition_sample(chunk, control, rng)
        } else {
            model
                .transition_mode(chunk, control)
                .ok_or(DualError::DeterministicDynamicsUnavailable)?
        };
        next.extend(x);
    }
    Ok(next)
}

/// Averaged discounted cost of `plan` over scenario rollouts of the cloud.
///
/// Each rollout propagates the cloud open-loop (predict only) through the
/// plan, accumulating discount^t * (mean control stage cost + info_weight *
/// information cost) with the cloud as it stands at step t.
pub fn evaluate_plan<M: Model<f64>>(
    cloud: &ParticleSet<f64>,
    model: &M,
    plan: &[Vec<f64>],
    cfg: &DualMpcConfig,
    info: InfoCostSpec,
    terrain: Option<&TerrainMap>,
    rng: &mut dyn RngCore,
) -> Result<PlanCost, DualError> {
    cfg.validate()?;
    if cloud.stage != Stage::Corrected {
        return Err(DualError::Filter(crate::filter::FilterError::WrongStage {
            expected: Stage::Corrected,
            actual: cloud.stage,
        }));
    }
    let dim = cloud.dim();
    let base: Vec<f64> = (0..cloud.len()).flat_map(|i| cloud.position(i).to_vec()).collect();
    let weights = cloud.weights();
    // noise-free rollouts are identical across scenarios
    let scenarios = if cfg.scenario_noise { cfg.scenario_count } else { 1 };
    let mut total = 0.0;
    let mut clamped = 0;
    for s in 0..scenarios {
        let mut positions = base.clone();
        for (t, u) in plan.iter().enumerate() {
            let stage: f64 = positions
                .chunks_exact(dim)
                .zip(weights)
                .map(|(x, w)| w * model.cost_control(x, u))
                .sum();
            let info_term = if cfg.info_weight > 0.0 {
                let ic = info_cost_raw(&positions, weights, dim, info, terrain)?;
                clamped += ic.clamped_queries;
                ic.value
            } else {
                0.0
            };
            let c = cfg.discount.powi(t as i32) * (stage + cfg.info_weight * info_term);
            if !c.is_finite() {
                return Err(DualError::NonFiniteCost { scenario: s, step: t });
            }
            total += c;
            if t + 1 < plan.len() {
                positions = propagate(model, &positions, dim, u, cfg.scenario_noise, rng)?;
            }
        }
    }
    Ok(PlanCost { cost: total / scenarios as f64, clamped_queries: clamped })
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct PlannerDiagnostics {
    /// Costs of the final candidate batch, in candidate order.
    pub candidate_costs: Vec<f64>,
    /// Index of the winner within that batch.
    pub chosen_index: usize,
    pub best_cost: f64,
    /// Total plan evaluations across optimizer iterations.
    pub evaluations: usize,
    /// Terrain queries clamped to the map boundary across evaluations.
    pub clamped_queries: usize,
}

fn sample_control(set: ControlSet<f64>, dim: usize, rng: &mut dyn RngCore) -> Vec<f64> {
    match set {
        ControlSet::Unconstrained => {
            (0..dim).map(|_| <f64 as Real>::standard_normal(rng)).collect()
        }
        ControlSet::Ball(r) => loop {
            let z: Vec<f64> = (0..dim).map(|_| <f64 as Real>::standard_normal(rng)).collect();
            let n = norm(&z);
            if n > 0.0 {
                let radius = r * <f64 as Real>::uniform(rng, 0.0, 1.0).powf(1.0 / dim as f64);
                return z.iter().map(|v| v * radius / n).collect();
            }
        },
    }
}

/// Evaluates candidate plans in parallel with per-candidate seed streams;
/// candidates whose rollout hits a non-finite cost score infinity.
fn evaluate_candidates<M: Model<f64>>(
    cloud: &ParticleSet<f64>,
    model: &M,
    plans: &[Vec<Vec<f64>>],
    cfg: &DualMpcConfig,
    info: InfoCostSpec,
    terrain: Option<&TerrainMap>,
    batch_seed: u64,
) -> Result<Vec<PlanCost>, DualError> {
    plans
        .par_iter()
        .enumerate()
        .map(|(i, plan)| {
            let mut rng = ChaCha12Rng::seed_from_u64(derive_seed(batch_seed, "candidate", i as u64));
            match evaluate_plan(cloud, model, plan, cfg, info, terrain, &mut rng) {
                Ok(pc) => Ok(pc),
                Err(DualError::NonFiniteCost { .. }) => {
                    Ok(PlanCost { cost: f64::INFINITY, clamped_queries: 0 })
                }
                Err(e) => Err(e),
            }
        })
        .collect()
}

fn argmin(costs: &[PlanCost]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, c) in costs.iter().enumerate() {
        if !c.cost.is_finite() {
            continue;
        }
        // strict comparison: ties resolve to the lowest candidate index
        if best.map_or(true, |b| c.cost < costs[b].cost) {
            best = Some(i);
        }
    }
    best
}

/// Receding-horizon planning step: optimizes the plan cost over candidate
/// control sequences and returns the first control of the winner.
pub fn plan<M: Model<f64>>(
    cloud: &ParticleSet<f64>,
    model: &M,
    cfg: &DualMpcConfig,
    info: InfoCostSpec,
    terrain: Option<&TerrainMap>,
    rng: &mut dyn RngCore,
) -> Result<(Vec<f64>, PlannerDiagnostics), DualError> {
    cfg.validate()?;
    let set = model.control_set();
    let udim = model.control_dim();
    match cfg.optimizer {
        Optimizer::RandomShooting => {
            let plans: Vec<Vec<Vec<f64>>> = (0..cfg.candidate_count)
                .map(|_| (0..cfg.horizon).map(|_| sample_control(set, udim, rng)).collect())
                .collect();
            let batch_seed = rng.next_u64();
            let costs = evaluate_candidates(cloud, model, &plans, cfg, info, terrain, batch_seed)?;
            let chosen = argmin(&costs).ok_or(DualError::NoFiniteCandidate)?;
            let diag = PlannerDiagnostics {
                candidate_costs: costs.iter().map(|c| c.cost).collect(),
                chosen_index: chosen,
                best_cost: costs[chosen].cost,
                evaluations: costs.len(),
                clamped_queries: costs.iter().map(|c| c.clamped_queries).sum(),
            };
            Ok((plans[chosen][0].clone(), diag))
        }
        Optimizer::CrossEntropy => {
            let coords = cfg.horizon * udim;
            let mut mean = vec![0.0f64; coords];
            let init_std = match set {
                ControlSet::Ball(r) => r,
                ControlSet::Unconstrained => 1.0,
            };
            let mut std = vec![init_std; coords];
            let mut best_plan: Option<Vec<Vec<f64>>> = None;
            let mut best_cost = f64::INFINITY;
            let mut last_costs: Vec<f64> = Vec::new();
            let mut last_chosen = 0usize;
            let mut evaluations = 0usize;
            let mut clamped = 0usize;
            for _ in 0..cfg.ce_iterations {
                let plans: Vec<Vec<Vec<f64>>> = (0..cfg.candidate_count)
                    .map(|_| {
                        (0..cfg.horizon)
                            .map(|t| {
                                let u: Vec<f64> = (0..udim)
                                    .map(|d| {
                                        mean[t * udim + d]
                                            + std[t * udim + d]
                                                * <f64 as Real>::standard_normal(rng)
                                    })
                                    .collect();
                                match set {
                                    ControlSet::Ball(r) => project_ball(&u, r),
                                    ControlSet::Unconstrained => u,
                                }
                            })
                            .collect()
                    })
                    .collect();
                let batch_seed = rng.next_u64();
                let costs =
                    evaluate_candidates(cloud, model, &plans, cfg, info, terrain, batch_seed)?;
                evaluations += costs.len();
                clamped += costs.iter().map(|c| c.clamped_queries).sum::<usize>();
                last_costs = costs.iter().map(|c| c.cost).collect();
                if let Some(b) = argmin(&costs) {
                    if costs[b].cost < best_cost {
                        best_cost = costs[b].cost;
                        best_plan = Some(plans[b].clone());
                        last_chosen = b;
                    }
                }
                // refit the sampling law on the elite set
                let mut order: Vec<usize> = (0..plans.len()).collect();
                order.sort_by(|&a, &b| {
                    costs[a].cost.partial_cmp(&costs[b].cost).unwrap_or(std::cmp::Ordering::Equal)
                });
                let elite =
                    ((cfg.ce_elite_fraction * plans.len() as f64).ceil() as usize).clamp(1, plans.len());
                let flat = |p: &Vec<Vec<f64>>, c: usize| p[c / udim][c % udim];
                for c in 0..coords {
                    let m: f64 =
                        order[..elite].iter().map(|&i| flat(&plans[i], c)).sum::<f64>() / elite as f64;
                    let v: f64 = order[..elite]
                        .iter()
                        .map(|&i| (flat(&plans[i], c) - m).powi(2))
                        .sum::<f64>()
                        / elite as f64;
                    mean[c] = m;
                    std[c] = v.sqrt().max(1e-9);
                }
            }
            let plan = best_plan.ok_or(DualError::NoFiniteCandidate)?;
            let diag = PlannerDiagnostics {
                candidate_costs: last_costs,
                chosen_index: last_chosen,
                best_cost,
                evaluations,
                clamped_queries: clamped,
            };
            Ok((plan[0].clone(), diag))
        }
    }
}

/// Non-dual baseline: the same optimizer run on deterministic rollouts from
/// the point estimate, with zero information weight.
pub fn certainty_equivalent_plan<M: Model<f64>>(
    estimate: &[f64],
    model: &M,
    cfg: &DualMpcConfig,
    rng: &mut dyn RngCore,
) -> Result<(Vec<f64>, PlannerDiagnostics), DualError> {
    let dirac = ParticleSet::from_positions(estimate.to_vec(), estimate.len(), Stage::Corrected)?;
    let ce_cfg = DualMpcConfig { info_weight: 0.0, scenario_noise: false, ..cfg.clone() };
    plan(&dirac, model, &ce_cfg, InfoCostSpec::None, None, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::terrain::{generate_map, MapKind};

    /// Deterministic planar single integrator with configurable stage cost.
    struct Planar {
        goal: Option<[f64; 2]>,
        constant_cost: f64,
        noise: f64,
    }

    impl Model<f64> for Planar {
        fn state_dim(&self) -> usize {
            2
        }
        fn control_dim(&self) -> usize {
            2
        }
        fn obs_dim(&self) -> usize {
            2
        }
        fn transition_sample(&self, s: &[f64], u: &[f64], rng: &mut dyn RngCore) -> Vec<f64> {
            let u = project_ball(u, 1.0);
            (0..2)
                .map(|i| s[i] + u[i] + self.noise * <f64 as Real>::standard_normal(rng))
                .collect()
        }
        fn transition_density(&self, _: &[f64], _: &[f64], _: &[f64]) -> f64 {
            1.0
        }
        fn observation_sample(&self, s: &[f64], _: &mut dyn RngCore) -> Vec<f64> {
            s.to_vec()
        }
        fn likelihood(&self, _: &[f64], _: &[f64]) -> f64 {
            1.0
        }
        fn initial_sample(&self, _: &mut dyn RngCore) -> Vec<f64> {
            vec![0.0, 0.0]
        }
        fn initial_density(&self, _: &[f64]) -> f64 {
            1.0
        }
        fn control_set(&self) -> ControlSet<f64> {
            ControlSet::Ball(1.0)
        }
        fn cost_control(&self, s: &[f64], u: &[f64]) -> f64 {
            match self.goal {
                Some(g) => {
                    (s[0] - g[0]).powi(2)
                        + (s[1] - g[1]).powi(2)
                        + 0.01 * (u[0] * u[0] + u[1] * u[1])
                }
                None => self.constant_cost,
            }
        }
        fn state_support(&self) -> Vec<(f64, f64)> {
            vec![(-100.0, 100.0); 2]
        }
        fn obs_support(&self) -> Vec<(f64, f64)> {
            vec![(-100.0, 100.0); 2]
        }
        fn transition_mode(&self, s: &[f64], u: &[f64]) -> Option<Vec<f64>> {
            let u = project_ball(u, 1.0);
            Some(vec![s[0] + u[0], s[1] + u[1]])
        }
    }

    fn rng(seed: u64) -> ChaCha12Rng {
        ChaCha12Rng::seed_from_u64(seed)
    }

    fn dirac(xs: &[f64], dim: usize) -> ParticleSet<f64> {
        ParticleSet::from_positions(xs.to_vec(), dim, Stage::Corrected).unwrap()
    }

    #[test]
    fn posterior_trace_dirac_is_zero() {
        let cloud = dirac(&[3.0, -1.0], 2);
        let ic = info_cost(&cloud, InfoCostSpec::PosteriorTrace { pos_dims: None }, None).unwrap();
        assert_eq!(ic.value, 0.0);
    }

    #[test]
    fn posterior_trace_two_point() {
        let cloud = dirac(&[-1.0, 1.0], 1);
        let ic = info_cost(&cloud, InfoCostSpec::PosteriorTrace { pos_dims: None }, None).unwrap();
        assert!((ic.value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn posterior_trace_restricts_to_position_dims() {
        // coordinate 0 has spread 1, coordinate 1 has spread 4
        let cloud = dirac(&[-1.0, -2.0, 1.0, 2.0], 2);
        let all = info_cost(&cloud, InfoCostSpec::PosteriorTrace { pos_dims: None }, None).unwrap();
        let first =
            info_cost(&cloud, InfoCostSpec::PosteriorTrace { pos_dims: Some(1) }, None).unwrap();
        assert!((all.value - 5.0).abs() < 1e-12);
        assert!((first.value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn posterior_trace_matches_sample_variance() {
        // iid standard normal particles: trace approximates the variance 1
        let mut r = rng(11);
        let n = 50_000;
        let xs: Vec<f64> = (0..n).map(|_| <f64 as Real>::standard_normal(&mut r)).collect();
        let cloud = dirac(&xs, 1);
        let ic = info_cost(&cloud, InfoCostSpec::PosteriorTrace { pos_dims: None }, None).unwrap();
        assert!((ic.value - 1.0).abs() < 3.0 * (2.0 / n as f64).sqrt(), "{}", ic.value);
    }

    #[test]
    fn gradient_deficit_flat_terrain() {
        let flat = crate::terrain::TerrainMap::from_fn([0.0, 0.0], 1.0, 5, 5, |_, _| 0.0).unwrap();
        let cloud = dirac(&[2.0, 2.0, 1.0, 3.0], 2);
        let ic = info_cost(
            &cloud,
            InfoCostSpec::TerrainGradientDeficit { eps_g: 0.1 },
            Some(&flat),
        )
        .unwrap();
        assert!((ic.value - 10.0).abs() < 1e-9);
        assert_eq!(ic.clamped_queries, 0);
    }

    #[test]
    fn gradient_deficit_requires_terrain_and_counts_clamps() {
        let cloud = dirac(&[2.0, 2.0], 2);
        assert!(matches!(
            info_cost(&cloud, InfoCostSpec::TerrainGradientDeficit { eps_g: 0.1 }, None),
            Err(DualError::TerrainRequired)
        ));
        let flat = crate::terrain::TerrainMap::from_fn([0.0, 0.0], 1.0, 5, 5, |_, _| 0.0).unwrap();
        let outside = dirac(&[50.0, 50.0, 2.0, 2.0], 2);
        let ic = info_cost(
            &outside,
            InfoCostSpec::TerrainGradientDeficit { eps_g: 0.1 },
            Some(&flat),
        )
        .unwrap();
        assert_eq!(ic.clamped_queries, 1);
    }

    #[test]
    fn constant_stage_cost_sums_discounts() {
        let m = Planar { goal: None, constant_cost: 1.0, noise: 0.0 };
        let cloud = dirac(&[0.0, 0.0], 2);
        let plan3 = vec![vec![0.1, 0.0]; 3];
        for (alpha, expect) in [(1.0, 3.0), (0.5, 1.75)] {
            let cfg = DualMpcConfig { discount: alpha, ..DualMpcConfig::new(3) };
            let pc = evaluate_plan(
                &cloud,
                &m,
                &plan3,
                &cfg,
                InfoCostSpec::None,
                None,
                &mut rng(0),
            )
            .unwrap();
            assert!((pc.cost - expect).abs() < 1e-12, "alpha {alpha}: {}", pc.cost);
        }
    }

    #[test]
    fn deterministic_rollout_matches_hand_arithmetic() {
        // x' = x + u, stage cost |x - g|^2 + 0.01|u|^2 evaluated before the
        // step. Start (2, 0), goal (0, 0), plan [(-1,0), (-0.5,0)], alpha 0.9:
        //   t=0: 4 + 0.01        (at x=2, u=-1)
        //   t=1: 0.9 * (1 + 0.0025)  (at x=1, u=-0.5)
        let m = Planar { goal: Some([0.0, 0.0]), constant_cost: 0.0, noise: 0.0 };
        let cloud = dirac(&[2.0, 0.0], 2);
        let plan2 = vec![vec![-1.0, 0.0], vec![-0.5, 0.0]];
        let cfg = DualMpcConfig {
            discount: 0.9,
            scenario_noise: false,
            ..DualMpcConfig::new(2)
        };
        let pc =
            evaluate_plan(&cloud, &m, &plan2, &cfg, InfoCostSpec::None, None, &mut rng(0)).unwrap();
        let expect = 4.01 + 0.9 * 1.0025;
        assert!((pc.cost - expect).abs() < 1e-12, "{}", pc.cost);
    }

    #[test]
    fn single_candidate_is_returned() {
        let m = Planar { goal: Some([5.0, 0.0]), constant_cost: 0.0, noise: 0.0 };
        let cloud = dirac(&[0.0, 0.0], 2);
        let cfg = DualMpcConfig {
            candidate_count: 1,
            scenario_noise: false,
            ..DualMpcConfig::new(2)
        };
        let mut r = rng(5);
        let (u, diag) = plan(&cloud, &m, &cfg, InfoCostSpec::None, None, &mut r).unwrap();
        assert_eq!(diag.candidate_costs.len(), 1);
        assert_eq!(diag.chosen_index, 0);
        assert!(norm(&u) <= 1.0 + 1e-9);
    }

    #[test]
    fn chosen_control_points_toward_goal() {
        let m = Planar { goal: Some([5.0, 0.0]), constant_cost: 0.0, noise: 0.0 };
        let cloud = dirac(&[0.0, 0.0], 2);
        let cfg = DualMpcConfig {
            candidate_count: 128,
            horizon: 3,
            scenario_noise: false,
            ..DualMpcConfig::new(3)
        };
        let (u, _) = plan(&cloud, &m, &cfg, InfoCostSpec::None, None, &mut rng(7)).unwrap();
        // goal direction is +x: angle below 90 degrees
        assert!(u[0] > 0.0, "control {u:?}");
    }

    #[test]
    fn certainty_equivalent_is_deterministic_and_saturates() {
        let m = Planar { goal: Some([50.0, 0.0]), constant_cost: 0.0, noise: 0.0 };
        let cfg = DualMpcConfig {
            candidate_count: 256,
            horizon: 2,
            ..DualMpcConfig::new(2)
        };
        let (u1, _) = certainty_equivalent_plan(&[0.0, 0.0], &m, &cfg, &mut rng(9)).unwrap();
        let (u2, _) = certainty_equivalent_plan(&[0.0, 0.0], &m, &cfg, &mut rng(9)).unwrap();
        assert_eq!(u1, u2);
        // far goal: best of 256 uniform ball samples sits near the boundary
        assert!(norm(&u1) > 0.8, "control {u1:?}");
        assert!(u1[0] > 0.0);
    }

    #[test]
    fn certainty_equivalent_at_goal_is_near_zero() {
        let m = Planar { goal: Some([0.0, 0.0]), constant_cost: 0.0, noise: 0.0 };
        let cfg = DualMpcConfig {
            candidate_count: 512,
            horizon: 2,
            ..DualMpcConfig::new(2)
        };
        let (u, _) = certainty_equivalent_plan(&[0.0, 0.0], &m, &cfg, &mut rng(13)).unwrap();
        assert!(norm(&u) < 0.25, "control {u:?}");
    }

    #[test]
    fn lambda_zero_matches_certainty_equivalent_baseline() {
        // Dirac cloud, noise-free rollouts, lambda 0: the full planner and
        // the baseline run the identical optimization.
        let m = Planar { goal: Some([3.0, -2.0]), constant_cost: 0.0, noise: 0.0 };
        let estimate = [1.0, 1.0];
        let cfg = DualMpcConfig {
            candidate_count: 64,
            horizon: 3,
            scenario_noise: false,
            info_weight: 0.0,
            ..DualMpcConfig::new(3)
        };
        let cloud = dirac(&estimate, 2);
        let (u_plan, d_plan) =
            plan(&cloud, &m, &cfg, InfoCostSpec::None, None, &mut rng(21)).unwrap();
        let (u_ce, d_ce) = certainty_equivalent_plan(&estimate, &m, &cfg, &mut rng(21)).unwrap();
        assert_eq!(u_plan, u_ce);
        assert_eq!(d_plan.chosen_index, d_ce.chosen_index);
        assert_eq!(d_plan.candidate_costs, d_ce.candidate_costs);
    }

    #[test]
    fn large_info_weight_prefers_rough_zone() {
        // two-zone map: flat west, rough east. With a large gradient-deficit
        // weight the east-heading plan must cost less than the west-heading
        // one; with zero weight and no goal the two tie.
        let map = generate_map(MapKind::TwoZone, [0.0, 0.0], 1.0, 21, 21, 3).unwrap();
        let m = Planar { goal: None, constant_cost: 0.0, noise: 0.0 };
        let cloud = dirac(&[10.0, 10.0, 9.0, 10.0, 10.0, 9.0], 2);
        let east = vec![vec![1.0, 0.0]; 4];
        let west = vec![vec![-1.0, 0.0]; 4];
        let cfg = DualMpcConfig {
            info_weight: 10.0,
            scenario_noise: false,
            ..DualMpcConfig::new(4)
        };
        let spec = InfoCostSpec::TerrainGradientDeficit { eps_g: 0.1 };
        let ce =
            evaluate_plan(&cloud, &m, &east, &cfg, spec, Some(&map), &mut rng(0)).unwrap();
        let cw =
            evaluate_plan(&cloud, &m, &west, &cfg, spec, Some(&map), &mut rng(0)).unwrap();
        assert!(ce.cost < cw.cost, "east {} west {}", ce.cost, cw.cost);
    }

    #[test]
    fn cross_entropy_beats_or_matches_random_shooting() {
        let m = Planar { goal: Some([4.0, 3.0]), constant_cost: 0.0, noise: 0.0 };
        let cloud = dirac(&[0.0, 0.0], 2);
        let base = DualMpcConfig {
            candidate_count: 32,
            horizon: 4,
            scenario_noise: false,
            ..DualMpcConfig::new(4)
        };
        let rs_cfg = DualMpcConfig { optimizer: Optimizer::RandomShooting, ..base.clone() };
        let ce_cfg = DualMpcConfig {
            optimizer: Optimizer::CrossEntropy,
            ce_iterations: 5,
            ce_elite_fraction: 0.25,
            ..base
        };
        let (_, rs) = plan(&cloud, &m, &rs_cfg, InfoCostSpec::None, None, &mut rng(31)).unwrap();
        let (u, ce) = plan(&cloud, &m, &ce_cfg, InfoCostSpec::None, None, &mut rng(31)).unwrap();
        assert!(ce.best_cost <= rs.best_cost + 1e-9, "ce {} rs {}", ce.best_cost, rs.best_cost);
        // refined plan heads toward the goal quadrant
        assert!(u[0] > 0.0 && u[1] > 0.0, "{u:?}");
    }

    #[test]
    fn noise_off_requires_deterministic_dynamics() {
        struct NoMode;
        impl Model<f64> for NoMode {
            fn state_dim(&self) -> usize {
                1
            }
            fn control_dim(&self) -> usize {
                1
            }
            fn obs_dim(&self) -> usize {
                1
            }
            fn transition_sample(&self, s: &[f64], _: &[f64], _: &mut dyn RngCore) -> Vec<f64> {
                s.to_vec()
            }
            fn transition_density(&self, _: &[f64], _: &[f64], _: &[f64]) -> f64 {
                1.0
            }
            fn observation_sample(&self, s: &[f64], _: &mut dyn RngCore) -> Vec<f64> {
                s.to_vec()
            }
            fn likelihood(&self, _: &[f64], _: &[f64]) -> f64 {
                1.0
            }
            fn initial_sample(&self, _: &mut dyn RngCore) -> Vec<f64> {
                vec![0.0]
            }
            fn initial_density(&self, _: &[f64]) -> f64 {
                1.0
            }
            fn control_set(&self) -> ControlSet<f64> {
                ControlSet::Unconstrained
            }
            fn cost_control(&self, _: &[f64], _: &[f64]) -> f64 {
                0.0
            }
            fn state_support(&self) -> Vec<(f64, f64)> {
                vec![(-1.0, 1.0)]
            }
            fn obs_support(&self) -> Vec<(f64, f64)> {
                vec![(-1.0, 1.0)]
            }
        }
        let cloud = dirac(&[0.0], 1);
        let cfg = DualMpcConfig { scenario_noise: false, ..DualMpcConfig::new(2) };
        let plan2 = vec![vec![0.0]; 2];
        assert!(matches!(
            evaluate_plan(&cloud, &NoMode, &plan2, &cfg, InfoCostSpec::None, None, &mut rng(0)),
            Err(DualError::DeterministicDynamicsUnavailable)
        ));
    }

    #[test]
    fn invalid_configs_rejected() {
        let bad = [
            DualMpcConfig { horizon: 0, ..DualMpcConfig::new(1) },
            DualMpcConfig { discount: 0.0, ..DualMpcConfig::new(1) },
            DualMpcConfig { discount: 1.5, ..DualMpcConfig::new(1) },
            DualMpcConfig { info_weight: -1.0, ..DualMpcConfig::new(1) },
            DualMpcConfig {
                optimizer: Optimizer::CrossEntropy,
                ce_elite_fraction: 0.0,
                ..DualMpcConfig::new(1)
            },
        ];
        for cfg in bad {
            assert!(cfg.validate().is_err(), "{cfg:?}");
        }
        assert!(DualMpcConfig::new(3).validate().is_ok());
    }
}
