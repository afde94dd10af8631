//! TOML configuration schema for the harness and CLI, plus builders that
//! turn a parsed config into live model/terrain/filter/planner objects.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dual::{DualMpcConfig, InfoCostSpec, Optimizer};
use crate::filter::{FilterConfig, Resampling};
use crate::model::Model;
use crate::models::{CalmBounded1d, LinearGaussian1d, TanSlice1d};
use crate::tan::{build_tan_model, TanInitial, TanParams, OBS_DIM, STATE_DIM};
use crate::terrain::{generate_map, MapKind, TerrainMap};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelConfig {
    /// 1-D linear-Gaussian chain.
    LinearGaussian {
        #[serde(default = "d_lg_a")]
        a: f64,
        #[serde(default = "d_one")]
        b: f64,
        #[serde(default = "d_lg_std")]
        q_std: f64,
        #[serde(default = "d_lg_std")]
        r_std: f64,
        #[serde(default)]
        m0: f64,
        #[serde(default = "d_one")]
        p0_std: f64,
        #[serde(default = "d_lg_support")]
        support: (f64, f64),
    },
    /// Bounded-noise 1-D chain for the uniform-mode thresholds.
    CalmBounded {
        #[serde(default = "d_cb_a")]
        a: f64,
        #[serde(default = "d_cb_proc")]
        proc_radius: f64,
        #[serde(default = "d_cb_bump")]
        bump_radius: f64,
        #[serde(default = "d_cb_w")]
        mix_w: f64,
    },
    /// 1-D terrain-slice benchmark (fixed bench parameters).
    TanSlice,
    /// Full 6-state terrain-aided navigation model; requires `[terrain]`.
    Tan {
        #[serde(default)]
        params: TanConfig,
        #[serde(default)]
        initial: TanInitialConfig,
    },
}

fn d_one() -> f64 {
    1.0
}
fn d_lg_a() -> f64 {
    0.9
}
fn d_lg_std() -> f64 {
    0.7
}
fn d_lg_support() -> (f64, f64) {
    (-10.0, 10.0)
}
fn d_cb_a() -> f64 {
    0.05
}
fn d_cb_proc() -> f64 {
    1000.0
}
fn d_cb_bump() -> f64 {
    2000.0
}
fn d_cb_w() -> f64 {
    0.02
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig::LinearGaussian {
            a: d_lg_a(),
            b: d_one(),
            q_std: d_lg_std(),
            r_std: d_lg_std(),
            m0: 0.0,
            p0_std: d_one(),
            support: d_lg_support(),
        }
    }
}

/// Serializable mirror of [`TanParams`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TanConfig {
    pub dt: f64,
    pub u_max: f64,
    /// Diagonal of the process covariance (per-coordinate std devs).
    pub q_std: [f64; STATE_DIM],
    pub noise_sigma: [f64; OBS_DIM],
    pub noise_support_radius: Option<f64>,
    pub full_second_order: bool,
    pub alt_range: (f64, f64),
    pub vel_bound: f64,
    pub goal: [f64; 2],
    pub w_goal: f64,
    pub w_control: f64,
}

impl Default for TanConfig {
    fn default() -> Self {
        let p = TanParams::default();
        Self {
            dt: p.dt,
            u_max: p.u_max,
            q_std: [0.4, 0.4, 0.2, 0.3, 0.3, 0.3],
            noise_sigma: p.noise_sigma,
            noise_support_radius: p.noise_support_radius,
            full_second_order: p.full_second_order,
            alt_range: p.alt_range,
            vel_bound: p.vel_bound,
            goal: p.goal,
            w_goal: p.w_goal,
            w_control: p.w_control,
        }
    }
}

impl TanConfig {
    pub fn to_params(&self) -> TanParams {
        let mut q = vec![0.0; STATE_DIM * STATE_DIM];
        for (i, s) in self.q_std.iter().enumerate() {
            q[i * STATE_DIM + i] = s * s;
        }
        TanParams {
            dt: self.dt,
            u_max: self.u_max,
            q,
            noise_sigma: self.noise_sigma,
            noise_support_radius: self.noise_support_radius,
            full_second_order: self.full_second_order,
            alt_range: self.alt_range,
            vel_bound: self.vel_bound,
            goal: self.goal,
            w_goal: self.w_goal,
            w_control: self.w_control,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TanInitialConfig {
    pub mean: [f64; STATE_DIM],
    pub std: [f64; STATE_DIM],
}

impl Default for TanInitialConfig {
    fn default() -> Self {
        Self { mean: [0.0, 0.0, 60.0, 1.0, 0.0, 0.0], std: [5.0, 5.0, 2.0, 0.5, 0.5, 0.2] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TerrainConfig {
    Ramp(TerrainGrid),
    TwoHill(TerrainGrid),
    TwoZone(TerrainGrid),
    /// Load from an ASCII grid file.
    File { path: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TerrainGrid {
    pub origin: [f64; 2],
    pub cell_size: f64,
    pub nrows: usize,
    pub ncols: usize,
    pub seed: u64,
}

impl Default for TerrainGrid {
    fn default() -> Self {
        Self { origin: [-50.0, -50.0], cell_size: 5.0, nrows: 21, ncols: 21, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterSettings {
    pub particles: usize,
    /// Acceptance level for the selection step (the gamma/2 quantity).
    pub gamma_threshold: f64,
    pub max_redraws: usize,
    pub resampling: Resampling,
}

impl Default for FilterSettings {
    fn default() -> Self {
        Self {
            particles: 500,
            gamma_threshold: 0.0,
            max_redraws: 10,
            resampling: Resampling::Systematic,
        }
    }
}

impl FilterSettings {
    pub fn to_filter_config(&self) -> FilterConfig<f64> {
        FilterConfig {
            particle_count: self.particles,
            gamma_threshold: self.gamma_threshold,
            max_redraws: self.max_redraws,
            resampling: self.resampling,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MpcSettings {
    /// When false the closed loop applies zero control.
    pub enabled: bool,
    pub horizon: usize,
    pub discount: f64,
    pub scenario_count: usize,
    pub candidate_count: usize,
    pub info_weight: f64,
    pub optimizer: Optimizer,
    pub ce_iterations: usize,
    pub ce_elite_fraction: f64,
    pub scenario_noise: bool,
}

impl Default for MpcSettings {
    fn default() -> Self {
        let d = DualMpcConfig::new(5);
        Self {
            enabled: false,
            horizon: d.horizon,
            discount: d.discount,
            scenario_count: d.scenario_count,
            candidate_count: d.candidate_count,
            info_weight: d.info_weight,
            optimizer: d.optimizer,
            ce_iterations: d.ce_iterations,
            ce_elite_fraction: d.ce_elite_fraction,
            scenario_noise: d.scenario_noise,
        }
    }
}

impl MpcSettings {
    pub fn to_mpc_config(&self) -> DualMpcConfig {
        DualMpcConfig {
            horizon: self.horizon,
            discount: self.discount,
            scenario_count: self.scenario_count,
            candidate_count: self.candidate_count,
            info_weight: self.info_weight,
            optimizer: self.optimizer,
            ce_iterations: self.ce_iterations,
            ce_elite_fraction: self.ce_elite_fraction,
            scenario_noise: self.scenario_noise,
        }
    }
}

fn d_info_none() -> InfoCostSpec {
    InfoCostSpec::None
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimSettings {
    /// Closed-loop steps per trial.
    pub horizon: usize,
    pub trials: usize,
    pub seed: u64,
    /// Particle counts for the MSE sweep, strictly increasing.
    pub n_sweep: Vec<usize>,
    /// Filter repetitions per sweep point.
    pub sweep_repetitions: usize,
    /// Grid nodes per axis for oracle computations.
    pub grid_nodes: usize,
}

impl Default for SimSettings {
    fn default() -> Self {
        Self {
            horizon: 20,
            trials: 10,
            seed: 1,
            n_sweep: vec![50, 200, 800, 3200],
            sweep_repetitions: 200,
            grid_nodes: 2001,
        }
    }
}

/// Root configuration; every section has defaults, so an empty file is a
/// valid config.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct Config {
    pub model: ModelConfig,
    pub terrain: Option<TerrainConfig>,
    pub filter: FilterSettings,
    pub mpc: MpcSettings,
    #[serde(default = "d_info_none")]
    pub info: InfoCostSpec,
    pub sim: SimSettings,
}

impl Config {
    pub fn from_toml(text: &str) -> anyhow::Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> anyhow::Result<String> {
        Ok(toml::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        anyhow::ensure!(self.filter.particles >= 1, "filter.particles must be >= 1");
        anyhow::ensure!(self.sim.horizon >= 1, "sim.horizon must be >= 1");
        anyhow::ensure!(self.sim.trials >= 1, "sim.trials must be >= 1");
        anyhow::ensure!(
            self.sim.n_sweep.windows(2).all(|w| w[0] < w[1]),
            "sim.n_sweep must be strictly increasing"
        );
        if self.mpc.enabled {
            self.mpc.to_mpc_config().validate().map_err(anyhow::Error::from)?;
        }
        if matches!(self.model, ModelConfig::Tan { .. }) {
            anyhow::ensure!(self.terrain.is_some(), "model.kind = tan requires a [terrain] section");
        }
        Ok(())
    }
}

pub fn build_terrain(cfg: &TerrainConfig) -> anyhow::Result<TerrainMap> {
    let gen = |kind: MapKind, g: &TerrainGrid| {
        generate_map(kind, g.origin, g.cell_size, g.nrows, g.ncols, g.seed)
            .map_err(anyhow::Error::from)
    };
    match cfg {
        TerrainConfig::Ramp(g) => gen(MapKind::Ramp, g),
        TerrainConfig::TwoHill(g) => gen(MapKind::TwoHill, g),
        TerrainConfig::TwoZone(g) => gen(MapKind::TwoZone, g),
        TerrainConfig::File { path } => Ok(TerrainMap::load(Path::new(path))?),
    }
}

/// Instantiates the configured model, plus the terrain map when one is
/// configured (always for the TAN model, optional otherwise so the planner
/// can use terrain-based information costs).
pub fn build_model(cfg: &Config) -> anyhow::Result<(Box<dyn Model<f64>>, Option<TerrainMap>)> {
    cfg.validate()?;
    let terrain = cfg.terrain.as_ref().map(build_terrain).transpose()?;
    let model: Box<dyn Model<f64>> = match &cfg.model {
        ModelConfig::LinearGaussian { a, b, q_std, r_std, m0, p0_std, support } => {
            Box::new(LinearGaussian1d::<f64> {
                a: *a,
                b: *b,
                q_std: *q_std,
                r_std: *r_std,
                m0: *m0,
                p0_std: *p0_std,
                support: *support,
            })
        }
        ModelConfig::CalmBounded { a, proc_radius, bump_radius, mix_w } => {
            Box::new(CalmBounded1d::<f64>::new(*a, *proc_radius, *bump_radius, *mix_w))
        }
        ModelConfig::TanSlice => Box::new(TanSlice1d::<f64>::bench()),
        ModelConfig::Tan { params, initial } => {
            let map = terrain.clone().expect("validated above");
            let init = TanInitial { mean: initial.mean, std: initial.std };
            Box::new(build_tan_model(map, params.to_params(), init)?)
        }
    };
    Ok((model, terrain))
}
