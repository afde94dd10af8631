//! Closed-loop orchestration and Monte Carlo campaigns: truth simulation,
//! filtering, planning, per-step records with bit-exact replay, and the
//! particle-count MSE sweep against the grid oracle.

use std::io::{BufRead, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{self, GammaSpec};
use crate::config::Config;
use crate::dual::{self, InfoCostSpec, PlannerDiagnostics};
use crate::filter::{filter_step, FilterConfig, ParticleSet, Stage, StepDiagnostics};
use crate::linalg::dist_sq;
use crate::model::Model;
use crate::seed::derive_seed;
use crate::terrain::{in_rough_zone, TerrainMap};

/// One closed-loop campaign: the config snapshot plus the live objects
/// built from it.
pub struct Campaign {
    pub config: Config,
    pub model: Box<dyn Model<f64>>,
    pub terrain: Option<TerrainMap>,
}

impl Campaign {
    pub fn from_config(config: Config) -> anyhow::Result<Self> {
        let (model, terrain) = crate::config::build_model(&config)?;
        Ok(Self { config, model, terrain })
    }
}

/// Everything observed at one closed-loop step k: the truth, what the
/// estimator saw and produced, and the control applied at k.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StepRecord {
    pub k: usize,
    pub truth: Vec<f64>,
    pub observation: Vec<f64>,
    pub control: Vec<f64>,
    pub estimate: Vec<f64>,
    pub sq_error: f64,
    /// Filter diagnostics; absent at k = 0 (initialization step).
    pub filter: Option<StepDiagnostics>,
    /// Planner diagnostics; absent when the planner is disabled.
    pub planner: Option<PlannerDiagnostics>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecord {
    pub seed: u64,
    pub trial_index: u64,
    pub config: Config,
    pub steps: Vec<StepRecord>,
    /// Set when the run stopped early (e.g. filter divergence); steps then
    /// cover only the completed prefix.
    pub failure: Option<String>,
}

impl RunRecord {
    /// Line-delimited JSON: a header object, then one object per step.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> anyhow::Result<()> {
        let header = serde_json::json!({
            "seed": self.seed,
            "trial_index": self.trial_index,
            "config": self.config,
            "failure": self.failure,
        });
        writeln!(w, "{}", serde_json::to_string(&header)?)?;
        for s in &self.steps {
            writeln!(w, "{}", serde_json::to_string(s)?)?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> anyhow::Result<Self> {
        let mut lines = r.lines();
        let header: serde_json::Value = serde_json::from_str(
            &lines.next().ok_or_else(|| anyhow::anyhow!("empty run record"))??,
        )?;
        let mut rec = RunRecord {
            seed: header["seed"].as_u64().ok_or_else(|| anyhow::anyhow!("missing seed"))?,
            trial_index: header["trial_index"]
                .as_u64()
                .ok_or_else(|| anyhow::anyhow!("missing trial_index"))?,
            config: serde_json::from_value(header["config"].clone())?,
            steps: Vec::new(),
            failure: serde_json::from_value(header["failure"].clone())?,
        };
        for line in lines {
            rec.steps.push(serde_json::from_str(&line?)?);
        }
        Ok(rec)
    }

    /// Canonical byte serialization used by the replay-determinism checks.
    pub fn to_jsonl_string(&self) -> anyhow::Result<String> {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf)?;
        Ok(String::from_utf8(buf)?)
    }
}

/// Runs one closed-loop trial: simulate truth, observe, filter, estimate,
/// plan, actuate. Deterministic in (config, base seed, trial_index); all
/// three rng streams derive from them.
pub fn run_closed_loop(campaign: &Campaign, trial_index: u64) -> RunRecord {
    let cfg = &campaign.config;
    let model = &campaign.model;
    let base = cfg.sim.seed;
    let mut truth_rng = ChaCha12Rng::seed_from_u64(derive_seed(base, "truth", trial_index));
    let mut filter_rng = ChaCha12Rng::seed_from_u64(derive_seed(base, "filter", trial_index));
    let mut plan_rng = ChaCha12Rng::seed_from_u64(derive_seed(base, "plan", trial_index));

    let fcfg: FilterConfig<f64> = cfg.filter.to_filter_config();
    let mpc = cfg.mpc.enabled.then(|| cfg.mpc.to_mpc_config());
    let info: InfoCostSpec = cfg.info;

    let mut record = RunRecord {
        seed: base,
        trial_index,
        config: cfg.clone(),
        steps: Vec::new(),
        failure: None,
    };

    // k = 0: sample the truth, observe, weight the prior cloud
    let mut x = model.initial_sample(&mut truth_rng);
    let mut cloud = ParticleSet::init(model, fcfg.particle_count, &mut filter_rng);
    let mut control = vec![0.0; model.control_dim()];

    for k in 0..cfg.sim.horizon {
        let y = model.observation_sample(&x, &mut truth_rng);
        let diag = if k == 0 {
            let mut pre = cloud.clone();
            pre.stage = Stage::Predicted;
            match pre
                .correct(model, &y)
                .and_then(|c| c.resample(fcfg.resampling, &mut filter_rng))
            {
                Ok(c) => {
                    cloud = c;
                    None
                }
                Err(e) => {
                    record.failure = Some(format!("step {k}: {e}"));
                    break;
                }
            }
        } else {
            match filter_step(&cloud, model, &control, &y, &fcfg, &mut filter_rng) {
                Ok((c, d)) => {
                    cloud = c;
                    Some(d)
                }
                Err(e) => {
                    record.failure = Some(format!("step {k}: {e}"));
                    break;
                }
            }
        };

        let estimate = cloud.empirical_mean();
        let (next_control, planner) = match &mpc {
            Some(mcfg) => {
                match dual::plan(
                    &cloud,
                    model,
                    mcfg,
                    info,
                    campaign.terrain.as_ref(),
                    &mut plan_rng,
                ) {
                    Ok((u, d)) => (u, Some(d)),
                    Err(e) => {
                        record.failure = Some(format!("step {k}: planner: {e}"));
                        break;
                    }
                }
            }
            None => (vec![0.0; model.control_dim()], None),
        };

        record.steps.push(StepRecord {
            k,
            truth: x.clone(),
            observation: y,
            control: next_control.clone(),
            estimate: estimate.clone(),
            sq_error: dist_sq(&x, &estimate),
            filter: diag,
            planner,
        });

        control = next_control;
        if k + 1 < cfg.sim.horizon {
            x = model.transition_sample(&x, &control, &mut truth_rng);
        }
    }
    record
}

/// Runs `trials` independent closed-loop trials in parallel.
pub fn run_campaign(campaign: &Campaign, trials: usize) -> Vec<RunRecord> {
    (0..trials as u64).into_par_iter().map(|t| run_closed_loop(campaign, t)).collect()
}

/// Fraction of recorded steps whose true planar position lies in the rough
/// (eastern) half of the map.
pub fn rough_zone_occupancy(record: &RunRecord, map: &TerrainMap) -> f64 {
    if record.steps.is_empty() {
        return 0.0;
    }
    let hits = record.steps.iter().filter(|s| in_rough_zone(map, s.truth[0])).count();
    hits as f64 / record.steps.len() as f64
}

#[derive(Debug, Clone, Serialize)]
pub struct CampaignSummary {
    pub trials: usize,
    pub failures: usize,
    pub terminal_sq_error_mean: f64,
    pub terminal_sq_error_se: f64,
    pub rough_occupancy_mean: Option<f64>,
}

/// Aggregates completed trials; failed or truncated runs are counted but
/// excluded from the terminal-error statistics.
pub fn summarize(records: &[RunRecord], terrain: Option<&TerrainMap>) -> CampaignSummary {
    let complete: Vec<&RunRecord> =
        records.iter().filter(|r| r.failure.is_none() && !r.steps.is_empty()).collect();
    let terminal: Vec<f64> = complete.iter().map(|r| r.steps.last().unwrap().sq_error).collect();
    let n = terminal.len().max(1) as f64;
    let mean = terminal.iter().sum::<f64>() / n;
    let var = terminal.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / n.max(2.0);
    CampaignSummary {
        trials: records.len(),
        failures: records.len() - complete.len(),
        terminal_sq_error_mean: mean,
        terminal_sq_error_se: (var / n).sqrt(),
        rough_occupancy_mean: terrain.map(|map| {
            complete.iter().map(|r| rough_zone_occupancy(r, map)).sum::<f64>() / n
        }),
    }
}

/// Settings for the conditional-MSE particle sweep.
#[derive(Debug, Clone)]
pub struct SweepSettings {
    /// Time steps 0..=horizon along one fixed observation history.
    pub horizon: usize,
    /// Particle counts, strictly increasing.
    pub n_values: Vec<usize>,
    /// Independent filter repetitions per particle count.
    pub repetitions: usize,
    /// Filter configuration template; `particle_count` is overridden per
    /// sweep point.
    pub filter: FilterConfig<f64>,
    /// Grid nodes for the oracle (1-D models).
    pub grid_nodes: usize,
    /// Epsilon for the sandwich upper bound.
    pub eps: f64,
    /// Gamma as a fraction of the minimal predicted mean likelihood.
    pub gamma_fraction: f64,
}

impl SweepSettings {
    pub fn from_config(cfg: &Config) -> Self {
        Self {
            horizon: cfg.sim.horizon,
            n_values: cfg.sim.n_sweep.clone(),
            repetitions: cfg.sim.sweep_repetitions,
            filter: cfg.filter.to_filter_config(),
            grid_nodes: cfg.sim.grid_nodes,
            eps: 0.5,
            gamma_fraction: 0.5,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub k: usize,
    pub n: usize,
    pub e_n_mean: f64,
    pub e_n_se: f64,
    pub e_star: Option<f64>,
    pub bound_lower: Option<f64>,
    pub bound_upper: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    /// Set when oracle columns are unavailable (hidden dimension > 1); the
    /// e_N column then measures squared error against the truth instead of
    /// the conditional MSE.
    pub notice: Option<String>,
    pub failed_repetitions: usize,
}

/// Sweeps particle counts along one fixed observation history (zero
/// controls) and reports the conditional MSE of the particle estimate per
/// (k, N), next to the oracle optimum and the sandwich bounds.
///
/// For 1-D models the conditional MSE decomposes exactly as
/// e* + |particle mean − oracle mean|^2, so the oracle supplies the first
/// term and the repetitions estimate the second.
pub fn mse_sweep<M: Model<f64>>(
    model: &M,
    settings: &SweepSettings,
    base_seed: u64,
) -> anyhow::Result<SweepResult> {
    // fixed history
    let mut truth_rng = ChaCha12Rng::seed_from_u64(derive_seed(base_seed, "sweep-truth", 0));
    let zero_u = vec![0.0; model.control_dim()];
    let mut x = model.initial_sample(&mut truth_rng);
    let mut truths = vec![x.clone()];
    let mut observations = vec![model.observation_sample(&x, &mut truth_rng)];
    for _ in 0..settings.horizon {
        x = model.transition_sample(&x, &zero_u, &mut truth_rng);
        truths.push(x.clone());
        observations.push(model.observation_sample(&x, &mut truth_rng));
    }
    let steps = settings.horizon + 1;

    // oracle track (1-D only)
    let mut notice = None;
    let oracle = if model.state_dim() == 1 {
        match bounds::oracle_ledger(
            model,
            &observations,
            settings.grid_nodes,
            GammaSpec::FractionOfMin(settings.gamma_fraction),
            settings.eps,
        ) {
            Ok(ledger) => Some(ledger),
            Err(e) => {
                notice = Some(format!("oracle ledger unavailable: {e}"));
                None
            }
        }
    } else {
        notice = Some(format!(
            "oracle restricted to 1 hidden dimension (model has {}); e_N reports squared \
             error against the truth and the e_star/bound columns are omitted",
            model.state_dim()
        ));
        None
    };

    // upper bounds need the conditional constants ledger; threshold
    // violations just drop the bound column
    let upper: Option<Vec<Vec<f64>>> = oracle.as_ref().and_then(|ledger| {
        let norms = bounds::estimate_norms(model, settings.grid_nodes.min(4001)).ok()?;
        let table = bounds::conditional_table(norms.norm_k, &ledger.steps, 1, 1.0).ok()?;
        Some(
            (0..steps)
                .map(|k| {
                    settings
                        .n_values
                        .iter()
                        .map(|&n| {
                            bounds::sandwich_upper(
                                ledger.e_star[k],
                                settings.eps,
                                table.c_phi_sum(k, &ledger.phi_sq[k]),
                                n,
                            )
                        })
                        .collect()
                })
                .collect(),
        )
    });

    let mut rows = Vec::new();
    let mut failed = 0usize;
    for (ni, &n) in settings.n_values.iter().enumerate() {
        let fcfg = FilterConfig { particle_count: n, ..settings.filter.clone() };
        let n_seed = derive_seed(base_seed, "sweep-n", n as u64);
        // one filter trajectory of empirical means per repetition
        let reps: Vec<Option<Vec<Vec<f64>>>> = (0..settings.repetitions)
            .into_par_iter()
            .map(|r| {
                let mut rng = ChaCha12Rng::seed_from_u64(derive_seed(n_seed, "rep", r as u64));
                let mut cloud = ParticleSet::init(model, n, &mut rng);
                cloud.stage = Stage::Predicted;
                let mut cloud = cloud
                    .correct(model, &observations[0])
                    .and_then(|c| c.resample(fcfg.resampling, &mut rng))
                    .ok()?;
                let mut means = vec![cloud.empirical_mean()];
                for y in &observations[1..] {
                    let (next, _) = filter_step(&cloud, model, &zero_u, y, &fcfg, &mut rng).ok()?;
                    cloud = next;
                    means.push(cloud.empirical_mean());
                }
                Some(means)
            })
            .collect();
        let ok: Vec<&Vec<Vec<f64>>> = reps.iter().flatten().collect();
        failed += reps.len() - ok.len();
        anyhow::ensure!(!ok.is_empty(), "every repetition failed at N = {n}");

        for k in 0..steps {
            // per-repetition conditional MSE (oracle) or truth error
            let errs: Vec<f64> = ok
                .iter()
                .map(|means| match &oracle {
                    Some(ledger) => {
                        ledger.e_star[k] + (means[k][0] - ledger.mean[k][0]).powi(2)
                    }
                    None => dist_sq(&means[k], &truths[k]),
                })
                .collect();
            let m = errs.len() as f64;
            let mean = errs.iter().sum::<f64>() / m;
            let var = errs.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (m - 1.0).max(1.0);
            rows.push(SweepRow {
                k,
                n,
                e_n_mean: mean,
                e_n_se: (var / m).sqrt(),
                e_star: oracle.as_ref().map(|l| l.e_star[k]),
                bound_lower: oracle.as_ref().map(|l| l.e_star[k]),
                bound_upper: upper.as_ref().map(|u| u[k][ni]),
            });
        }
    }
    Ok(SweepResult { rows, notice, failed_repetitions: failed })
}

pub fn write_sweep_csv<W: Write>(result: &SweepResult, mut w: W) -> std::io::Result<()> {
    if let Some(n) = &result.notice {
        writeln!(w, "# {n}")?;
    }
    writeln!(w, "k,N,e_N_mean,e_N_se,e_star,bound_lower,bound_upper")?;
    let opt = |v: Option<f64>| v.map(|x| format!("{x}")).unwrap_or_default();
    for r in &result.rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            r.k,
            r.n,
            r.e_n_mean,
            r.e_n_se,
            opt(r.e_star),
            opt(r.bound_lower),
            opt(r.bound_upper)
        )?;
    }
    Ok(())
}
