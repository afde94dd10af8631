//! Command-line front end: closed-loop runs, Monte Carlo campaigns, the
//! particle-count MSE sweep, bound ledgers, grid-oracle dumps, terrain
//! generation and the model assumption checks.

use std::fs;
use std::path::PathBuf;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use tannav::bounds::{self, GammaSpec, UniformStep};
use tannav::config::{Config, ModelConfig};
use tannav::model::Model;
use tannav::oracle::{grid_correct, grid_predict, GridDistribution};
use tannav::seed::derive_seed;
use tannav::sim::{self, Campaign};
use tannav::tan::verify_assumptions;
use tannav::terrain::{generate_map, MapKind};

#[derive(Parser)]
#[command(name = "tannav", about = "Particle filtering with error bounds and dual MPC")]
struct Cli {
    /// TOML configuration file; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides sim.seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (created if missing).
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Overrides sim.trials.
    #[arg(long, global = true)]
    trials: Option<usize>,
    /// Overrides filter.particles.
    #[arg(long, global = true)]
    particles: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// One closed-loop run; writes run_<trial>.jsonl.
    Run {
        #[arg(long, default_value_t = 0)]
        trial: u64,
    },
    /// Monte Carlo campaign over sim.trials runs; writes records + summary.
    Campaign,
    /// Particle-count MSE sweep against the grid oracle; writes CSV.
    MseSweep,
    /// Constant-recursion ledgers (conditional + uniform) and the
    /// dominance check; writes CSVs.
    Bounds {
        /// Time steps along the simulated history.
        #[arg(long, default_value_t = 10)]
        steps: usize,
        #[arg(long, default_value_t = 1.0)]
        c_tilde: f64,
        #[arg(long, default_value_t = 0.1)]
        eps: f64,
        /// Gamma as a fraction of the minimal predicted mean likelihood.
        #[arg(long, default_value_t = 0.5)]
        gamma_fraction: f64,
    },
    /// Grid-filter oracle along a simulated history; dumps node/mass CSV.
    Oracle {
        #[arg(long, default_value_t = 20)]
        steps: usize,
        /// Grid nodes per axis.
        #[arg(long, default_value_t = 2001)]
        nodes: usize,
    },
    /// Terrain tools.
    Terrain {
        #[command(subcommand)]
        cmd: TerrainCmd,
    },
    /// Boundedness checks of the configured TAN model.
    VerifyAssumptions {
        /// Sweep resolution per position axis.
        #[arg(long, default_value_t = 5)]
        resolution: usize,
        /// Margin (in sigmas) past the truncation radius for the
        /// vanishing check.
        #[arg(long, default_value_t = 0.5)]
        margin: f64,
    },
}

#[derive(Subcommand)]
enum TerrainCmd {
    /// Generate a synthetic heightmap and write it as an ASCII grid.
    Gen {
        #[arg(long, value_enum)]
        kind: MapKindArg,
        #[arg(long, num_args = 2, default_values_t = [-50.0, -50.0])]
        origin: Vec<f64>,
        #[arg(long, default_value_t = 5.0)]
        cell_size: f64,
        #[arg(long, default_value_t = 21)]
        nrows: usize,
        #[arg(long, default_value_t = 21)]
        ncols: usize,
        /// Output file name inside the output directory.
        #[arg(long, default_value = "terrain.asc")]
        file: String,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum MapKindArg {
    Ramp,
    TwoHill,
    TwoZone,
}

impl From<MapKindArg> for MapKind {
    fn from(k: MapKindArg) -> Self {
        match k {
            MapKindArg::Ramp => MapKind::Ramp,
            MapKindArg::TwoHill => MapKind::TwoHill,
            MapKindArg::TwoZone => MapKind::TwoZone,
        }
    }
}

fn load_config(cli: &Cli) -> anyhow::Result<Config> {
    let mut cfg = match &cli.config {
        Some(path) => Config::load(path).with_context(|| format!("loading {}", path.display()))?,
        None => Config::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.sim.seed = seed;
    }
    if let Some(trials) = cli.trials {
        cfg.sim.trials = trials;
    }
    if let Some(particles) = cli.particles {
        cfg.filter.particles = particles;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Simulates an uncontrolled observation history for the ledger/oracle
/// commands.
fn simulate_history(
    model: &dyn Model<f64>,
    steps: usize,
    seed: u64,
) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let mut rng = ChaCha12Rng::seed_from_u64(derive_seed(seed, "history", 0));
    let zero_u = vec![0.0; model.control_dim()];
    let mut x = model.initial_sample(&mut rng);
    let mut truths = vec![x.clone()];
    let mut obs = vec![model.observation_sample(&x, &mut rng)];
    for _ in 0..steps {
        x = model.transition_sample(&x, &zero_u, &mut rng);
        truths.push(x.clone());
        obs.push(model.observation_sample(&x, &mut rng));
    }
    (truths, obs)
}

fn main() -> anyhow::Result<()> {
    let cli = Cli::parse();
    fs::create_dir_all(&cli.out)
        .with_context(|| format!("creating output directory {}", cli.out.display()))?;

    match &cli.cmd {
        Cmd::Run { trial } => {
            let cfg = load_config(&cli)?;
            let campaign = Campaign::from_config(cfg)?;
            let record = sim::run_closed_loop(&campaign, *trial);
            let path = cli.out.join(format!("run_{trial}.jsonl"));
            let f = fs::File::create(&path)?;
            record.write_jsonl(std::io::BufWriter::new(f))?;
            match &record.failure {
                Some(msg) => println!(
                    "run {trial}: FAILED after {} steps ({msg}) -> {}",
                    record.steps.len(),
                    path.display()
                ),
                None => {
                    let terminal = record.steps.last().map(|s| s.sq_error).unwrap_or(f64::NAN);
                    println!(
                        "run {trial}: {} steps, terminal sq error {terminal:.6} -> {}",
                        record.steps.len(),
                        path.display()
                    );
                }
            }
        }
        Cmd::Campaign => {
            let cfg = load_config(&cli)?;
            let trials = cfg.sim.trials;
            let campaign = Campaign::from_config(cfg)?;
            let records = sim::run_campaign(&campaign, trials);
            for r in &records {
                let f = fs::File::create(cli.out.join(format!("run_{}.jsonl", r.trial_index)))?;
                r.write_jsonl(std::io::BufWriter::new(f))?;
            }
            let summary = sim::summarize(&records, campaign.terrain.as_ref());
            fs::write(cli.out.join("summary.json"), serde_json::to_string_pretty(&summary)?)?;
            println!(
                "campaign: {} trials ({} failures), terminal sq error {:.6} +/- {:.6}{}",
                summary.trials,
                summary.failures,
                summary.terminal_sq_error_mean,
                summary.terminal_sq_error_se,
                summary
                    .rough_occupancy_mean
                    .map(|o| format!(", rough-zone occupancy {o:.3}"))
                    .unwrap_or_default()
            );
        }
        Cmd::MseSweep => {
            let cfg = load_config(&cli)?;
            let (model, _) = tannav::config::build_model(&cfg)?;
            let settings = sim::SweepSettings::from_config(&cfg);
            let result = sim::mse_sweep(&model, &settings, cfg.sim.seed)?;
            let path = cli.out.join("mse_sweep.csv");
            sim::write_sweep_csv(&result, fs::File::create(&path)?)?;
            if let Some(n) = &result.notice {
                println!("notice: {n}");
            }
            println!(
                "mse-sweep: {} rows ({} failed repetitions) -> {}",
                result.rows.len(),
                result.failed_repetitions,
                path.display()
            );
        }
        Cmd::Bounds { steps, c_tilde, eps, gamma_fraction } => {
            let cfg = load_config(&cli)?;
            let (model, _) = tannav::config::build_model(&cfg)?;
            anyhow::ensure!(
                model.state_dim() == 1,
                "bound ledgers require a 1-D model (got {} state dims)",
                model.state_dim()
            );
            let (_, obs) = simulate_history(&model, *steps, cfg.sim.seed);
            let ledger = bounds::oracle_ledger(
                &model,
                &obs,
                cfg.sim.grid_nodes,
                GammaSpec::FractionOfMin(*gamma_fraction),
                *eps,
            )?;
            let norms = bounds::estimate_norms(&model, cfg.sim.grid_nodes)?;
            let cond = bounds::conditional_table(norms.norm_k, &ledger.steps, 1, *c_tilde)?;
            let gamma_half = ledger.steps[0].gamma_half;
            let usteps: Vec<UniformStep> =
                ledger.steps.iter().map(|_| UniformStep { gamma_half, eps: *eps }).collect();
            let unif = bounds::uniform_table(&norms, &usteps, *c_tilde)?;
            let (dominated, violations) = bounds::verify_dominance(&cond, &unif);
            cond.write_csv(fs::File::create(cli.out.join("bounds_conditional.csv"))?)?;
            unif.write_csv(fs::File::create(cli.out.join("bounds_uniform.csv"))?)?;
            println!(
                "bounds: {} steps, gamma/2 = {gamma_half:.6e}, dominance {}{} -> {}",
                steps,
                if dominated { "holds" } else { "VIOLATED" },
                if dominated { String::new() } else { format!(" at {violations:?}") },
                cli.out.display()
            );
        }
        Cmd::Oracle { steps, nodes } => {
            let cfg = load_config(&cli)?;
            let (model, _) = tannav::config::build_model(&cfg)?;
            anyhow::ensure!(
                model.state_dim() <= 2,
                "grid oracle requires <= 2 state dims (got {})",
                model.state_dim()
            );
            let (_, obs) = simulate_history(&model, *steps, cfg.sim.seed);
            let zero_u = vec![0.0; model.control_dim()];
            let mut dist = GridDistribution::<f64>::from_initial(&model, *nodes)?;
            dist = grid_correct(&dist, &model, &obs[0])?;
            let path = cli.out.join("oracle.csv");
            let mut w = std::io::BufWriter::new(fs::File::create(&path)?);
            let dump = |w: &mut dyn std::io::Write,
                        k: usize,
                        d: &GridDistribution<f64>|
             -> std::io::Result<()> {
                for i in 0..d.len() {
                    let coords: Vec<String> =
                        d.node(i).iter().map(|c| format!("{c}")).collect();
                    writeln!(w, "{k},{},{}", coords.join(","), d.mass(i))?;
                }
                Ok(())
            };
            use std::io::Write as _;
            let coord_header: Vec<String> =
                (0..model.state_dim()).map(|i| format!("x{}", i + 1)).collect();
            writeln!(w, "k,{},mass", coord_header.join(","))?;
            dump(&mut w, 0, &dist)?;
            for (k, y) in obs[1..].iter().enumerate() {
                let pred = grid_predict(&dist, &model, &zero_u)?;
                dist = grid_correct(&pred, &model, y)?;
                dump(&mut w, k + 1, &dist)?;
            }
            let (mean, e_star) = dist.conditional_mse();
            println!(
                "oracle: {} steps, final mean {mean:?}, final e* {e_star:.6} -> {}",
                steps,
                path.display()
            );
        }
        Cmd::Terrain { cmd } => match cmd {
            TerrainCmd::Gen { kind, origin, cell_size, nrows, ncols, file } => {
                let seed = cli.seed.unwrap_or(0);
                let map = generate_map(
                    (*kind).into(),
                    [origin[0], origin[1]],
                    *cell_size,
                    *nrows,
                    *ncols,
                    seed,
                )?;
                let path = cli.out.join(file);
                map.save(&path)?;
                let (lo, hi) = map.min_max_height();
                println!(
                    "terrain gen: {}x{} nodes, heights [{lo:.2}, {hi:.2}] -> {}",
                    map.nrows(),
                    map.ncols(),
                    path.display()
                );
            }
        },
        Cmd::VerifyAssumptions { resolution, margin } => {
            let mut cfg = load_config(&cli)?;
            // default to the TAN model when the config does not name one
            if !matches!(cfg.model, ModelConfig::Tan { .. }) {
                cfg.model = ModelConfig::Tan {
                    params: Default::default(),
                    initial: Default::default(),
                };
                if cfg.terrain.is_none() {
                    cfg.terrain =
                        Some(tannav::config::TerrainConfig::TwoHill(Default::default()));
                }
            }
            let terrain = tannav::config::build_terrain(
                cfg.terrain.as_ref().expect("tan model requires terrain"),
            )?;
            let (params, initial) = match &cfg.model {
                ModelConfig::Tan { params, initial } => (params.clone(), initial.clone()),
                _ => unreachable!(),
            };
            let model = tannav::tan::build_tan_model(
                terrain,
                params.to_params(),
                tannav::tan::TanInitial { mean: initial.mean, std: initial.std },
            )?;
            let report = verify_assumptions(&model, *resolution, *margin);
            for c in &report.checks {
                println!(
                    "{}: {} (value {:.6e}{})",
                    c.name,
                    if c.pass { "pass" } else { "FAIL" },
                    c.value,
                    c.location
                        .as_ref()
                        .map(|l| format!(", at {l:?}"))
                        .unwrap_or_default()
                );
            }
            if report.pass() {
                println!("verify-assumptions: all checks pass");
            } else {
                anyhow::bail!("verify-assumptions: checks failed");
            }
        }
    }
    Ok(())
}
