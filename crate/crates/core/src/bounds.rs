//! Near-optimality constants for the selection-augmented particle filter:
//! the coupled (M, C) recursions in conditional and uniform modes, the
//! particle-count thresholds they induce, and the resulting MSE sandwich
//! bounds.
//!
//! Conditional mode consumes per-step oracle quantities (predicted mean
//! likelihood, posterior likelihood mass, per-observation sup-norms);
//! uniform mode uses global sup-norms and the gamma floor only, dominates
//! the conditional constants, and yields a data-independent threshold.
//!
//! C values explode combinatorially in k, so the ledger carries sqrt(C)
//! and squares only on output; comparisons use the square roots.

use std::io::Write;

use thiserror::Error;

use crate::model::Model;
use crate::oracle::{grid_correct, grid_predict, GridDistribution, OracleError};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundMode {
    Conditional,
    Uniform,
}

impl std::fmt::Display for BoundMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BoundMode::Conditional => write!(f, "conditional"),
            BoundMode::Uniform => write!(f, "uniform"),
        }
    }
}

#[derive(Debug, Error)]
pub enum BoundError {
    #[error("epsilon_k must lie in (0,1), got {0}")]
    InvalidEpsilon(f64),
    #[error("gamma/2 must be positive, got {0}")]
    InvalidGamma(f64),
    #[error("step {k}: predicted mean likelihood {mean_pred} does not exceed gamma/2 {gamma_half}")]
    ThresholdViolation { k: usize, mean_pred: f64, gamma_half: f64 },
    #[error("step {k}: non-finite input {what}")]
    NonFinite { k: usize, what: String },
    #[error(transparent)]
    Oracle(#[from] OracleError),
}

/// Global sup-norms of the kernel and likelihood, swept over the declared
/// supports.
#[derive(Debug, Clone)]
pub struct NormEstimates {
    /// sup over (next, state) of the transition density.
    pub norm_k: f64,
    /// sup over (obs, state) of the likelihood.
    pub norm_rho: f64,
    /// per coordinate j: sup |x_j| rho.
    pub norm_phi_rho: Vec<f64>,
    /// per coordinate j: sup x_j^2 rho.
    pub norm_phi2_rho: Vec<f64>,
}

/// Sweeps the declared supports on a regular grid (resolution nodes per
/// axis) and records the empirical sup-norms. 1-D models only; the sweep is
/// exact in the limit and adequate for the smooth suite densities.
pub fn estimate_norms<R: Real, M: Model<R>>(
    model: &M,
    resolution: usize,
) -> Result<NormEstimates, BoundError> {
    assert_eq!(model.state_dim(), 1, "norm sweep supports 1-D state models");
    let (slo, shi) = model.state_support()[0];
    let (olo, ohi) = model.obs_support()[0];
    let zero_u = vec![R::zero(); model.control_dim()];
    let grid = |lo: R, hi: R, i: usize| {
        lo + (hi - lo) * R::from_f64_c(i as f64 / (resolution - 1) as f64)
    };

    let mut norm_k: f64 = 0.0;
    for i in 0..resolution {
        let x = grid(slo, shi, i);
        // the kernel support may be narrower than the state support; sweep it
        let (klo, khi) = model.transition_support(&[x], &zero_u)[0];
        for l in 0..resolution {
            let z = grid(klo, khi, l);
            norm_k = norm_k.max(model.transition_density(&[z], &[x], &zero_u).to_f64_c());
        }
    }

    let mut norm_rho: f64 = 0.0;
    let mut norm_phi_rho: f64 = 0.0;
    let mut norm_phi2_rho: f64 = 0.0;
    for i in 0..resolution {
        let x = grid(slo, shi, i);
        let xa = x.to_f64_c().abs();
        let (llo, lhi) = model.likelihood_support(&[x])[0];
        // intersect with the declared observation support
        let lo = if llo > olo { llo } else { olo };
        let hi = if lhi < ohi { lhi } else { ohi };
        for l in 0..resolution {
            let y = grid(lo, hi, l);
            let r = model.likelihood(&[y], &[x]).to_f64_c();
            norm_rho = norm_rho.max(r);
            norm_phi_rho = norm_phi_rho.max(xa * r);
            norm_phi2_rho = norm_phi2_rho.max(xa * xa * r);
        }
    }
    Ok(NormEstimates {
        norm_k,
        norm_rho,
        norm_phi_rho: vec![norm_phi_rho],
        norm_phi2_rho: vec![norm_phi2_rho],
    })
}

/// Per-step data for the conditional recursion (k >= 1), computed from the
/// oracle filter against one fixed observation history.
#[derive(Debug, Clone)]
pub struct ConditionalStep {
    /// gamma_k / 2.
    pub gamma_half: f64,
    /// epsilon_k in (0,1).
    pub eps: f64,
    /// <mu_{k|k-1}, rho(y_k, .)>.
    pub mean_pred_likelihood: f64,
    /// <mu_k, rho(y_k, .)>, the conditional likelihood "norm".
    pub rho_k2: f64,
    /// sup_x rho(y_k, x) at this step's observation.
    pub norm_rho: f64,
    /// per j: sup_x |x_j| rho(y_k, x).
    pub norm_phi_rho: Vec<f64>,
    /// per j: sup_x x_j^2 rho(y_k, x).
    pub norm_phi2_rho: Vec<f64>,
}

/// Per-step data for the uniform recursion (k >= 1).
#[derive(Debug, Clone, Copy)]
pub struct UniformStep {
    pub gamma_half: f64,
    pub eps: f64,
}

/// One (k, j) entry of the constants ledger.
#[derive(Debug, Clone)]
pub struct BoundRow {
    pub k: usize,
    pub j: usize,
    pub alpha: f64,
    pub beta: f64,
    pub m: f64,
    /// C value; may overflow to infinity for late k, in which case
    /// `c_sqrt` stays finite and meaningful.
    pub c: f64,
    pub c_sqrt: f64,
    /// Minimal particle count at this k (1 at k = 0).
    pub n_threshold: f64,
}

#[derive(Debug, Clone)]
pub struct BoundTable {
    pub mode: BoundMode,
    pub n_coords: usize,
    pub c_tilde: f64,
    pub rows: Vec<BoundRow>,
}

impl BoundTable {
    pub fn row(&self, k: usize, j: usize) -> &BoundRow {
        &self.rows[k * self.n_coords + j]
    }

    pub fn max_k(&self) -> usize {
        self.rows.len() / self.n_coords - 1
    }

    /// sum_j C_{k,j} * phi_sq[j], with phi_sq[j] = ||phi_j||_{k,2}^2.
    pub fn c_phi_sum(&self, k: usize, phi_sq: &[f64]) -> f64 {
        (0..self.n_coords).map(|j| self.row(k, j).c * phi_sq[j]).sum()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "k,j,C,M,alpha,beta,N_threshold,mode")?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{:e},{:e},{:e},{:e},{:e},{}",
                r.k,
                r.j,
                r.c,
                r.m,
                r.alpha,
                r.beta,
                r.n_threshold,
                self.mode
            )?;
        }
        Ok(())
    }
}

/// M_{k,j} = 2 + alpha (1 + ((4 - eps)/(1 - eps) + 1) M_{k-1,j}).
pub fn m_step(alpha: f64, eps: f64, m_prev: f64) -> f64 {
    2.0 + alpha * (1.0 + ((4.0 - eps) / (1.0 - eps) + 1.0) * m_prev)
}

/// sqrt(C_{k,j}), four-term recursion. `rho_weight` is ||rho||_{k,2} in
/// conditional mode (||rho||_inf uniform), `denom` is
/// |gamma/2 - <mu_{k|k-1}, rho>| (gamma/2 uniform).
#[allow(clippy::too_many_arguments)]
pub fn c_sqrt_step(
    c_tilde: f64,
    beta: f64,
    eps: f64,
    norm_k: f64,
    rho_weight: f64,
    denom: f64,
    m_k: f64,
    m_prev: f64,
    c_sqrt_prev: f64,
) -> f64 {
    let s2 = 2.0f64.powf(1.5) * c_tilde.sqrt();
    s2 * m_k.sqrt()
        + s2 * beta / (1.0 - eps).sqrt() * m_prev.sqrt()
        + norm_k.powf(1.5) * rho_weight * beta / ((1.0 - eps) * denom)
            * m_prev.sqrt()
            * c_sqrt_prev
        + norm_k * beta * c_sqrt_prev
}

pub const M_INITIAL: f64 = 3.0;

pub fn c_initial(c_tilde: f64) -> f64 {
    8.0 * c_tilde
}

fn initial_rows(n_coords: usize, c_tilde: f64) -> Vec<BoundRow> {
    (0..n_coords)
        .map(|j| BoundRow {
            k: 0,
            j,
            alpha: 0.0,
            beta: 0.0,
            m: M_INITIAL,
            c: c_initial(c_tilde),
            c_sqrt: c_initial(c_tilde).sqrt(),
            n_threshold: 1.0,
        })
        .collect()
}

fn check_step(k: usize, gamma_half: f64, eps: f64) -> Result<(), BoundError> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(BoundError::InvalidEpsilon(eps));
    }
    if !(gamma_half > 0.0) {
        return Err(BoundError::InvalidGamma(gamma_half));
    }
    if !gamma_half.is_finite() {
        return Err(BoundError::NonFinite { k, what: "gamma_half".into() });
    }
    Ok(())
}

/// Conditional-mode ledger along one observation history. `steps[k-1]`
/// holds the data for time k.
pub fn conditional_table(
    norm_k: f64,
    steps: &[ConditionalStep],
    n_coords: usize,
    c_tilde: f64,
) -> Result<BoundTable, BoundError> {
    let mut rows = initial_rows(n_coords, c_tilde);
    for (i, s) in steps.iter().enumerate() {
        let k = i + 1;
        check_step(k, s.gamma_half, s.eps)?;
        if s.mean_pred_likelihood <= s.gamma_half {
            return Err(BoundError::ThresholdViolation {
                k,
                mean_pred: s.mean_pred_likelihood,
                gamma_half: s.gamma_half,
            });
        }
        let denom = (s.gamma_half - s.mean_pred_likelihood).abs();
        let max_c_sqrt_prev = (0..n_coords)
            .map(|j| rows[(k - 1) * n_coords + j].c_sqrt)
            .fold(0.0f64, f64::max);
        let n_threshold = (s.rho_k2 * norm_k * max_c_sqrt_prev / denom).powi(2) / s.eps;
        for j in 0..n_coords {
            let prev = &rows[(k - 1) * n_coords + j];
            let scale = s.norm_rho / (s.gamma_half * s.mean_pred_likelihood);
            let alpha = norm_k * norm_k * scale * (s.norm_phi2_rho[j] + s.gamma_half);
            let beta = scale * (s.norm_phi_rho[j] + s.gamma_half);
            let m = m_step(alpha, s.eps, prev.m);
            let c_sqrt = c_sqrt_step(
                c_tilde, beta, s.eps, norm_k, s.rho_k2, denom, m, prev.m, prev.c_sqrt,
            );
            rows.push(BoundRow { k, j, alpha, beta, m, c: c_sqrt * c_sqrt, c_sqrt, n_threshold });
        }
    }
    Ok(BoundTable { mode: BoundMode::Conditional, n_coords, c_tilde, rows })
}

/// Uniform-mode ledger from global sup-norms; constants and thresholds are
/// independent of the observation history.
pub fn uniform_table(
    norms: &NormEstimates,
    steps: &[UniformStep],
    c_tilde: f64,
) -> Result<BoundTable, BoundError> {
    let n_coords = norms.norm_phi_rho.len();
    let mut rows = initial_rows(n_coords, c_tilde);
    for (i, s) in steps.iter().enumerate() {
        let k = i + 1;
        check_step(k, s.gamma_half, s.eps)?;
        // gamma = 2 * gamma_half; denominators use gamma^2/2 = 2 gamma_half^2
        let gamma_sq_half = 2.0 * s.gamma_half * s.gamma_half;
        let max_c_sqrt_prev = (0..n_coords)
            .map(|j| rows[(k - 1) * n_coords + j].c_sqrt)
            .fold(0.0f64, f64::max);
        let n_threshold =
            (norms.norm_rho * norms.norm_k * max_c_sqrt_prev / s.gamma_half).powi(2) / s.eps;
        for j in 0..n_coords {
            let prev = &rows[(k - 1) * n_coords + j];
            let alpha = norms.norm_k * norms.norm_k * norms.norm_rho
                * (norms.norm_phi2_rho[j] + s.gamma_half)
                / gamma_sq_half;
            let beta = norms.norm_rho * (norms.norm_phi_rho[j] + s.gamma_half) / gamma_sq_half;
            let m = m_step(alpha, s.eps, prev.m);
            let c_sqrt = c_sqrt_step(
                c_tilde,
                beta,
                s.eps,
                norms.norm_k,
                norms.norm_rho,
                s.gamma_half,
                m,
                prev.m,
                prev.c_sqrt,
            );
            rows.push(BoundRow { k, j, alpha, beta, m, c: c_sqrt * c_sqrt, c_sqrt, n_threshold });
        }
    }
    Ok(BoundTable { mode: BoundMode::Uniform, n_coords, c_tilde, rows })
}

/// Dominance check: conditional constants never exceed uniform ones.
/// Comparison is on sqrt(C) so overflow-free; a small relative slack
/// absorbs floating-point noise.
pub fn verify_dominance(cond: &BoundTable, unif: &BoundTable) -> (bool, Vec<(usize, usize)>) {
    let slack = 1.0 + 1e-9;
    let mut offenders = Vec::new();
    let kmax = cond.max_k().min(unif.max_k());
    for k in 0..=kmax {
        for j in 0..cond.n_coords {
            let c = cond.row(k, j);
            let u = unif.row(k, j);
            if c.m > u.m * slack || c.c_sqrt > u.c_sqrt * slack {
                offenders.push((k, j));
            }
        }
    }
    (offenders.is_empty(), offenders)
}

/// Upper half of the conditional sandwich:
/// (1 + eps) e* + (1 + 1/eps) * sum_j C_{k,j} ||phi_j||^2_{k,2} / N.
pub fn sandwich_upper(e_star: f64, epsilon: f64, c_phi_sum: f64, n: usize) -> f64 {
    (1.0 + epsilon) * e_star + (1.0 + 1.0 / epsilon) * c_phi_sum / n as f64
}

/// Total-MSE upper bound with the epsilon = N^{-q} schedule.
pub fn total_upper(e_star_tot: f64, q: f64, c_phi_sum_expect: f64, n: usize) -> f64 {
    let nq = (n as f64).powf(q);
    (1.0 + 1.0 / nq) * e_star_tot + (1.0 + nq) * c_phi_sum_expect / n as f64
}

/// Everything the conditional ledger needs, extracted from the grid oracle
/// run along one fixed history of observations (zero controls).
#[derive(Debug, Clone)]
pub struct OracleLedger {
    pub steps: Vec<ConditionalStep>,
    /// per time k (0..=K), per j: ||phi_j||^2_{k,2} (running max form).
    pub phi_sq: Vec<Vec<f64>>,
    /// oracle optimal MSE per time k.
    pub e_star: Vec<f64>,
    /// oracle conditional mean per time k.
    pub mean: Vec<Vec<f64>>,
    /// predicted mean likelihood per step k >= 1 (gamma calibration data).
    pub mean_pred: Vec<f64>,
}

/// Gamma selection for the ledger.
#[derive(Debug, Clone, Copy)]
pub enum GammaSpec {
    /// gamma_k/2 given directly.
    FixedHalf(f64),
    /// gamma_k = fraction * min_k <mu_{k|k-1}, rho>, fraction in (0,1).
    FractionOfMin(f64),
}

/// Runs the grid filter along `observations` (zero controls) and collects
/// the conditional-recursion inputs. 1-D models only.
pub fn oracle_ledger<R: Real, M: Model<R>>(
    model: &M,
    observations: &[Vec<R>],
    nodes: usize,
    gamma: GammaSpec,
    eps: f64,
) -> Result<OracleLedger, BoundError> {
    assert_eq!(model.state_dim(), 1, "oracle ledger supports 1-D state models");
    assert!(!observations.is_empty());
    let zero_u = vec![R::zero(); model.control_dim()];

    let mut dist = GridDistribution::from_initial(model, nodes)?;
    dist = grid_correct(&dist, model, &observations[0])?;

    let mut phi_sq = Vec::new();
    let mut e_star = Vec::new();
    let mut mean = Vec::new();
    let mut mean_pred = Vec::new();
    let mut raw_steps = Vec::new();

    let second_moment = |d: &GridDistribution<R>| d.expect(|x| x[0] * x[0]).to_f64_c();
    let mut phi_running = second_moment(&dist).max(1.0);
    phi_sq.push(vec![phi_running]);
    let (m0, e0) = dist.conditional_mse();
    mean.push(vec![m0[0].to_f64_c()]);
    e_star.push(e0.to_f64_c());

    for y in &observations[1..] {
        let pred = grid_predict(&dist, model, &zero_u)?;
        let mp = pred.expect(|x| model.likelihood(y, x)).to_f64_c();
        mean_pred.push(mp);
        dist = grid_correct(&pred, model, y)?;
        let rho_k2 = dist.expect(|x| model.likelihood(y, x)).to_f64_c();

        // per-observation sup-norms, swept over the grid nodes
        let mut norm_rho: f64 = 0.0;
        let mut norm_phi_rho: f64 = 0.0;
        let mut norm_phi2_rho: f64 = 0.0;
        for i in 0..dist.len() {
            let x = dist.node(i)[0].to_f64_c();
            let r = model.likelihood(y, dist.node(i)).to_f64_c();
            norm_rho = norm_rho.max(r);
            norm_phi_rho = norm_phi_rho.max(x.abs() * r);
            norm_phi2_rho = norm_phi2_rho.max(x * x * r);
        }

        phi_running = phi_running.max(second_moment(&dist));
        phi_sq.push(vec![phi_running]);
        let (mk, ek) = dist.conditional_mse();
        mean.push(vec![mk[0].to_f64_c()]);
        e_star.push(ek.to_f64_c());

        raw_steps.push((mp, rho_k2, norm_rho, norm_phi_rho, norm_phi2_rho));
    }

    let gamma_half = match gamma {
        GammaSpec::FixedHalf(g) => g,
        GammaSpec::FractionOfMin(f) => {
            0.5 * f * mean_pred.iter().copied().fold(f64::INFINITY, f64::min)
        }
    };
    let steps = raw_steps
        .into_iter()
        .map(|(mp, rho_k2, nr, npr, np2r)| ConditionalStep {
            gamma_half,
            eps,
            mean_pred_likelihood: mp,
            rho_k2,
            norm_rho: nr,
            norm_phi_rho: vec![npr],
            norm_phi2_rho: vec![np2r],
        })
        .collect();

    Ok(OracleLedger { steps, phi_sq, e_star, mean, mean_pred })
}
