//! Alternating best-response solver for sparse multiple kernel learning.
//!
//! With `f(α, β) = Σα - ½ (y∘α)ᵀ K(β) (y∘α) + λ‖β‖²` and `K(β) = Σ βⱼ Kⱼ`,
//! each sweep solves the SVM dual for the current weights and then projects
//! the margin vector onto the k0-sparse simplex.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{bail, Result};
use crate::kernel::KernelBank;
use crate::linalg::{dot, SymmetricEigen};
use crate::projection::{beta_best_response, margin_vector};
use crate::rng::SeededRng;
use crate::svm::{solve_dual, solve_dual_with, CombinedRows, DualSolution, SmoOptions};

#[derive(Debug, Clone, PartialEq)]
pub enum Init {
    /// Uniform weights on a random support of size `k0`.
    KSparseRandom { seed: u64 },
    /// Caller supplied starting weights.
    WarmStart(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmklConfig {
    pub c: f64,
    pub lambda: f64,
    pub k0: usize,
    /// Minimum decrease of the objective that counts as progress.
    pub eps: f64,
    /// Consecutive sweeps without progress before stopping.
    pub patience: usize,
    pub max_iter: usize,
    pub init: Init,
    pub smo: SmoOptions,
    /// Above this many points the combined kernel is never materialized;
    /// SMO pulls rows through an LRU cache instead.
    pub dense_limit: usize,
    /// Rows kept by the LRU cache on the large-problem path.
    pub cache_rows: usize,
}

impl SmklConfig {
    pub fn new(c: f64, lambda: f64, k0: usize) -> Self {
        SmklConfig {
            c,
            lambda,
            k0,
            eps: 1e-6,
            patience: 3,
            max_iter: 100,
            init: Init::KSparseRandom { seed: 0 },
            smo: SmoOptions::default(),
            dense_limit: 4096,
            cache_rows: 512,
        }
    }

    pub fn with_init(mut self, init: Init) -> Self {
        self.init = init;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    MaxIter,
    Stalled,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub iteration: usize,
    /// `f(αᵗ, βᵗ)`
    pub objective: f64,
    /// Consecutive sweeps without progress, counted after this sweep.
    pub non_decrease: usize,
    pub beta: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmklResult {
    /// Multipliers of the saved pair.
    pub alpha: DualSolution,
    /// Kernel weights of the saved pair.
    pub beta: Vec<f64>,
    /// Smallest `f(αᵗ, βᵗ)` that counted as progress.
    pub best_objective: f64,
    /// Weights of the last iterate.
    pub last_beta: Vec<f64>,
    /// Whichever of `beta` and `last_beta` has the smaller `max_α f(α, ·)`.
    pub incumbent_beta: Vec<f64>,
    /// `max_α f(α, β)` at `incumbent_beta`: the objective value of a
    /// feasible kernel combination, hence an upper bound on the optimum.
    pub upper_objective: f64,
    pub trace: Vec<TraceRecord>,
    pub iterations_run: usize,
    pub stop_reason: StopReason,
}

/// `f(α, β)` for the given bank.
pub fn objective_j(bank: &KernelBank, y: &[f64], alpha: &[f64], beta: &[f64], lambda: f64) -> Result<f64> {
    let d = margin_vector(bank, y, alpha)?;
    if beta.len() != d.len() {
        bail!(Shape, "weight vector has length {}, bank has {} kernels", beta.len(), d.len());
    }
    Ok(objective_from_margins(alpha, &d, beta, lambda))
}

fn objective_from_margins(alpha: &[f64], d: &[f64], beta: &[f64], lambda: f64) -> f64 {
    alpha.iter().sum::<f64>() - 0.5 * dot(beta, d) + lambda * dot(beta, beta)
}

/// Uniform weights `1/k0` on a support drawn uniformly at random.
pub fn init_ksparse_random(q: usize, k0: usize, seed: u64) -> Result<Vec<f64>> {
    if k0 < 1 || k0 > q {
        bail!(InvalidParameter, "k0 must lie in 1..={q}, got {k0}");
    }
    let mut rng = SeededRng::new(seed);
    let mut beta = vec![0.0; q];
    for i in rng.choose(q, k0) {
        beta[i] = 1.0 / k0 as f64;
    }
    Ok(beta)
}

fn validate(bank: &KernelBank, y: &[f64], cfg: &SmklConfig) -> Result<Vec<f64>> {
    let q = bank.len();
    if y.len() != bank.n() {
        bail!(Shape, "bank has {} points but there are {} labels", bank.n(), y.len());
    }
    if !(cfg.c >= 0.0) || !cfg.c.is_finite() {
        bail!(InvalidParameter, "C must be finite and non-negative");
    }
    if !(cfg.lambda > 0.0) || !cfg.lambda.is_finite() {
        bail!(InvalidParameter, "lambda must be positive");
    }
    if cfg.k0 < 1 || cfg.k0 > q {
        bail!(InvalidParameter, "k0 must lie in 1..={q}, got {}", cfg.k0);
    }
    if cfg.max_iter == 0 {
        bail!(InvalidParameter, "max_iter must be at least 1");
    }
    if cfg.patience == 0 {
        bail!(InvalidParameter, "patience must be at least 1");
    }
    if !(cfg.eps >= 0.0) {
        bail!(InvalidParameter, "eps must be non-negative");
    }
    match &cfg.init {
        Init::KSparseRandom { seed } => init_ksparse_random(q, cfg.k0, *seed),
        Init::WarmStart(b) => {
            if b.len() != q {
                bail!(Shape, "warm start has length {}, bank has {q} kernels", b.len());
            }
            if b.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
                bail!(InvalidParameter, "warm start weights must be finite and non-negative");
            }
            if (b.iter().sum::<f64>() - 1.0).abs() > 1e-8 {
                bail!(InvalidParameter, "warm start weights must sum to one");
            }
            Ok(b.clone())
        }
    }
}

/// SVM dual for the combined kernel `K(β)`.
pub fn solve_combined(bank: &KernelBank, y: &[f64], beta: &[f64], cfg: &SmklConfig) -> Result<DualSolution> {
    if bank.n() <= cfg.dense_limit {
        let k = bank.combine(beta)?;
        solve_dual(&k, y, cfg.c, &cfg.smo)
    } else {
        let mut rows = CombinedRows::new(bank, beta, cfg.cache_rows)?;
        solve_dual_with(&mut rows, y, cfg.c, &cfg.smo)
    }
}

/// Runs the alternating solver.
pub fn fit(bank: &KernelBank, y: &[f64], cfg: &SmklConfig) -> Result<SmklResult> {
    let mut beta = validate(bank, y, cfg)?;
    let mut best: Option<(DualSolution, Vec<f64>)> = None;
    let mut obj_best = f64::INFINITY;
    let mut non_decrease = 0usize;
    let mut trace = Vec::new();
    let mut stop_reason = StopReason::MaxIter;
    let mut iterations_run = 0;

    for t in 1..=cfg.max_iter {
        iterations_run = t;
        let sol = solve_combined(bank, y, &beta, cfg)?;
        let d = margin_vector(bank, y, &sol.alpha)?;
        beta = beta_best_response(&d, cfg.lambda, cfg.k0)?;
        let obj = objective_from_margins(&sol.alpha, &d, &beta, cfg.lambda);
        if obj_best - obj < cfg.eps {
            non_decrease += 1;
        } else {
            non_decrease = 0;
            obj_best = obj;
            best = Some((sol, beta.clone()));
        }
        trace.push(TraceRecord { iteration: t, objective: obj, non_decrease, beta: beta.clone() });
        if non_decrease >= cfg.patience {
            stop_reason = StopReason::Stalled;
            break;
        }
    }

    // A non-finite first objective is the only way nothing gets saved.
    let last_beta = beta;
    let Some((alpha, beta)) = best else {
        bail!(NonFinite, "objective was not finite on the first sweep");
    };
    let value = |b: &[f64]| -> Result<f64> { Ok(solve_combined(bank, y, b, cfg)?.objective + cfg.lambda * dot(b, b)) };
    let mut upper_objective = value(&beta)?;
    let mut incumbent_beta = beta.clone();
    if last_beta != beta {
        let v = value(&last_beta)?;
        if v < upper_objective {
            upper_objective = v;
            incumbent_beta = last_beta.clone();
        }
    }
    Ok(SmklResult {
        alpha,
        beta,
        best_objective: obj_best,
        last_beta,
        incumbent_beta,
        upper_objective,
        trace,
        iterations_run,
        stop_reason,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceCheck {
    /// `C² n k0 (maxⱼ λ₁(Kⱼ))²`
    pub lhs: f64,
    /// `2 λ minⱼ λₙ(Kⱼ)`
    pub rhs: f64,
    pub holds: bool,
    /// `lhs / rhs`, the contraction factor when the condition holds.
    pub rate: f64,
}

/// Sufficient condition for linear convergence of the alternating solver.
pub fn check_linear_convergence_condition(
    bank: &KernelBank,
    c: f64,
    k0: usize,
    lambda: f64,
) -> Result<ConvergenceCheck> {
    if !(lambda > 0.0) {
        bail!(InvalidParameter, "lambda must be positive");
    }
    let mut lmax: f64 = 0.0;
    let mut lmin = f64::INFINITY;
    for (j, k) in bank.kernels().iter().enumerate() {
        let eig = SymmetricEigen::new(&k.matrix);
        let (lo, hi) = (eig.min(), eig.max());
        if lo <= crate::kernel::EIG_REL_TOL * hi.abs().max(f64::MIN_POSITIVE) {
            bail!(Conditioning, "kernel {j} is not positive definite (smallest eigenvalue {lo:e})");
        }
        lmax = lmax.max(hi);
        lmin = lmin.min(lo);
    }
    let lhs = c * c * bank.n() as f64 * k0 as f64 * lmax * lmax;
    let rhs = 2.0 * lambda * lmin;
    Ok(ConvergenceCheck { lhs, rhs, holds: lhs < rhs, rate: lhs / rhs })
}
