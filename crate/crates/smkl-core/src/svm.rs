//! C-SVM dual solved by sequential minimal optimization with
//! maximal-violating-pair working set selection.

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{bail, Result};
use crate::kernel::KernelBank;
use crate::linalg::Matrix;

/// Curvature floor for pair updates along flat directions.
const TAU: f64 = 1e-12;

/// Row access to a symmetric kernel matrix.
pub trait KernelSource {
    fn dim(&self) -> usize;
    fn diagonal(&self, i: usize) -> f64;
    /// Copies row `i` into `out`.
    fn row_into(&mut self, i: usize, out: &mut [f64]);
}

impl KernelSource for &Matrix {
    fn dim(&self) -> usize {
        self.rows()
    }
    fn diagonal(&self, i: usize) -> f64 {
        self[(i, i)]
    }
    fn row_into(&mut self, i: usize, out: &mut [f64]) {
        out.copy_from_slice(self.row(i));
    }
}

/// Rows of `Σ βⱼ Kⱼ` computed on demand with a least-recently-used cache.
pub struct CombinedRows<'a> {
    bank: &'a KernelBank,
    beta: &'a [f64],
    capacity: usize,
    cache: VecDeque<(usize, Vec<f64>)>,
}

impl<'a> CombinedRows<'a> {
    pub fn new(bank: &'a KernelBank, beta: &'a [f64], capacity: usize) -> Result<Self> {
        if beta.len() != bank.len() {
            bail!(Shape, "weight vector has length {}, bank has {} kernels", beta.len(), bank.len());
        }
        Ok(CombinedRows { bank, beta, capacity: capacity.max(1), cache: VecDeque::new() })
    }

    pub fn cached_rows(&self) -> usize {
        self.cache.len()
    }
}

impl KernelSource for CombinedRows<'_> {
    fn dim(&self) -> usize {
        self.bank.n()
    }
    fn diagonal(&self, i: usize) -> f64 {
        self.beta.iter().enumerate().map(|(j, b)| b * self.bank.get(j)[(i, i)]).sum()
    }
    fn row_into(&mut self, i: usize, out: &mut [f64]) {
        if let Some(pos) = self.cache.iter().position(|(r, _)| *r == i) {
            let entry = self.cache.remove(pos).unwrap();
            out.copy_from_slice(&entry.1);
            self.cache.push_front(entry);
            return;
        }
        out.iter_mut().for_each(|v| *v = 0.0);
        for (j, &b) in self.beta.iter().enumerate() {
            if b != 0.0 {
                crate::linalg::axpy(b, self.bank.get(j).row(i), out);
            }
        }
        if self.cache.len() == self.capacity {
            self.cache.pop_back();
        }
        self.cache.push_front((i, out.to_vec()));
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmoOptions {
    /// Stop once the maximal KKT violation falls to this value.
    pub kkt_tol: f64,
    /// Hard cap on pair updates.
    pub max_updates: usize,
    /// Stop when this many consecutive updates fail to raise the objective.
    pub stall_window: usize,
    /// Record the dual objective after every pair update.
    pub record_objective: bool,
}

impl Default for SmoOptions {
    fn default() -> Self {
        SmoOptions { kkt_tol: 1e-6, max_updates: 10_000_000, stall_window: 20_000, record_objective: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SmoStatus {
    Converged,
    MaxUpdates,
    Stalled,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DualSolution {
    pub alpha: Vec<f64>,
    pub bias: f64,
    /// `Σα - ½ (y∘α)ᵀ K (y∘α)` at `alpha`.
    pub objective: f64,
    /// Pair updates performed.
    pub iterations: usize,
    /// Maximal violation of the optimality conditions at `(alpha, bias)`.
    pub kkt_residual: f64,
    pub status: SmoStatus,
    /// Objective after each update when requested.
    pub objective_trace: Vec<f64>,
}

impl DualSolution {
    /// `y ∘ α`
    pub fn signed_alpha(&self, y: &[f64]) -> Vec<f64> {
        self.alpha.iter().zip(y).map(|(a, b)| a * b).collect()
    }
}

fn check_labels(y: &[f64]) -> Result<()> {
    if let Some(i) = y.iter().position(|v| *v != 1.0 && *v != -1.0) {
        bail!(InvalidParameter, "label {i} is {}, expected +1 or -1", y[i]);
    }
    let pos = y.iter().filter(|v| **v > 0.0).count();
    if pos == 0 || pos == y.len() {
        bail!(Infeasible, "labels contain a single class");
    }
    Ok(())
}

/// Solves `max Σα - ½ (y∘α)ᵀK(y∘α)` s.t. `0 ≤ α ≤ C`, `yᵀα = 0`.
pub fn solve_dual(k: &Matrix, y: &[f64], c: f64, opts: &SmoOptions) -> Result<DualSolution> {
    if !k.is_square() || k.rows() != y.len() {
        bail!(Shape, "kernel is {}x{} but there are {} labels", k.rows(), k.cols(), y.len());
    }
    if !k.is_finite() {
        bail!(NonFinite, "kernel matrix has non-finite entries");
    }
    let mut src = k;
    solve_dual_with(&mut src, y, c, opts)
}

/// [`solve_dual`] over any row source.
pub fn solve_dual_with<S: KernelSource>(
    src: &mut S,
    y: &[f64],
    c: f64,
    opts: &SmoOptions,
) -> Result<DualSolution> {
    let n = src.dim();
    if n != y.len() {
        bail!(Shape, "kernel has {n} rows but there are {} labels", y.len());
    }
    if !(c >= 0.0) || !c.is_finite() {
        bail!(InvalidParameter, "C must be finite and non-negative, got {c}");
    }
    if !(opts.kkt_tol > 0.0) {
        bail!(InvalidParameter, "kkt_tol must be positive");
    }
    check_labels(y)?;
    let qd: Vec<f64> = (0..n).map(|i| src.diagonal(i)).collect();
    let scale = qd.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    if let Some(i) = qd.iter().position(|d| *d < -1e-10 * scale) {
        bail!(Conditioning, "kernel diagonal entry {i} is negative ({})", qd[i]);
    }
    if c == 0.0 {
        return Ok(DualSolution {
            alpha: vec![0.0; n],
            bias: 0.0,
            objective: 0.0,
            iterations: 0,
            kkt_residual: 0.0,
            status: SmoStatus::Converged,
            objective_trace: Vec::new(),
        });
    }

    let mut alpha = vec![0.0; n];
    // gradient of ½αᵀQα - eᵀα with Q = diag(y) K diag(y)
    let mut grad = vec![-1.0; n];
    let mut ki = vec![0.0; n];
    let mut kj = vec![0.0; n];
    let mut iterations = 0usize;
    let mut trace = Vec::new();
    let mut objective = 0.0;
    let mut best: f64 = 0.0;
    let mut since_gain = 0usize;
    let status;

    loop {
        let (i, j, gap) = select_pair(&alpha, &grad, y, c);
        if gap <= opts.kkt_tol || i == usize::MAX || j == usize::MAX {
            status = SmoStatus::Converged;
            break;
        }
        if iterations >= opts.max_updates {
            status = SmoStatus::MaxUpdates;
            break;
        }
        if since_gain >= opts.stall_window {
            status = SmoStatus::Stalled;
            break;
        }
        src.row_into(i, &mut ki);
        src.row_into(j, &mut kj);
        let (old_i, old_j) = (alpha[i], alpha[j]);
        let qij = y[i] * y[j] * ki[j];
        if y[i] != y[j] {
            let mut quad = qd[i] + qd[j] + 2.0 * qij;
            check_curvature(quad, qd[i] + qd[j])?;
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let mut quad = qd[i] + qd[j] - 2.0 * qij;
            check_curvature(quad, qd[i] + qd[j])?;
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        let (si, sj) = (y[i] * di, y[j] * dj);
        for t in 0..n {
            grad[t] += y[t] * (ki[t] * si + kj[t] * sj);
        }
        iterations += 1;
        objective = dual_value_from_grad(&alpha, &grad);
        if opts.record_objective {
            trace.push(objective);
        }
        if objective > best + 1e-15 * (1.0 + best.abs()) {
            best = objective;
            since_gain = 0;
        } else {
            since_gain += 1;
        }
    }

    // g_t = Σ αⱼ yⱼ K_tj - y_t, so y_t f(x_t) - 1 = y_t (g_t + b)
    let g: Vec<f64> = (0..n).map(|t| y[t] * grad[t]).collect();
    let bias = compute_bias(&alpha, &g, y, c);
    let kkt_residual = kkt_residual_from_g(&alpha, &g, y, c, bias);
    Ok(DualSolution {
        alpha,
        bias,
        objective,
        iterations,
        kkt_residual,
        status,
        objective_trace: trace,
    })
}

fn check_curvature(quad: f64, scale: f64) -> Result<()> {
    if quad < -1e-8 * (1.0 + scale.abs()) {
        bail!(Conditioning, "kernel is not positive semidefinite (pair curvature {quad:e})");
    }
    Ok(())
}

#[inline]
fn in_up(a: f64, y: f64, c: f64) -> bool {
    if y > 0.0 {
        a < c
    } else {
        a > 0.0
    }
}

#[inline]
fn in_low(a: f64, y: f64, c: f64) -> bool {
    if y > 0.0 {
        a > 0.0
    } else {
        a < c
    }
}

/// Maximal violating pair and the violation `m(α) - M(α)`.
fn select_pair(alpha: &[f64], grad: &[f64], y: &[f64], c: f64) -> (usize, usize, f64) {
    let mut gmax = f64::NEG_INFINITY;
    let mut gmin = f64::INFINITY;
    let (mut i, mut j) = (usize::MAX, usize::MAX);
    for t in 0..alpha.len() {
        let v = -y[t] * grad[t];
        if in_up(alpha[t], y[t], c) && v > gmax {
            gmax = v;
            i = t;
        }
        if in_low(alpha[t], y[t], c) && v < gmin {
            gmin = v;
            j = t;
        }
    }
    (i, j, gmax - gmin)
}

fn dual_value_from_grad(alpha: &[f64], grad: &[f64]) -> f64 {
    // -(½αᵀQα - eᵀα) with Qα = grad + e
    -0.5 * alpha.iter().zip(grad).map(|(a, g)| a * (g - 1.0)).sum::<f64>()
}

fn compute_bias(alpha: &[f64], g: &[f64], y: &[f64], c: f64) -> f64 {
    let mut sum = 0.0;
    let mut nfree = 0usize;
    for t in 0..alpha.len() {
        if alpha[t] > 0.0 && alpha[t] < c {
            sum -= g[t];
            nfree += 1;
        }
    }
    if nfree > 0 {
        return sum / nfree as f64;
    }
    // no free vectors: midpoint of the interval admissible for b
    let mut lo = f64::NEG_INFINITY;
    let mut hi = f64::INFINITY;
    for t in 0..alpha.len() {
        if in_up(alpha[t], y[t], c) {
            lo = lo.max(-g[t]);
        }
        if in_low(alpha[t], y[t], c) {
            hi = hi.min(-g[t]);
        }
    }
    match (lo.is_finite(), hi.is_finite()) {
        (true, true) => 0.5 * (lo + hi),
        (true, false) => lo,
        (false, true) => hi,
        (false, false) => 0.0,
    }
}

fn kkt_residual_from_g(alpha: &[f64], g: &[f64], y: &[f64], c: f64, bias: f64) -> f64 {
    let mut worst: f64 = 0.0;
    let mut balance = 0.0;
    for t in 0..alpha.len() {
        let m = y[t] * (g[t] + bias);
        let v = if alpha[t] <= 0.0 {
            (-m).max(0.0)
        } else if alpha[t] >= c {
            m.max(0.0)
        } else {
            m.abs()
        };
        worst = worst.max(v);
        balance += y[t] * alpha[t];
    }
    worst.max(balance.abs())
}

/// Largest violation of the SVM optimality conditions at `(alpha, bias)`.
pub fn kkt_residual(k: &Matrix, y: &[f64], c: f64, alpha: &[f64], bias: f64) -> f64 {
    let n = y.len();
    let g: Vec<f64> = (0..n)
        .map(|t| (0..n).map(|j| alpha[j] * y[j] * k[(t, j)]).sum::<f64>() - y[t])
        .collect();
    kkt_residual_from_g(alpha, &g, y, c, bias)
}

/// Direct evaluation of `Σα - ½ (y∘α)ᵀ K (y∘α)`.
pub fn dual_objective(k: &Matrix, y: &[f64], alpha: &[f64]) -> f64 {
    let ya: Vec<f64> = alpha.iter().zip(y).map(|(a, b)| a * b).collect();
    alpha.iter().sum::<f64>() - 0.5 * k.quad_form(&ya)
}

/// `f_t = Σᵢ αᵢ yᵢ K(xᵢ, x_t) + b` where `cross` has one row per query
/// point and one column per training point.
pub fn decision_values(alpha: &[f64], y: &[f64], bias: f64, cross: &Matrix) -> Result<Vec<f64>> {
    if cross.cols() != alpha.len() || y.len() != alpha.len() {
        bail!(Shape, "cross kernel has {} columns, {} multipliers", cross.cols(), alpha.len());
    }
    let ya: Vec<f64> = alpha.iter().zip(y).map(|(a, b)| a * b).collect();
    Ok(cross.matvec(&ya).into_iter().map(|v| v + bias).collect())
}

/// Labels from decision values; zero maps to `+1`.
pub fn predict(decision: &[f64]) -> Vec<f64> {
    decision.iter().map(|v| if *v >= 0.0 { 1.0 } else { -1.0 }).collect()
}
