//! Convex relaxations of the sparse MKL problem and optimality gaps.
//!
//! All levels share the variables `η, θ, σ ∈ Rⁿ, γ ∈ Rⁿ, β, ω, z ∈ R^q`,
//! the objective `C Σσ + ½θ + λ Σω` and the constraints
//!
//! ```text
//! yᵢ(η + γᵢ) ≥ 1 - σᵢ,  σ ≥ 0,  β ≥ 0,  Σβ = 1,
//! 0 ≤ z ≤ 1,  Σz ≤ k0,  βᵢ² ≤ zᵢ ωᵢ.
//! ```
//!
//! They differ in how `θ ≥ γᵀ K(β)⁻¹ γ` is imposed.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::SQRT_2;
use core::ops::Range;

use crate::conic::{solve, AffineExpr, Cone, ConicProgram, SolveStatus, SolverSettings};
use crate::error::{bail, Result};
use crate::kernel::KernelBank;
use crate::linalg::{dot, norm2, Matrix};
use crate::projection::top_k;
use crate::rng::SeededRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RelaxationLevel {
    /// `θ·K(β)ⱼⱼ ≥ γⱼ²` for every point.
    SocBasis,
    /// The basis rows plus `θ·xᵀK(β)x ≥ (xᵀγ)²` for random unit vectors.
    SocRandomized { num_random: usize, seed: u64 },
    /// Every 3×3 principal block of the full matrix inequality.
    Sdp3x3,
    /// `[[θ, γᵀ], [γ, K(β)]] ⪰ 0`.
    SdpFull,
    /// Exact reformulation for simultaneously diagonalizable banks
    /// `Kᵢ = U Dᵢ Uᵀ`: `τⱼ Σβᵢ(Dᵢ)ⱼⱼ ≥ (uⱼᵀγ)²`, `θ ≥ Στⱼ`.
    SocpDiagonal,
}

impl RelaxationLevel {
    pub const DEFAULT_RANDOM_VECTORS: usize = 64;

    pub fn name(&self) -> String {
        match self {
            RelaxationLevel::SocBasis => "soc-basis".into(),
            RelaxationLevel::SocRandomized { num_random, .. } => format!("soc-rand-{num_random}"),
            RelaxationLevel::Sdp3x3 => "sdp-3x3".into(),
            RelaxationLevel::SdpFull => "sdp-full".into(),
            RelaxationLevel::SocpDiagonal => "socp-diag".into(),
        }
    }
}

/// How the kernel weights enter the program.
#[derive(Debug, Clone, PartialEq)]
pub enum Pin {
    /// The relaxation proper: `β`, `ω`, `z` are variables.
    Free,
    /// `z` fixed to the indicator of the support; `β` lives on it.
    Support(Vec<usize>),
    /// `β` fixed; `λ‖β‖²` enters as a constant.
    Weights(Vec<f64>),
}

/// Data of one sparse MKL instance.
#[derive(Debug, Clone, Copy)]
pub struct Instance<'a> {
    pub bank: &'a KernelBank,
    pub y: &'a [f64],
    pub c: f64,
    pub lambda: f64,
    pub k0: usize,
}

impl Instance<'_> {
    fn validate(&self) -> Result<()> {
        let (n, q) = (self.bank.n(), self.bank.len());
        if self.y.len() != n {
            bail!(Shape, "bank has {n} points but there are {} labels", self.y.len());
        }
        if self.y.iter().any(|v| *v != 1.0 && *v != -1.0) {
            bail!(InvalidParameter, "labels must be +1 or -1");
        }
        if !(self.c >= 0.0) || !self.c.is_finite() {
            bail!(InvalidParameter, "C must be finite and non-negative");
        }
        if !(self.lambda > 0.0) || !self.lambda.is_finite() {
            bail!(InvalidParameter, "lambda must be positive");
        }
        if self.k0 < 1 || self.k0 > q {
            bail!(InvalidParameter, "k0 must lie in 1..={q}, got {}", self.k0);
        }
        Ok(())
    }
}

/// Variable positions inside a built program.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    pub eta: usize,
    pub theta: usize,
    pub sigma: Range<usize>,
    pub gamma: Range<usize>,
    /// Kernel indices carried by `beta`/`omega`, in order.
    pub kernels: Vec<usize>,
    pub beta: Range<usize>,
    pub omega: Range<usize>,
    pub z: Range<usize>,
    pub tau: Range<usize>,
}

/// `Σᵢ βᵢ (Kᵢ)ⱼₖ` as an affine expression or constant.
struct Weighted<'a> {
    bank: &'a KernelBank,
    kernels: &'a [usize],
    beta: Range<usize>,
    fixed: Option<&'a [f64]>,
}

impl Weighted<'_> {
    fn entry(&self, f: impl Fn(&Matrix) -> f64) -> AffineExpr {
        match self.fixed {
            Some(w) => AffineExpr::constant(
                w.iter().enumerate().filter(|(_, b)| **b != 0.0).map(|(i, b)| b * f(self.bank.get(i))).sum(),
            ),
            None => {
                let mut e = AffineExpr::default();
                for (slot, &i) in self.kernels.iter().enumerate() {
                    let v = f(self.bank.get(i));
                    if v != 0.0 {
                        e.terms.push((self.beta.start + slot, v));
                    }
                }
                e
            }
        }
    }
}

fn random_unit_vectors(n: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = SeededRng::new(seed);
    (0..count)
        .map(|_| loop {
            let v: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
            let nrm = norm2(&v);
            if nrm > 1e-12 {
                break v.into_iter().map(|x| x / nrm).collect();
            }
        })
        .collect()
}

/// Builds the conic program for `level` with the weights handled per `pin`.
pub fn build(inst: &Instance, level: RelaxationLevel, pin: &Pin) -> Result<(ConicProgram, Layout)> {
    inst.validate()?;
    let (n, q) = (inst.bank.n(), inst.bank.len());
    let kernels: Vec<usize> = match pin {
        Pin::Free => (0..q).collect(),
        Pin::Support(s) => {
            let mut s2 = s.clone();
            s2.sort_unstable();
            s2.dedup();
            if s2.is_empty() || s2.len() != s.len() || s2.iter().any(|&i| i >= q) {
                bail!(InvalidParameter, "support must list distinct kernel indices below {q}");
            }
            if s.len() > inst.k0 {
                bail!(InvalidParameter, "support of size {} exceeds k0 = {}", s.len(), inst.k0);
            }
            s2
        }
        Pin::Weights(w) => {
            if w.len() != q {
                bail!(Shape, "weights have length {}, bank has {q} kernels", w.len());
            }
            if w.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
                bail!(InvalidParameter, "weights must be finite and non-negative");
            }
            Vec::new()
        }
    };
    let simdiag = match level {
        RelaxationLevel::SocpDiagonal => match inst.bank.simdiag() {
            Some(sd) => Some(sd),
            None => bail!(InvalidParameter, "diagonal reformulation needs a simultaneously diagonalizable bank"),
        },
        _ => None,
    };

    let mut p = ConicProgram::new();
    let eta = p.add_variables("eta", 1).start;
    let theta = p.add_variables("theta", 1).start;
    let sigma = p.add_variables("sigma", n);
    let gamma = p.add_variables("gamma", n);
    let nk = kernels.len();
    let beta = p.add_variables("beta", nk);
    let omega = p.add_variables("omega", nk);
    let z = if matches!(pin, Pin::Free) { p.add_variables("z", q) } else { p.add_variables("z", 0) };
    let tau = if simdiag.is_some() { p.add_variables("tau", n) } else { p.add_variables("tau", 0) };

    for i in sigma.clone() {
        p.set_cost(i, inst.c);
    }
    p.set_cost(theta, 0.5);
    for i in omega.clone() {
        p.set_cost(i, inst.lambda);
    }
    if let Pin::Weights(w) = pin {
        p.add_objective_constant(inst.lambda * dot(w, w));
    }

    // yᵢ(η + γᵢ) + σᵢ - 1 ≥ 0
    let hinge = (0..n)
        .map(|i| {
            AffineExpr::term(eta, inst.y[i])
                .plus(gamma.start + i, inst.y[i])
                .plus(sigma.start + i, 1.0)
                .plus_const(-1.0)
        })
        .collect();
    p.add_constraint(Cone::Nonneg(n), hinge)?;
    p.add_constraint(Cone::Nonneg(n), sigma.clone().map(AffineExpr::var).collect())?;

    if nk > 0 {
        let sum = beta.clone().fold(AffineExpr::constant(-1.0), |e, i| e.plus(i, 1.0));
        p.add_constraint(Cone::Zero(1), vec![sum])?;
        p.add_constraint(Cone::Nonneg(nk), beta.clone().map(AffineExpr::var).collect())?;
        for slot in 0..nk {
            let zi = if matches!(pin, Pin::Free) {
                AffineExpr::var(z.start + slot)
            } else {
                AffineExpr::constant(1.0)
            };
            let rows = vec![zi, AffineExpr::var(omega.start + slot), AffineExpr::term(beta.start + slot, SQRT_2)];
            p.add_constraint(Cone::RotatedSoc(3), rows)?;
        }
    }
    if matches!(pin, Pin::Free) {
        let mut rows: Vec<AffineExpr> = z.clone().map(AffineExpr::var).collect();
        rows.extend(z.clone().map(|i| AffineExpr::term(i, -1.0).plus_const(1.0)));
        rows.push(z.clone().fold(AffineExpr::constant(inst.k0 as f64), |e, i| e.plus(i, -1.0)));
        p.add_constraint(Cone::Nonneg(2 * q + 1), rows)?;
    }

    let fixed = match pin {
        Pin::Weights(w) => Some(w.as_slice()),
        _ => None,
    };
    let kb = Weighted { bank: inst.bank, kernels: &kernels, beta: beta.clone(), fixed };
    let g = |j: usize| AffineExpr::var(gamma.start + j);

    let basis_rows = |p: &mut ConicProgram| -> Result<()> {
        for j in 0..n {
            let kjj = kb.entry(|k| k[(j, j)]);
            p.add_constraint(Cone::RotatedSoc(3), vec![AffineExpr::var(theta), kjj, g(j).scaled(SQRT_2)])?;
        }
        Ok(())
    };

    match level {
        RelaxationLevel::SocBasis => basis_rows(&mut p)?,
        RelaxationLevel::SocRandomized { num_random, seed } => {
            basis_rows(&mut p)?;
            for x in random_unit_vectors(n, num_random, seed) {
                let kx = kb.entry(|k| k.quad_form(&x));
                let xg = x.iter().enumerate().fold(AffineExpr::default(), |e, (j, v)| e.plus(gamma.start + j, SQRT_2 * v));
                p.add_constraint(Cone::RotatedSoc(3), vec![AffineExpr::var(theta), kx, xg])?;
            }
        }
        RelaxationLevel::Sdp3x3 => {
            if n < 2 {
                basis_rows(&mut p)?;
            }
            for j in 0..n {
                for k in (j + 1)..n {
                    let rows = vec![
                        AffineExpr::var(theta),
                        g(j),
                        g(k),
                        kb.entry(|m| m[(j, j)]),
                        kb.entry(|m| m[(k, j)]),
                        kb.entry(|m| m[(k, k)]),
                    ];
                    p.add_constraint(Cone::Psd(3), rows)?;
                }
            }
        }
        RelaxationLevel::SdpFull => {
            let mut rows = Vec::with_capacity((n + 1) * (n + 2) / 2);
            rows.push(AffineExpr::var(theta));
            rows.extend((0..n).map(g));
            for j in 0..n {
                for i in j..n {
                    rows.push(kb.entry(|m| m[(i, j)]));
                }
            }
            p.add_constraint(Cone::Psd(n + 1), rows)?;
        }
        RelaxationLevel::SocpDiagonal => {
            let (u, diags) = simdiag.unwrap();
            for j in 0..n {
                let dsum = match fixed {
                    Some(w) => AffineExpr::constant(w.iter().zip(diags).map(|(b, d)| b * d[j]).sum()),
                    None => {
                        let mut e = AffineExpr::default();
                        for (slot, &i) in kernels.iter().enumerate() {
                            if diags[i][j] != 0.0 {
                                e.terms.push((beta.start + slot, diags[i][j]));
                            }
                        }
                        e
                    }
                };
                let ug = (0..n).fold(AffineExpr::default(), |e, r| e.plus(gamma.start + r, SQRT_2 * u[(r, j)]));
                p.add_constraint(Cone::RotatedSoc(3), vec![AffineExpr::var(tau.start + j), dsum, ug])?;
            }
            let sum = tau.clone().fold(AffineExpr::var(theta), |e, i| e.plus(i, -1.0));
            p.add_constraint(Cone::Nonneg(1), vec![sum])?;
        }
    }

    let layout = Layout { eta, theta, sigma, gamma, kernels, beta, omega, z, tau };
    Ok((p, layout))
}

/// Solved relaxation.
#[derive(Debug, Clone, PartialEq)]
pub struct RelaxationOutcome {
    pub level: RelaxationLevel,
    /// Dual objective: a valid lower bound when the solve is optimal.
    pub lower_bound: f64,
    pub primal_obj: f64,
    /// Kernel weights, one per kernel of the bank.
    pub beta: Vec<f64>,
    /// Relaxed support indicators (ones on the support for pinned solves).
    pub z: Vec<f64>,
    pub omega: Vec<f64>,
    pub theta: f64,
    pub eta: f64,
    pub gamma: Vec<f64>,
    pub sigma: Vec<f64>,
    pub status: SolveStatus,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub iterations: usize,
}

/// Builds and solves `level` with the given pin.
pub fn solve_pinned(
    inst: &Instance,
    level: RelaxationLevel,
    pin: &Pin,
    settings: &SolverSettings,
) -> Result<RelaxationOutcome> {
    let (prog, lay) = build(inst, level, pin)?;
    let sol = solve(&prog, settings)?;
    let q = inst.bank.len();
    let mut beta = vec![0.0; q];
    let mut omega = vec![0.0; q];
    let mut z = vec![0.0; q];
    match pin {
        Pin::Weights(w) => {
            beta.copy_from_slice(w);
            for i in 0..q {
                omega[i] = w[i] * w[i];
                z[i] = if w[i] != 0.0 { 1.0 } else { 0.0 };
            }
        }
        _ => {
            for (slot, &i) in lay.kernels.iter().enumerate() {
                beta[i] = sol.x[lay.beta.start + slot];
                omega[i] = sol.x[lay.omega.start + slot];
                z[i] = if lay.z.is_empty() { 1.0 } else { sol.x[lay.z.start + i] };
            }
        }
    }
    Ok(RelaxationOutcome {
        level,
        lower_bound: sol.dual_obj,
        primal_obj: sol.primal_obj,
        beta,
        z,
        omega,
        theta: sol.x[lay.theta],
        eta: sol.x[lay.eta],
        gamma: sol.x[lay.gamma].to_vec(),
        sigma: sol.x[lay.sigma].to_vec(),
        status: sol.status,
        primal_residual: sol.primal_residual,
        dual_residual: sol.dual_residual,
        iterations: sol.iterations,
    })
}

/// Solves the relaxation at `level`.
pub fn solve_relaxation(inst: &Instance, level: RelaxationLevel, settings: &SolverSettings) -> Result<RelaxationOutcome> {
    solve_pinned(inst, level, &Pin::Free, settings)
}

/// Top-`k0` entries of `z` (ties to the lower index), with `β` restricted
/// to them and renormalized. Falls back to uniform weights when the
/// restricted mass vanishes.
pub fn extract_warm_start(z: &[f64], beta: &[f64], k0: usize) -> Result<Vec<f64>> {
    let q = z.len();
    if beta.len() != q {
        bail!(Shape, "z has length {q}, beta has length {}", beta.len());
    }
    if k0 < 1 || k0 > q {
        bail!(InvalidParameter, "k0 must lie in 1..={q}, got {k0}");
    }
    if z.iter().chain(beta).any(|v| !v.is_finite()) {
        bail!(NonFinite, "relaxed solution is not finite");
    }
    let support = top_k(z, k0);
    let mass: f64 = support.iter().map(|&i| beta[i].max(0.0)).sum();
    let mut out = vec![0.0; q];
    for &i in &support {
        out[i] = if mass > 1e-12 { beta[i].max(0.0) / mass } else { 1.0 / k0 as f64 };
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapReport {
    pub upper: f64,
    pub lower: f64,
    /// `(upper - lower) / upper · 100`
    pub gap_over_upper: f64,
    /// `(upper - lower) / lower · 100`
    pub gap_over_lower: f64,
    /// Set when the bounds coincide up to tolerance.
    pub certified_optimal: bool,
}

/// Relative gaps, in percent, between an objective value and a lower bound.
pub fn certify_gap(upper: f64, lower: f64) -> Result<GapReport> {
    if !upper.is_finite() || !lower.is_finite() {
        bail!(NonFinite, "bounds must be finite");
    }
    let tol = 1e-6 * (1.0 + upper.abs());
    if lower > upper + tol {
        bail!(InvalidParameter, "lower bound {lower} exceeds objective value {upper}");
    }
    let diff = (upper - lower).max(0.0);
    let pct = |den: f64| if diff == 0.0 { 0.0 } else { diff / den * 100.0 };
    Ok(GapReport {
        upper,
        lower,
        gap_over_upper: pct(upper),
        gap_over_lower: pct(lower),
        certified_optimal: diff <= tol,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlobalSolution {
    pub objective: f64,
    pub beta: Vec<f64>,
    pub support: Vec<usize>,
    pub supports_enumerated: usize,
    /// Whether every support solve reached optimality.
    pub all_optimal: bool,
}

fn binomial(n: usize, k: usize) -> usize {
    let mut r: usize = 1;
    for i in 0..k {
        r = r.saturating_mul(n - i) / (i + 1);
    }
    r
}

/// Number of supports enumerated by [`global_enumerate`]: `C(q, min(k0, q))`.
pub fn support_count(q: usize, k0: usize) -> usize {
    binomial(q, k0.min(q))
}

fn next_combination(c: &mut [usize], q: usize) -> bool {
    let k = c.len();
    for i in (0..k).rev() {
        if c[i] < q - k + i {
            c[i] += 1;
            for j in (i + 1)..k {
                c[j] = c[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Exact optimum by solving the full program on every support of size
/// `k0`. Smaller supports are faces of these (`β` may vanish inside a
/// support), so they need no separate solves.
pub fn global_enumerate(inst: &Instance, max_supports: usize, settings: &SolverSettings) -> Result<GlobalSolution> {
    inst.validate()?;
    let q = inst.bank.len();
    let count = support_count(q, inst.k0);
    if count > max_supports {
        bail!(Capacity, "{count} supports to enumerate, budget is {max_supports}");
    }
    let mut best: Option<(f64, Vec<f64>, Vec<usize>)> = None;
    let mut all_optimal = true;
    let mut comb: Vec<usize> = (0..inst.k0).collect();
    loop {
        let out = solve_pinned(inst, RelaxationLevel::SdpFull, &Pin::Support(comb.clone()), settings)?;
        all_optimal &= out.status == SolveStatus::Optimal;
        if best.as_ref().is_none_or(|b| out.lower_bound < b.0) {
            best = Some((out.lower_bound, out.beta, comb.clone()));
        }
        if !next_combination(&mut comb, q) {
            break;
        }
    }
    let (objective, beta, support) = best.expect("at least one support");
    Ok(GlobalSolution { objective, beta, support, supports_enumerated: count, all_optimal })
}
