//! Kernel families, Gram matrices and kernel banks.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{bail, Result};
use crate::linalg::{dot, Matrix, SymmetricEigen};

/// Arguments of `exp` and `tanh` are clamped to this magnitude.
const ARG_CLAMP: f64 = 700.0;
/// Relative tolerance for eigenvalue-based checks.
pub const EIG_REL_TOL: f64 = 1e-10;
/// Most negative eigenvalue tolerated after jitter before a diagonal shift.
const NEG_EIG_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelSpec {
    /// `xᵀy`
    Linear,
    /// `(scale·xᵀy + offset)^degree`
    Polynomial { degree: u32, scale: f64, offset: f64 },
    /// `exp(-gamma·‖x - y‖²)`
    Rbf { gamma: f64 },
    /// `tanh(gamma·xᵀy + offset)`
    Sigmoid { gamma: f64, offset: f64 },
    /// `exp(-gamma·‖x - y‖₁)`
    Laplacian { gamma: f64 },
}

impl KernelSpec {
    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite();
        match *self {
            KernelSpec::Linear => {}
            KernelSpec::Polynomial { degree, scale, offset } => {
                if degree == 0 || !ok(scale) || !ok(offset) {
                    bail!(InvalidParameter, "polynomial kernel needs degree >= 1 and finite scale/offset");
                }
            }
            KernelSpec::Rbf { gamma } | KernelSpec::Laplacian { gamma } => {
                if !(gamma > 0.0) || !ok(gamma) {
                    bail!(InvalidParameter, "kernel bandwidth must be positive, got {gamma}");
                }
            }
            KernelSpec::Sigmoid { gamma, offset } => {
                if !ok(gamma) || !ok(offset) {
                    bail!(InvalidParameter, "sigmoid kernel needs finite parameters");
                }
            }
        }
        Ok(())
    }

    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        match *self {
            KernelSpec::Linear => dot(x, y),
            KernelSpec::Polynomial { degree, scale, offset } => {
                libm::pow(scale * dot(x, y) + offset, degree as f64)
            }
            KernelSpec::Rbf { gamma } => {
                let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
                libm::exp(clamp(-gamma * d2))
            }
            KernelSpec::Sigmoid { gamma, offset } => libm::tanh(clamp(gamma * dot(x, y) + offset)),
            KernelSpec::Laplacian { gamma } => {
                let d1: f64 = x.iter().zip(y).map(|(a, b)| (a - b).abs()).sum();
                libm::exp(clamp(-gamma * d1))
            }
        }
    }

    /// Whether the family can produce indefinite Gram matrices.
    fn may_be_indefinite(&self) -> bool {
        match *self {
            KernelSpec::Sigmoid { .. } => true,
            KernelSpec::Polynomial { offset, scale, .. } => offset < 0.0 || scale < 0.0,
            _ => false,
        }
    }

    pub fn family(&self) -> &'static str {
        match self {
            KernelSpec::Linear => "linear",
            KernelSpec::Polynomial { .. } => "polynomial",
            KernelSpec::Rbf { .. } => "rbf",
            KernelSpec::Sigmoid { .. } => "sigmoid",
            KernelSpec::Laplacian { .. } => "laplacian",
        }
    }

    pub fn describe(&self) -> String {
        match *self {
            KernelSpec::Linear => "linear".into(),
            KernelSpec::Polynomial { degree, scale, offset } => {
                format!("polynomial(degree={degree},scale={scale},offset={offset})")
            }
            KernelSpec::Rbf { gamma } => format!("rbf(gamma={gamma})"),
            KernelSpec::Sigmoid { gamma, offset } => format!("sigmoid(gamma={gamma},offset={offset})"),
            KernelSpec::Laplacian { gamma } => format!("laplacian(gamma={gamma})"),
        }
    }
}

#[inline]
fn clamp(v: f64) -> f64 {
    v.clamp(-ARG_CLAMP, ARG_CLAMP)
}

/// The ten-kernel bank used for the benchmark experiments.
pub fn default_bank_specs() -> Vec<KernelSpec> {
    let poly = |degree| KernelSpec::Polynomial { degree, scale: 0.01, offset: 1.0 };
    alloc::vec![
        KernelSpec::Linear,
        poly(2),
        poly(3),
        poly(5),
        KernelSpec::Rbf { gamma: 0.5 },
        KernelSpec::Rbf { gamma: 0.3 },
        KernelSpec::Rbf { gamma: 0.1 },
        KernelSpec::Sigmoid { gamma: 0.5, offset: 1.0 },
        KernelSpec::Sigmoid { gamma: 0.7, offset: 1.0 },
        KernelSpec::Laplacian { gamma: 0.3 },
    ]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GramOptions {
    /// Added to the diagonal after symmetrization.
    pub jitter: f64,
}

impl Default for GramOptions {
    fn default() -> Self {
        GramOptions { jitter: 1e-6 }
    }
}

/// A symmetric positive semidefinite kernel matrix plus how it was made.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix {
    pub matrix: Matrix,
    pub spec: Option<KernelSpec>,
    pub jitter: f64,
    /// Extra diagonal shift applied to repair an indefinite matrix.
    pub diag_shift: f64,
    /// Set for the all-zero kernel.
    pub degenerate: bool,
}

impl GramMatrix {
    pub fn n(&self) -> usize {
        self.matrix.rows()
    }

    /// Wraps an explicit symmetric matrix, checking shape and finiteness.
    pub fn from_matrix(mut matrix: Matrix) -> Result<Self> {
        if !matrix.is_square() {
            bail!(Shape, "kernel matrix is {}x{}", matrix.rows(), matrix.cols());
        }
        if !matrix.is_finite() {
            bail!(NonFinite, "kernel matrix has non-finite entries");
        }
        matrix.symmetrize();
        let degenerate = matrix.max_abs() == 0.0;
        Ok(GramMatrix { matrix, spec: None, jitter: 0.0, diag_shift: 0.0, degenerate })
    }
}

fn check_finite(x: &Matrix, what: &str) -> Result<()> {
    for i in 0..x.rows() {
        for (j, v) in x.row(i).iter().enumerate() {
            if !v.is_finite() {
                bail!(NonFinite, "{what} has non-finite value at row {i}, column {j}");
            }
        }
    }
    Ok(())
}

/// Gram matrix of `spec` over the rows of `x`.
pub fn compute_gram(spec: &KernelSpec, x: &Matrix, opts: &GramOptions) -> Result<GramMatrix> {
    spec.validate()?;
    check_finite(x, "feature matrix")?;
    if !(opts.jitter >= 0.0) {
        bail!(InvalidParameter, "jitter must be non-negative");
    }
    let n = x.rows();
    let mut k = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let v = spec.eval(x.row(i), x.row(j));
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    if !k.is_finite() {
        bail!(NonFinite, "{} produced non-finite kernel values", spec.describe());
    }
    k.symmetrize();
    k.add_diag(opts.jitter);
    let mut diag_shift = 0.0;
    if spec.may_be_indefinite() && n > 0 {
        let eig = SymmetricEigen::new(&k);
        let lmin = eig.min();
        if lmin < -NEG_EIG_TOL {
            diag_shift = lmin.abs() + 1e-6;
            k.add_diag(diag_shift);
        }
    }
    let degenerate = k.max_abs() == 0.0;
    Ok(GramMatrix { matrix: k, spec: Some(*spec), jitter: opts.jitter, diag_shift, degenerate })
}

/// Kernel values between rows of `a` (rows of the result) and rows of `b`.
pub fn compute_cross(spec: &KernelSpec, a: &Matrix, b: &Matrix) -> Result<Matrix> {
    spec.validate()?;
    if a.cols() != b.cols() {
        bail!(Shape, "feature dimensions differ: {} vs {}", a.cols(), b.cols());
    }
    check_finite(a, "feature matrix")?;
    check_finite(b, "feature matrix")?;
    let k = Matrix::from_fn(a.rows(), b.rows(), |i, j| spec.eval(a.row(i), b.row(j)));
    if !k.is_finite() {
        bail!(NonFinite, "{} produced non-finite kernel values", spec.describe());
    }
    Ok(k)
}

/// An ordered list of Gram matrices over the same points.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelBank {
    kernels: Vec<GramMatrix>,
    /// Shared eigenbasis and per-kernel eigenvalues when the bank was
    /// built as simultaneously diagonalizable.
    simdiag: Option<(Matrix, Vec<Vec<f64>>)>,
}

impl KernelBank {
    pub fn new(kernels: Vec<GramMatrix>) -> Result<Self> {
        if kernels.is_empty() {
            bail!(Shape, "kernel bank is empty");
        }
        let n = kernels[0].n();
        for (i, k) in kernels.iter().enumerate() {
            if k.n() != n || !k.matrix.is_square() {
                bail!(Shape, "kernel {i} is {}x{}, expected {n}x{n}", k.matrix.rows(), k.matrix.cols());
            }
        }
        Ok(KernelBank { kernels, simdiag: None })
    }

    pub fn from_matrices(ms: Vec<Matrix>) -> Result<Self> {
        Self::new(ms.into_iter().map(GramMatrix::from_matrix).collect::<Result<_>>()?)
    }

    /// Computes one Gram matrix per spec over the rows of `x`.
    pub fn compute(specs: &[KernelSpec], x: &Matrix, opts: &GramOptions) -> Result<Self> {
        Self::new(specs.iter().map(|s| compute_gram(s, x, opts)).collect::<Result<_>>()?)
    }

    /// Number of points.
    pub fn n(&self) -> usize {
        self.kernels[0].n()
    }

    /// Number of kernels.
    pub fn len(&self) -> usize {
        self.kernels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kernels.is_empty()
    }

    pub fn kernels(&self) -> &[GramMatrix] {
        &self.kernels
    }

    pub fn get(&self, i: usize) -> &Matrix {
        &self.kernels[i].matrix
    }

    pub fn simdiag(&self) -> Option<(&Matrix, &[Vec<f64>])> {
        self.simdiag.as_ref().map(|(u, d)| (u, d.as_slice()))
    }

    /// Principal submatrices on the points `idx`.
    pub fn restrict_points(&self, idx: &[usize]) -> KernelBank {
        let kernels = self
            .kernels
            .iter()
            .map(|k| GramMatrix { matrix: k.matrix.select(idx), ..k.clone() })
            .collect();
        KernelBank { kernels, simdiag: None }
    }

    /// Sub-bank with the kernels in `support`, in that order.
    pub fn restrict_kernels(&self, support: &[usize]) -> KernelBank {
        let kernels = support.iter().map(|&i| self.kernels[i].clone()).collect();
        let simdiag = self
            .simdiag
            .as_ref()
            .map(|(u, d)| (u.clone(), support.iter().map(|&i| d[i].clone()).collect()));
        KernelBank { kernels, simdiag }
    }

    /// `Σ βᵢ Kᵢ`
    pub fn combine(&self, beta: &[f64]) -> Result<Matrix> {
        combine(self, beta)
    }
}

/// `Σ βᵢ Kᵢ` over the bank.
pub fn combine(bank: &KernelBank, beta: &[f64]) -> Result<Matrix> {
    if beta.len() != bank.len() {
        bail!(Shape, "weight vector has length {}, bank has {} kernels", beta.len(), bank.len());
    }
    if beta.iter().any(|b| !b.is_finite()) {
        bail!(NonFinite, "kernel weights must be finite");
    }
    let n = bank.n();
    let mut out = Matrix::zeros(n, n);
    for (k, &b) in bank.kernels.iter().zip(beta) {
        if b != 0.0 {
            out.add_scaled(b, &k.matrix);
        }
    }
    Ok(out)
}

/// Builds `Kᵢ = U Dᵢ Uᵀ` from an orthogonal `U` and per-kernel diagonals.
pub fn make_simdiag_bank(u: &Matrix, diags: &[Vec<f64>]) -> Result<KernelBank> {
    if !u.is_square() {
        bail!(Shape, "basis must be square, got {}x{}", u.rows(), u.cols());
    }
    if diags.is_empty() {
        bail!(Shape, "no diagonals given");
    }
    if !u.is_finite() || diags.iter().flatten().any(|v| !v.is_finite()) {
        bail!(NonFinite, "basis and diagonals must be finite");
    }
    let n = u.rows();
    let utu = u.transpose().matmul(u);
    let dev = utu.max_abs_diff(&Matrix::identity(n));
    if dev > 1e-10 {
        bail!(InvalidParameter, "basis is not orthogonal: max |UᵀU - I| = {dev:e}");
    }
    let mut kernels = Vec::with_capacity(diags.len());
    for (i, d) in diags.iter().enumerate() {
        if d.len() != n {
            bail!(Shape, "diagonal {i} has length {}, expected {n}", d.len());
        }
        if let Some(v) = d.iter().find(|v| **v < 0.0) {
            bail!(InvalidParameter, "diagonal {i} has negative entry {v}");
        }
        let scaled = Matrix::from_fn(n, n, |r, c| u[(r, c)] * d[c]);
        let mut k = scaled.matmul(&u.transpose());
        k.symmetrize();
        let degenerate = d.iter().all(|v| *v == 0.0);
        kernels.push(GramMatrix { matrix: k, spec: None, jitter: 0.0, diag_shift: 0.0, degenerate });
    }
    let mut bank = KernelBank::new(kernels)?;
    bank.simdiag = Some((u.clone(), diags.to_vec()));
    Ok(bank)
}

impl From<KernelBank> for Vec<GramMatrix> {
    fn from(b: KernelBank) -> Self {
        b.kernels
    }
}

impl core::ops::Index<usize> for KernelBank {
    type Output = GramMatrix;
    fn index(&self, i: usize) -> &GramMatrix {
        &self.kernels[i]
    }
}
