//! Symmetric-cone arithmetic in solver coordinates: nonnegative orthant,
//! second-order cone `x₀ ≥ ‖x₁‖` and PSD cone in scaled lower-triangular
//! vectorization (off-diagonals times √2, column-major).

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::SQRT_2;

use crate::linalg::{dot, norm2, Cholesky, Matrix, Svd, SymmetricEigen};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Kind {
    Nonneg,
    Soc,
    Psd(usize),
}

impl Kind {
    pub(crate) fn degree(self, len: usize) -> usize {
        match self {
            Kind::Nonneg => len,
            Kind::Soc => 1,
            Kind::Psd(p) => p,
        }
    }
}

pub(crate) fn svec_len(p: usize) -> usize {
    p * (p + 1) / 2
}

pub(crate) fn svec_to_mat(p: usize, v: &[f64]) -> Matrix {
    let mut m = Matrix::zeros(p, p);
    let mut k = 0;
    for j in 0..p {
        for i in j..p {
            let val = if i == j { v[k] } else { v[k] / SQRT_2 };
            m[(i, j)] = val;
            m[(j, i)] = val;
            k += 1;
        }
    }
    m
}

pub(crate) fn mat_to_svec(m: &Matrix, out: &mut [f64]) {
    let p = m.rows();
    let mut k = 0;
    for j in 0..p {
        for i in j..p {
            out[k] = if i == j { m[(i, i)] } else { SQRT_2 * 0.5 * (m[(i, j)] + m[(j, i)]) };
            k += 1;
        }
    }
}

/// Identity element `e`.
pub(crate) fn unit(kind: Kind, out: &mut [f64]) {
    out.iter_mut().for_each(|v| *v = 0.0);
    match kind {
        Kind::Nonneg => out.iter_mut().for_each(|v| *v = 1.0),
        Kind::Soc => out[0] = 1.0,
        Kind::Psd(p) => {
            let mut k = 0;
            for j in 0..p {
                out[k] = 1.0;
                k += p - j;
            }
        }
    }
}

/// `inf { t : x + t e ∈ K }`
pub(crate) fn max_shift(kind: Kind, x: &[f64]) -> f64 {
    match kind {
        Kind::Nonneg => x.iter().fold(f64::NEG_INFINITY, |m, v| m.max(-v)),
        Kind::Soc => norm2(&x[1..]) - x[0],
        Kind::Psd(p) => -SymmetricEigen::new(&svec_to_mat(p, x)).min(),
    }
}

/// Jordan product `a ∘ b`.
pub(crate) fn product(kind: Kind, a: &[f64], b: &[f64], out: &mut [f64]) {
    match kind {
        Kind::Nonneg => {
            for ((o, x), y) in out.iter_mut().zip(a).zip(b) {
                *o = x * y;
            }
        }
        Kind::Soc => {
            out[0] = dot(a, b);
            for i in 1..a.len() {
                out[i] = a[0] * b[i] + b[0] * a[i];
            }
        }
        Kind::Psd(p) => {
            let (ma, mb) = (svec_to_mat(p, a), svec_to_mat(p, b));
            let mut ab = ma.matmul(&mb);
            let ba = mb.matmul(&ma);
            ab.add_scaled(1.0, &ba);
            ab.scale(0.5);
            mat_to_svec(&ab, out);
        }
    }
}

/// NT scaling of one cone block: `W z = W⁻ᵀ s = λ`.
#[derive(Debug, Clone)]
pub(crate) enum Scaling {
    Nonneg { d: Vec<f64> },
    /// `W = η [[w₀, w₁ᵀ], [w₁, I + w₁w₁ᵀ/(1 + w₀)]]`
    Soc { eta: f64, w: Vec<f64> },
    /// `W x = svec(rᵀ X r)`
    Psd { p: usize, r: Matrix, rinv: Matrix, ldiag: Vec<f64> },
}

/// Computes the NT scaling and `λ`. `None` if a point left the interior.
pub(crate) fn nt_scaling(kind: Kind, s: &[f64], z: &[f64]) -> Option<(Scaling, Vec<f64>)> {
    match kind {
        Kind::Nonneg => {
            if s.iter().chain(z).any(|v| !(*v > 0.0)) {
                return None;
            }
            let d: Vec<f64> = s.iter().zip(z).map(|(a, b)| libm::sqrt(a / b)).collect();
            let lambda = s.iter().zip(z).map(|(a, b)| libm::sqrt(a * b)).collect();
            Some((Scaling::Nonneg { d }, lambda))
        }
        Kind::Soc => {
            let sres = soc_residual(s)?;
            let zres = soc_residual(z)?;
            let (sn, zn) = (libm::sqrt(sres), libm::sqrt(zres));
            let sbar: Vec<f64> = s.iter().map(|v| v / sn).collect();
            let zbar: Vec<f64> = z.iter().map(|v| v / zn).collect();
            let gamma = libm::sqrt(0.5 * (1.0 + dot(&sbar, &zbar)));
            let mut w = vec![0.0; s.len()];
            w[0] = (sbar[0] + zbar[0]) / (2.0 * gamma);
            for i in 1..s.len() {
                w[i] = (sbar[i] - zbar[i]) / (2.0 * gamma);
            }
            let eta = libm::sqrt(libm::sqrt(sres / zres));
            let sc = Scaling::Soc { eta, w };
            let mut lambda = vec![0.0; s.len()];
            sc.apply_w(z, &mut lambda);
            Some((sc, lambda))
        }
        Kind::Psd(p) => {
            let ls = Cholesky::new(&svec_to_mat(p, s))?.into_factor();
            let lz = Cholesky::new(&svec_to_mat(p, z))?.into_factor();
            let m = lz.transpose().matmul(&ls);
            let svd = Svd::new(&m);
            if svd.s.iter().any(|v| !(*v > 0.0)) {
                return None;
            }
            let isq: Vec<f64> = svd.s.iter().map(|v| 1.0 / libm::sqrt(*v)).collect();
            let r = ls.matmul(&svd.v).matmul(&Matrix::diagonal(&isq));
            let rinv = Matrix::diagonal(&isq).matmul(&svd.u.transpose()).matmul(&lz.transpose());
            let mut lambda = vec![0.0; svec_len(p)];
            let mut k = 0;
            for j in 0..p {
                lambda[k] = svd.s[j];
                k += p - j;
            }
            Some((Scaling::Psd { p, r, rinv, ldiag: svd.s }, lambda))
        }
    }
}

/// `x₀² - ‖x₁‖²` when `x` is interior.
fn soc_residual(x: &[f64]) -> Option<f64> {
    let t = norm2(&x[1..]);
    let r = (x[0] - t) * (x[0] + t);
    if x[0] > t && r > 0.0 {
        Some(r)
    } else {
        None
    }
}

fn congruence(p: usize, left: &Matrix, x: &[f64], right: &Matrix, out: &mut [f64]) {
    let m = left.matmul(&svec_to_mat(p, x)).matmul(right);
    mat_to_svec(&m, out);
}

impl Scaling {
    pub(crate) fn apply_w(&self, x: &[f64], out: &mut [f64]) {
        match self {
            Scaling::Nonneg { d } => {
                for i in 0..x.len() {
                    out[i] = d[i] * x[i];
                }
            }
            Scaling::Soc { eta, w } => soc_apply(*eta, w, 1.0, x, out),
            Scaling::Psd { p, r, .. } => congruence(*p, &r.transpose(), x, r, out),
        }
    }

    pub(crate) fn apply_wt(&self, x: &[f64], out: &mut [f64]) {
        match self {
            Scaling::Psd { p, r, .. } => congruence(*p, r, x, &r.transpose(), out),
            _ => self.apply_w(x, out),
        }
    }

    pub(crate) fn apply_winv(&self, x: &[f64], out: &mut [f64]) {
        match self {
            Scaling::Nonneg { d } => {
                for i in 0..x.len() {
                    out[i] = x[i] / d[i];
                }
            }
            Scaling::Soc { eta, w } => soc_apply(1.0 / eta, w, -1.0, x, out),
            Scaling::Psd { p, rinv, .. } => congruence(*p, &rinv.transpose(), x, rinv, out),
        }
    }

    pub(crate) fn apply_winv_t(&self, x: &[f64], out: &mut [f64]) {
        match self {
            Scaling::Psd { p, rinv, .. } => congruence(*p, rinv, x, &rinv.transpose(), out),
            _ => self.apply_winv(x, out),
        }
    }
}

/// `η [[w₀, σw₁ᵀ], [σw₁, I + w₁w₁ᵀ/(1 + w₀)]] x` with `σ = ±1`.
fn soc_apply(eta: f64, w: &[f64], sign: f64, x: &[f64], out: &mut [f64]) {
    let w1x1 = dot(&w[1..], &x[1..]);
    let head = w[0] * x[0] + sign * w1x1;
    let coef = sign * x[0] + w1x1 / (1.0 + w[0]);
    out[0] = eta * head;
    for i in 1..x.len() {
        out[i] = eta * (x[i] + coef * w[i]);
    }
}

/// Solves `λ ∘ u = v` for `u`, where `λ` is the scaled point.
pub(crate) fn lambda_solve(kind: Kind, scaling: &Scaling, lambda: &[f64], v: &[f64], out: &mut [f64]) {
    match kind {
        Kind::Nonneg => {
            for i in 0..v.len() {
                out[i] = v[i] / lambda[i];
            }
        }
        Kind::Soc => {
            let l1v1 = dot(&lambda[1..], &v[1..]);
            let det = (lambda[0] - norm2(&lambda[1..])) * (lambda[0] + norm2(&lambda[1..]));
            let u0 = (lambda[0] * v[0] - l1v1) / det;
            out[0] = u0;
            for i in 1..v.len() {
                out[i] = (v[i] - u0 * lambda[i]) / lambda[0];
            }
        }
        Kind::Psd(p) => {
            let Scaling::Psd { ldiag, .. } = scaling else { unreachable!() };
            let mut k = 0;
            for j in 0..p {
                for i in j..p {
                    out[k] = 2.0 * v[k] / (ldiag[i] + ldiag[j]);
                    k += 1;
                }
            }
        }
    }
}

/// Largest `t ≥ 0` with `λ + t d` in the cone, `∞` if unbounded.
pub(crate) fn max_step(kind: Kind, scaling: &Scaling, lambda: &[f64], d: &[f64]) -> f64 {
    match kind {
        Kind::Nonneg => {
            let mut t = f64::INFINITY;
            for (l, di) in lambda.iter().zip(d) {
                if *di < 0.0 {
                    t = t.min(-l / di);
                }
            }
            t
        }
        Kind::Soc => {
            // roots of (λ₀ + t d₀)² - ‖λ₁ + t d₁‖²
            let a = d[0] * d[0] - dot(&d[1..], &d[1..]);
            let b = lambda[0] * d[0] - dot(&lambda[1..], &d[1..]);
            let nl = norm2(&lambda[1..]);
            let c = (lambda[0] - nl) * (lambda[0] + nl);
            smallest_positive_root(a, b, c)
        }
        Kind::Psd(p) => {
            let Scaling::Psd { ldiag, .. } = scaling else { unreachable!() };
            let mut m = svec_to_mat(p, d);
            for i in 0..p {
                for j in 0..p {
                    m[(i, j)] /= libm::sqrt(ldiag[i] * ldiag[j]);
                }
            }
            let lmin = SymmetricEigen::new(&m).min();
            if lmin < 0.0 {
                -1.0 / lmin
            } else {
                f64::INFINITY
            }
        }
    }
}

/// Smallest positive root of `a t² + 2 b t + c` given `c > 0`.
fn smallest_positive_root(a: f64, b: f64, c: f64) -> f64 {
    if a == 0.0 {
        return if b < 0.0 { -c / (2.0 * b) } else { f64::INFINITY };
    }
    let disc = b * b - a * c;
    if disc < 0.0 {
        return f64::INFINITY;
    }
    let sq = libm::sqrt(disc);
    let qv = -(b + if b >= 0.0 { sq } else { -sq });
    let mut best = f64::INFINITY;
    for r in [qv / a, if qv != 0.0 { c / qv } else { f64::INFINITY }] {
        if r > 0.0 && r < best {
            best = r;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    fn check_scaling(kind: Kind, s: &[f64], z: &[f64]) {
        let (sc, lambda) = nt_scaling(kind, s, z).unwrap();
        let n = s.len();
        let mut wz = vec![0.0; n];
        let mut wts = vec![0.0; n];
        sc.apply_w(z, &mut wz);
        sc.apply_winv_t(s, &mut wts);
        assert!(close(&wz, &lambda, 1e-10), "{wz:?} vs {lambda:?}");
        assert!(close(&wts, &lambda, 1e-10), "{wts:?} vs {lambda:?}");
        let mut back = vec![0.0; n];
        let mut tmp = vec![0.0; n];
        sc.apply_w(s, &mut tmp);
        sc.apply_winv(&tmp, &mut back);
        assert!(close(&back, s, 1e-10));
        sc.apply_wt(s, &mut tmp);
        sc.apply_winv_t(&tmp, &mut back);
        assert!(close(&back, s, 1e-10));
    }

    #[test]
    fn nt_scaling_identities() {
        check_scaling(Kind::Nonneg, &[1.0, 2.0, 0.5], &[3.0, 0.1, 1.0]);
        check_scaling(Kind::Soc, &[3.0, 1.0, -1.5], &[2.0, -0.5, 0.9]);
        let p = 3;
        let mut s = vec![0.0; 6];
        let mut z = vec![0.0; 6];
        let a = Matrix::from_rows(&[[2.0, 0.3, -0.1], [0.3, 1.5, 0.2], [-0.1, 0.2, 1.0]]);
        let b = Matrix::from_rows(&[[1.0, -0.4, 0.0], [-0.4, 2.5, 0.6], [0.0, 0.6, 0.7]]);
        mat_to_svec(&a, &mut s);
        mat_to_svec(&b, &mut z);
        check_scaling(Kind::Psd(p), &s, &z);
    }

    #[test]
    fn svec_preserves_inner_product() {
        let a = Matrix::from_rows(&[[2.0, 0.3], [0.3, 1.5]]);
        let b = Matrix::from_rows(&[[1.0, -0.4], [-0.4, 2.5]]);
        let (mut va, mut vb) = (vec![0.0; 3], vec![0.0; 3]);
        mat_to_svec(&a, &mut va);
        mat_to_svec(&b, &mut vb);
        let tr = a.matmul(&b).diag().iter().sum::<f64>();
        assert!((dot(&va, &vb) - tr).abs() < 1e-14);
    }

    #[test]
    fn lambda_solve_inverts_product() {
        for (kind, l, v) in [
            (Kind::Nonneg, vec![1.0, 2.0], vec![0.3, -1.0]),
            (Kind::Soc, vec![2.0, 0.5, -0.7], vec![0.3, -1.0, 2.0]),
        ] {
            let sc = nt_scaling(kind, &l, &l).unwrap().0;
            let mut u = vec![0.0; l.len()];
            lambda_solve(kind, &sc, &l, &v, &mut u);
            let mut back = vec![0.0; l.len()];
            product(kind, &l, &u, &mut back);
            assert!(close(&back, &v, 1e-12));
        }
    }

    #[test]
    fn soc_step_hits_boundary() {
        let l = [2.0, 0.0, 0.0];
        let d = [-1.0, 1.0, 0.0];
        let sc = nt_scaling(Kind::Soc, &l, &l).unwrap().0;
        let t = max_step(Kind::Soc, &sc, &l, &d);
        // 2 - t = t  →  t = 1
        assert!((t - 1.0).abs() < 1e-14);
    }
}
