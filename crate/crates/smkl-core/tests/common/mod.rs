#![allow(dead_code)]

use smkl_core::kernel::{GramOptions, KernelBank, KernelSpec};
use smkl_core::linalg::Matrix;
use smkl_core::rng::SeededRng;

/// Two noisy Gaussian blobs in `d` dimensions with both classes present.
pub fn blobs(n: usize, d: usize, seed: u64) -> (Matrix, Vec<f64>) {
    let mut rng = SeededRng::new(seed);
    let y: Vec<f64> = (0..n).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
    let x = Matrix::from_fn(n, d, |i, j| {
        let shift = if j == 0 { 0.8 * y[i] } else { 0.0 };
        shift + rng.normal()
    });
    (x, y)
}

/// A mixed bank of `q` positive semidefinite kernels.
pub fn bank_specs(q: usize, seed: u64) -> Vec<KernelSpec> {
    let mut rng = SeededRng::new(seed ^ 0x5bd1e995);
    (0..q)
        .map(|i| match i % 4 {
            0 => KernelSpec::Rbf { gamma: 0.1 + rng.uniform() },
            1 => KernelSpec::Linear,
            2 => KernelSpec::Polynomial { degree: 2, scale: 0.3, offset: 1.0 },
            _ => KernelSpec::Laplacian { gamma: 0.1 + 0.5 * rng.uniform() },
        })
        .collect()
}

pub fn random_bank(n: usize, q: usize, seed: u64) -> (KernelBank, Vec<f64>) {
    let (x, y) = blobs(n, 3, seed);
    let bank = KernelBank::compute(&bank_specs(q, seed), &x, &GramOptions::default()).unwrap();
    (bank, y)
}

pub fn random_simplex(q: usize, rng: &mut SeededRng) -> Vec<f64> {
    let w: Vec<f64> = (0..q).map(|_| -rng.uniform().max(1e-12).ln()).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|v| v / s).collect()
}

pub fn random_orthogonal(n: usize, rng: &mut SeededRng) -> Matrix {
    // Gram-Schmidt on a Gaussian matrix, twice for accuracy.
    let mut cols: Vec<Vec<f64>> = Vec::new();
    while cols.len() < n {
        let mut v: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
        for _ in 0..2 {
            for c in &cols {
                let p: f64 = v.iter().zip(c).map(|(a, b)| a * b).sum();
                v.iter_mut().zip(c).for_each(|(a, b)| *a -= p * b);
            }
        }
        let nrm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if nrm > 1e-6 {
            cols.push(v.into_iter().map(|a| a / nrm).collect());
        }
    }
    Matrix::from_fn(n, n, |i, j| cols[j][i])
}

/// Random PSD matrix `A Aᵀ / r + δI` with rank `r`.
pub fn random_psd(n: usize, r: usize, rng: &mut SeededRng) -> Matrix {
    let a = Matrix::from_fn(n, r, |_, _| rng.normal());
    let mut k = a.matmul(&a.transpose());
    k.scale(1.0 / r as f64);
    k.add_diag(1e-3);
    k
}

/// Kernels `I + s·P` with `P` random PSD of unit spectral norm, so every
/// eigenvalue lies in `[1, 1 + s]`.
pub fn near_identity_bank(n: usize, q: usize, s: f64, rng: &mut SeededRng) -> KernelBank {
    let ms = (0..q)
        .map(|_| {
            let mut p = random_psd(n, 1 + rng.below(n), rng);
            let top = smkl_core::linalg::SymmetricEigen::new(&p).max();
            p.scale(s / top);
            p.add_diag(1.0);
            p
        })
        .collect();
    KernelBank::from_matrices(ms).unwrap()
}

pub fn random_labels(n: usize, rng: &mut SeededRng) -> Vec<f64> {
    let mut y: Vec<f64> = (0..n).map(|_| if rng.uniform() < 0.5 { 1.0 } else { -1.0 }).collect();
    y[0] = 1.0;
    y[n - 1] = -1.0;
    y
}

// ---------------------------------------------------------------- oracles

/// Euclidean projection onto the probability simplex by bisection on the
/// threshold `τ` in `Σ max(vᵢ - τ, 0) = 1`.
pub fn simplex_bisect(v: &[f64]) -> Vec<f64> {
    let hi0 = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let (mut lo, mut hi) = (hi0 - 1.0, hi0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let s: f64 = v.iter().map(|x| (x - mid).max(0.0)).sum();
        if s > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let tau = 0.5 * (lo + hi);
    v.iter().map(|x| (x - tau).max(0.0)).collect()
}

/// `min ‖β - w‖²` over the `k`-sparse simplex by enumerating every support.
pub fn sparse_projection_brute(w: &[f64], k: usize) -> f64 {
    let q = w.len();
    let mut best = f64::INFINITY;
    for mask in 1u32..(1 << q) {
        if mask.count_ones() as usize > k {
            continue;
        }
        let idx: Vec<usize> = (0..q).filter(|i| mask >> i & 1 == 1).collect();
        let sub: Vec<f64> = idx.iter().map(|&i| w[i]).collect();
        let p = simplex_bisect(&sub);
        let mut beta = vec![0.0; q];
        for (j, &i) in idx.iter().enumerate() {
            beta[i] = p[j];
        }
        let d: f64 = beta.iter().zip(w).map(|(b, x)| (b - x) * (b - x)).sum();
        best = best.min(d);
    }
    best
}

fn svm_objective(q: &[Vec<f64>], a: &[f64]) -> f64 {
    let n = a.len();
    let mut quad = 0.0;
    for i in 0..n {
        for j in 0..n {
            quad += a[i] * q[i][j] * a[j];
        }
    }
    a.iter().sum::<f64>() - 0.5 * quad
}

fn signed_q(k: &Matrix, y: &[f64]) -> Vec<Vec<f64>> {
    let n = y.len();
    (0..n).map(|i| (0..n).map(|j| y[i] * y[j] * k[(i, j)]).collect()).collect()
}

/// Projection onto `{0 ≤ a ≤ c, yᵀa = 0}` by bisection on the multiplier.
fn project_box_hyperplane(v: &[f64], y: &[f64], c: f64) -> Vec<f64> {
    let at = |nu: f64| -> Vec<f64> { v.iter().zip(y).map(|(x, yi)| (x - nu * yi).clamp(0.0, c)).collect() };
    let bal = |a: &[f64]| -> f64 { a.iter().zip(y).map(|(x, yi)| x * yi).sum() };
    let span = v.iter().map(|x| x.abs()).fold(0.0, f64::max) + c + 1.0;
    let (mut lo, mut hi) = (-span, span);
    for _ in 0..120 {
        let mid = 0.5 * (lo + hi);
        if bal(&at(mid)) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    at(0.5 * (lo + hi))
}

/// SVM dual maximum by accelerated projected gradient with adaptive
/// restart, run until the projected-gradient map is stationary to `1e-10`.
pub fn svm_dual_fista(k: &Matrix, y: &[f64], c: f64) -> f64 {
    let n = y.len();
    let q = signed_q(k, y);
    let qv = |a: &[f64]| -> Vec<f64> { (0..n).map(|i| (0..n).map(|j| q[i][j] * a[j]).sum::<f64>()).collect() };
    // largest eigenvalue by power iteration, padded
    let mut v = vec![1.0; n];
    let mut lmax = 0.0;
    for _ in 0..500 {
        let w = qv(&v);
        let nrm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if nrm == 0.0 {
            break;
        }
        lmax = nrm / v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v = w.into_iter().map(|x| x / nrm).collect();
    }
    let step = 1.0 / (1.01 * lmax + 1e-12);
    let pg_step = |a: &[f64]| -> Vec<f64> {
        let g = qv(a);
        let v: Vec<f64> = a.iter().zip(&g).map(|(x, gi)| x + step * (1.0 - gi)).collect();
        project_box_hyperplane(&v, y, c)
    };
    let mut x = vec![0.0; n];
    let mut z = x.clone();
    let mut t = 1.0f64;
    let mut fx = svm_objective(&q, &x);
    // rounding can leave the residual slightly above target; stop once
    // steps no longer improve the objective
    let mut stale = 0;
    for it in 0..2_000_000 {
        if stale >= 100 {
            break;
        }
        if it % 20 == 0 {
            let r = pg_step(&x).iter().zip(&x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            if r <= 1e-10 {
                break;
            }
        }
        let xn = pg_step(&z);
        let fxn = svm_objective(&q, &xn);
        stale = if fxn > fx { 0 } else { stale + 1 };
        if fxn < fx - 1e-14 * (1.0 + fx.abs()) {
            t = 1.0;
            z = x.clone();
            continue;
        }
        let tn = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        z = xn.iter().zip(&x).map(|(a, b)| a + (t - 1.0) / tn * (a - b)).collect();
        if fxn >= fx {
            x = xn;
            fx = fxn;
        }
        t = tn;
    }
    fx
}

/// SVM dual maximum by enumerating every `{0, C, free}` pattern and solving
/// the equality-constrained stationarity system on the free set.
pub fn svm_dual_active_set(k: &Matrix, y: &[f64], c: f64) -> f64 {
    let n = y.len();
    assert!(n <= 8, "enumeration oracle is for tiny instances");
    let q = signed_q(k, y);
    let mut best = 0.0f64; // a = 0 is feasible
    let mut pattern = vec![0u8; n];
    loop {
        let free: Vec<usize> = (0..n).filter(|&i| pattern[i] == 2).collect();
        let mut a: Vec<f64> = pattern.iter().map(|&p| if p == 1 { c } else { 0.0 }).collect();
        let m = free.len();
        let ok = if m == 0 {
            true
        } else {
            let mut sys = nalgebra::DMatrix::<f64>::zeros(m + 1, m + 1);
            let mut rhs = nalgebra::DVector::<f64>::zeros(m + 1);
            for (r, &i) in free.iter().enumerate() {
                for (s, &j) in free.iter().enumerate() {
                    sys[(r, s)] = q[i][j];
                }
                sys[(r, m)] = y[i];
                sys[(m, r)] = y[i];
                rhs[r] = 1.0 - (0..n).filter(|j| pattern[*j] == 1).map(|j| q[i][j] * c).sum::<f64>();
            }
            rhs[m] = -(0..n).filter(|j| pattern[*j] == 1).map(|j| y[j] * c).sum::<f64>();
            match sys.lu().solve(&rhs) {
                Some(sol) => {
                    for (r, &i) in free.iter().enumerate() {
                        a[i] = sol[r];
                    }
                    free.iter().all(|&i| a[i] >= -1e-12 && a[i] <= c + 1e-12)
                }
                None => false,
            }
        };
        let balance: f64 = a.iter().zip(y).map(|(x, yi)| x * yi).sum();
        if ok && balance.abs() <= 1e-9 * (1.0 + c) {
            let a: Vec<f64> = a.iter().map(|v| v.clamp(0.0, c)).collect();
            best = best.max(svm_objective(&q, &a));
        }
        // next ternary pattern
        let mut i = 0;
        while i < n && pattern[i] == 2 {
            pattern[i] = 0;
            i += 1;
        }
        if i == n {
            break;
        }
        pattern[i] += 1;
    }
    best
}
