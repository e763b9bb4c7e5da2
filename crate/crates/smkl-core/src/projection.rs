//! Euclidean projection onto the k-sparse probability simplex and the
//! kernel-weight best response built on it.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{bail, Result};
use crate::kernel::KernelBank;

/// Indices of the `k` largest entries, ordered by value descending and
/// then index ascending.
pub fn top_k(w: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..w.len()).collect();
    idx.sort_by(|&a, &b| w[b].total_cmp(&w[a]).then(a.cmp(&b)));
    idx.truncate(k);
    idx
}

/// Projects `w` onto `{β ≥ 0, Σβ = 1, ‖β‖₀ ≤ k0}`.
///
/// The support is the `k0` largest entries; the simplex projection is then
/// applied on that support.
pub fn gssp_project(w: &[f64], k0: usize) -> Result<Vec<f64>> {
    let q = w.len();
    if k0 < 1 || k0 > q {
        bail!(InvalidParameter, "k0 must lie in 1..={q}, got {k0}");
    }
    if let Some(i) = w.iter().position(|v| !v.is_finite()) {
        bail!(NonFinite, "entry {i} of the vector to project is not finite");
    }
    let support = top_k(w, k0);
    let mut rho = 1;
    let mut cum = 0.0;
    let mut cum_rho = w[support[0]];
    for (j, &i) in support.iter().enumerate() {
        cum += w[i];
        if w[i] > (cum - 1.0) / (j + 1) as f64 {
            rho = j + 1;
            cum_rho = cum;
        }
    }
    let tau = (cum_rho - 1.0) / rho as f64;
    let mut beta = vec![0.0; q];
    for &i in &support {
        beta[i] = (w[i] - tau).max(0.0);
    }
    Ok(beta)
}

/// `dᵢ = (y∘α)ᵀ Kᵢ (y∘α)` for every kernel in the bank.
pub fn margin_vector(bank: &KernelBank, y: &[f64], alpha: &[f64]) -> Result<Vec<f64>> {
    if y.len() != bank.n() || alpha.len() != bank.n() {
        bail!(Shape, "bank has {} points, got {} labels and {} multipliers", bank.n(), y.len(), alpha.len());
    }
    let ya: Vec<f64> = alpha.iter().zip(y).map(|(a, b)| a * b).collect();
    Ok(bank.kernels().iter().map(|k| k.matrix.quad_form(&ya)).collect())
}

/// Minimizer of `Σ (-½ βᵢ dᵢ + λ βᵢ²)` over the k0-sparse simplex.
pub fn beta_best_response(d: &[f64], lambda: f64, k0: usize) -> Result<Vec<f64>> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        bail!(InvalidParameter, "lambda must be positive, got {lambda}");
    }
    let w: Vec<f64> = d.iter().map(|v| v / (4.0 * lambda)).collect();
    gssp_project(&w, k0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;
    use proptest::prelude::*;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn two_entries_full_support() {
        assert!(close(&gssp_project(&[0.7, 0.5], 2).unwrap(), &[0.6, 0.4], 1e-15));
    }

    #[test]
    fn one_sparse_picks_largest() {
        assert_eq!(gssp_project(&[0.9, 0.8, 0.1], 1).unwrap(), vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn zero_vector_goes_to_first_vertex() {
        assert_eq!(gssp_project(&[0.0; 4], 1).unwrap(), vec![1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn ties_broken_by_index() {
        assert_eq!(gssp_project(&[0.2, 0.5, 0.5, 0.5], 2).unwrap(), vec![0.0, 0.5, 0.5, 0.0]);
    }

    #[test]
    fn best_response_examples() {
        assert!(close(&beta_best_response(&[2.0, 2.0], 0.5, 2).unwrap(), &[0.5, 0.5], 1e-15));
        assert_eq!(beta_best_response(&[8.0, 0.0], 1.0, 1).unwrap(), vec![1.0, 0.0]);
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(matches!(gssp_project(&[0.1, 0.2], 0), Err(Error::InvalidParameter(_))));
        assert!(matches!(gssp_project(&[0.1, 0.2], 3), Err(Error::InvalidParameter(_))));
        assert!(matches!(beta_best_response(&[1.0], 0.0, 1), Err(Error::InvalidParameter(_))));
        assert!(matches!(gssp_project(&[f64::NAN], 1), Err(Error::NonFinite(_))));
    }

    proptest! {
        #[test]
        fn output_is_feasible(w in prop::collection::vec(-5.0f64..5.0, 1..12), k in 1usize..12) {
            let k0 = k.min(w.len());
            let b = gssp_project(&w, k0).unwrap();
            prop_assert!(b.iter().all(|v| *v >= 0.0));
            prop_assert!((b.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(b.iter().filter(|v| **v > 0.0).count() <= k0);
        }

        #[test]
        fn objective_identity(d in prop::collection::vec(0.0f64..10.0, 1..8), lambda in 0.01f64..10.0, k in 1usize..8) {
            let k0 = k.min(d.len());
            let b = beta_best_response(&d, lambda, k0).unwrap();
            let lhs: f64 = b.iter().zip(&d).map(|(bi, di)| -0.5 * bi * di + lambda * bi * bi).sum();
            let dist: f64 = b.iter().zip(&d).map(|(bi, di)| (bi - di / (4.0 * lambda)).powi(2)).sum();
            let rhs = lambda * dist - d.iter().map(|v| v * v).sum::<f64>() / (16.0 * lambda);
            prop_assert!((lhs - rhs).abs() <= 1e-9 * (1.0 + lhs.abs()));
        }

        #[test]
        fn permutation_equivariant(w in prop::collection::vec(-3.0f64..3.0, 2..9), k in 1usize..9, rot in 0usize..9) {
            let k0 = k.min(w.len());
            let r = rot % w.len();
            let mut wp = w.clone();
            wp.rotate_left(r);
            let mut b = gssp_project(&w, k0).unwrap();
            b.rotate_left(r);
            let bp = gssp_project(&wp, k0).unwrap();
            // distinct values avoid tie-breaking differences
            let mut sorted = w.clone();
            sorted.sort_by(f64::total_cmp);
            prop_assume!(sorted.windows(2).all(|p| p[1] - p[0] > 1e-9));
            prop_assert!(close(&b, &bp, 1e-12));
        }
    }
}
