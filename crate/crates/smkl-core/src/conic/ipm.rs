//! Homogeneous self-dual interior point method.
//!
//! Internal form: `min cᵀx  s.t.  Ax = b,  Gx + s = h,  s ∈ K` with the
//! embedding
//!
//! ```text
//! Aᵀy + Gᵀz + cτ = 0,   -Ax + bτ = 0,   s + Gx - hτ = 0,
//! κ + cᵀx + bᵀy + hᵀz = 0,   sᵀz + τκ = 0.
//! ```

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::FRAC_1_SQRT_2;

use super::cones::{self, lambda_solve, max_step, nt_scaling, product, Kind, Scaling};
use super::{Cone, ConicProgram, ConicSolution, SolveStatus, SolverSettings};
use crate::linalg::{axpy, dot, norm2, Cholesky, Matrix};

struct Block {
    kind: Kind,
    offset: usize,
    len: usize,
    cols: Vec<usize>,
    /// `len × cols.len()`
    g: Matrix,
    h: Vec<f64>,
    constraint: usize,
    rotated: bool,
}

struct Problem {
    n: usize,
    m: usize,
    c: Vec<f64>,
    a: Matrix,
    b: Vec<f64>,
    /// (constraint, row) for each equality row.
    eq_rows: Vec<(usize, usize)>,
    blocks: Vec<Block>,
    degree: usize,
}

impl Problem {
    fn from_program(prog: &ConicProgram) -> Problem {
        let n = prog.num_vars();
        let mut a_rows: Vec<Vec<f64>> = Vec::new();
        let mut b = Vec::new();
        let mut eq_rows = Vec::new();
        let mut blocks = Vec::new();
        let mut offset = 0;
        let mut degree = 0;
        for (ci, con) in prog.constraints().iter().enumerate() {
            if let Cone::Zero(_) = con.cone {
                for (ri, row) in con.rows.iter().enumerate() {
                    let mut dense = vec![0.0; n];
                    for &(i, v) in &row.terms {
                        dense[i] += v;
                    }
                    a_rows.push(dense);
                    b.push(-row.constant);
                    eq_rows.push((ci, ri));
                }
                continue;
            }
            let mut cols: Vec<usize> = con.rows.iter().flat_map(|r| r.terms.iter().map(|t| t.0)).collect();
            cols.sort_unstable();
            cols.dedup();
            let len = con.rows.len();
            let mut g = Matrix::zeros(len, cols.len());
            let mut h = vec![0.0; len];
            for (ri, row) in con.rows.iter().enumerate() {
                h[ri] = row.constant;
                for &(i, v) in &row.terms {
                    let k = cols.binary_search(&i).unwrap();
                    g[(ri, k)] -= v;
                }
            }
            let (kind, rotated) = match con.cone {
                Cone::Nonneg(_) => (Kind::Nonneg, false),
                Cone::Soc(_) => (Kind::Soc, false),
                Cone::RotatedSoc(_) => (Kind::Soc, true),
                Cone::Psd(p) => (Kind::Psd(p), false),
                Cone::Zero(_) => unreachable!(),
            };
            if rotated {
                rotate_head(g.as_mut_slice(), cols.len());
                rotate_head(&mut h, 1);
            }
            if let Kind::Psd(p) = kind {
                let mut k = 0;
                for j in 0..p {
                    for i in j..p {
                        if i != j {
                            g.row_mut(k).iter_mut().for_each(|v| *v *= core::f64::consts::SQRT_2);
                            h[k] *= core::f64::consts::SQRT_2;
                        }
                        k += 1;
                    }
                }
            }
            degree += kind.degree(len);
            blocks.push(Block { kind, offset, len, cols, g, h, constraint: ci, rotated });
            offset += len;
        }
        let a = Matrix::from_rows(&a_rows);
        let a = if a_rows.is_empty() { Matrix::zeros(0, n) } else { a };
        Problem { n, m: offset, c: prog.objective().to_vec(), a, b, eq_rows, blocks, degree }
    }

    fn h_full(&self) -> Vec<f64> {
        let mut h = vec![0.0; self.m];
        for blk in &self.blocks {
            h[blk.offset..blk.offset + blk.len].copy_from_slice(&blk.h);
        }
        h
    }

    /// `out = G x`
    fn g_mul(&self, x: &[f64], out: &mut [f64]) {
        let mut xl = Vec::new();
        for blk in &self.blocks {
            xl.clear();
            xl.extend(blk.cols.iter().map(|&i| x[i]));
            for r in 0..blk.len {
                out[blk.offset + r] = dot(blk.g.row(r), &xl);
            }
        }
    }

    /// `out += Gᵀ z`
    fn gt_mul_add(&self, z: &[f64], out: &mut [f64]) {
        for blk in &self.blocks {
            let t = blk.g.tr_matvec(&z[blk.offset..blk.offset + blk.len]);
            for (k, &i) in blk.cols.iter().enumerate() {
                out[i] += t[k];
            }
        }
    }
}

/// `(u, v, …) → ((u+v)/√2, (u-v)/√2, …)` on the first two rows of a
/// row-major block with `width` columns. The map is its own inverse.
fn rotate_head(data: &mut [f64], width: usize) {
    for k in 0..width {
        let (u, v) = (data[k], data[width + k]);
        data[k] = FRAC_1_SQRT_2 * (u + v);
        data[width + k] = FRAC_1_SQRT_2 * (u - v);
    }
}

/// Estimated peak working memory in bytes.
pub fn estimate_memory(prog: &ConicProgram) -> usize {
    let n = prog.num_vars();
    let mut bytes = 2 * n * n * 8;
    let mut rows = 0;
    for con in prog.constraints() {
        let len = con.rows.len();
        rows += len;
        match con.cone {
            Cone::Zero(_) => bytes += 2 * len * n * 8,
            _ => {
                let mut cols: Vec<usize> = con.rows.iter().flat_map(|r| r.terms.iter().map(|t| t.0)).collect();
                cols.sort_unstable();
                cols.dedup();
                bytes += 2 * len * cols.len() * 8;
                if let Cone::Psd(p) = con.cone {
                    bytes += 8 * p * p * 8;
                }
            }
        }
    }
    bytes + 16 * rows * 8
}

fn identity_scaling(kind: Kind, len: usize) -> (Scaling, Vec<f64>) {
    let mut e = vec![0.0; len];
    cones::unit(kind, &mut e);
    nt_scaling(kind, &e, &e).expect("identity is interior")
}

struct Kkt {
    chol_m: Cholesky,
    minv_at: Matrix,
    chol_s: Option<Cholesky>,
    /// `W⁻ᵀ G` per block.
    wg: Vec<Matrix>,
}

struct Step {
    x: Vec<f64>,
    y: Vec<f64>,
    z: Vec<f64>,
}

impl Kkt {
    fn factor(prob: &Problem, scal: &[Scaling]) -> Option<Kkt> {
        let n = prob.n;
        let mut mm = Matrix::zeros(n, n);
        let mut wg = Vec::with_capacity(prob.blocks.len());
        let mut col = Vec::new();
        let mut out = Vec::new();
        let mut nz: Vec<(usize, f64)> = Vec::new();
        for (blk, sc) in prob.blocks.iter().zip(scal) {
            let nc = blk.cols.len();
            let mut b = Matrix::zeros(blk.len, nc);
            match sc {
                Scaling::Nonneg { d } => {
                    for r in 0..blk.len {
                        for k in 0..nc {
                            b[(r, k)] = blk.g[(r, k)] / d[r];
                        }
                    }
                }
                _ => {
                    col.resize(blk.len, 0.0);
                    out.resize(blk.len, 0.0);
                    for k in 0..nc {
                        let mut any = false;
                        for r in 0..blk.len {
                            col[r] = blk.g[(r, k)];
                            any |= col[r] != 0.0;
                        }
                        if !any {
                            continue;
                        }
                        sc.apply_winv_t(&col, &mut out);
                        for r in 0..blk.len {
                            b[(r, k)] = out[r];
                        }
                    }
                }
            }
            for r in 0..blk.len {
                nz.clear();
                nz.extend(b.row(r).iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(k, v)| (blk.cols[k], *v)));
                for &(i, vi) in &nz {
                    let row = mm.row_mut(i);
                    for &(j, vj) in &nz {
                        row[j] += vi * vj;
                    }
                }
            }
            wg.push(b);
        }
        let scale = mm.diag().iter().fold(1.0f64, |a, v| a.max(v.abs()));
        let mut reg = 1e-14 * scale;
        let chol_m = loop {
            let mut reg_m = mm.clone();
            reg_m.add_diag(reg);
            if let Some(ch) = Cholesky::new(&reg_m) {
                break ch;
            }
            reg *= 100.0;
            if reg > 1e-4 * scale {
                return None;
            }
        };
        let p = prob.a.rows();
        let mut minv_at = Matrix::zeros(n, p);
        let mut chol_s = None;
        if p > 0 {
            for k in 0..p {
                let v = chol_m.solve(prob.a.row(k));
                for i in 0..n {
                    minv_at[(i, k)] = v[i];
                }
            }
            let s = prob.a.matmul(&minv_at);
            let sscale = s.diag().iter().fold(f64::MIN_POSITIVE, |a, v| a.max(v.abs()));
            let mut sreg = 1e-14 * sscale;
            chol_s = loop {
                let mut t = s.clone();
                t.add_diag(sreg);
                if let Some(ch) = Cholesky::new(&t) {
                    break Some(ch);
                }
                sreg *= 100.0;
                if sreg > 1e-4 * sscale {
                    return None;
                }
            };
        }
        Some(Kkt { chol_m, minv_at, chol_s, wg })
    }

    fn solve_once(&self, prob: &Problem, scal: &[Scaling], r1: &[f64], r2: &[f64], r3: &[f64]) -> Step {
        let n = prob.n;
        let mut t3 = vec![0.0; prob.m];
        let mut rhs = r1.to_vec();
        for ((blk, sc), b) in prob.blocks.iter().zip(scal).zip(&self.wg) {
            let span = blk.offset..blk.offset + blk.len;
            sc.apply_winv_t(&r3[span.clone()], &mut t3[span.clone()]);
            let t = b.tr_matvec(&t3[span]);
            for (k, &i) in blk.cols.iter().enumerate() {
                rhs[i] += t[k];
            }
        }
        let mut x = self.chol_m.solve(&rhs);
        let mut y = Vec::new();
        if let Some(cs) = &self.chol_s {
            let mut t = prob.a.matvec(&x);
            for (ti, ri) in t.iter_mut().zip(r2) {
                *ti -= ri;
            }
            y = cs.solve(&t);
            let corr = self.minv_at.matvec(&y);
            for i in 0..n {
                x[i] -= corr[i];
            }
        }
        let mut z = vec![0.0; prob.m];
        let mut xl = Vec::new();
        let mut zt = Vec::new();
        for ((blk, sc), b) in prob.blocks.iter().zip(scal).zip(&self.wg) {
            xl.clear();
            xl.extend(blk.cols.iter().map(|&i| x[i]));
            zt.clear();
            zt.extend((0..blk.len).map(|r| dot(b.row(r), &xl) - t3[blk.offset + r]));
            sc.apply_winv(&zt, &mut z[blk.offset..blk.offset + blk.len]);
        }
        Step { x, y, z }
    }

    /// Solves `[0 Aᵀ Gᵀ; A 0 0; G 0 -WᵀW] (x, y, z) = (r1, r2, r3)` with
    /// iterative refinement.
    fn solve(&self, prob: &Problem, scal: &[Scaling], r1: &[f64], r2: &[f64], r3: &[f64]) -> Step {
        let mut sol = self.solve_once(prob, scal, r1, r2, r3);
        let rnorm = 1.0 + norm2(r1).max(norm2(r2)).max(norm2(r3));
        for _ in 0..4 {
            let (e1, e2, e3) = kkt_residual(prob, scal, &sol, r1, r2, r3);
            let err = norm2(&e1).max(norm2(&e2)).max(norm2(&e3));
            if err <= 1e-15 * rnorm {
                break;
            }
            let d = self.solve_once(prob, scal, &e1, &e2, &e3);
            axpy(1.0, &d.x, &mut sol.x);
            axpy(1.0, &d.y, &mut sol.y);
            axpy(1.0, &d.z, &mut sol.z);
        }
        sol
    }
}

fn kkt_residual(
    prob: &Problem,
    scal: &[Scaling],
    s: &Step,
    r1: &[f64],
    r2: &[f64],
    r3: &[f64],
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut e1 = r1.to_vec();
    let mut t = vec![0.0; prob.n];
    if !s.y.is_empty() {
        t = prob.a.tr_matvec(&s.y);
    }
    prob.gt_mul_add(&s.z, &mut t);
    axpy(-1.0, &t, &mut e1);
    let mut e2 = r2.to_vec();
    if prob.a.rows() > 0 {
        axpy(-1.0, &prob.a.matvec(&s.x), &mut e2);
    }
    let mut gx = vec![0.0; prob.m];
    prob.g_mul(&s.x, &mut gx);
    let mut e3 = r3.to_vec();
    axpy(-1.0, &gx, &mut e3);
    let mut wz = Vec::new();
    let mut wtwz = Vec::new();
    for (blk, sc) in prob.blocks.iter().zip(scal) {
        let span = blk.offset..blk.offset + blk.len;
        wz.resize(blk.len, 0.0);
        wtwz.resize(blk.len, 0.0);
        sc.apply_w(&s.z[span.clone()], &mut wz);
        sc.apply_wt(&wz, &mut wtwz);
        axpy(1.0, &wtwz, &mut e3[span]);
    }
    (e1, e2, e3)
}

#[derive(Clone)]
struct Iterate {
    x: Vec<f64>,
    y: Vec<f64>,
    z: Vec<f64>,
    s: Vec<f64>,
    tau: f64,
    kappa: f64,
}

pub(super) fn solve(prog: &ConicProgram, set: &SolverSettings) -> ConicSolution {
    let prob = Problem::from_program(prog);
    let (n, m, p) = (prob.n, prob.m, prob.a.rows());
    let h = prob.h_full();
    let (cn, bn, hn) = (norm2(&prob.c).max(1.0), norm2(&prob.b).max(1.0), norm2(&h).max(1.0));

    // Initial point from two least-squares problems with W = I.
    let ident: Vec<(Scaling, Vec<f64>)> = prob.blocks.iter().map(|b| identity_scaling(b.kind, b.len)).collect();
    let ident_sc: Vec<Scaling> = ident.into_iter().map(|t| t.0).collect();
    let Some(kkt0) = Kkt::factor(&prob, &ident_sc) else {
        return breakdown(prog, n);
    };
    let primal = kkt0.solve(&prob, &ident_sc, &vec![0.0; n], &prob.b, &h);
    let neg_c: Vec<f64> = prob.c.iter().map(|v| -v).collect();
    let dual = kkt0.solve(&prob, &ident_sc, &neg_c, &vec![0.0; p], &vec![0.0; m]);
    let mut s: Vec<f64> = primal.z.iter().map(|v| -v).collect();
    let mut z = dual.z;
    shift_interior(&prob, &mut s);
    shift_interior(&prob, &mut z);
    let mut it = Iterate { x: primal.x, y: dual.y, z, s, tau: 1.0, kappa: 1.0 };
    if it.y.len() != p {
        it.y = vec![0.0; p];
    }

    let mut iterations = 0;
    // Best iterate by worst relative residual, returned if progress stalls.
    let mut best: Option<(f64, Iterate, f64, f64, usize)> = None;
    loop {
        // residuals
        let mut rx = vec![0.0; n];
        if p > 0 {
            rx = prob.a.tr_matvec(&it.y);
        }
        prob.gt_mul_add(&it.z, &mut rx);
        let dres_raw = norm2(&rx);
        axpy(it.tau, &prob.c, &mut rx);
        let ax = if p > 0 { prob.a.matvec(&it.x) } else { Vec::new() };
        let mut ry: Vec<f64> = ax.iter().map(|v| -v).collect();
        axpy(it.tau, &prob.b, &mut ry);
        let mut gx = vec![0.0; m];
        prob.g_mul(&it.x, &mut gx);
        let mut rz = gx.clone();
        axpy(1.0, &it.s, &mut rz);
        let pres_ray = norm2(&ax).max(norm2(&rz));
        axpy(-it.tau, &h, &mut rz);
        let cx = dot(&prob.c, &it.x);
        let by_hz = dot(&prob.b, &it.y) + dot(&h, &it.z);
        let rt = it.kappa + cx + by_hz;
        let sz = dot(&it.s, &it.z);
        let mu = (sz + it.tau * it.kappa) / (prob.degree as f64 + 1.0);

        let pcost = cx / it.tau;
        let dcost = -by_hz / it.tau;
        let pres = (norm2(&ry) / bn).max(norm2(&rz) / hn) / it.tau;
        let dres = norm2(&rx) / cn / it.tau;
        let gap_ok = (pcost - dcost).abs() <= set.gap_tol * (1.0 + pcost.abs());
        if pres <= set.feas_tol && dres <= set.feas_tol && gap_ok {
            return finish(prog, &prob, &it, SolveStatus::Optimal, pres, dres, iterations);
        }
        if by_hz < 0.0 && dres_raw / cn <= set.feas_tol * (-by_hz) / bn.max(hn) {
            return finish(prog, &prob, &it, SolveStatus::Infeasible, pres, dres, iterations);
        }
        if cx < 0.0 && pres_ray / bn.max(hn) <= set.feas_tol * (-cx) / cn {
            return finish(prog, &prob, &it, SolveStatus::Unbounded, pres, dres, iterations);
        }
        let merit = pres.max(dres).max((pcost - dcost).abs() / (1.0 + pcost.abs()));
        if merit.is_finite() && best.as_ref().is_none_or(|b| merit < b.0) {
            best = Some((merit, it.clone(), pres, dres, iterations));
        }
        let stalled = best.as_ref().is_some_and(|b| merit > 1e3 * b.0 && b.0 < 1e-6)
            || mu <= 1e-15 * (1.0 + pcost.abs());
        if iterations >= set.max_iter || !mu.is_finite() || stalled {
            return give_up(prog, &prob, it, best, pres, dres, iterations);
        }
        iterations += 1;

        // scaling
        let mut scal = Vec::with_capacity(prob.blocks.len());
        let mut lam = vec![0.0; m];
        let mut ok = true;
        for blk in &prob.blocks {
            let span = blk.offset..blk.offset + blk.len;
            match nt_scaling(blk.kind, &it.s[span.clone()], &it.z[span.clone()]) {
                Some((sc, l)) => {
                    lam[span].copy_from_slice(&l);
                    scal.push(sc);
                }
                None => {
                    ok = false;
                    break;
                }
            }
        }
        let kkt = if ok { Kkt::factor(&prob, &scal) } else { None };
        let Some(kkt) = kkt else {
            return give_up(prog, &prob, it, best, pres, dres, iterations);
        };

        let u2 = kkt.solve(&prob, &scal, &neg_c, &prob.b, &h);
        let den = dot(&prob.c, &u2.x) + dot(&prob.b, &u2.y) + dot(&h, &u2.z) - it.kappa / it.tau;

        let mut lamlam = vec![0.0; m];
        let mut e = vec![0.0; m];
        for blk in &prob.blocks {
            let span = blk.offset..blk.offset + blk.len;
            product(blk.kind, &lam[span.clone()], &lam[span.clone()], &mut lamlam[span.clone()]);
            cones::unit(blk.kind, &mut e[span]);
        }

        let mut corr_s = vec![0.0; m];
        let mut corr_k = 0.0;
        let mut sigma = 0.0;
        for phase in 0..2 {
            let eta = 1.0 - sigma;
            let dx: Vec<f64> = rx.iter().map(|v| -eta * v).collect();
            let neg_dy: Vec<f64> = ry.iter().map(|v| eta * v).collect();
            let dt = -eta * rt;
            let mut ds = vec![0.0; m];
            for i in 0..m {
                ds[i] = -lamlam[i] + sigma * mu * e[i] - corr_s[i];
            }
            let dk = -it.tau * it.kappa + sigma * mu - corr_k;
            // r3 = d_z - Wᵀ(λ \ d_s)
            let mut ls = vec![0.0; m];
            let mut r3: Vec<f64> = rz.iter().map(|v| -eta * v).collect();
            let mut tmp = Vec::new();
            for (blk, sc) in prob.blocks.iter().zip(&scal) {
                let span = blk.offset..blk.offset + blk.len;
                lambda_solve(blk.kind, sc, &lam[span.clone()], &ds[span.clone()], &mut ls[span.clone()]);
                tmp.resize(blk.len, 0.0);
                sc.apply_wt(&ls[span.clone()], &mut tmp);
                axpy(-1.0, &tmp, &mut r3[span]);
            }
            let u1 = kkt.solve(&prob, &scal, &dx, &neg_dy, &r3);
            let num = dt - dk / it.tau - (dot(&prob.c, &u1.x) + dot(&prob.b, &u1.y) + dot(&h, &u1.z));
            let dtau = num / den;
            let mut stepx = u1.x;
            axpy(dtau, &u2.x, &mut stepx);
            let mut stepy = u1.y;
            if p > 0 {
                axpy(dtau, &u2.y, &mut stepy);
            }
            let mut stepz = u1.z;
            axpy(dtau, &u2.z, &mut stepz);
            let dkappa = (dk - it.kappa * dtau) / it.tau;
            // scaled directions
            let mut zt = vec![0.0; m];
            let mut st = vec![0.0; m];
            let mut steps = vec![0.0; m];
            let mut alpha = f64::INFINITY;
            for (blk, sc) in prob.blocks.iter().zip(&scal) {
                let span = blk.offset..blk.offset + blk.len;
                sc.apply_w(&stepz[span.clone()], &mut zt[span.clone()]);
                for i in span.clone() {
                    st[i] = ls[i] - zt[i];
                }
                sc.apply_wt(&st[span.clone()], &mut steps[span.clone()]);
                let l = &lam[span.clone()];
                alpha = alpha
                    .min(max_step(blk.kind, sc, l, &st[span.clone()]))
                    .min(max_step(blk.kind, sc, l, &zt[span]));
            }
            if dtau < 0.0 {
                alpha = alpha.min(-it.tau / dtau);
            }
            if dkappa < 0.0 {
                alpha = alpha.min(-it.kappa / dkappa);
            }
            if phase == 0 {
                let a = alpha.min(1.0);
                sigma = (1.0 - a) * (1.0 - a) * (1.0 - a);
                for (blk, _) in prob.blocks.iter().zip(&scal) {
                    let span = blk.offset..blk.offset + blk.len;
                    product(blk.kind, &st[span.clone()], &zt[span.clone()], &mut corr_s[span]);
                }
                corr_k = dtau * dkappa;
            } else {
                let a = (set.step_fraction * alpha).min(1.0);
                axpy(a, &stepx, &mut it.x);
                if p > 0 {
                    axpy(a, &stepy, &mut it.y);
                }
                axpy(a, &stepz, &mut it.z);
                axpy(a, &steps, &mut it.s);
                it.tau += a * dtau;
                it.kappa += a * dkappa;
            }
        }
    }
}

/// Returns the best iterate seen when the current one cannot be improved.
fn give_up(
    prog: &ConicProgram,
    prob: &Problem,
    it: Iterate,
    best: Option<(f64, Iterate, f64, f64, usize)>,
    pres: f64,
    dres: f64,
    iterations: usize,
) -> ConicSolution {
    let mut sol = match best {
        Some((_, b, bp, bd, _)) => finish(prog, prob, &b, SolveStatus::MaxIter, bp, bd, iterations),
        None => finish(prog, prob, &it, SolveStatus::MaxIter, pres, dres, iterations),
    };
    sol.iterations = iterations;
    sol
}

fn shift_interior(prob: &Problem, v: &mut [f64]) {
    let mut shift = f64::NEG_INFINITY;
    for blk in &prob.blocks {
        shift = shift.max(cones::max_shift(blk.kind, &v[blk.offset..blk.offset + blk.len]));
    }
    if shift >= -1e-8 || !shift.is_finite() {
        let t = if shift.is_finite() { 1.0 + shift.max(0.0) } else { 1.0 };
        let mut e = vec![0.0; v.len()];
        for blk in &prob.blocks {
            cones::unit(blk.kind, &mut e[blk.offset..blk.offset + blk.len]);
        }
        axpy(t, &e, v);
    }
}

fn breakdown(prog: &ConicProgram, n: usize) -> ConicSolution {
    ConicSolution {
        status: SolveStatus::MaxIter,
        x: vec![0.0; n],
        duals: prog.constraints().iter().map(|c| vec![0.0; c.rows.len()]).collect(),
        primal_obj: f64::NAN,
        dual_obj: f64::NAN,
        primal_residual: f64::INFINITY,
        dual_residual: f64::INFINITY,
        iterations: 0,
    }
}

fn finish(
    prog: &ConicProgram,
    prob: &Problem,
    it: &Iterate,
    status: SolveStatus,
    pres: f64,
    dres: f64,
    iterations: usize,
) -> ConicSolution {
    let h = prob.h_full();
    let c0 = prog.objective_constant();
    // certificates are returned unnormalized by τ
    let scale = match status {
        SolveStatus::Infeasible => -1.0 / (dot(&prob.b, &it.y) + dot(&h, &it.z)),
        SolveStatus::Unbounded => -1.0 / dot(&prob.c, &it.x),
        _ => 1.0 / it.tau,
    };
    let x: Vec<f64> = it.x.iter().map(|v| v * scale).collect();
    let y: Vec<f64> = it.y.iter().map(|v| v * scale).collect();
    let z: Vec<f64> = it.z.iter().map(|v| v * scale).collect();

    let mut duals: Vec<Vec<f64>> = prog.constraints().iter().map(|c| vec![0.0; c.rows.len()]).collect();
    for (k, &(ci, ri)) in prob.eq_rows.iter().enumerate() {
        duals[ci][ri] = -y[k];
    }
    for blk in &prob.blocks {
        let mut d = z[blk.offset..blk.offset + blk.len].to_vec();
        if blk.rotated {
            rotate_head(&mut d, 1);
        }
        if let Kind::Psd(p) = blk.kind {
            let mut k = 0;
            for j in 0..p {
                for i in j..p {
                    if i != j {
                        d[k] *= FRAC_1_SQRT_2;
                    }
                    k += 1;
                }
            }
        }
        duals[blk.constraint] = d;
    }
    let (primal_obj, dual_obj) = match status {
        SolveStatus::Infeasible => (f64::INFINITY, f64::INFINITY),
        SolveStatus::Unbounded => (f64::NEG_INFINITY, f64::NEG_INFINITY),
        _ => (dot(&prob.c, &x) + c0, -(dot(&prob.b, &y) + dot(&h, &z)) + c0),
    };
    ConicSolution { status, x, duals, primal_obj, dual_obj, primal_residual: pres, dual_residual: dres, iterations }
}
