//! Matrix-free symmetric solvers: preconditioned conjugate gradient in a
//! plain and a fused-recurrence variant, and a Lanczos driver for one
//! extreme eigenvalue on the mean-zero subspace.
//!
//! Everything here talks to the operator through closures, so the same code
//! drives dense test matrices and the FFT-backed window engine.

use alloc::vec;
use alloc::vec::Vec;

use crate::math;
use crate::sum::{dot, Compensated};

/// y = A x.
pub type Apply<'a> = dyn FnMut(&[f64], &mut [f64]) + 'a;

/// (r) -> (u, w) with u = M⁻¹r and w = A u, both in one call; lets the
/// operator batch the two products however it likes.
pub type FusedStep<'a> = dyn FnMut(&[f64], &mut [f64], &mut [f64]) + 'a;

/// Which product `pcg_ops` wants from its operator closure. One closure
/// serving both calls lets a single operator object back A and M⁻¹ without
/// fighting the borrow checker.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OpCall {
    Apply,
    Precondition,
}

/// (call, x) -> y with y = A x or y = M⁻¹ x depending on `call`.
pub type OpSet<'a> = dyn FnMut(OpCall, &[f64], &mut [f64]) + 'a;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SolverError {
    NoConvergence { iterations: usize, rel_residual: f64 },
}

impl core::fmt::Display for SolverError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            SolverError::NoConvergence {
                iterations,
                rel_residual,
            } => write!(
                f,
                "no convergence after {iterations} iterations (relative residual {rel_residual:e})"
            ),
        }
    }
}

/// Outcome of a CG run. `rel_residual` is the recurrence residual relative
/// to ‖b‖; callers that need a certificate recompute it with a fresh
/// operator application. `history` samples the relative residual at every
/// true-residual refresh plus the final value, so a non-convergent run
/// still tells its story.
#[derive(Clone, Debug)]
pub struct SolveReport {
    pub iterations: usize,
    pub rel_residual: f64,
    pub converged: bool,
    pub history: Vec<f64>,
}

#[derive(Clone, Copy, Debug)]
pub struct PcgOptions {
    /// Relative residual target.
    pub tol: f64,
    pub max_iter: usize,
    /// Project the constant mode out of the iterates every iteration; the
    /// right-hand side must be mean-zero.
    pub project_mean: bool,
    /// Recompute the true residual every this many iterations.
    pub refresh_every: usize,
}

impl Default for PcgOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 5000,
            project_mean: false,
            refresh_every: 50,
        }
    }
}

/// Subtract the arithmetic mean.
pub fn project_mean(x: &mut [f64]) {
    if x.is_empty() {
        return;
    }
    let mut acc = Compensated::new();
    for v in x.iter() {
        acc.add(*v);
    }
    let mean = acc.value() / x.len() as f64;
    for v in x.iter_mut() {
        *v -= mean;
    }
}

fn norm2(x: &[f64]) -> f64 {
    math::sqrt(dot(x, x))
}

/// Preconditioned CG for symmetric positive (semi)definite A through an
/// `OpSet`, which must also keep M symmetric positive definite (on the
/// mean-zero subspace when `project_mean` is set). With `project_mean` the
/// solve runs on the mean-zero subspace, where the generator's Dirichlet
/// form is definite. `x` carries the starting vector in and the solution
/// out.
pub fn pcg_ops(ops: &mut OpSet<'_>, b: &[f64], x: &mut [f64], opts: &PcgOptions) -> SolveReport {
    let n = b.len();
    assert_eq!(x.len(), n);
    let b_norm = norm2(b);
    if b_norm == 0.0 {
        x.fill(0.0);
        return SolveReport {
            iterations: 0,
            rel_residual: 0.0,
            converged: true,
            history: Vec::new(),
        };
    }

    if opts.project_mean {
        project_mean(x);
    }
    let mut r = vec![0.0; n];
    let mut q = vec![0.0; n];
    if x.iter().all(|v| *v == 0.0) {
        r.copy_from_slice(b);
    } else {
        ops(OpCall::Apply, x, &mut r);
        for i in 0..n {
            r[i] = b[i] - r[i];
        }
    }
    if opts.project_mean {
        project_mean(&mut r);
    }
    let mut z = vec![0.0; n];
    ops(OpCall::Precondition, &r, &mut z);
    if opts.project_mean {
        project_mean(&mut z);
    }
    let mut p = z.clone();
    let mut gamma = dot(&r, &z);
    let mut res = norm2(&r);
    let mut iterations = 0;
    let mut history = Vec::new();
    while res > opts.tol * b_norm && iterations < opts.max_iter {
        iterations += 1;
        ops(OpCall::Apply, &p, &mut q);
        let pq = dot(&p, &q);
        debug_assert!(pq > 0.0, "direction with nonpositive curvature");
        let alpha = gamma / pq;
        for i in 0..n {
            x[i] += alpha * p[i];
        }
        if iterations % opts.refresh_every == 0 {
            ops(OpCall::Apply, x, &mut r);
            for i in 0..n {
                r[i] = b[i] - r[i];
            }
            history.push(norm2(&r) / b_norm);
        } else {
            for i in 0..n {
                r[i] -= alpha * q[i];
            }
        }
        if opts.project_mean {
            project_mean(&mut r);
        }
        ops(OpCall::Precondition, &r, &mut z);
        if opts.project_mean {
            project_mean(&mut z);
        }
        let gamma_next = dot(&r, &z);
        let beta = gamma_next / gamma;
        gamma = gamma_next;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
        res = norm2(&r);
    }
    if opts.project_mean {
        project_mean(x);
    }
    history.push(res / b_norm);
    SolveReport {
        iterations,
        rel_residual: res / b_norm,
        converged: res <= opts.tol * b_norm,
        history,
    }
}

/// `pcg_ops` with a diagonal preconditioner.
pub fn pcg_diag(
    apply: &mut Apply<'_>,
    diag: &[f64],
    b: &[f64],
    x: &mut [f64],
    opts: &PcgOptions,
) -> SolveReport {
    assert_eq!(diag.len(), b.len());
    let inv_diag: Vec<f64> = diag.iter().map(|&v| 1.0 / v).collect();
    assert!(inv_diag.iter().all(|v| v.is_finite() && *v > 0.0));
    let mut ops = |call: OpCall, v: &[f64], out: &mut [f64]| match call {
        OpCall::Apply => apply(v, out),
        OpCall::Precondition => {
            for (o, (a, w)) in out.iter_mut().zip(v.iter().zip(&inv_diag)) {
                *o = a * w;
            }
        }
    };
    pcg_ops(&mut ops, b, x, opts)
}

/// CG with the fused recurrence: per iteration one `step` call yields both
/// the preconditioned residual and its operator image, and the scalars are
/// updated from those. Mathematically the iterates match classic PCG; the
/// point is that the operator can produce u and Au together. `apply` is
/// used for occasional true-residual refreshes.
pub fn pcg_fused(
    step: &mut FusedStep<'_>,
    apply: &mut Apply<'_>,
    b: &[f64],
    x: &mut [f64],
    opts: &PcgOptions,
) -> SolveReport {
    let n = b.len();
    assert_eq!(x.len(), n);
    let b_norm = norm2(b);
    if b_norm == 0.0 {
        x.fill(0.0);
        return SolveReport {
            iterations: 0,
            rel_residual: 0.0,
            converged: true,
            history: Vec::new(),
        };
    }
    let mut r = vec![0.0; n];
    if x.iter().all(|v| *v == 0.0) {
        r.copy_from_slice(b);
    } else {
        apply(x, &mut r);
        for i in 0..n {
            r[i] = b[i] - r[i];
        }
    }
    let mut u = vec![0.0; n];
    let mut w = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut q = vec![0.0; n];
    let mut gamma_prev = 0.0;
    let mut alpha_prev = 0.0;
    let mut res = norm2(&r);
    let mut iterations = 0;
    let mut history = Vec::new();
    while res > opts.tol * b_norm && iterations < opts.max_iter {
        step(&r, &mut u, &mut w);
        let gamma = dot(&r, &u);
        let delta = dot(&w, &u);
        debug_assert!(gamma > 0.0, "preconditioner lost definiteness");
        let alpha;
        if iterations == 0 {
            p.copy_from_slice(&u);
            q.copy_from_slice(&w);
            alpha = gamma / delta;
        } else {
            let beta = gamma / gamma_prev;
            alpha = gamma / (delta - beta * gamma / alpha_prev);
            for i in 0..n {
                p[i] = u[i] + beta * p[i];
                q[i] = w[i] + beta * q[i];
            }
        }
        iterations += 1;
        for i in 0..n {
            x[i] += alpha * p[i];
        }
        if iterations % opts.refresh_every == 0 {
            apply(x, &mut r);
            for i in 0..n {
                r[i] = b[i] - r[i];
            }
            history.push(norm2(&r) / b_norm);
        } else {
            for i in 0..n {
                r[i] -= alpha * q[i];
            }
        }
        gamma_prev = gamma;
        alpha_prev = alpha;
        res = norm2(&r);
    }
    history.push(res / b_norm);
    SolveReport {
        iterations,
        rel_residual: res / b_norm,
        converged: res <= opts.tol * b_norm,
        history,
    }
}

// ---------------------------------------------------------------------------
// small symmetric tridiagonal eigensolver

/// Eigendecomposition of the symmetric tridiagonal matrix with diagonal `d`
/// and off-diagonal `e` (QL with implicit shifts). Returns eigenvalues
/// ascending and the matching eigenvectors as rows of an n×n buffer.
pub fn tridiag_eigen(d_in: &[f64], e_in: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = d_in.len();
    assert_eq!(e_in.len() + 1, n.max(1));
    let mut d = d_in.to_vec();
    let mut e = vec![0.0; n];
    if n > 1 {
        e[..n - 1].copy_from_slice(e_in);
    }
    // z starts as the identity; rotations accumulate eigenvectors in columns
    let mut z = vec![0.0; n * n];
    for i in 0..n {
        z[i * n + i] = 1.0;
    }
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            assert!(iter <= 64, "tridiagonal QL did not converge");
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = math::hypot(g, 1.0);
            let sign_r = if g >= 0.0 { r } else { -r };
            g = d[m] - d[l] + e[l] / (g + sign_r);
            let mut s = 1.0;
            let mut c = 1.0;
            let mut p = 0.0;
            let mut underflow = false;
            for i in (l..m).rev() {
                let mut f = s * e[i];
                let b = c * e[i];
                r = math::hypot(f, g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    underflow = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                for k in 0..n {
                    f = z[k * n + i + 1];
                    z[k * n + i + 1] = s * z[k * n + i] + c * f;
                    z[k * n + i] = c * z[k * n + i] - s * f;
                }
            }
            if underflow {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    // sort ascending, carrying eigenvector columns, and emit them as rows
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| d[a].partial_cmp(&d[b]).unwrap());
    let values: Vec<f64> = order.iter().map(|&j| d[j]).collect();
    let mut vectors = vec![0.0; n * n];
    for (row, &j) in order.iter().enumerate() {
        for k in 0..n {
            vectors[row * n + k] = z[k * n + j];
        }
    }
    (values, vectors)
}

// ---------------------------------------------------------------------------
// Lanczos

#[derive(Clone, Debug)]
pub struct LanczosReport {
    /// Largest eigenvalue of the operator on the mean-zero subspace.
    pub value: f64,
    /// The matching Ritz vector, unit norm, mean-zero.
    pub vector: Vec<f64>,
    pub steps: usize,
    /// A-invariant residual bound β_j |s_j| at acceptance.
    pub residual: f64,
}

/// Largest eigenvalue of a symmetric positive operator restricted to the
/// mean-zero subspace, by Lanczos with the constant mode deflated from
/// every basis vector and full reorthogonalization. Feeding it a solve with
/// A⁻¹ turns it into a shift-invert bottom-of-spectrum method.
pub fn lanczos_extreme(
    apply: &mut Apply<'_>,
    v0: &[f64],
    max_steps: usize,
    tol: f64,
) -> Result<LanczosReport, SolverError> {
    let n = v0.len();
    let mut v = v0.to_vec();
    project_mean(&mut v);
    let nv = norm2(&v);
    assert!(nv > 0.0, "start vector is constant");
    for x in v.iter_mut() {
        *x /= nv;
    }
    let mut basis: Vec<Vec<f64>> = vec![v];
    let mut alpha: Vec<f64> = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let mut w = vec![0.0; n];
    let mut best = (0.0, 0.0, 0usize); // value, residual bound, steps
    for j in 0..max_steps {
        apply(&basis[j], &mut w);
        project_mean(&mut w);
        let a = dot(&w, &basis[j]);
        alpha.push(a);
        for i in 0..n {
            w[i] -= a * basis[j][i];
        }
        if j > 0 {
            let b = beta[j - 1];
            for i in 0..n {
                w[i] -= b * basis[j - 1][i];
            }
        }
        // full reorthogonalization keeps the basis clean at this scale
        for q in &basis {
            let c = dot(&w, q);
            for i in 0..n {
                w[i] -= c * q[i];
            }
        }
        let b_next = norm2(&w);
        let (values, vectors) = tridiag_eigen(&alpha, &beta);
        let top = values.len() - 1;
        let theta = values[top];
        let tail = vectors[top * values.len() + values.len() - 1].abs();
        let bound = b_next * tail;
        best = (theta, bound, j + 1);
        if bound <= tol * theta.abs() || b_next <= f64::EPSILON * theta.abs() {
            let mut ritz = vec![0.0; n];
            for (s, q) in basis.iter().enumerate() {
                let coef = vectors[top * values.len() + s];
                for i in 0..n {
                    ritz[i] += coef * q[i];
                }
            }
            project_mean(&mut ritz);
            let nr = norm2(&ritz);
            for x in ritz.iter_mut() {
                *x /= nr;
            }
            return Ok(LanczosReport {
                value: theta,
                vector: ritz,
                steps: j + 1,
                residual: bound,
            });
        }
        beta.push(b_next);
        let next: Vec<f64> = w.iter().map(|x| x / b_next).collect();
        basis.push(next);
    }
    Err(SolverError::NoConvergence {
        iterations: best.2,
        rel_residual: best.1 / best.0.abs().max(f64::MIN_POSITIVE),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hashed(n: usize, salt: u64) -> Vec<f64> {
        (0..n)
            .map(|i| {
                let mut h = (i as u64 + 1).wrapping_mul(salt | 1);
                h ^= h >> 33;
                h = h.wrapping_mul(0xff51afd7ed558ccd);
                h ^= h >> 33;
                (h >> 11) as f64 / (1u64 << 53) as f64 - 0.5
            })
            .collect()
    }

    /// Dense SPD test matrix: diagonally dominant with hashed off-diagonals.
    fn spd_matrix(n: usize, salt: u64) -> Vec<f64> {
        let raw = hashed(n * n, salt);
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                let v = 0.5 * (raw[i * n + j] + raw[j * n + i]);
                a[i * n + j] = v;
            }
        }
        for i in 0..n {
            let row: f64 = (0..n).map(|j| a[i * n + j].abs()).sum();
            a[i * n + i] = row + 1.0;
        }
        a
    }

    fn matvec(a: &[f64], x: &[f64], y: &mut [f64]) {
        let n = x.len();
        for i in 0..n {
            y[i] = dot(&a[i * n..(i + 1) * n], x);
        }
    }

    /// Plain Gaussian elimination with partial pivoting, for oracles.
    fn dense_solve(a_in: &[f64], b_in: &[f64]) -> Vec<f64> {
        let n = b_in.len();
        let mut a = a_in.to_vec();
        let mut b = b_in.to_vec();
        for col in 0..n {
            let piv = (col..n)
                .max_by(|&p, &q| {
                    a[p * n + col]
                        .abs()
                        .partial_cmp(&a[q * n + col].abs())
                        .unwrap()
                })
                .unwrap();
            if piv != col {
                for j in 0..n {
                    a.swap(col * n + j, piv * n + j);
                }
                b.swap(col, piv);
            }
            let pv = a[col * n + col];
            for row in col + 1..n {
                let f = a[row * n + col] / pv;
                if f == 0.0 {
                    continue;
                }
                for j in col..n {
                    a[row * n + j] -= f * a[col * n + j];
                }
                b[row] -= f * b[col];
            }
        }
        let mut x = vec![0.0; n];
        for row in (0..n).rev() {
            let mut s = b[row];
            for j in row + 1..n {
                s -= a[row * n + j] * x[j];
            }
            x[row] = s / a[row * n + row];
        }
        x
    }

    #[test]
    fn pcg_matches_dense_solve() {
        let n = 40;
        let a = spd_matrix(n, 0xdead_beef);
        let b = hashed(n, 0x1111);
        let diag: Vec<f64> = (0..n).map(|i| a[i * n + i]).collect();
        let mut x = vec![0.0; n];
        let opts = PcgOptions {
            tol: 1e-12,
            ..PcgOptions::default()
        };
        let rep = pcg_diag(&mut |u, y| matvec(&a, u, y), &diag, &b, &mut x, &opts);
        assert!(rep.converged, "residual {}", rep.rel_residual);
        let want = dense_solve(&a, &b);
        for i in 0..n {
            assert!((x[i] - want[i]).abs() < 1e-10, "{} vs {}", x[i], want[i]);
        }
    }

    /// Free-end path graph Laplacian: singular with constant kernel, so the
    /// projected solver must work on the mean-zero complement.
    fn path_laplacian_apply(x: &[f64], y: &mut [f64]) {
        let n = x.len();
        for i in 0..n {
            let mut v = 0.0;
            if i > 0 {
                v += x[i] - x[i - 1];
            }
            if i + 1 < n {
                v += x[i] - x[i + 1];
            }
            y[i] = v;
        }
    }

    #[test]
    fn projected_pcg_on_singular_laplacian() {
        let n = 64;
        let mut b = hashed(n, 0x7777);
        project_mean(&mut b);
        let diag: Vec<f64> = (0..n)
            .map(|i| if i == 0 || i == n - 1 { 1.0 } else { 2.0 })
            .collect();
        let opts = PcgOptions {
            tol: 1e-11,
            project_mean: true,
            ..PcgOptions::default()
        };
        let mut x = vec![0.0; n];
        let rep = pcg_diag(&mut path_laplacian_apply, &diag, &b, &mut x, &opts);
        assert!(rep.converged);
        let mean: f64 = x.iter().sum::<f64>() / n as f64;
        assert!(mean.abs() < 1e-12);
        let mut lx = vec![0.0; n];
        path_laplacian_apply(&x, &mut lx);
        let err = norm2(&lx.iter().zip(&b).map(|(a, c)| a - c).collect::<Vec<_>>());
        assert!(err < 1e-10 * norm2(&b));
        // a different starting vector lands on the same representative
        let mut x2 = hashed(n, 0x9999);
        let rep2 = pcg_diag(&mut path_laplacian_apply, &diag, &b, &mut x2, &opts);
        assert!(rep2.converged);
        for i in 0..n {
            assert!((x[i] - x2[i]).abs() < 1e-7, "restart disagreement at {i}");
        }
    }

    #[test]
    fn fused_recurrence_matches_plain_pcg() {
        let n = 48;
        let a = spd_matrix(n, 0xabcd);
        let b = hashed(n, 0x2222);
        let diag: Vec<f64> = (0..n).map(|i| a[i * n + i]).collect();
        let opts = PcgOptions {
            tol: 1e-12,
            ..PcgOptions::default()
        };
        let mut x_plain = vec![0.0; n];
        pcg_diag(&mut |u, y| matvec(&a, u, y), &diag, &b, &mut x_plain, &opts);
        let mut x_fused = vec![0.0; n];
        let mut step = |r: &[f64], u: &mut [f64], w: &mut [f64]| {
            for i in 0..n {
                u[i] = r[i] / diag[i];
            }
            matvec(&a, u, w);
        };
        let rep = pcg_fused(
            &mut step,
            &mut |u, y| matvec(&a, u, y),
            &b,
            &mut x_fused,
            &opts,
        );
        assert!(rep.converged);
        for i in 0..n {
            assert!(
                (x_plain[i] - x_fused[i]).abs() < 1e-9,
                "{} vs {}",
                x_plain[i],
                x_fused[i]
            );
        }
    }

    #[test]
    fn tridiagonal_eigenvalues_exact() {
        // second difference matrix: eigenvalues 2 − 2cos(jπ/(n+1))
        let n = 12;
        let d = vec![2.0; n];
        let e = vec![-1.0; n - 1];
        let (values, vectors) = tridiag_eigen(&d, &e);
        for (j, &v) in values.iter().enumerate() {
            let want = 2.0 - 2.0 * math::cos((j + 1) as f64 * core::f64::consts::PI / (n + 1) as f64);
            assert!((v - want).abs() < 1e-12, "j={j}: {v} vs {want}");
        }
        // rows are orthonormal eigenvectors
        for a in 0..n {
            for b in 0..n {
                let g = dot(&vectors[a * n..(a + 1) * n], &vectors[b * n..(b + 1) * n]);
                let want = if a == b { 1.0 } else { 0.0 };
                assert!((g - want).abs() < 1e-12);
            }
        }
        // residual of the eigenpairs against the tridiagonal itself
        for a in 0..n {
            let v = &vectors[a * n..(a + 1) * n];
            for i in 0..n {
                let mut av = 2.0 * v[i];
                if i > 0 {
                    av -= v[i - 1];
                }
                if i + 1 < n {
                    av -= v[i + 1];
                }
                assert!((av - values[a] * v[i]).abs() < 1e-11);
            }
        }
    }

    #[test]
    fn shift_invert_lanczos_finds_the_gap() {
        // free-end path Laplacian: smallest mean-zero eigenvalue is
        // 2(1 − cos(π/n)); invert through the projected CG, exactly the
        // composition the spectral audits use
        let n = 24;
        let diag: Vec<f64> = (0..n)
            .map(|i| if i == 0 || i == n - 1 { 1.0 } else { 2.0 })
            .collect();
        let opts = PcgOptions {
            tol: 1e-13,
            project_mean: true,
            ..PcgOptions::default()
        };
        let mut inverse = |v: &[f64], y: &mut [f64]| {
            let mut rhs = v.to_vec();
            project_mean(&mut rhs);
            y.fill(0.0);
            let rep = pcg_diag(&mut path_laplacian_apply, &diag, &rhs, y, &opts);
            assert!(rep.converged);
        };
        let v0 = hashed(n, 0x4343);
        let rep = lanczos_extreme(&mut inverse, &v0, 60, 1e-12).unwrap();
        let gap = 1.0 / rep.value;
        let want = 2.0 * (1.0 - math::cos(core::f64::consts::PI / n as f64));
        assert!((gap - want).abs() < 1e-9 * want, "{gap} vs {want}");
        // Ritz vector is an eigenvector of the Laplacian itself
        let mut lv = vec![0.0; n];
        path_laplacian_apply(&rep.vector, &mut lv);
        for i in 0..n {
            assert!((lv[i] - gap * rep.vector[i]).abs() < 1e-8);
        }
    }

    #[test]
    fn zero_rhs_short_circuits() {
        let diag = vec![1.0; 8];
        let b = vec![0.0; 8];
        let mut x = vec![3.0; 8];
        let rep = pcg_diag(
            &mut |u, y| y.copy_from_slice(u),
            &diag,
            &b,
            &mut x,
            &PcgOptions::default(),
        );
        assert!(rep.converged && rep.iterations == 0);
        assert!(x.iter().all(|v| *v == 0.0));
    }
}
