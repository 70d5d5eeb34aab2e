//! The scaled resolvent experiment: solve (λ − ℒ^{(k)})u = f on a finite
//! window of the k⁻¹-lattice, compare against the homogenized continuum
//! resolvent, and track the error down a ladder of k.
//!
//! The infinite-lattice resolvent is approximated by restricting pair
//! interactions to the window (a Dirichlet-type restriction). No rigorous
//! window bound is used; the window-doubling diagnostic in `rate_study`
//! quantifies the effect empirically.

use core::cell::RefCell;

use alloc::vec;
use alloc::vec::Vec;

use crate::corrector::{
    center_and_extend, solve_corrector, CorrectorError, CorrectorOptions, ExtendError,
    ExtendedCorrector,
};
use crate::env::ConductanceField;
use crate::lattice::{BoxSpec, GridField, Measure, MAX_D};
use crate::math;
use crate::op::{scale_factor, WindowOperator};
use crate::par::Executor;
use crate::reference::TestFunction;
use crate::solver::{self, PcgOptions, SolveReport};
use crate::sum::{dot, sum_sq, Compensated};

/// m with 2^m ≤ k < 2^{m+1}; the corrector scale coupled to k.
pub fn scale_exponent(k: i64) -> u32 {
    assert!(k >= 2);
    63 - (k as u64).leading_zeros()
}

/// Rate exponent −1/2 + (1+γ)/(2(d−2)) carried in reports for reference.
pub fn theoretical_exponent(d: usize, gamma: f64) -> f64 {
    assert!(d > 2);
    -0.5 + (1.0 + gamma) / (2.0 * (d as f64 - 2.0))
}

#[derive(Clone, Copy, Debug)]
pub struct ResolventOptions {
    /// Window halfwidth W in macroscopic units: the solve lives on the
    /// lattice box of halfwidth `window`·k.
    pub window: i64,
    /// Relative residual target for the CG solve.
    pub tol: f64,
    pub max_iter: usize,
    /// Optional pair-interaction cutoff |x−y| ≤ cap (lattice units);
    /// `None` keeps every in-window pair.
    pub cap: Option<i64>,
    /// Upper bound on the solve's estimated allocation in bytes.
    pub mem_budget: usize,
}

impl Default for ResolventOptions {
    fn default() -> Self {
        Self {
            window: 2,
            tol: 1e-8,
            max_iter: 5000,
            cap: None,
            mem_budget: 4 << 30,
        }
    }
}

/// Estimated peak allocation of a solve in bytes: two padded transform
/// scratch grids plus ten box-sized vectors (operator row sums and
/// convolution scratch, right-hand side, iterate, and the solver's five
/// recurrence vectors, with slack).
pub fn solve_memory_estimate(d: usize, k: i64, window: i64) -> usize {
    let width = (2 * window * k) as usize;
    let pn = (2 * width - 1).next_power_of_two();
    let padded = pn.pow(d as u32);
    let n = width.pow(d as u32);
    8 * (2 * padded + 10 * n)
}

#[derive(Clone, Debug)]
pub enum ResolventError {
    /// The test function's support must sit strictly inside the window.
    SupportOutsideWindow { r0: f64, window: i64 },
    BudgetExceeded { bytes: usize, budget: usize },
    NoConvergence { report: SolveReport },
}

impl core::fmt::Display for ResolventError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            ResolventError::SupportOutsideWindow { r0, window } => {
                write!(f, "support radius {r0} does not fit inside B_{window}")
            }
            ResolventError::BudgetExceeded { bytes, budget } => {
                write!(f, "solve needs about {bytes} bytes, budget is {budget}")
            }
            ResolventError::NoConvergence { report } => write!(
                f,
                "CG stalled at {:e} after {} iterations",
                report.rel_residual, report.iterations
            ),
        }
    }
}

/// One solved instance of (λ − ℒ^{(k),W})u = f.
#[derive(Clone, Debug)]
pub struct ResolventSolution {
    pub k: i64,
    pub lambda: f64,
    /// Macroscopic window halfwidth W.
    pub window: i64,
    /// u on the lattice box of halfwidth W·k, lattice scale k.
    pub u: GridField,
    /// Fresh relative residual ‖f − (λ−ℒ)u‖/‖f‖ recomputed after the solve.
    pub residual: f64,
    /// Scaled Dirichlet energy ℰ^{(k)}(u,u) under counting measure.
    pub energy: f64,
    /// Relative defect of λ‖u‖² + ℰ(u,u) = ⟨f,u⟩.
    pub energy_gap: f64,
    pub spec_digest: u64,
    pub iterations: usize,
}

/// Solve with an explicit right-hand side sampled on the window box. The
/// counting-measure inner products match the μ^{(k)} ones up to a common
/// k^{−d} factor, which cancels in every reported ratio.
pub fn solve_scaled_resolvent_rhs<E: Executor>(
    ex: &E,
    field: &ConductanceField,
    k: i64,
    lambda: f64,
    b: &GridField,
    opts: &ResolventOptions,
) -> Result<ResolventSolution, ResolventError> {
    assert!(k >= 2 && lambda > 0.0 && opts.window >= 1);
    let d = field.spec().d;
    let domain = BoxSpec::centered(d, opts.window * k);
    assert_eq!(b.domain, domain, "right-hand side lives off the window");
    assert_eq!(b.vdim, 1);
    let bytes = solve_memory_estimate(d, k, opts.window);
    if bytes > opts.mem_budget {
        return Err(ResolventError::BudgetExceeded {
            bytes,
            budget: opts.mem_budget,
        });
    }
    let win = RefCell::new(WindowOperator::new(
        ex,
        *field,
        domain,
        scale_factor(d, k),
        opts.cap,
    ));
    let n = domain.site_count();
    let mut x = vec![0.0; n];
    let pcg = PcgOptions {
        tol: opts.tol,
        max_iter: opts.max_iter,
        project_mean: false,
        refresh_every: 50,
    };
    let report = {
        let mut step =
            |r: &[f64], u: &mut [f64], w: &mut [f64]| win.borrow_mut().fused(lambda, r, u, w);
        let mut apply =
            |u: &[f64], w: &mut [f64]| win.borrow_mut().apply_resolvent(lambda, u, w);
        solver::pcg_fused(&mut step, &mut apply, &b.data, &mut x, &pcg)
    };
    if !report.converged {
        return Err(ResolventError::NoConvergence { report });
    }

    // one extra apply certifies the residual and the energy identity
    let mut w = vec![0.0; n];
    win.borrow_mut().apply_resolvent(lambda, &x, &mut w);
    let mut rr = Compensated::new();
    for i in 0..n {
        let e = b.data[i] - w[i];
        rr.add(e * e);
    }
    let residual = math::sqrt(rr.value() / sum_sq(&b.data).max(f64::MIN_POSITIVE));
    let wu = dot(&w, &x);
    let fu = dot(&b.data, &x);
    let energy = wu - lambda * sum_sq(&x);
    let energy_gap = (wu - fu).abs() / fu.abs().max(f64::MIN_POSITIVE);

    Ok(ResolventSolution {
        k,
        lambda,
        window: opts.window,
        u: GridField {
            domain,
            k,
            vdim: 1,
            data: x,
        },
        residual,
        energy,
        energy_gap,
        spec_digest: field.spec().digest(),
        iterations: report.iterations,
    })
}

/// Sample a macroscopic function on the window box of the k⁻¹-lattice.
pub fn sample_on_window(
    d: usize,
    k: i64,
    window: i64,
    f: &dyn Fn([f64; MAX_D]) -> f64,
) -> GridField {
    let domain = BoxSpec::centered(d, window * k);
    let inv_k = 1.0 / k as f64;
    GridField::from_fn(domain, k, |s| {
        let mut x = [0.0; MAX_D];
        for i in 0..d {
            x[i] = s.c[i] as f64 * inv_k;
        }
        f(x)
    })
}

/// Solve (λ − ℒ^{(k),W})u = f for the reference right-hand side.
pub fn solve_scaled_resolvent<E: Executor>(
    ex: &E,
    field: &ConductanceField,
    k: i64,
    lambda: f64,
    f: &TestFunction,
    opts: &ResolventOptions,
) -> Result<ResolventSolution, ResolventError> {
    assert_eq!(f.d, field.spec().d);
    assert_eq!(f.lambda, lambda, "test function carries its own λ");
    if f.r0 >= opts.window as f64 {
        return Err(ResolventError::SupportOutsideWindow {
            r0: f.r0,
            window: opts.window,
        });
    }
    let b = sample_on_window(f.d, k, opts.window, &|x| f.f_at(x));
    solve_scaled_resolvent_rhs(ex, field, k, lambda, &b, opts)
}

// ---------------------------------------------------------------------------
// two-scale expansion

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TwoScaleError {
    /// The corrector must be extended at the exponent m with 2^m ≤ k < 2^{m+1}.
    ExponentMismatch { base_m: u32, k: i64 },
    DimensionMismatch,
}

impl core::fmt::Display for TwoScaleError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            TwoScaleError::ExponentMismatch { base_m, k } => {
                write!(f, "corrector extended at exponent {base_m}, k = {k} needs {}", scale_exponent(*k))
            }
            TwoScaleError::DimensionMismatch => write!(f, "corrector and reference dimensions differ"),
        }
    }
}

/// v(x) = ū(x) + k^{−1}⟨∇ū(x), φ̂(kx)⟩ on the window, zero outside the
/// support of ū.
pub fn two_scale_expansion(
    u_bar: &TestFunction,
    phi: &ExtendedCorrector,
    k: i64,
    window: i64,
) -> Result<GridField, TwoScaleError> {
    let d = u_bar.d;
    if phi.d() != d {
        return Err(TwoScaleError::DimensionMismatch);
    }
    if phi.base_m != scale_exponent(k) {
        return Err(TwoScaleError::ExponentMismatch {
            base_m: phi.base_m,
            k,
        });
    }
    let domain = BoxSpec::centered(d, window * k);
    let inv_k = 1.0 / k as f64;
    let r0_sq = u_bar.r0 * u_bar.r0;
    Ok(GridField::from_fn(domain, k, |s| {
        let mut x = [0.0; MAX_D];
        let mut nsq = 0.0;
        for i in 0..d {
            x[i] = s.c[i] as f64 * inv_k;
            nsq += x[i] * x[i];
        }
        if nsq >= r0_sq {
            return 0.0;
        }
        let grad = u_bar.grad_resolvent(x);
        let ph = phi.at_site(s);
        let mut corr = 0.0;
        for i in 0..d {
            corr += grad[i] * ph[i];
        }
        u_bar.resolvent_at(x) + inv_k * corr
    }))
}

// ---------------------------------------------------------------------------
// error quadrature

/// L²(ℝ^d) distance of the piecewise-constant extensions of two fields on
/// the same box and scale; exact since the extensions share cells.
pub fn lattice_l2_diff(a: &GridField, b: &GridField) -> f64 {
    assert_eq!(a.domain, b.domain);
    assert_eq!(a.k, b.k);
    assert!(a.vdim == 1 && b.vdim == 1);
    let mut acc = Compensated::new();
    for i in 0..a.data.len() {
        let e = a.data[i] - b.data[i];
        acc.add(e * e);
    }
    math::sqrt(a.site_weight(Measure::Normalized) * acc.value())
}

#[derive(Clone, Copy, Debug)]
pub struct ErrorQuadrature {
    pub value: f64,
    /// Gauss points per axis of the accepted evaluation.
    pub order: u32,
    /// Relative gap to the previous order; ≤ 1e−6 when the refinement
    /// ladder converged.
    pub refinement_gap: f64,
}

/// Gauss–Legendre nodes and weights on [0,1] by Newton iteration on P_q.
fn gauss_unit(q: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; q];
    let mut weights = vec![0.0; q];
    for i in 0..q {
        let mut t = math::cos(
            core::f64::consts::PI * (i as f64 + 0.75) / (q as f64 + 0.5),
        );
        let mut dp = 0.0;
        for _ in 0..64 {
            let mut p0 = 1.0;
            let mut p1 = t;
            for j in 2..=q {
                let pj = ((2 * j - 1) as f64 * t * p1 - (j - 1) as f64 * p0) / j as f64;
                p0 = p1;
                p1 = pj;
            }
            dp = q as f64 * (t * p1 - p0) / (t * t - 1.0);
            let step = p1 / dp;
            t -= step;
            if step.abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = (1.0 - t) / 2.0;
        weights[i] = 1.0 / ((1.0 - t * t) * dp * dp);
    }
    (nodes, weights)
}

fn cell_error_sq(u: &GridField, u_bar: &TestFunction, q: usize) -> f64 {
    let d = u.domain.d;
    let h = 1.0 / u.k as f64;
    let (nodes, weights) = gauss_unit(q);
    let r0_sq = u_bar.r0 * u_bar.r0;
    let mut away = Compensated::new();
    let mut near = Compensated::new();
    for (i, s) in u.domain.iter().enumerate() {
        let c = u.data[i];
        // squared distance from the origin to the cell [s, s+1)/k
        let mut dist_sq = 0.0;
        for j in 0..d {
            let lo = s.c[j] as f64 * h;
            let hi = lo + h;
            let t = if lo > 0.0 {
                lo
            } else if hi < 0.0 {
                -hi
            } else {
                0.0
            };
            dist_sq += t * t;
        }
        if dist_sq >= r0_sq {
            away.add(c * c);
            continue;
        }
        let mut idx = [0usize; MAX_D];
        loop {
            let mut x = [0.0; MAX_D];
            let mut wt = 1.0;
            for j in 0..d {
                x[j] = (s.c[j] as f64 + nodes[idx[j]]) * h;
                wt *= weights[idx[j]];
            }
            let e = c - u_bar.resolvent_at(x);
            near.add(wt * e * e);
            let mut j = d;
            loop {
                if j == 0 {
                    break;
                }
                j -= 1;
                idx[j] += 1;
                if idx[j] < q {
                    break;
                }
                idx[j] = 0;
            }
            if idx.iter().take(d).all(|&v| v == 0) {
                break;
            }
        }
    }
    math::powi(h, d as i32) * (away.value() + near.value())
}

/// ‖u − ū‖_{L²(ℝ^d)} with u extended piecewise-constant (zero outside its
/// box) and ū integrated per cell by tensor Gauss–Legendre, refined from 4
/// points per axis until two consecutive orders agree to 1e−6 relative.
pub fn error_quadrature(u: &GridField, u_bar: &TestFunction) -> ErrorQuadrature {
    assert_eq!(u.domain.d, u_bar.d);
    assert_eq!(u.vdim, 1);
    let orders = [4usize, 6, 8, 12];
    let mut prev = math::sqrt(cell_error_sq(u, u_bar, orders[0]));
    let mut out = ErrorQuadrature {
        value: prev,
        order: orders[0] as u32,
        refinement_gap: f64::INFINITY,
    };
    for &q in &orders[1..] {
        let val = math::sqrt(cell_error_sq(u, u_bar, q));
        let gap = (val - prev).abs() / val.max(f64::MIN_POSITIVE);
        out = ErrorQuadrature {
            value: val,
            order: q as u32,
            refinement_gap: gap,
        };
        if gap <= 1e-6 {
            return out;
        }
        prev = val;
    }
    out
}

pub fn resolvent_error(u: &GridField, u_bar: &TestFunction) -> f64 {
    error_quadrature(u, u_bar).value
}

// ---------------------------------------------------------------------------
// rate study

#[derive(Clone, Copy, Debug)]
pub struct RateOptions {
    pub solve: ResolventOptions,
    /// Two-scale rows are produced only when the corrector box exponent
    /// m + n₀ stays at or below this cap.
    pub two_scale_max_exponent: u32,
    pub n0: u32,
    pub corrector: CorrectorOptions,
    /// Re-solve the first (seed, k) instance on a window widened by one
    /// macroscopic unit and report the error shift.
    pub window_check: bool,
}

impl Default for RateOptions {
    fn default() -> Self {
        Self {
            solve: ResolventOptions::default(),
            two_scale_max_exponent: 6,
            n0: 2,
            corrector: CorrectorOptions::default(),
            window_check: true,
        }
    }
}

#[derive(Clone, Debug)]
pub enum RateError {
    Solve(ResolventError),
    Corrector(CorrectorError),
    Extend(ExtendError),
    TwoScale(TwoScaleError),
}

impl core::fmt::Display for RateError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            RateError::Solve(e) => write!(f, "{e}"),
            RateError::Corrector(e) => write!(f, "{e}"),
            RateError::Extend(e) => write!(f, "{e}"),
            RateError::TwoScale(e) => write!(f, "{e}"),
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct RateRow {
    pub seed: u64,
    pub k: i64,
    pub e_k: f64,
    /// ‖u_k − v_k‖_{L²}; absent when the corrector box exceeded the cap.
    pub two_scale_err: Option<f64>,
    pub residual: f64,
    pub energy_gap: f64,
    pub iterations: usize,
    pub quad_order: u32,
    pub wall_seconds: f64,
}

#[derive(Clone, Copy, Debug)]
pub struct WindowCheck {
    pub k: i64,
    pub seed: u64,
    pub base_error: f64,
    pub widened_error: f64,
}

#[derive(Clone, Debug)]
pub struct RateReport {
    pub d: usize,
    pub lambda: f64,
    pub gamma: f64,
    pub window: i64,
    pub tol: f64,
    pub n0: u32,
    pub two_scale_max_exponent: u32,
    pub rows: Vec<RateRow>,
    pub theoretical_exponent: f64,
    /// Pooled least-squares slope of log e_k against log k.
    pub fitted_exponent: f64,
    /// e_k nonincreasing in k per seed, with 10% slack per step.
    pub monotone: bool,
    pub window_check: Option<WindowCheck>,
}

/// Errors down the k ladder for each environment. `clock` supplies seconds
/// for the runtime column (pass `&|| 0.0` when no clock is available).
pub fn rate_study<E: Executor>(
    ex: &E,
    fields: &[ConductanceField],
    ks: &[i64],
    lambda: f64,
    f: &TestFunction,
    gamma: f64,
    opts: &RateOptions,
    clock: &dyn Fn() -> f64,
) -> Result<RateReport, RateError> {
    assert!(!fields.is_empty() && !ks.is_empty());
    let d = fields[0].spec().d;
    assert!(d == 3 || d == 4, "the rate ladder is a d ∈ {{3,4}} experiment");
    for w in ks.windows(2) {
        assert!(w[0] < w[1], "ladder must increase");
    }
    let mut rows = Vec::new();
    let mut window_check = None;
    for field in fields {
        assert_eq!(field.spec().d, d);
        let seed = field.spec().seed;
        let mut extended: Vec<(u32, ExtendedCorrector)> = Vec::new();
        for &k in ks {
            let t0 = clock();
            let sol =
                solve_scaled_resolvent(ex, field, k, lambda, f, &opts.solve).map_err(RateError::Solve)?;
            let quad = error_quadrature(&sol.u, f);
            let m = scale_exponent(k);
            let solve_m = m + opts.n0;
            let two_scale_err = if solve_m <= opts.two_scale_max_exponent {
                if !extended.iter().any(|(mm, _)| *mm == m) {
                    let corr = solve_corrector(ex, field, solve_m, &opts.corrector)
                        .map_err(RateError::Corrector)?;
                    let ext = center_and_extend(&corr, m, opts.n0).map_err(RateError::Extend)?;
                    extended.push((m, ext));
                }
                let ext = &extended.iter().find(|(mm, _)| *mm == m).unwrap().1;
                let v = two_scale_expansion(f, ext, k, opts.solve.window)
                    .map_err(RateError::TwoScale)?;
                Some(lattice_l2_diff(&sol.u, &v))
            } else {
                None
            };
            if window_check.is_none() && opts.window_check {
                let wide = ResolventOptions {
                    window: opts.solve.window + 1,
                    ..opts.solve
                };
                let wsol =
                    solve_scaled_resolvent(ex, field, k, lambda, f, &wide).map_err(RateError::Solve)?;
                window_check = Some(WindowCheck {
                    k,
                    seed,
                    base_error: quad.value,
                    widened_error: resolvent_error(&wsol.u, f),
                });
            }
            rows.push(RateRow {
                seed,
                k,
                e_k: quad.value,
                two_scale_err,
                residual: sol.residual,
                energy_gap: sol.energy_gap,
                iterations: sol.iterations,
                quad_order: quad.order,
                wall_seconds: clock() - t0,
            });
        }
    }

    let mut monotone = true;
    for field in fields {
        let seed = field.spec().seed;
        let errs: Vec<f64> = rows
            .iter()
            .filter(|r| r.seed == seed)
            .map(|r| r.e_k)
            .collect();
        for w in errs.windows(2) {
            if w[1] > 1.1 * w[0] {
                monotone = false;
            }
        }
    }
    let (mut sx, mut sy, mut sxx, mut sxy, mut np) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for r in &rows {
        let x = math::log(r.k as f64);
        let y = math::log(r.e_k.max(f64::MIN_POSITIVE));
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
        np += 1.0;
    }
    let denom = np * sxx - sx * sx;
    let fitted = if denom.abs() > 1e-12 {
        (np * sxy - sx * sy) / denom
    } else {
        0.0
    };

    Ok(RateReport {
        d,
        lambda,
        gamma,
        window: opts.solve.window,
        tol: opts.solve.tol,
        n0: opts.n0,
        two_scale_max_exponent: opts.two_scale_max_exponent,
        rows,
        theoretical_exponent: theoretical_exponent(d, gamma),
        fitted_exponent: fitted,
        monotone,
        window_check,
    })
}
