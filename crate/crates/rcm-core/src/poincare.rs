//! Audits of the box Poincaré inequalities: best-constant estimates over a
//! function battery for the weak (two-box, log-corrected) and strong
//! (same-box) forms, the spectral gap that makes the strong form sharp, and
//! the multiscale residual decomposition.
//!
//! Estimated constants are empirical lower bounds realized by a stored
//! witness; nothing here asserts a theoretical value.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::env::ConductanceField;
use crate::lattice::{dyadic_centers, BoxSpec, GridField, Site};
use crate::math;
use crate::op::{self, WindowOperator};
use crate::par::Executor;
use crate::rng::Stream;
use crate::solver::{self, OpCall, PcgOptions, SolverError};
use crate::sum::{self, Compensated};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InequalityKind {
    Weak,
    Strong,
    Multiscale,
}

/// One audited scale: `scale` is R (weak/strong) or m (multiscale), `aux`
/// is κ or n.
#[derive(Clone, Debug)]
pub struct ScaleConstant {
    pub scale: i64,
    pub aux: i64,
    pub constant: f64,
    pub witness: String,
}

#[derive(Clone, Debug)]
pub struct PoincareReport {
    pub kind: InequalityKind,
    pub d: usize,
    pub seed: u64,
    pub battery: String,
    pub rows: Vec<ScaleConstant>,
}

// ---------------------------------------------------------------------------
// battery

/// Named test functions on a fixed box.
#[derive(Clone, Debug)]
pub struct Battery {
    pub domain: BoxSpec,
    pub members: Vec<GridField>,
    pub labels: Vec<String>,
    pub description: String,
}

impl Battery {
    pub fn new(domain: BoxSpec, description: String) -> Self {
        Self {
            domain,
            members: Vec::new(),
            labels: Vec::new(),
            description,
        }
    }

    pub fn push(&mut self, label: String, f: GridField) {
        assert_eq!(f.domain, self.domain);
        assert_eq!(f.vdim, 1);
        self.members.push(f);
        self.labels.push(label);
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

/// Site-addressed iid standard Gaussians: the value depends only on
/// (seed, index, site), so the same member restricted to a smaller box is
/// the smaller box's member.
pub fn gaussian_member(seed: u64, index: u64, domain: BoxSpec) -> GridField {
    let d = domain.d;
    GridField::from_fn(domain, 1, |s| {
        Stream::new(seed ^ crate::env::encode_site(d, s), 0x67617573, index).next_gaussian()
    })
}

/// f(x) = x_axis.
pub fn coordinate_member(domain: BoxSpec, axis: usize) -> GridField {
    assert!(axis < domain.d);
    GridField::from_fn(domain, 1, |s| s.c[axis] as f64)
}

/// Radial quartic bump spanning the box.
pub fn bump_member(domain: BoxSpec) -> GridField {
    let d = domain.d;
    let scale = 1.0 / (domain.half * domain.half) as f64;
    GridField::from_fn(domain, 1, |s| {
        let t = 1.0 - scale * s.norm_sq(d) as f64;
        if t > 0.0 {
            t * t
        } else {
            0.0
        }
    })
}

/// The fixed audit battery, version 1: 8 Gaussians, the d coordinates, and
/// a bump. The spectral-gap eigenvector is appended separately when
/// available.
pub fn standard_battery(seed: u64, domain: BoxSpec) -> Battery {
    let mut battery = Battery::new(
        domain,
        format!("v1: gauss x8, coord x{}, bump", domain.d),
    );
    for i in 0..8 {
        battery.push(format!("gauss-{i}"), gaussian_member(seed, i, domain));
    }
    for axis in 0..domain.d {
        battery.push(format!("coord-{axis}"), coordinate_member(domain, axis));
    }
    battery.push(String::from("bump"), bump_member(domain));
    battery
}

// ---------------------------------------------------------------------------
// weak and strong audits

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AuditError {
    EmptyBattery,
    /// Battery domain does not match the energy box.
    DomainMismatch,
    /// Every member had zero energy.
    AllDegenerate,
}

impl core::fmt::Display for AuditError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            AuditError::EmptyBattery => write!(f, "battery is empty"),
            AuditError::DomainMismatch => write!(f, "battery lives on the wrong box"),
            AuditError::AllDegenerate => write!(f, "every battery member has zero energy"),
        }
    }
}

/// Best-constant estimate: max ratio over the battery, with the argmax
/// member as witness. Skipped (zero-energy) members keep ratio 0.
#[derive(Clone, Debug)]
pub struct RatioEstimate {
    pub constant: f64,
    pub witness: usize,
    pub ratios: Vec<f64>,
}

/// Σ_{x∈window}(f − ⨍_window f)² under counting measure.
fn centered_square_sum(f: &GridField, window: &BoxSpec) -> f64 {
    let mean = f.cell_average(window)[0];
    let mut acc = Compensated::new();
    for s in window.iter() {
        let v = f.scalar(&s) - mean;
        acc.add(v * v);
    }
    acc.value()
}

fn max_ratio(ratios: &[f64], skipped: &[bool]) -> Result<(f64, usize), AuditError> {
    let mut best: Option<(f64, usize)> = None;
    for (i, &r) in ratios.iter().enumerate() {
        if skipped[i] {
            continue;
        }
        if best.map_or(true, |(b, _)| r > b) {
            best = Some((r, i));
        }
    }
    best.map(|(c, w)| (c, w)).ok_or(AuditError::AllDegenerate)
}

/// Weak form: variance over B_R against energy over B_{κR}, ratio
/// LHS·log R / (R²·ℰ_{B_{κR}}). The battery must live on B_{κR}.
pub fn weak_constant_estimate<E: Executor>(
    ex: &E,
    field: &ConductanceField,
    r: i64,
    kappa: i64,
    battery: &Battery,
) -> Result<RatioEstimate, AuditError> {
    assert!(r >= 2 && kappa >= 1);
    let d = field.spec().d;
    if battery.is_empty() {
        return Err(AuditError::EmptyBattery);
    }
    if battery.domain != BoxSpec::centered(d, kappa * r) {
        return Err(AuditError::DomainMismatch);
    }
    let inner = BoxSpec::centered(d, r);
    let mut win = WindowOperator::new(ex, *field, battery.domain, 1.0, None);
    let factor = math::log(r as f64) / (r * r) as f64;
    let mut ratios = vec![0.0; battery.len()];
    let mut skipped = vec![false; battery.len()];
    for (i, f) in battery.members.iter().enumerate() {
        let energy = win.energy(&f.data);
        if energy <= 1e-12 * sum::sum_sq(&f.data).max(1.0) {
            skipped[i] = true;
            continue;
        }
        ratios[i] = centered_square_sum(f, &inner) * factor / energy;
    }
    let (constant, witness) = max_ratio(&ratios, &skipped)?;
    Ok(RatioEstimate {
        constant,
        witness,
        ratios,
    })
}

/// Strong form: same box on both sides, no log factor: ratio
/// LHS / (R²·ℰ_{B_R}).
pub fn strong_constant_estimate<E: Executor>(
    ex: &E,
    field: &ConductanceField,
    r: i64,
    battery: &Battery,
) -> Result<RatioEstimate, AuditError> {
    assert!(r >= 1);
    let d = field.spec().d;
    if battery.is_empty() {
        return Err(AuditError::EmptyBattery);
    }
    if battery.domain != BoxSpec::centered(d, r) {
        return Err(AuditError::DomainMismatch);
    }
    let mut win = WindowOperator::new(ex, *field, battery.domain, 1.0, None);
    let factor = 1.0 / (r * r) as f64;
    let mut ratios = vec![0.0; battery.len()];
    let mut skipped = vec![false; battery.len()];
    for (i, f) in battery.members.iter().enumerate() {
        let energy = win.energy(&f.data);
        if energy <= 1e-12 * sum::sum_sq(&f.data).max(1.0) {
            skipped[i] = true;
            continue;
        }
        ratios[i] = centered_square_sum(f, &battery.domain) * factor / energy;
    }
    let (constant, witness) = max_ratio(&ratios, &skipped)?;
    Ok(RatioEstimate {
        constant,
        witness,
        ratios,
    })
}

// ---------------------------------------------------------------------------
// spectral gap

#[derive(Clone, Copy, Debug)]
pub struct GapOptions {
    /// Hard cap on (2R)^d.
    pub site_budget: usize,
    pub max_steps: usize,
    /// Relative tolerance on the extreme Ritz value.
    pub tol: f64,
    pub inner: PcgOptions,
}

impl Default for GapOptions {
    fn default() -> Self {
        Self {
            site_budget: 1 << 18,
            max_steps: 48,
            tol: 1e-9,
            inner: PcgOptions {
                tol: 1e-10,
                max_iter: 4000,
                project_mean: true,
                refresh_every: 50,
            },
        }
    }
}

#[derive(Clone, Debug)]
pub enum GapError {
    BudgetExceeded { sites: usize, budget: usize },
    /// An inner shift-invert solve stalled.
    InnerSolve { rel_residual: f64 },
    Eigensolver(SolverError),
}

impl core::fmt::Display for GapError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            GapError::BudgetExceeded { sites, budget } => {
                write!(f, "box has {sites} sites, eigensolver budget is {budget}")
            }
            GapError::InnerSolve { rel_residual } => {
                write!(f, "inner solve stalled at {rel_residual:e}")
            }
            GapError::Eigensolver(e) => write!(f, "{e}"),
        }
    }
}

#[derive(Clone, Debug)]
pub struct GapReport {
    /// λ₁(R): smallest eigenvalue of −ℒ_{B_R} on the mean-zero subspace.
    pub gap: f64,
    /// Unit mean-zero eigenvector, the sharp witness.
    pub eigenvector: Vec<f64>,
    pub lanczos_steps: usize,
    pub lanczos_residual: f64,
    pub inner_iterations: usize,
}

/// Shift-invert Lanczos at shift 0: the extreme eigenvalue of (−ℒ)⁻¹ on
/// the mean-zero subspace is 1/λ₁. Inner solves are CG preconditioned with
/// the torus mean-operator inverse, which keeps the iteration count flat in
/// R where a diagonal preconditioner would stall against the shrinking gap.
pub fn spectral_gap<E: Executor>(
    ex: &E,
    field: &ConductanceField,
    r: i64,
    opts: &GapOptions,
) -> Result<GapReport, GapError> {
    let d = field.spec().d;
    let domain = BoxSpec::centered(d, r);
    let n = domain.site_count();
    if n > opts.site_budget {
        return Err(GapError::BudgetExceeded {
            sites: n,
            budget: opts.site_budget,
        });
    }
    let mut win = WindowOperator::new(ex, *field, domain, 1.0, None);
    let mut v0 = vec![0.0; n];
    let mut stream = Stream::new(field.spec().seed, 0x6761702d, r as u64);
    for v in v0.iter_mut() {
        *v = stream.next_gaussian();
    }
    let inner_opts = opts.inner;
    let mut inner_iterations = 0usize;
    let mut inner_worst: Option<f64> = None;
    let mut inv = |v: &[f64], out: &mut [f64]| {
        let mut ops = |call: OpCall, a: &[f64], o: &mut [f64]| match call {
            OpCall::Apply => {
                win.apply_l(a, o);
                for q in o.iter_mut() {
                    *q = -*q;
                }
            }
            OpCall::Precondition => win.precondition(0.0, a, o),
        };
        out.fill(0.0);
        let rep = solver::pcg_ops(&mut ops, v, out, &inner_opts);
        inner_iterations += rep.iterations;
        if !rep.converged {
            inner_worst = Some(inner_worst.map_or(rep.rel_residual, |w: f64| {
                w.max(rep.rel_residual)
            }));
        }
    };
    let lan = solver::lanczos_extreme(&mut inv, &v0, opts.max_steps, opts.tol);
    if let Some(rel_residual) = inner_worst {
        return Err(GapError::InnerSolve { rel_residual });
    }
    let lan = lan.map_err(GapError::Eigensolver)?;
    assert!(lan.value > 0.0, "generator lost definiteness");
    Ok(GapReport {
        gap: 1.0 / lan.value,
        eigenvector: lan.vector,
        lanczos_steps: lan.steps,
        lanczos_residual: lan.residual,
        inner_iterations,
    })
}

/// The sharp witness joins the battery.
pub fn append_eigenvector(battery: &mut Battery, report: &GapReport) {
    let f = GridField {
        domain: battery.domain,
        k: 1,
        vdim: 1,
        data: report.eigenvector.clone(),
    };
    battery.push(String::from("gap-eigenvector"), f);
}

// ---------------------------------------------------------------------------
// multiscale residual

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum MultiscaleError {
    /// 1 ≤ n ≤ m−1 violated.
    BadScales { m: u32, n: u32 },
    /// The normalizing shape vanished while LHS ≠ RHS₁: a summation
    /// inconsistency, since a zero shape forces the scale-n cell averages
    /// of f to vanish and with them the exact difference.
    Anomaly { lhs: f64, rhs1: f64 },
}

impl core::fmt::Display for MultiscaleError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            MultiscaleError::BadScales { m, n } => write!(f, "need 1 <= n <= m-1, got ({m},{n})"),
            MultiscaleError::Anomaly { lhs, rhs1 } => {
                write!(f, "zero shape with LHS {lhs} != RHS1 {rhs1}")
            }
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct MultiscaleResidual {
    pub lhs: f64,
    pub rhs1: f64,
    /// ℰ(g)^{1/2} · Σ_{k=n}^{m−1} 2^{k(d+2)/2} (Σ_y (⨍_{B_{2^k}(y)} f)²)^{1/2}
    pub shape: f64,
    /// Minimal admissible constant (LHS − RHS₁)/shape for this instance.
    pub constant: f64,
}

/// Evaluates both sides of the multiscale decomposition of Σ f(g − ⨍g) on
/// B_{2^m} with cells at scale 2^n and returns the minimal constant.
pub fn multiscale_residual<E: Executor>(
    ex: &E,
    field: &ConductanceField,
    m: u32,
    n: u32,
    f: &GridField,
    g: &GridField,
) -> Result<MultiscaleResidual, MultiscaleError> {
    if n < 1 || n + 1 > m {
        return Err(MultiscaleError::BadScales { m, n });
    }
    let d = field.spec().d;
    let domain = BoxSpec::centered(d, 1i64 << m);
    assert_eq!(f.domain, domain);
    assert_eq!(g.domain, domain);
    assert!(f.vdim == 1 && g.vdim == 1);

    let g_mean = g.cell_average(&domain)[0];
    let mut lhs = Compensated::new();
    for i in 0..f.data.len() {
        lhs.add(f.data[i] * (g.data[i] - g_mean));
    }
    let lhs = lhs.value();

    let mut rhs1 = Compensated::new();
    for z in dyadic_centers(d, m, n) {
        let cell = BoxSpec::new(d, z, 1i64 << n);
        let cell_mean = g.cell_average(&cell)[0];
        for s in cell.iter() {
            rhs1.add(f.scalar(&s) * (g.scalar(&s) - cell_mean));
        }
    }
    let rhs1 = rhs1.value();

    let mut win = WindowOperator::new(ex, *field, domain, 1.0, None);
    let energy = win.energy(&g.data);
    let mut scales = Compensated::new();
    for k in n..m {
        let mut sq = Compensated::new();
        for y in dyadic_centers(d, m, k) {
            let cell = BoxSpec::new(d, y, 1i64 << k);
            let avg = f.cell_average(&cell)[0];
            sq.add(avg * avg);
        }
        scales.add(math::pow(2.0, k as f64 * (d as f64 + 2.0) / 2.0) * math::sqrt(sq.value()));
    }
    let shape = math::sqrt(energy.max(0.0)) * scales.value();

    if shape == 0.0 {
        return if (lhs - rhs1).abs() <= 1e-9 * (lhs.abs() + rhs1.abs()) {
            Ok(MultiscaleResidual {
                lhs,
                rhs1,
                shape,
                constant: 0.0,
            })
        } else {
            Err(MultiscaleError::Anomaly { lhs, rhs1 })
        };
    }
    Ok(MultiscaleResidual {
        lhs,
        rhs1,
        shape,
        constant: (lhs - rhs1) / shape,
    })
}

/// Minimal constants across box exponents with nested Gaussian f, g (site
/// addressing keeps the same function restricted as m shrinks).
pub fn multiscale_scan<E: Executor>(
    ex: &E,
    field: &ConductanceField,
    ms: &[u32],
    n: u32,
    seed: u64,
) -> Result<Vec<(u32, MultiscaleResidual)>, MultiscaleError> {
    let d = field.spec().d;
    let mut out = Vec::with_capacity(ms.len());
    for &m in ms {
        let domain = BoxSpec::centered(d, 1i64 << m);
        let f = gaussian_member(seed, 0, domain);
        let g = gaussian_member(seed, 1, domain);
        out.push((m, multiscale_residual(ex, field, m, n, &f, &g)?));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{EnvironmentSpec, Law, DEFAULT_LAW};
    use crate::par::Serial;

    fn constant_env(d: usize) -> ConductanceField {
        ConductanceField::new(EnvironmentSpec::new(0, d, Law::Constant).unwrap())
    }

    fn ranged(seed: u64, d: usize, range: i64) -> ConductanceField {
        ConductanceField::new(EnvironmentSpec::with_range(seed, d, DEFAULT_LAW, range).unwrap())
    }

    #[test]
    fn strong_two_site_hand_value() {
        // box {0,1}: LHS = 2·(1/2)² = 1/2, energy = 1, R = 1
        let f = constant_env(1);
        let domain = BoxSpec::centered(1, 1);
        let mut battery = Battery::new(domain, String::from("hand"));
        battery.push(String::from("step"), coordinate_member(domain, 0));
        let est = strong_constant_estimate(&Serial, &f, 1, &battery).unwrap();
        assert!((est.constant - 0.5).abs() < 1e-14, "{}", est.constant);
        assert_eq!(est.witness, 0);
    }

    #[test]
    fn weak_coordinate_against_brute_force() {
        let d = 2;
        let f = constant_env(d);
        let (r, kappa) = (8i64, 2i64);
        let outer = BoxSpec::centered(d, kappa * r);
        let mut battery = Battery::new(outer, String::from("coord"));
        battery.push(String::from("coord-0"), coordinate_member(outer, 0));
        let est = weak_constant_estimate(&Serial, &f, r, kappa, &battery).unwrap();
        assert!(est.constant.is_finite() && est.constant > 0.0);

        // literal evaluation of both sides
        let inner = BoxSpec::centered(d, r);
        let inner_sites: Vec<Site> = inner.iter().collect();
        let mean =
            inner_sites.iter().map(|s| s.c[0] as f64).sum::<f64>() / inner_sites.len() as f64;
        let lhs: f64 = inner_sites
            .iter()
            .map(|s| (s.c[0] as f64 - mean) * (s.c[0] as f64 - mean))
            .sum();
        let outer_sites: Vec<Site> = outer.iter().collect();
        let mut energy = 0.0;
        for i in 0..outer_sites.len() {
            for j in i + 1..outer_sites.len() {
                let z = outer_sites[j].sub(&outer_sites[i]);
                let df = (outer_sites[j].c[0] - outer_sites[i].c[0]) as f64;
                energy += df * df * op::kernel_weight(d, z.norm_sq(d));
            }
        }
        let want = lhs * math::log(r as f64) / ((r * r) as f64 * energy);
        assert!(
            (est.constant - want).abs() <= 1e-12 * want,
            "{} vs {want}",
            est.constant
        );
    }

    #[test]
    fn degenerate_members_are_skipped() {
        let d = 2;
        let f = ranged(3, d, 2);
        let domain = BoxSpec::centered(d, 4);
        let mut battery = Battery::new(domain, String::from("test"));
        battery.push(
            String::from("flat"),
            GridField::from_fn(domain, 1, |_| 2.5),
        );
        battery.push(String::from("coord-1"), coordinate_member(domain, 1));
        let est = strong_constant_estimate(&Serial, &f, 4, &battery).unwrap();
        assert_eq!(est.witness, 1);
        assert_eq!(est.ratios[0], 0.0);
        assert!(est.ratios[1] > 0.0);

        let mut flat_only = Battery::new(domain, String::from("flat"));
        flat_only.push(
            String::from("flat"),
            GridField::from_fn(domain, 1, |_| 1.0),
        );
        assert_eq!(
            strong_constant_estimate(&Serial, &f, 4, &flat_only).unwrap_err(),
            AuditError::AllDegenerate
        );
        let empty = Battery::new(domain, String::from("none"));
        assert_eq!(
            strong_constant_estimate(&Serial, &f, 4, &empty).unwrap_err(),
            AuditError::EmptyBattery
        );
    }

    #[test]
    fn gap_of_the_two_site_box_is_two() {
        let f = constant_env(1);
        let report = spectral_gap(&Serial, &f, 1, &GapOptions::default()).unwrap();
        assert!((report.gap - 2.0).abs() < 1e-12, "gap {}", report.gap);
        let v = &report.eigenvector;
        assert_eq!(v.len(), 2);
        assert!((v[0] + v[1]).abs() < 1e-12);
        assert!((v[0] * v[0] + v[1] * v[1] - 1.0).abs() < 1e-12);
    }

    /// Cyclic Jacobi eigensolver, the dense oracle.
    fn jacobi_eigenvalues(mut a: Vec<f64>, n: usize) -> Vec<f64> {
        for _sweep in 0..64 {
            let mut off = 0.0;
            for p in 0..n {
                for q in p + 1..n {
                    off += a[p * n + q] * a[p * n + q];
                }
            }
            if off < 1e-26 {
                break;
            }
            for p in 0..n {
                for q in p + 1..n {
                    let apq = a[p * n + q];
                    if apq.abs() < 1e-300 {
                        continue;
                    }
                    let tau = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                    let t = if tau >= 0.0 {
                        1.0 / (tau + math::sqrt(1.0 + tau * tau))
                    } else {
                        -1.0 / (-tau + math::sqrt(1.0 + tau * tau))
                    };
                    let c = 1.0 / math::sqrt(1.0 + t * t);
                    let s = t * c;
                    for k in 0..n {
                        let akp = a[k * n + p];
                        let akq = a[k * n + q];
                        a[k * n + p] = c * akp - s * akq;
                        a[k * n + q] = s * akp + c * akq;
                    }
                    for k in 0..n {
                        let apk = a[p * n + k];
                        let aqk = a[q * n + k];
                        a[p * n + k] = c * apk - s * aqk;
                        a[q * n + k] = s * apk + c * aqk;
                    }
                }
            }
        }
        let mut eig: Vec<f64> = (0..n).map(|i| a[i * n + i]).collect();
        eig.sort_by(|x, y| x.partial_cmp(y).unwrap());
        eig
    }

    fn dense_neg_l(f: &ConductanceField, domain: &BoxSpec) -> (Vec<f64>, usize) {
        let d = domain.d;
        let sites: Vec<Site> = domain.iter().collect();
        let n = sites.len();
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            let mut row = 0.0;
            for j in 0..n {
                if i == j {
                    continue;
                }
                let z = sites[j].sub(&sites[i]);
                let wk = f.weight(&sites[i], &sites[j]) * op::kernel_weight(d, z.norm_sq(d));
                a[i * n + j] = -wk;
                row += wk;
            }
            a[i * n + i] = row;
        }
        (a, n)
    }

    #[test]
    fn gap_matches_dense_eigensolve() {
        let f = ranged(11, 2, 2);
        let domain = BoxSpec::centered(2, 4);
        let (a, n) = dense_neg_l(&f, &domain);
        let eig = jacobi_eigenvalues(a, n);
        assert!(eig[0].abs() < 1e-10, "kernel eigenvalue {}", eig[0]);
        let report = spectral_gap(&Serial, &f, 4, &GapOptions::default()).unwrap();
        assert!(
            (report.gap - eig[1]).abs() <= 1e-8 * eig[1],
            "{} vs {}",
            report.gap,
            eig[1]
        );
    }

    #[test]
    fn budget_guard_trips() {
        let f = ranged(1, 3, 2);
        let opts = GapOptions {
            site_budget: 100,
            ..GapOptions::default()
        };
        assert!(matches!(
            spectral_gap(&Serial, &f, 8, &opts),
            Err(GapError::BudgetExceeded { .. })
        ));
    }

    #[test]
    fn eigenvector_makes_the_strong_audit_sharp() {
        let d = 2;
        let r = 4i64;
        let f = ranged(29, d, 2);
        let domain = BoxSpec::centered(d, r);
        let gap = spectral_gap(&Serial, &f, r, &GapOptions::default()).unwrap();
        let mut battery = standard_battery(29, domain);
        append_eigenvector(&mut battery, &gap);
        let est = strong_constant_estimate(&Serial, &f, r, &battery).unwrap();
        // the sharp constant is 1/(R²λ₁); the eigenvector realizes it and
        // no member may exceed it
        let sharp = 1.0 / ((r * r) as f64 * gap.gap);
        assert_eq!(battery.labels[est.witness], "gap-eigenvector");
        assert!((est.constant - sharp).abs() <= 1e-6 * sharp);
        for &ratio in &est.ratios {
            assert!(ratio <= sharp * (1.0 + 1e-8));
        }
    }

    #[test]
    fn multiscale_trivial_cases() {
        let d = 2;
        let fld = ranged(5, d, 2);
        let m = 3;
        let domain = BoxSpec::centered(d, 1 << m);
        let flat = GridField::from_fn(domain, 1, |_| 3.25);
        let g = gaussian_member(5, 1, domain);
        let res = multiscale_residual(&Serial, &fld, m, 1, &flat, &g).unwrap();
        assert!(res.lhs.abs() < 1e-9 && res.rhs1.abs() < 1e-9);
        assert!(res.constant.abs() < 1e-12);

        let f = gaussian_member(5, 0, domain);
        let res = multiscale_residual(&Serial, &fld, m, 1, &f, &flat).unwrap();
        assert_eq!(res.lhs, 0.0);
        assert_eq!(res.rhs1, 0.0);
        assert_eq!(res.constant, 0.0);

        assert!(matches!(
            multiscale_residual(&Serial, &fld, m, 0, &f, &g),
            Err(MultiscaleError::BadScales { .. })
        ));
        assert!(matches!(
            multiscale_residual(&Serial, &fld, m, m, &f, &g),
            Err(MultiscaleError::BadScales { .. })
        ));
    }

    #[test]
    fn multiscale_against_independent_sums() {
        let d = 2;
        let fld = ranged(7, d, 2);
        let m = 4;
        let n = 1;
        let domain = BoxSpec::centered(d, 1 << m);
        let f = gaussian_member(7, 0, domain);
        let g = gaussian_member(7, 1, domain);
        let res = multiscale_residual(&Serial, &fld, m, n, &f, &g).unwrap();

        // independent path: plain f64 sums in reversed site order
        let sites: Vec<Site> = domain.iter().collect();
        let total = sites.len() as f64;
        let mut gm = 0.0;
        for s in sites.iter().rev() {
            gm += g.scalar(s);
        }
        gm /= total;
        let mut lhs = 0.0;
        for s in sites.iter().rev() {
            lhs += f.scalar(s) * (g.scalar(s) - gm);
        }
        assert!((lhs - res.lhs).abs() <= 1e-10 * lhs.abs().max(1.0));

        let mut rhs1 = 0.0;
        for z in dyadic_centers(d, m, n).iter().rev() {
            let cell = BoxSpec::new(d, *z, 1 << n);
            let cs: Vec<Site> = cell.iter().collect();
            let mean = cs.iter().map(|s| g.scalar(s)).sum::<f64>() / cs.len() as f64;
            for s in &cs {
                rhs1 += f.scalar(s) * (g.scalar(s) - mean);
            }
        }
        assert!((rhs1 - res.rhs1).abs() <= 1e-10 * rhs1.abs().max(1.0));

        // shape: energy by the pairwise path, scale sums by plain loops
        let energy = op::dirichlet_energy(&fld, &g, &g);
        let mut scales = 0.0;
        for k in n..m {
            let mut sq = 0.0;
            for y in dyadic_centers(d, m, k) {
                let cell = BoxSpec::new(d, y, 1 << k);
                let cs: Vec<Site> = cell.iter().collect();
                let avg = cs.iter().map(|s| f.scalar(s)).sum::<f64>() / cs.len() as f64;
                sq += avg * avg;
            }
            scales += math::pow(2.0, k as f64 * (d as f64 + 2.0) / 2.0) * math::sqrt(sq);
        }
        let shape = math::sqrt(energy) * scales;
        assert!((shape - res.shape).abs() <= 1e-10 * shape);
        assert!(res.shape > 0.0);
    }

    #[test]
    fn multiscale_constants_stable_across_seeds() {
        let d = 2;
        let m = 4;
        let mut constants = Vec::new();
        for seed in 1..=5u64 {
            let fld = ranged(seed, d, 2);
            let domain = BoxSpec::centered(d, 1 << m);
            let f = gaussian_member(seed, 0, domain);
            let g = gaussian_member(seed, 1, domain);
            let res = multiscale_residual(&Serial, &fld, m, 1, &f, &g).unwrap();
            constants.push(res.constant);
        }
        let mean = constants.iter().sum::<f64>() / constants.len() as f64;
        for &c in &constants {
            assert!(
                (c - mean).abs() <= 0.5 * mean.abs().max(0.05),
                "constant {c} strays from mean {mean}"
            );
        }
    }

    #[test]
    fn checkerboard_forces_zero_shape_without_anomaly() {
        let d = 2;
        let fld = ranged(13, d, 2);
        let m = 3;
        let domain = BoxSpec::centered(d, 1 << m);
        let f = GridField::from_fn(domain, 1, |s| {
            if (s.c[0] + s.c[1]).rem_euclid(2) == 0 {
                1.0
            } else {
                -1.0
            }
        });
        let g = gaussian_member(13, 1, domain);
        let res = multiscale_residual(&Serial, &fld, m, 1, &f, &g).unwrap();
        assert_eq!(res.shape, 0.0);
        assert_eq!(res.constant, 0.0);
    }
}
