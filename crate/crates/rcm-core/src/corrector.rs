//! The local corrector on dyadic boxes: solve ℒ_B φ_m = −V + ⨍V per
//! component, certify the residual, and measure the Dirichlet energy whose
//! growth in m is the object of the scaling experiment.

use alloc::vec;
use alloc::vec::Vec;

use crate::env::ConductanceField;
use crate::lattice::{BoxSpec, GridField, Site, MAX_D};
use crate::math;
use crate::op::{self, WindowOperator};
use crate::par::Executor;
use crate::solver::{self, OpCall, PcgOptions, SolveReport};
use crate::sum::{dot, Compensated};

#[derive(Clone, Debug)]
pub enum CorrectorError {
    /// Box size beyond the configured site budget.
    BudgetExceeded { sites: usize, budget: usize },
    /// CG ran out of iterations on one component; the report carries the
    /// residual history.
    NoConvergence { component: usize, report: SolveReport },
}

impl core::fmt::Display for CorrectorError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            CorrectorError::BudgetExceeded { sites, budget } => {
                write!(f, "box has {sites} sites, budget is {budget}")
            }
            CorrectorError::NoConvergence { component, report } => write!(
                f,
                "component {component} stalled at relative residual {:e} after {} iterations",
                report.rel_residual, report.iterations
            ),
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct CorrectorOptions {
    /// Relative residual target per component.
    pub tol: f64,
    /// Drift truncation radius; `None` means 2^{m+2}.
    pub r_v: Option<i64>,
    pub max_iter: usize,
    /// Hard cap on box sites, the time/memory guard.
    pub site_budget: usize,
    /// When set, CG starts from seeded noise instead of zero. Solutions
    /// must not depend on this; the restart test relies on it.
    pub start_seed: Option<u64>,
}

impl Default for CorrectorOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            r_v: None,
            max_iter: 5000,
            site_budget: 1 << 21,
            start_seed: None,
        }
    }
}

/// φ_m with its certificates. The drift tail bound is the truncation error
/// of V at radius `r_v`, which must sit below the solve tolerance scale for
/// the residual certificate to mean anything.
#[derive(Clone, Debug)]
pub struct CorrectorSolution {
    pub m: u32,
    /// d components on B_{2^m}, zero sum each.
    pub phi: GridField,
    /// Max over components of the freshly recomputed relative residual.
    pub residual: f64,
    /// ℰ_{B_{2^m}}(φ, φ), all components.
    pub energy: f64,
    pub spec_digest: u64,
    pub r_v: i64,
    pub drift_tail: f64,
    /// Total CG iterations across components.
    pub iterations: usize,
}

/// Right-hand side −V + ⨍V per component, exactly mean-zero by
/// construction.
fn drift_rhs(v: &GridField) -> Vec<Vec<f64>> {
    let d = v.vdim;
    let n = v.domain.site_count();
    let avg = v.cell_average(&v.domain);
    let mut rhs = vec![vec![0.0; n]; d];
    for i in 0..n {
        for (c, col) in rhs.iter_mut().enumerate() {
            col[i] = avg[c] - v.data[i * d + c];
        }
    }
    rhs
}

pub fn solve_corrector<E: Executor>(
    ex: &E,
    field: &ConductanceField,
    m: u32,
    opts: &CorrectorOptions,
) -> Result<CorrectorSolution, CorrectorError> {
    let d = field.spec().d;
    let domain = BoxSpec::centered(d, 1i64 << m);
    let n = domain.site_count();
    if n > opts.site_budget {
        return Err(CorrectorError::BudgetExceeded {
            sites: n,
            budget: opts.site_budget,
        });
    }
    let r_v = opts.r_v.unwrap_or(1i64 << (m + 2));
    let drift = op::drift_field(field, &domain, r_v);
    let rhs = drift_rhs(&drift.v);

    let mut win = WindowOperator::new(ex, *field, domain, 1.0, None);
    let pcg = PcgOptions {
        tol: opts.tol,
        max_iter: opts.max_iter,
        project_mean: true,
        ..PcgOptions::default()
    };

    let mut phi = GridField::zeros(domain, 1, d);
    let mut residual = 0.0f64;
    let mut iterations = 0;
    let mut energy = Compensated::new();
    for (c, b) in rhs.iter().enumerate() {
        let mut x = match opts.start_seed {
            None => vec![0.0; n],
            Some(s) => {
                let mut stream = crate::rng::Stream::new(s, 0x73746172, c as u64);
                (0..n).map(|_| stream.next_f64() - 0.5).collect()
            }
        };
        let mut ops = |call: OpCall, u: &[f64], out: &mut [f64]| match call {
            OpCall::Apply => {
                win.apply_l(u, out);
                for v in out.iter_mut() {
                    *v = -*v;
                }
            }
            OpCall::Precondition => win.precondition(0.0, u, out),
        };
        let report = solver::pcg_ops(&mut ops, b, &mut x, &pcg);
        iterations += report.iterations;
        if !report.converged {
            return Err(CorrectorError::NoConvergence {
                component: c,
                report,
            });
        }
        // fresh certificate, independent of the recurrence
        let mut ax = vec![0.0; n];
        ops(OpCall::Apply, &x, &mut ax);
        let mut rr = Compensated::new();
        let mut bb = Compensated::new();
        for i in 0..n {
            let ri = b[i] - ax[i];
            rr.add(ri * ri);
            bb.add(b[i] * b[i]);
        }
        let fresh = if bb.value() == 0.0 {
            0.0
        } else {
            math::sqrt(rr.value() / bb.value())
        };
        residual = residual.max(fresh);
        // ⟨x, −ℒx⟩ from the certificate vector: the component's share of
        // ℰ_{B}(φ, φ) at no extra operator cost
        energy.add(dot(&x, &ax));
        for i in 0..n {
            phi.data[i * d + c] = x[i];
        }
    }

    let energy = energy.value();
    Ok(CorrectorSolution {
        m,
        phi,
        residual,
        energy,
        spec_digest: field.spec().digest(),
        r_v,
        drift_tail: drift.tail_bound,
        iterations,
    })
}

/// ℰ_{B_{2^m}}(φ_m, φ_m), recomputed from the environment.
pub fn corrector_energy(field: &ConductanceField, sol: &CorrectorSolution) -> f64 {
    op::dirichlet_energy(field, &sol.phi, &sol.phi)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ExtendError {
    /// Solution exponent is not target + n₀.
    ExponentMismatch { have: u32, want: u32 },
    /// n₀ must be at least 2 so the centering box fits.
    WindowTooSmall,
}

impl core::fmt::Display for ExtendError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            ExtendError::ExponentMismatch { have, want } => {
                write!(f, "corrector exponent {have}, expected {want}")
            }
            ExtendError::WindowTooSmall => write!(f, "n0 must be at least 2"),
        }
    }
}

/// φ̂ on all of ℤ^d: the corrector at exponent m+n₀ recentered over
/// B_{2^{m+2}} and zero outside its own box.
#[derive(Clone, Debug)]
pub struct ExtendedCorrector {
    pub phi: GridField,
    pub base_m: u32,
    pub n0: u32,
}

impl ExtendedCorrector {
    pub fn d(&self) -> usize {
        self.phi.vdim
    }

    /// Componentwise value at a lattice site, zero outside the box.
    pub fn at_site(&self, z: &Site) -> [f64; MAX_D] {
        let mut out = [0.0; MAX_D];
        if self.phi.domain.contains(z) {
            let base = self.phi.domain.index_of(z) * self.phi.vdim;
            out[..self.phi.vdim].copy_from_slice(&self.phi.data[base..base + self.phi.vdim]);
        }
        out
    }

    /// Value at a real point by the cell-anchor rule: the site floor(x)
    /// componentwise (the corrector lives on the unit lattice).
    pub fn at_position(&self, x: &[f64]) -> [f64; MAX_D] {
        let mut a = [0i64; MAX_D];
        for i in 0..self.d() {
            a[i] = math::floor(x[i]) as i64;
        }
        self.at_site(&Site { c: a })
    }
}

pub fn center_and_extend(
    sol: &CorrectorSolution,
    target_m: u32,
    n0: u32,
) -> Result<ExtendedCorrector, ExtendError> {
    if n0 < 2 {
        return Err(ExtendError::WindowTooSmall);
    }
    if sol.m != target_m + n0 {
        return Err(ExtendError::ExponentMismatch {
            have: sol.m,
            want: target_m + n0,
        });
    }
    let d = sol.phi.vdim;
    let inner = BoxSpec::centered(d, 1i64 << (target_m + 2));
    let avg = sol.phi.cell_average(&inner);
    let mut phi = sol.phi.clone();
    for chunk in phi.data.chunks_mut(d) {
        for (c, v) in chunk.iter_mut().enumerate() {
            *v -= avg[c];
        }
    }
    Ok(ExtendedCorrector {
        phi,
        base_m: target_m,
        n0,
    })
}

// ---------------------------------------------------------------------------
// energy scaling across box exponents

#[derive(Clone, Debug)]
pub struct EnergyRow {
    pub seed: u64,
    pub m: u32,
    pub energy: f64,
    /// Normalization denominator 2^{md} · m^{(1+γ)/(d−2)}.
    pub bound: f64,
    pub normalized: f64,
}

#[derive(Clone, Debug)]
pub struct SeedVerdict {
    pub seed: u64,
    pub min_normalized: f64,
    pub max_normalized: f64,
    /// Fails when e_m grows past twice its minimum over the m range.
    pub pass: bool,
}

#[derive(Clone, Debug)]
pub struct EnergyScalingReport {
    pub gamma: f64,
    pub rows: Vec<EnergyRow>,
    pub verdicts: Vec<SeedVerdict>,
}

impl EnergyScalingReport {
    pub fn all_pass(&self) -> bool {
        self.verdicts.iter().all(|v| v.pass)
    }
}

/// Corrector energies over a ladder of box exponents, normalized by the
/// growth envelope 2^{md} m^{(1+γ)/(d−2)}.
pub fn energy_scaling_experiment<E: Executor>(
    ex: &E,
    fields: &[ConductanceField],
    ms: &[u32],
    gamma: f64,
    opts: &CorrectorOptions,
) -> Result<EnergyScalingReport, CorrectorError> {
    assert!(!fields.is_empty() && !ms.is_empty());
    let d = fields[0].spec().d;
    assert!(d >= 3, "the energy envelope needs d - 2 > 0");
    assert!(ms.iter().all(|&m| m >= 1));
    let mut rows = Vec::new();
    let mut verdicts = Vec::new();
    for field in fields {
        assert_eq!(field.spec().d, d);
        let seed = field.spec().seed;
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &m in ms {
            let sol = solve_corrector(ex, field, m, opts)?;
            let bound = math::powi(2.0, (m as usize * d) as i32)
                * math::pow(m as f64, (1.0 + gamma) / (d as f64 - 2.0));
            let normalized = sol.energy / bound;
            lo = lo.min(normalized);
            hi = hi.max(normalized);
            rows.push(EnergyRow {
                seed,
                m,
                energy: sol.energy,
                bound,
                normalized,
            });
        }
        verdicts.push(SeedVerdict {
            seed,
            min_normalized: lo,
            max_normalized: hi,
            pass: hi <= 2.0 * lo,
        });
    }
    Ok(EnergyScalingReport {
        gamma,
        rows,
        verdicts,
    })
}
