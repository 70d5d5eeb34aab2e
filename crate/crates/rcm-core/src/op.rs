//! Nonlocal generators with the critical kernel |z|^{−(d+2)}.
//!
//! Three layers, all computing the same operator:
//!
//! * exact pairwise forms (`apply_restricted`, `dirichlet_energy`) that sum
//!   every pair in canonical order — the oracles and the small-box path;
//! * pointwise evaluators on analytic functions (`reference_at`, `scaled_at`,
//!   `hat_at`, `fluct_at`, `AxisProfiler`) for whole-space queries at one
//!   site of the scaled lattice;
//! * the `WindowOperator` engine: mean kernel as one padded FFT convolution
//!   plus a fluctuation gather over the environment's random range, which is
//!   what the solvers call. For finite-range environments the split is exact,
//!   not a truncation.
//!
//! Scaled forms carry the prefactor k²/log k and require k ≥ 2.

use alloc::vec;
use alloc::vec::Vec;

use crate::env::{offset_lex_positive, ConductanceField};
use crate::fft;
use crate::lattice::{BoxSpec, GridField, Site, MAX_D};
use crate::math;
use crate::par::Executor;
use crate::shells;
use crate::sum::{dot, Compensated};

/// Kernel weight |z|^{−(d+2)} from the squared norm.
#[inline]
pub fn kernel_weight(d: usize, norm_sq: i64) -> f64 {
    debug_assert!(norm_sq > 0);
    math::inv_pow_half(norm_sq as f64, 0.5 * (d + 2) as f64)
}

/// Scaled-operator prefactor k²/log k.
#[inline]
pub fn scale_factor(d: usize, k: i64) -> f64 {
    assert!(k >= 2, "scaled operator needs k ≥ 2");
    let _ = d;
    (k * k) as f64 / math::log(k as f64)
}

// ---------------------------------------------------------------------------
// offset tables

/// The nonzero offsets of the ball 0 < |z| ≤ r in canonical order (|z|²,
/// then lex), with kernel weights and the derived per-offset constants the
/// sweeps need.
pub struct OffsetTable {
    pub d: usize,
    pub r: i64,
    pub z: Vec<Site>,
    /// encode(x + z) = encode(x) + code (wrapping).
    pub code: Vec<u64>,
    /// K(z) = |z|^{−(d+2)}.
    pub k: Vec<f64>,
    /// Offset is lex-positive, i.e. x is the canonical first site of {x, x+z}.
    pub lex_pos: Vec<bool>,
}

impl OffsetTable {
    pub fn ball(d: usize, r: i64) -> Self {
        assert!((1..=MAX_D).contains(&d));
        assert!(r >= 0);
        let r_sq = r * r;
        let mut zs: Vec<Site> = Vec::new();
        let mut cur = Site::zero();
        ball_walk(d, r, 0, &mut cur, &mut |s| {
            if s.norm_sq(d) > 0 && s.norm_sq(d) <= r_sq {
                zs.push(*s);
            }
        });
        zs.sort_by_key(|s| (s.norm_sq(d), s.c));
        let code = zs.iter().map(|s| crate::env::encode_site(d, s)).collect();
        let k = zs.iter().map(|s| kernel_weight(d, s.norm_sq(d))).collect();
        let lex_pos = zs.iter().map(|s| offset_lex_positive(d, s)).collect();
        Self {
            d,
            r,
            z: zs,
            code,
            k,
            lex_pos,
        }
    }

    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }
}

fn ball_walk(d: usize, r: i64, axis: usize, cur: &mut Site, visit: &mut impl FnMut(&Site)) {
    if axis == d {
        visit(cur);
        return;
    }
    for v in -r..=r {
        cur.c[axis] = v;
        ball_walk(d, r, axis + 1, cur, visit);
    }
}

// ---------------------------------------------------------------------------
// exact pairwise forms

/// (ℒ f)(x) = Σ_{y ∈ U, y ≠ x} (f(y) − f(x)) w_{xy} |x−y|^{−(d+2)} for every
/// x in U, with `cap` optionally dropping pairs beyond |x−y| ≤ cap. The inner
/// sum runs over y in canonical site order. O(|U|²): oracle and small-box
/// path only.
pub fn apply_pairs(
    field: &ConductanceField,
    u: &GridField,
    cap: Option<i64>,
) -> GridField {
    let d = u.domain.d;
    let sites: Vec<Site> = u.domain.iter().collect();
    let cap_sq = cap.map(|c| c * c);
    let mut out = GridField::zeros(u.domain, u.k, u.vdim);
    for (ix, x) in sites.iter().enumerate() {
        let mut acc = vec![Compensated::new(); u.vdim];
        for (iy, y) in sites.iter().enumerate() {
            if ix == iy {
                continue;
            }
            let nsq = y.sub(x).norm_sq(d);
            if let Some(c) = cap_sq {
                if nsq > c {
                    continue;
                }
            }
            let wk = field.weight(x, y) * kernel_weight(d, nsq);
            for (comp, a) in acc.iter_mut().enumerate() {
                a.add((u.data[iy * u.vdim + comp] - u.data[ix * u.vdim + comp]) * wk);
            }
        }
        for (comp, a) in acc.iter().enumerate() {
            out.data[ix * u.vdim + comp] = a.value();
        }
    }
    out
}

/// All pairs inside the domain of `u`, no distance cap.
pub fn apply_restricted(field: &ConductanceField, u: &GridField) -> GridField {
    apply_pairs(field, u, None)
}

/// Dirichlet form ℰ_U(f, g) = ½ Σ_{x≠y∈U} (f(y)−f(x))(g(y)−g(x)) w_{xy}
/// |x−y|^{−(d+2)}, all components summed. Iterates unordered pairs (i < j)
/// directly, which is a different summation path from `apply_restricted`;
/// the Green identity test leans on that independence.
pub fn dirichlet_energy(field: &ConductanceField, f: &GridField, g: &GridField) -> f64 {
    assert_eq!(f.domain, g.domain);
    assert_eq!(f.vdim, g.vdim);
    let d = f.domain.d;
    let sites: Vec<Site> = f.domain.iter().collect();
    let mut acc = Compensated::new();
    for i in 0..sites.len() {
        for j in i + 1..sites.len() {
            let nsq = sites[j].sub(&sites[i]).norm_sq(d);
            let wk = field.weight(&sites[i], &sites[j]) * kernel_weight(d, nsq);
            for comp in 0..f.vdim {
                let df = f.data[j * f.vdim + comp] - f.data[i * f.vdim + comp];
                let dg = g.data[j * g.vdim + comp] - g.data[i * g.vdim + comp];
                acc.add(df * dg * wk);
            }
        }
    }
    acc.value()
}

/// Scaled generator on a window field: u lives on sites of k^{−1}ℤ^d inside
/// its domain W and is taken as 0 outside, and
/// (ℒ^{(k)} u)(x) = (k²/log k) Σ_{0<|Z|≤r_cut} (u(x+Z/k) − u(x)) w_{kx,kx+Z}
/// |Z|^{−(d+2)}. Offset-sweep implementation; the conjugation test pins it
/// against the pairwise path.
pub fn apply_scaled_grid(
    field: &ConductanceField,
    tab: &OffsetTable,
    u: &GridField,
) -> GridField {
    assert_eq!(u.vdim, 1, "offset sweep path is scalar");
    let d = u.domain.d;
    assert_eq!(tab.d, d);
    let scale = scale_factor(d, u.k);
    let mut out = GridField::zeros(u.domain, u.k, 1);
    let sites: Vec<Site> = u.domain.iter().collect();
    for (ix, x) in sites.iter().enumerate() {
        let ex = field.encode(x);
        let mut acc = Compensated::new();
        for t in 0..tab.len() {
            let y = x.add(&tab.z[t]);
            let uy = if u.domain.contains(&y) {
                u.data[u.domain.index_of(&y)]
            } else {
                0.0
            };
            let ey = ex.wrapping_add(tab.code[t]);
            let (a, b) = if tab.lex_pos[t] { (ex, ey) } else { (ey, ex) };
            let w = ranged_weight(field, &tab.z[t], d, a, b);
            acc.add((uy - u.data[ix]) * w * tab.k[t]);
        }
        out.data[ix] = scale * acc.value();
    }
    out
}

#[inline]
fn ranged_weight(field: &ConductanceField, z: &Site, d: usize, a: u64, b: u64) -> f64 {
    if let Some(r) = field.spec().range {
        if z.norm_sq(d) > r * r {
            return 1.0;
        }
    }
    field.weight_codes(a, b)
}

// ---------------------------------------------------------------------------
// pointwise evaluators on analytic functions

/// Mean-environment (w ≡ 1) scaled generator at the lattice site x (physical
/// point x/k) of an analytic function.
pub fn reference_at(
    tab: &OffsetTable,
    k: i64,
    f: &dyn Fn([f64; MAX_D]) -> f64,
    x: &Site,
) -> f64 {
    let scale = scale_factor(tab.d, k);
    let fx = f(x.position(tab.d, k));
    let mut acc = Compensated::new();
    for t in 0..tab.len() {
        let y = x.add(&tab.z[t]);
        acc.add((f(y.position(tab.d, k)) - fx) * tab.k[t]);
    }
    scale * acc.value()
}

/// Environment scaled generator at a site.
pub fn scaled_at(
    tab: &OffsetTable,
    field: &ConductanceField,
    k: i64,
    f: &dyn Fn([f64; MAX_D]) -> f64,
    x: &Site,
) -> f64 {
    let d = tab.d;
    let scale = scale_factor(d, k);
    let fx = f(x.position(d, k));
    let ex = field.encode(x);
    let mut acc = Compensated::new();
    for t in 0..tab.len() {
        let y = x.add(&tab.z[t]);
        let ey = ex.wrapping_add(tab.code[t]);
        let (a, b) = if tab.lex_pos[t] { (ex, ey) } else { (ey, ex) };
        let w = ranged_weight(field, &tab.z[t], d, a, b);
        acc.add((f(y.position(d, k)) - fx) * w * tab.k[t]);
    }
    scale * acc.value()
}

/// Gradient-subtracted scaled generator: each jump term is
/// f(x+Z/k) − f(x) − ⟨∇f(x), Z/k⟩ before weighting. With the environment's
/// w this is the form whose fluctuation part stays summable bond by bond.
pub fn hat_at(
    tab: &OffsetTable,
    field: &ConductanceField,
    k: i64,
    f: &dyn Fn([f64; MAX_D]) -> f64,
    grad: &dyn Fn([f64; MAX_D]) -> [f64; MAX_D],
    x: &Site,
) -> f64 {
    let d = tab.d;
    let scale = scale_factor(d, k);
    let pos = x.position(d, k);
    let fx = f(pos);
    let gx = grad(pos);
    let ex = field.encode(x);
    let inv_k = 1.0 / k as f64;
    let mut acc = Compensated::new();
    for t in 0..tab.len() {
        let z = &tab.z[t];
        let y = x.add(z);
        let mut lin = 0.0;
        for i in 0..d {
            lin += gx[i] * z.c[i] as f64;
        }
        let rem = f(y.position(d, k)) - fx - lin * inv_k;
        let ey = ex.wrapping_add(tab.code[t]);
        let (a, b) = if tab.lex_pos[t] { (ex, ey) } else { (ey, ex) };
        let w = ranged_weight(field, z, d, a, b);
        acc.add(rem * w * tab.k[t]);
    }
    scale * acc.value()
}

/// `hat_at` with w ≡ 1.
pub fn hat_reference_at(
    tab: &OffsetTable,
    k: i64,
    f: &dyn Fn([f64; MAX_D]) -> f64,
    grad: &dyn Fn([f64; MAX_D]) -> [f64; MAX_D],
    x: &Site,
) -> f64 {
    let d = tab.d;
    let scale = scale_factor(d, k);
    let pos = x.position(d, k);
    let fx = f(pos);
    let gx = grad(pos);
    let inv_k = 1.0 / k as f64;
    let mut acc = Compensated::new();
    for t in 0..tab.len() {
        let z = &tab.z[t];
        let y = x.add(z);
        let mut lin = 0.0;
        for i in 0..d {
            lin += gx[i] * z.c[i] as f64;
        }
        acc.add((f(y.position(d, k)) - fx - lin * inv_k) * tab.k[t]);
    }
    scale * acc.value()
}

/// Fluctuation part (environment generator minus its mean) at a site:
/// (k²/log k) Σ_Z ξ_{kx,kx+Z} |Z|^{−(d+2)} (f(x+Z/k) − f(x) − ⟨∇f(x), Z/k⟩).
/// Pass a table clipped to the environment's random range: outside it ξ ≡ 0
/// and the dropped terms are exactly zero.
pub fn fluct_at(
    tab: &OffsetTable,
    field: &ConductanceField,
    k: i64,
    f: &dyn Fn([f64; MAX_D]) -> f64,
    grad: &dyn Fn([f64; MAX_D]) -> [f64; MAX_D],
    x: &Site,
) -> f64 {
    let d = tab.d;
    let scale = scale_factor(d, k);
    let pos = x.position(d, k);
    let fx = f(pos);
    let gx = grad(pos);
    let ex = field.encode(x);
    let inv_k = 1.0 / k as f64;
    let mut acc = Compensated::new();
    for t in 0..tab.len() {
        let z = &tab.z[t];
        let y = x.add(z);
        let mut lin = 0.0;
        for i in 0..d {
            lin += gx[i] * z.c[i] as f64;
        }
        let rem = f(y.position(d, k)) - fx - lin * inv_k;
        let ey = ex.wrapping_add(tab.code[t]);
        let (a, b) = if tab.lex_pos[t] { (ex, ey) } else { (ey, ex) };
        let xi = ranged_weight(field, z, d, a, b) - 1.0;
        acc.add(rem * xi * tab.k[t]);
    }
    scale * acc.value()
}

// ---------------------------------------------------------------------------
// axis profiler (d = 3)

/// Mean-environment scaled generator of a radial function, evaluated at axis
/// sites x = (m/k) e₁ in d = 3. The ball sum collapses to pairs
/// (z₁, j = z₂²+z₃²) weighted by the circle count r₂(j), so one evaluation
/// costs O(k³) table lookups instead of O(k³) function calls with hashing,
/// and the tables are shared across nodes.
pub struct AxisProfiler {
    k: i64,
    r_cut: i64,
    /// f(q / k²) for q = 0..=k², i.e. the radial profile at all exact
    /// squared radii that stay inside the support; 0 beyond.
    fvals: Vec<f64>,
    /// n^{−5/2} for n = 1..=r_cut².
    kern: Vec<f64>,
    /// r₂(j) as f64 for j = 0..=r_cut².
    r2f: Vec<f64>,
}

impl AxisProfiler {
    /// `f_rad_sq(s)` is f as a function of |x|²; it must vanish for s ≥ 1.
    pub fn new(k: i64, r_cut: i64, f_rad_sq: &dyn Fn(f64) -> f64) -> Self {
        assert!(k >= 2 && r_cut >= 1);
        let ksq = (k * k) as usize;
        let rsq = (r_cut * r_cut) as usize;
        let inv_ksq = 1.0 / (k * k) as f64;
        let mut fvals = vec![0.0; ksq + 1];
        for (q, v) in fvals.iter_mut().enumerate() {
            *v = f_rad_sq(q as f64 * inv_ksq);
        }
        let mut kern = vec![0.0; rsq + 1];
        for (n, v) in kern.iter_mut().enumerate().skip(1) {
            *v = math::inv_pow_half(n as f64, 2.5);
        }
        let r2f = shells::r2_table(rsq)
            .iter()
            .map(|&c| c as f64)
            .collect();
        Self {
            k,
            r_cut,
            fvals,
            kern,
            r2f,
        }
    }

    /// (L̄^{(k)} f)((m/k) e₁), exact over the ball |Z| ≤ r_cut. The zero
    /// offset contributes nothing because kern[0] = 0.
    pub fn reference_at(&self, m: i64) -> f64 {
        assert!(m >= 0);
        let ksq = (self.k * self.k) as usize;
        let rsq = (self.r_cut * self.r_cut) as usize;
        let msq = (m * m) as usize;
        let f0 = if msq <= ksq { self.fvals[msq] } else { 0.0 };
        let mut acc = Compensated::new();
        for z1 in -self.r_cut..=self.r_cut {
            let base = (z1 * z1) as usize;
            let jmax = rsq - base;
            let kern = &self.kern[base..=base + jmax];
            let r2 = &self.r2f[..=jmax];
            let qb = ((m + z1) * (m + z1)) as usize;
            let mut part = 0.0;
            if qb <= ksq {
                // beyond jf the shifted point leaves the support and f = 0
                let jf = (ksq - qb).min(jmax);
                let fv = &self.fvals[qb..=qb + jf];
                for j in 0..=jf {
                    part += r2[j] * kern[j] * fv[j];
                }
            }
            if f0 != 0.0 {
                let mut s_k = 0.0;
                for j in 0..=jmax {
                    s_k += r2[j] * kern[j];
                }
                part -= f0 * s_k;
            }
            acc.add(part);
        }
        scale_factor(3, self.k) * acc.value()
    }
}

// ---------------------------------------------------------------------------
// drift field

/// The local drift V and a certified bound on what dropping |z| > r_v left
/// out of each component.
pub struct DriftField {
    pub v: GridField,
    pub r_v: i64,
    /// ‖V_literal − v‖_∞ per component is at most this.
    pub tail_bound: f64,
}

/// V_i(x) = Σ_{0<|z|≤r_v} z_i w_{x,x+z} |z|^{−(d+2)} for x in `domain`.
///
/// The mean part cancels exactly under z ↔ −z, so the sum reduces to the
/// fluctuation over the environment's random range; for a finite-range
/// environment with range ≤ r_v the result is the r_v → ∞ limit exactly and
/// the tail bound is 0. Otherwise the bound is sup|ξ| Σ_{|z|>r_v} |z|^{−(d+1)}.
pub fn drift_field(field: &ConductanceField, domain: &BoxSpec, r_v: i64) -> DriftField {
    let d = domain.d;
    assert!(r_v >= 1);
    let reach = field.xi_range(r_v);
    let tab = OffsetTable::ball(d, reach);
    let mut v = GridField::zeros(*domain, 1, d);
    for (ix, x) in domain.iter().enumerate() {
        let ex = field.encode(&x);
        let mut acc = [Compensated::new(); MAX_D];
        for t in 0..tab.len() {
            let z = &tab.z[t];
            let ey = ex.wrapping_add(tab.code[t]);
            let (a, b) = if tab.lex_pos[t] { (ex, ey) } else { (ey, ex) };
            let xk = field.xi_codes(a, b) * tab.k[t];
            for i in 0..d {
                acc[i].add(z.c[i] as f64 * xk);
            }
        }
        for i in 0..d {
            v.data[ix * d + i] = acc[i].value();
        }
    }
    DriftField {
        v,
        r_v,
        tail_bound: drift_tail_bound(field, r_v),
    }
}

fn drift_tail_bound(field: &ConductanceField, r_v: i64) -> f64 {
    if field.xi_range(r_v + 1) <= r_v {
        // every random pair is inside the ball already
        return 0.0;
    }
    let d = field.spec().d;
    let (lo, hi) = field.spec().law.bounds();
    let xi_max = (hi - 1.0).max(1.0 - lo);
    // power_tail_bounds needs a comfortably large radius; bridge the gap
    // with the exact shell sum
    let p = (d + 1) as f64;
    let r_safe = r_v.max(3);
    let bridge = if r_safe > r_v {
        shells::ball_sum_bruteforce(d, r_safe, p) - shells::ball_sum_bruteforce(d, r_v, p)
    } else {
        0.0
    };
    let (_, tail) = shells::power_tail_bounds(d, r_safe as f64, p);
    xi_max * (bridge + tail)
}

// ---------------------------------------------------------------------------
// window engine

/// All-pairs generator on a box, organized for solvers: the mean kernel is a
/// circulant on a padded torus (so K⋆u costs one FFT pair) and the
/// fluctuation is a gather over the environment's random offsets. With the
/// optional cap, pairs beyond |x−y| > cap are excluded from both parts.
pub struct WindowOperator<'e, E: Executor> {
    pub field: ConductanceField,
    pub domain: BoxSpec,
    /// Prefactor on ℒ: k²/log k for scaled experiments, 1 unscaled.
    pub scale: f64,
    ex: &'e E,
    pdims: [usize; MAX_D],
    /// k̂ folded to the per-axis-even octant, extents pdims/2 + 1.
    khat: Vec<f64>,
    /// k̂(0): full padded-torus row sum of the kernel grid.
    s0: f64,
    /// Box row sums Σ_{y∈box} K(x−y) under the same cap.
    srow: Vec<f64>,
    xi: OffsetTable,
    /// Flat index deltas of the xi offsets (valid for interior sites).
    xi_delta: Vec<isize>,
    re: Vec<f64>,
    im: Vec<f64>,
    conv: Vec<f64>,
}

const GATHER_CHUNK: usize = 8192;

impl<'e, E: Executor> WindowOperator<'e, E> {
    pub fn new(
        ex: &'e E,
        field: ConductanceField,
        domain: BoxSpec,
        scale: f64,
        cap: Option<i64>,
    ) -> Self {
        let d = domain.d;
        assert_eq!(field.spec().d, d);
        let width = domain.width() as usize;
        let pn = (2 * width - 1).next_power_of_two();
        let mut pdims = [1usize; MAX_D];
        for p in pdims.iter_mut().take(d) {
            *p = pn;
        }
        let pad_len: usize = pdims.iter().product();
        let mut re = vec![0.0; pad_len];
        let mut im = vec![0.0; pad_len];

        // kernel grid: K at every per-axis offset |δ_i| ≤ width−1, wrapped
        let cap_sq = cap.map(|c| c * c);
        let w1 = width as i64 - 1;
        let mut cur = Site::zero();
        fill_kernel(
            d,
            w1,
            0,
            &mut cur,
            &pdims,
            cap_sq,
            &mut re,
        );
        fft::fft_nd(&pdims[..d], &mut re, &mut im, false);
        // fold to the octant; the grid is even per axis so the transform is
        // real up to roundoff
        let mut oext = [1usize; MAX_D];
        for i in 0..d {
            oext[i] = pdims[i] / 2 + 1;
        }
        let olen: usize = oext.iter().product();
        let mut khat = vec![0.0; olen];
        for (oi, v) in khat.iter_mut().enumerate() {
            let mut rem = oi;
            let mut fi = 0usize;
            for i in (0..d).rev() {
                let c = rem % oext[i];
                rem /= oext[i];
                fi += c * pstride(&pdims, d, i);
            }
            *v = re[fi];
        }
        let s0 = khat[0];

        // box row sums via the convolution of the indicator
        re.iter_mut().for_each(|v| *v = 0.0);
        im.iter_mut().for_each(|v| *v = 0.0);
        let n_box = domain.site_count();
        {
            let ones = vec![1.0; n_box];
            embed(&ones, domain.width() as usize, d, &pdims, &mut re);
        }
        fft::fft_nd(&pdims[..d], &mut re, &mut im, false);
        mul_symbol(&pdims, d, &khat, &oext, &mut re, &mut im);
        fft::fft_nd(&pdims[..d], &mut re, &mut im, true);
        let mut srow = vec![0.0; n_box];
        extract(&re, domain.width() as usize, d, &pdims, &mut srow);

        // fluctuation offsets: random range, intersected with the cap and
        // with what fits in the box at all
        let diam = domain.width() - 1;
        let mut reach = field.xi_range(isqrt_ceil(d as i64 * diam * diam));
        if let Some(c) = cap {
            reach = reach.min(c);
        }
        let xi = OffsetTable::ball(d, reach);
        let xi_delta = xi
            .z
            .iter()
            .map(|z| {
                let mut acc = 0isize;
                for i in 0..d {
                    acc += z.c[i] as isize * bstride(domain.width() as usize, d, i) as isize;
                }
                acc
            })
            .collect();

        Self {
            field,
            domain,
            scale,
            ex,
            pdims,
            khat,
            s0,
            srow,
            xi,
            xi_delta,
            re,
            im,
            conv: vec![0.0; n_box],
        }
    }

    pub fn site_count(&self) -> usize {
        self.domain.site_count()
    }

    /// Row sums of the mean kernel inside the box.
    pub fn row_sums(&self) -> &[f64] {
        &self.srow
    }

    fn oext(&self) -> [usize; MAX_D] {
        let mut oext = [1usize; MAX_D];
        for i in 0..self.domain.d {
            oext[i] = self.pdims[i] / 2 + 1;
        }
        oext
    }

    /// self.conv = K⋆u with u zero-extended outside the box, by one
    /// transform pair on the padded torus.
    fn conv_box(&mut self, u: &[f64]) {
        let d = self.domain.d;
        let width = self.domain.width() as usize;
        self.re.iter_mut().for_each(|v| *v = 0.0);
        self.im.iter_mut().for_each(|v| *v = 0.0);
        embed(u, width, d, &self.pdims, &mut self.re);
        fft::fft_nd(&self.pdims[..d], &mut self.re, &mut self.im, false);
        mul_symbol(&self.pdims, d, &self.khat, &self.oext(), &mut self.re, &mut self.im);
        fft::fft_nd(&self.pdims[..d], &mut self.re, &mut self.im, true);
        let pdims = self.pdims;
        extract(&self.re, width, d, &pdims, &mut self.conv);
    }

    /// out = scale · (ℒ u) = scale · (K⋆u − srow∘u + Ξu).
    pub fn apply_l(&mut self, u: &[f64], out: &mut [f64]) {
        let n = self.site_count();
        assert_eq!(u.len(), n);
        assert_eq!(out.len(), n);
        self.conv_box(u);
        self.combine(0.0, u, out, false);
    }

    /// u = M⁻¹ r with the torus symbol m̂(ω) = λ + scale·(s₀ − k̂(ω)). The
    /// preconditioner is the mean operator's exact inverse on the padded
    /// torus, restricted to the box; it is symmetric positive definite on
    /// box vectors. λ = 0 is allowed for mean-zero work: the constant mode
    /// of m̂ is then replaced by 1 and the caller keeps iterates projected.
    pub fn precondition(&mut self, lambda: f64, r: &[f64], u: &mut [f64]) {
        let n = self.site_count();
        assert!(r.len() == n && u.len() == n);
        let d = self.domain.d;
        let width = self.domain.width() as usize;
        self.re.iter_mut().for_each(|v| *v = 0.0);
        self.im.iter_mut().for_each(|v| *v = 0.0);
        embed(r, width, d, &self.pdims, &mut self.re);
        fft::fft_nd(&self.pdims[..d], &mut self.re, &mut self.im, false);
        precond_divide(
            &self.pdims,
            d,
            &self.khat,
            &self.oext(),
            lambda,
            self.scale,
            self.s0,
            &mut self.re,
            &mut self.im,
        );
        fft::fft_nd(&self.pdims[..d], &mut self.re, &mut self.im, true);
        extract(&self.re, width, d, &self.pdims, u);
    }

    /// w = (λ − scale·ℒ) u.
    pub fn apply_resolvent(&mut self, lambda: f64, u: &[f64], w: &mut [f64]) {
        let n = self.site_count();
        assert!(u.len() == n && w.len() == n);
        self.conv_box(u);
        self.combine(lambda, u, w, true);
    }

    /// One iteration's worth of work for the fused-recurrence solver:
    /// u = M⁻¹ r, then w = (λ − scale·ℒ) u.
    pub fn fused(&mut self, lambda: f64, r: &[f64], u: &mut [f64], w: &mut [f64]) {
        let n = self.site_count();
        assert!(r.len() == n && u.len() == n && w.len() == n);
        self.precondition(lambda, r, u);
        self.conv_box(u);
        self.combine(lambda, u, w, true);
    }

    /// w = λu − scale·(conv − srow∘u + Ξu) when `resolvent`, else
    /// w = scale·(conv − srow∘u + Ξu), reading conv from the scratch that
    /// `conv_box` just filled.
    fn combine(&self, lambda: f64, u: &[f64], out: &mut [f64], resolvent: bool) {
        let d = self.domain.d;
        let domain = self.domain;
        let scale = self.scale;
        let field = self.field;
        let xi = &self.xi;
        let deltas = &self.xi_delta;
        let srow = &self.srow;
        let conv = &self.conv;
        let reach = xi.r;
        let has_xi = !xi.is_empty();
        self.ex.fill(out, GATHER_CHUNK, &|_, start, piece| {
            let mut coords = domain.site_at(start);
            for (j, slot) in piece.iter_mut().enumerate() {
                let ix = start + j;
                let mut g = 0.0;
                if has_xi {
                    let interior = (0..d).all(|i| {
                        coords.c[i] - reach >= domain.lo(i) && coords.c[i] + reach <= domain.hi(i)
                    });
                    let ex_code = field.encode(&coords);
                    let u0 = u[ix];
                    for t in 0..xi.len() {
                        if !interior && !domain.contains(&coords.add(&xi.z[t])) {
                            continue;
                        }
                        let ey = ex_code.wrapping_add(xi.code[t]);
                        let (a, b) = if xi.lex_pos[t] { (ex_code, ey) } else { (ey, ex_code) };
                        let iy = (ix as isize + deltas[t]) as usize;
                        g += field.xi_codes(a, b) * xi.k[t] * (u[iy] - u0);
                    }
                }
                let l = scale * (conv[ix] - srow[ix] * u[ix] + g);
                *slot = if resolvent { lambda * u[ix] - l } else { l };
                // advance canonical coordinates
                for i in (0..d).rev() {
                    coords.c[i] += 1;
                    if coords.c[i] <= domain.hi(i) {
                        break;
                    }
                    coords.c[i] = domain.lo(i);
                }
            }
        });
    }

    /// Dirichlet form of the in-box generator: −⟨ℒu, u⟩ under counting
    /// measure, scale included.
    pub fn energy(&mut self, u: &[f64]) -> f64 {
        let mut lu = vec![0.0; u.len()];
        self.apply_l(u, &mut lu);
        -dot(&lu, u)
    }
}

fn isqrt_ceil(v: i64) -> i64 {
    let mut r = (v as u64).isqrt() as i64;
    if r * r < v {
        r += 1;
    }
    r
}

fn pstride(pdims: &[usize; MAX_D], d: usize, axis: usize) -> usize {
    let mut s = 1usize;
    for i in (axis + 1)..d {
        s *= pdims[i];
    }
    s
}

fn bstride(width: usize, d: usize, axis: usize) -> usize {
    let mut s = 1usize;
    for _ in (axis + 1)..d {
        s *= width;
    }
    s
}

fn fill_kernel(
    d: usize,
    w1: i64,
    axis: usize,
    cur: &mut Site,
    pdims: &[usize; MAX_D],
    cap_sq: Option<i64>,
    re: &mut [f64],
) {
    if axis == d {
        let nsq = cur.norm_sq(d);
        if nsq == 0 {
            return;
        }
        if let Some(c) = cap_sq {
            if nsq > c {
                return;
            }
        }
        let mut fi = 0usize;
        for i in 0..d {
            let n = pdims[i] as i64;
            let w = cur.c[i].rem_euclid(n) as usize;
            fi += w * pstride(pdims, d, i);
        }
        re[fi] = kernel_weight(d, nsq);
        return;
    }
    for v in -w1..=w1 {
        cur.c[axis] = v;
        fill_kernel(d, w1, axis + 1, cur, pdims, cap_sq, re);
    }
}

/// Row base in the padded grid for a row index of the box grid.
fn pad_row_base(row: usize, width: usize, d: usize, pdims: &[usize; MAX_D]) -> usize {
    let mut rem = row;
    let mut base = 0usize;
    for i in (0..d - 1).rev() {
        let c = rem % width;
        rem /= width;
        base += c * pstride(pdims, d, i);
    }
    base
}

/// Scatter a box field into the corner of the padded grid.
fn embed(u: &[f64], width: usize, d: usize, pdims: &[usize; MAX_D], re: &mut [f64]) {
    for row in 0..u.len() / width {
        let base = pad_row_base(row, width, d, pdims);
        re[base..base + width].copy_from_slice(&u[row * width..(row + 1) * width]);
    }
}

/// Gather the corner of the padded grid back into a box field.
fn extract(re: &[f64], width: usize, d: usize, pdims: &[usize; MAX_D], out: &mut [f64]) {
    for row in 0..out.len() / width {
        let base = pad_row_base(row, width, d, pdims);
        out[row * width..(row + 1) * width].copy_from_slice(&re[base..base + width]);
    }
}

/// Pointwise multiply the spectrum by the folded real symbol.
fn mul_symbol(
    pdims: &[usize; MAX_D],
    d: usize,
    khat: &[f64],
    oext: &[usize; MAX_D],
    re: &mut [f64],
    im: &mut [f64],
) {
    for_each_folded(pdims, d, oext, |fi, oi| {
        let kh = khat[oi];
        re[fi] *= kh;
        im[fi] *= kh;
    });
}

#[allow(clippy::too_many_arguments)]
fn precond_divide(
    pdims: &[usize; MAX_D],
    d: usize,
    khat: &[f64],
    oext: &[usize; MAX_D],
    lambda: f64,
    scale: f64,
    s0: f64,
    re: &mut [f64],
    im: &mut [f64],
) {
    for_each_folded(pdims, d, oext, |fi, oi| {
        let mut m = lambda + scale * (s0 - khat[oi]);
        if !(m > 0.0) {
            m = 1.0;
        }
        re[fi] /= m;
        im[fi] /= m;
    });
}

/// Visits every padded index with its folded octant index. Iteration is a
/// plain row-major sweep; the fold per element is a few compares.
fn for_each_folded(
    pdims: &[usize; MAX_D],
    d: usize,
    oext: &[usize; MAX_D],
    mut visit: impl FnMut(usize, usize),
) {
    let total: usize = pdims[..d].iter().product();
    let last = pdims[d - 1];
    let olast = oext[d - 1];
    let rows = total / last;
    for row in 0..rows {
        // fold the leading coordinates once per row
        let mut rem = row;
        let mut obase = 0usize;
        for i in (0..d - 1).rev() {
            let c = rem % pdims[i];
            rem /= pdims[i];
            let f = c.min(pdims[i] - c);
            obase += f * ostride(oext, d, i);
        }
        let base = row * last;
        for c in 0..last {
            let f = c.min(last - c);
            visit(base + c, obase * olast + f);
        }
    }
}

fn ostride(oext: &[usize; MAX_D], d: usize, axis: usize) -> usize {
    let mut s = 1usize;
    for i in (axis + 1)..d - 1 {
        s *= oext[i];
    }
    s
}
