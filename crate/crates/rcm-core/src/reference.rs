//! The homogenized limit side: the diffusivity constant a₀ extracted from
//! lattice sums, radial test functions with closed-form calculus, and the
//! continuum resolvent (λ − a₀Δ)^{−1} on exact and spectral paths.
//!
//! a₀ is always estimated from the lattice ladder, never hard-coded; the
//! sphere-area value only ever appears in oracle tests.

use alloc::vec;
use alloc::vec::Vec;

use crate::fft;
use crate::lattice::MAX_D;
use crate::math;
use crate::shells;

/// (2d·log k)^{−1} Σ_{0<|z|≤k} |z|^{−d}, the finite-k diffusivity of the
/// critical kernel.
pub fn a0_partial(d: usize, k: u64) -> f64 {
    assert!(k >= 2);
    let s = shells::radial_sum(d, k, d as f64);
    s.value / (2.0 * d as f64 * math::log(k as f64))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum A0Error {
    LadderTooShort,
    LadderNotIncreasing,
}

impl core::fmt::Display for A0Error {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            A0Error::LadderTooShort => write!(f, "need at least 3 ladder values"),
            A0Error::LadderNotIncreasing => write!(f, "ladder must be strictly increasing"),
        }
    }
}

/// Difference-quotient estimate of a₀ with its ladder diagnostics.
#[derive(Clone, Debug)]
pub struct A0Estimate {
    pub d: usize,
    pub ladder: Vec<u64>,
    /// a₀(k) for each rung.
    pub partials: Vec<f64>,
    /// One difference quotient per adjacent rung pair.
    pub quotients: Vec<f64>,
    pub limit: f64,
    /// Max minus min quotient: the extrapolation error estimate.
    pub spread: f64,
}

impl A0Estimate {
    /// The Cauchy criterion the estimate is required to meet.
    pub fn is_cauchy(&self, rel_tol: f64) -> bool {
        self.quotients.iter().all(|q| *q > 0.0) && self.spread <= rel_tol * self.limit.abs()
    }
}

/// â₀ from the raw lattice sums S(k) = Σ_{0<|z|≤k}|z|^{−d}: each adjacent
/// ladder pair gives (S(k₂) − S(k₁)) / (2d (log k₂ − log k₁)), and the
/// constant shell-sum offset that pollutes a₀(k) itself cancels in the
/// difference. The estimate is the mean over pairs, the spread the error.
pub fn a0_limit(d: usize, ladder: &[u64]) -> Result<A0Estimate, A0Error> {
    if ladder.len() < 3 {
        return Err(A0Error::LadderTooShort);
    }
    if ladder.windows(2).any(|w| w[1] <= w[0]) {
        return Err(A0Error::LadderNotIncreasing);
    }
    let sums: Vec<f64> = ladder
        .iter()
        .map(|&k| shells::radial_sum(d, k, d as f64).value)
        .collect();
    let partials: Vec<f64> = ladder
        .iter()
        .zip(&sums)
        .map(|(&k, &s)| s / (2.0 * d as f64 * math::log(k as f64)))
        .collect();
    let mut quotients = Vec::with_capacity(ladder.len() - 1);
    for i in 0..ladder.len() - 1 {
        let dl = math::log(ladder[i + 1] as f64) - math::log(ladder[i] as f64);
        quotients.push((sums[i + 1] - sums[i]) / (2.0 * d as f64 * dl));
    }
    let limit = quotients.iter().sum::<f64>() / quotients.len() as f64;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &q in &quotients {
        lo = lo.min(q);
        hi = hi.max(q);
    }
    Ok(A0Estimate {
        d,
        ladder: ladder.to_vec(),
        partials,
        quotients,
        limit,
        spread: hi - lo,
    })
}

// ---------------------------------------------------------------------------
// test functions

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TestFnError {
    /// p < 4 breaks the third-order Taylor arguments downstream.
    InsufficientSmoothness,
    BadSupportRadius,
    BadLambda,
}

impl core::fmt::Display for TestFnError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            TestFnError::InsufficientSmoothness => write!(f, "profile order p must be at least 4"),
            TestFnError::BadSupportRadius => write!(f, "support radius must lie in (0, 1]"),
            TestFnError::BadLambda => write!(f, "lambda must be positive"),
        }
    }
}

/// Radial bump g(x) = (1 − |x/r₀|²)^p on |x| ≤ r₀ together with its exact
/// calculus and the forcing f = λg − a₀Δg, whose continuum resolvent is g
/// identically. All derivatives are closed-form polynomials.
#[derive(Clone, Copy, Debug)]
pub struct TestFunction {
    pub lambda: f64,
    pub r0: f64,
    pub p: u32,
    pub a0: f64,
    pub d: usize,
}

pub fn build_test_function(
    d: usize,
    lambda: f64,
    r0: f64,
    p: u32,
    a0: f64,
) -> Result<TestFunction, TestFnError> {
    assert!((1..=MAX_D).contains(&d));
    assert!(a0 > 0.0);
    if p < 4 {
        return Err(TestFnError::InsufficientSmoothness);
    }
    if !(r0 > 0.0 && r0 <= 1.0) {
        return Err(TestFnError::BadSupportRadius);
    }
    if lambda <= 0.0 {
        return Err(TestFnError::BadLambda);
    }
    Ok(TestFunction {
        lambda,
        r0,
        p,
        a0,
        d,
    })
}

impl TestFunction {
    #[inline]
    fn norm_sq(&self, pos: [f64; MAX_D]) -> f64 {
        let mut s = 0.0;
        for x in pos.iter().take(self.d) {
            s += x * x;
        }
        s
    }

    /// t = 1 − |x|²/r₀², clamped at the support edge.
    #[inline]
    fn t_of(&self, u: f64) -> f64 {
        1.0 - u / (self.r0 * self.r0)
    }

    /// g as a function of |x|².
    pub fn g_rad_sq(&self, u: f64) -> f64 {
        let t = self.t_of(u);
        if t <= 0.0 {
            0.0
        } else {
            math::powi(t, self.p as i32)
        }
    }

    pub fn g_at(&self, pos: [f64; MAX_D]) -> f64 {
        self.g_rad_sq(self.norm_sq(pos))
    }

    pub fn grad_g(&self, pos: [f64; MAX_D]) -> [f64; MAX_D] {
        let u = self.norm_sq(pos);
        let t = self.t_of(u);
        let mut out = [0.0; MAX_D];
        if t <= 0.0 {
            return out;
        }
        let r0sq = self.r0 * self.r0;
        let c = -2.0 * self.p as f64 / r0sq * math::powi(t, self.p as i32 - 1);
        for i in 0..self.d {
            out[i] = c * pos[i];
        }
        out
    }

    /// Δg as a function of |x|².
    pub fn laplacian_g_rad_sq(&self, u: f64) -> f64 {
        let t = self.t_of(u);
        if t <= 0.0 {
            return 0.0;
        }
        let p = self.p as f64;
        let r0sq = self.r0 * self.r0;
        let lead = -2.0 * p * self.d as f64 / r0sq * math::powi(t, self.p as i32 - 1);
        let curv = 4.0 * p * (p - 1.0) / (r0sq * r0sq) * u * math::powi(t, self.p as i32 - 2);
        lead + curv
    }

    pub fn laplacian_g(&self, pos: [f64; MAX_D]) -> f64 {
        self.laplacian_g_rad_sq(self.norm_sq(pos))
    }

    /// f = λg − a₀Δg as a function of |x|²; identically 0 beyond r₀².
    pub fn f_rad_sq(&self, u: f64) -> f64 {
        if self.t_of(u) <= 0.0 {
            0.0
        } else {
            self.lambda * self.g_rad_sq(u) - self.a0 * self.laplacian_g_rad_sq(u)
        }
    }

    pub fn f_at(&self, pos: [f64; MAX_D]) -> f64 {
        self.f_rad_sq(self.norm_sq(pos))
    }

    /// d(Δg)/du with u = |x|², for the gradient of f.
    fn dlap_du(&self, u: f64) -> f64 {
        let t = self.t_of(u);
        if t <= 0.0 {
            return 0.0;
        }
        let p = self.p as f64;
        let r0sq = self.r0 * self.r0;
        let r04 = r0sq * r0sq;
        let a = 2.0 * p * (p - 1.0) * self.d as f64 / r04 * math::powi(t, self.p as i32 - 2);
        let b = 4.0 * p * (p - 1.0) / r04 * math::powi(t, self.p as i32 - 2);
        let c = -4.0 * p * (p - 1.0) * (p - 2.0) / (r04 * r0sq) * u * math::powi(t, self.p as i32 - 3);
        a + b + c
    }

    pub fn grad_f(&self, pos: [f64; MAX_D]) -> [f64; MAX_D] {
        let u = self.norm_sq(pos);
        let mut out = self.grad_g(pos);
        if self.t_of(u) <= 0.0 {
            return [0.0; MAX_D];
        }
        let dl = self.dlap_du(u);
        for i in 0..self.d {
            out[i] = self.lambda * out[i] - self.a0 * 2.0 * pos[i] * dl;
        }
        out
    }

    /// The continuum resolvent of f is g identically; this is the exact
    /// path of the resolvent computation.
    pub fn resolvent_at(&self, pos: [f64; MAX_D]) -> f64 {
        self.g_at(pos)
    }

    pub fn grad_resolvent(&self, pos: [f64; MAX_D]) -> [f64; MAX_D] {
        self.grad_g(pos)
    }

    /// Uniform bound on all third partial derivatives of g over its support:
    /// |∂³g| ≤ 12 r₀|G''| + 8 r₀³|G'''| with G the profile in u = |x|².
    pub fn third_derivative_bound(&self) -> f64 {
        let p = self.p as f64;
        let r0 = self.r0;
        let g2 = p * (p - 1.0) / math::powi(r0, 4);
        let g3 = p * (p - 1.0) * (p - 2.0) / math::powi(r0, 6);
        12.0 * r0 * g2 + 8.0 * math::powi(r0, 3) * g3
    }

    /// ∫|f|² over ℝ^d in closed form: f² expands into terms u^b t^a whose
    /// radial integrals are Beta factors.
    pub fn f_l2_sq(&self) -> f64 {
        let p = self.p;
        let r0sq = self.r0 * self.r0;
        let c1 = self.lambda;
        let c2 = 2.0 * self.p as f64 * self.d as f64 * self.a0 / r0sq;
        let c3 = -4.0 * self.p as f64 * (self.p as f64 - 1.0) * self.a0 / (r0sq * r0sq);
        // (coefficient, t exponent, u exponent) of f²
        let terms = [
            (c1 * c1, 2 * p, 0u32),
            (2.0 * c1 * c2, 2 * p - 1, 0),
            (2.0 * c1 * c3, 2 * p - 2, 1),
            (c2 * c2, 2 * p - 2, 0),
            (2.0 * c2 * c3, 2 * p - 3, 1),
            (c3 * c3, 2 * p - 4, 2),
        ];
        let mut total = 0.0;
        for &(c, a, b) in &terms {
            total += c * self.radial_moment(a, b);
        }
        total * sphere_area(self.d)
    }

    /// ∫|g|², for the contraction check λ²‖g‖² ≤ ‖f‖².
    pub fn g_l2_sq(&self) -> f64 {
        self.radial_moment(2 * self.p, 0) * sphere_area(self.d)
    }

    /// ∫|∇g|² = 4(p/r₀²)² · moment(2p−2, 1) · |S^{d−1}|.
    pub fn grad_g_l2_sq(&self) -> f64 {
        let c = self.p as f64 / (self.r0 * self.r0);
        4.0 * c * c * self.radial_moment(2 * self.p - 2, 1) * sphere_area(self.d)
    }

    /// ∫₀^{r₀} t^a u^b r^{d−1} dr = r₀^{d+2b}/2 · B((d+2b)/2, a+1),
    /// with the Beta factor as the product a!/(x(x+1)···(x+a)),
    /// where t = 1 − r²/r₀² and u = r².
    pub fn radial_moment(&self, a: u32, b: u32) -> f64 {
        let x = (self.d as f64 + 2.0 * b as f64) / 2.0;
        let mut num = 1.0;
        let mut den = x;
        for j in 1..=a {
            num *= j as f64;
            den *= x + j as f64;
        }
        math::pow(self.r0, (self.d + 2 * b as usize) as f64) / 2.0 * num / den
    }
}

/// Surface area of the unit sphere in ℝ^d.
pub fn sphere_area(d: usize) -> f64 {
    match d {
        1 => 2.0,
        2 => 2.0 * core::f64::consts::PI,
        3 => 4.0 * core::f64::consts::PI,
        4 => 2.0 * core::f64::consts::PI * core::f64::consts::PI,
        _ => unreachable!("d ≤ 4"),
    }
}

// ---------------------------------------------------------------------------
// spectral resolvent on a periodic torus

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SpectralError {
    SupportTooWide,
}

impl core::fmt::Display for SpectralError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            SpectralError::SupportTooWide => {
                write!(f, "support must stay clear of the torus boundary")
            }
        }
    }
}

/// Samples of a function on the torus [−period/2, period/2)^d, n per axis,
/// row-major.
pub fn sample_torus(
    d: usize,
    n: usize,
    period: f64,
    f: &dyn Fn([f64; MAX_D]) -> f64,
) -> Vec<f64> {
    let total = n.pow(d as u32);
    let h = period / n as f64;
    let mut out = vec![0.0; total];
    for (idx, v) in out.iter_mut().enumerate() {
        let mut rem = idx;
        let mut pos = [0.0; MAX_D];
        for i in (0..d).rev() {
            let c = rem % n;
            rem /= n;
            pos[i] = c as f64 * h - period / 2.0;
        }
        *v = f(pos);
    }
    out
}

/// Solve (λ − a₀Δ)ū = f on the periodic torus by Fourier division with the
/// continuum symbol λ + a₀|ξ|². When f and its free-space resolvent are both
/// supported inside the torus the periodization is exact and the only error
/// is spectral truncation at the grid scale. `support_radius` is the
/// caller's bound on the support of both.
pub fn spectral_resolvent(
    d: usize,
    n: usize,
    period: f64,
    lambda: f64,
    a0: f64,
    support_radius: f64,
    samples: &[f64],
) -> Result<Vec<f64>, SpectralError> {
    assert!(n.is_power_of_two());
    assert_eq!(samples.len(), n.pow(d as u32));
    assert!(lambda > 0.0 && a0 > 0.0);
    if !(2.0 * support_radius < period - 1.0) {
        return Err(SpectralError::SupportTooWide);
    }
    let mut re = samples.to_vec();
    let mut im = vec![0.0; re.len()];
    let dims = vec![n; d];
    fft::fft_nd(&dims, &mut re, &mut im, false);
    let base = 2.0 * core::f64::consts::PI / period;
    for idx in 0..re.len() {
        let mut rem = idx;
        let mut xi_sq = 0.0;
        for _ in 0..d {
            let c = rem % n;
            rem /= n;
            let m = if c <= n / 2 { c as f64 } else { c as f64 - n as f64 };
            let xi = base * m;
            xi_sq += xi * xi;
        }
        let sym = lambda + a0 * xi_sq;
        re[idx] /= sym;
        im[idx] /= sym;
    }
    fft::fft_nd(&dims, &mut re, &mut im, true);
    Ok(re)
}
